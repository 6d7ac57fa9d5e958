//! Heatmaps as binary PPM (P6) images.
//!
//! One pixel per grid node, north up, with a 16-pixel color-bar strip under
//! the map. The color scale range goes to a sidecar text file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridField, Point2};

pub const LEGEND_HEIGHT: usize = 16;

/// Colormap stops (dark blue, teal, yellow), interpolated linearly.
const STOPS: [[f64; 3]; 3] = [[20.0, 30.0, 110.0], [30.0, 160.0, 150.0], [250.0, 230.0, 40.0]];
const PATH_COLOR: [u8; 3] = [0, 0, 0];
const MARKER_COLOR: [u8; 3] = [255, 255, 255];
const START_COLOR: [u8; 3] = [230, 40, 40];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Style {
    Mean,
    Var,
    P,
    ClassError,
    PathOverlay,
}

impl std::str::FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Style::Mean),
            "var" => Ok(Style::Var),
            "p" => Ok(Style::P),
            "class-error" => Ok(Style::ClassError),
            "path-overlay" => Ok(Style::PathOverlay),
            other => Err(Error::invalid(format!(
                "unknown style `{other}` (expected mean, var, p, class-error or path-overlay)"
            ))),
        }
    }
}

impl std::fmt::Display for Style {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Style::Mean => "mean",
            Style::Var => "var",
            Style::P => "p",
            Style::ClassError => "class-error",
            Style::PathOverlay => "path-overlay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0, 0, 0]; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, c: [u8; 3]) {
        if row < self.height && col < self.width {
            self.pixels[row * self.width + col] = c;
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Parse {
            path: "ppm".into(),
            line: 0,
            msg: m.to_string(),
        };
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?);
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad("expected P6 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
        let data = &bytes[pos + 1..];
        if data.len() != width * height * 3 {
            return Err(bad("pixel data length mismatch"));
        }
        Ok(Image {
            width,
            height,
            pixels: data.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }
}

/// Color of `t` in `[0, 1]`.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    }
    c
}

/// Heatmap of `field` over `[lo, hi]` (the field's own range by default)
/// with the color-bar strip.
pub fn heatmap(field: &GridField, range: Option<(f64, f64)>) -> (Image, (f64, f64)) {
    let (lo, hi) = range.unwrap_or_else(|| field.min_max());
    let res = field.res();
    let mut img = Image::new(res, res + LEGEND_HEIGHT);
    let span = hi - lo;
    let scale = |v: f64| if span > 0.0 { (v - lo) / span } else { 0.0 };
    for (k, &v) in field.values().iter().enumerate() {
        img.pixels[k] = colormap(scale(v));
    }
    for col in 0..res {
        let t = if res > 1 { col as f64 / (res - 1) as f64 } else { 0.0 };
        let c = colormap(t);
        for row in res..res + LEGEND_HEIGHT {
            img.set(row, col, c);
        }
    }
    (img, (lo, hi))
}

fn to_pixel(p: Point2, side: f64, res: usize) -> (i64, i64) {
    let h = side / (res - 1) as f64;
    let half = side / 2.0;
    (((half - p.y) / h).round() as i64, ((p.x + half) / h).round() as i64)
}

fn plot(img: &mut Image, res: usize, row: i64, col: i64, c: [u8; 3]) {
    if row >= 0 && col >= 0 && (row as usize) < res && (col as usize) < res {
        img.set(row as usize, col as usize, c);
    }
}

/// Draws `path` as a 1-px polyline with 3x3 markers at each vertex; the
/// first vertex is marked in a distinct color.
pub fn overlay_path(img: &mut Image, path: &[Point2], side: f64, res: usize) {
    let px: Vec<(i64, i64)> = path.iter().map(|&p| to_pixel(p, side, res)).collect();
    for w in px.windows(2) {
        let ((mut r0, mut c0), (r1, c1)) = (w[0], w[1]);
        // Bresenham
        let (dr, dc) = ((r1 - r0).abs(), -(c1 - c0).abs());
        let (sr, sc) = (if r0 < r1 { 1 } else { -1 }, if c0 < c1 { 1 } else { -1 });
        let mut err = dr + dc;
        loop {
            plot(img, res, r0, c0, PATH_COLOR);
            if r0 == r1 && c0 == c1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dc {
                err += dc;
                r0 += sr;
            }
            if e2 <= dr {
                err += dr;
                c0 += sc;
            }
        }
    }
    for (k, &(r, c)) in px.iter().enumerate() {
        let color = if k == 0 { START_COLOR } else { MARKER_COLOR };
        for dr in -1..=1 {
            for dc in -1..=1 {
                if dr == 0 && dc == 0 {
                    plot(img, res, r, c, PATH_COLOR);
                } else {
                    plot(img, res, r + dr, c + dc, color);
                }
            }
        }
    }
}

/// Sidecar path for an image: `map.ppm` -> `map.range.txt`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("range.txt")
}

/// Writes the image and its color-range sidecar.
pub fn write_with_sidecar(img: &Image, range: (f64, f64), style: Style, path: &Path) -> Result<PathBuf> {
    img.write_ppm(path)?;
    let side = sidecar_path(path);
    let text = format!("style {style}\nmin {}\nmax {}\nlegend_px {LEGEND_HEIGHT}\n", range.0, range.1);
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(side)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_is_uniform() {
        let f = GridField::constant(100.0, 8, 3.0).unwrap();
        let (img, range) = heatmap(&f, None);
        assert_eq!((img.width, img.height), (8, 8 + LEGEND_HEIGHT));
        assert_eq!(range, (3.0, 3.0));
        let c = img.get(0, 0);
        assert!((0..64).all(|k| img.pixels[k] == c));
    }

    #[test]
    fn ppm_round_trip() {
        let f = GridField::from_fn(100.0, 5, |p| p.x + 2.0 * p.y).unwrap();
        let (img, _) = heatmap(&f, None);
        assert_eq!(Image::from_ppm(&img.to_ppm()).unwrap(), img);
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [20, 30, 110]);
        assert_eq!(colormap(1.0), [250, 230, 40]);
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }

    #[test]
    fn overlay_marks_vertices() {
        let f = GridField::constant(100.0, 11, 0.0).unwrap();
        let (mut img, _) = heatmap(&f, None);
        overlay_path(&mut img, &[Point2::new(0.0, 0.0), Point2::new(40.0, 0.0)], 100.0, 11);
        assert_eq!(img.get(5, 5), PATH_COLOR);
        assert_eq!(img.get(5, 7), PATH_COLOR);
        assert_eq!(img.get(4, 4), START_COLOR);
        assert_eq!(img.get(4, 8), MARKER_COLOR);
        assert_eq!(img.get(0, 0), colormap(0.0));
    }

    #[test]
    fn unknown_style_is_rejected() {
        assert!("heat".parse::<Style>().is_err());
        assert_eq!("class-error".parse::<Style>().unwrap(), Style::ClassError);
    }
}
