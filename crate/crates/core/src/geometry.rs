//! Planar geometry: points, the square exploration region and gridded
//! scalar fields over it.
//!
//! Coordinates are meters east (`x`) and north (`y`) of the region center.
//! Grids are stored row-major, north row first, matching the FGRID layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist_sq(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Point2) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Flattens waypoints into `[x1, y1, x2, y2, ...]`.
pub fn flatten(points: &[Point2]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

/// Inverse of [`flatten`].
pub fn unflatten(z: &[f64]) -> Vec<Point2> {
    debug_assert!(z.len() % 2 == 0);
    z.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect()
}

/// Relative slack on the region boundary so that nodes computed as
/// `-s/2 + j*h` are never rejected by rounding.
const BOUNDARY_SLACK: f64 = 1e-9;

/// Which of the two grid resolutions of a [`GridDomain`] to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// Coarse grid the planner's cost is summed over.
    Opt,
    /// Fine grid used for scenario fields and reported metrics.
    Eval,
}

/// The square region `[-s/2, s/2]^2` at an optimization and an evaluation
/// resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub side: f64,
    pub res_opt: usize,
    pub res_eval: usize,
}

impl GridDomain {
    pub fn new(side: f64, res_opt: usize, res_eval: usize) -> Result<Self> {
        let g = GridDomain {
            side,
            res_opt,
            res_eval,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.side.is_finite() && self.side > 0.0) {
            return Err(Error::invalid(format!("grid side must be > 0, got {}", self.side)));
        }
        if self.res_opt < 2 {
            return Err(Error::invalid(format!("res_opt must be >= 2, got {}", self.res_opt)));
        }
        if self.res_eval < self.res_opt {
            return Err(Error::invalid(format!(
                "res_eval ({}) must be >= res_opt ({})",
                self.res_eval, self.res_opt
            )));
        }
        Ok(())
    }

    /// Logs a warning when the optimization grid is too coarse relative to
    /// the kernel length scale. Returns whether the warning fired.
    pub fn check_spacing(&self, length_scale: f64) -> bool {
        let h = self.spacing(GridKind::Opt);
        let coarse = h > length_scale / 3.0;
        if coarse {
            log::warn!(
                "optimization grid spacing {h:.1} m exceeds a third of the length scale ({length_scale} m); the cost may alias"
            );
        }
        coarse
    }

    pub fn half(&self) -> f64 {
        0.5 * self.side
    }

    pub fn res(&self, which: GridKind) -> usize {
        match which {
            GridKind::Opt => self.res_opt,
            GridKind::Eval => self.res_eval,
        }
    }

    pub fn spacing(&self, which: GridKind) -> f64 {
        self.side / (self.res(which) - 1) as f64
    }

    pub fn contains(&self, p: Point2) -> bool {
        let lim = self.half() * (1.0 + BOUNDARY_SLACK);
        p.x.abs() <= lim && p.y.abs() <= lim
    }

    pub fn check(&self, p: Point2) -> Result<()> {
        if p.is_finite() && self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                x: p.x,
                y: p.y,
                half: self.half(),
            })
        }
    }

    /// Clamps a point onto the region.
    pub fn project(&self, p: Point2) -> Point2 {
        let h = self.half();
        Point2::new(p.x.clamp(-h, h), p.y.clamp(-h, h))
    }

    /// Grid nodes in storage order (north row first, west to east).
    pub fn nodes(&self, which: GridKind) -> Vec<Point2> {
        node_positions(self.side, self.res(which))
    }
}

pub(crate) fn node_positions(side: f64, res: usize) -> Vec<Point2> {
    let h = side / (res - 1) as f64;
    let half = 0.5 * side;
    let mut out = Vec::with_capacity(res * res);
    for i in 0..res {
        for j in 0..res {
            out.push(Point2::new(-half + j as f64 * h, half - i as f64 * h));
        }
    }
    out
}

/// A square scalar field sampled on a `res x res` grid over `[-s/2, s/2]^2`
/// and interpolated bilinearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    side: f64,
    res: usize,
    values: Vec<f64>,
}

/// Bilinear stencil: corner indices, weights and the weight derivatives.
struct Stencil {
    idx: [usize; 4],
    w: [f64; 4],
    dwdx: [f64; 4],
    dwdy: [f64; 4],
}

impl GridField {
    pub fn new(side: f64, res: usize, values: Vec<f64>) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::invalid(format!("field side must be > 0, got {side}")));
        }
        if res < 2 {
            return Err(Error::invalid(format!("field resolution must be >= 2, got {res}")));
        }
        if values.len() != res * res {
            return Err(Error::invalid(format!(
                "field of resolution {res} needs {} values, got {}",
                res * res,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("field value at index {i} is not finite")));
        }
        Ok(GridField { side, res, values })
    }

    pub fn constant(side: f64, res: usize, c: f64) -> Result<Self> {
        Self::new(side, res, vec![c; res * res])
    }

    /// Builds a field by evaluating `f` at every node.
    pub fn from_fn(side: f64, res: usize, f: impl FnMut(Point2) -> f64) -> Result<Self> {
        let values = node_positions(side, res).into_iter().map(f).collect();
        Self::new(side, res, values)
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spacing(&self) -> f64 {
        self.side / (self.res - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.res + j]
    }

    pub fn nodes(&self) -> Vec<Point2> {
        node_positions(self.side, self.res)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let lim = 0.5 * self.side * (1.0 + BOUNDARY_SLACK);
        p.is_finite() && p.x.abs() <= lim && p.y.abs() <= lim
    }

    fn stencil(&self, p: Point2) -> Result<Stencil> {
        if !self.contains(p) {
            return Err(Error::OutOfDomain {
                x: p.x,
                y: p.y,
                half: 0.5 * self.side,
            });
        }
        let h = self.spacing();
        let half = 0.5 * self.side;
        let last = (self.res - 2) as f64;
        let fx = ((p.x + half) / h).clamp(0.0, self.res as f64 - 1.0);
        let fy = ((half - p.y) / h).clamp(0.0, self.res as f64 - 1.0);
        let j0 = fx.floor().min(last);
        let i0 = fy.floor().min(last);
        let tx = fx - j0;
        let ty = fy - i0;
        let (i0, j0) = (i0 as usize, j0 as usize);
        let r = self.res;
        let idx = [i0 * r + j0, i0 * r + j0 + 1, (i0 + 1) * r + j0, (i0 + 1) * r + j0 + 1];
        let w = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty];
        // d/dx = (1/h) d/dtx; rows run southward so d/dy = -(1/h) d/dty.
        let dwdx = [-(1.0 - ty) / h, (1.0 - ty) / h, -ty / h, ty / h];
        let dwdy = [(1.0 - tx) / h, tx / h, -(1.0 - tx) / h, -tx / h];
        Ok(Stencil { idx, w, dwdx, dwdy })
    }

    /// Bilinear interpolation; exact at grid nodes.
    pub fn value_at(&self, p: Point2) -> Result<f64> {
        let s = self.stencil(p)?;
        Ok((0..4).map(|k| s.w[k] * self.values[s.idx[k]]).sum())
    }

    /// Value and spatial gradient of the bilinear interpolant (the gradient
    /// is one-sided on cell edges).
    pub fn value_grad_at(&self, p: Point2) -> Result<(f64, [f64; 2])> {
        let s = self.stencil(p)?;
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for k in 0..4 {
            let f = self.values[s.idx[k]];
            v += s.w[k] * f;
            g[0] += s.dwdx[k] * f;
            g[1] += s.dwdy[k] * f;
        }
        Ok((v, g))
    }

    /// Distance (m) from `p` to the nearest cell edge, where the bilinear
    /// interpolant is only C0.
    pub fn distance_to_cell_edge(&self, p: Point2) -> f64 {
        let h = self.spacing();
        let half = 0.5 * self.side;
        let fx = (p.x + half) / h;
        let fy = (half - p.y) / h;
        let dx = (fx - fx.round()).abs() * h;
        let dy = (fy - fy.round()).abs() * h;
        dx.min(dy)
    }

    /// Resamples onto another resolution by bilinear interpolation.
    pub fn resample(&self, res: usize) -> Result<GridField> {
        if res == self.res {
            return Ok(self.clone());
        }
        let values = node_positions(self.side, res)
            .into_iter()
            .map(|p| self.value_at(p))
            .collect::<Result<Vec<_>>>()?;
        GridField::new(self.side, res, values)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
