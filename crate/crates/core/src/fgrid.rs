//! FGRID v1: a plain-text format for square gridded scalar fields.
//!
//! ```text
//! FGRID 1
//! s <side_m> res <n>
//! <n values, row 0 (northmost)>
//! ...
//! <n values, row n-1 (southmost)>
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::GridField;

pub fn to_string(field: &GridField) -> String {
    let res = field.res();
    let mut out = String::with_capacity(res * res * 12 + 32);
    out.push_str("FGRID 1\n");
    let _ = writeln!(out, "s {} res {}", field.side(), res);
    for row in field.values().chunks_exact(res) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parses FGRID text. `origin` names the source in error messages.
pub fn parse(text: &str, origin: &str) -> Result<GridField> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (ln, magic) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    if magic.trim() != "FGRID 1" {
        return Err(err(ln, format!("expected header `FGRID 1`, found `{}`", magic.trim())));
    }

    let (ln, dims) = lines.next().ok_or_else(|| err(2, "missing dimension line".into()))?;
    let tok: Vec<&str> = dims.split_whitespace().collect();
    if tok.len() != 4 || tok[0] != "s" || tok[2] != "res" {
        return Err(err(ln, format!("expected `s <side> res <n>`, found `{}`", dims.trim())));
    }
    let side: f64 = tok[1]
        .parse()
        .map_err(|_| err(ln, format!("bad side length `{}`", tok[1])))?;
    let res: usize = tok[3]
        .parse()
        .map_err(|_| err(ln, format!("bad resolution `{}`", tok[3])))?;
    if !(side.is_finite() && side > 0.0) || res < 2 {
        return Err(err(ln, format!("need side > 0 and res >= 2, got s={side} res={res}")));
    }

    let mut values = Vec::with_capacity(res * res);
    let mut rows = 0;
    let mut last_line = ln;
    for (ln, line) in lines {
        last_line = ln;
        if line.trim().is_empty() {
            continue;
        }
        if rows == res {
            return Err(err(ln, format!("more than {res} data rows")));
        }
        let before = values.len();
        for t in line.split_whitespace() {
            let v: f64 = t.parse().map_err(|_| err(ln, format!("bad value `{t}`")))?;
            if !v.is_finite() {
                return Err(err(ln, format!("non-finite value `{t}`")));
            }
            values.push(v);
        }
        let got = values.len() - before;
        if got != res {
            return Err(err(ln, format!("expected {res} values in row, found {got}")));
        }
        rows += 1;
    }
    if rows != res {
        return Err(err(last_line, format!("expected {res} data rows, found {rows}")));
    }
    GridField::new(side, res, values)
}

pub fn read(path: &Path) -> Result<GridField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string())
}

pub fn write(path: &Path, field: &GridField) -> Result<()> {
    std::fs::write(path, to_string(field)).map_err(|e| Error::io(path, e))
}
