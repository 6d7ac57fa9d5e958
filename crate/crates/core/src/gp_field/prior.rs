//! Building prior mean fields: compressing raw samples onto the grid and
//! drawing correlated GP noise for synthetic priors.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::cholesky::PackedCholesky;
use super::{KernelParams, Measurement, PriorField, PIVOT_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::{GridDomain, GridKind, Point2};

/// Jitter (relative to the signal variance) used on the retry when the
/// grid covariance is numerically singular.
const SAMPLING_JITTER: f64 = 1e-8;

/// Assigns to each evaluation-grid node the value of its nearest raw sample
/// (ties go to the lowest sample index).
///
/// Nodes whose nearest sample is farther than one cell diagonal are still
/// filled, with a warning.
pub fn compress_prior(raw: &[Measurement], grid: &GridDomain) -> Result<PriorField> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("compress_prior needs at least one sample"));
    }
    grid.validate()?;
    let res = grid.res_eval;
    let h = grid.spacing(GridKind::Eval);
    let half = grid.half();

    // Bucket samples by evaluation cell (clamped at the border) so each
    // node only scans nearby samples.
    let cell_of = |p: Point2| -> (usize, usize) {
        let cx = ((p.x + half) / h).floor().clamp(0.0, (res - 1) as f64) as usize;
        let cy = ((half - p.y) / h).floor().clamp(0.0, (res - 1) as f64) as usize;
        (cy, cx)
    };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); res * res];
    for (k, m) in raw.iter().enumerate() {
        if !m.loc.is_finite() || !m.value.is_finite() {
            return Err(Error::invalid(format!("raw sample {k} is not finite")));
        }
        let (cy, cx) = cell_of(m.loc);
        buckets[cy * res + cx].push(k);
    }

    let diag = h * std::f64::consts::SQRT_2;
    let mut holes = 0usize;
    let mut values = Vec::with_capacity(res * res);
    for node in grid.nodes(GridKind::Eval) {
        let (cy, cx) = cell_of(node);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..res {
            let (lo_y, hi_y) = (cy.saturating_sub(ring), (cy + ring).min(res - 1));
            let (lo_x, hi_x) = (cx.saturating_sub(ring), (cx + ring).min(res - 1));
            for by in lo_y..=hi_y {
                for bx in lo_x..=hi_x {
                    let on_ring = by.abs_diff(cy) == ring || bx.abs_diff(cx) == ring;
                    if !on_ring {
                        continue;
                    }
                    for &k in &buckets[by * res + bx] {
                        let d = raw[k].loc.dist_sq(node);
                        let better = match best {
                            None => true,
                            Some((bd, bk)) => d < bd || (d == bd && k < bk),
                        };
                        if better {
                            best = Some((d, k));
                        }
                    }
                }
            }
            // Every sample in a further ring is at least `ring * h` away.
            if let Some((bd, _)) = best {
                let reach = ring as f64 * h;
                if bd.sqrt() < reach {
                    break;
                }
            }
        }
        let (d2, k) = best.expect("raw is non-empty");
        if d2.sqrt() > diag {
            holes += 1;
        }
        values.push(raw[k].value);
    }
    if holes > 0 {
        log::warn!("{holes} grid nodes had no sample within one cell diagonal; filled from the nearest sample");
    }
    PriorField::new(*grid, values)
}

/// One zero-mean draw of a GP with the given kernel on the evaluation grid.
pub fn sample_correlated_field(kernel: &KernelParams, grid: &GridDomain, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_correlated_field_with(kernel, grid, &mut rng)
}

/// As [`sample_correlated_field`], drawing from `rng`.
///
/// The squared exponential kernel on a tensor grid factorizes as
/// `K = sigma2 * (K1 kron K1)` with `K1` the unit-variance 1-D kernel matrix
/// along one axis, so `F = sigma * L1 Z L1^T` with `Z` white noise has
/// exactly covariance `K`. This needs only a `res x res` factorization.
pub fn sample_correlated_field_with<R: Rng + ?Sized>(
    kernel: &KernelParams,
    grid: &GridDomain,
    rng: &mut R,
) -> Result<Vec<f64>> {
    kernel.validate()?;
    grid.validate()?;
    let res = grid.res_eval;
    let h = grid.spacing(GridKind::Eval);
    let axis_kernel = |i: usize, j: usize| {
        let d = (i as f64 - j as f64) * h;
        (-0.5 * d * d / (kernel.ell * kernel.ell)).exp()
    };
    let l1 = match PackedCholesky::factor(res, axis_kernel, PIVOT_FLOOR) {
        Ok(l) => l,
        Err(_) => PackedCholesky::factor(
            res,
            |i, j| axis_kernel(i, j) + if i == j { SAMPLING_JITTER } else { 0.0 },
            PIVOT_FLOOR,
        )
        .map_err(|f| Error::Singular {
            index: f.row,
            nearest: None,
            pivot_sq: f.pivot_sq,
        })?,
    };

    let z: Vec<f64> = (0..res * res).map(|_| rng.sample(StandardNormal)).collect();
    // T = Z L1^T : T[i][j] = sum_{b <= j} Z[i][b] L1[j][b]
    let mut t = vec![0.0; res * res];
    for i in 0..res {
        let zi = &z[i * res..(i + 1) * res];
        for j in 0..res {
            let lj = l1.row(j);
            t[i * res + j] = lj.iter().zip(zi).map(|(a, b)| a * b).sum();
        }
    }
    // F = sigma L1 T : F[i][j] = sigma sum_{a <= i} L1[i][a] T[a][j]
    let sigma = kernel.sigma2.sqrt();
    let mut f = vec![0.0; res * res];
    for i in 0..res {
        let li = l1.row(i);
        let fi = &mut f[i * res..(i + 1) * res];
        for (a, &lia) in li.iter().enumerate() {
            let ta = &t[a * res..(a + 1) * res];
            for (fv, tv) in fi.iter_mut().zip(ta) {
                *fv += lia * tv;
            }
        }
        for v in fi.iter_mut() {
            *v *= sigma;
        }
    }
    Ok(f)
}
