//! Look-ahead variance: the posterior variance the field would have after
//! also sampling a candidate waypoint set `R`.
//!
//! Only the variance is needed because the expected posterior mean after
//! sampling equals the current mean. Two routes are provided:
//!
//! * `Exact`: condition on the data and `R` jointly. Implemented through the
//!   Schur complement of the data block, so the data factorization is reused
//!   and only an `N x N` system in the waypoints is factored per query.
//! * `Bcm`: the Bayesian Committee Machine combination
//!   `1/v = 1/v(x|D) + 1/v(x|R) - 1/k(x,x)`, which decouples the data from
//!   the waypoints.
//!
//! Waypoints are treated as noisy observations with a configurable noise
//! standard deviation, which keeps the joint matrix well conditioned.

use serde::{Deserialize, Serialize};

use super::cholesky::{dot, PackedCholesky};
use super::{GpModel, KernelParams, PIVOT_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    Exact,
    #[default]
    Bcm,
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(VarianceMode::Exact),
            "bcm" => Ok(VarianceMode::Bcm),
            other => Err(Error::invalid(format!("unknown variance mode `{other}`"))),
        }
    }
}

/// BCM precision combination. Zero component variances are absorbing.
#[inline]
pub fn bcm_combine(var_data: f64, var_r: f64, prior_var: f64) -> f64 {
    if var_data <= 0.0 || var_r <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 / var_data + 1.0 / var_r - 1.0 / prior_var)
}

/// Look-ahead variance evaluator for a fixed set of query points.
///
/// Everything that depends only on the current data is computed once in
/// [`LookaheadField::new`]; each call then costs `O(G (N^2 + N |D|))` for
/// `G` query points and `N` waypoints.
#[derive(Debug, Clone)]
pub struct LookaheadField {
    kernel: KernelParams,
    mode: VarianceMode,
    /// Variance added to the diagonal for each waypoint (noise^2 + jitter).
    waypoint_var: f64,
    points: Vec<Point2>,
    /// `v(x | D)` at each query point.
    base_var: Vec<f64>,
    has_data: bool,
    /// Exact mode only: data locations, factor, and `L^-1 k(X, x)` per point
    /// (point-major, `points.len() x n`).
    data_locs: Vec<Point2>,
    chol: PackedCholesky,
    whitened: Vec<f64>,
}

struct WaypointSystem {
    /// `L^-1 k(X, r_j)` per waypoint (exact mode; empty otherwise).
    w_r: Vec<Vec<f64>>,
    s_chol: PackedCholesky,
}

struct WaypointGrad {
    /// `L^-1 d k(X, r_j) / d r_j[t]`, indexed `[2 j + t]`.
    dw: Vec<Vec<f64>>,
    /// `h[2 j + t][i] = d k(r_j, r_i)/d r_j[t] - dw[2j+t] . w_r[i]`.
    h: Vec<Vec<f64>>,
}

impl LookaheadField {
    pub fn new(
        model: &GpModel,
        points: Vec<Point2>,
        mode: VarianceMode,
        waypoint_noise_sd: f64,
    ) -> Result<Self> {
        if !(waypoint_noise_sd >= 0.0 && waypoint_noise_sd.is_finite()) {
            return Err(Error::invalid(format!(
                "look-ahead noise must be >= 0, got {waypoint_noise_sd}"
            )));
        }
        let kernel = *model.kernel();
        let n = model.len();
        let keep_whitened = mode == VarianceMode::Exact && n > 0;
        let mut whitened = Vec::with_capacity(if keep_whitened { points.len() * n } else { 0 });
        let base_var = points
            .iter()
            .map(|&x| {
                let w = model.whitened_cross_cov(x);
                let v = (kernel.sigma2 - dot(&w, &w)).clamp(0.0, kernel.sigma2);
                if keep_whitened {
                    whitened.extend_from_slice(&w);
                }
                v
            })
            .collect();
        let (data_locs, chol) = if keep_whitened {
            (model.data().iter().map(|m| m.loc).collect(), model.chol().clone())
        } else {
            (Vec::new(), PackedCholesky::new())
        };
        Ok(LookaheadField {
            kernel,
            mode,
            waypoint_var: waypoint_noise_sd * waypoint_noise_sd + model.jitter_var(),
            points,
            base_var,
            has_data: n > 0,
            data_locs,
            chol,
            whitened,
        })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn mode(&self) -> VarianceMode {
        self.mode
    }

    /// Current posterior variance `v(x | D)` at each query point.
    pub fn base_var(&self) -> &[f64] {
        &self.base_var
    }

    fn n_data(&self) -> usize {
        self.chol.len()
    }

    fn build_system(&self, r: &[Point2]) -> Result<WaypointSystem> {
        let w_r: Vec<Vec<f64>> = if self.n_data() > 0 {
            r.iter()
                .map(|&rj| {
                    let mut w: Vec<f64> =
                        self.data_locs.iter().map(|&xm| self.kernel.eval(xm, rj)).collect();
                    self.chol.forward_solve_in_place(&mut w);
                    w
                })
                .collect()
        } else {
            Vec::new()
        };
        let floor = PIVOT_FLOOR * self.kernel.sigma2;
        let s_chol = PackedCholesky::factor(
            r.len(),
            |i, j| {
                let mut s = self.kernel.eval(r[i], r[j]);
                if !w_r.is_empty() {
                    s -= dot(&w_r[i], &w_r[j]);
                }
                if i == j {
                    s += self.waypoint_var;
                }
                s
            },
            floor,
        )
        .map_err(|f| {
            let x = r[f.row];
            let nearest = self
                .data_locs
                .iter()
                .chain(&r[..f.row])
                .enumerate()
                .min_by(|a, b| a.1.dist_sq(x).total_cmp(&b.1.dist_sq(x)))
                .map(|(i, _)| i);
            Error::Singular {
                index: self.n_data() + f.row,
                nearest,
                pivot_sq: f.pivot_sq,
            }
        })?;
        Ok(WaypointSystem { w_r, s_chol })
    }

    fn build_grad(&self, r: &[Point2], sys: &WaypointSystem) -> WaypointGrad {
        let nr = r.len();
        let mut dw = Vec::with_capacity(2 * nr);
        let mut h = Vec::with_capacity(2 * nr);
        for &rj in r {
            let mut cols = [Vec::new(), Vec::new()];
            if self.n_data() > 0 {
                for col in cols.iter_mut() {
                    col.reserve(self.n_data());
                }
                for &xm in &self.data_locs {
                    let k = self.kernel.eval(rj, xm);
                    let g = self.kernel.grad_first(k, rj, xm);
                    cols[0].push(g[0]);
                    cols[1].push(g[1]);
                }
                for col in cols.iter_mut() {
                    self.chol.forward_solve_in_place(col);
                }
            }
            for (t, col) in cols.into_iter().enumerate() {
                let hv: Vec<f64> = (0..nr)
                    .map(|i| {
                        let k = self.kernel.eval(rj, r[i]);
                        let mut v = self.kernel.grad_first(k, rj, r[i])[t];
                        if !col.is_empty() {
                            v -= dot(&col, &sys.w_r[i]);
                        }
                        v
                    })
                    .collect();
                h.push(hv);
                dw.push(col);
            }
        }
        WaypointGrad { dw, h }
    }

    /// Look-ahead variance at every query point.
    pub fn variances(&self, r: &[Point2]) -> Result<Vec<f64>> {
        self.evaluate(r, None::<fn(usize, f64) -> f64>)
            .map(|(v, _)| v)
    }

    /// Look-ahead variances and the gradient, with respect to the flattened
    /// waypoints, of `sum_x weight(x, v(x)) * v(x)` holding the weights
    /// fixed. `weight` receives each point's index and variance and returns
    /// `d cost / d v(x)`, so the result is the gradient of any cost that is
    /// a sum of per-point functions of the variance.
    pub fn variances_with_grad(
        &self,
        r: &[Point2],
        weight: impl FnMut(usize, f64) -> f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.evaluate(r, Some(weight))
    }

    fn evaluate<F: FnMut(usize, f64) -> f64>(
        &self,
        r: &[Point2],
        mut weight: Option<F>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let nr = r.len();
        let mut grad = vec![0.0; 2 * nr];
        if nr == 0 {
            if let Some(w) = weight.as_mut() {
                for (g, &v) in self.base_var.iter().enumerate() {
                    w(g, v);
                }
            }
            return Ok((self.base_var.clone(), grad));
        }
        let sys = self.build_system(r)?;
        let dgrad = weight.as_ref().map(|_| self.build_grad(r, &sys));
        let n = self.n_data();
        let k0 = self.kernel.sigma2;
        let exact = self.mode == VarianceMode::Exact;

        let mut vars = Vec::with_capacity(self.points.len());
        let mut kx = vec![0.0; nr];
        let mut c = vec![0.0; nr];
        for (g, &x) in self.points.iter().enumerate() {
            let wg = if n > 0 { &self.whitened[g * n..(g + 1) * n] } else { &[][..] };
            for j in 0..nr {
                kx[j] = self.kernel.eval(r[j], x);
                c[j] = kx[j];
                if n > 0 {
                    c[j] -= dot(&sys.w_r[j], wg);
                }
            }
            let v = sys.s_chol.solve(&c);
            let red = dot(&c, &v);
            let base = self.base_var[g];
            // value, and d value / d red (zero where clamped)
            let (var, dvar_dred) = if exact || !self.has_data {
                let raw = if exact { base - red } else { k0 - red };
                if raw > 0.0 {
                    (raw, -1.0)
                } else {
                    (0.0, 0.0)
                }
            } else {
                let var_r = k0 - red;
                let var = bcm_combine(base, var_r, k0);
                if var > 0.0 {
                    (var, -(var * var) / (var_r * var_r))
                } else {
                    (0.0, 0.0)
                }
            };
            vars.push(var);

            if let (Some(w), Some(dg)) = (weight.as_mut(), dgrad.as_ref()) {
                let omega = w(g, var) * dvar_dred;
                if omega == 0.0 {
                    continue;
                }
                for j in 0..nr {
                    if v[j] == 0.0 {
                        continue;
                    }
                    let kg = self.kernel.grad_first(kx[j], r[j], x);
                    for t in 0..2 {
                        let idx = 2 * j + t;
                        let mut dc = kg[t];
                        if n > 0 {
                            dc -= dot(&dg.dw[idx], wg);
                        }
                        let dred = 2.0 * v[j] * (dc - dot(&dg.h[idx], &v));
                        grad[idx] += omega * dred;
                    }
                }
            }
        }
        Ok((vars, grad))
    }
}

/// `v(x | D, R)` by joint conditioning on the data and the waypoints.
pub fn lookahead_var_exact(
    model: &GpModel,
    r: &[Point2],
    x: Point2,
    waypoint_noise_sd: f64,
) -> Result<f64> {
    let f = LookaheadField::new(model, vec![x], VarianceMode::Exact, waypoint_noise_sd)?;
    Ok(f.variances(r)?[0])
}

/// BCM approximation of `v(x | D, R)`.
pub fn lookahead_var_bcm(
    model: &GpModel,
    r: &[Point2],
    x: Point2,
    waypoint_noise_sd: f64,
) -> Result<f64> {
    let f = LookaheadField::new(model, vec![x], VarianceMode::Bcm, waypoint_noise_sd)?;
    Ok(f.variances(r)?[0])
}
