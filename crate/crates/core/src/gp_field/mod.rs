//! Exact Gaussian-process regression over a planar scalar field.
//!
//! The belief is a GP with a gridded prior mean and an isotropic squared
//! exponential kernel. Observations are folded in one at a time by
//! appending a row to the Cholesky factor of `k(X, X) + diag(w^2)`, so an
//! update costs O(|D|^2). Look-ahead variance queries (what the variance
//! would become after sampling a candidate waypoint set) live in
//! [`lookahead`].

mod cholesky;
pub mod lookahead;
pub mod prior;

use serde::{Deserialize, Serialize};

pub use cholesky::{PackedCholesky, PivotFailure};
pub use lookahead::{lookahead_var_bcm, lookahead_var_exact, LookaheadField, VarianceMode};
pub use prior::{compress_prior, sample_correlated_field, sample_correlated_field_with};

use crate::error::{Error, Result};
use crate::geometry::{GridDomain, GridField, GridKind, Point2};

/// Diagonal jitter added to every factorized covariance, relative to the
/// signal variance.
pub const DEFAULT_JITTER: f64 = 1e-10;
/// A Cholesky pivot below this fraction of the signal variance is treated
/// as singular.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Squared exponential kernel `sigma2 * exp(-|a - b|^2 / (2 ell^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Signal variance.
    pub sigma2: f64,
    /// Isotropic length scale (m).
    pub ell: f64,
}

impl KernelParams {
    pub fn new(sigma2: f64, ell: f64) -> Result<Self> {
        let k = KernelParams { sigma2, ell };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::invalid(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return Err(Error::invalid(format!("ell must be > 0, got {}", self.ell)));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, a: Point2, b: Point2) -> f64 {
        self.sigma2 * (-0.5 * a.dist_sq(b) / (self.ell * self.ell)).exp()
    }

    /// Gradient of `k(a, b)` with respect to `a`, given `k = k(a, b)`.
    #[inline]
    pub(crate) fn grad_first(&self, k: f64, a: Point2, b: Point2) -> [f64; 2] {
        let s = -k / (self.ell * self.ell);
        [s * (a.x - b.x), s * (a.y - b.y)]
    }
}

/// `kernel.eval` as a free function.
pub fn kernel_eval(a: Point2, b: Point2, kernel: &KernelParams) -> f64 {
    kernel.eval(a, b)
}

/// One sample `(x, y, w)`: location, observed value and noise std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub loc: Point2,
    pub value: f64,
    pub noise_sd: f64,
}

impl Measurement {
    pub fn new(loc: Point2, value: f64, noise_sd: f64) -> Self {
        Measurement {
            loc,
            value,
            noise_sd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.loc.is_finite() || !self.value.is_finite() {
            return Err(Error::invalid("measurement location and value must be finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid(format!(
                "measurement noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// Prior mean `m(.)` stored on the evaluation grid and bilinearly
/// interpolated off-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorField {
    grid: GridDomain,
    field: GridField,
}

impl PriorField {
    /// `values` are `res_eval^2` concentrations, north row first.
    pub fn new(grid: GridDomain, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        let field = GridField::new(grid.side, grid.res_eval, values)?;
        Ok(PriorField { grid, field })
    }

    pub fn from_field(grid: GridDomain, field: &GridField) -> Result<Self> {
        if (field.side() - grid.side).abs() > 1e-9 * grid.side {
            return Err(Error::invalid(format!(
                "field side {} does not match region side {}",
                field.side(),
                grid.side
            )));
        }
        let field = field.resample(grid.res_eval)?;
        Self::new(grid, field.into_values())
    }

    pub fn constant(grid: GridDomain, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.res_eval * grid.res_eval])
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// `m(x)`; errors outside the region.
    pub fn mean_at(&self, x: Point2) -> Result<f64> {
        self.field.value_at(x)
    }
}

/// `prior.mean_at(x)` as a free function.
pub fn prior_mean(prior: &PriorField, x: Point2) -> Result<f64> {
    prior.mean_at(x)
}

/// Posterior mean and variance on every node of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPosterior {
    pub side: f64,
    pub res: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl FieldPosterior {
    pub fn mean_field(&self) -> Result<GridField> {
        GridField::new(self.side, self.res, self.mean.clone())
    }

    pub fn var_field(&self) -> Result<GridField> {
        GridField::new(self.side, self.res, self.var.clone())
    }
}

/// GP belief: prior mean, kernel, data and the factorization of
/// `k(X, X) + diag(w^2) + jitter I`.
///
/// Models are values: [`GpModel::add_measurement`] and
/// [`GpModel::fold_into_prior`] return new models.
#[derive(Debug, Clone)]
pub struct GpModel {
    prior: PriorField,
    kernel: KernelParams,
    data: Vec<Measurement>,
    chol: PackedCholesky,
    /// `L^-1 (y - m(X))`
    beta: Vec<f64>,
    /// `(k(X,X) + Sigma)^-1 (y - m(X))`
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpModel {
    /// Unconditioned model.
    pub fn new(prior: PriorField, kernel: KernelParams) -> Result<Self> {
        Self::with_jitter(prior, kernel, DEFAULT_JITTER)
    }

    /// Unconditioned model with a custom relative diagonal jitter.
    pub fn with_jitter(prior: PriorField, kernel: KernelParams, jitter: f64) -> Result<Self> {
        kernel.validate()?;
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::invalid(format!("jitter must be >= 0, got {jitter}")));
        }
        Ok(GpModel {
            prior,
            kernel,
            data: Vec::new(),
            chol: PackedCholesky::new(),
            beta: Vec::new(),
            alpha: Vec::new(),
            jitter,
        })
    }

    /// Batch conditioning on `data`.
    pub fn fit(prior: PriorField, kernel: KernelParams, data: &[Measurement]) -> Result<Self> {
        Self::new(prior, kernel)?.extend(data)
    }

    fn extend(mut self, data: &[Measurement]) -> Result<Self> {
        self.data.reserve(data.len());
        for m in data {
            self.push(*m)?;
        }
        self.refresh_alpha();
        Ok(self)
    }

    /// Returns the model conditioned on one more measurement. O(|D|^2).
    pub fn add_measurement(&self, m: Measurement) -> Result<Self> {
        let mut next = self.clone();
        next.push(m)?;
        next.refresh_alpha();
        Ok(next)
    }

    fn push(&mut self, m: Measurement) -> Result<()> {
        m.validate()?;
        let prior_mean = self.prior.mean_at(m.loc)?;
        let col: Vec<f64> = self.data.iter().map(|d| self.kernel.eval(d.loc, m.loc)).collect();
        let diag = self.kernel.sigma2 + m.noise_sd * m.noise_sd + self.jitter_var();
        let floor = PIVOT_FLOOR * self.kernel.sigma2;
        let mut l = col;
        self.chol.forward_solve_in_place(&mut l);
        let pivot_sq = diag - cholesky::dot(&l, &l);
        if !(pivot_sq >= floor) {
            return Err(Error::Singular {
                index: self.data.len(),
                nearest: nearest_index(&self.data, m.loc),
                pivot_sq,
            });
        }
        let l_nn = pivot_sq.sqrt();
        let beta_n = (m.value - prior_mean - cholesky::dot(&l, &self.beta)) / l_nn;
        self.chol.append_solved(&l, l_nn);
        self.beta.push(beta_n);
        self.data.push(m);
        Ok(())
    }

    fn refresh_alpha(&mut self) {
        let mut a = self.beta.clone();
        self.chol.back_solve_in_place(&mut a);
        self.alpha = a;
    }

    /// Absolute jitter variance added to the diagonal.
    pub fn jitter_var(&self) -> f64 {
        self.jitter * self.kernel.sigma2
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn prior(&self) -> &PriorField {
        &self.prior
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn data(&self) -> &[Measurement] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn chol(&self) -> &PackedCholesky {
        &self.chol
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn grid(&self) -> &GridDomain {
        self.prior.grid()
    }

    /// `k(X, x)`
    pub fn cross_cov(&self, x: Point2) -> Vec<f64> {
        self.data.iter().map(|d| self.kernel.eval(d.loc, x)).collect()
    }

    /// `L^-1 k(X, x)`
    pub(crate) fn whitened_cross_cov(&self, x: Point2) -> Vec<f64> {
        let mut w = self.cross_cov(x);
        self.chol.forward_solve_in_place(&mut w);
        w
    }

    /// Posterior mean with a precomputed `k(X, x)`.
    fn mean_with(&self, x: Point2, kx: &[f64]) -> Result<f64> {
        Ok(self.prior.mean_at(x)? + cholesky::dot(kx, &self.alpha))
    }

    /// Posterior mean and variance at `x`.
    pub fn posterior(&self, x: Point2) -> Result<(f64, f64)> {
        let kx = self.cross_cov(x);
        let mean = self.mean_with(x, &kx)?;
        let mut w = kx;
        self.chol.forward_solve_in_place(&mut w);
        let var = (self.kernel.sigma2 - cholesky::dot(&w, &w)).clamp(0.0, self.kernel.sigma2);
        Ok((mean, var))
    }

    pub fn posterior_mean(&self, x: Point2) -> Result<f64> {
        self.mean_with(x, &self.cross_cov(x))
    }

    pub fn posterior_var(&self, x: Point2) -> Result<f64> {
        Ok(self.posterior(x)?.1)
    }

    /// Posterior at every node of the chosen grid.
    pub fn posterior_field(&self, which: GridKind) -> FieldPosterior {
        let grid = *self.grid();
        let nodes = grid.nodes(which);
        let (mean, var) = nodes
            .iter()
            .map(|&p| self.posterior(p).expect("grid nodes lie inside the region"))
            .unzip();
        FieldPosterior {
            side: grid.side,
            res: grid.res(which),
            mean,
            var,
        }
    }

    /// Moves the current posterior mean into the prior and drops the data,
    /// bounding |D|. Posterior variance resets to `sigma2`.
    pub fn fold_into_prior(&self) -> Result<Self> {
        if self.data.is_empty() {
            return Ok(self.clone());
        }
        let post = self.posterior_field(GridKind::Eval);
        let prior = PriorField::new(*self.grid(), post.mean)?;
        Self::with_jitter(prior, self.kernel, self.jitter)
    }

    /// Max relative error of `L L^T` against the covariance it factors.
    pub fn factorization_error(&self) -> f64 {
        let n = self.data.len();
        let back = self.chol.reconstruct();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut k = self.kernel.eval(self.data[i].loc, self.data[j].loc);
                if i == j {
                    k += self.data[i].noise_sd.powi(2) + self.jitter_var();
                }
                worst = worst.max((back[i * n + j] - k).abs() / self.kernel.sigma2);
            }
        }
        worst
    }
}

fn nearest_index(data: &[Measurement], x: Point2) -> Option<usize> {
    data.iter()
        .enumerate()
        .min_by(|a, b| a.1.loc.dist_sq(x).total_cmp(&b.1.loc.dist_sq(x)))
        .map(|(i, _)| i)
}

/// Free-function forms of the model operations.
pub fn fit(prior: PriorField, kernel: KernelParams, data: &[Measurement]) -> Result<GpModel> {
    GpModel::fit(prior, kernel, data)
}

pub fn add_measurement(model: &GpModel, m: Measurement) -> Result<GpModel> {
    model.add_measurement(m)
}

pub fn posterior(model: &GpModel, x: Point2) -> Result<(f64, f64)> {
    model.posterior(x)
}

pub fn posterior_field(model: &GpModel, which: GridKind) -> FieldPosterior {
    model.posterior_field(which)
}

pub fn fold_into_prior(model: &GpModel) -> Result<GpModel> {
    model.fold_into_prior()
}
