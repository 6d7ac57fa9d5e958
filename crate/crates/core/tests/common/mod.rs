#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use olahgp::{GpModel, GridDomain, GridField, KernelParams, Measurement, Point2, PriorField};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn table1_grid() -> GridDomain {
    GridDomain::new(4800.0, 32, 128).unwrap()
}

pub fn table1_kernel() -> KernelParams {
    KernelParams::new(1.0, 600.0).unwrap()
}

/// A smooth, non-constant prior mean so the mean path is exercised.
pub fn wavy_prior(grid: GridDomain) -> PriorField {
    let f = GridField::from_fn(grid.side, grid.res_eval, |p| {
        1.5 + 0.5 * (p.x / 900.0).sin() * (p.y / 1300.0).cos()
    })
    .unwrap();
    PriorField::from_field(grid, &f).unwrap()
}

pub fn random_point(rng: &mut impl Rng, grid: &GridDomain) -> Point2 {
    let h = grid.half();
    Point2::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h))
}

/// `n` measurements at random locations with noise drawn from `noise`.
pub fn random_data(rng: &mut impl Rng, grid: &GridDomain, n: usize, noise: &[f64]) -> Vec<Measurement> {
    (0..n)
        .map(|_| {
            let loc = random_point(rng, grid);
            let sd = noise[rng.gen_range(0..noise.len())];
            Measurement::new(loc, rng.gen_range(0.0..4.0), sd)
        })
        .collect()
}

/// Random belief: prior plus `n` measurements.
pub fn random_model(rng: &mut impl Rng, grid: GridDomain, kernel: KernelParams, n: usize) -> GpModel {
    let data = random_data(rng, &grid, n, &[0.05]);
    GpModel::fit(wavy_prior(grid), kernel, &data).unwrap()
}

fn k(kernel: &KernelParams, a: Point2, b: Point2) -> f64 {
    let d2 = (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
    kernel.sigma2 * (-0.5 * d2 / (kernel.ell * kernel.ell)).exp()
}

/// Batch GP posterior by a dense solve of `(K + Sigma) a = b`, with the
/// given absolute diagonal jitter. Independent of the crate's factor code.
pub fn dense_posterior(
    kernel: &KernelParams,
    prior: &PriorField,
    data: &[Measurement],
    jitter_var: f64,
    x: Point2,
) -> (f64, f64) {
    let n = data.len();
    let m0 = prior.mean_at(x).unwrap();
    if n == 0 {
        return (m0, kernel.sigma2);
    }
    let kmat = DMatrix::from_fn(n, n, |i, j| {
        let mut v = k(kernel, data[i].loc, data[j].loc);
        if i == j {
            v += data[i].noise_sd.powi(2) + jitter_var;
        }
        v
    });
    let resid = DVector::from_fn(n, |i, _| data[i].value - prior.mean_at(data[i].loc).unwrap());
    let kx = DVector::from_fn(n, |i, _| k(kernel, data[i].loc, x));
    let chol = kmat.cholesky().expect("covariance is positive definite");
    let a = chol.solve(&resid);
    let b = chol.solve(&kx);
    (m0 + kx.dot(&a), kernel.sigma2 - kx.dot(&b))
}

/// Variance at `x` after conditioning on `locs` with per-point noise
/// variances, by dense solve.
pub fn dense_var(kernel: &KernelParams, locs: &[Point2], noise_var: &[f64], x: Point2) -> f64 {
    let n = locs.len();
    if n == 0 {
        return kernel.sigma2;
    }
    let kmat = DMatrix::from_fn(n, n, |i, j| k(kernel, locs[i], locs[j]) + if i == j { noise_var[i] } else { 0.0 });
    let kx = DVector::from_fn(n, |i, _| k(kernel, locs[i], x));
    let b = kmat.cholesky().unwrap().solve(&kx);
    kernel.sigma2 - kx.dot(&b)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
