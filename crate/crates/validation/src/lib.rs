//! Reference computations that share no numerical code with `olahgp`:
//! dense GP conditioning, the complementary error function, and random
//! belief generators at the full experiment scale.

use nalgebra::{DMatrix, DVector};
use olahgp::{GpModel, GridDomain, GridField, KernelParams, Measurement, Point2, PriorField};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 4800 m region, 32 x 32 optimization grid, 128 x 128 evaluation grid.
pub fn table1_grid() -> GridDomain {
    GridDomain::new(4800.0, 32, 128).unwrap()
}

pub fn table1_kernel() -> KernelParams {
    KernelParams::new(1.0, 600.0).unwrap()
}

/// A smooth, non-constant prior mean.
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

/// `n` measurements at random locations, each with a noise level picked
/// from `noise`.
pub fn random_data(rng: &mut impl Rng, grid: &GridDomain, n: usize, noise: &[f64]) -> Vec<Measurement> {
    (0..n)
        .map(|_| {
            let loc = random_point(rng, grid);
            let sd = noise[rng.gen_range(0..noise.len())];
            Measurement::new(loc, rng.gen_range(0.0..4.0), sd)
        })
        .collect()
}

/// Wavy prior plus `n` measurements with noise sd 0.05.
pub fn random_model(rng: &mut impl Rng, grid: GridDomain, kernel: KernelParams, n: usize) -> GpModel {
    let data = random_data(rng, &grid, n, &[0.05]);
    GpModel::fit(wavy_prior(grid), kernel, &data).unwrap()
}

fn k(kernel: &KernelParams, a: Point2, b: Point2) -> f64 {
    let d2 = (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
    kernel.sigma2 * (-0.5 * d2 / (kernel.ell * kernel.ell)).exp()
}

/// Batch posterior mean and variance at `x` from a dense Cholesky solve of
/// `(K + Sigma + jitter I) a = b`.
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

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Complementary error function for `x >= 0`: power series below 2,
/// continued fraction above.
pub fn erfc_ref(x: f64) -> f64 {
    assert!(x >= 0.0);
    if x < 2.0 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let mut cf = x;
        for k in (1..200).rev() {
            cf = x + (k as f64 / 2.0) / cf;
        }
        (-x * x).exp() / std::f64::consts::PI.sqrt() / cf
    }
}
