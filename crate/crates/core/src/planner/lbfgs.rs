//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! Variables at a bound whose gradient points outward are frozen for the
//! step; the L-BFGS direction is built on the free variables and the step is
//! taken along the projected arc with Armijo backtracking.

use std::collections::VecDeque;

const MEMORY: usize = 8;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

pub(crate) struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn project(&self, x: &mut [f64]) {
        for ((v, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(l, h);
        }
    }

    /// `|| P(x - g) - x ||_inf`
    pub fn projected_grad_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter()
            .zip(g)
            .zip(self.lo.iter().zip(&self.hi))
            .map(|((&xi, &gi), (&l, &h))| ((xi - gi).clamp(l, h) - xi).abs())
            .fold(0.0, f64::max)
    }

    fn frozen(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        x.iter()
            .zip(g)
            .zip(self.lo.iter().zip(&self.hi))
            .map(|((&xi, &gi), (&l, &h))| (xi <= l && gi > 0.0) || (xi >= h && gi < 0.0))
            .collect()
    }
}

pub(crate) struct InnerResult {
    pub x: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `fun` over the box from `x0`. `fun` returns `None` where the
/// objective cannot be evaluated; such trial points are treated as failed
/// line-search steps. Stops once the projected gradient is below `tol`,
/// after `max_iters` accepted steps, or when no descent step is found.
pub(crate) fn minimize<F>(
    mut fun: F,
    bounds: &BoxBounds,
    x0: &[f64],
    first_step: f64,
    tol: f64,
    max_iters: usize,
) -> Option<InnerResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut f, mut g) = fun(&x)?;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut iters = 0;
    loop {
        if bounds.projected_grad_norm(&x, &g) <= tol {
            return Some(InnerResult { x, iters, converged: true });
        }
        if iters >= max_iters {
            return Some(InnerResult { x, iters, converged: false });
        }
        let frozen = bounds.frozen(&x, &g);
        let gf: Vec<f64> = (0..n).map(|i| if frozen[i] { 0.0 } else { g[i] }).collect();

        let mut accepted = None;
        for attempt in 0..2 {
            let use_memory = attempt == 0 && !mem.is_empty();
            let mut d = if use_memory {
                two_loop(&mem, &gf)
            } else {
                gf.iter().map(|v| -v).collect()
            };
            for i in 0..n {
                if frozen[i] {
                    d[i] = 0.0;
                }
            }
            let slope = dot(&gf, &d);
            if !(slope < 0.0) {
                mem.clear();
                continue;
            }
            let mut t = if use_memory {
                1.0
            } else {
                let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if dmax > 0.0 {
                    (first_step / dmax).min(1.0)
                } else {
                    1.0
                }
            };
            for _ in 0..MAX_BACKTRACKS {
                let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                bounds.project(&mut xt);
                let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                if step.iter().all(|&s| s == 0.0) {
                    break;
                }
                if let Some((ft, gt)) = fun(&xt) {
                    if ft <= f + ARMIJO_C1 * dot(&g, &step) {
                        accepted = Some((xt, ft, gt, step));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            mem.clear();
            if !use_memory {
                break;
            }
        }
        let Some((xt, ft, gt, s)) = accepted else {
            return Some(InnerResult { x, iters, converged: false });
        };
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if mem.len() == MEMORY {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        x = xt;
        f = ft;
        g = gt;
        iters += 1;
    }
}

fn two_loop(mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let (s, y, _) = mem.back().expect("non-empty memory");
    let gamma = dot(s, y) / dot(y, y);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}
