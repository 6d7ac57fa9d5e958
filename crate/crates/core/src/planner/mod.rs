//! Receding-horizon waypoint optimization.
//!
//! [`solve_ocp`] minimizes the [`Objective`] over `N` waypoints inside the
//! square region subject to a total path-length budget. The box is handled by
//! projection; the budget by an augmented Lagrangian whose subproblems run
//! projected L-BFGS. Infeasible iterates are pulled back onto the budget by
//! shrinking the path toward the start point, which stays inside the region
//! because it is convex, and the best feasible point seen is returned.

mod lbfgs;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{flatten, unflatten, GridDomain, GridKind, Point2};
use crate::gp_field::{GpModel, VarianceMode};
use crate::objective::{path_length, CostWeights, EnvForcing, Objective};
use lbfgs::{BoxBounds, InnerResult};

/// Starting points tried for a single-waypoint solve, besides the warm start.
const MULTI_START_NODES: usize = 5;
const MAX_OUTER: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub horizon_n: usize,
    /// Path-length budget (m).
    pub l_max: f64,
    pub bounds: GridDomain,
    pub variance_mode: VarianceMode,
    /// Budget of inner quasi-Newton iterations per solve.
    pub max_iters: usize,
    /// Tolerance on the scaled KKT residual.
    pub kkt_tol: f64,
    /// Allowed path-length excess (m).
    pub constraint_tol: f64,
    /// Noise sd assumed for future measurements in the look-ahead variance.
    pub lookahead_noise_sd: f64,
    /// Multi-start single-waypoint solves from the best grid nodes.
    pub multi_start: bool,
    /// Post-solve 2-opt pass over waypoint order.
    pub two_opt: bool,
    /// For `N > 1`, also solve from a sequentially greedy waypoint set and
    /// keep the better plan.
    pub greedy_seed: bool,
}

impl PlannerConfig {
    pub fn new(bounds: GridDomain) -> Self {
        PlannerConfig {
            horizon_n: 5,
            l_max: 6160.0,
            bounds,
            variance_mode: VarianceMode::Bcm,
            max_iters: 200,
            kkt_tol: 1e-6,
            constraint_tol: 1e-3,
            lookahead_noise_sd: 0.05,
            multi_start: true,
            two_opt: false,
            greedy_seed: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.horizon_n == 0 {
            return Err(Error::invalid("horizon_n must be >= 1"));
        }
        if !(self.l_max >= 0.0 && self.l_max.is_finite()) {
            return Err(Error::invalid(format!("l_max must be >= 0, got {}", self.l_max)));
        }
        if !(self.kkt_tol > 0.0) || !(self.constraint_tol > 0.0) {
            return Err(Error::invalid("kkt_tol and constraint_tol must be > 0"));
        }
        if !(self.lookahead_noise_sd >= 0.0) {
            return Err(Error::invalid("lookahead_noise_sd must be >= 0"));
        }
        Ok(())
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub waypoints: Vec<Point2>,
    /// Objective at `waypoints` (smooth current gate when forcing is used).
    pub objective: f64,
    pub path_len: f64,
    /// Inner quasi-Newton iterations.
    pub iterations: usize,
    /// Wall time (s).
    pub solve_time: f64,
    pub converged: bool,
    /// Scaled KKT residual at the returned point.
    pub kkt: f64,
}

/// Regular `n`-gon of radius `s/4` centered on the region, starting on the
/// positive x axis and running counterclockwise. `r0` does not move it.
pub fn initial_guess_ngon(_r0: Point2, n: usize, s: f64) -> Vec<Point2> {
    let radius = s / 4.0;
    (0..n)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / n as f64;
            Point2::new(radius * th.cos(), radius * th.sin())
        })
        .collect()
}

/// Drops the first waypoint and repeats the last.
pub fn shift_warm_start(prev: &Plan) -> Vec<Point2> {
    let w = &prev.waypoints;
    match w.len() {
        0 => Vec::new(),
        1 => w.clone(),
        n => w[1..].iter().copied().chain(std::iter::once(w[n - 1])).collect(),
    }
}

/// Shrinks the path toward `r0` until it fits in `l_max`.
fn restore(r0: Point2, r: &mut [Point2], l_max: f64, bounds: &GridDomain) {
    let len = path_length(r0, r);
    if len <= l_max {
        return;
    }
    let mut alpha = if len > 0.0 { l_max / len } else { 0.0 };
    for _ in 0..4 {
        let trial: Vec<Point2> = r
            .iter()
            .map(|p| bounds.project(Point2::new(r0.x + alpha * (p.x - r0.x), r0.y + alpha * (p.y - r0.y))))
            .collect();
        if path_length(r0, &trial) <= l_max {
            r.copy_from_slice(&trial);
            return;
        }
        alpha *= 1.0 - 1e-12;
    }
    r.iter_mut().for_each(|p| *p = r0);
}

/// Augmented-Lagrangian penalty for the inequality `g <= 0` and its
/// derivative in `g`.
#[inline]
fn al_penalty(g: f64, lambda: f64, rho: f64) -> (f64, f64) {
    if g + lambda / rho > 0.0 {
        (lambda * g + 0.5 * rho * g * g, lambda + rho * g)
    } else {
        (-0.5 * lambda * lambda / rho, 0.0)
    }
}

/// Work in units of the kernel length scale so the box, the budget and the
/// quasi-Newton steps are all O(1).
struct Scaled<'a> {
    obj: &'a Objective,
    scale: f64,
    l_max: f64,
    bounds: BoxBounds,
}

impl<'a> Scaled<'a> {
    fn new(obj: &'a Objective, cfg: &PlannerConfig, scale: f64, n: usize) -> Self {
        let h = cfg.bounds.half() / scale;
        Scaled {
            obj,
            scale,
            l_max: cfg.l_max / scale,
            bounds: BoxBounds {
                lo: vec![-h; 2 * n],
                hi: vec![h; 2 * n],
            },
        }
    }

    fn to_points(&self, y: &[f64]) -> Vec<Point2> {
        unflatten(&y.iter().map(|v| v * self.scale).collect::<Vec<_>>())
    }

    fn to_vars(&self, r: &[Point2]) -> Vec<f64> {
        flatten(r).into_iter().map(|v| v / self.scale).collect()
    }

    fn f_grad(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let z: Vec<f64> = y.iter().map(|v| v * self.scale).collect();
        let (f, mut g) = self.obj.value_and_grad(&z)?;
        g.iter_mut().for_each(|v| *v *= self.scale);
        Ok((f, g))
    }

    /// Budget residual (scaled) and its gradient.
    fn constraint(&self, y: &[f64]) -> (f64, Vec<f64>) {
        let r0 = Point2::new(self.obj.r0().x / self.scale, self.obj.r0().y / self.scale);
        let pts = unflatten(y);
        let mut grad = vec![0.0; y.len()];
        let mut prev = r0;
        for (i, &p) in pts.iter().enumerate() {
            let len = prev.dist(p);
            if len > 0.0 {
                let (ux, uy) = ((p.x - prev.x) / len, (p.y - prev.y) / len);
                grad[2 * i] += ux;
                grad[2 * i + 1] += uy;
                if i > 0 {
                    grad[2 * i - 2] -= ux;
                    grad[2 * i - 1] -= uy;
                }
            }
            prev = p;
        }
        (path_length(r0, &pts) - self.l_max, grad)
    }

    /// Projected-gradient norm of the Lagrangian, complementarity, relative
    /// to the objective magnitude.
    fn kkt(&self, y: &[f64], f: f64, gf: &[f64], lambda: f64) -> f64 {
        let (c, gc) = self.constraint(y);
        let gl: Vec<f64> = gf.iter().zip(&gc).map(|(a, b)| a + lambda * b).collect();
        let stat = self.bounds.projected_grad_norm(y, &gl);
        (stat + (lambda * c).abs()) / f.abs().max(1.0)
    }

    /// Least-squares multiplier for a near-active budget.
    fn multiplier_estimate(&self, y: &[f64], gf: &[f64], tol: f64) -> f64 {
        let (c, gc) = self.constraint(y);
        if c < -tol {
            return 0.0;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..y.len() {
            let at_lo = y[i] <= self.bounds.lo[i];
            let at_hi = y[i] >= self.bounds.hi[i];
            if at_lo || at_hi {
                continue;
            }
            num -= gf[i] * gc[i];
            den += gc[i] * gc[i];
        }
        if den > 0.0 {
            (num / den).max(0.0)
        } else {
            0.0
        }
    }
}

struct Candidate {
    r: Vec<Point2>,
    f: f64,
}

fn consider(best: &mut Option<Candidate>, r: Vec<Point2>, f: f64) {
    if best.as_ref().map_or(true, |b| f <= b.f) {
        *best = Some(Candidate { r, f });
    }
}

/// Single start of the augmented-Lagrangian solve.
fn solve_from(obj: &Objective, cfg: &PlannerConfig, start: &[Point2]) -> Result<Plan> {
    let t0 = Instant::now();
    let n = start.len();
    let r0 = obj.r0();
    let scale = obj.length_scale();
    let sc = Scaled::new(obj, cfg, scale, n);
    let ctol = cfg.constraint_tol / scale;

    let mut r_init: Vec<Point2> = start.iter().map(|&p| cfg.bounds.project(p)).collect();
    restore(r0, &mut r_init, cfg.l_max, &cfg.bounds);
    let mut y = sc.to_vars(&r_init);
    let (f_init, g_init) = sc.f_grad(&y)?;
    let mut best = None;
    consider(&mut best, r_init.clone(), f_init);

    let mut lambda = sc.multiplier_estimate(&y, &g_init, ctol);
    let mut rho = 10.0 * (f_init.abs().max(1.0)) / sc.l_max.max(1.0).powi(2);
    let mut kkt = sc.kkt(&y, f_init, &g_init, lambda);
    let mut converged = kkt <= cfg.kkt_tol;
    let mut iterations = 0;
    let mut prev_viol = f64::INFINITY;

    let mut outer = 0;
    while !converged && iterations < cfg.max_iters && outer < MAX_OUTER {
        outer += 1;
        let (lam, rh) = (lambda, rho);
        let fun = |v: &[f64]| -> Option<(f64, Vec<f64>)> {
            let (f, mut g) = sc.f_grad(v).ok()?;
            let (c, gc) = sc.constraint(v);
            let (p, dp) = al_penalty(c, lam, rh);
            if dp != 0.0 {
                g.iter_mut().zip(&gc).for_each(|(a, b)| *a += dp * b);
            }
            Some((f + p, g))
        };
        let inner_tol = cfg.kkt_tol * f_init.abs().max(1.0) * 0.5;
        let first_step = 0.25;
        let Some(InnerResult { x, iters, converged: inner_ok }) =
            lbfgs::minimize(fun, &sc.bounds, &y, first_step, inner_tol, cfg.max_iters - iterations)
        else {
            break;
        };
        if !inner_ok {
            log::debug!("inner solve stopped early after {iters} iterations (outer {outer})");
        }
        iterations += iters;
        y = x;

        let (c, _) = sc.constraint(&y);
        let (f, gf) = sc.f_grad(&y)?;
        let new_lambda = (lambda + rho * c).max(0.0);
        let mut r = sc.to_points(&y);
        if path_length(r0, &r) <= cfg.l_max + cfg.constraint_tol {
            kkt = sc.kkt(&y, f, &gf, new_lambda);
            converged = kkt <= cfg.kkt_tol;
            consider(&mut best, r, f);
        } else {
            restore(r0, &mut r, cfg.l_max, &cfg.bounds);
            let f_r = obj.value(&r)?;
            consider(&mut best, r, f_r);
            kkt = f64::INFINITY;
        }
        lambda = new_lambda;
        let viol = c.max(0.0);
        if viol > ctol && viol > 0.25 * prev_viol {
            rho *= 10.0;
        }
        prev_viol = viol;
        if iters == 0 && !converged && viol <= ctol {
            // stalled at a feasible point the line search cannot improve
            break;
        }
    }

    let best = best.expect("initial candidate recorded");
    let path_len = path_length(r0, &best.r);
    let y_best = sc.to_vars(&best.r);
    if best.r != sc.to_points(&y) {
        let (f, gf) = sc.f_grad(&y_best)?;
        let lam = sc.multiplier_estimate(&y_best, &gf, ctol);
        kkt = sc.kkt(&y_best, f, &gf, lam);
        converged = kkt <= cfg.kkt_tol;
    }
    Ok(Plan {
        waypoints: best.r,
        objective: best.f,
        path_len,
        iterations,
        solve_time: t0.elapsed().as_secs_f64(),
        converged,
        kkt,
    })
}

/// Feasible optimization-grid nodes ranked by single-waypoint objective.
pub fn sweep_single(obj: &Objective, cfg: &PlannerConfig) -> Result<Vec<(Point2, f64)>> {
    let r0 = obj.r0();
    let mut out = Vec::new();
    for p in cfg.bounds.nodes(GridKind::Opt) {
        if r0.dist(p) <= cfg.l_max {
            out.push((p, obj.value(&[p])?));
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

/// Solves the receding-horizon problem from `r0`. `warm` defaults to the
/// `n`-gon guess.
pub fn solve_ocp(
    model: &GpModel,
    config: &PlannerConfig,
    weights: CostWeights,
    forcing: Option<&EnvForcing>,
    r0: Point2,
    warm: Option<&[Point2]>,
) -> Result<Plan> {
    config.validate()?;
    let obj = Objective::new(
        model,
        r0,
        weights,
        forcing.cloned(),
        config.variance_mode,
        config.lookahead_noise_sd,
    )?;
    solve_objective(&obj, config, warm)
}

/// As [`solve_ocp`] with a prebuilt objective.
pub fn solve_objective(obj: &Objective, config: &PlannerConfig, warm: Option<&[Point2]>) -> Result<Plan> {
    config.validate()?;
    let t0 = Instant::now();
    let r0 = obj.r0();
    config.bounds.check(r0)?;
    let n = config.horizon_n;
    let start = match warm {
        Some(w) if w.len() != n => {
            return Err(Error::invalid(format!(
                "warm start has {} waypoints, horizon is {n}",
                w.len()
            )))
        }
        Some(w) => w.to_vec(),
        None => initial_guess_ngon(r0, n, config.bounds.side),
    };

    if config.l_max == 0.0 {
        let r = vec![r0; n];
        return Ok(Plan {
            objective: obj.value(&r)?,
            waypoints: r,
            path_len: 0.0,
            iterations: 0,
            solve_time: t0.elapsed().as_secs_f64(),
            converged: true,
            kkt: 0.0,
        });
    }

    let mut plan = solve_from(obj, config, &start)?;
    if n == 1 && config.multi_start {
        let mut iterations = plan.iterations;
        for (p, _) in sweep_single(obj, config)?.into_iter().take(MULTI_START_NODES) {
            let cand = solve_from(obj, config, &[p])?;
            iterations += cand.iterations;
            if cand.objective < plan.objective {
                plan = cand;
            }
        }
        plan.iterations = iterations;
    }
    if n > 1 && config.greedy_seed {
        let seed = greedy_sequence(obj, config, n)?;
        let cand = solve_from(obj, config, &seed)?;
        let iterations = plan.iterations + cand.iterations;
        if cand.objective < plan.objective {
            plan = cand;
        }
        plan.iterations = iterations;
    }
    if config.two_opt && n > 2 {
        two_opt(obj, config, &mut plan)?;
    }
    plan.solve_time = t0.elapsed().as_secs_f64();
    Ok(plan)
}

/// Waypoints picked one at a time, each the optimization-grid node that
/// most lowers the objective given the ones already picked, subject to the
/// budget.
fn greedy_sequence(obj: &Objective, config: &PlannerConfig, n: usize) -> Result<Vec<Point2>> {
    let r0 = obj.r0();
    let nodes = config.bounds.nodes(GridKind::Opt);
    let mut seq: Vec<Point2> = Vec::with_capacity(n);
    let mut used = 0.0;
    for _ in 0..n {
        let last = seq.last().copied().unwrap_or(r0);
        let mut best: Option<(f64, Point2)> = None;
        let mut trial = seq.clone();
        trial.push(last);
        for &p in &nodes {
            if used + last.dist(p) > config.l_max {
                continue;
            }
            *trial.last_mut().expect("non-empty") = p;
            let f = obj.value(&trial)?;
            if best.map_or(true, |(bf, _)| f < bf) {
                best = Some((f, p));
            }
        }
        let next = best.map_or(last, |(_, p)| p);
        used += last.dist(next);
        seq.push(next);
    }
    Ok(seq)
}

/// Reverses waypoint sub-sequences while that lowers the objective.
fn two_opt(obj: &Objective, config: &PlannerConfig, plan: &mut Plan) -> Result<()> {
    let n = plan.waypoints.len();
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let mut r = plan.waypoints.clone();
                r[i..=j].reverse();
                let len = path_length(obj.r0(), &r);
                if len > config.l_max {
                    continue;
                }
                let f = obj.value(&r)?;
                if f < plan.objective - 1e-12 {
                    plan.waypoints = r;
                    plan.objective = f;
                    plan.path_len = len;
                    improved = true;
                }
            }
        }
    }
    Ok(())
}

/// One-step lookahead: [`solve_ocp`] with `horizon_n = 1`.
pub fn greedy_plan(
    model: &GpModel,
    config: &PlannerConfig,
    weights: CostWeights,
    forcing: Option<&EnvForcing>,
    r0: Point2,
    warm: Option<&[Point2]>,
) -> Result<Plan> {
    let cfg = PlannerConfig {
        horizon_n: 1,
        ..config.clone()
    };
    solve_ocp(model, &cfg, weights, forcing, r0, warm)
}

/// Offline plan of `n_static` waypoints on the data-free version of
/// `model`. `config.l_max` is the budget for the whole static path.
pub fn static_plan(
    model: &GpModel,
    config: &PlannerConfig,
    weights: CostWeights,
    forcing: Option<&EnvForcing>,
    r0: Point2,
    n_static: usize,
) -> Result<Plan> {
    if n_static == 0 {
        return Err(Error::invalid("n_static must be >= 1"));
    }
    let prior_only = GpModel::with_jitter(model.prior().clone(), *model.kernel(), model.jitter())?;
    let cfg = PlannerConfig {
        horizon_n: n_static,
        ..config.clone()
    };
    solve_ocp(&prior_only, &cfg, weights, forcing, r0, None)
}
