//! The planner's cost.
//!
//! The information term sums, over the optimization grid, the probability
//! that thresholding the posterior mean at `gamma` misclassifies the node,
//! using the look-ahead variance after the candidate waypoints are sampled.
//! Regularizers add path length, a current-exposure cost and a wind cost.
//!
//! The optimizer sees a smooth version of the current cost (logistic gate);
//! [`Objective::breakdown`] reports the hard-gated value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{flatten, unflatten, GridField, GridKind, Point2};
use crate::gp_field::{GpModel, LookaheadField, VarianceMode};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Probability that the thresholded mean misclassifies a point:
/// `Phi(-|mean - gamma| / sd)`.
pub fn misclass_prob(mean: f64, sd: f64, gamma: f64) -> f64 {
    let a = (mean - gamma).abs();
    if sd <= 0.0 {
        return if a == 0.0 { 0.5 } else { 0.0 };
    }
    normal_cdf(-a / sd)
}

/// Misclassification probability from a margin `|mean - gamma|` and a
/// variance, with its derivative with respect to the variance.
#[inline]
pub(crate) fn misclass_from_var(margin: f64, var: f64) -> (f64, f64) {
    if var <= 0.0 {
        return (if margin == 0.0 { 0.5 } else { 0.0 }, 0.0);
    }
    if margin == 0.0 {
        return (0.5, 0.0);
    }
    let sd = var.sqrt();
    let z = margin / sd;
    (normal_cdf(-z), normal_pdf(z) * 0.5 * z / var)
}

fn default_leaky_slope() -> f64 {
    0.8
}
fn default_eps_current() -> f64 {
    0.2
}
fn default_gate_tau() -> f64 {
    0.02
}
fn default_lambda1() -> f64 {
    1e-3
}
fn default_lambda2() -> f64 {
    1e-8
}
fn default_lambda3() -> f64 {
    1e-5
}

/// Cost weights. `gamma` (the bloom threshold, mg m^-3) has no default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub gamma: f64,
    /// Path-length weight (1/m).
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    /// Current-cost weight.
    #[serde(default = "default_lambda2")]
    pub lambda2: f64,
    /// Wind-cost weight.
    #[serde(default = "default_lambda3")]
    pub lambda3: f64,
    /// LeakyReLU slope for upwind segments.
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
    /// Current magnitude (m/s) at which the current cost switches on.
    #[serde(default = "default_eps_current")]
    pub eps_current: f64,
    /// Width (m/s) of the logistic gate used on the optimizer path.
    #[serde(default = "default_gate_tau")]
    pub gate_tau: f64,
    /// Gate segment `i` on the current at its destination `r_{i+1}` rather
    /// than at its origin `r_i`.
    #[serde(default)]
    pub gate_on_destination: bool,
}

impl CostWeights {
    pub fn new(gamma: f64) -> Self {
        CostWeights {
            gamma,
            lambda1: default_lambda1(),
            lambda2: default_lambda2(),
            lambda3: default_lambda3(),
            leaky_slope: default_leaky_slope(),
            eps_current: default_eps_current(),
            gate_tau: default_gate_tau(),
            gate_on_destination: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma must be finite"));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("eps_current", self.eps_current),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.leaky_slope) {
            return Err(Error::invalid(format!(
                "leaky_slope must lie in [0, 1], got {}",
                self.leaky_slope
            )));
        }
        if !(self.gate_tau > 0.0) {
            return Err(Error::invalid("gate_tau must be > 0"));
        }
        Ok(())
    }
}

/// Gridded current (east/north components, m/s).
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentField {
    pub east: GridField,
    pub north: GridField,
}

impl CurrentField {
    pub fn new(east: GridField, north: GridField) -> Result<Self> {
        if east.res() != north.res() || east.side() != north.side() {
            return Err(Error::invalid("current components must share side and resolution"));
        }
        Ok(CurrentField { east, north })
    }

    pub fn zero(side: f64, res: usize) -> Result<Self> {
        Self::new(GridField::constant(side, res, 0.0)?, GridField::constant(side, res, 0.0)?)
    }

    pub fn uniform(side: f64, res: usize, u: [f64; 2]) -> Result<Self> {
        Self::new(GridField::constant(side, res, u[0])?, GridField::constant(side, res, u[1])?)
    }

    /// Current speed at `p` and its spatial gradient.
    pub fn speed_grad(&self, p: Point2) -> Result<(f64, [f64; 2])> {
        let (ue, ge) = self.east.value_grad_at(p)?;
        let (un, gn) = self.north.value_grad_at(p)?;
        let s = ue.hypot(un);
        if s == 0.0 {
            return Ok((0.0, [0.0, 0.0]));
        }
        Ok((s, [(ue * ge[0] + un * gn[0]) / s, (ue * ge[1] + un * gn[1]) / s]))
    }

    pub fn speed(&self, p: Point2) -> Result<f64> {
        Ok(self.east.value_at(p)?.hypot(self.north.value_at(p)?))
    }
}

/// Environmental forcing for the field-campaign cost.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvForcing {
    pub current: CurrentField,
    /// Mean wind vector (m/s).
    pub wind: [f64; 2],
}

fn segments(r0: Point2, r: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + '_ {
    std::iter::once(r0).chain(r.iter().copied()).zip(r.iter().copied())
}

/// `sum_i |r_{i+1} - r_i|` starting from `r0`.
pub fn path_length(r0: Point2, r: &[Point2]) -> f64 {
    segments(r0, r).map(|(a, b)| a.dist(b)).sum()
}

fn path_length_grad(r0: Point2, r: &[Point2], grad: &mut [f64], scale: f64) {
    for (i, (a, b)) in segments(r0, r).enumerate() {
        let len = a.dist(b);
        if len == 0.0 {
            continue;
        }
        let (ux, uy) = ((b.x - a.x) / len, (b.y - a.y) / len);
        grad[2 * i] += scale * ux;
        grad[2 * i + 1] += scale * uy;
        if i > 0 {
            grad[2 * (i - 1)] -= scale * ux;
            grad[2 * (i - 1) + 1] -= scale * uy;
        }
    }
}

#[inline]
fn leaky(z: f64, slope: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        slope * z
    }
}

/// `-sum_i LeakyReLU((r_{i+1} - r_i) . W)`: downwind legs are rewarded,
/// upwind legs penalized at `slope`.
pub fn wind_cost(r0: Point2, r: &[Point2], wind: [f64; 2], slope: f64) -> f64 {
    -segments(r0, r)
        .map(|(a, b)| leaky((b.x - a.x) * wind[0] + (b.y - a.y) * wind[1], slope))
        .sum::<f64>()
}

fn wind_cost_grad(r0: Point2, r: &[Point2], wind: [f64; 2], slope: f64, grad: &mut [f64], scale: f64) {
    for (i, (a, b)) in segments(r0, r).enumerate() {
        let z = (b.x - a.x) * wind[0] + (b.y - a.y) * wind[1];
        let d = if z >= 0.0 { 1.0 } else { slope };
        grad[2 * i] -= scale * d * wind[0];
        grad[2 * i + 1] -= scale * d * wind[1];
        if i > 0 {
            grad[2 * (i - 1)] += scale * d * wind[0];
            grad[2 * (i - 1) + 1] += scale * d * wind[1];
        }
    }
}

/// How the current-speed threshold is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// Indicator `|u| >= eps`.
    Hard,
    /// Logistic `1 / (1 + exp(-(|u| - eps) / tau))`.
    Smooth { tau: f64 },
}

impl Gate {
    #[inline]
    fn eval(self, speed: f64, eps: f64) -> (f64, f64) {
        match self {
            Gate::Hard => (if speed >= eps { 1.0 } else { 0.0 }, 0.0),
            Gate::Smooth { tau } => {
                let g = 1.0 / (1.0 + (-(speed - eps) / tau).exp());
                (g, g * (1.0 - g) / tau)
            }
        }
    }
}

/// `sum_i gate(|u_i|) |u_{i+1}| |r_{i+1} - r_i|^2` with `u_i` the current
/// at `r_i` (`r_0 = r0`). With `gate_on_destination` the gate reads
/// `|u_{i+1}|` instead.
pub fn current_cost(
    r0: Point2,
    r: &[Point2],
    current: &CurrentField,
    eps: f64,
    gate: Gate,
    gate_on_destination: bool,
) -> Result<f64> {
    current_cost_impl(r0, r, current, eps, gate, gate_on_destination, None)
}

fn current_cost_impl(
    r0: Point2,
    r: &[Point2],
    current: &CurrentField,
    eps: f64,
    gate: Gate,
    gate_on_destination: bool,
    mut grad: Option<(&mut [f64], f64)>,
) -> Result<f64> {
    let pts: Vec<Point2> = std::iter::once(r0).chain(r.iter().copied()).collect();
    let speeds = pts
        .iter()
        .map(|&p| current.speed_grad(p))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for i in 0..r.len() {
        let (a, b) = (pts[i], pts[i + 1]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let d2 = dx * dx + dy * dy;
        let (weight, wgrad) = speeds[i + 1];
        let gi = if gate_on_destination { i + 1 } else { i };
        let (g, dg) = gate.eval(speeds[gi].0, eps);
        total += g * weight * d2;
        if let Some((grad, scale)) = grad.as_mut() {
            let s = *scale;
            // destination r_{i+1} is variable index i
            grad[2 * i] += s * g * (wgrad[0] * d2 + weight * 2.0 * dx);
            grad[2 * i + 1] += s * g * (wgrad[1] * d2 + weight * 2.0 * dy);
            if i > 0 {
                grad[2 * (i - 1)] -= s * g * weight * 2.0 * dx;
                grad[2 * (i - 1) + 1] -= s * g * weight * 2.0 * dy;
            }
            if dg != 0.0 && gi > 0 {
                let sg = speeds[gi].1;
                let v = gi - 1;
                grad[2 * v] += s * dg * sg[0] * weight * d2;
                grad[2 * v + 1] += s * dg * sg[1] * weight * d2;
            }
        }
    }
    Ok(total)
}

/// Reported cost terms at a candidate plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub misclass: f64,
    pub path_len: f64,
    pub current: f64,
    pub wind: f64,
    /// `misclass + lambda1 path_len + lambda2 current + lambda3 wind`.
    pub total: f64,
}

/// The planner's objective for one replanning instant: current belief,
/// start position, weights and optional forcing.
///
/// Construction precomputes everything that does not depend on the
/// waypoints (posterior mean and variance on the optimization grid, and for
/// exact look-ahead the whitened data cross-covariances).
#[derive(Debug, Clone)]
pub struct Objective {
    lookahead: LookaheadField,
    /// `|mu(x | D) - gamma|` per optimization node.
    margin: Vec<f64>,
    weights: CostWeights,
    forcing: Option<EnvForcing>,
    r0: Point2,
}

impl Objective {
    pub fn new(
        model: &GpModel,
        r0: Point2,
        weights: CostWeights,
        forcing: Option<EnvForcing>,
        mode: VarianceMode,
        lookahead_noise_sd: f64,
    ) -> Result<Self> {
        weights.validate()?;
        model.grid().check(r0)?;
        let nodes = model.grid().nodes(GridKind::Opt);
        let margin = nodes
            .iter()
            .map(|&p| Ok((model.posterior_mean(p)? - weights.gamma).abs()))
            .collect::<Result<Vec<_>>>()?;
        let lookahead = LookaheadField::new(model, nodes, mode, lookahead_noise_sd)?;
        Ok(Objective {
            lookahead,
            margin,
            weights,
            forcing,
            r0,
        })
    }

    pub fn r0(&self) -> Point2 {
        self.r0
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn forcing(&self) -> Option<&EnvForcing> {
        self.forcing.as_ref()
    }

    /// Kernel length scale of the belief (m).
    pub fn length_scale(&self) -> f64 {
        self.lookahead.kernel().ell
    }

    pub fn nodes(&self) -> &[Point2] {
        self.lookahead.points()
    }

    /// Summed misclassification probability under the look-ahead variance.
    pub fn misclass(&self, r: &[Point2]) -> Result<f64> {
        let vars = self.lookahead.variances(r)?;
        Ok(self
            .margin
            .iter()
            .zip(&vars)
            .map(|(&a, &v)| misclass_from_var(a, v).0)
            .sum())
    }

    /// Value and gradient of the summed misclassification probability.
    pub fn misclass_with_grad(&self, r: &[Point2]) -> Result<(f64, Vec<f64>)> {
        let mut total = 0.0;
        let (_, grad) = self.lookahead.variances_with_grad(r, |g, v| {
            let (p, dp) = misclass_from_var(self.margin[g], v);
            total += p;
            dp
        })?;
        Ok((total, grad))
    }

    fn gate(&self) -> Gate {
        Gate::Smooth {
            tau: self.weights.gate_tau,
        }
    }

    /// Smooth objective (the one the solver minimizes) at flattened
    /// waypoints, with its gradient.
    pub fn value_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = unflatten(z);
        let w = &self.weights;
        let (mut value, mut grad) = self.misclass_with_grad(&r)?;
        if w.lambda1 != 0.0 {
            value += w.lambda1 * path_length(self.r0, &r);
            path_length_grad(self.r0, &r, &mut grad, w.lambda1);
        }
        if let Some(f) = &self.forcing {
            if w.lambda2 != 0.0 {
                value += w.lambda2
                    * current_cost_impl(
                        self.r0,
                        &r,
                        &f.current,
                        w.eps_current,
                        self.gate(),
                        w.gate_on_destination,
                        Some((&mut grad, w.lambda2)),
                    )?;
            }
            if w.lambda3 != 0.0 {
                value += w.lambda3 * wind_cost(self.r0, &r, f.wind, w.leaky_slope);
                wind_cost_grad(self.r0, &r, f.wind, w.leaky_slope, &mut grad, w.lambda3);
            }
        }
        Ok((value, grad))
    }

    /// Smooth objective value.
    pub fn value(&self, r: &[Point2]) -> Result<f64> {
        let w = &self.weights;
        let mut value = self.misclass(r)?;
        value += w.lambda1 * path_length(self.r0, r);
        if let Some(f) = &self.forcing {
            if w.lambda2 != 0.0 {
                value += w.lambda2
                    * current_cost(self.r0, r, &f.current, w.eps_current, self.gate(), w.gate_on_destination)?;
            }
            value += w.lambda3 * wind_cost(self.r0, r, f.wind, w.leaky_slope);
        }
        Ok(value)
    }

    /// Reported cost terms, with the hard current gate.
    pub fn breakdown(&self, r: &[Point2]) -> Result<CostBreakdown> {
        let w = &self.weights;
        let misclass = self.misclass(r)?;
        let path_len = path_length(self.r0, r);
        let (current, wind) = match &self.forcing {
            Some(f) => (
                current_cost(self.r0, r, &f.current, w.eps_current, Gate::Hard, w.gate_on_destination)?,
                wind_cost(self.r0, r, f.wind, w.leaky_slope),
            ),
            None => (0.0, 0.0),
        };
        Ok(CostBreakdown {
            misclass,
            path_len,
            current,
            wind,
            total: misclass + w.lambda1 * path_len + w.lambda2 * current + w.lambda3 * wind,
        })
    }
}

/// Summed misclassification probability over the optimization grid after
/// sampling `r`.
pub fn total_misclass(
    model: &GpModel,
    r: &[Point2],
    gamma: f64,
    mode: VarianceMode,
    lookahead_noise_sd: f64,
) -> Result<f64> {
    let weights = CostWeights::new(gamma);
    Objective::new(model, Point2::ORIGIN, weights, None, mode, lookahead_noise_sd)?.misclass(r)
}

/// Smooth objective and gradient with respect to the flattened waypoints.
pub fn objective_value_and_grad(
    model: &GpModel,
    r0: Point2,
    r: &[Point2],
    weights: CostWeights,
    forcing: Option<EnvForcing>,
    mode: VarianceMode,
    lookahead_noise_sd: f64,
) -> Result<(f64, Vec<f64>)> {
    Objective::new(model, r0, weights, forcing, mode, lookahead_noise_sd)?.value_and_grad(&flatten(r))
}
