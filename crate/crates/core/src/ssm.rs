//! Parametric state-space models with a scalar latent state.
//!
//! A model is a Markov chain `x_t ~ f_θ(· | x_{t-1})` started from a known
//! `x_0`, observed through `y_t ~ g_θ(· | x_t)`. The particle filter only needs
//! to sample the transition and evaluate the observation density; the extra
//! methods support simulation and the quadrature tests.

use std::ops::Deref;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("parameter vector is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite parameter {v}")));
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Axis-aligned parameter box `[lower, upper]` (closed).
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidInput("domain has zero dimensions".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidInput(format!("invalid bounds [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| t >= l && t <= u)
    }

    /// Validates dimension and membership.
    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        if !self.contains(theta) {
            return Err(Error::DomainViolation {
                theta: theta.to_vec(),
                lower: self.lower.clone(),
                upper: self.upper.clone(),
            });
        }
        Ok(())
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (i, t) in theta.iter_mut().enumerate() {
            *t = t.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Maps a point of the unit hypercube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, ui)| (self.lower[i] + ui * self.width(i)).clamp(self.lower[i], self.upper[i]))
            .collect()
    }

    pub fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, t)| (t - self.lower[i]) / self.width(i))
            .collect()
    }
}

/// Observed series `y_{1:T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries(Vec<f64>);

impl ObservationSeries {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("observation series is empty".into()));
        }
        if let Some((t, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite observation {v} at t={}",
                t + 1
            )));
        }
        Ok(Self(y))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Deref for ObservationSeries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A state-space model with scalar state and scalar observations.
///
/// Implementations are immutable and shared across threads; all randomness
/// comes from the caller's stream.
pub trait StateSpaceModel: Send + Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> &BoxDomain;

    fn param_dim(&self) -> usize {
        self.domain().dim()
    }

    fn initial_state(&self) -> f64 {
        0.0
    }

    /// Draws `x_t ~ f_θ(· | x_prev)`.
    fn sample_transition(&self, theta: &[f64], x_prev: f64, rng: &mut SimRng) -> f64;

    /// Draws `y_t ~ g_θ(· | x)`.
    fn sample_observation(&self, theta: &[f64], x: f64, rng: &mut SimRng) -> f64;

    /// `log g_θ(y | x)`; `-inf` on underflow, never NaN.
    fn observation_logdensity(&self, theta: &[f64], x: f64, y: f64) -> f64;

    /// `log f_θ(x | x_prev)` where the model provides it.
    fn transition_logdensity(&self, _theta: &[f64], _x: f64, _x_prev: f64) -> Option<f64> {
        None
    }
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// `x_t ~ N(θ x_{t-1}, 1)`, `y_t ~ N(x_t, 0.1²)`, `θ ∈ [-1, 1]`.
#[derive(Debug, Clone)]
pub struct Lgss {
    domain: BoxDomain,
}

impl Lgss {
    pub const OBS_STD: f64 = 0.1;

    pub fn new() -> Self {
        Self {
            domain: BoxDomain::new(vec![-1.0], vec![1.0]).expect("static bounds"),
        }
    }
}

impl Default for Lgss {
    fn default() -> Self {
        Self::new()
    }
}

impl StateSpaceModel for Lgss {
    fn name(&self) -> &str {
        "lgss"
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn sample_transition(&self, theta: &[f64], x_prev: f64, rng: &mut SimRng) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        theta[0] * x_prev + e
    }

    fn sample_observation(&self, _theta: &[f64], x: f64, rng: &mut SimRng) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        x + Self::OBS_STD * e
    }

    fn observation_logdensity(&self, _theta: &[f64], x: f64, y: f64) -> f64 {
        normal_logpdf(y, x, Self::OBS_STD * Self::OBS_STD)
    }

    fn transition_logdensity(&self, theta: &[f64], x: f64, x_prev: f64) -> Option<f64> {
        Some(normal_logpdf(x, theta[0] * x_prev, 1.0))
    }
}

/// Hull-White stochastic volatility:
/// `x_t ~ N(θ₁ x_{t-1}, θ₂²)`, `y_t ~ N(0, 0.7² exp(x_t))`, `θ ∈ [-1,1]×[0,2]`.
///
/// At `θ₂ = 0` the transition is the deterministic map `x ↦ θ₁ x`.
#[derive(Debug, Clone)]
pub struct HullWhite {
    domain: BoxDomain,
}

impl HullWhite {
    pub const OBS_SCALE: f64 = 0.7;

    pub fn new() -> Self {
        Self {
            domain: BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).expect("static bounds"),
        }
    }
}

impl Default for HullWhite {
    fn default() -> Self {
        Self::new()
    }
}

impl StateSpaceModel for HullWhite {
    fn name(&self) -> &str {
        "hullwhite"
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn sample_transition(&self, theta: &[f64], x_prev: f64, rng: &mut SimRng) -> f64 {
        let mean = theta[0] * x_prev;
        if theta[1] == 0.0 {
            return mean;
        }
        let e: f64 = rng.sample(StandardNormal);
        mean + theta[1] * e
    }

    fn sample_observation(&self, _theta: &[f64], x: f64, rng: &mut SimRng) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        Self::OBS_SCALE * (0.5 * x).exp() * e
    }

    fn observation_logdensity(&self, _theta: &[f64], x: f64, y: f64) -> f64 {
        let s2 = Self::OBS_SCALE * Self::OBS_SCALE;
        // y² e^{-x} overflows for very negative x; 0·inf must not become NaN.
        let quad = if y == 0.0 {
            0.0
        } else {
            0.5 * y * y / s2 * (-x).exp()
        };
        let v = -0.5 * (LN_2PI + s2.ln() + x) - quad;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn transition_logdensity(&self, theta: &[f64], x: f64, x_prev: f64) -> Option<f64> {
        let mean = theta[0] * x_prev;
        if theta[1] == 0.0 {
            return Some(if x == mean {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            });
        }
        Some(normal_logpdf(x, mean, theta[1] * theta[1]))
    }
}

pub const MODEL_NAMES: [&str; 2] = ["lgss", "hullwhite"];

/// Looks up a built-in model by its registry name.
pub fn model_by_name(name: &str) -> Result<Box<dyn StateSpaceModel>> {
    match name {
        "lgss" => Ok(Box::new(Lgss::new())),
        "hullwhite" | "hull-white" => Ok(Box::new(HullWhite::new())),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Simulated latent path and observations.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub states: Vec<f64>,
    pub observations: ObservationSeries,
}

/// Forward-simulates `T` steps of the model from `x_0`.
pub fn simulate(
    model: &dyn StateSpaceModel,
    theta: &[f64],
    steps: usize,
    seed: u64,
) -> Result<Simulation> {
    model.domain().check(theta)?;
    if steps == 0 {
        return Err(Error::InvalidInput("T must be at least 1".into()));
    }
    let mut rng = seeded(seed);
    let mut states = Vec::with_capacity(steps);
    let mut ys = Vec::with_capacity(steps);
    let mut x = model.initial_state();
    for _ in 0..steps {
        x = model.sample_transition(theta, x, &mut rng);
        states.push(x);
        ys.push(model.sample_observation(theta, x, &mut rng));
    }
    Ok(Simulation {
        states,
        observations: ObservationSeries::new(ys)?,
    })
}
