//! Simultaneous-perturbation stochastic approximation (ascent).
//!
//! Gains follow the standard sequences `a_k = a / (A + k + 1)^α` and
//! `c_k = c / (k + 1)^γ`; the gradient is estimated from two evaluations at
//! `θ ± c_k Δ` with Rademacher `Δ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::ssm::BoxDomain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    pub a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Stability constant `A`.
    pub stability: f64,
    pub iterations: usize,
}

impl SpsaConfig {
    /// Recommended exponents with `A` at 10% of the budget.
    pub fn new(iterations: usize) -> Self {
        Self {
            a: 0.03,
            c: 0.04,
            alpha: 0.602,
            gamma: 0.101,
            stability: 0.1 * iterations as f64,
            iterations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a >= 0.0
            && self.a.is_finite()
            && self.c > 0.0
            && self.c.is_finite()
            && self.stability >= 0.0
            && 0.0 < self.gamma
            && self.gamma < self.alpha
            && self.alpha <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid SPSA settings {self:?}"
            )))
        }
    }

    pub fn gain(&self, k: usize) -> f64 {
        self.a / (self.stability + k as f64 + 1.0).powf(self.alpha)
    }

    pub fn perturbation(&self, k: usize) -> f64 {
        self.c / (k as f64 + 1.0).powf(self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpsaTrace {
    /// `θ_0, θ_1, …, θ_K`.
    pub iterates: Vec<Vec<f64>>,
    pub loglik_evals: usize,
    /// Objective seeds, two per iteration.
    pub seeds: Vec<u64>,
    /// Iterations where an evaluation was `-inf` and θ was left unchanged.
    pub skipped: usize,
}

/// Seeds passed to the objective at iteration `k` (plus side, minus side).
pub fn evaluation_seeds(seed: u64, k: usize) -> (u64, u64) {
    let base = seed.wrapping_add(2 * k as u64 + 1);
    (base, base.wrapping_add(1))
}

/// Two-sided simultaneous-perturbation gradient estimate.
pub fn gradient_estimate(f_plus: f64, f_minus: f64, ck: f64, delta: &[f64]) -> Vec<f64> {
    delta
        .iter()
        .map(|d| (f_plus - f_minus) / (2.0 * ck * d))
        .collect()
}

/// Maximizes a noisy objective `f(θ, seed)` over the box.
pub fn run_spsa(
    mut objective: impl FnMut(&[f64], u64) -> f64,
    theta0: &[f64],
    domain: &BoxDomain,
    config: &SpsaConfig,
    seed: u64,
) -> Result<SpsaTrace> {
    config.validate()?;
    domain.check(theta0)?;
    let d = theta0.len();
    let mut rng = seeded(seed);
    let mut theta = theta0.to_vec();
    let mut trace = SpsaTrace {
        iterates: vec![theta.clone()],
        loglik_evals: 0,
        seeds: Vec::with_capacity(2 * config.iterations),
        skipped: 0,
    };
    for k in 0..config.iterations {
        let ak = config.gain(k);
        let ck = config.perturbation(k);
        let delta: Vec<f64> = (0..d)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, s)| t + ck * s).collect();
        let mut minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, s)| t - ck * s).collect();
        domain.clamp(&mut plus);
        domain.clamp(&mut minus);
        let (sp, sm) = evaluation_seeds(seed, k);
        let fp = objective(&plus, sp);
        let fm = objective(&minus, sm);
        trace.seeds.extend([sp, sm]);
        trace.loglik_evals += 2;
        if fp.is_finite() && fm.is_finite() {
            let g = gradient_estimate(fp, fm, ck, &delta);
            for (t, gi) in theta.iter_mut().zip(&g) {
                *t += ak * gi;
            }
            domain.clamp(&mut theta);
        } else {
            trace.skipped += 1;
        }
        trace.iterates.push(theta.clone());
    }
    Ok(trace)
}
