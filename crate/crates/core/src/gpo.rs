//! Gaussian-process optimisation of a particle-filter log-likelihood.
//!
//! Each iteration runs one particle filter at the current iterate, refits the
//! surrogate on all estimates so far and moves to the maximizer of expected
//! improvement. The final estimate maximizes the posterior mean over the box.

use serde::Serialize;

use crate::acquisition::{self, AcquisitionConfig};
use crate::direct::{self, DirectConfig};
use crate::error::{Error, Result};
use crate::gp::{self, FitConfig, GpHyperparams, GpPosterior, IterateSet};
use crate::particle::{estimate_loglik, Resampling};
use crate::ssm::{BoxDomain, ObservationSeries, StateSpaceModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpoConfig {
    pub iterations: usize,
    pub particles: usize,
    pub theta1: Vec<f64>,
    pub zeta: f64,
    pub seed: u64,
    /// Replacement for degenerate estimates; `None` uses the adaptive floor.
    pub loglik_floor: Option<f64>,
    pub resampling: Resampling,
    pub fit: FitConfig,
    pub direct: DirectConfig,
    /// DIRECT budget for the final posterior-mean maximization.
    pub final_max_evals: usize,
}

impl GpoConfig {
    pub fn new(iterations: usize, particles: usize, theta1: Vec<f64>, seed: u64) -> Self {
        Self {
            iterations,
            particles,
            theta1,
            zeta: 0.01,
            seed,
            loglik_floor: None,
            resampling: Resampling::Systematic,
            fit: FitConfig::default(),
            direct: DirectConfig::default(),
            final_max_evals: 500,
        }
    }

    pub fn validate(&self, domain: &BoxDomain) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidInput("need at least one iteration".into()));
        }
        if self.particles == 0 {
            return Err(Error::InvalidInput("need at least one particle".into()));
        }
        if !(self.zeta.is_finite() && self.zeta >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid zeta {}", self.zeta)));
        }
        domain.check(&self.theta1)
    }
}

/// What happened at iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationDiagnostics {
    pub k: usize,
    pub theta: Vec<f64>,
    /// Value entered into the design set (after the degenerate floor).
    pub loglik_hat: f64,
    pub degenerate: bool,
    pub mu_max: f64,
    pub ei_max: f64,
    pub next_theta: Vec<f64>,
    pub hyper: GpHyperparams,
}

#[derive(Debug, Clone)]
pub struct GpoResult {
    pub theta_hat: Vec<f64>,
    pub mu_hat: f64,
    pub history: IterateSet,
    pub per_iteration: Vec<IterationDiagnostics>,
    pub final_posterior: GpPosterior,
    pub loglik_evaluations: usize,
}

impl GpoResult {
    /// Surrogate as it stood after iteration `k` (1-based).
    pub fn posterior_at(&self, k: usize) -> Result<GpPosterior> {
        if k == 0 || k > self.per_iteration.len() {
            return Err(Error::InvalidInput(format!(
                "iteration {k} outside 1..={}",
                self.per_iteration.len()
            )));
        }
        GpPosterior::new(
            self.history.prefix(k),
            self.per_iteration[k - 1].hyper.clone(),
        )
    }

    pub fn n_degenerate(&self) -> usize {
        self.per_iteration.iter().filter(|d| d.degenerate).count()
    }
}

/// PF seed used at iteration `k`.
pub fn iteration_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

fn floor_value(history: &IterateSet) -> f64 {
    history
        .values()
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
        .map_or(-1e10, |m| m - 100.0)
}

/// Runs the optimisation loop against an arbitrary noisy objective
/// `f(θ, seed)`; `-inf` marks a degenerate evaluation.
pub fn run_gpo_with(
    domain: &BoxDomain,
    config: &GpoConfig,
    mut objective: impl FnMut(&[f64], u64) -> Result<f64>,
) -> Result<GpoResult> {
    config.validate(domain)?;
    let acq_config = AcquisitionConfig {
        zeta: config.zeta,
        inner_max_evals: config.direct.max_evals,
    };
    let mut history = IterateSet::new();
    let mut per_iteration = Vec::with_capacity(config.iterations);
    let mut theta = config.theta1.clone();
    let mut hyper: Option<GpHyperparams> = None;
    let mut evaluations = 0;
    let mut posterior = None;

    for k in 1..=config.iterations {
        let raw = objective(&theta, iteration_seed(config.seed, k))?;
        evaluations += 1;
        let degenerate = !raw.is_finite();
        let value = if degenerate {
            config.loglik_floor.unwrap_or_else(|| floor_value(&history))
        } else {
            raw
        };
        history.push(theta.clone(), value)?;

        let init = match &hyper {
            Some(h) if history.len() > config.fit.k_min => h.clone(),
            _ => gp::default_hyperparams(&history, domain, config.fit.noise_floor),
        };
        let post = gp::fit(&history, domain, &init, &config.fit)?;
        let acq = acquisition::next_iterate(&post, domain, &acq_config, &config.direct);
        hyper = Some(post.hyper().clone());
        per_iteration.push(IterationDiagnostics {
            k,
            theta: theta.clone(),
            loglik_hat: value,
            degenerate,
            mu_max: acq.mu_max,
            ei_max: acq.ei,
            next_theta: acq.theta.clone(),
            hyper: post.hyper().clone(),
        });
        theta = acq.theta;
        posterior = Some(post);
    }

    let final_posterior = posterior.expect("at least one iteration");
    let final_cfg = DirectConfig {
        max_evals: config.final_max_evals,
        ..config.direct
    };
    let best = direct::maximize(|t| final_posterior.mean(t), domain, &final_cfg);
    Ok(GpoResult {
        theta_hat: best.theta,
        mu_hat: best.value,
        history,
        per_iteration,
        final_posterior,
        loglik_evaluations: evaluations,
    })
}

/// Runs the optimisation loop with a bootstrap particle filter as the objective.
pub fn run_gpo(
    model: &dyn StateSpaceModel,
    y: &ObservationSeries,
    config: &GpoConfig,
) -> Result<GpoResult> {
    run_gpo_with(model.domain(), config, |theta, seed| {
        let est = estimate_loglik(model, theta, y, config.particles, seed, config.resampling)?;
        Ok(est.value)
    })
}

/// One row of a surrogate surface dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub theta: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub ei: f64,
}

/// Regular grid over a box of at most two dimensions, row-major in the
/// first coordinate.
pub fn grid(domain: &BoxDomain, points: usize) -> Result<Vec<Vec<f64>>> {
    if domain.dim() > 2 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    if points < 2 {
        return Err(Error::InvalidInput(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    let axis = |i: usize| -> Vec<f64> {
        (0..points)
            .map(|j| domain.lower()[i] + domain.width(i) * j as f64 / (points - 1) as f64)
            .collect()
    };
    Ok(match domain.dim() {
        1 => axis(0).into_iter().map(|t| vec![t]).collect(),
        _ => {
            let (a, b) = (axis(0), axis(1));
            a.iter()
                .flat_map(|&x| b.iter().map(move |&y| vec![x, y]))
                .collect()
        }
    })
}

/// Posterior mean, latent standard deviation and EI on a grid.
pub fn surface(
    post: &GpPosterior,
    domain: &BoxDomain,
    points: usize,
    zeta: f64,
) -> Result<Vec<SurfaceRow>> {
    let mm = acquisition::mu_max(post);
    Ok(grid(domain, points)?
        .into_iter()
        .map(|theta| {
            let p = post.predict(&theta);
            let ei = acquisition::ei_from_moments(p.mu, p.sd_latent(), mm, zeta);
            SurfaceRow {
                mu: p.mu,
                sigma: p.sd_latent(),
                ei,
                theta,
            }
        })
        .collect())
}

/// Surface of the surrogate after iteration `k`.
pub fn emit_diagnostics(
    result: &GpoResult,
    domain: &BoxDomain,
    k: usize,
    grid_points: usize,
    zeta: f64,
) -> Result<Vec<SurfaceRow>> {
    if domain.dim() > 2 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    surface(&result.posterior_at(k)?, domain, grid_points, zeta)
}

/// First 1-based position in `iterates` whose every coordinate is within
/// `radius` of `target`.
pub fn first_hit(iterates: &[Vec<f64>], target: &[f64], radius: f64) -> Option<usize> {
    iterates
        .iter()
        .position(|t| t.iter().zip(target).all(|(a, b)| (a - b).abs() <= radius))
        .map(|i| i + 1)
}
