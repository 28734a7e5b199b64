//! Bootstrap particle filter for log-likelihood estimation.
//!
//! Particles start at the known `x_0`. At every step they are propagated
//! through the transition kernel and weighted by the observation density; from
//! the second step on they are first resampled according to the previous
//! weights. The estimate is `Σ_t log Σ_i w_t^(i) − T log N`, with all weight
//! arithmetic kept in log space.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};
use crate::ssm::{ObservationSeries, StateSpaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Systematic,
    Multinomial,
}

impl std::str::FromStr for Resampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "systematic" => Ok(Self::Systematic),
            "multinomial" => Ok(Self::Multinomial),
            other => Err(Error::InvalidInput(format!(
                "unknown resampling scheme `{other}`"
            ))),
        }
    }
}

/// Particle states with their unnormalised log-weights.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub states: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl ParticleSystem {
    pub fn new(n: usize, x0: f64) -> Self {
        Self {
            states: vec![x0; n],
            log_weights: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// True when every weight has underflowed to zero.
    pub fn is_degenerate(&self) -> bool {
        self.log_weights.iter().all(|w| *w == f64::NEG_INFINITY)
    }
}

/// A single noisy evaluation of the log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikEstimate {
    /// `-inf` when the particle system degenerated.
    pub value: f64,
    pub n_particles: usize,
    pub seed: u64,
    /// `log Σ_i w_t^(i)` for each completed step.
    pub per_step_logsum: Vec<f64>,
    pub degenerate: bool,
}

/// `log Σ exp(v)`, `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn normalised_weights(log_weights: &[f64], out: &mut Vec<f64>) -> Result<()> {
    let m = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::Degenerate);
    }
    out.clear();
    out.extend(log_weights.iter().map(|w| (w - m).exp()));
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= s);
    Ok(())
}

/// Draws `N = log_weights.len()` ancestor indices.
pub fn resample(log_weights: &[f64], rng: &mut SimRng, scheme: Resampling) -> Result<Vec<usize>> {
    let mut idx = Vec::with_capacity(log_weights.len());
    let mut scratch = Vec::with_capacity(log_weights.len());
    resample_into(log_weights, rng, scheme, &mut scratch, &mut idx)?;
    Ok(idx)
}

fn resample_into(
    log_weights: &[f64],
    rng: &mut SimRng,
    scheme: Resampling,
    scratch: &mut Vec<f64>,
    out: &mut Vec<usize>,
) -> Result<()> {
    let n = log_weights.len();
    normalised_weights(log_weights, scratch)?;
    out.clear();
    match scheme {
        Resampling::Systematic => {
            let u0: f64 = rng.random::<f64>() / n as f64;
            let step = 1.0 / n as f64;
            let mut cum = scratch[0];
            let mut i = 0;
            for j in 0..n {
                let u = u0 + j as f64 * step;
                while u > cum && i + 1 < n {
                    i += 1;
                    cum += scratch[i];
                }
                out.push(i);
            }
        }
        Resampling::Multinomial => {
            let mut us: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            us.sort_by(f64::total_cmp);
            let mut cum = scratch[0];
            let mut i = 0;
            for u in us {
                while u >= cum && i + 1 < n {
                    i += 1;
                    cum += scratch[i];
                }
                out.push(i);
            }
        }
    }
    // Rounding in the cumulative sum can land on a zero-weight particle at the tail.
    for k in out.iter_mut() {
        while scratch[*k] == 0.0 && *k > 0 {
            *k -= 1;
        }
        if scratch[*k] == 0.0 {
            *k = scratch.iter().position(|w| *w > 0.0).unwrap_or(0);
        }
    }
    Ok(())
}

/// Runs the bootstrap filter and returns `ℓ̂(θ)`.
pub fn estimate_loglik(
    model: &dyn StateSpaceModel,
    theta: &[f64],
    y: &ObservationSeries,
    n_particles: usize,
    seed: u64,
    scheme: Resampling,
) -> Result<LogLikEstimate> {
    if n_particles == 0 {
        return Err(Error::InvalidInput("need at least one particle".into()));
    }
    model.domain().check(theta)?;
    let mut rng = seeded(seed);
    let mut ps = ParticleSystem::new(n_particles, model.initial_state());
    let mut ancestors = Vec::with_capacity(n_particles);
    let mut scratch = Vec::with_capacity(n_particles);
    let mut buffer = vec![0.0; n_particles];
    let mut per_step = Vec::with_capacity(y.len());
    let log_n = (n_particles as f64).ln();

    for (t, &yt) in y.iter().enumerate() {
        if t > 0 {
            resample_into(
                &ps.log_weights,
                &mut rng,
                scheme,
                &mut scratch,
                &mut ancestors,
            )?;
            for (b, &a) in buffer.iter_mut().zip(&ancestors) {
                *b = ps.states[a];
            }
            std::mem::swap(&mut buffer, &mut ps.states);
        }
        for x in ps.states.iter_mut() {
            *x = model.sample_transition(theta, *x, &mut rng);
        }
        for (w, &x) in ps.log_weights.iter_mut().zip(&ps.states) {
            let lw = model.observation_logdensity(theta, x, yt);
            *w = if lw.is_nan() { f64::NEG_INFINITY } else { lw };
        }
        let ls = log_sum_exp(&ps.log_weights);
        per_step.push(ls);
        if ls == f64::NEG_INFINITY {
            return Ok(LogLikEstimate {
                value: f64::NEG_INFINITY,
                n_particles,
                seed,
                per_step_logsum: per_step,
                degenerate: true,
            });
        }
    }
    let value = per_step.iter().sum::<f64>() - y.len() as f64 * log_n;
    Ok(LogLikEstimate {
        value,
        n_particles,
        seed,
        per_step_logsum: per_step,
        degenerate: false,
    })
}

/// Independent replicates of the estimator.
#[derive(Debug, Clone)]
pub struct Replicates {
    pub estimates: Vec<LogLikEstimate>,
}

impl Replicates {
    /// All values, including `-inf` sentinels for degenerate runs.
    pub fn values(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.value).collect()
    }

    pub fn finite_values(&self) -> Vec<f64> {
        self.estimates
            .iter()
            .filter(|e| !e.degenerate)
            .map(|e| e.value)
            .collect()
    }

    pub fn n_degenerate(&self) -> usize {
        self.estimates.iter().filter(|e| e.degenerate).count()
    }
}

/// `n_reps` runs with seeds `base_seed, base_seed + 1, …`, computed in parallel.
#[allow(clippy::too_many_arguments)]
pub fn replicate_loglik(
    model: &dyn StateSpaceModel,
    theta: &[f64],
    y: &ObservationSeries,
    n_particles: usize,
    n_reps: usize,
    base_seed: u64,
    scheme: Resampling,
) -> Result<Replicates> {
    if n_reps < 2 {
        return Err(Error::InvalidInput("need at least 2 replicates".into()));
    }
    let estimates = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| {
            estimate_loglik(
                model,
                theta,
                y,
                n_particles,
                base_seed.wrapping_add(r),
                scheme,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replicates { estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::kalman_loglik;
    use crate::ssm::{simulate, BoxDomain, Lgss};

    struct FlatObservation {
        domain: BoxDomain,
    }

    impl StateSpaceModel for FlatObservation {
        fn name(&self) -> &str {
            "flat"
        }
        fn domain(&self) -> &BoxDomain {
            &self.domain
        }
        fn sample_transition(&self, theta: &[f64], x: f64, rng: &mut SimRng) -> f64 {
            theta[0] * x + rng.random::<f64>()
        }
        fn sample_observation(&self, _: &[f64], _: f64, rng: &mut SimRng) -> f64 {
            rng.random::<f64>()
        }
        fn observation_logdensity(&self, _: &[f64], _: f64, y: f64) -> f64 {
            -0.5 * ((2.0 * std::f64::consts::PI).ln() + y * y)
        }
    }

    fn lgss_data(seed: u64, t: usize) -> ObservationSeries {
        simulate(&Lgss::new(), &[0.5], t, seed)
            .unwrap()
            .observations
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, f64::NEG_INFINITY]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn systematic_equal_weights_selects_each_once() {
        let mut rng = seeded(1);
        let idx = resample(&[0.3; 8], &mut rng, Resampling::Systematic).unwrap();
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn point_mass_resampling() {
        for scheme in [Resampling::Systematic, Resampling::Multinomial] {
            let mut lw = vec![f64::NEG_INFINITY; 10];
            lw[6] = 0.0;
            let idx = resample(&lw, &mut seeded(2), scheme).unwrap();
            assert!(idx.iter().all(|&i| i == 6), "{scheme:?}: {idx:?}");
        }
    }

    #[test]
    fn all_minus_infinity_is_degenerate() {
        let lw = vec![f64::NEG_INFINITY; 4];
        assert!(matches!(
            resample(&lw, &mut seeded(0), Resampling::Systematic),
            Err(Error::Degenerate)
        ));
    }

    #[test]
    fn multinomial_offspring_fractions() {
        let n = 300_000;
        let mut lw = vec![(2.0f64 / 3.0).ln(); n];
        for w in lw.iter_mut().skip(n / 2) {
            *w = (1.0f64 / 3.0).ln();
        }
        // first half carries 2/3 of the total mass
        let idx = resample(&lw, &mut seeded(3), Resampling::Multinomial).unwrap();
        let first = idx.iter().filter(|&&i| i < n / 2).count() as f64 / n as f64;
        assert!((first - 2.0 / 3.0).abs() < 0.005, "{first}");
    }

    #[test]
    fn systematic_counts_within_one_of_expectation() {
        let lw: Vec<f64> = (0..50).map(|i| (1.0 + (i % 7) as f64).ln()).collect();
        let total: f64 = lw.iter().map(|w| w.exp()).sum();
        let idx = resample(&lw, &mut seeded(5), Resampling::Systematic).unwrap();
        for (i, w) in lw.iter().enumerate() {
            let count = idx.iter().filter(|&&k| k == i).count() as f64;
            let expected = 50.0 * w.exp() / total;
            assert!(
                (count - expected).abs() < 1.0 + 1e-9,
                "particle {i}: {count} vs {expected}"
            );
        }
    }

    #[test]
    fn state_independent_observation_gives_exact_likelihood() {
        let model = FlatObservation {
            domain: BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
        };
        let y = ObservationSeries::new(vec![0.3, -1.0, 2.2, 0.0]).unwrap();
        let exact: f64 = y
            .iter()
            .map(|v| -0.5 * ((2.0 * std::f64::consts::PI).ln() + v * v))
            .sum();
        for seed in 0..5 {
            let e = estimate_loglik(&model, &[0.4], &y, 100, seed, Resampling::Systematic).unwrap();
            assert!((e.value - exact).abs() < 1e-10, "{}", e.value);
        }
    }

    #[test]
    fn single_particle_is_finite() {
        let y = lgss_data(0, 50);
        let e = estimate_loglik(&Lgss::new(), &[0.5], &y, 1, 9, Resampling::Systematic).unwrap();
        assert!(e.value.is_finite());
        assert!(!e.degenerate);
    }

    #[test]
    fn value_equals_per_step_sum() {
        let y = lgss_data(1, 30);
        let e = estimate_loglik(&Lgss::new(), &[0.5], &y, 64, 2, Resampling::Multinomial).unwrap();
        let s: f64 = e.per_step_logsum.iter().sum::<f64>() - 30.0 * 64f64.ln();
        assert_eq!(e.value, s);
        assert_eq!(e.per_step_logsum.len(), 30);
    }

    #[test]
    fn rejects_bad_inputs() {
        let y = lgss_data(1, 5);
        assert!(estimate_loglik(&Lgss::new(), &[0.5], &y, 0, 0, Resampling::Systematic).is_err());
        assert!(matches!(
            estimate_loglik(&Lgss::new(), &[2.0], &y, 10, 0, Resampling::Systematic),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn degenerate_run_is_flagged() {
        struct Impossible(BoxDomain);
        impl StateSpaceModel for Impossible {
            fn name(&self) -> &str {
                "impossible"
            }
            fn domain(&self) -> &BoxDomain {
                &self.0
            }
            fn sample_transition(&self, _: &[f64], x: f64, _: &mut SimRng) -> f64 {
                x
            }
            fn sample_observation(&self, _: &[f64], x: f64, _: &mut SimRng) -> f64 {
                x
            }
            fn observation_logdensity(&self, _: &[f64], _: f64, y: f64) -> f64 {
                if y > 1.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
        }
        let m = Impossible(BoxDomain::new(vec![0.0], vec![1.0]).unwrap());
        let y = ObservationSeries::new(vec![0.0, 0.5, 3.0, 0.0]).unwrap();
        let e = estimate_loglik(&m, &[0.5], &y, 10, 0, Resampling::Systematic).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.value, f64::NEG_INFINITY);
        assert_eq!(e.per_step_logsum.len(), 3);
    }

    #[test]
    fn tiny_densities_stay_finite() {
        // Observations far from every particle push densities towards 1e-300.
        let y = ObservationSeries::new(vec![8.0, -2.0, 3.7, 0.0, 3.8]).unwrap();
        let e = estimate_loglik(&Lgss::new(), &[0.0], &y, 200, 1, Resampling::Systematic).unwrap();
        assert!(e.value.is_finite());
        assert!(e.per_step_logsum.iter().any(|&v| v < (1e-100f64).ln()));
    }

    #[test]
    fn replicate_reproducible_and_sized() {
        let y = lgss_data(2, 20);
        let a =
            replicate_loglik(&Lgss::new(), &[0.5], &y, 50, 2, 10, Resampling::Systematic).unwrap();
        assert_eq!(a.values().len(), 2);
        let b =
            replicate_loglik(&Lgss::new(), &[0.5], &y, 50, 2, 10, Resampling::Systematic).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(
            replicate_loglik(&Lgss::new(), &[0.5], &y, 50, 1, 10, Resampling::Systematic).is_err()
        );
    }

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (m, s)
    }

    #[test]
    fn estimate_close_to_kalman() {
        let y = lgss_data(3, 20);
        let exact = kalman_loglik(0.5, &y);
        let reps = replicate_loglik(
            &Lgss::new(),
            &[0.5],
            &y,
            1000,
            100,
            0,
            Resampling::Systematic,
        )
        .unwrap()
        .finite_values();
        let (mean, sd) = mean_sd(&reps);
        assert!(
            (mean - exact).abs() <= 3.0 * sd / 10.0,
            "{mean} vs {exact} (sd {sd})"
        );
    }

    #[test]
    fn variance_shrinks_with_particles() {
        let y = lgss_data(4, 100);
        let var = |n| {
            let r = replicate_loglik(&Lgss::new(), &[0.5], &y, n, 100, 7, Resampling::Systematic)
                .unwrap()
                .finite_values();
            mean_sd(&r).1.powi(2)
        };
        assert!(var(4000) < var(250));
    }
}
