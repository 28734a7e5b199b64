//! Expected-improvement acquisition over the GP surrogate.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::direct::{self, DirectConfig};
use crate::gp::GpPosterior;
use crate::ssm::BoxDomain;

/// Below this posterior standard deviation the improvement is treated as deterministic.
pub const SIGMA_EPS: f64 = 1e-9;
const TAIL_Z: f64 = -8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Exploration margin ζ.
    pub zeta: f64,
    pub inner_max_evals: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            zeta: 0.01,
            inner_max_evals: 500,
        }
    }
}

/// Largest posterior mean over the training inputs.
pub fn mu_max(post: &GpPosterior) -> f64 {
    post.train()
        .thetas()
        .iter()
        .map(|t| post.mean(t))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `z Φ(z) + φ(z)` for `z < −8`, via the continued fraction of the Mills
/// ratio so that nothing cancels.
fn tail_factor(z: f64) -> f64 {
    let x = -z;
    // t = x + 2/(x + 3/(x + 4/(…)))
    let mut t = x;
    for n in (2..=60).rev() {
        t = x + n as f64 / t;
    }
    let d = x + 1.0 / t;
    std_normal_pdf(x) * (1.0 / t) / d
}

/// Closed-form EI for a Gaussian `N(mu, sigma²)` against threshold `mu_max + zeta`.
pub fn ei_from_moments(mu: f64, sigma: f64, mu_max: f64, zeta: f64) -> f64 {
    let gap = mu - mu_max - zeta;
    if sigma.is_nan() || sigma < SIGMA_EPS {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    let ei = if z < TAIL_Z {
        sigma * tail_factor(z)
    } else {
        let cdf = 0.5 * erfc(-z * FRAC_1_SQRT_2);
        sigma * (z * cdf + std_normal_pdf(z))
    };
    ei.max(0.0)
}

/// EI at `theta` using the latent posterior standard deviation.
pub fn expected_improvement(post: &GpPosterior, theta: &[f64], mu_max: f64, zeta: f64) -> f64 {
    let p = post.predict(theta);
    ei_from_moments(p.mu, p.sd_latent(), mu_max, zeta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub theta: Vec<f64>,
    pub ei: f64,
    pub mu_max: f64,
}

/// Maximizes EI over the box with DIRECT.
pub fn next_iterate(
    post: &GpPosterior,
    domain: &BoxDomain,
    config: &AcquisitionConfig,
    direct: &DirectConfig,
) -> Acquisition {
    let mm = mu_max(post);
    let cfg = DirectConfig {
        max_evals: config.inner_max_evals,
        ..*direct
    };
    let r = direct::maximize(
        |t| expected_improvement(post, t, mm, config.zeta),
        domain,
        &cfg,
    );
    Acquisition {
        theta: r.theta,
        ei: r.value,
        mu_max: mm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpHyperparams, IterateSet};
    use rand::Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn posterior(thetas: Vec<f64>, values: Vec<f64>, noise: f64) -> GpPosterior {
        GpPosterior::new(
            IterateSet::from_parts(thetas.into_iter().map(|t| vec![t]).collect(), values).unwrap(),
            GpHyperparams {
                mean_const: 0.0,
                signal_var: 1.0,
                length_scales: vec![0.3],
                noise_var: noise,
            },
        )
        .unwrap()
    }

    /// Stratified-sampling estimate of E[max(0, X − m)], X ~ N(mu, sigma²).
    fn mc_ei(mu: f64, sigma: f64, m: f64, n: usize, rng: &mut crate::rng::SimRng) -> f64 {
        let normal = Normal::standard();
        let mut s = 0.0;
        for i in 0..n {
            let u = (i as f64 + rng.random::<f64>()) / n as f64;
            let x = mu + sigma * normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
            s += (x - m).max(0.0);
        }
        s / n as f64
    }

    #[test]
    fn ei_at_zero_z() {
        let ei = ei_from_moments(1.01, 2.0, 1.0, 0.01);
        assert!((ei - 2.0 * 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sigma() {
        assert_eq!(ei_from_moments(0.5, 0.0, 1.0, 0.01), 0.0);
        assert_eq!(ei_from_moments(2.0, 1e-12, 1.0, 0.5), 0.5);
    }

    #[test]
    fn tail_branch_is_continuous_and_positive() {
        let above = ei_from_moments(-8.0 + 1e-9, 1.0, 0.0, 0.0);
        let below = ei_from_moments(-8.0 - 1e-9, 1.0, 0.0, 0.0);
        assert!((above - below).abs() / above < 1e-6, "{above} vs {below}");
        let far = ei_from_moments(-30.0, 1.0, 0.0, 0.0);
        assert!(far > 0.0 && far < 1e-190);
        // asymptotically φ(z)/z²
        let asym = std_normal_pdf(30.0) / 900.0;
        assert!((far / asym - 1.0).abs() < 3.0 / 900.0);
    }

    #[test]
    fn matches_monte_carlo() {
        let mut rng = crate::rng::seeded(31);
        for _ in 0..5 {
            let mu = rng.random_range(-2.0..2.0);
            let sigma = rng.random_range(0.1..3.0);
            let m = mu - sigma * rng.random_range(-1.5..2.0);
            let zeta = rng.random_range(0.0..0.1);
            let mc = mc_ei(mu, sigma, m + zeta, 1_000_000, &mut rng);
            let ei = ei_from_moments(mu, sigma, m, zeta);
            assert!((ei - mc).abs() / mc < 1e-3, "{ei} vs {mc}");
        }
    }

    #[test]
    fn ei_properties() {
        let mut rng = crate::rng::seeded(32);
        for _ in 0..10_000 {
            let mu = rng.random_range(-10.0..10.0);
            let sigma = rng.random_range(0.0..5.0);
            let m = rng.random_range(-10.0..10.0);
            let zeta = rng.random_range(0.0..1.0);
            let ei = ei_from_moments(mu, sigma, m, zeta);
            assert!(ei >= 0.0);
            let gap = mu - m - zeta;
            if gap > 0.0 {
                assert!(ei >= gap * (1.0 - 1e-12));
            }
            assert!(ei_from_moments(mu, 2.0 * sigma, m, zeta) >= ei * (1.0 - 1e-12));
            assert!(ei_from_moments(mu, sigma, m, zeta + 0.3) <= ei * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn mu_max_cases() {
        let post = posterior(vec![0.4], vec![2.0], 0.1);
        assert_eq!(mu_max(&post), post.predict(&[0.4]).mu);

        let xs = vec![-0.8, -0.2, 0.1, 0.5, 0.9];
        let ys = vec![0.3, 1.2, -0.5, 0.9, 0.1];
        let noiseless = posterior(xs.clone(), ys.clone(), 1e-12);
        assert!((mu_max(&noiseless) - 1.2).abs() < 1e-6);

        let noisy = posterior(xs.clone(), ys, 0.2);
        let direct = xs
            .iter()
            .map(|&x| noisy.predict(&[x]).mu)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(mu_max(&noisy), direct);
    }

    #[test]
    fn flat_ei_returns_center() {
        let post = posterior(vec![0.2], vec![0.0], 0.05);
        let dom = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let sf = post.hyper().signal_var.sqrt();
        let m = post.hyper().mean_const + 0.01 + 40.0 * sf;
        let r = direct::maximize(
            |t| expected_improvement(&post, t, m, 0.01),
            &dom,
            &DirectConfig::default(),
        );
        assert_eq!(r.value, 0.0);
        assert_eq!(r.theta, vec![0.0]);
    }

    #[test]
    fn direct_finds_grid_maximum_of_ei() {
        let xs: Vec<f64> = (0..6).map(|i| -1.0 + 2.0 * i as f64 / 5.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -3.0 * (x - 0.45f64).powi(2)).collect();
        let post = posterior(xs, ys, 1e-4);
        let dom = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let acq = next_iterate(
            &post,
            &dom,
            &AcquisitionConfig::default(),
            &DirectConfig::default(),
        );
        let mm = mu_max(&post);
        let grid_max = (0..10_000)
            .map(|i| expected_improvement(&post, &[-1.0 + 2.0 * i as f64 / 9_999.0], mm, 0.01))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(acq.ei >= grid_max - 1e-3, "{} vs {grid_max}", acq.ei);
    }

    #[test]
    fn exploit_or_explore() {
        // high point near 0.3, nothing observed on [-1, -0.2)
        let post = posterior(vec![-0.1, 0.3, 0.7], vec![0.0, 2.0, 0.5], 1e-4);
        let dom = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let acq = next_iterate(
            &post,
            &dom,
            &AcquisitionConfig::default(),
            &DirectConfig::default(),
        );
        let ell = post.hyper().length_scales[0];
        let t = acq.theta[0];
        assert!((t - 0.3).abs() <= 2.0 * ell || t < -0.2, "{t}");
    }
}
