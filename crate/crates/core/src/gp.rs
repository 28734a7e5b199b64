//! Gaussian-process surrogate of the log-likelihood surface.
//!
//! The prior is a constant mean plus an anisotropic Matérn-3/2 kernel, and the
//! noisy estimates are modelled as `ℓ̂ = ℓ(θ) + z`, `z ~ N(0, σ_z²)`.
//! Hyperparameters, including `σ_z²`, are chosen by maximizing the marginal
//! likelihood. The optimizer works on standardized inputs (unit hypercube) and
//! outputs (zero mean, unit variance); the returned hyperparameters are always
//! in the caller's units.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::simplex::{self, SimplexOptions};
use crate::ssm::BoxDomain;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Design set `{θ_j, ℓ̂_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSet {
    thetas: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl IterateSet {
    pub fn new() -> Self {
        Self {
            thetas: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_parts(thetas: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if thetas.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: thetas.len(),
                got: values.len(),
            });
        }
        let mut set = Self::new();
        for (t, v) in thetas.into_iter().zip(values) {
            set.push(t, v)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, theta: Vec<f64>, value: f64) -> Result<()> {
        if let Some(first) = self.thetas.first() {
            if first.len() != theta.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: theta.len(),
                });
            }
        }
        if !value.is_finite() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("iterates must be finite".into()));
        }
        self.thetas.push(theta);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.thetas.first().map_or(0, Vec::len)
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The first `k` iterates.
    pub fn prefix(&self, k: usize) -> Self {
        Self {
            thetas: self.thetas[..k].to_vec(),
            values: self.values[..k].to_vec(),
        }
    }
}

impl Default for IterateSet {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub mean_const: f64,
    pub signal_var: f64,
    pub length_scales: Vec<f64>,
    pub noise_var: f64,
}

impl GpHyperparams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.length_scales.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.length_scales.len(),
            });
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.mean_const.is_finite()
            || !positive(self.signal_var)
            || !self.length_scales.iter().all(|&l| positive(l))
            || !(self.noise_var.is_finite() && self.noise_var >= 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "invalid hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Matérn ν = 3/2 covariance `σ_f² (1 + √3 r) exp(−√3 r)` with scaled distance
/// `r = ‖(a − b) / ℓ‖`.
pub fn matern32(a: &[f64], b: &[f64], hyper: &GpHyperparams) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&hyper.length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    matern32_from_r2(r2, hyper.signal_var)
}

#[inline]
fn matern32_from_r2(r2: f64, signal_var: f64) -> f64 {
    let sr = SQRT3 * r2.sqrt();
    signal_var * (1.0 + sr) * (-sr).exp()
}

fn gram_with_noise(thetas: &[Vec<f64>], hyper: &GpHyperparams) -> Vec<f64> {
    let k = thetas.len();
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        g[i * k + i] = hyper.signal_var + hyper.noise_var;
        for j in 0..i {
            let v = matern32(&thetas[i], &thetas[j], hyper);
            g[i * k + j] = v;
            g[j * k + i] = v;
        }
    }
    g
}

/// `log N(ℓ̂; c·1, K + σ_z² I)`.
pub fn log_marginal_likelihood(data: &IterateSet, hyper: &GpHyperparams) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    hyper.validate(data.dim())?;
    let k = data.len();
    let chol = Cholesky::factor(&gram_with_noise(data.thetas(), hyper), k)?;
    let r: Vec<f64> = data.values().iter().map(|v| v - hyper.mean_const).collect();
    let w = chol.solve_lower(&r);
    let quad: f64 = w.iter().map(|x| x * x).sum();
    Ok(-0.5 * quad - 0.5 * chol.log_det() - 0.5 * k as f64 * LN_2PI)
}

/// Posterior moments at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mu: f64,
    /// Variance of the latent `ℓ(θ)`, clamped at 0.
    pub var_latent: f64,
    /// Variance of a fresh noisy estimate, `var_latent + σ_z²`.
    pub var_observed: f64,
}

impl Prediction {
    pub fn sd_latent(&self) -> f64 {
        self.var_latent.sqrt()
    }
}

/// A GP conditioned on an iterate set with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    hyper: GpHyperparams,
    train: IterateSet,
    chol: Cholesky,
    alpha: Vec<f64>,
}

impl GpPosterior {
    pub fn new(train: IterateSet, hyper: GpHyperparams) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        hyper.validate(train.dim())?;
        let k = train.len();
        let chol = Cholesky::factor(&gram_with_noise(train.thetas(), &hyper), k)?;
        let r: Vec<f64> = train
            .values()
            .iter()
            .map(|v| v - hyper.mean_const)
            .collect();
        let alpha = chol.solve(&r);
        Ok(Self {
            hyper,
            train,
            chol,
            alpha,
        })
    }

    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn train(&self) -> &IterateSet {
        &self.train
    }

    pub fn chol(&self) -> &Cholesky {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn predict(&self, theta: &[f64]) -> Prediction {
        let kv: Vec<f64> = self
            .train
            .thetas()
            .iter()
            .map(|t| matern32(theta, t, &self.hyper))
            .collect();
        let mu =
            self.hyper.mean_const + kv.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = self.chol.solve_lower(&kv);
        let var_latent = (self.hyper.signal_var - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        Prediction {
            mu,
            var_latent,
            var_observed: var_latent + self.hyper.noise_var,
        }
    }

    /// Posterior mean only; skips the variance solve.
    pub fn mean(&self, theta: &[f64]) -> f64 {
        self.hyper.mean_const
            + self
                .train
                .thetas()
                .iter()
                .zip(&self.alpha)
                .map(|(t, a)| matern32(theta, t, &self.hyper) * a)
                .sum::<f64>()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let r: Vec<f64> = self
            .train
            .values()
            .iter()
            .map(|v| v - self.hyper.mean_const)
            .collect();
        let quad: f64 = r.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        -0.5 * quad - 0.5 * self.chol.log_det() - 0.5 * self.train.len() as f64 * LN_2PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_starts: usize,
    /// Below this many iterates the hyperparameters stay at their defaults.
    pub k_min: usize,
    pub noise_floor: f64,
    pub max_evals_per_start: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 5,
            k_min: 5,
            noise_floor: 1e-6,
            max_evals_per_start: 300,
        }
    }
}

/// Hyperparameters used before there is enough data to estimate them.
pub fn default_hyperparams(
    data: &IterateSet,
    domain: &BoxDomain,
    noise_floor: f64,
) -> GpHyperparams {
    let k = data.len().max(1) as f64;
    let mean = data.values().iter().sum::<f64>() / k;
    let var = data
        .values()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / k;
    let signal_var = var.max(1.0);
    GpHyperparams {
        mean_const: mean,
        signal_var,
        length_scales: (0..domain.dim()).map(|i| 0.2 * domain.width(i)).collect(),
        noise_var: (0.01 * signal_var).max(noise_floor),
    }
}

/// Marginal likelihood in standardized coordinates with the constant mean
/// profiled out. Parameters are `[ln σ_f², ln ℓ_1.. ln ℓ_d, ln σ_z²]`.
struct StandardizedProblem {
    k: usize,
    dim: usize,
    /// `sq_dist[dim][i*k + j]` = squared unit-cube distance along `dim`.
    sq_dist: Vec<Vec<f64>>,
    y: Vec<f64>,
    noise_floor: f64,
}

impl StandardizedProblem {
    /// Returns the profiled mean and the log marginal likelihood.
    fn evaluate(&self, p: &[f64]) -> Option<(f64, f64)> {
        let k = self.k;
        let sf2 = p[0].exp();
        let inv_l2: Vec<f64> = (0..self.dim).map(|i| (-2.0 * p[1 + i]).exp()).collect();
        let sn2 = p[1 + self.dim].exp().max(self.noise_floor);
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            g[i * k + i] = sf2 + sn2;
            for j in 0..i {
                let r2: f64 = (0..self.dim)
                    .map(|d| self.sq_dist[d][i * k + j] * inv_l2[d])
                    .sum();
                let v = matern32_from_r2(r2, sf2);
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        let chol = Cholesky::factor(&g, k).ok()?;
        let v1 = chol.solve_lower(&vec![1.0; k]);
        let vy = chol.solve_lower(&self.y);
        let c = v1.iter().zip(&vy).map(|(a, b)| a * b).sum::<f64>()
            / v1.iter().map(|a| a * a).sum::<f64>();
        let quad: f64 = vy.iter().zip(&v1).map(|(b, a)| (b - c * a).powi(2)).sum();
        let lml = -0.5 * quad - 0.5 * chol.log_det() - 0.5 * k as f64 * LN_2PI;
        lml.is_finite().then_some((c, lml))
    }
}

/// Empirical-Bayes fit: multi-start Nelder–Mead on the log marginal likelihood.
///
/// With fewer than `config.k_min` iterates the defaults of
/// [`default_hyperparams`] are used unchanged. Otherwise `init` seeds the first
/// start and the result is never worse than `init` in marginal likelihood.
pub fn fit(
    data: &IterateSet,
    domain: &BoxDomain,
    init: &GpHyperparams,
    config: &FitConfig,
) -> Result<GpPosterior> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if data.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: data.dim(),
        });
    }
    for t in data.thetas() {
        domain.check(t)?;
    }
    if data.len() < config.k_min {
        return GpPosterior::new(
            data.clone(),
            default_hyperparams(data, domain, config.noise_floor),
        );
    }
    init.validate(domain.dim())?;

    let k = data.len();
    let dim = domain.dim();
    let mean = data.values().iter().sum::<f64>() / k as f64;
    let sd = (data
        .values()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / k as f64)
        .sqrt();
    let scale = if sd > 1e-12 { sd } else { 1.0 };
    let units: Vec<Vec<f64>> = data.thetas().iter().map(|t| domain.to_unit(t)).collect();
    let sq_dist = (0..dim)
        .map(|d| {
            let mut m = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    m[i * k + j] = (units[i][d] - units[j][d]).powi(2);
                }
            }
            m
        })
        .collect();
    let floor = config.noise_floor / (scale * scale);
    let problem = StandardizedProblem {
        k,
        dim,
        sq_dist,
        y: data.values().iter().map(|v| (v - mean) / scale).collect(),
        noise_floor: floor,
    };

    let mut lower = vec![(1e-4f64).ln()];
    let mut upper = vec![(1e4f64).ln()];
    lower.extend(std::iter::repeat_n((0.01f64).ln(), dim));
    upper.extend(std::iter::repeat_n((20.0f64).ln(), dim));
    lower.push(floor.max(1e-12).ln());
    upper.push((10.0f64).ln());

    let to_std = |h: &GpHyperparams| -> Vec<f64> {
        let mut p = vec![(h.signal_var / (scale * scale)).ln()];
        p.extend((0..dim).map(|i| (h.length_scales[i] / domain.width(i)).ln()));
        p.push((h.noise_var.max(config.noise_floor) / (scale * scale)).ln());
        p
    };
    let mut starts = vec![to_std(init)];
    const PRESETS: [(f64, f64, f64); 6] = [
        (1.0, 0.2, 1e-2),
        (1.0, 0.05, 1e-3),
        (1.0, 0.5, 1e-1),
        (2.0, 1.0, 1e-4),
        (0.5, 0.1, 0.3),
        (1.0, 2.0, 1e-2),
    ];
    for &(sf2, ell, sn2) in PRESETS.iter().take(config.n_starts.saturating_sub(1)) {
        let mut p = vec![sf2.ln()];
        p.extend(std::iter::repeat_n(ell.ln(), dim));
        p.push(sn2.max(floor).ln());
        starts.push(p);
    }

    let opts = SimplexOptions {
        max_evals: config.max_evals_per_start,
        ..Default::default()
    };
    let objective = |p: &[f64]| problem.evaluate(p).map_or(f64::INFINITY, |(_, l)| -l);
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| simplex::minimize(objective, s, &lower, &upper, opts))
        .collect();
    let best = results
        .iter()
        .filter(|r| r.f.is_finite())
        .min_by(|a, b| a.f.total_cmp(&b.f));

    let init_post = GpPosterior::new(data.clone(), init.clone());
    let Some(best) = best else {
        return init_post;
    };
    let (c_std, _) = problem.evaluate(&best.x).expect("finite optimum");
    let p = &best.x;
    let fitted = GpHyperparams {
        mean_const: mean + scale * c_std,
        signal_var: p[0].exp() * scale * scale,
        length_scales: (0..dim).map(|i| p[1 + i].exp() * domain.width(i)).collect(),
        noise_var: (p[1 + dim].exp() * scale * scale).max(config.noise_floor),
    };
    let post = GpPosterior::new(data.clone(), fitted)?;
    match init_post {
        Ok(ip) if ip.log_marginal_likelihood() > post.log_marginal_likelihood() => Ok(ip),
        _ => Ok(post),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn hyper(d: usize) -> GpHyperparams {
        GpHyperparams {
            mean_const: 0.3,
            signal_var: 1.7,
            length_scales: (0..d).map(|i| 0.3 + 0.2 * i as f64).collect(),
            noise_var: 0.05,
        }
    }

    fn random_set(rng: &mut crate::rng::SimRng, k: usize, d: usize) -> IterateSet {
        let thetas = (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let values = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        IterateSet::from_parts(thetas, values).unwrap()
    }

    /// Conditions the joint Gaussian of (f(θ), ℓ̂_1..ℓ̂_k) directly.
    fn dense_condition(data: &IterateSet, h: &GpHyperparams, theta: &[f64]) -> (f64, f64) {
        let k = data.len();
        let kern = |a: &[f64], b: &[f64]| {
            let r: f64 = a
                .iter()
                .zip(b)
                .zip(&h.length_scales)
                .map(|((x, y), l)| ((x - y) / l).powi(2))
                .sum::<f64>()
                .sqrt();
            h.signal_var * (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp()
        };
        let cov = DMatrix::from_fn(k, k, |i, j| {
            kern(&data.thetas()[i], &data.thetas()[j]) + if i == j { h.noise_var } else { 0.0 }
        });
        let cross = DVector::from_fn(k, |i, _| kern(theta, &data.thetas()[i]));
        let r = DVector::from_fn(k, |i, _| data.values()[i] - h.mean_const);
        let inv = cov.try_inverse().unwrap();
        let mu = h.mean_const + (cross.transpose() * &inv * r)[(0, 0)];
        let var = h.signal_var - (cross.transpose() * &inv * &cross)[(0, 0)];
        (mu, var)
    }

    #[test]
    fn matern_values() {
        let h = GpHyperparams {
            mean_const: 0.0,
            signal_var: 1.0,
            length_scales: vec![1.0],
            noise_var: 0.0,
        };
        assert_eq!(matern32(&[0.2], &[0.2], &h), 1.0);
        // (1 + √3) e^{−√3}, evaluated independently with 30-digit arithmetic
        assert!((matern32(&[0.0], &[1.0], &h) - 0.483_357_724_596_507_65).abs() < 1e-15);
        assert!(matern32(&[0.0], &[1e6], &h) < 1e-12);
        let h2 = hyper(2);
        let (a, b) = ([0.1, -0.4], [0.7, 0.2]);
        assert_eq!(matern32(&a, &b, &h2), matern32(&b, &a, &h2));
        assert!(matern32(&a, &b, &h2) > 0.0 && matern32(&a, &b, &h2) <= h2.signal_var);
    }

    #[test]
    fn lml_single_point() {
        let data = IterateSet::from_parts(vec![vec![0.1]], vec![2.0]).unwrap();
        let h = hyper(1);
        let v = h.signal_var + h.noise_var;
        let expected = -0.5 * (LN_2PI + v.ln() + (2.0 - h.mean_const).powi(2) / v);
        assert!((log_marginal_likelihood(&data, &h).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn lml_matches_dense_gaussian() {
        let mut rng = crate::rng::seeded(3);
        let data = random_set(&mut rng, 3, 2);
        let h = hyper(2);
        let cov = DMatrix::from_fn(3, 3, |i, j| {
            matern32(&data.thetas()[i], &data.thetas()[j], &h)
                + if i == j { h.noise_var } else { 0.0 }
        });
        let r = DVector::from_fn(3, |i, _| data.values()[i] - h.mean_const);
        let quad = (r.transpose() * cov.clone().try_inverse().unwrap() * &r)[(0, 0)];
        let expected = -0.5 * (quad + cov.determinant().ln() + 3.0 * LN_2PI);
        assert!((log_marginal_likelihood(&data, &h).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn lml_decreases_with_huge_noise() {
        let mut rng = crate::rng::seeded(4);
        let data = random_set(&mut rng, 4, 1);
        let mut h = hyper(1);
        let mut last = f64::INFINITY;
        for nv in [1e2, 1e4, 1e8, 1e16] {
            h.noise_var = nv;
            let v = log_marginal_likelihood(&data, &h).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < -50.0);
    }

    #[test]
    fn predict_matches_dense_conditioning() {
        let mut rng = crate::rng::seeded(5);
        for _ in 0..100 {
            let k = rng.random_range(1..=8);
            let d = rng.random_range(1..=2);
            let data = random_set(&mut rng, k, d);
            let h = hyper(d);
            let post = GpPosterior::new(data.clone(), h.clone()).unwrap();
            let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = post.predict(&theta);
            let (mu, var) = dense_condition(&data, &h, &theta);
            assert!((p.mu - mu).abs() < 1e-8, "{} vs {mu}", p.mu);
            assert!((p.var_latent - var.max(0.0)).abs() < 1e-8);
            assert!((p.var_observed - p.var_latent - h.noise_var).abs() < 1e-15);
            assert_eq!(post.mean(&theta), p.mu);
        }
    }

    #[test]
    fn noiseless_interpolation_and_prior_reversion() {
        let data =
            IterateSet::from_parts(vec![vec![-0.5], vec![0.0], vec![0.6]], vec![1.0, -2.0, 0.5])
                .unwrap();
        let mut h = hyper(1);
        h.noise_var = 1e-12;
        let post = GpPosterior::new(data.clone(), h.clone()).unwrap();
        for (t, v) in data.thetas().iter().zip(data.values()) {
            let p = post.predict(t);
            assert!((p.mu - v).abs() < 1e-6);
            assert!(p.var_latent < 1e-6);
        }
        let far = post.predict(&[1e4]);
        assert!((far.mu - h.mean_const).abs() < 1e-8);
        assert!((far.var_latent - h.signal_var).abs() < 1e-8);
    }

    #[test]
    fn variance_never_grows_with_more_data() {
        let mut rng = crate::rng::seeded(6);
        let h = hyper(1);
        for _ in 0..20 {
            let base = random_set(&mut rng, 5, 1);
            let mut more = base.clone();
            more.push(
                vec![rng.random_range(-1.0..1.0)],
                rng.random_range(-3.0..3.0),
            )
            .unwrap();
            let a = GpPosterior::new(base, h.clone()).unwrap();
            let b = GpPosterior::new(more, h.clone()).unwrap();
            for i in 0..=50 {
                let t = [-1.0 + 0.04 * i as f64];
                assert!(b.predict(&t).var_latent <= a.predict(&t).var_latent + 1e-12);
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = crate::rng::seeded(7);
        let data = random_set(&mut rng, 7, 2);
        let mut idx: Vec<usize> = (0..7).collect();
        idx.reverse();
        idx.swap(1, 4);
        let permuted = IterateSet::from_parts(
            idx.iter().map(|&i| data.thetas()[i].clone()).collect(),
            idx.iter().map(|&i| data.values()[i]).collect(),
        )
        .unwrap();
        let h = hyper(2);
        let a = GpPosterior::new(data, h.clone()).unwrap();
        let b = GpPosterior::new(permuted, h).unwrap();
        for _ in 0..20 {
            let t = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let (pa, pb) = (a.predict(&t), b.predict(&t));
            assert!((pa.mu - pb.mu).abs() < 1e-8 && (pa.var_latent - pb.var_latent).abs() < 1e-8);
        }
    }

    #[test]
    fn single_point_fit_uses_defaults() {
        let dom = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let data = IterateSet::from_parts(vec![vec![0.2]], vec![-350.0]).unwrap();
        let post = fit(&data, &dom, &hyper(1), &FitConfig::default()).unwrap();
        let h = post.hyper();
        assert_eq!(h.mean_const, -350.0);
        assert_eq!(h.signal_var, 1.0);
        assert_eq!(h.length_scales, vec![0.4]);
        assert_eq!(h.noise_var, 0.01);
        let expected =
            h.mean_const + h.signal_var / (h.signal_var + h.noise_var) * (-350.0 - h.mean_const);
        assert!((post.predict(&[0.2]).mu - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicate_points_fit() {
        let dom = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let thetas = vec![
            vec![0.1],
            vec![0.1],
            vec![0.1],
            vec![0.5],
            vec![0.5],
            vec![-0.3],
        ];
        let values = vec![1.0, 1.3, 0.8, 2.0, 2.4, -1.0];
        let data = IterateSet::from_parts(thetas, values).unwrap();
        let post = fit(
            &data,
            &dom,
            &default_hyperparams(&data, &dom, 1e-6),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(post.hyper().noise_var > 1e-3);
    }

    #[test]
    fn fit_never_loses_to_init() {
        let mut rng = crate::rng::seeded(8);
        let dom = BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        for _ in 0..10 {
            let data = random_set(&mut rng, 12, 2);
            let init = GpHyperparams {
                mean_const: rng.random_range(-1.0..1.0),
                signal_var: rng.random_range(0.1..5.0),
                length_scales: vec![rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)],
                noise_var: rng.random_range(1e-4..1.0),
            };
            let before = log_marginal_likelihood(&data, &init).unwrap();
            let post = fit(&data, &dom, &init, &FitConfig::default()).unwrap();
            assert!(post.log_marginal_likelihood() >= before - 1e-9);
            assert!(post.hyper().noise_var >= 1e-6);
        }
    }

    #[test]
    fn recovers_length_scale_order() {
        let truth = 0.1;
        let k = 40;
        let mut rng = crate::rng::seeded(21);
        let xs: Vec<f64> = (0..k)
            .map(|i| (i as f64 + rng.random::<f64>()) / k as f64)
            .collect();
        let h = GpHyperparams {
            mean_const: 0.0,
            signal_var: 1.0,
            length_scales: vec![truth],
            noise_var: 1e-8,
        };
        let cov = DMatrix::from_fn(k, k, |i, j| {
            matern32(&[xs[i]], &[xs[j]], &h) + if i == j { 1e-8 } else { 0.0 }
        });
        let l = cov.cholesky().unwrap().l();
        let dom = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        let mut ok = 0;
        for _ in 0..5 {
            let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let f = &l * z;
            let data = IterateSet::from_parts(
                xs.iter().map(|&x| vec![x]).collect(),
                f.iter().copied().collect(),
            )
            .unwrap();
            let post = fit(
                &data,
                &dom,
                &default_hyperparams(&data, &dom, 1e-6),
                &FitConfig::default(),
            )
            .unwrap();
            let ell = post.hyper().length_scales[0];
            if ell > truth / 2.0 && ell < truth * 2.0 {
                ok += 1;
            }
        }
        assert!(ok >= 4, "{ok}/5");
    }
}
