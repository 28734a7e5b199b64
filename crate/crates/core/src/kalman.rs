//! Exact log-likelihood of the scalar linear Gaussian model by Kalman filtering.

use crate::ssm::{Lgss, ObservationSeries};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Filtered moments of the latent state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: f64,
    pub variance: f64,
}

/// `log p_θ(y_{1:T})` for `x_t = θ x_{t-1} + v_t`, `y_t = x_t + e_t`,
/// `v_t ~ N(0,1)`, `e_t ~ N(0, 0.1²)`, with `x_0 = 0` known.
pub fn kalman_loglik(theta: f64, y: &ObservationSeries) -> f64 {
    let r = Lgss::OBS_STD * Lgss::OBS_STD;
    // x_0 is known: the prior at t = 0 is a point mass.
    let mut state = KalmanState {
        mean: 0.0,
        variance: 0.0,
    };
    let mut ll = 0.0;
    for &yt in y.iter() {
        let pred_mean = theta * state.mean;
        let pred_var = theta * theta * state.variance + 1.0;
        let s = pred_var + r;
        let innov = yt - pred_mean;
        ll -= 0.5 * (LN_2PI + s.ln() + innov * innov / s);
        let gain = pred_var / s;
        state = KalmanState {
            mean: pred_mean + gain * innov,
            variance: (1.0 - gain) * pred_var,
        };
    }
    ll
}

/// Evenly spaced grid over `[-1, 1]`.
pub fn theta_grid(grid_points: usize) -> Vec<f64> {
    let n = grid_points.max(2);
    (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect()
}

/// Grid argmax of `objective`; ties go to the smaller grid value.
pub fn grid_argmax(grid: &[f64], objective: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut best = (grid[0], objective(grid[0]));
    for &g in &grid[1..] {
        let v = objective(g);
        if v > best.1 {
            best = (g, v);
        }
    }
    best
}

/// Maximum-likelihood θ for the linear Gaussian model on a regular grid over
/// `[-1, 1]`, returned with its log-likelihood.
pub fn grid_mle(y: &ObservationSeries, grid_points: usize) -> (f64, f64) {
    assert!(grid_points >= 3, "grid needs at least 3 points");
    grid_argmax(&theta_grid(grid_points), |th| kalman_loglik(th, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::{simulate, Lgss};
    use nalgebra::{DMatrix, DVector};

    fn series(v: Vec<f64>) -> ObservationSeries {
        ObservationSeries::new(v).unwrap()
    }

    /// Joint Gaussian density of y_{1:T} assembled from the AR(1) covariance.
    fn dense_loglik(theta: f64, y: &[f64]) -> f64 {
        let t = y.len();
        let mut cov = DMatrix::<f64>::zeros(t, t);
        for a in 0..t {
            for b in 0..t {
                // x_a = Σ_{j≤a} θ^{a-j} v_j  (0-based, v_0 is the first shock)
                let m = a.min(b);
                let mut c = 0.0;
                for j in 0..=m {
                    c += theta.powi((a - j) as i32) * theta.powi((b - j) as i32);
                }
                cov[(a, b)] = c + if a == b { 0.01 } else { 0.0 };
            }
        }
        let yv = DVector::from_column_slice(y);
        let inv = cov.clone().try_inverse().unwrap();
        let quad = (yv.transpose() * inv * &yv)[(0, 0)];
        -0.5 * (t as f64 * LN_2PI + cov.determinant().ln() + quad)
    }

    #[test]
    fn theta_zero_is_iid() {
        let y = series(vec![0.3, -1.2, 0.8, 2.0]);
        let expected: f64 = y
            .iter()
            .map(|v| -0.5 * (LN_2PI + 1.01f64.ln() + v * v / 1.01))
            .sum();
        assert!((kalman_loglik(0.0, &y) - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_gaussian_three_steps() {
        let y = [0.4, -0.1, 1.3];
        let a = kalman_loglik(0.5, &series(y.to_vec()));
        let b = dense_loglik(0.5, &y);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn matches_dense_gaussian_random() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(99);
        for _ in 0..10 {
            let t = rng.random_range(1..=5);
            let theta: f64 = rng.random_range(-1.0..=1.0);
            let y: Vec<f64> = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = kalman_loglik(theta, &series(y.clone()));
            let b = dense_loglik(theta, &y);
            assert!((a - b).abs() < 1e-10, "θ={theta} T={t}: {a} vs {b}");
        }
    }

    #[test]
    fn order_matters() {
        let y = vec![0.1, 2.5, -0.7, 1.1, -2.0];
        let mut r = y.clone();
        r.reverse();
        r.swap(0, 2);
        assert!((kalman_loglik(0.6, &series(y)) - kalman_loglik(0.6, &series(r))).abs() > 1e-6);
    }

    #[test]
    fn grid_peaks_near_truth() {
        let mut passes = 0;
        for seed in 0..20 {
            let y = simulate(&Lgss::new(), &[0.5], 250, seed)
                .unwrap()
                .observations;
            let grid = theta_grid(101);
            let vals: Vec<f64> = grid.iter().map(|&t| kalman_loglik(t, &y)).collect();
            assert!(vals.iter().all(|v| v.is_finite()));
            let (arg, _) = grid_argmax(&grid, |t| kalman_loglik(t, &y));
            if (arg - 0.5).abs() <= 0.15 {
                passes += 1;
            }
            let (mle, _) = grid_mle(&y, 201);
            assert!((mle - arg).abs() <= 0.02 + 1e-12);
        }
        assert!(passes >= 18, "{passes}/20");
    }

    #[test]
    fn ties_break_toward_smaller_theta() {
        let grid = theta_grid(11);
        assert_eq!(grid_argmax(&grid, |_| 1.0).0, -1.0);
        let fine = theta_grid(21);
        assert_eq!(grid_argmax(&fine, |t| -(t * t - 0.25).abs()).0, -0.5);
    }

    #[test]
    fn three_point_grid() {
        let y = series(vec![0.2, 0.5, 0.1]);
        let (t, _) = grid_mle(&y, 3);
        assert!([-1.0, 0.0, 1.0].contains(&t));
    }
}
