//! Dense Cholesky factorization for small symmetric positive-definite systems.

use crate::error::{Error, Result};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·mean(diag A)·I`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

fn factor_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d.is_nan() || d <= 0.0 || !d.is_finite() {
            return false;
        }
        let djj = d.sqrt();
        a[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            let (ri, rj) = (&a[i * n..i * n + j], &a[j * n..j * n + j]);
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            a[i * n + j] = s / djj;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    true
}

impl Cholesky {
    /// Factorizes the row-major `n×n` matrix `a`, retrying with diagonal jitter
    /// `1e-10, 1e-9, …, 1e-4` (relative to the mean diagonal) if needed.
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut work = a.to_vec();
        if factor_in_place(&mut work, n) {
            return Ok(Self {
                n,
                l: work,
                jitter: 0.0,
            });
        }
        let scale = ((0..n).map(|i| a[i * n + i]).sum::<f64>() / n.max(1) as f64)
            .abs()
            .max(f64::MIN_POSITIVE);
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX * (1.0 + 1e-9) {
            work.copy_from_slice(a);
            for i in 0..n {
                work[i * n + i] += jitter * scale;
            }
            if factor_in_place(&mut work, n) {
                return Ok(Self { n, l: work, jitter });
            }
            jitter *= 10.0;
        }
        Err(Error::Conditioning { jitter: JITTER_MAX })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Relative jitter that was needed (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor_matrix(&self) -> &[f64] {
        &self.l
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().skip(i + 1) {
                s -= self.l[k * n + i] * xk;
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.l[i * self.n + i].ln())
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed);
        let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum::<f64>();
            }
            a[i * n + i] += 0.1;
        }
        a
    }

    #[test]
    fn reconstructs_matrix() {
        let n = 6;
        let a = spd(n, 1);
        let c = Cholesky::factor(&a, n).unwrap();
        let l = c.factor_matrix();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                assert!((v - a[i * n + j]).abs() <= 1e-12 * a[i * n + i].abs().max(1.0));
            }
        }
        assert_eq!(c.jitter(), 0.0);
    }

    #[test]
    fn solve_and_logdet_agree_with_nalgebra() {
        let n = 5;
        let a = spd(n, 2);
        let c = Cholesky::factor(&a, n).unwrap();
        let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
        let x = c.solve(&b);
        let xr = m
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&b))
            .unwrap();
        for i in 0..n {
            assert!((x[i] - xr[i]).abs() < 1e-10);
        }
        assert!((c.log_det() - m.determinant().ln()).abs() < 1e-10);
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        // rank-one 3x3
        let a = vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let c = Cholesky::factor(&a, 3).unwrap();
        assert!(c.jitter() > 0.0 && c.jitter() <= JITTER_MAX);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let a = vec![1.0, 0.0, 0.0, -1.0];
        assert!(matches!(
            Cholesky::factor(&a, 2),
            Err(Error::Conditioning { .. })
        ));
    }
}
