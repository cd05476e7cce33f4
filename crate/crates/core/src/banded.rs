//! Symmetric banded matrices and their Cholesky factorization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band: `band[i][k] = A[i][i-k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    n: usize,
    width: usize,
    band: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(n: usize, width: usize) -> Self {
        Self {
            n,
            width,
            band: vec![vec![0.0; width + 1]; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.width {
            0.0
        } else {
            self.band[hi][hi - lo]
        }
    }

    /// Adds `v` to both `A[i][j]` and `A[j][i]` (once on the diagonal).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        assert!(hi - lo <= self.width, "entry ({i}, {j}) outside the band");
        self.band[hi][hi - lo] += v;
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (row, v) in self.band.iter_mut().zip(d) {
            row[0] += v;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            y[i] += self.band[i][0] * x[i];
            for k in 1..=self.width.min(i) {
                let a = self.band[i][k];
                y[i] += a * x[i - k];
                y[i - k] += a * x[i];
            }
        }
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `|x|ᵀ|A||x|`, the scale against which roundoff in `xᵀAx` is measured.
    pub fn abs_quadratic_form(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            total += self.band[i][0].abs() * x[i] * x[i];
            for k in 1..=self.width.min(i) {
                total += 2.0 * (self.band[i][k] * x[i] * x[i - k]).abs();
            }
        }
        total
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Number of negative eigenvalues, read off the pivots of an unpivoted
    /// `L D Lᵀ` factorization (Sylvester's law of inertia). Returns `None`
    /// when a pivot vanishes, in which case the caller should perturb.
    pub fn negative_inertia(&self) -> Option<usize> {
        let (n, p) = (self.n, self.width);
        // l[i][k] = L[i][i-k] for k >= 1, d[i] the pivots.
        let mut l = vec![vec![0.0; p + 1]; n];
        let mut d = vec![0.0; n];
        let mut negatives = 0;
        for i in 0..n {
            for k in (1..=p.min(i)).rev() {
                let j = i - k;
                let mut s = self.band[i][k];
                for t in 1..=p.min(j) {
                    if k + t <= p {
                        s -= l[i][k + t] * l[j][t] * d[j - t];
                    }
                }
                l[i][k] = s / d[j];
            }
            let mut di = self.band[i][0];
            for k in 1..=p.min(i) {
                di -= l[i][k] * l[i][k] * d[i - k];
            }
            let scale = self.band[i][0].abs().max(f64::MIN_POSITIVE);
            if di.abs() <= 1e-14 * scale || !di.is_finite() {
                return None;
            }
            if di < 0.0 {
                negatives += 1;
            }
            d[i] = di;
        }
        Some(negatives)
    }

    /// Entrywise `self + c * other`; both must share dimension and width.
    pub fn plus_scaled(&self, c: f64, other: &SymBanded) -> SymBanded {
        assert_eq!((self.n, self.width), (other.n, other.width));
        let band = self
            .band
            .iter()
            .zip(&other.band)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + c * y).collect())
            .collect();
        SymBanded {
            n: self.n,
            width: self.width,
            band,
        }
    }

    /// Cholesky factor `L` with `A = L Lᵀ`; fails unless `A` is positive definite.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let (n, p) = (self.n, self.width);
        let mut l = vec![vec![0.0; p + 1]; n];
        for i in 0..n {
            for k in (1..=p.min(i)).rev() {
                let j = i - k;
                let mut s = self.band[i][k];
                for t in 1..=p.min(j) {
                    if k + t <= p {
                        s -= l[i][k + t] * l[j][t];
                    }
                }
                l[i][k] = s / l[j][0];
            }
            let mut d = self.band[i][0];
            for k in 1..=p.min(i) {
                d -= l[i][k] * l[i][k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Eigen(format!(
                    "matrix is not positive definite (pivot {d:.3e} at row {i})"
                )));
            }
            l[i][0] = d.sqrt();
        }
        Ok(BandedCholesky { n, width: p, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    width: usize,
    l: Vec<Vec<f64>>,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.width);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 1..=p.min(i) {
                s -= self.l[i][k] * y[i - k];
            }
            y[i] = s / self.l[i][0];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in 1..=p.min(n - 1 - i) {
                s -= self.l[i + k][k] * y[i + k];
            }
            y[i] = s / self.l[i][0];
        }
        y
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.iter().map(|r| r[0].ln()).sum::<f64>()
    }
}
