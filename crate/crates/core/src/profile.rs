//! Radial coefficient profiles: polynomials in `r` or tabulated values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Natural cubic spline through `(r_i, v_i)` with strictly increasing `r_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidProblem(
                "a table needs at least two (r, value) rows".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidProblem(
                "table radii must be strictly increasing".into(),
            ));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            for i in 1..k {
                let lower = xs[i + 1] - xs[i];
                let factor = lower / diag[i - 1];
                diag[i] -= factor * upper[i - 1];
                rhs[i] -= factor * rhs[i - 1];
            }
            let mut sol = vec![0.0; k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self { xs, ys, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            i if i >= self.xs.len() => self.xs.len() - 2,
            i => i - 1,
        }
    }

    /// Value and first two derivatives. Outside the knots the end cubic is
    /// continued.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let dd = a * m0 + b * m1;
        (v, d, dd)
    }
}

/// Serializable description of a radial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSource {
    /// Coefficients `c_0, c_1, …` of `Σ c_k r^k`.
    Poly(Vec<f64>),
    /// `(r, value)` rows with strictly increasing `r`.
    Table(Vec<(f64, f64)>),
}

/// A function of the radius alone.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialProfile {
    Polynomial(Vec<f64>),
    Tabulated {
        rows: Vec<(f64, f64)>,
        spline: CubicSpline,
    },
}

impl RadialProfile {
    pub fn constant(c: f64) -> Self {
        RadialProfile::Polynomial(vec![c])
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            Self::zero()
        } else {
            RadialProfile::Polynomial(coeffs)
        }
    }

    pub fn table(rows: Vec<(f64, f64)>) -> Result<Self> {
        let spline = CubicSpline::new(&rows)?;
        Ok(RadialProfile::Tabulated { rows, spline })
    }

    pub fn from_source(src: &ProfileSource) -> Result<Self> {
        match src {
            ProfileSource::Poly(c) => Ok(Self::polynomial(c.clone())),
            ProfileSource::Table(rows) => Self::table(rows.clone()),
        }
    }

    pub fn to_source(&self) -> ProfileSource {
        match self {
            RadialProfile::Polynomial(c) => ProfileSource::Poly(c.clone()),
            RadialProfile::Tabulated { rows, .. } => ProfileSource::Table(rows.clone()),
        }
    }

    /// Value, first and second derivative at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        match self {
            RadialProfile::Polynomial(c) => {
                let (mut v, mut d, mut dd) = (0.0, 0.0, 0.0);
                for &ck in c.iter().rev() {
                    dd = dd * r + 2.0 * d;
                    d = d * r + v;
                    v = v * r + ck;
                }
                (v, d, dd)
            }
            RadialProfile::Tabulated { spline, .. } => spline.eval(r),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn sample(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&r| self.value(r)).collect()
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            RadialProfile::Polynomial(c) => c.iter().all(|&v| v == 0.0),
            RadialProfile::Tabulated { rows, .. } => rows.iter().all(|r| r.1 == 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        let p = RadialProfile::polynomial(vec![1.0, 2.0, 3.0, 4.0]);
        let (v, d, dd) = p.eval(0.5);
        assert!((v - (1.0 + 1.0 + 0.75 + 0.5)).abs() < 1e-15);
        assert!((d - (2.0 + 3.0 + 3.0)).abs() < 1e-15);
        assert!((dd - (6.0 + 12.0)).abs() < 1e-14);
    }

    #[test]
    fn spline_reproduces_lines_and_interpolates() {
        let rows: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 * 0.2, 1.0 - 0.5 * i as f64 * 0.2)).collect();
        let p = RadialProfile::table(rows).unwrap();
        let (v, d, dd) = p.eval(0.33);
        assert!((v - (1.0 - 0.165)).abs() < 1e-14);
        assert!((d + 0.5).abs() < 1e-13);
        assert!(dd.abs() < 1e-12);

        let rows: Vec<(f64, f64)> = (0..=40).map(|i| {
            let r = i as f64 * 0.025;
            (r, r.cos())
        }).collect();
        let p = RadialProfile::table(rows).unwrap();
        assert!((p.value(0.5123) - 0.5123f64.cos()).abs() < 1e-6);
    }

    #[test]
    fn table_rejects_unsorted_rows() {
        assert!(RadialProfile::table(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(RadialProfile::table(vec![(0.0, 1.0)]).is_err());
    }
}
