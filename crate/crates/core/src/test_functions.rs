//! Concentrating bubbles `u_ε(r) = η(r) (r² + ε²)^{−(n−4)/2}` centered at
//! `x₀`, their energy quotient `Q_ε = μ(u_ε)/γ(u_ε)^{2/2♯}`, and fits of
//! its small-ε expansion against the closed-form coefficients.
//!
//! All integrals use the analytic profile and its first two derivatives,
//! integrated with 5-point Gauss–Legendre panels between the grid nodes.
//! Grid nodes therefore only set the panel layout; a graded grid with
//! nodes clustered at the center resolves the scale `ε`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CurvatureData, RadialGrid};
use crate::operators::ProblemSpec;
use crate::quadrature::gauss_legendre5;
use crate::solver::ContinuationTrace;
use crate::special::{best_constant_k0, ipq, sphere_volume};

/// Nodes required strictly inside `(0, ε)`.
pub const MIN_NODES_BELOW_EPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionParams {
    pub epsilon: f64,
    /// `η ≡ 1` on `[0, δ]`, `η ≡ 0` beyond `2δ`.
    pub delta: f64,
}

impl TestFunctionParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidProblem(format!("ε must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidProblem(format!("δ must be positive, got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Quintic smoothstep cutoff and its first two derivatives.
pub fn cutoff(r: f64, delta: f64) -> (f64, f64, f64) {
    if r <= delta {
        return (1.0, 0.0, 0.0);
    }
    if r >= 2.0 * delta {
        return (0.0, 0.0, 0.0);
    }
    let s = (r - delta) / delta;
    let s2 = s * s;
    let step = s * s2 * (10.0 - 15.0 * s + 6.0 * s2);
    let d_step = 30.0 * s2 * (1.0 - s) * (1.0 - s);
    let dd_step = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    (1.0 - step, -d_step / delta, -dd_step / (delta * delta))
}

/// The profile `u_ε` in dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bubble {
    n: usize,
    params: TestFunctionParams,
}

impl Bubble {
    pub fn new(n: usize, params: TestFunctionParams) -> Self {
        Self { n, params }
    }

    /// `(u, u′, u″)` at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        let k = 0.5 * (self.n as f64 - 4.0);
        let e2 = self.params.epsilon * self.params.epsilon;
        let s = r * r + e2;
        let b = s.powf(-k);
        let b1 = -2.0 * k * r * b / s;
        let b2 = -2.0 * k * b / s + 4.0 * k * (k + 1.0) * r * r * b / (s * s);
        let (eta, eta1, eta2) = cutoff(r, self.params.delta);
        (eta * b, eta1 * b + eta * b1, eta2 * b + 2.0 * eta1 * b1 + eta * b2)
    }
}

fn check_domain(grid: &RadialGrid, params: &TestFunctionParams) -> Result<()> {
    if !grid.is_ball() {
        return Err(Error::InvalidGrid(
            "test functions are centered at r = 0; the domain must be a ball".into(),
        ));
    }
    if 2.0 * params.delta > grid.r_out() {
        return Err(Error::InvalidProblem(format!(
            "cutoff support 2δ = {} exceeds the domain radius {}",
            2.0 * params.delta,
            grid.r_out()
        )));
    }
    let below = grid
        .nodes()
        .iter()
        .filter(|&&r| r > 0.0 && r < params.epsilon)
        .count();
    if below < MIN_NODES_BELOW_EPS {
        return Err(Error::Resolution {
            eps: params.epsilon,
            nodes_below: below,
            required: MIN_NODES_BELOW_EPS,
        });
    }
    Ok(())
}

/// Nodal values of `u_ε`.
pub fn build_u_eps(grid: &RadialGrid, params: &TestFunctionParams, n: usize) -> Result<Vec<f64>> {
    if n != grid.dim() {
        return Err(Error::Dimension {
            n,
            detail: format!("grid carries dimension {}", grid.dim()),
        });
    }
    check_domain(grid, params)?;
    let b = Bubble::new(n, *params);
    Ok(grid.nodes().iter().map(|&r| b.eval(r).0).collect())
}

/// Panel breakpoints: the grid nodes up to `2δ`, plus the cutoff joints.
fn panels(grid: &RadialGrid, delta: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = grid
        .nodes()
        .iter()
        .copied()
        .filter(|&r| r < 2.0 * delta)
        .chain([delta, 2.0 * delta])
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    pts
}

/// `∫_0^{2δ} integrand(r) dr`, the integrand already carrying the density.
fn integrate<F: Fn(f64) -> f64 + Sync>(grid: &RadialGrid, delta: f64, integrand: F) -> f64 {
    panels(grid, delta)
        .windows(2)
        .map(|w| gauss_legendre5(&integrand, w[0], w[1]))
        .sum()
}

/// The three integrals of `μ(u_ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuBreakdown {
    /// `∫ (Δu_ε)² dv_g`.
    pub laplacian: f64,
    /// `∫ α (u_ε′)² dv_g`.
    pub gradient: f64,
    /// `∫ a u_ε² dv_g`.
    pub potential: f64,
    pub total: f64,
}

/// `μ(u_ε) = ∫ (Δu_ε)² + A(∇u_ε, ∇u_ε) + a u_ε² dv_g`.
pub fn mu_of_u_eps(spec: &ProblemSpec, params: &TestFunctionParams) -> Result<MuBreakdown> {
    check_domain(&spec.grid, params)?;
    let b = Bubble::new(spec.dim(), *params);
    let metric = &spec.metric;
    let laplacian = integrate(&spec.grid, params.delta, |r| {
        let (_, d1, d2) = b.eval(r);
        let lap = -d2 - metric.radial_drift(r) * d1;
        lap * lap * metric.density(r)
    });
    let gradient = if spec.alpha.is_identically_zero() {
        0.0
    } else {
        integrate(&spec.grid, params.delta, |r| {
            let d1 = b.eval(r).1;
            spec.alpha.value(r) * d1 * d1 * metric.density(r)
        })
    };
    let potential = if spec.a.is_identically_zero() {
        0.0
    } else {
        integrate(&spec.grid, params.delta, |r| {
            let u = b.eval(r).0;
            spec.a.value(r) * u * u * metric.density(r)
        })
    };
    Ok(MuBreakdown {
        laplacian,
        gradient,
        potential,
        total: laplacian + gradient + potential,
    })
}

/// `γ(u_ε) = ∫ f |u_ε|^{2♯} dv_g`.
pub fn gamma_of_u_eps(spec: &ProblemSpec, params: &TestFunctionParams) -> Result<f64> {
    check_domain(&spec.grid, params)?;
    let b = Bubble::new(spec.dim(), *params);
    let q = spec.two_sharp();
    Ok(integrate(&spec.grid, params.delta, |r| {
        spec.f.value(r) * b.eval(r).0.abs().powf(q) * spec.metric.density(r)
    }))
}

/// `Q_ε = μ(u_ε) / γ(u_ε)^{2/2♯}`.
pub fn q_eps(spec: &ProblemSpec, params: &TestFunctionParams) -> Result<f64> {
    let gamma = gamma_of_u_eps(spec, params)?;
    if !(gamma > 0.0) {
        return Err(Error::domain("q_eps", "γ(u_ε) vanishes"));
    }
    Ok(mu_of_u_eps(spec, params)?.total / gamma.powf(2.0 / spec.two_sharp()))
}

/// The limit `f(x₀)^{2/2♯}/K₀` of `Q_ε`.
pub fn leading_value(n: usize, f0: f64) -> Result<f64> {
    let two_sharp = 2.0 * n as f64 / (n as f64 - 4.0);
    Ok(f0.powf(2.0 / two_sharp) / best_constant_k0(n)?)
}

/// `8(n−1) Tr A(x₀) + (n−6)(n−4)(n+2) Δf(x₀)/f(x₀) − 4(n²−2n−4) R(x₀)`.
pub fn curvature_bracket(n: usize, curv: &CurvatureData) -> f64 {
    let nf = n as f64;
    8.0 * (nf - 1.0) * curv.tr_a0 + (nf - 6.0) * (nf - 4.0) * (nf + 2.0) * curv.lap_f_over_f
        - 4.0 * (nf * nf - 2.0 * nf - 4.0) * curv.r0
}

/// Coefficient of `ε²` in `Q_ε K₀ f(x₀)^{−2/2♯}` for `n ≥ 7`.
pub fn analytic_c2(n: usize, curv: &CurvatureData) -> Result<f64> {
    if n < 7 {
        return Err(Error::Dimension {
            n,
            detail: "the ε² coefficient exists for n ≥ 7; use the logarithmic model for n = 6".into(),
        });
    }
    let nf = n as f64;
    Ok(curvature_bracket(n, curv) / (2.0 * nf * (nf * nf - 4.0) * (nf - 6.0)))
}

/// Coefficient of `ε² ln(1/ε²)` for `n = 6` in the closed form
/// `(n−4)(Tr A − 2R)/((n²−4) I_n^{n/2−1})`.
pub fn analytic_c2_log(n: usize, curv: &CurvatureData) -> Result<f64> {
    if n != 6 {
        return Err(Error::Dimension {
            n,
            detail: "the logarithmic coefficient is defined for n = 6 only".into(),
        });
    }
    let nf = n as f64;
    Ok((nf - 4.0) * (curv.tr_a0 - 2.0 * curv.r0) / ((nf * nf - 4.0) * ipq(nf, nf / 2.0 - 1.0)?))
}

/// The logarithmic coefficient assembled from the separate expansions of
/// `μ(u_ε)` and `γ(u_ε)`: `(n−4)(Tr A − 2R)/(n²(n²−4) I_n^{n/2−1})`.
/// It differs from [`analytic_c2_log`] by the factor `n²`.
pub fn c2_log_from_terms(n: usize, curv: &CurvatureData) -> Result<f64> {
    Ok(analytic_c2_log(n, curv)? / (n * n) as f64)
}

/// Fit model for the normalized quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionModel {
    /// `L (1 + c ε² + d ε^{min(n−4, 4)})`, `n ≥ 7`.
    Quadratic,
    /// `L (1 + c ε² ln(1/ε²) + d ε² + e ε⁴)`, `n = 6`. The main and the
    /// `ε²` columns are nearly collinear over practical ε ranges, so the
    /// `ε⁴` term (from the cutoff) must be fitted too or it biases `c`.
    Logarithmic,
}

impl ExpansionModel {
    pub fn for_dimension(n: usize) -> Result<Self> {
        match n {
            6 => Ok(Self::Logarithmic),
            n if n >= 7 => Ok(Self::Quadratic),
            _ => Err(Error::Dimension {
                n,
                detail: "no curvature coefficient in the expansion for n = 5".into(),
            }),
        }
    }

    /// Columns `[1, main, nuisance…]` at `ε`.
    fn columns(&self, n: usize, eps: f64) -> Vec<f64> {
        let e2 = eps * eps;
        match self {
            Self::Quadratic => vec![1.0, e2, eps.powi((n as i32 - 4).min(4))],
            Self::Logarithmic => vec![1.0, e2 * (1.0 / e2).ln(), e2, e2 * e2],
        }
    }
}

/// One row of an ε-sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub mu: f64,
    pub gamma: f64,
    pub q: f64,
    /// `Q_ε K₀ f(x₀)^{−2/2♯}`.
    pub q_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionFit {
    pub model: ExpansionModel,
    pub eps_list: Vec<f64>,
    pub q_values: Vec<f64>,
    pub q_normalized: Vec<f64>,
    /// Fitted `ε⁰` value of the normalized quotient.
    pub leading: f64,
    /// Fitted main coefficient, relative to `leading`.
    pub c2_fit: f64,
    /// Fitted nuisance coefficients, relative to `leading`.
    pub nuisance: Vec<f64>,
    pub c2_analytic: f64,
    /// `|c2_fit − c2_analytic| / |c2_analytic|`; absent when the analytic value is zero.
    pub rel_error: Option<f64>,
    /// Largest and smallest ε used by the fit.
    pub fit_window: (f64, f64),
    pub points_used: usize,
    /// Largest absolute fit residual of the normalized quotient.
    pub max_residual: f64,
    /// For `n = 6` only, see [`c2_log_from_terms`].
    pub c2_from_terms: Option<f64>,
}

/// Evaluates `μ`, `γ` and `Q` for every ε concurrently; failures are
/// gathered and reported together.
pub fn sweep(spec: &ProblemSpec, eps_list: &[f64], delta: f64) -> Result<Vec<SweepEntry>> {
    let lead = leading_value(spec.dim(), spec.curvature.f0)?;
    let two_sharp = spec.two_sharp();
    let results: Vec<Result<SweepEntry>> = eps_list
        .par_iter()
        .map(|&eps| {
            let params = TestFunctionParams::new(eps, delta)?;
            let mu = mu_of_u_eps(spec, &params)?.total;
            let gamma = gamma_of_u_eps(spec, &params)?;
            let q = mu / gamma.powf(2.0 / two_sharp);
            Ok(SweepEntry {
                eps,
                mu,
                gamma,
                q,
                q_normalized: q / lead,
            })
        })
        .collect();
    let failures: Vec<String> = results
        .iter()
        .zip(eps_list)
        .filter_map(|(r, e)| r.as_ref().err().map(|err| format!("ε = {e:e}: {err}")))
        .collect();
    if !failures.is_empty() {
        if failures.len() == 1 {
            return Err(results.into_iter().find_map(|r| r.err()).unwrap());
        }
        return Err(Error::InvalidProblem(failures.join("; ")));
    }
    Ok(results.into_iter().map(|r| r.unwrap()).collect())
}

/// Least squares on columns scaled to unit max norm.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let (m, k) = (rows.len(), rows[0].len());
    let mut scale = vec![0.0f64; k];
    for row in rows {
        for (s, v) in scale.iter_mut().zip(row) {
            *s = s.max(v.abs());
        }
    }
    if scale.iter().any(|&s| s == 0.0) {
        return Err(Error::DegenerateFit("a model column vanishes on the ε list".into()));
    }
    let a = DMatrix::from_fn(m, k, |i, j| rows[i][j] / scale[j]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let smallest = svd.singular_values.min();
    let largest = svd.singular_values.max();
    if !(smallest > 1e-13 * largest) {
        return Err(Error::DegenerateFit("model columns are linearly dependent".into()));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    Ok(x.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

/// Sweeps `eps_list` and fits the model selected by the dimension.
///
/// The list must be strictly decreasing, hold one more value than the model
/// has columns and span at least a decade. If the fit residual exceeds a
/// thousandth of the fitted ε-dependence, the largest ε is dropped while two
/// spare points remain. The window actually used is reported.
pub fn fit_expansion(spec: &ProblemSpec, eps_list: &[f64], delta: f64) -> Result<ExpansionFit> {
    let n = spec.dim();
    let model = ExpansionModel::for_dimension(n)?;
    let needed = model.columns(n, 1.0).len() + 1;
    if eps_list.len() < needed {
        return Err(Error::DegenerateFit(format!(
            "need at least {needed} ε values, got {}",
            eps_list.len()
        )));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::DegenerateFit("ε list must be strictly decreasing".into()));
    }
    if eps_list[0] < 10.0 * eps_list[eps_list.len() - 1] * (1.0 - 1e-12) {
        return Err(Error::DegenerateFit("ε list must span at least a decade".into()));
    }
    let entries = sweep(spec, eps_list, delta)?;
    let c2_analytic = match model {
        ExpansionModel::Quadratic => analytic_c2(n, &spec.curvature)?,
        ExpansionModel::Logarithmic => analytic_c2_log(n, &spec.curvature)?,
    };
    let mut start = 0;
    let (coef, max_residual) = loop {
        let used = &entries[start..];
        let rows: Vec<Vec<f64>> = used.iter().map(|e| model.columns(n, e.eps)).collect();
        let y: Vec<f64> = used.iter().map(|e| e.q_normalized).collect();
        let coef = least_squares(&rows, &y)?;
        let max_residual = rows
            .iter()
            .zip(&y)
            .map(|(r, yi)| (r.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>() - yi).abs())
            .fold(0.0, f64::max);
        let variation = y.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - y.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if max_residual <= 1e-3 * variation || used.len() <= coef.len() + 2 {
            break (coef, max_residual);
        }
        start += 1;
    };
    let leading = coef[0];
    let c2_fit = coef[1] / leading;
    Ok(ExpansionFit {
        model,
        eps_list: eps_list.to_vec(),
        q_values: entries.iter().map(|e| e.q).collect(),
        q_normalized: entries.iter().map(|e| e.q_normalized).collect(),
        leading,
        c2_fit,
        nuisance: coef[2..].iter().map(|c| c / leading).collect(),
        c2_analytic,
        rel_error: (c2_analytic != 0.0).then(|| (c2_fit - c2_analytic).abs() / c2_analytic.abs()),
        fit_window: (entries[start].eps, entries[entries.len() - 1].eps),
        points_used: entries.len() - start,
        max_residual,
        c2_from_terms: (model == ExpansionModel::Logarithmic)
            .then(|| c2_log_from_terms(n, &spec.curvature))
            .transpose()?,
    })
}

/// `n(n−4)(n²−4) ω_n / 2ⁿ`, the limit of `ε^{n−4} μ(u_ε)` in flat space.
pub fn flat_mu_limit(n: usize) -> Result<f64> {
    let nf = n as f64;
    Ok(nf * (nf - 4.0) * (nf * nf - 4.0) * sphere_volume(n)? / 2f64.powi(n as i32))
}

/// `ω_n / 2ⁿ`, the limit of `εⁿ γ(u_ε)` in flat space with `f ≡ 1`.
pub fn flat_gamma_limit(n: usize) -> Result<f64> {
    Ok(sphere_volume(n)? / 2f64.powi(n as i32))
}

/// Report combining the discrete threshold test, the sign hypothesis on
/// the expansion coefficient and the nodal count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub mu: Option<f64>,
    pub threshold: f64,
    /// `μ < γ^{2/2♯}/(K₀ ‖f‖_∞^{2/2♯})` for the final continuation stage.
    pub mu_below_threshold: Option<bool>,
    pub c2_model: Option<ExpansionModel>,
    pub c2_analytic: Option<f64>,
    pub c2_fit: Option<f64>,
    /// The analytic coefficient is strictly negative.
    pub hypothesis_holds: bool,
    pub nodal_count: Option<usize>,
    /// All three conditions hold.
    pub verdict: bool,
}

pub fn threshold_certificate(
    spec: &ProblemSpec,
    trace: Option<&ContinuationTrace>,
    fit: Option<&ExpansionFit>,
) -> Result<Certificate> {
    let n = spec.dim();
    let threshold = crate::solver::nontriviality_threshold(spec)?;
    let model = ExpansionModel::for_dimension(n).ok();
    let c2_analytic = match model {
        Some(ExpansionModel::Quadratic) => Some(analytic_c2(n, &spec.curvature)?),
        Some(ExpansionModel::Logarithmic) => Some(analytic_c2_log(n, &spec.curvature)?),
        None => None,
    };
    let completed = trace.filter(|t| t.completed());
    let mu = completed.map(|t| t.limit_mu);
    let mu_below_threshold = mu.map(|m| m < threshold);
    let nodal_count = completed.map(|t| t.nodal_count);
    let hypothesis_holds = c2_analytic.is_some_and(|c| c < 0.0);
    Ok(Certificate {
        mu,
        threshold,
        mu_below_threshold,
        c2_model: model,
        c2_analytic,
        c2_fit: fit.map(|f| f.c2_fit),
        hypothesis_holds,
        verdict: mu_below_threshold == Some(true)
            && hypothesis_holds
            && nodal_count.is_some_and(|c| c >= 1),
        nodal_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_metric_preset, MetricPreset};
    use crate::operators::BoundaryData;
    use crate::profile::RadialProfile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball_spec(n: usize, preset: MetricPreset, m: usize, eps_min: f64, f: RadialProfile, a: f64) -> ProblemSpec {
        let grid = RadialGrid::graded_ball(1.0, m, n, eps_min, MIN_NODES_BELOW_EPS + 2).unwrap();
        let metric = make_metric_preset(&preset, &grid).unwrap();
        ProblemSpec::new(
            grid,
            metric,
            RadialProfile::constant(a),
            RadialProfile::zero(),
            f,
            BoundaryData::ZERO,
            None,
            1.0,
        )
        .unwrap()
    }

    fn curv(r0: f64, tr_a0: f64, lap: f64) -> CurvatureData {
        CurvatureData::new(r0, tr_a0, lap, 1.0).unwrap()
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.3, 0.4), (1.0, 0.0, 0.0));
        assert_eq!(cutoff(0.8, 0.4), (0.0, 0.0, 0.0));
        let mut last = 1.0;
        for k in 1..100 {
            let r = 0.4 + 0.4 * k as f64 / 100.0;
            let (e, d, _) = cutoff(r, 0.4);
            assert!((0.0..=1.0).contains(&e) && e <= last && d <= 0.0);
            last = e;
        }
        // C² joints.
        for r in [0.4, 0.8] {
            let (lo, hi) = (cutoff(r - 1e-9, 0.4), cutoff(r + 1e-9, 0.4));
            assert!((lo.0 - hi.0).abs() < 1e-8 && (lo.1 - hi.1).abs() < 1e-6 && (lo.2 - hi.2).abs() < 1e-4);
        }
    }

    #[test]
    fn bubble_derivatives_match_finite_differences() {
        let b = Bubble::new(7, TestFunctionParams::new(0.05, 0.3).unwrap());
        for r in [0.01, 0.2, 0.45] {
            let h = 1e-5;
            let (u, d1, d2) = b.eval(r);
            let (up, dp, _) = b.eval(r + h);
            let (um, dm, _) = b.eval(r - h);
            assert!((d1 - (up - um) / (2.0 * h)).abs() < 1e-6 * d1.abs().max(u.abs()));
            assert!((d2 - (dp - dm) / (2.0 * h)).abs() < 1e-5 * d2.abs().max(d1.abs()));
        }
    }

    #[test]
    fn nodal_values() {
        let grid = RadialGrid::graded_ball(1.0, 400, 8, 0.01, 14).unwrap();
        let p = TestFunctionParams::new(0.01, 0.3).unwrap();
        let u = build_u_eps(&grid, &p, 8).unwrap();
        assert!((u[0] - 0.01f64.powi(-4)).abs() < 1e-9 * u[0]);
        assert!(grid.nodes().iter().zip(&u).filter(|(r, _)| **r >= 0.6).all(|(_, v)| *v == 0.0));
        let b = Bubble::new(8, TestFunctionParams::new(0.3, 0.3).unwrap());
        assert!((b.eval(0.3).0 - 0.18f64.powi(-2)).abs() < 1e-12);
        let coarse = RadialGrid::uniform(0.0, 1.0, 100, 8).unwrap();
        assert!(matches!(build_u_eps(&coarse, &p, 8), Err(Error::Resolution { .. })));
    }

    #[test]
    fn flat_leading_orders() {
        let n = 7;
        let spec = ball_spec(n, MetricPreset::Flat, 3000, 1e-3, RadialProfile::constant(1.0), 0.0);
        let p = TestFunctionParams::new(1e-3, 0.4).unwrap();
        let mu = mu_of_u_eps(&spec, &p).unwrap();
        let scaled = mu.total * 1e-3f64.powi(3);
        assert!((scaled / flat_mu_limit(n).unwrap() - 1.0).abs() < 1e-6);
        let g = gamma_of_u_eps(&spec, &p).unwrap() * 1e-3f64.powi(7);
        assert!((g / flat_gamma_limit(n).unwrap() - 1.0).abs() < 1e-6);
        let spec2 = ball_spec(n, MetricPreset::Flat, 3000, 1e-3, RadialProfile::constant(2.0), 0.0);
        let g2 = gamma_of_u_eps(&spec2, &p).unwrap();
        assert!((g2 / gamma_of_u_eps(&spec, &p).unwrap() - 2.0).abs() < 1e-12);
        // f scales Q by c^{−2/2♯}.
        let ratio = q_eps(&spec2, &p).unwrap() / q_eps(&spec, &p).unwrap();
        assert!((ratio - 2f64.powf(-2.0 / spec.two_sharp())).abs() < 1e-12);
        assert!((q_eps(&spec, &p).unwrap() / leading_value(n, 1.0).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn potential_term_is_order_eps_four_above_dimension_eight() {
        let n = 9;
        let spec = ball_spec(n, MetricPreset::Flat, 3000, 1e-3, RadialProfile::constant(1.0), 1.0);
        let vals: Vec<(f64, f64)> = [0.004, 0.002, 0.001]
            .iter()
            .map(|&e| {
                let mu = mu_of_u_eps(&spec, &TestFunctionParams::new(e, 0.4).unwrap()).unwrap();
                (e, mu.potential * e.powi(n as i32 - 4))
            })
            .collect();
        for w in vals.windows(2) {
            let slope = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
            assert!((slope - 4.0).abs() < 0.05, "{slope}");
        }
    }

    #[test]
    fn analytic_coefficients() {
        assert_eq!(analytic_c2(7, &curv(0.0, 0.0, 0.0)).unwrap(), 0.0);
        let c = analytic_c2(7, &curv(1.0, 0.0, 0.0)).unwrap();
        assert!((c + 124.0 / 630.0).abs() < 1e-15);
        assert!(analytic_c2(6, &curv(1.0, 0.0, 0.0)).is_err());
        assert_eq!(analytic_c2_log(6, &curv(1.0, 2.0, 0.0)).unwrap(), 0.0);
        assert!(analytic_c2_log(6, &curv(1.0, 0.0, 0.0)).unwrap() < 0.0);
        let v = analytic_c2_log(6, &curv(0.0, 1.0, 0.0)).unwrap();
        assert!((v - 2.0 / (32.0 / 30.0)).abs() < 1e-13);
        assert!(analytic_c2_log(7, &curv(0.0, 1.0, 0.0)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.random_range(7..=14);
            let c = curv(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let a = analytic_c2(n, &c).unwrap();
            assert_eq!(a < 0.0, curvature_bracket(n, &c) < 0.0);
        }
    }

    #[test]
    fn sphere_quotient_decreases_in_eps_when_coefficient_is_negative() {
        let spec = ball_spec(7, MetricPreset::RoundSphere, 2000, 2e-3, RadialProfile::constant(1.0), 0.0);
        assert!(analytic_c2(7, &spec.curvature).unwrap() < 0.0);
        let qs: Vec<f64> = [0.002, 0.004, 0.008]
            .iter()
            .map(|&e| q_eps(&spec, &TestFunctionParams::new(e, 0.4).unwrap()).unwrap())
            .collect();
        assert!(qs[0] > qs[1] && qs[1] > qs[2], "{qs:?}");
    }

    #[test]
    fn flat_fit_has_vanishing_coefficient() {
        let spec = ball_spec(7, MetricPreset::Flat, 3000, 2e-3, RadialProfile::constant(1.0), 0.0);
        let eps: Vec<f64> = (0..8).map(|k| 0.03 * (0.002f64 / 0.03).powf(k as f64 / 7.0)).collect();
        let fit = fit_expansion(&spec, &eps, 0.4).unwrap();
        assert!(fit.c2_fit.abs() < 1e-2, "{}", fit.c2_fit);
        assert!(fit.rel_error.is_none());
        assert!((fit.leading - 1.0).abs() < 1e-6);
        assert!(fit_expansion(&spec, &eps[..3], 0.4).is_err());
        assert!(fit_expansion(&spec, &eps[4..], 0.4).is_err());
    }

    #[test]
    fn six_dimensional_log_coefficient_follows_the_term_expansions() {
        let eps: Vec<f64> = (0..12).map(|k| 0.03 * (0.001f64 / 0.03).powf(k as f64 / 11.0)).collect();
        // Flat space with α ≡ 1 isolates the gradient term: Tr A = 6.
        let grid = RadialGrid::graded_ball(1.0, 8000, 6, 1e-3, MIN_NODES_BELOW_EPS + 4).unwrap();
        let metric = make_metric_preset(&MetricPreset::Flat, &grid).unwrap();
        let spec = ProblemSpec::new(
            grid,
            metric,
            RadialProfile::zero(),
            RadialProfile::constant(1.0),
            RadialProfile::constant(1.0),
            BoundaryData::ZERO,
            None,
            1.0,
        )
        .unwrap();
        let fit = fit_expansion(&spec, &eps, 0.4).unwrap();
        let from_terms = fit.c2_from_terms.unwrap();
        assert!((from_terms - 0.3125).abs() < 1e-12);
        assert!((fit.c2_fit / from_terms - 1.0).abs() < 0.05, "{} vs {from_terms}", fit.c2_fit);
        // Round sphere isolates the curvature term.
        let spec = ball_spec(6, MetricPreset::RoundSphere, 8000, 1e-3, RadialProfile::constant(1.0), 0.0);
        let fit = fit_expansion(&spec, &eps, 0.4).unwrap();
        assert!((fit.c2_fit / fit.c2_from_terms.unwrap() - 1.0).abs() < 0.05, "{}", fit.c2_fit);
    }

    #[test]
    fn certificate_for_flat_homogeneous_problem() {
        let spec = ball_spec(7, MetricPreset::Flat, 400, 0.01, RadialProfile::constant(1.0), 0.0);
        let cert = threshold_certificate(&spec, None, None).unwrap();
        assert_eq!(cert.c2_analytic, Some(0.0));
        assert!(!cert.hypothesis_holds && !cert.verdict);
        let k0 = best_constant_k0(7).unwrap();
        assert!((cert.threshold - 1.0 / k0).abs() < 1e-14 / k0);
    }
}
