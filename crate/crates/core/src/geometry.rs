//! Radially symmetric background: grids on balls and annuli, the averaged
//! volume density `θ(r) = G(r)`, curvature data at the center, and volume
//! quadrature with `dv_g = ω_{n-1} θ(r) r^{n-1} dr`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{ProfileSource, RadialProfile};
use crate::quadrature::gauss_legendre5;
use crate::special::{sphere_volume, DimensionParams};

pub const MIN_NODES: usize = 8;

/// Ordered nodes on `[r_in, r_out]` for an `n`-dimensional radial domain.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dim: DimensionParams,
    nodes: Vec<f64>,
    uniform: bool,
}

impl RadialGrid {
    /// `m` equally spaced nodes including both end points.
    pub fn uniform(r_in: f64, r_out: f64, m: usize, n: usize) -> Result<Self> {
        check_extent(r_in, r_out, m)?;
        let h = (r_out - r_in) / (m - 1) as f64;
        let mut nodes: Vec<f64> = (0..m).map(|i| r_in + i as f64 * h).collect();
        nodes[m - 1] = r_out;
        Ok(Self {
            dim: DimensionParams::new(n)?,
            nodes,
            uniform: true,
        })
    }

    /// Ball grid with exponential clustering at the center, chosen so that
    /// at least `min_below` nodes lie strictly inside `(0, resolve)`.
    pub fn graded_ball(r_out: f64, m: usize, n: usize, resolve: f64, min_below: usize) -> Result<Self> {
        check_extent(0.0, r_out, m)?;
        if !(resolve > 0.0 && resolve < r_out) {
            return Err(Error::InvalidGrid(format!(
                "resolution scale {resolve} must lie in (0, {r_out})"
            )));
        }
        if min_below + 1 >= m {
            return Err(Error::InvalidGrid(format!(
                "{m} nodes cannot place {min_below} nodes below r = {resolve}"
            )));
        }
        let last = (m - 1) as f64;
        // Node index min_below sits at 0.9 * resolve.
        let target = 0.9 * resolve / r_out;
        let frac = min_below as f64 / last;
        let position = |kappa: f64| {
            if kappa < 1e-12 {
                frac
            } else {
                (kappa * frac).exp_m1() / kappa.exp_m1()
            }
        };
        let kappa = if position(0.0) <= target {
            0.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            while position(hi) > target {
                hi *= 2.0;
                if hi > 1e4 {
                    return Err(Error::InvalidGrid(format!(
                        "cannot resolve r = {resolve} with {m} nodes"
                    )));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if position(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        let mut nodes: Vec<f64> = (0..m)
            .map(|i| {
                let s = i as f64 / last;
                if kappa == 0.0 {
                    r_out * s
                } else {
                    r_out * (kappa * s).exp_m1() / kappa.exp_m1()
                }
            })
            .collect();
        nodes[0] = 0.0;
        nodes[m - 1] = r_out;
        Self::from_nodes(nodes, n)
    }

    pub fn from_nodes(nodes: Vec<f64>, n: usize) -> Result<Self> {
        if nodes.len() < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing".into()));
        }
        if !(nodes[0] >= 0.0) {
            return Err(Error::InvalidGrid("inner radius must be non-negative".into()));
        }
        let h = (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64;
        let uniform = nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        Ok(Self {
            dim: DimensionParams::new(n)?,
            nodes,
            uniform,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim.n()
    }

    pub fn dimension(&self) -> DimensionParams {
        self.dim
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_in(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_out(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// True when the domain contains the center `r = 0`.
    pub fn is_ball(&self) -> bool {
        self.nodes[0] == 0.0
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn spacing(&self) -> Option<f64> {
        self.uniform
            .then(|| (self.r_out() - self.r_in()) / (self.len() - 1) as f64)
    }

    /// Same extent and dimension with a different node count.
    pub fn with_size(&self, m: usize) -> Result<Self> {
        Self::uniform(self.r_in(), self.r_out(), m, self.dim())
    }
}

fn check_extent(r_in: f64, r_out: f64, m: usize) -> Result<()> {
    if !(r_in >= 0.0 && r_out > r_in && r_out.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "need 0 <= r_in < r_out, got [{r_in}, {r_out}]"
        )));
    }
    if m < MIN_NODES {
        return Err(Error::InvalidGrid(format!(
            "need at least {MIN_NODES} nodes, got {m}"
        )));
    }
    Ok(())
}

/// Which background metric to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricPreset {
    Flat,
    /// Unit round sphere, scalar curvature `n(n-1)`.
    RoundSphere,
    Custom {
        theta: ProfileSource,
        scalar_curvature: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Density {
    Flat,
    RoundSphere,
    Custom(RadialProfile),
}

/// Spherically averaged volume density together with `R(x₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMetric {
    dim: usize,
    density: Density,
    scalar_curvature: f64,
    omega: f64,
    preset: MetricPreset,
}

fn sinc(r: f64) -> f64 {
    if r.abs() < 1e-4 {
        let r2 = r * r;
        1.0 - r2 / 6.0 + r2 * r2 / 120.0
    } else {
        r.sin() / r
    }
}

// cot r - 1/r
fn cot_minus_inverse(r: f64) -> f64 {
    if r.abs() < 1e-3 {
        let r2 = r * r;
        -r / 3.0 - r * r2 / 45.0 - 2.0 * r * r2 * r2 / 945.0
    } else {
        1.0 / r.tan() - 1.0 / r
    }
}

/// Builds a metric and validates it on `grid`.
pub fn make_metric_preset(preset: &MetricPreset, grid: &RadialGrid) -> Result<RadialMetric> {
    let n = grid.dim();
    let nf = n as f64;
    let (density, scalar_curvature) = match preset {
        MetricPreset::Flat => (Density::Flat, 0.0),
        MetricPreset::RoundSphere => {
            if grid.r_out() >= std::f64::consts::PI {
                return Err(Error::InvalidMetric(format!(
                    "round sphere needs r_out < π, got {}",
                    grid.r_out()
                )));
            }
            (Density::RoundSphere, nf * (nf - 1.0))
        }
        MetricPreset::Custom {
            theta,
            scalar_curvature,
        } => {
            let profile = RadialProfile::from_source(theta)?;
            let at_zero = profile.value(0.0);
            if (at_zero - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidMetric(format!(
                    "theta(0) must equal 1, got {at_zero}"
                )));
            }
            (Density::Custom(profile), *scalar_curvature)
        }
    };
    let metric = RadialMetric {
        dim: n,
        density,
        scalar_curvature,
        omega: sphere_volume(n - 1)?,
        preset: preset.clone(),
    };
    let nodes = grid.nodes();
    let probes = nodes
        .iter()
        .copied()
        .chain(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    for r in probes {
        let t = metric.theta(r);
        if !(t > 0.0) {
            return Err(Error::InvalidMetric(format!(
                "theta({r}) = {t} is not positive"
            )));
        }
    }
    Ok(metric)
}

impl RadialMetric {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn preset(&self) -> &MetricPreset {
        &self.preset
    }

    /// `R(x₀)`.
    pub fn scalar_curvature(&self) -> f64 {
        self.scalar_curvature
    }

    /// `θ(r) = G(r)`.
    pub fn theta(&self, r: f64) -> f64 {
        match &self.density {
            Density::Flat => 1.0,
            Density::RoundSphere => sinc(r).powi(self.dim as i32 - 1),
            Density::Custom(p) => p.value(r),
        }
    }

    /// `θ'(r) / θ(r)`.
    pub fn theta_log_derivative(&self, r: f64) -> f64 {
        match &self.density {
            Density::Flat => 0.0,
            Density::RoundSphere => (self.dim as f64 - 1.0) * cot_minus_inverse(r),
            Density::Custom(p) => {
                let (v, d, _) = p.eval(r);
                d / v
            }
        }
    }

    /// `ρ'/ρ = (n-1)/r + θ'/θ`, the radial mean-curvature term of `Δ_g`.
    pub fn radial_drift(&self, r: f64) -> f64 {
        (self.dim as f64 - 1.0) / r + self.theta_log_derivative(r)
    }

    /// Volume density `ρ(r) = ω_{n-1} θ(r) r^{n-1}`.
    pub fn density(&self, r: f64) -> f64 {
        self.omega * self.theta(r) * r.powi(self.dim as i32 - 1)
    }

    /// `∫_a^b ρ(r) dr`.
    pub fn shell_volume(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        // Split long shells so the Gauss rule stays accurate for curved θ.
        let pieces = 4;
        let h = (b - a) / pieces as f64;
        (0..pieces)
            .map(|k| {
                let lo = a + k as f64 * h;
                gauss_legendre5(|r| self.density(r), lo, lo + h)
            })
            .sum()
    }

    /// Quadrature weight of every node: the volume of its dual cell.
    pub fn node_weights(&self, grid: &RadialGrid) -> Vec<f64> {
        let r = grid.nodes();
        let m = r.len();
        (0..m)
            .map(|i| {
                let lo = if i == 0 { r[0] } else { 0.5 * (r[i - 1] + r[i]) };
                let hi = if i + 1 == m { r[m - 1] } else { 0.5 * (r[i] + r[i + 1]) };
                self.shell_volume(lo, hi)
            })
            .collect()
    }
}

/// Curvature data at the center `x₀` that enters the test-function
/// expansions. `lap_f_over_f` uses the sign convention `Δ = -div ∇`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureData {
    pub r0: f64,
    pub tr_a0: f64,
    pub lap_f_over_f: f64,
    pub f0: f64,
}

impl CurvatureData {
    pub fn new(r0: f64, tr_a0: f64, lap_f_over_f: f64, f0: f64) -> Result<Self> {
        if !(f0 > 0.0) {
            return Err(Error::InvalidProblem(format!("f(x0) must be positive, got {f0}")));
        }
        Ok(Self {
            r0,
            tr_a0,
            lap_f_over_f,
            f0,
        })
    }

    /// Reads the data off radial profiles: `Tr A(x₀) = n α(0)` and, for
    /// `f = f₀ + f₂ r² + …`, `Δf(x₀) = -2n f₂`.
    pub fn from_profiles(
        metric: &RadialMetric,
        alpha: &RadialProfile,
        f: &RadialProfile,
    ) -> Result<Self> {
        let nf = metric.dim() as f64;
        let (f0, _, f_dd) = f.eval(0.0);
        let f2 = 0.5 * f_dd;
        Self::new(
            metric.scalar_curvature(),
            nf * alpha.value(0.0),
            -2.0 * nf * f2 / f0,
            f0,
        )
    }
}

/// Least-squares fit of the `r²` coefficient of `θ` near the center, using
/// the model `θ - 1 = c₂ r² + c₄ r⁴` on the nodes with `r ≤ r_out/8`.
pub fn fit_g_expansion(metric: &RadialMetric, grid: &RadialGrid) -> Result<f64> {
    if !grid.is_ball() {
        return Err(Error::InvalidGrid(
            "the density expansion needs the center r = 0 in the domain".into(),
        ));
    }
    let window = grid.r_out() / 8.0;
    let (mut s44, mut s46, mut s66, mut b4, mut b6) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut used = 0;
    for &r in grid.nodes().iter().filter(|&&r| r > 0.0 && r <= window) {
        let (x2, x4) = (r * r, r.powi(4));
        let y = metric.theta(r) - 1.0;
        s44 += x2 * x2;
        s46 += x2 * x4;
        s66 += x4 * x4;
        b4 += x2 * y;
        b6 += x4 * y;
        used += 1;
    }
    if used < 3 {
        return Err(Error::InvalidGrid(format!(
            "only {used} nodes in the fit window [0, {window}]"
        )));
    }
    let det = s44 * s66 - s46 * s46;
    if det.abs() <= f64::EPSILON * s44 * s66 {
        return Err(Error::InvalidGrid("ill-conditioned fit window".into()));
    }
    Ok((b4 * s66 - b6 * s46) / det)
}

/// `∫ values dv_g` with dual-cell weights.
pub fn volume_integral(grid: &RadialGrid, metric: &RadialMetric, values: &[f64]) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    Ok(metric
        .node_weights(grid)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum())
}
