//! Finite-volume discretization of the radial Paneitz–Branson operator
//! `P u = Δ²u − div(α ∇u) + a u` with clamped boundary conditions.
//!
//! The Laplacian (sign convention `Δ = −div ∇`) is written in flux form on
//! dual cells `[r_{i−½}, r_{i+½}]`:
//!
//! ```text
//! (Δ_h u)_i = −(1/W_i) [ρ_{i+½}(u_{i+1}−u_i)/h_i − ρ_{i−½}(u_i−u_{i−1})/h_{i−1}]
//! ```
//!
//! where `W_i` is the exact volume of the cell and `ρ = ω_{n−1}θ r^{n−1}`.
//! The flux through `r = 0` vanishes, which encodes the parity condition
//! `u′(0) = 0` without a ghost node. At a boundary node the Laplacian is
//! evaluated with a ghost value eliminated through the prescribed slope.
//!
//! The energy `I(w) = Σ W (Δ_h w)² + Σ_faces ρ α (δw)²/h + Σ W a w²` is a
//! symmetric pentadiagonal form `wᵀKw` on the interior unknowns and
//! `P_h = W⁻¹K` reproduces `Δ_h(Δ_h w) − D_A w + a w` node by node.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::banded::SymBanded;
use crate::error::{Error, Result};
use crate::geometry::{CurvatureData, RadialGrid, RadialMetric};
use crate::profile::RadialProfile;

/// Clamped data on one boundary sphere: `u = φ₁` and `∂_ν u = φ₂`, with
/// `ν` the outward normal of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryData {
    pub phi1: f64,
    pub phi2: f64,
}

impl BoundaryData {
    pub const ZERO: BoundaryData = BoundaryData { phi1: 0.0, phi2: 0.0 };

    pub fn new(phi1: f64, phi2: f64) -> Self {
        Self { phi1, phi2 }
    }

    pub fn is_zero(&self) -> bool {
        self.phi1 == 0.0 && self.phi2 == 0.0
    }
}

/// `d/dr` of a full field at the boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundarySlopes {
    /// Present only for annuli.
    pub inner: Option<f64>,
    pub outer: f64,
}

/// A complete radial problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub grid: RadialGrid,
    pub metric: RadialMetric,
    pub a: RadialProfile,
    pub alpha: RadialProfile,
    pub f: RadialProfile,
    pub outer: BoundaryData,
    /// Data on the inner sphere `r = r_in`; `None` exactly when the domain is a ball.
    pub inner: Option<BoundaryData>,
    pub gamma: f64,
    pub curvature: CurvatureData,
}

impl ProblemSpec {
    /// Validates the instance; curvature data at the center are read off
    /// the profiles (see [`CurvatureData::from_profiles`]).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: RadialGrid,
        metric: RadialMetric,
        a: RadialProfile,
        alpha: RadialProfile,
        f: RadialProfile,
        outer: BoundaryData,
        inner: Option<BoundaryData>,
        gamma: f64,
    ) -> Result<Self> {
        let curvature = CurvatureData::from_profiles(&metric, &alpha, &f)?;
        Self::with_curvature(grid, metric, a, alpha, f, outer, inner, gamma, curvature)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_curvature(
        grid: RadialGrid,
        metric: RadialMetric,
        a: RadialProfile,
        alpha: RadialProfile,
        f: RadialProfile,
        outer: BoundaryData,
        inner: Option<BoundaryData>,
        gamma: f64,
        curvature: CurvatureData,
    ) -> Result<Self> {
        if grid.dim() != metric.dim() {
            return Err(Error::InvalidProblem(format!(
                "grid dimension {} differs from metric dimension {}",
                grid.dim(),
                metric.dim()
            )));
        }
        match (grid.is_ball(), inner.is_some()) {
            (true, true) => {
                return Err(Error::InvalidProblem(
                    "a ball has no inner boundary component".into(),
                ))
            }
            (false, false) => {
                return Err(Error::InvalidProblem(
                    "an annulus needs data on the inner sphere".into(),
                ))
            }
            _ => {}
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidProblem(format!("γ = {gamma} is not finite")));
        }
        for &r in grid.nodes() {
            let fr = f.value(r);
            if !(fr > 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "f must be positive on the domain, f({r}) = {fr}"
                )));
            }
        }
        Ok(Self {
            grid,
            metric,
            a,
            alpha,
            f,
            outer,
            inner,
            gamma,
            curvature,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn two_sharp(&self) -> f64 {
        self.grid.dimension().two_sharp()
    }

    pub fn has_zero_boundary_data(&self) -> bool {
        self.outer.is_zero() && self.inner.is_none_or(|d| d.is_zero())
    }

    /// `f` at the grid nodes.
    pub fn f_nodes(&self) -> Vec<f64> {
        self.f.sample(self.grid.nodes())
    }

    /// Same problem on a different grid over the same domain.
    pub fn regrid(&self, grid: RadialGrid) -> Result<Self> {
        let metric = crate::geometry::make_metric_preset(self.metric.preset(), &grid)?;
        Self::with_curvature(
            grid,
            metric,
            self.a.clone(),
            self.alpha.clone(),
            self.f.clone(),
            self.outer,
            self.inner,
            self.gamma,
            self.curvature,
        )
    }
}

/// Flux-form Laplacian on a radial grid.
#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    nodes: Vec<f64>,
    /// Volume of the dual cell of every node.
    weights: Vec<f64>,
    /// `ρ(r_{i+½})` for the face between nodes `i` and `i+1`.
    face_density: Vec<f64>,
    spacing: Vec<f64>,
    /// `ρ′/ρ` at each boundary node (unused entry for a ball center).
    drift_in: f64,
    drift_out: f64,
    ball: bool,
}

/// Builds the discrete Laplacian `Δ_h` on `grid`.
pub fn assemble_laplacian(grid: &RadialGrid, metric: &RadialMetric) -> DiscreteLaplacian {
    let nodes = grid.nodes().to_vec();
    let spacing: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
    let face_density = nodes
        .windows(2)
        .map(|w| metric.density(0.5 * (w[0] + w[1])))
        .collect();
    let ball = grid.is_ball();
    DiscreteLaplacian {
        weights: metric.node_weights(grid),
        face_density,
        spacing,
        drift_in: if ball { 0.0 } else { metric.radial_drift(grid.r_in()) },
        drift_out: metric.radial_drift(grid.r_out()),
        nodes,
        ball,
    }
}

impl DiscreteLaplacian {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices of the unknowns of the clamped problem: the center is an
    /// unknown for a ball, boundary nodes never are.
    pub fn dofs(&self) -> Range<usize> {
        let m = self.nodes.len();
        if self.ball {
            0..m - 1
        } else {
            1..m - 1
        }
    }

    /// Flux-stencil coefficients `(lower, upper)` of row `i`, so that
    /// `(Δ_h u)_i = −upper (u_{i+1} − u_i) + lower (u_i − u_{i−1})`.
    fn row(&self, i: usize) -> (f64, f64) {
        let lower = if i == 0 {
            0.0
        } else {
            self.face_density[i - 1] / (self.spacing[i - 1] * self.weights[i])
        };
        let upper = self.face_density[i] / (self.spacing[i] * self.weights[i]);
        (lower, upper)
    }

    fn stencil(&self, u: &[f64], i: usize) -> f64 {
        let (lower, upper) = self.row(i);
        let left = if i == 0 { 0.0 } else { lower * (u[i] - u[i - 1]) };
        left - upper * (u[i + 1] - u[i])
    }

    /// `Δ_h u` on the unknown nodes (the stencil rows).
    pub fn apply_interior(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.nodes.len(), u.len())?;
        Ok(self.dofs().map(|i| self.stencil(u, i)).collect())
    }

    /// `Δ_h u` at every node; boundary rows eliminate the ghost value with
    /// the slope `u′` at that node.
    pub fn apply_full(&self, u: &[f64], slopes: &BoundarySlopes) -> Result<Vec<f64>> {
        let m = self.nodes.len();
        check_len(m, u.len())?;
        let mut out = vec![0.0; m];
        for i in self.dofs() {
            out[i] = self.stencil(u, i);
        }
        let h = self.spacing[m - 2];
        let s = slopes.outer;
        out[m - 1] = -2.0 * (u[m - 2] - u[m - 1] + h * s) / (h * h) - self.drift_out * s;
        if !self.ball {
            let s = slopes.inner.ok_or_else(|| {
                Error::InvalidProblem("an annulus needs the inner boundary slope".into())
            })?;
            let h = self.spacing[0];
            out[0] = -2.0 * (u[1] - u[0] - h * s) / (h * h) - self.drift_in * s;
        }
        Ok(out)
    }

    /// Weight attached to the boundary Laplacian value in the energy, fixed
    /// so that `K = LᵀWL + Σ Ŵ d dᵀ` reproduces `W Δ_h(Δ_h w)`.
    fn boundary_weights(&self) -> (Option<f64>, f64) {
        let m = self.nodes.len();
        let outer = 0.5 * self.spacing[m - 2] * self.face_density[m - 2];
        let inner = (!self.ball).then(|| 0.5 * self.spacing[0] * self.face_density[0]);
        (inner, outer)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// Assembled clamped Paneitz–Branson operator.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    lap: DiscreteLaplacian,
    /// `K` on the unknowns: `I(w) = wᵀKw`.
    stiffness: SymBanded,
    /// Clamped bilaplacian part `LᵀWL + Σ Ŵ d dᵀ` alone.
    bilaplacian: SymBanded,
    /// Discrete `‖Δu‖² + ‖∇u‖² + ‖u‖²`.
    gram: SymBanded,
    /// `ρ α / h` at every face.
    flux_alpha: Vec<f64>,
    a_nodes: Vec<f64>,
}

/// Adds `Σ_j c_j (row_j · w)²` contributions of the stencil rows of `lap`
/// (restricted to unknowns) into `k`.
fn add_laplacian_square(lap: &DiscreteLaplacian, k: &mut SymBanded) {
    let dofs = lap.dofs();
    let first = dofs.start;
    let idx = |i: usize| -> Option<usize> { dofs.contains(&i).then(|| i - first) };
    for i in lap.dofs() {
        let (lower, upper) = lap.row(i);
        // Row i of L as (node, coefficient) pairs.
        let mut entries: Vec<(usize, f64)> = vec![(i, lower + upper), (i + 1, -upper)];
        if i > 0 {
            entries.push((i - 1, -lower));
        }
        let w = lap.weights[i];
        for &(p, cp) in &entries {
            for &(q, cq) in &entries {
                if let (Some(a), Some(b)) = (idx(p), idx(q)) {
                    if a >= b {
                        k.add(a, b, w * cp * cq);
                    }
                }
            }
        }
    }
    let (inner_w, outer_w) = lap.boundary_weights();
    let m = lap.len();
    // Clamped w: Δ_b w = −2 w_{neighbor}/h².
    let h = lap.spacing[m - 2];
    let d = -2.0 / (h * h);
    let j = m - 2 - first;
    k.add(j, j, outer_w * d * d);
    if let Some(wi) = inner_w {
        let h = lap.spacing[0];
        let d = -2.0 / (h * h);
        let j = 1 - first;
        k.add(j, j, wi * d * d);
    }
}

/// Adds the face form `Σ_f c_f (w_{f+1} − w_f)²` with boundary values zero.
fn add_face_form(lap: &DiscreteLaplacian, coeff: &[f64], k: &mut SymBanded) {
    let dofs = lap.dofs();
    let first = dofs.start;
    for (f, &c) in coeff.iter().enumerate() {
        let (l, r) = (f, f + 1);
        let (il, ir) = (dofs.contains(&l), dofs.contains(&r));
        if il {
            k.add(l - first, l - first, c);
        }
        if ir {
            k.add(r - first, r - first, c);
        }
        if il && ir {
            k.add(r - first, l - first, -c);
        }
    }
}

fn bilaplacian_blocks(grid: &RadialGrid, metric: &RadialMetric) -> (DiscreteLaplacian, SymBanded) {
    let lap = assemble_laplacian(grid, metric);
    let mut k = SymBanded::zeros(lap.dofs().len(), 2);
    add_laplacian_square(&lap, &mut k);
    (lap, k)
}

/// The clamped bilaplacian `Δ_h²` as a `(Laplacian, K)` pair.
pub fn clamped_bilaplacian(grid: &RadialGrid, metric: &RadialMetric) -> (DiscreteLaplacian, SymBanded) {
    bilaplacian_blocks(grid, metric)
}

/// Assembles `P_h` for `spec`.
pub fn assemble_paneitz(spec: &ProblemSpec) -> Result<DiscreteOperator> {
    let (lap, bilaplacian) = bilaplacian_blocks(&spec.grid, &spec.metric);
    let nodes = &lap.nodes;
    let flux_alpha: Vec<f64> = nodes
        .windows(2)
        .enumerate()
        .map(|(f, w)| lap.face_density[f] * spec.alpha.value(0.5 * (w[0] + w[1])) / lap.spacing[f])
        .collect();
    let flux_unit: Vec<f64> = (0..nodes.len() - 1)
        .map(|f| lap.face_density[f] / lap.spacing[f])
        .collect();
    let a_nodes = spec.a.sample(nodes);
    for v in lap.weights.iter().chain(&flux_alpha).chain(&a_nodes) {
        if !v.is_finite() {
            return Err(Error::InvalidProblem(
                "non-finite coefficient in operator assembly".into(),
            ));
        }
    }
    if lap.weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidProblem(
            "non-positive cell volume; check θ on the domain".into(),
        ));
    }
    let dofs = lap.dofs();
    let dof_w: Vec<f64> = dofs.clone().map(|i| lap.weights[i]).collect();

    let mut stiffness = bilaplacian.clone();
    add_face_form(&lap, &flux_alpha, &mut stiffness);
    let mass_a: Vec<f64> = dofs.clone().map(|i| lap.weights[i] * a_nodes[i]).collect();
    stiffness.add_diagonal(&mass_a);

    let mut gram = bilaplacian.clone();
    add_face_form(&lap, &flux_unit, &mut gram);
    gram.add_diagonal(&dof_w);

    Ok(DiscreteOperator {
        lap,
        stiffness,
        bilaplacian,
        gram,
        flux_alpha,
        a_nodes,
    })
}

impl DiscreteOperator {
    pub fn laplacian(&self) -> &DiscreteLaplacian {
        &self.lap
    }

    pub fn dofs(&self) -> Range<usize> {
        self.lap.dofs()
    }

    pub fn n_dofs(&self) -> usize {
        self.lap.dofs().len()
    }

    pub fn n_nodes(&self) -> usize {
        self.lap.len()
    }

    /// Quadrature weights of all nodes.
    pub fn node_weights(&self) -> &[f64] {
        &self.lap.weights
    }

    /// Quadrature weights of the unknowns.
    pub fn dof_weights(&self) -> Vec<f64> {
        self.dofs().map(|i| self.lap.weights[i]).collect()
    }

    pub fn stiffness(&self) -> &SymBanded {
        &self.stiffness
    }

    pub fn bilaplacian(&self) -> &SymBanded {
        &self.bilaplacian
    }

    pub fn gram(&self) -> &SymBanded {
        &self.gram
    }

    /// Extends unknowns by the clamped boundary values (zero).
    pub fn embed(&self, w: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_nodes()];
        full[self.dofs()].copy_from_slice(w);
        full
    }

    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        u[self.dofs()].to_vec()
    }

    /// `P_h w = W⁻¹ K w` for a clamped field given by its unknowns.
    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_dofs(), w.len())?;
        let kw = self.stiffness.mul_vec(w);
        Ok(kw
            .iter()
            .zip(self.dofs())
            .map(|(v, i)| v / self.lap.weights[i])
            .collect())
    }

    /// `(1/ρ)(ρ α u′)′` on the unknown nodes, for a full field `u`.
    pub fn divergence_term(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_nodes(), u.len())?;
        Ok(self
            .dofs()
            .map(|i| {
                let right = self.flux_alpha[i] * (u[i + 1] - u[i]);
                let left = if i == 0 {
                    0.0
                } else {
                    self.flux_alpha[i - 1] * (u[i] - u[i - 1])
                };
                (right - left) / self.lap.weights[i]
            })
            .collect())
    }

    /// `P_h u` on the unknown nodes for a full field with boundary values
    /// and slopes `u′` that need not vanish.
    pub fn apply_full(&self, u: &[f64], slopes: &BoundarySlopes) -> Result<Vec<f64>> {
        let v = self.lap.apply_full(u, slopes)?;
        let bi = self.lap.apply_interior(&v)?;
        let div = self.divergence_term(u)?;
        Ok(self
            .dofs()
            .zip(bi.iter().zip(&div))
            .map(|(i, (b, d))| b - d + self.a_nodes[i] * u[i])
            .collect())
    }

    /// `⟨u, v⟩ = Σ W u v` over the unknowns.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.dofs()
            .zip(u.iter().zip(v))
            .map(|(i, (x, y))| self.lap.weights[i] * x * y)
            .sum()
    }
}

/// `I(w) = ∫ (Δw)² + α (w′)² + a w² dv_g` for clamped `w`.
pub fn energy(_spec: &ProblemSpec, op: &DiscreteOperator, w: &[f64]) -> Result<f64> {
    check_len(op.n_dofs(), w.len())?;
    Ok(op.stiffness.quadratic_form(w))
}

/// `∫ f |w + h|^q dv_g`, where `w` holds the unknowns and `h` a full field.
///
/// Accepts `q = 2` as well as the solver's range `(2, 2♯]`.
pub fn constraint_value(
    spec: &ProblemSpec,
    op: &DiscreteOperator,
    w: &[f64],
    h: &[f64],
    q: f64,
) -> Result<f64> {
    let critical = spec.two_sharp();
    if !(q >= 2.0 && q <= critical * (1.0 + 1e-15)) {
        return Err(Error::ExponentOutOfRange { q, critical });
    }
    check_len(op.n_dofs(), w.len())?;
    check_len(op.n_nodes(), h.len())?;
    let f = spec.f_nodes();
    let u = op.embed(w);
    Ok(u
        .iter()
        .zip(h)
        .zip(f.iter().zip(op.node_weights()))
        .map(|((wi, hi), (fi, wt))| wt * fi * (wi + hi).abs().powf(q))
        .sum())
}

/// Smallest generalized eigenvalue `Λ` of the pair (`K`, H²-Gram).
///
/// `Λ > 0` certifies coercivity of the discrete form. The eigenvalue is
/// located by bisection on the inertia of `K − σG`, which keeps the cost
/// linear in the number of nodes.
pub fn coercivity_check(_spec: &ProblemSpec, op: &DiscreteOperator) -> Result<f64> {
    smallest_generalized_eigenvalue(&op.stiffness, &op.gram)
}

pub(crate) fn smallest_generalized_eigenvalue(k: &SymBanded, g: &SymBanded) -> Result<f64> {
    let below = |sigma: f64| -> usize {
        let mut s = sigma;
        for attempt in 0..8 {
            if let Some(count) = k.plus_scaled(-s, g).negative_inertia() {
                return count;
            }
            s = sigma + (attempt + 1) as f64 * 1e-13 * sigma.abs().max(1e-300);
        }
        // Repeated exact zero pivots: treat σ as an eigenvalue from above.
        1
    };
    // Rayleigh quotient of the constant vector bounds Λ from above.
    let ones = vec![1.0; k.dim()];
    let mut hi = k.quadratic_form(&ones) / g.quadratic_form(&ones);
    if !hi.is_finite() {
        return Err(Error::Eigen("non-finite Rayleigh quotient".into()));
    }
    while below(hi) == 0 {
        hi = if hi > 0.0 { 2.0 * hi } else { 0.5 * hi + 1.0 };
    }
    let mut lo = hi.min(0.0) - 1.0;
    let mut guard = 0;
    while below(lo) > 0 {
        lo *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Eigen("could not bracket the smallest eigenvalue".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
