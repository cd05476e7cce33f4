//! Linear sub-problems: the extension `h` of the boundary data with
//! `P h = 0`, and the first clamped eigenpair of `Δ²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{
    clamped_bilaplacian, coercivity_check, BoundarySlopes, DiscreteOperator, ProblemSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionField {
    /// Values at every grid node.
    pub h: Vec<f64>,
    /// `h′` at the boundary nodes (`d/dr`, not the outward normal).
    #[serde(skip)]
    pub slopes: BoundarySlopes,
    /// Sup-norm of `P_h h` over the unknown nodes.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    pub lambda1: f64,
    /// Values on the unknowns, normalized by `Σ W ψ² = 1` and `Σ W ψ > 0`.
    pub psi1: Vec<f64>,
    /// Sup-norm of `Δ_h²ψ − λψ`.
    pub residual: f64,
    pub iterations: usize,
}

/// Slopes `d/dr` realizing the outward normal derivatives.
pub fn boundary_slopes(spec: &ProblemSpec) -> BoundarySlopes {
    BoundarySlopes {
        inner: spec.inner.map(|d| -d.phi2),
        outer: spec.outer.phi2,
    }
}

/// Polynomial lifting of the boundary data.
///
/// On a ball it is the even quadratic `φ₁ + φ₂(r² − b²)/(2b)`. On an
/// annulus `[a, b]` each sphere gets `s³(c₀ + c₁s)` with `s` the distance
/// to the other sphere, so each piece is invisible (to second order) at the
/// opposite boundary.
pub fn lifting(spec: &ProblemSpec) -> Vec<f64> {
    let (a, b) = (spec.grid.r_in(), spec.grid.r_out());
    let out = spec.outer;
    match spec.inner {
        None => spec
            .grid
            .nodes()
            .iter()
            .map(|&r| out.phi1 + out.phi2 * (r * r - b * b) / (2.0 * b))
            .collect(),
        Some(inn) => {
            let len = b - a;
            let piece = |s: f64, phi1: f64, phi2: f64| {
                let c1 = phi2 / len.powi(3) - 3.0 * phi1 / len.powi(4);
                let c0 = 4.0 * phi1 / len.powi(3) - phi2 / (len * len);
                s.powi(3) * (c0 + c1 * s)
            };
            spec.grid
                .nodes()
                .iter()
                .map(|&r| piece(r - a, out.phi1, out.phi2) + piece(b - r, inn.phi1, inn.phi2))
                .collect()
        }
    }
}

/// Solves `P h = 0` with the clamped data of `spec`.
pub fn solve_extension(spec: &ProblemSpec, op: &DiscreteOperator) -> Result<ExtensionField> {
    let lambda = coercivity_check(spec, op)?;
    if !(lambda > 0.0) {
        return Err(Error::NotCoercive { lambda });
    }
    let slopes = boundary_slopes(spec);
    if spec.has_zero_boundary_data() {
        return Ok(ExtensionField {
            h: vec![0.0; op.n_nodes()],
            slopes,
            residual: 0.0,
        });
    }
    let lift = lifting(spec);
    let p_lift = op.apply_full(&lift, &slopes)?;
    let rhs: Vec<f64> = p_lift
        .iter()
        .zip(op.dof_weights())
        .map(|(p, w)| -p * w)
        .collect();
    let correction = op.stiffness().cholesky()?.solve(&rhs);
    let mut h = lift;
    for (i, c) in op.dofs().zip(&correction) {
        h[i] += c;
    }
    let residual = op
        .apply_full(&h, &slopes)?
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(ExtensionField { h, slopes, residual })
}

/// Smallest eigenpair of the clamped bilaplacian, `Δ_h²ψ = λψ`, by inverse
/// iteration on its banded Cholesky factor.
pub fn first_eigenpair(spec: &ProblemSpec) -> Result<EigenPair> {
    let (lap, k) = clamped_bilaplacian(&spec.grid, &spec.metric);
    let dofs = lap.dofs();
    let w: Vec<f64> = dofs.clone().map(|i| lap.weights()[i]).collect();
    let chol = k.cholesky()?;
    let (a, b) = (spec.grid.r_in(), spec.grid.r_out());
    let nodes = spec.grid.nodes();
    // Smooth start with the expected boundary behavior.
    let mut x: Vec<f64> = dofs
        .clone()
        .map(|i| {
            let r = nodes[i];
            let s = (b - r) * if spec.grid.is_ball() { 1.0 } else { r - a };
            s * s
        })
        .collect();
    let norm_w = |v: &[f64]| v.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>().sqrt();
    let n0 = norm_w(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let mut lambda = f64::INFINITY;
    const MAX_ITER: usize = 500;
    for it in 1..=MAX_ITER {
        let rhs: Vec<f64> = x.iter().zip(&w).map(|(v, wi)| v * wi).collect();
        let mut y = chol.solve(&rhs);
        let ny = norm_w(&y);
        y.iter_mut().for_each(|v| *v /= ny);
        let new_lambda = k.quadratic_form(&y);
        let done = (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs();
        x = y;
        lambda = new_lambda;
        if done || it == MAX_ITER {
            let sign: f64 = x.iter().zip(&w).map(|(v, wi)| v * wi).sum();
            if sign < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            let kx = k.mul_vec(&x);
            let residual = kx
                .iter()
                .zip(x.iter().zip(&w))
                .map(|(kv, (xv, wi))| (kv / wi - lambda * xv).abs())
                .fold(0.0, f64::max);
            if !(lambda > 0.0) {
                return Err(Error::Eigen(format!("non-positive eigenvalue {lambda}")));
            }
            return Ok(EigenPair {
                lambda1: lambda,
                psi1: x,
                residual,
                iterations: it,
            });
        }
    }
    unreachable!()
}

/// `∫ f |h|^{2♯} dv_g`.
pub fn boundary_integral(spec: &ProblemSpec, op: &DiscreteOperator, h: &[f64], q: f64) -> Result<f64> {
    let zero = vec![0.0; op.n_dofs()];
    crate::operators::constraint_value(spec, op, &zero, h, q)
}

/// Strict admissibility `∫ f |h|^{2♯} dv_g < γ`.
pub fn admissibility_check(spec: &ProblemSpec, op: &DiscreteOperator, h: &[f64]) -> Result<bool> {
    Ok(boundary_integral(spec, op, h, spec.two_sharp())? < spec.gamma)
}

/// Errors with the violated inequality unless `∫ f|h|^q dv_g < γ`.
pub fn require_admissible(spec: &ProblemSpec, op: &DiscreteOperator, h: &[f64], q: f64) -> Result<f64> {
    let integral = boundary_integral(spec, op, h, q)?;
    if integral < spec.gamma {
        Ok(integral)
    } else {
        Err(Error::Inadmissible {
            gamma: spec.gamma,
            boundary_integral: integral,
            q,
        })
    }
}
