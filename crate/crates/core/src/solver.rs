//! Constrained minimization of `I(w) = wᵀKw` over
//! `H_q = { w clamped : ∫ f |w + h|^q dv_g = γ }`, Lagrange multipliers,
//! continuation `q → 2♯` and the nontriviality threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::banded::BandedCholesky;
use crate::error::{Error, Result};
use crate::extension::{
    admissibility_check, boundary_integral, first_eigenpair, require_admissible, solve_extension,
    EigenPair, ExtensionField,
};
use crate::operators::{assemble_paneitz, coercivity_check, DiscreteOperator, ProblemSpec};
use crate::special::best_constant_k0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative tolerance on `|∫f|w+h|^q − γ|`.
    pub constraint_tol: f64,
    /// Relative stationarity tolerance `‖Pw − λg‖_W / ‖Pw‖_W`.
    pub stationarity_tol: f64,
    pub max_iterations: usize,
    /// Extra descents from random feasible starts; the best one is kept.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-8,
            stationarity_tol: 1e-6,
            max_iterations: 5000,
            restarts: 0,
            seed: 0,
        }
    }
}

/// Minimizer record at one exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubcriticalSolution {
    pub q: f64,
    /// Values on the unknowns.
    pub w: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub constraint_residual: f64,
    pub el_residual: f64,
    pub iterations: usize,
    /// Root of `F(t) = ∫ f |tψ₁ + h|^q dv_g = γ`.
    pub t_q: f64,
    /// `I(t_q ψ₁) = t_q² I(ψ₁)`.
    pub energy_bound: f64,
}

/// Everything the nonlinear iterations need, computed once per problem:
/// the operator, its factorization, the extension and the eigenpair.
#[derive(Debug, Clone)]
pub struct SolverContext {
    pub spec: ProblemSpec,
    pub op: DiscreteOperator,
    pub extension: ExtensionField,
    pub eigen: EigenPair,
    /// `Λ` from the coercivity check.
    pub coercivity: f64,
    chol: BandedCholesky,
    f: Vec<f64>,
    energy_psi1: f64,
}

impl SolverContext {
    /// Runs the linear pipeline and both guards: the operator must be
    /// coercive and the data admissible, `∫ f |h|^{2♯} dv_g < γ`.
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        let op = assemble_paneitz(spec)?;
        let coercivity = coercivity_check(spec, &op)?;
        if !(coercivity > 0.0) {
            return Err(Error::NotCoercive { lambda: coercivity });
        }
        let extension = solve_extension(spec, &op)?;
        if !admissibility_check(spec, &op, &extension.h)? {
            return Err(Error::Inadmissible {
                gamma: spec.gamma,
                boundary_integral: boundary_integral(spec, &op, &extension.h, spec.two_sharp())?,
                q: spec.two_sharp(),
            });
        }
        let eigen = first_eigenpair(spec)?;
        let chol = op.stiffness().cholesky()?;
        let energy_psi1 = op.stiffness().quadratic_form(&eigen.psi1);
        Ok(Self {
            f: spec.f_nodes(),
            spec: spec.clone(),
            op,
            extension,
            eigen,
            coercivity,
            chol,
            energy_psi1,
        })
    }

    pub fn h(&self) -> &[f64] {
        &self.extension.h
    }

    /// `I(w)`.
    pub fn energy(&self, w: &[f64]) -> f64 {
        self.op.stiffness().quadratic_form(w)
    }

    /// `I(ψ₁)` for the normalized eigenfunction.
    pub fn energy_of_psi1(&self) -> f64 {
        self.energy_psi1
    }

    /// `u = w + h` on the full grid.
    pub fn full_field(&self, w: &[f64]) -> Vec<f64> {
        let mut u = self.op.embed(w);
        u.iter_mut().zip(self.h()).for_each(|(a, b)| *a += b);
        u
    }

    /// `∫ f |w + h|^q dv_g`.
    pub fn constraint(&self, w: &[f64], q: f64) -> f64 {
        self.ray_value(w, 1.0, q)
    }

    // Σ W f |t w + h|^q over every node.
    fn ray_value(&self, w: &[f64], t: f64, q: f64) -> f64 {
        let (first, wts, h) = (self.op.dofs().start, self.op.node_weights(), self.h());
        let mut total = 0.0;
        for i in 0..h.len() {
            let wi = self.op.dofs().contains(&i).then(|| w[i - first]).unwrap_or(0.0);
            total += wts[i] * self.f[i] * (t * wi + h[i]).abs().powf(q);
        }
        total
    }

    fn ray_value_and_slope(&self, w: &[f64], t: f64, q: f64) -> (f64, f64) {
        let (first, wts, h) = (self.op.dofs().start, self.op.node_weights(), self.h());
        let (mut v, mut d) = (0.0, 0.0);
        for i in 0..h.len() {
            let wi = self.op.dofs().contains(&i).then(|| w[i - first]).unwrap_or(0.0);
            let u = t * wi + h[i];
            let p = u.abs().powf(q - 1.0);
            v += wts[i] * self.f[i] * p * u.abs();
            d += q * wts[i] * self.f[i] * p * u.signum() * wi;
        }
        (v, d)
    }

    /// `g = f |w+h|^{q−2}(w+h)` on the unknowns.
    fn nonlinearity(&self, w: &[f64], q: f64) -> Vec<f64> {
        self.op
            .dofs()
            .zip(w)
            .map(|(i, wi)| {
                let u = wi + self.h()[i];
                self.f[i] * u.abs().powf(q - 1.0) * u.signum()
            })
            .collect()
    }

    fn check_exponent(&self, q: f64) -> Result<()> {
        let critical = self.spec.two_sharp();
        if q > 2.0 && q <= critical * (1.0 + 1e-15) {
            Ok(())
        } else {
            Err(Error::ExponentOutOfRange { q, critical })
        }
    }

    /// Solves `F(t) = ∫ f |t w + h|^q = γ` for `t > 0`. `F` is convex with
    /// `F(0) < γ`, so Newton started to the right of the root converges
    /// monotonically; bisection guards the bracket.
    fn ray_root(&self, w: &[f64], q: f64) -> Result<f64> {
        let gamma = self.spec.gamma;
        let f0 = self.ray_value(w, 0.0, q);
        if !(f0 < gamma) {
            return Err(Error::Inadmissible {
                gamma,
                boundary_integral: f0,
                q,
            });
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroDirection);
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut guard = 0;
        while self.ray_value(w, hi, q) < gamma {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 2000 || !hi.is_finite() {
                return Err(Error::Bracket(format!("F(t) stays below γ up to t = {hi:e}")));
            }
        }
        let mut t = hi;
        for _ in 0..200 {
            let (v, d) = self.ray_value_and_slope(w, t, q);
            let resid = v - gamma;
            if resid.abs() <= 1e-14 * gamma {
                return Ok(t);
            }
            if resid > 0.0 {
                hi = hi.min(t);
            } else {
                lo = lo.max(t);
            }
            let newton = t - resid / d;
            t = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(t);
            }
        }
        Ok(t)
    }
}

/// `t_q` and `w₀ = t_q ψ₁` with `F(t_q) = γ`.
pub fn feasible_point(ctx: &SolverContext, q: f64) -> Result<(f64, Vec<f64>)> {
    ctx.check_exponent(q)?;
    require_admissible(&ctx.spec, &ctx.op, ctx.h(), q)?;
    let t = ctx.ray_root(&ctx.eigen.psi1, q)?;
    Ok((t, ctx.eigen.psi1.iter().map(|v| t * v).collect()))
}

/// Rescales `w` along its ray onto `H_q`. The zero field has no ray, so it
/// is replaced by the eigenfunction direction.
pub fn project_to_constraint(ctx: &SolverContext, w: &[f64], q: f64) -> Result<Vec<f64>> {
    ctx.check_exponent(q)?;
    match ctx.ray_root(w, q) {
        Ok(t) => Ok(w.iter().map(|v| t * v).collect()),
        Err(Error::ZeroDirection) => Ok(feasible_point(ctx, q)?.1),
        Err(e) => Err(e),
    }
}

/// `λ = I(w) / (γ − ∫ f |w+h|^{q−2}(w+h) h dv_g)`.
pub fn lagrange_multiplier(ctx: &SolverContext, w: &[f64], q: f64) -> Result<f64> {
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMultiplier);
    }
    let u = ctx.full_field(w);
    let wts = ctx.op.node_weights();
    let cross: f64 = (0..u.len())
        .map(|i| wts[i] * ctx.f[i] * u[i].abs().powf(q - 1.0) * u[i].signum() * ctx.h()[i])
        .sum();
    let denom = ctx.spec.gamma - cross;
    if !(denom > 0.0) {
        return Err(Error::Inadmissible {
            gamma: ctx.spec.gamma,
            boundary_integral: boundary_integral(&ctx.spec, &ctx.op, ctx.h(), q)?,
            q,
        });
    }
    Ok(ctx.energy(w) / denom)
}

/// Relative weighted residual of the discrete Euler–Lagrange equation.
fn stationarity(ctx: &SolverContext, w: &[f64], q: f64, lambda: f64) -> Result<f64> {
    let pw = ctx.op.apply(w)?;
    let g = ctx.nonlinearity(w, q);
    let r: Vec<f64> = pw.iter().zip(&g).map(|(p, gi)| p - lambda * gi).collect();
    let den = ctx.op.inner(&pw, &pw).sqrt();
    Ok(if den > 0.0 {
        ctx.op.inner(&r, &r).sqrt() / den
    } else {
        f64::INFINITY
    })
}

/// Iterations without a 1% drop of the residual before giving up.
const STALL_WINDOW: usize = 200;

/// Roundoff bound on `wᵀKw`: `32 ε |w|ᵀ|K||w|`. The stiffness entries grow
/// like `h⁻⁴`, so on fine grids this floor sits far above `ε I(w)` and the
/// energy decrease of a converging step drops below it before the
/// stationarity residual reaches its tolerance.
fn energy_noise(ctx: &SolverContext, w: &[f64]) -> f64 {
    32.0 * f64::EPSILON * ctx.op.stiffness().abs_quadratic_form(w)
}

struct Descent {
    w: Vec<f64>,
    mu: f64,
    iterations: usize,
}

/// Preconditioned projected descent from a feasible start.
fn descend(ctx: &SolverContext, q: f64, w0: Vec<f64>, cfg: &SolverConfig) -> Result<Descent> {
    let w_weights = ctx.op.dof_weights();
    let mut w = w0;
    let mut mu = ctx.energy(&w);
    let (mut best_resid, mut best_at) = (f64::INFINITY, 0);
    for it in 0..=cfg.max_iterations {
        let lambda = lagrange_multiplier(ctx, &w, q)?;
        let resid = stationarity(ctx, &w, q, lambda)?;
        if resid <= cfg.stationarity_tol {
            return Ok(Descent { w, mu, iterations: it });
        }
        if resid < 0.99 * best_resid {
            (best_resid, best_at) = (resid, it);
        }
        if it == cfg.max_iterations || it - best_at > STALL_WINDOW {
            return Err(Error::Stagnation {
                iterations: it,
                energy: mu,
                residual: resid,
            });
        }
        // z = K⁻¹ W g is the K-gradient direction of the constraint; the
        // tangential part of the K-gradient of I is w − λ_t z.
        let g = ctx.nonlinearity(&w, q);
        let wg: Vec<f64> = g.iter().zip(&w_weights).map(|(a, b)| a * b).collect();
        let z = ctx.chol.solve(&wg);
        let zz: f64 = z.iter().zip(&wg).map(|(a, b)| a * b).sum();
        let wz: f64 = w.iter().zip(&wg).map(|(a, b)| a * b).sum();
        let lambda_t = wz / zz;
        let d: Vec<f64> = z.iter().zip(&w).map(|(zi, wi)| lambda_t * zi - wi).collect();
        let slope = ctx.energy(&d);
        // τ = 1 is the fixed-point step w ← λ_t z. Longer steps leave the
        // high modes (where K⁻¹Wg barely reacts) undamped, so backtracking
        // only ever shortens it. Near the minimizer energy differences drop
        // below roundoff before the residual does; the full step is then
        // accepted if it does not raise the energy beyond that noise.
        // Shortened steps must lower the energy strictly, otherwise a step
        // that rounds back to w would be taken forever.
        let noise = energy_noise(ctx, &w);
        let mut tau = 1.0;
        let mut accepted = false;
        while tau > 1e-14 {
            let trial: Vec<f64> = w.iter().zip(&d).map(|(wi, di)| wi + tau * di).collect();
            if let Ok(t) = ctx.ray_root(&trial, q) {
                let cand: Vec<f64> = trial.iter().map(|v| t * v).collect();
                let e = ctx.energy(&cand);
                let sufficient = e < mu && e <= mu - 1e-4 * tau * slope;
                let within_noise = tau == 1.0 && e <= mu + noise;
                if sufficient || within_noise {
                    if cand == w {
                        // The step rounds to nothing: the residual is at its floor.
                        return Err(Error::Stagnation {
                            iterations: it,
                            energy: mu,
                            residual: resid,
                        });
                    }
                    w = cand;
                    mu = e;
                    accepted = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            return Err(Error::Stagnation {
                iterations: it,
                energy: mu,
                residual: resid,
            });
        }
    }
    unreachable!()
}

fn finish(ctx: &SolverContext, q: f64, run: Descent, t_q: f64) -> Result<SubcriticalSolution> {
    let lambda = lagrange_multiplier(ctx, &run.w, q)?;
    Ok(SubcriticalSolution {
        q,
        lambda,
        mu: run.mu,
        constraint_residual: (ctx.constraint(&run.w, q) - ctx.spec.gamma).abs(),
        el_residual: stationarity(ctx, &run.w, q, lambda)?,
        iterations: run.iterations,
        t_q,
        energy_bound: t_q * t_q * ctx.energy_psi1,
        w: run.w,
    })
}

/// Minimizes `I` over `H_q` starting from `w0` (projected onto `H_q` first).
pub fn minimize(
    ctx: &SolverContext,
    q: f64,
    w0: &[f64],
    cfg: &SolverConfig,
) -> Result<SubcriticalSolution> {
    let (t_q, _) = feasible_point(ctx, q)?;
    let start = project_to_constraint(ctx, w0, q)?;
    let mut best = descend(ctx, q, start, cfg)?;
    if cfg.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.restarts {
            let raw: Vec<f64> = (0..ctx.op.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let Ok(start) = project_to_constraint(ctx, &raw, q) else {
                continue;
            };
            if let Ok(run) = descend(ctx, q, start, cfg) {
                if run.mu < best.mu {
                    best = run;
                }
            }
        }
    }
    finish(ctx, q, best, t_q)
}

/// Minimizes from the eigenfunction start `t_q ψ₁`.
pub fn solve_at(ctx: &SolverContext, q: f64, cfg: &SolverConfig) -> Result<SubcriticalSolution> {
    let (_, w0) = feasible_point(ctx, q)?;
    minimize(ctx, q, &w0, cfg)
}

/// `q_k = 2♯ − (2♯ − 2.2) 2^{−k}` for `k = 0..=8`, then `2♯`.
pub fn default_schedule(two_sharp: f64) -> Vec<f64> {
    let mut s: Vec<f64> = (0..=8)
        .map(|k| two_sharp - (two_sharp - 2.2) * 0.5f64.powi(k))
        .collect();
    s.push(two_sharp);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationTrace {
    pub stages: Vec<SubcriticalSolution>,
    /// μ of the last completed stage.
    pub limit_mu: f64,
    /// `γ^{2/2♯} / (K₀ ‖f‖_∞^{2/2♯})`.
    pub threshold: f64,
    pub threshold_met: bool,
    /// Set when a stage failed; the stages before it are kept.
    pub failure: Option<String>,
    /// `u = w + h` of the last completed stage on the full grid.
    pub final_u: Vec<f64>,
    /// Sign changes of `final_u`.
    pub nodal_count: usize,
}

impl ContinuationTrace {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn last(&self) -> Option<&SubcriticalSolution> {
        self.stages.last()
    }
}

/// The nontriviality threshold of the critical problem.
pub fn nontriviality_threshold(spec: &ProblemSpec) -> Result<f64> {
    let two_sharp = spec.two_sharp();
    let f_max = spec.f_nodes().into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(spec.gamma.powf(2.0 / two_sharp) / (best_constant_k0(spec.dim())? * f_max.powf(2.0 / two_sharp)))
}

/// Warm-started minimization along an increasing schedule ending at `2♯`.
pub fn continuation(ctx: &SolverContext, schedule: &[f64], cfg: &SolverConfig) -> Result<ContinuationTrace> {
    let two_sharp = ctx.spec.two_sharp();
    if schedule.is_empty() {
        return Err(Error::InvalidProblem("empty q schedule".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidProblem("q schedule must be strictly increasing".into()));
    }
    let last = *schedule.last().unwrap();
    if (last - two_sharp).abs() > 1e-12 * two_sharp {
        return Err(Error::InvalidProblem(format!(
            "q schedule must end at 2♯ = {two_sharp}, ends at {last}"
        )));
    }
    for &q in schedule {
        ctx.check_exponent(q)?;
    }
    let threshold = nontriviality_threshold(&ctx.spec)?;
    let mut stages: Vec<SubcriticalSolution> = Vec::with_capacity(schedule.len());
    let mut failure = None;
    for (k, &q) in schedule.iter().enumerate() {
        let q = if k + 1 == schedule.len() { two_sharp } else { q };
        let stage = (|| {
            let (_, eig_start) = feasible_point(ctx, q)?;
            // Keep whichever start has lower energy, so the stage inherits
            // the bound μ ≤ t_q² I(ψ₁).
            let start = match stages.last() {
                Some(prev) => {
                    let warm = project_to_constraint(ctx, &prev.w, q)?;
                    if ctx.energy(&warm) < ctx.energy(&eig_start) {
                        warm
                    } else {
                        eig_start
                    }
                }
                None => eig_start,
            };
            minimize(ctx, q, &start, cfg)
        })();
        match stage {
            Ok(sol) => stages.push(sol),
            Err(e) => {
                failure = Some(format!("stage q = {q}: {e}"));
                break;
            }
        }
    }
    let limit_mu = stages.last().map(|s| s.mu).unwrap_or(f64::NAN);
    let final_u = stages
        .last()
        .map(|s| ctx.full_field(&s.w))
        .unwrap_or_else(|| ctx.h().to_vec());
    Ok(ContinuationTrace {
        nodal_count: nodal_check(&final_u),
        final_u,
        threshold_met: failure.is_none() && limit_mu < threshold,
        stages,
        limit_mu,
        threshold,
        failure,
    })
}

/// Number of sign changes along the radius; entries with
/// `|u| ≤ 1e−12 max|u|` are treated as zero and skipped.
pub fn nodal_check(u: &[f64]) -> usize {
    let scale = u.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut last_sign = 0.0;
    let mut changes = 0;
    for &v in u {
        if v.abs() <= tol {
            continue;
        }
        let s = v.signum();
        if last_sign != 0.0 && s != last_sign {
            changes += 1;
        }
        last_sign = s;
    }
    changes
}
