use std::path::{Path, PathBuf};

use paneitz_core::solver::nontriviality_threshold;
use paneitz_core::test_functions::{build_u_eps, TestFunctionParams};
use paneitz_core::{
    continuation, fit_expansion, identity_suite, ipq, nodal_check, solve_at, sweep,
    threshold_certificate, Error as CoreError, SolverContext,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{RunDir, Stamp};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub grid_size: Option<usize>,
    pub seed: Option<u64>,
}

/// A prepared run: effective config, its hash and the run directory.
struct Run {
    config: RunConfig,
    hash: String,
    dir: RunDir,
    verb: &'static str,
}

impl Run {
    fn prepare(verb: &'static str, config_path: &Path, ov: &Overrides) -> Result<Self, CliError> {
        let mut config = RunConfig::load(config_path)?;
        if let Some(m) = ov.grid_size {
            config.problem.grid_size = m;
        }
        if let Some(seed) = ov.seed {
            config.solver.seed = seed;
        }
        if let Some(out) = &ov.out {
            config.output.dir = out.to_string_lossy().into_owned();
        }
        // The output location does not name the experiment.
        let mut keyed = config.clone();
        keyed.output.dir.clear();
        let hash = keyed.hash(verb);
        let dir = RunDir::create(
            Path::new(&config.output.dir),
            &format!("{verb}-{}", &hash[..16]),
            config.output.clone(),
        )?;
        dir.write_text("config.toml", &config.to_toml())?;
        Ok(Self {
            config,
            hash,
            dir,
            verb,
        })
    }

    fn stamp(&self) -> Stamp {
        Stamp::new(self.verb, &self.config, &self.hash)
    }
}

#[derive(Serialize)]
struct FieldRow {
    r: f64,
    h: f64,
    w: f64,
    u: f64,
}

fn field_rows<'a>(ctx: &'a SolverContext, w: &'a [f64]) -> impl Iterator<Item = FieldRow> + 'a {
    let full = ctx.op.embed(w);
    ctx.spec
        .grid
        .nodes()
        .iter()
        .zip(ctx.h())
        .zip(full)
        .map(|((&r, &h), w)| FieldRow { r, h, w, u: w + h })
}

const FIELD_HEADER: [&str; 4] = ["r", "h", "w", "u"];

#[derive(Serialize)]
struct LinearSummary {
    coercivity: f64,
    lambda1: f64,
    extension_residual: f64,
    extension_is_zero: bool,
    threshold: f64,
}

fn linear_summary(ctx: &SolverContext) -> Result<LinearSummary, CliError> {
    Ok(LinearSummary {
        coercivity: ctx.coercivity,
        lambda1: ctx.eigen.lambda1,
        extension_residual: ctx.extension.residual,
        extension_is_zero: ctx.h().iter().all(|&v| v == 0.0),
        threshold: nontriviality_threshold(&ctx.spec)?,
    })
}

pub fn solve(config_path: &Path, ov: &Overrides) -> Result<PathBuf, CliError> {
    let run = Run::prepare("solve", config_path, ov)?;
    let spec = run.config.build_spec()?;
    let ctx = SolverContext::new(&spec)?;
    let q = run.config.solver.q.unwrap_or(spec.two_sharp());
    let sol = solve_at(&ctx, q, &run.config.solver.solver_config())?;
    let u = ctx.full_field(&sol.w);

    #[derive(Serialize)]
    struct Summary {
        stamp: Stamp,
        linear: LinearSummary,
        q: f64,
        mu: f64,
        lambda: f64,
        constraint_residual: f64,
        el_residual: f64,
        iterations: usize,
        t_q: f64,
        energy_bound: f64,
        nodal_count: usize,
    }
    run.dir.csv("solution.csv", &FIELD_HEADER, field_rows(&ctx, &sol.w))?;
    run.dir.json(
        "summary.json",
        &Summary {
            stamp: run.stamp(),
            linear: linear_summary(&ctx)?,
            q: sol.q,
            mu: sol.mu,
            lambda: sol.lambda,
            constraint_residual: sol.constraint_residual,
            el_residual: sol.el_residual,
            iterations: sol.iterations,
            t_q: sol.t_q,
            energy_bound: sol.energy_bound,
            nodal_count: nodal_check(&u),
        },
    )?;
    println!(
        "solve: q = {q}, μ = {:.12e}, λ = {:.12e}, EL residual {:.2e}, nodal count {}",
        sol.mu,
        sol.lambda,
        sol.el_residual,
        nodal_check(&u)
    );
    Ok(run.dir.path)
}

#[derive(Serialize)]
struct TraceRow {
    q: f64,
    mu: f64,
    lambda: f64,
    constraint_residual: f64,
    el_residual: f64,
    iterations: usize,
    t_q: f64,
    energy_bound: f64,
}

pub fn continue_run(config_path: &Path, ov: &Overrides) -> Result<PathBuf, CliError> {
    let run = Run::prepare("continue", config_path, ov)?;
    let spec = run.config.build_spec()?;
    let ctx = SolverContext::new(&spec)?;
    let schedule = run.config.solver.schedule_for(spec.two_sharp());
    let trace = continuation(&ctx, &schedule, &run.config.solver.solver_config())?;

    run.dir.csv(
        "trace.csv",
        &["q", "mu", "lambda", "constraint_residual", "el_residual", "iterations", "t_q", "energy_bound"],
        trace.stages.iter().map(|s| TraceRow {
            q: s.q,
            mu: s.mu,
            lambda: s.lambda,
            constraint_residual: s.constraint_residual,
            el_residual: s.el_residual,
            iterations: s.iterations,
            t_q: s.t_q,
            energy_bound: s.energy_bound,
        }),
    )?;
    let w_last = trace
        .last()
        .map(|s| s.w.clone())
        .unwrap_or_else(|| vec![0.0; ctx.op.n_dofs()]);
    run.dir.csv("solution.csv", &FIELD_HEADER, field_rows(&ctx, &w_last))?;

    #[derive(Serialize)]
    struct Summary {
        stamp: Stamp,
        linear: LinearSummary,
        schedule: Vec<f64>,
        stages_completed: usize,
        limit_mu: f64,
        threshold: f64,
        threshold_met: bool,
        nodal_count: usize,
        failure: Option<String>,
        certificate: paneitz_core::Certificate,
    }
    run.dir.json(
        "summary.json",
        &Summary {
            stamp: run.stamp(),
            linear: linear_summary(&ctx)?,
            schedule,
            stages_completed: trace.stages.len(),
            limit_mu: trace.limit_mu,
            threshold: trace.threshold,
            threshold_met: trace.threshold_met,
            nodal_count: trace.nodal_count,
            failure: trace.failure.clone(),
            certificate: threshold_certificate(&spec, Some(&trace), None)?,
        },
    )?;
    if let Some(f) = trace.failure {
        return Err(CliError::Solver(format!(
            "{f} (partial trace in {})",
            run.dir.path.display()
        )));
    }
    println!(
        "continue: {} stages, μ(2♯) = {:.12e}, threshold {:.12e} ({}), nodal count {}",
        trace.stages.len(),
        trace.limit_mu,
        trace.threshold,
        if trace.threshold_met { "met" } else { "not met" },
        trace.nodal_count
    );
    Ok(run.dir.path)
}

pub fn expand(config_path: &Path, ov: &Overrides) -> Result<PathBuf, CliError> {
    let run = Run::prepare("expand", config_path, ov)?;
    let sweep_cfg = run
        .config
        .sweep
        .clone()
        .ok_or_else(|| CliError::config("`expand` needs a [sweep] section"))?;
    let spec = run.config.build_spec()?;
    if !spec.grid.is_ball() {
        return Err(CliError::config("`expand` needs a ball (r_in = 0)"));
    }
    let eps = sweep_cfg.eps_list()?;

    // Report every under-resolved ε at once.
    let unresolved: Vec<String> = eps
        .iter()
        .filter_map(|&e| {
            TestFunctionParams::new(e, sweep_cfg.delta)
                .and_then(|p| build_u_eps(&spec.grid, &p, spec.dim()))
                .err()
                .map(|err| match err {
                    CoreError::Resolution { .. } => err.to_string(),
                    other => format!("ε = {e:e}: {other}"),
                })
        })
        .collect();
    if !unresolved.is_empty() {
        return Err(CliError::Config(unresolved.join("\n")));
    }

    let rows = sweep(&spec, &eps, sweep_cfg.delta)?;
    run.dir.csv("sweep.csv", &["eps", "mu", "gamma", "q", "q_normalized"], &rows)?;
    let fit = fit_expansion(&spec, &eps, sweep_cfg.delta).map_err(|e| match e {
        CoreError::DegenerateFit(_) | CoreError::Dimension { .. } => CliError::Config(e.to_string()),
        other => other.into(),
    })?;
    let certificate = threshold_certificate(&spec, None, Some(&fit))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        stamp: Stamp,
        fit: &'a paneitz_core::ExpansionFit,
        certificate: paneitz_core::Certificate,
    }
    run.dir.json(
        "fit.json",
        &Summary {
            stamp: run.stamp(),
            fit: &fit,
            certificate,
        },
    )?;
    println!(
        "expand: {:?} model, c2 fit {:.6} vs analytic {:.6} (rel error {}) on ε ∈ [{:e}, {:e}]",
        fit.model,
        fit.c2_fit,
        fit.c2_analytic,
        fit.rel_error.map_or("n/a".into(), |r| format!("{r:.3e}")),
        fit.fit_window.1,
        fit.fit_window.0
    );
    Ok(run.dir.path)
}

/// Runs the identity suite on `n_min..=n_max`. `perturb` scales `I_p^q` by
/// `1 + perturb·p` to exercise the failure path.
pub fn verify_identities(
    n_min: usize,
    n_max: usize,
    perturb: Option<f64>,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let dims: Vec<usize> = (n_min..=n_max).collect();
    let rows = match perturb {
        Some(eps) => identity_suite(&dims, |p, q| ipq(p, q).map(|v| v * (1.0 + eps * p))),
        None => identity_suite(&dims, ipq),
    };
    let name = format!("verify-identities-{n_min}-{n_max}{}", if perturb.is_some() { "-perturbed" } else { "" });
    let dir = RunDir::create(out, &name, Default::default())?;
    dir.csv(
        "identities.csv",
        &["identity", "n", "p", "q", "rel_error", "tolerance", "passed"],
        &rows,
    )?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.passed).collect();
    println!("verify-identities: {} checks, {} failed", rows.len(), failed.len());
    for r in failed.iter().take(10) {
        println!(
            "  FAIL {} (n = {}, p = {:?}, q = {:?}): rel error {:.3e} > {:.1e}",
            r.identity, r.n, r.p, r.q, r.rel_error, r.tolerance
        );
    }
    if failed.is_empty() {
        Ok(dir.path)
    } else {
        Err(CliError::Check(format!("{} identity checks failed", failed.len())))
    }
}
