//! Experiment drivers behind the CLI subcommands.

use std::path::Path;

use kirchhoff::forward::{self, ForwardConfig, ForwardSolver};
use kirchhoff::mesh::Mesh;
use kirchhoff::optsys::Iterate;
use kirchhoff::ssn::{Init, NewtonReport, SsnContext};
use kirchhoff::{fem, Result};

use crate::config::ExperimentConfig;
use crate::output::{self, fmt_num};

/// Aggregate outcome used for the process exit code.
pub struct RunOutcome {
    pub all_converged: bool,
}

pub struct Reporter {
    quiet: bool,
}

impl Reporter {
    pub fn new(quiet: bool) -> Self {
        Self { quiet }
    }

    pub fn line(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }
}

fn prepare_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn build_mesh(cfg: &ExperimentConfig, rep: &Reporter) -> Result<Mesh> {
    let (mesh, warnings) = cfg.build_mesh()?;
    for w in warnings {
        rep.line(format!("mesh warning: {w}"));
    }
    rep.line(format!(
        "mesh: {} vertices, {} triangles",
        mesh.n_vertices(),
        mesh.n_triangles()
    ));
    Ok(mesh)
}

/// Solves the state equation for the control `u = u_a` and writes the state
/// field.
pub fn run_forward(cfg: &ExperimentConfig, out: &Path, rep: &Reporter) -> Result<RunOutcome> {
    prepare_out_dir(out)?;
    let mesh = build_mesh(cfg, rep)?;
    let ops = fem::assemble(&mesh)?;
    let data = cfg.problem_data(&mesh, None)?;
    data.validate(ops.n())?;
    let solver = ForwardSolver::new(&ops)?;
    let fwd_cfg = ForwardConfig { tol: cfg.state_tol, ..ForwardConfig::default() };
    let y = solver.solve_state(&data.u_a, &data.f, &data.b, &fwd_cfg, None)?;
    let s_star = ops.stiffness.quad_form(&y);
    let e = forward::residual_state(&y, &data.u_a, &ops, &data.f, &data.b)?;
    let res = solver.dual_norm(&e)?;
    output::write_field(out, "y", &mesh, &y)?;
    rep.line(format!("forward: s* = {} residual = {}", fmt_num(s_star), fmt_num(res)));
    Ok(RunOutcome { all_converged: true })
}

fn solve_once<'a>(
    ctx: &SsnContext<'a>,
    init: Init,
    label: &str,
    rep: &Reporter,
) -> Result<(Iterate, NewtonReport)> {
    let (it, report) = ctx.solve(init)?;
    rep.line(format!(
        "{label}: {} iterations, R = {}, converged = {}",
        report.iterations(),
        fmt_num(report.final_residual()),
        report.converged
    ));
    Ok((it, report))
}

/// Full control solve; writes the convergence history and the final fields.
pub fn run_solve(cfg: &ExperimentConfig, out: &Path, rep: &Reporter) -> Result<RunOutcome> {
    prepare_out_dir(out)?;
    let mesh = build_mesh(cfg, rep)?;
    let ops = fem::assemble(&mesh)?;
    let data = cfg.problem_data(&mesh, None)?;
    let ctx = SsnContext::new(&data, &ops, cfg.ssn_config())?;
    let (it, report) = solve_once(&ctx, Init::Default, "solve", rep)?;
    output::write_history_csv(&out.join("history.csv"), &report)?;
    output::write_field(out, "y", &mesh, &it.y)?;
    output::write_field(out, "u", &mesh, &it.u)?;
    output::write_field(out, "p", &mesh, &it.p)?;
    Ok(RunOutcome { all_converged: report.converged })
}

/// Non-locality sweep: one cold-started solve per `alpha`.
pub fn run_sweep_alpha(cfg: &ExperimentConfig, out: &Path, rep: &Reporter) -> Result<RunOutcome> {
    prepare_out_dir(out)?;
    let mesh = build_mesh(cfg, rep)?;
    let ops = fem::assemble(&mesh)?;
    let mut rows = Vec::new();
    let mut all_converged = true;
    for &alpha in &cfg.alphas {
        let data = cfg.problem_data(&mesh, Some(alpha))?;
        let ctx = SsnContext::new(&data, &ops, cfg.ssn_config())?;
        let label = format!("alpha = {}", fmt_num(alpha));
        let (_, report) = solve_once(&ctx, Init::Default, &label, rep)?;
        output::write_history_csv(&out.join(format!("history_alpha_{}.csv", fmt_num(alpha))), &report)?;
        all_converged &= report.converged;
        rows.push(vec![
            fmt_num(alpha),
            report.iterations().to_string(),
            report.converged.to_string(),
        ]);
    }
    output::write_summary_csv(&out.join("summary.csv"), "alpha,iterations,converged", &rows)?;
    Ok(RunOutcome { all_converged })
}

/// Mesh-independence study: cold-started solves on uniform refinements of
/// the base grid.
pub fn run_sweep_mesh(cfg: &ExperimentConfig, out: &Path, rep: &Reporter) -> Result<RunOutcome> {
    prepare_out_dir(out)?;
    if cfg.mesh_levels == 0 {
        return Err(kirchhoff::Error::InvalidConfig("mesh_levels must be at least 1".into()));
    }
    let mut mesh = build_mesh(cfg, rep)?;
    let mut rows = Vec::new();
    let mut all_converged = true;
    for level in 1..=cfg.mesh_levels {
        let ops = fem::assemble(&mesh)?;
        let data = cfg.problem_data(&mesh, None)?;
        let ctx = SsnContext::new(&data, &ops, cfg.ssn_config())?;
        let label = format!("level {level} ({} vertices)", mesh.n_vertices());
        let (_, report) = solve_once(&ctx, Init::Default, &label, rep)?;
        output::write_history_csv(&out.join(format!("history_level_{level}.csv")), &report)?;
        all_converged &= report.converged;
        rows.push(vec![
            level.to_string(),
            mesh.n_vertices().to_string(),
            mesh.n_triangles().to_string(),
            report.iterations().to_string(),
            report.converged.to_string(),
        ]);
        if level < cfg.mesh_levels {
            mesh = mesh.refine_uniform()?;
        }
    }
    output::write_summary_csv(
        &out.join("summary.csv"),
        "level,vertices,triangles,iterations,converged",
        &rows,
    )?;
    Ok(RunOutcome { all_converged })
}

/// Maximal positive nodal values of `u_a - u` and `u - u_b`.
fn bound_violations(it: &Iterate, u_a: &[f64], u_b: &[f64]) -> (f64, f64) {
    let lower = it
        .u
        .iter()
        .zip(u_a)
        .map(|(u, ua)| (ua - u).max(0.0))
        .fold(0.0, f64::max);
    let upper = it
        .u
        .iter()
        .zip(u_b)
        .map(|(u, ub)| if ub.is_finite() { (u - ub).max(0.0) } else { 0.0 })
        .fold(0.0, f64::max);
    (lower, upper)
}

/// Penalty sweep over the `epsilons` list; with `warmstart` each solve
/// (after the first) continues from the previous final iterate.
pub fn run_sweep_eps(
    cfg: &ExperimentConfig,
    out: &Path,
    warmstart: bool,
    rep: &Reporter,
) -> Result<RunOutcome> {
    prepare_out_dir(out)?;
    let mesh = build_mesh(cfg, rep)?;
    let ops = fem::assemble(&mesh)?;
    let mut rows = Vec::new();
    let mut all_converged = true;
    let mut previous: Option<Iterate> = None;
    for &epsilon in &cfg.epsilons {
        let mut data = cfg.problem_data(&mesh, None)?;
        data.epsilon = epsilon;
        let ctx = SsnContext::new(&data, &ops, cfg.ssn_config())?;
        let init = match previous.take() {
            Some(it) if warmstart => Init::Warmstart(it),
            _ => Init::Default,
        };
        let label = format!("epsilon = {}", fmt_num(epsilon));
        let (it, report) = solve_once(&ctx, init, &label, rep)?;
        output::write_history_csv(&out.join(format!("history_eps_{}.csv", fmt_num(epsilon))), &report)?;
        let (lower, upper) = bound_violations(&it, &data.u_a, &data.u_b);
        all_converged &= report.converged;
        rows.push(vec![
            fmt_num(epsilon),
            report.iterations().to_string(),
            fmt_num(lower),
            fmt_num(upper),
            report.converged.to_string(),
        ]);
        previous = Some(it);
    }
    output::write_summary_csv(
        &out.join("summary.csv"),
        "epsilon,iterations,lower_violation,upper_violation,converged",
        &rows,
    )?;
    Ok(RunOutcome { all_converged })
}

/// Maps a paper-comparable mesh level to the pinned grid resolution.
pub fn mesh_level_resolution(level: usize) -> Result<usize> {
    crate::config::MESH_LEVEL_RESOLUTIONS
        .get(level.checked_sub(1).unwrap_or(usize::MAX))
        .copied()
        .ok_or_else(|| {
            kirchhoff::Error::InvalidConfig(format!(
                "mesh level must be in 1..={}, got {level}",
                crate::config::MESH_LEVEL_RESOLUTIONS.len()
            ))
        })
}
