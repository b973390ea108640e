//! Damped semismooth Newton method with per-iteration nonlinear state update.
//!
//! Each iteration assembles the symmetric 3x3-block generalized Newton
//! system from the blocks in [`crate::optsys`], solves it directly, applies
//! the damped update and then replaces the state by the exact solution of
//! the nonlinear state equation (the linear update serves as initial guess).
//! Residuals of all three optimality components are measured in the
//! `(K+M)^{-1}`-norm,
//!
//! ```text
//! R^2(y,u,p) = ||L_y||^2 + ||L_u||^2 + ||e||^2,
//! ```
//!
//! and the loop stops once `R <= tol`. Damping follows the fixed rule
//! `gamma = 1/2` while `||L_u|| > 1/10`, `gamma = 1` otherwise.

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::forward::{ForwardConfig, ForwardSolver};
use crate::optsys::{self, ActiveSets, Iterate, NewtonBlocks, ProblemData};
use crate::sparse::{solve_composite, CompositeOperator, SparseBuilder};

#[derive(Debug, Clone)]
pub struct SsnConfig {
    /// Outer tolerance on the total residual `R`.
    pub tol: f64,
    /// Tolerance of the inner nonlinear state solves.
    pub state_tol: f64,
    pub max_iter: usize,
    /// Damping applies while `||L_u||` exceeds this threshold.
    pub damping_threshold: f64,
    /// Damping factor used in that regime.
    pub damping_value: f64,
}

impl Default for SsnConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            state_tol: 1e-10,
            max_iter: 50,
            damping_threshold: 0.1,
            damping_value: 0.5,
        }
    }
}

impl SsnConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.state_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.damping_value > 0.0 && self.damping_value <= 1.0) {
            return Err(Error::InvalidConfig("damping_value must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Norms of the three residual components, each in the `(K+M)^{-1}`-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualParts {
    pub grad_y: f64,
    pub grad_u: f64,
    pub state: f64,
}

impl ResidualParts {
    pub fn total(&self) -> f64 {
        (self.grad_y * self.grad_y + self.grad_u * self.grad_u + self.state * self.state).sqrt()
    }
}

/// Snapshot of one iterate in the convergence history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub r_total: f64,
    pub norm_grad_y: f64,
    pub norm_grad_u: f64,
    pub norm_state: f64,
    /// Damping factor of the step that produced this iterate; `None` on the
    /// initial record.
    pub damping: Option<f64>,
    pub lower_active: usize,
    pub upper_active: usize,
}

/// Convergence history of one solve. `records` holds one entry per
/// completed Newton step, so `iterations() == records.len()`.
#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub initial: IterationRecord,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl NewtonReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(self.initial.r_total, |r| r.r_total)
    }

    /// Ratio `R_n / R_{n-1}` of the last two residuals.
    pub fn last_contraction(&self) -> Option<f64> {
        let mut values: Vec<f64> = vec![self.initial.r_total];
        values.extend(self.records.iter().map(|r| r.r_total));
        let n = values.len();
        (n >= 2).then(|| values[n - 1] / values[n - 2])
    }
}

/// Initial guess policy for [`SsnContext::solve`].
#[derive(Debug, Clone)]
pub enum Init {
    /// `u_0 = u_a`, `y_0` the forward solution for `u_0`, `p_0 = 0`.
    Default,
    /// Warmstart from a previous iterate (for example a converged solve at a
    /// neighboring penalty parameter).
    Warmstart(Iterate),
}

/// Diagnostics of one Newton step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub damping: f64,
    /// Number of step halvings forced by state-solve failures.
    pub retries: usize,
}

struct Evaluation {
    grad_y: Vec<f64>,
    grad_u: Vec<f64>,
    state: Vec<f64>,
    parts: ResidualParts,
}

/// Solver state bound to one problem instance: factorizations of the
/// Dirichlet operator and of `K+M` are built once and reused by all
/// iterations (and all warmstarted continuation solves).
pub struct SsnContext<'a> {
    data: &'a ProblemData,
    ops: &'a FemOperators,
    cfg: SsnConfig,
    forward: ForwardSolver<'a>,
    forward_cfg: ForwardConfig,
}

impl<'a> SsnContext<'a> {
    pub fn new(data: &'a ProblemData, ops: &'a FemOperators, cfg: SsnConfig) -> Result<Self> {
        cfg.validate()?;
        data.validate(ops.n())?;
        let forward = ForwardSolver::new(ops)?;
        let forward_cfg = ForwardConfig { tol: cfg.state_tol, ..ForwardConfig::default() };
        Ok(Self { data, ops, cfg, forward, forward_cfg })
    }

    pub fn config(&self) -> &SsnConfig {
        &self.cfg
    }

    pub fn forward_solver(&self) -> &ForwardSolver<'a> {
        &self.forward
    }

    /// Total residual `R` and its three components at an iterate.
    pub fn residual(&self, it: &Iterate) -> Result<(f64, ResidualParts)> {
        let eval = self.evaluate(it)?;
        Ok((eval.parts.total(), eval.parts))
    }

    fn evaluate(&self, it: &Iterate) -> Result<Evaluation> {
        let grad_y = optsys::grad_y(it, self.data, self.ops)?;
        let grad_u = optsys::grad_u(it, self.data, self.ops)?;
        let state = crate::forward::residual_state(&it.y, &it.u, self.ops, &self.data.f, &self.data.b)?;
        let parts = ResidualParts {
            grad_y: self.forward.dual_norm(&grad_y)?,
            grad_u: self.forward.dual_norm(&grad_u)?,
            state: self.forward.dual_norm(&state)?,
        };
        Ok(Evaluation { grad_y, grad_u, state, parts })
    }

    /// One damped Newton step followed by the nonlinear state update.
    pub fn step(&self, it: &Iterate) -> Result<(Iterate, StepInfo)> {
        let eval = self.evaluate(it)?;
        self.step_impl(it, &eval)
    }

    fn step_impl(&self, it: &Iterate, eval: &Evaluation) -> Result<(Iterate, StepInfo)> {
        let n = self.ops.n();
        let blocks = optsys::newton_blocks(it, self.data, self.ops)?;
        let kkt = assemble_kkt(&blocks, n)?;
        let mut rhs = Vec::with_capacity(3 * n);
        rhs.extend(eval.grad_y.iter().map(|v| -v));
        rhs.extend(eval.grad_u.iter().map(|v| -v));
        rhs.extend(eval.state.iter().map(|v| -v));
        let delta = solve_composite(&kkt, &rhs)?;

        let mut gamma = if eval.parts.grad_u > self.cfg.damping_threshold {
            self.cfg.damping_value
        } else {
            1.0
        };
        // The linear update can push the control into a regime where the
        // state equation loses solvability; halve the step a few times
        // before giving up.
        let mut last_err = None;
        for retries in 0..=5 {
            let u_new: Vec<f64> = (0..n).map(|i| it.u[i] + gamma * delta[n + i]).collect();
            let p_new: Vec<f64> = (0..n).map(|i| it.p[i] + gamma * delta[2 * n + i]).collect();
            let y_lin: Vec<f64> = (0..n).map(|i| it.y[i] + gamma * delta[i]).collect();
            match self.forward.solve_state(&u_new, &self.data.f, &self.data.b, &self.forward_cfg, Some(&y_lin)) {
                Ok(y_new) => {
                    let next = Iterate { y: y_new, u: u_new, p: p_new };
                    if !next.is_finite() {
                        return Err(Error::SingularMatrix("newton update is non-finite".into()));
                    }
                    return Ok((next, StepInfo { damping: gamma, retries }));
                }
                Err(err @ Error::CoefficientNotPositive { .. }) => {
                    gamma *= 0.5;
                    last_err = Some(err);
                }
                Err(other) => return Err(other),
            }
        }
        Err(last_err.expect("loop runs at least once"))
    }

    /// Runs the full Newton loop until `R <= tol` or `max_iter` steps.
    pub fn solve(&self, init: Init) -> Result<(Iterate, NewtonReport)> {
        let n = self.ops.n();
        let mut it = match init {
            Init::Warmstart(start) => {
                if start.n() != n {
                    return Err(Error::ShapeMismatch { expected: n, got: start.n() });
                }
                if !start.is_finite() {
                    return Err(Error::InvalidData("warmstart iterate is non-finite".into()));
                }
                start
            }
            Init::Default => {
                let u0 = self.data.u_a.clone();
                let y0 = self
                    .forward
                    .solve_state(&u0, &self.data.f, &self.data.b, &self.forward_cfg, None)?;
                Iterate { y: y0, u: u0, p: vec![0.0; n] }
            }
        };

        let mut eval = self.evaluate(&it)?;
        let initial = self.record(&eval, None, &optsys::active_sets(&it.u, self.data));
        let mut records = Vec::new();
        let mut converged = eval.parts.total() <= self.cfg.tol;
        while !converged && records.len() < self.cfg.max_iter {
            let (next, info) = self.step_impl(&it, &eval)?;
            it = next;
            eval = self.evaluate(&it)?;
            records.push(self.record(
                &eval,
                Some(info.damping),
                &optsys::active_sets(&it.u, self.data),
            ));
            converged = eval.parts.total() <= self.cfg.tol;
        }
        Ok((it, NewtonReport { initial, records, converged }))
    }

    fn record(&self, eval: &Evaluation, damping: Option<f64>, sets: &ActiveSets) -> IterationRecord {
        IterationRecord {
            r_total: eval.parts.total(),
            norm_grad_y: eval.parts.grad_y,
            norm_grad_u: eval.parts.grad_u,
            norm_state: eval.parts.state,
            damping,
            lower_active: sets.lower_count(),
            upper_active: sets.upper_count(),
        }
    }
}

/// Assembles the symmetric 3x3-block Newton matrix
///
/// ```text
/// [ L_yy    L_yu    e_y^T ]
/// [ L_yu^T  L_uu    e_u^T ]
/// [ e_y     e_u     0     ]
/// ```
///
/// as one composite operator: sparse parts are merged into a single sparse
/// base, rank-one parts stay factored (padded into the 3N space).
pub fn assemble_kkt(blocks: &NewtonBlocks, n: usize) -> Result<CompositeOperator> {
    let dim = 3 * n;
    let mut base = SparseBuilder::new(dim, dim);
    let l_yy = blocks.l_yy.sparse_part()?;
    let l_yu = blocks.l_yu.sparse_part()?;
    let l_uu = blocks.l_uu.sparse_part()?;
    let e_y = blocks.e_y.sparse_part()?;
    let e_u = blocks.e_u.sparse_part()?;
    base.add_block(0, 0, 1.0, &l_yy);
    base.add_block(0, n, 1.0, &l_yu);
    base.add_block(n, n, 1.0, &l_uu);
    base.add_block(2 * n, 0, 1.0, &e_y);
    base.add_block(2 * n, n, 1.0, &e_u);
    for (row, col, value) in l_yu.entries() {
        base.push(n + col, row, value);
    }
    for (row, col, value) in e_y.entries() {
        base.push(col, 2 * n + row, value);
    }
    for (row, col, value) in e_u.entries() {
        base.push(n + col, 2 * n + row, value);
    }
    let mut kkt = CompositeOperator::new(base.finalize()?);

    let pad = |v: &[f64], offset: usize| {
        let mut out = vec![0.0; dim];
        out[offset..offset + n].copy_from_slice(v);
        out
    };
    for (left, right) in blocks.l_yy.lowrank_terms() {
        kkt.push_lowrank_term(pad(left, 0), pad(right, 0));
    }
    for (left, right) in blocks.l_yu.lowrank_terms() {
        kkt.push_lowrank_term(pad(left, 0), pad(right, n));
        kkt.push_lowrank_term(pad(right, n), pad(left, 0));
    }
    for (left, right) in blocks.e_y.lowrank_terms() {
        kkt.push_lowrank_term(pad(left, 2 * n), pad(right, 0));
        kkt.push_lowrank_term(pad(right, 0), pad(left, 2 * n));
    }
    for (left, right) in blocks.e_u.lowrank_terms() {
        kkt.push_lowrank_term(pad(left, 2 * n), pad(right, n));
        kkt.push_lowrank_term(pad(right, n), pad(left, 2 * n));
    }
    Ok(kkt)
}
