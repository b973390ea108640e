//! Nonlinear state solves via the scalar-root reduction.
//!
//! For a fixed control the discrete state equation couples all nodes only
//! through the scalar `s = y^T K y`. Freezing `s` turns it into the linear
//! Dirichlet problem `P_Omega K y = P_Omega M~ F (diag(u) + s B)^{-1} 1`,
//! `P_Gamma y = 0`, whose solution `y(s)` is monotone in `s` whenever
//! `b >= 0`. The state solve therefore reduces to the scalar root problem
//! `g(s) = s - y(s)^T K y(s) = 0` with `g` strictly increasing, `g(0) <= 0`
//! and `g(s) -> infinity`; the root is found by doubling a bracket and then
//! Illinois iteration. Every evaluation of `g` reuses one sparse
//! factorization of `P_Omega K + P_Gamma`.

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::sparse::{LuFactor, SparseMatrix, SpdFactor};

/// Smallest admissible value of the nonlocal diagonal `u_i + b_i s`.
pub const COEFF_FLOOR: f64 = 1e-12;

/// Termination and safeguard parameters for [`ForwardSolver::solve_state`].
#[derive(Debug, Clone)]
pub struct ForwardConfig {
    /// Termination on the state residual in the `(K+M)^{-1}`-norm.
    pub tol: f64,
    /// Cap on scalar function evaluations (one linear solve each).
    pub max_iter: usize,
    /// Bracket expansion factor, > 1.
    pub bracket_growth: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 80, bracket_growth: 2.0 }
    }
}

impl ForwardConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("forward tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("forward max_iter must be at least 1".into()));
        }
        if !(self.bracket_growth > 1.0) {
            return Err(Error::InvalidConfig("bracket_growth must exceed 1".into()));
        }
        Ok(())
    }
}

/// The diagonal nonlocal coefficient `D(y,u) = diag(u) + (y^T K y) B`.
#[derive(Debug, Clone)]
pub struct NonlocalCoeff {
    /// The Dirichlet energy `s = y^T K y`.
    pub s: f64,
    /// Diagonal entries `u_i + b_i s`, all above [`COEFF_FLOOR`].
    pub diag: Vec<f64>,
}

impl NonlocalCoeff {
    pub fn new(y: &[f64], u: &[f64], b: &[f64], stiffness: &SparseMatrix) -> Result<Self> {
        let s = stiffness.quad_form(y).max(0.0);
        Self::with_energy(s, u, b)
    }

    /// Builds the diagonal for a frozen energy value.
    pub fn with_energy(s: f64, u: &[f64], b: &[f64]) -> Result<Self> {
        let mut diag = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let d = u[i] + b[i] * s;
            if !(d > COEFF_FLOOR) {
                return Err(Error::CoefficientNotPositive { node: i, value: d });
            }
            diag.push(d);
        }
        Ok(Self { s, diag })
    }
}

/// Pointwise evaluation of the discrete state residual
/// `e(y,u) = P_Omega K y - P_Omega M~ F D(y,u)^{-1} 1 + P_Gamma y`.
pub fn residual_state(
    y: &[f64],
    u: &[f64],
    ops: &FemOperators,
    f: &[f64],
    b: &[f64],
) -> Result<Vec<f64>> {
    let coeff = NonlocalCoeff::new(y, u, b, &ops.stiffness)?;
    Ok(residual_state_with(y, ops, f, &coeff))
}

fn residual_state_with(y: &[f64], ops: &FemOperators, f: &[f64], coeff: &NonlocalCoeff) -> Vec<f64> {
    let ky = ops.stiffness.matvec(y);
    (0..ops.n())
        .map(|i| {
            if ops.is_boundary(i) {
                y[i]
            } else {
                ky[i] - ops.mass_lumped[i] * f[i] / coeff.diag[i]
            }
        })
        .collect()
}

/// Forward solver bound to one set of FEM operators. Owns the factorization
/// of the Dirichlet operator and of `K + M` (residual norm), both reused
/// across calls.
pub struct ForwardSolver<'a> {
    ops: &'a FemOperators,
    dirichlet: LuFactor,
    norm: SpdFactor,
}

impl<'a> ForwardSolver<'a> {
    pub fn new(ops: &'a FemOperators) -> Result<Self> {
        let dirichlet = LuFactor::new(&ops.dirichlet_stiffness()?)?;
        let norm = SpdFactor::new(&ops.stiffness_plus_mass()?)?;
        Ok(Self { ops, dirichlet, norm })
    }

    pub fn operators(&self) -> &FemOperators {
        self.ops
    }

    /// `||v||_{(K+M)^{-1}}`.
    pub fn dual_norm(&self, v: &[f64]) -> Result<f64> {
        self.norm.inv_norm(v)
    }

    pub fn norm_factor(&self) -> &SpdFactor {
        &self.norm
    }

    /// Solves the linear Dirichlet problem for a frozen nonlocal diagonal.
    pub fn linear_state(&self, f: &[f64], coeff: &NonlocalCoeff) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = (0..self.ops.n())
            .map(|i| {
                if self.ops.is_boundary(i) {
                    0.0
                } else {
                    self.ops.mass_lumped[i] * f[i] / coeff.diag[i]
                }
            })
            .collect();
        self.dirichlet.solve(&rhs)
    }

    /// Solves `e(y, u) = 0` for the state `y`.
    ///
    /// `y_init` seeds the bracket with the energy of a previous state; the
    /// result does not depend on it beyond the termination tolerance.
    pub fn solve_state(
        &self,
        u: &[f64],
        f: &[f64],
        b: &[f64],
        cfg: &ForwardConfig,
        y_init: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        if u.len() != self.ops.n() {
            return Err(Error::ShapeMismatch { expected: self.ops.n(), got: u.len() });
        }
        let mut evals_left = cfg.max_iter;
        let mut eval = |s: f64| -> Result<(Vec<f64>, f64)> {
            if evals_left == 0 {
                return Err(Error::MaxIterationsExceeded {
                    what: "forward state solve",
                    max_iter: cfg.max_iter,
                });
            }
            evals_left -= 1;
            let frozen = NonlocalCoeff::with_energy(s, u, b)?;
            let y = self.linear_state(f, &frozen)?;
            let energy = self.ops.stiffness.quad_form(&y).max(0.0);
            Ok((y, energy))
        };
        let accepted = |solver: &Self, y: &[f64]| -> Result<Option<Vec<f64>>> {
            let coeff = NonlocalCoeff::new(y, u, b, &solver.ops.stiffness)?;
            let e = residual_state_with(y, solver.ops, f, &coeff);
            if solver.norm.inv_norm(&e)? <= cfg.tol {
                Ok(Some(y.to_vec()))
            } else {
                Ok(None)
            }
        };

        // g(0) <= 0 anchors the lower bracket end.
        let (y0, energy0) = eval(0.0)?;
        if let Some(y) = accepted(self, &y0)? {
            return Ok(y);
        }
        let mut lo = 0.0;
        let mut g_lo = -energy0;
        if g_lo >= 0.0 {
            // Only possible when the energy vanishes; the residual gate above
            // must then have accepted y0.
            return Err(Error::MaxIterationsExceeded {
                what: "forward state solve",
                max_iter: cfg.max_iter,
            });
        }

        // Expand the upper end, seeded by the energy of the initial guess.
        let seed = y_init
            .map(|y| self.ops.stiffness.quad_form(y).max(0.0))
            .filter(|&s| s.is_finite() && s > 0.0)
            .unwrap_or(1.0);
        let mut hi = seed.max(1e-8);
        let mut g_hi;
        loop {
            let (y, energy) = eval(hi)?;
            g_hi = hi - energy;
            if g_hi > 0.0 {
                break;
            }
            if let Some(sol) = accepted(self, &y)? {
                return Ok(sol);
            }
            lo = hi;
            g_lo = g_hi;
            hi *= cfg.bracket_growth;
        }

        // Illinois iteration on the bracket [lo, hi].
        let mut stale_side = 0i8;
        loop {
            let denom = g_hi - g_lo;
            let mut s_new = if denom.abs() > 0.0 {
                (lo * g_hi - hi * g_lo) / denom
            } else {
                0.5 * (lo + hi)
            };
            if !s_new.is_finite() || s_new <= lo || s_new >= hi {
                s_new = 0.5 * (lo + hi);
            }
            let (y, energy) = eval(s_new)?;
            if let Some(sol) = accepted(self, &y)? {
                return Ok(sol);
            }
            let g_new = s_new - energy;
            if g_new <= 0.0 {
                lo = s_new;
                g_lo = g_new;
                if stale_side == 1 {
                    g_hi *= 0.5;
                }
                stale_side = 1;
            } else {
                hi = s_new;
                g_hi = g_new;
                if stale_side == -1 {
                    g_lo *= 0.5;
                }
                stale_side = -1;
            }
        }
    }
}
