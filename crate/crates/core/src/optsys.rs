//! Discrete objective, Lagrangian derivatives, Newton blocks and active sets
//! of the penalized control problem.
//!
//! The objective is tracking-type with an `H^1`-seminorm and an `L^2` control
//! cost plus Moreau-Yosida penalties for the bounds:
//!
//! ```text
//! J(y,u) = 1/2 (y-y_d)^T M (y-y_d) + l1/2 u^T K u + l2/2 u^T M u
//!        + 1/(2 eps) (u_a-u)_+^T M~ (u_a-u)_+ + 1/(2 eps) (u-u_b)_+^T M~ (u-u_b)_+
//! ```
//!
//! All first- and second-order quantities below are exact derivatives of the
//! discrete Lagrangian `L = J + p^T e(y,u)`; the rank-one couplings produced
//! by the nonlocal coefficient are kept in factored form.
//!
//! Active sets use the non-strict convention: a node exactly on a bound
//! counts as active. Lower and upper indicators are summed into the combined
//! penalty indicator, so a node with touching bounds (`u_a = u_b`) fires
//! both and its penalty curvature is counted twice.

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::forward::{self, NonlocalCoeff};
use crate::sparse::{CompositeOperator, SparseBuilder, SparseMatrix};

/// Nodal data and scalar parameters of one problem instance.
///
/// An entry `u_b[i] = +inf` means "no upper bound at node i"; the upper
/// penalty and the upper active mask skip such nodes.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub f: Vec<f64>,
    pub b: Vec<f64>,
    pub u_a: Vec<f64>,
    pub u_b: Vec<f64>,
    pub y_d: Vec<f64>,
    /// Weight of the `H^1`-seminorm control cost (multiplies `K`).
    pub lambda1: f64,
    /// Weight of the `L^2` control cost (multiplies `M`).
    pub lambda2: f64,
    /// Moreau-Yosida penalty parameter.
    pub epsilon: f64,
}

impl ProblemData {
    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [
            ("f", &self.f),
            ("b", &self.b),
            ("u_a", &self.u_a),
            ("u_b", &self.u_b),
            ("y_d", &self.y_d),
        ] {
            if v.len() != n {
                return Err(Error::InvalidData(format!(
                    "{name} has {} entries, mesh has {n} vertices",
                    v.len()
                )));
            }
        }
        for i in 0..n {
            if !self.f[i].is_finite() || !self.y_d[i].is_finite() {
                return Err(Error::InvalidData(format!("f or y_d non-finite at node {i}")));
            }
            if !(self.u_a[i] > 0.0) || !self.u_a[i].is_finite() {
                return Err(Error::InvalidData(format!(
                    "lower bound must be positive, u_a[{i}] = {}",
                    self.u_a[i]
                )));
            }
            if !(self.b[i] >= 0.0) {
                return Err(Error::InvalidData(format!(
                    "nonlocality coefficient must be nonnegative, b[{i}] = {}",
                    self.b[i]
                )));
            }
            if self.u_b[i].is_nan() || self.u_b[i] < self.u_a[i] {
                return Err(Error::InvalidData(format!(
                    "bounds must satisfy u_b >= u_a, got [{}, {}] at node {i}",
                    self.u_a[i], self.u_b[i]
                )));
            }
        }
        if !(self.lambda1 >= 0.0) {
            return Err(Error::InvalidData("lambda1 must be nonnegative".into()));
        }
        if !(self.lambda2 > 0.0) {
            return Err(Error::InvalidData("lambda2 must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidData("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// One point of the optimization: state, control and adjoint state.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl Iterate {
    pub fn zeros(n: usize) -> Self {
        Self { y: vec![0.0; n], u: vec![0.0; n], p: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().chain(&self.u).chain(&self.p).all(|v| v.is_finite())
    }
}

/// Nodal bound-activity masks with the `>= 0` tie convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSets {
    pub lower: Vec<bool>,
    pub upper: Vec<bool>,
}

impl ActiveSets {
    pub fn lower_count(&self) -> usize {
        self.lower.iter().filter(|&&a| a).count()
    }

    pub fn upper_count(&self) -> usize {
        self.upper.iter().filter(|&&a| a).count()
    }

    /// Combined indicator `D_A` as the sum of the two masks (2 where both
    /// bounds touch and fire together).
    pub fn combined(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &up)| (lo as u8 + up as u8) as f64)
            .collect()
    }
}

/// `lower[i] = (u_a - u)_i >= 0`, `upper[i] = (u - u_b)_i >= 0`.
pub fn active_sets(u: &[f64], data: &ProblemData) -> ActiveSets {
    let lower = (0..u.len()).map(|i| data.u_a[i] - u[i] >= 0.0).collect();
    let upper = (0..u.len())
        .map(|i| data.u_b[i].is_finite() && u[i] - data.u_b[i] >= 0.0)
        .collect();
    ActiveSets { lower, upper }
}

fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

/// Tracking objective with control costs and Moreau-Yosida penalties.
pub fn objective(y: &[f64], u: &[f64], data: &ProblemData, ops: &FemOperators) -> f64 {
    let misfit: Vec<f64> = y.iter().zip(&data.y_d).map(|(a, b)| a - b).collect();
    let mut value = 0.5 * ops.mass.quad_form(&misfit)
        + 0.5 * data.lambda1 * ops.stiffness.quad_form(u)
        + 0.5 * data.lambda2 * ops.mass.quad_form(u);
    let scale = 0.5 / data.epsilon;
    for i in 0..u.len() {
        let low = positive_part(data.u_a[i] - u[i]);
        value += scale * ops.mass_lumped[i] * low * low;
        if data.u_b[i].is_finite() {
            let up = positive_part(u[i] - data.u_b[i]);
            value += scale * ops.mass_lumped[i] * up * up;
        }
    }
    value
}

/// Scalar Lagrangian `L = J + p^T e(y,u)`; the base quantity of the
/// finite-difference consistency checks.
pub fn lagrangian(it: &Iterate, data: &ProblemData, ops: &FemOperators) -> Result<f64> {
    let e = forward::residual_state(&it.y, &it.u, ops, &data.f, &data.b)?;
    let coupling: f64 = it.p.iter().zip(&e).map(|(p, e)| p * e).sum();
    Ok(objective(&it.y, &it.u, data, ops) + coupling)
}

/// Interior-weighted sums over `p` used by the derivative formulas:
/// `sum_i b_i^k f_i M~_ii p_i / d_i^m` over interior nodes.
fn nonlocal_sum(it: &Iterate, data: &ProblemData, ops: &FemOperators, coeff: &NonlocalCoeff, b_pow: u32, d_pow: i32) -> f64 {
    let mut acc = 0.0;
    for i in 0..it.n() {
        if !ops.is_boundary(i) {
            acc += data.b[i].powi(b_pow as i32) * data.f[i] * ops.mass_lumped[i] * it.p[i]
                / coeff.diag[i].powi(d_pow);
        }
    }
    acc
}

/// Gradient of the Lagrangian with respect to the state,
/// `L_y = M(y - y_d) + K P_Omega p + 2 (1^T D^{-2} B F M~ P_Omega p) K y + P_Gamma p`.
pub fn grad_y(it: &Iterate, data: &ProblemData, ops: &FemOperators) -> Result<Vec<f64>> {
    let coeff = NonlocalCoeff::new(&it.y, &it.u, &data.b, &ops.stiffness)?;
    let misfit: Vec<f64> = it.y.iter().zip(&data.y_d).map(|(a, b)| a - b).collect();
    let m_misfit = ops.mass.matvec(&misfit);
    let kp = ops.stiffness.matvec(&ops.project_interior(&it.p));
    let ky = ops.stiffness.matvec(&it.y);
    let sigma = nonlocal_sum(it, data, ops, &coeff, 1, 2);
    Ok((0..it.n())
        .map(|i| {
            m_misfit[i]
                + kp[i]
                + 2.0 * sigma * ky[i]
                + if ops.is_boundary(i) { it.p[i] } else { 0.0 }
        })
        .collect())
}

/// Gradient of the Lagrangian with respect to the control,
/// `L_u = l1 K u + l2 M u - 1/eps M~ (u_a-u)_+ + 1/eps M~ (u-u_b)_+
///        + F D^{-2} M~ P_Omega p`.
pub fn grad_u(it: &Iterate, data: &ProblemData, ops: &FemOperators) -> Result<Vec<f64>> {
    let coeff = NonlocalCoeff::new(&it.y, &it.u, &data.b, &ops.stiffness)?;
    let ku = ops.stiffness.matvec(&it.u);
    let mu = ops.mass.matvec(&it.u);
    let sets = active_sets(&it.u, data);
    Ok((0..it.n())
        .map(|i| {
            let mut g = data.lambda1 * ku[i] + data.lambda2 * mu[i];
            if sets.lower[i] {
                g -= ops.mass_lumped[i] / data.epsilon * (data.u_a[i] - it.u[i]);
            }
            if sets.upper[i] {
                g += ops.mass_lumped[i] / data.epsilon * (it.u[i] - data.u_b[i]);
            }
            if !ops.is_boundary(i) {
                g += data.f[i] / (coeff.diag[i] * coeff.diag[i]) * ops.mass_lumped[i] * it.p[i];
            }
            g
        })
        .collect())
}

/// The five distinct blocks of the generalized Newton matrix, each kept in
/// sparse-plus-rank-one form.
pub struct NewtonBlocks {
    /// `e_y = P_Omega K + 2 P_Omega M~ F B D^{-2} 1 (Ky)^T + P_Gamma`
    pub e_y: CompositeOperator,
    /// `e_u = P_Omega M~ D^{-2} F` (diagonal)
    pub e_u: CompositeOperator,
    /// `L_yy = M + 2 (p^T P_Omega M~ F B D^{-2} 1) K
    ///         - 8 (p^T P_Omega M~ F B^2 D^{-3} 1) Ky (Ky)^T`
    pub l_yy: CompositeOperator,
    /// `L_yu = -4 Ky (B D^{-3} F M~ P_Omega p)^T` (pure rank-one)
    pub l_yu: CompositeOperator,
    /// `L_uu = l1 K + l2 M + 1/eps D_A M~ D_A - 2 diag(M~ P_Omega p) D^{-3} F`
    pub l_uu: CompositeOperator,
}

pub fn newton_blocks(it: &Iterate, data: &ProblemData, ops: &FemOperators) -> Result<NewtonBlocks> {
    let n = it.n();
    let coeff = NonlocalCoeff::new(&it.y, &it.u, &data.b, &ops.stiffness)?;
    let ky = ops.stiffness.matvec(&it.y);
    let sets = active_sets(&it.u, data);

    let mut e_y = CompositeOperator::new(ops.dirichlet_stiffness()?);
    let w_state: Vec<f64> = (0..n)
        .map(|i| {
            if ops.is_boundary(i) {
                0.0
            } else {
                2.0 * ops.mass_lumped[i] * data.f[i] * data.b[i]
                    / (coeff.diag[i] * coeff.diag[i])
            }
        })
        .collect();
    e_y.push_lowrank_term(w_state, ky.clone());

    let e_u_diag: Vec<f64> = (0..n)
        .map(|i| {
            if ops.is_boundary(i) {
                0.0
            } else {
                ops.mass_lumped[i] * data.f[i] / (coeff.diag[i] * coeff.diag[i])
            }
        })
        .collect();
    let e_u = CompositeOperator::new(SparseMatrix::from_diagonal(&e_u_diag)?);

    let sigma2 = nonlocal_sum(it, data, ops, &coeff, 1, 2);
    let sigma3 = nonlocal_sum(it, data, ops, &coeff, 2, 3);
    let mut l_yy = CompositeOperator::new(ops.mass.clone());
    l_yy.push_scalar_term(2.0 * sigma2, ops.stiffness.clone());
    l_yy.push_lowrank_term(ky.iter().map(|v| -8.0 * sigma3 * v).collect(), ky.clone());

    let mut l_yu = CompositeOperator::new(zero_matrix(n));
    let w_adjoint: Vec<f64> = (0..n)
        .map(|i| {
            if ops.is_boundary(i) {
                0.0
            } else {
                data.b[i] * data.f[i] * ops.mass_lumped[i] * it.p[i] / coeff.diag[i].powi(3)
            }
        })
        .collect();
    l_yu.push_lowrank_term(ky.iter().map(|v| -4.0 * v).collect(), w_adjoint);

    let mut l_uu_builder = SparseBuilder::new(n, n);
    l_uu_builder.add_block(0, 0, data.lambda1, &ops.stiffness);
    l_uu_builder.add_block(0, 0, data.lambda2, &ops.mass);
    let combined = sets.combined();
    for i in 0..n {
        let mut diag = combined[i] * combined[i] * ops.mass_lumped[i] / data.epsilon;
        if !ops.is_boundary(i) {
            diag -= 2.0 * ops.mass_lumped[i] * it.p[i] * data.f[i] / coeff.diag[i].powi(3);
        }
        l_uu_builder.push(i, i, diag);
    }
    let l_uu = CompositeOperator::new(l_uu_builder.finalize()?);

    Ok(NewtonBlocks { e_y, e_u, l_yy, l_yu, l_uu })
}

fn zero_matrix(n: usize) -> SparseMatrix {
    SparseBuilder::new(n, n).finalize().expect("empty matrix is valid")
}

/// Newton derivative of `max(0, .)`: passes `du` where `u > 0`, zero
/// elsewhere.
pub fn max_newton_derivative(u: &[f64], du: &[f64]) -> Vec<f64> {
    u.iter().zip(du).map(|(&ui, &dui)| if ui > 0.0 { dui } else { 0.0 }).collect()
}

/// Evaluation of the cutoff function and its first three derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Monotone convex `C^3` approximation of the positive part:
/// identity for `t > eps`, zero for `t < -eps`, and on `[-eps, eps]` the
/// two-point Hermite interpolant of degree seven matching value and three
/// derivatives on both sides. In normalized coordinates `tau = t/eps`:
///
/// ```text
/// q(tau)   = 5/32 + tau/2 + 15/32 tau^2 - 5/32 tau^4 + 1/32 tau^6
/// q'(tau)  = 1/2 + 15/16 tau - 5/8 tau^3 + 3/16 tau^5
/// q''(tau) = 15/16 (1 - tau^2)^2
/// ```
///
/// `q''` is a perfect square, so the blend is convex and `q'` is monotone
/// with exact range `[0, 1]`. Construction still verifies the slope bounds
/// on a dense grid and fails if they are violated.
#[derive(Debug, Clone)]
pub struct CutoffFamily {
    epsilon: f64,
}

impl CutoffFamily {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidCutoff(format!("epsilon must be positive, got {epsilon}")));
        }
        let family = Self { epsilon };
        let samples = 2001;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..samples {
            let t = epsilon * (2.0 * k as f64 / (samples - 1) as f64 - 1.0);
            let e = family.eval(t);
            if !(-1e-12..=1.0 + 1e-12).contains(&e.d1) {
                return Err(Error::InvalidCutoff(format!("slope {} out of [0,1] at t = {t}", e.d1)));
            }
            if e.value < prev - 1e-12 * epsilon {
                return Err(Error::InvalidCutoff(format!("not monotone at t = {t}")));
            }
            prev = e.value;
        }
        Ok(family)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eval(&self, t: f64) -> CutoffEval {
        let eps = self.epsilon;
        if t >= eps {
            return CutoffEval { value: t, d1: 1.0, d2: 0.0, d3: 0.0 };
        }
        if t <= -eps {
            return CutoffEval { value: 0.0, d1: 0.0, d2: 0.0, d3: 0.0 };
        }
        let tau = t / eps;
        let tau2 = tau * tau;
        let q = 5.0 / 32.0
            + 0.5 * tau
            + 15.0 / 32.0 * tau2
            - 5.0 / 32.0 * tau2 * tau2
            + 1.0 / 32.0 * tau2 * tau2 * tau2;
        // The exact slope lies in [0, 1]; clamp away summation roundoff.
        let q1 = (0.5 + 15.0 / 16.0 * tau - 5.0 / 8.0 * tau * tau2
            + 3.0 / 16.0 * tau * tau2 * tau2)
            .clamp(0.0, 1.0);
        let one_m = 1.0 - tau2;
        let q2 = 15.0 / 16.0 * one_m * one_m;
        let q3 = -15.0 / 4.0 * tau * one_m;
        CutoffEval { value: eps * q, d1: q1, d2: q2 / eps, d3: q3 / (eps * eps) }
    }
}
