//! P1 finite element operators on a triangulation.
//!
//! Exact element formulas for affine linear elements: on a triangle with
//! area `A` and barycentric gradient coefficients `(b_i, c_i)`,
//! the element stiffness is `(b_i b_j + c_i c_j) / (4A)` and the element
//! mass is `(A/12) [[2,1,1],[1,2,1],[1,1,2]]`. The lumped mass collects the
//! mass-matrix row sums (A/3 per element corner).

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{SparseBuilder, SparseMatrix};

/// Assembled operators of one mesh. Immutable; shared by the forward solver
/// and the optimality system.
#[derive(Debug, Clone)]
pub struct FemOperators {
    /// Mass matrix `M_ij = integral of phi_i phi_j`.
    pub mass: SparseMatrix,
    /// Stiffness matrix `K_ij = integral of grad phi_i . grad phi_j`.
    pub stiffness: SparseMatrix,
    /// Diagonal of the lumped mass matrix, `M~_ii = sum_j M_ij`.
    pub mass_lumped: Vec<f64>,
    /// Boundary flags; `true` marks a vertex of the Dirichlet boundary.
    boundary: Vec<bool>,
}

impl FemOperators {
    pub fn n(&self) -> usize {
        self.mass_lumped.len()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    /// Applies the interior projector `P_Omega` (zeroes boundary entries).
    pub fn project_interior(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, &x)| if self.boundary[i] { 0.0 } else { x })
            .collect()
    }

    /// Applies the boundary projector `P_Gamma` (zeroes interior entries).
    pub fn project_boundary(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, &x)| if self.boundary[i] { x } else { 0.0 })
            .collect()
    }

    /// `K + M`, the matrix of the discrete `H^{-1}`-type residual norm.
    pub fn stiffness_plus_mass(&self) -> Result<SparseMatrix> {
        let n = self.n();
        let mut b = SparseBuilder::new(n, n);
        b.add_block(0, 0, 1.0, &self.stiffness);
        b.add_block(0, 0, 1.0, &self.mass);
        b.finalize()
    }

    /// The Dirichlet state operator `P_Omega K + P_Gamma`.
    pub fn dirichlet_stiffness(&self) -> Result<SparseMatrix> {
        let n = self.n();
        let mut b = SparseBuilder::new(n, n);
        for (row, col, value) in self.stiffness.entries() {
            if !self.boundary[row] {
                b.push(row, col, value);
            }
        }
        for i in 0..n {
            if self.boundary[i] {
                b.push(i, i, 1.0);
            }
        }
        b.finalize()
    }
}

/// Element-wise assembly over all triangles.
pub fn assemble(mesh: &Mesh) -> Result<FemOperators> {
    let n = mesh.n_vertices();
    let mut mass = SparseBuilder::new(n, n);
    let mut stiffness = SparseBuilder::new(n, n);
    let mut lumped = vec![0.0; n];

    for (t, tri) in mesh.triangles().iter().enumerate() {
        let [i, j, k] = *tri;
        let p = [mesh.vertices()[i], mesh.vertices()[j], mesh.vertices()[k]];
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
        // Gradients of the barycentric basis: grad phi_l = (b_l, c_l) / (2A).
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        let idx = [i, j, k];
        for r in 0..3 {
            for s in 0..3 {
                let k_rs = (b[r] * b[s] + c[r] * c[s]) / (4.0 * area);
                let m_rs = area / 12.0 * if r == s { 2.0 } else { 1.0 };
                stiffness.push(idx[r], idx[s], k_rs);
                mass.push(idx[r], idx[s], m_rs);
            }
            lumped[idx[r]] += area / 3.0;
        }
    }

    Ok(FemOperators {
        mass: mass.finalize()?,
        stiffness: stiffness.finalize()?,
        mass_lumped: lumped,
        boundary: mesh.boundary_flags().to_vec(),
    })
}

/// Vertex-wise evaluation of a coefficient function.
pub fn interpolate_nodal(mesh: &Mesh, g: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(mesh.n_vertices());
    for (i, v) in mesh.vertices().iter().enumerate() {
        let value = g(v[0], v[1]);
        if !value.is_finite() {
            return Err(Error::NonFiniteValue { vertex: i, value });
        }
        out.push(value);
    }
    Ok(out)
}
