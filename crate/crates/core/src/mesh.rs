//! 2-D conforming triangulations of rectangular domains.
//!
//! A [`Mesh`] stores vertex coordinates, counter-clockwise triangles and a
//! boundary flag per vertex. Boundary detection is purely combinatorial: a
//! vertex is on the boundary iff it is an endpoint of an edge that belongs
//! to exactly one triangle. This keeps imported meshes with distorted
//! coordinates working without any geometric tolerance.
//!
//! File format (plain text, LF line endings, no comments):
//! ```text
//! N_V N_T
//! x y          (N_V lines, decimal)
//! i j k        (N_T lines, 0-based vertex indices)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Immutable conforming triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
}

impl Mesh {
    /// Builds a mesh from raw arrays, normalizing triangle orientation to
    /// counter-clockwise and running the conformity checks.
    pub fn new(vertices: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n_v = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::InvalidMesh(format!("vertex {i} has non-finite coordinates")));
            }
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &idx in tri.iter() {
                if idx >= n_v {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {idx}, but mesh has {n_v} vertices"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} has repeated vertices")));
            }
            let area = signed_area(&vertices, tri);
            if area == 0.0 || !area.is_finite() {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }

        // Connectivity checks ignore exact duplicates: a duplicated triangle
        // is accepted and reported by `validation_warnings` instead.
        let mut distinct: Vec<[usize; 3]> = triangles.clone();
        distinct.sort_unstable_by_key(|t| {
            let mut k = *t;
            k.sort_unstable();
            k
        });
        distinct.dedup_by_key(|t| {
            let mut k = *t;
            k.sort_unstable();
            k
        });
        let edges = edge_multiplicities(&distinct);
        for (&(a, b), &count) in &edges {
            if count > 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a},{b}) is shared by {count} triangles"
                )));
            }
        }

        // Boundary edges of a conforming mesh form closed loops, so every
        // vertex touched by boundary edges must have exactly two of them.
        // Hanging nodes violate this.
        let mut boundary_degree = vec![0usize; n_v];
        let mut boundary_vertex = vec![false; n_v];
        for (&(a, b), &count) in &edges {
            if count == 1 {
                boundary_degree[a] += 1;
                boundary_degree[b] += 1;
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }
        for (i, &deg) in boundary_degree.iter().enumerate() {
            if deg != 0 && deg != 2 {
                return Err(Error::InvalidMesh(format!(
                    "vertex {i} touches {deg} boundary edges; triangulation is not conforming"
                )));
            }
        }

        Ok(Self { vertices, triangles, boundary_vertex })
    }

    /// Structured triangulation of `[xmin,xmax] x [ymin,ymax]` with `n x n`
    /// grid cells, each split along the lower-left to upper-right diagonal.
    /// Yields `(n+1)^2` vertices and `2 n^2` triangles.
    pub fn generate_rect(xmin: f64, xmax: f64, ymin: f64, ymax: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("grid resolution n must be positive".into()));
        }
        if !(xmin < xmax) || !(ymin < ymax) {
            return Err(Error::InvalidMesh(format!(
                "degenerate rectangle [{xmin},{xmax}] x [{ymin},{ymax}]"
            )));
        }
        let m = n + 1;
        let hx = (xmax - xmin) / n as f64;
        let hy = (ymax - ymin) / n as f64;
        let mut vertices = Vec::with_capacity(m * m);
        for j in 0..m {
            let y = if j == n { ymax } else { ymin + j as f64 * hy };
            for i in 0..m {
                let x = if i == n { xmax } else { xmin + i as f64 * hx };
                vertices.push([x, y]);
            }
        }
        let idx = |i: usize, j: usize| j * m + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v01 = idx(i, j + 1);
                let v11 = idx(i + 1, j + 1);
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::new(vertices, triangles)
    }

    /// Uniform refinement: each triangle is split into four via its edge
    /// midpoints. Midpoint vertices are shared between neighboring triangles,
    /// so `N_V' = N_V + N_E` and `N_T' = 4 N_T`.
    pub fn refine_uniform(&self) -> Result<Self> {
        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let pa = vertices[a];
                let pb = vertices[b];
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let mab = mid(a, b, &mut vertices);
            let mbc = mid(b, c, &mut vertices);
            let mca = mid(c, a, &mut vertices);
            triangles.push([a, mab, mca]);
            triangles.push([mab, b, mbc]);
            triangles.push([mca, mbc, c]);
            triangles.push([mab, mbc, mca]);
        }
        Self::new(vertices, triangles)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Number of unique edges.
    pub fn n_edges(&self) -> usize {
        edge_multiplicities(&self.triangles).len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        self.boundary_vertex[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary_vertex
    }

    /// Signed area of triangle `t` (positive by construction).
    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Non-fatal findings: duplicated triangles and an Euler-characteristic
    /// mismatch (the latter is expected for domains with holes).
    pub fn validation_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let mut seen: HashMap<[usize; 3], usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let mut key = *tri;
            key.sort_unstable();
            if let Some(&first) = seen.get(&key) {
                warnings.push(format!("triangle {t} duplicates triangle {first}"));
            } else {
                seen.insert(key, t);
            }
        }
        let euler =
            self.n_vertices() as i64 - self.n_edges() as i64 + self.n_triangles() as i64;
        if euler != 1 {
            warnings.push(format!(
                "Euler characteristic V - E + T = {euler}, expected 1 for a simply connected domain"
            ));
        }
        warnings
    }

    /// Serializes in the plain-text format documented at module level.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n_vertices(), self.n_triangles());
        for v in &self.vertices {
            let _ = writeln!(out, "{} {}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads the plain-text format back. Validation errors (bad indices,
    /// non-conforming connectivity) are fatal; call
    /// [`Mesh::validation_warnings`] afterwards for non-fatal findings.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let err = |reason: String| Error::MeshFile {
            path: path.display().to_string(),
            reason,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err("empty file".into()))?;
        let mut parts = header.split_whitespace();
        let n_v: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(format!("bad header line {header:?}")))?;
        let n_t: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(format!("bad header line {header:?}")))?;
        if parts.next().is_some() {
            return Err(err(format!("trailing tokens in header {header:?}")));
        }
        let mut vertices = Vec::with_capacity(n_v);
        for k in 0..n_v {
            let line = lines.next().ok_or_else(|| err(format!("missing vertex line {k}")))?;
            let mut it = line.split_whitespace();
            let x: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(format!("bad vertex line {k}: {line:?}")))?;
            let y: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(format!("bad vertex line {k}: {line:?}")))?;
            if it.next().is_some() {
                return Err(err(format!("trailing tokens on vertex line {k}: {line:?}")));
            }
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(n_t);
        for k in 0..n_t {
            let line = lines.next().ok_or_else(|| err(format!("missing triangle line {k}")))?;
            let mut tri = [0usize; 3];
            let mut it = line.split_whitespace();
            for slot in tri.iter_mut() {
                *slot = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(format!("bad triangle line {k}: {line:?}")))?;
            }
            if it.next().is_some() {
                return Err(err(format!("trailing tokens on triangle line {k}: {line:?}")));
            }
            triangles.push(tri);
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(err("trailing content after triangle block".into()));
        }
        Self::new(vertices, triangles)
    }
}

fn signed_area(vertices: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = *tri;
    let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
    0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
}

fn edge_multiplicities(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut edges = HashMap::with_capacity(3 * triangles.len());
    for tri in triangles {
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            let key = (a.min(b), a.max(b));
            *edges.entry(key).or_insert(0) += 1;
        }
    }
    edges
}
