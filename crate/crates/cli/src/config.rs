//! Flat `key = value` experiment configuration.
//!
//! Each subcommand starts from a built-in preset mirroring the published
//! experiment setups; a `--config` file overrides individual keys. Meshes
//! are structured triangulations whose vertex counts are pinned closest to
//! the reference levels (177 / 665 / 2577 vertices), i.e. grid resolutions
//! 12 / 25 / 50.

use std::path::{Path, PathBuf};

use crate::expr::Expr;
use kirchhoff::{fem, mesh::Mesh, optsys::ProblemData, ssn::SsnConfig, Result};

/// Grid resolutions whose structured meshes are closest in vertex count to
/// the reference mesh levels.
pub const MESH_LEVEL_RESOLUTIONS: [usize; 3] = [12, 25, 50];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    /// Structured grid resolution (used when `mesh_file` is absent).
    pub mesh_n: usize,
    pub mesh_file: Option<PathBuf>,
    /// Number of uniform refinement levels for the mesh study.
    pub mesh_levels: usize,
    pub f: Expr,
    /// For `sweep-alpha` this is the shape multiplied by each alpha.
    pub b: Expr,
    pub u_a: Expr,
    pub u_b: Expr,
    pub y_d: Expr,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub warmstart: bool,
    pub tol: f64,
    pub state_tol: f64,
    pub max_iter: usize,
}

/// Which built-in experiment the defaults describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Single forward or control solve: tracking of zero with
    /// `b = x^2 + y^2`, lower bound `-3x - 3y + 10`, no upper bound.
    Single,
    /// Non-locality sweep over `alpha in {0, 1, 10, 100, 1000}` with
    /// `b = alpha (x^2 + y^2)`.
    Alpha,
    /// Mesh-independence study: bounds `[-10x-10y+20, +5]` band, three
    /// refinement levels of the coarse grid.
    MeshStudy,
    /// Penalty sweep over `epsilon in {1, ..., 1e-4}` with bound band `+8`.
    EpsSweep,
}

impl ExperimentConfig {
    pub fn preset(which: Preset) -> Self {
        let parse = |s: &str| Expr::parse(s).expect("preset expressions are valid");
        let mut cfg = Self {
            xmin: -0.5,
            xmax: 0.5,
            ymin: -0.5,
            ymax: 0.5,
            mesh_n: 25,
            mesh_file: None,
            mesh_levels: 3,
            f: parse("100"),
            b: parse("x^2 + y^2"),
            u_a: parse("-3*x - 3*y + 10"),
            u_b: parse("inf"),
            y_d: parse("0"),
            lambda1: 0.0,
            lambda2: 4e-5,
            epsilon: 1e-2,
            alphas: vec![0.0, 1.0, 10.0, 100.0, 1000.0],
            epsilons: vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4],
            warmstart: false,
            tol: 1e-6,
            state_tol: 1e-10,
            max_iter: 50,
        };
        match which {
            Preset::Single | Preset::Alpha => {}
            Preset::MeshStudy => {
                cfg.mesh_n = 12;
                cfg.b = parse("100*(x^2 + y^2)");
                cfg.u_a = parse("-10*x - 10*y + 20");
                cfg.u_b = parse("-10*x - 10*y + 25");
            }
            Preset::EpsSweep => {
                cfg.b = parse("100*(x^2 + y^2)");
                cfg.u_a = parse("-10*x - 10*y + 20");
                cfg.u_b = parse("-10*x - 10*y + 28");
            }
        }
        cfg
    }

    /// Applies `key = value` overrides from a config file.
    pub fn apply_file(&mut self, path: &Path) -> std::result::Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number {v:?}"));
        let int = |v: &str| v.parse::<usize>().map_err(|_| format!("bad integer {v:?}"));
        let list = |v: &str| -> std::result::Result<Vec<f64>, String> {
            let items: std::result::Result<Vec<f64>, _> = v
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad list entry {s:?}")))
                .collect();
            let items = items?;
            if items.is_empty() {
                return Err("list must not be empty".into());
            }
            Ok(items)
        };
        match key {
            "xmin" => self.xmin = num(value)?,
            "xmax" => self.xmax = num(value)?,
            "ymin" => self.ymin = num(value)?,
            "ymax" => self.ymax = num(value)?,
            "mesh_n" => self.mesh_n = int(value)?,
            "mesh_file" => self.mesh_file = Some(PathBuf::from(value)),
            "mesh_levels" => self.mesh_levels = int(value)?,
            "f" => self.f = Expr::parse(value)?,
            "b" => self.b = Expr::parse(value)?,
            "u_a" => self.u_a = Expr::parse(value)?,
            "u_b" => self.u_b = Expr::parse(value)?,
            "y_d" => self.y_d = Expr::parse(value)?,
            "lambda1" => self.lambda1 = num(value)?,
            "lambda2" => self.lambda2 = num(value)?,
            "epsilon" => self.epsilon = num(value)?,
            "alphas" => self.alphas = list(value)?,
            "epsilons" => self.epsilons = list(value)?,
            "warmstart" => {
                self.warmstart = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(format!("bad boolean {value:?}")),
                }
            }
            "tol" => self.tol = num(value)?,
            "state_tol" => self.state_tol = num(value)?,
            "max_iter" => self.max_iter = int(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Builds the mesh: imported file if configured, structured grid
    /// otherwise. Validation warnings of imported meshes are returned for
    /// display.
    pub fn build_mesh(&self) -> Result<(Mesh, Vec<String>)> {
        match &self.mesh_file {
            Some(path) => {
                let mesh = Mesh::load(path)?;
                let warnings = mesh.validation_warnings();
                Ok((mesh, warnings))
            }
            None => {
                let mesh = Mesh::generate_rect(self.xmin, self.xmax, self.ymin, self.ymax, self.mesh_n)?;
                Ok((mesh, Vec::new()))
            }
        }
    }

    /// Interpolates all coefficient expressions on a mesh. `alpha` scales
    /// the nonlocality shape `b`. The upper bound may evaluate to `+inf`
    /// (unbounded nodes), so it bypasses the finiteness check of the plain
    /// nodal interpolation.
    pub fn problem_data(&self, mesh: &Mesh, alpha: Option<f64>) -> Result<ProblemData> {
        let scale = alpha.unwrap_or(1.0);
        let u_b = mesh
            .vertices()
            .iter()
            .map(|v| self.u_b.eval(v[0], v[1]))
            .collect::<Vec<f64>>();
        Ok(ProblemData {
            f: fem::interpolate_nodal(mesh, |x, y| self.f.eval(x, y))?,
            b: fem::interpolate_nodal(mesh, |x, y| scale * self.b.eval(x, y))?,
            u_a: fem::interpolate_nodal(mesh, |x, y| self.u_a.eval(x, y))?,
            u_b,
            y_d: fem::interpolate_nodal(mesh, |x, y| self.y_d.eval(x, y))?,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            epsilon: self.epsilon,
        })
    }

    pub fn ssn_config(&self) -> SsnConfig {
        SsnConfig {
            tol: self.tol,
            state_tol: self.state_tol,
            max_iter: self.max_iter,
            ..SsnConfig::default()
        }
    }
}
