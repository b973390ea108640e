//! CSV and legacy ASCII VTK writers.
//!
//! All numeric CSV cells use scientific notation with 7 significant digits
//! and `.` as decimal separator; schemas are fixed so re-runs of identical
//! configurations reproduce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use kirchhoff::mesh::Mesh;
use kirchhoff::ssn::NewtonReport;
use kirchhoff::Result;

pub fn fmt_num(v: f64) -> String {
    format!("{v:.6e}")
}

/// Per-iteration convergence history. Row 0 is the initial iterate and has
/// no damping factor.
pub fn write_history_csv(path: &Path, report: &NewtonReport) -> Result<()> {
    let mut out = String::new();
    out.push_str("iteration,norm_grad_y,norm_grad_u,norm_state,r_total,gamma,lower_active,upper_active\n");
    let rows = std::iter::once(&report.initial).chain(report.records.iter());
    for (k, rec) in rows.enumerate() {
        let gamma = rec.damping.map(fmt_num).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            k,
            fmt_num(rec.norm_grad_y),
            fmt_num(rec.norm_grad_u),
            fmt_num(rec.norm_state),
            fmt_num(rec.r_total),
            gamma,
            rec.lower_active,
            rec.upper_active
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Nodal field as `x,y,value` rows.
pub fn write_field_csv(path: &Path, mesh: &Mesh, values: &[f64]) -> Result<()> {
    let mut out = String::new();
    out.push_str("x,y,value\n");
    for (v, &value) in mesh.vertices().iter().zip(values) {
        let _ = writeln!(out, "{},{},{}", fmt_num(v[0]), fmt_num(v[1]), fmt_num(value));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Nodal field as a legacy ASCII VTK unstructured grid (triangle cells,
/// one scalar per point).
pub fn write_field_vtk(path: &Path, mesh: &Mesh, name: &str, values: &[f64]) -> Result<()> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 2.0\n");
    let _ = writeln!(out, "{name}");
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.n_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} 0", fmt_num(v[0]), fmt_num(v[1]));
    }
    let n_t = mesh.n_triangles();
    let _ = writeln!(out, "CELLS {} {}", n_t, 4 * n_t);
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {n_t}");
    for _ in 0..n_t {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {}", mesh.n_vertices());
    let _ = writeln!(out, "SCALARS {name} double 1");
    out.push_str("LOOKUP_TABLE default\n");
    for &value in values {
        let _ = writeln!(out, "{}", fmt_num(value));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes one nodal field in both formats.
pub fn write_field(dir: &Path, stem: &str, mesh: &Mesh, values: &[f64]) -> Result<()> {
    write_field_vtk(&dir.join(format!("{stem}.vtk")), mesh, stem, values)?;
    write_field_csv(&dir.join(format!("{stem}.csv")), mesh, values)?;
    Ok(())
}

/// Generic summary table with a fixed header.
pub fn write_summary_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{header}");
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_has_seven_significant_digits() {
        assert_eq!(fmt_num(1.0), "1.000000e0");
        assert_eq!(fmt_num(-4.41e-4), "-4.410000e-4");
        assert_eq!(fmt_num(0.1 + 0.2), "3.000000e-1");
    }

    #[test]
    fn vtk_file_structure() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::generate_rect(0.0, 1.0, 0.0, 1.0, 1).unwrap();
        let values = vec![0.0, 1.0, 2.0, 3.0];
        let path = dir.path().join("field.vtk");
        write_field_vtk(&path, &mesh, "state", &values).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 2.0\n"));
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("CELLS 2 8"));
        assert!(text.contains("CELL_TYPES 2"));
        assert!(text.contains("SCALARS state double 1"));
        let cells: Vec<&str> = text.lines().filter(|l| l.starts_with("3 ")).collect();
        assert_eq!(cells.len(), 2);
    }

    #[test]
    fn field_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::generate_rect(0.0, 1.0, 0.0, 1.0, 2).unwrap();
        let values: Vec<f64> = (0..mesh.n_vertices()).map(|i| i as f64 * 0.5).collect();
        let path = dir.path().join("field.csv");
        write_field_csv(&path, &mesh, &values).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,value"));
        for (i, line) in lines.enumerate() {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cols.len(), 3);
            assert_eq!(cols[0], mesh.vertices()[i][0]);
            assert_eq!(cols[1], mesh.vertices()[i][1]);
            assert_eq!(cols[2], values[i]);
        }
    }
}
