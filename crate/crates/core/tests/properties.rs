//! Property tests for structural invariants.

use kirchhoff::mesh::Mesh;
use kirchhoff::optsys::CutoffFamily;
use kirchhoff::sparse::{norm2, CompositeOperator, SparseBuilder};
use proptest::prelude::*;

fn rect_strategy() -> impl Strategy<Value = (f64, f64, f64, f64, usize)> {
    (
        -5.0f64..5.0,
        0.1f64..10.0,
        -5.0f64..5.0,
        0.1f64..10.0,
        1usize..8,
    )
        .prop_map(|(x0, w, y0, h, n)| (x0, x0 + w, y0, y0 + h, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_meshes_satisfy_invariants((xmin, xmax, ymin, ymax, n) in rect_strategy()) {
        let mesh = Mesh::generate_rect(xmin, xmax, ymin, ymax, n).unwrap();
        prop_assert_eq!(mesh.n_vertices(), (n + 1) * (n + 1));
        prop_assert_eq!(mesh.n_triangles(), 2 * n * n);
        // Euler relation for a simply connected triangulation.
        let euler = mesh.n_vertices() as i64 - mesh.n_edges() as i64 + mesh.n_triangles() as i64;
        prop_assert_eq!(euler, 1);
        for t in 0..mesh.n_triangles() {
            prop_assert!(mesh.triangle_area(t) > 0.0);
        }
        let area = (xmax - xmin) * (ymax - ymin);
        prop_assert!((mesh.total_area() - area).abs() <= 1e-12 * area);
        prop_assert!(mesh.validation_warnings().is_empty());
    }

    #[test]
    fn refinement_preserves_area_boundary_and_counts((xmin, xmax, ymin, ymax, n) in rect_strategy()) {
        let mesh = Mesh::generate_rect(xmin, xmax, ymin, ymax, n).unwrap();
        let fine = mesh.refine_uniform().unwrap();
        prop_assert_eq!(fine.n_triangles(), 4 * mesh.n_triangles());
        prop_assert_eq!(fine.n_vertices(), mesh.n_vertices() + mesh.n_edges());
        prop_assert!((fine.total_area() - mesh.total_area()).abs() <= 1e-12 * mesh.total_area());
        // Parent vertices keep index and boundary status.
        for i in 0..mesh.n_vertices() {
            prop_assert_eq!(mesh.is_boundary_vertex(i), fine.is_boundary_vertex(i));
        }
        let euler = fine.n_vertices() as i64 - fine.n_edges() as i64 + fine.n_triangles() as i64;
        prop_assert_eq!(euler, 1);
    }

    #[test]
    fn mesh_files_round_trip((xmin, xmax, ymin, ymax, n) in rect_strategy()) {
        let mesh = Mesh::generate_rect(xmin, xmax, ymin, ymax, n).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.txt");
        mesh.save(&path).unwrap();
        let loaded = Mesh::load(&path).unwrap();
        prop_assert_eq!(mesh.vertices(), loaded.vertices());
        prop_assert_eq!(mesh.triangles(), loaded.triangles());
        prop_assert_eq!(mesh.boundary_flags(), loaded.boundary_flags());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_apply_matches_densified_form(
        n in 2usize..60,
        seed in any::<u64>(),
    ) {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut builder = SparseBuilder::new(n, n);
        for i in 0..n {
            builder.push(i, i, rng.random_range(0.5..2.0));
            builder.push(i, rng.random_range(0..n), rng.random_range(-1.0..1.0));
        }
        let mut op = CompositeOperator::new(builder.finalize().unwrap());
        let mut diag = SparseBuilder::new(n, n);
        for i in 0..n {
            diag.push(i, i, rng.random_range(-1.0..1.0));
        }
        op.push_scalar_term(rng.random_range(-2.0..2.0), diag.finalize().unwrap());
        for _ in 0..2 {
            let left: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let right: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            op.push_lowrank_term(left, right);
        }
        let dense = op.to_dense();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = op.apply(&v);
        let mut slow = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                slow[i] += dense[(i, j)] * v[j];
            }
        }
        let scale = norm2(&slow).max(1.0);
        for i in 0..n {
            prop_assert!((fast[i] - slow[i]).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn cutoff_bounds_hold_for_random_parameters(
        eps_log in -6.0f64..2.0,
        t_scale in -3.0f64..3.0,
    ) {
        let eps = 10f64.powf(eps_log);
        let chi = CutoffFamily::new(eps).unwrap();
        let t = t_scale * eps;
        let e = chi.eval(t);
        prop_assert!(e.d1 >= 0.0 && e.d1 <= 1.0);
        prop_assert!(e.value >= 0.0);
        if t > eps {
            prop_assert_eq!(e.value, t);
        }
        if t < -eps {
            prop_assert_eq!(e.value, 0.0);
        }
        // monotone: compare against a slightly smaller argument
        let e_prev = chi.eval(t - 0.01 * eps);
        prop_assert!(e.value >= e_prev.value - 1e-12 * eps);
    }
}
