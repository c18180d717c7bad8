use isomesh::geometry::{build_icosphere, partition_coarse, select_anchors, vertex_normals};
use isomesh::metrics::{add_noise, pm_distance, point_triangle_distance, NoiseSpec};
use isomesh::nn::{mlp_train, Activation, Mlp, PairSet, TrainConfig};
use isomesh::pipeline::fine::fit_polynomial;
use isomesh::pipeline::Normalization;
use isomesh::transport::sinkhorn_plan;
use isomesh::{PointCloud, Vec3};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cloud(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(vec3(2.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn icosphere_counts_and_radius(n in 1usize..=64, radius in 0.1f64..100.0) {
        let m = build_icosphere(n, radius);
        prop_assert_eq!(m.vertex_count(), 10 * n * n + 2);
        prop_assert_eq!(m.patch_count(), 20 * n * n);
        prop_assert_eq!(m.euler_characteristic(), 2);
        for v in m.vertices() {
            prop_assert!((v.norm() - radius).abs() <= 1e-9 * radius);
        }
    }

    #[test]
    fn sphere_normals_point_outward(n in 1usize..=12) {
        let m = build_icosphere(n, 1.0);
        for (v, nrm) in m.vertices().iter().zip(vertex_normals(&m)) {
            prop_assert!(nrm.unwrap().get().dot(v) > 0.0);
        }
    }

    #[test]
    fn coarse_partition_covers_and_decays(n in 3usize..=12, tau in 0.55f64..1.2) {
        let m = build_icosphere(n, 1.0);
        let anchors = select_anchors(&m).unwrap();
        let regions = partition_coarse(&m, &anchors, tau).unwrap();
        prop_assert_eq!(regions.len(), 32);
        let mut best = vec![0.0f64; m.vertex_count()];
        for r in &regions {
            let a = m.vertices()[r.anchor.unwrap()].normalize();
            let mut by_angle: Vec<(f64, f64)> = r.vertex_indices.iter().zip(&r.weights)
                .map(|(&v, &w)| (m.vertices()[v].normalize().dot(&a).clamp(-1.0, 1.0).acos(), w))
                .collect();
            by_angle.sort_by(|x, y| x.0.total_cmp(&y.0));
            for pair in by_angle.windows(2) {
                prop_assert!(pair[1].1 <= pair[0].1 + 1e-12);
            }
            for (&v, &w) in r.vertex_indices.iter().zip(&r.weights) {
                prop_assert!((0.0..=1.0).contains(&w));
                best[v] = best[v].max(w);
            }
        }
        prop_assert!(best.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn point_triangle_never_exceeds_vertex_distance(p in vec3(3.0), a in vec3(1.0), b in vec3(1.0), c in vec3(1.0)) {
        let (d, _) = point_triangle_distance(&p, &[a, b, c]);
        let nearest = [a, b, c].iter().map(|v| (p - v).norm()).fold(f64::INFINITY, f64::min);
        prop_assert!(d <= nearest + 1e-12);
        prop_assert!(d >= 0.0);
    }

    #[test]
    fn pm_distance_is_rigid_invariant(seed in any::<u64>(), t in vec3(5.0), axis in vec3(1.0), angle in 0.0f64..std::f64::consts::TAU) {
        let g = build_icosphere(3, 1.0);
        let r = g.map_vertices(|v| v * 1.1 + Vec3::new(0.05, (seed % 7) as f64 * 0.01, 0.0));
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis + Vector3::new(0.0, 0.0, 1e-3)), angle);
        let move_ = |v: &Vec3| rot * v + t;
        let before = pm_distance(&r, &g).distance;
        let after = pm_distance(&r.map_vertices(move_), &g.map_vertices(move_)).distance;
        prop_assert!(before > 0.0);
        prop_assert!((before - after).abs() < 1e-9);
        prop_assert_eq!(pm_distance(&g, &g).distance, 0.0);
    }

    #[test]
    fn noise_is_bounded_and_counted(points in cloud(1..300), delta in 0.0f64..=100.0, sigma in 0.0f64..2.0, seed in any::<u64>()) {
        let input = PointCloud::new(points).unwrap();
        let spec = NoiseSpec { delta, sigma, seed };
        let out = add_noise(&input, &spec).unwrap();
        let mut moved = 0;
        for (p, q) in input.points().iter().zip(out.points()) {
            prop_assert!((p - q).norm() <= sigma * 3f64.sqrt() + 1e-12);
            prop_assert!((p - q).iter().all(|d| d.abs() <= sigma));
            moved += (p != q) as usize;
        }
        prop_assert!(moved <= spec.affected(input.len()));
        prop_assert_eq!(&out, &add_noise(&input, &spec).unwrap());
    }

    #[test]
    fn sinkhorn_plan_ignores_common_translation(a in cloud(3..12), b in cloud(3..12), t in vec3(10.0)) {
        let p = sinkhorn_plan(&a, &b, 0.05, 5000, 1e-10).unwrap();
        let at: Vec<Vec3> = a.iter().map(|v| v + t).collect();
        let bt: Vec<Vec3> = b.iter().map(|v| v + t).collect();
        let q = sinkhorn_plan(&at, &bt, 0.05, 5000, 1e-10).unwrap();
        for (x, y) in p.plan.iter().zip(&q.plan) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn reported_marginal_error_respects_tolerance(a in cloud(2..20), b in cloud(2..20)) {
        let tol = 1e-7;
        let p = sinkhorn_plan(&a, &b, 0.05, 5000, tol).unwrap();
        if p.converged {
            prop_assert!(p.row_marginal_error <= tol);
            prop_assert!(p.col_marginal_error <= tol);
        }
    }

    #[test]
    fn fit_error_is_max_residual(points in cloud(1..60)) {
        let (surface, err) = fit_polynomial(&points).unwrap();
        let scan = points.iter().map(|p| {
            let d = p - surface.origin;
            let (u, v, w) = (d.dot(&surface.axes[0]), d.dot(&surface.axes[1]), d.dot(&surface.axes[2]));
            (surface.height(u, v) - w).abs()
        }).fold(0.0, f64::max);
        prop_assert!((err - scan).abs() <= 1e-12);
    }

    #[test]
    fn normalization_round_trips(points in cloud(2..50)) {
        let c = PointCloud::new(points).unwrap();
        let norm = Normalization::fit(&c, 1.0, 0.9).unwrap();
        let max = c.points().iter().map(|p| norm.apply(p).norm()).fold(0.0, f64::max);
        prop_assert!((max - 0.9).abs() < 1e-12 || max == 0.0);
        for p in c.points() {
            prop_assert!((norm.invert(&norm.apply(p)) - p).norm() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn zero_learning_rate_freezes_parameters(seed in any::<u64>(), epochs in 1usize..20) {
        let mut mlp = Mlp::<f32>::new(&[3, 8, 8, 3], Activation::Relu, seed);
        let before = mlp.clone();
        let x = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.5, 0.0, 0.9)];
        let y = [Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()];
        let cfg = TrainConfig { epochs, learning_rate: 0.0, ..TrainConfig::default() };
        mlp_train(&mut mlp, &[PairSet { inputs: &x, targets: &y, weight: 1.0 }], &cfg).unwrap();
        prop_assert_eq!(mlp, before);
    }

    #[test]
    fn training_is_bit_reproducible(seed in any::<u64>()) {
        let x = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.5, 0.0, 0.9), Vec3::new(0.4, -0.4, 0.0)];
        let y = [Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), Vec3::new(0.0, 0.2, -0.1)];
        let cfg = TrainConfig { epochs: 15, ..TrainConfig::default() };
        let run = || {
            let mut mlp = Mlp::<f32>::new(&[3, 16, 16, 3], Activation::Relu, seed);
            let report = mlp_train(&mut mlp, &[PairSet { inputs: &x, targets: &y, weight: 1.0 }], &cfg).unwrap();
            (mlp, report.losses)
        };
        prop_assert_eq!(run(), run());
    }
}
