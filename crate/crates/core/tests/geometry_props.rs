use dangermap::{ray_cast, voxel_traversal, NeighborIndex, Point3, Ray, RigidTransform};
use dangermap::{Segment3, Shape, Vector3};
use proptest::prelude::*;

fn arb_point(scale: f64) -> impl Strategy<Value = Point3> {
    (
        -scale..scale,
        prop::num::f64::NORMAL.prop_map(|_| 0.0),
        -scale..scale,
    )
        .prop_flat_map(move |(x, _, z)| (Just(x), -scale..scale, Just(z)))
        .prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn brute_knn(points: &[Point3], query: &Point3, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - query).norm_squared(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(250))]

    #[test]
    fn knn_matches_brute_force(
        points in prop::collection::vec(arb_point(2.0), 1..120),
        query in arb_point(2.5),
        k in 1usize..25,
    ) {
        let index = NeighborIndex::build(points.clone());
        let got = index.knn(&query, k).unwrap();
        let want = brute_knn(&points, &query, k);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn radius_query_matches_brute_force(
        points in prop::collection::vec(arb_point(2.0), 1..120),
        query in arb_point(2.5),
        radius in 0.0f64..3.0,
    ) {
        let index = NeighborIndex::build(points.clone());
        let got = index.within_radius(&query, radius);
        let want: Vec<usize> = brute_knn(&points, &query, points.len())
            .into_iter()
            .filter(|&i| (points[i] - query).norm() <= radius)
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn traversal_chords_sum_to_segment_length(
        a in arb_point(1.4),
        b in arb_point(1.4),
        size in 0.01f64..0.3,
    ) {
        let seg = Segment3::new(a, b);
        let origin = Point3::new(0.0, 0.0, 0.0);
        let cells = voxel_traversal(&seg, size, &origin);
        let total: f64 = cells.iter().map(|c| c.1).sum();
        prop_assert!((total - seg.length()).abs() < 1e-9);
        prop_assert!(cells.iter().all(|c| c.1 >= 0.0));
        for w in cells.windows(2) {
            let d = (w[0].0.i - w[1].0.i).abs()
                + (w[0].0.j - w[1].0.j).abs()
                + (w[0].0.k - w[1].0.k).abs();
            prop_assert_eq!(d, 1);
        }
    }

    #[test]
    fn transform_composition_is_associative_on_points(
        ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
        t1 in -2.0f64..2.0, t2 in -2.0f64..2.0, t3 in -2.0f64..2.0,
        p in arb_point(2.0),
    ) {
        let a = RigidTransform::rot_x(ax).compose(
            &RigidTransform::from_translation(Vector3::new(t1, 0.0, 0.0)));
        let b = RigidTransform::rot_y(ay).compose(
            &RigidTransform::from_translation(Vector3::new(0.0, t2, 0.0)));
        let c = RigidTransform::rot_z(az).compose(
            &RigidTransform::from_translation(Vector3::new(0.0, 0.0, t3)));
        let left = a.compose(&b).compose(&c).apply(&p);
        let right = a.compose(&b.compose(&c)).apply(&p);
        prop_assert!((left - right).norm() < 1e-9);

        let round = a.compose(&b).inverse().apply(&a.compose(&b).apply(&p));
        prop_assert!((round - p).norm() < 1e-9);
    }

    #[test]
    fn ray_hits_lie_on_shape_surfaces(
        ox in -2.0f64..2.0, oy in -2.0f64..2.0,
        dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in 0.1f64..1.0,
        cx in -0.5f64..0.5, cy in -0.5f64..0.5, cz in 1.0f64..3.0,
        r in 0.1f64..0.8,
        which in 0usize..3,
    ) {
        let ray = Ray::new(Point3::new(ox, oy, -1.0), Vector3::new(dx, dy, dz));
        let shape = match which {
            0 => Shape::Sphere { center: Point3::new(cx, cy, cz), radius: r },
            1 => Shape::Box {
                pose: RigidTransform::rot_y(cx).compose(
                    &RigidTransform::from_translation(Vector3::new(cx, cy, cz))),
                half_extents: Vector3::new(r, r * 0.7, r * 0.4),
            },
            _ => Shape::Cylinder {
                axis: Segment3::new(
                    Point3::new(cx, cy, cz),
                    Point3::new(cx + r, cy - r, cz + r),
                ),
                radius: r * 0.5,
            },
        };
        if let Some(hit) = ray_cast(&ray, std::slice::from_ref(&shape)) {
            prop_assert!(shape.surface_residual(&hit.point) < 1e-9,
                "residual {} for hit {:?}", shape.surface_residual(&hit.point), hit);
        }
    }
}
