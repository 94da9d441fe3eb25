use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tamevol::grassmann::{
    gauss_map, graph_matrix, operator_norm, plane_distance, pluecker_embed, project, random_orthogonal, tau_max,
    PlaneNeighborhood,
};
use tamevol::{catalog, cover_grassmannian, Plane};

fn random_invertible(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let b = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        if b.determinant().abs() > 0.1 {
            return b;
        }
    }
}

#[test]
fn embedding_ignores_the_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let n = rng.random_range(2..=6);
        let d = rng.random_range(1..n);
        let l = Plane::random(d, n, &mut rng).unwrap();
        let other = Plane::new(&(l.frame() * random_invertible(d, &mut rng))).unwrap();
        let diff = (pluecker_embed(&l).matrix() - pluecker_embed(&other).matrix()).amax();
        assert!(diff <= 1e-10, "d={} n={} diff={}", d, n, diff);
        assert!(plane_distance(&l, &other).unwrap() <= 1e-7);
    }
}

#[test]
fn embedded_planes_are_rank_one_projections() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let n = rng.random_range(2..=6);
        let d = rng.random_range(1..=n);
        let l = Plane::random(d, n, &mut rng).unwrap();
        let m = pluecker_embed(&l);
        let c = m.spectral_check();
        assert!(c.holds(1e-10), "{:?}", c);
        // Independent check: M is symmetric, idempotent, with trace one.
        let mm = m.matrix();
        assert!((mm * mm - mm).amax() < 1e-10);
        assert!((mm.trace() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn distance_is_a_rotation_invariant_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(2..=5);
        let d = rng.random_range(1..n);
        let a = Plane::random(d, n, &mut rng).unwrap();
        let b = Plane::random(d, n, &mut rng).unwrap();
        let c = Plane::random(d, n, &mut rng).unwrap();
        let ab = plane_distance(&a, &b).unwrap();
        assert!((ab - plane_distance(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ab <= plane_distance(&a, &c).unwrap() + plane_distance(&c, &b).unwrap() + 1e-12);
        let g = random_orthogonal(n, &mut rng);
        let gab = plane_distance(&a.transformed(&g).unwrap(), &b.transformed(&g).unwrap()).unwrap();
        assert!((ab - gab).abs() < 1e-10);
    }
    // Orthogonal lines are as far apart as lines get.
    let x = Plane::coordinate(1, 2).unwrap();
    let y = Plane::coordinate_axes(&[1], 2).unwrap();
    assert!((plane_distance(&x, &y).unwrap() - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn graph_matrices_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let d = rng.random_range(1..n);
        let l = Plane::random(d, n, &mut rng).unwrap();
        let a = DMatrix::from_fn(n - d, d, |_, _| rng.random_range(-2.0..2.0));
        let other = l.from_graph_matrix(&a).unwrap();
        let back = graph_matrix(&l, &other).unwrap();
        assert!((back - &a).amax() < 1e-9);
        // Points of the graph plane project onto L with the expected offset.
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let uv = nalgebra::DVector::from_vec(u.clone());
        let x = l.frame() * &uv + l.complement() * (&a * &uv);
        let (pu, pv) = project(&l, x.as_slice()).unwrap();
        for i in 0..d {
            assert!((pu[i] - u[i]).abs() < 1e-10);
        }
        let av = &a * &uv;
        for i in 0..n - d {
            assert!((pv[i] - av[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn tilt_of_a_line_is_its_slope() {
    let l = Plane::coordinate(1, 2).unwrap();
    for angle in [0.1f64, 0.5, 1.0, 1.4] {
        let p = Plane::new(&DMatrix::from_row_slice(2, 1, &[angle.cos(), angle.sin()])).unwrap();
        assert!((operator_norm(&graph_matrix(&l, &p).unwrap()) - angle.tan()).abs() < 1e-10);
    }
    let vertical = Plane::coordinate_axes(&[1], 2).unwrap();
    assert!(graph_matrix(&l, &vertical).is_err());
    let diagonal = Plane::new(&DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap();
    assert!((graph_matrix(&l, &diagonal).unwrap()[(0, 0)] - 1.0).abs() < 1e-12);
    assert!(graph_matrix(&l, &l).unwrap().amax() < 1e-12);
}

#[test]
fn points_of_a_plane_have_no_normal_part() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..1000 {
        let n = rng.random_range(2..=6);
        let d = rng.random_range(1..n);
        let l = Plane::random(d, n, &mut rng).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (u, v) = project(&l, &x).unwrap();
        let norm2 = |w: &[f64]| w.iter().map(|a| a * a).sum::<f64>();
        assert!((norm2(&x) - norm2(&u) - norm2(&v)).abs() <= 1e-12 * (1.0 + norm2(&x)));
        let inside = l.frame() * nalgebra::DVector::from_vec(u);
        let (_, v) = project(&l, inside.as_slice()).unwrap();
        assert!(norm2(&v).sqrt() < 1e-12);
    }
}

#[test]
fn neighborhood_radius_at_the_limit() {
    for d in 1..=4 {
        let t = tau_max(d);
        // (1 + τ²)^{d/2} = 2: the area element of a tilted graph is at most 2.
        assert!(((1.0 + t * t).powf(d as f64 / 2.0) - 2.0).abs() < 1e-12);
    }
    let n = PlaneNeighborhood::new(Plane::coordinate(1, 2).unwrap(), tau_max(1)).unwrap();
    let inside = Plane::new(&DMatrix::from_row_slice(2, 1, &[1.0, 1.7])).unwrap();
    let outside = Plane::new(&DMatrix::from_row_slice(2, 1, &[1.0, 1.8])).unwrap();
    assert!(tamevol::grassmann::in_neighborhood(&n, &inside));
    assert!(!tamevol::grassmann::in_neighborhood(&n, &outside));
}

#[test]
fn line_cover_uses_at_most_three_centers() {
    for seed in 0..5 {
        let c = cover_grassmannian(1, 2, 3f64.sqrt(), seed).unwrap();
        assert!(c.centers.len() <= 3, "seed {}: {}", seed, c.centers.len());
        assert_eq!(c.verified_coverage, 1.0);
        assert!(c.verify_size >= 10_000);
    }
}

#[test]
fn line_cover_in_three_space() {
    let c = cover_grassmannian(1, 3, 3f64.sqrt(), 2).unwrap();
    assert_eq!(c.verified_coverage, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fresh = (0..10_000).filter(|_| c.locate(&Plane::random(1, 3, &mut rng).unwrap()).is_some()).count();
    assert!(fresh as f64 >= 0.999 * 10_000.0, "{}", fresh);
}

#[test]
fn plane_cover_in_four_space() {
    let c = cover_grassmannian(2, 4, 1.0, 0).unwrap();
    assert!(c.verified_coverage >= 0.999, "{}", c.verified_coverage);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let p = Plane::random(2, 4, &mut rng).unwrap();
    let i = c.locate(&p).expect("random plane covered");
    let nb = PlaneNeighborhood::new(c.centers[i].clone(), 1.0).unwrap();
    assert!(nb.tilt(&p).unwrap() <= 1.0);
}

#[test]
fn gauss_map_of_the_sphere_is_the_tangent_plane() {
    let s = catalog::lookup("sphere2").unwrap();
    let upper = &s.cells()[0];
    let p = tamevol::cells::chart(upper).unwrap();
    for t in [[0.5, 0.5], [0.2, 0.7], [0.9, 0.4]] {
        let x = p.point(&t).unwrap();
        let tp = gauss_map(upper, &t).unwrap();
        // The normal at x is x itself.
        let (_, v) = project(&tp, &x).unwrap();
        assert!((v[0].abs() - 1.0).abs() < 1e-9, "{:?}", v);
    }
}
