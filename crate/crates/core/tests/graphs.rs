use carnot_core::graph::{
    cone_membership, estimate_intrinsic_lipschitz, graph_map, graph_point, graph_quasidistance, lipschitz_over_pairs, project_splitting,
    sigma_phi, split_coords, translate_graph_function, vertical_holder_modulus, Cone, PairSampling,
};
use carnot_core::testfns::builtin_test_functions;
use carnot_core::{DomainBox, Error, GraphFunction, Group, Point, StandardGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn h1() -> Group {
    Group::standard(StandardGroup::Heisenberg(1)).unwrap()
}

#[test]
fn splitting_recomposes() {
    let g = Group::standard(StandardGroup::FreeStep2(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let p = Point::new((0..3).map(|_| rng.gen_range(-2.0..2.0)).collect(), (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let (w, t) = project_splitting(&g, &p);
        assert_eq!(w.x[0], 0.0);
        let back = g.mul(&w, &Point::on_v(t, 3, 3));
        for (a, b) in back.coords().iter().zip(p.coords()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn translated_graph_is_left_translate() {
    let g = h1();
    let phi = GraphFunction::expr("0.5*sin(x2) + 0.2*y", 2, 1, DomainBox::cube(2, -1.0, 1.0)).unwrap();
    let q = Point::new(vec![0.3, -0.2], vec![0.1]);
    let phi_q = translate_graph_function(&g, &phi, &q);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let a = [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)];
        let moved = g.mul(&q, &graph_map(&g, &phi, &a).unwrap());
        let (b, t) = split_coords(&g, &moved);
        assert!((phi_q.value(&b).unwrap() - t).abs() < 1e-12);
    }
}

#[test]
fn lipschitz_of_linear_and_zero() {
    let g = h1();
    let dom = DomainBox::cube(2, -1.0, 1.0);
    let s = PairSampling { max_grid_pairs: 2000, random_pairs: 2000, seed: 0 };
    let zero = GraphFunction::constant(dom.clone(), 0.0);
    assert_eq!(estimate_intrinsic_lipschitz(&g, &zero, &s).unwrap().constant, 0.0);
    // |phi(b) - phi(a)| = |x2' - x2| <= horizontal part of the quasi-distance.
    let lin = GraphFunction::expr("x2", 2, 1, dom.clone()).unwrap();
    let est = estimate_intrinsic_lipschitz(&g, &lin, &s).unwrap();
    assert!((est.constant - 1.0).abs() < 1e-12, "{}", est.constant);
    let single = GraphFunction::expr("x2", 2, 1, dom).unwrap();
    let none = lipschitz_over_pairs(&g, &single, &[(vec![0.1, 0.1], vec![0.1, 0.1])]);
    assert!(matches!(none, Err(Error::DegenerateSample)));
}

#[test]
fn cone_condition_matches_estimate() {
    for b in builtin_test_functions() {
        let g = b.group().unwrap();
        let phi = b.phi().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..60).map(|_| phi.domain().sample(&mut rng)).collect();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = pts
            .iter()
            .enumerate()
            .flat_map(|(i, a)| pts[i + 1..].iter().map(move |b| (a.clone(), b.clone())))
            .collect();
        let c = lipschitz_over_pairs(&g, &phi, &pairs).unwrap().constant;
        // Cones of opening 1/C' with C' > C meet the sampled graph only at the vertex.
        let beta = 1.0 / (1.05 * c.max(1e-3));
        for a in &pts {
            let cone = Cone::new(graph_point(&g, &phi, a), beta).unwrap();
            for other in &pts {
                if other != a {
                    assert!(!cone_membership(&g, &cone, &graph_point(&g, &phi, other)), "{}", b.name);
                }
            }
        }
    }
}

#[test]
fn sigma_matches_hand_formula() {
    let g = h1();
    let phi = GraphFunction::expr("0.3*y + 0.2*x2", 2, 1, DomainBox::cube(2, -1.0, 1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let a = phi.domain().sample(&mut rng);
        let b = phi.domain().sample(&mut rng);
        // In H^1 both horizontal parts are (0, x2), so <B x', x> = 0 and b_12 = 1.
        let phi_b = 0.3 * b[1] + 0.2 * b[0];
        let want = (a[1] - b[1] + phi_b * (a[0] - b[0])).abs().sqrt();
        let got = sigma_phi(&g, &phi, &b, &a).unwrap();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        let d = graph_quasidistance(&g, &phi, &a, &b).unwrap();
        assert!(d >= (a[0] - b[0]).abs() - 1e-15);
    }
    assert!(matches!(graph_quasidistance(&g, &phi, &[3.0, 0.0], &[0.0, 0.0]), Err(Error::OutOfDomain { .. })));
}

#[test]
fn holder_modulus_is_monotone_in_r() {
    let phi = GraphFunction::expr("0.5*sin(3*y) + x2", 2, 1, DomainBox::cube(2, -1.0, 1.0)).unwrap();
    let radii = [0.05, 0.1, 0.2, 0.8];
    let m: Vec<f64> = vertical_holder_modulus(&phi, 1, &radii, &[20, 60]).into_iter().map(|v| v.unwrap()).collect();
    assert!(m.windows(2).all(|w| w[0] <= w[1]));
    let none = vertical_holder_modulus(&phi, 1, &[1e-4], &[20, 60]);
    assert_eq!(none, vec![None]);
}

#[test]
fn builtin_constants_are_small() {
    for b in builtin_test_functions() {
        let g = b.group().unwrap();
        let phi = b.phi().unwrap();
        let s = PairSampling { max_grid_pairs: 2000, random_pairs: 2000, seed: 3 };
        let c = estimate_intrinsic_lipschitz(&g, &phi, &s).unwrap().constant;
        assert!(c < 1.09, "{}: {c}", b.name);
    }
}
