use carnot_core::area::{area_integral, area_integral_of, subgraph_indicator, unit_normal};
use carnot_core::calculus::{horizontal_gradient, intrinsic_gradient};
use carnot_core::cone::{beta_for_k, check_cone_containment, construct_eta, verify_eta};
use carnot_core::graph::graph_point;
use carnot_core::mollify::{
    horizontal_gradient_mollified, level_set_phi_alpha, mollified_indicator, phi_alpha_gradient, section_point,
    LevelSetExtraction, MollifierKernel,
};
use carnot_core::quadrature::QuadratureGrid;
use carnot_core::{DomainBox, Error, GraphFunction, Group, Point, StandardGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn h1() -> Group {
    Group::standard(StandardGroup::Heisenberg(1)).unwrap()
}

#[test]
fn area_dominates_volume() {
    let g = h1();
    let dom = DomainBox::new(vec![-1.0, 0.0], vec![1.0, 0.5]).unwrap();
    let grid = QuadratureGrid::uniform(dom.clone(), 24);
    let phi = GraphFunction::expr("0.3*sin(2*x2) + 0.1*y", 2, 1, dom.clone()).unwrap();
    assert!(area_integral_of(&g, &phi, &grid).unwrap() > dom.volume());
    assert_eq!(area_integral(&|_| vec![0.0], &grid), dom.volume());
}

#[test]
fn normal_matches_defining_function() {
    // f = x1 - x2^2/2 - 0.1 y1 in coordinates; nu = -grad_G f / |grad_G f|, w = -X_j f / X_1 f.
    let g = h1();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let p = Point::new(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], vec![rng.gen_range(-1.0..1.0)]);
        let df = [1.0, -p.x[1], -0.1];
        let xf = horizontal_gradient(&g, &df, &p);
        let w: Vec<f64> = xf[1..].iter().map(|v| -v / xf[0]).collect();
        let nu = unit_normal(&w);
        let len = xf.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (a, b) in nu.iter().zip(&xf) {
            assert!((a + b / len).abs() < 1e-8);
        }
        assert!(((nu.iter().map(|v| v * v).sum::<f64>()) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn indicator_spec_examples() {
    let g = Group::standard(StandardGroup::FreeStep2(3)).unwrap();
    let phi = GraphFunction::expr("0.2*x2 + 0.1*y2", 3, 3, DomainBox::cube(5, -1.0, 1.0)).unwrap();
    let a = [0.1, 0.2, -0.3, 0.4, 0.0];
    let p = graph_point(&g, &phi, &a);
    assert_eq!(subgraph_indicator(&g, &phi, &g.mul(&p, &Point::on_v(-1.0, 3, 3))).unwrap(), 1);
    assert_eq!(subgraph_indicator(&g, &phi, &g.mul(&p, &Point::on_v(1.0, 3, 3))).unwrap(), 0);
    let far = Point::new(vec![0.0, 5.0, 0.0], vec![0.0; 3]);
    assert!(matches!(subgraph_indicator(&g, &phi, &far), Err(Error::OutOfDomain { .. })));
}

#[test]
fn kernel_is_symmetric_and_normalized() {
    for which in [StandardGroup::Heisenberg(1), StandardGroup::Heisenberg(2), StandardGroup::HType(1)] {
        let g = Group::standard(which).unwrap();
        let k = MollifierKernel::new(&g, 0.3, 16).unwrap();
        assert!((k.discrete_mass - 1.0).abs() < 1e-3, "{which}: {}", k.discrete_mass);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = carnot_core::group::random_point(&mut rng, g.m(), g.n(), 0.2);
            assert_eq!(k.density(&p), k.density(&g.inverse(&p)));
        }
        let outside = Point::new(vec![0.31; g.m()], vec![0.0; g.n()]);
        assert_eq!(k.density(&outside), 0.0);
    }
}

#[test]
fn mollified_section_is_monotone_and_bounded() {
    let g = h1();
    let phi = GraphFunction::expr("0.5*sin(x2) + 0.3*y", 2, 1, DomainBox::cube(2, -1.0, 1.0)).unwrap();
    let k = MollifierKernel::new(&g, 0.1, 12).unwrap();
    for a in [[0.0, 0.0], [0.5, -0.4], [-0.7, 0.8]] {
        let vals: Vec<f64> = (0..80)
            .map(|i| mollified_indicator(&g, &phi, &k, &section_point(&g, &a, -2.0 + 4.0 * i as f64 / 79.0)))
            .collect();
        assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!((vals[0] - 1.0).abs() < 1e-12 && vals[79] == 0.0);
    }
}

#[test]
fn flat_graph_gradient_and_level() {
    let g = h1();
    let phi = GraphFunction::constant(DomainBox::cube(2, -1.0, 1.0), 0.0);
    let k = MollifierKernel::new(&g, 0.1, 16).unwrap();
    let ext = LevelSetExtraction::for_function(&phi, 0.5).unwrap();
    for a in [[0.0, 0.0], [0.3, -0.6]] {
        let t = level_set_phi_alpha(&g, &phi, &k, &ext, &a).unwrap();
        assert!(t.abs() <= 2.0 * ext.tol);
        let xf = horizontal_gradient_mollified(&g, &phi, &k, &section_point(&g, &a, t));
        assert!(xf[0] < 0.0);
        assert!(xf[1].abs() < 1e-9);
    }
}

#[test]
fn gradient_ratio_tracks_w() {
    let g = h1();
    let phi = GraphFunction::expr("x2", 2, 1, DomainBox::cube(2, 0.0, 1.0)).unwrap();
    let k = MollifierKernel::new(&g, 0.05, 16).unwrap();
    let ext = LevelSetExtraction::for_function(&phi, 0.5).unwrap();
    for a in [[0.2, 0.3], [0.7, 0.9], [0.5, 0.1]] {
        let t = level_set_phi_alpha(&g, &phi, &k, &ext, &a).unwrap();
        let grad = phi_alpha_gradient(&g, &phi, &k, &a, t).unwrap();
        let w = intrinsic_gradient(&g, &phi, &a, None).unwrap();
        assert!((grad[0] - w[0]).abs() < 0.05, "{grad:?}");
    }
}

#[test]
fn bracket_failure_when_bound_is_too_small() {
    let g = h1();
    let phi = GraphFunction::constant(DomainBox::cube(2, -1.0, 1.0), 5.0);
    let k = MollifierKernel::new(&g, 0.1, 8).unwrap();
    let ext = LevelSetExtraction::new(0.5, 0.0).unwrap();
    let r = level_set_phi_alpha(&g, &phi, &k, &ext, &[0.0, 0.0]);
    assert!(matches!(r, Err(Error::BracketFailure { .. })));
}

#[test]
fn beta_is_monotone_and_satisfies_constraints() {
    let mut last = 0.0;
    for i in 1..=100 {
        let k = i as f64 / 100.0;
        for (eps, b) in [(1.0, 1.0), (0.5, 2.0), (0.8, 0.3)] {
            let p = beta_for_k(k, eps, b).unwrap();
            let beta = p.beta;
            assert!(beta * (beta / (eps * eps) - b / 2.0) <= 3.0 * b * p.h / 8.0 + 1e-12);
            if k < 1.0 {
                assert!(beta * beta <= k * k / (2.0 - 2.0 * k * k) + 1e-12);
            }
        }
        let b = beta_for_k(k, 1.0, 1.0).unwrap().beta;
        assert!(b >= last);
        last = b;
    }
}

#[test]
fn general_eta_in_higher_groups() {
    for which in [StandardGroup::FreeStep2(3), StandardGroup::HType(3), StandardGroup::Heisenberg(2)] {
        let g = Group::standard(which).unwrap();
        let m = g.m();
        let mut nu = vec![0.0; m];
        nu[0] = 1.0;
        let beta = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut built = 0;
        for _ in 0..300 {
            let mut x: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.3..0.3)).collect();
            x[0] = -rng.gen_range(0.5..1.0);
            let y: Vec<f64> = (0..g.n()).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let p = Point::new(x, y);
            match construct_eta(&g, &p, &nu, 1.0, beta) {
                Ok(etas) => {
                    assert!(verify_eta(&g, &p, &nu, 1.0, &etas));
                    built += 1;
                }
                Err(Error::PointOutsideCone { .. }) | Err(Error::NoAdmissibleEta) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert!(built > 100, "{which}: {built}");
    }
}

#[test]
fn containment_sweep_has_power() {
    let g = h1();
    let dom = DomainBox::cube(2, -1.0, 1.0);
    let zero = GraphFunction::constant(dom.clone(), 0.0);
    for beta in [0.25, 0.5, 1.0] {
        assert_eq!(check_cone_containment(&g, &zero, beta, 2000, 1).unwrap().violations, 0);
    }
    let lin = GraphFunction::expr("x2", 2, 1, dom).unwrap();
    assert_eq!(check_cone_containment(&g, &lin, 0.9, 5000, 1).unwrap().violations, 0);
    let wide = check_cone_containment(&g, &lin, 9.0, 5000, 1).unwrap();
    assert!(wide.violations > 0);
    let again = check_cone_containment(&g, &lin, 9.0, 5000, 1).unwrap();
    assert_eq!(wide, again);
}
