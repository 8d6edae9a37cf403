use proptest::prelude::*;

use tangled_currents::model::{InteractionGraph, Phi4Model, SingleSiteParams};
use tangled_currents::oracle::{correlate_mc, correlate_quadrature, BoundaryField, CorrelationRequest};
use tangled_currents::rng::derive_seed;

fn model(n: usize, w: &[f64], g: f64, a: f64, beta: f64, h: &[f64]) -> Phi4Model {
    let mut graph = InteractionGraph::new(n);
    let mut k = 0;
    for x in 0..n {
        for y in x + 1..n {
            graph.set(x, y, w[k]);
            k += 1;
        }
    }
    Phi4Model::new(graph, SingleSiteParams::new(g, a).unwrap(), beta, h[..n].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn odd_correlations_vanish_without_field(
        n in 1usize..4,
        w in proptest::collection::vec(0.1f64..1.0, 3),
        g in 0.5f64..3.0,
        a in -1.5f64..1.5,
        a_x in proptest::collection::vec(0u32..4, 3),
    ) {
        let mut ax = a_x[..n].to_vec();
        if ax.iter().sum::<u32>() % 2 == 0 {
            ax[0] += 1;
        }
        let m = model(n, &w, g, a, 0.5, &[0.0; 3]);
        let v = correlate_quadrature(&CorrelationRequest::new(m, ax).unwrap(), 1e-10).unwrap();
        prop_assert!(v.abs() <= 1e-10, "value {}", v);
    }

    #[test]
    fn boundary_request_equals_folded_request(
        n in 1usize..4,
        w in proptest::collection::vec(0.1f64..1.0, 3),
        j_ext in proptest::collection::vec(0.0f64..1.0, 6),
        eta in proptest::collection::vec(-1.0f64..1.0, 2),
        a_x in proptest::collection::vec(0u32..3, 3),
    ) {
        let m = model(n, &w, 1.0, 0.0, 0.4, &[0.1; 3]);
        let b = BoundaryField { j_ext: (0..n).map(|x| j_ext[2 * x..2 * x + 2].to_vec()).collect(), eta };
        let req = CorrelationRequest::new(m, a_x[..n].to_vec()).unwrap().with_boundary(b);
        let direct = correlate_quadrature(&req, 1e-10).unwrap();
        let folded = correlate_quadrature(&req.folded(), 1e-10).unwrap();
        prop_assert_eq!(direct, folded);
    }
}

#[test]
fn quadrature_and_chain_agree_across_repetitions() {
    let m = model(2, &[0.7], 1.0, -0.5, 0.5, &[0.2, 0.0]);
    let req = CorrelationRequest::new(m, vec![1, 1]).unwrap();
    let exact = correlate_quadrature(&req, 1e-12).unwrap();
    let mut inside = 0;
    for r in 0..100 {
        let e = correlate_mc(&req, 20_000, derive_seed(77, r)).unwrap();
        if (e.value - exact).abs() <= 3.0 * e.stderr {
            inside += 1;
        }
    }
    assert!(inside >= 99, "{inside}/100 repetitions within 3σ of {exact}");
}

#[test]
fn single_vertex_quadrature_is_a_moment_ratio() {
    // one vertex with field h: ⟨φ²⟩ from direct one-dimensional integration
    let (g, a, h) = (1.5, -0.3, 0.4);
    let m = model(1, &[], g, a, 1.0, &[h]);
    let got = correlate_quadrature(&CorrelationRequest::new(m, vec![2]).unwrap(), 1e-12).unwrap();
    let f = |t: f64, k: i32| t.powi(k) * (-g * t.powi(4) - a * t * t + h * t).exp();
    let (mut num, mut den) = (0.0, 0.0);
    let steps = 200_000;
    let dx = 16.0 / steps as f64;
    for i in 0..=steps {
        let t = -8.0 + i as f64 * dx;
        let wgt = if i == 0 || i == steps { 0.5 } else { 1.0 };
        num += wgt * f(t, 2);
        den += wgt * f(t, 0);
    }
    let want = num / den;
    assert!((got - want).abs() <= 1e-9 * want, "got {got} want {want}");
}
