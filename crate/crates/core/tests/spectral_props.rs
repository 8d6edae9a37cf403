use proptest::prelude::*;

use tangled_currents::model::SingleSiteParams;
use tangled_currents::spectral::{
    delta_vector, green_function, irb_check, step_characteristic, torus_green_values, torus_kernel, Family, GreenSize, TorusPhi4, TorusSpec,
};

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::NearestNeighbour),
        (0.5f64..3.0, 0.2f64..2.0).prop_map(|(mu, c)| Family::Exponential { mu, c }),
        (1.5f64..3.0, 0.2f64..2.0).prop_map(|(alpha, c)| Family::PowerLaw { alpha, c }),
    ]
}

/// Families whose torus images converge fast enough for a quick sum.
fn short_family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::NearestNeighbour),
        (0.5f64..3.0, 0.2f64..2.0).prop_map(|(mu, c)| Family::Exponential { mu, c }),
        (2.5f64..3.0).prop_map(|alpha| Family::PowerLaw { alpha, c: 0.5 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn torus_green_is_symmetric_and_translation_invariant(
        f in short_family(),
        x in proptest::collection::vec(-8i64..8, 2),
        y in proptest::collection::vec(-8i64..8, 2),
    ) {
        let size = GreenSize::Torus { l: 8 };
        let gxy = green_function(&f, 2, &x, &y, &size, 1e-3).unwrap().value;
        let gyx = green_function(&f, 2, &y, &x, &size, 1e-3).unwrap().value;
        let diff: Vec<i64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let g0 = green_function(&f, 2, &[0, 0], &diff, &size, 1e-3).unwrap().value;
        prop_assert!((gxy - gyx).abs() <= 1e-12 * gxy.abs().max(1.0));
        prop_assert!((gxy - g0).abs() <= 1e-12 * gxy.abs().max(1.0));
    }

    #[test]
    fn step_characteristic_is_a_characteristic_function(f in family(), p in proptest::collection::vec(-3.2f64..3.2, 2)) {
        let v = step_characteristic(&f, 2, &p, 1e-3).unwrap();
        prop_assert!(v.abs() <= 1.0 + 1e-12);
        prop_assert!((step_characteristic(&f, 2, &[0.0, 0.0], 1e-3).unwrap() - 1.0).abs() <= 1e-12);
        let neg: Vec<f64> = p.iter().map(|q| -q).collect();
        prop_assert!((step_characteristic(&f, 2, &neg, 1e-3).unwrap() - v).abs() <= 1e-12);
    }

    #[test]
    fn kernel_tail_bounds_the_excluded_mass(mu in 0.3f64..2.0, alpha in 1.5f64..3.0, power in any::<bool>()) {
        let (f, loose, tight) = if power {
            (Family::PowerLaw { alpha, c: 1.0 }, 1e-2, 1e-3)
        } else {
            (Family::Exponential { mu, c: 1.0 }, 1e-3, 1e-9)
        };
        let spec = TorusSpec::new(2, 8, f).unwrap();
        let loose = torus_kernel(&spec, loose).unwrap();
        let tight = torus_kernel(&spec, tight).unwrap();
        prop_assert!(tight.cutoff >= loose.cutoff);
        prop_assert!(tight.total() - loose.total() <= loose.tail + 1e-12);
    }
}

#[test]
fn nearest_neighbour_torus_green_is_harmonic_off_the_origin() {
    for (d, l) in [(2usize, 4usize), (3, 4), (3, 6)] {
        let mut e1 = vec![0i64; d];
        e1[0] = 1;
        let g = torus_green_values(&Family::NearestNeighbour, d, l, &[vec![0; d], e1], 1e-10, 1).unwrap();
        let want = 1.0 - 1.0 / (l as f64).powi(d as i32);
        assert!((g[0] - g[1] - want).abs() <= 1e-10, "d={d} L={l}: {} vs {want}", g[0] - g[1]);
    }
}

#[test]
fn single_site_bound_uses_the_green_diagonal() {
    let spec = TorusSpec::new(3, 4, Family::NearestNeighbour).unwrap();
    let model = TorusPhi4 {
        spec,
        params: SingleSiteParams::new(1.0, 0.0).unwrap(),
        beta: 0.1,
    };
    let size = GreenSize::Torus { l: 4 };
    let r = irb_check(&model, &delta_vector(3), 2000, 5, &size).unwrap();
    let g00 = green_function(&Family::NearestNeighbour, 3, &[0, 0, 0], &[0, 0, 0], &size, 1e-3)
        .unwrap()
        .value;
    // |J| = 2d for nearest neighbours
    let want = g00 / (2.0 * 0.1 * 6.0);
    assert!((r.rhs.value - want).abs() <= 1e-12 * want, "{} vs {want}", r.rhs.value);
}
