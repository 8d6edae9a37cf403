use proptest::prelude::*;

use tangled_currents::currents::Moment;
use tangled_currents::oracle::LocalFn;
use tangled_currents::rng::rng_from_seed;
use tangled_currents::verifiers::{
    correlation, decide, random_small_model, verify_fkg, verify_griffiths1, verify_griffiths2, CheckMode, CheckReport, Relation, Side, Verdict,
};

fn relation() -> impl Strategy<Value = Relation> {
    prop_oneof![Just(Relation::Equal), Just(Relation::AtLeast), Just(Relation::AtMost)]
}

fn mode() -> impl Strategy<Value = CheckMode> {
    prop_oneof![Just(CheckMode::Exact), Just(CheckMode::MonteCarlo)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stored_verdict_is_rederivable(
        l in -2.0f64..2.0, ls in 0.0f64..0.5, r in -2.0f64..2.0, rs in 0.0f64..0.5,
        rel in relation(), m in mode(), tol in 0.0f64..0.1,
    ) {
        let rep = CheckReport::new("test", &serde_json::json!({ "l": l, "r": r }), Side::est(l, ls), Side::est(r, rs), rel, m, tol);
        prop_assert_eq!(rep.rederive(), rep.verdict);
        let text = serde_json::to_string(&rep).unwrap();
        let back: CheckReport = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.rederive(), rep.verdict);
        prop_assert_eq!(back.inputs_digest, rep.inputs_digest);
    }

    #[test]
    fn noisy_inequalities_never_pass(gap in 0.0f64..1.0, sigma in 0.0f64..1.0, tol in 0.0f64..0.1) {
        prop_assume!(sigma > 0.2 * gap);
        let v = decide(Side::est(gap, sigma), Side::exact(0.0), Relation::AtLeast, CheckMode::MonteCarlo, tol);
        prop_assert_ne!(v, Verdict::Pass);
    }

    #[test]
    fn exact_equality_uses_the_tolerance(x in -1.0f64..1.0, d in 0.0f64..1.0, tol in 0.0f64..1.0) {
        let v = decide(Side::exact(x), Side::exact(x + d), Relation::Equal, CheckMode::Exact, tol);
        prop_assert_eq!(v == Verdict::Pass, d <= tol);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn griffiths_inequalities_hold(seed in any::<u64>(), ax in proptest::collection::vec(0u32..3, 3), bx in proptest::collection::vec(0u32..3, 3)) {
        let m = random_small_model(&mut rng_from_seed(seed));
        let n = m.len();
        let (a, b) = (Moment::from_vec(ax[..n].to_vec()), Moment::from_vec(bx[..n].to_vec()));
        prop_assert_ne!(verify_griffiths1(&m, &a).unwrap().verdict, Verdict::Fail);
        prop_assert_ne!(verify_griffiths2(&m, &a, &b).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn correlation_is_reproducible(seed in any::<u64>(), ax in proptest::collection::vec(0u32..3, 3)) {
        let m = random_small_model(&mut rng_from_seed(seed));
        let a = Moment::from_vec(ax[..m.len()].to_vec());
        let (v1, e1, s1) = correlation(&m, &a).unwrap();
        let (v2, e2, s2) = correlation(&m, &a).unwrap();
        prop_assert_eq!(v1.to_bits(), v2.to_bits());
        prop_assert_eq!(e1.to_bits(), e2.to_bits());
        prop_assert_eq!(s1, s2);
    }
}

#[test]
fn monte_carlo_reports_are_seed_reproducible() {
    let m = random_small_model(&mut rng_from_seed(3));
    let f = LocalFn::Coordinate { x: 0 };
    let g = LocalFn::Clamp { x: 0, lo: -0.5, hi: 1.0 };
    let run = || serde_json::to_string(&verify_fkg(&m, f.clone(), g.clone(), 4000, 11).unwrap()).unwrap();
    assert_eq!(run(), run());
}
