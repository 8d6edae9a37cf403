use proptest::prelude::*;

use tangled_currents::currents::{Current, Moment};
use tangled_currents::gs::magnet::{external_lift_count, leading_lift_count};
use tangled_currents::gs::{ising_correlation_exact, project, sample_current_worm, BlockGraph, CouplingGraph, SourceInjection};
use tangled_currents::model::{InteractionGraph, Phi4Model, SingleSiteParams};
use tangled_currents::rng::rng_from_seed;
use tangled_currents::verifiers::{random_switching_instance, verify_ising_switching, Verdict};

/// ⟨σ_S⟩ by summing over all 2^n spin configurations.
fn brute_correlation(g: &CouplingGraph, spins: &[usize]) -> f64 {
    let (mut z, mut num) = (0.0, 0.0);
    for mask in 0u32..(1 << g.n) {
        let s = |v: usize| if mask >> v & 1 == 1 { -1.0 } else { 1.0 };
        let w = g.edges.iter().map(|&(u, v, k)| k * s(u) * s(v)).sum::<f64>().exp();
        z += w;
        num += w * spins.iter().map(|&v| s(v)).product::<f64>();
    }
    num / z
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn switching_identity_on_micro_graphs(seed in any::<u64>()) {
        let (g, s, t, f) = random_switching_instance(&mut rng_from_seed(seed));
        let r = verify_ising_switching(&g, &s, &t, &f).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Pass, "lhs {} rhs {}", r.lhs.value, r.rhs.value);
    }

    #[test]
    fn exact_ising_correlation_matches_brute_force(
        n in 2usize..7,
        ks in proptest::collection::vec(0.0f64..0.8, 15),
        mask in 0u32..64,
    ) {
        let mut edges = Vec::new();
        let mut i = 0;
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v, ks[i]));
                i += 1;
            }
        }
        let g = CouplingGraph::new(n, edges).unwrap();
        let spins: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        let got = ising_correlation_exact(&g, None, &spins).unwrap();
        let want = brute_correlation(&g, &spins);
        prop_assert!((got - want).abs() <= 1e-12, "got {} want {}", got, want);
    }

    #[test]
    fn projected_worm_currents_carry_the_block_sources(
        ax in proptest::collection::vec(0u32..3, 2),
        j in 0.2f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut ax = ax;
        if (ax[0] + ax[1]) % 2 == 1 {
            ax[1] += 1;
        }
        let a = Moment::from_vec(ax.clone());
        let m = Phi4Model::zero_field(InteractionGraph::from_edges(2, &[(0, 1, j)]), SingleSiteParams::new(1.0, 0.0).unwrap(), 0.5).unwrap();
        let bg = BlockGraph::new(&m, 4).unwrap();
        let g = bg.coupling_graph().unwrap();
        let inj = SourceInjection::new(a.clone(), Moment::zero(2), 4).unwrap();
        let tn = sample_current_worm(&g, &inj.a_tilde(), None, 5, seed).unwrap();
        let (n, counts) = project(&bg, &g, &tn);
        prop_assert_eq!(counts, ax);
        prop_assert_eq!(n.sources(), a.sources());
    }

    #[test]
    fn lift_count_approaches_leading_order(v01 in 0u32..3, v0g in 0u32..3, a0 in 0u32..3) {
        let mut n = Current::zero(2);
        n.set(0, 1, v01 + 1);
        n.set(0, 2, v0g);
        let a = Moment::from_vec(vec![a0, 0]);
        let mut last = f64::INFINITY;
        for big_n in [16usize, 64, 256, 1024] {
            let gap = (external_lift_count(&n, &a, big_n) / leading_lift_count(&n, big_n) - 1.0).abs();
            prop_assert!(gap < last, "N={} gap {} after {}", big_n, gap, last);
            last = gap;
        }
        prop_assert!(last < 0.05);
    }
}
