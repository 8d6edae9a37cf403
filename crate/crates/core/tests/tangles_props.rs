use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use tangled_currents::currents::{Current, Moment};
use tangled_currents::model::SingleSiteParams;
use tangled_currents::rng::rng_from_seed;
use tangled_currents::tangles::{
    enumerate_even_partitions, estimate_tangling_measure, is_coarser, pairing_event_fb, EvenPartition, Multigraph, Point, SourceMark, TangledCurrent,
    TanglingMode,
};

/// A path 0–1–2 current with a source mark that makes every block even, and
/// a uniformly chosen even partition on each block.
fn random_tangled(v01: u32, v12: u32, seed: u64) -> TangledCurrent {
    let mut n = Current::zero(3);
    n.set(0, 1, v01);
    n.set(1, 2, v12);
    let deg = n.degrees();
    let b = Moment::from_vec(deg[..3].iter().map(|d| d % 2).collect());
    let marks = vec![SourceMark { moment: b, current: 0 }];
    let mut rng = rng_from_seed(seed);
    let tangling = (0..3)
        .map(|z| {
            let size = tangled_currents::tangles::Block::of(z, std::slice::from_ref(&n), &marks).len();
            let all = enumerate_even_partitions(size, None).unwrap();
            all[rng.random_range(0..all.len())].clone()
        })
        .collect();
    TangledCurrent::new(vec![n], marks, tangling).expect("valid tangled current")
}

fn components(tc: &TangledCurrent) -> usize {
    Multigraph::build(tc).unwrap().count_components()
}

fn fb(tc: &TangledCurrent) -> bool {
    pairing_event_fb(tc, 0, &[true, true, true, true]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarsening_preserves_the_pairing_event(v01 in 1u32..4, v12 in 0u32..4, seed in any::<u64>(), z in 0usize..3) {
        let tc = random_tangled(v01, v12, seed);
        let p = &tc.tangling[z];
        prop_assume!(p.classes.len() >= 2);
        let mut rng = rng_from_seed(seed ^ 1);
        let i = rng.random_range(0..p.classes.len());
        let j = (i + 1 + rng.random_range(0..p.classes.len() - 1)) % p.classes.len();
        let merged = p.merge(i, j);
        prop_assert!(is_coarser(&merged, p).unwrap());
        let mut coarse = tc.clone();
        coarse.tangling[z] = merged;
        let coarse = TangledCurrent::new(coarse.currents, coarse.marks, coarse.tangling).unwrap();
        if fb(&tc) {
            prop_assert!(fb(&coarse));
        }
        prop_assert!(components(&coarse) <= components(&tc));
    }

    #[test]
    fn relabelling_units_of_one_edge_is_invisible(v01 in 1u32..4, v12 in 1u32..4, seed in any::<u64>(), upper in any::<bool>()) {
        let tc = random_tangled(v01, v12, seed);
        let (x, y, v) = if upper { (1, 2, v12) } else { (0, 1, v01) };
        let mut sigma: Vec<u32> = (0..v).collect();
        sigma.shuffle(&mut rng_from_seed(seed ^ 2));
        let mut moved = tc.clone();
        // the same unit permutation at both ends of the edge
        for (z, other) in [(x, y), (y, x)] {
            let blk = tc.block(z);
            let perm: Vec<usize> = blk
                .points
                .iter()
                .map(|p| match *p {
                    Point::Edge { current, y, k } if y == other => blk.index_of(&Point::Edge { current, y, k: sigma[k as usize] }).unwrap(),
                    _ => blk.index_of(p).unwrap(),
                })
                .collect();
            moved.tangling[z] = tc.tangling[z].relabel(&perm);
        }
        let moved = TangledCurrent::new(moved.currents, moved.marks, moved.tangling).unwrap();
        prop_assert_eq!(components(&moved), components(&tc));
        prop_assert_eq!(fb(&moved), fb(&tc));
    }

    #[test]
    fn relabel_keeps_partitions_even(size in 1usize..5, seed in any::<u64>()) {
        let size = 2 * size;
        let all = enumerate_even_partitions(size, None).unwrap();
        let mut rng = rng_from_seed(seed);
        let p = &all[rng.random_range(0..all.len())];
        let mut perm: Vec<usize> = (0..size).collect();
        perm.shuffle(&mut rng);
        let q = p.relabel(&perm);
        prop_assert!(q.is_even());
        prop_assert_eq!(q.classes.len(), p.classes.len());
        let mut inv = vec![0; size];
        for (i, &j) in perm.iter().enumerate() {
            inv[j] = i;
        }
        prop_assert_eq!(&q.relabel(&inv), p);
    }
}

fn all_perms(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_perms(k - 1) {
        for pos in 0..k {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn single_tangling_measure_is_exchangeable() {
    let p = SingleSiteParams::new(1.0, 0.0).unwrap();
    let d = estimate_tangling_measure(&p, 8, 4, 0, false, TanglingMode::Exact, 0, 0).unwrap();
    assert!((d.total() - 1.0).abs() < 1e-12);
    for perm in all_perms(4) {
        for q in &d.support {
            let r = q.relabel(&perm);
            assert!((d.prob(q) - d.prob(&r)).abs() <= 1e-12, "{} vs {}", q.label(), r.label());
        }
    }
}

#[test]
fn double_tangling_measure_is_exchangeable_within_each_side() {
    let p = SingleSiteParams::new(1.0, 0.0).unwrap();
    let d = estimate_tangling_measure(&p, 8, 2, 4, true, TanglingMode::Exact, 0, 0).unwrap();
    assert!((d.total() - 1.0).abs() < 1e-12);
    for ps in all_perms(2) {
        for pt in all_perms(4) {
            let perm: Vec<usize> = ps.iter().copied().chain(pt.iter().map(|&i| i + 2)).collect();
            for q in &d.support {
                assert!(q.is_admissible(2));
                let r = q.relabel(&perm);
                assert!((d.prob(q) - d.prob(&r)).abs() <= 1e-12, "{} vs {}", q.label(), r.label());
            }
        }
    }
}

#[test]
fn whole_partition_is_coarsest() {
    for size in [2usize, 4, 6] {
        let w = EvenPartition::whole(size);
        for p in enumerate_even_partitions(size, None).unwrap() {
            assert!(is_coarser(&w, &p).unwrap());
        }
    }
}
