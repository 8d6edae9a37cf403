//! Tangled-current combinatorics: even and admissible partitions, the
//! coarsening order, the multigraph of a tangled current and finite-N
//! tangling measures.

pub mod measure;
pub mod multigraph;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use measure::{
    cluster_size_distribution, cluster_size_worm, disjoint_union, estimate_tangling_measure, ClusterExpansion, ClusterSizeLaw, PartitionDistribution,
    TanglingMode, MAX_EXACT_TANGLING_N,
};
pub use multigraph::{induced_source_partition, pairing_event_fb, Block, Multigraph, Point, SourceMark, TangledCurrent};

pub const MAX_PARTITION_SIZE: usize = 12;

/// Partition of {0..size} stored canonically: classes sorted internally and
/// ordered by their smallest element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvenPartition {
    pub size: usize,
    pub classes: Vec<Vec<usize>>,
}

impl EvenPartition {
    pub fn new(size: usize, mut classes: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; size];
        for c in classes.iter_mut() {
            c.sort_unstable();
            for &p in c.iter() {
                if p >= size || seen[p] {
                    return Err(Error::Contract(format!("point {p} is out of range or repeated")));
                }
                seen[p] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Contract("classes do not cover the ground set".into()));
        }
        classes.retain(|c| !c.is_empty());
        classes.sort();
        Ok(EvenPartition { size, classes })
    }

    pub fn whole(size: usize) -> Self {
        EvenPartition {
            size,
            classes: if size == 0 { vec![] } else { vec![(0..size).collect()] },
        }
    }

    pub fn is_even(&self) -> bool {
        self.classes.iter().all(|c| c.len() % 2 == 0)
    }

    /// Every class meets {0..split} and {split..size} in even counts.
    pub fn is_admissible(&self, split: usize) -> bool {
        self.classes
            .iter()
            .all(|c| c.iter().filter(|&&p| p < split).count() % 2 == 0 && c.iter().filter(|&&p| p >= split).count() % 2 == 0)
    }

    /// Class index of each point.
    pub fn class_of(&self) -> Vec<usize> {
        let mut v = vec![0; self.size];
        for (i, c) in self.classes.iter().enumerate() {
            for &p in c {
                v[p] = i;
            }
        }
        v
    }

    /// Merge classes i and j (P^{i,j}).
    pub fn merge(&self, i: usize, j: usize) -> EvenPartition {
        let mut cl: Vec<Vec<usize>> = Vec::new();
        let mut merged = Vec::new();
        for (k, c) in self.classes.iter().enumerate() {
            if k == i || k == j {
                merged.extend_from_slice(c);
            } else {
                cl.push(c.clone());
            }
        }
        cl.push(merged);
        EvenPartition::new(self.size, cl).expect("merge of a valid partition")
    }

    /// Apply a relabelling of points (perm[old] = new).
    pub fn relabel(&self, perm: &[usize]) -> EvenPartition {
        let cl = self.classes.iter().map(|c| c.iter().map(|&p| perm[p]).collect()).collect();
        EvenPartition::new(self.size, cl).expect("permutation of a valid partition")
    }

    /// Compact display such as {0,1|2,3}.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .classes
            .iter()
            .map(|c| c.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        format!("{{{}}}", parts.join("|"))
    }
}

/// All even partitions of {0..size} in canonical order, optionally filtered by
/// admissibility with respect to the split {0..s} ⊔ {s..size}.
pub fn enumerate_even_partitions(size: usize, split: Option<usize>) -> Result<Vec<EvenPartition>> {
    if size % 2 == 1 {
        return Err(Error::Domain(format!("even partitions of an odd set (size {size})")));
    }
    if size > MAX_PARTITION_SIZE {
        return Err(Error::Capacity(format!("size {size} exceeds {MAX_PARTITION_SIZE}")));
    }
    let mut out = Vec::new();
    let mut classes = Vec::new();
    let used = vec![false; size];
    rec(size, used, &mut classes, &mut out);
    if let Some(s) = split {
        if s > size {
            return Err(Error::Contract(format!("split {s} beyond size {size}")));
        }
        out.retain(|p| p.is_admissible(s));
    }
    out.sort();
    Ok(out)
}

fn rec(size: usize, used: Vec<bool>, classes: &mut Vec<Vec<usize>>, out: &mut Vec<EvenPartition>) {
    let first = match (0..size).find(|&i| !used[i]) {
        None => {
            out.push(EvenPartition {
                size,
                classes: classes.clone(),
            });
            return;
        }
        Some(f) => f,
    };
    let rest: Vec<usize> = (first + 1..size).filter(|&i| !used[i]).collect();
    // join `first` with an odd-size subset of the remaining points
    for mask in 0u32..(1 << rest.len()) {
        if mask.count_ones() % 2 == 0 {
            continue;
        }
        let mut class = vec![first];
        let mut u = used.clone();
        u[first] = true;
        for (i, &p) in rest.iter().enumerate() {
            if mask >> i & 1 == 1 {
                class.push(p);
                u[p] = true;
            }
        }
        classes.push(class);
        rec(size, u, classes, out);
        classes.pop();
    }
}

/// P is coarser than Q: every class of P is a union of classes of Q.
pub fn is_coarser(p: &EvenPartition, q: &EvenPartition) -> Result<bool> {
    if p.size != q.size {
        return Err(Error::Contract("partitions of different ground sets".into()));
    }
    let cp = p.class_of();
    Ok(q.classes.iter().all(|c| c.iter().all(|&x| cp[x] == cp[c[0]])))
}

/// All up-sets (upward closed under coarsening) of the given family, each
/// as a sorted list of indices. The empty set and the full family included.
pub fn up_sets(family: &[EvenPartition]) -> Result<Vec<Vec<usize>>> {
    let k = family.len();
    if k > 22 {
        return Err(Error::Capacity(format!("{k} partitions give too many candidate up-sets")));
    }
    // above[i]: bitmask of partitions coarser than family[i]
    let mut above = vec![0u32; k];
    for i in 0..k {
        for j in 0..k {
            if is_coarser(&family[j], &family[i])? {
                above[i] |= 1 << j;
            }
        }
    }
    let mut out = Vec::new();
    for s in 0u32..(1u32 << k) {
        if (0..k).all(|i| s >> i & 1 == 0 || above[i] & !s == 0) {
            out.push((0..k).filter(|&i| s >> i & 1 == 1).collect());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: restricted growth strings, filtered.
    fn brute_even_count(n: usize) -> usize {
        fn go(i: usize, n: usize, rgs: &mut Vec<usize>, mx: usize, count: &mut usize) {
            if i == n {
                let mut sizes = vec![0; n];
                for &b in rgs.iter() {
                    sizes[b] += 1;
                }
                if sizes.iter().all(|s| s % 2 == 0) {
                    *count += 1;
                }
                return;
            }
            for b in 0..=mx.min(n - 1) {
                rgs.push(b);
                go(i + 1, n, rgs, if b == mx { mx + 1 } else { mx }, count);
                rgs.pop();
            }
        }
        let mut c = 0;
        go(0, n, &mut Vec::new(), 0, &mut c);
        c
    }

    #[test]
    fn counts_match_brute_force() {
        for (n, want) in [(0usize, 1usize), (2, 1), (4, 4), (6, 31), (8, 379)] {
            let got = enumerate_even_partitions(n, None).unwrap().len();
            assert_eq!(got, want);
            assert_eq!(brute_even_count(n), want);
        }
        assert_eq!(enumerate_even_partitions(10, None).unwrap().len(), 6556);
        assert!(matches!(enumerate_even_partitions(3, None), Err(Error::Domain(_))));
    }

    #[test]
    fn admissible_counts() {
        assert_eq!(enumerate_even_partitions(4, Some(2)).unwrap().len(), 2);
        assert_eq!(enumerate_even_partitions(6, Some(4)).unwrap().len(), 11);
        assert_eq!(enumerate_even_partitions(2, Some(2)).unwrap().len(), 1);
    }

    #[test]
    fn coarsening_examples() {
        let ps = enumerate_even_partitions(4, None).unwrap();
        let whole = EvenPartition::whole(4);
        for p in &ps {
            assert!(is_coarser(p, p).unwrap());
            assert!(is_coarser(&whole, p).unwrap());
        }
        let pairings: Vec<_> = ps.iter().filter(|p| p.classes.len() == 2).collect();
        assert_eq!(pairings.len(), 3);
        assert!(!is_coarser(pairings[0], pairings[1]).unwrap());
        assert!(!is_coarser(pairings[1], pairings[0]).unwrap());
    }

    #[test]
    fn up_sets_of_a_chain_and_an_antichain() {
        let ps = enumerate_even_partitions(4, Some(2)).unwrap();
        // {01|23} below the whole class: up-sets ∅, {whole}, both
        assert_eq!(up_sets(&ps).unwrap().len(), 3);
        let all = enumerate_even_partitions(4, None).unwrap();
        // three pairings below the whole class: 1 + 2^3
        assert_eq!(up_sets(&all).unwrap().len(), 9);
    }

    #[test]
    fn canonical_form_is_structural() {
        let a = EvenPartition::new(4, vec![vec![3, 2], vec![1, 0]]).unwrap();
        let b = EvenPartition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.label(), "{0,1|2,3}");
        assert!(EvenPartition::new(3, vec![vec![0, 1]]).is_err());
    }
}
