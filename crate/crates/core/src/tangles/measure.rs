//! Finite-N tangling measures on a single GS block K_N.
//!
//! Exact mode sums over the open-edge structure of the (double) current. With
//! spins σ (and τ for the second current), an edge of K_N is closed with
//! weight 1 and open with weight e^{K(σσ+ττ)} − 1, so the mass of any vertex
//! set with s first-current and t second-current sources, all edges allowed,
//! is G(m,s,t) = G₁(m,s)·G₁(m,t) where
//! G₁(m,s) = Σ_{a,b} C(s,a)(−1)^a C(m−s,b) exp(K((m−2a−2b)²−m)/2).
//! The connected part F follows by peeling off the cluster of a distinguished
//! vertex, and a source partition P has mass
//! Σ_j multinomial · Π_i F(|P_i|+j_i, s_i, t_i) · G(rest, 0, 0).
//! The alternating sums cancel heavily, so everything runs in double-double.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{enumerate_even_partitions, induced_source_partition, EvenPartition};
use crate::dd::DD;
use crate::error::{Error, Result};
use crate::gs::{block_moment, CouplingGraph, Worm};
use crate::model::{gs_couplings, SingleSiteParams};
use crate::rng::derive_seed;

/// Largest block for which the double-double expansion keeps ≥ 12 digits.
pub const MAX_EXACT_TANGLING_N: usize = 32;
pub const MAX_SOURCES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TanglingMode {
    Exact,
    Worm,
}

/// Tables of G and F on K_N for up to (s_max, t_max) sources.
#[derive(Debug, Clone)]
pub struct ClusterExpansion {
    pub n: usize,
    pub k: f64,
    pub double: bool,
    s_max: usize,
    t_max: usize,
    binom: Vec<Vec<DD>>,
    g: Vec<DD>,
    f: Vec<DD>,
}

impl ClusterExpansion {
    /// `double`: two currents (second with t_max sources); otherwise a single
    /// current and t_max must be 0.
    pub fn new(n: usize, k: f64, s_max: usize, t_max: usize, double: bool) -> Result<Self> {
        if n > MAX_EXACT_TANGLING_N {
            return Err(Error::Capacity(format!("exact tangling needs N ≤ {MAX_EXACT_TANGLING_N}, got {n}")));
        }
        if !double && t_max > 0 {
            return Err(Error::Contract("a single current carries no second source set".into()));
        }
        let mut binom = vec![vec![DD::ZERO; n + 1]; n + 1];
        for i in 0..=n {
            binom[i][0] = DD::ONE;
            for j in 1..=i {
                binom[i][j] = binom[i - 1][j - 1] + if j < i { binom[i - 1][j] } else { DD::ZERO };
            }
        }
        let kd = DD::new(k);
        let mut g1 = vec![vec![DD::ZERO; s_max.max(t_max) + 1]; n + 1];
        for m in 0..=n {
            for s in 0..=s_max.max(t_max).min(m) {
                let mut tot = DD::ZERO;
                for a in 0..=s {
                    for b in 0..=m - s {
                        let mm = m as i64 - 2 * a as i64 - 2 * b as i64;
                        let e = (kd.mul_f64((mm * mm - m as i64) as f64)).ldexp(-1).exp();
                        let term = binom[s][a] * binom[m - s][b] * e;
                        tot = if a % 2 == 0 { tot + term } else { tot - term };
                    }
                }
                g1[m][s] = tot;
            }
        }
        let mut ce = ClusterExpansion {
            n,
            k,
            double,
            s_max,
            t_max,
            binom,
            g: vec![DD::ZERO; (n + 1) * (s_max + 1) * (t_max + 1)],
            f: vec![DD::ZERO; (n + 1) * (s_max + 1) * (t_max + 1)],
        };
        for m in 0..=n {
            for s in 0..=s_max.min(m) {
                for t in 0..=t_max.min(m - s) {
                    let v = if double { g1[m][s] * g1[m][t] } else { g1[m][s] };
                    let i = ce.idx(m, s, t);
                    ce.g[i] = v;
                }
            }
        }
        for m in 1..=n {
            for s in 0..=s_max.min(m) {
                for t in 0..=t_max.min(m - s) {
                    let v = ce.connected(m, s, t);
                    let i = ce.idx(m, s, t);
                    ce.f[i] = v;
                }
            }
        }
        Ok(ce)
    }

    fn idx(&self, m: usize, s: usize, t: usize) -> usize {
        (m * (self.s_max + 1) + s) * (self.t_max + 1) + t
    }

    fn c(&self, n: usize, k: usize) -> DD {
        if k > n {
            DD::ZERO
        } else {
            self.binom[n][k]
        }
    }

    pub fn g_dd(&self, m: usize, s: usize, t: usize) -> DD {
        if s > self.s_max || t > self.t_max || s + t > m {
            return DD::ZERO;
        }
        self.g[self.idx(m, s, t)]
    }

    pub fn f_dd(&self, m: usize, s: usize, t: usize) -> DD {
        if m == 0 || s > self.s_max || t > self.t_max || s + t > m {
            return DD::ZERO;
        }
        self.f[self.idx(m, s, t)]
    }

    fn connected(&self, m: usize, s: usize, t: usize) -> DD {
        let p = m - s - t;
        let mut acc = DD::ZERO;
        for sc in 0..=s {
            for tc in 0..=t {
                for pc in 0..=p {
                    if (sc, tc, pc) == (s, t, p) {
                        continue;
                    }
                    let mult = if s >= 1 {
                        if sc < 1 {
                            continue;
                        }
                        self.c(s - 1, sc - 1) * self.c(t, tc) * self.c(p, pc)
                    } else if t >= 1 {
                        if tc < 1 || sc > 0 {
                            continue;
                        }
                        self.c(t - 1, tc - 1) * self.c(p, pc)
                    } else {
                        if pc < 1 || sc > 0 || tc > 0 {
                            continue;
                        }
                        self.c(p - 1, pc - 1)
                    };
                    let size = sc + tc + pc;
                    acc = acc + mult * self.f_dd(size, sc, tc) * self.g_dd(m - size, s - sc, t - tc);
                }
            }
        }
        self.g_dd(m, s, t) - acc
    }

    /// Unnormalised mass of the source partition whose classes carry
    /// (s_i, t_i) sources, with N − S − T plain vertices to distribute.
    pub fn partition_mass(&self, classes: &[(usize, usize)]) -> DD {
        let st: usize = classes.iter().map(|c| c.0 + c.1).sum();
        if st > self.n {
            return DD::ZERO;
        }
        let p = self.n - st;
        // conv[j]: mass of the source clusters after absorbing j plain vertices
        let mut conv = vec![DD::ZERO; p + 1];
        conv[0] = DD::ONE;
        for &(s, t) in classes {
            let mut next = vec![DD::ZERO; p + 1];
            for (j0, &c0) in conv.iter().enumerate() {
                if c0.is_zero() {
                    continue;
                }
                for j in 0..=p - j0 {
                    let f = self.f_dd(s + t + j, s, t);
                    if f.is_zero() {
                        continue;
                    }
                    // choose which j of the remaining p−j0 plain vertices join
                    next[j0 + j] = next[j0 + j] + c0 * self.c(p - j0, j) * f;
                }
            }
            conv = next;
        }
        let mut tot = DD::ZERO;
        for (j, &c) in conv.iter().enumerate() {
            tot = tot + c * self.g_dd(p - j, 0, 0);
        }
        tot
    }

    pub fn total_mass(&self, s: usize, t: usize) -> DD {
        self.g_dd(self.n, s, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub sampler: String,
    pub n_samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDistribution {
    pub support: Vec<EvenPartition>,
    pub probabilities: Vec<f64>,
    pub stderr: Vec<f64>,
    pub provenance: Provenance,
    /// (c_N N)^{S+T}·μ⁰[σ₁⋯σ_S]·μ⁰[σ₁⋯σ_T]
    pub total_weight: f64,
    /// |Σ_P mass − total mass| / total mass in exact mode
    pub consistency: f64,
}

impl PartitionDistribution {
    pub fn prob(&self, p: &EvenPartition) -> f64 {
        self.support.iter().position(|q| q == p).map(|i| self.probabilities[i]).unwrap_or(0.0)
    }

    pub fn err(&self, p: &EvenPartition) -> f64 {
        self.support.iter().position(|q| q == p).map(|i| self.stderr[i]).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Probability of a set of partitions and its standard error (errors of
    /// distinct cells are combined in quadrature).
    pub fn mass_of(&self, set: &[EvenPartition]) -> (f64, f64) {
        let mut p = 0.0;
        let mut v = 0.0;
        for q in set {
            p += self.prob(q);
            v += self.err(q).powi(2);
        }
        (p, v.sqrt())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::to_value(self)?)?)
    }
}

fn class_types(p: &EvenPartition, s: usize) -> Vec<(usize, usize)> {
    p.classes
        .iter()
        .map(|c| {
            let sc = c.iter().filter(|&&i| i < s).count();
            (sc, c.len() - sc)
        })
        .collect()
}

fn check_sizes(n: usize, s: usize, t: usize) -> Result<()> {
    if s % 2 == 1 || t % 2 == 1 {
        return Err(Error::Domain(format!("S={s}, T={t} must be even")));
    }
    if n < s + t {
        return Err(Error::param("N", format!("N={n} is smaller than S+T={}", s + t)));
    }
    if s + t > MAX_SOURCES {
        return Err(Error::Capacity(format!("S+T={} exceeds {MAX_SOURCES}", s + t)));
    }
    Ok(())
}

/// ρ^{S̃,T̃}: law of the source partition induced by n₁ + n₂ with ∂n₁ = S̃,
/// ∂n₂ = T̃ on K_N (labels 0..S are S̃, S..S+T are T̃). With `double = false`
/// it is ρ^{S̃} of a single current and T must be 0.
pub fn estimate_tangling_measure(
    params: &SingleSiteParams,
    n: usize,
    s: usize,
    t: usize,
    double: bool,
    mode: TanglingMode,
    n_samples: u64,
    seed: u64,
) -> Result<PartitionDistribution> {
    check_sizes(n, s, t)?;
    if !double && t > 0 {
        return Err(Error::Contract("single-current measure takes T = 0".into()));
    }
    let gs = gs_couplings(params, n)?;
    if gs.d_n < 0.0 {
        return Err(Error::param("N", "internal coupling is negative"));
    }
    let support = enumerate_even_partitions(s + t, Some(s))?;
    let total_weight = block_moment(params, n, s)? * block_moment(params, n, t)?;
    match mode {
        TanglingMode::Exact => {
            let ce = ClusterExpansion::new(n, gs.d_n, s, t, double)?;
            let masses: Vec<DD> = support.iter().map(|p| ce.partition_mass(&class_types(p, s))).collect();
            let tot = ce.total_mass(s, t);
            let sum = masses.iter().fold(DD::ZERO, |a, &b| a + b);
            let consistency = ((sum - tot) / tot).to_f64().abs();
            Ok(PartitionDistribution {
                probabilities: masses.iter().map(|&m| (m / tot).to_f64()).collect(),
                stderr: vec![0.0; support.len()],
                support,
                provenance: Provenance {
                    n,
                    s,
                    t,
                    sampler: if double { "exact-double" } else { "exact-single" }.into(),
                    n_samples: 0,
                    seed,
                },
                total_weight,
                consistency,
            })
        }
        TanglingMode::Worm => {
            let g = CouplingGraph::complete(n, gs.d_n)?;
            let s_pts: Vec<usize> = (0..s).collect();
            let t_pts: Vec<usize> = (s..s + t).collect();
            let labels: Vec<usize> = (0..s + t).collect();
            let mut w1 = Worm::new(&g, &s_pts, None, derive_seed(seed, 1))?;
            let mut w2 = if double {
                Some(Worm::new(&g, &t_pts, None, derive_seed(seed, 2))?)
            } else {
                None
            };
            let thin = 4;
            for _ in 0..20 * n * n {
                w1.step();
                if let Some(w) = w2.as_mut() {
                    w.step();
                }
            }
            let nb = 32u64;
            let per = (n_samples / nb).max(1);
            let index: BTreeMap<EvenPartition, usize> = support.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
            let mut batches = vec![vec![0u64; support.len()]; nb as usize];
            for b in 0..nb as usize {
                for _ in 0..per {
                    let c1 = w1.next_rest(thin).clone();
                    let p = match w2.as_mut() {
                        Some(w) => {
                            let c2 = w.next_rest(thin);
                            induced_source_partition(&g, &[&c1, c2], &labels)?
                        }
                        None => induced_source_partition(&g, &[&c1], &labels)?,
                    };
                    let i = *index
                        .get(&p)
                        .ok_or_else(|| Error::Contract(format!("sampled inadmissible partition {}", p.label())))?;
                    batches[b][i] += 1;
                }
            }
            let total = (per * nb) as f64;
            let mut probabilities = Vec::new();
            let mut stderr = Vec::new();
            for i in 0..support.len() {
                let xs: Vec<f64> = batches.iter().map(|b| b[i] as f64 / per as f64).collect();
                let mean = batches.iter().map(|b| b[i]).sum::<u64>() as f64 / total;
                let m = xs.iter().sum::<f64>() / nb as f64;
                let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nb - 1) as f64;
                probabilities.push(mean);
                // a zero count still carries a one-observation floor
                stderr.push((var / nb as f64).sqrt().max(1.0 / total));
            }
            Ok(PartitionDistribution {
                support,
                probabilities,
                stderr,
                provenance: Provenance {
                    n,
                    s,
                    t,
                    sampler: if double { "worm-double" } else { "worm-single" }.into(),
                    n_samples: per * nb,
                    seed,
                },
                total_weight,
                consistency: 0.0,
            })
        }
    }
}

/// ρ^{S̃} ⊔ ρ^{T̃}: independent partitions of S̃ and T̃ (T̃ relabelled to
/// S..S+T), joined as a partition of S̃ ⊔ T̃.
pub fn disjoint_union(a: &PartitionDistribution, b: &PartitionDistribution) -> Result<PartitionDistribution> {
    let s = a.provenance.s;
    let t = b.provenance.s;
    let support = enumerate_even_partitions(s + t, Some(s))?;
    let mut probabilities = vec![0.0; support.len()];
    let mut var = vec![0.0; support.len()];
    for (pa, (&qa, &ea)) in a.support.iter().zip(a.probabilities.iter().zip(&a.stderr)) {
        for (pb, (&qb, &eb)) in b.support.iter().zip(b.probabilities.iter().zip(&b.stderr)) {
            let mut cl = pa.classes.clone();
            cl.extend(pb.classes.iter().map(|c| c.iter().map(|&i| i + s).collect()));
            let p = EvenPartition::new(s + t, cl)?;
            let i = support
                .iter()
                .position(|q| *q == p)
                .ok_or_else(|| Error::Contract("union is not admissible".into()))?;
            probabilities[i] += qa * qb;
            var[i] += (ea * qb).powi(2) + (qa * eb).powi(2);
        }
    }
    Ok(PartitionDistribution {
        support,
        probabilities,
        stderr: var.into_iter().map(f64::sqrt).collect(),
        provenance: Provenance {
            n: a.provenance.n,
            s,
            t,
            sampler: format!("{}⊔{}", a.provenance.sampler, b.provenance.sampler),
            n_samples: a.provenance.n_samples + b.provenance.n_samples,
            seed: a.provenance.seed,
        },
        total_weight: a.total_weight * b.total_weight,
        consistency: a.consistency.max(b.consistency),
    })
}

/// Law of |𝒞_x| for the source x = label 0 under n₁+n₂ with ∂n₁ = S̃,
/// ∂n₂ = ∅ on K_N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSizeLaw {
    pub n: usize,
    pub s: usize,
    /// probabilities[c] = P(|𝒞_x| = c)
    pub probabilities: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

pub fn cluster_size_distribution(params: &SingleSiteParams, n: usize, s: usize) -> Result<ClusterSizeLaw> {
    check_sizes(n, s, 0)?;
    if s == 0 {
        return Err(Error::Domain("the cluster of a source needs S ≥ 2".into()));
    }
    let gs = gs_couplings(params, n)?;
    let ce = ClusterExpansion::new(n, gs.d_n, s, 0, true)?;
    let tot = ce.total_mass(s, 0);
    let mut probs = vec![0.0; n + 1];
    for c in 1..=n {
        let mut m = DD::ZERO;
        for sq in 1..=s.min(c) {
            let j = c - sq;
            if j > n - s {
                continue;
            }
            let term = ce.c(s - 1, sq - 1) * ce.c(n - s, j) * ce.f_dd(c, sq, 0) * ce.g_dd(n - c, s - sq, 0);
            m = m + term;
        }
        probs[c] = (m / tot).to_f64();
    }
    let mean = probs.iter().enumerate().map(|(c, p)| c as f64 * p).sum();
    Ok(ClusterSizeLaw {
        n,
        s,
        probabilities: probs,
        mean,
        stderr: 0.0,
    })
}

/// Worm estimate of E|𝒞_x| for the same measure.
pub fn cluster_size_worm(params: &SingleSiteParams, n: usize, s: usize, n_samples: u64, seed: u64) -> Result<ClusterSizeLaw> {
    check_sizes(n, s, 0)?;
    let gs = gs_couplings(params, n)?;
    let g = CouplingGraph::complete(n, gs.d_n)?;
    let src: Vec<usize> = (0..s).collect();
    let mut w1 = Worm::new(&g, &src, None, derive_seed(seed, 1))?;
    let mut w2 = Worm::new(&g, &[], None, derive_seed(seed, 2))?;
    for _ in 0..20 * n * n {
        w1.step();
        w2.step();
    }
    let mut sizes = Vec::with_capacity(n_samples as usize);
    let mut hist = vec![0u64; n + 1];
    for _ in 0..n_samples {
        let c1 = w1.next_rest(4).clone();
        let c2 = w2.next_rest(4);
        let mut uf = c1.plus(c2).clusters(&g);
        let sz = uf.component_size(0);
        hist[sz] += 1;
        sizes.push(sz as f64);
    }
    let (mean, se) = crate::stats::batch_means(&sizes, 32);
    Ok(ClusterSizeLaw {
        n,
        s,
        probabilities: hist.iter().map(|&h| h as f64 / n_samples as f64).collect(),
        mean,
        stderr: se,
    })
}
