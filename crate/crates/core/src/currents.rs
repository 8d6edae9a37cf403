//! φ⁴ currents on Λ ∪ {𝔤}: sources, weights, truncated enumeration and the
//! current expansion of ⟨φ_A⟩.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MomentTable, Phi4Model, DEFAULT_IDENTITY_TOL};
use crate::numeric::{ln_factorial, Neumaier};

/// Multiplicity function on Λ plus a ghost bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Moment {
    pub x: Vec<u32>,
    pub ghost: u8,
}

impl Moment {
    pub fn zero(n: usize) -> Self {
        Moment { x: vec![0; n], ghost: 0 }
    }

    pub fn from_vec(x: Vec<u32>) -> Self {
        Moment { x, ghost: 0 }
    }

    /// Σ_i δ_{v_i}
    pub fn deltas(n: usize, vs: &[usize]) -> Self {
        let mut m = Self::zero(n);
        for &v in vs {
            m.x[v] += 1;
        }
        m
    }

    pub fn add(&self, other: &Moment) -> Moment {
        Moment {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a + b).collect(),
            ghost: (self.ghost + other.ghost) % 2,
        }
    }

    pub fn total(&self) -> u32 {
        self.x.iter().sum::<u32>() + self.ghost as u32
    }

    pub fn is_admissible(&self) -> bool {
        self.ghost <= 1 && self.total() % 2 == 0
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// ∂A ∩ Λ
    pub fn sources(&self) -> Vec<usize> {
        (0..self.x.len()).filter(|&i| self.x[i] % 2 == 1).collect()
    }

    pub fn max(&self) -> u32 {
        self.x.iter().copied().max().unwrap_or(0)
    }
}

/// Integer current on unordered pairs of Λ ∪ {𝔤}; the ghost is vertex index `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Current {
    pub n_vertices: usize,
    values: BTreeMap<(usize, usize), u32>,
}

impl Current {
    pub fn zero(n_vertices: usize) -> Self {
        Current {
            n_vertices,
            values: BTreeMap::new(),
        }
    }

    pub fn ghost(&self) -> usize {
        self.n_vertices
    }

    fn key(x: usize, y: usize) -> (usize, usize) {
        (x.min(y), x.max(y))
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.values.get(&Self::key(x, y)).copied().unwrap_or(0)
    }

    pub fn set(&mut self, x: usize, y: usize, v: u32) {
        assert!(x != y, "no self-loops");
        assert!(x <= self.n_vertices && y <= self.n_vertices);
        if v == 0 {
            self.values.remove(&Self::key(x, y));
        } else {
            self.values.insert(Self::key(x, y), v);
        }
    }

    pub fn add_to(&mut self, x: usize, y: usize, v: u32) {
        let c = self.get(x, y);
        self.set(x, y, c + v);
    }

    /// Nonzero entries (x<y, value) in lexicographic order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.values.iter().map(|(&(x, y), &v)| (x, y, v))
    }

    /// Δn(x) for every vertex including the ghost (last entry).
    pub fn degrees(&self) -> Vec<u32> {
        let mut d = vec![0; self.n_vertices + 1];
        for (x, y, v) in self.entries() {
            d[x] += v;
            d[y] += v;
        }
        d
    }

    pub fn degree(&self, x: usize) -> u32 {
        self.entries().filter(|&(a, b, _)| a == x || b == x).map(|e| e.2).sum()
    }

    /// |n|
    pub fn total(&self) -> u32 {
        self.values.values().sum()
    }

    /// ∂n: vertices of Λ with odd degree (the ghost is excluded).
    pub fn sources(&self) -> Vec<usize> {
        let d = self.degrees();
        (0..self.n_vertices).filter(|&x| d[x] % 2 == 1).collect()
    }

    pub fn plus(&self, other: &Current) -> Current {
        let mut out = self.clone();
        for (x, y, v) in other.entries() {
            out.add_to(x, y, v);
        }
        out
    }
}

/// Edges of Λ_𝔤 with their couplings: internal βJ then ghost βh.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpace {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub coupling: Vec<f64>,
}

impl EdgeSpace {
    pub fn of(model: &Phi4Model) -> Self {
        let n = model.len();
        let mut edges = Vec::new();
        let mut coupling = Vec::new();
        for (x, y, j) in model.graph.edges() {
            let k = model.beta * j;
            if k != 0.0 {
                edges.push((x, y));
                coupling.push(k);
            }
        }
        for x in 0..n {
            let k = model.beta * model.h[x];
            if k != 0.0 {
                edges.push((x, n));
                coupling.push(k);
            }
        }
        EdgeSpace {
            n_vertices: n,
            edges,
            coupling,
        }
    }

    /// Number of incident edges per vertex of Λ.
    pub fn max_incidence(&self) -> usize {
        let mut d = vec![0; self.n_vertices + 1];
        for &(x, y) in &self.edges {
            d[x] += 1;
            d[y] += 1;
        }
        d[..self.n_vertices].iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub k_edge: u32,
    /// largest acceptable certified relative truncation error
    pub tol: f64,
}

impl TruncationPolicy {
    pub fn new(k_edge: u32) -> Self {
        TruncationPolicy {
            k_edge,
            tol: DEFAULT_IDENTITY_TOL,
        }
    }
}

/// w_{A,β,h}(n), evaluated in log space.
pub fn weight(n: &Current, a: &Moment, model: &Phi4Model, moments: &MomentTable) -> Result<f64> {
    if n.n_vertices != model.len() || a.x.len() != model.len() {
        return Err(Error::Contract("current/moment/model sizes differ".into()));
    }
    if n.sources() != a.sources() {
        return Err(Error::Contract(format!("∂n = {:?} but ∂A = {:?}", n.sources(), a.sources())));
    }
    let mut logw = Neumaier::new();
    let g = n.ghost();
    for (x, y, v) in n.entries() {
        let k = if y == g {
            model.beta * model.h[x]
        } else {
            model.beta * model.graph.j[x][y]
        };
        if k == 0.0 {
            return Ok(0.0);
        }
        if k < 0.0 && v % 2 == 1 {
            return Err(Error::Contract("negative coupling with odd multiplicity".into()));
        }
        logw.add(v as f64 * k.abs().ln() - ln_factorial(v as u64));
    }
    let d = n.degrees();
    for x in 0..model.len() {
        let order = (d[x] + a.x[x]) as usize;
        debug_assert!(order % 2 == 0, "odd single-site order");
        let u = moments.get(order)?;
        logw.add(u.ln());
    }
    Ok(logw.value().exp())
}

/// Deterministic stream of currents with prescribed sources and n_e ≤ K_edge.
pub struct CurrentStream {
    space: EdgeSpace,
    target: Vec<bool>,
    k: u32,
    vals: Vec<u32>,
    done: bool,
    /// sources cannot be matched by any current
    pub infeasible: bool,
}

impl CurrentStream {
    fn parity_ok(&self) -> bool {
        let n = self.space.n_vertices;
        let mut par = vec![false; n + 1];
        for (i, &(x, y)) in self.space.edges.iter().enumerate() {
            if self.vals[i] % 2 == 1 {
                par[x] ^= true;
                par[y] ^= true;
            }
        }
        (0..n).all(|x| par[x] == self.target[x])
    }

    fn advance(&mut self) -> bool {
        for i in (0..self.vals.len()).rev() {
            if self.vals[i] < self.k {
                self.vals[i] += 1;
                return true;
            }
            self.vals[i] = 0;
        }
        false
    }

    fn current(&self) -> Current {
        let mut c = Current::zero(self.space.n_vertices);
        for (i, &(x, y)) in self.space.edges.iter().enumerate() {
            c.set(x, y, self.vals[i]);
        }
        c
    }
}

impl Iterator for CurrentStream {
    type Item = Current;

    fn next(&mut self) -> Option<Current> {
        while !self.done {
            let ok = self.parity_ok();
            let out = if ok { Some(self.current()) } else { None };
            if !self.advance() {
                self.done = true;
            }
            if out.is_some() {
                return out;
            }
        }
        None
    }
}

/// Feasibility of a source set: every component of the edge support without
/// a ghost link must contain an even number of sources.
fn sources_feasible(space: &EdgeSpace, target: &[bool]) -> bool {
    let n = space.n_vertices;
    let mut uf = crate::union_find::UnionFind::new(n + 1);
    for &(x, y) in &space.edges {
        uf.union(x, y);
    }
    let mut count = vec![0usize; n + 1];
    for x in 0..n {
        if target[x] {
            count[uf.find(x)] += 1;
        }
    }
    let gr = uf.find(n);
    (0..=n).all(|r| r == gr || count[r] % 2 == 0)
}

/// Currents n with ∂n = ∂A and n_e ≤ K_edge, lexicographic in edge order
/// (internal pairs x<y first, then ghost edges).
pub fn enumerate_currents(model: &Phi4Model, source_moment: &Moment, policy: &TruncationPolicy) -> CurrentStream {
    let space = EdgeSpace::of(model);
    let n = model.len();
    let mut target = vec![false; n];
    for s in source_moment.sources() {
        target[s] = true;
    }
    let infeasible = !sources_feasible(&space, &target);
    let m = space.edges.len();
    CurrentStream {
        space,
        target,
        k: policy.k_edge,
        vals: vec![0; m],
        done: infeasible,
        infeasible,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// certified bound on the relative truncation error
    pub tail_bound: f64,
    pub n_terms: u64,
    /// largest single-site order covered by the certification
    pub degree_cap: usize,
    /// the numerator's sources cannot be matched (value is a flagged zero)
    pub infeasible: bool,
}

/// Σ_{k>K} c_k with c_k = x^k/k! (k even) or x^{k−1}/k! (k odd).
fn edge_tail(x: f64, k_edge: u32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut acc = Neumaier::new();
    let mut k = k_edge as u64 + 1;
    loop {
        let lt = if k % 2 == 0 {
            k as f64 * x.ln() - ln_factorial(k)
        } else {
            (k - 1) as f64 * x.ln() - ln_factorial(k)
        };
        let t = lt.exp();
        acc.add(t);
        if k > 2 * (x.ceil() as u64) + k_edge as u64 + 8 && t < 1e-300_f64.max(acc.value() * 1e-18) {
            break;
        }
        k += 1;
        if k > 100_000 {
            break;
        }
    }
    acc.value()
}

/// Single-site order needed to house every truncated current.
pub fn working_order(model: &Phi4Model, a: &Moment, policy: &TruncationPolicy) -> usize {
    let space = EdgeSpace::of(model);
    let d = policy.k_edge as usize * space.max_incidence() + a.max() as usize + 2;
    d + d % 2
}

/// Certified bound τ/(1−τ) on the relative truncation error of the
/// truncated sums, valid for currents with single-site order up to the
/// housed range. Increasing an edge by k multiplies a weight by at most
/// (βJ·R)^k/k! (two endpoints, R = max u[2j+2]/u[2j]); ghost edges have one
/// endpoint, hence βh·√R.
pub fn tail_bound(policy: &TruncationPolicy, model: &Phi4Model, moments: &MomentTable, a: &Moment) -> Result<f64> {
    let space = EdgeSpace::of(model);
    let work = working_order(model, a, policy);
    if !moments.houses(work) {
        return Err(Error::Range(format!(
            "working order {work} exceeds housed moment order {}",
            moments.max_order
        )));
    }
    let r = moments.max_ratio_up_to(work)?;
    let kmax = space.coupling.iter().map(|k| k.abs()).fold(0.0, f64::max);
    let need = 2 * ((std::f64::consts::E * kmax * r).ceil() as u64);
    if (policy.k_edge as u64) < need {
        return Err(Error::Range(format!("K_edge = {} below certifiable threshold {need}", policy.k_edge)));
    }
    let n = space.n_vertices;
    let mut tau = Neumaier::new();
    for (i, &(_, y)) in space.edges.iter().enumerate() {
        let x = if y == n {
            space.coupling[i].abs() * r.sqrt()
        } else {
            space.coupling[i].abs() * r
        };
        tau.add(edge_tail(x, policy.k_edge));
    }
    let t = tau.value();
    if t >= 1.0 {
        return Err(Error::Range("tail mass not summable at this K_edge".into()));
    }
    Ok(t / (1.0 - t))
}

/// Σ_{∂n=∂A, n_e≤K} w_A(n) with ghost edges folded into per-site sums.
fn truncated_sum(model: &Phi4Model, a: &Moment, k_edge: u32, moments: &MomentTable) -> Result<(f64, u64)> {
    let space = EdgeSpace::of(model);
    let n = model.len();
    let ghost = n;
    let kmax = k_edge as usize;
    let lnf: Vec<f64> = (0..=kmax as u64).map(ln_factorial).collect();
    let internal: Vec<(usize, usize, f64)> = space
        .edges
        .iter()
        .zip(&space.coupling)
        .filter(|(e, _)| e.1 != ghost)
        .map(|(e, &k)| (e.0, e.1, k))
        .collect();
    let mut ghost_k = vec![0.0; n];
    for (e, &k) in space.edges.iter().zip(&space.coupling) {
        if e.1 == ghost {
            ghost_k[e.0] = k;
        }
    }
    let mut incid = vec![0usize; n];
    for &(x, y, _) in &internal {
        incid[x] += 1;
        incid[y] += 1;
    }
    let max_int_deg = kmax * incid.iter().copied().max().unwrap_or(0);
    // U_x(Δ) = Σ_{m ≤ K} (βh_x)^m/m! · u[Δ + m + A_x]
    let mut site = vec![vec![0.0; max_int_deg + 1]; n];
    for x in 0..n {
        for (dlt, s) in site[x].iter_mut().enumerate() {
            let mut acc = Neumaier::new();
            let mmax = if ghost_k[x] != 0.0 { kmax } else { 0 };
            for m in 0..=mmax {
                let order = dlt + m + a.x[x] as usize;
                if order % 2 == 1 {
                    continue;
                }
                let u = moments.get(order)?;
                let c = if m == 0 { 1.0 } else { ghost_k[x].powi(m as i32) * (-lnf[m]).exp() };
                acc.add(c * u);
            }
            *s = acc.value();
        }
    }
    // vertex x is closed after the last internal edge touching it
    let mut last = vec![usize::MAX; n];
    for (i, &(x, y, _)) in internal.iter().enumerate() {
        last[x] = i;
        last[y] = i;
    }
    let edge_terms: Vec<Vec<f64>> = internal
        .iter()
        .map(|&(_, _, k)| {
            (0..=kmax)
                .map(|v| if v == 0 { 1.0 } else { k.powi(v as i32) * (-lnf[v]).exp() })
                .collect()
        })
        .collect();
    let mut deg = vec![0usize; n];
    let mut acc = Neumaier::new();
    let mut count = 0u64;
    // vertices without internal edges are closed from the start
    let mut base = 1.0;
    for x in 0..n {
        if last[x] == usize::MAX {
            base *= site[x][0];
        }
    }
    if base != 0.0 {
        dfs(0, base, &internal, &edge_terms, &site, &last, &mut deg, kmax, &mut acc, &mut count);
    }
    Ok((acc.value(), count))
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    i: usize,
    w: f64,
    internal: &[(usize, usize, f64)],
    terms: &[Vec<f64>],
    site: &[Vec<f64>],
    last: &[usize],
    deg: &mut [usize],
    kmax: usize,
    acc: &mut Neumaier,
    count: &mut u64,
) {
    if i == internal.len() {
        acc.add(w);
        *count += 1;
        return;
    }
    let (x, y, _) = internal[i];
    for v in 0..=kmax {
        let mut wi = w * terms[i][v];
        deg[x] += v;
        deg[y] += v;
        if last[x] == i {
            wi *= site[x][deg[x]];
        }
        if last[y] == i {
            wi *= site[y][deg[y]];
        }
        if wi != 0.0 {
            dfs(i + 1, wi, internal, terms, site, last, deg, kmax, acc, count);
        }
        deg[x] -= v;
        deg[y] -= v;
    }
}

/// ⟨φ_A⟩ from the truncated current expansion, with its certified bound.
pub fn current_expansion(model: &Phi4Model, a: &Moment, policy: &TruncationPolicy) -> Result<ExpansionResult> {
    let mut table = MomentTable::build(model.params, working_order(model, a, policy), 1e-12)?;
    table.ensure(working_order(model, a, policy))?;
    current_expansion_with(model, a, policy, &table)
}

pub fn current_expansion_with(model: &Phi4Model, a: &Moment, policy: &TruncationPolicy, moments: &MomentTable) -> Result<ExpansionResult> {
    if a.x.len() != model.len() {
        return Err(Error::Contract("moment must be supported inside the graph".into()));
    }
    let space = EdgeSpace::of(model);
    let mut target = vec![false; model.len()];
    for s in a.sources() {
        target[s] = true;
    }
    let bound = tail_bound(policy, model, moments, a)?;
    if bound > policy.tol {
        return Err(Error::Truncation { bound, tol: policy.tol });
    }
    let (den, _) = truncated_sum(model, &Moment::zero(model.len()), policy.k_edge, moments)?;
    let infeasible = !sources_feasible(&space, &target);
    let (num, count) = if infeasible {
        (0.0, 0)
    } else {
        truncated_sum(model, a, policy.k_edge, moments)?
    };
    Ok(ExpansionResult {
        value: num / den,
        numerator: num,
        denominator: den,
        tail_bound: bound,
        n_terms: count,
        degree_cap: moments.max_order,
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InteractionGraph, SingleSiteParams};

    fn model(n: usize, edges: &[(usize, usize, f64)], beta: f64, h: f64) -> Phi4Model {
        Phi4Model::new(
            InteractionGraph::from_edges(n, edges),
            SingleSiteParams::new(1.0, 0.0).unwrap(),
            beta,
            vec![h; n],
        )
        .unwrap()
    }

    fn table() -> MomentTable {
        MomentTable::build(SingleSiteParams::new(1.0, 0.0).unwrap(), 64, 1e-12).unwrap()
    }

    #[test]
    fn weight_examples() {
        let m = model(2, &[(0, 1, 1.0)], 0.5, 0.0);
        let t = table();
        let u2 = t.get(2).unwrap();
        assert!((weight(&Current::zero(2), &Moment::zero(2), &m, &t).unwrap() - 1.0).abs() < 1e-15);
        let mut c = Current::zero(2);
        c.set(0, 1, 1);
        let w = weight(&c, &Moment::deltas(2, &[0, 1]), &m, &t).unwrap();
        assert!((w - 0.5 * u2 * u2).abs() < 1e-14);
        c.set(0, 1, 2);
        let w = weight(&c, &Moment::zero(2), &m, &t).unwrap();
        assert!((w - 0.125 * u2 * u2).abs() < 1e-14);
        assert!(matches!(weight(&c, &Moment::deltas(2, &[0, 1]), &m, &t), Err(Error::Contract(_))));
    }

    #[test]
    fn enumeration_examples() {
        let m = model(2, &[(0, 1, 1.0)], 1.0, 0.0);
        let v: Vec<_> = enumerate_currents(&m, &Moment::zero(2), &TruncationPolicy::new(2)).collect();
        assert_eq!(v.iter().map(|c| c.get(0, 1)).collect::<Vec<_>>(), vec![0, 2]);
        let v: Vec<_> = enumerate_currents(&m, &Moment::deltas(2, &[0, 1]), &TruncationPolicy::new(3)).collect();
        assert_eq!(v.iter().map(|c| c.get(0, 1)).collect::<Vec<_>>(), vec![1, 3]);
        let tri = model(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 1.0, 0.0);
        let v: Vec<_> = enumerate_currents(&tri, &Moment::zero(3), &TruncationPolicy::new(1)).collect();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].total(), 3);
        let s = enumerate_currents(&model(2, &[], 1.0, 0.0), &Moment::deltas(2, &[0, 1]), &TruncationPolicy::new(3));
        assert!(s.infeasible);
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn expansion_examples() {
        let one = model(1, &[], 1.0, 0.0);
        let r = current_expansion(&one, &Moment::from_vec(vec![2]), &TruncationPolicy::new(30)).unwrap();
        assert!((r.value - table().get(2).unwrap()).abs() < 1e-12);
        let cold = model(2, &[(0, 1, 1.0)], 0.0, 0.0);
        let r = current_expansion(&cold, &Moment::deltas(2, &[0, 1]), &TruncationPolicy::new(30)).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.infeasible);
        let two = model(2, &[(0, 1, 1.0)], 0.5, 0.0);
        let r = current_expansion(&two, &Moment::deltas(2, &[0, 1]), &TruncationPolicy::new(30)).unwrap();
        assert!((r.value - 0.057_605_3).abs() < 1e-6, "{}", r.value);
        assert!(r.tail_bound < 1e-12);
    }

    #[test]
    fn tail_bound_monotone_and_zero_coupling() {
        let two = model(2, &[(0, 1, 1.0)], 0.5, 0.0);
        let mut t = table();
        t.ensure(130).unwrap();
        let a = Moment::zero(2);
        let b20 = tail_bound(&TruncationPolicy::new(20), &two, &t, &a).unwrap();
        let b40 = tail_bound(&TruncationPolicy::new(40), &two, &t, &a).unwrap();
        assert!(b40 < b20);
        let cold = model(2, &[(0, 1, 1.0)], 0.0, 0.0);
        assert_eq!(tail_bound(&TruncationPolicy::new(4), &cold, &t, &a).unwrap(), 0.0);
        assert!(matches!(tail_bound(&TruncationPolicy::new(1), &two, &t, &a), Err(Error::Range(_))));
    }

    #[test]
    fn sum_over_enumeration_matches_folded_evaluator() {
        let m = model(3, &[(0, 1, 0.7), (1, 2, 0.4)], 1.0, 0.3);
        let t = table();
        let a = Moment::deltas(3, &[0, 2]);
        let p = TruncationPolicy::new(6);
        let brute: f64 = enumerate_currents(&m, &a, &p).map(|c| weight(&c, &a, &m, &t).unwrap()).sum();
        let (folded, _) = truncated_sum(&m, &a, 6, &t).unwrap();
        assert!((brute - folded).abs() < 1e-12 * folded);
    }

    #[test]
    fn current_bookkeeping() {
        let mut c = Current::zero(3);
        c.set(0, 1, 2);
        c.set(1, 3, 1);
        assert_eq!(c.degrees(), vec![2, 3, 0, 1]);
        assert_eq!(c.sources(), vec![1]);
        assert_eq!(c.total(), 3);
        assert_eq!(c.degree(1), 3);
        let m = Moment::deltas(3, &[0, 0, 1]).add(&Moment { x: vec![0, 0, 1], ghost: 1 });
        assert_eq!(m.x, vec![2, 1, 1]);
        assert_eq!(m.ghost, 1);
        assert!(!m.is_admissible());
    }
}
