//! Theorem-level checks. Each check returns a `CheckReport` whose verdict is
//! a function of (lhs, rhs, relation, mode, tolerance) only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::currents::{current_expansion, Moment, TruncationPolicy};
use crate::error::{Error, Result};
use rand::Rng as _;

use crate::gs::{block_spin_correlation, ising_switching_check, BlockGraph, CouplingGraph, CurrentFunctional, SourceInjection, Worm};
use crate::model::{fold_boundary, InteractionGraph, Phi4Model, SingleSiteParams, DEFAULT_IDENTITY_TOL, DEFAULT_QUAD_TOL};
use crate::numeric::richardson_zero;
use crate::oracle::{correlate_quadrature, fkg_pair_estimate, CorrelationRequest, LocalFn, MAX_QUADRATURE_VERTICES};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::stats::batch_means;
use crate::tangles::{
    cluster_size_distribution, cluster_size_worm, disjoint_union, enumerate_even_partitions, estimate_tangling_measure, up_sets, EvenPartition,
    PartitionDistribution, TanglingMode, MAX_EXACT_TANGLING_N,
};
use crate::union_find::UnionFind;

/// Exact-mode tolerance for checks whose two sides are both enumerated.
pub const EXACT_TOL: f64 = 1e-10;
pub const SIGMAS: f64 = 3.0;
/// MC inequality checks are inconclusive when σ exceeds this fraction of the gap.
pub const INCONCLUSIVE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// What lhs and rhs must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equal,
    AtLeast,
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Side {
    pub value: f64,
    pub stderr: f64,
}

impl Side {
    pub fn exact(value: f64) -> Self {
        Side { value, stderr: 0.0 }
    }

    pub fn est(value: f64, stderr: f64) -> Self {
        Side { value, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub statement: String,
    pub inputs_digest: String,
    pub lhs: Side,
    pub rhs: Side,
    pub relation: Relation,
    pub mode: CheckMode,
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

pub fn decide(lhs: Side, rhs: Side, relation: Relation, mode: CheckMode, tol: f64) -> Verdict {
    if !lhs.value.is_finite() || !rhs.value.is_finite() {
        return Verdict::Fail;
    }
    let diff = lhs.value - rhs.value;
    match mode {
        CheckMode::Exact => {
            let ok = match relation {
                Relation::Equal => diff.abs() <= tol,
                Relation::AtLeast => diff >= -tol,
                Relation::AtMost => diff <= tol,
            };
            if ok {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        CheckMode::MonteCarlo => {
            let sigma = lhs.stderr.hypot(rhs.stderr);
            let band = SIGMAS * sigma + tol;
            match relation {
                Relation::Equal => {
                    if diff.abs() > band {
                        Verdict::Fail
                    } else if sigma > INCONCLUSIVE_FRACTION * lhs.value.abs().max(rhs.value.abs()) {
                        Verdict::Inconclusive
                    } else {
                        Verdict::Pass
                    }
                }
                Relation::AtLeast | Relation::AtMost => {
                    let gap = if relation == Relation::AtLeast { diff } else { -diff };
                    if gap < -band {
                        Verdict::Fail
                    } else if sigma > INCONCLUSIVE_FRACTION * gap.abs() {
                        Verdict::Inconclusive
                    } else {
                        Verdict::Pass
                    }
                }
            }
        }
    }
}

impl CheckReport {
    pub fn new(statement: &str, inputs: &Value, lhs: Side, rhs: Side, relation: Relation, mode: CheckMode, tolerance: f64) -> Self {
        CheckReport {
            statement: statement.to_string(),
            inputs_digest: digest(inputs),
            lhs,
            rhs,
            relation,
            mode,
            tolerance,
            verdict: decide(lhs, rhs, relation, mode, tolerance),
            details: BTreeMap::new(),
            runtime_s: None,
        }
    }

    pub fn with(mut self, key: &str, v: impl Serialize) -> Self {
        self.details.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
        self
    }

    /// Recompute the verdict from the stored fields.
    pub fn rederive(&self) -> Verdict {
        decide(self.lhs, self.rhs, self.relation, self.mode, self.tolerance)
    }
}

/// SHA-256 of the canonical (sorted-key) JSON text.
pub fn digest(v: &Value) -> String {
    let text = serde_json::to_string(v).unwrap_or_default();
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn model_value(m: &Phi4Model) -> Value {
    json!({
        "g": m.params.g,
        "a": m.params.a,
        "beta": m.beta,
        "h": m.h,
        "n": m.len(),
        "edges": m.graph.edges(),
    })
}

fn moment_value(a: &Moment) -> Value {
    json!({ "x": a.x, "ghost": a.ghost })
}

/// ⟨φ_A⟩ from quadrature on tiny graphs, else the current expansion.
/// Returns (value, certified error, source).
pub fn correlation(model: &Phi4Model, a: &Moment) -> Result<(f64, f64, &'static str)> {
    if a.x.len() != model.len() {
        return Err(Error::Contract("moment and model sizes differ".into()));
    }
    if model.len() <= MAX_QUADRATURE_VERTICES {
        let v = correlate_quadrature(&CorrelationRequest::new(model.clone(), a.x.clone())?, DEFAULT_QUAD_TOL)?;
        return Ok((v, DEFAULT_QUAD_TOL * v.abs().max(1.0), "quadrature"));
    }
    let r = current_expansion(model, a, &TruncationPolicy::new(30))?;
    Ok((r.value, r.tail_bound * r.value.abs(), "current_expansion"))
}

fn submodel(model: &Phi4Model, keep: &[usize]) -> Result<Phi4Model> {
    let h = keep.iter().map(|&x| model.h[x]).collect();
    Phi4Model::new(model.graph.subgraph(keep), model.params, model.beta, h)
}

fn restrict(a: &Moment, keep: &[usize]) -> Result<Moment> {
    let inside: u32 = keep.iter().map(|&x| a.x[x]).sum();
    if inside != a.x.iter().sum::<u32>() {
        return Err(Error::Contract("moment is not supported in the subvolume".into()));
    }
    Ok(Moment {
        x: keep.iter().map(|&x| a.x[x]).collect(),
        ghost: a.ghost,
    })
}

fn region_vertices(model: &Phi4Model, region: Option<&[bool]>) -> Result<Vec<usize>> {
    match region {
        None => Ok((0..model.len()).collect()),
        Some(r) if r.len() == model.len() => Ok((0..model.len()).filter(|&x| r[x]).collect()),
        Some(_) => Err(Error::Contract("region mask must have one entry per vertex".into())),
    }
}

/// How the finite-N pairing probability is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchingMode {
    /// exact magnetisation sums on the GS model at one N
    ExactN { n: usize },
    /// exact values on a grid of N, extrapolated in N^{−1/2}
    Extrapolated { grid: Vec<usize> },
    /// double-current worm on the GS model
    Worm { n: usize, samples: u64 },
}

/// μ[σ_Ã]_Λ·μ[σ_B̃]_{Λ'}/μ[σ_{Ã∪B̃}]_Λ on the GS model at level N.
pub fn switching_ratio_at(model: &Phi4Model, a: &Moment, b: &Moment, keep: &[usize], n: usize) -> Result<f64> {
    let ab = a.add(b);
    let den = block_spin_correlation(model, n, &ab.x)?;
    if den.abs() < 1e-300 {
        return Err(Error::Degenerate("μ[σ_{A+B}] vanishes".into()));
    }
    let na = block_spin_correlation(model, n, &a.x)?;
    let sub = submodel(model, keep)?;
    let nb = block_spin_correlation(&sub, n, &restrict(b, keep)?.x)?;
    Ok(na * nb / den)
}

/// Richardson extrapolation of r(N) in s = N^{−1/2}.
pub fn richardson_sqrt(ns: &[usize], vals: &[f64]) -> Result<(f64, f64)> {
    if ns.len() != vals.len() || ns.len() < 2 {
        return Err(Error::Contract("need at least two grid points".into()));
    }
    let s: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(-0.5)).collect();
    Ok(richardson_zero(&s, vals))
}

/// P^{Ã∪B̃,∅}[ℱ_B̃^{Λ'}] from two independent worms on the GS model: n₁ on
/// Λ with sources Ã∪B̃, n₂ sourceless on Λ'; the event asks every cluster
/// of (n₁|_{Λ'} + n₂) to meet B̃ evenly.
pub fn switching_event_worm(model: &Phi4Model, a: &Moment, b: &Moment, keep: &[usize], n: usize, samples: u64, seed: u64) -> Result<(f64, f64)> {
    let bg = BlockGraph::new(model, n)?;
    let g = bg.coupling_graph()?;
    let inj = SourceInjection::new(a.clone(), b.clone(), n)?;
    let ghost = bg.ghost();
    let mut s1 = inj.a_tilde();
    s1.extend(inj.b_tilde());
    if (a.ghost + b.ghost) % 2 == 1 {
        s1.push(ghost);
    }
    let mut bpts = inj.b_tilde();
    if b.ghost == 1 {
        bpts.push(ghost);
    }
    let sub = submodel(model, keep)?;
    let bg2 = BlockGraph::new(&sub, n)?;
    let g2 = bg2.coupling_graph()?;
    // sub-model spin index → full spin index
    let map: Vec<usize> = (0..g2.n)
        .map(|v| match bg2.block_of(v) {
            Some(x) => bg.spin(keep[x], v - x * n),
            None => ghost,
        })
        .collect();
    let mut inside = vec![false; g.n];
    for &v in &map {
        inside[v] = true;
    }
    if bpts.iter().any(|&v| !inside[v]) {
        return Err(Error::Contract("B must be supported in the subvolume".into()));
    }
    let mut w1 = Worm::new(&g, &s1, Some(ghost), derive_seed(seed, 1))?;
    let mut w2 = Worm::new(&g2, &[], None, derive_seed(seed, 2))?;
    let burn = 20 * g.n;
    w1.next_rest(burn);
    w2.next_rest(burn);
    let mut hits = Vec::with_capacity(samples as usize);
    for _ in 0..samples {
        let c1 = w1.next_rest(4);
        let c2 = w2.next_rest(4);
        let mut uf = UnionFind::new(g.n);
        for (i, &(u, v, _)) in g.edges.iter().enumerate() {
            if c1.values[i] > 0 && inside[u] && inside[v] {
                uf.union(u, v);
            }
        }
        for (i, &(u, v, _)) in g2.edges.iter().enumerate() {
            if c2.values[i] > 0 {
                uf.union(map[u], map[v]);
            }
        }
        let mut parity: BTreeMap<usize, u32> = BTreeMap::new();
        for &p in &bpts {
            *parity.entry(uf.find(p)).or_default() ^= 1;
        }
        hits.push(if parity.values().all(|&x| x == 0) { 1.0 } else { 0.0 });
    }
    Ok(batch_means(&hits, 32))
}

/// ⟨φ_A⟩_Λ⟨φ_B⟩_{Λ'}/⟨φ_{A+B}⟩_Λ against the finite-N pairing probability.
pub fn verify_switching_ratio(
    model: &Phi4Model,
    a: &Moment,
    b: &Moment,
    region: Option<&[bool]>,
    mode: &SwitchingMode,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    if a.x.len() != model.len() || b.x.len() != model.len() {
        return Err(Error::Contract("A and B must be moments on the model's vertices".into()));
    }
    let keep = region_vertices(model, region)?;
    let inputs = json!({
        "check": "switching_ratio",
        "model": model_value(model),
        "a": moment_value(a),
        "b": moment_value(b),
        "region": keep,
        "mode": mode,
        "tol": tol,
        "seed": seed,
    });
    let ab = a.add(b);
    let (den, den_err, src) = correlation(model, &ab)?;
    if den.abs() < 1e-300 {
        return Err(Error::Degenerate("⟨φ_{A+B}⟩ vanishes".into()));
    }
    let (na, na_err, _) = correlation(model, a)?;
    let sub = submodel(model, &keep)?;
    let (nb, nb_err, _) = correlation(&sub, &restrict(b, &keep)?)?;
    let lhs_v = na * nb / den;
    let lhs_err = lhs_v.abs() * (na_err / na.abs().max(1e-300) + nb_err / nb.abs().max(1e-300) + den_err / den.abs());
    let lhs = Side::exact(lhs_v);
    let statement = "switching ratio ⟨φ_A⟩⟨φ_B⟩/⟨φ_{A+B}⟩ = P^{A+B,∅}[F_B]";
    let rep = if b.is_empty() {
        CheckReport::new(
            statement,
            &inputs,
            lhs,
            Side::exact(1.0),
            Relation::Equal,
            CheckMode::Exact,
            tol.max(lhs_err),
        )
    } else {
        match mode {
            SwitchingMode::ExactN { n } => {
                let r = switching_ratio_at(model, a, b, &keep, *n)?;
                CheckReport::new(statement, &inputs, lhs, Side::exact(r), Relation::Equal, CheckMode::Exact, tol + lhs_err).with("n", n)
            }
            SwitchingMode::Extrapolated { grid } => {
                let vals = grid
                    .iter()
                    .map(|&n| switching_ratio_at(model, a, b, &keep, n))
                    .collect::<Result<Vec<_>>>()?;
                let (r, err) = richardson_sqrt(grid, &vals)?;
                CheckReport::new(
                    statement,
                    &inputs,
                    lhs,
                    Side::exact(r),
                    Relation::Equal,
                    CheckMode::Exact,
                    tol + err + lhs_err,
                )
                .with("grid", grid)
                .with("finite_n_values", &vals)
                .with("extrapolation_error", err)
            }
            SwitchingMode::Worm { n, samples } => {
                let (p, se) = switching_event_worm(model, a, b, &keep, *n, *samples, seed)?;
                CheckReport::new(
                    statement,
                    &inputs,
                    lhs,
                    Side::est(p, se),
                    Relation::Equal,
                    CheckMode::MonteCarlo,
                    tol + lhs_err,
                )
                .with("n", n)
                .with("samples", samples)
                .with("finite_n_exact", switching_ratio_at(model, a, b, &keep, *n).ok())
            }
        }
    };
    Ok(rep.with("lhs_source", src).with("lhs_error", lhs_err))
}

fn ensure_nonnegative_field(model: &Phi4Model) -> Result<()> {
    if model.h.iter().any(|&h| h < 0.0) {
        return Err(Error::param("h", "the inequality needs h ≥ 0"));
    }
    Ok(())
}

/// ⟨φ_A⟩ ≥ 0 for h ≥ 0.
pub fn verify_griffiths1(model: &Phi4Model, a: &Moment) -> Result<CheckReport> {
    ensure_nonnegative_field(model)?;
    let (v, err, src) = correlation(model, a)?;
    let inputs = json!({ "check": "griffiths1", "model": model_value(model), "a": moment_value(a) });
    Ok(CheckReport::new(
        "⟨φ_A⟩ ≥ 0",
        &inputs,
        Side::exact(v),
        Side::exact(0.0),
        Relation::AtLeast,
        CheckMode::Exact,
        DEFAULT_IDENTITY_TOL.max(err),
    )
    .with("source", src))
}

/// ⟨φ_Aφ_B⟩ − ⟨φ_A⟩⟨φ_B⟩ ≥ 0 for h ≥ 0.
pub fn verify_griffiths2(model: &Phi4Model, a: &Moment, b: &Moment) -> Result<CheckReport> {
    ensure_nonnegative_field(model)?;
    let (ab, e0, src) = correlation(model, &a.add(b))?;
    let (va, e1, _) = correlation(model, a)?;
    let (vb, e2, _) = correlation(model, b)?;
    let diff = ab - va * vb;
    let err = e0 + e1 * vb.abs() + e2 * va.abs();
    let inputs = json!({ "check": "griffiths2", "model": model_value(model), "a": moment_value(a), "b": moment_value(b) });
    let mut rep = CheckReport::new(
        "⟨φ_Aφ_B⟩ − ⟨φ_A⟩⟨φ_B⟩ ≥ 0",
        &inputs,
        Side::exact(diff),
        Side::exact(0.0),
        Relation::AtLeast,
        CheckMode::Exact,
        DEFAULT_IDENTITY_TOL.max(err),
    )
    .with("source", src);
    // the two engines must agree on the joint moment
    if src == "quadrature" && model.len() <= 3 {
        if let Ok(r) = current_expansion(model, &a.add(b), &TruncationPolicy::new(30)) {
            rep = rep.with("expansion_value", r.value).with("expansion_tail", r.tail_bound);
        }
    }
    Ok(rep)
}

/// ⟨φ_B⟩_Λ ≥ ⟨φ_B⟩_{Λ'} for Λ' ⊂ Λ and h ≥ 0.
pub fn verify_volume_monotonicity(model: &Phi4Model, keep: &[usize], b: &Moment) -> Result<CheckReport> {
    ensure_nonnegative_field(model)?;
    if keep.iter().any(|&x| x >= model.len()) {
        return Err(Error::Contract("subvolume vertex out of range".into()));
    }
    let (big, e1, src) = correlation(model, b)?;
    let sub = submodel(model, keep)?;
    let (small, e2, _) = correlation(&sub, &restrict(b, keep)?)?;
    let inputs = json!({ "check": "volume_monotonicity", "model": model_value(model), "keep": keep, "b": moment_value(b) });
    Ok(CheckReport::new(
        "⟨φ_B⟩_Λ ≥ ⟨φ_B⟩_Λ'",
        &inputs,
        Side::exact(big),
        Side::exact(small),
        Relation::AtLeast,
        CheckMode::Exact,
        DEFAULT_IDENTITY_TOL.max(e1 + e2),
    )
    .with("source", src))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", content = "grid", rename_all = "snake_case")]
pub enum ParamGrid {
    Beta(Vec<f64>),
    G(Vec<f64>),
    A(Vec<f64>),
}

/// ⟨φ_A⟩ nondecreasing in β, nonincreasing in g and in a. The report's lhs
/// is the least oriented consecutive increment.
pub fn verify_parameter_monotonicity(model: &Phi4Model, a: &Moment, grid: &ParamGrid) -> Result<CheckReport> {
    ensure_nonnegative_field(model)?;
    let (pts, sign) = match grid {
        ParamGrid::Beta(v) => (v, 1.0),
        ParamGrid::G(v) => (v, -1.0),
        ParamGrid::A(v) => (v, -1.0),
    };
    if pts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("grid", "must be sorted"));
    }
    let mut vals = Vec::with_capacity(pts.len());
    let mut err = 0.0f64;
    for &p in pts {
        let mut m = model.clone();
        match grid {
            ParamGrid::Beta(_) => m.beta = p,
            ParamGrid::G(_) => m.params = SingleSiteParams::new(p, m.params.a)?,
            ParamGrid::A(_) => m.params = SingleSiteParams::new(m.params.g, p)?,
        }
        let (v, e, _) = correlation(&m, a)?;
        vals.push(v);
        err = err.max(e);
    }
    let worst = vals.windows(2).map(|w| sign * (w[1] - w[0])).fold(f64::INFINITY, f64::min);
    let worst = if worst.is_finite() { worst } else { 0.0 };
    let inputs = json!({ "check": "parameter_monotonicity", "model": model_value(model), "a": moment_value(a), "grid": grid });
    Ok(CheckReport::new(
        "⟨φ_A⟩ monotone in β, g, a",
        &inputs,
        Side::exact(worst),
        Side::exact(0.0),
        Relation::AtLeast,
        CheckMode::Exact,
        DEFAULT_IDENTITY_TOL.max(2.0 * err),
    )
    .with("values", &vals))
}

/// Ginibre: for |η| ≤ η′ on the exterior,
/// ⟨φ_Aφ_B⟩^{η′} − ⟨φ_Aφ_B⟩^{η} ≥ |⟨φ_A⟩^{η′}⟨φ_B⟩^{η} − ⟨φ_A⟩^{η}⟨φ_B⟩^{η′}|.
/// `model` lives on Λ ∪ exterior; A and B are indexed by interior vertices.
pub fn verify_ginibre(model: &Phi4Model, exterior: &[usize], eta: &[f64], eta_prime: &[f64], a: &Moment, b: &Moment) -> Result<CheckReport> {
    if eta.len() != exterior.len() || eta_prime.len() != exterior.len() {
        return Err(Error::Contract("one boundary value per exterior vertex".into()));
    }
    if eta.iter().zip(eta_prime).any(|(e, p)| e.abs() > *p + 1e-15) {
        return Err(Error::Contract("Ginibre needs |η| ≤ η′".into()));
    }
    let fold = |e: &[f64]| -> Result<Phi4Model> {
        let (g, h) = fold_boundary(&model.graph, &model.h, exterior, e);
        Phi4Model::new(g, model.params, model.beta, h)
    };
    let (m0, m1) = (fold(eta)?, fold(eta_prime)?);
    let ab = a.add(b);
    let (ab0, e0, src) = correlation(&m0, &ab)?;
    let (ab1, e1, _) = correlation(&m1, &ab)?;
    let (a0, _, _) = correlation(&m0, a)?;
    let (a1, _, _) = correlation(&m1, a)?;
    let (b0, _, _) = correlation(&m0, b)?;
    let (b1, _, _) = correlation(&m1, b)?;
    let lhs = ab1 - ab0;
    let rhs = (a1 * b0 - a0 * b1).abs();
    let inputs = json!({
        "check": "ginibre",
        "model": model_value(model),
        "exterior": exterior,
        "eta": eta,
        "eta_prime": eta_prime,
        "a": moment_value(a),
        "b": moment_value(b),
    });
    Ok(CheckReport::new(
        "Ginibre inequality",
        &inputs,
        Side::exact(lhs),
        Side::exact(rhs),
        Relation::AtLeast,
        CheckMode::Exact,
        DEFAULT_IDENTITY_TOL.max(4.0 * (e0 + e1)),
    )
    .with("source", src))
}

/// FKG: ⟨fg⟩ − ⟨f⟩⟨g⟩ ≥ 0 for nondecreasing local f, g (Monte Carlo).
pub fn verify_fkg(model: &Phi4Model, f: LocalFn, g: LocalFn, sweeps: usize, seed: u64) -> Result<CheckReport> {
    let req = CorrelationRequest::new(model.clone(), vec![0; model.len()])?;
    let e = fkg_pair_estimate(&req, f, g, sweeps, seed)?;
    let inputs = json!({ "check": "fkg", "model": model_value(model), "f": f, "g": g, "sweeps": sweeps, "seed": seed });
    Ok(CheckReport::new(
        "⟨fg⟩ − ⟨f⟩⟨g⟩ ≥ 0",
        &inputs,
        Side::est(e.cov.value, e.cov.stderr),
        Side::exact(0.0),
        Relation::AtLeast,
        CheckMode::MonteCarlo,
        0.0,
    ))
}

fn tangling(params: &SingleSiteParams, n: usize, s: usize, t: usize, double: bool, samples: u64, seed: u64) -> Result<PartitionDistribution> {
    let mode = if n <= MAX_EXACT_TANGLING_N && samples == 0 {
        TanglingMode::Exact
    } else {
        TanglingMode::Worm
    };
    estimate_tangling_measure(params, n, s, t, double, mode, samples, seed)
}

fn mode_of(dists: &[&PartitionDistribution]) -> CheckMode {
    if dists.iter().all(|d| d.stderr.iter().all(|&e| e == 0.0)) {
        CheckMode::Exact
    } else {
        CheckMode::MonteCarlo
    }
}

/// Minimum probability of an admissible partition under ρ^{S̃,T̃} on K_N,
/// per N. `samples = 0` requests exact measures.
pub fn partition_positivity_stats(
    params: &SingleSiteParams,
    n_grid: &[usize],
    s: usize,
    t: usize,
    samples: u64,
    seed: u64,
    floor: f64,
) -> Result<CheckReport> {
    if s + t > 8 {
        return Err(Error::param("S+T", "at most 8 points"));
    }
    let mut worst = Side::exact(f64::INFINITY);
    let mut rows = Vec::new();
    let mut dists = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let d = tangling(params, n, s, t, true, samples, derive_seed(seed, i as u64))?;
        let (k, p) = d
            .probabilities
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bk, bp), (k, &p)| if p < bp { (k, p) } else { (bk, bp) });
        rows.push(json!({ "n": n, "min_probability": p, "stderr": d.stderr[k], "argmin": d.support[k].label(), "n_partitions": d.support.len() }));
        if p < worst.value {
            worst = Side::est(p, d.stderr[k]);
        }
        dists.push(d);
    }
    if n_grid.is_empty() {
        worst = Side::exact(1.0);
    }
    let mode = mode_of(&dists.iter().collect::<Vec<_>>());
    let inputs = json!({ "check": "partition_positivity", "g": params.g, "a": params.a, "n_grid": n_grid, "s": s, "t": t, "samples": samples, "seed": seed, "floor": floor });
    let mut rep = CheckReport::new(
        "every admissible partition has positive probability",
        &inputs,
        worst,
        Side::exact(floor),
        Relation::AtLeast,
        mode,
        0.0,
    )
    .with("per_n", rows);
    // strict positivity in exact mode
    if mode == CheckMode::Exact && worst.value <= floor {
        rep.verdict = Verdict::Fail;
    }
    Ok(rep)
}

fn is_pairing(p: &EvenPartition) -> bool {
    p.classes.iter().all(|c| c.len() == 2)
}

/// Per-pairing probabilities under ρ^{S̃} and merge ratios
/// freq(P^{i,j})/freq(P) for every P with freq ≥ ε.
pub fn pairing_and_merging_stats(
    params: &SingleSiteParams,
    n_grid: &[usize],
    s: usize,
    samples: u64,
    seed: u64,
    eps: f64,
    delta: f64,
) -> Result<CheckReport> {
    if s % 2 == 1 || s > 8 {
        return Err(Error::param("S", "must be even and at most 8"));
    }
    let mut worst = Side::exact(f64::INFINITY);
    let mut rows = Vec::new();
    let mut dists = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let d = tangling(params, n, s, 0, false, samples, derive_seed(seed, i as u64))?;
        let pairings: Vec<Value> = d
            .support
            .iter()
            .enumerate()
            .filter(|(_, p)| is_pairing(p))
            .map(|(k, p)| json!({ "partition": p.label(), "probability": d.probabilities[k], "stderr": d.stderr[k] }))
            .collect();
        let mut merges = Vec::new();
        for (k, p) in d.support.iter().enumerate() {
            let fp = d.probabilities[k];
            if fp < eps {
                continue;
            }
            for ci in 0..p.classes.len() {
                for cj in ci + 1..p.classes.len() {
                    let q = p.merge(ci, cj);
                    let fq = d.prob(&q);
                    let ratio = fq / fp;
                    let se = ratio * ((d.err(&q) / fq.max(1e-300)).powi(2) + (d.stderr[k] / fp).powi(2)).sqrt();
                    merges.push(json!({ "from": p.label(), "to": q.label(), "ratio": ratio, "stderr": se }));
                    if ratio < worst.value {
                        worst = Side::est(ratio, se);
                    }
                }
            }
        }
        rows.push(json!({ "n": n, "pairings": pairings, "merges": merges }));
        dists.push(d);
    }
    let mode = mode_of(&dists.iter().collect::<Vec<_>>());
    if !worst.value.is_finite() {
        // nothing mergeable (S = 2): only the pairing probability is reported
        worst = Side::exact(f64::MAX);
    }
    let inputs = json!({ "check": "pairing_and_merging", "g": params.g, "a": params.a, "n_grid": n_grid, "s": s, "samples": samples, "seed": seed, "eps": eps, "delta": delta });
    Ok(CheckReport::new(
        "pairings occur and clusters merge at bounded cost",
        &inputs,
        worst,
        Side::exact(delta),
        Relation::AtLeast,
        mode,
        0.0,
    )
    .with("per_n", rows))
}

/// E|𝒞_x|/√N over (a, N); checks monotonicity in a and boundedness by
/// `bound`. `samples = 0` requests exact laws.
pub fn cluster_size_stats(g: f64, a_values: &[f64], n_grid: &[usize], s: usize, samples: u64, seed: u64, bound: f64) -> Result<CheckReport> {
    if a_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("a", "values must be sorted"));
    }
    let mut table = vec![vec![Side::exact(0.0); n_grid.len()]; a_values.len()];
    let mut rows = Vec::new();
    let mut mc = false;
    for (i, &a) in a_values.iter().enumerate() {
        let p = SingleSiteParams::new(g, a)?;
        for (j, &n) in n_grid.iter().enumerate() {
            let law = if samples == 0 && n <= MAX_EXACT_TANGLING_N {
                cluster_size_distribution(&p, n, s)?
            } else {
                mc = true;
                cluster_size_worm(&p, n, s, samples.max(1000), derive_seed(seed, (i * n_grid.len() + j) as u64))?
            };
            let r = (n as f64).sqrt();
            table[i][j] = Side::est(law.mean / r, law.stderr / r);
            rows.push(json!({ "a": a, "n": n, "ratio": law.mean / r, "stderr": law.stderr / r }));
        }
    }
    // least oriented increment along a (must be ≥ 0 up to error)
    let mut worst = Side::exact(f64::INFINITY);
    for j in 0..n_grid.len() {
        for i in 1..a_values.len() {
            let d = table[i - 1][j].value - table[i][j].value;
            if d < worst.value {
                worst = Side::est(d, table[i - 1][j].stderr.hypot(table[i][j].stderr));
            }
        }
    }
    if !worst.value.is_finite() {
        worst = Side::exact(0.0);
    }
    let max_ratio = table.iter().flatten().map(|s| s.value).fold(0.0, f64::max);
    let mode = if mc { CheckMode::MonteCarlo } else { CheckMode::Exact };
    let inputs =
        json!({ "check": "cluster_size", "g": g, "a_values": a_values, "n_grid": n_grid, "s": s, "samples": samples, "seed": seed, "bound": bound });
    let mut rep = CheckReport::new(
        "E|C_x|/√N bounded and nonincreasing in a",
        &inputs,
        worst,
        Side::exact(0.0),
        Relation::AtLeast,
        mode,
        0.0,
    )
    .with("table", rows)
    .with("max_ratio", max_ratio);
    if max_ratio > bound {
        rep.verdict = Verdict::Fail;
    }
    Ok(rep)
}

/// ρ^{S̃,T̃}(U) ≥ (ρ^{S̃} ⊔ ρ^{T̃})(U) for every up-set U of admissible
/// partitions. `samples = 0` requests exact measures.
pub fn verify_domination(params: &SingleSiteParams, n: usize, s: usize, t: usize, samples: u64, seed: u64) -> Result<CheckReport> {
    let joint = tangling(params, n, s, t, true, samples, derive_seed(seed, 1))?;
    let ms = tangling(params, n, s, 0, false, samples, derive_seed(seed, 2))?;
    let mt = tangling(params, n, t, 0, false, samples, derive_seed(seed, 3))?;
    let union = disjoint_union(&ms, &mt)?;
    let family = enumerate_even_partitions(s + t, Some(s))?;
    let ups = up_sets(&family)?;
    let mut worst = (Side::exact(f64::INFINITY), Side::exact(0.0));
    let mut worst_gap = f64::INFINITY;
    // ∅ and the whole family have gap 0 and say nothing
    for u in ups.iter().filter(|u| !u.is_empty() && u.len() < family.len()) {
        let set: Vec<EvenPartition> = u.iter().map(|&i| family[i].clone()).collect();
        let (pj, ej) = joint.mass_of(&set);
        let (pu, eu) = union.mass_of(&set);
        if pj - pu < worst_gap {
            worst_gap = pj - pu;
            worst = (Side::est(pj, ej), Side::est(pu, eu));
        }
    }
    if !worst_gap.is_finite() {
        worst = (Side::exact(0.0), Side::exact(0.0));
    }
    let mode = mode_of(&[&joint, &union]);
    let tol = if mode == CheckMode::Exact { EXACT_TOL } else { 0.0 };
    let inputs = json!({ "check": "domination", "g": params.g, "a": params.a, "n": n, "s": s, "t": t, "samples": samples, "seed": seed });
    Ok(CheckReport::new(
        "ρ^{S,T} dominates ρ^S ⊔ ρ^T on up-sets",
        &inputs,
        worst.0,
        worst.1,
        Relation::AtLeast,
        mode,
        tol,
    )
    .with("n_up_sets", ups.len()))
}

/// The finite-N identity itself: exact μ[σ_Ã]μ[σ_B̃]/μ[σ_{Ã∪B̃}] against the
/// worm frequency of ℱ_B̃ at the same N.
pub fn verify_finite_n_switching(
    model: &Phi4Model,
    a: &Moment,
    b: &Moment,
    region: Option<&[bool]>,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<CheckReport> {
    let keep = region_vertices(model, region)?;
    let exact = switching_ratio_at(model, a, b, &keep, n)?;
    let (p, se) = switching_event_worm(model, a, b, &keep, n, samples, seed)?;
    let inputs = json!({
        "check": "finite_n_switching",
        "model": model_value(model),
        "a": moment_value(a),
        "b": moment_value(b),
        "region": keep,
        "n": n,
        "samples": samples,
        "seed": seed,
    });
    Ok(CheckReport::new(
        "μ[σ_A]μ[σ_B]/μ[σ_{A∪B}] = P^{A∪B,∅}[F_B] at level N",
        &inputs,
        Side::exact(exact),
        Side::est(p, se),
        Relation::Equal,
        CheckMode::MonteCarlo,
        0.0,
    )
    .with("n", n))
}

/// Ising switching identity by truncated enumeration, with the smallest
/// truncation order whose certified tail is below 1e−11.
pub fn verify_ising_switching(g: &CouplingGraph, s: &[usize], t: &[usize], f: &CurrentFunctional) -> Result<CheckReport> {
    let mut cap = 4;
    let res = loop {
        match ising_switching_check(g, s, t, f, cap, 1e-11) {
            Err(Error::Truncation { .. }) => cap += 1,
            other => break other?,
        }
    };
    let inputs = json!({ "check": "ising_switching", "n": g.n, "edges": g.edges, "s": s, "t": t, "f": f });
    Ok(CheckReport::new(
        "Ising switching identity",
        &inputs,
        Side::exact(res.lhs),
        Side::exact(res.rhs),
        Relation::Equal,
        CheckMode::Exact,
        EXACT_TOL + 2.0 * res.tail,
    )
    .with("cap", res.cap)
    .with("tail", res.tail)
    .with("n_states", res.n_states))
}

/// A micro-graph (≤ 4 vertices, ≤ 6 edges) with random couplings, sources
/// S, T and a functional from the fixed family.
pub fn random_switching_instance(rng: &mut Rng) -> (CouplingGraph, Vec<usize>, Vec<usize>, CurrentFunctional) {
    loop {
        let n = rng.random_range(2..=4usize);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.7) {
                    edges.push((u, v, rng.random_range(0.05..0.45)));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        let g = CouplingGraph::new(n, edges).expect("valid micro-graph");
        let pick = |rng: &mut Rng| -> Vec<usize> {
            let k = 2 * rng.random_range(0..=n / 2);
            let mut v: Vec<usize> = (0..n).collect();
            for i in 0..n {
                let j = rng.random_range(i..n);
                v.swap(i, j);
            }
            let mut out = v[..k].to_vec();
            out.sort_unstable();
            out
        };
        let s = pick(rng);
        let t = pick(rng);
        let f = CurrentFunctional::random(&g, rng);
        return (g, s, t, f);
    }
}

/// Random model on ≤ 3 vertices: g ∈ [0.5,4], a ∈ [−2,2], βJ ∈ [0,1],
/// h ∈ [0,0.5].
pub fn random_small_model(rng: &mut Rng) -> Phi4Model {
    let n = rng.random_range(1..=3usize);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.8) {
                edges.push((u, v, rng.random_range(0.0..1.0)));
            }
        }
    }
    let params = SingleSiteParams::new(rng.random_range(0.5..4.0), rng.random_range(-2.0..2.0)).expect("valid parameters");
    let h = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
    Phi4Model::new(InteractionGraph::from_edges(n, &edges), params, 1.0, h).expect("valid model")
}

fn random_moment(n: usize, rng: &mut Rng, max: u32) -> Moment {
    Moment::from_vec((0..n).map(|_| rng.random_range(0..=max)).collect())
}

fn random_local_fn(n: usize, rng: &mut Rng) -> LocalFn {
    let x = rng.random_range(0..n);
    match rng.random_range(0..3) {
        0 => LocalFn::Coordinate { x },
        1 => {
            let lo = rng.random_range(-1.0..0.5);
            LocalFn::Clamp {
                x,
                lo,
                hi: lo + rng.random_range(0.1..1.5),
            }
        }
        _ => LocalFn::Indicator {
            x,
            c: rng.random_range(-0.5..0.5),
        },
    }
}

/// One randomized instance of every inequality on `model` (h ≥ 0): Griffiths
/// I and II, volume, β/g/a monotonicity, Ginibre and FKG.
pub fn inequality_checks(model: &Phi4Model, fkg_sweeps: usize, seed: u64) -> Result<Vec<(&'static str, CheckReport)>> {
    let mut rng = rng_from_seed(seed);
    let n = model.len();
    let mut out = Vec::new();
    out.push(("griffiths1", verify_griffiths1(model, &random_moment(n, &mut rng, 2))?));
    out.push((
        "griffiths2",
        verify_griffiths2(model, &random_moment(n, &mut rng, 2), &random_moment(n, &mut rng, 2))?,
    ));
    let keep: Vec<usize> = if n == 1 {
        vec![0]
    } else {
        let drop = rng.random_range(0..n);
        (0..n).filter(|&x| x != drop).collect()
    };
    let mut b = Moment::zero(n);
    for &x in &keep {
        b.x[x] = rng.random_range(0..=2);
    }
    out.push(("volume", verify_volume_monotonicity(model, &keep, &b)?));
    let grid = |rng: &mut Rng, lo: f64, hi: f64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..3).map(|_| rng.random_range(lo..hi)).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let a = random_moment(n, &mut rng, 2);
    out.push((
        "beta_monotonicity",
        verify_parameter_monotonicity(model, &a, &ParamGrid::Beta(grid(&mut rng, 0.0, 1.0)))?,
    ));
    out.push((
        "g_monotonicity",
        verify_parameter_monotonicity(model, &a, &ParamGrid::G(grid(&mut rng, 0.5, 4.0)))?,
    ));
    out.push((
        "a_monotonicity",
        verify_parameter_monotonicity(model, &a, &ParamGrid::A(grid(&mut rng, -2.0, 2.0)))?,
    ));
    // Ginibre: one exterior vertex attached to the model
    let mut ext = InteractionGraph::new(n + 1);
    for (x, y, j) in model.graph.edges() {
        ext.set(x, y, j);
    }
    for x in 0..n {
        if x == 0 || rng.random_bool(0.5) {
            ext.set(x, n, rng.random_range(0.1..1.0));
        }
    }
    let mut h = model.h.clone();
    h.push(0.0);
    let big = Phi4Model::new(ext, model.params, model.beta, h)?;
    let eta_p = rng.random_range(0.0..1.5);
    let eta = rng.random_range(-eta_p..=eta_p);
    out.push((
        "ginibre",
        verify_ginibre(
            &big,
            &[n],
            &[eta],
            &[eta_p],
            &random_moment(n, &mut rng, 2),
            &random_moment(n, &mut rng, 2),
        )?,
    ));
    let (f, g) = (random_local_fn(n, &mut rng), random_local_fn(n, &mut rng));
    out.push(("fkg", verify_fkg(model, f, g, fkg_sweeps, derive_seed(seed, 99))?));
    Ok(out)
}
