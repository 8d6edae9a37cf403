//! Exact GS sums through block magnetisations. A block's internal energy is
//! d_N(M²−N)/2, and every external coupling sees the block only through M, so
//! spin correlations reduce to sums over magnetisation tuples with binomial
//! multiplicities and the conditional products r_p(k) = E[σ₁⋯σ_p | k plus spins].

use serde::{Deserialize, Serialize};

use super::BlockGraph;
use crate::currents::{Current, Moment};
use crate::error::{Error, Result};
use crate::model::{gs_couplings, Phi4Model, SingleSiteParams};
use crate::numeric::{LnFact, Neumaier};

/// Cap on the number of magnetisation tuples (N+1)^|Λ|.
pub const MAX_MAGNETISATION_TUPLES: usize = 20_000_000;

/// r_p(k) for k = 0..=N plus spins out of N: the uniform-average of
/// σ₁⋯σ_p over configurations with k plus spins.
pub fn conditional_products(n: usize, p: usize) -> Result<Vec<f64>> {
    if p > n {
        return Err(Error::param("p", format!("{p} spins requested from a block of {n}")));
    }
    // level q holds r_q(a, b) on a + b = n − p + q, indexed by a
    let base = n - p;
    let mut cur = vec![1.0; base + 1];
    for q in 1..=p {
        let tot = base + q;
        let mut next = vec![0.0; tot + 1];
        for (a, slot) in next.iter_mut().enumerate() {
            let b = tot - a;
            let mut v = 0.0;
            if a > 0 {
                v += a as f64 / tot as f64 * cur[a - 1];
            }
            if b > 0 {
                v -= b as f64 / tot as f64 * cur[a];
            }
            *slot = v;
        }
        cur = next;
    }
    Ok(cur)
}

/// Log-weights ln C(N,k) + d(M²−N)/2 of the free block, k = # plus spins.
fn block_log_weights(n: usize, d: f64, lf: &LnFact) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let m = 2.0 * k as f64 - n as f64;
            lf.ln_binom(n, k) + d * (m * m - n as f64) / 2.0
        })
        .collect()
}

/// μ⁰[σ₁⋯σ_p] on a single free block of N spins.
pub fn block_moment_exact(params: &SingleSiteParams, n: usize, p: usize) -> Result<f64> {
    if n < p {
        return Err(Error::param("N", format!("N={n} is smaller than p={p}")));
    }
    if p % 2 == 1 {
        return Ok(0.0);
    }
    let gs = gs_couplings(params, n)?;
    let lf = LnFact::new(n);
    let lw = block_log_weights(n, gs.d_n, &lf);
    let r = conditional_products(n, p)?;
    Ok(log_weighted_mean(&lw, |k| r[k]))
}

fn log_weighted_mean(lw: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mx = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = Neumaier::new();
    let mut num = Neumaier::new();
    for (k, &l) in lw.iter().enumerate() {
        let w = (l - mx).exp();
        z.add(w);
        num.add(w * f(k));
    }
    num.value() / z.value()
}

/// (c_N N)^p · μ⁰[σ₁⋯σ_p], exact for every N.
pub fn block_moment(params: &SingleSiteParams, n: usize, p: usize) -> Result<f64> {
    let m = block_moment_exact(params, n, p)?;
    let gs = gs_couplings(params, n)?;
    Ok((gs.c_n * n as f64).powi(p as i32) * m)
}

/// E[Π_x f_x(k_x)] under the joint law of the block plus-counts of the GS
/// model on Λ, where f_x(k) = r_{s_x}(k)·M^{D_x}.
fn joint_expectation(bg: &BlockGraph, spins: &[usize], powers: &[u32]) -> Result<f64> {
    let lam = bg.n_blocks();
    let n = bg.n();
    let tuples = (n + 1).checked_pow(lam as u32).unwrap_or(usize::MAX);
    if tuples > MAX_MAGNETISATION_TUPLES {
        return Err(Error::Capacity(format!(
            "{tuples} magnetisation tuples exceed {MAX_MAGNETISATION_TUPLES}"
        )));
    }
    let lf = LnFact::new(n);
    let lw = block_log_weights(n, bg.gs.d_n, &lf);
    let mut fx = Vec::with_capacity(lam);
    for x in 0..lam {
        let r = conditional_products(n, spins[x])?;
        let f: Vec<f64> = (0..=n)
            .map(|k| {
                let m = 2.0 * k as f64 - n as f64;
                r[k] * m.powi(powers[x] as i32)
            })
            .collect();
        fx.push(f);
    }
    let ext: Vec<(usize, usize, f64)> = bg
        .model
        .graph
        .edges()
        .into_iter()
        .map(|(x, y, _)| (x, y, bg.external_coupling(x, y)))
        .collect();
    let gh: Vec<f64> = (0..lam).map(|x| bg.ghost_coupling(x)).collect();
    let mut ks = vec![0usize; lam];
    let mut logs = Vec::with_capacity(tuples);
    let mut vals = Vec::with_capacity(tuples);
    loop {
        let ms: Vec<f64> = ks.iter().map(|&k| 2.0 * k as f64 - n as f64).collect();
        let mut l = 0.0;
        let mut v = 1.0;
        for x in 0..lam {
            l += lw[ks[x]] + gh[x] * ms[x];
            v *= fx[x][ks[x]];
        }
        for &(x, y, k) in &ext {
            l += k * ms[x] * ms[y];
        }
        logs.push(l);
        vals.push(v);
        let mut i = 0;
        while i < lam {
            ks[i] += 1;
            if ks[i] <= n {
                break;
            }
            ks[i] = 0;
            i += 1;
        }
        if i == lam {
            break;
        }
    }
    Ok(log_weighted_mean(&logs, |i| vals[i]))
}

/// μ_{Λ,N,β}[Π_x σ_{(x,1)}⋯σ_{(x,s_x)}] for the GS model built from `model`.
pub fn block_spin_correlation(model: &Phi4Model, n: usize, counts: &[u32]) -> Result<f64> {
    let bg = BlockGraph::new(model, n)?;
    if counts.len() != bg.n_blocks() {
        return Err(Error::Contract("one count per vertex required".into()));
    }
    let spins: Vec<usize> = counts.iter().map(|&c| c as usize).collect();
    joint_expectation(&bg, &spins, &vec![0; spins.len()])
}

/// μ[σ_Ã]·μ[σ_B̃]/μ[σ_{Ã∪B̃}] on the GS model; by the Ising switching lemma
/// this is the finite-N probability of ℱ_B̃ under the double current with
/// sources (Ã∪B̃, ∅).
pub fn switching_ratio_exact(model: &Phi4Model, a: &Moment, b: &Moment, n: usize) -> Result<f64> {
    let ab: Vec<u32> = a.x.iter().zip(&b.x).map(|(p, q)| p + q).collect();
    let den = block_spin_correlation(model, n, &ab)?;
    if den.abs() < 1e-300 {
        return Err(Error::Degenerate("μ[σ_{A+B}] vanishes".into()));
    }
    let na = block_spin_correlation(model, n, &a.x)?;
    let nb = block_spin_correlation(model, n, &b.x)?;
    Ok(na * nb / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormalisedWeight {
    pub n: usize,
    /// full sum over all lifts
    pub full: f64,
    /// contribution of lifts in W_N = W₁ ∩ W₂
    pub w_part: f64,
    /// full − w_part, the W_N^c remainder
    pub remainder: f64,
}

fn log_falling(n: usize, k: usize) -> Option<f64> {
    if k > n {
        return None;
    }
    Some((0..k).map(|i| ((n - i) as f64).ln()).sum())
}

/// (c_N N)^{|A|}/𝐙_N^{|Λ|} · Σ_{Θ_N(ñ)=n, ∂ñ=Ã} w_{N,β}(ñ), its W_N part and
/// the remainder.
pub fn renormalised_weight(n: &Current, a: &Moment, model: &Phi4Model, big_n: usize) -> Result<RenormalisedWeight> {
    let lam = model.len();
    if n.n_vertices != lam || a.x.len() != lam {
        return Err(Error::Contract("current, moment and model sizes differ".into()));
    }
    let bg = BlockGraph::new(model, big_n)?;
    let c = bg.gs.c_n;
    for x in 0..lam {
        if a.x[x] as usize > big_n {
            return Err(Error::param("N", format!("A_x={} exceeds N={big_n}", a.x[x])));
        }
    }
    let deg = n.degrees();
    let mut ln_pref = a.total() as f64 * (c * big_n as f64).ln();
    let ghost = n.ghost();
    for (x, y, v) in n.entries() {
        let k = if y == ghost { bg.ghost_coupling(x) } else { bg.external_coupling(x, y) };
        if k <= 0.0 {
            return Ok(RenormalisedWeight {
                n: big_n,
                full: 0.0,
                w_part: 0.0,
                remainder: 0.0,
            });
        }
        ln_pref += v as f64 * k.ln() - crate::numeric::ln_factorial(v as u64);
    }
    // parity: each block must see an even number of odd ends
    for x in 0..lam {
        if (deg[x] + a.x[x]) % 2 == 1 {
            return Ok(RenormalisedWeight {
                n: big_n,
                full: 0.0,
                w_part: 0.0,
                remainder: 0.0,
            });
        }
    }
    let lf = LnFact::new(big_n);
    let lw = block_log_weights(big_n, bg.gs.d_n, &lf);
    let mut full = ln_pref.exp();
    let mut w_part = ln_pref.exp();
    for x in 0..lam {
        let ax = a.x[x] as usize;
        let dx = deg[x] as usize;
        let r = conditional_products(big_n, ax)?;
        let h = log_weighted_mean(&lw, |k| {
            let m = 2.0 * k as f64 - big_n as f64;
            r[k] * m.powi(dx as i32)
        });
        full *= h;
        match log_falling(big_n - ax, dx) {
            Some(lff) => {
                let mu = log_weighted_mean(&lw, |k| conditional_products_cached(big_n, ax + dx, k));
                w_part *= lff.exp() * mu;
            }
            None => w_part = 0.0,
        }
    }
    Ok(RenormalisedWeight {
        n: big_n,
        full,
        w_part,
        remainder: full - w_part,
    })
}

fn conditional_products_cached(n: usize, p: usize, k: usize) -> f64 {
    thread_local! {
        static CACHE: std::cell::RefCell<Option<((usize, usize), Vec<f64>)>> = const { std::cell::RefCell::new(None) };
    }
    CACHE.with(|c| {
        let mut c = c.borrow_mut();
        if c.as_ref().map(|e| e.0) != Some((n, p)) {
            *c = Some(((n, p), conditional_products(n, p).unwrap_or_else(|_| vec![0.0; n + 1])));
        }
        c.as_ref().unwrap().1[k]
    })
}

/// Exact number of external lifts ñ ∈ W^ext_N of n whose external ends avoid
/// Ã: Π_x (N−A_x)_{Δn(x)} / Π_{pairs} n!.
pub fn external_lift_count(n: &Current, a: &Moment, big_n: usize) -> f64 {
    let deg = n.degrees();
    let mut l = 0.0;
    for x in 0..n.n_vertices {
        let free = big_n.saturating_sub(a.x[x] as usize);
        match log_falling(free, deg[x] as usize) {
            Some(v) => l += v,
            None => return 0.0,
        }
    }
    for (_, _, v) in n.entries() {
        l -= crate::numeric::ln_factorial(v as u64);
    }
    l.exp()
}

/// Leading order Π N^{2n_{xy}}/n_{xy}! · Π N^{n_{x𝔤}}/n_{x𝔤}!.
pub fn leading_lift_count(n: &Current, big_n: usize) -> f64 {
    let ghost = n.ghost();
    let mut l = 0.0;
    for (_, y, v) in n.entries() {
        let pw = if y == ghost { 1.0 } else { 2.0 };
        l += pw * v as f64 * (big_n as f64).ln() - crate::numeric::ln_factorial(v as u64);
    }
    l.exp()
}
