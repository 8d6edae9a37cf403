//! Torus-periodised interactions, the random-walk step characteristic
//! function, lattice Green's functions, the infrared-bound check, Cesàro
//! averages and magnetisation scans.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::SingleSiteParams;
use crate::numeric::{richardson_zero, Neumaier};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampler::Phi4Sampler;
use crate::stats::{batch_means, batch_series, jackknife};
use crate::verifiers::{CheckMode, CheckReport, Relation, Side};

/// Largest image box (2m+1)^d summed when periodising or evaluating D̂.
pub const MAX_IMAGE_BOX: usize = 50_000_000;
pub const DEFAULT_GREEN_GRID: [usize; 3] = [32, 64, 128];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    NearestNeighbour,
    /// J_{0,x} = C e^{−μ|x|}
    Exponential {
        mu: f64,
        c: f64,
    },
    /// J_{0,x} = C |x|^{−(d+α)}
    PowerLaw {
        alpha: f64,
        c: f64,
    },
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::NearestNeighbour => Ok(()),
            Family::Exponential { mu, c } => {
                if !(mu > 0.0 && c > 0.0) {
                    return Err(Error::param("family", "exponential needs μ > 0 and C > 0"));
                }
                Ok(())
            }
            Family::PowerLaw { alpha, c } => {
                if !(alpha > 0.0 && c > 0.0) {
                    return Err(Error::param("family", "power law needs α > 0 and C > 0"));
                }
                Ok(())
            }
        }
    }

    /// J_{0,y} on ℤ^d.
    pub fn coupling(&self, y: &[i64]) -> f64 {
        let l1: i64 = y.iter().map(|v| v.abs()).sum();
        if l1 == 0 {
            return 0.0;
        }
        let r = y.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        match *self {
            Family::NearestNeighbour => {
                if l1 == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Exponential { mu, c } => c * (-mu * r).exp(),
            Family::PowerLaw { alpha, c } => c * r.powf(-(y.len() as f64 + alpha)),
        }
    }

    /// Upper bound on Σ_{|y|_∞ > m} J_{0,y}. Uses |y|₂ ≥ |y|_∞ and the shell
    /// size (2k+1)^d − (2k−1)^d ≤ 2d(2k+1)^{d−1}.
    pub fn tail_beyond(&self, d: usize, m: usize) -> f64 {
        let dd = d as f64;
        match *self {
            Family::NearestNeighbour => {
                if m >= 1 {
                    0.0
                } else {
                    2.0 * dd
                }
            }
            Family::Exponential { mu, c } => {
                let f = |k: f64| 2.0 * dd * (2.0 * k + 1.0).powf(dd - 1.0) * c * (-mu * k).exp();
                let mut acc = Neumaier::new();
                let mut k = m as f64 + 1.0;
                loop {
                    let rho = ((2.0 * k + 3.0) / (2.0 * k + 1.0)).powf(dd - 1.0) * (-mu).exp();
                    let fk = f(k);
                    if rho < 1.0 {
                        let rest = fk / (1.0 - rho);
                        if rest <= 1e-17 * acc.value() || rest < 1e-300 || k > 1e7 {
                            acc.add(rest);
                            return acc.value();
                        }
                    }
                    acc.add(fk);
                    k += 1.0;
                }
            }
            Family::PowerLaw { alpha, c } => {
                let m = (m.max(1)) as f64;
                2.0 * dd * 3f64.powf(dd - 1.0) * c * m.powf(-alpha) / alpha
            }
        }
    }

    /// γ with 1 − D̂(p) ≍ |p|^γ near p = 0.
    pub fn small_p_exponent(&self) -> f64 {
        match *self {
            Family::PowerLaw { alpha, .. } => alpha.min(2.0),
            _ => 2.0,
        }
    }

    /// The walk is transient iff ∫ dp/(1 − D̂(p)) converges, i.e. d > γ.
    pub fn is_transient(&self, d: usize) -> bool {
        d as f64 > self.small_p_exponent()
    }

    /// |J| = Σ_x J_{0,x} on ℤ^d with a certified error.
    pub fn total(&self, d: usize, tol: f64) -> Result<(f64, f64)> {
        if let Family::NearestNeighbour = self {
            return Ok((2.0 * d as f64, 0.0));
        }
        let m = cutoff_for(self, d, tol, 1)?;
        let mut acc = Neumaier::new();
        for_box(d, m as i64, |y| acc.add(self.coupling(y)));
        Ok((acc.value(), self.tail_beyond(d, m)))
    }
}

fn cutoff_for(f: &Family, d: usize, tol: f64, at_least: usize) -> Result<usize> {
    let mut m = at_least.max(1);
    while f.tail_beyond(d, m) > tol {
        m = (m * 2).max(m + 1);
        if (2 * m + 1).pow(d as u32) > MAX_IMAGE_BOX {
            break;
        }
    }
    // refine downward by bisection
    let (mut lo, mut hi) = (at_least.max(1), m);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if f.tail_beyond(d, mid) <= tol {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let m = hi;
    if (2 * m + 1).checked_pow(d as u32).is_none_or(|b| b > MAX_IMAGE_BOX) || f.tail_beyond(d, m) > tol {
        return Err(Error::Capacity(format!("image cutoff {m} in d={d} exceeds the summation budget")));
    }
    Ok(m)
}

fn for_box<F: FnMut(&[i64])>(d: usize, m: i64, mut f: F) {
    let mut y = vec![-m; d];
    loop {
        f(&y);
        let mut i = 0;
        while i < d {
            y[i] += 1;
            if y[i] <= m {
                break;
            }
            y[i] = -m;
            i += 1;
        }
        if i == d {
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub d: usize,
    pub l: usize,
    pub family: Family,
}

impl TorusSpec {
    pub fn new(d: usize, l: usize, family: Family) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("d", "dimension must be positive"));
        }
        if l < 2 || l % 2 == 1 {
            return Err(Error::param("L", "side must be even and at least 2"));
        }
        family.validate()?;
        Ok(TorusSpec { d, l, family })
    }

    pub fn volume(&self) -> usize {
        self.l.pow(self.d as u32)
    }

    pub fn index(&self, x: &[i64]) -> usize {
        let l = self.l as i64;
        x.iter().rev().fold(0usize, |acc, &v| acc * self.l + v.rem_euclid(l) as usize)
    }

    pub fn coords(&self, mut i: usize) -> Vec<i64> {
        (0..self.d)
            .map(|_| {
                let c = (i % self.l) as i64;
                i /= self.l;
                c
            })
            .collect()
    }
}

/// J^L_{0,x} = Σ_z J_{0,x+Lz} on the torus, flat-indexed by `TorusSpec::index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusKernel {
    pub spec: TorusSpec,
    pub values: Vec<f64>,
    /// certified bound on the excluded image mass
    pub tail: f64,
    pub cutoff: usize,
}

impl TorusKernel {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// D̂_L(p) = Σ_x J^L_{0,x} cos(p·x)/Σ_x J^L_{0,x} on the dual torus,
    /// by one cosine transform per axis.
    pub fn characteristic(&self) -> Vec<f64> {
        let l = self.spec.l;
        let d = self.spec.d;
        let cosines: Vec<f64> = (0..l * l).map(|i| (2.0 * PI * ((i / l) * (i % l)) as f64 / l as f64).cos()).collect();
        let mut cur = self.values.clone();
        let mut stride = 1;
        for _ in 0..d {
            let mut next = vec![0.0; cur.len()];
            for (base, _) in cur.iter().enumerate().filter(|(i, _)| (i / stride) % l == 0) {
                for p in 0..l {
                    let mut s = 0.0;
                    for x in 0..l {
                        s += cur[base + x * stride] * cosines[p * l + x];
                    }
                    next[base + p * stride] = s;
                }
            }
            cur = next;
            stride *= l;
        }
        let tot = self.total();
        cur.iter().map(|v| v / tot).collect()
    }
}

fn kernel_with_cutoff(spec: &TorusSpec, m: usize) -> Vec<f64> {
    let mut values = vec![0.0; spec.volume()];
    for_box(spec.d, m as i64, |y| {
        let j = spec.family.coupling(y);
        if j != 0.0 {
            values[spec.index(y)] += j;
        }
    });
    values
}

pub fn torus_kernel(spec: &TorusSpec, tol: f64) -> Result<TorusKernel> {
    let m = match spec.family {
        Family::NearestNeighbour => 1,
        f => cutoff_for(&f, spec.d, tol, spec.l / 2)?,
    };
    Ok(TorusKernel {
        spec: *spec,
        values: kernel_with_cutoff(spec, m),
        tail: spec.family.tail_beyond(spec.d, m),
        cutoff: m,
    })
}

/// E[e^{ip·X₁}] = Σ_x (J_{0,x}/|J|) cos(p·x) on ℤ^d.
pub fn step_characteristic(family: &Family, d: usize, p: &[f64], tol: f64) -> Result<f64> {
    family.validate()?;
    if p.len() != d {
        return Err(Error::Contract("momentum dimension mismatch".into()));
    }
    if let Family::NearestNeighbour = family {
        return Ok(p.iter().map(|q| q.cos()).sum::<f64>() / d as f64);
    }
    let m = cutoff_for(family, d, tol, 1)?;
    let (mut num, mut den) = (Neumaier::new(), Neumaier::new());
    for_box(d, m as i64, |y| {
        let j = family.coupling(y);
        let phase: f64 = y.iter().zip(p).map(|(&a, b)| a as f64 * b).sum();
        num.add(j * phase.cos());
        den.add(j);
    });
    Ok(num.value() / den.value())
}

/// How the Green's function is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GreenSize {
    Torus {
        l: usize,
    },
    /// L → ∞ by Richardson extrapolation over the grid
    Limit {
        grid: Vec<usize>,
    },
}

impl GreenSize {
    pub fn limit() -> Self {
        GreenSize::Limit {
            grid: DEFAULT_GREEN_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: f64,
    pub error: f64,
    /// weight 1/L^d of the excluded p = 0 term (0 in the limit)
    pub zero_mode_weight: f64,
    pub finite_l: Vec<(usize, f64)>,
}

/// (1/L^d) Σ_{p ≠ 0} cos(p·r)/(1 − D̂(p)) for every displacement r. Each
/// slice of the first momentum coordinate is summed on its own and slices
/// are reduced in order, so results do not depend on `workers`.
pub fn torus_green_values(family: &Family, d: usize, l: usize, displacements: &[Vec<i64>], tol: f64, workers: usize) -> Result<Vec<f64>> {
    let spec = TorusSpec::new(d, l, *family)?;
    if displacements.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("displacement dimension mismatch".into()));
    }
    let vol = spec.volume();
    let dhat: Vec<f64> = match family {
        Family::NearestNeighbour => {
            let c: Vec<f64> = (0..l).map(|k| (2.0 * PI * k as f64 / l as f64).cos()).collect();
            (0..vol)
                .map(|i| {
                    let mut s = 0.0;
                    let mut j = i;
                    for _ in 0..d {
                        s += c[j % l];
                        j /= l;
                    }
                    s / d as f64
                })
                .collect()
        }
        _ => torus_kernel(&spec, tol)?.characteristic(),
    };
    let nr = displacements.len();
    // cos(2πk r/L) per displacement and axis
    let ctab: Vec<Vec<Vec<f64>>> = displacements
        .iter()
        .map(|r| {
            r.iter()
                .map(|&ri| (0..l).map(|k| (2.0 * PI * (k as f64) * (ri as f64) / l as f64).cos()).collect())
                .collect()
        })
        .collect();
    let slice = vol / l;
    let do_slice = |k0: usize| -> Result<Vec<f64>> {
        let mut acc = vec![Neumaier::new(); nr];
        for rest in 0..slice {
            let i = k0 + rest * l;
            if i == 0 {
                continue;
            }
            let den = 1.0 - dhat[i];
            if !(den > 0.0) {
                return Err(Error::Divergence(format!("1 − D̂(p) = {den} at a nonzero momentum")));
            }
            let w = 1.0 / den;
            for (ri, tab) in ctab.iter().enumerate() {
                let mut c = tab[0][k0];
                let mut j = rest;
                for t in tab.iter().skip(1) {
                    c *= t[j % l];
                    j /= l;
                }
                acc[ri].add(w * c);
            }
        }
        Ok(acc.iter().map(|a| a.value()).collect())
    };
    let workers = workers.max(1).min(l);
    let mut slices: Vec<Option<Result<Vec<f64>>>> = (0..l).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let do_slice = &do_slice;
                s.spawn(move || (w..l).step_by(workers).map(|k0| (k0, do_slice(k0))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (k0, r) in h.join().expect("green worker panicked") {
                slices[k0] = Some(r);
            }
        }
    });
    let mut out = vec![Neumaier::new(); nr];
    for s in slices {
        let v = s.expect("every slice computed")?;
        for (o, x) in out.iter_mut().zip(v) {
            o.add(x);
        }
    }
    Ok(out.iter().map(|a| a.value() / vol as f64).collect())
}

/// Green's function for several displacements, finite torus or limit.
pub fn green_many(family: &Family, d: usize, displacements: &[Vec<i64>], size: &GreenSize, tol: f64, workers: usize) -> Result<Vec<GreenValue>> {
    family.validate()?;
    match size {
        GreenSize::Torus { l } => {
            let v = torus_green_values(family, d, *l, displacements, tol, workers)?;
            let w = 1.0 / (*l as f64).powi(d as i32);
            Ok(v.into_iter()
                .map(|x| GreenValue {
                    value: x,
                    error: 0.0,
                    zero_mode_weight: w,
                    finite_l: vec![(*l, x)],
                })
                .collect())
        }
        GreenSize::Limit { grid } => {
            if !family.is_transient(d) {
                return Err(Error::Divergence(format!("the walk is recurrent in d={d}; G is infinite")));
            }
            if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param("grid", "need at least two increasing sides"));
            }
            let per_l = grid
                .iter()
                .map(|&l| torus_green_values(family, d, l, displacements, tol, workers))
                .collect::<Result<Vec<_>>>()?;
            let e = d as f64 - family.small_p_exponent();
            let s: Vec<f64> = grid.iter().map(|&l| (l as f64).powf(-e)).collect();
            let mut out = Vec::with_capacity(displacements.len());
            for r in 0..displacements.len() {
                let vals: Vec<f64> = per_l.iter().map(|v| v[r]).collect();
                let (value, error) = richardson_zero(&s, &vals);
                if error > tol {
                    return Err(Error::Truncation { bound: error, tol });
                }
                out.push(GreenValue {
                    value,
                    error,
                    zero_mode_weight: 0.0,
                    finite_l: grid.iter().copied().zip(vals).collect(),
                });
            }
            Ok(out)
        }
    }
}

pub fn green_function(family: &Family, d: usize, x: &[i64], y: &[i64], size: &GreenSize, tol: f64) -> Result<GreenValue> {
    if x.len() != d || y.len() != d {
        return Err(Error::Contract("point dimension mismatch".into()));
    }
    let r: Vec<i64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    Ok(green_many(family, d, &[r], size, tol, 1)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenEntry {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenTable {
    pub d: usize,
    /// None in the limit mode
    pub l: Option<usize>,
    pub abs_j: f64,
    pub entries: Vec<GreenEntry>,
}

pub fn green_table(family: &Family, d: usize, pairs: &[(Vec<i64>, Vec<i64>)], size: &GreenSize, tol: f64) -> Result<GreenTable> {
    let disp: Vec<Vec<i64>> = pairs.iter().map(|(x, y)| y.iter().zip(x).map(|(a, b)| a - b).collect()).collect();
    let vals = green_many(family, d, &disp, size, tol, 1)?;
    Ok(GreenTable {
        d,
        l: match size {
            GreenSize::Torus { l } => Some(*l),
            GreenSize::Limit { .. } => None,
        },
        abs_j: family.total(d, 1e-12)?.0,
        entries: pairs
            .iter()
            .zip(vals)
            .map(|((x, y), v)| GreenEntry {
                x: x.clone(),
                y: y.clone(),
                value: v.value,
            })
            .collect(),
    })
}

/// (1/|B_n|²) Σ_{x,y ∈ B_n} G(x,y) with B_n = {0..n}^d.
pub fn cesaro_green(family: &Family, d: usize, n_grid: &[usize], size: &GreenSize, tol: f64) -> Result<Vec<f64>> {
    let nmax = n_grid.iter().copied().max().unwrap_or(0) as i64;
    // G depends on the sorted |r_i| for these symmetric families
    let mut reps: Vec<Vec<i64>> = Vec::new();
    sorted_tuples(d, 0, nmax, &mut Vec::new(), &mut reps);
    let vals = green_many(family, d, &reps, size, tol, 1)?;
    let lookup = |r: &[i64]| -> f64 {
        let mut k: Vec<i64> = r.iter().map(|v| v.abs()).collect();
        k.sort_unstable();
        let i = reps.binary_search(&k).expect("displacement representative");
        vals[i].value
    };
    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let n = n as i64;
        let mut acc = Neumaier::new();
        for_box(d, n, |r| {
            let mult: f64 = r.iter().map(|&v| (n + 1 - v.abs()) as f64).product();
            acc.add(mult * lookup(r));
        });
        out.push(acc.value() / ((n + 1) as f64).powi(2 * d as i32));
    }
    Ok(out)
}

fn sorted_tuples(d: usize, lo: i64, hi: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
    if cur.len() == d {
        out.push(cur.clone());
        return;
    }
    for v in lo..=hi {
        cur.push(v);
        sorted_tuples(d, v, hi, cur, out);
        cur.pop();
    }
}

/// φ⁴ on the torus with pair coupling 2βJ^L_{xy} (ordered-pair convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPhi4 {
    pub spec: TorusSpec,
    pub params: SingleSiteParams,
    pub beta: f64,
}

impl TorusPhi4 {
    pub fn sampler(&self, tol: f64) -> Result<Phi4Sampler> {
        if !(self.beta >= 0.0) {
            return Err(Error::param("beta", "must be nonnegative"));
        }
        let k = torus_kernel(&self.spec, tol)?;
        let vol = self.spec.volume();
        let nz: Vec<(usize, f64)> = k.values.iter().copied().enumerate().filter(|&(i, v)| i != 0 && v != 0.0).collect();
        let nbrs = (0..vol)
            .map(|x| {
                let cx = self.spec.coords(x);
                nz.iter()
                    .map(|&(i, v)| {
                        let ci = self.spec.coords(i);
                        let y: Vec<i64> = cx.iter().zip(&ci).map(|(a, b)| a + b).collect();
                        (self.spec.index(&y), 2.0 * self.beta * v)
                    })
                    .collect()
            })
            .collect();
        Ok(Phi4Sampler::new(self.params, nbrs, vec![0.0; vol]))
    }
}

/// Runs a torus chain (Metropolis plus overrelaxation per sweep) and hands
/// the configuration to `obs` after every measurement sweep.
fn run_torus<F: FnMut(&[f64])>(m: &TorusPhi4, sweeps: usize, seed: u64, mut obs: F) -> Result<()> {
    if sweeps < 100 {
        return Err(Error::param("sweeps", "need at least 100"));
    }
    let mut s = m.sampler(1e-10)?;
    let mut rng = rng_from_seed(seed);
    let warm = sweeps / 5;
    s.warm_up(warm, &mut rng);
    for _ in warm..sweeps {
        s.metropolis_sweep(&mut rng);
        s.overrelax_sweep(&mut rng);
        obs(&s.phi);
    }
    Ok(())
}

/// Test vector entry: site coordinates and complex amplitude (re, im).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VEntry {
    pub site: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

/// δ₀ and the uniform vector on the box {0..side−1}^d.
pub fn delta_vector(d: usize) -> Vec<VEntry> {
    vec![VEntry {
        site: vec![0; d],
        re: 1.0,
        im: 0.0,
    }]
}

pub fn box_vector(d: usize, side: usize) -> Vec<VEntry> {
    let mut out = Vec::new();
    for_box(d, side as i64, |y| {
        if y.iter().all(|&v| v >= 0 && v < side as i64) {
            out.push(VEntry {
                site: y.to_vec(),
                re: 1.0,
                im: 0.0,
            });
        }
    });
    out
}

/// Σ v_x v̄_y ⟨φ_xφ_y⟩ ≤ (1/(2β|J|)) Σ v_x v̄_y G(x,y) + 3σ.
pub fn irb_check(model: &TorusPhi4, v: &[VEntry], sweeps: usize, seed: u64, green: &GreenSize) -> Result<CheckReport> {
    let spec = model.spec;
    if v.iter().any(|e| e.site.len() != spec.d) {
        return Err(Error::Contract("vector sites must have the torus dimension".into()));
    }
    if !(model.beta > 0.0) {
        return Err(Error::param("beta", "the bound needs β > 0"));
    }
    let inputs = json!({ "check": "irb", "model": model, "v": v, "sweeps": sweeps, "seed": seed, "green": green });
    let idx: Vec<usize> = v.iter().map(|e| spec.index(&e.site)).collect();
    let mut samples = Vec::with_capacity(sweeps);
    run_torus(model, sweeps, seed, |phi| {
        let (mut re, mut im) = (0.0, 0.0);
        for (e, &i) in v.iter().zip(&idx) {
            re += e.re * phi[i];
            im += e.im * phi[i];
        }
        samples.push(re * re + im * im);
    })?;
    let (lhs, se) = batch_means(&samples, 32);
    // Re Σ v_x v̄_y G(y−x); the imaginary part cancels since G is even
    let mut disp = Vec::new();
    let mut coef = Vec::new();
    for a in v {
        for b in v {
            disp.push(b.site.iter().zip(&a.site).map(|(p, q)| p - q).collect::<Vec<i64>>());
            coef.push(a.re * b.re + a.im * b.im);
        }
    }
    let gv = if disp.is_empty() {
        Vec::new()
    } else {
        green_many(&spec.family, spec.d, &disp, green, 1e-3, 1)?
    };
    let quad: f64 = gv.iter().zip(&coef).map(|(g, c)| c * g.value).sum();
    let gerr: f64 = gv.iter().zip(&coef).map(|(g, c)| c.abs() * g.error).sum();
    let abs_j = spec.family.total(spec.d, 1e-12)?.0;
    let rhs = quad / (2.0 * model.beta * abs_j);
    Ok(CheckReport::new(
        "Σ v v̄ ⟨φφ⟩ ≤ Σ v v̄ G/(2β|J|)",
        &inputs,
        Side::est(lhs, se),
        Side::exact(rhs),
        Relation::AtMost,
        CheckMode::MonteCarlo,
        gerr / (2.0 * model.beta * abs_j),
    )
    .with("abs_j", abs_j)
    .with("green_quadratic_form", quad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub beta: f64,
    pub l: usize,
    pub mean_abs_m: f64,
    pub m2: f64,
    pub binder: f64,
    pub stderr_mean_abs_m: f64,
    pub stderr_m2: f64,
    pub stderr_binder: f64,
    pub seed: u64,
}

pub const SCAN_HEADER: &str = "beta,L,mean_abs_m,m2,binder,stderr_mean_abs_m,stderr_m2,stderr_binder,seed";

impl ScanRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.beta, self.l, self.mean_abs_m, self.m2, self.binder, self.stderr_mean_abs_m, self.stderr_m2, self.stderr_binder, self.seed
        )
    }
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut s = String::from(SCAN_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

fn scan_point(base: &TorusPhi4, beta: f64, sweeps: usize, seed: u64) -> Result<ScanRow> {
    let m = TorusPhi4 { beta, ..*base };
    let vol = m.spec.volume() as f64;
    let (mut am, mut m2, mut m4) = (Vec::new(), Vec::new(), Vec::new());
    run_torus(&m, sweeps, seed, |phi| {
        let mag = phi.iter().sum::<f64>() / vol;
        let q = mag * mag;
        am.push(mag.abs());
        m2.push(q);
        m4.push(q * q);
    })?;
    let (ma, sa) = batch_means(&am, 32);
    let (q2, s2) = batch_means(&m2, 32);
    let (b, sb) = jackknife(&[batch_series(&m2, 32), batch_series(&m4, 32)], |x| x[1] / (x[0] * x[0]));
    Ok(ScanRow {
        beta,
        l: m.spec.l,
        mean_abs_m: ma,
        m2: q2,
        binder: b,
        stderr_mean_abs_m: sa,
        stderr_m2: s2,
        stderr_binder: sb,
        seed,
    })
}

/// ⟨|m|⟩, ⟨m²⟩ and ⟨m⁴⟩/⟨m²⟩² per β (sorted grid), one seeded chain each.
pub fn magnetisation_scan(base: &TorusPhi4, betas: &[f64], sweeps: usize, seed: u64, workers: usize) -> Result<Vec<ScanRow>> {
    if betas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("grid", "β grid must be sorted"));
    }
    let workers = workers.max(1);
    let mut out: Vec<Option<Result<ScanRow>>> = (0..betas.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..betas.len())
                        .step_by(workers)
                        .map(|i| (i, scan_point(base, betas[i], sweeps, derive_seed(seed, i as u64))))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("scan worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every β computed")).collect()
}

/// β at which B_small − B_large changes sign from negative to positive,
/// by linear interpolation. Both scans must share the β grid. Near β = 0
/// both ratios sit at the Gaussian value and noise can flip the sign, so
/// the crossing closest to the ordered side is taken.
pub fn binder_crossing(small: &[ScanRow], large: &[ScanRow]) -> Option<f64> {
    if small.len() != large.len() || small.iter().zip(large).any(|(a, b)| a.beta != b.beta) {
        return None;
    }
    let diff: Vec<(f64, f64)> = small.iter().zip(large).map(|(a, b)| (a.beta, a.binder - b.binder)).collect();
    diff.windows(2).rev().find_map(|w| {
        let ((b0, d0), (b1, d1)) = (w[0], w[1]);
        (d0 <= 0.0 && d1 > 0.0).then(|| b0 + (b1 - b0) * (-d0) / (d1 - d0))
    })
}

/// Largest drop of ⟨|m|⟩ between consecutive β in units of the combined σ.
pub fn worst_magnetisation_drop(rows: &[ScanRow]) -> f64 {
    rows.windows(2)
        .map(|w| {
            let s = w[0].stderr_mean_abs_m.hypot(w[1].stderr_mean_abs_m).max(1e-300);
            (w[0].mean_abs_m - w[1].mean_abs_m) / s
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NN: Family = Family::NearestNeighbour;

    #[test]
    fn characteristic_examples() {
        assert_eq!(step_characteristic(&NN, 3, &[0.0; 3], 1e-12).unwrap(), 1.0);
        assert!((step_characteristic(&NN, 3, &[PI; 3], 1e-12).unwrap() + 1.0).abs() < 1e-15);
        assert!((step_characteristic(&NN, 2, &[PI / 2.0, 0.0], 1e-12).unwrap() - 0.5).abs() < 1e-15);
        let e = Family::Exponential { mu: 1.0, c: 1.0 };
        assert!((step_characteristic(&e, 2, &[0.0, 0.0], 1e-12).unwrap() - 1.0).abs() < 1e-14);
        for k in 0..20 {
            let p = [0.3 * k as f64, -0.17 * k as f64];
            assert!(step_characteristic(&e, 2, &p, 1e-10).unwrap().abs() <= 1.0 + 1e-14);
        }
    }

    #[test]
    fn nearest_neighbour_kernel_is_one_image() {
        let s = TorusSpec::new(3, 4, NN).unwrap();
        let k = torus_kernel(&s, 1e-12).unwrap();
        assert_eq!(k.tail, 0.0);
        assert_eq!(k.total(), 6.0);
        assert_eq!(k.values[s.index(&[1, 0, 0])], 1.0);
        assert_eq!(k.values[s.index(&[-1, 0, 0])], 1.0);
        assert_eq!(k.values[s.index(&[1, 1, 0])], 0.0);
        assert!(TorusSpec::new(3, 5, NN).is_err());
    }

    #[test]
    fn tails_dominate_the_doubled_cutoff() {
        for (f, d, l) in [
            (Family::Exponential { mu: 0.7, c: 1.0 }, 2usize, 8usize),
            (Family::PowerLaw { alpha: 1.0, c: 1.0 }, 1, 8),
            (Family::PowerLaw { alpha: 1.5, c: 0.5 }, 2, 6),
        ] {
            let s = TorusSpec::new(d, l, f).unwrap();
            let k = torus_kernel(&s, 1e-4).unwrap();
            let twice = kernel_with_cutoff(&s, 2 * k.cutoff);
            let excluded: f64 = twice.iter().zip(&k.values).map(|(a, b)| a - b).sum();
            assert!(excluded >= -1e-15 && excluded <= k.tail, "{f:?}: {excluded} vs {}", k.tail);
            assert!(k.tail <= 1e-4);
        }
    }

    #[test]
    fn kernel_characteristic_matches_direct_sum() {
        let s = TorusSpec::new(2, 6, Family::Exponential { mu: 1.2, c: 2.0 }).unwrap();
        let k = torus_kernel(&s, 1e-13).unwrap();
        let dh = k.characteristic();
        assert!((dh[0] - 1.0).abs() < 1e-14);
        for i in [1usize, 7, 14, 35] {
            let p: Vec<f64> = s.coords(i).iter().map(|&c| 2.0 * PI * c as f64 / 6.0).collect();
            let direct = step_characteristic(&s.family, 2, &p, 1e-13).unwrap();
            assert!((dh[i] - direct).abs() < 1e-10, "{i}: {} vs {direct}", dh[i]);
        }
    }

    #[test]
    fn recurrent_limit_is_an_error() {
        assert!(matches!(
            green_function(&NN, 1, &[0], &[0], &GreenSize::limit(), 1e-3),
            Err(Error::Divergence(_))
        ));
        assert!(matches!(
            green_function(&NN, 2, &[0, 0], &[0, 0], &GreenSize::limit(), 1e-3),
            Err(Error::Divergence(_))
        ));
        let p = Family::PowerLaw { alpha: 0.5, c: 1.0 };
        assert!(p.is_transient(1));
    }

    #[test]
    fn green_symmetry_and_translation() {
        let sz = GreenSize::Torus { l: 8 };
        let a = green_function(&NN, 3, &[0, 1, 2], &[3, 1, 0], &sz, 1e-12).unwrap().value;
        let b = green_function(&NN, 3, &[3, 1, 0], &[0, 1, 2], &sz, 1e-12).unwrap().value;
        let c = green_function(&NN, 3, &[0, 0, 0], &[3, 0, -2], &sz, 1e-12).unwrap().value;
        assert!((a - b).abs() <= 1e-12 * a.abs());
        assert!((a - c).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn green_values_do_not_depend_on_workers() {
        let r = vec![vec![0, 0, 0], vec![1, 2, 0]];
        let a = torus_green_values(&NN, 3, 8, &r, 1e-12, 1).unwrap();
        let b = torus_green_values(&NN, 3, 8, &r, 1e-12, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn green_in_one_dimension_on_a_torus() {
        // ring of L sites: (1/L)Σ_{k≠0} 1/(1−cos(2πk/L)) = (L²−1)/(6L)
        for l in [4usize, 8, 16] {
            let g = green_function(&NN, 1, &[0], &[0], &GreenSize::Torus { l }, 1e-12).unwrap().value;
            let want = ((l * l - 1) as f64) / (6.0 * l as f64);
            assert!((g - want).abs() < 1e-10 * want, "{l}: {g} vs {want}");
        }
    }

    #[test]
    fn cesaro_examples() {
        let sz = GreenSize::Torus { l: 16 };
        let c = cesaro_green(&NN, 3, &[0, 1, 2, 3], &sz, 1e-12).unwrap();
        let g0 = green_function(&NN, 3, &[0; 3], &[0; 3], &sz, 1e-12).unwrap().value;
        assert!((c[0] - g0).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[1] < w[0]), "{c:?}");
        // brute-force double sum for n = 1
        let pts = box_vector(3, 2);
        let mut acc = 0.0;
        for a in &pts {
            for b in &pts {
                acc += green_function(&NN, 3, &a.site, &b.site, &sz, 1e-12).unwrap().value;
            }
        }
        assert!((acc / 64.0 - c[1]).abs() < 1e-12);
    }

    #[test]
    fn scan_is_deterministic_and_sorted() {
        let base = TorusPhi4 {
            spec: TorusSpec::new(2, 4, NN).unwrap(),
            params: SingleSiteParams::new(1.0, 0.0).unwrap(),
            beta: 0.0,
        };
        let betas = [0.0, 0.2];
        let a = magnetisation_scan(&base, &betas, 400, 5, 1).unwrap();
        let b = magnetisation_scan(&base, &betas, 400, 5, 2).unwrap();
        assert_eq!(scan_csv(&a), scan_csv(&b));
        assert!(a[0].mean_abs_m < 0.5);
        assert!(magnetisation_scan(&base, &[0.2, 0.1], 400, 5, 1).is_err());
        assert_eq!(scan_csv(&[]), format!("{SCAN_HEADER}\n"));
    }

    #[test]
    fn binder_crossing_interpolates() {
        let row = |beta: f64, l: usize, binder: f64| ScanRow {
            beta,
            l,
            mean_abs_m: 0.0,
            m2: 0.0,
            binder,
            stderr_mean_abs_m: 0.0,
            stderr_m2: 0.0,
            stderr_binder: 0.0,
            seed: 0,
        };
        let small = [row(0.1, 4, 2.5), row(0.2, 4, 1.8), row(0.3, 4, 1.4)];
        let large = [row(0.1, 8, 2.8), row(0.2, 8, 1.6), row(0.3, 8, 1.1)];
        let b = binder_crossing(&small, &large).unwrap();
        assert!((b - (0.1 + 0.1 * 0.3 / 0.5)).abs() < 1e-12);
    }

    #[test]
    fn irb_trivial_vector() {
        let m = TorusPhi4 {
            spec: TorusSpec::new(2, 4, NN).unwrap(),
            params: SingleSiteParams::new(1.0, 0.0).unwrap(),
            beta: 0.1,
        };
        let r = irb_check(&m, &[], 200, 1, &GreenSize::Torus { l: 4 }).unwrap();
        assert_eq!(r.lhs.value, 0.0);
        assert_eq!(r.rhs.value, 0.0);
    }
}
