//! Reference φ⁴ correlations: tensor Gauss–Legendre quadrature on tiny
//! graphs, Metropolis Monte Carlo on small ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Phi4Model, SingleSiteParams};
use crate::numeric::gauss_legendre;
use crate::rng::rng_from_seed;
use crate::sampler::Phi4Sampler;
use crate::stats::{batch_series, jackknife, EstimateWithError};

pub const MAX_QUADRATURE_VERTICES: usize = 4;
pub const N_BATCHES: usize = 32;
pub const MIN_SWEEPS: usize = 1000;

/// Exterior spins held at η, coupled to interior x through J_ext[x][k].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryField {
    pub j_ext: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRequest {
    pub model: Phi4Model,
    /// A_x per vertex
    pub a: Vec<u32>,
    pub boundary: Option<BoundaryField>,
}

impl CorrelationRequest {
    pub fn new(model: Phi4Model, a: Vec<u32>) -> Result<Self> {
        if a.len() != model.len() {
            return Err(Error::Contract("moment must be supported inside the graph".into()));
        }
        Ok(CorrelationRequest { model, a, boundary: None })
    }

    pub fn with_boundary(mut self, b: BoundaryField) -> Self {
        self.boundary = Some(b);
        self
    }

    /// Field with the boundary folded in: h'_x = h_x + Σ_k J_ext[x][k] η_k.
    pub fn effective_field(&self) -> Vec<f64> {
        let mut h = self.model.h.clone();
        if let Some(b) = &self.boundary {
            for (x, hx) in h.iter_mut().enumerate() {
                *hx += b.j_ext[x].iter().zip(&b.eta).map(|(j, e)| j * e).sum::<f64>();
            }
        }
        h
    }

    /// The equivalent request with the boundary absorbed into the field.
    pub fn folded(&self) -> CorrelationRequest {
        let mut model = self.model.clone();
        model.h = self.effective_field();
        CorrelationRequest {
            model,
            a: self.a.clone(),
            boundary: None,
        }
    }
}

fn domain_half_width(p: &SingleSiteParams, beta: f64, row_sum: f64, hmax: f64, order: u32, tol: f64) -> f64 {
    let a_eff = p.a - beta * row_sum;
    let k = order as f64;
    let logf = |t: f64| k * t.max(1e-300).ln() - p.g * t.powi(4) - a_eff * t * t + beta * hmax * t;
    let mut peak = f64::NEG_INFINITY;
    let mut t = 0.0;
    while t < 50.0 {
        peak = peak.max(logf(t));
        t += 0.01;
    }
    let cut = -(tol / 10.0).ln() + 25.0;
    let mut tm = 1.0f64;
    loop {
        let slope = 4.0 * p.g * tm.powi(3) + 2.0 * a_eff * tm - beta * hmax - k / tm;
        if logf(tm) < peak - cut && slope > 0.0 {
            return tm;
        }
        tm *= 1.1;
    }
}

struct Grid {
    x: Vec<f64>,
    w: Vec<f64>,
}

fn composite_grid(t: f64, panels: usize, q: usize) -> Grid {
    let (gx, gw) = gauss_legendre(q);
    let h = 2.0 * t / panels as f64;
    let mut x = Vec::with_capacity(panels * q);
    let mut w = Vec::with_capacity(panels * q);
    for p in 0..panels {
        let lo = -t + p as f64 * h;
        for (xi, wi) in gx.iter().zip(&gw) {
            x.push(lo + 0.5 * h * (xi + 1.0));
            w.push(0.5 * h * wi);
        }
    }
    Grid { x, w }
}

/// (numerator, |numerator|, denominator) of ⟨φ_A⟩ on one tensor grid.
fn tensor_sums(req: &CorrelationRequest, h: &[f64], grid: &Grid) -> (f64, f64, f64) {
    let n = req.model.len();
    let m = grid.x.len();
    let p = req.model.params;
    let beta = req.model.beta;
    let site: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            grid.x
                .iter()
                .zip(&grid.w)
                .map(|(&x, &w)| w * (p.log_density(x) + beta * h[v] * x).exp())
                .collect()
        })
        .collect();
    let mono: Vec<Vec<f64>> = (0..n).map(|v| grid.x.iter().map(|&x| x.powi(req.a[v] as i32)).collect()).collect();
    let mut pair: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; n]; n];
    for u in 0..n {
        for v in u + 1..n {
            let k = beta * req.model.graph.j[u][v];
            if k != 0.0 {
                let mut e = vec![0.0; m * m];
                for i in 0..m {
                    for j in 0..m {
                        e[i * m + j] = (k * grid.x[i] * grid.x[j]).exp();
                    }
                }
                pair[u][v] = Some(e);
            }
        }
    }
    let mut idx = vec![0usize; n];
    let mut acc = (0.0, 0.0, 0.0);
    recurse(0, 1.0, 1.0, &mut idx, &site, &mono, &pair, m, &mut acc);
    acc
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    v: usize,
    w: f64,
    mo: f64,
    idx: &mut [usize],
    site: &[Vec<f64>],
    mono: &[Vec<f64>],
    pair: &[Vec<Option<Vec<f64>>>],
    m: usize,
    acc: &mut (f64, f64, f64),
) {
    let n = site.len();
    if v == n {
        acc.0 += w * mo;
        acc.1 += w * mo.abs();
        acc.2 += w;
        return;
    }
    for i in 0..m {
        let mut wi = w * site[v][i];
        for u in 0..v {
            if let Some(e) = &pair[u][v] {
                wi *= e[idx[u] * m + i];
            }
        }
        idx[v] = i;
        recurse(v + 1, wi, mo * mono[v][i], idx, site, mono, pair, m, acc);
    }
}

/// ⟨φ_A⟩ by tensor-product composite Gauss–Legendre with panel doubling.
pub fn correlate_quadrature(req: &CorrelationRequest, tol: f64) -> Result<f64> {
    let n = req.model.len();
    if n > MAX_QUADRATURE_VERTICES {
        return Err(Error::Capacity(format!(
            "quadrature supports ≤ {MAX_QUADRATURE_VERTICES} vertices, got {n}"
        )));
    }
    if !(req.model.beta >= 0.0) {
        return Err(Error::param("beta", "must be nonnegative"));
    }
    if req.a.len() != n {
        return Err(Error::Contract("moment must be supported inside the graph".into()));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let h = req.effective_field();
    let row_sum = (0..n)
        .map(|x| req.model.graph.j[x].iter().map(|j| j.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let hmax = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let order = req.a.iter().copied().max().unwrap_or(0);
    let t = domain_half_width(&req.model.params, req.model.beta, row_sum, hmax, order, tol);
    let q = 16;
    let mut panels = match n {
        1 => 4,
        2 => 3,
        3 => 2,
        _ => 2,
    };
    let max_nodes = match n {
        1 => 4096,
        2 => 768,
        3 => 192,
        _ => 96,
    };
    let mut prev: Option<f64> = None;
    loop {
        let grid = composite_grid(t, panels, q);
        let (num, abs, den) = tensor_sums(req, &h, &grid);
        let val = num / den;
        let scale = abs / den;
        if let Some(pv) = prev {
            if (val - pv).abs() <= tol * scale.max(f64::MIN_POSITIVE) || panels * q * 2 > max_nodes {
                return Ok(val);
            }
        }
        prev = Some(val);
        panels *= 2;
    }
}

fn sampler_for(req: &CorrelationRequest) -> Phi4Sampler {
    let n = req.model.len();
    let beta = req.model.beta;
    let h = req.effective_field();
    let nbrs = (0..n)
        .map(|x| {
            (0..n)
                .filter(|&y| y != x && req.model.graph.j[x][y] != 0.0)
                .map(|y| (y, beta * req.model.graph.j[x][y]))
                .collect()
        })
        .collect();
    Phi4Sampler::new(req.model.params, nbrs, h.iter().map(|v| beta * v).collect())
}

fn phi_a(phi: &[f64], a: &[u32]) -> f64 {
    phi.iter().zip(a).map(|(p, &k)| p.powi(k as i32)).product()
}

/// Runs a seeded chain and records `obs` after every measurement sweep.
fn run_chain<F: FnMut(&[f64])>(req: &CorrelationRequest, sweeps: usize, seed: u64, mut obs: F) -> Result<()> {
    if sweeps < MIN_SWEEPS {
        return Err(Error::param("sweeps", format!("need at least {MIN_SWEEPS}")));
    }
    if !(req.model.beta >= 0.0) {
        return Err(Error::param("beta", "must be nonnegative"));
    }
    let mut rng = rng_from_seed(seed);
    let mut s = sampler_for(req);
    let warm = sweeps / 5;
    s.warm_up(warm, &mut rng);
    for _ in warm..sweeps {
        s.metropolis_sweep(&mut rng);
        obs(&s.phi);
    }
    Ok(())
}

/// Metropolis estimate of ⟨φ_A⟩ with batch-means error.
pub fn correlate_mc(req: &CorrelationRequest, sweeps: usize, seed: u64) -> Result<EstimateWithError> {
    let mut xs = Vec::with_capacity(sweeps);
    run_chain(req, sweeps, seed, |phi| xs.push(phi_a(phi, &req.a)))?;
    let (value, stderr) = crate::stats::batch_means(&xs, N_BATCHES);
    Ok(EstimateWithError {
        value,
        stderr,
        n_samples: xs.len() as u64,
        seed,
    })
}

/// Local functions admitted to FKG checks. All tags but `Square` are
/// nondecreasing in every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalFn {
    Constant { c: f64 },
    Coordinate { x: usize },
    Clamp { x: usize, lo: f64, hi: f64 },
    Indicator { x: usize, c: f64 },
    Square { x: usize },
}

impl LocalFn {
    pub fn is_monotone(&self) -> bool {
        match self {
            LocalFn::Square { .. } => false,
            LocalFn::Clamp { lo, hi, .. } => lo <= hi,
            _ => true,
        }
    }

    pub fn eval(&self, phi: &[f64]) -> f64 {
        match *self {
            LocalFn::Constant { c } => c,
            LocalFn::Coordinate { x } => phi[x],
            LocalFn::Clamp { x, lo, hi } => phi[x].clamp(lo, hi),
            LocalFn::Indicator { x, c } => {
                if phi[x] >= c {
                    1.0
                } else {
                    0.0
                }
            }
            LocalFn::Square { x } => phi[x] * phi[x],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkgEstimate {
    pub fg: EstimateWithError,
    pub f: EstimateWithError,
    pub g: EstimateWithError,
    /// ⟨fg⟩ − ⟨f⟩⟨g⟩ with jackknife error
    pub cov: EstimateWithError,
}

pub fn fkg_pair_estimate(req: &CorrelationRequest, f: LocalFn, g: LocalFn, sweeps: usize, seed: u64) -> Result<FkgEstimate> {
    if !f.is_monotone() || !g.is_monotone() {
        return Err(Error::Contract("FKG functions must be nondecreasing".into()));
    }
    let (mut fs, mut gs, mut fgs) = (Vec::new(), Vec::new(), Vec::new());
    run_chain(req, sweeps, seed, |phi| {
        let (a, b) = (f.eval(phi), g.eval(phi));
        fs.push(a);
        gs.push(b);
        fgs.push(a * b);
    })?;
    let n = fs.len() as u64;
    let series = vec![batch_series(&fgs, N_BATCHES), batch_series(&fs, N_BATCHES), batch_series(&gs, N_BATCHES)];
    let mk = |i: usize| {
        let (v, e) = jackknife(&series, |m| m[i]);
        EstimateWithError {
            value: v,
            stderr: e,
            n_samples: n,
            seed,
        }
    };
    let (cv, ce) = jackknife(&series, |m| m[0] - m[1] * m[2]);
    Ok(FkgEstimate {
        fg: mk(0),
        f: mk(1),
        g: mk(2),
        cov: EstimateWithError {
            value: cv,
            stderr: ce,
            n_samples: n,
            seed,
        },
    })
}
