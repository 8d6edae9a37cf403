//! Single-site Metropolis (plus reflection overrelaxation) for the measure
//! ∝ Π_x e^{−gφ_x⁴−aφ_x²} · exp(Σ_{x<y} K_{xy}φ_xφ_y + Σ_x b_xφ_x).

use rand::Rng as _;

use crate::model::SingleSiteParams;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct Phi4Sampler {
    pub params: SingleSiteParams,
    /// neighbours with pair coefficient K_{xy}
    pub nbrs: Vec<Vec<(usize, f64)>>,
    /// linear coefficient b_x
    pub field: Vec<f64>,
    pub phi: Vec<f64>,
    pub step: f64,
    or_kappa: f64,
    accepted: u64,
    proposed: u64,
}

impl Phi4Sampler {
    pub fn new(params: SingleSiteParams, nbrs: Vec<Vec<(usize, f64)>>, field: Vec<f64>) -> Self {
        let n = nbrs.len();
        let or_kappa = params.a.abs() + 2.0 * params.g.sqrt() + 0.5;
        Phi4Sampler {
            params,
            nbrs,
            field,
            phi: vec![0.0; n],
            step: 1.0,
            or_kappa,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    #[inline]
    fn local_b(&self, x: usize) -> f64 {
        let mut b = self.field[x];
        for &(y, k) in &self.nbrs[x] {
            b += k * self.phi[y];
        }
        b
    }

    #[inline]
    fn delta_action(&self, x: usize, new: f64, b: f64) -> f64 {
        let old = self.phi[x];
        let (o2, n2) = (old * old, new * new);
        self.params.g * (n2 * n2 - o2 * o2) + self.params.a * (n2 - o2) - b * (new - old)
    }

    pub fn metropolis_sweep(&mut self, rng: &mut Rng) {
        for x in 0..self.len() {
            let b = self.local_b(x);
            let new = self.phi[x] + self.step * (2.0 * rng.random::<f64>() - 1.0);
            let ds = self.delta_action(x, new, b);
            self.proposed += 1;
            if ds <= 0.0 || rng.random::<f64>() < (-ds).exp() {
                self.phi[x] = new;
                self.accepted += 1;
            }
        }
    }

    /// Reflection φ → 2c − φ about a point c independent of φ_x, accepted by
    /// Metropolis so the quartic term is handled exactly.
    pub fn overrelax_sweep(&mut self, rng: &mut Rng) {
        for x in 0..self.len() {
            let b = self.local_b(x);
            let c = b / (2.0 * self.or_kappa);
            let new = 2.0 * c - self.phi[x];
            let ds = self.delta_action(x, new, b);
            if ds <= 0.0 || rng.random::<f64>() < (-ds).exp() {
                self.phi[x] = new;
            }
        }
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            return 0.0;
        }
        self.accepted as f64 / self.proposed as f64
    }

    pub fn reset_counters(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }

    /// Warm-up with step adaptation towards acceptance in [0.3, 0.6].
    pub fn warm_up(&mut self, sweeps: usize, rng: &mut Rng) {
        let chunk = 10;
        let mut done = 0;
        while done < sweeps {
            self.reset_counters();
            let m = chunk.min(sweeps - done);
            for _ in 0..m {
                self.metropolis_sweep(rng);
            }
            done += m;
            let acc = self.acceptance();
            if acc > 0.6 {
                self.step *= 1.2;
            } else if acc < 0.3 {
                self.step /= 1.2;
            }
        }
        self.reset_counters();
    }
}
