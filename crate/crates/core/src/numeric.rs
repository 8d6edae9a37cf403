//! Small numerical kernels: compensated summation, log-factorials,
//! adaptive Gauss–Kronrod and Gauss–Legendre rules.

/// Neumaier compensated accumulator. Addition order is the caller's order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = Neumaier::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// ln(n!) table, grown on demand.
#[derive(Debug, Clone)]
pub struct LnFact {
    table: Vec<f64>,
}

impl Default for LnFact {
    fn default() -> Self {
        Self::new(64)
    }
}

impl LnFact {
    pub fn new(n: usize) -> Self {
        let mut t = LnFact { table: vec![0.0] };
        t.ensure(n);
        t
    }

    pub fn ensure(&mut self, n: usize) {
        let mut acc = Neumaier::new();
        acc.add(*self.table.last().unwrap());
        for k in self.table.len()..=n {
            acc.add((k as f64).ln());
            self.table.push(acc.value());
        }
    }

    pub fn get(&self, n: usize) -> f64 {
        self.table[n]
    }

    pub fn ln_binom(&self, n: usize, k: usize) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

/// ln(n!) without a table (direct product; use for small n).
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// log(Σ exp(x_i)) with a fixed summation order.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + neumaier_sum(xs.iter().map(|x| (x - m).exp())).ln()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: (kronrod estimate, |kronrod − gauss|).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive GK15 on [a,b] with panel bisection until the summed error
/// estimate falls below `abs_tol`. Panels are processed in a fixed order.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    let mut panels = vec![(a, b, gk15(f, a, b))];
    for _ in 0..2000 {
        let err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol {
            break;
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.2 .1 > best.1 { (i, p.2 .1) } else { best });
        let (lo, hi, _) = panels[idx];
        let mid = 0.5 * (lo + hi);
        panels[idx] = (lo, mid, gk15(f, lo, mid));
        panels.insert(idx + 1, (mid, hi, gk15(f, mid, hi)));
    }
    neumaier_sum(panels.iter().map(|p| p.2 .0))
}

/// Gauss–Legendre nodes and weights on [−1,1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Extrapolate values v(s) to s = 0 from the last two (linear) and last
/// three (quadratic) grid points. Returns (quadratic or linear estimate,
/// |difference| as error estimate).
pub fn richardson_zero(s: &[f64], vals: &[f64]) -> (f64, f64) {
    let k = s.len().min(vals.len());
    assert!(k >= 2, "need at least two grid points");
    let (s1, s2, v1, v2) = (s[k - 2], s[k - 1], vals[k - 2], vals[k - 1]);
    let two = (v2 * s1 - v1 * s2) / (s1 - s2);
    if k == 2 {
        return (two, (two - v2).abs());
    }
    let (s0, v0) = (s[k - 3], vals[k - 3]);
    let l0 = s1 * s2 / ((s0 - s1) * (s0 - s2));
    let l1 = s0 * s2 / ((s1 - s0) * (s1 - s2));
    let l2 = s0 * s1 / ((s2 - s0) * (s2 - s1));
    let three = v0 * l0 + v1 * l1 + v2 * l2;
    (three, (three - two).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancellation() {
        let s = neumaier_sum([1.0, 1e100, 1.0, -1e100]);
        assert_eq!(s, 2.0);
    }

    #[test]
    fn ln_fact_matches_direct() {
        let t = LnFact::new(30);
        for n in 0..=30u64 {
            assert!((t.get(n as usize) - ln_factorial(n)).abs() < 1e-12);
        }
        assert!((t.ln_binom(10, 3) - 120f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gk15_integrates_polynomials_exactly() {
        let (v, _) = gk15(&|x: f64| x.powi(10), -1.0, 1.0);
        assert!((v - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_gaussian() {
        let v = integrate_adaptive(&|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-14);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_weights() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            if n >= 2 {
                assert!((m2 - 2.0 / 3.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn log_sum_exp_basic() {
        let v = log_sum_exp(&[0.0, 0.0]);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
