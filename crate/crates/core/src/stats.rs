use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl EstimateWithError {
    pub fn exact(value: f64) -> Self {
        EstimateWithError {
            value,
            stderr: 0.0,
            n_samples: 0,
            seed: 0,
        }
    }
}

/// Mean and standard error from batch means over `n_batches` contiguous batches.
pub fn batch_means(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let nb = n_batches.min(n).max(1);
    if nb < 2 {
        return (mean, 0.0);
    }
    let bs = n / nb;
    let means: Vec<f64> = (0..nb).map(|b| xs[b * bs..(b + 1) * bs].iter().sum::<f64>() / bs as f64).collect();
    let m = means.iter().sum::<f64>() / nb as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nb - 1) as f64;
    (mean, (var / nb as f64).sqrt())
}

/// Split a series into `nb` equal batches of batch means (tail dropped).
pub fn batch_series(xs: &[f64], nb: usize) -> Vec<f64> {
    let nb = nb.min(xs.len()).max(1);
    let bs = xs.len() / nb;
    (0..nb).map(|b| xs[b * bs..(b + 1) * bs].iter().sum::<f64>() / bs.max(1) as f64).collect()
}

/// Delete-one jackknife over batches of a function of several batch-mean
/// series. Returns (estimate on full means, jackknife standard error).
pub fn jackknife<F: Fn(&[f64]) -> f64>(series: &[Vec<f64>], f: F) -> (f64, f64) {
    let k = series.len();
    let nb = series[0].len();
    let full: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / nb as f64).collect();
    let est = f(&full);
    if nb < 2 {
        return (est, 0.0);
    }
    let mut reps = Vec::with_capacity(nb);
    for leave in 0..nb {
        let m: Vec<f64> = (0..k)
            .map(|i| {
                let s = &series[i];
                (s.iter().sum::<f64>() - s[leave]) / (nb - 1) as f64
            })
            .collect();
        reps.push(f(&m));
    }
    let mr = reps.iter().sum::<f64>() / nb as f64;
    let var = reps.iter().map(|r| (r - mr).powi(2)).sum::<f64>() * (nb - 1) as f64 / nb as f64;
    (est, var.sqrt())
}

/// Binomial proportion with its standard error.
pub fn proportion(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}
