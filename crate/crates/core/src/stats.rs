//! Small statistics helpers shared by the estimators.

use statrs::distribution::{ContinuousCDF, Normal};

/// Sample mean and its standard error (`sd / √n`, unbiased variance).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Self-normalized weighted mean `Σwx / Σw` with the delta-method standard
/// error `(Σ w̄² (x − m)²)^{1/2}`, `w̄ = w / Σw`.
pub fn weighted_mean_se(weights: &[f64], xs: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = weights.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() / total;
    let var: f64 = weights
        .iter()
        .zip(xs)
        .map(|(w, x)| {
            let nw = w / total;
            nw * nw * (x - mean) * (x - mean)
        })
        .sum();
    (mean, var.sqrt())
}

/// `log(Σ exp(x_i))` with a max shift.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log((1/n) Σ exp(x_i))` with a max shift.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Leave-one-out jackknife of [`log_mean_exp`]: `(estimate, std error)`.
pub fn jackknife_log_mean_exp(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let est = log_mean_exp(xs);
    if n < 2 {
        return (est, 0.0);
    }
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let loo: Vec<f64> = e
        .iter()
        .map(|ei| m + ((s - ei).max(0.0) / (n - 1) as f64).ln())
        .collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() * (n - 1) as f64 / n as f64;
    (est, var.sqrt())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Correlation between sorted samples and standard normal quantiles at
/// plotting positions `(i + ½)/n`.
pub fn normal_quantile_correlation(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 3 {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let std = Normal::standard();
    let q: Vec<f64> = (0..n)
        .map(|i| std.inverse_cdf((i as f64 + 0.5) / n as f64))
        .collect();
    pearson(&sorted, &q)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Ordinary least squares `y ≈ a + b x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len().min(ys.len());
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs[..n].iter().zip(&ys[..n]).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = xs[..n]
            .iter()
            .zip(&ys[..n])
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        intercept,
        slope,
        slope_se,
    }
}
