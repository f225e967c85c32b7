//! Small statistics helpers shared by the test suites. Not part of the
//! public API surface.

use crate::linalg::{CorrelationMatrix, Matrix};
use crate::rng::RandomStream;

/// Random positive definite correlation matrix from a Gaussian Gram
/// construction.
pub fn random_correlation(d: usize, stream: &mut RandomStream) -> CorrelationMatrix {
    let mut g = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            g.set(i, j, stream.next_std_normal());
        }
    }
    let mut s = g.matmul(&g.transpose());
    for i in 0..d {
        let v = s.get(i, i) + 0.1 * d as f64;
        s.set(i, i, v);
    }
    let sd: Vec<f64> = (0..d).map(|i| s.get(i, i).sqrt()).collect();
    let mut c = Matrix::identity(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = s.get(i, j) / (sd[i] * sd[j]);
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    CorrelationMatrix::new(c).expect("Gram correlation is positive definite")
}

/// Two-sided Kolmogorov–Smirnov statistic of a sorted sample against U(0,1).
pub fn ks_statistic_uniform(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &u) in sorted.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - u;
        let lo = u - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// KS statistic of a sorted sample against an arbitrary CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let u = cdf(x);
        let hi = (i as f64 + 1.0) / n - u;
        let lo = u - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic two-sided KS critical value at the given significance level.
pub fn ks_critical_value(n: usize, level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (denominator n − 1).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Kendall rank correlation, O(n²) — fine for test-sized samples.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = (xs[i] - xs[j]).signum();
            let b = (ys[i] - ys[j]).signum();
            let s = a * b;
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    (concordant - discordant) as f64 / (n * (n - 1) / 2) as f64
}

/// Least-squares line fit. Returns (slope, intercept).
pub fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
