//! Standard normal CDF, quantile, and centered orthant probabilities.
//!
//! The CDF goes through Cody's rational Chebyshev approximations for
//! erf/erfc, accurate to a few ulps over the whole double range. The
//! quantile is a rational approximation polished by one Halley step against
//! the CDF, giving absolute accuracy far below the 1e-9 contract on
//! p ∈ [1e-15, 1 − 1e-15]; accuracy deep in the tail matters because
//! inversion sampling is exercised exactly there.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::RandomStream;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_286_9;
const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_502_4;

// Cody's coefficients for erf on |x| <= 0.46875.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
// erfc on 0.46875 < |x| <= 4.
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
// erfc on |x| > 4.
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

/// exp(-y^2) with the argument split so the rounding of y*y does not leak
/// into the exponent for large y.
#[inline]
fn exp_neg_sq(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        let ysq = if y > 1e-300 { y * y } else { 0.0 };
        let mut xnum = ERF_A[4] * ysq;
        let mut xden = ysq;
        for i in 0..3 {
            xnum = (xnum + ERF_A[i]) * ysq;
            xden = (xden + ERF_B[i]) * ysq;
        }
        x * (xnum + ERF_A[3]) / (xden + ERF_B[3])
    } else {
        let ec = erfc(y);
        let v = 1.0 - ec;
        if x < 0.0 {
            -v
        } else {
            v
        }
    }
}

pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf(x);
    }
    let result = if y <= 4.0 {
        let mut xnum = ERF_C[8] * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + ERF_C[i]) * y;
            xden = (xden + ERF_D[i]) * y;
        }
        exp_neg_sq(y) * (xnum + ERF_C[7]) / (xden + ERF_D[7])
    } else if y < 26.6 {
        let ysq = 1.0 / (y * y);
        let mut xnum = ERF_P[5] * ysq;
        let mut xden = ysq;
        for i in 0..4 {
            xnum = (xnum + ERF_P[i]) * ysq;
            xden = (xden + ERF_Q[i]) * ysq;
        }
        let r = ysq * (xnum + ERF_P[4]) / (xden + ERF_Q[4]);
        exp_neg_sq(y) * (FRAC_1_SQRT_PI - r) / y
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal distribution function Φ(x).
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail Φ̄(x) = 1 − Φ(x), accurate to full relative precision for
/// large positive x.
#[inline]
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

// Acklam's rational approximation for the normal quantile.
const NQ_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const NQ_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const NQ_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const NQ_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const NQ_P_LOW: f64 = 0.02425;

/// Quantile for 0 < p <= 0.5 (raw rational approximation, ~1e-9 relative).
fn quantile_lower_half_raw(p: f64) -> f64 {
    if p < NQ_P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((NQ_C[0] * q + NQ_C[1]) * q + NQ_C[2]) * q + NQ_C[3]) * q + NQ_C[4]) * q + NQ_C[5])
            / ((((NQ_D[0] * q + NQ_D[1]) * q + NQ_D[2]) * q + NQ_D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((NQ_A[0] * r + NQ_A[1]) * r + NQ_A[2]) * r + NQ_A[3]) * r + NQ_A[4]) * r + NQ_A[5]) * q
            / (((((NQ_B[0] * r + NQ_B[1]) * r + NQ_B[2]) * r + NQ_B[3]) * r + NQ_B[4]) * r + 1.0)
    }
}

/// Internal quantile without the domain check; caller guarantees 0 < p < 1.
#[inline]
pub(crate) fn std_normal_quantile_unchecked(p: f64) -> f64 {
    // Fold into the lower half; 1 - p is exact for p >= 0.5.
    let (pl, sign) = if p > 0.5 { (1.0 - p, -1.0) } else { (p, 1.0) };
    let mut x = quantile_lower_half_raw(pl);
    // One Halley step against the CDF. x <= 0 here so cdf(x) keeps full
    // relative precision; skipped only where exp(x²/2) would overflow.
    if x > -37.0 {
        let e = std_normal_cdf(x) - pl;
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    sign * x
}

/// Inverse of the standard normal distribution function.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs p in (0,1), got {p}"
        )));
    }
    Ok(std_normal_quantile_unchecked(p))
}

/// Default draw count for the Monte Carlo orthant branch; keeps the binomial
/// standard error at or below 5e-4.
pub const ORTHANT_MC_DRAWS: usize = 1_000_000;
const ORTHANT_MC_SEED: u64 = 0x4f52_5448;

/// P(Y_i > 0 for every kept dimension i) for Y ~ N(0, cov).
///
/// Dimensions flagged in `drop` impose no constraint and are removed before
/// computing. Zero kept dimensions give 1, one gives 1/2, two use the arcsine
/// formula, three or more fall back to Monte Carlo on a fixed stream.
pub fn centered_orthant_prob(cov: &Matrix, drop: &[bool]) -> Result<f64> {
    centered_orthant_prob_with(cov, drop, ORTHANT_MC_DRAWS)
}

pub fn centered_orthant_prob_with(cov: &Matrix, drop: &[bool], mc_draws: usize) -> Result<f64> {
    if cov.rows() != cov.cols() || cov.rows() != drop.len() {
        return Err(Error::DimensionMismatch(
            "orthant covariance and drop mask disagree".into(),
        ));
    }
    let keep: Vec<usize> = (0..drop.len()).filter(|&i| !drop[i]).collect();
    match keep.len() {
        0 => Ok(1.0),
        1 => {
            let v = cov.get(keep[0], keep[0]);
            if v < -1e-10 {
                return Err(Error::NotPositiveSemiDefinite);
            }
            Ok(0.5)
        }
        2 => {
            let v0 = cov.get(keep[0], keep[0]);
            let v1 = cov.get(keep[1], keep[1]);
            if v0 < -1e-10 || v1 < -1e-10 {
                return Err(Error::NotPositiveSemiDefinite);
            }
            if v0 <= 0.0 || v1 <= 0.0 {
                // a kept dimension carries no mass above zero boundary issues;
                // treat it like an independent half-space
                return Ok(0.25);
            }
            let r = (cov.get(keep[0], keep[1]) / (v0 * v1).sqrt()).clamp(-1.0, 1.0);
            Ok(0.25 + r.asin() / std::f64::consts::TAU)
        }
        m => {
            let sub = symmetrized(&cov.principal_submatrix(&keep));
            let factor = psd_factor(&sub)?;
            let mut stream = RandomStream::new(ORTHANT_MC_SEED, 0);
            let mut g = vec![0.0f64; m];
            let mut hits = 0u64;
            for _ in 0..mc_draws {
                stream.fill_std_normal(&mut g);
                let mut all_pos = true;
                for i in 0..m {
                    let mut z = 0.0;
                    for k in 0..=i.min(factor.cols() - 1) {
                        z += factor.get(i, k) * g[k];
                    }
                    if z <= 0.0 {
                        all_pos = false;
                        break;
                    }
                }
                if all_pos {
                    hits += 1;
                }
            }
            Ok(hits as f64 / mc_draws as f64)
        }
    }
}

fn symmetrized(m: &Matrix) -> Matrix {
    let n = m.rows();
    let mut s = m.clone();
    for i in 0..n {
        for j in 0..n {
            s.set(i, j, 0.5 * (m.get(i, j) + m.get(j, i)));
        }
    }
    s
}

/// Lower-triangular-ish factor F with F Fᵀ = m, tolerating PSD-singular
/// inputs via the eigendecomposition.
fn psd_factor(m: &Matrix) -> Result<Matrix> {
    if let Ok(l) = linalg::cholesky(m) {
        return Ok(l);
    }
    let (w, v) = linalg::symmetric_eigen(m)?;
    let scale = w.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
    if w.iter().any(|&x| x < -1e-8 * scale) {
        return Err(Error::NotPositiveSemiDefinite);
    }
    let n = m.rows();
    let mut f = Matrix::zeros(n, n);
    for j in 0..n {
        let s = w[j].max(0.0).sqrt();
        for i in 0..n {
            f.set(i, j, v.get(i, j) * s);
        }
    }
    Ok(f)
}
