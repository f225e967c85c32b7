//! Hill-based estimation of the marginal tail indices, the pairwise minimum
//! tail index γ, the implied Gaussian correlations, and their asymptotic
//! confidence intervals.
//!
//! The pipeline per pair (j, l): Hill estimates α̂_j, α̂_l from the margins,
//! a Hill estimate γ̂ from the componentwise minima, then ρ̂ as the feasible
//! root of γ̂·ρ² − 2√(α̂_j α̂_l)·ρ + (α̂_j + α̂_l − γ̂) = 0. The root only
//! identifies ρ below the bound min(√(α̂_l/α̂_j), √(α̂_j/α̂_l)); estimates at
//! or past it are clamped and flagged.
//!
//! Confidence intervals come from the joint normal limit of the Hill
//! estimators of the reciprocal indices: √k (H − 1/α) → N(0, 1/α²) per
//! margin, with cross terms given by the pairwise tail-dependence limits
//! (which vanish in the interior regime). The delta-method variance ν for ρ̂
//! is taken with the gradient in the reciprocal parameters — equivalently
//! ∇h diag(α₁², α₂², γ²) ∇h on the index scale — which is the convention
//! both validated by simulation and consistent with the Hill limit. The
//! literal index-scale product is exposed for comparison only.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::SampleMatrix;
use crate::normal;
use crate::qp::{classify_regime, regime_bound, Regime, REGIME_TOL};

/// One Hill fit: the estimate of the reciprocal index and its derived
/// quantities.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    /// Number of top order statistics used.
    pub k: usize,
    /// H_{k,n}: the Hill estimate of the reciprocal index.
    pub hill: f64,
    /// 1/H: the index estimate.
    pub index: f64,
    /// Asymptotic standard error of the index, index/√k.
    pub se_index: f64,
    /// Two-sided interval at `ci_level`.
    pub ci: (f64, f64),
    pub ci_level: f64,
    /// Count of strictly positive observations the fit was computed from.
    pub n_used: usize,
}

/// Hill estimate from the top `k` log-ratios of the positive part of `data`.
///
/// Non-positive and non-finite observations are discarded first; `k` must
/// leave at least k+1 usable points. A zero log-ratio sum (top k+1 order
/// statistics all equal) is a `DegenerateTail` error.
pub fn hill_estimate(data: &[f64], k: usize) -> Result<TailFit> {
    let mut z: Vec<f64> = data
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    let n_used = z.len();
    if k < 1 || k + 1 > n_used {
        return Err(Error::InsufficientData(format!(
            "hill estimate needs k+1 <= positive count ({n_used}), got k = {k}"
        )));
    }
    z.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let pivot = z[k];
    let mut sum = 0.0;
    for &v in &z[..k] {
        sum += (v / pivot).ln();
    }
    let hill = sum / k as f64;
    if hill == 0.0 {
        return Err(Error::DegenerateTail);
    }
    let index = 1.0 / hill;
    let se_index = index / (k as f64).sqrt();
    let ci = alpha_ci_parts(index, k, 0.95)?;
    Ok(TailFit {
        k,
        hill,
        index,
        se_index,
        ci,
        ci_level: 0.95,
        n_used,
    })
}

fn alpha_ci_parts(index: f64, k: usize, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must be in (0,1), got {level}"
        )));
    }
    let z = normal::std_normal_quantile((1.0 + level) / 2.0)?;
    let half = z * index / (k as f64).sqrt();
    Ok(((index - half).max(0.0), index + half))
}

/// Interval for the index at an arbitrary level, intersected with (0, ∞).
pub fn alpha_ci(fit: &TailFit, level: f64) -> Result<(f64, f64)> {
    alpha_ci_parts(fit.index, fit.k, level)
}

/// Componentwise minima of two distinct columns of a sample.
pub fn pairwise_minima(data: &SampleMatrix, j: usize, l: usize) -> Result<Vec<f64>> {
    if j == l {
        return Err(Error::Domain("pairwise minima need two distinct columns".into()));
    }
    if j >= data.d() || l >= data.d() {
        return Err(Error::DimensionMismatch("column index out of range".into()));
    }
    Ok((0..data.n())
        .map(|r| data.value(r, j).min(data.value(r, l)))
        .collect())
}

/// The tail index of the pairwise minimum as a function of the true
/// parameters: the interior closed form below the identifiability bound,
/// max(α₁, α₂) at or past it.
pub fn gamma_theoretical(a1: f64, a2: f64, rho: f64) -> f64 {
    match classify_regime(a1, a2, rho) {
        Regime::Interior => (a1 + a2 - 2.0 * rho * (a1 * a2).sqrt()) / (1.0 - rho * rho),
        _ => a1.max(a2),
    }
}

/// Invert γ̂ for ρ̂. Returns the estimate and a flag marking whether any
/// clamping was applied (γ̂ at or below max(α̂₁, α̂₂), or a negative
/// discriminant from rounding).
pub fn rho_from_indices(a1: f64, a2: f64, gamma: f64) -> Result<(f64, bool)> {
    for (name, v) in [("alpha1", a1), ("alpha2", a2), ("gamma", gamma)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if gamma <= a1.max(a2) {
        return Ok((regime_bound(a1, a2), true));
    }
    let m = (a1 * a2).sqrt();
    let d = a1 * a2 + gamma * gamma - gamma * (a1 + a2);
    let (d, clamped) = if d < 0.0 { (0.0, true) } else { (d, false) };
    let rho = (m - d.sqrt()) / gamma;
    Ok((rho.clamp(-1.0 + REGIME_TOL, 1.0 - REGIME_TOL), clamped))
}

/// The second root of the quadratic, excluded by the feasibility argument;
/// exposed so the exclusion is checkable.
pub fn rho_rejected_root(a1: f64, a2: f64, gamma: f64) -> f64 {
    let m = (a1 * a2).sqrt();
    let d = (a1 * a2 + gamma * gamma - gamma * (a1 + a2)).max(0.0);
    (m + d.sqrt()) / gamma
}

/// Tail scale estimate θ̂ = (k/n)·X_(k)^α̂ on the positive part of the data.
pub fn theta_estimate(data: &[f64], k: usize, alpha_hat: f64) -> Result<f64> {
    let mut z: Vec<f64> = data
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    let n_used = z.len();
    if k < 1 || k + 1 > n_used {
        return Err(Error::InsufficientData(format!(
            "theta estimate needs k+1 <= positive count ({n_used}), got k = {k}"
        )));
    }
    z.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(k as f64 / n_used as f64 * z[k - 1].powf(alpha_hat))
}

/// Which pairwise tail-dependence limit to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RKind {
    /// Between the two margins.
    Margins,
    /// Between the first margin and the minimum.
    FirstWithMin,
    /// Between the second margin and the minimum.
    SecondWithMin,
}

/// The limiting tail-dependence values. Between the margins the limit is
/// identically zero; between a margin and the minimum it is piecewise in ρ
/// against √(α/γ), evaluated with γ = [`gamma_theoretical`] so the boundary
/// and saturated cases are reachable.
pub fn r_function(kind: RKind, w1: f64, w2: f64, a1: f64, a2: f64, rho: f64) -> Result<f64> {
    for (name, v) in [("alpha1", a1), ("alpha2", a2)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Domain(format!("rho must be in (-1,1), got {rho}")));
    }
    if w1 < 0.0 || w2 < 0.0 {
        return Err(Error::Domain("weights must be nonnegative".into()));
    }
    let gamma = gamma_theoretical(a1, a2, rho);
    let piecewise = |threshold: f64, w: f64| {
        if rho < threshold - REGIME_TOL {
            0.0
        } else if rho <= threshold + REGIME_TOL {
            w / 2.0
        } else {
            w
        }
    };
    Ok(match kind {
        RKind::Margins => 0.0,
        RKind::FirstWithMin => piecewise((a2 / gamma).sqrt(), w1),
        RKind::SecondWithMin => piecewise((a1 / gamma).sqrt(), w2),
    })
}

/// Asymptotic covariance Γ(q) of √k₁(H₁, H₂, H₁₂) on the reciprocal scale,
/// plus the bias vector μ(q) for caller-supplied second-order data
/// (λ_j, δ_j); λ = 0 is the regime the confidence intervals assume.
///
/// `q = (q₁, q₂, q₁₂)` are the limits k₁/k_j, so q₁ = 1.
pub fn asymptotic_covariance(
    a1: f64,
    a2: f64,
    rho: f64,
    q: [f64; 3],
    lambda: [f64; 3],
    delta: [f64; 3],
) -> Result<([[f64; 3]; 3], [f64; 3])> {
    if classify_regime(a1, a2, rho) != Regime::Interior {
        return Err(Error::Regime(format!(
            "covariance formula needs the interior regime, got rho = {rho} with bound {}",
            regime_bound(a1, a2)
        )));
    }
    if (q[0] - 1.0).abs() > 1e-12 || q.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "q must be positive with q1 = 1, got {q:?}"
        )));
    }
    let gamma = gamma_theoretical(a1, a2, rho);
    let r12 = r_function(RKind::Margins, q[0], q[1], a1, a2, rho)?;
    let r1m = r_function(RKind::FirstWithMin, q[0], q[2], a1, a2, rho)?;
    let r2m = r_function(RKind::SecondWithMin, q[1], q[2], a1, a2, rho)?;
    let g = [
        [1.0 / (a1 * a1), r12 / (a1 * a2), r1m / (a1 * gamma)],
        [r12 / (a1 * a2), 1.0 / (a2 * a2), r2m / (a2 * gamma)],
        [r1m / (a1 * gamma), r2m / (a2 * gamma), 1.0 / (gamma * gamma)],
    ];
    let mut mu = [0.0; 3];
    for j in 0..3 {
        if delta[j] > 0.0 {
            return Err(Error::Domain("second-order indices must be <= 0".into()));
        }
        mu[j] = q[j].sqrt() * lambda[j] / (1.0 - delta[j]);
    }
    Ok((g, mu))
}

/// Gradient of ρ = h(α₁, α₂, γ) with respect to (α₁, α₂, γ).
pub fn rho_gradient(a1: f64, a2: f64, gamma: f64) -> Result<[f64; 3]> {
    let d = a1 * a2 + gamma * gamma - gamma * (a1 + a2);
    if d <= 0.0 {
        return Err(Error::Numerical(
            "discriminant vanishes; gradient of the rho estimate is singular".into(),
        ));
    }
    let m = (a1 * a2).sqrt();
    let sd = d.sqrt();
    let dh_da1 = (a2 / (2.0 * m) - (a2 - gamma) / (2.0 * sd)) / gamma;
    let dh_da2 = (a1 / (2.0 * m) - (a1 - gamma) / (2.0 * sd)) / gamma;
    let dh_dg = -(2.0 * gamma - a1 - a2) / (2.0 * sd * gamma) - (m - sd) / (gamma * gamma);
    Ok([dh_da1, dh_da2, dh_dg])
}

/// Delta-method variance ν of √k₁(ρ̂ − ρ) in the reciprocal-gradient
/// convention: ∇h diag(α₁², α₂², γ²) ∇h.
pub fn rho_asymptotic_variance(a1: f64, a2: f64, gamma: f64) -> Result<f64> {
    let g = rho_gradient(a1, a2, gamma)?;
    Ok(a1 * a1 * g[0] * g[0] + a2 * a2 * g[1] * g[1] + gamma * gamma * g[2] * g[2])
}

/// The literal index-scale product ∇h Γ(0) ∇h, exposed for comparison; not
/// used for confidence intervals.
pub fn rho_asymptotic_variance_literal(a1: f64, a2: f64, gamma: f64) -> Result<f64> {
    let g = rho_gradient(a1, a2, gamma)?;
    Ok(g[0] * g[0] / (a1 * a1) + g[1] * g[1] / (a2 * a2) + g[2] * g[2] / (gamma * gamma))
}

/// Confidence interval for ρ at the estimates (α̂₁, α̂₂, γ̂), clipped to
/// (−1, bound).
pub fn rho_ci(a1: f64, a2: f64, gamma: f64, k1: usize, level: f64) -> Result<(f64, f64)> {
    for (name, v) in [("alpha1", a1), ("alpha2", a2), ("gamma", gamma)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(level > 0.0 && level < 1.0) || k1 < 1 {
        return Err(Error::Domain("need k1 >= 1 and level in (0,1)".into()));
    }
    if gamma <= a1.max(a2) {
        return Err(Error::Regime(format!(
            "gamma = {gamma} does not exceed max(alpha) = {}; rho is not identified",
            a1.max(a2)
        )));
    }
    let (rho, _) = rho_from_indices(a1, a2, gamma)?;
    let nu = rho_asymptotic_variance(a1, a2, gamma)?;
    let z = normal::std_normal_quantile((1.0 + level) / 2.0)?;
    let half = z * (nu / k1 as f64).sqrt();
    let bound = regime_bound(a1, a2);
    Ok(((rho - half).max(-1.0), (rho + half).min(bound)))
}

/// How k is chosen from the usable observation count.
#[derive(Debug, Clone, PartialEq)]
pub enum KPolicy {
    /// k = ⌈f·n⌉ clamped into [10, n−1].
    Fraction(f64),
    /// Explicit k, must satisfy 1 ≤ k < n.
    Fixed(usize),
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Fraction(0.05)
    }
}

impl KPolicy {
    pub fn k_for(&self, n_used: usize) -> Result<usize> {
        if n_used < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 positive observations, got {n_used}"
            )));
        }
        match *self {
            KPolicy::Fraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Domain(format!(
                        "k fraction must be in (0,1), got {f}"
                    )));
                }
                let raw = (f * n_used as f64).ceil() as usize;
                Ok(raw.max(10).min(n_used - 1))
            }
            KPolicy::Fixed(k) => {
                if k < 1 || k >= n_used {
                    return Err(Error::InsufficientData(format!(
                        "k = {k} outside 1..{n_used}"
                    )));
                }
                Ok(k)
            }
        }
    }

    /// Parse `"1000"` (fixed) or `"5%"` (fraction of the usable count).
    pub fn parse(text: &str) -> Result<KPolicy> {
        let t = text.trim();
        if let Some(pct) = t.strip_suffix('%') {
            let v: f64 = pct
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("bad k percentage '{text}'")))?;
            Ok(KPolicy::Fraction(v / 100.0))
        } else {
            let v: usize = t
                .parse()
                .map_err(|_| Error::Domain(format!("bad k value '{text}'")))?;
            Ok(KPolicy::Fixed(v))
        }
    }
}

impl std::fmt::Display for KPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KPolicy::Fraction(v) => write!(f, "fraction:{v}"),
            KPolicy::Fixed(k) => write!(f, "fixed:{k}"),
        }
    }
}

/// Per-margin result inside a [`FitReport`].
#[derive(Debug, Clone)]
pub struct MarginFit {
    pub col: usize,
    pub n_dropped: usize,
    pub n_used: usize,
    pub k: usize,
    pub fit: Option<TailFit>,
    pub theta: Option<f64>,
    pub error: Option<String>,
}

impl Serialize for MarginFit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("MarginFit", 9)?;
        st.serialize_field("col", &self.col)?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("alpha", &self.fit.as_ref().map(|f| f.index))?;
        st.serialize_field("se", &self.fit.as_ref().map(|f| f.se_index))?;
        st.serialize_field("ci", &self.fit.as_ref().map(|f| f.ci))?;
        st.serialize_field("theta", &self.theta)?;
        st.serialize_field("n_dropped", &self.n_dropped)?;
        st.serialize_field("n_used", &self.n_used)?;
        st.serialize_field("error", &self.error)?;
        st.end()
    }
}

/// Per-pair result inside a [`FitReport`].
#[derive(Debug, Clone)]
pub struct PairwiseFit {
    pub j: usize,
    pub l: usize,
    pub k: usize,
    /// Jointly positive row count the pair was fit on.
    pub n_used: usize,
    pub gamma_fit: Option<TailFit>,
    pub rho_hat: Option<f64>,
    pub regime: Option<Regime>,
    pub rho_ci: Option<(f64, f64)>,
    pub clamped: bool,
    /// Set when ρ̂ is within 0.02 of the identifiability bound.
    pub near_boundary: bool,
    pub error: Option<String>,
}

impl Serialize for PairwiseFit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("PairwiseFit", 12)?;
        st.serialize_field("j", &self.j)?;
        st.serialize_field("l", &self.l)?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("n_used", &self.n_used)?;
        st.serialize_field("gamma", &self.gamma_fit.as_ref().map(|f| f.index))?;
        st.serialize_field("ci", &self.gamma_fit.as_ref().map(|f| f.ci))?;
        st.serialize_field("rho", &self.rho_hat)?;
        st.serialize_field("rho_ci", &self.rho_ci)?;
        st.serialize_field("regime", &self.regime.map(|r| r.to_string()))?;
        st.serialize_field("clamped", &self.clamped)?;
        st.serialize_field("near_boundary", &self.near_boundary)?;
        st.serialize_field("error", &self.error)?;
        st.end()
    }
}

/// The full d-dimensional fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub n: usize,
    pub k_policy: String,
    pub margins: Vec<MarginFit>,
    pub pairs: Vec<PairwiseFit>,
    pub sigma_raw: Vec<Vec<f64>>,
    pub sigma_psd: Vec<Vec<f64>>,
    /// Whether the projection changed the raw matrix.
    pub psd_changed: bool,
}

impl FitReport {
    /// Convenience view of the pair estimates as a matrix-indexed lookup.
    pub fn pair(&self, j: usize, l: usize) -> Option<&PairwiseFit> {
        self.pairs
            .iter()
            .find(|p| (p.j == j && p.l == l) || (p.j == l && p.l == j))
    }
}

/// Projection of a symmetric unit-diagonal matrix to the positive
/// semidefinite cone: eigenvalues below zero are lifted to 1e-8, the matrix
/// is reassembled and rescaled back to unit diagonal. Returns the projected
/// matrix and whether anything changed.
pub fn nearest_unit_diagonal_psd(m: &Matrix) -> Result<(Matrix, bool)> {
    let (w, v) = linalg::symmetric_eigen(m)?;
    let min_w = w.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_w >= 0.0 {
        return Ok((m.clone(), false));
    }
    let n = m.rows();
    let mut rebuilt = Matrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += v.get(a, k) * w[k].max(1e-8) * v.get(b, k);
            }
            rebuilt.set(a, b, s);
        }
    }
    let sd: Vec<f64> = (0..n).map(|i| rebuilt.get(i, i).sqrt()).collect();
    let mut out = Matrix::identity(n);
    for a in 0..n {
        for b in (a + 1)..n {
            let r = rebuilt.get(a, b) / (sd[a] * sd[b]);
            out.set(a, b, r);
            out.set(b, a, r);
        }
    }
    Ok((out, true))
}

/// Fit every margin and every pair of a multivariate sample.
///
/// Columns are supplied as vectors of equal length; non-finite and
/// non-positive entries are dropped column-wise for the marginal fits and
/// pairwise-complete (both entries positive) for the pair fits. Failures are
/// recorded per margin/pair instead of aborting the whole fit.
pub fn fit_pgc(cols: &[Vec<f64>], policy: &KPolicy) -> Result<FitReport> {
    fit_pgc_at_level(cols, policy, 0.95)
}

/// [`fit_pgc`] with an explicit confidence level for every interval.
pub fn fit_pgc_at_level(cols: &[Vec<f64>], policy: &KPolicy, level: f64) -> Result<FitReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must be in (0,1), got {level}"
        )));
    }
    let d = cols.len();
    if d == 0 {
        return Err(Error::EmptyData);
    }
    let n = cols[0].len();
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch("columns of unequal length".into()));
    }
    if n < 50 {
        return Err(Error::InsufficientData(format!(
            "fit needs at least 50 rows, got {n}"
        )));
    }

    let usable = |v: f64| v.is_finite() && v > 0.0;

    let mut margins = Vec::with_capacity(d);
    for (col, data) in cols.iter().enumerate() {
        let n_used = data.iter().filter(|&&v| usable(v)).count();
        let n_dropped = n - n_used;
        let outcome = policy
            .k_for(n_used)
            .and_then(|k| hill_estimate(data, k).map(|f| (k, f)));
        match outcome {
            Ok((k, mut fit)) => {
                if level != fit.ci_level {
                    fit.ci = alpha_ci(&fit, level).unwrap_or(fit.ci);
                    fit.ci_level = level;
                }
                let theta = theta_estimate(data, k, fit.index).ok();
                margins.push(MarginFit {
                    col,
                    n_dropped,
                    n_used,
                    k,
                    fit: Some(fit),
                    theta,
                    error: None,
                });
            }
            Err(e) => margins.push(MarginFit {
                col,
                n_dropped,
                n_used,
                k: 0,
                fit: None,
                theta: None,
                error: Some(e.to_string()),
            }),
        }
    }

    let mut pairs = Vec::with_capacity(d * (d - 1) / 2);
    let mut sigma_raw = Matrix::identity(d);
    for j in 0..d {
        for l in (j + 1)..d {
            let pair = fit_pair(cols, j, l, &margins, policy, level);
            if let Some(rho) = pair.rho_hat {
                sigma_raw.set(j, l, rho);
                sigma_raw.set(l, j, rho);
            }
            pairs.push(pair);
        }
    }

    let (sigma_psd, psd_changed) = nearest_unit_diagonal_psd(&sigma_raw)?;
    Ok(FitReport {
        n,
        k_policy: policy.to_string(),
        margins,
        pairs,
        sigma_raw: sigma_raw.to_rows(),
        sigma_psd: sigma_psd.to_rows(),
        psd_changed,
    })
}

fn fit_pair(
    cols: &[Vec<f64>],
    j: usize,
    l: usize,
    margins: &[MarginFit],
    policy: &KPolicy,
    level: f64,
) -> PairwiseFit {
    let failed = |n_used: usize, msg: String| PairwiseFit {
        j,
        l,
        k: 0,
        n_used,
        gamma_fit: None,
        rho_hat: None,
        regime: None,
        rho_ci: None,
        clamped: false,
        near_boundary: false,
        error: Some(msg),
    };

    // jointly positive rows only
    let minima: Vec<f64> = cols[j]
        .iter()
        .zip(&cols[l])
        .filter(|(a, b)| a.is_finite() && **a > 0.0 && b.is_finite() && **b > 0.0)
        .map(|(a, b)| a.min(*b))
        .collect();
    let n_used = minima.len();

    let (a_j, a_l) = match (&margins[j].fit, &margins[l].fit) {
        (Some(fj), Some(fl)) => (fj.index, fl.index),
        _ => return failed(n_used, "a marginal fit failed".into()),
    };
    let k = match policy.k_for(n_used) {
        Ok(k) => k,
        Err(e) => return failed(n_used, e.to_string()),
    };
    let mut gamma_fit = match hill_estimate(&minima, k) {
        Ok(f) => f,
        Err(e) => return failed(n_used, e.to_string()),
    };
    if level != gamma_fit.ci_level {
        gamma_fit.ci = alpha_ci(&gamma_fit, level).unwrap_or(gamma_fit.ci);
        gamma_fit.ci_level = level;
    }
    let gamma = gamma_fit.index;
    let (rho, clamped) = match rho_from_indices(a_j, a_l, gamma) {
        Ok(v) => v,
        Err(e) => return failed(n_used, e.to_string()),
    };
    let regime = if clamped {
        Regime::Degenerate
    } else {
        classify_regime(a_j, a_l, rho)
    };
    let near_boundary = (rho - regime_bound(a_j, a_l)).abs() < 0.02;
    let k1 = margins[j].k.max(1);
    let ci = if regime == Regime::Interior && !clamped {
        rho_ci(a_j, a_l, gamma, k1, level).ok()
    } else {
        None
    };
    PairwiseFit {
        j,
        l,
        k,
        n_used,
        gamma_fit: Some(gamma_fit),
        rho_hat: Some(rho),
        regime: Some(regime),
        rho_ci: ci,
        clamped,
        near_boundary,
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CorrelationMatrix;
    use crate::marginals::MarginalSpec;
    use crate::model::PgcModel;
    use crate::rng::RandomStream;

    #[test]
    fn hill_hand_value() {
        let e = std::f64::consts::E;
        let fit = hill_estimate(&[e * e, e, 1.0], 2).unwrap();
        assert!((fit.hill - 1.5).abs() < 1e-14);
        assert!((fit.index - 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(fit.n_used, 3);
    }

    #[test]
    fn hill_scale_invariance() {
        let data: Vec<f64> = (1..=500).map(|i| (i as f64).powf(-0.5) * 10.0).collect();
        let base = hill_estimate(&data, 100).unwrap();
        // powers of two rescale exactly
        for &c in &[0.25f64, 2.0, 1024.0] {
            let scaled: Vec<f64> = data.iter().map(|v| v * c).collect();
            let fit = hill_estimate(&scaled, 100).unwrap();
            assert_eq!(fit.hill, base.hill, "scale {c}");
        }
        // arbitrary positive scales agree to rounding
        for &c in &[3.0f64, 0.7, 17.3] {
            let scaled: Vec<f64> = data.iter().map(|v| v * c).collect();
            let fit = hill_estimate(&scaled, 100).unwrap();
            assert!((fit.hill - base.hill).abs() < 1e-12, "scale {c}");
        }
    }

    #[test]
    fn hill_degenerate_and_insufficient() {
        assert!(matches!(
            hill_estimate(&[5.0, 5.0, 5.0, 5.0], 2),
            Err(Error::DegenerateTail)
        ));
        assert!(matches!(
            hill_estimate(&[1.0, 2.0], 2),
            Err(Error::InsufficientData(_))
        ));
        // non-positive values are dropped before counting
        assert!(matches!(
            hill_estimate(&[-1.0, 0.0, 3.0, 2.0], 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn hill_on_pareto_sample_recovers_index() {
        let spec = MarginalSpec::pareto(2.0).unwrap();
        let mut stream = RandomStream::new(42, 0);
        let data: Vec<f64> = (0..10_000)
            .map(|_| spec.quantile(stream.next_uniform()).unwrap())
            .collect();
        let fit = hill_estimate(&data, 500).unwrap();
        let band = 4.0 * 2.0 / 500f64.sqrt();
        assert!(
            (fit.index - 2.0).abs() <= band,
            "index {} outside 4-SE band {band}",
            fit.index
        );
    }

    #[test]
    fn alpha_ci_arithmetic() {
        let fit = TailFit {
            k: 400,
            hill: 0.5,
            index: 2.0,
            se_index: 0.1,
            ci: (0.0, 0.0),
            ci_level: 0.95,
            n_used: 10_000,
        };
        let (lo, hi) = alpha_ci(&fit, 0.95).unwrap();
        assert!((lo - 1.804).abs() < 1e-3);
        assert!((hi - 2.196).abs() < 1e-3);
        // level -> 0 collapses to the point estimate
        let (lo, hi) = alpha_ci(&fit, 1e-12).unwrap();
        assert!((lo - 2.0).abs() < 1e-9 && (hi - 2.0).abs() < 1e-9);
        // width shrinks like 1/sqrt(k)
        let wide = alpha_ci(&fit, 0.95).unwrap();
        let fit4 = TailFit { k: 1600, ..fit };
        let narrow = alpha_ci(&fit4, 0.95).unwrap();
        assert!(((wide.1 - wide.0) / (narrow.1 - narrow.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn minima_basics() {
        let m = SampleMatrix::from_columns(&[vec![3.0, 7.0], vec![5.0, 2.0]]).unwrap();
        assert_eq!(pairwise_minima(&m, 0, 1).unwrap(), vec![3.0, 2.0]);
        assert_eq!(
            pairwise_minima(&m, 1, 0).unwrap(),
            pairwise_minima(&m, 0, 1).unwrap()
        );
        assert!(pairwise_minima(&m, 0, 0).is_err());
        assert!(pairwise_minima(&m, 0, 5).is_err());
    }

    #[test]
    fn gamma_theoretical_cases() {
        assert!((gamma_theoretical(2.0, 3.0, 0.0) - 5.0).abs() < 1e-14);
        assert!((gamma_theoretical(2.0, 3.0, 0.3) - 3.879457).abs() < 1e-6);
        assert!((gamma_theoretical(2.0, 3.0, 0.9) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rho_inversion_cases() {
        let (rho, clamped) = rho_from_indices(2.0, 3.0, 5.0).unwrap();
        assert!(rho.abs() < 1e-14);
        assert!(!clamped);

        let (rho, clamped) = rho_from_indices(2.0, 3.0, 3.879457).unwrap();
        assert!((rho - 0.3).abs() < 1e-5);
        assert!(!clamped);

        let (rho, clamped) = rho_from_indices(2.0, 3.0, 2.9).unwrap();
        assert!((rho - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(clamped);

        assert!(rho_from_indices(-2.0, 3.0, 5.0).is_err());
    }

    #[test]
    fn round_trip_identity_on_interior_grid() {
        for ia in 0..20 {
            for ib in 0..20 {
                let a1 = 0.5 + 4.5 * ia as f64 / 19.0;
                let a2 = 0.5 + 4.5 * ib as f64 / 19.0;
                let bound = regime_bound(a1, a2);
                for ir in 0..17 {
                    let rho = -0.95 + (bound - 0.02 + 0.95) * ir as f64 / 16.0;
                    if rho >= bound - 1e-6 {
                        continue;
                    }
                    let gamma = gamma_theoretical(a1, a2, rho);
                    // discriminant nonnegative everywhere in the interior
                    let d = a1 * a2 + gamma * gamma - gamma * (a1 + a2);
                    assert!(d >= -1e-12, "D < 0 at ({a1},{a2},{rho})");
                    let (back, clamped) = rho_from_indices(a1, a2, gamma).unwrap();
                    assert!(!clamped, "clamped at ({a1},{a2},{rho})");
                    assert!(
                        (back - rho).abs() <= 1e-10,
                        "round trip at ({a1},{a2},{rho}): {back}"
                    );
                    // the rejected root lies past the bound for rho >= 0
                    // (at it when a1 = a2, where the bound is 1 and 1 is
                    // already outside the open parameter range)
                    if rho >= 0.0 {
                        let root = rho_rejected_root(a1, a2, gamma);
                        if a1 == a2 {
                            assert!(root >= bound - 1e-12);
                        } else {
                            assert!(
                                root > bound,
                                "rejected root inside at ({a1},{a2},{rho})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn theta_estimate_cases() {
        // exact Pareto quantiles make the estimate exactly 1
        let n = 1000usize;
        let data: Vec<f64> = (1..=n).map(|i| (n as f64 / i as f64).sqrt()).collect();
        let theta = theta_estimate(&data, 100, 2.0).unwrap();
        assert!((theta - 1.0).abs() < 1e-10);

        // doubling the data scales theta by 2^alpha
        let doubled: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        let theta2 = theta_estimate(&doubled, 100, 2.0).unwrap();
        assert!((theta2 / theta - 4.0).abs() < 1e-9);

        // seeded Fréchet sample lands near θ = 1
        let spec = MarginalSpec::frechet(2.0, 0.0, 1.0).unwrap();
        let mut stream = RandomStream::new(7, 0);
        let sample: Vec<f64> = (0..10_000)
            .map(|_| spec.quantile(stream.next_uniform()).unwrap())
            .collect();
        let fit = hill_estimate(&sample, 500).unwrap();
        let th = theta_estimate(&sample, 500, fit.index).unwrap();
        assert!((0.6..=1.6).contains(&th), "theta {th}");
    }

    #[test]
    fn r_function_piecewise_values() {
        // interior point: all three limits vanish
        for kind in [RKind::Margins, RKind::FirstWithMin, RKind::SecondWithMin] {
            assert_eq!(r_function(kind, 0.7, 1.3, 2.0, 3.0, 0.3).unwrap(), 0.0);
        }
        // threshold √(α₂/γ) met exactly: half weight
        let rho = (2.0f64 / 3.0).sqrt();
        let v = r_function(RKind::FirstWithMin, 0.8, 1.0, 3.0, 2.0, rho).unwrap();
        assert_eq!(v, 0.4);
        // past the threshold: full weight
        let v = r_function(RKind::FirstWithMin, 0.8, 1.0, 3.0, 2.0, 0.9).unwrap();
        assert_eq!(v, 0.8);
        // the other margin couples when the ordering flips
        let v = r_function(RKind::SecondWithMin, 0.8, 1.1, 2.0, 3.0, 0.9).unwrap();
        assert_eq!(v, 1.1);
        assert!(r_function(RKind::Margins, 1.0, 1.0, 2.0, 3.0, 1.5).is_err());
    }

    #[test]
    fn covariance_diagonal_in_interior() {
        let (g, mu) = asymptotic_covariance(
            2.0,
            3.0,
            0.3,
            [1.0, 1.0, 1.0],
            [0.0; 3],
            [0.0, 0.0, 0.0],
        )
        .unwrap();
        let gamma = gamma_theoretical(2.0, 3.0, 0.3);
        assert!((g[0][0] - 0.25).abs() < 1e-14);
        assert!((g[1][1] - 1.0 / 9.0).abs() < 1e-14);
        assert!((g[2][2] - 1.0 / (gamma * gamma)).abs() < 1e-14);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert_eq!(g[a][b], 0.0);
                }
            }
        }
        assert_eq!(mu, [0.0; 3]);
        // nonzero second-order data feeds the bias term
        let (_, mu) = asymptotic_covariance(
            2.0,
            3.0,
            0.3,
            [1.0, 4.0, 1.0],
            [0.5, 0.5, 0.0],
            [-1.0, -1.0, 0.0],
        )
        .unwrap();
        assert!((mu[0] - 0.25).abs() < 1e-14);
        assert!((mu[1] - 0.5).abs() < 1e-14);
        assert!(asymptotic_covariance(2.0, 3.0, 0.9, [1.0; 3], [0.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fd = |a1: f64, a2: f64, g: f64| -> [f64; 3] {
            let h = |x: f64, y: f64, z: f64| {
                let d = x * y + z * z - z * (x + y);
                ((x * y).sqrt() - d.sqrt()) / z
            };
            let e = 1e-6;
            [
                (h(a1 + e, a2, g) - h(a1 - e, a2, g)) / (2.0 * e),
                (h(a1, a2 + e, g) - h(a1, a2 - e, g)) / (2.0 * e),
                (h(a1, a2, g + e) - h(a1, a2, g - e)) / (2.0 * e),
            ]
        };
        for &(a1, a2, rho) in &[
            (2.0, 3.0, 0.3),
            (2.0, 3.0, 0.0),
            (1.5, 4.0, -0.5),
            (3.0, 3.0, 0.6),
        ] {
            let gamma = gamma_theoretical(a1, a2, rho);
            let grad = rho_gradient(a1, a2, gamma).unwrap();
            let want = fd(a1, a2, gamma);
            for i in 0..3 {
                let rel = (grad[i] - want[i]).abs() / want[i].abs().max(1e-12);
                assert!(rel < 1e-4, "({a1},{a2},{rho})[{i}]: {} vs {}", grad[i], want[i]);
            }
        }
    }

    #[test]
    fn variance_conventions_differ() {
        let gamma = gamma_theoretical(2.0, 3.0, 0.3);
        let nu = rho_asymptotic_variance(2.0, 3.0, gamma).unwrap();
        let lit = rho_asymptotic_variance_literal(2.0, 3.0, gamma).unwrap();
        assert!(nu > 0.0 && lit > 0.0);
        assert!((nu / lit - 1.0).abs() > 0.5, "conventions coincide: {nu} vs {lit}");
    }

    #[test]
    fn rho_ci_cases() {
        // at rho = 0 the interval is symmetric about 0
        let (lo, hi) = rho_ci(2.0, 3.0, 5.0, 1000, 0.95).unwrap();
        assert!((lo + hi).abs() < 1e-12);
        assert!(hi > 0.0);

        // interior point covers the truth; width shrinks like 1/sqrt(k)
        let gamma = gamma_theoretical(2.0, 3.0, 0.3);
        let (lo, hi) = rho_ci(2.0, 3.0, gamma, 1000, 0.95).unwrap();
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo4, hi4) = rho_ci(2.0, 3.0, gamma, 4000, 0.95).unwrap();
        assert!(((hi - lo) / (hi4 - lo4) - 2.0).abs() < 1e-9);

        // degenerate estimates are refused
        assert!(matches!(
            rho_ci(2.0, 3.0, 2.9, 1000, 0.95),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn psd_projection_lifts_negative_eigenvalues() {
        // a deliberately indefinite "correlation" pattern
        let m = Matrix::from_rows(&[
            vec![1.0, 0.9, -0.9],
            vec![0.9, 1.0, 0.9],
            vec![-0.9, 0.9, 1.0],
        ])
        .unwrap();
        let (w, _) = linalg::symmetric_eigen(&m).unwrap();
        assert!(w.iter().cloned().fold(f64::INFINITY, f64::min) < 0.0);
        let (p, changed) = nearest_unit_diagonal_psd(&m).unwrap();
        assert!(changed);
        for i in 0..3 {
            assert_eq!(p.get(i, i), 1.0);
        }
        let (w, _) = linalg::symmetric_eigen(&p).unwrap();
        assert!(w.iter().all(|&x| x >= -1e-12));

        // an already-PSD matrix passes through untouched
        let ok = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let (p, changed) = nearest_unit_diagonal_psd(&ok).unwrap();
        assert!(!changed);
        assert_eq!(p, ok);
    }

    #[test]
    fn fit_recovers_simulated_pair() {
        let model = PgcModel::bivariate(
            MarginalSpec::pareto(2.0).unwrap(),
            MarginalSpec::pareto(3.0).unwrap(),
            0.3,
        )
        .unwrap();
        let sample = model.sample(10_000, &RandomStream::new(42, 0)).unwrap();
        let report = fit_pgc(&sample.columns(), &KPolicy::Fixed(1000)).unwrap();
        let m0 = report.margins[0].fit.as_ref().unwrap();
        let m1 = report.margins[1].fit.as_ref().unwrap();
        assert!((m0.index - 2.0).abs() < 0.3);
        assert!((m1.index - 3.0).abs() < 0.5);
        let pair = &report.pairs[0];
        assert!((pair.rho_hat.unwrap() - 0.3).abs() < 0.15);
        assert_eq!(pair.regime, Some(Regime::Interior));
        // round-trip identity inside the interior
        if !pair.clamped {
            let g = gamma_theoretical(m0.index, m1.index, pair.rho_hat.unwrap());
            assert!((g - pair.gamma_fit.as_ref().unwrap().index).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_identity_three_dim() {
        let model = PgcModel::new(
            vec![
                MarginalSpec::pareto(2.0).unwrap(),
                MarginalSpec::pareto(3.0).unwrap(),
                MarginalSpec::pareto(4.0).unwrap(),
            ],
            CorrelationMatrix::identity(3).unwrap(),
        )
        .unwrap();
        let sample = model.sample(100_000, &RandomStream::new(9, 0)).unwrap();
        let report = fit_pgc(&sample.columns(), &KPolicy::default()).unwrap();
        assert_eq!(report.pairs.len(), 3);
        for pair in &report.pairs {
            assert!(
                pair.rho_hat.unwrap().abs() <= 0.1,
                "pair ({}, {}): rho {}",
                pair.j,
                pair.l,
                pair.rho_hat.unwrap()
            );
        }
        assert!(!report.psd_changed || report.sigma_psd.len() == 3);
    }

    #[test]
    fn fit_isolates_constant_column() {
        let mut stream = RandomStream::new(3, 0);
        let spec = MarginalSpec::pareto(2.0).unwrap();
        let good: Vec<f64> = (0..1000)
            .map(|_| spec.quantile(stream.next_uniform()).unwrap())
            .collect();
        let constant = vec![7.0; 1000];
        let report = fit_pgc(&[good, constant], &KPolicy::Fixed(100)).unwrap();
        assert!(report.margins[0].fit.is_some());
        assert!(report.margins[1].fit.is_none());
        assert!(report.margins[1].error.as_deref().unwrap_or("").contains("degenerate"));
        assert!(report.pairs[0].error.is_some());
    }

    #[test]
    fn fit_permutation_symmetry() {
        let sigma = CorrelationMatrix::from_rows(&[
            vec![1.0, 0.3, 0.1],
            vec![0.3, 1.0, 0.2],
            vec![0.1, 0.2, 1.0],
        ])
        .unwrap();
        let model = PgcModel::new(
            vec![
                MarginalSpec::pareto(2.0).unwrap(),
                MarginalSpec::pareto(3.0).unwrap(),
                MarginalSpec::pareto(2.5).unwrap(),
            ],
            sigma,
        )
        .unwrap();
        let sample = model.sample(5000, &RandomStream::new(77, 0)).unwrap();
        let cols = sample.columns();
        let report = fit_pgc(&cols, &KPolicy::Fixed(400)).unwrap();
        // permute columns (2, 0, 1) and compare mapped entries
        let perm = [2usize, 0, 1];
        let pcols: Vec<Vec<f64>> = perm.iter().map(|&i| cols[i].clone()).collect();
        let preport = fit_pgc(&pcols, &KPolicy::Fixed(400)).unwrap();
        for (new_col, &old_col) in perm.iter().enumerate() {
            assert_eq!(
                preport.margins[new_col].fit.as_ref().unwrap().index,
                report.margins[old_col].fit.as_ref().unwrap().index
            );
        }
        for p in &preport.pairs {
            let (oj, ol) = (perm[p.j], perm[p.l]);
            let orig = report.pair(oj, ol).unwrap();
            assert_eq!(p.rho_hat, orig.rho_hat);
            assert_eq!(
                p.gamma_fit.as_ref().unwrap().index,
                orig.gamma_fit.as_ref().unwrap().index
            );
        }
    }

    #[test]
    fn k_policy_rules() {
        assert_eq!(KPolicy::default().k_for(10_000).unwrap(), 500);
        assert_eq!(KPolicy::Fraction(0.05).k_for(100).unwrap(), 10);
        // tiny samples clamp to n-1
        assert_eq!(KPolicy::Fraction(0.05).k_for(8).unwrap(), 7);
        assert_eq!(KPolicy::Fixed(99).k_for(100).unwrap(), 99);
        assert!(KPolicy::Fixed(100).k_for(100).is_err());
        assert_eq!(KPolicy::parse("1000").unwrap(), KPolicy::Fixed(1000));
        assert_eq!(KPolicy::parse("5%").unwrap(), KPolicy::Fraction(0.05));
        assert!(KPolicy::parse("abc").is_err());
    }
}
