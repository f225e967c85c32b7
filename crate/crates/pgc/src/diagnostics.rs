//! Stability series over k, exponential QQ data with bootstrap bands, and
//! Monte Carlo estimators that serve as oracles for the analytic tail
//! formulas.
//!
//! All Monte Carlo here is chunked over sub-streams with fixed chunk size, so
//! estimates are identical for any thread count. Counters are integers, which
//! keeps the reduction order-independent.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{rho_ci, rho_from_indices, RKind};
use crate::model::{PgcModel, SampleMatrix};
use crate::qp::{classify_regime, regime_bound, Regime};
use crate::rng::RandomStream;

/// Draws per Monte Carlo chunk.
const MC_CHUNK: usize = 65_536;

/// Default pre-pass size for the empirical minimum-tail quantile.
pub const DEFAULT_PREPASS_DRAWS: usize = 10_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct SeriesMeta {
    pub label: String,
    pub level: f64,
    pub method: String,
}

/// A plottable series: point estimates with a pointwise band. Band entries
/// are NaN where no band is defined (the per-point flag says why).
#[derive(Debug, Clone, Serialize)]
pub struct SeriesWithBands {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Per-point flags; empty string when clean.
    pub flags: Vec<String>,
    pub meta: SeriesMeta,
}

impl SeriesWithBands {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Sorted positive part (descending) and its log prefix sums; shared by the
/// per-k series so each k is O(1).
struct SortedTail {
    z: Vec<f64>,
    // prefix[i] = sum of ln z[0..i]
    prefix: Vec<f64>,
}

impl SortedTail {
    fn new(data: &[f64]) -> Self {
        let mut z: Vec<f64> = data
            .iter()
            .copied()
            .filter(|v| v.is_finite() && *v > 0.0)
            .collect();
        z.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut prefix = Vec::with_capacity(z.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for &v in &z {
            acc += v.ln();
            prefix.push(acc);
        }
        SortedTail { z, prefix }
    }

    fn n_used(&self) -> usize {
        self.z.len()
    }

    /// Hill reciprocal-index estimate at k; None when degenerate.
    fn hill(&self, k: usize) -> Option<f64> {
        let h = self.prefix[k] / k as f64 - self.z[k].ln();
        if h == 0.0 {
            None
        } else {
            Some(h)
        }
    }
}

/// Hill index estimates with pointwise intervals over a k range.
pub fn hill_series(
    data: &[f64],
    k_min: usize,
    k_max: usize,
    level: f64,
) -> Result<SeriesWithBands> {
    if k_min < 2 || k_max < k_min {
        return Err(Error::Domain(format!(
            "need 2 <= k_min <= k_max, got {k_min}..{k_max}"
        )));
    }
    let tail = SortedTail::new(data);
    if k_max + 1 > tail.n_used() {
        return Err(Error::InsufficientData(format!(
            "k_max = {k_max} needs more than {} positive observations",
            tail.n_used()
        )));
    }
    let z = crate::normal::std_normal_quantile((1.0 + level) / 2.0)?;
    let mut out = SeriesWithBands {
        x: Vec::new(),
        y: Vec::new(),
        lo: Vec::new(),
        hi: Vec::new(),
        flags: Vec::new(),
        meta: SeriesMeta {
            label: "hill index".into(),
            level,
            method: "hill".into(),
        },
    };
    for k in k_min..=k_max {
        out.x.push(k as f64);
        match tail.hill(k) {
            Some(h) => {
                let index = 1.0 / h;
                let half = z * index / (k as f64).sqrt();
                out.y.push(index);
                out.lo.push((index - half).max(0.0));
                out.hi.push(index + half);
                out.flags.push(String::new());
            }
            None => {
                out.y.push(f64::NAN);
                out.lo.push(f64::NAN);
                out.hi.push(f64::NAN);
                out.flags.push("degenerate".into());
            }
        }
    }
    Ok(out)
}

/// ρ̂ over a k range for one pair of columns, with delta-method bands where
/// the estimates sit in the interior regime. Points elsewhere carry a flag
/// and no band.
pub fn rho_series(
    data: &SampleMatrix,
    j: usize,
    l: usize,
    k_min: usize,
    k_max: usize,
    level: f64,
) -> Result<SeriesWithBands> {
    if j == l || j >= data.d() || l >= data.d() {
        return Err(Error::DimensionMismatch("need two distinct valid columns".into()));
    }
    if k_min < 2 || k_max < k_min {
        return Err(Error::Domain(format!(
            "need 2 <= k_min <= k_max, got {k_min}..{k_max}"
        )));
    }
    let col_j = SortedTail::new(&data.column(j));
    let col_l = SortedTail::new(&data.column(l));
    let minima: Vec<f64> = (0..data.n())
        .filter_map(|r| {
            let a = data.value(r, j);
            let b = data.value(r, l);
            (a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0).then(|| a.min(b))
        })
        .collect();
    let min_tail = SortedTail::new(&minima);
    let max_k = col_j
        .n_used()
        .min(col_l.n_used())
        .min(min_tail.n_used());
    if k_max + 1 > max_k {
        return Err(Error::InsufficientData(format!(
            "k_max = {k_max} needs more than {max_k} usable observations"
        )));
    }
    let mut out = SeriesWithBands {
        x: Vec::new(),
        y: Vec::new(),
        lo: Vec::new(),
        hi: Vec::new(),
        flags: Vec::new(),
        meta: SeriesMeta {
            label: format!("rho({j},{l})"),
            level,
            method: "hill-min-inversion".into(),
        },
    };
    for k in k_min..=k_max {
        out.x.push(k as f64);
        let (Some(hj), Some(hl), Some(hm)) = (col_j.hill(k), col_l.hill(k), min_tail.hill(k))
        else {
            out.y.push(f64::NAN);
            out.lo.push(f64::NAN);
            out.hi.push(f64::NAN);
            out.flags.push("degenerate".into());
            continue;
        };
        let (a1, a2, g) = (1.0 / hj, 1.0 / hl, 1.0 / hm);
        let (rho, clamped) = rho_from_indices(a1, a2, g)?;
        out.y.push(rho);
        let regime = if clamped {
            Regime::Degenerate
        } else {
            classify_regime(a1, a2, rho)
        };
        let near = (rho - regime_bound(a1, a2)).abs() < 0.02;
        let mut flag = String::new();
        if clamped {
            flag = "clamped".into();
        } else if regime != Regime::Interior {
            flag = regime.to_string();
        } else if near {
            flag = "near-boundary".into();
        }
        if regime == Regime::Interior && !clamped {
            match rho_ci(a1, a2, g, k, level) {
                Ok((lo, hi)) => {
                    out.lo.push(lo);
                    out.hi.push(hi);
                }
                Err(_) => {
                    out.lo.push(f64::NAN);
                    out.hi.push(f64::NAN);
                    if flag.is_empty() {
                        flag = "no-band".into();
                    }
                }
            }
        } else {
            out.lo.push(f64::NAN);
            out.hi.push(f64::NAN);
        }
        out.flags.push(flag);
    }
    Ok(out)
}

/// Exponential QQ data for the top fraction of a positive sample, with a
/// parametric-bootstrap band and the least-squares slope (an estimate of the
/// reciprocal tail index).
#[derive(Debug, Clone, Serialize)]
pub struct ExpQq {
    pub series: SeriesWithBands,
    pub slope: f64,
    pub intercept: f64,
    pub m: usize,
}

pub fn exp_qq(
    data: &[f64],
    top_fraction: f64,
    level: f64,
    stream: &RandomStream,
) -> Result<ExpQq> {
    if !(top_fraction > 0.0 && top_fraction <= 0.2) {
        return Err(Error::Domain(format!(
            "top fraction must be in (0, 0.2], got {top_fraction}"
        )));
    }
    let tail = SortedTail::new(data);
    let m = (top_fraction * tail.n_used() as f64).floor() as usize;
    if m < 30 {
        return Err(Error::InsufficientData(format!(
            "top fraction holds {m} points, need at least 30"
        )));
    }
    // plotting positions in increasing order: i = m..1
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for i in (1..=m).rev() {
        xs.push(-((i as f64) / (m as f64 + 1.0)).ln());
        ys.push(tail.z[i - 1].ln());
    }
    let (slope, intercept) = ols(&xs, &ys);

    // parametric bootstrap: exponential order statistics at the fitted slope
    const B: usize = 999;
    let sims: Vec<Vec<f64>> = (0..B)
        .into_par_iter()
        .map(|b| {
            let mut s = stream.substream(b as u64);
            let mut e: Vec<f64> = (0..m).map(|_| -s.next_uniform().ln()).collect();
            e.sort_by(|a, b| b.partial_cmp(a).unwrap());
            // increasing order to match the plotting positions
            (1..=m)
                .rev()
                .map(|i| intercept + slope * e[i - 1])
                .collect()
        })
        .collect();
    let q_lo = (1.0 - level) / 2.0;
    let q_hi = (1.0 + level) / 2.0;
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    let mut column = vec![0.0f64; B];
    for pos in 0..m {
        for (b, sim) in sims.iter().enumerate() {
            column[b] = sim[pos];
        }
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lo.push(column[(q_lo * (B as f64 - 1.0)).round() as usize]);
        hi.push(column[(q_hi * (B as f64 - 1.0)).round() as usize]);
    }
    Ok(ExpQq {
        series: SeriesWithBands {
            x: xs,
            y: ys,
            lo,
            hi,
            flags: vec![String::new(); m],
            meta: SeriesMeta {
                label: "exponential QQ".into(),
                level,
                method: "parametric-bootstrap-999".into(),
            },
        },
        slope,
        intercept,
        m,
    })
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Monte Carlo estimate of P(X_j > t·x_j for all j) with its binomial
/// standard error. Works in Gaussian space: the event is a fixed rectangle
/// for the underlying normal vector.
pub fn mc_joint_tail(
    model: &PgcModel,
    t: f64,
    x: &[f64],
    n_draws: usize,
    stream: &RandomStream,
) -> Result<(f64, f64)> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} entries, model has {} margins",
            x.len(),
            model.dim()
        )));
    }
    if n_draws < 10_000 {
        return Err(Error::Domain(format!(
            "joint-tail Monte Carlo needs at least 1e4 draws, got {n_draws}"
        )));
    }
    let thresholds: Vec<f64> = (0..model.dim())
        .map(|j| model.gaussian_threshold(j, t * x[j]))
        .collect::<Result<_>>()?;
    let hits = gaussian_rectangle_hits(model, &thresholds, n_draws, stream);
    let p = hits as f64 / n_draws as f64;
    let se = (p * (1.0 - p) / n_draws as f64).sqrt();
    Ok((p, se))
}

/// Count draws of the model's Gaussian stage exceeding all thresholds.
fn gaussian_rectangle_hits(
    model: &PgcModel,
    thresholds: &[f64],
    n_draws: usize,
    stream: &RandomStream,
) -> u64 {
    let d = model.dim();
    let chol = model.cholesky_factor();
    let n_chunks = n_draws.div_ceil(MC_CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let draws = if c + 1 == n_chunks {
                n_draws - c * MC_CHUNK
            } else {
                MC_CHUNK
            };
            let mut sub = stream.substream(c as u64);
            let mut g = vec![0.0f64; d];
            let mut hits = 0u64;
            for _ in 0..draws {
                sub.fill_std_normal(&mut g);
                let mut all = true;
                for i in 0..d {
                    let mut z = 0.0;
                    for k in 0..=i {
                        z += chol.get(i, k) * g[k];
                    }
                    if z <= thresholds[i] {
                        all = false;
                        break;
                    }
                }
                if all {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

/// Finite-t Monte Carlo for the pairwise tail-dependence functions of a
/// bivariate model. The minimum's survival function has no closed form, so
/// its upper quantiles come from an empirical pre-pass stored here (keyed by
/// the model fingerprint it was built from).
pub struct RFunctionMc {
    model: PgcModel,
    sorted_minima: Vec<f64>,
    prepass_draws: usize,
}

impl RFunctionMc {
    /// Build the pre-pass. The model must be bivariate and its parameters in
    /// the interior regime.
    pub fn new(model: &PgcModel, prepass_draws: usize, stream: &RandomStream) -> Result<Self> {
        if model.dim() != 2 {
            return Err(Error::DimensionMismatch(
                "tail-dependence Monte Carlo needs a bivariate model".into(),
            ));
        }
        let a1 = model.marginal(0).alpha();
        let a2 = model.marginal(1).alpha();
        let rho = model.sigma().entry(0, 1);
        if classify_regime(a1, a2, rho) != Regime::Interior {
            return Err(Error::Regime(format!(
                "model parameters (α₁={a1}, α₂={a2}, ρ={rho}) are not interior"
            )));
        }
        if prepass_draws < 10_000 {
            return Err(Error::Domain("pre-pass needs at least 1e4 draws".into()));
        }
        let n_chunks = prepass_draws.div_ceil(MC_CHUNK);
        let chunks: Vec<Result<Vec<f64>>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let draws = if c + 1 == n_chunks {
                    prepass_draws - c * MC_CHUNK
                } else {
                    MC_CHUNK
                };
                let mut sub = stream.substream(c as u64);
                let chol = model.cholesky_factor();
                let mut out = Vec::with_capacity(draws);
                for _ in 0..draws {
                    let g1 = sub.next_std_normal();
                    let g2 = sub.next_std_normal();
                    let z1 = chol.get(0, 0) * g1;
                    let z2 = chol.get(1, 0) * g1 + chol.get(1, 1) * g2;
                    let u1 = crate::normal::std_normal_cdf(z1)
                        .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                    let u2 = crate::normal::std_normal_cdf(z2)
                        .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                    let x1 = model.marginal(0).quantile(u1)?;
                    let x2 = model.marginal(1).quantile(u2)?;
                    out.push(x1.min(x2));
                }
                Ok(out)
            })
            .collect();
        let mut sorted_minima = Vec::with_capacity(prepass_draws);
        for c in chunks {
            sorted_minima.extend_from_slice(&c?);
        }
        sorted_minima.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(RFunctionMc {
            model: model.clone(),
            sorted_minima,
            prepass_draws,
        })
    }

    /// How the minimum's survival quantiles are obtained.
    pub fn g_method(&self) -> String {
        format!("empirical-prepass:{}", self.prepass_draws)
    }

    pub fn model_fingerprint(&self) -> &str {
        self.model.fingerprint()
    }

    /// Empirical upper quantile of the minimum: smallest sampled value with
    /// tail fraction at most `s`.
    fn min_threshold(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let n = self.sorted_minima.len();
        let idx = (((1.0 - s) * n as f64).floor() as usize).min(n - 1);
        self.sorted_minima[idx]
    }

    /// Estimate t·P(F̄₁(X¹) ≤ w₁/t, Ḡ(Y) ≤ w₂/t) (or the margin/margin and
    /// second-margin variants) at finite t. Returns (estimate, standard
    /// error).
    pub fn estimate(
        &self,
        kind: RKind,
        w1: f64,
        w2: f64,
        t: f64,
        n_draws: usize,
        stream: &RandomStream,
    ) -> Result<(f64, f64)> {
        if !(t > 1.0) || w1 < 0.0 || w2 < 0.0 {
            return Err(Error::Domain(
                "need t > 1 and nonnegative weights".into(),
            ));
        }
        if n_draws < 10_000 {
            return Err(Error::Domain("need at least 1e4 draws".into()));
        }
        // a zero weight empties the event for every kind
        if w1 == 0.0 || w2 == 0.0 {
            return Ok((0.0, 0.0));
        }
        let margin_threshold = |j: usize, s: f64| -> Result<f64> {
            if s >= 1.0 {
                Ok(f64::NEG_INFINITY)
            } else {
                self.model
                    .gaussian_threshold(j, self.model.marginal(j).quantile(1.0 - s)?)
            }
        };
        let (z1, z2) = match kind {
            RKind::Margins => (margin_threshold(0, w1 / t)?, margin_threshold(1, w2 / t)?),
            RKind::FirstWithMin => {
                let a = margin_threshold(0, w1 / t)?;
                let y = self.min_threshold(w2 / t);
                let zy1 = self.model.gaussian_threshold(0, y)?;
                let zy2 = self.model.gaussian_threshold(1, y)?;
                (a.max(zy1), zy2)
            }
            RKind::SecondWithMin => {
                let a = margin_threshold(1, w2 / t)?;
                let y = self.min_threshold(w1 / t);
                let zy1 = self.model.gaussian_threshold(0, y)?;
                let zy2 = self.model.gaussian_threshold(1, y)?;
                (zy1, a.max(zy2))
            }
        };
        let hits = gaussian_rectangle_hits(&self.model, &[z1, z2], n_draws, stream);
        let p = hits as f64 / n_draws as f64;
        let se = (p * (1.0 - p) / n_draws as f64).sqrt();
        Ok((t * p, t * se))
    }
}
