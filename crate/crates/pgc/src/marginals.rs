//! Power-law-tailed marginal families.
//!
//! Each family carries a derived tail triple (α, θ, second-order index δ):
//! the survival function behaves like θ·x^(−α) far out, and δ ≤ 0 controls
//! the second-order rate that drives Hill-estimator bias. Exact Pareto has
//! no second-order index.
//!
//! Families and their parameter order in the `family:p1[,p2[,p3]]` text
//! encoding (also the JSON `params` array):
//!
//! | key        | params        | α    | θ             | δ    |
//! |------------|---------------|------|---------------|------|
//! | `pareto`   | α             | α    | 1             | —    |
//! | `burr`     | β, σ          | βσ   | 1             | −β   |
//! | `frechet`  | β [, μ [, σ]] | β    | σ^β           | −β   |
//! | `gpd`      | ξ [, μ [, σ]] | 1/ξ  | (σ/ξ)^(1/ξ)   | −1   |
//! | `hallweiss`| β, σ          | β    | 1/2           | −σ   |
//! | `invgamma` | β [, σ]       | β    | σ^β/Γ(β+1)    | −1   |
//! | `loggamma` | β             | β    | 1 (log factor)| 0    |
//! | `studentt` | ν             | ν    | see below     | −2   |
//!
//! `loggamma` is the nonstandard CDF F(x) = 1 − x^(−β)(1 + log x); its tail
//! carries a slowly varying (1 + log x) factor, so θ = 1 is nominal. The
//! listed δ for `burr` is the tabulated value; [`MarginalSpec::numeric_second_order_index`]
//! estimates the empirical rate (which follows x^(−σ)) for cross-checking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Pareto,
    Burr,
    Frechet,
    Gpd,
    HallWeiss,
    InverseGamma,
    LogGammaStar,
    StudentT,
}

impl Family {
    pub fn key(&self) -> &'static str {
        match self {
            Family::Pareto => "pareto",
            Family::Burr => "burr",
            Family::Frechet => "frechet",
            Family::Gpd => "gpd",
            Family::HallWeiss => "hallweiss",
            Family::InverseGamma => "invgamma",
            Family::LogGammaStar => "loggamma",
            Family::StudentT => "studentt",
        }
    }

    pub fn from_key(key: &str) -> Result<Family> {
        Ok(match key.to_ascii_lowercase().as_str() {
            "pareto" => Family::Pareto,
            "burr" => Family::Burr,
            "frechet" => Family::Frechet,
            "gpd" => Family::Gpd,
            "hallweiss" => Family::HallWeiss,
            "invgamma" => Family::InverseGamma,
            "loggamma" => Family::LogGammaStar,
            "studentt" => Family::StudentT,
            other => {
                return Err(Error::Domain(format!("unknown marginal family '{other}'")));
            }
        })
    }
}

/// One marginal distribution with its derived tail triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct MarginalSpec {
    family: Family,
    params: Vec<f64>,
    alpha: f64,
    theta: f64,
    delta2rv: Option<f64>,
    support_lo: f64,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    family: String,
    params: Vec<f64>,
}

impl TryFrom<SpecRepr> for MarginalSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        MarginalSpec::from_family_params(Family::from_key(&r.family)?, &r.params)
    }
}

impl From<MarginalSpec> for SpecRepr {
    fn from(s: MarginalSpec) -> SpecRepr {
        SpecRepr {
            family: s.family.key().to_string(),
            params: s.params,
        }
    }
}

fn require_positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn require_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}

impl MarginalSpec {
    pub fn pareto(alpha: f64) -> Result<Self> {
        require_positive("alpha", alpha)?;
        Ok(MarginalSpec {
            family: Family::Pareto,
            params: vec![alpha],
            alpha,
            theta: 1.0,
            delta2rv: None,
            support_lo: 1.0,
        })
    }

    pub fn burr(beta: f64, sigma: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        require_positive("sigma", sigma)?;
        Ok(MarginalSpec {
            family: Family::Burr,
            params: vec![beta, sigma],
            alpha: beta * sigma,
            theta: 1.0,
            delta2rv: Some(-beta),
            support_lo: 0.0,
        })
    }

    pub fn frechet(beta: f64, mu: f64, sigma: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        require_finite("mu", mu)?;
        require_positive("sigma", sigma)?;
        Ok(MarginalSpec {
            family: Family::Frechet,
            params: vec![beta, mu, sigma],
            alpha: beta,
            theta: sigma.powf(beta),
            delta2rv: Some(-beta),
            support_lo: mu,
        })
    }

    pub fn gpd(xi: f64, mu: f64, sigma: f64) -> Result<Self> {
        require_positive("xi", xi)?;
        require_finite("mu", mu)?;
        require_positive("sigma", sigma)?;
        Ok(MarginalSpec {
            family: Family::Gpd,
            params: vec![xi, mu, sigma],
            alpha: 1.0 / xi,
            theta: (sigma / xi).powf(1.0 / xi),
            delta2rv: Some(-1.0),
            support_lo: mu,
        })
    }

    pub fn hall_weiss(beta: f64, sigma: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        require_positive("sigma", sigma)?;
        // support starts where F crosses zero: (1/2) x^{-β} (1 + x^{-σ}) = 1
        let g = |x: f64| 0.5 * x.powf(-beta) * (1.0 + x.powf(-sigma)) - 1.0;
        let x0 = decreasing_root(g)?;
        Ok(MarginalSpec {
            family: Family::HallWeiss,
            params: vec![beta, sigma],
            alpha: beta,
            theta: 0.5,
            delta2rv: Some(-sigma),
            support_lo: x0,
        })
    }

    pub fn inverse_gamma(beta: f64, sigma: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        require_positive("sigma", sigma)?;
        Ok(MarginalSpec {
            family: Family::InverseGamma,
            params: vec![beta, sigma],
            alpha: beta,
            theta: sigma.powf(beta) / special::ln_gamma(beta + 1.0).exp(),
            delta2rv: Some(-1.0),
            support_lo: 0.0,
        })
    }

    pub fn log_gamma_star(beta: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        // F(1) = 0 always; for β < 1 the CDF dips negative just above 1 and
        // the support starts at the larger root of F = 0.
        let x0 = if beta >= 1.0 {
            1.0
        } else {
            let dip = (1.0 / beta - 1.0).exp();
            let f = |x: f64| 1.0 - x.powf(-beta) * (1.0 + x.ln());
            increasing_root(f, dip)?
        };
        Ok(MarginalSpec {
            family: Family::LogGammaStar,
            params: vec![beta],
            alpha: beta,
            theta: 1.0,
            delta2rv: Some(0.0),
            support_lo: x0,
        })
    }

    pub fn student_t(nu: f64) -> Result<Self> {
        require_positive("nu", nu)?;
        let ln_theta = special::ln_gamma((nu + 1.0) / 2.0) - special::ln_gamma(nu / 2.0)
            + (nu / 2.0 - 1.0) * nu.ln()
            - 0.5 * std::f64::consts::PI.ln();
        Ok(MarginalSpec {
            family: Family::StudentT,
            params: vec![nu],
            alpha: nu,
            theta: ln_theta.exp(),
            delta2rv: Some(-2.0),
            support_lo: f64::NEG_INFINITY,
        })
    }

    pub fn from_family_params(family: Family, params: &[f64]) -> Result<Self> {
        let need = |n: usize, lo: usize| -> Result<()> {
            if params.len() < lo || params.len() > n {
                return Err(Error::Domain(format!(
                    "family '{}' takes {lo}..={n} parameters, got {}",
                    family.key(),
                    params.len()
                )));
            }
            Ok(())
        };
        let get = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
        match family {
            Family::Pareto => {
                need(1, 1)?;
                MarginalSpec::pareto(params[0])
            }
            Family::Burr => {
                need(2, 2)?;
                MarginalSpec::burr(params[0], params[1])
            }
            Family::Frechet => {
                need(3, 1)?;
                MarginalSpec::frechet(params[0], get(1, 0.0), get(2, 1.0))
            }
            Family::Gpd => {
                need(3, 1)?;
                MarginalSpec::gpd(params[0], get(1, 0.0), get(2, 1.0))
            }
            Family::HallWeiss => {
                need(2, 2)?;
                MarginalSpec::hall_weiss(params[0], params[1])
            }
            Family::InverseGamma => {
                need(2, 1)?;
                MarginalSpec::inverse_gamma(params[0], get(1, 1.0))
            }
            Family::LogGammaStar => {
                need(1, 1)?;
                MarginalSpec::log_gamma_star(params[0])
            }
            Family::StudentT => {
                need(1, 1)?;
                MarginalSpec::student_t(params[0])
            }
        }
    }

    /// Parse the `family:p1[,p2[,p3]]` text encoding, e.g. `pareto:2`.
    pub fn parse(text: &str) -> Result<Self> {
        let (fam, rest) = text
            .split_once(':')
            .ok_or_else(|| Error::Domain(format!("expected 'family:params', got '{text}'")))?;
        let params: Vec<f64> = rest
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Domain(format!("bad numeric parameter '{tok}'")))
            })
            .collect::<Result<_>>()?;
        MarginalSpec::from_family_params(Family::from_key(fam)?, &params)
    }

    #[inline]
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn delta2rv(&self) -> Option<f64> {
        self.delta2rv
    }

    /// (α, θ, δ) — δ absent for exact Pareto.
    pub fn tail_triple(&self) -> (f64, f64, Option<f64>) {
        (self.alpha, self.theta, self.delta2rv)
    }

    /// Lower endpoint of the support (−∞ for Student's t).
    #[inline]
    pub fn support_lo(&self) -> f64 {
        self.support_lo
    }

    fn check_support(&self, x: f64) -> Result<()> {
        if x.is_nan() || x < self.support_lo {
            return Err(Error::Domain(format!(
                "x = {x} outside the support of {self}"
            )));
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok(match self.family {
            Family::Pareto => 1.0 - self.survival_inner(x),
            Family::Burr => 1.0 - self.survival_inner(x),
            Family::Frechet => {
                let [beta, mu, sigma] = self.p3();
                let z = (x - mu) / sigma;
                if z <= 0.0 {
                    0.0
                } else {
                    (-z.powf(-beta)).exp()
                }
            }
            Family::Gpd => 1.0 - self.survival_inner(x),
            Family::HallWeiss => 1.0 - self.survival_inner(x),
            Family::InverseGamma => {
                let (beta, sigma) = (self.params[0], self.params[1]);
                if x <= 0.0 {
                    0.0
                } else {
                    special::reg_upper_gamma(beta, sigma / x)?
                }
            }
            Family::LogGammaStar => 1.0 - self.survival_inner(x),
            Family::StudentT => {
                let nu = self.params[0];
                if x == 0.0 {
                    0.5
                } else {
                    let tail = 0.5 * special::reg_inc_beta(nu / 2.0, 0.5, nu / (nu + x * x))?;
                    if x > 0.0 {
                        1.0 - tail
                    } else {
                        tail
                    }
                }
            }
        })
    }

    pub fn survival(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok(match self.family {
            Family::InverseGamma | Family::StudentT | Family::Frechet => {
                match self.family {
                    Family::Frechet => {
                        let [beta, mu, sigma] = self.p3();
                        let z = (x - mu) / sigma;
                        if z <= 0.0 {
                            1.0
                        } else {
                            -(-z.powf(-beta)).exp_m1()
                        }
                    }
                    Family::InverseGamma => {
                        let (beta, sigma) = (self.params[0], self.params[1]);
                        if x <= 0.0 {
                            1.0
                        } else {
                            special::reg_lower_gamma(beta, sigma / x)?
                        }
                    }
                    Family::StudentT => {
                        let nu = self.params[0];
                        if x == 0.0 {
                            0.5
                        } else {
                            let tail =
                                0.5 * special::reg_inc_beta(nu / 2.0, 0.5, nu / (nu + x * x))?;
                            if x > 0.0 {
                                tail
                            } else {
                                1.0 - tail
                            }
                        }
                    }
                    _ => unreachable!(),
                }
            }
            _ => self.survival_inner(x),
        })
    }

    /// Survival for the families with a direct closed form; assumes x in
    /// support.
    fn survival_inner(&self, x: f64) -> f64 {
        match self.family {
            Family::Pareto => {
                let alpha = self.params[0];
                if x <= 1.0 {
                    1.0
                } else {
                    x.powf(-alpha)
                }
            }
            Family::Burr => {
                let (beta, sigma) = (self.params[0], self.params[1]);
                if x <= 0.0 {
                    1.0
                } else {
                    (1.0 + x.powf(sigma)).powf(-beta)
                }
            }
            Family::Gpd => {
                let [xi, mu, sigma] = self.p3();
                let z = 1.0 + xi * (x - mu) / sigma;
                if z <= 1.0 {
                    1.0
                } else {
                    z.powf(-1.0 / xi)
                }
            }
            Family::HallWeiss => {
                let (beta, sigma) = (self.params[0], self.params[1]);
                (0.5 * x.powf(-beta) * (1.0 + x.powf(-sigma))).min(1.0)
            }
            Family::LogGammaStar => {
                let beta = self.params[0];
                (x.powf(-beta) * (1.0 + x.ln())).min(1.0)
            }
            _ => unreachable!("survival_inner only covers closed-form families"),
        }
    }

    /// Quantile: closed form where available, bracketed bisection otherwise.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile needs p in (0,1), got {p}"
            )));
        }
        match self.family {
            Family::Pareto => {
                let alpha = self.params[0];
                Ok((1.0 - p).powf(-1.0 / alpha))
            }
            Family::Burr => {
                let (beta, sigma) = (self.params[0], self.params[1]);
                Ok(((1.0 - p).powf(-1.0 / beta) - 1.0).powf(1.0 / sigma))
            }
            Family::Frechet => {
                let [beta, mu, sigma] = self.p3();
                Ok(mu + sigma * (-p.ln()).powf(-1.0 / beta))
            }
            Family::Gpd => {
                let [xi, mu, sigma] = self.p3();
                Ok(mu + sigma * ((1.0 - p).powf(-xi) - 1.0) / xi)
            }
            Family::StudentT => {
                if p == 0.5 {
                    return Ok(0.0);
                }
                if p < 0.5 {
                    return Ok(-self.quantile(1.0 - p)?);
                }
                self.bisect_quantile(p, 0.0)
            }
            _ => self.bisect_quantile(p, self.support_lo),
        }
    }

    /// Bisection on [lo, hi] with hi found by doubling; converges to 1e-12
    /// relative bracket width within the 200-iteration budget.
    fn bisect_quantile(&self, p: f64, lo_start: f64) -> Result<f64> {
        let mut iters = 0usize;
        let mut lo = lo_start;
        let mut hi = if lo_start > 0.0 { 2.0 * lo_start } else { 1.0 };
        while self.cdf(hi)? < p {
            lo = hi;
            hi *= 2.0;
            iters += 1;
            if iters > 200 {
                return Err(Error::Convergence(format!(
                    "no bracket for quantile p={p} of {self}"
                )));
            }
        }
        loop {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
            iters += 1;
            if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) {
                return Ok(0.5 * (lo + hi));
            }
            if iters > 200 {
                return Err(Error::Convergence(format!(
                    "quantile bisection for p={p} of {self} did not converge"
                )));
            }
        }
    }

    /// ln of the survival function, computed to keep relative precision far
    /// out in the tail (used by the second-order estimate).
    fn ln_survival(&self, x: f64) -> Result<f64> {
        Ok(match self.family {
            Family::Pareto => -self.params[0] * x.ln(),
            Family::Burr => {
                let (beta, sigma) = (self.params[0], self.params[1]);
                if x >= 1.0 {
                    -beta * (sigma * x.ln() + x.powf(-sigma).ln_1p())
                } else {
                    -beta * x.powf(sigma).ln_1p()
                }
            }
            Family::HallWeiss => {
                let (beta, sigma) = (self.params[0], self.params[1]);
                0.5f64.ln() - beta * x.ln() + x.powf(-sigma).ln_1p()
            }
            Family::LogGammaStar => -self.params[0] * x.ln() + (1.0 + x.ln()).ln(),
            _ => self.survival(x)?.ln(),
        })
    }

    /// Crude empirical second-order index: the decay rate of the relative
    /// tail remainder ln(x^α F̄(tx)/F̄(t)) between t = 10³ and t = 10⁴.
    /// None when the remainder vanishes (exact Pareto) or is too small to
    /// resolve.
    pub fn numeric_second_order_index(&self) -> Option<f64> {
        let x = 2.0f64;
        let rem = |t: f64| -> Option<f64> {
            let r =
                self.alpha * x.ln() + self.ln_survival(t * x).ok()? - self.ln_survival(t).ok()?;
            if r.abs() < 1e-13 {
                None
            } else {
                Some(r)
            }
        };
        let r1 = rem(1e3)?;
        let r2 = rem(1e4)?;
        if r1.signum() != r2.signum() {
            return None;
        }
        Some((r2 / r1).abs().ln() / 10f64.ln())
    }

    fn p3(&self) -> [f64; 3] {
        [self.params[0], self.params[1], self.params[2]]
    }
}

impl std::fmt::Display for MarginalSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:", self.family.key())?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Root of a strictly decreasing function g with g → +∞ near 0.
fn decreasing_root(g: impl Fn(f64) -> f64) -> Result<f64> {
    let mut lo = 1e-12;
    let mut hi = 1.0;
    let mut iters = 0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        iters += 1;
        if iters > 200 {
            return Err(Error::Convergence("support root bracketing failed".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of a strictly increasing function f starting from `lo` with f(lo) < 0.
fn increasing_root(f: impl Fn(f64) -> f64, lo_start: f64) -> Result<f64> {
    let mut lo = lo_start;
    let mut hi = lo_start.max(1.0) * 2.0;
    let mut iters = 0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        iters += 1;
        if iters > 200 {
            return Err(Error::Convergence("support root bracketing failed".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
