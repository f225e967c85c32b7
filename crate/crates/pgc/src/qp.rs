//! The constrained quadratic program behind the joint-tail asymptotics, the
//! closed-form bivariate specialization, regime classification, and the
//! Gaussian-tail building blocks.
//!
//! The program is `min zᵀ Σ⁻¹ z over z ≥ c` for a positive definite
//! correlation matrix Σ and a positive vector c. Its solution is described by
//! a unique active set I: the minimizer pins `κ_I = c_I`, extends to
//! `κ_J = Σ_JI Σ_I⁻¹ c_I ≥ c_J` on the complement, and has strictly positive
//! weights `h = Σ_I⁻¹ c_I`. With `c = √α` the solution drives the polynomial
//! rate γ, the log-power (Δ−|I|)/2, the constant Ψ, and the per-margin
//! exponents √α_i·h_i of the joint upper-tail probability.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CorrelationMatrix, Matrix};
use crate::model::PgcModel;
use crate::normal;

/// Enumeration guard: subsets grow as 2^d, and the model dimension cap is far
/// above what the tail asymptotics are used for in practice.
pub const QP_MAX_DIM: usize = 20;

/// Tolerance for the regime trichotomy and for the active-set boundary
/// classification.
pub const REGIME_TOL: f64 = 1e-9;

/// Solution of the quadratic program `min zᵀ Σ⁻¹ z over z ≥ c`.
#[derive(Debug, Clone, Serialize)]
pub struct QpSolution {
    /// Minimal objective value γ > 0.
    pub gamma: f64,
    /// Active set I (0-based, increasing).
    pub active_set: Vec<usize>,
    /// Complement J = 𝕀 \ I.
    pub complement: Vec<usize>,
    /// Minimizer κ ∈ R^d.
    pub kappa: Vec<f64>,
    /// Weights h_i = e_iᵀ Σ_I⁻¹ c_I > 0, aligned with `active_set`.
    pub h: Vec<f64>,
    /// Δ = √(α_I⁻¹)ᵀ Σ_I⁻¹ √(α_I) = Σ_i h_i / c_i.
    pub delta_exp: f64,
}

/// Solve the quadratic program by enumerating candidate active sets.
///
/// Every non-empty subset I is tested against the two feasibility conditions
/// (h_I > 0 and κ_J ≥ c_J); the optimum is the feasible candidate with the
/// smallest objective, with ties broken toward the smaller active set, which
/// is the one the characterization picks at boundary configurations.
pub fn solve_qp(sigma: &CorrelationMatrix, c: &[f64]) -> Result<QpSolution> {
    let d = sigma.dim();
    if c.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "c has length {}, Σ is {d}x{d}",
            c.len()
        )));
    }
    if d > QP_MAX_DIM {
        return Err(Error::Domain(format!(
            "quadratic program enumeration is capped at d = {QP_MAX_DIM}, got {d}"
        )));
    }
    if c.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain("constraint vector must be positive".into()));
    }

    let mut best: Option<QpSolution> = None;
    for mask in 1u32..(1u32 << d) {
        let active: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
        let complement: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 0).collect();
        let c_i: Vec<f64> = active.iter().map(|&i| c[i]).collect();
        let sigma_i_inv = sigma.submatrix_inverse(&active)?;
        let h = sigma_i_inv.matvec(&c_i);
        if h.iter().any(|&x| !(x > 0.0)) {
            continue;
        }
        let mut kappa = vec![0.0; d];
        for (pos, &i) in active.iter().enumerate() {
            kappa[i] = c_i[pos];
        }
        let mut feasible = true;
        for &j in &complement {
            let mut v = 0.0;
            for (pos, &i) in active.iter().enumerate() {
                v += sigma.entry(j, i) * h[pos];
            }
            if v < c[j] - REGIME_TOL {
                feasible = false;
                break;
            }
            kappa[j] = v;
        }
        if !feasible {
            continue;
        }
        let gamma: f64 = c_i.iter().zip(&h).map(|(a, b)| a * b).sum();
        let delta_exp: f64 = c_i.iter().zip(&h).map(|(a, b)| b / a).sum();
        let candidate = QpSolution {
            gamma,
            active_set: active,
            complement,
            kappa,
            h,
            delta_exp,
        };
        best = Some(match best.take() {
            None => candidate,
            Some(cur) => {
                let tol = 1e-12 * cur.gamma.abs().max(candidate.gamma.abs());
                if candidate.gamma < cur.gamma - tol
                    || ((candidate.gamma - cur.gamma).abs() <= tol
                        && candidate.active_set.len() < cur.active_set.len())
                {
                    candidate
                } else {
                    cur
                }
            }
        });
    }
    best.ok_or(Error::InfeasibleEnumeration)
}

/// Regime of a bivariate (α₁, α₂, ρ) triple relative to the bound
/// min(√(α₂/α₁), √(α₁/α₂)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// ρ strictly below the bound: γ identifies ρ.
    Interior,
    /// ρ at the bound (within tolerance).
    Boundary,
    /// ρ above the bound: γ saturates at max(α₁, α₂).
    Degenerate,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Interior => write!(f, "interior"),
            Regime::Boundary => write!(f, "boundary"),
            Regime::Degenerate => write!(f, "degenerate"),
        }
    }
}

/// The identifiability bound min(√(α₂/α₁), √(α₁/α₂)).
pub fn regime_bound(a1: f64, a2: f64) -> f64 {
    (a2 / a1).sqrt().min((a1 / a2).sqrt())
}

pub fn classify_regime(a1: f64, a2: f64, rho: f64) -> Regime {
    let bound = regime_bound(a1, a2);
    if rho < bound - REGIME_TOL {
        Regime::Interior
    } else if rho <= bound + REGIME_TOL {
        Regime::Boundary
    } else {
        Regime::Degenerate
    }
}

/// Closed-form asymptotic for P(X_i > t·x_i, i ∈ subset):
/// value = Ψ · t^(−γ) · (log t)^(log_power) · ∏ x_i^(−exponents\[i\]),
/// the product running over the active margins only.
#[derive(Debug, Clone, Serialize)]
pub struct TailAsymptotic {
    pub gamma: f64,
    pub log_power: f64,
    pub psi: f64,
    /// Margins covered by this asymptotic (0-based model indices).
    pub subset: Vec<usize>,
    /// Positions within `subset` that carry an x-exponent (the active set).
    pub active: Vec<usize>,
    /// Exponents √α_i·h_i aligned with `active`.
    pub exponents: Vec<f64>,
}

impl TailAsymptotic {
    /// Evaluate at threshold scale `t` and per-margin multipliers `x`
    /// (indexed like `subset`). Refuses t ≤ e where the log-power factor is
    /// meaningless.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > std::f64::consts::E) {
            return Err(Error::Domain(format!(
                "asymptotic evaluation needs t > e, got {t}"
            )));
        }
        if x.len() != self.subset.len() {
            return Err(Error::DimensionMismatch(format!(
                "x has length {}, subset has {}",
                x.len(),
                self.subset.len()
            )));
        }
        if x.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("x must be positive componentwise".into()));
        }
        let mut v = self.psi * t.powf(-self.gamma) * t.ln().powf(self.log_power);
        for (pos, &i) in self.active.iter().enumerate() {
            v *= x[i].powf(-self.exponents[pos]);
        }
        Ok(v)
    }
}

/// Orthant factor P(Y_J > l_∞): the conditional Gaussian block on the
/// complement, with components dropped where κ_j exceeds c_j (l_j = −∞) and
/// kept at zero where κ_j = c_j within tolerance.
fn orthant_factor(entries: &Matrix, qp: &QpSolution, c: &[f64]) -> Result<f64> {
    if qp.complement.is_empty() {
        return Ok(1.0);
    }
    let i_set = &qp.active_set;
    let j_set = &qp.complement;
    let sigma_i_inv = linalg::inverse_spd(&entries.principal_submatrix(i_set))?;
    let sigma_ji = entries.submatrix(j_set, i_set);
    let sigma_ij = entries.submatrix(i_set, j_set);
    let cond = {
        let correction = sigma_ji.matmul(&sigma_i_inv).matmul(&sigma_ij);
        let mut m = entries.principal_submatrix(j_set);
        for a in 0..j_set.len() {
            for b in 0..j_set.len() {
                m.set(a, b, m.get(a, b) - correction.get(a, b));
            }
        }
        m
    };
    let drop: Vec<bool> = j_set
        .iter()
        .map(|&j| qp.kappa[j] - c[j] > REGIME_TOL)
        .collect();
    normal::centered_orthant_prob(&cond, &drop)
}

/// Joint upper-tail asymptotic for the margins in `subset` of a model.
pub fn joint_tail_asymptotic(model: &PgcModel, subset: &[usize]) -> Result<TailAsymptotic> {
    if subset.is_empty() {
        return Err(Error::DimensionMismatch("empty margin subset".into()));
    }
    let d = model.dim();
    if subset.iter().any(|&i| i >= d) {
        return Err(Error::DimensionMismatch("margin index out of range".into()));
    }
    let mut seen = vec![false; d];
    for &i in subset {
        if seen[i] {
            return Err(Error::DimensionMismatch("duplicate margin index".into()));
        }
        seen[i] = true;
    }
    let entries = model.sigma().entries().principal_submatrix(subset);
    let sub_sigma = CorrelationMatrix::new(entries)?;
    let alphas: Vec<f64> = subset.iter().map(|&i| model.marginal(i).alpha()).collect();
    let thetas: Vec<f64> = subset.iter().map(|&i| model.marginal(i).theta()).collect();
    let c: Vec<f64> = alphas.iter().map(|a| a.sqrt()).collect();
    let qp = solve_qp(&sub_sigma, &c)?;
    let log_power = 0.5 * (qp.delta_exp - qp.active_set.len() as f64);
    let det_i = linalg::determinant_spd(
        &sub_sigma.entries().principal_submatrix(&qp.active_set),
    )?;
    let orthant = orthant_factor(sub_sigma.entries(), &qp, &c)?;
    let mut psi = (4.0 * std::f64::consts::PI).powf(log_power) / det_i.sqrt() * orthant;
    let mut exponents = Vec::with_capacity(qp.active_set.len());
    for (pos, &i) in qp.active_set.iter().enumerate() {
        let hi = qp.h[pos];
        let sqrt_a = c[i];
        psi *= (thetas[i] * sqrt_a).powf(hi / sqrt_a) / hi;
        exponents.push(sqrt_a * hi);
    }
    Ok(TailAsymptotic {
        gamma: qp.gamma,
        log_power,
        psi,
        subset: subset.to_vec(),
        active: qp.active_set,
        exponents,
    })
}

/// Bivariate closed form of the joint-tail asymptotic, split over the three
/// regimes.
pub fn bivariate_tail_asymptotic(
    a1: f64,
    a2: f64,
    th1: f64,
    th2: f64,
    rho: f64,
) -> Result<TailAsymptotic> {
    for (name, v) in [("alpha1", a1), ("alpha2", a2), ("theta1", th1), ("theta2", th2)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Domain(format!("rho must be in (-1,1), got {rho}")));
    }
    match classify_regime(a1, a2, rho) {
        Regime::Interior => {
            let m = (a1 * a2).sqrt();
            let opr = 1.0 - rho * rho;
            let gamma = (a1 + a2 - 2.0 * rho * m) / opr;
            let h1 = (a1.sqrt() - rho * a2.sqrt()) / opr;
            let h2 = (a2.sqrt() - rho * a1.sqrt()) / opr;
            let log_power = -rho * gamma / (2.0 * m);
            let psi = (4.0 * std::f64::consts::PI).powf(log_power) * opr.powf(1.5)
                * (th1 * a1.sqrt()).powf(h1 / a1.sqrt())
                * (th2 * a2.sqrt()).powf(h2 / a2.sqrt())
                / (m * (1.0 + rho * rho) - rho * (a1 + a2));
            Ok(TailAsymptotic {
                gamma,
                log_power,
                psi,
                subset: vec![0, 1],
                active: vec![0, 1],
                exponents: vec![(a1 - rho * m) / opr, (a2 - rho * m) / opr],
            })
        }
        regime => {
            let (i_star, gamma, theta) = if a1 >= a2 { (0, a1, th1) } else { (1, a2, th2) };
            let psi = match regime {
                Regime::Boundary => theta / 2.0,
                _ => theta,
            };
            Ok(TailAsymptotic {
                gamma,
                log_power: 0.0,
                psi,
                subset: vec![0, 1],
                active: vec![i_star],
                exponents: vec![gamma],
            })
        }
    }
}

/// The truncated expansion of the Gaussian quantile of a power-law tail:
/// z(t) = Φ̄⁻¹(θ (t x)^(−α)) up to o(1/√log t).
pub fn gaussian_quantile_expansion(alpha: f64, theta: f64, x: f64, t: f64) -> Result<f64> {
    for (name, v) in [("alpha", alpha), ("theta", theta), ("x", x), ("t", t)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let survival = theta * (t * x).powf(-alpha);
    if !(t > 1.0) || survival >= 0.5 {
        return Err(Error::Domain(format!(
            "expansion needs t large enough that the tail is below 1/2 (t = {t})"
        )));
    }
    let s = (2.0 * alpha * t.ln()).sqrt();
    let second = (x.powf(alpha) / (2.0 * theta * (std::f64::consts::PI * alpha).sqrt())).ln() / s;
    let third = t.ln().ln() / (2.0 * s);
    Ok(s + second - third)
}

/// Asymptotic for joint Gaussian exceedances of thresholds
/// u·c + z/u + (log L / u)·w: value = Υ u^(−|I|) L^(−lfe) exp(−γu²/2 − shift).
#[derive(Debug, Clone, Serialize)]
pub struct GaussianTailAsymptotic {
    pub upsilon: f64,
    pub gamma: f64,
    pub active_set: Vec<usize>,
    /// w_Iᵀ Σ_I⁻¹ c_I.
    pub log_factor_exponent: f64,
    /// z_Iᵀ Σ_I⁻¹ c_I.
    pub shift: f64,
}

impl GaussianTailAsymptotic {
    pub fn eval(&self, u: f64, big_l: f64) -> f64 {
        self.upsilon
            * u.powi(-(self.active_set.len() as i32))
            * big_l.powf(-self.log_factor_exponent)
            * (-0.5 * self.gamma * u * u - self.shift).exp()
    }
}

pub fn gaussian_joint_tail_asymptotic(
    sigma: &CorrelationMatrix,
    c: &[f64],
    z: &[f64],
    w: &[f64],
) -> Result<GaussianTailAsymptotic> {
    let d = sigma.dim();
    if z.len() != d || w.len() != d {
        return Err(Error::DimensionMismatch(
            "z and w must match the dimension of Σ".into(),
        ));
    }
    let qp = solve_qp(sigma, c)?;
    let det_i = linalg::determinant_spd(&sigma.entries().principal_submatrix(&qp.active_set))?;
    let orthant = orthant_factor(sigma.entries(), &qp, c)?;
    let k = qp.active_set.len();
    let mut upsilon =
        (2.0 * std::f64::consts::PI).powf(-(k as f64) / 2.0) / det_i.sqrt() * orthant;
    let mut log_factor_exponent = 0.0;
    let mut shift = 0.0;
    for (pos, &i) in qp.active_set.iter().enumerate() {
        upsilon /= qp.h[pos];
        log_factor_exponent += w[i] * qp.h[pos];
        shift += z[i] * qp.h[pos];
    }
    Ok(GaussianTailAsymptotic {
        upsilon,
        gamma: qp.gamma,
        active_set: qp.active_set,
        log_factor_exponent,
        shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::MarginalSpec;
    use crate::rng::RandomStream;

    fn pareto_model(a1: f64, a2: f64, rho: f64) -> PgcModel {
        PgcModel::bivariate(
            MarginalSpec::pareto(a1).unwrap(),
            MarginalSpec::pareto(a2).unwrap(),
            rho,
        )
        .unwrap()
    }

    #[test]
    fn qp_one_dimensional() {
        let sigma = CorrelationMatrix::identity(1).unwrap();
        let c = [2.0f64.sqrt()];
        let sol = solve_qp(&sigma, &c).unwrap();
        assert_eq!(sol.active_set, vec![0]);
        assert!(sol.complement.is_empty());
        assert!((sol.gamma - 2.0).abs() < 1e-14);
        assert!((sol.h[0] - 2.0f64.sqrt()).abs() < 1e-14);
        assert!((sol.delta_exp - 1.0).abs() < 1e-14);
    }

    #[test]
    fn qp_two_dim_interior_matches_hand_value() {
        let sigma = CorrelationMatrix::from_rho(0.3).unwrap();
        let c = [2.0f64.sqrt(), 3.0f64.sqrt()];
        let sol = solve_qp(&sigma, &c).unwrap();
        let want = (5.0 - 0.6 * 6.0f64.sqrt()) / 0.91;
        assert_eq!(sol.active_set, vec![0, 1]);
        assert!((sol.gamma - want).abs() < 1e-12, "gamma {}", sol.gamma);
        assert!((want - 3.879457).abs() < 1e-6);
    }

    #[test]
    fn qp_two_dim_degenerate_activates_heavier_index() {
        // rho = 0.9 > sqrt(2/3): only the larger-alpha margin is active
        let sigma = CorrelationMatrix::from_rho(0.9).unwrap();
        let c = [2.0f64.sqrt(), 3.0f64.sqrt()];
        let sol = solve_qp(&sigma, &c).unwrap();
        assert_eq!(sol.active_set, vec![1]);
        assert!((sol.gamma - 3.0).abs() < 1e-14);
        // kappa on the complement strictly dominates its constraint
        assert!(sol.kappa[0] > c[0]);
    }

    #[test]
    fn qp_rejects_bad_input() {
        let sigma = CorrelationMatrix::from_rho(0.3).unwrap();
        assert!(solve_qp(&sigma, &[1.0]).is_err());
        assert!(solve_qp(&sigma, &[1.0, 0.0]).is_err());
        assert!(solve_qp(&sigma, &[1.0, -2.0]).is_err());
    }

    #[test]
    fn qp_satisfies_solution_invariants_on_random_instances() {
        let mut stream = RandomStream::new(2024, 0);
        for trial in 0..200 {
            let d = 2 + trial % 3;
            let sigma = crate::testutil::random_correlation(d, &mut stream);
            let c: Vec<f64> = (0..d)
                .map(|_| (0.5 + 4.5 * stream.next_uniform()).sqrt())
                .collect();
            let sol = solve_qp(&sigma, &c).unwrap();
            // kappa_I = c_I exactly, kappa_J >= c_J - tol
            for (pos, &i) in sol.active_set.iter().enumerate() {
                assert_eq!(sol.kappa[i], c[i]);
                assert!(sol.h[pos] > 0.0);
            }
            for &j in &sol.complement {
                assert!(sol.kappa[j] >= c[j] - 1e-9);
            }
            // gamma = kappa' Sigma^{-1} kappa through the full inverse
            let inv = linalg::inverse_spd(sigma.entries()).unwrap();
            let quad: f64 = (0..d)
                .map(|i| sol.kappa[i] * inv.row(i).iter().zip(&sol.kappa).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            assert!(
                ((quad - sol.gamma) / sol.gamma).abs() < 1e-10,
                "gamma mismatch: {} vs {}",
                quad,
                sol.gamma
            );
        }
    }

    #[test]
    fn regime_classification() {
        assert_eq!(classify_regime(2.0, 3.0, 0.3), Regime::Interior);
        assert_eq!(
            classify_regime(2.0, 3.0, (2.0f64 / 3.0).sqrt()),
            Regime::Boundary
        );
        assert_eq!(classify_regime(2.0, 3.0, 0.9), Regime::Degenerate);
        // equal indices: bound is 1, always interior
        assert_eq!(classify_regime(2.0, 2.0, 0.99), Regime::Interior);
        assert_eq!(classify_regime(2.0, 3.0, -0.99), Regime::Interior);
    }

    #[test]
    fn independence_factorizes_exactly() {
        let model = pareto_model(2.0, 3.0, 0.0);
        let asym = joint_tail_asymptotic(&model, &[0, 1]).unwrap();
        assert!((asym.gamma - 5.0).abs() < 1e-12);
        assert_eq!(asym.log_power, 0.0);
        assert!((asym.psi - 1.0).abs() < 1e-12);
        let v = asym.eval(10.0, &[1.0, 1.0]).unwrap();
        assert!((v - 1e-5).abs() < 1e-17);
        let v = asym.eval(10.0, &[2.0, 1.5]).unwrap();
        let want = 1e-5 * 2.0f64.powf(-2.0) * 1.5f64.powf(-3.0);
        assert!(((v - want) / want).abs() < 1e-12);
    }

    #[test]
    fn interior_case_hand_values() {
        let model = pareto_model(2.0, 3.0, 0.3);
        let asym = joint_tail_asymptotic(&model, &[0, 1]).unwrap();
        let m = 6.0f64.sqrt();
        let gamma = (5.0 - 0.6 * m) / 0.91;
        assert!((asym.gamma - gamma).abs() < 1e-12);
        assert!((asym.log_power - (-0.3 * gamma / (2.0 * m))).abs() < 1e-12);
        assert!((asym.log_power - (-0.2375673)).abs() < 1e-6);
        // same power through the delta route (Δ − |I|)/2
        let delta = (2.0 * m - 0.3 * 5.0) / (0.91 * m);
        assert!((asym.log_power - 0.5 * (delta - 2.0)).abs() < 1e-12);
        let e1 = (2.0 - 0.3 * m) / 0.91;
        let e2 = (3.0 - 0.3 * m) / 0.91;
        assert!((asym.exponents[0] - e1).abs() < 1e-12);
        assert!((asym.exponents[1] - e2).abs() < 1e-12);
        assert!((e1 - 1.390).abs() < 1e-3);
        assert!((e2 - 2.489).abs() < 1e-3);
    }

    #[test]
    fn boundary_case_halves_the_constant() {
        // alpha = (3, 2), rho = sqrt(2/3): the heavier index is the first
        let rho = (2.0f64 / 3.0).sqrt();
        let asym = bivariate_tail_asymptotic(3.0, 2.0, 1.5, 1.0, rho).unwrap();
        assert!((asym.gamma - 3.0).abs() < 1e-14);
        assert_eq!(asym.active, vec![0]);
        assert!((asym.psi - 0.75).abs() < 1e-14);
        assert_eq!(asym.log_power, 0.0);
        assert!((asym.exponents[0] - 3.0).abs() < 1e-14);

        // and through the generic QP route
        let model = PgcModel::bivariate(
            MarginalSpec::pareto(3.0).unwrap(),
            MarginalSpec::pareto(2.0).unwrap(),
            rho,
        )
        .unwrap();
        let joint = joint_tail_asymptotic(&model, &[0, 1]).unwrap();
        assert!((joint.gamma - 3.0).abs() < 1e-9);
        assert!((joint.psi - 0.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_case_keeps_full_constant() {
        let asym = bivariate_tail_asymptotic(2.0, 3.0, 1.0, 2.0, 0.9).unwrap();
        assert!((asym.gamma - 3.0).abs() < 1e-14);
        assert_eq!(asym.active, vec![1]);
        assert!((asym.psi - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bivariate_matches_generic_route() {
        let mut checked = 0;
        for &(a1, a2) in &[(2.0, 3.0), (3.0, 2.0), (1.5, 1.5), (0.7, 4.0)] {
            for &rho in &[-0.8, -0.4, 0.0, 0.2, 0.45, 0.75, 0.9] {
                let model = pareto_model(a1, a2, rho);
                let generic = joint_tail_asymptotic(&model, &[0, 1]).unwrap();
                let closed = bivariate_tail_asymptotic(a1, a2, 1.0, 1.0, rho).unwrap();
                let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-300);
                assert!(rel(generic.gamma, closed.gamma) < 1e-9, "gamma at {a1},{a2},{rho}");
                assert!(rel(generic.psi, closed.psi) < 1e-9, "psi at {a1},{a2},{rho}");
                assert!(
                    (generic.log_power - closed.log_power).abs() < 1e-9,
                    "log power at {a1},{a2},{rho}"
                );
                assert_eq!(generic.active, closed.active);
                for (e1, e2) in generic.exponents.iter().zip(&closed.exponents) {
                    assert!(rel(*e1, *e2) < 1e-9);
                }
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn gamma_is_continuous_across_the_regime_boundary() {
        for &(a1, a2) in &[(2.0, 3.0), (3.0, 2.0), (1.0, 4.0), (2.5, 3.5)] {
            let bound = regime_bound(a1, a2);
            if bound > 0.95 {
                continue;
            }
            let inside = bivariate_tail_asymptotic(a1, a2, 1.0, 1.0, bound - 1e-6)
                .unwrap()
                .gamma;
            let outside = bivariate_tail_asymptotic(a1, a2, 1.0, 1.0, bound + 1e-6)
                .unwrap()
                .gamma;
            assert!((inside - a1.max(a2)).abs() < 1e-8);
            assert!((outside - a1.max(a2)).abs() < 1e-14);
        }
    }

    #[test]
    fn regime_bounds_on_gamma() {
        // rho < 0 pushes gamma above the sum; rho = 0 hits it exactly;
        // positive interior rho lands strictly between max and sum
        let g = |rho: f64| bivariate_tail_asymptotic(2.0, 3.0, 1.0, 1.0, rho).unwrap().gamma;
        assert!(g(-0.5) > 5.0);
        assert!((g(0.0) - 5.0).abs() < 1e-14);
        let mid = g(0.4);
        assert!(mid > 3.0 && mid < 5.0);
    }

    #[test]
    fn eval_scale_consistency() {
        let asym = bivariate_tail_asymptotic(2.0, 3.0, 1.0, 1.0, 0.3).unwrap();
        let t = 1e8;
        let s = 2.0;
        let a = asym.eval(t, &[1.0, 1.0]).unwrap();
        let b = asym.eval(s * t, &[1.0 / s, 1.0 / s]).unwrap();
        let ratio = a / b;
        assert!((0.99..=1.01).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn eval_refuses_tiny_t() {
        let asym = bivariate_tail_asymptotic(2.0, 3.0, 1.0, 1.0, 0.3).unwrap();
        assert!(asym.eval(2.0, &[1.0, 1.0]).is_err());
        assert!(asym.eval(10.0, &[1.0]).is_err());
        assert!(asym.eval(10.0, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn quantile_expansion_against_exact_quantile() {
        // exact: Φ̄⁻¹(θ (t x)^{-α}) with α=2, θ=1, x=1, t=1e6
        let exact = -normal::std_normal_quantile(1e-12).unwrap();
        let approx = gaussian_quantile_expansion(2.0, 1.0, 1.0, 1e6).unwrap();
        assert!((approx - exact).abs() < 0.02, "{approx} vs {exact}");
    }

    #[test]
    fn quantile_expansion_error_shrinks_along_t() {
        let mut last = f64::INFINITY;
        for &t in &[1e3, 1e6, 1e9, 1e12] {
            let survival = (t as f64).powf(-2.0);
            let exact = -normal::std_normal_quantile(survival).unwrap();
            let approx = gaussian_quantile_expansion(2.0, 1.0, 1.0, t).unwrap();
            let err = (approx - exact).abs();
            assert!(err < last, "error not decreasing at t={t}: {err} vs {last}");
            last = err;
        }
    }

    #[test]
    fn quantile_expansion_constructed_leading_term() {
        // x^α = 2θ√(πα) kills the second term
        let alpha = 2.0;
        let theta = 1.0;
        let x = (2.0 * theta * (std::f64::consts::PI * alpha).sqrt()).powf(1.0 / alpha);
        let t = 1e8;
        let v = gaussian_quantile_expansion(alpha, theta, x, t).unwrap();
        let s = (2.0 * alpha * t.ln()).sqrt();
        let with_loglog = v + t.ln().ln() / (2.0 * s);
        assert!((with_loglog - s).abs() < 1e-12);
    }

    #[test]
    fn quantile_expansion_domain_errors() {
        assert!(gaussian_quantile_expansion(2.0, 1.0, 1.0, 1.2).is_err());
        assert!(gaussian_quantile_expansion(-2.0, 1.0, 1.0, 1e6).is_err());
    }

    #[test]
    fn gaussian_tail_one_dim_is_mills_leading_term() {
        let sigma = CorrelationMatrix::identity(1).unwrap();
        let g = gaussian_joint_tail_asymptotic(&sigma, &[1.0], &[0.0], &[0.0]).unwrap();
        assert!((g.upsilon - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
        let u = 6.0;
        let ratio = normal::std_normal_sf(u) / g.eval(u, 1.0);
        assert!((0.95..=1.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gaussian_tail_independent_pair() {
        let sigma = CorrelationMatrix::identity(2).unwrap();
        let g = gaussian_joint_tail_asymptotic(&sigma, &[1.0, 1.0], &[0.0; 2], &[0.0; 2])
            .unwrap();
        assert!((g.upsilon - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_tail_against_importance_sampling_oracle() {
        // P(Z > u c) estimated with draws shifted to the dominating point uκ
        let rho = 0.3;
        let sigma = CorrelationMatrix::from_rho(rho).unwrap();
        let c = [2.0f64.sqrt(), 3.0f64.sqrt()];
        let qp = solve_qp(&sigma, &c).unwrap();
        let g = gaussian_joint_tail_asymptotic(&sigma, &c, &[0.0; 2], &[0.0; 2]).unwrap();
        let u = 4.0;
        let l = sigma.cholesky().unwrap();
        let mut stream = RandomStream::new(777, 0);
        let n = 1_000_000usize;
        let mut acc = 0.0f64;
        for _ in 0..n {
            let g1 = stream.next_std_normal();
            let g2 = stream.next_std_normal();
            let y1 = u * qp.kappa[0] + l.get(0, 0) * g1;
            let y2 = u * qp.kappa[1] + l.get(1, 0) * g1 + l.get(1, 1) * g2;
            if y1 > u * c[0] && y2 > u * c[1] {
                // density ratio N(0,Σ)/N(uκ,Σ)
                let dot = y1 * qp.h[0] + y2 * qp.h[1];
                acc += (0.5 * u * u * qp.gamma - u * dot).exp();
            }
        }
        let estimate = acc / n as f64;
        let ratio = estimate / g.eval(u, 1.0);
        assert!((0.7..=1.4).contains(&ratio), "IS ratio {ratio}");
    }

    #[test]
    fn three_margin_subset_reduces_to_pair() {
        // taking a 2-subset of a 3-dim model equals the standalone pair model
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
                MarginalSpec::pareto(4.0).unwrap(),
            ],
            sigma,
        )
        .unwrap();
        let sub = joint_tail_asymptotic(&model, &[0, 1]).unwrap();
        let pair = joint_tail_asymptotic(&pareto_model(2.0, 3.0, 0.3), &[0, 1]).unwrap();
        assert!((sub.gamma - pair.gamma).abs() < 1e-12);
        assert!((sub.psi - pair.psi).abs() < 1e-12);
        // single margin reduces to the marginal tail
        let single = joint_tail_asymptotic(&model, &[2]).unwrap();
        assert!((single.gamma - 4.0).abs() < 1e-12);
        assert!((single.psi - 1.0).abs() < 1e-12);
    }
}

