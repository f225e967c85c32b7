//! The model object and exact simulation.
//!
//! A model is a vector of marginal specs plus a positive definite correlation
//! matrix. Sampling follows the copula factorization: draw a correlated
//! Gaussian vector through the Cholesky factor, push each coordinate through
//! Φ, then through the marginal quantile. Normal variates come from inversion
//! so the whole path is a deterministic function of the `(seed, stream_id)`
//! pair; rows are generated in fixed-size chunks on per-chunk sub-streams
//! (`stream_id = base + chunk`), which makes the output identical no matter
//! how many threads work on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{CorrelationMatrix, Matrix};
use crate::marginals::MarginalSpec;
use crate::normal;
use crate::rng::RandomStream;

/// Rows per sampling chunk; each chunk runs on its own sub-stream.
pub const SAMPLE_CHUNK: usize = 8192;

// largest double strictly below 1
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct PgcModel {
    marginals: Vec<MarginalSpec>,
    sigma: CorrelationMatrix,
    chol: Matrix,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    dim: usize,
    marginals: Vec<MarginalSpec>,
    sigma: Vec<Vec<f64>>,
}

impl TryFrom<ModelRepr> for PgcModel {
    type Error = Error;
    fn try_from(r: ModelRepr) -> Result<Self> {
        let sigma = CorrelationMatrix::from_rows(&r.sigma)?;
        if r.dim != r.marginals.len() {
            return Err(Error::DimensionMismatch(format!(
                "dim field is {} but {} marginals given",
                r.dim,
                r.marginals.len()
            )));
        }
        PgcModel::new(r.marginals, sigma)
    }
}

impl From<PgcModel> for ModelRepr {
    fn from(m: PgcModel) -> ModelRepr {
        ModelRepr {
            dim: m.dim(),
            marginals: m.marginals.clone(),
            sigma: m.sigma.entries().to_rows(),
        }
    }
}

impl PgcModel {
    pub fn new(marginals: Vec<MarginalSpec>, sigma: CorrelationMatrix) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::DimensionMismatch("no marginals given".into()));
        }
        if marginals.len() != sigma.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} marginals but correlation matrix is {}x{}",
                marginals.len(),
                sigma.dim(),
                sigma.dim()
            )));
        }
        let chol = sigma.cholesky()?;
        let mut model = PgcModel {
            marginals,
            sigma,
            chol,
            fingerprint: String::new(),
        };
        model.fingerprint = {
            let mut h = Sha256::new();
            h.update(model.canonical_json().as_bytes());
            hex_string(&h.finalize())
        };
        Ok(model)
    }

    /// Bivariate shorthand: two marginals and a single correlation.
    pub fn bivariate(m1: MarginalSpec, m2: MarginalSpec, rho: f64) -> Result<Self> {
        PgcModel::new(vec![m1, m2], CorrelationMatrix::from_rho(rho)?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginal(&self, j: usize) -> &MarginalSpec {
        &self.marginals[j]
    }

    pub fn marginals(&self) -> &[MarginalSpec] {
        &self.marginals
    }

    pub fn sigma(&self) -> &CorrelationMatrix {
        &self.sigma
    }

    pub fn cholesky_factor(&self) -> &Matrix {
        &self.chol
    }

    /// SHA-256 of the canonical serialization; stable across runs and
    /// platforms.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Canonical serialization: sorted keys, floats at fixed precision.
    pub fn canonical_json(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{{\"dim\":{},\"marginals\":[", self.dim()));
        for (i, m) in self.marginals.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&format!("{{\"family\":\"{}\",\"params\":[", m.family().key()));
            for (k, p) in m.params().iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                s.push_str(&format!("{p:.12e}"));
            }
            s.push_str("]}");
        }
        s.push_str("],\"sigma\":[");
        for i in 0..self.dim() {
            if i > 0 {
                s.push(',');
            }
            s.push('[');
            for j in 0..self.dim() {
                if j > 0 {
                    s.push(',');
                }
                s.push_str(&format!("{:.12e}", self.sigma.entry(i, j)));
            }
            s.push(']');
        }
        s.push_str("]}");
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("bad model JSON: {e}")))
    }

    /// Draw `n` i.i.d. rows. Uses stream ids `base..base + ceil(n/CHUNK)`
    /// where `base` is the id of the given stream.
    pub fn sample(&self, n: usize, stream: &RandomStream) -> Result<SampleMatrix> {
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        let d = self.dim();
        let n_chunks = n.div_ceil(SAMPLE_CHUNK);
        let chunks: Vec<Result<Vec<f64>>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let rows = if c + 1 == n_chunks {
                    n - c * SAMPLE_CHUNK
                } else {
                    SAMPLE_CHUNK
                };
                let mut sub = stream.substream(c as u64);
                let mut out = Vec::with_capacity(rows * d);
                let mut g = vec![0.0f64; d];
                for _ in 0..rows {
                    sub.fill_std_normal(&mut g);
                    for i in 0..d {
                        let mut z = 0.0;
                        for k in 0..=i {
                            z += self.chol.get(i, k) * g[k];
                        }
                        let u = normal::std_normal_cdf(z).clamp(f64::MIN_POSITIVE, ONE_BELOW);
                        out.push(self.marginals[i].quantile(u)?);
                    }
                }
                Ok(out)
            })
            .collect();
        let mut values = Vec::with_capacity(n * d);
        for chunk in chunks {
            values.extend_from_slice(&chunk?);
        }
        Ok(SampleMatrix {
            n,
            d,
            values,
            seed: stream.seed(),
            stream_id: stream.stream_id(),
            model_fingerprint: self.fingerprint.clone(),
        })
    }

    /// The correlated Gaussian stage of the sampler, before the marginal
    /// transform. Consumes the stream exactly like [`PgcModel::sample`].
    pub fn sample_gaussian(&self, n: usize, stream: &RandomStream) -> Result<Matrix> {
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        let d = self.dim();
        let mut out = Matrix::zeros(n, d);
        let n_chunks = n.div_ceil(SAMPLE_CHUNK);
        let mut g = vec![0.0f64; d];
        for c in 0..n_chunks {
            let rows = if c + 1 == n_chunks {
                n - c * SAMPLE_CHUNK
            } else {
                SAMPLE_CHUNK
            };
            let mut sub = stream.substream(c as u64);
            for r in 0..rows {
                sub.fill_std_normal(&mut g);
                for i in 0..d {
                    let mut z = 0.0;
                    for k in 0..=i {
                        z += self.chol.get(i, k) * g[k];
                    }
                    out.set(c * SAMPLE_CHUNK + r, i, z);
                }
            }
        }
        Ok(out)
    }

    /// Push a matrix of Gaussian scores through Φ and the marginal quantiles.
    pub fn quantile_transform(&self, scores: &Matrix) -> Result<Matrix> {
        if scores.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "scores have {} columns, model has {}",
                scores.cols(),
                self.dim()
            )));
        }
        let mut out = Matrix::zeros(scores.rows(), scores.cols());
        for r in 0..scores.rows() {
            for j in 0..self.dim() {
                let u = normal::std_normal_cdf(scores.get(r, j))
                    .clamp(f64::MIN_POSITIVE, ONE_BELOW);
                out.set(r, j, self.marginals[j].quantile(u)?);
            }
        }
        Ok(out)
    }

    /// Inverse copula transform Φ⁻¹(F_j(x)) per column.
    ///
    /// Values at the support boundary map to ∓∞ rather than erroring; values
    /// outside the support are a `Domain` error.
    pub fn gaussian_scores(&self, data: &SampleMatrix) -> Result<Matrix> {
        if data.d != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} columns, model has {}",
                data.d,
                self.dim()
            )));
        }
        let mut out = Matrix::zeros(data.n, data.d);
        for r in 0..data.n {
            for j in 0..data.d {
                let p = self.marginals[j].cdf(data.value(r, j))?;
                let z = if p <= 0.0 {
                    f64::NEG_INFINITY
                } else if p >= 1.0 {
                    f64::INFINITY
                } else {
                    normal::std_normal_quantile(p)?
                };
                out.set(r, j, z);
            }
        }
        Ok(out)
    }

    /// Gaussian threshold for the event X_j > x: Φ⁻¹(F_j(x)), with the
    /// conventions −∞ below the support and +∞ where F_j rounds to 1.
    pub fn gaussian_threshold(&self, j: usize, x: f64) -> Result<f64> {
        let spec = &self.marginals[j];
        if x < spec.support_lo() {
            return Ok(f64::NEG_INFINITY);
        }
        let p = spec.cdf(x)?;
        Ok(if p <= 0.0 {
            f64::NEG_INFINITY
        } else if p >= 1.0 {
            f64::INFINITY
        } else {
            normal::std_normal_quantile(p)?
        })
    }
}

/// An n×d sample with its provenance.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    seed: u64,
    stream_id: u64,
    model_fingerprint: String,
}

impl SampleMatrix {
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        if cols.is_empty() || cols[0].is_empty() {
            return Err(Error::EmptyData);
        }
        let n = cols[0].len();
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("ragged columns".into()));
        }
        let d = cols.len();
        let mut values = Vec::with_capacity(n * d);
        for r in 0..n {
            for col in cols {
                values.push(col[r]);
            }
        }
        Ok(SampleMatrix {
            n,
            d,
            values,
            seed: 0,
            stream_id: 0,
            model_fingerprint: String::new(),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.d + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.d..(row + 1) * self.d]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.value(r, col)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|j| self.column(j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
