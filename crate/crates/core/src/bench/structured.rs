use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::SymmetricMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuredKind {
    Diagonal,
    Tridiagonal,
    Block,
    LongRange,
    RankOne,
    Circulant,
}

impl StructuredKind {
    pub const ALL: [StructuredKind; 6] = [
        StructuredKind::Diagonal,
        StructuredKind::Tridiagonal,
        StructuredKind::Block,
        StructuredKind::LongRange,
        StructuredKind::RankOne,
        StructuredKind::Circulant,
    ];
}

impl std::str::FromStr for StructuredKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidArgument(format!("unknown structured perturbation kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructuredParams {
    /// Diagonal kind: entries `alpha·(1 + beta·i)`.
    pub alpha: f64,
    pub beta: f64,
    /// Tridiagonal kind: off-diagonal `gamma·e^{−delta·i}`.
    pub gamma: f64,
    pub delta: f64,
    /// Block kind: block size.
    pub block: usize,
    /// Long-range kind: decay length.
    pub xi: f64,
    /// Rank-one kind: weight of `v vᵀ`.
    pub eta: f64,
    /// Circulant kind: first row; a decaying default when empty.
    pub stencil: Vec<f64>,
    /// Spectral norm of the result.
    pub scale: f64,
}

impl Default for StructuredParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.1, gamma: 1.0, delta: 0.1, block: 4, xi: 2.0, eta: 1.0, stencil: Vec::new(), scale: 1.0 }
    }
}

/// Random symmetric matrix of one of six structured kinds, normalized to unit
/// spectral norm and multiplied by `params.scale`.
pub fn structured_perturbation(kind: StructuredKind, n: usize, seed: u64, params: &StructuredParams) -> Result<SymmetricMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("structured perturbation needs n ≥ 1".into()));
    }
    let mut g = rng::keyed(seed, kind as u64);
    let a = match kind {
        StructuredKind::Diagonal => {
            DMatrix::from_fn(n, n, |i, j| if i == j { params.alpha * (1.0 + params.beta * i as f64) } else { 0.0 })
        }
        StructuredKind::Tridiagonal => DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                params.gamma * (-params.delta * i.min(j) as f64).exp()
            } else {
                0.0
            }
        }),
        StructuredKind::Block => {
            let b = params.block.max(1);
            let mut a = DMatrix::zeros(n, n);
            for start in (0..n).step_by(b) {
                let end = (start + b).min(n);
                for i in start..end {
                    for j in i..end {
                        let v: f64 = g.sample(StandardNormal);
                        a[(i, j)] = v;
                        a[(j, i)] = v;
                    }
                }
            }
            a
        }
        StructuredKind::LongRange => DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else if params.xi > 0.0 {
                (-(i.abs_diff(j) as f64) / params.xi).exp()
            } else {
                0.0
            }
        }),
        StructuredKind::RankOne => {
            let mut v = DVector::from_fn(n, |_, _| g.sample::<f64, _>(StandardNormal));
            let norm = v.norm();
            if norm > 0.0 {
                v /= norm;
            }
            &v * v.transpose() * params.eta
        }
        StructuredKind::Circulant => {
            let stencil: Vec<f64> = if params.stencil.is_empty() {
                (0..n).map(|k| (-(k.min(n - k) as f64)).exp()).collect()
            } else if params.stencil.len() == n {
                params.stencil.clone()
            } else {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: params.stencil.len(),
                    context: "circulant stencil",
                });
            };
            DMatrix::from_fn(n, n, |i, j| stencil[(j + n - i) % n])
        }
    };
    let sym = SymmetricMatrix::new(a)?;
    let norm = sym.spectral_norm();
    Ok(if norm > 0.0 { sym.scaled(params.scale / norm) } else { sym })
}
