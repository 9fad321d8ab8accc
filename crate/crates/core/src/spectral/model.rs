use serde::{Deserialize, Serialize};

use super::SymmetricMatrix;
use crate::error::{Error, Result};

/// Affine matrix family `P(x; w) = P₀ + Σ_k x_k P_k + Σ_m w_m B_m`.
///
/// `x` are observed per-sample inputs, `w` are latent corrections carrying the
/// posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricModel {
    pub base: SymmetricMatrix,
    pub couplings: Vec<SymmetricMatrix>,
    pub corrections: Vec<SymmetricMatrix>,
}

impl ParametricModel {
    pub fn new(
        base: SymmetricMatrix,
        couplings: Vec<SymmetricMatrix>,
        corrections: Vec<SymmetricMatrix>,
    ) -> Result<Self> {
        let model = Self { base, couplings, corrections };
        model.validate()?;
        Ok(model)
    }

    /// Latent corrections default to the coupling basis.
    pub fn with_coupling_corrections(
        base: SymmetricMatrix,
        couplings: Vec<SymmetricMatrix>,
    ) -> Result<Self> {
        let corrections = couplings.clone();
        Self::new(base, couplings, corrections)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.base.n();
        if self.corrections.is_empty() {
            return Err(Error::InvalidArgument(
                "model needs at least one correction matrix".into(),
            ));
        }
        for m in self.couplings.iter().chain(&self.corrections) {
            if m.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.n(),
                    context: "model member dimension",
                });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn n_inputs(&self) -> usize {
        self.couplings.len()
    }

    pub fn n_latent(&self) -> usize {
        self.corrections.len()
    }

    /// `P₀ + Σ x_k P_k + Σ w_m B_m`.
    pub fn assemble(&self, x: &[f64], w: &[f64]) -> Result<SymmetricMatrix> {
        let mut p = self.assemble_inputs(x)?;
        self.add_corrections(&mut p, w)?;
        Ok(p)
    }

    /// `P₀ + Σ x_k P_k`, the part that does not depend on the latent corrections.
    pub fn assemble_inputs(&self, x: &[f64]) -> Result<SymmetricMatrix> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.len(),
                context: "input vector x",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input vector x"));
        }
        let mut p = self.base.clone();
        for (xk, pk) in x.iter().zip(&self.couplings) {
            if *xk != 0.0 {
                p.add_scaled(pk, *xk);
            }
        }
        Ok(p)
    }

    /// Adds `Σ w_m B_m` to `p` in place.
    pub fn add_corrections(&self, p: &mut SymmetricMatrix, w: &[f64]) -> Result<()> {
        if w.len() != self.n_latent() {
            return Err(Error::DimensionMismatch {
                expected: self.n_latent(),
                got: w.len(),
                context: "latent vector w",
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent vector w"));
        }
        for (wm, bm) in w.iter().zip(&self.corrections) {
            if *wm != 0.0 {
                p.add_scaled(bm, *wm);
            }
        }
        Ok(())
    }

    /// Largest spectral norm among the correction matrices.
    pub fn max_correction_norm(&self) -> f64 {
        self.corrections
            .iter()
            .map(SymmetricMatrix::spectral_norm)
            .fold(0.0, f64::max)
    }
}
