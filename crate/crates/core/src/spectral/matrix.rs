use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated when reading a matrix from JSON.
pub const JSON_SYMMETRY_TOL: f64 = 1e-12;

/// Dense real symmetric matrix.
///
/// Symmetry is exact: every constructor replaces the input by `(A + Aᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Symmetrizes `a` and rejects non-square or non-finite input.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
                context: "matrix must be square",
            });
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be positive".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self::symmetrized(a))
    }

    pub(crate) fn symmetrized(a: DMatrix<f64>) -> Self {
        let t = a.transpose();
        Self { data: (a + t) * 0.5 }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                    context: "row length",
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: DMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        Self { data: DMatrix::identity(n, n) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.data.row(i).iter().copied().collect())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        one_norm(&self.data)
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.iter().all(|v| *v == 0.0) {
            return 0.0;
        }
        self.data
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { data: &self.data * factor }
    }

    /// `self + shift·I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut data = self.data.clone();
        for i in 0..self.n() {
            data[(i, i)] += shift;
        }
        Self { data }
    }

    pub fn add_scaled(&mut self, other: &SymmetricMatrix, factor: f64) {
        self.data.zip_apply(&other.data, |a, b| *a += factor * b);
    }
}

pub(crate) fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl Serialize for SymmetricMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson { n: self.n(), rows: self.rows() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymmetricMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = MatrixJson::deserialize(deserializer)?;
        if raw.rows.len() != raw.n {
            return Err(D::Error::custom(format!(
                "matrix declares n = {} but has {} rows",
                raw.n,
                raw.rows.len()
            )));
        }
        let m = Self::from_rows(&raw.rows).map_err(D::Error::custom)?;
        let scale = raw
            .rows
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..raw.n {
            for j in (i + 1)..raw.n {
                let diff = (raw.rows[i][j] - raw.rows[j][i]).abs();
                if diff > JSON_SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
                    return Err(D::Error::custom(format!(
                        "matrix is not symmetric at ({i}, {j}): |Δ| = {diff:e}"
                    )));
                }
            }
        }
        Ok(m)
    }
}
