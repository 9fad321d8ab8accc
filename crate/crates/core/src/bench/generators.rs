use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::structured::{structured_perturbation, StructuredKind, StructuredParams};
use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{cond_estimate, min_gap, symmetric_eigenvalues, ParametricModel, SymmetricMatrix};

/// Lowest eigenvalue of every generated base matrix.
pub const SPECTRUM_OFFSET: f64 = 1.0;
/// Bulk spacing of the regime study.
pub const REGIME_SPACING: f64 = 2e-2;
/// Bulk spacing of the scaling study.
pub const SCALING_SPACING: f64 = 0.1;
/// Largest first-order eigenvalue shift as a fraction of the bulk spacing.
pub const SHIFT_FRACTION: f64 = 0.1;
pub const SCALING_DIMENSIONS: [usize; 7] = [5, 10, 20, 50, 100, 200, 500];
pub const SIGMA_FLOOR: f64 = 1e-6;

const KEY_BASIS: u64 = 0x1000;
const KEY_COUPLING: u64 = 0x2000;
const KEY_INPUTS: u64 = 0x3000;
const KEY_NOISE: u64 = 0x4000;
const KEY_EPSILON: u64 = 0x5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    WellSeparated,
    NearDegenerate,
    CriticalGap,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 3] = [RegimeKind::WellSeparated, RegimeKind::NearDegenerate, RegimeKind::CriticalGap];

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeKind::WellSeparated => "well_separated",
            RegimeKind::NearDegenerate => "near_degenerate",
            RegimeKind::CriticalGap => "critical_gap",
        }
    }

    /// Gap of the closest adjacent pair (a lower bound for well-separated).
    pub fn gap_target(self) -> f64 {
        match self {
            RegimeKind::WellSeparated => 2e-3,
            RegimeKind::NearDegenerate => (5e-5f64 * 5e-4).sqrt(),
            RegimeKind::CriticalGap => 2e-5,
        }
    }

    /// Uniform half-widths of the two inputs.
    pub fn x_ranges(self) -> [f64; 2] {
        match self {
            RegimeKind::WellSeparated => [0.15, 0.10],
            RegimeKind::NearDegenerate => [0.08, 0.06],
            RegimeKind::CriticalGap => [0.03, 0.02],
        }
    }
}

impl std::str::FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegimeKind::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown regime '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSpec {
    pub regime: RegimeKind,
    pub n: usize,
    pub n_problems: usize,
    /// `[train, test]`.
    pub split: [usize; 2],
    pub gap_target: Option<f64>,
    pub x_ranges: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        Self { regime: RegimeKind::WellSeparated, n: 50, n_problems: 600, split: [400, 200], gap_target: None, x_ranges: None, seed: 0 }
    }
}

impl RegimeSpec {
    pub fn new(regime: RegimeKind, n: usize, train: usize, test: usize, seed: u64) -> Self {
        Self { regime, n, n_problems: train + test, split: [train, test], seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument("regime spec needs n ≥ 2".into()));
        }
        if self.split[0] + self.split[1] != self.n_problems {
            return Err(Error::InvalidArgument(format!(
                "split {}+{} does not add up to n_problems = {}",
                self.split[0], self.split[1], self.n_problems
            )));
        }
        if let Some(g) = self.gap_target {
            if !(g > 0.0 && g < REGIME_SPACING) {
                return Err(Error::InvalidArgument(format!("gap_target must lie in (0, {REGIME_SPACING}), got {g}")));
            }
        }
        if let Some(r) = self.x_ranges {
            if r.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument("x_ranges must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSpec {
    pub n: usize,
    pub complexity: u32,
    pub samples: usize,
    pub seed: u64,
    /// Fixes the per-configuration noise draw instead of sampling it.
    pub epsilon: Option<f64>,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self { n: 20, complexity: 1, samples: 60, seed: 0, epsilon: None }
    }
}

impl ScalingSpec {
    pub fn validate(&self) -> Result<()> {
        if !SCALING_DIMENSIONS.contains(&self.n) {
            return Err(Error::InvalidArgument(format!("scaling n must be one of {SCALING_DIMENSIONS:?}, got {}", self.n)));
        }
        if !(1..=6).contains(&self.complexity) {
            return Err(Error::InvalidArgument(format!("complexity must lie in 1..=6, got {}", self.complexity)));
        }
        if !(40..=80).contains(&self.samples) {
            return Err(Error::InvalidArgument(format!("samples must lie in 40..=80, got {}", self.samples)));
        }
        Ok(())
    }

    /// `min(8, max(3, ⌊n/2⌋))`.
    pub fn n_couplings(&self) -> usize {
        (self.n / 2).clamp(3, 8)
    }

    /// `10^{−complexity}`.
    pub fn gap_target(&self) -> f64 {
        10f64.powi(-(self.complexity as i32))
    }

    pub fn split(&self) -> [usize; 2] {
        let train = (0.7 * self.samples as f64).round() as usize;
        [train, self.samples - train]
    }
}

/// `0.002·sqrt(n)·(1 + 0.2·complexity)·(1 + 0.1ε)`, floored at `1e-6`.
pub fn scaling_sigma(n: usize, complexity: u32, epsilon: f64) -> f64 {
    (0.002 * (n as f64).sqrt() * (1.0 + 0.2 * complexity as f64) * (1.0 + 0.1 * epsilon)).max(SIGMA_FLOOR)
}

/// `0.002·sqrt(n)`.
pub fn regime_sigma(n: usize) -> f64 {
    0.002 * (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetadata {
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity: Option<u32>,
    pub n: usize,
    pub n_inputs: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub gap_target: f64,
    /// Smallest gap of the base matrix `P₀`.
    pub achieved_min_gap: f64,
    /// Median over generated samples of the smallest gap of `P(x; 0)`.
    pub dataset_median_min_gap: f64,
    pub x_ranges: Vec<f64>,
    pub sigma_obs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub coupling_kinds: Vec<StructuredKind>,
    pub base_norm: f64,
    pub base_condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedProblem {
    pub model: ParametricModel,
    pub train: Dataset,
    pub test: Dataset,
    pub metadata: ProblemMetadata,
}

fn haar_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng::keyed(seed, KEY_BASIS);
    let a = DMatrix::from_fn(n, n, |_, _| g.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Ladder starting at [`SPECTRUM_OFFSET`] with one adjacent pair in the middle
/// at `pair_gap`, if any.
fn target_spectrum(n: usize, spacing: f64, pair_gap: Option<f64>) -> Vec<f64> {
    let mid = n / 2;
    let mut lambda = Vec::with_capacity(n);
    let mut v = SPECTRUM_OFFSET;
    for i in 0..n {
        if i > 0 {
            v += match pair_gap {
                Some(g) if i == mid => g,
                _ => spacing,
            };
        }
        lambda.push(v);
    }
    lambda
}

fn rotate(q: &DMatrix<f64>, lambda: &[f64]) -> Result<SymmetricMatrix> {
    let mut scaled = q.clone();
    for (j, l) in lambda.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*l);
    }
    let a = &scaled * q.transpose();
    SymmetricMatrix::new((&a + a.transpose()) * 0.5)
}

fn sample_dataset(
    model: &ParametricModel,
    ranges: &[f64],
    count: usize,
    sigma: f64,
    seed: u64,
    offset: usize,
) -> Result<(Dataset, Vec<f64>)> {
    let mut samples = Vec::with_capacity(count);
    let mut gaps = Vec::with_capacity(count);
    for k in 0..count {
        let idx = (offset + k) as u64;
        let mut gx = rng::keyed(rng::mix(seed, idx), KEY_INPUTS);
        let x: Vec<f64> = ranges.iter().map(|h| if *h > 0.0 { gx.random_range(-*h..*h) } else { 0.0 }).collect();
        let clean = symmetric_eigenvalues(&model.assemble_inputs(&x)?)?;
        gaps.push(min_gap(&clean));
        let mut gn = rng::keyed(rng::mix(seed, idx), KEY_NOISE);
        let y = clean.iter().map(|v| v + sigma * gn.sample::<f64, _>(StandardNormal)).collect();
        samples.push(Observation { x, y });
    }
    Ok((Dataset::new(samples), gaps))
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

struct Assembly {
    model: ParametricModel,
    train: Dataset,
    test: Dataset,
    achieved_min_gap: f64,
    dataset_median_min_gap: f64,
    base_norm: f64,
    base_condition: f64,
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    lambda: &[f64],
    kinds: &[StructuredKind],
    coupling_norms: &[f64],
    ranges: &[f64],
    split: [usize; 2],
    sigma: f64,
    seed: u64,
) -> Result<Assembly> {
    let n = lambda.len();
    let q = haar_orthogonal(n, seed);
    let base = rotate(&q, lambda)?;
    let mut couplings = Vec::with_capacity(kinds.len());
    for (k, (kind, norm)) in kinds.iter().zip(coupling_norms).enumerate() {
        let params = StructuredParams { scale: *norm, ..Default::default() };
        couplings.push(structured_perturbation(*kind, n, rng::mix(seed, KEY_COUPLING + k as u64), &params)?);
    }
    let model = ParametricModel::with_coupling_corrections(base, couplings)?;
    let (train, mut gaps) = sample_dataset(&model, ranges, split[0], sigma, seed, 0)?;
    let (test, test_gaps) = sample_dataset(&model, ranges, split[1], sigma, seed, split[0])?;
    gaps.extend(test_gaps);
    let base_eig = symmetric_eigenvalues(&model.base)?;
    Ok(Assembly {
        achieved_min_gap: min_gap(&base_eig),
        dataset_median_min_gap: median(&mut gaps),
        base_norm: model.base.spectral_norm(),
        base_condition: cond_estimate(&model.base),
        model,
        train,
        test,
    })
}

/// Three-regime study problem: Haar-rotated base spectrum with the regime's
/// gap pattern, diagonal-trend and tridiagonal couplings and noisy sorted
/// eigenvalue observations at `w = 0`.
pub fn gen_regime(spec: &RegimeSpec) -> Result<GeneratedProblem> {
    spec.validate()?;
    let target = spec.gap_target.unwrap_or(spec.regime.gap_target());
    let pair_gap = match spec.regime {
        RegimeKind::WellSeparated => None,
        _ => Some(target),
    };
    let lambda = target_spectrum(spec.n, REGIME_SPACING, pair_gap);
    let ranges = spec.x_ranges.unwrap_or(spec.regime.x_ranges());
    // Coupling norms are fixed by the widest ranges so that narrower regimes perturb less.
    let widest = RegimeKind::WellSeparated.x_ranges();
    let kinds = [StructuredKind::Diagonal, StructuredKind::Tridiagonal];
    let norms: Vec<f64> = widest.iter().map(|h| 0.5 * SHIFT_FRACTION * REGIME_SPACING / h).collect();
    let sigma = regime_sigma(spec.n);
    let a = assemble(&lambda, &kinds, &norms, &ranges, spec.split, sigma, spec.seed)?;
    Ok(GeneratedProblem {
        metadata: ProblemMetadata {
            experiment: "regimes".into(),
            regime: Some(spec.regime),
            complexity: None,
            n: spec.n,
            n_inputs: kinds.len(),
            n_train: spec.split[0],
            n_test: spec.split[1],
            seed: spec.seed,
            gap_target: target,
            achieved_min_gap: a.achieved_min_gap,
            dataset_median_min_gap: a.dataset_median_min_gap,
            x_ranges: ranges.to_vec(),
            sigma_obs: sigma,
            epsilon: None,
            coupling_kinds: kinds.to_vec(),
            base_norm: a.base_norm,
            base_condition: a.base_condition,
        },
        model: a.model,
        train: a.train,
        test: a.test,
    })
}

/// Scaling study problem: one adjacent pair at `10^{−complexity}`, `K`
/// couplings drawn round-robin from the structured catalog.
pub fn gen_scaling(spec: &ScalingSpec) -> Result<GeneratedProblem> {
    spec.validate()?;
    let target = spec.gap_target();
    let lambda = target_spectrum(spec.n, SCALING_SPACING, Some(target));
    let k = spec.n_couplings();
    let kinds: Vec<StructuredKind> = (0..k).map(|i| StructuredKind::ALL[i % StructuredKind::ALL.len()]).collect();
    let half = 0.1;
    let norms = vec![SHIFT_FRACTION * SCALING_SPACING / (k as f64 * half); k];
    let ranges = vec![half; k];
    let epsilon = spec
        .epsilon
        .unwrap_or_else(|| {
            let config = rng::mix(spec.n as u64, spec.complexity as u64);
            rng::keyed(rng::mix(spec.seed, config), KEY_EPSILON).sample::<f64, _>(StandardNormal)
        });
    let sigma = scaling_sigma(spec.n, spec.complexity, epsilon);
    let split = spec.split();
    let a = assemble(&lambda, &kinds, &norms, &ranges, split, sigma, spec.seed)?;
    Ok(GeneratedProblem {
        metadata: ProblemMetadata {
            experiment: "scaling".into(),
            regime: None,
            complexity: Some(spec.complexity),
            n: spec.n,
            n_inputs: k,
            n_train: split[0],
            n_test: split[1],
            seed: spec.seed,
            gap_target: target,
            achieved_min_gap: a.achieved_min_gap,
            dataset_median_min_gap: a.dataset_median_min_gap,
            x_ranges: ranges,
            sigma_obs: sigma,
            epsilon: Some(epsilon),
            coupling_kinds: kinds,
            base_norm: a.base_norm,
            base_condition: a.base_condition,
        },
        model: a.model,
        train: a.train,
        test: a.test,
    })
}
