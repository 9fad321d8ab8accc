use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::generators::{gen_regime, gen_scaling, GeneratedProblem, ProblemMetadata, RegimeKind, RegimeSpec, ScalingSpec};
use crate::calibration::{csv_header, report_from_predictions, CalibrationReport};
use crate::error::{Error, Result};
use crate::rng;
use crate::variational::{predict_batch, train, PredictiveDistribution, PriorSpec, TrainingConfig, DEFAULT_PRIOR_STD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Regimes,
    Scaling,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Regimes => "regimes",
            ExperimentKind::Scaling => "scaling",
        }
    }
}

fn default_regimes() -> Vec<RegimeKind> {
    RegimeKind::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_prior_std() -> f64 {
    DEFAULT_PRIOR_STD
}

fn default_predict_samples() -> usize {
    25
}

/// Grid of configurations for one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Regime study only.
    #[serde(default = "default_regimes")]
    pub regimes: Vec<RegimeKind>,
    pub n: Vec<usize>,
    /// Regime study: `[train, test]`.
    #[serde(default)]
    pub split: Option<[usize; 2]>,
    /// Scaling study only.
    #[serde(default)]
    pub complexity: Vec<u32>,
    /// Scaling study: samples per configuration.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default = "default_prior_std")]
    pub prior_std: f64,
    #[serde(default = "default_predict_samples")]
    pub predict_samples: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// CSV of externally computed baseline rows.
    #[serde(default)]
    pub baselines: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n.is_empty() {
            return bad("n: at least one dimension is required".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed is required".into());
        }
        if !(self.prior_std > 0.0) {
            return bad("prior_std: must be positive".into());
        }
        if self.predict_samples < 2 {
            return bad("predict_samples: must be at least 2".into());
        }
        self.training.validate().map_err(|e| Error::InvalidArgument(format!("training: {e}")))?;
        match self.experiment {
            ExperimentKind::Regimes => {
                if !self.complexity.is_empty() || self.samples.is_some() || self.epsilon.is_some() {
                    return bad("complexity, samples and epsilon apply to scaling experiments only".into());
                }
                if self.regimes.is_empty() {
                    return bad("regimes: at least one regime is required".into());
                }
            }
            ExperimentKind::Scaling => {
                if self.split.is_some() {
                    return bad("split applies to regime experiments only".into());
                }
                if self.complexity.is_empty() {
                    return bad("complexity: at least one level is required".into());
                }
            }
        }
        for spec in self.problems() {
            spec.validate().map_err(|e| Error::InvalidArgument(format!("{}: {e}", spec.id())))?;
        }
        Ok(())
    }

    /// Every configuration in grid order.
    pub fn problems(&self) -> Vec<ProblemSpec> {
        let mut out = Vec::new();
        match self.experiment {
            ExperimentKind::Regimes => {
                let [train, test] = self.split.unwrap_or([400, 200]);
                for &n in &self.n {
                    for &regime in &self.regimes {
                        for &seed in &self.seeds {
                            out.push(ProblemSpec::Regime(RegimeSpec::new(regime, n, train, test, seed)));
                        }
                    }
                }
            }
            ExperimentKind::Scaling => {
                for &n in &self.n {
                    for &complexity in &self.complexity {
                        for &seed in &self.seeds {
                            out.push(ProblemSpec::Scaling(ScalingSpec {
                                n,
                                complexity,
                                samples: self.samples.unwrap_or(60),
                                seed,
                                epsilon: self.epsilon,
                            }));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ProblemSpec {
    Regime(RegimeSpec),
    Scaling(ScalingSpec),
}

impl ProblemSpec {
    pub fn id(&self) -> String {
        match self {
            ProblemSpec::Regime(s) => format!("{}-n{}-s{}", s.regime.as_str(), s.n, s.seed),
            ProblemSpec::Scaling(s) => format!("scaling-n{}-c{}-s{}", s.n, s.complexity, s.seed),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ProblemSpec::Regime(s) => s.seed,
            ProblemSpec::Scaling(s) => s.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemSpec::Regime(s) => s.validate(),
            ProblemSpec::Scaling(s) => s.validate(),
        }
    }

    pub fn generate(&self) -> Result<GeneratedProblem> {
        match self {
            ProblemSpec::Regime(s) => gen_regime(s),
            ProblemSpec::Scaling(s) => gen_scaling(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub max_error: f64,
}

/// Point accuracy of predictive means over all test eigenvalues.
pub fn accuracy_metrics(preds: &[PredictiveDistribution], y: &[Vec<f64>]) -> Result<AccuracyMetrics> {
    if preds.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: preds.len(), got: y.len(), context: "observations" });
    }
    let mut pairs = Vec::new();
    for (p, obs) in preds.iter().zip(y) {
        if p.mean.len() != obs.len() {
            return Err(Error::DimensionMismatch { expected: p.mean.len(), got: obs.len(), context: "observation" });
        }
        pairs.extend(p.mean.iter().copied().zip(obs.iter().copied()));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("accuracy metrics need at least one observation".into()));
    }
    let n = pairs.len() as f64;
    let mean_y = pairs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let ss_res: f64 = pairs.iter().map(|(m, y)| (y - m).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    Ok(AccuracyMetrics {
        rmse: (ss_res / n).sqrt(),
        mae: pairs.iter().map(|(m, y)| (y - m).abs()).sum::<f64>() / n,
        r2: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN },
        max_error: pairs.iter().map(|(m, y)| (y - m).abs()).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_elbo: f64,
    pub final_elbo: f64,
    pub converged: bool,
    pub convergence_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    pub epistemic_var: Vec<f64>,
    pub total_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub metadata: Option<ProblemMetadata>,
    pub status: String,
    pub error: Option<String>,
    /// True when the failure came from the numerics rather than the inputs.
    pub numerical_failure: bool,
    pub report: Option<CalibrationReport>,
    pub accuracy: Option<AccuracyMetrics>,
    pub training: Option<TrainingSummary>,
    pub eig_attempts: usize,
    pub eig_successes: usize,
    pub train_seconds: f64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<PredictionRecord>>,
    #[serde(skip)]
    pub trace: Vec<[f64; 3]>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep per-sample predictive distributions in the results.
    pub full: bool,
    /// Replaces the configured seed list.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub baselines: Vec<BTreeMap<String, serde_json::Value>>,
    pub wall_seconds: f64,
}

impl ExperimentResults {
    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| !r.succeeded())
    }

    pub fn run(&self, id: &str) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.id == id)
    }

    pub fn metrics_header() -> Vec<String> {
        let mut cols: Vec<String> = [
            "id", "experiment", "regime", "n", "complexity", "seed", "n_train", "n_test", "sigma_obs", "gap_target",
            "achieved_min_gap", "status",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        cols.extend(csv_header());
        cols.extend(
            ["rmse", "mae", "r2", "max_error", "eig_attempts", "eig_successes", "epochs_run", "converged"]
                .iter()
                .map(|s| s.to_string()),
        );
        cols
    }

    /// One row per configuration; timing lives in the JSON only so reruns
    /// produce identical bytes.
    pub fn write_metrics_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header = Self::metrics_header();
        w.write_record(&header)?;
        let n_report = csv_header().len();
        for r in &self.runs {
            let m = r.metadata.as_ref();
            let opt = |v: Option<String>| v.unwrap_or_default();
            let mut row = vec![
                r.id.clone(),
                self.experiment.as_str().to_string(),
                opt(m.and_then(|m| m.regime).map(|g| g.as_str().to_string())),
                opt(m.map(|m| m.n.to_string())),
                opt(m.and_then(|m| m.complexity).map(|c| c.to_string())),
                opt(m.map(|m| m.seed.to_string())),
                opt(m.map(|m| m.n_train.to_string())),
                opt(m.map(|m| m.n_test.to_string())),
                opt(m.map(|m| m.sigma_obs.to_string())),
                opt(m.map(|m| m.gap_target.to_string())),
                opt(m.map(|m| m.achieved_min_gap.to_string())),
                r.status.clone(),
            ];
            match &r.report {
                Some(rep) => row.extend(rep.csv_row()),
                None => row.extend(std::iter::repeat_n(String::new(), n_report)),
            }
            match &r.accuracy {
                Some(a) => row.extend([a.rmse, a.mae, a.r2, a.max_error].iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
            row.push(r.eig_attempts.to_string());
            row.push(r.eig_successes.to_string());
            row.push(opt(r.training.as_ref().map(|t| t.epochs_run.to_string())));
            row.push(opt(r.training.as_ref().map(|t| t.converged.to_string())));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `id, epoch, elbo, grad_rms, min_gap`.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "epoch", "elbo", "grad_rms", "min_gap"])?;
        for r in &self.runs {
            for (epoch, [elbo, rms, gap]) in r.trace.iter().enumerate() {
                w.write_record([r.id.clone(), epoch.to_string(), elbo.to_string(), rms.to_string(), gap.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `results.json`, `metrics.csv` and `trace.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.json"), serde_json::to_string_pretty(self)?)?;
        self.write_metrics_csv(fs::File::create(dir.join("metrics.csv"))?)?;
        self.write_trace_csv(fs::File::create(dir.join("trace.csv"))?)?;
        Ok(())
    }
}

/// Reads baseline rows keyed by column name; numeric cells become numbers.
pub fn load_baselines(path: &Path) -> Result<Vec<BTreeMap<String, serde_json::Value>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = header
            .iter()
            .zip(rec.iter())
            .map(|(k, v)| {
                let value = match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => serde_json::json!(x),
                    _ => serde_json::Value::String(v.to_string()),
                };
                (k.to_string(), value)
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

/// Generate, train, predict and evaluate one configuration.
pub fn run_problem(spec: &ProblemSpec, config: &ExperimentConfig, full: bool) -> RunRecord {
    let start = Instant::now();
    let mut rec = RunRecord {
        id: spec.id(),
        metadata: None,
        status: "failed".into(),
        error: None,
        numerical_failure: false,
        report: None,
        accuracy: None,
        training: None,
        eig_attempts: 0,
        eig_successes: 0,
        train_seconds: 0.0,
        wall_seconds: 0.0,
        predictions: None,
        trace: Vec::new(),
    };
    if let Err(e) = run_into(spec, config, full, &mut rec) {
        rec.numerical_failure = e.is_numerical();
        if let Error::TrainingAborted { trace, .. } = &e {
            rec.trace = trace_rows(trace);
        }
        rec.error = Some(e.to_string());
    } else {
        rec.status = "ok".into();
    }
    rec.wall_seconds = start.elapsed().as_secs_f64();
    rec
}

fn trace_rows(trace: &crate::variational::TrainingTrace) -> Vec<[f64; 3]> {
    (0..trace.elbo_history.len())
        .map(|i| [trace.elbo_history[i], trace.grad_rms_history[i], trace.min_gap_history[i]])
        .collect()
}

fn run_into(spec: &ProblemSpec, config: &ExperimentConfig, full: bool, rec: &mut RunRecord) -> Result<()> {
    let problem = spec.generate()?;
    let sigma = problem.metadata.sigma_obs;
    rec.metadata = Some(problem.metadata.clone());
    let prior = PriorSpec::isotropic(problem.model.n_latent(), config.prior_std)?;
    let training = TrainingConfig { seed: rng::mix(config.training.seed, spec.seed()), ..config.training.clone() };
    let per_epoch = training.mc_samples * problem.train.len();

    let t0 = Instant::now();
    let outcome = train(&problem.model, &problem.train, &prior, sigma, &training);
    rec.train_seconds = t0.elapsed().as_secs_f64();
    let (q, trace) = match outcome {
        Ok(v) => v,
        Err(e) => {
            if let Error::TrainingAborted { trace, .. } = &e {
                rec.eig_successes = trace.elbo_history.len() * per_epoch;
                rec.eig_attempts = rec.eig_successes + per_epoch;
            }
            return Err(e);
        }
    };
    let epochs_run = trace.elbo_history.len();
    rec.eig_attempts = epochs_run * per_epoch;
    rec.eig_successes = rec.eig_attempts;
    rec.trace = trace_rows(&trace);
    rec.training = Some(TrainingSummary {
        epochs_run,
        best_epoch: trace.best_epoch,
        best_elbo: trace.elbo_history.get(trace.best_epoch).copied().unwrap_or(f64::NAN),
        final_elbo: trace.elbo_history.last().copied().unwrap_or(f64::NAN),
        converged: trace.converged,
        convergence_epoch: trace.convergence_epoch,
    });

    let xs: Vec<Vec<f64>> = problem.test.samples.iter().map(|s| s.x.clone()).collect();
    let ys: Vec<Vec<f64>> = problem.test.samples.iter().map(|s| s.y.clone()).collect();
    let n_pred = config.predict_samples * xs.len();
    rec.eig_attempts += n_pred;
    let preds = predict_batch(&q, &problem.model, &xs, sigma, config.predict_samples, rng::mix(training.seed, 0x9e))?;
    rec.eig_successes += n_pred;

    rec.report = Some(report_from_predictions(&preds, &ys)?);
    rec.accuracy = Some(accuracy_metrics(&preds, &ys)?);
    if full {
        rec.predictions = Some(
            preds
                .iter()
                .zip(&problem.test.samples)
                .map(|(p, s)| PredictionRecord {
                    x: s.x.clone(),
                    y: s.y.clone(),
                    mean: p.mean.clone(),
                    epistemic_var: p.epistemic_var.clone(),
                    total_std: p.total_std(),
                })
                .collect(),
        );
    }
    Ok(())
}

/// Runs every configuration of the grid and writes the results bundle when an
/// output directory is set. Failed configurations are kept as error records.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResults> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seeds = vec![seed];
    }
    config.validate()?;
    let baselines = match &config.baselines {
        Some(path) => load_baselines(path)?,
        None => Vec::new(),
    };
    let start = Instant::now();
    let runs: Vec<RunRecord> = config.problems().iter().map(|spec| run_problem(spec, &config, opts.full)).collect();
    let results = ExperimentResults {
        experiment: config.experiment,
        config: config.clone(),
        runs,
        baselines,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = opts.output_dir.as_ref().or(config.output_dir.as_ref()) {
        results.write(dir)?;
    }
    Ok(results)
}
