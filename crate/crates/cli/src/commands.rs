use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use spectral_uq::bench::{
    accuracy_metrics, deployment_score, feasibility_check, gen_regime, gen_scaling, run_experiment, AccuracyMetrics,
    DeploymentScore, ExperimentConfig, FeasibilityVerdict, GeneratedProblem, ProblemMetadata, RegimeSpec, RunOptions,
    ScalingSpec,
};
use spectral_uq::calibration::{csv_header, report_from_predictions, CalibrationReport};
use spectral_uq::perturbation::propagate_adaptive;
use spectral_uq::spectral::ParametricModel;
use spectral_uq::variational::{
    predict_batch, train as fit, PredictiveDistribution, PriorSpec, TrainingConfig, TrainingTrace, VariationalPosterior,
    DEFAULT_PRIOR_STD,
};
use spectral_uq::{Dataset, Error};

use crate::CommonArgs;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
const DEFAULT_OUTPUT: &str = "out";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Parses the config, taking `output_dir` out before schema validation.
fn load_config<T: DeserializeOwned>(args: &CommonArgs) -> CliResult<(T, PathBuf)> {
    let mut value: serde_json::Value = read_json(&args.config)?;
    let from_config = match value.as_object_mut().and_then(|m| m.remove("output_dir")) {
        Some(serde_json::Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(CliError::input(format!("{}: output_dir must be a string", args.config.display()))),
        None => None,
    };
    let config = serde_json::from_value(value)
        .map_err(|e| CliError::input(format!("{}: invalid config: {e}", args.config.display())))?;
    let out = args.output.clone().or(from_config).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    Ok((config, out))
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn log(args: &CommonArgs, level: u8, msg: impl AsRef<str>) {
    if args.verbose >= level {
        eprintln!("{}", msg.as_ref());
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
enum GenerateConfig {
    Regimes(RegimeSpec),
    Scaling(ScalingSpec),
}

pub fn generate(args: &CommonArgs) -> CliResult {
    let (config, out): (GenerateConfig, PathBuf) = load_config(args)?;
    let problem: GeneratedProblem = match config {
        GenerateConfig::Regimes(mut spec) => {
            spec.seed = args.seed.unwrap_or(spec.seed);
            gen_regime(&spec)?
        }
        GenerateConfig::Scaling(mut spec) => {
            spec.seed = args.seed.unwrap_or(spec.seed);
            gen_scaling(&spec)?
        }
    };
    create_dir(&out)?;
    write_json(&out.join("model.json"), &problem.model)?;
    write_json(&out.join("train.json"), &problem.train)?;
    write_json(&out.join("test.json"), &problem.test)?;
    write_json(&out.join("metadata.json"), &problem.metadata)?;
    log(args, 1, format!("achieved min gap {:e}, sigma_obs {:e}", problem.metadata.achieved_min_gap, problem.metadata.sigma_obs));
    Ok(())
}

fn default_prior_std() -> f64 {
    DEFAULT_PRIOR_STD
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfig {
    data_dir: PathBuf,
    #[serde(default)]
    training: TrainingConfig,
    #[serde(default = "default_prior_std")]
    prior_std: f64,
    /// Defaults to the value recorded in `metadata.json`.
    #[serde(default)]
    sigma_obs: Option<f64>,
}

fn sigma_for(data_dir: &Path, explicit: Option<f64>) -> CliResult<f64> {
    match explicit {
        Some(s) => Ok(s),
        None => {
            let meta: ProblemMetadata = read_json(&data_dir.join("metadata.json"))?;
            Ok(meta.sigma_obs)
        }
    }
}

fn write_trace(path: &Path, trace: &TrainingTrace) -> CliResult {
    let file = fs::File::create(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    trace.write_csv(file)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainingReport {
    epochs_run: usize,
    best_epoch: usize,
    best_elbo: f64,
    converged: bool,
    convergence_epoch: Option<usize>,
}

pub fn train(args: &CommonArgs) -> CliResult {
    let (mut config, out): (TrainConfig, PathBuf) = load_config(args)?;
    if let Some(seed) = args.seed {
        config.training.seed = seed;
    }
    let model: ParametricModel = read_json(&config.data_dir.join("model.json"))?;
    let data: Dataset = read_json(&config.data_dir.join("train.json"))?;
    let sigma = sigma_for(&config.data_dir, config.sigma_obs)?;
    let prior = PriorSpec::isotropic(model.n_latent(), config.prior_std)?;
    create_dir(&out)?;
    match fit(&model, &data, &prior, sigma, &config.training) {
        Ok((q, trace)) => {
            write_json(&out.join("posterior.json"), &q)?;
            write_trace(&out.join("trace.csv"), &trace)?;
            let report = TrainingReport {
                epochs_run: trace.elbo_history.len(),
                best_epoch: trace.best_epoch,
                best_elbo: trace.elbo_history.get(trace.best_epoch).copied().unwrap_or(f64::NAN),
                converged: trace.converged,
                convergence_epoch: trace.convergence_epoch,
            };
            log(args, 1, format!("trained {} epochs, best ELBO {:.6e} at epoch {}", report.epochs_run, report.best_elbo, report.best_epoch));
            write_json(&out.join("training.json"), &report)
        }
        Err(e) => {
            if let Error::TrainingAborted { trace, .. } = &e {
                write_trace(&out.join("trace.csv"), trace)?;
            }
            Err(e.into())
        }
    }
}

fn default_samples() -> usize {
    25
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    data_dir: PathBuf,
    /// Defaults to `<data_dir>/posterior.json`.
    #[serde(default)]
    posterior: Option<PathBuf>,
    /// Defaults to the inputs of the test split.
    #[serde(default)]
    inputs: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default)]
    sigma_obs: Option<f64>,
    #[serde(default = "default_scale")]
    variance_scale: f64,
    #[serde(default)]
    seed: u64,
}

struct Loaded {
    model: ParametricModel,
    posterior: VariationalPosterior,
    sigma: f64,
}

fn load_fitted(config: &PredictConfig) -> CliResult<Loaded> {
    let model: ParametricModel = read_json(&config.data_dir.join("model.json"))?;
    let path = config.posterior.clone().unwrap_or_else(|| config.data_dir.join("posterior.json"));
    let posterior: VariationalPosterior = read_json(&path)?;
    posterior.validate()?;
    if posterior.dim() != model.n_latent() {
        return Err(CliError::input(format!(
            "posterior has {} latent dimensions, model has {}",
            posterior.dim(),
            model.n_latent()
        )));
    }
    if config.samples < 2 {
        return Err(CliError::input("samples must be at least 2"));
    }
    Ok(Loaded { model, posterior, sigma: sigma_for(&config.data_dir, config.sigma_obs)? })
}

fn run_predictions(config: &PredictConfig, fitted: &Loaded, xs: &[Vec<f64>]) -> CliResult<Vec<PredictiveDistribution>> {
    let preds = predict_batch(&fitted.posterior, &fitted.model, xs, fitted.sigma, config.samples, config.seed)?;
    if config.variance_scale == 1.0 {
        return Ok(preds);
    }
    Ok(preds.iter().map(|p| p.with_variance_scale(config.variance_scale)).collect::<Result<_, _>>()?)
}

#[derive(Debug, Serialize)]
struct PredictionOut<'a> {
    x: &'a [f64],
    #[serde(flatten)]
    prediction: &'a PredictiveDistribution,
}

pub fn predict(args: &CommonArgs) -> CliResult {
    let (mut config, out): (PredictConfig, PathBuf) = load_config(args)?;
    config.seed = args.seed.unwrap_or(config.seed);
    let fitted = load_fitted(&config)?;
    let xs = match &config.inputs {
        Some(xs) => xs.clone(),
        None => {
            let test: Dataset = read_json(&config.data_dir.join("test.json"))?;
            test.samples.into_iter().map(|s| s.x).collect()
        }
    };
    let preds = run_predictions(&config, &fitted, &xs)?;
    let rows: Vec<PredictionOut> = xs.iter().zip(&preds).map(|(x, p)| PredictionOut { x, prediction: p }).collect();
    create_dir(&out)?;
    write_json(&out.join("predictions.json"), &rows)
}

#[derive(Debug, Serialize)]
struct EvaluationResults {
    metadata: Option<ProblemMetadata>,
    report: CalibrationReport,
    accuracy: AccuracyMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<Vec<serde_json::Value>>,
}

pub fn evaluate(args: &CommonArgs) -> CliResult {
    let (mut config, out): (PredictConfig, PathBuf) = load_config(args)?;
    if config.inputs.is_some() {
        return Err(CliError::input("evaluate uses the test split; 'inputs' is not accepted"));
    }
    config.seed = args.seed.unwrap_or(config.seed);
    let fitted = load_fitted(&config)?;
    let test: Dataset = read_json(&config.data_dir.join("test.json"))?;
    test.validate(fitted.model.n_inputs(), fitted.model.n())?;
    let xs: Vec<Vec<f64>> = test.samples.iter().map(|s| s.x.clone()).collect();
    let ys: Vec<Vec<f64>> = test.samples.iter().map(|s| s.y.clone()).collect();
    let preds = run_predictions(&config, &fitted, &xs)?;
    let report = report_from_predictions(&preds, &ys)?;
    let accuracy = accuracy_metrics(&preds, &ys)?;
    let metadata: Option<ProblemMetadata> = read_json(&config.data_dir.join("metadata.json")).ok();

    create_dir(&out)?;
    let path = out.join("metrics.csv");
    let mut header: Vec<String> = ["n", "regime", "complexity", "n_test"].iter().map(|s| s.to_string()).collect();
    header.extend(csv_header());
    header.extend(["rmse", "mae", "r2", "max_error"].iter().map(|s| s.to_string()));
    let m = metadata.as_ref();
    let mut row = vec![
        fitted.model.n().to_string(),
        m.and_then(|m| m.regime).map(|r| r.as_str().to_string()).unwrap_or_default(),
        m.and_then(|m| m.complexity).map(|c| c.to_string()).unwrap_or_default(),
        test.len().to_string(),
    ];
    row.extend(report.csv_row());
    row.extend([accuracy.rmse, accuracy.mae, accuracy.r2, accuracy.max_error].iter().map(|v| v.to_string()));
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record(&header).map_err(Error::from)?;
    w.write_record(&row).map_err(Error::from)?;
    w.flush().map_err(Error::from)?;

    let predictions = args.full.then(|| {
        test.samples
            .iter()
            .zip(&preds)
            .map(|(s, p)| serde_json::json!({"x": s.x, "y": s.y, "mean": p.mean, "epistemic_var": p.epistemic_var, "total_std": p.total_std()}))
            .collect()
    });
    log(args, 1, format!("ece {:.4}, cov95 {:.3}, rmse {:.4e}", report.ece, report.coverage_at(0.95), accuracy.rmse));
    write_json(&out.join("results.json"), &EvaluationResults { metadata, report, accuracy, predictions })
}

fn default_tau() -> f64 {
    1e-8
}

fn default_n_data() -> usize {
    1000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropagateConfig {
    #[serde(default)]
    model: Option<ParametricModel>,
    /// Path to a `model.json`, used when `model` is absent.
    #[serde(default)]
    model_file: Option<PathBuf>,
    #[serde(default)]
    x: Option<Vec<f64>>,
    #[serde(default)]
    mean_w: Option<Vec<f64>>,
    covariance: Vec<Vec<f64>>,
    #[serde(default = "default_tau")]
    tau_num: f64,
    #[serde(default = "default_n_data")]
    n_data: usize,
}

pub fn propagate(args: &CommonArgs) -> CliResult {
    let (config, out): (PropagateConfig, PathBuf) = load_config(args)?;
    let model = match (config.model, &config.model_file) {
        (Some(m), None) => m,
        (None, Some(path)) => read_json(path)?,
        _ => return Err(CliError::input("exactly one of 'model' and 'model_file' is required")),
    };
    model.validate()?;
    let m = model.n_latent();
    let cov = &config.covariance;
    if cov.len() != m || cov.iter().any(|r| r.len() != m) {
        return Err(CliError::input(format!("covariance must be a {m}x{m} matrix")));
    }
    let cov = nalgebra::DMatrix::from_fn(m, m, |i, j| cov[i][j]);
    let x = config.x.unwrap_or_else(|| vec![0.0; model.n_inputs()]);
    let w = config.mean_w.unwrap_or_else(|| vec![0.0; m]);
    let p = model.assemble(&x, &w)?;
    let result = propagate_adaptive(&p, &model, &cov, config.tau_num, config.n_data)?;
    if let Some(msg) = result.warning_message() {
        println!("warning: {msg} (reliability {:.3})", result.reliability);
    }
    log(args, 1, format!("regimes: {:?}", result.regime));
    create_dir(&out)?;
    write_json(&out.join("uncertainty.json"), &result)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreConfig {
    n_data: usize,
    n: usize,
    delta_min: f64,
    eps_target: f64,
    kappa: f64,
    /// Adjacent spectral gaps; defaults to `[delta_min]`.
    #[serde(default)]
    gaps: Option<Vec<f64>>,
    p_norm: f64,
    sigma: f64,
}

#[derive(Debug, Serialize)]
struct ScoreOut {
    #[serde(flatten)]
    score: DeploymentScore,
    feasibility: FeasibilityVerdict,
}

pub fn score(args: &CommonArgs) -> CliResult {
    let (c, out): (ScoreConfig, PathBuf) = load_config(args)?;
    let score = deployment_score(c.n_data, c.n, c.delta_min, c.eps_target, c.kappa)?;
    let gaps = c.gaps.unwrap_or_else(|| vec![c.delta_min]);
    let feasibility = feasibility_check(c.n, c.n_data, &gaps, c.p_norm, c.kappa, c.sigma);
    println!("score: {:.4}", score.score);
    println!("recommendation: {}", score.recommendation.as_str());
    println!(
        "feasibility: scale={} data={} spectral={} numerical={} signal={} overall={}",
        feasibility.scale, feasibility.data, feasibility.spectral, feasibility.numerical, feasibility.signal, feasibility.overall
    );
    create_dir(&out)?;
    write_json(&out.join("score.json"), &ScoreOut { score, feasibility })
}

pub fn bench(args: &CommonArgs) -> CliResult {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::input(format!("{}: {e}", args.config.display())))?;
    let config = ExperimentConfig::from_json(&text)
        .map_err(|e| CliError::input(format!("{}: invalid config: {e}", args.config.display())))?;
    let output = args.output.clone().or(config.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    create_dir(&output)?;
    let opts = RunOptions { full: args.full, seed: args.seed, output_dir: Some(output) };
    let results = run_experiment(&config, &opts)?;
    for run in &results.runs {
        match (&run.report, &run.accuracy, &run.error) {
            (Some(rep), Some(acc), None) => log(
                args,
                1,
                format!("{}: ece {:.4} cov95 {:.3} rmse {:.4e} ({:.1}s)", run.id, rep.ece, rep.coverage_at(0.95), acc.rmse, run.wall_seconds),
            ),
            (_, _, Some(err)) => eprintln!("{}: failed: {err}", run.id),
            _ => {}
        }
    }
    let failures: Vec<_> = results.failures().collect();
    if failures.is_empty() {
        return Ok(());
    }
    let code = if failures.iter().any(|r| r.numerical_failure) { EXIT_NUMERICAL } else { EXIT_INPUT };
    Err(CliError { code, message: format!("{} of {} configurations failed", failures.len(), results.runs.len()) })
}
