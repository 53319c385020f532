//! The experiment commands. Each returns a JSON summary for stdout and
//! writes its artifacts to the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use qecopt::ansatz::{build_layout, export_qasm, Encoder};
use qecopt::codes::{probe_with_design, ProbeConfig, ProbeReport};
use qecopt::designs::Estimator;
use qecopt::loss::{evaluate, LossReport};
use qecopt::qmat::MAX_QUBITS;
use qecopt::train::{
    train_encoding, train_recovery, EncodingTask, OptimConfig, RecoveryTask, SeedOutcome,
    TrainReport,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{LoadedCode, NoiseConfig, RunConfig};
use crate::error::{CliError, CliResult};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "QECOPT_OUT_DIR";

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub estimators: Option<Vec<Estimator>>,
}

impl Overrides {
    fn estimators(&self, cfg: &RunConfig) -> Vec<Estimator> {
        self.estimators.clone().unwrap_or_else(|| cfg.estimators())
    }

    fn seeds(&self, cfg: &RunConfig) -> CliResult<Vec<u64>> {
        match self.seed {
            Some(s) => Ok(vec![s]),
            None => cfg.seeds(),
        }
    }

    /// `--out`, then the environment override, then the config's `output`.
    fn out_dir(&self, cfg: Option<&RunConfig>) -> Option<PathBuf> {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .or_else(|| cfg.and_then(|c| c.output.as_ref().map(|o| c.base_dir.join(o))))
    }

    fn required_out_dir(&self, cfg: &RunConfig, command: &str) -> PathBuf {
        self.out_dir(Some(cfg))
            .unwrap_or_else(|| Path::new("runs").join(command))
    }
}

fn check_finite(report: &LossReport) -> CliResult<()> {
    let values = [report.d_avg, report.d_worst, report.f_avg, report.f_worst];
    if values.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "non-finite loss from estimator {}",
            report.estimator
        )))
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn estimate(
    estimators: &[Estimator],
    weights: Option<&[f64]>,
    code: &LoadedCode,
    noise: &NoiseConfig,
) -> CliResult<Vec<LossReport>> {
    let composite = noise.composite()?;
    estimators
        .iter()
        .map(|est| {
            let set = est.state_set(code.encoder.k, weights)?;
            let report = evaluate(&set, &code.encoder, code.recovery.as_ref(), &composite)?;
            check_finite(&report)?;
            Ok(report)
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct BaselineOutput {
    pub k: usize,
    pub noise: NoiseConfig,
    pub reports: Vec<LossReport>,
}

/// Losses of `k` unprotected qubits under the configured noise.
pub fn baseline(cfg: &RunConfig, ov: &Overrides) -> CliResult<BaselineOutput> {
    let k = cfg.k.unwrap_or(1);
    let code = LoadedCode {
        label: "unencoded".into(),
        encoder: Encoder::unencoded(k),
        recovery: None,
    };
    let noise = cfg.noise()?.clone();
    let reports = estimate(
        &ov.estimators(cfg),
        cfg.states.weights.as_deref(),
        &code,
        &noise,
    )?;
    let out = BaselineOutput { k, noise, reports };
    if let Some(dir) = ov.out_dir(Some(cfg)) {
        create_dir(&dir)?;
        write_json(&dir.join("baseline.json"), &out)?;
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    iteration: usize,
    loss: f64,
}

#[derive(Debug, Serialize)]
struct SeedRow<'a> {
    seed: u64,
    train_loss: Option<f64>,
    selection_loss: Option<f64>,
    iterations: usize,
    converged: bool,
    line_search_failed: bool,
    error: Option<&'a str>,
}

impl<'a> From<&'a SeedOutcome> for SeedRow<'a> {
    fn from(s: &'a SeedOutcome) -> Self {
        Self {
            seed: s.seed,
            train_loss: s.train_loss,
            selection_loss: s.selection_loss,
            iterations: s.iterations,
            converged: s.converged,
            line_search_failed: s.line_search_failed,
            error: s.error.as_deref(),
        }
    }
}

fn write_training_artifacts(dir: &Path, report: &TrainReport) -> CliResult<()> {
    create_dir(dir)?;
    write_json(&dir.join("report.json"), report)?;
    let rows: Vec<TrajectoryRow> = report
        .loss_trajectory
        .iter()
        .enumerate()
        .map(|(iteration, &loss)| TrajectoryRow { iteration, loss })
        .collect();
    write_csv(&dir.join("trajectory.csv"), &rows)?;
    let seeds: Vec<SeedRow> = report.seeds.iter().map(SeedRow::from).collect();
    write_csv(&dir.join("seeds.csv"), &seeds)?;
    let header = format!(
        "encoder n={} k={} seed={} noise={}",
        report.ansatz.num_qubits,
        report.k,
        report.best_seed,
        report.noise.per_qubit.describe()
    );
    let qasm = export_qasm(&report.ansatz, &report.params, &header)?;
    write_text(&dir.join("encoder.qasm"), &qasm.text)?;
    if let Some(rec) = &report.recovery {
        let header = format!("recovery on {} qubits, r={}", rec.ansatz.num_qubits, rec.r);
        let qasm = export_qasm(&rec.ansatz, &rec.params, &header)?;
        write_text(&dir.join("recovery.qasm"), &qasm.text)?;
    }
    Ok(())
}

fn check_report(report: &TrainReport) -> CliResult<()> {
    check_finite(&report.final_eval.two_design)?;
    check_finite(&report.final_eval.haar)
}

fn training_summary(report: &TrainReport, dir: &Path) -> Value {
    json!({
        "mode": report.mode,
        "best_seed": report.best_seed,
        "final": report.final_eval,
        "seeds": report.seeds.len(),
        "failed_seeds": report.seeds.iter().filter(|s| s.error.is_some()).count(),
        "wall_time": report.wall_time,
        "out_dir": dir,
    })
}

/// Seed sweep of encoding training; writes `report.json`, `trajectory.csv`,
/// `seeds.csv` and `encoder.qasm`.
pub fn train_encoding_cmd(cfg: &RunConfig, ov: &Overrides) -> CliResult<(TrainReport, Value)> {
    let a = cfg.ansatz()?;
    if a.n == 0 || a.n > MAX_QUBITS || a.k == 0 || a.k > a.n {
        return Err(CliError::Config(format!(
            "ansatz: need 1 <= k <= n <= {MAX_QUBITS}, got n = {}, k = {}",
            a.n, a.k
        )));
    }
    let task = EncodingTask {
        n: a.n,
        k: a.k,
        depth_blocks: a.depth,
        layout: a.layout()?,
        single: a.single,
        two: a.two,
        noise: cfg.noise()?.composite()?,
        set: cfg.states.state_set(a.k)?,
    };
    let optim = cfg.optimizer.clone().unwrap_or_default();
    let report = train_encoding(&task, &ov.seeds(cfg)?, &optim, &cfg.selection)?;
    check_report(&report)?;
    let dir = ov.required_out_dir(cfg, "train-encoding");
    write_training_artifacts(&dir, &report)?;
    let summary = training_summary(&report, &dir);
    Ok((report, summary))
}

/// Seed sweep of recovery training on a fixed (or jointly trained) encoder;
/// writes the same files as encoding training plus `recovery.qasm`.
pub fn train_recovery_cmd(cfg: &RunConfig, ov: &Overrides) -> CliResult<(TrainReport, Value)> {
    let code = cfg.encoder()?;
    let rc = cfg.recovery()?;
    let total = code.encoder.n() + rc.r;
    if total > MAX_QUBITS {
        return Err(CliError::Config(format!(
            "recovery: n + r = {total} exceeds {MAX_QUBITS}"
        )));
    }
    let task = RecoveryTask {
        encoder: code.encoder.clone(),
        depth_blocks: rc.depth,
        r: rc.r,
        layout: build_layout(rc.layout, total, rc.edges.clone())?,
        single: rc.single,
        two: rc.two,
        noise: cfg.noise()?.composite()?,
        set: cfg.states.state_set(code.encoder.k)?,
        mode: rc.mode,
    };
    let optim = cfg.optimizer.clone().unwrap_or_else(OptimConfig::recovery);
    let report = train_recovery(&task, &ov.seeds(cfg)?, &optim, &cfg.selection)?;
    check_report(&report)?;
    let dir = ov.required_out_dir(cfg, "train-recovery");
    write_training_artifacts(&dir, &report)?;
    let summary = training_summary(&report, &dir);
    Ok((report, summary))
}

#[derive(Debug, Serialize)]
pub struct DistanceOutput {
    pub circuit: String,
    pub n: usize,
    pub k: usize,
    pub probe: ProbeReport,
}

/// Potential distance of a code from the weight-by-weight Pauli probe.
pub fn distance(
    code: &LoadedCode,
    probe: &ProbeConfig,
    out_dir: Option<&Path>,
) -> CliResult<DistanceOutput> {
    let report = probe_with_design(&code.encoder, probe)?;
    let out = DistanceOutput {
        circuit: code.label.clone(),
        n: code.encoder.n(),
        k: code.encoder.k,
        probe: report,
    };
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_json(&dir.join("distance.json"), &out)?;
    }
    Ok(out)
}

/// Resolves the distance command's inputs from a config and/or flags.
pub fn distance_cmd(
    cfg: Option<&RunConfig>,
    circuit: Option<&LoadedCode>,
    eps: Option<f64>,
    ov: &Overrides,
) -> CliResult<DistanceOutput> {
    let code = match (circuit, cfg) {
        (Some(c), _) => c.clone(),
        (None, Some(cfg)) => cfg.encoder()?,
        (None, None) => {
            return Err(CliError::Config(
                "distance needs --config, --circuit or --code".into(),
            ))
        }
    };
    let mut probe = cfg.and_then(|c| c.probe.clone()).unwrap_or_default();
    if let Some(eps) = eps {
        probe.eps = eps;
    }
    if !(probe.eps >= 0.0 && probe.eps.is_finite()) {
        return Err(CliError::Config(format!(
            "eps = {} must be non-negative",
            probe.eps
        )));
    }
    distance(&code, &probe, ov.out_dir(cfg).as_deref())
}

#[derive(Debug, Serialize)]
pub struct EvaluationOutput {
    pub circuit: String,
    pub n: usize,
    pub k: usize,
    pub noise: NoiseConfig,
    pub reports: Vec<LossReport>,
}

/// One CSV row of a noise sweep. The unencoded columns give the baseline
/// under the same per-qubit noise for comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub estimator: String,
    pub d_avg: Option<f64>,
    pub d_worst: Option<f64>,
    pub f_avg: Option<f64>,
    pub f_worst: Option<f64>,
    pub unencoded_d_avg: Option<f64>,
    pub unencoded_d_worst: Option<f64>,
}

pub enum Evaluation {
    Single(EvaluationOutput),
    Sweep(Vec<SweepRow>),
}

/// Losses of a circuit under the configured noise for each estimator, or a
/// sweep over one noise parameter (`sweep.csv`).
pub fn evaluate_cmd(cfg: &RunConfig, ov: &Overrides) -> CliResult<Evaluation> {
    let code = cfg.encoder()?;
    let noise = cfg.noise()?.clone();
    let estimators = ov.estimators(cfg);
    let weights = cfg.states.weights.as_deref();
    let dir = ov.required_out_dir(cfg, "evaluate");
    match &cfg.sweep {
        None => {
            let reports = estimate(&estimators, weights, &code, &noise)?;
            let out = EvaluationOutput {
                circuit: code.label.clone(),
                n: code.encoder.n(),
                k: code.encoder.k,
                noise,
                reports,
            };
            create_dir(&dir)?;
            write_json(&dir.join("evaluation.json"), &out)?;
            Ok(Evaluation::Single(out))
        }
        Some(sweep) => {
            if sweep.values.is_empty() {
                return Err(CliError::Config("sweep: values must not be empty".into()));
            }
            let unencoded = LoadedCode {
                label: "unencoded".into(),
                encoder: Encoder::unencoded(code.encoder.k),
                recovery: None,
            };
            let mut rows = Vec::new();
            for &value in &sweep.values {
                let point = noise.with_parameter(&sweep.parameter, value)?;
                let reports = estimate(&estimators, weights, &code, &point)?;
                let base = estimate(&estimators, weights, &unencoded, &point)?;
                for (r, b) in reports.into_iter().zip(base) {
                    rows.push(SweepRow {
                        parameter: sweep.parameter.clone(),
                        value,
                        estimator: r.estimator,
                        d_avg: r.d_avg,
                        d_worst: r.d_worst,
                        f_avg: r.f_avg,
                        f_worst: r.f_worst,
                        unencoded_d_avg: b.d_avg,
                        unencoded_d_worst: b.d_worst,
                    });
                }
            }
            create_dir(&dir)?;
            write_csv(&dir.join("sweep.csv"), &rows)?;
            Ok(Evaluation::Sweep(rows))
        }
    }
}

/// The trained code held by a training report.
pub fn loaded_from_report(report: &TrainReport, label: &str) -> CliResult<LoadedCode> {
    Ok(LoadedCode {
        label: label.into(),
        encoder: report.encoder()?,
        recovery: report.recovery.clone(),
    })
}
