//! Batch experiment driver: scenario sweeps, Monte-Carlo aggregation and
//! CSV emission, plus the bound-verification harness and instance dumps.
//!
//! Output contract (`run` subcommand): three CSV files under the output
//! directory.
//!
//! * `details.csv` — one row per (sweep value, algorithm, trial). Fully
//!   deterministic for a fixed seed base: identical runs produce
//!   byte-identical files.
//! * `aggregate.csv` — per (sweep value, algorithm) means and 95%
//!   confidence half-widths over the feasible trials; infeasible trials
//!   are excluded from the means but counted.
//! * `timing.csv` — wall-clock per trial, kept out of `details.csv` so
//!   determinism is checkable byte for byte.
//!
//! Both CSV files open with a `# swiptbeam-csv-v1` schema comment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use swiptbeam::error::{Error, Result};
use swiptbeam::netmodel::{
    generate_instance, NetworkConfig, NetworkInstance, PowerNoiseConfig, ScenarioFile,
};
use swiptbeam::perf;
use swiptbeam::sca::{self, AlgorithmId, FinalState, RunOutcome, ScaSettings};
use swiptbeam::surrogate::{verify_appendix_a, verify_lambda_chain, verify_ratio_bound, BoundCheck};
use swiptbeam::units;

/// Schema tag written at the top of every CSV artifact.
pub const CSV_SCHEMA: &str = "# swiptbeam-csv-v1";

/// Sweep axes supported by experiment specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Antennas,
    PMaxDbm,
    NoiseDbmHz,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Antennas => "antennas",
            SweepAxis::PMaxDbm => "p-max-dbm",
            SweepAxis::NoiseDbmHz => "noise-dbm-hz",
        }
    }
}

/// On-disk experiment specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// Scenario file path, resolved relative to the spec file location.
    pub scenario: String,
    pub sweep: SweepAxis,
    pub values: Vec<f64>,
    pub algorithms: Vec<String>,
    pub trials: usize,
    pub seed_base: u64,
}

/// Fully resolved experiment, ready to run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub network: NetworkConfig,
    pub power: PowerNoiseConfig,
    pub sweep: SweepAxis,
    pub values: Vec<f64>,
    pub algorithms: Vec<AlgorithmId>,
    pub trials: usize,
    pub seed_base: u64,
    pub settings: ScaSettings,
}

impl ExperimentSpec {
    /// Load a spec file and its referenced scenario.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ExperimentFile = toml::from_str(&text)?;
        let sec = file.experiment;
        if sec.values.is_empty() {
            return Err(Error::InvalidConfig("sweep value list is empty".into()));
        }
        if sec.algorithms.is_empty() {
            return Err(Error::InvalidConfig("algorithm list is empty".into()));
        }
        if sec.trials < 1 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        let scenario_path = path
            .parent()
            .map(|d| d.join(&sec.scenario))
            .unwrap_or_else(|| PathBuf::from(&sec.scenario));
        let scenario = ScenarioFile::load(&scenario_path)?;
        let (network, power) = scenario.to_configs()?;
        let algorithms = sec
            .algorithms
            .iter()
            .map(|s| AlgorithmId::from_str(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: sec.name,
            network,
            power,
            sweep: sec.sweep,
            values: sec.values,
            algorithms,
            trials: sec.trials,
            seed_base: sec.seed_base,
            settings: ScaSettings::default(),
        })
    }

    /// Apply one sweep value to the base configs.
    pub fn configure(&self, value: f64) -> Result<(NetworkConfig, PowerNoiseConfig)> {
        let mut net = self.network.clone();
        let mut pw = self.power.clone();
        match self.sweep {
            SweepAxis::Antennas => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "antenna sweep values must be positive integers, got {value}"
                    )));
                }
                net.antennas = value as usize;
            }
            SweepAxis::PMaxDbm => {
                pw.p_max_w = units::dbm_to_watts(value);
            }
            SweepAxis::NoiseDbmHz => {
                // The receiver and ID-circuit PSDs move together, as in
                // the reference setup.
                pw.noise_w_per_hz = units::dbm_to_watts(value);
                pw.noise_total_w = units::psd_dbm_hz_to_watts(value, net.bandwidth_hz);
                pw.circuit_noise_w = pw.noise_total_w;
            }
        }
        net.validate()?;
        pw.validate()?;
        Ok((net, pw))
    }
}

/// One detail row of an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub axis: &'static str,
    pub value: f64,
    pub algorithm: &'static str,
    pub trial: usize,
    pub seed: u64,
    pub status: &'static str,
    pub iterations: usize,
    /// Algorithm's own objective: worst-user rate (bits/s/Hz) for max-min,
    /// normalized EE (bits/s/Hz per W) for EE problems. NaN if infeasible.
    pub objective: f64,
    pub min_rate_bits_hz: f64,
    pub sum_rate_bits_hz: f64,
    pub ee_bits_hz_per_w: f64,
    pub ee_bits_per_joule: f64,
    pub wall_s: f64,
}

fn outcome_label(outcome: &RunOutcome) -> &'static str {
    match outcome {
        RunOutcome::Converged => "converged",
        RunOutcome::MaxIters => "max-iters",
        RunOutcome::Infeasible(_) => "infeasible",
        RunOutcome::SolverFailure(_) => "solver-failure",
    }
}

/// Run one trial and compute its report row.
fn run_trial(
    inst: &NetworkInstance,
    algorithm: AlgorithmId,
    settings: &ScaSettings,
    axis: &'static str,
    value: f64,
    trial: usize,
    seed: u64,
) -> Result<TrialRow> {
    let t0 = std::time::Instant::now();
    let run = sca::run(inst, algorithm, settings, seed)?;
    let wall = t0.elapsed().as_secs_f64();

    let mut row = TrialRow {
        axis,
        value,
        algorithm: algorithm.as_str(),
        trial,
        seed,
        status: outcome_label(&run.outcome),
        iterations: run.iterations,
        objective: f64::NAN,
        min_rate_bits_hz: f64::NAN,
        sum_rate_bits_hz: f64::NAN,
        ee_bits_hz_per_w: f64::NAN,
        ee_bits_per_joule: f64::NAN,
        wall_s: wall,
    };
    if let Some(state) = &run.state {
        let (rates, ee) = match state {
            FinalState::Ps(st) => {
                (perf::achieved_rates_ps(inst, st)?, perf::ee_objective_ps(inst, st)?)
            }
            FinalState::Ts(st) => {
                (perf::achieved_rates_ts(inst, st)?, perf::ee_objective_ts(inst, st)?)
            }
            FinalState::Oma(st) => {
                (perf::oma_rates(inst, &st.w, &st.tau)?, perf::ee_objective_oma(inst, st)?)
            }
        };
        row.min_rate_bits_hz = units::nats_to_bits(sca::min_rate(&rates));
        row.sum_rate_bits_hz = units::nats_to_bits(sca::sum_rate(&rates));
        row.ee_bits_hz_per_w = units::nats_to_bits(ee);
        row.ee_bits_per_joule = row.ee_bits_hz_per_w * inst.network.bandwidth_hz;
        row.objective =
            if algorithm.is_ee() { row.ee_bits_hz_per_w } else { row.min_rate_bits_hz };
    }
    Ok(row)
}

/// Execute an experiment: trials fan out over a worker pool, rows come
/// back in deterministic order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialRow>> {
    let mut jobs = Vec::new();
    for &value in &spec.values {
        for &alg in &spec.algorithms {
            for trial in 0..spec.trials {
                jobs.push((value, alg, trial));
            }
        }
    }
    jobs.par_iter()
        .map(|&(value, alg, trial)| {
            let (net, pw) = spec.configure(value)?;
            let seed = spec.seed_base.wrapping_add(trial as u64);
            let inst = generate_instance(&net, &pw, seed)?;
            run_trial(&inst, alg, &spec.settings, spec.sweep.as_str(), value, trial, seed)
        })
        .collect()
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.9e}")
    }
}

/// Render the deterministic detail CSV.
pub fn details_csv(rows: &[TrialRow]) -> String {
    let mut out = format!(
        "{CSV_SCHEMA}\naxis,value,algorithm,trial,seed,status,iterations,objective,\
         min_rate_bits_hz,sum_rate_bits_hz,ee_bits_hz_per_w,ee_bits_per_joule\n"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{},{},{},{},{},{},{},{}",
            r.axis,
            r.value,
            r.algorithm,
            r.trial,
            r.seed,
            r.status,
            r.iterations,
            fmt_opt(r.objective),
            fmt_opt(r.min_rate_bits_hz),
            fmt_opt(r.sum_rate_bits_hz),
            fmt_opt(r.ee_bits_hz_per_w),
            fmt_opt(r.ee_bits_per_joule),
        );
    }
    out
}

/// Render the timing sidecar (not part of the determinism contract).
pub fn timing_csv(rows: &[TrialRow]) -> String {
    let mut out = format!("{CSV_SCHEMA}\naxis,value,algorithm,trial,wall_s\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{:.6}",
            r.axis, r.value, r.algorithm, r.trial, r.wall_s
        );
    }
    out
}

/// Aggregate statistics per (value, algorithm).
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub axis: &'static str,
    pub value: f64,
    pub algorithm: &'static str,
    pub trials: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub mean_objective: f64,
    pub ci95_half_width: f64,
    pub mean_iterations: f64,
}

pub fn aggregate(rows: &[TrialRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(f64, &'static str, &'static str)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|k| k.0 == r.value && k.1 == r.algorithm) {
            keys.push((r.value, r.algorithm, r.axis));
        }
    }
    keys.iter()
        .map(|&(value, algorithm, axis)| {
            let group: Vec<&TrialRow> =
                rows.iter().filter(|r| r.value == value && r.algorithm == algorithm).collect();
            let feasible: Vec<&&TrialRow> =
                group.iter().filter(|r| !r.objective.is_nan()).collect();
            let n = feasible.len();
            let mean = feasible.iter().map(|r| r.objective).sum::<f64>() / n.max(1) as f64;
            let var = if n > 1 {
                feasible.iter().map(|r| (r.objective - mean).powi(2)).sum::<f64>()
                    / (n as f64 - 1.0)
            } else {
                0.0
            };
            let ci = if n > 0 { 1.96 * (var / n as f64).sqrt() } else { f64::NAN };
            let mean_iters =
                feasible.iter().map(|r| r.iterations as f64).sum::<f64>() / n.max(1) as f64;
            AggregateRow {
                axis,
                value,
                algorithm,
                trials: group.len(),
                feasible: n,
                infeasible: group.len() - n,
                mean_objective: if n > 0 { mean } else { f64::NAN },
                ci95_half_width: ci,
                mean_iterations: mean_iters,
            }
        })
        .collect()
}

pub fn aggregate_csv(aggs: &[AggregateRow]) -> String {
    let mut out = format!(
        "{CSV_SCHEMA}\naxis,value,algorithm,trials,feasible,infeasible,mean_objective,\
         ci95_half_width,mean_iterations\n"
    );
    for a in aggs {
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{},{},{},{},{:.3}",
            a.axis,
            a.value,
            a.algorithm,
            a.trials,
            a.feasible,
            a.infeasible,
            fmt_opt(a.mean_objective),
            fmt_opt(a.ci95_half_width),
            a.mean_iterations,
        );
    }
    out
}

/// Run an experiment spec and write the three CSV artifacts.
pub fn run_and_write(spec: &ExperimentSpec, out_dir: &Path) -> Result<Vec<TrialRow>> {
    let rows = run_experiment(spec)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("details.csv"), details_csv(&rows))?;
    std::fs::write(out_dir.join("aggregate.csv"), aggregate_csv(&aggregate(&rows)))?;
    std::fs::write(out_dir.join("timing.csv"), timing_csv(&rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Bound validation
// ---------------------------------------------------------------------------

/// Report of the sampled-inequality verification run.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub checks: Vec<BoundCheck>,
    pub passed: bool,
}

/// Run every bound-verification family. `negative_control` corrupts a
/// surrogate coefficient to prove the harness detects defects; the
/// report is then expected to fail.
pub fn validate_bounds(samples: usize, seed: u64, negative_control: bool) -> ValidationReport {
    let tolerance = 1e-12;
    let mut checks = verify_appendix_a(samples, seed);
    checks.push(verify_ratio_bound(samples, seed ^ 0xabcd));
    if negative_control {
        checks.push(verify_lambda_chain(samples.min(10_000), seed ^ 0xbeef, true));
    }
    let passed = checks.iter().all(|c| c.passed(tolerance));
    ValidationReport { samples, seed, tolerance, checks, passed }
}

pub fn validation_report_json(report: &ValidationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// Generate and serialize one instance for reproducibility archives.
pub fn dump_instance(scenario_path: &Path, seed: u64) -> Result<String> {
    let scenario = ScenarioFile::load(scenario_path)?;
    let (net, pw) = scenario.to_configs()?;
    let inst = generate_instance(&net, &pw, seed)?;
    inst.to_json()
}
