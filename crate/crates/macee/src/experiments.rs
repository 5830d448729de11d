//! Monte-Carlo experiment harness.
//!
//! Each experiment draws independent channel sets from split seeds, runs the
//! three dynamics (exact, bisection, UPA) on every draw, and aggregates the
//! outcomes per sweep value into means and standard errors. Trials are
//! independent and run on a work pool; records are assembled in trial order
//! so the output does not depend on scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::solve_upa_game;
use crate::channel::{split_seed, ChannelSet};
use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::scalar::Scalar;
use crate::solvers::{solve_basic, solve_bisection, Algorithm, SolverSettings};

/// Fraction of failed trials beyond which the whole batch aborts.
const MAX_FAILURE_FRACTION: f64 = 0.10;

/// The four figure-level protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Utility-region comparison at the base configuration.
    Region,
    /// Sweep nt = nr over the given antenna counts.
    AntennaSweep,
    /// Sweep every user's budget over the given values (mW).
    BudgetSweep,
    /// Base configuration with mismatched antennas (exact vs approximate).
    Mismatch,
}

impl ExperimentKind {
    pub const VALID_NAMES: &'static str = "region, antenna_sweep, budget_sweep, mismatch";

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "region" => Ok(Self::Region),
            "antenna_sweep" => Ok(Self::AntennaSweep),
            "budget_sweep" => Ok(Self::BudgetSweep),
            "mismatch" => Ok(Self::Mismatch),
            other => Err(Error::InvalidConfig {
                field: "experiment",
                message: format!("unknown experiment {other:?}; valid options: {}", Self::VALID_NAMES),
            }),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Region => "region",
            Self::AntennaSweep => "antenna_sweep",
            Self::BudgetSweep => "budget_sweep",
            Self::Mismatch => "mismatch",
        }
    }

    fn is_sweep(self) -> bool {
        matches!(self, Self::AntennaSweep | Self::BudgetSweep)
    }
}

/// Full description of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec<S> {
    pub name: ExperimentKind,
    pub base: GameConfig<S>,
    pub trials: usize,
    pub master_seed: u64,
    /// Antenna counts or budgets, depending on the experiment; unused for
    /// region and mismatch.
    pub sweep_values: Vec<f64>,
    pub solver: SolverSettings<S>,
}

impl<S: Scalar> ExperimentSpec<S> {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig {
                field: "trials",
                message: "must be at least 1".into(),
            });
        }
        self.solver.validate()?;
        if self.name.is_sweep() && self.sweep_values.is_empty() {
            return Err(Error::InvalidConfig {
                field: "sweep",
                message: format!("experiment {} needs sweep values", self.name.label()),
            });
        }
        for (i, &v) in self.sweep_values.iter().enumerate() {
            if self.sweep_values[..i].contains(&v) {
                return Err(Error::InvalidConfig {
                    field: "sweep",
                    message: format!("duplicate sweep value {v}"),
                });
            }
        }
        if self.name == ExperimentKind::AntennaSweep {
            for &v in &self.sweep_values {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::InvalidConfig {
                        field: "sweep",
                        message: format!("antenna count {v} must be a positive integer"),
                    });
                }
            }
        }
        if self.name == ExperimentKind::BudgetSweep {
            for &v in &self.sweep_values {
                if !(v > 0.0) {
                    return Err(Error::InvalidConfig {
                        field: "sweep",
                        message: format!("budget {v} must be positive"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Sweep points; non-sweep experiments have a single unnamed point.
    fn sweep_points(&self) -> Vec<Option<f64>> {
        if self.name.is_sweep() {
            self.sweep_values.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    }

    /// Game configuration at one sweep point.
    fn config_at(&self, point: Option<f64>) -> Result<GameConfig<S>> {
        match (self.name, point) {
            (ExperimentKind::AntennaSweep, Some(v)) => {
                let n = v as usize;
                GameConfig::new(
                    self.base.k_users,
                    n,
                    n,
                    self.base.noise_power,
                    self.base.circuit_power,
                    self.base.budgets.clone(),
                )
            }
            (ExperimentKind::BudgetSweep, Some(v)) => GameConfig::new(
                self.base.k_users,
                self.base.nt,
                self.base.nr,
                self.base.noise_power,
                self.base.circuit_power,
                vec![S::real(v); self.base.k_users],
            ),
            _ => Ok(self.base.clone()),
        }
    }
}

/// Outcome of one algorithm on one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoOutcome<S> {
    pub algorithm: Algorithm,
    pub utilities: Vec<S>,
    pub welfare: S,
    pub converged: bool,
    pub epsilon_hat: S,
}

/// One trial: fixed seed, one channel draw, all algorithms.
#[derive(Debug, Clone)]
pub struct TrialRecord<S> {
    pub trial_index: usize,
    pub seed: u64,
    pub sweep_value: f64,
    pub outcomes: Vec<AlgoOutcome<S>>,
    pub failed: bool,
    /// Wall-clock diagnostics only; never serialized and never compared.
    pub wall_time_ms: f64,
}

impl<S: PartialEq> PartialEq for TrialRecord<S> {
    fn eq(&self, other: &Self) -> bool {
        self.trial_index == other.trial_index
            && self.seed == other.seed
            && self.sweep_value == other.sweep_value
            && self.outcomes == other.outcomes
            && self.failed == other.failed
    }
}

/// Per (sweep value, algorithm) aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub mean_welfare: f64,
    pub stderr_welfare: f64,
    pub mean_u1: f64,
    pub mean_u2: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome<S> {
    pub records: Vec<TrialRecord<S>>,
    pub summary: Vec<AggregateRow>,
}

fn run_trial<S: Scalar>(
    spec: &ExperimentSpec<S>,
    cfg: &GameConfig<S>,
    sweep_value: f64,
    trial: usize,
) -> TrialRecord<S> {
    let started = Instant::now();
    let seed = split_seed(spec.master_seed, trial as u64);
    let mut outcomes = Vec::with_capacity(3);
    let mut failed = false;

    match ChannelSet::generate(cfg, seed) {
        Ok(channels) => {
            let runs: [(Algorithm, std::result::Result<_, Error>); 3] = [
                (Algorithm::Basic, solve_basic(cfg, &channels, &spec.solver)),
                (Algorithm::Bisection, solve_bisection(cfg, &channels, &spec.solver)),
                (Algorithm::Upa, solve_upa_game(cfg, &channels, &spec.solver)),
            ];
            for (algorithm, run) in runs {
                match run {
                    Ok(report) => outcomes.push(AlgoOutcome {
                        algorithm,
                        utilities: report.utilities.clone(),
                        welfare: report.welfare,
                        converged: report.converged,
                        epsilon_hat: report.equilibrium.epsilon_hat,
                    }),
                    Err(_) => failed = true,
                }
            }
        }
        Err(_) => failed = true,
    }

    TrialRecord {
        trial_index: trial,
        seed,
        sweep_value,
        outcomes,
        failed,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Run every trial of every sweep point and aggregate.
///
/// Trial `i` always uses `split_seed(master_seed, i)`, so sweep points see
/// paired channel draws. Per-trial solver failures are recorded, not
/// thrown; the batch only aborts when more than 10% of trials fail.
pub fn run_experiment<S: Scalar>(spec: &ExperimentSpec<S>) -> Result<ExperimentOutcome<S>> {
    spec.validate()?;

    let mut records: Vec<TrialRecord<S>> = Vec::new();
    for point in spec.sweep_points() {
        let cfg = spec.config_at(point)?;
        let sweep_value = point.unwrap_or(0.0);
        let mut batch: Vec<TrialRecord<S>> = (0..spec.trials)
            .into_par_iter()
            .map(|trial| run_trial(spec, &cfg, sweep_value, trial))
            .collect();
        records.append(&mut batch);
    }

    let failed = records.iter().filter(|r| r.failed).count();
    if failed as f64 > MAX_FAILURE_FRACTION * records.len() as f64 {
        return Err(Error::BatchAborted {
            failed,
            total: records.len(),
        });
    }

    let summary = aggregate(spec, &records);
    Ok(ExperimentOutcome { records, summary })
}

fn aggregate<S: Scalar>(spec: &ExperimentSpec<S>, records: &[TrialRecord<S>]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&TrialRecord<S>> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.sweep_value
            .partial_cmp(&b.sweep_value)
            .unwrap()
            .then(a.trial_index.cmp(&b.trial_index))
    });

    let mut rows = Vec::new();
    for point in spec.sweep_points() {
        let sweep_value = point.unwrap_or(0.0);
        for algorithm in [Algorithm::Basic, Algorithm::Bisection, Algorithm::Upa] {
            let welfares: Vec<f64> = sorted
                .iter()
                .filter(|r| r.sweep_value == sweep_value && !r.failed)
                .filter_map(|r| {
                    r.outcomes
                        .iter()
                        .find(|o| o.algorithm == algorithm)
                        .map(|o| o.welfare.to_f64().unwrap())
                })
                .collect();
            let n = welfares.len();
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
            let mean_welfare = mean(&welfares);
            let stderr_welfare = if n > 1 {
                let var = welfares
                    .iter()
                    .map(|w| (w - mean_welfare).powi(2))
                    .sum::<f64>()
                    / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            let user_mean = |user: usize| -> f64 {
                if spec.base.k_users <= user {
                    return f64::NAN;
                }
                let us: Vec<f64> = sorted
                    .iter()
                    .filter(|r| r.sweep_value == sweep_value && !r.failed)
                    .filter_map(|r| {
                        r.outcomes
                            .iter()
                            .find(|o| o.algorithm == algorithm)
                            .and_then(|o| o.utilities.get(user))
                            .map(|u| u.to_f64().unwrap())
                    })
                    .collect();
                mean(&us)
            };
            rows.push(AggregateRow {
                sweep_value,
                algorithm,
                mean_welfare,
                stderr_welfare,
                mean_u1: user_mean(0),
                mean_u2: user_mean(1),
                n_trials: n,
            });
        }
    }
    rows
}

fn metadata_lines<S: Scalar>(spec: &ExperimentSpec<S>) -> String {
    let budgets: Vec<String> = spec.base.budgets.iter().map(|b| format!("{b}")).collect();
    let sweep: Vec<String> = spec.sweep_values.iter().map(|v| format!("{v}")).collect();
    let mut meta = String::new();
    let _ = writeln!(meta, "# experiment={}", spec.name.label());
    let _ = writeln!(
        meta,
        "# k_users={} nt={} nr={} sigma2={} pc={} budgets=[{}]",
        spec.base.k_users,
        spec.base.nt,
        spec.base.nr,
        spec.base.noise_power,
        spec.base.circuit_power,
        budgets.join(",")
    );
    let _ = writeln!(
        meta,
        "# eps1={} eps2={} max_iters={} trials={} master_seed={} sweep=[{}]",
        spec.solver.br.eps1,
        spec.solver.outer_tol,
        spec.solver.max_outer_iters,
        spec.trials,
        spec.master_seed,
        sweep.join(",")
    );
    meta
}

/// Render the per-trial CSV (one row per trial, algorithm and user).
pub fn trials_csv<S: Scalar>(spec: &ExperimentSpec<S>, records: &[TrialRecord<S>]) -> String {
    let mut out = metadata_lines(spec);
    out.push_str("trial,seed,algo,user,utility,welfare,converged,epsilon_hat,sweep_value\n");
    let mut sorted: Vec<&TrialRecord<S>> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.sweep_value
            .partial_cmp(&b.sweep_value)
            .unwrap()
            .then(a.trial_index.cmp(&b.trial_index))
    });
    for record in sorted {
        for outcome in &record.outcomes {
            for (user, u) in outcome.utilities.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    record.trial_index,
                    record.seed,
                    outcome.algorithm.label(),
                    user,
                    u,
                    outcome.welfare,
                    outcome.converged,
                    outcome.epsilon_hat,
                    record.sweep_value
                );
            }
        }
    }
    out
}

/// Render the aggregate CSV (one row per sweep value and algorithm).
pub fn summary_csv<S: Scalar>(spec: &ExperimentSpec<S>, summary: &[AggregateRow]) -> String {
    let mut out = metadata_lines(spec);
    out.push_str("sweep_value,algo,mean_welfare,stderr_welfare,mean_u1,mean_u2,n_trials\n");
    for row in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.sweep_value,
            row.algorithm.label(),
            row.mean_welfare,
            row.stderr_welfare,
            row.mean_u1,
            row.mean_u2,
            row.n_trials
        );
    }
    out
}

/// Write both CSV files into `dir` as `trials.csv` and `summary.csv`.
pub fn emit_csv<S: Scalar>(
    spec: &ExperimentSpec<S>,
    outcome: &ExperimentOutcome<S>,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let trials_path = dir.join("trials.csv");
    let summary_path = dir.join("summary.csv");
    std::fs::write(&trials_path, trials_csv(spec, &outcome.records)).map_err(|source| Error::Io {
        path: trials_path.clone(),
        source,
    })?;
    std::fs::write(&summary_path, summary_csv(spec, &outcome.summary)).map_err(|source| Error::Io {
        path: summary_path.clone(),
        source,
    })?;
    Ok((trials_path, summary_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn base_cfg(nt: usize, nr: usize, budget: f64) -> GameConfig<f64> {
        GameConfig::new(2, nt, nr, 1.0, 1.0, vec![budget, budget]).unwrap()
    }

    fn spec(kind: ExperimentKind, trials: usize, sweep: Vec<f64>) -> ExperimentSpec<f64> {
        ExperimentSpec {
            name: kind,
            base: base_cfg(2, 2, 10.0),
            trials,
            master_seed: 7,
            sweep_values: sweep,
            solver: SolverSettings::default(),
        }
    }

    #[test]
    fn split_seeds_are_unique() {
        let seeds: HashSet<u64> = (0..1000).map(|i| split_seed(99, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn identical_specs_produce_identical_records() {
        let s = spec(ExperimentKind::Region, 3, vec![]);
        let a = run_experiment(&s).unwrap();
        let b = run_experiment(&s).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.summary, b.summary);
        assert_eq!(trials_csv(&s, &a.records), trials_csv(&s, &b.records));
        assert_eq!(summary_csv(&s, &a.summary), summary_csv(&s, &b.summary));
    }

    #[test]
    fn antenna_sweep_welfare_increases_with_antennas() {
        let s = spec(ExperimentKind::AntennaSweep, 50, vec![1.0, 2.0]);
        let outcome = run_experiment(&s).unwrap();
        let mean_at = |n: f64, algo: Algorithm| {
            outcome
                .summary
                .iter()
                .find(|r| r.sweep_value == n && r.algorithm == algo)
                .unwrap()
                .mean_welfare
        };
        assert!(
            mean_at(2.0, Algorithm::Basic) >= mean_at(1.0, Algorithm::Basic),
            "more antennas should not hurt equilibrium welfare"
        );
    }

    #[test]
    fn budget_sweep_equilibrium_plateaus_at_large_budgets() {
        let s = spec(ExperimentKind::BudgetSweep, 40, vec![2.0, 5.0, 10.0, 20.0]);
        let outcome = run_experiment(&s).unwrap();
        let mean_at = |b: f64| {
            outcome
                .summary
                .iter()
                .find(|r| r.sweep_value == b && r.algorithm == Algorithm::Basic)
                .unwrap()
                .mean_welfare
        };
        let hi = mean_at(10.0).max(mean_at(20.0));
        let lo = mean_at(10.0).min(mean_at(20.0));
        assert!(
            (hi - lo) / hi < 0.02,
            "equilibrium welfare should be budget-independent once interior: {lo} vs {hi}"
        );
    }

    #[test]
    fn csv_row_counts_and_self_consistency() {
        let s = spec(ExperimentKind::Region, 3, vec![]);
        let outcome = run_experiment(&s).unwrap();
        let text = trials_csv(&s, &outcome.records);
        let data_rows: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("trial,"))
            .collect();
        assert_eq!(data_rows.len(), 3 * 3 * 2, "trials x algos x users");

        // welfare column equals the sum of the two user rows it repeats on
        for pair in data_rows.chunks(2) {
            let a: Vec<&str> = pair[0].split(',').collect();
            let b: Vec<&str> = pair[1].split(',').collect();
            let u1: f64 = a[4].parse().unwrap();
            let u2: f64 = b[4].parse().unwrap();
            let w: f64 = a[5].parse().unwrap();
            assert!((u1 + u2 - w).abs() < 1e-9, "welfare mismatch: {pair:?}");
        }
    }

    #[test]
    fn summary_matches_re_reduction_of_trials_csv() {
        let s = spec(ExperimentKind::Region, 4, vec![]);
        let outcome = run_experiment(&s).unwrap();
        let text = trials_csv(&s, &outcome.records);
        for algo in ["basic", "bisection", "upa"] {
            let welfares: Vec<f64> = text
                .lines()
                .filter(|l| !l.starts_with('#') && !l.starts_with("trial,"))
                .filter_map(|l| {
                    let parts: Vec<&str> = l.split(',').collect();
                    if parts[2] == algo && parts[3] == "0" {
                        Some(parts[5].parse().unwrap())
                    } else {
                        None
                    }
                })
                .collect();
            let mean = welfares.iter().sum::<f64>() / welfares.len() as f64;
            let row = outcome
                .summary
                .iter()
                .find(|r| r.algorithm.label() == algo)
                .unwrap();
            assert!(
                (mean - row.mean_welfare).abs() < 1e-12,
                "{algo}: csv mean {mean} vs summary {}",
                row.mean_welfare
            );
        }
    }

    #[test]
    fn empty_record_list_gives_header_only_file() {
        let s = spec(ExperimentKind::Region, 1, vec![]);
        let text = trials_csv(&s, &[]);
        let data_rows = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("trial,"))
            .count();
        assert_eq!(data_rows, 0);
        assert!(text.contains("trial,seed,algo,user"));
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(spec(ExperimentKind::Region, 0, vec![]).validate().is_err());
        assert!(spec(ExperimentKind::AntennaSweep, 1, vec![]).validate().is_err());
        assert!(spec(ExperimentKind::AntennaSweep, 1, vec![1.5]).validate().is_err());
        assert!(spec(ExperimentKind::BudgetSweep, 1, vec![0.0]).validate().is_err());
        assert!(spec(ExperimentKind::BudgetSweep, 1, vec![2.0, 2.0]).validate().is_err());
        assert!(spec(ExperimentKind::Region, 1, vec![]).validate().is_ok());
    }

    #[test]
    fn experiment_kind_parsing() {
        assert_eq!(ExperimentKind::parse("region").unwrap(), ExperimentKind::Region);
        assert_eq!(
            ExperimentKind::parse("antenna_sweep").unwrap(),
            ExperimentKind::AntennaSweep
        );
        let err = ExperimentKind::parse("bogus").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("region") && msg.contains("mismatch"), "{msg}");
    }

    #[test]
    fn emit_csv_writes_both_files() {
        let s = spec(ExperimentKind::Region, 1, vec![]);
        let outcome = run_experiment(&s).unwrap();
        let dir = std::env::temp_dir().join(format!("macee-test-{}", std::process::id()));
        let (trials, summary) = emit_csv(&s, &outcome, &dir).unwrap();
        assert!(trials.exists() && summary.exists());
        let text = std::fs::read_to_string(&summary).unwrap();
        assert!(text.contains("sweep_value,algo,mean_welfare"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
