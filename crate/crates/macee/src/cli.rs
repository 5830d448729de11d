//! Config-file parsing and the two CLI commands.
//!
//! Numerics live in a flat key-value config file (reviewable alongside the
//! results it produced); command-line flags only override the seed, the
//! trial count and the output directory.
//!
//! Recognized keys:
//!
//! ```text
//! k_users     = 2            # players (required)
//! nt          = 2            # transmit antennas per user (required)
//! nr          = 2            # receive antennas at the base station (required)
//! sigma2_mw   = 1.0          # noise power, mW (default 1.0)
//! pc_mw       = 1.0          # circuit power, mW (required)
//! budgets_mw  = [10, 10]     # per-user power budgets, mW (required)
//! eps1        = 0.001        # bisection width tolerance (default 0.001)
//! eps2        = 0.001        # outer-loop movement tolerance (default 0.001)
//! max_iters   = 100          # outer sweep cap (default 100)
//! h_max       = 5.0          # bisection upper bound override (optional)
//! trials      = 200          # Monte-Carlo trials (default 200)
//! master_seed = 1            # seed all trials derive from (default 1)
//! experiment  = region       # region | antenna_sweep | budget_sweep | mismatch
//! sweep       = [1, 2, 3, 4] # sweep values (antenna counts or budgets)
//! out_dir     = out          # output directory (default "out")
//! ```
//!
//! `#` starts a comment; unknown or duplicate keys are rejected by name.

use std::path::{Path, PathBuf};

use crate::best_response::BrSettings;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::experiments::{
    emit_csv, run_experiment, trials_csv, AlgoOutcome, ExperimentKind, ExperimentSpec,
    TrialRecord,
};
use crate::game::GameConfig;
use crate::solvers::{solve_basic, solve_bisection, SolveReport, SolverSettings};

/// Parsed, validated configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub k_users: usize,
    pub nt: usize,
    pub nr: usize,
    pub sigma2_mw: f64,
    pub pc_mw: f64,
    pub budgets_mw: Vec<f64>,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iters: usize,
    pub h_max: Option<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub experiment: Option<ExperimentKind>,
    pub sweep: Vec<f64>,
    pub out_dir: PathBuf,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: Vec<String> = Vec::new();
        let mut k_users = None;
        let mut nt = None;
        let mut nr = None;
        let mut sigma2_mw = 1.0f64;
        let mut pc_mw = None;
        let mut budgets_mw: Option<Vec<f64>> = None;
        let mut eps1 = 1e-3f64;
        let mut eps2 = 1e-3f64;
        let mut max_iters = 100usize;
        let mut h_max = None;
        let mut trials = 200usize;
        let mut master_seed = 1u64;
        let mut experiment = None;
        let mut sweep = Vec::new();
        let mut out_dir = PathBuf::from("out");

        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidConfig {
                    field: "config",
                    message: format!("line {}: expected key = value, got {raw:?}", line_no + 1),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|s| s == key) {
                return Err(Error::InvalidConfig {
                    field: "config",
                    message: format!("duplicate key {key:?}"),
                });
            }
            seen.push(key.to_string());

            match key {
                "k_users" => k_users = Some(parse_usize("k_users", value)?),
                "nt" => nt = Some(parse_usize("nt", value)?),
                "nr" => nr = Some(parse_usize("nr", value)?),
                "sigma2_mw" => sigma2_mw = parse_f64("sigma2_mw", value)?,
                "pc_mw" => pc_mw = Some(parse_f64("pc_mw", value)?),
                "budgets_mw" => budgets_mw = Some(parse_array("budgets_mw", value)?),
                "eps1" => eps1 = parse_f64("eps1", value)?,
                "eps2" => eps2 = parse_f64("eps2", value)?,
                "max_iters" => max_iters = parse_usize("max_iters", value)?,
                "h_max" => h_max = Some(parse_f64("h_max", value)?),
                "trials" => trials = parse_usize("trials", value)?,
                "master_seed" => {
                    master_seed = value.parse().map_err(|e| Error::InvalidConfig {
                        field: "master_seed",
                        message: format!("bad value {value:?}: {e}"),
                    })?
                }
                "experiment" => experiment = Some(ExperimentKind::parse(value)?),
                "sweep" => sweep = parse_array("sweep", value)?,
                "out_dir" => out_dir = PathBuf::from(value),
                other => {
                    return Err(Error::InvalidConfig {
                        field: "config",
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }

        let missing = |field: &'static str| Error::InvalidConfig {
            field,
            message: format!("missing required key {field}"),
        };
        Ok(Self {
            k_users: k_users.ok_or_else(|| missing("k_users"))?,
            nt: nt.ok_or_else(|| missing("nt"))?,
            nr: nr.ok_or_else(|| missing("nr"))?,
            sigma2_mw,
            pc_mw: pc_mw.ok_or_else(|| missing("pc_mw"))?,
            budgets_mw: budgets_mw.ok_or_else(|| missing("budgets_mw"))?,
            eps1,
            eps2,
            max_iters,
            h_max,
            trials,
            master_seed,
            experiment,
            sweep,
            out_dir,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn game_config(&self) -> Result<GameConfig<f64>> {
        GameConfig::new(
            self.k_users,
            self.nt,
            self.nr,
            self.sigma2_mw,
            self.pc_mw,
            self.budgets_mw.clone(),
        )
    }

    pub fn solver_settings(&self) -> SolverSettings<f64> {
        SolverSettings {
            max_outer_iters: self.max_iters,
            outer_tol: self.eps2,
            br: BrSettings {
                eps1: self.eps1,
                h_max: self.h_max,
                ..BrSettings::default()
            },
            ..SolverSettings::default()
        }
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec<f64>> {
        let name = self.experiment.ok_or(Error::InvalidConfig {
            field: "experiment",
            message: format!(
                "missing required key experiment; valid options: {}",
                ExperimentKind::VALID_NAMES
            ),
        })?;
        let spec = ExperimentSpec {
            name,
            base: self.game_config()?,
            trials: self.trials,
            master_seed: self.master_seed,
            sweep_values: self.sweep.clone(),
            solver: self.solver_settings(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_usize(field: &'static str, value: &str) -> Result<usize> {
    value.parse().map_err(|e| Error::InvalidConfig {
        field,
        message: format!("bad value {value:?}: {e}"),
    })
}

fn parse_f64(field: &'static str, value: &str) -> Result<f64> {
    value.parse().map_err(|e| Error::InvalidConfig {
        field,
        message: format!("bad value {value:?}: {e}"),
    })
}

fn parse_array(field: &'static str, value: &str) -> Result<Vec<f64>> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| Error::InvalidConfig {
            field,
            message: format!("expected [a, b, ...], got {value:?}"),
        })?;
    let inner = inner.trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|s| {
            s.trim().parse().map_err(|e| Error::InvalidConfig {
                field,
                message: format!("bad array entry {s:?}: {e}"),
            })
        })
        .collect()
}

fn print_report(report: &SolveReport<f64>) {
    println!(
        "{}: converged={} iterations={} welfare={:.6} epsilon_hat={:.3e}",
        report.algorithm.label(),
        report.converged,
        report.iterations_used,
        report.welfare,
        report.equilibrium.epsilon_hat,
    );
    for (k, (u, alloc)) in report
        .utilities
        .iter()
        .zip(report.final_profile.allocations())
        .enumerate()
    {
        let levels: Vec<String> = alloc.levels().iter().map(|p| format!("{p:.6}")).collect();
        println!("  user {k}: utility={u:.6} allocation=[{}]", levels.join(", "));
    }
}

/// Solve one channel draw with both algorithms, print the outcome, and
/// write one trial CSV to the output directory.
pub fn cmd_solve(config: &CliConfig, seed: u64, out_dir: &Path) -> Result<()> {
    let cfg = config.game_config()?;
    let settings = config.solver_settings();
    let channels = ChannelSet::generate(&cfg, seed)?;

    let basic = solve_basic(&cfg, &channels, &settings)?;
    let bisection = solve_bisection(&cfg, &channels, &settings)?;
    println!("seed={seed}");
    print_report(&basic);
    print_report(&bisection);

    let record = TrialRecord {
        trial_index: 0,
        seed,
        sweep_value: 0.0,
        outcomes: [&basic, &bisection]
            .iter()
            .map(|r| AlgoOutcome {
                algorithm: r.algorithm,
                utilities: r.utilities.clone(),
                welfare: r.welfare,
                converged: r.converged,
                epsilon_hat: r.equilibrium.epsilon_hat,
            })
            .collect(),
        failed: false,
        wall_time_ms: 0.0,
    };
    let spec = ExperimentSpec {
        name: ExperimentKind::Region,
        base: cfg,
        trials: 1,
        master_seed: seed,
        sweep_values: Vec::new(),
        solver: settings,
    };
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let path = out_dir.join("solve.csv");
    std::fs::write(&path, trials_csv(&spec, &[record])).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Run the configured experiment and write both CSV files.
pub fn cmd_experiment(config: &CliConfig, out_dir: &Path) -> Result<()> {
    let spec = config.experiment_spec()?;
    let outcome = run_experiment(&spec)?;
    let (trials_path, summary_path) = emit_csv(&spec, &outcome, out_dir)?;

    let mut sweep_values: Vec<f64> = outcome.summary.iter().map(|r| r.sweep_value).collect();
    sweep_values.dedup();
    for sv in sweep_values {
        let mut parts = vec![format!("sweep={sv}")];
        for row in outcome.summary.iter().filter(|r| r.sweep_value == sv) {
            parts.push(format!(
                "{}={:.6}±{:.6}",
                row.algorithm.label(),
                row.mean_welfare,
                row.stderr_welfare
            ));
        }
        println!("{}", parts.join(" "));
    }
    println!("wrote {}", trials_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

/// Process exit status for an error, per the CLI contract: 2 for
/// configuration problems, 3 for I/O, 4 for numeric batch failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig { .. } | Error::Fixture { .. } => 2,
        Error::Io { .. } => 3,
        Error::BatchAborted { .. }
        | Error::Linalg(_)
        | Error::RankDeficientChannel { .. }
        | Error::Dimension { .. }
        | Error::Infeasible { .. } => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# example
k_users = 2
nt = 2
nr = 2
sigma2_mw = 1.0
pc_mw = 1.0
budgets_mw = [10, 10]
eps1 = 0.001
eps2 = 0.001
max_iters = 100
trials = 5
master_seed = 9
experiment = region
sweep = []
out_dir = results
";

    #[test]
    fn parses_a_full_config() {
        let cfg = CliConfig::parse(FULL).unwrap();
        assert_eq!(cfg.k_users, 2);
        assert_eq!(cfg.budgets_mw, vec![10.0, 10.0]);
        assert_eq!(cfg.experiment, Some(ExperimentKind::Region));
        assert_eq!(cfg.out_dir, PathBuf::from("results"));
        assert_eq!(cfg.trials, 5);
        assert_eq!(cfg.master_seed, 9);
        cfg.game_config().unwrap();
        cfg.experiment_spec().unwrap();
    }

    #[test]
    fn missing_budgets_names_the_field() {
        let text = "k_users = 1\nnt = 1\nnr = 1\npc_mw = 1.0\n";
        let err = CliConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("budgets_mw"), "{err}");
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "k_users = 1\nbogus_key = 3\n";
        let err = CliConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let text = "k_users = 1\nk_users = 2\n";
        let err = CliConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("k_users"), "{err}");
    }

    #[test]
    fn invalid_experiment_name_lists_options() {
        let text = "k_users = 1\nnt = 1\nnr = 1\npc_mw = 1\nbudgets_mw = [1]\nexperiment = wrong\n";
        let err = CliConfig::parse(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("antenna_sweep") && msg.contains("budget_sweep"), "{msg}");
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn defaults_apply() {
        let text = "k_users = 1\nnt = 1\nnr = 1\npc_mw = 1\nbudgets_mw = [10]\n";
        let cfg = CliConfig::parse(text).unwrap();
        assert_eq!(cfg.sigma2_mw, 1.0);
        assert_eq!(cfg.eps1, 1e-3);
        assert_eq!(cfg.eps2, 1e-3);
        assert_eq!(cfg.max_iters, 100);
        assert_eq!(cfg.trials, 200);
        assert_eq!(cfg.master_seed, 1);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        assert!(cfg.h_max.is_none());
        assert!(cfg.experiment.is_none());
    }

    #[test]
    fn sweep_required_for_sweep_experiments() {
        let text = "k_users = 1\nnt = 1\nnr = 1\npc_mw = 1\nbudgets_mw = [10]\nexperiment = antenna_sweep\n";
        let cfg = CliConfig::parse(text).unwrap();
        let err = cfg.experiment_spec().unwrap_err();
        assert!(err.to_string().contains("sweep"), "{err}");
    }
}
