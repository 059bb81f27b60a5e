//! Command-line interface.
//!
//! Subcommand grammar:
//!
//! ```text
//! fac run <config.json> [--out DIR]
//! fac sweep <config.json> --seeds K [--base-seed S] [--out DIR]
//! fac oracle <what> <mdp.json> <theta.json>
//! fac check-assumptions <config.json> [--policies N]
//! fac plot <column> <input...> --out FILE.svg
//! ```
//!
//! `run` writes `<config-stem>.csv` into the output directory. `sweep`
//! writes one `seed_<s>.csv` per seed, a `manifest.json` listing those file
//! names, and a `summary.json` with aggregate statistics. `oracle` prints
//! exact quantities (`j`, `v`, `q`, `grad`, `emphasis`) for an MDP/policy
//! pair under the uniform behavior policy. `check-assumptions` measures the
//! standing assumptions over a sample of perturbed policies and prints the
//! report. `plot` renders CSV logs to SVG — one line per CSV, or a
//! mean ± std band when the single input is a JSON manifest of CSV paths.
//!
//! Exit codes: `0` success, `1` usage or configuration error, `2` the run
//! (or any run of a sweep) diverged — the CSV is still written — and `3` an
//! I/O failure. Messages go to standard error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::driver::{self, DriverError, RunConfig};
use crate::envs::{from_file, EnvError};
use crate::oracles::{
    check_assumptions, emphasis_weights, exact_gradient_chain,
    exact_gradient_emphatic, objective, q_values, state_values, OracleError,
};
use crate::plot::{render_band, render_series, sweep_manifest, Column};
use crate::policy::TabularSoftmaxPolicy;
use crate::rng::{stream, uniform};
use crate::runlog::{LogError, RunLog};
use crate::scalar::norm2;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser)]
#[command(
    name = "fac",
    version,
    about = "Functional actor-critic runs on exactly solvable MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configured run and write its CSV log.
    Run {
        /// JSON run configuration.
        config: PathBuf,
        /// Directory receiving `<config-stem>.csv`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Execute the configuration across consecutive seeds.
    Sweep {
        /// JSON run configuration.
        config: PathBuf,
        /// Number of seeds.
        #[arg(long)]
        seeds: u64,
        /// First seed; defaults to the configured one.
        #[arg(long)]
        base_seed: Option<u64>,
        /// Directory receiving per-seed CSVs, `manifest.json`, and
        /// `summary.json`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print an exact quantity for an MDP/policy pair (uniform behavior).
    Oracle {
        /// One of: j, v, q, grad, emphasis.
        what: String,
        /// JSON file holding a finite MDP.
        mdp: PathBuf,
        /// JSON file holding the actor parameter table (states × actions).
        theta: PathBuf,
    },
    /// Measure the standing assumptions over sampled policies.
    CheckAssumptions {
        /// JSON run configuration.
        config: PathBuf,
        /// Size of the policy sample (the configured start plus
        /// perturbations).
        #[arg(long, default_value_t = 8)]
        policies: usize,
    },
    /// Render CSV logs to a deterministic SVG.
    Plot {
        /// Column to plot (a CSV header name, e.g. J or critic_err).
        column: String,
        /// Input CSV files, or a single JSON manifest listing them (renders
        /// a mean ± std band).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses arguments from the process environment and executes them,
/// returning the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Sweep {
            config,
            seeds,
            base_seed,
            out,
        } => cmd_sweep(&config, seeds, base_seed, &out),
        Command::Oracle { what, mdp, theta } => cmd_oracle(&what, &mdp, &theta),
        Command::CheckAssumptions { config, policies } => {
            cmd_check(&config, policies)
        }
        Command::Plot {
            column,
            inputs,
            out,
        } => cmd_plot(&column, &inputs, &out),
    }
}

/// Loads a run configuration, printing the failure and mapping it to an
/// exit code (unreadable file: I/O; unparsable content: configuration).
fn load_config(path: &Path) -> Result<RunConfig, i32> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_IO
    })?;
    serde_json::from_str(&text).map_err(|e| {
        eprintln!("error: invalid configuration {}: {e}", path.display());
        EXIT_CONFIG
    })
}

/// Failures inside the driver are configuration errors unless the
/// environment could not be read from disk.
fn driver_exit(err: &DriverError) -> i32 {
    match err {
        DriverError::Env(EnvError::Io { .. }) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn log_error_exit(err: &LogError) -> i32 {
    match err {
        LogError::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// The CSV name a configuration's run log is written under.
fn csv_name(config: &Path) -> String {
    let stem = config
        .file_stem()
        .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
    format!("{stem}.csv")
}

fn cmd_run(config: &Path, out_dir: &Path) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let log = match driver::run(&cfg) {
        Ok(log) => log,
        Err(e) => {
            eprintln!("error: {e}");
            return driver_exit(&e);
        }
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return EXIT_IO;
    }
    let out = out_dir.join(csv_name(config));
    if let Err(e) = log.write_csv(&out) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return EXIT_IO;
    }
    println!("{}", out.display());
    match log.diverged_at {
        Some(t) => {
            eprintln!("diverged at step {t}");
            EXIT_DIVERGED
        }
        None => EXIT_OK,
    }
}

fn cmd_sweep(config: &Path, seeds: u64, base_seed: Option<u64>, out: &Path) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if seeds == 0 {
        eprintln!("error: --seeds must be positive");
        return EXIT_CONFIG;
    }
    let logs = match driver::sweep(&cfg, seeds, base_seed) {
        Ok(logs) => logs,
        Err(e) => {
            eprintln!("error: {e}");
            return driver_exit(&e);
        }
    };
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_IO;
    }
    let base = base_seed.unwrap_or(cfg.seed);
    let mut names = Vec::with_capacity(logs.len());
    let mut tagged = Vec::with_capacity(logs.len());
    for (i, log) in logs.iter().enumerate() {
        let seed = base + i as u64;
        let name = format!("seed_{seed}.csv");
        let path = out.join(&name);
        if let Err(e) = log.write_csv(&path) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_IO;
        }
        names.push(name);
        tagged.push((seed, log));
    }
    // The manifest is the plot-facing seed group: just the CSV names,
    // relative to its own directory.
    let manifest_path = out.join("manifest.json");
    let manifest_json = serde_json::to_string_pretty(&names)
        .expect("a string list serializes");
    if let Err(e) = fs::write(&manifest_path, manifest_json) {
        eprintln!("error: cannot write {}: {e}", manifest_path.display());
        return EXIT_IO;
    }
    let summary = sweep_manifest(&tagged);
    let summary_path = out.join("summary.json");
    let summary_json = serde_json::to_string_pretty(&summary)
        .expect("summary serialization cannot fail");
    if let Err(e) = fs::write(&summary_path, summary_json) {
        eprintln!("error: cannot write {}: {e}", summary_path.display());
        return EXIT_IO;
    }
    println!("{}", manifest_path.display());
    if summary.n_diverged > 0 {
        eprintln!("{} of {} runs diverged", summary.n_diverged, seeds);
        EXIT_DIVERGED
    } else {
        EXIT_OK
    }
}

fn cmd_oracle(what: &str, mdp_path: &Path, theta_path: &Path) -> i32 {
    if !["j", "v", "q", "grad", "emphasis"].contains(&what) {
        eprintln!(
            "error: unknown oracle {what:?}; expected one of j, v, q, grad, emphasis"
        );
        return EXIT_CONFIG;
    }
    let bench = match from_file::<f64>(&mdp_path.display().to_string()) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                EnvError::Io { .. } => EXIT_IO,
                _ => EXIT_CONFIG,
            };
        }
    };
    let theta_text = match fs::read_to_string(theta_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", theta_path.display());
            return EXIT_IO;
        }
    };
    let theta: Vec<Vec<f64>> = match serde_json::from_str(&theta_text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: invalid theta {}: {e}", theta_path.display());
            return EXIT_CONFIG;
        }
    };
    let (mdp, mu) = (bench.mdp, bench.behavior);
    if theta.len() != mdp.n_states
        || theta.iter().any(|row| row.len() != mdp.n_actions)
    {
        eprintln!(
            "error: theta must be {} × {}",
            mdp.n_states, mdp.n_actions
        );
        return EXIT_CONFIG;
    }
    let policy = TabularSoftmaxPolicy::new(theta);
    let report = (|| -> Result<serde_json::Value, OracleError> {
        Ok(match what {
            "j" => serde_json::json!({ "j": objective(&mdp, &mu, &policy)? }),
            "v" => serde_json::json!({ "v": state_values(&mdp, &policy)? }),
            "q" => serde_json::json!({ "q": q_values(&mdp, &policy)? }),
            "grad" => {
                let chain = exact_gradient_chain(&mdp, &mu, &policy)?;
                let emphatic = exact_gradient_emphatic(&mdp, &mu, &policy)?;
                let gap = chain
                    .iter()
                    .zip(&emphatic)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                serde_json::json!({
                    "grad": chain,
                    "grad_norm": norm2(&chain),
                    "paths_gap": gap,
                })
            }
            "emphasis" => {
                let m = emphasis_weights(&mdp, &mu, &policy)?;
                serde_json::json!({
                    "emphasis": m,
                    "total_mass": m.iter().sum::<f64>(),
                    "expected_mass": 1.0 / (1.0 - mdp.discount),
                })
            }
            _ => unreachable!("the oracle name was validated above"),
        })
    })();
    match report {
        Ok(value) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&value)
                    .expect("JSON serialization cannot fail")
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn cmd_check(config: &Path, policies: usize) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let p = match driver::prepare(&cfg) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return driver_exit(&e);
        }
    };
    let sample = sample_policies(&p.policy, policies.max(2), cfg.seed);
    match check_assumptions(&p.mdp, &p.mu, &p.features, &sample, p.lambda) {
        Ok(report) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report)
                    .expect("JSON serialization cannot fail")
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

/// The configured start plus `n − 1` uniform perturbations of it.
fn sample_policies(
    base: &TabularSoftmaxPolicy<f64>,
    n: usize,
    seed: u64,
) -> Vec<TabularSoftmaxPolicy<f64>> {
    let mut rng = stream(seed, "assumption-policies");
    let mut out = vec![base.clone()];
    while out.len() < n {
        let delta: Vec<f64> = (0..base.param_count())
            .map(|_| uniform::<f64>(&mut rng, -1.0, 1.0))
            .collect();
        out.push(base.with_step(&delta));
    }
    out
}

fn cmd_plot(column: &str, inputs: &[PathBuf], out: &Path) -> i32 {
    let column: Column = match column.parse() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let is_manifest =
        |p: &PathBuf| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let rendered = if inputs.iter().any(is_manifest) {
        if inputs.len() != 1 {
            eprintln!("error: a seed-group manifest must be the only input");
            return EXIT_CONFIG;
        }
        let manifest = &inputs[0];
        let text = match fs::read_to_string(manifest) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", manifest.display());
                return EXIT_IO;
            }
        };
        let names: Vec<String> = match serde_json::from_str(&text) {
            Ok(n) => n,
            Err(e) => {
                eprintln!("error: invalid manifest {}: {e}", manifest.display());
                return EXIT_CONFIG;
            }
        };
        let parent = manifest.parent().unwrap_or_else(|| Path::new("."));
        let mut logs = Vec::with_capacity(names.len());
        for name in &names {
            let path = parent.join(name);
            match RunLog::read_csv(&path) {
                Ok(log) => logs.push(log),
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    return log_error_exit(&e);
                }
            }
        }
        render_band(&logs, column, column.name())
    } else {
        let mut logs = Vec::with_capacity(inputs.len());
        let mut labels = Vec::with_capacity(inputs.len());
        for path in inputs {
            match RunLog::read_csv(path) {
                Ok(log) => {
                    labels.push(path.file_stem().map_or_else(
                        || path.display().to_string(),
                        |s| s.to_string_lossy().into_owned(),
                    ));
                    logs.push(log);
                }
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    return log_error_exit(&e);
                }
            }
        }
        let series: Vec<(&str, &RunLog)> = labels
            .iter()
            .map(String::as_str)
            .zip(logs.iter())
            .collect();
        render_series(&series, column, column.name())
    };
    match rendered {
        Ok(svg) => {
            if let Err(e) = fs::write(out, svg) {
                eprintln!("error: cannot write {}: {e}", out.display());
                return EXIT_IO;
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
