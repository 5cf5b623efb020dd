//! `nonlocal`: simulate, rearrange, predict, check and sweep runs of the
//! mass-conserving nonlocal ODE.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod check;
mod config;
mod error;
mod run;
mod sweep;

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nonlocal_core::dynamics::fmt17;
use nonlocal_core::io::{write_distribution, write_staircase};
use nonlocal_core::{predict_h1, predict_h3, AtomField, OmegaPrediction};

use crate::config::{parse_atoms, ConfigError, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "nonlocal", version, about = "Atom-based runs of a mass-conserving nonlocal ODE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Output location overrides shared by every subcommand.
#[derive(Args, Clone, Default)]
struct OutputArgs {
    /// Output directory (overrides output.dir)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Base file name (overrides output.base)
    #[arg(long)]
    base: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configured run and write trajectory, summary and profile
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Decreasing rearrangement of the initial data or of inline values
    Rearrange {
        config: Option<PathBuf>,
        /// Comma-separated equal-measure samples
        #[arg(long, conflicts_with_all = ["config", "atoms"])]
        samples: Option<String>,
        /// Comma-separated value:measure pairs
        #[arg(long, conflicts_with = "config")]
        atoms: Option<String>,
        /// Domain measure for inline data
        #[arg(long, default_value_t = 1.0)]
        measure: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Predict the limit step function from mass and limit energy
    Predict {
        config: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        m0: f64,
        #[arg(long, allow_hyphen_values = true)]
        energy_limit: f64,
        /// Defaults to H1 when m0 > |Ω| and H3 when m0 < 0
        #[arg(long, value_enum)]
        hypothesis: Option<HypothesisArg>,
        /// Domain measure when no config is given
        #[arg(long)]
        measure: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Simulate, then audit invariants, energy, commutation and predictors
    Check {
        config: PathBuf,
        /// Corrupt one snapshot before auditing
        #[arg(long, hide = true)]
        inject_fault: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run one simulation per value of a numeric key
    Sweep {
        config: PathBuf,
        /// key=start:stop:count; `initial.atoms.<i>` varies the i-th atom value
        #[arg(long)]
        vary: String,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum HypothesisArg {
    H1,
    H2,
    H3,
}

fn load(path: &Path, output: &OutputArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = RunConfig::parse(&text)?;
    apply_output(&mut cfg, output)?;
    Ok(cfg)
}

fn apply_output(cfg: &mut RunConfig, output: &OutputArgs) -> Result<(), CliError> {
    if let Some(dir) = &output.out_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(base) = &output.base {
        cfg.set("output.base", base)?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn cmd_simulate(config: &Path, output: &OutputArgs) -> Result<(), CliError> {
    let cfg = load(config, output)?;
    let (out, paths) = run::simulate(&cfg)?;
    let tr = &out.trajectory;
    println!("hypothesis = {}", tr.hypothesis.tag);
    println!("termination = {}", tr.termination);
    println!("final_time = {}", fmt17(tr.final_time()));
    println!("audit = {}", if out.audit.all_passed() { "PASS" } else { "FAIL" });
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_rearrange(
    config: Option<&Path>,
    samples: Option<&str>,
    atoms: Option<&str>,
    measure: f64,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let (u, mut cfg) = match (config, samples, atoms) {
        (Some(path), None, None) => {
            let cfg = load(path, output)?;
            (cfg.initial_field()?, cfg)
        }
        (None, Some(text), None) => {
            let values = text
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
                .collect::<Result<Vec<f64>, String>>()
                .map_err(|r| ConfigError::Value {
                    key: "--samples".into(),
                    reason: r,
                })?;
            let u = AtomField::from_samples(&values, measure).map_err(|e| ConfigError::Value {
                key: "--samples".into(),
                reason: e.to_string(),
            })?;
            (u, RunConfig::default())
        }
        (None, None, Some(text)) => {
            let atoms = parse_atoms("--atoms", text)?;
            let u = AtomField::from_atoms(&atoms, measure).map_err(|e| ConfigError::Value {
                key: "--atoms".into(),
                reason: e.to_string(),
            })?;
            (u, RunConfig::default())
        }
        _ => return Err(CliError::Usage("give a config file, --samples or --atoms".into())),
    };
    if config.is_none() {
        cfg.output_base = "rearranged".into();
        apply_output(&mut cfg, output)?;
    }
    run::ensure_dir(&cfg.output_dir)?;
    let profile = u.rearrange();
    let staircase = cfg.output_path("staircase.dat");
    write_file(&staircase, |w| write_staircase(&profile, w))?;
    let distribution = cfg.output_path("distribution.dat");
    write_file(&distribution, |w| write_distribution(&u, w))?;

    let mut lo = 0.0;
    for (i, (&v, len)) in profile.plateau_values().iter().zip(profile.plateau_lengths()).enumerate() {
        let hi = profile.breakpoints()[i + 1];
        println!(
            "plateau.{} = {} on ({}, {})  length {}",
            i + 1,
            fmt17(v),
            fmt17(lo),
            fmt17(hi),
            fmt17(len)
        );
        lo = hi;
    }
    println!("wrote {}", staircase.display());
    println!("wrote {}", distribution.display());
    Ok(())
}

fn cmd_predict(
    config: Option<&Path>,
    m0: f64,
    e_inf: f64,
    hypothesis: Option<HypothesisArg>,
    measure: Option<f64>,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(path) => load(path, output)?,
        None => {
            let mut cfg = RunConfig {
                output_base: "limit".into(),
                ..RunConfig::default()
            };
            apply_output(&mut cfg, output)?;
            cfg
        }
    };
    if let Some(m) = measure {
        cfg.set("domain.measure", &m.to_string())?;
        cfg.validate()?;
    }
    let omega = cfg.domain_measure;
    let hypothesis = match hypothesis {
        Some(h) => h,
        None if m0 > omega => HypothesisArg::H1,
        None if m0 < 0.0 => HypothesisArg::H3,
        None => {
            return Err(CliError::Usage(format!(
                "cannot infer the hypothesis from m0 = {m0} and |Ω| = {omega}; pass --hypothesis"
            )))
        }
    };
    let pair = cfg.build_pair()?;
    let prediction: OmegaPrediction = match hypothesis {
        HypothesisArg::H1 => predict_h1(m0, e_inf, omega, &pair),
        HypothesisArg::H3 => predict_h3(m0, e_inf, omega, &pair),
        HypothesisArg::H2 => {
            return Err(CliError::Usage(
                "no predictor under H2: mass and limit energy do not determine the plateau \
                 measures when both 0 and 1 are zeros of g"
                    .into(),
            ))
        }
    }
    .map_err(CliError::Predictor)?;
    run::ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_path("predicted.dat");
    let profile = prediction
        .profile()
        .map_err(|e| CliError::numerical(format!("prediction is not a valid profile: {e}")))?;
    write_file(&path, |w| write_staircase(&profile, w))?;
    print!("{}", prediction.summary());
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_check(config: &Path, inject_fault: bool, output: &OutputArgs) -> Result<(), CliError> {
    let cfg = load(config, output)?;
    let rows = check::run_checks(&cfg, inject_fault)?;
    let table = check::table(&rows);
    print!("{table}");
    run::write_text(&cfg.output_path("check.txt"), &table)?;
    let failed = rows.iter().filter(|r| r.status == check::Status::Fail).count();
    if failed > 0 {
        return Err(CliError::CheckFailed(failed));
    }
    Ok(())
}

fn cmd_sweep(config: &Path, vary: &str, output: &OutputArgs) -> Result<(), CliError> {
    let cfg = load(config, output)?;
    let vary = sweep::Vary::parse(vary)?;
    let points = sweep::grid(&cfg, &vary)?;
    let workers = sweep::worker_count(points.len())?;
    run::ensure_dir(&cfg.output_dir)?;
    let rows = sweep::run_all(&points, workers);
    let index = cfg.output_path("sweep.csv");
    run::write_text(&index, &sweep::index_csv(&rows))?;

    let mut report = String::new();
    for r in &rows {
        match &r.outcome {
            Ok(d) => {
                let _ = writeln!(report, "{} = {}: {}", vary.key, fmt17(r.parameter), d.termination);
            }
            Err(e) => {
                let _ = writeln!(report, "{} = {}: failed: {e}", vary.key, fmt17(r.parameter));
            }
        }
    }
    print!("{report}");
    println!("wrote {}", index.display());
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(CliError::AllRunsFailed(rows.len()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, output } => cmd_simulate(config, output),
        Command::Rearrange {
            config,
            samples,
            atoms,
            measure,
            output,
        } => cmd_rearrange(config.as_deref(), samples.as_deref(), atoms.as_deref(), *measure, output),
        Command::Predict {
            config,
            m0,
            energy_limit,
            hypothesis,
            measure,
            output,
        } => cmd_predict(config.as_deref(), *m0, *energy_limit, *hypothesis, *measure, output),
        Command::Check {
            config,
            inject_fault,
            output,
        } => cmd_check(config, *inject_fault, output),
        Command::Sweep { config, vary, output } => cmd_sweep(config, vary, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
