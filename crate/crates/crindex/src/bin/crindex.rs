use clap::{Parser, Subcommand, ValueEnum};
use crindex::config::load_domain_config;
use crindex::indices::{exterior_psh_oracle, interior_psh_oracle, Objective};
use crindex::report::{
    emit_pointwise_csv, run_analyze, run_certify, OracleOut, RunError, RunOptions,
};
use crindex::selftest::{jet_fd_suite, rank_one_suite};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "crindex",
    version,
    about = "Boundary CR invariants and Diederich-Fornaess / Steinness index estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Interior,
    Exterior,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Df,
    S,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Objective {
        match o {
            ObjectiveArg::Df => Objective::Df,
            ObjectiveArg::S => Objective::Steinness,
        }
    }
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the TOML configuration.
    config: PathBuf,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-point CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the sample count.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: sample, thresholds, conformal search, oracles.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Single plurisubharmonicity verdict at a fixed exponent.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        side: SideArg,
        #[arg(long)]
        gamma: f64,
    },
    /// Consistency battery only; exit 0 when every check passes.
    Certify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Trivialization search with an explicit objective and budget.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "df")]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
    },
    /// Jet finite-difference and rank-one oracle suites.
    Selftest {
        /// Triples for the jet suite and instances for the rank-one suite.
        #[arg(long, default_value_t = 500)]
        cases: usize,
        #[arg(long, default_value_t = 20260401)]
        seed: u64,
    },
}

fn write_out(path: &Option<PathBuf>, contents: &str) -> Result<(), RunError> {
    if let Some(path) = path {
        std::fs::write(path, contents)
            .map_err(|e| RunError::Other(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn load(common: &CommonArgs) -> Result<crindex::DomainSpec, RunError> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        RunError::Config(crindex::config::ConfigError::Invariant(format!(
            "cannot read {}: {e}",
            common.config.display()
        )))
    })?;
    Ok(load_domain_config(&text)?)
}

fn opts(common: &CommonArgs) -> RunOptions {
    RunOptions {
        seed: common.seed,
        samples: common.samples,
        ..Default::default()
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Analyze { common } => {
            let spec = load(&common)?;
            let report = run_analyze(&spec, &common.config.display().to_string(), &opts(&common))?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| RunError::Other(e.to_string()))?;
            write_out(&common.out, &json)?;
            write_out(&common.csv, &emit_pointwise_csv(&report))?;
            println!(
                "df_w = {:.6}  df_s_lower = {:.6}  s_w = {}  s_s_upper = {}",
                report.indices.df_w,
                report.indices.df_s_lower,
                fmt_inf(report.indices.s_w.0),
                fmt_inf(report.indices.s_s_upper.0),
            );
            println!(
                "weak points: {} / {}   interior exponent {:.6}   exterior exponent {}",
                report.indices.n_weak_points,
                report.per_point.len(),
                report.oracles.interior_exponent,
                fmt_inf(report.oracles.exterior_exponent.0),
            );
            println!(
                "consistency: theorem chain {}   max hermitian defect {:.3e}   strong Oka margin {:.3e}",
                if report.consistency.theorem1_ok { "ok" } else { "VIOLATED" },
                report.consistency.boas_straube_max_defect,
                report.consistency.strong_oka_margin,
            );
            if common.out.is_none() {
                println!("{json}");
            }
            if !report.consistency.theorem1_ok {
                return Err(RunError::Consistency(
                    "interior/exterior oracle exponents are inconsistent with the boundary thresholds".into(),
                ));
            }
            Ok(())
        }
        Command::Oracle {
            common,
            side,
            gamma,
        } => {
            let spec = load(&common)?;
            let run_opts = opts(&common);
            let mut spec_run = spec.clone();
            if let Some(seed) = run_opts.seed {
                spec_run.sampling.seed = seed;
            }
            if let Some(samples) = run_opts.samples {
                spec_run.sampling.count = samples as i64;
            }
            let samples = crindex::geometry::sample_boundary(&spec_run)
                .map_err(RunError::from)?;
            let verdict = match side {
                SideArg::Interior => interior_psh_oracle(&spec_run, &samples, gamma),
                SideArg::Exterior => exterior_psh_oracle(&spec_run, &samples, gamma),
            }
            .map_err(RunError::from)?;
            let out = OracleOut::from(&verdict);
            let json =
                serde_json::to_string_pretty(&out).map_err(|e| RunError::Other(e.to_string()))?;
            write_out(&common.out, &json)?;
            println!(
                "{} oracle at gamma = {}: {}",
                out.side,
                gamma,
                if out.all_psd { "all PSD" } else { "violations found" }
            );
            for d in &out.min_eig_by_distance {
                println!("  distance {:>10.3e}: min eigenvalue {:+.6e}", d.distance, d.min_eig);
            }
            if common.out.is_none() {
                println!("{json}");
            }
            Ok(())
        }
        Command::Certify { common } => {
            let spec = load(&common)?;
            let report = run_certify(&spec, &opts(&common))?;
            for check in &report.checks {
                println!(
                    "{} {}: {}",
                    if check.ok { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            if report.ok {
                Ok(())
            } else {
                Err(RunError::Consistency("certification failed".into()))
            }
        }
        Command::Optimize {
            common,
            objective,
            budget,
        } => {
            let spec = load(&common)?;
            let run_opts = RunOptions {
                seed: common.seed,
                samples: common.samples,
                budget,
                objective: objective.into(),
            };
            let report = run_analyze(&spec, &common.config.display().to_string(), &run_opts)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| RunError::Other(e.to_string()))?;
            write_out(&common.out, &json)?;
            write_out(&common.csv, &emit_pointwise_csv(&report))?;
            println!(
                "coefficients: {:?}",
                report.indices.trivialization_coeffs
            );
            println!(
                "df_w = {:.6}  df_s_lower = {:.6}  s_w = {}  s_s_upper = {}",
                report.indices.df_w,
                report.indices.df_s_lower,
                fmt_inf(report.indices.s_w.0),
                fmt_inf(report.indices.s_s_upper.0),
            );
            if common.out.is_none() {
                println!("{json}");
            }
            Ok(())
        }
        Command::Selftest { cases, seed } => {
            let jets = jet_fd_suite(cases, seed);
            println!(
                "{} jet finite-difference suite: {} cases, max relative error {:.3e}, max reality defect {:.3e}",
                if jets.ok() { "PASS" } else { "FAIL" },
                jets.cases,
                jets.max_err,
                jets.max_reality_defect,
            );
            for f in jets.failures.iter().take(5) {
                println!("  {f}");
            }
            let rank_one = rank_one_suite(cases.max(1000), seed ^ 0x5ca1ab1e);
            println!(
                "{} rank-one threshold suite: {} cases, max relative disagreement {:.3e}",
                if rank_one.ok() { "PASS" } else { "FAIL" },
                rank_one.cases,
                rank_one.max_err,
            );
            for f in rank_one.failures.iter().take(5) {
                println!("  {f}");
            }
            if jets.ok() && rank_one.ok() {
                Ok(())
            } else {
                Err(RunError::Consistency("selftest failed".into()))
            }
        }
    }
}

fn fmt_inf(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x:.6}")
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
