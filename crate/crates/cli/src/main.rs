//! `tswlad` command-line runner.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tswlad::experiment::{
    load_dataset, preset, run_labelled, Algorithm, ExperimentConfig, RegressorConfig, RunReport,
    SeedConfig,
};
use tswlad::{Error, Result};

#[derive(Parser)]
#[command(name = "tswlad", version, about = "Recursive identification from saturated observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a built-in preset.
    Run(RunArgs),
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Dataset utilities.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Parse a dataset file and print a summary.
    Check { file: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: table1, fig-regret or sentencing-demo.
    #[arg(long)]
    preset: Option<String>,
    /// Number of replicates, seeds 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory for CSV series and JSON reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Tswlad,
    Baseline,
    Both,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Tswlad => Algorithm::Tswlad,
            AlgoArg::Baseline => Algorithm::L2Baseline,
            AlgoArg::Both => Algorithm::Both,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => validate(&config),
        Command::Dataset {
            command: DatasetCommand::Check { file },
        } => check_dataset(&file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let configs = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let cfg = ExperimentConfig::load(path)?;
            let label = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            vec![(label, cfg)]
        }
        (None, Some(name)) => preset(name, args.seeds)?,
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    for (label, mut cfg) in configs {
        if let Some(n) = args.seeds {
            cfg.run.seeds = SeedConfig::Count(n);
        }
        if let Some(dir) = &args.out {
            cfg.run.output = Some(dir.clone());
        }
        if let Some(a) = args.algo {
            cfg.estimator.algorithm = a.into();
        }
        let report = run_labelled(&cfg, &label)?;
        print_report(&report);
    }
    Ok(())
}

fn print_report(report: &RunReport) {
    println!(
        "{}: horizon {}, {} seed(s), config {}",
        report.label,
        report.horizon,
        report.provenance.seeds.len(),
        &report.provenance.config_sha256[..12]
    );
    for alg in &report.algorithms {
        match alg.final_error {
            Some(s) => println!(
                "  {:<12} final error median {:.6} [q1 {:.6}, q3 {:.6}]",
                alg.algorithm, s.median, s.lower_quartile, s.upper_quartile
            ),
            None => println!("  {:<12} final error unavailable", alg.algorithm),
        }
        if let Some(s) = alg.accuracy {
            println!("  {:<12} accuracy median {:.6}", alg.algorithm, s.median);
        }
    }
}

fn validate(path: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate()?;
    if let RegressorConfig::Dataset { path: data } = &cfg.system.regressors {
        load_dataset(data, Some(cfg.dim()))?;
    }
    println!("{}: ok (dimension {}, {} seed(s))", path.display(), cfg.dim(), cfg.run.seeds.seeds().len());
    Ok(())
}

fn check_dataset(path: &Path) -> Result<()> {
    let data = load_dataset(path, None)?;
    let Some(first) = data.first() else {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    };
    let lower = data.iter().filter(|d| d.observation <= d.spec.lower_clip).count();
    let upper = data.iter().filter(|d| d.observation >= d.spec.upper_clip).count();
    println!(
        "{}: {} rows, dimension {}, {} at lower clip, {} at upper clip, weights {}",
        path.display(),
        data.len(),
        first.dim(),
        lower,
        upper,
        if first.weight.is_some() { "present" } else { "absent" }
    );
    Ok(())
}
