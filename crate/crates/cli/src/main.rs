use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairbench::data::{load_german, GermanConfig, GermanSummary, SimConfig, GERMAN_REFERENCE};
use fairbench::harness::report::{pareto_points, summary_scenarios};
use fairbench::harness::{
    emit_reports, pareto_frontier, read_summary, run_experiment, DatasetConfig, ExperimentConfig,
};
use fairbench::inprocess::{AdversaryParams, MetaFairParams};
use fairbench::multistage::{InProcessor, PostProcessor, PreProcessor};
use fairbench::postprocess::RejectOptionParams;
use fairbench::preprocess::RepairParams;
use fairbench::{Error, Scenario};

#[derive(Parser)]
#[command(
    name = "fairbench",
    version,
    about = "Fairness processors and multistage pipelines for credit scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the processor grid on simulated data.
    Simulate {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Run an experiment described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output directory in the file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Run the processor grid on the German credit file.
    German {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        age_cutoff: u32,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Print the accuracy/separation Pareto front of a result directory.
    Pareto {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct GridArgs {
    /// single, or, and, xor or all
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Comma list of reweigh, di (or none)
    #[arg(long, default_value = "reweigh,di")]
    pre: String,
    /// Comma list of adversarial, pireg, metafair (or none)
    #[arg(long = "in", default_value = "adversarial,pireg,metafair")]
    in_: String,
    /// Comma list of reject, eqodds, platt (or none)
    #[arg(long, default_value = "reject,eqodds,platt")]
    post: String,
    #[arg(long, default_value_t = 1.0)]
    di_lambda: f64,
    #[arg(long, default_value_t = 0.6)]
    ro_theta: f64,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
}

fn names(list: &str) -> Vec<&str> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty() && *s != "none")
        .collect()
}

impl GridArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), Error> {
        cfg.scenarios = if self.scenario == "all" {
            Scenario::ALL.to_vec()
        } else {
            names(&self.scenario)
                .into_iter()
                .map(str::parse)
                .collect::<Result<_, _>>()?
        };
        let unknown =
            |stage: &str, name: &str| Error::Config(format!("unknown {stage} processor '{name}'"));
        cfg.processors.pre = names(&self.pre)
            .into_iter()
            .map(|n| match n {
                "reweigh" => Ok(PreProcessor::Reweigh {}),
                "di" => Ok(PreProcessor::DiRemover(RepairParams {
                    lambda: self.di_lambda,
                    ..Default::default()
                })),
                other => Err(unknown("pre", other)),
            })
            .collect::<Result<_, _>>()?;
        cfg.processors.in_ = names(&self.in_)
            .into_iter()
            .filter(|n| *n != "logistic")
            .map(|n| match n {
                "adversarial" => Ok(InProcessor::Adversarial(AdversaryParams::default())),
                "pireg" => Ok(InProcessor::Pireg { eta: 1.0 }),
                "metafair" => Ok(InProcessor::Metafair(MetaFairParams::default())),
                other => Err(unknown("in", other)),
            })
            .collect::<Result<_, _>>()?;
        cfg.processors.post = names(&self.post)
            .into_iter()
            .map(|n| match n {
                "reject" => Ok(PostProcessor::Reject(RejectOptionParams {
                    theta: self.ro_theta,
                })),
                "eqodds" => Ok(PostProcessor::Eqodds {}),
                "platt" => Ok(PostProcessor::Platt {}),
                other => Err(unknown("post", other)),
            })
            .collect::<Result<_, _>>()?;
        cfg.parallelism = Some(self.parallelism);
        Ok(())
    }
}

fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<(), Error> {
    let results = run_experiment(cfg)?;
    let files = emit_reports(&results, out)?;
    let failures = results.runs.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} pipeline runs, {} failed; wrote {} files to {}",
        results.runs.len(),
        failures,
        files.len(),
        out.display()
    );
    Ok(())
}

fn print_german_summary(measured: &GermanSummary) {
    let r = &GERMAN_REFERENCE;
    println!("quantity,measured,reference");
    println!("rows,{},{}", measured.rows, r.rows);
    println!("features,{},{}", measured.features, r.features);
    for (name, m, p) in [
        ("default_rate", measured.default_rate, r.default_rate),
        ("a1_rate", measured.a1_rate, r.a1_rate),
        ("a2_rate", measured.a2_rate, r.a2_rate),
        ("or_rate", measured.or_rate, r.or_rate),
        ("and_rate", measured.and_rate, r.and_rate),
        ("xor_rate", measured.xor_rate, r.xor_rate),
    ] {
        println!("{name},{m},{p}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            n,
            replicates,
            seed,
            out,
            grid,
        } => {
            let mut cfg = ExperimentConfig::new(DatasetConfig::Simulation(SimConfig {
                n,
                seed,
                replicates,
            }));
            cfg.seed = seed;
            grid.apply(&mut cfg)?;
            cfg.validate()?;
            execute(&cfg, &out)
        }
        Command::Run {
            config,
            out,
            parallelism,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if parallelism.is_some() {
                cfg.parallelism = parallelism;
            }
            let out = out.or_else(|| cfg.output.clone()).ok_or_else(|| {
                Error::Config("no output directory: set `output` or pass --out".into())
            })?;
            cfg.validate()?;
            execute(&cfg, &out)
        }
        Command::German {
            data,
            out,
            replicates,
            seed,
            age_cutoff,
            grid,
        } => {
            let german = GermanConfig {
                path: data,
                age_cutoff,
                replicates,
                ..Default::default()
            };
            print_german_summary(&GermanSummary::measure(&load_german(&german)?)?);
            let mut cfg = ExperimentConfig::new(DatasetConfig::German(german));
            cfg.seed = seed;
            grid.apply(&mut cfg)?;
            cfg.validate()?;
            execute(&cfg, &out)
        }
        Command::Pareto { input } => {
            println!("scenario,pipeline,accuracy,sp");
            for scenario in summary_scenarios(&input)? {
                let aggregates = read_summary(&input.join(format!("summary_{scenario}.csv")))?;
                for p in pareto_frontier(&pareto_points(&aggregates)) {
                    println!("{scenario},{},{},{}", p.pipeline, p.accuracy, p.sp);
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
