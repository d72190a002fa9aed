use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entangled::numerics::parse_rational;
use entangled::workbench::{
    self, generate, parse_suites, EngineChoice, GenerateOptions, Profile, Report, RunOptions, Scenario, Suite,
    WorkbenchError,
};

#[derive(Parser)]
#[command(name = "entangled", version, about = "Exact dyadic lab for entangled multilinear forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario: schema, dimensions, hypergraph, kernel, weights.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run suites on a scenario and write the report.
    Run(RunArgs),
    /// Write a seeded random scenario.
    Generate(GenArgs),
    /// Time the evaluation engines on a scenario or a generated instance.
    Bench {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class sizes of the generated instance.
        #[arg(long, default_value = "2,2")]
        sizes: String,
        #[arg(long, default_value_t = 0)]
        top: i32,
        #[arg(long, default_value_t = 3)]
        fine: i32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated: validate, decompose, identities, t1, sparse, weighted, bench.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Enclosure width, e.g. `1/1000000`.
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["naive", "factorized", "both"])]
    engine: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// random-kernel-via-coefficients, random-tuple, spike, or constant.
    #[arg(long, default_value = "random-tuple")]
    profile: String,
    #[arg(long, default_value = "2,2")]
    sizes: String,
    #[arg(long, default_value_t = 0)]
    top: i32,
    #[arg(long, default_value_t = 2)]
    fine: i32,
    /// Drop each edge with probability 1/2 instead of using the complete hypergraph.
    #[arg(long)]
    partial: bool,
    /// Cap on |lambda| for random kernels.
    #[arg(long, default_value = "1")]
    lambda_cap: String,
    #[arg(long)]
    suite: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Checks(Box<Report>),
    Error(WorkbenchError),
    Io(String),
}

impl From<WorkbenchError> for Failure {
    fn from(e: WorkbenchError) -> Self {
        Failure::Error(e)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(Scenario::from_json(&text)?)
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Error(WorkbenchError::Usage(format!("bad class sizes {s:?}"))))
}

fn rational(s: &str, what: &str) -> Result<entangled::Rational, Failure> {
    parse_rational(s).map_err(|_| Failure::Error(WorkbenchError::Usage(format!("bad {what} {s:?}"))))
}

/// Writes `report.json`, `constants.csv` and `certificates.csv` to `out`, or JSON to stdout.
fn emit(report: Report, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        None => print!("{}", report.to_json()),
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let files = [
                ("report.json", report.to_json()),
                ("constants.csv", report.constants_csv()?),
                ("certificates.csv", report.certificates_csv()?),
            ];
            for (name, body) in files {
                let p = dir.join(name);
                fs::write(&p, body).map_err(|e| io_err(&p, e))?;
            }
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Checks(Box::new(report)))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { scenario, out } => {
            let s = load(&scenario)?;
            emit(workbench::validate(&s)?, out.as_deref())
        }
        Command::Run(a) => {
            let s = load(&a.scenario)?;
            let opts = RunOptions {
                suites: a.suite.as_deref().map(parse_suites).transpose()?,
                seed: a.seed,
                width: a.width.as_deref().map(|w| rational(w, "width")).transpose()?,
                engine: a.engine.as_deref().map(str::parse::<EngineChoice>).transpose()?,
            };
            emit(workbench::run(&s, &opts)?, a.out.as_deref())
        }
        Command::Generate(a) => {
            let profile: Profile = a.profile.parse()?;
            let mut opts = GenerateOptions {
                sizes: parse_sizes(&a.sizes)?,
                top: a.top,
                fine: a.fine,
                complete: !a.partial,
                lambda_cap: rational(&a.lambda_cap, "lambda cap")?,
                ..GenerateOptions::default()
            };
            if let Some(s) = &a.suite {
                opts.suites = parse_suites(s)?;
            }
            let text = generate(a.seed, profile, &opts)?.to_json();
            match &a.out {
                None => print!("{text}"),
                Some(p) => fs::write(p, text).map_err(|e| io_err(p, e))?,
            }
            Ok(())
        }
        Command::Bench {
            scenario,
            seed,
            sizes,
            top,
            fine,
            out,
        } => {
            let s = match scenario {
                Some(p) => load(&p)?,
                None => {
                    let opts = GenerateOptions {
                        sizes: parse_sizes(&sizes)?,
                        top,
                        fine,
                        ..GenerateOptions::default()
                    };
                    generate(seed, Profile::RandomTuple, &opts)?
                }
            };
            let opts = RunOptions {
                suites: Some(vec![Suite::Bench]),
                ..RunOptions::default()
            };
            let report = workbench::run(&s, &opts)?;
            for r in &report.runtimes {
                eprintln!("{:<18} {:>12.6} s", r.name, r.seconds);
            }
            emit(report, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(report)) => {
            eprintln!("{}", report.failure_summary());
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
