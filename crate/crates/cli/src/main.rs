mod error;
mod input;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use closedmtp::{check_consonance, run_closure, scheme_from_graph, simulate, Method, SimScenario};

use error::CliError;
use input::{parse, parse_graph, read_source, Overrides, ProblemFile, ScenarioFile};
use report::Format;

/// Weighted parametric multiple testing under the closure principle.
#[derive(Parser)]
#[command(name = "closedmtp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test every intersection hypothesis and report adjusted p-values.
    Analyze {
        /// Problem file, or `-` for standard input.
        file: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// Print the weighting scheme a graph generates.
    Weights {
        /// Graph file, or `-` for standard input.
        file: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Check that local levels never shrink when hypotheses are removed.
    /// Exits with status 3 when violations are found.
    CheckConsonance {
        /// Problem file (p-values are not needed), or `-`.
        file: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// Estimate familywise error rate and power by simulation.
    Simulate {
        /// Scenario file, or `-` for standard input.
        file: String,
        #[command(flatten)]
        opts: Opts,
        /// Number of replications (overrides the file).
        #[arg(long)]
        replications: Option<usize>,
    },
}

#[derive(Args)]
struct Opts {
    /// Familywise significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// bonferroni, parametric-common, parametric-subsets or xie.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Seed for the randomized integration (default: $CLOSEDMTP_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Absolute error target for each normal probability.
    #[arg(long)]
    target_error: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

impl Opts {
    fn overrides(&self) -> Overrides {
        Overrides { alpha: self.alpha, method: self.method, seed: self.seed, target_error: self.target_error }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: closedmtp::Error| e.to_string())
}

/// Full output of a successful command and its exit status.
struct Outcome {
    text: String,
    code: ExitCode,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, code: ExitCode::SUCCESS }
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Analyze { file, opts } => {
            let problem = parse::<ProblemFile>(&read_source(&file)?)?.resolve(&opts.overrides())?;
            let test = problem.test_problem()?;
            let closure = run_closure(&test)?;
            let doc = report::analysis(&closure, &test.p, &problem.settings);
            Ok(Outcome::ok(report::render_analysis(&doc, opts.format)))
        }
        Command::Weights { file, format } => {
            let graph = parse_graph(&read_source(&file)?)?;
            let doc = report::scheme(&scheme_from_graph(&graph));
            Ok(Outcome::ok(report::render_scheme(&doc, format)))
        }
        Command::CheckConsonance { file, opts } => {
            let problem = parse::<ProblemFile>(&read_source(&file)?)?.resolve(&opts.overrides())?;
            let s = &problem.settings;
            let result = check_consonance(&problem.scheme, &problem.corr, s.alpha, s.method, s.seed, &s.precision)?;
            let doc = report::consonance(&result, problem.m, s);
            let code = if result.consonant { ExitCode::SUCCESS } else { ExitCode::from(3) };
            Ok(Outcome { text: report::render_consonance(&doc, opts.format), code })
        }
        Command::Simulate { file, opts, replications } => {
            let scenario = parse::<ScenarioFile>(&read_source(&file)?)?.resolve(&opts.overrides(), replications)?;
            let p = &scenario.problem;
            let s = &p.settings;
            let sim = SimScenario {
                scheme: p.scheme.clone(),
                corr: p.corr.clone(),
                alpha: s.alpha,
                method: s.method,
                generator: scenario.generator.clone(),
                mean_shifts: scenario.mean_shifts.clone(),
                replications: scenario.replications,
                master_seed: s.seed,
                precision: s.precision,
            };
            let result = simulate(&sim)?;
            let doc = report::simulation(&result, s);
            Ok(Outcome::ok(report::render_simulation(&doc, opts.format)))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            // written in one piece so a failure leaves no partial report
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(outcome.text.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("closedmtp: {e}");
            e.exit_code()
        }
    }
}
