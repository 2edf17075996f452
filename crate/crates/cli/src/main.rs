use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptest::affs::{Goal, StrategySpec};
use adaptest::engine::{run_search, Budget, EngineConfig};
use adaptest::harness::{report, run_experiment, ExperimentConfig, HarnessError};
use adaptest::minilang::parse_named;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptest", version, about = "Search-based unit test generation for MiniJ programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolves a test suite for one program and writes the search result as JSON.
    Generate {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        goal: Goal,
        /// ucb, sarsa, static:<FUNCTION>, default or random
        #[arg(long)]
        strategy: StrategySpec,
        #[arg(long, default_value_t = 100)]
        budget_gens: u64,
        #[arg(long)]
        budget_seconds: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every (fault, strategy, trial) of an experiment configuration.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the summary tables of an experiment directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

enum Failure {
    Config(String),
    Corpus(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Corpus(_) => Failure::Corpus(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn generate(
    program: &Path,
    goal: Goal,
    strategy: StrategySpec,
    budget: Budget,
    seed: u64,
    population: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let source = fs::read_to_string(program).map_err(|e| Failure::Corpus(format!("{}: {e}", program.display())))?;
    let parsed = parse_named(&source, &program.display().to_string()).map_err(|e| Failure::Corpus(e.to_string()))?;
    let mut config = EngineConfig {
        budget,
        rng_seed: seed,
        ..EngineConfig::default()
    };
    if let Some(n) = population {
        config.population_size = n;
    }
    let result = run_search(&parsed, goal, strategy, &config).map_err(|e| Failure::Config(e.to_string()))?;
    fs::write(out, result.to_json() + "\n").map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
    let m = &result.metrics;
    println!(
        "{} generations, {} tests, {} exceptions, diversity fitness {:.4}{}",
        result.generations,
        m.suite_size,
        m.unique_exceptions,
        m.diversity_fitness,
        m.strong_mutation_score
            .map(|s| format!(", strong mutation score {s:.1}%"))
            .unwrap_or_default()
    );
    Ok(())
}

fn experiment(config: &Path, out: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(config).map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
    // Relative paths in the configuration are relative to the file itself.
    let base = config.parent().unwrap_or(Path::new("."));
    if cfg.corpus.is_relative() {
        cfg.corpus = base.join(&cfg.corpus);
    }
    if let Some(pin) = cfg.action_space_pin.as_mut().filter(|p| p.is_relative()) {
        *pin = base.join(&*pin);
    }
    let written = run_experiment(&cfg, out)?;
    println!(
        "{} trials written to {}",
        written.records.len(),
        written.trials.display()
    );
    print!("{}", report(out)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes are configuration errors; help and version are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate {
            program,
            goal,
            strategy,
            budget_gens,
            budget_seconds,
            seed,
            population,
            out,
        } => {
            let budget = Budget {
                generations: Some(budget_gens),
                seconds: budget_seconds,
            };
            generate(&program, goal, strategy, budget, seed, population, &out)
        }
        Command::Experiment { config, out } => experiment(&config, &out),
        Command::Report { input } => report(&input).map(|r| print!("{r}")).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Corpus(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
