use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use reward_align::alignment::{compare, replay, run_all, seed_dirs, RunConfig, Termination};
use reward_align::envs::make_env;
use reward_align::oracle::{Backend, PromptTemplates};
use reward_align::specgen::{parse_proposal, render_proposal_prompt};
use reward_align::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "reward-align",
    version,
    about = "Align parametric rewards with ranking feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OracleArg {
    Scripted,
    Llm,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the alignment loop for every seed of a config.
    Run {
        /// TOML run config; without it, --env picks an environment with defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds, e.g. 1,2,3
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long, value_enum)]
        oracle: Option<OracleArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        env: Option<String>,
        /// Condition label written into the run config.
        #[arg(long)]
        label: Option<String>,
    },
    /// Recompute logged metrics from trajectories and parameters.
    Replay {
        /// Run directories, or experiment directories holding seed-* runs.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Merge success-rate curves of several runs into one CSV.
    Compare {
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "compare.csv")]
        out: PathBuf,
    },
    /// Print the reward-proposal prompt for an environment.
    Propose {
        #[arg(long)]
        env: String,
        #[arg(long)]
        task: Option<String>,
    },
    /// Validate a proposal reply and print the resulting spec.
    CheckProposal {
        reply: PathBuf,
        /// Also require every feature to exist in this environment.
        #[arg(long)]
        env: Option<String>,
    },
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<Error>(),
            Some(
                Error::Config(_)
                    | Error::UnknownEnv(_)
                    | Error::InvalidSpec(_)
                    | Error::Validation(_)
                    | Error::TomlDe(_)
                    | Error::ParamMismatch(_)
                    | Error::OutOfDomain { .. }
            )
        )
    })
}

fn load_config(
    config: Option<PathBuf>,
    seed: Vec<u64>,
    oracle: Option<OracleArg>,
    out: Option<PathBuf>,
    max_iters: Option<usize>,
    env: Option<String>,
    label: Option<String>,
) -> anyhow::Result<RunConfig> {
    let mut cfg = match (&config, &env) {
        (Some(path), _) => {
            RunConfig::load(path).with_context(|| format!("loading config `{}`", path.display()))?
        }
        (None, Some(env)) => RunConfig::new(env),
        (None, None) => {
            return Err(Error::Config("either --config or --env is required".into()).into())
        }
    };
    if let (Some(_), Some(env)) = (&config, env) {
        cfg.env = env;
    }
    if !seed.is_empty() {
        cfg.seeds = seed;
    }
    if let Some(o) = oracle {
        cfg.alignment.oracle.backend = match o {
            OracleArg::Scripted => Backend::Scripted,
            OracleArg::Llm => Backend::LlmHttp,
        };
    }
    if let Some(out) = out {
        cfg.out = out;
    }
    if let Some(n) = max_iters {
        cfg.alignment.max_iterations = n;
    }
    if let Some(l) = label {
        cfg.label = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run {
            config,
            seed,
            oracle,
            out,
            max_iters,
            env,
            label,
        } => {
            let cfg = load_config(config, seed, oracle, out, max_iters, env, label)?;
            let summaries = run_all(&cfg)?;
            for s in &summaries {
                match (&s.termination, &s.error) {
                    (Termination::Failed, Some(e)) => eprintln!("seed {}: failed: {e}", s.seed),
                    _ => println!(
                        "seed {}: {} iterations, success {:.2} -> {:.2} ({:?})",
                        s.seed,
                        s.iterations,
                        s.initial_success_rate,
                        s.final_success_rate,
                        s.termination
                    ),
                }
            }
            println!("runs written to {}", cfg.out.display());
            Ok(0)
        }
        Command::Replay { dirs } => {
            let mut bad = 0;
            for dir in &dirs {
                for run in seed_dirs(dir)? {
                    let report = replay(&run)?;
                    if report.is_ok() {
                        println!(
                            "{}: ok ({} iterations, {} checks)",
                            run.display(),
                            report.iterations,
                            report.checks
                        );
                    } else {
                        bad += 1;
                        for p in &report.problems {
                            eprintln!("{}: {p}", run.display());
                        }
                    }
                }
            }
            Ok(if bad == 0 { 0 } else { EXIT_RUNTIME })
        }
        Command::Compare { dirs, out } => {
            let n = compare(&dirs, &out)?;
            println!("wrote {n} rows to {}", out.display());
            Ok(0)
        }
        Command::Propose { env, task } => {
            let env = make_env(&env)?;
            let task = task.as_deref().unwrap_or(env.spec().task_description);
            print!(
                "{}",
                render_proposal_prompt(&PromptTemplates::default(), env.spec(), task)?
            );
            println!();
            Ok(0)
        }
        Command::CheckProposal { reply, env } => {
            let text = std::fs::read_to_string(&reply)
                .with_context(|| format!("reading `{}`", reply.display()))?;
            let schema = match env {
                Some(name) => Some(make_env(&name)?.spec().features.to_vec()),
                None => None,
            };
            let spec = parse_proposal(&text, schema.as_deref())?;
            print!("{}", spec.to_toml_string()?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
