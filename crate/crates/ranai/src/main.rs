use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ranai::bridge::{RemoteAgent, DEFAULT_TIMEOUT};
use ranai::config::{PolicySpec, RunConfig};
use ranai::figdata::FigureData;
use ranai::output::MODEL_FILE;
use ranai::runner;

#[derive(Parser)]
#[command(name = "ranai", version, about = "RAN-AI teleoperated-driving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides the configured policy (`dql` or `constant:<mode>`).
    #[arg(long)]
    policy: Option<PolicySpec>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one simulation and writes its artifacts.
    Run {
        #[command(flatten)]
        opts: RunOpts,
        /// Use an external agent at host:port instead of the built-in one.
        #[arg(long)]
        agent_endpoint: Option<String>,
        /// Seconds to wait for each external agent reply.
        #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs())]
        agent_timeout: u64,
    },
    /// Trains for several episodes, evaluates greedily and saves the model.
    Train {
        #[command(flatten)]
        opts: RunOpts,
        /// Overrides `agent.episodes`.
        #[arg(long)]
        episodes: Option<u32>,
        /// Model output path (default: <out>/model.bin).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluates a saved model greedily.
    Eval {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        model: PathBuf,
    },
    /// Collects delay and PRR rows from run directories into long-format CSVs.
    Figdata {
        /// Directory for delay.csv and prr.csv.
        #[arg(short, long)]
        out: PathBuf,
        /// Run output directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Checks a configuration and reports every problem found.
    ValidateConfig {
        #[arg(short, long)]
        config: PathBuf,
    },
}

fn load(opts: &RunOpts) -> anyhow::Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&opts.config)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(p) = &opts.policy {
        cfg.policy = p.clone();
    }
    if let Some(o) = &opts.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn report(dir: &Path, a: &ranai::RunArtifacts) {
    let p = &a.summary.pooled;
    let fmt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.3}"));
    println!(
        "{} N_u={} {}: mean QoE {}, median delay {} ms, mean delay {} ms, mean PRR {} -> {}",
        a.summary.policy,
        a.summary.n_ues,
        a.summary.mechanism,
        fmt(p.mean_qoe),
        fmt(p.delay_ms.p50),
        fmt(p.delay_ms.mean),
        fmt(p.mean_prr),
        dir.display()
    );
}

fn main_inner(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            opts,
            agent_endpoint,
            agent_timeout,
        } => {
            let (cfg, out) = load(&opts)?;
            let artifacts = match (&cfg.policy, agent_endpoint) {
                (PolicySpec::Dql, Some(addr)) => {
                    let timeout = std::time::Duration::from_secs(agent_timeout);
                    let run_id = format!("seed-{}", cfg.seed);
                    let mut remote = RemoteAgent::connect_tcp(addr.as_str(), &run_id, timeout)
                        .with_context(|| format!("connecting to agent at {addr}"))?;
                    let a = runner::run_with_agent(&cfg, Some(&mut remote))?;
                    remote.shutdown()?;
                    a
                }
                _ => runner::run(&cfg)?,
            };
            artifacts.write_to(&out)?;
            report(&out, &artifacts);
        }
        Command::Train { opts, episodes, model } => {
            let (cfg, out) = load(&opts)?;
            let episodes = episodes.unwrap_or(cfg.agent.episodes);
            let trained = runner::train_then_eval(&cfg, episodes)?;
            trained.artifacts.write_to(&out)?;
            let model = model.unwrap_or_else(|| out.join(MODEL_FILE));
            runner::save_model(&model, trained.agent.online())?;
            report(&out, &trained.artifacts);
            println!("model saved to {}", model.display());
        }
        Command::Eval { opts, model } => {
            let (cfg, out) = load(&opts)?;
            let net = runner::load_model(&model, &cfg)?;
            let artifacts = runner::evaluate(&cfg, net)?;
            artifacts.write_to(&out)?;
            report(&out, &artifacts);
        }
        Command::Figdata { out, runs } => {
            let mut data = FigureData::default();
            for dir in &runs {
                data.add_run_dir(dir).with_context(|| format!("reading run {}", dir.display()))?;
            }
            data.write_to(&out)?;
            println!(
                "{} delay rows, {} PRR rows -> {}",
                data.delay.len(),
                data.prr.len(),
                out.display()
            );
        }
        Command::ValidateConfig { config } => {
            let cfg = RunConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
