//! Run orchestration: single runs, train-then-evaluate and model files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};

use ranai_core::agent::{decode_model, encode_model, Agent, DoubleDqnAgent, LossReport, QNetwork};
use ranai_core::app::FrameSource;
use ranai_core::channel::ChannelTrace;
use ranai_core::scenario::{episode_seed, run_scenario, synthetic_channel, AgentMode, ScenarioConfig};

use crate::config::{AgentRunMode, ChannelSource, PolicySpec, RunConfig};
use crate::output::{summarize, RunArtifacts};
use crate::trace_csv::{parse_frame_trace, parse_trace};

pub fn frame_source(cfg: &RunConfig) -> anyhow::Result<FrameSource> {
    match &cfg.app.frame_trace {
        None => Ok(FrameSource::Distribution { jitter: cfg.app.jitter }),
        Some(path) => {
            let f = fs::File::open(path).with_context(|| format!("opening frame trace {}", path.display()))?;
            let t = parse_frame_trace(f, &cfg.app.modes, cfg.app.loop_mode)
                .with_context(|| format!("frame trace {}", path.display()))?;
            Ok(FrameSource::Trace(t))
        }
    }
}

/// Channel trace for a run with `seed`; synthetic channels depend on the seed.
pub fn channel(cfg: &RunConfig, seed: u64) -> anyhow::Result<ChannelTrace> {
    match &cfg.scenario.channel {
        ChannelSource::Synthetic(syn) => Ok(synthetic_channel(&cfg.ue_ids(), &syn.road, &syn.model, seed)?),
        ChannelSource::Trace(path) => {
            let f = fs::File::open(path).with_context(|| format!("opening channel trace {}", path.display()))?;
            parse_trace(f).with_context(|| format!("channel trace {}", path.display()))
        }
    }
}

/// Validated scenario and channel for `cfg`.
pub fn prepare(cfg: &RunConfig) -> anyhow::Result<(ScenarioConfig, ChannelTrace)> {
    cfg.validate()?;
    let sc = cfg.scenario(frame_source(cfg)?);
    let trace = channel(cfg, cfg.seed)?;
    Ok((sc, trace))
}

pub fn save_model(path: &Path, net: &QNetwork) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_model(net)).with_context(|| format!("writing model {}", path.display()))
}

pub fn load_model(path: &Path, cfg: &RunConfig) -> anyhow::Result<QNetwork> {
    let bytes = fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    let sizes = &cfg.agent.hyperparams.layer_sizes;
    let shape: Vec<(usize, usize)> = sizes.windows(2).map(|w| (w[0], w[1])).collect();
    decode_model(&bytes, Some(&shape)).with_context(|| format!("loading model {}", path.display()))
}

/// Agent for a DQL run: freshly initialized, or loaded from `agent.model_path`.
pub fn make_agent(cfg: &RunConfig) -> anyhow::Result<DoubleDqnAgent> {
    let hp = cfg.agent.hyperparams.clone();
    Ok(match &cfg.agent.model_path {
        Some(p) => DoubleDqnAgent::with_network(hp, load_model(p, cfg)?, cfg.seed),
        None => DoubleDqnAgent::new(hp, cfg.seed),
    })
}

fn artifacts(
    cfg: &RunConfig,
    sc: ScenarioConfig,
    trace: &ChannelTrace,
    agent: Option<&mut dyn Agent>,
    mut training: Vec<LossReport>,
) -> anyhow::Result<RunArtifacts> {
    let output = run_scenario(&sc, trace, agent)?;
    training.extend_from_slice(&output.training);
    let summary = summarize(cfg, &sc, &output, &training);
    Ok(RunArtifacts {
        scenario: sc,
        output,
        training,
        summary,
    })
}

/// Runs `cfg` once with the given agent (ignored for constant policies).
pub fn run_with_agent(cfg: &RunConfig, agent: Option<&mut dyn Agent>) -> anyhow::Result<RunArtifacts> {
    let (sc, trace) = prepare(cfg)?;
    artifacts(cfg, sc, &trace, agent, Vec::new())
}

/// Runs `cfg` once. DQL runs use [`make_agent`] in the configured agent mode.
pub fn run(cfg: &RunConfig) -> anyhow::Result<RunArtifacts> {
    match cfg.policy {
        PolicySpec::Constant(_) => run_with_agent(cfg, None),
        PolicySpec::Dql => {
            let mut agent = make_agent(cfg)?;
            run_with_agent(cfg, Some(&mut agent))
        }
    }
}

pub struct Trained {
    pub agent: DoubleDqnAgent,
    /// Greedy evaluation run; its training log covers every episode.
    pub artifacts: RunArtifacts,
}

/// Trains for `episodes` episodes with persistent agent state, then evaluates
/// greedily on the config seed.
pub fn train_then_eval(cfg: &RunConfig, episodes: u32) -> anyhow::Result<Trained> {
    if cfg.policy != PolicySpec::Dql {
        bail!("train needs policy dql, got {}", cfg.policy);
    }
    cfg.validate()?;
    let mut agent = make_agent(cfg)?;
    let mut sc = cfg.scenario(frame_source(cfg)?);
    let synthetic = matches!(cfg.scenario.channel, ChannelSource::Synthetic(_));
    let fixed = if synthetic { None } else { Some(channel(cfg, cfg.seed)?) };
    let mut training = Vec::new();
    sc.agent_mode = AgentMode::Train;
    for ep in 0..episodes {
        sc.seed = episode_seed(cfg.seed, ep as u64);
        let trace = match &fixed {
            Some(t) => t.clone(),
            None => channel(cfg, sc.seed)?,
        };
        let out = run_scenario(&sc, &trace, Some(&mut agent)).with_context(|| format!("training episode {ep}"))?;
        training.extend(out.training);
    }
    let mut eval_cfg = cfg.clone();
    eval_cfg.agent.mode = AgentRunMode::Evaluate;
    sc.seed = cfg.seed;
    sc.agent_mode = AgentMode::Evaluate;
    let trace = match fixed {
        Some(t) => t,
        None => channel(cfg, cfg.seed)?,
    };
    let artifacts = artifacts(&eval_cfg, sc, &trace, Some(&mut agent), training)?;
    Ok(Trained { agent, artifacts })
}

/// Greedy evaluation of `net` on `cfg`.
pub fn evaluate(cfg: &RunConfig, net: QNetwork) -> anyhow::Result<RunArtifacts> {
    let mut cfg = cfg.clone();
    cfg.policy = PolicySpec::Dql;
    cfg.agent.mode = AgentRunMode::Evaluate;
    let mut agent = DoubleDqnAgent::with_network(cfg.agent.hyperparams.clone(), net, cfg.seed);
    run_with_agent(&cfg, Some(&mut agent))
}
