//! JSON run configuration, validation and resolution into a scenario.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use ranai_core::agent::{AgentHyperparams, RewardConfig, STATE_DIM};
use ranai_core::app::{CbrConfig, FrameSource, LoopMode, ModeId, ModeTable};
use ranai_core::channel::{LinkBudgetConfig, NodeId, SynthChannelConfig};
use ranai_core::controller::{ControllerConfig, NotificationMechanism};
use ranai_core::ran::TtiConfig;
use ranai_core::scenario::{AgentMode, Policy, RoadConfig, ScenarioConfig};
use ranai_core::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub ran: RanSection,
    pub app: AppSection,
    pub controller: ControllerSection,
    pub agent: AgentSection,
    /// `dql` or `constant:<mode name>`.
    pub policy: PolicySpec,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioSection::default(),
            ran: RanSection::default(),
            app: AppSection::default(),
            controller: ControllerSection::default(),
            agent: AgentSection::default(),
            policy: PolicySpec::Dql,
            seed: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_ues: usize,
    pub duration_s: f64,
    pub gnb_id: NodeId,
    /// Channel ids of the vehicles; defaults to `1..=n_ues`.
    pub ue_ids: Option<Vec<NodeId>>,
    pub channel: ChannelSource,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            n_ues: 1,
            duration_s: 80.0,
            gnb_id: 0,
            ue_ids: None,
            channel: ChannelSource::Synthetic(SyntheticChannel::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSource {
    Synthetic(SyntheticChannel),
    /// Trace CSV; relative paths resolve against the config file.
    Trace(PathBuf),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticChannel {
    pub model: SynthChannelConfig,
    pub road: RoadConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RanSection {
    pub link_budget: LinkBudgetConfig,
    pub tti_ms: f64,
    pub mac_efficiency: f64,
    pub se_max: f64,
    pub snr_outage_db: f64,
    pub rlc_capacity_bytes: u64,
    pub dl_capacity_bytes: u64,
    /// Write the per-TTI debug log.
    pub tti_log: bool,
}

impl Default for RanSection {
    fn default() -> Self {
        let tti = TtiConfig::default();
        RanSection {
            link_budget: LinkBudgetConfig::default(),
            tti_ms: tti.tti.as_millis_f64(),
            mac_efficiency: tti.mac_efficiency,
            se_max: tti.se_max,
            snr_outage_db: tti.snr_outage_db,
            rlc_capacity_bytes: 3_000_000,
            dl_capacity_bytes: 3_000_000,
            tti_log: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppSection {
    pub enabled: bool,
    pub modes: ModeTable,
    pub frame_period_ms: f64,
    pub mtu_payload: u32,
    /// Relative uniform jitter around each mode's mean frame size.
    pub jitter: f64,
    /// Frame-size trace CSV; overrides the mean sizes when set.
    pub frame_trace: Option<PathBuf>,
    pub loop_mode: LoopMode,
    pub initial_mode: String,
    pub cbr: CbrSection,
}

impl Default for AppSection {
    fn default() -> Self {
        AppSection {
            enabled: true,
            modes: ModeTable::default(),
            frame_period_ms: 100.0,
            mtu_payload: 1460,
            jitter: 0.1,
            frame_trace: None,
            loop_mode: LoopMode::RestartAtEnd,
            initial_mode: "C-R".into(),
            cbr: CbrSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbrSection {
    pub enabled: bool,
    pub packet_bytes: u32,
    pub interval_ms: f64,
}

impl Default for CbrSection {
    fn default() -> Self {
        let c = CbrConfig::default();
        CbrSection {
            enabled: c.enabled,
            packet_bytes: c.packet_bytes,
            interval_ms: c.interval.as_millis_f64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub period_ms: f64,
    pub mechanism: NotificationMechanism,
    pub notification_loss_prob: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        ControllerSection {
            period_ms: c.period.as_millis_f64(),
            mechanism: c.mechanism,
            notification_loss_prob: c.notification_loss_prob,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRunMode {
    #[default]
    Train,
    Evaluate,
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub hyperparams: AgentHyperparams,
    pub reward: RewardConfig,
    pub mode: AgentRunMode,
    /// Training episodes used by `train`.
    pub episodes: u32,
    /// Model to load before running.
    pub model_path: Option<PathBuf>,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            hyperparams: AgentHyperparams::default(),
            reward: RewardConfig::default(),
            mode: AgentRunMode::Train,
            episodes: 50,
            model_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicySpec {
    Dql,
    Constant(String),
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Dql => f.write_str("dql"),
            PolicySpec::Constant(m) => write!(f, "constant:{m}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "dql" => Ok(PolicySpec::Dql),
            Some(("constant", mode)) if !mode.is_empty() => Ok(PolicySpec::Constant(mode.to_string())),
            _ => Err(format!("policy must be `dql` or `constant:<mode>`, got `{s}`")),
        }
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every problem found in a config, reported together.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
pub struct ValidationErrors(pub Vec<String>);

fn ms(v: f64) -> SimTime {
    SimTime::from_secs_f64(v / 1e3)
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads a config file; relative trace paths are made relative to its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ChannelSource::Trace(p) = &mut cfg.scenario.channel {
            rebase(p);
        }
        if let Some(p) = &mut cfg.app.frame_trace {
            rebase(p);
        }
        if let Some(p) = &mut cfg.agent.model_path {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn ue_ids(&self) -> Vec<NodeId> {
        match &self.scenario.ue_ids {
            Some(ids) => ids.clone(),
            None => (1..=self.scenario.n_ues as NodeId).collect(),
        }
    }

    pub fn mode_id(&self, name: &str) -> Option<ModeId> {
        self.app.modes.by_name(name)
    }

    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut e = Vec::new();
        macro_rules! check {
            ($ok:expr, $msg:expr $(,)?) => {
                if !$ok {
                    e.push($msg.to_string());
                }
            };
        }
        let s = &self.scenario;
        check!(s.n_ues >= 1, "scenario.n_ues must be at least 1");
        check!(s.duration_s.is_finite() && s.duration_s > 0.0, "scenario.duration_s must be positive");
        if let Some(ids) = &s.ue_ids {
            check!(ids.len() == s.n_ues, "scenario.ue_ids must list exactly n_ues ids");
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            check!(sorted.len() == ids.len(), "scenario.ue_ids must be distinct");
            check!(!ids.contains(&s.gnb_id), "scenario.ue_ids must not contain the gNB id");
        }
        if let ChannelSource::Synthetic(syn) = &s.channel {
            let m = &syn.model;
            check!(m.time_step_s > 0.0, "synthetic channel time_step_s must be positive");
            check!(m.d0_m > 0.0, "synthetic channel d0_m must be positive");
            check!(m.shadowing_sigma_db >= 0.0, "synthetic channel shadowing_sigma_db must be non-negative");
            check!(
                (0.0..=1.0).contains(&m.shadowing_correlation),
                "synthetic channel shadowing_correlation must be in [0, 1]",
            );
            check!(m.duration_s >= s.duration_s, "synthetic channel duration_s must cover scenario.duration_s");
            check!(m.gnb_id == s.gnb_id, "synthetic channel gnb_id must equal scenario.gnb_id");
        }

        let r = &self.ran;
        check!(r.link_budget.tx_power_dbm.is_finite(), "ran.link_budget.tx_power_dbm must be finite");
        check!(r.link_budget.bandwidth_hz > 0.0, "ran.link_budget.bandwidth_hz must be positive");
        check!(r.link_budget.noise_figure_db.is_finite(), "ran.link_budget.noise_figure_db must be finite");
        check!(r.tti_ms > 0.0 && ms(r.tti_ms) > SimTime::ZERO, "ran.tti_ms must be positive");
        check!(
            r.mac_efficiency > 0.0 && r.mac_efficiency <= 1.0,
            "ran.mac_efficiency must be in (0, 1]",
        );
        check!(r.se_max > 0.0, "ran.se_max must be positive");
        check!(r.rlc_capacity_bytes > 0, "ran.rlc_capacity_bytes must be positive");
        check!(r.dl_capacity_bytes > 0, "ran.dl_capacity_bytes must be positive");

        let a = &self.app;
        let n_modes = a.modes.len();
        check!(n_modes >= 1 && n_modes <= 255, "app.modes must hold between 1 and 255 modes");
        let mut names: Vec<&str> = a.modes.modes.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        check!(names.len() == n_modes, "app.modes names must be distinct");
        let cd_max = self.agent.reward.cd_max;
        for m in &a.modes.modes {
            if !(0.0..=cd_max).contains(&m.chamfer_distance) {
                e.push(format!("app.modes {}: chamfer_distance must be in [0, cd_max]", m.name));
            }
            if m.mean_frame_bytes == 0 {
                e.push(format!("app.modes {}: mean_frame_bytes must be positive", m.name));
            }
        }
        check!(a.frame_period_ms > 0.0, "app.frame_period_ms must be positive");
        check!(a.mtu_payload > 0, "app.mtu_payload must be positive");
        check!((0.0..1.0).contains(&a.jitter), "app.jitter must be in [0, 1)");
        if self.mode_id(&a.initial_mode).is_none() {
            e.push(format!("app.initial_mode `{}` is not in app.modes", a.initial_mode));
        }
        if a.cbr.enabled {
            check!(a.cbr.packet_bytes > 0, "app.cbr.packet_bytes must be positive");
            check!(a.cbr.interval_ms > 0.0, "app.cbr.interval_ms must be positive");
        }

        let c = &self.controller;
        check!(c.period_ms > 0.0, "controller.period_ms must be positive");
        check!(
            (0.0..=1.0).contains(&c.notification_loss_prob),
            "controller.notification_loss_prob must be in [0, 1]",
        );
        if c.period_ms > 0.0 && s.duration_s > 0.0 {
            let period = ms(c.period_ms).as_micros();
            let dur = SimTime::from_secs_f64(s.duration_s).as_micros();
            check!(period > 0 && dur % period == 0, "scenario.duration_s must be a multiple of controller.period_ms");
        }

        let g = &self.agent;
        let rw = &g.reward;
        check!((0.0..=1.0).contains(&rw.alpha), "agent.reward.alpha must be in [0, 1]");
        check!(rw.delta_max > 0.0, "agent.reward.delta_max must be positive");
        check!(rw.cd_max > 0.0, "agent.reward.cd_max must be positive");
        check!((0.0..=1.0).contains(&rw.prr_min), "agent.reward.prr_min must be in [0, 1]");
        let hp = &g.hyperparams;
        check!((0.0..1.0).contains(&hp.discount), "agent.hyperparams.discount must be in [0, 1)");
        check!(hp.learning_rate > 0.0, "agent.hyperparams.learning_rate must be positive");
        check!(hp.weight_decay >= 0.0, "agent.hyperparams.weight_decay must be non-negative");
        check!(hp.batch_size >= 1, "agent.hyperparams.batch_size must be at least 1");
        check!(
            hp.replay_capacity >= hp.batch_size,
            "agent.hyperparams.replay_capacity must be at least batch_size",
        );
        check!(hp.target_sync_period >= 1, "agent.hyperparams.target_sync_period must be at least 1");
        check!(
            (0.0..=1.0).contains(&hp.epsilon_start) && (0.0..=1.0).contains(&hp.epsilon_end),
            "agent.hyperparams epsilon bounds must be in [0, 1]",
        );
        check!(hp.layer_sizes.len() >= 2, "agent.hyperparams.layer_sizes needs at least two entries");
        check!(hp.layer_sizes.iter().all(|&w| w > 0), "agent.hyperparams.layer_sizes must be positive");
        check!(
            hp.layer_sizes.first() == Some(&STATE_DIM),
            "agent.hyperparams.layer_sizes must start with the state width 8",
        );
        if hp.layer_sizes.last() != Some(&n_modes) {
            e.push(format!(
                "agent.hyperparams.layer_sizes must end with the number of modes ({n_modes})"
            ));
        }

        match &self.policy {
            PolicySpec::Dql => check!(g.mode != AgentRunMode::Off, "policy dql needs agent.mode train or evaluate"),
            PolicySpec::Constant(m) => {
                if self.mode_id(m).is_none() {
                    e.push(format!("policy mode `{m}` is not in app.modes"));
                }
            }
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(e))
        }
    }

    /// Core scenario for this config. The frame source must be supplied
    /// separately when a frame trace is configured.
    pub fn scenario(&self, frame_source: FrameSource) -> ScenarioConfig {
        let policy = match &self.policy {
            PolicySpec::Dql => Policy::Dql,
            PolicySpec::Constant(m) => Policy::Constant(self.mode_id(m).expect("validated")),
        };
        let ue_ids = self.ue_ids();
        ScenarioConfig {
            n_ues: self.scenario.n_ues,
            duration: SimTime::from_secs_f64(self.scenario.duration_s),
            gnb_id: self.scenario.gnb_id,
            ue_ids,
            link_budget: self.ran.link_budget,
            tti: TtiConfig {
                tti: ms(self.ran.tti_ms),
                mac_efficiency: self.ran.mac_efficiency,
                se_max: self.ran.se_max,
                snr_outage_db: self.ran.snr_outage_db,
            },
            rlc_capacity_bytes: self.ran.rlc_capacity_bytes,
            dl_capacity_bytes: self.ran.dl_capacity_bytes,
            modes: self.app.modes.clone(),
            app_enabled: self.app.enabled,
            frame_source,
            frame_period: ms(self.app.frame_period_ms),
            mtu_payload: self.app.mtu_payload,
            initial_mode: self.mode_id(&self.app.initial_mode).expect("validated"),
            cbr: CbrConfig {
                enabled: self.app.cbr.enabled,
                packet_bytes: self.app.cbr.packet_bytes,
                interval: ms(self.app.cbr.interval_ms),
            },
            controller: ControllerConfig {
                period: ms(self.controller.period_ms),
                mechanism: self.controller.mechanism,
                notification_loss_prob: self.controller.notification_loss_prob,
            },
            reward: self.agent.reward,
            policy,
            agent_mode: match self.agent.mode {
                AgentRunMode::Evaluate => AgentMode::Evaluate,
                _ => AgentMode::Train,
            },
            record_tti_log: self.ran.tti_log,
            seed: self.seed,
        }
    }
}
