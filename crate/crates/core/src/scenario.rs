//! One simulated run: wires the engine, channel, RAN, application, controller
//! and (optionally) an agent together and collects every per-run record.
//!
//! Event order at a shared timestamp is fixed by insertion order: status
//! update, frame generation, downlink commands, then the TTI. A TTI event at
//! `t` serves `[t, t + tti)` and stamps deliveries with `t + tti`, so a window
//! closed at `t` holds completions stamped in `(t - T, t]`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::agent::{compute_reward, Action, Agent, AgentError, LossReport, StateVector, Transition};
use crate::app::{AppSource, AppStatsWindow, BurstRecord, BurstSink, CbrConfig, FrameSource, ModeId, ModeTable, StatsCalculator};
use crate::channel::{
    straight_road, synthesize_trace, ChannelError, ChannelTrace, LinkBudgetConfig, NodeId, SynthChannelConfig, WaypointSet,
};
use crate::controller::{
    build_state, collect_cell_kpis, CellReport, ControllerConfig, FeatureInputs, FeatureScales, Notification,
    NotificationMechanism, NotificationOutcome, UeControl, NOTIFICATION_BYTES,
};
use crate::agent::RewardConfig;
use crate::engine::{Engine, RunReport};
use crate::ran::{downlink_outcome, Direction, EnqueueResult, FragmentTag, Packet, PacketKind, RanLink, TtiConfig, TtiOutcome, TtiRecord};
use crate::rng::{stream, RngStream, StreamId};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Modes chosen by the agent every controller period.
    Dql,
    /// Every UE keeps this mode for the whole run.
    Constant(ModeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentMode {
    /// Explore and learn.
    Train,
    /// Greedy actions, no learning.
    Evaluate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n_ues: usize,
    pub duration: SimTime,
    pub gnb_id: NodeId,
    /// Channel/node id of UE `i` is `ue_ids[i]`.
    pub ue_ids: Vec<NodeId>,
    pub link_budget: LinkBudgetConfig,
    pub tti: TtiConfig,
    pub rlc_capacity_bytes: u64,
    pub dl_capacity_bytes: u64,
    pub modes: ModeTable,
    /// When false no frames are generated (downlink CBR still runs).
    pub app_enabled: bool,
    pub frame_source: FrameSource,
    pub frame_period: SimTime,
    pub mtu_payload: u32,
    pub initial_mode: ModeId,
    pub cbr: CbrConfig,
    pub controller: ControllerConfig,
    pub reward: RewardConfig,
    pub policy: Policy,
    pub agent_mode: AgentMode,
    pub record_tti_log: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::with_ues(1)
    }
}

impl ScenarioConfig {
    /// Default capacity-constrained scenario with `n_ues` vehicles (ids `1..=n_ues`).
    pub fn with_ues(n_ues: usize) -> Self {
        ScenarioConfig {
            n_ues,
            duration: SimTime::from_secs(80),
            gnb_id: 0,
            ue_ids: (1..=n_ues as NodeId).collect(),
            link_budget: LinkBudgetConfig::default(),
            tti: TtiConfig::default(),
            rlc_capacity_bytes: 3_000_000,
            dl_capacity_bytes: 3_000_000,
            modes: ModeTable::default(),
            app_enabled: true,
            frame_source: FrameSource::Distribution { jitter: 0.1 },
            frame_period: SimTime::from_millis(100),
            mtu_payload: 1460,
            initial_mode: ModeId(0),
            cbr: CbrConfig::default(),
            controller: ControllerConfig::default(),
            reward: RewardConfig::default(),
            policy: Policy::Dql,
            agent_mode: AgentMode::Train,
            record_tti_log: false,
            seed: 1,
        }
    }

    /// Largest frame the configured source can produce.
    pub fn max_frame_bytes(&self) -> u64 {
        match &self.frame_source {
            FrameSource::Distribution { jitter } => self
                .modes
                .modes
                .iter()
                .map(|m| libm::round(m.mean_frame_bytes as f64 * (1.0 + jitter)) as u64)
                .max()
                .unwrap_or(1),
            FrameSource::Trace(t) => t.rows().map(|(_, _, s)| s).max().unwrap_or(1),
        }
    }
}

/// Mobility of the default scenario: a straight road 40 m from the gNB,
/// vehicles 15 m apart at 12 m/s, passing the gNB half-way through the run.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RoadConfig {
    pub start_x_m: f64,
    pub lane_offset_m: f64,
    pub speed_mps: f64,
    pub spacing_m: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        RoadConfig {
            start_x_m: -480.0,
            lane_offset_m: 40.0,
            speed_mps: 12.0,
            spacing_m: 15.0,
        }
    }
}

/// Synthesizes the uplink trace for `ue_ids` driving along `road`.
pub fn synthetic_channel(
    ue_ids: &[NodeId],
    road: &RoadConfig,
    model: &SynthChannelConfig,
    seed: u64,
) -> Result<ChannelTrace, ChannelError> {
    let mut mobility = WaypointSet::default();
    for (i, &id) in ue_ids.iter().enumerate() {
        let one = straight_road(
            1,
            id,
            road.start_x_m - road.spacing_m * i as f64,
            road.lane_offset_m,
            road.speed_mps,
            0.0,
            model.duration_s,
        );
        mobility.vehicles.extend(one.vehicles);
    }
    synthesize_trace(&mobility, model, &mut stream(seed, StreamId::Channel))
}

/// Seed of training episode `episode` derived from a run seed (SplitMix64 mix).
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    let mut z = seed ^ episode.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Per-UE, per-window application statistics with the derived quality terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowRecord {
    pub ue: usize,
    /// Mode that governed the window (the mode of its generated frame).
    pub mode: ModeId,
    pub stats: AppStatsWindow,
    pub qoe: f64,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerRecord {
    pub t: SimTime,
    pub ue: usize,
    pub state: StateVector,
    pub action: Option<Action>,
    /// Reward of the slot that just ended, when a transition was formed.
    pub reward: Option<f64>,
    pub notified: bool,
    pub outcome: NotificationOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotificationRecord {
    pub ue: usize,
    pub action: Action,
    pub issued_at: SimTime,
    pub mechanism: NotificationMechanism,
    pub outcome: NotificationOutcome,
}

impl NotificationRecord {
    /// Delay between issuing and applying; `None` unless the mode was applied.
    pub fn application_lag(&self) -> Option<SimTime> {
        match self.outcome {
            NotificationOutcome::Ideal => Some(SimTime::ZERO),
            NotificationOutcome::Delivered { at } => Some(at - self.issued_at),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ByteCounters {
    pub offered: u64,
    pub drained: u64,
    pub dropped: u64,
    pub buffered: u64,
}

#[derive(Clone, Debug, Default)]
pub struct ScenarioOutput {
    pub windows: Vec<WindowRecord>,
    pub controller_log: Vec<ControllerRecord>,
    /// Every generated burst; incomplete ones have no completion time.
    pub bursts: Vec<BurstRecord>,
    pub notifications: Vec<NotificationRecord>,
    pub cells: Vec<CellReport>,
    pub training: Vec<LossReport>,
    pub tti_log: Vec<TtiRecord>,
    pub status_updates: u64,
    pub action_batches: u64,
    pub transitions: Vec<u64>,
    pub uplink_bytes: Vec<ByteCounters>,
    pub downlink_bytes: Vec<ByteCounters>,
    pub fragments_dropped: Vec<u64>,
    pub fragment_bytes_delivered: Vec<u64>,
    pub report: Option<RunReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ev {
    StatusUpdate,
    Frame(usize),
    DlCommand(usize),
    Tti,
    Finish,
}

struct World<'a, 'g> {
    cfg: &'a ScenarioConfig,
    trace: &'a ChannelTrace,
    agent: Option<&'g mut dyn Agent>,
    ul: RanLink,
    dl: RanLink,
    apps: Vec<AppSource>,
    sink: BurstSink,
    stats: Vec<StatsCalculator>,
    control: Vec<UeControl>,
    window_mode: Vec<Option<ModeId>>,
    app_rng: RngStream,
    loss_rng: RngStream,
    next_packet: u64,
    next_burst: u64,
    scales: FeatureScales,
    dl_reciprocal: Vec<bool>,
    tti_out: TtiOutcome,
    out: ScenarioOutput,
    error: Option<ScenarioError>,
}

/// Runs one scenario. `agent` is required for [`Policy::Dql`] and ignored otherwise.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    trace: &ChannelTrace,
    agent: Option<&mut dyn Agent>,
) -> Result<ScenarioOutput, ScenarioError> {
    validate(cfg, trace)?;
    if cfg.policy == Policy::Dql && agent.is_none() {
        return Err(ScenarioError::Invalid("DQL policy needs an agent".into()));
    }
    let n = cfg.n_ues;
    let initial = match cfg.policy {
        Policy::Constant(m) => m,
        Policy::Dql => cfg.initial_mode,
    };
    let mut world = World {
        cfg,
        trace,
        agent: if cfg.policy == Policy::Dql { agent } else { None },
        ul: RanLink::new(Direction::Uplink, cfg.tti, cfg.link_budget, n, cfg.rlc_capacity_bytes),
        dl: RanLink::new(Direction::Downlink, cfg.tti, cfg.link_budget, n, cfg.dl_capacity_bytes),
        apps: (0..n).map(|i| AppSource::new(i, initial)).collect(),
        sink: BurstSink::new(),
        stats: (0..n).map(StatsCalculator::new).collect(),
        control: (0..n).map(|_| UeControl::new(initial)).collect(),
        window_mode: vec![None; n],
        app_rng: stream(cfg.seed, StreamId::App),
        loss_rng: stream(cfg.seed, StreamId::NotificationLoss),
        next_packet: 0,
        next_burst: 0,
        scales: FeatureScales {
            delta_max: cfg.reward.delta_max,
            n_modes: cfg.modes.len(),
            max_frame_bytes: cfg.max_frame_bytes(),
        },
        dl_reciprocal: cfg.ue_ids.iter().map(|&id| !trace.has_link(cfg.gnb_id, id)).collect(),
        tti_out: TtiOutcome::default(),
        out: ScenarioOutput {
            transitions: vec![0; n],
            fragments_dropped: vec![0; n],
            fragment_bytes_delivered: vec![0; n],
            ..Default::default()
        },
        error: None,
    };

    let mut engine: Engine<Ev> = Engine::new();
    let at0 = SimTime::ZERO;
    engine.schedule(at0, Ev::StatusUpdate).expect("t=0");
    if cfg.app_enabled {
        for ue in 0..n {
            engine.schedule(at0, Ev::Frame(ue)).expect("t=0");
        }
    }
    if cfg.cbr.enabled {
        for ue in 0..n {
            engine.schedule(at0, Ev::DlCommand(ue)).expect("t=0");
        }
    }
    engine.schedule(at0, Ev::Tti).expect("t=0");
    engine.schedule(cfg.duration, Ev::Finish).expect("end");

    let report = engine.run_until(cfg.duration, |eng, ev| {
        if world.error.is_some() {
            return;
        }
        let now = ev.fire_time;
        let next = |period: SimTime| Some(now + period).filter(|&t| t < cfg.duration);
        match ev.payload {
            Ev::StatusUpdate => {
                world.status_update(now, true);
                if let Some(t) = next(cfg.controller.period) {
                    eng.schedule(t, Ev::StatusUpdate).expect("future");
                }
            }
            Ev::Frame(ue) => {
                world.generate_frame(ue, now);
                if let Some(t) = next(cfg.frame_period) {
                    eng.schedule(t, Ev::Frame(ue)).expect("future");
                }
            }
            Ev::DlCommand(ue) => {
                world.downlink_command(ue, now);
                if let Some(t) = next(cfg.cbr.interval) {
                    eng.schedule(t, Ev::DlCommand(ue)).expect("future");
                }
            }
            Ev::Tti => {
                world.tti(now);
                if let Some(t) = next(cfg.tti.tti) {
                    eng.schedule(t, Ev::Tti).expect("future");
                }
            }
            Ev::Finish => world.status_update(now, false),
        }
    });
    if let Some(e) = world.error.take() {
        return Err(e);
    }
    let mut out = world.finish();
    out.report = Some(report);
    Ok(out)
}

fn validate(cfg: &ScenarioConfig, trace: &ChannelTrace) -> Result<(), ScenarioError> {
    let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
    if cfg.n_ues == 0 || cfg.ue_ids.len() != cfg.n_ues {
        return bad("need at least one UE and one id per UE");
    }
    if cfg.modes.is_empty() || cfg.modes.len() > u8::MAX as usize {
        return bad("mode table must hold between 1 and 255 modes");
    }
    if !cfg.modes.contains(cfg.initial_mode) {
        return bad("initial mode outside the mode table");
    }
    if let Policy::Constant(m) = cfg.policy {
        if !cfg.modes.contains(m) {
            return bad("constant mode outside the mode table");
        }
    }
    if cfg.tti.tti == SimTime::ZERO || cfg.frame_period == SimTime::ZERO || cfg.controller.period == SimTime::ZERO {
        return bad("TTI, frame period and controller period must be positive");
    }
    if cfg.cbr.enabled && cfg.cbr.interval == SimTime::ZERO {
        return bad("CBR interval must be positive");
    }
    if cfg.mtu_payload == 0 {
        return bad("MTU payload must be positive");
    }
    for &id in &cfg.ue_ids {
        if !trace.has_link(id, cfg.gnb_id) {
            return Err(ChannelError::UnknownLink { tx: id, rx: cfg.gnb_id }.into());
        }
    }
    Ok(())
}

impl World<'_, '_> {
    fn packet_id(&mut self) -> u64 {
        self.next_packet += 1;
        self.next_packet
    }

    fn generate_frame(&mut self, ue: usize, now: SimTime) {
        self.next_burst += 1;
        let cfg = self.cfg;
        let Some(burst) = self.apps[ue].generate_frame(
            now,
            self.next_burst,
            &cfg.modes,
            &cfg.frame_source,
            cfg.mtu_payload,
            &mut self.app_rng,
        ) else {
            return;
        };
        if self.window_mode[ue].is_none() {
            self.window_mode[ue] = Some(burst.mode);
        }
        self.sink.register(burst);
        self.stats[ue].on_burst_sent();
        for (index, size) in burst.fragment_sizes(cfg.mtu_payload) {
            let pkt = Packet {
                id: self.packet_id(),
                owner: ue,
                direction: Direction::Uplink,
                size_bytes: size,
                created_at: now,
                fragment: Some(FragmentTag {
                    burst_id: burst.burst_id,
                    index,
                }),
                kind: PacketKind::AppFragment,
                deadline: None,
            };
            if self.ul.enqueue(pkt) == EnqueueResult::Dropped {
                self.out.fragments_dropped[ue] += 1;
            }
        }
    }

    fn downlink_command(&mut self, ue: usize, now: SimTime) {
        let pkt = Packet {
            id: self.packet_id(),
            owner: ue,
            direction: Direction::Downlink,
            size_bytes: self.cfg.cbr.packet_bytes,
            created_at: now,
            fragment: None,
            kind: PacketKind::DownlinkCommand,
            deadline: None,
        };
        self.dl.enqueue(pkt);
    }

    fn tti(&mut self, now: SimTime) {
        let cfg = self.cfg;
        for ue in 0..cfg.n_ues {
            let id = cfg.ue_ids[ue];
            let ul_loss = match self.trace.loss_at(id, cfg.gnb_id, now) {
                Ok(l) => l,
                Err(e) => {
                    self.error = Some(e.into());
                    return;
                }
            };
            let dl_loss = if self.dl_reciprocal[ue] {
                ul_loss
            } else {
                self.trace.loss_at(cfg.gnb_id, id, now).unwrap_or(ul_loss)
            };
            let b = &cfg.link_budget;
            self.ul.set_snr(ue, b.snr_db(b.rx_power_dbm(ul_loss)));
            self.dl.set_snr(ue, b.snr_db(b.rx_power_dbm(dl_loss)));
        }

        let mut out = core::mem::take(&mut self.tti_out);
        out.clear();
        let log = cfg.record_tti_log.then_some(&mut self.out.tti_log);
        self.ul.serve_tti(now, &mut out, log);
        for (pkt, at) in out.delivered.drain(..) {
            let ue = pkt.owner;
            self.stats[ue].on_bytes(pkt.size_bytes as u64);
            self.out.fragment_bytes_delivered[ue] += pkt.size_bytes as u64;
            let Some(tag) = pkt.fragment else { continue };
            if let Some(rec) = self.sink.on_fragment(tag.burst_id, tag.index, at) {
                self.stats[ue].on_burst_received(rec.delay().expect("completed"));
                self.out.bursts.push(rec);
            }
        }

        out.clear();
        self.dl.serve_tti(now, &mut out, None);
        for (pkt, at) in out.delivered.drain(..) {
            if pkt.kind != PacketKind::Notification {
                continue;
            }
            let outcome = match downlink_outcome(at, cfg.controller.notification_loss_prob, &mut self.loss_rng) {
                crate::ran::DeliveryOutcome::Delivered { at } => NotificationOutcome::Delivered { at },
                crate::ran::DeliveryOutcome::Lost => NotificationOutcome::Lost { at },
            };
            self.resolve_notification(pkt, outcome);
        }
        for pkt in out.expired.drain(..) {
            if pkt.kind == PacketKind::Notification {
                let at = now + cfg.tti.tti;
                self.resolve_notification(pkt, NotificationOutcome::Expired { at });
            }
        }
        self.tti_out = out;
    }

    fn resolve_notification(&mut self, pkt: Packet, outcome: NotificationOutcome) {
        let ue = pkt.owner;
        let ctl = &mut self.control[ue];
        let Some((action, id, rec)) = ctl.in_flight else { return };
        if id != pkt.id {
            return;
        }
        self.out.notifications[rec].outcome = outcome;
        ctl.in_flight = None;
        ctl.last_outcome = outcome;
        if let NotificationOutcome::Delivered { .. } = outcome {
            ctl.applied = action.mode();
            self.apps[ue].set_mode(action.mode());
        }
    }

    fn dispatch(&mut self, ue: usize, action: Action, now: SimTime) -> bool {
        if !self.control[ue].needs_notification(action) {
            return false;
        }
        let mechanism = self.cfg.controller.mechanism;
        let note = Notification {
            action,
            imsi: self.cfg.ue_ids[ue],
            rnti: ue as u32 + 1,
            issued_at: now,
            mechanism,
        };
        let rec = self.out.notifications.len();
        match mechanism {
            NotificationMechanism::Ideal => {
                self.out.notifications.push(NotificationRecord {
                    ue,
                    action,
                    issued_at: now,
                    mechanism,
                    outcome: NotificationOutcome::Ideal,
                });
                let ctl = &mut self.control[ue];
                ctl.applied = action.mode();
                ctl.last_outcome = NotificationOutcome::Ideal;
                self.apps[ue].set_mode(action.mode());
            }
            NotificationMechanism::Real => {
                self.out.notifications.push(NotificationRecord {
                    ue,
                    action,
                    issued_at: now,
                    mechanism,
                    outcome: NotificationOutcome::Pending,
                });
                let id = self.packet_id();
                let pkt = Packet {
                    id,
                    owner: ue,
                    direction: Direction::Downlink,
                    size_bytes: NOTIFICATION_BYTES,
                    created_at: now,
                    fragment: None,
                    kind: PacketKind::Notification,
                    // resolved before the next controller period
                    deadline: Some(now + self.cfg.controller.period - SimTime::from_micros(1)),
                };
                debug_assert_eq!(note.payload().len(), pkt.size_bytes as usize);
                if self.dl.enqueue(pkt) == EnqueueResult::Dropped {
                    self.out.notifications[rec].outcome = NotificationOutcome::Lost { at: now };
                    self.control[ue].last_outcome = NotificationOutcome::Lost { at: now };
                } else {
                    self.control[ue].in_flight = Some((action, id, rec));
                }
            }
        }
        true
    }

    /// Closes every UE's window at `now`. When `decide` is set this is a
    /// controller period: transitions are formed and new actions dispatched.
    fn status_update(&mut self, now: SimTime, decide: bool) {
        let cfg = self.cfg;
        let n = cfg.n_ues;
        let mut states = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let mut links = Vec::with_capacity(n);
        for ue in 0..n {
            let app = self.stats[ue].close_window(now);
            let link = self.ul.ues[ue].take_window();
            let mode = self.window_mode[ue].take().unwrap_or(self.apps[ue].mode());
            let cd = cfg.modes.get(mode).chamfer_distance;
            let reward = compute_reward(&cfg.reward, &app, cd);
            if now > SimTime::ZERO {
                self.out.windows.push(WindowRecord {
                    ue,
                    mode,
                    stats: app,
                    qoe: cfg.reward.qoe(cd),
                    reward,
                });
            }
            let state = build_state(
                &FeatureInputs {
                    app: &app,
                    link: &link,
                    current_mode: self.apps[ue].mode(),
                    last_frame_bytes: self.apps[ue].last_frame_bytes(),
                },
                &self.scales,
            );
            states.push(state);
            rewards.push(reward);
            links.push(link);
        }
        if now > SimTime::ZERO {
            self.out.cells.push(collect_cell_kpis(now, &links));
        }
        if !decide {
            return;
        }
        self.out.status_updates += 1;

        let mut transitions = Vec::new();
        let mut actions: Vec<Option<Action>> = vec![None; n];
        if let Some(agent) = self.agent.as_deref_mut() {
            for ue in 0..n {
                let ctl = &self.control[ue];
                if let (Some(s), Some(a)) = (ctl.last_state, ctl.last_action) {
                    transitions.push(Transition {
                        ue,
                        state: s,
                        action: a,
                        next_state: states[ue],
                        reward: rewards[ue],
                    });
                }
            }
            if cfg.agent_mode == AgentMode::Train && !transitions.is_empty() {
                match agent.update(&transitions) {
                    Ok(r) => self.out.training.push(r),
                    Err(e) => {
                        self.error = Some(e.into());
                        return;
                    }
                }
            }
            for t in &transitions {
                self.out.transitions[t.ue] += 1;
            }
            let chosen = match agent.get_action(&states, cfg.agent_mode == AgentMode::Train) {
                Ok(a) if a.len() == n && a.iter().all(|x| cfg.modes.contains(x.mode())) => a,
                Ok(a) => {
                    self.error = Some(ScenarioError::Agent(AgentError {
                        step: self.out.status_updates,
                        message: alloc::format!("agent returned {} actions for {} UEs or an unknown mode", a.len(), n),
                    }));
                    return;
                }
                Err(e) => {
                    self.error = Some(e.into());
                    return;
                }
            };
            self.out.action_batches += 1;
            for (ue, a) in chosen.into_iter().enumerate() {
                actions[ue] = Some(a);
            }
        }

        for ue in 0..n {
            let had_transition = self.control[ue].last_state.is_some() && actions[ue].is_some();
            let notified = match actions[ue] {
                Some(a) => self.dispatch(ue, a, now),
                None => false,
            };
            let ctl = &mut self.control[ue];
            let outcome = if notified && cfg.controller.mechanism == NotificationMechanism::Real {
                NotificationOutcome::Pending
            } else if notified {
                NotificationOutcome::Ideal
            } else {
                core::mem::take(&mut ctl.last_outcome)
            };
            if notified {
                ctl.last_outcome = NotificationOutcome::None;
            }
            self.out.controller_log.push(ControllerRecord {
                t: now,
                ue,
                state: states[ue],
                action: actions[ue],
                reward: had_transition.then_some(rewards[ue]),
                notified,
                outcome,
            });
            ctl.last_state = Some(states[ue]);
            ctl.last_action = actions[ue];
        }
    }

    fn finish(mut self) -> ScenarioOutput {
        let mut incomplete: Vec<BurstRecord> = self.sink.incomplete().collect();
        self.out.bursts.append(&mut incomplete);
        self.out.bursts.sort_by_key(|b| b.burst_id);
        let counters = |link: &RanLink| {
            link.ues
                .iter()
                .map(|u| ByteCounters {
                    offered: u.offered_bytes,
                    drained: u.drained_bytes,
                    dropped: u.dropped_bytes,
                    buffered: u.rlc_buffer_bytes,
                })
                .collect()
        };
        self.out.uplink_bytes = counters(&self.ul);
        self.out.downlink_bytes = counters(&self.dl);
        self.out
    }
}
