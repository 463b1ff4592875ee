//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p ranai --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use ranai::config::{AgentRunMode, PolicySpec, RunConfig};
use ranai::runner;
use ranai::RunArtifacts;
use ranai_core::agent::{
    double_q_target, mse_loss_and_grad, Action, Agent, AgentError, AgentHyperparams, Dense, DoubleDqnAgent,
    LossReport, QNetwork, Regression, RewardConfig, StateVector, Transition, STATE_DIM,
};
use ranai_core::agent::compute_reward;
use ranai_core::app::AppStatsWindow;
use ranai_core::controller::{NotificationMechanism, NotificationOutcome};
use ranai_core::rng::{stream, StreamId};
use ranai_core::scenario::ScenarioOutput;
use ranai_core::SimTime;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const MODES: [&str; 3] = ["C-R", "C-SC", "C-SA"];
const TABLE_QOE: [&str; 3] = ["1.00", "0.88", "0.22"];

fn constant(mode: &str, n_ues: usize, mechanism: NotificationMechanism, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.policy = PolicySpec::Constant(mode.into());
    cfg.scenario.n_ues = n_ues;
    cfg.controller.mechanism = mechanism;
    cfg.seed = seed;
    cfg
}

fn run(cfg: &RunConfig) -> Result<RunArtifacts, String> {
    runner::run(cfg).map_err(|e| format!("{e:#}"))
}

/// Constant-policy runs shared by the QoE and congestion criteria.
struct ConstantRuns {
    runs: BTreeMap<(usize, usize, &'static str), RunArtifacts>,
}

impl ConstantRuns {
    const SEED: u64 = 7;

    fn collect() -> Result<Self, String> {
        let mut runs = BTreeMap::new();
        for (mech_name, mech) in [("ideal", NotificationMechanism::Ideal), ("real", NotificationMechanism::Real)] {
            for n in [1, 5] {
                for (m, mode) in MODES.iter().enumerate() {
                    runs.insert((m, n, mech_name), run(&constant(mode, n, mech, Self::SEED))?);
                }
            }
        }
        Ok(ConstantRuns { runs })
    }

    fn median(&self, mode: usize, n: usize) -> Option<f64> {
        self.runs[&(mode, n, "ideal")].summary.pooled.delay_ms.p50
    }
}

fn qoe_constants(runs: &ConstantRuns) -> Outcome {
    for (&(m, n, mech), a) in &runs.runs {
        let cd = a.scenario.modes.modes[m].chamfer_distance;
        let configured = a.scenario.reward.qoe(cd);
        let got = a.summary.pooled.mean_qoe.ok_or("no windows")?;
        ensure!(got == configured, "{} N={n} {mech}: mean QoE {got} != per-mode value {configured}", MODES[m]);
        ensure!(
            format!("{got:.2}") == TABLE_QOE[m],
            "{} N={n} {mech}: mean QoE {got:.4} does not round to {}",
            MODES[m],
            TABLE_QOE[m]
        );
        ensure!(
            a.output.windows.iter().all(|w| w.qoe == configured),
            "{} N={n} {mech}: per-window QoE varies",
            MODES[m]
        );
    }
    Ok(format!("{} runs: C-R 1.00, C-SC 0.88, C-SA 0.22 with zero variance", runs.runs.len()))
}

fn window(delay_s: f64, prr: f64) -> AppStatsWindow {
    AppStatsWindow {
        ue: 0,
        window_start: SimTime::ZERO,
        window_end: SimTime::from_millis(100),
        bursts_sent: 1,
        bursts_received: 1,
        bytes_received: 1,
        mean_burst_delay: delay_s,
        delay_defined: true,
        prr,
    }
}

fn reward_suite() -> Outcome {
    let alpha = |a| RewardConfig {
        alpha: a,
        ..RewardConfig::default()
    };
    let cases = [
        (alpha(1.0), 0.030, 1.0, 5.4, 0.88),
        (alpha(1.0), 0.060, 1.0, 5.4, 0.0),
        (alpha(0.0), 0.025, 1.0, 5.4, 0.5),
        (alpha(1.0), 0.010, 1.0, 0.0, 1.0),
    ];
    for (cfg, d, prr, cd, want) in cases {
        let got = compute_reward(&cfg, &window(d, prr), cd);
        ensure!((got - want).abs() <= 1e-12, "delay {d} prr {prr} cd {cd}: {got} != {want}");
    }
    let mut gated = 0;
    for a in [0.0, 0.3, 0.7, 1.0] {
        for d_ms in (0..=120).step_by(5) {
            for prr in [0.0, 0.5, 0.99, 0.999_999, 1.0] {
                for cd in [0.0, 5.4, 35.1] {
                    let d = d_ms as f64 / 1000.0;
                    let r = compute_reward(&alpha(a), &window(d, prr), cd);
                    ensure!((0.0..=1.0).contains(&r), "reward {r} out of [0, 1]");
                    if d >= 0.050 || prr < 1.0 {
                        ensure!(r == 0.0, "gate open at delay {d} prr {prr}: {r}");
                        gated += 1;
                    }
                }
            }
        }
    }
    Ok(format!("4 worked examples within 1e-12; {gated} gated cases all 0"))
}

fn gradient_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for fixture in 0..20u64 {
        let mut rng = stream(fixture, StreamId::Custom(3));
        let sizes = [STATE_DIM, 12, 6, 3];
        let mut net = QNetwork::init_uniform(&sizes, &mut rng);
        let states: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..STATE_DIM).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let batch: Vec<Regression<'_>> = states
            .iter()
            .map(|s| Regression {
                state: s,
                action: rng.random_range(0..3),
                target: rng.random_range(-1.0..1.0),
            })
            .collect();
        let mut g = net.zero_gradients();
        mse_loss_and_grad(&net, &batch, &mut g);
        let analytic = g.flat();
        let loss = |net: &QNetwork| mse_loss_and_grad(net, &batch, &mut net.zero_gradients()).0;
        let h = 1e-6;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = *net.params().nth(i).unwrap();
            *net.params_mut().nth(i).unwrap() = orig + h;
            let up = loss(&net);
            *net.params_mut().nth(i).unwrap() = orig - h;
            let down = loss(&net);
            *net.params_mut().nth(i).unwrap() = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            if scale < 1e-7 {
                ensure!((a - numeric).abs() < 1e-9, "fixture {fixture} param {i}: {a} vs {numeric}");
                continue;
            }
            let rel = (a - numeric).abs() / scale;
            worst = worst.max(rel);
            ensure!(rel < 1e-4, "fixture {fixture} param {i}: relative error {rel:e}");
        }
    }

    // Q(s) = 0.5 s + 0.1; y = 1 + 0.9 * Q(3) = 2.44
    let toy = QNetwork::from_layers(vec![Dense {
        inputs: 1,
        outputs: 1,
        weights: vec![0.5],
        bias: vec![0.1],
    }]);
    let y = double_q_target(&toy, &toy, 1.0, &[3.0], 0.9);
    ensure!((y - 2.44).abs() <= 1e-12, "toy target {y} != 2.44");
    Ok(format!("20 fixtures, worst relative error {worst:.2e}; 2-parameter target 2.44"))
}

fn mdp_oracle() -> Outcome {
    const REWARD: [[f64; 2]; 2] = [[0.3, 0.0], [1.0, 0.0]];
    const NEXT: [[usize; 2]; 2] = [[0, 1], [1, 0]];
    let discount = 0.5;
    let mut v = [0.0f64; 2];
    for _ in 0..1000 {
        v = std::array::from_fn(|s| (0..2).map(|a| REWARD[s][a] + discount * v[NEXT[s][a]]).fold(f64::MIN, f64::max));
    }
    let optimum: Vec<usize> = (0..2)
        .map(|s| {
            let q: Vec<f64> = (0..2).map(|a| REWARD[s][a] + discount * v[NEXT[s][a]]).collect();
            usize::from(q[1] > q[0])
        })
        .collect();
    let encode = |s: usize| {
        let mut x = [0.0; STATE_DIM];
        x[s] = 1.0;
        StateVector(x)
    };
    let hp = AgentHyperparams {
        layer_sizes: vec![STATE_DIM, 12, 6, 2],
        discount,
        learning_rate: 0.05,
        epsilon_decay_steps: 1_000,
        ..AgentHyperparams::default()
    };
    let mut matched = 0;
    for seed in 0..10 {
        let mut agent = DoubleDqnAgent::new(hp.clone(), seed);
        let mut s = 0;
        for _ in 0..2_000 {
            let a = agent.select(&[encode(s)], true)[0].index();
            agent.learn(&[Transition {
                ue: 0,
                state: encode(s),
                action: Action(a as u8),
                next_state: encode(NEXT[s][a]),
                reward: REWARD[s][a],
            }]);
            s = NEXT[s][a];
        }
        let greedy: Vec<usize> = (0..2).map(|s| agent.select(&[encode(s)], false)[0].index()).collect();
        matched += usize::from(greedy == optimum);
    }
    ensure!(matched >= 9, "greedy policy matched the optimum {optimum:?} in {matched}/10 seeds");
    Ok(format!("optimum {optimum:?} matched in {matched}/10 seeds after 2000 updates"))
}

fn congestion(runs: &ConstantRuns) -> Outcome {
    let mut parts = Vec::new();
    for (m, mode) in MODES.iter().enumerate() {
        let (one, five) = (runs.median(m, 1).ok_or("no delays")?, runs.median(m, 5).ok_or("no delays")?);
        ensure!(five > one, "{mode}: median delay N=5 {five:.2} ms <= N=1 {one:.2} ms");
        parts.push(format!("{mode} {one:.1}->{five:.1}"));
    }
    for n in [1, 5] {
        let d: Vec<f64> = (0..3).map(|m| runs.median(m, n).unwrap()).collect();
        ensure!(d[0] > d[1] && d[1] > d[2], "N={n}: medians {d:?} not ordered C-R > C-SC > C-SA");
        ensure!(d[0] / d[2] > 1.5, "N={n}: C-R/C-SA ratio {:.2} <= 1.5", d[0] / d[2]);
        parts.push(format!("N={n} C-R/C-SA {:.1}x", d[0] / d[2]));
    }
    Ok(format!("median ms {}", parts.join(", ")))
}

fn delay_violations(out: &ScenarioOutput, delta_max: f64) -> f64 {
    let bad = out
        .windows
        .iter()
        .filter(|w| !(w.stats.delay_defined && w.stats.mean_burst_delay < delta_max))
        .count();
    bad as f64 / out.windows.len() as f64
}

fn dql_tradeoff() -> Outcome {
    let mut good = 0;
    let mut rows = Vec::new();
    for seed in 0..10 {
        let reference = run(&constant("C-R", 1, NotificationMechanism::Ideal, seed))?;
        let violating = delay_violations(&reference.output, reference.scenario.reward.delta_max);
        ensure!(violating >= 0.2, "seed {seed}: constant C-R violates the delay bound in only {violating:.2}");
        let mut cfg = RunConfig::default();
        cfg.seed = seed;
        let trained = runner::train_then_eval(&cfg, 50).map_err(|e| format!("{e:#}"))?;
        let p = &trained.artifacts.summary.pooled;
        let (delay, qoe) = (p.delay_ms.mean.unwrap_or(f64::INFINITY), p.mean_qoe.unwrap_or(0.0));
        let ok = delay < 50.0 && qoe > 0.22;
        good += usize::from(ok);
        rows.push(format!("s{seed}:{delay:.0}ms/{qoe:.2}{}", if ok { "" } else { "!" }));
    }
    ensure!(good >= 8, "{good}/10 seeds met delay < 50 ms and QoE > 0.22 [{}]", rows.join(" "));
    Ok(format!("{good}/10 seeds (mean delay/QoE) {}", rows.join(" ")))
}

/// Always asks for C-SA.
struct WantsSa;

impl Agent for WantsSa {
    fn get_action(&mut self, states: &[StateVector], _: bool) -> Result<Vec<Action>, AgentError> {
        Ok(vec![Action(2); states.len()])
    }

    fn update(&mut self, _: &[Transition]) -> Result<LossReport, AgentError> {
        Ok(LossReport {
            update_idx: 0,
            loss: None,
            epsilon: 0.0,
            mean_q: None,
        })
    }
}

fn notification_effect() -> Outcome {
    let mut lossy = RunConfig::default();
    lossy.scenario.n_ues = 5;
    lossy.seed = 11;
    lossy.controller.mechanism = NotificationMechanism::Real;
    lossy.controller.notification_loss_prob = 0.3;
    lossy.agent.mode = AgentRunMode::Train;
    let period = SimTime::from_secs_f64(lossy.controller.period_ms / 1000.0);

    // exploring agent: many mode changes, some lost
    let real = run(&lossy)?;
    let out = &real.output;
    let (mut delivered, mut lost, mut redispatched, mut lags) = (0, 0, 0, Vec::new());
    for n in &out.notifications {
        match n.outcome {
            NotificationOutcome::Delivered { at } => {
                let lag = n.application_lag().unwrap();
                ensure!(lag > SimTime::ZERO && lag == at - n.issued_at, "lag {lag:?} vs delivery at {at:?}");
                let next = out.bursts.iter().find(|b| b.ue == n.ue && b.generated_at == n.issued_at + period);
                if let Some(b) = next {
                    ensure!(b.mode == n.action.mode(), "frame after delivery used {:?}", b.mode);
                }
                delivered += 1;
                lags.push(lag.as_millis_f64());
            }
            NotificationOutcome::Lost { .. } => {
                lost += 1;
                let t = n.issued_at + period;
                let log = out.controller_log.iter().find(|r| r.ue == n.ue && r.t == t);
                if let Some(r) = log.filter(|r| r.action == Some(n.action)) {
                    let again = out.notifications.iter().any(|m| m.ue == n.ue && m.issued_at == t && m.action == n.action);
                    ensure!(again, "UE {} lost {:?} at {:?} and was not re-sent at {t:?}", n.ue, n.action, n.issued_at);
                    ensure!(r.notified, "controller log misses the re-dispatch");
                    redispatched += 1;
                }
            }
            other => return Err(format!("unexpected notification outcome {other:?}")),
        }
    }
    ensure!(delivered > 0 && lost > 0, "delivered {delivered}, lost {lost}");

    // a persistent request is re-sent every period until it gets through
    let mut persistent = 0;
    for seed in 0..3 {
        let mut cfg = lossy.clone();
        cfg.seed = seed;
        cfg.policy = PolicySpec::Dql;
        let a = runner::run_with_agent(&cfg, Some(&mut WantsSa)).map_err(|e| format!("{e:#}"))?;
        for ue in 0..5 {
            let recs: Vec<_> = a.output.notifications.iter().filter(|n| n.ue == ue).collect();
            for pair in recs.windows(2) {
                ensure!(matches!(pair[0].outcome, NotificationOutcome::Lost { .. }), "re-sent after {:?}", pair[0].outcome);
                ensure!(pair[1].issued_at == pair[0].issued_at + period, "re-dispatch skipped a period");
                persistent += 1;
            }
            ensure!(
                matches!(recs.last().map(|r| r.outcome), Some(NotificationOutcome::Delivered { .. })),
                "UE {ue} never received its notification"
            );
        }
    }

    let mut ideal_cfg = lossy.clone();
    ideal_cfg.controller.mechanism = NotificationMechanism::Ideal;
    let ideal = run(&ideal_cfg)?;
    ensure!(!ideal.output.notifications.is_empty(), "no ideal notifications");
    ensure!(
        ideal.output.notifications.iter().all(|n| n.application_lag() == Some(SimTime::ZERO)),
        "ideal notification with non-zero lag"
    );
    let mean_lag = lags.iter().sum::<f64>() / lags.len() as f64;
    Ok(format!(
        "real: {delivered} delivered (mean lag {mean_lag:.2} ms), {lost} lost, {redispatched} + {persistent} re-dispatched; ideal: {} at zero lag",
        ideal.output.notifications.len()
    ))
}

fn invariants() -> Outcome {
    let mut rng = stream(2024, StreamId::Custom(8));
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = 12;
    for case in 0..cases {
        let mut cfg = RunConfig::default();
        cfg.seed = rng.random();
        cfg.scenario.n_ues = rng.random_range(1..=4);
        cfg.scenario.duration_s = rng.random_range(1..=4) as f64;
        cfg.policy = match rng.random_range(0..4) {
            3 => PolicySpec::Dql,
            m => PolicySpec::Constant(MODES[m].into()),
        };
        if rng.random() {
            cfg.controller.mechanism = NotificationMechanism::Real;
            cfg.controller.notification_loss_prob = rng.random_range(0.0..0.5);
        }
        cfg.ran.rlc_capacity_bytes = rng.random_range(20_000..3_000_000);
        cfg.app.mtu_payload = rng.random_range(200..2000);
        cfg.app.jitter = rng.random_range(0.0..0.5);
        cfg.app.cbr.enabled = rng.random();
        let a = run(&cfg)?;
        let out = &a.output;
        for ue in 0..cfg.scenario.n_ues {
            for b in [&out.uplink_bytes[ue], &out.downlink_bytes[ue]] {
                ensure!(b.offered == b.drained + b.dropped + b.buffered, "case {case}: bytes not conserved {b:?}");
            }
            let generated: u64 = out.bursts.iter().filter(|b| b.ue == ue).map(|b| b.total_bytes).sum();
            ensure!(generated == out.uplink_bytes[ue].offered, "case {case}: generated != offered");
            let completed: u64 = out.bursts.iter().filter(|b| b.ue == ue && b.completed_at.is_some()).map(|b| b.total_bytes).sum();
            let pending: u64 = out.bursts.iter().filter(|b| b.ue == ue && b.completed_at.is_none()).map(|b| b.total_bytes).sum();
            let delivered = out.fragment_bytes_delivered[ue];
            ensure!(completed <= delivered && delivered - completed <= pending, "case {case}: reassembled without every fragment");
            let (mut sent, mut received) = (0, 0);
            for w in out.windows.iter().filter(|w| w.ue == ue) {
                ensure!((0.0..=1.0).contains(&w.stats.prr), "case {case}: PRR {}", w.stats.prr);
                sent += w.stats.bursts_sent;
                received += w.stats.bursts_received;
                ensure!(received <= sent, "case {case}: received {received} > sent {sent}");
            }
        }
        let (d1, d2) = (tmp.path().join(format!("{case}a")), tmp.path().join(format!("{case}b")));
        a.write_to(&d1).map_err(|e| e.to_string())?;
        run(&cfg)?.write_to(&d2).map_err(|e| e.to_string())?;
        for entry in fs::read_dir(&d1).map_err(|e| e.to_string())? {
            let name = entry.map_err(|e| e.to_string())?.file_name();
            let (x, y) = (fs::read(d1.join(&name)), fs::read(d2.join(&name)));
            ensure!(x.is_ok() && x.ok() == y.ok(), "case {case}: {} differs between identical runs", name.to_string_lossy());
        }
    }
    Ok(format!("{cases} randomized configs: conservation, PRR bounds, reassembly, byte-identical reruns"))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, started: Instant, r: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("PASS [{n}] {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{n}] {name} ({secs:.1}s): {why}");
            }
        }
    };

    let t = Instant::now();
    let constants = ConstantRuns::collect();
    match &constants {
        Ok(runs) => report(1, "constant-policy QoE", t, qoe_constants(runs)),
        Err(e) => report(1, "constant-policy QoE", t, Err(e.clone())),
    }
    let t = Instant::now();
    report(2, "reward and QoS gate", t, reward_suite());
    let t = Instant::now();
    report(3, "gradient and double-Q oracle", t, gradient_oracle());
    let t = Instant::now();
    report(4, "two-state MDP policy", t, mdp_oracle());
    let t = Instant::now();
    match &constants {
        Ok(runs) => report(5, "congestion ordering", t, congestion(runs)),
        Err(e) => report(5, "congestion ordering", t, Err(e.clone())),
    }
    let t = Instant::now();
    report(6, "DQL QoE/QoS trade-off", t, dql_tradeoff());
    let t = Instant::now();
    report(7, "notification mechanism", t, notification_effect());
    let t = Instant::now();
    report(8, "conservation and determinism", t, invariants());

    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
