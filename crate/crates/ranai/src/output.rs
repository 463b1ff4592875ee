//! Run artifacts: summary statistics and the CSV/JSON files written per run.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use ranai_core::agent::LossReport;
use ranai_core::app::ModeTable;
use ranai_core::controller::NotificationOutcome;
use ranai_core::scenario::{ScenarioConfig, ScenarioOutput};
use ranai_core::stats::{mean, Distribution};

use crate::config::RunConfig;

pub const WINDOWS_FILE: &str = "windows.csv";
pub const CONTROLLER_FILE: &str = "controller.csv";
pub const TRAINING_FILE: &str = "training.csv";
pub const BURSTS_FILE: &str = "bursts.csv";
pub const CELLS_FILE: &str = "cells.csv";
pub const NOTIFICATIONS_FILE: &str = "notifications.csv";
pub const TTI_FILE: &str = "tti.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MODEL_FILE: &str = "model.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UeSummary {
    /// Channel id of the UE; `None` for the pooled row.
    pub ue: Option<u32>,
    pub windows: usize,
    pub mean_qoe: Option<f64>,
    pub mean_reward: Option<f64>,
    pub mean_prr: Option<f64>,
    /// Fraction of windows whose reward was gated to zero.
    pub qos_violation_fraction: Option<f64>,
    pub bursts_sent: u64,
    pub bursts_completed: u64,
    pub delay_ms: Distribution,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NotificationSummary {
    pub issued: usize,
    pub applied: usize,
    pub lost: usize,
    pub expired: usize,
    pub mean_lag_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainingSummary {
    pub updates: usize,
    pub gradient_steps: usize,
    pub final_loss: Option<f64>,
    pub final_epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub policy: String,
    pub n_ues: usize,
    pub mechanism: String,
    pub seed: u64,
    pub events_dispatched: u64,
    pub status_updates: u64,
    pub action_batches: u64,
    pub pooled: UeSummary,
    pub per_ue: Vec<UeSummary>,
    pub notifications: NotificationSummary,
    pub training: TrainingSummary,
    /// Fully resolved configuration of the run.
    pub config: RunConfig,
}

fn ue_summary(ue: Option<usize>, sc: &ScenarioConfig, out: &ScenarioOutput) -> UeSummary {
    let keep = |u: usize| ue.is_none_or(|x| x == u);
    let windows: Vec<_> = out.windows.iter().filter(|w| keep(w.ue)).collect();
    let delays: Vec<f64> = out
        .bursts
        .iter()
        .filter(|b| keep(b.ue))
        .filter_map(|b| b.delay())
        .map(|d| d.as_millis_f64())
        .collect();
    let col = |f: &dyn Fn(&&ranai_core::scenario::WindowRecord) -> f64| mean(&windows.iter().map(f).collect::<Vec<_>>());
    UeSummary {
        ue: ue.map(|u| sc.ue_ids[u]),
        windows: windows.len(),
        mean_qoe: col(&|w| w.qoe),
        mean_reward: col(&|w| w.reward),
        mean_prr: col(&|w| w.stats.prr),
        qos_violation_fraction: col(&|w| if w.reward == 0.0 { 1.0 } else { 0.0 }),
        bursts_sent: out.bursts.iter().filter(|b| keep(b.ue)).count() as u64,
        bursts_completed: delays.len() as u64,
        delay_ms: Distribution::of(&delays),
    }
}

pub fn summarize(cfg: &RunConfig, sc: &ScenarioConfig, out: &ScenarioOutput, training: &[LossReport]) -> Summary {
    let n = &out.notifications;
    let count = |f: fn(&NotificationOutcome) -> bool| n.iter().filter(|r| f(&r.outcome)).count();
    let lags: Vec<f64> = n
        .iter()
        .filter_map(|r| r.application_lag())
        .map(|l| l.as_millis_f64())
        .collect();
    Summary {
        policy: cfg.policy.to_string(),
        n_ues: sc.n_ues,
        mechanism: mechanism_label(cfg),
        seed: cfg.seed,
        events_dispatched: out.report.map_or(0, |r| r.events_dispatched),
        status_updates: out.status_updates,
        action_batches: out.action_batches,
        pooled: ue_summary(None, sc, out),
        per_ue: (0..sc.n_ues).map(|u| ue_summary(Some(u), sc, out)).collect(),
        notifications: NotificationSummary {
            issued: n.len(),
            applied: lags.len(),
            lost: count(|o| matches!(o, NotificationOutcome::Lost { .. })),
            expired: count(|o| matches!(o, NotificationOutcome::Expired { .. })),
            mean_lag_ms: mean(&lags),
        },
        training: TrainingSummary {
            updates: training.len(),
            gradient_steps: training.iter().filter(|r| r.loss.is_some()).count(),
            final_loss: training.iter().rev().find_map(|r| r.loss),
            final_epsilon: training.last().map(|r| r.epsilon),
        },
        config: cfg.clone(),
    }
}

pub fn mechanism_label(cfg: &RunConfig) -> String {
    serde_json::to_value(cfg.controller.mechanism)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn secs(t: ranai_core::SimTime) -> String {
    t.as_secs_f64().to_string()
}

pub fn write_windows<W: Write>(sc: &ScenarioConfig, out: &ScenarioOutput, dst: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["t", "ue", "mode", "burstsSent", "burstsReceived", "bytesReceived", "meanDelayMs", "prr"])?;
    for r in &out.windows {
        let s = &r.stats;
        w.write_record([
            secs(s.window_end),
            sc.ue_ids[r.ue].to_string(),
            sc.modes.name(r.mode).to_string(),
            s.bursts_sent.to_string(),
            s.bursts_received.to_string(),
            s.bytes_received.to_string(),
            (s.mean_burst_delay * 1e3).to_string(),
            s.prr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_controller<W: Write>(sc: &ScenarioConfig, out: &ScenarioOutput, dst: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(dst);
    let mut header = vec!["t".to_string(), "ue".to_string()];
    header.extend((1..=8).map(|i| format!("f{i}")));
    header.extend(["action", "reward", "notified", "notificationOutcome"].map(String::from));
    w.write_record(&header)?;
    for r in &out.controller_log {
        let mut row = vec![secs(r.t), sc.ue_ids[r.ue].to_string()];
        row.extend(r.state.0.iter().map(f64::to_string));
        row.push(r.action.map(|a| sc.modes.name(a.mode()).to_string()).unwrap_or_default());
        row.push(opt(r.reward));
        row.push(r.notified.to_string());
        row.push(r.outcome.label().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_training<W: Write>(training: &[LossReport], dst: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["update_idx", "loss", "epsilon", "meanQ"])?;
    for r in training {
        w.write_record([r.update_idx.to_string(), opt(r.loss), r.epsilon.to_string(), opt(r.mean_q)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bursts<W: Write>(sc: &ScenarioConfig, out: &ScenarioOutput, dst: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["burstId", "ue", "mode", "totalBytes", "generatedS", "completedS", "delayMs"])?;
    for b in &out.bursts {
        w.write_record([
            b.burst_id.to_string(),
            sc.ue_ids[b.ue].to_string(),
            sc.modes.name(b.mode).to_string(),
            b.total_bytes.to_string(),
            secs(b.generated_at),
            b.completed_at.map(secs).unwrap_or_default(),
            opt(b.delay().map(|d| d.as_millis_f64())),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cells<W: Write>(out: &ScenarioOutput, dst: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["t", "activeUes", "servedBytes", "meanShare"])?;
    for c in &out.cells {
        w.write_record([
            secs(c.t),
            c.active_ues.to_string(),
            c.served_bytes.to_string(),
            c.mean_share.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_notifications<W: Write>(sc: &ScenarioConfig, out: &ScenarioOutput, dst: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["issuedS", "ue", "action", "mechanism", "outcome", "resolvedS", "lagMs"])?;
    for n in &out.notifications {
        let resolved = match n.outcome {
            NotificationOutcome::Delivered { at } | NotificationOutcome::Lost { at } | NotificationOutcome::Expired { at } => {
                secs(at)
            }
            NotificationOutcome::Ideal => secs(n.issued_at),
            _ => String::new(),
        };
        w.write_record([
            secs(n.issued_at),
            sc.ue_ids[n.ue].to_string(),
            sc.modes.name(n.action.mode()).to_string(),
            format!("{:?}", n.mechanism).to_lowercase(),
            n.outcome.label().to_string(),
            resolved,
            opt(n.application_lag().map(|l| l.as_millis_f64())),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tti<W: Write>(sc: &ScenarioConfig, out: &ScenarioOutput, dst: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["t", "ue", "share", "snrDb", "bufferBytes", "servedBytes"])?;
    for r in &out.tti_log {
        w.write_record([
            secs(r.t),
            sc.ue_ids[r.ue].to_string(),
            r.share.to_string(),
            r.snr_db.to_string(),
            r.buffer_bytes.to_string(),
            r.served_bytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything one run produced.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub scenario: ScenarioConfig,
    pub output: ScenarioOutput,
    /// Loss reports of every training episode plus the run itself.
    pub training: Vec<LossReport>,
    pub summary: Summary,
}

impl RunArtifacts {
    pub fn modes(&self) -> &ModeTable {
        &self.scenario.modes
    }

    /// Writes every artifact file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let file = |name: &str| {
            let p = dir.join(name);
            fs::File::create(&p)
                .map(std::io::BufWriter::new)
                .with_context(|| format!("creating {}", p.display()))
        };
        let (sc, out) = (&self.scenario, &self.output);
        write_windows(sc, out, file(WINDOWS_FILE)?)?;
        write_controller(sc, out, file(CONTROLLER_FILE)?)?;
        write_training(&self.training, file(TRAINING_FILE)?)?;
        write_bursts(sc, out, file(BURSTS_FILE)?)?;
        write_cells(out, file(CELLS_FILE)?)?;
        write_notifications(sc, out, file(NOTIFICATIONS_FILE)?)?;
        if sc.record_tti_log {
            write_tti(sc, out, file(TTI_FILE)?)?;
        }
        let mut s = file(SUMMARY_FILE)?;
        serde_json::to_writer_pretty(&mut s, &self.summary)?;
        s.write_all(b"\n")?;
        s.flush()?;
        Ok(())
    }
}
