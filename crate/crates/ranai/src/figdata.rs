//! Long-format delay and PRR tables for external plotting.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::output::{RunArtifacts, Summary, BURSTS_FILE, SUMMARY_FILE, WINDOWS_FILE};

pub const DELAY_FILE: &str = "delay.csv";
pub const PRR_FILE: &str = "prr.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DelayRow {
    pub policy: String,
    pub n_ues: usize,
    pub mechanism: String,
    pub seed: u64,
    pub ue: u32,
    pub burst_id: u64,
    pub delay_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrrRow {
    pub policy: String,
    pub n_ues: usize,
    pub mechanism: String,
    pub seed: u64,
    pub ue: u32,
    pub t: f64,
    pub prr: f64,
}

/// Rows from any number of runs, keyed by (policy, N_u, mechanism).
#[derive(Clone, Debug, Default)]
pub struct FigureData {
    pub delay: Vec<DelayRow>,
    pub prr: Vec<PrrRow>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct BurstCsv {
    burst_id: u64,
    ue: u32,
    delay_ms: Option<f64>,
}

#[derive(Deserialize)]
struct WindowCsv {
    t: f64,
    ue: u32,
    prr: f64,
}

impl FigureData {
    fn key(s: &Summary) -> (String, usize, String, u64) {
        (s.policy.clone(), s.n_ues, s.mechanism.clone(), s.seed)
    }

    /// Adds every completed burst and every window of an in-memory run.
    pub fn add(&mut self, run: &RunArtifacts) {
        let (policy, n_ues, mechanism, seed) = Self::key(&run.summary);
        let ids = &run.scenario.ue_ids;
        for b in &run.output.bursts {
            if let Some(d) = b.delay() {
                self.delay.push(DelayRow {
                    policy: policy.clone(),
                    n_ues,
                    mechanism: mechanism.clone(),
                    seed,
                    ue: ids[b.ue],
                    burst_id: b.burst_id,
                    delay_ms: d.as_millis_f64(),
                });
            }
        }
        for w in &run.output.windows {
            self.prr.push(PrrRow {
                policy: policy.clone(),
                n_ues,
                mechanism: mechanism.clone(),
                seed,
                ue: ids[w.ue],
                t: w.stats.window_end.as_secs_f64(),
                prr: w.stats.prr,
            });
        }
    }

    /// Adds a run previously written to `dir`.
    pub fn add_run_dir(&mut self, dir: &Path) -> anyhow::Result<()> {
        let summary_path = dir.join(SUMMARY_FILE);
        let summary: Summary = serde_json::from_slice(
            &fs::read(&summary_path).with_context(|| format!("reading {}", summary_path.display()))?,
        )
        .with_context(|| format!("parsing {}", summary_path.display()))?;
        let (policy, n_ues, mechanism, seed) = Self::key(&summary);
        let mut bursts = csv::Reader::from_path(dir.join(BURSTS_FILE))?;
        for row in bursts.deserialize() {
            let b: BurstCsv = row?;
            if let Some(delay_ms) = b.delay_ms {
                self.delay.push(DelayRow {
                    policy: policy.clone(),
                    n_ues,
                    mechanism: mechanism.clone(),
                    seed,
                    ue: b.ue,
                    burst_id: b.burst_id,
                    delay_ms,
                });
            }
        }
        let mut windows = csv::Reader::from_path(dir.join(WINDOWS_FILE))?;
        for row in windows.deserialize() {
            let w: WindowCsv = row?;
            self.prr.push(PrrRow {
                policy: policy.clone(),
                n_ues,
                mechanism: mechanism.clone(),
                seed,
                ue: w.ue,
                t: w.t,
                prr: w.prr,
            });
        }
        Ok(())
    }

    /// Writes `delay.csv` and `prr.csv`; headers are written even with no rows.
    pub fn write_to(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir)?;
        write_rows(&dir.join(DELAY_FILE), &self.delay, &["policy", "nUes", "mechanism", "seed", "ue", "burstId", "delayMs"])?;
        write_rows(&dir.join(PRR_FILE), &self.prr, &["policy", "nUes", "mechanism", "seed", "ue", "t", "prr"])?;
        Ok(())
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
