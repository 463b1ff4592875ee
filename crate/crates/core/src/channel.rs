//! Per-link propagation loss over time, link budget and SNR.
//!
//! Loss between snapshots follows a zero-order hold: a query returns the most
//! recent snapshot at or before the query time, and the first snapshot for
//! queries that precede it.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::RngStream;
use crate::time::SimTime;

pub type NodeId = u32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub time_s: f64,
    pub tx: NodeId,
    pub rx: NodeId,
    pub loss_db: f64,
    pub small_scale_db: Option<f64>,
}

impl TraceEntry {
    pub fn total_loss_db(&self) -> f64 {
        self.loss_db + self.small_scale_db.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("entry {index}: timestamp {time_s} goes backwards")]
    NonMonotone { index: usize, time_s: f64 },
    #[error("entry {index}: link {tx}->{rx} duplicated at t={time_s}")]
    DuplicateLink {
        index: usize,
        tx: NodeId,
        rx: NodeId,
        time_s: f64,
    },
    #[error("entry {index}: {what} must be finite and non-negative")]
    InvalidValue { index: usize, what: &'static str },
    #[error("no trace data for link {tx}->{rx}")]
    UnknownLink { tx: NodeId, rx: NodeId },
    #[error("vehicle {vehicle} has no defined position at t={time_s}s")]
    OffPath { vehicle: NodeId, time_s: f64 },
}

/// Validated, immutable channel trace with a per-link lookup index.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelTrace {
    entries: Vec<TraceEntry>,
    time_step: f64,
    links: BTreeMap<(NodeId, NodeId), LinkSeries>,
}

#[derive(Clone, Debug, PartialEq, Default)]
struct LinkSeries {
    times: Vec<SimTime>,
    loss: Vec<f64>,
}

impl ChannelTrace {
    /// Builds a trace from rows whose timestamps are non-decreasing. Rows that
    /// share a timestamp are reordered by `(tx, rx)`.
    pub fn from_entries(mut entries: Vec<TraceEntry>) -> Result<Self, ChannelError> {
        for (i, e) in entries.iter().enumerate() {
            if !e.time_s.is_finite() || e.time_s < 0.0 {
                return Err(ChannelError::InvalidValue { index: i, what: "time" });
            }
            if !e.loss_db.is_finite() || e.loss_db < 0.0 {
                return Err(ChannelError::InvalidValue { index: i, what: "lossDb" });
            }
            if let Some(s) = e.small_scale_db {
                if !s.is_finite() {
                    return Err(ChannelError::InvalidValue {
                        index: i,
                        what: "smallScaleDb",
                    });
                }
            }
            if i > 0 && e.time_s < entries[i - 1].time_s {
                return Err(ChannelError::NonMonotone {
                    index: i,
                    time_s: e.time_s,
                });
            }
        }
        // stable: equal keys keep file order, duplicates end up adjacent
        entries.sort_by(|a, b| {
            a.time_s
                .total_cmp(&b.time_s)
                .then(a.tx.cmp(&b.tx))
                .then(a.rx.cmp(&b.rx))
        });
        let mut links: BTreeMap<(NodeId, NodeId), LinkSeries> = BTreeMap::new();
        let mut time_step = f64::INFINITY;
        for (i, e) in entries.iter().enumerate() {
            if i > 0 {
                let prev = &entries[i - 1];
                if prev.time_s == e.time_s && prev.tx == e.tx && prev.rx == e.rx {
                    return Err(ChannelError::DuplicateLink {
                        index: i,
                        tx: e.tx,
                        rx: e.rx,
                        time_s: e.time_s,
                    });
                }
                let dt = e.time_s - prev.time_s;
                if dt > 0.0 && dt < time_step {
                    time_step = dt;
                }
            }
            let series = links.entry((e.tx, e.rx)).or_default();
            series.times.push(SimTime::from_secs_f64(e.time_s));
            series.loss.push(e.total_loss_db());
        }
        if !time_step.is_finite() {
            time_step = 0.0;
        }
        Ok(ChannelTrace {
            entries,
            time_step,
            links,
        })
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    /// Smallest positive gap between snapshots, 0 for a single snapshot.
    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.links.keys().copied()
    }

    pub fn has_link(&self, tx: NodeId, rx: NodeId) -> bool {
        self.links.contains_key(&(tx, rx))
    }

    /// Number of distinct snapshot timestamps.
    pub fn snapshot_count(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for e in &self.entries {
            if last != Some(e.time_s) {
                n += 1;
                last = Some(e.time_s);
            }
        }
        n
    }

    /// Total loss (large- plus small-scale) in dB for `tx -> rx` at `t`.
    pub fn loss_at(&self, tx: NodeId, rx: NodeId, t: SimTime) -> Result<f64, ChannelError> {
        let series = self
            .links
            .get(&(tx, rx))
            .ok_or(ChannelError::UnknownLink { tx, rx })?;
        let idx = series.times.partition_point(|&s| s <= t);
        Ok(series.loss[idx.saturating_sub(1)])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LinkBudgetConfig {
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Informational only; the abstract PHY does not depend on it.
    pub carrier_frequency_hz: f64,
}

impl Default for LinkBudgetConfig {
    fn default() -> Self {
        LinkBudgetConfig {
            tx_power_dbm: 23.0,
            bandwidth_hz: 50e6,
            noise_figure_db: 5.0,
            carrier_frequency_hz: 3.5e9,
        }
    }
}

/// Thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

impl LinkBudgetConfig {
    pub fn rx_power_dbm(&self, loss_db: f64) -> f64 {
        self.tx_power_dbm - loss_db
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_HZ + 10.0 * libm::log10(self.bandwidth_hz) + self.noise_figure_db
    }

    pub fn snr_db(&self, rx_dbm: f64) -> f64 {
        rx_dbm - self.noise_floor_dbm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Piecewise-linear trajectories, one per vehicle.
#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WaypointSet {
    pub vehicles: Vec<(NodeId, Vec<Waypoint>)>,
}

impl WaypointSet {
    pub fn position(&self, vehicle: usize, t: f64) -> Result<(f64, f64), ChannelError> {
        let (id, path) = &self.vehicles[vehicle];
        let off = ChannelError::OffPath {
            vehicle: *id,
            time_s: t,
        };
        let first = path.first().ok_or(off.clone())?;
        let last = path.last().ok_or(off.clone())?;
        // tolerate float noise on the sampling grid
        const EPS: f64 = 1e-9;
        if t < first.t - EPS || t > last.t + EPS {
            return Err(off);
        }
        let k = path.partition_point(|w| w.t <= t);
        if k == 0 {
            return Ok((first.x, first.y));
        }
        if k == path.len() {
            return Ok((last.x, last.y));
        }
        let (a, b) = (&path[k - 1], &path[k]);
        let f = (t - a.t) / (b.t - a.t);
        Ok((a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthChannelConfig {
    pub gnb_id: NodeId,
    pub gnb_x: f64,
    pub gnb_y: f64,
    /// Path loss at the reference distance, dB.
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exponent: f64,
    pub shadowing_sigma_db: f64,
    /// AR(1) coefficient between consecutive snapshots.
    pub shadowing_correlation: f64,
    pub time_step_s: f64,
    pub duration_s: f64,
}

impl Default for SynthChannelConfig {
    fn default() -> Self {
        SynthChannelConfig {
            gnb_id: 0,
            gnb_x: 0.0,
            gnb_y: 0.0,
            pl0_db: 61.0,
            d0_m: 10.0,
            exponent: 2.7,
            shadowing_sigma_db: 4.0,
            shadowing_correlation: 0.9,
            time_step_s: 0.1,
            duration_s: 80.0,
        }
    }
}

impl SynthChannelConfig {
    /// Log-distance path loss; distances below `d0_m` are held at `pl0_db`.
    pub fn path_loss_db(&self, distance_m: f64) -> f64 {
        let d = if distance_m > self.d0_m { distance_m } else { self.d0_m };
        self.pl0_db + 10.0 * self.exponent * libm::log10(d / self.d0_m)
    }
}

/// Samples one uplink loss series per vehicle (vehicle -> gNB) on a regular grid.
pub fn synthesize_trace(
    mobility: &WaypointSet,
    model: &SynthChannelConfig,
    rng: &mut RngStream,
) -> Result<ChannelTrace, ChannelError> {
    let steps = libm::round(model.duration_s / model.time_step_s) as usize;
    let rho = model.shadowing_correlation.clamp(0.0, 1.0);
    let innovation = libm::sqrt(1.0 - rho * rho);
    let mut shadow: Vec<f64> = Vec::with_capacity(mobility.vehicles.len());
    let mut entries = Vec::with_capacity((steps + 1) * mobility.vehicles.len());
    let mut order: Vec<usize> = (0..mobility.vehicles.len()).collect();
    order.sort_by_key(|&i| mobility.vehicles[i].0);
    for k in 0..=steps {
        let t = k as f64 * model.time_step_s;
        for (slot, &v) in order.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            let s = if k == 0 {
                shadow.push(model.shadowing_sigma_db * z);
                shadow[slot]
            } else {
                shadow[slot] = rho * shadow[slot] + innovation * model.shadowing_sigma_db * z;
                shadow[slot]
            };
            let (x, y) = mobility.position(v, t)?;
            let d = libm::hypot(x - model.gnb_x, y - model.gnb_y);
            let loss = (model.path_loss_db(d) + s).max(0.0);
            entries.push(TraceEntry {
                time_s: t,
                tx: mobility.vehicles[v].0,
                rx: model.gnb_id,
                loss_db: loss,
                small_scale_db: None,
            });
        }
    }
    ChannelTrace::from_entries(entries)
}

/// Straight-road default mobility: vehicle `i` drives along `y = lane_offset_m`
/// at `speed_mps`, starting `spacing_m * i` metres behind the first one.
pub fn straight_road(
    vehicles: u32,
    first_id: NodeId,
    start_x_m: f64,
    lane_offset_m: f64,
    speed_mps: f64,
    spacing_m: f64,
    duration_s: f64,
) -> WaypointSet {
    let mut set = WaypointSet::default();
    for i in 0..vehicles {
        let x0 = start_x_m - spacing_m * i as f64;
        set.vehicles.push((
            first_id + i,
            alloc::vec![
                Waypoint { t: 0.0, x: x0, y: lane_offset_m },
                Waypoint {
                    t: duration_s,
                    x: x0 + speed_mps * duration_s,
                    y: lane_offset_m,
                },
            ],
        ));
    }
    set
}
