//! Sensor-streaming application: periodic frames, fragmentation into
//! MTU-sized packets, sink-side reassembly and windowed statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::rng::RngStream;
use crate::time::SimTime;

/// Index into a [`ModeTable`]; also the agent's action index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ModeId(pub u8);

impl ModeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ModeSpec {
    pub name: String,
    /// Mean frame size used by the distribution-based frame source.
    pub mean_frame_bytes: u64,
    /// Symmetric Chamfer distance of the reconstructed point cloud.
    pub chamfer_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ModeTable {
    pub modes: Vec<ModeSpec>,
}

impl Default for ModeTable {
    fn default() -> Self {
        let m = |name: &str, bytes, cd| ModeSpec {
            name: name.into(),
            mean_frame_bytes: bytes,
            chamfer_distance: cd,
        };
        ModeTable {
            modes: vec![
                m("C-R", 1_900_000, 0.0),
                m("C-SC", 600_000, 5.4),
                m("C-SA", 120_000, 35.1),
            ],
        }
    }
}

impl ModeTable {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn get(&self, id: ModeId) -> &ModeSpec {
        &self.modes[id.index()]
    }

    pub fn by_name(&self, name: &str) -> Option<ModeId> {
        self.modes.iter().position(|m| m.name == name).map(|i| ModeId(i as u8))
    }

    pub fn name(&self, id: ModeId) -> &str {
        &self.modes[id.index()].name
    }

    pub fn contains(&self, id: ModeId) -> bool {
        id.index() < self.modes.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LoopMode {
    #[default]
    RestartAtEnd,
    StopAtEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameTraceError {
    #[error("frame {frame} has no size for mode {mode}")]
    MissingMode { frame: u32, mode: String },
    #[error("frame indices must be contiguous from 0; found {found} where {expected} was expected")]
    Gap { expected: u32, found: u32 },
    #[error("frame {frame}, mode {mode}: size must be positive")]
    ZeroSize { frame: u32, mode: String },
    #[error("unknown mode {0}")]
    UnknownMode(String),
    #[error("frame trace is empty")]
    Empty,
}

/// Per-frame, per-mode sizes, indexed `[frame][mode]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTrace {
    sizes: Vec<Vec<u64>>,
    pub loop_mode: LoopMode,
}

impl FrameTrace {
    /// Rows are `(frame_index, mode_name, size_bytes)` in any order.
    pub fn from_rows<'a, I>(rows: I, modes: &ModeTable, loop_mode: LoopMode) -> Result<Self, FrameTraceError>
    where
        I: IntoIterator<Item = (u32, &'a str, u64)>,
    {
        let mut map: BTreeMap<u32, Vec<Option<u64>>> = BTreeMap::new();
        for (frame, mode, size) in rows {
            let id = modes
                .by_name(mode)
                .ok_or_else(|| FrameTraceError::UnknownMode(mode.into()))?;
            if size == 0 {
                return Err(FrameTraceError::ZeroSize {
                    frame,
                    mode: mode.into(),
                });
            }
            map.entry(frame).or_insert_with(|| vec![None; modes.len()])[id.index()] = Some(size);
        }
        if map.is_empty() {
            return Err(FrameTraceError::Empty);
        }
        let mut sizes = Vec::with_capacity(map.len());
        for (expected, (frame, row)) in map.into_iter().enumerate() {
            if frame != expected as u32 {
                return Err(FrameTraceError::Gap {
                    expected: expected as u32,
                    found: frame,
                });
            }
            if let Some(missing) = row.iter().position(Option::is_none) {
                return Err(FrameTraceError::MissingMode {
                    frame,
                    mode: modes.modes[missing].name.clone(),
                });
            }
            sizes.push(row.into_iter().flatten().collect());
        }
        Ok(FrameTrace { sizes, loop_mode })
    }

    pub fn frames(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, frame: usize, mode: ModeId) -> u64 {
        self.sizes[frame][mode.index()]
    }

    pub fn rows(&self) -> impl Iterator<Item = (u32, ModeId, u64)> + '_ {
        self.sizes.iter().enumerate().flat_map(|(f, row)| {
            row.iter()
                .enumerate()
                .map(move |(m, &s)| (f as u32, ModeId(m as u8), s))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FrameSource {
    /// Mode mean size with symmetric uniform relative jitter.
    Distribution { jitter: f64 },
    Trace(FrameTrace),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Burst {
    pub burst_id: u64,
    pub ue: usize,
    pub mode: ModeId,
    pub total_bytes: u64,
    pub generated_at: SimTime,
    pub fragment_count: u32,
}

pub fn fragment_count(total_bytes: u64, mtu_payload: u32) -> u32 {
    total_bytes.div_ceil(mtu_payload as u64) as u32
}

impl Burst {
    /// Fragment sizes in index order; all but the last are `mtu_payload`.
    pub fn fragment_sizes(&self, mtu_payload: u32) -> impl Iterator<Item = (u32, u32)> {
        let total = self.total_bytes;
        let mtu = mtu_payload as u64;
        (0..self.fragment_count).map(move |i| {
            let off = i as u64 * mtu;
            (i, (total - off).min(mtu) as u32)
        })
    }
}

/// Sender side of one UE's application.
#[derive(Clone, Debug)]
pub struct AppSource {
    pub ue: usize,
    mode: ModeId,
    frame_index: usize,
    halted: bool,
    last_frame_bytes: u64,
}

impl AppSource {
    pub fn new(ue: usize, mode: ModeId) -> Self {
        AppSource {
            ue,
            mode,
            frame_index: 0,
            halted: false,
            last_frame_bytes: 0,
        }
    }

    pub fn mode(&self) -> ModeId {
        self.mode
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn last_frame_bytes(&self) -> u64 {
        self.last_frame_bytes
    }

    /// Takes effect from the next generated frame.
    pub fn set_mode(&mut self, mode: ModeId) {
        self.mode = mode;
    }

    /// Produces the next frame, or `None` once a stop-at-end trace runs out.
    pub fn generate_frame(
        &mut self,
        t: SimTime,
        burst_id: u64,
        modes: &ModeTable,
        source: &FrameSource,
        mtu_payload: u32,
        rng: &mut RngStream,
    ) -> Option<Burst> {
        if self.halted {
            return None;
        }
        let total_bytes = match source {
            FrameSource::Distribution { jitter } => {
                // one draw per frame regardless of mode keeps the stream aligned
                let u: f64 = rng.random();
                let mean = modes.get(self.mode).mean_frame_bytes as f64;
                let f = 1.0 + jitter * (2.0 * u - 1.0);
                (libm::round(mean * f) as u64).max(1)
            }
            FrameSource::Trace(trace) => {
                if self.frame_index >= trace.frames() {
                    match trace.loop_mode {
                        LoopMode::RestartAtEnd => self.frame_index = 0,
                        LoopMode::StopAtEnd => {
                            self.halted = true;
                            return None;
                        }
                    }
                }
                trace.size(self.frame_index, self.mode)
            }
        };
        self.frame_index += 1;
        self.last_frame_bytes = total_bytes;
        Some(Burst {
            burst_id,
            ue: self.ue,
            mode: self.mode,
            total_bytes,
            generated_at: t,
            fragment_count: fragment_count(total_bytes, mtu_payload),
        })
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BurstRecord {
    pub ue: usize,
    pub burst_id: u64,
    pub mode: ModeId,
    pub total_bytes: u64,
    pub generated_at: SimTime,
    pub completed_at: Option<SimTime>,
}

impl BurstRecord {
    pub fn delay(&self) -> Option<SimTime> {
        self.completed_at.map(|c| c - self.generated_at)
    }
}

#[derive(Clone, Debug)]
struct Pending {
    burst: Burst,
    seen: Vec<u64>,
    received: u32,
}

/// Receiver side: reassembles bursts from fragments in any order.
#[derive(Clone, Debug, Default)]
pub struct BurstSink {
    pending: BTreeMap<u64, Pending>,
    pub duplicates: u64,
    pub unknown: u64,
}

impl BurstSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, burst: Burst) {
        let words = (burst.fragment_count as usize).div_ceil(64);
        self.pending.insert(
            burst.burst_id,
            Pending {
                burst,
                seen: vec![0; words],
                received: 0,
            },
        );
    }

    /// Returns the burst once its last missing fragment arrives.
    pub fn on_fragment(&mut self, burst_id: u64, index: u32, t: SimTime) -> Option<BurstRecord> {
        let Some(p) = self.pending.get_mut(&burst_id) else {
            self.unknown += 1;
            return None;
        };
        let (w, b) = ((index / 64) as usize, index % 64);
        if index >= p.burst.fragment_count || p.seen[w] & (1 << b) != 0 {
            self.duplicates += 1;
            return None;
        }
        p.seen[w] |= 1 << b;
        p.received += 1;
        if p.received < p.burst.fragment_count {
            return None;
        }
        let p = self.pending.remove(&burst_id).expect("pending");
        Some(BurstRecord {
            ue: p.burst.ue,
            burst_id,
            mode: p.burst.mode,
            total_bytes: p.burst.total_bytes,
            generated_at: p.burst.generated_at,
            completed_at: Some(t),
        })
    }

    /// Bursts still waiting for fragments (never completed at end of run).
    pub fn incomplete(&self) -> impl Iterator<Item = BurstRecord> + '_ {
        self.pending.values().map(|p| BurstRecord {
            ue: p.burst.ue,
            burst_id: p.burst.burst_id,
            mode: p.burst.mode,
            total_bytes: p.burst.total_bytes,
            generated_at: p.burst.generated_at,
            completed_at: None,
        })
    }

    pub fn fragments_received(&self, burst_id: u64) -> Option<u32> {
        self.pending.get(&burst_id).map(|p| p.received)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AppStatsWindow {
    pub ue: usize,
    pub window_start: SimTime,
    pub window_end: SimTime,
    pub bursts_sent: u64,
    pub bursts_received: u64,
    pub bytes_received: u64,
    /// Seconds; 0 when no burst completed (see `delay_defined`).
    pub mean_burst_delay: f64,
    pub delay_defined: bool,
    pub prr: f64,
}

/// Windowed counters for one UE.
#[derive(Clone, Debug)]
pub struct StatsCalculator {
    pub ue: usize,
    window_start: SimTime,
    bursts_sent: u64,
    bursts_received: u64,
    bytes_received: u64,
    delay_sum_us: u64,
    pub total_bytes_received: u64,
    pub total_bursts_sent: u64,
    pub total_bursts_received: u64,
}

impl StatsCalculator {
    pub fn new(ue: usize) -> Self {
        StatsCalculator {
            ue,
            window_start: SimTime::ZERO,
            bursts_sent: 0,
            bursts_received: 0,
            bytes_received: 0,
            delay_sum_us: 0,
            total_bytes_received: 0,
            total_bursts_sent: 0,
            total_bursts_received: 0,
        }
    }

    pub fn on_burst_sent(&mut self) {
        self.bursts_sent += 1;
        self.total_bursts_sent += 1;
    }

    pub fn on_bytes(&mut self, n: u64) {
        self.bytes_received += n;
        self.total_bytes_received += n;
    }

    pub fn on_burst_received(&mut self, delay: SimTime) {
        self.bursts_received += 1;
        self.total_bursts_received += 1;
        self.delay_sum_us += delay.as_micros();
    }

    /// Closes the current window at `t` and starts a new one.
    ///
    /// PRR is capped at 1 (a window may complete bursts generated in an
    /// earlier window) and is 1 for a window in which nothing was generated.
    pub fn close_window(&mut self, t: SimTime) -> AppStatsWindow {
        let delay_defined = self.bursts_received > 0;
        let mean = if delay_defined {
            self.delay_sum_us as f64 / self.bursts_received as f64 / 1e6
        } else {
            0.0
        };
        let prr = if self.bursts_sent == 0 {
            1.0
        } else {
            (self.bursts_received as f64 / self.bursts_sent as f64).min(1.0)
        };
        let w = AppStatsWindow {
            ue: self.ue,
            window_start: self.window_start,
            window_end: t,
            bursts_sent: self.bursts_sent,
            bursts_received: self.bursts_received,
            bytes_received: self.bytes_received,
            mean_burst_delay: mean,
            delay_defined,
            prr,
        };
        self.window_start = t;
        self.bursts_sent = 0;
        self.bursts_received = 0;
        self.bytes_received = 0;
        self.delay_sum_us = 0;
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CbrConfig {
    pub enabled: bool,
    pub packet_bytes: u32,
    pub interval: SimTime,
}

impl Default for CbrConfig {
    fn default() -> Self {
        CbrConfig {
            enabled: true,
            packet_bytes: 200,
            interval: SimTime::from_millis(5),
        }
    }
}

impl CbrConfig {
    pub fn rate_bps(&self) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        self.packet_bytes as f64 * 8.0 / self.interval.as_secs_f64()
    }

    /// Packets emitted over `[0, duration)`.
    pub fn packets_in(&self, duration: SimTime) -> u64 {
        if !self.enabled {
            return 0;
        }
        duration.as_micros().div_ceil(self.interval.as_micros())
    }
}
