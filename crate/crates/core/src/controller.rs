//! RAN-AI controller: state construction, notification handling and cell KPIs.

use alloc::vec::Vec;

use crate::agent::{Action, StateVector, STATE_DIM};
use crate::app::{AppStatsWindow, ModeId};
use crate::ran::LinkWindow;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NotificationMechanism {
    /// The decision is applied by direct callback, with no delay or loss.
    #[default]
    Ideal,
    /// The decision travels as a downlink packet.
    Real,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ControllerConfig {
    pub period: SimTime,
    pub mechanism: NotificationMechanism,
    /// Packet-error probability applied to delivered notification packets.
    pub notification_loss_prob: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            period: SimTime::from_millis(100),
            mechanism: NotificationMechanism::Ideal,
            notification_loss_prob: 0.0,
        }
    }
}

pub const NOTIFICATION_BYTES: u32 = 12;

/// Decision sent to a UE: the action plus its IMSI and RNTI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Notification {
    pub action: Action,
    pub imsi: u32,
    pub rnti: u32,
    pub issued_at: SimTime,
    pub mechanism: NotificationMechanism,
}

impl Notification {
    /// 12-byte payload: action, IMSI, RNTI as little-endian u32.
    pub fn payload(&self) -> [u8; NOTIFICATION_BYTES as usize] {
        let mut out = [0; NOTIFICATION_BYTES as usize];
        out[0..4].copy_from_slice(&(self.action.0 as u32).to_le_bytes());
        out[4..8].copy_from_slice(&self.imsi.to_le_bytes());
        out[8..12].copy_from_slice(&self.rnti.to_le_bytes());
        out
    }

    pub fn parse_payload(bytes: &[u8; NOTIFICATION_BYTES as usize]) -> (Action, u32, u32) {
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        (Action(word(0) as u8), word(4), word(8))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NotificationOutcome {
    #[default]
    None,
    /// Applied by callback at issue time.
    Ideal,
    Pending,
    Delivered { at: SimTime },
    /// Dropped by the downlink packet-error model.
    Lost { at: SimTime },
    /// Not delivered before the next controller period.
    Expired { at: SimTime },
}

impl NotificationOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            NotificationOutcome::None => "none",
            NotificationOutcome::Ideal => "ideal",
            NotificationOutcome::Pending => "pending",
            NotificationOutcome::Delivered { .. } => "delivered",
            NotificationOutcome::Lost { .. } => "lost",
            NotificationOutcome::Expired { .. } => "expired",
        }
    }
}

/// Everything the state builder reads for one UE and one window.
#[derive(Clone, Copy, Debug)]
pub struct FeatureInputs<'a> {
    pub app: &'a AppStatsWindow,
    pub link: &'a LinkWindow,
    pub current_mode: ModeId,
    pub last_frame_bytes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureScales {
    pub delta_max: f64,
    pub n_modes: usize,
    pub max_frame_bytes: u64,
}

pub const GOODPUT_SCALE_MBPS: f64 = 100.0;
pub const SNR_SCALE_DB: f64 = 30.0;

/// Builds the 8-feature state:
///
/// 1. mean burst delay / max tolerated delay, clipped to `[0, 2]`
/// 2. window PRR
/// 3. uplink goodput in Mbit/s / 100
/// 4. mean uplink SNR in dB / 30, clipped to `[-1, 2]`
/// 5. RLC buffer occupancy fraction
/// 6. mean scheduler share
/// 7. current mode index / (modes - 1)
/// 8. last frame size / max configured frame size
pub fn build_state(inputs: &FeatureInputs<'_>, scales: &FeatureScales) -> StateVector {
    let app = inputs.app;
    let window_s = (app.window_end.saturating_sub(app.window_start)).as_secs_f64();
    let goodput_mbps = if window_s > 0.0 {
        app.bytes_received as f64 * 8.0 / window_s / 1e6
    } else {
        0.0
    };
    let mode_den = scales.n_modes.saturating_sub(1).max(1) as f64;
    let frame_den = scales.max_frame_bytes.max(1) as f64;
    let f: [f64; STATE_DIM] = [
        (app.mean_burst_delay / scales.delta_max).clamp(0.0, 2.0),
        app.prr.clamp(0.0, 1.0),
        goodput_mbps / GOODPUT_SCALE_MBPS,
        (inputs.link.mean_snr_db / SNR_SCALE_DB).clamp(-1.0, 2.0),
        inputs.link.buffer_fraction.clamp(0.0, 1.0),
        inputs.link.mean_share.clamp(0.0, 1.0),
        inputs.current_mode.0 as f64 / mode_den,
        (inputs.last_frame_bytes as f64 / frame_den).clamp(0.0, 1.0),
    ];
    StateVector(f)
}

/// Per-UE controller bookkeeping.
#[derive(Clone, Debug, Default)]
pub struct UeControl {
    pub applied: ModeId,
    /// Action and packet id of the notification still in flight.
    pub in_flight: Option<(Action, u64, usize)>,
    pub last_state: Option<StateVector>,
    pub last_action: Option<Action>,
    /// Outcome resolved since the previous update.
    pub last_outcome: NotificationOutcome,
}

impl UeControl {
    pub fn new(applied: ModeId) -> Self {
        UeControl {
            applied,
            ..Default::default()
        }
    }

    /// A notification is needed when the action differs from both the applied
    /// mode and any notification still in flight.
    pub fn needs_notification(&self, action: Action) -> bool {
        if let Some((pending, _, _)) = self.in_flight {
            return pending != action;
        }
        action.mode() != self.applied
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellReport {
    pub t: SimTime,
    /// UEs granted resources at least once in the window.
    pub active_ues: usize,
    pub served_bytes: u64,
    pub mean_share: f64,
}

pub fn collect_cell_kpis(t: SimTime, links: &[LinkWindow]) -> CellReport {
    let active: Vec<&LinkWindow> = links.iter().filter(|l| l.mean_share > 0.0).collect();
    CellReport {
        t,
        active_ues: active.len(),
        served_bytes: links.iter().map(|l| l.served_bytes).sum(),
        mean_share: if active.is_empty() {
            0.0
        } else {
            active.iter().map(|l| l.mean_share).sum::<f64>() / active.len() as f64
        },
    }
}
