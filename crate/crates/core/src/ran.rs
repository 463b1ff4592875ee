//! Abstract gNB <-> UE data plane.
//!
//! Each direction is a set of per-UE FIFO buffers served once per TTI by an
//! equal-share round-robin scheduler over a truncated-Shannon link. Packets
//! that do not fit in the RLC buffer are dropped; there is no HARQ.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;

use crate::channel::LinkBudgetConfig;
use crate::rng::RngStream;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Direction {
    Uplink,
    Downlink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PacketKind {
    AppFragment,
    DownlinkCommand,
    Notification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FragmentTag {
    pub burst_id: u64,
    pub index: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub owner: usize,
    pub direction: Direction,
    pub size_bytes: u32,
    pub created_at: SimTime,
    pub fragment: Option<FragmentTag>,
    pub kind: PacketKind,
    /// Undelivered packets are discarded once a TTI ends past this instant.
    pub deadline: Option<SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TtiConfig {
    pub tti: SimTime,
    pub mac_efficiency: f64,
    /// Spectral efficiency cap, bit/s/Hz.
    pub se_max: f64,
    pub snr_outage_db: f64,
}

impl Default for TtiConfig {
    fn default() -> Self {
        TtiConfig {
            tti: SimTime::from_millis(1),
            mac_efficiency: 0.8,
            se_max: 7.8,
            snr_outage_db: -5.0,
        }
    }
}

/// `eta * share * B * min(log2(1 + snr), se_max)`, zero in outage.
pub fn link_rate_bps(cfg: &TtiConfig, budget: &LinkBudgetConfig, snr_db: f64, share: f64) -> f64 {
    if snr_db < cfg.snr_outage_db || share <= 0.0 {
        return 0.0;
    }
    let snr = libm::pow(10.0, snr_db / 10.0);
    let se = libm::log2(1.0 + snr).min(cfg.se_max);
    cfg.mac_efficiency * share * budget.bandwidth_hz * se
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueResult {
    Accepted,
    Dropped,
}

/// Per-UE buffer plus the MAC/RLC observables the controller reads.
#[derive(Clone, Debug)]
pub struct UeLinkState {
    queue: VecDeque<Packet>,
    head_remaining: u32,
    pub rlc_buffer_bytes: u64,
    pub rlc_capacity_bytes: u64,
    pub snr_db: f64,
    pub share: f64,
    pub served_bytes_window: u64,
    window_share_sum: f64,
    window_snr_sum: f64,
    window_ttis: u32,
    pub offered_bytes: u64,
    pub drained_bytes: u64,
    pub dropped_bytes: u64,
    pub delivered_packets: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LinkWindow {
    pub served_bytes: u64,
    pub mean_share: f64,
    pub mean_snr_db: f64,
    pub buffer_fraction: f64,
}

impl UeLinkState {
    pub fn new(rlc_capacity_bytes: u64) -> Self {
        UeLinkState {
            queue: VecDeque::new(),
            head_remaining: 0,
            rlc_buffer_bytes: 0,
            rlc_capacity_bytes,
            snr_db: 0.0,
            share: 0.0,
            served_bytes_window: 0,
            window_share_sum: 0.0,
            window_snr_sum: 0.0,
            window_ttis: 0,
            offered_bytes: 0,
            drained_bytes: 0,
            dropped_bytes: 0,
            delivered_packets: 0,
        }
    }

    pub fn enqueue(&mut self, pkt: Packet) -> EnqueueResult {
        let size = pkt.size_bytes as u64;
        self.offered_bytes += size;
        if self.rlc_buffer_bytes + size > self.rlc_capacity_bytes {
            self.dropped_bytes += size;
            return EnqueueResult::Dropped;
        }
        if self.queue.is_empty() {
            self.head_remaining = pkt.size_bytes;
        }
        self.rlc_buffer_bytes += size;
        self.queue.push_back(pkt);
        EnqueueResult::Accepted
    }

    pub fn is_backlogged(&self) -> bool {
        self.rlc_buffer_bytes > 0
    }

    pub fn queued_packets(&self) -> usize {
        self.queue.len()
    }

    fn expire(&mut self, now: SimTime, expired: &mut Vec<Packet>) {
        if !self.queue.iter().any(|p| p.deadline.is_some_and(|d| d < now)) {
            return;
        }
        let head = self.queue.front().map(|p| (p.id, self.head_remaining));
        let mut kept = VecDeque::with_capacity(self.queue.len());
        for (i, p) in self.queue.drain(..).enumerate() {
            if p.deadline.is_some_and(|d| d < now) {
                let left = if i == 0 { self.head_remaining } else { p.size_bytes } as u64;
                self.rlc_buffer_bytes -= left;
                self.dropped_bytes += left;
                expired.push(p);
            } else {
                kept.push_back(p);
            }
        }
        self.queue = kept;
        self.head_remaining = match (self.queue.front(), head) {
            (Some(f), Some((id, rem))) if f.id == id => rem,
            (Some(f), _) => f.size_bytes,
            (None, _) => 0,
        };
    }

    fn drain(&mut self, mut budget: u64, delivered_at: SimTime, out: &mut Vec<(Packet, SimTime)>) -> u64 {
        let mut served = 0;
        while budget > 0 {
            let Some(_) = self.queue.front() else { break };
            let take = budget.min(self.head_remaining as u64);
            budget -= take;
            served += take;
            self.head_remaining -= take as u32;
            if self.head_remaining == 0 {
                let pkt = self.queue.pop_front().expect("head");
                self.delivered_packets += 1;
                out.push((pkt, delivered_at));
                self.head_remaining = self.queue.front().map_or(0, |p| p.size_bytes);
            }
        }
        self.rlc_buffer_bytes -= served;
        self.drained_bytes += served;
        served
    }

    /// Returns and resets the per-window accumulators.
    pub fn take_window(&mut self) -> LinkWindow {
        let n = self.window_ttis.max(1) as f64;
        let w = LinkWindow {
            served_bytes: self.served_bytes_window,
            mean_share: self.window_share_sum / n,
            mean_snr_db: if self.window_ttis == 0 {
                self.snr_db
            } else {
                self.window_snr_sum / n
            },
            buffer_fraction: if self.rlc_capacity_bytes == 0 {
                0.0
            } else {
                self.rlc_buffer_bytes as f64 / self.rlc_capacity_bytes as f64
            },
        };
        self.served_bytes_window = 0;
        self.window_share_sum = 0.0;
        self.window_snr_sum = 0.0;
        self.window_ttis = 0;
        w
    }
}

/// One row of the optional per-TTI debug log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TtiRecord {
    pub t: SimTime,
    pub ue: usize,
    pub share: f64,
    pub snr_db: f64,
    pub buffer_bytes: u64,
    pub served_bytes: u64,
}

/// One direction of the cell: a scheduler over every UE's buffer.
#[derive(Clone, Debug)]
pub struct RanLink {
    pub direction: Direction,
    pub cfg: TtiConfig,
    pub budget: LinkBudgetConfig,
    pub ues: Vec<UeLinkState>,
}

#[derive(Clone, Debug, Default)]
pub struct TtiOutcome {
    pub delivered: Vec<(Packet, SimTime)>,
    pub expired: Vec<Packet>,
}

impl TtiOutcome {
    pub fn clear(&mut self) {
        self.delivered.clear();
        self.expired.clear();
    }
}

impl RanLink {
    pub fn new(direction: Direction, cfg: TtiConfig, budget: LinkBudgetConfig, ues: usize, capacity: u64) -> Self {
        RanLink {
            direction,
            cfg,
            budget,
            ues: (0..ues).map(|_| UeLinkState::new(capacity)).collect(),
        }
    }

    pub fn set_snr(&mut self, ue: usize, snr_db: f64) {
        self.ues[ue].snr_db = snr_db;
    }

    pub fn enqueue(&mut self, pkt: Packet) -> EnqueueResult {
        self.ues[pkt.owner].enqueue(pkt)
    }

    /// Serves the TTI `[start, start + tti)`. Completed packets are stamped
    /// with the TTI end.
    pub fn serve_tti(&mut self, start: SimTime, out: &mut TtiOutcome, log: Option<&mut Vec<TtiRecord>>) {
        let end = start + self.cfg.tti;
        for ue in &mut self.ues {
            ue.expire(end, &mut out.expired);
        }
        let backlogged = self.ues.iter().filter(|u| u.is_backlogged()).count();
        let share = if backlogged == 0 { 0.0 } else { 1.0 / backlogged as f64 };
        let tti_s = self.cfg.tti.as_secs_f64();
        let mut log = log;
        for (i, ue) in self.ues.iter_mut().enumerate() {
            ue.share = if ue.is_backlogged() { share } else { 0.0 };
            let rate = link_rate_bps(&self.cfg, &self.budget, ue.snr_db, ue.share);
            let budget = libm::floor(rate * tti_s / 8.0) as u64;
            let served = ue.drain(budget, end, &mut out.delivered);
            ue.served_bytes_window += served;
            ue.window_share_sum += ue.share;
            ue.window_snr_sum += ue.snr_db;
            ue.window_ttis += 1;
            if let Some(log) = log.as_deref_mut() {
                log.push(TtiRecord {
                    t: start,
                    ue: i,
                    share: ue.share,
                    snr_db: ue.snr_db,
                    buffer_bytes: ue.rlc_buffer_bytes,
                    served_bytes: served,
                });
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Delivered { at: SimTime },
    Lost,
}

/// Applies the downlink packet-error model to a packet the scheduler drained.
pub fn downlink_outcome(delivered_at: SimTime, loss_prob: f64, rng: &mut RngStream) -> DeliveryOutcome {
    if loss_prob > 0.0 && rng.random::<f64>() < loss_prob {
        DeliveryOutcome::Lost
    } else {
        DeliveryOutcome::Delivered { at: delivered_at }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pkt(id: u64, owner: usize, size: u32) -> Packet {
        Packet {
            id,
            owner,
            direction: Direction::Uplink,
            size_bytes: size,
            created_at: SimTime::ZERO,
            fragment: None,
            kind: PacketKind::AppFragment,
            deadline: None,
        }
    }

    #[test]
    fn enqueue_until_full() {
        let mut ue = UeLinkState::new(1_000_000);
        assert_eq!(ue.enqueue(pkt(0, 0, 1460)), EnqueueResult::Accepted);
        assert_eq!(ue.rlc_buffer_bytes, 1460);
        let mut full = UeLinkState::new(1460);
        assert_eq!(full.enqueue(pkt(0, 0, 1460)), EnqueueResult::Accepted);
        assert_eq!(full.enqueue(pkt(1, 0, 1)), EnqueueResult::Dropped);
        assert_eq!(full.dropped_bytes, 1);
    }

    #[test]
    fn rate_formula() {
        let cfg = TtiConfig::default();
        let budget = LinkBudgetConfig::default();
        // snr 15.0103 dB -> linear 31.7 -> log2(32.7) = 5.0312
        let snr = 15.01029995663981;
        let se = libm::log2(1.0 + libm::pow(10.0, snr / 10.0));
        assert_relative_eq!(se, 5.031, epsilon = 1e-3);
        let r = link_rate_bps(&cfg, &budget, snr, 1.0);
        assert_relative_eq!(r, 0.8 * 5e7 * se, max_relative = 1e-12);
        assert!((r / 1e6 - 201.2).abs() < 0.2);
        assert_eq!(link_rate_bps(&cfg, &budget, -6.0, 1.0), 0.0);
        assert_eq!(link_rate_bps(&cfg, &budget, 20.0, 0.0), 0.0);
        // capped
        assert_relative_eq!(link_rate_bps(&cfg, &budget, 60.0, 0.5), 0.8 * 0.5 * 5e7 * 7.8);
    }

    #[test]
    fn equal_share_and_fifo() {
        let mut link = RanLink::new(Direction::Uplink, TtiConfig::default(), LinkBudgetConfig::default(), 5, 10_000_000);
        for ue in 0..5 {
            link.set_snr(ue, 20.0);
            for k in 0..3 {
                link.enqueue(pkt(ue as u64 * 10 + k, ue, 100_000));
            }
        }
        let mut out = TtiOutcome::default();
        link.serve_tti(SimTime::ZERO, &mut out, None);
        let total: f64 = link.ues.iter().map(|u| u.share).sum();
        assert_relative_eq!(total, 1.0);
        assert!(link.ues.iter().all(|u| (u.share - 0.2).abs() < 1e-15));
        for _ in 0..100 {
            link.serve_tti(SimTime::ZERO, &mut out, None);
        }
        for ue in 0..5 {
            let ids: Vec<u64> = out.delivered.iter().filter(|(p, _)| p.owner == ue).map(|(p, _)| p.id).collect();
            let mut sorted = ids.clone();
            sorted.sort();
            assert_eq!(ids, sorted);
        }
    }

    #[test]
    fn drain_time_matches_closed_form() {
        // 2 MB at an effective 40 Mbit/s: 0.4 s
        let cfg = TtiConfig::default();
        let budget = LinkBudgetConfig {
            bandwidth_hz: 40e6 / (0.8 * 7.8),
            ..Default::default()
        };
        let mut link = RanLink::new(Direction::Uplink, cfg, budget, 1, 3_000_000);
        link.set_snr(0, 40.0);
        let rate = link_rate_bps(&cfg, &budget, 40.0, 1.0);
        assert_relative_eq!(rate, 40e6, max_relative = 1e-12);
        for i in 0..2_000 {
            link.enqueue(pkt(i, 0, 1_000));
        }
        let mut out = TtiOutcome::default();
        let mut t = SimTime::ZERO;
        while link.ues[0].is_backlogged() {
            link.serve_tti(t, &mut out, None);
            t = t + cfg.tti;
        }
        let last = out.delivered.last().unwrap().1;
        let expected = 2_000_000.0 * 8.0 / 40e6;
        assert!((last.as_secs_f64() - expected).abs() <= cfg.tti.as_secs_f64());
    }

    #[test]
    fn partial_packets_persist_and_bytes_conserve() {
        let mut link = RanLink::new(Direction::Uplink, TtiConfig::default(), LinkBudgetConfig::default(), 1, 50_000);
        link.set_snr(0, 0.0);
        for i in 0..40 {
            link.enqueue(pkt(i, 0, 1460));
        }
        let mut out = TtiOutcome::default();
        link.serve_tti(SimTime::ZERO, &mut out, None);
        let u = &link.ues[0];
        assert_eq!(u.offered_bytes, u.drained_bytes + u.dropped_bytes + u.rlc_buffer_bytes);
        assert!(u.drained_bytes > 0);
    }

    #[test]
    fn expired_packets_removed() {
        let mut link = RanLink::new(Direction::Downlink, TtiConfig::default(), LinkBudgetConfig::default(), 1, 1_000_000);
        link.set_snr(0, -20.0);
        let mut p = pkt(1, 0, 12);
        p.kind = PacketKind::Notification;
        p.deadline = Some(SimTime::from_millis(100));
        link.enqueue(p);
        let mut out = TtiOutcome::default();
        let mut t = SimTime::ZERO;
        while out.expired.is_empty() {
            link.serve_tti(t, &mut out, None);
            t = t + SimTime::from_millis(1);
        }
        assert_eq!(t, SimTime::from_millis(101));
        assert_eq!(link.ues[0].rlc_buffer_bytes, 0);
        assert!(out.delivered.is_empty());
    }

    #[test]
    fn idle_downlink_delivers_small_packet_within_one_tti() {
        let mut link = RanLink::new(Direction::Downlink, TtiConfig::default(), LinkBudgetConfig::default(), 1, 1_000_000);
        link.set_snr(0, 10.0);
        link.enqueue(pkt(1, 0, 12));
        let mut out = TtiOutcome::default();
        link.serve_tti(SimTime::from_secs(5), &mut out, None);
        assert_eq!(out.delivered[0].1, SimTime::from_micros(5_001_000));
    }
}
