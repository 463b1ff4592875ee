use crate::app::AppStatsWindow;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RewardConfig {
    /// Weight of the distortion term against the delay term, in `[0, 1]`.
    pub alpha: f64,
    /// Maximum tolerated mean burst delay, seconds.
    pub delta_max: f64,
    pub prr_min: f64,
    /// Maximum tolerated Chamfer distance.
    pub cd_max: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 1.0,
            delta_max: 0.050,
            prr_min: 1.0,
            cd_max: 45.0,
        }
    }
}

impl RewardConfig {
    pub fn qos_met(&self, mean_delay: f64, prr: f64) -> bool {
        mean_delay < self.delta_max && prr >= self.prr_min
    }

    /// Distortion-only quality term, `(cd_max - cd) / cd_max` clipped to `[0, 1]`.
    pub fn qoe(&self, chamfer_distance: f64) -> f64 {
        ((self.cd_max - chamfer_distance) / self.cd_max).clamp(0.0, 1.0)
    }

    /// Zero when the QoS gate fails, otherwise the weighted delay/distortion score.
    pub fn reward(&self, mean_delay: f64, prr: f64, chamfer_distance: f64) -> f64 {
        if !self.qos_met(mean_delay, prr) {
            return 0.0;
        }
        let delay_term = (self.delta_max - mean_delay) / self.delta_max;
        let cd_term = (self.cd_max - chamfer_distance) / self.cd_max;
        ((1.0 - self.alpha) * delay_term + self.alpha * cd_term).clamp(0.0, 1.0)
    }
}

pub fn compute_reward(cfg: &RewardConfig, window: &AppStatsWindow, chamfer_distance: f64) -> f64 {
    cfg.reward(window.mean_burst_delay, window.prr, chamfer_distance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_values() {
        let cfg = RewardConfig::default();
        assert!((cfg.reward(0.030, 1.0, 5.4) - 0.88).abs() < 1e-12);
        assert!((cfg.reward(0.030, 1.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((cfg.reward(0.010, 1.0, 35.1) - 0.22).abs() < 1e-12);
        assert_eq!(cfg.reward(0.060, 1.0, 0.0), 0.0);
        assert_eq!(cfg.reward(0.050, 1.0, 0.0), 0.0);
        assert_eq!(cfg.reward(0.010, 0.99, 0.0), 0.0);
        let delay_only = RewardConfig { alpha: 0.0, ..cfg };
        assert!((delay_only.reward(0.025, 1.0, 35.1) - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded(alpha in 0.0f64..=1.0, d in 0.0f64..0.2, prr in 0.0f64..=1.0, cd in 0.0f64..60.0) {
            let cfg = RewardConfig { alpha, ..Default::default() };
            let r = cfg.reward(d, prr, cd);
            prop_assert!((0.0..=1.0).contains(&r));
            if d >= cfg.delta_max || prr < cfg.prr_min {
                prop_assert_eq!(r, 0.0);
            }
        }

        #[test]
        fn decreasing_in_delay(alpha in 0.0f64..0.99, a in 0.0f64..0.049, b in 0.0f64..0.049, cd in 0.0f64..45.0) {
            prop_assume!(a < b);
            let cfg = RewardConfig { alpha, ..Default::default() };
            prop_assert!(cfg.reward(a, 1.0, cd) > cfg.reward(b, 1.0, cd));
        }

        #[test]
        fn decreasing_in_distortion(alpha in 0.01f64..=1.0, d in 0.0f64..0.049, a in 0.0f64..45.0, b in 0.0f64..45.0) {
            prop_assume!(a < b);
            let cfg = RewardConfig { alpha, ..Default::default() };
            prop_assert!(cfg.reward(d, 1.0, a) > cfg.reward(d, 1.0, b));
        }
    }
}
