//! Summary statistics over run outputs.

use alloc::vec::Vec;

/// Linear-interpolation percentile (`p` in `[0, 100]`) over unsorted samples:
/// rank `p/100 * (n - 1)` between the two nearest order statistics.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Some(percentile_sorted(&v, p))
}

pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = libm::floor(rank) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Arithmetic mean, accumulated as offsets from the first sample so that a
/// constant series averages to exactly that constant.
pub fn mean(samples: &[f64]) -> Option<f64> {
    let (&first, _) = samples.split_first()?;
    let offset: f64 = samples.iter().map(|x| x - first).sum();
    Some(first + offset / samples.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Distribution {
    pub count: usize,
    pub mean: Option<f64>,
    pub p25: Option<f64>,
    pub p50: Option<f64>,
    pub p75: Option<f64>,
    pub p95: Option<f64>,
}

impl Distribution {
    pub fn of(samples: &[f64]) -> Self {
        let mut v: Vec<f64> = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p| (!v.is_empty()).then(|| percentile_sorted(&v, p));
        Distribution {
            count: v.len(),
            mean: mean(&v),
            p25: q(25.0),
            p50: q(50.0),
            p75: q(75.0),
            p95: q(95.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolated_percentiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 100.0), Some(4.0));
        assert_eq!(percentile(&v, 50.0), Some(2.5));
        assert_eq!(percentile(&v, 25.0), Some(1.75));
        assert_eq!(percentile(&[7.0], 95.0), Some(7.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn distribution_summary() {
        let d = Distribution::of(&[10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(d.count, 5);
        assert_eq!(d.mean, Some(30.0));
        assert_eq!(d.p50, Some(30.0));
        assert_eq!(d.p95, Some(48.0));
        assert_eq!(Distribution::of(&[]).mean, None);
        assert_eq!(mean(&[0.88; 4000]), Some(0.88));
    }
}
