use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Two ring-adjacent buses count as bunched once their spacing stays below
/// `spacing_km` for at least `min_duration_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BunchingRule {
    pub spacing_km: f64,
    pub min_duration_s: f64,
}

impl Default for BunchingRule {
    fn default() -> Self {
        Self {
            spacing_km: 0.05,
            min_duration_s: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionSample {
    pub time_s: f64,
    pub offsets_km: Vec<f64>,
}

/// Streaming form of [`detect_bunching`], fed one position sample at a time.
#[derive(Debug, Clone)]
pub struct BunchingDetector {
    rule: BunchingRule,
    ring_km: f64,
    /// Start of the current close streak for each unordered pair.
    streaks: HashMap<(usize, usize), f64>,
    next: HashMap<(usize, usize), f64>,
    order: Vec<usize>,
    bunched: bool,
}

impl BunchingDetector {
    pub fn new(rule: BunchingRule, ring_km: f64) -> Self {
        Self {
            rule,
            ring_km,
            streaks: HashMap::new(),
            next: HashMap::new(),
            order: Vec::new(),
            bunched: false,
        }
    }

    pub fn observe(&mut self, time_s: f64, offsets_km: &[f64]) -> bool {
        let n = offsets_km.len();
        if self.bunched || n < 2 {
            return self.bunched;
        }
        self.order.clear();
        self.order.extend(0..n);
        self.order
            .sort_by(|&a, &b| offsets_km[a].total_cmp(&offsets_km[b]).then(a.cmp(&b)));
        self.next.clear();
        for k in 0..n {
            let b = self.order[k];
            let ahead = self.order[(k + 1) % n];
            let mut gap = offsets_km[ahead] - offsets_km[b];
            if k + 1 == n {
                gap += self.ring_km;
            }
            if gap < self.rule.spacing_km {
                let key = (b.min(ahead), b.max(ahead));
                let start = self.streaks.get(&key).copied().unwrap_or(time_s);
                self.next.insert(key, start);
                if time_s - start >= self.rule.min_duration_s {
                    self.bunched = true;
                }
            }
        }
        std::mem::swap(&mut self.streaks, &mut self.next);
        self.bunched
    }

    pub fn bunched(&self) -> bool {
        self.bunched
    }
}

/// True iff some pair of ring-adjacent buses stays closer than the rule's
/// spacing over consecutive samples spanning at least its minimum duration.
pub fn detect_bunching(samples: &[PositionSample], ring_km: f64, rule: &BunchingRule) -> bool {
    let mut detector = BunchingDetector::new(*rule, ring_km);
    samples
        .iter()
        .any(|s| detector.observe(s.time_s, &s.offsets_km))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(f: impl Fn(f64) -> Vec<f64>) -> Vec<PositionSample> {
        (0..=1440)
            .map(|k| {
                let t = k as f64 * 10.0;
                PositionSample { time_s: t, offsets_km: f(t) }
            })
            .collect()
    }

    #[test]
    fn even_spacing_never_bunches() {
        let s = samples(|t| (0..11).map(|b| (b as f64 * 2.0 + t / 100.0) % 22.0).collect());
        assert!(!detect_bunching(&s, 22.0, &BunchingRule::default()));
    }

    #[test]
    fn pinned_pair_bunches() {
        let s = samples(|_| vec![1.0, 1.0, 8.0, 15.0]);
        assert!(detect_bunching(&s, 21.35, &BunchingRule::default()));
    }

    #[test]
    fn short_encounters_do_not_count() {
        // close for 200 s out of every 400 s
        let s = samples(|t| {
            let close = (t as u64 / 200) % 2 == 0;
            vec![5.0, if close { 5.01 } else { 6.0 }, 12.0]
        });
        assert!(!detect_bunching(&s, 21.35, &BunchingRule::default()));
    }

    #[test]
    fn pair_identity_survives_overtaking() {
        // buses 0 and 1 swap order every sample but stay within 30 m
        let s = samples(|t| {
            let flip = (t as u64 / 10) % 2 == 0;
            if flip { vec![4.0, 4.03, 11.0] } else { vec![4.03, 4.0, 11.0] }
        });
        assert!(detect_bunching(&s, 21.35, &BunchingRule::default()));
    }
}
