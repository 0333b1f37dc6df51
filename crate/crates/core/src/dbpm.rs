//! Dynamic bad-pair mining: per-batch loss history, per-epoch Gaussian
//! statistics, tail thresholds, and the smooth weight reduction that
//! produces the weighted loss.
//!
//! A batch whose decision value falls inside `[mu - alpha*sigma, mu + beta*sigma]`
//! keeps weight 1; outside the band the weight is the Gaussian density at
//! the value, clamped to (0, 1] so a "reduction" can never amplify.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::mean_std_population;

/// Weight floor when the density underflows or sigma is exactly zero.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Per-(batch, epoch) record of the unweighted contrastive loss.
///
/// Epochs are recorded from 1; each cell is written exactly once.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossHistory {
    cells: BTreeMap<usize, BTreeMap<u32, f64>>,
}

impl LossHistory {
    pub fn new() -> LossHistory {
        LossHistory::default()
    }

    pub fn get(&self, batch_id: usize, epoch: u32) -> Option<f64> {
        self.cells.get(&batch_id).and_then(|m| m.get(&epoch)).copied()
    }

    pub fn batch_ids(&self) -> Vec<usize> {
        self.cells.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Flat (batch_id, epoch, loss) triples in deterministic order.
    pub fn entries(&self) -> Vec<(usize, u32, f64)> {
        self.cells
            .iter()
            .flat_map(|(b, m)| m.iter().map(move |(e, l)| (*b, *e, *l)))
            .collect()
    }

    pub fn from_entries(entries: &[(usize, u32, f64)]) -> Result<LossHistory> {
        let mut h = LossHistory::new();
        for &(b, e, l) in entries {
            record_loss(&mut h, b, e, l)?;
        }
        Ok(h)
    }
}

/// Stores one batch loss; double writes and non-finite losses are errors.
pub fn record_loss(h: &mut LossHistory, batch_id: usize, epoch: u32, loss: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: format!("loss for batch {batch_id}, epoch {epoch}"),
        });
    }
    let cell = h.cells.entry(batch_id).or_default();
    if cell.contains_key(&epoch) {
        return Err(Error::DuplicateRecord { batch_id, epoch });
    }
    cell.insert(epoch, loss);
    Ok(())
}

/// Average historical loss of one batch over epochs `1..epoch`.
pub fn historical_mean(h: &LossHistory, batch_id: usize, epoch: u32) -> Result<f64> {
    if epoch < 2 {
        return Err(Error::NoHistory { batch_id, epoch });
    }
    let cell = h.cells.get(&batch_id).ok_or(Error::NoHistory { batch_id, epoch })?;
    let mut sum = 0.0;
    for e in 1..epoch {
        match cell.get(&e) {
            Some(l) => sum += l,
            None => {
                return Err(Error::IncompleteHistory {
                    batch_id,
                    missing_epoch: e,
                })
            }
        }
    }
    Ok(sum / f64::from(epoch - 1))
}

/// Gaussian description of the epoch's historical means plus the
/// noisy/faulty thresholds `a = mu - alpha*sigma`, `b = mu + beta*sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub mu: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn epoch_stats(h: &LossHistory, epoch: u32, alpha: f64, beta: f64) -> Result<EpochStats> {
    if h.is_empty() {
        return Err(Error::NoHistory {
            batch_id: 0,
            epoch,
        });
    }
    let means: Vec<f64> = h
        .batch_ids()
        .into_iter()
        .map(|b| historical_mean(h, b, epoch))
        .collect::<Result<_>>()?;
    let (mu, sigma) = mean_std_population(&means)?;
    Ok(EpochStats {
        epoch,
        mu,
        sigma,
        a: mu - alpha * sigma,
        b: mu + beta * sigma,
        alpha,
        beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairClass {
    Correct,
    Noisy,
    Faulty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub batch_id: usize,
    pub class: PairClass,
    pub weight: f64,
    /// True when the raw Gaussian density exceeded 1 and was clamped.
    pub clamped: bool,
}

/// Classifies one batch and computes its loss weight.
///
/// Inside `[a, b]` the weight is 1. Outside, the weight is the Gaussian
/// density `R = exp(-(x-mu)^2 / (2 sigma^2)) / (sigma sqrt(2 pi))`, clamped
/// into `[1e-12, 1]`. With `sigma = 0`, any value off `mu` gets the floor
/// weight and is classified by side.
pub fn pair_weight(batch_id: usize, value: f64, stats: &EpochStats) -> PairVerdict {
    if stats.sigma == 0.0 {
        if value == stats.mu {
            return PairVerdict {
                batch_id,
                class: PairClass::Correct,
                weight: 1.0,
                clamped: false,
            };
        }
        let class = if value < stats.mu {
            PairClass::Noisy
        } else {
            PairClass::Faulty
        };
        return PairVerdict {
            batch_id,
            class,
            weight: WEIGHT_FLOOR,
            clamped: false,
        };
    }

    if value >= stats.a && value <= stats.b {
        return PairVerdict {
            batch_id,
            class: PairClass::Correct,
            weight: 1.0,
            clamped: false,
        };
    }

    let class = if value < stats.a {
        PairClass::Noisy
    } else {
        PairClass::Faulty
    };
    let z = (value - stats.mu) / stats.sigma;
    let density = (-0.5 * z * z).exp() / (stats.sigma * (2.0 * std::f64::consts::PI).sqrt());
    let clamped = density > 1.0;
    PairVerdict {
        batch_id,
        class,
        weight: density.clamp(WEIGHT_FLOOR, 1.0),
        clamped,
    }
}

/// Weighted loss `L2 = w * L1`.
pub fn weighted_loss(verdict: &PairVerdict, l1: f64) -> f64 {
    verdict.weight * l1
}

/// One audit-log record: everything the mining decision saw for a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub epoch: u32,
    pub batch_id: usize,
    pub l1: f64,
    pub s: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub weight: f64,
    pub class: PairClass,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn record_then_read() {
        let mut h = LossHistory::new();
        record_loss(&mut h, 0, 1, 2.5).unwrap();
        assert_eq!(h.get(0, 1), Some(2.5));
    }

    #[test]
    fn double_write_rejected() {
        let mut h = LossHistory::new();
        record_loss(&mut h, 0, 1, 2.5).unwrap();
        assert!(matches!(
            record_loss(&mut h, 0, 1, 2.5).unwrap_err(),
            Error::DuplicateRecord {
                batch_id: 0,
                epoch: 1
            }
        ));
    }

    #[test]
    fn nonfinite_loss_rejected() {
        let mut h = LossHistory::new();
        assert!(record_loss(&mut h, 0, 1, f64::NAN).is_err());
    }

    #[test]
    fn identical_histories_compare_equal() {
        let mut a = LossHistory::new();
        let mut b = LossHistory::new();
        for (id, e, l) in [(0usize, 1u32, 1.0), (1, 1, 2.0), (0, 2, 0.5)] {
            record_loss(&mut a, id, e, l).unwrap();
            record_loss(&mut b, id, e, l).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn historical_mean_cases() {
        let mut h = LossHistory::new();
        record_loss(&mut h, 3, 1, 1.0).unwrap();
        record_loss(&mut h, 3, 2, 2.0).unwrap();
        approx(historical_mean(&h, 3, 3).unwrap(), 1.5, 0.0);

        let mut h = LossHistory::new();
        record_loss(&mut h, 0, 1, 4.2).unwrap();
        approx(historical_mean(&h, 0, 2).unwrap(), 4.2, 0.0);

        let mut h = LossHistory::new();
        record_loss(&mut h, 0, 1, 0.5).unwrap();
        record_loss(&mut h, 0, 2, 1.0).unwrap();
        record_loss(&mut h, 0, 3, 1.5).unwrap();
        approx(historical_mean(&h, 0, 4).unwrap(), 1.0, 1e-15);
    }

    #[test]
    fn first_epoch_has_no_history() {
        let h = LossHistory::new();
        assert!(matches!(
            historical_mean(&h, 0, 1).unwrap_err(),
            Error::NoHistory { .. }
        ));
    }

    #[test]
    fn gap_in_history_detected() {
        let mut h = LossHistory::new();
        record_loss(&mut h, 0, 1, 1.0).unwrap();
        record_loss(&mut h, 0, 3, 1.0).unwrap();
        assert!(matches!(
            historical_mean(&h, 0, 4).unwrap_err(),
            Error::IncompleteHistory {
                missing_epoch: 2,
                ..
            }
        ));
    }

    #[test]
    fn epoch_stats_hand_case() {
        // S values {1, 2, 3} at alpha = beta = 3
        let mut h = LossHistory::new();
        record_loss(&mut h, 0, 1, 1.0).unwrap();
        record_loss(&mut h, 1, 1, 2.0).unwrap();
        record_loss(&mut h, 2, 1, 3.0).unwrap();
        let stats = epoch_stats(&h, 2, 3.0, 3.0).unwrap();
        approx(stats.mu, 2.0, 0.0);
        approx(stats.sigma, (2.0f64 / 3.0).sqrt(), 1e-15);
        approx(stats.a, 2.0 - 3.0 * stats.sigma, 0.0);
        approx(stats.b, 2.0 + 3.0 * stats.sigma, 0.0);
        assert!(stats.a < -0.449 + 1e-3 && stats.a > -0.45);
        assert!(stats.b > 4.449 - 1e-3 && stats.b < 4.45);
    }

    #[test]
    fn epoch_stats_degenerate_equal_means() {
        let mut h = LossHistory::new();
        for b in 0..4 {
            record_loss(&mut h, b, 1, 0.7).unwrap();
        }
        let stats = epoch_stats(&h, 2, 3.0, 3.0).unwrap();
        assert_eq!((stats.mu, stats.sigma), (0.7, 0.0));
        assert_eq!(stats.a, stats.b);
    }

    #[test]
    fn weight_one_at_center() {
        let stats = EpochStats {
            epoch: 2,
            mu: 1.0,
            sigma: 0.5,
            a: -0.5,
            b: 2.5,
            alpha: 3.0,
            beta: 3.0,
        };
        let v = pair_weight(0, 1.0, &stats);
        assert_eq!(v.class, PairClass::Correct);
        assert_eq!(v.weight, 1.0);
    }

    #[test]
    fn weight_matches_standard_normal_density() {
        let stats = EpochStats {
            epoch: 2,
            mu: 0.0,
            sigma: 1.0,
            a: -3.0,
            b: 3.0,
            alpha: 3.0,
            beta: 3.0,
        };
        // standard normal pdf at 4: 1/sqrt(2 pi) * exp(-8)
        let expected = (-8.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        approx(expected, 1.33830e-4, 1e-8);

        let hi = pair_weight(7, 4.0, &stats);
        assert_eq!(hi.class, PairClass::Faulty);
        approx(hi.weight, expected, 1e-18);

        let lo = pair_weight(7, -4.0, &stats);
        assert_eq!(lo.class, PairClass::Noisy);
        approx(lo.weight, expected, 1e-18);

        // weighted loss for the derived faulty batch
        approx(weighted_loss(&hi, 3.0), 3.0 * expected, 1e-18);
        approx(weighted_loss(&hi, 3.0), 4.0149e-4, 1e-7);
    }

    #[test]
    fn weight_symmetric_about_mu() {
        let stats = EpochStats {
            epoch: 3,
            mu: 2.0,
            sigma: 0.3,
            a: 2.0 - 0.9,
            b: 2.0 + 0.9,
            alpha: 3.0,
            beta: 3.0,
        };
        for d in [1.0, 1.5, 2.7] {
            let up = pair_weight(0, 2.0 + d, &stats);
            let down = pair_weight(0, 2.0 - d, &stats);
            approx(up.weight, down.weight, 1e-15);
        }
    }

    #[test]
    fn weight_monotone_outside_band() {
        let stats = EpochStats {
            epoch: 3,
            mu: 0.0,
            sigma: 1.0,
            a: -2.0,
            b: 2.0,
            alpha: 2.0,
            beta: 2.0,
        };
        let mut prev = pair_weight(0, 2.1, &stats).weight;
        for step in 1..20 {
            let w = pair_weight(0, 2.1 + step as f64 * 0.5, &stats).weight;
            assert!(w < prev || (w == WEIGHT_FLOOR && prev == WEIGHT_FLOOR));
            prev = w;
        }
    }

    #[test]
    fn density_above_one_is_clamped() {
        // sigma small enough that the density at the threshold exceeds 1
        let sigma = 0.01;
        let stats = EpochStats {
            epoch: 2,
            mu: 0.0,
            sigma,
            a: -0.01,
            b: 0.01,
            alpha: 1.0,
            beta: 1.0,
        };
        let v = pair_weight(0, 0.011, &stats);
        assert_eq!(v.weight, 1.0);
        assert!(v.clamped);
        assert_eq!(v.class, PairClass::Faulty);
    }

    #[test]
    fn zero_sigma_off_center_gets_floor() {
        let stats = EpochStats {
            epoch: 2,
            mu: 1.0,
            sigma: 0.0,
            a: 1.0,
            b: 1.0,
            alpha: 3.0,
            beta: 3.0,
        };
        let v = pair_weight(0, 1.5, &stats);
        assert_eq!(v.weight, WEIGHT_FLOOR);
        assert_eq!(v.class, PairClass::Faulty);
        let v = pair_weight(0, 0.5, &stats);
        assert_eq!(v.class, PairClass::Noisy);
        let v = pair_weight(0, 1.0, &stats);
        assert_eq!(v.weight, 1.0);
    }

    #[test]
    fn weights_always_in_unit_interval() {
        let mut rng = crate::numkit::Rng::new(44);
        for _ in 0..500 {
            let sigma = rng.next_f64() * 2.0;
            let mu = rng.next_normal();
            let stats = EpochStats {
                epoch: 2,
                mu,
                sigma,
                a: mu - 3.0 * sigma,
                b: mu + 3.0 * sigma,
                alpha: 3.0,
                beta: 3.0,
            };
            let v = pair_weight(0, rng.next_normal() * 10.0, &stats);
            assert!(v.weight > 0.0 && v.weight <= 1.0);
            if v.class == PairClass::Correct && sigma > 0.0 {
                assert_eq!(v.weight, 1.0);
            }
        }
    }

    #[test]
    fn weighted_loss_bounded_by_l1() {
        let stats = EpochStats {
            epoch: 2,
            mu: 0.0,
            sigma: 1.0,
            a: -3.0,
            b: 3.0,
            alpha: 3.0,
            beta: 3.0,
        };
        for value in [-5.0, -1.0, 0.0, 2.0, 6.0] {
            let v = pair_weight(0, value, &stats);
            assert!(weighted_loss(&v, 2.0) <= 2.0);
        }
        let v = pair_weight(0, 0.0, &stats);
        assert_eq!(weighted_loss(&v, 2.0), 2.0);
        let half = PairVerdict {
            batch_id: 0,
            class: PairClass::Faulty,
            weight: 0.5,
            clamped: false,
        };
        assert_eq!(weighted_loss(&half, 2.0), 1.0);
    }

    #[test]
    fn history_round_trips_through_entries() {
        let mut h = LossHistory::new();
        record_loss(&mut h, 0, 1, 1.0).unwrap();
        record_loss(&mut h, 5, 1, 2.0).unwrap();
        record_loss(&mut h, 0, 2, 3.0).unwrap();
        let rebuilt = LossHistory::from_entries(&h.entries()).unwrap();
        assert_eq!(h, rebuilt);
    }
}
