use serde::{Deserialize, Serialize};

use super::{make_ring, ring_centers, Dataset, Split};
use crate::error::{invalid, Result};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub modes: usize,
    pub radius: f64,
    pub sigma: f64,
    pub phase: f64,
}

/// Source domain for extractor pretraining plus a few-shot target domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferProtocol {
    pub source: RingSpec,
    pub source_n: usize,
    pub target: RingSpec,
    pub n_target: usize,
    /// Validation rows, as a fraction of `n_target`.
    pub val_fraction: f64,
    pub n_test: usize,
}

impl Default for TransferProtocol {
    fn default() -> Self {
        Self {
            source: RingSpec { modes: 16, radius: 0.8, sigma: 0.05, phase: 0.0 },
            source_n: 5000,
            target: RingSpec { modes: 8, radius: 0.6, sigma: 0.04, phase: std::f64::consts::PI / 8.0 },
            n_target: 128,
            val_fraction: 0.2,
            n_test: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransferSplits {
    pub source: Dataset,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub target_centers: Vec<[f64; 2]>,
}

const SOURCE_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const VAL_STREAM: u64 = 3;
const TEST_STREAM: u64 = 4;

/// Builds all splits. Each split draws from its own seed stream, so the
/// training set for a smaller budget is a prefix of a larger one and the
/// validation and test splits do not depend on `n_target` beyond the
/// validation size.
pub fn make_transfer(protocol: &TransferProtocol, seed: u64) -> Result<TransferSplits> {
    if protocol.n_target < 2 {
        return Err(invalid(format!("n_target must be ≥ 2, got {}", protocol.n_target)));
    }
    if protocol.source == protocol.target {
        return Err(invalid("source and target distributions must differ"));
    }
    if !(0.0..1.0).contains(&protocol.val_fraction) {
        return Err(invalid("val_fraction must be in [0, 1)"));
    }
    let ring = |spec: &RingSpec, n: usize, stream: u64, split: Split| -> Result<Dataset> {
        let mut d = make_ring(n, spec.modes, spec.radius, spec.sigma, spec.phase, derive_seed(seed, stream))?;
        d.split = split;
        Ok(d)
    };
    let n_val = ((protocol.n_target as f64 * protocol.val_fraction).round() as usize).max(1);
    let t = &protocol.target;
    Ok(TransferSplits {
        source: ring(&protocol.source, protocol.source_n, SOURCE_STREAM, Split::Source)?,
        train: ring(t, protocol.n_target, TRAIN_STREAM, Split::TargetTrain)?,
        val: ring(t, n_val, VAL_STREAM, Split::TargetVal)?,
        test: ring(t, protocol.n_test, TEST_STREAM, Split::TargetTest)?,
        target_centers: ring_centers(t.modes, t.radius, t.phase),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(d: &Dataset) -> Vec<Vec<u64>> {
        d.x.iter_rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect()
    }

    #[test]
    fn splits_are_disjoint() {
        let s = make_transfer(&TransferProtocol::default(), 7).unwrap();
        let train = rows(&s.train);
        for r in rows(&s.test).iter().chain(rows(&s.val).iter()) {
            assert!(!train.contains(r));
        }
    }

    #[test]
    fn budget_sweep_shares_test_split() {
        let base = TransferProtocol::default();
        let small = make_transfer(&TransferProtocol { n_target: 25, ..base.clone() }, 3).unwrap();
        let large = make_transfer(&TransferProtocol { n_target: 500, ..base }, 3).unwrap();
        assert_eq!(small.test, large.test);
        assert_eq!(rows(&small.train)[..], rows(&large.train)[..25]);
    }

    #[test]
    fn source_labels_balanced() {
        let s = make_transfer(&TransferProtocol::default(), 1).unwrap();
        let mut counts = [0usize; 16];
        for &l in s.source.labels.as_ref().unwrap() {
            counts[l as usize] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn rejects_tiny_budget_and_identical_domains() {
        let p = TransferProtocol { n_target: 1, ..TransferProtocol::default() };
        assert!(make_transfer(&p, 0).is_err());
        let mut p = TransferProtocol::default();
        p.target = p.source;
        assert!(make_transfer(&p, 0).is_err());
    }
}
