//! Allocation rules that ignore covariates.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::RngStream;
use crate::trial::TreatmentArm;

/// Three-case biased coin on a signed imbalance: fair at zero, `p` towards A
/// when A is behind, `1 - p` when A is ahead.
pub fn biased_coin(imbalance: f64, p: f64) -> Result<f64> {
    if !(0.5..=1.0).contains(&p) {
        return Err(SimError::InvalidParameter(format!(
            "biasing probability must lie in [1/2, 1], got {p}"
        )));
    }
    Ok(if imbalance == 0.0 {
        0.5
    } else if imbalance < 0.0 {
        p
    } else {
        1.0 - p
    })
}

/// Complete randomization.
pub fn crd_assign() -> f64 {
    0.5
}

/// Efron's biased coin on the overall imbalance `N_A - N_B`.
pub fn efron_bcd_assign(imbalance: i64, p: f64) -> Result<f64> {
    biased_coin(imbalance as f64, p)
}

/// Open block of a permuted-block design.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockState {
    size: usize,
    counts: [usize; 2],
}

impl BlockState {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size % 2 != 0 {
            return Err(SimError::InvalidParameter(format!(
                "block size must be even and positive, got {size}"
            )));
        }
        Ok(Self {
            size,
            counts: [0, 0],
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Assignments made so far in the open block, `[A, B]`.
    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    /// Remaining A slots over remaining slots.
    pub fn prob_a(&self) -> f64 {
        let half = self.size / 2;
        let remaining = self.size - self.counts[0] - self.counts[1];
        (half - self.counts[0]) as f64 / remaining as f64
    }

    pub fn record(&mut self, arm: TreatmentArm) {
        self.counts[arm.index()] += 1;
        debug_assert!(self.counts[arm.index()] <= self.size / 2);
        if self.counts[0] + self.counts[1] == self.size {
            self.counts = [0, 0];
        }
    }
}

pub fn permuted_block_assign(block: &BlockState, rng: &mut RngStream) -> (TreatmentArm, BlockState) {
    let arm = if rng.bernoulli(block.prob_a()) {
        TreatmentArm::A
    } else {
        TreatmentArm::B
    };
    let mut next = block.clone();
    next.record(arm);
    (arm, next)
}

/// Independent permuted blocks per stratum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StratifiedBlocks {
    blocks: Vec<BlockState>,
}

impl StratifiedBlocks {
    pub fn new(strata: usize, size: usize) -> Result<Self> {
        Ok(Self {
            blocks: vec![BlockState::new(size)?; strata],
        })
    }

    pub fn block(&self, stratum: usize) -> &BlockState {
        &self.blocks[stratum]
    }

    pub fn prob_a(&self, stratum: usize) -> f64 {
        self.blocks[stratum].prob_a()
    }

    pub fn record(&mut self, stratum: usize, arm: TreatmentArm) {
        self.blocks[stratum].record(arm)
    }
}

pub fn stratified_pbd_assign(
    blocks: &mut StratifiedBlocks,
    stratum: usize,
    rng: &mut RngStream,
) -> TreatmentArm {
    let (arm, next) = permuted_block_assign(&blocks.blocks[stratum], rng);
    blocks.blocks[stratum] = next;
    arm
}

/// Smith's power rule exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmithRule {
    rho: f64,
}

impl SmithRule {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(SimError::InvalidParameter(format!(
                "rho must be a finite nonnegative number, got {rho}"
            )));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn prob_a(&self, na: usize, nb: usize) -> f64 {
        smith_assign(na, nb, self.rho)
    }
}

/// `nB^rho / (nA^rho + nB^rho)`, with 1/2 at `nA == nB` (including 0, 0).
pub fn smith_assign(na: usize, nb: usize, rho: f64) -> f64 {
    if na == nb || rho == 0.0 {
        return 0.5;
    }
    if nb == 0 {
        return 0.0;
    }
    if na == 0 {
        return 1.0;
    }
    // 1 / (1 + (nA/nB)^rho) avoids overflow for large counts
    let r = (na as f64 / nb as f64).powf(rho);
    1.0 / (1.0 + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn crd_is_fair() {
        assert_eq!(crd_assign(), 0.5);
        let mut rng = RngStream::new(11, 1);
        let a = (0..10_000).filter(|_| rng.bernoulli(crd_assign())).count();
        assert!((a as f64 / 10_000.0 - 0.5).abs() <= 0.015);
    }

    #[test]
    fn efron_cases() {
        assert_eq!(efron_bcd_assign(0, 0.75).unwrap(), 0.5);
        assert_eq!(efron_bcd_assign(-3, 0.75).unwrap(), 0.75);
        assert_eq!(efron_bcd_assign(2, 1.0).unwrap(), 0.0);
        assert!(matches!(
            efron_bcd_assign(0, 0.3),
            Err(SimError::InvalidParameter(_))
        ));
        assert!(efron_bcd_assign(0, 1.2).is_err());
    }

    #[test]
    fn block_probabilities() {
        let b = BlockState::new(8).unwrap();
        assert_eq!(b.prob_a(), 0.5);
        let mut b = BlockState::new(4).unwrap();
        b.record(TreatmentArm::A);
        b.record(TreatmentArm::A);
        assert_eq!(b.prob_a(), 0.0);
        b.record(TreatmentArm::B);
        b.record(TreatmentArm::B);
        assert_eq!(b.counts(), [0, 0]);
        assert!(BlockState::new(5).is_err());
        assert!(BlockState::new(0).is_err());
    }

    #[test]
    fn block_closure_balances_exactly() {
        let mut rng = RngStream::new(4, 2);
        let mut block = BlockState::new(10).unwrap();
        let mut n_a = 0;
        for _ in 0..200 {
            let (arm, next) = permuted_block_assign(&block, &mut rng);
            block = next;
            n_a += usize::from(arm == TreatmentArm::A);
        }
        assert_eq!(n_a, 100);
    }

    /// Every ordering of a block of size m <= 6 is equally likely: enumerate
    /// all paths with their exact probabilities.
    #[test]
    fn block_orderings_exchangeable() {
        fn paths(block: &BlockState, left: usize, prob: f64, seq: &mut Vec<TreatmentArm>, out: &mut Vec<(Vec<TreatmentArm>, f64)>) {
            if left == 0 {
                out.push((seq.clone(), prob));
                return;
            }
            let pa = block.prob_a();
            for (arm, p) in [(TreatmentArm::A, pa), (TreatmentArm::B, 1.0 - pa)] {
                if p > 0.0 {
                    let mut next = block.clone();
                    next.record(arm);
                    seq.push(arm);
                    paths(&next, left - 1, prob * p, seq, out);
                    seq.pop();
                }
            }
        }
        for m in [2usize, 4, 6] {
            let mut out = Vec::new();
            paths(&BlockState::new(m).unwrap(), m, 1.0, &mut Vec::new(), &mut out);
            // binomial(m, m/2) orderings, each with probability 1 / that count
            let count = (1..=m / 2).fold(1usize, |acc, k| acc * (m / 2 + k) / k);
            assert_eq!(out.len(), count);
            for (seq, p) in &out {
                assert!((p - 1.0 / count as f64).abs() < 1e-12);
                assert_eq!(seq.iter().filter(|&&a| a == TreatmentArm::A).count(), m / 2);
            }
        }
    }

    #[test]
    fn single_stratum_matches_plain_blocks() {
        let mut strat = StratifiedBlocks::new(1, 6).unwrap();
        let mut plain = BlockState::new(6).unwrap();
        let (mut r1, mut r2) = (RngStream::new(8, 1), RngStream::new(8, 1));
        for _ in 0..60 {
            let a = stratified_pbd_assign(&mut strat, 0, &mut r1);
            let (b, next) = permuted_block_assign(&plain, &mut r2);
            plain = next;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn stratified_imbalance_bounded() {
        let mut rng = RngStream::new(21, 3);
        let mut blocks = StratifiedBlocks::new(8, 10).unwrap();
        let mut counts = [[0i64; 2]; 8];
        for _ in 0..200 {
            let s = (rng.uniform() * 8.0) as usize;
            let arm = stratified_pbd_assign(&mut blocks, s, &mut rng);
            counts[s][arm.index()] += 1;
        }
        for c in counts {
            assert!((c[0] - c[1]).abs() <= 5);
        }
    }

    #[test]
    fn smith_values() {
        assert_eq!(smith_assign(4, 4, 3.0), 0.5);
        assert_eq!(smith_assign(0, 0, 2.0), 0.5);
        assert_eq!(smith_assign(1, 7, 0.0), 0.5);
        assert!((smith_assign(1, 3, 2.0) - 0.9).abs() < 1e-15);
        assert!(SmithRule::new(-1.0).is_err());
    }

    #[test]
    fn smith_rho_two_balances() {
        let rule = SmithRule::new(2.0).unwrap();
        let mut rng = RngStream::new(99, 1);
        let (mut na, mut nb) = (0usize, 0usize);
        for _ in 0..1000 {
            if rng.bernoulli(rule.prob_a(na, nb)) {
                na += 1;
            } else {
                nb += 1;
            }
        }
        assert!((na as f64 / 1000.0 - 0.5).abs() <= 0.03);
    }

    proptest! {
        #[test]
        fn complement_symmetry(na in 0usize..500, nb in 0usize..500, rho in 0.0f64..6.0, p in 0.5f64..=1.0) {
            prop_assert!((smith_assign(na, nb, rho) + smith_assign(nb, na, rho) - 1.0).abs() < 1e-12);
            let d = na as i64 - nb as i64;
            prop_assert!((efron_bcd_assign(d, p).unwrap() + efron_bcd_assign(-d, p).unwrap() - 1.0).abs() < 1e-15);
        }

        #[test]
        fn block_swap_symmetry(m in 1usize..6, a in 0usize..6, b in 0usize..6) {
            let size = 2 * m;
            prop_assume!(a <= m && b <= m && a + b < size);
            let block = BlockState { size, counts: [a, b] };
            let swapped = BlockState { size, counts: [b, a] };
            prop_assert!((block.prob_a() + swapped.prob_a() - 1.0).abs() < 1e-15);
        }
    }
}
