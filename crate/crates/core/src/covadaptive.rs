//! Covariate-adaptive allocation: marginal minimization (Pocock–Simon and
//! Taves), Wei's marginal urn, Raghavarao's distance rule and Atkinson's
//! D_A-optimal biased coin for the homoscedastic linear model.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::restricted::biased_coin;
use crate::rng::RngStream;
use crate::trial::{CovariateProfile, TreatmentArm, TrialState};

/// Gender, age, cholesterol.
pub const NUM_COVARIATES: usize = 3;

/// Two-level code of each covariate for one patient.
pub type Levels = [u8; NUM_COVARIATES];

/// Maps a profile onto two levels per covariate. Gender passes through;
/// age and cholesterol are split at strict-inequality cutpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretizer {
    #[serde(default = "default_age_cut")]
    pub age_cut: f64,
    #[serde(default = "default_chol_cut")]
    pub cholesterol_cut: f64,
}

fn default_age_cut() -> f64 {
    52.5
}
fn default_chol_cut() -> f64 {
    200.0
}

impl Default for Discretizer {
    fn default() -> Self {
        Self {
            age_cut: default_age_cut(),
            cholesterol_cut: default_chol_cut(),
        }
    }
}

impl Discretizer {
    pub fn discretize(&self, profile: &CovariateProfile) -> Levels {
        [
            profile.gender.min(1),
            u8::from(profile.age as f64 > self.age_cut),
            u8::from(profile.cholesterol > self.cholesterol_cut),
        ]
    }

    /// Index of the full covariate-combination stratum, in `0..8`.
    pub fn stratum(&self, profile: &CovariateProfile) -> usize {
        stratum_key(&self.discretize(profile))
    }
}

pub fn discretize(profile: &CovariateProfile, d: &Discretizer) -> Levels {
    d.discretize(profile)
}

pub fn stratum_key(levels: &Levels) -> usize {
    levels
        .iter()
        .fold(0usize, |key, &level| key * 2 + level as usize)
}

/// `D_i(n)` at the incoming patient's levels and the weighted total `D(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalImbalance {
    pub per_covariate: [i64; NUM_COVARIATES],
    pub weights: [f64; NUM_COVARIATES],
    pub total: f64,
}

impl MarginalImbalance {
    pub fn compute(state: &TrialState, levels: &Levels, weights: &[f64; NUM_COVARIATES]) -> Self {
        let margins = state.margin_counts();
        let mut per_covariate = [0i64; NUM_COVARIATES];
        for (i, &level) in levels.iter().enumerate() {
            let cell = margins[i][level as usize];
            per_covariate[i] = cell[0] as i64 - cell[1] as i64;
        }
        let total = per_covariate
            .iter()
            .zip(weights)
            .map(|(&d, &w)| w * d as f64)
            .sum();
        Self {
            per_covariate,
            weights: *weights,
            total,
        }
    }
}

fn check_weights(weights: &[f64; NUM_COVARIATES]) -> Result<()> {
    if weights.iter().all(|w| w.is_finite() && *w > 0.0) {
        Ok(())
    } else {
        Err(SimError::InvalidParameter(format!(
            "weights must be positive, got {weights:?}"
        )))
    }
}

/// Pocock–Simon biased-coin minimization. `p = 1` is Taves's deterministic
/// minimization.
pub fn pocock_simon_assign(
    state: &TrialState,
    levels: &Levels,
    weights: &[f64; NUM_COVARIATES],
    p: f64,
) -> Result<f64> {
    check_weights(weights)?;
    let imbalance = MarginalImbalance::compute(state, levels, weights);
    biased_coin(imbalance.total, p)
}

/// How the urn is chosen among the patient's observed urns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UrnSelection {
    /// Largest `|D_ij|`, ties to the lowest covariate index.
    #[default]
    Absolute,
    /// Largest signed `D_ij`, ties to the lowest covariate index.
    Signed,
}

/// One urn per covariate level, holding balls of type A and type B.
#[derive(Clone, Debug, PartialEq)]
pub struct UrnBank {
    balls: [[[u64; 2]; 2]; NUM_COVARIATES],
    alpha: [u64; 2],
    beta: u64,
    selection: UrnSelection,
}

impl UrnBank {
    pub fn new(alpha: [u64; 2], beta: u64, selection: UrnSelection) -> Result<Self> {
        if alpha[0] == 0 || alpha[1] == 0 {
            return Err(SimError::InvalidParameter(
                "urn needs at least one initial ball of each type".into(),
            ));
        }
        Ok(Self {
            balls: [[alpha; 2]; NUM_COVARIATES],
            alpha,
            beta,
            selection,
        })
    }

    pub fn balls(&self, covariate: usize, level: usize) -> [u64; 2] {
        self.balls[covariate][level]
    }

    pub fn alpha(&self) -> [u64; 2] {
        self.alpha
    }

    /// `D_ij = (Y_ij1 - Y_ij2) / (Y_ij1 + Y_ij2)`.
    pub fn imbalance(&self, covariate: usize, level: usize) -> f64 {
        urn_imbalance(self.balls[covariate][level])
    }

    /// Covariate index of the urn used for the draw.
    pub fn select(&self, levels: &Levels) -> usize {
        let score = |i: usize| {
            let d = self.imbalance(i, levels[i] as usize);
            match self.selection {
                UrnSelection::Absolute => d.abs(),
                UrnSelection::Signed => d,
            }
        };
        let mut best = 0;
        for i in 1..NUM_COVARIATES {
            if score(i) > score(best) {
                best = i;
            }
        }
        best
    }

    /// Probability that the drawn ball is of type A.
    pub fn prob_a(&self, levels: &Levels) -> f64 {
        let i = self.select(levels);
        let [a, b] = self.balls[i][levels[i] as usize];
        a as f64 / (a + b) as f64
    }

    /// Adds `alpha_k` balls of the drawn type and `beta` of the other type to
    /// every observed urn.
    pub fn update(&mut self, levels: &Levels, arm: TreatmentArm) {
        let k = arm.index();
        for (i, &level) in levels.iter().enumerate() {
            let urn = &mut self.balls[i][level as usize];
            urn[k] += self.alpha[k];
            urn[1 - k] += self.beta;
        }
    }

    /// Bank with the two ball types exchanged.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        for cov in out.balls.iter_mut() {
            for urn in cov.iter_mut() {
                urn.swap(0, 1);
            }
        }
        out.alpha.swap(0, 1);
        out
    }
}

pub fn urn_imbalance(balls: [u64; 2]) -> f64 {
    let (a, b) = (balls[0] as f64, balls[1] as f64);
    (a - b) / (a + b)
}

/// Draws one ball from the selected urn and updates the bank.
pub fn wei_urn_assign(bank: &mut UrnBank, levels: &Levels, rng: &mut RngStream) -> TreatmentArm {
    let arm = if rng.bernoulli(bank.prob_a(levels)) {
        TreatmentArm::A
    } else {
        TreatmentArm::B
    };
    bank.update(levels, arm);
    arm
}

const RAGHAVARAO_RIDGE: f64 = 1e-8;

/// Raghavarao's distance rule: `p_k` proportional to the Mahalanobis distance
/// from the incoming profile to arm `k`'s mean profile (pooled covariance).
/// Returns `[P(A), P(B)]`.
pub fn raghavarao_assign(state: &TrialState, profile: &CovariateProfile) -> Result<[f64; 2]> {
    let mut sums = [Vector3::<f64>::zeros(); 2];
    let mut counts = [0usize; 2];
    for r in state.records() {
        let k = r.arm.index();
        sums[k] += Vector3::from(r.profile.values());
        counts[k] += 1;
    }
    if counts.iter().any(|&c| c < 2) {
        return Err(SimError::NotReady(
            "each arm needs at least two patients".into(),
        ));
    }
    let means = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
    let mut scatter = Matrix3::<f64>::zeros();
    for r in state.records() {
        let dev = Vector3::from(r.profile.values()) - means[r.arm.index()];
        scatter += dev * dev.transpose();
    }
    let mut pooled = scatter / (counts[0] + counts[1] - 2) as f64;
    if (0..3).any(|i| pooled[(i, i)] <= 1e-12) {
        return Err(SimError::NotReady(
            "pooled covariance is singular (constant covariate)".into(),
        ));
    }
    for i in 0..3 {
        pooled[(i, i)] += RAGHAVARAO_RIDGE;
    }
    let chol = pooled
        .cholesky()
        .ok_or_else(|| SimError::NotReady("pooled covariance is not positive definite".into()))?;
    let x = Vector3::from(profile.values());
    let dist = |m: &Vector3<f64>| {
        let dev = x - m;
        dev.dot(&chol.solve(&dev)).max(0.0).sqrt()
    };
    Ok(distance_probabilities(dist(&means[0]), dist(&means[1])))
}

/// `[d_A, d_B] / (d_A + d_B)`; both zero gives a fair coin.
pub fn distance_probabilities(d_a: f64, d_b: f64) -> [f64; 2] {
    let total = d_a + d_b;
    if total <= 0.0 {
        [0.5, 0.5]
    } else {
        [d_a / total, d_b / total]
    }
}

/// Monotone transform applied to the directional derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Psi {
    /// `psi(x) = x`.
    Identity,
    /// `psi(x) = (1 + x)^(1/gamma)`; `gamma = 0` is the deterministic limit.
    Power { gamma: f64 },
}

impl Psi {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Psi::Power { gamma } if !(gamma >= 0.0 && gamma.is_finite()) => Err(
                SimError::InvalidParameter(format!("gamma must be >= 0, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    /// `psi(d_plus) / (psi(d_plus) + psi(d_minus))`.
    pub fn normalize(&self, d_plus: f64, d_minus: f64) -> f64 {
        match *self {
            Psi::Identity => {
                let total = d_plus + d_minus;
                if total <= 0.0 {
                    0.5
                } else {
                    d_plus / total
                }
            }
            Psi::Power { gamma } if gamma == 0.0 => {
                if d_plus > d_minus {
                    1.0
                } else if d_plus < d_minus {
                    0.0
                } else {
                    0.5
                }
            }
            Psi::Power { gamma } => {
                // compare on the log scale so large exponents do not overflow
                let lp = (1.0 + d_plus).ln() / gamma;
                let lm = (1.0 + d_minus).ln() / gamma;
                1.0 / (1.0 + (lm - lp).exp())
            }
        }
    }
}

/// `c = z'(Z'Z)^{-1} Z't` and the residual sum of squares of `t` on `Z`.
fn treatment_projection(design: &DMatrix<f64>, t: &[i32], new_row: &[f64]) -> Result<(f64, f64)> {
    let p = design.ncols();
    if design.nrows() != t.len() || new_row.len() != p {
        return Err(SimError::InvalidInput(
            "design rows, assignments and new row disagree in shape".into(),
        ));
    }
    let gram = design.transpose() * design;
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| SimError::NotReady("Z'Z is singular".into()))?;
    let max_diag = gram.diagonal().max();
    let min_pivot = chol.l_dirty().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-10 * max_diag) {
        return Err(SimError::NotReady("Z'Z is numerically singular".into()));
    }
    let tv = DVector::from_iterator(t.len(), t.iter().map(|&x| x as f64));
    let zt = design.transpose() * &tv;
    let b = chol.solve(&zt);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NotReady("Z'Z is numerically singular".into()));
    }
    let z = DVector::from_column_slice(new_row);
    let c = z.dot(&b);
    let rss = tv.dot(&tv) - zt.dot(&b);
    Ok((c, rss))
}

/// Atkinson's D_A-optimal biased coin: probability that the next patient gets
/// `t = +1` (arm A). The directional derivative for `t = +-1` is
/// `n (+-1 - c)^2 / RSS`, so for `psi(x) = x` this reduces to
/// `(1 - c)^2 / ((1 - c)^2 + (1 + c)^2)`.
pub fn atkinson_da_assign(
    design: &DMatrix<f64>,
    t: &[i32],
    new_row: &[f64],
    psi: Psi,
) -> Result<f64> {
    psi.validate()?;
    let (c, rss) = treatment_projection(design, t, new_row)?;
    let scale = rss / t.len() as f64;
    if !(scale > 1e-12) {
        return Err(SimError::NotReady(
            "treatment column lies in the covariate span".into(),
        ));
    }
    let d_plus = (1.0 - c).powi(2) / scale;
    let d_minus = (1.0 + c).powi(2) / scale;
    Ok(psi.normalize(d_plus, d_minus))
}
