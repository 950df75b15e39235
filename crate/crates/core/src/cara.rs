//! Response-adaptive and covariate-adjusted response-adaptive allocation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covadaptive::{pocock_simon_assign, NUM_COVARIATES};
use crate::error::{Result, SimError};
use crate::estimation::{fit_logistic_design, FittedLogisticModel};
use crate::trial::{CovariateProfile, TreatmentArm, TrialState};

/// Closed-form target proportion to arm A as a function of the two success
/// probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Balanced,
    /// Minimizes the variance of the log-odds-ratio estimate.
    #[serde(rename = "neyman-log-or")]
    NeymanLogOR,
    /// Minimizes expected failures at fixed log-odds-ratio variance.
    #[serde(rename = "failure-optimal-log-or")]
    FailureOptimalLogOR,
    #[serde(rename = "rva-odds")]
    RVAOdds,
    #[serde(rename = "sqrt-rsihr")]
    SqrtRSIHR,
    #[serde(rename = "neyman-cara")]
    NeymanCARA,
    #[serde(rename = "optimal-cara")]
    OptimalCARA,
}

impl TargetKind {
    pub const ALL: [TargetKind; 7] = [
        TargetKind::Balanced,
        TargetKind::NeymanLogOR,
        TargetKind::FailureOptimalLogOR,
        TargetKind::RVAOdds,
        TargetKind::SqrtRSIHR,
        TargetKind::NeymanCARA,
        TargetKind::OptimalCARA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Balanced => "balanced",
            TargetKind::NeymanLogOR => "neyman-log-or",
            TargetKind::FailureOptimalLogOR => "failure-optimal-log-or",
            TargetKind::RVAOdds => "rva-odds",
            TargetKind::SqrtRSIHR => "sqrt-rsihr",
            TargetKind::NeymanCARA => "neyman-cara",
            TargetKind::OptimalCARA => "optimal-cara",
        }
    }
}

pub fn target_allocation(kind: TargetKind, pa: f64, pb: f64) -> Result<f64> {
    for p in [pa, pb] {
        if !(p > 0.0 && p < 1.0) {
            return Err(SimError::Boundary(format!(
                "success probability must lie strictly inside (0, 1), got {p}"
            )));
        }
    }
    let (qa, qb) = (1.0 - pa, 1.0 - pb);
    let ratio = |a: f64, b: f64| a / (a + b);
    Ok(match kind {
        TargetKind::Balanced => 0.5,
        TargetKind::NeymanLogOR => ratio(1.0 / (pa * qa).sqrt(), 1.0 / (pb * qb).sqrt()),
        TargetKind::FailureOptimalLogOR => {
            ratio(1.0 / (pa * qa * qa).sqrt(), 1.0 / (pb * qb * qb).sqrt())
        }
        TargetKind::RVAOdds => ratio(pa / qa, pb / qb),
        TargetKind::SqrtRSIHR => ratio(pa.sqrt(), pb.sqrt()),
        TargetKind::NeymanCARA => ratio((pb * qb).sqrt(), (pa * qa).sqrt()),
        TargetKind::OptimalCARA => ratio(pb.sqrt() * qb, pa.sqrt() * qa),
    })
}

const DBCD_EPS: f64 = 1e-6;

/// Hu–Zhang allocation function `g(x, y)` steering the current proportion `x`
/// towards the target `y`.
pub fn dbcd_assign(current_prop_a: f64, target_a: f64, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(SimError::InvalidParameter(format!(
            "gamma must be finite and nonnegative, got {gamma}"
        )));
    }
    if current_prop_a.is_nan() || target_a.is_nan() {
        return Err(SimError::InvalidInput("proportion is NaN".into()));
    }
    let x = current_prop_a.clamp(DBCD_EPS, 1.0 - DBCD_EPS);
    let y = target_a.clamp(DBCD_EPS, 1.0 - DBCD_EPS);
    let a = y * (y / x).powf(gamma);
    let b = (1.0 - y) * ((1.0 - y) / (1.0 - x)).powf(gamma);
    Ok(a / (a + b))
}

/// Accrued responses of both arms within one stratum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub n_a: usize,
    pub x_a: usize,
    pub n_b: usize,
    pub x_b: usize,
}

impl StratumCounts {
    pub fn record(&mut self, arm: TreatmentArm, success: bool) {
        match arm {
            TreatmentArm::A => {
                self.n_a += 1;
                self.x_a += usize::from(success);
            }
            TreatmentArm::B => {
                self.n_b += 1;
                self.x_b += usize::from(success);
            }
        }
    }

    /// `(x + 0.5) / (n + 1)` per arm.
    pub fn smoothed_rates(&self) -> (f64, f64) {
        (
            (self.x_a as f64 + 0.5) / (self.n_a as f64 + 1.0),
            (self.x_b as f64 + 0.5) / (self.n_b as f64 + 1.0),
        )
    }
}

/// DBCD within one stratum; a fair coin until both arms have data there.
pub fn stratified_dbcd_assign(
    counts: &StratumCounts,
    gamma: f64,
    rule: TargetKind,
) -> Result<f64> {
    if !matches!(rule, TargetKind::NeymanLogOR | TargetKind::FailureOptimalLogOR) {
        return Err(SimError::InvalidParameter(format!(
            "stratified DBCD targets neyman-log-or or failure-optimal-log-or, got {}",
            rule.name()
        )));
    }
    if counts.n_a == 0 || counts.n_b == 0 {
        return Ok(0.5);
    }
    let (pa, pb) = counts.smoothed_rates();
    let target = target_allocation(rule, pa, pb)?;
    let x = counts.n_a as f64 / (counts.n_a + counts.n_b) as f64;
    dbcd_assign(x, target, gamma)
}

/// `Phi(dj / T)`.
pub fn bb_normal_assign(dj: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(SimError::InvalidParameter(format!(
            "scaling constant must be positive, got {t}"
        )));
    }
    Ok(Normal::standard().cdf(dj / t))
}

/// Least-squares treatment difference `mu_A - mu_B` from the linear model
/// `y = mu_k + beta'z` on the accrued data.
pub fn covariate_adjusted_difference(state: &TrialState) -> Result<f64> {
    let rows: Vec<_> = state.records().iter().filter(|r| r.response.is_some()).collect();
    let p = 2 + NUM_COVARIATES;
    if rows.len() <= p || state.count_a() < 2 || state.count_b() < 2 {
        return Err(SimError::NotReady("too few responses for the linear model".into()));
    }
    let mut x = DMatrix::<f64>::zeros(rows.len(), p);
    let mut y = DVector::<f64>::zeros(rows.len());
    for (i, r) in rows.iter().enumerate() {
        x[(i, 0)] = f64::from(u8::from(r.arm == TreatmentArm::A));
        x[(i, 1)] = f64::from(u8::from(r.arm == TreatmentArm::B));
        for (j, v) in r.profile.values().iter().enumerate() {
            x[(i, 2 + j)] = *v;
        }
        y[i] = f64::from(u8::from(r.response == Some(true)));
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| SimError::NotReady("singular linear-model design".into()))?;
    let beta = chol.solve(&xty);
    Ok(beta[0] - beta[1])
}

/// `sum_j n_j [pi_j (1 - pA_j) + (1 - pi_j)(1 - pB_j)]`.
pub fn expected_failures(props: &[f64], success: &[(f64, f64)], sizes: &[f64]) -> Result<f64> {
    if props.len() != success.len() || props.len() != sizes.len() {
        return Err(SimError::InvalidInput("strata lengths differ".into()));
    }
    let mut total = 0.0;
    for ((&pi, &(pa, pb)), &n) in props.iter().zip(success).zip(sizes) {
        if !(0.0..=1.0).contains(&pi) || !(0.0..=1.0).contains(&pa) || !(0.0..=1.0).contains(&pb) {
            return Err(SimError::InvalidInput("proportions must lie in [0, 1]".into()));
        }
        if !(n >= 0.0) {
            return Err(SimError::InvalidInput("stratum size must be nonnegative".into()));
        }
        let (na, nb) = (n * pi, n * (1.0 - pi));
        total += (na - na * pa) + (nb - nb * pb);
    }
    Ok(total)
}

/// Covariate-adaptive rule used before the model fits are available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BurnIn {
    PocockSimon { p: f64, weights: [f64; NUM_COVARIATES] },
    Complete,
}

impl Default for BurnIn {
    fn default() -> Self {
        BurnIn::PocockSimon {
            p: 0.75,
            weights: [1.0; NUM_COVARIATES],
        }
    }
}

impl BurnIn {
    pub fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        match self {
            BurnIn::PocockSimon { p, weights } => {
                pocock_simon_assign(state, &state.levels_of(profile), weights, *p)
            }
            BurnIn::Complete => Ok(0.5),
        }
    }
}

#[derive(Clone, Debug, Default)]
struct ArmData {
    x: Vec<f64>,
    y: Vec<bool>,
}

const DESIGN_DIM: usize = NUM_COVARIATES + 1;
const PROBABILITY_FLOOR: f64 = 1e-12;

/// Per-arm logistic fits maintained along a trial.
#[derive(Clone, Debug)]
pub struct CaraState {
    burn_in: usize,
    burn_in_rule: BurnIn,
    clamp: Option<f64>,
    data: [ArmData; 2],
    fits: [Option<FittedLogisticModel>; 2],
    fit_failures: usize,
}

impl CaraState {
    /// `burn_in` is the number of patients (`2 m0`) allocated by `burn_in_rule`.
    pub fn new(burn_in: usize, burn_in_rule: BurnIn, clamp: Option<f64>) -> Result<Self> {
        if let Some(eps) = clamp {
            if !(0.0..0.5).contains(&eps) {
                return Err(SimError::InvalidParameter(format!(
                    "clamp must lie in [0, 1/2), got {eps}"
                )));
            }
        }
        if let BurnIn::PocockSimon { p, .. } = burn_in_rule {
            if !(0.5..=1.0).contains(&p) {
                return Err(SimError::InvalidParameter(format!(
                    "burn-in biasing probability must lie in [1/2, 1], got {p}"
                )));
            }
        }
        Ok(Self {
            burn_in,
            burn_in_rule,
            clamp,
            data: Default::default(),
            fits: [None, None],
            fit_failures: 0,
        })
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn fit(&self, arm: TreatmentArm) -> Option<&FittedLogisticModel> {
        self.fits[arm.index()].as_ref()
    }

    /// Refits that failed and left the previous fit in place.
    pub fn fit_failures(&self) -> usize {
        self.fit_failures
    }

    /// Records the latest patient and refits after burn-in.
    pub fn observe(&mut self, state: &TrialState) {
        let Some(last) = state.last() else { return };
        let Some(response) = last.response else { return };
        let k = last.arm.index();
        self.data[k].x.extend_from_slice(&last.profile.design_row());
        self.data[k].y.push(response);
        if state.len() < self.burn_in {
            return;
        }
        if state.len() == self.burn_in || self.fits[1 - k].is_none() && self.fits[k].is_none() {
            for arm in [TreatmentArm::A, TreatmentArm::B] {
                self.refit(arm.index());
            }
        } else {
            self.refit(k);
        }
    }

    fn refit(&mut self, k: usize) {
        let start = self.fits[k].as_ref().map(|f| f.coefficients.clone());
        let d = &self.data[k];
        match fit_logistic_design(&d.x, &d.y, DESIGN_DIM, start.as_deref()) {
            Ok(fit) if fit.converged => self.fits[k] = Some(fit),
            _ => self.fit_failures += 1,
        }
    }

    fn ready(&self, state: &TrialState) -> Option<(&FittedLogisticModel, &FittedLogisticModel)> {
        if state.len() < self.burn_in {
            return None;
        }
        match (&self.fits[0], &self.fits[1]) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }

    pub fn burn_in_probability(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        self.burn_in_rule.prob_a(state, profile)
    }

    fn finish(&self, p: f64) -> f64 {
        match self.clamp {
            Some(eps) => p.clamp(eps, 1.0 - eps),
            None => p,
        }
    }
}

fn interior(p: f64) -> f64 {
    p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
}

/// `target(pA(z), pB(z))` with the current per-arm fits.
pub fn cara_assign(
    cara: &CaraState,
    state: &TrialState,
    kind: TargetKind,
    profile: &CovariateProfile,
) -> Result<f64> {
    let Some((fa, fb)) = cara.ready(state) else {
        return cara.burn_in_probability(state, profile);
    };
    let z = profile.design_row();
    let p = target_allocation(kind, interior(fa.predict(&z)), interior(fb.predict(&z)))?;
    Ok(cara.finish(p))
}

/// D_A-weighted CARA rule: `f_A d(A) / (f_A d(A) + f_B d(B))` with
/// `d(k) = z'(Z_k'W_kZ_k)^{-1}z p_k q_k` and `f_k = p_k / q_k`.
pub fn cara5_assign(cara: &CaraState, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
    let Some((fa, fb)) = cara.ready(state) else {
        return cara.burn_in_probability(state, profile);
    };
    let z = profile.design_row();
    let weight = |f: &FittedLogisticModel| {
        let p = interior(f.predict(&z));
        let q = 1.0 - p;
        let d = f.quadratic_form(&z) * p * q;
        (p / q) * d
    };
    let (wa, wb) = (weight(fa), weight(fb));
    if !(wa.is_finite() && wb.is_finite() && wa + wb > 0.0) {
        return cara.burn_in_probability(state, profile);
    }
    Ok(cara.finish(cara5_normalize(wa, wb)))
}

/// `w_A / (w_A + w_B)` for already weighted directional derivatives.
pub fn cara5_normalize(weighted_a: f64, weighted_b: f64) -> f64 {
    weighted_a / (weighted_a + weighted_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covadaptive::Discretizer;
    use crate::rng::RngStream;
    use crate::scenario::logistic;
    use proptest::prelude::*;

    #[test]
    fn closed_form_targets() {
        let n = target_allocation(TargetKind::NeymanLogOR, 0.95, 0.70).unwrap();
        assert!((n - 0.68).abs() < 0.005);
        let n1 = target_allocation(TargetKind::NeymanLogOR, 0.70, 0.95).unwrap();
        assert!((n1 - 0.32).abs() < 0.005);
        let f = target_allocation(TargetKind::FailureOptimalLogOR, 0.95, 0.70).unwrap();
        assert!((f - 0.84).abs() < 0.005);
        let f1 = target_allocation(TargetKind::FailureOptimalLogOR, 0.70, 0.95).unwrap();
        assert!((f1 - 0.16).abs() < 0.005);
        let rva = target_allocation(TargetKind::RVAOdds, 0.95, 0.70).unwrap();
        assert!((rva - 19.0 / (19.0 + 7.0 / 3.0)).abs() < 1e-12);
        assert!((rva - 0.8906).abs() < 1e-4);
    }

    #[test]
    fn boundary_inputs_rejected() {
        for kind in TargetKind::ALL {
            assert!(matches!(target_allocation(kind, 0.0, 0.5), Err(SimError::Boundary(_))));
            assert!(matches!(target_allocation(kind, 0.5, 1.0), Err(SimError::Boundary(_))));
        }
    }

    #[test]
    fn neyman_forms_agree_on_grid() {
        for i in 1..10 {
            for j in 1..10 {
                let (a, b) = (i as f64 / 10.0, j as f64 / 10.0);
                let x = target_allocation(TargetKind::NeymanLogOR, a, b).unwrap();
                let y = target_allocation(TargetKind::NeymanCARA, a, b).unwrap();
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dbcd_cases() {
        assert!((dbcd_assign(0.6, 0.5, 2.0).unwrap() - 0.307_692_307_692).abs() < 1e-9);
        assert!((dbcd_assign(0.3, 0.7, 0.0).unwrap() - 0.7).abs() < 1e-12);
        assert!((dbcd_assign(0.42, 0.42, 5.0).unwrap() - 0.42).abs() < 1e-12);
        assert!(dbcd_assign(0.0, 0.5, 2.0).unwrap().is_finite());
        assert!(dbcd_assign(0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn dbcd_monotone_in_current_proportion() {
        for yi in 1..20 {
            let y = yi as f64 / 20.0;
            let mut prev = f64::INFINITY;
            for xi in 1..100 {
                let g = dbcd_assign(xi as f64 / 100.0, y, 2.0).unwrap();
                assert!(g <= prev + 1e-15);
                prev = g;
            }
        }
    }

    #[test]
    fn stratified_dbcd_cases() {
        let empty = StratumCounts::default();
        assert_eq!(stratified_dbcd_assign(&empty, 2.0, TargetKind::NeymanLogOR).unwrap(), 0.5);
        // 68 on A and 32 on B with smoothed rates near (0.95, 0.70)
        let c = StratumCounts { n_a: 68, x_a: 65, n_b: 32, x_b: 23 };
        let (pa, pb) = c.smoothed_rates();
        let target = target_allocation(TargetKind::NeymanLogOR, pa, pb).unwrap();
        let g = stratified_dbcd_assign(&c, 2.0, TargetKind::NeymanLogOR).unwrap();
        assert!((g - dbcd_assign(0.68, target, 2.0).unwrap()).abs() < 1e-15);
        assert!((target - 0.68).abs() < 0.02);
        assert!((g - 0.68).abs() < 0.03);
        assert!(stratified_dbcd_assign(&c, 2.0, TargetKind::RVAOdds).is_err());
    }

    #[test]
    fn stratified_dbcd_converges_to_neyman_target() {
        let mut rng = RngStream::new(2024, 5);
        let mut c = StratumCounts::default();
        for _ in 0..1000 {
            let p = stratified_dbcd_assign(&c, 2.0, TargetKind::NeymanLogOR).unwrap();
            let arm = if rng.bernoulli(p) { TreatmentArm::A } else { TreatmentArm::B };
            let success = rng.bernoulli(if arm == TreatmentArm::A { 0.95 } else { 0.70 });
            c.record(arm, success);
        }
        let prop = c.n_a as f64 / 1000.0;
        assert!((prop - 0.68).abs() <= 0.03, "{prop}");
    }

    #[test]
    fn bb_normal_cases() {
        assert_eq!(bb_normal_assign(0.0, 0.5).unwrap(), 0.5);
        assert!((bb_normal_assign(0.5, 0.5).unwrap() - 0.841_344_746_068_543).abs() < 1e-9);
        assert!(bb_normal_assign(-3.0, 0.5).unwrap() < 1e-8);
        assert!(matches!(bb_normal_assign(0.1, 0.0), Err(SimError::InvalidParameter(_))));
    }

    fn two_strata() -> ([(f64, f64); 2], [f64; 2]) {
        ([(0.95, 0.70), (0.70, 0.95)], [100.0, 100.0])
    }

    #[test]
    fn two_stratum_failures() {
        let (succ, sizes) = two_strata();
        let balanced = expected_failures(&[0.5, 0.5], &succ, &sizes).unwrap();
        assert_eq!(balanced, 35.0);
        let props = |kind| {
            succ.map(|(a, b)| target_allocation(kind, a, b).unwrap())
        };
        let rule2 = expected_failures(&props(TargetKind::NeymanLogOR), &succ, &sizes).unwrap();
        let rule3 = expected_failures(&props(TargetKind::FailureOptimalLogOR), &succ, &sizes).unwrap();
        assert!((balanced - rule2 - 8.0).abs() <= 1.5, "{rule2}");
        assert!((balanced - rule3 - 16.0).abs() <= 1.5, "{rule3}");
        // two-decimal proportions
        let r2 = expected_failures(&[0.68, 0.32], &succ, &sizes).unwrap();
        let r3 = expected_failures(&[0.84, 0.16], &succ, &sizes).unwrap();
        assert!((r2 - 26.0).abs() < 1e-9 && (r3 - 18.0).abs() < 1e-9);
    }

    #[test]
    fn cara5_normalization() {
        // d(A) = d(B), f_A / f_B = 3
        assert!((cara5_normalize(3.0 * 2.5, 2.5) - 0.75).abs() < 1e-15);
    }

    fn fake_fit(beta: [f64; 4]) -> FittedLogisticModel {
        FittedLogisticModel {
            coefficients: beta.to_vec(),
            covariance: DMatrix::identity(4, 4) * 0.01,
            converged: true,
            iterations: 1,
            score_norm: 0.0,
        }
    }

    fn ready_state(fa: [f64; 4], fb: [f64; 4]) -> (CaraState, TrialState) {
        let mut cara = CaraState::new(0, BurnIn::default(), None).unwrap();
        cara.fits = [Some(fake_fit(fa)), Some(fake_fit(fb))];
        (cara, TrialState::new(Discretizer::default()))
    }

    #[test]
    fn identical_fits_give_half() {
        let beta = [-1.0, 0.5, 0.02, 0.001];
        let (cara, state) = ready_state(beta, beta);
        for profile in [CovariateProfile::new(0, 33, 170.0), CovariateProfile::new(1, 71, 240.0)] {
            for kind in TargetKind::ALL {
                assert!((cara_assign(&cara, &state, kind, &profile).unwrap() - 0.5).abs() < 1e-12);
            }
            assert!((cara5_assign(&cara, &state, &profile).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_fits_fall_back_to_burn_in() {
        let cara = CaraState::new(10, BurnIn::default(), None).unwrap();
        let state = TrialState::new(Discretizer::default());
        let profile = CovariateProfile::new(1, 40, 190.0);
        assert_eq!(cara_assign(&cara, &state, TargetKind::RVAOdds, &profile).unwrap(), 0.5);
        assert_eq!(cara5_assign(&cara, &state, &profile).unwrap(), 0.5);
    }

    #[test]
    fn clamp_applies() {
        let mut cara = CaraState::new(0, BurnIn::default(), Some(0.01)).unwrap();
        cara.fits = [Some(fake_fit([8.0, 0.0, 0.0, 0.0])), Some(fake_fit([-8.0, 0.0, 0.0, 0.0]))];
        let state = TrialState::new(Discretizer::default());
        let p = cara_assign(&cara, &state, TargetKind::RVAOdds, &CovariateProfile::new(0, 40, 200.0)).unwrap();
        assert_eq!(p, 0.99);
        assert!(CaraState::new(0, BurnIn::default(), Some(0.7)).is_err());
    }

    proptest! {
        #[test]
        fn rva_is_logistic_of_difference(
            ta in prop::array::uniform4(-1.0f64..1.0),
            tb in prop::array::uniform4(-1.0f64..1.0),
            g in 0u8..=1, age in 30u32..=75, chol in 150.0f64..250.0,
        ) {
            // scale slopes so the linear predictors stay moderate
            let scale = [1.0, 1.0, 0.02, 0.004];
            let ta: Vec<f64> = ta.iter().zip(scale).map(|(a, s)| a * s).collect();
            let tb: Vec<f64> = tb.iter().zip(scale).map(|(a, s)| a * s).collect();
            let z = CovariateProfile::new(g, age, chol).design_row();
            let eta = |t: &[f64]| t.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
            let (pa, pb) = (logistic(eta(&ta)), logistic(eta(&tb)));
            let rva = target_allocation(TargetKind::RVAOdds, pa, pb).unwrap();
            prop_assert!((rva - logistic(eta(&ta) - eta(&tb))).abs() < 1e-12);
        }

        #[test]
        fn targets_symmetric(pa in 0.01f64..0.99, pb in 0.01f64..0.99) {
            for kind in TargetKind::ALL {
                let ab = target_allocation(kind, pa, pb).unwrap();
                let ba = target_allocation(kind, pb, pa).unwrap();
                prop_assert!((ab + ba - 1.0).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert!((target_allocation(kind, pa, pa).unwrap() - 0.5).abs() < 1e-12);
            }
        }

        #[test]
        fn dbcd_swap(x in 0.01f64..0.99, y in 0.01f64..0.99, gamma in 0.0f64..4.0) {
            let g = dbcd_assign(x, y, gamma).unwrap();
            prop_assert!((g + dbcd_assign(1.0 - x, 1.0 - y, gamma).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn bb_swap(d in -3.0f64..3.0, t in 0.1f64..2.0) {
            prop_assert!((bb_normal_assign(d, t).unwrap() + bb_normal_assign(-d, t).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
