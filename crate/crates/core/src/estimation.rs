//! Logistic-regression MLE, log-odds-ratio tests, Kolmogorov–Smirnov balance
//! distance and the re-randomization test.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Result, SimError};
use crate::procedure::ProcedureSpec;
use crate::rng::RngStream;
use crate::scenario::{logistic, ScenarioSpec};
use crate::trial::{CovariateProfile, TreatmentArm, TrialState};

pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;
const STEP_TOLERANCE: f64 = 1e-6;

/// Per-arm maximum-likelihood fit.
#[derive(Clone, Debug)]
pub struct FittedLogisticModel {
    pub coefficients: Vec<f64>,
    /// Inverse of `Z'WZ` at the estimate.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
}

impl FittedLogisticModel {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        logistic(self.linear_predictor(row))
    }

    /// `z' Cov z`.
    pub fn quadratic_form(&self, row: &[f64]) -> f64 {
        let z = DVector::from_column_slice(row);
        z.dot(&(&self.covariance * &z))
    }
}

/// Accumulates score, information and log-likelihood at `beta`.
fn score_and_information(x: &[f64], y: &[bool], p: usize, beta: &[f64]) -> (Vec<f64>, DMatrix<f64>, f64) {
    let mut score = vec![0.0; p];
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut loglik = 0.0;
    for (row, &yi) in x.chunks_exact(p).zip(y) {
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu = logistic(eta);
        let w = mu * (1.0 - mu);
        let resid = if yi { 1.0 - mu } else { -mu };
        // log(1 + e^eta) computed stably
        let softplus = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        loglik += if yi { eta - softplus } else { -softplus };
        for j in 0..p {
            score[j] += resid * row[j];
            let wj = w * row[j];
            for k in 0..=j {
                info[(j, k)] += wj * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            info[(k, j)] = info[(j, k)];
        }
    }
    (score, info, loglik)
}

/// Bernoulli log-likelihood of a row-major design with `p` columns.
pub fn log_likelihood(x: &[f64], y: &[bool], p: usize, beta: &[f64]) -> f64 {
    x.chunks_exact(p)
        .zip(y)
        .map(|(row, &yi)| {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            if yi {
                eta - softplus
            } else {
                -softplus
            }
        })
        .sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton–Raphson / IRLS on a row-major design with `p` columns, optionally
/// warm-started.
pub fn fit_logistic_design(
    x: &[f64],
    y: &[bool],
    p: usize,
    start: Option<&[f64]>,
) -> Result<FittedLogisticModel> {
    if p == 0 || x.len() != y.len() * p {
        return Err(SimError::InvalidInput(
            "design matrix and responses disagree in shape".into(),
        ));
    }
    let successes = y.iter().filter(|&&v| v).count();
    if y.len() < 5 || successes == 0 || successes == y.len() {
        return Err(SimError::NotEstimable(format!(
            "need at least 5 rows with both outcomes, got {} rows and {} successes",
            y.len(),
            successes
        )));
    }
    let mut beta: Vec<f64> = match start {
        Some(s) if s.len() == p && s.iter().all(|v| v.is_finite()) => s.to_vec(),
        _ => vec![0.0; p],
    };
    let nonconverged = |beta: Vec<f64>, iterations: usize, score_norm: f64| FittedLogisticModel {
        coefficients: beta,
        covariance: DMatrix::from_element(p, p, f64::NAN),
        converged: false,
        iterations,
        score_norm,
    };

    for iteration in 0..=MAX_ITERATIONS {
        let (score, info, loglik) = score_and_information(x, y, p, &beta);
        let score_norm = norm(&score);
        let Some(chol) = info.clone().cholesky() else {
            return Ok(nonconverged(beta, iteration, score_norm));
        };
        let step = chol.solve(&DVector::from_vec(score));
        if step.iter().any(|v| !v.is_finite()) {
            return Ok(nonconverged(beta, iteration, score_norm));
        }
        let step_size = step.amax();
        if score_norm < SCORE_TOLERANCE && step_size < STEP_TOLERANCE {
            return Ok(FittedLogisticModel {
                coefficients: beta,
                covariance: chol.inverse(),
                converged: true,
                iterations: iteration,
                score_norm,
            });
        }
        if iteration == MAX_ITERATIONS {
            return Ok(nonconverged(beta, iteration, score_norm));
        }
        // step halving keeps the likelihood from decreasing far from the optimum
        let mut scale = 1.0;
        let mut next: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
        for _ in 0..20 {
            if loglik_ok(x, y, p, &next, loglik) {
                break;
            }
            scale *= 0.5;
            next = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
        }
        beta = next;
    }
    unreachable!("loop returns on its last iteration")
}

fn loglik_ok(x: &[f64], y: &[bool], p: usize, beta: &[f64], previous: f64) -> bool {
    let ll = log_likelihood(x, y, p, beta);
    ll.is_finite() && ll >= previous - 1e-10 * (1.0 + previous.abs())
}

/// Fits from `(row, response)` pairs; every row must have the same length.
pub fn fit_logistic(rows: &[(Vec<f64>, bool)]) -> Result<FittedLogisticModel> {
    let p = rows.first().map(|r| r.0.len()).unwrap_or(0);
    if rows.iter().any(|r| r.0.len() != p) {
        return Err(SimError::InvalidInput("ragged design rows".into()));
    }
    let x: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let y: Vec<bool> = rows.iter().map(|r| r.1).collect();
    fit_logistic_design(&x, &y, p, None)
}

/// Design rows `(1, z1, z2, z3)` and responses of the patients on `arm`.
pub fn arm_design(state: &TrialState, arm: TreatmentArm) -> (Vec<f64>, Vec<bool>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in state.records().iter().filter(|r| r.arm == arm) {
        if let Some(resp) = r.response {
            x.extend_from_slice(&r.profile.design_row());
            y.push(resp);
        }
    }
    (x, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogOdds {
    pub estimate: f64,
    pub variance: f64,
    /// Whether 0.5 was added to the cells.
    pub corrected: bool,
}

/// Log-odds ratio of A versus B in one stratum with Haldane–Anscombe
/// correction when any cell is empty.
pub fn log_odds_ratio(x_a: u64, n_a: u64, x_b: u64, n_b: u64) -> Result<LogOdds> {
    if n_a == 0 || n_b == 0 {
        return Err(SimError::InvalidInput("both arms need patients".into()));
    }
    if x_a > n_a || x_b > n_b {
        return Err(SimError::InvalidInput("successes exceed patients".into()));
    }
    let cells = [x_a, n_a - x_a, x_b, n_b - x_b];
    let corrected = cells.contains(&0);
    let add = if corrected { 0.5 } else { 0.0 };
    let [sa, fa, sb, fb] = cells.map(|c| c as f64 + add);
    Ok(LogOdds {
        estimate: ((sa / fa) / (sb / fb)).ln(),
        variance: 1.0 / sa + 1.0 / fa + 1.0 / sb + 1.0 / fb,
        corrected,
    })
}

/// Success/failure counts of both arms in one stratum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StratumCell {
    pub x_a: u64,
    pub n_a: u64,
    pub x_b: u64,
    pub n_b: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StratifiedTable {
    pub strata: Vec<StratumCell>,
}

impl StratifiedTable {
    pub fn new(strata: Vec<StratumCell>) -> Result<Self> {
        if strata.iter().any(|c| c.x_a > c.n_a || c.x_b > c.n_b) {
            return Err(SimError::InvalidInput("successes exceed patients".into()));
        }
        Ok(Self { strata })
    }

    /// Gender-stratified table from a completed trial.
    pub fn by_gender(state: &TrialState) -> Self {
        let mut strata = vec![StratumCell::default(); 2];
        for r in state.records() {
            let cell = &mut strata[r.profile.gender.min(1) as usize];
            let success = u64::from(r.response == Some(true));
            match r.arm {
                TreatmentArm::A => {
                    cell.n_a += 1;
                    cell.x_a += success;
                }
                TreatmentArm::B => {
                    cell.n_b += 1;
                    cell.x_b += success;
                }
            }
        }
        Self { strata }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// Omnibus test of equal success rates in every stratum:
/// `Q = sum_j T_j^2` against chi-square with one degree of freedom per stratum.
pub fn stratified_logor_test(table: &StratifiedTable, alpha: f64) -> Result<TestOutcome> {
    if table.strata.is_empty() {
        return Err(SimError::NotEstimable("no strata".into()));
    }
    let mut q = 0.0;
    for (j, c) in table.strata.iter().enumerate() {
        if c.n_a == 0 || c.n_b == 0 {
            return Err(SimError::NotEstimable(format!(
                "stratum {j} lacks patients on one arm"
            )));
        }
        let lor = log_odds_ratio(c.x_a, c.n_a, c.x_b, c.n_b)?;
        q += lor.estimate * lor.estimate / lor.variance;
    }
    let dist = ChiSquared::new(table.strata.len() as f64).expect("positive degrees of freedom");
    let p_value = dist.sf(q);
    Ok(TestOutcome {
        statistic: q,
        p_value,
        reject: p_value < alpha,
    })
}

/// Two-sided p-value of a standard-normal statistic.
pub fn normal_two_sided_p(statistic: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * n.sf(statistic.abs())).min(1.0)
}

/// Wald test of `(theta_A - theta_B)' z0 = 0` with `z0` a full design row.
pub fn wald_test_at_z0(
    fit_a: &FittedLogisticModel,
    fit_b: &FittedLogisticModel,
    z0: &[f64],
    alpha: f64,
) -> Result<TestOutcome> {
    if !fit_a.converged || !fit_b.converged {
        return Err(SimError::NotEstimable("logistic fit did not converge".into()));
    }
    if fit_a.dim() != z0.len() || fit_b.dim() != z0.len() {
        return Err(SimError::InvalidInput("reference row has wrong length".into()));
    }
    let delta = fit_a.linear_predictor(z0) - fit_b.linear_predictor(z0);
    let variance = fit_a.quadratic_form(z0) + fit_b.quadratic_form(z0);
    if !(variance > 0.0) {
        return Err(SimError::NotEstimable("nonpositive variance".into()));
    }
    let statistic = delta / variance.sqrt();
    let p_value = normal_two_sided_p(statistic);
    Ok(TestOutcome {
        statistic,
        p_value,
        reject: p_value < alpha,
    })
}

/// `sup_x |F_A(x) - F_B(x)|` between two empirical distributions.
pub fn ks_distance(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(SimError::InvalidInput("empty sample".into()));
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Monte-Carlo re-randomization test. Re-runs the procedure on the fixed
/// covariate sequence `resamples` times, keeping responses fixed, and returns
/// `(1 + #{resampled >= observed}) / (resamples + 1)`.
#[allow(clippy::too_many_arguments)]
pub fn rerandomization_test<S>(
    procedure: &ProcedureSpec,
    scenario: &ScenarioSpec,
    covariates: &[CovariateProfile],
    responses: &[bool],
    statistic: S,
    observed: f64,
    resamples: usize,
    rng: &mut RngStream,
) -> Result<f64>
where
    S: Fn(&[TreatmentArm], &[bool]) -> f64,
{
    if procedure.uses_responses() {
        return Err(SimError::UnsupportedProcedure(format!(
            "{} adapts to responses; re-randomization inference is not available",
            procedure.id
        )));
    }
    if covariates.len() != responses.len() {
        return Err(SimError::InvalidInput(
            "covariate and response sequences differ in length".into(),
        ));
    }
    let mut exceed = 0usize;
    let mut arms = Vec::with_capacity(covariates.len());
    for _ in 0..resamples {
        let mut proc_ = procedure.build(scenario)?;
        let mut state = TrialState::with_capacity(scenario.discretizer.clone(), covariates.len());
        arms.clear();
        for (profile, &y) in covariates.iter().zip(responses) {
            let p = proc_.prob_a(&state, profile)?;
            let arm = if rng.bernoulli(p) {
                TreatmentArm::A
            } else {
                TreatmentArm::B
            };
            state.apply_assignment(*profile, arm, Some(y));
            proc_.observe(&state);
            arms.push(arm);
        }
        if statistic(&arms, responses) >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (resamples + 1) as f64)
}
