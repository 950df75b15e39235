//! Monte-Carlo study runner and summary output.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cara::{expected_failures, target_allocation, TargetKind};
use crate::error::{Result, SimError};
use crate::estimation::{
    arm_design, fit_logistic_design, ks_distance, stratified_logor_test, wald_test_at_z0,
    StratifiedTable, TestOutcome,
};
use crate::procedure::ProcedureSpec;
use crate::rng::RngStream;
use crate::scenario::{generate_covariates, simulate_response, ScenarioSpec, TestKind};
use crate::trial::{CovariateProfile, TreatmentArm, TrialState};

/// Metrics of one simulated trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub prop_a: f64,
    /// Proportion on A among males; `None` when no male was enrolled.
    pub prop_a_stratum0: Option<f64>,
    pub ks_age: f64,
    pub failures: usize,
    pub rejected: bool,
    /// False when the end-of-trial test could not be computed.
    pub test_estimable: bool,
    pub fit_failures: usize,
}

/// Runs the end-of-trial test configured by the scenario.
pub fn trial_test(scenario: &ScenarioSpec, state: &TrialState) -> Result<TestOutcome> {
    match scenario.test {
        TestKind::Wald => {
            let fit = |arm| {
                let (x, y) = arm_design(state, arm);
                fit_logistic_design(&x, &y, 4, None)
            };
            let fa = fit(TreatmentArm::A)?;
            let fb = fit(TreatmentArm::B)?;
            let [z1, z2, z3] = scenario.reference_profile;
            wald_test_at_z0(&fa, &fb, &[1.0, z1, z2, z3], scenario.alpha)
        }
        TestKind::StratifiedLogor => {
            stratified_logor_test(&StratifiedTable::by_gender(state), scenario.alpha)
        }
    }
}

/// Metrics computed from the record list of a finished trial.
pub fn evaluate_trial(scenario: &ScenarioSpec, state: &TrialState, fit_failures: usize) -> TrialResult {
    let n = state.len().max(1) as f64;
    let ages = |arm: TreatmentArm| -> Vec<f64> {
        state
            .records()
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| f64::from(r.profile.age))
            .collect()
    };
    // an arm without patients is maximally unbalanced
    let ks_age = ks_distance(&ages(TreatmentArm::A), &ages(TreatmentArm::B)).unwrap_or(1.0);
    let males: Vec<_> = state.records().iter().filter(|r| r.profile.gender == 0).collect();
    let prop_a_stratum0 = (!males.is_empty()).then(|| {
        males.iter().filter(|r| r.arm == TreatmentArm::A).count() as f64 / males.len() as f64
    });
    let test = trial_test(scenario, state);
    TrialResult {
        prop_a: state.count_a() as f64 / n,
        prop_a_stratum0,
        ks_age,
        failures: state.records().iter().filter(|r| r.response == Some(false)).count(),
        rejected: matches!(test, Ok(TestOutcome { reject: true, .. })),
        test_estimable: test.is_ok(),
        fit_failures,
    }
}

/// Simulates one trial; each patient consumes one uniform for the arm and one
/// for the response.
pub fn simulate_trial(
    scenario: &ScenarioSpec,
    procedure: &ProcedureSpec,
    covariates: &[CovariateProfile],
    stream: &mut RngStream,
) -> Result<(TrialState, usize)> {
    let mut proc_ = procedure.build(scenario)?;
    let mut state = TrialState::with_capacity(scenario.discretizer.clone(), covariates.len());
    for profile in covariates {
        let p = proc_.prob_a(&state, profile)?;
        let arm = if stream.bernoulli(p) {
            TreatmentArm::A
        } else {
            TreatmentArm::B
        };
        let y = simulate_response(scenario.theta(arm), profile, stream)?;
        state.apply_assignment(*profile, arm, Some(y));
        proc_.observe(&state);
    }
    Ok((state, proc_.fit_failures()))
}

pub fn run_replication(
    scenario: &ScenarioSpec,
    procedure: &ProcedureSpec,
    covariates: &[CovariateProfile],
    stream: &mut RngStream,
) -> Result<TrialResult> {
    let (state, fit_failures) = simulate_trial(scenario, procedure, covariates, stream)?;
    Ok(evaluate_trial(scenario, &state, fit_failures))
}

/// Across-replication means and standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub procedure: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub prop_a_mean: f64,
    pub prop_a_sd: f64,
    pub prop_a_s0_mean: f64,
    pub prop_a_s0_sd: f64,
    pub ks_age_mean: f64,
    pub ks_age_sd: f64,
    pub reject_rate: f64,
    pub failures_mean: f64,
    pub failures_sd: f64,
    pub fit_failure_rate: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl StudySummary {
    /// Aggregates results in the given (replication) order.
    pub fn from_results(procedure: &str, n: usize, seed: u64, results: &[TrialResult]) -> Self {
        let col = |f: &dyn Fn(&TrialResult) -> f64| results.iter().map(f).collect::<Vec<_>>();
        let (prop_a_mean, prop_a_sd) = mean_sd(&col(&|r| r.prop_a));
        let s0: Vec<f64> = results.iter().filter_map(|r| r.prop_a_stratum0).collect();
        let (prop_a_s0_mean, prop_a_s0_sd) = mean_sd(&s0);
        let (ks_age_mean, ks_age_sd) = mean_sd(&col(&|r| r.ks_age));
        let (failures_mean, failures_sd) = mean_sd(&col(&|r| r.failures as f64));
        let reps = results.len();
        let rate = |f: &dyn Fn(&TrialResult) -> bool| {
            results.iter().filter(|r| f(r)).count() as f64 / reps.max(1) as f64
        };
        Self {
            procedure: procedure.to_string(),
            n,
            reps,
            seed,
            prop_a_mean,
            prop_a_sd,
            prop_a_s0_mean,
            prop_a_s0_sd,
            ks_age_mean,
            ks_age_sd,
            reject_rate: rate(&|r| r.rejected),
            failures_mean,
            failures_sd,
            fit_failure_rate: rate(&|r| !r.test_estimable),
        }
    }
}

/// Options of a study run.
#[derive(Clone, Debug, Default)]
pub struct StudyOptions {
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
    /// Row label; defaults to the procedure id.
    pub label: Option<String>,
}

/// The covariate sequence of replication `rep` (1-based). With a fixed matrix
/// every replication shares the sequence generated from the scenario seed.
pub fn replication_covariates(scenario: &ScenarioSpec, seed: u64, rep: u64) -> Vec<CovariateProfile> {
    if scenario.fixed_covariate_matrix {
        generate_covariates(scenario, &mut RngStream::covariates(scenario.seed, 0))
    } else {
        generate_covariates(scenario, &mut RngStream::covariates(seed, rep))
    }
}

/// Runs `reps` replications on streams `1..=reps` of `seed`.
pub fn run_study(
    scenario: &ScenarioSpec,
    procedure: &ProcedureSpec,
    reps: usize,
    seed: u64,
    options: &StudyOptions,
) -> Result<StudySummary> {
    scenario.validate()?;
    if reps == 0 {
        return Err(SimError::InvalidParameter("reps must be at least 1".into()));
    }
    if options.workers == Some(0) {
        return Err(SimError::InvalidParameter("workers must be at least 1".into()));
    }
    procedure.build(scenario)?;
    let fixed = scenario
        .fixed_covariate_matrix
        .then(|| replication_covariates(scenario, seed, 0));
    let run = |rep: u64| -> Result<TrialResult> {
        let owned;
        let covariates = match &fixed {
            Some(z) => z,
            None => {
                owned = replication_covariates(scenario, seed, rep);
                &owned
            }
        };
        run_replication(scenario, procedure, covariates, &mut RngStream::new(seed, rep))
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = options.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;
    let results: Vec<TrialResult> = pool.install(|| {
        (1..=reps as u64)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()
    })?;
    let label = options
        .label
        .clone()
        .unwrap_or_else(|| procedure.id.to_string());
    Ok(StudySummary::from_results(&label, scenario.n, seed, &results))
}

pub fn write_csv<W: Write>(summaries: &[StudySummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(summaries: &[StudySummary], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, summaries)?;
    writeln!(out)?;
    Ok(())
}

/// Preset simulation tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetTable {
    /// Null model, n = 200.
    T71,
    /// Treatment-by-covariate interaction, n = 200.
    T72,
    /// Same arms as above at n = 160.
    T73,
}

impl PresetTable {
    pub fn scenario(self) -> Result<ScenarioSpec> {
        ScenarioSpec::preset(match self {
            PresetTable::T71 => "model1",
            PresetTable::T72 => "model2",
            PresetTable::T73 => "model3",
        })
    }

    /// Row labels and procedure ids in table order.
    pub fn rows() -> [(&'static str, &'static str); 8] {
        [
            ("CRD", "crd"),
            ("SPBD", "spbd"),
            ("P-S", "pocock-simon"),
            ("CARA 1", "cara1"),
            ("CARA 2", "cara2"),
            ("CARA 3", "cara3"),
            ("CARA 4", "cara4"),
            ("CARA 5", "cara5"),
        ]
    }
}

/// All eight rows of a preset table; `progress` is called before each row.
pub fn reproduce_table(
    table: PresetTable,
    reps: usize,
    seed: u64,
    workers: Option<usize>,
    mut progress: impl FnMut(&str),
) -> Result<Vec<StudySummary>> {
    let scenario = table.scenario()?;
    PresetTable::rows()
        .into_iter()
        .map(|(label, id)| {
            progress(label);
            let options = StudyOptions {
                workers,
                label: Some(label.to_string()),
            };
            run_study(&scenario, &ProcedureSpec::parse(id)?, reps, seed, &options)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleReport {
    pub rule: TargetKind,
    /// Proportion to arm A per stratum.
    pub proportions: Vec<f64>,
    pub expected_failures: f64,
    pub failures_saved_vs_balanced: f64,
    /// `1/(n pi pA qA) + 1/(n (1 - pi) pB qB)` per stratum.
    pub log_or_variance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedDesignReport {
    pub success_probabilities: Vec<(f64, f64)>,
    pub stratum_sizes: Vec<f64>,
    pub rules: Vec<RuleReport>,
}

pub fn fixed_design_report(
    success: &[(f64, f64)],
    sizes: &[f64],
    rules: &[TargetKind],
) -> Result<FixedDesignReport> {
    let balanced = expected_failures(&vec![0.5; success.len()], success, sizes)?;
    let rules = rules
        .iter()
        .map(|&rule| {
            let proportions = success
                .iter()
                .map(|&(pa, pb)| target_allocation(rule, pa, pb))
                .collect::<Result<Vec<_>>>()?;
            let failures = expected_failures(&proportions, success, sizes)?;
            let log_or_variance = proportions
                .iter()
                .zip(success)
                .zip(sizes)
                .map(|((&pi, &(pa, pb)), &n)| {
                    1.0 / (n * pi * pa * (1.0 - pa)) + 1.0 / (n * (1.0 - pi) * pb * (1.0 - pb))
                })
                .collect();
            Ok(RuleReport {
                rule,
                proportions,
                expected_failures: failures,
                failures_saved_vs_balanced: balanced - failures,
                log_or_variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FixedDesignReport {
        success_probabilities: success.to_vec(),
        stratum_sizes: sizes.to_vec(),
        rules,
    })
}

/// Two gender strata of 100 patients with success rates (0.95, 0.70) and
/// (0.70, 0.95), compared under the balanced, Neyman and failure-optimal rules.
pub fn two_stratum_report() -> Result<FixedDesignReport> {
    fixed_design_report(
        &[(0.95, 0.70), (0.70, 0.95)],
        &[100.0, 100.0],
        &[
            TargetKind::Balanced,
            TargetKind::NeymanLogOR,
            TargetKind::FailureOptimalLogOR,
        ],
    )
}
