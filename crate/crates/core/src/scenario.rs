//! Generative scenarios: covariate distributions, per-arm logistic response
//! model, sample size and burn-in.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::covadaptive::Discretizer;
use crate::error::{Result, SimError};
use crate::rng::RngStream;
use crate::trial::{CovariateProfile, TreatmentArm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateGenerators {
    /// P(z1 = 1).
    #[serde(default = "default_gender_p")]
    pub gender_p: f64,
    #[serde(default = "default_age_min")]
    pub age_min: u32,
    #[serde(default = "default_age_max")]
    pub age_max: u32,
    #[serde(default = "default_chol_mean")]
    pub cholesterol_mean: f64,
    #[serde(default = "default_chol_sd")]
    pub cholesterol_sd: f64,
}

fn default_gender_p() -> f64 {
    0.5
}
fn default_age_min() -> u32 {
    30
}
fn default_age_max() -> u32 {
    75
}
fn default_chol_mean() -> f64 {
    200.0
}
fn default_chol_sd() -> f64 {
    20.0
}

impl Default for CovariateGenerators {
    fn default() -> Self {
        Self {
            gender_p: default_gender_p(),
            age_min: default_age_min(),
            age_max: default_age_max(),
            cholesterol_mean: default_chol_mean(),
            cholesterol_sd: default_chol_sd(),
        }
    }
}

/// End-of-trial hypothesis test applied in each replication.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    /// Wald test of the log-odds ratio at the reference profile.
    #[default]
    Wald,
    /// Omnibus stratified log-odds-ratio test over gender strata.
    StratifiedLogor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub covariates: CovariateGenerators,
    /// `(alpha, beta_1, beta_2, beta_3)` for arm A.
    pub theta_a: Vec<f64>,
    pub theta_b: Vec<f64>,
    /// Number of patients allocated by the burn-in procedure (`2 m0`).
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Seed of the covariate matrix.
    pub seed: u64,
    /// Hold one covariate matrix fixed across replications.
    #[serde(default = "default_true")]
    pub fixed_covariate_matrix: bool,
    #[serde(default)]
    pub discretizer: Discretizer,
    /// Covariate point `z0` at which the log-odds ratio is tested.
    #[serde(default = "default_reference")]
    pub reference_profile: [f64; 3],
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub test: TestKind,
}

fn default_burn_in() -> usize {
    80
}
fn default_true() -> bool {
    true
}
fn default_reference() -> [f64; 3] {
    [0.5, 52.5, 200.0]
}
fn default_alpha() -> f64 {
    0.05
}

const MODEL1: &str = include_str!("../../../scenarios/model1.json");
const MODEL2: &str = include_str!("../../../scenarios/model2.json");
const MODEL3: &str = include_str!("../../../scenarios/model3.json");

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            SimError::Config(format!("cannot read scenario {}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text).map_err(|e| match e {
            SimError::Json(j) => SimError::Config(format!(
                "scenario {} does not match the schema: {j}",
                path.as_ref().display()
            )),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Bundled scenarios: `model1`, `model2`, `model3`.
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "model1" => MODEL1,
            "model2" => MODEL2,
            "model3" => MODEL3,
            other => {
                return Err(SimError::Config(format!(
                    "unknown scenario preset '{other}' (expected model1, model2, model3)"
                )))
            }
        };
        Self::from_json(text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n <= self.burn_in {
            return bad(format!("n ({}) must exceed burn_in ({})", self.n, self.burn_in));
        }
        if self.theta_a.len() != 4 || self.theta_b.len() != 4 {
            return bad("theta_a and theta_b must have 4 entries (intercept + 3 covariates)".into());
        }
        if self.theta_a.iter().chain(&self.theta_b).any(|v| !v.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        let c = &self.covariates;
        if !(0.0..=1.0).contains(&c.gender_p) {
            return bad("gender_p must lie in [0, 1]".into());
        }
        if c.age_min > c.age_max || c.age_min < 30 || c.age_max > 75 {
            return bad("age range must satisfy 30 <= age_min <= age_max <= 75".into());
        }
        if !(c.cholesterol_sd > 0.0) || !c.cholesterol_mean.is_finite() {
            return bad("cholesterol distribution must have finite mean and positive sd".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)".into());
        }
        Ok(())
    }

    pub fn theta(&self, arm: TreatmentArm) -> &[f64] {
        match arm {
            TreatmentArm::A => &self.theta_a,
            TreatmentArm::B => &self.theta_b,
        }
    }
}

pub fn generate_covariates(spec: &ScenarioSpec, rng: &mut RngStream) -> Vec<CovariateProfile> {
    let c = &spec.covariates;
    let chol = Normal::new(c.cholesterol_mean, c.cholesterol_sd)
        .expect("validated cholesterol distribution");
    (0..spec.n)
        .map(|_| {
            let gender = u8::from(rng.bernoulli(c.gender_p));
            let age = rng.random_range(c.age_min..=c.age_max);
            let cholesterol = chol.sample(rng);
            CovariateProfile::new(gender, age, cholesterol)
        })
        .collect()
}

/// Numerically stable logistic c.d.f.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn linear_predictor(theta: &[f64], profile: &CovariateProfile) -> Result<f64> {
    if theta.len() != 4 {
        return Err(SimError::InvalidParameter(format!(
            "expected 4 coefficients, got {}",
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(SimError::InvalidParameter("non-finite coefficient".into()));
    }
    let z = profile.design_row();
    Ok(theta.iter().zip(z).map(|(t, z)| t * z).sum())
}

/// Success probability `1 / (1 + exp(-(alpha + sum beta_j z_j)))`.
pub fn response_probability(theta: &[f64], profile: &CovariateProfile) -> Result<f64> {
    linear_predictor(theta, profile).map(logistic)
}

/// Bernoulli response; consumes exactly one uniform.
pub fn simulate_response(
    theta: &[f64],
    profile: &CovariateProfile,
    rng: &mut RngStream,
) -> Result<bool> {
    let p = response_probability(theta, profile)?;
    Ok(rng.bernoulli(p))
}
