//! Procedure registry: ids, parameter maps and the sequential interface the
//! simulation engine drives.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cara::{
    bb_normal_assign, cara5_assign, cara_assign, covariate_adjusted_difference,
    stratified_dbcd_assign, BurnIn, CaraState, StratumCounts, TargetKind,
};
use crate::covadaptive::{
    atkinson_da_assign, pocock_simon_assign, raghavarao_assign, Psi, UrnBank, UrnSelection,
    NUM_COVARIATES,
};
use crate::error::{Result, SimError};
use crate::restricted::{crd_assign, efron_bcd_assign, BlockState, SmithRule, StratifiedBlocks};
use crate::scenario::ScenarioSpec;
use crate::trial::{CovariateProfile, TrialState};

const DEFAULTS: &str = include_str!("../../../defaults.json");

/// Default parameter maps keyed by procedure id (`cara` covers `cara1`..`cara5`).
pub fn default_parameters() -> Map<String, Value> {
    serde_json::from_str(DEFAULTS).expect("bundled defaults are valid JSON")
}

/// Sequential allocation rule. The engine calls `prob_a` for the incoming
/// patient, draws the arm, appends the record and then calls `observe`.
pub trait AllocationProcedure: Send {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64>;

    fn observe(&mut self, _state: &TrialState) {}

    /// Mid-trial model refits that failed.
    fn fit_failures(&self) -> usize {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcedureId {
    Crd,
    Efron,
    Pbd,
    Spbd,
    Smith,
    PocockSimon,
    Taves,
    WeiUrn,
    Raghavarao,
    AtkinsonDa,
    Dbcd,
    Cara1,
    Cara2,
    Cara3,
    Cara4,
    Cara5,
    BbNormal,
}

impl ProcedureId {
    pub const ALL: [ProcedureId; 17] = [
        ProcedureId::Crd,
        ProcedureId::Efron,
        ProcedureId::Pbd,
        ProcedureId::Spbd,
        ProcedureId::Smith,
        ProcedureId::PocockSimon,
        ProcedureId::Taves,
        ProcedureId::WeiUrn,
        ProcedureId::Raghavarao,
        ProcedureId::AtkinsonDa,
        ProcedureId::Dbcd,
        ProcedureId::Cara1,
        ProcedureId::Cara2,
        ProcedureId::Cara3,
        ProcedureId::Cara4,
        ProcedureId::Cara5,
        ProcedureId::BbNormal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProcedureId::Crd => "crd",
            ProcedureId::Efron => "efron",
            ProcedureId::Pbd => "pbd",
            ProcedureId::Spbd => "spbd",
            ProcedureId::Smith => "smith",
            ProcedureId::PocockSimon => "pocock-simon",
            ProcedureId::Taves => "taves",
            ProcedureId::WeiUrn => "wei-urn",
            ProcedureId::Raghavarao => "raghavarao",
            ProcedureId::AtkinsonDa => "atkinson-da",
            ProcedureId::Dbcd => "dbcd",
            ProcedureId::Cara1 => "cara1",
            ProcedureId::Cara2 => "cara2",
            ProcedureId::Cara3 => "cara3",
            ProcedureId::Cara4 => "cara4",
            ProcedureId::Cara5 => "cara5",
            ProcedureId::BbNormal => "bb-normal",
        }
    }

    /// Key into the defaults table.
    fn defaults_key(self) -> &'static str {
        match self {
            ProcedureId::Cara1
            | ProcedureId::Cara2
            | ProcedureId::Cara3
            | ProcedureId::Cara4
            | ProcedureId::Cara5 => "cara",
            other => other.as_str(),
        }
    }

    /// Whether assignment probabilities depend on observed responses.
    pub fn uses_responses(self) -> bool {
        matches!(
            self,
            ProcedureId::Dbcd
                | ProcedureId::Cara1
                | ProcedureId::Cara2
                | ProcedureId::Cara3
                | ProcedureId::Cara4
                | ProcedureId::Cara5
                | ProcedureId::BbNormal
        )
    }

    pub fn valid_ids() -> String {
        Self::ALL.map(|p| p.as_str()).join(", ")
    }
}

impl fmt::Display for ProcedureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcedureId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                SimError::Config(format!(
                    "unknown procedure '{s}'; valid ids: {}",
                    Self::valid_ids()
                ))
            })
    }
}

/// A procedure id with parameter overrides on top of the bundled defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcedureSpec {
    pub id: ProcedureId,
    pub params: Map<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EfronParams {
    p: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockParams {
    block_size: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SmithParams {
    rho: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PocockSimonParams {
    p: f64,
    weights: [f64; NUM_COVARIATES],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TavesParams {
    weights: [f64; NUM_COVARIATES],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UrnParams {
    alpha: [u64; 2],
    beta: u64,
    selection: UrnSelection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AtkinsonParams {
    psi: Psi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum StratifyBy {
    Gender,
    Full,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DbcdParams {
    gamma: f64,
    target: TargetKind,
    stratify_by: StratifyBy,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaraParams {
    m0: Option<usize>,
    clamp: Option<f64>,
    burn_in_rule: BurnIn,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BbParams {
    scale: f64,
    m0: Option<usize>,
    burn_in_rule: BurnIn,
}

impl ProcedureSpec {
    pub fn new(id: ProcedureId) -> Self {
        Self {
            id,
            params: Map::new(),
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Ok(Self::new(id.parse()?))
    }

    pub fn with_param(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Parses `key=value`; the value is read as JSON when possible and as a
    /// plain string otherwise.
    pub fn with_assignment(self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| {
            SimError::Config(format!("parameter '{assignment}' is not of the form key=value"))
        })?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(self.with_param(key.trim(), value))
    }

    pub fn uses_responses(&self) -> bool {
        self.id.uses_responses()
    }

    /// Defaults overlaid with the explicit parameters.
    pub fn resolved_params(&self) -> Map<String, Value> {
        let mut merged = match default_parameters().remove(self.id.defaults_key()) {
            Some(Value::Object(m)) => m,
            _ => Map::new(),
        };
        for (k, v) in &self.params {
            merged.insert(k.clone(), v.clone());
        }
        merged
    }

    fn params_as<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(Value::Object(self.resolved_params())).map_err(|e| {
            SimError::Config(format!("parameters of '{}': {e}", self.id))
        })
    }

    /// Fresh procedure state for one trial under `scenario`.
    pub fn build(&self, scenario: &ScenarioSpec) -> Result<Box<dyn AllocationProcedure>> {
        Ok(match self.id {
            ProcedureId::Crd => {
                self.params_as::<NoParams>()?;
                Box::new(Crd)
            }
            ProcedureId::Efron => {
                let p = self.params_as::<EfronParams>()?.p;
                efron_bcd_assign(0, p)?;
                Box::new(Efron { p })
            }
            ProcedureId::Pbd => {
                let size = self.params_as::<BlockParams>()?.block_size;
                Box::new(Pbd {
                    block: BlockState::new(size)?,
                })
            }
            ProcedureId::Spbd => {
                let size = self.params_as::<BlockParams>()?.block_size;
                Box::new(Spbd {
                    blocks: StratifiedBlocks::new(1 << NUM_COVARIATES, size)?,
                })
            }
            ProcedureId::Smith => Box::new(Smith {
                rule: SmithRule::new(self.params_as::<SmithParams>()?.rho)?,
            }),
            ProcedureId::PocockSimon => {
                let PocockSimonParams { p, weights } = self.params_as()?;
                Box::new(PocockSimon::new(p, weights)?)
            }
            ProcedureId::Taves => {
                let TavesParams { weights } = self.params_as()?;
                Box::new(PocockSimon::new(1.0, weights)?)
            }
            ProcedureId::WeiUrn => {
                let UrnParams {
                    alpha,
                    beta,
                    selection,
                } = self.params_as()?;
                Box::new(WeiUrn {
                    bank: UrnBank::new(alpha, beta, selection)?,
                })
            }
            ProcedureId::Raghavarao => {
                self.params_as::<NoParams>()?;
                Box::new(Raghavarao)
            }
            ProcedureId::AtkinsonDa => {
                let AtkinsonParams { psi } = self.params_as()?;
                psi.validate()?;
                Box::new(AtkinsonDa { psi })
            }
            ProcedureId::Dbcd => {
                let DbcdParams {
                    gamma,
                    target,
                    stratify_by,
                } = self.params_as()?;
                // validates gamma and the target kind
                stratified_dbcd_assign(&StratumCounts::default(), gamma, target)?;
                let strata = match stratify_by {
                    StratifyBy::Gender => 2,
                    StratifyBy::Full => 1 << NUM_COVARIATES,
                };
                Box::new(Dbcd {
                    gamma,
                    target,
                    stratify_by,
                    counts: vec![StratumCounts::default(); strata],
                })
            }
            ProcedureId::Cara1
            | ProcedureId::Cara2
            | ProcedureId::Cara3
            | ProcedureId::Cara4
            | ProcedureId::Cara5 => {
                let CaraParams {
                    m0,
                    clamp,
                    burn_in_rule,
                } = self.params_as()?;
                let burn_in = m0.map_or(scenario.burn_in, |m| 2 * m);
                let rule = match self.id {
                    ProcedureId::Cara1 => CaraRule::Target(TargetKind::RVAOdds),
                    ProcedureId::Cara2 => CaraRule::Target(TargetKind::SqrtRSIHR),
                    ProcedureId::Cara3 => CaraRule::Target(TargetKind::NeymanCARA),
                    ProcedureId::Cara4 => CaraRule::Target(TargetKind::OptimalCARA),
                    _ => CaraRule::DirectionalDerivative,
                };
                Box::new(Cara {
                    state: CaraState::new(burn_in, burn_in_rule, clamp)?,
                    rule,
                })
            }
            ProcedureId::BbNormal => {
                let BbParams {
                    scale,
                    m0,
                    burn_in_rule,
                } = self.params_as()?;
                bb_normal_assign(0.0, scale)?;
                let burn_in = m0.map_or(scenario.burn_in, |m| 2 * m);
                Box::new(BbNormal {
                    scale,
                    burn_in,
                    burn_in_rule,
                })
            }
        })
    }
}

struct Crd;

impl AllocationProcedure for Crd {
    fn prob_a(&self, _: &TrialState, _: &CovariateProfile) -> Result<f64> {
        Ok(crd_assign())
    }
}

struct Efron {
    p: f64,
}

impl AllocationProcedure for Efron {
    fn prob_a(&self, state: &TrialState, _: &CovariateProfile) -> Result<f64> {
        efron_bcd_assign(state.count_a() as i64 - state.count_b() as i64, self.p)
    }
}

struct Pbd {
    block: BlockState,
}

impl AllocationProcedure for Pbd {
    fn prob_a(&self, _: &TrialState, _: &CovariateProfile) -> Result<f64> {
        Ok(self.block.prob_a())
    }

    fn observe(&mut self, state: &TrialState) {
        if let Some(last) = state.last() {
            self.block.record(last.arm);
        }
    }
}

struct Spbd {
    blocks: StratifiedBlocks,
}

impl AllocationProcedure for Spbd {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        Ok(self.blocks.prob_a(state.discretizer().stratum(profile)))
    }

    fn observe(&mut self, state: &TrialState) {
        if let Some(last) = state.last() {
            let stratum = state.discretizer().stratum(&last.profile);
            self.blocks.record(stratum, last.arm);
        }
    }
}

struct Smith {
    rule: SmithRule,
}

impl AllocationProcedure for Smith {
    fn prob_a(&self, state: &TrialState, _: &CovariateProfile) -> Result<f64> {
        Ok(self.rule.prob_a(state.count_a(), state.count_b()))
    }
}

struct PocockSimon {
    p: f64,
    weights: [f64; NUM_COVARIATES],
}

impl PocockSimon {
    fn new(p: f64, weights: [f64; NUM_COVARIATES]) -> Result<Self> {
        let empty = TrialState::new(Default::default());
        pocock_simon_assign(&empty, &[0; NUM_COVARIATES], &weights, p)?;
        Ok(Self { p, weights })
    }
}

impl AllocationProcedure for PocockSimon {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        pocock_simon_assign(state, &state.levels_of(profile), &self.weights, self.p)
    }
}

struct WeiUrn {
    bank: UrnBank,
}

impl AllocationProcedure for WeiUrn {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        Ok(self.bank.prob_a(&state.levels_of(profile)))
    }

    fn observe(&mut self, state: &TrialState) {
        if let Some(last) = state.last() {
            self.bank.update(&last.levels, last.arm);
        }
    }
}

/// Fair coin until the distance rule is defined.
struct Raghavarao;

impl AllocationProcedure for Raghavarao {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        match raghavarao_assign(state, profile) {
            Ok([pa, _]) => Ok(pa),
            Err(SimError::NotReady(_)) => Ok(0.5),
            Err(e) => Err(e),
        }
    }
}

struct AtkinsonDa {
    psi: Psi,
}

impl AllocationProcedure for AtkinsonDa {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        let records = state.records();
        let design = DMatrix::from_fn(records.len(), NUM_COVARIATES + 1, |i, j| {
            records[i].profile.design_row()[j]
        });
        let t: Vec<i32> = records.iter().map(|r| r.arm.sign()).collect();
        match atkinson_da_assign(&design, &t, &profile.design_row(), self.psi) {
            Ok(p) => Ok(p),
            Err(SimError::NotReady(_)) => Ok(0.5),
            Err(e) => Err(e),
        }
    }
}

struct Dbcd {
    gamma: f64,
    target: TargetKind,
    stratify_by: StratifyBy,
    counts: Vec<StratumCounts>,
}

impl Dbcd {
    fn stratum(&self, state: &TrialState, profile: &CovariateProfile) -> usize {
        match self.stratify_by {
            StratifyBy::Gender => profile.gender.min(1) as usize,
            StratifyBy::Full => state.discretizer().stratum(profile),
        }
    }
}

impl AllocationProcedure for Dbcd {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        let s = self.stratum(state, profile);
        stratified_dbcd_assign(&self.counts[s], self.gamma, self.target)
    }

    fn observe(&mut self, state: &TrialState) {
        if let Some(last) = state.last() {
            if let Some(y) = last.response {
                let s = self.stratum(state, &last.profile);
                self.counts[s].record(last.arm, y);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum CaraRule {
    Target(TargetKind),
    DirectionalDerivative,
}

struct Cara {
    state: CaraState,
    rule: CaraRule,
}

impl AllocationProcedure for Cara {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        match self.rule {
            CaraRule::Target(kind) => cara_assign(&self.state, state, kind, profile),
            CaraRule::DirectionalDerivative => cara5_assign(&self.state, state, profile),
        }
    }

    fn observe(&mut self, state: &TrialState) {
        self.state.observe(state);
    }

    fn fit_failures(&self) -> usize {
        self.state.fit_failures()
    }
}

struct BbNormal {
    scale: f64,
    burn_in: usize,
    burn_in_rule: BurnIn,
}

impl AllocationProcedure for BbNormal {
    fn prob_a(&self, state: &TrialState, profile: &CovariateProfile) -> Result<f64> {
        if state.len() < self.burn_in {
            return self.burn_in_rule.prob_a(state, profile);
        }
        match covariate_adjusted_difference(state) {
            Ok(d) => bb_normal_assign(d, self.scale),
            Err(SimError::NotReady(_)) => self.burn_in_rule.prob_a(state, profile),
            Err(e) => Err(e),
        }
    }
}
