//! Domain types and sequential bookkeeping shared by every procedure.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::covadaptive::{Discretizer, Levels, NUM_COVARIATES};

/// One of the two arms under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreatmentArm {
    A,
    B,
}

impl TreatmentArm {
    /// `+1` for A, `-1` for B.
    pub fn sign(self) -> i32 {
        match self {
            TreatmentArm::A => 1,
            TreatmentArm::B => -1,
        }
    }

    pub fn from_sign(sign: i32) -> Option<Self> {
        match sign {
            1 => Some(TreatmentArm::A),
            -1 => Some(TreatmentArm::B),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            TreatmentArm::A => 0,
            TreatmentArm::B => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            TreatmentArm::A => TreatmentArm::B,
            TreatmentArm::B => TreatmentArm::A,
        }
    }
}

impl fmt::Display for TreatmentArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreatmentArm::A => f.write_str("A"),
            TreatmentArm::B => f.write_str("B"),
        }
    }
}

/// Baseline covariates of one patient: gender (0 male, 1 female), age in
/// years, cholesterol level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateProfile {
    pub gender: u8,
    pub age: u32,
    pub cholesterol: f64,
}

impl CovariateProfile {
    pub fn new(gender: u8, age: u32, cholesterol: f64) -> Self {
        Self {
            gender,
            age,
            cholesterol,
        }
    }

    /// Design row with leading intercept: `(1, z1, z2, z3)`.
    pub fn design_row(&self) -> [f64; 4] {
        [1.0, self.gender as f64, self.age as f64, self.cholesterol]
    }

    /// Raw covariates without intercept.
    pub fn values(&self) -> [f64; 3] {
        [self.gender as f64, self.age as f64, self.cholesterol]
    }

    pub fn is_valid(&self) -> bool {
        self.gender <= 1 && (30..=75).contains(&self.age) && self.cholesterol.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    /// 1-based entry order.
    pub index: usize,
    pub profile: CovariateProfile,
    pub levels: Levels,
    pub arm: TreatmentArm,
    /// `Some(true)` success, `Some(false)` failure.
    pub response: Option<bool>,
}

/// Per covariate, per level, per arm counts `N_ijl(n)`.
pub type MarginCounts = [[[usize; 2]; 2]; NUM_COVARIATES];

/// Full sequential history of a trial with incrementally maintained counts.
#[derive(Clone, Debug)]
pub struct TrialState {
    discretizer: Discretizer,
    records: Vec<PatientRecord>,
    margins: MarginCounts,
    arms: [usize; 2],
    failures: usize,
}

impl TrialState {
    pub fn new(discretizer: Discretizer) -> Self {
        Self {
            discretizer,
            records: Vec::new(),
            margins: [[[0; 2]; 2]; NUM_COVARIATES],
            arms: [0; 2],
            failures: 0,
        }
    }

    pub fn with_capacity(discretizer: Discretizer, n: usize) -> Self {
        let mut state = Self::new(discretizer);
        state.records.reserve(n);
        state
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&PatientRecord> {
        self.records.last()
    }

    pub fn margin_counts(&self) -> &MarginCounts {
        &self.margins
    }

    /// `N_A(n)`.
    pub fn count_a(&self) -> usize {
        self.arms[0]
    }

    /// `N_B(n)`.
    pub fn count_b(&self) -> usize {
        self.arms[1]
    }

    pub fn arm_count(&self, arm: TreatmentArm) -> usize {
        self.arms[arm.index()]
    }

    /// `F(n)`.
    pub fn failures(&self) -> usize {
        self.failures
    }

    /// Levels of an incoming profile under this trial's discretizer.
    pub fn levels_of(&self, profile: &CovariateProfile) -> Levels {
        self.discretizer.discretize(profile)
    }

    pub fn apply_assignment(
        &mut self,
        profile: CovariateProfile,
        arm: TreatmentArm,
        response: Option<bool>,
    ) -> &PatientRecord {
        let levels = self.discretizer.discretize(&profile);
        for (i, &level) in levels.iter().enumerate() {
            self.margins[i][level as usize][arm.index()] += 1;
        }
        self.arms[arm.index()] += 1;
        if response == Some(false) {
            self.failures += 1;
        }
        self.records.push(PatientRecord {
            index: self.records.len() + 1,
            profile,
            levels,
            arm,
            response,
        });
        self.records.last().expect("just pushed")
    }

    /// Counts recomputed from the record list alone.
    pub fn recount(&self) -> (MarginCounts, [usize; 2], usize) {
        let mut margins = [[[0; 2]; 2]; NUM_COVARIATES];
        let mut arms = [0; 2];
        let mut failures = 0;
        for r in &self.records {
            let levels = self.discretizer.discretize(&r.profile);
            for (i, &level) in levels.iter().enumerate() {
                margins[i][level as usize][r.arm.index()] += 1;
            }
            arms[r.arm.index()] += 1;
            if r.response == Some(false) {
                failures += 1;
            }
        }
        (margins, arms, failures)
    }

    pub fn is_consistent(&self) -> bool {
        self.recount() == (self.margins, self.arms, self.failures)
    }

    /// Same history with every arm label exchanged.
    pub fn swapped(&self) -> Self {
        let mut out = Self::with_capacity(self.discretizer.clone(), self.len());
        for r in &self.records {
            out.apply_assignment(r.profile, r.arm.other(), r.response);
        }
        out
    }

    /// `N_A0(n) / N_0(n)`: proportion on A among patients at gender level 0.
    pub fn prop_a_in_level(&self, covariate: usize, level: usize) -> Option<f64> {
        let cell = self.margins[covariate][level];
        let total = cell[0] + cell[1];
        (total > 0).then(|| cell[0] as f64 / total as f64)
    }
}
