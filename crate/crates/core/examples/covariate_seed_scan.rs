//! Scans covariate-matrix seeds and prints the expected number of failures
//! under equal allocation for each bundled model.
//!
//! Usage: cargo run --release -p simlab-core --example covariate_seed_scan -- FROM TO

use simlab_core::rng::RngStream;
use simlab_core::scenario::{generate_covariates, response_probability, ScenarioSpec};
use simlab_core::trial::TreatmentArm;

fn balanced_failures(spec: &ScenarioSpec, seed: u64) -> f64 {
    let z = generate_covariates(spec, &mut RngStream::covariates(seed, 0));
    z.iter()
        .map(|p| {
            let pa = response_probability(spec.theta(TreatmentArm::A), p).unwrap();
            let pb = response_probability(spec.theta(TreatmentArm::B), p).unwrap();
            1.0 - 0.5 * (pa + pb)
        })
        .sum()
}

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (from, to) = (args.first().copied().unwrap_or(1), args.get(1).copied().unwrap_or(100));
    let models: Vec<ScenarioSpec> = ["model1", "model2", "model3"]
        .iter()
        .map(|m| ScenarioSpec::preset(m).unwrap())
        .collect();
    println!("seed,model1,model2,model3");
    for seed in from..=to {
        let f: Vec<String> = models
            .iter()
            .map(|m| format!("{:.3}", balanced_failures(m, seed)))
            .collect();
        println!("{seed},{}", f.join(","));
    }
}
