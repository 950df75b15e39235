use simlab_core::covadaptive::Discretizer;
use simlab_core::estimation::rerandomization_test;
use simlab_core::procedure::{AllocationProcedure, ProcedureId, ProcedureSpec};
use simlab_core::rng::RngStream;
use simlab_core::scenario::{generate_covariates, simulate_response, ScenarioSpec};
use simlab_core::trial::{CovariateProfile, TreatmentArm, TrialState};
use simlab_core::SimError;

fn random_profile(rng: &mut RngStream) -> CovariateProfile {
    let gender = u8::from(rng.bernoulli(0.5));
    let age = 30 + (rng.uniform() * 46.0) as u32;
    let cholesterol = 150.0 + 100.0 * rng.uniform();
    CovariateProfile::new(gender, age.min(75), cholesterol)
}

fn spec_for(id: ProcedureId) -> ProcedureSpec {
    let spec = ProcedureSpec::new(id);
    if id.uses_responses() && id != ProcedureId::Dbcd {
        spec.with_param("m0", 10.into())
    } else {
        spec
    }
}

fn feed(proc_: &mut dyn AllocationProcedure, state: &mut TrialState, p: CovariateProfile, arm: TreatmentArm, y: bool) {
    state.apply_assignment(p, arm, Some(y));
    proc_.observe(state);
}

/// Grows a history under the procedure itself, replays it with arm labels
/// exchanged and checks that the next probabilities are complementary.
#[test]
fn arm_swap_complement_symmetry_all_procedures() {
    let scenario = ScenarioSpec::preset("model1").unwrap();
    for id in ProcedureId::ALL {
        let spec = spec_for(id);
        let mut rng = RngStream::new(31, id as u64 + 1);
        let states = if id.uses_responses() { 150 } else { 300 };
        for _ in 0..states {
            let len = (rng.uniform() * 120.0) as usize;
            let mut proc_ = spec.build(&scenario).unwrap();
            let mut swapped = spec.build(&scenario).unwrap();
            let mut s = TrialState::new(Discretizer::default());
            let mut t = TrialState::new(Discretizer::default());
            for _ in 0..len {
                let profile = random_profile(&mut rng);
                let pa = proc_.prob_a(&s, &profile).unwrap();
                let arm = if rng.bernoulli(pa) { TreatmentArm::A } else { TreatmentArm::B };
                let y = rng.bernoulli(if arm == TreatmentArm::A { 0.7 } else { 0.4 });
                feed(proc_.as_mut(), &mut s, profile, arm, y);
                feed(swapped.as_mut(), &mut t, profile, arm.other(), y);
            }
            let next = random_profile(&mut rng);
            let p = proc_.prob_a(&s, &next).unwrap();
            let q = swapped.prob_a(&t, &next).unwrap();
            assert!((0.0..=1.0).contains(&p), "{id}: {p}");
            assert!((p + q - 1.0).abs() < 1e-9, "{id} after {len}: {p} + {q}");
        }
    }
}

#[test]
fn cara_burn_in_follows_pocock_simon_exactly() {
    let scenario = ScenarioSpec::preset("model2").unwrap();
    let z = generate_covariates(&scenario, &mut RngStream::covariates(scenario.seed, 0));
    let run = |id: &str| {
        let spec = ProcedureSpec::parse(id).unwrap();
        let mut proc_ = spec.build(&scenario).unwrap();
        let mut state = TrialState::new(scenario.discretizer.clone());
        let mut rng = RngStream::new(17, 1);
        let mut probs = Vec::new();
        for profile in &z[..scenario.burn_in] {
            let p = proc_.prob_a(&state, profile).unwrap();
            probs.push(p.to_bits());
            let arm = if rng.bernoulli(p) { TreatmentArm::A } else { TreatmentArm::B };
            let y = simulate_response(scenario.theta(arm), profile, &mut rng).unwrap();
            state.apply_assignment(*profile, arm, Some(y));
            proc_.observe(&state);
        }
        probs
    };
    let reference = run("pocock-simon");
    for id in ["cara1", "cara2", "cara3", "cara4", "cara5"] {
        assert_eq!(run(id), reference, "{id}");
    }
}

fn diff_in_proportions(arms: &[TreatmentArm], y: &[bool]) -> f64 {
    let mut n = [0f64; 2];
    let mut s = [0f64; 2];
    for (a, &r) in arms.iter().zip(y) {
        n[a.index()] += 1.0;
        s[a.index()] += f64::from(u8::from(r));
    }
    if n[0] == 0.0 || n[1] == 0.0 {
        return 0.0;
    }
    (s[0] / n[0] - s[1] / n[1]).abs()
}

#[test]
fn rerandomization_edge_cases() {
    let mut scenario = ScenarioSpec::preset("model1").unwrap();
    scenario.n = 30;
    scenario.burn_in = 10;
    let z = generate_covariates(&scenario, &mut RngStream::covariates(2, 0));
    let y: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
    let crd = ProcedureSpec::parse("crd").unwrap();
    let mut rng = RngStream::new(2, 1);
    let constant = |_: &[TreatmentArm], _: &[bool]| 1.0;
    assert_eq!(rerandomization_test(&crd, &scenario, &z, &y, constant, 1.0, 99, &mut rng).unwrap(), 1.0);
    let p = rerandomization_test(&crd, &scenario, &z, &y, diff_in_proportions, 2.0, 99, &mut rng).unwrap();
    assert!((p - 0.01).abs() < 1e-15);
    let cara = ProcedureSpec::parse("cara2").unwrap();
    assert!(matches!(
        rerandomization_test(&cara, &scenario, &z, &y, constant, 1.0, 9, &mut rng),
        Err(SimError::UnsupportedProcedure(_))
    ));
}

/// Under no treatment effect the Monte-Carlo p-value is super-uniform.
#[test]
fn rerandomization_null_size() {
    let mut scenario = ScenarioSpec::preset("model1").unwrap();
    scenario.n = 60;
    scenario.burn_in = 10;
    let spec = ProcedureSpec::parse("pocock-simon").unwrap();
    let outer = 1000;
    let mut rejections = 0;
    for rep in 0..outer {
        let z = generate_covariates(&scenario, &mut RngStream::covariates(5, rep));
        let mut rng = RngStream::new(5, rep + 1);
        let proc_ = spec.build(&scenario).unwrap();
        let mut state = TrialState::new(scenario.discretizer.clone());
        let mut y = Vec::new();
        let mut arms = Vec::new();
        for profile in &z {
            let p = proc_.prob_a(&state, profile).unwrap();
            let arm = if rng.bernoulli(p) { TreatmentArm::A } else { TreatmentArm::B };
            let r = simulate_response(scenario.theta(arm), profile, &mut rng).unwrap();
            state.apply_assignment(*profile, arm, Some(r));
            arms.push(arm);
            y.push(r);
        }
        let observed = diff_in_proportions(&arms, &y);
        let pv = rerandomization_test(&spec, &scenario, &z, &y, diff_in_proportions, observed, 199, &mut rng).unwrap();
        rejections += usize::from(pv <= 0.05);
    }
    let rate = rejections as f64 / outer as f64;
    assert!((rate - 0.05).abs() <= 0.02, "{rate}");
}
