//! Sliding-window unrolling and the model checker on generated executions.

use drlcheck::checker::{self, CheckConfig, Outcome, Property};
use drlcheck::fixtures;
use drlcheck::oracle::generate_trace;
use drlcheck::{solve, SolverConfig, Start};

#[test]
fn generated_traces_satisfy_unrolled_constraints() {
    for seed in 0..30 {
        let spec = fixtures::random_aurora(seed);
        for k in 1..=4 {
            let trace = generate_trace(&spec, k, seed);
            let q = spec.unroll(k, Start::FromAnywhere).unwrap();
            assert!(q.is_satisfied_by(&trace, 1e-12), "seed {seed}, k {k}");
            for w in trace.windows(2) {
                assert!(spec.is_transition(&w[0], &w[1], 0.0));
            }
        }
    }
}

#[test]
fn perturbed_traces_break_coupling() {
    let spec = fixtures::random_aurora(3);
    let mut trace = generate_trace(&spec, 3, 3);
    let q = spec.unroll(3, Start::FromAnywhere).unwrap();
    // step 0 of copy 1 must equal step 1 of copy 0
    trace[1][spec.position(0, 2)] += 0.5;
    assert!(!q.is_satisfied_by(&trace, 1e-9));
}

#[test]
fn coupling_count() {
    for seed in 0..5 {
        let spec = fixtures::random_aurora(seed);
        let (t, f) = (spec.window(), spec.fields_per_step());
        for k in 1..=5 {
            let q = spec.unroll(k, Start::FromAnywhere).unwrap();
            assert_eq!(q.coupling().len(), (t - 1) * f * (k - 1));
        }
    }
    let (spec, _) = fixtures::aurora_mini();
    assert_eq!(spec.unroll(4, Start::FromInitial).unwrap().coupling().len(), 2 * 3 * 3);
}

#[test]
fn witnesses_share_history_exactly() {
    let cfg = SolverConfig::default();
    for seed in 0..15 {
        let spec = fixtures::random_aurora(seed);
        let q = spec
            .unroll(3, Start::FromAnywhere)
            .unwrap()
            .conjoin(drlcheck::constraint::output_at_least(0, 0.0).on_copy(2))
            .unwrap();
        let v = solve(&q, &cfg).unwrap();
        let Some(w) = v.witness else { continue };
        for c in 0..2 {
            for f in 0..spec.fields_per_step() {
                let a = w.inputs[c + 1][spec.position(0, f)];
                let b = w.inputs[c][spec.position(1, f)];
                assert_eq!(a, b, "seed {seed}, copy {c}, field {f}");
            }
        }
    }
}

#[test]
fn bmc_refutation_persists_at_larger_k() {
    let (spec, bad) = fixtures::depth3();
    let cfg = CheckConfig::default();
    for k in 1..=5 {
        let r = checker::bmc(&spec, &bad, k, &cfg).unwrap();
        if k < 3 {
            assert!(matches!(r.outcome, Outcome::Exhausted { .. }), "k {k}");
        } else {
            let Outcome::Refuted { k: found, ref trace, .. } = r.outcome else {
                panic!("k {k}: {:?}", r.outcome)
            };
            assert_eq!(found, 3);
            assert!(checker::validate_counterexample(
                &spec,
                &Property::Safety(bad.clone()),
                trace,
                None,
                1e-6,
                1e-6
            ));
        }
    }
}

#[test]
fn ladder_proofs_persist_at_larger_k() {
    let cfg = CheckConfig::default();
    for (k_star, d) in fixtures::LADDER {
        let (spec, good) = fixtures::liveness_ladder(d);
        let p = Property::Liveness(good);
        for k in 1..=6 {
            let r = checker::induction_at(&spec, &p, k, &cfg).unwrap();
            assert_eq!(r.is_proved(), k >= k_star, "k* {k_star}, k {k}");
        }
    }
}
