//! Abstraction over-approximates and is monotone in the mask.

use drlcheck::abstraction::{abstract_query, solve_with_abstraction};
use drlcheck::constraint::output_at_least;
use drlcheck::fixtures;
use drlcheck::oracle::generate_trace;
use drlcheck::{solve, AbstractionMask, FieldSelection, Provenance, SolverConfig, Start};

fn masked_query(seed: u64) -> (drlcheck::TransitionSpec, drlcheck::Query) {
    let spec = fixtures::random_aurora(seed);
    let q = spec
        .unroll(2, Start::FromAnywhere)
        .unwrap()
        .conjoin(output_at_least(0, 0.3).on_copy(1))
        .unwrap()
        .conjoin(drlcheck::constraint::output_at_most(0, 0.0))
        .unwrap();
    (spec, q)
}

#[test]
fn abstraction_contains_every_concrete_point() {
    let mut hits = 0;
    for seed in 0..10 {
        let (spec, q) = masked_query(seed);
        let mask = AbstractionMask::resolve(&spec, &FieldSelection::OlderThan(1)).unwrap();
        let abs = abstract_query(&q, &spec, &mask).unwrap();
        for s in 0..50 {
            let trace = generate_trace(&spec, 2, seed * 1000 + s);
            if q.is_satisfied_by(&trace, 1e-9) {
                hits += 1;
                assert!(abs.is_satisfied_by(&trace, 1e-9), "seed {seed}, sample {s}");
            }
        }
    }
    assert!(hits > 0, "no sampled point satisfied any query");
}

#[test]
fn larger_masks_are_weaker() {
    let cfg = SolverConfig::default();
    for seed in 0..20 {
        let (spec, q) = masked_query(seed);
        let small = AbstractionMask::new(&spec, [(0, 0)]).unwrap();
        let large = AbstractionMask::resolve(&spec, &FieldSelection::OlderThan(1)).unwrap();
        assert!(small.is_subset_of(&large));
        let vs = solve(&abstract_query(&q, &spec, &small).unwrap(), &cfg).unwrap();
        let vl = solve(&abstract_query(&q, &spec, &large).unwrap(), &cfg).unwrap();
        let vc = solve(&q, &cfg).unwrap();
        if vl.is_unsat() {
            assert!(vs.is_unsat(), "seed {seed}");
        }
        if vs.is_unsat() {
            assert!(vc.is_unsat(), "seed {seed}");
        }
    }
}

#[test]
fn final_verdict_equals_direct() {
    let cfg = SolverConfig::default();
    for seed in 0..30 {
        let (spec, q) = masked_query(seed);
        let mask = AbstractionMask::resolve(&spec, &FieldSelection::OlderThan(1)).unwrap();
        let r = solve_with_abstraction(&q, &spec, &mask, &cfg).unwrap();
        assert_eq!(r.verdict.status, solve(&q, &cfg).unwrap().status, "seed {seed}");
        if r.provenance == Provenance::ProvedViaAbstraction {
            assert!(r.verdict.is_unsat());
        }
    }
}
