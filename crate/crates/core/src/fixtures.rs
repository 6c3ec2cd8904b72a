//! Small hand-built networks and transition systems with known answers.
//!
//! Used by the test suites and the example files under `fixtures/`. Each
//! constructor documents the property it was built to exhibit.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraint::{output_at_least, output_at_most, Interval, LinearConstraint, Query, Relation, VarRef};
use crate::network::{Layer, Network};
use crate::transition::{PredicateKind, StatePredicate, TransitionSpec};

/// Strictness margin baked into the fixture predicates.
pub const DELTA: f64 = 1e-6;

/// Chains weighted-sum layers with a ReLU after every layer but the last.
pub fn chain(input_size: usize, layers: &[(Vec<Vec<f64>>, Vec<f64>)]) -> Network {
    let mut out = Vec::new();
    for (i, (w, b)) in layers.iter().enumerate() {
        if i > 0 {
            out.push(Layer::Relu);
        }
        out.push(Layer::WeightedSum {
            weights: w.clone(),
            biases: b.clone(),
        });
    }
    Network::new(input_size, out).expect("fixture network is well formed")
}

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).expect("fixture interval is well formed")
}

fn spec(net: Network, window: usize, fields: usize, roles: &[&str], boxes: Vec<Interval>) -> TransitionSpec {
    spec_with_initial(net, window, fields, roles, boxes, vec![])
}

fn spec_with_initial(
    net: Network,
    window: usize,
    fields: usize,
    roles: &[&str],
    boxes: Vec<Interval>,
    initial: Vec<LinearConstraint>,
) -> TransitionSpec {
    let roles = (!roles.is_empty()).then(|| roles.iter().map(|s| s.to_string()).collect());
    TransitionSpec::new(Arc::new(net), window, fields, roles, boxes, initial, None)
        .expect("fixture spec is well formed")
}

fn bad(constraints: Vec<LinearConstraint>) -> StatePredicate {
    StatePredicate::new(PredicateKind::Bad, constraints).expect("copy-0 predicate")
}

fn good(constraints: Vec<LinearConstraint>) -> StatePredicate {
    StatePredicate::new(PredicateKind::Good, constraints).expect("copy-0 predicate")
}

/// Two inputs, two hidden ReLUs, one output:
/// `out = 3 relu(2x1 + 5x2 + 1) - relu(-4x1 + x2 - 2)`.
pub fn two_relu() -> Network {
    chain(
        2,
        &[
            (vec![vec![2.0, 5.0], vec![-4.0, 1.0]], vec![1.0, -2.0]),
            (vec![vec![3.0, -1.0]], vec![0.0]),
        ],
    )
}

/// Dense network with weights in [-1, 1] and biases in [-0.5, 0.5].
pub fn random_network(inputs: usize, hidden: &[usize], outputs: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widths = vec![inputs];
    widths.extend_from_slice(hidden);
    widths.push(outputs);
    let layers: Vec<_> = widths
        .windows(2)
        .map(|w| {
            let weights = (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect();
            let biases = (0..w[1]).map(|_| rng.random_range(-0.5..=0.5)).collect();
            (weights, biases)
        })
        .collect();
    chain(inputs, &layers)
}

/// Random single-copy query: 1 to 3 inputs, at most 12 hidden ReLUs in one
/// or two layers, 1 or 2 outputs, input boxes of width 0.2 to 1.5 and one
/// output constraint whose threshold is drawn near the output at the box
/// centre, so that both verdicts are common.
pub fn random_query(seed: u64) -> Query {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f9e7);
    let inputs = rng.random_range(1..=3);
    let outputs = rng.random_range(1..=2);
    let hidden: Vec<usize> = if rng.random_bool(0.5) {
        vec![rng.random_range(2..=12)]
    } else {
        let a = rng.random_range(2..=6);
        vec![a, rng.random_range(2..=12 - a)]
    };
    let net = Arc::new(random_network(inputs, &hidden, outputs, seed));
    let mut q = Query::new(net.clone(), 1).expect("one copy");
    let mut centre = Vec::with_capacity(inputs);
    for i in 0..inputs {
        let lo = rng.random_range(-1.0..=0.5);
        let w = rng.random_range(0.2..=1.5);
        q.set_box(VarRef::input(0, i), iv(lo, lo + w)).expect("input exists");
        centre.push(lo + w / 2.0);
    }
    let y = net.evaluate(&centre).expect("sizes match");
    let j = rng.random_range(0..outputs);
    let c = y[j] + rng.random_range(-0.6..=0.6);
    let rel = if rng.random_bool(0.5) { Relation::Le } else { Relation::Ge };
    q.conjoin(LinearConstraint::single(VarRef::output(0, j), rel, c))
        .expect("output exists")
}

/// One field in [0, 1], `window` steps, initial window all zero,
/// `out = sum(relu(x_i))`, bad iff `out >= threshold`.
///
/// From the zero window each transition contributes at most 1 to the sum, so
/// the first bad state is `ceil(threshold)` transitions away, i.e. at depth
/// `ceil(threshold) + 1` counting the initial state.
pub fn window_sum(window: usize, threshold: f64) -> (TransitionSpec, StatePredicate) {
    let identity = (0..window)
        .map(|i| (0..window).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let net = chain(
        window,
        &[(identity, vec![0.0; window]), (vec![vec![1.0; window]], vec![0.0])],
    );
    let initial = (0..window)
        .map(|i| LinearConstraint::single(VarRef::input(0, i), Relation::Eq, 0.0))
        .collect();
    let spec = spec_with_initial(net, window, 1, &["level"], vec![iv(0.0, 1.0)], initial);
    (spec, bad(vec![output_at_least(0, threshold)]))
}

/// Bad state first reachable at depth 3.
pub fn depth3() -> (TransitionSpec, StatePredicate) {
    window_sum(3, 1.5)
}

/// Bad state first reachable at depth 4; with a depth budget of 3 neither
/// engine can conclude.
pub fn long_delay() -> (TransitionSpec, StatePredicate) {
    window_sum(3, 2.5)
}

/// Output at least 0.5 everywhere; bad iff `out <= 0`.
pub fn pointwise_safe() -> (TransitionSpec, StatePredicate) {
    let net = chain(2, &[(vec![vec![0.3, -0.2], vec![-0.1, 0.4]], vec![0.0, 0.0]), (vec![vec![0.0, 0.0]], vec![0.5])]);
    (
        spec(net, 2, 1, &[], vec![iv(0.0, 1.0)]),
        bad(vec![output_at_most(0, 0.0)]),
    )
}

/// Window `(a, b)` over [0, 1], `out = relu(a - b + d) - relu(b - a - d)`,
/// good iff `out > 0`.
///
/// A state is not good iff `b >= a + d`, so a run of `k` consecutive
/// not-good states climbs by `k d` and exists iff `k d <= 1`. The liveness
/// property is therefore proved by k-induction exactly at the smallest `k`
/// with `k d > 1`.
pub fn liveness_ladder(d: f64) -> (TransitionSpec, StatePredicate) {
    let net = chain(
        2,
        &[
            (vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![d, -d]),
            (vec![vec![1.0, -1.0]], vec![0.0]),
        ],
    );
    (
        spec(net, 2, 1, &["level"], vec![iv(0.0, 1.0)]),
        good(vec![output_at_least(0, DELTA)]),
    )
}

/// `(k*, d)` pairs for [`liveness_ladder`].
pub const LADDER: [(usize, f64); 3] = [(1, 1.5), (2, 0.7), (5, 0.2125)];

/// Three steps of (latency gradient, latency ratio, sending ratio) under
/// excellent conditions: gradient in [-0.1, 0.1], ratio in [1, 1.1],
/// sending ratio 1. The output is the rate change
/// `r1 - r2 + 0.07 - 0.1 |g2|` (step 2 newest).
///
/// The rate fails to increase only when the latency ratio rises by at least
/// 0.06, which can happen once but not twice in a row inside [1, 1.1]. The
/// liveness property "the rate eventually increases" holds at k = 2.
pub fn aurora_mini() -> (TransitionSpec, StatePredicate) {
    let mut hidden = vec![vec![0.0; 9]; 4];
    let biases = vec![0.0, 0.0, 1.0, -1.0];
    // relu(g2), relu(-g2), relu(r1 - r2 + 1), relu(r2 - r1 - 1)
    hidden[0][6] = 1.0;
    hidden[1][6] = -1.0;
    hidden[2][4] = 1.0;
    hidden[2][7] = -1.0;
    hidden[3][4] = -1.0;
    hidden[3][7] = 1.0;
    let net = chain(9, &[(hidden, biases), (vec![vec![-0.1, -0.1, 1.0, -1.0]], vec![-0.93])]);
    (
        spec(
            net,
            3,
            3,
            &["latency_gradient", "latency_ratio", "sending_ratio"],
            vec![iv(-0.1, 0.1), iv(1.0, 1.1), iv(1.0, 1.0)],
        ),
        good(vec![output_at_least(0, DELTA)]),
    )
}

/// Window `(old, new)` over [0, 1], `out = new + 0.5`; the old field has
/// zero weight. Over two copies, `out <= 0.4` on copy 1 is UNSAT no matter
/// what is abstracted away.
pub fn zero_weight() -> (TransitionSpec, Query) {
    let net = chain(2, &[(vec![vec![0.0, 1.0]], vec![0.0]), (vec![vec![1.0]], vec![0.5])]);
    let spec = spec(net, 2, 1, &["level"], vec![iv(0.0, 1.0)]);
    let q = spec
        .unroll(2, crate::transition::Start::FromAnywhere)
        .and_then(|q| q.conjoin(LinearConstraint::single(VarRef::output(1, 0), Relation::Le, 0.4)))
        .expect("fixture query");
    (spec, q)
}

/// Window `(old, new)` over [0, 1], `out = relu(old)`. Copy 0's new field is
/// at most 0.2 and copy 1's output at least 0.5. The coupling forces copy
/// 1's old field to equal copy 0's new field, so the query is UNSAT; freeing
/// the old field breaks that link and admits a spurious witness.
pub fn spurious() -> (TransitionSpec, Query) {
    let net = chain(2, &[(vec![vec![1.0, 0.0]], vec![0.0]), (vec![vec![1.0]], vec![0.0])]);
    let spec = spec(net, 2, 1, &["level"], vec![iv(0.0, 1.0)]);
    let q = spec
        .unroll(2, crate::transition::Start::FromAnywhere)
        .and_then(|q| {
            q.conjoin_all([
                LinearConstraint::single(VarRef::input(0, 1), Relation::Le, 0.2),
                LinearConstraint::single(VarRef::output(1, 0), Relation::Ge, 0.5),
            ])
        })
        .expect("fixture query");
    (spec, q)
}

/// `out = x` on a single latency-gradient field in [-1, 1].
pub fn identity_passthrough() -> TransitionSpec {
    let net = chain(1, &[(vec![vec![1.0]], vec![0.0])]);
    spec(net, 1, 1, &["latency_gradient"], vec![iv(-1.0, 1.0)])
}

/// `out = 2 - x` on a single sending-ratio field in [0, 16].
pub fn two_minus_x() -> TransitionSpec {
    let net = chain(1, &[(vec![vec![-1.0]], vec![2.0])]);
    spec(net, 1, 1, &["sending_ratio"], vec![iv(0.0, 16.0)])
}

/// Zero weights and output bias `bias` on the single latency-gradient field.
pub fn constant_output(bias: f64) -> TransitionSpec {
    let net = chain(1, &[(vec![vec![0.0]], vec![bias])]);
    spec(net, 1, 1, &["latency_gradient"], vec![iv(-1.0, 1.0)])
}

/// Two steps of (latency gradient, latency ratio, sending ratio) over a
/// random 6-8-1 network.
pub fn random_aurora(seed: u64) -> TransitionSpec {
    spec(
        random_network(6, &[8], 1, seed),
        2,
        3,
        &["latency_gradient", "latency_ratio", "sending_ratio"],
        vec![iv(-1.0, 1.0), iv(1.0, 2.0), iv(0.0, 8.0)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_margins() {
        for (k, d) in LADDER {
            assert!((k - 1) as f64 * d <= 1.0 && k as f64 * d > 1.0);
        }
    }

    #[test]
    fn ladder_output_sign() {
        let (spec, _) = liveness_ladder(0.7);
        let net = spec.network();
        assert!(net.evaluate(&[0.1, 0.8]).unwrap()[0] <= 0.0);
        assert!(net.evaluate(&[0.0, 0.7]).unwrap()[0] <= 0.0);
        assert!(net.evaluate(&[0.1, 0.79]).unwrap()[0] > 0.0);
        assert!(net.evaluate(&[0.2, 0.5]).unwrap()[0] > 0.0);
    }

    #[test]
    fn aurora_mini_output_formula() {
        let (spec, _) = aurora_mini();
        let x = [0.0, 1.0, 1.0, 0.05, 1.02, 1.0, -0.08, 1.07, 1.0];
        let want = 1.02 - 1.07 + 0.07 - 0.1 * 0.08;
        assert!((spec.network().evaluate(&x).unwrap()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn window_sum_evaluates_sum() {
        let (spec, p) = depth3();
        assert_eq!(spec.network().evaluate(&[0.5, 0.25, 1.0]).unwrap(), vec![1.75]);
        assert_eq!(p.kind, PredicateKind::Bad);
    }

    #[test]
    fn random_network_deterministic() {
        assert_eq!(random_network(3, &[4, 4], 2, 5), random_network(3, &[4, 4], 2, 5));
        assert_ne!(random_network(3, &[4], 2, 5), random_network(3, &[4], 2, 6));
    }
}
