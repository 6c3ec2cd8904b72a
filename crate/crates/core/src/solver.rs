//! Complete satisfiability check for [`Query`] values.
//!
//! Branch and bound over ReLU phases. Every node propagates interval bounds
//! under its phase fixes, then solves the triangle LP relaxation. The inputs
//! of a feasible LP point are replayed through the network; if they satisfy
//! the query the node is SAT, otherwise the unfixed ReLU with the widest
//! pre-activation interval is split (inactive child first).
//!
//! SAT answers always carry a witness that passed [`validate_witness`].
//! UNSAT answers are exact up to the LP feasibility tolerance.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{propagate, unknown_phases, NeuronBounds, PhaseMap, ReluPhase};
use crate::constraint::{Query, Relation, Site, VarRef};
use crate::error::Result;
use crate::lp::{LinearProgram, LpOptions, LpStatus};
use crate::network::Layer;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// LP feasibility tolerance.
    pub tau_lp: f64,
    /// Tolerance used when replaying witnesses.
    pub tau_val: f64,
    /// Maximum number of branch-and-bound nodes.
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// 1 explores subtrees sequentially; larger values explore them on the
    /// current rayon pool. The verdict does not depend on this setting.
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau_lp: 1e-7,
            tau_val: 1e-6,
            node_limit: 200_000,
            time_limit: None,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Sat,
    Unsat,
    Unknown,
}

/// A concrete assignment: inputs per copy plus the outputs they produce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_calls: usize,
    pub lp_iterations: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl SolveStats {
    pub fn absorb(&mut self, other: &SolveStats) {
        self.nodes += other.nodes;
        self.lp_calls += other.lp_calls;
        self.lp_iterations += other.lp_iterations;
        self.elapsed += other.elapsed;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub witness: Option<Witness>,
    pub stats: SolveStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        self.status == Status::Sat
    }

    pub fn is_unsat(&self) -> bool {
        self.status == Status::Unsat
    }
}

/// Gives inputs tied by `x_a - x_b = 0` equalities one exact common value,
/// the value of the first input of each class in (copy, index) order. LP
/// points only satisfy such equalities up to rounding, while shared window
/// history should agree bit for bit.
fn snap_equalities(q: &Query, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.network().input_size();
    let id = |v: VarRef| match v.site {
        Site::Input(i) => Some(v.copy * n + i),
        Site::Output(_) => None,
    };
    let mut parent: Vec<usize> = (0..n * q.copies()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in q.all_constraints() {
        if c.relation != Relation::Eq || c.constant != 0.0 || c.terms.len() != 2 {
            continue;
        }
        let (a, b) = (&c.terms[0], &c.terms[1]);
        if a.coef != -b.coef || a.coef == 0.0 {
            continue;
        }
        if let (Some(x), Some(y)) = (id(a.var), id(b.var)) {
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            // the smaller index stays the root
            let (lo, hi) = if rx < ry { (rx, ry) } else { (ry, rx) };
            parent[hi] = lo;
        }
    }
    let mut out = inputs.to_vec();
    for v in 0..parent.len() {
        let r = find(&mut parent, v);
        out[v / n][v % n] = inputs[r / n][r % n];
    }
    out
}

/// Replays `witness.inputs` through the network and checks every box,
/// constraint and coupling of `q` within `tau_val`. The stored outputs are
/// ignored.
pub fn validate_witness(q: &Query, witness: &Witness, tau_val: f64) -> bool {
    witness.inputs.len() == q.copies()
        && witness
            .inputs
            .iter()
            .all(|x| x.len() == q.network().input_size())
        && q.is_satisfied_by(&witness.inputs, tau_val)
}

/// Decides `q`.
pub fn solve(q: &Query, cfg: &SolverConfig) -> Result<Verdict> {
    q.require_finite_inputs()?;
    let start = Instant::now();
    let search = Search {
        q,
        cfg,
        start,
        nodes: AtomicUsize::new(0),
        lp_calls: AtomicUsize::new(0),
        lp_iterations: AtomicUsize::new(0),
        out_of_budget: AtomicBool::new(false),
    };
    let (status, witness, reason) = search.run();
    let stats = SolveStats {
        nodes: search.nodes.load(Ordering::Relaxed),
        lp_calls: search.lp_calls.load(Ordering::Relaxed),
        lp_iterations: search.lp_iterations.load(Ordering::Relaxed),
        elapsed: start.elapsed(),
    };
    debug!(
        "solve: {:?} after {} nodes, {} LP calls",
        status, stats.nodes, stats.lp_calls
    );
    Ok(Verdict {
        status,
        witness,
        stats,
        reason,
    })
}

/// Depth of the propagation-only split that produces independent subtrees.
const FRONTIER_DEPTH: usize = 3;

enum NodeResult {
    Pruned,
    Sat(Witness),
    Branch(Box<PhaseMap>, Box<PhaseMap>),
    Unresolved(String),
}

enum SubtreeResult {
    Unsat,
    Sat(Witness),
    Unknown(String),
}

struct Search<'a> {
    q: &'a Query,
    cfg: &'a SolverConfig,
    start: Instant,
    nodes: AtomicUsize,
    lp_calls: AtomicUsize,
    lp_iterations: AtomicUsize,
    out_of_budget: AtomicBool,
}

impl Search<'_> {
    fn run(&self) -> (Status, Option<Witness>, Option<String>) {
        let root = unknown_phases(self.q);
        let (inactive, active) = match self.process(&root) {
            NodeResult::Pruned => return (Status::Unsat, None, None),
            NodeResult::Sat(w) => return (Status::Sat, Some(w), None),
            NodeResult::Unresolved(r) => return (Status::Unknown, None, Some(r)),
            NodeResult::Branch(a, b) => (*a, *b),
        };
        let frontier = self.split_frontier(vec![inactive, active]);

        let best = AtomicUsize::new(usize::MAX);
        let explore = |(idx, phases): (usize, PhaseMap)| -> SubtreeResult {
            let r = self.dfs(phases, idx, &best);
            if matches!(r, SubtreeResult::Sat(_)) {
                best.fetch_min(idx, Ordering::SeqCst);
            }
            r
        };
        let results: Vec<SubtreeResult> = if self.cfg.threads > 1 {
            frontier.into_par_iter().enumerate().map(explore).collect()
        } else {
            let mut out = Vec::new();
            for item in frontier.into_iter().enumerate() {
                let r = explore(item);
                let done = matches!(r, SubtreeResult::Sat(_));
                out.push(r);
                if done {
                    break;
                }
            }
            out
        };

        let mut unknown = None;
        for r in results {
            match r {
                SubtreeResult::Sat(w) => return (Status::Sat, Some(w), None),
                SubtreeResult::Unknown(reason) => {
                    unknown.get_or_insert(reason);
                }
                SubtreeResult::Unsat => {}
            }
        }
        match unknown {
            Some(reason) => (Status::Unknown, None, Some(reason)),
            None => (Status::Unsat, None, None),
        }
    }

    /// Splits nodes by bound propagation alone, keeping left-to-right order
    /// equal to depth-first order.
    fn split_frontier(&self, mut frontier: Vec<PhaseMap>) -> Vec<PhaseMap> {
        for _ in 1..FRONTIER_DEPTH {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for phases in frontier {
                let bounds = propagate(self.q, Some(&phases));
                if bounds.is_empty() {
                    continue;
                }
                match self.pick_branch(&phases, &bounds) {
                    Some((c, l, i)) => {
                        let (a, b) = children(&phases, c, l, i);
                        next.push(a);
                        next.push(b);
                    }
                    None => next.push(phases),
                }
            }
            frontier = next;
        }
        frontier
    }

    fn budget_exhausted(&self) -> Option<String> {
        if self.out_of_budget.load(Ordering::Relaxed) {
            return Some("budget exhausted".into());
        }
        if self.nodes.load(Ordering::Relaxed) >= self.cfg.node_limit {
            self.out_of_budget.store(true, Ordering::Relaxed);
            return Some(format!("node limit {} reached", self.cfg.node_limit));
        }
        if let Some(limit) = self.cfg.time_limit {
            if self.start.elapsed() >= limit {
                self.out_of_budget.store(true, Ordering::Relaxed);
                return Some(format!("time limit {limit:?} reached"));
            }
        }
        None
    }

    fn dfs(&self, root: PhaseMap, idx: usize, best: &AtomicUsize) -> SubtreeResult {
        let mut stack = vec![root];
        let mut unresolved = None;
        while let Some(phases) = stack.pop() {
            if best.load(Ordering::SeqCst) < idx {
                // An earlier subtree already produced the answer.
                return SubtreeResult::Unknown("preempted".into());
            }
            if let Some(reason) = self.budget_exhausted() {
                return SubtreeResult::Unknown(reason);
            }
            match self.process(&phases) {
                NodeResult::Pruned => {}
                NodeResult::Sat(w) => return SubtreeResult::Sat(w),
                NodeResult::Branch(inactive, active) => {
                    stack.push(*active);
                    stack.push(*inactive);
                }
                NodeResult::Unresolved(r) => {
                    unresolved.get_or_insert(r);
                }
            }
        }
        match unresolved {
            Some(r) => SubtreeResult::Unknown(r),
            None => SubtreeResult::Unsat,
        }
    }

    fn pick_branch(&self, phases: &PhaseMap, bounds: &NeuronBounds) -> Option<(usize, usize, usize)> {
        let mut best: Option<((usize, usize, usize), f64)> = None;
        for (c, per_copy) in phases.iter().enumerate() {
            for (l, layer) in per_copy.iter().enumerate() {
                for (i, &ph) in layer.iter().enumerate() {
                    if ph != ReluPhase::Unknown {
                        continue;
                    }
                    // Pre-activation values of network layer `l` sit at
                    // bounds layer `l`.
                    let pre = bounds.layer(c, l)[i];
                    if pre.lo >= 0.0 || pre.hi <= 0.0 {
                        continue;
                    }
                    let w = pre.width();
                    if best.as_ref().is_none_or(|(_, bw)| w > *bw) {
                        best = Some(((c, l, i), w));
                    }
                }
            }
        }
        best.map(|(id, _)| id)
    }

    fn process(&self, phases: &PhaseMap) -> NodeResult {
        self.nodes.fetch_add(1, Ordering::Relaxed);
        let bounds = propagate(self.q, Some(phases));
        if bounds.is_empty() {
            return NodeResult::Pruned;
        }
        let lp = encode(self.q, phases, &bounds);
        self.lp_calls.fetch_add(1, Ordering::Relaxed);
        let sol = lp.program.solve(&LpOptions {
            feas_tol: self.cfg.tau_lp,
            max_iterations: None,
        });
        self.lp_iterations.fetch_add(sol.iterations, Ordering::Relaxed);
        match sol.status {
            LpStatus::Infeasible => return NodeResult::Pruned,
            LpStatus::Stalled => {
                // Branching still makes progress: children are smaller LPs.
                return match self.pick_branch(phases, &bounds) {
                    Some((c, l, i)) => {
                        let (a, b) = children(phases, c, l, i);
                        NodeResult::Branch(Box::new(a), Box::new(b))
                    }
                    None => NodeResult::Unresolved("LP stalled on a fully fixed node".into()),
                };
            }
            LpStatus::Optimal | LpStatus::Unbounded => {}
        }
        let inputs: Vec<Vec<f64>> = (0..self.q.copies())
            .map(|c| {
                lp.input_cols[c]
                    .iter()
                    .zip(&self.q.input_boxes()[c])
                    .map(|(&col, b)| sol.x[col].clamp(b.lo, b.hi))
                    .collect()
            })
            .collect();
        if let Some(w) = self.witness_if_valid(inputs) {
            return NodeResult::Sat(w);
        }
        match self.pick_branch(phases, &bounds) {
            Some((c, l, i)) => {
                let (a, b) = children(phases, c, l, i);
                NodeResult::Branch(Box::new(a), Box::new(b))
            }
            None => NodeResult::Unresolved(
                "LP point of a fully fixed node failed witness validation".into(),
            ),
        }
    }

    fn witness_if_valid(&self, inputs: Vec<Vec<f64>>) -> Option<Witness> {
        self.replay(snap_equalities(self.q, &inputs)).or_else(|| self.replay(inputs))
    }

    fn replay(&self, inputs: Vec<Vec<f64>>) -> Option<Witness> {
        let outputs: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| self.q.network().evaluate(x))
            .collect::<Result<_>>()
            .ok()?;
        self.q
            .is_satisfied_by_assignment(&inputs, &outputs, self.cfg.tau_val)
            .then_some(Witness { inputs, outputs })
    }
}

fn children(phases: &PhaseMap, c: usize, l: usize, i: usize) -> (PhaseMap, PhaseMap) {
    let mut inactive = phases.clone();
    inactive[c][l][i] = ReluPhase::Inactive;
    let mut active = phases.clone();
    active[c][l][i] = ReluPhase::Active;
    (inactive, active)
}

struct Encoded {
    program: LinearProgram,
    input_cols: Vec<Vec<usize>>,
}

/// LP relaxation of `q` under fixed phases: exact for fixed neurons,
/// triangle relaxation for the rest.
fn encode(q: &Query, phases: &PhaseMap, bounds: &NeuronBounds) -> Encoded {
    let net = q.network();
    let mut lp = LinearProgram::new();
    let mut input_cols = Vec::with_capacity(q.copies());
    let mut output_cols = Vec::with_capacity(q.copies());
    for c in 0..q.copies() {
        let mut prev: Vec<usize> = bounds
            .inputs(c)
            .iter()
            .map(|iv| lp.add_var(iv.lo, iv.hi))
            .collect();
        input_cols.push(prev.clone());
        for (l, layer) in net.layers().iter().enumerate() {
            let here = bounds.layer(c, l + 1);
            let cols: Vec<usize> = match layer {
                Layer::WeightedSum { weights, biases } => weights
                    .iter()
                    .zip(biases)
                    .zip(here)
                    .map(|((row, &b), iv)| {
                        let v = lp.add_var(iv.lo, iv.hi);
                        let mut coefs: Vec<(usize, f64)> = row
                            .iter()
                            .zip(&prev)
                            .filter(|(w, _)| **w != 0.0)
                            .map(|(&w, &p)| (p, -w))
                            .collect();
                        coefs.push((v, 1.0));
                        lp.add_row(coefs, b, b);
                        v
                    })
                    .collect(),
                Layer::Relu => {
                    let pre_bounds = bounds.layer(c, l);
                    prev.iter()
                        .enumerate()
                        .map(|(i, &x)| {
                            let pre = pre_bounds[i];
                            let phase = match phases[c][l][i] {
                                ReluPhase::Unknown if pre.lo >= 0.0 => ReluPhase::Active,
                                ReluPhase::Unknown if pre.hi <= 0.0 => ReluPhase::Inactive,
                                p => p,
                            };
                            match phase {
                                ReluPhase::Active => x,
                                ReluPhase::Inactive => lp.add_var(0.0, 0.0),
                                ReluPhase::Unknown => {
                                    let (lo, hi) = (pre.lo, pre.hi);
                                    let y = lp.add_var(0.0, hi);
                                    lp.add_row(vec![(y, 1.0), (x, -1.0)], 0.0, f64::INFINITY);
                                    let slope = hi / (hi - lo);
                                    lp.add_row(
                                        vec![(y, 1.0), (x, -slope)],
                                        f64::NEG_INFINITY,
                                        -slope * lo,
                                    );
                                    y
                                }
                            }
                        })
                        .collect()
                }
            };
            prev = cols;
        }
        output_cols.push(prev);
    }
    for con in q.all_constraints() {
        let coefs: Vec<(usize, f64)> = con
            .terms
            .iter()
            .map(|t| {
                let col = match t.var.site {
                    Site::Input(i) => input_cols[t.var.copy][i],
                    Site::Output(j) => output_cols[t.var.copy][j],
                };
                (col, t.coef)
            })
            .collect();
        let (lo, hi) = match con.relation {
            Relation::Le => (f64::NEG_INFINITY, con.constant),
            Relation::Ge => (con.constant, f64::INFINITY),
            Relation::Eq => (con.constant, con.constant),
        };
        lp.add_row(coefs, lo, hi);
    }
    Encoded {
        program: lp,
        input_cols,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{output_at_least, output_at_most, Interval, LinearConstraint, VarRef};
    use crate::error::Error;
    use crate::fixtures;
    use std::sync::Arc;

    fn two_relu_query(b0: (f64, f64), b1: (f64, f64)) -> Query {
        Query::new(Arc::new(fixtures::two_relu()), 1)
            .unwrap()
            .with_box(VarRef::input(0, 0), Interval::new(b0.0, b0.1).unwrap())
            .unwrap()
            .with_box(VarRef::input(0, 1), Interval::new(b1.0, b1.1).unwrap())
            .unwrap()
    }

    #[test]
    fn two_relu_counterexample_exists() {
        let q = two_relu_query((-10.0, 10.0), (-10.0, 10.0))
            .conjoin(output_at_most(0, 5.0))
            .unwrap();
        let v = solve(&q, &SolverConfig::default()).unwrap();
        assert_eq!(v.status, Status::Sat);
        let w = v.witness.unwrap();
        assert!(validate_witness(&q, &w, 1e-6));
        assert!(w.outputs[0][0] <= 5.0 + 1e-6);
    }

    #[test]
    fn two_relu_positive_box_unsat() {
        // Minimum output over [1,2]x[3,4] is 54 at (1,3).
        let q = two_relu_query((1.0, 2.0), (3.0, 4.0))
            .conjoin(output_at_most(0, 5.0))
            .unwrap();
        let v = solve(&q, &SolverConfig::default()).unwrap();
        assert_eq!(v.status, Status::Unsat);
        assert!(v.witness.is_none());
        let tight = two_relu_query((1.0, 2.0), (3.0, 4.0))
            .conjoin(output_at_most(0, 54.0))
            .unwrap();
        assert!(solve(&tight, &SolverConfig::default()).unwrap().is_sat());
        let below = two_relu_query((1.0, 2.0), (3.0, 4.0))
            .conjoin(output_at_most(0, 53.99))
            .unwrap();
        assert!(solve(&below, &SolverConfig::default()).unwrap().is_unsat());
    }

    #[test]
    fn unbounded_inputs_rejected() {
        let q = Query::new(Arc::new(fixtures::two_relu()), 1).unwrap();
        assert!(matches!(
            solve(&q, &SolverConfig::default()),
            Err(Error::UnboundedInput(_))
        ));
    }

    #[test]
    fn contradictory_constraints_unsat() {
        let q = two_relu_query((-1.0, 1.0), (-1.0, 1.0))
            .conjoin(LinearConstraint::single(VarRef::input(0, 0), Relation::Ge, 1.0))
            .unwrap()
            .conjoin(LinearConstraint::single(VarRef::input(0, 0), Relation::Le, 0.0))
            .unwrap();
        let v = solve(&q, &SolverConfig::default()).unwrap();
        assert_eq!(v.status, Status::Unsat);
        // pruned by bound propagation, no LP needed
        assert_eq!(v.stats.lp_calls, 0);
    }

    #[test]
    fn coupling_violation_invalidates_witness() {
        let net = Arc::new(fixtures::two_relu());
        let q = Query::new(net, 2)
            .unwrap()
            .with_all_input_boxes(Interval::new(-5.0, 5.0).unwrap())
            .couple(
                LinearConstraint::new(
                    vec![(1.0, VarRef::input(0, 1)), (-1.0, VarRef::input(1, 0))],
                    Relation::Eq,
                    0.0,
                )
                .unwrap(),
            )
            .unwrap();
        let good = Witness {
            inputs: vec![vec![0.0, 1.0], vec![1.0, 2.0]],
            outputs: vec![],
        };
        assert!(validate_witness(&q, &good, 1e-6));
        let bad = Witness {
            inputs: vec![vec![0.0, 1.0], vec![2.0, 2.0]],
            outputs: vec![],
        };
        assert!(!validate_witness(&q, &bad, 1e-6));
    }

    #[test]
    fn node_budget_yields_unknown_not_wrong() {
        let net = Arc::new(fixtures::random_network(3, &[6, 6], 1, 5));
        let q = Query::new(net, 1)
            .unwrap()
            .with_all_input_boxes(Interval::new(-1.0, 1.0).unwrap())
            .conjoin(output_at_least(0, 1e6))
            .unwrap();
        let cfg = SolverConfig {
            node_limit: 1,
            ..SolverConfig::default()
        };
        let v = solve(&q, &cfg).unwrap();
        assert_ne!(v.status, Status::Sat);
    }

    #[test]
    fn threads_do_not_change_verdict() {
        for seed in 0..20 {
            let net = Arc::new(fixtures::random_network(2, &[6, 6], 1, seed));
            let q = Query::new(net, 1)
                .unwrap()
                .with_all_input_boxes(Interval::new(-1.0, 1.0).unwrap())
                .conjoin(output_at_least(0, 0.3))
                .unwrap();
            let seq = solve(&q, &SolverConfig::default()).unwrap();
            let par = solve(
                &q,
                &SolverConfig {
                    threads: 4,
                    ..SolverConfig::default()
                },
            )
            .unwrap();
            assert_eq!(seq.status, par.status, "seed {seed}");
            assert_eq!(seq.witness, par.witness, "seed {seed}");
        }
    }
}
