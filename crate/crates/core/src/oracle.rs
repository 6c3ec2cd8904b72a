//! Brute-force reference procedures for cross-checking the solver and the
//! model checker on small instances.
//!
//! Nothing here is a verifier: a grid search that finds no point does not
//! prove UNSAT. [`compare`] turns that into an honest three-way verdict using
//! a Lipschitz band around the decision boundary.
//!
//! Networks are evaluated with a forward pass written independently of
//! [`Network::evaluate`](crate::network::Network::evaluate).

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraint::{Interval, LinearConstraint, Query, Relation, Site, VarRef};
use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use crate::solver::{solve, validate_witness, SolverConfig, Status, Verdict};
use crate::transition::{negate_predicate, StatePredicate, TransitionSpec};

/// Default cap on enumerated grid points or states.
pub const DEFAULT_CAP: usize = 10_000_000;

/// Tolerance used when checking grid points.
const TOL: f64 = 1e-9;

/// Plain forward pass.
pub fn forward(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for layer in net.layers() {
        match layer {
            Layer::WeightedSum { weights, biases } => {
                let mut next = Vec::with_capacity(weights.len());
                for (row, b) in weights.iter().zip(biases) {
                    let mut acc = *b;
                    for (w, v) in row.iter().zip(&cur) {
                        acc += w * v;
                    }
                    next.push(acc);
                }
                cur = next;
            }
            Layer::Relu => {
                for v in &mut cur {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }
    cur
}

/// Product of the infinity norms of all weight matrices: a bound on
/// `|f(x) - f(y)|_inf / |x - y|_inf`.
pub fn lipschitz_bound(net: &Network) -> f64 {
    net.layers()
        .iter()
        .filter_map(|l| match l {
            Layer::WeightedSum { weights, .. } => Some(
                weights
                    .iter()
                    .map(|row| row.iter().map(|w| w.abs()).sum::<f64>())
                    .fold(0.0, f64::max),
            ),
            Layer::Relu => None,
        })
        .product()
}

/// Grid over `iv` with pitch `h`, always including both endpoints.
pub fn grid_values(iv: Interval, h: f64) -> Vec<f64> {
    if iv.lo == iv.hi {
        return vec![iv.lo];
    }
    let n = ((iv.hi - iv.lo) / h + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|i| iv.lo + i as f64 * h).collect();
    let last = *out.last().unwrap();
    if last > iv.hi {
        *out.last_mut().unwrap() = iv.hi;
    } else if iv.hi - last > 1e-12 {
        out.push(iv.hi);
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// `x - y = 0` between two inputs, in either orientation.
fn as_equality(c: &LinearConstraint) -> Option<(VarRef, VarRef)> {
    if c.relation != Relation::Eq || c.constant != 0.0 || c.terms.len() != 2 {
        return None;
    }
    let (a, b) = (&c.terms[0], &c.terms[1]);
    let inputs = matches!(a.var.site, Site::Input(_)) && matches!(b.var.site, Site::Input(_));
    (inputs && a.coef == -b.coef && a.coef != 0.0).then_some((a.var, b.var))
}

/// Input variables grouped into equality classes, each with one grid.
struct Grid {
    /// For every (copy, input), the class it belongs to.
    class_of: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
}

impl Grid {
    fn new(q: &Query, h: f64, cap: usize) -> Result<Option<Grid>> {
        if !(h > 0.0) {
            return Err(Error::InvalidConfig(format!("grid pitch must be positive, got {h}")));
        }
        q.require_finite_inputs()?;
        let n = q.network().input_size();
        let idx = |v: VarRef| match v.site {
            Site::Input(i) => v.copy * n + i,
            Site::Output(_) => unreachable!("equalities are between inputs"),
        };
        let total = q.copies() * n;
        let mut parent: Vec<usize> = (0..total).collect();
        for c in q.all_constraints() {
            if let Some((a, b)) = as_equality(c) {
                let (ra, rb) = (find(&mut parent, idx(a)), find(&mut parent, idx(b)));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut class_of_root = vec![usize::MAX; total];
        let mut boxes: Vec<Interval> = Vec::new();
        let mut class_of = vec![vec![0; n]; q.copies()];
        for v in 0..total {
            let r = find(&mut parent, v);
            if class_of_root[r] == usize::MAX {
                class_of_root[r] = boxes.len();
                boxes.push(Interval::UNBOUNDED);
            }
            let c = class_of_root[r];
            let b = q.input_boxes()[v / n][v % n];
            boxes[c] = boxes[c].intersect(&b);
            class_of[v / n][v % n] = c;
        }
        if boxes.iter().any(|b| b.is_empty()) {
            return Ok(None);
        }
        let values: Vec<Vec<f64>> = boxes.iter().map(|b| grid_values(*b, h)).collect();
        let mut count: usize = 1;
        for v in &values {
            count = count
                .checked_mul(v.len())
                .filter(|&c| c <= cap)
                .ok_or_else(|| Error::OracleLimit(format!("grid exceeds {cap} points at pitch {h}")))?;
        }
        Ok(Some(Grid { class_of, values }))
    }

    /// Visits points in lexicographic order of class values (class 0
    /// slowest). Returns the number of points visited.
    fn for_each(&self, mut f: impl FnMut(&[Vec<f64>]) -> ControlFlow<()>) -> usize {
        let k = self.values.len();
        let mut digits = vec![0usize; k];
        let mut point: Vec<Vec<f64>> = self.class_of.iter().map(|row| vec![0.0; row.len()]).collect();
        let mut visited = 0;
        loop {
            for (copy, row) in self.class_of.iter().enumerate() {
                for (i, &c) in row.iter().enumerate() {
                    point[copy][i] = self.values[c][digits[c]];
                }
            }
            visited += 1;
            if f(&point).is_break() {
                return visited;
            }
            let mut pos = k;
            loop {
                if pos == 0 {
                    return visited;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < self.values[pos].len() {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }
}

/// Evaluates every copy and checks output boxes and constraints. Returns the
/// smallest slack (how far inside the feasible region the point lies), or
/// `None` if some check fails by more than the tolerance.
fn point_slack(q: &Query, inputs: &[Vec<f64>]) -> Option<(f64, Vec<Vec<f64>>)> {
    let outputs: Vec<Vec<f64>> = inputs.iter().map(|x| forward(q.network(), x)).collect();
    let mut slack = f64::INFINITY;
    for (copy, row) in q.output_boxes().iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            let y = outputs[copy][j];
            let s = (y - b.lo).min(b.hi - y);
            if s < -TOL {
                return None;
            }
            slack = slack.min(s);
        }
    }
    let value = |v: VarRef| match v.site {
        Site::Input(i) => inputs[v.copy][i],
        Site::Output(j) => outputs[v.copy][j],
    };
    for c in q.all_constraints() {
        if as_equality(c).is_some() {
            continue;
        }
        let viol = c.violation(value);
        if viol > TOL {
            return None;
        }
        if c.relation != Relation::Eq {
            slack = slack.min(-viol);
        }
    }
    Some((slack, outputs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    /// Distance to the nearest constraint boundary (in constraint units).
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    /// Lexicographically first satisfying grid point.
    pub point: Option<GridPoint>,
    pub points_checked: usize,
}

/// Searches the grid of pitch `h` for a point satisfying `q`.
pub fn grid_sat(q: &Query, h: f64, cap: usize) -> Result<GridResult> {
    let Some(grid) = Grid::new(q, h, cap)? else {
        return Ok(GridResult {
            point: None,
            points_checked: 0,
        });
    };
    let mut found = None;
    let points_checked = grid.for_each(|p| match point_slack(q, p) {
        Some((slack, outputs)) => {
            found = Some(GridPoint {
                inputs: p.to_vec(),
                outputs,
                slack,
            });
            ControlFlow::Break(())
        }
        None => ControlFlow::Continue(()),
    });
    Ok(GridResult {
        point: found,
        points_checked,
    })
}

/// Smallest value of output `index` on copy 0 over the grid points that
/// satisfy `q`, or `None` if there are none.
pub fn grid_min_output(q: &Query, index: usize, h: f64, cap: usize) -> Result<Option<f64>> {
    let Some(grid) = Grid::new(q, h, cap)? else {
        return Ok(None);
    };
    let mut best: Option<f64> = None;
    grid.for_each(|p| {
        if let Some((_, y)) = point_slack(q, p) {
            let v = y[0][index];
            best = Some(best.map_or(v, |b| b.min(v)));
        }
        ControlFlow::Continue(())
    });
    Ok(best)
}

/// `q` with every inequality and output box moved inward by `h` per unit of
/// input coefficient and `h l` per unit of output coefficient. `None` when
/// the region has no interior to shrink into.
fn tightened(q: &Query, h: f64, l: f64) -> Result<Option<Query>> {
    let l = l.max(1.0);
    let shift = |c: &LinearConstraint| -> f64 {
        c.terms
            .iter()
            .map(|t| {
                t.coef.abs()
                    * match t.var.site {
                        Site::Input(_) => h,
                        Site::Output(_) => h * l,
                    }
            })
            .sum()
    };
    let mut out = Query::new(q.network_arc().clone(), q.copies())?;
    for copy in 0..q.copies() {
        for (i, b) in q.input_boxes()[copy].iter().enumerate() {
            out.set_box(VarRef::input(copy, i), *b)?;
        }
        for (j, b) in q.output_boxes()[copy].iter().enumerate() {
            let t = Interval {
                lo: b.lo + h * l,
                hi: b.hi - h * l,
            };
            if t.is_empty() {
                return Ok(None);
            }
            out.set_box(VarRef::output(copy, j), t)?;
        }
    }
    for c in q.constraints() {
        let s = shift(c);
        let mut t = c.clone();
        match c.relation {
            Relation::Le => t.constant -= s,
            Relation::Ge => t.constant += s,
            Relation::Eq if as_equality(c).is_some() => {}
            Relation::Eq => return Ok(None),
        }
        out.push_constraint(t)?;
    }
    for c in q.coupling() {
        out.push_coupling(c.clone())?;
    }
    Ok(Some(out))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "agreement", content = "detail", rename_all = "snake_case")]
pub enum Agreement {
    Agree,
    /// The two sides differ only within the boundary band.
    Boundary,
    Contradiction(String),
    /// The solver returned UNKNOWN.
    Inconclusive,
}

/// Compares a solver verdict on `q` with a grid search of pitch `h`.
///
/// * Solver SAT: the witness must replay. If the grid found nothing, `q` is
///   tightened by the band `h L` and solved again; a validated SAT answer
///   there means some grid point should have satisfied `q`.
/// * Solver UNSAT: a satisfying grid point is a contradiction unless it lies
///   within the solver tolerance of the boundary.
pub fn compare(q: &Query, verdict: &Verdict, grid: &GridResult, h: f64, cfg: &SolverConfig) -> Result<Agreement> {
    Ok(match verdict.status {
        Status::Unknown => Agreement::Inconclusive,
        Status::Sat => {
            let w = verdict.witness.as_ref().expect("SAT verdicts carry a witness");
            if !validate_witness(q, w, cfg.tau_val) {
                return Ok(Agreement::Contradiction("solver witness fails validation".into()));
            }
            if grid.point.is_some() {
                return Ok(Agreement::Agree);
            }
            let Some(tq) = tightened(q, h, lipschitz_bound(q.network()))? else {
                return Ok(Agreement::Boundary);
            };
            let tv = solve(&tq, cfg)?;
            match tv.status {
                Status::Sat if validate_witness(&tq, tv.witness.as_ref().unwrap(), cfg.tau_val) => {
                    Agreement::Contradiction(format!(
                        "no grid point found although the query tightened by h L is SAT at {:?}",
                        tv.witness.unwrap().inputs
                    ))
                }
                _ => Agreement::Boundary,
            }
        }
        Status::Unsat => match &grid.point {
            None => Agreement::Agree,
            Some(p) if p.slack < cfg.tau_val => Agreement::Boundary,
            Some(p) => Agreement::Contradiction(format!(
                "solver UNSAT but grid point {:?} satisfies the query with slack {}",
                p.inputs, p.slack
            )),
        },
    })
}

/// Enumerates windows of per-field grids. A state is a mixed-radix number
/// with the oldest step most significant.
struct StateSpace<'a> {
    spec: &'a TransitionSpec,
    /// Grid values per field.
    values: Vec<Vec<f64>>,
    /// Number of field-value combinations per step.
    per_step: usize,
    count: usize,
}

impl<'a> StateSpace<'a> {
    fn new(spec: &'a TransitionSpec, pitches: &[f64], cap: usize) -> Result<Self> {
        if pitches.len() != spec.fields_per_step() {
            return Err(Error::InvalidConfig(format!(
                "{} pitches for {} fields",
                pitches.len(),
                spec.fields_per_step()
            )));
        }
        if let Some(h) = pitches.iter().find(|h| !(**h > 0.0)) {
            return Err(Error::InvalidConfig(format!("grid pitch must be positive, got {h}")));
        }
        let values: Vec<Vec<f64>> = spec
            .field_boxes()
            .iter()
            .zip(pitches)
            .map(|(b, &h)| grid_values(*b, h))
            .collect();
        let too_big = || Error::OracleLimit(format!("state space exceeds {cap} states"));
        let per_step = values
            .iter()
            .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
            .ok_or_else(too_big)?;
        let mut count: usize = 1;
        for _ in 0..spec.window() {
            count = count.checked_mul(per_step).filter(|&c| c <= cap).ok_or_else(too_big)?;
        }
        Ok(StateSpace {
            spec,
            values,
            per_step,
            count,
        })
    }

    fn decode(&self, mut s: usize) -> Vec<f64> {
        let t = self.spec.window();
        let f = self.spec.fields_per_step();
        let mut x = vec![0.0; t * f];
        for step in (0..t).rev() {
            let mut combo = s % self.per_step;
            s /= self.per_step;
            for field in (0..f).rev() {
                let n = self.values[field].len();
                x[self.spec.position(step, field)] = self.values[field][combo % n];
                combo /= n;
            }
        }
        x
    }

    /// States reachable in one transition, one per fresh step value.
    fn successors(&self, s: usize) -> impl Iterator<Item = usize> {
        let shifted = (s % (self.count / self.per_step)) * self.per_step;
        (0..self.per_step).map(move |c| shifted + c)
    }

    fn eval(&self, s: usize) -> (Vec<f64>, Vec<f64>) {
        let x = self.decode(s);
        let y = forward(self.spec.network(), &x);
        (x, y)
    }
}

fn satisfies_all(cs: &[LinearConstraint], x: &[f64], y: &[f64]) -> bool {
    let value = |v: VarRef| match v.site {
        Site::Input(i) => x[i],
        Site::Output(j) => y[j],
    };
    cs.iter().all(|c| c.is_satisfied(value, TOL))
}

/// Breadth-first search over grid states from the initial grid states.
/// Returns the first depth (1 = an initial state) at which a state satisfies
/// `p_bad`, or `None` if none is found up to `depth`.
pub fn reach_oracle(
    spec: &TransitionSpec,
    p_bad: &StatePredicate,
    depth: usize,
    pitches: &[f64],
    cap: usize,
) -> Result<Option<usize>> {
    let space = StateSpace::new(spec, pitches, cap)?;
    let mut seen = vec![false; space.count];
    let mut frontier: Vec<usize> = Vec::new();
    for s in 0..space.count {
        let (x, y) = space.eval(s);
        if satisfies_all(spec.initial_constraints(), &x, &y) {
            seen[s] = true;
            frontier.push(s);
        }
    }
    for d in 1..=depth {
        if frontier.is_empty() {
            return Ok(None);
        }
        for &s in &frontier {
            let (x, y) = space.eval(s);
            if satisfies_all(&p_bad.constraints, &x, &y) {
                return Ok(Some(d));
            }
        }
        let mut next = Vec::new();
        for &s in &frontier {
            for n in space.successors(s) {
                if !seen[n] {
                    seen[n] = true;
                    next.push(n);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
    }
    Ok(None)
}

/// Length of the longest run of consecutive not-good grid states, capped at
/// `max_len`. A liveness property whose longest run is `r < max_len` should
/// be proved by k-induction at `k = r + 1`.
pub fn longest_not_good_run(
    spec: &TransitionSpec,
    p_good: &StatePredicate,
    pitches: &[f64],
    max_len: usize,
    delta_strict: f64,
    cap: usize,
) -> Result<usize> {
    let space = StateSpace::new(spec, pitches, cap)?;
    let pieces = negate_predicate(p_good, delta_strict);
    let not_good: Vec<bool> = (0..space.count)
        .map(|s| {
            let (x, y) = space.eval(s);
            pieces.iter().any(|p| satisfies_all(&p.constraints, &x, &y))
        })
        .collect();
    // alive[s]: a run of the current length starts at s
    let mut alive = not_good.clone();
    let mut len = 0;
    while len < max_len && alive.iter().any(|&a| a) {
        len += 1;
        alive = (0..space.count)
            .map(|s| not_good[s] && space.successors(s).any(|n| alive[n]))
            .collect();
    }
    Ok(len)
}

/// A random execution of `length` states: the first state and every fresh
/// step are sampled uniformly from the field boxes.
pub fn generate_trace(spec: &TransitionSpec, length: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_step = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        spec.field_boxes()
            .iter()
            .map(|b| if b.lo == b.hi { b.lo } else { rng.random_range(b.lo..=b.hi) })
            .collect()
    };
    let mut trace = Vec::with_capacity(length);
    if length == 0 {
        return trace;
    }
    let mut first = vec![0.0; spec.network().input_size()];
    for step in 0..spec.window() {
        let vals = sample_step(&mut rng);
        for (field, v) in vals.into_iter().enumerate() {
            first[spec.position(step, field)] = v;
        }
    }
    trace.push(first);
    while trace.len() < length {
        let fresh = sample_step(&mut rng);
        let next = spec.successor(trace.last().unwrap(), &fresh);
        trace.push(next);
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::output_at_most;
    use crate::fixtures;
    use std::sync::Arc;

    #[test]
    fn forward_matches_evaluate() {
        let net = fixtures::random_network(3, &[5, 4], 2, 11);
        for x in [[0.1, -0.2, 0.3], [1.0, 1.0, -1.0], [0.0, 0.0, 0.0]] {
            let a = forward(&net, &x);
            let b = net.evaluate(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        assert_eq!(forward(&fixtures::two_relu(), &[1.0, 3.0]), vec![54.0]);
    }

    #[test]
    fn lipschitz_two_relu() {
        // max(7, 5) * 4
        assert_eq!(lipschitz_bound(&fixtures::two_relu()), 28.0);
    }

    #[test]
    fn grid_includes_endpoints() {
        assert_eq!(grid_values(Interval::new(0.0, 1.0).unwrap(), 0.5), vec![0.0, 0.5, 1.0]);
        assert_eq!(grid_values(Interval::new(0.0, 1.0).unwrap(), 0.4), vec![0.0, 0.4, 0.8, 1.0]);
        assert_eq!(grid_values(Interval::point(2.0), 0.1), vec![2.0]);
    }

    #[test]
    fn two_relu_grid_counterexample() {
        let q = Query::new(Arc::new(fixtures::two_relu()), 1)
            .unwrap()
            .with_all_input_boxes(Interval::new(-10.0, 10.0).unwrap())
            .conjoin(output_at_most(0, 5.0))
            .unwrap();
        let r = grid_sat(&q, 0.5, DEFAULT_CAP).unwrap();
        let p = r.point.unwrap();
        assert!(forward(&fixtures::two_relu(), &p.inputs[0])[0] <= 5.0);
    }

    #[test]
    fn coupling_reduces_dimension() {
        let (spec, _) = fixtures::depth3();
        let q = spec.unroll(3, crate::transition::Start::FromAnywhere).unwrap();
        let g = Grid::new(&q, 0.5, DEFAULT_CAP).unwrap().unwrap();
        // 3 + 1 + 1 free values
        assert_eq!(g.values.len(), 5);
    }

    #[test]
    fn grid_cap() {
        let q = Query::new(Arc::new(fixtures::two_relu()), 1)
            .unwrap()
            .with_all_input_boxes(Interval::new(-10.0, 10.0).unwrap());
        assert!(matches!(grid_sat(&q, 1e-3, 1000), Err(Error::OracleLimit(_))));
    }

    #[test]
    fn reach_depth3() {
        let (spec, bad) = fixtures::depth3();
        assert_eq!(reach_oracle(&spec, &bad, 6, &[0.5], DEFAULT_CAP).unwrap(), Some(3));
        let (spec, bad) = fixtures::long_delay();
        assert_eq!(reach_oracle(&spec, &bad, 6, &[0.5], DEFAULT_CAP).unwrap(), Some(4));
        let (spec, bad) = fixtures::pointwise_safe();
        assert_eq!(reach_oracle(&spec, &bad, 6, &[0.25], DEFAULT_CAP).unwrap(), None);
    }

    #[test]
    fn ladder_runs() {
        for (k, d) in fixtures::LADDER {
            let (spec, good) = fixtures::liveness_ladder(d);
            let run = longest_not_good_run(&spec, &good, &[0.025], 10, 1e-6, DEFAULT_CAP).unwrap();
            assert_eq!(run + 1, k, "d = {d}");
        }
    }

    #[test]
    fn traces_respect_windows() {
        let (spec, _) = fixtures::aurora_mini();
        let t = generate_trace(&spec, 6, 7);
        assert_eq!(t.len(), 6);
        for w in t.windows(2) {
            assert!(spec.is_transition(&w[0], &w[1], 0.0));
        }
        assert_eq!(t, generate_trace(&spec, 6, 7));
        assert_eq!(generate_trace(&spec, 1, 3).len(), 1);
    }
}
