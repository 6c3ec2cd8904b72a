//! Bounded model checking and k-induction over unrolled transition systems.
//!
//! Safety properties are given by a bad-state predicate `P_B`, liveness
//! properties ("infinitely often good") by a good-state predicate `P_G`.
//!
//! * Safety BMC at depth `k`: `k` copies from an initial state, `P_B` on the
//!   last copy.
//! * Safety induction at `k`: `k` copies from anywhere, `not P_B` on the first
//!   `k - 1`, `P_B` on the last.
//! * Liveness induction at `k`: `k` copies from anywhere, all not good. UNSAT
//!   means every run sees a good state at least once every `k` steps.
//! * Liveness BMC at depth `k`: a lasso of `k` copies from an initial state
//!   whose last state loops back to copy `l`, with copies `l..k` not good.
//!
//! `not P` is a union of closed half-spaces, so each query with negated
//! predicates on `m` copies expands into `d^m` conjunctive queries.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::constraint::{LinearConstraint, Query, Site, VarRef};
use crate::error::{Error, Result};
use crate::abstraction::{solve_with_abstraction, AbstractionMask, Provenance};
use crate::solver::{solve, SolverConfig, Status, Verdict};
use crate::transition::{constrain_predicate, negate_predicate, Start, StatePredicate, TransitionSpec};

#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub solver: SolverConfig,
    pub delta_strict: f64,
    /// Upper bound on the number of conjunctive queries one negated
    /// predicate expansion may produce.
    pub combo_limit: usize,
    /// Wall-clock budget for a whole portfolio run.
    pub time_limit: Option<Duration>,
    /// Predicates known to hold on every reachable state; conjoined on all
    /// copies of induction queries.
    pub strengthening: Vec<StatePredicate>,
    /// Fields freed in every query; UNSAT answers of the abstraction are
    /// final, SAT answers are replayed against the concrete query.
    pub mask: Option<AbstractionMask>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            solver: SolverConfig::default(),
            delta_strict: crate::constraint::DEFAULT_DELTA_STRICT,
            combo_limit: 4096,
            time_limit: None,
            strengthening: Vec::new(),
            mask: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Property {
    Safety(StatePredicate),
    Liveness(StatePredicate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bmc,
    KInduction,
}

/// One concrete state of a trace and the network's output on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceState {
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    Proved {
        k: usize,
    },
    Refuted {
        k: usize,
        trace: Vec<TraceState>,
        /// For liveness counterexamples: the last state steps back to this
        /// index, closing an infinite run.
        #[serde(skip_serializing_if = "Option::is_none")]
        loop_start: Option<usize>,
    },
    Exhausted {
        k_max: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckStats {
    pub queries: usize,
    pub nodes: usize,
    pub lp_calls: usize,
    pub lp_iterations: usize,
    /// Queries settled UNSAT on their abstraction.
    #[serde(skip_serializing_if = "is_zero")]
    pub abstract_unsat: usize,
    /// Abstract witnesses that failed on the concrete query.
    #[serde(skip_serializing_if = "is_zero")]
    pub spurious: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl CheckStats {
    fn add(&mut self, v: &Verdict, provenance: Provenance) {
        self.queries += 1;
        self.nodes += v.stats.nodes;
        self.lp_calls += v.stats.lp_calls;
        self.lp_iterations += v.stats.lp_iterations;
        match provenance {
            Provenance::ProvedViaAbstraction => self.abstract_unsat += 1,
            Provenance::AbstractionRefutedSpurious => self.spurious += 1,
            _ => {}
        }
    }

    fn absorb(&mut self, other: &CheckStats) {
        self.queries += other.queries;
        self.nodes += other.nodes;
        self.lp_calls += other.lp_calls;
        self.lp_iterations += other.lp_iterations;
        self.abstract_unsat += other.abstract_unsat;
        self.spurious += other.spurious;
    }
}

/// Solves `q`, through its abstraction when a mask is configured.
fn decide(q: &Query, spec: &TransitionSpec, cfg: &CheckConfig) -> Result<(Verdict, Provenance)> {
    match &cfg.mask {
        Some(mask) if !mask.is_empty() => {
            let r = solve_with_abstraction(q, spec, mask, &cfg.solver)?;
            Ok((r.verdict, r.provenance))
        }
        _ => Ok((solve(q, &cfg.solver)?, Provenance::Direct)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    #[serde(flatten)]
    pub outcome: Outcome,
    /// Engine that produced the outcome; absent when exhausted.
    pub method: Option<Method>,
    /// Set when a mask was configured: whether a proof came entirely from
    /// abstract queries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub stats: CheckStats,
}

impl CheckResult {
    pub fn is_proved(&self) -> bool {
        matches!(self.outcome, Outcome::Proved { .. })
    }

    pub fn is_refuted(&self) -> bool {
        matches!(self.outcome, Outcome::Refuted { .. })
    }
}

/// Result of a single BMC query family.
#[derive(Debug, Clone, PartialEq)]
pub enum Bmc {
    Violation {
        trace: Vec<TraceState>,
        loop_start: Option<usize>,
    },
    Clear,
    Unknown(String),
}

/// Result of a single induction query family.
#[derive(Debug, Clone, PartialEq)]
pub enum Induction {
    Proved,
    Inconclusive {
        reason: String,
        /// The k-long segment that defeated the induction step, if any.
        segment: Option<Vec<TraceState>>,
    },
}

impl Induction {
    pub fn is_proved(&self) -> bool {
        matches!(self, Induction::Proved)
    }
}

fn trace_of(v: &Verdict) -> Vec<TraceState> {
    let w = v.witness.as_ref().expect("SAT verdicts carry a witness");
    w.inputs
        .iter()
        .zip(&w.outputs)
        .map(|(i, o)| TraceState {
            inputs: i.clone(),
            outputs: o.clone(),
        })
        .collect()
}

/// Enumerates the `d^m` ways to pick one piece of `negated` for each copy in
/// `copies`, applying them to `base` lazily and in mixed-radix order (first
/// copy varies slowest).
struct Combos<'a> {
    base: &'a Query,
    negated: &'a [StatePredicate],
    copies: Vec<usize>,
    count: usize,
}

impl<'a> Combos<'a> {
    fn new(base: &'a Query, negated: &'a [StatePredicate], copies: Vec<usize>, limit: usize) -> Result<Self> {
        let d = negated.len();
        let mut count: usize = 1;
        for _ in &copies {
            count = count.checked_mul(d).filter(|&c| c <= limit).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{d} negated pieces over {} copies exceed the limit of {limit} queries",
                    copies.len()
                ))
            })?;
        }
        Ok(Combos {
            base,
            negated,
            copies,
            count,
        })
    }

    fn query(&self, mut index: usize) -> Result<Query> {
        let d = self.negated.len();
        let mut picks = vec![0; self.copies.len()];
        for p in picks.iter_mut().rev() {
            *p = index % d;
            index /= d;
        }
        let mut q = self.base.clone();
        for (&copy, &pick) in self.copies.iter().zip(&picks) {
            q = constrain_predicate(&q, &self.negated[pick], &[copy])?;
        }
        Ok(q)
    }
}

enum Search {
    Sat(Verdict),
    AllUnsat,
    Unknown(String),
}

/// Solves a fixed-order list of queries and returns the first SAT one in
/// that order. In parallel mode later queries are skipped once an earlier one
/// is SAT, so the answer matches sequential mode.
fn first_sat(
    count: usize,
    make: impl Fn(usize) -> Result<Query> + Sync,
    spec: &TransitionSpec,
    cfg: &CheckConfig,
    stats: &mut CheckStats,
) -> Result<Search> {
    let run = |i: usize| -> Result<(Verdict, Provenance)> {
        let q = make(i)?;
        decide(&q, spec, cfg)
    };
    let verdicts: Vec<(usize, (Verdict, Provenance))> = if cfg.solver.threads <= 1 {
        let mut out = Vec::new();
        for i in 0..count {
            let v = run(i)?;
            let sat = v.0.is_sat();
            out.push((i, v));
            if sat {
                break;
            }
        }
        out
    } else {
        let best = AtomicUsize::new(usize::MAX);
        let results: Vec<Option<Result<(usize, (Verdict, Provenance))>>> = (0..count)
            .into_par_iter()
            .map(|i| {
                if i > best.load(Ordering::Acquire) {
                    return None;
                }
                let v = run(i);
                if let Ok((v, _)) = &v {
                    if v.is_sat() {
                        best.fetch_min(i, Ordering::AcqRel);
                    }
                }
                Some(v.map(|v| (i, v)))
            })
            .collect();
        let cut = best.load(Ordering::Acquire);
        let mut out = Vec::new();
        for r in results.into_iter().flatten() {
            let (i, v) = r?;
            if i <= cut {
                out.push((i, v));
            }
        }
        out
    };
    let mut unknown = None;
    for (_, (v, prov)) in verdicts {
        stats.add(&v, prov);
        match v.status {
            Status::Sat => return Ok(Search::Sat(v)),
            Status::Unknown if unknown.is_none() => {
                unknown = Some(v.reason.clone().unwrap_or_else(|| "solver returned UNKNOWN".into()))
            }
            _ => {}
        }
    }
    Ok(match unknown {
        Some(r) => Search::Unknown(r),
        None => Search::AllUnsat,
    })
}

fn strengthen(q: Query, cfg: &CheckConfig) -> Result<Query> {
    let all: Vec<usize> = (0..q.copies()).collect();
    cfg.strengthening
        .iter()
        .try_fold(q, |q, p| constrain_predicate(&q, p, &all))
}

/// Safety BMC at exactly depth `k`: is a bad state reachable in `k - 1`
/// transitions from an initial state?
pub fn bmc_at_depth(
    spec: &TransitionSpec,
    p_bad: &StatePredicate,
    k: usize,
    cfg: &CheckConfig,
    stats: &mut CheckStats,
) -> Result<Bmc> {
    let q = spec.unroll(k, Start::FromInitial)?;
    let q = constrain_predicate(&q, p_bad, &[k - 1])?;
    let (v, prov) = decide(&q, spec, cfg)?;
    stats.add(&v, prov);
    debug!("safety bmc k={k}: {:?}", v.status);
    Ok(match v.status {
        Status::Sat => Bmc::Violation {
            trace: trace_of(&v),
            loop_start: None,
        },
        Status::Unsat => Bmc::Clear,
        Status::Unknown => Bmc::Unknown(v.reason.unwrap_or_default()),
    })
}

/// Safety BMC within `k` steps: tries depths `1..=k` and reports the
/// shortest violation.
pub fn bmc(spec: &TransitionSpec, p_bad: &StatePredicate, k: usize, cfg: &CheckConfig) -> Result<CheckResult> {
    bmc_property(spec, &Property::Safety(p_bad.clone()), k, cfg)
}

/// BMC within `k` steps for either property kind.
pub fn bmc_property(spec: &TransitionSpec, property: &Property, k: usize, cfg: &CheckConfig) -> Result<CheckResult> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut stats = CheckStats::default();
    let mut unknown = None;
    for depth in 1..=k {
        let r = match property {
            Property::Safety(p) => bmc_at_depth(spec, p, depth, cfg, &mut stats)?,
            Property::Liveness(p) => liveness_bmc_at_depth(spec, p, depth, cfg, &mut stats)?,
        };
        match r {
            Bmc::Violation { trace, loop_start } => {
                return Ok(CheckResult {
                    outcome: Outcome::Refuted {
                        k: depth,
                        trace,
                        loop_start,
                    },
                    method: Some(Method::Bmc),
                    provenance: None,
                    stats,
                })
            }
            Bmc::Clear => {}
            Bmc::Unknown(r) => unknown = unknown.or(Some(format!("depth {depth}: {r}"))),
        }
    }
    Ok(CheckResult {
        outcome: Outcome::Exhausted {
            k_max: k,
            reason: unknown.unwrap_or_else(|| format!("no violation within {k} steps")),
        },
        method: None,
        provenance: None,
        stats,
    })
}

/// Provenance of a proof whose induction queries produced `sub`.
fn proof_provenance(cfg: &CheckConfig, sub: &CheckStats) -> Option<Provenance> {
    cfg.mask.as_ref().filter(|m| !m.is_empty())?;
    Some(if sub.spurious > 0 {
        Provenance::AbstractionRefutedSpurious
    } else if sub.queries > 0 && sub.abstract_unsat == sub.queries {
        Provenance::ProvedViaAbstraction
    } else {
        Provenance::Direct
    })
}

/// k-induction at exactly `k`. For safety the base case (no violation
/// within `k` steps) is checked first.
pub fn induction_at(spec: &TransitionSpec, property: &Property, k: usize, cfg: &CheckConfig) -> Result<CheckResult> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut stats = CheckStats::default();
    if let Property::Safety(_) = property {
        let base = bmc_property(spec, property, k, cfg)?;
        stats.absorb(&base.stats);
        match base.outcome {
            Outcome::Refuted { .. } => return Ok(CheckResult { stats, ..base }),
            Outcome::Exhausted { ref reason, .. } if !reason.starts_with("no violation") => {
                return Ok(CheckResult { stats, ..base })
            }
            _ => {}
        }
    }
    let mut sub = CheckStats::default();
    let r = match property {
        Property::Safety(p) => k_induction_safety(spec, p, k, cfg, &mut sub)?,
        Property::Liveness(p) => k_induction_liveness(spec, p, k, cfg, &mut sub)?,
    };
    stats.absorb(&sub);
    Ok(match r {
        Induction::Proved => CheckResult {
            outcome: Outcome::Proved { k },
            method: Some(Method::KInduction),
            provenance: proof_provenance(cfg, &sub),
            stats,
        },
        Induction::Inconclusive { reason, .. } => CheckResult {
            outcome: Outcome::Exhausted {
                k_max: k,
                reason: format!("induction at k={k} inconclusive: {reason}"),
            },
            method: None,
            provenance: None,
            stats,
        },
    })
}

/// Liveness BMC at depth `k`: a lasso-shaped run that is never good from
/// some point on.
pub fn liveness_bmc_at_depth(
    spec: &TransitionSpec,
    p_good: &StatePredicate,
    k: usize,
    cfg: &CheckConfig,
    stats: &mut CheckStats,
) -> Result<Bmc> {
    let base = spec.unroll(k, Start::FromInitial)?;
    let negated = negate_predicate(p_good, cfg.delta_strict);
    if negated.is_empty() {
        // P_G is a tautology: every state is good.
        return Ok(Bmc::Clear);
    }
    let mut unknown = None;
    for l in 0..k {
        let mut looped = base.clone();
        for c in spec.transition_constraints(k - 1, l) {
            looped = looped.couple(c)?;
        }
        let combos = match Combos::new(&looped, &negated, (l..k).collect(), cfg.combo_limit) {
            Ok(c) => c,
            Err(e) => {
                unknown = unknown.or(Some(e.to_string()));
                continue;
            }
        };
        match first_sat(combos.count, |i| combos.query(i), spec, cfg, stats)? {
            Search::Sat(v) => {
                return Ok(Bmc::Violation {
                    trace: trace_of(&v),
                    loop_start: Some(l),
                })
            }
            Search::AllUnsat => {}
            Search::Unknown(r) => unknown = unknown.or(Some(r)),
        }
    }
    Ok(match unknown {
        Some(r) => Bmc::Unknown(r),
        None => Bmc::Clear,
    })
}

/// Induction step for safety at `k`. Assumes the base case (no violation
/// within `k` steps from an initial state) was established separately.
pub fn k_induction_safety(
    spec: &TransitionSpec,
    p_bad: &StatePredicate,
    k: usize,
    cfg: &CheckConfig,
    stats: &mut CheckStats,
) -> Result<Induction> {
    let base = strengthen(spec.unroll(k, Start::FromAnywhere)?, cfg)?;
    let base = constrain_predicate(&base, p_bad, &[k - 1])?;
    let negated = negate_predicate(p_bad, cfg.delta_strict);
    if negated.is_empty() && k > 1 {
        // P_B is a tautology, so "not bad" is empty.
        return Ok(Induction::Proved);
    }
    induction(spec, &base, &negated, (0..k - 1).collect(), cfg, stats)
}

/// Induction step for liveness at `k`: no `k` consecutive not-good states
/// exist anywhere.
pub fn k_induction_liveness(
    spec: &TransitionSpec,
    p_good: &StatePredicate,
    k: usize,
    cfg: &CheckConfig,
    stats: &mut CheckStats,
) -> Result<Induction> {
    let base = strengthen(spec.unroll(k, Start::FromAnywhere)?, cfg)?;
    let negated = negate_predicate(p_good, cfg.delta_strict);
    if negated.is_empty() {
        return Ok(Induction::Proved);
    }
    induction(spec, &base, &negated, (0..k).collect(), cfg, stats)
}

fn induction(
    spec: &TransitionSpec,
    base: &Query,
    negated: &[StatePredicate],
    copies: Vec<usize>,
    cfg: &CheckConfig,
    stats: &mut CheckStats,
) -> Result<Induction> {
    let combos = match Combos::new(base, negated, copies, cfg.combo_limit) {
        Ok(c) => c,
        Err(e) => {
            return Ok(Induction::Inconclusive {
                reason: e.to_string(),
                segment: None,
            })
        }
    };
    Ok(match first_sat(combos.count, |i| combos.query(i), spec, cfg, stats)? {
        Search::AllUnsat => Induction::Proved,
        Search::Sat(v) => Induction::Inconclusive {
            reason: "induction step is satisfiable".into(),
            segment: Some(trace_of(&v)),
        },
        Search::Unknown(r) => Induction::Inconclusive { reason: r, segment: None },
    })
}

/// Alternates BMC and k-induction for `k = 1..=k_max`.
pub fn portfolio(spec: &TransitionSpec, property: &Property, k_max: usize, cfg: &CheckConfig) -> Result<CheckResult> {
    run_portfolio(spec, property, k_max, cfg, true, true)
}

/// Portfolio with either engine switched off. With only induction enabled,
/// a proof of a safety property is only sound together with a separate base
/// case.
pub fn run_portfolio(
    spec: &TransitionSpec,
    property: &Property,
    k_max: usize,
    cfg: &CheckConfig,
    use_bmc: bool,
    use_induction: bool,
) -> Result<CheckResult> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be at least 1".into()));
    }
    let deadline = cfg.time_limit.map(|t| Instant::now() + t);
    let mut stats = CheckStats::default();
    let mut note: Option<String> = None;
    let exhausted = |k_max, reason: String, stats| CheckResult {
        outcome: Outcome::Exhausted { k_max, reason },
        method: None,
        provenance: None,
        stats,
    };
    for k in 1..=k_max {
        let mut cfg_k = cfg.clone();
        if let Some(d) = deadline {
            let now = Instant::now();
            if now >= d {
                return Ok(exhausted(k - 1, "time limit reached".into(), stats));
            }
            let left = d - now;
            cfg_k.solver.time_limit = Some(cfg.solver.time_limit.map_or(left, |t| t.min(left)));
        }
        if use_bmc {
            let r = match property {
                Property::Safety(p) => bmc_at_depth(spec, p, k, &cfg_k, &mut stats)?,
                Property::Liveness(p) => liveness_bmc_at_depth(spec, p, k, &cfg_k, &mut stats)?,
            };
            match r {
                Bmc::Violation { trace, loop_start } => {
                    info!("refuted by BMC at k={k}");
                    return Ok(CheckResult {
                        outcome: Outcome::Refuted { k, trace, loop_start },
                        method: Some(Method::Bmc),
                        provenance: None,
                        stats,
                    });
                }
                Bmc::Unknown(r) => note = Some(format!("bmc at k={k}: {r}")),
                Bmc::Clear => {}
            }
        }
        if use_induction {
            let mut sub = CheckStats::default();
            let r = match property {
                Property::Safety(p) => k_induction_safety(spec, p, k, &cfg_k, &mut sub)?,
                Property::Liveness(p) => k_induction_liveness(spec, p, k, &cfg_k, &mut sub)?,
            };
            stats.absorb(&sub);
            match r {
                Induction::Proved => {
                    info!("proved by k-induction at k={k}");
                    return Ok(CheckResult {
                        outcome: Outcome::Proved { k },
                        method: Some(Method::KInduction),
                        provenance: proof_provenance(cfg, &sub),
                        stats,
                    });
                }
                Induction::Inconclusive { reason, .. } => debug!("induction at k={k} inconclusive: {reason}"),
            }
        }
    }
    let reason = note.unwrap_or_else(|| format!("no conclusion up to k={k_max}"));
    Ok(exhausted(k_max, reason, stats))
}

fn state_value(s: &TraceState) -> impl Fn(VarRef) -> f64 + '_ {
    move |v| match v.site {
        Site::Input(i) => s.inputs[i],
        Site::Output(j) => s.outputs[j],
    }
}

/// Replays a trace: outputs match the network, consecutive states are
/// linked by the sliding-window relation, every input lies in its field box,
/// and (for a loop) the last state steps back to `loop_start`.
pub fn trace_is_consistent(spec: &TransitionSpec, trace: &[TraceState], loop_start: Option<usize>, tol: f64) -> bool {
    let net = spec.network();
    let states_ok = trace.iter().all(|s| {
        s.inputs.len() == net.input_size()
            && net.evaluate(&s.inputs).is_ok_and(|y| {
                y.len() == s.outputs.len() && y.iter().zip(&s.outputs).all(|(a, b)| (a - b).abs() <= tol)
            })
            && s.inputs
                .iter()
                .enumerate()
                .all(|(p, &x)| spec.position_box(p).contains(x, tol))
    });
    let links_ok = trace
        .windows(2)
        .all(|w| spec.is_transition(&w[0].inputs, &w[1].inputs, tol));
    let loop_ok = match (loop_start, trace.last()) {
        (Some(l), Some(last)) => l < trace.len() && spec.is_transition(&last.inputs, &trace[l].inputs, tol),
        (Some(_), None) => false,
        (None, _) => true,
    };
    !trace.is_empty() && states_ok && links_ok && loop_ok
}

/// Checks that `trace` starts in an initial state.
pub fn starts_initial(spec: &TransitionSpec, trace: &[TraceState], tol: f64) -> bool {
    trace.first().is_some_and(|s| {
        spec.initial_constraints()
            .iter()
            .all(|c: &LinearConstraint| c.is_satisfied(state_value(s), tol))
    })
}

/// Full check of a counterexample reported for `property`.
pub fn validate_counterexample(
    spec: &TransitionSpec,
    property: &Property,
    trace: &[TraceState],
    loop_start: Option<usize>,
    tol: f64,
    delta_strict: f64,
) -> bool {
    if !trace_is_consistent(spec, trace, loop_start, tol) || !starts_initial(spec, trace, tol) {
        return false;
    }
    match property {
        Property::Safety(p) => {
            loop_start.is_none() && trace.last().is_some_and(|s| p.holds(&s.inputs, &s.outputs, tol))
        }
        Property::Liveness(p) => {
            let not_good = negate_predicate(p, delta_strict);
            loop_start.is_some_and(|l| {
                trace[l..]
                    .iter()
                    .all(|s| not_good.iter().any(|n| n.holds(&s.inputs, &s.outputs, tol)))
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn cfg() -> CheckConfig {
        CheckConfig::default()
    }

    #[test]
    fn depth3_bmc() {
        let (spec, bad) = fixtures::depth3();
        let r = bmc(&spec, &bad, 2, &cfg()).unwrap();
        assert!(matches!(r.outcome, Outcome::Exhausted { k_max: 2, .. }));
        let r = bmc(&spec, &bad, 3, &cfg()).unwrap();
        match &r.outcome {
            Outcome::Refuted { k: 3, trace, loop_start: None } => {
                assert_eq!(trace.len(), 3);
                let p = Property::Safety(bad.clone());
                assert!(validate_counterexample(&spec, &p, trace, None, 1e-6, 1e-6));
            }
            other => panic!("{other:?}"),
        }
        // a deeper budget still finds the depth-3 violation
        assert!(bmc(&spec, &bad, 5, &cfg()).unwrap().is_refuted());
    }

    #[test]
    fn pointwise_safe_proved_at_one() {
        let (spec, bad) = fixtures::pointwise_safe();
        let r = portfolio(&spec, &Property::Safety(bad), 4, &cfg()).unwrap();
        assert_eq!(r.outcome, Outcome::Proved { k: 1 });
        assert_eq!(r.method, Some(Method::KInduction));
    }

    #[test]
    fn tautological_bad_never_proved() {
        let (spec, _) = fixtures::pointwise_safe();
        let bad = StatePredicate::new(
            crate::transition::PredicateKind::Bad,
            vec![crate::constraint::output_at_least(0, -10.0)],
        )
        .unwrap();
        let r = portfolio(&spec, &Property::Safety(bad), 4, &cfg()).unwrap();
        assert!(matches!(r.outcome, Outcome::Refuted { k: 1, .. }));
    }

    #[test]
    fn ladder_k_star() {
        for (k_star, d) in fixtures::LADDER {
            let (spec, good) = fixtures::liveness_ladder(d);
            let mut stats = CheckStats::default();
            for k in 1..k_star {
                assert!(!k_induction_liveness(&spec, &good, k, &cfg(), &mut stats).unwrap().is_proved());
            }
            assert!(k_induction_liveness(&spec, &good, k_star, &cfg(), &mut stats).unwrap().is_proved());
        }
    }

    #[test]
    fn lasso_found_for_constant_not_good() {
        // out = 3 relu(..) - relu(..) can be <= 0 forever on a constant run
        let spec = TransitionSpec::new(
            std::sync::Arc::new(fixtures::two_relu()),
            2,
            1,
            None,
            vec![crate::constraint::Interval::new(-1.0, 1.0).unwrap()],
            vec![],
            None,
        )
        .unwrap();
        let good = StatePredicate::new(
            crate::transition::PredicateKind::Good,
            vec![crate::constraint::output_at_least(0, 1e-6)],
        )
        .unwrap();
        let p = Property::Liveness(good);
        let r = portfolio(&spec, &p, 3, &cfg()).unwrap();
        match &r.outcome {
            Outcome::Refuted { trace, loop_start, .. } => {
                assert!(validate_counterexample(&spec, &p, trace, *loop_start, 1e-6, 1e-6))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn combo_limit_is_inconclusive() {
        let (spec, _) = fixtures::liveness_ladder(0.2125);
        let good = StatePredicate::new(
            crate::transition::PredicateKind::Good,
            vec![LinearConstraint::single(VarRef::output(0, 0), crate::constraint::Relation::Eq, 0.5)],
        )
        .unwrap();
        let c = CheckConfig {
            combo_limit: 8,
            ..cfg()
        };
        let mut stats = CheckStats::default();
        match k_induction_liveness(&spec, &good, 4, &c, &mut stats).unwrap() {
            Induction::Inconclusive { segment: None, reason } => assert!(reason.contains("limit")),
            other => panic!("{other:?}"),
        }
        assert_eq!(stats.queries, 0);
    }

    #[test]
    fn parallel_matches_sequential() {
        let (spec, good) = fixtures::liveness_ladder(0.7);
        let seq = portfolio(&spec, &Property::Liveness(good.clone()), 3, &cfg()).unwrap();
        let mut par_cfg = cfg();
        par_cfg.solver.threads = 4;
        let par = portfolio(&spec, &Property::Liveness(good), 3, &par_cfg).unwrap();
        assert_eq!(seq.outcome, par.outcome);
    }

    #[test]
    fn proof_through_abstraction() {
        // aurora-mini only reads steps 1 and 2
        let (spec, good) = fixtures::aurora_mini();
        let mask = crate::abstraction::AbstractionMask::resolve(
            &spec,
            &crate::abstraction::FieldSelection::OlderThan(2),
        )
        .unwrap();
        let c = CheckConfig {
            mask: Some(mask),
            ..cfg()
        };
        let r = portfolio(&spec, &Property::Liveness(good), 4, &c).unwrap();
        assert_eq!(r.outcome, Outcome::Proved { k: 2 });
        assert_eq!(r.provenance, Some(Provenance::ProvedViaAbstraction));
    }

    #[test]
    fn single_engine_entry_points() {
        let (spec, bad) = fixtures::depth3();
        let p = Property::Safety(bad);
        assert!(induction_at(&spec, &p, 3, &cfg()).unwrap().is_refuted());
        let (spec, good) = fixtures::liveness_ladder(0.7);
        let p = Property::Liveness(good);
        assert!(!induction_at(&spec, &p, 1, &cfg()).unwrap().is_proved());
        assert!(induction_at(&spec, &p, 2, &cfg()).unwrap().is_proved());
        assert!(matches!(
            bmc_property(&spec, &p, 3, &cfg()).unwrap().outcome,
            Outcome::Exhausted { k_max: 3, .. }
        ));
    }

    #[test]
    fn long_delay_exhausts() {
        let (spec, bad) = fixtures::long_delay();
        let r = portfolio(&spec, &Property::Safety(bad.clone()), 3, &cfg()).unwrap();
        assert!(matches!(r.outcome, Outcome::Exhausted { k_max: 3, .. }));
        let r = portfolio(&spec, &Property::Safety(bad), 4, &cfg()).unwrap();
        assert!(matches!(r.outcome, Outcome::Refuted { k: 4, .. }));
    }
}
