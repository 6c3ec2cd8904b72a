//! Invariant inference by bisection over a monotone family of queries.
//!
//! Two templates, both defined in terms of field roles of a
//! [`TransitionSpec`] (a single state is queried):
//!
//! * Output template: inputs fixed to "excellent conditions" (gradient in
//!   `[-eps, eps]`, ratio in `[1, 1 + eps]`, sending ratio 1); bisect on `b`
//!   in `out <= b` for the tightest UNSAT upper bound.
//! * Input template: same gradient/ratio boxes, searched field in
//!   `[lo, pkt]`, `out >= 0`; bisect on `lo` for the smallest UNSAT lower
//!   bound at grid precision `p` (1 by default).
//!
//! Fields whose role is not named by the template keep their spec boxes.

use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::bounds::propagate_bounds;
use crate::constraint::{output_at_least, output_at_most, Interval, LinearConstraint, Query, Relation, VarRef};
use crate::error::{Error, Result};
use crate::solver::{solve, SolverConfig, Status};
use crate::transition::{PredicateKind, StatePredicate, TransitionSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Roles {
    pub gradient: String,
    pub ratio: String,
    pub sending: String,
}

impl Default for Roles {
    fn default() -> Self {
        Roles {
            gradient: "latency_gradient".into(),
            ratio: "latency_ratio".into(),
            sending: "sending_ratio".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBoundSearch {
    pub epsilon: f64,
    pub eta: f64,
    pub output_index: usize,
    /// `M`; when absent, `1 + |lower bound|` of the output over the boxes.
    pub search_floor: Option<f64>,
    pub roles: Roles,
}

impl OutputBoundSearch {
    pub fn new(epsilon: f64, eta: f64) -> Self {
        OutputBoundSearch {
            epsilon,
            eta,
            output_index: 0,
            search_floor: None,
            roles: Roles::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if let Some(m) = self.search_floor {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidConfig(format!("search floor M must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputBoundSearch {
    pub pkt: f64,
    pub epsilon: f64,
    /// Grid spacing of the searched bound, anchored at 1.
    pub precision: f64,
    /// Property whose satisfiability is tested; `out >= 0` by default.
    pub output_constraint: LinearConstraint,
    pub roles: Roles,
    /// Role of the searched field; the sending ratio by default.
    pub searched_role: Option<String>,
}

impl InputBoundSearch {
    pub fn new(pkt: f64, epsilon: f64) -> Self {
        InputBoundSearch {
            pkt,
            epsilon,
            precision: 1.0,
            output_constraint: output_at_least(0, 0.0),
            roles: Roles::default(),
            searched_role: None,
        }
    }

    fn searched(&self) -> &str {
        self.searched_role.as_deref().unwrap_or(&self.roles.sending)
    }

    fn validate(&self) -> Result<()> {
        if !(self.pkt >= 2.0 && self.pkt.is_finite()) {
            return Err(Error::InvalidConfig(format!("PKT must be at least 2, got {}", self.pkt)));
        }
        if !(self.precision > 0.0 && self.precision.is_finite()) {
            return Err(Error::InvalidConfig(format!("precision must be positive, got {}", self.precision)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Output,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryRecord {
    pub bound: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantResult {
    pub template: Template,
    /// UNSAT end of the final bracket.
    pub proved_bound: f64,
    /// SAT end of the final bracket, if a SAT query was ever observed.
    pub bracketing_sat: Option<f64>,
    /// Width of the final bracket.
    pub precision_achieved: f64,
    /// Solver calls made inside the bisection loop.
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub query_log: Vec<QueryRecord>,
}

/// Single-copy query with template boxes on gradient and ratio fields,
/// `searched_box` on the `searched` role, spec boxes elsewhere.
fn template_boxes(
    spec: &TransitionSpec,
    roles: &Roles,
    epsilon: f64,
    searched_box: Interval,
    searched: &str,
) -> Result<Query> {
    let mut q = Query::new(spec.network_arc().clone(), 1)?;
    for pos in 0..spec.network().input_size() {
        let (_, field) = spec.step_field(pos);
        let role = spec.field_roles()[field].as_str();
        let b = if role == searched {
            searched_box
        } else if role == roles.gradient {
            Interval::new(-epsilon, epsilon)?
        } else if role == roles.ratio {
            Interval::new(1.0, 1.0 + epsilon)?
        } else {
            spec.position_box(pos)
        };
        q.set_box(VarRef::input(0, pos), b)?;
    }
    Ok(q)
}

/// The query `eps-boxes and out <= bound` used by the output template.
pub fn output_query(spec: &TransitionSpec, cfg: &OutputBoundSearch, bound: f64) -> Result<Query> {
    output_base(spec, cfg)?.conjoin(output_at_most(cfg.output_index, bound))
}

fn output_base(spec: &TransitionSpec, cfg: &OutputBoundSearch) -> Result<Query> {
    if cfg.output_index >= spec.network().output_size() {
        return Err(Error::InvalidVar(VarRef::output(0, cfg.output_index)));
    }
    template_boxes(
        spec,
        &cfg.roles,
        cfg.epsilon,
        Interval::point(1.0),
        &cfg.roles.sending,
    )
}

/// The query `eps-boxes, searched fields in [lower, pkt], output
/// constraint` used by the input template.
pub fn input_query(spec: &TransitionSpec, cfg: &InputBoundSearch, lower: f64) -> Result<Query> {
    let searched = cfg.searched();
    if spec.role_index(searched).is_none() {
        return Err(Error::InvalidConfig(format!(
            "searched field role {searched:?} is not part of the spec's layout"
        )));
    }
    template_boxes(
        spec,
        &cfg.roles,
        cfg.epsilon,
        Interval::new(lower, cfg.pkt)?,
        searched,
    )?
    .conjoin(cfg.output_constraint.clone())
}

struct Log<'a> {
    solver: &'a SolverConfig,
    entries: Vec<QueryRecord>,
}

impl Log<'_> {
    fn run(&mut self, q: &Query, bound: f64) -> Result<bool> {
        let v = solve(q, self.solver)?;
        debug!("bound {bound}: {:?}", v.status);
        self.entries.push(QueryRecord { bound, status: v.status });
        match v.status {
            Status::Sat => Ok(true),
            Status::Unsat => Ok(false),
            Status::Unknown => Err(Error::SolverUnknown(format!(
                "query at bound {bound}: {}",
                v.reason.unwrap_or_default()
            ))),
        }
    }
}

/// Every SAT bound must lie on the SAT side of every UNSAT bound. `sat_high`
/// is true when larger bounds are easier to satisfy.
fn check_monotone(log: &[QueryRecord], sat_high: bool) -> Result<()> {
    let sat = log.iter().filter(|r| r.status == Status::Sat).map(|r| r.bound);
    let unsat = || log.iter().filter(|r| r.status == Status::Unsat).map(|r| r.bound);
    for s in sat {
        if let Some(u) = unsat().find(|&u| if sat_high { u >= s } else { u <= s }) {
            return Err(Error::NonMonotone(format!("SAT at {s} but UNSAT at {u}")));
        }
    }
    Ok(())
}

/// Bisects on the output upper bound.
pub fn find_output_invariant(spec: &TransitionSpec, cfg: &OutputBoundSearch, solver: &SolverConfig) -> Result<InvariantResult> {
    cfg.validate()?;
    let base = output_base(spec, cfg)?;
    let m = match cfg.search_floor {
        Some(m) => m,
        None => {
            let nb = propagate_bounds(&base)?;
            1.0 + nb.outputs(0)[cfg.output_index].lo.abs()
        }
    };
    let at = |b: f64| base.conjoin(output_at_most(cfg.output_index, b));
    let mut log = Log {
        solver,
        entries: Vec::new(),
    };
    if !log.run(&at(0.0)?, 0.0)? {
        return Ok(InvariantResult {
            template: Template::Output,
            proved_bound: 0.0,
            bracketing_sat: None,
            precision_achieved: 0.0,
            iterations: 0,
            search_floor: Some(m),
            note: Some("output <= 0 is already UNSAT; the property holds without a search".into()),
            query_log: log.entries,
        });
    }
    if log.run(&at(-m)?, -m)? {
        return Err(Error::SearchFloor(m));
    }
    let (mut first, mut next) = (-m, 0.0);
    let mut iterations = 0;
    while (next - first).abs() >= cfg.eta {
        let mid = 0.5 * (first + next);
        iterations += 1;
        if log.run(&at(mid)?, mid)? {
            next = mid;
        } else {
            first = mid;
        }
    }
    check_monotone(&log.entries, true)?;
    Ok(InvariantResult {
        template: Template::Output,
        proved_bound: first,
        bracketing_sat: Some(next),
        precision_achieved: next - first,
        iterations,
        search_floor: Some(m),
        note: None,
        query_log: log.entries,
    })
}

/// Bisects on the lower bound of the searched input field.
pub fn find_input_invariant(spec: &TransitionSpec, cfg: &InputBoundSearch, solver: &SolverConfig) -> Result<InvariantResult> {
    cfg.validate()?;
    let p = cfg.precision;
    let mut log = Log {
        solver,
        entries: Vec::new(),
    };
    if log.run(&input_query(spec, cfg, cfg.pkt)?, cfg.pkt)? {
        return Err(Error::NoInvariant(format!(
            "no invariant at this PKT: the query is SAT even with the searched field fixed to {}",
            cfg.pkt
        )));
    }
    let (mut first, mut next) = (1.0_f64, cfg.pkt);
    let mut bracketing_sat = None;
    let mut iterations = 0;
    while first + p < next {
        // midpoint snapped down to the grid 1 + i p, kept strictly inside
        let mut mid = 1.0 + p * ((0.5 * (first + next) - 1.0) / p).floor();
        if mid <= first {
            mid = first + p;
        }
        iterations += 1;
        if log.run(&input_query(spec, cfg, mid)?, mid)? {
            first = mid;
            bracketing_sat = Some(mid);
        } else {
            next = mid;
        }
    }
    check_monotone(&log.entries, false)?;
    Ok(InvariantResult {
        template: Template::Input,
        proved_bound: next,
        bracketing_sat,
        precision_achieved: next - first,
        iterations,
        search_floor: None,
        note: None,
        query_log: log.entries,
    })
}

/// A single-state query as a bad-state predicate: its input boxes and
/// constraints conjoined. Applied to the UNSAT query at a proved bound this
/// yields a predicate no state satisfies, which a model checker proves at
/// k = 1 and which can be handed to induction as strengthening.
pub fn query_as_bad_predicate(q: &Query) -> Result<StatePredicate> {
    if q.copies() != 1 {
        return Err(Error::InvalidConfig("only single-state queries convert to predicates".into()));
    }
    let mut cs = Vec::new();
    for (pos, b) in q.input_boxes()[0].iter().enumerate() {
        let v = VarRef::input(0, pos);
        if b.lo == b.hi {
            cs.push(LinearConstraint::single(v, Relation::Eq, b.lo));
            continue;
        }
        if b.lo.is_finite() {
            cs.push(LinearConstraint::single(v, Relation::Ge, b.lo));
        }
        if b.hi.is_finite() {
            cs.push(LinearConstraint::single(v, Relation::Le, b.hi));
        }
    }
    cs.extend(q.constraints().iter().cloned());
    StatePredicate::new(PredicateKind::Bad, cs)
}

/// On-disk invariant search configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantConfigFile {
    pub template: Template,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pkt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default)]
    pub output_index: usize,
    #[serde(default)]
    pub roles: Roles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub searched_role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_floor: Option<f64>,
}

pub enum SearchConfig {
    Output(OutputBoundSearch),
    Input(InputBoundSearch),
}

impl InvariantConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from_json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_search(&self) -> Result<SearchConfig> {
        Ok(match self.template {
            Template::Output => {
                let eta = self
                    .eta
                    .ok_or_else(|| Error::InvalidConfig("the output template needs eta".into()))?;
                let c = OutputBoundSearch {
                    epsilon: self.epsilon,
                    eta,
                    output_index: self.output_index,
                    search_floor: self.search_floor,
                    roles: self.roles.clone(),
                };
                c.validate()?;
                SearchConfig::Output(c)
            }
            Template::Input => {
                let pkt = self
                    .pkt
                    .ok_or_else(|| Error::InvalidConfig("the input template needs pkt".into()))?;
                let c = InputBoundSearch {
                    pkt,
                    epsilon: self.epsilon,
                    precision: self.precision.unwrap_or(1.0),
                    output_constraint: output_at_least(self.output_index, 0.0),
                    roles: self.roles.clone(),
                    searched_role: self.searched_role.clone(),
                };
                c.validate()?;
                SearchConfig::Input(c)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn solver() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn identity_passthrough_bound() {
        let spec = fixtures::identity_passthrough();
        let r = find_output_invariant(&spec, &OutputBoundSearch::new(0.1, 0.01), &solver()).unwrap();
        assert!(r.proved_bound >= -0.11 && r.proved_bound <= -0.10, "{}", r.proved_bound);
        assert!(r.precision_achieved < 0.01);
        let m = r.search_floor.unwrap();
        assert!((m - 1.1).abs() < 1e-12);
        assert!(r.iterations <= (m / 0.01).log2().ceil() as usize);
    }

    #[test]
    fn positive_constant_is_degenerate() {
        let spec = fixtures::constant_output(1.0);
        let r = find_output_invariant(&spec, &OutputBoundSearch::new(0.1, 0.01), &solver()).unwrap();
        assert_eq!(r.proved_bound, 0.0);
        assert!(r.note.is_some());
        assert_eq!(r.query_log.len(), 1);
    }

    #[test]
    fn floor_too_high() {
        let spec = fixtures::identity_passthrough();
        let mut c = OutputBoundSearch::new(0.5, 0.01);
        c.search_floor = Some(0.2);
        assert!(matches!(
            find_output_invariant(&spec, &c, &solver()),
            Err(Error::SearchFloor(m)) if m == 0.2
        ));
    }

    #[test]
    fn bad_eta_rejected() {
        let spec = fixtures::identity_passthrough();
        assert!(find_output_invariant(&spec, &OutputBoundSearch::new(0.1, 0.0), &solver()).is_err());
        assert!(find_output_invariant(&spec, &OutputBoundSearch::new(0.1, -1.0), &solver()).is_err());
    }

    #[test]
    fn two_minus_x_returns_three() {
        let spec = fixtures::two_minus_x();
        let r = find_input_invariant(&spec, &InputBoundSearch::new(8.0, 0.1), &solver()).unwrap();
        assert_eq!(r.proved_bound, 3.0);
        assert_eq!(r.bracketing_sat, Some(2.0));
        let bounds: Vec<f64> = r.query_log.iter().map(|q| q.bound).collect();
        assert_eq!(bounds, vec![8.0, 4.0, 2.0, 3.0]);
        assert!(r.iterations <= (8.0f64 - 1.0).log2().ceil() as usize);
    }

    #[test]
    fn always_negative_collapses_to_two() {
        let mut spec_net = fixtures::constant_output(-1.0);
        // reuse the constant network under the sending-ratio role
        spec_net = TransitionSpec::new(
            spec_net.network_arc().clone(),
            1,
            1,
            Some(vec!["sending_ratio".into()]),
            vec![Interval::new(0.0, 16.0).unwrap()],
            vec![],
            None,
        )
        .unwrap();
        let r = find_input_invariant(&spec_net, &InputBoundSearch::new(8.0, 0.1), &solver()).unwrap();
        assert_eq!(r.proved_bound, 2.0);
        assert_eq!(r.bracketing_sat, None);
    }

    #[test]
    fn no_invariant_at_pkt() {
        let spec = TransitionSpec::new(
            fixtures::constant_output(1.0).network_arc().clone(),
            1,
            1,
            Some(vec!["sending_ratio".into()]),
            vec![Interval::new(0.0, 16.0).unwrap()],
            vec![],
            None,
        )
        .unwrap();
        let err = find_input_invariant(&spec, &InputBoundSearch::new(8.0, 0.1), &solver()).unwrap_err();
        assert!(err.to_string().contains("no invariant"));
    }

    #[test]
    fn missing_searched_role() {
        let spec = fixtures::identity_passthrough();
        assert!(find_input_invariant(&spec, &InputBoundSearch::new(8.0, 0.1), &solver()).is_err());
    }

    #[test]
    fn real_precision_grid() {
        let spec = fixtures::two_minus_x();
        let mut c = InputBoundSearch::new(8.0, 0.1);
        c.precision = 0.25;
        let r = find_input_invariant(&spec, &c, &solver()).unwrap();
        assert!(r.proved_bound > 2.0 && r.proved_bound <= 2.25);
    }

    #[test]
    fn nonmonotone_log_detected() {
        let log = [
            QueryRecord { bound: 1.0, status: Status::Sat },
            QueryRecord { bound: 2.0, status: Status::Unsat },
        ];
        assert!(check_monotone(&log, true).is_err());
        assert!(check_monotone(&log, false).is_ok());
    }

    #[test]
    fn reproducible_log() {
        let spec = fixtures::random_aurora(3);
        let c = OutputBoundSearch::new(0.1, 0.05);
        let a = find_output_invariant(&spec, &c, &solver()).unwrap();
        let b = find_output_invariant(&spec, &c, &solver()).unwrap();
        assert_eq!(a.query_log, b.query_log);
    }

    #[test]
    fn exported_predicate_proved_by_checker() {
        let spec = fixtures::identity_passthrough();
        let c = OutputBoundSearch::new(0.1, 0.01);
        let r = find_output_invariant(&spec, &c, &solver()).unwrap();
        let bad = query_as_bad_predicate(&output_query(&spec, &c, r.proved_bound).unwrap()).unwrap();
        let res = crate::checker::portfolio(
            &spec,
            &crate::checker::Property::Safety(bad),
            2,
            &crate::checker::CheckConfig::default(),
        )
        .unwrap();
        assert_eq!(res.outcome, crate::checker::Outcome::Proved { k: 1 });
    }

    #[test]
    fn config_file() {
        let c = InvariantConfigFile::parse(r#"{"template": "input", "pkt": 8, "epsilon": 0.1}"#).unwrap();
        assert!(matches!(c.to_search().unwrap(), SearchConfig::Input(s) if s.pkt == 8.0 && s.precision == 1.0));
        let c = InvariantConfigFile::parse(r#"{"template": "output", "epsilon": 0.1}"#).unwrap();
        assert!(c.to_search().is_err());
        assert!(InvariantConfigFile::parse(r#"{"template": "sideways"}"#).is_err());
    }
}
