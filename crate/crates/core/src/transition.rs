//! Agent-plus-environment transition systems with sliding-window states.
//!
//! A state is one network input: `window` steps of `fields_per_step`
//! statistics each. A transition drops the oldest step and appends a fresh
//! one whose fields may take any value inside their `field_boxes`. Step 0 is
//! the oldest, step `window - 1` the newest.
//!
//! Transition-spec files are JSON:
//!
//! ```text
//! {
//!   "network": "aurora-mini.net.json",
//!   "window": 3,
//!   "fields_per_step": 3,
//!   "field_roles": ["latency_gradient", "latency_ratio", "sending_ratio"],
//!   "field_boxes": [[-0.1, 0.1], [1.0, 1.1], [1.0, 1.0]],
//!   "initial_constraints": [],
//!   "layout": [[0, 1, 2], [3, 4, 5], [6, 7, 8]]
//! }
//! ```
//!
//! `layout[step][field]` names the input position; it defaults to
//! `step * fields_per_step + field`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraint::{Interval, LinearConstraint, Query, Relation, Site, VarRef};
use crate::error::{Error, Result};
use crate::format::{convert_all, interval_from_raw, interval_to_raw, RawBox, RawConstraint};
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// Copy 0 must satisfy the initial-state constraints.
    FromInitial,
    /// Copy 0 may be any state.
    FromAnywhere,
}

#[derive(Debug, Clone)]
pub struct TransitionSpec {
    net: Arc<Network>,
    window: usize,
    fields_per_step: usize,
    field_roles: Vec<String>,
    field_boxes: Vec<Interval>,
    initial_constraints: Vec<LinearConstraint>,
    layout: Vec<Vec<usize>>,
    /// Inverse of `layout`: input position -> (step, field).
    position_of: Vec<(usize, usize)>,
}

impl TransitionSpec {
    pub fn new(
        net: Arc<Network>,
        window: usize,
        fields_per_step: usize,
        field_roles: Option<Vec<String>>,
        field_boxes: Vec<Interval>,
        initial_constraints: Vec<LinearConstraint>,
        layout: Option<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        if window == 0 || fields_per_step == 0 {
            return Err(Error::InvalidSpec("window and fields_per_step must be positive".into()));
        }
        if window * fields_per_step != net.input_size() {
            return Err(Error::InvalidSpec(format!(
                "window {window} x fields_per_step {fields_per_step} does not match network input size {}",
                net.input_size()
            )));
        }
        if field_boxes.len() != fields_per_step {
            return Err(Error::InvalidSpec(format!(
                "{} field boxes for {fields_per_step} fields",
                field_boxes.len()
            )));
        }
        if let Some(b) = field_boxes.iter().find(|b| !b.is_finite()) {
            return Err(Error::InvalidSpec(format!("field box {b} is not finite")));
        }
        let field_roles =
            field_roles.unwrap_or_else(|| (0..fields_per_step).map(|f| format!("field{f}")).collect());
        if field_roles.len() != fields_per_step {
            return Err(Error::InvalidSpec(format!(
                "{} field roles for {fields_per_step} fields",
                field_roles.len()
            )));
        }
        for (i, r) in field_roles.iter().enumerate() {
            if field_roles[..i].contains(r) {
                return Err(Error::InvalidSpec(format!("duplicate field role {r:?}")));
            }
        }
        let layout = layout.unwrap_or_else(|| {
            (0..window)
                .map(|j| (0..fields_per_step).map(|f| j * fields_per_step + f).collect())
                .collect()
        });
        if layout.len() != window || layout.iter().any(|row| row.len() != fields_per_step) {
            return Err(Error::InvalidSpec("layout must be window x fields_per_step".into()));
        }
        let n = net.input_size();
        let mut position_of = vec![(usize::MAX, usize::MAX); n];
        for (j, row) in layout.iter().enumerate() {
            for (f, &pos) in row.iter().enumerate() {
                if pos >= n || position_of[pos].0 != usize::MAX {
                    return Err(Error::InvalidSpec(format!(
                        "layout is not a bijection onto input positions (position {pos})"
                    )));
                }
                position_of[pos] = (j, f);
            }
        }
        for c in &initial_constraints {
            for t in &c.terms {
                let ok = t.var.copy == 0
                    && match t.var.site {
                        Site::Input(i) => i < n,
                        Site::Output(j) => j < net.output_size(),
                    };
                if !ok {
                    return Err(Error::InvalidSpec(format!(
                        "initial constraint refers to {}, which is not a copy-0 variable",
                        t.var
                    )));
                }
            }
        }
        Ok(TransitionSpec {
            net,
            window,
            fields_per_step,
            field_roles,
            field_boxes,
            initial_constraints,
            layout,
            position_of,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_arc(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn fields_per_step(&self) -> usize {
        self.fields_per_step
    }

    pub fn field_roles(&self) -> &[String] {
        &self.field_roles
    }

    pub fn field_boxes(&self) -> &[Interval] {
        &self.field_boxes
    }

    pub fn initial_constraints(&self) -> &[LinearConstraint] {
        &self.initial_constraints
    }

    pub fn layout(&self) -> &[Vec<usize>] {
        &self.layout
    }

    pub fn role_index(&self, role: &str) -> Option<usize> {
        self.field_roles.iter().position(|r| r == role)
    }

    /// Input position of `field` at `step`.
    pub fn position(&self, step: usize, field: usize) -> usize {
        self.layout[step][field]
    }

    /// `(step, field)` of an input position.
    pub fn step_field(&self, position: usize) -> (usize, usize) {
        self.position_of[position]
    }

    /// Box every state gives to the input at `position`.
    pub fn position_box(&self, position: usize) -> Interval {
        self.field_boxes[self.position_of[position].1]
    }

    /// Number of coupling equalities between two consecutive copies.
    pub fn couplings_per_transition(&self) -> usize {
        (self.window - 1) * self.fields_per_step
    }

    /// The state after `state` when the environment reports `fresh`.
    pub fn successor(&self, state: &[f64], fresh: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; state.len()];
        for j in 0..self.window {
            for f in 0..self.fields_per_step {
                next[self.position(j, f)] = if j + 1 < self.window {
                    state[self.position(j + 1, f)]
                } else {
                    fresh[f]
                };
            }
        }
        next
    }

    /// True iff `next` can follow `state` (shared history agrees within
    /// `tol`, the fresh step lies in the field boxes).
    pub fn is_transition(&self, state: &[f64], next: &[f64], tol: f64) -> bool {
        (0..self.fields_per_step).all(|f| {
            (0..self.window - 1).all(|j| (next[self.position(j, f)] - state[self.position(j + 1, f)]).abs() <= tol)
                && self.field_boxes[f].contains(next[self.position(self.window - 1, f)], tol)
        })
    }

    /// Coupling equalities `T(x_from, x_to)` between two copies.
    pub fn transition_constraints(&self, from: usize, to: usize) -> Vec<LinearConstraint> {
        let mut out = Vec::with_capacity(self.couplings_per_transition());
        for j in 0..self.window - 1 {
            for f in 0..self.fields_per_step {
                out.push(LinearConstraint {
                    terms: vec![
                        crate::constraint::Term {
                            coef: 1.0,
                            var: VarRef::input(to, self.position(j, f)),
                        },
                        crate::constraint::Term {
                            coef: -1.0,
                            var: VarRef::input(from, self.position(j + 1, f)),
                        },
                    ],
                    relation: Relation::Eq,
                    constant: 0.0,
                });
            }
        }
        out
    }

    /// Query over `k` copies linked by the sliding-window relation; every
    /// input is boxed by its field box.
    pub fn unroll(&self, k: usize, start: Start) -> Result<Query> {
        if k == 0 {
            return Err(Error::InvalidConfig("unrolling depth k must be at least 1".into()));
        }
        let mut q = Query::new(self.net.clone(), k)?;
        for c in 0..k {
            for pos in 0..self.net.input_size() {
                q.set_box(VarRef::input(c, pos), self.position_box(pos))?;
            }
        }
        for c in 0..k - 1 {
            for con in self.transition_constraints(c, c + 1) {
                q.push_coupling(con)?;
            }
        }
        if start == Start::FromInitial {
            for con in &self.initial_constraints {
                q.push_constraint(con.clone())?;
            }
        }
        Ok(q)
    }

    pub fn from_json_str(text: &str, base_dir: Option<&Path>, delta_strict: f64) -> Result<Self> {
        let file = TransitionSpecFile::parse(text)?;
        let net_path = match base_dir {
            Some(dir) => dir.join(&file.network),
            None => file.network.clone().into(),
        };
        let net = Network::load(&net_path)?;
        file.build(Arc::new(net), delta_strict)
    }

    pub fn load(path: impl AsRef<Path>, delta_strict: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path.parent(), delta_strict)
    }
}

/// On-disk form of a [`TransitionSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpecFile {
    pub network: String,
    pub window: usize,
    pub fields_per_step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_roles: Option<Vec<String>>,
    pub field_boxes: Vec<RawBox>,
    #[serde(default)]
    pub initial_constraints: Vec<RawConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<Vec<usize>>>,
}

impl TransitionSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from_json)
    }

    pub fn build(&self, net: Arc<Network>, delta_strict: f64) -> Result<TransitionSpec> {
        let boxes = self
            .field_boxes
            .iter()
            .map(interval_from_raw)
            .collect::<Result<Vec<_>>>()?;
        TransitionSpec::new(
            net,
            self.window,
            self.fields_per_step,
            self.field_roles.clone(),
            boxes,
            convert_all(&self.initial_constraints, delta_strict)?,
            self.layout.clone(),
        )
    }

    pub fn describe(spec: &TransitionSpec, network: &str) -> Self {
        let default_layout: Vec<Vec<usize>> = (0..spec.window)
            .map(|j| (0..spec.fields_per_step).map(|f| j * spec.fields_per_step + f).collect())
            .collect();
        TransitionSpecFile {
            network: network.to_string(),
            window: spec.window,
            fields_per_step: spec.fields_per_step,
            field_roles: Some(spec.field_roles.clone()),
            field_boxes: spec.field_boxes.iter().map(interval_to_raw).collect(),
            initial_constraints: spec.initial_constraints.iter().map(RawConstraint::from_constraint).collect(),
            layout: (spec.layout != default_layout).then(|| spec.layout.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredicateKind {
    /// Bad-state predicate of a safety property.
    Bad,
    /// Good-state predicate of a liveness property.
    Good,
}

/// Conjunction of linear constraints over one state (copy 0 inputs and
/// outputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePredicate {
    pub kind: PredicateKind,
    pub constraints: Vec<LinearConstraint>,
}

impl StatePredicate {
    pub fn new(kind: PredicateKind, constraints: Vec<LinearConstraint>) -> Result<Self> {
        if let Some(t) = constraints.iter().flat_map(|c| &c.terms).find(|t| t.var.copy != 0) {
            return Err(Error::InvalidConfig(format!(
                "state predicates may only refer to copy 0, found {}",
                t.var
            )));
        }
        Ok(StatePredicate { kind, constraints })
    }

    pub fn holds(&self, inputs: &[f64], outputs: &[f64], tol: f64) -> bool {
        let value = |v: VarRef| match v.site {
            Site::Input(i) => inputs[i],
            Site::Output(j) => outputs[j],
        };
        self.constraints.iter().all(|c| c.is_satisfied(value, tol))
    }
}

/// Applies `p` to each listed copy of `q`.
pub fn constrain_predicate(q: &Query, p: &StatePredicate, copies: &[usize]) -> Result<Query> {
    let mut out = q.clone();
    for &c in copies {
        if c >= q.copies() {
            return Err(Error::CopyOutOfRange {
                copy: c,
                copies: q.copies(),
            });
        }
        for con in &p.constraints {
            out.push_constraint(con.on_copy(c))?;
        }
    }
    Ok(out)
}

/// Complement of a conjunctive predicate as a list of single-constraint
/// predicates whose union is the (closed, margin-shrunk) complement.
pub fn negate_predicate(p: &StatePredicate, delta_strict: f64) -> Vec<StatePredicate> {
    let kind = match p.kind {
        PredicateKind::Bad => PredicateKind::Good,
        PredicateKind::Good => PredicateKind::Bad,
    };
    p.constraints
        .iter()
        .flat_map(|c| c.negated(delta_strict))
        .map(|c| StatePredicate {
            kind,
            constraints: vec![c],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::output_at_most;
    use crate::fixtures;

    fn line_spec(window: usize, fields: usize) -> TransitionSpec {
        let net = fixtures::random_network(window * fields, &[3], 1, 9);
        TransitionSpec::new(
            Arc::new(net),
            window,
            fields,
            None,
            vec![Interval::new(0.0, 1.0).unwrap(); fields],
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn window_two_one_field_one_coupling() {
        let spec = line_spec(2, 1);
        let q = spec.unroll(2, Start::FromAnywhere).unwrap();
        assert_eq!(q.coupling().len(), 1);
        let c = &q.coupling()[0];
        // copy 1's older field equals copy 0's newer field
        assert_eq!(c.terms[0].var, VarRef::input(1, 0));
        assert_eq!(c.terms[1].var, VarRef::input(0, 1));
    }

    #[test]
    fn aurora_shape_coupling_count() {
        let spec = line_spec(10, 3);
        assert_eq!(spec.unroll(2, Start::FromAnywhere).unwrap().coupling().len(), 27);
        assert_eq!(spec.unroll(4, Start::FromAnywhere).unwrap().coupling().len(), 81);
    }

    #[test]
    fn single_copy_has_no_coupling() {
        let spec = line_spec(3, 2);
        let q = spec.unroll(1, Start::FromAnywhere).unwrap();
        assert_eq!(q.copies(), 1);
        assert!(q.coupling().is_empty());
        assert!(q.constraints().is_empty());
        assert!(q.input_boxes()[0].iter().all(|b| *b == Interval::new(0.0, 1.0).unwrap()));
        assert!(spec.unroll(0, Start::FromAnywhere).is_err());
    }

    #[test]
    fn bad_layout_rejected() {
        let net = Arc::new(fixtures::random_network(4, &[2], 1, 1));
        let boxes = vec![Interval::new(0.0, 1.0).unwrap(); 2];
        let dup = Some(vec![vec![0, 1], vec![1, 3]]);
        assert!(TransitionSpec::new(net.clone(), 2, 2, None, boxes.clone(), vec![], dup).is_err());
        assert!(TransitionSpec::new(net, 3, 2, None, boxes, vec![], None).is_err());
    }

    #[test]
    fn predicate_on_all_copies() {
        let spec = line_spec(2, 1);
        let q = spec.unroll(3, Start::FromAnywhere).unwrap();
        let p = StatePredicate::new(PredicateKind::Bad, vec![output_at_most(0, 0.0)]).unwrap();
        let q2 = constrain_predicate(&q, &p, &[0, 1, 2]).unwrap();
        assert_eq!(q2.constraints().len(), 3);
        assert_eq!(constrain_predicate(&q, &p, &[]).unwrap().constraints().len(), 0);
        assert!(matches!(
            constrain_predicate(&q, &p, &[3]),
            Err(Error::CopyOutOfRange { copy: 3, copies: 3 })
        ));
    }

    #[test]
    fn negation_examples() {
        let delta = 1e-6;
        // not(out > 0), with out > 0 closed to out >= delta
        let p = StatePredicate::new(
            PredicateKind::Good,
            vec![LinearConstraint::single(VarRef::output(0, 0), Relation::Ge, delta)],
        )
        .unwrap();
        let neg = negate_predicate(&p, delta);
        assert_eq!(neg.len(), 1);
        assert_eq!(neg[0].constraints, vec![output_at_most(0, 0.0)]);
        // De Morgan
        let a = VarRef::input(0, 0);
        let b = VarRef::input(0, 1);
        let p = StatePredicate::new(
            PredicateKind::Bad,
            vec![
                LinearConstraint::single(a, Relation::Le, 1.0),
                LinearConstraint::single(b, Relation::Le, 2.0),
            ],
        )
        .unwrap();
        let neg = negate_predicate(&p, delta);
        assert_eq!(neg[0].constraints, vec![LinearConstraint::single(a, Relation::Ge, 1.0 + delta)]);
        assert_eq!(neg[1].constraints, vec![LinearConstraint::single(b, Relation::Ge, 2.0 + delta)]);
    }

    #[test]
    fn successor_matches_transition_constraints() {
        let spec = line_spec(3, 2);
        let s = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let n = spec.successor(&s, &[0.7, 0.8]);
        assert_eq!(n, vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        assert!(spec.is_transition(&s, &n, 0.0));
        let inputs = [s.clone(), n.clone()];
        for c in spec.transition_constraints(0, 1) {
            assert!(c.is_satisfied(|v| inputs[v.copy][match v.site { Site::Input(i) => i, _ => 0 }], 0.0));
        }
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = line_spec(2, 2);
        let file = TransitionSpecFile::describe(&spec, "net.json");
        let text = serde_json::to_string(&file).unwrap();
        let back = TransitionSpecFile::parse(&text).unwrap();
        assert_eq!(back, file);
        let rebuilt = back.build(spec.network_arc().clone(), 1e-6).unwrap();
        assert_eq!(rebuilt.layout(), spec.layout());
        assert_eq!(rebuilt.field_boxes(), spec.field_boxes());
    }
}
