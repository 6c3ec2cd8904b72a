//! Verification queries: variable boxes plus linear constraints over the
//! inputs and outputs of one or more copies of a network.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// Default margin used to turn strict inequalities into closed ones.
pub const DEFAULT_DELTA_STRICT: f64 = 1e-6;

/// A closed interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::EmptyInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Intersection; may be empty.
    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.lo >= other.lo && self.hi <= other.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Where a variable lives inside one network copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Site {
    Input(usize),
    Output(usize),
}

/// A variable of a (possibly multi-copy) query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarRef {
    pub copy: usize,
    pub site: Site,
}

impl VarRef {
    pub fn input(copy: usize, index: usize) -> Self {
        VarRef {
            copy,
            site: Site::Input(index),
        }
    }

    pub fn output(copy: usize, index: usize) -> Self {
        VarRef {
            copy,
            site: Site::Output(index),
        }
    }

    pub fn with_copy(self, copy: usize) -> Self {
        VarRef { copy, ..self }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.site {
            Site::Input(i) => write!(f, "{}:in:{}", self.copy, i),
            Site::Output(j) => write!(f, "{}:out:{}", self.copy, j),
        }
    }
}

impl FromStr for VarRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad variable name {s:?}; expected <copy>:<in|out>:<index>"));
        let mut parts = s.split(':');
        let copy = parts.next().and_then(|p| p.trim().parse().ok()).ok_or_else(bad)?;
        let site = parts.next().ok_or_else(bad)?.trim();
        let index = parts.next().and_then(|p| p.trim().parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        site_from_name(site, index)
            .map(|site| VarRef { copy, site })
            .ok_or_else(bad)
    }
}

pub(crate) fn site_from_name(name: &str, index: usize) -> Option<Site> {
    match name {
        "in" => Some(Site::Input(index)),
        "out" => Some(Site::Output(index)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub var: VarRef,
}

/// `sum(coef * var) <relation> constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<Term>,
    pub relation: Relation,
    pub constant: f64,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(f64, VarRef)>, relation: Relation, constant: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyConstraint);
        }
        if terms.iter().any(|(c, _)| !c.is_finite()) || !constant.is_finite() {
            return Err(Error::NonFinite("constraint coefficients".into()));
        }
        Ok(LinearConstraint {
            terms: terms.into_iter().map(|(coef, var)| Term { coef, var }).collect(),
            relation,
            constant,
        })
    }

    /// `1 * var <relation> constant`.
    pub fn single(var: VarRef, relation: Relation, constant: f64) -> Self {
        LinearConstraint {
            terms: vec![Term { coef: 1.0, var }],
            relation,
            constant,
        }
    }

    /// Evaluates the left-hand side under an assignment.
    pub fn lhs(&self, value: impl Fn(VarRef) -> f64) -> f64 {
        self.terms.iter().map(|t| t.coef * value(t.var)).sum()
    }

    /// Signed violation: positive when the constraint is violated.
    pub fn violation(&self, value: impl Fn(VarRef) -> f64) -> f64 {
        let lhs = self.lhs(value);
        match self.relation {
            Relation::Le => lhs - self.constant,
            Relation::Ge => self.constant - lhs,
            Relation::Eq => (lhs - self.constant).abs(),
        }
    }

    pub fn is_satisfied(&self, value: impl Fn(VarRef) -> f64, tol: f64) -> bool {
        self.violation(value) <= tol
    }

    pub fn mentions(&self, pred: impl Fn(VarRef) -> bool) -> bool {
        self.terms.iter().any(|t| pred(t.var))
    }

    /// Same constraint with every term moved to `copy`.
    pub fn on_copy(&self, copy: usize) -> Self {
        LinearConstraint {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coef: t.coef,
                    var: t.var.with_copy(copy),
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Closed complement pieces: `a <= c` becomes `a >= c + delta`, and an
    /// equality splits into two pieces.
    pub fn negated(&self, delta_strict: f64) -> Vec<LinearConstraint> {
        let with = |relation, constant| LinearConstraint {
            terms: self.terms.clone(),
            relation,
            constant,
        };
        match self.relation {
            Relation::Le => vec![with(Relation::Ge, self.constant + delta_strict)],
            Relation::Ge => vec![with(Relation::Le, self.constant - delta_strict)],
            Relation::Eq => vec![
                with(Relation::Le, self.constant - delta_strict),
                with(Relation::Ge, self.constant + delta_strict),
            ],
        }
    }
}

impl fmt::Display for LinearConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{}*{}", t.coef, t.var)?;
        }
        write!(f, " {} {}", self.relation, self.constant)
    }
}

/// `output[index] <= bound` on copy 0, the usual negated post-condition.
pub fn output_at_most(index: usize, bound: f64) -> LinearConstraint {
    LinearConstraint::single(VarRef::output(0, index), Relation::Le, bound)
}

/// `output[index] >= bound` on copy 0.
pub fn output_at_least(index: usize, bound: f64) -> LinearConstraint {
    LinearConstraint::single(VarRef::output(0, index), Relation::Ge, bound)
}

/// Expands `max(outputs[candidates]) > outputs[target]` into one disjunct per
/// candidate: `out_c - out_target >= delta`.
pub fn max_output_exceeds(candidates: &[usize], target: usize, delta_strict: f64) -> Vec<LinearConstraint> {
    candidates
        .iter()
        .filter(|&&c| c != target)
        .map(|&c| LinearConstraint {
            terms: vec![
                Term {
                    coef: 1.0,
                    var: VarRef::output(0, c),
                },
                Term {
                    coef: -1.0,
                    var: VarRef::output(0, target),
                },
            ],
            relation: Relation::Ge,
            constant: delta_strict,
        })
        .collect()
}

/// A conjunctive query over `copies` copies of one network.
///
/// All builders return new values; a `Query` is never mutated in place once
/// handed out.
#[derive(Debug, Clone)]
pub struct Query {
    net: Arc<Network>,
    copies: usize,
    input_boxes: Vec<Vec<Interval>>,
    output_boxes: Vec<Vec<Interval>>,
    constraints: Vec<LinearConstraint>,
    coupling: Vec<LinearConstraint>,
}

impl Query {
    /// A query with every variable unbounded and no constraints.
    pub fn new(net: Arc<Network>, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidConfig("a query needs at least one copy".into()));
        }
        let inputs = net.input_size();
        let outputs = net.output_size();
        Ok(Query {
            net,
            copies,
            input_boxes: vec![vec![Interval::UNBOUNDED; inputs]; copies],
            output_boxes: vec![vec![Interval::UNBOUNDED; outputs]; copies],
            constraints: Vec::new(),
            coupling: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_arc(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn coupling(&self) -> &[LinearConstraint] {
        &self.coupling
    }

    pub fn input_boxes(&self) -> &[Vec<Interval>] {
        &self.input_boxes
    }

    pub fn output_boxes(&self) -> &[Vec<Interval>] {
        &self.output_boxes
    }

    pub fn box_of(&self, var: VarRef) -> Interval {
        match var.site {
            Site::Input(i) => self.input_boxes[var.copy][i],
            Site::Output(j) => self.output_boxes[var.copy][j],
        }
    }

    pub fn check_var(&self, var: VarRef) -> Result<()> {
        let ok = var.copy < self.copies
            && match var.site {
                Site::Input(i) => i < self.net.input_size(),
                Site::Output(j) => j < self.net.output_size(),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidVar(var))
        }
    }

    fn check_constraint(&self, c: &LinearConstraint) -> Result<()> {
        if c.terms.is_empty() {
            return Err(Error::EmptyConstraint);
        }
        c.terms.iter().try_for_each(|t| self.check_var(t.var))
    }

    /// Replaces the box of `var`.
    pub fn with_box(&self, var: VarRef, interval: Interval) -> Result<Query> {
        let mut q = self.clone();
        q.set_box(var, interval)?;
        Ok(q)
    }

    /// Gives every input of every copy the same box.
    pub fn with_all_input_boxes(&self, interval: Interval) -> Query {
        let mut q = self.clone();
        for row in &mut q.input_boxes {
            row.fill(interval);
        }
        q
    }

    pub(crate) fn set_box(&mut self, var: VarRef, interval: Interval) -> Result<()> {
        self.check_var(var)?;
        if interval.is_empty() || interval.lo.is_nan() || interval.hi.is_nan() {
            return Err(Error::EmptyInterval {
                lo: interval.lo,
                hi: interval.hi,
            });
        }
        match var.site {
            Site::Input(i) => self.input_boxes[var.copy][i] = interval,
            Site::Output(j) => self.output_boxes[var.copy][j] = interval,
        }
        Ok(())
    }

    /// Returns a new query with `c` appended to the constraints.
    pub fn conjoin(&self, c: LinearConstraint) -> Result<Query> {
        let mut q = self.clone();
        q.push_constraint(c)?;
        Ok(q)
    }

    pub fn conjoin_all(&self, cs: impl IntoIterator<Item = LinearConstraint>) -> Result<Query> {
        let mut q = self.clone();
        for c in cs {
            q.push_constraint(c)?;
        }
        Ok(q)
    }

    /// Returns a new query with `c` appended to the coupling constraints.
    pub fn couple(&self, c: LinearConstraint) -> Result<Query> {
        let mut q = self.clone();
        q.push_coupling(c)?;
        Ok(q)
    }

    pub(crate) fn push_constraint(&mut self, c: LinearConstraint) -> Result<()> {
        self.check_constraint(&c)?;
        self.constraints.push(c);
        Ok(())
    }

    pub(crate) fn push_coupling(&mut self, c: LinearConstraint) -> Result<()> {
        self.check_constraint(&c)?;
        self.coupling.push(c);
        Ok(())
    }

    pub(crate) fn retain_constraints(&mut self, keep: impl Fn(&LinearConstraint) -> bool) {
        self.constraints.retain(|c| keep(c));
        self.coupling.retain(|c| keep(c));
    }

    /// Every constraint and coupling, in order.
    pub fn all_constraints(&self) -> impl Iterator<Item = &LinearConstraint> {
        self.constraints.iter().chain(self.coupling.iter())
    }

    /// Rejects queries whose inputs are not all finitely boxed.
    pub fn require_finite_inputs(&self) -> Result<()> {
        for (copy, row) in self.input_boxes.iter().enumerate() {
            for (i, b) in row.iter().enumerate() {
                if !b.is_finite() {
                    return Err(Error::UnboundedInput(VarRef::input(copy, i)));
                }
            }
        }
        Ok(())
    }

    /// Forward-evaluates each copy on `inputs` and checks boxes and
    /// constraints within `tol`.
    pub fn is_satisfied_by(&self, inputs: &[Vec<f64>], tol: f64) -> bool {
        if inputs.len() != self.copies {
            return false;
        }
        let mut outputs = Vec::with_capacity(self.copies);
        for x in inputs {
            match self.net.evaluate(x) {
                Ok(y) => outputs.push(y),
                Err(_) => return false,
            }
        }
        self.is_satisfied_by_assignment(inputs, &outputs, tol)
    }

    pub(crate) fn is_satisfied_by_assignment(&self, inputs: &[Vec<f64>], outputs: &[Vec<f64>], tol: f64) -> bool {
        let value = |v: VarRef| match v.site {
            Site::Input(i) => inputs[v.copy][i],
            Site::Output(j) => outputs[v.copy][j],
        };
        for copy in 0..self.copies {
            for (i, b) in self.input_boxes[copy].iter().enumerate() {
                if !b.contains(inputs[copy][i], tol) {
                    return false;
                }
            }
            for (j, b) in self.output_boxes[copy].iter().enumerate() {
                if !b.contains(outputs[copy][j], tol) {
                    return false;
                }
            }
        }
        self.all_constraints().all(|c| c.is_satisfied(value, tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn two_relu_query() -> Query {
        Query::new(Arc::new(fixtures::two_relu()), 1)
            .unwrap()
            .with_all_input_boxes(Interval::new(-10.0, 10.0).unwrap())
    }

    #[test]
    fn conjoin_appends_and_leaves_original() {
        let q = two_relu_query();
        let q2 = q.conjoin(output_at_most(0, 5.0)).unwrap();
        assert_eq!(q.constraints().len(), 0);
        assert_eq!(q2.constraints().len(), 1);
        assert_eq!(q2.constraints()[0], LinearConstraint::single(VarRef::output(0, 0), Relation::Le, 5.0));
    }

    #[test]
    fn conjoin_rejects_bad_var() {
        let q = two_relu_query();
        let c = LinearConstraint::single(VarRef::input(1, 0), Relation::Le, 0.0);
        assert!(matches!(q.conjoin(c), Err(Error::InvalidVar(_))));
        let c = LinearConstraint::single(VarRef::output(0, 3), Relation::Le, 0.0);
        assert!(matches!(q.conjoin(c), Err(Error::InvalidVar(_))));
    }

    #[test]
    fn contradictory_box_rejected() {
        assert!(Interval::new(1.0, 0.0).is_err());
        let q = two_relu_query();
        let empty = Interval { lo: 1.0, hi: 0.0 };
        assert!(q.with_box(VarRef::input(0, 0), empty).is_err());
    }

    #[test]
    fn output_bound_helpers() {
        assert_eq!(output_at_most(0, 5.0).to_string(), "1*0:out:0 <= 5");
        assert_eq!(output_at_most(0, 0.0).constant, 0.0);
        assert_eq!(output_at_least(2, -1.0).relation, Relation::Ge);
    }

    #[test]
    fn varref_parse_display() {
        for s in ["0:in:3", "2:out:0"] {
            assert_eq!(s.parse::<VarRef>().unwrap().to_string(), s);
        }
        assert!("0:hidden:1".parse::<VarRef>().is_err());
        assert!("x:in:1".parse::<VarRef>().is_err());
    }

    #[test]
    fn negation_pieces() {
        let c = LinearConstraint::single(VarRef::output(0, 0), Relation::Ge, 1e-6);
        let neg = c.negated(1e-6);
        assert_eq!(neg, vec![LinearConstraint::single(VarRef::output(0, 0), Relation::Le, 0.0)]);
        let eq = LinearConstraint::single(VarRef::input(0, 0), Relation::Eq, 1.0);
        assert_eq!(eq.negated(0.5).len(), 2);
    }

    #[test]
    fn max_exceeds_skips_target() {
        let ds = max_output_exceeds(&[0, 1, 2, 3], 3, 1e-6);
        assert_eq!(ds.len(), 3);
        assert!(ds.iter().all(|d| d.terms[1].var == VarRef::output(0, 3)));
    }

    #[test]
    fn satisfaction_check() {
        let q = two_relu_query().conjoin(output_at_most(0, 5.0)).unwrap();
        assert!(q.is_satisfied_by(&[vec![0.0, -1.0]], 0.0));
        assert!(!q.is_satisfied_by(&[vec![1.0, 3.0]], 0.0));
        assert!(!q.is_satisfied_by(&[vec![0.0, -11.0]], 0.0));
    }
}
