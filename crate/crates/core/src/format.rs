//! Property-spec files and the constraint encoding shared by all file formats.
//!
//! A property file is a JSON document:
//!
//! ```text
//! {
//!   "network": "two_relu.net.json",          // optional, used by one-shot solving
//!   "kind": "query",                      // "query" | "safety" | "liveness"
//!   "copies": 1,
//!   "boxes": {"0:in:0": [-10, 10], "0:in:1": [-10, 10]},
//!   "constraints": [{"terms": [[1, 0, "out", 0]], "rel": "<=", "const": 5}],
//!   "any_of": [[...], [...]],             // optional disjunction
//!   "max_output_exceeds": {"candidates": [0, 1, 2], "target": 2}
//! }
//! ```
//!
//! Terms are `[coefficient, copy, "in" | "out", index]`. Relations are `<=`,
//! `>=`, `=`, plus strict `<` / `>`, which are closed with the strictness
//! margin. A `null` box end means unbounded.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraint::{
    max_output_exceeds, site_from_name, Interval, LinearConstraint, Query, Relation, Site, Term, VarRef,
};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::transition::{PredicateKind, StatePredicate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConstraint {
    pub terms: Vec<(f64, usize, String, usize)>,
    pub rel: String,
    #[serde(rename = "const")]
    pub constant: f64,
}

impl RawConstraint {
    pub fn to_constraint(&self, delta_strict: f64) -> Result<LinearConstraint> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (coef, copy, site, index) in &self.terms {
            let site = site_from_name(site, *index)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown site {site:?}; expected \"in\" or \"out\"")))?;
            terms.push((*coef, VarRef { copy: *copy, site }));
        }
        let (relation, constant) = match self.rel.trim() {
            "<=" => (Relation::Le, self.constant),
            ">=" => (Relation::Ge, self.constant),
            "=" | "==" => (Relation::Eq, self.constant),
            "<" => (Relation::Le, self.constant - delta_strict),
            ">" => (Relation::Ge, self.constant + delta_strict),
            other => return Err(Error::InvalidConfig(format!("unknown relation {other:?}"))),
        };
        LinearConstraint::new(terms, relation, constant)
    }

    pub fn from_constraint(c: &LinearConstraint) -> Self {
        RawConstraint {
            terms: c
                .terms
                .iter()
                .map(|Term { coef, var }| {
                    let (site, idx) = match var.site {
                        Site::Input(i) => ("in", i),
                        Site::Output(j) => ("out", j),
                    };
                    (*coef, var.copy, site.to_string(), idx)
                })
                .collect(),
            rel: c.relation.to_string(),
            constant: c.constant,
        }
    }
}

pub(crate) fn convert_all(raw: &[RawConstraint], delta_strict: f64) -> Result<Vec<LinearConstraint>> {
    raw.iter().map(|r| r.to_constraint(delta_strict)).collect()
}

/// `[lo, hi]` with `null` for an infinite end.
pub type RawBox = [Option<f64>; 2];

pub fn interval_from_raw(b: &RawBox) -> Result<Interval> {
    Interval::new(b[0].unwrap_or(f64::NEG_INFINITY), b[1].unwrap_or(f64::INFINITY))
}

pub fn interval_to_raw(iv: &Interval) -> RawBox {
    let fin = |v: f64| v.is_finite().then_some(v);
    [fin(iv.lo), fin(iv.hi)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    #[default]
    Query,
    Safety,
    Liveness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxExceeds {
    pub candidates: Vec<usize>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<String>,
    #[serde(default)]
    pub kind: PropertyKind,
    #[serde(default = "one")]
    pub copies: usize,
    #[serde(default)]
    pub boxes: BTreeMap<String, RawBox>,
    #[serde(default)]
    pub constraints: Vec<RawConstraint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub any_of: Vec<Vec<RawConstraint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_exceeds: Option<MaxExceeds>,
}

fn one() -> usize {
    1
}

impl PropertyFile {
    pub fn parse(text: &str) -> Result<Self> {
        let p: PropertyFile = serde_json::from_str(text).map_err(Error::from_json)?;
        if p.copies == 0 {
            return Err(Error::InvalidConfig("copies must be at least 1".into()));
        }
        Ok(p)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Disjuncts of the property: each entry is a list of constraints that
    /// is conjoined with the base constraints. A single empty entry when
    /// there is no disjunction.
    fn disjuncts(&self, delta_strict: f64) -> Result<Vec<Vec<LinearConstraint>>> {
        let mut out: Vec<Vec<LinearConstraint>> = Vec::new();
        for d in &self.any_of {
            out.push(convert_all(d, delta_strict)?);
        }
        if let Some(m) = &self.max_output_exceeds {
            out.extend(
                max_output_exceeds(&m.candidates, m.target, delta_strict)
                    .into_iter()
                    .map(|c| vec![c]),
            );
        }
        if out.is_empty() {
            out.push(Vec::new());
        }
        Ok(out)
    }

    /// One query per disjunct over `net`. The property is violated iff any
    /// of them is SAT.
    pub fn to_queries(&self, net: Arc<Network>, delta_strict: f64) -> Result<Vec<Query>> {
        self.apply(&Query::new(net, self.copies)?, delta_strict)
    }

    /// Conjoins the property onto an existing query, such as an unrolled
    /// transition spec. Boxes are intersected with the boxes already there.
    pub fn apply(&self, base: &Query, delta_strict: f64) -> Result<Vec<Query>> {
        if self.copies > base.copies() {
            return Err(Error::InvalidConfig(format!(
                "property uses {} copies but the base query has {}",
                self.copies,
                base.copies()
            )));
        }
        let mut base = base.clone();
        for (name, b) in &self.boxes {
            let var: VarRef = name.parse()?;
            base.check_var(var)?;
            let want = interval_from_raw(b)?;
            let iv = base.box_of(var).intersect(&want);
            if iv.is_empty() {
                // disjoint from the base box: keep the query, make it infeasible
                base = base.conjoin_all([
                    LinearConstraint::single(var, Relation::Ge, want.lo),
                    LinearConstraint::single(var, Relation::Le, want.hi),
                ])?;
            } else {
                base = base.with_box(var, iv)?;
            }
        }
        base = base.conjoin_all(convert_all(&self.constraints, delta_strict)?)?;
        self.disjuncts(delta_strict)?
            .into_iter()
            .map(|d| base.conjoin_all(d))
            .collect()
    }

    /// The state predicate of a safety (bad state) or liveness (good state)
    /// property. Constraints must refer to copy 0.
    pub fn to_predicate(&self, delta_strict: f64) -> Result<StatePredicate> {
        let kind = match self.kind {
            PropertyKind::Safety => PredicateKind::Bad,
            PropertyKind::Liveness => PredicateKind::Good,
            PropertyKind::Query => {
                return Err(Error::InvalidConfig(
                    "property kind must be \"safety\" or \"liveness\" for model checking".into(),
                ))
            }
        };
        if !self.any_of.is_empty() || self.max_output_exceeds.is_some() {
            return Err(Error::InvalidConfig(
                "state predicates must be conjunctions; any_of is only supported for one-shot queries".into(),
            ));
        }
        let mut constraints = convert_all(&self.constraints, delta_strict)?;
        // Output and input boxes on copy 0 become predicate constraints.
        for (name, b) in &self.boxes {
            let var: VarRef = name.parse()?;
            let iv = interval_from_raw(b)?;
            if iv.lo.is_finite() {
                constraints.push(LinearConstraint::single(var, Relation::Ge, iv.lo));
            }
            if iv.hi.is_finite() {
                constraints.push(LinearConstraint::single(var, Relation::Le, iv.hi));
            }
        }
        StatePredicate::new(kind, constraints)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const FIG1_PROP: &str = r#"{
        "kind": "query",
        "boxes": {"0:in:0": [-10, 10], "0:in:1": [-10, 10]},
        "constraints": [{"terms": [[1, 0, "out", 0]], "rel": "<=", "const": 5}]
    }"#;

    #[test]
    fn parses_two_relu_property() {
        let p = PropertyFile::parse(FIG1_PROP).unwrap();
        let qs = p.to_queries(Arc::new(fixtures::two_relu()), 1e-6).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].constraints().len(), 1);
        assert_eq!(qs[0].box_of(VarRef::input(0, 1)), Interval::new(-10.0, 10.0).unwrap());
    }

    #[test]
    fn strict_relations_get_margin() {
        let raw = RawConstraint {
            terms: vec![(1.0, 0, "out".into(), 0)],
            rel: ">".into(),
            constant: 0.0,
        };
        let c = raw.to_constraint(1e-6).unwrap();
        assert_eq!(c.relation, Relation::Ge);
        assert_eq!(c.constant, 1e-6);
    }

    #[test]
    fn null_box_end_is_unbounded() {
        let iv = interval_from_raw(&[None, Some(3.0)]).unwrap();
        assert_eq!(iv.lo, f64::NEG_INFINITY);
        assert_eq!(interval_to_raw(&iv), [None, Some(3.0)]);
    }

    #[test]
    fn rejects_unknown_site_and_relation() {
        let bad_site = r#"{"constraints": [{"terms": [[1, 0, "hidden", 0]], "rel": "<=", "const": 0}]}"#;
        let p = PropertyFile::parse(bad_site).unwrap();
        assert!(p.to_queries(Arc::new(fixtures::two_relu()), 1e-6).is_err());
        let bad_rel = r#"{"constraints": [{"terms": [[1, 0, "out", 0]], "rel": "!=", "const": 0}]}"#;
        let p = PropertyFile::parse(bad_rel).unwrap();
        assert!(p.to_queries(Arc::new(fixtures::two_relu()), 1e-6).is_err());
    }

    #[test]
    fn syntax_error_has_position() {
        match PropertyFile::parse("{\n  \"copies\": ,\n}") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 13)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn max_exceeds_expands_to_disjuncts() {
        let text = r#"{
            "boxes": {"0:in:0": [0, 1], "0:in:1": [0, 1]},
            "max_output_exceeds": {"candidates": [0, 1, 2], "target": 2}
        }"#;
        let net = fixtures::random_network(2, &[3], 3, 1);
        let qs = PropertyFile::parse(text)
            .unwrap()
            .to_queries(Arc::new(net), 1e-6)
            .unwrap();
        assert_eq!(qs.len(), 2);
    }

    #[test]
    fn predicate_requires_kind() {
        let p = PropertyFile::parse(FIG1_PROP).unwrap();
        assert!(p.to_predicate(1e-6).is_err());
        let live = r#"{"kind": "liveness", "constraints": [{"terms": [[1, 0, "out", 0]], "rel": ">", "const": 0}]}"#;
        let pred = PropertyFile::parse(live).unwrap().to_predicate(1e-6).unwrap();
        assert_eq!(pred.kind, PredicateKind::Good);
        assert_eq!(pred.constraints[0].constant, 1e-6);
    }
}
