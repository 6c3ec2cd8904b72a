//! Input-field abstraction.
//!
//! Freeing a (step, field) position removes every constraint and coupling
//! that mentions it, on every copy, and widens its box to the field's
//! declared range. The result over-approximates the original query: UNSAT
//! carries over, SAT may be spurious and is checked against the original.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::constraint::{Query, Site, VarRef};
use crate::error::{Error, Result};
use crate::solver::{solve, validate_witness, SolverConfig, Status, Verdict};
use crate::transition::TransitionSpec;

/// Which fields to free, before resolution against a spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldSelection {
    /// Every field of every step at least this many steps older than the
    /// newest (age 0 is the newest step).
    OlderThan(usize),
    /// Explicit `(step, field)` pairs; a field may be given by role name.
    Pairs(Vec<(usize, FieldRef)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldRef {
    Index(usize),
    Role(String),
}

impl FromStr for FieldSelection {
    type Err = Error;

    /// Parses `older-than:<j>` or a comma-separated list of `step:field`
    /// pairs such as `0:1,1:latency_ratio`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("bad --abstract-fields value {s:?}: {msg}"));
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("older-than:") {
            let j = rest
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("older-than needs a step count ({e})")))?;
            if j == 0 {
                return Err(bad("older-than:0 would free every field".into()));
            }
            return Ok(FieldSelection::OlderThan(j));
        }
        if s.is_empty() {
            return Ok(FieldSelection::Pairs(Vec::new()));
        }
        let mut pairs = Vec::new();
        for item in s.split(',') {
            let (step, field) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| bad(format!("expected step:field, got {item:?}")))?;
            let step = step
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("step {step:?}: {e}")))?;
            let field = field.trim();
            if field.is_empty() {
                return Err(bad("empty field".into()));
            }
            let field = match field.parse::<usize>() {
                Ok(i) => FieldRef::Index(i),
                Err(_) => FieldRef::Role(field.to_string()),
            };
            pairs.push((step, field));
        }
        Ok(FieldSelection::Pairs(pairs))
    }
}

impl fmt::Display for FieldSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSelection::OlderThan(j) => write!(f, "older-than:{j}"),
            FieldSelection::Pairs(pairs) => {
                for (i, (step, field)) in pairs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    match field {
                        FieldRef::Index(idx) => write!(f, "{step}:{idx}")?,
                        FieldRef::Role(r) => write!(f, "{step}:{r}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

/// Set of freed `(step, field)` positions, valid for one spec layout.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AbstractionMask {
    freed: BTreeSet<(usize, usize)>,
}

impl AbstractionMask {
    pub fn new(spec: &TransitionSpec, freed: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let freed: BTreeSet<_> = freed.into_iter().collect();
        for &(step, field) in &freed {
            if step >= spec.window() || field >= spec.fields_per_step() {
                return Err(Error::InvalidConfig(format!(
                    "cannot free step {step}, field {field}: spec has {} steps of {} fields",
                    spec.window(),
                    spec.fields_per_step()
                )));
            }
        }
        Ok(AbstractionMask { freed })
    }

    pub fn resolve(spec: &TransitionSpec, sel: &FieldSelection) -> Result<Self> {
        match sel {
            FieldSelection::OlderThan(j) => {
                let t = spec.window();
                let steps = (0..t).filter(|&step| t - 1 - step >= *j);
                let all: Vec<_> = steps
                    .flat_map(|s| (0..spec.fields_per_step()).map(move |f| (s, f)))
                    .collect();
                Self::new(spec, all)
            }
            FieldSelection::Pairs(pairs) => {
                let mut out = Vec::with_capacity(pairs.len());
                for (step, field) in pairs {
                    let f = match field {
                        FieldRef::Index(i) => *i,
                        FieldRef::Role(r) => spec
                            .role_index(r)
                            .ok_or_else(|| Error::InvalidConfig(format!("unknown field role {r:?}")))?,
                    };
                    out.push((*step, f));
                }
                Self::new(spec, out)
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.freed.is_empty()
    }

    pub fn freed(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.freed.iter().copied()
    }

    pub fn is_subset_of(&self, other: &AbstractionMask) -> bool {
        self.freed.is_subset(&other.freed)
    }

    /// Freed input positions under `spec`'s layout.
    pub fn positions(&self, spec: &TransitionSpec) -> Vec<usize> {
        let mut p: Vec<_> = self.freed.iter().map(|&(s, f)| spec.position(s, f)).collect();
        p.sort_unstable();
        p
    }
}

/// Over-approximation of `q` with the masked inputs freed on every copy.
pub fn abstract_query(q: &Query, spec: &TransitionSpec, mask: &AbstractionMask) -> Result<Query> {
    if q.network().input_size() != spec.network().input_size() {
        return Err(Error::InvalidConfig("query and spec disagree on the network input size".into()));
    }
    let freed = mask.positions(spec);
    let is_freed = |v: VarRef| matches!(v.site, Site::Input(i) if freed.binary_search(&i).is_ok());
    let mut out = q.clone();
    out.retain_constraints(|c| !c.mentions(is_freed));
    for copy in 0..q.copies() {
        for &p in &freed {
            out.set_box(VarRef::input(copy, p), spec.position_box(p))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// No abstraction was applied.
    Direct,
    /// The abstract query was UNSAT.
    ProvedViaAbstraction,
    /// The abstract witness also satisfies the original query.
    AbstractWitnessGenuine,
    /// The abstract witness was spurious; the verdict comes from solving the
    /// original query.
    AbstractionRefutedSpurious,
    /// The abstract query was undecided.
    AbstractionUnknown,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbstractVerdict {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub provenance: Provenance,
}

/// Solves the abstraction of `q` first and falls back to `q` itself when the
/// abstract witness is spurious.
pub fn solve_with_abstraction(
    q: &Query,
    spec: &TransitionSpec,
    mask: &AbstractionMask,
    cfg: &SolverConfig,
) -> Result<AbstractVerdict> {
    if mask.is_empty() {
        return Ok(AbstractVerdict {
            verdict: solve(q, cfg)?,
            provenance: Provenance::Direct,
        });
    }
    let abs = abstract_query(q, spec, mask)?;
    let v = solve(&abs, cfg)?;
    match v.status {
        Status::Unsat => Ok(AbstractVerdict {
            verdict: v,
            provenance: Provenance::ProvedViaAbstraction,
        }),
        Status::Unknown => Ok(AbstractVerdict {
            verdict: v,
            provenance: Provenance::AbstractionUnknown,
        }),
        Status::Sat => {
            let w = v.witness.as_ref().expect("SAT verdicts carry a witness");
            if validate_witness(q, w, cfg.tau_val) {
                return Ok(AbstractVerdict {
                    verdict: v,
                    provenance: Provenance::AbstractWitnessGenuine,
                });
            }
            let mut concrete = solve(q, cfg)?;
            concrete.stats.absorb(&v.stats);
            Ok(AbstractVerdict {
                verdict: concrete,
                provenance: Provenance::AbstractionRefutedSpurious,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parse_selections() {
        assert_eq!("older-than:2".parse::<FieldSelection>().unwrap(), FieldSelection::OlderThan(2));
        assert_eq!(
            "0:1, 1:latency_ratio".parse::<FieldSelection>().unwrap(),
            FieldSelection::Pairs(vec![(0, FieldRef::Index(1)), (1, FieldRef::Role("latency_ratio".into()))])
        );
        for bad in ["older-than:x", "older-than:0", "3", "a:1", "1:", "older-than:-1"] {
            assert!(bad.parse::<FieldSelection>().is_err(), "{bad}");
        }
        let s = "0:1,2:sending_ratio";
        assert_eq!(s.parse::<FieldSelection>().unwrap().to_string(), s);
    }

    #[test]
    fn older_than_frees_old_steps() {
        let (spec, _) = fixtures::aurora_mini();
        let m = AbstractionMask::resolve(&spec, &FieldSelection::OlderThan(1)).unwrap();
        assert_eq!(m.positions(&spec), vec![0, 1, 2, 3, 4, 5]);
        let m = AbstractionMask::resolve(&spec, &FieldSelection::OlderThan(3)).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn invalid_mask_rejected() {
        let (spec, _) = fixtures::aurora_mini();
        assert!(AbstractionMask::new(&spec, [(3, 0)]).is_err());
        assert!(AbstractionMask::new(&spec, [(0, 3)]).is_err());
        let sel = FieldSelection::Pairs(vec![(0, FieldRef::Role("bandwidth".into()))]);
        assert!(AbstractionMask::resolve(&spec, &sel).is_err());
    }

    #[test]
    fn empty_mask_is_identity() {
        let (spec, q) = fixtures::spurious();
        let a = abstract_query(&q, &spec, &AbstractionMask::default()).unwrap();
        assert_eq!(a.constraints(), q.constraints());
        assert_eq!(a.coupling(), q.coupling());
        assert_eq!(a.input_boxes(), q.input_boxes());
    }

    #[test]
    fn zero_weight_proved_via_abstraction() {
        let (spec, q) = fixtures::zero_weight();
        let m = AbstractionMask::resolve(&spec, &FieldSelection::OlderThan(1)).unwrap();
        let r = solve_with_abstraction(&q, &spec, &m, &SolverConfig::default()).unwrap();
        assert_eq!(r.provenance, Provenance::ProvedViaAbstraction);
        assert!(r.verdict.is_unsat());
    }

    #[test]
    fn spurious_falls_back() {
        let (spec, q) = fixtures::spurious();
        let m = AbstractionMask::resolve(&spec, &FieldSelection::OlderThan(1)).unwrap();
        let abs = abstract_query(&q, &spec, &m).unwrap();
        assert!(abs.coupling().is_empty());
        let r = solve_with_abstraction(&q, &spec, &m, &SolverConfig::default()).unwrap();
        assert_eq!(r.provenance, Provenance::AbstractionRefutedSpurious);
        assert!(r.verdict.is_unsat());
        assert!(solve(&q, &SolverConfig::default()).unwrap().is_unsat());
    }
}
