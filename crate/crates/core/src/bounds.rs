//! Interval bound propagation.
//!
//! Input boxes are first tightened against every linear constraint that
//! mentions only inputs (coupling equalities included), then pushed forward
//! through the layers. Fixed ReLU phases clamp the pre-activation interval.
//! Finally the output intervals are intersected with output boxes and every
//! constraint is checked for interval feasibility.

use serde::Serialize;

use crate::constraint::{Interval, LinearConstraint, Query, Relation, Site, VarRef};
use crate::error::Result;
use crate::network::Layer;

/// Phase of one ReLU neuron in a branch-and-bound node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReluPhase {
    Unknown,
    /// `y = x`, `x >= 0`
    Active,
    /// `y = 0`, `x <= 0`
    Inactive,
}

/// `[copy][layer][neuron]`; only ReLU layers have entries.
pub(crate) type PhaseMap = Vec<Vec<Vec<ReluPhase>>>;

pub(crate) fn unknown_phases(q: &Query) -> PhaseMap {
    let sizes = q.network().layer_sizes();
    let per_copy: Vec<Vec<ReluPhase>> = q
        .network()
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            if layer.is_relu() {
                vec![ReluPhase::Unknown; sizes[l + 1]]
            } else {
                Vec::new()
            }
        })
        .collect();
    vec![per_copy; q.copies()]
}

/// Per-neuron bounds for every copy. Layer 0 is the input layer; layer `l`
/// holds the values produced by network layer `l - 1`.
#[derive(Debug, Clone)]
pub struct NeuronBounds {
    values: Vec<Vec<Vec<Interval>>>,
    empty: bool,
}

impl NeuronBounds {
    /// True when the propagation proved the query infeasible.
    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn layer(&self, copy: usize, layer: usize) -> &[Interval] {
        &self.values[copy][layer]
    }

    pub fn inputs(&self, copy: usize) -> &[Interval] {
        &self.values[copy][0]
    }

    pub fn outputs(&self, copy: usize) -> &[Interval] {
        self.values[copy].last().expect("non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.values.first().map_or(0, |c| c.len())
    }

    pub(crate) fn var(&self, v: VarRef) -> Interval {
        match v.site {
            Site::Input(i) => self.values[v.copy][0][i],
            Site::Output(j) => self.outputs(v.copy)[j],
        }
    }
}

/// Sound interval bounds for every neuron of every copy of `q`.
///
/// Fails if some input is not finitely boxed.
pub fn propagate_bounds(q: &Query) -> Result<NeuronBounds> {
    q.require_finite_inputs()?;
    Ok(propagate(q, None))
}

const EMPTY_TOL: f64 = 1e-9;

fn check_interval(iv: &mut Interval) -> bool {
    if iv.lo > iv.hi {
        if iv.lo - iv.hi > EMPTY_TOL * (1.0 + iv.lo.abs().max(iv.hi.abs())) {
            return false;
        }
        let mid = 0.5 * (iv.lo + iv.hi);
        *iv = Interval::point(mid);
    }
    true
}

pub(crate) fn propagate(q: &Query, phases: Option<&PhaseMap>) -> NeuronBounds {
    let net = q.network();
    let mut inputs: Vec<Vec<Interval>> = q.input_boxes().to_vec();
    let mut empty = !tighten_inputs(q, &mut inputs);

    let mut values = Vec::with_capacity(q.copies());
    for (copy, input) in inputs.into_iter().enumerate() {
        let mut layers = Vec::with_capacity(net.layers().len() + 1);
        layers.push(input);
        for (l, layer) in net.layers().iter().enumerate() {
            let prev = layers.last_mut().expect("non-empty");
            let next = match layer {
                Layer::WeightedSum { weights, biases } => weights
                    .iter()
                    .zip(biases)
                    .map(|(row, &b)| {
                        let (mut lo, mut hi) = (b, b);
                        for (&w, iv) in row.iter().zip(prev.iter()) {
                            if w >= 0.0 {
                                lo += w * iv.lo;
                                hi += w * iv.hi;
                            } else {
                                lo += w * iv.hi;
                                hi += w * iv.lo;
                            }
                        }
                        Interval { lo, hi }
                    })
                    .collect(),
                Layer::Relu => {
                    let phase = phases.map(|p| &p[copy][l]);
                    prev.iter_mut()
                        .enumerate()
                        .map(|(i, pre)| {
                            match phase.map_or(ReluPhase::Unknown, |p| p[i]) {
                                ReluPhase::Active => pre.lo = pre.lo.max(0.0),
                                ReluPhase::Inactive => pre.hi = pre.hi.min(0.0),
                                ReluPhase::Unknown => {}
                            }
                            if !check_interval(pre) {
                                empty = true;
                            }
                            Interval {
                                lo: pre.lo.max(0.0),
                                hi: pre.hi.max(0.0),
                            }
                        })
                        .collect()
                }
            };
            layers.push(next);
        }
        let out = layers.last_mut().expect("non-empty");
        for (iv, b) in out.iter_mut().zip(&q.output_boxes()[copy]) {
            *iv = iv.intersect(b);
            if !check_interval(iv) {
                empty = true;
            }
        }
        values.push(layers);
    }

    let mut bounds = NeuronBounds { values, empty };
    if !bounds.empty {
        // Single-variable output constraints tighten; the rest are checked.
        for c in q.all_constraints() {
            if let [t] = c.terms.as_slice() {
                if let Site::Output(j) = t.var.site {
                    let iv = &mut bounds.values[t.var.copy].last_mut().expect("non-empty")[j];
                    tighten_single(iv, t.coef, c.relation, c.constant);
                    if !check_interval(iv) {
                        bounds.empty = true;
                        break;
                    }
                }
            }
            if interval_infeasible(c, &bounds) {
                bounds.empty = true;
                break;
            }
        }
    }
    bounds
}

fn tighten_single(iv: &mut Interval, coef: f64, rel: Relation, constant: f64) {
    if coef == 0.0 {
        return;
    }
    let v = constant / coef;
    let (upper, lower) = match (rel, coef > 0.0) {
        (Relation::Le, true) | (Relation::Ge, false) => (Some(v), None),
        (Relation::Ge, true) | (Relation::Le, false) => (None, Some(v)),
        (Relation::Eq, _) => (Some(v), Some(v)),
    };
    if let Some(u) = upper {
        iv.hi = iv.hi.min(u);
    }
    if let Some(l) = lower {
        iv.lo = iv.lo.max(l);
    }
}

fn lhs_range(c: &LinearConstraint, bounds: impl Fn(VarRef) -> Interval) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for t in &c.terms {
        let iv = bounds(t.var);
        if t.coef >= 0.0 {
            lo += t.coef * iv.lo;
            hi += t.coef * iv.hi;
        } else {
            lo += t.coef * iv.hi;
            hi += t.coef * iv.lo;
        }
    }
    (lo, hi)
}

fn interval_infeasible(c: &LinearConstraint, bounds: &NeuronBounds) -> bool {
    let (lo, hi) = lhs_range(c, |v| bounds.var(v));
    let slack = EMPTY_TOL * (1.0 + c.constant.abs());
    match c.relation {
        Relation::Le => lo > c.constant + slack,
        Relation::Ge => hi < c.constant - slack,
        Relation::Eq => lo > c.constant + slack || hi < c.constant - slack,
    }
}

/// Constraint-based tightening of input boxes. Returns false when some box
/// becomes empty.
fn tighten_inputs(q: &Query, inputs: &mut [Vec<Interval>]) -> bool {
    let input_only: Vec<&LinearConstraint> = q
        .all_constraints()
        .filter(|c| c.terms.iter().all(|t| matches!(t.var.site, Site::Input(_))))
        .collect();
    if input_only.is_empty() {
        return true;
    }
    for _round in 0..20 {
        let mut changed = false;
        for c in &input_only {
            let sides: &[(f64, f64)] = match c.relation {
                Relation::Le => &[(1.0, 0.0)],
                Relation::Ge => &[(-1.0, 0.0)],
                Relation::Eq => &[(1.0, 0.0), (-1.0, 0.0)],
            };
            for &(sign, _) in sides {
                // sign * sum(a x) <= sign * constant
                let cap = sign * c.constant;
                for (k, tk) in c.terms.iter().enumerate() {
                    let a_k = sign * tk.coef;
                    if a_k == 0.0 {
                        continue;
                    }
                    let mut rest = 0.0;
                    for (i, t) in c.terms.iter().enumerate() {
                        if i == k {
                            continue;
                        }
                        let a = sign * t.coef;
                        let iv = input_box(inputs, t.var);
                        rest += if a >= 0.0 { a * iv.lo } else { a * iv.hi };
                    }
                    if !rest.is_finite() {
                        continue;
                    }
                    let bound = (cap - rest) / a_k;
                    let Site::Input(idx) = tk.var.site else { unreachable!() };
                    let iv = &mut inputs[tk.var.copy][idx];
                    let before = *iv;
                    if a_k > 0.0 {
                        iv.hi = iv.hi.min(bound);
                    } else {
                        iv.lo = iv.lo.max(bound);
                    }
                    if !check_interval(iv) {
                        return false;
                    }
                    if (iv.lo - before.lo).abs() > 1e-12 * (1.0 + before.lo.abs())
                        || (iv.hi - before.hi).abs() > 1e-12 * (1.0 + before.hi.abs())
                    {
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}

fn input_box(inputs: &[Vec<Interval>], v: VarRef) -> Interval {
    match v.site {
        Site::Input(i) => inputs[v.copy][i],
        Site::Output(_) => unreachable!("input-only constraint"),
    }
}
