//! Dense bounded-variable primal simplex.
//!
//! Every row `lo <= a·x <= hi` gets a logical variable `r = a·x` so that the
//! working system is `A x - r = 0` with bounds on all columns. The initial
//! basis is the logical one; phase 1 minimizes the sum of bound violations of
//! basic variables, phase 2 (optional) minimizes the objective.

use log::trace;

/// Row of a linear program: `lo <= sum(coef * x[col]) <= hi`.
#[derive(Debug, Clone)]
pub struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    bounds: Vec<(f64, f64)>,
    rows: Vec<LpRow>,
    objective: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    /// Feasible; optimal when an objective was given.
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit hit or the pivoting broke down numerically.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural column values (meaningful for `Optimal` and `Unbounded`).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    /// Primal feasibility tolerance.
    pub feas_tol: f64,
    /// Overrides the default iteration cap of `50 * (rows + cols) + 1000`.
    pub max_iterations: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-7,
            max_iterations: None,
        }
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a column with the given bounds and returns its index.
    pub fn add_var(&mut self, lo: f64, hi: f64) -> usize {
        self.bounds.push((lo, hi));
        self.bounds.len() - 1
    }

    pub fn set_bounds(&mut self, col: usize, lo: f64, hi: f64) {
        self.bounds[col] = (lo, hi);
    }

    pub fn bounds(&self, col: usize) -> (f64, f64) {
        self.bounds[col]
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, lo: f64, hi: f64) {
        debug_assert!(coefs.iter().all(|&(c, _)| c < self.bounds.len()));
        self.rows.push(LpRow { coefs, lo, hi });
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        self.objective = Some(c);
    }

    pub fn num_vars(&self) -> usize {
        self.bounds.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[LpRow] {
        &self.rows
    }

    pub fn solve(&self, opts: &LpOptions) -> LpSolution {
        let n = self.bounds.len();
        if self
            .bounds
            .iter()
            .any(|&(lo, hi)| lo > hi + opts.feas_tol)
            || self.rows.iter().any(|r| r.lo > r.hi + opts.feas_tol)
        {
            return LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective: 0.0,
                iterations: 0,
            };
        }
        let mut tab = Tableau::new(self);
        let limit = opts
            .max_iterations
            .unwrap_or(50 * (tab.m + tab.width) + 1000);
        let bland_after = 5 * (tab.m + tab.width);
        let mut iterations = 0;
        let mut status = tab.run(Phase::Feasibility, opts.feas_tol, limit, bland_after, &mut iterations);
        if status == LpStatus::Optimal {
            if let Some(c) = &self.objective {
                let mut cost = c.clone();
                cost.resize(tab.width, 0.0);
                status = tab.run(Phase::Objective(&cost), opts.feas_tol, limit, bland_after, &mut iterations);
            }
        }
        let x = tab.x[..n].to_vec();
        let objective = self
            .objective
            .as_ref()
            .map(|c| c.iter().zip(&x).map(|(a, b)| a * b).sum())
            .unwrap_or(0.0);
        trace!(
            "lp {}x{}: {:?} after {} iterations",
            self.rows.len(),
            n,
            status,
            iterations
        );
        LpSolution {
            status,
            x,
            objective,
            iterations,
        }
    }
}

#[derive(Clone, Copy)]
enum Phase<'a> {
    Feasibility,
    Objective(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
    Free,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

struct Tableau {
    m: usize,
    width: usize,
    /// Row-major `m x width`; row i reads `sum_j t[i][j] x_j = 0` with the
    /// basic column of row i having coefficient 1.
    t: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.bounds.len();
        let m = lp.rows.len();
        let width = n + m;
        let mut t = vec![0.0; m * width];
        let mut lo = Vec::with_capacity(width);
        let mut hi = Vec::with_capacity(width);
        for &(l, h) in &lp.bounds {
            lo.push(l);
            hi.push(h);
        }
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                t[i * width + j] -= a;
            }
            t[i * width + n + i] = 1.0;
            lo.push(row.lo);
            hi.push(row.hi);
        }
        let mut x = vec![0.0; width];
        let mut status = vec![Status::Basic; width];
        for j in 0..n {
            let (l, h) = (lo[j], hi[j]);
            if l.is_finite() {
                x[j] = l;
                status[j] = Status::AtLower;
            } else if h.is_finite() {
                x[j] = h;
                status[j] = Status::AtUpper;
            } else {
                x[j] = 0.0;
                status[j] = Status::Free;
            }
        }
        let basis = (n..width).collect();
        let mut tab = Tableau {
            m,
            width,
            t,
            basis,
            status,
            x,
            lo,
            hi,
        };
        tab.recompute_basics();
        tab
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn recompute_basics(&mut self) {
        for i in 0..self.m {
            let row = &self.t[i * self.width..(i + 1) * self.width];
            let mut v = 0.0;
            for (j, &a) in row.iter().enumerate() {
                if a != 0.0 && self.status[j] != Status::Basic {
                    v -= a * self.x[j];
                }
            }
            self.x[self.basis[i]] = v;
        }
    }

    fn infeasibility_costs(&self, tol: f64) -> Option<Vec<f64>> {
        let mut any = false;
        let costs = self
            .basis
            .iter()
            .map(|&b| {
                if self.x[b] < self.lo[b] - tol {
                    any = true;
                    -1.0
                } else if self.x[b] > self.hi[b] + tol {
                    any = true;
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        any.then_some(costs)
    }

    fn run(&mut self, phase: Phase<'_>, tol: f64, limit: usize, bland_after: usize, iterations: &mut usize) -> LpStatus {
        let mut local = 0usize;
        let mut recomputed_clean = false;
        loop {
            if *iterations >= limit {
                return LpStatus::Stalled;
            }
            if local > 0 && local.is_multiple_of(64) {
                self.recompute_basics();
            }
            let bland = local >= bland_after;

            let (basic_cost, nonbasic_cost): (Vec<f64>, Option<&[f64]>) = match phase {
                Phase::Feasibility => match self.infeasibility_costs(tol) {
                    Some(c) => {
                        recomputed_clean = false;
                        (c, None)
                    }
                    None => {
                        // Confirm against freshly recomputed basic values
                        // before declaring feasibility.
                        if recomputed_clean {
                            return LpStatus::Optimal;
                        }
                        self.recompute_basics();
                        recomputed_clean = true;
                        continue;
                    }
                },
                Phase::Objective(c) => (self.basis.iter().map(|&b| c[b]).collect(), Some(c)),
            };

            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None; // (col, dir, |d|)
            for j in 0..self.width {
                let st = self.status[j];
                if st == Status::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let mut d = nonbasic_cost.map_or(0.0, |c| c[j]);
                for (i, &cb) in basic_cost.iter().enumerate() {
                    if cb != 0.0 {
                        d -= cb * self.at(i, j);
                    }
                }
                let dir = if d < -COST_TOL && matches!(st, Status::AtLower | Status::Free) {
                    1.0
                } else if d > COST_TOL && matches!(st, Status::AtUpper | Status::Free) {
                    -1.0
                } else {
                    continue;
                };
                let better = match entering {
                    None => true,
                    Some((_, _, best)) => !bland && d.abs() > best,
                };
                if better {
                    entering = Some((j, dir, d.abs()));
                }
                if bland && entering.is_some() {
                    break;
                }
            }
            let Some((q, dir, _)) = entering else {
                return match phase {
                    Phase::Feasibility => LpStatus::Infeasible,
                    Phase::Objective(_) => LpStatus::Optimal,
                };
            };

            // Ratio test.
            let mut theta = f64::INFINITY;
            let mut leave: Option<(usize, Status)> = None;
            let mut leave_rate = 0.0f64;
            for i in 0..self.m {
                let rate = -dir * self.at(i, q);
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let (v, l, h) = (self.x[b], self.lo[b], self.hi[b]);
                let limit = if v < l - tol {
                    (rate > 0.0).then(|| ((l - v) / rate, Status::AtLower))
                } else if v > h + tol {
                    (rate < 0.0).then(|| ((v - h) / -rate, Status::AtUpper))
                } else if rate > 0.0 && h.is_finite() {
                    Some((((h - v) / rate).max(0.0), Status::AtUpper))
                } else if rate < 0.0 && l.is_finite() {
                    Some((((v - l) / -rate).max(0.0), Status::AtLower))
                } else {
                    None
                };
                if let Some((th, st)) = limit {
                    let replace = match leave {
                        None => true,
                        Some((r, _)) => {
                            if th < theta - 1e-12 {
                                true
                            } else if th <= theta + 1e-12 {
                                if bland {
                                    self.basis[i] < self.basis[r]
                                } else {
                                    rate.abs() > leave_rate
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if replace {
                        theta = th;
                        leave = Some((i, st));
                        leave_rate = rate.abs();
                    }
                }
            }
            let own = if dir > 0.0 {
                self.hi[q] - self.x[q]
            } else {
                self.x[q] - self.lo[q]
            };

            *iterations += 1;
            local += 1;

            if own.is_finite() && own <= theta {
                // Bound flip.
                self.shift(q, dir, own);
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                self.status[q] = if dir > 0.0 { Status::AtUpper } else { Status::AtLower };
                continue;
            }
            let Some((r, leave_status)) = leave else {
                return match phase {
                    Phase::Objective(_) => LpStatus::Unbounded,
                    Phase::Feasibility => LpStatus::Stalled,
                };
            };
            self.shift(q, dir, theta);
            let b = self.basis[r];
            self.x[b] = if leave_status == Status::AtLower {
                self.lo[b]
            } else {
                self.hi[b]
            };
            self.status[b] = leave_status;
            self.pivot(r, q);
        }
    }

    fn shift(&mut self, q: usize, dir: f64, theta: f64) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for i in 0..self.m {
            let a = self.at(i, q);
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= a * dir * theta;
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let piv = self.t[r * w + q];
        {
            let row = &mut self.t[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for chunk in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = chunk[q];
            if f != 0.0 {
                for (v, p) in chunk.iter_mut().zip(prow.iter()) {
                    if *p != 0.0 {
                        *v -= f * p;
                    }
                }
                chunk[q] = 0.0;
            }
        }
        self.status[q] = Status::Basic;
        self.basis[r] = q;
    }
}
