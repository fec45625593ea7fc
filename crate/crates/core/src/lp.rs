//! Dense two-phase revised simplex for general linear programs.
//!
//! Problems are stated with free or nonnegative variables and `<=`, `>=`,
//! `=` rows. Internally free variables are split into positive and negative
//! parts, every row is scaled to unit max-abs coefficient and given a
//! nonnegative right-hand side, and slack/surplus/artificial columns are
//! appended. Phase 1 minimizes the artificial sum; phase 2 the real
//! objective.
//!
//! Pricing is Dantzig's rule (most negative reduced cost, lowest index on
//! ties). After a run of degenerate pivots the solver switches to Bland's
//! rule until the next strictly improving pivot, so it cannot cycle.
//! [`Pricing::Bland`] uses Bland's rule throughout.

use std::io::{self, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Free,
    NonNeg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` entries, one per variable at most.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    fn max_abs(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, &(_, a)| m.max(a.abs()))
    }

    /// Violation of the row at `x`, measured on the row scaled to unit
    /// max-abs coefficient.
    pub fn scaled_violation(&self, x: &[f64]) -> f64 {
        let scale = self.max_abs();
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let lhs = self.dot(x) / scale;
        let rhs = self.rhs / scale;
        match self.relation {
            Relation::Le => (lhs - rhs).max(0.0),
            Relation::Ge => (rhs - lhs).max(0.0),
            Relation::Eq => (lhs - rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    kinds: Vec<VarKind>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    /// Minimize `objective · x` over variables of the given kinds.
    pub fn new(objective: Vec<f64>, kinds: Vec<VarKind>) -> Result<Self> {
        if objective.len() != kinds.len() {
            return Err(Error::Lp(format!(
                "objective has {} coefficients for {} variables",
                objective.len(),
                kinds.len()
            )));
        }
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Lp("objective coefficient is not finite".into()));
        }
        Ok(Self {
            objective,
            kinds,
            constraints: Vec::new(),
        })
    }

    /// Adds a dense row; it must have one coefficient per variable.
    pub fn add_constraint(&mut self, coeffs: &[f64], relation: Relation, rhs: f64) -> Result<()> {
        if coeffs.len() != self.n_vars() {
            return Err(Error::Lp(format!(
                "row has {} coefficients but the program has {} variables",
                coeffs.len(),
                self.n_vars()
            )));
        }
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (j, a))
            .collect();
        self.add_sparse_constraint(terms, relation, rhs)
    }

    pub fn add_sparse_constraint(
        &mut self,
        mut terms: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<()> {
        if !rhs.is_finite() {
            return Err(Error::Lp("right-hand side is not finite".into()));
        }
        terms.sort_by_key(|t| t.0);
        for w in terms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Lp(format!("variable {} repeated in a row", w[0].0)));
            }
        }
        if let Some(&(j, a)) = terms.iter().find(|(j, a)| *j >= self.n_vars() || !a.is_finite()) {
            return Err(Error::Lp(format!("bad row entry ({j}, {a})")));
        }
        terms.retain(|t| t.1 != 0.0);
        self.constraints.push(Constraint {
            terms,
            relation,
            rhs,
        });
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn kinds(&self) -> &[VarKind] {
        &self.kinds
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest scaled row violation or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.scaled_violation(x))
            .fold(0.0, f64::max);
        let bounds = self
            .kinds
            .iter()
            .zip(x)
            .filter(|(k, _)| **k == VarKind::NonNeg)
            .map(|(_, &v)| (-v).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Plain-text fixed-column dump for inspection.
    pub fn write_fixed(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "LP vars={} rows={}", self.n_vars(), self.constraints.len())?;
        writeln!(w, "{:<8}{:<8}{:>24}", "VAR", "KIND", "COST")?;
        for (j, (k, c)) in self.kinds.iter().zip(&self.objective).enumerate() {
            let kind = match k {
                VarKind::Free => "free",
                VarKind::NonNeg => "nonneg",
            };
            writeln!(w, "{j:<8}{kind:<8}{c:>24.15e}")?;
        }
        writeln!(w, "{:<8}{:<8}{:>24}  TERMS", "ROW", "REL", "RHS")?;
        for (i, c) in self.constraints.iter().enumerate() {
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            write!(w, "{i:<8}{rel:<8}{:>24.15e} ", c.rhs)?;
            for (j, a) in &c.terms {
                write!(w, " {j}:{a:.15e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal assignment; empty unless `status` is `Optimal`.
    pub values: Vec<f64>,
    /// `+inf` when infeasible, `-inf` when unbounded.
    pub objective_value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pricing {
    Bland,
    /// Dantzig's rule with a switch to Bland's rule during degenerate runs.
    DantzigBland,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub pricing: Pricing,
    pub pivot_tol: f64,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// Consecutive degenerate pivots tolerated before Bland's rule engages.
    pub degenerate_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            pricing: Pricing::DantzigBland,
            pivot_tol: 1e-9,
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            degenerate_limit: 50,
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    solve_with(lp, &SolverOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution> {
    let Some(sf) = StandardForm::build(lp, opts) else {
        return Ok(LpSolution::infeasible(0));
    };
    let mut simplex = Simplex::new(&sf, opts);

    if sf.n_artificial > 0 {
        let cost: Vec<f64> = (0..sf.n_cols())
            .map(|j| if sf.is_artificial(j) { 1.0 } else { 0.0 })
            .collect();
        // Phase 1 is bounded below by zero, so it always ends optimal.
        if simplex.run(&cost, false)? == PhaseEnd::Unbounded {
            return Err(Error::Lp("phase 1 reported unbounded".into()));
        }
        let infeasibility: f64 = simplex
            .basis
            .iter()
            .zip(&simplex.xb)
            .filter(|(&c, _)| sf.is_artificial(c))
            .map(|(_, &v)| v.max(0.0))
            .sum();
        if infeasibility > opts.feasibility_tol {
            return Ok(LpSolution::infeasible(simplex.iterations));
        }
        simplex.drive_out_artificials();
    }

    let cost = sf.phase2_cost();
    for attempt in 0.. {
        if simplex.run(&cost, true)? == PhaseEnd::Unbounded {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                values: Vec::new(),
                objective_value: f64::NEG_INFINITY,
                iterations: simplex.iterations,
            });
        }
        let values = sf.recover(&simplex.column_values());
        let violation = lp.max_violation(&values);
        if violation <= opts.feasibility_tol || attempt >= 2 {
            if violation > opts.feasibility_tol {
                log::warn!("simplex finished with residual violation {violation:.3e}");
            }
            return Ok(LpSolution {
                status: LpStatus::Optimal,
                objective_value: lp.objective_at(&values),
                values,
                iterations: simplex.iterations,
            });
        }
        log::debug!("residual {violation:.3e} after phase 2, refactoring basis");
        simplex.reinvert()?;
    }
    unreachable!()
}

impl LpSolution {
    fn infeasible(iterations: usize) -> Self {
        Self {
            status: LpStatus::Infeasible,
            values: Vec::new(),
            objective_value: f64::INFINITY,
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ColumnKind {
    /// Structural column: original variable and sign (+1 or -1 for the
    /// negative part of a free variable).
    Structural(usize, f64),
    Slack,
    Artificial,
}

/// `min c·x, A x = b, x >= 0, b >= 0` with sparse columns.
struct StandardForm {
    m: usize,
    columns: Vec<Vec<(usize, f64)>>,
    kinds: Vec<ColumnKind>,
    b: Vec<f64>,
    objective: Vec<f64>,
    n_vars: usize,
    initial_basis: Vec<usize>,
    n_artificial: usize,
}

type SparseRow = Vec<(usize, f64)>;

impl StandardForm {
    /// Returns `None` when an all-zero row is itself infeasible.
    fn build(lp: &LinearProgram, opts: &SolverOptions) -> Option<Self> {
        let mut rows: Vec<(SparseRow, Relation, f64)> = Vec::new();
        for c in lp.constraints() {
            let scale = c.max_abs();
            if scale == 0.0 {
                let ok = match c.relation {
                    Relation::Le => c.rhs >= -opts.feasibility_tol,
                    Relation::Ge => c.rhs <= opts.feasibility_tol,
                    Relation::Eq => c.rhs.abs() <= opts.feasibility_tol,
                };
                if !ok {
                    return None;
                }
                continue;
            }
            let mut terms: Vec<(usize, f64)> = c.terms.iter().map(|&(j, a)| (j, a / scale)).collect();
            let mut rhs = c.rhs / scale;
            let mut rel = c.relation;
            let flip = rhs < 0.0 || (rhs == 0.0 && rel == Relation::Ge);
            if flip {
                rhs = -rhs;
                terms.iter_mut().for_each(|t| t.1 = -t.1);
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            rows.push((terms, rel, rhs.abs()));
        }
        let m = rows.len();

        let mut var_cols: Vec<Vec<usize>> = vec![Vec::new(); lp.n_vars()];
        let mut kinds = Vec::new();
        let mut objective = Vec::new();
        for (j, kind) in lp.kinds().iter().enumerate() {
            var_cols[j].push(kinds.len());
            kinds.push(ColumnKind::Structural(j, 1.0));
            objective.push(lp.objective()[j]);
            if *kind == VarKind::Free {
                var_cols[j].push(kinds.len());
                kinds.push(ColumnKind::Structural(j, -1.0));
                objective.push(-lp.objective()[j]);
            }
        }
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); kinds.len()];
        for (r, (terms, _, _)) in rows.iter().enumerate() {
            for &(j, a) in terms {
                columns[var_cols[j][0]].push((r, a));
                if let Some(&neg) = var_cols[j].get(1) {
                    columns[neg].push((r, -a));
                }
            }
        }

        let mut initial_basis = vec![usize::MAX; m];
        for (r, (_, rel, _)) in rows.iter().enumerate() {
            match rel {
                Relation::Le => {
                    initial_basis[r] = columns.len();
                    columns.push(vec![(r, 1.0)]);
                    kinds.push(ColumnKind::Slack);
                    objective.push(0.0);
                }
                Relation::Ge => {
                    columns.push(vec![(r, -1.0)]);
                    kinds.push(ColumnKind::Slack);
                    objective.push(0.0);
                }
                Relation::Eq => {}
            }
        }
        let mut n_artificial = 0;
        for (r, (_, rel, _)) in rows.iter().enumerate() {
            if *rel != Relation::Le {
                initial_basis[r] = columns.len();
                columns.push(vec![(r, 1.0)]);
                kinds.push(ColumnKind::Artificial);
                objective.push(0.0);
                n_artificial += 1;
            }
        }

        Some(Self {
            m,
            columns,
            kinds,
            b: rows.iter().map(|r| r.2).collect(),
            objective,
            n_vars: lp.n_vars(),
            initial_basis,
            n_artificial,
        })
    }

    fn n_cols(&self) -> usize {
        self.columns.len()
    }

    fn is_artificial(&self, j: usize) -> bool {
        matches!(self.kinds[j], ColumnKind::Artificial)
    }

    fn phase2_cost(&self) -> Vec<f64> {
        self.objective.clone()
    }

    fn recover(&self, x: &[f64]) -> Vec<f64> {
        let mut values = vec![0.0; self.n_vars];
        for (j, kind) in self.kinds.iter().enumerate() {
            if let ColumnKind::Structural(v, sign) = kind {
                values[*v] += sign * x[j];
            }
        }
        values
    }
}

/// Reduced costs above this magnitude are never blamed on rounding.
const NOISE_REDUCED_COST: f64 = 1e-7;

/// Minimum pivots between rebuilds of the basis inverse; the period grows
/// with the row count so the O(m^3) rebuild stays a fraction of the work.
const REFACTOR_PERIOD: usize = 100;

#[derive(Debug, PartialEq, Eq)]
enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Simplex<'a> {
    sf: &'a StandardForm,
    opts: &'a SolverOptions,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    // Explicit basis inverse, row-major m×m.
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    iteration_limit: usize,
}

impl<'a> Simplex<'a> {
    fn new(sf: &'a StandardForm, opts: &'a SolverOptions) -> Self {
        let m = sf.m;
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut in_basis = vec![false; sf.n_cols()];
        for &c in &sf.initial_basis {
            in_basis[c] = true;
        }
        Self {
            sf,
            opts,
            basis: sf.initial_basis.clone(),
            in_basis,
            binv,
            xb: sf.b.clone(),
            iterations: 0,
            iteration_limit: 200 * (sf.m + sf.n_cols()) + 10_000,
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.sf.n_cols()];
        for (&c, &v) in self.basis.iter().zip(&self.xb) {
            x[c] = v.max(0.0);
        }
        x
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.sf.m;
        let mut y = vec![0.0; m];
        for (r, &c) in self.basis.iter().enumerate() {
            let cb = cost[c];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yj, &bij) in y.iter_mut().zip(row) {
                    *yj += cb * bij;
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[(usize, f64)], out: &mut [f64]) {
        let m = self.sf.m;
        for (o, row) in out.iter_mut().zip(self.binv.chunks(m.max(1))) {
            *o = col.iter().map(|&(r, a)| row[r] * a).sum();
        }
    }

    fn recompute_xb(&mut self) {
        let m = self.sf.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&self.sf.b).map(|(a, b)| a * b).sum();
        }
    }

    fn run(&mut self, cost: &[f64], exclude_artificial: bool) -> Result<PhaseEnd> {
        let m = self.sf.m;
        let mut u = vec![0.0; m];
        let mut degenerate_run = 0usize;
        let mut rejected = vec![false; self.sf.n_cols()];
        loop {
            if self.iterations >= self.iteration_limit {
                return Err(Error::Lp(format!(
                    "iteration limit {} reached",
                    self.iteration_limit
                )));
            }
            let bland = match self.opts.pricing {
                Pricing::Bland => true,
                Pricing::DantzigBland => degenerate_run >= self.opts.degenerate_limit,
            };

            let y = self.duals(cost);
            let mut entering = None;
            let mut best = -self.opts.optimality_tol;
            for (j, col) in self.sf.columns.iter().enumerate() {
                if self.in_basis[j] || rejected[j] || (exclude_artificial && self.sf.is_artificial(j)) {
                    continue;
                }
                let (dot, size) = col
                    .iter()
                    .fold((0.0, 0.0f64), |(s, m), &(r, a)| (s + y[r] * a, m.max((y[r] * a).abs())));
                let d = cost[j] - dot;
                if d < best && d < -self.opts.optimality_tol * (1.0 + size) {
                    entering = Some((j, d));
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some((q, d_q)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            self.ftran(&self.sf.columns[q], &mut u);

            let Some(r) = self.ratio_test(&u, bland) else {
                // A reduced cost at noise level with no usable pivot is
                // rounding error, not a direction of descent.
                if exclude_artificial && d_q < -NOISE_REDUCED_COST {
                    return Ok(PhaseEnd::Unbounded);
                }
                rejected[q] = true;
                continue;
            };
            let theta = self.xb[r].max(0.0) / u[r];

            self.pivot(r, q, &u);
            rejected.iter_mut().for_each(|x| *x = false);
            if theta <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.iterations += 1;
            if self.iterations.is_multiple_of(REFACTOR_PERIOD.max(m)) && self.reinvert().is_err() {
                self.recompute_xb();
            }
        }
    }

    /// Leaving row for entering column `u`, or `None` if no entry is a
    /// usable pivot. Dantzig mode uses a Harris pass: among rows whose ratio
    /// is within the feasibility tolerance of the minimum it takes the
    /// largest pivot. Bland mode breaks exact ties by lowest basic column.
    fn ratio_test(&self, u: &[f64], bland: bool) -> Option<usize> {
        let tol = self.opts.pivot_tol;
        let rows = || u.iter().zip(&self.xb).enumerate().filter(|(_, (&ui, _))| ui > tol);
        if bland {
            let theta = rows().map(|(_, (&ui, &xi))| xi.max(0.0) / ui).fold(f64::INFINITY, f64::min);
            let tie = 1e-12 * (1.0 + theta);
            return rows()
                .filter(|(_, (&ui, &xi))| xi.max(0.0) / ui <= theta + tie)
                .min_by_key(|&(i, _)| self.basis[i])
                .map(|(i, _)| i);
        }
        let slack = self.opts.feasibility_tol;
        let bound = rows()
            .map(|(_, (&ui, &xi))| (xi.max(0.0) + slack) / ui)
            .fold(f64::INFINITY, f64::min);
        rows()
            .filter(|(_, (&ui, &xi))| xi.max(0.0) / ui <= bound)
            .max_by(|a, b| a.1 .0.total_cmp(b.1 .0).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
    }

    fn pivot(&mut self, r: usize, q: usize, u: &[f64]) {
        let m = self.sf.m;
        let piv = u[r];
        let theta = self.xb[r].max(0.0) / piv;
        for (x, &ui) in self.xb.iter_mut().zip(u) {
            *x -= theta * ui;
        }
        self.xb[r] = theta;

        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        pivot_row.iter_mut().for_each(|v| *v /= piv);
        let eliminate = |row: &mut [f64], factor: f64| {
            if factor != 0.0 {
                for (a, &p) in row.iter_mut().zip(pivot_row.iter()) {
                    *a -= factor * p;
                }
            }
        };
        for (i, row) in before.chunks_exact_mut(m).enumerate() {
            eliminate(row, u[i]);
        }
        for (k, row) in after.chunks_exact_mut(m).enumerate() {
            eliminate(row, u[r + 1 + k]);
        }

        self.in_basis[self.basis[r]] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
    }

    /// Pivots zero-valued artificials out of the basis where a
    /// non-artificial column can replace them. Rows where none can are
    /// linearly dependent on the others and keep their artificial at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.sf.m;
        let mut u = vec![0.0; m];
        for r in 0..m {
            if !self.sf.is_artificial(self.basis[r]) {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for (j, col) in self.sf.columns.iter().enumerate() {
                if self.in_basis[j] || self.sf.is_artificial(j) {
                    continue;
                }
                let alpha: f64 = col.iter().map(|&(i, a)| row[i] * a).sum();
                if alpha.abs() > self.opts.pivot_tol.max(1e-7)
                    && best.is_none_or(|(_, b)| alpha.abs() > b.abs())
                {
                    best = Some((j, alpha));
                }
            }
            if let Some((q, _)) = best {
                self.ftran(&self.sf.columns[q], &mut u);
                self.pivot(r, q, &u);
                self.iterations += 1;
            }
        }
    }

    /// Rebuilds the basis inverse from scratch by Gauss-Jordan elimination.
    fn reinvert(&mut self) -> Result<()> {
        let m = self.sf.m;
        let mut a = vec![0.0; m * m];
        for (k, &c) in self.basis.iter().enumerate() {
            for &(r, v) in &self.sf.columns[c] {
                a[r * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let p = (col..m)
                .max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))
                .unwrap();
            if a[p * m + col].abs() < 1e-14 {
                return Err(Error::Lp("basis became singular".into()));
            }
            if p != col {
                for k in 0..m {
                    a.swap(p * m + k, col * m + k);
                    inv.swap(p * m + k, col * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for i in 0..m {
                if i == col {
                    continue;
                }
                let f = a[i * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        a[i * m + k] -= f * a[col * m + k];
                        inv[i * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_xb();
        Ok(())
    }
}
