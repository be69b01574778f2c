//! Small dense linear programs by the two-phase tableau simplex method.
//!
//! Sizes here are a few hundred rows by a few thousand columns at most, so a
//! dense tableau is simpler and fast enough. Pivoting uses the most negative
//! reduced cost and falls back to Bland's rule after a run of degenerate
//! pivots, which rules out cycling.

use thiserror::Error;

const EPS_PIVOT: f64 = 1e-9;
const EPS_HARRIS: f64 = 1e-10;
const EPS_COST: f64 = 1e-11;
const EPS_FEAS: f64 = 1e-8;
const DEGENERATE_RUN: usize = 50;
const REFACTOR_EVERY: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// `minimize c·x` subject to linear rows; variables are nonnegative unless marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    free: Vec<bool>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram { objective: vec![0.0; num_vars], free: vec![false; num_vars], rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Appends a nonnegative variable and returns its index.
    pub fn add_var(&mut self, cost: f64) -> usize {
        self.objective.push(cost);
        self.free.push(false);
        self.objective.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.objective.len()));
        self.rows.push(Row { coeffs, relation, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    /// (m + 1) x (cols + 1); last row holds reduced costs, last column the rhs.
    t: Vec<f64>,
    m: usize,
    cols: usize,
    basis: Vec<usize>,
    /// Column index of the negative part of each free variable.
    neg_part: Vec<Option<usize>>,
    /// First artificial column.
    art_start: usize,
    /// Constraint rows as first built, for refactoring.
    orig: Vec<f64>,
    costs: Vec<f64>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.cols + 1) + self.cols]
    }

    fn build(lp: &LinearProgram) -> Self {
        let n = lp.objective.len();
        let mut neg_part = vec![None; n];
        let mut cols = n;
        for (slot, &free) in neg_part.iter_mut().zip(&lp.free) {
            if free {
                *slot = Some(cols);
                cols += 1;
            }
        }
        let slack_start = cols;
        let slacks = lp.rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let art_start = slack_start + slacks;
        // One artificial per row that does not start with a usable slack.
        let mut needs_art = Vec::with_capacity(lp.rows.len());
        for row in &lp.rows {
            let flipped = row.rhs < 0.0;
            let rel = match (row.relation, flipped) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            };
            needs_art.push(rel != Relation::Le);
        }
        let arts = needs_art.iter().filter(|&&a| a).count();
        let total = art_start + arts;
        let m = lp.rows.len();
        let width = total + 1;
        let mut t = vec![0.0; (m + 1) * width];
        let mut basis = vec![0; m];
        let mut slack = slack_start;
        let mut art = art_start;
        for (i, row) in lp.rows.iter().enumerate() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            for &(j, a) in &row.coeffs {
                t[i * width + j] += sign * a;
                if let Some(nj) = neg_part[j] {
                    t[i * width + nj] -= sign * a;
                }
            }
            t[i * width + total] = sign * row.rhs;
            if row.relation != Relation::Eq {
                let s = if row.relation == Relation::Le { 1.0 } else { -1.0 };
                t[i * width + slack] = sign * s;
                if !needs_art[i] {
                    basis[i] = slack;
                }
                slack += 1;
            }
            if needs_art[i] {
                t[i * width + art] = 1.0;
                basis[i] = art;
                art += 1;
            }
        }
        let orig = t[..m * width].to_vec();
        Tableau { t, m, cols: total, basis, neg_part, art_start, orig, costs: vec![0.0; width] }
    }

    fn set_objective(&mut self, costs: &[f64]) {
        let width = self.cols + 1;
        self.costs = costs.to_vec();
        let obj = self.m * width;
        self.t[obj..obj + width].copy_from_slice(&costs[..width]);
        for i in 0..self.m {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for c in 0..width {
                    self.t[obj + c] -= cb * self.t[i * width + c];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cols + 1;
        let p = self.t[r * width + c];
        for v in &mut self.t[r * width..(r + 1) * width] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * width..(r + 1) * width].to_vec();
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * width + c];
            if f != 0.0 {
                let row = &mut self.t[i * width..(i + 1) * width];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
        for i in 0..self.m {
            let v = &mut self.t[i * width + self.cols];
            if *v < 0.0 && *v > -EPS_FEAS {
                *v = 0.0;
            }
        }
    }

    /// Textbook minimum ratio, ties to the smallest basic index (Bland).
    fn ratio_bland(&self, c: usize) -> Option<(usize, f64)> {
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let a = self.at(r, c);
            if a > EPS_PIVOT {
                let ratio = self.rhs(r).max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        leave
    }

    /// Harris two-pass ratio test: among rows whose ratio is within a small
    /// relaxation of the minimum, pivot on the largest entry.
    fn ratio_harris(&self, c: usize) -> Option<(usize, f64)> {
        let mut bound = f64::INFINITY;
        for r in 0..self.m {
            let a = self.at(r, c);
            if a > EPS_PIVOT {
                bound = bound.min((self.rhs(r).max(0.0) + EPS_HARRIS) / a);
            }
        }
        if bound == f64::INFINITY {
            return None;
        }
        let mut leave: Option<(usize, f64, f64)> = None;
        for r in 0..self.m {
            let a = self.at(r, c);
            if a > EPS_PIVOT {
                let ratio = self.rhs(r).max(0.0) / a;
                if ratio <= bound && leave.is_none_or(|(_, _, best)| a > best) {
                    leave = Some((r, ratio, a));
                }
            }
        }
        leave.map(|(r, ratio, _)| (r, ratio))
    }

    /// Rebuilds the constraint rows as B⁻¹A from the original data for the
    /// current basis, discarding accumulated rounding. Leaves the tableau
    /// untouched when the basis matrix is numerically singular.
    fn refactor(&mut self) -> bool {
        let (m, width) = (self.m, self.cols + 1);
        let mut b: Vec<f64> = (0..m).flat_map(|i| self.basis.iter().map(move |&c| (i, c))).map(|(i, c)| self.orig[i * width + c]).collect();
        let mut rows = self.orig.clone();
        for col in 0..m {
            let (piv, val) = (col..m).map(|i| (i, b[i * m + col].abs())).max_by(|x, y| x.1.total_cmp(&y.1)).expect("nonempty");
            if val < 1e-12 {
                return false;
            }
            if piv != col {
                for j in 0..m {
                    b.swap(piv * m + j, col * m + j);
                }
                for j in 0..width {
                    rows.swap(piv * width + j, col * width + j);
                }
            }
            let p = b[col * m + col];
            for i in 0..m {
                if i == col {
                    continue;
                }
                let f = b[i * m + col] / p;
                if f == 0.0 {
                    continue;
                }
                for j in col..m {
                    b[i * m + j] -= f * b[col * m + j];
                }
                for j in 0..width {
                    rows[i * width + j] -= f * rows[col * width + j];
                }
            }
        }
        // Row `col` now corresponds to basis position `col`, scaled by its pivot.
        for col in 0..m {
            let p = b[col * m + col];
            for j in 0..width {
                rows[col * width + j] /= p;
            }
        }
        for i in 0..m {
            let v = &mut rows[i * width + self.cols];
            if *v < 0.0 && *v > -EPS_FEAS {
                *v = 0.0;
            }
            for (k, &c) in self.basis.iter().enumerate() {
                rows[i * width + c] = if k == i { 1.0 } else { 0.0 };
            }
        }
        self.t[..m * width].copy_from_slice(&rows);
        let costs = std::mem::take(&mut self.costs);
        self.set_objective(&costs);
        true
    }

    /// Runs primal simplex over columns `< limit`, refactoring periodically
    /// and once more before accepting an optimum.
    fn optimize(&mut self, limit: usize) -> Result<(), LpError> {
        let max_iter = 50 * (self.m + self.cols) + 1000;
        let mut degenerate = 0usize;
        let mut since_refactor = 0usize;
        let mut verified = false;
        for _ in 0..max_iter {
            if since_refactor >= REFACTOR_EVERY {
                self.refactor();
                since_refactor = 0;
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -EPS_COST;
            for c in 0..limit {
                let rc = self.at(self.m, c);
                if rc < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(c) = enter else {
                if verified || since_refactor == 0 || !self.refactor() {
                    return Ok(());
                }
                verified = true;
                since_refactor = 0;
                continue;
            };
            verified = false;
            let leave = if bland { self.ratio_bland(c) } else { self.ratio_harris(c) };
            let Some((r, ratio)) = leave else {
                if since_refactor > 0 && self.refactor() {
                    since_refactor = 0;
                    continue;
                }
                return Err(LpError::Unbounded);
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
            since_refactor += 1;
        }
        Err(LpError::IterationLimit)
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let width = self.cols + 1;
        if self.art_start < self.cols {
            let mut phase1 = vec![0.0; width];
            phase1[self.art_start..self.cols].iter_mut().for_each(|c| *c = 1.0);
            self.set_objective(&phase1);
            self.optimize(self.cols)?;
            let infeasibility: f64 = (0..self.m).filter(|&r| self.basis[r] >= self.art_start).map(|r| self.rhs(r)).sum();
            let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if infeasibility > EPS_FEAS * scale {
                return Err(LpError::Infeasible);
            }
            // Drive zero-level artificials out of the basis where possible.
            for r in 0..self.m {
                if self.basis[r] >= self.art_start {
                    if let Some(c) = (0..self.art_start).find(|&c| self.at(r, c).abs() > 1e-9) {
                        self.pivot(r, c);
                    }
                }
            }
        }
        let mut costs = vec![0.0; width];
        costs[..lp.objective.len()].copy_from_slice(&lp.objective);
        for (j, nj) in self.neg_part.iter().enumerate() {
            if let Some(nj) = nj {
                costs[*nj] = -lp.objective[j];
            }
        }
        self.set_objective(&costs);
        self.optimize(self.art_start)?;

        let mut values = vec![0.0; self.cols];
        for r in 0..self.m {
            values[self.basis[r]] = self.rhs(r);
        }
        let x: Vec<f64> = (0..lp.objective.len()).map(|j| values[j] - self.neg_part[j].map_or(0.0, |nj| values[nj])).collect();
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -3.0);
        lp.set_cost(1, -5.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add_row(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add_row(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y, x + y = 3, x >= 1, y >= 0.5
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0);
        lp.set_cost(1, 2.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 3.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 1.0);
        lp.add_row(vec![(1, 1.0)], Relation::Ge, 0.5);
        let s = lp.solve().unwrap();
        assert!((s.objective - 3.5).abs() < 1e-9);
    }

    #[test]
    fn free_variable_goes_negative() {
        // min t, t >= x - 2, t >= -x, x in [0, 5] -> t = -1 at x = 1
        let mut lp = LinearProgram::new(2);
        lp.set_free(0);
        lp.set_cost(0, 1.0);
        lp.add_row(vec![(0, 1.0), (1, -1.0)], Relation::Ge, -2.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 0.0);
        lp.add_row(vec![(1, 1.0)], Relation::Le, 5.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 1.0).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 2.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);

        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add_row(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let s = lp.solve().unwrap();
        assert!(s.objective.abs() < 1e-12);
        assert!((s.x[1] - 1.0).abs() < 1e-12);
    }

    /// Minimum of c·x over x ≥ 0, Ax ≤ b by enumerating vertices of a 3-variable polytope.
    fn vertex_min(c: &[f64; 3], rows: &[([f64; 3], f64)]) -> Option<f64> {
        let mut planes: Vec<([f64; 3], f64)> = rows.to_vec();
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = -1.0;
            planes.push((e, 0.0));
        }
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let mut best: Option<f64> = None;
        for i in 0..planes.len() {
            for j in i + 1..planes.len() {
                for k in j + 1..planes.len() {
                    let a = [planes[i].0, planes[j].0, planes[k].0];
                    let b = [planes[i].1, planes[j].1, planes[k].1];
                    let d = det(a);
                    if d.abs() < 1e-9 {
                        continue;
                    }
                    let x: Vec<f64> = (0..3)
                        .map(|col| {
                            let mut m = a;
                            (0..3).for_each(|r| m[r][col] = b[r]);
                            det(m) / d
                        })
                        .collect();
                    let feasible = planes.iter().all(|(row, rhs)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-7);
                    if feasible {
                        let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                        best = Some(best.map_or(v, |b: f64| b.min(v)));
                    }
                }
            }
        }
        best
    }

    proptest::proptest! {
        #[test]
        fn matches_vertex_enumeration(
            c in proptest::array::uniform3(-3i32..=3),
            rows in proptest::collection::vec((proptest::array::uniform3(-2i32..=3), 0i32..=4), 1..6),
        ) {
            // A box row keeps every instance bounded; small integers make degeneracy common.
            let mut all: Vec<([f64; 3], f64)> = rows.iter().map(|(a, b)| (a.map(f64::from), f64::from(*b))).collect();
            all.push(([1.0, 1.0, 1.0], 5.0));
            let c = c.map(f64::from);
            let mut lp = LinearProgram::new(3);
            (0..3).for_each(|j| lp.set_cost(j, c[j]));
            for (a, b) in &all {
                lp.add_row((0..3).map(|j| (j, a[j])).collect(), Relation::Le, *b);
            }
            let expected = vertex_min(&c, &all).expect("origin is feasible");
            let got = lp.solve().unwrap();
            proptest::prop_assert!((got.objective - expected).abs() < 1e-7, "{} vs {}", got.objective, expected);
            proptest::prop_assert!(got.x.iter().all(|&v| v >= -1e-9));
            for (a, b) in &all {
                proptest::prop_assert!(a.iter().zip(&got.x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-7);
            }
        }
    }
}
