//! One ambiguity cell's inner rate-distortion problem.
//!
//! A cell bundles its conditioning source, the prior-mixed distortion table used
//! in the Bayesian setting, and one reweighted table per member parameter for the
//! worst-case setting. Fixed-set and independent-random samplers differ only in
//! how the source and tables are assembled.

use crate::rd::{rd_multi_with, Constraint, RdError, RdOptions, RdPoint, RdSource, SingleSolver};
use crate::{DistortionTable, Setting};

#[derive(Debug, Clone)]
pub struct CellProblem {
    /// Member parameters, ascending.
    pub members: Vec<usize>,
    /// Prior mass of the cell.
    pub prior: f64,
    solver: SingleSolver,
    member_tables: Vec<DistortionTable>,
    opts: RdOptions,
    nonbayes_bounds: Option<(f64, f64)>,
}

impl CellProblem {
    pub fn new(
        members: Vec<usize>,
        prior: f64,
        src: RdSource,
        table: DistortionTable,
        member_tables: Vec<DistortionTable>,
        opts: RdOptions,
    ) -> Result<Self, RdError> {
        let solver = SingleSolver::new(src, table, opts)?;
        Ok(CellProblem { members, prior, solver, member_tables, opts, nonbayes_bounds: None })
    }

    pub fn source(&self) -> &RdSource {
        self.solver.source()
    }

    pub fn solver(&mut self) -> &mut SingleSolver {
        &mut self.solver
    }

    pub fn member_tables(&self) -> &[DistortionTable] {
        &self.member_tables
    }

    fn constraints(&self, delta: f64) -> Vec<Constraint> {
        self.member_tables.iter().map(|t| Constraint::new(t.clone(), delta)).collect()
    }

    /// (Δ_min, Δ_max) of this cell in the given setting.
    pub fn bounds(&mut self, setting: Setting) -> Result<(f64, f64), RdError> {
        match setting {
            Setting::Bayes => Ok(self.solver.bounds()),
            Setting::NonBayes => {
                if let Some(b) = self.nonbayes_bounds {
                    return Ok(b);
                }
                let tables: Vec<&DistortionTable> = self.member_tables.iter().collect();
                let lo = crate::rd::min_worst_distortion(self.solver.source(), &tables)?.0;
                let hi = crate::rd::min_worst_zero_rate_distortion(self.solver.source(), &tables)?.0;
                self.nonbayes_bounds = Some((lo, hi));
                Ok((lo, hi))
            }
        }
    }

    /// Inner minimal rate at `delta`.
    pub fn rho(&mut self, delta: f64, setting: Setting) -> Result<RdPoint, RdError> {
        match setting {
            Setting::Bayes => self.solver.at_distortion(delta),
            Setting::NonBayes => {
                let (lo, _) = self.bounds(setting)?;
                if delta < lo - self.opts.tol_feas {
                    return Err(RdError::InfeasibleDelta { delta, d_min: lo });
                }
                rd_multi_with(self.solver.source(), &self.constraints(delta), &self.opts)
            }
        }
    }
}

/// Result of the Bayesian common-rate search over cells.
#[derive(Debug, Clone)]
pub struct Equalized {
    pub rate: f64,
    /// Per-cell distortion budgets.
    pub budgets: Vec<f64>,
}

/// min over budgets with Σ prior·budget ≤ delta of the max per-cell rate.
///
/// Bisects on the common rate level r in [0, r_hi]: each cell takes the least
/// distortion its curve allows at rate r (never below its own minimum), and r
/// is feasible when the prior-weighted budgets fit in `delta`.
pub fn equalize(cells: &mut [CellProblem], delta: f64, r_hi: f64) -> Equalized {
    let mut lo = 0.0;
    let mut hi = r_hi;
    let budgets_at = |cells: &mut [CellProblem], r: f64| -> Vec<f64> { cells.iter_mut().map(|c| c.solver.at_rate(r)).collect() };
    let spend = |cells: &[CellProblem], b: &[f64]| -> f64 { cells.iter().zip(b).map(|(c, d)| c.prior * d).sum() };
    let zero = budgets_at(cells, 0.0);
    if spend(cells, &zero) <= delta {
        return Equalized { rate: 0.0, budgets: zero };
    }
    let mut best = budgets_at(cells, hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let b = budgets_at(cells, mid);
        if spend(cells, &b) <= delta {
            hi = mid;
            best = b;
        } else {
            lo = mid;
        }
    }
    Equalized { rate: hi, budgets: best }
}
