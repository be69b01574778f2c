//! Fixed-set sampling: the same k components are observed at every instant.

use serde::Serialize;

use crate::cell::{equalize, CellProblem};
use crate::model::{SourceModel, Subset};
use crate::partition::{cell_marginal, modified_distortion, reweighted_distortion, theta1_partition, AmbiguityPartition};
use crate::rd::{RdError, RdOptions, RdPoint, RdSource};
use crate::{Setting, SolveError, TOL_FEAS};

#[derive(Debug, Clone, Serialize)]
pub struct CellThreshold {
    pub members: Vec<usize>,
    pub prior: f64,
    /// Distortion budget assigned to the cell.
    pub delta: f64,
    pub min_distortion: f64,
    /// Inner rate at the budget.
    pub rate: f64,
}

/// Per-cell budgets whose prior average meets the target, with the resulting max rate.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdAllocation {
    pub cells: Vec<CellThreshold>,
    pub rate: f64,
}

impl ThresholdAllocation {
    pub fn average_budget(&self) -> f64 {
        self.cells.iter().map(|c| c.prior * c.delta).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FsSolution {
    pub subset: Subset,
    pub setting: Setting,
    pub delta: f64,
    pub rate: f64,
    /// Bayesian setting only.
    pub allocation: Option<ThresholdAllocation>,
    pub converged: bool,
}

/// Inner problem of one cell for the observed set `a`.
pub(crate) fn fs_cell(model: &SourceModel, a: &Subset, members: &[usize], prior: f64, opts: RdOptions) -> Result<CellProblem, RdError> {
    let px = cell_marginal(model, members, a);
    let table = modified_distortion(model, members, a);
    let member_tables = members.iter().map(|&t| reweighted_distortion(model, t, a, &px)).collect();
    CellProblem::new(members.to_vec(), prior, RdSource::new(px), table, member_tables, opts)
}

/// Combines per-cell bounds: prior-weighted in the Bayesian setting, worst cell otherwise.
pub(crate) fn aggregate_bounds(cells: &mut [CellProblem], setting: Setting) -> Result<(f64, f64), RdError> {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for c in cells.iter_mut() {
        let (l, h) = c.bounds(setting)?;
        match setting {
            Setting::Bayes => {
                lo += c.prior * l;
                hi += c.prior * h;
            }
            Setting::NonBayes => {
                lo = lo.max(l);
                hi = hi.max(h);
            }
        }
    }
    Ok((lo, hi))
}

/// Rate at `delta` across cells: equalized budgets (Bayesian) or the worst cell.
pub(crate) fn solve_cells(
    cells: &mut [CellProblem],
    setting: Setting,
    delta: f64,
    r_hi: f64,
) -> Result<(f64, Option<ThresholdAllocation>, bool), RdError> {
    match setting {
        Setting::Bayes => {
            let eq = equalize(cells, delta, r_hi);
            let mut thresholds = Vec::with_capacity(cells.len());
            let mut converged = true;
            for (c, &budget) in cells.iter_mut().zip(&eq.budgets) {
                let (d_min, _) = c.bounds(Setting::Bayes)?;
                let point = c.rho(budget.max(d_min), Setting::Bayes)?;
                converged &= point.converged;
                thresholds.push(CellThreshold {
                    members: c.members.clone(),
                    prior: c.prior,
                    delta: budget,
                    min_distortion: d_min,
                    rate: point.rate,
                });
            }
            Ok((eq.rate, Some(ThresholdAllocation { cells: thresholds, rate: eq.rate }), converged))
        }
        Setting::NonBayes => {
            let mut rate = 0.0f64;
            let mut converged = true;
            for c in cells.iter_mut() {
                let p = c.rho(delta, Setting::NonBayes)?;
                converged &= p.converged;
                rate = rate.max(p.rate);
            }
            Ok((rate, None, converged))
        }
    }
}

/// Reusable solver for one observed set and setting; caches inner curves across Δ.
#[derive(Debug, Clone)]
pub struct FixedSetSolver {
    subset: Subset,
    setting: Setting,
    partition: AmbiguityPartition,
    cells: Vec<CellProblem>,
    bounds: (f64, f64),
    r_hi: f64,
}

impl FixedSetSolver {
    pub fn new(model: &SourceModel, subset: &Subset, setting: Setting) -> Result<Self, SolveError> {
        Self::with_options(model, subset, setting, RdOptions::default())
    }

    pub fn with_options(model: &SourceModel, subset: &Subset, setting: Setting, opts: RdOptions) -> Result<Self, SolveError> {
        let partition = theta1_partition(model, subset);
        let mut cells = partition
            .cells
            .iter()
            .zip(&partition.induced_prior)
            .map(|(members, &prior)| fs_cell(model, subset, members, prior, opts))
            .collect::<Result<Vec<_>, _>>()?;
        let bounds = aggregate_bounds(&mut cells, setting)?;
        let r_hi = (model.subset_size(subset) as f64).log2();
        Ok(FixedSetSolver { subset: subset.clone(), setting, partition, cells, bounds, r_hi })
    }

    pub fn partition(&self) -> &AmbiguityPartition {
        &self.partition
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn solve(&mut self, delta: f64) -> Result<FsSolution, SolveError> {
        let (lo, hi) = self.bounds;
        if delta < lo - TOL_FEAS {
            return Err(SolveError::DeltaOutOfRange { delta, min: lo, max: hi });
        }
        let (rate, allocation, converged) =
            if delta >= hi - TOL_FEAS { (0.0, None, true) } else { solve_cells(&mut self.cells, self.setting, delta, self.r_hi)? };
        Ok(FsSolution { subset: self.subset.clone(), setting: self.setting, delta, rate, allocation, converged })
    }
}

/// Inner rate of one cell (any member set) observed through `a`.
pub fn rho_fs(model: &SourceModel, a: &Subset, members: &[usize], delta: f64, setting: Setting) -> Result<RdPoint, SolveError> {
    let prior = members.iter().map(|&t| model.prior()[t]).sum();
    let mut cell = fs_cell(model, a, members, prior, RdOptions::default())?;
    Ok(cell.rho(delta, setting)?)
}

pub fn usrdf_fs(model: &SourceModel, a: &Subset, delta: f64, setting: Setting) -> Result<FsSolution, SolveError> {
    FixedSetSolver::new(model, a, setting)?.solve(delta)
}

pub fn delta_bounds_fs(model: &SourceModel, a: &Subset, setting: Setting) -> Result<(f64, f64), SolveError> {
    Ok(FixedSetSolver::new(model, a, setting)?.bounds())
}

/// The k-subset with the least rate at `delta`; earlier subsets win ties.
pub fn best_fixed_set(model: &SourceModel, k: usize, delta: f64, setting: Setting) -> Result<(Subset, f64), SolveError> {
    let mut best: Option<(Subset, f64)> = None;
    for a in model.k_subsets(k) {
        match usrdf_fs(model, &a, delta, setting) {
            Ok(sol) => {
                if best.as_ref().is_none_or(|(_, r)| sol.rate < r - 1e-9) {
                    best = Some((a, sol.rate));
                }
            }
            Err(SolveError::DeltaOutOfRange { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(SolveError::NoFeasibleSet { delta })
}
