//! Independent random sampling: at each instant the observed k-set is drawn
//! from a fixed distribution P_S over the k-subsets, independently of the source.
//!
//! For a given P_S each ambiguity cell becomes a grouped rate-distortion problem
//! over pairs (A, x_A), grouped by A. The outer minimization over P_S runs a
//! coarse simplex grid followed by a projected Nelder-Mead polish.

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::CellProblem;
use crate::fixed::{aggregate_bounds, solve_cells, ThresholdAllocation};
use crate::lp::{LinearProgram, Relation};
use crate::model::{SourceModel, Subset};
use crate::partition::{cell_marginal, modified_distortion, reweighted_distortion, theta2_partition, Conditioning, DistortionTable};
use crate::rd::{RdError, RdOptions, RdPoint, RdSource};
use crate::{Setting, SolveError, TOL_FEAS};

/// Masses below this are treated as absent branches.
const MIN_BRANCH: f64 = 1e-12;
const GRID_STEPS: usize = 8;
const NM_MAX_EVALS: usize = 400;

/// P_S over the k-subsets, in lexicographic subset order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingDistribution {
    pub subsets: Vec<Subset>,
    pub probs: Vec<f64>,
}

impl SamplingDistribution {
    pub fn new(subsets: Vec<Subset>, probs: Vec<f64>) -> Result<Self, SolveError> {
        let sum: f64 = probs.iter().sum();
        if subsets.len() != probs.len() || probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SolveError::Rd(RdError::DimensionMismatch(format!(
                "sampling distribution needs {} nonnegative weights summing to 1",
                subsets.len()
            ))));
        }
        Ok(SamplingDistribution { subsets, probs })
    }

    pub fn point_mass(subsets: Vec<Subset>, at: usize) -> Self {
        let mut probs = vec![0.0; subsets.len()];
        probs[at] = 1.0;
        SamplingDistribution { subsets, probs }
    }

    fn support(&self) -> impl Iterator<Item = (usize, &Subset, f64)> {
        self.subsets.iter().zip(&self.probs).enumerate().filter(|(_, (_, &p))| p > MIN_BRANCH).map(|(i, (a, &p))| (i, a, p))
    }
}

/// The cell problem over the augmented alphabet {(A, x_A)} for the given P_S.
pub(crate) fn irs_cell(
    model: &SourceModel,
    ps: &SamplingDistribution,
    members: &[usize],
    prior: f64,
    opts: RdOptions,
) -> Result<CellProblem, RdError> {
    let cols = model.repro_size();
    let mut px = Vec::new();
    let mut group = Vec::new();
    let mut table = Vec::new();
    let mut member_data: Vec<Vec<f64>> = vec![Vec::new(); members.len()];
    let mut branches = Vec::new();
    for (g, (_, a, w)) in ps.support().enumerate() {
        branches.push(a.clone());
        let marg = cell_marginal(model, members, a);
        let d = modified_distortion(model, members, a);
        px.extend(marg.iter().map(|p| w * p));
        group.extend(std::iter::repeat_n(g, marg.len()));
        table.extend_from_slice(d.data());
        for (slot, &t) in member_data.iter_mut().zip(members) {
            slot.extend_from_slice(reweighted_distortion(model, t, a, &marg).data());
        }
    }
    let rows = px.len();
    let cond = Conditioning::Branches(branches);
    let table = DistortionTable::new(rows, cols, table, cond.clone());
    let member_tables = member_data.into_iter().map(|d| DistortionTable::new(rows, cols, d, cond.clone())).collect();
    CellProblem::new(members.to_vec(), prior, RdSource::grouped(px, group), table, member_tables, opts)
}

fn cells_for(model: &SourceModel, ps: &SamplingDistribution, opts: RdOptions) -> Result<Vec<CellProblem>, RdError> {
    let k = ps.subsets[0].len();
    let part = theta2_partition(model, k);
    part.cells.iter().zip(&part.induced_prior).map(|(m, &p)| irs_cell(model, ps, m, p, opts)).collect()
}

fn rate_ceiling(model: &SourceModel, ps: &SamplingDistribution) -> f64 {
    ps.support().map(|(_, a, _)| (model.subset_size(a) as f64).log2()).fold(0.0, f64::max)
}

/// Inner rate of one Θ2 cell under P_S.
pub fn rho_irs(
    model: &SourceModel,
    ps: &SamplingDistribution,
    members: &[usize],
    delta: f64,
    setting: Setting,
) -> Result<RdPoint, SolveError> {
    let prior = members.iter().map(|&t| model.prior()[t]).sum();
    let mut cell = irs_cell(model, ps, members, prior, RdOptions::default())?;
    Ok(cell.rho(delta, setting)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct IrsEvaluation {
    pub rate: f64,
    pub allocation: Option<ThresholdAllocation>,
    pub converged: bool,
}

/// Rate for a fixed P_S; `None` when delta is below what P_S can reach.
pub fn evaluate_irs(
    model: &SourceModel,
    ps: &SamplingDistribution,
    delta: f64,
    setting: Setting,
) -> Result<Option<IrsEvaluation>, SolveError> {
    let mut cells = cells_for(model, ps, RdOptions::default())?;
    let (lo, hi) = aggregate_bounds(&mut cells, setting)?;
    if delta < lo - TOL_FEAS {
        return Ok(None);
    }
    if delta >= hi - TOL_FEAS {
        return Ok(Some(IrsEvaluation { rate: 0.0, allocation: None, converged: true }));
    }
    let (rate, allocation, converged) = solve_cells(&mut cells, setting, delta, rate_ceiling(model, ps))?;
    Ok(Some(IrsEvaluation { rate, allocation, converged }))
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

/// (Δ_min, Δ_max) minimized over P_S.
pub fn delta_bounds_irs(model: &SourceModel, k: usize, setting: Setting) -> Result<(f64, f64), SolveError> {
    let subsets = model.k_subsets(k);
    let part = theta2_partition(model, k);
    let opts = RdOptions::default();
    // The zero-rate threshold does not depend on P_S; any point mass gives it.
    let mut cells = cells_for(model, &SamplingDistribution::point_mass(subsets.clone(), 0), opts)?;
    let (_, hi) = aggregate_bounds(&mut cells, setting)?;
    let lo = match setting {
        Setting::Bayes => {
            // Linear in P_S, so a vertex attains the minimum.
            let mut best = f64::INFINITY;
            for i in 0..subsets.len() {
                let mut cells = cells_for(model, &SamplingDistribution::point_mass(subsets.clone(), i), opts)?;
                best = best.min(aggregate_bounds(&mut cells, setting)?.0);
            }
            best
        }
        Setting::NonBayes => nonbayes_min_distortion(model, &subsets, &part.cells)?,
    };
    Ok((lo, hi))
}

/// min over P_S and per-cell channels of the worst member distortion.
///
/// With V = P_S(A)·W_A the problem is a linear program in (P_S, V, t).
fn nonbayes_min_distortion(model: &SourceModel, subsets: &[Subset], cells: &[Vec<usize>]) -> Result<f64, RdError> {
    let cols = model.repro_size();
    let n_sub = subsets.len();
    let mut lp = LinearProgram::new(n_sub + 1);
    let t = n_sub;
    lp.set_cost(t, 1.0);
    lp.add_row((0..n_sub).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);
    for members in cells {
        // Channel variables of this cell, per branch.
        let mut offsets = Vec::with_capacity(n_sub);
        for (i, a) in subsets.iter().enumerate() {
            let rows = model.subset_size(a);
            let start = lp.num_vars();
            for _ in 0..rows * cols {
                lp.add_var(0.0);
            }
            for x in 0..rows {
                let mut row: Vec<(usize, f64)> = (0..cols).map(|y| (start + x * cols + y, 1.0)).collect();
                row.push((i, -1.0));
                lp.add_row(row, Relation::Eq, 0.0);
            }
            offsets.push(start);
        }
        for &tau in members {
            let mut row = vec![(t, -1.0)];
            for (i, a) in subsets.iter().enumerate() {
                let marg = model.marginal(tau, a);
                let d = modified_distortion(model, &[tau], a);
                for (x, &px) in marg.iter().enumerate() {
                    for y in 0..cols {
                        let v = px * d.get(x, y);
                        if v != 0.0 {
                            row.push((offsets[i] + x * cols + y, v));
                        }
                    }
                }
            }
            lp.add_row(row, Relation::Le, 0.0);
        }
    }
    Ok(lp.solve()?.x[t])
}

// ---------------------------------------------------------------------------
// Outer search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct IrsSolution {
    pub setting: Setting,
    pub delta: f64,
    pub rate: f64,
    pub sampling: SamplingDistribution,
    pub allocation: Option<ThresholdAllocation>,
    pub converged: bool,
    /// Objective evaluations spent in the outer search.
    pub evaluations: usize,
}

fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(n, left - v, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Minimizes the rate over P_S.
pub fn usrdf_irs(model: &SourceModel, k: usize, delta: f64, setting: Setting) -> Result<IrsSolution, SolveError> {
    let subsets = model.k_subsets(k);
    if subsets.is_empty() {
        return Err(SolveError::Rd(RdError::DimensionMismatch(format!("no {k}-subsets of {} components", model.m()))));
    }
    let (lo, hi) = delta_bounds_irs(model, k, setting)?;
    if delta < lo - TOL_FEAS {
        return Err(SolveError::DeltaOutOfRange { delta, min: lo, max: hi });
    }
    let n = subsets.len();
    if delta >= hi - TOL_FEAS {
        return Ok(IrsSolution {
            setting,
            delta,
            rate: 0.0,
            sampling: SamplingDistribution::point_mass(subsets, 0),
            allocation: None,
            converged: true,
            evaluations: 0,
        });
    }

    let objective = |probs: &[f64]| -> Result<f64, SolveError> {
        let ps = SamplingDistribution { subsets: subsets.clone(), probs: probs.to_vec() };
        Ok(evaluate_irs(model, &ps, delta, setting)?.map_or(f64::INFINITY, |e| e.rate))
    };

    let grid = simplex_grid(n, GRID_STEPS);
    let values: Vec<f64> = grid.par_iter().map(|p| objective(p)).collect::<Result<_, _>>()?;
    let mut evaluations = grid.len();
    let (best_idx, _) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("grid is nonempty");
    let mut best = (grid[best_idx].clone(), values[best_idx]);

    if n > 1 && best.1.is_finite() && best.1 > 0.0 {
        let (p, v, used) = nelder_mead(&objective, &best.0, 1.0 / GRID_STEPS as f64)?;
        evaluations += used;
        if v < best.1 {
            best = (p, v);
        }
    }

    let sampling = SamplingDistribution { subsets, probs: best.0 };
    let eval = evaluate_irs(model, &sampling, delta, setting)?.ok_or(SolveError::DeltaOutOfRange { delta, min: lo, max: hi })?;
    Ok(IrsSolution { setting, delta, rate: eval.rate, sampling, allocation: eval.allocation, converged: eval.converged, evaluations })
}

/// Nelder-Mead over the simplex, parameterized by the full weight vector and
/// projected back after every move.
fn nelder_mead(
    f: &(dyn Fn(&[f64]) -> Result<f64, SolveError> + Sync),
    start: &[f64],
    scale: f64,
) -> Result<(Vec<f64>, f64, usize), SolveError> {
    let n = start.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |p: &[f64]| -> Result<f64, SolveError> {
        evals.set(evals.get() + 1);
        f(p)
    };
    // Vertices: the start and one step toward each coordinate direction (n - 1 free dims).
    let mut verts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    verts.push((start.to_vec(), eval(start)?));
    for i in 0..n - 1 {
        let mut p = start.to_vec();
        let target = if p[i] + scale <= 1.0 { scale } else { -scale };
        p[i] += target;
        p[n - 1] -= target;
        let p = project_to_simplex(&p);
        let v = eval(&p)?;
        verts.push((p, v));
    }
    while evals.get() < NM_MAX_EVALS {
        verts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = verts.iter().map(|(p, _)| l1(p, &verts[0].0)).fold(0.0, f64::max);
        let fspread = verts.last().unwrap().1 - verts[0].1;
        if spread < 1e-7 || (fspread.is_finite() && fspread < 1e-11 && spread < 1e-4) {
            break;
        }
        let worst = verts.len() - 1;
        let centroid: Vec<f64> = (0..n).map(|j| verts[..worst].iter().map(|(p, _)| p[j]).sum::<f64>() / worst as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            project_to_simplex(&(0..n).map(|j| centroid[j] + t * (verts[worst].0[j] - centroid[j])).collect::<Vec<_>>())
        };
        let xr = along(-1.0);
        let fr = eval(&xr)?;
        if fr < verts[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe)?;
            verts[worst] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < verts[worst - 1].1 {
            verts[worst] = (xr, fr);
        } else {
            let xc = along(0.5);
            let fc = eval(&xc)?;
            if fc < verts[worst].1 {
                verts[worst] = (xc, fc);
            } else {
                let best = verts[0].0.clone();
                for v in verts.iter_mut().skip(1) {
                    let p: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let fv = eval(&p)?;
                    *v = (p, fv);
                }
            }
        }
    }
    verts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (p, v) = verts.swap_remove(0);
    Ok((p, v, evals.get()))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
