//! Rate-distortion with several linear distortion constraints on one channel.
//!
//! The problem min I(W) s.t. E_j[d_j] ≤ δ_j is convex in W. It is solved by
//! column generation: channels that minimize the Lagrangian for given
//! multipliers are collected, a cutting-plane model of the dual picks the next
//! multipliers, and the best convex mixture of collected channels gives a
//! feasible primal point. The run stops when the primal value and the dual
//! bound agree.

use serde::Serialize;

use super::blahut::blahut_arimoto;
use super::{conditional_mutual_information, RdError, RdOptions, RdPoint, RdSource, SingleSolver, TestChannel};
use crate::lp::{LinearProgram, Relation};
use crate::DistortionTable;

/// E[table(X, Y)] ≤ level.
#[derive(Debug, Clone, Serialize)]
pub struct Constraint {
    pub table: DistortionTable,
    pub level: f64,
}

impl Constraint {
    pub fn new(table: DistortionTable, level: f64) -> Self {
        Constraint { table, level }
    }
}

struct Column {
    channel: TestChannel,
    rate: f64,
    dist: Vec<f64>,
}

fn column(src: &RdSource, constraints: &[Constraint], channel: TestChannel) -> Column {
    let rate = conditional_mutual_information(src, &channel).unwrap_or(0.0);
    let dist = constraints.iter().map(|c| channel.expected(src.px(), &c.table)).collect();
    Column { channel, rate, dist }
}

fn max_excess(dist: &[f64], constraints: &[Constraint]) -> f64 {
    dist.iter().zip(constraints).map(|(d, c)| d - c.level).fold(f64::NEG_INFINITY, f64::max)
}

/// Minimal I(X ∧ Y | G) over one channel meeting every constraint.
pub fn rd_multi(src: &RdSource, constraints: &[Constraint]) -> Result<RdPoint, RdError> {
    rd_multi_with(src, constraints, &RdOptions::default())
}

pub fn rd_multi_with(src: &RdSource, constraints: &[Constraint], opts: &RdOptions) -> Result<RdPoint, RdError> {
    let Some(first) = constraints.first() else {
        return Err(RdError::DimensionMismatch("at least one constraint is required".into()));
    };
    let cols = first.table.cols();
    for c in constraints {
        if c.table.rows() != src.len() || c.table.cols() != cols {
            return Err(RdError::DimensionMismatch(format!(
                "constraint table is {}x{}, expected {}x{cols}",
                c.table.rows(),
                c.table.cols(),
                src.len()
            )));
        }
    }
    let delta = constraints.iter().map(|c| c.level).fold(f64::NEG_INFINITY, f64::max);
    let finish = |col: Column, converged: bool, iterations: usize, slope: Vec<f64>| RdPoint {
        delta,
        rate: col.rate,
        channel: col.channel,
        converged,
        iterations,
        slope,
        achieved: col.dist,
    };

    // Zero rate: a per-group output pmf that meets every constraint.
    let (excess, zero) = zero_rate_lp(src, constraints)?;
    if excess <= opts.tol_feas {
        let mut col = column(src, constraints, zero);
        col.rate = 0.0;
        return Ok(finish(col, true, 0, vec![0.0; constraints.len()]));
    }

    let (excess, feasible) = feasibility_lp(src, constraints)?;
    if excess > opts.tol_feas {
        return Err(RdError::Infeasible { excess });
    }
    let mut columns = vec![column(src, constraints, feasible)];

    // If relaxing to one constraint already satisfies the rest, that is optimal.
    let mut lower = 0.0f64;
    let mut shortcut: Option<(RdPoint, f64)> = None;
    let mut slope_cap = 1.0f64;
    for c in constraints {
        let mut solver = SingleSolver::new(src.clone(), c.table.clone(), *opts)?;
        slope_cap = slope_cap.max(solver.max_slope());
        columns.push(column(src, constraints, solver.zero_rate_channel()));
        let Ok(point) = solver.at_distortion(c.level) else { continue };
        lower = lower.max(point.rate);
        let col = column(src, constraints, point.channel.clone());
        if max_excess(&col.dist, constraints) <= opts.tol_feas && shortcut.as_ref().is_none_or(|(p, _)| point.rate > p.rate) {
            shortcut = Some((point.clone(), point.rate));
        }
        columns.push(col);
    }
    if let Some((point, _)) = shortcut {
        let col = column(src, constraints, point.channel.clone());
        return Ok(RdPoint { delta, rate: point.rate, achieved: col.dist, ..point });
    }

    let lambda_max = 2.0 * slope_cap;
    let tables: Vec<&DistortionTable> = constraints.iter().map(|c| &c.table).collect();
    let mut best: Option<(Column, Vec<f64>)> = None;
    let mut best_lambda = vec![0.0; constraints.len()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.multi_max_iter {
        iterations += 1;
        let (_, lambda) = dual_master(&columns, constraints, lambda_max)?;

        let combined = DistortionTable::combine(&tables, &lambda);
        let out = blahut_arimoto(src, &combined, 1.0, None, opts, false);
        let kernel = super::blahut::Kernel::new(&combined, 1.0);
        let priced = column(src, constraints, kernel.channel(src, &out.q));
        let lagrangian = priced.rate + priced.dist.iter().zip(constraints).zip(&lambda).map(|((d, c), l)| l * (d - c.level)).sum::<f64>();
        if lagrangian - out.gap > lower {
            lower = lagrangian - out.gap;
            best_lambda = lambda.clone();
        }
        columns.push(priced);

        let weights = primal_master(&columns, constraints)?;
        let chosen: Vec<(&TestChannel, f64)> =
            columns.iter().zip(&weights).filter(|(_, &w)| w > 0.0).map(|(c, &w)| (&c.channel, w)).collect();
        let (chs, ws): (Vec<&TestChannel>, Vec<f64>) = chosen.into_iter().unzip();
        let mix = column(src, constraints, TestChannel::mix(&chs, &ws));
        if best.as_ref().is_none_or(|(b, _)| mix.rate < b.rate) {
            best = Some((mix, lambda));
        }
        let upper = best.as_ref().map_or(f64::INFINITY, |(b, _)| b.rate);
        if upper - lower <= opts.multi_tol {
            converged = true;
            break;
        }
    }
    let (col, _) = best.expect("at least one master solve");
    Ok(finish(col, converged, iterations, best_lambda))
}

fn zero_level(tables: &[&DistortionTable]) -> Vec<Constraint> {
    tables.iter().map(|t| Constraint::new((*t).clone(), 0.0)).collect()
}

/// min over channels of max_j E[table_j], with a minimizing channel.
pub fn min_worst_distortion(src: &RdSource, tables: &[&DistortionTable]) -> Result<(f64, TestChannel), RdError> {
    feasibility_lp(src, &zero_level(tables))
}

/// min over rate-zero channels (per-group output pmfs) of max_j E[table_j].
pub fn min_worst_zero_rate_distortion(src: &RdSource, tables: &[&DistortionTable]) -> Result<(f64, TestChannel), RdError> {
    zero_rate_lp(src, &zero_level(tables))
}

/// min t s.t. some per-group output pmf has E_j[d] - δ_j ≤ t for all j.
fn zero_rate_lp(src: &RdSource, constraints: &[Constraint]) -> Result<(f64, TestChannel), RdError> {
    let cols = constraints[0].table.cols();
    let groups = src.groups();
    let n = groups * cols;
    let mut lp = LinearProgram::new(n + 1);
    let t = n;
    lp.set_free(t);
    lp.set_cost(t, 1.0);
    for g in 0..groups {
        lp.add_row((0..cols).map(|y| (g * cols + y, 1.0)).collect(), Relation::Eq, 1.0);
    }
    for c in constraints {
        let mut coeffs = vec![0.0; n];
        for x in 0..src.len() {
            let g = src.group_of(x);
            for y in 0..cols {
                coeffs[g * cols + y] += src.px()[x] * c.table.get(x, y);
            }
        }
        let mut row: Vec<(usize, f64)> = coeffs.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect();
        row.push((t, -1.0));
        lp.add_row(row, Relation::Le, c.level);
    }
    let sol = lp.solve()?;
    let mut data = Vec::with_capacity(src.len() * cols);
    for x in 0..src.len() {
        let g = src.group_of(x);
        data.extend(sol.x[g * cols..(g + 1) * cols].iter().map(|v| v.max(0.0)));
    }
    Ok((sol.x[t], TestChannel::new(src.len(), cols, data)))
}

/// min t s.t. some channel has E_j[d] - δ_j ≤ t for all j.
fn feasibility_lp(src: &RdSource, constraints: &[Constraint]) -> Result<(f64, TestChannel), RdError> {
    let cols = constraints[0].table.cols();
    let rows = src.len();
    let n = rows * cols;
    let mut lp = LinearProgram::new(n + 1);
    let t = n;
    lp.set_free(t);
    lp.set_cost(t, 1.0);
    for x in 0..rows {
        lp.add_row((0..cols).map(|y| (x * cols + y, 1.0)).collect(), Relation::Eq, 1.0);
    }
    for c in constraints {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(n + 1);
        for x in 0..rows {
            for y in 0..cols {
                let v = src.px()[x] * c.table.get(x, y);
                if v != 0.0 {
                    row.push((x * cols + y, v));
                }
            }
        }
        row.push((t, -1.0));
        lp.add_row(row, Relation::Le, c.level);
    }
    let sol = lp.solve()?;
    let data = sol.x[..n].iter().map(|v| v.max(0.0)).collect();
    Ok((sol.x[t], TestChannel::new(rows, cols, data)))
}

/// max z s.t. z ≤ I_k + Σ_j λ_j (D_jk - δ_j) for every column, 0 ≤ λ ≤ λ_max.
fn dual_master(columns: &[Column], constraints: &[Constraint], lambda_max: f64) -> Result<(f64, Vec<f64>), RdError> {
    let j = constraints.len();
    let mut lp = LinearProgram::new(j + 1);
    let z = j;
    lp.set_free(z);
    lp.set_cost(z, -1.0);
    for col in columns {
        let mut row: Vec<(usize, f64)> = col.dist.iter().zip(constraints).enumerate().map(|(i, (d, c))| (i, -(d - c.level))).collect();
        row.push((z, 1.0));
        lp.add_row(row, Relation::Le, col.rate);
    }
    for i in 0..j {
        lp.add_row(vec![(i, 1.0)], Relation::Le, lambda_max);
    }
    let sol = lp.solve()?;
    Ok((sol.x[z], sol.x[..j].iter().map(|v| v.max(0.0)).collect()))
}

/// Convex weights on columns minimizing Σ ν_k I_k subject to the averaged constraints.
fn primal_master(columns: &[Column], constraints: &[Constraint]) -> Result<Vec<f64>, RdError> {
    let k = columns.len();
    let mut lp = LinearProgram::new(k);
    for (i, col) in columns.iter().enumerate() {
        lp.set_cost(i, col.rate);
    }
    lp.add_row((0..k).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);
    for (j, c) in constraints.iter().enumerate() {
        lp.add_row(columns.iter().enumerate().map(|(i, col)| (i, col.dist[j])).collect(), Relation::Le, c.level);
    }
    Ok(lp.solve()?.x.iter().map(|v| v.max(0.0)).collect())
}
