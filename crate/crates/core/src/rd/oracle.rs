//! Exhaustive search over channels with rows on a 1/grid_q lattice.
//!
//! Deliberately shares no code with the iterative solvers beyond the data types.

use super::{Constraint, RdError, RdSource};

const MAX_ROWS: usize = 4;
const MAX_COLS: usize = 4;
const MAX_GRID: usize = 64;
const MAX_CHANNELS: f64 = (1u64 << 27) as f64;

/// All ways to write `q` as an ordered sum of `parts` nonnegative integers.
fn compositions(q: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![q]];
    }
    let mut out = Vec::new();
    for first in 0..=q {
        for mut rest in compositions(q - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least I(X ∧ Y | G) over lattice channels meeting every constraint.
///
/// Never below the true optimum; within O(1/grid_q) of it on these sizes.
pub fn rd_oracle(src: &RdSource, constraints: &[Constraint], grid_q: usize) -> Result<f64, RdError> {
    let Some(first) = constraints.first() else {
        return Err(RdError::DimensionMismatch("at least one constraint is required".into()));
    };
    let rows = src.len();
    let cols = first.table.cols();
    if rows > MAX_ROWS || cols > MAX_COLS || grid_q == 0 || grid_q > MAX_GRID {
        return Err(RdError::TooLarge(format!("{rows}x{cols} channel on a 1/{grid_q} lattice")));
    }
    let per_row = binomial(grid_q + cols - 1, cols - 1);
    if per_row.powi(rows as i32) > MAX_CHANNELS {
        return Err(RdError::TooLarge(format!("{} channels", per_row.powi(rows as i32))));
    }
    if constraints.iter().any(|c| c.table.rows() != rows || c.table.cols() != cols) {
        return Err(RdError::DimensionMismatch("constraint tables disagree in shape".into()));
    }

    let options: Vec<Vec<f64>> =
        compositions(grid_q, cols).into_iter().map(|c| c.into_iter().map(|v| v as f64 / grid_q as f64).collect()).collect();
    let px = src.px();
    // Per-row contribution of each option to each constraint.
    let contrib: Vec<Vec<Vec<f64>>> = (0..rows)
        .map(|x| {
            options
                .iter()
                .map(|w| {
                    constraints.iter().map(|c| px[x] * w.iter().enumerate().map(|(y, wy)| wy * c.table.get(x, y)).sum::<f64>()).collect()
                })
                .collect()
        })
        .collect();

    let groups = src.groups();
    let mut mass = vec![0.0; groups];
    for x in 0..rows {
        mass[src.group_of(x)] += px[x];
    }

    let mut best = f64::INFINITY;
    let mut pick = vec![0usize; rows];
    loop {
        let feasible = constraints.iter().enumerate().all(|(j, c)| {
            let d: f64 = (0..rows).map(|x| contrib[x][pick[x]][j]).sum();
            d <= c.level + 1e-12
        });
        if feasible {
            let mut out = vec![0.0; groups * cols];
            for x in 0..rows {
                let g = src.group_of(x);
                for (y, w) in options[pick[x]].iter().enumerate() {
                    out[g * cols + y] += px[x] * w / mass[g];
                }
            }
            let mut info = 0.0;
            for x in 0..rows {
                let g = src.group_of(x);
                for (y, &w) in options[pick[x]].iter().enumerate() {
                    if w > 0.0 && px[x] > 0.0 {
                        info += px[x] * w * (w / out[g * cols + y]).log2();
                    }
                }
            }
            best = best.min(info.max(0.0));
        }
        // Odometer step.
        let mut i = 0;
        while i < rows {
            pick[i] += 1;
            if pick[i] < options.len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
        if i == rows {
            break;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(RdError::Infeasible { excess: f64::NAN })
    }
}
