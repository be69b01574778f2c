//! Alternating minimization at a fixed slope.
//!
//! For slope s the iteration minimizes, over per-group output pmfs q_g,
//!
//! ```text
//! F(q) = -Σ_x p(x) log2 Σ_y q_g(y) 2^{-s d(x,y)}
//! ```
//!
//! whose minimum is min_W I(X ∧ Y | G) + s E[d]. Exponents are shifted by the
//! row minimum of d so that the largest factor per row is 1.

use serde::Serialize;

use super::{RdOptions, RdSource, TestChannel};
use crate::DistortionTable;

#[derive(Debug, Clone, Serialize)]
pub struct BaOutcome {
    pub slope: f64,
    /// I(X ∧ Y | G) of the returned channel.
    pub rate: f64,
    /// E[d(X, Y)] of the returned channel.
    pub distortion: f64,
    /// Upper bound on F(q) - min F at termination (bits).
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-group output pmfs, group-major.
    pub q: Vec<f64>,
    /// F per iteration, when requested.
    pub objective_trace: Option<Vec<f64>>,
}

pub(crate) struct Kernel {
    /// 2^{-s (d(x,y) - min_y d(x,y))}, row-major.
    pub factor: Vec<f64>,
    pub row_min: Vec<f64>,
    pub cols: usize,
}

impl Kernel {
    pub fn new(table: &DistortionTable, slope: f64) -> Self {
        let cols = table.cols();
        let mut factor = Vec::with_capacity(table.rows() * cols);
        let mut row_min = Vec::with_capacity(table.rows());
        for x in 0..table.rows() {
            let row = table.row(x);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            row_min.push(lo);
            factor.extend(row.iter().map(|d| (-slope * (d - lo)).exp2()));
        }
        Kernel { factor, row_min, cols }
    }

    fn row(&self, x: usize) -> &[f64] {
        &self.factor[x * self.cols..(x + 1) * self.cols]
    }

    /// W(y|x) ∝ q_g(y) factor(x, y).
    pub fn channel(&self, src: &RdSource, q: &[f64]) -> TestChannel {
        let rows = src.len();
        let mut data = Vec::with_capacity(rows * self.cols);
        for x in 0..rows {
            let g = src.group_of(x);
            let qg = &q[g * self.cols..(g + 1) * self.cols];
            let start = data.len();
            data.extend(self.row(x).iter().zip(qg).map(|(f, qy)| f * qy));
            let z: f64 = data[start..].iter().sum();
            if z > 0.0 {
                data[start..].iter_mut().for_each(|w| *w /= z);
            } else {
                // Only reachable after underflow; fall back to the row minimizer.
                let best = (0..self.cols).max_by(|&a, &b| self.row(x)[a].total_cmp(&self.row(x)[b])).unwrap_or(0);
                data[start + best] = 1.0;
            }
        }
        TestChannel::new(rows, self.cols, data)
    }
}

/// Runs the alternating minimization at `slope` (bits per distortion unit).
///
/// `init_q` seeds the per-group output pmfs; uniform otherwise. Letters are never
/// removed from the support.
pub fn blahut_arimoto(
    src: &RdSource,
    table: &DistortionTable,
    slope: f64,
    init_q: Option<&[f64]>,
    opts: &RdOptions,
    trace: bool,
) -> BaOutcome {
    let cols = table.cols();
    let rows = src.len();
    let groups = src.groups();
    let kernel = Kernel::new(table, slope);
    let px = src.px();
    let mass = src.group_mass();
    let mut q = match init_q {
        Some(q0) => q0.to_vec(),
        None => vec![1.0 / cols as f64; groups * cols],
    };
    let mut c = vec![0.0; groups * cols];
    let mut z = vec![0.0; rows];
    let mut objective_trace = trace.then(Vec::new);
    let mut last_f = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.ba_max_iter {
        iterations += 1;
        c.iter_mut().for_each(|v| *v = 0.0);
        let mut f = 0.0;
        for x in 0..rows {
            let g = src.group_of(x);
            let qg = &q[g * cols..(g + 1) * cols];
            let fx = kernel.row(x);
            let zx: f64 = fx.iter().zip(qg).map(|(a, b)| a * b).sum::<f64>().max(f64::MIN_POSITIVE);
            z[x] = zx;
            if px[x] > 0.0 {
                f -= px[x] * zx.log2();
                let w = px[x] / (mass[g] * zx);
                for (cy, fy) in c[g * cols..(g + 1) * cols].iter_mut().zip(fx) {
                    *cy += w * fy;
                }
            }
        }
        debug_assert!(f <= last_f + 1e-10 * (1.0 + last_f.abs()), "alternating minimization objective increased: {last_f} -> {f}");
        last_f = f;
        if let Some(t) = objective_trace.as_mut() {
            t.push(f + slope * dot(px, &kernel.row_min));
        }

        gap = (0..groups)
            .filter(|&g| mass[g] > 0.0)
            .map(|g| mass[g] * c[g * cols..(g + 1) * cols].iter().copied().fold(f64::MIN_POSITIVE, f64::max).log2())
            .sum::<f64>()
            .max(0.0);
        if gap < opts.ba_tol {
            converged = true;
            break;
        }
        for g in 0..groups {
            if mass[g] <= 0.0 {
                continue;
            }
            let qg = &mut q[g * cols..(g + 1) * cols];
            for (qy, cy) in qg.iter_mut().zip(&c[g * cols..(g + 1) * cols]) {
                *qy *= cy;
            }
            let s: f64 = qg.iter().sum();
            qg.iter_mut().for_each(|v| *v /= s);
        }
    }

    let channel = kernel.channel(src, &q);
    let rate = super::conditional_mutual_information(src, &channel).unwrap_or(0.0);
    let distortion = channel.expected(px, table);
    BaOutcome { slope, rate, distortion, gap, iterations, converged, q, objective_trace }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
