//! Finite-alphabet rate-distortion engines.
//!
//! Sources may be *grouped*: each conditioning symbol carries a group label that
//! is known to both ends, and rates are mutual informations conditional on the
//! group. An ungrouped source is the one-group special case.

mod blahut;
mod multi;
mod oracle;
mod single;

use serde::Serialize;
use thiserror::Error;

use crate::lp::LpError;

pub use blahut::{blahut_arimoto, BaOutcome};
pub use multi::{min_worst_distortion, min_worst_zero_rate_distortion, rd_multi, rd_multi_with, Constraint};
pub use oracle::rd_oracle;
pub use single::{rd_single, SingleSolver};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdError {
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("InfeasibleDelta: target {delta} is below the minimum distortion {d_min}")]
    InfeasibleDelta { delta: f64, d_min: f64 },
    #[error("Infeasible: no channel meets every constraint (worst excess {excess})")]
    Infeasible { excess: f64 },
    #[error("TooLarge: {0}")]
    TooLarge(String),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

/// Solver knobs; the defaults are the documented tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdOptions {
    /// Stop the inner iteration once the duality gap bound falls below this (bits).
    pub ba_tol: f64,
    pub ba_max_iter: usize,
    pub tol_feas: f64,
    /// Target certificate gap for multi-constraint problems (bits).
    pub multi_tol: f64,
    pub multi_max_iter: usize,
}

impl Default for RdOptions {
    fn default() -> Self {
        RdOptions { ba_tol: 1e-9, ba_max_iter: 5000, tol_feas: crate::TOL_FEAS, multi_tol: 1e-7, multi_max_iter: 300 }
    }
}

// ---------------------------------------------------------------------------
// Sources and channels
// ---------------------------------------------------------------------------

/// A pmf on conditioning symbols, optionally split into groups known at both ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdSource {
    px: Vec<f64>,
    group: Vec<usize>,
    groups: usize,
}

impl RdSource {
    pub fn new(px: Vec<f64>) -> Self {
        let n = px.len();
        RdSource { px, group: vec![0; n], groups: 1 }
    }

    /// Panics if `group` and `px` differ in length.
    pub fn grouped(px: Vec<f64>, group: Vec<usize>) -> Self {
        assert_eq!(px.len(), group.len(), "one group label per symbol");
        let groups = group.iter().copied().max().map_or(0, |g| g + 1);
        RdSource { px, group, groups }
    }

    pub fn len(&self) -> usize {
        self.px.len()
    }

    pub fn is_empty(&self) -> bool {
        self.px.is_empty()
    }

    pub fn px(&self) -> &[f64] {
        &self.px
    }

    pub fn group_of(&self, x: usize) -> usize {
        self.group[x]
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.groups];
        for (x, &p) in self.px.iter().enumerate() {
            mass[self.group[x]] += p;
        }
        mass
    }
}

/// W(y | x), one row per conditioning symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestChannel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TestChannel {
    /// Panics if the shape is inconsistent.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "channel shape");
        TestChannel { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let data = (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect();
        TestChannel::new(n, n, data)
    }

    /// Every row equal to `row`.
    pub fn constant(rows: usize, row: &[f64]) -> Self {
        TestChannel::new(rows, row.len(), row.repeat(rows))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.cols + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.cols..(x + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        (0..self.rows).all(|x| {
            let r = self.row(x);
            r.iter().all(|&w| w >= -tol) && (r.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }

    /// Convex combination of channels of equal shape.
    pub fn mix(channels: &[&TestChannel], weights: &[f64]) -> TestChannel {
        let mut data = vec![0.0; channels[0].data.len()];
        for (c, &w) in channels.iter().zip(weights) {
            for (d, v) in data.iter_mut().zip(&c.data) {
                *d += w * v;
            }
        }
        TestChannel { rows: channels[0].rows, cols: channels[0].cols, data }
    }

    /// E[table(X, Y)] under `px` and this channel.
    pub fn expected(&self, px: &[f64], table: &crate::DistortionTable) -> f64 {
        (0..self.rows).map(|x| px[x] * self.row(x).iter().zip(table.row(x)).map(|(w, d)| w * d).sum::<f64>()).sum()
    }
}

fn check_dims(px_len: usize, ch: &TestChannel) -> Result<(), RdError> {
    if px_len != ch.rows {
        return Err(RdError::DimensionMismatch(format!("source has {px_len} symbols, channel {} rows", ch.rows)));
    }
    Ok(())
}

fn mi_rows(px: &[f64], ch: &TestChannel, rows: impl Iterator<Item = usize> + Clone) -> f64 {
    let mut q = vec![0.0; ch.cols];
    let mut mass = 0.0;
    for x in rows.clone() {
        mass += px[x];
        for (qy, w) in q.iter_mut().zip(ch.row(x)) {
            *qy += px[x] * w;
        }
    }
    if mass <= 0.0 {
        return 0.0;
    }
    q.iter_mut().for_each(|v| *v /= mass);
    let mut total = 0.0;
    for x in rows {
        if px[x] <= 0.0 {
            continue;
        }
        for (y, &w) in ch.row(x).iter().enumerate() {
            if w > 0.0 && q[y] > 0.0 {
                total += px[x] * w * (w / q[y]).log2();
            }
        }
    }
    total.max(0.0)
}

/// I(X ∧ Y) in bits for X ~ px and Y | X ~ channel.
pub fn mutual_information(px: &[f64], channel: &TestChannel) -> Result<f64, RdError> {
    check_dims(px.len(), channel)?;
    Ok(mi_rows(px, channel, 0..px.len()))
}

/// I(X ∧ Y | G) in bits, G the group label of the source.
pub fn conditional_mutual_information(src: &RdSource, channel: &TestChannel) -> Result<f64, RdError> {
    check_dims(src.len(), channel)?;
    if src.groups == 1 {
        return Ok(mi_rows(&src.px, channel, 0..src.len()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); src.groups];
    for x in 0..src.len() {
        members[src.group[x]].push(x);
    }
    Ok(members.iter().map(|m| mi_rows(&src.px, channel, m.iter().copied())).sum())
}

/// One solved operating point.
#[derive(Debug, Clone, Serialize)]
pub struct RdPoint {
    /// Requested distortion level.
    pub delta: f64,
    /// Bits per sample.
    pub rate: f64,
    pub channel: TestChannel,
    pub converged: bool,
    pub iterations: usize,
    /// Lagrange multiplier(s) at the solution.
    pub slope: Vec<f64>,
    /// Distortion the returned channel achieves, per constraint.
    pub achieved: Vec<f64>,
}
