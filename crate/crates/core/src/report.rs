//! Curve sweeps, shape audits and cross-sampler comparisons.

use std::fmt;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::fixed::FixedSetSolver;
use crate::irs::{delta_bounds_irs, usrdf_irs};
use crate::model::{SourceModel, Subset};
use crate::mrs::MrsSolver;
use crate::{Setting, SolveError, TOL_CONVEX, TOL_FEAS, TOL_GAP};

/// Which sampler family a curve belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SamplerSpec {
    Fixed(Subset),
    /// Pointwise best of all fixed k-sets.
    BestFixed,
    Independent,
    Memoryless,
}

impl fmt::Display for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerSpec::Fixed(a) => write!(f, "fs:{a}"),
            SamplerSpec::BestFixed => write!(f, "best-fs"),
            SamplerSpec::Independent => write!(f, "irs"),
            SamplerSpec::Memoryless => write!(f, "mrs"),
        }
    }
}

impl Serialize for SamplerSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    /// Above the zero-rate threshold; the rate is 0.
    Saturated,
    /// Below the least achievable distortion; no rate.
    Infeasible,
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointStatus::Ok => "ok",
            PointStatus::Saturated => "saturated",
            PointStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub rate: Option<f64>,
    pub status: PointStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct RdCurve {
    pub sampler: SamplerSpec,
    pub setting: Setting,
    pub k: usize,
    /// (Δ_min, Δ_max) of this sampler and setting.
    pub bounds: (f64, f64),
    pub points: Vec<CurvePoint>,
}

impl RdCurve {
    /// Points that carry a rate, in grid order.
    pub fn rated(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().filter_map(|p| p.rate.map(|r| (p.delta, r)))
    }

    pub fn is_all_infeasible(&self) -> bool {
        self.points.iter().all(|p| p.status == PointStatus::Infeasible)
    }

    pub fn rate_at(&self, delta: f64) -> Option<f64> {
        self.points.iter().find(|p| p.delta == delta).and_then(|p| p.rate)
    }
}

fn status_for(delta: f64, (lo, hi): (f64, f64)) -> PointStatus {
    if delta < lo - TOL_FEAS {
        PointStatus::Infeasible
    } else if delta > hi + TOL_FEAS {
        PointStatus::Saturated
    } else {
        PointStatus::Ok
    }
}

/// `count` evenly spaced points on [lo, hi].
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

fn sorted_grid(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// (Δ_min, Δ_max) of a sampler family.
pub fn sampler_bounds(model: &SourceModel, spec: &SamplerSpec, k: usize, setting: Setting) -> Result<(f64, f64), SolveError> {
    match spec {
        SamplerSpec::Fixed(a) => Ok(FixedSetSolver::new(model, a, setting)?.bounds()),
        SamplerSpec::BestFixed => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::INFINITY;
            for a in model.k_subsets(k) {
                let (l, h) = FixedSetSolver::new(model, &a, setting)?.bounds();
                lo = lo.min(l);
                hi = hi.min(h);
            }
            Ok((lo, hi))
        }
        SamplerSpec::Independent => delta_bounds_irs(model, k, setting),
        SamplerSpec::Memoryless => Ok(MrsSolver::with_options(model, k, setting, 2, crate::mrs::DEFAULT_SAMPLER_CAP)?.bounds()),
    }
}

/// Solves at every grid point; out-of-range points are marked rather than clamped.
pub fn sweep(model: &SourceModel, spec: &SamplerSpec, k: usize, setting: Setting, grid: &[f64]) -> Result<RdCurve, SolveError> {
    let grid = sorted_grid(grid);
    let mut points = Vec::with_capacity(grid.len());
    let bounds = match spec {
        SamplerSpec::Fixed(a) => {
            let mut solver = FixedSetSolver::new(model, a, setting)?;
            let bounds = solver.bounds();
            for &d in &grid {
                let status = status_for(d, bounds);
                let rate = match status {
                    PointStatus::Infeasible => None,
                    PointStatus::Saturated => Some(0.0),
                    PointStatus::Ok => Some(solver.solve(d.max(bounds.0))?.rate),
                };
                points.push(CurvePoint { delta: d, rate, status });
            }
            bounds
        }
        SamplerSpec::BestFixed => {
            let mut solvers = model.k_subsets(k).iter().map(|a| FixedSetSolver::new(model, a, setting)).collect::<Result<Vec<_>, _>>()?;
            let bounds = sampler_bounds(model, spec, k, setting)?;
            for &d in &grid {
                let status = status_for(d, bounds);
                let rate = match status {
                    PointStatus::Infeasible => None,
                    PointStatus::Saturated => Some(0.0),
                    PointStatus::Ok => {
                        let mut best = f64::INFINITY;
                        for s in solvers.iter_mut() {
                            if d >= s.bounds().0 - TOL_FEAS {
                                best = best.min(s.solve(d.max(s.bounds().0))?.rate);
                            }
                        }
                        Some(best)
                    }
                };
                points.push(CurvePoint { delta: d, rate, status });
            }
            bounds
        }
        SamplerSpec::Independent => {
            let bounds = delta_bounds_irs(model, k, setting)?;
            for &d in &grid {
                let status = status_for(d, bounds);
                let rate = match status {
                    PointStatus::Infeasible => None,
                    PointStatus::Saturated => Some(0.0),
                    PointStatus::Ok => Some(usrdf_irs(model, k, d.max(bounds.0), setting)?.rate),
                };
                points.push(CurvePoint { delta: d, rate, status });
            }
            bounds
        }
        SamplerSpec::Memoryless => {
            let mut solver = MrsSolver::new(model, k, setting)?;
            let bounds = solver.bounds();
            for &d in &grid {
                let status = status_for(d, bounds);
                let rate = match status {
                    PointStatus::Infeasible => None,
                    PointStatus::Saturated => Some(0.0),
                    PointStatus::Ok => Some(solver.solve(d.max(bounds.0))?.rate),
                };
                points.push(CurvePoint { delta: d, rate, status });
            }
            bounds
        }
    };
    Ok(RdCurve { sampler: spec.clone(), setting, k, bounds, points })
}

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    /// Rate increases with Δ.
    Increase,
    /// A point lies above the chord of its neighbours.
    Nonconvex,
    /// A richer sampler class has a larger rate.
    Ordering,
    /// The Bayesian rate exceeds the worst-case one.
    Setting,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub sampler: String,
    pub setting: Setting,
    pub delta: f64,
    /// Amount by which the inequality fails, in bits.
    pub magnitude: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("audit needs at least 3 rated points, curve has {0}")]
    TooFewPoints(usize),
}

/// Largest excess of a point over the chord of its two neighbours (negative when strictly convex).
pub fn max_convexity_excess(points: &[(f64, f64)]) -> f64 {
    points
        .windows(3)
        .map(|w| {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            let (x2, y2) = w[2];
            let chord = y0 + (y2 - y0) * (x1 - x0) / (x2 - x0);
            y1 - chord
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Checks that the curve is nonincreasing and convex over its rated points.
pub fn audit_shape(curve: &RdCurve) -> Result<Vec<Violation>, AuditError> {
    audit_with(curve, TOL_GAP, TOL_CONVEX)
}

pub fn audit_with(curve: &RdCurve, tol_increase: f64, tol_convex: f64) -> Result<Vec<Violation>, AuditError> {
    let pts: Vec<(f64, f64)> = curve.rated().collect();
    if pts.len() < 3 {
        return Err(AuditError::TooFewPoints(pts.len()));
    }
    let violation =
        |kind, delta, magnitude| Violation { kind, sampler: curve.sampler.to_string(), setting: curve.setting, delta, magnitude };
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let rise = w[1].1 - w[0].1;
        if rise > tol_increase {
            out.push(violation(ViolationKind::Increase, w[1].0, rise));
        }
    }
    for w in pts.windows(3) {
        let excess = max_convexity_excess(w);
        if excess > tol_convex {
            out.push(violation(ViolationKind::Nonconvex, w[1].0, excess));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

/// Per-point rate differences between neighbouring sampler classes.
#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub setting: Setting,
    pub delta: f64,
    /// R_IRS − R_MRS.
    pub irs_minus_mrs: Option<f64>,
    /// R_bestFS − R_IRS.
    pub fs_minus_irs: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub k: usize,
    pub grid: Vec<f64>,
    /// best-fs, irs, mrs for each requested setting.
    pub curves: Vec<RdCurve>,
    pub gaps: Vec<GapRow>,
    pub violations: Vec<Violation>,
}

impl ComparisonReport {
    pub fn curve(&self, sampler: &SamplerSpec, setting: Setting) -> Option<&RdCurve> {
        self.curves.iter().find(|c| &c.sampler == sampler && c.setting == setting)
    }
}

/// Compares best fixed-set, independent and memoryless sampling. `None` runs both settings.
pub fn compare_samplers(model: &SourceModel, k: usize, setting: Option<Setting>, grid: &[f64]) -> Result<ComparisonReport, SolveError> {
    compare_samplers_with(model, k, setting, grid, TOL_GAP)
}

/// As [`compare_samplers`] with an explicit ordering tolerance.
pub fn compare_samplers_with(
    model: &SourceModel,
    k: usize,
    setting: Option<Setting>,
    grid: &[f64],
    tol: f64,
) -> Result<ComparisonReport, SolveError> {
    let grid = sorted_grid(grid);
    let settings = setting.map_or(vec![Setting::Bayes, Setting::NonBayes], |s| vec![s]);
    let classes = [SamplerSpec::BestFixed, SamplerSpec::Independent, SamplerSpec::Memoryless];
    let mut curves = Vec::new();
    for &s in &settings {
        for spec in &classes {
            curves.push(sweep(model, spec, k, s, &grid)?);
        }
    }
    let mut violations = Vec::new();
    let mut gaps = Vec::new();
    for &s in &settings {
        let get = |spec: &SamplerSpec| curves.iter().find(|c| &c.sampler == spec && c.setting == s).unwrap();
        let (fs, irs, mrs) = (get(&classes[0]), get(&classes[1]), get(&classes[2]));
        for &d in &grid {
            let (rf, ri, rm) = (fs.rate_at(d), irs.rate_at(d), mrs.rate_at(d));
            let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
            let row = GapRow { setting: s, delta: d, irs_minus_mrs: diff(ri, rm), fs_minus_irs: diff(rf, ri) };
            for (gap, name) in [(row.irs_minus_mrs, "mrs"), (row.fs_minus_irs, "irs")] {
                if let Some(g) = gap {
                    if -g > tol {
                        violations.push(Violation {
                            kind: ViolationKind::Ordering,
                            sampler: name.into(),
                            setting: s,
                            delta: d,
                            magnitude: -g,
                        });
                    }
                }
            }
            gaps.push(row);
        }
    }
    if settings.len() == 2 {
        for spec in &classes {
            let b = curves.iter().find(|c| &c.sampler == spec && c.setting == Setting::Bayes).unwrap();
            let n = curves.iter().find(|c| &c.sampler == spec && c.setting == Setting::NonBayes).unwrap();
            for &d in &grid {
                if let (Some(rb), Some(rn)) = (b.rate_at(d), n.rate_at(d)) {
                    if rb - rn > tol {
                        violations.push(Violation {
                            kind: ViolationKind::Setting,
                            sampler: spec.to_string(),
                            setting: Setting::Bayes,
                            delta: d,
                            magnitude: rb - rn,
                        });
                    }
                }
            }
        }
    }
    for c in &curves {
        if let Ok(v) = audit_shape(c) {
            violations.extend(v);
        }
    }
    Ok(ComparisonReport { k, grid, curves, gaps, violations })
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str = "delta,rate,status,sampler,setting";

/// One row per curve point; rate is empty for infeasible points.
pub fn write_csv<'a>(out: &mut impl Write, curves: impl IntoIterator<Item = &'a RdCurve>) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for c in curves {
        for p in &c.points {
            let rate = p.rate.map(|r| format!("{r:.9}")).unwrap_or_default();
            // Subset labels contain commas.
            let sampler = c.sampler.to_string();
            let sampler = if sampler.contains(',') { format!("\"{sampler}\"") } else { sampler };
            writeln!(out, "{:.9},{rate},{},{sampler},{}", p.delta, p.status, c.setting)?;
        }
    }
    Ok(())
}
