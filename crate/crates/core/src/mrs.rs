//! Memoryless random sampling: the observed k-set may depend on the current
//! source symbol and on a time-sharing slot.
//!
//! Deterministic maps from joint symbols to k-subsets suffice. Each map and
//! parameter gives a single-constraint rate-distortion curve; curves are
//! tabulated on a distortion grid and time-shared by a linear program.

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::lp::{LinearProgram, Relation};
use crate::model::{SourceModel, Subset};
use crate::partition::{Conditioning, DistortionTable};
use crate::rd::{RdError, RdOptions, RdPoint, RdSource, SingleSolver};
use crate::{Setting, SolveError, TOL_FEAS};

pub const DEFAULT_SAMPLER_CAP: usize = 1 << 20;
pub const DEFAULT_GRID: usize = 33;
const REFINE_ROUNDS: usize = 10;
const ACTIVE: f64 = 1e-10;

/// (observed value, joint symbols producing it) within one subset.
type Atoms = Vec<(usize, Vec<usize>)>;

/// Grid LP optimum: value, π_w, and λ per (w, τ) over that curve's grid points.
type GridSolution = (f64, Vec<f64>, Vec<Vec<Vec<f64>>>);

/// A map from joint source symbols to observed k-sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DeterministicSampler {
    /// One subset per joint symbol, in joint-index order.
    pub sets: Vec<Subset>,
}

impl DeterministicSampler {
    pub fn constant(model: &SourceModel, a: &Subset) -> Self {
        DeterministicSampler { sets: vec![a.clone(); model.joint_size()] }
    }

    pub fn is_constant(&self) -> bool {
        self.sets.windows(2).all(|w| w[0] == w[1])
    }

    /// Whether the two maps induce the same observation atoms.
    pub fn equivalent(&self, other: &Self, model: &SourceModel) -> bool {
        self.signature(model) == other.signature(model)
    }

    /// Observation atoms (subset, sorted joint symbols), grouped by subset; used to
    /// recognise maps that induce the same conditioning.
    fn signature(&self, model: &SourceModel) -> Vec<Vec<Vec<usize>>> {
        let mut groups: Vec<(&Subset, Atoms)> = Vec::new();
        for (x, a) in self.sets.iter().enumerate() {
            let key = model.project(x, a);
            let gi = match groups.iter().position(|(s, _)| *s == a) {
                Some(i) => i,
                None => {
                    groups.push((a, Vec::new()));
                    groups.len() - 1
                }
            };
            let atoms = &mut groups[gi].1;
            match atoms.iter_mut().find(|(k, _)| *k == key) {
                Some((_, xs)) => xs.push(x),
                None => atoms.push((key, vec![x])),
            }
        }
        let mut sig: Vec<Vec<Vec<usize>>> = groups
            .into_iter()
            .map(|(_, atoms)| {
                let mut g: Vec<Vec<usize>> = atoms.into_iter().map(|(_, xs)| xs).collect();
                g.sort();
                g
            })
            .collect();
        sig.sort();
        sig
    }
}

impl fmt::Display for DeterministicSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.sets.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

/// All maps X_M -> A_k in lexicographic order, keeping the first of each class
/// of maps that induce identical conditioning.
pub fn enumerate_pure_samplers(model: &SourceModel, k: usize, cap: usize) -> Result<Vec<DeterministicSampler>, SolveError> {
    let subsets = model.k_subsets(k);
    let n = model.joint_size();
    let count = (subsets.len() as f64).powi(n as i32);
    if subsets.is_empty() || count > cap as f64 {
        return Err(SolveError::TooManySamplers { count, cap });
    }
    let mut digits = vec![0usize; n];
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    loop {
        let w = DeterministicSampler { sets: digits.iter().map(|&d| subsets[d].clone()).collect() };
        if seen.insert(w.signature(model)) {
            out.push(w);
        }
        // Odometer, last joint symbol fastest.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < subsets.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Grouped source over (S, X_S) atoms for parameter `tau` when S is drawn from
/// `choice(x)` (a pmf over `subsets`) given the joint symbol x.
pub fn sampler_problem<'a>(
    model: &SourceModel,
    subsets: &[Subset],
    choice: impl Fn(usize) -> &'a [f64],
    tau: usize,
) -> (RdSource, DistortionTable) {
    let cols = model.repro_size();
    let offsets: Vec<usize> = subsets
        .iter()
        .scan(0, |acc, a| {
            let o = *acc;
            *acc += model.subset_size(a);
            Some(o)
        })
        .collect();
    let total = offsets.last().map_or(0, |&o| o + model.subset_size(subsets.last().unwrap()));
    let mut mass = vec![0.0; total];
    let mut table = vec![0.0; total * cols];
    for (x, &p) in model.pmf(tau).iter().enumerate() {
        let xb = model.recovery_index(x);
        for (s, &ps) in choice(x).iter().enumerate() {
            let w = p * ps;
            if w <= 0.0 {
                continue;
            }
            let atom = offsets[s] + model.project(x, &subsets[s]);
            mass[atom] += w;
            for (y, t) in table[atom * cols..(atom + 1) * cols].iter_mut().enumerate() {
                *t += w * model.distortion(xb, y);
            }
        }
    }
    let mut px = Vec::new();
    let mut group = Vec::new();
    let mut data = Vec::new();
    for (s, a) in subsets.iter().enumerate() {
        for atom in offsets[s]..offsets[s] + model.subset_size(a) {
            if mass[atom] > 0.0 {
                px.push(mass[atom]);
                group.push(s);
                data.extend(table[atom * cols..(atom + 1) * cols].iter().map(|t| t / mass[atom]));
            }
        }
    }
    // Compact the group labels so only used subsets count.
    let mut used: Vec<usize> = group.clone();
    used.sort_unstable();
    used.dedup();
    let group = group.iter().map(|g| used.binary_search(g).unwrap()).collect();
    let rows = px.len();
    (RdSource::grouped(px, group), DistortionTable::new(rows, cols, data, Conditioning::SamplerAtoms))
}

fn pure_problem(model: &SourceModel, w: &DeterministicSampler, tau: usize) -> (RdSource, DistortionTable) {
    let mut subsets: Vec<Subset> = w.sets.clone();
    subsets.sort();
    subsets.dedup();
    let onehot: Vec<Vec<f64>> = w.sets.iter().map(|a| subsets.iter().map(|s| if s == a { 1.0 } else { 0.0 }).collect()).collect();
    sampler_problem(model, &subsets, |x| &onehot[x], tau)
}

/// Inner rate for one deterministic map under parameter `tau`.
pub fn rho_mrs_pure(model: &SourceModel, w: &DeterministicSampler, tau: usize, delta: f64) -> Result<RdPoint, SolveError> {
    let (src, table) = pure_problem(model, w, tau);
    Ok(SingleSolver::new(src, table, RdOptions::default())?.at_distortion(delta)?)
}

/// Inner rate for a randomized sampler: `choice[x]` is a pmf over the k-subsets.
pub fn rho_mrs_randomized(model: &SourceModel, k: usize, choice: &[Vec<f64>], tau: usize, delta: f64) -> Result<RdPoint, SolveError> {
    let subsets = model.k_subsets(k);
    if choice.len() != model.joint_size() || choice.iter().any(|c| c.len() != subsets.len()) {
        return Err(SolveError::Rd(RdError::DimensionMismatch("sampler needs one pmf over k-subsets per joint symbol".into())));
    }
    let (src, table) = sampler_problem(model, &subsets, |x| &choice[x], tau);
    Ok(SingleSolver::new(src, table, RdOptions::default())?.at_distortion(delta)?)
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub distortion: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MrsSlot {
    pub weight: f64,
    pub sampler: DeterministicSampler,
    /// One operating point per parameter.
    pub points: Vec<OperatingPoint>,
}

/// Time sharing over deterministic samplers.
#[derive(Debug, Clone, Serialize)]
pub struct MrsPolicy {
    pub slots: Vec<MrsSlot>,
}

impl MrsPolicy {
    fn per_tau(&self, f: impl Fn(&OperatingPoint) -> f64) -> Vec<f64> {
        let n = self.slots.first().map_or(0, |s| s.points.len());
        (0..n).map(|t| self.slots.iter().map(|s| s.weight * f(&s.points[t])).sum()).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.per_tau(|p| p.rate)
    }

    pub fn distortions(&self) -> Vec<f64> {
        self.per_tau(|p| p.distortion)
    }

    /// Worst per-parameter rate.
    pub fn rate(&self) -> f64 {
        self.rates().into_iter().fold(0.0, f64::max)
    }

    /// Recomputes every slot's rates at its stored distortions.
    pub fn reevaluate(&self, model: &SourceModel) -> Result<MrsPolicy, SolveError> {
        let mut slots = self.slots.clone();
        for slot in &mut slots {
            for (tau, p) in slot.points.iter_mut().enumerate() {
                p.rate = rho_mrs_pure(model, &slot.sampler, tau, p.distortion)?.rate;
            }
        }
        Ok(MrsPolicy { slots })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MrsSolution {
    pub setting: Setting,
    pub delta: f64,
    pub rate: f64,
    /// Value of the grid linear program, an upper bound on `rate`.
    pub grid_rate: f64,
    pub policy: MrsPolicy,
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Curve {
    solver: SingleSolver,
    /// (distortion, rate), ascending in distortion.
    points: Vec<(f64, f64)>,
    converged: bool,
}

impl Curve {
    fn insert(&mut self, delta: f64) -> Result<(), RdError> {
        let pos = self.points.partition_point(|p| p.0 < delta);
        if self.points.get(pos).is_some_and(|p| (p.0 - delta).abs() < 1e-12) {
            return Ok(());
        }
        let pt = self.solver.at_distortion(delta)?;
        self.converged &= pt.converged;
        self.points.insert(pos, (delta, pt.rate));
        Ok(())
    }
}

/// Reusable solver for one (k, setting); curves and refinements persist across Δ.
#[derive(Debug, Clone)]
pub struct MrsSolver {
    samplers: Vec<DeterministicSampler>,
    prior: Vec<f64>,
    setting: Setting,
    /// curves[w][tau]
    curves: Vec<Vec<Curve>>,
    bounds: (f64, f64),
}

impl MrsSolver {
    pub fn new(model: &SourceModel, k: usize, setting: Setting) -> Result<Self, SolveError> {
        Self::with_options(model, k, setting, DEFAULT_GRID, DEFAULT_SAMPLER_CAP)
    }

    pub fn with_options(model: &SourceModel, k: usize, setting: Setting, grid: usize, cap: usize) -> Result<Self, SolveError> {
        let samplers = enumerate_pure_samplers(model, k, cap)?;
        let thetas = model.num_theta();
        let grid = grid.max(2);
        let curves = samplers
            .par_iter()
            .map(|w| {
                (0..thetas)
                    .map(|tau| {
                        let (src, table) = pure_problem(model, w, tau);
                        let solver = SingleSolver::new(src, table, RdOptions::default())?;
                        let (lo, hi) = solver.bounds();
                        let mut curve = Curve { solver, points: Vec::with_capacity(grid), converged: true };
                        for g in 0..grid {
                            curve.insert(lo + (hi - lo) * g as f64 / (grid - 1) as f64)?;
                        }
                        Ok(curve)
                    })
                    .collect::<Result<Vec<_>, RdError>>()
            })
            .collect::<Result<Vec<_>, RdError>>()?;
        let mut solver = MrsSolver { samplers, prior: model.prior().to_vec(), setting, curves, bounds: (0.0, 0.0) };
        solver.bounds = (solver.extreme(|c| c.solver.bounds().0)?.0, solver.extreme(|c| c.solver.bounds().1)?.0);
        Ok(solver)
    }

    pub fn samplers(&self) -> &[DeterministicSampler] {
        &self.samplers
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Least achievable value of the aggregated per-(w, τ) quantity `f`, with
    /// the weights over samplers that attain it.
    fn extreme(&self, f: impl Fn(&Curve) -> f64) -> Result<(f64, Vec<f64>), RdError> {
        let n = self.samplers.len();
        match self.setting {
            Setting::Bayes => {
                let mut best = (f64::INFINITY, 0);
                for (w, cs) in self.curves.iter().enumerate() {
                    let v: f64 = cs.iter().zip(&self.prior).map(|(c, mu)| mu * f(c)).sum();
                    if v < best.0 - 1e-12 {
                        best = (v, w);
                    }
                }
                let mut weights = vec![0.0; n];
                weights[best.1] = 1.0;
                Ok((best.0, weights))
            }
            Setting::NonBayes => {
                let mut lp = LinearProgram::new(n + 1);
                lp.set_cost(n, 1.0);
                lp.add_row((0..n).map(|w| (w, 1.0)).collect(), Relation::Eq, 1.0);
                for tau in 0..self.prior.len() {
                    let mut row: Vec<(usize, f64)> = (0..n).map(|w| (w, f(&self.curves[w][tau]))).collect();
                    row.push((n, -1.0));
                    lp.add_row(row, Relation::Le, 0.0);
                }
                let sol = lp.solve()?;
                Ok((sol.x[n], sol.x[..n].to_vec()))
            }
        }
    }

    /// Grid LP: returns (value, π_w, per-(w, τ) mixed distortion, per-(w, τ) λ over grid points).
    fn grid_lp(&self, delta: f64) -> Result<GridSolution, RdError> {
        let n = self.samplers.len();
        let thetas = self.prior.len();
        let t = 0;
        let mut lp = LinearProgram::new(1 + n);
        lp.set_cost(t, 1.0);
        lp.add_row((0..n).map(|w| (1 + w, 1.0)).collect(), Relation::Eq, 1.0);
        let mut lambda_start = vec![vec![0; thetas]; n];
        for (w, cs) in self.curves.iter().enumerate() {
            for (tau, c) in cs.iter().enumerate() {
                let start = lp.num_vars();
                for _ in &c.points {
                    lp.add_var(0.0);
                }
                lambda_start[w][tau] = start;
                let mut row: Vec<(usize, f64)> = (0..c.points.len()).map(|g| (start + g, 1.0)).collect();
                row.push((1 + w, -1.0));
                lp.add_row(row, Relation::Eq, 0.0);
            }
        }
        for tau in 0..thetas {
            let mut row = vec![(t, -1.0)];
            for (w, cs) in self.curves.iter().enumerate() {
                let c = &cs[tau];
                row.extend(c.points.iter().enumerate().map(|(g, p)| (lambda_start[w][tau] + g, p.1)));
            }
            lp.add_row(row, Relation::Le, 0.0);
        }
        let dist_row = |tau: usize, scale: f64| -> Vec<(usize, f64)> {
            self.curves
                .iter()
                .enumerate()
                .flat_map(|(w, cs)| {
                    let start = lambda_start[w][tau];
                    cs[tau].points.iter().enumerate().map(move |(g, p)| (start + g, scale * p.0))
                })
                .collect()
        };
        match self.setting {
            Setting::Bayes => {
                let row = (0..thetas).flat_map(|tau| dist_row(tau, self.prior[tau])).collect();
                lp.add_row(row, Relation::Le, delta);
            }
            Setting::NonBayes => {
                for tau in 0..thetas {
                    lp.add_row(dist_row(tau, 1.0), Relation::Le, delta);
                }
            }
        }
        let sol = lp.solve()?;
        let pi = sol.x[1..=n].to_vec();
        let lambdas = (0..n)
            .map(|w| {
                (0..thetas)
                    .map(|tau| {
                        let s = lambda_start[w][tau];
                        sol.x[s..s + self.curves[w][tau].points.len()].to_vec()
                    })
                    .collect()
            })
            .collect();
        Ok((sol.x[t], pi, lambdas))
    }

    /// Adds midpoints around every grid point the LP uses; returns whether anything changed.
    fn refine(&mut self, pi: &[f64], lambdas: &[Vec<Vec<f64>>]) -> Result<bool, RdError> {
        let mut jobs: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        for (w, per_tau) in lambdas.iter().enumerate() {
            if pi[w] <= ACTIVE {
                continue;
            }
            for (tau, lam) in per_tau.iter().enumerate() {
                let pts = &self.curves[w][tau].points;
                let mut new = Vec::new();
                for (g, &l) in lam.iter().enumerate() {
                    if l <= ACTIVE {
                        continue;
                    }
                    if g > 0 && pts[g].0 - pts[g - 1].0 > 1e-9 {
                        new.push(0.5 * (pts[g].0 + pts[g - 1].0));
                    }
                    if g + 1 < pts.len() && pts[g + 1].0 - pts[g].0 > 1e-9 {
                        new.push(0.5 * (pts[g].0 + pts[g + 1].0));
                    }
                }
                if !new.is_empty() {
                    jobs.push((w, tau, new));
                }
            }
        }
        if jobs.is_empty() {
            return Ok(false);
        }
        for (w, tau, new) in jobs {
            for d in new {
                self.curves[w][tau].insert(d)?;
            }
        }
        Ok(true)
    }

    pub fn solve(&mut self, delta: f64) -> Result<MrsSolution, SolveError> {
        let (lo, hi) = self.bounds;
        if delta < lo - TOL_FEAS {
            return Err(SolveError::DeltaOutOfRange { delta, min: lo, max: hi });
        }
        let thetas = self.prior.len();
        if delta >= hi - TOL_FEAS {
            let (_, weights) = self.extreme(|c| c.solver.bounds().1)?;
            let slots = weights
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > ACTIVE)
                .map(|(w, &p)| MrsSlot {
                    weight: p,
                    sampler: self.samplers[w].clone(),
                    points: (0..thetas)
                        .map(|tau| OperatingPoint { distortion: self.curves[w][tau].solver.bounds().1, rate: 0.0 })
                        .collect(),
                })
                .collect();
            let policy = normalize(MrsPolicy { slots });
            return Ok(MrsSolution { setting: self.setting, delta, rate: 0.0, grid_rate: 0.0, policy, converged: true });
        }
        let target = delta.max(lo);
        let mut lp = self.grid_lp(target)?;
        for _ in 0..REFINE_ROUNDS {
            if !self.refine(&lp.1, &lp.2)? {
                break;
            }
            lp = self.grid_lp(target)?;
        }
        let (grid_rate, pi, lambdas) = lp;

        // Each active sampler runs at its λ-averaged distortion per parameter; the
        // exact rate there is no larger than the interpolated one.
        let mut slots = Vec::new();
        let mut converged = true;
        for (w, &p) in pi.iter().enumerate() {
            if p <= ACTIVE {
                continue;
            }
            let mut points = Vec::with_capacity(thetas);
            for (c, lam) in self.curves[w].iter_mut().zip(&lambdas[w]) {
                let mass: f64 = lam.iter().sum();
                let d: f64 = lam.iter().zip(&c.points).map(|(l, pt)| l * pt.0).sum::<f64>() / mass;
                let (dlo, dhi) = c.solver.bounds();
                let pt = c.solver.at_distortion(d.clamp(dlo, dhi))?;
                converged &= pt.converged && c.converged;
                points.push(OperatingPoint { distortion: d, rate: pt.rate });
            }
            slots.push(MrsSlot { weight: p, sampler: self.samplers[w].clone(), points });
        }
        let policy = reduce_support(normalize(MrsPolicy { slots }), 2 * thetas + 1);
        Ok(MrsSolution { setting: self.setting, delta, rate: policy.rate(), grid_rate, policy, converged })
    }
}

fn normalize(mut policy: MrsPolicy) -> MrsPolicy {
    let total: f64 = policy.slots.iter().map(|s| s.weight).sum();
    policy.slots.iter_mut().for_each(|s| s.weight /= total);
    policy
}

/// Carathéodory reduction: keeps the weighted mean of the per-slot
/// (rates, distortions) vectors while dropping slots until at most `limit` remain.
pub fn reduce_support(mut policy: MrsPolicy, limit: usize) -> MrsPolicy {
    let vec_of = |s: &MrsSlot| -> Vec<f64> {
        s.points.iter().map(|p| p.rate).chain(s.points.iter().map(|p| p.distortion)).chain(std::iter::once(1.0)).collect()
    };
    while policy.slots.len() > limit {
        let dim = vec_of(&policy.slots[0]).len();
        let take = (dim + 1).min(policy.slots.len());
        let cols: Vec<Vec<f64>> = policy.slots[..take].iter().map(vec_of).collect();
        let Some(mut c) = null_vector(&cols) else { break };
        if c.iter().all(|&v| v <= 1e-15) {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        let (idx, step) = c
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 1e-15)
            .map(|(i, &v)| (i, policy.slots[i].weight / v))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("positive entry exists");
        for (s, &ci) in policy.slots[..take].iter_mut().zip(&c) {
            s.weight = (s.weight - step * ci).max(0.0);
        }
        policy.slots[idx].weight = 0.0;
        policy.slots.retain(|s| s.weight > 0.0);
    }
    normalize(policy)
}

/// Nonzero c with Σ c_j cols[j] = 0, when the columns outnumber the rows.
fn null_vector(cols: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = cols.len();
    let rows = cols.first()?.len();
    let mut a: Vec<Vec<f64>> = (0..rows).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n {
        if r == rows {
            break;
        }
        let (best, val) = (r..rows).map(|i| (i, a[i][col].abs())).max_by(|x, y| x.1.total_cmp(&y.1))?;
        if val < 1e-12 {
            continue;
        }
        a.swap(r, best);
        let p = a[r][col];
        a[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != r && row[col] != 0.0 {
                let f = row[col];
                row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
        pivots.push(col);
        r += 1;
    }
    let free = (0..n).find(|c| !pivots.contains(c))?;
    let mut x = vec![0.0; n];
    x[free] = 1.0;
    for (i, &pc) in pivots.iter().enumerate() {
        x[pc] = -a[i][free];
    }
    Some(x)
}

pub fn usrdf_mrs(model: &SourceModel, k: usize, delta: f64, setting: Setting) -> Result<MrsSolution, SolveError> {
    MrsSolver::new(model, k, setting)?.solve(delta)
}

pub fn delta_bounds_mrs(model: &SourceModel, k: usize, setting: Setting) -> Result<(f64, f64), SolveError> {
    // Bounds need no curve tabulation beyond the end points.
    Ok(MrsSolver::with_options(model, k, setting, 2, DEFAULT_SAMPLER_CAP)?.bounds())
}
