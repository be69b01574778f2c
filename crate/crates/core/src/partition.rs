//! Ambiguity partitions of the parameter set and the distortion tables they induce.

use serde::Serialize;

use crate::model::{SourceModel, Subset};

/// L∞ tolerance for treating two marginal tables as equal.
pub const TOL_PMF: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PartitionKind {
    /// Parameters indistinguishable from X_A.
    Theta1(Subset),
    /// Parameters indistinguishable from the ordered collection of all k-marginals.
    Theta2(usize),
    /// Every parameter on its own.
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmbiguityPartition {
    pub kind: PartitionKind,
    /// Cells in order of their smallest member; members ascending.
    pub cells: Vec<Vec<usize>>,
    pub induced_prior: Vec<f64>,
    cell_of: Vec<usize>,
}

impl AmbiguityPartition {
    fn from_signatures(kind: PartitionKind, model: &SourceModel, signatures: &[Vec<f64>]) -> Self {
        let mut cells: Vec<Vec<usize>> = Vec::new();
        let mut cell_of = vec![0; signatures.len()];
        for (tau, sig) in signatures.iter().enumerate() {
            let found = cells.iter().position(|cell| linf(&signatures[cell[0]], sig) <= TOL_PMF);
            match found {
                Some(c) => {
                    cells[c].push(tau);
                    cell_of[tau] = c;
                }
                None => {
                    cell_of[tau] = cells.len();
                    cells.push(vec![tau]);
                }
            }
        }
        let induced_prior = cells.iter().map(|c| c.iter().map(|&t| model.prior()[t]).sum()).collect();
        AmbiguityPartition { kind, cells, induced_prior, cell_of }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, tau: usize) -> usize {
        self.cell_of[tau]
    }

    /// True when every cell of `self` lies inside a cell of `coarser`.
    pub fn refines(&self, coarser: &AmbiguityPartition) -> bool {
        self.cells.iter().all(|cell| cell.iter().all(|&t| coarser.cell_of(t) == coarser.cell_of(cell[0])))
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn theta1_partition(model: &SourceModel, a: &Subset) -> AmbiguityPartition {
    let sigs: Vec<Vec<f64>> = (0..model.num_theta()).map(|t| model.marginal(t, a)).collect();
    AmbiguityPartition::from_signatures(PartitionKind::Theta1(a.clone()), model, &sigs)
}

pub fn theta2_partition(model: &SourceModel, k: usize) -> AmbiguityPartition {
    let subsets = model.k_subsets(k);
    let sigs: Vec<Vec<f64>> = (0..model.num_theta()).map(|t| subsets.iter().flat_map(|a| model.marginal(t, a)).collect()).collect();
    AmbiguityPartition::from_signatures(PartitionKind::Theta2(k), model, &sigs)
}

pub fn full_partition(model: &SourceModel) -> AmbiguityPartition {
    let n = model.num_theta();
    AmbiguityPartition {
        kind: PartitionKind::Full,
        cells: (0..n).map(|t| vec![t]).collect(),
        induced_prior: model.prior().to_vec(),
        cell_of: (0..n).collect(),
    }
}

// ---------------------------------------------------------------------------
// Distortion tables
// ---------------------------------------------------------------------------

/// What the rows of a distortion table are indexed by.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Conditioning {
    /// Symbols of X_A.
    Observed(Subset),
    /// Pairs (A, x_A), blocks in the listed subset order.
    Branches(Vec<Subset>),
    /// Observation atoms (A, x_A) of a deterministic sampler.
    SamplerAtoms,
    /// Unlabeled rows.
    Plain,
}

/// Row-major table d'(row, y).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    pub conditioning: Conditioning,
}

impl DistortionTable {
    /// Panics if `data.len() != rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, conditioning: Conditioning) -> Self {
        assert_eq!(data.len(), rows * cols, "distortion table shape");
        DistortionTable { rows, cols, data, conditioning }
    }

    pub fn plain(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(rows, cols, data, Conditioning::Plain)
    }

    /// 0 on the diagonal, 1 elsewhere.
    pub fn hamming(n: usize) -> Self {
        let data = (0..n * n).map(|i| if i / n == i % n { 0.0 } else { 1.0 }).collect();
        Self::plain(n, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Entry-wise `Σ_j weights[j] * tables[j]`; all tables must share a shape.
    pub fn combine(tables: &[&DistortionTable], weights: &[f64]) -> DistortionTable {
        let (rows, cols) = (tables[0].rows, tables[0].cols);
        let mut data = vec![0.0; rows * cols];
        for (t, &w) in tables.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            for (d, v) in data.iter_mut().zip(&t.data) {
                *d += w * v;
            }
        }
        DistortionTable::plain(rows, cols, data)
    }

    /// Multiplies row r by `factors[r]`.
    pub fn scale_rows(&self, factors: &[f64]) -> DistortionTable {
        let mut data = self.data.clone();
        for (r, f) in factors.iter().enumerate() {
            data[r * self.cols..(r + 1) * self.cols].iter_mut().for_each(|v| *v *= f);
        }
        DistortionTable { data, ..self.clone() }
    }
}

/// Marginal of the cell mixture on X_A.
pub fn cell_marginal(model: &SourceModel, cell: &[usize], a: &Subset) -> Vec<f64> {
    model.marginalize(&model.mixture(cell), a)
}

/// d'(x_A, y_B) = E[d(X_B, y_B) | X_A = x_A, cell] under the prior-weighted cell mixture.
pub fn modified_distortion(model: &SourceModel, cell: &[usize], a: &Subset) -> DistortionTable {
    let joint = model.mixture(cell);
    let atom_of: Vec<Option<usize>> = (0..model.joint_size()).map(|x| Some(model.project(x, a))).collect();
    let rows = model.subset_size(a);
    let (_, table) = model.atom_distortion(&joint, &atom_of, rows);
    DistortionTable::new(rows, model.repro_size(), table, Conditioning::Observed(a.clone()))
}

/// Table whose expectation under `base` (a pmf on X_A) equals E[d(X_B, Y_B) | θ = τ]
/// for any channel from X_A, i.e. P_τ(x_A)/base(x_A) · d_τ(x_A, y).
pub fn reweighted_distortion(model: &SourceModel, tau: usize, a: &Subset, base: &[f64]) -> DistortionTable {
    let own = model.marginal(tau, a);
    let ratio: Vec<f64> = own.iter().zip(base).map(|(p, b)| p / b).collect();
    modified_distortion(model, &[tau], a).scale_rows(&ratio)
}
