//! Source families over finite product alphabets.
//!
//! Joint symbols are stored dense and indexed row-major with component 1 as
//! the most significant digit. Components are 0-based internally and printed
//! 1-based.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pmfs within this distance of summing to one are renormalized on load.
pub const RENORMALIZE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("ZeroMassSymbol: {what} has a nonpositive entry at index {index}")]
    ZeroMassSymbol { what: String, index: usize },
    #[error("NegativeDistortion: distortion entry {index} is {value}")]
    NegativeDistortion { index: usize, value: f64 },
    #[error("EmptyRecoverySet: recovery_set must name at least one component")]
    EmptyRecoverySet,
    #[error("InconsistentAlphabet: field `{field}`: {detail}")]
    InconsistentAlphabet { field: String, detail: String },
    #[error("NotNormalized: {what} sums to {sum}")]
    NotNormalized { what: String, sum: f64 },
    #[error("Malformed: {0}")]
    Malformed(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

impl ModelError {
    /// Short variant name, used as the CLI's error label.
    pub fn name(&self) -> &'static str {
        match self {
            ModelError::ZeroMassSymbol { .. } => "ZeroMassSymbol",
            ModelError::NegativeDistortion { .. } => "NegativeDistortion",
            ModelError::EmptyRecoverySet => "EmptyRecoverySet",
            ModelError::InconsistentAlphabet { .. } => "InconsistentAlphabet",
            ModelError::NotNormalized { .. } => "NotNormalized",
            ModelError::Malformed(_) => "Malformed",
            ModelError::Io(_) => "Io",
        }
    }
}

// ---------------------------------------------------------------------------
// Subsets
// ---------------------------------------------------------------------------

/// A sorted set of component indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(mut components: Vec<usize>) -> Self {
        components.sort_unstable();
        components.dedup();
        Subset(components)
    }

    /// Builds a subset from 1-based component labels.
    pub fn from_one_based(labels: &[usize]) -> Option<Self> {
        if labels.contains(&0) {
            return None;
        }
        Some(Subset::new(labels.iter().map(|l| l - 1).collect()))
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, c: usize) -> bool {
        self.0.binary_search(&c).is_ok()
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.0.iter().all(|&c| other.contains(c))
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", c + 1)?;
        }
        write!(f, "}}")
    }
}

/// All k-subsets of {0..m}, in lexicographic order.
pub fn k_subsets(m: usize, k: usize) -> Vec<Subset> {
    let mut out = Vec::new();
    if k == 0 || k > m {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(Subset(idx.clone()));
        let mut i = k;
        while i > 0 && idx[i - 1] == m - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// The on-disk model document. Component labels in `recovery_set` are 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawModel {
    pub m: usize,
    pub alphabets: Vec<usize>,
    pub recovery_set: Vec<usize>,
    pub theta_labels: Vec<String>,
    pub prior: Vec<f64>,
    pub family: BTreeMap<String, Vec<f64>>,
    pub distortion: Vec<f64>,
    pub reproduction_alphabets: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Validated model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SourceModel {
    alphabets: Vec<usize>,
    strides: Vec<usize>,
    recovery: Subset,
    reproduction: Vec<usize>,
    labels: Vec<String>,
    family: Vec<Vec<f64>>,
    prior: Vec<f64>,
    distortion: Vec<f64>,
    repro_size: usize,
    joint_size: usize,
}

fn check_pmf(what: &str, pmf: &mut [f64]) -> Result<(), ModelError> {
    if let Some(index) = pmf.iter().position(|p| !p.is_finite() || *p <= 0.0) {
        return Err(ModelError::ZeroMassSymbol { what: what.to_string(), index });
    }
    let sum: f64 = pmf.iter().sum();
    if (sum - 1.0).abs() > RENORMALIZE_TOL {
        return Err(ModelError::NotNormalized { what: what.to_string(), sum });
    }
    if sum != 1.0 {
        pmf.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(())
}

fn inconsistent(field: &str, detail: impl Into<String>) -> ModelError {
    ModelError::InconsistentAlphabet { field: field.to_string(), detail: detail.into() }
}

/// Validates a raw document and returns the normalized model.
pub fn validate_model(raw: RawModel) -> Result<SourceModel, ModelError> {
    let RawModel { m, alphabets, recovery_set, theta_labels, mut prior, mut family, distortion, reproduction_alphabets } = raw;

    if m == 0 {
        return Err(inconsistent("m", "at least one component is required"));
    }
    if alphabets.len() != m {
        return Err(inconsistent("alphabets", format!("expected {m} sizes, got {}", alphabets.len())));
    }
    // Size-one components are allowed: they carry no information but keep
    // sampler counts flexible.
    if alphabets.contains(&0) {
        return Err(inconsistent("alphabets", "every alphabet needs at least one letter"));
    }
    if recovery_set.is_empty() {
        return Err(ModelError::EmptyRecoverySet);
    }
    if recovery_set.iter().any(|&c| c == 0 || c > m) {
        return Err(inconsistent("recovery_set", format!("labels must lie in 1..={m}")));
    }
    let recovery = Subset::new(recovery_set.iter().map(|c| c - 1).collect());
    if recovery.len() != recovery_set.len() {
        return Err(inconsistent("recovery_set", "duplicate component"));
    }
    if reproduction_alphabets.len() != recovery.len() {
        return Err(inconsistent(
            "reproduction_alphabets",
            format!("expected {} sizes, got {}", recovery.len(), reproduction_alphabets.len()),
        ));
    }
    if reproduction_alphabets.contains(&0) {
        return Err(inconsistent("reproduction_alphabets", "sizes must be at least 1"));
    }
    if theta_labels.is_empty() {
        return Err(inconsistent("theta_labels", "the family needs at least one member"));
    }
    if prior.len() != theta_labels.len() {
        return Err(inconsistent("prior", format!("expected {} entries", theta_labels.len())));
    }
    if family.len() != theta_labels.len() {
        return Err(inconsistent("family", "must have exactly one pmf per theta label"));
    }

    let joint_size: usize = alphabets.iter().product();
    let recovery_size: usize = recovery.components().iter().map(|&c| alphabets[c]).product();
    let repro_size: usize = reproduction_alphabets.iter().product();

    check_pmf("prior", &mut prior)?;

    let mut pmfs = Vec::with_capacity(theta_labels.len());
    for label in &theta_labels {
        let mut pmf = family.remove(label).ok_or_else(|| inconsistent("family", format!("missing pmf for label `{label}`")))?;
        if pmf.len() != joint_size {
            return Err(inconsistent("family", format!("pmf for `{label}` has {} entries, expected {joint_size}", pmf.len())));
        }
        check_pmf(&format!("family[{label}]"), &mut pmf)?;
        pmfs.push(pmf);
    }

    if distortion.len() != recovery_size * repro_size {
        return Err(inconsistent("distortion", format!("expected {} entries, got {}", recovery_size * repro_size, distortion.len())));
    }
    for (index, &value) in distortion.iter().enumerate() {
        if !value.is_finite() {
            return Err(ModelError::Malformed(format!("distortion entry {index} is not finite")));
        }
        if value < 0.0 {
            return Err(ModelError::NegativeDistortion { index, value });
        }
    }

    let mut strides = vec![1; m];
    for i in (0..m.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * alphabets[i + 1];
    }

    Ok(SourceModel {
        alphabets,
        strides,
        recovery,
        reproduction: reproduction_alphabets,
        labels: theta_labels,
        family: pmfs,
        prior,
        distortion,
        repro_size,
        joint_size,
    })
}

impl SourceModel {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let raw: RawModel = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        validate_model(raw)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_raw(&self) -> RawModel {
        RawModel {
            m: self.m(),
            alphabets: self.alphabets.clone(),
            recovery_set: self.recovery.components().iter().map(|c| c + 1).collect(),
            theta_labels: self.labels.clone(),
            prior: self.prior.clone(),
            family: self.labels.iter().cloned().zip(self.family.iter().cloned()).collect(),
            distortion: self.distortion.clone(),
            reproduction_alphabets: self.reproduction.clone(),
        }
    }

    pub fn m(&self) -> usize {
        self.alphabets.len()
    }

    pub fn alphabets(&self) -> &[usize] {
        &self.alphabets
    }

    pub fn recovery_set(&self) -> &Subset {
        &self.recovery
    }

    pub fn reproduction_alphabets(&self) -> &[usize] {
        &self.reproduction
    }

    pub fn theta_labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_theta(&self) -> usize {
        self.family.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn pmf(&self, tau: usize) -> &[f64] {
        &self.family[tau]
    }

    pub fn joint_size(&self) -> usize {
        self.joint_size
    }

    /// |Y_B|.
    pub fn repro_size(&self) -> usize {
        self.repro_size
    }

    pub fn d_max(&self) -> f64 {
        self.distortion.iter().copied().fold(0.0, f64::max)
    }

    pub fn distortion(&self, x_b: usize, y_b: usize) -> f64 {
        self.distortion[x_b * self.repro_size + y_b]
    }

    /// Number of symbols of the product alphabet X_A.
    pub fn subset_size(&self, a: &Subset) -> usize {
        a.components().iter().map(|&c| self.alphabets[c]).product()
    }

    /// Value of component `c` in joint symbol `x`.
    pub fn digit(&self, x: usize, c: usize) -> usize {
        (x / self.strides[c]) % self.alphabets[c]
    }

    /// Index of the restriction of joint symbol `x` to X_A.
    pub fn project(&self, x: usize, a: &Subset) -> usize {
        a.components().iter().fold(0, |acc, &c| acc * self.alphabets[c] + self.digit(x, c))
    }

    pub fn recovery_index(&self, x: usize) -> usize {
        self.project(x, &self.recovery)
    }

    /// Marginal of an arbitrary joint pmf on X_A, by exact summation over the complement.
    pub fn marginalize(&self, joint: &[f64], a: &Subset) -> Vec<f64> {
        let mut out = vec![0.0; self.subset_size(a)];
        for (x, p) in joint.iter().enumerate() {
            out[self.project(x, a)] += p;
        }
        out
    }

    pub fn marginal(&self, tau: usize, a: &Subset) -> Vec<f64> {
        self.marginalize(&self.family[tau], a)
    }

    /// Mixture of the family over `taus`, weighted by the restricted, renormalized prior.
    pub fn mixture(&self, taus: &[usize]) -> Vec<f64> {
        let total: f64 = taus.iter().map(|&t| self.prior[t]).sum();
        let mut out = vec![0.0; self.joint_size];
        for &t in taus {
            let w = self.prior[t] / total;
            for (o, p) in out.iter_mut().zip(&self.family[t]) {
                *o += w * p;
            }
        }
        out
    }

    /// Per-atom conditional distortion tables for a joint pmf split into atoms.
    ///
    /// `atom_of[x]` names the atom of joint symbol `x` (or `None` to drop it).
    /// Returns the atom masses and the table E[d(X_B, y) | atom] row by row;
    /// atoms of zero mass get a zero row.
    pub fn atom_distortion(&self, joint: &[f64], atom_of: &[Option<usize>], atoms: usize) -> (Vec<f64>, Vec<f64>) {
        let cols = self.repro_size;
        let mut mass = vec![0.0; atoms];
        let mut table = vec![0.0; atoms * cols];
        for (x, &p) in joint.iter().enumerate() {
            let Some(a) = atom_of[x] else { continue };
            mass[a] += p;
            let xb = self.recovery_index(x);
            let row = &mut table[a * cols..(a + 1) * cols];
            for (y, t) in row.iter_mut().enumerate() {
                *t += p * self.distortion(xb, y);
            }
        }
        for (a, &ma) in mass.iter().enumerate() {
            if ma > 0.0 {
                table[a * cols..(a + 1) * cols].iter_mut().for_each(|t| *t /= ma);
            }
        }
        (mass, table)
    }

    /// All k-subsets of the components, lexicographic.
    pub fn k_subsets(&self, k: usize) -> Vec<Subset> {
        k_subsets(self.m(), k)
    }
}
