//! Monte Carlo checks of the estimation phases: how often a maximum-likelihood
//! guess of the ambiguity cell is wrong after n samples.
//!
//! Every trial draws from its own ChaCha8 stream: seed `seed`, stream number
//! equal to the trial index. Blocklengths are nested prefixes of one draw per
//! trial, so serial and parallel runs agree exactly.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{SourceModel, Subset};
use crate::partition::{full_partition, theta1_partition, theta2_partition};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("UnknownTau: no parameter index {tau} (family has {count})")]
    UnknownTau { tau: usize, count: usize },
    #[error("EmptySequence: sequence length must be at least 1")]
    EmptySequence,
    #[error("NoTrials: trial count must be at least 1")]
    NoTrials,
    #[error("SignalingImpossible: cannot signal {symbols} joint symbols with a single sampling set")]
    SignalingImpossible { symbols: usize },
    #[error("Invalid: bad simulation input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub scheme: String,
    pub tau_true: usize,
    pub seed: u64,
    pub trials: usize,
    /// Requested blocklengths, ascending.
    pub blocklengths: Vec<usize>,
    /// Sampler time instants actually spent per blocklength.
    pub effective_lengths: Vec<usize>,
    pub error_counts: Vec<usize>,
    /// error_counts / trials.
    pub error_rates: Vec<f64>,
    /// Chunks used by the signaling scheme, when chunked.
    pub chunks: Option<usize>,
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn check_tau(model: &SourceModel, tau: usize) -> Result<(), SimError> {
    if tau >= model.num_theta() {
        return Err(SimError::UnknownTau { tau, count: model.num_theta() });
    }
    Ok(())
}

fn draws(model: &SourceModel, tau: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let dist = WeightedIndex::new(model.pmf(tau)).expect("validated pmf");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// n i.i.d. joint symbols under parameter `tau` (stream 0 of `seed`).
pub fn sample_dmms(model: &SourceModel, tau: usize, n: usize, seed: u64) -> Result<Vec<usize>, SimError> {
    check_tau(model, tau)?;
    if n == 0 {
        return Err(SimError::EmptySequence);
    }
    Ok(draws(model, tau, n, &mut trial_rng(seed, 0)))
}

/// Picks the cell whose prior-weighted mixture likelihood is largest; ties go
/// to the smallest cell index.
#[derive(Debug, Clone)]
struct CellClassifier {
    cells: Vec<Vec<usize>>,
    /// Log of the prior restricted to each cell and renormalized, per parameter.
    log_weight: Vec<f64>,
}

impl CellClassifier {
    fn new(model: &SourceModel, cells: Vec<Vec<usize>>) -> Self {
        let mut log_weight = vec![f64::NEG_INFINITY; model.num_theta()];
        for cell in &cells {
            let mass: f64 = cell.iter().map(|&t| model.prior()[t]).sum();
            for &t in cell {
                log_weight[t] = (model.prior()[t] / mass).ln();
            }
        }
        CellClassifier { cells, log_weight }
    }

    fn cell_of(&self, tau: usize) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(&tau))
    }

    fn decide(&self, member_ll: &[f64]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, cell) in self.cells.iter().enumerate() {
            let terms: Vec<f64> = cell.iter().map(|&t| self.log_weight[t] + member_ll[t]).collect();
            let v = log_sum_exp(&terms);
            if v > best.1 {
                best = (i, v);
            }
        }
        best.0
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

fn checked_lengths(ns: &[usize], trials: usize) -> Result<Vec<usize>, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    if ns.is_empty() || ns.contains(&0) {
        return Err(SimError::EmptySequence);
    }
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    Ok(ns)
}

/// Runs the trials. `observe` fills per-parameter log-likelihoods at each
/// checkpoint of `ns` for one trial.
fn run(
    classifier: &CellClassifier,
    tau_true: usize,
    ns: &[usize],
    trials: usize,
    seed: u64,
    observe: impl Fn(&mut ChaCha8Rng) -> Vec<Vec<f64>> + Sync,
) -> Vec<usize> {
    let truth = classifier.cell_of(tau_true).expect("every parameter has a cell");
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial as u64);
            observe(&mut rng).iter().map(|ll| (classifier.decide(ll) != truth) as usize).collect::<Vec<_>>()
        })
        .reduce(|| vec![0; ns.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// Accumulates Σ log P_τ(symbol) for every τ and snapshots at each checkpoint.
fn prefix_loglik(tables: &[Vec<f64>], symbols: &[usize], ns: &[usize]) -> Vec<Vec<f64>> {
    let mut acc = vec![0.0; tables.len()];
    let mut out = Vec::with_capacity(ns.len());
    let mut next = 0;
    for (i, &s) in symbols.iter().enumerate() {
        for (a, t) in acc.iter_mut().zip(tables) {
            *a += t[s];
        }
        while next < ns.len() && ns[next] == i + 1 {
            out.push(acc.clone());
            next += 1;
        }
    }
    out
}

fn log_table(pmf: &[f64]) -> Vec<f64> {
    pmf.iter().map(|p| p.ln()).collect()
}

#[allow(clippy::too_many_arguments)]
fn report(
    scheme: &str,
    tau_true: usize,
    seed: u64,
    trials: usize,
    ns: Vec<usize>,
    effective: Vec<usize>,
    counts: Vec<usize>,
    chunks: Option<usize>,
) -> SimReport {
    let error_rates = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    SimReport {
        scheme: scheme.to_string(),
        tau_true,
        seed,
        trials,
        blocklengths: ns,
        effective_lengths: effective,
        error_counts: counts,
        error_rates,
        chunks,
    }
}

/// ML over explicitly given cells from observations of X_A.
pub fn simulate_ml_cells(
    model: &SourceModel,
    a: &Subset,
    cells: Vec<Vec<usize>>,
    tau_true: usize,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SimReport, SimError> {
    check_tau(model, tau_true)?;
    if a.is_empty() || a.components().iter().any(|&c| c >= model.m()) {
        return Err(SimError::Invalid(format!("bad observed set {a}")));
    }
    let mut covered: Vec<usize> = cells.iter().flatten().copied().collect();
    covered.sort_unstable();
    if covered != (0..model.num_theta()).collect::<Vec<_>>() {
        return Err(SimError::Invalid("cells must partition the parameter set".into()));
    }
    let ns = checked_lengths(ns, trials)?;
    let n_max = *ns.last().unwrap();
    let tables: Vec<Vec<f64>> = (0..model.num_theta()).map(|t| log_table(&model.marginal(t, a))).collect();
    let classifier = CellClassifier::new(model, cells);
    let counts = run(&classifier, tau_true, &ns, trials, seed, |rng| {
        let obs: Vec<usize> = draws(model, tau_true, n_max, rng).iter().map(|&x| model.project(x, a)).collect();
        prefix_loglik(&tables, &obs, &ns)
    });
    Ok(report("fs-ml", tau_true, seed, trials, ns.clone(), ns, counts, None))
}

/// Fixed-set estimation: ML over the cells of the partition induced by `a`.
pub fn simulate_fs_ml(
    model: &SourceModel,
    a: &Subset,
    tau_true: usize,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SimReport, SimError> {
    let cells = theta1_partition(model, a).cells;
    simulate_ml_cells(model, a, cells, tau_true, ns, trials, seed)
}

/// Independent-random first phase: every k-subset is observed for N instants
/// in turn, then ML over the finer partition.
pub fn simulate_irs_phase1(
    model: &SourceModel,
    k: usize,
    tau_true: usize,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SimReport, SimError> {
    check_tau(model, tau_true)?;
    let subsets = model.k_subsets(k);
    if subsets.is_empty() {
        return Err(SimError::Invalid(format!("no {k}-subsets of {} components", model.m())));
    }
    let ns = checked_lengths(ns, trials)?;
    let n_max = *ns.last().unwrap();
    let tables: Vec<Vec<Vec<f64>>> =
        subsets.iter().map(|a| (0..model.num_theta()).map(|t| log_table(&model.marginal(t, a))).collect()).collect();
    let classifier = CellClassifier::new(model, theta2_partition(model, k).cells);
    let counts = run(&classifier, tau_true, &ns, trials, seed, |rng| {
        let mut total = vec![vec![0.0; model.num_theta()]; ns.len()];
        for (a, tab) in subsets.iter().zip(&tables) {
            let obs: Vec<usize> = draws(model, tau_true, n_max, rng).iter().map(|&x| model.project(x, a)).collect();
            for (t, part) in total.iter_mut().zip(prefix_loglik(tab, &obs, &ns)) {
                t.iter_mut().zip(part).for_each(|(x, y)| *x += y);
            }
        }
        total
    });
    let effective = ns.iter().map(|n| n * subsets.len()).collect();
    Ok(report("irs-phase1", tau_true, seed, trials, ns, effective, counts, None))
}

/// ML over the parameters from the full joint sequence.
pub fn simulate_full_ml(model: &SourceModel, tau_true: usize, ns: &[usize], trials: usize, seed: u64) -> Result<SimReport, SimError> {
    check_tau(model, tau_true)?;
    let ns = checked_lengths(ns, trials)?;
    let n_max = *ns.last().unwrap();
    let tables: Vec<Vec<f64>> = (0..model.num_theta()).map(|t| log_table(model.pmf(t))).collect();
    let classifier = CellClassifier::new(model, full_partition(model).cells);
    let counts = run(&classifier, tau_true, &ns, trials, seed, |rng| prefix_loglik(&tables, &draws(model, tau_true, n_max, rng), &ns));
    Ok(report("full-ml", tau_true, seed, trials, ns.clone(), ns, counts, None))
}

/// How the sampling sequence carries the joint symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalingPlan {
    /// Each joint symbol has its own sampling set.
    OneToOne,
    /// Symbols are split into chunks of `per_chunk`; the last set means "not in this chunk".
    Chunked { chunks: usize, per_chunk: usize },
}

pub fn signaling_plan(sets: usize, symbols: usize) -> Result<SignalingPlan, SimError> {
    if sets >= symbols {
        Ok(SignalingPlan::OneToOne)
    } else if sets <= 1 {
        Err(SimError::SignalingImpossible { symbols })
    } else {
        let per_chunk = sets - 1;
        Ok(SignalingPlan::Chunked { chunks: symbols.div_ceil(per_chunk), per_chunk })
    }
}

/// Memoryless-random estimation: the parameter is guessed from the sampling
/// sequence alone.
///
/// One-to-one: joint symbol x is signalled by the x-th k-subset, so the sequence
/// reveals X_M^n exactly. Chunked: chunk j (symbols in lexicographic order) runs
/// for N instants, each revealing the symbol if it lies in the chunk and only
/// "elsewhere" otherwise.
pub fn simulate_mrs_signaling(
    model: &SourceModel,
    k: usize,
    tau_true: usize,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SimReport, SimError> {
    check_tau(model, tau_true)?;
    let sets = model.k_subsets(k).len();
    let symbols = model.joint_size();
    let plan = signaling_plan(sets, symbols)?;
    let ns = checked_lengths(ns, trials)?;
    let n_max = *ns.last().unwrap();
    let thetas = model.num_theta();
    let classifier = CellClassifier::new(model, full_partition(model).cells);
    match plan {
        SignalingPlan::OneToOne => {
            let tables: Vec<Vec<f64>> = (0..thetas).map(|t| log_table(model.pmf(t))).collect();
            // The set index is the symbol index, so decoding the sequence is the identity.
            let counts = run(&classifier, tau_true, &ns, trials, seed, |rng| {
                let signalled = draws(model, tau_true, n_max, rng);
                prefix_loglik(&tables, &signalled, &ns)
            });
            Ok(report("mrs-signaling", tau_true, seed, trials, ns.clone(), ns, counts, None))
        }
        SignalingPlan::Chunked { chunks, per_chunk } => {
            // Per chunk: observation alphabet is the chunk's symbols plus "elsewhere".
            let tables: Vec<Vec<Vec<f64>>> = (0..chunks)
                .map(|j| {
                    let members: Vec<usize> = (j * per_chunk..((j + 1) * per_chunk).min(symbols)).collect();
                    (0..thetas)
                        .map(|t| {
                            let pmf = model.pmf(t);
                            let inside: f64 = members.iter().map(|&x| pmf[x]).sum();
                            let mut row: Vec<f64> = members.iter().map(|&x| pmf[x].ln()).collect();
                            row.push((1.0 - inside).max(0.0).ln());
                            row
                        })
                        .collect()
                })
                .collect();
            let counts = run(&classifier, tau_true, &ns, trials, seed, |rng| {
                let mut total = vec![vec![0.0; thetas]; ns.len()];
                for (j, tab) in tables.iter().enumerate() {
                    let obs: Vec<usize> = draws(model, tau_true, n_max, rng)
                        .into_iter()
                        .map(|x| if x / per_chunk == j { x % per_chunk } else { tab[0].len() - 1 })
                        .collect();
                    for (t, part) in total.iter_mut().zip(prefix_loglik(tab, &obs, &ns)) {
                        t.iter_mut().zip(part).for_each(|(x, y)| *x += y);
                    }
                }
                total
            });
            let effective = ns.iter().map(|n| n * chunks).collect();
            Ok(report("mrs-signaling", tau_true, seed, trials, ns, effective, counts, Some(chunks)))
        }
    }
}
