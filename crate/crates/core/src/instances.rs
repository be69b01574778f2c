//! Builders for small closed-form benchmark families.
//!
//! Binary parameters are "probability of a one": `Bern(p)` puts mass `p` on 1.

use crate::model::{validate_model, RawModel, SourceModel};

fn uniform_prior(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn build(
    alphabets: Vec<usize>,
    recovery_set: Vec<usize>,
    reproduction_alphabets: Vec<usize>,
    pmfs: Vec<Vec<f64>>,
    prior: Option<&[f64]>,
    distortion: Vec<f64>,
) -> SourceModel {
    let n = pmfs.len();
    let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    let raw = RawModel {
        m: alphabets.len(),
        alphabets,
        recovery_set,
        prior: prior.map(<[f64]>::to_vec).unwrap_or_else(|| uniform_prior(n)),
        family: labels.iter().cloned().zip(pmfs).collect(),
        theta_labels: labels,
        distortion,
        reproduction_alphabets,
    };
    validate_model(raw).expect("benchmark family must be valid")
}

/// 1 unless the pair matches exactly, on a four-letter pair alphabet.
fn pair_error() -> Vec<f64> {
    (0..16).map(|i| if i / 4 == i % 4 { 0.0 } else { 1.0 }).collect()
}

/// Number of coordinates that differ, on a four-letter pair alphabet.
fn pair_hamming() -> Vec<f64> {
    (0..16)
        .map(|i| {
            let (x, y) = (i / 4, i % 4);
            f64::from(u8::from(x / 2 != y / 2) + u8::from(x % 2 != y % 2))
        })
        .collect()
}

/// X1 ~ Bern(p), X2 = X1 xor Bern(q); both components recovered under probability of error.
pub fn virtual_bsc(p: &[f64], q: &[f64], prior: Option<&[f64]>) -> SourceModel {
    assert_eq!(p.len(), q.len());
    let pmfs = p.iter().zip(q).map(|(&p, &q)| vec![(1.0 - p) * (1.0 - q), (1.0 - p) * q, p * q, p * (1.0 - q)]).collect();
    build(vec![2, 2], vec![1, 2], vec![2, 2], pmfs, prior, pair_error())
}

/// Independent X1 ~ Bern(p), X2 ~ Bern(q); distortion counts coordinate errors.
pub fn independent_bits(p: &[f64], q: &[f64], prior: Option<&[f64]>) -> SourceModel {
    assert_eq!(p.len(), q.len());
    let pmfs = p.iter().zip(q).map(|(&p, &q)| vec![(1.0 - p) * (1.0 - q), (1.0 - p) * q, p * (1.0 - q), p * q]).collect();
    build(vec![2, 2], vec![1, 2], vec![2, 2], pmfs, prior, pair_hamming())
}

/// X1 uniform, X2 = X1 xor Bern(q), X3 = X1 xor X2, recovered target X1 xor X2.
///
/// The exact family has zero-mass symbols, so it is mixed with the uniform pmf
/// at weight `eps`; X1 and X2 stay uniform for every member.
pub fn xor_triple(q: &[f64], eps: f64) -> SourceModel {
    let pmfs = q
        .iter()
        .map(|&q| {
            (0..8)
                .map(|x| {
                    let (x1, x2, x3) = (x >> 2 & 1, x >> 1 & 1, x & 1);
                    let exact = if x3 == x1 ^ x2 { 0.5 * if x1 == x2 { 1.0 - q } else { q } } else { 0.0 };
                    (1.0 - eps) * exact + eps / 8.0
                })
                .collect()
        })
        .collect();
    let distortion = (0..16)
        .map(|i| {
            let (x, y) = (i / 4, i % 4);
            f64::from(u8::from(((x / 2) ^ (x % 2)) != ((y / 2) ^ (y % 2))))
        })
        .collect();
    build(vec![2, 2, 2], vec![1, 2], vec![2, 2], pmfs, None, distortion)
}

/// A single binary source under Hamming distortion, one member per bias.
pub fn binary_hamming(p: &[f64], prior: Option<&[f64]>) -> SourceModel {
    let pmfs = p.iter().map(|&p| vec![1.0 - p, p]).collect();
    build(vec![2], vec![1], vec![2], pmfs, prior, vec![0.0, 1.0, 1.0, 0.0])
}

/// An arbitrary single-member family with a user-supplied distortion table.
pub fn single_member(
    alphabets: Vec<usize>,
    recovery_set: Vec<usize>,
    reproduction: Vec<usize>,
    pmf: Vec<f64>,
    distortion: Vec<f64>,
) -> SourceModel {
    build(alphabets, recovery_set, reproduction, vec![pmf], None, distortion)
}
