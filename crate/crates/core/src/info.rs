//! Entropy helpers in bits.

/// `-p log2 p`, with the convention 0 log 0 = 0.
pub fn neg_plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

pub fn entropy(pmf: &[f64]) -> f64 {
    pmf.iter().map(|&p| neg_plogp(p)).sum()
}

/// Binary entropy h(p); clamps arguments outside [0, 1].
pub fn binary_entropy(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    neg_plogp(p) + neg_plogp(1.0 - p)
}
