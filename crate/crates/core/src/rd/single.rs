//! Single-constraint rate-distortion by bisection on the slope.

use std::collections::BTreeMap;

use super::blahut::{blahut_arimoto, BaOutcome, Kernel};
use super::{RdError, RdOptions, RdPoint, RdSource, TestChannel};
use crate::DistortionTable;

const MAX_BISECT: usize = 200;

/// Memoized solver for one (source, table) pair.
///
/// Evaluated slopes are cached, so repeated queries at nearby distortions or
/// rates reuse earlier brackets.
#[derive(Debug, Clone)]
pub struct SingleSolver {
    src: RdSource,
    table: DistortionTable,
    opts: RdOptions,
    d_min: f64,
    d_max: f64,
    s_max: f64,
    /// Constant reproduction per group attaining `d_max`.
    zero_rate_letters: Vec<usize>,
    cache: BTreeMap<u64, BaOutcome>,
}

/// (slope, distortion, rate) of a solved point; slope 0 stands for the zero-rate end.
#[derive(Debug, Clone, Copy)]
struct Knot {
    slope: f64,
    distortion: f64,
    rate: f64,
}

impl SingleSolver {
    pub fn new(src: RdSource, table: DistortionTable, opts: RdOptions) -> Result<Self, RdError> {
        if src.len() != table.rows() {
            return Err(RdError::DimensionMismatch(format!("source has {} symbols, table {} rows", src.len(), table.rows())));
        }
        if table.cols() == 0 {
            return Err(RdError::DimensionMismatch("empty reproduction alphabet".into()));
        }
        let px = src.px();
        let mut d_min = 0.0;
        let mut gap = f64::INFINITY;
        for (x, &p) in px.iter().enumerate() {
            let row = table.row(x);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            d_min += p * lo;
            for &d in row {
                if d - lo > 1e-12 {
                    gap = gap.min(d - lo);
                }
            }
        }
        let mass = src.group_mass();
        let mut d_max = 0.0;
        let mut zero_rate_letters = Vec::with_capacity(src.groups());
        for (g, &mg) in mass.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for y in 0..table.cols() {
                let e: f64 = (0..src.len()).filter(|&x| src.group_of(x) == g).map(|x| px[x] * table.get(x, y)).sum();
                if e < best.0 - 1e-15 {
                    best = (e, y);
                }
            }
            if mg > 0.0 {
                d_max += best.0;
            }
            zero_rate_letters.push(best.1);
        }
        let s_max = if gap.is_finite() { 50.0 / gap } else { 50.0 };
        Ok(SingleSolver { src, table, opts, d_min, d_max, s_max, zero_rate_letters, cache: BTreeMap::new() })
    }

    pub fn source(&self) -> &RdSource {
        &self.src
    }

    pub fn table(&self) -> &DistortionTable {
        &self.table
    }

    /// (Δ_min, Δ_max): the least achievable distortion and the least zero-rate distortion.
    pub fn bounds(&self) -> (f64, f64) {
        (self.d_min, self.d_max)
    }

    pub fn max_slope(&self) -> f64 {
        self.s_max
    }

    /// Deterministic per-group constant channel attaining Δ_max.
    pub fn zero_rate_channel(&self) -> TestChannel {
        let cols = self.table.cols();
        let mut data = vec![0.0; self.src.len() * cols];
        for x in 0..self.src.len() {
            data[x * cols + self.zero_rate_letters[self.src.group_of(x)]] = 1.0;
        }
        TestChannel::new(self.src.len(), cols, data)
    }

    fn zero_point(&self, delta: f64) -> RdPoint {
        let channel = self.zero_rate_channel();
        let achieved = vec![channel.expected(self.src.px(), &self.table)];
        RdPoint { delta, rate: 0.0, channel, converged: true, iterations: 0, slope: vec![0.0], achieved }
    }

    /// Solves at `slope`, reusing the cache.
    pub fn outcome(&mut self, slope: f64) -> &BaOutcome {
        let key = slope.to_bits();
        if !self.cache.contains_key(&key) {
            let out = blahut_arimoto(&self.src, &self.table, slope, None, &self.opts, false);
            self.cache.insert(key, out);
        }
        &self.cache[&key]
    }

    fn knot(&mut self, slope: f64) -> Knot {
        if slope == 0.0 {
            return Knot { slope, distortion: self.d_max, rate: 0.0 };
        }
        let d_max = self.d_max;
        let o = self.outcome(slope);
        // The zero-rate end dominates any solved point past it.
        Knot { slope, distortion: o.distortion.min(d_max), rate: o.rate }
    }

    fn channel_at(&mut self, slope: f64) -> (TestChannel, bool, usize) {
        if slope == 0.0 {
            return (self.zero_rate_channel(), true, 0);
        }
        let o = self.outcome(slope).clone();
        let kernel = Kernel::new(&self.table, slope);
        (kernel.channel(&self.src, &o.q), o.converged, o.iterations)
    }

    /// Tightest cached bracket around a monotone key; slope 0 and s_max are always valid ends.
    fn cached_bracket(&mut self, below: impl Fn(&Knot) -> bool) -> (Knot, Knot) {
        let mut lo = self.knot(0.0);
        let mut hi = self.knot(self.s_max);
        let knots: Vec<(f64, f64, f64)> = self.cache.values().map(|o| (o.slope, o.distortion.min(self.d_max), o.rate)).collect();
        for (slope, distortion, rate) in knots {
            let k = Knot { slope, distortion, rate };
            if below(&k) {
                if slope > lo.slope {
                    lo = k;
                }
            } else if slope < hi.slope {
                hi = k;
            }
        }
        (lo, hi)
    }

    /// Minimal rate subject to E[d] ≤ delta.
    pub fn at_distortion(&mut self, delta: f64) -> Result<RdPoint, RdError> {
        let tol = self.opts.tol_feas;
        if delta >= self.d_max - tol {
            return Ok(self.zero_point(delta));
        }
        if delta < self.d_min - tol {
            return Err(RdError::InfeasibleDelta { delta, d_min: self.d_min });
        }
        // Distortion decreases in the slope: "below" the target slope means D > delta.
        let (mut lo, mut hi) = self.cached_bracket(|k| k.distortion > delta);
        if hi.distortion > delta {
            // Only the last sliver above Δ_min lies beyond s_max; report the end point.
            let (channel, converged, iterations) = self.channel_at(hi.slope);
            let achieved = vec![channel.expected(self.src.px(), &self.table)];
            return Ok(RdPoint { delta, rate: hi.rate, channel, converged, iterations, slope: vec![hi.slope], achieved });
        }
        for _ in 0..MAX_BISECT {
            if hi.slope - lo.slope <= 1e-13 * hi.slope || (lo.distortion - hi.distortion) <= 1e-13 {
                break;
            }
            let mid = self.knot(0.5 * (lo.slope + hi.slope));
            if mid.distortion > delta {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi.distortion - delta).abs() <= 1e-12 {
                break;
            }
        }
        let rate = interpolate(lo.distortion, lo.rate, hi.distortion, hi.rate, delta);
        let (channel, converged, iterations) = self.channel_at(hi.slope);
        let achieved = vec![channel.expected(self.src.px(), &self.table)];
        Ok(RdPoint { delta, rate, channel, converged, iterations, slope: vec![hi.slope], achieved })
    }

    /// Least distortion with rate at most `rate` (inverse of `at_distortion`).
    pub fn at_rate(&mut self, rate: f64) -> f64 {
        if rate <= 0.0 {
            return self.d_max;
        }
        let (mut lo, mut hi) = self.cached_bracket(|k| k.rate < rate);
        if hi.rate < rate {
            return self.d_min;
        }
        for _ in 0..MAX_BISECT {
            if hi.slope - lo.slope <= 1e-13 * hi.slope || (hi.rate - lo.rate) <= 1e-13 {
                break;
            }
            let mid = self.knot(0.5 * (lo.slope + hi.slope));
            if mid.rate < rate {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi.rate - rate).abs() <= 1e-12 {
                break;
            }
        }
        interpolate(lo.rate, lo.distortion, hi.rate, hi.distortion, rate).max(self.d_min)
    }
}

/// Value at `x` on the chord through (x0, y0) and (x1, y1).
fn interpolate(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    if (x0 - x1).abs() <= f64::EPSILON * (x0.abs() + x1.abs()) {
        return y1;
    }
    let t = ((x0 - x) / (x0 - x1)).clamp(0.0, 1.0);
    y0 + t * (y1 - y0)
}

/// Minimal I(X ∧ Y | G) subject to E[d(X, Y)] ≤ delta.
pub fn rd_single(src: &RdSource, table: &DistortionTable, delta: f64) -> Result<RdPoint, RdError> {
    SingleSolver::new(src.clone(), table.clone(), RdOptions::default())?.at_distortion(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::binary_entropy;

    #[test]
    fn fair_bit_textbook_value() {
        let p = rd_single(&RdSource::new(vec![0.5, 0.5]), &DistortionTable::hamming(2), 0.11).unwrap();
        assert!((p.rate - (1.0 - binary_entropy(0.11))).abs() < 1e-7, "{}", p.rate);
        assert!(p.achieved[0] <= 0.11 + 1e-9);
    }

    #[test]
    fn biased_bit() {
        let p = rd_single(&RdSource::new(vec![0.9, 0.1]), &DistortionTable::hamming(2), 0.05).unwrap();
        let expected = binary_entropy(0.1) - binary_entropy(0.05);
        assert!((p.rate - expected).abs() < 1e-7, "{} vs {expected}", p.rate);
    }

    #[test]
    fn zero_rate_at_dmax() {
        let src = RdSource::new(vec![0.7, 0.3]);
        let p = rd_single(&src, &DistortionTable::hamming(2), 0.3).unwrap();
        assert_eq!(p.rate, 0.0);
        assert!((p.achieved[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn below_dmin_is_infeasible() {
        let table = DistortionTable::plain(2, 2, vec![0.2, 1.0, 1.0, 0.2]);
        let err = rd_single(&RdSource::new(vec![0.5, 0.5]), &table, 0.1).unwrap_err();
        assert!(matches!(err, RdError::InfeasibleDelta { .. }));
    }

    #[test]
    fn inverse_matches_forward() {
        let mut s = SingleSolver::new(RdSource::new(vec![0.8, 0.2]), DistortionTable::hamming(2), RdOptions::default()).unwrap();
        let r = s.at_distortion(0.07).unwrap().rate;
        let d = s.at_rate(r);
        assert!((d - 0.07).abs() < 1e-7, "{d}");
    }

    #[test]
    fn grouped_source_splits_rate() {
        // Two groups of fair and biased bits: rate is the average of the two
        // curves at a common slope, not the curve of the pooled bit.
        let src = RdSource::grouped(vec![0.25, 0.25, 0.45, 0.05], vec![0, 0, 1, 1]);
        let table = DistortionTable::plain(4, 4, {
            let mut v = vec![1.0; 16];
            for x in 0..4 {
                v[x * 4 + x] = 0.0;
            }
            v
        });
        let p = rd_single(&src, &table, 0.05).unwrap();
        assert!(p.rate > 0.0 && p.rate < 1.0);
        assert!(p.achieved[0] <= 0.05 + 1e-7);
    }
}
