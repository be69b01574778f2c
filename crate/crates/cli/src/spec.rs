//! Parsing of the sampler selector and the distortion grid.

use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use usrd_core::report::{linspace, SamplerSpec};
use usrd_core::{SourceModel, Subset};

/// `fs:1,2`, `fs:{1,2}`, `irs` or `mrs`. Set labels are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SamplerArg {
    Fixed(Vec<usize>),
    Independent,
    Memoryless,
}

impl FromStr for SamplerArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "irs" => Ok(SamplerArg::Independent),
            "mrs" => Ok(SamplerArg::Memoryless),
            _ => {
                let rest = s.strip_prefix("fs:").ok_or_else(|| anyhow!("unknown sampler {s:?}; expected fs:<set>, irs or mrs"))?;
                let rest = rest.trim_start_matches('{').trim_end_matches('}');
                let labels = rest
                    .split(',')
                    .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad component label {t:?}")))
                    .collect::<Result<Vec<_>>>()?;
                if labels.is_empty() || labels.contains(&0) {
                    bail!("component labels are 1-based and the set must be nonempty");
                }
                Ok(SamplerArg::Fixed(labels))
            }
        }
    }
}

impl SamplerArg {
    /// Resolves against a model; a fixed set also fixes k.
    pub fn resolve(&self, model: &SourceModel) -> Result<SamplerSpec> {
        match self {
            SamplerArg::Fixed(labels) => {
                let a = Subset::from_one_based(labels).ok_or_else(|| anyhow!("bad set"))?;
                if a.components().iter().any(|&c| c >= model.m()) {
                    bail!("set {a} names a component beyond m = {}", model.m());
                }
                Ok(SamplerSpec::Fixed(a))
            }
            SamplerArg::Independent => Ok(SamplerSpec::Independent),
            SamplerArg::Memoryless => Ok(SamplerSpec::Memoryless),
        }
    }
}

/// `min:max:count`, a comma-separated list, or `auto`.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Range { lo: f64, hi: f64, count: usize },
    List(Vec<f64>),
    Auto,
}

pub const AUTO_POINTS: usize = 17;

impl FromStr for GridSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(GridSpec::Auto);
        }
        let num = |t: &str| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?} in grid spec"));
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            let [lo, hi, count] = parts[..] else { bail!("range grid must be min:max:count") };
            let count: usize = count.trim().parse().context("bad point count")?;
            if count == 0 {
                bail!("grid count must be at least 1");
            }
            let (lo, hi) = (num(lo)?, num(hi)?);
            if hi < lo {
                bail!("grid max {hi} is below min {lo}");
            }
            return Ok(GridSpec::Range { lo, hi, count });
        }
        let list = s.split(',').map(num).collect::<Result<Vec<_>>>()?;
        Ok(GridSpec::List(list))
    }
}

impl GridSpec {
    /// Concrete points; `auto` spans the given bounds.
    pub fn points(&self, bounds: (f64, f64)) -> Vec<f64> {
        match self {
            GridSpec::Range { lo, hi, count } => linspace(*lo, *hi, *count),
            GridSpec::List(v) => v.clone(),
            GridSpec::Auto => linspace(bounds.0, bounds.1, AUTO_POINTS),
        }
    }
}

/// Comma-separated positive blocklengths.
pub fn parse_lengths(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(|t| t.trim().parse::<usize>().with_context(|| format!("bad blocklength {t:?}"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_forms() {
        assert_eq!("fs:1,2".parse::<SamplerArg>().unwrap(), SamplerArg::Fixed(vec![1, 2]));
        assert_eq!("fs:{2}".parse::<SamplerArg>().unwrap(), SamplerArg::Fixed(vec![2]));
        assert_eq!("mrs".parse::<SamplerArg>().unwrap(), SamplerArg::Memoryless);
        assert!("fs:0".parse::<SamplerArg>().is_err());
        assert!("random".parse::<SamplerArg>().is_err());
    }

    #[test]
    fn grid_forms() {
        assert_eq!("0.1:0.3:3".parse::<GridSpec>().unwrap().points((0.0, 1.0)).len(), 3);
        assert_eq!("0.1,0.2".parse::<GridSpec>().unwrap(), GridSpec::List(vec![0.1, 0.2]));
        assert_eq!("auto".parse::<GridSpec>().unwrap().points((0.0, 1.0)).len(), AUTO_POINTS);
        assert!("0.1:0.3:0".parse::<GridSpec>().is_err());
        assert!("0.3:0.1:4".parse::<GridSpec>().is_err());
    }
}
