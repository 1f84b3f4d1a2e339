//! Model scoring: RMS error, coefficient sparsity curves, kernel slices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dictionary::VolterraStructure;
use crate::error::{Error, Result};

pub const DEFAULT_CURVE_POINTS: usize = 64;
pub const DEFAULT_CURVE_FLOOR: f64 = 1e-8;

/// `sqrt(mean((y - y_hat)^2))`.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation window".into()));
    }
    let ss: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// `counts[i] = #{j : |theta_j| > thresholds[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityCurve {
    pub thresholds: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SparsityCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["threshold", "count"])?;
        for (t, c) in self.thresholds.iter().zip(&self.counts) {
            w.write_record([t.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn sparsity_curve(theta: &[f64], thresholds: &[f64]) -> Result<SparsityCurve> {
    if thresholds.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("thresholds must be positive".into()));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("thresholds must be strictly increasing".into()));
    }
    let mut mags: Vec<f64> = theta.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(f64::total_cmp);
    let counts = thresholds
        .iter()
        .map(|&t| mags.len() - mags.partition_point(|&m| m <= t))
        .collect();
    Ok(SparsityCurve {
        thresholds: thresholds.to_vec(),
        counts,
    })
}

/// `points` log-spaced thresholds from `floor` to `max |theta_i|`. Falls back
/// to the single threshold `floor` when every coefficient is below it.
pub fn default_thresholds(theta: &[f64], points: usize, floor: f64) -> Vec<f64> {
    let top = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top <= floor || points < 2 {
        return vec![floor];
    }
    let (a, b) = (floor.ln(), top.ln());
    let mut out: Vec<f64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect();
    out[0] = floor;
    out[points - 1] = top;
    out.dedup_by(|x, y| x <= y);
    out
}

/// One-dimensional cut through a symmetric kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSlice {
    /// `h_{k,...,k}` for `k = 0..L_p`.
    Diagonal,
    /// `h(fixed..., k)` for `k = 0..L_p`, with `p - 1` lags held fixed.
    Axis { fixed: Vec<usize> },
}

/// Symmetric kernel entries along a slice. A stored coefficient folds all
/// distinct permutations of its lags, so the kernel entry is the coefficient
/// divided by that multiplicity (diagonal entries are stored verbatim).
pub fn kernel_slice(
    theta: &[f64],
    structure: &VolterraStructure,
    order: usize,
    slice: &KernelSlice,
) -> Result<Vec<f64>> {
    let d = structure.count_params()?;
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: theta.len(),
        });
    }
    if order == 0 || order > structure.degree() {
        return Err(Error::InvalidArgument(format!(
            "order {order} outside 1..={}",
            structure.degree()
        )));
    }
    let l = structure.memory_lengths()[order - 1];
    let fixed: &[usize] = match slice {
        KernelSlice::Diagonal => &[],
        KernelSlice::Axis { fixed } => {
            if fixed.len() + 1 != order {
                return Err(Error::InvalidArgument(format!(
                    "order {order} slice needs {} fixed lags, got {}",
                    order - 1,
                    fixed.len()
                )));
            }
            if let Some(k) = fixed.iter().find(|&&k| k >= l) {
                return Err(Error::InvalidArgument(format!("fixed lag {k} outside 0..{l}")));
            }
            fixed
        }
    };
    (0..l)
        .map(|k| {
            let lags = match slice {
                KernelSlice::Diagonal => vec![k; order],
                KernelSlice::Axis { .. } => {
                    let mut v = fixed.to_vec();
                    v.push(k);
                    v
                }
            };
            let pos = structure
                .term_position(&lags)
                .ok_or_else(|| Error::InvalidArgument(format!("lags {lags:?} not in the dictionary")))?;
            let m = crate::dictionary::MultiIndex::from_lags(lags).multiplicity();
            Ok(theta[pos] / m as f64)
        })
        .collect()
}
