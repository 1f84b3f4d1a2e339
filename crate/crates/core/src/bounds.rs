//! Upper bounds on the aggregation error `E{Q(theta_hat)} - Q(theta*)`.
//!
//! All three share the shape `C * sqrt(N)/(N - tau) * sqrt((tau + 1) ln D)`
//! with `C = 32 sqrt(e) (s M sigma + 2 (s M)^2)`; they differ in the effective
//! magnitude scale `s`:
//!
//! * [`bound_theorem1`]: `s = 1`.
//! * [`bound_scaled`]: `s = R`, the tuned dictionary scale.
//! * [`bound_q_penalty`]: `s = D^(1 - 1/q)` (or `K^(1 - 1/q)` for a `K`-sparse
//!   system), the price of imposing the `q = 1` guarantee on a `q > 1` ball.
//!
//! Not computed: the infinite-memory variant, which picks up an extra
//! `sqrt(ln N)` factor and an `N^(-c)` term.

use serde::{Deserialize, Serialize};

use crate::dictionary::RegressorMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub n: usize,
    pub tau: usize,
    pub d: usize,
    /// `max{M_m, M_d}`: bound on the system output and on every dictionary term.
    pub m: f64,
    pub sigma: f64,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default)]
    pub k: Option<usize>,
}

fn one() -> f64 {
    1.0
}

impl BoundParams {
    pub fn new(n: usize, tau: usize, d: usize, m: f64, sigma: f64) -> Self {
        Self {
            n,
            tau,
            d,
            m,
            sigma,
            r: 1.0,
            k: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n <= self.tau {
            return Err(Error::Domain(format!("need N > tau, got N = {}, tau = {}", self.n, self.tau)));
        }
        if self.d <= 2 {
            return Err(Error::Domain(format!("the bound holds for D > 2, got D = {}", self.d)));
        }
        if !(self.m >= 0.0 && self.sigma >= 0.0) {
            return Err(Error::Domain("M and sigma must be nonnegative".into()));
        }
        if !(self.r > 0.0) {
            return Err(Error::Domain("R must be positive".into()));
        }
        if let Some(k) = self.k {
            if k == 0 || k > self.d {
                return Err(Error::Domain(format!("sparsity K = {k} must lie in [1, D]")));
            }
        }
        Ok(())
    }

    fn rate(&self) -> f64 {
        let n = self.n as f64;
        n.sqrt() / (n - self.tau as f64) * ((self.tau as f64 + 1.0) * (self.d as f64).ln()).sqrt()
    }
}

/// `32 sqrt(e) (s M sigma + 2 (s M)^2)`.
pub fn constant(scale: f64, m: f64, sigma: f64) -> f64 {
    let sm = scale * m;
    32.0 * std::f64::consts::E.sqrt() * (sm * sigma + 2.0 * sm * sm)
}

/// Bound for a system meeting the constraint as is (`R` must be 1).
pub fn bound_theorem1(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    if p.r != 1.0 {
        return Err(Error::Domain(format!("bound_theorem1 needs R = 1, got {}", p.r)));
    }
    Ok(constant(1.0, p.m, p.sigma) * p.rate())
}

/// Bound with the dictionary scaled by `R`.
pub fn bound_scaled(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    Ok(constant(p.r, p.m, p.sigma) * p.rate())
}

/// Bound for a `q > 1` ball when the constraint is only known for `q = 1`.
pub fn bound_q_penalty(p: &BoundParams, q: f64) -> Result<f64> {
    p.validate()?;
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("q = {q} must be at least 1")));
    }
    let base = p.k.unwrap_or(p.d) as f64;
    let scale = base.powf(1.0 - 1.0 / q);
    Ok(constant(scale, p.m, p.sigma) * p.rate())
}

/// Data-driven `M`: the larger of `max |y|` and the largest regressor magnitude.
pub fn estimate_magnitude(y: &[f64], regressors: &RegressorMatrix) -> f64 {
    let my = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    my.max(regressors.max_abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    Given,
    /// RMS residual on a held-out tail of an unconstrained least-squares fit
    /// on the head.
    HeldOutResiduals,
}

/// Estimates the noise level from an unconstrained fit on the first
/// `1 - holdout` fraction of rows, scored on the rest.
pub fn estimate_sigma(regressors: &RegressorMatrix, y: &[f64], holdout: f64) -> Result<f64> {
    if y.len() != regressors.rows() {
        return Err(Error::DimensionMismatch {
            expected: regressors.rows(),
            found: y.len(),
        });
    }
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(Error::InvalidArgument(format!("holdout fraction {holdout} must lie in (0, 1)")));
    }
    let rows = regressors.rows();
    let train = ((1.0 - holdout) * rows as f64).round() as usize;
    if train == 0 || train >= rows {
        return Err(Error::DegenerateData("too few rows to hold out a slice".into()));
    }
    let d = regressors.cols();
    let head = RegressorMatrix::from_row_major(regressors.as_slice()[..train * d].to_vec(), train, d)?;
    let theta = crate::linalg::min_norm_least_squares(&head, &y[..train], None)?;
    let ss: f64 = (train..rows)
        .map(|i| {
            let r = crate::linalg::dot(regressors.row(i), &theta) - y[i];
            r * r
        })
        .sum();
    Ok((ss / (rows - train) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BoundParams {
        BoundParams::new(1000, 10, 861, 1.5, 0.3)
    }

    /// Direct transcription kept separate from the library path.
    fn reference(n: f64, tau: f64, d: f64, m: f64, sigma: f64) -> f64 {
        let c = 32.0 * (1f64).exp().sqrt() * (m * sigma + 2.0 * m.powi(2));
        c * (n.sqrt() / (n - tau)) * ((tau + 1.0) * d.ln()).sqrt()
    }

    #[test]
    fn zero_magnitude_gives_zero() {
        let mut p = base();
        p.m = 0.0;
        assert_eq!(bound_theorem1(&p).unwrap(), 0.0);
    }

    #[test]
    fn squaring_d_multiplies_by_sqrt2() {
        let mut p = base();
        p.d = 30;
        let a = bound_theorem1(&p).unwrap();
        p.d = 900;
        let b = bound_theorem1(&p).unwrap();
        assert!((b / a - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matches_independent_evaluation() {
        let p = BoundParams::new(1000, 0, 8, 1.0, 0.0);
        let v = bound_theorem1(&p).unwrap();
        let r = reference(1000.0, 0.0, 8.0, 1.0, 0.0);
        assert!((v - r).abs() <= 1e-12 * r);
        // 64 sqrt(e) / sqrt(1000) * sqrt(ln 8)
        assert!((v - 4.811722498996528).abs() < 1e-12, "{v}");
    }

    #[test]
    fn domain_errors() {
        let mut p = base();
        p.d = 2;
        assert!(matches!(bound_theorem1(&p), Err(Error::Domain(_))));
        let mut p = base();
        p.n = 10;
        assert!(bound_theorem1(&p).is_err());
        let mut p = base();
        p.k = Some(0);
        assert!(bound_q_penalty(&p, 2.0).is_err());
        let mut p = base();
        p.r = 2.0;
        assert!(bound_theorem1(&p).is_err());
        assert!(bound_scaled(&p).is_ok());
    }

    #[test]
    fn scaled_and_penalty_reductions() {
        let p = base();
        assert_eq!(bound_scaled(&p).unwrap(), bound_theorem1(&p).unwrap());
        assert_eq!(bound_q_penalty(&p, 1.0).unwrap(), bound_theorem1(&p).unwrap());
        let mut small = base();
        small.r = 1e-9;
        assert!(bound_scaled(&small).unwrap() < 1e-6);
    }

    #[test]
    fn sparse_single_term_has_no_inflation() {
        let mut p = base();
        p.k = Some(1);
        for q in [1.0, 1.5, 2.0, 4.0] {
            assert_eq!(bound_q_penalty(&p, q).unwrap(), bound_theorem1(&p).unwrap());
        }
    }

    #[test]
    fn magnitude_estimate() {
        let s = RegressorMatrix::from_row_major(vec![1.0, -4.0, 2.0, 0.5], 2, 2).unwrap();
        assert_eq!(estimate_magnitude(&[3.0, -1.0], &s), 4.0);
        assert_eq!(estimate_magnitude(&[-7.0, 1.0], &s), 7.0);
    }

    #[test]
    fn sigma_estimate_on_noiseless_linear_data() {
        let rows = 60;
        let vals: Vec<f64> = (0..rows * 3).map(|i| ((i * 13 % 7) as f64) - 3.0 + (i as f64 * 0.01)).collect();
        let s = RegressorMatrix::from_row_major(vals, rows, 3).unwrap();
        let y = s.mul_vec(&[1.0, -0.5, 0.25]);
        assert!(estimate_sigma(&s, &y, 0.25).unwrap() < 1e-9);
    }
}
