//! Selection of the dictionary scale factor `R`.
//!
//! For a candidate `R` the dictionary columns are multiplied by `R` and the
//! problem is solved at the fixed radius `D^(1/q - 1)`. Large `R` leaves the
//! fitted norm far inside the ball; `R` is then decreased until the fitted
//! norm lands in `[target - epsilon, target)`. Fitting with scale `R` at radius
//! `rho` is the same problem as the unscaled dictionary at radius `R * rho`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::scaled_radius;
use crate::solver::{fit, FitReport, QuadraticObjective, SolverOptions};

/// "Far inside" the ball: the starting `R` must give a norm below this
/// fraction of the target.
pub const START_FRACTION: f64 = 0.5;
/// Default band width as a fraction of the target norm.
pub const DEFAULT_RELATIVE_EPSILON: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningOptions {
    #[serde(default = "default_doublings")]
    pub max_doublings: usize,
    /// Also bounds the halvings of the descent phase.
    #[serde(default = "default_bisections")]
    pub max_bisections: usize,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_doublings() -> usize {
    60
}

fn default_bisections() -> usize {
    40
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            max_doublings: default_doublings(),
            max_bisections: default_bisections(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningStep {
    pub r: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub r: f64,
    pub q: f64,
    pub achieved_norm: f64,
    pub target: f64,
    pub epsilon: f64,
    /// `R * D^(1/q - 1)`, the radius of the equivalent unscaled problem.
    pub equivalent_radius: f64,
    /// False when the band was never hit; `r` is then the smallest tried
    /// value whose norm stayed below the target.
    pub exact: bool,
    /// Every evaluated `(R, norm)` in evaluation order.
    pub trace: Vec<TuningStep>,
    /// Fit at `r` in the scaled dictionary (coefficients multiply columns
    /// scaled by `r`).
    #[serde(skip)]
    pub fit: Option<FitReport>,
}

impl TuningResult {
    /// The selected fit mapped back to the unscaled dictionary.
    pub fn unscaled_fit(&self) -> Option<FitReport> {
        self.fit.as_ref().map(|f| f.rescaled(self.r))
    }
}

/// Fits `objective` with columns scaled by `r` at radius `D^(1/q - 1)`.
pub fn fit_scaled(objective: &QuadraticObjective, q: f64, r: f64, opts: &SolverOptions) -> Result<FitReport> {
    let target = scaled_radius(objective.dim(), q, 1.0);
    fit(&objective.scaled(r), q, target, opts)
}

/// Band `[target - epsilon, target)` search over `R`; `epsilon` defaults to
/// `0.02 * target`.
pub fn tune_r(
    objective: &QuadraticObjective,
    q: f64,
    epsilon: Option<f64>,
    opts: &TuningOptions,
) -> Result<TuningResult> {
    let target = scaled_radius(objective.dim(), q, 1.0);
    let epsilon = epsilon.unwrap_or(DEFAULT_RELATIVE_EPSILON * target);
    if !(epsilon > 0.0 && epsilon < target) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must lie in (0, {target})"
        )));
    }
    if objective.targets().iter().all(|&y| y == 0.0) {
        return Err(Error::DegenerateData("output is identically zero".into()));
    }
    let lower = target - epsilon;
    let mut trace = Vec::new();
    let mut eval = |r: f64| -> Result<(f64, FitReport)> {
        let rep = fit_scaled(objective, q, r, &opts.solver)?;
        trace.push(TuningStep { r, norm: rep.norm_q });
        Ok((rep.norm_q, rep))
    };
    let in_band = |n: f64| n >= lower && n < target;

    // Find R_hi with norm far inside the ball, doubling from 1.
    let mut r = 1.0;
    let (mut norm, mut rep) = eval(r)?;
    let mut doublings = 0;
    while norm >= START_FRACTION * target {
        if doublings == opts.max_doublings {
            return Err(Error::DegenerateData(format!(
                "fitted norm still {norm} after {doublings} doublings of R"
            )));
        }
        r *= 2.0;
        (norm, rep) = eval(r)?;
        doublings += 1;
    }

    // Descend by halving until the norm reaches the band (or overshoots it).
    let mut hi = (r, norm, rep);
    let mut lo: Option<(f64, f64, FitReport)> = None;
    for _ in 0..opts.max_bisections {
        let r = hi.0 / 2.0;
        let (n, rep) = eval(r)?;
        if in_band(n) {
            return Ok(finish(q, target, epsilon, r, n, true, trace, rep));
        }
        if n >= target {
            lo = Some((r, n, rep));
            break;
        }
        hi = (r, n, rep);
    }
    let Some(mut lo) = lo else {
        return Ok(finish(q, target, epsilon, hi.0, hi.1, false, trace, hi.2));
    };

    // Bisect between the last R below the band and the first R at the target.
    for _ in 0..opts.max_bisections {
        let r = 0.5 * (lo.0 + hi.0);
        let (n, rep) = eval(r)?;
        if in_band(n) {
            return Ok(finish(q, target, epsilon, r, n, true, trace, rep));
        }
        if n >= target {
            lo = (r, n, rep);
        } else {
            hi = (r, n, rep);
        }
    }
    Ok(finish(q, target, epsilon, hi.0, hi.1, false, trace, hi.2))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    q: f64,
    target: f64,
    epsilon: f64,
    r: f64,
    norm: f64,
    exact: bool,
    trace: Vec<TuningStep>,
    fit: FitReport,
) -> TuningResult {
    TuningResult {
        r,
        q,
        achieved_norm: norm,
        target,
        epsilon,
        equivalent_radius: r * target,
        exact,
        trace,
        fit: Some(fit),
    }
}
