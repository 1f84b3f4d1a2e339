//! `l_q`-constrained empirical least squares:
//! minimize `Q(theta)` subject to `||theta||_q <= r`.
//!
//! The primary path is Frank-Wolfe with exact line search, started at the
//! origin. Its linear subproblem has a closed form for every `q >= 1`, so no
//! projection onto the `l_q` ball is ever needed. A projected-gradient path
//! (l_1 only) is kept as an independent cross-check.

mod frank_wolfe;
mod lmo;
mod objective;
mod projected;

use serde::{Deserialize, Serialize};

pub use frank_wolfe::frank_wolfe;
pub use lmo::{lmo, project_l1};
pub use objective::{CachePolicy, NormalEquations, QuadraticObjective};
pub use projected::projected_gradient;

use crate::dictionary::CoefficientVector;
use crate::error::{Error, Result};
use crate::norms::{norm_1, norm_q};

/// Gap tolerance relative to `Q(0)` when none is given.
pub const DEFAULT_RELATIVE_GAP_TOL: f64 = 1e-8;
/// Iteration cap per dictionary entry when none is given.
pub const DEFAULT_ITERS_PER_PARAM: usize = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    #[default]
    FrankWolfe,
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Absolute duality-gap tolerance; defaults to `1e-8 * Q(0)`.
    #[serde(default)]
    pub gap_tol: Option<f64>,
    /// Defaults to `50 * D`.
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub path: SolverPath,
    #[serde(default)]
    pub cache: CachePolicy,
    /// Away steps on the `l_1` ball (ignored for `q > 1`).
    #[serde(default = "default_true")]
    pub away_steps: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: None,
            max_iters: None,
            path: SolverPath::default(),
            cache: CachePolicy::default(),
            away_steps: true,
        }
    }
}

impl SolverOptions {
    pub fn resolved_gap_tol(&self, objective: &QuadraticObjective) -> f64 {
        self.gap_tol
            .unwrap_or(DEFAULT_RELATIVE_GAP_TOL * objective.initial_value())
    }

    pub fn resolved_max_iters(&self, dim: usize) -> usize {
        self.max_iters.unwrap_or(DEFAULT_ITERS_PER_PARAM * dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub objective: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: CoefficientVector,
    /// Final `Q(theta)`, from the residuals.
    pub objective: f64,
    /// Final Frank-Wolfe duality gap; bounds `objective - optimum`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub path: SolverPath,
    pub norm_q: f64,
    pub norm_1: f64,
    /// `(objective, gap)` at every visited iterate, starting at the origin.
    pub trace: Vec<TraceEntry>,
}

impl FitReport {
    pub(crate) fn assemble(
        objective: &QuadraticObjective,
        theta: Vec<f64>,
        q: f64,
        radius: f64,
        gap: f64,
        iterations: usize,
        converged: bool,
        path: SolverPath,
        trace: Vec<TraceEntry>,
    ) -> Result<Self> {
        let value = objective.value(&theta)?;
        Ok(Self {
            norm_q: norm_q(&theta, q),
            norm_1: norm_1(&theta),
            coefficients: CoefficientVector::new(theta, q, radius),
            objective: value,
            gap: gap.max(0.0),
            iterations,
            converged,
            path,
            trace,
        })
    }

    /// Maps a fit made with dictionary columns multiplied by `factor` back to
    /// the unscaled dictionary: coefficients and radius are multiplied by
    /// `factor`; objective, gap and trace are unchanged.
    pub fn rescaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coefficients.values.iter_mut().for_each(|v| *v *= factor);
        out.coefficients.radius *= factor;
        out.norm_q *= factor;
        out.norm_1 *= factor;
        out
    }
}

pub(crate) fn validate(objective: &QuadraticObjective, q: f64, radius: f64) -> Result<()> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("norm order q = {q} must lie in [1, inf)")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius {radius} must be positive")));
    }
    if objective.samples() == 0 {
        return Err(Error::EmptyDesign { len: 0, tau: 0 });
    }
    Ok(())
}

/// Minimizes `objective` over `||theta||_q <= radius` along the configured path.
/// Hitting the iteration cap is not an error: the report is flagged
/// `converged = false`.
pub fn fit(objective: &QuadraticObjective, q: f64, radius: f64, opts: &SolverOptions) -> Result<FitReport> {
    validate(objective, q, radius)?;
    let obj = objective.recached(opts.cache);
    match opts.path {
        SolverPath::FrankWolfe => frank_wolfe(&obj, q, radius, opts),
        SolverPath::ProjectedGradient => {
            if q != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "projected gradient is only available for q = 1, got q = {q}"
                )));
            }
            projected_gradient(&obj, radius, opts)
        }
    }
}
