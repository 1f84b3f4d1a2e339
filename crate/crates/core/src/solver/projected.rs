use super::lmo::{lmo_vertex, project_l1};
use super::{validate, FitReport, QuadraticObjective, SolverOptions, SolverPath, TraceEntry};
use crate::error::Result;
use crate::linalg::{dot, norm2_sq};

const POWER_ITERS: usize = 200;

/// Projected gradient descent on the `l_1` ball with step `1/L`,
/// `L = 2 lambda_max(A)`. Reports the same Frank-Wolfe gap certificate as the
/// primary path so the two are directly comparable.
pub fn projected_gradient(
    objective: &QuadraticObjective,
    radius: f64,
    opts: &SolverOptions,
) -> Result<FitReport> {
    validate(objective, 1.0, radius)?;
    let dim = objective.dim();
    let gap_tol = opts.resolved_gap_tol(objective);
    let max_iters = opts.resolved_max_iters(dim);
    let engine = objective.engine();
    let grad0 = engine.gradient(&engine.zero_image());
    let hess_mul = |v: &[f64]| -> Vec<f64> {
        let g = engine.gradient(&engine.image(v));
        g.iter().zip(&grad0).map(|(a, b)| a - b).collect()
    };

    // Power iteration for the largest eigenvalue of the Hessian 2A.
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut lipschitz = 0.0;
    for _ in 0..POWER_ITERS {
        let nv = norm2_sq(&v).sqrt();
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let hv = hess_mul(&v);
        lipschitz = dot(&v, &hv);
        v = hv;
    }
    let step = if lipschitz > 0.0 { 1.0 / (1.01 * lipschitz) } else { 1.0 };

    let mut theta = vec![0.0; dim];
    let mut img = engine.zero_image();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut gap;
    loop {
        let grad = engine.gradient(&img);
        let value = engine.value(&theta, &img);
        gap = dot(&grad, &theta) - lmo_vertex(&grad, 1.0, radius).dot(&grad);
        trace.push(TraceEntry { objective: value, gap });
        if gap <= gap_tol {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }
        let trial: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
        theta = project_l1(&trial, radius);
        img = engine.image(&theta);
        iterations += 1;
    }
    FitReport::assemble(
        objective,
        theta,
        1.0,
        radius,
        gap,
        iterations,
        converged,
        SolverPath::ProjectedGradient,
        trace,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::RegressorMatrix;
    use crate::solver::frank_wolfe;

    #[test]
    fn agrees_with_frank_wolfe() {
        let n = 40;
        let d = 6;
        let vals: Vec<f64> = (0..n * d).map(|i| ((i * 53 % 23) as f64 - 11.0) / 7.0).collect();
        let s = RegressorMatrix::from_row_major(vals, n, d).unwrap();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.31).cos() * 3.0).collect();
        let obj = QuadraticObjective::new(s, y).unwrap();
        let opts = SolverOptions {
            gap_tol: Some(1e-10),
            max_iters: Some(100_000),
            ..Default::default()
        };
        let a = projected_gradient(&obj, 0.8, &opts).unwrap();
        let b = frank_wolfe(&obj, 1.0, 0.8, &opts).unwrap();
        assert!(a.converged && b.converged, "{} {} {} {}", a.gap, a.iterations, b.gap, b.iterations);
        assert!((a.objective - b.objective).abs() < 1e-9);
        assert!(a.norm_1 <= 0.8 * (1.0 + 1e-12));
    }
}
