use super::lmo::{lmo_vertex, Vertex};
use super::{validate, FitReport, QuadraticObjective, SolverOptions, SolverPath, TraceEntry};
use crate::error::Result;
use crate::linalg::{axpy, dot};
use crate::norms::norm_q;

/// Incrementally updated images drift; recompute from `theta` this often.
const REFRESH_EVERY: usize = 1000;

/// Convex-combination weights of the current iterate over the atoms of the
/// `l_1` ball, `+r e_i`, `-r e_i` and the origin.
struct ActiveSet {
    dim: usize,
    radius: f64,
    weights: Vec<f64>,
    active: Vec<usize>,
}

impl ActiveSet {
    fn new(dim: usize, radius: f64) -> Self {
        let mut weights = vec![0.0; 2 * dim + 1];
        weights[2 * dim] = 1.0;
        Self {
            dim,
            radius,
            weights,
            active: vec![2 * dim],
        }
    }

    fn atom_of(&self, vertex: &Vertex) -> usize {
        match vertex {
            Vertex::Axis { index, value } if *value > 0.0 => *index,
            Vertex::Axis { index, .. } => self.dim + index,
            _ => 2 * self.dim,
        }
    }

    /// Atom as a solver vertex.
    fn vertex(&self, atom: usize) -> Vertex {
        if atom == 2 * self.dim {
            Vertex::Zero
        } else if atom < self.dim {
            Vertex::Axis { index: atom, value: self.radius }
        } else {
            Vertex::Axis { index: atom - self.dim, value: -self.radius }
        }
    }

    /// Active atom maximizing `<grad, v>`.
    fn away_atom(&self, grad: &[f64]) -> Option<(usize, f64)> {
        self.active
            .iter()
            .map(|&a| (a, self.vertex(a).dot(grad)))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
    }

    fn toward(&mut self, atom: usize, gamma: f64) {
        let was_active = self.weights[atom] > 0.0;
        for &a in &self.active {
            self.weights[a] *= 1.0 - gamma;
        }
        if !was_active {
            self.active.push(atom);
        }
        self.weights[atom] += gamma;
        self.prune();
    }

    fn away(&mut self, atom: usize, gamma: f64, drop: bool) {
        for &a in &self.active {
            self.weights[a] *= 1.0 + gamma;
        }
        self.weights[atom] = if drop { 0.0 } else { self.weights[atom] - gamma };
        self.prune();
    }

    fn prune(&mut self) {
        let w = &mut self.weights;
        self.active.retain(|&a| {
            if w[a] <= 0.0 {
                w[a] = 0.0;
                false
            } else {
                true
            }
        });
    }
}

/// Conditional gradient from the origin with exact line search.
///
/// Each step moves toward the ball point `s` minimizing `<grad, s>`; the step
/// length minimizes the quadratic along `d = s - theta` in closed form,
/// `gamma = gap / (2 ||S d||^2 / n)` clipped to `[0, 1]`. The duality gap
/// `<grad, theta - s>` upper-bounds the suboptimality of the current iterate.
///
/// On the `l_1` ball (with `opts.away_steps`) the iterate is also tracked as a
/// convex combination of ball vertices, and a step away from the worst active
/// vertex is taken whenever it promises more decrease than the forward step.
/// Away steps never add a vertex, so after `k` iterations at most `k`
/// coefficients are nonzero either way.
pub fn frank_wolfe(
    objective: &QuadraticObjective,
    q: f64,
    radius: f64,
    opts: &SolverOptions,
) -> Result<FitReport> {
    validate(objective, q, radius)?;
    let dim = objective.dim();
    let gap_tol = opts.resolved_gap_tol(objective);
    let max_iters = opts.resolved_max_iters(dim);
    let engine = objective.engine();
    let image_of = |v: &Vertex| match v {
        Vertex::Zero => engine.zero_image(),
        Vertex::Axis { index, value } => engine.image_axis(*index, *value),
        Vertex::Dense(s) => engine.image(s),
    };

    let mut theta = vec![0.0; dim];
    let mut img = engine.zero_image();
    let mut value = engine.value(&theta, &img);
    let mut active = (q == 1.0 && opts.away_steps).then(|| ActiveSet::new(dim, radius));
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut gap;

    loop {
        let grad = engine.gradient(&img);
        let vertex = lmo_vertex(&grad, q, radius);
        let theta_grad = dot(&grad, &theta);
        gap = theta_grad - vertex.dot(&grad);
        trace.push(TraceEntry { objective: value, gap });
        if gap <= gap_tol {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }

        // Away candidate: (atom, away gap, max step).
        let away = active.as_ref().and_then(|set| {
            let (atom, vg) = set.away_atom(&grad)?;
            let w = set.weights[atom];
            (w < 1.0 && vg - theta_grad > gap).then(|| (atom, vg - theta_grad, w / (1.0 - w)))
        });

        let (d, img_d, slope, gamma_max) = match away {
            None => {
                let img_s = image_of(&vertex);
                let s = vertex.clone().into_dense(dim);
                let d: Vec<f64> = s.iter().zip(&theta).map(|(s, t)| s - t).collect();
                let img_d: Vec<f64> = img_s.iter().zip(&img).map(|(a, b)| a - b).collect();
                (d, img_d, gap, 1.0)
            }
            Some((atom, away_gap, gmax)) => {
                let set = active.as_ref().expect("away step needs an active set");
                let v = set.vertex(atom);
                let img_v = image_of(&v);
                let v = v.into_dense(dim);
                let d: Vec<f64> = theta.iter().zip(&v).map(|(t, v)| t - v).collect();
                let img_d: Vec<f64> = img.iter().zip(&img_v).map(|(a, b)| a - b).collect();
                (d, img_d, away_gap, gmax)
            }
        };
        let curvature = engine.curvature(&d, &img_d);
        // A flat direction has zero directional derivative, so a positive
        // slope with zero curvature only happens through rounding.
        let gamma = if curvature > 0.0 {
            (slope / (2.0 * curvature)).clamp(0.0, gamma_max)
        } else {
            debug_assert!(slope <= 1e-12 * value.max(1.0), "flat direction with slope {slope}");
            break;
        };
        if let Some(set) = active.as_mut() {
            match away {
                None => set.toward(set.atom_of(&vertex), gamma),
                Some((atom, _, gmax)) => set.away(atom, gamma, gamma >= gmax),
            }
        }
        axpy(gamma, &d, &mut theta);
        iterations += 1;
        if iterations % REFRESH_EVERY == 0 {
            img = engine.image(&theta);
        } else {
            axpy(gamma, &img_d, &mut img);
        }
        value = engine.value(&theta, &img);
    }

    // Convex combinations of ball points stay in the ball up to rounding.
    let n = norm_q(&theta, q);
    if n > radius {
        let f = radius / n;
        theta.iter_mut().for_each(|v| *v *= f);
    }
    FitReport::assemble(
        objective,
        theta,
        q,
        radius,
        gap,
        iterations,
        converged,
        SolverPath::FrankWolfe,
        trace,
    )
}
