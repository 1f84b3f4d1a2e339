//! Linear minimization over `l_q` balls and Euclidean projection onto the `l_1` ball.

use crate::norms::dual_exponent;

/// Minimizer of a linear functional over the ball, in the form the solvers
/// consume cheaply.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Vertex {
    Zero,
    Axis { index: usize, value: f64 },
    Dense(Vec<f64>),
}

impl Vertex {
    pub fn dot(&self, g: &[f64]) -> f64 {
        match self {
            Vertex::Zero => 0.0,
            Vertex::Axis { index, value } => g[*index] * value,
            Vertex::Dense(s) => crate::linalg::dot(s, g),
        }
    }

    pub fn into_dense(self, dim: usize) -> Vec<f64> {
        match self {
            Vertex::Zero => vec![0.0; dim],
            Vertex::Axis { index, value } => {
                let mut s = vec![0.0; dim];
                s[index] = value;
                s
            }
            Vertex::Dense(s) => s,
        }
    }
}

pub(crate) fn lmo_vertex(gradient: &[f64], q: f64, radius: f64) -> Vertex {
    // Largest magnitude, lowest index on ties.
    let mut imax = 0;
    let mut gmax = 0.0f64;
    for (i, g) in gradient.iter().enumerate() {
        if g.abs() > gmax {
            gmax = g.abs();
            imax = i;
        }
    }
    if gmax == 0.0 {
        return Vertex::Zero;
    }
    if q == 1.0 {
        return Vertex::Axis {
            index: imax,
            value: -radius * gradient[imax].signum(),
        };
    }
    // s_i = -r sign(g_i) |g_i|^(q*-1) / ||g||_{q*}^(q*-1), evaluated on g / max|g|.
    let qs = dual_exponent(q);
    let mut s: Vec<f64> = if q == 2.0 {
        gradient.iter().map(|g| g / gmax).collect()
    } else {
        gradient
            .iter()
            .map(|g| (g.abs() / gmax).powf(qs - 1.0).copysign(*g))
            .collect()
    };
    let denom = if q == 2.0 {
        crate::linalg::norm2_sq(&s).sqrt()
    } else {
        gradient
            .iter()
            .map(|g| (g.abs() / gmax).powf(qs))
            .sum::<f64>()
            .powf(1.0 / q)
    };
    let f = -radius / denom;
    s.iter_mut().for_each(|v| *v *= f);
    Vertex::Dense(s)
}

/// `argmin_{||s||_q <= radius} <gradient, s>`. Returns the zero vector for a
/// zero gradient. For `q = 1` the minimizer is a signed vertex at the largest
/// gradient magnitude (lowest index on ties).
pub fn lmo(gradient: &[f64], q: f64, radius: f64) -> Vec<f64> {
    lmo_vertex(gradient, q, radius).into_dense(gradient.len())
}

/// Euclidean projection onto `{x : ||x||_1 <= radius}` by sorting magnitudes
/// and soft-thresholding.
pub fn project_l1(point: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = point.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return point.to_vec();
    }
    let mut mags: Vec<f64> = point.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut lambda = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - radius) / (j as f64 + 1.0);
        if m > t {
            lambda = t;
        } else {
            break;
        }
    }
    point
        .iter()
        .map(|v| (v.abs() - lambda).max(0.0).copysign(*v))
        .collect()
}
