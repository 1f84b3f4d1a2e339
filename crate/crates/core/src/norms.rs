/// Relative slack allowed on `||theta||_q <= radius`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// `l_q` norm for `q >= 1`, computed on the max-scaled vector so large `q`
/// cannot overflow.
pub fn norm_q(x: &[f64], q: f64) -> f64 {
    if q == 1.0 {
        return norm_1(x);
    }
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    if q.is_infinite() {
        return m;
    }
    if q == 2.0 {
        return m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt();
    }
    m * x.iter().map(|v| (v.abs() / m).powf(q)).sum::<f64>().powf(1.0 / q)
}

pub fn norm_1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Constraint radius `R * D^(1/q - 1)`.
pub fn scaled_radius(dim: usize, q: f64, r_factor: f64) -> f64 {
    r_factor * (dim as f64).powf(1.0 / q - 1.0)
}

/// Conjugate exponent `q/(q-1)`, infinite for `q = 1`.
pub fn dual_exponent(q: f64) -> f64 {
    if q == 1.0 {
        f64::INFINITY
    } else {
        q / (q - 1.0)
    }
}

/// Number of entries with `|x_i| > threshold`.
pub fn count_above(x: &[f64], threshold: f64) -> usize {
    x.iter().filter(|v| v.abs() > threshold).count()
}
