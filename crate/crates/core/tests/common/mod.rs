//! Reference solvers used as oracles. They share no code with the library
//! beyond the data types.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use volterra_lq::{QuadraticObjective, RegressorMatrix};

/// Q(theta) = theta' A theta - b' theta + c, built with plain loops.
pub struct Quadratic {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl Quadratic {
    pub fn from_data(s: &RegressorMatrix, y: &[f64]) -> Self {
        let (n, d) = (s.rows(), s.cols());
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for i in 0..n {
            for j in 0..d {
                b[j] += 2.0 * s.get(i, j) * y[i] / n as f64;
                for k in 0..d {
                    a[(j, k)] += s.get(i, j) * s.get(i, k) / n as f64;
                }
            }
        }
        let c = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
        Self { a, b, c }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        (t.transpose() * &self.a * &t)[0] - self.b.dot(&t) + self.c
    }

    pub fn unconstrained(&self) -> Vec<f64> {
        let sol = self.a.clone().cholesky().expect("positive definite").solve(&(&self.b / 2.0));
        sol.iter().copied().collect()
    }
}

pub fn lq_norm(x: &[f64], q: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

/// Exact minimizer over the l_1 ball: the optimum is the unconstrained one
/// or lies in the relative interior of a face {sigma' theta = r} with
/// sigma_i theta_i > 0 on the face's support. Every face is tried.
pub fn l1_face_enumeration(qd: &Quadratic, r: f64) -> Vec<f64> {
    let d = qd.b.len();
    let ls = qd.unconstrained();
    if lq_norm(&ls, 1.0) <= r {
        return ls;
    }
    let mut best = vec![0.0; d];
    let mut best_val = qd.value(&best);
    let patterns = 3usize.pow(d as u32);
    for code in 0..patterns {
        let mut sigma = vec![0i32; d];
        let mut c = code;
        for s in sigma.iter_mut() {
            *s = (c % 3) as i32 - 1;
            c /= 3;
        }
        let support: Vec<usize> = (0..d).filter(|&i| sigma[i] != 0).collect();
        let k = support.len();
        if k == 0 {
            continue;
        }
        // [2 A_SS  sigma; sigma' 0] [theta; mu] = [b_S; r]
        let mut m = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (p, &i) in support.iter().enumerate() {
            for (q, &j) in support.iter().enumerate() {
                m[(p, q)] = 2.0 * qd.a[(i, j)];
            }
            m[(p, k)] = sigma[i] as f64;
            m[(k, p)] = sigma[i] as f64;
            rhs[p] = qd.b[i];
        }
        rhs[k] = r;
        let Some(sol) = m.lu().solve(&rhs) else { continue };
        let mut theta = vec![0.0; d];
        let mut on_face = true;
        for (p, &i) in support.iter().enumerate() {
            theta[i] = sol[p];
            if sigma[i] as f64 * sol[p] < 0.0 {
                on_face = false;
            }
        }
        if !on_face {
            continue;
        }
        let v = qd.value(&theta);
        if v < best_val {
            best_val = v;
            best = theta;
        }
    }
    best
}

/// Exact minimizer over the l_2 ball through the eigendecomposition of A
/// and bisection on the secular equation ||theta(lambda)|| = r.
pub fn l2_secular(qd: &Quadratic, r: f64) -> Vec<f64> {
    let eig = SymmetricEigen::new(qd.a.clone());
    let beta = eig.eigenvectors.transpose() * (&qd.b / 2.0);
    let theta_of = |lambda: f64| -> DVector<f64> {
        let z = DVector::from_iterator(
            beta.len(),
            beta.iter().zip(eig.eigenvalues.iter()).map(|(b, e)| b / (e + lambda)),
        );
        &eig.eigenvectors * z
    };
    let t0 = theta_of(0.0);
    if t0.norm() <= r {
        return t0.iter().copied().collect();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while theta_of(hi).norm() > r {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if theta_of(mid).norm() > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    theta_of(hi).iter().copied().collect()
}

/// Minimizer over the l_q ball (1 < q) by bisection on the multiplier of
/// the penalized problem Q(theta) + mu sum |theta_i|^q, each solved by
/// cyclic coordinate descent with exact one-dimensional minimization.
pub fn lq_penalty_bisection(qd: &Quadratic, q: f64, r: f64) -> Vec<f64> {
    let d = qd.b.len();
    let ls = qd.unconstrained();
    if lq_norm(&ls, q) <= r {
        return ls;
    }
    let solve = |mu: f64, start: &[f64]| -> Vec<f64> {
        let mut t = start.to_vec();
        for _ in 0..100_000 {
            let mut change = 0.0f64;
            for i in 0..d {
                let mut ci = -qd.b[i];
                for j in 0..d {
                    if j != i {
                        ci += 2.0 * qd.a[(i, j)] * t[j];
                    }
                }
                let aii = qd.a[(i, i)];
                // root of 2 a x + c + mu q sign(x) |x|^(q-1), on the side -sign(c)
                let deriv = |x: f64| 2.0 * aii * x + ci + mu * q * x.signum() * x.abs().powf(q - 1.0);
                let x = if ci == 0.0 {
                    0.0
                } else {
                    let mut a = 0.0;
                    let mut b = -ci / (2.0 * aii);
                    for _ in 0..200 {
                        let m = 0.5 * (a + b);
                        if (deriv(m) > 0.0) == (b > 0.0) {
                            b = m;
                        } else {
                            a = m;
                        }
                    }
                    0.5 * (a + b)
                };
                change = change.max((x - t[i]).abs());
                t[i] = x;
            }
            if change < 1e-15 {
                break;
            }
        }
        t
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut t_hi = solve(hi, &ls);
    while lq_norm(&t_hi, q) > r {
        hi *= 2.0;
        t_hi = solve(hi, &t_hi);
    }
    let mut t = t_hi.clone();
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        t = solve(mid, &t);
        if lq_norm(&t, q) > r {
            lo = mid;
        } else {
            hi = mid;
            t_hi = t.clone();
        }
    }
    t_hi
}

pub fn oracle(qd: &Quadratic, q: f64, r: f64) -> Vec<f64> {
    if q == 1.0 {
        l1_face_enumeration(qd, r)
    } else if q == 2.0 {
        l2_secular(qd, r)
    } else {
        lq_penalty_bisection(qd, q, r)
    }
}

/// Euclidean projection onto the l_1 ball by enumerating every face
/// {sigma' x = r} and keeping the nearest point that lies on it.
pub fn project_l1_enumeration(p: &[f64], r: f64) -> Vec<f64> {
    if lq_norm(p, 1.0) <= r {
        return p.to_vec();
    }
    let d = p.len();
    let mut best = vec![0.0; d];
    let mut best_dist = f64::INFINITY;
    for code in 0..3usize.pow(d as u32) {
        let mut sigma = vec![0.0; d];
        let mut c = code;
        for s in sigma.iter_mut() {
            *s = (c % 3) as f64 - 1.0;
            c /= 3;
        }
        let k = sigma.iter().filter(|s| **s != 0.0).count() as f64;
        if k == 0.0 {
            continue;
        }
        let sp: f64 = sigma.iter().zip(p).map(|(s, v)| s * v).sum();
        let lambda = (sp - r) / k;
        let x: Vec<f64> = sigma.iter().zip(p).map(|(s, v)| if *s == 0.0 { 0.0 } else { v - lambda * s }).collect();
        if x.iter().zip(&sigma).any(|(x, s)| x * s < 0.0) {
            continue;
        }
        let dist: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist < best_dist {
            best_dist = dist;
            best = x;
        }
    }
    best
}

/// Random dense least-squares instance.
pub fn random_instance<R: Rng>(rng: &mut R, d: usize, n: usize) -> (RegressorMatrix, Vec<f64>) {
    let vals: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = RegressorMatrix::from_row_major(vals, n, d).unwrap();
    let theta: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut y = s.mul_vec(&theta);
    for v in y.iter_mut() {
        *v += 0.1 * rng.gen_range(-1.0..1.0);
    }
    (s, y)
}

pub fn objective(s: &RegressorMatrix, y: &[f64]) -> QuadraticObjective {
    QuadraticObjective::new(s.clone(), y.to_vec()).unwrap()
}

/// A point of the l_q ball of radius r: uniform direction scaled onto the
/// sphere, then pulled inward by a random factor.
pub fn random_ball_point<R: Rng>(rng: &mut R, d: usize, q: f64, r: f64, boundary: bool) -> Vec<f64> {
    let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = lq_norm(&x, q);
    let f = if boundary { 1.0 } else { rng.gen_range(0.0..1.0f64) };
    x.iter_mut().for_each(|v| *v *= r * f / n);
    x
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
