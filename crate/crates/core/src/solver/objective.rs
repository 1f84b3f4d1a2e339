use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dictionary::{build_regressors, RegressorMatrix, VolterraStructure};
use crate::error::{Error, Result};
use crate::linalg;

/// When to precompute the normal-equation terms `A = S^T S / n`, `b = 2 S^T y / n`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    /// Cache when there are more rows than columns.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug)]
struct NormalTerms {
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

/// Empirical least-squares criterion
/// `Q(theta) = (1/n) sum_n (scale * s_n . theta - y_n)^2`
/// over the usable rows of a regressor matrix.
///
/// `scale` multiplies every dictionary column; it is 1 unless the objective
/// was derived through [`QuadraticObjective::scaled`].
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    design: Arc<RegressorMatrix>,
    targets: Arc<Vec<f64>>,
    scale: f64,
    normal: Option<Arc<NormalTerms>>,
}

/// `Q(theta) = theta^T A theta - theta^T b + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl QuadraticObjective {
    pub fn new(design: RegressorMatrix, targets: Vec<f64>) -> Result<Self> {
        Self::with_cache(design, targets, CachePolicy::Auto)
    }

    pub fn with_cache(design: RegressorMatrix, targets: Vec<f64>, cache: CachePolicy) -> Result<Self> {
        if design.rows() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: design.rows(),
                found: targets.len(),
            });
        }
        if design.rows() == 0 {
            return Err(Error::EmptyDesign { len: 0, tau: 0 });
        }
        if design.cols() == 0 {
            return Err(Error::InvalidArgument("dictionary has no columns".into()));
        }
        let mut obj = Self {
            design: Arc::new(design),
            targets: Arc::new(targets),
            scale: 1.0,
            normal: None,
        };
        let cache = match cache {
            CachePolicy::Auto => obj.samples() > obj.dim(),
            CachePolicy::Always => true,
            CachePolicy::Never => false,
        };
        if cache {
            obj.normal = Some(Arc::new(obj.compute_normal_terms()));
        }
        Ok(obj)
    }

    /// Regressors and targets for the usable rows of `data`.
    pub fn from_dataset(data: &Dataset, structure: &VolterraStructure) -> Result<Self> {
        let s = build_regressors(data, structure)?;
        Self::new(s, data.targets().to_vec())
    }

    /// Same data with the cache policy changed.
    pub fn recached(&self, cache: CachePolicy) -> Self {
        let mut out = self.clone();
        let want = match cache {
            CachePolicy::Auto => self.samples() > self.dim(),
            CachePolicy::Always => true,
            CachePolicy::Never => false,
        };
        out.normal = match (want, &self.normal) {
            (false, _) => None,
            (true, Some(n)) => Some(n.clone()),
            (true, None) => Some(Arc::new(self.compute_normal_terms())),
        };
        out
    }

    fn compute_normal_terms(&self) -> NormalTerms {
        let n = self.samples() as f64;
        let a = linalg::gram(&self.design);
        let mut b = self.design.tr_mul_vec(&self.targets);
        b.iter_mut().for_each(|v| *v *= 2.0 / n);
        let c = linalg::norm2_sq(&self.targets) / n;
        NormalTerms { a, b, c }
    }

    /// The same criterion with every dictionary column multiplied by `factor`.
    /// Shares the underlying data.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            scale: self.scale * factor,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    /// `N - tau`.
    pub fn samples(&self) -> usize {
        self.design.rows()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn design(&self) -> &RegressorMatrix {
        &self.design
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn has_cached_normal_equations(&self) -> bool {
        self.normal.is_some()
    }

    /// `Q(0)`, the mean square of the targets.
    pub fn initial_value(&self) -> f64 {
        linalg::norm2_sq(&self.targets) / self.samples() as f64
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    fn residual(&self, theta: &[f64]) -> Vec<f64> {
        let mut r = self.design.mul_vec(theta);
        for (ri, yi) in r.iter_mut().zip(self.targets.iter()) {
            *ri = self.scale * *ri - yi;
        }
        r
    }

    /// Mean squared residual.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(linalg::norm2_sq(&self.residual(theta)) / self.samples() as f64)
    }

    /// `(2/n) S^T (S theta - y)` for the scaled dictionary.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        let r = self.residual(theta);
        let mut g = self.design.tr_mul_vec(&r);
        let f = 2.0 * self.scale / self.samples() as f64;
        g.iter_mut().for_each(|v| *v *= f);
        Ok(g)
    }

    /// Expanded quadratic form, including the column scale.
    pub fn normal_equations(&self) -> NormalEquations {
        let owned;
        let terms = match &self.normal {
            Some(n) => n.as_ref(),
            None => {
                owned = self.compute_normal_terms();
                &owned
            }
        };
        let s2 = self.scale * self.scale;
        NormalEquations {
            a: terms.a.iter().map(|v| v * s2).collect(),
            b: terms.b.iter().map(|v| v * self.scale).collect(),
            c: terms.c,
        }
    }

    pub(crate) fn engine(&self) -> Engine<'_> {
        Engine { obj: self }
    }
}

impl NormalEquations {
    pub fn value(&self, theta: &[f64]) -> f64 {
        let at = linalg::sym_mul_vec(&self.a, theta);
        linalg::dot(theta, &at) - linalg::dot(theta, &self.b) + self.c
    }
}

/// Iteration kernel shared by the solvers. It tracks the "image" of an
/// iterate, a linear function of `theta`: `A theta` when the normal
/// equations are cached, `scale * S theta` otherwise.
pub(crate) struct Engine<'a> {
    obj: &'a QuadraticObjective,
}

impl Engine<'_> {
    fn n(&self) -> f64 {
        self.obj.samples() as f64
    }

    pub fn zero_image(&self) -> Vec<f64> {
        match &self.obj.normal {
            Some(_) => vec![0.0; self.obj.dim()],
            None => vec![0.0; self.obj.samples()],
        }
    }

    pub fn image(&self, x: &[f64]) -> Vec<f64> {
        let s = self.obj.scale;
        match &self.obj.normal {
            Some(t) => {
                let mut v = linalg::sym_mul_vec(&t.a, x);
                v.iter_mut().for_each(|e| *e *= s * s);
                v
            }
            None => {
                let mut v = self.obj.design.mul_vec(x);
                v.iter_mut().for_each(|e| *e *= s);
                v
            }
        }
    }

    /// Image of `value * e_index`.
    pub fn image_axis(&self, index: usize, value: f64) -> Vec<f64> {
        let s = self.obj.scale;
        match &self.obj.normal {
            Some(t) => {
                let d = self.obj.dim();
                let f = value * s * s;
                t.a[index * d..(index + 1) * d].iter().map(|a| a * f).collect()
            }
            None => {
                let f = value * s;
                let design = &self.obj.design;
                (0..design.rows()).map(|i| design.get(i, index) * f).collect()
            }
        }
    }

    pub fn gradient(&self, img: &[f64]) -> Vec<f64> {
        match &self.obj.normal {
            Some(t) => {
                let s = self.obj.scale;
                img.iter().zip(&t.b).map(|(a, b)| 2.0 * a - s * b).collect()
            }
            None => {
                let r: Vec<f64> = img.iter().zip(self.obj.targets.iter()).map(|(a, y)| a - y).collect();
                let mut g = self.obj.design.tr_mul_vec(&r);
                let f = 2.0 * self.obj.scale / self.n();
                g.iter_mut().for_each(|v| *v *= f);
                g
            }
        }
    }

    pub fn value(&self, theta: &[f64], img: &[f64]) -> f64 {
        match &self.obj.normal {
            Some(t) => {
                let v = linalg::dot(theta, img) - self.obj.scale * linalg::dot(theta, &t.b) + t.c;
                v.max(0.0)
            }
            None => {
                let ss: f64 = img
                    .iter()
                    .zip(self.obj.targets.iter())
                    .map(|(a, y)| (a - y) * (a - y))
                    .sum();
                ss / self.n()
            }
        }
    }

    /// `||S d||^2 / n` for direction `d` with image `img_d`.
    pub fn curvature(&self, d: &[f64], img_d: &[f64]) -> f64 {
        match &self.obj.normal {
            Some(_) => linalg::dot(d, img_d),
            None => linalg::norm2_sq(img_d) / self.n(),
        }
    }
}
