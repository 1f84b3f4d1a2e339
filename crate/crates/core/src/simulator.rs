//! Block-cascade (Wiener-Hammerstein) data generator.
//!
//! `u -> FIR -> static nonlinearity -> rational filter -> z`, then
//! `y = z + e` with white Gaussian `e` scaled to a target SNR measured on the
//! realized `z`. All filters start from zero state.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dictionary::VolterraStructure;
use crate::error::{Error, Result};

/// Rational transfer function with coefficient lists in descending powers of
/// `z`. Stored normalized: monic denominator, proper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransferRepr", into = "TransferRepr")]
pub struct TransferFunction {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransferRepr {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

impl TryFrom<TransferRepr> for TransferFunction {
    type Error = Error;
    fn try_from(r: TransferRepr) -> Result<Self> {
        TransferFunction::new(r.numerator, r.denominator)
    }
}

impl From<TransferFunction> for TransferRepr {
    fn from(t: TransferFunction) -> Self {
        TransferRepr {
            numerator: t.numerator,
            denominator: t.denominator,
        }
    }
}

fn strip_leading_zeros(mut p: Vec<f64>) -> Vec<f64> {
    let k = p.iter().position(|&c| c != 0.0).unwrap_or(p.len().saturating_sub(1));
    p.drain(..k);
    p
}

impl TransferFunction {
    /// Validates properness and stability (all poles strictly inside the unit
    /// circle) and normalizes the denominator to be monic.
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        if numerator.is_empty() || denominator.is_empty() {
            return Err(Error::InvalidArgument("empty transfer-function polynomial".into()));
        }
        if numerator.iter().chain(&denominator).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite transfer-function coefficient".into()));
        }
        let numerator = strip_leading_zeros(numerator);
        let denominator = strip_leading_zeros(denominator);
        let lead = denominator[0];
        if lead == 0.0 {
            return Err(Error::InvalidArgument("zero denominator".into()));
        }
        if numerator.len() > denominator.len() {
            return Err(Error::InvalidArgument("improper transfer function (non-causal)".into()));
        }
        let tf = Self {
            numerator: numerator.iter().map(|c| c / lead).collect(),
            denominator: denominator.iter().map(|c| c / lead).collect(),
        };
        if !schur_stable(&tf.denominator) {
            return Err(Error::Unstable(format!(
                "denominator {:?} has a pole on or outside the unit circle",
                tf.denominator
            )));
        }
        Ok(tf)
    }

    /// `G(z) = 1`.
    pub fn identity() -> Self {
        Self {
            numerator: vec![1.0],
            denominator: vec![1.0],
        }
    }

    /// Output dynamics of the WH2 system, `0.2655 z / (z^2 - 1.714 z + 0.78)`.
    pub fn wh2_output() -> Self {
        Self::new(vec![0.2655, 0.0], vec![1.0, -1.714, 0.78]).expect("WH2 output filter is stable")
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    /// Difference-equation coefficients in powers of `z^-1`:
    /// `y_n = sum_k b_k x_{n-k} - sum_{k>=1} a_k y_{n-k}`.
    fn delay_form(&self) -> (Vec<f64>, Vec<f64>) {
        let order = self.denominator.len() - 1;
        let shift = order + 1 - self.numerator.len();
        let mut b = vec![0.0; order + 1];
        b[shift..].copy_from_slice(&self.numerator);
        (b, self.denominator.clone())
    }

    /// Zero-state response.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let (b, a) = self.delay_form();
        let mut y = vec![0.0; x.len()];
        for n in 0..x.len() {
            let mut acc = 0.0;
            for (k, bk) in b.iter().enumerate().take(n + 1) {
                acc += bk * x[n - k];
            }
            for (k, ak) in a.iter().enumerate().skip(1).take(n) {
                acc -= ak * y[n - k];
            }
            y[n] = acc;
        }
        y
    }

    /// First `length` samples of the impulse response.
    pub fn impulse_response(&self, length: usize) -> Vec<f64> {
        let mut delta = vec![0.0; length];
        if let Some(d) = delta.first_mut() {
            *d = 1.0;
        }
        self.filter(&delta)
    }

    /// Pole magnitudes from the companion-matrix eigenvalues.
    pub fn pole_moduli(&self) -> Vec<f64> {
        let order = self.denominator.len() - 1;
        if order == 0 {
            return Vec::new();
        }
        let mut c = DMatrix::<f64>::zeros(order, order);
        for j in 0..order {
            c[(0, j)] = -self.denominator[j + 1];
        }
        for i in 1..order {
            c[(i, i - 1)] = 1.0;
        }
        c.complex_eigenvalues().iter().map(|z| z.norm()).collect()
    }
}

/// Schur-Cohn step-down test: a monic polynomial has all roots strictly
/// inside the unit circle iff every reflection coefficient has magnitude < 1.
fn schur_stable(monic: &[f64]) -> bool {
    // Work with ascending powers of z^-1: a_0 = 1, a_1, ..., a_n.
    let mut a = monic.to_vec();
    while a.len() > 1 {
        let n = a.len() - 1;
        let k = a[n] / a[0];
        if !(k.abs() < 1.0) {
            return false;
        }
        let denom = 1.0 - k * k;
        a = (0..n).map(|i| (a[i] - k * a[n - i]) / denom).collect();
    }
    true
}

/// Static map between the two linear blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    Square,
    Identity,
    /// `sum_k coeffs[k] * x^k`.
    Polynomial { coeffs: Vec<f64> },
    /// Clip to `[-limit, limit]`.
    Saturation { limit: f64 },
}

impl Nonlinearity {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Square => x * x,
            Nonlinearity::Identity => x,
            Nonlinearity::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Nonlinearity::Saturation { limit } => x.clamp(-limit, *limit),
        }
    }

    /// Power-series coefficients, if the map is a polynomial.
    pub fn polynomial_coeffs(&self) -> Option<Vec<f64>> {
        match self {
            Nonlinearity::Square => Some(vec![0.0, 0.0, 1.0]),
            Nonlinearity::Identity => Some(vec![0.0, 1.0]),
            Nonlinearity::Polynomial { coeffs } => Some(coeffs.clone()),
            Nonlinearity::Saturation { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockCascade {
    pub input_fir: Vec<f64>,
    pub nonlinearity: Nonlinearity,
    pub output_iir: TransferFunction,
}

impl BlockCascade {
    pub fn new(input_fir: Vec<f64>, nonlinearity: Nonlinearity, output_iir: TransferFunction) -> Result<Self> {
        if input_fir.is_empty() {
            return Err(Error::InvalidArgument("input FIR needs at least one tap".into()));
        }
        if let Nonlinearity::Saturation { limit } = nonlinearity {
            if !(limit > 0.0) {
                return Err(Error::InvalidArgument("saturation limit must be positive".into()));
            }
        }
        Ok(Self {
            input_fir,
            nonlinearity,
            output_iir,
        })
    }

    /// Two-tap input dynamics `1 - z^-1`, squaring, and
    /// `0.2655 z / (z^2 - 1.714 z + 0.78)` at the output.
    pub fn wh2() -> Self {
        Self {
            input_fir: vec![1.0, -1.0],
            nonlinearity: Nonlinearity::Square,
            output_iir: TransferFunction::wh2_output(),
        }
    }

    /// Noiseless zero-state response.
    pub fn respond(&self, u: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = (0..u.len())
            .map(|n| {
                self.input_fir
                    .iter()
                    .enumerate()
                    .take(n + 1)
                    .map(|(k, l)| l * u[n - k])
                    .sum()
            })
            .collect();
        let w: Vec<f64> = v.iter().map(|&x| self.nonlinearity.apply(x)).collect();
        self.output_iir.filter(&w)
    }

    /// Exact Volterra coefficients of the cascade truncated to `structure`, in
    /// canonical dictionary order (each entry folds all permutations of its
    /// lags). Requires a polynomial nonlinearity of degree at most the model
    /// degree. With `g` the output impulse response and `lambda` the input
    /// FIR, the symmetric order-`m` kernel is
    /// `c_m sum_j g_j prod_i lambda_{k_i - j}`.
    pub fn volterra_coefficients(&self, structure: &VolterraStructure) -> Result<Vec<f64>> {
        let coeffs = self.nonlinearity.polynomial_coeffs().ok_or_else(|| {
            Error::InvalidArgument("only polynomial nonlinearities have a finite Volterra expansion".into())
        })?;
        let degree = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        if degree > structure.degree() {
            return Err(Error::InvalidArgument(format!(
                "nonlinearity degree {degree} exceeds model degree {}",
                structure.degree()
            )));
        }
        let g = self.output_iir.impulse_response(structure.tau() + 1);
        let lambda = |k: isize| -> f64 {
            usize::try_from(k)
                .ok()
                .and_then(|k| self.input_fir.get(k).copied())
                .unwrap_or(0.0)
        };
        let mut out = Vec::new();
        for term in structure.enumerate_terms() {
            let m = term.order();
            if m == 0 {
                // Static offset c_0 passes through the output filter's DC gain;
                // truncated like every other kernel.
                out.push(coeffs.first().copied().unwrap_or(0.0) * g.iter().sum::<f64>());
                continue;
            }
            let cm = coeffs.get(m).copied().unwrap_or(0.0);
            let kmin = term.lags()[0];
            let h: f64 = (0..=kmin)
                .map(|j| g[j] * term.lags().iter().map(|&k| lambda(k as isize - j as isize)).product::<f64>())
                .sum();
            out.push(cm * h * term.multiplicity() as f64);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrUnit {
    /// Power ratio `var(z) / var(e)`.
    #[default]
    Linear,
    Db,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snr {
    pub value: f64,
    #[serde(default)]
    pub unit: SnrUnit,
}

impl Snr {
    pub fn linear(value: f64) -> Self {
        Self {
            value,
            unit: SnrUnit::Linear,
        }
    }

    pub fn ratio(&self) -> f64 {
        match self.unit {
            SnrUnit::Linear => self.value,
            SnrUnit::Db => 10f64.powf(self.value / 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputLaw {
    /// Uniform on `[-half_width, half_width]`; `sqrt(3)` gives unit variance.
    Uniform {
        #[serde(default = "sqrt3")]
        half_width: f64,
    },
}

fn sqrt3() -> f64 {
    3f64.sqrt()
}

impl Default for InputLaw {
    fn default() -> Self {
        InputLaw::Uniform { half_width: sqrt3() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub n: usize,
    #[serde(default)]
    pub input_law: InputLaw,
    /// Colors the white input; the result is rescaled to unit empirical variance.
    #[serde(default)]
    pub correlate_with: Option<TransferFunction>,
    /// `None` leaves the output noiseless.
    #[serde(default)]
    pub snr: Option<Snr>,
    #[serde(default)]
    pub seed: u64,
    /// Memory bound recorded in the produced dataset.
    #[serde(default)]
    pub tau: usize,
}

impl SignalSpec {
    pub fn white(n: usize, seed: u64) -> Self {
        Self {
            n,
            input_law: InputLaw::default(),
            correlate_with: None,
            snr: None,
            seed,
            tau: 0,
        }
    }
}

const INPUT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Population variance (`1/N`).
pub fn empirical_variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Seeded input sequence.
pub fn generate_input(spec: &SignalSpec) -> Result<Vec<f64>> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("signal length must be at least 1".into()));
    }
    let InputLaw::Uniform { half_width } = spec.input_law;
    if !(half_width > 0.0) {
        return Err(Error::InvalidArgument("uniform half-width must be positive".into()));
    }
    let mut r = rng(spec.seed, INPUT_STREAM);
    let white: Vec<f64> = (0..spec.n).map(|_| r.gen_range(-half_width..half_width)).collect();
    Ok(match &spec.correlate_with {
        None => white,
        Some(tf) => {
            let colored = tf.filter(&white);
            let var = empirical_variance(&colored);
            if var > 0.0 {
                let f = 1.0 / var.sqrt();
                colored.into_iter().map(|v| v * f).collect()
            } else {
                colored
            }
        }
    })
}

/// A simulated dataset together with what produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub dataset: Dataset,
    pub noiseless: Vec<f64>,
    /// `var(z) / var(e)` as realized; `None` when noiseless.
    pub realized_snr: Option<f64>,
}

/// Sidecar JSON for a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMeta {
    pub seed: u64,
    pub spec: SignalSpec,
    pub cascade: BlockCascade,
    pub realized_snr: Option<f64>,
    pub tau: usize,
}

pub fn simulate(cascade: &BlockCascade, spec: &SignalSpec) -> Result<Simulation> {
    let u = generate_input(spec)?;
    simulate_with_input(cascade, u, spec)
}

/// Runs the cascade on a given input; noise and `tau` come from `spec`
/// (its length and input law are ignored).
pub fn simulate_with_input(cascade: &BlockCascade, u: Vec<f64>, spec: &SignalSpec) -> Result<Simulation> {
    let z = cascade.respond(&u);
    let (y, realized_snr) = match spec.snr {
        None => (z.clone(), None),
        Some(snr) => {
            let ratio = snr.ratio();
            if !(ratio > 0.0 && ratio.is_finite()) {
                return Err(Error::InvalidArgument(format!("SNR must be positive, got {}", snr.value)));
            }
            let var_z = empirical_variance(&z);
            let sigma = (var_z / ratio).sqrt();
            let mut r = rng(spec.seed, NOISE_STREAM);
            let e: Vec<f64> = (0..z.len())
                .map(|_| sigma * r.sample::<f64, _>(StandardNormal))
                .collect();
            let var_e = empirical_variance(&e);
            let y = z.iter().zip(&e).map(|(a, b)| a + b).collect();
            (y, Some(if var_e > 0.0 { var_z / var_e } else { f64::INFINITY }))
        }
    };
    let dataset = Dataset::new(u, y, spec.tau)?.with_source(format!("simulated (seed {})", spec.seed));
    Ok(Simulation {
        dataset,
        noiseless: z,
        realized_snr,
    })
}

impl Simulation {
    pub fn meta(&self, cascade: &BlockCascade, spec: &SignalSpec) -> SimulationMeta {
        SimulationMeta {
            seed: spec.seed,
            spec: spec.clone(),
            cascade: cascade.clone(),
            realized_snr: self.realized_snr,
            tau: self.dataset.tau(),
        }
    }
}
