//! Symmetric truncated Volterra dictionary.
//!
//! A model of degree `P` with memory lengths `L_1..L_P` has one regressor per
//! multiset of lags: the order-`p` kernel is symmetric, so only nondecreasing
//! lag tuples `k_1 <= ... <= k_p` (each below `L_p`) are kept. The regressor of
//! a multiset is the product of the input at those lags.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "StructureRepr", into = "StructureRepr")]
pub struct VolterraStructure {
    memory_lengths: Vec<usize>,
    include_constant: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureRepr {
    degree: usize,
    memory_lengths: Vec<usize>,
    #[serde(default = "default_true")]
    include_constant: bool,
}

fn default_true() -> bool {
    true
}

impl TryFrom<StructureRepr> for VolterraStructure {
    type Error = Error;

    fn try_from(repr: StructureRepr) -> Result<Self> {
        if repr.degree != repr.memory_lengths.len() {
            return Err(Error::InvalidStructure(format!(
                "degree {} does not match {} memory lengths",
                repr.degree,
                repr.memory_lengths.len()
            )));
        }
        VolterraStructure::new(repr.memory_lengths, repr.include_constant)
    }
}

impl From<VolterraStructure> for StructureRepr {
    fn from(s: VolterraStructure) -> Self {
        StructureRepr {
            degree: s.degree(),
            memory_lengths: s.memory_lengths,
            include_constant: s.include_constant,
        }
    }
}

impl VolterraStructure {
    /// `memory_lengths[p - 1]` is the number of lags of the order-`p` kernel.
    pub fn new(memory_lengths: Vec<usize>, include_constant: bool) -> Result<Self> {
        if memory_lengths.is_empty() {
            return Err(Error::InvalidStructure("degree must be at least 1".into()));
        }
        if let Some(p) = memory_lengths.iter().position(|&l| l == 0) {
            return Err(Error::InvalidStructure(format!(
                "memory length of order {} must be at least 1",
                p + 1
            )));
        }
        Ok(Self {
            memory_lengths,
            include_constant,
        })
    }

    /// Degree `degree` with the same memory length for every kernel, constant included.
    pub fn uniform(degree: usize, memory: usize) -> Result<Self> {
        Self::new(vec![memory; degree], true)
    }

    pub fn degree(&self) -> usize {
        self.memory_lengths.len()
    }

    pub fn memory_lengths(&self) -> &[usize] {
        &self.memory_lengths
    }

    pub fn include_constant(&self) -> bool {
        self.include_constant
    }

    /// Largest lag any regressor reads: `max_p L_p - 1`.
    pub fn tau(&self) -> usize {
        self.memory_lengths.iter().copied().max().unwrap_or(1) - 1
    }

    /// Number of dictionary entries `D`: `[1] + sum_p C(L_p + p - 1, p)`.
    pub fn count_params(&self) -> Result<usize> {
        let mut total: u128 = u128::from(self.include_constant);
        for (i, &l) in self.memory_lengths.iter().enumerate() {
            let p = i as u128 + 1;
            let c = binomial(l as u128 + p - 1, p).ok_or_else(|| self.sizing())?;
            total = total.checked_add(c).ok_or_else(|| self.sizing())?;
        }
        usize::try_from(total).map_err(|_| self.sizing())
    }

    fn sizing(&self) -> Error {
        Error::Sizing(format!("memory lengths {:?}", self.memory_lengths))
    }

    /// Canonical term order: constant, then by order, then lexicographic on
    /// nondecreasing lags.
    pub fn enumerate_terms(&self) -> Vec<MultiIndex> {
        let mut terms = Vec::new();
        if self.include_constant {
            terms.push(MultiIndex::constant());
        }
        for (i, &l) in self.memory_lengths.iter().enumerate() {
            let p = i + 1;
            let mut lags = vec![0usize; p];
            loop {
                terms.push(MultiIndex { lags: lags.clone() });
                // Odometer over nondecreasing tuples: bump the rightmost lag
                // that can grow and reset everything to its right to it.
                let Some(j) = (0..p).rev().find(|&j| lags[j] + 1 < l) else {
                    break;
                };
                let v = lags[j] + 1;
                lags[j..].iter_mut().for_each(|x| *x = v);
            }
        }
        terms
    }

    /// Position of a (not necessarily sorted) lag tuple in the canonical order.
    pub fn term_position(&self, lags: &[usize]) -> Option<usize> {
        let mut sorted = lags.to_vec();
        sorted.sort_unstable();
        let p = sorted.len();
        let mut offset = usize::from(self.include_constant);
        if p == 0 {
            return self.include_constant.then_some(0);
        }
        if p > self.degree() {
            return None;
        }
        for (i, &l) in self.memory_lengths[..p - 1].iter().enumerate() {
            offset += multiset_count(l, i + 1)?;
        }
        let l = self.memory_lengths[p - 1];
        if sorted.iter().any(|&k| k >= l) {
            return None;
        }
        // Rank of the tuple among nondecreasing tuples over [0, l).
        let mut rank = 0usize;
        let mut lo = 0usize;
        for (j, &k) in sorted.iter().enumerate() {
            let remaining = p - j - 1;
            for v in lo..k {
                rank += multiset_count(l - v, remaining)?;
            }
            lo = k;
        }
        Some(offset + rank)
    }
}

/// Number of nondecreasing tuples of length `p` over `l` symbols.
fn multiset_count(l: usize, p: usize) -> Option<usize> {
    if p == 0 {
        return Some(1);
    }
    binomial(l as u128 + p as u128 - 1, p as u128).and_then(|c| usize::try_from(c).ok())
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication.
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Canonical (sorted) lag multiset of one dictionary entry. The constant term
/// has no lags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    lags: Vec<usize>,
}

impl MultiIndex {
    pub fn constant() -> Self {
        Self { lags: Vec::new() }
    }

    /// Builds the canonical representative of an arbitrary lag tuple.
    pub fn from_lags(mut lags: Vec<usize>) -> Self {
        lags.sort_unstable();
        Self { lags }
    }

    pub fn order(&self) -> usize {
        self.lags.len()
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn is_constant(&self) -> bool {
        self.lags.is_empty()
    }

    /// Number of distinct lag permutations folded into this entry.
    pub fn multiplicity(&self) -> u64 {
        let mut m: u64 = (1..=self.lags.len() as u64).product();
        let mut i = 0;
        while i < self.lags.len() {
            let run = self.lags[i..].iter().take_while(|&&k| k == self.lags[i]).count();
            m /= (1..=run as u64).product::<u64>();
            i += run;
        }
        m
    }

    /// `prod_j u[n - k_j]`; `n` must be at least the largest lag.
    #[inline]
    pub fn evaluate(&self, u: &[f64], n: usize) -> f64 {
        self.lags.iter().map(|&k| u[n - k]).product()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lags: Vec<String> = self.lags.iter().map(|k| k.to_string()).collect();
        write!(f, "{}", lags.join(";"))
    }
}

/// Evaluated dictionary, one row per usable time index `n = tau..N-1`
/// (zero-based), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    first_time: usize,
}

impl RegressorMatrix {
    pub fn from_row_major(values: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        Ok(Self {
            values,
            rows,
            cols,
            first_time: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Time index of row 0.
    pub fn first_time(&self) -> usize {
        self.first_time
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `S theta`.
    pub fn mul_vec(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), theta)).collect()
    }

    /// `S^T v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(vi, self.row(i), &mut out);
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Regressor rows for every usable time index of `data`.
pub fn build_regressors(data: &Dataset, structure: &VolterraStructure) -> Result<RegressorMatrix> {
    let tau = data.tau();
    if structure.tau() > tau {
        return Err(Error::InvalidArgument(format!(
            "model memory bound {} exceeds the dataset's declared tau {}",
            structure.tau(),
            tau
        )));
    }
    let n = data.len();
    if n <= tau {
        return Err(Error::EmptyDesign { len: n, tau });
    }
    let terms = structure.enumerate_terms();
    let cols = terms.len();
    let rows = n - tau;
    let u = data.input();
    let mut values = Vec::with_capacity(rows * cols);
    for t in tau..n {
        values.extend(terms.iter().map(|m| m.evaluate(u, t)));
    }
    Ok(RegressorMatrix {
        values,
        rows,
        cols,
        first_time: tau,
    })
}

/// Dictionary coefficients in canonical order, tagged with their norm constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub values: Vec<f64>,
    pub q: f64,
    pub radius: f64,
}

impl CoefficientVector {
    pub fn new(values: Vec<f64>, q: f64, radius: f64) -> Self {
        Self { values, q, radius }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_q(&self) -> f64 {
        crate::norms::norm_q(&self.values, self.q)
    }

    /// `||theta||_q <= radius * (1 + 1e-9)`.
    pub fn is_feasible(&self) -> bool {
        self.norm_q() <= self.radius * (1.0 + crate::norms::FEASIBILITY_TOL)
    }
}

/// Model output `s_n . theta` for every usable time index of `data`.
pub fn predict(
    coeffs: &[f64],
    structure: &VolterraStructure,
    data: &Dataset,
) -> Result<Vec<f64>> {
    let d = structure.count_params()?;
    if coeffs.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: coeffs.len(),
        });
    }
    let s = build_regressors(data, structure)?;
    Ok(s.mul_vec(coeffs))
}

/// Writes `order,lags,value` rows in canonical order.
pub fn write_coefficients_csv<W: std::io::Write>(
    writer: W,
    structure: &VolterraStructure,
    coeffs: &[f64],
) -> Result<()> {
    let terms = structure.enumerate_terms();
    if terms.len() != coeffs.len() {
        return Err(Error::DimensionMismatch {
            expected: terms.len(),
            found: coeffs.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["order", "lags", "value"])?;
    for (term, value) in terms.iter().zip(coeffs) {
        w.write_record([term.order().to_string(), term.to_string(), value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a coefficient file back into canonical order for `structure`.
/// Terms absent from the file are zero.
pub fn read_coefficients_csv<R: std::io::Read>(
    reader: R,
    structure: &VolterraStructure,
) -> Result<Vec<f64>> {
    let d = structure.count_params()?;
    let mut out = vec![0.0; d];
    let mut rdr = csv::Reader::from_reader(reader);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 3 {
            return Err(Error::Data(format!("row {row}: expected 3 fields, found {}", rec.len())));
        }
        let order: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("row {row}: bad order {:?}", &rec[0])))?;
        let lags: Vec<usize> = if rec[1].trim().is_empty() {
            Vec::new()
        } else {
            rec[1]
                .split(';')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Data(format!("row {row}: bad lags {:?}", &rec[1])))?
        };
        if lags.len() != order {
            return Err(Error::Data(format!(
                "row {row}: order {order} but {} lags",
                lags.len()
            )));
        }
        let value: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("row {row}: bad value {:?}", &rec[2])))?;
        let pos = structure.term_position(&lags).ok_or_else(|| {
            Error::Data(format!("row {row}: term {:?} not in the model structure", lags))
        })?;
        out[pos] = value;
    }
    Ok(out)
}

pub fn read_coefficients_file(path: &Path, structure: &VolterraStructure) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path)?;
    read_coefficients_csv(f, structure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_multisets(l: usize, p: usize) -> Vec<Vec<usize>> {
        // All l^p tuples, keep the sorted ones.
        let total = l.pow(p as u32);
        let mut out = Vec::new();
        for mut code in 0..total {
            let mut t = vec![0; p];
            for slot in t.iter_mut().rev() {
                *slot = code % l;
                code /= l;
            }
            if t.windows(2).all(|w| w[0] <= w[1]) {
                out.push(t);
            }
        }
        out
    }

    #[test]
    fn enumerate_second_order_three_lags() {
        let s = VolterraStructure::uniform(2, 3).unwrap();
        let terms = s.enumerate_terms();
        assert_eq!(terms.len(), 10);
        let order2: Vec<Vec<usize>> = terms
            .iter()
            .filter(|m| m.order() == 2)
            .map(|m| m.lags().to_vec())
            .collect();
        assert_eq!(
            order2,
            vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 1], vec![1, 2], vec![2, 2]]
        );
        assert_eq!(order2, brute_force_multisets(3, 2));
    }

    #[test]
    fn enumerate_linear_fir() {
        let s = VolterraStructure::uniform(1, 3).unwrap();
        let terms = s.enumerate_terms();
        assert_eq!(terms.len(), 4);
        assert!(terms[0].is_constant());
        assert_eq!(terms[1..].iter().map(|m| m.lags()[0]).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn reported_parameter_counts() {
        assert_eq!(VolterraStructure::uniform(2, 40).unwrap().count_params().unwrap(), 861);
        let whb = VolterraStructure::new(vec![80, 40, 20], true).unwrap();
        assert_eq!(whb.count_params().unwrap(), 2441);
        assert_eq!(VolterraStructure::uniform(3, 80).unwrap().count_params().unwrap(), 91881);
    }

    #[test]
    fn count_matches_enumeration_and_binomial() {
        for p in 1..=4 {
            for l in 1..=10 {
                let s = VolterraStructure::uniform(p, l).unwrap();
                let d = s.count_params().unwrap();
                assert_eq!(d as u128, binomial((l + p) as u128, l as u128).unwrap());
                assert_eq!(s.enumerate_terms().len(), d);
            }
        }
    }

    #[test]
    fn absurd_sizes_are_sizing_errors() {
        let s = VolterraStructure::uniform(40, usize::MAX / 2).unwrap();
        assert!(matches!(s.count_params(), Err(Error::Sizing(_))));
    }

    #[test]
    fn invalid_structures_rejected() {
        assert!(VolterraStructure::new(vec![], true).is_err());
        assert!(VolterraStructure::new(vec![3, 0], true).is_err());
        let bad: std::result::Result<VolterraStructure, _> =
            serde_json::from_str(r#"{"degree":3,"memory_lengths":[2,2]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn term_position_inverts_enumeration() {
        let s = VolterraStructure::new(vec![5, 4, 3], true).unwrap();
        for (i, t) in s.enumerate_terms().iter().enumerate() {
            assert_eq!(s.term_position(t.lags()), Some(i));
            let mut rev = t.lags().to_vec();
            rev.reverse();
            assert_eq!(s.term_position(&rev), Some(i));
        }
        assert_eq!(s.term_position(&[4, 4]), None);
        assert_eq!(s.term_position(&[0, 0, 0, 0]), None);
    }

    #[test]
    fn regressor_products() {
        // u_n = 2, u_{n-1} = 3
        let data = Dataset::new(vec![3.0, 2.0], vec![0.0, 0.0], 1).unwrap();
        let s = VolterraStructure::uniform(2, 2).unwrap();
        let m = build_regressors(&data, &s).unwrap();
        assert_eq!(m.rows(), 1);
        let pos = s.term_position(&[0, 1]).unwrap();
        assert_eq!(m.get(0, pos), 6.0);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn constant_input_gives_squared_entries() {
        let c = 1.7;
        let data = Dataset::new(vec![c; 12], vec![0.0; 12], 2).unwrap();
        let s = VolterraStructure::uniform(2, 3).unwrap();
        let m = build_regressors(&data, &s).unwrap();
        assert_eq!(m.rows(), 10);
        let terms = s.enumerate_terms();
        for i in 0..m.rows() {
            for (j, t) in terms.iter().enumerate() {
                let expect = match t.order() {
                    0 => 1.0,
                    1 => c,
                    _ => c * c,
                };
                assert_eq!(m.get(i, j), expect);
            }
        }
    }

    #[test]
    fn short_dataset_is_empty_design() {
        let data = Dataset::new(vec![1.0; 3], vec![0.0; 3], 3).unwrap();
        let s = VolterraStructure::uniform(1, 2).unwrap();
        assert!(matches!(build_regressors(&data, &s), Err(Error::EmptyDesign { .. })));
    }

    #[test]
    fn model_memory_must_fit_declared_tau() {
        let data = Dataset::new(vec![1.0; 10], vec![0.0; 10], 1).unwrap();
        let s = VolterraStructure::uniform(1, 4).unwrap();
        assert!(build_regressors(&data, &s).is_err());
    }

    #[test]
    fn predict_trivial_models() {
        let u: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let data = Dataset::new(u, vec![0.0; 20], 2).unwrap();
        let s = VolterraStructure::uniform(2, 3).unwrap();
        let d = s.count_params().unwrap();
        let zero = predict(&vec![0.0; d], &s, &data).unwrap();
        assert_eq!(zero.len(), 18);
        assert!(zero.iter().all(|&v| v == 0.0));
        let mut e0 = vec![0.0; d];
        e0[0] = 1.0;
        assert!(predict(&e0, &s, &data).unwrap().iter().all(|&v| v == 1.0));
        assert!(matches!(
            predict(&vec![0.0; d + 1], &s, &data),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linear_model_is_convolution() {
        let u: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let fir = [0.5, -0.25, 0.125, 2.0];
        let data = Dataset::new(u.clone(), vec![0.0; 30], 3).unwrap();
        let s = VolterraStructure::new(vec![4], false).unwrap();
        let yhat = predict(&fir, &s, &data).unwrap();
        for (row, n) in (3..30).enumerate() {
            let conv: f64 = (0..4).map(|k| fir[k] * u[n - k]).sum();
            assert_eq!(yhat[row], conv);
        }
    }

    #[test]
    fn multiplicity_counts_distinct_permutations() {
        assert_eq!(MultiIndex::from_lags(vec![1, 0]).multiplicity(), 2);
        assert_eq!(MultiIndex::from_lags(vec![2, 2]).multiplicity(), 1);
        assert_eq!(MultiIndex::from_lags(vec![0, 1, 1]).multiplicity(), 3);
        assert_eq!(MultiIndex::from_lags(vec![0, 1, 2]).multiplicity(), 6);
        assert_eq!(MultiIndex::constant().multiplicity(), 1);
    }

    #[test]
    fn coefficient_csv_round_trip() {
        let s = VolterraStructure::new(vec![3, 2], true).unwrap();
        let d = s.count_params().unwrap();
        let coeffs: Vec<f64> = (0..d).map(|i| (i as f64 + 0.1).sqrt() * 1e-3).collect();
        let mut buf = Vec::new();
        write_coefficients_csv(&mut buf, &s, &coeffs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("order,lags,value\n0,,"));
        assert!(text.contains("\n2,0;1,"));
        assert_eq!(read_coefficients_csv(&buf[..], &s).unwrap(), coeffs);
    }

    #[test]
    fn coefficient_csv_rejects_foreign_terms() {
        let s = VolterraStructure::uniform(1, 2).unwrap();
        let text = "order,lags,value\n1,5,1.0\n";
        assert!(matches!(read_coefficients_csv(text.as_bytes(), &s), Err(Error::Data(_))));
    }
}
