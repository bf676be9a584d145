use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// The substrate for all weights, streams, and traces in this crate.
/// Everything is 64-bit; gradient verification needs the headroom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `out += self · x`
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec: input length mismatch");
        assert_eq!(out.len(), self.rows, "matvec: output length mismatch");
        for (i, row) in self.iter_rows().enumerate() {
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[i] += acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_add(x, &mut out);
        out
    }

    /// `out += selfᵀ · x`
    pub fn tr_matvec_add(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.rows, "tr_matvec: input length mismatch");
        assert_eq!(out.len(), self.cols, "tr_matvec: output length mismatch");
        for (i, row) in self.iter_rows().enumerate() {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += xi * a;
            }
        }
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.tr_matvec_add(x, &mut out);
        out
    }

    /// Rank-one accumulation `self += u · vᵀ`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows, "add_outer: row length mismatch");
        assert_eq!(v.len(), self.cols, "add_outer: col length mismatch");
        for (i, ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += ui * vj;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += s · x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len(), "axpy: length mismatch");
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn scale_slice(x: &mut [f64], s: f64) {
    for v in x {
        *v *= s;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Numerically stable softmax: the maximum is subtracted before
/// exponentiation, so arbitrarily large logits cannot overflow and the
/// argmax is preserved.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logits"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::invalid("non-finite logits"));
    }
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        let t = m.transpose();
        assert_eq!(t.matvec(&[1.0, 1.0]), m.tr_matvec(&[1.0, 1.0]));
    }

    #[test]
    fn add_outer_accumulates() {
        let mut m = Matrix::zeros(2, 3);
        m.add_outer(&[1.0, 2.0], &[3.0, 4.0, 5.0]);
        m.add_outer(&[1.0, 0.0], &[1.0, 1.0, 1.0]);
        assert_eq!(m.row(0), &[4.0, 5.0, 6.0]);
        assert_eq!(m.row(1), &[6.0, 8.0, 10.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_analytic_two_to_one() {
        // e^{ln 2} / (e^{ln 2} + 1) = 2/3
        let p = softmax(&[2.0_f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1] < 1e-12);
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }
}
