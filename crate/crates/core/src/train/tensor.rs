use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: alloc::vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            bail!(Shape, "{} values do not fill a {}x{} matrix", data.len(), rows, cols);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                bail!(Shape, "ragged rows: {} vs {}", r.len(), cols);
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self { rows: end - start, cols: self.cols, data: self.data[start * self.cols..end * self.cols].to_vec() }
    }

    /// Stacks blocks of equal width on top of each other.
    pub fn vstack(blocks: &[Matrix]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, b) in blocks.iter().enumerate() {
            if b.cols != cols {
                bail!(Shape, "block {} has width {}, expected {}", i, b.cols, cols);
            }
            data.extend_from_slice(&b.data);
            rows += b.rows;
        }
        Ok(Self { rows, cols, data })
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Self> {
        if self.cols != rhs.rows {
            bail!(Shape, "cannot multiply {}x{} by {}x{}", self.rows, self.cols, rhs.rows, rhs.cols);
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let r = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (oj, rj) in o.iter_mut().zip(r) {
                    *oj += a * rj;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs`.
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Self> {
        if self.rows != rhs.rows {
            bail!(Shape, "cannot multiply ({}x{})^T by {}x{}", self.rows, self.cols, rhs.rows, rhs.cols);
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for n in 0..self.rows {
            let r = rhs.row(n);
            for i in 0..self.cols {
                let a = self.data[n * self.cols + i];
                let o = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (oj, rj) in o.iter_mut().zip(r) {
                    *oj += a * rj;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^T`.
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Self> {
        if self.cols != rhs.cols {
            bail!(Shape, "cannot multiply {}x{} by ({}x{})^T", self.rows, self.cols, rhs.rows, rhs.cols);
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = a.iter().zip(rhs.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        Ok(out)
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = alloc::vec![0.0; self.cols];
        for r in 0..self.rows {
            for (acc, v) in s.iter_mut().zip(self.row(r)) {
                *acc += v;
            }
        }
        s
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_hand_results() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[&[1.0, 0.0, 2.0], &[0.0, 1.0, 1.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.as_slice(), &[1.0, 2.0, 4.0, 3.0, 4.0, 10.0, 5.0, 6.0, 16.0]);
        let ata = a.t_matmul(&a).unwrap();
        assert_eq!(ata.as_slice(), &[35.0, 44.0, 44.0, 56.0]);
        let aat = a.matmul_t(&a).unwrap();
        assert_eq!(aat.get(1, 2), 3.0 * 5.0 + 4.0 * 6.0);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn stacking_and_slicing_round_trip() {
        let a = Matrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let s = Matrix::vstack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.slice_rows(0, 1), a);
        assert_eq!(s.slice_rows(1, 3), b);
        assert_eq!(s.select_rows(&[2, 0]).as_slice(), &[5.0, 6.0, 1.0, 2.0]);
        assert!(Matrix::vstack(&[a, Matrix::zeros(1, 3)]).is_err());
    }
}
