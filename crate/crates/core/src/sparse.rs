//! Compressed-sparse-column complex matrices.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::liouville::C_ZERO;

#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, col_ptr: vec![0; ncols + 1], row_idx: Vec::new(), values: Vec::new() }
    }

    /// Validates raw CSC arrays; row indices must be strictly increasing
    /// within every column.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<C64>,
    ) -> Result<Self> {
        if col_ptr.len() != ncols + 1 || col_ptr[0] != 0 || col_ptr[ncols] != row_idx.len() {
            return Err(Error::DimensionMismatch("malformed column pointer array".into()));
        }
        if row_idx.len() != values.len() {
            return Err(Error::DimensionMismatch("row index and value arrays differ in length".into()));
        }
        for j in 0..ncols {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(Error::InvalidArgument("column pointers must be non-decreasing".into()));
            }
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            if rows.windows(2).any(|w| w[0] >= w[1]) || rows.last().is_some_and(|&r| r >= nrows) {
                return Err(Error::InvalidArgument(format!("bad row indices in column {j}")));
            }
        }
        Ok(Self { nrows, ncols, col_ptr, row_idx, values })
    }

    /// Builds from dense storage, dropping entries with `|a| ≤ drop_tol`.
    pub fn from_dense(m: &DMatrix<C64>, drop_tol: f64) -> Self {
        let mut b = CscBuilder::new(m.nrows());
        let mut col = Vec::new();
        for j in 0..m.ncols() {
            col.clear();
            col.extend((0..m.nrows()).map(|i| (i, m[(i, j)])).filter(|(_, v)| v.norm() > drop_tol));
            b.push_column(&mut col);
        }
        b.finish()
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![C64::new(1.0, 0.0); n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[C64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    pub fn max_column_nnz(&self) -> usize {
        self.col_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (rows, vals) = self.column(j);
        rows.binary_search(&i).map_or(C_ZERO, |k| vals[k])
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols, "matvec input length");
        assert_eq!(y.len(), self.nrows, "matvec output length");
        y.fill(C_ZERO);
        for (j, &xj) in x.iter().enumerate() {
            if xj == C_ZERO {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C_ZERO; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &CscMatrix) -> Result<CscMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut acc = vec![C_ZERO; self.nrows];
        let mut touched = vec![false; self.nrows];
        let mut pattern = Vec::new();
        let mut col = Vec::new();
        let mut b = CscBuilder::new(self.nrows);
        for j in 0..other.ncols {
            let (krows, kvals) = other.column(j);
            for (&k, &bkj) in krows.iter().zip(kvals) {
                let (rows, vals) = self.column(k);
                for (&i, &aik) in rows.iter().zip(vals) {
                    if !touched[i] {
                        touched[i] = true;
                        pattern.push(i);
                    }
                    acc[i] += aik * bkj;
                }
            }
            col.clear();
            for &i in &pattern {
                col.push((i, acc[i]));
                acc[i] = C_ZERO;
                touched[i] = false;
            }
            pattern.clear();
            b.push_column(&mut col);
        }
        Ok(b.finish())
    }

    /// `self + c · other`.
    pub fn add_scaled(&self, other: &CscMatrix, c: C64) -> Result<CscMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch("sparse shapes differ".into()));
        }
        let mut b = CscBuilder::new(self.nrows);
        let mut col = Vec::new();
        for j in 0..self.ncols {
            col.clear();
            let (r1, v1) = self.column(j);
            let (r2, v2) = other.column(j);
            col.extend(r1.iter().copied().zip(v1.iter().copied()));
            col.extend(r2.iter().copied().zip(v2.iter().map(|v| v * c)));
            b.push_column(&mut col);
        }
        Ok(b.finish())
    }

    pub fn sub(&self, other: &CscMatrix) -> Result<CscMatrix> {
        self.add_scaled(other, C64::new(-1.0, 0.0))
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &CscMatrix) -> Result<CscMatrix> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn scale(&self, c: C64) -> CscMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Largest entry modulus; zero for the empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Induced 1-norm: the largest column sum of moduli.
    pub fn norm1(&self) -> f64 {
        (0..self.ncols).map(|j| self.column(j).1.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Writes one `row col re im` line per stored entry (0-based indices).
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for j in 0..self.ncols {
            let (rows, vals) = self.column(j);
            for (&i, v) in rows.iter().zip(vals) {
                writeln!(w, "{i} {j} {:.16e} {:.16e}", v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Column-by-column CSC construction.
pub struct CscBuilder {
    nrows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CscBuilder {
    pub fn new(nrows: usize) -> Self {
        Self { nrows, col_ptr: vec![0], row_idx: Vec::new(), values: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, nnz: usize) -> Self {
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        col_ptr.push(0);
        Self { nrows, col_ptr, row_idx: Vec::with_capacity(nnz), values: Vec::with_capacity(nnz) }
    }

    /// Appends a column given as unsorted `(row, value)` pairs. Duplicate
    /// rows are summed and exact zeros dropped; `entries` is left sorted.
    pub fn push_column(&mut self, entries: &mut [(usize, C64)]) {
        entries.sort_unstable_by_key(|e| e.0);
        let mut k = 0;
        while k < entries.len() {
            let row = entries[k].0;
            debug_assert!(row < self.nrows);
            let mut v = C_ZERO;
            while k < entries.len() && entries[k].0 == row {
                v += entries[k].1;
                k += 1;
            }
            if v != C_ZERO {
                self.row_idx.push(row);
                self.values.push(v);
            }
        }
        self.col_ptr.push(self.row_idx.len());
    }

    /// Appends all columns of another builder with the same row count.
    pub fn append(&mut self, other: CscBuilder) {
        assert_eq!(self.nrows, other.nrows);
        let base = self.row_idx.len();
        self.col_ptr.extend(other.col_ptr[1..].iter().map(|p| p + base));
        self.row_idx.extend(other.row_idx);
        self.values.extend(other.values);
    }

    pub fn ncols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn finish(self) -> CscMatrix {
        CscMatrix {
            nrows: self.nrows,
            ncols: self.col_ptr.len() - 1,
            col_ptr: self.col_ptr,
            row_idx: self.row_idx,
            values: self.values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<C64> {
        DMatrix::from_fn(r, c, |_, _| {
            if rng.gen_bool(0.3) {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                C_ZERO
            }
        })
    }

    #[test]
    fn dense_round_trip_and_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sparse(&mut rng, 7, 5);
        let b = random_sparse(&mut rng, 5, 6);
        let sa = CscMatrix::from_dense(&a, 0.0);
        let sb = CscMatrix::from_dense(&b, 0.0);
        assert_eq!(sa.to_dense(), a);
        let prod = sa.matmul(&sb).unwrap().to_dense();
        assert!((prod - &a * &b).iter().all(|z| z.norm() < 1e-14));
        let x: Vec<C64> = (0..5).map(|k| C64::new(k as f64, 1.0)).collect();
        let y = sa.matvec(&x);
        let yd = &a * nalgebra::DVector::from_vec(x);
        assert!(y.iter().zip(yd.iter()).all(|(p, q)| (p - q).norm() < 1e-14));
        assert!(sa.matmul(&sa).is_err());
    }

    #[test]
    fn builder_merges_duplicates_and_appends() {
        let mut b = CscBuilder::new(3);
        b.push_column(&mut [(2, C64::new(1.0, 0.0)), (0, C64::new(2.0, 0.0)), (2, C64::new(-1.0, 0.0))]);
        let mut tail = CscBuilder::new(3);
        tail.push_column(&mut [(1, C64::new(5.0, 0.0))]);
        b.append(tail);
        let m = b.finish();
        assert_eq!(m.ncols(), 2);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), C64::new(2.0, 0.0));
        assert_eq!(m.get(2, 0), C_ZERO);
        assert_eq!(m.get(1, 1), C64::new(5.0, 0.0));
    }

    #[test]
    fn from_parts_validates() {
        assert!(CscMatrix::from_parts(2, 1, vec![0, 2], vec![1, 0], vec![C_ZERO; 2]).is_err());
        assert!(CscMatrix::from_parts(2, 1, vec![0, 1], vec![2], vec![C_ZERO]).is_err());
        assert!(CscMatrix::from_parts(2, 1, vec![0, 1], vec![1], vec![C_ZERO]).is_ok());
    }

    #[test]
    fn coo_export_lists_entries() {
        let m = CscMatrix::identity(2);
        let mut out = Vec::new();
        m.write_coo(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("1 1 1.0000000000000000e0 0.0000000000000000e0"));
    }
}
