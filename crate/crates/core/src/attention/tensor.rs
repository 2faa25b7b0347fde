//! Dense row-major matrices and the on-disk tensor format.
//!
//! File layout, all little-endian: magic `GFTN`, `u32` rank, `rank` x `u32`
//! dims, then `f32` values in row-major order. A file may hold several
//! tensors back to back.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"GFTN";
const MAX_RANK: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("matrix data", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape("matrix row", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self * other`, summing over the inner index in ascending order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("inner dim {}", self.cols),
                format!("{}", other.rows),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a.iter().enumerate() {
                let b = other.row(k);
                for (d, &bkj) in dst.iter_mut().zip(b) {
                    *d += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`; each entry is one dot product in ascending index order.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape(
                "matmul_transposed",
                format!("inner dim {}", self.cols),
                format!("{}", other.cols),
            ));
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |i, j| dot(self.row(i), other.row(j))))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::shape("vstack columns", cols, m.cols));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Matrix::from_vec(rows, cols, data)
    }

    /// Row-wise concatenation `[self | other]`.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape("hcat rows", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Matrix::from_vec(self.rows, cols, data)
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.rows, self.cols],
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// A raw tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn vector(data: &[f64]) -> Tensor {
        Tensor {
            dims: vec![data.len()],
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Interprets a rank-2 tensor as a matrix, or a rank-1 tensor as one row.
    pub fn into_matrix(self) -> Result<Matrix> {
        let (rows, cols) = match self.dims.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => {
                return Err(Error::TensorFormat(format!(
                    "expected rank 1 or 2, got dims {:?}",
                    self.dims
                )))
            }
        };
        Matrix::from_vec(rows, cols, self.data.into_iter().map(f64::from).collect())
    }
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    let expected: usize = t.dims.iter().product();
    if expected != t.data.len() {
        return Err(Error::TensorFormat(format!(
            "dims {:?} need {expected} values, have {}",
            t.dims,
            t.data.len()
        )));
    }
    w.write_all(&MAGIC)?;
    w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
    for &d in &t.dims {
        let d = u32::try_from(d).map_err(|_| Error::TensorFormat(format!("dim {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in &t.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads one tensor; `Ok(None)` at a clean end of input.
pub fn read_tensor(r: &mut impl Read) -> Result<Option<Tensor>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut magic[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    match got {
        0 => return Ok(None),
        4 if magic == MAGIC => {}
        _ => return Err(Error::TensorFormat(format!("bad magic {:?}", &magic[..got]))),
    }
    let rank = read_u32(r)?;
    if rank > MAX_RANK {
        return Err(Error::TensorFormat(format!("rank {rank} too large")));
    }
    let dims = (0..rank)
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let count: usize = dims.iter().product();
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::TensorFormat(format!("truncated data: {e}")))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Some(Tensor { dims, data }))
}

pub fn read_all_tensors(r: &mut impl Read) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    while let Some(t) = read_tensor(r)? {
        out.push(t);
    }
    Ok(out)
}
