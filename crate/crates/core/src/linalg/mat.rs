use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix stored in row-major order.
///
/// Column vectors are matrices with a single column. All arithmetic is
/// shape-checked and returns [`Error::Shape`] on mismatch.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "MatRepr", into = "MatRepr")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatRepr> for Mat {
    type Error = Error;

    fn try_from(r: MatRepr) -> Result<Self> {
        Mat::from_row_major(r.rows, r.cols, r.data)
    }
}

impl From<Mat> for MatRepr {
    fn from(m: Mat) -> Self {
        MatRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Mat::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn column(values: &[f64]) -> Self {
        Mat {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Mat::from_row_major(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn add(&self, b: &Mat) -> Result<Mat> {
        self.check_same("add", b)?;
        let data = self.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, b: &Mat) -> Result<Mat> {
        self.check_same("sub", b)?;
        let data = self.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self += s * b`
    pub fn add_scaled_assign(&mut self, s: f64, b: &Mat) -> Result<()> {
        self.check_same("add_scaled", b)?;
        for (x, y) in self.data.iter_mut().zip(&b.data) {
            *x += s * y;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| s * x).collect(),
        }
    }

    /// `self · b`
    pub fn mul(&self, b: &Mat) -> Result<Mat> {
        if self.cols != b.rows {
            return Err(Error::shape("mul", self.shape(), b.shape()));
        }
        let (n, k, m) = (self.rows, self.cols, b.cols);
        let mut c = Mat::zeros(n, m);
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let c_row = &mut c.data[i * m..(i + 1) * m];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &b.data[p * m..(p + 1) * m];
                for (c, &bv) in c_row.iter_mut().zip(b_row) {
                    *c += a * bv;
                }
            }
        }
        Ok(c)
    }

    /// `self · bᵀ` without materializing the transpose.
    pub fn mul_t(&self, b: &Mat) -> Result<Mat> {
        if self.cols != b.cols {
            return Err(Error::shape("mul_t", self.shape(), b.shape()));
        }
        let (n, k, m) = (self.rows, self.cols, b.rows);
        let mut c = Mat::zeros(n, m);
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &b.data[j * k..(j + 1) * k];
                c.data[i * m + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            }
        }
        Ok(c)
    }

    /// `selfᵀ · b` without materializing the transpose.
    pub fn t_mul(&self, b: &Mat) -> Result<Mat> {
        if self.rows != b.rows {
            return Err(Error::shape("t_mul", self.shape(), b.shape()));
        }
        let (k, n, m) = (self.rows, self.cols, b.cols);
        let mut c = Mat::zeros(n, m);
        for p in 0..k {
            let a_row = &self.data[p * n..(p + 1) * n];
            let b_row = &b.data[p * m..(p + 1) * m];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let c_row = &mut c.data[i * m..(i + 1) * m];
                for (c, &bv) in c_row.iter_mut().zip(b_row) {
                    *c += a * bv;
                }
            }
        }
        Ok(c)
    }

    /// `a · self · aᵀ` for square `self`.
    pub fn congruence(&self, a: &Mat) -> Result<Mat> {
        a.mul(self)?.mul_t(a)
    }

    /// Replaces `self` with `(self + selfᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        debug_assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn symmetrized(&self) -> Mat {
        let mut m = self.clone();
        m.symmetrize();
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|a_ij - a_ji|` of a square matrix.
    pub fn asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                d = d.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        d
    }

    /// Columns `idx` of `self`, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (c, &j) in idx.iter().enumerate() {
                out.data[i * idx.len() + c] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Square sub-block `idx × idx`.
    pub fn select_principal(&self, idx: &[usize]) -> Mat {
        let k = idx.len();
        let mut out = Mat::zeros(k, k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * k + b] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub(crate) fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub(crate) fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// Rejects asymmetry above `1e-8 · ‖A‖_F` and returns the symmetrized matrix.
    pub fn checked_symmetric(&self) -> Result<Mat> {
        if !self.is_square() {
            return Err(Error::shape("symmetric", self.shape(), self.shape()));
        }
        let tolerance = SYMMETRY_TOL * self.frobenius_norm();
        let deviation = self.asymmetry();
        if deviation > tolerance {
            return Err(Error::Asymmetric {
                deviation,
                tolerance,
            });
        }
        Ok(self.symmetrized())
    }

    fn check_same(&self, op: &'static str, b: &Mat) -> Result<()> {
        if self.shape() != b.shape() {
            return Err(Error::shape(op, self.shape(), b.shape()));
        }
        Ok(())
    }
}

/// Relative asymmetry accepted before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// In-place kernels for hot loops. Outputs must already have the right
/// shape; nothing is allocated.
impl Mat {
    pub fn copy_from(&mut self, src: &Mat) -> Result<()> {
        self.check_same("copy_from", src)?;
        self.data.copy_from_slice(&src.data);
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `self += s · a · b`
    pub fn mul_acc(&mut self, s: f64, a: &Mat, b: &Mat) -> Result<()> {
        if a.cols != b.rows || self.rows != a.rows || self.cols != b.cols {
            return Err(Error::shape("mul_acc", a.shape(), b.shape()));
        }
        let (k, m) = (a.cols, b.cols);
        for i in 0..a.rows {
            let a_row = &a.data[i * k..(i + 1) * k];
            let c_row = &mut self.data[i * m..(i + 1) * m];
            for (p, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let av = s * av;
                let b_row = &b.data[p * m..(p + 1) * m];
                for (c, &bv) in c_row.iter_mut().zip(b_row) {
                    *c += av * bv;
                }
            }
        }
        Ok(())
    }

    /// `self += s · a · bᵀ`
    pub fn mul_t_acc(&mut self, s: f64, a: &Mat, b: &Mat) -> Result<()> {
        if a.cols != b.cols || self.rows != a.rows || self.cols != b.rows {
            return Err(Error::shape("mul_t_acc", a.shape(), b.shape()));
        }
        let (k, m) = (a.cols, b.rows);
        for i in 0..a.rows {
            let a_row = &a.data[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &b.data[j * k..(j + 1) * k];
                let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
                self.data[i * m + j] += s * dot;
            }
        }
        Ok(())
    }

    /// `self += s · aᵀ · b`
    pub fn t_mul_acc(&mut self, s: f64, a: &Mat, b: &Mat) -> Result<()> {
        if a.rows != b.rows || self.rows != a.cols || self.cols != b.cols {
            return Err(Error::shape("t_mul_acc", a.shape(), b.shape()));
        }
        let (n, m) = (a.cols, b.cols);
        for p in 0..a.rows {
            let a_row = &a.data[p * n..(p + 1) * n];
            let b_row = &b.data[p * m..(p + 1) * m];
            for (i, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let av = s * av;
                let c_row = &mut self.data[i * m..(i + 1) * m];
                for (c, &bv) in c_row.iter_mut().zip(b_row) {
                    *c += av * bv;
                }
            }
        }
        Ok(())
    }

    /// `self = a · b`
    pub fn mul_into(&mut self, a: &Mat, b: &Mat) -> Result<()> {
        self.data.fill(0.0);
        self.mul_acc(1.0, a, b)
    }

    /// `self = a · bᵀ`
    pub fn mul_t_into(&mut self, a: &Mat, b: &Mat) -> Result<()> {
        self.data.fill(0.0);
        self.mul_t_acc(1.0, a, b)
    }

    /// `self = aᵀ · b`
    pub fn t_mul_into(&mut self, a: &Mat, b: &Mat) -> Result<()> {
        self.data.fill(0.0);
        self.t_mul_acc(1.0, a, b)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}
