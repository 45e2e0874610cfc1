use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Lower-triangular Cholesky factor `A = C·Cᵀ` of a symmetric positive
/// definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    factor: Mat,
}

impl Cholesky {
    /// Factors `a`, which must be symmetric (see [`Mat::checked_symmetric`])
    /// and strictly positive definite.
    pub fn new(a: &Mat) -> Result<Self> {
        let a = a.checked_symmetric()?;
        Self::factor_unchecked(a)
    }

    /// Skips the symmetry check; only the lower triangle of `a` is read.
    pub(crate) fn factor_unchecked(mut a: Mat) -> Result<Self> {
        factor_in_place(&mut a)?;
        Ok(Cholesky { factor: a })
    }

    /// Refactors with a new matrix of the same size, reusing storage. Only
    /// the lower triangle of `a` is read. On failure `self` is unusable
    /// until the next successful call.
    pub fn refactor(&mut self, a: &Mat) -> Result<()> {
        self.factor.copy_from(a)?;
        factor_in_place(&mut self.factor)
    }

    /// Solves `A·X = B` in place.
    pub fn solve_in_place(&self, b: &mut Mat) -> Result<()> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::shape("spd_solve", self.factor.shape(), b.shape()));
        }
        let c = &self.factor;
        for col in 0..b.cols() {
            for i in 0..n {
                let mut s = b[(i, col)];
                for k in 0..i {
                    s -= c[(i, k)] * b[(k, col)];
                }
                b[(i, col)] = s / c[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = b[(i, col)];
                for k in (i + 1)..n {
                    s -= c[(k, i)] * b[(k, col)];
                }
                b[(i, col)] = s / c[(i, i)];
            }
        }
        Ok(())
    }

    /// Solves `X·A = B` in place, row by row.
    pub fn solve_right_in_place(&self, b: &mut Mat) -> Result<()> {
        let n = self.dim();
        if b.cols() != n {
            return Err(Error::shape(
                "spd_solve_right",
                b.shape(),
                self.factor.shape(),
            ));
        }
        let c = &self.factor;
        for r in 0..b.rows() {
            for i in 0..n {
                let mut s = b[(r, i)];
                for k in 0..i {
                    s -= c[(i, k)] * b[(r, k)];
                }
                b[(r, i)] = s / c[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = b[(r, i)];
                for k in (i + 1)..n {
                    s -= c[(k, i)] * b[(r, k)];
                }
                b[(r, i)] = s / c[(i, i)];
            }
        }
        Ok(())
    }
}

fn factor_in_place(a: &mut Mat) -> Result<()> {
    let n = a.rows();
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / d;
        }
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn lower(&self) -> &Mat {
        &self.factor
    }

    /// Solves `A·X = B`.
    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        let mut x = b.clone();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// Solves `X·A = B`, i.e. `X = B·A⁻¹`, using the symmetry of `A`.
    pub fn solve_right(&self, b: &Mat) -> Result<Mat> {
        let mut x = b.clone();
        self.solve_right_in_place(&mut x)?;
        Ok(x)
    }

    /// Explicit inverse, symmetrized.
    pub fn inverse(&self) -> Mat {
        let n = self.dim();
        let mut inv = self
            .solve(&Mat::identity(n))
            .expect("identity has matching dimension");
        inv.symmetrize();
        inv
    }

    /// Squared weighted norm `vᵀ·A⁻¹·v` of a column vector.
    pub fn inv_quadratic_form(&self, v: &Mat) -> Result<f64> {
        if v.rows() != self.dim() || v.cols() != 1 {
            return Err(Error::shape(
                "inv_quadratic_form",
                self.factor.shape(),
                v.shape(),
            ));
        }
        // ‖C⁻¹ v‖²
        let c = &self.factor;
        let n = self.dim();
        let mut small = [0.0; 8];
        let mut heap = Vec::new();
        let z: &mut [f64] = if n <= small.len() {
            &mut small[..n]
        } else {
            heap.resize(n, 0.0);
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = v[(i, 0)];
            for k in 0..i {
                s -= c[(i, k)] * z[k];
            }
            z[i] = s / c[(i, i)];
            acc += z[i] * z[i];
        }
        Ok(acc)
    }
}

/// Solves `A·X = B` for symmetric positive definite `A` without forming `A⁻¹`.
pub fn spd_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    Cholesky::new(a)?.solve(b)
}

/// Explicit inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &Mat) -> Result<Mat> {
    Ok(Cholesky::new(a)?.inverse())
}

const NEGATIVE_PIVOT_TOL: f64 = 1e-8;

/// Lower-triangular `S` with `S·Sᵀ = A` for a positive *semi*definite `A`.
///
/// Pivots at or below `zero_tol · max(diag(A))` are treated as exact zeros and
/// their columns are left empty, so zero-variance channels map to exactly zero.
/// A clearly negative pivot is reported as [`Error::NotPositiveDefinite`].
pub fn psd_sqrt(a: &Mat, zero_tol: f64) -> Result<Mat> {
    let mut s = a.checked_symmetric()?;
    let n = s.rows();
    let scale = s.diagonal().into_iter().fold(0.0_f64, f64::max);
    let tol = zero_tol * scale;
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= s[(j, k)] * s[(j, k)];
        }
        if d <= tol {
            if d < -NEGATIVE_PIVOT_TOL * scale {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            for i in j..n {
                s[(i, j)] = 0.0;
            }
        } else {
            let d = d.sqrt();
            s[(j, j)] = d;
            for i in (j + 1)..n {
                let mut v = s[(i, j)];
                for k in 0..j {
                    v -= s[(i, k)] * s[(j, k)];
                }
                s[(i, j)] = v / d;
            }
        }
        for i in 0..j {
            s[(i, j)] = 0.0;
        }
    }
    Ok(s)
}
