use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Reusable workspace for inverting a small square matrix by Gauss-Jordan
/// elimination with partial pivoting. Symmetric inputs give symmetrized
/// outputs.
#[derive(Clone, Debug)]
pub struct SmallInverse {
    work: Mat,
}

impl SmallInverse {
    pub fn new(n: usize) -> Self {
        SmallInverse {
            work: Mat::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.work.rows()
    }

    /// Writes `a⁻¹` into `out`. A pivot at or below `n·ε·max|a|` is reported
    /// as [`Error::Singular`].
    pub fn invert_symmetric(&mut self, a: &Mat, out: &mut Mat) -> Result<()> {
        let n = self.dim();
        if a.shape() != (n, n) || out.shape() != (n, n) {
            return Err(Error::shape("small_inverse", (n, n), a.shape()));
        }
        self.work.copy_from(a)?;
        out.fill(0.0);
        for i in 0..n {
            out[(i, i)] = 1.0;
        }
        let tiny = f64::EPSILON * n as f64 * a.max_abs();
        let w = &mut self.work;
        for c in 0..n {
            let mut p = c;
            for r in (c + 1)..n {
                if w[(r, c)].abs() > w[(p, c)].abs() {
                    p = r;
                }
            }
            let piv = w[(p, c)];
            if !(piv.abs() > tiny) || !piv.is_finite() {
                return Err(Error::Singular {
                    context: format!("pivot {c} of {n}x{n} inverse is {piv:e}"),
                });
            }
            w.swap_rows(c, p);
            out.swap_rows(c, p);
            let inv = 1.0 / piv;
            for j in 0..n {
                w[(c, j)] *= inv;
                out[(c, j)] *= inv;
            }
            for r in 0..n {
                let f = w[(r, c)];
                if r == c || f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    w[(r, j)] -= f * w[(c, j)];
                    out[(r, j)] -= f * out[(c, j)];
                }
            }
        }
        out.symmetrize();
        Ok(())
    }
}
