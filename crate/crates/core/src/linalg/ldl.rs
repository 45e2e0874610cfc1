//! Symmetric indefinite `P·A·Pᵀ = L·D·Lᵀ` factorization with bounded
//! Bunch-Kaufman (rook) pivoting, and the low-rank trimming that turns it into
//! displacement factors `A ≈ L₀·M₀·L₀ᵀ`.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Bunch-Kaufman pivot threshold `(1 + √17) / 8`.
pub const BK_ALPHA: f64 = 0.640_388_203_202_207_6;

/// One diagonal block of `D`, starting at `start`, of size 1 or 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub size: usize,
}

/// Result of [`ldlt_bunch_kaufman`]: `A[perm[i]][perm[j]] = (L·D·Lᵀ)[i][j]`.
#[derive(Clone, Debug)]
pub struct LdlFactorization {
    perm: Vec<usize>,
    unit_lower: Mat,
    block_diag: Mat,
    blocks: Vec<Block>,
}

impl LdlFactorization {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Row `i` of `P·A·Pᵀ` is row `perm[i]` of `A`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn unit_lower(&self) -> &Mat {
        &self.unit_lower
    }

    pub fn block_diag(&self) -> &Mat {
        &self.block_diag
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// `P·A·Pᵀ` for the permutation of this factorization.
    pub fn permute(&self, a: &Mat) -> Mat {
        let n = self.dim();
        let mut out = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = a[(self.perm[i], self.perm[j])];
            }
        }
        out
    }

    /// `Pᵀ·L`, whose columns span the factored matrix in original ordering.
    pub fn unpermuted_lower(&self) -> Mat {
        let n = self.dim();
        let mut out = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(self.perm[i], j)] = self.unit_lower[(i, j)];
            }
        }
        out
    }

    /// `L·D·Lᵀ`
    pub fn reconstruct(&self) -> Mat {
        self.block_diag
            .congruence(&self.unit_lower)
            .expect("factors are square and conformant")
    }

    /// Spectral magnitude of a block: `|d|` for 1×1, the largest eigenvalue
    /// magnitude for 2×2.
    pub fn block_magnitude(&self, b: Block) -> f64 {
        let d = &self.block_diag;
        let s = b.start;
        if b.size == 1 {
            d[(s, s)].abs()
        } else {
            let (a, off, c) = (d[(s, s)], d[(s, s + 1)], d[(s + 1, s + 1)]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + off * off).sqrt();
            mean.abs() + rad
        }
    }

    /// Solves `A·X = B`; fails if any block of `D` is numerically singular.
    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::shape("ldl_solve", (n, n), b.shape()));
        }
        let scale = self
            .blocks
            .iter()
            .map(|&blk| self.block_magnitude(blk))
            .fold(0.0, f64::max);
        let tiny = f64::EPSILON * (n as f64) * scale;
        let l = &self.unit_lower;
        let d = &self.block_diag;
        let mut x = Mat::zeros(n, b.cols());
        for col in 0..b.cols() {
            // z = L⁻¹ P b
            let mut z: Vec<f64> = (0..n).map(|i| b[(self.perm[i], col)]).collect();
            for i in 0..n {
                let mut s = z[i];
                for k in 0..i {
                    s -= l[(i, k)] * z[k];
                }
                z[i] = s;
            }
            for blk in &self.blocks {
                let s = blk.start;
                if blk.size == 1 {
                    let p = d[(s, s)];
                    if !(p.abs() > tiny) {
                        return Err(singular_block(s, p));
                    }
                    z[s] /= p;
                } else {
                    let (a, off, c) = (d[(s, s)], d[(s, s + 1)], d[(s + 1, s + 1)]);
                    let det = a * c - off * off;
                    if !(det.abs() > tiny * scale) {
                        return Err(singular_block(s, det));
                    }
                    let (u, v) = (z[s], z[s + 1]);
                    z[s] = (c * u - off * v) / det;
                    z[s + 1] = (a * v - off * u) / det;
                }
            }
            for i in (0..n).rev() {
                let mut s = z[i];
                for k in (i + 1)..n {
                    s -= l[(k, i)] * z[k];
                }
                z[i] = s;
            }
            for i in 0..n {
                x[(self.perm[i], col)] = z[i];
            }
        }
        Ok(x)
    }
}

fn singular_block(start: usize, value: f64) -> Error {
    Error::Singular {
        context: format!("LDL block at {start} has magnitude {value:e}"),
    }
}

/// Bunch-Kaufman factorization of a symmetric (possibly indefinite or
/// singular) matrix.
///
/// Pivots are chosen by the bounded (rook) variant of the Bunch-Kaufman rule.
/// Plain partial pivoting can take a tiny 1×1 pivot in a rank-deficient
/// trailing block, which inflates round-off into spurious nonzero blocks of
/// `D`; the rook search keeps `|L| ≤ 1/α` and `D` rank-revealing.
///
/// Inputs whose asymmetry exceeds `1e-8·‖A‖_F` are rejected; otherwise the
/// matrix is symmetrized before factoring.
pub fn ldlt_bunch_kaufman(a: &Mat) -> Result<LdlFactorization> {
    let mut w = a.checked_symmetric()?;
    let n = w.rows();
    let mut l = Mat::identity(n);
    let mut d = Mat::zeros(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut blocks = Vec::new();

    let mut k = 0;
    while k < n {
        let akk = w[(k, k)].abs();
        let (mut colmax, mut r) = (0.0_f64, k);
        for i in (k + 1)..n {
            if w[(i, k)].abs() > colmax {
                colmax = w[(i, k)].abs();
                r = i;
            }
        }

        let two_by_two;
        if akk.max(colmax) == 0.0 {
            // zero column: D_kk = 0, multipliers zero
            blocks.push(Block { start: k, size: 1 });
            k += 1;
            continue;
        } else if akk >= BK_ALPHA * colmax {
            two_by_two = false;
        } else {
            // rook search: walk to an entry that is largest in both its row
            // and column, so multipliers stay bounded
            let (mut i, mut colmax_i, mut r) = (k, colmax, r);
            loop {
                let (mut rowmax, mut s) = (0.0_f64, r);
                for j in k..n {
                    if j != r && w[(j, r)].abs() > rowmax {
                        rowmax = w[(j, r)].abs();
                        s = j;
                    }
                }
                if w[(r, r)].abs() >= BK_ALPHA * rowmax {
                    two_by_two = false;
                    sym_swap(&mut w, &mut l, &mut perm, k, r);
                    break;
                } else if rowmax <= colmax_i {
                    two_by_two = true;
                    sym_swap(&mut w, &mut l, &mut perm, k, i);
                    let r = if r == k { i } else { r };
                    sym_swap(&mut w, &mut l, &mut perm, k + 1, r);
                    break;
                }
                (i, colmax_i, r) = (r, rowmax, s);
            }
        }

        if !two_by_two {
            let p = w[(k, k)];
            d[(k, k)] = p;
            for i in (k + 1)..n {
                l[(i, k)] = w[(i, k)] / p;
            }
            for i in (k + 1)..n {
                let li = l[(i, k)];
                if li == 0.0 {
                    continue;
                }
                for j in (k + 1)..=i {
                    let v = w[(i, j)] - li * p * l[(j, k)];
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
            blocks.push(Block { start: k, size: 1 });
            k += 1;
        } else {
            let (a11, a21, a22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
            let det = a11 * a22 - a21 * a21;
            d[(k, k)] = a11;
            d[(k + 1, k)] = a21;
            d[(k, k + 1)] = a21;
            d[(k + 1, k + 1)] = a22;
            for i in (k + 2)..n {
                let (u, v) = (w[(i, k)], w[(i, k + 1)]);
                l[(i, k)] = (u * a22 - v * a21) / det;
                l[(i, k + 1)] = (v * a11 - u * a21) / det;
            }
            for i in (k + 2)..n {
                let (li0, li1) = (l[(i, k)], l[(i, k + 1)]);
                for j in (k + 2)..=i {
                    let v = w[(i, j)] - li0 * w[(j, k)] - li1 * w[(j, k + 1)];
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
            blocks.push(Block { start: k, size: 2 });
            k += 2;
        }
    }

    Ok(LdlFactorization {
        perm,
        unit_lower: l,
        block_diag: d,
        blocks,
    })
}

/// Symmetric interchange of indices `i` and `j` (both in the active part).
fn sym_swap(w: &mut Mat, l: &mut Mat, perm: &mut [usize], i: usize, j: usize) {
    if i == j {
        return;
    }
    w.swap_rows(i, j);
    w.swap_cols(i, j);
    // already-computed multiplier rows follow the permutation
    let done = i.min(j);
    for c in 0..done {
        let t = l[(i, c)];
        l[(i, c)] = l[(j, c)];
        l[(j, c)] = t;
    }
    perm.swap(i, j);
}

/// Low-rank displacement factors `A ≈ L·M·Lᵀ` with `L` n×α and `M` α×α.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankFactors {
    pub l: Mat,
    pub m: Mat,
}

impl LowRankFactors {
    pub fn empty(n: usize) -> Self {
        LowRankFactors {
            l: Mat::zeros(n, 0),
            m: Mat::zeros(0, 0),
        }
    }

    pub fn alpha(&self) -> usize {
        self.m.rows()
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `L·M·Lᵀ`
    pub fn product(&self) -> Mat {
        if self.alpha() == 0 {
            return Mat::zeros(self.dim(), self.dim());
        }
        self.l
            .mul(&self.m)
            .and_then(|lm| lm.mul_t(&self.l))
            .expect("conformant factors")
    }
}

/// Default relative rank tolerance `n·10⁻¹²`.
pub fn default_rank_tol(n: usize) -> f64 {
    n.max(1) as f64 * 1e-12
}

/// Keeps the blocks of `D` whose magnitude exceeds `rel_tol` times the
/// largest block magnitude. 2×2 blocks are kept or dropped whole.
pub fn low_rank_trim(f: &LdlFactorization, rel_tol: f64) -> Result<LowRankFactors> {
    low_rank_trim_scaled(f, rel_tol, 0.0)
}

/// As [`low_rank_trim`], but the threshold is `rel_tol · max(max block, scale)`.
///
/// `scale` lets callers express "negligible" relative to the magnitude of the
/// terms that were subtracted to form `A`, so that an `A` that is pure
/// cancellation noise trims to rank zero.
pub fn low_rank_trim_scaled(
    f: &LdlFactorization,
    rel_tol: f64,
    scale: f64,
) -> Result<LowRankFactors> {
    if !(rel_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance must be non-negative, got {rel_tol}"
        )));
    }
    let n = f.dim();
    let max_block = f
        .blocks
        .iter()
        .map(|&b| f.block_magnitude(b))
        .fold(0.0, f64::max);
    let threshold = rel_tol * max_block.max(scale);
    let keep: Vec<usize> = f
        .blocks
        .iter()
        .filter(|&&b| {
            let mag = f.block_magnitude(b);
            mag > 0.0 && mag > threshold
        })
        .flat_map(|b| b.start..b.start + b.size)
        .collect();
    if keep.is_empty() {
        return Ok(LowRankFactors::empty(n));
    }
    let l = f.unpermuted_lower().select_columns(&keep);
    let m = f.block_diag.select_principal(&keep);
    Ok(LowRankFactors { l, m })
}

/// Sum of the magnitudes of blocks that [`low_rank_trim`] would drop.
pub fn dropped_mass(f: &LdlFactorization, rel_tol: f64) -> f64 {
    let mags: Vec<f64> = f.blocks.iter().map(|&b| f.block_magnitude(b)).collect();
    let max_block = mags.iter().copied().fold(0.0, f64::max);
    mags.into_iter()
        .filter(|&m| !(m > 0.0 && m > rel_tol * max_block))
        .sum()
}

/// Inverse of a symmetric, possibly indefinite, nonsingular matrix.
pub fn symmetric_inverse(a: &Mat) -> Result<Mat> {
    let f = ldlt_bunch_kaufman(a)?;
    let mut inv = f.solve(&Mat::identity(a.rows()))?;
    inv.symmetrize();
    Ok(inv)
}
