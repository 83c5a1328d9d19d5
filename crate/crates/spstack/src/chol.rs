//! Dense Cholesky factorization, triangular solves, and the fast
//! row/column-block-deletion update used for K-fold cross-validation.
//!
//! The convention throughout is the upper-triangular factor `U` with
//! `R = U' U`. Kernels operate on nalgebra's column-major storage directly:
//! column `j` of `U` occupies a contiguous prefix of the storage column, so
//! all inner loops run over contiguous slices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Which triangle of the passed matrix defines the system, and whether it
/// is applied transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
    LowerTranspose,
    UpperTranspose,
}

/// Upper-triangular Cholesky factor `U` with `R = U' U`.
///
/// Returns an error naming the pivot when `R` is not positive definite.
pub fn cholesky(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = r.nrows();
    assert_eq!(n, r.ncols(), "cholesky requires a square matrix");
    let mut u = DMatrix::<f64>::zeros(n, n);
    {
        let rs = r.as_slice();
        let us = u.as_mut_slice();
        for j in 0..n {
            let cj = j * n;
            for i in 0..j {
                let ci = i * n;
                let mut s = rs[cj + i];
                for k in 0..i {
                    s -= us[ci + k] * us[cj + k];
                }
                us[cj + i] = s / us[ci + i];
            }
            let mut d = rs[cj + j];
            for k in 0..j {
                d -= us[cj + k] * us[cj + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Factorization { index: j, value: d });
            }
            us[cj + j] = d.sqrt();
        }
    }
    Ok(u)
}

/// Cholesky with a one-shot diagonal jitter fallback.
///
/// Near-duplicate coordinates in real data can push a correlation matrix
/// to the edge of positive definiteness. If the plain factorization fails,
/// `1e-10` is added to the diagonal and the factorization retried once.
/// The boolean reports whether jitter was applied.
pub fn cholesky_with_jitter(r: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    match cholesky(r) {
        Ok(u) => Ok((u, false)),
        Err(_) => {
            let mut rj = r.clone();
            for i in 0..rj.nrows() {
                rj[(i, i)] += 1e-10;
            }
            let u = cholesky(&rj)?;
            Ok((u, true))
        }
    }
}

/// Solve the triangular system described by `side` against `factor`.
pub fn tri_solve(factor: &DMatrix<f64>, rhs: &DVector<f64>, side: Side) -> Result<DVector<f64>> {
    let mut x = rhs.clone();
    tri_solve_in_place(factor, x.as_mut_slice(), side)?;
    Ok(x)
}

/// In-place variant of [`tri_solve`] used by hot loops.
pub fn tri_solve_in_place(factor: &DMatrix<f64>, x: &mut [f64], side: Side) -> Result<()> {
    let n = factor.nrows();
    assert_eq!(n, factor.ncols(), "triangular factor must be square");
    assert_eq!(n, x.len(), "rhs length must match factor order");
    let f = factor.as_slice();
    for j in 0..n {
        let d = f[j * n + j];
        if d == 0.0 {
            return Err(Error::Factorization { index: j, value: 0.0 });
        }
    }
    match side {
        // Back substitution over columns of the upper triangle.
        Side::Upper => {
            for j in (0..n).rev() {
                let cj = j * n;
                x[j] /= f[cj + j];
                let xj = x[j];
                for i in 0..j {
                    x[i] -= f[cj + i] * xj;
                }
            }
        }
        // U'x = b is a forward substitution reading column prefixes.
        Side::UpperTranspose => {
            for i in 0..n {
                let ci = i * n;
                let mut s = x[i];
                for k in 0..i {
                    s -= f[ci + k] * x[k];
                }
                x[i] = s / f[ci + i];
            }
        }
        // Forward substitution over columns of the lower triangle.
        Side::Lower => {
            for j in 0..n {
                let cj = j * n;
                x[j] /= f[cj + j];
                let xj = x[j];
                for i in j + 1..n {
                    x[i] -= f[cj + i] * xj;
                }
            }
        }
        // L'x = b is a back substitution reading column suffixes.
        Side::LowerTranspose => {
            for i in (0..n).rev() {
                let ci = i * n;
                let mut s = x[i];
                for k in i + 1..n {
                    s -= f[ci + k] * x[k];
                }
                x[i] = s / f[ci + i];
            }
        }
    }
    Ok(())
}

/// Solve `R x = b` given the upper factor `U` of `R = U'U`.
pub fn spd_solve(upper: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let mut x = rhs.clone();
    spd_solve_in_place(upper, x.as_mut_slice())?;
    Ok(x)
}

/// In-place `R⁻¹ x` through the two triangular solves.
pub fn spd_solve_in_place(upper: &DMatrix<f64>, x: &mut [f64]) -> Result<()> {
    tri_solve_in_place(upper, x, Side::UpperTranspose)?;
    tri_solve_in_place(upper, x, Side::Upper)
}

/// An upper-triangular factor together with the contiguous block partition
/// used for cross-validation deletions.
#[derive(Debug, Clone)]
pub struct BlockedFactor {
    factor: DMatrix<f64>,
    partition: Vec<std::ops::Range<usize>>,
}

impl BlockedFactor {
    /// Factor `r` and record the partition. Blocks must be contiguous,
    /// disjoint, ordered, and cover every index.
    pub fn new(r: &DMatrix<f64>, partition: Vec<std::ops::Range<usize>>) -> Result<Self> {
        let factor = cholesky(r)?;
        Self::from_factor(factor, partition)
    }

    /// Wrap an existing upper factor.
    pub fn from_factor(
        factor: DMatrix<f64>,
        partition: Vec<std::ops::Range<usize>>,
    ) -> Result<Self> {
        let n = factor.nrows();
        let mut cursor = 0usize;
        for blk in &partition {
            if blk.start != cursor || blk.end <= blk.start {
                return Err(Error::Data(format!(
                    "partition block {blk:?} is not contiguous from index {cursor}"
                )));
            }
            cursor = blk.end;
        }
        if cursor != n {
            return Err(Error::Data(format!(
                "partition covers {cursor} of {n} indices"
            )));
        }
        Ok(Self { factor, partition })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn partition(&self) -> &[std::ops::Range<usize>] {
        &self.partition
    }

    pub fn n_blocks(&self) -> usize {
        self.partition.len()
    }

    pub fn order(&self) -> usize {
        self.factor.nrows()
    }
}

/// Factor of `R` with block `k`'s rows and columns removed, reusing the
/// stored factor wherever the update allows.
///
/// Deleting the last block returns the stored leading submatrix without
/// arithmetic. For an interior block only the trailing factor block is
/// recomputed from the Gram matrix of the stored columns; the leading
/// blocks are copied. Deleting the first block falls back to a fresh
/// factorization of the remaining submatrix.
pub fn chol_delete_block(
    r: &DMatrix<f64>,
    blocked: &BlockedFactor,
    k: usize,
) -> Result<DMatrix<f64>> {
    let kk = blocked.n_blocks();
    if k >= kk {
        return Err(Error::Data(format!(
            "block index {k} out of range for {kk} blocks"
        )));
    }
    let n = blocked.order();
    let blk = blocked.partition()[k].clone();
    let (m1, m2) = (blk.start, blk.end - blk.start);
    let m3 = n - m1 - m2;
    let m = n - m2;

    if k == kk - 1 {
        // Trailing block: the leading principal factor is already exact.
        return Ok(blocked.factor().view((0, 0), (m, m)).into_owned());
    }
    if k == 0 {
        let r_del = delete_block(r, m1, m2);
        return cholesky(&r_del);
    }

    let factor = blocked.factor();
    let mut out = DMatrix::<f64>::zeros(m, m);
    out.view_mut((0, 0), (m1, m1))
        .copy_from(&factor.view((0, 0), (m1, m1)));
    out.view_mut((0, m1), (m1, m3))
        .copy_from(&factor.view((0, m1 + m2), (m1, m3)));

    // Trailing Gram matrix L33'L33 + L23'L23 from the stacked column block
    // rows m1..n of columns m1+m2..n. Column a of the stack is zero below
    // row m2 + a, which the dot lengths exploit.
    let stack = factor.view((m1, m1 + m2), (m2 + m3, m3)).into_owned();
    let gram = trailing_gram(&stack, m2);
    let c33 = cholesky(&gram)?;
    out.view_mut((m1, m1), (m3, m3)).copy_from(&c33);
    Ok(out)
}

/// Upper triangle of `B'B` where rows `m2..` of `B` are upper triangular.
fn trailing_gram(stack: &DMatrix<f64>, m2: usize) -> DMatrix<f64> {
    let m3 = stack.ncols();
    let mut g = DMatrix::<f64>::zeros(m3, m3);
    let s = stack.as_slice();
    let q = stack.nrows();
    for b in 0..m3 {
        let cb = b * q;
        for a in 0..=b {
            let ca = a * q;
            let len = m2 + a + 1;
            let mut acc = 0.0;
            for t in 0..len {
                acc += s[ca + t] * s[cb + t];
            }
            g[(a, b)] = acc;
            g[(b, a)] = acc;
        }
    }
    g
}

/// Copy of `r` with `len` rows and columns removed starting at `start`.
pub fn delete_block(r: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    let n = r.nrows();
    let m = n - len;
    let map = |i: usize| if i < start { i } else { i + len };
    DMatrix::from_fn(m, m, |i, j| r[(map(i), map(j))])
}
