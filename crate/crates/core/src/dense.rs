//! Dense kernels for the ALS update: Gram matrices, Hadamard products,
//! Cholesky solves and column normalization. All matrices are row-major.

use crate::{Error, Result};

/// An `rows x cols` row-major matrix. Factor matrices are `I_n x R`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FactorMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FactorMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(FactorMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for r in 0..cols {
                data.push(f(i, r));
            }
        }
        FactorMatrix { rows, cols, data }
    }

    #[inline(always)]
    pub fn row(&self, i: usize) -> &[f64] {
        let off = i * self.cols;
        &self.data[off..off + self.cols]
    }

    #[inline(always)]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let off = i * self.cols;
        &mut self.data[off..off + self.cols]
    }

    #[inline(always)]
    pub fn get(&self, i: usize, r: usize) -> f64 {
        self.data[i * self.cols + r]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Symmetric `r x r` matrix, typically `A^T A` or a Hadamard product of those.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub r: usize,
    pub data: Vec<f64>,
}

impl GramMatrix {
    pub fn ones(r: usize) -> Self {
        GramMatrix {
            r,
            data: vec![1.0; r * r],
        }
    }

    pub fn identity(r: usize) -> Self {
        let mut data = vec![0.0; r * r];
        for i in 0..r {
            data[i * r + i] = 1.0;
        }
        GramMatrix { r, data }
    }

    pub fn from_vec(r: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != r * r {
            return Err(Error::DimensionMismatch(format!("{} values for a {r}x{r} Gram", data.len())));
        }
        Ok(GramMatrix { r, data })
    }

    #[inline(always)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.r + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.r).map(|i| self.get(i, i)).sum()
    }

    /// `x^T G x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.r {
            let row = &self.data[i * self.r..(i + 1) * self.r];
            acc += x[i] * row.iter().zip(x).map(|(g, xj)| g * xj).sum::<f64>();
        }
        acc
    }
}

/// `A^T A`. The upper triangle is accumulated row by row and mirrored, so
/// the result is bitwise symmetric.
pub fn gram(a: &FactorMatrix) -> GramMatrix {
    let r = a.cols;
    let mut g = vec![0.0; r * r];
    for i in 0..a.rows {
        let row = a.row(i);
        for p in 0..r {
            let ap = row[p];
            let out = &mut g[p * r..(p + 1) * r];
            for q in p..r {
                out[q] += ap * row[q];
            }
        }
    }
    for p in 0..r {
        for q in 0..p {
            g[p * r + q] = g[q * r + p];
        }
    }
    GramMatrix { r, data: g }
}

/// `v <- v * g` elementwise.
pub fn hadamard_accumulate(v: &mut GramMatrix, g: &GramMatrix) -> Result<()> {
    if v.r != g.r {
        return Err(Error::DimensionMismatch(format!("Hadamard of {}x{} with {}x{}", v.r, v.r, g.r, g.r)));
    }
    v.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a *= b);
    Ok(())
}

const PIVOT_RTOL: f64 = 1e-12;
const RIDGE: f64 = 1e-12;

/// In-place lower Cholesky factor of a row-major SPD matrix. Fails when a
/// pivot drops to `PIVOT_RTOL * max diagonal` or below.
fn cholesky_factor(a: &mut [f64], n: usize) -> bool {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let floor = PIVOT_RTOL * max_diag;
    if max_diag <= 0.0 {
        return false;
    }
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d.is_nan() || d <= floor {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

/// Solves `X V = M` for `X` (same shape as `M`) through a Cholesky
/// factorization of `V`; `V^+` is never formed.
///
/// If the factorization breaks down, it is retried once with
/// `1e-12 * trace(V) / R` added to the diagonal.
pub fn cholesky_solve(v: &GramMatrix, m: &FactorMatrix) -> Result<FactorMatrix> {
    let n = v.r;
    if m.cols != n {
        return Err(Error::DimensionMismatch(format!("solve {}x{} against {n}x{n}", m.rows, m.cols)));
    }
    let mut l = v.data.clone();
    if !cholesky_factor(&mut l, n) {
        l.copy_from_slice(&v.data);
        let ridge = RIDGE * v.trace() / n as f64;
        for i in 0..n {
            l[i * n + i] += ridge;
        }
        if !cholesky_factor(&mut l, n) {
            return Err(Error::SingularGram);
        }
    }

    let mut x = m.clone();
    for i in 0..x.rows {
        let row = x.row_mut(i);
        // L y = m
        for j in 0..n {
            let mut s = row[j];
            for k in 0..j {
                s -= l[j * n + k] * row[k];
            }
            row[j] = s / l[j * n + j];
        }
        // L^T x = y
        for j in (0..n).rev() {
            let mut s = row[j];
            for k in j + 1..n {
                s -= l[k * n + j] * row[k];
            }
            row[j] = s / l[j * n + j];
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Euclidean column norms.
    Two,
    /// `max(1, max |a_ir|)`; columns are only ever scaled down.
    Max,
}

/// Normalizes the columns of `a` in place and returns the per-column scales.
pub fn normalize_columns(a: &mut FactorMatrix, kind: NormKind) -> Vec<f64> {
    let r = a.cols;
    let mut lambda = vec![0.0; r];
    match kind {
        NormKind::Two => {
            for i in 0..a.rows {
                for (l, x) in lambda.iter_mut().zip(a.row(i)) {
                    *l += x * x;
                }
            }
            lambda.iter_mut().for_each(|l| *l = l.sqrt());
        }
        NormKind::Max => {
            for i in 0..a.rows {
                for (l, x) in lambda.iter_mut().zip(a.row(i)) {
                    *l = l.max(x.abs());
                }
            }
            lambda.iter_mut().for_each(|l| *l = l.max(1.0));
        }
    }
    for i in 0..a.rows {
        for (x, &l) in a.row_mut(i).iter_mut().zip(&lambda) {
            if l > 0.0 {
                *x /= l;
            }
        }
    }
    lambda
}
