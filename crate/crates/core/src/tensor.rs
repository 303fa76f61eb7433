//! Dense order-3 tensors and the multilinear algebra primitives used by the
//! solvers.
//!
//! Layout: entry `(i, j, k)` of an `n1 x n2 x n3` tensor is stored at linear
//! offset `i + n1 * (j + n2 * k)` (first index fastest). Modes and entries are
//! 0-based; mode 0 here is "mode 1" in the usual 1-based notation.
//!
//! The mode-`m` unfolding is an `(prod of the other dims) x n_m` matrix whose
//! column `n` is the vectorized slice at index `n` of mode `m`, with the lower
//! numbered remaining mode varying fastest. With this convention
//!
//! ```text
//! unfold([[A, B, C]], 0) == khatri_rao(C, B) * A^T
//! unfold([[A, B, C]], 1) == khatri_rao(C, A) * B^T
//! unfold([[A, B, C]], 2) == khatri_rao(B, A) * C^T
//! ```

use crate::error::{dim_err, Error, Result};
use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

/// Dense real matrix (column-major storage).
pub type Matrix = DMatrix<f64>;

/// Dense real order-3 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    values: Vec<f64>,
}

fn check_mode(mode: usize) -> Result<()> {
    if mode > 2 {
        Err(Error::InvalidMode(mode))
    } else {
        Ok(())
    }
}

impl Tensor3 {
    pub fn new(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {dims:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return dim_err(format!(
                "{} values supplied for a {}x{}x{} tensor",
                values.len(),
                dims[0],
                dims[1],
                dims[2]
            ));
        }
        Ok(Self { dims, values })
    }

    /// Panics if any dimension is zero.
    pub fn zeros(dims: [usize; 3]) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "tensor dims must be positive");
        Self {
            dims,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = t.offset(i, j, k);
                    t.values[idx] = f(i, j, k);
                }
            }
        }
        t
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.offset(i, j, k);
        self.values[idx] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return dim_err(format!(
                "tensor dims {:?} vs {:?}",
                self.dims, other.dims
            ));
        }
        Ok(())
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Tensor3) -> Result<Tensor3> {
        self.check_same_dims(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Tensor3 {
            dims: self.dims,
            values,
        })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.add_scaled(1.0, other)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.add_scaled(-1.0, other)
    }

    pub fn scaled(&self, alpha: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Frobenius distance `||self - other||`.
    pub fn distance(&self, other: &Tensor3) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Mode-`mode` matricization (see module docs for the index convention).
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        check_mode(mode)?;
        let [n1, n2, n3] = self.dims;
        let out = match mode {
            0 => Matrix::from_fn(n2 * n3, n1, |row, i| {
                let (j, k) = (row % n2, row / n2);
                self.get(i, j, k)
            }),
            1 => Matrix::from_fn(n1 * n3, n2, |row, j| {
                let (i, k) = (row % n1, row / n1);
                self.get(i, j, k)
            }),
            _ => Matrix::from_fn(n1 * n2, n3, |row, k| {
                let (i, j) = (row % n1, row / n1);
                self.get(i, j, k)
            }),
        };
        Ok(out)
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &Matrix, mode: usize, dims: [usize; 3]) -> Result<Tensor3> {
        check_mode(mode)?;
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {dims:?}"
            )));
        }
        let [n1, n2, n3] = dims;
        let expected = match mode {
            0 => (n2 * n3, n1),
            1 => (n1 * n3, n2),
            _ => (n1 * n2, n3),
        };
        if m.shape() != expected {
            return dim_err(format!(
                "cannot fold a {}x{} matrix along mode {mode} into {dims:?}",
                m.nrows(),
                m.ncols()
            ));
        }
        Ok(Tensor3::from_fn(dims, |i, j, k| match mode {
            0 => m[(j + n2 * k, i)],
            1 => m[(i + n1 * k, j)],
            _ => m[(i + n1 * j, k)],
        }))
    }

    /// Mode product `self x_mode b`: every mode-`mode` fiber is multiplied by
    /// `b`, so `unfold(result, mode) == unfold(self, mode) * b^T`.
    pub fn mode_product(&self, b: &Matrix, mode: usize) -> Result<Tensor3> {
        check_mode(mode)?;
        if b.ncols() != self.dims[mode] {
            return dim_err(format!(
                "mode-{mode} product: matrix has {} columns, tensor mode size is {}",
                b.ncols(),
                self.dims[mode]
            ));
        }
        if b.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "mode product with a matrix without rows".into(),
            ));
        }
        let mut dims = self.dims;
        dims[mode] = b.nrows();
        let mut out = Tensor3::zeros(dims);
        let [n1, n2, n3] = self.dims;
        match mode {
            0 => {
                for k in 0..n3 {
                    for j in 0..n2 {
                        for i in 0..n1 {
                            let v = self.get(i, j, k);
                            if v == 0.0 {
                                continue;
                            }
                            for p in 0..dims[0] {
                                let idx = out.offset(p, j, k);
                                out.values[idx] += b[(p, i)] * v;
                            }
                        }
                    }
                }
            }
            1 => {
                for k in 0..n3 {
                    for j in 0..n2 {
                        for p in 0..dims[1] {
                            let w = b[(p, j)];
                            if w == 0.0 {
                                continue;
                            }
                            let src = self.offset(0, j, k);
                            let dst = out.offset(0, p, k);
                            for i in 0..n1 {
                                out.values[dst + i] += w * self.values[src + i];
                            }
                        }
                    }
                }
            }
            _ => {
                let slab = n1 * n2;
                for k in 0..n3 {
                    for p in 0..dims[2] {
                        let w = b[(p, k)];
                        if w == 0.0 {
                            continue;
                        }
                        let src = k * slab;
                        let dst = p * slab;
                        for e in 0..slab {
                            out.values[dst + e] += w * self.values[src + e];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Full multilinear product `self x_1 b1 x_2 b2 x_3 b3`.
    pub fn multilinear_product(&self, b1: &Matrix, b2: &Matrix, b3: &Matrix) -> Result<Tensor3> {
        self.mode_product(b1, 0)?
            .mode_product(b2, 1)?
            .mode_product(b3, 2)
    }
}

/// Column-wise Kronecker product: column `r` is `kron(a[:, r], b[:, r])`, so
/// the row index of `b` varies fastest.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return dim_err(format!(
            "khatri_rao: {} vs {} columns",
            a.ncols(),
            b.ncols()
        ));
    }
    let (ra, rb) = (a.nrows(), b.nrows());
    Ok(Matrix::from_fn(ra * rb, a.ncols(), |row, r| {
        a[(row / rb, r)] * b[(row % rb, r)]
    }))
}

/// Factor matrices of a polyadic decomposition `[[a, b, c]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpdFactors {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl CpdFactors {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let r = a.ncols();
        if r == 0 {
            return Err(Error::InvalidArgument("CPD rank must be at least 1".into()));
        }
        if b.ncols() != r || c.ncols() != r {
            return dim_err(format!(
                "factor column counts {}, {}, {} differ",
                a.ncols(),
                b.ncols(),
                c.ncols()
            ));
        }
        Ok(Self { a, b, c })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.a.nrows(), self.b.nrows(), self.c.nrows()]
    }

    pub fn factor(&self, mode: usize) -> &Matrix {
        match mode {
            0 => &self.a,
            1 => &self.b,
            _ => &self.c,
        }
    }

    pub fn factor_mut(&mut self, mode: usize) -> &mut Matrix {
        match mode {
            0 => &mut self.a,
            1 => &mut self.b,
            _ => &mut self.c,
        }
    }

    pub fn factors(&self) -> [&Matrix; 3] {
        [&self.a, &self.b, &self.c]
    }

    /// Sum of rank-1 terms `sum_r a_r o b_r o c_r`.
    pub fn reconstruct(&self) -> Tensor3 {
        cp_reconstruct(&self.a, &self.b, &self.c)
    }

    /// Left-multiplies each factor: `[[p1 a, p2 b, p3 c]]`.
    pub fn map_factors(&self, p: [&Matrix; 3]) -> Result<CpdFactors> {
        for (m, (pm, f)) in p.iter().zip(self.factors()).enumerate() {
            if pm.ncols() != f.nrows() {
                return dim_err(format!(
                    "mode-{m} operator has {} columns, factor has {} rows",
                    pm.ncols(),
                    f.nrows()
                ));
            }
        }
        CpdFactors::new(p[0] * &self.a, p[1] * &self.b, p[2] * &self.c)
    }
}

/// Reconstructs `[[a, b, c]]` from factors with matching column counts.
///
/// Panics if the column counts differ or any factor has no rows; use
/// [`CpdFactors::new`] to validate untrusted input first.
pub fn cp_reconstruct(a: &Matrix, b: &Matrix, c: &Matrix) -> Tensor3 {
    let mut out = Tensor3::zeros([a.nrows(), b.nrows(), c.nrows()]);
    cp_accumulate(&mut out, 1.0, a, b, c);
    out
}

/// `out += alpha * [[a, b, c]]`.
pub fn cp_accumulate(out: &mut Tensor3, alpha: f64, a: &Matrix, b: &Matrix, c: &Matrix) {
    let r = a.ncols();
    assert!(b.ncols() == r && c.ncols() == r, "factor column counts differ");
    let [n1, n2, n3] = out.dims;
    assert!(a.nrows() == n1 && b.nrows() == n2 && c.nrows() == n3);
    if r == 0 {
        return;
    }
    // Column-major storage is the n1 x (n2 n3) matrix A (C ⊙ B)^T.
    let kr = khatri_rao(c, b).expect("equal column counts");
    let mut view = DMatrixViewMut::from_slice(&mut out.values, n1, n2 * n3);
    view.gemm(alpha, a, &kr.transpose(), 1.0);
}

/// Matricized tensor times Khatri-Rao product for `mode`:
/// `unfold(t, mode)^T * khatri_rao(other factors)`. `factors` holds one
/// matrix per mode; the entry for `mode` itself is ignored.
pub fn mttkrp(t: &Tensor3, factors: [&Matrix; 3], mode: usize) -> Result<Matrix> {
    check_mode(mode)?;
    let [n1, n2, n3] = t.dims;
    let others: Vec<usize> = (0..3).filter(|&m| m != mode).collect();
    let r = factors[others[0]].ncols();
    for &m in &others {
        if factors[m].nrows() != t.dims[m] || factors[m].ncols() != r {
            return dim_err(format!(
                "mttkrp: mode-{m} factor is {}x{}, expected {}x{r}",
                factors[m].nrows(),
                factors[m].ncols(),
                t.dims[m]
            ));
        }
    }
    let v = &t.values;
    let out = match mode {
        0 => {
            let w = DMatrixView::from_slice(v, n1, n2 * n3);
            w * khatri_rao(factors[2], factors[1])?
        }
        1 => {
            let a = factors[0];
            let c = factors[2];
            let mut out = Matrix::zeros(n2, r);
            let mut s = Matrix::zeros(n2, r);
            for k in 0..n3 {
                let slab = DMatrixView::from_slice(&v[k * n1 * n2..(k + 1) * n1 * n2], n1, n2);
                s.gemm_tr(1.0, &slab, a, 0.0);
                for q in 0..r {
                    let ck = c[(k, q)];
                    out.column_mut(q).axpy(ck, &s.column(q), 1.0);
                }
            }
            out
        }
        _ => {
            let w = DMatrixView::from_slice(v, n1 * n2, n3);
            w.tr_mul(&khatri_rao(factors[1], factors[0])?)
        }
    };
    Ok(out)
}

/// Gram matrix of the Khatri-Rao product of the two factors other than
/// `mode`, via the Hadamard identity `(X ⊙ Y)^T (X ⊙ Y) = (X^T X) ∘ (Y^T Y)`.
pub fn khatri_rao_gram(factors: [&Matrix; 3], mode: usize) -> Matrix {
    let mut g: Option<Matrix> = None;
    for (m, f) in factors.iter().enumerate() {
        if m == mode {
            continue;
        }
        let gm = f.transpose() * *f;
        g = Some(match g {
            None => gm,
            Some(prev) => prev.component_mul(&gm),
        });
    }
    g.expect("two non-target modes")
}
