use crate::error::{dim_err, Error, Result};
use crate::tensor::Matrix;

/// The multi-term equation `sum_k A_k X B_k = F` with square `A_k` (r x r),
/// square `B_k` (m x m) and `F` (r x m).
#[derive(Debug, Clone)]
pub struct SylvesterSystem {
    pub terms: Vec<(Matrix, Matrix)>,
    pub rhs: Matrix,
}

#[derive(Debug, Clone)]
pub struct SylvesterSolution {
    pub x: Matrix,
    /// Set when the undamped system was singular and the solution comes from
    /// the Tikhonov-damped retry.
    pub damped: bool,
}

const RESIDUAL_TOL: f64 = 1e-8;
const DAMPING: f64 = 1e-10;

impl SylvesterSystem {
    fn validate(&self) -> Result<(usize, usize)> {
        let (r, m) = self.rhs.shape();
        if self.terms.is_empty() {
            return Err(Error::InvalidArgument("Sylvester system without terms".into()));
        }
        for (t, (a, b)) in self.terms.iter().enumerate() {
            if a.shape() != (r, r) || b.shape() != (m, m) {
                return dim_err(format!(
                    "term {t}: A is {}x{}, B is {}x{}, rhs is {r}x{m}",
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols()
                ));
            }
        }
        Ok((r, m))
    }

    /// `sum_k B_k^T ⊗ A_k`, the operator acting on column-major `vec(X)`.
    pub fn kronecker_operator(&self) -> Result<Matrix> {
        let (r, m) = self.validate()?;
        let n = r * m;
        let mut k = Matrix::zeros(n, n);
        for (a, b) in &self.terms {
            // Block (p, q) of B^T ⊗ A is B[q, p] * A.
            for q in 0..m {
                for p in 0..m {
                    let w = b[(q, p)];
                    if w == 0.0 {
                        continue;
                    }
                    let av = a.as_slice();
                    let kv = k.as_mut_slice();
                    for c in 0..r {
                        let start = (q * r + c) * n + p * r;
                        for (d, v) in kv[start..start + r].iter_mut().zip(&av[c * r..(c + 1) * r]) {
                            *d += w * v;
                        }
                    }
                }
            }
        }
        Ok(k)
    }

    /// `sum_k A_k X B_k`.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        self.terms
            .iter()
            .fold(Matrix::zeros(self.rhs.nrows(), self.rhs.ncols()), |acc, (a, b)| {
                acc + a * x * b
            })
    }
}

/// Solves the generalized Sylvester equation by Kronecker vectorization,
/// `(sum_k B_k^T ⊗ A_k) vec(X) = vec(F)`.
///
/// If the direct solve is singular (or misses the residual target of
/// `1e-8 ||F||`), it is retried once with damping `1e-10 * trace / dim` added
/// to the diagonal and the solution is flagged as damped.
pub fn solve_generalized_sylvester(s: &SylvesterSystem) -> Result<SylvesterSolution> {
    let (r, m) = s.validate()?;
    let op = s.kronecker_operator()?;
    let rhs = Matrix::from_column_slice(r * m, 1, s.rhs.as_slice());
    let f_norm = s.rhs.norm();

    let accept = |sol: &Matrix| -> bool {
        sol.iter().all(|v| v.is_finite()) && {
            let res = (&op * sol - &rhs).norm();
            res <= RESIDUAL_TOL * f_norm.max(f64::MIN_POSITIVE)
        }
    };

    if is_symmetric(&op) {
        if let Some(chol) = op.clone().cholesky() {
            let sol = chol.solve(&rhs);
            if accept(&sol) {
                return Ok(SylvesterSolution {
                    x: Matrix::from_column_slice(r, m, sol.as_slice()),
                    damped: false,
                });
            }
        }
    }
    if let Some(sol) = op.clone().lu().solve(&rhs) {
        if accept(&sol) {
            return Ok(SylvesterSolution {
                x: Matrix::from_column_slice(r, m, sol.as_slice()),
                damped: false,
            });
        }
    }

    let dim = (r * m) as f64;
    let mut lambda = DAMPING * op.trace().abs() / dim;
    if lambda == 0.0 {
        lambda = DAMPING;
    }
    let mut damped = op;
    for d in 0..r * m {
        damped[(d, d)] += lambda;
    }
    let sol = damped.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(SylvesterSolution {
        x: Matrix::from_column_slice(r, m, sol.as_slice()),
        damped: true,
    })
}

fn is_symmetric(m: &Matrix) -> bool {
    let n = m.nrows();
    let v = m.as_slice();
    let scale = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    (0..n).all(|i| (0..i).all(|j| (v[i + j * n] - v[j + i * n]).abs() <= 1e-14 * scale))
}
