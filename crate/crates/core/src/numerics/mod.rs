//! Matrix-analysis utilities: pseudoinverse, numerical rank, Kruskal rank,
//! the generalized Sylvester solver and the fixed-cardinality assignment
//! solver.

mod assignment;
mod sylvester;

pub use assignment::{assign_fixed_cardinality, AssignmentResult};
pub use sylvester::{solve_generalized_sylvester, SylvesterSolution, SylvesterSystem};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Default relative rank tolerance (relative to the largest singular value).
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Exhaustive Kruskal-rank evaluation is limited to this many columns.
pub const KRUSKAL_MAX_COLS: usize = 20;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITERS: usize = 10_000;

/// Singular values in no particular order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let svd = m
        .clone()
        .try_svd(false, false, SVD_EPS, SVD_MAX_ITERS)
        .ok_or(Error::SvdFailed)?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// Moore-Penrose pseudoinverse; singular values below `tol * sigma_max` are
/// treated as zero.
pub fn pinv(m: &Matrix, tol: f64) -> Result<Matrix> {
    if m.is_empty() {
        return Ok(Matrix::zeros(m.ncols(), m.nrows()));
    }
    let svd = m
        .clone()
        .try_svd(true, true, SVD_EPS, SVD_MAX_ITERS)
        .ok_or(Error::SvdFailed)?;
    let u = svd.u.as_ref().ok_or(Error::SvdFailed)?;
    let vt = svd.v_t.as_ref().ok_or(Error::SvdFailed)?;
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = tol * smax;
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (q, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_q * u_q^T / s
            let v = vt.row(q).transpose();
            let ucol = u.column(q);
            out.ger(1.0 / s, &v, &ucol, 1.0);
        }
    }
    Ok(out)
}

/// Number of singular values above `tol * sigma_max`.
pub fn numeric_rank(m: &Matrix, tol: f64) -> Result<usize> {
    let sv = singular_values(m)?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    Ok(count_above(&sv, tol * smax))
}

fn count_above(sv: &[f64], cutoff: f64) -> usize {
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

/// True when `m` has full column rank at tolerance `tol`.
pub fn is_full_column_rank(m: &Matrix, tol: f64) -> Result<bool> {
    Ok(m.ncols() <= m.nrows() && numeric_rank(m, tol)? == m.ncols())
}

/// Kruskal rank: the largest `r` such that every set of `r` columns is
/// linearly independent, by exhaustive enumeration of column subsets.
///
/// Independence of a subset is judged against the threshold
/// `tol * sigma_max(m)` of the whole matrix, so a zero column (or one that is
/// negligible relative to the rest) makes the Kruskal rank 0.
pub fn kruskal_rank(m: &Matrix, tol: f64) -> Result<usize> {
    let cols = m.ncols();
    if cols > KRUSKAL_MAX_COLS {
        return Err(Error::TooManyColumns {
            cols,
            limit: KRUSKAL_MAX_COLS,
        });
    }
    if cols == 0 || m.nrows() == 0 {
        return Ok(0);
    }
    let smax = singular_values(m)?.into_iter().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    let cutoff = tol * smax;
    let max_r = cols.min(m.nrows());
    // Supersets of a dependent set are dependent, so the Kruskal rank is one
    // less than the size of the smallest dependent subset.
    for r in 1..=max_r {
        let mut idx: Vec<usize> = (0..r).collect();
        loop {
            let sub = m.select_columns(idx.iter());
            if count_above(&singular_values(&sub)?, cutoff) < r {
                return Ok(r - 1);
            }
            if !next_combination(&mut idx, cols) {
                break;
            }
        }
    }
    Ok(max_r)
}

/// Solves `X G = M` for a symmetric positive semidefinite Gram matrix `G`,
/// i.e. `X = M G^+`. With `G = J^T J` and `M = Y^T J` this is the
/// least-squares solution `(J^+ Y)^T`.
///
/// Uses a Cholesky factorization when `G` is well conditioned and falls back
/// to the SVD pseudoinverse otherwise; the returned flag is true in the
/// fallback case (rank-deficient regressor).
pub fn solve_gram_system(m: &Matrix, g: &Matrix) -> Result<(Matrix, bool)> {
    if let Some(chol) = g.clone().cholesky() {
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].abs()).collect();
        let dmax = diag.iter().copied().fold(0.0, f64::max);
        let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if dmax > 0.0 && (dmin / dmax).powi(2) > 1e-12 {
            let xt = chol.solve(&m.transpose());
            if xt.iter().all(|v| v.is_finite()) {
                return Ok((xt.transpose(), false));
            }
        }
    }
    Ok((m * pinv(g, DEFAULT_RANK_TOL)?, true))
}

/// Advances `idx` to the next `idx.len()`-combination of `0..n` in
/// lexicographic order; returns false after the last one.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let r = idx.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if idx[i] < n - r + i {
            idx[i] += 1;
            for t in i + 1..r {
                idx[t] = idx[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Rank of every column subset, by brute force, to get the Kruskal rank.
    fn kruskal_oracle(m: &Matrix) -> usize {
        let cols = m.ncols();
        let smax = singular_values(m).unwrap().into_iter().fold(0.0, f64::max);
        let mut best = 0;
        for r in 1..=cols.min(m.nrows()) {
            let mut all_ok = true;
            for mask in 0u32..(1 << cols) {
                if mask.count_ones() as usize != r {
                    continue;
                }
                let sel: Vec<usize> = (0..cols).filter(|c| mask & (1 << c) != 0).collect();
                let sub = m.select_columns(sel.iter());
                let rk = count_above(&singular_values(&sub).unwrap(), DEFAULT_RANK_TOL * smax);
                if rk < r {
                    all_ok = false;
                }
            }
            if all_ok {
                best = r;
            }
        }
        best
    }

    #[test]
    fn pinv_of_identity_and_full_column_rank() {
        let i = Matrix::identity(4, 4);
        assert!((pinv(&i, DEFAULT_RANK_TOL).unwrap() - &i).norm() < 1e-14);
        let p = gaussian(7, 3, 5);
        let left = pinv(&p, DEFAULT_RANK_TOL).unwrap() * &p;
        assert!((left - Matrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn pinv_of_rank_one_matches_closed_form() {
        let u = gaussian(4, 1, 7);
        let v = gaussian(3, 1, 8);
        let m = &u * v.transpose();
        let expected = (&v * u.transpose()) / (u.norm_squared() * v.norm_squared());
        let got = pinv(&m, DEFAULT_RANK_TOL).unwrap();
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_rank_examples() {
        assert_eq!(numeric_rank(&Matrix::identity(5, 5), DEFAULT_RANK_TOL).unwrap(), 5);
        assert_eq!(numeric_rank(&Matrix::zeros(4, 3), DEFAULT_RANK_TOL).unwrap(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = Matrix::from_fn(10, 7, |_, _| rng.random::<f64>());
        assert_eq!(numeric_rank(&m, DEFAULT_RANK_TOL).unwrap(), 7);
    }

    #[test]
    fn kruskal_rank_examples() {
        assert_eq!(kruskal_rank(&Matrix::identity(3, 3), DEFAULT_RANK_TOL).unwrap(), 3);
        let mut z = gaussian(4, 3, 3);
        z.column_mut(1).fill(0.0);
        assert_eq!(kruskal_rank(&z, DEFAULT_RANK_TOL).unwrap(), 0);
        let g = gaussian(4, 3, 4);
        assert_eq!(kruskal_rank(&g, DEFAULT_RANK_TOL).unwrap(), kruskal_oracle(&g));
        assert_eq!(kruskal_rank(&g, DEFAULT_RANK_TOL).unwrap(), 3);
    }

    #[test]
    fn kruskal_rank_detects_proportional_columns() {
        let mut m = gaussian(5, 4, 12);
        let c0 = m.column(0).clone_owned();
        m.set_column(2, &(c0 * -3.0));
        assert_eq!(kruskal_rank(&m, DEFAULT_RANK_TOL).unwrap(), 1);
        assert_eq!(kruskal_oracle(&m), 1);
        // Three coplanar columns in 3-space, the rest generic.
        let mut w = gaussian(3, 5, 13);
        let mix = w.column(0) * 0.5 + w.column(1) * 2.0;
        w.set_column(4, &mix);
        assert_eq!(kruskal_rank(&w, DEFAULT_RANK_TOL).unwrap(), 2);
        assert_eq!(numeric_rank(&w, DEFAULT_RANK_TOL).unwrap(), 3);
    }

    #[test]
    fn kruskal_rank_rejects_wide_input() {
        let m = Matrix::zeros(3, KRUSKAL_MAX_COLS + 1);
        assert!(matches!(
            kruskal_rank(&m, DEFAULT_RANK_TOL),
            Err(Error::TooManyColumns { .. })
        ));
    }

    #[test]
    fn gram_solve_matches_pseudoinverse_regression() {
        let j = gaussian(12, 3, 21);
        let y = gaussian(12, 5, 22);
        let (x, flagged) = solve_gram_system(&(y.transpose() * &j), &(j.transpose() * &j)).unwrap();
        assert!(!flagged);
        let expected = (pinv(&j, DEFAULT_RANK_TOL).unwrap() * &y).transpose();
        assert!((x - expected).norm() < 1e-10);

        let mut jd = j.clone();
        let c = jd.column(0).clone_owned();
        jd.set_column(2, &c);
        let (xd, flagged) = solve_gram_system(&(y.transpose() * &jd), &(jd.transpose() * &jd)).unwrap();
        assert!(flagged);
        let expected = (pinv(&jd, DEFAULT_RANK_TOL).unwrap() * &y).transpose();
        assert!((xd - expected).norm() < 1e-8);
    }

    #[test]
    fn combinations_enumerate_binomial_count() {
        let mut idx = vec![0, 1, 2];
        let mut n = 1;
        while next_combination(&mut idx, 6) {
            n += 1;
        }
        assert_eq!(n, 20);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn kruskal_le_rank_le_min_dim(rows in 1usize..6, cols in 1usize..7, seed in any::<u64>(), dup in any::<bool>()) {
                let mut m = gaussian(rows, cols, seed);
                if dup && cols > 1 {
                    let c = m.column(0).clone_owned();
                    m.set_column(cols - 1, &c);
                }
                let kr = kruskal_rank(&m, DEFAULT_RANK_TOL).unwrap();
                let rk = numeric_rank(&m, DEFAULT_RANK_TOL).unwrap();
                prop_assert!(kr <= rk);
                prop_assert!(rk <= rows.min(cols));
                prop_assert_eq!(kr, kruskal_oracle(&m));
            }
        }
    }
}
