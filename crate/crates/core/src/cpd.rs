//! Canonical polyadic decomposition of a single tensor by multi-start
//! alternating least squares.

use crate::error::{Error, Result};
use crate::numerics::{assign_fixed_cardinality, solve_gram_system};
use crate::rng::{gaussian_matrix, rng_from_seed};
use crate::tensor::{cp_accumulate, khatri_rao_gram, mttkrp, CpdFactors, Matrix, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct CpdOptions {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop when the relative fit changes by less than this between sweeps.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl CpdOptions {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_iters: 1000,
            tol: 1e-9,
            restarts: 1,
            seed: 0,
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self, dims: [usize; 3]) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("CPD rank must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("at least one restart is required".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let mut d = dims;
        d.sort_unstable();
        if self.rank > d[1] * d[2] {
            return Err(Error::InvalidArgument(format!(
                "rank {} exceeds the product of the two largest dimensions {}",
                self.rank,
                d[1] * d[2]
            )));
        }
        Ok(())
    }
}

/// Outcome of a CPD fit.
#[derive(Debug, Clone)]
pub struct CpdFit {
    pub factors: CpdFactors,
    /// `||t - [[A, B, C]]|| / ||t||` (absolute error when `t == 0`).
    pub rel_error: f64,
    pub iterations: usize,
    /// False when `max_iters` was reached before the tolerance was met.
    pub converged: bool,
    /// Index of the winning restart.
    pub restart: usize,
    /// Per-sweep squared residuals of the winning restart.
    pub trace: Vec<f64>,
}

/// Multi-start CPD by ALS. Restart `r` draws standard Gaussian initial
/// factors from seed `opts.seed + r`; the restart with the lowest
/// reconstruction error wins (ties go to the lowest restart index).
pub fn cpd_als(t: &Tensor3, opts: &CpdOptions) -> Result<CpdFit> {
    opts.validate(t.dims())?;
    let mut best: Option<CpdFit> = None;
    for r in 0..opts.restarts {
        let mut rng = rng_from_seed(opts.seed.wrapping_add(r as u64));
        let [n1, n2, n3] = t.dims();
        let init = CpdFactors::new(
            gaussian_matrix(n1, opts.rank, &mut rng),
            gaussian_matrix(n2, opts.rank, &mut rng),
            gaussian_matrix(n3, opts.rank, &mut rng),
        )?;
        let mut fit = cpd_als_from(t, init, opts.max_iters, opts.tol)?;
        fit.restart = r;
        if best.as_ref().is_none_or(|b| fit.rel_error < b.rel_error) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Single ALS run from the given initial factors.
pub fn cpd_als_from(
    t: &Tensor3,
    init: CpdFactors,
    max_iters: usize,
    tol: f64,
) -> Result<CpdFit> {
    if init.dims() != t.dims() {
        return Err(Error::DimensionMismatch(format!(
            "initial factors describe {:?}, tensor is {:?}",
            init.dims(),
            t.dims()
        )));
    }
    let t_norm = t.norm();
    let scale = if t_norm > 0.0 { t_norm } else { 1.0 };
    let mut f = init;
    let mut trace = Vec::new();
    let mut prev_err = residual_norm(t, &f) / scale;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        for mode in 0..3 {
            update_factor(t, &mut f, mode)?;
        }
        normalize(&mut f);
        let err_abs = residual_norm(t, &f);
        trace.push(err_abs * err_abs);
        let err = err_abs / scale;
        let change = (prev_err - err).abs();
        prev_err = err;
        if change < tol || err < 1e-15 {
            converged = true;
            break;
        }
    }

    Ok(CpdFit {
        factors: f,
        rel_error: prev_err,
        iterations,
        converged,
        restart: 0,
        trace,
    })
}

/// Exact least-squares update of one factor with the others fixed.
pub(crate) fn update_factor(t: &Tensor3, f: &mut CpdFactors, mode: usize) -> Result<()> {
    let m = mttkrp(t, f.factors(), mode)?;
    let g = khatri_rao_gram(f.factors(), mode);
    let (x, _) = solve_gram_system(&m, &g)?;
    *f.factor_mut(mode) = x;
    Ok(())
}

/// Unit-norm columns in modes 0 and 1; the scales move into mode 2.
pub fn normalize(f: &mut CpdFactors) {
    for q in 0..f.rank() {
        for mode in 0..2 {
            let n = f.factor(mode).column(q).norm();
            if n > 0.0 {
                f.factor_mut(mode).column_mut(q).scale_mut(1.0 / n);
                f.c.column_mut(q).scale_mut(n);
            }
        }
    }
}

/// `||t - [[A, B, C]]||_F`.
pub fn residual_norm(t: &Tensor3, f: &CpdFactors) -> f64 {
    let mut r = t.clone();
    cp_accumulate(&mut r, -1.0, &f.a, &f.b, &f.c);
    r.norm()
}

/// Similarity of two decompositions, invariant to column permutation and to
/// per-mode column scalings whose product is one.
///
/// For each column pair the score is the product over modes of the absolute
/// cosine between the columns, times the weight penalty
/// `1 - |w_f - w_g| / max(w_f, w_g)` where `w` is the product of the three
/// column norms. The result is the mean pair score under the best one-to-one
/// column matching, in `[0, 1]`.
pub fn factor_match_score(f: &CpdFactors, g: &CpdFactors) -> Result<f64> {
    if f.rank() != g.rank() || f.dims() != g.dims() {
        return Err(Error::DimensionMismatch(format!(
            "rank {} {:?} vs rank {} {:?}",
            f.rank(),
            f.dims(),
            g.rank(),
            g.dims()
        )));
    }
    let r = f.rank();
    let norms = |x: &CpdFactors| -> Vec<[f64; 3]> {
        (0..r)
            .map(|q| {
                [
                    x.a.column(q).norm(),
                    x.b.column(q).norm(),
                    x.c.column(q).norm(),
                ]
            })
            .collect()
    };
    let (nf, ng) = (norms(f), norms(g));
    let scores = Matrix::from_fn(r, r, |p, q| {
        let mut s = 1.0;
        for mode in 0..3 {
            let d = nf[p][mode] * ng[q][mode];
            if d == 0.0 {
                return 0.0;
            }
            s *= (f.factor(mode).column(p).dot(&g.factor(mode).column(q)) / d).abs();
        }
        let wf: f64 = nf[p].iter().product();
        let wg: f64 = ng[q].iter().product();
        let penalty = 1.0 - (wf - wg).abs() / wf.max(wg);
        (s * penalty).clamp(0.0, 1.0)
    });
    let assignment = assign_fixed_cardinality(&scores, r)?;
    Ok(assignment.objective / r as f64)
}

/// Column-norm weights `w_q = prod_m ||x_m[:, q]||`, mostly useful for
/// reporting.
pub fn column_weights(f: &CpdFactors) -> Vec<f64> {
    (0..f.rank())
        .map(|q| f.factors().iter().map(|m| m.column(q).norm()).product())
        .collect()
}
