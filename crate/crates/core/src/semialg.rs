//! Semi-algebraic recovery of the common tensor from individual CPDs.
//!
//! The fully unique dataset `eta` is decomposed at rank `R + L_eta`, and each
//! mode-unique dataset `xi_j` at rank `R + L_xi`. Common columns are found by
//! an optimal partial assignment between the factors after mapping them into
//! the same column space, and the scaling ambiguity is removed per column by
//! least squares against the factors of `eta`.

use std::collections::BTreeMap;

use crate::cpd::{cpd_als, CpdOptions};
use crate::error::{dim_err, Error, Result};
use crate::model::MeasurementModel;
use crate::numerics::{
    assign_fixed_cardinality, is_full_column_rank, pinv, solve_generalized_sylvester, SylvesterSystem,
    DEFAULT_RANK_TOL,
};
use crate::rng::derive_seed;
use crate::tensor::{khatri_rao, CpdFactors, Matrix, Tensor3};
use crate::uniqueness::Witness;

const DEGENERATE_COLUMN: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SemiAlgOptions {
    /// Settings for the per-dataset CPDs; `rank` is overridden and the seed
    /// is derived per dataset.
    pub cpd: CpdOptions,
    /// Replace the residual distinct tensors by rank-`L_k` CPDs of them.
    pub distinct_cpd: bool,
}

impl SemiAlgOptions {
    pub fn new(restarts: usize, seed: u64) -> Self {
        Self {
            cpd: CpdOptions::new(1).with_restarts(restarts).with_seed(seed),
            distinct_cpd: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SemiAlgResult {
    pub common: CpdFactors,
    /// `Y_k - P_k(C)` or its rank-`L_k` approximation.
    pub distinct: Vec<Tensor3>,
    /// Factors of the distinct tensors when `distinct_cpd` was requested
    /// (zero-column matrices for `L_k = 0`).
    pub distinct_factors: Option<Vec<[Matrix; 3]>>,
    /// Assignment objective of each mode where a matching was solved.
    pub match_scores: [Option<f64>; 3],
    /// Per-column scalings applied to each common factor.
    pub scalings: [Vec<f64>; 3],
    pub warnings: Vec<String>,
}

/// Runs the per-dataset CPDs and assembles the common tensor.
pub fn semialg_decompose(
    y: &[Tensor3],
    meas: &MeasurementModel,
    r: usize,
    l: &[usize],
    witness: Witness,
    opts: &SemiAlgOptions,
) -> Result<SemiAlgResult> {
    check_inputs(y, meas, r, l, witness)?;
    let mut needed = vec![witness.eta];
    needed.extend(witness.xi.iter().copied().filter(|&x| x != witness.eta));
    needed.sort_unstable();
    needed.dedup();
    let mut cpds = BTreeMap::new();
    for k in needed {
        let o = opts
            .cpd
            .clone()
            .with_seed(derive_seed(opts.cpd.seed, k as u64));
        let o = CpdOptions { rank: r + l[k], ..o };
        cpds.insert(k, cpd_als(&y[k], &o)?.factors);
    }
    semialg_assemble(y, meas, r, l, witness, &cpds, opts)
}

/// Assembly from precomputed CPDs, keyed by dataset index. Requires the
/// CPDs of `eta` and of every `xi_j != eta`.
pub fn semialg_assemble(
    y: &[Tensor3],
    meas: &MeasurementModel,
    r: usize,
    l: &[usize],
    witness: Witness,
    cpds: &BTreeMap<usize, CpdFactors>,
    opts: &SemiAlgOptions,
) -> Result<SemiAlgResult> {
    check_inputs(y, meas, r, l, witness)?;
    let eta = witness.eta;
    let get = |k: usize| -> Result<&CpdFactors> {
        let f = cpds
            .get(&k)
            .ok_or_else(|| Error::InvalidArgument(format!("missing CPD of dataset {k}")))?;
        if f.rank() != r + l[k] || f.dims() != y[k].dims() {
            return dim_err(format!("CPD of dataset {k} has the wrong shape or rank"));
        }
        Ok(f)
    };
    let ue = get(eta)?;
    let jstar = (0..3)
        .find(|&j| witness.xi[j] != eta)
        .ok_or_else(|| Error::InvalidArgument("witness needs some xi_j different from eta".into()))?;
    let xs = witness.xi[jstar];
    let us = get(xs)?;

    let mut pinvs: BTreeMap<(usize, usize), Matrix> = BTreeMap::new();
    for j in 0..3 {
        let k = witness.xi[j];
        if !is_full_column_rank(meas.op(k, j), DEFAULT_RANK_TOL)? {
            return Err(Error::NotLeftInvertible(format!("P[{k}][{j}]")));
        }
        pinvs.insert((k, j), pinv(meas.op(k, j), DEFAULT_RANK_TOL)?);
    }

    let mut match_scores = [None; 3];
    let mut warnings = Vec::new();

    let map_to_eta = |k: usize, j: usize, u: &Matrix| -> Matrix { meas.op(eta, j) * &pinvs[&(k, j)] * u };
    let v = map_to_eta(xs, jstar, us.factor(jstar));
    let a = assign_fixed_cardinality(&similarity(ue.factor(jstar), &v), r)?;
    match_scores[jstar] = Some(a.objective);
    let sel_eta: Vec<usize> = a.pairs.iter().map(|p| p.0).collect();
    let sel_xs: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();

    let xc_eta: [Matrix; 3] = [0, 1, 2].map(|j| ue.factor(j).select_columns(sel_eta.iter()));
    let xc_xs: [Matrix; 3] = [0, 1, 2].map(|j| us.factor(j).select_columns(sel_xs.iter()));

    let mut common: [Option<Matrix>; 3] = [None, None, None];
    let mut scalings: [Vec<f64>; 3] = Default::default();
    for j in 0..3 {
        let k = witness.xi[j];
        let source = if k == eta {
            xc_eta[j].clone()
        } else if k == xs {
            xc_xs[j].clone()
        } else {
            let uk = get(k)?;
            let v = map_to_eta(k, j, uk.factor(j));
            let a = assign_fixed_cardinality(&similarity(&xc_eta[j], &v), r)?;
            match_scores[j] = Some(a.objective);
            let cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
            uk.factor(j).select_columns(cols.iter())
        };
        let cand = &pinvs[&(k, j)] * source;
        let p = meas.op(eta, j) * &cand;
        let lambda = column_scalings(&p, &xc_eta[j], j, &mut warnings);
        let mut cj = cand;
        for (t, lam) in lambda.iter().enumerate() {
            cj.column_mut(t).scale_mut(*lam);
        }
        scalings[j] = lambda;
        common[j] = Some(cj);
    }
    let [c0, c1, c2] = common.map(|c| c.expect("all modes assigned"));
    let common = CpdFactors::new(c0, c1, c2)?;

    let (distinct, distinct_factors) = distinct_parts(y, meas, &common, l, opts)?;
    Ok(SemiAlgResult {
        common,
        distinct,
        distinct_factors,
        match_scores,
        scalings,
        warnings,
    })
}

fn check_inputs(y: &[Tensor3], meas: &MeasurementModel, r: usize, l: &[usize], w: Witness) -> Result<()> {
    meas.check_data(y)?;
    if l.len() != y.len() {
        return dim_err(format!("{} distinct ranks for {} datasets", l.len(), y.len()));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("common rank must be at least 1".into()));
    }
    if w.eta >= y.len() || w.xi.iter().any(|&x| x >= y.len()) {
        return Err(Error::InvalidArgument(format!("witness {w:?} refers to a missing dataset")));
    }
    Ok(())
}

/// `Z[n, m] = |<u_n, v_m>| / (||u_n|| ||v_m||)`, zero for zero columns.
fn similarity(u: &Matrix, v: &Matrix) -> Matrix {
    let un: Vec<f64> = u.column_iter().map(|c| c.norm()).collect();
    let vn: Vec<f64> = v.column_iter().map(|c| c.norm()).collect();
    let g = u.transpose() * v;
    Matrix::from_fn(u.ncols(), v.ncols(), |n, m| {
        let d = un[n] * vn[m];
        if d > 0.0 {
            (g[(n, m)].abs() / d).min(1.0)
        } else {
            0.0
        }
    })
}

/// `lambda_t = <p_t, x_t> / <p_t, p_t>`, or zero with a warning for
/// (numerically) zero columns of `p`.
fn column_scalings(p: &Matrix, x: &Matrix, mode: usize, warnings: &mut Vec<String>) -> Vec<f64> {
    (0..p.ncols())
        .map(|t| {
            let pt = p.column(t);
            if pt.norm() < DEGENERATE_COLUMN {
                warnings.push(format!(
                    "mode {mode}: mapped column {t} is numerically zero; its scaling was set to 0"
                ));
                0.0
            } else {
                pt.dot(&x.column(t)) / pt.norm_squared()
            }
        })
        .collect()
}

type DistinctParts = (Vec<Tensor3>, Option<Vec<[Matrix; 3]>>);

fn distinct_parts(
    y: &[Tensor3],
    meas: &MeasurementModel,
    common: &CpdFactors,
    l: &[usize],
    opts: &SemiAlgOptions,
) -> Result<DistinctParts> {
    let mut residuals = Vec::with_capacity(y.len());
    for (k, yk) in y.iter().enumerate() {
        residuals.push(yk.sub(&meas.apply_factors(k, common)?.reconstruct())?);
    }
    if !opts.distinct_cpd {
        return Ok((residuals, None));
    }
    let mut tensors = Vec::with_capacity(y.len());
    let mut factors = Vec::with_capacity(y.len());
    for (k, res) in residuals.iter().enumerate() {
        let d = res.dims();
        if l[k] == 0 {
            tensors.push(Tensor3::zeros(d));
            factors.push([Matrix::zeros(d[0], 0), Matrix::zeros(d[1], 0), Matrix::zeros(d[2], 0)]);
            continue;
        }
        let o = CpdOptions {
            rank: l[k],
            ..opts.cpd.clone().with_seed(derive_seed(opts.cpd.seed, 1000 + k as u64))
        };
        let f = cpd_als(res, &o)?.factors;
        tensors.push(f.reconstruct());
        factors.push([f.a, f.b, f.c]);
    }
    Ok((tensors, Some(factors)))
}

/// Least-squares `C3` for `Y ~ [[P_k0 C1, P_k1 C2, P_k2 C3]]` given `C1` and
/// `C2`. The flag reports a rank-deficient regressor (damped solve).
pub fn hybrid_regression_mode3(
    y: &Tensor3,
    meas: &MeasurementModel,
    k: usize,
    c1: &Matrix,
    c2: &Matrix,
) -> Result<(Matrix, bool)> {
    if y.dims() != meas.dataset_dims(k) {
        return dim_err("data tensor does not match the dataset operators");
    }
    if c1.ncols() != c2.ncols() || c1.nrows() != meas.common_dims()[0] || c2.nrows() != meas.common_dims()[1] {
        return dim_err("common factors do not match the operators or each other");
    }
    let a = meas.op(k, 0) * c1;
    let b = meas.op(k, 1) * c2;
    let j = khatri_rao(&b, &a)?;
    let p = meas.op(k, 2);
    // unfold(Y, 2) ~ J C3^T P^T, so (J^T J) C3^T (P^T P) = J^T unfold(Y, 2) P.
    let rhs = j.transpose() * y.unfold(2)? * p;
    let sys = SylvesterSystem {
        terms: vec![(j.transpose() * &j, p.transpose() * p)],
        rhs,
    };
    let sol = solve_generalized_sylvester(&sys)?;
    Ok((sol.x.transpose(), sol.damped))
}

/// Two-dataset variant for image fusion: dataset `hi_space` is observed
/// at full spatial resolution (identity operators in modes 0 and 1) and
/// dataset `hi_spec` at full spectral resolution. Spatial factors come from
/// the matched common columns of the CPD of `hi_space`; the spectral factor
/// is obtained by regression on `hi_spec`.
pub fn semialg_fusion(
    y: &[Tensor3],
    meas: &MeasurementModel,
    r: usize,
    l: &[usize],
    hi_spec: usize,
    hi_space: usize,
    opts: &SemiAlgOptions,
) -> Result<SemiAlgResult> {
    meas.check_data(y)?;
    if l.len() != y.len() || hi_spec >= y.len() || hi_space >= y.len() || hi_spec == hi_space {
        return Err(Error::InvalidArgument("invalid dataset indices for fusion".into()));
    }
    let fit = |k: usize| {
        let o = CpdOptions {
            rank: r + l[k],
            ..opts.cpd.clone().with_seed(derive_seed(opts.cpd.seed, k as u64))
        };
        cpd_als(&y[k], &o).map(|f| f.factors)
    };
    let uh = fit(hi_spec)?;
    let um = fit(hi_space)?;
    let mut warnings = Vec::new();
    let pm = pinv(meas.op(hi_space, 0), DEFAULT_RANK_TOL)?;
    let v = meas.op(hi_spec, 0) * &pm * um.factor(0);
    let a = assign_fixed_cardinality(&similarity(uh.factor(0), &v), r)?;
    let cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
    let c1 = &pm * um.factor(0).select_columns(cols.iter());
    let c2 = pinv(meas.op(hi_space, 1), DEFAULT_RANK_TOL)? * um.factor(1).select_columns(cols.iter());
    let (c3, damped) = hybrid_regression_mode3(&y[hi_spec], meas, hi_spec, &c1, &c2)?;
    if damped {
        warnings.push("spectral regression was rank deficient and used a damped solve".into());
    }
    let common = CpdFactors::new(c1, c2, c3)?;
    let (distinct, distinct_factors) = distinct_parts(y, meas, &common, l, opts)?;
    Ok(SemiAlgResult {
        common,
        distinct,
        distinct_factors,
        match_scores: [Some(a.objective), None, None],
        scalings: [vec![1.0; r], vec![1.0; r], vec![1.0; r]],
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic, nrmse, SynthConfig};
    use crate::rng::{gaussian_matrix, rng_from_seed};

    const W: Witness = Witness { eta: 1, xi: [0, 1, 2] };

    /// Exact CPDs of the noiseless data built from the ground truth.
    fn exact_cpds(d: &crate::datagen::SynthData) -> BTreeMap<usize, CpdFactors> {
        let mut out = BTreeMap::new();
        for k in 0..3 {
            let pc = d.meas.apply_factors(k, &d.model.common).unwrap();
            let f = [0, 1, 2].map(|j| crate::model::hstack(pc.factor(j), &d.model.distinct[k][j]));
            let [a, b, c] = f;
            out.insert(k, CpdFactors::new(a, b, c).unwrap());
        }
        out
    }

    #[test]
    fn exact_cpds_recover_common_tensor() {
        let d = generate_synthetic(&SynthConfig::standard(f64::INFINITY, 21)).unwrap();
        let res = semialg_assemble(&d.y, &d.meas, 5, &[5, 5, 5], W, &exact_cpds(&d), &SemiAlgOptions::new(1, 0))
            .unwrap();
        assert!(nrmse(&res.common.reconstruct(), &d.common).unwrap() < 1e-8);
        for k in 0..3 {
            let back = d.meas.apply_factors(k, &res.common).unwrap().reconstruct().add(&res.distinct[k]).unwrap();
            assert!(back.distance(&d.y[k]).unwrap() < 1e-12 * d.y[k].norm());
        }
        assert!(res.warnings.is_empty());
        assert!(res.match_scores[0].unwrap() > 5.0 - 1e-8);
        assert!(res.match_scores[1].is_none());
        assert!(res.match_scores[2].unwrap() > 5.0 - 1e-8);
    }

    #[test]
    fn assembly_is_invariant_to_cpd_ambiguities() {
        let d = generate_synthetic(&SynthConfig::standard(f64::INFINITY, 22)).unwrap();
        let cpds = exact_cpds(&d);
        let opts = SemiAlgOptions::new(1, 0);
        let base = semialg_assemble(&d.y, &d.meas, 5, &[5, 5, 5], W, &cpds, &opts).unwrap();
        let mut rng = rng_from_seed(4);
        let mut perturbed = cpds.clone();
        for f in perturbed.values_mut() {
            let n = f.rank();
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let s = gaussian_matrix(2, n, &mut rng);
            let mut g = f.clone();
            for (dst, &src) in perm.iter().enumerate() {
                let (a, b) = (1.0 + s[(0, src)].abs(), 0.5 + s[(1, src)].abs());
                g.a.set_column(dst, &(f.a.column(src) * a));
                g.b.set_column(dst, &(f.b.column(src) * b));
                g.c.set_column(dst, &(f.c.column(src) / (a * b)));
            }
            *f = g;
        }
        let other = semialg_assemble(&d.y, &d.meas, 5, &[5, 5, 5], W, &perturbed, &opts).unwrap();
        let (ct, co) = (base.common.reconstruct(), other.common.reconstruct());
        assert!(co.distance(&ct).unwrap() < 1e-8 * ct.norm());
    }

    #[test]
    fn noiseless_decomposition_recovers_common_tensor() {
        let d = generate_synthetic(&SynthConfig::standard(f64::INFINITY, 23)).unwrap();
        let mut opts = SemiAlgOptions::new(3, 7);
        opts.cpd = opts.cpd.with_max_iters(20_000).with_tol(1e-13);
        let res = semialg_decompose(&d.y, &d.meas, 5, &[5, 5, 5], W, &opts).unwrap();
        assert!(nrmse(&res.common.reconstruct(), &d.common).unwrap() < 1e-3);
    }

    #[test]
    fn identical_datasets_reduce_to_plain_cpd() {
        let mut rng = rng_from_seed(8);
        let truth = CpdFactors::new(
            gaussian_matrix(6, 3, &mut rng),
            gaussian_matrix(7, 3, &mut rng),
            gaussian_matrix(8, 3, &mut rng),
        )
        .unwrap();
        let t = truth.reconstruct();
        let meas = MeasurementModel::identity(2, [6, 7, 8]);
        let y = vec![t.clone(), t.clone()];
        let w = Witness { eta: 0, xi: [1, 1, 1] };
        let res = semialg_decompose(&y, &meas, 3, &[0, 0], w, &SemiAlgOptions::new(5, 1)).unwrap();
        assert!(res.common.reconstruct().distance(&t).unwrap() < 1e-6 * t.norm());
    }

    #[test]
    fn distinct_cpd_option_returns_low_rank_parts() {
        let d = generate_synthetic(&SynthConfig::standard(f64::INFINITY, 24)).unwrap();
        let mut opts = SemiAlgOptions::new(1, 0);
        opts.distinct_cpd = true;
        opts.cpd = opts.cpd.with_restarts(5);
        let res = semialg_assemble(&d.y, &d.meas, 5, &[5, 5, 5], W, &exact_cpds(&d), &opts).unwrap();
        let f = res.distinct_factors.unwrap();
        for k in 0..3 {
            assert_eq!(f[k][0].ncols(), 5);
            assert!(nrmse(&res.distinct[k], &d.distinct[k]).unwrap() < 1e-4);
        }
    }

    #[test]
    fn non_invertible_operator_is_rejected() {
        let d = generate_synthetic(&SynthConfig::standard(f64::INFINITY, 25)).unwrap();
        // P[1][0] is 5x7 and cannot be left-inverted.
        let w = Witness { eta: 1, xi: [1, 1, 2] };
        let err = semialg_assemble(&d.y, &d.meas, 5, &[5, 5, 5], w, &exact_cpds(&d), &SemiAlgOptions::new(1, 0));
        assert!(matches!(err, Err(Error::NotLeftInvertible(_))));
    }

    #[test]
    fn mismatched_cpd_rank_is_rejected() {
        let d = generate_synthetic(&SynthConfig::standard(f64::INFINITY, 26)).unwrap();
        let cpds = exact_cpds(&d);
        assert!(semialg_assemble(&d.y, &d.meas, 6, &[5, 5, 5], W, &cpds, &SemiAlgOptions::new(1, 0)).is_err());
        let mut missing = cpds.clone();
        missing.remove(&2);
        assert!(semialg_assemble(&d.y, &d.meas, 5, &[5, 5, 5], W, &missing, &SemiAlgOptions::new(1, 0)).is_err());
    }

    #[test]
    fn regression_recovers_third_factor() {
        let mut rng = rng_from_seed(9);
        let c = CpdFactors::new(
            gaussian_matrix(8, 3, &mut rng),
            gaussian_matrix(8, 3, &mut rng),
            gaussian_matrix(6, 3, &mut rng),
        )
        .unwrap();
        let meas = MeasurementModel::new(vec![[
            gaussian_matrix(4, 8, &mut rng),
            gaussian_matrix(4, 8, &mut rng),
            gaussian_matrix(7, 6, &mut rng),
        ]])
        .unwrap();
        let y = meas.apply_factors(0, &c).unwrap().reconstruct();
        let (c3, damped) = hybrid_regression_mode3(&y, &meas, 0, &c.a, &c.b).unwrap();
        assert!(!damped);
        assert!((&c3 - &c.c).norm() < 1e-10 * c.c.norm());

        let (z, _) = hybrid_regression_mode3(&Tensor3::zeros(y.dims()), &meas, 0, &c.a, &c.b).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn regression_residual_is_orthogonal_projection() {
        let mut rng = rng_from_seed(10);
        let (c1, c2) = (gaussian_matrix(5, 2, &mut rng), gaussian_matrix(4, 2, &mut rng));
        let meas = MeasurementModel::identity(1, [5, 4, 6]);
        let y = crate::rng::gaussian_tensor([5, 4, 6], &mut rng);
        let (c3, _) = hybrid_regression_mode3(&y, &meas, 0, &c1, &c2).unwrap();
        // Normal equations: J^T (Y_(2) - J C3^T) = 0.
        let j = khatri_rao(&c2, &c1).unwrap();
        let res = y.unfold(2).unwrap() - &j * c3.transpose();
        assert!((j.transpose() * res).norm() < 1e-10 * y.norm());
    }
}
