//! Flexible coupled ALS for the common/distinct model.
//!
//! Dataset `k` is modeled as `[[Xc_k0, Xc_k1, Xc_k2]] + [[Xd_k0, Xd_k1, Xd_k2]]`
//! with the coupling `Xc_kj = P_kj C_j` imposed for `k` in `gamma[j]`. Each
//! outer iteration updates `C_0`, the mode-0 coupled factors, `C_1`, ...,
//! and then one ALS sweep over every distinct factor.

use rayon::prelude::*;

use crate::error::{dim_err, Error, Result};
use crate::model::MeasurementModel;
use crate::numerics::{solve_gram_system, solve_generalized_sylvester, SylvesterSystem};
use crate::rng::{derive_seed, gaussian_matrix, rng_from_seed};
use crate::semialg::{semialg_decompose, SemiAlgOptions, SemiAlgResult};
use crate::tensor::{cp_accumulate, khatri_rao_gram, mttkrp, CpdFactors, Matrix, Tensor3};
use crate::uniqueness::Witness;

/// Datasets whose mode-`j` factor is tied to the common factor `C_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingSpec {
    pub gamma: [Vec<usize>; 3],
}

impl CouplingSpec {
    /// Every dataset coupled in every mode.
    pub fn full(k: usize) -> Self {
        let all: Vec<usize> = (0..k).collect();
        Self {
            gamma: [all.clone(), all.clone(), all],
        }
    }

    pub fn contains(&self, mode: usize, k: usize) -> bool {
        self.gamma[mode].contains(&k)
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        for (j, g) in self.gamma.iter().enumerate() {
            if let Some(bad) = g.iter().find(|&&x| x >= k) {
                return Err(Error::InvalidArgument(format!(
                    "coupling set {j} refers to dataset {bad}, but there are only {k}"
                )));
            }
        }
        for kk in 0..k {
            if !(0..3).any(|j| self.contains(j, kk)) {
                return Err(Error::InvalidArgument(format!(
                    "dataset {kk} is not coupled to the common tensor in any mode"
                )));
            }
        }
        Ok(())
    }
}

/// Iterate of the coupled ALS.
#[derive(Debug, Clone, PartialEq)]
pub struct AlsState {
    /// Common factors `C_j`, `M_j x R`.
    pub c: [Matrix; 3],
    /// Coupled-side factors `Xc[k][j]`, `N_kj x R`.
    pub xc: Vec<[Matrix; 3]>,
    /// Distinct factors `Xd[k][j]`, `N_kj x L_k`.
    pub xd: Vec<[Matrix; 3]>,
}

impl AlsState {
    pub fn rank(&self) -> usize {
        self.c[0].ncols()
    }

    pub fn common(&self) -> Result<CpdFactors> {
        CpdFactors::new(self.c[0].clone(), self.c[1].clone(), self.c[2].clone())
    }

    pub fn common_tensor(&self) -> Tensor3 {
        let mut t = Tensor3::zeros([self.c[0].nrows(), self.c[1].nrows(), self.c[2].nrows()]);
        cp_accumulate(&mut t, 1.0, &self.c[0], &self.c[1], &self.c[2]);
        t
    }

    pub fn distinct_tensor(&self, k: usize) -> Tensor3 {
        let d = &self.xd[k];
        let mut t = Tensor3::zeros([d[0].nrows(), d[1].nrows(), d[2].nrows()]);
        cp_accumulate(&mut t, 1.0, &d[0], &d[1], &d[2]);
        t
    }

    /// Standard Gaussian common and distinct factors; coupled factors are
    /// set to `P_kj C_j` where the coupling applies.
    pub fn random(meas: &MeasurementModel, r: usize, l: &[usize], spec: &CouplingSpec, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let m = meas.common_dims();
        let c = [0, 1, 2].map(|j| gaussian_matrix(m[j], r, &mut rng));
        let mut xc = Vec::with_capacity(l.len());
        let mut xd = Vec::with_capacity(l.len());
        for (k, &lk) in l.iter().enumerate() {
            let n = meas.dataset_dims(k);
            xc.push([0, 1, 2].map(|j| {
                if spec.contains(j, k) {
                    meas.op(k, j) * &c[j]
                } else {
                    gaussian_matrix(n[j], r, &mut rng)
                }
            }));
            xd.push([0, 1, 2].map(|j| gaussian_matrix(n[j], lk, &mut rng)));
        }
        Self { c, xc, xd }
    }

    /// Initial state from a semi-algebraic solution with distinct factors.
    pub fn from_semialg(res: &SemiAlgResult, meas: &MeasurementModel) -> Result<Self> {
        let xd = res
            .distinct_factors
            .clone()
            .ok_or_else(|| Error::InvalidArgument("semi-algebraic result has no distinct factors".into()))?;
        let c = [res.common.a.clone(), res.common.b.clone(), res.common.c.clone()];
        let xc = (0..meas.num_datasets())
            .map(|k| [0, 1, 2].map(|j| meas.op(k, j) * &c[j]))
            .collect();
        Ok(Self { c, xc, xd })
    }

    fn validate(&self, y: &[Tensor3], meas: &MeasurementModel) -> Result<()> {
        let r = self.rank();
        let m = meas.common_dims();
        if r == 0 {
            return Err(Error::InvalidArgument("common rank must be at least 1".into()));
        }
        for j in 0..3 {
            if self.c[j].shape() != (m[j], r) {
                return dim_err(format!("C_{j} is {:?}, expected ({}, {r})", self.c[j].shape(), m[j]));
            }
        }
        if self.xc.len() != y.len() || self.xd.len() != y.len() {
            return dim_err("state and data disagree on the number of datasets");
        }
        for (k, yk) in y.iter().enumerate() {
            let n = yk.dims();
            let lk = self.xd[k][0].ncols();
            for j in 0..3 {
                if self.xc[k][j].shape() != (n[j], r) || self.xd[k][j].shape() != (n[j], lk) {
                    return dim_err(format!("factors of dataset {k} in mode {j} have the wrong shape"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlsOptions {
    pub max_iters: usize,
    /// Stop when the objective changes by less than this, relative to its
    /// previous value.
    pub tol: f64,
    /// Evaluate the objective after every block and record increases.
    pub check_monotone: bool,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-9,
            check_monotone: false,
        }
    }
}

/// An objective increase observed after a block update.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockIncrease {
    pub iteration: usize,
    /// Blocks 0-2 are the common modes, 3-5 the distinct modes.
    pub block: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone)]
pub struct AlsFit {
    pub state: AlsState,
    pub objective: f64,
    /// Objective after every outer iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of solves that needed damping or a pseudoinverse.
    pub damped_solves: usize,
    pub monotone_violations: Vec<BlockIncrease>,
    /// Largest `||Xc[k][j] - P_kj C_j||` over coupled pairs, checked after
    /// every iteration.
    pub max_constraint_violation: f64,
    pub restart: usize,
}

/// `sum_k ||Y_k - [[Xc_k]] - [[Xd_k]]||^2` with `Xc_kj` replaced by
/// `P_kj C_j` for coupled pairs.
pub fn objective(state: &AlsState, y: &[Tensor3], meas: &MeasurementModel, spec: &CouplingSpec) -> f64 {
    y.iter()
        .enumerate()
        .map(|(k, yk)| {
            let xc: Vec<Matrix> = (0..3)
                .map(|j| {
                    if spec.contains(j, k) {
                        meas.op(k, j) * &state.c[j]
                    } else {
                        state.xc[k][j].clone()
                    }
                })
                .collect();
            let mut r = yk.clone();
            cp_accumulate(&mut r, -1.0, &xc[0], &xc[1], &xc[2]);
            let d = &state.xd[k];
            cp_accumulate(&mut r, -1.0, &d[0], &d[1], &d[2]);
            r.norm_sq()
        })
        .sum()
}

fn residual_without_distinct(y: &Tensor3, xd: &[Matrix; 3]) -> Tensor3 {
    let mut t = y.clone();
    cp_accumulate(&mut t, -1.0, &xd[0], &xd[1], &xd[2]);
    t
}

/// Normal equations of the objective in `X = C_mode^T`:
/// `sum_k (J_k^T J_k) X (P_kj^T P_kj) = sum_k J_k^T unfold(Y_k - [[Xd_k]]) P_kj`
/// over the coupled datasets, where `J_k` is the Khatri-Rao product of the
/// other coupled-side factors.
pub fn common_normal_equations(
    state: &AlsState,
    y: &[Tensor3],
    meas: &MeasurementModel,
    spec: &CouplingSpec,
    mode: usize,
) -> Result<SylvesterSystem> {
    let ytil: Vec<Tensor3> = (0..y.len()).map(|k| residual_without_distinct(&y[k], &state.xd[k])).collect();
    let xc = coupled_factors(state, meas, spec);
    build_common_system(&ytil, &xc, meas, spec, mode, state.rank())
}

fn coupled_factors(state: &AlsState, meas: &MeasurementModel, spec: &CouplingSpec) -> Vec<[Matrix; 3]> {
    (0..state.xc.len())
        .map(|k| {
            [0, 1, 2].map(|j| {
                if spec.contains(j, k) {
                    meas.op(k, j) * &state.c[j]
                } else {
                    state.xc[k][j].clone()
                }
            })
        })
        .collect()
}

fn build_common_system(
    ytil: &[Tensor3],
    xc: &[[Matrix; 3]],
    meas: &MeasurementModel,
    spec: &CouplingSpec,
    mode: usize,
    r: usize,
) -> Result<SylvesterSystem> {
    let m = meas.common_dims()[mode];
    let mut terms = Vec::with_capacity(spec.gamma[mode].len());
    let mut rhs = Matrix::zeros(r, m);
    for &k in &spec.gamma[mode] {
        let f = [&xc[k][0], &xc[k][1], &xc[k][2]];
        let a = khatri_rao_gram(f, mode);
        let p = meas.op(k, mode);
        terms.push((a, p.transpose() * p));
        rhs += mttkrp(&ytil[k], f, mode)?.transpose() * p;
    }
    Ok(SylvesterSystem { terms, rhs })
}

fn balance(factors: &mut [&mut Matrix; 3]) {
    for q in 0..factors[0].ncols() {
        let n: Vec<f64> = factors.iter().map(|f| f.column(q).norm()).collect();
        if n.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            continue;
        }
        let g = (n[0] * n[1] * n[2]).cbrt();
        for (f, nj) in factors.iter_mut().zip(&n) {
            f.column_mut(q).scale_mut(g / nj);
        }
    }
}

/// Rescales common columns so that the three modes have equal norms, and
/// likewise for each dataset's distinct factors. The objective is unchanged.
fn balance_state(state: &mut AlsState, meas: &MeasurementModel, spec: &CouplingSpec) {
    let r = state.rank();
    for q in 0..r {
        let n: Vec<f64> = (0..3).map(|j| state.c[j].column(q).norm()).collect();
        if n.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            continue;
        }
        let g = (n[0] * n[1] * n[2]).cbrt();
        for j in 0..3 {
            let s = g / n[j];
            state.c[j].column_mut(q).scale_mut(s);
            for k in 0..state.xc.len() {
                if !spec.contains(j, k) {
                    state.xc[k][j].column_mut(q).scale_mut(s);
                }
            }
        }
    }
    for k in 0..state.xc.len() {
        for j in 0..3 {
            if spec.contains(j, k) {
                state.xc[k][j] = meas.op(k, j) * &state.c[j];
            }
        }
        let [d0, d1, d2] = &mut state.xd[k];
        balance(&mut [d0, d1, d2]);
    }
}

/// Runs the coupled ALS from `init`.
pub fn coupled_als_fit(
    y: &[Tensor3],
    meas: &MeasurementModel,
    spec: &CouplingSpec,
    init: AlsState,
    opts: &AlsOptions,
) -> Result<AlsFit> {
    meas.check_data(y)?;
    spec.validate(y.len())?;
    init.validate(y, meas)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let kk = y.len();
    let r = init.rank();
    let data_energy: f64 = y.iter().map(|t| t.norm_sq()).sum();
    let floor = 1e-30 * data_energy.max(f64::MIN_POSITIVE);

    let mut st = init;
    for k in 0..kk {
        for j in 0..3 {
            if spec.contains(j, k) {
                st.xc[k][j] = meas.op(k, j) * &st.c[j];
            }
        }
    }
    let mut prev = objective(&st, y, meas, spec);
    let mut trace = Vec::new();
    let mut damped_solves = 0;
    let mut violations = Vec::new();
    let mut max_violation: f64 = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    let check = |st: &AlsState, it: usize, block: usize, before: &mut f64, violations: &mut Vec<BlockIncrease>| {
        let after = objective(st, y, meas, spec);
        if after > *before + 1e-10 * *before + 1e-13 * data_energy {
            violations.push(BlockIncrease {
                iteration: it,
                block,
                before: *before,
                after,
            });
        }
        *before = after;
    };

    for it in 0..opts.max_iters {
        iterations = it + 1;
        let mut running = prev;
        let ytil: Vec<Tensor3> = (0..kk).map(|k| residual_without_distinct(&y[k], &st.xd[k])).collect();

        for j in 0..3 {
            if !spec.gamma[j].is_empty() {
                let sys = build_common_system(&ytil, &st.xc, meas, spec, j, r)?;
                let sol = solve_generalized_sylvester(&sys)?;
                if sol.damped {
                    damped_solves += 1;
                }
                st.c[j] = sol.x.transpose();
            }
            for k in 0..kk {
                if spec.contains(j, k) {
                    st.xc[k][j] = meas.op(k, j) * &st.c[j];
                } else {
                    let f = [&st.xc[k][0], &st.xc[k][1], &st.xc[k][2]];
                    let rhs = mttkrp(&ytil[k], f, j)?;
                    let (x, flag) = solve_gram_system(&rhs, &khatri_rao_gram(f, j))?;
                    damped_solves += flag as usize;
                    st.xc[k][j] = x;
                }
            }
            if opts.check_monotone {
                check(&st, it, j, &mut running, &mut violations);
            }
        }

        let ybar: Vec<Tensor3> = (0..kk)
            .map(|k| {
                let mut t = y[k].clone();
                let x = &st.xc[k];
                cp_accumulate(&mut t, -1.0, &x[0], &x[1], &x[2]);
                t
            })
            .collect();
        for j in 0..3 {
            for k in 0..kk {
                if st.xd[k][0].ncols() == 0 {
                    continue;
                }
                let d = &st.xd[k];
                let f = [&d[0], &d[1], &d[2]];
                let rhs = mttkrp(&ybar[k], f, j)?;
                let (x, flag) = solve_gram_system(&rhs, &khatri_rao_gram(f, j))?;
                damped_solves += flag as usize;
                st.xd[k][j] = x;
            }
            if opts.check_monotone {
                check(&st, it, 3 + j, &mut running, &mut violations);
            }
        }

        balance_state(&mut st, meas, spec);
        for k in 0..kk {
            for j in 0..3 {
                if spec.contains(j, k) {
                    let v = (&st.xc[k][j] - meas.op(k, j) * &st.c[j]).norm();
                    max_violation = max_violation.max(v);
                }
            }
        }

        let f = objective(&st, y, meas, spec);
        if !f.is_finite() {
            return Err(Error::SingularSystem);
        }
        trace.push(f);
        let change = (prev - f).abs() / prev.max(f64::MIN_POSITIVE);
        prev = f;
        if change < opts.tol || f <= floor {
            converged = true;
            break;
        }
    }

    Ok(AlsFit {
        state: st,
        objective: prev,
        trace,
        iterations,
        converged,
        damped_solves,
        monotone_violations: violations,
        max_constraint_violation: max_violation,
        restart: 0,
    })
}

/// Best of `restarts` runs from random initializations; restart `i` uses
/// seed `derive_seed(seed, i)`. The lowest final objective wins, ties go to
/// the lowest restart index.
#[allow(clippy::too_many_arguments)]
pub fn coupled_als_multistart(
    y: &[Tensor3],
    meas: &MeasurementModel,
    r: usize,
    l: &[usize],
    spec: &CouplingSpec,
    restarts: usize,
    seed: u64,
    opts: &AlsOptions,
) -> Result<AlsFit> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("at least one restart is required".into()));
    }
    if l.len() != y.len() {
        return dim_err(format!("{} distinct ranks for {} datasets", l.len(), y.len()));
    }
    meas.check_data(y)?;
    let fits: Vec<Result<AlsFit>> = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let init = AlsState::random(meas, r, l, spec, derive_seed(seed, i as u64));
            coupled_als_fit(y, meas, spec, init, opts).map(|mut f| {
                f.restart = i;
                f
            })
        })
        .collect();
    let mut best: Option<AlsFit> = None;
    for fit in fits {
        let fit = fit?;
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Coupled ALS initialized by the semi-algebraic solution. Restarts are
/// spent inside the semi-algebraic CPDs.
#[allow(clippy::too_many_arguments)]
pub fn coupled_als_semialg(
    y: &[Tensor3],
    meas: &MeasurementModel,
    r: usize,
    l: &[usize],
    spec: &CouplingSpec,
    witness: Witness,
    semi: &SemiAlgOptions,
    opts: &AlsOptions,
) -> Result<(AlsFit, SemiAlgResult)> {
    let mut semi = semi.clone();
    semi.distinct_cpd = true;
    let res = semialg_decompose(y, meas, r, l, witness, &semi)?;
    let init = AlsState::from_semialg(&res, meas)?;
    let fit = coupled_als_fit(y, meas, spec, init, opts)?;
    Ok((fit, res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic, nrmse, SynthConfig};

    fn brute_objective(state: &AlsState, y: &[Tensor3], meas: &MeasurementModel, spec: &CouplingSpec) -> f64 {
        let mut total = 0.0;
        for (k, yk) in y.iter().enumerate() {
            let xc: Vec<Matrix> = (0..3)
                .map(|j| if spec.contains(j, k) { meas.op(k, j) * &state.c[j] } else { state.xc[k][j].clone() })
                .collect();
            let [n1, n2, n3] = yk.dims();
            for i in 0..n1 {
                for jj in 0..n2 {
                    for kk in 0..n3 {
                        let mut model = 0.0;
                        for q in 0..state.rank() {
                            model += xc[0][(i, q)] * xc[1][(jj, q)] * xc[2][(kk, q)];
                        }
                        for q in 0..state.xd[k][0].ncols() {
                            model += state.xd[k][0][(i, q)] * state.xd[k][1][(jj, q)] * state.xd[k][2][(kk, q)];
                        }
                        total += (yk.get(i, jj, kk) - model).powi(2);
                    }
                }
            }
        }
        total
    }

    #[test]
    fn objective_cases() {
        let d = generate_synthetic(&SynthConfig::standard(f64::INFINITY, 1)).unwrap();
        let spec = CouplingSpec::full(3);
        let truth = AlsState {
            c: [d.model.common.a.clone(), d.model.common.b.clone(), d.model.common.c.clone()],
            xc: (0..3).map(|k| [0, 1, 2].map(|j| d.meas.op(k, j) * d.model.common.factor(j))).collect(),
            xd: d.model.distinct.clone(),
        };
        assert!(objective(&truth, &d.y, &d.meas, &spec) < 1e-20);

        let mut zero = truth.clone();
        for m in zero.c.iter_mut() {
            m.fill(0.0);
        }
        for f in zero.xd.iter_mut().chain(zero.xc.iter_mut()) {
            for m in f.iter_mut() {
                m.fill(0.0);
            }
        }
        let energy: f64 = d.y.iter().map(|t| t.norm_sq()).sum();
        assert!((objective(&zero, &d.y, &d.meas, &spec) - energy).abs() < 1e-12 * energy);

        let partial = CouplingSpec {
            gamma: [vec![0, 1], vec![1, 2], vec![0, 2]],
        };
        for seed in 0..3 {
            let s = AlsState::random(&d.meas, 5, &[5, 5, 5], &partial, seed);
            let a = objective(&s, &d.y, &d.meas, &partial);
            let b = brute_objective(&s, &d.y, &d.meas, &partial);
            assert!((a - b).abs() < 1e-10 * b);
        }
    }

    #[test]
    fn coupling_spec_validation() {
        assert!(CouplingSpec::full(3).validate(3).is_ok());
        let orphan = CouplingSpec {
            gamma: [vec![0], vec![0], vec![1]],
        };
        assert!(orphan.validate(3).is_err());
        let out_of_range = CouplingSpec {
            gamma: [vec![0, 3], vec![1], vec![2]],
        };
        assert!(out_of_range.validate(3).is_err());
    }

    fn numeric_gradient(state: &AlsState, y: &[Tensor3], meas: &MeasurementModel, spec: &CouplingSpec) -> Matrix {
        let h = 1e-5;
        let c0 = &state.c[0];
        Matrix::from_fn(c0.nrows(), c0.ncols(), |i, q| {
            let mut p = state.clone();
            p.c[0][(i, q)] += h;
            let fp = objective(&p, y, meas, spec);
            p.c[0][(i, q)] -= 2.0 * h;
            let fm = objective(&p, y, meas, spec);
            (fp - fm) / (2.0 * h)
        })
    }

    #[test]
    fn normal_equations_match_finite_difference_gradient() {
        let d = generate_synthetic(&SynthConfig::standard(30.0, 2)).unwrap();
        let spec = CouplingSpec {
            gamma: [vec![0, 1, 2], vec![0, 1], vec![1, 2]],
        };
        for seed in 0..5 {
            let s = AlsState::random(&d.meas, 5, &[5, 5, 5], &spec, 100 + seed);
            let sys = common_normal_equations(&s, &d.y, &d.meas, &spec, 0).unwrap();
            let analytic = (sys.apply(&s.c[0].transpose()) - &sys.rhs).transpose() * 2.0;
            let numeric = numeric_gradient(&s, &d.y, &d.meas, &spec);
            let rel = (&analytic - &numeric).norm() / numeric.norm();
            assert!(rel < 1e-5, "seed {seed}: {rel}");
        }
    }

    #[test]
    fn common_update_is_stationary() {
        let d = generate_synthetic(&SynthConfig::standard(30.0, 3)).unwrap();
        let spec = CouplingSpec::full(3);
        let mut s = AlsState::random(&d.meas, 5, &[5, 5, 5], &spec, 9);
        let sys = common_normal_equations(&s, &d.y, &d.meas, &spec, 0).unwrap();
        s.c[0] = solve_generalized_sylvester(&sys).unwrap().x.transpose();
        let g = numeric_gradient(&s, &d.y, &d.meas, &spec);
        let scale = sys.rhs.norm();
        assert!(g.norm() < 1e-5 * scale, "{} vs {}", g.norm(), scale);
    }

    #[test]
    fn blocks_never_increase_objective_and_constraints_hold() {
        let d = generate_synthetic(&SynthConfig::standard(30.0, 4)).unwrap();
        for spec in [
            CouplingSpec::full(3),
            CouplingSpec {
                gamma: [vec![0, 1], vec![1, 2], vec![0, 2]],
            },
        ] {
            let init = AlsState::random(&d.meas, 5, &[5, 5, 5], &spec, 1);
            let opts = AlsOptions {
                max_iters: 60,
                check_monotone: true,
                ..AlsOptions::default()
            };
            let fit = coupled_als_fit(&d.y, &d.meas, &spec, init, &opts).unwrap();
            assert!(fit.monotone_violations.is_empty(), "{:?}", fit.monotone_violations);
            assert_eq!(fit.max_constraint_violation, 0.0);
            for w in fit.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let d = generate_synthetic(&SynthConfig::standard(30.0, 5)).unwrap();
        let spec = CouplingSpec::full(3);
        let opts = AlsOptions {
            max_iters: 30,
            ..AlsOptions::default()
        };
        let a = coupled_als_multistart(&d.y, &d.meas, 5, &[5, 5, 5], &spec, 3, 11, &opts).unwrap();
        let b = coupled_als_multistart(&d.y, &d.meas, 5, &[5, 5, 5], &spec, 3, 11, &opts).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.restart, b.restart);
    }

    #[test]
    fn without_distinct_parts_recovers_coupled_cpd() {
        let mut cfg = SynthConfig::standard(f64::INFINITY, 6);
        cfg.l = vec![0, 0, 0];
        let d = generate_synthetic(&cfg).unwrap();
        let spec = CouplingSpec::full(3);
        let fit = coupled_als_multistart(&d.y, &d.meas, 5, &[0, 0, 0], &spec, 5, 2, &AlsOptions::default()).unwrap();
        assert!(nrmse(&fit.state.common_tensor(), &d.common).unwrap() < 1e-6);
        assert!(fit.state.xd.iter().all(|f| f[0].ncols() == 0));
    }

    #[test]
    fn rejects_inconsistent_initial_state() {
        let d = generate_synthetic(&SynthConfig::standard(30.0, 7)).unwrap();
        let spec = CouplingSpec::full(3);
        let mut s = AlsState::random(&d.meas, 5, &[5, 5, 5], &spec, 1);
        s.xd[1][2] = Matrix::zeros(3, 5);
        assert!(coupled_als_fit(&d.y, &d.meas, &spec, s, &AlsOptions::default()).is_err());
    }
}
