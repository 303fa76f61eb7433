//! Recoverability checks for the coupled model.
//!
//! [`check_generic`] works on dimensions and operator ranks only and holds
//! with probability one over generic factors. [`check_deterministic`]
//! evaluates the Kruskal-type conditions on explicit factors.

use crate::error::{dim_err, Error, Result};
use crate::model::{hstack, CoupledModel, MeasurementModel};
use crate::numerics::{
    is_full_column_rank, kruskal_rank, numeric_rank, pinv, DEFAULT_RANK_TOL, KRUSKAL_MAX_COLS,
};
use crate::tensor::Matrix;

/// Dimensions and operator ranks of a coupled problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemDims {
    /// Common tensor dimensions `(M1, M2, M3)`.
    pub m: [usize; 3],
    /// Per-dataset dimensions `N[k]`.
    pub n: Vec<[usize; 3]>,
    /// Rank of each `P_{k,j}`.
    pub p_rank: Vec<[usize; 3]>,
    /// Whether each `P_{k,j}` has full column rank.
    pub p_full_col: Vec<[bool; 3]>,
    /// Common rank `R`.
    pub r: usize,
    /// Distinct ranks `L[k]`.
    pub l: Vec<usize>,
}

impl ProblemDims {
    /// Dimensions with generic (maximal rank) operators.
    pub fn generic(m: [usize; 3], n: Vec<[usize; 3]>, r: usize, l: Vec<usize>) -> Self {
        let p_rank = n
            .iter()
            .map(|nk| [0, 1, 2].map(|j| nk[j].min(m[j])))
            .collect();
        let p_full_col = n.iter().map(|nk| [0, 1, 2].map(|j| nk[j] >= m[j])).collect();
        Self {
            m,
            n,
            p_rank,
            p_full_col,
            r,
            l,
        }
    }

    /// Dimensions with ranks measured from explicit operators.
    pub fn from_measurements(meas: &MeasurementModel, r: usize, l: Vec<usize>, tol: f64) -> Result<Self> {
        let k = meas.num_datasets();
        let mut p_rank = Vec::with_capacity(k);
        let mut p_full_col = Vec::with_capacity(k);
        for kk in 0..k {
            let mut rk = [0; 3];
            let mut fk = [false; 3];
            for j in 0..3 {
                rk[j] = numeric_rank(meas.op(kk, j), tol)?;
                fk[j] = rk[j] == meas.op(kk, j).ncols();
            }
            p_rank.push(rk);
            p_full_col.push(fk);
        }
        let dims = Self {
            m: meas.common_dims(),
            n: (0..k).map(|kk| meas.dataset_dims(kk)).collect(),
            p_rank,
            p_full_col,
            r,
            l,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn num_datasets(&self) -> usize {
        self.n.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n.len();
        if k == 0 {
            return Err(Error::InvalidArgument("at least one dataset is required".into()));
        }
        if self.p_rank.len() != k || self.p_full_col.len() != k || self.l.len() != k {
            return dim_err(format!(
                "per-dataset fields disagree on dataset count ({k} dims, {} ranks, {} flags, {} distinct ranks)",
                self.p_rank.len(),
                self.p_full_col.len(),
                self.l.len()
            ));
        }
        if self.r == 0 {
            return Err(Error::InvalidArgument("common rank R must be at least 1".into()));
        }
        if self.m.contains(&0) {
            return Err(Error::InvalidArgument("common dimensions must be positive".into()));
        }
        for kk in 0..k {
            for j in 0..3 {
                let bound = self.n[kk][j].min(self.m[j]);
                if self.n[kk][j] == 0 {
                    return Err(Error::InvalidArgument(format!("dataset {kk} has an empty mode {j}")));
                }
                if self.p_rank[kk][j] > bound {
                    return Err(Error::InvalidArgument(format!(
                        "rank of P[{kk}][{j}] is {} but cannot exceed {bound}",
                        self.p_rank[kk][j]
                    )));
                }
                if self.p_full_col[kk][j] && self.p_rank[kk][j] != self.m[j] {
                    return Err(Error::InvalidArgument(format!(
                        "P[{kk}][{j}] is flagged full column rank but has rank {} < {}",
                        self.p_rank[kk][j], self.m[j]
                    )));
                }
            }
        }
        Ok(())
    }

    fn total_dims(&self, k: usize) -> usize {
        self.n[k].iter().sum()
    }
}

/// Left and right hand sides of one counting inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bound {
    pub lhs: usize,
    pub rhs: usize,
}

impl Bound {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs
    }
}

/// Indices (0-based) of the fully unique dataset `eta` and the mode-wise
/// unique datasets `xi[j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Witness {
    pub eta: usize,
    pub xi: [usize; 3],
}

impl Witness {
    fn distinct_count(&self) -> usize {
        let mut s = vec![self.eta, self.xi[0], self.xi[1], self.xi[2]];
        s.sort_unstable();
        s.dedup();
        s.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniquenessReport {
    /// Datasets whose CPD is generically essentially unique.
    pub eta_candidates: Vec<usize>,
    /// Per mode, datasets whose mode factor is generically unique.
    pub unimode_candidates: [Vec<usize>; 3],
    /// Whether some witness has a `xi[j]` different from `eta`.
    pub a6_satisfied: bool,
    pub overall: bool,
    pub witness: Option<Witness>,
    /// Full-uniqueness count per dataset.
    pub full_bounds: Vec<Bound>,
    /// Uni-mode count per dataset and mode (`None` when the operator is
    /// not full column rank).
    pub unimode_bounds: Vec<[Option<Bound>; 3]>,
}

/// Generic recoverability from dimensions and operator ranks.
pub fn check_generic(dims: &ProblemDims) -> Result<UniquenessReport> {
    dims.validate()?;
    let k = dims.num_datasets();
    let r = dims.r;

    let full_bounds: Vec<Bound> = (0..k)
        .map(|kk| {
            let w = r + dims.l[kk];
            Bound {
                lhs: (0..3).map(|j| dims.p_rank[kk][j].min(w)).sum(),
                rhs: 2 * w + 2,
            }
        })
        .collect();

    let unimode_bounds: Vec<[Option<Bound>; 3]> = (0..k)
        .map(|kk| {
            let w = r + dims.l[kk];
            [0, 1, 2].map(|j| {
                if !dims.p_full_col[kk][j] {
                    return None;
                }
                let own = dims.n[kk][j].min(dims.m[j].min(r) + dims.l[kk]);
                let others: usize = (0..3)
                    .filter(|&i| i != j)
                    .map(|i| dims.p_rank[kk][i].min(w))
                    .sum();
                Some(Bound {
                    lhs: own + others,
                    rhs: 2 * w + 2,
                })
            })
        })
        .collect();

    let eta_candidates: Vec<usize> = (0..k).filter(|&kk| full_bounds[kk].holds()).collect();
    let unimode_candidates = [0, 1, 2].map(|j| {
        (0..k)
            .filter(|&kk| unimode_bounds[kk][j].is_some_and(|b| b.holds()))
            .collect::<Vec<_>>()
    });

    let mut witness: Option<Witness> = None;
    let mut best_key = (usize::MAX, 0usize);
    for &eta in &eta_candidates {
        for &x0 in &unimode_candidates[0] {
            for &x1 in &unimode_candidates[1] {
                for &x2 in &unimode_candidates[2] {
                    let w = Witness { eta, xi: [x0, x1, x2] };
                    if w.xi.iter().all(|&x| x == eta) {
                        continue;
                    }
                    let mut set = vec![eta, x0, x1, x2];
                    set.sort_unstable();
                    set.dedup();
                    let size: usize = set.iter().map(|&s| dims.total_dims(s)).sum();
                    let key = (w.distinct_count(), size);
                    // Iteration is lexicographic, so strict improvement keeps
                    // the first witness among equals.
                    if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 > best_key.1) {
                        best_key = key;
                        witness = Some(w);
                    }
                }
            }
        }
    }

    let a6_satisfied = witness.is_some();
    let overall = !eta_candidates.is_empty()
        && unimode_candidates.iter().all(|c| !c.is_empty())
        && a6_satisfied;

    Ok(UniquenessReport {
        eta_candidates,
        unimode_candidates,
        a6_satisfied,
        overall,
        witness,
        full_bounds,
        unimode_bounds,
    })
}

/// Kruskal count for the full uniqueness of the fully unique dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullCheck {
    pub kruskal_ranks: [usize; 3],
    pub bound: Bound,
}

/// Uni-mode check of one mode of the witness dataset for that mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeCheck {
    pub dataset: usize,
    pub has_zero_column: bool,
    pub operator_full_column_rank: bool,
    /// Rank of the mode factor plus the Kruskal ranks of the other two.
    pub bound: Bound,
    /// `rank(F_j) + min(kr(F_a), kr(F_b)) >= R + L + 1`, reported only.
    pub alternative_condition: bool,
    pub holds: bool,
}

/// Cross-dataset separation check for one mode with `xi[j] != eta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparationCheck {
    pub mode: usize,
    pub kruskal_rank: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicReport {
    pub full: FullCheck,
    pub modes: [ModeCheck; 3],
    pub separation: Vec<SeparationCheck>,
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
    pub overall: bool,
}

/// Deterministic recoverability on explicit factors for a given witness.
pub fn check_deterministic(
    model: &CoupledModel,
    meas: &MeasurementModel,
    witness: Witness,
    tol: f64,
) -> Result<DeterministicReport> {
    let k = meas.num_datasets();
    if model.distinct.len() != k {
        return dim_err(format!("{} distinct components for {k} datasets", model.distinct.len()));
    }
    if witness.eta >= k || witness.xi.iter().any(|&x| x >= k) {
        return Err(Error::InvalidArgument(format!("witness {witness:?} refers to a missing dataset")));
    }
    if model.common.dims() != meas.common_dims() {
        return dim_err("common factors do not match the measurement operators");
    }
    for kk in 0..k {
        for j in 0..3 {
            if model.distinct[kk][j].nrows() != meas.dataset_dims(kk)[j]
                || model.distinct[kk][j].ncols() != model.distinct_rank(kk)
            {
                return dim_err(format!("distinct factor {j} of dataset {kk} has the wrong shape"));
            }
        }
    }
    let r = model.rank();
    let stacked = |kk: usize| -> Result<[Matrix; 3]> {
        let f = [0, 1, 2].map(|j| model.stacked_factor(meas, kk, j));
        let cols = f[0].ncols();
        if cols > KRUSKAL_MAX_COLS {
            return Err(Error::TooManyColumns {
                cols,
                limit: KRUSKAL_MAX_COLS,
            });
        }
        Ok(f)
    };

    let eta = witness.eta;
    let fe = stacked(eta)?;
    let we = r + model.distinct_rank(eta);
    let mut kr = [0; 3];
    for j in 0..3 {
        kr[j] = kruskal_rank(&fe[j], tol)?;
    }
    let full = FullCheck {
        kruskal_ranks: kr,
        bound: Bound {
            lhs: kr.iter().sum(),
            rhs: 2 * we + 2,
        },
    };
    let a1 = full.bound.holds();

    let mut modes = Vec::with_capacity(3);
    for j in 0..3 {
        let xi = witness.xi[j];
        let f = stacked(xi)?;
        let w = r + model.distinct_rank(xi);
        let others: Vec<usize> = (0..3).filter(|&i| i != j).collect();
        let kra = kruskal_rank(&f[others[0]], tol)?;
        let krb = kruskal_rank(&f[others[1]], tol)?;
        let rank_j = numeric_rank(&f[j], tol)?;
        let has_zero_column = has_zero_column(&f[j], tol);
        let operator_full_column_rank = is_full_column_rank(meas.op(xi, j), tol)?;
        let bound = Bound {
            lhs: rank_j + kra + krb,
            rhs: 2 * w + 2,
        };
        modes.push(ModeCheck {
            dataset: xi,
            has_zero_column,
            operator_full_column_rank,
            bound,
            alternative_condition: rank_j + kra.min(krb) >= w + 1,
            holds: bound.holds() && !has_zero_column && operator_full_column_rank,
        });
    }
    let modes: [ModeCheck; 3] = modes.try_into().expect("three modes");
    let a2 = modes.iter().all(|m| m.holds);

    let mut separation = Vec::new();
    for j in 0..3 {
        let xi = witness.xi[j];
        if xi == eta {
            continue;
        }
        let pe = meas.op(eta, j);
        let pc = pe * model.common.factor(j);
        let mapped = pe * pinv(meas.op(xi, j), DEFAULT_RANK_TOL)? * &model.distinct[xi][j];
        let m = hstack(&hstack(&pc, &mapped), &model.distinct[eta][j]);
        if m.ncols() > KRUSKAL_MAX_COLS {
            return Err(Error::TooManyColumns {
                cols: m.ncols(),
                limit: KRUSKAL_MAX_COLS,
            });
        }
        let kr = kruskal_rank(&m, tol)?;
        separation.push(SeparationCheck {
            mode: j,
            kruskal_rank: kr,
            holds: kr > 1,
        });
    }
    let a3 = !separation.is_empty() && separation.iter().all(|s| s.holds);

    Ok(DeterministicReport {
        full,
        modes,
        separation,
        a1,
        a2,
        a3,
        overall: a1 && a2 && a3,
    })
}

fn has_zero_column(m: &Matrix, tol: f64) -> bool {
    let norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    norms.iter().any(|&n| n <= tol * max || n == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, rng_from_seed, uniform_matrix};
    use crate::tensor::CpdFactors;

    fn standard(l: Vec<usize>, r: usize) -> ProblemDims {
        ProblemDims::generic([7, 11, 9], vec![[10, 5, 7], [5, 12, 7], [5, 7, 10]], r, l)
    }

    #[test]
    fn standard_certificate() {
        let rep = check_generic(&standard(vec![5, 5, 5], 5)).unwrap();
        assert_eq!(rep.eta_candidates, vec![1]);
        assert_eq!(rep.full_bounds[1], Bound { lhs: 22, rhs: 22 });
        assert_eq!(rep.unimode_candidates, [vec![0], vec![1], vec![2]]);
        assert!(rep.a6_satisfied);
        assert!(rep.overall);
        assert_eq!(rep.witness, Some(Witness { eta: 1, xi: [0, 1, 2] }));
    }

    #[test]
    fn standard_first_dataset_full_uniqueness_threshold() {
        // Y1 is 10x5x7 with P ranks 7, 5, 7: the count is 19.
        let at8 = check_generic(&standard(vec![3, 5, 5], 5)).unwrap();
        assert_eq!(at8.full_bounds[0], Bound { lhs: 19, rhs: 18 });
        assert!(at8.eta_candidates.contains(&0));
        let at9 = check_generic(&standard(vec![4, 5, 5], 5)).unwrap();
        assert_eq!(at9.full_bounds[0], Bound { lhs: 19, rhs: 20 });
        assert!(!at9.eta_candidates.contains(&0));
    }

    #[test]
    fn standard_raised_first_distinct_rank_loses_mode0() {
        let rep = check_generic(&standard(vec![6, 5, 5], 5)).unwrap();
        assert_eq!(rep.unimode_bounds[0][0], Some(Bound { lhs: 22, rhs: 24 }));
        assert!(rep.unimode_candidates[0].is_empty());
        assert!(!rep.overall);
    }

    #[test]
    fn standard_common_rank_seven_fails() {
        let rep = check_generic(&standard(vec![5, 5, 5], 7)).unwrap();
        assert_eq!(rep.full_bounds[1], Bound { lhs: 23, rhs: 26 });
        assert!(!rep.overall);
    }

    #[test]
    fn single_dataset_never_certifies() {
        let dims = ProblemDims::generic([6, 6, 6], vec![[6, 6, 6]], 3, vec![0]);
        let rep = check_generic(&dims).unwrap();
        assert_eq!(rep.eta_candidates, vec![0]);
        assert!(!rep.a6_satisfied);
        assert!(!rep.overall);
        assert!(rep.witness.is_none());
    }

    #[test]
    fn witness_prefers_fewer_then_larger_datasets() {
        // Three identical-rank datasets; dataset 2 is the largest.
        let dims = ProblemDims::generic(
            [6, 6, 6],
            vec![[6, 6, 6], [6, 6, 6], [8, 8, 8]],
            2,
            vec![1, 1, 1],
        );
        let rep = check_generic(&dims).unwrap();
        let w = rep.witness.unwrap();
        assert_eq!(w.distinct_count(), 2);
        assert!(w.eta == 2 || w.xi.contains(&2));
    }

    #[test]
    fn invalid_dims_are_rejected() {
        let mut d = standard(vec![5, 5, 5], 5);
        d.p_rank[0][0] = 8;
        assert!(check_generic(&d).is_err());
        let mut d = standard(vec![5, 5, 5], 5);
        d.r = 0;
        assert!(check_generic(&d).is_err());
        let mut d = standard(vec![5, 5, 5], 5);
        d.l.pop();
        assert!(check_generic(&d).is_err());
    }

    #[test]
    fn more_operator_rank_never_breaks_certificate() {
        let base = standard(vec![5, 5, 5], 5);
        assert!(check_generic(&base).unwrap().overall);
        for k in 0..3 {
            for j in 0..3 {
                let mut d = base.clone();
                d.p_rank[k][j] = d.n[k][j].min(d.m[j]);
                assert!(check_generic(&d).unwrap().overall);
            }
        }
        // Lowering a rank and raising it back must be monotone too.
        let mut low = base.clone();
        low.p_full_col[1][0] = false;
        low.p_rank[1][0] = 3;
        let low_rep = check_generic(&low).unwrap();
        let mut up = low.clone();
        up.p_rank[1][0] = 4;
        let up_rep = check_generic(&up).unwrap();
        assert!(!low_rep.overall || up_rep.overall);
    }

    pub(crate) fn standard_instance(seed: u64) -> (CoupledModel, MeasurementModel) {
        let mut rng = rng_from_seed(seed);
        let m = [7, 11, 9];
        let n = [[10, 5, 7], [5, 12, 7], [5, 7, 10]];
        let common = CpdFactors::new(
            gaussian_matrix(m[0], 5, &mut rng),
            gaussian_matrix(m[1], 5, &mut rng),
            gaussian_matrix(m[2], 5, &mut rng),
        )
        .unwrap();
        let mut ops = Vec::new();
        let mut distinct = Vec::new();
        for nk in n {
            ops.push([0, 1, 2].map(|j| uniform_matrix(nk[j], m[j], &mut rng)));
            distinct.push([0, 1, 2].map(|j| gaussian_matrix(nk[j], 5, &mut rng)));
        }
        (
            CoupledModel { common, distinct },
            MeasurementModel::new(ops).unwrap(),
        )
    }

    #[test]
    fn generic_instance_passes_deterministic_check() {
        let w = Witness { eta: 1, xi: [0, 1, 2] };
        for seed in 0..5 {
            let (model, meas) = standard_instance(seed);
            let rep = check_deterministic(&model, &meas, w, DEFAULT_RANK_TOL).unwrap();
            assert!(rep.a1 && rep.a2 && rep.a3, "seed {seed}: {rep:?}");
            assert_eq!(rep.separation.len(), 2);
        }
    }

    #[test]
    fn proportional_distinct_column_breaks_separation() {
        let (mut model, meas) = standard_instance(11);
        let w = Witness { eta: 1, xi: [0, 1, 2] };
        let col = (meas.op(1, 0) * model.common.factor(0)).column(2) * 3.0;
        model.distinct[1][0].set_column(0, &col);
        let rep = check_deterministic(&model, &meas, w, DEFAULT_RANK_TOL).unwrap();
        assert!(!rep.separation.iter().find(|s| s.mode == 0).unwrap().holds);
        assert!(!rep.a3);
        assert!(!rep.overall);
    }

    #[test]
    fn zero_column_breaks_full_uniqueness() {
        let (mut model, meas) = standard_instance(12);
        let w = Witness { eta: 1, xi: [0, 1, 2] };
        model.distinct[1][2].column_mut(4).fill(0.0);
        let rep = check_deterministic(&model, &meas, w, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rep.full.kruskal_ranks[2], 0);
        assert!(!rep.a1);
        assert!(rep.modes[2].holds);
    }

    #[test]
    fn wide_factors_are_rejected() {
        let mut rng = rng_from_seed(1);
        let common = CpdFactors::new(
            gaussian_matrix(30, 15, &mut rng),
            gaussian_matrix(30, 15, &mut rng),
            gaussian_matrix(30, 15, &mut rng),
        )
        .unwrap();
        let model = CoupledModel {
            common,
            distinct: vec![[0, 1, 2].map(|_| gaussian_matrix(30, 6, &mut rng)); 2],
        };
        let meas = MeasurementModel::identity(2, [30, 30, 30]);
        let w = Witness { eta: 0, xi: [1, 1, 1] };
        assert!(matches!(
            check_deterministic(&model, &meas, w, DEFAULT_RANK_TOL),
            Err(Error::TooManyColumns { .. })
        ));
    }
}
