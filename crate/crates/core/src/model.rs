//! Measurement operators and the coupled common/distinct model.

use crate::error::{dim_err, Error, Result};
use crate::tensor::{cp_accumulate, CpdFactors, Matrix, Tensor3};

/// Per-dataset degradation matrices `P_{k,j}` (`N_{k,j} x M_j`), so that
/// dataset `k` observes `C x_1 P_{k,0} x_2 P_{k,1} x_3 P_{k,2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    ops: Vec<[Matrix; 3]>,
}

impl MeasurementModel {
    pub fn new(ops: Vec<[Matrix; 3]>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::InvalidArgument("measurement model needs at least one dataset".into()))?;
        let m = [first[0].ncols(), first[1].ncols(), first[2].ncols()];
        for (k, p) in ops.iter().enumerate() {
            for j in 0..3 {
                if p[j].ncols() != m[j] {
                    return dim_err(format!(
                        "P[{k}][{j}] has {} columns, expected common dimension {}",
                        p[j].ncols(),
                        m[j]
                    ));
                }
                if p[j].nrows() == 0 || p[j].ncols() == 0 {
                    return Err(Error::InvalidArgument(format!("P[{k}][{j}] is empty")));
                }
            }
        }
        Ok(Self { ops })
    }

    /// Identity operators for `k` datasets observing a common tensor of
    /// `dims` at full resolution.
    pub fn identity(k: usize, dims: [usize; 3]) -> Self {
        let p = [
            Matrix::identity(dims[0], dims[0]),
            Matrix::identity(dims[1], dims[1]),
            Matrix::identity(dims[2], dims[2]),
        ];
        Self { ops: vec![p; k] }
    }

    pub fn num_datasets(&self) -> usize {
        self.ops.len()
    }

    pub fn op(&self, k: usize, j: usize) -> &Matrix {
        &self.ops[k][j]
    }

    pub fn ops(&self, k: usize) -> [&Matrix; 3] {
        let p = &self.ops[k];
        [&p[0], &p[1], &p[2]]
    }

    pub fn common_dims(&self) -> [usize; 3] {
        let p = &self.ops[0];
        [p[0].ncols(), p[1].ncols(), p[2].ncols()]
    }

    pub fn dataset_dims(&self, k: usize) -> [usize; 3] {
        let p = &self.ops[k];
        [p[0].nrows(), p[1].nrows(), p[2].nrows()]
    }

    /// `P_k(t) = t x_1 P_{k,0} x_2 P_{k,1} x_3 P_{k,2}`.
    pub fn apply(&self, k: usize, t: &Tensor3) -> Result<Tensor3> {
        let p = &self.ops[k];
        t.multilinear_product(&p[0], &p[1], &p[2])
    }

    /// Factors of `P_k([[C1, C2, C3]])`, i.e. `[[P_k0 C1, P_k1 C2, P_k2 C3]]`.
    pub fn apply_factors(&self, k: usize, f: &CpdFactors) -> Result<CpdFactors> {
        f.map_factors(self.ops(k))
    }

    /// Checks that `y` holds one tensor per dataset with matching shapes.
    pub fn check_data(&self, y: &[Tensor3]) -> Result<()> {
        if y.len() != self.ops.len() {
            return dim_err(format!(
                "{} data tensors for {} measurement operators",
                y.len(),
                self.ops.len()
            ));
        }
        for (k, t) in y.iter().enumerate() {
            if t.dims() != self.dataset_dims(k) {
                return dim_err(format!(
                    "dataset {k} is {:?} but its operators produce {:?}",
                    t.dims(),
                    self.dataset_dims(k)
                ));
            }
        }
        Ok(())
    }
}

/// Explicit factors of the common tensor and of each distinct tensor.
/// Distinct factors may have zero columns (`L_k = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledModel {
    pub common: CpdFactors,
    pub distinct: Vec<[Matrix; 3]>,
}

impl CoupledModel {
    pub fn rank(&self) -> usize {
        self.common.rank()
    }

    pub fn distinct_rank(&self, k: usize) -> usize {
        self.distinct[k][0].ncols()
    }

    pub fn common_tensor(&self) -> Tensor3 {
        self.common.reconstruct()
    }

    pub fn distinct_tensor(&self, k: usize) -> Tensor3 {
        let d = &self.distinct[k];
        let mut t = Tensor3::zeros([d[0].nrows(), d[1].nrows(), d[2].nrows()]);
        cp_accumulate(&mut t, 1.0, &d[0], &d[1], &d[2]);
        t
    }

    /// Noiseless measurements `Y_k = P_k(C) + D_k`.
    pub fn measure(&self, meas: &MeasurementModel) -> Result<Vec<Tensor3>> {
        if self.distinct.len() != meas.num_datasets() {
            return dim_err(format!(
                "{} distinct components for {} datasets",
                self.distinct.len(),
                meas.num_datasets()
            ));
        }
        (0..meas.num_datasets())
            .map(|k| {
                let pc = meas.apply_factors(k, &self.common)?;
                let mut y = pc.reconstruct();
                let d = &self.distinct[k];
                if y.dims() != [d[0].nrows(), d[1].nrows(), d[2].nrows()] {
                    return dim_err(format!("distinct factors of dataset {k} do not match its dims"));
                }
                cp_accumulate(&mut y, 1.0, &d[0], &d[1], &d[2]);
                Ok(y)
            })
            .collect()
    }

    /// Stacked mode-`j` factor `[P_{k,j} C_j, D_{k,j}]` of dataset `k`.
    pub fn stacked_factor(&self, meas: &MeasurementModel, k: usize, j: usize) -> Matrix {
        let pc = meas.op(k, j) * self.common.factor(j);
        hstack(&pc, &self.distinct[k][j])
    }
}

pub(crate) fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, rng_from_seed};

    #[test]
    fn apply_matches_factor_mapping() {
        let mut rng = rng_from_seed(3);
        let c = CpdFactors::new(
            gaussian_matrix(3, 2, &mut rng),
            gaussian_matrix(4, 2, &mut rng),
            gaussian_matrix(5, 2, &mut rng),
        )
        .unwrap();
        let meas = MeasurementModel::new(vec![[
            gaussian_matrix(2, 3, &mut rng),
            gaussian_matrix(6, 4, &mut rng),
            gaussian_matrix(5, 5, &mut rng),
        ]])
        .unwrap();
        let lhs = meas.apply(0, &c.reconstruct()).unwrap();
        let rhs = meas.apply_factors(0, &c).unwrap().reconstruct();
        assert!(lhs.distance(&rhs).unwrap() < 1e-12);
        assert_eq!(meas.dataset_dims(0), [2, 6, 5]);
        assert_eq!(meas.common_dims(), [3, 4, 5]);
    }

    #[test]
    fn inconsistent_common_dims_are_rejected() {
        let a = [Matrix::zeros(2, 3), Matrix::zeros(2, 3), Matrix::zeros(2, 3)];
        let b = [Matrix::zeros(2, 4), Matrix::zeros(2, 3), Matrix::zeros(2, 3)];
        assert!(MeasurementModel::new(vec![a, b]).is_err());
        assert!(MeasurementModel::new(vec![]).is_err());
    }

    #[test]
    fn zero_distinct_rank_measures_common_part_only() {
        let mut rng = rng_from_seed(4);
        let common = CpdFactors::new(
            gaussian_matrix(3, 2, &mut rng),
            gaussian_matrix(3, 2, &mut rng),
            gaussian_matrix(3, 2, &mut rng),
        )
        .unwrap();
        let model = CoupledModel {
            common: common.clone(),
            distinct: vec![[Matrix::zeros(3, 0), Matrix::zeros(3, 0), Matrix::zeros(3, 0)]],
        };
        let y = model.measure(&MeasurementModel::identity(1, [3, 3, 3])).unwrap();
        assert!(y[0].distance(&common.reconstruct()).unwrap() < 1e-14);
        assert_eq!(model.distinct_tensor(0).norm(), 0.0);
    }
}
