//! Synthetic data for the experiments: coupled low-rank data with noise,
//! blended common tensors, cloud contamination and image degradations.

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::model::{CoupledModel, MeasurementModel};
use crate::rng::{derive_seed, gaussian_matrix, gaussian_tensor, rng_from_seed, uniform_matrix, SeededRng};
use crate::tensor::{CpdFactors, Matrix, Tensor3};

/// Distribution of the entries of the measurement matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorDist {
    Gaussian,
    Uniform01,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub common_dims: [usize; 3],
    pub dataset_dims: Vec<[usize; 3]>,
    pub r: usize,
    pub l: Vec<usize>,
    /// Signal-to-noise ratio in dB; `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    pub p_dist: OperatorDist,
    pub seed: u64,
}

impl SynthConfig {
    /// The 7x11x9 three-dataset configuration used throughout the experiments.
    pub fn standard(snr_db: f64, seed: u64) -> Self {
        Self {
            common_dims: [7, 11, 9],
            dataset_dims: vec![[10, 5, 7], [5, 12, 7], [5, 7, 10]],
            r: 5,
            l: vec![5, 5, 5],
            snr_db,
            p_dist: OperatorDist::Uniform01,
            seed,
        }
    }

    pub fn num_datasets(&self) -> usize {
        self.dataset_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_dims.is_empty() {
            return Err(Error::InvalidArgument("at least one dataset is required".into()));
        }
        if self.l.len() != self.dataset_dims.len() {
            return dim_err(format!(
                "{} distinct ranks for {} datasets",
                self.l.len(),
                self.dataset_dims.len()
            ));
        }
        if self.r == 0 {
            return Err(Error::InvalidArgument("common rank must be at least 1".into()));
        }
        if self.common_dims.contains(&0) || self.dataset_dims.iter().any(|d| d.contains(&0)) {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("invalid SNR {}", self.snr_db)));
        }
        Ok(())
    }
}

/// A generated problem instance with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub model: CoupledModel,
    pub meas: MeasurementModel,
    /// Ground-truth common tensor.
    pub common: Tensor3,
    /// Common tensor seen by each dataset. Equal to `common` unless the
    /// data were generated with [`generate_blended`].
    pub common_per_dataset: Vec<Tensor3>,
    pub distinct: Vec<Tensor3>,
    /// Noisy measurements.
    pub y: Vec<Tensor3>,
}

const STREAM_COMMON: u64 = 0;
const STREAM_OPERATORS: u64 = 1;
const STREAM_DISTINCT: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_BLEND: u64 = 4;

/// Draws Gaussian factors, measurement matrices and noise from `cfg.seed`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    generate_blended(cfg, 0.0)
}

/// Like [`generate_synthetic`], but dataset `k` observes the blend
/// `(1 - alpha) C + alpha E_k` of the common tensor with an independent
/// tensor of the same rank.
pub fn generate_blended(cfg: &SynthConfig, alpha: f64) -> Result<SynthData> {
    cfg.validate()?;
    let k = cfg.num_datasets();
    let m = cfg.common_dims;

    let mut rng = rng_from_seed(derive_seed(cfg.seed, STREAM_COMMON));
    let common_f = random_factors(m, cfg.r, &mut rng)?;

    let mut rng = rng_from_seed(derive_seed(cfg.seed, STREAM_OPERATORS));
    let ops: Vec<[Matrix; 3]> = cfg
        .dataset_dims
        .iter()
        .map(|n| {
            [0, 1, 2].map(|j| match cfg.p_dist {
                OperatorDist::Gaussian => gaussian_matrix(n[j], m[j], &mut rng),
                OperatorDist::Uniform01 => uniform_matrix(n[j], m[j], &mut rng),
            })
        })
        .collect();
    let meas = MeasurementModel::new(ops)?;

    let mut rng = rng_from_seed(derive_seed(cfg.seed, STREAM_DISTINCT));
    let distinct_f: Vec<[Matrix; 3]> = cfg
        .dataset_dims
        .iter()
        .zip(&cfg.l)
        .map(|(n, &l)| [0, 1, 2].map(|j| gaussian_matrix(n[j], l, &mut rng)))
        .collect();

    let model = CoupledModel {
        common: common_f,
        distinct: distinct_f,
    };
    let common = model.common_tensor();
    let common_per_dataset = if alpha == 0.0 {
        vec![common.clone(); k]
    } else {
        blend_common(&model.common, alpha, k, derive_seed(cfg.seed, STREAM_BLEND))?
    };
    let distinct: Vec<Tensor3> = (0..k).map(|kk| model.distinct_tensor(kk)).collect();

    let mut y = Vec::with_capacity(k);
    for kk in 0..k {
        let clean = meas.apply(kk, &common_per_dataset[kk])?.add(&distinct[kk])?;
        let mut rng = rng_from_seed(derive_seed(derive_seed(cfg.seed, STREAM_NOISE), kk as u64));
        y.push(add_noise(&clean, cfg.snr_db, &mut rng));
    }

    Ok(SynthData {
        model,
        meas,
        common,
        common_per_dataset,
        distinct,
        y,
    })
}

fn random_factors(dims: [usize; 3], rank: usize, rng: &mut SeededRng) -> Result<CpdFactors> {
    CpdFactors::new(
        gaussian_matrix(dims[0], rank, rng),
        gaussian_matrix(dims[1], rank, rng),
        gaussian_matrix(dims[2], rank, rng),
    )
}

/// Adds white Gaussian noise scaled so that the realized energy ratio
/// `||signal||^2 / ||noise||^2` equals `snr_db` exactly.
pub fn add_noise(signal: &Tensor3, snr_db: f64, rng: &mut SeededRng) -> Tensor3 {
    if snr_db == f64::INFINITY || signal.norm_sq() == 0.0 {
        return signal.clone();
    }
    let noise = gaussian_tensor(signal.dims(), rng);
    let target = signal.norm_sq() / 10f64.powf(snr_db / 10.0);
    let scale = (target / noise.norm_sq()).sqrt();
    signal.add_scaled(scale, &noise).expect("same shape")
}

/// `10 log10(||signal||^2 / ||noisy - signal||^2)`.
pub fn realized_snr_db(signal: &Tensor3, noisy: &Tensor3) -> Result<f64> {
    let noise = noisy.distance(signal)?;
    Ok(10.0 * (signal.norm_sq() / (noise * noise)).log10())
}

/// `C_k = (1 - alpha) C + alpha E_k` for `k` independent Gaussian-factor
/// tensors `E_k` of the same rank and shape as `c`.
pub fn blend_common(c: &CpdFactors, alpha: f64, k: usize, seed: u64) -> Result<Vec<Tensor3>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} is outside [0, 1]")));
    }
    let ct = c.reconstruct();
    (0..k)
        .map(|kk| {
            let mut rng = rng_from_seed(derive_seed(seed, kk as u64));
            let e = random_factors(c.dims(), c.rank(), &mut rng)?.reconstruct();
            Ok(ct.scaled(1.0 - alpha).add_scaled(alpha, &e)?)
        })
        .collect()
}

/// `||estimate - truth|| / ||truth||`.
pub fn nrmse(estimate: &Tensor3, truth: &Tensor3) -> Result<f64> {
    let tn = truth.norm();
    if tn == 0.0 {
        return Err(Error::InvalidArgument("NRMSE is undefined for a zero reference".into()));
    }
    Ok(estimate.distance(truth)? / tn)
}

/// Average of `nrmse(estimate, truth_k)` over the per-dataset references.
pub fn mean_nrmse(estimate: &Tensor3, truths: &[Tensor3]) -> Result<f64> {
    if truths.is_empty() {
        return Err(Error::InvalidArgument("no reference tensors".into()));
    }
    let mut s = 0.0;
    for t in truths {
        s += nrmse(estimate, t)?;
    }
    Ok(s / truths.len() as f64)
}

/// Pixel value above which a pixel counts as cloud-corrupted.
pub const CLOUD_PRESENCE_THRESHOLD: f64 = 0.15;

/// Cloud spectrum and per-image cover maps.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudConfig {
    /// Cloud reflectance per band.
    pub spectrum: Vec<f64>,
    /// Cover map of each image, `rows x cols` with entries in `[0, 1]`.
    pub maps: Vec<Matrix>,
}

impl CloudConfig {
    pub fn flat(bands: usize, reflectance: f64, maps: Vec<Matrix>) -> Self {
        Self {
            spectrum: vec![reflectance; bands],
            maps,
        }
    }

    pub fn apply(&self, c: &Tensor3) -> Result<Vec<Tensor3>> {
        self.maps.iter().map(|s| apply_clouds(c, s, &self.spectrum)).collect()
    }
}

/// `X[x,y,b] = C[x,y,b] (1 - S[x,y]) + g[b] S[x,y]`.
pub fn apply_clouds(c: &Tensor3, s: &Matrix, g: &[f64]) -> Result<Tensor3> {
    let [n1, n2, n3] = c.dims();
    if s.nrows() != n1 || s.ncols() != n2 || g.len() != n3 {
        return dim_err(format!(
            "cloud map {}x{} and spectrum of {} bands do not fit a {n1}x{n2}x{n3} image",
            s.nrows(),
            s.ncols(),
            g.len()
        ));
    }
    if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("cloud cover values must lie in [0, 1]".into()));
    }
    if g.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("cloud spectrum must be nonnegative".into()));
    }
    Ok(Tensor3::from_fn([n1, n2, n3], |i, j, b| {
        let w = s[(i, j)];
        c.get(i, j, b) * (1.0 - w) + g[b] * w
    }))
}

/// Mean cover (CC) and fraction of pixels above the presence threshold
/// (CP), pooled over all maps.
pub fn cloud_metrics(maps: &[Matrix]) -> (f64, f64) {
    let total: usize = maps.iter().map(|s| s.len()).sum();
    if total == 0 {
        return (0.0, 0.0);
    }
    let cc: f64 = maps.iter().map(|s| s.sum()).sum();
    let cp = maps
        .iter()
        .flat_map(|s| s.iter())
        .filter(|&&v| v > CLOUD_PRESENCE_THRESHOLD)
        .count();
    (cc / total as f64, cp as f64 / total as f64)
}

/// Random cloud cover map with mean cover `target_cc`.
///
/// White noise is smoothed by repeated separable box filters and mapped
/// through a soft threshold `clamp((z - t) / width, 0, 1)`; the offset `t`
/// is found by bisection so that the mean cover matches the target.
pub fn generate_cloud_map(rows: usize, cols: usize, target_cc: f64, seed: u64) -> Result<Matrix> {
    if !(0.0..1.0).contains(&target_cc) {
        return Err(Error::InvalidArgument(format!("target cover {target_cc} is outside [0, 1)")));
    }
    if target_cc == 0.0 || rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(rows, cols));
    }
    let mut rng = rng_from_seed(seed);
    let mut z = Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>());
    let radius = (rows.min(cols) / 10).max(1);
    for _ in 0..3 {
        z = box_smooth(&z, radius);
    }
    let (lo, hi) = (z.min(), z.max());
    z.apply(|v| *v = (*v - lo) / (hi - lo).max(f64::MIN_POSITIVE));

    let width = 0.15;
    let cover = |t: f64| z.map(|v| ((v - t) / width).clamp(0.0, 1.0));
    let (mut a, mut b) = (-width, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if cover(mid).mean() > target_cc {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(cover(0.5 * (a + b)))
}

fn box_smooth(m: &Matrix, radius: usize) -> Matrix {
    let (rows, cols) = m.shape();
    let pass = |src: &Matrix, along_rows: bool| {
        Matrix::from_fn(rows, cols, |i, j| {
            let (c, n) = if along_rows { (i, rows) } else { (j, cols) };
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(n - 1);
            let s: f64 = (lo..=hi)
                .map(|t| if along_rows { src[(t, j)] } else { src[(i, t)] })
                .sum();
            s / (hi - lo + 1) as f64
        })
    };
    pass(&pass(m, true), false)
}

/// `n/factor x n` operator averaging non-overlapping blocks of `factor`
/// consecutive samples.
pub fn block_average(n: usize, factor: usize) -> Result<Matrix> {
    if factor == 0 || n % factor != 0 {
        return Err(Error::InvalidArgument(format!("{n} samples cannot be split into blocks of {factor}")));
    }
    let mut p = Matrix::zeros(n / factor, n);
    for i in 0..n / factor {
        for t in 0..factor {
            p[(i, i * factor + t)] = 1.0 / factor as f64;
        }
    }
    Ok(p)
}

/// Measurement operators of an HSI (spatially decimated) and an MSI
/// (spectrally averaged) observing a `dims` high-resolution image.
pub fn fusion_operators(dims: [usize; 3], spatial_factor: usize, msi_bands: usize) -> Result<MeasurementModel> {
    if msi_bands == 0 || dims[2] % msi_bands != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} bands cannot be averaged into {msi_bands} groups",
            dims[2]
        )));
    }
    let hsi = [
        block_average(dims[0], spatial_factor)?,
        block_average(dims[1], spatial_factor)?,
        Matrix::identity(dims[2], dims[2]),
    ];
    let msi = [
        Matrix::identity(dims[0], dims[0]),
        Matrix::identity(dims[1], dims[1]),
        block_average(dims[2], dims[2] / msi_bands)?,
    ];
    MeasurementModel::new(vec![hsi, msi])
}

/// Nonnegative image with smooth spatial abundance maps and smooth
/// spectra, of exact CP rank `rank`, scaled to a maximum of 0.5.
pub fn synthetic_hri(dims: [usize; 3], rank: usize, seed: u64) -> Result<CpdFactors> {
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let bumps = |n: usize, rng: &mut SeededRng| {
        let mut m = Matrix::zeros(n, rank);
        for r in 0..rank {
            let center = rng.random::<f64>() * n as f64;
            let width = (0.15 + 0.25 * rng.random::<f64>()) * n as f64;
            for i in 0..n {
                let d = (i as f64 - center) / width;
                m[(i, r)] = 0.1 + (-0.5 * d * d).exp();
            }
        }
        m
    };
    let a = bumps(dims[0], &mut rng);
    let b = bumps(dims[1], &mut rng);
    let c = bumps(dims[2], &mut rng);
    let mut f = CpdFactors::new(a, b, c)?;
    let peak = f.reconstruct().values().iter().cloned().fold(0.0, f64::max);
    *f.factor_mut(2) *= 0.5 / peak;
    Ok(f)
}
