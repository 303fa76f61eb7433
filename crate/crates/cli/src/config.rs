//! Experiment configuration files (TOML).
//!
//! Dataset numbers in configuration files are 1-based, matching the way
//! datasets are usually described (`Y1`, `Y2`, ...). They are converted to
//! the 0-based indices of the library here.

use std::path::{Path, PathBuf};

use perstd_core::coupled_als::{AlsOptions, CouplingSpec};
use perstd_core::cpd::CpdOptions;
use perstd_core::datagen::{OperatorDist, SynthConfig};
use perstd_core::semialg::SemiAlgOptions;
use perstd_core::uniqueness::{ProblemDims, Witness};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SynthSnr,
    AblateAlpha,
    AblateRank,
    Fuse,
    CheckUniqueness,
    Decompose,
    Generate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SynthSnr => "synth-snr",
            Mode::AblateAlpha => "ablate-alpha",
            Mode::AblateRank => "ablate-rank",
            Mode::Fuse => "fuse",
            Mode::CheckUniqueness => "check-uniqueness",
            Mode::Decompose => "decompose",
            Mode::Generate => "generate",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub synth_snr: SynthSnrConfig,
    #[serde(default)]
    pub ablate_alpha: AblateAlphaConfig,
    #[serde(default)]
    pub ablate_rank: AblateRankConfig,
    #[serde(default)]
    pub fuse: FuseConfig,
    #[serde(default)]
    pub generate: GenerateConfig,
    pub decompose: Option<DecomposeConfig>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_runs() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Uniform01,
    Gaussian,
}

impl From<OperatorKind> for OperatorDist {
    fn from(k: OperatorKind) -> Self {
        match k {
            OperatorKind::Uniform01 => OperatorDist::Uniform01,
            OperatorKind::Gaussian => OperatorDist::Gaussian,
        }
    }
}

/// 1-based witness datasets for the semi-algebraic solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessConfig {
    pub eta: usize,
    pub xi: [usize; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub common_dims: [usize; 3],
    pub dataset_dims: Vec<[usize; 3]>,
    pub rank: usize,
    pub distinct_ranks: Vec<usize>,
    #[serde(default = "default_operators")]
    pub operators: OperatorKind,
    /// Chosen automatically from the generic conditions when absent.
    pub witness: Option<WitnessConfig>,
}

fn default_operators() -> OperatorKind {
    OperatorKind::Uniform01
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let ex = SynthConfig::standard(f64::INFINITY, 0);
        Self {
            common_dims: ex.common_dims,
            dataset_dims: ex.dataset_dims,
            rank: ex.r,
            distinct_ranks: ex.l,
            operators: OperatorKind::Uniform01,
            witness: None,
        }
    }
}

impl ProblemConfig {
    pub fn synth(&self, snr_db: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            common_dims: self.common_dims,
            dataset_dims: self.dataset_dims.clone(),
            r: self.rank,
            l: self.distinct_ranks.clone(),
            snr_db,
            p_dist: self.operators.into(),
            seed,
        }
    }

    pub fn dims(&self) -> ProblemDims {
        ProblemDims::generic(
            self.common_dims,
            self.dataset_dims.clone(),
            self.rank,
            self.distinct_ranks.clone(),
        )
    }

    pub fn witness(&self) -> CliResult<Option<Witness>> {
        let Some(w) = self.witness else { return Ok(None) };
        let k = self.dataset_dims.len();
        let idx = |v: usize| {
            if v == 0 || v > k {
                Err(CliError::Config(format!("witness dataset {v} is outside 1..={k}")))
            } else {
                Ok(v - 1)
            }
        };
        Ok(Some(Witness {
            eta: idx(w.eta)?,
            xi: [idx(w.xi[0])?, idx(w.xi[1])?, idx(w.xi[2])?],
        }))
    }

    fn validate(&self) -> CliResult<()> {
        self.synth(f64::INFINITY, 0)
            .validate()
            .map_err(|e| CliError::Config(format!("[problem] {e}")))?;
        self.witness()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Random initializations of the ALS solver, also used for the CPDs
    /// inside the semi-algebraic solver.
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub cpd_max_iters: usize,
    pub cpd_tol: f64,
    /// 1-based datasets whose mode-`j` factor is tied to the common factor,
    /// one list per mode. All datasets when absent.
    pub coupling: Option<[Vec<usize>; 3]>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iters: 1000,
            tol: 1e-9,
            cpd_max_iters: 1000,
            cpd_tol: 1e-9,
            coupling: None,
        }
    }
}

impl SolverConfig {
    pub fn als(&self) -> AlsOptions {
        AlsOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            check_monotone: false,
        }
    }

    pub fn semialg(&self, seed: u64) -> SemiAlgOptions {
        let mut o = SemiAlgOptions::new(self.restarts, seed);
        o.cpd = CpdOptions { max_iters: self.cpd_max_iters, tol: self.cpd_tol, ..o.cpd };
        o
    }

    pub fn coupling(&self, datasets: usize) -> CliResult<CouplingSpec> {
        let spec = match &self.coupling {
            None => CouplingSpec::full(datasets),
            Some(lists) => {
                let mut gamma: [Vec<usize>; 3] = Default::default();
                for (j, list) in lists.iter().enumerate() {
                    for &k in list {
                        if k == 0 || k > datasets {
                            return Err(CliError::Config(format!(
                                "coupling for mode {} names dataset {k}, outside 1..={datasets}",
                                j + 1
                            )));
                        }
                        gamma[j].push(k - 1);
                    }
                }
                CouplingSpec { gamma }
            }
        };
        spec.validate(datasets).map_err(|e| CliError::Config(format!("[solver] {e}")))?;
        Ok(spec)
    }

    fn validate(&self) -> CliResult<()> {
        if self.restarts == 0 || self.max_iters == 0 || self.cpd_max_iters == 0 {
            return Err(CliError::Config("[solver] restarts and iteration limits must be positive".into()));
        }
        if !(self.tol > 0.0 && self.cpd_tol > 0.0) {
            return Err(CliError::Config("[solver] tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSnrConfig {
    /// `inf` gives noiseless data.
    pub snr_db: Vec<f64>,
}

impl Default for SynthSnrConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![20.0, 30.0, 40.0, 50.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateAlphaConfig {
    pub snr_db: f64,
    pub alpha: Vec<f64>,
}

impl Default for AblateAlphaConfig {
    fn default() -> Self {
        Self {
            snr_db: 30.0,
            alpha: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateRankConfig {
    pub snr_db: f64,
    pub ranks: Vec<usize>,
    /// Used for every dataset.
    pub distinct_ranks: Vec<usize>,
}

impl Default for AblateRankConfig {
    fn default() -> Self {
        Self {
            snr_db: 30.0,
            ranks: vec![3, 4, 5, 6, 7],
            distinct_ranks: vec![3, 4, 5, 6, 7],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuseConfig {
    /// Load the high-resolution image from a tensor file instead of
    /// synthesizing one per run.
    pub hri: Option<PathBuf>,
    pub dims: [usize; 3],
    pub hri_rank: usize,
    pub spatial_factor: usize,
    pub msi_bands: usize,
    pub cloud_cover: Vec<f64>,
    pub cloud_reflectance: f64,
    pub snr_db: f64,
    pub rank: usize,
    pub distinct_rank: usize,
    pub max_iters: usize,
}

impl Default for FuseConfig {
    fn default() -> Self {
        Self {
            hri: None,
            dims: [32, 32, 16],
            hri_rank: 4,
            spatial_factor: 4,
            msi_bands: 4,
            cloud_cover: vec![0.0, 0.02, 0.05, 0.1],
            cloud_reflectance: 0.7,
            snr_db: 30.0,
            rank: 4,
            distinct_rank: 2,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub snr_db: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { snr_db: 30.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecomposeMethod {
    /// Coupled ALS from random initializations.
    Als,
    /// Coupled ALS initialized by the semi-algebraic solution.
    AlsSemialg,
    Semialg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    #[serde(default = "default_method")]
    pub method: DecomposeMethod,
    /// One tensor file per dataset.
    pub data: Vec<PathBuf>,
    /// Three matrix files per dataset.
    pub operators: Vec<[PathBuf; 3]>,
    /// Optional ground-truth common tensor for reporting NRMSE.
    pub truth: Option<PathBuf>,
}

fn default_method() -> DecomposeMethod {
    DecomposeMethod::Als
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> CliResult<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Checks the sections used by `mode`.
    pub fn validate(&self, mode: Mode) -> CliResult<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(CliError::Config(format!(
                    "configuration is for `{}` but `{}` was requested",
                    m.name(),
                    mode.name()
                )));
            }
        }
        if self.runs == 0 {
            return Err(CliError::Config("runs must be at least 1".into()));
        }
        self.solver.validate()?;
        match mode {
            Mode::Fuse => self.validate_fuse(),
            _ => {
                self.problem.validate()?;
                self.solver.coupling(self.problem.dataset_dims.len())?;
                match mode {
                    Mode::SynthSnr if self.synth_snr.snr_db.is_empty() => {
                        Err(CliError::Config("[synth_snr] snr_db is empty".into()))
                    }
                    Mode::AblateAlpha if self.ablate_alpha.alpha.iter().any(|a| !(0.0..=1.0).contains(a)) => {
                        Err(CliError::Config("[ablate_alpha] alpha values must lie in [0, 1]".into()))
                    }
                    Mode::AblateRank
                        if self.ablate_rank.ranks.contains(&0) || self.ablate_rank.ranks.is_empty() =>
                    {
                        Err(CliError::Config("[ablate_rank] ranks must be positive and non-empty".into()))
                    }
                    Mode::Decompose => self.validate_decompose(),
                    _ => Ok(()),
                }
            }
        }
    }

    fn validate_fuse(&self) -> CliResult<()> {
        let f = &self.fuse;
        let bad = |msg: &str| Err(CliError::Config(format!("[fuse] {msg}")));
        if f.spatial_factor == 0 || f.dims[0] % f.spatial_factor != 0 || f.dims[1] % f.spatial_factor != 0 {
            return bad("spatial dimensions must be multiples of spatial_factor");
        }
        if f.msi_bands == 0 || f.dims[2] % f.msi_bands != 0 {
            return bad("the number of bands must be a multiple of msi_bands");
        }
        if f.rank == 0 || f.hri_rank == 0 || f.max_iters == 0 {
            return bad("ranks and max_iters must be positive");
        }
        if f.cloud_cover.is_empty() || f.cloud_cover.iter().any(|c| !(0.0..1.0).contains(c)) {
            return bad("cloud_cover values must lie in [0, 1)");
        }
        if let Some(p) = &f.hri {
            let p = self.resolve(p);
            if !p.exists() {
                return Err(CliError::Config(format!("[fuse] image file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn validate_decompose(&self) -> CliResult<()> {
        let d = self
            .decompose
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [decompose] section".into()))?;
        let k = self.problem.dataset_dims.len();
        if d.data.len() != k || d.operators.len() != k {
            return Err(CliError::Config(format!(
                "[decompose] needs {k} data files and {k} operator triples to match [problem]"
            )));
        }
        let files = d.data.iter().chain(d.operators.iter().flatten()).chain(d.truth.iter());
        for p in files {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(CliError::Config(format!("[decompose] file {} does not exist", full.display())));
            }
        }
        Ok(())
    }
}
