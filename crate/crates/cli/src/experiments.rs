//! Monte Carlo experiments on synthetic data.
//!
//! Every trial derives its seeds from the configuration seed and the run
//! index, so results do not depend on scheduling. Runs share their ground
//! truth across the swept parameter (SNR, alpha, ranks, cloud cover).

use perstd_core::coupled_als::{coupled_als_fit, coupled_als_multistart, coupled_als_semialg, AlsState, CouplingSpec};
use perstd_core::datagen::{
    add_noise, cloud_metrics, fusion_operators, generate_blended, generate_cloud_map, generate_synthetic, mean_nrmse,
    nrmse, synthetic_hri, CloudConfig, SynthData,
};
use perstd_core::rng::{derive_seed, rng_from_seed};
use perstd_core::semialg::semialg_fusion;
use perstd_core::uniqueness::{check_generic, Witness};
use perstd_core::{io, Tensor3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

const SOLVER_STREAM: u64 = 1_000;
const HRI_STREAM: u64 = 10;
const CLOUD_STREAM: u64 = 100;
const NOISE_STREAM: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Semi-algebraic solution.
    Semialg,
    /// Coupled ALS initialized by the semi-algebraic solution.
    AlsInit1,
    /// Coupled ALS from random initializations.
    AlsInit2,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Semialg, Method::AlsInit1, Method::AlsInit2];

    pub fn name(self) -> &'static str {
        match self {
            Method::Semialg => "semialg",
            Method::AlsInit1 => "als-init1",
            Method::AlsInit2 => "als-init2",
        }
    }
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub nrmse: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

impl Trial {
    fn ok(nrmse: f64, converged: bool) -> Self {
        Self { nrmse: Some(nrmse), converged, error: None }
    }

    fn failed(e: impl ToString) -> Self {
        Self { nrmse: None, converged: false, error: Some(e.to_string()) }
    }
}

/// Mean and sample standard deviation over the successful trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub succeeded: usize,
    pub failed: usize,
}

pub fn stats(trials: &[Trial]) -> Stats {
    let v: Vec<f64> = trials.iter().filter_map(|t| t.nrmse).collect();
    let n = v.len();
    let mean = if n == 0 { f64::NAN } else { v.iter().sum::<f64>() / n as f64 };
    let std = if n < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Stats { mean, std, succeeded: n, failed: trials.len() - n }
}

fn data_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    derive_seed(cfg.seed, run as u64)
}

fn witness_for(cfg: &ExperimentConfig) -> CliResult<Option<Witness>> {
    if let Some(w) = cfg.problem.witness()? {
        return Ok(Some(w));
    }
    Ok(check_generic(&cfg.problem.dims())?.witness)
}

fn random_init_trial(
    cfg: &ExperimentConfig,
    d: &SynthData,
    spec: &CouplingSpec,
    r: usize,
    l: &[usize],
    seed: u64,
    truth: &dyn Fn(&Tensor3) -> perstd_core::Result<f64>,
) -> Trial {
    let fit = coupled_als_multistart(&d.y, &d.meas, r, l, spec, cfg.solver.restarts, seed, &cfg.solver.als());
    match fit.and_then(|f| Ok((truth(&f.state.common_tensor())?, f.converged))) {
        Ok((e, conv)) => Trial::ok(e, conv),
        Err(e) => Trial::failed(e),
    }
}

/// One trial of the SNR experiment: the requested methods on one data set.
#[derive(Debug, Clone)]
pub struct SnrTrial {
    pub snr_db: f64,
    pub run: usize,
    pub results: Vec<(Method, Trial)>,
}

pub fn run_synth_snr(cfg: &ExperimentConfig, methods: &[Method]) -> CliResult<Vec<SnrTrial>> {
    let spec = cfg.solver.coupling(cfg.problem.dataset_dims.len())?;
    let witness = witness_for(cfg)?;
    let jobs: Vec<(f64, usize)> = cfg
        .synth_snr
        .snr_db
        .iter()
        .flat_map(|&s| (0..cfg.runs).map(move |run| (s, run)))
        .collect();
    let (r, l) = (cfg.problem.rank, cfg.problem.distinct_ranks.clone());
    Ok(jobs
        .into_par_iter()
        .map(|(snr_db, run)| {
            let seed = data_seed(cfg, run);
            let solver_seed = derive_seed(seed, SOLVER_STREAM);
            let d = match generate_synthetic(&cfg.problem.synth(snr_db, seed)) {
                Ok(d) => d,
                Err(e) => {
                    let results = methods.iter().map(|&m| (m, Trial::failed(&e))).collect();
                    return SnrTrial { snr_db, run, results };
                }
            };
            let mut results = Vec::new();
            if methods.iter().any(|m| matches!(m, Method::Semialg | Method::AlsInit1)) {
                let out = witness
                    .ok_or_else(|| "no witness satisfies the generic uniqueness conditions".to_string())
                    .and_then(|w| {
                        coupled_als_semialg(
                            &d.y,
                            &d.meas,
                            r,
                            &l,
                            &spec,
                            w,
                            &cfg.solver.semialg(solver_seed),
                            &cfg.solver.als(),
                        )
                        .map_err(|e| e.to_string())
                    });
                for &m in methods {
                    let t = match (&out, m) {
                        (Ok((_, res)), Method::Semialg) => match nrmse(&res.common.reconstruct(), &d.common) {
                            Ok(e) => Trial::ok(e, true),
                            Err(e) => Trial::failed(e),
                        },
                        (Ok((fit, _)), Method::AlsInit1) => match nrmse(&fit.state.common_tensor(), &d.common) {
                            Ok(e) => Trial::ok(e, fit.converged),
                            Err(e) => Trial::failed(e),
                        },
                        (Err(e), Method::Semialg | Method::AlsInit1) => Trial::failed(e),
                        _ => continue,
                    };
                    results.push((m, t));
                }
            }
            if methods.contains(&Method::AlsInit2) {
                let t = random_init_trial(cfg, &d, &spec, r, &l, solver_seed, &|c| nrmse(c, &d.common));
                results.push((Method::AlsInit2, t));
            }
            results.sort_by_key(|(m, _)| methods.iter().position(|x| x == m));
            SnrTrial { snr_db, run, results }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct AlphaTrial {
    pub alpha: f64,
    pub run: usize,
    pub trial: Trial,
}

/// Random-init coupled ALS on data whose common part is blended with a
/// per-dataset tensor; error is the mean NRMSE against each blended tensor.
pub fn run_ablate_alpha(cfg: &ExperimentConfig) -> CliResult<Vec<AlphaTrial>> {
    let spec = cfg.solver.coupling(cfg.problem.dataset_dims.len())?;
    let a = &cfg.ablate_alpha;
    let jobs: Vec<(f64, usize)> = a.alpha.iter().flat_map(|&al| (0..cfg.runs).map(move |run| (al, run))).collect();
    let (r, l) = (cfg.problem.rank, cfg.problem.distinct_ranks.clone());
    Ok(jobs
        .into_par_iter()
        .map(|(alpha, run)| {
            let seed = data_seed(cfg, run);
            let trial = match generate_blended(&cfg.problem.synth(a.snr_db, seed), alpha) {
                Ok(d) => random_init_trial(cfg, &d, &spec, r, &l, derive_seed(seed, SOLVER_STREAM), &|c| {
                    mean_nrmse(c, &d.common_per_dataset)
                }),
                Err(e) => Trial::failed(e),
            };
            AlphaTrial { alpha, run, trial }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct RankTrial {
    pub rank: usize,
    pub distinct_rank: usize,
    pub run: usize,
    pub trial: Trial,
}

/// Random-init coupled ALS with misspecified ranks on data generated with
/// the `[problem]` ranks.
pub fn run_ablate_rank(cfg: &ExperimentConfig) -> CliResult<Vec<RankTrial>> {
    let k = cfg.problem.dataset_dims.len();
    let spec = cfg.solver.coupling(k)?;
    let a = &cfg.ablate_rank;
    let mut jobs = Vec::new();
    for &r in &a.ranks {
        for &l in &a.distinct_ranks {
            for run in 0..cfg.runs {
                jobs.push((r, l, run));
            }
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(r, l, run)| {
            let seed = data_seed(cfg, run);
            let trial = match generate_synthetic(&cfg.problem.synth(a.snr_db, seed)) {
                Ok(d) => random_init_trial(cfg, &d, &spec, r, &vec![l; k], derive_seed(seed, SOLVER_STREAM), &|c| {
                    nrmse(c, &d.common)
                }),
                Err(e) => Trial::failed(e),
            };
            RankTrial { rank: r, distinct_rank: l, run, trial }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct FuseTrial {
    pub target_cc: f64,
    pub run: usize,
    /// Realized cover metrics of the two cloud maps.
    pub cc: f64,
    pub cp: f64,
    pub personalized: Trial,
    pub baseline: Trial,
}

/// HSI/MSI fusion of two independently clouded copies of one image:
/// personalized model against the same solver with no distinct terms.
pub fn run_fuse(cfg: &ExperimentConfig) -> CliResult<Vec<FuseTrial>> {
    let f = &cfg.fuse;
    let meas = fusion_operators(f.dims, f.spatial_factor, f.msi_bands)?;
    let loaded = match &f.hri {
        Some(p) => {
            let t = io::read_tensor(cfg.resolve(p))?;
            if t.dims() != f.dims {
                return Err(CliError::Config(format!(
                    "[fuse] image is {:?} but dims is {:?}",
                    t.dims(),
                    f.dims
                )));
            }
            Some(t)
        }
        None => None,
    };
    let jobs: Vec<(f64, usize)> = f.cloud_cover.iter().flat_map(|&c| (0..cfg.runs).map(move |run| (c, run))).collect();
    jobs.into_par_iter()
        .map(|(target_cc, run)| {
            let seed = data_seed(cfg, run);
            let c = match &loaded {
                Some(t) => t.clone(),
                None => synthetic_hri(f.dims, f.hri_rank, derive_seed(seed, HRI_STREAM))?.reconstruct(),
            };
            let maps = (0..2)
                .map(|k| generate_cloud_map(f.dims[0], f.dims[1], target_cc, derive_seed(seed, CLOUD_STREAM + k)))
                .collect::<perstd_core::Result<Vec<_>>>()?;
            let (cc, cp) = cloud_metrics(&maps);
            let x = CloudConfig::flat(f.dims[2], f.cloud_reflectance, maps).apply(&c)?;
            let mut rng = rng_from_seed(derive_seed(seed, NOISE_STREAM));
            let y = (0..2)
                .map(|k| Ok(add_noise(&meas.apply(k, &x[k])?, f.snr_db, &mut rng)))
                .collect::<perstd_core::Result<Vec<_>>>()?;
            let solve = |l: usize| -> Trial {
                let mut semi = cfg.solver.semialg(derive_seed(seed, SOLVER_STREAM));
                semi.distinct_cpd = true;
                let out = semialg_fusion(&y, &meas, f.rank, &[l, l], 0, 1, &semi)
                    .and_then(|res| AlsState::from_semialg(&res, &meas))
                    .and_then(|init| {
                        let opts = perstd_core::coupled_als::AlsOptions {
                            max_iters: f.max_iters,
                            ..cfg.solver.als()
                        };
                        coupled_als_fit(&y, &meas, &CouplingSpec::full(2), init, &opts)
                    })
                    .and_then(|fit| Ok((nrmse(&fit.state.common_tensor(), &c)?, fit.converged)));
                match out {
                    Ok((e, conv)) => Trial::ok(e, conv),
                    Err(e) => Trial::failed(e),
                }
            };
            Ok(FuseTrial {
                target_cc,
                run,
                cc,
                cp,
                personalized: solve(f.distinct_rank),
                baseline: solve(0),
            })
        })
        .collect()
}
