//! Command implementations. Each writes its results to the output
//! directory and returns the process exit code.

use std::fmt::Write as _;
use std::path::PathBuf;

use perstd_core::coupled_als::{coupled_als_multistart, coupled_als_semialg, AlsFit};
use perstd_core::datagen::{generate_synthetic, nrmse};
use perstd_core::model::MeasurementModel;
use perstd_core::semialg::{semialg_decompose, SemiAlgResult};
use perstd_core::uniqueness::{check_generic, ProblemDims, UniquenessReport};
use perstd_core::{io, Tensor3};
use serde::Serialize;

use crate::config::{DecomposeMethod, ExperimentConfig, Mode};
use crate::error::{CliError, CliResult};
use crate::experiments::{self, stats, Method, Trial};
use crate::output::OutputDir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_UNIQUE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub output_dir: PathBuf,
    pub summary: String,
}

pub fn run(mode: Mode, cfg: &ExperimentConfig) -> CliResult<Outcome> {
    cfg.validate(mode)?;
    match mode {
        Mode::SynthSnr => cmd_synth_snr(cfg),
        Mode::AblateAlpha => cmd_ablate_alpha(cfg),
        Mode::AblateRank => cmd_ablate_rank(cfg),
        Mode::Fuse => cmd_fuse(cfg),
        Mode::CheckUniqueness => cmd_check_uniqueness(cfg),
        Mode::Decompose => cmd_decompose(cfg),
        Mode::Generate => cmd_generate(cfg),
    }
}

fn finish(mut out: OutputDir, mode: Mode, cfg: &ExperimentConfig, summary: String, exit_code: i32) -> CliResult<Outcome> {
    out.write_text("summary.txt", &summary)?;
    out.finish(mode.name(), cfg)?;
    Ok(Outcome { exit_code, output_dir: cfg.output_path(), summary })
}

/// Columns shared by the per-trial tables, after the key columns.
struct TrialCols {
    run: usize,
    nrmse: Option<f64>,
    converged: bool,
    error: String,
}

impl TrialCols {
    fn new(run: usize, t: &Trial) -> Self {
        Self {
            run,
            nrmse: t.nrmse,
            converged: t.converged,
            error: t.error.clone().unwrap_or_default(),
        }
    }
}

fn failure_note(s: &experiments::Stats) -> String {
    if s.failed > 0 {
        format!("  ({} failed)", s.failed)
    } else {
        String::new()
    }
}

#[derive(Serialize)]
struct SnrRow {
    snr_db: f64,
    method: &'static str,
    mean_nrmse: f64,
    std_nrmse: f64,
}

#[derive(Serialize)]
struct SnrTrialRow {
    snr_db: f64,
    method: &'static str,
    run: usize,
    nrmse: Option<f64>,
    converged: bool,
    error: String,
}

pub fn cmd_synth_snr(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let trials = experiments::run_synth_snr(cfg, &Method::ALL)?;
    let mut out = OutputDir::create(&cfg.output_path())?;
    let mut rows = Vec::new();
    let mut per_trial = Vec::new();
    let mut summary = format!("NRMSE of the common tensor, mean over {} runs\n", cfg.runs);
    for &snr in &cfg.synth_snr.snr_db {
        for m in Method::ALL {
            let ts: Vec<&Trial> = trials
                .iter()
                .filter(|t| t.snr_db == snr)
                .flat_map(|t| t.results.iter().filter(|(mm, _)| *mm == m).map(|(_, r)| r))
                .collect();
            let owned: Vec<Trial> = ts.iter().map(|t| (*t).clone()).collect();
            let s = stats(&owned);
            rows.push(SnrRow { snr_db: snr, method: m.name(), mean_nrmse: s.mean, std_nrmse: s.std });
            writeln!(summary, "{snr:>6} dB  {:<10} {:.4e} +- {:.2e}{}", m.name(), s.mean, s.std, failure_note(&s))
                .unwrap();
        }
    }
    for t in &trials {
        for (m, r) in &t.results {
            let c = TrialCols::new(t.run, r);
            per_trial.push(SnrTrialRow {
                snr_db: t.snr_db,
                method: m.name(),
                run: c.run,
                nrmse: c.nrmse,
                converged: c.converged,
                error: c.error,
            });
        }
    }
    out.write_csv("nrmse.csv", &rows)?;
    out.write_csv("trials.csv", &per_trial)?;
    finish(out, Mode::SynthSnr, cfg, summary, EXIT_OK)
}

#[derive(Serialize)]
struct AlphaRow {
    alpha: f64,
    mean_nrmse: f64,
    std_nrmse: f64,
}

#[derive(Serialize)]
struct AlphaTrialRow {
    alpha: f64,
    run: usize,
    nrmse: Option<f64>,
    converged: bool,
    error: String,
}

pub fn cmd_ablate_alpha(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let trials = experiments::run_ablate_alpha(cfg)?;
    let mut out = OutputDir::create(&cfg.output_path())?;
    let mut rows = Vec::new();
    let mut summary = format!(
        "Mean NRMSE against each dataset's blended common tensor, {} runs at {} dB\n",
        cfg.runs, cfg.ablate_alpha.snr_db
    );
    for &alpha in &cfg.ablate_alpha.alpha {
        let ts: Vec<Trial> = trials.iter().filter(|t| t.alpha == alpha).map(|t| t.trial.clone()).collect();
        let s = stats(&ts);
        rows.push(AlphaRow { alpha, mean_nrmse: s.mean, std_nrmse: s.std });
        writeln!(summary, "alpha {alpha:.2}  {:.4e} +- {:.2e}{}", s.mean, s.std, failure_note(&s)).unwrap();
    }
    let per_trial: Vec<_> = trials
        .iter()
        .map(|t| {
            let c = TrialCols::new(t.run, &t.trial);
            AlphaTrialRow { alpha: t.alpha, run: c.run, nrmse: c.nrmse, converged: c.converged, error: c.error }
        })
        .collect();
    out.write_csv("nrmse.csv", &rows)?;
    out.write_csv("trials.csv", &per_trial)?;
    finish(out, Mode::AblateAlpha, cfg, summary, EXIT_OK)
}

#[derive(Serialize)]
struct RankRow {
    rank: usize,
    distinct_rank: usize,
    mean_nrmse: f64,
    std_nrmse: f64,
}

#[derive(Serialize)]
struct RankTrialRow {
    rank: usize,
    distinct_rank: usize,
    run: usize,
    nrmse: Option<f64>,
    converged: bool,
    error: String,
}

pub fn cmd_ablate_rank(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let trials = experiments::run_ablate_rank(cfg)?;
    let mut out = OutputDir::create(&cfg.output_path())?;
    let a = &cfg.ablate_rank;
    let mut rows = Vec::new();
    let mut summary = format!("Mean NRMSE over {} runs at {} dB (rows R, columns L)\n      ", cfg.runs, a.snr_db);
    for l in &a.distinct_ranks {
        write!(summary, "{:>11}", format!("L={l}")).unwrap();
    }
    summary.push('\n');
    for &r in &a.ranks {
        write!(summary, "R={r:<4}").unwrap();
        for &l in &a.distinct_ranks {
            let ts: Vec<Trial> = trials
                .iter()
                .filter(|t| t.rank == r && t.distinct_rank == l)
                .map(|t| t.trial.clone())
                .collect();
            let s = stats(&ts);
            rows.push(RankRow { rank: r, distinct_rank: l, mean_nrmse: s.mean, std_nrmse: s.std });
            write!(summary, "{:>11.4e}", s.mean).unwrap();
        }
        summary.push('\n');
    }
    let per_trial: Vec<_> = trials
        .iter()
        .map(|t| {
            let c = TrialCols::new(t.run, &t.trial);
            RankTrialRow {
                rank: t.rank,
                distinct_rank: t.distinct_rank,
                run: c.run,
                nrmse: c.nrmse,
                converged: c.converged,
                error: c.error,
            }
        })
        .collect();
    out.write_csv("nrmse.csv", &rows)?;
    out.write_csv("trials.csv", &per_trial)?;
    finish(out, Mode::AblateRank, cfg, summary, EXIT_OK)
}

#[derive(Serialize)]
struct FuseRow {
    cloud_cover: f64,
    run: usize,
    cc: f64,
    cp: f64,
    nrmse_personalized: Option<f64>,
    nrmse_baseline: Option<f64>,
}

pub fn cmd_fuse(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let trials = experiments::run_fuse(cfg)?;
    let mut out = OutputDir::create(&cfg.output_path())?;
    let rows: Vec<FuseRow> = trials
        .iter()
        .map(|t| FuseRow {
            cloud_cover: t.target_cc,
            run: t.run,
            cc: t.cc,
            cp: t.cp,
            nrmse_personalized: t.personalized.nrmse,
            nrmse_baseline: t.baseline.nrmse,
        })
        .collect();
    let f = &cfg.fuse;
    let mut summary = format!(
        "Fusion of a {:?} image, R = {}, L = {} against L = 0, {} runs per cover level\n\
         target    CC%     CP%   personalized   baseline   wins\n",
        f.dims, f.rank, f.distinct_rank, cfg.runs
    );
    for &target in &f.cloud_cover {
        let ts: Vec<_> = trials.iter().filter(|t| t.target_cc == target).collect();
        let n = ts.len() as f64;
        let cc = ts.iter().map(|t| t.cc).sum::<f64>() / n;
        let cp = ts.iter().map(|t| t.cp).sum::<f64>() / n;
        let p = stats(&ts.iter().map(|t| t.personalized.clone()).collect::<Vec<_>>());
        let b = stats(&ts.iter().map(|t| t.baseline.clone()).collect::<Vec<_>>());
        let wins = ts
            .iter()
            .filter(|t| matches!((t.personalized.nrmse, t.baseline.nrmse), (Some(p), Some(b)) if p < b))
            .count();
        writeln!(
            summary,
            "{target:>6.3} {:>6.2} {:>7.2}   {:>12.4e} {:>10.4e}   {wins}/{}",
            100.0 * cc,
            100.0 * cp,
            p.mean,
            b.mean,
            ts.len()
        )
        .unwrap();
    }
    out.write_csv("fusion.csv", &rows)?;
    finish(out, Mode::Fuse, cfg, summary, EXIT_OK)
}

/// Text rendering of a generic uniqueness report with 1-based datasets.
pub fn format_uniqueness(dims: &ProblemDims, rep: &UniquenessReport) -> String {
    let mut s = String::new();
    writeln!(s, "common dims {:?}, R = {}, L = {:?}", dims.m, dims.r, dims.l).unwrap();
    for k in 0..dims.num_datasets() {
        let b = rep.full_bounds[k];
        let modes: Vec<String> = (0..3)
            .filter(|&j| rep.unimode_candidates[j].contains(&k))
            .map(|j| (j + 1).to_string())
            .collect();
        let kind = if b.holds() {
            "fully unique".to_string()
        } else if modes.is_empty() {
            "not unique".to_string()
        } else {
            format!("uni-mode unique in mode {}", modes.join(", "))
        };
        writeln!(s, "Y{}  dims {:?}  full bound {} >= {}: {}  -> {kind}", k + 1, dims.n[k], b.lhs, b.rhs, b.holds())
            .unwrap();
        for j in 0..3 {
            match rep.unimode_bounds[k][j] {
                Some(u) => writeln!(s, "    mode {} bound {} >= {}: {}", j + 1, u.lhs, u.rhs, u.holds()).unwrap(),
                None => writeln!(s, "    mode {} operator not full column rank", j + 1).unwrap(),
            }
        }
    }
    let one = |v: &[usize]| v.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join(", ");
    writeln!(s, "fully unique datasets: [{}]", one(&rep.eta_candidates)).unwrap();
    for j in 0..3 {
        writeln!(s, "mode {} unique datasets: [{}]", j + 1, one(&rep.unimode_candidates[j])).unwrap();
    }
    match rep.witness {
        Some(w) => writeln!(
            s,
            "witness: eta = {}, xi = ({}, {}, {})",
            w.eta + 1,
            w.xi[0] + 1,
            w.xi[1] + 1,
            w.xi[2] + 1
        )
        .unwrap(),
        None => writeln!(s, "witness: none").unwrap(),
    }
    writeln!(s, "overall: {}", rep.overall).unwrap();
    s
}

pub fn cmd_check_uniqueness(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let dims = cfg.problem.dims();
    let rep = check_generic(&dims)?;
    let text = format_uniqueness(&dims, &rep);
    let mut out = OutputDir::create(&cfg.output_path())?;
    out.write_text("uniqueness.txt", &text)?;
    let code = if rep.overall { EXIT_OK } else { EXIT_NOT_UNIQUE };
    finish(out, Mode::CheckUniqueness, cfg, text, code)
}

fn tensor_name(prefix: &str, k: usize) -> String {
    format!("{prefix}{}.t3", k + 1)
}

fn operator_name(k: usize, j: usize) -> String {
    format!("p{}_{}.m", k + 1, j + 1)
}

/// Synthetic data set written as files, together with a configuration that
/// decomposes it.
pub fn cmd_generate(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let d = generate_synthetic(&cfg.problem.synth(cfg.generate.snr_db, cfg.seed))?;
    let mut out = OutputDir::create(&cfg.output_path())?;
    let put_tensor = |out: &mut OutputDir, name: String, t: &Tensor3| -> CliResult<String> {
        io::write_tensor(out.path(&name), t)?;
        out.record(&name);
        Ok(name)
    };
    let k = d.y.len();
    let mut data = Vec::new();
    let mut operators = Vec::new();
    for kk in 0..k {
        data.push(put_tensor(&mut out, tensor_name("y", kk), &d.y[kk])?);
        put_tensor(&mut out, tensor_name("distinct", kk), &d.distinct[kk])?;
        let mut ops = Vec::new();
        for j in 0..3 {
            let name = operator_name(kk, j);
            io::write_matrix(out.path(&name), d.meas.op(kk, j))?;
            out.record(&name);
            ops.push(name);
        }
        operators.push(ops);
    }
    put_tensor(&mut out, "common.t3".into(), &d.common)?;

    let quote = |v: &[String]| v.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ");
    let mut dec = String::new();
    writeln!(dec, "mode = \"decompose\"\nseed = {}\noutput_dir = \"decomposed\"\n", cfg.seed).unwrap();
    writeln!(dec, "{}", toml::to_string(&TomlProblem { problem: &cfg.problem }).expect("serializes")).unwrap();
    writeln!(dec, "{}", toml::to_string(&TomlSolver { solver: &cfg.solver }).expect("serializes")).unwrap();
    writeln!(dec, "[decompose]\nmethod = \"als\"\ntruth = \"common.t3\"\ndata = [{}]", quote(&data)).unwrap();
    writeln!(
        dec,
        "operators = [{}]",
        operators.iter().map(|o| format!("[{}]", quote(o))).collect::<Vec<_>>().join(", ")
    )
    .unwrap();
    out.write_text("decompose.toml", &dec)?;

    let summary = format!(
        "wrote {k} datasets of dims {:?} at {} dB (seed {}) and decompose.toml\n",
        cfg.problem.dataset_dims, cfg.generate.snr_db, cfg.seed
    );
    finish(out, Mode::Generate, cfg, summary, EXIT_OK)
}

#[derive(Serialize)]
struct TomlProblem<'a> {
    problem: &'a crate::config::ProblemConfig,
}

#[derive(Serialize)]
struct TomlSolver<'a> {
    solver: &'a crate::config::SolverConfig,
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    objective: f64,
}

pub fn cmd_decompose(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let dc = cfg.decompose.as_ref().ok_or_else(|| CliError::Config("missing [decompose] section".into()))?;
    let y = dc.data.iter().map(|p| io::read_tensor(cfg.resolve(p))).collect::<perstd_core::Result<Vec<_>>>()?;
    let ops = dc
        .operators
        .iter()
        .map(|t| {
            Ok([
                io::read_matrix(cfg.resolve(&t[0]))?,
                io::read_matrix(cfg.resolve(&t[1]))?,
                io::read_matrix(cfg.resolve(&t[2]))?,
            ])
        })
        .collect::<perstd_core::Result<Vec<_>>>()?;
    let meas = MeasurementModel::new(ops)?;
    meas.check_data(&y)?;
    let (r, l) = (cfg.problem.rank, cfg.problem.distinct_ranks.clone());
    let spec = cfg.solver.coupling(y.len())?;
    let witness = || -> CliResult<_> {
        if let Some(w) = cfg.problem.witness()? {
            return Ok(w);
        }
        let dims = ProblemDims::from_measurements(&meas, r, l.clone(), perstd_core::numerics::DEFAULT_RANK_TOL)?;
        check_generic(&dims)?.witness.ok_or_else(|| {
            CliError::Config("no witness satisfies the uniqueness conditions; the semi-algebraic solver cannot run".into())
        })
    };

    let (common, distinct, fit): (Tensor3, Vec<Tensor3>, Option<AlsFit>) = match dc.method {
        DecomposeMethod::Als => {
            let fit = coupled_als_multistart(&y, &meas, r, &l, &spec, cfg.solver.restarts, cfg.seed, &cfg.solver.als())?;
            (fit.state.common_tensor(), (0..y.len()).map(|k| fit.state.distinct_tensor(k)).collect(), Some(fit))
        }
        DecomposeMethod::AlsSemialg => {
            let (fit, _) = coupled_als_semialg(&y, &meas, r, &l, &spec, witness()?, &cfg.solver.semialg(cfg.seed), &cfg.solver.als())?;
            (fit.state.common_tensor(), (0..y.len()).map(|k| fit.state.distinct_tensor(k)).collect(), Some(fit))
        }
        DecomposeMethod::Semialg => {
            let res: SemiAlgResult = semialg_decompose(&y, &meas, r, &l, witness()?, &cfg.solver.semialg(cfg.seed))?;
            (res.common.reconstruct(), res.distinct, None)
        }
    };

    let mut out = OutputDir::create(&cfg.output_path())?;
    io::write_tensor(out.path("common.t3"), &common)?;
    out.record("common.t3");
    for (k, d) in distinct.iter().enumerate() {
        let name = tensor_name("distinct", k);
        io::write_tensor(out.path(&name), d)?;
        out.record(&name);
    }
    let mut summary = format!("method {:?}, R = {r}, L = {l:?}\n", dc.method);
    let mut code = EXIT_OK;
    if let Some(fit) = &fit {
        for j in 0..3 {
            let name = format!("common_factor{}.m", j + 1);
            io::write_matrix(out.path(&name), &fit.state.c[j])?;
            out.record(&name);
        }
        let trace: Vec<TraceRow> =
            fit.trace.iter().enumerate().map(|(i, &objective)| TraceRow { iteration: i + 1, objective }).collect();
        out.write_csv("trace.csv", &trace)?;
        writeln!(
            summary,
            "objective {:.6e} after {} iterations (restart {}), converged: {}",
            fit.objective, fit.iterations, fit.restart, fit.converged
        )
        .unwrap();
        if !fit.converged {
            code = EXIT_NOT_CONVERGED;
        }
    }
    if let Some(p) = &dc.truth {
        let truth = io::read_tensor(cfg.resolve(p))?;
        writeln!(summary, "NRMSE against {}: {:.6e}", p.display(), nrmse(&common, &truth)?).unwrap();
    }
    finish(out, Mode::Decompose, cfg, summary, code)
}
