use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn perstd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perstd")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL_SOLVER: &str = "[solver]\nrestarts = 2\nmax_iters = 100\ncpd_max_iters = 100\n";

#[test]
fn check_uniqueness_standard() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.toml", "output_dir = \"out\"\n");
    let o = perstd(&["check-uniqueness", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("out/uniqueness.txt")).unwrap();
    assert!(text.contains("witness: eta = 2, xi = (1, 2, 3)"), "{text}");
    assert!(text.contains("Y1  dims [10, 5, 7]  full bound 19 >= 22: false  -> uni-mode unique in mode 1"), "{text}");
    assert!(text.contains("Y2  dims [5, 12, 7]  full bound 22 >= 22: true  -> fully unique"), "{text}");
    assert!(text.contains("-> uni-mode unique in mode 3"), "{text}");
    assert!(text.contains("overall: true"));
}

#[test]
fn check_uniqueness_fails_for_rank_seven() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "u.toml",
        "output_dir = \"out\"\n[problem]\ncommon_dims = [7, 11, 9]\n\
         dataset_dims = [[10, 5, 7], [5, 12, 7], [5, 7, 10]]\nrank = 7\ndistinct_ranks = [5, 5, 5]\n",
    );
    let o = perstd(&["check-uniqueness", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall: false"));
}

#[test]
fn malformed_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[problem]\ncommon_dims = [7, 11]\n");
    let o = perstd(&["check-uniqueness", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    let o = perstd(&["check-uniqueness", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cfg.toml"));
}

#[test]
fn generate_then_decompose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.toml", &format!("seed = 3\noutput_dir = \"data\"\n[generate]\nsnr_db = inf\n{SMALL_SOLVER}"));
    let o = perstd(&["generate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let data = dir.path().join("data");
    for f in ["y1.t3", "y3.t3", "p2_3.m", "common.t3", "decompose.toml", "manifest.json"] {
        assert!(data.join(f).exists(), "{f} missing");
    }
    let dec = data.join("decompose.toml").display().to_string();
    let o = perstd(&["decompose", "--config", &dec, "--restarts", "3"]);
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 3, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(data.join("decomposed/summary.txt")).unwrap();
    let line = summary.lines().find(|l| l.starts_with("NRMSE")).expect("NRMSE reported");
    let value: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(value.is_finite());
    for f in ["common.t3", "distinct1.t3", "common_factor1.m", "trace.csv"] {
        assert!(data.join("decomposed").join(f).exists(), "{f} missing");
    }
}

#[test]
fn missing_operator_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.toml", "output_dir = \"data\"\n");
    assert_eq!(perstd(&["generate", "--config", &cfg]).status.code(), Some(0));
    let data = dir.path().join("data");
    fs::remove_file(data.join("p2_1.m")).unwrap();
    let dec = data.join("decompose.toml").display().to_string();
    let o = perstd(&["decompose", "--config", &dec]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p2_1.m"));
}

#[test]
fn decompose_manifest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.toml", &format!("output_dir = \"data\"\n{SMALL_SOLVER}"));
    assert_eq!(perstd(&["generate", "--config", &cfg]).status.code(), Some(0));
    let dec = dir.path().join("data/decompose.toml").display().to_string();
    let mut manifests = Vec::new();
    for out in ["a", "b"] {
        let out = dir.path().join(out).display().to_string();
        perstd(&["decompose", "--config", &dec, "--seed", "11", "--out", &out]);
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(Path::new(&out).join("manifest.json")).unwrap()).unwrap();
        manifests.push(m["outputs"].clone());
    }
    assert_eq!(manifests[0], manifests[1]);
    assert!(manifests[0].as_array().unwrap().len() >= 5);
}

#[test]
fn synth_snr_writes_one_row_per_snr_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        &format!("mode = \"synth-snr\"\nruns = 1\noutput_dir = \"out\"\n[synth_snr]\nsnr_db = [20, 30, 40, 50, 60]\n{SMALL_SOLVER}"),
    );
    let o = perstd(&["synth-snr", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/nrmse.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "snr_db,method,mean_nrmse,std_nrmse");
    assert_eq!(lines.len(), 16);
    assert!(lines[1].starts_with("20.0,semialg,"));
}

#[test]
fn ablation_tables_have_fixed_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.toml",
        &format!(
            "runs = 1\noutput_dir = \"out\"\n[ablate_alpha]\nalpha = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]\n\
             [ablate_rank]\nranks = [4, 5]\ndistinct_ranks = [5]\n{SMALL_SOLVER}"
        ),
    );
    assert_eq!(perstd(&["ablate-alpha", "--config", &cfg]).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/nrmse.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("alpha,mean_nrmse,std_nrmse"));
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(perstd(&["ablate-rank", "--config", &cfg]).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/nrmse.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("rank,distinct_rank,mean_nrmse,std_nrmse"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn fuse_reports_cloud_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.toml",
        &format!("runs = 1\noutput_dir = \"out\"\n[fuse]\ncloud_cover = [0.0, 0.05]\nmax_iters = 5\n{SMALL_SOLVER}"),
    );
    let o = perstd(&["fuse", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/fusion.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("cloud_cover,run,cc,cp,nrmse_personalized,nrmse_baseline"));
    let row: Vec<f64> = lines.nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[2] - 0.05).abs() < 1e-3);
    assert!(row[3] >= row[2] * 0.5);
}

#[test]
fn sample_config_is_valid() {
    use perstd_cli::{ExperimentConfig, Mode};
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/standard.toml");
    let cfg = ExperimentConfig::load(&p).unwrap();
    for m in [Mode::SynthSnr, Mode::AblateAlpha, Mode::AblateRank, Mode::Fuse, Mode::CheckUniqueness, Mode::Generate] {
        cfg.validate(m).unwrap();
    }
    assert!(cfg.validate(Mode::Decompose).is_err());
    let w = cfg.problem.witness().unwrap().unwrap();
    assert_eq!((w.eta, w.xi), (1, [0, 1, 2]));
}
