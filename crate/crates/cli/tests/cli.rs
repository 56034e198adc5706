use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nibm_cli::read_csv;
use nibm_cli::records::*;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn nibm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nibm")).args(args).output().expect("binary runs")
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nibm(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const TWO_GROUPS_HOT: &str = r#"
[problem]
a = [1.0, -1.0]
b = [1.0, -1.0]
t = 0.5
temperature = 10.0

[transition]
rows = [["1/3", "0"], ["1/3", "1/3"]]

[solver]
cells = 128
"#;

#[test]
fn validate_reports_the_tree() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("validate", &config("mixed.toml"), dir.path(), &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("5 edges"));
    assert!(text.contains("leaf-peel order: b1 a1 b2 b3 a2 b4"));
    assert!(text.contains("smallest eigenvalue"));
}

#[test]
fn validate_rejects_bad_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let diagonal = write_config(
        dir.path(),
        "diag.toml",
        "[problem]\na = [1.0, -1.0]\nb = [1.0, -1.0]\nt = 0.5\ntemperature = 1.0\n[transition]\nrows = [[\"1/2\", \"0\"], [\"0\", \"1/2\"]]\n",
    );
    let o = run("validate", &diagonal, dir.path(), &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a connected right-down path"));
    let empty = write_config(dir.path(), "empty.toml", "[problem]\na = [0.0]\nb = [0.0]\nt = 0.5\ntemperature = 1.0\n[transition]\nrows = []\n");
    assert_eq!(code(&run("validate", &empty, dir.path(), &[])), 2);
}

#[test]
fn configuration_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(
        dir.path(),
        "unknown.toml",
        "[problem]\na = [0.0]\nb = [0.0]\nt = 0.5\ntemperature = 1.0\nbogus = 1\n[transition]\nrows = [[\"1\"]]\n",
    );
    assert_eq!(code(&run("validate", &unknown, dir.path(), &[])), 1);
    assert_eq!(code(&nibm(&["validate"])), 1);
    assert_eq!(code(&nibm(&["--help"])), 0);
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&run("validate", &missing, dir.path(), &[])), 1);
}

#[test]
fn semicircle_solve_writes_one_support() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", &config("semicircle.toml"), dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let supports: Vec<SupportRow> = read_csv(&dir.path().join("supports.csv")).unwrap();
    assert_eq!(supports.len(), 1);
    assert!((supports[0].alpha + 1.0).abs() < 1e-6 && (supports[0].beta - 1.0).abs() < 1e-6);
    let density: Vec<DensityPoint> = read_csv(&dir.path().join("density.csv")).unwrap();
    let mid = density.iter().min_by(|a, b| a.x.abs().total_cmp(&b.x.abs())).unwrap();
    assert!((mid.density - 2.0 / std::f64::consts::PI).abs() < 1e-3);
    let el: Vec<ElRow> = read_csv(&dir.path().join("el_residual.csv")).unwrap();
    assert!(el[0].scaled_on_support < 1e-4);
    let exps: Vec<ExponentRow> = read_csv(&dir.path().join("edge_exponents.csv")).unwrap();
    assert!(exps.iter().all(|e| (e.exponent - 0.5).abs() < 0.05));

    let o = run("compare", &config("semicircle.toml"), dir.path(), &[]);
    assert_eq!(code(&o), 0);
    let l1: Vec<L1Row> = read_csv(&dir.path().join("l1.csv")).unwrap();
    assert_eq!(l1.iter().map(|r| r.n).collect::<Vec<_>>(), vec![4, 8, 16]);
    assert!(l1.windows(2).all(|w| w[1].l1 < w[0].l1));
}

#[test]
fn two_group_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("two_by_two.toml");
    assert_eq!(code(&run("solve", &cfg, dir.path(), &[])), 0);
    let s: Vec<SupportRow> = read_csv(&dir.path().join("supports.csv")).unwrap();
    assert_eq!(s.len(), 3);
    assert!(s.windows(2).all(|w| w[1].beta < w[0].alpha));

    let o = run("spectral", &cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let contours: Vec<ContourRow> = read_csv(&dir.path().join("contours.csv")).unwrap();
    assert_eq!(contours.len(), 3 * 4);
    assert!(contours.iter().all(|c| c.pass));
    let checks: Vec<CheckRow> = read_csv(&dir.path().join("identities.csv")).unwrap();
    assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    let lens: Vec<LensRow> = read_csv(&dir.path().join("lens.csv")).unwrap();
    assert_eq!(lens.len(), 2);
    assert!(lens.iter().all(|l| l.feasible));
    let signs: Vec<SignRow<f64>> = read_csv(&dir.path().join("lens_1.csv")).unwrap();
    assert_eq!(signs.len(), 600 * 400);
    let xi: Vec<SheetRow<f64>> = read_csv(&dir.path().join("xi_boundary.csv")).unwrap();
    assert!(xi.iter().all(|r| (1..=4).contains(&r.sheet)));

    assert_eq!(code(&run("compare", &cfg, dir.path(), &[])), 0);
    let l1: Vec<L1Row> = read_csv(&dir.path().join("l1.csv")).unwrap();
    assert!(l1.windows(2).all(|w| w[1].l1 < w[0].l1));

    assert_eq!(code(&run("kernel", &cfg, dir.path(), &[])), 0);
    let k: Vec<DensityRow<f64>> = read_csv(&dir.path().join("kernel.csv")).unwrap();
    assert_eq!(k.len(), 801);
    let h = k[1].x - k[0].x;
    let mass: f64 = k.iter().map(|r| r.kxx_over_n * h).sum();
    assert!((mass - 1.0).abs() < 1e-3);
}

#[test]
fn large_temperature_flags_touching_supports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hot.toml", TWO_GROUPS_HOT);
    let o = run("solve", &cfg, dir.path(), &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let s: Vec<SupportRow> = read_csv(&dir.path().join("supports.csv")).unwrap();
    assert_eq!(s.len(), 3);
}

#[test]
fn prerequisites_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("two_by_two.toml");
    assert_eq!(code(&run("spectral", &cfg, dir.path(), &[])), 5);
    assert_eq!(code(&run("compare", &cfg, dir.path(), &[])), 5);
    assert_eq!(code(&run("kernel", &config("mixed.toml"), dir.path(), &[])), 5);
    assert_eq!(code(&run("kernel", &config("mixed.toml"), dir.path(), &["--n", "30"])), 8);
    assert_eq!(code(&run("sample", &config("semicircle.toml"), dir.path(), &["--n", "65"])), 8);
}

#[test]
fn sampled_paths_have_the_contracted_shape_and_reproduce() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("two_by_two.toml");
    assert_eq!(code(&run("sample", &cfg, a.path(), &[])), 0);
    assert_eq!(code(&run("sample", &cfg, b.path(), &[])), 0);
    let rows: Vec<PathRow<f64>> = read_csv(&a.path().join("paths.csv")).unwrap();
    assert_eq!(rows.len(), 6 * 257);
    for id in 0..6 {
        assert_eq!(rows.iter().filter(|r| r.path_id == id).count(), 257);
    }
    let stats: Vec<SamplerStats> = read_csv(&a.path().join("sampler_stats.csv")).unwrap();
    assert_eq!((stats[0].accepted, stats[0].rejected, stats[0].seed), (1, 0, 7));
    for f in ["paths.csv", "sampler_stats.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
    assert_eq!(code(&run("sample", &cfg, b.path(), &["--seed", "8"])), 0);
    assert_ne!(std::fs::read(a.path().join("paths.csv")).unwrap(), std::fs::read(b.path().join("paths.csv")).unwrap());
}

#[test]
fn solve_outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("semicircle.toml");
    for d in [&a, &b] {
        assert_eq!(code(&run("solve", &cfg, d.path(), &["--grid", "256"])), 0);
        assert_eq!(code(&run("kernel", &cfg, d.path(), &[])), 0);
    }
    for f in ["density.csv", "supports.csv", "el_residual.csv", "edge_exponents.csv", "solution.json", "kernel.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
