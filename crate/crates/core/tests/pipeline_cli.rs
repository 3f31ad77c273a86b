use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bayes_cfa::report::{read_inputs, render_report};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(extra: &str) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        for f in ["metabolic.csv", "models.txt"] {
            std::fs::copy(Path::new(DATA).join(f), dir.path().join(f)).unwrap();
        }
        let config = format!(
            r#"seed = 5
out_dir = "out"

[data]
path = "metabolic.csv"
log_transform = ["trig", "IR", "GB", "G2"]

[model]
factors = 2
zero_cells = [[3, 1], [5, 2]]
positive_cells = [[5, 1], [3, 2]]

[chain]
iterations = 1500
burn_in = 500

[compare]
models = "models.txt"
prior_draws = 20000
{extra}"#
        );
        std::fs::write(dir.path().join("config.toml"), config).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_bayes-cfa"))
            .arg("--config")
            .arg(self.path("config.toml"))
            .args(args)
            .env_remove("BAYES_CFA_OUT_DIR")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

const DIMENSION: &str = "\n[dimension]\nmax_factors = 2\nsplits = 2\nchain = { iterations = 1500, burn_in = 500 }\n";

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if path.is_dir() {
            for (k, v) in read_tree(&path) {
                out.insert(format!("{name}/{k}"), v);
            }
        } else {
            out.insert(name, std::fs::read(&path).unwrap());
        }
    }
    out
}

#[test]
fn all_matches_steps_run_in_sequence() {
    let fx = Fixture::new(DIMENSION);
    fx.ok(&["all", "--out-dir", fx.path("a").to_str().unwrap()]);
    let b = fx.path("b");
    for step in ["preprocess", "select-dim", "fit", "compare", "report"] {
        fx.ok(&[step, "--out-dir", b.to_str().unwrap()]);
    }
    let (ta, tb) = (read_tree(&fx.path("a")), read_tree(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(bytes == &tb[name], "{name} differs");
    }
    for f in ["summary.txt", "dimension.tsv", "loadings.tsv", "comparison.tsv", "reproduced.tsv", "residual.tsv", "provenance.txt"] {
        assert!(ta.contains_key(&format!("report/{f}")), "missing {f}");
    }
    let summary = String::from_utf8(ta["report/summary.txt"].clone()).unwrap();
    for section in ["Step 1", "Step 2", "Step 3", "Step 4", "Provenance"] {
        assert!(summary.contains(section), "{section}");
    }

    // re-rendering from the persisted inputs is byte-identical
    let inputs = read_inputs(&b.join("report")).unwrap();
    let again = render_report(&inputs).unwrap();
    for (name, body) in &again.files {
        assert_eq!(body.as_bytes(), &tb[&format!("report/{name}")][..], "{name}");
    }
    fx.ok(&["report", "--out-dir", b.to_str().unwrap()]);
    assert_eq!(read_tree(&b), tb);
}

#[test]
fn seed_determines_draws() {
    let fx = Fixture::new("");
    let dirs = ["s1", "s1b", "s2"].map(|d| fx.path(d));
    for (dir, seed) in dirs.iter().zip(["1", "1", "2"]) {
        let d = dir.to_str().unwrap();
        fx.ok(&["preprocess", "--out-dir", d]);
        fx.ok(&["fit", "--out-dir", d, "--seed", seed]);
    }
    let read = |d: &PathBuf| std::fs::read(d.join("draws.tsv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
}

#[test]
fn step_one_only_report() {
    let fx = Fixture::new(DIMENSION);
    fx.ok(&["preprocess"]);
    let table = fx.ok(&["select-dim", "--machine-output"]);
    assert!(table.starts_with("m\tlog_marginal\tpmp\tscreen\n"));
    assert_eq!(table.lines().count(), 3);
    let text = fx.ok(&["report"]);
    assert!(text.contains("Step 1") && !text.contains("Step 2") && !text.contains("Step 4"));
    assert!(fx.path("out/report/dimension.tsv").exists());
    assert!(!fx.path("out/report/comparison.tsv").exists());
}

#[test]
fn existence_bound_is_enforced() {
    let fx = Fixture::new("\n[dimension]\nmax_factors = 5\n");
    fx.ok(&["preprocess"]);
    let out = fx.run(&["select-dim"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("existence bound"));
}

#[test]
fn compare_needs_fit_and_valid_models() {
    let fx = Fixture::new("");
    fx.ok(&["preprocess"]);
    let out = fx.run(&["compare"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `fit` first"));

    fx.ok(&["fit"]);
    let table = fx.ok(&["compare"]);
    assert!(table.contains("M3"));
    let before = read_tree(&fx.path("out"));

    std::fs::write(fx.path("models.txt"), "[model bad]\nL[1,1] > > 0\n").unwrap();
    let out = fx.run(&["compare"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2, column 10"), "{err}");
    assert_eq!(read_tree(&fx.path("out")), before);
}

#[test]
fn errors_map_to_exit_codes() {
    let fx = Fixture::new("");
    // data error
    let mut csv = std::fs::read_to_string(fx.path("metabolic.csv")).unwrap();
    csv.push_str("27,0,1.3,2,5,6,130,80\n");
    std::fs::write(fx.path("metabolic.csv"), csv).unwrap();
    let out = fx.run(&["preprocess"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`trig`"));

    // schema error with field path
    let config = std::fs::read_to_string(fx.path("config.toml")).unwrap().replace("iterations = 1500", "iterations = \"many\"");
    std::fs::write(fx.path("config.toml"), config).unwrap();
    let out = fx.run(&["fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chain.iterations"));

    // missing config file
    let out = Command::new(env!("CARGO_BIN_EXE_bayes-cfa")).args(["--config", "/nonexistent.toml", "fit"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn out_dir_from_environment() {
    let fx = Fixture::new("");
    let target = fx.path("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_bayes-cfa"))
        .arg("--config")
        .arg(fx.path("config.toml"))
        .arg("preprocess")
        .env("BAYES_CFA_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("data.tsv").exists());
    assert!(!fx.path("out").exists());
}
