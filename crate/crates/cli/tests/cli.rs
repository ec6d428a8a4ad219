use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tracegt::io;

fn tracegt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracegt"))
        .args(args)
        .env_remove("TRACEGT_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(preset: &str, seed: u64, out: &Path) {
    let o = tracegt(&["generate", "--preset", preset, "--seed", &seed.to_string(), "--out", s(out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn report_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    io::Report::parse(&text).get(key).unwrap().parse().unwrap()
}

#[test]
fn generate_static_pan_writes_trace_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    generate("static-pan", 0, &out);
    assert!(out.join("trace.vptr").is_file());
    assert!(out.join("manifest.toml").is_file());
    assert!(out.join("oracle/flow/000000_000001.flo").is_file());
    assert!(out.join("oracle/flow/000000_000001_status.png").is_file());
    assert!(out.join("oracle/poses.txt").is_file());
}

#[test]
fn generate_missing_script_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let o = tracegt(&["generate", "--script", s(&dir.path().join("missing.toml")), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.toml"));
    assert!(!out.exists());
}

#[test]
fn generate_invalid_script_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.toml");
    fs::write(&script, "frames = \"many\"\n").unwrap();
    let o = tracegt(&["generate", "--script", s(&script), "--out", s(&dir.path().join("gen"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn generate_from_script_file() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("scene.toml");
    fs::write(&script, tracegt::scene::preset("occlusion", 0).unwrap().to_toml()).unwrap();
    let out = dir.path().join("gen");
    let o = tracegt(&["generate", "--script", s(&script), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(out.join("trace.vptr").is_file());
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    generate("city-block", 7, &dir.path().join("a"));
    generate("city-block", 7, &dir.path().join("b"));
    let (a, b) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn derive_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("city-block", 7, &gen);
    let trace = gen.join("trace.vptr");
    let mut trees = vec![];
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("der{threads}"));
        let o = tracegt(&["derive", "--trace", s(&trace), "--out", s(&out), "--threads", threads, "--export-vis"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        trees.push(tree(&out));
    }
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn derive_single_frame_has_no_flow() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("single-frame", 0, &gen);
    let out = dir.path().join("der");
    let o = tracegt(&["derive", "--trace", s(&gen.join("trace.vptr")), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    for f in ["instances/000000.png", "semantic/000000.png", "boundaries/000000.png", "boxes.txt", "tracks.txt", "poses.txt", "manifest.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read_dir(out.join("flow")).unwrap().count(), 0);
}

#[test]
fn derive_format_filter() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("occlusion", 0, &gen);
    let out = dir.path().join("der");
    let o = tracegt(&["derive", "--trace", s(&gen.join("trace.vptr")), "--out", s(&out), "--format", "txt"]);
    assert_eq!(code(&o), 0);
    assert!(out.join("tracks.txt").is_file());
    assert!(!out.join("flow").exists());
    assert!(!out.join("instances").exists());
}

#[test]
fn derive_corrupt_trace_reports_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.vptr");
    fs::write(&trace, b"NOPE and some more bytes").unwrap();
    let out = dir.path().join("der");
    let o = tracegt(&["derive", "--trace", s(&trace), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad magic"));
    assert!(!out.exists());
}

#[test]
fn derive_refuses_a_non_empty_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("single-frame", 0, &gen);
    let o = tracegt(&["derive", "--trace", s(&gen.join("trace.vptr")), "--out", s(&gen)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unwritable_output_is_an_io_error_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("single-frame", 0, &gen);
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = tracegt(&["derive", "--trace", s(&gen.join("trace.vptr")), "--out", s(&blocker.join("out"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn evaluate_ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("occlusion", 0, &gen);
    let oracle = gen.join("oracle");
    let results = dir.path().join("r.txt");
    let o = tracegt(&["evaluate", "flow", "--pred", s(&oracle), "--gt", s(&oracle), "--results", s(&results)]);
    assert_eq!(code(&o), 0);
    assert_eq!(report_value(&o, "wauc"), 100.0);
    let saved = io::Report::parse(&fs::read_to_string(&results).unwrap());
    assert_eq!(saved.get("wauc"), Some("100"));
    let o = tracegt(&["evaluate", "seg", "--pred", s(&oracle), "--gt", s(&oracle), "--results", s(&results)]);
    assert_eq!(code(&o), 0);
    assert_eq!(report_value(&o, "miou"), 1.0);
}

#[test]
fn evaluate_derived_against_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("city-block", 7, &gen);
    let der = dir.path().join("der");
    assert_eq!(code(&tracegt(&["derive", "--trace", s(&gen.join("trace.vptr")), "--out", s(&der)])), 0);
    let oracle = gen.join("oracle");
    for (task, key, want) in [("seg", "miou", 1.0), ("inst", "map", 1.0), ("flow", "wauc", 100.0)] {
        let o = tracegt(&["evaluate", task, "--pred", s(&der), "--gt", s(&oracle)]);
        assert_eq!(code(&o), 0);
        assert_eq!(report_value(&o, key), want, "{task}");
    }
    let o = tracegt(&["evaluate", "odom", "--pred", s(&der), "--gt", s(&oracle)]);
    assert_eq!(code(&o), 0);
    assert!(report_value(&o, "rotation_deg_per_unit") < 1e-3);
}

#[test]
fn evaluate_missing_prediction_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("occlusion", 0, &gen);
    let pred = dir.path().join("pred");
    fs::create_dir_all(pred.join("flow")).unwrap();
    let o = tracegt(&["evaluate", "flow", "--pred", s(&pred), "--gt", s(&gen.join("oracle"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("000000_000001.flo"));
}

fn perturbed_copy(oracle: &Path, to: &Path, sigma: f32) {
    fs::create_dir_all(to.join("flow")).unwrap();
    let normal = Normal::new(0.0f32, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for e in fs::read_dir(oracle.join("flow")).unwrap().flatten() {
        let p = e.path();
        if p.extension().is_some_and(|x| x == "flo") {
            let mut f = io::read_flo(&p).unwrap();
            for i in 0..f.len() {
                f.du[i] += normal.sample(&mut rng);
                f.dv[i] += normal.sample(&mut rng);
            }
            io::write_flo(&to.join("flow").join(p.file_name().unwrap()), &f).unwrap();
        }
    }
}

#[test]
fn noisier_flow_scores_lower() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("static-pan", 0, &gen);
    let oracle = gen.join("oracle");
    let mut scores = vec![];
    for (name, sigma) in [("half", 0.5), ("one", 1.0)] {
        let pred = dir.path().join(name);
        perturbed_copy(&oracle, &pred, sigma);
        let o = tracegt(&["evaluate", "flow", "--pred", s(&pred), "--gt", s(&oracle)]);
        assert_eq!(code(&o), 0);
        scores.push(report_value(&o, "wauc"));
    }
    assert!(scores[0] < 100.0);
    assert!(scores[1] < scores[0], "{scores:?}");
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    generate("single-frame", 0, &gen);
    let o = Command::new(env!("CARGO_BIN_EXE_tracegt"))
        .args(["derive", "--trace", s(&gen.join("trace.vptr")), "--out", s(&dir.path().join("der"))])
        .env("TRACEGT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_tracegt"))
        .args(["derive", "--trace", s(&gen.join("trace.vptr")), "--out", s(&dir.path().join("der2"))])
        .env("TRACEGT_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
