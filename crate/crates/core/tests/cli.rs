use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use cma::Checkpoint;

fn cma(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cma")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

struct Assets {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Assets {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let (code, err) = cma(&["init", "--seed", "4", "--out-dir", root.join("m").to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        // A few templates keep the neuron sweeps quick.
        let templates: Vec<&str> = cma::datasets::TEMPLATES[..3].to_vec();
        std::fs::write(root.join("m/few_templates.txt"), templates.join("\n") + "\n").unwrap();
        Self { _tmp: tmp, root }
    }

    fn p(&self, name: &str) -> String {
        self.root.join(name).to_str().unwrap().to_string()
    }

    fn professions(&self) -> Vec<String> {
        [
            "--checkpoint", &self.p("m/checkpoint.cma1"), "--vocab", &self.p("m/vocab.txt"),
            "--professions", &self.p("m/professions.tsv"), "--templates", &self.p("m/few_templates.txt"),
        ]
        .map(String::from)
        .to_vec()
    }

    fn winograd(&self) -> Vec<String> {
        ["--checkpoint", &self.p("m/checkpoint.cma1"), "--vocab", &self.p("m/vocab.txt"), "--corpus", &self.p("m/winograd.tsv")]
            .map(String::from)
            .to_vec()
    }
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn manifest_without_run_details(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("workers");
    obj.remove("wall_clock_seconds");
    v
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let a = Assets::new();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("te_prof", [vec!["total-effect".into(), "--filter-te".into()], a.professions()].concat()),
        ("te_wino", [vec!["total-effect".into(), "--filter-te".into(), "--metric".into(), "tv".into()], a.winograd()].concat()),
        ("med_neuron", [vec!["mediate".into(), "--mediator".into(), "neuron".into()], a.professions()].concat()),
        ("med_head", [vec!["mediate".into(), "--mediator".into(), "head".into()], a.winograd()].concat()),
        ("sel_greedy", [vec!["select".into(), "--mediator".into(), "head".into(), "--budget".into(), "3".into()], a.winograd()].concat()),
        (
            "sel_topk",
            [
                ["select", "--mediator", "neuron", "--method", "topk", "--block-size", "6", "--budget", "4"].map(String::from).to_vec(),
                a.professions(),
            ]
            .concat(),
        ),
        ("diag_dec", [vec!["diagnostics".into(), "--analysis".into(), "decomposition".into()], a.winograd()].concat()),
        (
            "diag_stripes",
            [["diagnostics", "--analysis", "stripes", "--seed", "9", "--trials", "20"].map(String::from).to_vec(), a.professions()].concat(),
        ),
        ("diag_corr", [vec!["diagnostics".into(), "--analysis".into(), "correlation".into()], a.winograd()].concat()),
    ];
    for (name, args) in runs {
        let mut outputs = Vec::new();
        for workers in ["1", "8"] {
            let out = a.p(&format!("{name}_{workers}"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--workers", workers, "--out-dir", &out]);
            let (code, err) = cma(&full);
            assert_eq!(code, 0, "{name}: {err}");
            outputs.push(read_dir(Path::new(&out)));
        }
        let (mut one, mut eight) = (outputs.remove(0), outputs.remove(0));
        let m1 = manifest_without_run_details(&one.remove("manifest.json").unwrap());
        let m8 = manifest_without_run_details(&eight.remove("manifest.json").unwrap());
        assert_eq!(m1, m8, "{name} manifest");
        assert!(!one.is_empty(), "{name} wrote nothing");
        assert_eq!(one.keys().collect::<Vec<_>>(), eight.keys().collect::<Vec<_>>(), "{name}");
        for (file, bytes) in &one {
            assert!(bytes == &eight[file], "{name}/{file} differs between 1 and 8 workers");
        }
    }
}

#[test]
fn expected_files_are_written() {
    let a = Assets::new();
    let out = a.p("med");
    let mut args = vec!["mediate", "--mediator", "head", "--out-dir", &out];
    let w = a.winograd();
    args.extend(w.iter().map(String::as_str));
    assert_eq!(cma(&args).0, 0);
    let files = read_dir(Path::new(&out));
    for f in ["effects.csv", "nie_heatmap.csv", "nde_heatmap.csv", "layer_sweep.csv", "synergy.csv", "per_example.csv", "manifest.json"] {
        assert!(files.contains_key(f), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&files["manifest.json"]).unwrap();
    assert_eq!(manifest["command"], "mediate");
    assert_eq!(manifest["checkpoint"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 6);
    let heat = String::from_utf8(files["nie_heatmap.csv"].clone()).unwrap();
    assert_eq!(heat.lines().next().unwrap(), "layer,0,1");
    assert_eq!(heat.lines().count(), 3);
}

#[test]
fn exit_codes() {
    let a = Assets::new();
    let out = a.p("x");
    let w = a.winograd();
    let p = a.professions();
    let with = |head: &[&str], rest: &[String]| {
        let mut v: Vec<&str> = head.to_vec();
        v.extend(rest.iter().map(String::as_str));
        v.extend(["--out-dir", &out]);
        cma(&v).0
    };
    assert_eq!(with(&["mediate", "--mediator", "neuron"], &w), 1);
    assert_eq!(with(&["mediate", "--mediator", "head"], &p), 1);
    assert_eq!(with(&["select", "--mediator", "neuron", "--method", "greedy"], &p), 1);
    assert_eq!(with(&["diagnostics", "--analysis", "stripes"], &p), 1);
    assert_eq!(with(&["mediate", "--mediator", "head", "--layers", "0"], &w), 1);
    assert_eq!(with(&["total-effect", "--workers", "0"], &w), 1);
    assert_eq!(with(&["total-effect", "--metric", "cosine"], &w), 1);
    assert_eq!(with(&["total-effect", "--mode", "neutral"], &w), 1);
    assert_eq!(with(&["total-effect"], &[]), 1);

    let bad = a.p("m/bad.tsv");
    std::fs::write(&bad, "nurse\t2.0\t0.1\tno\n").unwrap();
    let mut broken = p.clone();
    let i = broken.iter().position(|s| s == "--professions").unwrap();
    broken[i + 1] = bad;
    assert_eq!(with(&["total-effect"], &broken), 2);
}

#[test]
fn strict_mode_flags_underflow() {
    let a = Assets::new();
    // Blow up the embeddings so candidate probabilities underflow.
    let path = a.root.join("m/checkpoint.cma1");
    let ck = Checkpoint::load(&path).unwrap();
    let mut wte = ck.tensor("wte").clone();
    wte.data_mut().iter_mut().for_each(|v| *v *= 400.0);
    let hot = ck.with_tensor("wte", wte).unwrap();
    let hot_path = a.root.join("m/hot.cma1");
    hot.save(&hot_path).unwrap();
    let mut args: Vec<String> = ["total-effect", "--strict", "--out-dir", &a.p("strict")].map(String::from).to_vec();
    let mut p = a.professions();
    p[1] = hot_path.to_str().unwrap().to_string();
    args.extend(p);
    let (code, err) = cma(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, 3, "{err}");
    let te = std::fs::read_to_string(a.root.join("strict/total_effect.csv")).unwrap();
    assert!(te.contains(",true\n"));
    args.remove(1);
    args[2] = a.p("lenient");
    assert_eq!(cma(&args.iter().map(String::as_str).collect::<Vec<_>>()).0, 0);
}
