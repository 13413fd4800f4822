use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use redcliff::checkpoint::{load_checkpoint, save_checkpoint};
use redcliff::commands::{combine, eval, gen_synth, render, report, train};
use redcliff::config::RunConfigFile;
use redcliff::dataset::{export_dataset, import_dataset, read_meta};
use redcliff::lock::LOCK_NAME;
use redcliff::report::{read_eval_report, FactorRow};
use redcliff::AppError;
use redcliff_core::model::RedcliffModel;
use redcliff_core::synth::WindowedDataset;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_redcliff");

fn small_gen(out: &Path, repeats: usize) -> gen_synth::GenSynthArgs {
    gen_synth::GenSynthArgs {
        repeats,
        seed: 3,
        train_per_class: 6,
        val_per_class: 3,
        window: 30,
        innov_var: 1.0,
        ..gen_synth::GenSynthArgs::new(3, 1, 2, out)
    }
}

fn quick_config(dir: &Path) -> PathBuf {
    let cfg = RunConfigFile {
        pretrain_epochs: Some(1),
        acclimation_epochs: Some(1),
        max_iter: Some(3),
        factor_hidden: Some(vec![4]),
        state_hidden: Some(vec![6]),
        batch_size: Some(16),
        position_stride: Some(4),
        gen_lr: Some(0.005),
        embed_lr: Some(0.005),
        ..RunConfigFile::default()
    };
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn train_args(data: &Path, config: &Path, out: &Path, ablation: Option<&str>) -> train::TrainArgs {
    train::TrainArgs {
        data: data.to_path_buf(),
        config: Some(config.to_path_buf()),
        out: out.to_path_buf(),
        ablation: ablation.map(str::to_string),
        seed: None,
    }
}

fn eval_args(model: &Path, truth: &Path, out: &Path) -> eval::EvalArgs {
    eval::EvalArgs {
        model: model.to_path_buf(),
        truth: truth.to_path_buf(),
        out: out.to_path_buf(),
        top_k: 5,
        diffs: vec!["0:1".into()],
        method: None,
        system: None,
        repeat: None,
        position_stride: 4,
    }
}

/// Relative path -> bytes for every file under `root`, skipping manifests.
fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn exit_code(args: &[&str]) -> (i32, String) {
    let out = Process::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn gen_synth_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_synth::run(&small_gen(&a, 2)).unwrap();
    gen_synth::run(&small_gen(&b, 2)).unwrap();
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() >= 2 * 4);
    assert_eq!(ta, tb);
    assert!(a.join("manifest.json").exists());
    let meta = read_meta(&a.join("repeat_1")).unwrap();
    assert_eq!((meta.n_c, meta.n_classes, meta.repeat), (3, 2, 1));
    assert_eq!(meta.train_class_counts, vec![6, 6]);
    assert_eq!(meta.system, "3-1-2");
    // (9 - 3) / 1 edges
    assert_eq!(meta.complexity.unwrap().value, 6.0);
}

#[test]
fn gen_synth_without_edges_has_no_complexity() {
    let tmp = TempDir::new().unwrap();
    let mut args = small_gen(tmp.path(), 1);
    args.n_e = 0;
    gen_synth::run(&args).unwrap();
    let meta = read_meta(&tmp.path().join("repeat_0")).unwrap();
    assert!(meta.complexity.is_none());
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("repeat_0/meta.json")).unwrap()).unwrap();
    assert!(raw["complexity"].is_null());
}

#[test]
fn combine_matches_loop_oracle() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("src");
    gen_synth::run(&small_gen(&src, 5)).unwrap();
    let inputs: Vec<PathBuf> = (0..5).map(|r| src.join(format!("repeat_{r}"))).collect();
    let out = tmp.path().join("mix");
    combine::run(&combine::CombineArgs {
        inputs: inputs.clone(),
        dominant: None,
        coeff_dominant: 10.0,
        coeff_background: 1.0,
        out: out.clone(),
    })
    .unwrap();
    let parts: Vec<_> = inputs.iter().map(|p| import_dataset(p).unwrap()).collect();
    for d in 0..5 {
        let mixed = import_dataset(&out.join(format!("dominant_{d}"))).unwrap();
        assert_eq!(mixed.meta.combined.as_ref().unwrap().dominant, d);
        for n in 0..mixed.train.len() {
            let got = mixed.train.samples[n].x.data();
            for (idx, g) in got.iter().enumerate() {
                let mut want = 0.0;
                for (k, p) in parts.iter().enumerate() {
                    let c = if k == d { 10.0 } else { 1.0 };
                    want += c * p.train.samples[n].x.data()[idx];
                }
                assert_eq!(*g, want);
            }
            assert_eq!(mixed.train.samples[n].y, parts[d].train.samples[n].y);
        }
    }
}

#[test]
fn combine_with_silent_background_scales_dominant() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("src");
    gen_synth::run(&small_gen(&src, 2)).unwrap();
    let out = tmp.path().join("mix");
    combine::run(&combine::CombineArgs {
        inputs: vec![src.join("repeat_0"), src.join("repeat_1")],
        dominant: Some(1),
        coeff_dominant: 10.0,
        coeff_background: 0.0,
        out: out.clone(),
    })
    .unwrap();
    assert!(!out.join("dominant_0").exists());
    let base = import_dataset(&src.join("repeat_1")).unwrap();
    let mixed = import_dataset(&out.join("dominant_1")).unwrap();
    for (m, b) in mixed.val.samples.iter().zip(&base.val.samples) {
        let scaled: Vec<f64> = b.x.data().iter().map(|v| 10.0 * v).collect();
        assert_eq!(m.x.data(), scaled.as_slice());
    }
}

#[test]
fn combine_rejects_mismatched_inputs() {
    let tmp = TempDir::new().unwrap();
    gen_synth::run(&small_gen(&tmp.path().join("a"), 1)).unwrap();
    let mut other = small_gen(&tmp.path().join("b"), 1);
    other.window = 40;
    gen_synth::run(&other).unwrap();
    let err = combine::run(&combine::CombineArgs {
        inputs: vec![tmp.path().join("a/repeat_0"), tmp.path().join("b/repeat_0")],
        dominant: None,
        coeff_dominant: 10.0,
        coeff_background: 1.0,
        out: tmp.path().join("mix"),
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn train_writes_artifacts_and_is_repeatable() {
    let tmp = TempDir::new().unwrap();
    gen_synth::run(&small_gen(&tmp.path().join("d"), 1)).unwrap();
    let data = tmp.path().join("d/repeat_0");
    let cfg = quick_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train::run(&train_args(&data, &cfg, &a, None)).unwrap();
    train::run(&train_args(&data, &cfg, &b, None)).unwrap();
    for name in ["train.json", "history.csv", "checkpoints.json", "manifest.json", "best/model.json", "final/weights.bin"] {
        assert!(a.join(name).exists(), "{name}");
    }
    assert_eq!(fs::read(a.join("history.csv")).unwrap(), fs::read(b.join("history.csv")).unwrap());
    assert_eq!(fs::read(a.join("best/weights.bin")).unwrap(), fs::read(b.join("best/weights.bin")).unwrap());
    let history = fs::read_to_string(a.join("history.csv")).unwrap();
    assert_eq!(history.lines().next().unwrap(), train::HISTORY_HEADER.join(","));
    // 1 pretrain + 1 acclimation + 3 joint epochs
    assert_eq!(history.lines().count(), 1 + 5);
    assert!(!a.join(LOCK_NAME).exists());
}

#[test]
fn single_factor_ablation_trains_one_factor() {
    let tmp = TempDir::new().unwrap();
    gen_synth::run(&small_gen(&tmp.path().join("d"), 1)).unwrap();
    let cfg = quick_config(tmp.path());
    let out = tmp.path().join("t");
    let run = train::run(&train_args(&tmp.path().join("d/repeat_0"), &cfg, &out, Some("single_factor"))).unwrap();
    assert_eq!(run.method, "single_factor");
    let (meta, model) = load_checkpoint(&out.join("best")).unwrap();
    assert_eq!((meta.config.n_k, model.factors.len()), (1, 1));
    assert_eq!(meta.method, "single_factor");
}

#[test]
fn existing_lock_blocks_training() {
    let tmp = TempDir::new().unwrap();
    gen_synth::run(&small_gen(&tmp.path().join("d"), 1)).unwrap();
    let cfg = quick_config(tmp.path());
    let out = tmp.path().join("t");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(LOCK_NAME), "").unwrap();
    let err = train::run(&train_args(&tmp.path().join("d/repeat_0"), &cfg, &out, None)).unwrap_err();
    assert!(matches!(err, AppError::Locked(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path().join("d");
    gen_synth::run(&small_gen(&d, 1)).unwrap();
    let data = d.join("repeat_0");

    // a dataset without label columns cannot feed λ > 0
    let mut unlabelled = import_dataset(&data).unwrap();
    let strip = |ds: &WindowedDataset| {
        let mut out = WindowedDataset::new(ds.n_c, 0, ds.window_len, ds.split, ds.seed);
        for s in &ds.samples {
            out.push(redcliff_core::synth::Sample { x: s.x.clone(), y: vec![] }).unwrap();
        }
        out
    };
    unlabelled.train = strip(&unlabelled.train);
    unlabelled.val = strip(&unlabelled.val);
    unlabelled.meta.n_classes = 0;
    unlabelled.meta.train_class_counts = vec![];
    unlabelled.meta.val_class_counts = vec![];
    let nolab = tmp.path().join("nolab");
    export_dataset(&nolab, &unlabelled).unwrap();
    let cfg = quick_config(tmp.path());
    let (code, err) = exit_code(&["train", "--data", nolab.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("t0").to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.starts_with("error: "));

    let hot = tmp.path().join("hot.json");
    fs::write(&hot, r#"{"pretrain_epochs": 0, "acclimation_epochs": 0, "max_iter": 5, "factor_hidden": [4], "state_hidden": [6], "gen_lr": 1e300, "embed_lr": 1e300}"#).unwrap();
    let (code, err) = exit_code(&["train", "--data", data.to_str().unwrap(), "--config", hot.to_str().unwrap(), "--out", tmp.path().join("t1").to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");

    let (code, _) = exit_code(&["train", "--data", data.to_str().unwrap(), "--ablation", "nonsense", "--out", tmp.path().join("t2").to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _) = exit_code(&["gen-synth", "--n-c", "3"]);
    assert_eq!(code, 2);
    let (code, _) = exit_code(&["eval", "--model", tmp.path().join("missing").to_str().unwrap(), "--truth", data.to_str().unwrap(), "--out", tmp.path().join("e").to_str().unwrap()]);
    assert_eq!(code, 1);
    let (code, _) = exit_code(&["gen-synth", "--n-c", "3", "--n-e", "1", "--n-k", "2", "--repeats", "1", "--train-per-class", "2", "--val-per-class", "1", "--window", "20", "--out", tmp.path().join("g").to_str().unwrap()]);
    assert_eq!(code, 0);
}

/// A model whose first-layer columns vanish exactly on the non-edges of
/// each true factor, so every graph is recovered perfectly.
fn perfect_model(truth_dir: &Path, out: &Path) {
    let system = redcliff::dataset::read_system(truth_dir).unwrap().unwrap();
    let n_c = system.factors[0].n_c();
    let mut cfg = redcliff_core::model::ModelConfig::new(n_c, system.n_k(), system.n_k());
    cfg.factor_hidden = vec![3];
    cfg.state_hidden = vec![4];
    let mut model = RedcliffModel::new(cfg.clone(), 9).unwrap();
    for (k, f) in system.factors.iter().enumerate() {
        let edges = f.lag_summed_abs();
        for i in 0..n_c {
            let w = model.factors[k].nodes[i][0].weight;
            let t = model.store.get_mut(w);
            let cols = n_c * cfg.tau_in;
            for (idx, v) in t.data_mut().iter_mut().enumerate() {
                let j = (idx % cols) / cfg.tau_in;
                *v = if i != j && edges[i * n_c + j] > 0.0 { 1.0 } else { 0.0 };
            }
        }
    }
    save_checkpoint(out, &model, "oracle", system.n_k(), None).unwrap();
}

#[test]
fn eval_scores_perfect_recovery_and_render_reproduces() {
    let tmp = TempDir::new().unwrap();
    let mut args = small_gen(&tmp.path().join("d"), 1);
    args.n_c = 4;
    args.n_e = 2;
    gen_synth::run(&args).unwrap();
    let data = tmp.path().join("d/repeat_0");
    let ckpt = tmp.path().join("oracle");
    perfect_model(&data, &ckpt);
    let out = tmp.path().join("e");
    let rep = eval::run(&eval_args(&ckpt, &data, &out)).unwrap();
    assert_eq!(rep.rows.len(), 2);
    for row in &rep.rows {
        assert_eq!(row.f1, Some(1.0), "{row:?}");
        assert_eq!(row.roc_auc, Some(1.0));
        assert_eq!((row.shd_upper, row.shd_lower), (Some(0), Some(0)));
        assert_eq!(row.estimate, Some(row.factor));
    }
    for name in ["report.json", "report.csv", "top_edges.csv", "factor_0.svg", "truth_1.svg", "diff_0_1.svg", "manifest.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let before: Vec<_> = tree(&out).into_iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "svg")).collect();
    for (p, _) in &before {
        fs::remove_file(out.join(p)).unwrap();
    }
    render::run(&render::RenderArgs {
        report: out.join("report.json"),
        out: None,
    })
    .unwrap();
    let after: Vec<_> = tree(&out).into_iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "svg")).collect();
    assert_eq!(before, after);
    assert_eq!(read_eval_report(&out.join("report.json")).unwrap(), rep);
}

#[test]
fn pipeline_report_counts_and_aggregates() {
    let tmp = TempDir::new().unwrap();
    gen_synth::run(&small_gen(&tmp.path().join("d"), 2)).unwrap();
    let cfg = quick_config(tmp.path());
    let mut evals = Vec::new();
    for r in 0..2 {
        for method in ["none", "single_factor"] {
            let data = tmp.path().join(format!("d/repeat_{r}"));
            let t = tmp.path().join(format!("t_{method}_{r}"));
            let e = tmp.path().join(format!("e_{method}_{r}"));
            train::run(&train_args(&data, &cfg, &t, Some(method))).unwrap();
            let mut args = eval_args(&t, &data, &e);
            args.diffs.clear();
            eval::run(&args).unwrap();
            evals.push(e);
        }
    }
    let out = tmp.path().join("summary");
    let s = report::run(&report::ReportArgs {
        runs: evals,
        out: out.clone(),
        reference: Some("single_factor".into()),
    })
    .unwrap();
    // repeats × true factors per method
    assert_eq!(s.rows.iter().filter(|r| r.method == "full").count(), 2 * 2);
    assert_eq!(s.rows.len(), 2 * 2 * 2);
    let f1: Vec<f64> = s.rows.iter().filter(|r| r.method == "full").filter_map(|r| r.f1).collect();
    let mean = f1.iter().sum::<f64>() / 4.0;
    let var = f1.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
    let agg = s.aggregates.iter().find(|a| a.method == "full" && a.metric == "f1").unwrap();
    assert!((agg.mean - mean).abs() <= 1e-12);
    assert!((agg.sem - (var / 4.0).sqrt()).abs() <= 1e-12);
    assert_eq!(agg.count, 4);
    for name in ["report.json", "report.csv", "aggregate.csv", "placement.csv", "improvement.csv", "manifest.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let rows: Vec<FactorRow> = s.rows.clone();
    assert!(rows.windows(2).all(|w| (&w[0].system, &w[0].method, w[0].repeat, w[0].factor) <= (&w[1].system, &w[1].method, w[1].repeat, w[1].factor)));
}
