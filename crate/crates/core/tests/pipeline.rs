//! End-to-end behaviour of the pipeline stages on small phantom cohorts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use meniscus::attunet::{AttentionUNet, NetConfig};
use meniscus::cli::provenance::InputLog;
use meniscus::cli::provenance::Provenance;
use meniscus::cli::{
    cmd_evaluate, cmd_fit, cmd_phantom, cmd_prep, cmd_report, load_config, training_pairs, Dataset, Overrides,
    RunConfig,
};
use meniscus::datapipe::{save_mask_volume, save_volume, SplitName, Volume};
use meniscus::evalstats::{EvalReport, Region};
use meniscus::trainer::{evaluate_epoch, train, TrainConfig};

const SMALL: &str = r#"{"subjects": 6, "split": [3, 1, 2], "phantom": {"grid": [48, 48, 6]},
    "prep": {"crop": 48, "size": 32}, "net": {"input_size": 32, "width_mult": 0.125, "depth": 2},
    "train": {"batch_size": 4, "max_epochs": 2}}"#;

/// Cohort for the overfit check: at a 64-pixel input the depth-4 network
/// keeps a 4×4 bottleneck.
const OVERFIT: &str = r#"{"subjects": 4, "split": [2, 1, 1], "phantom": {"grid": [64, 64, 6]},
    "prep": {"crop": 64, "size": 64}, "net": {"input_size": 64, "width_mult": 0.125}}"#;

fn small_config(dir: &Path, seed: u64) -> (PathBuf, RunConfig) {
    config_from(dir, SMALL, seed)
}

fn config_from(dir: &Path, text: &str, seed: u64) -> (PathBuf, RunConfig) {
    let path = dir.join("run.json");
    std::fs::write(&path, text).unwrap();
    let cfg = load_config(
        Some(&path),
        &Overrides {
            seed: Some(seed),
            ..Overrides::default()
        },
    )
    .unwrap();
    (path, cfg)
}

/// Relative path → bytes of every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// A segmentation source whose masks and probabilities equal the truth.
fn truth_as_segmentation(data: &Path, out: &Path, split: SplitName) {
    let ds = Dataset::open(data, &mut InputLog::default()).unwrap();
    for id in ds.subjects(Some(split)) {
        let truth = meniscus::datapipe::load_mask_volume(&ds.path(&id, "mask_union", None).unwrap()).unwrap();
        let dir = out.join(&id);
        std::fs::create_dir_all(&dir).unwrap();
        save_mask_volume(&truth, &dir.join("pred_union.mvol")).unwrap();
        let prob = Volume::new(truth.header.clone(), truth.data.iter().map(|&v| f32::from(v)).collect()).unwrap();
        save_volume(&prob, &dir.join("prob.mvol")).unwrap();
    }
}

#[test]
fn phantom_and_prep_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_config(dir.path(), 7);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for root in [&a, &b] {
        cmd_phantom(&cfg, root).unwrap();
    }
    let first = snapshot(&a);
    assert!(first.keys().any(|k| k.ends_with(".mvol")));
    assert_eq!(first, snapshot(&b));
    cmd_prep(&cfg, &a).unwrap();
    cmd_prep(&cfg, &b).unwrap();
    let prepped = snapshot(&a);
    assert_eq!(prepped, snapshot(&b));
    // Re-preparing leaves the volumes unchanged.
    let volumes = |s: &BTreeMap<String, Vec<u8>>| {
        s.iter()
            .filter(|(k, _)| !k.ends_with(".json"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(volumes(&first), volumes(&prepped));

    let (_, other) = small_config(dir.path(), 8);
    let c = dir.path().join("c");
    cmd_phantom(&other, &c).unwrap();
    assert_ne!(snapshot(&c), first, "a different seed yields a different cohort");
}

#[test]
fn evaluating_the_truth_against_itself_is_perfect_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_config(dir.path(), 3);
    let data = dir.path().join("data");
    let seg = dir.path().join("oracle");
    let (maps, eval, report) = (
        dir.path().join("maps"),
        dir.path().join("eval"),
        dir.path().join("report"),
    );
    cmd_phantom(&cfg, &data).unwrap();
    truth_as_segmentation(&data, &seg, SplitName::Test);
    cmd_fit(
        &cfg,
        &data,
        &maps,
        Some(SplitName::Test),
        std::slice::from_ref(&seg),
        false,
    )
    .unwrap();
    cmd_evaluate(
        &cfg,
        &data,
        &maps,
        std::slice::from_ref(&seg),
        &eval,
        Some(SplitName::Test),
    )
    .unwrap();

    let rep = EvalReport::from_json(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep.comparisons.len(), 1);
    let c = &rep.comparisons[0];
    assert_eq!((c.label_a.as_str(), c.label_b.as_str()), ("truth", "oracle"));
    for d in &c.dice {
        assert!(!d.per_slice.is_empty(), "{:?} has slices", d.region);
        assert!(
            d.per_slice.iter().all(|&v| v == 1.0),
            "{:?}: {:?}",
            d.region,
            d.per_slice
        );
    }
    assert_eq!(c.auc, Some(1.0));
    assert_eq!(c.detection.false_positive + c.detection.false_negative, 0);
    for q in &c.quantities {
        assert_eq!(q.a, q.b, "{:?} {:?}", q.region, q.quantity);
        if let Some(e) = q.rel_error_pct {
            assert_eq!(e, 0.0);
        }
    }

    cmd_report(&cfg, &eval, &report).unwrap();
    let summary = std::fs::read_to_string(report.join("summary.md")).unwrap();
    let mut expected = vec![
        "table1_segmentation.csv".to_string(),
        "table2_quantitative.csv".to_string(),
        "truth_vs_oracle_roc.csv".to_string(),
        "truth_vs_oracle_roc.svg".to_string(),
    ];
    for q in ["t1", "t1rho", "t2star"] {
        for suffix in [".csv", "_scatter.svg"] {
            expected.push(format!("truth_vs_oracle_{q}{suffix}"));
        }
    }
    for f in &expected {
        assert!(report.join(f).is_file(), "{f} written");
        assert!(summary.contains(&format!("]({f})")), "{f} linked from the summary");
    }
    for line in summary.lines().filter(|l| l.starts_with("- [")) {
        let name = line.split("](").nth(1).unwrap().trim_end_matches(')');
        assert!(report.join(name).is_file(), "summary links existing file {name}");
    }
    let table = std::fs::read_to_string(report.join("table1_segmentation.csv")).unwrap();
    assert!(table.lines().count() > Region::ALL.len());
}

#[test]
fn every_stage_writes_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_config(dir.path(), 5);
    let data = dir.path().join("data");
    let seg = dir.path().join("oracle");
    let (maps, eval, report) = (
        dir.path().join("maps"),
        dir.path().join("eval"),
        dir.path().join("report"),
    );
    cmd_phantom(&cfg, &data).unwrap();
    cmd_prep(&cfg, &data).unwrap();
    truth_as_segmentation(&data, &seg, SplitName::Test);
    cmd_fit(
        &cfg,
        &data,
        &maps,
        Some(SplitName::Test),
        std::slice::from_ref(&seg),
        false,
    )
    .unwrap();
    cmd_evaluate(&cfg, &data, &maps, &[seg], &eval, Some(SplitName::Test)).unwrap();
    cmd_report(&cfg, &eval, &report).unwrap();
    for (dir, command, min_inputs) in [
        (&data, "phantom", 0),
        (&data, "prep", 1),
        (&maps, "fit", 2),
        (&eval, "evaluate", 2),
        (&report, "report", 1),
    ] {
        let text = std::fs::read_to_string(dir.join(format!("{command}.provenance.json"))).unwrap();
        let p: Provenance = serde_json::from_str(&text).unwrap();
        assert_eq!(p.command, command);
        assert_eq!(p.seed, 5);
        assert!(p.inputs.len() >= min_inputs, "{command}: {} inputs", p.inputs.len());
        assert!(p
            .inputs
            .iter()
            .all(|r| r.sha256.len() == 64 && !Path::new(&r.path).is_absolute()));
        let echoed: RunConfig =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{command}.config.json"))).unwrap())
                .unwrap();
        assert_eq!(echoed, cfg);
    }
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_meniscus"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();

    assert_eq!(run_cli(&["frobnicate"]).0, 1, "unknown subcommand");
    assert_eq!(run_cli(&["phantom"]).0, 1, "missing --out");

    let (code, err) = run_cli(&["report", "--eval", &d("missing"), "--out", &d("r")]);
    assert_eq!(code, 2, "missing report: {err}");

    std::fs::write(dir.path().join("bad.json"), r#"{"subjects": 4, "bogus_key": 1}"#).unwrap();
    let (code, err) = run_cli(&["--config", &d("bad.json"), "phantom", "--out", &d("x")]);
    assert_eq!(code, 1);
    assert!(err.contains("bogus_key"), "error names the key: {err}");

    std::fs::write(
        dir.path().join("bad_split.json"),
        r#"{"subjects": 4, "split": [3, 3, 3]}"#,
    )
    .unwrap();
    assert_eq!(
        run_cli(&["--config", &d("bad_split.json"), "phantom", "--out", &d("y")]).0,
        1
    );

    let (code, err) = run_cli(&["--seed", "1", "phantom", "--subjects", "3", "--out", &d("ok")]);
    assert_eq!(code, 0, "{err}");
    assert!(dir.path().join("ok").join("manifest.csv").is_file());
}

#[test]
fn training_overfits_a_small_set_and_returns_the_best_network() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = config_from(dir.path(), OVERFIT, 11);
    let data = dir.path().join("data");
    cmd_phantom(&cfg, &data).unwrap();
    let ds = Dataset::open(&data, &mut InputLog::default()).unwrap();
    let mut pairs = training_pairs(&ds, SplitName::Train, &mut InputLog::default()).unwrap();
    pairs.retain(|(_, m)| m.count() > 0);
    assert!(pairs.len() >= 8, "{} slices with meniscus", pairs.len());
    pairs.truncate(8);

    let net_cfg = NetConfig {
        input_size: 64,
        width_mult: 0.125,
        ..NetConfig::default()
    };
    assert_eq!(net_cfg.depth, 4);
    let train_cfg = TrainConfig {
        batch_size: 2,
        max_epochs: 200,
        stop_patience: 200,
        lr_patience: 200,
        seed: 4,
        ..TrainConfig::default()
    };
    let (best, log) = train(AttentionUNet::new(net_cfg.clone()).unwrap(), &pairs, &pairs, &train_cfg).unwrap();
    let min_loss = log.epochs.iter().map(|e| e.train_loss).fold(f64::INFINITY, f64::min);
    assert!(min_loss < 0.05, "lowest training loss {min_loss}");

    let max_dice = log.epochs.iter().map(|e| e.val_dice).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(log.best_val_dice(), Some(max_dice));
    assert!(max_dice > 0.95, "Dice of the overfit network's predictions {max_dice}");
    assert_eq!(evaluate_epoch(&best, &pairs, net_cfg.threshold).unwrap(), max_dice);

    // A rerun reproduces the log except for wall-clock times.
    let short = TrainConfig {
        max_epochs: 3,
        ..train_cfg
    };
    let strip = |l: &meniscus::trainer::TrainLog| {
        l.epochs
            .iter()
            .map(|e| (e.epoch, e.train_loss, e.val_dice, e.lr))
            .collect::<Vec<_>>()
    };
    let (_, a) = train(AttentionUNet::new(net_cfg.clone()).unwrap(), &pairs, &pairs, &short).unwrap();
    let (_, b) = train(AttentionUNet::new(net_cfg).unwrap(), &pairs, &pairs, &short).unwrap();
    assert_eq!(strip(&a), strip(&b));
}
