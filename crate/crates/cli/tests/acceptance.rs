//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use attrhar::data::presets::{opportunity_groups, pamap2_groups};
use attrhar::models::{build_attr_cnn, build_attr_cnn_imu, ChannelGroup, Pooling};
use attrhar::nn::Mode;
use attrhar::training::MetricsReport;
use attrhar::{Architecture, AttributeMatrix, Network, NetworkConfig, RngState, Tensor};
use common::*;

const GRADIENT_BUDGET: Duration = Duration::from_secs(120);
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_INSTANCES: usize = 100;
const F1_SETS: usize = 50;
const EVOLVE_MIN_F1: f64 = 0.90;
const EVOLVE_BUDGET: Duration = Duration::from_secs(600);
const EVOLVE_GENERATIONS: usize = 30;
const RESUME_SPLIT: &str = "10";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
/// Label, T, D, n, channel groups, pooling.
type Shape = (&'static str, usize, usize, usize, Vec<ChannelGroup>, bool);

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn attrhar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrhar"))
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("spawn attrhar")
}

fn ok(o: &Output, what: &str) -> Result<(), String> {
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{what} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: Vec<(String, f64)> = vec![
        ("conv".into(), conv_gradient_error(1)),
        ("pool".into(), pool_gradient_error(2)),
        ("dense".into(), dense_gradient_error(3)),
        ("lstm".into(), lstm_gradient_error(4)),
        ("head".into(), head_gradient_error(5)),
    ];
    for arch in [Architecture::AttrCnn, Architecture::AttrDeepConvLstm, Architecture::AttrCnnImu] {
        let cfg = toy_config(arch);
        let e = [Mode::Eval, Mode::Train]
            .into_iter()
            .map(|m| network_gradient_error(&cfg, 11, m))
            .fold(0.0, f64::max);
        worst.push((arch.as_str().into(), e));
    }
    let elapsed = start.elapsed();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    check(max < GRAD_TOLERANCE, || format!("max rel error {max:.2e} >= {GRAD_TOLERANCE:e} ({detail})"))?;
    check(elapsed < GRADIENT_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("max rel error {max:.2e} in {:.1}s ({detail})", elapsed.as_secs_f64()))
}

fn oracles() -> Outcome {
    let conv = conv_oracle_error(ORACLE_INSTANCES, 100);
    let pool = pool_oracle_error(ORACLE_INSTANCES, 101);
    let bce = bce_oracle_error(ORACLE_INSTANCES, 102);
    let f1 = f1_oracle_mismatches(F1_SETS, 103);
    for (name, e) in [("conv", conv), ("pool", pool), ("bce", bce)] {
        check(e <= ORACLE_TOL, || format!("{name} deviates by {e:e}"))?;
    }
    check(f1 == 0, || format!("{f1} of {F1_SETS} F1 sets disagree"))?;
    Ok(format!("conv {conv:.0e}, pool {pool:.0e}, bce {bce:.0e} over {ORACLE_INSTANCES}; F1 exact on {F1_SETS}"))
}

fn locomotion_table() -> Outcome {
    let m = AttributeMatrix::read_csv(&root().join("data/locomotion_attributes.csv")).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for (a, b, want) in [("Stand", "Sit", 4), ("Stand", "Lie", 5), ("Walk", "Stand", 3), ("Walk", "Sit", 2)] {
        let got = m
            .shared_attribute_count(m.class_index(a).unwrap(), m.class_index(b).unwrap())
            .map_err(|e| e.to_string())?;
        check(got == want, || format!("({a},{b}) = {got}, expected {want}"))?;
        detail.push(format!("({a},{b})={got}"));
    }
    Ok(detail.join(" "))
}

fn evolve_synthetic() -> Outcome {
    let cfg = root().join("configs/synthetic.toml");
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let start = Instant::now();
    ok(&attrhar(&["--config", s(&cfg), "--out", s(&full), "--threads", "1", "evolve"]), "evolve")?;
    let elapsed = start.elapsed();

    let history = std::fs::read_to_string(full.join("fitness_history.csv")).map_err(|e| e.to_string())?;
    let best: Vec<f64> = history
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    check(best.len() == EVOLVE_GENERATIONS, || format!("{} generations recorded", best.len()))?;
    check(best.windows(2).all(|w| w[0] <= w[1]), || "best F1 decreased".into())?;
    let last = *best.last().unwrap();
    check(last >= EVOLVE_MIN_F1, || format!("best validation F1 {last:.4} < {EVOLVE_MIN_F1}"))?;
    check(elapsed < EVOLVE_BUDGET, || format!("took {elapsed:?}"))?;

    let part = tmp.path().join("part");
    ok(&attrhar(&["--config", s(&cfg), "--out", s(&part), "evolve", "--stop-after", RESUME_SPLIT]), "evolve --stop-after")?;
    ok(&attrhar(&["--config", s(&cfg), "--out", s(&part), "evolve", "--resume"]), "evolve --resume")?;
    check(snapshot(&full) == snapshot(&part), || "resumed run differs from uninterrupted run".into())?;
    Ok(format!(
        "best validation F1 {last:.4} after {EVOLVE_GENERATIONS} generations in {:.1}s; resume after {RESUME_SPLIT} identical",
        elapsed.as_secs_f64()
    ))
}

const SMALL: &str = r#"
version = 1
seed = 5

[dataset]
name = "synthetic"
classes = 4
window = 24
step = 12

[dataset.synthetic]
classes = 4
channels = 6
groups = 2
samples_per_class = 120
span_length = 60
seed = 9

[network]
architecture = "attrCNN-IMU"
conv_filters = 4
hidden_units = 8

[training]
learning_rate = 0.002
batch_size = 16

[evolution]
generations = 3
attributes = 6
epochs = 1

[final]
epochs = 2
"#;

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let loco = root().join("data/locomotion_attributes.csv");
    let shared = tmp.path().join("shared");
    ok(&attrhar(&["--config", s(&cfg), "--out", s(&shared), "train-final", "--attributes", "random"]), "setup")?;
    let ckpt = shared.join("checkpoint.json");
    let attrs = shared.join("attributes.csv");

    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("synth", vec!["synth"]),
        ("evolve", vec!["evolve"]),
        ("train-final", vec!["train-final", "--attributes", "random", "--trials", "2"]),
        ("eval", vec!["eval", "--checkpoint", s(&ckpt), "--attributes", s(&attrs)]),
        ("inspect", vec!["inspect", s(&loco)]),
    ];
    let mut files = 0;
    for (name, args) in &commands {
        let mut snaps = Vec::new();
        for (run, threads) in [(0, "1"), (1, "4")] {
            let out = tmp.path().join(format!("{name}_{run}"));
            let mut full = vec!["--config", s(&cfg), "--out", s(&out), "--threads", threads];
            full.extend(args.iter().copied());
            ok(&attrhar(&full), name)?;
            snaps.push(snapshot(&out));
        }
        check(!snaps[0].is_empty(), || format!("{name} wrote nothing"))?;
        for (path, bytes) in &snaps[0] {
            check(snaps[1].get(path) == Some(bytes), || format!("{name}: {} differs", path.display()))?;
        }
        check(snaps[0].len() == snaps[1].len(), || format!("{name}: file sets differ"))?;
        files += snaps[0].len();
    }
    Ok(format!("{} commands, {files} files byte-identical across runs (1 and 4 threads)", commands.len()))
}

fn parity() -> Outcome {
    let mut cnn_cfg = NetworkConfig::new(Architecture::AttrCnn, 24, 9, 6);
    cnn_cfg.conv_filters = 8;
    cnn_cfg.hidden_units = 16;
    let mut imu_cfg = cnn_cfg.clone();
    imu_cfg.architecture = Architecture::AttrCnnImu;
    imu_cfg.groups = vec![ChannelGroup {
        name: "all".into(),
        channels: (0..9).collect(),
    }];
    let cnn = build_attr_cnn(&cnn_cfg, 77).map_err(|e| e.to_string())?;
    let imu = build_attr_cnn_imu(&imu_cfg, 77).map_err(|e| e.to_string())?;
    let batch = random_batch(4, 24, 9, 3);
    let a = scores(&cnn, &batch)?;
    let b = scores(&imu, &batch)?;
    check(a == b, || "single-group attrCNN-IMU differs from attrCNN".into())?;

    let shapes: [Shape; 3] = [
        ("Opportunity n=10", 24, 113, 10, opportunity_groups(), false),
        ("Opportunity n=32", 24, 113, 32, opportunity_groups(), false),
        ("Pamap2 n=24", 100, 40, 24, pamap2_groups(), true),
    ];
    let mut built = 0;
    for (label, t, d, n, groups, pooled) in shapes {
        for arch in [Architecture::AttrCnn, Architecture::AttrDeepConvLstm, Architecture::AttrCnnImu] {
            let mut cfg = NetworkConfig::new(arch, t, d, n);
            if pooled {
                cfg.pooling = Some(Pooling::default());
            }
            if arch == Architecture::AttrCnnImu {
                cfg.groups = groups.clone();
            }
            let net = Network::build(&cfg, 5).map_err(|e| e.to_string())?;
            let out = scores(&net, &random_batch(2, t, d, 8))?;
            check(out.len() == 2 * n, || format!("{} {label}: {} scores", arch.as_str(), out.len()))?;
            check(out.iter().all(|&v| v > 0.0 && v < 1.0), || format!("{} {label}: score outside (0,1)", arch.as_str()))?;
            built += 1;
        }
    }
    Ok(format!("single-group outputs identical; {built} builder/shape pairs emit n scores in (0,1)"))
}

fn random_batch(b: usize, t: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = RngState::new(seed);
    Tensor::new(vec![b, t, d], (0..b * t * d).map(|_| rng.uniform()).collect()).unwrap()
}

fn scores(net: &Network, batch: &Tensor) -> Result<Vec<f64>, String> {
    net.forward(batch, Mode::Eval, &mut RngState::new(0))
        .map(|o| o.scores.into_data())
        .map_err(|e| e.to_string())
}

const PAMAP2_LABELS: [i64; 12] = [1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24];

/// A Pamap2-shaped export: timestamp, activity id, heart rate, then three
/// 13-channel IMUs, with a few missing readings.
fn write_pamap2_csv(path: &Path, seed: u64) {
    let mut rng = RngState::new(seed);
    let mut text = String::from("timestamp,label");
    for c in 0..40 {
        write!(text, ",ch_{c}").unwrap();
    }
    text.push('\n');
    let mut row = 0usize;
    for &label in PAMAP2_LABELS.iter().chain(PAMAP2_LABELS.iter().rev()) {
        for _ in 0..360 {
            write!(text, "{:.2},{label}", row as f64 / 100.0).unwrap();
            for c in 0..40 {
                let v = (label as f64 * 0.1 * (c + 1) as f64 + row as f64 * 0.05).sin() + 0.1 * rng.uniform();
                if row % 997 == 3 && c == 0 {
                    text.push_str(",NaN");
                } else {
                    write!(text, ",{v:.5}").unwrap();
                }
            }
            text.push('\n');
            row += 1;
        }
    }
    std::fs::write(path, text).unwrap();
}

fn pamap2_smoke() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("pamap2");
    std::fs::create_dir_all(&data).unwrap();
    for (i, split) in ["train", "validation", "test"].iter().enumerate() {
        write_pamap2_csv(&data.join(format!("{split}.csv")), 40 + i as u64);
    }
    // The shipped template with desk-scale widths and budgets.
    let template = std::fs::read_to_string(root().join("configs/pamap2.toml")).unwrap();
    let mut cfg: toml::Table = template.parse().map_err(|e| format!("template: {e}"))?;
    let network = cfg["network"].as_table_mut().unwrap();
    network.insert("conv_filters".into(), 4.into());
    network.insert("hidden_units".into(), 8.into());
    let evolution = cfg["evolution"].as_table_mut().unwrap();
    evolution.insert("generations".into(), 2.into());
    evolution.insert("epochs".into(), 1.into());
    cfg["final"].as_table_mut().unwrap().insert("epochs".into(), 1.into());
    let cfg_path = tmp.path().join("pamap2.toml");
    std::fs::write(&cfg_path, toml::to_string(&cfg).unwrap()).unwrap();
    let c = s(&cfg_path);

    let evo = tmp.path().join("evolve");
    ok(&attrhar(&["--config", c, "--out", s(&evo), "evolve"]), "evolve")?;
    let best = evo.join("best_attributes.csv");
    let fin = tmp.path().join("final");
    ok(&attrhar(&["--config", c, "--out", s(&fin), "train-final", "--attributes", s(&best)]), "train-final")?;
    let ev = tmp.path().join("eval");
    let ckpt = fin.join("checkpoint.json");
    ok(
        &attrhar(&["--config", c, "--out", s(&ev), "eval", "--checkpoint", s(&ckpt), "--attributes", s(&best)]),
        "eval",
    )?;

    let mut detail = Vec::new();
    for dir in [&fin, &ev] {
        let bytes = std::fs::read(dir.join("metrics.json")).map_err(|e| e.to_string())?;
        let report: MetricsReport = serde_json::from_slice(&bytes).map_err(|e| format!("metrics.json: {e}"))?;
        report.validate().map_err(|e| format!("metrics.json: {e}"))?;
        check(report.classes == 12 && report.attributes == 24, || "unexpected metrics shape".into())?;
        detail.push(format!("{} F1 {:.3}", report.split, report.weighted_f1));
    }
    Ok(format!("evolve(2) -> train-final -> eval on 40-channel CSVs; schema-valid metrics ({})", detail.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("gradient correctness", gradients),
        ("forward, loss and metric oracles", oracles),
        ("locomotion shared attribute counts", locomotion_table),
        ("evolution on the synthetic task", evolve_synthetic),
        ("determinism", determinism),
        ("architecture parity and shapes", parity),
        ("pamap2 csv end-to-end smoke", pamap2_smoke),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
