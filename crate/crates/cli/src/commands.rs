use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use log::{info, warn};
use serde::Serialize;

use attrhar::attributes::{read_csv_rows, violations};
use attrhar::evolution::{Evolution, RunFiles};
use attrhar::experiment::{ExperimentConfig, Splits};
use attrhar::manifest::{bytes_digest, RunManifest};
use attrhar::rng::stream;
use attrhar::training::{evaluate, train, MetricsReport};
use attrhar::{AttributeMatrix, Error, Network, RngState};

use crate::{Cli, Command, EvalArgs, EvolveArgs, InspectArgs, SplitName, SynthArgs, TrainFinalArgs};

pub fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Evolve(a) => evolve(cli, a),
        Command::TrainFinal(a) => train_final(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Inspect(a) => inspect(cli, a),
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    path: PathBuf,
    digest: String,
}

impl Loaded {
    fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    fn manifest(&self, command: &str) -> Result<RunManifest> {
        let mut m = RunManifest::new(command, self.digest.clone());
        m.seed("base", self.cfg.seed);
        if let Some(s) = &self.cfg.dataset.synthetic {
            m.seed("synthetic", s.seed);
        }
        m.input(&self.path)?;
        Ok(m)
    }

    fn splits(&self, manifest: &mut RunManifest) -> Result<Splits> {
        let splits = self.cfg.load_splits(self.base_dir())?;
        for p in &splits.inputs {
            manifest.input(p)?;
        }
        Ok(splits)
    }
}

fn load_config(cli: &Cli) -> Result<Loaded> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let digest = bytes_digest(&serde_json::to_vec(&cfg)?);
    Ok(Loaded { cfg, path, digest })
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    Ok(&cli.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<ExitCode> {
    let loaded = load_config(cli)?;
    if loaded.cfg.dataset.synthetic.is_none() {
        return Err(Error::Config("config has no [dataset.synthetic] section".into()).into());
    }
    let splits = match args.split {
        Some(s) => vec![s],
        None => vec![SplitName::Train, SplitName::Validation, SplitName::Test],
    };
    let out = out_dir(cli)?;
    let mut manifest = loaded.manifest("synth")?;
    for split in splits {
        let rec = loaded.cfg.synthetic_recording(split.index())?;
        let name = format!("synthetic_{}.csv", split.as_str());
        rec.write_csv(&out.join(&name))?;
        manifest.output(out, &name)?;
        println!("{name}: {} rows, {} channels", rec.len(), rec.channels());
    }
    manifest.write(out)?;
    Ok(ExitCode::SUCCESS)
}

fn evolve(cli: &Cli, args: &EvolveArgs) -> Result<ExitCode> {
    let loaded = load_config(cli)?;
    let mut manifest = loaded.manifest("evolve")?;
    let evo_cfg = loaded.cfg.evolution_config()?;
    let splits = loaded.splits(&mut manifest)?;
    let net_cfg = loaded
        .cfg
        .network_config(splits.train.channels(), evo_cfg.attributes, &splits.groups)?;
    let evo = Evolution::new(&evo_cfg, &net_cfg, &splits.train, &splits.validation)?;
    let out = out_dir(cli)?;
    let files = RunFiles::new(out);

    let state = if args.resume {
        let state = evo.load_state(&files.state())?;
        info!("resuming after generation {}", state.completed);
        state
    } else {
        if files.state().exists() {
            warn!("starting over; {} will be replaced", files.state().display());
        }
        evo.initial_state()?
    };
    let state = evo.run(state, args.stop_after, Some(&files))?;

    for name in ["fitness_history.csv", "best_attributes.csv", "evolution_state.json"] {
        manifest.output(out, name)?;
    }
    manifest.write(out)?;
    println!(
        "generations {}/{} best weighted F1 {:.4}",
        state.completed, evo_cfg.generations, state.best_f1
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct TrialSummary {
    format: &'static str,
    trials: Vec<MetricsReport>,
    mean_weighted_f1: f64,
    /// Sample standard deviation; 0 for a single trial.
    std_weighted_f1: f64,
}

fn train_final(cli: &Cli, args: &TrainFinalArgs) -> Result<ExitCode> {
    let loaded = load_config(cli)?;
    let cfg = &loaded.cfg;
    if args.trials == 0 {
        return Err(Error::Config("--trials must be >= 1".into()).into());
    }
    let mut manifest = loaded.manifest("train-final")?;
    let classes = cfg.dataset.classes;
    let matrices: Vec<AttributeMatrix> = if args.attributes == "random" {
        let n = cfg.attributes()?;
        (0..args.trials)
            .map(|t| AttributeMatrix::random(classes, n, &mut RngState::derive(cfg.seed, stream::ATTRIBUTES, &[t as u64])))
            .collect::<attrhar::Result<_>>()?
    } else {
        let path = PathBuf::from(&args.attributes);
        let m = AttributeMatrix::read_csv(&path)?;
        if m.classes() != classes {
            return Err(Error::Config(format!(
                "{} has {} classes, dataset has {classes}",
                path.display(),
                m.classes()
            ))
            .into());
        }
        manifest.input(&path)?;
        vec![m; args.trials]
    };
    let splits = loaded.splits(&mut manifest)?;
    let trainval = splits.train.concat(&splits.validation)?;
    let net_cfgs = matrices
        .iter()
        .map(|m| cfg.network_config(trainval.channels(), m.attributes(), &splits.groups))
        .collect::<attrhar::Result<Vec<_>>>()?;

    let out = out_dir(cli)?;
    let mut reports = Vec::new();
    for (t, (attrs, net_cfg)) in matrices.iter().zip(&net_cfgs).enumerate() {
        let seed = cfg.seed.wrapping_add(t as u64);
        let rel = if args.trials == 1 {
            PathBuf::new()
        } else {
            PathBuf::from(format!("trial_{}", t + 1))
        };
        let dir = out.join(&rel);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let mut net = Network::build(net_cfg, seed)?;
        let mut tc = cfg.final_train_config();
        tc.seed = seed;
        let report = train(&mut net, &trainval, attrs, &tc)?;
        let metrics = MetricsReport::new("test", &net, attrs, evaluate(&net, &splits.test, attrs)?);
        println!("trial {} test weighted F1 {:.4}", t + 1, metrics.weighted_f1);

        net.save_checkpoint(&dir.join("checkpoint.json"))?;
        report.write_loss_csv(&dir.join("loss.csv"))?;
        write_json(&dir.join("metrics.json"), &metrics)?;
        attrs.write_csv(&dir.join("attributes.csv"))?;
        for name in ["checkpoint.json", "loss.csv", "metrics.json", "attributes.csv"] {
            let rel_name = rel.join(name);
            manifest.output(out, &rel_name.to_string_lossy())?;
        }
        manifest.seed(&format!("trial_{}", t + 1), seed);
        reports.push(metrics);
    }

    if args.trials > 1 {
        let f1: Vec<f64> = reports.iter().map(|r| r.weighted_f1).collect();
        let mean = f1.iter().sum::<f64>() / f1.len() as f64;
        let var = f1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (f1.len() - 1) as f64;
        let summary = TrialSummary {
            format: "attrhar-trials",
            trials: reports,
            mean_weighted_f1: mean,
            std_weighted_f1: var.sqrt(),
        };
        write_json(&out.join("summary.json"), &summary)?;
        manifest.output(out, "summary.json")?;
        println!("mean weighted F1 {:.4} (std {:.4})", summary.mean_weighted_f1, summary.std_weighted_f1);
    }
    manifest.write(out)?;
    Ok(ExitCode::SUCCESS)
}

fn eval(cli: &Cli, args: &EvalArgs) -> Result<ExitCode> {
    let loaded = load_config(cli)?;
    let mut manifest = loaded.manifest("eval")?;
    let net = Network::load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let attrs = AttributeMatrix::read_csv(&args.attributes)?;
    manifest.input(&args.checkpoint)?;
    manifest.input(&args.attributes)?;
    if attrs.attributes() != net.attributes() {
        return Err(Error::Config(format!(
            "checkpoint predicts {} attributes, {} has {}",
            net.attributes(),
            args.attributes.display(),
            attrs.attributes()
        ))
        .into());
    }
    let splits = loaded.splits(&mut manifest)?;
    let data = match args.split {
        SplitName::Train => &splits.train,
        SplitName::Validation => &splits.validation,
        SplitName::Test => &splits.test,
    };
    let nc = net.config();
    if nc.window != data.window || nc.channels != data.channels() {
        return Err(Error::Config(format!(
            "checkpoint expects [{}, {}] windows, dataset has [{}, {}]",
            nc.window,
            nc.channels,
            data.window,
            data.channels()
        ))
        .into());
    }
    let metrics = MetricsReport::new(args.split.as_str(), &net, &attrs, evaluate(&net, data, &attrs)?);
    let out = out_dir(cli)?;
    write_json(&out.join("metrics.json"), &metrics)?;
    manifest.output(out, "metrics.json")?;
    manifest.write(out)?;
    println!("{} weighted F1 {:.4}", args.split.as_str(), metrics.weighted_f1);
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct InspectReport {
    classes: usize,
    attributes: usize,
    names: Vec<String>,
    popcounts: Vec<usize>,
    /// Symmetric K×K matrix; the diagonal holds popcounts.
    shared: Vec<Vec<usize>>,
    violations: Vec<String>,
}

fn inspect(cli: &Cli, args: &InspectArgs) -> Result<ExitCode> {
    let (names, rows) = read_csv_rows(&args.file)?;
    let found: Vec<String> = violations(&rows).iter().map(ToString::to_string).collect();
    let popcounts: Vec<usize> = rows.iter().map(|r| r.iter().filter(|&&b| b == 1).count()).collect();
    let shared: Vec<Vec<usize>> = rows
        .iter()
        .map(|a| {
            rows.iter()
                .map(|b| a.iter().zip(b).filter(|&(&x, &y)| x == 1 && y == 1).count())
                .collect()
        })
        .collect();
    let report = InspectReport {
        classes: rows.len(),
        attributes: rows.first().map_or(0, Vec::len),
        names,
        popcounts,
        shared,
        violations: found,
    };

    println!("classes {}", report.classes);
    println!("attributes {}", report.attributes);
    println!("popcounts");
    for (name, p) in report.names.iter().zip(&report.popcounts) {
        println!("  {name} {p}");
    }
    println!("shared attributes");
    for i in 0..report.classes {
        for j in i + 1..report.classes {
            println!("  {},{} {}", report.names[i], report.names[j], report.shared[i][j]);
        }
    }
    println!("violations {}", report.violations.len());
    for v in &report.violations {
        println!("  {v}");
    }

    let out = out_dir(cli)?;
    write_json(&out.join("inspect.json"), &report)?;
    let mut manifest = RunManifest::new("inspect", bytes_digest(b""));
    manifest.input(&args.file)?;
    manifest.output(out, "inspect.json")?;
    manifest.write(out)?;
    Ok(if report.violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(crate::EXIT_VALIDATION)
    })
}
