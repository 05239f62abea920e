//! Subcommand implementations. Every artifact is a pure function of the
//! effective configuration, so reruns are byte-identical.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use multifix::baselines::{run_baseline, Method};
use multifix::dynamics::{atypical_node_report, export_dynamics, read_dynamics_csv, DynamicsLog};
use multifix::eval::{evaluate_with, ApMode, EvalReport};
use multifix::io::{read_probabilities, read_split_entries, write_probabilities};
use multifix::model::{predict, save_checkpoint, train, EpochMetrics, ModelConfig};
use multifix::synth::{generate, write_synthetic};
use multifix::{make_splits, Dataset, Role, Split};
use serde::{Deserialize, Serialize};

use crate::config::{Ablation, RunConfig};

/// Per-split evaluation written to `split_<i>/report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: usize,
    pub seed: u64,
    pub method: String,
    pub test: EvalReport,
    pub val: Option<EvalReport>,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    pub best_val_ap: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation over splits.
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            values,
        }
    }
}

/// Mean and spread of the test AP across splits, written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub n_splits: usize,
    pub headline: ApMode,
    pub ap_micro: Stat,
    pub ap_macro: Stat,
    pub ap_samples: Stat,
}

impl Summary {
    pub fn headline_ap(&self) -> &Stat {
        match self.headline {
            ApMode::Micro => &self.ap_micro,
            ApMode::Macro => &self.ap_macro,
            ApMode::Samples => &self.ap_samples,
        }
    }
}

fn summarize(method: &str, headline: ApMode, reports: &[SplitReport]) -> Summary {
    let col = |f: fn(&EvalReport) -> f64| Stat::of(reports.iter().map(|r| f(&r.test)).collect());
    Summary {
        method: method.to_string(),
        n_splits: reports.len(),
        headline,
        ap_micro: col(|r| r.ap_micro),
        ap_macro: col(|r| r.ap_macro),
        ap_samples: col(|r| r.ap_samples),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn split_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("split_{i}"))
}

fn write_split_file(path: &Path, split: &Split) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for (v, role) in split.roles().iter().enumerate() {
        if *role != Role::Unassigned {
            writeln!(w, "{v}\t{}", role.as_str())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_metrics(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for m in metrics {
        serde_json::to_writer(&mut w, m)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let files = cfg.dataset.files()?;
    files.load().context("loading dataset")
}

/// Split `i`: the dataset's own split file when it has one, else a fresh
/// random split seeded by the split's seed.
fn dataset_for_split(base: &Dataset, cfg: &RunConfig, i: usize) -> Result<Dataset> {
    if base.split().is_assigned() {
        return Ok(base.clone());
    }
    Ok(make_splits(base, cfg.train_frac, cfg.val_frac, cfg.seeds[i])?)
}

fn optional_eval(probs: &ndarray::Array2<f64>, ds: &Dataset, role: Role, headline: ApMode) -> Result<Option<EvalReport>> {
    match evaluate_with(probs, ds, role, headline) {
        Ok(r) => Ok(Some(r)),
        Err(multifix::Error::Argument(_)) | Err(multifix::Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_dynamics(dir: &Path, log: &DynamicsLog, k: usize) -> Result<()> {
    if log.is_empty() {
        return Ok(());
    }
    export_dynamics(log, &dir.join("dynamics.csv"))?;
    if log.checkpoints.len() >= 2 {
        let atypical = atypical_node_report(log, k.min(log.nodes.len()))?;
        write_json(&dir.join("atypical.json"), &atypical)?;
    }
    Ok(())
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let synth = generate(&cfg.synth)?;
    write_synthetic(&synth, &cfg.out_dir)?;
    cfg.write_effective(&cfg.out_dir)?;
    println!(
        "achieved homophily {:.4}, average degree {:.2}, {} edges -> {}",
        synth.meta.achieved_homophily,
        synth.meta.achieved_avg_degree,
        synth.meta.num_edges,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Trains one model per split under `cfg.out_dir` and returns the summary.
pub fn cmd_train(cfg: &RunConfig) -> Result<Summary> {
    let base = load_dataset(cfg)?;
    cfg.write_effective(&cfg.out_dir)?;
    let headline = cfg.model.headline;
    let mut reports = Vec::with_capacity(cfg.n_splits);
    for i in 0..cfg.n_splits {
        let ds = dataset_for_split(&base, cfg, i).with_context(|| format!("split {i}"))?;
        let model_cfg = cfg.split_model(i);
        let outcome = train(&ds, &model_cfg).with_context(|| format!("split {i}"))?;
        let probs = predict(&outcome.model, &ds).with_context(|| format!("split {i}"))?;

        let dir = split_dir(&cfg.out_dir, i);
        fs::create_dir_all(&dir)?;
        write_split_file(&dir.join("splits.tsv"), ds.split())?;
        write_metrics(&dir.join("metrics.jsonl"), &outcome.metrics)?;
        save_checkpoint(&outcome.model, &dir.join("model.gmfx"))?;
        write_probabilities(&dir.join("probabilities.csv"), &probs)?;
        write_dynamics(&dir, &outcome.dynamics, cfg.atypical_k)?;

        let report = SplitReport {
            split: i,
            seed: model_cfg.seed,
            method: "multifix".into(),
            test: evaluate_with(&probs, &ds, Role::Test, headline).with_context(|| format!("split {i}"))?,
            val: optional_eval(&probs, &ds, Role::Val, headline)?,
            best_epoch: Some(outcome.best_epoch),
            epochs_run: Some(outcome.epochs_run),
            best_val_ap: outcome.best_val_ap,
            coverage: None,
        };
        write_json(&dir.join("report.json"), &report)?;
        println!(
            "split {i}: test AP {:.4} ({:?}), best epoch {} of {}",
            report.test.headline_ap(),
            headline,
            outcome.best_epoch,
            outcome.epochs_run
        );
        reports.push(report);
    }
    let summary = summarize("multifix", headline, &reports);
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    let h = summary.headline_ap();
    println!("mean test AP {:.4} ± {:.4}", h.mean, h.std);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub enable_fr: bool,
    pub enable_lr: bool,
    pub enable_pe: bool,
    pub mean: f64,
    pub std: f64,
}

/// The full model plus each requested single-module ablation (all three when
/// none are given), each in its own subdirectory.
pub fn cmd_ablate(cfg: &RunConfig, ablations: &[Ablation]) -> Result<Vec<AblationRow>> {
    let all = [Ablation::NoFr, Ablation::NoLr, Ablation::NoPe];
    let chosen = if ablations.is_empty() { &all[..] } else { ablations };
    let mut runs = vec![("full".to_string(), cfg.model.clone())];
    for a in chosen {
        let mut m = cfg.model.clone();
        let name = match a {
            Ablation::NoFr => {
                m.enable_fr = false;
                "no-fr"
            }
            Ablation::NoLr => {
                m.enable_lr = false;
                "no-lr"
            }
            Ablation::NoPe => {
                m.enable_pe = false;
                "no-pe"
            }
        };
        runs.push((name.to_string(), m));
    }
    cfg.write_effective(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for (name, model) in runs {
        let sub = RunConfig {
            model: model.clone(),
            out_dir: cfg.out_dir.join(&name),
            ..cfg.clone()
        };
        println!("== {name}");
        let summary = cmd_train(&sub).with_context(|| format!("ablation {name}"))?;
        let h = summary.headline_ap();
        rows.push(AblationRow {
            name,
            enable_fr: model.enable_fr,
            enable_lr: model.enable_lr,
            enable_pe: model.enable_pe,
            mean: h.mean,
            std: h.std,
        });
    }
    write_json(&cfg.out_dir.join("ablation.json"), &rows)?;
    Ok(rows)
}

pub fn cmd_baseline(cfg: &RunConfig, method: Method) -> Result<Summary> {
    let base = load_dataset(cfg)?;
    cfg.write_effective(&cfg.out_dir)?;
    let headline = cfg.model.headline;
    let mut reports = Vec::with_capacity(cfg.n_splits);
    for i in 0..cfg.n_splits {
        let ds = dataset_for_split(&base, cfg, i).with_context(|| format!("split {i}"))?;
        let model_cfg: ModelConfig = cfg.split_model(i);
        let out = run_baseline(&ds, &model_cfg, method).with_context(|| format!("split {i}"))?;
        let dir = split_dir(&cfg.out_dir, i);
        fs::create_dir_all(&dir)?;
        write_split_file(&dir.join("splits.tsv"), ds.split())?;
        write_probabilities(&dir.join("probabilities.csv"), &out.probs)?;
        let report = SplitReport {
            split: i,
            seed: model_cfg.seed,
            method: method.as_str().into(),
            test: evaluate_with(&out.probs, &ds, Role::Test, headline).with_context(|| format!("split {i}"))?,
            val: optional_eval(&out.probs, &ds, Role::Val, headline)?,
            best_epoch: None,
            epochs_run: None,
            best_val_ap: None,
            coverage: out.coverage,
        };
        write_json(&dir.join("report.json"), &report)?;
        match report.coverage {
            Some(c) => println!("split {i}: test AP {:.4}, coverage {c:.4}", report.test.headline_ap()),
            None => println!("split {i}: test AP {:.4}", report.test.headline_ap()),
        }
        reports.push(report);
    }
    let summary = summarize(method.as_str(), headline, &reports);
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    let h = summary.headline_ap();
    println!("mean test AP {:.4} ± {:.4}", h.mean, h.std);
    Ok(summary)
}

fn split_dirs(run: &Path) -> Result<Vec<PathBuf>> {
    if !run.is_dir() {
        bail!("run directory {} does not exist", run.display());
    }
    let mut dirs = Vec::new();
    for i in 0.. {
        let d = split_dir(run, i);
        if !d.is_dir() {
            break;
        }
        dirs.push(d);
    }
    if dirs.is_empty() {
        bail!("no split_<i> directories in {}", run.display());
    }
    Ok(dirs)
}

/// Re-evaluates probability files: either a single `probs` file against the
/// dataset's split, or every split of a finished run.
pub fn cmd_eval(cfg: &RunConfig, run: Option<&Path>, probs: Option<&Path>) -> Result<Vec<EvalReport>> {
    let base = load_dataset(cfg)?;
    let headline = cfg.model.headline;
    let mut reports = Vec::new();
    match (run, probs) {
        (_, Some(path)) => {
            let p = read_probabilities(path)?;
            let r = evaluate_with(&p, &base, Role::Test, headline)?;
            println!("{}: test AP micro {:.4} macro {:.4} samples {:.4}", path.display(), r.ap_micro, r.ap_macro, r.ap_samples);
            reports.push(r);
        }
        (Some(run), None) => {
            for (i, dir) in split_dirs(run)?.iter().enumerate() {
                let roles = read_split_entries(&dir.join("splits.tsv"))?;
                let mut split = Split::unassigned(base.num_nodes());
                for (v, role) in roles {
                    if v >= base.num_nodes() {
                        bail!("split {i}: node {v} outside the dataset");
                    }
                    split.set(v, role);
                }
                let ds = base.clone().with_split(split)?;
                let p = read_probabilities(&dir.join("probabilities.csv"))?;
                let r = evaluate_with(&p, &ds, Role::Test, headline).with_context(|| format!("split {i}"))?;
                println!("split {i}: test AP micro {:.4} macro {:.4} samples {:.4}", r.ap_micro, r.ap_macro, r.ap_samples);
                reports.push(r);
            }
        }
        (None, None) => bail!("eval needs --run or --probs"),
    }
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("eval.json"), &reports)?;
    Ok(reports)
}

/// Re-exports the checkpoint quartiles and the atypical-node report of every
/// split of `run`, or trains first when no run is given.
pub fn cmd_dynamics(cfg: &RunConfig, run: Option<&Path>, k: usize) -> Result<()> {
    let run = match run {
        Some(r) => r.to_path_buf(),
        None => {
            cmd_train(cfg)?;
            cfg.out_dir.clone()
        }
    };
    for (i, dir) in split_dirs(&run)?.iter().enumerate() {
        let path = dir.join("dynamics.csv");
        let log = read_dynamics_csv(&path).with_context(|| format!("split {i}"))?;
        let out = if run == cfg.out_dir { dir.clone() } else { split_dir(&cfg.out_dir, i) };
        fs::create_dir_all(&out)?;
        write_dynamics(&out, &log, k)?;
        println!("split {i}: {} checkpoints, {} nodes", log.checkpoints.len(), log.nodes.len());
    }
    Ok(())
}
