//! Per-node training-loss checkpoints and their export.
//!
//! A training run records the loss of every training node at each epoch;
//! [`DynamicsLog::from_history`] keeps 30 uniformly spaced epochs (or every
//! epoch for shorter runs). The CSV export is plain enough to feed any
//! box-plot tool.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of checkpoints kept from runs of at least that many epochs.
pub const NUM_CHECKPOINTS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// 1-based epoch.
    pub epoch: usize,
    /// Loss of each node in [`DynamicsLog::nodes`] order.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicsLog {
    pub nodes: Vec<usize>,
    pub checkpoints: Vec<Checkpoint>,
}

/// `⌊i·E/k⌋` for `i = 1..=k` when `E ≥ k`, else `1..=E`.
pub fn checkpoint_epochs(completed: usize, k: usize) -> Vec<usize> {
    if completed < k {
        return (1..=completed).collect();
    }
    (1..=k).map(|i| i * completed / k).collect()
}

impl DynamicsLog {
    /// Samples checkpoints from a full per-epoch history (`history[e - 1]` is epoch `e`).
    pub fn from_history(nodes: Vec<usize>, history: &[Vec<f64>]) -> Self {
        let checkpoints = checkpoint_epochs(history.len(), NUM_CHECKPOINTS)
            .into_iter()
            .map(|epoch| Checkpoint {
                epoch,
                losses: history[epoch - 1].clone(),
            })
            .collect();
        Self { nodes, checkpoints }
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    /// Loss trajectory of the node at position `i` of [`Self::nodes`].
    pub fn trajectory(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.checkpoints.iter().map(move |c| (c.epoch, c.losses[i]))
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub checkpoint_index: usize,
    pub epoch: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn summarize(log: &DynamicsLog) -> Vec<CheckpointSummary> {
    log.checkpoints
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.losses.is_empty())
        .map(|(i, c)| {
            let mut sorted = c.losses.clone();
            sorted.sort_by(f64::total_cmp);
            CheckpointSummary {
                checkpoint_index: i,
                epoch: c.epoch,
                min: sorted[0],
                q1: quantile(&sorted, 0.25),
                median: quantile(&sorted, 0.5),
                q3: quantile(&sorted, 0.75),
                max: sorted[sorted.len() - 1],
                mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            }
        })
        .collect()
}

/// Paths written by [`export_dynamics`].
#[derive(Debug, Clone)]
pub struct DynamicsFiles {
    pub data: PathBuf,
    pub summary: PathBuf,
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "dynamics".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_summary.csv"))
}

/// Writes `checkpoint_index,epoch,node_id,loss` rows to `out_path` and the
/// per-checkpoint quartiles to `<stem>_summary.csv` next to it.
pub fn export_dynamics(log: &DynamicsLog, out_path: &Path) -> Result<DynamicsFiles> {
    if log.is_empty() {
        return Err(Error::arg("dynamics log has no checkpoints"));
    }
    let io = |p: &Path, e| Error::io(p, e);
    let summary = summary_path(out_path);

    let file = File::create(out_path).map_err(|e| io(out_path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "checkpoint_index,epoch,node_id,loss").map_err(|e| io(out_path, e))?;
    for (i, c) in log.checkpoints.iter().enumerate() {
        for (node, loss) in log.nodes.iter().zip(&c.losses) {
            writeln!(w, "{i},{},{node},{loss}", c.epoch).map_err(|e| io(out_path, e))?;
        }
    }
    w.flush().map_err(|e| io(out_path, e))?;

    let file = File::create(&summary).map_err(|e| io(&summary, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "checkpoint_index,epoch,min,q1,median,q3,max,mean").map_err(|e| io(&summary, e))?;
    for s in summarize(log) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.checkpoint_index, s.epoch, s.min, s.q1, s.median, s.q3, s.max, s.mean
        )
        .map_err(|e| io(&summary, e))?;
    }
    w.flush().map_err(|e| io(&summary, e))?;

    Ok(DynamicsFiles {
        data: out_path.to_path_buf(),
        summary,
    })
}

/// Parses a data CSV written by [`export_dynamics`].
pub fn read_dynamics_csv(path: &Path) -> Result<DynamicsLog> {
    #[derive(Deserialize)]
    struct Row {
        checkpoint_index: usize,
        epoch: usize,
        node_id: usize,
        loss: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut log = DynamicsLog::default();
    for row in reader.deserialize::<Row>() {
        let row = row?;
        if row.checkpoint_index == log.checkpoints.len() {
            log.checkpoints.push(Checkpoint {
                epoch: row.epoch,
                losses: Vec::new(),
            });
        } else if row.checkpoint_index + 1 != log.checkpoints.len() {
            return Err(Error::arg("dynamics rows are not grouped by checkpoint"));
        }
        let first = log.checkpoints.len() == 1;
        let cp = log.checkpoints.last_mut().unwrap();
        if first {
            log.nodes.push(row.node_id);
        } else if log.nodes.get(cp.losses.len()) != Some(&row.node_id) {
            return Err(Error::arg("node order differs between checkpoints"));
        }
        cp.losses.push(row.loss);
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtypicalNode {
    pub node: usize,
    pub final_loss: f64,
    /// Least-squares slope of loss against epoch.
    pub slope: f64,
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// The `k` training nodes with the largest final-checkpoint loss, in
/// descending order of that loss, each with its loss trend.
pub fn atypical_node_report(log: &DynamicsLog, k: usize) -> Result<Vec<AtypicalNode>> {
    if log.checkpoints.len() < 2 {
        return Err(Error::arg("need at least two checkpoints"));
    }
    if k > log.nodes.len() {
        return Err(Error::arg(format!(
            "asked for {k} atypical nodes but only {} were tracked",
            log.nodes.len()
        )));
    }
    let last = log.checkpoints.last().unwrap();
    let mut report: Vec<AtypicalNode> = log
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &node)| {
            let pts: Vec<(f64, f64)> = log.trajectory(i).map(|(e, l)| (e as f64, l)).collect();
            AtypicalNode {
                node,
                final_loss: last.losses[i],
                slope: ls_slope(&pts),
            }
        })
        .collect();
    report.sort_by(|a, b| {
        b.final_loss
            .total_cmp(&a.final_loss)
            .then(a.node.cmp(&b.node))
    });
    report.truncate(k);
    Ok(report)
}
