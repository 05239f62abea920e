//! Fusion-layer weights as labelled CSV blocks, one row per label.
//!
//! Each block starts with a line holding only its name (`W_f`, `W_l`,
//! `W_phi`, `b`) followed by `C` comma-separated rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Axis};

use super::config::Variant;
use super::net::MultiFixModel;
use crate::error::{Error, Result};

pub const BLOCK_FR: &str = "W_f";
pub const BLOCK_LR: &str = "W_l";
pub const BLOCK_PE: &str = "W_phi";
pub const BLOCK_BIAS: &str = "b";

/// Named `C × width` slices of the fusion layer, in concatenation order,
/// followed by the bias as a `C × 1` block.
pub fn fusion_blocks(model: &MultiFixModel) -> Result<Vec<(&'static str, Array2<f64>)>> {
    if model.config().variant == Variant::Mlp3 {
        return Err(Error::Unsupported(
            "fusion weights of the three-layer readout are not block-attributable".into(),
        ));
    }
    let layer = &model.readout()[0];
    let widths = model.block_widths();
    let wt = layer.w.t();
    let mut out = Vec::new();
    let mut start = 0;
    for (name, width) in [(BLOCK_FR, widths.fr), (BLOCK_LR, widths.lr), (BLOCK_PE, widths.pe)] {
        if width > 0 {
            out.push((name, wt.slice(ndarray::s![.., start..start + width]).to_owned()));
            start += width;
        }
    }
    out.push((BLOCK_BIAS, layer.b.clone().insert_axis(Axis(1))));
    Ok(out)
}

pub fn export_fusion_weights(model: &MultiFixModel, out_path: &Path) -> Result<()> {
    let mut text = String::new();
    for (name, block) in fusion_blocks(model)? {
        text.push_str(name);
        text.push('\n');
        for row in block.rows() {
            let mut first = true;
            for x in row {
                if !first {
                    text.push(',');
                }
                first = false;
                write!(text, "{x}").unwrap();
            }
            text.push('\n');
        }
    }
    fs::write(out_path, text).map_err(|e| Error::io(out_path, e))
}

/// Parses a file written by [`export_fusion_weights`].
pub fn read_fusion_weights(path: &Path) -> Result<Vec<(String, Array2<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut blocks: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with(|c: char| c.is_ascii_alphabetic()) && !line.contains(',') && line.parse::<f64>().is_err() {
            blocks.push((line.to_string(), Vec::new()));
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        match blocks.last_mut() {
            Some((_, rows)) => rows.push(row),
            None => return Err(parse_err(i + 1, "values before the first block name".into())),
        }
    }
    blocks
        .into_iter()
        .map(|(name, rows)| {
            let cols = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != cols) {
                return Err(Error::shape(format!("ragged rows in block {name}")));
            }
            let n = rows.len();
            let m = Array2::from_shape_vec((n, cols), rows.concat()).expect("rectangular");
            Ok((name, m))
        })
        .collect()
}

/// Loads exported blocks back into the fusion layer of `model`.
pub fn import_fusion_weights(model: &mut MultiFixModel, path: &Path) -> Result<()> {
    let blocks = read_fusion_weights(path)?;
    let expected: Vec<(&str, (usize, usize))> = fusion_blocks(model)?
        .iter()
        .map(|(n, m)| (*n, m.dim()))
        .collect();
    let got: Vec<(&str, (usize, usize))> = blocks.iter().map(|(n, m)| (n.as_str(), m.dim())).collect();
    if got != expected {
        return Err(Error::Compatibility(format!(
            "exported blocks {got:?} do not fit model blocks {expected:?}"
        )));
    }
    let (bias, weights) = blocks.split_last().expect("bias block always present");
    let views: Vec<_> = weights.iter().map(|(_, m)| m.view()).collect();
    let wt = concatenate(Axis(1), &views).map_err(|e| Error::shape(e.to_string()))?;
    let layer = &mut model.readout_mut()[0];
    layer.w = wt.t().to_owned();
    layer.b = Array1::from_iter(bias.1.iter().copied());
    Ok(())
}
