//! Binary checkpoints: `GMFX1`, a length-prefixed JSON header, then
//! length-prefixed blobs of little-endian `f64` with declared shapes.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::{Layer, MultiFixModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"GMFX1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    num_labels: usize,
    feature_dim: usize,
    feature_transform: bool,
    readout_layers: usize,
    positional: bool,
}

fn put_u32(buf: &mut Vec<u8>, x: usize) -> Result<()> {
    let x = u32::try_from(x).map_err(|_| Error::Checkpoint(format!("{x} does not fit in u32")))?;
    buf.extend_from_slice(&x.to_le_bytes());
    Ok(())
}

fn put_blob(buf: &mut Vec<u8>, rows: usize, cols: usize, data: impl Iterator<Item = f64>) -> Result<()> {
    put_u32(buf, rows)?;
    put_u32(buf, cols)?;
    for x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

fn put_layer(buf: &mut Vec<u8>, l: &Layer) -> Result<()> {
    put_blob(buf, l.w.nrows(), l.w.ncols(), l.w.iter().copied())?;
    put_blob(buf, 1, l.b.len(), l.b.iter().copied())
}

/// Serialized checkpoint bytes.
pub fn to_bytes(model: &MultiFixModel) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config().clone(),
        num_labels: model.num_labels(),
        feature_dim: model.feature_dim(),
        feature_transform: model.feature_transform().is_some(),
        readout_layers: model.readout().len(),
        positional: model.positional().is_some(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(64 + json.len());
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, json.len())?;
    buf.extend_from_slice(&json);
    let blobs = 2 * (header.feature_transform as usize + header.readout_layers) + header.positional as usize;
    put_u32(&mut buf, blobs)?;
    if let Some(t) = model.feature_transform() {
        put_layer(&mut buf, t)?;
    }
    for l in model.readout() {
        put_layer(&mut buf, l)?;
    }
    if let Some(phi) = model.positional() {
        put_blob(&mut buf, phi.nrows(), phi.ncols(), phi.iter().copied())?;
    }
    Ok(buf)
}

pub fn save_checkpoint(model: &MultiFixModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn blob(&mut self) -> Result<Array2<f64>> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let len = rows
            .checked_mul(cols)
            .and_then(|k| k.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint("blob size overflows".into()))?;
        let data: Vec<f64> = self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }

    fn layer(&mut self, fan_in: usize, fan_out: usize) -> Result<Layer> {
        let w = self.blob()?;
        let b = self.blob()?;
        if w.dim() != (fan_in, fan_out) || b.dim() != (1, fan_out) {
            return Err(Error::Checkpoint(format!(
                "layer blob shapes {:?}/{:?} do not match {fan_in}x{fan_out}",
                w.dim(),
                b.dim()
            )));
        }
        Ok(Layer {
            w,
            b: Array1::from_iter(b),
        })
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<MultiFixModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let len = r.u32()?;
    let header: Header = serde_json::from_slice(r.take(len)?)?;
    let blobs = r.u32()?;
    let expected =
        2 * (header.feature_transform as usize + header.readout_layers) + header.positional as usize;
    if blobs != expected {
        return Err(Error::Checkpoint(format!("expected {expected} blobs, found {blobs}")));
    }
    // A fresh model fixes every layer shape; the blobs then overwrite it.
    let mut model = MultiFixModel::new(header.config.clone(), header.num_labels, header.feature_dim)?;
    if model.feature_transform().is_some() != header.feature_transform
        || model.readout().len() != header.readout_layers
    {
        return Err(Error::Checkpoint("header disagrees with config".into()));
    }
    if let Some(t) = model.feature_transform.as_mut() {
        *t = r.layer(t.fan_in(), t.fan_out())?;
    }
    for l in model.readout.iter_mut() {
        *l = r.layer(l.fan_in(), l.fan_out())?;
    }
    if header.positional {
        let phi = r.blob()?;
        if phi.ncols() != header.config.pe_dim {
            return Err(Error::Checkpoint("positional blob width differs from pe_dim".into()));
        }
        model.positional = Some(phi);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<MultiFixModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Variant;

    #[test]
    fn round_trip_all_variants() {
        for variant in [Variant::Linear, Variant::Mlp1, Variant::Mlp3] {
            let cfg = ModelConfig {
                variant,
                hidden_dim: 4,
                pe_dim: 3,
                seed: 9,
                ..Default::default()
            };
            let mut m = MultiFixModel::new(cfg, 2, 5).unwrap();
            m.set_positional(Some(Array2::from_shape_fn((6, 3), |(i, j)| i as f64 - 0.1 * j as f64)));
            let bytes = to_bytes(&m).unwrap();
            assert_eq!(&bytes[..5], b"GMFX1");
            assert_eq!(from_bytes(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn rejects_corruption() {
        let m = MultiFixModel::new(ModelConfig::default(), 2, 3).unwrap();
        let bytes = to_bytes(&m).unwrap();
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(from_bytes(&long), Err(Error::Checkpoint(_))));
    }
}
