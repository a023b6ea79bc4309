use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::centers::ClassCenters;
use super::model::{Model, Output};
use super::network::{Arch, Network};
use crate::data::ImageShape;
use crate::{ClassId, Error, Result};

const MAGIC: &[u8; 8] = b"S2OSCCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    arch: Arch,
    input: ImageShape,
    outputs: Vec<Output>,
    n_params: usize,
    centers: Option<CentersHeader>,
}

#[derive(Serialize, Deserialize)]
struct CentersHeader {
    classes: Vec<ClassId>,
    dim: usize,
    source_model: String,
}

/// Writes `magic | version u32 | header length u32 | JSON header | f32 LE params | f32 LE centers`.
pub fn save_checkpoint(path: &Path, model: &Model, centers: Option<&ClassCenters>) -> Result<()> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        arch: model.net.arch().clone(),
        input: model.net.input_shape(),
        outputs: model.outputs.clone(),
        n_params: model.net.n_params(),
        centers: centers.map(|c| CentersHeader {
            classes: c.centers.keys().copied().collect(),
            dim: c.dim(),
            source_model: c.source_model.clone(),
        }),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 4 * model.net.n_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in model.net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(c) = centers {
        for v in c.centers.values().flatten() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Checkpoint("truncated checkpoint".into()));
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

fn floats(buf: &mut &[u8], n: usize) -> Result<Vec<f32>> {
    Ok(take(buf, 4 * n)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, Option<ClassCenters>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut buf = bytes.as_slice();
    if take(&mut buf, 8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(take(&mut buf, 4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let len = u32::from_le_bytes(take(&mut buf, 4)?.try_into().expect("4 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(&mut buf, len)?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let params = floats(&mut buf, header.n_params)?;
    let net = Network::from_parts(header.arch, header.input, header.outputs.len(), params)?;
    let model = Model {
        net,
        outputs: header.outputs,
    };
    let centers = match header.centers {
        Some(h) => {
            let mut centers = BTreeMap::new();
            for class in h.classes {
                centers.insert(class, floats(&mut buf, h.dim)?);
            }
            Some(ClassCenters {
                centers,
                source_model: h.source_model,
            })
        }
        None => None,
    };
    if !buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    Ok((model, centers))
}
