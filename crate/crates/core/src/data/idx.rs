use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{Example, ImageShape};
use crate::{Error, Result};

const TYPE_U8: u8 = 0x08;
const TYPE_F32: u8 = 0x0D;

struct IdxArray {
    dims: Vec<usize>,
    values: IdxValues,
}

enum IdxValues {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// Reads the whole file, transparently gunzipping when it starts with the gzip magic.
fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(format!("{}: bad magic number", path.display())));
    }
    let dtype = bytes[2];
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(Error::Format(format!("{}: zero dimensions", path.display())));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Format(format!("{}: truncated header", path.display())));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let payload = &bytes[header..];
    let values = match dtype {
        TYPE_U8 => {
            if payload.len() != count {
                return Err(Error::Format(format!(
                    "{}: expected {count} bytes of payload, found {}",
                    path.display(),
                    payload.len()
                )));
            }
            IdxValues::U8(payload.to_vec())
        }
        TYPE_F32 => {
            if payload.len() != 4 * count {
                return Err(Error::Format(format!(
                    "{}: expected {} bytes of payload, found {}",
                    path.display(),
                    4 * count,
                    payload.len()
                )));
            }
            IdxValues::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported element type 0x{other:02x}",
                path.display()
            )))
        }
    };
    Ok(IdxArray { dims, values })
}

/// Loads an IDX image file (N×H×W or N×C×H×W) and its IDX label file.
///
/// Unsigned-byte pixels are divided by 255; float pixels are min-max scaled
/// over the whole file. Instance ids are record positions.
pub fn load_idx_dataset(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = parse_idx(&read_file(images_path)?, images_path)?;
    let labels = parse_idx(&read_file(labels_path)?, labels_path)?;

    let shape = match images.dims.as_slice() {
        [_, h, w] => ImageShape::new(1, *h, *w),
        [_, c, h, w] => ImageShape::new(*c, *h, *w),
        dims => {
            return Err(Error::Format(format!(
                "{}: image file must have 3 or 4 dimensions, found {}",
                images_path.display(),
                dims.len()
            )))
        }
    };
    let n = images.dims[0];
    if labels.dims.len() != 1 {
        return Err(Error::Format(format!(
            "{}: label file must be one-dimensional",
            labels_path.display()
        )));
    }
    if labels.dims[0] != n {
        return Err(Error::Consistency(format!(
            "{n} images but {} labels",
            labels.dims[0]
        )));
    }
    let labels: Vec<u32> = match labels.values {
        IdxValues::U8(v) => v.into_iter().map(u32::from).collect(),
        IdxValues::F32(_) => {
            return Err(Error::Format(format!(
                "{}: labels must be unsigned bytes",
                labels_path.display()
            )))
        }
    };

    let pixels: Vec<f32> = match images.values {
        IdxValues::U8(v) => v.into_iter().map(|b| f32::from(b) / 255.0).collect(),
        IdxValues::F32(v) => {
            let lo = v.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let span = hi - lo;
            v.into_iter()
                .map(|x| if span > 0.0 { (x - lo) / span } else { 0.0 })
                .collect()
        }
    };

    let len = shape.len();
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let start = i * len;
            Example::new(i as u64, shape, pixels[start..start + len].to_vec(), Some(label))
        })
        .collect())
}

/// Writes examples as unsigned-byte IDX files (pixels quantized to 0..=255).
///
/// Single-channel images use the 3-dimensional layout, others the 4-dimensional one.
pub fn write_idx_dataset(
    examples: &[Example],
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let shape = examples
        .first()
        .map(|e| e.shape)
        .unwrap_or(ImageShape::new(1, 0, 0));
    let n = examples.len() as u32;

    let mut img = Vec::with_capacity(20 + examples.len() * shape.len());
    if shape.channels == 1 {
        img.extend_from_slice(&[0, 0, TYPE_U8, 3]);
        for d in [n, shape.height as u32, shape.width as u32] {
            img.extend_from_slice(&d.to_be_bytes());
        }
    } else {
        img.extend_from_slice(&[0, 0, TYPE_U8, 4]);
        for d in [n, shape.channels as u32, shape.height as u32, shape.width as u32] {
            img.extend_from_slice(&d.to_be_bytes());
        }
    }
    let mut lab = vec![0, 0, TYPE_U8, 1];
    lab.extend_from_slice(&n.to_be_bytes());
    for e in examples {
        if e.shape != shape {
            return Err(Error::Consistency("examples have differing shapes".into()));
        }
        img.extend(e.pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
        let label = e
            .label
            .ok_or_else(|| Error::Input(format!("instance {} has no label", e.id)))?;
        let label = u8::try_from(label)
            .map_err(|_| Error::Input(format!("label {label} does not fit in a byte")))?;
        lab.push(label);
    }

    for (path, bytes) in [(images_path, img), (labels_path, lab)] {
        File::create(path)
            .and_then(|f| {
                let mut w = BufWriter::new(f);
                w.write_all(&bytes)?;
                w.flush()
            })
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
