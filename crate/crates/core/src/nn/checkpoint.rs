//! Layout: magic line, little-endian `u32` metadata length, JSON metadata,
//! then every parameter tensor as little-endian `f64` in declared order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Architecture, BraidEncoder, Encoder, InputEncoding, NnError};

pub const CHECKPOINT_MAGIC: &[u8] = b"bf-ckpt-1\n";

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    input: InputEncoding,
    architecture: Architecture,
    shapes: Vec<Vec<usize>>,
    extra: serde_json::Value,
}

/// Serializes `model`; `extra` is stored verbatim in the metadata.
pub fn write_checkpoint<W: Write>(model: &BraidEncoder, extra: &serde_json::Value, mut out: W) -> Result<(), NnError> {
    let params = model.net.parameters();
    let meta = Meta {
        format: "bf-ckpt-1".into(),
        input: model.input.clone(),
        architecture: model.net.architecture(),
        shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
        extra: extra.clone(),
    };
    let json = serde_json::to_vec(&meta)?;
    let len = u32::try_from(json.len()).map_err(|_| NnError::Checkpoint("metadata too large".into()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(&json)?;
    for p in &params {
        for v in p.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(BraidEncoder, serde_json::Value), NnError> {
    let mut magic = vec![0u8; CHECKPOINT_MAGIC.len()];
    input.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("not a bf-ckpt-1 file".into()));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let meta: Meta = serde_json::from_slice(&json)?;

    // Initial values are irrelevant; every tensor is overwritten below.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = Encoder::new(&meta.architecture, &mut rng);
    let mut tensors = Vec::with_capacity(meta.shapes.len());
    for shape in &meta.shapes {
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        input.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(
            ArrayD::from_shape_vec(IxDyn(shape), data).map_err(|e| NnError::Checkpoint(e.to_string()))?,
        );
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    net.set_parameters(&tensors)?;
    if net.input_dim() != meta.input.dim() {
        return Err(NnError::Checkpoint("input encoding does not match the network".into()));
    }
    Ok((BraidEncoder { input: meta.input, net }, meta.extra))
}

pub fn save_checkpoint(model: &BraidEncoder, extra: &serde_json::Value, path: &Path) -> Result<(), NnError> {
    write_checkpoint(model, extra, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<(BraidEncoder, serde_json::Value), NnError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
