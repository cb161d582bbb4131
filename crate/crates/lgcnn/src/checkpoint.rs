//! Model checkpoints.
//!
//! Layout (little endian): the magic `LGCK`, a `u32` format version, the
//! SHA-256 of the canonical model spec text, a `u64` length and the spec
//! text itself, a `u64` tensor count, then every persisted tensor in
//! declaration order (see [`Network::state`]).

use std::fs;
use std::path::Path;

use lgcnn_core::model::{ModelSpec, Network};
use lgcnn_core::Tensor;
use sha2::{Digest, Sha256};

use crate::archive::write_atomic;
use crate::binary::Reader;
use crate::error::{AppError, AppResult};

const MAGIC: &[u8; 4] = b"LGCK";
const VERSION: u32 = 1;

pub fn spec_hash(spec: &ModelSpec) -> [u8; 32] {
    Sha256::digest(spec.to_string().as_bytes()).into()
}

pub fn encode(net: &Network) -> Vec<u8> {
    let text = net.spec().to_string();
    let state = net.state();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&spec_hash(net.spec()));
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(state.len() as u64).to_le_bytes());
    for t in state {
        t.write_le(&mut out);
    }
    out
}

fn corrupt(msg: impl Into<String>) -> AppError {
    AppError::input(format!("corrupt checkpoint: {}", msg.into()))
}

/// Parses a checkpoint completely before building anything.
pub fn decode(bytes: &[u8]) -> AppResult<Network> {
    let mut r = Reader::new(bytes);
    let truncated = || corrupt("truncated");
    if r.take(4).ok_or_else(truncated)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let hash: [u8; 32] = r.take(32).ok_or_else(truncated)?.try_into().unwrap();
    let len = r.u64().ok_or_else(truncated)? as usize;
    let text = r.take(len).ok_or_else(truncated)?;
    let text = std::str::from_utf8(text).map_err(|_| corrupt("spec is not UTF-8"))?;
    let spec = ModelSpec::parse(text)?;
    if spec_hash(&spec) != hash {
        return Err(corrupt("embedded spec does not match its hash"));
    }
    let count = r.u64().ok_or_else(truncated)? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (t, used) = Tensor::<f32>::read_le(r.rest()).map_err(|e| corrupt(e.to_string()))?;
        r.take(used);
        tensors.push(t);
    }
    if !r.at_end() {
        return Err(corrupt("trailing bytes"));
    }
    let mut net = Network::build(&spec, 0)?;
    net.load_state(tensors).map_err(|e| corrupt(e.to_string()))?;
    Ok(net)
}

pub fn save(net: &Network, path: &Path) -> AppResult<()> {
    write_atomic(path, &encode(net))
}

pub fn load(path: &Path) -> AppResult<Network> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes).map_err(|e| AppError::input(format!("{}: {e}", path.display())))
}

/// Loads into an existing network, which must have the same spec. On any
/// failure `net` is left untouched.
pub fn load_into(path: &Path, net: &mut Network) -> AppResult<()> {
    let loaded = load(path)?;
    if spec_hash(loaded.spec()) != spec_hash(net.spec()) {
        return Err(AppError::input(format!(
            "{}: checkpoint was written for model `{}`, not `{}` (spec hash mismatch)",
            path.display(),
            loaded.spec().name,
            net.spec().name
        )));
    }
    *net = loaded;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use lgcnn_core::model::{preset_with, GradTape, PresetOptions};

    fn small(seed: u64) -> Network {
        let opts = PresetOptions { classes: 3, height: 6, width: 8, channel_divisor: 8 };
        Network::build(&preset_with("lgcnn-2", opts).unwrap(), seed).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut a = small(1);
        let x = Tensor::from_vec(&[4, 1, 6, 8], (0..192).map(|i| (i % 7) as f32 - 3.0).collect()).unwrap();
        a.forward_train(&x, &mut GradTape::new()).unwrap();
        let b = decode(&encode(&a)).unwrap();
        assert!(a.state().iter().zip(b.state()).all(|(x, y)| **x == *y));
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    #[test]
    fn truncated_file_leaves_model_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let bytes = encode(&small(2));
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let mut net = small(3);
        let before: Vec<Tensor> = net.state().into_iter().cloned().collect();
        assert!(load_into(&path, &mut net).is_err());
        assert!(net.state().iter().zip(&before).all(|(x, y)| *x == y));
    }

    #[test]
    fn spec_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&small(2), &path).unwrap();
        let mut other = Network::build(&lgcnn_core::model::preset("cnn-1").unwrap(), 0).unwrap();
        assert!(load_into(&path, &mut other).is_err());
    }
}
