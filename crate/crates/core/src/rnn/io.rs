//! Portable binary model format.
//!
//! Layout (all integers little endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "RNNMDL\x00\x01"
//! 8       4     format version (u32) = 1
//! 12      1     cell kind (0 srnn, 1 lstm, 2 gru)
//! 13      1     bidirectional flag
//! 14      1     sigma-head flag
//! 15      1     reserved (0)
//! 16      8     input_dim (u64)
//! 24      8     hidden_dim (u64)
//! 32      8     out_dim (u64)
//! 40      -     parameter tensors, f64 little endian, row major
//! ```
//!
//! Tensor order: for the forward cell, then the backward cell when present,
//! each gate in parameter order emits `w_x`, `w_h`, `b`; the readout weight
//! and bias close the file. Gate order: SRNN `[h]`; LSTM `[forget, input,
//! candidate, output]`; GRU `[reset, update, candidate]`.

use super::cell::{CellKind, CellParams};
use super::model::NetworkModel;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: [u8; 8] = *b"RNNMDL\x00\x01";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported format version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("file truncated while reading parameters")]
    Truncated,
    #[error("trailing bytes after parameters")]
    TrailingBytes,
}

/// Write a model to `path` in the binary format above.
pub fn save_model(model: &NetworkModel, path: &Path) -> Result<(), ModelIoError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(model.cell.kind.tag());
    buf.push(u8::from(model.bidirectional()));
    buf.push(u8::from(model.sigma_head));
    buf.push(0);
    buf.extend_from_slice(&(model.input_dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(model.hidden_dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(model.out_dim() as u64).to_le_bytes());
    model.for_each_tensor(|t| {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    });
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Read a model back; the round trip is bit exact.
pub fn load_model(path: &Path) -> Result<NetworkModel, ModelIoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 40 {
        return Err(ModelIoError::Truncated);
    }
    if bytes[0..8] != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(ModelIoError::UnsupportedVersion(version));
    }
    let kind = CellKind::from_tag(bytes[12])
        .ok_or_else(|| ModelIoError::CorruptHeader(format!("unknown cell kind {}", bytes[12])))?;
    let bidirectional = match bytes[13] {
        0 => false,
        1 => true,
        other => return Err(ModelIoError::CorruptHeader(format!("bad direction flag {other}"))),
    };
    let sigma_head = match bytes[14] {
        0 => false,
        1 => true,
        other => return Err(ModelIoError::CorruptHeader(format!("bad head flag {other}"))),
    };
    let read_u64 = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
    let input_dim = read_u64(16);
    let hidden_dim = read_u64(24);
    let out_dim = read_u64(32);
    if input_dim == 0 || hidden_dim == 0 || out_dim == 0 {
        return Err(ModelIoError::CorruptHeader("zero dimension".into()));
    }

    let mut model = NetworkModel {
        cell: CellParams::zeros(kind, input_dim, hidden_dim),
        cell_bwd: bidirectional.then(|| CellParams::zeros(kind, input_dim, hidden_dim)),
        w_out: ndarray::Array2::zeros((
            out_dim,
            if bidirectional { 2 * hidden_dim } else { hidden_dim },
        )),
        b_out: ndarray::Array1::zeros(out_dim),
        sigma_head,
    };
    let mut off = 40usize;
    let mut short = false;
    model.for_each_tensor_mut(|t| {
        for v in t.iter_mut() {
            if off + 8 > bytes.len() {
                short = true;
                return;
            }
            *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
        }
    });
    if short {
        return Err(ModelIoError::Truncated);
    }
    if off != bytes.len() {
        return Err(ModelIoError::TrailingBytes);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (kind, bidir) in [(CellKind::Gru, false), (CellKind::Lstm, true), (CellKind::Srnn, true)] {
            let model = NetworkModel::new(kind, 5, 3, 4, bidir, &mut stream_rng(31, &[bidir as u64]));
            let path = dir.path().join(format!("m-{kind}-{bidir}.rnn"));
            save_model(&model, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(model, back);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = NetworkModel::new(CellKind::Gru, 4, 3, 2, false, &mut stream_rng(32, &[]));
        let path = dir.path().join("m.rnn");
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::Truncated)));
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::Truncated)));
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = NetworkModel::new(CellKind::Gru, 4, 3, 2, false, &mut stream_rng(33, &[]));
        let path = dir.path().join("m.rnn");
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::BadMagic)));
        bytes[8] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::UnsupportedVersion(_))));
    }
}
