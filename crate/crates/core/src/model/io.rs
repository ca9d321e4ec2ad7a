//! Weight file container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     4 bytes  "SCWT"
//! version   u32
//! hdr_len   u32
//! header    hdr_len bytes of JSON: {"config": ModelConfig, "tensors": [{"name", "shape"}]}
//! payload   for each header tensor, in order: product(shape) × f32, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SCWT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorHeader>,
}

/// Writes `params` with every value rounded to `f32`.
pub fn write_weights<W: Write>(params: &ModelParams, mut w: W) -> Result<()> {
    let tensors = params.tensors();
    let header = Header {
        config: params.config,
        tensors: tensors.iter().map(|t| TensorHeader { name: t.name.clone(), shape: t.shape.clone() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for t in &tensors {
        for &v in t.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_weights<R: Read>(mut r: R) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::WeightFormat("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::WeightFormat(format!("unsupported format version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;

    let mut params = ModelParams::zeros(&header.config)?;
    let expected: Vec<(String, Vec<usize>)> =
        params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if expected.len() != header.tensors.len() {
        return Err(Error::WeightFormat(format!(
            "expected {} tensors, header lists {}",
            expected.len(),
            header.tensors.len()
        )));
    }
    for ((name, shape), h) in expected.iter().zip(&header.tensors) {
        if name != &h.name || shape != &h.shape {
            return Err(Error::WeightFormat(format!(
                "tensor `{}` {:?} does not match expected `{}` {:?}",
                h.name, h.shape, name, shape
            )));
        }
    }
    let mut buf = [0u8; 4];
    for dst in params.tensors_mut() {
        for v in dst.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| Error::WeightFormat("payload truncated".into()))?;
            *v = f64::from(f32::from_le_bytes(buf));
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::WeightFormat("trailing bytes after payload".into()));
    }
    Ok(params)
}

pub fn save_weights(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    write_weights(params, BufWriter::new(File::create(path)?))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_weights(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ModelParams::init(&ModelConfig::with_d_model(8), 3).unwrap();
        let mut bytes = Vec::new();
        write_weights(&p, &mut bytes).unwrap();
        let q = read_weights(bytes.as_slice()).unwrap();
        assert!(p.bitwise_eq(&q));
        let mut again = Vec::new();
        write_weights(&q, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupt_files_rejected() {
        let p = ModelParams::init(&ModelConfig::with_d_model(4), 3).unwrap();
        let mut bytes = Vec::new();
        write_weights(&p, &mut bytes).unwrap();
        assert!(read_weights(&bytes[..bytes.len() - 2]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_weights(extra.as_slice()).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_weights(bad.as_slice()).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(read_weights(v2.as_slice()).is_err());
    }
}
