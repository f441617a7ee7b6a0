use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpParameters, NetworkConfig, Normalization};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SWPN";
const VERSION: u32 = 1;

/// A trained network with everything needed to evaluate it.
///
/// File layout (little-endian): magic `SWPN`, `u32` version, `u64` header
/// length, a UTF-8 JSON header with `config`, `normalization`, `seed`,
/// `epoch` and `n_params`, then `n_params` `f64` values in
/// [`MlpParameters::flat`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub normalization: Normalization,
    pub seed: u64,
    pub epoch: usize,
    pub params: MlpParameters,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    normalization: Normalization,
    seed: u64,
    epoch: usize,
    n_params: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            config: self.config,
            normalization: self.normalization.clone(),
            seed: self.seed,
            epoch: self.epoch,
            n_params: self.params.n_params(),
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.params.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.params.flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |why: String| Error::format(origin, why);
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).unwrap_or_default();
        if body.len() < hlen {
            return Err(bad("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        header.config.validate()?;
        let values = &body[hlen..];
        if values.len() != 8 * header.n_params || header.n_params != header.config.n_params() {
            return Err(bad("parameter block does not match the header".into()));
        }
        let flat: Vec<f64> = values
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let params = MlpParameters::from_flat(&header.config, &flat)?;
        header
            .normalization
            .validate(header.config.input_dim, header.config.output_dim)?;
        Ok(Self {
            config: header.config,
            normalization: header.normalization,
            seed: header.seed,
            epoch: header.epoch,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{forward, init_params};
    use super::*;
    use ndarray::Array2;

    #[test]
    fn reload_reproduces_outputs_exactly() {
        let config = NetworkConfig::new(2, 8);
        let labels = Array2::from_shape_fn((7, 10), |(i, j)| (i as f64 * 0.37 + j as f64).sin());
        let ck = Checkpoint {
            config,
            normalization: Normalization::from_labels(&labels),
            seed: 42,
            epoch: 17,
            params: init_params(&config, 42).unwrap(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.ckpt");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        let a = forward(&ck.params, &ck.normalization, [0.0, 2.0]).unwrap();
        let b = forward(&back.params, &back.normalization, [0.0, 2.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"SWPN\x01\0\0\0").unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(Error::Format { .. })));
        assert!(matches!(Checkpoint::load(dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
