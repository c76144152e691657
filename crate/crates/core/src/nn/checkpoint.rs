//! Model checkpoint files.
//!
//! A checkpoint is a single JSON document:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "spec": { "layer_widths": [2, 16, 2], "activation": "relu" },
//!   "seed": 17,
//!   "config_fingerprint": "…sha256…",
//!   "params": { "layers": [ { "weights": […], "bias": […] }, … ] }
//! }
//! ```
//!
//! Weights are row-major `(out_dim, in_dim)` flat arrays. Values are written
//! as decimal JSON numbers; serde_json emits the shortest representation that
//! round-trips, so reloading reproduces every `f64` bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpParams, MlpSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub spec: MlpSpec,
    pub seed: u64,
    pub config_fingerprint: String,
    pub params: MlpParams,
}

pub fn save_checkpoint(path: &Path, checkpoint: &ModelCheckpoint) -> Result<()> {
    let body = serde_json::to_string_pretty(checkpoint)?;
    fs::write(path, body)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let body = fs::read_to_string(path)?;
    let ckpt: ModelCheckpoint = serde_json::from_str(&body)?;
    if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Malformed {
            path: path.display().to_string(),
            detail: format!("unsupported checkpoint version {}", ckpt.format_version),
        });
    }
    ckpt.spec.validate()?;
    ckpt.params.validate_for(&ckpt.spec)?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let spec = MlpSpec::new(vec![2, 5, 3], Activation::Relu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let params = MlpParams::glorot_init(&spec, &mut rng);
        let ckpt = ModelCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            spec,
            seed: 99,
            config_fingerprint: "abc".into(),
            params: params.clone(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params, params);
        assert_eq!(
            loaded.params.content_fingerprint(),
            params.content_fingerprint()
        );
    }
}
