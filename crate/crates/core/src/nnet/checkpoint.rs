//! Checkpoints: a flat little-endian `f32` binary (parameters, then Adam first
//! and second moments) behind a short header, plus a JSON manifest next to it
//! (`<path>.json`) with layer names, shapes, optimizer state and configs.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AdamState, Model, NetConfig, ParamLayer, TrainConfig};
use crate::error::{Error, Result};
use crate::raster::RasterConfig;

pub const CHECKPOINT_VERSION: u32 = 2;
const MAGIC: &[u8; 4] = b"HPCK";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
    pub raster: RasterConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    n_params: usize,
    in_channels: usize,
    net: NetConfig,
    layers: Vec<ParamLayer>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    raster: RasterConfig,
    train: TrainConfig,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = ck.model.n_params();
    let mut buf = Vec::with_capacity(16 + 12 * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    for v in ck.model.params.iter().chain(&ck.adam.m).chain(&ck.adam.v) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        n_params: n,
        in_channels: ck.model.in_channels,
        net: ck.model.config.clone(),
        layers: ck.model.param_layers(),
        step: ck.adam.step,
        lr: ck.adam.lr,
        beta1: ck.adam.beta1,
        beta2: ck.adam.beta2,
        epsilon: ck.adam.epsilon,
        raster: ck.raster.clone(),
        train: ck.train.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    f.write_all(&buf).map_err(|e| Error::file(path, e))?;
    let mp = manifest_path(path);
    fs::write(&mp, json).map_err(|e| Error::file(&mp, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mp = manifest_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::file(&mp, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        field: "checkpoint manifest".into(),
        message: e.to_string(),
    })?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::file(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Parse {
            field: "checkpoint header".into(),
            message: "bad magic".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let mut model: Model<f32> = Model::zeros(manifest.in_channels, manifest.net)?;
    if n != model.n_params() || n != manifest.n_params || model.param_layers() != manifest.layers {
        return Err(Error::Dimension(format!(
            "checkpoint holds {n} parameters, architecture needs {}",
            model.n_params()
        )));
    }
    if bytes.len() != 16 + 12 * n {
        return Err(Error::Parse {
            field: "checkpoint body".into(),
            message: format!("expected {} bytes, found {}", 16 + 12 * n, bytes.len()),
        });
    }
    let floats: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    model.params = floats[..n].to_vec();
    let adam = AdamState {
        m: floats[n..2 * n].to_vec(),
        v: floats[2 * n..].to_vec(),
        step: manifest.step,
        lr: manifest.lr,
        beta1: manifest.beta1,
        beta2: manifest.beta2,
        epsilon: manifest.epsilon,
    };
    Ok(Checkpoint {
        model,
        adam,
        raster: manifest.raster,
        train: manifest.train,
    })
}
