//! Versioned model checkpoints.
//!
//! Layout: the magic bytes `ASTCKPT1`, a little-endian `u64` header length,
//! a JSON header (configuration, ablation, vocabulary fingerprints and the
//! parameter directory), then every parameter as little-endian `f64` in
//! directory order.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use astcomp_core::model::{Ablation, Model, ModelConfig};
use astcomp_core::params::ParamStore;
use astcomp_core::training::Fingerprints;
use astcomp_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::write_atomic;

const MAGIC: &[u8; 8] = b"ASTCKPT1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: ModelConfig,
    pub ablation: Ablation,
    pub fingerprints: Fingerprints,
    /// Completed training epochs, if known.
    pub epoch: Option<usize>,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model,
}

impl Checkpoint {
    /// Fails with a configuration error unless the checkpoint was trained
    /// with vocabularies of the given fingerprints.
    pub fn check_fingerprints(&self, expected: &Fingerprints) -> Result<()> {
        self.header.fingerprints.check(expected).map_err(Error::from)
    }
}

pub fn save(path: &Path, model: &Model, fingerprints: &Fingerprints, epoch: Option<usize>) -> Result<()> {
    let params = model.params();
    let header = CheckpointHeader {
        version: VERSION,
        config: model.config().clone(),
        ablation: model.ablation(),
        fingerprints: fingerprints.clone(),
        epoch,
        params: params
            .iter()
            .map(|(name, m)| ParamEntry { name: name.into(), rows: m.rows(), cols: m.cols() })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::format(path, e))?;
    write_atomic(path, |w| {
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, m) in params.iter() {
            for x in m.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| Error::format(path, msg);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("not a checkpoint (too short)"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| bad("truncated header"))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(bad("implausible header length"));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&json).map_err(|e| Error::format(path, e))?;
    if header.version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {}", header.version)));
    }
    let mut store = ParamStore::new();
    let mut buf = [0u8; 8];
    for entry in &header.params {
        let n = entry.rows.checked_mul(entry.cols).ok_or_else(|| bad("parameter shape overflows"))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(|_| bad("truncated parameter data"))?;
            data.push(f64::from_le_bytes(buf));
        }
        store.push(&entry.name, Matrix::from_vec(entry.rows, entry.cols, data)?);
    }
    if r.read(&mut buf).map_err(Error::io(path))? != 0 {
        return Err(bad("trailing bytes after parameter data"));
    }
    let model = Model::from_params(header.config.clone(), header.ablation, &store)
        .map_err(|e| Error::format(path, format!("parameters do not match the configuration: {e}")))?;
    Ok(Checkpoint { header, model })
}
