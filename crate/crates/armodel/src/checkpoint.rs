//! Single-file checkpoints: magic, u32 header length, JSON header, then the
//! f32 little-endian payload (parameters, then Adam moments if present).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::model::Model;
use crate::params::ParamEntry;
use crate::train::AdamState;
use crate::ModelError;

pub const MAGIC: &[u8; 7] = b"ARSEG1\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerHeader {
    step: u64,
    m_offset: usize,
    v_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    manifest: Vec<ParamEntry>,
    payload_floats: usize,
    optimizer: Option<OptimizerHeader>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub optimizer: Option<AdamState>,
    /// Free-form provenance (training config, manifest hash, ...).
    pub meta: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let n = self.model.params.len();
        let optimizer = self.optimizer.as_ref().map(|o| OptimizerHeader {
            step: o.step,
            m_offset: n,
            v_offset: 2 * n,
        });
        let header = Header {
            config: self.model.config.clone(),
            manifest: self.model.layout.entries().to_vec(),
            payload_floats: if optimizer.is_some() { 3 * n } else { n },
            optimizer,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| bad("header too large"))?;
        w.write_all(MAGIC)?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(header.payload_floats * 4);
        let mut put = |xs: &[f32]| xs.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        put(&self.model.params);
        if let Some(o) = &self.optimizer {
            if o.m.len() != n || o.v.len() != n {
                return Err(bad("optimizer state does not match parameter count"));
            }
            put(&o.m);
            put(&o.v);
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != header.payload_floats * 4 {
            return Err(bad(format!(
                "payload has {} bytes, header promises {} floats",
                payload.len(),
                header.payload_floats
            )));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let n = crate::params::ParamLayout::new(&header.config).total();
        let model = Model::from_params(header.config, floats[..n.min(floats.len())].to_vec())?;
        if model.layout.entries() != header.manifest.as_slice() {
            return Err(bad("parameter manifest does not match the configuration"));
        }
        let optimizer = match header.optimizer {
            None if floats.len() == n => None,
            Some(o) if floats.len() == 3 * n && o.m_offset == n && o.v_offset == 2 * n => Some(AdamState {
                step: o.step,
                m: floats[n..2 * n].to_vec(),
                v: floats[2 * n..].to_vec(),
            }),
            _ => return Err(bad("payload layout does not match the header")),
        };
        Ok(Self {
            model,
            optimizer,
            meta: header.meta,
        })
    }

    /// Writes to a sibling temporary file, then renames into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let tmp = path.with_extension("ckpt.partial");
        {
            let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
            self.write_to(&mut f)?;
            f.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::read_from(std::io::BufReader::new(fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use maskgen_core::vocab::Vocabulary;

    fn small() -> Model<f32> {
        let mut cfg = ModelConfig::toy(Vocabulary::new(6, 3), 4);
        cfg.layers = 1;
        cfg.hidden = 8;
        cfg.heads = 2;
        cfg.ffn_hidden = 8;
        Model::init(cfg).unwrap()
    }

    #[test]
    fn round_trip_with_optimizer() {
        let model = small();
        let mut opt = AdamState::new(model.params.len());
        opt.step = 7;
        opt.m[3] = 0.5;
        opt.v[5] = 0.25;
        let ck = Checkpoint {
            model,
            optimizer: Some(opt.clone()),
            meta: serde_json::json!({"note": "x"}),
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..7], MAGIC);
        let back = Checkpoint::read_from(&buf[..]).unwrap();
        assert_eq!(back.model.params, ck.model.params);
        assert_eq!(back.model.config, ck.model.config);
        assert_eq!(back.optimizer, Some(opt));
        assert_eq!(back.meta["note"], "x");
    }

    #[test]
    fn rejects_corruption() {
        let ck = Checkpoint {
            model: small(),
            optimizer: None,
            meta: serde_json::Value::Null,
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::read_from(&bad_magic[..]).is_err());
        assert!(Checkpoint::read_from(&buf[..buf.len() - 4]).is_err());
    }
}
