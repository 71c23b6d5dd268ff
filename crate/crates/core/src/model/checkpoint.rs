//! Binary checkpoint: magic `PSGC`, version, a JSON header with the
//! architecture echo and free-form training state, normalisation
//! statistics, then a table of named float32 layers.

use std::fs;
use std::path::Path;

use psgan_nn::Tensor;

use super::{ArchConfig, Networks, ParamSet};
use crate::error::io_err;
use crate::features::{FeatureStats, DIM};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"PSGC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub nets: Networks<f32>,
    pub stats: FeatureStats,
    /// Additional tensors such as optimiser moments.
    pub aux: ParamSet<f32>,
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn new(nets: Networks<f32>, stats: FeatureStats) -> Self {
        Self { nets, stats, aux: ParamSet::new(), extra: serde_json::Value::Null }
    }

    /// Copies the stored layers into `nets`, failing on any shape mismatch.
    pub fn apply_to(&self, nets: &mut Networks<f32>) -> Result<()> {
        for (src, dst) in [(&self.nets.cond, &mut nets.cond), (&self.nets.gen, &mut nets.gen), (&self.nets.disc, &mut nets.disc)] {
            for (name, t) in src.iter() {
                dst.assign(name, t.clone())?;
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, VERSION);
        let header = serde_json::json!({ "arch": self.nets.arch, "extra": self.extra });
        let text = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        put_u32(&mut buf, text.len() as u32);
        buf.extend_from_slice(&text);
        put_u32(&mut buf, self.stats.mean.len() as u32);
        for v in self.stats.mean.iter().chain(&self.stats.std) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let layers: Vec<(&str, &Tensor<f32>)> = self
            .nets
            .sets()
            .into_iter()
            .flat_map(|(_, s)| s.iter())
            .chain(self.aux.iter())
            .collect();
        put_u32(&mut buf, layers.len() as u32);
        for (name, t) in layers {
            put_u32(&mut buf, name.len() as u32);
            buf.extend_from_slice(name.as_bytes());
            for d in t.shape() {
                put_u32(&mut buf, d as u32);
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let header: serde_json::Value =
            serde_json::from_slice(r.take(n)?).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let arch: ArchConfig = serde_json::from_value(header["arch"].clone())
            .map_err(|e| Error::Checkpoint(format!("architecture: {e}")))?;
        let extra = header["extra"].clone();
        let dim = r.u32()? as usize;
        if dim != DIM {
            return Err(Error::Checkpoint(format!("statistics dimension {dim}, expected {DIM}")));
        }
        let mean = r.f32s(dim)?;
        let std = r.f32s(dim)?;

        let mut nets = Networks::<f32>::init(&arch, 0)?;
        let mut aux = ParamSet::new();
        let count = r.u32()? as usize;
        let mut loaded = 0;
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("layer name not UTF-8".into()))?;
            let shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
            let values = r.f32s(shape.iter().product())?;
            let t = Tensor::new(shape, values)?;
            let set = match name.split('.').next() {
                Some("cond") => &mut nets.cond,
                Some("gen") => &mut nets.gen,
                Some("disc") => &mut nets.disc,
                _ => {
                    aux.push(name, t);
                    continue;
                }
            };
            set.assign(&name, t)?;
            loaded += 1;
        }
        let expected = nets.cond.len() + nets.gen.len() + nets.disc.len();
        if loaded != expected {
            return Err(Error::Checkpoint(format!("{loaded} network layers stored, expected {expected}")));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { nets, stats: FeatureStats { mean, std }, aux, extra })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.encode()?).map_err(io_err(path))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Checkpoint::decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("layer too large".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
