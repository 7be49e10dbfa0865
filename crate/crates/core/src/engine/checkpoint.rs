//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!   magic "DAASI1" | u32 version | metadata map | tensor entries | opt state
//! Tensor values are stored as raw little-endian f64 bits, so a load
//! reproduces the saved parameters bit-exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::optim::{AdamState, OptState, RmsPropState};
use super::params::ParameterSet;
use super::tensor::Tensor;
use super::EngineError;

const MAGIC: &[u8; 6] = b"DAASI1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: ParameterSet,
    pub opt: Option<OptState>,
}

impl Checkpoint {
    pub fn new(params: ParameterSet) -> Self {
        Checkpoint { meta: BTreeMap::new(), params, opt: None }
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        write_u32(&mut w, VERSION)?;

        write_u32(&mut w, self.meta.len() as u32)?;
        for (k, v) in &self.meta {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }

        write_u32(&mut w, self.params.len() as u32)?;
        for (name, t) in self.params.iter() {
            write_str(&mut w, name)?;
            write_u32(&mut w, t.shape().len() as u32)?;
            for &d in t.shape() {
                write_u64(&mut w, d as u64)?;
            }
            write_f64s(&mut w, t.values())?;
        }

        match &self.opt {
            None => w.write_all(&[0u8])?,
            Some(OptState::Adam(a)) => {
                w.write_all(&[1u8])?;
                write_f64s(&mut w, &[a.beta1, a.beta2, a.eps])?;
                write_u32(&mut w, a.m.len() as u32)?;
                for (name, m) in &a.m {
                    write_str(&mut w, name)?;
                    write_u64(&mut w, a.t.get(name).copied().unwrap_or(0))?;
                    write_f64s(&mut w, m)?;
                    let v = a.v.get(name).ok_or_else(|| EngineError::CheckpointFormat {
                        reason: format!("adam state for `{name}` missing second moment"),
                    })?;
                    write_f64s(&mut w, v)?;
                }
            }
            Some(OptState::RmsProp(r)) => {
                w.write_all(&[2u8])?;
                write_f64s(&mut w, &[r.decay, r.eps])?;
                write_u32(&mut w, r.acc.len() as u32)?;
                for (name, acc) in &r.acc {
                    write_str(&mut w, name)?;
                    write_f64s(&mut w, acc)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EngineError::CheckpointFormat {
                reason: format!("bad magic {magic:?} in {}", path.display()),
            });
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(EngineError::CheckpointFormat {
                reason: format!("unsupported version {version}"),
            });
        }

        let mut meta = BTreeMap::new();
        for _ in 0..read_u32(&mut r)? {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            meta.insert(k, v);
        }

        let mut params = ParameterSet::new();
        for _ in 0..read_u32(&mut r)? {
            let name = read_str(&mut r)?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r)? as usize);
            }
            let values = read_f64s(&mut r)?;
            let numel: usize = shape.iter().product();
            if numel != values.len() {
                return Err(EngineError::CheckpointFormat {
                    reason: format!(
                        "tensor `{name}` declares shape {shape:?} but carries {} values",
                        values.len()
                    ),
                });
            }
            // Bypass Tensor::new finiteness checks? No: checkpoints only ever
            // hold values that passed them on the way in.
            params.insert(&name, Tensor::new(shape, values)?);
        }

        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let opt = match tag[0] {
            0 => None,
            1 => {
                let hp = read_f64s(&mut r)?;
                if hp.len() != 3 {
                    return Err(EngineError::CheckpointFormat {
                        reason: "adam hyperparameter block malformed".into(),
                    });
                }
                let mut st = AdamState::new(hp[0], hp[1], hp[2]);
                for _ in 0..read_u32(&mut r)? {
                    let name = read_str(&mut r)?;
                    let t = read_u64(&mut r)?;
                    let m = read_f64s(&mut r)?;
                    let v = read_f64s(&mut r)?;
                    st.t.insert(name.clone(), t);
                    st.m.insert(name.clone(), m);
                    st.v.insert(name, v);
                }
                Some(OptState::Adam(st))
            }
            2 => {
                let hp = read_f64s(&mut r)?;
                if hp.len() != 2 {
                    return Err(EngineError::CheckpointFormat {
                        reason: "rmsprop hyperparameter block malformed".into(),
                    });
                }
                let mut st = RmsPropState::new(hp[0], hp[1]);
                for _ in 0..read_u32(&mut r)? {
                    let name = read_str(&mut r)?;
                    let acc = read_f64s(&mut r)?;
                    st.acc.insert(name, acc);
                }
                Some(OptState::RmsProp(st))
            }
            other => {
                return Err(EngineError::CheckpointFormat {
                    reason: format!("unknown optimizer tag {other}"),
                })
            }
        };

        Ok(Checkpoint { meta, params, opt })
    }
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> std::io::Result<()> {
    write_u64(w, vals.len() as u64)?;
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, EngineError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(EngineError::CheckpointFormat {
            reason: format!("string length {len} is implausible"),
        });
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| EngineError::CheckpointFormat {
        reason: "non-utf8 string".into(),
    })
}

fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>, EngineError> {
    let len = read_u64(r)? as usize;
    if len > (1 << 28) {
        return Err(EngineError::CheckpointFormat {
            reason: format!("tensor length {len} is implausible"),
        });
    }
    let mut out = Vec::with_capacity(len);
    let mut b = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
