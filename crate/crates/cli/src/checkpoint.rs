//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `DSPC`, `u32` version, string config echo,
//! `u32` meta count then `(key, value)` string pairs, `u32` section count then
//! per section a name and `u32` tensor count, and per tensor a name, `u8`
//! dtype (1 = f64), `u32` rank, `u32` extents and the raw values. Strings are a
//! `u32` byte length followed by UTF-8. Maps are written in key order, so equal
//! contents always give equal bytes.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use disp_core::tensor::{ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"DSPC";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub meta: BTreeMap<String, String>,
    pub sections: BTreeMap<String, Vec<(String, Tensor)>>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            bail!("checkpoint truncated at byte offset {} (needed {n} more bytes)", self.pos);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let at = self.pos;
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| anyhow!("invalid UTF-8 string at byte offset {at}"))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.config);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, tensors) in &self.sections {
            put_str(&mut out, name);
            out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
            for (tname, t) in tensors {
                put_str(&mut out, tname);
                out.push(DTYPE_F64);
                out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
                for &d in t.shape() {
                    out.extend_from_slice(&(d as u32).to_le_bytes());
                }
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            bail!("not a checkpoint: bad magic at byte offset 0");
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            bail!("unsupported checkpoint version {version} (this build reads version {VERSION})");
        }
        let config = r.string()?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            meta.insert(k, r.string()?);
        }
        let mut sections = BTreeMap::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let count = r.u32()?;
            let mut tensors = Vec::new();
            for _ in 0..count {
                let tname = r.string()?;
                let at = r.pos;
                let dtype = r.u8()?;
                if dtype != DTYPE_F64 {
                    bail!("unknown dtype {dtype} at byte offset {at}");
                }
                let rank = r.u32()? as usize;
                let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
                let len: usize = shape.iter().product();
                let raw = r.take(len.checked_mul(8).ok_or_else(|| anyhow!("tensor too large at byte offset {at}"))?)?;
                let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                tensors.push((tname, Tensor::new(shape, data).with_context(|| format!("tensor at byte offset {at}"))?));
            }
            sections.insert(name, tensors);
        }
        if r.pos != bytes.len() {
            bail!("{} trailing bytes after checkpoint at byte offset {}", bytes.len() - r.pos, r.pos);
        }
        Ok(Self { config, meta, sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).with_context(|| format!("writing checkpoint {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        Self::decode(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
    }

    pub fn put_params(&mut self, section: &str, params: &ParamSet) {
        let tensors = params.entries().iter().map(|p| (p.name.clone(), p.tensor.clone().with_requires_grad(false))).collect();
        self.sections.insert(section.to_string(), tensors);
    }

    pub fn put_tensor(&mut self, section: &str, name: &str, t: &Tensor) {
        let entry = self.sections.entry(section.to_string()).or_default();
        entry.retain(|(n, _)| n != name);
        entry.push((name.to_string(), t.clone().with_requires_grad(false)));
    }

    pub fn section(&self, name: &str) -> Option<&[(String, Tensor)]> {
        self.sections.get(name).map(Vec::as_slice)
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn tensor(&self, section: &str, name: &str) -> Result<&Tensor> {
        self.section(section)
            .and_then(|s| s.iter().find(|(n, _)| n == name))
            .map(|(_, t)| t)
            .ok_or_else(|| anyhow!("checkpoint has no tensor `{name}` in section `{section}`"))
    }

    /// Overwrites the values of `params` with the section's tensors (matched
    /// by name and shape).
    pub fn load_params(&self, section: &str, params: &mut ParamSet) -> Result<()> {
        let stored = self.section(section).ok_or_else(|| anyhow!("checkpoint has no section `{section}`"))?;
        if stored.len() != params.len() {
            bail!("section `{section}` holds {} tensors, model expects {}", stored.len(), params.len());
        }
        for p in params.entries_mut() {
            let t = stored
                .iter()
                .find(|(n, _)| *n == p.name)
                .map(|(_, t)| t)
                .ok_or_else(|| anyhow!("section `{section}` lacks `{}`", p.name))?;
            if t.shape() != p.tensor.shape() {
                bail!("`{}` in `{section}` has shape {:?}, model expects {:?}", p.name, t.shape(), p.tensor.shape());
            }
            p.tensor.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }
}
