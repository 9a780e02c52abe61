//! Bit-exact binary checkpoints.
//!
//! Layout: magic `DHR1`, version u32, tensor count u32; per tensor a u16
//! name length, UTF-8 name, dtype u8 (0 = f32), ndim u8, u32 extents and a
//! little-endian f32 payload; then a u32 byte count plus the UTF-8 config
//! echo. The training step rides in the echo as a leading comment line.

use std::io::{Read, Write};
use std::path::Path;

use crate::config::RunConfig;
use crate::error::Result;
use crate::format_err;
use crate::pipeline::Model;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DHR1";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug)]
pub struct Checkpoint {
    /// Named tensors in registry order.
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
    /// Canonical config text (without the step comment).
    pub config_text: String,
    pub step: u64,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, config: &RunConfig, step: u64) -> Checkpoint {
        let mut tensors = Vec::new();
        model.for_each_param(&mut |name, t| {
            tensors.push((name, t.shape().to_vec(), t.data().to_vec()));
        });
        Checkpoint { tensors, config_text: config.canonical_text(), step }
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_str_checked(&self.config_text)
    }

    /// Rebuild a model: initialize the structure from the embedded config,
    /// then overwrite every parameter from the stored tensors by name.
    pub fn to_model(&self) -> Result<Model<f32>> {
        let config = self.config()?;
        let mut model = Model::init(config.model_dims(), config.seed)?;
        let mut missing: Vec<String> = Vec::new();
        let lookup: std::collections::HashMap<&str, (&Vec<usize>, &Vec<f32>)> = self
            .tensors
            .iter()
            .map(|(name, shape, data)| (name.as_str(), (shape, data)))
            .collect();
        let mut err: Option<crate::Error> = None;
        model.for_each_param_mut(&mut |name, t| {
            if err.is_some() {
                return;
            }
            match lookup.get(name.as_str()) {
                Some((shape, data)) => {
                    if shape.as_slice() != t.shape() {
                        err = Some(format_err!(
                            "tensor '{name}' has shape {:?}, model expects {:?}",
                            shape,
                            t.shape()
                        ));
                        return;
                    }
                    match Tensor::param(shape, (*data).clone()) {
                        Ok(p) => *t = p,
                        Err(e) => err = Some(e),
                    }
                }
                None => missing.push(name),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if !missing.is_empty() {
            return Err(format_err!("checkpoint is missing tensors: {}", missing.join(", ")));
        }
        Ok(model)
    }
}

fn echo_with_step(config_text: &str, step: u64) -> String {
    format!("# step = {step}\n{config_text}")
}

fn split_echo(echo: &str) -> Result<(String, u64)> {
    let mut lines = echo.lines();
    let first = lines.next().unwrap_or("");
    let step = first
        .strip_prefix("# step = ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err!("config echo lacks the step header"))?;
    let rest: String = lines.map(|l| format!("{l}\n")).collect();
    Ok((rest, step))
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut names = std::collections::HashSet::new();
    for (name, _, _) in &ckpt.tensors {
        if !names.insert(name.as_str()) {
            return Err(format_err!("duplicate tensor name '{name}'"));
        }
    }
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, shape, data) in &ckpt.tensors {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(format_err!("tensor name too long: '{name}'"));
        }
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(DTYPE_F32);
        buf.push(shape.len() as u8);
        for &e in shape {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let echo = echo_with_step(&ckpt.config_text, ckpt.step);
    buf.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    buf.extend_from_slice(echo.as_bytes());

    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| format_err!("truncated checkpoint"))?;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader { inner: std::io::BufReader::new(file) };

    if r.bytes(4)? != MAGIC {
        return Err(format_err!("bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format_err!("unsupported checkpoint version {version}"));
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    let mut names = std::collections::HashSet::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?)
            .map_err(|_| format_err!("tensor name is not UTF-8"))?;
        if !names.insert(name.clone()) {
            return Err(format_err!("duplicate tensor name '{name}'"));
        }
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(format_err!("unsupported dtype {dtype} for '{name}'"));
        }
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.bytes(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push((name, shape, data));
    }
    let echo_len = r.u32()? as usize;
    let echo = String::from_utf8(r.bytes(echo_len)?)
        .map_err(|_| format_err!("config echo is not UTF-8"))?;
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).map_err(crate::Error::Io)? != 0 {
        return Err(format_err!("trailing bytes after config echo"));
    }
    let (config_text, step) = split_echo(&echo)?;
    Ok(Checkpoint { tensors, config_text, step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_checkpoint() -> Checkpoint {
        let config = RunConfig { c: 6, d: 4, k: 2, height: 16, width: 16, ..Default::default() };
        let model: Model<f32> = Model::init(config.model_dims(), 5).unwrap();
        Checkpoint::from_model(&model, &config, 123)
    }

    #[test]
    fn save_load_roundtrips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.step, 123);
        assert_eq!(loaded.config_text, ckpt.config_text);
        assert_eq!(loaded.tensors.len(), ckpt.tensors.len());
        for ((an, ashape, adata), (bn, bshape, bdata)) in ckpt.tensors.iter().zip(&loaded.tensors) {
            assert_eq!(an, bn);
            assert_eq!(ashape, bshape);
            assert!(adata.iter().zip(bdata).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &sample_checkpoint()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, crate::Error::Format(_)));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &sample_checkpoint()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn model_registry_names_appear_exactly_once() {
        let ckpt = sample_checkpoint();
        let model = ckpt.to_model().unwrap();
        let mut names = model.param_names();
        let total = names.len();
        assert_eq!(total, ckpt.tensors.len());
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
    }

    #[test]
    fn loaded_model_reproduces_parameters() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let model = load_checkpoint(&path).unwrap().to_model().unwrap();
        let mut restored = Vec::new();
        model.for_each_param(&mut |name, t| {
            restored.push((name, t.data().to_vec()));
        });
        for ((name, _, data), (rname, rdata)) in ckpt.tensors.iter().zip(&restored) {
            assert_eq!(name, rname);
            assert!(data.iter().zip(rdata).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
