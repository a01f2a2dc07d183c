//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "DACTAGCK"
//! version    u32      FORMAT_VERSION
//! config     u32 length + UTF-8 key=value text
//! params     u32 count, then per parameter:
//!              u32 name length + name bytes
//!              u32 rank, rank × u64 extents
//!              product(extents) × f64, row-major
//! vocabulary u32 count, then u32 length + bytes per token, in id order
//! tags       u32 count, then u32 length + bytes per tag, in id order
//! lengths    f64 range, f64 std
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::model::Model;
use crate::corpus::{LengthStats, TagSet, Vocabulary};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const MAGIC: &[u8; 8] = b"DACTAGCK";
pub const FORMAT_VERSION: u32 = 1;

/// A trained model together with everything needed to feed it new text.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocabulary,
    pub tags: TagSet,
    pub stats: LengthStats,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        w.write_all(MAGIC)?;
        put_u32(&mut w, FORMAT_VERSION)?;
        put_str(&mut w, &self.model.config().to_text())?;
        let params = self.model.params();
        put_u32(&mut w, params.len() as u32)?;
        for id in params.ids() {
            put_str(&mut w, params.name(id))?;
            let t = params.get(id);
            put_u32(&mut w, t.rank() as u32)?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        put_strings(&mut w, self.vocab.tokens())?;
        put_strings(&mut w, self.tags.tags())?;
        w.write_all(&self.stats.range().to_le_bytes())?;
        w.write_all(&self.stats.std().to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = get_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let config = ModelConfig::from_text(&get_str(&mut r)?).map_err(bad)?;
        let mut model = Model::build(config, None).map_err(bad)?;
        let count = get_u32(&mut r)? as usize;
        if count != model.params().len() {
            return Err(Error::Checkpoint(format!(
                "{count} parameters stored, architecture has {}",
                model.params().len()
            )));
        }
        for _ in 0..count {
            let name = get_str(&mut r)?;
            let rank = get_u32(&mut r)? as usize;
            if rank > 3 {
                return Err(Error::Checkpoint(format!("parameter {name} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(get_u64(&mut r)? as usize);
            }
            let id = model
                .params()
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name:?}")))?;
            if model.params().get(id).shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} stored as {shape:?}, expected {:?}",
                    model.params().get(id).shape()
                )));
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(get_f64(&mut r)?);
            }
            model
                .params_mut()
                .set(id, Tensor::new(shape, data).map_err(bad)?)
                .map_err(bad)?;
        }
        let vocab = Vocabulary::from_listing(get_strings(&mut r)?).map_err(bad)?;
        let tags = TagSet::from_tags(get_strings(&mut r)?).map_err(bad)?;
        let range = get_f64(&mut r)?;
        let std = get_f64(&mut r)?;
        let stats = LengthStats::from_parts(range, std).map_err(bad)?;
        if model.config().uses_embeddings() && vocab.len() != model.config().vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        if tags.len() != model.num_classes() {
            return Err(Error::Checkpoint(format!(
                "{} tags stored for a {}-class model",
                tags.len(),
                model.num_classes()
            )));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            model,
            vocab,
            tags,
            stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::load(path, e))?;
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_from(f)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }
}

fn bad(e: Error) -> Error {
    match e {
        Error::Checkpoint(_) => e,
        other => Error::Checkpoint(other.to_string()),
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn put_strings<W: Write>(w: &mut W, items: &[String]) -> Result<()> {
    put_u32(w, items.len() as u32)?;
    items.iter().try_for_each(|s| put_str(w, s))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let len = get_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("string field is not UTF-8".into()))
}

fn get_strings<R: Read>(r: &mut R) -> Result<Vec<String>> {
    let n = get_u32(r)? as usize;
    (0..n).map(|_| get_str(r)).collect()
}
