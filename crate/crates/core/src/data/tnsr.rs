//! `TNSR` container: a flat list of named little-endian arrays.
//!
//! ```text
//! "TNSR" | version u16 | count u32 | records...
//! record = name_len u16 | name utf-8 | dtype u8 | rank u8 | extents u64 × rank | payload
//! ```
//! dtype tags: 0 = f64, 1 = f32, 2 = u8.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F64(Vec<f64>),
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F64(v) => v.len(),
            Payload::F32(v) => v.len(),
            Payload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tag(&self) -> u8 {
        match self {
            Payload::F64(_) => 0,
            Payload::F32(_) => 1,
            Payload::U8(_) => 2,
        }
    }

    fn elem_size(tag: u8) -> Option<usize> {
        match tag {
            0 => Some(8),
            1 => Some(4),
            2 => Some(1),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl Record {
    pub fn f64(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            payload: Payload::F64(data),
        }
    }

    pub fn u8(name: impl Into<String>, shape: &[usize], data: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            payload: Payload::U8(data),
        }
    }

    pub fn text(name: impl Into<String>, text: &str) -> Self {
        let bytes = text.as_bytes().to_vec();
        Self::u8(name, &[bytes.len()], bytes)
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.payload {
            Payload::F64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match &self.payload {
            Payload::U8(v) => std::str::from_utf8(v).ok(),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let n: usize = self.shape.iter().product();
        if n != self.payload.len() {
            return Err(Error::Format(format!(
                "record `{}` declares {n} elements but holds {}",
                self.name,
                self.payload.len()
            )));
        }
        if self.shape.len() > u8::MAX as usize || self.name.len() > u16::MAX as usize {
            return Err(Error::Format(format!("record `{}` rank or name too long", self.name)));
        }
        Ok(())
    }
}

pub fn encode(records: &[Record]) -> Result<Vec<u8>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        r.validate()?;
        if !seen.insert(r.name.as_str()) {
            return Err(Error::Format(format!("duplicate record name `{}`", r.name)));
        }
        out.extend_from_slice(&(r.name.len() as u16).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.push(r.payload.tag());
        out.push(r.shape.len() as u8);
        for &e in &r.shape {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        match &r.payload {
            Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U8(v) => out.extend_from_slice(v),
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("unexpected end of file reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected TNSR".into()));
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = c.u32("record count")?;
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(count.min(1 << 16) as usize);
    for i in 0..count {
        let name_len = c.u16(&format!("name length of record {i}"))? as usize;
        let name = std::str::from_utf8(c.take(name_len, "record name")?)
            .map_err(|_| Error::Format(format!("record {i} name is not UTF-8")))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::Format(format!("duplicate record name `{name}`")));
        }
        let tag = c.u8(&format!("dtype of `{name}`"))?;
        let elem = Payload::elem_size(tag)
            .ok_or_else(|| Error::Format(format!("record `{name}` has unknown dtype tag {tag}")))?;
        let rank = c.u8(&format!("rank of `{name}`"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64(&format!("extents of `{name}`"))?);
        }
        let declared = shape
            .iter()
            .try_fold(elem as u64, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Format(format!("record `{name}` size overflows")))?;
        if declared > c.remaining() as u64 {
            return Err(Error::Truncated {
                record: name,
                declared,
                available: c.remaining() as u64,
            });
        }
        let raw = c.take(declared as usize, "payload")?;
        let payload = match tag {
            0 => Payload::F64(
                raw.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8")))
                    .collect(),
            ),
            1 => Payload::F32(
                raw.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4")))
                    .collect(),
            ),
            _ => Payload::U8(raw.to_vec()),
        };
        records.push(Record {
            name,
            shape: shape.into_iter().map(|e| e as usize).collect(),
            payload,
        });
    }
    if c.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after last record",
            c.remaining()
        )));
    }
    Ok(records)
}

pub fn write_tnsr(path: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(records)?;
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tnsr(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
