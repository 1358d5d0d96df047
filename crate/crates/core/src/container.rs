//! `RPST` binary container shared by model checkpoints and pipeline caches.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "RPST"
//! version    u32
//! relations  u32 count, then per entry: u32 byte length + UTF-8 bytes
//! tensors    u32 count, then per tensor:
//!              u32 name length, name bytes, u32 rank, rank x u64 dims,
//!              product(dims) x f32 row-major payload
//! tables     u32 count, then per table:
//!              u32 name length, name bytes, u32 entry count,
//!              per entry: u32 byte length + UTF-8 bytes
//! ```
//!
//! The trailing string tables carry vocabularies and settings for caches;
//! checkpoints use them for the model configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RPST";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "tensor `{name}` has dims {dims:?} but {} values",
                data.len()
            )));
        }
        Ok(Self { name, dims, data })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StringTable {
    pub name: String,
    pub entries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub relations: Vec<String>,
    pub tensors: Vec<Tensor>,
    pub tables: Vec<StringTable>,
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

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let len = get_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("string is not UTF-8".into()))
}

fn get_strings<R: Read>(r: &mut R) -> Result<Vec<String>> {
    let count = get_u32(r)? as usize;
    (0..count).map(|_| get_str(r)).collect()
}

impl Container {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
    }

    pub fn table(&self, name: &str) -> Result<&[String]> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.entries.as_slice())
            .ok_or_else(|| Error::Format(format!("missing table `{name}`")))
    }

    pub fn push_table(&mut self, name: impl Into<String>, entries: Vec<String>) {
        self.tables.push(StringTable {
            name: name.into(),
            entries,
        });
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(&mut w, FORMAT_VERSION)?;
        put_u32(&mut w, self.relations.len() as u32)?;
        for r in &self.relations {
            put_str(&mut w, r)?;
        }
        put_u32(&mut w, self.tensors.len() as u32)?;
        for t in &self.tensors {
            put_str(&mut w, &t.name)?;
            put_u32(&mut w, t.dims.len() as u32)?;
            for &d in &t.dims {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut bytes = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        put_u32(&mut w, self.tables.len() as u32)?;
        for table in &self.tables {
            put_str(&mut w, &table.name)?;
            put_u32(&mut w, table.entries.len() as u32)?;
            for e in &table.entries {
                put_str(&mut w, e)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = get_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let relations = get_strings(&mut r)?;
        let tensor_count = get_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(tensor_count);
        for _ in 0..tensor_count {
            let name = get_str(&mut r)?;
            let rank = get_u32(&mut r)? as usize;
            let dims = (0..rank)
                .map(|_| get_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = dims.iter().product();
            let mut bytes = vec![0u8; count * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, dims, data });
        }
        let table_count = get_u32(&mut r)? as usize;
        let mut tables = Vec::with_capacity(table_count);
        for _ in 0..table_count {
            let name = get_str(&mut r)?;
            let entries = get_strings(&mut r)?;
            tables.push(StringTable { name, entries });
        }
        Ok(Self {
            relations,
            tensors,
            tables,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| e.in_file(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::read_from(BufReader::new(file)).map_err(|e| e.in_file(path))
    }
}

/// Parses `key=value` entries as stored in settings tables.
pub fn table_value<'a>(entries: &'a [String], key: &str) -> Result<&'a str> {
    entries
        .iter()
        .find_map(|e| e.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
        .ok_or_else(|| Error::Format(format!("missing setting `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Container {
        let mut c = Container {
            relations: vec!["/loc/in".into(), "r2".into()],
            tensors: vec![
                Tensor::new("w", vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-7, f32::MAX]).unwrap(),
                Tensor::new("b", vec![3], vec![0.25, 0.5, 0.75]).unwrap(),
            ],
            tables: vec![],
        };
        c.push_table("config", vec!["hidden=6".into()]);
        c
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RPST");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 7);
        assert_eq!(&buf[16..23], b"/loc/in");
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(Container::read_from(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_input_is_an_error() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 10);
        assert!(Container::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn tensor_shape_checked() {
        assert!(Tensor::new("x", vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn settings_lookup() {
        let c = sample();
        assert_eq!(table_value(c.table("config").unwrap(), "hidden").unwrap(), "6");
        assert!(table_value(c.table("config").unwrap(), "hid").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            rels in prop::collection::vec("[a-z/_]{1,12}", 0..5),
            rows in 0usize..4, cols in 0usize..4,
            seed in any::<u32>(),
        ) {
            let data: Vec<f32> = (0..rows * cols).map(|i| (seed as f32) * 0.001 - i as f32).collect();
            let mut c = Container {
                relations: rels,
                tensors: vec![Tensor::new("m", vec![rows, cols], data).unwrap()],
                tables: vec![],
            };
            c.push_table("t", vec!["k=v".into(), "ü".into()]);
            let mut buf = Vec::new();
            c.write_to(&mut buf).unwrap();
            prop_assert_eq!(Container::read_from(buf.as_slice()).unwrap(), c);
        }
    }
}
