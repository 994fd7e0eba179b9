//! Binary container shared by datasets, checkpoints and predictions.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! "DFD1" | u32 header_len | header (UTF-8 JSON) | payload (f32 arrays) | u64 checksum
//! ```
//!
//! The header lists each array's name, shape and dtype in payload order plus
//! free-form metadata. The checksum is the first eight bytes of the SHA-256
//! digest of the payload, read as a little-endian `u64`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{ChannelStack, DatasetStats, Domain, SampleRecord};

pub const MAGIC: &[u8; 4] = b"DFD1";
pub const SCHEMA_VERSION: u32 = 1;
pub const CHECKSUM_ALGORITHM: &str = "sha256-trunc64-le";

pub mod kinds {
    pub const DATASET: &str = "dataset";
    pub const CHECKPOINT: &str = "checkpoint";
    pub const PREDICTION: &str = "prediction";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
    kind: String,
    checksum: String,
    arrays: Vec<ArrayInfo>,
    meta: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: BTreeMap<String, Value>,
    arrays: Vec<Array>,
}

pub fn checksum(payload: &[u8]) -> u64 {
    let digest = Sha256::digest(payload);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Self { kind: kind.into(), meta: BTreeMap::new(), arrays: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Container(format!("array {name}: shape {shape:?} does not hold {} values", data.len())));
        }
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(Error::Container(format!("duplicate array {name}")));
        }
        self.arrays.push(Array { name, shape, data });
        Ok(())
    }

    pub fn arrays(&self) -> &[Array] {
        &self.arrays
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.arrays.iter().find(|a| a.name == name).ok_or_else(|| Error::Container(format!("missing array {name}")))
    }

    pub fn set_meta(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.meta.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn meta<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self.meta.get(key).ok_or_else(|| Error::Container(format!("missing metadata key {key}")))?;
        Ok(T::deserialize(v)?)
    }

    pub fn require_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Container(format!("expected a {kind} container, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            schema_version: SCHEMA_VERSION,
            kind: self.kind.clone(),
            checksum: CHECKSUM_ALGORITHM.into(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayInfo { name: a.name.clone(), shape: a.shape.clone(), dtype: "f32".into() })
                .collect(),
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let header_len = u32::try_from(header.len()).map_err(|_| Error::Container("header too large".into()))?;
        let payload: Vec<u8> = self.arrays.iter().flat_map(|a| a.data.iter().flat_map(|v| v.to_le_bytes())).collect();
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&checksum(&payload).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::Container("truncated file".into());
        if bytes.len() < 8 {
            return Err(truncated());
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() < header_len + 8 {
            return Err(truncated());
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| Error::Container(format!("malformed header: {e}")))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(Error::Version(header.schema_version));
        }
        if header.checksum != CHECKSUM_ALGORITHM {
            return Err(Error::Container(format!("unknown checksum algorithm {}", header.checksum)));
        }
        let total: usize = header.arrays.iter().map(|a| a.shape.iter().product::<usize>()).sum();
        let payload = &body[header_len..body.len() - 8];
        if payload.len() != total * 4 {
            return Err(Error::Container(format!(
                "payload holds {} bytes, header declares {}",
                payload.len(),
                total * 4
            )));
        }
        let stored = u64::from_le_bytes(body[body.len() - 8..].try_into().unwrap());
        let computed = checksum(payload);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut arrays = Vec::with_capacity(header.arrays.len());
        let mut offset = 0;
        for info in header.arrays {
            if info.dtype != "f32" {
                return Err(Error::Container(format!("unsupported dtype {}", info.dtype)));
            }
            let n: usize = info.shape.iter().product();
            let data = payload[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += 4 * n;
            arrays.push(Array { name: info.name, shape: info.shape, data });
        }
        Ok(Self { kind: header.kind, meta: header.meta, arrays })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Atomic file replacement: write `path.tmp`, sync, rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn stack_array(stack: &ChannelStack) -> (Vec<usize>, Vec<f32>) {
    let (nx, ny) = stack.dims();
    (vec![stack.len(), ny, nx], stack.to_flat().into_iter().map(|v| v as f32).collect())
}

fn array_stack(a: &Array, names: &[String], domain: Domain) -> Result<ChannelStack> {
    if a.shape.len() != 3 || a.shape[0] != names.len() {
        return Err(Error::Container(format!(
            "array {} has shape {:?}, expected [{}, ny, nx]",
            a.name,
            a.shape,
            names.len()
        )));
    }
    let values: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    ChannelStack::from_flat(a.shape[2], a.shape[1], domain, names.to_vec(), &values)
}

/// Channel stacks named `<name>` stored as `[channels, ny, nx]` with their
/// channel names and domain in metadata.
pub fn push_stack(c: &mut Container, name: &str, stack: &ChannelStack) -> Result<()> {
    let (shape, data) = stack_array(stack);
    c.push(name, shape, data)?;
    c.set_meta(&format!("{name}.names"), stack.names())?;
    c.set_meta(&format!("{name}.domain"), stack.domain())
}

pub fn read_stack(c: &Container, name: &str) -> Result<ChannelStack> {
    let names: Vec<String> = c.meta(&format!("{name}.names"))?;
    let domain: Domain = c.meta(&format!("{name}.domain"))?;
    array_stack(c.get(name)?, &names, domain)
}

/// A dataset split in container form. Values are stored at 32-bit precision.
pub fn encode_dataset(
    records: &[SampleRecord],
    stats: &DatasetStats,
    split: &str,
    config: &Value,
) -> Result<Container> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let mut c = Container::new(kinds::DATASET);
    for (i, r) in records.iter().enumerate() {
        if r.condition.names() != first.condition.names() || r.target.names() != first.target.names() {
            return Err(Error::Container(format!("record {i} has a different channel layout")));
        }
        let (s, d) = stack_array(&r.condition);
        c.push(format!("r{i}.condition"), s, d)?;
        let (s, d) = stack_array(&r.target);
        c.push(format!("r{i}.target"), s, d)?;
    }
    c.set_meta("split", split)?;
    c.set_meta("n_records", records.len())?;
    c.set_meta("condition_names", first.condition.names())?;
    c.set_meta("target_names", first.target.names())?;
    c.set_meta("domain", first.condition.domain())?;
    c.set_meta("lead_times", records.iter().map(|r| r.lead_time).collect::<Vec<_>>())?;
    c.set_meta("stats", stats)?;
    c.set_meta("config", config)?;
    Ok(c)
}

pub fn decode_dataset(c: &Container) -> Result<(Vec<SampleRecord>, DatasetStats)> {
    c.require_kind(kinds::DATASET)?;
    let n: usize = c.meta("n_records")?;
    let cond_names: Vec<String> = c.meta("condition_names")?;
    let target_names: Vec<String> = c.meta("target_names")?;
    let domain: Domain = c.meta("domain")?;
    let lead_times: Vec<Option<f64>> = c.meta("lead_times")?;
    if lead_times.len() != n {
        return Err(Error::Container(format!("{} lead times for {n} records", lead_times.len())));
    }
    let records = (0..n)
        .map(|i| {
            SampleRecord::new(
                array_stack(c.get(&format!("r{i}.condition"))?, &cond_names, domain)?,
                array_stack(c.get(&format!("r{i}.target"))?, &target_names, domain)?,
                lead_times[i],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, c.meta("stats")?))
}
