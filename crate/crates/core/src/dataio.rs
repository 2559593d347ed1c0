//! ETC ("ESM Tensor Container") reading and writing, plus metadata checks.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ETC1" | u32 header_len | header (canonical UTF-8 JSON) | payload
//! ```
//!
//! The payload is every variable in declared order as little-endian f64,
//! row-major in the variable's dim order. `provenance.content_hash` in the
//! header is the hex SHA-256 of the payload bytes only.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, Dim, Field, Provenance};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub const ETC_MAGIC: &[u8; 4] = b"ETC1";
pub const ETC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcVariable {
    pub name: String,
    pub dims: Vec<Dim>,
    pub units: String,
    pub standard_name: Option<String>,
    pub maskable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcHeader {
    pub format_version: u32,
    pub dims: BTreeMap<String, usize>,
    pub coords: BTreeMap<String, Vec<f64>>,
    pub variables: Vec<EtcVariable>,
    pub attrs: BTreeMap<String, String>,
    pub provenance: Provenance,
    pub radius_m: f64,
}

impl EtcHeader {
    fn from_dataset(ds: &Dataset, content_hash: String) -> Self {
        let mut dims = BTreeMap::new();
        let mut coords = BTreeMap::new();
        dims.insert("time".to_string(), ds.ntime());
        dims.insert("lat".to_string(), ds.grid.nlat());
        dims.insert("lon".to_string(), ds.grid.nlon());
        coords.insert("time".to_string(), ds.time_s.clone());
        coords.insert("lat".to_string(), ds.grid.lat_deg().to_vec());
        coords.insert("lon".to_string(), ds.grid.lon_deg().to_vec());
        if let Some(levels) = &ds.level_pa {
            dims.insert("level".to_string(), levels.len());
            coords.insert("level".to_string(), levels.clone());
        }
        let variables = ds
            .variables
            .values()
            .map(|f| EtcVariable {
                name: f.name.clone(),
                dims: f.dims.clone(),
                units: f.units.clone(),
                standard_name: f.standard_name.clone(),
                maskable: f.maskable,
            })
            .collect();
        let mut provenance = ds.provenance.clone();
        provenance.content_hash = content_hash;
        Self {
            format_version: ETC_FORMAT_VERSION,
            dims,
            coords,
            variables,
            attrs: ds.attrs.clone(),
            provenance,
            radius_m: ds.grid.radius_m(),
        }
    }

    /// Sorted keys, no insignificant whitespace, shortest round-trip floats.
    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_vec(&value)?)
    }

    fn payload_len(&self) -> Result<usize> {
        let mut total = 0usize;
        for v in &self.variables {
            let mut n = 1usize;
            for d in &v.dims {
                let size = self
                    .dims
                    .get(d.as_str())
                    .ok_or_else(|| Error::Format(format!("`{}` uses undeclared dim `{}`", v.name, d.as_str())))?;
                n = n
                    .checked_mul(*size)
                    .ok_or_else(|| Error::Format("declared sizes overflow".into()))?;
            }
            total = total
                .checked_add(
                    n.checked_mul(8)
                        .ok_or_else(|| Error::Format("declared sizes overflow".into()))?,
                )
                .ok_or_else(|| Error::Format("declared sizes overflow".into()))?;
        }
        Ok(total)
    }
}

fn check_coords_finite(ds: &Dataset) -> Result<()> {
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !finite(&ds.time_s) || !ds.level_pa.as_deref().is_none_or(finite) {
        return Err(Error::Shape("coordinate axes must be finite".into()));
    }
    Ok(())
}

/// Serializes `ds` as an ETC container. Nothing is written if the dataset
/// fails validation. Returns the number of bytes written.
pub fn write_dataset<W: Write>(ds: &Dataset, mut dest: W) -> Result<u64> {
    ds.validate()?;
    check_coords_finite(ds)?;
    let payload = ds.payload_bytes();
    let hash = hex::encode(Sha256::digest(&payload));
    let header = EtcHeader::from_dataset(ds, hash).to_canonical_json()?;
    let header_len = u32::try_from(header.len()).map_err(|_| Error::Shape("header exceeds 4 GiB".into()))?;
    dest.write_all(ETC_MAGIC)?;
    dest.write_all(&header_len.to_le_bytes())?;
    dest.write_all(&header)?;
    dest.write_all(&payload)?;
    dest.flush()?;
    Ok((8 + header.len() + payload.len()) as u64)
}

/// Parses an ETC container held in memory.
pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 4 || &bytes[..4] != ETC_MAGIC {
        return Err(Error::Format("bad magic (expected \"ETC1\")".into()));
    }
    if bytes.len() < 8 {
        return Err(Error::Corruption("truncated before header length".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Corruption("truncated header".into()))?;
    let header: EtcHeader = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| Error::Format(format!("header is not valid JSON: {e}")))?;
    if header.format_version != ETC_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    for (name, size) in &header.dims {
        let coord = header
            .coords
            .get(name)
            .ok_or_else(|| Error::Format(format!("dim `{name}` has no coordinate vector")))?;
        if coord.len() != *size {
            return Err(Error::Format(format!(
                "coordinate `{name}` has {} values, dim declares {size}",
                coord.len()
            )));
        }
    }
    let expected = header.payload_len()?;
    let payload = &bytes[header_end..];
    if payload.len() != expected {
        return Err(Error::Corruption(format!(
            "payload is {} bytes, header declares {expected}",
            payload.len()
        )));
    }
    let actual = hex::encode(Sha256::digest(payload));
    if actual != header.provenance.content_hash {
        return Err(Error::Integrity {
            expected: header.provenance.content_hash.clone(),
            actual,
        });
    }

    let coord = |name: &str| -> Result<Vec<f64>> {
        header
            .coords
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Format(format!("missing `{name}` coordinate")))
    };
    let grid =
        GridSpec::new(coord("lat")?, coord("lon")?, header.radius_m).map_err(|e| Error::Format(e.to_string()))?;
    let mut ds = Dataset::new(grid, coord("time")?);
    if header.dims.contains_key("level") {
        ds.level_pa = Some(coord("level")?);
    }
    ds.attrs = header.attrs.clone();
    ds.provenance = header.provenance.clone();

    let mut offset = 0usize;
    let mut variables = IndexMap::new();
    for v in &header.variables {
        let n: usize = v.dims.iter().map(|d| header.dims[d.as_str()]).product();
        let data = payload[offset..offset + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += 8 * n;
        let field = Field {
            name: v.name.clone(),
            dims: v.dims.clone(),
            data,
            units: v.units.clone(),
            standard_name: v.standard_name.clone(),
            maskable: v.maskable,
        };
        ds.check_field(&field).map_err(|e| Error::Format(e.to_string()))?;
        if variables.insert(v.name.clone(), field).is_some() {
            return Err(Error::Format(format!("duplicate variable `{}`", v.name)));
        }
    }
    ds.variables = variables;
    Ok(ds)
}

/// Reads a whole ETC container from a byte stream.
pub fn read_dataset<R: Read>(mut source: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_dataset(&bytes)
}

/// Reads from a path, where `-` is standard input.
pub fn read_path(path: &Path) -> Result<Dataset> {
    if path.as_os_str() == "-" {
        read_dataset(io::stdin().lock())
    } else {
        read_dataset(File::open(path)?)
    }
}

/// Writes to a path, where `-` is standard output.
pub fn write_path(ds: &Dataset, path: &Path) -> Result<u64> {
    if path.as_os_str() == "-" {
        write_dataset(ds, io::stdout().lock())
    } else {
        // Validate before creating the file so a bad dataset leaves no trace.
        ds.validate()?;
        write_dataset(ds, BufWriter::new(File::create(path)?))
    }
}

/// Required-key profile for [`validate_metadata`].
///
/// Keys are `units` and `standard_name` (required on every variable),
/// `provenance.<field>` (must be nonempty) and `attr.<name>` (global
/// attribute must exist and be nonempty).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataProfile {
    pub keys: Vec<String>,
}

impl Default for MetadataProfile {
    fn default() -> Self {
        Self {
            keys: vec!["units".into(), "standard_name".into(), "provenance.model_id".into()],
        }
    }
}

impl MetadataProfile {
    pub fn from_keys<I, S>(keys: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let keys: Vec<String> = keys.into_iter().map(Into::into).collect();
        let provenance_fields = Provenance::default().fields().map(|(k, _)| k);
        for key in &keys {
            let ok = match key.as_str() {
                "units" | "standard_name" => true,
                k if k.starts_with("provenance.") => provenance_fields.contains(&&k["provenance.".len()..]),
                k if k.starts_with("attr.") => k.len() > "attr.".len(),
                _ => false,
            };
            if !ok {
                return Err(Error::Config(format!("unknown metadata key `{key}`")));
            }
        }
        Ok(Self { keys })
    }
}

/// One metadata compliance problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Variable name, `provenance`, `attrs`, or an axis name.
    pub target: String,
    pub key: String,
    pub message: String,
}

fn monotone_violation(axis: &str, values: &[f64], increasing: bool) -> Option<Violation> {
    let bad = values
        .windows(2)
        .position(|w| if increasing { !(w[1] > w[0]) } else { !(w[1] < w[0]) })?;
    Some(Violation {
        target: axis.to_string(),
        key: "monotonic".to_string(),
        message: format!(
            "{axis} axis not strictly {} at index {}",
            if increasing { "increasing" } else { "decreasing" },
            bad + 1
        ),
    })
}

/// Lists metadata problems; an empty list means the dataset complies.
pub fn validate_metadata(ds: &Dataset, profile: &MetadataProfile) -> Vec<Violation> {
    let mut out = Vec::new();
    for key in &profile.keys {
        match key.as_str() {
            "units" => {
                for f in ds.variables.values().filter(|f| f.units.trim().is_empty()) {
                    out.push(Violation {
                        target: f.name.clone(),
                        key: "units".into(),
                        message: format!("variable `{}` has no units", f.name),
                    });
                }
            }
            "standard_name" => {
                for f in ds
                    .variables
                    .values()
                    .filter(|f| f.standard_name.as_deref().is_none_or(|s| s.trim().is_empty()))
                {
                    out.push(Violation {
                        target: f.name.clone(),
                        key: "standard_name".into(),
                        message: format!("variable `{}` has no standard_name", f.name),
                    });
                }
            }
            k if k.starts_with("provenance.") => {
                let field = &k["provenance.".len()..];
                let empty = ds
                    .provenance
                    .fields()
                    .iter()
                    .find(|(name, _)| *name == field)
                    .is_none_or(|(_, v)| v.trim().is_empty());
                if empty {
                    out.push(Violation {
                        target: "provenance".into(),
                        key: field.to_string(),
                        message: format!("provenance field `{field}` is empty"),
                    });
                }
            }
            k if k.starts_with("attr.") => {
                let name = &k["attr.".len()..];
                if ds.attrs.get(name).is_none_or(|v| v.trim().is_empty()) {
                    out.push(Violation {
                        target: "attrs".into(),
                        key: name.to_string(),
                        message: format!("global attribute `{name}` is missing"),
                    });
                }
            }
            _ => {}
        }
    }
    out.extend(monotone_violation("time", &ds.time_s, true));
    if let Some(levels) = &ds.level_pa {
        out.extend(monotone_violation("level", levels, false));
    }
    out.extend(monotone_violation("lat", ds.grid.lat_deg(), true));
    out
}
