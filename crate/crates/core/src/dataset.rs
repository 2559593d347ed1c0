//! Field and dataset containers shared by every diagnostic.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Axis a field may vary along. Fields declare dims in this canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    Time,
    Level,
    Lat,
    Lon,
}

impl Dim {
    pub fn as_str(self) -> &'static str {
        match self {
            Dim::Time => "time",
            Dim::Level => "level",
            Dim::Lat => "lat",
            Dim::Lon => "lon",
        }
    }
}

/// Dense row-major array of 64-bit floats over a subset of the dataset axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub dims: Vec<Dim>,
    pub data: Vec<f64>,
    pub units: String,
    pub standard_name: Option<String>,
    /// Masked cells carry NaN and are skipped by statistics.
    pub maskable: bool,
}

impl Field {
    pub fn new(name: impl Into<String>, dims: Vec<Dim>, data: Vec<f64>, units: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            dims,
            data,
            units: units.into(),
            standard_name: None,
            maskable: false,
        }
    }

    /// Field over (time, lat, lon).
    pub fn time_lat_lon(name: impl Into<String>, data: Vec<f64>, units: impl Into<String>) -> Self {
        Self::new(name, vec![Dim::Time, Dim::Lat, Dim::Lon], data, units)
    }

    pub fn with_standard_name(mut self, standard_name: impl Into<String>) -> Self {
        self.standard_name = Some(standard_name.into());
        self
    }

    pub fn maskable(mut self) -> Self {
        self.maskable = true;
        self
    }

    pub fn has(&self, dim: Dim) -> bool {
        self.dims.contains(&dim)
    }

    /// True when the data are bit-for-bit identical (NaN payloads included).
    pub fn bit_eq(&self, other: &Field) -> bool {
        self.name == other.name
            && self.dims == other.dims
            && self.units == other.units
            && self.standard_name == other.standard_name
            && self.maskable == other.maskable
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Model identity and lineage attached to every dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub model_version: String,
    pub description: String,
    pub code_url: String,
    pub training_data_description: String,
    /// Hex SHA-256 of the payload bytes, set when the dataset is sealed.
    pub content_hash: String,
}

impl Provenance {
    pub fn for_model(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            ..Self::default()
        }
    }

    /// Named fields in schema order, for validation and reporting.
    pub fn fields(&self) -> [(&'static str, &str); 6] {
        [
            ("model_id", &self.model_id),
            ("model_version", &self.model_version),
            ("description", &self.description),
            ("code_url", &self.code_url),
            ("training_data_description", &self.training_data_description),
            ("content_hash", &self.content_hash),
        ]
    }
}

/// Named variables on a common grid and time/level axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    /// Seconds since the epoch declared in `attrs["time_units"]`.
    pub time_s: Vec<f64>,
    /// Pressure levels in Pa, decreasing with height.
    pub level_pa: Option<Vec<f64>>,
    pub variables: IndexMap<String, Field>,
    pub attrs: BTreeMap<String, String>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(grid: GridSpec, time_s: Vec<f64>) -> Self {
        Self {
            grid,
            time_s,
            level_pa: None,
            variables: IndexMap::new(),
            attrs: BTreeMap::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn with_levels(mut self, level_pa: Vec<f64>) -> Self {
        self.level_pa = Some(level_pa);
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn ntime(&self) -> usize {
        self.time_s.len()
    }

    pub fn nlevel(&self) -> usize {
        self.level_pa.as_ref().map_or(0, Vec::len)
    }

    pub fn dim_size(&self, dim: Dim) -> usize {
        match dim {
            Dim::Time => self.ntime(),
            Dim::Level => self.nlevel(),
            Dim::Lat => self.grid.nlat(),
            Dim::Lon => self.grid.nlon(),
        }
    }

    /// Checks a field against the dataset axes without inserting it.
    pub fn check_field(&self, field: &Field) -> Result<()> {
        if field.name.is_empty() {
            return Err(Error::Shape("variable with empty name".into()));
        }
        if field.dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape(format!(
                "`{}`: dims must be a strictly ordered subset of (time, level, lat, lon)",
                field.name
            )));
        }
        if field.has(Dim::Level) && self.level_pa.is_none() {
            return Err(Error::Shape(format!(
                "`{}` declares a level dim but the dataset has no level axis",
                field.name
            )));
        }
        let expected: usize = field.dims.iter().map(|&d| self.dim_size(d)).product();
        if field.data.len() != expected {
            return Err(Error::Shape(format!(
                "`{}` has {} values, dims imply {}",
                field.name,
                field.data.len(),
                expected
            )));
        }
        if !field.maskable && field.data.iter().any(|v| v.is_nan()) {
            return Err(Error::Shape(format!(
                "`{}` contains NaN but is not maskable",
                field.name
            )));
        }
        Ok(())
    }

    /// Inserts a variable after checking it against the axes.
    pub fn add_variable(&mut self, field: Field) -> Result<()> {
        self.check_field(&field)?;
        if self.variables.contains_key(&field.name) {
            return Err(Error::Shape(format!("duplicate variable `{}`", field.name)));
        }
        self.variables.insert(field.name.clone(), field);
        Ok(())
    }

    pub fn with_variable(mut self, field: Field) -> Result<Self> {
        self.add_variable(field)?;
        Ok(self)
    }

    /// Re-checks every variable and the coordinate axes.
    pub fn validate(&self) -> Result<()> {
        if self.level_pa.as_ref().is_some_and(|l| l.is_empty()) {
            return Err(Error::Shape("empty level axis".into()));
        }
        for (name, field) in &self.variables {
            if name != &field.name {
                return Err(Error::Shape(format!(
                    "variable key `{name}` != field name `{}`",
                    field.name
                )));
            }
            self.check_field(field)?;
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Result<&Field> {
        self.variables
            .get(name)
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.variables.contains_key(name)
    }

    /// Horizontal planes of a variable that varies over (lat, lon).
    pub fn planes(&self, name: &str) -> Result<Planes<'_>> {
        let field = self.variable(name)?;
        if !(field.has(Dim::Lat) && field.has(Dim::Lon)) {
            return Err(Error::Shape(format!("`{name}` is not defined over lat/lon")));
        }
        Ok(Planes {
            field,
            ntime: if field.has(Dim::Time) { self.ntime() } else { 1 },
            nlevel: if field.has(Dim::Level) { self.nlevel() } else { 1 },
            plane_len: self.grid.ncell(),
        })
    }

    /// Payload bytes: every variable in declared order, little-endian f64.
    pub fn payload_bytes(&self) -> Vec<u8> {
        let n: usize = self.variables.values().map(|f| f.data.len()).sum();
        let mut out = Vec::with_capacity(n * 8);
        for f in self.variables.values() {
            for v in &f.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Hex SHA-256 of the payload.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.payload_bytes()))
    }

    /// Sets `provenance.content_hash` from the current payload.
    pub fn seal(&mut self) {
        self.provenance.content_hash = self.content_hash();
    }

    pub fn sealed(mut self) -> Self {
        self.seal();
        self
    }

    /// Equality with bitwise comparison of variable data.
    pub fn bit_eq(&self, other: &Dataset) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.grid == other.grid
            && bits(&self.time_s) == bits(&other.time_s)
            && self.level_pa.as_deref().map(bits) == other.level_pa.as_deref().map(bits)
            && self.attrs == other.attrs
            && self.provenance == other.provenance
            && self.variables.len() == other.variables.len()
            && self
                .variables
                .values()
                .zip(other.variables.values())
                .all(|(a, b)| a.bit_eq(b))
    }
}

/// Iteration helper over the (lat, lon) planes of one variable.
#[derive(Debug, Clone, Copy)]
pub struct Planes<'a> {
    field: &'a Field,
    pub ntime: usize,
    pub nlevel: usize,
    plane_len: usize,
}

impl<'a> Planes<'a> {
    pub fn field(&self) -> &'a Field {
        self.field
    }

    /// Plane at time `t` and level `l` (both 0 when the dim is absent).
    pub fn get(&self, t: usize, l: usize) -> &'a [f64] {
        let start = (t * self.nlevel + l) * self.plane_len;
        &self.field.data[start..start + self.plane_len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_variable_checks_shape() {
        let g = GridSpec::regular(2, 4).unwrap();
        let mut ds = Dataset::new(g, vec![0.0, 1.0]);
        assert!(ds.add_variable(Field::time_lat_lon("x", vec![0.0; 15], "1")).is_err());
        ds.add_variable(Field::time_lat_lon("x", vec![0.0; 16], "1")).unwrap();
        assert!(ds.add_variable(Field::time_lat_lon("x", vec![0.0; 16], "1")).is_err());
        let bad_order = Field::new("y", vec![Dim::Lon, Dim::Lat], vec![0.0; 8], "1");
        assert!(ds.add_variable(bad_order).is_err());
        let nan = Field::new("z", vec![Dim::Lat, Dim::Lon], vec![f64::NAN; 8], "1");
        assert!(ds.add_variable(nan.clone()).is_err());
        ds.add_variable(nan.maskable()).unwrap();
    }

    #[test]
    fn planes_index_time_and_level() {
        let g = GridSpec::regular(2, 4).unwrap();
        let mut ds = Dataset::new(g, vec![0.0, 1.0]).with_levels(vec![1000.0, 500.0, 100.0]);
        let data: Vec<f64> = (0..2 * 3 * 8).map(|i| i as f64).collect();
        ds.add_variable(Field::new(
            "t",
            vec![Dim::Time, Dim::Level, Dim::Lat, Dim::Lon],
            data,
            "K",
        ))
        .unwrap();
        let p = ds.planes("t").unwrap();
        assert_eq!(p.get(1, 2)[0], ((3 + 2) * 8) as f64);
    }

    #[test]
    fn empty_payload_hash() {
        let ds = Dataset::new(GridSpec::regular(2, 4).unwrap(), vec![0.0]);
        assert_eq!(
            ds.content_hash(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
