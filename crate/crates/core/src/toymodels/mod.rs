//! The stepping-adapter contract and the built-in reference subjects: a
//! conservative upwind advection solver, variants of it with one injected
//! defect each, and an out-of-process adapter speaking the frame protocol.

mod builtin;
mod protocol;
mod solver;

pub use builtin::{serve_main, BuiltinAdapterSpec, CaseKind};
pub use protocol::{
    read_frame, serve, write_frame, Handshake, SubprocessAdapter, SubprocessOptions, FRAME_MAGIC, PROTOCOL,
};
pub use solver::{jet_wind, FaceWinds, ToyModel, ToyModelConfig, Variant, WindSpec};

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertisedVariable {
    pub name: String,
    pub units: String,
}

impl AdvertisedVariable {
    pub fn new(name: impl Into<String>, units: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            units: units.into(),
        }
    }
}

/// What an adapter declares about itself before the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterInfo {
    pub id: String,
    pub grid: GridSpec,
    pub variables: Vec<AdvertisedVariable>,
    pub dt_seconds: f64,
    pub deterministic: bool,
    /// Largest advecting wind, for tracer causality bounds.
    pub max_wind_mps: Option<f64>,
}

impl AdapterInfo {
    /// Length of a state vector: one (lat, lon) plane per variable.
    pub fn state_len(&self) -> usize {
        self.variables.len() * self.grid.ncell()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }
}

/// An autoregressive model: each call maps the current state to the next.
///
/// A state is the advertised variables' (lat, lon) planes concatenated in
/// advertised order, row-major, exactly as on the wire.
pub trait ModelAdapter: Send {
    fn info(&self) -> &AdapterInfo;
    fn step(&mut self, state: &[f64]) -> Result<Vec<f64>>;
}

impl<T: ModelAdapter + ?Sized> ModelAdapter for Box<T> {
    fn info(&self) -> &AdapterInfo {
        (**self).info()
    }

    fn step(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        (**self).step(state)
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone)]
pub struct IdentityAdapter {
    info: AdapterInfo,
}

impl IdentityAdapter {
    pub fn new(grid: GridSpec, variables: Vec<AdvertisedVariable>, dt_seconds: f64) -> Self {
        Self {
            info: AdapterInfo {
                id: "identity".into(),
                grid,
                variables,
                dt_seconds,
                deterministic: true,
                max_wind_mps: Some(0.0),
            },
        }
    }
}

impl ModelAdapter for IdentityAdapter {
    fn info(&self) -> &AdapterInfo {
        &self.info
    }

    fn step(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(state.to_vec())
    }
}

/// Wraps a model so that the zonally asymmetric part of every output is a
/// fixed pattern, the way a learned surface imprint would appear. The zonal
/// mean of each row comes from the inner model.
pub struct ImprintedAdapter<A> {
    inner: A,
    imprint: Vec<f64>,
    info: AdapterInfo,
}

impl<A: ModelAdapter> ImprintedAdapter<A> {
    /// `imprint` has one value per state element; its zonal mean is removed.
    pub fn new(inner: A, imprint: Vec<f64>) -> Result<Self> {
        let mut info = inner.info().clone();
        if imprint.len() != info.state_len() {
            return Err(crate::Error::Shape(format!(
                "imprint has {} values, state has {}",
                imprint.len(),
                info.state_len()
            )));
        }
        let nlon = info.grid.nlon();
        let mut imprint = imprint;
        for row in imprint.chunks_mut(nlon) {
            let mean = row.iter().sum::<f64>() / nlon as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        info.id = format!("{}+imprint", info.id);
        Ok(Self { inner, imprint, info })
    }
}

impl<A: ModelAdapter> ModelAdapter for ImprintedAdapter<A> {
    fn info(&self) -> &AdapterInfo {
        &self.info
    }

    fn step(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.inner.step(state)?;
        let nlon = self.info.grid.nlon();
        for (row, bias) in out.chunks_mut(nlon).zip(self.imprint.chunks(nlon)) {
            let mean = row.iter().sum::<f64>() / nlon as f64;
            for (v, b) in row.iter_mut().zip(bias) {
                *v = mean + b;
            }
        }
        Ok(out)
    }
}
