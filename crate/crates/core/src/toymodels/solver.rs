use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{AdapterInfo, AdvertisedVariable, ModelAdapter};
use crate::error::{Error, Result};
use crate::grid::{area_weights, CompensatedSum, GridSpec};

/// Zonal wind of the Gaussian jet, m/s.
pub fn jet_wind(lat_rad: f64, u_max: f64, center_deg: f64, width_deg: f64) -> f64 {
    let x = (lat_rad - center_deg.to_radians()) / width_deg.to_radians();
    u_max * (-x * x).exp()
}

/// Prescribed, time-independent advecting wind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindSpec {
    Still,
    /// Rigid rotation about an axis tilted by `alpha_rad` from the pole.
    SolidBody {
        u0_mps: f64,
        alpha_rad: f64,
    },
    ZonalJet {
        u_max_mps: f64,
        center_deg: f64,
        width_deg: f64,
    },
}

impl WindSpec {
    /// Cell-center (u, v) in m/s.
    pub fn velocity(&self, lat_rad: f64, lon_rad: f64) -> (f64, f64) {
        match *self {
            WindSpec::Still => (0.0, 0.0),
            WindSpec::SolidBody { u0_mps, alpha_rad } => (
                u0_mps * (lat_rad.cos() * alpha_rad.cos() + lat_rad.sin() * lon_rad.cos() * alpha_rad.sin()),
                -u0_mps * lon_rad.sin() * alpha_rad.sin(),
            ),
            WindSpec::ZonalJet {
                u_max_mps,
                center_deg,
                width_deg,
            } => (jet_wind(lat_rad, u_max_mps, center_deg, width_deg), 0.0),
        }
    }

    /// Largest wind speed anywhere on the sphere.
    pub fn max_speed(&self) -> f64 {
        match *self {
            WindSpec::Still => 0.0,
            WindSpec::SolidBody { u0_mps, .. } => u0_mps.abs(),
            WindSpec::ZonalJet { u_max_mps, .. } => u_max_mps.abs(),
        }
    }
}

/// Volume fluxes (m²/s per unit depth) through cell faces of an equal-angle
/// grid. `east[j*nlon + k]` crosses the east face of cell (j, k);
/// `north[j*nlon + k]` crosses the southern face of row j, so rows 0 and
/// nlat hold the pole faces, which carry no flux.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceWinds {
    nlat: usize,
    nlon: usize,
    pub east: Vec<f64>,
    pub north: Vec<f64>,
    /// Cell area per row, m².
    pub area: Vec<f64>,
}

impl FaceWinds {
    pub fn new(grid: &GridSpec, spec: &WindSpec) -> Result<Self> {
        if !grid.is_equal_angle() {
            return Err(Error::InvalidGrid("the upwind solver needs an equal-angle grid".into()));
        }
        let (nlat, nlon) = (grid.nlat(), grid.nlon());
        let a = grid.radius_m();
        let dphi = PI / nlat as f64;
        let dlam = grid.dlon_rad();
        let cos = grid.cos_lat();
        let area: Vec<f64> = cos
            .iter()
            .map(|c| a * a * dlam * 2.0 * (0.5 * dphi).sin() * c)
            .collect();
        let edge_lat = |jj: usize| -0.5 * PI + jj as f64 * dphi;
        let mut east = vec![0.0; nlat * nlon];
        let mut north = vec![0.0; (nlat + 1) * nlon];
        match *spec {
            WindSpec::Still => {}
            WindSpec::ZonalJet {
                u_max_mps,
                center_deg,
                width_deg,
            } => {
                for j in 0..nlat {
                    let u = jet_wind(grid.lat_rad(j), u_max_mps, center_deg, width_deg);
                    east[j * nlon..(j + 1) * nlon].fill(u * a * dphi);
                }
            }
            WindSpec::SolidBody { u0_mps, alpha_rad } => {
                // Streamfunction at cell corners; face fluxes are its
                // differences, so every cell's net flux cancels.
                let (sa, ca) = alpha_rad.sin_cos();
                let mut psi = vec![0.0; (nlat + 1) * nlon];
                for jj in 0..=nlat {
                    let phi = edge_lat(jj);
                    let (sp, cp) = if jj == 0 {
                        (-1.0, 0.0)
                    } else if jj == nlat {
                        (1.0, 0.0)
                    } else {
                        phi.sin_cos()
                    };
                    for k in 0..nlon {
                        let lam = grid.lon_rad(k) + 0.5 * dlam;
                        psi[jj * nlon + k] = -a * u0_mps * (sp * ca - lam.cos() * cp * sa);
                    }
                }
                for j in 0..nlat {
                    for k in 0..nlon {
                        east[j * nlon + k] = -(psi[(j + 1) * nlon + k] - psi[j * nlon + k]);
                    }
                }
                for jj in 1..nlat {
                    for k in 0..nlon {
                        let west = (k + nlon - 1) % nlon;
                        north[jj * nlon + k] = psi[jj * nlon + k] - psi[jj * nlon + west];
                    }
                }
            }
        }
        Ok(Self {
            nlat,
            nlon,
            east,
            north,
            area,
        })
    }

    /// Largest total outflow per unit area over all cells, 1/s. A step of
    /// `dt` is positivity-preserving when `dt * max_outflow_rate() <= 1`.
    pub fn max_outflow_rate(&self) -> f64 {
        let (nlat, nlon) = (self.nlat, self.nlon);
        let mut worst = 0.0_f64;
        for j in 0..nlat {
            for k in 0..nlon {
                let west = (k + nlon - 1) % nlon;
                let out = self.east[j * nlon + k].max(0.0)
                    + (-self.east[j * nlon + west]).max(0.0)
                    + self.north[(j + 1) * nlon + k].max(0.0)
                    + (-self.north[j * nlon + k]).max(0.0);
                worst = worst.max(out / self.area[j]);
            }
        }
        worst
    }

    /// Net outflow of each cell divided by its area, 1/s.
    pub fn divergence(&self) -> Vec<f64> {
        let (nlat, nlon) = (self.nlat, self.nlon);
        let mut out = vec![0.0; nlat * nlon];
        for j in 0..nlat {
            for k in 0..nlon {
                let west = (k + nlon - 1) % nlon;
                out[j * nlon + k] = (self.east[j * nlon + k] - self.east[j * nlon + west]
                    + self.north[(j + 1) * nlon + k]
                    - self.north[j * nlon + k])
                    / self.area[j];
            }
        }
        out
    }

    /// One first-order upwind step of a single (lat, lon) plane.
    pub fn advect(&self, q: &[f64], dt: f64, out: &mut [f64]) {
        let (nlat, nlon) = (self.nlat, self.nlon);
        let mut fe = vec![0.0; nlat * nlon];
        for j in 0..nlat {
            for k in 0..nlon {
                let u = self.east[j * nlon + k];
                let up = if u > 0.0 {
                    q[j * nlon + k]
                } else {
                    q[j * nlon + (k + 1) % nlon]
                };
                fe[j * nlon + k] = u * up;
            }
        }
        let mut fn_ = vec![0.0; (nlat + 1) * nlon];
        for jj in 1..nlat {
            for k in 0..nlon {
                let v = self.north[jj * nlon + k];
                let up = if v > 0.0 {
                    q[(jj - 1) * nlon + k]
                } else {
                    q[jj * nlon + k]
                };
                fn_[jj * nlon + k] = v * up;
            }
        }
        for j in 0..nlat {
            let c = dt / self.area[j];
            for k in 0..nlon {
                let i = j * nlon + k;
                let west = j * nlon + (k + nlon - 1) % nlon;
                let net = fe[i] - fe[west] + fn_[(j + 1) * nlon + k] - fn_[i];
                out[i] = q[i] - c * net;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Identity,
    Upwind,
    Leaky,
    Teleport,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Identity => "identity",
            Variant::Upwind => "upwind",
            Variant::Leaky => "leaky",
            Variant::Teleport => "teleport",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "echo" => Ok(Variant::Identity),
            "upwind" => Ok(Variant::Upwind),
            "leaky" => Ok(Variant::Leaky),
            "teleport" => Ok(Variant::Teleport),
            other => Err(Error::Config(format!(
                "unknown toy model variant `{other}` (identity, upwind, leaky, teleport)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub variant: Variant,
    /// Target outflow Courant number when `dt_seconds` is not given.
    pub cfl: f64,
    pub dt_seconds: Option<f64>,
    pub leak_lambda: f64,
    pub smoothing_strength: f64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Upwind,
            cfl: 0.5,
            dt_seconds: None,
            leak_lambda: 1e-3,
            smoothing_strength: 0.1,
        }
    }
}

impl ToyModelConfig {
    pub fn variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if let Some(dt) = self.dt_seconds {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if !(0.0..1.0).contains(&self.leak_lambda) {
            return Err(Error::Config(format!(
                "leak lambda must lie in [0, 1), got {}",
                self.leak_lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.smoothing_strength) {
            return Err(Error::Config(format!(
                "smoothing strength must lie in [0, 1], got {}",
                self.smoothing_strength
            )));
        }
        Ok(())
    }
}

/// In-process toy model advecting every advertised variable with a
/// prescribed wind.
#[derive(Debug, Clone)]
pub struct ToyModel {
    info: AdapterInfo,
    config: ToyModelConfig,
    winds: FaceWinds,
    weights: Vec<f64>,
}

impl ToyModel {
    pub fn new(
        grid: GridSpec,
        wind: WindSpec,
        variables: Vec<AdvertisedVariable>,
        config: ToyModelConfig,
    ) -> Result<Self> {
        config.validate()?;
        if variables.is_empty() {
            return Err(Error::Config("toy model needs at least one variable".into()));
        }
        let winds = FaceWinds::new(&grid, &wind)?;
        let rate = winds.max_outflow_rate();
        let dt = match config.dt_seconds {
            Some(dt) => {
                if dt * rate > 1.0 + 1e-12 {
                    return Err(Error::Config(format!(
                        "dt {dt} s gives outflow Courant number {:.4} > 1",
                        dt * rate
                    )));
                }
                dt
            }
            None if rate > 0.0 => config.cfl / rate,
            None => 3600.0,
        };
        let weights = area_weights(&grid);
        Ok(Self {
            info: AdapterInfo {
                id: format!("toy-{}", config.variant.as_str()),
                grid,
                variables,
                dt_seconds: dt,
                deterministic: true,
                max_wind_mps: Some(wind.max_speed()),
            },
            config,
            winds,
            weights,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.info.id = id.into();
        self
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.config
    }

    pub fn winds(&self) -> &FaceWinds {
        &self.winds
    }

    /// Advances one plane in place according to the variant.
    fn step_plane(&self, q: &[f64], out: &mut [f64]) {
        if self.config.variant == Variant::Identity {
            out.copy_from_slice(q);
            return;
        }
        self.winds.advect(q, self.info.dt_seconds, out);
        match self.config.variant {
            Variant::Leaky => {
                let keep = 1.0 - self.config.leak_lambda;
                out.iter_mut().for_each(|v| *v *= keep);
            }
            Variant::Teleport => {
                let s = self.config.smoothing_strength;
                let mean = out
                    .iter()
                    .zip(&self.weights)
                    .map(|(v, w)| v * w)
                    .collect::<CompensatedSum>()
                    .value();
                out.iter_mut().for_each(|v| *v = (1.0 - s) * *v + s * mean);
            }
            Variant::Identity | Variant::Upwind => {}
        }
    }
}

impl ModelAdapter for ToyModel {
    fn info(&self) -> &AdapterInfo {
        &self.info
    }

    fn step(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.info.state_len() {
            return Err(Error::Shape(format!(
                "state has {} values, expected {}",
                state.len(),
                self.info.state_len()
            )));
        }
        let n = self.info.grid.ncell();
        let mut out = vec![0.0; state.len()];
        for (q, o) in state.chunks(n).zip(out.chunks_mut(n)) {
            self.step_plane(q, o);
        }
        Ok(out)
    }
}
