use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{serve, AdvertisedVariable, ToyModel, ToyModelConfig, Variant, WindSpec};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, EARTH_RADIUS_M};

/// Which idealized flow a built-in toy model advects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Cosine-bell tracer `q` in solid-body rotation.
    Advection,
    /// Layer height `h` carried by a zonal Gaussian jet.
    Jet,
}

impl CaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Advection => "advection",
            CaseKind::Jet => "jet",
        }
    }

    pub fn variable(self) -> AdvertisedVariable {
        match self {
            CaseKind::Advection => AdvertisedVariable::new("q", "1"),
            CaseKind::Jet => AdvertisedVariable::new("h", "m"),
        }
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "advection" | "advection_solid_body" => Ok(CaseKind::Advection),
            "jet" | "balanced_jet" => Ok(CaseKind::Jet),
            other => Err(Error::Config(format!("unknown case `{other}` (advection, jet)"))),
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full description of a built-in toy model, convertible to and from the
/// `key=value` arguments accepted by the adapter executable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinAdapterSpec {
    pub case: CaseKind,
    pub nlat: usize,
    pub nlon: usize,
    pub config: ToyModelConfig,
    pub alpha_deg: f64,
    pub u0_mps: f64,
    pub jet_u_max_mps: f64,
    pub jet_center_deg: f64,
    pub jet_width_deg: f64,
}

impl Default for BuiltinAdapterSpec {
    fn default() -> Self {
        Self {
            case: CaseKind::Jet,
            nlat: 64,
            nlon: 128,
            config: ToyModelConfig::default(),
            alpha_deg: 45.0,
            u0_mps: 2.0 * PI * EARTH_RADIUS_M / (12.0 * 86_400.0),
            jet_u_max_mps: 35.0,
            jet_center_deg: 45.0,
            jet_width_deg: 10.0,
        }
    }
}

impl BuiltinAdapterSpec {
    pub fn new(variant: Variant, case: CaseKind) -> Self {
        let mut s = Self {
            case,
            ..Self::default()
        };
        s.config.variant = variant;
        s
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::regular(self.nlat, self.nlon)
    }

    pub fn wind(&self) -> WindSpec {
        match self.case {
            CaseKind::Advection => WindSpec::SolidBody {
                u0_mps: self.u0_mps,
                alpha_rad: self.alpha_deg.to_radians(),
            },
            CaseKind::Jet => WindSpec::ZonalJet {
                u_max_mps: self.jet_u_max_mps,
                center_deg: self.jet_center_deg,
                width_deg: self.jet_width_deg,
            },
        }
    }

    /// The model, named after its variant and flow, e.g. `toy-upwind-jet`.
    pub fn build(&self) -> Result<ToyModel> {
        let model = ToyModel::new(self.grid()?, self.wind(), vec![self.case.variable()], self.config)?;
        let id = format!("toy-{}-{}", self.config.variant.as_str(), self.case);
        Ok(model.with_id(id))
    }

    /// Sets one `key=value` option.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "variant" => self.config.variant = value.parse()?,
            "case" => self.case = value.parse()?,
            "nlat" => self.nlat = num(key, value)?,
            "nlon" => self.nlon = num(key, value)?,
            "cfl" => self.config.cfl = num(key, value)?,
            "dt" => self.config.dt_seconds = Some(num(key, value)?),
            "lambda" => self.config.leak_lambda = num(key, value)?,
            "s" => self.config.smoothing_strength = num(key, value)?,
            "alpha_deg" => self.alpha_deg = num(key, value)?,
            "u0" => self.u0_mps = num(key, value)?,
            "u_max" => self.jet_u_max_mps = num(key, value)?,
            "jet_lat" => self.jet_center_deg = num(key, value)?,
            "jet_width" => self.jet_width_deg = num(key, value)?,
            other => return Err(Error::Config(format!("unknown adapter option `{other}`"))),
        }
        Ok(())
    }

    pub fn from_kv<I, S>(args: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut spec = Self::default();
        for arg in args {
            let arg = arg.as_ref();
            let (k, v) = arg
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{arg}`")))?;
            spec.set(k.trim(), v.trim())?;
        }
        spec.config.validate()?;
        Ok(spec)
    }

    /// Arguments that reproduce this spec exactly (floats print in
    /// shortest round-trip form).
    pub fn to_args(&self) -> Vec<String> {
        let mut args = vec![
            format!("variant={}", self.config.variant.as_str()),
            format!("case={}", self.case),
            format!("nlat={}", self.nlat),
            format!("nlon={}", self.nlon),
            format!("cfl={}", self.config.cfl),
            format!("lambda={}", self.config.leak_lambda),
            format!("s={}", self.config.smoothing_strength),
            format!("alpha_deg={}", self.alpha_deg),
            format!("u0={}", self.u0_mps),
            format!("u_max={}", self.jet_u_max_mps),
            format!("jet_lat={}", self.jet_center_deg),
            format!("jet_width={}", self.jet_width_deg),
        ];
        if let Some(dt) = self.config.dt_seconds {
            args.push(format!("dt={dt}"));
        }
        args
    }
}

/// Entry point of the adapter executable: builds the toy model described
/// by `args` and serves it over stdin/stdout. Returns the exit status.
pub fn serve_main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut model = match BuiltinAdapterSpec::from_kv(args).and_then(|s| s.build()) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("esm-toy-adapter: {e}");
            return 2;
        }
    };
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    match serve(&mut model, stdin, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("esm-toy-adapter: {e}");
            3
        }
    }
}
