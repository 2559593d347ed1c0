//! Seeded synthetic datasets: a monthly "climate" with known physical
//! relationships for end-to-end runs, and arbitrary datasets for format
//! round-trip testing.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Dim, Field, Provenance};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, EARTH_RADIUS_M};
use crate::sanity::{specific_humidity_at_rh, GRAVITY};

const SECONDS_PER_DAY: f64 = 86_400.0;
const MONTH_DAYS: [f64; 12] = [31., 28., 31., 30., 31., 30., 31., 31., 30., 31., 30., 31.];

/// Water vapor grows by this fraction per kelvin of warming.
pub const FIXTURE_TCWV_RATE: f64 = 0.07;
/// Precipitation grows by this fraction per kelvin of warming.
pub const FIXTURE_PR_RATE: f64 = 0.015;
/// Pressure levels written when `levels` is set, Pa.
pub const FIXTURE_LEVELS_PA: [f64; 3] = [100_000.0, 92_500.0, 85_000.0];

/// Recipe for a monthly synthetic climate on a regular grid (no-leap
/// calendar, mid-month timestamps).
///
/// Variables: `tas`, `pr`, `tcwv`, `ps` (dry mass exactly conserved) and
/// `psl` with travelling Gaussian lows. With `levels`, also `ta` and `q` on
/// [`FIXTURE_LEVELS_PA`] at 80 % relative humidity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimateFixture {
    pub model_id: String,
    pub nlat: usize,
    pub nlon: usize,
    pub months: usize,
    /// Seeds the interannual variability and the noise.
    pub seed: u64,
    /// Uniform offset added to `tas`, K.
    pub tas_bias_k: f64,
    /// Amplitude of a zonal-wavenumber-4 `tas` error, K.
    pub tas_wave_k: f64,
    /// Standard deviation of white noise on `tas`, K.
    pub tas_noise_k: f64,
    /// Relative offset applied to `pr`.
    pub pr_bias_frac: f64,
    pub trend_k_per_year: f64,
    pub interannual_sd_k: f64,
    pub levels: bool,
    pub lows: usize,
    pub low_depth_pa: f64,
    pub low_radius_m: f64,
}

impl Default for ClimateFixture {
    fn default() -> Self {
        Self {
            model_id: "reference".into(),
            nlat: 64,
            nlon: 128,
            months: 100,
            seed: 0,
            tas_bias_k: 0.0,
            tas_wave_k: 0.0,
            tas_noise_k: 0.0,
            pr_bias_frac: 0.0,
            trend_k_per_year: 0.03,
            interannual_sd_k: 0.15,
            levels: false,
            lows: 3,
            low_depth_pa: 2000.0,
            low_radius_m: 4.0e5,
        }
    }
}

/// Mid-month times in seconds for `months` consecutive no-leap months.
pub fn monthly_times(months: usize) -> Vec<f64> {
    let mut start = 0.0;
    (0..months)
        .map(|m| {
            let len = MONTH_DAYS[m % 12];
            let t = (start + 0.5 * len) * SECONDS_PER_DAY;
            start += len;
            t
        })
        .collect()
}

impl ClimateFixture {
    pub fn model(model_id: &str, seed: u64) -> Self {
        Self {
            model_id: model_id.into(),
            seed,
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<Dataset> {
        if self.months == 0 {
            return Err(Error::Config("fixture needs at least one month".into()));
        }
        let grid = GridSpec::regular(self.nlat, self.nlon)?;
        let time = monthly_times(self.months);
        let years = self.months.div_ceil(12);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let annual = Normal::new(0.0, self.interannual_sd_k.max(0.0))
            .map_err(|e| Error::Config(format!("interannual_sd_k: {e}")))?;
        let noise =
            Normal::new(0.0, self.tas_noise_k.max(0.0)).map_err(|e| Error::Config(format!("tas_noise_k: {e}")))?;
        let warming: Vec<f64> = (0..years)
            .map(|y| self.trend_k_per_year * y as f64 + annual.sample(&mut rng))
            .collect();

        let n = grid.ncell();
        let nt = time.len();
        let mut tas = Vec::with_capacity(nt * n);
        let mut pr = Vec::with_capacity(nt * n);
        let mut tcwv = Vec::with_capacity(nt * n);
        let mut ps = Vec::with_capacity(nt * n);
        let mut psl = Vec::with_capacity(nt * n);
        for (t, &ts) in time.iter().enumerate() {
            let dw = warming[t / 12];
            let season = -(2.0 * PI * (ts / SECONDS_PER_DAY) / 365.0).cos();
            let lows = self.low_centres(t);
            for j in 0..grid.nlat() {
                let phi = grid.lat_rad(j);
                let (s, c) = phi.sin_cos();
                for k in 0..grid.nlon() {
                    let lam = grid.lon_rad(k);
                    let clean = 300.0 - 45.0 * s * s + 8.0 * s * season + 1.5 * c * (2.0 * lam).cos() + dw;
                    let temp =
                        clean + self.tas_bias_k + self.tas_wave_k * c * (4.0 * lam).cos() + noise.sample(&mut rng);
                    let w = 20.0 * (0.2 + c * c) * (FIXTURE_TCWV_RATE * (temp - 288.0)).exp();
                    let p = 3e-5 * (0.3 + c * c) * (FIXTURE_PR_RATE * dw).exp() * (1.0 + self.pr_bias_frac);
                    let dry = 100_000.0 - 2_000.0 * (2.0 * phi).sin().powi(2);
                    tas.push(temp);
                    tcwv.push(w);
                    pr.push(p);
                    ps.push(dry + GRAVITY * w);
                    let mut slp = 101_325.0 + 800.0 * (2.0 * phi).cos();
                    for &(la, lo) in &lows {
                        let d = crate::grid::great_circle_distance(
                            (la, lo),
                            (grid.lat_deg()[j], grid.lon_deg()[k]),
                            EARTH_RADIUS_M,
                        );
                        slp -= self.low_depth_pa * (-(d / self.low_radius_m).powi(2)).exp();
                    }
                    psl.push(slp);
                }
            }
        }

        let field =
            |name: &str, data, units: &str, std: &str| Field::time_lat_lon(name, data, units).with_standard_name(std);
        let mut ds = Dataset::new(grid.clone(), time)
            .with_attr("calendar", "noleap")
            .with_attr("time_units", "seconds since 0000-01-01")
            .with_provenance(Provenance {
                model_id: self.model_id.clone(),
                model_version: "synthetic".into(),
                description: "seeded synthetic monthly climate".into(),
                ..Provenance::default()
            });
        if self.levels {
            ds = ds.with_levels(FIXTURE_LEVELS_PA.to_vec());
        }
        ds.add_variable(field("tas", tas.clone(), "K", "air_temperature"))?;
        ds.add_variable(field("pr", pr, "kg m-2 s-1", "precipitation_flux"))?;
        ds.add_variable(field("tcwv", tcwv, "kg m-2", "atmosphere_mass_content_of_water_vapor"))?;
        ds.add_variable(field("ps", ps, "Pa", "surface_air_pressure"))?;
        ds.add_variable(field("psl", psl, "Pa", "air_pressure_at_mean_sea_level"))?;
        if self.levels {
            let nl = FIXTURE_LEVELS_PA.len();
            let mut ta = Vec::with_capacity(nt * nl * n);
            let mut q = Vec::with_capacity(nt * nl * n);
            for t in 0..nt {
                let surf = &tas[t * n..(t + 1) * n];
                for &p in &FIXTURE_LEVELS_PA {
                    let lapse = 6.5e-3 * 8_000.0 * (100_000.0 / p).ln();
                    for &ts in surf {
                        let temp = ts - lapse;
                        ta.push(temp);
                        q.push(specific_humidity_at_rh(temp, p, 0.8));
                    }
                }
            }
            let dims = vec![Dim::Time, Dim::Level, Dim::Lat, Dim::Lon];
            ds.add_variable(Field::new("ta", dims.clone(), ta, "K").with_standard_name("air_temperature"))?;
            ds.add_variable(Field::new("q", dims, q, "kg kg-1").with_standard_name("specific_humidity"))?;
        }
        Ok(ds.sealed())
    }

    /// Centres (lat, lon) of the travelling lows at month `t`.
    pub fn low_centres(&self, t: usize) -> Vec<(f64, f64)> {
        (0..self.lows)
            .map(|i| {
                let lat = if i % 2 == 0 { 1.0 } else { -1.0 } * (35.0 + 10.0 * (i / 2) as f64);
                let lon = (37.0 + 360.0 * i as f64 / self.lows as f64 + 9.0 * t as f64).rem_euclid(360.0);
                (lat, lon)
            })
            .collect()
    }
}

fn random_value<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..10) {
        0 => f64::from_bits(rng.random()),
        1 => [
            0.0,
            -0.0,
            f64::MIN_POSITIVE / 3.0,
            f64::MAX,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ][rng.random_range(0..6)],
        _ => rng.random_range(-1e6..1e6),
    }
}

fn random_text<R: Rng>(rng: &mut R) -> String {
    const PIECES: [&str; 8] = ["a", "Z", "_", " ", "é", "\"", "\\", "λ"];
    (0..rng.random_range(0..6))
        .map(|_| PIECES[rng.random_range(0..PIECES.len())])
        .collect()
}

/// Arbitrary valid dataset: random axes, variables over any dim subset that
/// includes lat and lon, arbitrary bit patterns (NaN payloads, infinities,
/// signed zeros, subnormals) in maskable fields, and odd strings. The
/// result is sealed.
pub fn random_dataset<R: Rng>(rng: &mut R) -> Dataset {
    let nlat = rng.random_range(2..7);
    let nlon = rng.random_range(4..10);
    let radius = if rng.random_bool(0.5) {
        EARTH_RADIUS_M
    } else {
        rng.random_range(1.0..1e7)
    };
    let grid = GridSpec::regular_with_radius(nlat, nlon, radius).expect("valid sizes");
    let ntime = rng.random_range(0..4);
    let mut t0 = rng.random_range(-1e6..1e6);
    let time: Vec<f64> = (0..ntime)
        .map(|_| {
            t0 += rng.random_range(1.0..1e5);
            t0
        })
        .collect();
    let mut ds = Dataset::new(grid, time);
    if rng.random_bool(0.5) {
        let mut p = 100_000.0;
        let levels = (0..rng.random_range(1..4))
            .map(|_| {
                p -= rng.random_range(1.0..20_000.0);
                p
            })
            .collect();
        ds = ds.with_levels(levels);
    }
    for i in 0..rng.random_range(0..4) {
        let mut dims = Vec::new();
        if rng.random_bool(0.7) {
            dims.push(Dim::Time);
        }
        if ds.level_pa.is_some() && rng.random_bool(0.5) {
            dims.push(Dim::Level);
        }
        dims.extend([Dim::Lat, Dim::Lon]);
        let len: usize = dims.iter().map(|&d| ds.dim_size(d)).product();
        let maskable = rng.random_bool(0.5);
        let data = (0..len)
            .map(|_| loop {
                let v = random_value(rng);
                if maskable || !v.is_nan() {
                    break v;
                }
            })
            .collect();
        let mut f = Field::new(format!("v{i}{}", random_text(rng)), dims, data, random_text(rng));
        if rng.random_bool(0.5) {
            f = f.with_standard_name(random_text(rng));
        }
        if maskable {
            f = f.maskable();
        }
        ds.add_variable(f).expect("shape follows the axes");
    }
    for _ in 0..rng.random_range(0..4) {
        let key = format!("k{}", random_text(rng));
        ds.attrs.insert(key, random_text(rng));
    }
    ds.provenance = Provenance {
        model_id: random_text(rng),
        model_version: random_text(rng),
        description: random_text(rng),
        code_url: random_text(rng),
        training_data_description: random_text(rng),
        content_hash: String::new(),
    };
    // Containers always carry the payload hash, so only sealed datasets
    // can come back unchanged.
    ds.sealed()
}
