use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Dim};
use crate::error::{Error, Result};

pub const DEFAULT_RATIO_THRESHOLD: f64 = 0.5;

/// Band-averaged zonal power spectrum, E(m) for m = 0..=nlon/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub variable: String,
    pub lat_band: (f64, f64),
    pub wavenumbers: Vec<usize>,
    pub energy: Vec<f64>,
}

impl SpectrumResult {
    /// Sum of E(m) over m ≥ 1, the zonal variance by Parseval.
    pub fn eddy_variance(&self) -> f64 {
        self.energy.iter().skip(1).sum()
    }
}

/// Zonal spectrum of a (time, lat, lon) variable over latitudes in
/// `[lat_band.0, lat_band.1]`. Rows containing masked cells are skipped.
pub fn zonal_power_spectrum(ds: &Dataset, variable: &str, lat_band: (f64, f64)) -> Result<SpectrumResult> {
    zonal_power_spectrum_at(ds, variable, lat_band, None)
}

/// As [`zonal_power_spectrum`], selecting one level of a leveled variable.
pub fn zonal_power_spectrum_at(
    ds: &Dataset,
    variable: &str,
    lat_band: (f64, f64),
    level: Option<usize>,
) -> Result<SpectrumResult> {
    let planes = ds.planes(variable)?;
    let field = planes.field();
    let level = match (field.has(Dim::Level), level) {
        (false, None) => 0,
        (false, Some(_)) => return Err(Error::Config(format!("`{variable}` has no level dimension"))),
        (true, Some(l)) if l < planes.nlevel => l,
        (true, Some(l)) => return Err(Error::Config(format!("level index {l} out of range for `{variable}`"))),
        (true, None) => return Err(Error::Config(format!("`{variable}` is leveled; choose a level"))),
    };
    let grid = &ds.grid;
    let (lo, hi) = (lat_band.0.min(lat_band.1), lat_band.0.max(lat_band.1));
    let rows: Vec<usize> = (0..grid.nlat())
        .filter(|&j| (lo..=hi).contains(&grid.lat_deg()[j]))
        .collect();
    let cos = grid.cos_lat();
    if rows.is_empty() || rows.iter().all(|&j| cos[j] == 0.0) {
        return Err(Error::Config(format!(
            "latitude band [{lo}, {hi}] selects no grid rows"
        )));
    }

    let nlon = grid.nlon();
    let nm = nlon / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nlon);
    let mut buf = vec![Complex::new(0.0, 0.0); nlon];
    let norm = (nlon * nlon) as f64;

    let mut total = vec![0.0; nm];
    let mut nsteps = 0usize;
    for t in 0..planes.ntime {
        let plane = planes.get(t, level);
        let mut acc = vec![0.0; nm];
        let mut wsum = 0.0;
        for &j in &rows {
            let row = &plane[j * nlon..(j + 1) * nlon];
            if cos[j] == 0.0 || row.iter().any(|v| v.is_nan()) {
                continue;
            }
            for (b, &v) in buf.iter_mut().zip(row) {
                *b = Complex::new(v, 0.0);
            }
            fft.process(&mut buf);
            for (m, a) in acc.iter_mut().enumerate() {
                let edge = m == 0 || (nlon.is_multiple_of(2) && m == nlon / 2);
                let factor = if edge { 1.0 } else { 2.0 };
                *a += cos[j] * factor * buf[m].norm_sqr() / norm;
            }
            wsum += cos[j];
        }
        if wsum > 0.0 {
            for (tot, a) in total.iter_mut().zip(&acc) {
                *tot += a / wsum;
            }
            nsteps += 1;
        }
    }
    if nsteps == 0 {
        return Err(Error::InsufficientData(format!(
            "no unmasked rows of `{variable}` in the band"
        )));
    }
    Ok(SpectrumResult {
        variable: variable.to_string(),
        lat_band: (lo, hi),
        wavenumbers: (0..nm).collect(),
        energy: total.into_iter().map(|e| e / nsteps as f64).collect(),
    })
}

/// Smallest m ≥ 1 from which the model/reference energy ratio stays below
/// `ratio_threshold` through the last wavenumber. `None` when no such tail
/// exists. Wavenumbers with zero reference energy never count as below.
pub fn effective_resolution(
    model: &SpectrumResult,
    reference: &SpectrumResult,
    ratio_threshold: f64,
) -> Result<Option<usize>> {
    if model.wavenumbers != reference.wavenumbers {
        return Err(Error::Shape("spectra have different wavenumber axes".into()));
    }
    let mut start = None;
    for i in (0..model.wavenumbers.len()).rev() {
        let m = model.wavenumbers[i];
        if m == 0 {
            break;
        }
        let r = reference.energy[i];
        let below = r > 0.0 && model.energy[i] / r < ratio_threshold;
        if !below {
            break;
        }
        start = Some(m);
    }
    Ok(start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Field;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds_from(nlat: usize, nlon: usize, nt: usize, f: impl Fn(usize, usize, usize) -> f64) -> Dataset {
        let g = GridSpec::regular(nlat, nlon).unwrap();
        let data = (0..nt * nlat * nlon)
            .map(|i| f(i / (nlat * nlon), (i / nlon) % nlat, i % nlon))
            .collect();
        Dataset::new(g, (0..nt).map(|t| t as f64).collect())
            .with_variable(Field::time_lat_lon("x", data, "1"))
            .unwrap()
    }

    #[test]
    fn single_harmonic() {
        for nlon in [12, 15, 64] {
            let a = 2.5;
            let ds = ds_from(4, nlon, 2, |_, _, k| {
                let lam = 2.0 * std::f64::consts::PI * k as f64 / nlon as f64;
                a * (3.0 * lam).sin()
            });
            let s = zonal_power_spectrum(&ds, "x", (-90.0, 90.0)).unwrap();
            assert_eq!(s.wavenumbers.len(), nlon / 2 + 1);
            for (m, e) in s.energy.iter().enumerate() {
                let expect = if m == 3 { a * a / 2.0 } else { 0.0 };
                assert!((e - expect).abs() < 1e-12, "nlon {nlon} m {m}: {e}");
            }
        }
    }

    #[test]
    fn constant_field_is_mean_only() {
        let ds = ds_from(4, 16, 1, |_, _, _| 3.0);
        let s = zonal_power_spectrum(&ds, "x", (-90.0, 90.0)).unwrap();
        assert!((s.energy[0] - 9.0).abs() < 1e-12);
        assert!(s.energy[1..].iter().all(|e| e.abs() < 1e-24));
    }

    #[test]
    fn parseval_against_direct_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (nlat, nlon, nt) = (8, 20, 3);
        let vals: Vec<f64> = (0..nt * nlat * nlon).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = ds_from(nlat, nlon, nt, |t, j, k| vals[(t * nlat + j) * nlon + k]);
        let band = (-40.0, 60.0);
        let s = zonal_power_spectrum(&ds, "x", band).unwrap();
        let mut oracle = 0.0;
        for t in 0..nt {
            let (mut acc, mut w) = (0.0, 0.0);
            for j in 0..nlat {
                let lat = ds.grid.lat_deg()[j];
                if lat < band.0 || lat > band.1 {
                    continue;
                }
                let row: Vec<f64> = (0..nlon).map(|k| vals[(t * nlat + j) * nlon + k]).collect();
                let mean = row.iter().sum::<f64>() / nlon as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nlon as f64;
                acc += lat.to_radians().cos() * var;
                w += lat.to_radians().cos();
            }
            oracle += acc / w;
        }
        oracle /= nt as f64;
        assert!((s.eddy_variance() - oracle).abs() < 1e-10);
    }

    #[test]
    fn empty_band_is_error() {
        let ds = ds_from(4, 8, 1, |_, _, _| 0.0);
        assert!(zonal_power_spectrum(&ds, "x", (1.0, 2.0)).is_err());
    }

    fn spec(energy: Vec<f64>) -> SpectrumResult {
        SpectrumResult {
            variable: "x".into(),
            lat_band: (-90.0, 90.0),
            wavenumbers: (0..energy.len()).collect(),
            energy,
        }
    }

    #[test]
    fn effective_resolution_cases() {
        let r = spec((0..33).map(|m| 1.0 / (1.0 + m as f64)).collect());
        assert_eq!(effective_resolution(&r, &r, 0.5).unwrap(), None);

        let halved = spec(
            r.energy
                .iter()
                .enumerate()
                .map(|(m, e)| if m >= 10 { e * 0.49 } else { *e })
                .collect(),
        );
        assert_eq!(effective_resolution(&halved, &r, 0.5).unwrap(), Some(10));

        let damped = spec(
            r.energy
                .iter()
                .enumerate()
                .map(|(m, e)| e * (-(m as f64 / 20.0).powi(2)).exp())
                .collect(),
        );
        // Scan oracle: first m whose ratio and all later ratios fall below 0.5.
        let ratios: Vec<f64> = (0..33).map(|m| (-(m as f64 / 20.0).powi(2)).exp()).collect();
        let oracle = (1..33).find(|&m| ratios[m..].iter().all(|&q| q < 0.5));
        assert_eq!(effective_resolution(&damped, &r, 0.5).unwrap(), oracle);
        assert_eq!(oracle, Some(17));
    }

    #[test]
    fn effective_resolution_requires_persistent_tail() {
        let r = spec(vec![1.0; 8]);
        let m = spec(vec![1.0, 1.0, 0.1, 0.1, 1.0, 0.1, 0.1, 0.1]);
        assert_eq!(effective_resolution(&m, &r, 0.5).unwrap(), Some(5));
        let bad = spec(vec![1.0; 7]);
        assert!(effective_resolution(&bad, &r, 0.5).is_err());
    }
}
