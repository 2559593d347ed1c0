use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calendar::Calendar;
use crate::dataset::{Dataset, Dim};
use crate::error::{Error, Result};

const DAY_S: f64 = 86_400.0;

/// Mean precipitation anomaly around the hottest day of each cell-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotDayComposite {
    pub lags: Vec<i64>,
    pub values: Vec<f64>,
    /// Number of (cell, year) events that contributed.
    pub events: usize,
}

/// For every cell and every complete calendar year, finds the hottest day
/// and accumulates the precipitation anomaly (relative to that cell's mean
/// over the year) at lags −L..=L. Samples whose lag falls outside the record
/// are dropped. Cells are weighted by area.
///
/// The calendar is taken from the `calendar` attribute, defaulting to
/// no-leap when absent.
pub fn hot_day_composite(ds: &Dataset, temp_var: &str, precip_var: &str, lag_days: usize) -> Result<HotDayComposite> {
    let temp = ds.variable(temp_var)?;
    let precip = ds.variable(precip_var)?;
    let want = [Dim::Time, Dim::Lat, Dim::Lon];
    if temp.dims != want || precip.dims != want {
        return Err(Error::Shape("hot-day composite needs (time, lat, lon) fields".into()));
    }
    let nt = ds.ntime();
    if ds
        .time_s
        .windows(2)
        .any(|w| ((w[1] - w[0]) - DAY_S).abs() > 1e-6 * DAY_S)
    {
        return Err(Error::Config("hot-day composite needs daily time steps".into()));
    }
    if nt < 2 * lag_days + 1 {
        return Err(Error::InsufficientData(format!(
            "record of {nt} days is shorter than 2L+1 = {}",
            2 * lag_days + 1
        )));
    }
    let calendar = if ds.attrs.contains_key("calendar") {
        Calendar::of(ds)?
    } else {
        Calendar::NoLeap
    };
    let dpy = calendar.days_per_year() as usize;
    let mut years: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (t, &ts) in ds.time_s.iter().enumerate() {
        years.entry(calendar.decompose(ts).year).or_default().push(t);
    }
    let full: Vec<&Vec<usize>> = years.values().filter(|d| d.len() == dpy).collect();
    if full.is_empty() {
        return Err(Error::InsufficientData("record contains no complete year".into()));
    }

    let grid = &ds.grid;
    let n = grid.ncell();
    let cos = grid.cos_lat();
    let nlag = 2 * lag_days + 1;
    let mut acc = vec![0.0; nlag];
    let mut wsum = vec![0.0; nlag];
    let mut events = 0;
    for i in 0..n {
        let w = cos[i / grid.nlon()];
        if w == 0.0 {
            continue;
        }
        for days in &full {
            let mut hottest: Option<(usize, f64)> = None;
            let (mut psum, mut pcount) = (0.0, 0usize);
            for &t in days.iter() {
                let tv = temp.data[t * n + i];
                if !tv.is_nan() && hottest.is_none_or(|(_, best)| tv > best) {
                    hottest = Some((t, tv));
                }
                let pv = precip.data[t * n + i];
                if !pv.is_nan() {
                    psum += pv;
                    pcount += 1;
                }
            }
            let (Some((d, _)), true) = (hottest, pcount > 0) else {
                continue;
            };
            let pmean = psum / pcount as f64;
            events += 1;
            for (li, lag) in (-(lag_days as i64)..=lag_days as i64).enumerate() {
                let s = d as i64 + lag;
                if s < 0 || s >= nt as i64 {
                    continue;
                }
                let pv = precip.data[s as usize * n + i];
                if pv.is_nan() {
                    continue;
                }
                acc[li] += w * (pv - pmean);
                wsum[li] += w;
            }
        }
    }
    Ok(HotDayComposite {
        lags: (-(lag_days as i64)..=lag_days as i64).collect(),
        values: acc
            .iter()
            .zip(&wsum)
            .map(|(a, w)| if *w > 0.0 { a / w } else { f64::NAN })
            .collect(),
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Field;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn daily(nt: usize, temp: Vec<f64>, precip: Vec<f64>) -> Dataset {
        Dataset::new(
            GridSpec::regular(2, 4).unwrap(),
            (0..nt).map(|t| t as f64 * DAY_S).collect(),
        )
        .with_attr("calendar", "noleap")
        .with_variable(Field::time_lat_lon("tas", temp, "K"))
        .unwrap()
        .with_variable(Field::time_lat_lon("pr", precip, "kg m-2 s-1"))
        .unwrap()
    }

    #[test]
    fn constant_precip_gives_zero() {
        let nt = 365;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let temp = (0..nt * 8).map(|_| rng.random_range(280.0..300.0)).collect();
        let c = hot_day_composite(&daily(nt, temp, vec![3e-5; nt * 8]), "tas", "pr", 5).unwrap();
        assert_eq!(c.lags.len(), 11);
        assert!(c.values.iter().all(|v| v.abs() < 1e-18));
    }

    #[test]
    fn dry_before_wet_after() {
        let nt = 2 * 365;
        let n = 8;
        let mut temp = vec![290.0; nt * n];
        let mut precip = vec![0.0; nt * n];
        for i in 0..n {
            for y in 0..2 {
                let d = y * 365 + 100 + 20 * i;
                temp[d * n + i] = 310.0;
                for l in 1..=5 {
                    precip[(d - l) * n + i] = -1.0;
                    precip[(d + l) * n + i] = 1.0;
                }
            }
        }
        let c = hot_day_composite(&daily(nt, temp, precip), "tas", "pr", 7).unwrap();
        for (lag, v) in c.lags.iter().zip(&c.values) {
            match lag {
                -5..=-1 => assert!(*v < 0.0),
                1..=5 => assert!(*v > 0.0),
                _ => assert!(v.abs() < 1e-12),
            }
        }
        assert_eq!(c.events, 16);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let nt = 365 * 2 + 40;
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let temp: Vec<f64> = (0..nt * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let precip: Vec<f64> = (0..nt * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let ds = daily(nt, temp.clone(), precip.clone());
        let l = 4;
        let c = hot_day_composite(&ds, "tas", "pr", l).unwrap();

        let cos = ds.grid.cos_lat();
        let mut num = vec![0.0; 2 * l + 1];
        let mut den = vec![0.0; 2 * l + 1];
        for i in 0..n {
            let w = cos[i / 4];
            for y in 0..2 {
                let days: Vec<usize> = (y * 365..(y + 1) * 365).collect();
                let d = *days
                    .iter()
                    .max_by(|a, b| temp[**a * n + i].total_cmp(&temp[**b * n + i]))
                    .unwrap();
                let mean = days.iter().map(|t| precip[t * n + i]).sum::<f64>() / 365.0;
                for (li, lag) in (-(l as i64)..=l as i64).enumerate() {
                    let s = d as i64 + lag;
                    if (0..nt as i64).contains(&s) {
                        num[li] += w * (precip[s as usize * n + i] - mean);
                        den[li] += w;
                    }
                }
            }
        }
        for li in 0..2 * l + 1 {
            assert!((c.values[li] - num[li] / den[li]).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let nt = 365;
        let ds = daily(nt, vec![0.0; nt * 8], vec![0.0; nt * 8]);
        assert!(matches!(
            hot_day_composite(&ds, "tas", "pr", 200),
            Err(Error::InsufficientData(_))
        ));
        let short = daily(100, vec![0.0; 800], vec![0.0; 800]);
        assert!(matches!(
            hot_day_composite(&short, "tas", "pr", 3),
            Err(Error::InsufficientData(_))
        ));
    }
}
