//! Model calendars (no-leap and 360-day) and meteorological seasons.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

const SECONDS_PER_DAY: f64 = 86_400.0;
const NOLEAP_MONTH_DAYS: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calendar {
    NoLeap,
    Day360,
}

impl Calendar {
    /// Reads the `calendar` attribute of a dataset.
    pub fn of(ds: &Dataset) -> Result<Calendar> {
        let name = ds
            .attrs
            .get("calendar")
            .ok_or_else(|| Error::Config("dataset has no `calendar` attribute".into()))?;
        name.parse()
    }

    pub fn days_per_year(self) -> u32 {
        match self {
            Calendar::NoLeap => 365,
            Calendar::Day360 => 360,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Calendar::NoLeap => "noleap",
            Calendar::Day360 => "360_day",
        }
    }

    /// (year index, month 1..=12, day of year 0-based) for a time in seconds
    /// since the calendar epoch (year 0, January 1st).
    pub fn decompose(self, time_s: f64) -> CalendarDate {
        let day = (time_s / SECONDS_PER_DAY).floor() as i64;
        let dpy = self.days_per_year() as i64;
        let year = day.div_euclid(dpy);
        let doy = day.rem_euclid(dpy) as u32;
        let month = match self {
            Calendar::Day360 => doy / 30 + 1,
            Calendar::NoLeap => {
                let mut rem = doy;
                let mut m = 1;
                for len in NOLEAP_MONTH_DAYS {
                    if rem < len {
                        break;
                    }
                    rem -= len;
                    m += 1;
                }
                m
            }
        };
        CalendarDate {
            year,
            month,
            day_of_year: doy,
        }
    }
}

impl FromStr for Calendar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noleap" | "365_day" => Ok(Calendar::NoLeap),
            "360_day" => Ok(Calendar::Day360),
            other => Err(Error::Config(format!("unsupported calendar `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarDate {
    pub year: i64,
    pub month: u32,
    pub day_of_year: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    #[serde(rename = "ANN")]
    Ann,
    #[serde(rename = "DJF")]
    Djf,
    #[serde(rename = "MAM")]
    Mam,
    #[serde(rename = "JJA")]
    Jja,
    #[serde(rename = "SON")]
    Son,
}

impl Season {
    pub const ALL: [Season; 5] = [Season::Ann, Season::Djf, Season::Mam, Season::Jja, Season::Son];

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Ann => "ANN",
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
            Season::Son => "SON",
        }
    }

    /// Months of a three-month season in chronological order.
    pub fn months(self) -> Option<[u32; 3]> {
        match self {
            Season::Ann => None,
            Season::Djf => Some([12, 1, 2]),
            Season::Mam => Some([3, 4, 5]),
            Season::Jja => Some([6, 7, 8]),
            Season::Son => Some([9, 10, 11]),
        }
    }

    /// Year a sample is attributed to within this season: December counts
    /// towards the following year's DJF.
    fn season_year(self, date: CalendarDate) -> i64 {
        if self == Season::Djf && date.month == 12 {
            date.year + 1
        } else {
            date.year
        }
    }

    /// Indices of timesteps belonging to complete instances of the season.
    /// `ANN` selects every timestep.
    pub fn select(self, calendar: Option<Calendar>, time_s: &[f64]) -> Result<Vec<usize>> {
        let Some(months) = self.months() else {
            return Ok((0..time_s.len()).collect());
        };
        let cal =
            calendar.ok_or_else(|| Error::Config(format!("season {} requires a calendar attribute", self.as_str())))?;
        let dates: Vec<CalendarDate> = time_s.iter().map(|&t| cal.decompose(t)).collect();
        // season-year → which of its three months are covered
        let mut coverage: std::collections::BTreeMap<i64, [bool; 3]> = Default::default();
        for d in &dates {
            if let Some(pos) = months.iter().position(|&m| m == d.month) {
                coverage.entry(self.season_year(*d)).or_default()[pos] = true;
            }
        }
        Ok(dates
            .iter()
            .enumerate()
            .filter(|(_, d)| {
                months.contains(&d.month)
                    && coverage
                        .get(&self.season_year(**d))
                        .is_some_and(|c| c.iter().all(|&x| x))
            })
            .map(|(i, _)| i)
            .collect())
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ANN" => Ok(Season::Ann),
            "DJF" => Ok(Season::Djf),
            "MAM" => Ok(Season::Mam),
            "JJA" => Ok(Season::Jja),
            "SON" => Ok(Season::Son),
            other => Err(Error::Config(format!("unknown season `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noleap_month_boundaries() {
        let c = Calendar::NoLeap;
        let day = |d: f64| c.decompose(d * SECONDS_PER_DAY);
        assert_eq!(day(0.0).month, 1);
        assert_eq!(day(30.9).month, 1);
        assert_eq!(day(31.0).month, 2);
        assert_eq!(day(58.0).month, 2);
        assert_eq!(day(59.0).month, 3);
        assert_eq!(day(364.0).month, 12);
        assert_eq!(day(365.0).year, 1);
        assert_eq!(day(365.0).month, 1);
    }

    #[test]
    fn day360_months() {
        let c = Calendar::Day360;
        assert_eq!(c.decompose(29.0 * SECONDS_PER_DAY).month, 1);
        assert_eq!(c.decompose(30.0 * SECONDS_PER_DAY).month, 2);
        assert_eq!(c.decompose(359.0 * SECONDS_PER_DAY).month, 12);
    }

    #[test]
    fn djf_drops_incomplete_edges() {
        // Monthly samples, mid-month, for two years starting in January.
        let c = Calendar::Day360;
        let t: Vec<f64> = (0..24).map(|m| (m as f64 * 30.0 + 15.0) * SECONDS_PER_DAY).collect();
        let idx = Season::Djf.select(Some(c), &t).unwrap();
        // Jan/Feb of year 0 lack the preceding December; December of year 1
        // lacks its Jan/Feb. Only Dec(0), Jan(1), Feb(1) remain.
        assert_eq!(idx, vec![11, 12, 13]);
        let idx = Season::Jja.select(Some(c), &t).unwrap();
        assert_eq!(idx, vec![5, 6, 7, 17, 18, 19]);
        assert_eq!(Season::Ann.select(None, &t).unwrap().len(), 24);
        assert!(Season::Mam.select(None, &t).is_err());
    }
}
