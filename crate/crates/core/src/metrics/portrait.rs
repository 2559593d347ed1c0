use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a model's own value enters the median it is normalized by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianPolicy {
    #[default]
    IncludeSelf,
    ExcludeSelf,
}

/// Median of a non-empty slice; the mean of the two central values for an
/// even count.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Normalizes a models × entries RMSE matrix column by column:
/// `(x - median) / median`. Missing entries stay missing.
///
/// A column needs at least two models with values. A zero median makes the
/// entry undefined and is reported as an error.
pub fn portrait_normalize(matrix: &[Vec<Option<f64>>], policy: MedianPolicy) -> Result<Vec<Vec<Option<f64>>>> {
    let ncol = matrix.first().map_or(0, Vec::len);
    if matrix.iter().any(|row| row.len() != ncol) {
        return Err(Error::Shape("portrait rows differ in length".into()));
    }
    let mut out = vec![vec![None; ncol]; matrix.len()];
    for c in 0..ncol {
        let present: Vec<(usize, f64)> = matrix
            .iter()
            .enumerate()
            .filter_map(|(m, row)| row[c].filter(|v| !v.is_nan()).map(|v| (m, v)))
            .collect();
        if present.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "portrait column {c} has {} model(s) with values, need 2",
                present.len()
            )));
        }
        let all: Vec<f64> = present.iter().map(|p| p.1).collect();
        let shared = median(&all).expect("non-empty");
        for &(m, x) in &present {
            let med = match policy {
                MedianPolicy::IncludeSelf => shared,
                MedianPolicy::ExcludeSelf => {
                    let others: Vec<f64> = present.iter().filter(|p| p.0 != m).map(|p| p.1).collect();
                    median(&others).expect("at least one other model")
                }
            };
            if med == 0.0 {
                return Err(Error::UndefinedNormalization(format!(
                    "portrait column {c} has zero median"
                )));
            }
            out[m][c] = Some((x - med) / med);
        }
    }
    Ok(out)
}
