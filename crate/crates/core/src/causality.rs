//! Twin-trajectory causality test: perturb one grid cell and check that the
//! footprint of the difference grows no faster than a physical speed.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::great_circle_distance;
use crate::idealized::{checked_step, state_from_dataset};
use crate::toymodels::{AdapterInfo, ModelAdapter};

pub const ACOUSTIC_SPEED_MPS: f64 = 340.0;
pub const DEFAULT_EPS_REL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityConfig {
    /// Perturbation point (lat, lon) in degrees.
    pub point: (f64, f64),
    pub amplitude: f64,
    pub variable: String,
    pub c_bound_mps: f64,
    pub n_steps: usize,
    pub eps_rel: f64,
}

/// The adapter's advertised maximum wind when it has one, otherwise the
/// acoustic speed.
pub fn default_c_bound(info: &AdapterInfo) -> f64 {
    info.max_wind_mps.filter(|w| *w > 0.0).unwrap_or(ACOUSTIC_SPEED_MPS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityReport {
    pub point: (f64, f64),
    /// Grid cell (row, column) holding the perturbation.
    pub cell: (usize, usize),
    pub variable: String,
    pub amplitude: f64,
    pub eps_rel: f64,
    pub c_bound_mps: f64,
    pub dt_s: f64,
    /// Corner-to-corner diagonal of the perturbed cell, m.
    pub d_cell_m: f64,
    /// Front radius r(t) for t = 0..=n_steps, m.
    pub radius_m: Vec<f64>,
    /// Allowed radius b(t) = c_bound·t·dt + d_cell, m.
    pub bound_m: Vec<f64>,
    /// Number of cells above threshold at each step.
    pub reached_cells: Vec<usize>,
    /// Largest r(t)/(t·dt) over t ≥ 1, m/s.
    pub speed_estimate_mps: f64,
    pub first_violation_step: Option<usize>,
    pub passed: bool,
}

impl CausalityReport {
    /// CSV with one row per step: `step,r_m,bound_m,reached_cells`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "r_m", "bound_m", "reached_cells"])
            .map_err(|e| Error::Serialization(e.to_string()))?;
        for (t, (r, b)) in self.radius_m.iter().zip(&self.bound_m).enumerate() {
            w.write_record([
                t.to_string(),
                r.to_string(),
                b.to_string(),
                self.reached_cells[t].to_string(),
            ])
            .map_err(|e| Error::Serialization(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Runs a control trajectory from `base_state` and a perturbed one with
/// `variable` raised by `amplitude` at `point`, and compares the radius of
/// the cells whose difference exceeds `eps_rel·|amplitude|` with the bound.
///
/// The adapter must be deterministic: one step is repeated from the base
/// state and must reproduce bit for bit.
pub fn causality_test<A: ModelAdapter + ?Sized>(
    adapter: &mut A,
    base_state: &Dataset,
    config: &CausalityConfig,
) -> Result<CausalityReport> {
    if !(config.c_bound_mps > 0.0) {
        return Err(Error::Config(format!(
            "speed bound must be positive, got {}",
            config.c_bound_mps
        )));
    }
    if !(config.eps_rel >= 0.0) {
        return Err(Error::Config(format!(
            "eps_rel must be non-negative, got {}",
            config.eps_rel
        )));
    }
    if config.amplitude == 0.0 && config.eps_rel > 0.0 {
        return Err(Error::Degenerate("zero perturbation amplitude".into()));
    }
    let info = adapter.info().clone();
    if !info.deterministic {
        return Err(Error::NonDeterministic(format!(
            "adapter `{}` declares itself non-deterministic",
            info.id
        )));
    }
    let grid = base_state.grid.clone();
    let (j, k) = grid.locate(config.point.0, config.point.1)?;
    let var = info
        .variable_index(&config.variable)
        .ok_or_else(|| Error::MissingVariable(config.variable.clone()))?;
    let n = grid.ncell();
    let cell = grid.index(j, k);

    let mut control = state_from_dataset(base_state, &info, 0)?;
    let first = checked_step(adapter, &control, 1)?;
    let again = checked_step(adapter, &control, 1)?;
    if first.iter().zip(&again).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::NonDeterministic(format!(
            "adapter `{}` gave different outputs for the same state",
            info.id
        )));
    }

    let mut perturbed = control.clone();
    perturbed[var * n + cell] += config.amplitude;

    let distance: Vec<f64> = (0..n)
        .map(|i| {
            let c = (grid.lat_deg()[i / grid.nlon()], grid.lon_deg()[i % grid.nlon()]);
            great_circle_distance(config.point, c, grid.radius_m())
        })
        .collect();
    let (s, nb) = grid.lat_bounds_deg(j);
    let half = 0.5 * grid.dlon_deg();
    let lon = grid.lon_deg()[k];
    let d_cell = great_circle_distance((s, lon - half), (nb, lon + half), grid.radius_m());
    let threshold = config.eps_rel * config.amplitude.abs();
    let dt = info.dt_seconds;

    let mut radius = Vec::with_capacity(config.n_steps + 1);
    let mut bound = Vec::with_capacity(config.n_steps + 1);
    let mut reached = Vec::with_capacity(config.n_steps + 1);
    for t in 0..=config.n_steps {
        if t > 0 {
            control = checked_step(adapter, &control, t)?;
            perturbed = checked_step(adapter, &perturbed, t)?;
        }
        let mut r = 0.0_f64;
        let mut count = 0;
        for i in 0..n {
            let hit = (0..info.variables.len()).any(|v| {
                let d = (perturbed[v * n + i] - control[v * n + i]).abs();
                d > threshold
            });
            if hit {
                r = r.max(distance[i]);
                count += 1;
            }
        }
        radius.push(r);
        bound.push(config.c_bound_mps * t as f64 * dt + d_cell);
        reached.push(count);
    }
    let first_violation_step = radius.iter().zip(&bound).position(|(r, b)| r > b);
    let speed = (1..radius.len())
        .map(|t| radius[t] / (t as f64 * dt))
        .fold(0.0_f64, f64::max);
    Ok(CausalityReport {
        point: config.point,
        cell: (j, k),
        variable: config.variable.clone(),
        amplitude: config.amplitude,
        eps_rel: config.eps_rel,
        c_bound_mps: config.c_bound_mps,
        dt_s: dt,
        d_cell_m: d_cell,
        radius_m: radius,
        bound_m: bound,
        reached_cells: reached,
        speed_estimate_mps: speed,
        first_violation_step,
        passed: first_violation_step.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{area_weights, GridSpec};
    use crate::idealized::gen_balanced_jet;
    use crate::toymodels::{AdvertisedVariable, IdentityAdapter, ToyModel, ToyModelConfig, Variant};
    use proptest::prelude::*;

    fn jet_model(grid: &GridSpec, variant: Variant, s: f64) -> (ToyModel, Dataset) {
        jet_model_dt(grid, variant, s, None)
    }

    fn jet_model_dt(grid: &GridSpec, variant: Variant, s: f64, dt: Option<f64>) -> (ToyModel, Dataset) {
        let case = gen_balanced_jet(grid, 35.0, 45.0, 10.0, None).unwrap();
        let mut cfg = ToyModelConfig::variant(variant);
        cfg.smoothing_strength = s;
        cfg.dt_seconds = dt;
        let m = ToyModel::new(grid.clone(), case.wind, vec![AdvertisedVariable::new("h", "m")], cfg).unwrap();
        (m, case.initial)
    }

    fn config(point: (f64, f64), c: f64, steps: usize) -> CausalityConfig {
        CausalityConfig {
            point,
            amplitude: 100.0,
            variable: "h".into(),
            c_bound_mps: c,
            n_steps: steps,
            eps_rel: DEFAULT_EPS_REL,
        }
    }

    /// Returns the same state whatever it is given.
    struct Frozen(IdentityAdapter, Vec<f64>);

    impl ModelAdapter for Frozen {
        fn info(&self) -> &AdapterInfo {
            self.0.info()
        }
        fn step(&mut self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(self.1.clone())
        }
    }

    #[test]
    fn insensitive_adapter_passes_with_zero_radius() {
        let g = GridSpec::regular(32, 64).unwrap();
        let case = gen_balanced_jet(&g, 35.0, 45.0, 10.0, None).unwrap();
        let fixed = case.initial.variable("h").unwrap().data.clone();
        let mut a = Frozen(
            IdentityAdapter::new(g, vec![AdvertisedVariable::new("h", "m")], 600.0),
            fixed,
        );
        let r = causality_test(&mut a, &case.initial, &config((50.0, 100.0), 10.0, 5)).unwrap();
        assert!(r.passed);
        assert_eq!(r.reached_cells[0], 1);
        assert!(r.radius_m[0] <= r.d_cell_m);
        assert!(r.radius_m[1..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn upwind_on_jet_flank_passes() {
        let g = GridSpec::regular(64, 128).unwrap();
        let (mut m, base) = jet_model(&g, Variant::Upwind, 0.0);
        let c = m.info().max_wind_mps.unwrap();
        let r = causality_test(&mut m, &base, &config((60.0, 180.0), c, 50)).unwrap();
        assert!(r.passed, "violation at {:?}", r.first_violation_step);
        assert!(r.bound_m.windows(2).all(|w| w[1] > w[0]));
        assert!(r.radius_m[0] <= r.d_cell_m);
    }

    #[test]
    fn upwind_at_jet_core_outruns_wind_bound() {
        // At the core the outflow Courant number is the configured 0.5, yet
        // the upwind stencil moves the difference one full cell per step.
        let g = GridSpec::regular(64, 128).unwrap();
        let (mut m, base) = jet_model(&g, Variant::Upwind, 0.0);
        let core = g.lat_deg()[(0..64)
            .min_by(|&a, &b| (g.lat_deg()[a] - 45.0).abs().total_cmp(&(g.lat_deg()[b] - 45.0).abs()))
            .unwrap()];
        let c = m.info().max_wind_mps.unwrap();
        let r = causality_test(&mut m, &base, &config((core, 180.0), c, 20)).unwrap();
        assert!(!r.passed);
        // With the one-cell-per-step bound the same run is local.
        let cell = g.radius_m() * g.dlon_rad() * core.to_radians().cos();
        let per_step = cell / m.info().dt_seconds;
        let r = causality_test(&mut m, &base, &config((core, 180.0), per_step, 20)).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn teleport_fails_at_first_step() {
        let g = GridSpec::regular(64, 128).unwrap();
        let (mut m, base) = jet_model(&g, Variant::Teleport, 0.1);
        let c = m.info().max_wind_mps.unwrap();
        let r = causality_test(&mut m, &base, &config((60.0, 180.0), c, 3)).unwrap();
        assert_eq!(r.first_violation_step, Some(1));
        assert_eq!(r.reached_cells[1], g.ncell());
        // The antipode is reached.
        assert!(r.radius_m[1] > 0.99 * std::f64::consts::PI * g.radius_m());
    }

    #[test]
    fn reports_are_reproducible() {
        let g = GridSpec::regular(32, 64).unwrap();
        let (mut m, base) = jet_model(&g, Variant::Upwind, 0.0);
        let cfg = config((60.0, 180.0), 35.0, 10);
        let a = causality_test(&mut m, &base, &cfg).unwrap();
        let b = causality_test(&mut m, &base, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let csv = a.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 12);
        assert!(csv.starts_with("step,r_m,bound_m,reached_cells\n0,"));
    }

    struct Noisy(IdentityAdapter, f64);

    impl ModelAdapter for Noisy {
        fn info(&self) -> &AdapterInfo {
            self.0.info()
        }
        fn step(&mut self, s: &[f64]) -> Result<Vec<f64>> {
            self.1 += 1e-9;
            Ok(s.iter().map(|v| v + self.1).collect())
        }
    }

    #[test]
    fn nondeterministic_adapter_rejected() {
        let g = GridSpec::regular(16, 32).unwrap();
        let case = gen_balanced_jet(&g, 35.0, 45.0, 10.0, None).unwrap();
        let mut a = Noisy(
            IdentityAdapter::new(g, vec![AdvertisedVariable::new("h", "m")], 60.0),
            0.0,
        );
        assert!(matches!(
            causality_test(&mut a, &case.initial, &config((50.0, 100.0), 10.0, 2)),
            Err(Error::NonDeterministic(_))
        ));
    }

    #[test]
    fn configuration_errors() {
        let g = GridSpec::regular(16, 32).unwrap();
        let (mut m, base) = jet_model(&g, Variant::Upwind, 0.0);
        let mut cfg = config((50.0, 100.0), 10.0, 2);
        cfg.amplitude = 0.0;
        assert!(matches!(causality_test(&mut m, &base, &cfg), Err(Error::Degenerate(_))));
        let cfg = config((50.0, 100.0), 0.0, 2);
        assert!(matches!(causality_test(&mut m, &base, &cfg), Err(Error::Config(_))));
        let mut cfg = config((50.0, 100.0), 10.0, 2);
        cfg.variable = "q".into();
        assert!(matches!(
            causality_test(&mut m, &base, &cfg),
            Err(Error::MissingVariable(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn teleport_violates_for_any_positive_strength(s in 1e-4f64..1.0, nlon_pow in 3u32..7) {
            let nlon = 1usize << nlon_pow;
            let g = GridSpec::regular(nlon / 2, nlon).unwrap();
            // A fixed short step keeps the bound well below the antipode.
            let (mut m, base) = jet_model_dt(&g, Variant::Teleport, s, Some(600.0));
            // The teleported signal at a remote cell is s times the area
            // weight of the perturbed cell; the threshold must sit below it.
            let w_min = area_weights(&g).into_iter().fold(f64::INFINITY, f64::min);
            let mut cfg = config((g.lat_deg()[nlon / 4 + 1], 180.0), 35.0, 1);
            cfg.eps_rel = 0.1 * s * w_min;
            let r = causality_test(&mut m, &base, &cfg).unwrap();
            prop_assert_eq!(r.first_violation_step, Some(1));
        }
    }
}
