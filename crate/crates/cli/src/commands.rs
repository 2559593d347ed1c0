use std::path::Path;
use std::time::Duration;

use esmgauntlet::calendar::Season;
use esmgauntlet::causality::{causality_test, default_c_bound, CausalityConfig};
use esmgauntlet::constraints::{check_precip_constraint_with, check_water_vapor_constraint_with, ScalingResult};
use esmgauntlet::dataio::{read_path, validate_metadata, write_dataset, MetadataProfile};
use esmgauntlet::features::detect_pressure_minima;
use esmgauntlet::grid::global_mean;
use esmgauntlet::idealized::{
    advection_shape_error, gen_balanced_jet, gen_solid_body_advection, run_case, zonal_symmetry_error, IdealizedCase,
};
use esmgauntlet::metrics::{climatology, effective_resolution, rmse, zonal_power_spectrum, MetricRecord, MetricValue};
use esmgauntlet::report::CheckEntry;
use esmgauntlet::sanity::{
    check_mass_conservation, check_nonnegative_tracers, check_precip_column_budget, check_supersaturation,
    check_tracer_mass_conservation, CheckResult, Criterion, LevelBand,
};
use esmgauntlet::toymodels::{BuiltinAdapterSpec, CaseKind, ModelAdapter, SubprocessAdapter, SubprocessOptions};
use esmgauntlet::{Dataset, Dim, Error, Provenance, Result};

use crate::args::{
    AdapterArgs, CausalityArgs, ConstraintsArgs, FeaturesArgs, IdealizedArgs, MetricsArgs, SanityArgs, SpectraArgs,
    ValidateArgs,
};

/// What a subcommand produced, before it is collated into a report.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<CheckEntry>,
    pub metrics: Vec<MetricRecord>,
    pub models: Vec<Provenance>,
    /// Extra files for the output directory: (name, bytes).
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn check(&mut self, model: &str, result: CheckResult) {
        self.checks.push(CheckEntry::new(model, result));
    }
}

const REGION: &str = "global";

fn model_id(ds: &Dataset, path: &Path) -> String {
    if ds.provenance.model_id.trim().is_empty() {
        path.file_stem()
            .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
    } else {
        ds.provenance.model_id.clone()
    }
}

fn load(path: &Path) -> Result<(Dataset, String)> {
    let ds = read_path(path)?;
    let id = model_id(&ds, path);
    Ok((ds, id))
}

fn provenance(ds: &Dataset, id: &str) -> Provenance {
    let mut p = ds.provenance.clone();
    p.model_id = id.to_string();
    p
}

pub fn parse_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

pub fn parse_pair(s: &str, sep: char, what: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("{what}: expected `a{sep}b`, got `{s}`"));
    let (a, b) = s.split_once(sep).ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

fn parse_season(s: &str) -> Result<Season> {
    Season::ALL
        .into_iter()
        .find(|x| x.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::Config(format!("unknown season `{s}` (ANN, DJF, MAM, JJA, SON)")))
}

pub fn validate(a: &ValidateArgs) -> Result<Outcome> {
    let (ds, id) = load(&a.path)?;
    let profile = match &a.require {
        Some(keys) => MetadataProfile::from_keys(parse_list(keys))?,
        None => MetadataProfile::default(),
    };
    let violations = validate_metadata(&ds, &profile);
    let notes = violations
        .iter()
        .map(|v| v.message.as_str())
        .collect::<Vec<_>>()
        .join("; ");
    let mut out = Outcome::default();
    out.check(
        &id,
        CheckResult::new("metadata", violations.len() as f64, Criterion::AtMost { limit: 0.0 }).with_notes(notes),
    );
    out.models.push(provenance(&ds, &id));
    Ok(out)
}

pub fn sanity(a: &SanityArgs) -> Result<Outcome> {
    let (ds, id) = load(&a.path)?;
    let mut out = Outcome::default();
    if ds.has_variable("ps") {
        out.check(&id, check_mass_conservation(&ds, a.tol)?);
    }
    let tracers = match &a.tracers {
        Some(t) => parse_list(t),
        None => ds
            .attrs
            .get("conserved_tracers")
            .map(|t| parse_list(t))
            .unwrap_or_default(),
    };
    for t in &tracers {
        out.check(&id, check_tracer_mass_conservation(&ds, t, a.tol)?);
    }
    if !tracers.is_empty() {
        let names: Vec<&str> = tracers.iter().map(String::as_str).collect();
        out.check(&id, check_nonnegative_tracers(&ds, &names, a.floor)?);
    }
    if let Some(dt) = a.precip_dt {
        out.check(&id, check_precip_column_budget(&ds, dt, a.precip_tol)?);
    }
    if ds.has_variable("ta") && ds.has_variable("q") && ds.level_pa.is_some() {
        let (lo, hi) = parse_pair(&a.rh_band, ':', "--rh-band")?;
        let band = LevelBand {
            p_min_pa: lo,
            p_max_pa: hi,
        };
        out.check(&id, check_supersaturation(&ds, a.rh_max, band, a.max_exceed)?);
    }
    if out.checks.is_empty() {
        return Err(Error::Config(format!(
            "no sanity check applies to {} (needs ps, tracers, --precip-dt or leveled ta/q)",
            a.path.display()
        )));
    }
    out.models.push(provenance(&ds, &id));
    Ok(out)
}

pub fn metrics(a: &MetricsArgs) -> Result<Outcome> {
    let (model, id) = load(&a.model)?;
    let (reference, ref_id) = load(&a.reference)?;
    if model.grid != reference.grid {
        return Err(Error::Shape("model and reference grids differ".into()));
    }
    let seasons = parse_list(&a.seasons)
        .iter()
        .map(|s| parse_season(s))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    for var in parse_list(&a.vars) {
        let units = model.variable(&var)?.units.clone();
        for &season in &seasons {
            let cm = climatology(&model, &var, season)?;
            let cr = climatology(&reference, &var, season)?;
            let e = rmse(&cm, &cr, &model.grid)?;
            out.metrics
                .push(MetricRecord::scalar(&id, &var, season, REGION, "rmse", e, &units));
            if !cm.has(Dim::Level) {
                let bias = global_mean(&cm.data, &model.grid)? - global_mean(&cr.data, &reference.grid)?;
                out.metrics
                    .push(MetricRecord::scalar(&id, &var, season, REGION, "bias", bias, &units));
            }
        }
    }
    out.models.push(provenance(&model, &id));
    out.models.push(provenance(&reference, &ref_id));
    Ok(out)
}

fn scaling_check(id: &str, r: &ScalingResult) -> CheckResult {
    let (lo, hi) = r.band.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    CheckResult::new(id, r.rate_pct_per_k, Criterion::Within { lo, hi }).with_notes(format!(
        "{:.4} ± {:.4} %/K from {} annual means",
        r.rate_pct_per_k, r.stderr_pct_per_k, r.n_samples
    ))
}

pub fn constraints(a: &ConstraintsArgs) -> Result<Outcome> {
    let (ds, id) = load(&a.path)?;
    let mut out = Outcome::default();
    if ds.has_variable("tcwv") {
        let r = check_water_vapor_constraint_with(&ds, parse_pair(&a.band, ':', "--band")?)?;
        out.check(&id, scaling_check("water_vapor_scaling", &r));
        out.metrics.push(MetricRecord::scalar(
            &id,
            "tcwv",
            Season::Ann,
            REGION,
            "scaling_rate",
            r.rate_pct_per_k,
            "%/K",
        ));
    }
    if ds.has_variable("pr") {
        let r = check_precip_constraint_with(&ds, parse_pair(&a.pr_band, ':', "--pr-band")?)?;
        out.check(&id, scaling_check("precip_scaling", &r));
        out.metrics.push(MetricRecord::scalar(
            &id,
            "pr",
            Season::Ann,
            REGION,
            "scaling_rate",
            r.rate_pct_per_k,
            "%/K",
        ));
    }
    if out.checks.is_empty() {
        return Err(Error::MissingVariable("tcwv or pr".into()));
    }
    out.models.push(provenance(&ds, &id));
    Ok(out)
}

pub fn spectra(a: &SpectraArgs) -> Result<Outcome> {
    let (model, id) = load(&a.model)?;
    let (reference, ref_id) = load(&a.reference)?;
    let band = parse_pair(&a.lat_band, ':', "--lat-band")?;
    let (sm, sr) = match a.level {
        Some(l) => (
            esmgauntlet::metrics::zonal_power_spectrum_at(&model, &a.var, band, Some(l))?,
            esmgauntlet::metrics::zonal_power_spectrum_at(&reference, &a.var, band, Some(l))?,
        ),
        None => (
            zonal_power_spectrum(&model, &a.var, band)?,
            zonal_power_spectrum(&reference, &a.var, band)?,
        ),
    };
    let units = format!("({})^2", model.variable(&a.var)?.units);
    let mut out = Outcome::default();
    for (who, s) in [(&id, &sm), (&ref_id, &sr)] {
        let mut r = MetricRecord::scalar(who, &a.var, Season::Ann, REGION, "zonal_spectrum", 0.0, &units);
        r.value = MetricValue::Vector(s.energy.clone());
        out.metrics.push(r);
    }
    let res = effective_resolution(&sm, &sr, a.threshold)?;
    // No damped tail means the model resolves every wavenumber on the grid.
    let m = res.unwrap_or(sm.wavenumbers.last().copied().unwrap_or(0) + 1);
    out.metrics.push(MetricRecord::scalar(
        &id,
        &a.var,
        Season::Ann,
        REGION,
        "effective_wavenumber",
        m as f64,
        "1",
    ));
    out.models.push(provenance(&model, &id));
    out.models.push(provenance(&reference, &ref_id));
    out.artifacts.push((
        "spectra.json".into(),
        serde_json::to_vec_pretty(&serde_json::json!({ "model": sm, "reference": sr, "effective_wavenumber": res }))
            .map_err(|e| Error::Serialization(e.to_string()))?,
    ));
    Ok(out)
}

pub fn features(a: &FeaturesArgs) -> Result<Outcome> {
    let (ds, id) = load(&a.path)?;
    let found = detect_pressure_minima(&ds, &a.var, a.dp, a.radius)?;
    let counts: Vec<f64> = found
        .iter()
        .map(|c| c.iter().filter(|f| f.closed).count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len().max(1) as f64;
    let mut out = Outcome::default();
    let mut per_step = MetricRecord::scalar(&id, &a.var, Season::Ann, REGION, "closed_minima_per_step", 0.0, "1");
    per_step.value = MetricValue::Vector(counts);
    out.metrics.push(per_step);
    out.metrics.push(MetricRecord::scalar(
        &id,
        &a.var,
        Season::Ann,
        REGION,
        "closed_minima_mean",
        mean,
        "1",
    ));
    out.models.push(provenance(&ds, &id));
    out.artifacts.push((
        "features.json".into(),
        serde_json::to_vec_pretty(&found).map_err(|e| Error::Serialization(e.to_string()))?,
    ));
    Ok(out)
}

/// The adapter chosen on the command line plus the spec describing the
/// case parameters (the built-in spec, or defaults for external adapters).
struct Chosen {
    adapter: Box<dyn ModelAdapter>,
    spec: BuiltinAdapterSpec,
    description: String,
}

fn open_adapter(a: &AdapterArgs, case: CaseKind) -> Result<Chosen> {
    let mut spec = BuiltinAdapterSpec {
        case,
        ..BuiltinAdapterSpec::default()
    };
    for kv in &a.adapter_opt {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--adapter-opt expects key=value, got `{kv}`")))?;
        spec.set(k.trim(), v.trim())?;
    }
    spec.case = case;
    if let Some(variant) = &a.builtin {
        spec.set("variant", variant)?;
        spec.config.validate()?;
        let model = spec.build()?;
        let description = format!("built-in toy model: {}", spec.to_args().join(" "));
        return Ok(Chosen {
            adapter: Box::new(model),
            spec,
            description,
        });
    }
    let line = a.adapter.as_deref().expect("clap requires adapter or builtin");
    let argv = shlex::split(line).ok_or_else(|| Error::Config(format!("cannot parse adapter command `{line}`")))?;
    if !(a.handshake_timeout > 0.0 && a.handshake_timeout.is_finite()) {
        return Err(Error::Config("handshake timeout must be positive".into()));
    }
    let opts = SubprocessOptions {
        handshake_timeout: Duration::from_secs_f64(a.handshake_timeout),
        expected_grid: None,
    };
    let child = SubprocessAdapter::spawn(&argv, &opts)?;
    spec.nlat = child.info().grid.nlat();
    spec.nlon = child.info().grid.nlon();
    Ok(Chosen {
        adapter: Box::new(child),
        spec,
        description: format!("external adapter: {line}"),
    })
}

fn build_case(spec: &BuiltinAdapterSpec) -> Result<IdealizedCase> {
    let grid = spec.grid()?;
    match spec.case {
        CaseKind::Advection => gen_solid_body_advection(
            &grid,
            spec.alpha_deg.to_radians(),
            spec.u0_mps,
            (0.0, 270.0),
            grid.radius_m() / 3.0,
            1.0,
        ),
        CaseKind::Jet => gen_balanced_jet(&grid, spec.jet_u_max_mps, spec.jet_center_deg, spec.jet_width_deg, None),
    }
}

fn adapter_provenance(adapter: &dyn ModelAdapter, description: String) -> Provenance {
    Provenance {
        model_id: adapter.info().id.clone(),
        model_version: String::new(),
        description,
        ..Provenance::default()
    }
}

pub fn idealized(a: &IdealizedArgs) -> Result<Outcome> {
    let case_kind: CaseKind = a.case.parse()?;
    let mut chosen = open_adapter(&a.adapter, case_kind)?;
    let case = build_case(&chosen.spec)?;
    let dt = chosen.adapter.info().dt_seconds;
    let steps = match (a.steps, case.revolution_s) {
        (Some(n), _) => n,
        (None, Some(period)) => (period / dt).round() as usize,
        (None, None) => 100,
    };
    let traj = run_case(&case, chosen.adapter.as_mut(), steps)?;
    let id = chosen.adapter.info().id.clone();
    let var = case.variable();
    let mut out = Outcome::default();
    out.check(&id, check_tracer_mass_conservation(&traj, var, a.tol)?);
    match case_kind {
        CaseKind::Advection => {
            out.check(&id, check_nonnegative_tracers(&traj, &[var], 0.0)?);
            match advection_shape_error(&traj, &case) {
                Ok(e) => {
                    for (name, v) in [
                        ("shape_l2", e.l2),
                        ("overshoot", e.overshoot),
                        ("undershoot", e.undershoot),
                    ] {
                        out.metrics
                            .push(MetricRecord::scalar(&id, var, Season::Ann, REGION, name, v, "1"));
                    }
                }
                Err(Error::Config(msg)) => eprintln!("esmgauntlet: shape error skipped: {msg}"),
                Err(e) => return Err(e),
            }
        }
        CaseKind::Jet => {
            let s = zonal_symmetry_error(&traj, var)?;
            let worst = s.iter().copied().fold(0.0_f64, f64::max);
            out.check(
                &id,
                CheckResult::new("zonal_symmetry", worst, Criterion::AtMost { limit: a.sym_tol })
                    .with_notes(format!("largest normalized asymmetry over {steps} steps")),
            );
            let mut r = MetricRecord::scalar(&id, var, Season::Ann, REGION, "zonal_symmetry_error", 0.0, "1");
            r.value = MetricValue::Vector(s);
            out.metrics.push(r);
        }
    }
    out.models
        .push(adapter_provenance(chosen.adapter.as_ref(), chosen.description));
    if a.save_trajectory {
        let mut bytes = Vec::new();
        write_dataset(&traj, &mut bytes)?;
        out.artifacts.push(("trajectory.etc".into(), bytes));
    }
    Ok(out)
}

pub fn causality(a: &CausalityArgs) -> Result<Outcome> {
    let case_kind: CaseKind = a.case.parse()?;
    let mut chosen = open_adapter(&a.adapter, case_kind)?;
    let case = build_case(&chosen.spec)?;
    let info = chosen.adapter.info().clone();
    let variable = match &a.variable {
        Some(v) => v.clone(),
        None => info.variables[0].name.clone(),
    };
    let base = &case.initial;
    let amplitude = match a.amplitude {
        Some(x) => x,
        None => {
            let data = &base.variable(&variable)?.data;
            let (lo, hi) = data
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            if hi > lo {
                0.01 * (hi - lo)
            } else {
                1.0
            }
        }
    };
    let config = CausalityConfig {
        point: parse_pair(&a.point, ',', "--point")?,
        amplitude,
        variable,
        c_bound_mps: a.cbound.unwrap_or_else(|| default_c_bound(&info)),
        n_steps: a.steps,
        eps_rel: a.eps_rel,
    };
    let r = causality_test(chosen.adapter.as_mut(), base, &config)?;
    let excess = r
        .radius_m
        .iter()
        .zip(&r.bound_m)
        .map(|(x, b)| x - b)
        .fold(f64::NEG_INFINITY, f64::max);
    let id = info.id.clone();
    let mut out = Outcome::default();
    let notes = match r.first_violation_step {
        Some(t) => format!("front exceeds the {} m/s bound at step {t}", config.c_bound_mps),
        None => format!(
            "front stays within the {} m/s bound for {} steps",
            config.c_bound_mps, a.steps
        ),
    };
    out.check(
        &id,
        CheckResult::new("causality", excess, Criterion::AtMost { limit: 0.0 }).with_notes(notes),
    );
    out.metrics.push(MetricRecord::scalar(
        &id,
        &config.variable,
        Season::Ann,
        REGION,
        "front_speed",
        r.speed_estimate_mps,
        "m s-1",
    ));
    out.models
        .push(adapter_provenance(chosen.adapter.as_ref(), chosen.description));
    out.artifacts.push(("causality.csv".into(), r.to_csv()?.into_bytes()));
    out.artifacts.push((
        "causality.json".into(),
        serde_json::to_vec_pretty(&r).map_err(|e| Error::Serialization(e.to_string()))?,
    ));
    Ok(out)
}
