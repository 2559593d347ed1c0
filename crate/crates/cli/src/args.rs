use std::path::PathBuf;

use clap::{ArgGroup, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use esmgauntlet::{Error, Result};

/// Evaluation menu for gridded Earth-system model output and live models.
#[derive(Debug, Parser, Serialize)]
#[command(name = "esmgauntlet", version)]
pub struct Cli {
    /// File of `key = value` lines; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for report.json, manifest.json and other artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report formats: comma-separated json, csv, markdown.
    #[arg(long, global = true, default_value = "json")]
    pub emit: String,
    /// Worker threads (overrides ESMGAUNTLET_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Timestamp recorded in the manifest. Omitted by default so reruns are
    /// byte-identical.
    #[arg(long, global = true)]
    pub timestamp: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Read a container, verify its hash and check metadata compliance.
    Validate(ValidateArgs),
    /// Conservation, positivity, precipitation and humidity checks.
    Sanity(SanityArgs),
    /// Seasonal climatology RMSE and bias against a reference.
    Metrics(MetricsArgs),
    /// Scaling of water vapor and precipitation with temperature.
    Constraints(ConstraintsArgs),
    /// Zonal power spectra and effective resolution against a reference.
    Spectra(SpectraArgs),
    /// Closed-contour pressure minima.
    Features(FeaturesArgs),
    /// Run an idealized case through an adapter.
    Idealized(IdealizedArgs),
    /// Perturb one cell and bound the speed of the response.
    Causality(CausalityArgs),
    /// Merge reports from several runs into one intercomparison.
    Compare(ReportsArgs),
    /// Re-render reports in other formats.
    Report(ReportsArgs),
    /// Serve a built-in toy model over stdin/stdout.
    #[command(hide = true)]
    ServeToy(ServeToyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    pub path: PathBuf,
    /// Comma-separated profile keys: units, standard_name,
    /// provenance.<field>, attr.<name>.
    #[arg(long)]
    pub require: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SanityArgs {
    pub path: PathBuf,
    /// Relative drift tolerance for mass checks.
    #[arg(long, default_value_t = esmgauntlet::sanity::DEFAULT_MASS_TOLERANCE)]
    pub tol: f64,
    /// Comma-separated conserved tracers (default: the `conserved_tracers`
    /// attribute).
    #[arg(long)]
    pub tracers: Option<String>,
    /// Lower bound for tracer values.
    #[arg(long, default_value_t = 0.0)]
    pub floor: f64,
    /// Accumulation step in seconds; enables the precipitation budget check.
    #[arg(long)]
    pub precip_dt: Option<f64>,
    /// Largest accepted excess of precipitation over available column
    /// water, kg m-2.
    #[arg(long, default_value_t = esmgauntlet::sanity::DEFAULT_PRECIP_TOLERANCE)]
    pub precip_tol: f64,
    /// Relative humidity above which a sample counts as supersaturated.
    #[arg(long, default_value_t = esmgauntlet::sanity::DEFAULT_RH_MAX)]
    pub rh_max: f64,
    /// Largest accepted fraction of supersaturated samples.
    #[arg(long, default_value_t = esmgauntlet::sanity::DEFAULT_MAX_EXCEED_FRAC)]
    pub max_exceed: f64,
    /// Pressure band `lo:hi` in Pa for the humidity check.
    #[arg(long, default_value = "85000:110000")]
    pub rh_band: String,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    pub model: PathBuf,
    pub reference: PathBuf,
    /// Comma-separated variables to compare.
    #[arg(long, default_value = "tas,pr")]
    pub vars: String,
    /// Comma-separated seasons.
    #[arg(long, default_value = "ANN,DJF,MAM,JJA,SON")]
    pub seasons: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ConstraintsArgs {
    pub path: PathBuf,
    /// Accepted water vapor scaling `lo:hi` in %/K.
    #[arg(long, default_value = "6:8")]
    pub band: String,
    /// Accepted precipitation scaling `lo:hi` in %/K.
    #[arg(long, default_value = "1:2")]
    pub pr_band: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectraArgs {
    pub model: PathBuf,
    pub reference: PathBuf,
    /// Variable to transform.
    #[arg(long, default_value = "tas")]
    pub var: String,
    /// Latitude band `lo:hi` in degrees.
    #[arg(long, default_value = "-60:60")]
    pub lat_band: String,
    /// Level index for leveled variables.
    #[arg(long)]
    pub level: Option<usize>,
    /// Model/reference energy ratio below which a wavenumber counts as
    /// unresolved.
    #[arg(long, default_value_t = esmgauntlet::metrics::DEFAULT_RATIO_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    pub path: PathBuf,
    /// Pressure variable to search.
    #[arg(long, default_value = "psl")]
    pub var: String,
    /// Contour interval in Pa.
    #[arg(long, default_value_t = 200.0)]
    pub dp: f64,
    /// Search radius in meters.
    #[arg(long, default_value_t = 1.0e6)]
    pub radius: f64,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("model").required(true).args(["adapter", "builtin"])))]
pub struct AdapterArgs {
    /// External adapter command line (shell-quoted).
    #[arg(long)]
    pub adapter: Option<String>,
    /// Built-in toy model: identity, upwind, leaky or teleport.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Option for the built-in model or case, `key=value` (repeatable).
    #[arg(long = "adapter-opt")]
    pub adapter_opt: Vec<String>,
    /// Seconds to wait for an external adapter's handshake.
    #[arg(long, default_value_t = 30.0)]
    pub handshake_timeout: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct IdealizedArgs {
    /// advection or jet.
    pub case: String,
    #[command(flatten)]
    pub adapter: AdapterArgs,
    /// Steps to run (default: one revolution for advection, 100 for jet).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Relative drift tolerance for the mass check.
    #[arg(long, default_value_t = esmgauntlet::sanity::DEFAULT_MASS_TOLERANCE)]
    pub tol: f64,
    /// Largest accepted zonal asymmetry for the jet case.
    #[arg(long, default_value_t = 1e-10)]
    pub sym_tol: f64,
    /// Also write the trajectory as trajectory.etc.
    #[arg(long)]
    pub save_trajectory: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct CausalityArgs {
    #[command(flatten)]
    pub adapter: AdapterArgs,
    /// Base state: jet (default) or advection.
    #[arg(long, default_value = "jet")]
    pub case: String,
    /// Speed bound in m/s (default: adapter max wind, else 340).
    #[arg(long)]
    pub cbound: Option<f64>,
    /// Steps to follow the perturbation.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Perturbation point `lat,lon` in degrees.
    #[arg(long, default_value = "60,180")]
    pub point: String,
    /// Perturbation size (default: 1 % of the base field range).
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// A cell counts as reached once its change exceeds this fraction of
    /// the amplitude.
    #[arg(long, default_value_t = esmgauntlet::causality::DEFAULT_EPS_REL)]
    pub eps_rel: f64,
    /// Variable to perturb (default: the first advertised).
    #[arg(long)]
    pub variable: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportsArgs {
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeToyArgs {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub options: Vec<String>,
}

fn command() -> clap::Command {
    let mut cmd = Cli::command().args_override_self(true);
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |s| s.args_override_self(true));
    }
    cmd
}

/// Result of parsing: either a command to run or text for the user (help,
/// version) with the exit code to use.
pub enum Parsed {
    Run(Box<Cli>),
    Exit { text: String, code: i32 },
}

fn clap_exit(e: clap::Error) -> Parsed {
    use clap::error::ErrorKind;
    let code = match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
        ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 2,
        _ => 2,
    };
    Parsed::Exit {
        text: e.render().to_string(),
        code,
    }
}

/// Parses `argv`, applying `--config` entries before the command-line
/// flags so that flags take precedence.
pub fn parse(argv: Vec<String>) -> Result<Parsed> {
    let first = match command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => return Ok(clap_exit(e)),
    };
    let argv = match first.get_one::<PathBuf>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
            let entries = parse_config(&text)?;
            let sub = first.subcommand_name().expect("subcommand is required");
            inject(argv, sub, &entries)?
        }
        None => argv,
    };
    let matches = match command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => return Ok(clap_exit(e)),
    };
    match Cli::from_arg_matches(&matches) {
        Ok(cli) => Ok(Parsed::Run(Box::new(cli))),
        Err(e) => Ok(clap_exit(e)),
    }
}

/// `key = value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Config(format!("config line {}: empty key", n + 1)));
        }
        if key == "config" {
            return Err(Error::Config("config files cannot include other config files".into()));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Inserts config entries as flags right after the subcommand name, ahead of
/// any flags the user typed.
fn inject(argv: Vec<String>, sub: &str, entries: &[(String, String)]) -> Result<Vec<String>> {
    let cmd = command();
    let subcmd = cmd.find_subcommand(sub).expect("parsed subcommand exists");
    let pos = argv
        .iter()
        .skip(1)
        .position(|a| a == sub)
        .map(|p| p + 2)
        .expect("subcommand appears in argv");
    let mut extra = Vec::new();
    for (key, value) in entries {
        let arg = subcmd
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}` for `{sub}`")))?;
        if arg.get_action().takes_values() {
            extra.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" => extra.push(format!("--{key}")),
                "false" => {}
                other => {
                    return Err(Error::Config(format!(
                        "config key `{key}` expects true or false, got `{other}`"
                    )))
                }
            }
        }
    }
    let mut out = argv;
    out.splice(pos..pos, extra);
    Ok(out)
}
