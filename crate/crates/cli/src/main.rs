//! `esmgauntlet`: runs one section of the evaluation menu and writes a report.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 usage or
//! configuration error, 3 I/O or adapter error.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use esmgauntlet::report::{collate, emit, CollateOptions, Format, IntercomparisonReport, RunManifest};
use esmgauntlet::{Error, Result};

use args::{Cli, Command, Parsed};
use commands::{parse_list, Outcome};

const EXIT_OK: i32 = 0;
const EXIT_FAILED: i32 = 1;
const EXIT_USAGE: i32 = 2;
const EXIT_IO: i32 = 3;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_)
        | Error::Format(_)
        | Error::Corruption(_)
        | Error::Integrity { .. }
        | Error::AdapterInit(_)
        | Error::Adapter { .. }
        | Error::Instability { .. }
        | Error::NonDeterministic(_)
        | Error::Serialization(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(run(argv));
}

fn run(argv: Vec<String>) -> i32 {
    let cli = match args::parse(argv) {
        Ok(Parsed::Run(cli)) => cli,
        Ok(Parsed::Exit { text, code }) => {
            if code == 0 {
                print!("{text}");
            } else {
                eprint!("{text}");
            }
            return code;
        }
        Err(e) => {
            eprintln!("esmgauntlet: {e}");
            return exit_code(&e);
        }
    };
    if let Command::ServeToy(a) = &cli.command {
        return esmgauntlet::toymodels::serve_main(&a.options);
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("esmgauntlet: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads(cli: &Cli) -> Result<()> {
    let n = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("ESMGAUNTLET_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("ESMGAUNTLET_THREADS=`{v}` is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Flattens the parsed arguments into `section.key = value` strings.
fn config_snapshot(cli: &Cli) -> BTreeMap<String, String> {
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, v, out);
                }
            }
            serde_json::Value::String(s) => {
                out.insert(prefix.to_string(), s.clone());
            }
            serde_json::Value::Null => {}
            other => {
                out.insert(prefix.to_string(), other.to_string());
            }
        }
    }
    let mut out = BTreeMap::new();
    let value = serde_json::to_value(cli).expect("arguments serialize");
    walk("", &value, &mut out);
    // Where the output goes does not change the results.
    out.remove("out");
    out.remove("timestamp");
    out.remove("threads");
    out
}

fn formats(cli: &Cli) -> Result<Vec<Format>> {
    let list = parse_list(&cli.emit);
    if list.is_empty() {
        return Err(Error::Config("--emit needs at least one format".into()));
    }
    let mut out: Vec<Format> = Vec::new();
    for f in list {
        let f: Format = f.parse()?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    Ok(out)
}

fn execute(cli: &Cli) -> Result<i32> {
    configure_threads(cli)?;
    let formats = formats(cli)?;
    let report = match &cli.command {
        Command::Compare(a) | Command::Report(a) => {
            let reports = a
                .reports
                .iter()
                .map(|p| IntercomparisonReport::from_json(&std::fs::read_to_string(p)?))
                .collect::<Result<Vec<_>>>()?;
            let mut merged = IntercomparisonReport::combine(&reports, &CollateOptions::default())?;
            if let Some(t) = &cli.timestamp {
                merged.manifest.timestamp = Some(t.clone());
            }
            write_outputs(cli, &merged, &formats, &[])?;
            merged
        }
        other => {
            let outcome = match other {
                Command::Validate(a) => commands::validate(a)?,
                Command::Sanity(a) => commands::sanity(a)?,
                Command::Metrics(a) => commands::metrics(a)?,
                Command::Constraints(a) => commands::constraints(a)?,
                Command::Spectra(a) => commands::spectra(a)?,
                Command::Features(a) => commands::features(a)?,
                Command::Idealized(a) => commands::idealized(a)?,
                Command::Causality(a) => commands::causality(a)?,
                Command::Compare(_) | Command::Report(_) | Command::ServeToy(_) => unreachable!(),
            };
            let Outcome {
                checks,
                metrics,
                models,
                artifacts,
            } = outcome;
            let mut manifest = RunManifest::new(config_snapshot(cli), models);
            if let Some(t) = &cli.timestamp {
                manifest = manifest.with_timestamp(t.clone());
            }
            let report = collate(&checks, &metrics, &[manifest], &CollateOptions::default())?;
            write_outputs(cli, &report, &formats, &artifacts)?;
            report
        }
    };
    for row in &report.check_table {
        for r in row.results.iter().flatten() {
            eprintln!(
                "{} {} {}: {}",
                if r.passed { "PASS" } else { "FAIL" },
                row.model_id,
                r.check_id,
                r.statistic
            );
        }
    }
    Ok(if report.all_checks_passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn write_outputs(
    cli: &Cli,
    report: &IntercomparisonReport,
    formats: &[Format],
    artifacts: &[(String, Vec<u8>)],
) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for &f in formats {
                write_report(report, f, &dir.join(format!("report.{}", f.extension())))?;
            }
            if !formats.contains(&Format::Json) {
                write_report(report, Format::Json, &dir.join("report.json"))?;
            }
            let mut manifest =
                serde_json::to_string_pretty(&report.manifest).map_err(|e| Error::Serialization(e.to_string()))?;
            manifest.push('\n');
            std::fs::write(dir.join("manifest.json"), manifest)?;
            for (name, bytes) in artifacts {
                std::fs::write(dir.join(name), bytes)?;
            }
        }
        None => {
            if formats.len() > 1 {
                return Err(Error::Config("several formats need --out".into()));
            }
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit(report, formats[0], &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn write_report(report: &IntercomparisonReport, format: Format, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    emit(report, format, &mut f)?;
    Ok(())
}
