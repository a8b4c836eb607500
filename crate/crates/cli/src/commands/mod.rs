mod brackets;
mod classical;
mod kernel;
mod quantize;

use std::fs;

use bmech_core::sysdsl::SystemSpec;
use bmech_core::Error;
use serde_json::{json, Value};

use crate::report::{sha256_hex, usage, Failure, Outcome, Sink};
use crate::{Cli, Command, ReportArgs};

pub fn run(cli: &Cli) -> Outcome<()> {
    let config = serde_json::to_value(cli).expect("config serializes");
    let name = match &cli.command {
        Command::Parse => "parse",
        Command::Classical(_) => "classical",
        Command::Brackets(_) => "brackets",
        Command::QuantizeCheck(_) => "quantize-check",
        Command::Propagator(_) => "propagator",
        Command::Semiclassical(_) => "semiclassical",
        Command::Report(_) => "report",
    };
    if let Command::Report(args) = &cli.command {
        let hash = match &cli.spec {
            Some(p) => Some(sha256_hex(&read(p)?)),
            None => None,
        };
        let mut sink = Sink::new(cli.out.clone(), name, hash, config);
        let body = aggregate(args)?;
        return sink_finish(&mut sink, body);
    }
    let path = cli.spec.as_ref().ok_or_else(|| usage("--spec is required"))?;
    let bytes = read(path)?;
    let mut sink = Sink::new(cli.out.clone(), name, Some(sha256_hex(&bytes)), config);
    let res = (|| -> Outcome<Value> {
        let spec = SystemSpec::from_bytes(&bytes).map_err(Error::from)?;
        log::info!("loaded system '{}' (dim {})", spec.name, spec.dim);
        match &cli.command {
            Command::Parse => parse(&spec),
            Command::Classical(a) => classical::run(&spec, a, &mut sink),
            Command::Brackets(a) => brackets::run(&spec, a, cli.seed),
            Command::QuantizeCheck(a) => quantize::run(&spec, a, cli.seed),
            Command::Propagator(a) => kernel::propagator(&spec, a, &mut sink),
            Command::Semiclassical(a) => kernel::semiclassical(&spec, a, &mut sink),
            Command::Report(_) => unreachable!(),
        }
    })();
    match res {
        Ok(v) => sink_finish(&mut sink, v),
        Err(Failure::Core(e)) => {
            take(&mut sink).finish(Err(&e))?;
            Err(Failure::Core(e))
        }
        Err(u) => Err(u),
    }
}

fn take(sink: &mut Sink) -> Sink {
    std::mem::replace(sink, Sink::new(None, "", None, Value::Null))
}

fn sink_finish(sink: &mut Sink, body: Value) -> Outcome<()> {
    take(sink).finish(Ok(body))
}

fn read(path: &std::path::Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn parse(spec: &SystemSpec) -> Outcome<Value> {
    let natural = match spec.natural_form() {
        Ok(_) => true,
        Err(Error::NonNaturalLagrangian(_)) => false,
        Err(e) => return Err(e.into()),
    };
    let canonical: Value = serde_json::from_str(&spec.to_json()).expect("canonical form is JSON");
    Ok(json!({
        "name": spec.name,
        "dim": spec.dim,
        "autonomous": spec.is_autonomous(),
        "natural_form": natural,
        "canonical": canonical,
    }))
}

fn aggregate(args: &ReportArgs) -> Outcome<Value> {
    let mut reports = Vec::new();
    let mut all_ok = true;
    for p in &args.inputs {
        let text = read(p)?;
        let v: Value = serde_json::from_slice(&text).map_err(|e| usage(format!("{}: not a report: {e}", p.display())))?;
        let Some(command) = v.get("command").and_then(Value::as_str) else {
            return Err(usage(format!("{}: not a report (no command field)", p.display())));
        };
        let ok = v.get("status").and_then(Value::as_str) == Some("ok");
        all_ok &= ok;
        reports.push(json!({
            "file": p.file_name().map(|s| s.to_string_lossy().into_owned()),
            "command": command,
            "status": v.get("status"),
            "spec_hash": v.get("spec_hash"),
            "result": v.get("result"),
            "error": v.get("error"),
        }));
    }
    Ok(json!({ "count": reports.len(), "all_ok": all_ok, "reports": reports }))
}

/// Checks that `x` has `dim` finite components inside the chart domain.
pub(crate) fn check_point(spec: &SystemSpec, x: &[f64], label: &str) -> Outcome<()> {
    if x.len() != spec.dim {
        return Err(usage(format!("{label}: expected {} components, got {}", spec.dim, x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(usage(format!("{label}: components must be finite")));
    }
    if !spec.contains(x) {
        return Err(usage(format!("{label}: {x:?} lies outside the domain of '{}'", spec.name)));
    }
    Ok(())
}

pub(crate) fn check_finite(v: f64, label: &str) -> Outcome<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("{label} must be finite")))
    }
}
