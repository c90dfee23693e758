use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use expmix::config;
use expmix::constants::ConstantsOptions;
use expmix::coupling::CouplingParams;
use expmix::hypothesis::check_inducing_partition;
use expmix::inducing::tail_statistics;
use expmix::map::fixtures::Fixture;
use expmix::real::Scalar;
use expmix::report::{self, Induced, PipelineOptions};
use expmix::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "expmix", version, about = "Mixing constants, coupling and inducing schemes for piecewise expanding maps")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Seed for every sampled quantity.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Write the JSON result to this file instead of stdout.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    /// Write the series of the run as CSV.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Significant digits for printed values.
    #[arg(long, global = true, default_value_t = 12)]
    precision: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Check the hypotheses and print the certificate.
    Check {
        map: String,
        /// Restrict the output to one hypothesis (h1 to h8).
        #[arg(long)]
        hypothesis: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Derive the full chain of constants.
    Constants {
        map: String,
        #[arg(long)]
        a0: Option<String>,
        #[arg(long = "B0")]
        b0: Option<String>,
    },
    /// L1 distance of transfer-operator iterates to the invariant density.
    Mix {
        map: String,
        #[arg(long, default_value_t = 30)]
        steps: usize,
    },
    /// Couple two standard families.
    Couple {
        map: String,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
    },
    /// Build an inducing scheme and its return-time tail.
    Induce {
        map: String,
        #[arg(long, default_value_t = 1)]
        scheme: u8,
        /// Monte-Carlo points for the scheme-1 tail oracle.
        #[arg(long)]
        mc_points: Option<u64>,
    },
    /// Full pipeline with comparison against the reference values.
    Report {
        map: String,
        #[arg(long)]
        couple: Option<usize>,
        #[arg(long)]
        mix: Option<usize>,
        #[arg(long)]
        induce: Option<u8>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}

fn load(arg: &str) -> expmix::Result<(String, Fixture)> {
    let f = config::load(arg)?;
    let id = f.spec.name.clone().unwrap_or_else(|| arg.to_string());
    Ok((id, f))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Invalid(format!("cannot write {}: {e}", path.display()))
}

fn emit_json(g: &Global, v: &serde_json::Value) -> expmix::Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Invalid(e.to_string()))? + "\n";
    match &g.json {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> expmix::Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

fn to_value<T: serde::Serialize>(v: &T) -> expmix::Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Invalid(e.to_string()))
}

fn parse_scalar(flag: &str, s: &str) -> expmix::Result<Scalar> {
    expmix::expr::Expr::constant(s).map_err(|e| Error::Invalid(format!("--{flag}: {e}")))
}

fn run(cli: Cli) -> expmix::Result<bool> {
    let g = cli.global;
    match cli.command {
        Command::Check { map, hypothesis, trials } => {
            let (_, f) = load(&map)?;
            let mut opts = expmix::hypothesis::CheckOptions::for_spec(&f.spec);
            opts.seed = g.seed;
            if let Some(t) = trials {
                opts.trials = t;
            }
            let cert = expmix::hypothesis::certify(&f.spec, &f.hints, &opts)?;
            let full = to_value(&cert)?;
            let keys: &[&str] = match hypothesis.as_deref() {
                None => &[],
                Some("h1") => &["eps1", "eps2", "lambda"],
                Some("h2") => &["alpha", "dtilde", "eps3", "d"],
                Some("h3") => &["n0", "eps4", "sigma", "cbar", "complexity"],
                Some("h4") => &["eta", "c_eps0", "h4_distortion"],
                Some("h5") => &["h5"],
                Some("h6" | "h7" | "h8") => {
                    let (_, r) = report::constants_for(&f, &ConstantsOptions::default())?;
                    let c = if f.spec.metric.dimension == 2 { report::INDUCING_C_2D } else { 1.0 / 3.0 };
                    let v = check_inducing_partition(&f.spec, r.delta0.to_f64(), c, g.seed)?;
                    emit_json(&g, &to_value(&v)?)?;
                    return Ok(v.h6 && v.h7 != Some(false) && v.h8 != Some(false));
                }
                Some(other) => return Err(Error::Invalid(format!("unknown hypothesis `{other}` (expected h1 to h8)"))),
            };
            let out = if keys.is_empty() {
                full
            } else {
                let obj = full.as_object().expect("certificate serializes to an object");
                serde_json::Value::Object(keys.iter().filter_map(|k| obj.get(*k).map(|v| (k.to_string(), v.clone()))).collect())
            };
            emit_json(&g, &out)?;
            Ok(true)
        }
        Command::Constants { map, a0, b0 } => {
            let (id, f) = load(&map)?;
            let opts = ConstantsOptions {
                a0: a0.map(|v| parse_scalar("a0", &v)).transpose()?,
                b0: b0.map(|v| parse_scalar("B0", &v)).transpose()?,
                ..Default::default()
            };
            let custom = opts.a0.is_some() || opts.b0.is_some();
            let (_, r) = report::constants_for(&f, &opts)?;
            let cmp = if custom { Vec::new() } else { report::compare(&r, &report::golden_values(&id)?, g.precision)? };
            let pass = cmp.iter().all(|c| c.pass);
            if g.json.is_some() {
                emit_json(&g, &json!({ "id": id, "constants": to_value(&r)?, "comparisons": to_value(&cmp)?, "pass": pass }))?;
            }
            let mut text = String::new();
            for p in &r.provenance {
                let inputs: Vec<String> = p.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let _ = writeln!(text, "{:<24} {:<28} {} [{}]", p.name, p.value, p.formula, inputs.join(", "));
            }
            for n in &r.notes {
                let _ = writeln!(text, "note: {n}");
            }
            for c in &cmp {
                let _ = writeln!(
                    text,
                    "{} {} measured {} expected {} ({:?}{})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.expected,
                    c.kind,
                    if c.tol > 0.0 { format!(" {:e}", c.tol) } else { String::new() }
                );
            }
            print!("{text}");
            Ok(pass)
        }
        Command::Mix { map, steps } => {
            let (_, f) = load(&map)?;
            let run = report::mix(&f, steps)?;
            if let Some(p) = &g.csv {
                write_csv(p, "step,l1", run.series.iter().enumerate().map(|(i, v)| format!("{i},{v:e}")))?;
            }
            emit_json(&g, &to_value(&run)?)?;
            Ok(true)
        }
        Command::Couple { map, rounds } => {
            let (_, f) = load(&map)?;
            let (_, r) = report::constants_for(&f, &ConstantsOptions::default())?;
            let params = CouplingParams::from_report(&r)?;
            let run = report::couple(&f, &r, rounds)?;
            let s = &run.state;
            if let Some(p) = &g.csv {
                let rows = (0..s.l1_series.len())
                    .map(|i| format!("{i},{:e},{:e},{:e}", s.uncoupled_series[i], s.l1_series[i], params.bound(i)));
                write_csv(p, "round,uncoupled,l1,bound", rows)?;
            }
            emit_json(
                &g,
                &json!({
                    "rounds": rounds,
                    "fitted_rate": run.fitted_rate,
                    "fit_window": run.fit_window,
                    "bound_violations": run.bound_violations,
                    "deficit": s.deficit,
                    "difference_error": s.difference_error.iter().cloned().fold(0.0, f64::max),
                    "blocks": to_value(&run.blocks)?,
                }),
            )?;
            Ok(run.bound_violations == 0)
        }
        Command::Induce { map, scheme, mc_points } => {
            let (_, f) = load(&map)?;
            let (_, r) = report::constants_for(&f, &ConstantsOptions::default())?;
            match report::induce(&f, &r, scheme, g.seed, mc_points)? {
                Induced::Family(s) => {
                    if let Some(p) = &g.csv {
                        let mc = s.monte_carlo.as_ref();
                        let rows = s.tail.iter().enumerate().map(|(i, (n, v))| {
                            let m = mc.map(|m| m.survivors[i] as f64 / m.points as f64);
                            format!("{n},{v:e},{}", m.map(|x| format!("{x:e}")).unwrap_or_default())
                        });
                        write_csv(p, "n,tail,monte_carlo", rows)?;
                    }
                    let stats = tail_statistics(&s.tail, s.gcd).ok();
                    emit_json(&g, &json!({ "scheme": to_value(&s)?, "tail": to_value(&stats)? }))?;
                    Ok(s.mass_deficit < 1e-6)
                }
                Induced::Analytic(a) => {
                    if let Some(p) = &g.csv {
                        write_csv(p, "tau,log10_mass", a.cells.iter().map(|c| format!("{},{}", c.tau, c.log10_return_mass)))?;
                    }
                    emit_json(&g, &to_value(&a)?)?;
                    Ok(a.gcd == 1 && a.cells.iter().all(|c| c.positive))
                }
            }
        }
        Command::Report { map, couple, mix, induce } => {
            let (id, f) = load(&map)?;
            let series = g.csv.iter().map(|p| p.display().to_string()).collect();
            let opts = PipelineOptions {
                seed: g.seed,
                precision: g.precision,
                couple_rounds: couple,
                mix_steps: mix,
                induce,
                series,
                ..Default::default()
            };
            let rep = report::run_pipeline(&id, &f, &opts)?;
            if let (Some(p), Some(m)) = (&g.csv, rep.stages.get("mix")) {
                let vals: Vec<f64> = m["series"].as_array().map(|a| a.iter().filter_map(|v| v.as_f64()).collect()).unwrap_or_default();
                write_csv(p, "step,l1", vals.iter().enumerate().map(|(i, v)| format!("{i},{v:e}")))?;
            }
            emit_json(&g, &to_value(&rep)?)?;
            Ok(rep.pass)
        }
    }
}
