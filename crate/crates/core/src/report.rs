//! Pipeline driver, golden-value comparison and run reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constants::{derive_constants, ConstantsOptions, ConstantsReport};
use crate::coupling::{run_coupling, CouplingOptions, CouplingParams, CouplingRun};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::family::Family;
use crate::hypothesis::{certify, check_inducing_partition, CheckOptions, HypothesisCertificate};
use crate::inducing::{build_scheme_1, build_scheme_2, build_scheme_3, tail_statistics, AnalyticScheme, ReturnTimeScheme, Scheme1Options};
use crate::map::fixtures::Fixture;
use crate::map::{Interval, IntervalMap};
use crate::real::Scalar;
use crate::transfer::{invariant_density, mixing_series, GridDensity, GridOptions, DEFAULT_MAX_ITER};

const GOLDEN: &str = include_str!("../data/golden.json");

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Tolerance {
    Exact,
    Relative,
    Absolute,
}

#[derive(Clone, Debug, Deserialize)]
pub struct GoldenValue {
    pub name: String,
    pub kind: Tolerance,
    /// A constant expression.
    pub value: String,
    #[serde(default)]
    pub tol: f64,
}

pub fn golden_values(id: &str) -> Result<Vec<GoldenValue>> {
    let mut all: BTreeMap<String, Vec<GoldenValue>> =
        serde_json::from_str(GOLDEN).map_err(|e| Error::Invalid(format!("golden data: {e}")))?;
    Ok(all.remove(id).unwrap_or_default())
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub name: String,
    pub kind: Tolerance,
    pub expected: String,
    pub measured: String,
    pub tol: f64,
    pub pass: bool,
}

/// Named scalar of a constants report, as used by the golden data.
pub fn constant_value(r: &ConstantsReport, name: &str) -> Option<Scalar> {
    let v = match name {
        "lambda" => r.lambda.clone(),
        "alpha" => r.alpha.clone(),
        "dtilde" => r.dtilde.clone(),
        "d" => r.d.clone(),
        "sigma" => r.sigma.clone(),
        "a0" => r.a0.clone(),
        "eps0" => r.eps0.clone(),
        "c_eps0" => r.c_eps0.clone(),
        "delta0" => r.delta0.clone(),
        "b0" => r.b0.clone(),
        "theta1" => r.theta1.clone(),
        "zeta2" => r.zeta2.clone(),
        "n1" => Scalar::int(r.n1 as i64),
        "n_delta" => Scalar::int(r.h5.as_ref()?.n_delta as i64),
        "log10_one_minus_gamma2" => Scalar::from_f64(r.rate.as_ref()?.log10_one_minus_gamma2),
        _ => return None,
    };
    Some(v)
}

pub fn compare(r: &ConstantsReport, golden: &[GoldenValue], digits: usize) -> Result<Vec<Comparison>> {
    golden
        .iter()
        .map(|g| {
            let expected = Expr::constant(&g.value)?;
            let measured = constant_value(r, &g.name);
            let pass = match &measured {
                None => false,
                Some(m) => match g.kind {
                    Tolerance::Exact => m.as_rational().is_some() && m.as_rational() == expected.as_rational(),
                    Tolerance::Relative => {
                        let (a, b) = (m.to_real(), expected.to_real());
                        ((a - b.clone()).abs() / b.abs()).to_f64() <= g.tol
                    }
                    Tolerance::Absolute => (m.to_real() - expected.to_real()).abs().to_f64() <= g.tol,
                },
            };
            Ok(Comparison {
                name: g.name.clone(),
                kind: g.kind.clone(),
                expected: g.value.clone(),
                measured: measured.map(|m| m.render(digits)).unwrap_or_else(|| "unavailable".into()),
                tol: g.tol,
                pass,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOptions {
    pub seed: u64,
    pub precision: usize,
    pub constants: ConstantsOptions,
    pub couple_rounds: Option<usize>,
    pub mix_steps: Option<usize>,
    pub induce: Option<u8>,
    pub series: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantLine {
    pub name: String,
    pub value: String,
    pub formula: String,
    pub inputs: Vec<(String, String)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub id: String,
    pub certificate: HypothesisCertificate,
    pub constants: Vec<ConstantLine>,
    pub notes: Vec<String>,
    pub stages: BTreeMap<String, serde_json::Value>,
    pub series: Vec<String>,
    pub comparisons: Vec<Comparison>,
    pub pass: bool,
}

pub fn certify_fixture(f: &Fixture, seed: Option<u64>) -> Result<HypothesisCertificate> {
    let mut opts = CheckOptions::for_spec(&f.spec);
    if let Some(s) = seed {
        opts.seed = s;
    }
    certify(&f.spec, &f.hints, &opts)
}

pub fn constants_for(f: &Fixture, options: &ConstantsOptions) -> Result<(HypothesisCertificate, ConstantsReport)> {
    let cert = certify_fixture(f, None)?;
    let report = derive_constants(&f.spec, &f.hints, &cert, options)?;
    Ok((cert, report))
}

fn bounded<'a>(f: &'a Fixture, what: &str) -> Result<&'a IntervalMap> {
    let m = f.spec.require_interval()?;
    if !m.space.hi.is_finite() {
        return Err(Error::Invalid(format!("{what} needs a bounded phase space")));
    }
    Ok(m)
}

/// Coupling of the uniform density on X with the uniform density on its left half.
pub fn couple(f: &Fixture, r: &ConstantsReport, rounds: usize) -> Result<CouplingRun> {
    let m = bounded(f, "coupling")?;
    let p = CouplingParams::from_report(r)?;
    let a = Family::from_density(m.space, p.eps0, |_| 1.0)?;
    let half = Interval::new(m.space.lo, m.space.mid());
    let b = Family::from_density(half, p.eps0, |_| 1.0 / half.len())?;
    run_coupling(m, &p, a, b, CouplingOptions { rounds, ..Default::default() })
}

#[derive(Clone, Debug, Serialize)]
pub struct MixRun {
    pub residual: f64,
    pub iterations: usize,
    /// L1 distance to the invariant density after each step.
    pub series: Vec<f64>,
    pub fitted_rate: f64,
}

/// L1 distance to the invariant density from the uniform density on the left half of X (or on (lo, lo + 1)).
pub fn mix(f: &Fixture, steps: usize) -> Result<MixRun> {
    let m = f.spec.require_interval()?;
    let opts = GridOptions::default();
    let inv = invariant_density(m, 1e-12, DEFAULT_MAX_ITER, opts)?;
    let hi = if m.space.hi.is_finite() { m.space.mid() } else { m.space.lo + 1.0 };
    let v = 1.0 / (hi - m.space.lo);
    let start = GridDensity::from_fn(vec![m.space.lo, hi], opts, |_| v);
    let series = mixing_series(m, &start, &inv.density, steps, opts)?;
    let window = series.len().min(31);
    Ok(MixRun {
        residual: inv.residual,
        iterations: inv.iterations,
        fitted_rate: crate::coupling::fitted_rate(&series[..window]),
        series,
    })
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Induced {
    Family(ReturnTimeScheme),
    Analytic(AnalyticScheme),
}

/// Cell size of the inducing partition as a fraction of delta0.
pub const INDUCING_C_2D: f64 = 0.01;

pub fn induce(f: &Fixture, r: &ConstantsReport, scheme: u8, seed: u64, mc_points: Option<u64>) -> Result<Induced> {
    match (scheme, f.spec.interval_map(), f.spec.skew_map()) {
        (1, Some(m), _) => {
            let mut opts = Scheme1Options { seed, ..Default::default() };
            if let Some(n) = mc_points {
                opts.mc_points = n;
            }
            Ok(Induced::Family(build_scheme_1(m, r, &opts)?))
        }
        (2 | 3, _, Some(map)) => {
            let v = check_inducing_partition(&f.spec, r.delta0.to_f64(), INDUCING_C_2D, seed)?;
            if scheme == 2 {
                Ok(Induced::Analytic(build_scheme_2(map, r, &v.partition, INDUCING_C_2D)?))
            } else {
                Ok(Induced::Analytic(build_scheme_3(map, r, &v.partition, INDUCING_C_2D, 3)?))
            }
        }
        (1, None, _) => Err(Error::Invalid("scheme 1 is built for one-dimensional maps".into())),
        (2 | 3, _, None) => Err(Error::Invalid("schemes 2 and 3 are built for the planar skew map".into())),
        _ => Err(Error::Invalid(format!("unknown scheme {scheme} (expected 1, 2 or 3)"))),
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Invalid(e.to_string()))
}

/// Check, constants, optional stages, then the golden comparison.
pub fn run_pipeline(id: &str, f: &Fixture, options: &PipelineOptions) -> Result<RunReport> {
    let cert = certify_fixture(f, Some(options.seed))?;
    let r = derive_constants(&f.spec, &f.hints, &cert, &options.constants)?;
    let digits = if options.precision == 0 { 12 } else { options.precision };
    let mut stages = BTreeMap::new();
    if let Some(rounds) = options.couple_rounds {
        let run = couple(f, &r, rounds)?;
        stages.insert(
            "couple".to_string(),
            serde_json::json!({
                "rounds": rounds,
                "fitted_rate": run.fitted_rate,
                "bound_violations": run.bound_violations,
                "uncoupled": run.state.uncoupled_series.last(),
                "blocks": to_value(&run.blocks)?,
            }),
        );
    }
    if let Some(steps) = options.mix_steps {
        let run = mix(f, steps)?;
        stages.insert("mix".to_string(), to_value(&run)?);
    }
    if let Some(s) = options.induce {
        let v = match induce(f, &r, s, options.seed, None)? {
            Induced::Family(sch) => {
                let stats = tail_statistics(&sch.tail, sch.gcd).ok();
                serde_json::json!({ "scheme": to_value(&sch)?, "tail": to_value(&stats)? })
            }
            Induced::Analytic(a) => to_value(&a)?,
        };
        stages.insert("induce".to_string(), v);
    }
    let golden = golden_values(id)?;
    let comparisons = compare(&r, &golden, digits)?;
    let pass = comparisons.iter().all(|c| c.pass);
    let constants = r
        .provenance
        .iter()
        .map(|p| ConstantLine { name: p.name.clone(), value: p.value.clone(), formula: p.formula.clone(), inputs: p.inputs.clone() })
        .collect();
    Ok(RunReport {
        id: id.to_string(),
        certificate: cert,
        constants,
        notes: r.notes.clone(),
        stages,
        series: options.series.clone(),
        comparisons,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fixtures;

    #[test]
    fn golden_file_parses() {
        for id in fixtures::IDS {
            let g = golden_values(id).unwrap();
            assert!(!g.is_empty());
            for v in &g {
                Expr::constant(&v.value).unwrap();
            }
        }
        assert!(golden_values("none").unwrap().is_empty());
    }

    #[test]
    fn wmap_matches_golden_values() {
        let f = fixtures::wmap();
        let (_, r) = constants_for(&f, &ConstantsOptions::default()).unwrap();
        let cmp = compare(&r, &golden_values("wmap").unwrap(), 12).unwrap();
        for c in &cmp {
            assert!(c.pass, "{c:?}");
        }
        let lam = cmp.iter().find(|c| c.name == "lambda").unwrap();
        assert_eq!(lam.measured, "112/207");
    }

    #[test]
    fn reports_are_byte_stable() {
        let f = fixtures::doubling();
        let opts = PipelineOptions { seed: 3, mix_steps: Some(5), ..Default::default() };
        let a = serde_json::to_string(&run_pipeline("doubling", &f, &opts).unwrap()).unwrap();
        let b = serde_json::to_string(&run_pipeline("doubling", &f, &opts).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
