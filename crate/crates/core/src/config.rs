//! JSON map configurations and fixture lookup.

use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::map::fixtures::{self, Eps0Rule, Fixture, H4Distortion, H5Rule, Hints};
use crate::map::{
    BallBound, BoundaryMode, Branch, BranchFormula, Generator, Interval, IntervalMap, Kind, MapSpec, MetricMeasureConfig,
    Model,
};
use crate::real::Scalar;

/// Default truncation level of a generated branch family.
pub const DEFAULT_TRUNCATION: usize = 40;

/// A fixture id, or the path of a JSON configuration.
pub fn load(arg: &str) -> Result<Fixture> {
    if fixtures::IDS.contains(&arg) {
        return fixtures::by_id(arg);
    }
    let path = Path::new(arg);
    if path.extension().is_some_and(|e| e == "json") || path.exists() {
        return parse_config(path);
    }
    fixtures::by_id(arg)
}

pub fn parse_config(path: &Path) -> Result<Fixture> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<Fixture> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::schema("", format!("not valid JSON: {e}")))?;
    let obj = object(&root, "")?;
    known_keys(obj, "", &["name", "metric", "branches", "generator", "hints"])?;
    let name = match obj.get("name") {
        None => None,
        Some(v) => Some(string(v, "/name")?.to_string()),
    };
    let metric_v = obj.get("metric").ok_or_else(|| Error::schema("/metric", "missing"))?;
    let (metric, space) = metric(metric_v)?;
    let mut branches = Vec::new();
    if let Some(v) = obj.get("branches") {
        let list = v.as_array().ok_or_else(|| Error::schema("/branches", "expected an array"))?;
        for (i, b) in list.iter().enumerate() {
            branches.push(branch(b, &format!("/branches/{i}"))?);
        }
    }
    let map = match obj.get("generator") {
        Some(g) => {
            let (generator, truncation, tail) = generator(g)?;
            let mut m = IntervalMap::with_generator(space, generator, truncation, tail);
            m.branches.extend(branches);
            m.branches.sort_by(|a, b| a.domain.lo.total_cmp(&b.domain.lo));
            m
        }
        None if branches.is_empty() => return Err(Error::schema("/branches", "a map needs branches or a generator")),
        None => IntervalMap::new(space, branches),
    };
    validate(&map)?;
    let hints = match obj.get("hints") {
        Some(h) => hints(h)?,
        None => Hints { h5: if map.generator.is_some() { H5Rule::Unavailable } else { H5Rule::AdjacentGrowth }, ..Hints::default() },
    };
    Ok(Fixture { spec: MapSpec { name, metric, model: Model::Interval(map) }, hints })
}

fn object<'a>(v: &'a Value, ptr: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::schema(ptr, "expected an object"))
}

fn known_keys(obj: &Map<String, Value>, ptr: &str, keys: &[&str]) -> Result<()> {
    match obj.keys().find(|k| !keys.contains(&k.as_str())) {
        Some(k) => Err(Error::schema(format!("{ptr}/{k}"), "unknown key")),
        None => Ok(()),
    }
}

fn string<'a>(v: &'a Value, ptr: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::schema(ptr, "expected a string"))
}

fn field<'a>(obj: &'a Map<String, Value>, ptr: &str, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::schema(format!("{ptr}/{key}"), "missing"))
}

/// A number, or a constant expression given as a string; "inf" is allowed.
fn scalar(v: &Value, ptr: &str) -> Result<Scalar> {
    match v {
        Value::Number(n) => n.as_f64().map(Scalar::from_f64).ok_or_else(|| Error::schema(ptr, "number out of range")),
        Value::String(s) if s.trim() == "inf" => Ok(Scalar::from_f64(f64::INFINITY)),
        Value::String(s) => Expr::constant(s),
        _ => Err(Error::schema(ptr, "expected a number or an expression string")),
    }
}

fn number(v: &Value, ptr: &str) -> Result<f64> {
    let x = scalar(v, ptr)?.to_f64();
    if x.is_nan() {
        return Err(Error::schema(ptr, "value is not a number"));
    }
    Ok(x)
}

fn expr(v: &Value, ptr: &str, vars: &[&str]) -> Result<Expr> {
    match v {
        Value::String(s) => Expr::parse(s, vars),
        Value::Number(n) => Expr::parse(&n.to_string(), vars),
        _ => Err(Error::schema(ptr, "expected an expression string")),
    }
}

fn pair_of<'a>(v: &'a Value, ptr: &str) -> Result<[&'a Value; 2]> {
    match v.as_array().map(|a| a.as_slice()) {
        Some([a, b]) => Ok([a, b]),
        _ => Err(Error::schema(ptr, "expected [lo, hi]")),
    }
}

fn interval(v: &Value, ptr: &str) -> Result<Interval> {
    let [a, b] = pair_of(v, ptr)?;
    let (lo, hi) = (number(a, &format!("{ptr}/0"))?, number(b, &format!("{ptr}/1"))?);
    if !(lo < hi) {
        return Err(Error::schema(ptr, format!("empty interval ({lo}, {hi})")));
    }
    Ok(Interval::new(lo, hi))
}

fn metric(v: &Value) -> Result<(MetricMeasureConfig, Interval)> {
    let obj = object(v, "/metric")?;
    known_keys(obj, "/metric", &["dimension", "eps1", "space", "boundary", "ball_bound"])?;
    let dim = field(obj, "/metric", "dimension")?
        .as_u64()
        .ok_or_else(|| Error::schema("/metric/dimension", "expected an integer"))?;
    if dim != 1 {
        return Err(Error::schema("/metric/dimension", "configurations describe interval maps; use the skew2d fixture in two dimensions"));
    }
    let eps1 = match obj.get("eps1") {
        Some(e) => number(e, "/metric/eps1")?,
        None => f64::INFINITY,
    };
    let space = match obj.get("space") {
        Some(s) => interval(s, "/metric/space")?,
        None => Interval::new(0.0, 1.0),
    };
    let boundary = match obj.get("boundary").map(|b| string(b, "/metric/boundary")).transpose()? {
        None | Some("in-x") => BoundaryMode::InX,
        Some("in-rd") => BoundaryMode::InRd,
        Some(other) => return Err(Error::schema("/metric/boundary", format!("unknown mode `{other}`"))),
    };
    let ball_bound = match obj.get("ball_bound") {
        None => BallBound::Lebesgue,
        Some(b) => BallBound::Formula(expr(b, "/metric/ball_bound", &["eps"])?),
    };
    Ok((MetricMeasureConfig { dimension: 1, eps1, boundary_mode: boundary, ball_bound }, space))
}

fn branch(v: &Value, ptr: &str) -> Result<Branch> {
    let obj = object(v, ptr)?;
    known_keys(obj, ptr, &["id", "domain", "forward", "inverse", "jacobian", "image", "contraction", "distortion"])?;
    let id = string(field(obj, ptr, "id")?, &format!("{ptr}/id"))?;
    let domain = interval(field(obj, ptr, "domain")?, &format!("{ptr}/domain"))?;
    let kind = Kind::Formula {
        forward: expr(field(obj, ptr, "forward")?, &format!("{ptr}/forward"), &["x"])?,
        inverse: expr(field(obj, ptr, "inverse")?, &format!("{ptr}/inverse"), &["x"])?,
        jacobian: expr(field(obj, ptr, "jacobian")?, &format!("{ptr}/jacobian"), &["x"])?,
        params: Vec::new(),
    };
    let mut b = Branch::new(id, domain, kind);
    if let Some(i) = obj.get("image") {
        b = b.with_image(interval(i, &format!("{ptr}/image"))?);
    }
    if let Some(c) = obj.get("contraction") {
        b = b.with_contraction(scalar(c, &format!("{ptr}/contraction"))?);
    }
    if let Some(d) = obj.get("distortion") {
        b = b.with_distortion(scalar(d, &format!("{ptr}/distortion"))?);
    }
    check_branch(&b, ptr)?;
    Ok(b)
}

/// Round trip and Jacobian sign at a few interior points.
fn check_branch(b: &Branch, ptr: &str) -> Result<()> {
    let d = b.domain;
    let hi = if d.hi.is_finite() { d.hi } else { d.lo + 1.0 };
    for s in [0.1, 0.37, 0.5, 0.81] {
        let x = d.lo + s * (hi - d.lo);
        let y = b.forward(x);
        if !y.is_finite() {
            return Err(Error::schema(format!("{ptr}/forward"), format!("not finite at x = {x}")));
        }
        let back = b.inverse(y);
        if !((back - x).abs() <= 1e-8 * (1.0 + x.abs())) {
            return Err(Error::schema(format!("{ptr}/inverse"), format!("does not invert forward at x = {x}")));
        }
        if !(b.jac(y) > 0.0) {
            return Err(Error::schema(format!("{ptr}/jacobian"), format!("not positive at y = {y}")));
        }
    }
    Ok(())
}

fn generator(v: &Value) -> Result<(Generator, usize, Option<Expr>)> {
    let ptr = "/generator";
    let obj = object(v, ptr)?;
    known_keys(obj, ptr, &["index_var", "formulas", "truncation", "tail_bound"])?;
    let var = match obj.get("index_var") {
        Some(s) => string(s, "/generator/index_var")?.to_string(),
        None => "k".to_string(),
    };
    let truncation = match obj.get("truncation") {
        Some(t) => t.as_u64().filter(|&t| t >= 1).ok_or_else(|| Error::schema("/generator/truncation", "expected a positive integer"))? as usize,
        None => DEFAULT_TRUNCATION,
    };
    let tail = obj.get("tail_bound").map(|t| expr(t, "/generator/tail_bound", &["K"])).transpose()?;
    let list = field(obj, ptr, "formulas")?
        .as_array()
        .filter(|a| !a.is_empty())
        .ok_or_else(|| Error::schema("/generator/formulas", "expected a non-empty array"))?;
    let index = [var.as_str()];
    let point = ["x", var.as_str()];
    let mut formulas = Vec::new();
    for (i, f) in list.iter().enumerate() {
        let p = format!("/generator/formulas/{i}");
        let o = object(f, &p)?;
        known_keys(o, &p, &["domain", "forward", "inverse", "jacobian", "contraction", "distortion"])?;
        let [lo, hi] = pair_of(field(o, &p, "domain")?, &format!("{p}/domain"))?;
        formulas.push(BranchFormula {
            domain_lo: expr(lo, &format!("{p}/domain/0"), &index)?,
            domain_hi: expr(hi, &format!("{p}/domain/1"), &index)?,
            forward: expr(field(o, &p, "forward")?, &format!("{p}/forward"), &point)?,
            inverse: expr(field(o, &p, "inverse")?, &format!("{p}/inverse"), &point)?,
            jacobian: expr(field(o, &p, "jacobian")?, &format!("{p}/jacobian"), &point)?,
            contraction: o.get("contraction").map(|c| expr(c, &format!("{p}/contraction"), &index)).transpose()?,
            distortion: o.get("distortion").map(|c| expr(c, &format!("{p}/distortion"), &index)).transpose()?,
        });
    }
    let g = Generator::Formula { index_var: var, formulas };
    for k in 1..=truncation.min(3) {
        for (r, b) in g.branches(k).iter().enumerate() {
            if !(b.domain.lo < b.domain.hi) {
                return Err(Error::schema(format!("/generator/formulas/{r}/domain"), format!("empty at index {k}")));
            }
            check_branch(b, &format!("/generator/formulas/{r}"))?;
        }
    }
    Ok((g, truncation, tail))
}

fn validate(m: &IntervalMap) -> Result<()> {
    for (i, b) in m.branches.iter().enumerate() {
        if !m.space.contains_interval(&b.domain) {
            return Err(Error::schema(format!("/branches/{i}/domain"), format!("branch {} leaves the phase space", b.id)));
        }
        if i > 0 && b.domain.lo < m.branches[i - 1].domain.hi {
            return Err(Error::schema(
                format!("/branches/{i}/domain"),
                format!("branch {} overlaps branch {}", b.id, m.branches[i - 1].id),
            ));
        }
    }
    Ok(())
}

fn opt_scalar(obj: &Map<String, Value>, key: &str) -> Result<Option<Scalar>> {
    obj.get(key).map(|v| scalar(v, &format!("/hints/{key}"))).transpose()
}

fn hints(v: &Value) -> Result<Hints> {
    let ptr = "/hints";
    let obj = object(v, ptr)?;
    known_keys(
        obj,
        ptr,
        &["n0", "alpha", "lambda", "dtilde", "sigma", "eps2", "eps3", "eps4", "a0", "eps0", "eta", "h4_distortion", "diam_x", "h5"],
    )?;
    let mut h = Hints::default();
    if let Some(n) = obj.get("n0") {
        h.n0 = n.as_u64().filter(|&n| n >= 1).ok_or_else(|| Error::schema("/hints/n0", "expected a positive integer"))? as u32;
    }
    if let Some(a) = opt_scalar(obj, "alpha")? {
        h.alpha = a;
    }
    if let Some(e) = opt_scalar(obj, "eta")? {
        h.eta = e;
    }
    h.lambda = opt_scalar(obj, "lambda")?;
    h.dtilde = opt_scalar(obj, "dtilde")?;
    h.sigma = opt_scalar(obj, "sigma")?;
    h.eps2 = opt_scalar(obj, "eps2")?;
    h.eps3 = opt_scalar(obj, "eps3")?;
    h.eps4 = opt_scalar(obj, "eps4")?;
    h.a0 = opt_scalar(obj, "a0")?;
    h.diam_x = opt_scalar(obj, "diam_x")?;
    if let Some(e) = obj.get("eps0") {
        h.eps0 = match e {
            Value::String(s) if s == "average" => Eps0Rule::Average,
            other => Eps0Rule::Value(scalar(other, "/hints/eps0")?),
        };
    }
    if let Some(d) = obj.get("h4_distortion") {
        h.h4_distortion = match string(d, "/hints/h4_distortion")? {
            "D" => H4Distortion::D,
            "Dtilde" => H4Distortion::Dtilde,
            other => return Err(Error::schema("/hints/h4_distortion", format!("expected D or Dtilde, got `{other}`"))),
        };
    }
    if let Some(r) = obj.get("h5") {
        let o = object(r, "/hints/h5")?;
        known_keys(o, "/hints/h5", &["rule", "s", "t"])?;
        h.h5 = match string(field(o, "/hints/h5", "rule")?, "/hints/h5/rule")? {
            "adjacent-growth" => H5Rule::AdjacentGrowth,
            "doubling" => H5Rule::Doubling,
            "unavailable" => H5Rule::Unavailable,
            "half-line" => H5Rule::HalfLine {
                s: scalar(field(o, "/hints/h5", "s")?, "/hints/h5/s")?,
                t: scalar(field(o, "/hints/h5", "t")?, "/hints/h5/t")?,
            },
            other => return Err(Error::schema("/hints/h5/rule", format!("unknown rule `{other}`"))),
        };
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLING: &str = r#"{
        "name": "doubling-config",
        "metric": {"dimension": 1, "eps1": 1, "space": [0, 1]},
        "branches": [
            {"id": "left", "domain": [0, "1/2"], "forward": "2*x", "inverse": "x/2", "jacobian": "1/2"},
            {"id": "right", "domain": ["1/2", 1], "forward": "2*x - 1", "inverse": "(x + 1)/2", "jacobian": "1/2"}
        ]
    }"#;

    #[test]
    fn fixture_ids_bypass_parsing() {
        assert_eq!(load("wmap").unwrap().spec.name.as_deref(), Some("wmap"));
        assert!(matches!(load("nope"), Err(Error::Invalid(_))));
    }

    #[test]
    fn doubling_config() {
        let f = parse_config_str(DOUBLING).unwrap();
        let m = f.spec.interval_map().unwrap();
        assert_eq!(m.branches.len(), 2);
        assert!((m.branches[1].forward(0.75) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn overlapping_domains_are_rejected() {
        let text = DOUBLING.replace(r#""domain": ["1/2", 1]"#, r#""domain": ["0.4", 1]"#);
        let err = parse_config_str(&text).unwrap_err();
        assert_eq!(err, Error::schema("/branches/1/domain", "branch right overlaps branch left"));
    }

    #[test]
    fn bad_formula_reports_the_formula() {
        let text = DOUBLING.replace(r#""forward": "2*x","#, r#""forward": "2*x +","#);
        assert!(matches!(parse_config_str(&text), Err(Error::ExpressionError { formula, .. }) if formula == "2*x +"));
        let text = DOUBLING.replace(r#""inverse": "x/2""#, r#""inverse": "x/3""#);
        assert!(matches!(parse_config_str(&text), Err(Error::SchemaError { pointer, .. }) if pointer == "/branches/0/inverse"));
        let text = DOUBLING.replace(r#""eps1": 1,"#, r#""eps1": 1, "colour": 2,"#);
        assert!(matches!(parse_config_str(&text), Err(Error::SchemaError { pointer, .. }) if pointer == "/metric/colour"));
    }

    #[test]
    fn half_line_generator() {
        let text = r#"{
            "metric": {"dimension": 1, "space": [0, "inf"]},
            "generator": {
                "index_var": "k",
                "truncation": 40,
                "tail_bound": "2^(-K)",
                "formulas": [
                    {"domain": ["k - 1", "k - 1/10"], "forward": "(10 + 2^(-k))*(x - k + 1)",
                     "inverse": "k - 1 + x/(10 + 2^(-k))", "jacobian": "1/(10 + 2^(-k))"},
                    {"domain": ["k - 1/10", "k"], "forward": "1/(k - x)", "inverse": "k - 1/x", "jacobian": "1/x^2"}
                ]
            }
        }"#;
        let f = parse_config_str(text).unwrap();
        let m = f.spec.interval_map().unwrap();
        assert_eq!(m.branches.len(), 80);
        assert_eq!(m.truncation, 40);
        assert!((m.tail(Interval::new(39.0, 41.0)) - 2f64.powi(-40)).abs() < 1e-25);
        let x = 0.95;
        let b = &m.branches[m.locate(x).unwrap()];
        assert!((b.forward(x) - 20.0).abs() < 1e-9);
    }
}
