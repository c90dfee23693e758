//! Built-in example maps together with the closed-form facts known about them.

use super::{Branch, BoundaryMode, Generator, Interval, IntervalMap, Kind, MapSpec, MetricMeasureConfig, Model, SkewMap};
use crate::error::{Error, Result};
use crate::real::Scalar;

pub const IDS: [&str; 4] = ["wmap", "rplus", "doubling", "skew2d"];

/// How eps0 is selected once a0 is known.
#[derive(Clone, Debug)]
pub enum Eps0Rule {
    /// e^{-a0 eps0^alpha} (lambda^{-n0} - 1) equals the average of sigma and lambda^{-n0} - 1.
    Average,
    Value(Scalar),
}

/// Which distortion constant enters the exponent of C_eps0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum H4Distortion {
    D,
    Dtilde,
}

/// Closed-form route to the positively linked data.
#[derive(Clone, Debug)]
pub enum H5Rule {
    /// Finite partition of an interval; growth through adjacent pairs of branches.
    AdjacentGrowth,
    /// The half-line map with avoidance parameter s and cut parameter t.
    HalfLine { s: Scalar, t: Scalar },
    /// Full linear branches of equal slope 2.
    Doubling,
    Unavailable,
}

#[derive(Clone, Debug)]
pub struct Hints {
    pub n0: u32,
    pub alpha: Scalar,
    pub lambda: Option<Scalar>,
    pub dtilde: Option<Scalar>,
    pub sigma: Option<Scalar>,
    /// `None` means infinite.
    pub eps2: Option<Scalar>,
    pub eps3: Option<Scalar>,
    pub eps4: Option<Scalar>,
    pub a0: Option<Scalar>,
    pub eps0: Eps0Rule,
    pub eta: Scalar,
    pub h4_distortion: H4Distortion,
    pub diam_x: Option<Scalar>,
    pub h5: H5Rule,
}

impl Default for Hints {
    fn default() -> Self {
        Hints {
            n0: 1,
            alpha: Scalar::int(1),
            lambda: None,
            dtilde: None,
            sigma: None,
            eps2: None,
            eps3: None,
            eps4: None,
            a0: None,
            eps0: Eps0Rule::Average,
            eta: Scalar::frac(1, 3),
            h4_distortion: H4Distortion::D,
            diam_x: None,
            h5: H5Rule::AdjacentGrowth,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub spec: MapSpec,
    pub hints: Hints,
}

pub fn by_id(id: &str) -> Result<Fixture> {
    match id {
        "wmap" => Ok(wmap()),
        "rplus" => Ok(rplus()),
        "doubling" => Ok(doubling()),
        "skew2d" => Ok(skew2d()),
        other => Err(Error::Invalid(format!("unknown fixture `{other}` (expected one of {})", IDS.join(", ")))),
    }
}

fn q(n: i64, d: i64) -> f64 {
    n as f64 / d as f64
}

pub fn wmap() -> Fixture {
    let branches = vec![
        Branch::new("h1", Interval::new(0.0, q(9, 40)), Kind::Affine { slope: -40.0 / 9.0, offset: 1.0 })
            .with_image(Interval::new(0.0, 1.0))
            .with_contraction(Scalar::frac(9, 40))
            .with_distortion(Scalar::int(0)),
        Branch::new("h2", Interval::new(q(9, 40), q(9, 20)), Kind::Affine { slope: 2.0, offset: -q(9, 20) })
            .with_image(Interval::new(0.0, q(9, 20)))
            .with_contraction(Scalar::frac(1, 2))
            .with_distortion(Scalar::int(0)),
        Branch::new("h3", Interval::new(q(9, 20), q(9, 16)), Kind::Affine { slope: -4.0, offset: q(9, 4) })
            .with_image(Interval::new(0.0, q(9, 20)))
            .with_contraction(Scalar::frac(1, 4))
            .with_distortion(Scalar::int(0)),
        Branch::new("h4", Interval::new(q(9, 16), 1.0), Kind::Quadratic { b: q(81, 112), c: -q(81, 112) })
            .with_image(Interval::new(0.0, 1.0))
            .with_contraction(Scalar::frac(112, 207))
            .with_distortion(Scalar::frac(25088, 42849)),
    ];
    let spec = MapSpec {
        name: Some("wmap".into()),
        metric: MetricMeasureConfig::lebesgue(1, 1.0, BoundaryMode::InX),
        model: Model::Interval(IntervalMap::new(Interval::new(0.0, 1.0), branches)),
    };
    let hints = Hints {
        lambda: Some(Scalar::frac(112, 207)),
        dtilde: Some(Scalar::frac(25088, 42849)),
        sigma: Some(Scalar::frac(621, 896)),
        eps2: Some(Scalar::int(1)),
        eps3: Some(Scalar::int(1)),
        eps4: Some(Scalar::frac(1, 4)),
        a0: Some(Scalar::frac(25089, 9025)),
        ..Hints::default()
    };
    Fixture { spec, hints }
}

pub const RPLUS_TRUNCATION: usize = 40;

pub fn rplus() -> Fixture {
    let t = 0.1;
    let map = IntervalMap::with_generator(
        Interval::new(0.0, f64::INFINITY),
        Generator::HalfLine { t },
        RPLUS_TRUNCATION,
        None,
    );
    let spec = MapSpec {
        name: Some("rplus".into()),
        metric: MetricMeasureConfig::lebesgue(1, f64::INFINITY, BoundaryMode::InX),
        model: Model::Interval(map),
    };
    let hints = Hints {
        lambda: Some(Scalar::frac(1, 10)),
        dtilde: Some(Scalar::frac(1, 5)),
        sigma: Some(Scalar::frac(21, 20)),
        eps4: Some(Scalar::frac(1, 2)),
        a0: Some(Scalar::frac(21, 81)),
        eps0: Eps0Rule::Value(Scalar::frac(1, 2)),
        h4_distortion: H4Distortion::Dtilde,
        h5: H5Rule::HalfLine { s: Scalar::frac(3, 5), t: Scalar::frac(1, 10) },
        ..Hints::default()
    };
    Fixture { spec, hints }
}

pub fn doubling() -> Fixture {
    let branches = vec![
        Branch::new("left", Interval::new(0.0, 0.5), Kind::Affine { slope: 2.0, offset: 0.0 })
            .with_contraction(Scalar::frac(1, 2))
            .with_distortion(Scalar::int(0)),
        Branch::new("right", Interval::new(0.5, 1.0), Kind::Affine { slope: 2.0, offset: -1.0 })
            .with_contraction(Scalar::frac(1, 2))
            .with_distortion(Scalar::int(0)),
    ];
    let spec = MapSpec {
        name: Some("doubling".into()),
        metric: MetricMeasureConfig::lebesgue(1, 1.0, BoundaryMode::InX),
        model: Model::Interval(IntervalMap::new(Interval::new(0.0, 1.0), branches)),
    };
    let hints = Hints {
        lambda: Some(Scalar::frac(1, 2)),
        dtilde: Some(Scalar::int(0)),
        sigma: Some(Scalar::int(0)),
        eps2: Some(Scalar::int(1)),
        eps3: Some(Scalar::int(1)),
        eps4: Some(Scalar::frac(1, 4)),
        a0: Some(Scalar::int(0)),
        eps0: Eps0Rule::Value(Scalar::frac(1, 4)),
        h5: H5Rule::Doubling,
        ..Hints::default()
    };
    Fixture { spec, hints }
}

pub const SKEW_S: f64 = 0.02;

pub fn skew2d() -> Fixture {
    let spec = MapSpec {
        name: Some("skew2d".into()),
        metric: MetricMeasureConfig::lebesgue(2, 2.0, BoundaryMode::InRd),
        model: Model::Skew(SkewMap::new(SKEW_S)),
    };
    let side = Scalar::frac(26, 25);
    let hints = Hints {
        lambda: Some(Scalar::frac(11, 50) * Scalar::int(2).sqrt()),
        dtilde: Some(Scalar::int(1)),
        sigma: Some(Scalar::int(2)),
        eps4: Some(Scalar::frac(1, 40)),
        eta: Scalar::frac(1, 6),
        diam_x: Some((Scalar::int(1) + side.clone() * side).sqrt()),
        h5: H5Rule::Unavailable,
        ..Hints::default()
    };
    Fixture { spec, hints }
}
