//! Phase spaces, piecewise invertible maps and their inverse branches.

mod branch;
pub mod fixtures;
mod interval;
pub mod skew;

pub use branch::{Branch, Kind};
pub use interval::Interval;
pub use skew::{SkewCell, SkewMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::real::Scalar;

/// Distance below which a point counts as sitting on a partition boundary.
pub const BOUNDARY_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Boundary taken relative to the phase space.
    InX,
    /// Boundary taken in the ambient Euclidean space.
    InRd,
}

#[derive(Clone, Debug)]
pub enum BallBound {
    Lebesgue,
    Formula(Expr),
}

#[derive(Clone, Debug)]
pub struct MetricMeasureConfig {
    pub dimension: u8,
    pub eps1: f64,
    pub boundary_mode: BoundaryMode,
    pub ball_bound: BallBound,
}

impl MetricMeasureConfig {
    pub fn lebesgue(dimension: u8, eps1: f64, boundary_mode: BoundaryMode) -> Self {
        MetricMeasureConfig { dimension, eps1, boundary_mode, ball_bound: BallBound::Lebesgue }
    }

    /// Upper bound C_B(eps) on the measure of a ball of diameter `eps`.
    pub fn ball_measure_bound(&self, eps: &Scalar) -> Scalar {
        match &self.ball_bound {
            BallBound::Lebesgue if self.dimension == 1 => eps.clone(),
            BallBound::Lebesgue => {
                Scalar::from_f64(std::f64::consts::PI) * eps.clone() * eps.clone() / Scalar::int(4)
            }
            BallBound::Formula(e) => e.eval_scalar(std::slice::from_ref(eps)),
        }
    }
}

/// One branch of a generated family: domain ends in the index, maps in the point and the index.
#[derive(Clone, Debug)]
pub struct BranchFormula {
    pub domain_lo: Expr,
    pub domain_hi: Expr,
    pub forward: Expr,
    pub inverse: Expr,
    pub jacobian: Expr,
    pub contraction: Option<Expr>,
    pub distortion: Option<Expr>,
}

/// Closed-form family of branches indexed by k = 1, 2, ...
#[derive(Clone, Debug)]
pub enum Generator {
    /// The non-Markov map of the half line with parameter t.
    HalfLine { t: f64 },
    /// User formulas in the index variable; each index yields one branch per formula.
    Formula { index_var: String, formulas: Vec<BranchFormula> },
}

impl Generator {
    /// Branches produced for index `k` (one or more, left to right).
    pub fn branches(&self, k: usize) -> Vec<Branch> {
        match self {
            Generator::HalfLine { t } => {
                let kf = k as f64;
                let slope = 10.0 + 2f64.powi(-(k as i32));
                vec![
                    Branch::new(
                        format!("h{}", 2 * k - 1),
                        Interval::new(kf - 1.0, kf - t),
                        Kind::Affine { slope, offset: -slope * (kf - 1.0) },
                    )
                    .with_contraction(Scalar::int(1) / Scalar::from_f64(slope))
                    .with_distortion(Scalar::int(0)),
                    Branch::new(format!("h{}", 2 * k), Interval::new(kf - t, kf), Kind::Reciprocal { k: kf })
                        .with_contraction(Scalar::from_f64(*t) * Scalar::from_f64(*t))
                        .with_distortion(Scalar::from_f64(2.0 * t)),
                ]
            }
            Generator::Formula { formulas, .. } => {
                let kf = k as f64;
                formulas
                    .iter()
                    .enumerate()
                    .map(|(r, f)| {
                        let dom = Interval::new(f.domain_lo.eval(&[kf]), f.domain_hi.eval(&[kf]));
                        let kind = Kind::Formula {
                            forward: f.forward.clone(),
                            inverse: f.inverse.clone(),
                            jacobian: f.jacobian.clone(),
                            params: vec![kf],
                        };
                        let mut b = Branch::new(format!("k{k}.{r}"), dom, kind);
                        if let Some(c) = &f.contraction {
                            b = b.with_contraction(c.eval_scalar(&[Scalar::int(k as i64)]));
                        }
                        if let Some(d) = &f.distortion {
                            b = b.with_distortion(d.eval_scalar(&[Scalar::int(k as i64)]));
                        }
                        b
                    })
                    .collect()
            }
        }
    }
}

/// A piecewise monotone map of an interval (possibly unbounded).
#[derive(Clone, Debug)]
pub struct IntervalMap {
    pub space: Interval,
    pub branches: Vec<Branch>,
    pub generator: Option<Generator>,
    pub truncation: usize,
    /// Declared bound on the neglected part of a countable family, as a function of K.
    pub tail_bound: Option<Expr>,
}

impl IntervalMap {
    pub fn new(space: Interval, branches: Vec<Branch>) -> Self {
        let mut branches = branches;
        branches.sort_by(|a, b| a.domain.lo.total_cmp(&b.domain.lo));
        IntervalMap { space, branches, generator: None, truncation: 0, tail_bound: None }
    }

    pub fn with_generator(space: Interval, generator: Generator, truncation: usize, tail_bound: Option<Expr>) -> Self {
        let branches: Vec<Branch> = (1..=truncation).flat_map(|k| generator.branches(k)).collect();
        let mut m = IntervalMap::new(space, branches);
        m.generator = Some(generator);
        m.truncation = truncation;
        m.tail_bound = tail_bound;
        m
    }

    /// Right end of the materialized part of the partition.
    pub fn materialized_hi(&self) -> f64 {
        if self.generator.is_none() {
            return self.space.hi;
        }
        self.branches.last().map(|b| b.domain.hi).unwrap_or(self.space.lo)
    }

    /// Generate further levels so that the partition covers `(space.lo, x)`.
    pub fn extend_to(&mut self, x: f64) {
        let Some(generator) = self.generator.clone() else { return };
        while self.materialized_hi() < x && x.is_finite() {
            self.truncation += 1;
            let more = generator.branches(self.truncation);
            self.branches.extend(more);
        }
    }

    /// Index of the branch whose domain contains `x`.
    pub fn locate(&self, x: f64) -> Result<usize> {
        if !(x > self.space.lo && x < self.space.hi) || x.is_nan() {
            return Err(Error::OutsideSpace { x });
        }
        let idx = self.branches.partition_point(|b| b.domain.hi <= x);
        if idx >= self.branches.len() {
            return Err(Error::TruncationInsufficient { tail: f64::INFINITY, budget: 0.0 });
        }
        let b = &self.branches[idx];
        if (x - b.domain.lo).abs() < BOUNDARY_TOL || (x - b.domain.hi).abs() < BOUNDARY_TOL {
            return Err(Error::BoundaryPoint { x });
        }
        if x <= b.domain.lo {
            return Err(Error::BoundaryPoint { x });
        }
        Ok(idx)
    }

    /// Branch indices whose domains meet the open interval `region` in positive length.
    pub fn meeting(&self, region: Interval) -> std::ops::Range<usize> {
        let start = self.branches.partition_point(|b| b.domain.hi <= region.lo);
        let end = self.branches.partition_point(|b| b.domain.lo < region.hi);
        start..end.max(start)
    }

    /// Points of discontinuity (interior partition endpoints).
    pub fn cut_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .branches
            .iter()
            .flat_map(|b| [b.domain.lo, b.domain.hi])
            .filter(|&p| p > self.space.lo && p < self.space.hi)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    pub fn tail(&self, region: Interval) -> f64 {
        if region.hi <= self.materialized_hi() {
            return 0.0;
        }
        match &self.tail_bound {
            Some(e) => e.eval(&[self.truncation as f64]),
            None => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Model {
    Interval(IntervalMap),
    Skew(SkewMap),
}

#[derive(Clone, Debug)]
pub struct MapSpec {
    pub name: Option<String>,
    pub metric: MetricMeasureConfig,
    pub model: Model,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    One(f64),
    Two(f64, f64),
}

impl MapSpec {
    pub fn interval_map(&self) -> Option<&IntervalMap> {
        match &self.model {
            Model::Interval(m) => Some(m),
            Model::Skew(_) => None,
        }
    }

    pub fn skew_map(&self) -> Option<&SkewMap> {
        match &self.model {
            Model::Skew(m) => Some(m),
            Model::Interval(_) => None,
        }
    }

    pub fn require_interval(&self) -> Result<&IntervalMap> {
        self.interval_map().ok_or_else(|| Error::Invalid("operation needs a one-dimensional map".into()))
    }

    /// Image of a point together with the label of the branch containing it.
    pub fn evaluate_forward(&self, x: &Point) -> Result<(Point, String)> {
        match (&self.model, x) {
            (Model::Interval(m), Point::One(x)) => {
                let i = m.locate(*x)?;
                let b = &m.branches[i];
                Ok((Point::One(b.forward(*x)), b.id.clone()))
            }
            (Model::Skew(m), Point::Two(x, y)) => {
                let cell = m.locate(*x, *y)?;
                let (u, v) = m.forward(cell, *x, *y);
                Ok((Point::Two(u, v), cell.label()))
            }
            _ => Err(Error::Invalid("point dimension does not match the map".into())),
        }
    }

    /// Depth-n cylinders meeting `region` in positive measure.
    pub fn cylinders_over(&self, n: usize, region: Interval, budget: f64) -> Result<Vec<Cylinder>> {
        let m = self.require_interval()?;
        if n == 0 {
            return Err(Error::Invalid("cylinder depth must be at least 1".into()));
        }
        if region.len() <= 0.0 {
            return Err(Error::Invalid("region must have positive measure".into()));
        }
        let tail = m.tail(region);
        if tail > budget {
            return Err(Error::TruncationInsufficient { tail, budget });
        }
        let mut out: Vec<Cylinder> = m
            .meeting(region)
            .filter_map(|i| {
                let piece = region.intersect(&m.branches[i].domain)?;
                let b = &m.branches[i];
                Some(Cylinder { word: vec![i], domain: piece, image: b.map_interval(piece) })
            })
            .collect();
        for _ in 1..n {
            let mut next = Vec::new();
            for c in &out {
                for i in m.meeting(c.image) {
                    let Some(piece) = c.image.intersect(&m.branches[i].domain) else { continue };
                    let domain = c.pull_back(m, piece);
                    if domain.len() <= 0.0 {
                        continue;
                    }
                    let mut word = c.word.clone();
                    word.push(i);
                    next.push(Cylinder { word, domain, image: m.branches[i].map_interval(piece) });
                }
            }
            out = next;
        }
        Ok(out)
    }
}

/// Inverse branch of T^n: `word[0]` is applied first by T.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder {
    pub word: Vec<usize>,
    pub domain: Interval,
    pub image: Interval,
}

impl Cylinder {
    pub fn depth(&self) -> usize {
        self.word.len()
    }

    /// Composite inverse h = h_{w1} o ... o h_{wn} applied to y in the image.
    pub fn inverse(&self, m: &IntervalMap, y: f64) -> f64 {
        self.word.iter().rev().fold(y, |acc, &i| m.branches[i].inverse(acc))
    }

    /// Jacobian of the composite inverse at y.
    pub fn jacobian(&self, m: &IntervalMap, y: f64) -> f64 {
        let mut acc = y;
        let mut jac = 1.0;
        for &i in self.word.iter().rev() {
            jac *= m.branches[i].jac(acc);
            acc = m.branches[i].inverse(acc);
        }
        jac
    }

    fn pull_back(&self, m: &IntervalMap, piece: Interval) -> Interval {
        let a = self.inverse(m, piece.lo);
        let b = self.inverse(m, piece.hi);
        Interval::new(a.min(b), a.max(b))
    }

    pub fn label(&self, m: &IntervalMap) -> String {
        self.word.iter().map(|&i| m.branches[i].id.as_str()).collect::<Vec<_>>().join(",")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    Analytic,
    Sampled,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionEstimate {
    pub value: f64,
    pub declared: Option<f64>,
    pub sampled: f64,
    pub evidence: Evidence,
}

/// Lipschitz constant of a composite inverse branch on pairs at distance at most `eps2`.
pub fn composite_contraction(m: &IntervalMap, cyl: &Cylinder, eps2: f64) -> Result<ContractionEstimate> {
    if cyl.image.len() <= 0.0 || !cyl.image.len().is_finite() && cyl.image.lo.is_infinite() {
        return Err(Error::EmptyImage);
    }
    let declared = cyl
        .word
        .iter()
        .map(|&i| m.branches[i].contraction.as_ref().map(|s| s.to_f64()))
        .try_fold(1.0, |acc, v| v.map(|v| acc * v));
    let sampled = sample_lipschitz(m, cyl, eps2);
    let (value, evidence) = match declared {
        Some(d) => (d, Evidence::Analytic),
        None => (sampled, Evidence::Sampled),
    };
    Ok(ContractionEstimate { value, declared, sampled, evidence })
}

fn sample_lipschitz(m: &IntervalMap, cyl: &Cylinder, eps2: f64) -> f64 {
    let lo = cyl.image.lo;
    let hi = if cyl.image.hi.is_finite() { cyl.image.hi } else { lo + 1e3 };
    let len = hi - lo;
    let n = 2000;
    let floor = 1e-5 * hi.abs().max(1.0);
    let mut best: f64 = 0.0;
    for gap in [1e-7, 1e-4, 1e-2, 0.25] {
        let d = (gap * len).max(floor).min(eps2).min(len);
        if d <= 0.0 {
            continue;
        }
        for k in 0..n {
            let x = lo + (len - d) * (k as f64 + 0.5) / n as f64;
            let y = x + d;
            let r = (cyl.inverse(m, y) - cyl.inverse(m, x)).abs() / (y - x);
            if r.is_finite() {
                best = best.max(r);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::fixtures;
    use super::*;

    #[test]
    fn wmap_forward_examples() {
        let spec = fixtures::wmap().spec;
        let (p, id) = spec.evaluate_forward(&Point::One(0.1)).unwrap();
        assert_eq!(id, "h1");
        match p {
            Point::One(y) => assert!((y - (1.0 - 40.0 / 9.0 * 0.1)).abs() < 1e-15),
            _ => unreachable!(),
        }
        assert!(matches!(spec.evaluate_forward(&Point::One(0.45)), Err(Error::BoundaryPoint { .. })));
        assert!(matches!(spec.evaluate_forward(&Point::One(1.5)), Err(Error::OutsideSpace { .. })));
    }

    #[test]
    fn doubling_and_half_line_examples() {
        let spec = fixtures::doubling().spec;
        let (p, id) = spec.evaluate_forward(&Point::One(0.25)).unwrap();
        assert_eq!((p, id.as_str()), (Point::One(0.5), "left"));
        let spec = fixtures::rplus().spec;
        let (p, id) = spec.evaluate_forward(&Point::One(0.95)).unwrap();
        assert_eq!(id, "h2");
        match p {
            Point::One(y) => assert!((y - 20.0).abs() < 1e-12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn cylinder_counts() {
        let w = fixtures::wmap().spec;
        assert_eq!(w.cylinders_over(1, Interval::new(0.0, 1.0), 1e-9).unwrap().len(), 4);
        assert_eq!(w.cylinders_over(1, Interval::new(0.0, 0.2), 1e-9).unwrap().len(), 1);
        let d = fixtures::doubling().spec;
        let cyls = d.cylinders_over(3, Interval::new(0.0, 1.0), 1e-9).unwrap();
        assert_eq!(cyls.len(), 8);
        for c in &cyls {
            assert!((c.domain.len() - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn composite_contraction_examples() {
        let w = fixtures::wmap().spec;
        let m = w.interval_map().unwrap();
        let c1 = w.cylinders_over(1, Interval::new(0.6, 0.9), 1e-9).unwrap();
        let est = composite_contraction(m, &c1[0], 1.0).unwrap();
        assert!((est.value - 112.0 / 207.0).abs() < 1e-15);
        assert!(est.sampled <= est.value + 1e-9);
        let cyls = w.cylinders_over(2, Interval::new(0.0, 9.0 / 40.0), 1e-9).unwrap();
        let c12 = cyls.iter().find(|c| c.word == vec![0, 1]).unwrap();
        let est = composite_contraction(m, c12, 1.0).unwrap();
        assert!((est.value - 9.0 / 80.0).abs() < 1e-15);
        assert!((est.sampled - 9.0 / 80.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_region_needs_tail_budget() {
        let r = fixtures::rplus().spec;
        let err = r.cylinders_over(1, Interval::new(0.0, f64::INFINITY), 1e-9).unwrap_err();
        assert!(matches!(err, Error::TruncationInsufficient { .. }));
        assert_eq!(r.cylinders_over(1, Interval::new(0.0, 3.0), 1e-9).unwrap().len(), 6);
    }
}
