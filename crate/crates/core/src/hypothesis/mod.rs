//! Checks of the expansion, distortion, complexity, divisibility and linking hypotheses.

mod complexity;
mod inducing;
mod linked;
mod partition;

pub use complexity::{check_complexity, complexity_term_1d, eps_grid, ComplexityReport, TrialShape, WorstTrial};
pub use inducing::{check_inducing_partition, InducingPartition, InducingVerdicts, SkewZ, UniformGrid};
pub use linked::{interval_growth, largest_piece_bound, positively_linked_search, GrowthTrace, H5Data};
pub use partition::{
    build_partition_of_large_set, build_partition_2d, c_eps0, h4_boundary_sum, Partition2d, Rect,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::fixtures::{H4Distortion, Hints};
use crate::map::{composite_contraction, Cylinder, Evidence, Interval, IntervalMap, MapSpec, Model, SkewMap};
use crate::real::Scalar;

/// Relative tolerance for declared bounds against their sampled estimates.
pub const CROSS_CHECK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct Certified {
    pub value: Scalar,
    pub evidence: Evidence,
    pub sampled: Option<f64>,
}

impl Certified {
    fn analytic(value: Scalar, sampled: Option<f64>) -> Self {
        Certified { value, evidence: Evidence::Analytic, sampled }
    }

    fn sampled(value: f64) -> Self {
        Certified { value: Scalar::from_f64(value), evidence: Evidence::Sampled, sampled: Some(value) }
    }

    pub fn to_f64(&self) -> f64 {
        self.value.to_f64()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisCertificate {
    pub eps1: Option<Scalar>,
    pub eps2: Option<Scalar>,
    pub eps3: Option<Scalar>,
    pub eps4: Option<Scalar>,
    pub lambda: Certified,
    pub alpha: Scalar,
    pub dtilde: Certified,
    pub d: Scalar,
    pub n0: u32,
    pub sigma: Certified,
    pub cbar: Option<Scalar>,
    pub eta: Scalar,
    pub c_eps0: Option<Scalar>,
    pub h4_distortion: H4Distortion,
    pub h5: Option<H5Data>,
    pub complexity: Option<ComplexityReport>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchEstimate {
    pub id: String,
    pub declared: Option<f64>,
    pub sampled: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub branches: Vec<BranchEstimate>,
    pub lambda: Certified,
}

fn finite(eps: &Option<Scalar>) -> f64 {
    eps.as_ref().map_or(f64::INFINITY, Scalar::to_f64)
}

fn cross_check(what: &str, declared: &Scalar, sampled: f64) -> Result<()> {
    let d = declared.to_f64();
    if sampled > d + CROSS_CHECK_TOL * d.abs().max(1.0) {
        return Err(Error::Invalid(format!("declared {what} = {d} is below its sampled estimate {sampled}")));
    }
    Ok(())
}

/// H1: the global contraction rate of inverse branches.
pub fn check_expansion(spec: &MapSpec, hints: &Hints, eps2: f64) -> Result<ExpansionReport> {
    if eps2 > spec.metric.eps1 {
        return Err(Error::Invalid(format!("eps2 = {eps2} exceeds eps1 = {}", spec.metric.eps1)));
    }
    let branches = match &spec.model {
        Model::Interval(m) => expansion_1d(m, eps2)?,
        Model::Skew(m) => expansion_2d(m),
    };
    let sampled = branches.iter().map(|b| b.sampled).fold(0.0, f64::max);
    let lambda = if let Some(l) = &hints.lambda {
        cross_check("lambda", l, sampled)?;
        Certified::analytic(l.clone(), Some(sampled))
    } else if branches.iter().all(|b| b.declared.is_some()) {
        let v = declared_max(spec);
        Certified::analytic(v, Some(sampled))
    } else {
        let v = branches.iter().map(|b| b.declared.unwrap_or(b.sampled).max(b.sampled)).fold(0.0, f64::max);
        Certified::sampled(v)
    };
    if lambda.to_f64() >= 1.0 {
        return Err(Error::NotExpanding { lambda: lambda.to_f64() });
    }
    Ok(ExpansionReport { branches, lambda })
}

fn declared_max(spec: &MapSpec) -> Scalar {
    let m = spec.interval_map().expect("declared contraction only exists for interval maps");
    m.branches
        .iter()
        .filter_map(|b| b.contraction.clone())
        .reduce(|a, b| a.max(&b))
        .unwrap_or_else(|| Scalar::int(0))
}

fn expansion_1d(m: &IntervalMap, eps2: f64) -> Result<Vec<BranchEstimate>> {
    m.branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let cyl = Cylinder { word: vec![i], domain: b.domain, image: b.image };
            let est = composite_contraction(m, &cyl, eps2)?;
            Ok(BranchEstimate { id: b.id.clone(), declared: est.declared, sampled: est.sampled })
        })
        .collect()
}

/// Sampled Lipschitz ratios of inverse branches on a few columns, plus the closed-form column bounds.
fn expansion_2d(m: &SkewMap) -> Vec<BranchEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (1..=8u64)
        .map(|i| {
            let fi = i as f64;
            let left = m.column_left(fi);
            let right = if i == 1 { 1.0 } else { m.column_right(fi) };
            let h = m.row_height(fi);
            let mut best: f64 = 0.0;
            for _ in 0..400 {
                let x = left + (right - left) * rng.gen_range(0.05..0.95);
                let y = h * rng.gen_range(0.05..0.95);
                let r = 1e-3 * (right - left).min(h);
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let (x2, y2) = (x + r * t.cos(), y + r * t.sin());
                let Ok(c) = m.locate(x, y) else { continue };
                if m.locate(x2, y2).ok() != Some(c) {
                    continue;
                }
                let (u1, v1) = m.forward(c, x, y);
                let (u2, v2) = m.forward(c, x2, y2);
                let ratio = r / (u1 - u2).hypot(v1 - v2);
                best = best.max(ratio);
            }
            BranchEstimate { id: format!("column {i}"), declared: Some(m.lambda_column(fi)), sampled: best }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionReport {
    pub alpha: Scalar,
    pub dtilde: Certified,
    pub d: Scalar,
    pub levels: Vec<f64>,
}

/// H2: Hölder constant of ln Jh over the images of the branches.
pub fn check_distortion(spec: &MapSpec, hints: &Hints, lambda: &Scalar, eps3: f64) -> Result<DistortionReport> {
    let alpha = hints.alpha.clone();
    let a = alpha.to_f64();
    let gaps = [1e-2, 1e-3, 1e-4, 1e-5];
    let levels: Vec<f64> = match &spec.model {
        Model::Interval(m) => gaps
            .iter()
            .map(|&g| m.branches.iter().map(|b| distortion_level(b, g, eps3, a)).fold(0.0, f64::max))
            .collect(),
        Model::Skew(m) => gaps.iter().map(|&g| distortion_level_2d(m, g, a)).collect(),
    };
    let (coarse, fine) = (levels[levels.len() - 2], levels[levels.len() - 1]);
    let growing = levels.windows(2).all(|w| w[1] > 1.5 * w[0]);
    if growing && fine > 1e6 {
        return Err(Error::UnboundedDistortion { coarse, fine });
    }
    let sampled = levels.iter().cloned().fold(0.0, f64::max);
    let dtilde = if let Some(d) = &hints.dtilde {
        cross_check("Dtilde", d, sampled)?;
        Certified::analytic(d.clone(), Some(sampled))
    } else {
        let declared = spec.interval_map().and_then(|m| {
            m.branches.iter().map(|b| b.distortion.clone()).collect::<Option<Vec<_>>>()
        });
        match declared {
            Some(v) if !v.is_empty() => {
                let d = v.into_iter().reduce(|x, y| x.max(&y)).unwrap();
                cross_check("Dtilde", &d, sampled)?;
                Certified::analytic(d, Some(sampled))
            }
            _ => Certified::sampled(sampled),
        }
    };
    let d = dtilde.value.clone() / (Scalar::int(1) - lambda.pow(&alpha));
    Ok(DistortionReport { alpha, dtilde, d, levels })
}

fn distortion_level(b: &crate::map::Branch, gap: f64, eps3: f64, alpha: f64) -> f64 {
    let lo = b.image.lo;
    let hi = if b.image.hi.is_finite() { b.image.hi } else { lo + 100.0 };
    let len = hi - lo;
    let d = (gap * len).min(eps3);
    let n = 400;
    let mut best: f64 = 0.0;
    for k in 0..n {
        let x = lo + (len - d) * (k as f64 + 0.5) / n as f64;
        let y = x + d;
        let r = (b.jac(x).ln() - b.jac(y).ln()).abs() / d.powf(alpha);
        if r.is_finite() {
            best = best.max(r);
        }
    }
    best
}

fn distortion_level_2d(m: &SkewMap, gap: f64, alpha: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 1..=6u64 {
        let cell = crate::map::skew::SkewCell { i, j: 1 };
        for k in 0..200 {
            let v = (k as f64 + 0.5) / 200.0 * (1.0 - gap);
            let u = 0.25;
            let a = m.jacobian(cell, u, v).ln();
            let b = m.jacobian(cell, u, v + gap).ln();
            best = best.max((a - b).abs() / gap.powf(alpha));
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub trials: usize,
    pub seed: u64,
}

impl CheckOptions {
    pub fn for_spec(spec: &MapSpec) -> Self {
        let trials = if spec.metric.dimension == 2 { 2_000 } else { 10_000 };
        CheckOptions { trials, seed: 2024 }
    }
}

/// H1 to H3 and the H4 parameter eta; eps0-dependent parts are filled in by the constants pipeline.
pub fn certify(spec: &MapSpec, hints: &Hints, options: &CheckOptions) -> Result<HypothesisCertificate> {
    let eps1 = spec.metric.eps1.is_finite().then(|| Scalar::from_f64(spec.metric.eps1));
    let eps2 = hints.eps2.clone();
    let eps3 = hints.eps3.clone();
    let eps4 = hints.eps4.clone();
    let e2 = finite(&eps2).min(spec.metric.eps1);
    let h1 = check_expansion(spec, hints, e2)?;
    let h2 = check_distortion(spec, hints, &h1.lambda.value, finite(&eps3))?;
    let n0 = hints.n0;
    let limit = h1.lambda.value.powi(-(n0 as i64)) - Scalar::int(1);
    let e4 = finite(&eps4).min(if spec.metric.dimension == 1 { 1.0 } else { 0.05 });
    let report = check_complexity(spec, n0, e4, options.trials, options.seed, h1.lambda.to_f64())?;
    let sigma = match &hints.sigma {
        Some(s) => {
            cross_check("sigma", s, report.sup)?;
            Certified::analytic(s.clone(), Some(report.sup))
        }
        None => Certified::sampled(report.sup),
    };
    if sigma.value.cmp_value(&limit) != std::cmp::Ordering::Less {
        return Err(Error::ComplexityTooLarge { sigma: sigma.to_f64(), limit: limit.to_f64() });
    }
    let mut notes = Vec::new();
    if !matches!(hints.h5, crate::map::fixtures::H5Rule::Unavailable) && spec.metric.dimension == 2 {
        notes.push("positively linked search is one-dimensional only".into());
    }
    Ok(HypothesisCertificate {
        eps1,
        eps2,
        eps3,
        eps4,
        lambda: h1.lambda,
        alpha: h2.alpha,
        dtilde: h2.dtilde,
        d: h2.d,
        n0,
        sigma,
        cbar: None,
        eta: hints.eta.clone(),
        c_eps0: None,
        h4_distortion: hints.h4_distortion,
        h5: None,
        complexity: Some(report),
        notes,
    })
}

/// Intervals helper shared by the checks: pieces of `region` cut by the partition of `m`.
pub fn pieces(m: &IntervalMap, region: Interval) -> Vec<(usize, Interval)> {
    m.meeting(region)
        .filter_map(|i| region.intersect(&m.branches[i].domain).map(|p| (i, p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fixtures;

    #[test]
    fn expansion_examples() {
        let f = fixtures::wmap();
        let r = check_expansion(&f.spec, &f.hints, 1.0).unwrap();
        assert_eq!(r.lambda.value.render(10), "112/207");
        let f = fixtures::doubling();
        let r = check_expansion(&f.spec, &f.hints, 1.0).unwrap();
        assert_eq!(r.lambda.value.render(10), "1/2");
        let f = fixtures::rplus();
        let r = check_expansion(&f.spec, &f.hints, 1e9).unwrap();
        assert_eq!(r.lambda.value.render(10), "1/10");
        let even = r.branches.iter().find(|b| b.id == "h2").unwrap();
        assert!(even.sampled <= 0.01 + 1e-12);
    }

    #[test]
    fn distortion_examples() {
        let f = fixtures::wmap();
        let r = check_distortion(&f.spec, &f.hints, &Scalar::frac(112, 207), 1.0).unwrap();
        assert_eq!(r.dtilde.value.render(10), "25088/42849");
        assert_eq!(r.d.render(10), "25088/19665");
        let s = r.dtilde.sampled.unwrap();
        assert!(s > 0.99 * 25088.0 / 42849.0, "{s}");
        let f = fixtures::rplus();
        let r = check_distortion(&f.spec, &f.hints, &Scalar::frac(1, 10), f64::INFINITY).unwrap();
        assert_eq!(r.dtilde.value.render(10), "1/5");
        assert!(r.dtilde.sampled.unwrap() > 0.19);
    }

    #[test]
    fn linear_branches_have_no_distortion() {
        let f = fixtures::doubling();
        let r = check_distortion(&f.spec, &f.hints, &Scalar::frac(1, 2), 1.0).unwrap();
        assert_eq!(r.dtilde.sampled, Some(0.0));
    }
}
