//! The explicit constants chain from a hypothesis certificate to the mixing rate.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::hypothesis::{c_eps0, positively_linked_search, H5Data, HypothesisCertificate};
use crate::map::fixtures::{Eps0Rule, H4Distortion, H5Rule, Hints};
use crate::map::MapSpec;
use crate::real::{Real, Scalar};

/// Below this size the series for ln(1 - x) and e^x - 1 are used.
const SERIES_CUTOFF: f64 = 1e-4;

/// ln(1 - x) without cancellation for tiny x.
pub fn log1m(x: &Real) -> Real {
    if x.to_f64().abs() >= SERIES_CUTOFF {
        return (Real::one() - x).ln();
    }
    let mut term = x.clone();
    let mut sum = Real::zero();
    let mut k = 1i64;
    loop {
        let add = &term / Real::from_int(k);
        sum = &sum + &add;
        if add.is_nan() || add.to_f64().abs() <= sum.to_f64().abs() * 1e-60 || k > 400 {
            break;
        }
        term = &term * x;
        k += 1;
    }
    -sum
}

/// e^x - 1 without cancellation for tiny x.
pub fn expm1(x: &Real) -> Real {
    if x.to_f64().abs() >= SERIES_CUTOFF {
        return x.exp() - Real::one();
    }
    let mut term = x.clone();
    let mut sum = Real::zero();
    let mut k = 1i64;
    loop {
        sum = &sum + &term;
        k += 1;
        term = &term * x / Real::from_int(k);
        if term.to_f64().abs() <= sum.to_f64().abs() * 1e-60 || k > 400 {
            break;
        }
    }
    sum
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub name: String,
    pub formula: String,
    pub inputs: Vec<(String, String)>,
    pub value: String,
}

#[derive(Clone, Debug)]
pub struct ConstantsOptions {
    pub a0: Option<Scalar>,
    pub b0: Option<Scalar>,
    /// Exponent of Delta in gamma (2 by default, 1 for the alternative reading).
    pub delta_power: u32,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        ConstantsOptions { a0: None, b0: None, delta_power: 2 }
    }
}

/// Inputs of the last stretch of the chain, split out so it can be swept.
#[derive(Clone, Debug)]
pub struct RateInputs {
    pub c_ball: Scalar,
    pub caa: Scalar,
    pub delta_delta: Scalar,
    pub gamma_n: Scalar,
    pub n_delta: u64,
    pub n1: u64,
    pub n2: u64,
    pub delta_power: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct Rate {
    pub gamma: Scalar,
    pub gamma1: Scalar,
    pub nbar: u64,
    pub c_gamma1: Scalar,
    pub gamma2: Scalar,
    pub one_minus_gamma2: Scalar,
    pub log10_one_minus_gamma2: f64,
    /// ln gamma2, kept separately since gamma2 itself rounds to 1 in f64.
    pub ln_gamma2: Scalar,
    pub c: Scalar,
}

pub fn rate_chain(r: &RateInputs) -> Result<Rate> {
    let half = Scalar::frac(1, 2);
    let cb2 = r.c_ball.powi(-2);
    let gamma = half * cb2 * r.caa.powi(2) * r.delta_delta.powi(r.delta_power as i64) * r.gamma_n.clone();
    let gamma1 = Scalar::frac(2, 3) * gamma.clone();
    let g1 = gamma1.to_real();
    if !(g1.is_positive() && g1 < Real::one()) {
        return Err(Error::Invalid(format!("gamma1 = {} is not in (0, 1)", gamma1.decimal(6))));
    }
    let nbar = r.n_delta + r.n1.max(r.n2);
    let ln_gamma2 = log1m(&g1) / Real::from_int(nbar as i64);
    let one_minus = -expm1(&ln_gamma2);
    let c_gamma1 = (Scalar::int(1) - gamma1.clone()).recip();
    let log10 = one_minus.log10().to_f64();
    Ok(Rate {
        gamma,
        gamma1,
        nbar,
        c: Scalar::int(2) * c_gamma1.clone(),
        c_gamma1,
        gamma2: Scalar::Approx(ln_gamma2.exp()),
        one_minus_gamma2: Scalar::Approx(one_minus),
        log10_one_minus_gamma2: log10,
        ln_gamma2: Scalar::Approx(ln_gamma2),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantsReport {
    pub lambda: Scalar,
    pub alpha: Scalar,
    pub dtilde: Scalar,
    pub d: Scalar,
    pub sigma: Scalar,
    pub n0: u32,
    pub a0: Scalar,
    pub eps0: Scalar,
    pub ca: Scalar,
    pub caa: Scalar,
    pub c_eps0: Scalar,
    pub zeta1: Scalar,
    pub theta1: Scalar,
    pub zeta2: Scalar,
    pub zeta3: Scalar,
    pub zeta4: Scalar,
    pub theta2: Scalar,
    pub m: u64,
    pub b0: Scalar,
    pub delta0: Scalar,
    pub c_ball: Scalar,
    pub c_split: Scalar,
    pub n1: u64,
    pub h5: Option<H5Data>,
    pub k0: Option<u64>,
    pub n2: Option<u64>,
    pub rate: Option<Rate>,
    pub notes: Vec<String>,
    pub provenance: Vec<Provenance>,
}

struct Ledger(Vec<Provenance>);

impl Ledger {
    fn add(&mut self, name: &str, formula: &str, inputs: &[(&str, &Scalar)], value: &Scalar) {
        self.0.push(Provenance {
            name: name.into(),
            formula: formula.into(),
            inputs: inputs.iter().map(|(n, v)| (n.to_string(), v.render(20))).collect(),
            value: value.render(20),
        });
    }

    fn add_int(&mut self, name: &str, formula: &str, inputs: &[(&str, &Scalar)], value: u64) {
        self.add(name, formula, inputs, &Scalar::int(value as i64));
    }
}

fn to_u64(n: Option<BigInt>) -> Result<u64> {
    n.and_then(|v| v.to_u64()).ok_or_else(|| Error::Invalid("integer constant out of range".into()))
}

fn less(a: &Scalar, b: &Scalar) -> bool {
    a.cmp_value(b) == Ordering::Less
}

/// Least k >= 0 with `pred(k)`, scanning up to `cap`.
fn least(cap: u64, pred: impl Fn(u64) -> bool) -> Result<u64> {
    (0..=cap).find(|&k| pred(k)).ok_or(Error::SearchDiverged { cap: cap as usize })
}

pub fn derive_constants(
    spec: &MapSpec,
    hints: &Hints,
    cert: &HypothesisCertificate,
    options: &ConstantsOptions,
) -> Result<ConstantsReport> {
    let mut led = Ledger(Vec::new());
    let mut notes = Vec::new();
    let one = Scalar::int(1);
    let lambda = cert.lambda.value.clone();
    let alpha = cert.alpha.clone();
    let dtilde = cert.dtilde.value.clone();
    let d = cert.d.clone();
    let sigma = cert.sigma.value.clone();
    let n0 = cert.n0;
    let lam_a = lambda.pow(&alpha);
    led.add("lambda", "sup of inverse-branch contraction", &[], &lambda);
    led.add("Dtilde", "Hoelder constant of ln Jh", &[], &dtilde);
    led.add("D", "Dtilde/(1-lambda^alpha)", &[("Dtilde", &dtilde), ("lambda", &lambda)], &d);
    led.add("sigma", "complexity bound", &[], &sigma);

    let a0_min = d.clone() / (one.clone() - lam_a.clone());
    let a0 = match options.a0.clone().or_else(|| hints.a0.clone()) {
        Some(a) => a,
        None => Scalar::frac(10001, 10000) * a0_min.clone(),
    };
    let d_zero = d.cmp_value(&Scalar::int(0)) == Ordering::Equal;
    let ok = if d_zero { a0.cmp_value(&Scalar::int(0)) != Ordering::Less } else { less(&a0_min, &a0) };
    if !ok {
        return Err(Error::Invalid(format!("a0 = {} must exceed D/(1-lambda^alpha) = {}", a0.decimal(8), a0_min.decimal(8))));
    }
    led.add("a0", "> D/(1-lambda^alpha)", &[("D/(1-lambda^alpha)", &a0_min)], &a0);

    let l = lambda.powi(-(n0 as i64)) - one.clone();
    let eps_cap = [cert.eps1.clone(), cert.eps2.clone(), cert.eps3.clone(), cert.eps4.clone()]
        .into_iter()
        .flatten()
        .reduce(|a, b| a.min(&b));
    let eps0 = match &hints.eps0 {
        Eps0Rule::Value(v) => v.clone(),
        Eps0Rule::Average => {
            if a0.to_f64() == 0.0 {
                return Err(Error::Invalid("the average rule for eps0 needs a0 > 0".into()));
            }
            let arg = Scalar::int(2) * l.clone() / (sigma.clone() + l.clone());
            led.add("ln-argument", "2L/(sigma+L), L = lambda^-n0 - 1", &[("L", &l), ("sigma", &sigma)], &arg);
            let e = (arg.ln() / a0.clone()).pow(&alpha.recip());
            match &eps_cap {
                Some(cap) if less(cap, &e) => {
                    notes.push(format!("eps0 from the average rule exceeds min eps_i; clamped to {}", cap.decimal(8)));
                    cap.clone()
                }
                _ => e,
            }
        }
    };
    let a_eps = a0.clone() * eps0.pow(&alpha);
    let ca = a_eps.exp();
    let caa = (-a_eps.clone()).exp();
    if let Some(cap) = &eps_cap {
        if less(cap, &eps0) {
            return Err(Error::InfeasibleEps0 { bound: cap.to_f64() });
        }
    }
    if !less(&sigma, &(caa.clone() * l.clone())) {
        return Err(Error::InfeasibleEps0 { bound: eps_cap.map_or(f64::INFINITY, |c| c.to_f64()) });
    }
    led.add("eps0", "(ln(2L/(sigma+L))/a0)^(1/alpha) or given", &[("a0", &a0), ("L", &l)], &eps0);
    led.add("Ca", "exp(a0 eps0^alpha)", &[("a0", &a0), ("eps0", &eps0)], &ca);
    led.add("Caa", "exp(-a0 eps0^alpha)", &[("a0", &a0), ("eps0", &eps0)], &caa);

    let dist = match cert.h4_distortion {
        H4Distortion::D => d.clone(),
        H4Distortion::Dtilde => dtilde.clone(),
    };
    let c_e = c_eps0(spec.metric.dimension, &dist, &eps0, &alpha, hints.diam_x.as_ref());
    led.add("C_eps0", "exp(dist eps0^alpha) 6/eps0 (1D) or exp(D diamX^alpha) 6 d^1.5/eps0", &[("dist", &dist), ("eps0", &eps0)], &c_e);

    let zeta1 = ca.clone() * c_e.clone();
    let theta1 = lambda.powi(n0 as i64) * (one.clone() + ca.clone() * sigma.clone());
    if !less(&theta1, &one) {
        return Err(Error::InfeasibleEps0 { bound: eps0.to_f64() });
    }
    let zeta2 = zeta1.clone() / (one.clone() - theta1.clone());
    let (zeta3, zeta4) = if n0 == 1 {
        (one.clone(), zeta2.clone())
    } else {
        let cbar = cert.cbar.clone().ok_or_else(|| Error::Invalid("n0 > 1 needs Cbar".into()))?;
        let z3 = one.clone() + cbar;
        (z3.clone(), one.clone() + zeta2.clone() * z3)
    };
    let theta2 = if n0 == 1 { theta1.clone() } else { theta1.pow(&Scalar::frac(1, n0 as i64)) };
    led.add("zeta1", "Ca C_eps0", &[("Ca", &ca), ("C_eps0", &c_e)], &zeta1);
    led.add("theta1", "lambda^n0 (1 + Ca sigma)", &[("lambda", &lambda), ("Ca", &ca), ("sigma", &sigma)], &theta1);
    led.add("zeta2", "zeta1/(1-theta1)", &[("zeta1", &zeta1), ("theta1", &theta1)], &zeta2);
    led.add("zeta3", "1 + Cbar (1 if n0 = 1)", &[], &zeta3);
    led.add("zeta4", "1 + zeta2 zeta3 (zeta2 if n0 = 1)", &[("zeta2", &zeta2)], &zeta4);
    led.add("theta2", "theta1^(1/n0)", &[("theta1", &theta1)], &theta2);

    let m = least(100_000, |k| k >= 1 && less(&(zeta3.clone() * theta2.powi(k as i64)), &one))?;
    led.add_int("M", "least M >= 1 with zeta3 theta2^M < 1", &[("zeta3", &zeta3), ("theta2", &theta2)], m);
    let b0_min = zeta4.clone() / (one.clone() - zeta3.clone() * theta2.powi(m as i64));
    let b0 = match &options.b0 {
        Some(b) if less(b, &b0_min) => {
            return Err(Error::Invalid(format!("B0 = {} is below the minimum {}", b.decimal(8), b0_min.decimal(8))))
        }
        Some(b) => b.clone(),
        None => b0_min.clone(),
    };
    let delta0 = (Scalar::int(3) * b0.clone()).recip();
    led.add("B0", ">= zeta4/(1 - zeta3 theta2^M)", &[("minimum", &b0_min)], &b0);
    led.add("delta0", "1/(3 B0)", &[("B0", &b0)], &delta0);

    let c_ball = spec.metric.ball_measure_bound(&eps0);
    let c_split = Scalar::frac(1, 2) * c_ball.recip() * caa.clone();
    led.add("C_B(eps0)", "measure bound of balls of diameter eps0", &[("eps0", &eps0)], &c_ball);
    led.add("c", "(1/2) C_B(eps0)^-1 exp(-a0 eps0^alpha)", &[("C_B", &c_ball), ("Caa", &caa)], &c_split);

    let n1 = if a0.to_f64() == 0.0 {
        0
    } else {
        let inner = Scalar::frac(1, 2) - d.clone() / (Scalar::int(2) * a0.clone());
        let v = inner.ln() / (alpha.clone() * lambda.ln());
        to_u64(v.ceil_int().map(|n| n.max(BigInt::zero())))?
    };
    led.add_int("n1", "ceil(ln(1/2 - D/(2 a0))/(alpha ln lambda)), 0 if a0 = 0", &[("D", &d), ("a0", &a0)], n1);

    let mut report = ConstantsReport {
        lambda,
        alpha,
        dtilde,
        d,
        sigma,
        n0,
        a0,
        eps0: eps0.clone(),
        ca,
        caa: caa.clone(),
        c_eps0: c_e,
        zeta1,
        theta1: theta1.clone(),
        zeta2: zeta2.clone(),
        zeta3,
        zeta4,
        theta2,
        m,
        b0: b0.clone(),
        delta0: delta0.clone(),
        c_ball: c_ball.clone(),
        c_split,
        n1,
        h5: None,
        k0: None,
        n2: None,
        rate: None,
        notes,
        provenance: Vec::new(),
    };

    if matches!(hints.h5, H5Rule::Unavailable) || spec.metric.dimension != 1 {
        report.notes.push("no positively linked construction: the rate chain stops at delta0".into());
        report.provenance = led.0;
        return Ok(report);
    }
    let h5 = positively_linked_search(spec, hints, &delta0, &eps0, m)?;
    let n_delta = Scalar::int(h5.n_delta as i64);
    led.add("N_delta", &format!("{} rule, >= M", h5.rule), &[("delta0", &delta0)], &n_delta);
    led.add("Delta_delta", "measure of the overlap set", &[], &h5.delta_delta);
    led.add("Gamma_N", "inf of composite Jacobians over the linked cylinders", &[], &h5.gamma_n);
    let ratio = zeta2.clone() / b0;
    let k0 = least(100_000, |k| less(&((one.clone() + h5.c_x.clone()) * theta1.powi(k as i64) + ratio.clone()), &one))?;
    let n2 = k0 * n0 as u64;
    led.add_int("k0", "least k with (1+C_X) theta1^k + zeta2/B0 < 1", &[("C_X", &h5.c_x), ("theta1", &theta1)], k0);
    led.add_int("n2", "k0 n0", &[], n2);
    let rate = rate_chain(&RateInputs {
        c_ball,
        caa,
        delta_delta: h5.delta_delta.clone(),
        gamma_n: h5.gamma_n.clone(),
        n_delta: h5.n_delta,
        n1,
        n2,
        delta_power: options.delta_power,
    })?;
    led.add(
        "gamma",
        &format!("(1/2) C_B^-2 exp(-2 a0 eps0^alpha) Delta^{} Gamma_N", options.delta_power),
        &[("Delta", &h5.delta_delta), ("Gamma_N", &h5.gamma_n)],
        &rate.gamma,
    );
    led.add("gamma1", "(2/3) gamma", &[], &rate.gamma1);
    led.add_int("nbar", "N_delta + max(n1, n2)", &[], rate.nbar);
    led.add("C_gamma1", "1/(1-gamma1)", &[], &rate.c_gamma1);
    led.add("gamma2", "(1-gamma1)^(1/nbar)", &[], &rate.gamma2);
    led.add("1-gamma2", "-expm1(ln(1-gamma1)/nbar)", &[], &rate.one_minus_gamma2);
    led.add("C", "2 C_gamma1", &[], &rate.c);
    report.h5 = Some(h5);
    report.k0 = Some(k0);
    report.n2 = Some(n2);
    report.rate = Some(rate);
    report.provenance = led.0;
    Ok(report)
}

/// Least m with C gamma2^m <= p.
pub fn mixing_time(report: &ConstantsReport, p: &Scalar) -> Result<BigInt> {
    let rate = report.rate.as_ref().ok_or_else(|| Error::Invalid("report has no mixing rate".into()))?;
    if !p.to_real().is_positive() {
        return Err(Error::Invalid("p must be positive".into()));
    }
    if p.cmp_value(&rate.c) != Ordering::Less {
        return Ok(BigInt::zero());
    }
    let m = (p.to_real() / rate.c.to_real()).ln() / rate.ln_gamma2.to_real();
    m.ceil().to_bigint().ok_or_else(|| Error::Invalid("mixing time is not finite".into()))
}

/// n_rec(B) = n0 k with k least such that theta1^k B + zeta2 <= B0.
pub fn recovery_steps(theta1: &Scalar, zeta2: &Scalar, b0: &Scalar, n0: u32, b: &Scalar) -> Result<u64> {
    if b0.cmp_value(zeta2) != Ordering::Greater {
        return Err(Error::NeverRecovers { b0: b0.to_f64(), zeta2: zeta2.to_f64() });
    }
    let holds = |k: u64| theta1.powi(k as i64) * b.clone() + zeta2.clone() <= *b0;
    let guess = if holds(0) {
        0
    } else {
        let g = ((b0.to_f64() - zeta2.to_f64()) / b.to_f64()).ln() / theta1.to_f64().ln();
        (g.ceil().max(1.0) as u64).saturating_sub(1)
    };
    let mut k = guess;
    while k > 0 && holds(k - 1) {
        k -= 1;
    }
    while !holds(k) {
        k += 1;
    }
    Ok(k * n0 as u64)
}

pub fn recovery_time(report: &ConstantsReport, b: &Scalar) -> Result<u64> {
    recovery_steps(&report.theta1, &report.zeta2, &report.b0, report.n0, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{certify, CheckOptions};
    use crate::map::fixtures;

    fn run(f: &fixtures::Fixture) -> ConstantsReport {
        let mut opts = CheckOptions::for_spec(&f.spec);
        opts.trials = 200;
        let cert = certify(&f.spec, &f.hints, &opts).unwrap();
        derive_constants(&f.spec, &f.hints, &cert, &ConstantsOptions::default()).unwrap()
    }

    #[test]
    fn series_helpers_match_direct_evaluation() {
        for x in [1e-3, 2e-5, 1e-40] {
            let r = Real::from_f64(x);
            let a = log1m(&r).to_f64();
            let b = expm1(&r).to_f64();
            assert!((a - (-x).ln_1p()).abs() <= 1e-15 * x.abs());
            assert!((b - x.exp_m1()).abs() <= 1e-15 * x.abs());
        }
    }

    #[test]
    fn recovery_example() {
        let k = recovery_steps(&Scalar::frac(1, 2), &Scalar::int(1), &Scalar::int(4), 1, &Scalar::int(10)).unwrap();
        assert_eq!(k, 2);
        let k = recovery_steps(&Scalar::frac(1, 2), &Scalar::int(1), &Scalar::int(4), 1, &Scalar::int(3)).unwrap();
        assert_eq!(k, 0);
        assert!(matches!(
            recovery_steps(&Scalar::frac(1, 2), &Scalar::int(4), &Scalar::int(4), 1, &Scalar::int(3)),
            Err(Error::NeverRecovers { .. })
        ));
    }

    #[test]
    fn wmap_chain() {
        let r = run(&fixtures::wmap());
        assert_eq!(r.a0.render(0), "25089/9025");
        let eps0 = 9025.0 / 25089.0 * (1520.0f64 / 1381.0).ln();
        assert!((r.eps0.to_f64() - eps0).abs() < 1e-12);
        assert!((r.c_eps0.to_f64() - 181.75).abs() < 1e-2);
        assert_eq!(r.n1, 3);
        let h5 = r.h5.as_ref().unwrap();
        assert!((h5.n_delta as i64 - 57).abs() <= 2, "{}", h5.n_delta);
        assert!(h5.empirical_n.unwrap() <= h5.n_tilde);
        let rate = r.rate.as_ref().unwrap();
        assert!((rate.log10_one_minus_gamma2 + 41.0).abs() <= 2.0, "{}", rate.log10_one_minus_gamma2);
        let t = mixing_time(&r, &Scalar::frac(1, 2)).unwrap();
        assert!((t.to_string().len() as i64 - 42).abs() <= 2);
        assert_eq!(mixing_time(&r, &rate.c).unwrap(), BigInt::zero());
    }

    #[test]
    fn rplus_chain() {
        let r = run(&fixtures::rplus());
        assert!(r.a0 == Scalar::frac(21, 81));
        assert_eq!(r.eps0.render(0), "1/2");
        assert!((r.c_eps0.to_f64() - 12.0 * 0.1f64.exp()).abs() < 1e-9);
        assert!((r.delta0.to_f64() - 0.0134).abs() < 5e-4);
        let h5 = r.h5.as_ref().unwrap();
        assert_eq!(h5.n_delta, 5);
        let rate = r.rate.as_ref().unwrap();
        assert!((rate.log10_one_minus_gamma2 + 29.0).abs() <= 2.0, "{}", rate.log10_one_minus_gamma2);
    }

    #[test]
    fn distortion_free_map_has_no_n1() {
        let r = run(&fixtures::doubling());
        assert_eq!(r.n1, 0);
        let h5 = r.h5.as_ref().unwrap();
        let expect = ((3.0 / r.delta0.to_f64()).log2().ceil() as u64).max(r.m);
        assert_eq!(h5.n_delta, expect);
    }

    #[test]
    fn skew_chain_stops_at_delta0() {
        let r = run(&fixtures::skew2d());
        assert!(r.rate.is_none());
        assert!(r.delta0.to_f64() > 0.0);
    }

    #[test]
    fn rate_monotone_in_gamma_n() {
        let base = RateInputs {
            c_ball: Scalar::frac(1, 30),
            caa: Scalar::frac(9, 10),
            delta_delta: Scalar::frac(1, 100),
            gamma_n: Scalar::frac(1, 1000),
            n_delta: 10,
            n1: 2,
            n2: 3,
            delta_power: 2,
        };
        let a = rate_chain(&base).unwrap();
        let b = rate_chain(&RateInputs { gamma_n: Scalar::frac(1, 100), ..base.clone() }).unwrap();
        let c = rate_chain(&RateInputs { n_delta: 20, ..base }).unwrap();
        assert!(b.gamma2.to_f64() <= a.gamma2.to_f64());
        assert!(c.one_minus_gamma2.to_f64() <= a.one_minus_gamma2.to_f64());
    }
}
