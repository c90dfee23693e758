//! End-to-end acceptance checks; prints one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use expmix::constants::{ConstantsOptions, ConstantsReport};
use expmix::coupling::{fitted_rate, CouplingParams};
use expmix::family::{chop_grid, iterate, step, Family, GrowthConstants, IterateOptions, Pair};
use expmix::hypothesis::HypothesisCertificate;
use expmix::inducing::tail_statistics;
use expmix::map::fixtures::{self, Fixture};
use expmix::map::Interval;
use expmix::real::{Real, Scalar};
use expmix::report::{self, Induced};
use expmix::transfer::{
    apply_l, apply_once, compare_histogram, invariant_density, l1_distance, orbit_histogram, GridDensity, GridOptions,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(ok: bool, what: String, failures: &mut Vec<String>) {
    if !ok {
        failures.push(what);
    }
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    if failures.is_empty() {
        Outcome { pass: true, detail: summary }
    } else {
        Outcome { pass: false, detail: format!("{summary}; failed: {}", failures.join("; ")) }
    }
}

fn constants(f: &Fixture) -> (HypothesisCertificate, ConstantsReport) {
    report::constants_for(f, &ConstantsOptions::default()).expect("constants derive")
}

fn exact(s: &Scalar, n: i64, d: i64) -> bool {
    s.as_rational() == Scalar::frac(n, d).as_rational()
}

fn rel(a: &Real, b: &Real) -> f64 {
    ((a.clone() - b.clone()).abs() / b.abs()).to_f64()
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let (_, r) = constants(&fixtures::wmap());
    let elapsed = t.elapsed();
    let mut fails = Vec::new();
    for (name, v, n, d) in [
        ("lambda", &r.lambda, 112, 207),
        ("Dtilde", &r.dtilde, 25088, 42849),
        ("D", &r.d, 25088, 19665),
        ("a0", &r.a0, 25089, 9025),
        ("sigma", &r.sigma, 621, 896),
    ] {
        check(exact(v, n, d), format!("{name} = {} is not {n}/{d}", v.render(20)), &mut fails);
    }
    let eps0 = Real::from_int(9025) / Real::from_int(25089) * (Real::from_int(1520) / Real::from_int(1381)).ln();
    let e = rel(&r.eps0.to_real(), &eps0);
    check(e <= 1e-12, format!("eps0 relative error {e:e}"), &mut fails);
    let c = r.c_eps0.to_f64();
    check(within(c, 181.75, 1e-2), format!("C_eps0 = {c}"), &mut fails);
    let n_delta = r.h5.as_ref().map(|h| h.n_delta).unwrap_or(0);
    check(n_delta.abs_diff(57) <= 2, format!("N_delta = {n_delta}"), &mut fails);
    let lg = r.rate.as_ref().map(|x| x.log10_one_minus_gamma2).unwrap_or(f64::NAN);
    check(within(lg, -41.0, 2.0), format!("log10(1-gamma2) = {lg}"), &mut fails);
    check(elapsed < Duration::from_secs(5), format!("runtime {elapsed:?}"), &mut fails);
    outcome(fails, format!("eps0 rel err {e:.1e}, C_eps0 {c:.4}, N_delta {n_delta}, log10(1-gamma2) {lg:.2}, {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let (_, r) = constants(&fixtures::rplus());
    let elapsed = t.elapsed();
    let mut fails = Vec::new();
    for (name, v, n, d) in [
        ("lambda", &r.lambda, 1, 10),
        ("Dtilde", &r.dtilde, 1, 5),
        ("a0", &r.a0, 21, 81),
        ("sigma", &r.sigma, 21, 20),
        ("eps0", &r.eps0, 1, 2),
    ] {
        check(exact(v, n, d), format!("{name} = {} is not {n}/{d}", v.render(20)), &mut fails);
    }
    let target = Real::from_int(12) * (Real::from_int(1) / Real::from_int(10)).exp();
    let e = rel(&r.c_eps0.to_real(), &target);
    check(e <= 1e-9, format!("C_eps0 relative error {e:e}"), &mut fails);
    let d0 = r.delta0.to_f64();
    check(within(d0, 0.0134, 5e-4), format!("delta0 = {d0}"), &mut fails);
    let n_delta = r.h5.as_ref().map(|h| h.n_delta).unwrap_or(0);
    check(n_delta.abs_diff(5) <= 1, format!("N_delta = {n_delta}"), &mut fails);
    let lg = r.rate.as_ref().map(|x| x.log10_one_minus_gamma2).unwrap_or(f64::NAN);
    check(within(lg, -29.0, 2.0), format!("log10(1-gamma2) = {lg}"), &mut fails);
    check(elapsed < Duration::from_secs(5), format!("runtime {elapsed:?}"), &mut fails);
    outcome(fails, format!("C_eps0 rel err {e:.1e}, delta0 {d0:.6}, N_delta {n_delta}, log10(1-gamma2) {lg:.2}, {elapsed:.2?}"))
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let f = fixtures::skew2d();
    let cert = report::certify_fixture(&f, None).expect("skew map certifies");
    let elapsed = t.elapsed();
    let mut fails = Vec::new();
    let lam = cert.lambda.value.to_real();
    let target = Real::from_f64(1.1) * Real::from_int(2).sqrt() / Real::from_int(5);
    let e = rel(&lam, &target);
    check(e <= 1e-9, format!("lambda relative error {e:e}"), &mut fails);
    let dt = cert.dtilde.value.to_f64();
    check(within(dt, 1.0, 1e-9), format!("Dtilde = {dt}"), &mut fails);
    let cx = cert.complexity.as_ref().expect("complexity report");
    let limit = 1.0 / lam.to_f64() - 1.0;
    check(cx.trials >= 2000, format!("only {} sets", cx.trials), &mut fails);
    check(cx.sup < limit, format!("sigma estimate {} >= {limit}", cx.sup), &mut fails);
    for p in ["corner", "accumulation"] {
        check(cx.by_placement.iter().any(|(q, _)| q == p), format!("no {p} placements"), &mut fails);
    }
    check(elapsed < Duration::from_secs(120), format!("runtime {elapsed:?}"), &mut fails);
    outcome(fails, format!("lambda rel err {e:.1e}, sigma estimate {:.4} < {limit:.4} over {} sets, {elapsed:.2?}", cx.sup, cx.trials))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let f = fixtures::wmap();
    let (_, r) = constants(&f);
    let p = CouplingParams::from_report(&r).unwrap();
    let run = report::couple(&f, &r, 2).expect("coupling runs");
    let m = f.spec.interval_map().unwrap();
    let opts = GridOptions::default();
    let half = Interval::new(0.0, 0.5);
    let mut a = GridDensity::uniform(m.space, opts);
    let mut b = GridDensity::from_fn(vec![half.lo, half.hi], opts, |_| 2.0);
    let mut direct = vec![l1_distance(&a, &b)];
    for _ in 0..30 {
        a = apply_once(m, &a, opts).unwrap();
        b = apply_once(m, &b, opts).unwrap();
        direct.push(l1_distance(&a, &b));
    }
    let elapsed = t.elapsed();
    let mut fails = Vec::new();
    let s = &run.state.l1_series;
    check(run.fit_window >= 30, format!("only {} steps", run.fit_window), &mut fails);
    check(run.fitted_rate < 0.9, format!("family fitted rate {}", run.fitted_rate), &mut fails);
    check(run.bound_violations == 0, format!("{} values above 2 C_gamma1 gamma2^m", run.bound_violations), &mut fails);
    let direct_rate = fitted_rate(&direct);
    let direct_viol = direct.iter().enumerate().filter(|(i, v)| **v > p.bound(*i)).count();
    check(direct_rate < 0.9, format!("transfer-operator fitted rate {direct_rate}"), &mut fails);
    check(direct_viol == 0, format!("{direct_viol} transfer-operator values above the bound"), &mut fails);
    check(elapsed < Duration::from_secs(60), format!("runtime {elapsed:?}"), &mut fails);
    outcome(
        fails,
        format!(
            "fitted rate {:.3} (families) / {direct_rate:.3} (operator) over 30 steps, {} steps checked against the bound, {elapsed:.2?}",
            run.fitted_rate,
            s.len()
        ),
    )
}

fn growth_family(id: &str, eps0: f64, space: Interval) -> Family {
    if id == "doubling" {
        let pairs = chop_grid(space, eps0, space.lo, None)
            .into_iter()
            .map(|c| Pair::uniform(c, c.len() * if c.mid() < 0.5 { 0.5 } else { 1.5 }))
            .collect();
        Family { pairs, deficit: 0.0 }
    } else {
        Family::from_density(space, eps0, |x| (0.8 * x).exp()).unwrap()
    }
}

fn criterion_5() -> Outcome {
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for id in ["wmap", "doubling"] {
        let f = fixtures::by_id(id).unwrap();
        let (_, r) = constants(&f);
        let m = f.spec.interval_map().unwrap();
        let k = GrowthConstants::from_report(&r).unwrap();
        let fam = growth_family(id, k.eps0, m.space);
        let audit = expmix::family::growth_audit(m, &fam, &k, 20).expect("audit runs");
        let rows = audit.rows.len();
        check(rows == 20 * 20, format!("{id}: {rows} rows"), &mut fails);
        check(audit.violations == 0, format!("{id}: {} violations", audit.violations), &mut fails);
        parts.push(format!("{id} {rows} rows, {} violations, worst slack {:.3e}", audit.violations, audit.worst_slack));
    }
    outcome(fails, parts.join("; "))
}

fn sup_gap(fam: &Family, g: &GridDensity) -> f64 {
    let idx = fam.index();
    let ends: Vec<f64> = fam.pairs.iter().flat_map(|p| [p.domain.lo, p.domain.hi]).collect();
    g.interior_nodes()
        .filter(|x| !ends.iter().any(|e| (e - x).abs() < 1e-12))
        .map(|x| (idx.density(x) - g.eval(x)).abs())
        .fold(0.0, f64::max)
}

fn criterion_6() -> Outcome {
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for id in ["wmap", "doubling"] {
        let f = fixtures::by_id(id).unwrap();
        let (_, r) = constants(&f);
        let m = f.spec.interval_map().unwrap();
        let eps0 = r.eps0.to_f64();
        let fam = growth_family(id, eps0, m.space);
        let opts = GridOptions::default();
        let g0 = GridDensity::from_family(&fam, opts);
        let it = IterateOptions::new(eps0);
        let mut worst: f64 = 0.0;
        let mut cur = fam.clone();
        for n in 1..=10 {
            cur = step(m, &cur, &it).unwrap();
            let g = apply_l(m, &g0, n, opts).unwrap();
            worst = worst.max(sup_gap(&cur, &g));
        }
        check(worst <= 1e-6, format!("{id}: sup gap {worst:e}"), &mut fails);
        parts.push(format!("{id} sup gap {worst:.2e}"));
    }
    outcome(fails, format!("n <= 10: {}", parts.join(", ")))
}

fn criterion_7() -> Outcome {
    let mut fails = Vec::new();
    let f = fixtures::wmap();
    let (_, r) = constants(&f);
    let m = f.spec.interval_map().unwrap();
    let eps0 = r.eps0.to_f64();
    let fam = growth_family("wmap", eps0, m.space);
    let w0 = fam.total_weight();
    let it = iterate(m, &fam, 20, &IterateOptions::new(eps0)).unwrap();
    let werr = ((it.total_weight() + it.deficit) - w0).abs() / w0;
    check(werr <= 1e-9, format!("weight drift {werr:e}"), &mut fails);
    let opts = GridOptions::default();
    let mut g = GridDensity::from_fn(vec![0.0, 1.0], opts, |x| 1.0 + (7.0 * x).sin().powi(2));
    let mass0 = g.mass();
    let mut merr: f64 = 0.0;
    for _ in 0..20 {
        g = apply_once(m, &g, opts).unwrap();
        merr = merr.max((g.mass() - mass0).abs() / mass0);
    }
    check(merr <= 1e-8, format!("mass drift {merr:e}"), &mut fails);
    let run = report::couple(&f, &r, 2).unwrap();
    let st = &run.state;
    let derr = st.difference_error.iter().cloned().fold(0.0, f64::max);
    check(derr <= 1e-6, format!("difference error {derr:e}"), &mut fails);
    let wa = st.family_a.total_weight() + st.deficit.0;
    let wb = st.family_b.total_weight() + st.deficit.1;
    let unc = *st.uncoupled_series.last().unwrap();
    let eq = (wa - wb).abs();
    check(eq <= 1e-12, format!("uncoupled weights differ by {eq:e}"), &mut fails);
    check((wa - unc).abs() <= 1e-9, format!("bookkeeping {unc} vs family weight {wa}"), &mut fails);
    let same_removed = run.blocks.iter().all(|b| b.uncoupled_after == b.uncoupled_before - b.removed);
    check(same_removed, "block removals do not match the ledger".into(), &mut fails);
    outcome(fails, format!("weight {werr:.1e}, mass {merr:.1e}, difference {derr:.1e}, |A|-|B| {eq:.1e}"))
}

fn criterion_8() -> Outcome {
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for id in ["wmap", "doubling"] {
        let f = fixtures::by_id(id).unwrap();
        let (_, r) = constants(&f);
        let m = f.spec.interval_map().unwrap();
        let p = CouplingParams::from_report(&r).unwrap();
        let (a0, lam, alpha) = (p.a0, p.lambda, p.alpha);
        let d = r.d.to_f64();
        let tol = |b: f64| b * (1.0 + 1e-9) + 1e-9;
        let extremal = if a0 > 0.0 {
            Family::from_density(m.space, p.eps0, move |x| (a0 * x).exp()).unwrap()
        } else {
            growth_family(id, p.eps0, m.space)
        };
        let once = step(m, &extremal, &IterateOptions::new(p.eps0)).unwrap();
        let h1 = once.max_holder(alpha);
        let bound = a0 * lam.powf(alpha) + d;
        check(h1 <= tol(bound), format!("{id}: one step H = {h1} > {bound}"), &mut fails);
        let run = report::couple(&f, &r, 2).unwrap();
        for b in &run.blocks {
            check(b.h_iterated <= tol(bound), format!("{id}: block {} iterated H = {}", b.round, b.h_iterated), &mut fails);
            check(b.h_split <= tol(2.0 * a0), format!("{id}: block {} split H = {}", b.round, b.h_split), &mut fails);
            check(b.h_after_n1 <= tol(a0), format!("{id}: block {} H after n1 = {}", b.round, b.h_after_n1), &mut fails);
        }
        let hs = run.blocks.iter().map(|b| b.h_split).fold(0.0, f64::max);
        let hn = run.blocks.iter().map(|b| b.h_after_n1).fold(0.0, f64::max);
        parts.push(format!("{id} H step {h1:.4} <= {bound:.4}, split {hs:.4} <= {:.4}, after n1 {hn:.4} <= {a0:.4}", 2.0 * a0));
    }
    outcome(fails, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let t = Instant::now();
    let mut fails = Vec::new();
    let f = fixtures::wmap();
    let (_, r) = constants(&f);
    let s = match report::induce(&f, &r, 1, 1, None).expect("scheme 1 builds") {
        Induced::Family(s) => s,
        Induced::Analytic(_) => unreachable!("one-dimensional map"),
    };
    check(s.mass_deficit < 1e-6, format!("scheme 1 deficit {:.6} after {} blocks", s.mass_deficit, s.blocks), &mut fails);
    let stats = tail_statistics(&s.tail, s.gcd);
    match &stats {
        Ok(st) => {
            check(st.kappa < 1.0, format!("kappa = {}", st.kappa), &mut fails);
            check(st.r2 > 0.95, format!("R^2 = {}", st.r2), &mut fails);
        }
        Err(e) => fails.push(format!("tail statistics: {e}")),
    }
    let low = s.levels.iter().filter(|l| l.ratio < s.t).count();
    check(low == 0, format!("{low} blocks with stopped fraction below t = {:e}", s.t), &mut fails);
    let mc = s.monte_carlo.as_ref().expect("Monte-Carlo oracle");
    check(mc.points >= 1_000_000, format!("only {} Monte-Carlo points", mc.points), &mut fails);
    check(mc.within_3_sigma, format!("Monte-Carlo tail off by {:.2} sigma", mc.worst_z), &mut fails);
    let f2 = fixtures::skew2d();
    let (_, r2) = constants(&f2);
    let gcd = match report::induce(&f2, &r2, 2, 1, None).expect("scheme 2 builds") {
        Induced::Analytic(a) => a.gcd,
        Induced::Family(_) => unreachable!("planar map"),
    };
    check(gcd == 1, format!("scheme 2 gcd {gcd}"), &mut fails);
    let cells = match report::induce(&f2, &r2, 3, 1, None).expect("scheme 3 builds") {
        Induced::Analytic(a) => a.cells,
        Induced::Family(_) => unreachable!("planar map"),
    };
    check(!cells.is_empty() && cells.iter().all(|c| c.positive && c.tau == 1), "scheme 3 cell without tau = 1 mass".into(), &mut fails);
    let elapsed = t.elapsed();
    check(elapsed < Duration::from_secs(300), format!("runtime {elapsed:?}"), &mut fails);
    let (kappa, r2v) = stats.as_ref().map(|s| (s.kappa, s.r2)).unwrap_or((f64::NAN, f64::NAN));
    outcome(
        fails,
        format!(
            "scheme 1: {} blocks, deficit {:.6}, kappa {kappa:.9}, R^2 {r2v:.6}, min ratio {:.2e} vs t {:.2e}, MC worst z {:.2}; scheme 2 gcd {gcd}; scheme 3 {} cells; {elapsed:.1?}",
            s.blocks,
            s.mass_deficit,
            s.levels.iter().map(|l| l.ratio).fold(f64::INFINITY, f64::min),
            s.t,
            mc.worst_z,
            cells.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut fails = Vec::new();
    let opts = GridOptions::default();
    let d = fixtures::doubling();
    let inv = invariant_density(d.spec.interval_map().unwrap(), 1e-12, 10_000, opts).unwrap();
    let dev = inv.density.interior_nodes().map(|x| (inv.density.eval(x) - 1.0).abs()).fold(0.0, f64::max);
    check(dev <= 1e-10, format!("doubling density deviates by {dev:e}"), &mut fails);
    let w = fixtures::wmap();
    let m = w.spec.interval_map().unwrap();
    let inv = invariant_density(m, 1e-9, 10_000, opts).unwrap();
    let next = apply_once(m, &inv.density, opts).unwrap();
    let res = l1_distance(&next, &inv.density);
    check(res < 1e-6, format!("W-map residual {res:e}"), &mut fails);
    let h = orbit_histogram(m, 10_000_000, 60, 512, m.space, 7).unwrap();
    let cmp = compare_histogram(&h, &inv.density);
    let total = inv.density.mass();
    let n = h.samples as f64;
    let chi2: f64 = (0..h.counts.len())
        .map(|k| {
            let b = h.bin(k);
            let e = n * inv.density.integral(b.lo, b.hi) / total;
            (h.counts[k] as f64 - e).powi(2) / e
        })
        .sum();
    check(cmp.bins_over == 0, format!("{} of 512 bins beyond 3 sigma (worst {:.2} at bin {})", cmp.bins_over, cmp.worst_z, cmp.worst_bin), &mut fails);
    outcome(fails, format!("doubling deviation {dev:.1e}, W-map residual {res:.1e}, histogram worst z {:.2}, chi^2 {chi2:.1} on 511 dof", cmp.worst_z))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("constants, W-map", criterion_1),
        ("constants, half-line map", criterion_2),
        ("planar skew map", criterion_3),
        ("empirical mixing", criterion_4),
        ("growth audit", criterion_5),
        ("oracle equivalence", criterion_6),
        ("conservation", criterion_7),
        ("regularity", criterion_8),
        ("inducing schemes", criterion_9),
        ("invariant density", criterion_10),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let o = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Outcome { pass: false, detail: "panicked".into() });
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
