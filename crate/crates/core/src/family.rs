//! Standard pairs and families, their iteration with artificial chopping, and the growth audit.

use std::cmp::Ordering;
use std::sync::OnceLock;

use serde::Serialize;

use crate::constants::ConstantsReport;
use crate::error::{Error, Result};
use crate::hypothesis::eps_grid;
use crate::map::{Interval, IntervalMap};
use crate::quad::{self, Chebyshev};

/// Chebyshev nodes per pair.
pub const NODES: usize = 24;
/// Relative weight below which pairs are dropped into the deficit.
pub const PRUNE: f64 = 1e-16;

pub fn cheb() -> &'static Chebyshev {
    static C: OnceLock<Chebyshev> = OnceLock::new();
    C.get_or_init(|| Chebyshev::new(NODES))
}

/// A density on an interval, stored as ln(rho) at Chebyshev nodes, with its weight.
#[derive(Clone, Debug, Serialize)]
pub struct Pair {
    pub domain: Interval,
    pub log_rho: Vec<f64>,
    pub weight: f64,
}

impl Pair {
    pub fn uniform(domain: Interval, weight: f64) -> Pair {
        Pair { domain, log_rho: vec![-domain.len().ln(); NODES], weight }
    }

    /// Pair with density proportional to a positive function f.
    pub fn from_fn(domain: Interval, weight: f64, f: impl Fn(f64) -> f64) -> Result<Pair> {
        let c = cheb();
        let vals: Vec<f64> = (0..NODES).map(|k| f(c.node(k, domain.lo, domain.hi))).collect();
        if vals.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid(format!("density must be positive and finite on {domain}")));
        }
        let mass = c.integrate(&vals, domain.lo, domain.hi);
        Ok(Pair { domain, log_rho: vals.iter().map(|v| (v / mass).ln()).collect(), weight })
    }

    pub fn node(&self, k: usize) -> f64 {
        cheb().node(k, self.domain.lo, self.domain.hi)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        cheb().eval(&self.log_rho, self.domain.lo, self.domain.hi, x)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_rho.iter().map(|v| v.exp()).collect()
    }

    pub fn mass(&self) -> f64 {
        cheb().integrate(&self.values(), self.domain.lo, self.domain.hi)
    }

    /// Integral of rho over (a, b) intersected with the domain.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(self.domain.lo), b.min(self.domain.hi));
        if b <= a {
            return 0.0;
        }
        if a == self.domain.lo && b == self.domain.hi {
            return self.mass();
        }
        quad::integrate(a, b, |x| self.density(x))
    }

    /// sup over node pairs of |ln rho(x) - ln rho(y)| / |x - y|^alpha.
    pub fn holder(&self, alpha: f64) -> f64 {
        let xs: Vec<f64> = (0..NODES).map(|k| self.node(k)).collect();
        let mut h: f64 = 0.0;
        for i in 0..NODES {
            for j in i + 1..NODES {
                let d = (xs[i] - xs[j]).abs();
                if d > 0.0 {
                    h = h.max((self.log_rho[i] - self.log_rho[j]).abs() / d.powf(alpha));
                }
            }
        }
        h
    }

    fn sampled_range(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let n = 200;
        for k in 0..=n {
            let x = self.domain.lo + self.domain.len() * k as f64 / n as f64;
            let v = self.density(x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for v in self.values() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn inf(&self) -> f64 {
        self.sampled_range().0
    }

    pub fn sup(&self) -> f64 {
        self.sampled_range().1
    }

    /// Integral of rho over the eps-boundary; `left`/`right` say which ends are boundary points.
    pub fn boundary_mass(&self, eps: f64, left: bool, right: bool) -> f64 {
        let (lo, hi) = (self.domain.lo, self.domain.hi);
        match (left, right) {
            (false, false) => 0.0,
            (true, true) if 2.0 * eps >= hi - lo => self.mass(),
            (true, true) => self.integral(lo, lo + eps) + self.integral(hi - eps, hi),
            (true, false) => self.integral(lo, lo + eps),
            (false, true) => self.integral(hi - eps, hi),
        }
    }
}

/// The cell of `chop_grid(j, eps0, anchor, None)` whose right end is the first one beyond y.
pub fn chop_cell_of(j: Interval, eps0: f64, anchor: f64, y: f64) -> Interval {
    if j.len() <= eps0 {
        return j;
    }
    let step = 0.5 * eps0;
    let (wlo, whi) = (j.lo + eps0 / 3.0, j.hi - eps0 / 3.0);
    let cut = |k: i64| anchor + k as f64 * step;
    let mut first = ((wlo - anchor) / step).floor() as i64;
    while cut(first) <= wlo {
        first += 1;
    }
    if cut(first) >= whi {
        let mid = j.mid();
        return if mid <= y { Interval::new(mid, j.hi) } else { Interval::new(j.lo, mid) };
    }
    let mut last = (((whi - anchor) / step).floor() as i64).max(first);
    while last > first && cut(last) >= whi {
        last -= 1;
    }
    while cut(last + 1) < whi {
        last += 1;
    }
    let mut i = (((y - anchor) / step).floor() as i64).clamp(first - 1, last);
    while i >= first && cut(i) > y {
        i -= 1;
    }
    while i < last && cut(i + 1) <= y {
        i += 1;
    }
    let lo = if i >= first { cut(i) } else { j.lo };
    let hi = if i < last { cut(i + 1) } else { j.hi };
    Interval::new(lo, hi)
}

/// Cells of length in (eps0/3, eps0] covering `j`, cut at multiples of eps0/2 from `anchor`.
///
/// Cut points inside `protect` are replaced by its nearest admissible endpoint.
pub fn chop_grid(j: Interval, eps0: f64, anchor: f64, protect: Option<Interval>) -> Vec<Interval> {
    if j.len() <= eps0 {
        return vec![j];
    }
    let step = 0.5 * eps0;
    let (wlo, whi) = (j.lo + eps0 / 3.0, j.hi - eps0 / 3.0);
    let admissible = |c: f64| c > wlo && c < whi && !protect.is_some_and(|p| p.contains(c));
    let relocate = |c: f64| {
        let p = protect.expect("relocation only happens with a protected set");
        let mut opts = [p.lo, p.hi];
        opts.sort_by(|a, b| (a - c).abs().total_cmp(&(b - c).abs()));
        opts.into_iter().find(|&v| v > wlo && v < whi)
    };
    let mut cuts: Vec<f64> = Vec::new();
    let mut k = ((wlo - anchor) / step).floor() as i64;
    loop {
        let c = anchor + k as f64 * step;
        if c >= whi {
            break;
        }
        if c > wlo {
            if admissible(c) {
                cuts.push(c);
            } else if let Some(r) = relocate(c) {
                cuts.push(r);
            }
        }
        k += 1;
    }
    if cuts.is_empty() {
        let mid = j.mid();
        if admissible(mid) {
            cuts.push(mid);
        } else if let Some(r) = relocate(mid) {
            cuts.push(r);
        } else {
            cuts.push(mid);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut lo = j.lo;
    for c in cuts {
        out.push(Interval::new(lo, c));
        lo = c;
    }
    out.push(Interval::new(lo, j.hi));
    out
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Family {
    pub pairs: Vec<Pair>,
    /// Weight dropped by pruning.
    pub deficit: f64,
}

#[derive(Clone, Debug)]
pub struct IterateOptions {
    pub eps0: f64,
    pub protect: Option<Interval>,
    pub prune: f64,
}

impl IterateOptions {
    pub fn new(eps0: f64) -> Self {
        IterateOptions { eps0, protect: None, prune: PRUNE }
    }
}

/// Sorted view of a family for pointwise evaluation.
pub struct DensityIndex<'a> {
    pairs: Vec<&'a Pair>,
    los: Vec<f64>,
    max_len: f64,
}

impl<'a> DensityIndex<'a> {
    pub fn new(f: &'a Family) -> Self {
        let mut pairs: Vec<&Pair> = f.pairs.iter().collect();
        pairs.sort_by(|a, b| a.domain.lo.total_cmp(&b.domain.lo));
        let los = pairs.iter().map(|p| p.domain.lo).collect();
        let max_len = pairs.iter().map(|p| p.domain.len()).fold(0.0, f64::max);
        DensityIndex { pairs, los, max_len }
    }

    pub fn active(&self, x: f64) -> impl Iterator<Item = &'a Pair> + '_ {
        let hi = self.los.partition_point(|&l| l < x);
        let lo = self.los.partition_point(|&l| l <= x - self.max_len);
        self.pairs[lo..hi].iter().copied().filter(move |p| p.domain.contains(x))
    }

    /// Family density sum of w rho at x.
    pub fn density(&self, x: f64) -> f64 {
        self.active(x).map(|p| p.weight * p.density(x)).sum()
    }
}

impl Family {
    pub fn single(p: Pair) -> Family {
        Family { pairs: vec![p], deficit: 0.0 }
    }

    /// Family whose density is the positive function f, chopped along the grid of X.
    pub fn from_density(space: Interval, eps0: f64, f: impl Fn(f64) -> f64 + Copy) -> Result<Family> {
        let pairs = chop_grid(space, eps0, space.lo, None)
            .into_iter()
            .map(|cell| {
                let p = Pair::from_fn(cell, 1.0, f)?;
                let w = cheb().integrate(
                    &(0..NODES).map(|k| f(p.node(k))).collect::<Vec<_>>(),
                    cell.lo,
                    cell.hi,
                );
                Ok(Pair { weight: w, ..p })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Family { pairs, deficit: 0.0 })
    }

    pub fn total_weight(&self) -> f64 {
        self.pairs.iter().map(|p| p.weight).sum()
    }

    pub fn index(&self) -> DensityIndex<'_> {
        DensityIndex::new(self)
    }

    /// |boundary_eps G|, with the boundary taken relative to the phase space.
    pub fn boundary_measure(&self, eps: f64, space: Interval) -> f64 {
        let tol = 1e-14;
        self.pairs
            .iter()
            .map(|p| {
                let left = p.domain.lo > space.lo + tol;
                let right = p.domain.hi < space.hi - tol;
                p.weight * p.boundary_mass(eps, left, right)
            })
            .sum()
    }

    /// sup over the given eps of |boundary_eps G| / (|G| eps).
    pub fn properness(&self, eps: &[f64], space: Interval) -> f64 {
        let g = self.total_weight();
        eps.iter().map(|&e| self.boundary_measure(e, space) / (g * e)).fold(0.0, f64::max)
    }

    pub fn max_holder(&self, alpha: f64) -> f64 {
        self.pairs.iter().map(|p| p.holder(alpha)).fold(0.0, f64::max)
    }

    /// Pairs with bit-identical domains are combined into one; the family density is unchanged.
    pub fn merged(mut self) -> Family {
        self.pairs.sort_by(|a, b| match a.domain.lo.total_cmp(&b.domain.lo) {
            Ordering::Equal => a.domain.hi.total_cmp(&b.domain.hi),
            o => o,
        });
        let mut out: Vec<Pair> = Vec::with_capacity(self.pairs.len());
        let mut group: Vec<Pair> = Vec::new();
        let flush = |group: &mut Vec<Pair>, out: &mut Vec<Pair>| {
            if group.len() == 1 {
                out.push(group.pop().unwrap());
            } else if !group.is_empty() {
                let w: f64 = group.iter().map(|p| p.weight).sum();
                let log_rho = (0..NODES)
                    .map(|k| {
                        let top = group.iter().map(|p| p.log_rho[k]).fold(f64::NEG_INFINITY, f64::max);
                        let s: f64 = group.iter().map(|p| p.weight / w * (p.log_rho[k] - top).exp()).sum();
                        top + s.ln()
                    })
                    .collect();
                out.push(Pair { domain: group[0].domain, log_rho, weight: w });
                group.clear();
            }
        };
        for p in self.pairs {
            if let Some(g) = group.first() {
                if g.domain.lo != p.domain.lo || g.domain.hi != p.domain.hi {
                    flush(&mut group, &mut out);
                }
            }
            group.push(p);
        }
        flush(&mut group, &mut out);
        Family { pairs: out, deficit: self.deficit }
    }

    /// L1 distance between the two family densities.
    pub fn l1_distance(&self, other: &Family) -> f64 {
        let mut pts: Vec<f64> = self
            .pairs
            .iter()
            .chain(&other.pairs)
            .flat_map(|p| [p.domain.lo, p.domain.hi])
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let (ia, ib) = (self.index(), other.index());
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let pa: Vec<&Pair> = ia.active(mid).collect();
            let pb: Vec<&Pair> = ib.active(mid).collect();
            if pa.is_empty() && pb.is_empty() {
                continue;
            }
            total += quad::integrate(a, b, |x| {
                let fa: f64 = pa.iter().map(|p| p.weight * p.density(x)).sum();
                let fb: f64 = pb.iter().map(|p| p.weight * p.density(x)).sum();
                (fa - fb).abs()
            });
        }
        total
    }
}

/// One application of the iteration operator: push forward along every branch, then chop.
pub fn step(m: &IntervalMap, fam: &Family, opts: &IterateOptions) -> Result<Family> {
    let total = fam.total_weight();
    let floor = opts.prune * total;
    let c = cheb();
    let mut deficit = fam.deficit;
    let mut out = Vec::with_capacity(fam.pairs.len() * 2);
    let mhi = m.materialized_hi();
    for p in &fam.pairs {
        if p.domain.hi > mhi {
            let lost = p.weight * p.integral(mhi, p.domain.hi);
            if lost > 1e-9 * total {
                return Err(Error::TruncationInsufficient { tail: lost, budget: 1e-9 * total });
            }
            deficit += lost;
        }
        for (i, piece) in crate::hypothesis::pieces(m, p.domain) {
            let b = &m.branches[i];
            let img = b.map_interval(piece);
            for cell in chop_grid(img, opts.eps0, m.space.lo, opts.protect) {
                let vals: Vec<f64> = (0..NODES)
                    .map(|k| {
                        let y = c.node(k, cell.lo, cell.hi);
                        p.log_density(b.inverse(y)) + b.jac(y).ln()
                    })
                    .collect();
                let exp: Vec<f64> = vals.iter().map(|v| v.exp()).collect();
                let mass = c.integrate(&exp, cell.lo, cell.hi);
                let w = p.weight * mass;
                if !(w > floor) || !mass.is_finite() {
                    deficit += w.max(0.0);
                    continue;
                }
                let shift = mass.ln();
                out.push(Pair { domain: cell, log_rho: vals.iter().map(|v| v - shift).collect(), weight: w });
            }
        }
    }
    Ok(Family { pairs: out, deficit }.merged())
}

pub fn iterate(m: &IntervalMap, fam: &Family, n: usize, opts: &IterateOptions) -> Result<Family> {
    let mut f = fam.clone();
    for _ in 0..n {
        f = step(m, &f, opts)?;
    }
    Ok(f)
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparabilityReport {
    pub inf: f64,
    pub avg_j: f64,
    pub avg_jp: f64,
    pub sup: f64,
    pub ratio: f64,
    pub factor: f64,
}

/// inf rho, the averages over J and J', and sup rho must agree within exp(a eps0^alpha).
pub fn comparability_check(p: &Pair, j: Interval, jp: Interval, a: f64, eps0: f64, alpha: f64) -> Result<ComparabilityReport> {
    if !p.domain.contains_interval(&j) || !p.domain.contains_interval(&jp) || j.is_empty() || jp.is_empty() {
        return Err(Error::Invalid("J and J' must be non-empty subsets of the domain".into()));
    }
    let (inf, sup) = p.sampled_range();
    let avg_j = p.integral(j.lo, j.hi) / j.len();
    let avg_jp = p.integral(jp.lo, jp.hi) / jp.len();
    let ratio = sup / inf;
    let factor = (a * eps0.powf(alpha)).exp();
    if ratio > factor * (1.0 + 1e-12) {
        return Err(Error::ComparabilityViolated { ratio, factor });
    }
    Ok(ComparabilityReport { inf, avg_j, avg_jp, sup, ratio, factor })
}

/// Constants entering the growth bounds, in f64.
#[derive(Clone, Debug)]
pub struct GrowthConstants {
    pub lambda: f64,
    pub one_plus_ca_sigma: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub zeta4: f64,
    pub theta2: f64,
    pub eps0: f64,
}

impl GrowthConstants {
    pub fn from_report(r: &ConstantsReport) -> Result<Self> {
        if r.n0 != 1 {
            return Err(Error::Invalid("the growth audit supports n0 = 1".into()));
        }
        Ok(GrowthConstants {
            lambda: r.lambda.to_f64(),
            one_plus_ca_sigma: 1.0 + r.ca.to_f64() * r.sigma.to_f64(),
            zeta1: r.zeta1.to_f64(),
            zeta2: r.zeta2.to_f64(),
            zeta3: r.zeta3.to_f64(),
            zeta4: r.zeta4.to_f64(),
            theta2: r.theta2.to_f64(),
            eps0: r.eps0.to_f64(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditRow {
    pub m: usize,
    pub eps: f64,
    pub lhs: f64,
    pub one_step: f64,
    pub iterated: f64,
    pub proper: f64,
}

impl AuditRow {
    pub fn slack(&self) -> f64 {
        self.one_step.min(self.iterated).min(self.proper) - self.lhs
    }

    fn holds(&self) -> bool {
        let ok = |rhs: f64| self.lhs <= rhs * (1.0 + 1e-9) + 1e-300;
        ok(self.one_step) && ok(self.iterated) && ok(self.proper)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthAudit {
    pub b_initial: f64,
    pub rows: Vec<AuditRow>,
    pub violations: usize,
    pub worst_slack: f64,
}

impl GrowthAudit {
    pub fn into_result(self) -> Result<GrowthAudit> {
        if let Some(r) = self.rows.iter().find(|r| !r.holds()) {
            let rhs = r.one_step.min(r.iterated).min(r.proper);
            return Err(Error::GrowthViolated { m: r.m, eps: r.eps, lhs: r.lhs, rhs });
        }
        Ok(self)
    }
}

/// Geometric eps grid used to measure the properness constant of a family.
pub fn fine_eps_grid(eps0: f64) -> Vec<f64> {
    (0..=60).map(|k| eps0 * 0.99 * 10f64.powf(-12.0 * k as f64 / 60.0)).collect()
}

/// Checks the one-step, iterated and properness growth bounds for m = 1..=horizon.
pub fn growth_audit(m: &IntervalMap, fam: &Family, k: &GrowthConstants, horizon: usize) -> Result<GrowthAudit> {
    let opts = IterateOptions::new(k.eps0);
    let space = m.space;
    let g = fam.total_weight();
    let b = fam.properness(&fine_eps_grid(k.eps0), space);
    let grid = eps_grid(k.eps0);
    let mut prev = fam.clone();
    let mut rows = Vec::new();
    for step_m in 1..=horizon {
        let next = step(m, &prev, &opts)?;
        let amp = k.one_plus_ca_sigma.powi(step_m as i32);
        let lm = k.lambda.powi(step_m as i32);
        for &eps in &grid {
            let lhs = next.boundary_measure(eps, space);
            let one_step = k.one_plus_ca_sigma * prev.boundary_measure(k.lambda * eps, space) + k.zeta1 * g * eps;
            let iterated = amp * fam.boundary_measure(lm * eps, space) + k.zeta2 * g * eps;
            let proper = b * g * eps * (k.zeta3 * k.theta2.powi(step_m as i32) + k.zeta4 / b);
            rows.push(AuditRow { m: step_m, eps, lhs, one_step, iterated, proper });
        }
        prev = next;
    }
    let violations = rows.iter().filter(|r| !r.holds()).count();
    let worst_slack = rows.iter().map(AuditRow::slack).fold(f64::INFINITY, f64::min);
    Ok(GrowthAudit { b_initial: b, rows, violations, worst_slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fixtures;

    #[test]
    fn boundary_of_uniform_pairs() {
        let space = Interval::new(-1.0, 2.0);
        let f = Family::single(Pair::uniform(Interval::new(0.0, 1.0), 1.0));
        assert!((f.boundary_measure(0.01, space) - 0.02).abs() < 1e-14);
        let two = Family {
            pairs: vec![Pair::uniform(Interval::new(0.0, 0.3), 0.5), Pair::uniform(Interval::new(0.5, 1.0), 0.5)],
            deficit: 0.0,
        };
        let expect = 0.5 * (0.02 / 0.3) + 0.5 * (0.02 / 0.5);
        assert!((two.boundary_measure(0.01, space) - expect).abs() < 1e-14);
    }

    #[test]
    fn exponential_density_comparability() {
        let (a0, eps0) = (25089.0 / 9025.0, 0.0345);
        let d = Interval::new(0.0, eps0);
        let p = Pair::from_fn(d, 1.0, |x| (a0 * x).exp()).unwrap();
        let r = comparability_check(&p, Interval::new(0.0, eps0 / 2.0), Interval::new(eps0 / 2.0, eps0), a0, eps0, 1.0)
            .unwrap();
        assert!(r.ratio <= r.factor * (1.0 + 1e-12));
        let (lo, hi) = (0.0f64, eps0 / 2.0);
        let closed = ((a0 * hi).exp() - (a0 * lo).exp()) / a0 / (hi - lo) / (((a0 * eps0).exp() - 1.0) / a0);
        assert!((r.avg_j - closed).abs() < 1e-12);
        let u = Pair::uniform(d, 1.0);
        let r = comparability_check(&u, Interval::new(0.0, 0.01), Interval::new(0.02, 0.03), a0, eps0, 1.0).unwrap();
        assert!((r.inf - r.sup).abs() < 1e-12 && (r.avg_j - r.avg_jp).abs() < 1e-12);
    }

    #[test]
    fn chop_cell_of_matches_grid() {
        let eps0 = 0.034;
        for (lo, hi) in [(0.1, 0.4), (0.0, 1.0), (0.2, 0.25), (0.3, 0.3 + 0.9 * 0.034)] {
            let j = Interval::new(lo, hi);
            let cells = chop_grid(j, eps0, 0.0, None);
            for s in 0..=200 {
                let y = lo + (hi - lo) * s as f64 / 200.0;
                let k = cells.partition_point(|c| c.hi <= y).min(cells.len() - 1);
                assert_eq!(chop_cell_of(j, eps0, 0.0, y), cells[k]);
            }
            for c in &cells {
                assert_eq!(chop_cell_of(j, eps0, 0.0, c.lo), cells[cells.partition_point(|d| d.hi <= c.lo).min(cells.len() - 1)]);
            }
        }
    }

    #[test]
    fn chop_grid_cell_lengths() {
        let eps0 = 0.0345;
        for (lo, hi) in [(0.0, 1.0), (0.1234, 0.2768), (0.3, 0.3 + 1.1 * eps0), (0.0, 0.45)] {
            let cells = chop_grid(Interval::new(lo, hi), eps0, 0.0, None);
            assert_eq!(cells[0].lo, lo);
            assert_eq!(cells.last().unwrap().hi, hi);
            for c in &cells {
                assert!(c.len() > eps0 / 3.0 && c.len() <= eps0 + 1e-15, "{c}");
            }
        }
        let protect = Interval::new(0.2, 0.2 + eps0 / 3.0);
        let cells = chop_grid(Interval::new(0.1, 0.4), eps0, 0.0, Some(protect));
        assert!(cells.iter().any(|c| c.contains_interval(&protect)));
    }

    #[test]
    fn wmap_first_step() {
        let f = fixtures::wmap();
        let m = f.spec.interval_map().unwrap();
        let eps0 = 9025.0 / 25089.0 * (1520.0f64 / 1381.0).ln();
        let fam = Family::single(Pair::uniform(Interval::new(0.0, eps0), 1.0));
        let next = step(m, &fam, &IterateOptions::new(eps0)).unwrap();
        assert!((next.total_weight() - 1.0).abs() < 1e-12);
        let lo = 1.0 - 40.0 / 9.0 * eps0;
        assert!((next.pairs[0].domain.lo - lo).abs() < 1e-14);
        for p in &next.pairs {
            assert!(p.domain.len() > eps0 / 3.0 && p.domain.len() <= eps0);
            assert!((p.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_keeps_the_family_density() {
        let d = Interval::new(0.2, 0.25);
        let a = Pair::from_fn(d, 0.3, |x| 1.0 + x).unwrap();
        let b = Pair::from_fn(d, 0.7, |x| 2.0 - x).unwrap();
        let fam = Family { pairs: vec![a.clone(), b.clone()], deficit: 0.0 };
        let merged = fam.clone().merged();
        assert_eq!(merged.pairs.len(), 1);
        for x in [0.2, 0.21, 0.2333, 0.25] {
            let direct = 0.3 * a.density(x) + 0.7 * b.density(x);
            assert!((merged.index().density(x) - direct).abs() < 1e-12 || x == 0.2 || x == 0.25);
            assert!((merged.pairs[0].weight * merged.pairs[0].density(x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_examples() {
        let u = Family::single(Pair::uniform(Interval::new(0.0, 1.0), 1.0));
        let h = Family::single(Pair::uniform(Interval::new(0.0, 0.5), 1.0));
        assert!(u.l1_distance(&u).abs() < 1e-15);
        assert!((u.l1_distance(&h) - 1.0).abs() < 1e-12);
        let far = Family::single(Pair::uniform(Interval::new(2.0, 3.0), 1.0));
        assert!((u.l1_distance(&far) - 2.0).abs() < 1e-12);
    }
}
