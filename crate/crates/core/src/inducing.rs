//! Inducing schemes built from standard families, with return-time tail statistics.

use std::collections::BTreeSet;

use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constants::{recovery_time, ConstantsReport};
use crate::error::{Error, Result};
use crate::family::{chop_cell_of, step, Family, IterateOptions, Pair};
use crate::hypothesis::{InducingPartition, SkewZ, UniformGrid};
use crate::map::{Interval, IntervalMap, SkewMap};
use crate::real::{Real, Scalar};

#[derive(Clone, Debug, Serialize)]
pub struct Level {
    pub tau: u64,
    /// Fraction of the base assigned this return time.
    pub mass: f64,
    pub stopped_pairs: usize,
    /// Stopped weight over the weight left after stopping.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailStats {
    pub kappa: f64,
    pub r2: f64,
    pub levels: usize,
    pub gcd: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonteCarloTail {
    pub points: u64,
    pub seed: u64,
    /// Points not yet stopped after each block.
    pub survivors: Vec<u64>,
    pub worst_z: f64,
    pub within_3_sigma: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnTimeScheme {
    pub scheme: u8,
    pub base: Interval,
    pub levels: Vec<Level>,
    /// (n, m(tau > n) / m(base)) at every realized level.
    pub tail: Vec<(u64, f64)>,
    pub gcd: u64,
    /// Part of the base left without a return time.
    pub mass_deficit: f64,
    /// Weight dropped by pruning.
    pub pruned: f64,
    /// Fixed ratio guaranteed by the certificate.
    pub t: f64,
    pub n_first: u64,
    pub n_block: u64,
    pub blocks: usize,
    pub stop_reason: String,
    /// Number of distinct partition cells used as images.
    pub images: usize,
    pub peak_pairs: usize,
    pub monte_carlo: Option<MonteCarloTail>,
}

#[derive(Clone, Debug)]
pub struct Scheme1Options {
    /// Index of the base cell; defaults to the cell containing the middle of X.
    pub base: Option<u64>,
    /// Cell size as a fraction of delta0.
    pub c: f64,
    pub max_blocks: usize,
    pub target: f64,
    /// Stop building once a family exceeds this many pairs.
    pub pair_budget: usize,
    pub mc_points: u64,
    pub seed: u64,
}

impl Default for Scheme1Options {
    fn default() -> Self {
        Scheme1Options {
            base: None,
            c: 1.0 / 3.0,
            max_blocks: 30,
            target: 1e-6,
            pair_budget: 40_000,
            mc_points: 1_000_000,
            seed: 1,
        }
    }
}

/// t = (2/3) Caa C_B^-1 m(R)^2 / ((1/3) m(R) + Ca C_B).
pub fn fixed_ratio(caa: f64, ca: f64, c_ball: f64, cell: f64) -> f64 {
    (2.0 / 3.0) * caa / c_ball * cell * cell / (cell / 3.0 + ca * c_ball)
}

/// Bound on the properness constant after removing cells: (Ca C_R + 1) Ca / c_R.
pub fn remainder_factor(ca: f64, c_r_big: f64, c_r: f64) -> f64 {
    (ca * c_r_big + 1.0) * ca / c_r
}

fn is_regular(i: Interval, space: Interval, delta0: f64) -> bool {
    let cut = if i.lo > space.lo { delta0 } else { 0.0 } + if i.hi < space.hi { delta0 } else { 0.0 };
    i.len() > cut
}

/// The grid cell inside `i` nearest to its midpoint.
fn choose_cell(grid: &UniformGrid, i: Interval) -> Option<(u64, Interval)> {
    let r = grid.inside(i);
    if r.is_empty() {
        return None;
    }
    let k = (((i.mid() - grid.lo) / grid.cell).floor().max(0.0) as u64).clamp(r.start, r.end - 1);
    Some((k, grid.get(k)))
}

fn restrict(p: &Pair, sub: Interval) -> Result<Option<Pair>> {
    if sub.len() <= 0.0 {
        return Ok(None);
    }
    let w = p.weight * p.integral(sub.lo, sub.hi);
    if !(w > 0.0) {
        return Ok(None);
    }
    Ok(Some(Pair::from_fn(sub, w, |x| p.density(x))?))
}

struct Stopper<'a> {
    grid: &'a UniformGrid,
    space: Interval,
    delta0: f64,
}

impl Stopper<'_> {
    /// Removes one cell from every regular pair; returns the stopped weight and the cells used.
    fn stop(&self, fam: &mut Family, used: &mut BTreeSet<u64>) -> Result<(f64, usize)> {
        let mut removed = 0.0;
        let mut count = 0;
        let mut out = Vec::with_capacity(fam.pairs.len() * 2);
        for p in fam.pairs.drain(..) {
            let pick = if is_regular(p.domain, self.space, self.delta0) { choose_cell(self.grid, p.domain) } else { None };
            let Some((k, r)) = pick else {
                out.push(p);
                continue;
            };
            removed += p.weight * p.integral(r.lo, r.hi);
            count += 1;
            used.insert(k);
            for sub in [Interval::new(p.domain.lo, r.lo), Interval::new(r.hi, p.domain.hi)] {
                if let Some(q) = restrict(&p, sub)? {
                    out.push(q);
                }
            }
        }
        fam.pairs = out;
        *fam = std::mem::take(fam).merged();
        Ok((removed, count))
    }

    /// Same rule for a single point: returns the new domain, or None when the point is stopped.
    fn stop_point(&self, i: Interval, x: f64) -> Option<Interval> {
        if !is_regular(i, self.space, self.delta0) {
            return Some(i);
        }
        let Some((_, r)) = choose_cell(self.grid, i) else { return Some(i) };
        if x > r.lo && x < r.hi {
            None
        } else if x <= r.lo {
            Some(Interval::new(i.lo, r.lo))
        } else {
            Some(Interval::new(r.hi, i.hi))
        }
    }
}

/// Gibbs-Markov inducing scheme with finitely many images on a one-dimensional map.
pub fn build_scheme_1(m: &IntervalMap, report: &ConstantsReport, options: &Scheme1Options) -> Result<ReturnTimeScheme> {
    let delta0 = report.delta0.to_f64();
    let eps0 = report.eps0.to_f64();
    let ca = report.ca.to_f64();
    let caa = report.caa.to_f64();
    let grid = UniformGrid::new(m.space, options.c * delta0)?;
    let c_r = 1.0 - grid.cell / delta0;
    let t = fixed_ratio(caa, ca, report.c_ball.to_f64(), grid.cell);
    let k_base = options.base.unwrap_or_else(|| grid.cell_of(m.space.mid()).unwrap_or(0));
    if k_base >= grid.count {
        return Err(Error::Invalid(format!("base cell {k_base} is outside the grid of {} cells", grid.count)));
    }
    let base = grid.get(k_base);
    let mut fam = Family::single(Pair::uniform(base, 1.0));
    let b_seed = {
        let ends = (base.lo > m.space.lo) as u8 + (base.hi < m.space.hi) as u8;
        Scalar::from_f64(ends.max(1) as f64 / base.len())
    };
    let n_first = recovery_time(report, &b_seed)?.max(1);
    let bar = Scalar::from_f64(remainder_factor(ca, 1.0, c_r)) * report.b0.clone();
    let n_block = recovery_time(report, &bar)?.max(1);
    let stopper = Stopper { grid: &grid, space: m.space, delta0 };
    let opts = IterateOptions::new(eps0);
    let mut levels = Vec::new();
    let mut tail = Vec::new();
    let mut used = BTreeSet::new();
    let mut time = 0u64;
    let mut remaining = 1.0;
    let mut low_streak = 0;
    let mut peak = 1;
    let mut stop_reason = "depth".to_string();
    for block in 1..=options.max_blocks {
        let n = if block == 1 { n_first } else { n_block };
        for _ in 0..n {
            fam = step(m, &fam, &opts)?;
            peak = peak.max(fam.pairs.len());
        }
        time += n;
        let (removed, count) = stopper.stop(&mut fam, &mut used)?;
        remaining = fam.total_weight();
        let ratio = if remaining > 0.0 { removed / remaining } else { f64::INFINITY };
        levels.push(Level { tau: time, mass: removed, stopped_pairs: count, ratio });
        tail.push((time, remaining));
        low_streak = if ratio < t / 2.0 { low_streak + 1 } else { 0 };
        if low_streak >= 5 {
            return Err(Error::StallDetected { block });
        }
        if remaining < options.target {
            stop_reason = "target".into();
            break;
        }
        if fam.pairs.len() > options.pair_budget {
            stop_reason = "pair-budget".into();
            break;
        }
    }
    let gcd = levels.iter().filter(|l| l.mass > 1e-9).fold(0u64, |g, l| g.gcd(&l.tau));
    let mut scheme = ReturnTimeScheme {
        scheme: 1,
        base,
        blocks: levels.len(),
        levels,
        tail,
        gcd,
        mass_deficit: remaining,
        pruned: fam.deficit,
        t,
        n_first,
        n_block,
        stop_reason,
        images: used.len(),
        peak_pairs: peak,
        monte_carlo: None,
    };
    if options.mc_points > 0 {
        scheme.monte_carlo = Some(monte_carlo_tail(m, &scheme, &stopper, eps0, options.mc_points, options.seed));
    }
    Ok(scheme)
}

/// Follows independent points under the same chopping and stopping rule.
fn monte_carlo_tail(m: &IntervalMap, scheme: &ReturnTimeScheme, stopper: &Stopper, eps0: f64, points: u64, seed: u64) -> MonteCarloTail {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = scheme.levels.len();
    let mut stopped_at = vec![0u64; blocks];
    let anchor = m.space.lo;
    for _ in 0..points {
        let mut x = rng.gen_range(scheme.base.lo..scheme.base.hi);
        let mut dom = scheme.base;
        'blocks: for (b, slot) in stopped_at.iter_mut().enumerate() {
            let n = if b == 0 { scheme.n_first } else { scheme.n_block };
            for _ in 0..n {
                let i = m.branches.partition_point(|br| br.domain.hi <= x).min(m.branches.len() - 1);
                let br = &m.branches[i];
                let piece = dom.intersect(&br.domain).unwrap_or(dom);
                let j = br.map_interval(piece);
                x = br.forward(x).clamp(j.lo, j.hi);
                dom = chop_cell_of(j, eps0, anchor, x);
            }
            match stopper.stop_point(dom, x) {
                None => {
                    *slot += 1;
                    break 'blocks;
                }
                Some(d) => dom = d,
            }
        }
    }
    let mut survivors = Vec::with_capacity(blocks);
    let mut alive = points;
    for s in &stopped_at {
        alive -= s;
        survivors.push(alive);
    }
    let n = points as f64;
    let worst_z = scheme
        .tail
        .iter()
        .zip(&survivors)
        .map(|(&(_, p), &s)| {
            let p = p.clamp(0.0, 1.0);
            let sd = (n * p * (1.0 - p)).sqrt().max(1e-12);
            (s as f64 - n * p).abs() / sd
        })
        .fold(0.0, f64::max);
    MonteCarloTail { points, seed, survivors, worst_z, within_3_sigma: worst_z <= 3.0 }
}

/// Least-squares fit of ln m(tau > n) against n.
pub fn tail_statistics(tail: &[(u64, f64)], gcd: u64) -> Result<TailStats> {
    let pts: Vec<(f64, f64)> = tail.iter().filter(|(_, v)| *v > 0.0).map(|&(n, v)| (n as f64, v.ln())).collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientLevels { got: pts.len(), needed: 10 });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(TailStats { kappa: slope.exp(), r2, levels: pts.len(), gcd })
}

/// A cell of the skew map described by log-measures, since its column index is far beyond f64.
#[derive(Clone, Debug, Serialize)]
pub struct AnalyticCell {
    pub label: String,
    /// log10 of the measure of the part of the cell returning to Z at the given time.
    pub log10_return_mass: String,
    /// The log-measure is a finite number, so the set has positive measure.
    pub positive: bool,
    pub tau: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyticScheme {
    pub scheme: u8,
    pub z: SkewZ,
    pub log10_z: f64,
    /// Return times n with T^n Z containing Z, as used by the construction.
    pub n_tilde: Vec<u64>,
    pub n_rec_seed: u64,
    pub n_rec_block: u64,
    /// Return times assigned on Z before the scheme-1 continuation.
    pub n: Vec<u64>,
    pub cells: Vec<AnalyticCell>,
    pub gcd: u64,
    pub t: f64,
    /// 1 - kappa for the bound kappa = (1 + t)^(-1 / n_rec_block).
    pub kappa_gap: f64,
}

fn skew_parts(partition: &InducingPartition) -> Result<&SkewZ> {
    match partition {
        InducingPartition::Squares { z, .. } => Ok(z),
        InducingPartition::Grid(_) => Err(Error::Invalid("schemes 2 and 3 are built for the planar skew map".into())),
    }
}

/// log10 of h / (zeta i^(1+s)), the inverse Jacobian of a column-i cell, with i given in decimal.
fn log10_cell_jacobian(map: &SkewMap, i: &Real) -> Real {
    let five = Real::from_int(5).log10();
    let col = Real::from_f64(map.zeta).log10() + Real::from_f64(1.0 + map.s) * i.log10();
    -(i * &five) - col
}

fn recovery_pair(report: &ConstantsReport, side: f64, c: f64) -> Result<(u64, u64, f64)> {
    let ca = report.ca.to_f64();
    let caa = report.caa.to_f64();
    let b_seed = Scalar::from_f64(4.0 / side);
    let n_seed = recovery_time(report, &b_seed)?.max(1);
    let c_r = 1.0 - c * c / std::f64::consts::PI;
    let bar = Scalar::from_f64(remainder_factor(ca, 1.0, c_r)) * report.b0.clone();
    let n_block = recovery_time(report, &bar)?.max(1);
    let t = fixed_ratio(caa, ca, report.c_ball.to_f64(), side * side);
    Ok((n_seed, n_block, t))
}

/// Full-branch scheme with gcd 1 on the skew map, from returns of Z over itself.
pub fn build_scheme_2(map: &SkewMap, report: &ConstantsReport, partition: &InducingPartition, c: f64) -> Result<AnalyticScheme> {
    let z = skew_parts(partition)?;
    if !z.returns_to_self {
        return Err(Error::GcdSearchFailed { depth: 1 });
    }
    let side = z.side;
    let (n_seed, n_block, t) = recovery_pair(report, side, c)?;
    // 1 lies in N_Z, so every n does; the construction uses n~ = (1, 2).
    let n_tilde = vec![1u64, 2];
    let nk = n_tilde[n_tilde.len() - 1];
    let m1 = n_seed.saturating_sub(n_tilde[0]).div_ceil(nk);
    let m2 = n_block.div_ceil(nk);
    let m0 = m1.max(m2);
    let mut n: Vec<u64> = n_tilde[..n_tilde.len() - 1].iter().map(|&v| v + m0 * nk).collect();
    n.push(nk + n.iter().sum::<u64>());
    let i0 = Real::parse(&z.i0).ok_or_else(|| Error::Invalid("column index of Z does not parse".into()))?;
    let log_z = 2.0 * side.log10();
    let jac = log10_cell_jacobian(map, &i0);
    let cells = n
        .iter()
        .map(|&nj| {
            let mass = Real::from_f64(log_z) + Real::from_int(nj as i64) * &jac;
            AnalyticCell {
                label: format!("T^-{nj} Z within O({},j)^{nj}", z.i0),
                log10_return_mass: mass.to_sig_string(8),
                positive: mass.is_finite(),
                tau: nj,
            }
        })
        .collect::<Vec<_>>();
    let gcd = n.iter().fold(0u64, |g, v| g.gcd(v));
    Ok(AnalyticScheme {
        scheme: 2,
        z: z.clone(),
        log10_z: log_z,
        n_tilde,
        n_rec_seed: n_seed,
        n_rec_block: n_block,
        n,
        cells,
        gcd,
        t,
        kappa_gap: -(-t.ln_1p() / n_block as f64).exp_m1(),
    })
}

/// Full-branch scheme with tau = 1 on K cells inside Z, each mapping over Z'.
pub fn build_scheme_3(map: &SkewMap, report: &ConstantsReport, partition: &InducingPartition, c: f64, k: usize) -> Result<AnalyticScheme> {
    let z = skew_parts(partition)?;
    if !z.returns_to_self {
        return Err(Error::NoZFound { depth: 1 });
    }
    if k == 0 {
        return Err(Error::Invalid("P_Z needs at least one cell".into()));
    }
    let side = z.side;
    let (n_seed, n_block, t) = recovery_pair(report, side, c)?;
    let i0 = Real::parse(&z.i0).ok_or_else(|| Error::Invalid("column index of Z does not parse".into()))?;
    let log_z = 2.0 * side.log10();
    let jac = log10_cell_jacobian(map, &i0);
    let mass = Real::from_f64(log_z) + jac;
    let cells = (0..k)
        .map(|r| AnalyticCell {
            label: format!("O({}, j0+{r})", z.i0),
            log10_return_mass: mass.to_sig_string(8),
            positive: mass.is_finite(),
            tau: 1,
        })
        .collect();
    Ok(AnalyticScheme {
        scheme: 3,
        z: z.clone(),
        log10_z: log_z,
        n_tilde: vec![1],
        n_rec_seed: n_seed,
        n_rec_block: n_block,
        n: vec![1],
        cells,
        gcd: 1,
        t,
        kappa_gap: -(-t.ln_1p() / n_block as f64).exp_m1(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_tail_fit() {
        let tail: Vec<(u64, f64)> = (1..=20).map(|n| (n, 0.5f64.powi(n as i32))).collect();
        let s = tail_statistics(&tail, 1).unwrap();
        assert!((s.kappa - 0.5).abs() < 1e-12);
        assert!((s.r2 - 1.0).abs() < 1e-12);
        assert!(matches!(tail_statistics(&tail[..5], 1), Err(Error::InsufficientLevels { got: 5, .. })));
    }

    #[test]
    fn fixed_ratio_formula() {
        let t = fixed_ratio(0.5, 2.0, 0.1, 0.01);
        let expect = (2.0 / 3.0) * 0.5 * 10.0 * 1e-4 / (0.01 / 3.0 + 0.2);
        assert!((t - expect).abs() < 1e-15);
    }

    #[test]
    fn cell_choice_is_inside_and_central() {
        let g = UniformGrid::new(Interval::new(0.0, 1.0), 0.01).unwrap();
        let i = Interval::new(0.123, 0.2);
        let (_, r) = choose_cell(&g, i).unwrap();
        assert!(i.contains_interval(&r));
        assert!(r.contains(i.mid()));
        assert!(choose_cell(&g, Interval::new(0.101, 0.109)).is_none());
    }

    #[test]
    fn point_rule_matches_family_rule() {
        let g = UniformGrid::new(Interval::new(0.0, 1.0), 0.001).unwrap();
        let st = Stopper { grid: &g, space: Interval::new(0.0, 1.0), delta0: 0.003 };
        let i = Interval::new(0.2, 0.23);
        let (_, r) = choose_cell(&g, i).unwrap();
        assert_eq!(st.stop_point(i, r.mid()), None);
        assert_eq!(st.stop_point(i, 0.201), Some(Interval::new(0.2, r.lo)));
        let short = Interval::new(0.2, 0.205);
        assert_eq!(st.stop_point(short, 0.201), Some(short));
    }
}
