//! Coupling of two standard families: constant splitting, overlap extraction, recovery.

use serde::Serialize;

use crate::constants::ConstantsReport;
use crate::error::{Error, Result};
use crate::family::{fine_eps_grid, step, Family, IterateOptions, Pair, NODES};
use crate::map::{Interval, IntervalMap};
use crate::transfer::{self, GridDensity, GridOptions};

/// Everything the coupling loop needs from a constants report, in f64.
#[derive(Clone, Debug, Serialize)]
pub struct CouplingParams {
    pub eps0: f64,
    pub a0: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub dtilde: f64,
    pub c_split: f64,
    pub m_min: u64,
    pub n_delta: u64,
    pub n1: u64,
    pub recovery: u64,
    pub b0: f64,
    pub omega: Interval,
    pub delta_delta: f64,
    pub c_gamma1: f64,
    pub ln_gamma2: f64,
}

impl CouplingParams {
    pub fn from_report(r: &ConstantsReport) -> Result<Self> {
        let h5 = r.h5.as_ref().ok_or_else(|| Error::Invalid("coupling needs a linking certificate".into()))?;
        let rate = r.rate.as_ref().ok_or_else(|| Error::Invalid("coupling needs the rate chain".into()))?;
        Ok(CouplingParams {
            eps0: r.eps0.to_f64(),
            a0: r.a0.to_f64(),
            alpha: r.alpha.to_f64(),
            lambda: r.lambda.to_f64(),
            dtilde: r.dtilde.to_f64(),
            c_split: r.c_split.to_f64(),
            m_min: r.m,
            n_delta: h5.n_delta,
            n1: r.n1,
            recovery: r.n1.max(r.n2.unwrap_or(0)),
            b0: r.b0.to_f64(),
            omega: h5.omega,
            delta_delta: h5.delta_delta.to_f64(),
            c_gamma1: rate.c_gamma1.to_f64(),
            ln_gamma2: rate.ln_gamma2.to_f64(),
        })
    }

    /// 2 C_{gamma1} gamma2^m.
    pub fn bound(&self, m: usize) -> f64 {
        2.0 * self.c_gamma1 * (m as f64 * self.ln_gamma2).exp()
    }
}

/// A pair written as a constant part plus a remainder.
#[derive(Clone, Debug, Serialize)]
pub struct Split {
    /// Uniform density on the domain; its weight is c w' m(I).
    pub constant: Pair,
    pub remainder: Pair,
}

/// Splits off the constant c * partner_weight from w rho.
pub fn split_pair(p: &Pair, partner_weight: f64, c: f64) -> Result<Split> {
    if !(partner_weight > 0.0) || partner_weight > p.weight * (1.0 + 1e-12) {
        return Err(Error::Invalid("partner weight must lie in (0, w]".into()));
    }
    let inf = p.inf();
    if inf < 2.0 * c * (1.0 - 1e-9) {
        return Err(Error::DensityTooSmall { inf, two_c: 2.0 * c });
    }
    let level = c * partner_weight;
    let len = p.domain.len();
    let constant = Pair::uniform(p.domain, level * len);
    let rem_w = p.weight - level * len;
    let log_rho = (0..NODES)
        .map(|k| (p.weight * p.log_rho[k].exp() - level).ln() - rem_w.ln())
        .collect();
    Ok(Split { constant, remainder: Pair { domain: p.domain, log_rho, weight: rem_w } })
}

/// Splits two pairs with w2 <= w1 so that both constant parts equal c w2.
pub fn split_constant(p1: &Pair, p2: &Pair, c: f64) -> Result<(Split, Split)> {
    if !(p2.weight > 0.0) || p2.weight > p1.weight {
        return Err(Error::Invalid("split_constant needs 0 < w2 <= w1".into()));
    }
    Ok((split_pair(p1, p2.weight, c)?, split_pair(p2, p2.weight, c)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct Extracted {
    /// Weight of the part on the overlap set.
    pub removed: f64,
    /// Uniform pairs on the components of I minus the closure of the overlap set.
    pub pieces: Vec<Pair>,
}

/// Cuts a constant pair along the overlap set.
pub fn extract_overlap(constant: &Pair, omega: Interval, delta: f64) -> Result<Extracted> {
    if omega.len() < delta * (1.0 - 1e-12) {
        return Err(Error::OverlapTooSmall { measure: omega.len(), delta });
    }
    let i = constant.domain;
    if !i.contains_interval(&omega) {
        return Err(Error::Invalid(format!("overlap set {omega} is not inside {i}")));
    }
    let level = constant.weight / i.len();
    let pieces = [Interval::new(i.lo, omega.lo), Interval::new(omega.hi, i.hi)]
        .into_iter()
        .filter(|c| c.len() > 0.0)
        .map(|c| Pair::uniform(c, level * c.len()))
        .collect();
    Ok(Extracted { removed: level * omega.len(), pieces })
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockReport {
    pub round: usize,
    /// Steps from the start of the block to the coupling.
    pub coupled_at: usize,
    pub weight_a: f64,
    pub weight_b: f64,
    pub removed: f64,
    pub uncoupled_before: f64,
    pub uncoupled_after: f64,
    /// Largest H over the iterated pairs, before the coupling.
    pub h_iterated: f64,
    /// Largest H of the remainders right after splitting.
    pub h_split: f64,
    /// Largest H after n1 steps of recovery.
    pub h_after_n1: f64,
    pub h_recovered: f64,
    pub properness: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingState {
    pub family_a: Family,
    pub family_b: Family,
    pub round: usize,
    /// |A| = |B| after each step.
    pub uncoupled_series: Vec<f64>,
    pub l1_series: Vec<f64>,
    /// Largest deviation of rho_A - rho_B from the directly evolved difference, per step.
    pub difference_error: Vec<f64>,
    /// Weight lost to pruning in A and B.
    pub deficit: (f64, f64),
}

struct Oracle {
    a: GridDensity,
    b: GridDensity,
    opts: GridOptions,
}

fn probe_points(space: Interval) -> Vec<f64> {
    let n = 997;
    (0..n).map(|k| space.lo + space.len() * (k as f64 + 0.5 + 0.123_456_789) / (n as f64 + 1.0)).collect()
}

fn difference_error(a: &Family, b: &Family, o: &Oracle, pts: &[f64]) -> f64 {
    let (ia, ib) = (a.index(), b.index());
    let near_break = |x: f64| o.a.breaks.iter().chain(&o.b.breaks).any(|&p| (p - x).abs() < 1e-9);
    pts.iter()
        .filter(|&&x| !near_break(x))
        .map(|&x| ((ia.density(x) - ib.density(x)) - (o.a.eval(x) - o.b.eval(x))).abs())
        .fold(0.0, f64::max)
}

fn covers(p: &Pair, omega: Interval) -> bool {
    p.domain.contains_interval(&omega)
}

struct Runner<'a> {
    map: &'a IntervalMap,
    params: &'a CouplingParams,
    oracle: Option<Oracle>,
    probes: Vec<f64>,
}

impl Runner<'_> {
    fn advance(&mut self, st: &mut CouplingState, opts: &IterateOptions) -> Result<f64> {
        st.family_a = step(self.map, &st.family_a, opts)?;
        st.family_b = step(self.map, &st.family_b, opts)?;
        let h = st.family_a.max_holder(self.params.alpha).max(st.family_b.max_holder(self.params.alpha));
        self.record(st)?;
        Ok(h)
    }

    fn record(&mut self, st: &mut CouplingState) -> Result<()> {
        st.uncoupled_series.push(*st.uncoupled_series.last().unwrap_or(&1.0));
        st.l1_series.push(st.family_a.l1_distance(&st.family_b));
        if let Some(o) = &mut self.oracle {
            o.a = transfer::apply_once(self.map, &o.a, o.opts)?;
            o.b = transfer::apply_once(self.map, &o.b, o.opts)?;
            st.difference_error.push(difference_error(&st.family_a, &st.family_b, o, &self.probes));
        }
        st.deficit = (st.family_a.deficit, st.family_b.deficit);
        Ok(())
    }

    fn block(&mut self, st: &mut CouplingState) -> Result<BlockReport> {
        let p = self.params;
        let omega = p.omega;
        let protect = IterateOptions { protect: Some(omega), ..IterateOptions::new(p.eps0) };
        let mut h_iterated: f64 = 0.0;
        let mut k = 0usize;
        loop {
            h_iterated = h_iterated.max(self.advance(st, &protect)?);
            k += 1;
            let ready = k as u64 >= p.m_min
                && st.family_a.pairs.iter().any(|q| covers(q, omega))
                && st.family_b.pairs.iter().any(|q| covers(q, omega));
            if ready {
                break;
            }
            if k as u64 >= p.n_delta {
                return Err(Error::OverlapTooSmall { measure: 0.0, delta: p.delta_delta });
            }
        }
        let weight_a: f64 = st.family_a.pairs.iter().filter(|q| covers(q, omega)).map(|q| q.weight).sum();
        let weight_b: f64 = st.family_b.pairs.iter().filter(|q| covers(q, omega)).map(|q| q.weight).sum();
        let matched = weight_a.min(weight_b);
        let removed = p.c_split * matched * omega.len();
        let mut h_split: f64 = 0.0;
        for (fam, w) in [(&mut st.family_a, weight_a), (&mut st.family_b, weight_b)] {
            let share = (matched / w).min(1.0);
            let mut out = Vec::with_capacity(fam.pairs.len() + 4);
            for q in fam.pairs.drain(..) {
                if !covers(&q, omega) {
                    out.push(q);
                    continue;
                }
                let s = split_pair(&q, share * q.weight, p.c_split)?;
                h_split = h_split.max(s.remainder.holder(p.alpha));
                let e = extract_overlap(&s.constant, omega, p.delta_delta)?;
                out.push(s.remainder);
                out.extend(e.pieces);
            }
            fam.pairs = out;
            *fam = std::mem::take(fam).merged();
        }
        let before = *st.uncoupled_series.last().unwrap_or(&1.0);
        let after = before - removed;
        if let Some(last) = st.uncoupled_series.last_mut() {
            *last = after;
        }
        if let Some(o) = &self.oracle {
            if let Some(e) = st.difference_error.last_mut() {
                *e = e.max(difference_error(&st.family_a, &st.family_b, o, &self.probes));
            }
        }
        let plain = IterateOptions::new(p.eps0);
        let mut h_after_n1 = f64::NAN;
        let mut h_recovered = 0.0;
        for j in 1..=p.recovery {
            h_recovered = self.advance(st, &plain)?;
            if j == p.n1 {
                h_after_n1 = h_recovered;
            }
        }
        if p.n1 == 0 {
            h_after_n1 = h_split;
        }
        if h_recovered > p.a0 * (1.0 + 1e-9) + 1e-9 && p.recovery > 0 {
            return Err(Error::RegularityNotRecovered { h: h_recovered, bound: p.a0 });
        }
        let space = self.map.space;
        let eps = fine_eps_grid(p.eps0);
        let pa = st.family_a.properness(&eps, space);
        let pb = st.family_b.properness(&eps, space);
        let properness = pa.max(pb);
        if properness > p.b0 {
            return Err(Error::PropernessNotRecovered { b: properness, b0: p.b0 });
        }
        st.round += 1;
        Ok(BlockReport {
            round: st.round,
            coupled_at: k,
            weight_a,
            weight_b,
            removed,
            uncoupled_before: before,
            uncoupled_after: after,
            h_iterated,
            h_split,
            h_after_n1,
            h_recovered,
            properness,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingRun {
    pub state: CouplingState,
    pub blocks: Vec<BlockReport>,
    /// Least-squares per-step rate of the L1 series over its first `fit_window` steps.
    pub fitted_rate: f64,
    pub fit_window: usize,
    pub bound_violations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct CouplingOptions {
    pub rounds: usize,
    /// Evolve both densities directly alongside and compare their difference.
    pub oracle: bool,
    pub fit_window: usize,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions { rounds: 1, oracle: true, fit_window: 30 }
    }
}

/// Least-squares slope of ln(y) against the index, returned as exp(slope).
pub fn fitted_rate(series: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (i as f64, v.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxy / sxx).exp()
}

/// Runs `rounds` coupling blocks starting from two families of equal weight.
pub fn run_coupling(m: &IntervalMap, params: &CouplingParams, a: Family, b: Family, options: CouplingOptions) -> Result<CouplingRun> {
    let (wa, wb) = (a.total_weight(), b.total_weight());
    if (wa - wb).abs() > 1e-12 * wa.max(wb) {
        return Err(Error::Invalid(format!("families must have equal weight ({wa} vs {wb})")));
    }
    let grid = GridOptions::default();
    let oracle = options.oracle.then(|| Oracle {
        a: GridDensity::from_family(&a, grid),
        b: GridDensity::from_family(&b, grid),
        opts: grid,
    });
    let mut st = CouplingState {
        l1_series: vec![a.l1_distance(&b)],
        uncoupled_series: vec![wa],
        difference_error: if options.oracle { vec![0.0] } else { vec![] },
        family_a: a,
        family_b: b,
        round: 0,
        deficit: (0.0, 0.0),
    };
    let mut runner = Runner { map: m, params, oracle, probes: probe_points(m.space) };
    let mut blocks = Vec::with_capacity(options.rounds);
    for _ in 0..options.rounds {
        blocks.push(runner.block(&mut st)?);
    }
    let window = options.fit_window.min(st.l1_series.len() - 1);
    let fitted = fitted_rate(&st.l1_series[..=window]);
    let bound_violations = st.l1_series.iter().enumerate().filter(|(i, v)| **v > params.bound(*i)).count();
    Ok(CouplingRun { state: st, blocks, fitted_rate: fitted, fit_window: window, bound_violations })
}

/// Writes f + c as a standard family, with c = |f|_alpha / a0 + sup |f|.
pub fn holder_seed(space: Interval, eps0: f64, f: impl Fn(f64) -> f64 + Copy, holder_const: f64, sup: f64, a0: f64) -> Result<(Family, f64)> {
    let c = holder_const / a0 + sup;
    let fam = Family::from_density(space, eps0, move |x| f(x) + c)?;
    Ok((fam, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_split_closed_form() {
        let i = Interval::new(0.0, 0.03);
        let (p1, p2) = (Pair::uniform(i, 1.0), Pair::uniform(i, 1.0));
        let c = 13.0;
        let (s1, s2) = split_constant(&p1, &p2, c).unwrap();
        assert!((s1.remainder.weight - (1.0 - c * 0.03)).abs() < 1e-14);
        assert!((s2.constant.weight - c * 0.03).abs() < 1e-14);
        for x in [0.001, 0.015, 0.029] {
            let total = s1.constant.weight * s1.constant.density(x) + s1.remainder.weight * s1.remainder.density(x);
            assert!((total - 1.0 / 0.03).abs() < 1e-9);
        }
        assert!(split_constant(&p1, &Pair::uniform(i, 0.0), c).is_err());
        assert!(matches!(split_pair(&p1, 1.0, 20.0), Err(Error::DensityTooSmall { .. })));
    }

    #[test]
    fn split_of_extremal_density_stays_regular() {
        let (a0, eps0) = (25089.0 / 9025.0, 0.034497975);
        let i = Interval::new(0.1, 0.1 + eps0);
        let p = Pair::from_fn(i, 1.0, |x| (a0 * x).exp()).unwrap();
        let c = 0.5 / eps0 * (-a0 * eps0).exp();
        let s = split_pair(&p, 1.0, c).unwrap();
        assert!(s.remainder.holder(1.0) <= 2.0 * a0);
    }

    #[test]
    fn overlap_lengths() {
        let i = Interval::new(0.0, 0.03);
        let k = Pair::uniform(i, 0.3);
        let e = extract_overlap(&k, Interval::new(0.0, 0.01), 0.01).unwrap();
        assert!((e.removed - 0.1).abs() < 1e-15);
        assert_eq!(e.pieces.len(), 1);
        assert!((e.pieces[0].weight - 0.2).abs() < 1e-15);
        let all = extract_overlap(&k, i, 0.01).unwrap();
        assert!(all.pieces.is_empty() && (all.removed - 0.3).abs() < 1e-15);
        assert!(matches!(extract_overlap(&k, Interval::new(0.0, 0.001), 0.01), Err(Error::OverlapTooSmall { .. })));
    }

    #[test]
    fn geometric_rate_fit() {
        let s: Vec<f64> = (0..20).map(|k| 3.0 * 0.7f64.powi(k)).collect();
        assert!((fitted_rate(&s) - 0.7).abs() < 1e-12);
    }
}
