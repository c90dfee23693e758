use serde::Serialize;

use super::pieces;
use crate::error::{Error, Result};
use crate::map::fixtures::{H5Rule, Hints};
use crate::map::{Interval, IntervalMap, Kind, MapSpec};
use crate::real::Scalar;

pub const SEARCH_CAP: usize = 200;
const MAX_TILES: usize = 4096;

/// Lower bound on max_j z_j a_j over splittings sum a_j = c.
pub fn largest_piece_bound(z: &[f64], c: f64) -> Result<f64> {
    if z.is_empty() || z.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Invalid("expansion factors must be positive".into()));
    }
    Ok(c / z.iter().map(|v| 1.0 / v).sum::<f64>())
}

/// One run of the interval-growth argument starting from a tile.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthTrace {
    pub tile: Interval,
    pub steps: usize,
    pub word: Vec<usize>,
    /// Sub-interval of the tile carried along by the chosen branches.
    pub sub: Interval,
    pub image: Interval,
    pub min_jacobian: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct H5Data {
    pub rule: String,
    pub c_x: Scalar,
    pub delta1: Scalar,
    pub n_tilde: u64,
    pub n_delta: u64,
    pub delta_delta: Scalar,
    pub gamma_n: Scalar,
    pub omega: Interval,
    pub s_h: Option<Scalar>,
    pub delta_max: Option<Scalar>,
    pub empirical_n: Option<u64>,
    pub tiles_checked: usize,
    pub q_sample: Vec<GrowthTrace>,
}

fn covers_element(m: &IntervalMap, iv: Interval, unbounded: bool) -> bool {
    if unbounded && iv.len() >= 1.0 {
        return true;
    }
    m.meeting(iv).any(|i| iv.contains_interval(&m.branches[i].domain))
}

/// Follow the largest image piece until the image contains a partition element.
///
/// `avoid` removes the one-sided neighbourhoods (k - avoid, k) of the integers, where the
/// half-line map has unbounded derivative.
pub fn interval_growth(m: &IntervalMap, tile: Interval, cap: usize, avoid: Option<f64>) -> Result<GrowthTrace> {
    let unbounded = !m.space.hi.is_finite();
    let mut current = tile;
    let mut word = Vec::new();
    let mut min_jac = 1.0;
    while !covers_element(m, current, unbounded) {
        if word.len() >= cap {
            return Err(Error::SearchDiverged { cap });
        }
        let mut best: Option<(usize, Interval, Interval)> = None;
        for (i, mut p) in pieces(m, current) {
            if let Some(a) = avoid {
                if matches!(m.branches[i].kind, Kind::Reciprocal { .. }) {
                    p.hi = p.hi.min(m.branches[i].domain.hi - a);
                    if p.is_empty() {
                        continue;
                    }
                }
            }
            let img = m.branches[i].map_interval(p);
            if best.as_ref().is_none_or(|(_, _, bi)| img.len() > bi.len()) {
                best = Some((i, p, img));
            }
        }
        let (i, _, img) = best.ok_or(Error::SearchDiverged { cap })?;
        let b = &m.branches[i];
        let hi = if img.hi.is_finite() { img.hi } else { img.lo + 1e6 };
        min_jac *= b.jac(img.lo).min(b.jac(hi));
        word.push(i);
        current = img;
    }
    let mut sub = current;
    for &i in word.iter().rev() {
        sub = m.branches[i].pull_interval(sub);
    }
    Ok(GrowthTrace { tile, steps: word.len(), word, sub, image: current, min_jacobian: min_jac })
}

fn tiles(m: &IntervalMap, delta1: f64) -> Vec<Interval> {
    let hi = if m.space.hi.is_finite() { m.space.hi } else { m.materialized_hi().min(20.0) };
    let count = ((hi - m.space.lo) / delta1).floor() as usize;
    let mut out = Vec::new();
    if count == 0 {
        return out;
    }
    let stride = (count / MAX_TILES).max(1);
    let mut k = 0;
    while k < count {
        let lo = m.space.lo + k as f64 * delta1;
        out.push(Interval::new(lo, lo + delta1));
        k += stride;
    }
    for c in m.cut_points().into_iter().filter(|&c| c < hi - delta1) {
        let k = ((c - m.space.lo) / delta1).floor();
        let lo = m.space.lo + k * delta1;
        out.push(Interval::new(lo, lo + delta1));
    }
    out
}

/// Empirical maximum number of growth steps over sampled tiles of length delta1.
fn empirical(m: &IntervalMap, delta1: f64, avoid: Option<f64>) -> Result<(u64, usize, Vec<GrowthTrace>)> {
    let tiles = tiles(m, delta1);
    let mut worst = 0;
    let mut sample = Vec::new();
    for (k, t) in tiles.iter().enumerate() {
        let g = interval_growth(m, *t, SEARCH_CAP, avoid)?;
        worst = worst.max(g.steps);
        if k % (tiles.len() / 16).max(1) == 0 && sample.len() < 16 {
            sample.push(g);
        }
    }
    Ok((worst as u64, tiles.len(), sample))
}

fn is_affine(k: &Kind) -> bool {
    matches!(k, Kind::Affine { .. })
}

/// Smallest value of Jh over all inverse branches; exact for affine branches.
fn inf_jacobian(m: &IntervalMap) -> Scalar {
    m.branches
        .iter()
        .map(|b| match (&b.contraction, is_affine(&b.kind)) {
            (Some(c), true) => c.clone(),
            _ => {
                let hi = if b.image.hi.is_finite() { b.image.hi } else { b.image.lo + 1e3 };
                let n = 1000;
                let v = (0..=n)
                    .map(|k| b.jac(b.image.lo + (hi - b.image.lo) * k as f64 / n as f64))
                    .fold(f64::INFINITY, f64::min);
                Scalar::from_f64(v)
            }
        })
        .reduce(|a, b| a.min(&b))
        .unwrap_or_else(|| Scalar::int(1))
}

/// H5: N_delta, the overlap set, Delta and Gamma for a one-dimensional map.
pub fn positively_linked_search(
    spec: &MapSpec,
    hints: &Hints,
    delta0: &Scalar,
    eps0: &Scalar,
    m_const: u64,
) -> Result<H5Data> {
    let m = spec.require_interval()?;
    let delta1 = delta0.clone() / Scalar::int(3);
    let d1 = delta1.to_f64();
    let omega_len = eps0.clone() / Scalar::int(3);
    let omega = Interval::new(m.space.lo, m.space.lo + omega_len.to_f64());
    let mut data = H5Data {
        rule: String::new(),
        c_x: Scalar::int(1),
        delta1: delta1.clone(),
        n_tilde: 0,
        n_delta: 0,
        delta_delta: omega_len.clone(),
        gamma_n: Scalar::int(0),
        omega,
        s_h: None,
        delta_max: None,
        empirical_n: None,
        tiles_checked: 0,
        q_sample: vec![],
    };
    match &hints.h5 {
        H5Rule::AdjacentGrowth => {
            if m.generator.is_some() {
                return Err(Error::Invalid("adjacent-growth linking needs a finite partition".into()));
            }
            let lam = m
                .branches
                .iter()
                .map(|b| b.contraction.clone().ok_or_else(|| Error::Invalid(format!("branch {} declares no contraction", b.id))))
                .collect::<Result<Vec<_>>>()?;
            let lens: Vec<Scalar> = m.branches.iter().map(|b| Scalar::from_f64(b.domain.len())).collect();
            let pair_max = |v: &[Scalar]| {
                if v.len() == 1 {
                    return v[0].clone();
                }
                v.windows(2).map(|w| w[0].clone() + w[1].clone()).reduce(|a, b| a.max(&b)).unwrap()
            };
            let s_h = pair_max(&lam);
            let delta_max = pair_max(&lens);
            if s_h.to_f64() >= 1.0 {
                return Err(Error::SearchDiverged { cap: SEARCH_CAP });
            }
            let ratio = (delta1.clone() / delta_max.clone()).ln() / s_h.ln();
            let n_tilde = ratio.ceil_int().and_then(|n| i64::try_from(n).ok()).unwrap_or(i64::MAX).max(0) as u64;
            if n_tilde as usize > SEARCH_CAP {
                return Err(Error::SearchDiverged { cap: SEARCH_CAP });
            }
            let images = m.branches.iter().fold(m.space, |acc, b| Interval::new(acc.lo.max(b.image.lo), acc.hi.min(b.image.hi)));
            if images.len() < omega_len.to_f64() || images.lo > m.space.lo {
                return Err(Error::Invalid("branch images share no common overlap of length eps0/3".into()));
            }
            data.rule = "adjacent-growth".into();
            data.n_tilde = n_tilde;
            data.n_delta = (n_tilde + 1).max(m_const);
            data.gamma_n = inf_jacobian(m).powi(data.n_delta as i64);
            data.s_h = Some(s_h);
            data.delta_max = Some(delta_max);
            let (emp, tiles, sample) = empirical(m, d1, None)?;
            data.empirical_n = Some(emp);
            data.tiles_checked = tiles;
            data.q_sample = sample;
        }
        H5Rule::HalfLine { s, t } => {
            let s_h = Scalar::frac(1, 10) + t.clone() * t.clone();
            let bound = (Scalar::int(1) - s_h.clone()).min(&(Scalar::int(1) / (delta1.clone() * Scalar::frac(21, 2).sqrt())));
            if s.cmp_value(&bound) != std::cmp::Ordering::Less {
                return Err(Error::Invalid("avoidance parameter s is too large".into()));
            }
            let mut n = 0u64;
            loop {
                let geom: Scalar = (0..n).map(|j| s_h.powi(j as i64)).fold(Scalar::int(0), |a, b| a + b);
                let lhs = delta1.clone() * (Scalar::int(1) - s.clone() * geom) / s_h.powi(n as i64);
                if lhs.cmp_value(&Scalar::int(1)) != std::cmp::Ordering::Less {
                    break;
                }
                n += 1;
                if n as usize > SEARCH_CAP {
                    return Err(Error::SearchDiverged { cap: SEARCH_CAP });
                }
            }
            data.rule = "half-line".into();
            data.n_tilde = n;
            data.n_delta = (n + 2).max(m_const);
            data.gamma_n = (s.clone() * delta1.clone()).powi(2 * data.n_delta as i64);
            data.s_h = Some(s_h);
            let (emp, tiles, sample) = empirical(m, d1, Some(s.to_f64() * d1))?;
            data.empirical_n = Some(emp);
            data.tiles_checked = tiles;
            data.q_sample = sample;
        }
        H5Rule::Doubling => {
            let n = (Scalar::int(3) / delta0.clone()).ln() / Scalar::int(2).ln();
            let n = n.ceil_int().and_then(|v| u64::try_from(v).ok()).unwrap_or(u64::MAX);
            data.rule = "doubling".into();
            data.n_tilde = n;
            data.n_delta = n.max(m_const);
            data.gamma_n = Scalar::frac(1, 2).powi(data.n_delta as i64);
            let (emp, tiles, sample) = empirical(m, d1, None)?;
            data.empirical_n = Some(emp);
            data.tiles_checked = tiles;
            data.q_sample = sample;
        }
        H5Rule::Unavailable => {
            return Err(Error::Invalid("no positively linked construction is available for this map".into()));
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fixtures;

    fn brute_force(z: &[f64], c: f64) -> f64 {
        let n = 4000;
        (0..=n)
            .map(|k| {
                let a = c * k as f64 / n as f64;
                (z[0] * a).max(z[1] * (c - a))
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn largest_piece_examples() {
        assert!((largest_piece_bound(&[2.0, 2.0], 1.0).unwrap() - 1.0).abs() < 1e-15);
        let b = largest_piece_bound(&[10.0, 100.0], 1.0).unwrap();
        assert!((b - 100.0 / 11.0).abs() < 1e-12);
        assert!((b - brute_force(&[10.0, 100.0], 1.0)).abs() < 1e-2);
        let b = largest_piece_bound(&[2.0, 4.0], 0.1).unwrap();
        assert!((b - 2.0 / 15.0).abs() < 1e-15);
        assert!((b - brute_force(&[2.0, 4.0], 0.1)).abs() < 1e-3);
    }

    #[test]
    fn doubling_growth_by_direct_iteration() {
        let f = fixtures::doubling();
        let m = f.spec.interval_map().unwrap();
        let delta0 = 0.01;
        let n = (3.0f64 / delta0).log2().ceil() as usize;
        for k in 0..50 {
            let lo = k as f64 * 0.0191 + 0.0003;
            let g = interval_growth(m, Interval::new(lo, lo + delta0 / 3.0), 200, None).unwrap();
            assert!(g.steps <= n);
            assert!((g.image.len() - g.sub.len() * 2f64.powi(g.steps as i32)).abs() < 1e-9);
        }
    }
}
