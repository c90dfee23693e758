use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::pieces;
use crate::error::{Error, Result};
use crate::map::{Interval, IntervalMap, MapSpec, Model, SkewMap};

const MIN_TRIALS: usize = 32;
/// Columns enumerated one by one before switching to the averaged strip model.
const COLUMN_ENUMERATION: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum TrialShape {
    Interval { lo: f64, hi: f64 },
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    Ball { cx: f64, cy: f64, r: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct WorstTrial {
    pub set: TrialShape,
    pub eps: f64,
    pub ratio: f64,
    pub placement: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplexityReport {
    pub sup: f64,
    pub limit: f64,
    pub trials: usize,
    pub eps4: f64,
    pub worst: Option<WorstTrial>,
    /// Largest ratio per placement category.
    pub by_placement: Vec<(String, f64)>,
}

/// 20 geometric points from `top / 1000` to `0.99 top`.
pub fn eps_grid(top: f64) -> Vec<f64> {
    let lo = top / 1000.0;
    let hi = 0.99 * top;
    (0..20).map(|k| lo * (hi / lo).powf(k as f64 / 19.0)).collect()
}

/// H3: sup over sampled sets and an eps grid of the complexity expression (n0 = 1).
pub fn check_complexity(
    spec: &MapSpec,
    n0: u32,
    eps4: f64,
    trials: usize,
    seed: u64,
    lambda: f64,
) -> Result<ComplexityReport> {
    if trials < MIN_TRIALS {
        return Err(Error::InsufficientTrials { needed: MIN_TRIALS, got: trials });
    }
    if n0 != 1 {
        return Err(Error::Invalid("only n0 = 1 is supported by the complexity sampler".into()));
    }
    let limit = 1.0 / lambda - 1.0;
    let grid = eps_grid(eps4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = match &spec.model {
        Model::Interval(m) => sets_1d(m, eps4, trials, &mut rng),
        Model::Skew(m) => sets_2d(m, eps4, trials, &mut rng),
    };
    let mut report = ComplexityReport { sup: 0.0, limit, trials: sets.len(), eps4, worst: None, by_placement: vec![] };
    for (set, placement) in &sets {
        for &eps in &grid {
            let (num, den) = match (&spec.model, set) {
                (Model::Interval(m), TrialShape::Interval { lo, hi }) => {
                    complexity_term_1d(m, Interval::new(*lo, *hi), eps, lambda)
                }
                (Model::Skew(m), s) => complexity_term_2d(m, s, eps, lambda),
                _ => unreachable!("trial shape matches the model"),
            };
            if den <= 0.0 {
                continue;
            }
            let ratio = num / den;
            match report.by_placement.iter_mut().find(|(p, _)| p == placement) {
                Some(e) => e.1 = e.1.max(ratio),
                None => report.by_placement.push((placement.to_string(), ratio)),
            }
            if ratio > report.sup {
                report.sup = ratio;
                report.worst = Some(WorstTrial { set: *set, eps, ratio, placement });
            }
        }
    }
    if report.sup >= limit {
        return Err(Error::ComplexityTooLarge { sigma: report.sup, limit });
    }
    Ok(report)
}

fn sets_1d(m: &IntervalMap, eps4: f64, trials: usize, rng: &mut ChaCha8Rng) -> Vec<(TrialShape, &'static str)> {
    let hi = m.materialized_hi().min(m.space.hi);
    let lo = m.space.lo;
    let cuts: Vec<f64> = m.cut_points().into_iter().filter(|&c| c < hi - eps4).collect();
    let mut out = Vec::with_capacity(trials);
    for &c in cuts.iter().take(200) {
        for len in [eps4, 0.1 * eps4] {
            for u in [0.01, 0.5, 0.99] {
                out.push((clip(lo, hi, c - u * len, c + (1.0 - u) * len), "discontinuity"));
            }
        }
    }
    out.truncate(trials / 2);
    while out.len() < trials {
        let len = eps4 * 10f64.powf(-3.0 * rng.gen::<f64>());
        if !cuts.is_empty() && rng.gen_bool(0.5) {
            let c = cuts[rng.gen_range(0..cuts.len())];
            let u: f64 = rng.gen();
            out.push((clip(lo, hi, c - u * len, c + (1.0 - u) * len), "discontinuity"));
        } else {
            let a = lo + (hi - lo - len) * rng.gen::<f64>();
            out.push((clip(lo, hi, a, a + len), "uniform"));
        }
    }
    out
}

fn clip(lo: f64, hi: f64, a: f64, b: f64) -> TrialShape {
    TrialShape::Interval { lo: a.max(lo), hi: b.min(hi) }
}

/// Numerator and denominator of the complexity expression for one interval (n0 = 1).
///
/// Boundaries are taken relative to the phase space: image ends at an end of X carry no boundary.
pub fn complexity_term_1d(m: &IntervalMap, set: Interval, eps: f64, lambda: f64) -> (f64, f64) {
    let left = set.lo > m.space.lo;
    let right = set.hi < m.space.hi;
    let le = lambda * eps;
    let mut removed = Vec::with_capacity(2);
    if left {
        removed.push(Interval::new(set.lo, set.lo + le));
    }
    if right {
        removed.push(Interval::new(set.hi - le, set.hi));
    }
    let den = set.boundary_length(le, left, right);
    let mut num = 0.0;
    for (i, piece) in pieces(m, set) {
        let b = &m.branches[i];
        let img = b.map_interval(piece);
        let mut pulled = Vec::with_capacity(2);
        if img.lo > m.space.lo {
            let s = Interval::new(img.lo, (img.lo + eps).min(img.hi));
            pulled.push(b.pull_interval(s));
        }
        if img.hi < m.space.hi {
            let s = Interval::new((img.hi - eps).max(img.lo), img.hi);
            pulled.push(b.pull_interval(s));
        }
        num += measure_minus(&pulled, &removed);
    }
    (num, den)
}

/// Measure of the union of `sets` minus the union of `removed`.
fn measure_minus(sets: &[Interval], removed: &[Interval]) -> f64 {
    let mut pts: Vec<f64> = sets.iter().chain(removed).flat_map(|i| [i.lo, i.hi]).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .filter(|w| w[1] - w[0] > 1e-15 * w[1].abs().max(1.0))
        .filter(|w| {
            let x = 0.5 * (w[0] + w[1]);
            sets.iter().any(|s| s.contains(x)) && !removed.iter().any(|r| r.contains(x))
        })
        .map(|w| w[1] - w[0])
        .sum()
}

fn sets_2d(m: &SkewMap, eps4: f64, trials: usize, rng: &mut ChaCha8Rng) -> Vec<(TrialShape, &'static str)> {
    let x1 = m.column_left(1.0);
    let mut out = Vec::with_capacity(trials);
    while out.len() < trials {
        let k = out.len() % 20;
        let d = eps4 * (0.05 + 0.95 * rng.gen::<f64>());
        let (cx, cy, placement) = match k {
            0..=4 => {
                let i = rng.gen_range(1..=12u64) as f64;
                let h = m.row_height(i);
                let rows = (1.0 / h).round() as u64;
                let j = rng.gen_range(1..rows) as f64;
                let x = if i == 1.0 { x1 } else { m.column_left(i) };
                let off = d * (rng.gen::<f64>() - 0.5) * 0.5;
                (x + off, j * h + off * rng.gen::<f64>(), "corner")
            }
            5..=7 => (d * (0.5 + 2.0 * rng.gen::<f64>()) + 1e-9, 0.05 + 0.9 * rng.gen::<f64>(), "accumulation"),
            8..=10 => (x1 + d * (rng.gen::<f64>() - 0.5) * 0.2, 0.05 + 0.9 * rng.gen::<f64>(), "column-edge"),
            _ => (rng.gen::<f64>(), 0.05 + 0.9 * rng.gen::<f64>(), "uniform"),
        };
        let shape = if rng.gen_bool(0.5) {
            let aspect = 10f64.powf(2.0 * rng.gen::<f64>() - 1.0);
            let w = d / (1.0 + aspect * aspect).sqrt();
            let h = w * aspect;
            TrialShape::Rect { x0: cx - 0.5 * w, x1: cx + 0.5 * w, y0: cy - 0.5 * h, y1: cy + 0.5 * h }
        } else {
            TrialShape::Ball { cx, cy, r: 0.5 * d }
        };
        if inside(shape) {
            out.push((shape, placement));
        }
    }
    out
}

fn inside(s: TrialShape) -> bool {
    match s {
        TrialShape::Rect { x0, x1, y0, y1 } => x0 > 0.0 && y0 > 0.0 && y1 < 1.0 && x1 < SkewMap::right_edge(y0),
        TrialShape::Ball { cx, cy, r } => {
            cx - r > 0.0 && cy - r > 0.0 && cy + r < 1.0 && cx + r < SkewMap::right_edge(cy - r)
        }
        TrialShape::Interval { .. } => false,
    }
}

/// Measure of `{y in (c, d) : dist(y, h Z) < h e}`.
fn periodic_bands(c: f64, d: f64, h: f64, e: f64) -> f64 {
    let span = d - c;
    if span <= 0.0 {
        return 0.0;
    }
    if h < 1e-250 || span / h > 1e6 {
        return 2.0 * e * span;
    }
    let g = |u: f64| {
        let f = u - u.floor();
        u.floor() * 2.0 * e + f.min(e) + (f - (1.0 - e)).max(0.0)
    };
    h * (g(d / h) - g(c / h))
}

/// Vertical band coverage and horizontal band measure per unit x for one column.
struct ColumnStrips {
    x: Interval,
    bands: [Interval; 2],
    row: f64,
    row_eps: f64,
}

impl ColumnStrips {
    fn new(m: &SkewMap, i: f64, eps: f64) -> Self {
        let lam = m.lambda_column(i);
        if i <= 1.0 {
            let left = m.column_left(1.0);
            return ColumnStrips {
                x: Interval::new(left, f64::INFINITY),
                bands: [Interval::new(left, left + lam * eps), Interval::new(0.0, 0.0)],
                row: 0.2,
                row_eps: eps,
            };
        }
        let (l, r) = (m.column_left(i), m.column_right(i));
        ColumnStrips {
            x: Interval::new(l, r),
            bands: [Interval::new(l, l + lam * eps), Interval::new(r - lam * eps, r)],
            row: m.row_height(i),
            row_eps: eps,
        }
    }

    fn vertical_in(&self, a: f64, b: f64) -> f64 {
        let w = Interval::new(a, b);
        let parts: Vec<Interval> = self.bands.iter().filter_map(|s| s.intersect(&w)).collect();
        measure_minus(&parts, &[])
    }

    fn horizontal(&self, c: f64, d: f64) -> f64 {
        periodic_bands(c, d, self.row, self.row_eps)
    }
}

/// Upper-bound model of the complexity numerator and the exact denominator for a planar set.
///
/// Pulled-back boundaries are bounded by vertical strips of width lambda_i eps around column edges
/// and horizontal strips of width 5^-i eps around row edges, restricted to the set minus its
/// lambda eps boundary.
pub fn complexity_term_2d(m: &SkewMap, set: &TrialShape, eps: f64, lambda: f64) -> (f64, f64) {
    let le = lambda * eps;
    match *set {
        TrialShape::Rect { x0, x1, y0, y1 } => {
            let area = (x1 - x0) * (y1 - y0);
            let (a, b, c, d) = (x0 + le, x1 - le, y0 + le, y1 - le);
            if b <= a || d <= c {
                return (0.0, area);
            }
            let den = area - (b - a) * (d - c);
            let num = rect_strips(m, a, b, c, d, eps);
            (num, den)
        }
        TrialShape::Ball { cx, cy, r } => {
            let area = std::f64::consts::PI * r * r;
            let ri = r - le;
            if ri <= 0.0 {
                return (0.0, area);
            }
            let den = area - std::f64::consts::PI * ri * ri;
            (ball_strips(m, cx, cy, ri, eps), den)
        }
        TrialShape::Interval { .. } => (0.0, 0.0),
    }
}

/// Columns meeting `(a, b)`, as explicit indices plus an optional averaged remainder `(a, edge)`.
fn columns(m: &SkewMap, a: f64, b: f64) -> (Vec<f64>, Option<(f64, f64, f64)>) {
    let Some(first) = m.column_of(b.min(f64::MAX)).map(|i| i.max(1.0)) else {
        return (vec![], Some((a, b, f64::INFINITY)));
    };
    let mut out = Vec::new();
    let mut i = first;
    let resolvable = 1e-4 * (b - a);
    loop {
        if i > 1.0 && m.column_width(i) < resolvable {
            return (out, Some((a, m.column_right(i).min(b), i)));
        }
        out.push(i);
        let left = m.column_left(i);
        if left <= a {
            return (out, None);
        }
        if out.len() >= COLUMN_ENUMERATION {
            return (out, Some((a, left, i + 1.0)));
        }
        i += 1.0;
    }
}

fn bulk_fraction(m: &SkewMap, first: f64, eps: f64) -> (f64, f64) {
    let i = first.max(2.0);
    if i > 1e15 {
        return ((2.0 * std::f64::consts::SQRT_2 * eps).min(1.0), 2.0 * eps);
    }
    let frac_v = (2.0 * m.lambda_column(i) * eps / m.column_width(i)).min(1.0);
    (frac_v, 2.0 * eps)
}

fn rect_strips(m: &SkewMap, a: f64, b: f64, c: f64, d: f64, eps: f64) -> f64 {
    let y = d - c;
    let (cols, bulk) = columns(m, a, b);
    let mut total = 0.0;
    for &i in &cols {
        let s = ColumnStrips::new(m, i, eps);
        let Some(w) = s.x.intersect(&Interval::new(a, b)) else { continue };
        let v = s.vertical_in(w.lo, w.hi);
        total += v * y + (w.len() - v) * s.horizontal(c, d);
    }
    if let Some((lo, hi, next)) = bulk {
        let (fv, fh) = bulk_fraction(m, next, eps);
        total += (hi - lo).max(0.0) * y * (fv + (1.0 - fv) * fh);
    }
    total
}

const GL: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

fn gauss(a: f64, b: f64, sub: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / sub as f64;
    let mut acc = 0.0;
    for k in 0..sub {
        let lo = a + h * k as f64;
        let mid = lo + 0.5 * h;
        for (t, w) in GL {
            acc += w * f(mid + 0.5 * h * t);
        }
    }
    acc * 0.5 * h
}

fn ball_strips(m: &SkewMap, cx: f64, cy: f64, r: f64, eps: f64) -> f64 {
    let half = |x: f64| (r * r - (x - cx) * (x - cx)).max(0.0).sqrt();
    let (a, b) = (cx - r, cx + r);
    let (cols, bulk) = columns(m, a, b);
    let mut total = 0.0;
    for &i in &cols {
        let s = ColumnStrips::new(m, i, eps);
        let Some(w) = s.x.intersect(&Interval::new(a, b)) else { continue };
        let mut cuts = vec![w.lo, w.hi];
        for band in &s.bands {
            for e in [band.lo, band.hi] {
                if e > w.lo && e < w.hi {
                    cuts.push(e);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        for seg in cuts.windows(2) {
            let x = 0.5 * (seg[0] + seg[1]);
            let in_band = s.bands.iter().any(|bd| bd.contains(x));
            let sub = if s.row > 1e-3 { 32 } else { 4 };
            total += if in_band {
                gauss(seg[0], seg[1], sub, |x| 2.0 * half(x))
            } else {
                gauss(seg[0], seg[1], sub, |x| s.horizontal(cy - half(x), cy + half(x)))
            };
        }
    }
    if let Some((lo, hi, next)) = bulk {
        let (fv, fh) = bulk_fraction(m, next, eps);
        if hi > lo {
            total += gauss(lo, hi, 64, |x| 2.0 * half(x)) * (fv + (1.0 - fv) * fh);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fixtures;

    #[test]
    fn no_discontinuity_gives_zero() {
        let f = fixtures::wmap();
        let m = f.spec.interval_map().unwrap();
        let (num, den) = complexity_term_1d(m, Interval::new(0.05, 0.15), 0.01, 112.0 / 207.0);
        assert_eq!(num, 0.0);
        assert!(den > 0.0);
    }

    #[test]
    fn wmap_cut_at_nine_twentieths() {
        let f = fixtures::wmap();
        let m = f.spec.interval_map().unwrap();
        let lam = 112.0 / 207.0;
        let (num, den) = complexity_term_1d(m, Interval::new(0.40, 0.50), 1e-4, lam);
        let expected = 621.0 / 896.0;
        assert!((num / den - expected).abs() < 1e-9, "{}", num / den);
    }

    #[test]
    fn periodic_band_measure() {
        let brute = |c: f64, d: f64, h: f64, e: f64| {
            let n = 200_000;
            let dx = (d - c) / n as f64;
            (0..n)
                .filter(|k| {
                    let y = c + (*k as f64 + 0.5) * dx;
                    let r = y / h;
                    (r - r.round()).abs() < e
                })
                .count() as f64
                * dx
        };
        for (c, d, h, e) in [(0.13, 0.71, 0.2, 0.01), (0.3, 0.33, 0.004, 0.2), (0.5, 0.9, 0.04, 0.05)] {
            assert!((periodic_bands(c, d, h, e) - brute(c, d, h, e)).abs() < 1e-5);
        }
    }

    #[test]
    fn rect_inside_one_cell_has_zero_numerator() {
        let m = SkewMap::new(0.02);
        let set = TrialShape::Rect { x0: 0.995, x1: 0.999, y0: 0.31, y1: 0.35 };
        let (num, den) = complexity_term_2d(&m, &set, 1e-4, 0.3111);
        assert_eq!(num, 0.0);
        assert!(den > 0.0);
    }

    #[test]
    fn thin_rect_across_first_column_edge() {
        let m = SkewMap::new(0.02);
        let x1 = m.column_left(1.0);
        let lam = 1.1 * std::f64::consts::SQRT_2 / 5.0;
        let eps = 1e-5;
        let set = TrialShape::Rect { x0: x1 - 3e-4, x1: x1 + 3e-4, y0: 0.25, y1: 0.39 };
        let (num, den) = complexity_term_2d(&m, &set, eps, lam);
        let expect = (m.lambda_column(1.0) + m.lambda_column(2.0)) / (2.0 * lam);
        assert!((num / den - expect).abs() < 0.03, "{} vs {}", num / den, expect);
    }
}
