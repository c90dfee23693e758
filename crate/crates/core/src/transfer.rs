//! Density evolution by the transfer operator, invariant densities and orbit histograms.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::Family;
use crate::map::{Interval, IntervalMap};
use crate::quad::{self, Chebyshev};

/// Chebyshev nodes per cell.
pub const CELL_NODES: usize = 32;
/// Truncation of unbounded phase spaces.
pub const DEFAULT_X_MAX: f64 = 60.0;
pub const DEFAULT_MAX_ITER: usize = 10_000;

fn cheb() -> &'static Chebyshev {
    static C: OnceLock<Chebyshev> = OnceLock::new();
    C.get_or_init(|| Chebyshev::new(CELL_NODES))
}

/// Piecewise polynomial density: cells split at the discontinuities, values at Chebyshev nodes.
#[derive(Clone, Debug, Serialize)]
pub struct GridDensity {
    /// Possible discontinuities, including the ends of the support.
    pub breaks: Vec<f64>,
    pub cells: Vec<Interval>,
    pub values: Vec<Vec<f64>>,
    /// Mass pushed beyond the truncation point.
    pub lost: f64,
}

/// Resolution used when subdividing elementary intervals.
#[derive(Clone, Copy, Debug)]
pub struct GridOptions {
    pub cell: f64,
    pub x_max: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { cell: 1.0 / 64.0, x_max: DEFAULT_X_MAX }
    }
}

fn clean_breaks(mut b: Vec<f64>) -> Vec<f64> {
    b.retain(|x| x.is_finite());
    b.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(b.len());
    for x in b {
        match out.last() {
            Some(&l) if x - l <= 1e-13 * l.abs().max(1.0) => {}
            _ => out.push(x),
        }
    }
    out
}

fn subdivide(breaks: &[f64], cell: f64) -> Vec<Interval> {
    let mut cells = Vec::new();
    for w in breaks.windows(2) {
        let k = ((w[1] - w[0]) / cell).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / k as f64;
        for i in 0..k {
            let hi = if i + 1 == k { w[1] } else { w[0] + (i + 1) as f64 * h };
            cells.push(Interval::new(w[0] + i as f64 * h, hi));
        }
    }
    cells
}

impl GridDensity {
    /// Samples `f` on the cells generated by `breaks`.
    pub fn from_fn(breaks: Vec<f64>, opts: GridOptions, f: impl Fn(f64) -> f64) -> GridDensity {
        let breaks = clean_breaks(breaks);
        let cells = subdivide(&breaks, opts.cell);
        let c = cheb();
        let values = cells
            .iter()
            .map(|iv| (0..CELL_NODES).map(|k| f(c.node(k, iv.lo, iv.hi))).collect())
            .collect();
        GridDensity { breaks, cells, values, lost: 0.0 }
    }

    /// Normalized Lebesgue measure on the (truncated) phase space.
    pub fn uniform(space: Interval, opts: GridOptions) -> GridDensity {
        let hi = space.hi.min(opts.x_max);
        let v = 1.0 / (hi - space.lo);
        GridDensity::from_fn(vec![space.lo, hi], opts, |_| v)
    }

    /// The density of a standard family, cut at every pair endpoint.
    pub fn from_family(f: &Family, opts: GridOptions) -> GridDensity {
        let breaks = clean_breaks(f.pairs.iter().flat_map(|p| [p.domain.lo, p.domain.hi]).collect());
        let cells = subdivide(&breaks, opts.cell);
        let index = f.index();
        let c = cheb();
        let values = cells
            .iter()
            .map(|iv| {
                let pairs: Vec<_> = index.active(iv.mid()).collect();
                (0..CELL_NODES)
                    .map(|k| {
                        let x = c.node(k, iv.lo, iv.hi);
                        pairs.iter().map(|p| p.weight * p.density(x)).sum()
                    })
                    .collect()
            })
            .collect();
        GridDensity { breaks, cells, values, lost: 0.0 }
    }

    pub fn support(&self) -> Interval {
        Interval::new(self.breaks[0], *self.breaks.last().unwrap())
    }

    pub fn node_count(&self) -> usize {
        self.cells.len() * CELL_NODES
    }

    /// Value at x; zero outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        let s = self.support();
        if !(x >= s.lo && x <= s.hi) {
            return 0.0;
        }
        let i = self.cells.partition_point(|c| c.hi < x).min(self.cells.len() - 1);
        let c = self.cells[i];
        cheb().eval(&self.values[i], c.lo, c.hi, x)
    }

    /// Value at x taken from the smooth piece that contains `hint`.
    pub fn eval_within(&self, x: f64, hint: f64) -> f64 {
        let j = self.breaks.partition_point(|&b| b <= hint);
        if j == 0 || j == self.breaks.len() {
            return 0.0;
        }
        let (lo, hi) = (self.breaks[j - 1], self.breaks[j]);
        let x = x.clamp(lo, hi);
        let mut i = self.cells.partition_point(|c| c.hi < x).min(self.cells.len() - 1);
        if self.cells[i].hi <= lo && i + 1 < self.cells.len() {
            i += 1;
        }
        let c = self.cells[i];
        cheb().eval(&self.values[i], c.lo, c.hi, x)
    }

    pub fn mass(&self) -> f64 {
        self.cells.iter().zip(&self.values).map(|(c, v)| cheb().integrate(v, c.lo, c.hi)).sum()
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        for (c, v) in self.cells.iter().zip(&self.values) {
            let (lo, hi) = (a.max(c.lo), b.min(c.hi));
            if hi <= lo {
                continue;
            }
            s += if lo == c.lo && hi == c.hi {
                cheb().integrate(v, c.lo, c.hi)
            } else {
                quad::integrate(lo, hi, |x| cheb().eval(v, c.lo, c.hi, x))
            };
        }
        s
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().flatten().for_each(|v| *v *= s);
    }

    /// Interior nodes of every cell, where the density is smooth.
    pub fn interior_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let c = cheb();
        self.cells.iter().flat_map(move |iv| (1..CELL_NODES - 1).map(move |k| c.node(k, iv.lo, iv.hi)))
    }
}

/// L1 distance by 16-point Gauss-Legendre on the common refinement.
pub fn l1_distance(f: &GridDensity, g: &GridDensity) -> f64 {
    let mut pts: Vec<f64> = f.cells.iter().chain(&g.cells).flat_map(|c| [c.lo, c.hi]).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| quad::integrate(w[0], w[1], |x| (f.eval(x) - g.eval(x)).abs()))
        .sum()
}

/// Clone of `m` with enough branches materialized to cover `(lo, x_max)`.
pub fn truncated(m: &IntervalMap, x_max: f64) -> IntervalMap {
    let mut m = m.clone();
    if !m.space.hi.is_finite() {
        m.extend_to(x_max);
    }
    m
}

fn check_support(m: &IntervalMap, s: Interval) -> Result<()> {
    if s.hi > m.materialized_hi() {
        return Err(Error::TruncationInsufficient { tail: f64::INFINITY, budget: 1e-9 });
    }
    Ok(())
}

/// One application of the transfer operator, evaluated node by node.
pub fn apply_once(m: &IntervalMap, f: &GridDensity, opts: GridOptions) -> Result<GridDensity> {
    let s = f.support();
    check_support(m, s)?;
    let cut = m.space.hi.min(opts.x_max);
    let live: Vec<usize> = m.meeting(s).collect();
    let mut breaks = vec![m.space.lo, cut];
    for &i in &live {
        let b = &m.branches[i];
        if let Some(piece) = b.domain.intersect(&s) {
            let img = b.map_interval(piece);
            breaks.extend([img.lo, img.hi]);
        }
        for &x in &f.breaks {
            if b.domain.contains(x) {
                breaks.push(b.forward(x));
            }
        }
    }
    breaks.retain(|&x| x >= m.space.lo && x <= cut);
    let breaks = clean_breaks(breaks);
    let cells = subdivide(&breaks, opts.cell);
    let c = cheb();
    let values = cells
        .iter()
        .map(|iv| {
            let mid = iv.mid();
            let active: Vec<usize> = live
                .iter()
                .copied()
                .filter(|&i| {
                    let b = &m.branches[i];
                    b.image.contains(mid) && b.domain.intersect(&s).is_some() && s.contains(b.inverse(mid))
                })
                .collect();
            (0..CELL_NODES)
                .map(|k| {
                    let y = c.node(k, iv.lo, iv.hi);
                    active
                        .iter()
                        .map(|&i| {
                            let b = &m.branches[i];
                            f.eval_within(b.inverse(y), b.inverse(mid)) * b.jac(y)
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut out = GridDensity { breaks, cells, values, lost: 0.0 };
    out.lost = (f.mass() + f.lost - out.mass()).max(0.0);
    Ok(out)
}

/// n applications of the transfer operator.
pub fn apply_l(m: &IntervalMap, f: &GridDensity, n: usize, opts: GridOptions) -> Result<GridDensity> {
    if n == 0 {
        return Err(Error::Invalid("apply_l needs n >= 1".into()));
    }
    let mut g = apply_once(m, f, opts)?;
    for _ in 1..n {
        g = apply_once(m, &g, opts)?;
    }
    Ok(g)
}

/// Transfer operator at a single point, by recursion over inverse branches.
pub fn apply_l_at(m: &IntervalMap, f: &dyn Fn(f64) -> f64, support: Interval, n: usize, x: f64) -> Result<f64> {
    check_support(m, support)?;
    fn go(m: &IntervalMap, f: &dyn Fn(f64) -> f64, s: Interval, n: usize, x: f64) -> f64 {
        if n == 0 {
            return if s.contains(x) { f(x) } else { 0.0 };
        }
        m.meeting(s)
            .map(|i| &m.branches[i])
            .filter(|b| b.image.contains(x))
            .map(|b| go(m, f, s, n - 1, b.inverse(x)) * b.jac(x))
            .sum()
    }
    Ok(go(m, f, support, n, x))
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantDensity {
    pub density: GridDensity,
    pub residual: f64,
    pub iterations: usize,
}

/// Iterates the transfer operator from the uniform density until the L1 residual drops below tol.
pub fn invariant_density(m: &IntervalMap, tol: f64, max_iter: usize, opts: GridOptions) -> Result<InvariantDensity> {
    let m = truncated(m, opts.x_max);
    let mut f = GridDensity::uniform(m.space, opts);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut g = apply_once(&m, &f, opts)?;
        let mass = g.mass();
        g.scale(1.0 / mass);
        g.lost = 0.0;
        residual = l1_distance(&g, &f);
        f = g;
        if residual < tol {
            return Ok(InvariantDensity { density: f, residual, iterations: it });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

/// Per-step L1 distance from the iterates of `f` to the invariant density.
pub fn mixing_series(m: &IntervalMap, f: &GridDensity, inv: &GridDensity, steps: usize, opts: GridOptions) -> Result<Vec<f64>> {
    let m = truncated(m, opts.x_max);
    let mut out = vec![l1_distance(f, inv)];
    let mut g = f.clone();
    for _ in 0..steps {
        g = apply_once(&m, &g, opts)?;
        out.push(l1_distance(&g, inv));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub samples: u64,
    /// Samples that fell outside `[lo, hi)`.
    pub outside: u64,
}

impl Histogram {
    pub fn bin(&self, k: usize) -> Interval {
        let h = (self.hi - self.lo) / self.counts.len() as f64;
        Interval::new(self.lo + k as f64 * h, self.lo + (k + 1) as f64 * h)
    }
}

fn forward_raw(m: &IntervalMap, x: f64) -> f64 {
    let i = m.branches.partition_point(|b| b.domain.hi <= x).min(m.branches.len() - 1);
    m.branches[i].forward(x)
}

/// Histogram of T^burn(x) for independent uniform starting points x, split into fixed chunks.
pub fn orbit_histogram(m: &IntervalMap, samples: u64, burn: usize, bins: usize, range: Interval, seed: u64) -> Result<Histogram> {
    if !m.space.hi.is_finite() {
        return Err(Error::Invalid("orbit sampling needs a bounded phase space".into()));
    }
    const CHUNKS: u64 = 16;
    let space = m.space;
    let per = samples / CHUNKS;
    let results: Vec<(Vec<u64>, u64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..CHUNKS)
            .map(|c| {
                let n = if c + 1 == CHUNKS { samples - per * (CHUNKS - 1) } else { per };
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(c));
                    let mut counts = vec![0u64; bins];
                    let mut outside = 0;
                    let scale = bins as f64 / range.len();
                    for _ in 0..n {
                        let mut x = rng.gen_range(space.lo..space.hi);
                        for _ in 0..burn {
                            x = forward_raw(m, x);
                        }
                        let k = ((x - range.lo) * scale).floor();
                        if k >= 0.0 && (k as usize) < bins {
                            counts[k as usize] += 1;
                        } else {
                            outside += 1;
                        }
                    }
                    (counts, outside)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling thread panicked")).collect()
    });
    let mut counts = vec![0u64; bins];
    let mut outside = 0;
    for (c, o) in results {
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        outside += o;
    }
    Ok(Histogram { lo: range.lo, hi: range.hi, counts, samples, outside })
}

#[derive(Clone, Debug, Serialize)]
pub struct HistogramComparison {
    pub worst_z: f64,
    pub worst_bin: usize,
    pub bins_over: usize,
}

/// Binomial z-score of every bin against the probabilities given by the density.
pub fn compare_histogram(h: &Histogram, f: &GridDensity) -> HistogramComparison {
    let n = h.samples as f64;
    let total = f.mass();
    let mut out = HistogramComparison { worst_z: 0.0, worst_bin: 0, bins_over: 0 };
    for (k, &c) in h.counts.iter().enumerate() {
        let b = h.bin(k);
        let p = f.integral(b.lo, b.hi) / total;
        let sd = (n * p * (1.0 - p)).sqrt().max(1e-300);
        let z = (c as f64 - n * p).abs() / sd;
        if z > 3.0 {
            out.bins_over += 1;
        }
        if z > out.worst_z {
            out.worst_z = z;
            out.worst_bin = k;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fixtures;

    #[test]
    fn doubling_fixes_lebesgue() {
        let f = fixtures::doubling();
        let m = f.spec.interval_map().unwrap();
        let u = GridDensity::uniform(m.space, GridOptions::default());
        let g = apply_l(m, &u, 1, GridOptions::default()).unwrap();
        for x in [0.01, 0.3, 0.5, 0.77] {
            assert!((g.eval(x) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn wmap_at_one_tenth() {
        let f = fixtures::wmap();
        let m = f.spec.interval_map().unwrap();
        let (b, c) = (81.0 / 112.0, -81.0 / 112.0);
        let root = 0.5 * (-b + (b * b - 4.0 * (c - 0.1f64)).sqrt());
        let expect = 9.0 / 40.0 + 0.5 + 0.25 + 1.0 / (2.0 * root + b);
        let u = GridDensity::uniform(m.space, GridOptions::default());
        let g = apply_l(m, &u, 1, GridOptions::default()).unwrap();
        assert!((g.eval(0.1) - expect).abs() < 1e-13);
        let direct = apply_l_at(m, &|_| 1.0, m.space, 1, 0.1).unwrap();
        assert!((direct - expect).abs() < 1e-13);
    }

    #[test]
    fn l1_examples() {
        let opts = GridOptions::default();
        let u = GridDensity::from_fn(vec![0.0, 1.0], opts, |_| 1.0);
        let h = GridDensity::from_fn(vec![0.0, 0.5], opts, |_| 2.0);
        let far = GridDensity::from_fn(vec![2.0, 3.0], opts, |_| 1.0);
        assert!(l1_distance(&u, &u) < 1e-15);
        assert!((l1_distance(&u, &h) - 1.0).abs() < 1e-12);
        assert!((l1_distance(&u, &far) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mass_is_preserved() {
        let f = fixtures::wmap();
        let m = f.spec.interval_map().unwrap();
        let opts = GridOptions::default();
        let g0 = GridDensity::from_fn(vec![0.0, 0.3, 1.0], opts, |x| 1.0 + (7.0 * x).sin().powi(2));
        let g = apply_l(m, &g0, 5, opts).unwrap();
        assert!((g.mass() - g0.mass()).abs() < 1e-12, "{} {} {}", g.mass(), g0.mass(), g.lost);
        let direct = apply_l_at(m, &|x| 1.0 + (7.0 * x).sin().powi(2), Interval::new(0.0, 1.0), 3, 0.37).unwrap();
        let g3 = apply_l(m, &GridDensity::from_fn(vec![0.0, 1.0], opts, |x| 1.0 + (7.0 * x).sin().powi(2)), 3, opts)
            .unwrap();
        assert!((g3.eval(0.37) - direct).abs() < 1e-6);
    }

    #[test]
    fn doubling_invariant_density_is_uniform() {
        let f = fixtures::doubling();
        let m = f.spec.interval_map().unwrap();
        let r = invariant_density(m, 1e-12, 100, GridOptions::default()).unwrap();
        assert!(r.iterations <= 2);
        assert!(r.density.interior_nodes().all(|x| (r.density.eval(x) - 1.0).abs() < 1e-12));
    }
}
