use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::Interval;
use crate::real::Scalar;

/// H4 constant: e^{D eps0^alpha} 6 / eps0 in one dimension, e^{D diam(X)^alpha} 6 d^{3/2} / eps0 in two.
pub fn c_eps0(dimension: u8, distortion: &Scalar, eps0: &Scalar, alpha: &Scalar, diam_x: Option<&Scalar>) -> Scalar {
    match dimension {
        1 => (distortion.clone() * eps0.pow(alpha)).exp() * Scalar::int(6) / eps0.clone(),
        _ => {
            let diam = diam_x.cloned().unwrap_or_else(|| Scalar::int(1));
            let d = Scalar::int(dimension as i64);
            let d32 = d.clone() * d.sqrt();
            (distortion.clone() * diam.pow(alpha)).exp() * Scalar::int(6) * d32 / eps0.clone()
        }
    }
}

/// Chop an interval from the left into cells of length in (eps0/3, eps0].
fn chop(v: Interval, eps0: f64) -> Vec<Interval> {
    let len = v.len();
    if len <= eps0 {
        return vec![v];
    }
    let full = (len / eps0).floor() as usize;
    let rest = len - full as f64 * eps0;
    let mut cells: Vec<Interval> =
        (0..full).map(|k| Interval::new(v.lo + k as f64 * eps0, v.lo + (k + 1) as f64 * eps0)).collect();
    if rest > eps0 / 3.0 {
        cells.push(Interval::new(v.lo + full as f64 * eps0, v.hi));
    } else if rest > 0.0 {
        let last = cells.pop().expect("at least one full cell");
        let mid = 0.5 * (last.lo + v.hi);
        cells.push(Interval::new(last.lo, mid));
        cells.push(Interval::new(mid, v.hi));
    }
    if let Some(c) = cells.last_mut() {
        c.hi = v.hi;
    }
    cells
}

/// Partition of `v` into intervals of length in (eps0/3, eps0]; the cell containing `v_star` comes first.
pub fn build_partition_of_large_set(
    v: Interval,
    v_star: Option<Interval>,
    eps0: f64,
    eta: f64,
) -> Result<Vec<Interval>> {
    if v.len() <= 0.0 {
        return Err(Error::Invalid("partitioned set must have positive measure".into()));
    }
    let Some(star) = v_star.filter(|s| !s.is_empty()) else {
        return Ok(chop(v, eps0));
    };
    if star.len() > eta * eps0 {
        return Err(Error::VStarTooLarge { diam: star.len(), limit: eta * eps0 });
    }
    if !v.contains_interval(&star) {
        return Err(Error::Invalid("protected set must lie inside the partitioned set".into()));
    }
    if v.len() <= eps0 {
        return Ok(vec![v]);
    }
    let third = eps0 / 3.0;
    if v.len() < 2.0 * eps0 {
        let candidates = [star.hi, star.lo, v.mid(), v.lo + eps0, v.hi - eps0];
        let cut = candidates.into_iter().find(|&p| {
            let (l, r) = (p - v.lo, v.hi - p);
            l > third && l <= eps0 && r > third && r <= eps0 && !star.contains(p)
        });
        if let Some(p) = cut {
            let (a, b) = (Interval::new(v.lo, p), Interval::new(p, v.hi));
            return Ok(if a.contains_interval(&star) { vec![a, b] } else { vec![b, a] });
        }
    }
    let c = star.mid();
    let mut lo = (c - 0.5 * eps0).max(v.lo);
    let mut hi = (c + 0.5 * eps0).min(v.hi);
    if lo - v.lo <= third {
        lo = v.lo;
        hi = (v.lo + eps0).min(v.hi);
    }
    if v.hi - hi <= third {
        hi = v.hi;
        lo = (v.hi - eps0).max(v.lo);
        if lo - v.lo <= third {
            lo = v.lo;
        }
    }
    let mut cells = vec![Interval::new(lo, hi)];
    if lo > v.lo {
        cells.extend(chop(Interval::new(v.lo, lo), eps0));
    }
    if hi < v.hi {
        cells.extend(chop(Interval::new(hi, v.hi), eps0));
    }
    Ok(cells)
}

/// Parts of `u` within eps of its ends that are interior to `space`, minus the same for `v`.
fn boundary_excess(u: Interval, v: Interval, space: Interval, eps: f64) -> Vec<Interval> {
    let ends = |a: Interval| {
        let mut out = Vec::new();
        if a.lo > space.lo {
            out.push(Interval::new(a.lo, (a.lo + eps).min(a.hi)));
        }
        if a.hi < space.hi {
            out.push(Interval::new((a.hi - eps).max(a.lo), a.hi));
        }
        out
    };
    let remove = ends(v);
    let mut out = Vec::new();
    for piece in ends(u) {
        let mut rest = vec![piece];
        for r in &remove {
            rest = rest
                .into_iter()
                .flat_map(|p| {
                    let mut keep = Vec::new();
                    if r.lo > p.lo {
                        keep.push(Interval::new(p.lo, r.lo.min(p.hi)));
                    }
                    if r.hi < p.hi {
                        keep.push(Interval::new(r.hi.max(p.lo), p.hi));
                    }
                    keep.into_iter().filter(|k| k.len() > 0.0).collect::<Vec<_>>()
                })
                .collect();
        }
        out.extend(rest);
    }
    out
}

/// Left side of the H4 inequality: sum over cells of m(h(d_eps U \ d_eps V)) / m(h(V)).
pub fn h4_boundary_sum(
    cells: &[Interval],
    v: Interval,
    space: Interval,
    eps: f64,
    h_measure: impl Fn(Interval) -> f64,
) -> f64 {
    let total = h_measure(v);
    cells
        .iter()
        .flat_map(|u| boundary_excess(*u, v, space, eps))
        .map(&h_measure)
        .sum::<f64>()
        / total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn diam(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.x0 >= self.x0 && o.x1 <= self.x1 && o.y0 >= self.y0 && o.y1 <= self.y1
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Partition2d {
    pub cells: Vec<Rect>,
    pub star: Option<usize>,
}

/// Grid lines of spacing `side` from `lo`; a short last gap is shared with its neighbour.
fn grid_lines(lo: f64, hi: f64, side: f64) -> Vec<f64> {
    let n = ((hi - lo) / side).floor() as usize;
    let mut xs: Vec<f64> = (0..=n).map(|k| lo + k as f64 * side).collect();
    let rest = hi - xs[n];
    if rest > 0.5 * side || n == 0 {
        xs.push(hi);
    } else if rest > 0.0 {
        xs[n] = 0.5 * (xs[n - 1] + hi);
        xs.push(hi);
    }
    if let Some(last) = xs.last_mut() {
        *last = hi;
    }
    xs
}

/// Grid of squares of side eps0 / (3 sqrt 2) clipped to `v`; the 3x3 block around `v_star` is one cell.
pub fn build_partition_2d(v: Rect, v_star: Option<Rect>, eps0: f64, eta: f64) -> Result<Partition2d> {
    if v.area() <= 0.0 {
        return Err(Error::Invalid("partitioned set must have positive measure".into()));
    }
    if let Some(s) = v_star {
        if s.diam() > eta * eps0 {
            return Err(Error::VStarTooLarge { diam: s.diam(), limit: eta * eps0 });
        }
    }
    if v.diam() <= eps0 {
        return Ok(Partition2d { cells: vec![v], star: v_star.map(|_| 0) });
    }
    let side = eps0 / (3.0 * std::f64::consts::SQRT_2);
    let xs = grid_lines(v.x0, v.x1, side);
    let ys = grid_lines(v.y0, v.y1, side);
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let block = v_star.map(|s| {
        let locate = |lines: &[f64], p: f64| lines.windows(2).position(|w| p < w[1]).unwrap_or(lines.len() - 2);
        let cx = locate(&xs, 0.5 * (s.x0 + s.x1));
        let cy = locate(&ys, 0.5 * (s.y0 + s.y1));
        let span = |c: usize, n: usize| {
            let lo = c.saturating_sub(1).min(n.saturating_sub(3));
            (lo, (lo + 3).min(n))
        };
        (span(cx, nx), span(cy, ny))
    });
    let mut cells = Vec::new();
    let mut star = None;
    if let Some(((bx0, bx1), (by0, by1))) = block {
        star = Some(0);
        cells.push(Rect { x0: xs[bx0], x1: xs[bx1], y0: ys[by0], y1: ys[by1] });
    }
    for i in 0..nx {
        for j in 0..ny {
            if let Some(((bx0, bx1), (by0, by1))) = block {
                if i >= bx0 && i < bx1 && j >= by0 && j < by1 {
                    continue;
                }
            }
            cells.push(Rect { x0: xs[i], x1: xs[i + 1], y0: ys[j], y1: ys[j + 1] });
        }
    }
    Ok(Partition2d { cells, star })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_gives_29_cells() {
        let eps0 = 0.0345;
        let cells = build_partition_of_large_set(Interval::new(0.0, 1.0), None, eps0, 1.0 / 3.0).unwrap();
        assert_eq!(cells.len(), 29);
        for c in &cells {
            assert!(c.len() > eps0 / 3.0 && c.len() <= eps0 + 1e-15);
        }
        assert_eq!(cells[0].lo, 0.0);
        assert_eq!(cells[28].hi, 1.0);
    }

    #[test]
    fn small_set_is_one_cell() {
        let v = Interval::new(0.2, 0.23);
        assert_eq!(build_partition_of_large_set(v, None, 0.0345, 1.0 / 3.0).unwrap(), vec![v]);
    }

    #[test]
    fn protected_cell_first() {
        let star = Interval::new(0.5, 0.505);
        let cells = build_partition_of_large_set(Interval::new(0.0, 1.0), Some(star), 0.0345, 1.0 / 3.0).unwrap();
        assert!(cells[0].contains_interval(&star));
        let total: f64 = cells.iter().map(|c| c.len()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let err = build_partition_of_large_set(Interval::new(0.0, 1.0), Some(Interval::new(0.5, 0.52)), 0.0345, 1.0 / 3.0);
        assert!(matches!(err, Err(Error::VStarTooLarge { .. })));
    }

    #[test]
    fn wmap_c_eps0() {
        let eps0 = Scalar::frac(9025, 25089) * Scalar::frac(1520, 1381).ln();
        let c = c_eps0(1, &Scalar::frac(25088, 19665), &eps0, &Scalar::int(1), None);
        assert!((c.to_f64() - 181.75).abs() < 1e-2, "{}", c.to_f64());
        let c = c_eps0(1, &Scalar::frac(1, 5), &Scalar::frac(1, 2), &Scalar::int(1), None);
        assert!((c.to_f64() - 12.0 * 0.1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn planar_grid_covers_rectangle() {
        let v = Rect { x0: 0.0, x1: 0.3, y0: 0.1, y1: 0.4 };
        let star = Rect { x0: 0.11, x1: 0.112, y0: 0.2, y1: 0.202 };
        let p = build_partition_2d(v, Some(star), 0.05, 1.0 / 6.0).unwrap();
        let area: f64 = p.cells.iter().map(Rect::area).sum();
        assert!((area - v.area()).abs() < 1e-12);
        assert!(p.cells[p.star.unwrap()].contains_rect(&star));
        assert!(p.cells.iter().all(|c| c.diam() <= 0.05 + 1e-12));
    }
}
