use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{Interval, MapSpec, SkewCell, SkewMap};
use crate::real::Real;

/// Equal cells of side `cell` covering a bounded interval; cells are indexed, never stored.
#[derive(Clone, Debug, Serialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub cell: f64,
    pub count: u64,
}

impl UniformGrid {
    pub fn new(space: Interval, cell: f64) -> Result<Self> {
        if !space.hi.is_finite() {
            return Err(Error::Invalid("a uniform grid needs a bounded phase space".into()));
        }
        if !(cell > 0.0) {
            return Err(Error::Invalid("grid cell size must be positive".into()));
        }
        let count = (space.len() / cell).ceil().max(1.0) as u64;
        Ok(UniformGrid { lo: space.lo, hi: space.hi, cell: space.len() / count as f64, count })
    }

    pub fn cell_of(&self, x: f64) -> Option<u64> {
        if x <= self.lo || x >= self.hi {
            return None;
        }
        Some((((x - self.lo) / self.cell) as u64).min(self.count - 1))
    }

    pub fn get(&self, k: u64) -> Interval {
        let lo = self.lo + k as f64 * self.cell;
        let hi = if k + 1 == self.count { self.hi } else { self.lo + (k + 1) as f64 * self.cell };
        Interval::new(lo, hi)
    }

    /// Indices of the cells fully contained in `iv`.
    pub fn inside(&self, iv: Interval) -> std::ops::Range<u64> {
        let a = ((iv.lo - self.lo) / self.cell).ceil().max(0.0) as u64;
        let b = (((iv.hi - self.lo) / self.cell).floor().max(0.0) as u64).min(self.count);
        let b = if b == self.count || self.get(b.saturating_sub(1)).hi <= iv.hi { b } else { b - 1 };
        a.min(b)..b
    }
}

/// The cell Z of the planar grid containing the midpoint of the accumulation segment.
#[derive(Clone, Debug, Serialize)]
pub struct SkewZ {
    pub side: f64,
    pub z: [f64; 4],
    /// Smallest column index lying entirely inside the strip 0 < x < side (decimal string).
    pub i0: String,
    pub log10_i0: f64,
    /// Sampled columns whose cells inside Z were checked to map over Z.
    pub checked_columns: Vec<u64>,
    pub returns_to_self: bool,
}

impl SkewZ {
    fn find(map: &SkewMap, side: f64) -> Result<SkewZ> {
        let k = (0.5 / side + 1e-9).floor();
        let z = [0.0, side, k * side, (k + 1.0) * side];
        // tail sum ~ i^-s / s, so the column i sits left of x once i >= (s Z x)^(-1/s)
        let base = Real::from_f64(map.s * map.zeta * side);
        let i0 = base.pow(&Real::from_f64(-1.0 / map.s)).ceil();
        let log10_i0 = i0.log10().to_f64();
        // Rows stay resolvable near y = 1/2 up to column 11. Every cell O(i, j) with i >= 2 maps onto a set containing the unit square, hence over Z.
        let mut checked = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ok = true;
        for i in [2u64, 3, 5, 8, 11] {
            let h = map.row_height(i as f64);
            if !(h > 1e-300) {
                continue;
            }
            let j = ((0.5 / h).floor() as u64).max(1);
            let cell = SkewCell { i, j };
            let lo = map.column_left(i as f64);
            let hi = map.column_right(i as f64);
            let yl = (j - 1) as f64 * h;
            for _ in 0..256 {
                let u = rng.gen_range(0.0..1.0);
                let v = rng.gen_range(0.0..1.0);
                let (x, y) = map.inverse(cell, u, v);
                let slack = 1e-12 * (hi - lo);
                let inside = x >= lo - slack && x <= hi + slack && y >= yl - 1e-15 && y <= yl + h + 1e-15;
                let back = map.forward(cell, x, y);
                ok &= inside && (back.0 - u).abs() < 1e-6 && (back.1 - v).abs() < 1e-6;
            }
            checked.push(i);
        }
        if checked.is_empty() {
            return Err(Error::NoZFound { depth: 11 });
        }
        Ok(SkewZ { side, z, i0: i0.to_sig_string(6), log10_i0, checked_columns: checked, returns_to_self: ok })
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum InducingPartition {
    Grid(UniformGrid),
    Squares { side: f64, z: SkewZ },
}

#[derive(Clone, Debug, Serialize)]
pub struct InducingVerdicts {
    pub partition: InducingPartition,
    /// sup over eps of m(boundary_eps R) / eps on the sampled cells.
    pub boundary_constant: f64,
    pub boundary_ok: bool,
    pub c_r: f64,
    pub containment_min: f64,
    pub containment_ok: bool,
    /// gcd of the return times of Z (2D only).
    pub gcd: Option<u64>,
    pub h6: bool,
    pub h7: Option<bool>,
    pub h8: Option<bool>,
}

/// Builds the partition used by the inducing schemes and checks its properties.
pub fn check_inducing_partition(spec: &MapSpec, delta0: f64, c: f64, seed: u64) -> Result<InducingVerdicts> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Invalid("cell size must be a fraction of delta0 below 1".into()));
    }
    let side = c * delta0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(m) = spec.interval_map() {
        let grid = UniformGrid::new(m.space, side)?;
        let mut bconst: f64 = 0.0;
        for _ in 0..64 {
            let k = rng.gen_range(0..grid.count);
            let r = grid.get(k);
            for e in 1..=20 {
                let eps = side * e as f64 / 20.0;
                let left = r.lo > grid.lo;
                let right = r.hi < grid.hi;
                bconst = bconst.max(r.boundary_length(eps, left, right) / eps);
            }
        }
        let c_r = 1.0 - grid.cell / delta0;
        let mut worst = f64::INFINITY;
        for _ in 0..2000 {
            let len = delta0 * rng.gen_range(1.0..2.0);
            let lo = rng.gen_range(grid.lo..(grid.hi - len).max(grid.lo + 1e-12));
            let iv = Interval::new(lo, (lo + len).min(grid.hi));
            for k in grid.inside(iv) {
                let r = grid.get(k);
                worst = worst.min((iv.len() - r.len()) / iv.len());
            }
        }
        let boundary_ok = bconst <= 2.0 + 1e-9;
        let containment_ok = worst >= c_r - 1e-9;
        return Ok(InducingVerdicts {
            partition: InducingPartition::Grid(grid),
            boundary_constant: bconst,
            boundary_ok,
            c_r,
            containment_min: worst,
            containment_ok,
            gcd: None,
            h6: boundary_ok && containment_ok,
            h7: None,
            h8: None,
        });
    }
    let map = spec.skew_map().ok_or_else(|| Error::Invalid("unsupported map model".into()))?;
    let z = SkewZ::find(map, side)?;
    // A square of side a loses at most 4 eps a to the eps-neighbourhood of its edges.
    let mut bconst: f64 = 0.0;
    for e in 1..=20 {
        let eps = side * e as f64 / 40.0;
        let inner = (side - 2.0 * eps).max(0.0);
        bconst = bconst.max((side * side - inner * inner) / (eps * side));
    }
    let c_r = 1.0 - c * c * std::f64::consts::FRAC_1_PI;
    let mut worst = f64::INFINITY;
    for _ in 0..2000 {
        let x = rng.gen_range(delta0..1.0 - delta0);
        let y = rng.gen_range(delta0..1.0 - delta0);
        let ball = std::f64::consts::PI * delta0 * delta0;
        let a = ((x - delta0) / side).ceil();
        let b = ((y - delta0) / side).ceil();
        let cx = a * side + side / 2.0;
        let cy = b * side + side / 2.0;
        if (cx - x).hypot(cy - y) + side / std::f64::consts::SQRT_2 < delta0 {
            worst = worst.min((ball - side * side) / ball);
        }
    }
    let boundary_ok = bconst <= 4.0 + 1e-9;
    let containment_ok = worst >= c_r - 1e-9;
    let gcd = z.returns_to_self.then_some(1);
    Ok(InducingVerdicts {
        partition: InducingPartition::Squares { side, z: z.clone() },
        boundary_constant: bconst,
        boundary_ok,
        c_r,
        containment_min: worst,
        containment_ok,
        gcd,
        h6: boundary_ok && containment_ok,
        h7: Some(z.returns_to_self),
        h8: Some(z.returns_to_self),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::fixtures;

    #[test]
    fn grid_containment_ratio() {
        let f = fixtures::wmap();
        let v = check_inducing_partition(&f.spec, 0.003, 1.0 / 3.0, 1).unwrap();
        assert!(v.h6);
        assert!((v.c_r - 2.0 / 3.0).abs() < 1e-2);
        assert!((v.boundary_constant - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_inside_range() {
        let g = UniformGrid::new(Interval::new(0.0, 1.0), 0.1).unwrap();
        assert_eq!(g.count, 10);
        assert_eq!(g.inside(Interval::new(0.05, 0.31)), 1..3);
        assert_eq!(g.cell_of(0.95), Some(9));
    }

    #[test]
    fn skew_square_returns_over_itself() {
        let f = fixtures::skew2d();
        let v = check_inducing_partition(&f.spec, 0.01, 0.01, 3).unwrap();
        assert_eq!(v.gcd, Some(1));
        assert!(v.boundary_constant <= 4.0 + 1e-12);
        let InducingPartition::Squares { z, .. } = v.partition else { panic!() };
        assert!(z.z[2] <= 0.5 && z.z[3] > 0.5);
        assert!(z.log10_i0 > 100.0);
    }
}
