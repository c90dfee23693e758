//! The two-dimensional skew product whose cells accumulate on the left edge of the square.

use crate::error::{Error, Result};

/// Cell `O(i, j)`: column `i >= 1`, row `j` counted from the bottom starting at 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkewCell {
    pub i: u64,
    pub j: u64,
}

impl SkewCell {
    pub fn label(&self) -> String {
        format!("O({},{})", self.i, self.j)
    }
}

#[derive(Clone, Debug)]
pub struct SkewMap {
    pub s: f64,
    /// Z = sum over k of k^(-(1+s)) = 5W.
    pub zeta: f64,
    prefix: Vec<f64>,
}

/// Columns with explicit prefix sums; beyond this the tail uses Euler-Maclaurin.
const EXPLICIT: usize = 4096;

impl SkewMap {
    pub fn new(s: f64) -> Self {
        let p = 1.0 + s;
        let mut prefix = Vec::with_capacity(EXPLICIT + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for k in 1..=EXPLICIT {
            acc += (k as f64).powf(-p);
            prefix.push(acc);
        }
        let zeta = acc + euler_maclaurin_tail(EXPLICIT as f64, p);
        SkewMap { s, zeta, prefix }
    }

    pub fn w(&self) -> f64 {
        self.zeta / 5.0
    }

    /// Sum over k > i of k^(-(1+s)); `i` may be any real >= 0 (integer semantics).
    pub fn tail_sum(&self, i: f64) -> f64 {
        if i < 1.0 {
            return self.zeta;
        }
        if i <= EXPLICIT as f64 {
            return self.zeta - self.prefix[i as usize];
        }
        euler_maclaurin_tail(i, 1.0 + self.s)
    }

    /// Left edge of column `i` (columns `i >= 2` are rectangles, column 1 is the right trapezoid).
    pub fn column_left(&self, i: f64) -> f64 {
        self.tail_sum(i) / self.zeta
    }

    pub fn column_right(&self, i: f64) -> f64 {
        if i <= 1.0 {
            return f64::INFINITY;
        }
        self.tail_sum(i - 1.0) / self.zeta
    }

    pub fn column_width(&self, i: f64) -> f64 {
        i.powf(-(1.0 + self.s)) / self.zeta
    }

    pub fn row_height(&self, i: f64) -> f64 {
        if i <= 1.0 {
            0.2
        } else {
            5f64.powf(-i)
        }
    }

    /// Right edge of the phase space at height y.
    pub fn right_edge(y: f64) -> f64 {
        1.0 + y / 25.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        y > 0.0 && y < 1.0 && x > 0.0 && x < Self::right_edge(y)
    }

    /// Contraction bound of the inverse branch on column `i`.
    pub fn lambda_column(&self, i: f64) -> f64 {
        let r = std::f64::consts::SQRT_2;
        if i <= 1.0 {
            r * (1.0 / self.zeta + 0.2).max(0.2)
        } else {
            r * (self.column_width(i) + self.row_height(i)).max(self.row_height(i))
        }
    }

    /// Column containing abscissa x, or `None` when x lies left of every representable column.
    pub fn column_of(&self, x: f64) -> Option<f64> {
        if x >= self.column_left(1.0) {
            return Some(1.0);
        }
        if x <= 0.0 {
            return None;
        }
        let mut lo = 1.0f64;
        let mut hi = (self.s * self.zeta * x).powf(-1.0 / self.s) * 4.0 + 8.0;
        if !hi.is_finite() || hi > 1e300 {
            return None;
        }
        while hi - lo > 1.0 {
            let mid = (0.5 * (lo + hi)).floor();
            if mid <= lo || mid >= hi {
                break;
            }
            if self.column_left(mid) > x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }

    pub fn locate(&self, x: f64, y: f64) -> Result<SkewCell> {
        if !self.contains(x, y) {
            return Err(Error::OutsideSpace { x });
        }
        let tol = super::BOUNDARY_TOL;
        let i = self
            .column_of(x)
            .ok_or_else(|| Error::Invalid(format!("column at x = {x} is below f64 resolution")))?;
        let left = self.column_left(i);
        if (x - left).abs() < tol || (i > 1.0 && (x - self.column_right(i)).abs() < tol) {
            return Err(Error::BoundaryPoint { x });
        }
        let h = self.row_height(i);
        if h < 1e-300 {
            return Err(Error::Invalid(format!("rows of column {i} are below f64 resolution")));
        }
        let r = y / h;
        let j = r.floor();
        if (r - j).abs() * h < tol || (j + 1.0 - r) * h < tol {
            return Err(Error::BoundaryPoint { x: y });
        }
        Ok(SkewCell { i: i as u64, j: j as u64 + 1 })
    }

    pub fn forward(&self, cell: SkewCell, x: f64, y: f64) -> (f64, f64) {
        let i = cell.i as f64;
        let j = cell.j as f64;
        if cell.i == 1 {
            let u = (x - 1.0 + 1.0 / self.zeta) / (1.0 / self.zeta + 0.2);
            return (u, 5.0 * y - (j - 1.0));
        }
        let h = self.row_height(i);
        let yl = y - (j - 1.0) * h;
        let u = self.zeta * i.powf(1.0 + self.s) * (x - self.column_left(i)) * (1.0 + yl);
        (u, yl / h)
    }

    /// Inverse branch of cell `(i, j)` at an image point.
    pub fn inverse(&self, cell: SkewCell, u: f64, v: f64) -> (f64, f64) {
        let i = cell.i as f64;
        let j = cell.j as f64;
        if cell.i == 1 {
            let x = u * (1.0 / self.zeta + 0.2) + 1.0 - 1.0 / self.zeta;
            return (x, (v + j - 1.0) / 5.0);
        }
        let h = self.row_height(i);
        let yl = v * h;
        let x = self.column_left(i) + u / (self.zeta * i.powf(1.0 + self.s) * (1.0 + yl));
        (x, yl + (j - 1.0) * h)
    }

    /// Jacobian of the inverse branch of cell `(i, j)` at the image point `(u, v)`.
    pub fn jacobian(&self, cell: SkewCell, _u: f64, v: f64) -> f64 {
        let i = cell.i as f64;
        if cell.i == 1 {
            return (1.0 / self.zeta + 0.2) / 5.0;
        }
        let h = self.row_height(i);
        h / (self.zeta * i.powf(1.0 + self.s) * (1.0 + v * h))
    }
}

fn euler_maclaurin_tail(n: f64, p: f64) -> f64 {
    let a = n.powf(1.0 - p) / (p - 1.0);
    let b = -0.5 * n.powf(-p);
    let c = p / 12.0 * n.powf(-p - 1.0);
    let d = -p * (p + 1.0) * (p + 2.0) / 720.0 * n.powf(-p - 3.0);
    a + b + c + d
}
