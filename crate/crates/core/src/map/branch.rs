use super::Interval;
use crate::expr::Expr;
use crate::real::Scalar;

#[derive(Clone, Debug)]
pub enum Kind {
    /// `T(x) = slope * x + offset`.
    Affine { slope: f64, offset: f64 },
    /// `T(x) = x^2 + b x + c`, increasing on the domain.
    Quadratic { b: f64, c: f64 },
    /// `T(x) = 1 / (k - x)`.
    Reciprocal { k: f64 },
    /// User formulas; `params` are appended after the point variable.
    Formula { forward: Expr, inverse: Expr, jacobian: Expr, params: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub id: String,
    pub domain: Interval,
    pub kind: Kind,
    pub image: Interval,
    pub contraction: Option<Scalar>,
    /// Declared bound on the Lipschitz constant of ln Jh on the image.
    pub distortion: Option<Scalar>,
    pub extends_to_closure: bool,
    increasing: bool,
}

impl Branch {
    pub fn new(id: impl Into<String>, domain: Interval, kind: Kind) -> Self {
        let mut b = Branch {
            id: id.into(),
            domain,
            kind,
            image: domain,
            contraction: None,
            distortion: None,
            extends_to_closure: true,
            increasing: true,
        };
        let a = b.forward(domain.lo);
        let z = b.forward(domain.hi);
        b.increasing = z >= a;
        b.image = Interval::new(a.min(z), a.max(z));
        b
    }

    /// Override the computed image with exact endpoints.
    pub fn with_image(mut self, image: Interval) -> Self {
        self.image = image;
        self
    }

    pub fn with_contraction(mut self, c: Scalar) -> Self {
        self.contraction = Some(c);
        self
    }

    pub fn with_distortion(mut self, d: Scalar) -> Self {
        self.distortion = Some(d);
        self
    }

    pub fn is_increasing(&self) -> bool {
        self.increasing
    }

    pub fn forward(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Affine { slope, offset } => slope * x + offset,
            Kind::Quadratic { b, c } => x * x + b * x + c,
            Kind::Reciprocal { k } => 1.0 / (k - x),
            Kind::Formula { forward, params, .. } => eval_with(forward, x, params),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Affine { slope, offset } => (y - offset) / slope,
            Kind::Quadratic { b, c } => 0.5 * (-b + (b * b - 4.0 * (c - y)).sqrt()),
            Kind::Reciprocal { k } => k - 1.0 / y,
            Kind::Formula { inverse, params, .. } => eval_with(inverse, y, params),
        }
    }

    /// Jacobian of the inverse branch at a point of the image.
    pub fn jac(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Affine { slope, .. } => 1.0 / slope.abs(),
            Kind::Quadratic { b, .. } => 1.0 / (2.0 * self.inverse(y) + b),
            Kind::Reciprocal { .. } => 1.0 / (y * y),
            Kind::Formula { jacobian, params, .. } => eval_with(jacobian, y, params),
        }
    }

    /// Image of a sub-interval of the domain, snapping to the cached image at shared ends.
    pub fn map_interval(&self, piece: Interval) -> Interval {
        let end = |x: f64, at_lo: bool| {
            if at_lo && x <= self.domain.lo {
                if self.increasing { self.image.lo } else { self.image.hi }
            } else if !at_lo && x >= self.domain.hi {
                if self.increasing { self.image.hi } else { self.image.lo }
            } else {
                self.forward(x)
            }
        };
        let a = end(piece.lo, true);
        let z = end(piece.hi, false);
        Interval::new(a.min(z), a.max(z))
    }

    /// Pre-image of a sub-interval of the image.
    pub fn pull_interval(&self, piece: Interval) -> Interval {
        let end = |y: f64| {
            if y <= self.image.lo {
                if self.increasing { self.domain.lo } else { self.domain.hi }
            } else if y >= self.image.hi {
                if self.increasing { self.domain.hi } else { self.domain.lo }
            } else {
                self.inverse(y)
            }
        };
        let a = end(piece.lo);
        let z = end(piece.hi);
        Interval::new(a.min(z), a.max(z))
    }
}

fn eval_with(e: &Expr, x: f64, params: &[f64]) -> f64 {
    let mut vals = Vec::with_capacity(1 + params.len());
    vals.push(x);
    vals.extend_from_slice(params);
    vals.truncate(e.vars().len());
    e.eval(&vals)
}
