//! Truncated bivariate Taylor series in `(z - z0, zbar - zbar0)`.
//!
//! Gallery surfaces are written once as ordinary arithmetic on [`Jet2`]; the
//! coefficient of `dz^p dzbar^q` then yields `∂^p ∂̄^q f / (p! q!)` exactly.

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

pub const MAX_ORDER: usize = 6;
pub const LEN: usize = (MAX_ORDER + 1) * (MAX_ORDER + 2) / 2;

#[inline]
pub const fn index(p: usize, q: usize) -> usize {
    let t = p + q;
    t * (t + 1) / 2 + q
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

// (i, j, k, total) with k = index(p1+p2, q1+q2), sorted by total.
fn product_table() -> &'static [(u8, u8, u8, u8)] {
    static TABLE: OnceLock<Vec<(u8, u8, u8, u8)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = Vec::new();
        for t1 in 0..=MAX_ORDER {
            for q1 in 0..=t1 {
                for t2 in 0..=(MAX_ORDER - t1) {
                    for q2 in 0..=t2 {
                        let (p1, p2) = (t1 - q1, t2 - q2);
                        let k = index(p1 + p2, q1 + q2);
                        out.push((index(p1, q1) as u8, index(p2, q2) as u8, k as u8, (t1 + t2) as u8));
                    }
                }
            }
        }
        out.sort_by_key(|e| e.3);
        out
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub c: [Complex64; LEN],
    pub order: u8,
}

impl Jet2 {
    pub fn constant(v: f64, order: usize) -> Self {
        Self::constant_c(Complex64::new(v, 0.0), order)
    }

    pub fn constant_c(v: Complex64, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let mut c = [Complex64::new(0.0, 0.0); LEN];
        c[0] = v;
        Self { c, order: order as u8 }
    }

    /// Seeds for the real coordinates: `x = x0 + (dz + dzbar)/2`, `y = y0 + (dz - dzbar)/(2i)`.
    pub fn seeds(x0: f64, y0: f64, order: usize) -> (Self, Self) {
        let mut x = Self::constant(x0, order);
        let mut y = Self::constant(y0, order);
        if order >= 1 {
            x.c[index(1, 0)] = Complex64::new(0.5, 0.0);
            x.c[index(0, 1)] = Complex64::new(0.5, 0.0);
            y.c[index(1, 0)] = Complex64::new(0.0, -0.5);
            y.c[index(0, 1)] = Complex64::new(0.0, 0.5);
        }
        (x, y)
    }

    pub fn value(&self) -> Complex64 {
        self.c[0]
    }

    /// `∂^p ∂̄^q` of the represented function at the expansion point.
    pub fn derivative(&self, p: usize, q: usize) -> Complex64 {
        if p + q > self.order as usize {
            return Complex64::new(0.0, 0.0);
        }
        self.c[index(p, q)] * (factorial(p) * factorial(q))
    }

    pub fn scale(mut self, s: f64) -> Self {
        for v in self.c.iter_mut() {
            *v *= s;
        }
        self
    }

    /// `g(self)` from the derivatives `g^{(k)}(a0)`, `k = 0..=order`.
    pub fn compose(&self, derivs: &[Complex64]) -> Self {
        let ord = self.order as usize;
        let mut delta = *self;
        delta.c[0] = Complex64::new(0.0, 0.0);
        let mut out = Self::constant_c(derivs[0], ord);
        let mut power = Self::constant(1.0, ord);
        let mut fact = 1.0;
        for (k, d) in derivs.iter().enumerate().take(ord + 1).skip(1) {
            power = power * delta;
            fact *= k as f64;
            out = out + power.scale_c(*d / fact);
        }
        out
    }

    fn scale_c(mut self, s: Complex64) -> Self {
        for v in self.c.iter_mut() {
            *v *= s;
        }
        self
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose(&vec![e; self.order as usize + 1])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let d: Vec<_> = (0..=self.order as usize).map(|k| [s, c, -s, -c][k % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let d: Vec<_> = (0..=self.order as usize).map(|k| [c, -s, -c, s][k % 4]).collect();
        self.compose(&d)
    }

    /// `self^e` for real `e`, expanded around the constant term.
    pub fn powf(&self, e: f64) -> Self {
        let a = self.c[0];
        let mut d = Vec::with_capacity(self.order as usize + 1);
        let mut coef = 1.0;
        for k in 0..=self.order as usize {
            d.push(a.powf(e - k as f64) * coef);
            coef *= e - k as f64;
        }
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Self {
        self.powf(-1.0)
    }

    pub fn ln(&self) -> Self {
        let a = self.c[0];
        let mut d = vec![a.ln()];
        let mut coef = 1.0;
        for k in 1..=self.order as usize {
            d.push(a.powf(-(k as f64)) * coef);
            coef *= -(k as f64);
        }
        self.compose(&d)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, o: Jet2) -> Jet2 {
        for (a, b) in self.c.iter_mut().zip(o.c.iter()) {
            *a += b;
        }
        self.order = self.order.min(o.order);
        self
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(mut self, o: Jet2) -> Jet2 {
        for (a, b) in self.c.iter_mut().zip(o.c.iter()) {
            *a -= b;
        }
        self.order = self.order.min(o.order);
        self
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let ord = self.order.min(o.order);
        let mut out = [Complex64::new(0.0, 0.0); LEN];
        for &(i, j, k, t) in product_table() {
            if t > ord {
                break;
            }
            out[k as usize] += self.c[i as usize] * o.c[j as usize];
        }
        Jet2 { c: out, order: ord }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, v: f64) -> Jet2 {
        self.c[0] += v;
        self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, v: f64) -> Jet2 {
        self.c[0] -= v;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, v: f64) -> Jet2 {
        self.scale(v)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, j: Jet2) -> Jet2 {
        j.scale(self)
    }
}
