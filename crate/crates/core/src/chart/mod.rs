//! Conformal coordinate charts and the differential operators built on them.
//!
//! Node `(ix, iy)` lives at index `iy * nx + ix`. Torus charts are doubly
//! periodic with the right/top endpoints excluded and differentiate spectrally;
//! open charts include both endpoints and use 8th-order finite differences,
//! off-centered near the edges.

mod fd;
mod metric;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fd::{fornberg, stencil_radius, Stencil};
pub(crate) use metric::masked_max;
pub use metric::{gauss_curvature, metric_from_jet, metric_from_lambda, JetTable, MetricField};

pub const MIN_RESOLUTION: usize = 8;
/// Accuracy order of the open-chart stencils.
pub const FD_ACCURACY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Torus,
    OpenRectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub topology: Topology,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
}

impl ChartSpec {
    pub fn torus(lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        Self { topology: Topology::Torus, lx, ly, nx, ny, x0: 0.0, y0: 0.0 }
    }

    pub fn open(x0: f64, y0: f64, lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        Self { topology: Topology::OpenRectangle, lx, ly, nx, ny, x0, y0 }
    }

    pub fn with_resolution(&self, nx: usize, ny: usize) -> Self {
        Self { nx, ny, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lx.is_finite() && self.ly.is_finite()) {
            return Err(Error::Config(format!("chart extents must be positive, got {} x {}", self.lx, self.ly)));
        }
        if self.nx < MIN_RESOLUTION || self.ny < MIN_RESOLUTION {
            return Err(Error::Config(format!("chart resolution {}x{} below minimum {MIN_RESOLUTION}", self.nx, self.ny)));
        }
        Ok(())
    }
}

/// Uniform grid on a conformal chart, with cached FFT plans on tori.
#[derive(Clone)]
pub struct ChartGrid {
    spec: ChartSpec,
    hx: f64,
    hy: f64,
    ffts: Option<Arc<Ffts>>,
}

struct Ffts {
    fx: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for ChartGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartGrid").field("spec", &self.spec).field("hx", &self.hx).field("hy", &self.hy).finish()
    }
}

impl ChartGrid {
    pub fn new(spec: ChartSpec) -> Result<Self> {
        spec.validate()?;
        let (hx, hy, ffts) = match spec.topology {
            Topology::Torus => {
                let mut planner = FftPlanner::new();
                let ffts = Ffts {
                    fx: planner.plan_fft_forward(spec.nx),
                    ix: planner.plan_fft_inverse(spec.nx),
                    fy: planner.plan_fft_forward(spec.ny),
                    iy: planner.plan_fft_inverse(spec.ny),
                };
                (spec.lx / spec.nx as f64, spec.ly / spec.ny as f64, Some(Arc::new(ffts)))
            }
            Topology::OpenRectangle => (spec.lx / (spec.nx - 1) as f64, spec.ly / (spec.ny - 1) as f64, None),
        };
        Ok(Self { spec, hx, hy, ffts })
    }

    pub fn spec(&self) -> &ChartSpec {
        &self.spec
    }

    pub fn topology(&self) -> Topology {
        self.spec.topology
    }

    pub fn is_torus(&self) -> bool {
        self.spec.topology == Topology::Torus
    }

    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    pub fn ny(&self) -> usize {
        self.spec.ny
    }

    pub fn len(&self) -> usize {
        self.spec.nx * self.spec.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.spec.nx + ix
    }

    #[inline]
    pub fn ixy(&self, i: usize) -> (usize, usize) {
        (i % self.spec.nx, i / self.spec.nx)
    }

    pub fn coords(&self, i: usize) -> (f64, f64) {
        let (ix, iy) = self.ixy(i);
        (self.spec.x0 + ix as f64 * self.hx, self.spec.y0 + iy as f64 * self.hy)
    }

    pub fn z(&self, i: usize) -> Complex64 {
        let (x, y) = self.coords(i);
        Complex64::new(x, y)
    }

    pub fn diameter(&self) -> f64 {
        self.spec.lx.hypot(self.spec.ly)
    }

    /// Coordinate area element `dx dy` of one node (trapezoid weights on open charts).
    pub fn quadrature_weight(&self, i: usize) -> f64 {
        let base = self.hx * self.hy;
        if self.is_torus() {
            return base;
        }
        let (ix, iy) = self.ixy(i);
        let wx = if ix == 0 || ix == self.spec.nx - 1 { 0.5 } else { 1.0 };
        let wy = if iy == 0 || iy == self.spec.ny - 1 { 0.5 } else { 1.0 };
        base * wx * wy
    }

    /// Largest total derivative order a single call may request.
    pub fn max_order(&self) -> usize {
        let n = self.spec.nx.min(self.spec.ny);
        match self.spec.topology {
            Topology::Torus => (n / 2).saturating_sub(1),
            Topology::OpenRectangle => (1..=12).take_while(|&d| fd::stencil_width(d, FD_ACCURACY) <= n).last().unwrap_or(0),
        }
    }

    /// Width of the boundary band polluted by off-centered stencils of order `d`.
    pub fn boundary_band(&self, d: usize) -> usize {
        match self.spec.topology {
            Topology::Torus => 0,
            Topology::OpenRectangle => stencil_radius(d, FD_ACCURACY),
        }
    }

    /// Nodes at distance at least `band` from the chart edge.
    pub fn interior_mask(&self, band: usize) -> Vec<bool> {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        (0..self.len())
            .map(|i| {
                let (ix, iy) = self.ixy(i);
                ix >= band && iy >= band && ix + band < nx && iy + band < ny
            })
            .collect()
    }

    /// `∂^p ∂̄^q` of a complex field, with `∂ = (∂x - i∂y)/2`.
    pub fn differentiate(&self, field: &[Complex64], p: usize, q: usize) -> Result<Vec<Complex64>> {
        self.check_field(field.len())?;
        let total = p + q;
        if total == 0 {
            return Ok(field.to_vec());
        }
        self.check_order(total)?;
        let terms = wirtinger_expansion(p, q);
        match self.spec.topology {
            Topology::Torus => Ok(self.spectral(field, |kx, ky, nyq_x, nyq_y| {
                let mut s = Complex64::new(0.0, 0.0);
                for &(a, b, c) in &terms {
                    s += c * ik_power(kx, a, nyq_x) * ik_power(ky, b, nyq_y);
                }
                s
            })),
            Topology::OpenRectangle => {
                let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
                for &(a, b, c) in &terms {
                    let d = self.fd_partial(field, a, b);
                    for (o, v) in out.iter_mut().zip(d) {
                        *o += c * v;
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn differentiate_real(&self, field: &[f64], p: usize, q: usize) -> Result<Vec<Complex64>> {
        let c: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.differentiate(&c, p, q)
    }

    /// Plain partial derivative `∂x^a ∂y^b`.
    pub fn partial(&self, field: &[Complex64], a: usize, b: usize) -> Result<Vec<Complex64>> {
        self.check_field(field.len())?;
        if a + b == 0 {
            return Ok(field.to_vec());
        }
        self.check_order(a + b)?;
        Ok(match self.spec.topology {
            Topology::Torus => self.spectral(field, |kx, ky, nx, ny| ik_power(kx, a, nx) * ik_power(ky, b, ny)),
            Topology::OpenRectangle => self.fd_partial(field, a, b),
        })
    }

    pub fn partial_real(&self, field: &[f64], a: usize, b: usize) -> Result<Vec<f64>> {
        let c: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Ok(self.partial(&c, a, b)?.into_iter().map(|v| v.re).collect())
    }

    /// Euclidean Laplacian `u_xx + u_yy` of a real field.
    pub fn flat_laplacian(&self, u: &[f64]) -> Result<Vec<f64>> {
        let c: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let d = self.differentiate(&c, 1, 1)?;
        Ok(d.into_iter().map(|v| 4.0 * v.re).collect())
    }

    /// `Δu = (4/F) ∂∂̄u` for the metric `F |dz|^2`.
    pub fn laplace_beltrami(&self, u: &[f64], metric: &MetricField) -> Result<Vec<f64>> {
        let lap = self.flat_laplacian(u)?;
        Ok(lap.into_iter().zip(&metric.f).map(|(l, f)| l / f).collect())
    }

    /// Partial derivative with compact stencils on every topology (periodic
    /// wrap on tori), so a singular point only pollutes its neighbourhood.
    pub fn local_partial(&self, u: &[f64], a: usize, b: usize) -> Result<Vec<f64>> {
        self.check_field(u.len())?;
        if self.spec.topology == Topology::OpenRectangle {
            return self.partial_real(u, a, b);
        }
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut cur = u.to_vec();
        for (axis, order) in [(0usize, a), (1, b)] {
            if order == 0 {
                continue;
            }
            let h = if axis == 0 { self.hx } else { self.hy };
            let st = Stencil::new(order, FD_ACCURACY, h);
            let r = (st.width - 1) / 2;
            let row = &st.rows[r];
            let mut next = vec![0.0; cur.len()];
            for iy in 0..ny {
                for ix in 0..nx {
                    let mut acc = 0.0;
                    for (j, w) in row.iter().enumerate() {
                        let off = j as isize - r as isize;
                        let (sx, sy) = if axis == 0 {
                            ((ix as isize + off).rem_euclid(nx as isize) as usize, iy)
                        } else {
                            (ix, (iy as isize + off).rem_euclid(ny as isize) as usize)
                        };
                        acc += w * cur[sy * nx + sx];
                    }
                    next[iy * nx + ix] = acc;
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Bicubic Lagrange interpolation of a node field at chart coordinates `(x, y)`.
    pub fn interpolate(&self, u: &[f64], x: f64, y: f64) -> f64 {
        let (nx, ny) = (self.spec.nx as isize, self.spec.ny as isize);
        let tx = (x - self.spec.x0) / self.hx;
        let ty = (y - self.spec.y0) / self.hy;
        let torus = self.is_torus();
        let base = |t: f64, n: isize| -> isize {
            let b = t.floor() as isize - 1;
            if torus {
                b
            } else {
                b.clamp(0, n - 4)
            }
        };
        let (bx, by) = (base(tx, nx), base(ty, ny));
        let weights = |t: f64, b: isize| -> [f64; 4] {
            let mut w = [1.0; 4];
            for (j, wj) in w.iter_mut().enumerate() {
                for k in 0..4 {
                    if k != j {
                        *wj *= (t - (b + k as isize) as f64) / (j as f64 - k as f64);
                    }
                }
            }
            w
        };
        let (wx, wy) = (weights(tx, bx), weights(ty, by));
        let mut acc = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let iy = (by + j as isize).rem_euclid(ny) as usize;
            for (k, wxk) in wx.iter().enumerate() {
                let ix = (bx + k as isize).rem_euclid(nx) as usize;
                acc += wyj * wxk * u[iy * self.spec.nx + ix];
            }
        }
        acc
    }

    fn check_field(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Precondition(format!("field has {len} nodes, chart has {}", self.len())));
        }
        Ok(())
    }

    fn check_order(&self, order: usize) -> Result<()> {
        let max = self.max_order();
        if order > max {
            return Err(Error::Accuracy(format!(
                "derivative order {order} exceeds {max} supported by a {}x{} {:?} chart",
                self.spec.nx, self.spec.ny, self.spec.topology
            )));
        }
        Ok(())
    }

    fn wavenumbers(n: usize, length: f64) -> Vec<(f64, bool)> {
        (0..n)
            .map(|j| {
                let signed = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
                let nyquist = n.is_multiple_of(2) && j == n / 2;
                (2.0 * std::f64::consts::PI * signed as f64 / length, nyquist)
            })
            .collect()
    }

    fn spectral<S>(&self, field: &[Complex64], symbol: S) -> Vec<Complex64>
    where
        S: Fn(f64, f64, bool, bool) -> Complex64,
    {
        let ffts = self.ffts.as_ref().expect("spectral differentiation on a torus chart");
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut rows = field.to_vec();
        ffts.fx.process(&mut rows);
        let mut cols = transpose(&rows, nx, ny);
        ffts.fy.process(&mut cols);
        let kx = Self::wavenumbers(nx, self.spec.lx);
        let ky = Self::wavenumbers(ny, self.spec.ly);
        let scale = 1.0 / (nx * ny) as f64;
        for (jx, &(kxv, nqx)) in kx.iter().enumerate() {
            for (jy, &(kyv, nqy)) in ky.iter().enumerate() {
                cols[jx * ny + jy] *= symbol(kxv, kyv, nqx, nqy) * scale;
            }
        }
        ffts.iy.process(&mut cols);
        let mut out = transpose(&cols, ny, nx);
        ffts.ix.process(&mut out);
        out
    }

    fn fd_partial(&self, field: &[Complex64], a: usize, b: usize) -> Vec<Complex64> {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut cur = field.to_vec();
        if a > 0 {
            let st = Stencil::new(a, FD_ACCURACY, self.hx);
            let mut next = vec![Complex64::new(0.0, 0.0); cur.len()];
            for iy in 0..ny {
                let row = &cur[iy * nx..(iy + 1) * nx];
                for ix in 0..nx {
                    next[iy * nx + ix] = st.apply(row, ix);
                }
            }
            cur = next;
        }
        if b > 0 {
            let st = Stencil::new(b, FD_ACCURACY, self.hy);
            let t = transpose(&cur, nx, ny);
            let mut next = vec![Complex64::new(0.0, 0.0); cur.len()];
            for ix in 0..nx {
                let col = &t[ix * ny..(ix + 1) * ny];
                for iy in 0..ny {
                    next[iy * nx + ix] = st.apply(col, iy);
                }
            }
            cur = next;
        }
        cur
    }
}

/// Row-major `rows x cols` -> row-major `cols x rows`, where the input row length is `cols`.
fn transpose(data: &[Complex64], cols: usize, rows: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

fn ik_power(k: f64, a: usize, nyquist: bool) -> Complex64 {
    if a == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if nyquist && a % 2 == 1 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, k).powu(a as u32)
}

/// `∂^p ∂̄^q = 2^{-(p+q)} (Dx - iDy)^p (Dx + iDy)^q` as `(a, b, coef)` of `Dx^a Dy^b`.
pub fn wirtinger_expansion(p: usize, q: usize) -> Vec<(usize, usize, Complex64)> {
    let n = p + q;
    // poly[b] = coefficient of Dx^{n-b} Dy^b
    let mut poly = vec![Complex64::new(0.0, 0.0); n + 1];
    poly[0] = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    for (deg, factor) in std::iter::repeat_n(-i, p).chain(std::iter::repeat_n(i, q)).enumerate() {
        let mut next = vec![Complex64::new(0.0, 0.0); n + 1];
        for b in 0..=deg {
            next[b] += poly[b];
            next[b + 1] += poly[b] * factor;
        }
        poly = next;
    }
    let scale = 0.5f64.powi(n as i32);
    poly.into_iter().enumerate().filter(|(_, c)| c.norm() > 0.0).map(|(b, c)| (n - b, b, c * scale)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn torus(n: usize) -> ChartGrid {
        ChartGrid::new(ChartSpec::torus(2.0 * PI, 2.0 * PI, n, n)).unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let g = torus(64);
        assert_eq!(g.len(), 4096);
        assert!((g.spacing().0 - 2.0 * PI / 64.0).abs() < 1e-15);
        let o = ChartGrid::new(ChartSpec::open(0.0, 0.0, 1.0, 1.0, 8, 8)).unwrap();
        assert_eq!(o.len(), 64);
        assert!((o.coords(63).0 - 1.0).abs() < 1e-15);
        assert!(matches!(ChartGrid::new(ChartSpec::torus(2.0 * PI, 2.0 * PI, 4, 4)), Err(Error::Config(_))));
        assert!(matches!(ChartGrid::new(ChartSpec::torus(-1.0, 1.0, 16, 16)), Err(Error::Config(_))));
    }

    #[test]
    fn plane_wave_wirtinger() {
        let g = torus(32);
        let f: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new(0.0, g.coords(i).0).exp()).collect();
        let d = g.differentiate(&f, 1, 0).unwrap();
        for (i, v) in d.iter().enumerate() {
            let expect = Complex64::new(0.0, 0.5) * f[i];
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn mixed_derivative_of_product_of_sines() {
        let g = torus(64);
        let f: Vec<f64> = (0..g.len())
            .map(|i| {
                let (x, y) = g.coords(i);
                x.sin() * y.sin()
            })
            .collect();
        let d = g.differentiate_real(&f, 1, 1).unwrap();
        // ∂∂̄ = Δ/4
        let err = (0..g.len()).map(|i| (d[i].re + 0.5 * f[i]).abs() + d[i].im.abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        for g in [torus(16), ChartGrid::new(ChartSpec::open(0.0, 0.0, 1.0, 2.0, 16, 20)).unwrap()] {
            let f = vec![Complex64::new(3.0, -1.0); g.len()];
            for (p, q) in [(1, 0), (0, 2), (1, 1), (2, 1)] {
                let d = g.differentiate(&f, p, q).unwrap();
                assert!(d.iter().all(|v| v.norm() < 1e-9));
            }
        }
    }

    #[test]
    fn open_chart_polynomial_accuracy() {
        let g = ChartGrid::new(ChartSpec::open(-0.5, -0.5, 1.0, 1.0, 33, 33)).unwrap();
        let f: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let (x, y) = g.coords(i);
                Complex64::new((x + 0.3 * y).exp(), 0.0)
            })
            .collect();
        let d = g.partial(&f, 1, 1).unwrap();
        let err = (0..g.len()).map(|i| (d[i] - f[i] * 0.3).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn order_beyond_resolution_is_accuracy_error() {
        let g = ChartGrid::new(ChartSpec::open(0.0, 0.0, 1.0, 1.0, 8, 8)).unwrap();
        let f = vec![Complex64::new(1.0, 0.0); g.len()];
        assert!(matches!(g.differentiate(&f, 1, 0), Err(Error::Accuracy(_))));
    }

    #[test]
    fn flat_laplacian_of_plane_wave() {
        let g = torus(32);
        let u: Vec<f64> = (0..g.len()).map(|i| g.coords(i).0.sin()).collect();
        let l = g.flat_laplacian(&u).unwrap();
        assert!(u.iter().zip(&l).all(|(a, b)| (a + b).abs() < 1e-10));
    }

    #[test]
    fn wirtinger_coefficients() {
        // ∂∂̄ = (Dxx + Dyy)/4
        let t = wirtinger_expansion(1, 1);
        assert_eq!(t.len(), 2);
        for (a, b, c) in t {
            assert!(a + b == 2 && (c - Complex64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }
}
