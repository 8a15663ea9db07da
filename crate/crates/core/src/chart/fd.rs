//! Finite-difference weights on arbitrary 1-D node sets (Fornberg's recursion).

/// Weights `w[k][j]` for the k-th derivative at `x0` from values at `xs[j]`, `k = 0..=m`.
pub fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Stencil width giving 8th-order accuracy for a derivative of order `d`.
pub fn stencil_width(d: usize, accuracy: usize) -> usize {
    if d == 0 {
        1
    } else {
        2 * d.div_ceil(2) - 1 + accuracy
    }
}

pub fn stencil_radius(d: usize, accuracy: usize) -> usize {
    (stencil_width(d, accuracy) - 1) / 2
}

/// Weights for derivative order `d` on a uniform grid of `n` nodes with spacing `h`.
///
/// Row `s` holds the weights used when the evaluation node sits at position `s`
/// inside the stencil; interior nodes use the centered row.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub width: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Stencil {
    pub fn new(d: usize, accuracy: usize, h: f64) -> Self {
        let width = stencil_width(d, accuracy);
        let xs: Vec<f64> = (0..width).map(|j| j as f64 * h).collect();
        let rows = (0..width).map(|s| fornberg(s as f64 * h, &xs, d).pop().unwrap()).collect();
        Self { width, rows }
    }

    pub fn apply<T>(&self, values: &[T], i: usize) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let n = values.len();
        let r = (self.width - 1) / 2;
        let start = i.saturating_sub(r).min(n - self.width);
        let row = &self.rows[i - start];
        let mut acc = values[start] * row[0];
        for j in 1..self.width {
            acc = acc + values[start + j] * row[j];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_second_derivative_weights() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[2][0] - 1.0).abs() < 1e-14);
        assert!((w[2][1] + 2.0).abs() < 1e-14);
        assert!((w[1][2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn polynomial_exactness_off_center() {
        let h = 0.1;
        let st = Stencil::new(3, 8, h);
        let vals: Vec<f64> = (0..20).map(|j| (j as f64 * h).powi(5)).collect();
        for i in [0usize, 2, 10, 19] {
            let x = i as f64 * h;
            let d = st.apply(&vals, i);
            assert!((d - 60.0 * x * x).abs() < 1e-7, "{i} {d}");
        }
    }
}
