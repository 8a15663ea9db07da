use num_complex::Complex64;
use rayon::prelude::*;

use super::ChartGrid;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::jet2::{self, Jet2};

/// Ambient-valued complex derivatives `∂^p ∂̄^q f` at every node.
#[derive(Debug, Clone)]
pub struct JetTable {
    pub dim: usize,
    pub order: usize,
    pub nodes: usize,
    data: Vec<Complex64>,
    /// Nodes whose jets are trusted (everything for analytic jets; the interior
    /// band for finite-difference jets on open charts).
    pub valid: Vec<bool>,
    /// True when the jets are analytic rather than numerically differentiated.
    pub exact: bool,
}

impl JetTable {
    fn slot(&self, node: usize, p: usize, q: usize) -> usize {
        (node * jet2::LEN + jet2::index(p, q)) * self.dim
    }

    pub fn get(&self, node: usize, p: usize, q: usize) -> &[Complex64] {
        assert!(p + q <= self.order, "jet ({p},{q}) beyond stored order {}", self.order);
        let s = self.slot(node, p, q);
        &self.data[s..s + self.dim]
    }

    /// Real position vector at a node.
    pub fn position(&self, node: usize) -> Vec<f64> {
        self.get(node, 0, 0).iter().map(|c| c.re).collect()
    }

    /// All positions, row-major `node * dim + component`.
    pub fn positions(&self) -> Vec<f64> {
        (0..self.nodes).flat_map(|i| self.position(i)).collect()
    }

    /// Jets from a map evaluated in Taylor arithmetic at every node.
    pub fn from_fn<F>(grid: &ChartGrid, dim: usize, order: usize, f: F) -> Self
    where
        F: Fn(Jet2, Jet2) -> Vec<Jet2> + Sync,
    {
        assert!(order <= jet2::MAX_ORDER);
        let nodes = grid.len();
        let chunks: Vec<Vec<Complex64>> = (0..nodes)
            .into_par_iter()
            .map(|i| {
                let (x, y) = grid.coords(i);
                let (sx, sy) = Jet2::seeds(x, y, order);
                let comps = f(sx, sy);
                assert_eq!(comps.len(), dim, "map returned {} components, expected {dim}", comps.len());
                let mut out = vec![Complex64::new(0.0, 0.0); jet2::LEN * dim];
                for t in 0..=order {
                    for q in 0..=t {
                        let p = t - q;
                        for (c, j) in comps.iter().enumerate() {
                            out[jet2::index(p, q) * dim + c] = j.derivative(p, q);
                        }
                    }
                }
                out
            })
            .collect();
        Self { dim, order, nodes, data: chunks.concat(), valid: vec![true; nodes], exact: true }
    }

    /// Jets obtained by differentiating sampled positions on the chart.
    pub fn from_samples(grid: &ChartGrid, samples: &[f64], dim: usize, order: usize) -> Result<Self> {
        let nodes = grid.len();
        if samples.len() != nodes * dim {
            return Err(Error::Input(format!("expected {} sample values ({} nodes x {dim}), got {}", nodes * dim, nodes, samples.len())));
        }
        if order > jet2::MAX_ORDER {
            return Err(Error::Accuracy(format!("jet order {order} exceeds {}", jet2::MAX_ORDER)));
        }
        let mut data = vec![Complex64::new(0.0, 0.0); nodes * jet2::LEN * dim];
        let comps: Vec<Vec<f64>> = (0..dim).map(|c| (0..nodes).map(|i| samples[i * dim + c]).collect()).collect();
        let pairs: Vec<(usize, usize)> = (0..=order).flat_map(|t| (0..=t).map(move |q| (t - q, q))).collect();
        let results: Vec<Result<Vec<Vec<Complex64>>>> =
            pairs.par_iter().map(|&(p, q)| comps.iter().map(|c| grid.differentiate_real(c, p, q)).collect()).collect();
        for (&(p, q), res) in pairs.iter().zip(results) {
            let res = res?;
            for (c, field) in res.iter().enumerate() {
                for (i, v) in field.iter().enumerate() {
                    data[(i * jet2::LEN + jet2::index(p, q)) * dim + c] = *v;
                }
            }
        }
        let valid = grid.interior_mask(grid.boundary_band(order));
        Ok(Self { dim, order, nodes, data, valid, exact: false })
    }
}

/// Conformal factor and curvature of the induced metric `F |dz|^2`.
#[derive(Debug, Clone)]
pub struct MetricField {
    /// `φ = μ dz`; the frame `e1 = f_x/λ` makes μ real.
    pub mu: Vec<Complex64>,
    pub lambda: Vec<f64>,
    pub f: Vec<f64>,
    pub k: Vec<f64>,
    /// `|<f_z, f_z>| / |f_z|^2` per node.
    pub conformality: Vec<f64>,
    /// `|Δf + 2f|` per node.
    pub minimality: Vec<f64>,
}

impl MetricField {
    pub fn max_conformality(&self, mask: &[bool]) -> f64 {
        masked_max(&self.conformality, mask)
    }

    pub fn max_minimality(&self, mask: &[bool]) -> f64 {
        masked_max(&self.minimality, mask)
    }
}

pub(crate) fn masked_max(v: &[f64], mask: &[bool]) -> f64 {
    v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x.abs()).fold(0.0, f64::max)
}

/// Induced metric from first jets, with conformality and minimality residuals.
pub fn metric_from_jet(grid: &ChartGrid, jets: &JetTable, tol: &Tolerances) -> Result<MetricField> {
    if jets.order < 2 {
        return Err(Error::Precondition("metric needs jets of order 2".into()));
    }
    let n = grid.len();
    let mut lambda = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut conformality = vec![0.0; n];
    let mut minimality = vec![0.0; n];
    for i in 0..n {
        let fz = jets.get(i, 1, 0);
        let herm: f64 = fz.iter().map(|c| c.norm_sqr()).sum();
        let bil: Complex64 = fz.iter().map(|c| c * c).sum();
        f[i] = 2.0 * herm;
        lambda[i] = f[i].sqrt();
        conformality[i] = if herm > 0.0 { bil.norm() / herm } else { f64::INFINITY };
        let fzzb = jets.get(i, 1, 1);
        let pos = jets.get(i, 0, 0);
        minimality[i] = fzzb.iter().zip(pos).map(|(d, p)| (4.0 * d / f[i] + 2.0 * p).norm_sqr()).sum::<f64>().sqrt();
    }
    for i in (0..n).filter(|&i| jets.valid[i]) {
        if !(lambda[i] >= tol.lambda_floor) {
            return Err(Error::DegenerateImmersion { lambda: lambda[i], node: i });
        }
    }
    let worst = masked_max(&conformality, &jets.valid);
    if worst > tol.conformality {
        return Err(Error::NotConformal { residual: worst, tolerance: tol.conformality });
    }
    let mu = lambda.iter().map(|&l| Complex64::new(l, 0.0)).collect();
    let mut metric = MetricField { mu, lambda, f, k: vec![0.0; n], conformality, minimality };
    metric.k =
        if jets.exact && jets.order >= 3 { (0..n).map(|i| jet_curvature(jets, i)).collect() } else { gauss_curvature(grid, &metric)? };
    Ok(metric)
}

/// `K = -(2/F) ∂∂̄ log F` evaluated pointwise from third-order jets.
fn jet_curvature(jets: &JetTable, i: usize) -> f64 {
    let d = |p: usize, q: usize| jets.get(i, p, q);
    let dot = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<Complex64>();
    let f = 2.0 * dot(d(1, 0), d(0, 1));
    let fz = 2.0 * (dot(d(2, 0), d(0, 1)) + dot(d(1, 0), d(1, 1)));
    let fzb = 2.0 * (dot(d(1, 1), d(0, 1)) + dot(d(1, 0), d(0, 2)));
    let fzzb = 2.0 * (dot(d(2, 1), d(0, 1)) + dot(d(2, 0), d(0, 2)) + dot(d(1, 1), d(1, 1)) + dot(d(1, 0), d(1, 2)));
    let ddlog = (fzzb * f - fz * fzb) / (f * f);
    -(2.0 / f.re) * ddlog.re
}

/// `K = -Δ log λ`.
pub fn gauss_curvature(grid: &ChartGrid, metric: &MetricField) -> Result<Vec<f64>> {
    let log_l: Vec<f64> = metric.lambda.iter().map(|l| l.ln()).collect();
    Ok(grid.laplace_beltrami(&log_l, metric)?.into_iter().map(|v| -v).collect())
}

/// Metric field from a prescribed conformal factor.
pub fn metric_from_lambda(grid: &ChartGrid, lambda: Vec<f64>) -> Result<MetricField> {
    let n = lambda.len();
    let f: Vec<f64> = lambda.iter().map(|l| l * l).collect();
    let mu = lambda.iter().map(|&l| Complex64::new(l, 0.0)).collect();
    let mut metric = MetricField { mu, lambda, f, k: vec![0.0; n], conformality: vec![0.0; n], minimality: vec![0.0; n] };
    metric.k = gauss_curvature(grid, &metric)?;
    Ok(metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::ChartSpec;
    use std::f64::consts::PI;

    fn clifford(x: Jet2, y: Jet2) -> Vec<Jet2> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![x.cos() * s, x.sin() * s, y.cos() * s, y.sin() * s]
    }

    #[test]
    fn clifford_metric() {
        let g = ChartGrid::new(ChartSpec::torus(2.0 * PI, 2.0 * PI, 32, 32)).unwrap();
        let jets = JetTable::from_fn(&g, 4, 3, clifford);
        let m = metric_from_jet(&g, &jets, &Tolerances::default()).unwrap();
        assert!(m.lambda.iter().all(|l| (l - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14));
        assert!(m.max_conformality(&jets.valid) < 1e-12);
        assert!(m.max_minimality(&jets.valid) < 1e-12);
        assert!(m.k.iter().all(|k| k.abs() < 1e-9));
    }

    #[test]
    fn sampled_jets_match_analytic() {
        let g = ChartGrid::new(ChartSpec::torus(2.0 * PI, 2.0 * PI, 32, 32)).unwrap();
        let exact = JetTable::from_fn(&g, 4, 3, clifford);
        let num = JetTable::from_samples(&g, &exact.positions(), 4, 3).unwrap();
        for i in (0..g.len()).step_by(37) {
            for (p, q) in [(1, 0), (2, 0), (1, 1), (3, 0), (1, 2)] {
                for (a, b) in exact.get(i, p, q).iter().zip(num.get(i, p, q)) {
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn non_conformal_input_rejected() {
        let g = ChartGrid::new(ChartSpec::torus(2.0 * PI, 2.0 * PI, 16, 16)).unwrap();
        let jets = JetTable::from_fn(&g, 4, 2, |x, y| clifford(x * 2.0, y));
        let err = metric_from_jet(&g, &jets, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::NotConformal { .. }));
    }
}
