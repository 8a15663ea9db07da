//! Frame integration from a-invariant data.
//!
//! Frames are rows of an orthogonal `(n+1) x (n+1)` matrix `F = (f, e_1, ..., e_n)`
//! obeying `dF = Ω F` with `Ω = Ω_x dx + Ω_y dy` skew.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_samples, Analysis};
use crate::chart::{metric_from_lambda, ChartGrid, ChartSpec, Topology};
use crate::classify::{ClassificationReport, Verdict};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::flag::kperp_of;
use crate::invariants::sigma_of;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative size below which a denominator counts as a zero.
const ZERO_FLOOR: f64 = 1e-8;

/// Closure defect below which a torus reconstruction is re-analyzed periodically.
const CLOSURE_GATE: f64 = 1e-11;

/// Stencil width for interpolating `Ω` at Gauss points along an edge.
const STENCIL: usize = 6;

/// `k_r^±` at every node. On a rank-one last level both hold `H̄_{2m+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KField {
    pub k_plus: Vec<Complex64>,
    pub k_minus: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionData {
    pub chart: ChartSpec,
    pub n: usize,
    pub m: usize,
    /// `ρ_0, ..., ρ_{m-1}` with `ρ_0 = 1`.
    pub rho: Vec<f64>,
    /// `θ_0, ..., θ_m`; `θ_0` is ignored.
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub curvature: Vec<f64>,
    /// Levels `1..=m`.
    pub levels: Vec<KField>,
}

impl ReconstructionData {
    pub fn rank(&self, r: usize) -> usize {
        if r < self.m || self.n.is_multiple_of(2) {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nodes = self.chart.nx * self.chart.ny;
        let expected_n = if self.n.is_multiple_of(2) { 2 * self.m + 2 } else { 2 * self.m + 1 };
        if self.m == 0 || self.n != expected_n {
            return Err(Error::Input(format!("n = {} is inconsistent with m = {}", self.n, self.m)));
        }
        if self.rho.len() != self.m || self.theta.len() != self.m + 1 || self.levels.len() != self.m {
            return Err(Error::Input("rho, theta and levels must have lengths m, m+1 and m".into()));
        }
        if self.lambda.len() != nodes
            || self.curvature.len() != nodes
            || self.levels.iter().any(|l| l.k_plus.len() != nodes || l.k_minus.len() != nodes)
        {
            return Err(Error::Input(format!("every field must have {nodes} nodes")));
        }
        for (r, &rho) in self.rho.iter().enumerate() {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::Parameter(format!("rho_{r} = {rho} is outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// `H̄_{2r+1}, H̄_{2r+2}` at node `i`, rotated by `e^{iθ_r/2}`.
    fn hbar(&self, r: usize, i: usize) -> [Complex64; 2] {
        if r == 0 {
            return [Complex64::new(1.0, 0.0), -I];
        }
        let lv = &self.levels[r - 1];
        let phase = Complex64::from_polar(1.0, self.theta[r] / 2.0);
        if self.rank(r) == 1 {
            [phase * lv.k_plus[i], Complex64::new(0.0, 0.0)]
        } else {
            let (kp, km) = (lv.k_plus[i], lv.k_minus[i]);
            [phase * (kp + km) / 2.0, phase * (kp - km) / (2.0 * I)]
        }
    }

    pub fn a_plus(&self, r: usize) -> Vec<f64> {
        self.levels[r - 1].k_plus.iter().map(|k| k.norm()).collect()
    }

    pub fn a_minus(&self, r: usize) -> Vec<f64> {
        self.levels[r - 1].k_minus.iter().map(|k| k.norm()).collect()
    }

    fn level_vanishes(&self, r: usize, tol: &Tolerances) -> bool {
        let top = self.a_plus(r).into_iter().fold(0.0, f64::max);
        let low = self.a_minus(r).into_iter().fold(0.0, f64::max);
        low <= tol.vanishing * top
    }
}

/// Theorem-3 parameter count: `ρ_r ≠ 1` levels plus one when `a_m^+ a_m^- ≠ 0`.
pub fn parameter_count(data: &ReconstructionData, tol: &Tolerances) -> usize {
    let free = data.rho.iter().skip(1).filter(|&&rho| (1.0 - rho).abs() > tol.constancy).count();
    free + usize::from(!data.level_vanishes(data.m, tol))
}

/// Data residuals checked before integration (all relative, max over the mask).
#[derive(Debug, Clone, Serialize)]
pub struct DataResiduals {
    /// `a_r^- - σ_r a_r^+`, `r < m`.
    pub sigma: f64,
    /// `a_1^+` against the curvature.
    pub first_level: f64,
    /// Laplacian identities for `log a_r^±`.
    pub laplacian: f64,
}

impl DataResiduals {
    pub fn worst(&self) -> f64 {
        self.sigma.max(self.first_level).max(self.laplacian)
    }
}

fn rel(abs: f64, scale: f64) -> f64 {
    abs.abs() / scale.abs().max(1.0)
}

fn masked_max(v: &[f64], mask: &[bool]) -> f64 {
    v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).fold(0.0, f64::max)
}

/// Interior nodes away from the stencil band needed by second derivatives.
fn stats_mask(grid: &ChartGrid) -> Vec<bool> {
    grid.interior_mask(grid.boundary_band(2) * 2)
}

pub fn data_residuals(data: &ReconstructionData, tol: &Tolerances) -> Result<DataResiduals> {
    data.validate()?;
    let grid = ChartGrid::new(data.chart.clone())?;
    let nodes = grid.len();
    let (m, k) = (data.m, &data.curvature);
    let mask = stats_mask(&grid);
    let ap: Vec<Vec<f64>> = (1..=m).map(|r| data.a_plus(r)).collect();
    let am: Vec<Vec<f64>> = (1..=m).map(|r| data.a_minus(r)).collect();

    let mut sigma = 0.0f64;
    for r in 1..m {
        let s = sigma_of(data.rho[r]);
        let v: Vec<f64> = (0..nodes).map(|i| rel(am[r - 1][i] - s * ap[r - 1][i], ap[r - 1][i])).collect();
        sigma = sigma.max(masked_max(&v, &mask));
    }
    let first: Vec<f64> = (0..nodes)
        .map(|i| {
            if m == 1 {
                let lhs = ap[0][i].powi(2) + am[0][i].powi(2);
                rel(lhs - 2.0 * (1.0 - k[i]), lhs)
            } else {
                rel(ap[0][i] - ((1.0 + data.rho[1]) * (1.0 - k[i])).sqrt(), ap[0][i])
            }
        })
        .collect();
    let first_level = masked_max(&first, &mask);

    let b2 = |r: usize, i: usize| {
        if r == 0 {
            2.0
        } else {
            2f64.powi(r as i32 - 1) * (ap[r - 1][i].powi(2) + am[r - 1][i].powi(2))
        }
    };
    let rho = |r: usize, i: usize| {
        if r == 0 {
            1.0
        } else {
            let (p, q) = (ap[r - 1][i].powi(2), am[r - 1][i].powi(2));
            (p - q) / (p + q)
        }
    };
    let metric = metric_from_lambda(&grid, data.lambda.clone())?;
    let mut laplacian = 0.0f64;
    for r in 1..=m {
        let vanishes = data.level_vanishes(r, tol);
        for (s, a) in [(-1.0, &ap[r - 1]), (1.0, &am[r - 1])] {
            if s > 0.0 && vanishes {
                continue;
            }
            let log_a: Vec<f64> = a.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
            let lap = grid.laplace_beltrami(&log_a, &metric)?;
            let v: Vec<f64> = (0..nodes)
                .map(|i| {
                    let bracket = if r < m {
                        rho(r, i) * b2(r, i) / (rho(r - 1, i).powi(2) * b2(r - 1, i)) - b2(r + 1, i) / (rho(r, i) * b2(r, i))
                    } else {
                        let kperp = (ap[m - 1][i].powi(2) - am[m - 1][i].powi(2)) / 2.0;
                        2f64.powi(m as i32) * kperp / (rho(m - 1, i).powi(2) * b2(m - 1, i))
                    };
                    let base = (r as f64 + 1.0) * k[i];
                    let scale = lap[i].abs().max(base.abs()).max(bracket.abs());
                    rel(lap[i] - base - s * bracket, scale)
                })
                .collect();
            laplacian = laplacian.max(masked_max(&v, &mask));
        }
    }
    Ok(DataResiduals { sigma, first_level, laplacian })
}

/// Skew connection matrices per node.
#[derive(Debug, Clone)]
pub struct ConnectionForm {
    pub dim: usize,
    pub ox: Vec<DMatrix<f64>>,
    pub oy: Vec<DMatrix<f64>>,
    /// Nodes where every denominator is nonzero.
    pub mask: Vec<bool>,
    /// Disagreement between the normal connection forms obtained from `k^+` and from `k^-`.
    pub gauge_residual: f64,
}

impl ConnectionForm {
    /// Real 1-form `2 Re(w dz)` written into `ω_{ab}` and `ω_{ba}`.
    fn set_dz(&mut self, i: usize, a: usize, b: usize, w: Complex64) {
        self.set(i, a, b, 2.0 * w.re, -2.0 * w.im);
    }

    fn set(&mut self, i: usize, a: usize, b: usize, x: f64, y: f64) {
        self.ox[i][(a, b)] = x;
        self.ox[i][(b, a)] = -x;
        self.oy[i][(a, b)] = y;
        self.oy[i][(b, a)] = -y;
    }
}

/// `∂̄ log(λ^{r+1} k)` for one level, with a validity flag per node.
fn log_dbar(grid: &ChartGrid, lambda: &[f64], k: &[Complex64], r: usize) -> Result<(Vec<Complex64>, Vec<bool>)> {
    let p: Vec<Complex64> = k.iter().zip(lambda).map(|(k, l)| k * l.powi(r as i32 + 1)).collect();
    let scale = p.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let d = grid.differentiate(&p, 0, 1)?;
    let ok: Vec<bool> = p.iter().map(|v| v.norm() > ZERO_FLOOR * scale).collect();
    let g = p.iter().zip(&d).zip(&ok).map(|((p, d), &ok)| if ok { d / p } else { Complex64::new(0.0, 0.0) }).collect();
    Ok((g, ok))
}

pub fn build_connection(data: &ReconstructionData, tol: &Tolerances) -> Result<ConnectionForm> {
    data.validate()?;
    let grid = ChartGrid::new(data.chart.clone())?;
    let (n, m, nodes) = (data.n, data.m, grid.len());
    let dim = n + 1;
    let log_l: Vec<f64> = data.lambda.iter().map(|l| l.ln()).collect();
    let lx = grid.partial_real(&log_l, 1, 0)?;
    let ly = grid.partial_real(&log_l, 0, 1)?;

    // Normal connection of each rank-two level from `∂̄ log(λ^{r+1} k^±)`.
    let mut normal = Vec::new();
    for r in 1..=m {
        if data.rank(r) == 1 {
            normal.push(None);
            continue;
        }
        let lv = &data.levels[r - 1];
        let plus = log_dbar(&grid, &data.lambda, &lv.k_plus, r)?;
        let minus = if data.level_vanishes(r, tol) { None } else { Some(log_dbar(&grid, &data.lambda, &lv.k_minus, r)?) };
        normal.push(Some((plus, minus)));
    }

    let zero = DMatrix::zeros(dim, dim);
    let mut conn =
        ConnectionForm { dim, ox: vec![zero.clone(); nodes], oy: vec![zero; nodes], mask: vec![true; nodes], gauge_residual: 0.0 };
    for i in 0..nodes {
        let lam = data.lambda[i];
        conn.set(i, 0, 1, lam, 0.0);
        conn.set(i, 0, 2, 0.0, lam);
        conn.set(i, 1, 2, -ly[i], lx[i]);
        let hs: Vec<[Complex64; 2]> = (0..=m).map(|r| data.hbar(r, i)).collect();
        for r in 0..m {
            let [ha, hb] = hs[r];
            let kperp = kperp_of([ha, hb]);
            if kperp.abs() <= ZERO_FLOOR * (ha.norm_sqr() + hb.norm_sqr()) {
                conn.mask[i] = false;
                continue;
            }
            let (h1, h2) = (ha.conj(), hb.conj());
            for (j, &h_alpha) in hs[r + 1].iter().enumerate().take(data.rank(r + 1)) {
                let alpha = 2 * r + 3 + j;
                let w1 = h_alpha * lam * h2 / (I * kperp);
                let w2 = -h_alpha * lam * h1 / (I * kperp);
                conn.set_dz(i, 2 * r + 1, alpha, w1);
                conn.set_dz(i, 2 * r + 2, alpha, w2);
            }
        }
        for r in 1..=m {
            let Some(((gp, okp), minus)) = &normal[r - 1] else { continue };
            let from_plus = okp[i].then(|| I * gp[i]);
            let from_minus = minus.as_ref().and_then(|(gm, okm)| okm[i].then(|| -I * gm[i]));
            let nu = match (from_plus, from_minus) {
                (Some(p), Some(q)) => {
                    conn.gauge_residual = conn.gauge_residual.max((p - q).norm());
                    (p + q) / 2.0
                }
                (Some(p), None) | (None, Some(p)) => p,
                (None, None) => {
                    conn.mask[i] = false;
                    continue;
                }
            };
            conn.set(i, 2 * r + 1, 2 * r + 2, 2.0 * nu.re, 2.0 * nu.im);
        }
    }
    Ok(conn)
}

/// `|∂_y Ω_x - ∂_x Ω_y + [Ω_x, Ω_y]|_F` per node, relative to `max(1, |Ω_x| |Ω_y|)`.
pub fn flatness_residual(grid: &ChartGrid, conn: &ConnectionForm) -> Result<Vec<f64>> {
    let (dim, nodes) = (conn.dim, grid.len());
    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|a| (a + 1..dim).map(move |b| (a, b))).collect();
    let derivs: Vec<Result<(Vec<f64>, Vec<f64>)>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let x: Vec<f64> = conn.ox.iter().map(|o| o[(a, b)]).collect();
            let y: Vec<f64> = conn.oy.iter().map(|o| o[(a, b)]).collect();
            Ok((grid.partial_real(&x, 0, 1)?, grid.partial_real(&y, 1, 0)?))
        })
        .collect();
    let derivs = derivs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..nodes)
        .into_par_iter()
        .map(|i| {
            let mut r = &conn.ox[i] * &conn.oy[i] - &conn.oy[i] * &conn.ox[i];
            for (&(a, b), (dy_x, dx_y)) in pairs.iter().zip(&derivs) {
                let d = dy_x[i] - dx_y[i];
                r[(a, b)] += d;
                r[(b, a)] -= d;
            }
            r.norm() / (conn.ox[i].norm() * conn.oy[i].norm()).max(1.0)
        })
        .collect())
}

/// Flatness residual over the interior of the valid nodes.
pub fn flatness_max(grid: &ChartGrid, conn: &ConnectionForm) -> Result<f64> {
    let res = flatness_residual(grid, conn)?;
    let mask: Vec<bool> = stats_mask(grid).into_iter().zip(&conn.mask).map(|(a, &b)| a && b).collect();
    Ok(masked_max(&res, &mask))
}

fn lagrange_weights(xs: &[f64], t: f64) -> Vec<f64> {
    (0..xs.len()).map(|j| xs.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &xk)| (t - xk) / (xs[j] - xk)).product()).collect()
}

/// Interpolation stencil `(index, weight)` at position `i + t` along an axis of `len` nodes.
fn line_stencil(len: usize, periodic: bool, i: usize, t: f64) -> Vec<(usize, f64)> {
    let w = STENCIL.min(len);
    let back = (w - 1) / 2;
    let start = if periodic { i as isize - back as isize } else { (i as isize - back as isize).clamp(0, (len - w) as isize) };
    let xs: Vec<f64> = (0..w).map(|j| (start + j as isize) as f64).collect();
    let weights = lagrange_weights(&xs, i as f64 + t);
    (0..w).map(|j| ((start + j as isize).rem_euclid(len as isize) as usize, weights[j])).collect()
}

/// 2-point Gauss abscissae on the unit interval.
fn gauss_points() -> [f64; 2] {
    let d = 3f64.sqrt() / 6.0;
    [0.5 - d, 0.5 + d]
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Axis {
    X,
    Y,
}

/// Propagator across the edge from `node` to its `+axis` neighbour, fourth-order Magnus.
fn edge_propagator(grid: &ChartGrid, conn: &ConnectionForm, node: usize, axis: Axis) -> Option<DMatrix<f64>> {
    let periodic = grid.topology() == Topology::Torus;
    let (ix, iy) = grid.ixy(node);
    let (len, pos, h, field) = match axis {
        Axis::X => (grid.nx(), ix, grid.spacing().0, &conn.ox),
        Axis::Y => (grid.ny(), iy, grid.spacing().1, &conn.oy),
    };
    if !periodic && pos + 1 >= len {
        return None;
    }
    let sample = |t: f64| {
        let mut acc = DMatrix::zeros(conn.dim, conn.dim);
        for (j, w) in line_stencil(len, periodic, pos, t) {
            let idx = match axis {
                Axis::X => grid.index(j, iy),
                Axis::Y => grid.index(ix, j),
            };
            acc += &field[idx] * w;
        }
        acc
    };
    let [t1, t2] = gauss_points();
    let (a1, a2) = (sample(t1), sample(t2));
    let comm = &a2 * &a1 - &a1 * &a2;
    let magnus = (&a1 + &a2) * (h / 2.0) + comm * (3f64.sqrt() / 12.0 * h * h);
    Some(magnus.exp())
}

fn neighbour(grid: &ChartGrid, node: usize, axis: Axis, forward: bool) -> Option<usize> {
    let (ix, iy) = grid.ixy(node);
    let (nx, ny) = (grid.nx(), grid.ny());
    match (axis, forward) {
        (Axis::X, true) if ix + 1 < nx => Some(grid.index(ix + 1, iy)),
        (Axis::X, false) if ix > 0 => Some(grid.index(ix - 1, iy)),
        (Axis::Y, true) if iy + 1 < ny => Some(grid.index(ix, iy + 1)),
        (Axis::Y, false) if iy > 0 => Some(grid.index(ix, iy - 1)),
        _ => None,
    }
}

/// Spanning tree as `(child, parent)` pairs in integration order.
fn spanning_tree(grid: &ChartGrid, mask: &[bool], root: usize, first: Axis) -> Vec<(usize, usize)> {
    let second = if first == Axis::X { Axis::Y } else { Axis::X };
    if mask.iter().all(|&b| b) {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut out = Vec::with_capacity(grid.len());
        let (la, lb) = if first == Axis::X { (nx, ny) } else { (ny, nx) };
        let at = |a: usize, b: usize| if first == Axis::X { grid.index(a, b) } else { grid.index(b, a) };
        for a in 1..la {
            out.push((at(a, 0), at(a - 1, 0)));
        }
        for b in 1..lb {
            for a in 0..la {
                out.push((at(a, b), at(a, b - 1)));
            }
        }
        return out;
    }
    let mut seen = vec![false; grid.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    let mut out = Vec::new();
    while let Some(p) = queue.pop_front() {
        for (axis, fwd) in [(first, true), (first, false), (second, true), (second, false)] {
            if let Some(c) = neighbour(grid, p, axis, fwd) {
                if mask[c] && !seen[c] {
                    seen[c] = true;
                    out.push((c, p));
                    queue.push_back(c);
                }
            }
        }
    }
    out
}

fn orthonormalize(f: DMatrix<f64>) -> DMatrix<f64> {
    let svd = f.svd(true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
}

#[derive(Debug, Clone)]
pub struct FrameField {
    pub dim: usize,
    pub frames: Vec<Option<DMatrix<f64>>>,
    /// Max over nodes of the row-first vs column-first frame discrepancy.
    pub path_dependence: f64,
    /// Max over plaquettes of the single-cell holonomy defect.
    pub plaquette: f64,
    /// Largest `|F^T F - I|` seen before re-orthonormalization.
    pub drift: f64,
    /// Torus only: mismatch after stepping across the seam.
    pub closure: Option<f64>,
    pub rerouted: bool,
}

impl FrameField {
    /// Positions `node * dim + component` (zeros at unreached nodes).
    pub fn immersion(&self) -> Vec<f64> {
        self.frames
            .iter()
            .flat_map(|f| match f {
                Some(f) => f.row(0).iter().copied().collect::<Vec<_>>(),
                None => vec![0.0; self.dim],
            })
            .collect()
    }
}

struct Steps {
    x: Vec<Option<DMatrix<f64>>>,
    y: Vec<Option<DMatrix<f64>>>,
}

impl Steps {
    fn between(&self, grid: &ChartGrid, parent: usize, child: usize) -> DMatrix<f64> {
        let (px, py) = grid.ixy(parent);
        let (cx, cy) = grid.ixy(child);
        let step = |v: &Option<DMatrix<f64>>| v.clone().expect("edge inside the chart");
        if py == cy {
            if cx > px {
                step(&self.x[parent])
            } else {
                step(&self.x[child]).transpose()
            }
        } else if cy > py {
            step(&self.y[parent])
        } else {
            step(&self.y[child]).transpose()
        }
    }
}

fn run_tree(grid: &ChartGrid, steps: &Steps, tree: &[(usize, usize)], root: usize, f0: &DMatrix<f64>) -> (Vec<Option<DMatrix<f64>>>, f64) {
    let mut frames = vec![None; grid.len()];
    frames[root] = Some(f0.clone());
    let mut drift = 0.0f64;
    let eye = DMatrix::<f64>::identity(f0.nrows(), f0.ncols());
    for &(c, p) in tree {
        let parent = frames[p].as_ref().expect("parent integrated first");
        let next = steps.between(grid, p, c) * parent;
        drift = drift.max((next.transpose() * &next - &eye).norm());
        frames[c] = Some(orthonormalize(next));
    }
    (frames, drift)
}

/// Path-ordered integration of `dF = Ω F` from `F_0` at the grid origin.
pub fn integrate_frame(grid: &ChartGrid, conn: &ConnectionForm, f0: &DMatrix<f64>, tol: &Tolerances) -> Result<FrameField> {
    let nodes = grid.len();
    if f0.nrows() != conn.dim || f0.ncols() != conn.dim {
        return Err(Error::Input(format!("initial frame must be {0}x{0}", conn.dim)));
    }
    let root = (0..nodes).find(|&i| conn.mask[i]).ok_or_else(|| Error::Integration("no valid node".into()))?;
    let edge_ok =
        |i: usize, axis: Axis| conn.mask[i] && neighbour(grid, i, axis, true).map_or(grid.topology() == Topology::Torus, |j| conn.mask[j]);
    let steps = Steps {
        x: (0..nodes).into_par_iter().map(|i| edge_ok(i, Axis::X).then(|| edge_propagator(grid, conn, i, Axis::X)).flatten()).collect(),
        y: (0..nodes).into_par_iter().map(|i| edge_ok(i, Axis::Y).then(|| edge_propagator(grid, conn, i, Axis::Y)).flatten()).collect(),
    };
    let rerouted = conn.mask.iter().any(|&b| !b);
    let row_tree = spanning_tree(grid, &conn.mask, root, Axis::X);
    let col_tree = spanning_tree(grid, &conn.mask, root, Axis::Y);
    let ((rows, d1), (cols, d2)) =
        rayon::join(|| run_tree(grid, &steps, &row_tree, root, f0), || run_tree(grid, &steps, &col_tree, root, f0));
    let path_dependence = rows.iter().zip(&cols).filter_map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).norm())).fold(0.0, f64::max);

    let plaquette = (0..nodes)
        .into_par_iter()
        .filter_map(|i| {
            let right = neighbour(grid, i, Axis::X, true)?;
            let up = neighbour(grid, i, Axis::Y, true)?;
            let a = steps.y[right].as_ref()? * steps.x[i].as_ref()?;
            let b = steps.x[up].as_ref()? * steps.y[i].as_ref()?;
            Some((a - b).norm())
        })
        .reduce(|| 0.0, f64::max);

    let closure = (grid.topology() == Topology::Torus && !rerouted).then(|| {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut worst = 0.0f64;
        for iy in 0..ny {
            let (last, first) = (grid.index(nx - 1, iy), grid.index(0, iy));
            if let (Some(p), Some(fl), Some(ff)) = (&steps.x[last], &rows[last], &rows[first]) {
                worst = worst.max((p * fl - ff).norm());
            }
        }
        for ix in 0..nx {
            let (last, first) = (grid.index(ix, ny - 1), grid.index(ix, 0));
            if let (Some(p), Some(fl), Some(ff)) = (&steps.y[last], &rows[last], &rows[first]) {
                worst = worst.max((p * fl - ff).norm());
            }
        }
        worst
    });

    if path_dependence > 10.0 * tol.flatness {
        return Err(Error::Integration(format!(
            "path dependence {path_dependence:.3e} exceeds 10x the flatness gate {:.1e} (plaquette max {plaquette:.3e})",
            tol.flatness
        )));
    }
    Ok(FrameField { dim: conn.dim, frames: rows, path_dependence, plaquette, drift: d1.max(d2), closure, rerouted })
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub grid: ChartGrid,
    pub n: usize,
    pub residuals: DataResiduals,
    pub connection: ConnectionForm,
    pub flatness: f64,
    pub frame: FrameField,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionSummary {
    pub n: usize,
    pub residuals: DataResiduals,
    pub flatness: f64,
    pub gauge_residual: f64,
    pub path_dependence: f64,
    pub plaquette: f64,
    pub drift: f64,
    pub closure: Option<f64>,
    pub rerouted: bool,
}

impl Reconstruction {
    pub fn samples(&self) -> Vec<f64> {
        self.frame.immersion()
    }

    pub fn summary(&self) -> ReconstructionSummary {
        ReconstructionSummary {
            n: self.n,
            residuals: self.residuals.clone(),
            flatness: self.flatness,
            gauge_residual: self.connection.gauge_residual,
            path_dependence: self.frame.path_dependence,
            plaquette: self.frame.plaquette,
            drift: self.frame.drift,
            closure: self.frame.closure,
            rerouted: self.frame.rerouted,
        }
    }

    /// Whether the integrated frames close up across the torus seam.
    pub fn periodic(&self) -> bool {
        self.frame.closure.is_some_and(|c| c < CLOSURE_GATE)
    }

    /// Chart used to re-analyze the samples: the torus itself when the frames close up,
    /// otherwise the same nodes viewed as an open rectangle.
    pub fn analysis_chart(&self) -> ChartSpec {
        let s = self.grid.spec();
        if s.topology == Topology::OpenRectangle || self.periodic() {
            return s.clone();
        }
        let lx = s.lx * (s.nx - 1) as f64 / s.nx as f64;
        let ly = s.ly * (s.ny - 1) as f64 / s.ny as f64;
        ChartSpec::open(s.x0, s.y0, lx, ly, s.nx, s.ny)
    }

    pub fn reanalyze(&self, tol: &Tolerances) -> Result<Analysis> {
        if self.frame.rerouted {
            return Err(Error::Precondition("re-analysis needs frames at every node".into()));
        }
        analyze_samples(ChartGrid::new(self.analysis_chart())?, &self.samples(), self.n, tol)
    }
}

/// Data gate, connection, flatness gate and frame integration from the identity frame.
pub fn reconstruct(data: &ReconstructionData, tol: &Tolerances) -> Result<Reconstruction> {
    let residuals = data_residuals(data, tol)?;
    if residuals.worst() > tol.pde {
        return Err(Error::Precondition(format!(
            "data residuals exceed the gate {:.1e}: sigma {:.3e}, first level {:.3e}, laplacian {:.3e}",
            tol.pde, residuals.sigma, residuals.first_level, residuals.laplacian
        )));
    }
    let grid = ChartGrid::new(data.chart.clone())?;
    let connection = build_connection(data, tol)?;
    let flatness = flatness_max(&grid, &connection)?;
    if flatness > tol.flatness {
        return Err(Error::Integration(format!("flatness residual {flatness:.3e} exceeds gate {:.1e}", tol.flatness)));
    }
    let f0 = DMatrix::identity(connection.dim, connection.dim);
    let frame = integrate_frame(&grid, &connection, &f0, tol)?;
    Ok(Reconstruction { grid, n: data.n, residuals, connection, flatness, frame })
}

/// Data of an analyzed exceptional surface, phases as the analyzer left them.
pub fn extract_data(an: &Analysis, class: &ClassificationReport) -> Result<ReconstructionData> {
    if class.exceptional != Verdict::Pass {
        return Err(Error::Precondition("reconstruction data needs an exceptional surface".into()));
    }
    let (m, tol) = (an.m, &an.tol);
    let mut rho = vec![1.0];
    for r in 1..m {
        let field = &an.inv.level(r).rho;
        let sd = an.std_dev(field);
        if sd > tol.constancy {
            return Err(Error::Precondition(format!("rho_{r} is not constant (std {sd:.3e})")));
        }
        rho.push(an.mean(field).clamp(f64::MIN_POSITIVE, 1.0));
    }
    let clean = |v: &[Complex64]| v.iter().map(|c| if c.is_finite() { *c } else { Complex64::new(0.0, 0.0) }).collect();
    let levels = (1..=m)
        .map(|r| {
            let lv = an.inv.level(r);
            KField { k_plus: clean(&lv.k_plus), k_minus: clean(&lv.k_minus) }
        })
        .collect();
    Ok(ReconstructionData {
        chart: an.grid.spec().clone(),
        n: an.n,
        m,
        rho,
        theta: vec![0.0; m + 1],
        lambda: an.metric.lambda.clone(),
        curvature: an.metric.k.clone(),
        levels,
    })
}

/// Which hypothesis of the self-dual construction the input satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelfDualBranch {
    /// `Δ log(a_{l-1} a_l) = (2l+1) K`, giving `n = 4l+1`.
    Ambient4lPlus1,
    /// `Δ log a_l = (l+1) K`, giving `n = 4l+3`.
    Ambient4lPlus3,
}

impl SelfDualBranch {
    pub fn ambient(self, l: usize) -> usize {
        match self {
            Self::Ambient4lPlus1 => 4 * l + 1,
            Self::Ambient4lPlus3 => 4 * l + 3,
        }
    }
}

/// `a_{-1}, a_0, a_1, ..., a_m` completed by the mirrored ladder.
pub fn mirror_ladder(a: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let nodes = a.first().map_or(0, |v| v.len());
    let mut full = vec![vec![4.0; nodes], vec![2.0; nodes]];
    full.extend(a.iter().cloned());
    // full[s + 1] = a_s
    for s in a.len() + 1..=m {
        let next = (0..nodes).map(|i| full[s][i] * full[m - s + 1][i] / full[m - s][i]).collect();
        full.push(next);
    }
    full
}

/// Path integral of the closed form `p dx + q dy` from the grid origin, row then column.
pub fn integrate_one_form(grid: &ChartGrid, p: &[f64], q: &[f64]) -> Vec<f64> {
    let periodic = grid.topology() == Topology::Torus;
    let (hx, hy) = grid.spacing();
    let edge = |field: &[f64], node: usize, axis: Axis| {
        let (ix, iy) = grid.ixy(node);
        let (len, pos, h) = if axis == Axis::X { (grid.nx(), ix, hx) } else { (grid.ny(), iy, hy) };
        gauss_points()
            .iter()
            .map(|&t| {
                line_stencil(len, periodic, pos, t)
                    .into_iter()
                    .map(|(j, w)| w * field[if axis == Axis::X { grid.index(j, iy) } else { grid.index(ix, j) }])
                    .sum::<f64>()
            })
            .sum::<f64>()
            * h
            / 2.0
    };
    let mut out = vec![0.0; grid.len()];
    for (c, par) in spanning_tree(grid, &vec![true; grid.len()], 0, Axis::X) {
        out[c] = out[par] + if grid.ixy(c).1 == grid.ixy(par).1 { edge(p, par, Axis::X) } else { edge(q, par, Axis::Y) };
    }
    out
}

/// Full superconformal data from `a_1^+, ..., a_l^+` via the mirrored ladder.
///
/// The last level is rank one; its phase is the harmonic conjugate of
/// `log(λ^{m+1} a_m)`, which makes `Φ_m` holomorphic.
pub fn reconstruct_self_dual(
    chart: ChartSpec,
    lambda: Vec<f64>,
    curvature: Vec<f64>,
    a: &[Vec<f64>],
    branch: SelfDualBranch,
    tol: &Tolerances,
) -> Result<ReconstructionData> {
    let l = a.len();
    if l == 0 {
        return Err(Error::Input("at least a_1 is required".into()));
    }
    let grid = ChartGrid::new(chart.clone())?;
    let nodes = grid.len();
    if lambda.len() != nodes || curvature.len() != nodes || a.iter().any(|v| v.len() != nodes) {
        return Err(Error::Input(format!("every field must have {nodes} nodes")));
    }
    let n = branch.ambient(l);
    let m = (n - 1) / 2;
    let mask = stats_mask(&grid);
    let metric = metric_from_lambda(&grid, lambda.clone())?;
    let k = &curvature;
    let full = mirror_ladder(a, m);
    let at = |s: isize| &full[(s + 1) as usize];
    let lap_log = |v: &[f64]| -> Result<Vec<f64>> {
        let logs: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        grid.laplace_beltrami(&logs, &metric)
    };

    let mut worst = masked_max(&(0..nodes).map(|i| rel(a[0][i] - (2.0 * (1.0 - k[i])).sqrt(), a[0][i])).collect::<Vec<_>>(), &mask);
    for r in 1..l as isize {
        let lap = lap_log(at(r))?;
        let v: Vec<f64> = (0..nodes)
            .map(|i| {
                let (prev, cur, next) = (at(r - 1)[i], at(r)[i], at(r + 1)[i]);
                let rhs = (r as f64 + 1.0) * k[i] - 2.0 * cur * cur / (prev * prev) + 2.0 * next * next / (cur * cur);
                rel(lap[i] - rhs, lap[i].abs().max(rhs.abs()))
            })
            .collect();
        worst = worst.max(masked_max(&v, &mask));
    }
    let li = l as isize;
    let (lap, factor) = match branch {
        SelfDualBranch::Ambient4lPlus1 => {
            let prod: Vec<f64> = (0..nodes).map(|i| at(li - 1)[i] * at(li)[i]).collect();
            (lap_log(&prod)?, 2.0 * l as f64 + 1.0)
        }
        SelfDualBranch::Ambient4lPlus3 => (lap_log(at(li))?, l as f64 + 1.0),
    };
    let hyp: Vec<f64> = (0..nodes).map(|i| rel(lap[i] - factor * k[i], lap[i].abs().max(factor * k[i].abs()))).collect();
    worst = worst.max(masked_max(&hyp, &mask));
    if worst > tol.pde {
        return Err(Error::Precondition(format!("self-dual hypotheses fail: residual {worst:.3e}")));
    }

    let mut levels: Vec<KField> = (1..m)
        .map(|r| KField {
            k_plus: at(r as isize).iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            k_minus: vec![Complex64::new(0.0, 0.0); nodes],
        })
        .collect();
    let am = at(m as isize);
    let u: Vec<f64> = (0..nodes).map(|i| (lambda[i].powi(m as i32 + 1) * am[i]).ln()).collect();
    let ux = grid.partial_real(&u, 1, 0)?;
    let uy = grid.partial_real(&u, 0, 1)?;
    let minus_uy: Vec<f64> = uy.iter().map(|v| -v).collect();
    let psi = integrate_one_form(&grid, &minus_uy, &ux);
    let last: Vec<Complex64> = (0..nodes).map(|i| Complex64::from_polar(am[i], psi[i])).collect();
    levels.push(KField { k_plus: last.clone(), k_minus: last });
    Ok(ReconstructionData { chart, n, m, rho: vec![1.0; m], theta: vec![0.0; m + 1], lambda, curvature, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn clifford_data(res: usize) -> ReconstructionData {
        let nodes = res * res;
        let one = vec![Complex64::new(1.0, 0.0); nodes];
        ReconstructionData {
            chart: ChartSpec::torus(2.0 * PI, 2.0 * PI, res, res),
            n: 3,
            m: 1,
            rho: vec![1.0],
            theta: vec![0.0; 2],
            lambda: vec![std::f64::consts::FRAC_1_SQRT_2; nodes],
            curvature: vec![0.0; nodes],
            levels: vec![KField { k_plus: one.clone(), k_minus: one }],
        }
    }

    #[test]
    fn clifford_connection_is_constant_and_flat() {
        let tol = Tolerances::default();
        let data = clifford_data(16);
        assert!(data_residuals(&data, &tol).unwrap().worst() < 1e-12);
        let conn = build_connection(&data, &tol).unwrap();
        for i in 1..conn.ox.len() {
            assert!((&conn.ox[i] - &conn.ox[0]).norm() < 1e-14);
            assert!((&conn.oy[i] - &conn.oy[0]).norm() < 1e-14);
        }
        let g = ChartGrid::new(data.chart.clone()).unwrap();
        assert!(flatness_max(&g, &conn).unwrap() < 1e-10);
    }

    #[test]
    fn commuting_constant_connection_is_path_independent() {
        let g = ChartGrid::new(ChartSpec::open(0.0, 0.0, 1.0, 1.0, 12, 12)).unwrap();
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 0.7;
        a[(1, 0)] = -0.7;
        let mut b = DMatrix::zeros(4, 4);
        b[(2, 3)] = -1.3;
        b[(3, 2)] = 1.3;
        let conn = ConnectionForm {
            dim: 4,
            ox: vec![a.clone(); g.len()],
            oy: vec![b.clone(); g.len()],
            mask: vec![true; g.len()],
            gauge_residual: 0.0,
        };
        let f = integrate_frame(&g, &conn, &DMatrix::identity(4, 4), &Tolerances::default()).unwrap();
        assert!(f.path_dependence < 1e-13);
        let last = g.len() - 1;
        let (x, y) = g.coords(last);
        let expected = (&b * y).exp() * (&a * x).exp();
        assert!((f.frames[last].as_ref().unwrap() - expected).norm() < 1e-12);
    }

    #[test]
    fn masked_node_is_routed_around() {
        let g = ChartGrid::new(ChartSpec::open(0.0, 0.0, 1.0, 1.0, 10, 10)).unwrap();
        let mut mask = vec![true; g.len()];
        mask[g.index(4, 4)] = false;
        let tree = spanning_tree(&g, &mask, 0, Axis::X);
        assert_eq!(tree.len(), g.len() - 2);
        assert!(tree.iter().all(|&(c, p)| mask[c] && mask[p]));
    }

    #[test]
    fn one_form_integration_recovers_a_potential() {
        let g = ChartGrid::new(ChartSpec::open(0.0, 0.0, 1.0, 1.0, 24, 24)).unwrap();
        let u = |x: f64, y: f64| (x * 1.3).sin() * (y * 0.7).cosh();
        let p: Vec<f64> = (0..g.len())
            .map(|i| {
                let (x, y) = g.coords(i);
                1.3 * (x * 1.3).cos() * (y * 0.7).cosh()
            })
            .collect();
        let q: Vec<f64> = (0..g.len())
            .map(|i| {
                let (x, y) = g.coords(i);
                0.7 * (x * 1.3).sin() * (y * 0.7).sinh()
            })
            .collect();
        let v = integrate_one_form(&g, &p, &q);
        for i in 0..g.len() {
            let (x, y) = g.coords(i);
            assert!((v[i] - (u(x, y) - u(0.0, 0.0))).abs() < 1e-7, "{}", v[i] - u(x, y) + u(0.0, 0.0));
        }
    }

    #[test]
    fn ladder_closes_with_half_ratio() {
        let a1 = vec![vec![2f64.sqrt(); 3]];
        for m in [2, 3] {
            let full = mirror_ladder(&a1, m);
            for i in 0..3 {
                assert!((2.0 * full[m + 1][i] - full[m][i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rho_out_of_range_rejected() {
        let mut data = clifford_data(8);
        data.rho[0] = 1.5;
        assert!(matches!(build_connection(&data, &Tolerances::default()), Err(Error::Parameter(_))));
    }
}
