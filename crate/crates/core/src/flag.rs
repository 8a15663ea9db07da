//! Osculating flag, higher normal bundles and the components `H_{2r+1}, H_{2r+2}`.
//!
//! At each node the real basis `{f, e1, e2}` is extended level by level: the
//! projection `b_r` of `∂^{r+1} f` off the current basis spans `N^r f ⊗ C`, and
//! the left singular vectors of `[Re b_r, Im b_r]` (the principal axes of the
//! curvature ellipse) become `e_{2r+1}, e_{2r+2}`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::chart::{ChartGrid, JetTable, MetricField};
use crate::config::Tolerances;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct FlagOptions {
    /// Accept a rank-1 last bundle in even dimension (surface inside a totally
    /// geodesic hypersphere); the missing direction is completed orthogonally.
    pub relax_last_rank: bool,
}

#[derive(Debug, Clone)]
pub struct FlagDecomposition {
    pub n: usize,
    pub m: usize,
    pub nodes: usize,
    /// Per node, `(n+1)^2` values: row 0 is `f`, row `A` is `e_A`.
    pub frame: Vec<f64>,
    /// Per node and level `r = 1..=m`, the projected top jet `b_r` (ambient, complex).
    pub btop: Vec<Complex64>,
    /// Per node and level, `(H̄_{2r+1}, H̄_{2r+2})`.
    pub hbar: Vec<[Complex64; 2]>,
    /// Per node and level, the two singular values of `[Re b_r, Im b_r]`.
    pub singular: Vec<[f64; 2]>,
    /// Largest singular value of the node's jet matrix (rank-gate reference).
    pub jet_scale: Vec<f64>,
    pub generic: Vec<bool>,
    /// Rank of the last normal bundle (1 for odd n).
    pub last_rank: usize,
}

impl FlagDecomposition {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn e(&self, node: usize, a: usize) -> &[f64] {
        let d = self.dim();
        let s = node * d * d + a * d;
        &self.frame[s..s + d]
    }

    pub fn b(&self, node: usize, r: usize) -> &[Complex64] {
        let d = self.dim();
        let s = (node * self.m + r - 1) * d;
        &self.btop[s..s + d]
    }

    pub fn h(&self, node: usize, r: usize) -> [Complex64; 2] {
        self.hbar[node * self.m + r - 1]
    }

    /// Rank of `N^r f` on the generic mask.
    pub fn rank(&self, r: usize) -> usize {
        if r == self.m {
            self.last_rank
        } else {
            2
        }
    }

    /// `max |<e_A, e_B> - δ_AB|` over generic nodes, including the position row.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim();
        (0..self.nodes)
            .filter(|&i| self.generic[i])
            .map(|i| {
                let mut worst: f64 = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        let dot: f64 = self.e(i, a).iter().zip(self.e(i, b)).map(|(x, y)| x * y).sum();
                        let target = if a == b { 1.0 } else { 0.0 };
                        worst = worst.max((dot - target).abs());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    fn set_e(&mut self, node: usize, a: usize, v: &[f64]) {
        let d = self.dim();
        let s = node * d * d + a * d;
        self.frame[s..s + d].copy_from_slice(v);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_off(v: &mut [Complex64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for e in basis {
            let c: Complex64 = v.iter().zip(e).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(e) {
                *x -= c * y;
            }
        }
    }
}

fn orthonormal_completion(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut best = vec![0.0; dim];
    let mut best_norm = -1.0;
    for k in 0..dim {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        for _ in 0..2 {
            for e in basis {
                let c = dot(&v, e);
                for (x, y) in v.iter_mut().zip(e) {
                    *x -= c * y;
                }
            }
        }
        let nv = dot(&v, &v).sqrt();
        if nv > best_norm {
            best_norm = nv;
            best = v.iter().map(|x| x / nv).collect();
        }
    }
    best
}

struct NodeFlag {
    frame: Vec<f64>,
    btop: Vec<Complex64>,
    singular: Vec<[f64; 2]>,
    jet_scale: f64,
    generic: bool,
}

fn node_flag(jets: &JetTable, i: usize, lambda: f64, n: usize, m: usize, gate: f64, opts: FlagOptions) -> NodeFlag {
    let dim = n + 1;
    let mut out = NodeFlag {
        frame: vec![0.0; dim * dim],
        btop: vec![Complex64::new(0.0, 0.0); m * dim],
        singular: vec![[0.0; 2]; m],
        jet_scale: 0.0,
        generic: false,
    };
    let mut jm = DMatrix::<f64>::zeros(dim, 2 * (m + 1));
    for j in 1..=m + 1 {
        for (c, v) in jets.get(i, j, 0).iter().enumerate() {
            jm[(c, 2 * j - 2)] = v.re;
            jm[(c, 2 * j - 1)] = v.im;
        }
    }
    let scale = jm.singular_values().max();
    out.jet_scale = scale;

    let fz = jets.get(i, 1, 0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let pos = jets.position(i);
    let np = dot(&pos, &pos).sqrt();
    basis.push(pos.iter().map(|v| v / np).collect());
    let e1: Vec<f64> = fz.iter().map(|c| 2.0 * c.re / lambda).collect();
    let e2: Vec<f64> = fz.iter().map(|c| -2.0 * c.im / lambda).collect();
    basis.push(e1);
    basis.push(e2);
    for r in 1..=m {
        let mut b: Vec<Complex64> = jets.get(i, r + 1, 0).to_vec();
        project_off(&mut b, &basis);
        out.btop[(r - 1) * dim..r * dim].copy_from_slice(&b);
        let mut mat = DMatrix::<f64>::zeros(dim, 2);
        for (c, v) in b.iter().enumerate() {
            mat[(c, 0)] = v.re;
            mat[(c, 1)] = v.im;
        }
        let svd = mat.svd(true, false);
        let u = svd.u.as_ref().expect("left singular vectors");
        let mut order = [0usize, 1];
        if svd.singular_values[1] > svd.singular_values[0] {
            order = [1, 0];
        }
        let s = [svd.singular_values[order[0]], svd.singular_values[order[1]]];
        out.singular[r - 1] = s;
        let present = s.iter().filter(|&&v| v >= gate * scale).count();
        let expected = if r == m && n % 2 == 1 { 1 } else { 2 };
        let last_relaxed = r == m && opts.relax_last_rank && present >= 1;
        if present < expected && !last_relaxed {
            return out;
        }
        let take = if r == m && n % 2 == 1 { 1 } else { 2 };
        for k in 0..take {
            if k == 1 && present < 2 {
                basis.push(orthonormal_completion(&basis, dim));
                continue;
            }
            let col: Vec<f64> = u.column(order[k]).iter().copied().collect();
            let mut v = col;
            for _ in 0..2 {
                for e in &basis {
                    let c = dot(&v, e);
                    for (x, y) in v.iter_mut().zip(e) {
                        *x -= c * y;
                    }
                }
            }
            let nv = dot(&v, &v).sqrt();
            basis.push(v.iter().map(|x| x / nv).collect());
        }
    }
    if basis.len() != dim {
        return out;
    }
    for (a, e) in basis.iter().enumerate() {
        out.frame[a * dim..(a + 1) * dim].copy_from_slice(e);
    }
    out.generic = true;
    out
}

/// Builds the flag at every valid node and fills the H components.
pub fn osculating_flag(jets: &JetTable, metric: &MetricField, n: usize, tol: &Tolerances, opts: FlagOptions) -> Result<FlagDecomposition> {
    if n < 3 {
        return Err(Error::Precondition(format!("ambient sphere S^{n} has no higher normal bundles")));
    }
    let m = (n - 1) / 2;
    if jets.order < m + 1 {
        return Err(Error::Precondition(format!("flag in S^{n} needs jets of order {}, have {}", m + 1, jets.order)));
    }
    if jets.dim != n + 1 {
        return Err(Error::Precondition(format!("jets live in R^{} but S^{n} was declared", jets.dim)));
    }
    let nodes = jets.nodes;
    let per: Vec<NodeFlag> = (0..nodes)
        .into_par_iter()
        .map(|i| {
            if jets.valid[i] {
                node_flag(jets, i, metric.lambda[i], n, m, tol.rank_gate, opts)
            } else {
                NodeFlag {
                    frame: vec![0.0; (n + 1) * (n + 1)],
                    btop: vec![Complex64::new(0.0, 0.0); m * (n + 1)],
                    singular: vec![[0.0; 2]; m],
                    jet_scale: 0.0,
                    generic: false,
                }
            }
        })
        .collect();
    if !per.iter().any(|p| p.generic) {
        let detail = first_failed_level(&per, jets, m, tol.rank_gate, n);
        return Err(Error::NotSubstantial { declared: n, detail });
    }
    let mut flag = FlagDecomposition {
        n,
        m,
        nodes,
        frame: Vec::with_capacity(nodes * (n + 1) * (n + 1)),
        btop: Vec::with_capacity(nodes * m * (n + 1)),
        hbar: vec![[Complex64::new(0.0, 0.0); 2]; nodes * m],
        singular: Vec::with_capacity(nodes * m),
        jet_scale: Vec::with_capacity(nodes),
        generic: Vec::with_capacity(nodes),
        last_rank: if n % 2 == 1 { 1 } else { 2 },
    };
    for p in per {
        flag.frame.extend(p.frame);
        flag.btop.extend(p.btop);
        flag.singular.extend(p.singular);
        flag.jet_scale.push(p.jet_scale);
        flag.generic.push(p.generic);
    }
    h_components(&mut flag, metric, tol)?;
    Ok(flag)
}

fn first_failed_level(per: &[NodeFlag], jets: &JetTable, m: usize, gate: f64, n: usize) -> String {
    let i = (0..per.len()).find(|&i| jets.valid[i]).unwrap_or(0);
    for r in 1..=m {
        let s = per[i].singular[r - 1];
        let expected = if r == m && n % 2 == 1 { 1 } else { 2 };
        let present = s.iter().filter(|&&v| v >= gate * per[i].jet_scale).count();
        if present < expected {
            return format!("N^{r} f has rank {present} < {expected} at every node (singular values {:.3e}, {:.3e})", s[0], s[1]);
        }
    }
    "no generic node".into()
}

/// `H̄_α = 2 <b_r, e_α> / λ^{r+1}`, gated by `||B_r||^2 = 2^r (|H_{2r+1}|^2 + |H_{2r+2}|^2)`.
pub fn h_components(flag: &mut FlagDecomposition, metric: &MetricField, tol: &Tolerances) -> Result<()> {
    let (m, n) = (flag.m, flag.n);
    for i in 0..flag.nodes {
        if !flag.generic[i] {
            continue;
        }
        let lambda = metric.lambda[i];
        for r in 1..=m {
            let b = flag.b(i, r).to_vec();
            let lr = lambda.powi(r as i32 + 1);
            let mut h = [Complex64::new(0.0, 0.0); 2];
            for (k, hk) in h.iter_mut().enumerate() {
                let a = 2 * r + 1 + k;
                if a > n {
                    continue;
                }
                let e = flag.e(i, a);
                let c: Complex64 = b.iter().zip(e).map(|(x, y)| x * y).sum();
                *hk = c * 2.0 / lr;
            }
            flag.hbar[i * m + r - 1] = h;
            let tensor = 2f64.powi(r as i32 + 2) * b.iter().map(|c| c.norm_sqr()).sum::<f64>() / (lr * lr);
            let from_h = 2f64.powi(r as i32) * (h[0].norm_sqr() + h[1].norm_sqr());
            let dev = (tensor - from_h).abs() / tensor.max(f64::MIN_POSITIVE);
            if tensor > 0.0 && dev > tol.frame_consistency {
                return Err(Error::FrameNormalization { level: r, deviation: dev });
            }
        }
    }
    Ok(())
}

/// `K_r^⊥ = 2 Im(H̄_{2r+1} H_{2r+2})` from a pair `(H̄_{2r+1}, H̄_{2r+2})`.
pub fn kperp_of(h: [Complex64; 2]) -> f64 {
    2.0 * (h[0] * h[1].conj()).im
}

fn neighbours(grid: &ChartGrid, i: usize) -> Vec<usize> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ix, iy) = grid.ixy(i);
    let mut out = Vec::with_capacity(4);
    let torus = grid.is_torus();
    let mut push = |x: isize, y: isize| {
        let (x, y) = if torus {
            (x.rem_euclid(nx as isize), y.rem_euclid(ny as isize))
        } else if x < 0 || y < 0 || x >= nx as isize || y >= ny as isize {
            return;
        } else {
            (x, y)
        };
        out.push(y as usize * nx + x as usize);
    };
    push(ix as isize + 1, iy as isize);
    push(ix as isize - 1, iy as isize);
    push(ix as isize, iy as isize + 1);
    push(ix as isize, iy as isize - 1);
    out
}

/// Outcome of [`smooth_frame_alignment`].
#[derive(Debug, Clone)]
pub struct AlignmentReport {
    pub components: usize,
    pub warnings: Vec<String>,
}

/// Rotates each normal plane node to node so the frame varies smoothly.
///
/// Planes are first oriented so that `K_r^⊥ >= 0` where the ellipse is not a
/// segment; the sweep then uses rotations only on oriented planes and allows a
/// reflection elsewhere. Rank-1 bundles get a continuous sign.
pub fn smooth_frame_alignment(
    flag: &mut FlagDecomposition,
    grid: &ChartGrid,
    metric: &MetricField,
    tol: &Tolerances,
) -> Result<AlignmentReport> {
    let (m, n, d) = (flag.m, flag.n, flag.dim());
    let oriented_gate = 1e-9;
    let mut oriented = vec![false; flag.nodes * m];
    for i in 0..flag.nodes {
        if !flag.generic[i] {
            continue;
        }
        for r in 1..=m {
            if 2 * r + 2 > n {
                continue;
            }
            let h = flag.h(i, r);
            let kp = kperp_of(h);
            let scale = h[0].norm_sqr() + h[1].norm_sqr();
            if kp.abs() > oriented_gate * scale {
                oriented[i * m + r - 1] = true;
                if kp < 0.0 {
                    let e: Vec<f64> = flag.e(i, 2 * r + 2).iter().map(|v| -v).collect();
                    flag.set_e(i, 2 * r + 2, &e);
                }
            }
        }
    }
    let mut seen = vec![false; flag.nodes];
    let mut components = 0;
    let start = grid.index(grid.nx() / 2, grid.ny() / 2);
    let order: Vec<usize> = std::iter::once(start).chain(0..flag.nodes).collect();
    for &root in &order {
        if seen[root] || !flag.generic[root] {
            continue;
        }
        components += 1;
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(p) = queue.pop_front() {
            for q in neighbours(grid, p) {
                if seen[q] || !flag.generic[q] {
                    continue;
                }
                seen[q] = true;
                for r in 1..=m {
                    let a = 2 * r + 1;
                    if a + 1 > n {
                        let s = dot(flag.e(q, a), flag.e(p, a));
                        if s < 0.0 {
                            let e: Vec<f64> = flag.e(q, a).iter().map(|v| -v).collect();
                            flag.set_e(q, a, &e);
                        }
                        continue;
                    }
                    let (p1, p2) = (flag.e(p, a).to_vec(), flag.e(p, a + 1).to_vec());
                    let (q1, q2) = (flag.e(q, a).to_vec(), flag.e(q, a + 1).to_vec());
                    let allow_flip = !(oriented[q * m + r - 1] && oriented[p * m + r - 1]);
                    let (e1, e2) = align_plane(&q1, &q2, &p1, &p2, allow_flip);
                    flag.set_e(q, a, &e1);
                    flag.set_e(q, a + 1, &e2);
                }
                queue.push_back(q);
            }
        }
    }
    let mut warnings = Vec::new();
    if components > 1 {
        warnings.push(format!("generic mask has {components} components; frames aligned per component"));
    }
    let _ = d;
    h_components(flag, metric, tol)?;
    Ok(AlignmentReport { components, warnings })
}

fn align_plane(q1: &[f64], q2: &[f64], p1: &[f64], p2: &[f64], allow_flip: bool) -> (Vec<f64>, Vec<f64>) {
    let rotate = |a: &[f64], b: &[f64]| {
        let m11 = dot(a, p1);
        let m21 = dot(b, p1);
        let m12 = dot(a, p2);
        let m22 = dot(b, p2);
        let t = (m21 - m12).atan2(m11 + m22);
        let (s, c) = t.sin_cos();
        let e1: Vec<f64> = a.iter().zip(b).map(|(x, y)| c * x + s * y).collect();
        let e2: Vec<f64> = a.iter().zip(b).map(|(x, y)| -s * x + c * y).collect();
        let score = dot(&e1, p1) + dot(&e2, p2);
        (e1, e2, score)
    };
    let (e1, e2, s) = rotate(q1, q2);
    if allow_flip {
        let neg: Vec<f64> = q2.iter().map(|v| -v).collect();
        let (f1, f2, sf) = rotate(q1, &neg);
        if sf > s {
            return (f1, f2);
        }
    }
    (e1, e2)
}

/// Relative deviation between `b_r` and the projection of `∂ b_{r-1}` onto `N^r f`,
/// per level `r = 2..=m`. `None` when the generic mask is incomplete.
pub fn symmetry_surrogate(flag: &FlagDecomposition, grid: &ChartGrid, mask: &[bool]) -> Result<Option<Vec<f64>>> {
    if flag.generic.iter().any(|g| !g) {
        return Ok(None);
    }
    let (m, n, d) = (flag.m, flag.n, flag.dim());
    let mut out = Vec::new();
    for r in 2..=m {
        let mut worst: f64 = 0.0;
        let mut deriv = Vec::with_capacity(d);
        for c in 0..d {
            let comp: Vec<Complex64> = (0..flag.nodes).map(|i| flag.b(i, r - 1)[c]).collect();
            deriv.push(grid.differentiate(&comp, 1, 0)?);
        }
        for i in (0..flag.nodes).filter(|&i| mask[i]) {
            let v: Vec<Complex64> = (0..d).map(|c| deriv[c][i]).collect();
            let b = flag.b(i, r);
            let mut err = 0.0;
            let mut norm = 0.0;
            for a in [2 * r + 1, 2 * r + 2] {
                if a > n {
                    continue;
                }
                let e = flag.e(i, a);
                let pv: Complex64 = v.iter().zip(e).map(|(x, y)| x * y).sum();
                let pb: Complex64 = b.iter().zip(e).map(|(x, y)| x * y).sum();
                err += (pv - pb).norm_sqr();
                norm += pb.norm_sqr();
            }
            worst = worst.max((err / norm.max(f64::MIN_POSITIVE)).sqrt());
        }
        out.push(worst);
    }
    Ok(Some(out))
}

/// `||B_1||^2` straight from the jets (no flag), used to detect totally geodesic input.
pub fn b1_norm_sq(jets: &JetTable, metric: &MetricField) -> Vec<f64> {
    (0..jets.nodes)
        .map(|i| {
            let lambda = metric.lambda[i];
            let fz = jets.get(i, 1, 0);
            let pos = jets.position(i);
            let np = dot(&pos, &pos).sqrt();
            let basis = vec![
                pos.iter().map(|v| v / np).collect::<Vec<_>>(),
                fz.iter().map(|c| 2.0 * c.re / lambda).collect(),
                fz.iter().map(|c| -2.0 * c.im / lambda).collect(),
            ];
            let mut b = jets.get(i, 2, 0).to_vec();
            project_off(&mut b, &basis);
            8.0 * b.iter().map(|c| c.norm_sqr()).sum::<f64>() / lambda.powi(4)
        })
        .collect()
}
