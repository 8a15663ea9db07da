//! Octonions, the nearly Kähler structure of S^6 and pseudoholomorphic curves.
//!
//! Basis convention: Cayley–Dickson doubling of the quaternions,
//! `(a, b)(c, d) = (ac - d̄b, da + bc̄)`, with imaginary units
//! `e1..e7 = i, j, k, l, il, jl, kl`. The cross product table below lists the
//! signed index of `e_i × e_j` (row `i`, column `j`); for imaginary `x, y`
//! the product is `x·y = -<x, y> + x × y`.
//!
//! | ×  | e1  | e2  | e3  | e4  | e5  | e6  | e7  |
//! |----|-----|-----|-----|-----|-----|-----|-----|
//! | e1 |  0  | e3  | -e2 | e5  | -e4 | -e7 | e6  |
//! | e2 | -e3 |  0  | e1  | e6  | e7  | -e4 | -e5 |
//! | e3 | e2  | -e1 |  0  | e7  | -e6 | e5  | -e4 |
//! | e4 | -e5 | -e6 | -e7 |  0  | e1  | e2  | e3  |
//! | e5 | e4  | -e7 | e6  | -e1 |  0  | -e3 | e2  |
//! | e6 | e7  | e4  | -e5 | -e2 | e3  |  0  | -e1 |
//! | e7 | -e6 | e5  | e4  | -e3 | -e2 | e1  |  0  |

use num_rational::Rational64;
use serde::Serialize;

use crate::analysis::{analyze_jets, Analysis};
use crate::chart::{metric_from_jet, ChartGrid, JetTable, MetricField};
use crate::classify::{classify_surface, Stat, Verdict};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::flag::{b1_norm_sq, FlagOptions};
use crate::gallery::S6Type;

pub type Vec7 = [f64; 7];

/// Signed 1-based index of `e_{i+1} × e_{j+1}`; 0 on the diagonal.
pub const CROSS_TABLE: [[i8; 7]; 7] = [
    [0, 3, -2, 5, -4, -7, 6],
    [-3, 0, 1, 6, 7, -4, -5],
    [2, -1, 0, 7, -6, 5, -4],
    [-5, -6, -7, 0, 1, 2, 3],
    [4, -7, 6, -1, 0, -3, 2],
    [7, 4, -5, -2, 3, 0, -1],
    [-6, 5, 4, -3, -2, 1, 0],
];

pub fn basis(i: usize) -> Vec7 {
    let mut e = [0.0; 7];
    e[i] = 1.0;
    e
}

pub fn dot7(x: &Vec7, y: &Vec7) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn cross(x: &Vec7, y: &Vec7) -> Vec7 {
    let mut out = [0.0; 7];
    for i in 0..7 {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..7 {
            let s = CROSS_TABLE[i][j];
            if s != 0 {
                let k = s.unsigned_abs() as usize - 1;
                out[k] += f64::from(s.signum()) * x[i] * y[j];
            }
        }
    }
    out
}

/// Complex-bilinear extension of the cross product.
pub fn cross_c(x: &[num_complex::Complex64], y: &[num_complex::Complex64]) -> Vec<num_complex::Complex64> {
    let mut out = vec![num_complex::Complex64::new(0.0, 0.0); 7];
    for i in 0..7 {
        for j in 0..7 {
            let s = CROSS_TABLE[i][j];
            if s != 0 {
                out[s.unsigned_abs() as usize - 1] += f64::from(s.signum()) * x[i] * y[j];
            }
        }
    }
    out
}

/// `J_x v = x × v` for `x ∈ S^6`, `v ⟂ x`.
pub fn almost_complex(x: &Vec7, v: &Vec7) -> Result<Vec7> {
    let nx = dot7(x, x).sqrt();
    let scale = dot7(v, v).sqrt().max(1.0);
    if (nx - 1.0).abs() > 1e-10 || dot7(x, v).abs() > 1e-10 * scale {
        return Err(Error::Domain(format!("J needs |x| = 1 and <x, v> = 0; got |x| = {nx}, <x, v> = {:e}", dot7(x, v))));
    }
    Ok(cross(x, v))
}

/// Finite-difference check of `(∇_X J) Y = X × Y + <X, JY> x` with `|X| = 1`,
/// using parallel transport along the great circle through `x` in direction `X`.
pub fn nabla_j_residual(x: &Vec7, xv: &Vec7, yv: &Vec7, h: f64) -> f64 {
    let xy = dot7(yv, xv);
    let along = |t: f64| -> Vec7 {
        let (c, s) = (t.cos(), t.sin());
        let mut g = [0.0; 7];
        let mut y = [0.0; 7];
        for k in 0..7 {
            g[k] = c * x[k] + s * xv[k];
            y[k] = yv[k] - xy * xv[k] + xy * (-s * x[k] + c * xv[k]);
        }
        cross(&g, &y)
    };
    let (p, m) = (along(h), along(-h));
    let mut fd = [0.0; 7];
    for k in 0..7 {
        fd[k] = (p[k] - m[k]) / (2.0 * h);
    }
    let radial = dot7(&fd, x);
    let jy = cross(x, yv);
    let expected_coeff = dot7(xv, &jy);
    let xy_cross = cross(xv, yv);
    (0..7).map(|k| (fd[k] - radial * x[k]) - (xy_cross[k] + expected_coeff * x[k])).map(|d| d * d).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct PseudoholomorphicReport {
    #[serde(skip)]
    pub field: Vec<f64>,
    pub max: f64,
    /// `+1` when `J_M ∂_x = ∂_y`, `-1` for the opposite orientation of M.
    pub orientation: i8,
}

fn tangent_pair(jets: &JetTable, metric: &MetricField, i: usize) -> (Vec7, Vec7, Vec7) {
    let mut f = [0.0; 7];
    let mut e1 = [0.0; 7];
    let mut e2 = [0.0; 7];
    let fz = jets.get(i, 1, 0);
    let pos = jets.get(i, 0, 0);
    for k in 0..7 {
        f[k] = pos[k].re;
        e1[k] = 2.0 * fz[k].re / metric.lambda[i];
        e2[k] = -2.0 * fz[k].im / metric.lambda[i];
    }
    (f, e1, e2)
}

/// `max_v |f × df(v) - df(J_M v)|` over an orthonormal tangent pair, with the
/// orientation of M chosen to minimize the worst node.
pub fn pseudoholomorphic_residual(jets: &JetTable, metric: &MetricField, mask: &[bool]) -> Result<PseudoholomorphicReport> {
    if jets.dim != 7 {
        return Err(Error::Domain(format!("pseudoholomorphicity is defined in S^6, got ambient R^{}", jets.dim)));
    }
    let mut best: Option<PseudoholomorphicReport> = None;
    for orientation in [1i8, -1] {
        let s = f64::from(orientation);
        let field: Vec<f64> = (0..jets.nodes)
            .map(|i| {
                let (f, e1, e2) = tangent_pair(jets, metric, i);
                let (j1, j2) = (cross(&f, &e1), cross(&f, &e2));
                let r1 = (0..7).map(|k| (j1[k] - s * e2[k]).powi(2)).sum::<f64>().sqrt();
                let r2 = (0..7).map(|k| (j2[k] + s * e1[k]).powi(2)).sum::<f64>().sqrt();
                r1.max(r2)
            })
            .collect();
        let max = crate::chart::masked_max(&field, mask);
        if best.as_ref().is_none_or(|b| max < b.max) {
            best = Some(PseudoholomorphicReport { field, max, orientation });
        }
    }
    Ok(best.expect("two orientations tried"))
}

/// `max |f × b_1 - i s b_1| / |b_1|`: complex linearity of the second fundamental form.
pub fn second_form_linearity(an: &Analysis, orientation: i8) -> f64 {
    let s = f64::from(orientation);
    let i_unit = num_complex::Complex64::new(0.0, s);
    (0..an.inv.nodes)
        .filter(|&i| an.mask[i])
        .map(|i| {
            let b = an.flag.b(i, 1);
            let f: Vec<num_complex::Complex64> = an.jets.get(i, 0, 0).iter().map(|c| num_complex::Complex64::new(c.re, 0.0)).collect();
            let jb = cross_c(&f, b);
            let nb: f64 = b.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if nb == 0.0 {
                return 0.0;
            }
            jb.iter().zip(b).map(|(x, y)| (x - i_unit * y).norm_sqr()).sum::<f64>().sqrt() / nb
        })
        .fold(0.0, f64::max)
}

/// Solves the constant-curvature form of the type-I condition
/// `Δ log(1-K) = 6K - 1`: with `Δ log(1-K) = 0` this is `6K - 1 = 0`.
pub fn constant_curvature_type_i() -> Rational64 {
    let (a, b) = (Rational64::from_integer(6), Rational64::from_integer(-1));
    -b / a
}

/// Residuals of the curvature conditions distinguishing types I–III.
#[derive(Debug, Clone, Serialize)]
pub struct PdeConditions {
    /// `Δ log(1-K) - (6K - 1)`.
    pub type_i: Stat,
    /// `Δ log(1-K) - 6K`.
    pub type_iii: Stat,
    /// `Δ log((1-K)^2 (1 - 6K + Δ log(1-K))) - 12K` where the argument is positive.
    pub type_ii: Stat,
    /// Fraction of evaluated nodes with `6K > Δ log(1-K) > 6K - 1` (strict, by `tol.pde`).
    pub type_ii_inequality: f64,
    /// Nodes sitting on either inequality boundary.
    pub boundary_nodes: usize,
}

impl PdeConditions {
    pub fn holds(&self, tol: &Tolerances) -> (bool, bool, bool) {
        let i = self.type_i.nodes > 0 && self.type_i.max_rel < tol.pde;
        let iii = self.type_iii.nodes > 0 && self.type_iii.max_rel < tol.pde;
        let ii = self.type_ii.nodes > 0 && self.type_ii.max_rel < tol.pde && self.type_ii_inequality == 1.0;
        (i, ii, iii)
    }
}

pub fn pde_conditions(grid: &ChartGrid, metric: &MetricField, mask: &[bool], tol: &Tolerances) -> Result<PdeConditions> {
    let n = grid.len();
    let delta = tol.curvature_margin;
    let k = &metric.k;
    let eval: Vec<bool> = (0..n).map(|i| mask[i] && k[i] < 1.0 - delta).collect();
    if !eval.iter().any(|&b| b) {
        return Err(Error::Domain("K >= 1 - δ on every node".into()));
    }
    let log1k: Vec<f64> = k.iter().map(|&v| (1.0 - v).max(delta).ln()).collect();
    let l = grid.laplace_beltrami(&log1k, metric)?;
    let scale: Vec<f64> = (0..n).map(|i| l[i].abs().max(6.0 * k[i].abs()).max(1.0)).collect();
    let r1: Vec<f64> = (0..n).map(|i| l[i] - (6.0 * k[i] - 1.0)).collect();
    let r3: Vec<f64> = (0..n).map(|i| l[i] - 6.0 * k[i]).collect();
    let arg: Vec<f64> = (0..n).map(|i| (1.0 - k[i]).powi(2) * (1.0 - 6.0 * k[i] + l[i])).collect();
    let ok2: Vec<bool> = (0..n).map(|i| eval[i] && arg[i] > 0.0).collect();
    let log_arg: Vec<f64> = arg.iter().map(|&a| a.max(f64::MIN_POSITIVE).ln()).collect();
    let l2 = grid.laplace_beltrami(&log_arg, metric)?;
    let r2: Vec<f64> = (0..n).map(|i| l2[i] - 12.0 * k[i]).collect();
    let scale2: Vec<f64> = (0..n).map(|i| l2[i].abs().max(12.0 * k[i].abs()).max(1.0)).collect();
    let mut inside = 0usize;
    let mut boundary = 0usize;
    let mut total = 0usize;
    for i in (0..n).filter(|&i| eval[i]) {
        total += 1;
        let (hi, lo) = (6.0 * k[i] - l[i], l[i] - 6.0 * k[i] + 1.0);
        let band = tol.pde * scale[i];
        if hi > band && lo > band {
            inside += 1;
        } else if hi.abs() <= band || lo.abs() <= band {
            boundary += 1;
        }
    }
    Ok(PdeConditions {
        type_i: Stat::of(&r1, &scale, &eval),
        type_iii: Stat::of(&r3, &scale, &eval),
        type_ii: Stat::of(&r2, &scale2, &ok2),
        type_ii_inequality: inside as f64 / total as f64,
        boundary_nodes: boundary,
    })
}

/// Residuals of the a-invariant characterizations.
#[derive(Debug, Clone, Serialize)]
pub struct AInvariantConditions {
    /// `max a_1^- / a_1^+`.
    pub a1_minus: f64,
    /// `max |a_2^+ - a_1^+/2| / a_1^+`.
    pub a2_plus_half: f64,
    /// `max |a_2^- - a_1^+/2| / a_1^+`.
    pub a2_minus_half: f64,
    /// `max a_2^- / a_1^+`.
    pub a2_minus: f64,
}

impl AInvariantConditions {
    pub fn holds(&self, tol: &Tolerances) -> (bool, bool, bool) {
        let eq = tol.equality;
        let a1 = self.a1_minus < eq;
        let i = a1 && self.a2_minus < eq && self.a2_plus_half < eq;
        let iii = a1 && self.a2_plus_half < eq && self.a2_minus_half < eq;
        let ii = a1 && !i && !iii && (self.a2_plus_half < eq || self.a2_minus_half < eq);
        (i, ii, iii)
    }
}

pub fn a_invariant_conditions(an: &Analysis) -> AInvariantConditions {
    let (l1, l2) = (an.inv.level(1), an.inv.level(2));
    let worst = |g: &dyn Fn(usize) -> f64| (0..an.inv.nodes).filter(|&i| an.mask[i]).map(g).fold(0.0, f64::max);
    AInvariantConditions {
        a1_minus: worst(&|i| l1.a_minus[i] / l1.a_plus[i]),
        a2_plus_half: worst(&|i| (l2.a_plus[i] - l1.a_plus[i] / 2.0).abs() / l1.a_plus[i]),
        a2_minus_half: worst(&|i| (l2.a_minus[i] - l1.a_plus[i] / 2.0).abs() / l1.a_plus[i]),
        a2_minus: worst(&|i| l2.a_minus[i] / l1.a_plus[i]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum S6Class {
    Type(S6Type),
    NotPseudoholomorphic,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct TypeVerdict {
    pub class: S6Class,
    pub pseudoholomorphic: PseudoholomorphicReport,
    pub b1_max: f64,
    pub pde: Option<PdeConditions>,
    pub a_invariants: Option<AInvariantConditions>,
    pub second_form_linearity: Option<f64>,
    pub note: String,
}

fn pick(flags: (bool, bool, bool)) -> Option<S6Type> {
    match flags {
        (true, false, false) => Some(S6Type::I),
        (false, true, false) => Some(S6Type::II),
        (false, false, true) => Some(S6Type::III),
        _ => None,
    }
}

/// Type of a superconformal surface in S^6 from curvature conditions and
/// a-invariants; both tests must agree. Totally geodesic input is type IV.
pub fn s6_type_classify(grid: &ChartGrid, jets: &JetTable, tol: &Tolerances) -> Result<TypeVerdict> {
    if jets.dim != 7 {
        return Err(Error::Domain(format!("S^6 typing needs ambient R^7, got R^{}", jets.dim)));
    }
    let metric = metric_from_jet(grid, jets, tol)?;
    let band = if jets.exact { 0 } else { grid.boundary_band(jets.order) };
    let interior = grid.interior_mask(band);
    let mask: Vec<bool> = (0..grid.len()).map(|i| interior[i] && jets.valid[i]).collect();
    let ph = pseudoholomorphic_residual(jets, &metric, &mask)?;
    let is_ph = ph.max < tol.pseudoholomorphic;
    let b1 = b1_norm_sq(jets, &metric);
    let b1_max = crate::chart::masked_max(&b1, &mask);
    if b1_max < tol.rank_gate {
        let class = if is_ph { S6Class::Type(S6Type::IV) } else { S6Class::NotPseudoholomorphic };
        return Ok(TypeVerdict {
            class,
            pseudoholomorphic: ph,
            b1_max,
            pde: None,
            a_invariants: None,
            second_form_linearity: None,
            note: "B_1 vanishes identically".into(),
        });
    }
    let an = match analyze_jets(grid.clone(), jets.clone(), 6, tol, FlagOptions { relax_last_rank: true }) {
        Ok(an) => an,
        Err(Error::NotSubstantial { detail, .. }) if !is_ph => {
            return Ok(TypeVerdict {
                class: S6Class::NotPseudoholomorphic,
                pseudoholomorphic: ph,
                b1_max,
                pde: None,
                a_invariants: None,
                second_form_linearity: None,
                note: format!("flag degenerate: {detail}"),
            })
        }
        Err(e) => return Err(e),
    };
    let class = classify_surface(&an)?;
    if class.superconformal != Verdict::Pass {
        if !is_ph {
            return Ok(TypeVerdict {
                class: S6Class::NotPseudoholomorphic,
                pseudoholomorphic: ph,
                b1_max,
                pde: None,
                a_invariants: None,
                second_form_linearity: None,
                note: "not superconformal".into(),
            });
        }
        return Err(Error::Precondition("S^6 typing needs a superconformal surface".into()));
    }
    let pde = pde_conditions(&an.grid, &an.metric, &an.mask, tol)?;
    let ainv = a_invariant_conditions(&an);
    let lin = second_form_linearity(&an, ph.orientation);
    let (p, a) = (pick(pde.holds(tol)), pick(ainv.holds(tol)));
    let (class, note) = match (p, a) {
        (Some(x), Some(y)) if x == y => (S6Class::Type(x), String::new()),
        (None, None) if !is_ph => (S6Class::NotPseudoholomorphic, String::new()),
        _ if pde.boundary_nodes > 0 && p.is_none() => {
            (S6Class::Inconclusive, format!("{} nodes on a type-II inequality boundary", pde.boundary_nodes))
        }
        _ => (S6Class::Inconclusive, format!("curvature conditions give {p:?}, a-invariants give {a:?}")),
    };
    Ok(TypeVerdict {
        class,
        pseudoholomorphic: ph,
        b1_max,
        pde: Some(pde),
        a_invariants: Some(ainv),
        second_form_linearity: Some(lin),
        note,
    })
}

/// Metric `λ = 2/(1 + K|z|^2)` of constant curvature `K`.
pub fn constant_curvature_metric(grid: &ChartGrid, k: f64) -> Result<MetricField> {
    let lambda = (0..grid.len()).map(|i| 2.0 / (1.0 + k * grid.z(i).norm_sqr())).collect();
    crate::chart::metric_from_lambda(grid, lambda)
}

/// Whether the type-II curvature conditions hold for some constant curvature
/// among `ks`; returns the curvatures for which they do.
pub fn constant_curvature_type_ii_scan(grid: &ChartGrid, ks: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
    let band = grid.boundary_band(2) * 2;
    let mask = grid.interior_mask(band);
    let mut hits = Vec::new();
    for &k in ks {
        let metric = constant_curvature_metric(grid, k)?;
        let c = pde_conditions(grid, &metric, &mask, tol)?;
        if c.holds(tol).1 {
            hits.push(k);
        }
    }
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_basics() {
        assert_eq!(cross(&basis(0), &basis(1)), basis(2));
        let j = almost_complex(&basis(0), &basis(1)).unwrap();
        let jj = almost_complex(&basis(0), &j).unwrap();
        assert_eq!(jj, [0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(CROSS_TABLE[i][j], -CROSS_TABLE[j][i]);
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(almost_complex(&[2.0, 0., 0., 0., 0., 0., 0.], &basis(1)), Err(Error::Domain(_))));
        assert!(matches!(almost_complex(&basis(0), &basis(0)), Err(Error::Domain(_))));
    }

    #[test]
    fn type_i_constant_curvature_is_one_sixth() {
        assert_eq!(constant_curvature_type_i(), Rational64::new(1, 6));
    }

    #[test]
    fn nabla_j_on_basis() {
        let x = basis(0);
        for a in 1..7 {
            for b in 1..7 {
                assert!(nabla_j_residual(&x, &basis(a), &basis(b), 1e-4) < 1e-7);
            }
        }
    }
}
