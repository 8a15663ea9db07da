//! Scalar invariants of the higher fundamental forms.
//!
//! From the pair `(H̄_{2r+1}, H̄_{2r+2})` at each node: `k_r^± = H̄_{2r+1} ± i H̄_{2r+2}`,
//! `a_r^± = |k_r^±|`, ellipse semi-axes `κ_r = (a^+ + a^-)/2`, `μ_r = |a^+ - a^-|/2`,
//! the normal curvature `K_r^⊥`, `||B_r||^2`, `ρ_r`, the Hopf coefficient
//! `f_r = k^+ k^- λ^{2r+2} / 4` and the intrinsic normal curvatures `K_r^*`.

use num_complex::Complex64;
use serde::Serialize;

use crate::chart::MetricField;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::flag::{kperp_of, FlagDecomposition};

/// Below this ratio `ρ_r` counts as zero when dividing by `K_r^⊥`.
const KPERP_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Default, Serialize)]
pub struct LevelInvariants {
    pub r: usize,
    pub kappa: Vec<f64>,
    pub mu: Vec<f64>,
    pub kperp: Vec<f64>,
    pub b2norm: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    pub k_plus: Vec<Complex64>,
    pub k_minus: Vec<Complex64>,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    /// `f_r` with `Φ_r = f_r dz^{2r+2}`.
    pub hopf: Vec<Complex64>,
    /// `<b_r, b_r>` straight from the projected jet, for cross-checking `hopf`.
    pub hopf_direct: Vec<Complex64>,
    pub kstar: Vec<Option<f64>>,
}

impl LevelInvariants {
    /// `b_r = ||B_r||`.
    pub fn b(&self, i: usize) -> f64 {
        self.b2norm[i].sqrt()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantField {
    pub n: usize,
    pub m: usize,
    pub nodes: usize,
    pub levels: Vec<LevelInvariants>,
    pub mask: Vec<bool>,
}

impl InvariantField {
    pub fn level(&self, r: usize) -> &LevelInvariants {
        &self.levels[r - 1]
    }
}

/// `K_r^⊥ = i (H_{2r+1} H̄_{2r+2} - H̄_{2r+1} H_{2r+2})`.
pub fn normal_curvature(h: [Complex64; 2]) -> f64 {
    kperp_of(h)
}

/// Semi-axes `(κ, μ)` of the curvature ellipse, via `κ ± μ = |H̄_{2r+1} ± i H̄_{2r+2}|`.
pub fn ellipse_axes(h: [Complex64; 2]) -> (f64, f64) {
    let i = Complex64::new(0.0, 1.0);
    let p = (h[0] + i * h[1]).norm();
    let q = (h[0] - i * h[1]).norm();
    ((p + q) / 2.0, (p - q).abs() / 2.0)
}

/// `(k^+, k^-, a^+, a^-)` with the orientation canonicalized so `a^+ >= a^-`.
pub fn a_invariants(h: [Complex64; 2]) -> (Complex64, Complex64, f64, f64) {
    let i = Complex64::new(0.0, 1.0);
    let h = canonical(h);
    let kp = h[0] + i * h[1];
    let km = h[0] - i * h[1];
    (kp, km, kp.norm(), km.norm())
}

fn canonical(h: [Complex64; 2]) -> [Complex64; 2] {
    if kperp_of(h) < 0.0 {
        [h[0], -h[1]]
    } else {
        h
    }
}

/// `f_r = (1/4) k^+ k^- λ^{2r+2}`.
pub fn hopf_coefficient(h: [Complex64; 2], lambda: f64, r: usize) -> Complex64 {
    let (kp, km, _, _) = a_invariants(h);
    kp * km * lambda.powi(2 * r as i32 + 2) / 4.0
}

pub fn sigma_of(rho: f64) -> f64 {
    ((1.0 - rho).max(0.0) / (1.0 + rho)).sqrt()
}

/// Computes every invariant on the generic mask of an aligned flag.
pub fn compute_invariants(flag: &FlagDecomposition, metric: &MetricField, tol: &Tolerances) -> Result<InvariantField> {
    let (m, nodes) = (flag.m, flag.nodes);
    let mut levels: Vec<LevelInvariants> = (1..=m)
        .map(|r| LevelInvariants {
            r,
            kappa: vec![0.0; nodes],
            mu: vec![0.0; nodes],
            kperp: vec![0.0; nodes],
            b2norm: vec![0.0; nodes],
            rho: vec![0.0; nodes],
            sigma: vec![0.0; nodes],
            k_plus: vec![Complex64::new(0.0, 0.0); nodes],
            k_minus: vec![Complex64::new(0.0, 0.0); nodes],
            a_plus: vec![0.0; nodes],
            a_minus: vec![0.0; nodes],
            hopf: vec![Complex64::new(0.0, 0.0); nodes],
            hopf_direct: vec![Complex64::new(0.0, 0.0); nodes],
            kstar: vec![None; nodes],
        })
        .collect();
    for i in (0..nodes).filter(|&i| flag.generic[i]) {
        let lambda = metric.lambda[i];
        for r in 1..=m {
            let h = canonical(flag.h(i, r));
            let lv = &mut levels[r - 1];
            let (kp, km, ap, am) = a_invariants(h);
            let kperp = kperp_of(h);
            let b2 = 2f64.powi(r as i32) * (h[0].norm_sqr() + h[1].norm_sqr());
            let rho = if b2 > 0.0 { (2f64.powi(r as i32) * kperp.abs() / b2).min(1.0) } else { 0.0 };
            let (kappa, mu) = ((ap + am) / 2.0, (ap - am).abs() / 2.0);
            let hopf = kp * km * lambda.powi(2 * r as i32 + 2) / 4.0;
            let b = flag.b(i, r);
            let direct: Complex64 = b.iter().map(|c| c * c).sum();
            let scale: f64 = b.iter().map(|c| c.norm_sqr()).sum();
            if scale > 0.0 && (hopf - direct).norm() > tol.hopf_consistency * scale {
                return Err(Error::Consistency(format!("Hopf coefficient f_{r} at node {i}: factorized {hopf} vs direct {direct}")));
            }
            lv.kappa[i] = kappa;
            lv.mu[i] = mu;
            lv.kperp[i] = kperp;
            lv.b2norm[i] = b2;
            lv.rho[i] = rho;
            lv.sigma[i] = sigma_of(rho);
            lv.k_plus[i] = kp;
            lv.k_minus[i] = km;
            lv.a_plus[i] = ap;
            lv.a_minus[i] = am;
            lv.hopf[i] = hopf;
            lv.hopf_direct[i] = direct;
        }
        for r in 1..=m {
            let kstar = intrinsic_normal_curvature(&levels, i, r);
            levels[r - 1].kstar[i] = kstar;
        }
    }
    Ok(InvariantField { n: flag.n, m, nodes, levels, mask: flag.generic.clone() })
}

/// `K_r^*` from Proposition-1 type formulas; `None` where a needed `K^⊥` vanishes.
pub fn intrinsic_normal_curvature(levels: &[LevelInvariants], i: usize, r: usize) -> Option<f64> {
    let m = levels.len();
    let get = |s: usize| &levels[s - 1];
    let nonzero = |s: usize| get(s).rho[i] > KPERP_FLOOR;
    let next_b2 = if r < m { get(r + 1).b2norm[i] } else { 0.0 };
    if !nonzero(r) {
        return None;
    }
    let kp = get(r).kperp[i];
    if r == 1 {
        return Some(kp - next_b2 / (2.0 * kp));
    }
    if !nonzero(r - 1) {
        return None;
    }
    let prev = get(r - 1);
    Some(kp * prev.b2norm[i] / (2f64.powi(r as i32 - 2) * prev.kperp[i] * prev.kperp[i]) - next_b2 / (2f64.powi(r as i32) * kp))
}

/// Worst relative residuals of the pointwise identities over the mask.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IdentityResiduals {
    /// `|K^⊥| = 2 κ μ`
    pub axis: f64,
    /// `2^r (|H_{2r+1}|^2 + |H_{2r+2}|^2) = 2^r (κ^2 + μ^2)`
    pub norm: f64,
    /// `|f_r|^2 = λ^{4r+4} / 2^{2r+4} (||B||^4 - 4^r (K^⊥)^2)`
    pub hopf_magnitude: f64,
    /// `(a^±)^2 = 2^{-r} ||B||^2 ± K^⊥`
    pub squared_a: f64,
    /// `f_r` factorized vs `<b_r, b_r>`
    pub hopf_direct: f64,
}

pub fn identity_residuals(inv: &InvariantField, metric: &MetricField, mask: &[bool]) -> IdentityResiduals {
    let mut out = IdentityResiduals::default();
    for lv in &inv.levels {
        let r = lv.r as i32;
        for i in (0..inv.nodes).filter(|&i| mask[i] && inv.mask[i]) {
            let b2 = lv.b2norm[i];
            let s = b2 / 2f64.powi(r);
            if b2 <= 0.0 {
                continue;
            }
            out.axis = out.axis.max((lv.kperp[i].abs() - 2.0 * lv.kappa[i] * lv.mu[i]).abs() / s);
            let via_axes = 2f64.powi(r) * (lv.kappa[i].powi(2) + lv.mu[i].powi(2));
            out.norm = out.norm.max((via_axes - b2).abs() / b2);
            let l = metric.lambda[i];
            let rhs = l.powi(4 * r + 4) / 2f64.powi(2 * r + 4) * (b2 * b2 - 4f64.powi(r) * lv.kperp[i].powi(2));
            let scale = l.powi(4 * r + 4) / 2f64.powi(2 * r + 4) * b2 * b2;
            out.hopf_magnitude = out.hopf_magnitude.max((lv.hopf[i].norm_sqr() - rhs).abs() / scale);
            out.squared_a = out
                .squared_a
                .max((lv.a_plus[i].powi(2) - (s + lv.kperp[i])).abs() / s)
                .max((lv.a_minus[i].powi(2) - (s - lv.kperp[i])).abs() / s);
            let hs = l.powi(2 * r + 2) * s;
            out.hopf_direct = out.hopf_direct.max((lv.hopf[i] - lv.hopf_direct[i]).norm() / hs);
        }
    }
    out
}
