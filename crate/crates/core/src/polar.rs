//! Polar surfaces of minimal surfaces in odd-dimensional spheres and self-duality.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::analysis::{analyze_samples, Analysis};
use crate::classify::{ClassificationReport, Stat, Verdict};
use crate::error::{Error, Result};

/// Orthogonal alignment of two sampled immersions.
#[derive(Debug, Clone, Serialize)]
pub struct Procrustes {
    #[serde(skip)]
    pub rotation: DMatrix<f64>,
    pub rms: f64,
    pub max: f64,
    pub det: f64,
}

/// Orthogonal `Q` minimizing `Σ |target_i - Q source_i|^2` over the masked nodes.
pub fn procrustes(target: &[f64], source: &[f64], dim: usize, mask: &[bool]) -> Procrustes {
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for i in (0..mask.len()).filter(|&i| mask[i]) {
        for a in 0..dim {
            for b in 0..dim {
                m[(a, b)] += target[i * dim + a] * source[i * dim + b];
            }
        }
    }
    let svd = m.svd(true, true);
    let q = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let (mut sum, mut max, mut count) = (0.0, 0.0f64, 0usize);
    for i in (0..mask.len()).filter(|&i| mask[i]) {
        let s = nalgebra::DVector::from_column_slice(&source[i * dim..(i + 1) * dim]);
        let t = nalgebra::DVector::from_column_slice(&target[i * dim..(i + 1) * dim]);
        let d = (t - &q * s).norm();
        sum += d * d;
        max = max.max(d);
        count += 1;
    }
    let det = q.determinant();
    Procrustes { rotation: q, rms: (sum / count.max(1) as f64).sqrt(), max, det }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolarResult {
    pub dim: usize,
    /// `f* = e_{2m+1}`, row-major `node * (n+1) + component`.
    #[serde(skip)]
    pub samples: Vec<f64>,
    /// Predicted conformal factor `(2 a_m^+ / a_{m-1}^+)^2`.
    #[serde(skip)]
    pub metric_factor: Vec<f64>,
    /// `max ||f*| - 1|`.
    pub unit_deviation: f64,
    /// `max |<f*, e_A>|` over `A < 2m+1` and `|<f*, f>|`.
    pub orthogonality: f64,
}

/// The unit section of the last normal bundle, sign-continued by the frame alignment.
pub fn polar_map(an: &Analysis) -> Result<PolarResult> {
    let n = an.n;
    if n.is_multiple_of(2) {
        return Err(Error::Domain(format!("polar surfaces need an odd-dimensional sphere, got S^{n}")));
    }
    let m = an.m;
    let dim = n + 1;
    let nodes = an.inv.nodes;
    let mut samples = vec![0.0; nodes * dim];
    let mut unit: f64 = 0.0;
    let mut orth: f64 = 0.0;
    for i in 0..nodes {
        let e = an.flag.e(i, 2 * m + 1);
        samples[i * dim..(i + 1) * dim].copy_from_slice(e);
        if !an.mask[i] {
            continue;
        }
        unit = unit.max((e.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs());
        for a in 0..=2 * m {
            let other = an.flag.e(i, a);
            orth = orth.max(e.iter().zip(other).map(|(x, y)| x * y).sum::<f64>().abs());
        }
    }
    let metric_factor = (0..nodes)
        .map(|i| {
            let prev = if m == 1 { 2.0 } else { an.inv.level(m - 1).a_plus[i] };
            (2.0 * an.inv.level(m).a_plus[i] / prev).powi(2)
        })
        .collect();
    Ok(PolarResult { dim, samples, metric_factor, unit_deviation: unit, orthogonality: orth })
}

#[derive(Debug, Clone, Serialize)]
pub struct PolarComparison {
    /// `max |F*/F - (2a_m^+/a_{m-1}^+)^2| / factor`.
    pub metric_deviation: f64,
    /// Per level, `max |f*_r - f_r|` relative to the bound `λ^{2r+2} ||B_r||^2 / 2^{r+2}`.
    pub hopf_deviation: Vec<f64>,
}

pub fn compare_polar(original: &Analysis, polar: &PolarResult, polar_an: &Analysis) -> PolarComparison {
    let mask: Vec<bool> = (0..original.inv.nodes).map(|i| original.mask[i] && polar_an.mask[i]).collect();
    let metric_deviation = (0..mask.len())
        .filter(|&i| mask[i])
        .map(|i| {
            let ratio = polar_an.metric.f[i] / original.metric.f[i];
            (ratio - polar.metric_factor[i]).abs() / polar.metric_factor[i]
        })
        .fold(0.0, f64::max);
    let hopf_deviation = (1..=original.m.min(polar_an.m))
        .map(|r| {
            let lv = original.inv.level(r);
            let (a, b) = (&lv.hopf, &polar_an.inv.level(r).hopf);
            // |f_r| <= λ^{2r+2} ||B_r||^2 / 2^{r+2}
            let scale = (0..mask.len())
                .filter(|&i| mask[i])
                .map(|i| original.metric.lambda[i].powi(2 * r as i32 + 2) * lv.b2norm[i] / 2f64.powi(r as i32 + 2))
                .fold(0.0, f64::max);
            (0..mask.len()).filter(|&i| mask[i]).map(|i| (a[i] - b[i]).norm()).fold(0.0, f64::max) / scale
        })
        .collect();
    PolarComparison { metric_deviation, hopf_deviation }
}

/// Polar map, its re-analysis, and the comparison with the original surface.
pub fn polar_pipeline(an: &Analysis) -> Result<(PolarResult, Analysis, PolarComparison)> {
    let polar = polar_map(an)?;
    let polar_an = analyze_samples(an.grid.clone(), &polar.samples, an.n, &an.tol)?;
    let cmp = compare_polar(an, &polar, &polar_an);
    Ok((polar, polar_an, cmp))
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfDualityReport {
    /// Residual of `a_{m-r}/a_{m-r-1} = a_r/a_{r-1}` for `r = 0..=m`, relative to the right side.
    pub ladder: Vec<Stat>,
    /// `a_m = a_{l-1} a_l / 4` (m = 2l) or `a_m = a_l^2 / 4` (m = 2l+1), relative to `a_m`.
    pub closing: Stat,
    /// `Δ log(a_{l-1} a_l) - (m+1)K` or `Δ log a_l - (m+1)K/2`; absent when `l = 0`.
    pub laplacian: Option<Stat>,
    pub verdict: Verdict,
}

/// Ladder value `a_r^+` with `a_0 = 2`, `a_{-1} = 4`.
fn ladder(a_plus: &[&[f64]], r: isize, i: usize) -> f64 {
    match r {
        -1 => 4.0,
        0 => 2.0,
        r => a_plus[r as usize - 1][i],
    }
}

/// Self-duality residuals from the fields `a_1^+..a_m^+`.
pub fn self_duality_residuals(a_plus: &[&[f64]], mask: &[bool], tol: f64) -> SelfDualityReport {
    let m = a_plus.len() as isize;
    let nodes = mask.len();
    let mut ladder_stats = Vec::new();
    for r in 0..=m {
        let mut abs = vec![0.0; nodes];
        let mut scale = vec![0.0; nodes];
        for i in 0..nodes {
            let lhs = ladder(a_plus, m - r, i) / ladder(a_plus, m - r - 1, i);
            let rhs = ladder(a_plus, r, i) / ladder(a_plus, r - 1, i);
            abs[i] = (lhs - rhs) / rhs;
            scale[i] = 1.0;
        }
        ladder_stats.push(Stat::of(&abs, &scale, mask));
    }
    let l = m / 2;
    let mut abs = vec![0.0; nodes];
    for i in 0..nodes {
        let am = ladder(a_plus, m, i);
        let target = if m % 2 == 0 { ladder(a_plus, l - 1, i) * ladder(a_plus, l, i) / 4.0 } else { ladder(a_plus, l, i).powi(2) / 4.0 };
        abs[i] = (am - target) / am;
    }
    let closing = Stat::of(&abs, &vec![1.0; nodes], mask);
    let ok = closing.max_abs < tol && ladder_stats.iter().all(|s| s.max_abs < tol);
    SelfDualityReport { ladder: ladder_stats, closing, laplacian: None, verdict: Verdict::from_bool(ok) }
}

pub fn self_duality_check(an: &Analysis, class: &ClassificationReport) -> Result<SelfDualityReport> {
    if an.n.is_multiple_of(2) {
        return Err(Error::Domain(format!("self-duality needs an odd-dimensional sphere, got S^{}", an.n)));
    }
    if class.superconformal != Verdict::Pass {
        return Err(Error::Precondition("self-duality is defined for superconformal surfaces".into()));
    }
    let fields: Vec<&[f64]> = (1..=an.m).map(|r| an.inv.level(r).a_plus.as_slice()).collect();
    let mut rep = self_duality_residuals(&fields, &an.mask, an.tol.equality);
    let (m, l) = (an.m, an.m / 2);
    let nodes = an.inv.nodes;
    let product: Option<Vec<f64>> = if m % 2 == 0 && l >= 1 {
        Some((0..nodes).map(|i| ladder(&fields, l as isize - 1, i) * ladder(&fields, l as isize, i)).collect())
    } else if m % 2 == 1 && l >= 1 {
        Some((0..nodes).map(|i| ladder(&fields, l as isize, i)).collect())
    } else {
        None
    };
    if let Some(p) = product {
        let logp: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        let lap = an.grid.laplace_beltrami(&logp, &an.metric)?;
        let c = if m % 2 == 0 { (m + 1) as f64 } else { (m + 1) as f64 / 2.0 };
        let abs: Vec<f64> = (0..nodes).map(|i| lap[i] - c * an.metric.k[i]).collect();
        let scale: Vec<f64> = (0..nodes).map(|i| lap[i].abs().max(c * an.metric.k[i].abs())).collect();
        rep.laplacian = Some(Stat::of(&abs, &scale, &an.mask));
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct PolarCurvatureReport {
    #[serde(skip)]
    pub formula: Vec<f64>,
    /// Nodes where `a_2^+` vanishes and the formula is undefined.
    pub masked: usize,
    /// `max |K_*^{formula} - K_*^{direct}|` when the direct curvature is supplied.
    pub deviation: Option<f64>,
}

/// `K_* = 1 - (a_1^+)^4 / (8 (a_2^+)^2)` for superconformal surfaces in S^5.
pub fn polar_curvature_s5(a1: &[f64], a2: &[f64], mask: &[bool], direct: Option<&[f64]>) -> PolarCurvatureReport {
    let amax = a2.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v.abs()).fold(0.0, f64::max);
    let floor = 1e-12 * amax.max(f64::MIN_POSITIVE);
    let mut masked = 0;
    let formula: Vec<f64> = (0..a1.len())
        .map(|i| {
            if a2[i] > floor {
                1.0 - a1[i].powi(4) / (8.0 * a2[i] * a2[i])
            } else {
                if mask[i] {
                    masked += 1;
                }
                f64::NAN
            }
        })
        .collect();
    let deviation =
        direct.map(|d| (0..a1.len()).filter(|&i| mask[i] && formula[i].is_finite()).map(|i| (formula[i] - d[i]).abs()).fold(0.0, f64::max));
    PolarCurvatureReport { formula, masked, deviation }
}
