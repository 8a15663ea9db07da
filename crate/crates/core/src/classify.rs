//! Classification predicates and PDE residuals.
//!
//! Holomorphy of the Hopf differentials decides exceptional / superconformal /
//! superminimal status; the remaining checks evaluate the structure equations
//! the a-invariants of exceptional surfaces must obey, the Ricci condition, the
//! closed-form profiles of Ricci surfaces, zero counts of AVT functions through
//! flux integrals, and the Liouville-type constraint used for S^6 curves.

use num_complex::Complex64;
use num_rational::Rational64;
use serde::Serialize;

use crate::analysis::Analysis;
use crate::chart::{ChartGrid, MetricField};
use crate::config::Tolerances;
use crate::error::{Error, Result};

const EPS_HOLO: f64 = 1e-14;

/// Outcome of a check that may lack enough data to decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// Residual statistics over the evaluation mask.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Stat {
    pub max_abs: f64,
    pub max_rel: f64,
    pub mean_abs: f64,
    pub nodes: usize,
}

impl Stat {
    pub fn of(abs: &[f64], scale: &[f64], mask: &[bool]) -> Self {
        let mut s = Stat::default();
        let mut sum = 0.0;
        for i in (0..abs.len()).filter(|&i| mask[i]) {
            let a = abs[i].abs();
            s.max_abs = s.max_abs.max(a);
            s.max_rel = s.max_rel.max(a / scale[i].abs().max(1.0));
            sum += a;
            s.nodes += 1;
        }
        s.mean_abs = if s.nodes > 0 { sum / s.nodes as f64 } else { 0.0 };
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HolomorphyResult {
    #[serde(skip)]
    pub field: Vec<f64>,
    pub max: f64,
    pub verdict: Verdict,
}

/// `|∂̄ f_r| / (||f_r||_∞ / diam + ε)` with a verdict at `tol.holomorphy`.
pub fn holomorphy_residual(grid: &ChartGrid, f: &[Complex64], mask: &[bool], tol: &Tolerances) -> Result<HolomorphyResult> {
    let d = grid.differentiate(f, 0, 1)?;
    let sup = f.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v.norm()).fold(0.0, f64::max);
    let scale = sup / grid.diameter() + EPS_HOLO;
    let field: Vec<f64> = d.iter().map(|v| v.norm() / scale).collect();
    let max = crate::chart::masked_max(&field, mask);
    let fraction = mask.iter().filter(|&&b| b).count() as f64 / mask.len() as f64;
    let verdict = if fraction < tol.min_mask_fraction { Verdict::Inconclusive } else { Verdict::from_bool(max < tol.holomorphy) };
    Ok(HolomorphyResult { field, max, verdict })
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelClass {
    pub r: usize,
    pub holomorphy: HolomorphyResult,
    /// `Φ_r ≡ 0`, decided from `max a^-/a^+`.
    pub vanishes: bool,
    pub max_ratio: f64,
    /// Standard deviation of the eccentricity `μ_r / κ_r`.
    pub eccentricity_std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub exceptional: Verdict,
    pub superconformal: Verdict,
    pub superminimal: Verdict,
    pub levels: Vec<LevelClass>,
    /// Exceptionality through constant eccentricities `r <= m-1`.
    pub eccentricity_exceptional: bool,
    pub disagreement: Option<String>,
    pub flat: bool,
}

impl ClassificationReport {
    pub fn inconclusive(&self) -> bool {
        self.exceptional == Verdict::Inconclusive || self.disagreement.is_some()
    }
}

pub fn classify_surface(an: &Analysis) -> Result<ClassificationReport> {
    let tol = &an.tol;
    let mut levels = Vec::new();
    for lv in &an.inv.levels {
        let ratio = (0..an.inv.nodes)
            .filter(|&i| an.mask[i])
            .map(|i| if lv.a_plus[i] > 0.0 { lv.a_minus[i] / lv.a_plus[i] } else { 0.0 })
            .fold(0.0, f64::max);
        let vanishes = ratio < tol.vanishing;
        let mut holomorphy = holomorphy_residual(&an.grid, &lv.hopf, &an.mask, tol)?;
        if vanishes {
            // Φ_r is numerically zero; the normalized residual only sees roundoff.
            holomorphy.field.iter_mut().for_each(|v| *v = 0.0);
            holomorphy.max = 0.0;
            if holomorphy.verdict != Verdict::Inconclusive {
                holomorphy.verdict = Verdict::Pass;
            }
        }
        let ecc: Vec<f64> = (0..an.inv.nodes).map(|i| if lv.kappa[i] > 0.0 { lv.mu[i] / lv.kappa[i] } else { 0.0 }).collect();
        levels.push(LevelClass { r: lv.r, holomorphy, vanishes, max_ratio: ratio, eccentricity_std: an.std_dev(&ecc) });
    }
    let m = an.m;
    let all = |f: &dyn Fn(&LevelClass) -> bool, upto: usize| levels.iter().filter(|l| l.r <= upto).all(f);
    let any_inconclusive = levels.iter().any(|l| l.holomorphy.verdict == Verdict::Inconclusive);
    let exceptional_b = all(&|l| l.holomorphy.verdict.passed(), m);
    let exceptional = if any_inconclusive { Verdict::Inconclusive } else { Verdict::from_bool(exceptional_b) };
    let sc = exceptional_b && all(&|l| l.vanishes, m - 1);
    let sm = sc && all(&|l| l.vanishes, m);
    let gate = |b: bool| if any_inconclusive { Verdict::Inconclusive } else { Verdict::from_bool(b) };
    let ecc_exc = all(&|l| l.eccentricity_std < tol.constancy.max(1e-6), m - 1);
    let disagreement = if !any_inconclusive && ecc_exc != exceptional_b {
        Some(format!(
            "holomorphy says exceptional = {exceptional_b}, eccentricity constancy says {ecc_exc} (std devs {:?})",
            levels.iter().map(|l| l.eccentricity_std).collect::<Vec<_>>()
        ))
    } else {
        None
    };
    let flat = an.masked_max_abs(&an.metric.k) < 1e-8;
    Ok(ClassificationReport {
        exceptional,
        superconformal: gate(sc),
        superminimal: gate(sm),
        levels,
        eccentricity_exceptional: ecc_exc,
        disagreement,
        flat,
    })
}

/// One residual family of the structure equations of exceptional surfaces.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualEntry {
    pub eq: &'static str,
    pub r: usize,
    pub sign: &'static str,
    pub stat: Stat,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem2Report {
    /// Per `r <= m-1`, standard deviation of `ρ_r`.
    pub rho_std: Vec<f64>,
    pub rho_mean: Vec<f64>,
    pub entries: Vec<ResidualEntry>,
}

impl Theorem2Report {
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.stat.max_rel).fold(0.0, f64::max)
    }
}

/// Safe log-Laplacian: `Δ log a` with nodes where `a` vanishes excluded from `mask`.
fn log_laplacian(an: &Analysis, a: &[f64], mask: &mut [bool]) -> Result<Vec<f64>> {
    let amax = an.masked_max_abs(a);
    let floor = 1e-12 * amax.max(f64::MIN_POSITIVE);
    let mut log_a = vec![0.0; a.len()];
    for i in 0..a.len() {
        if a[i] > floor {
            log_a[i] = a[i].ln();
        } else {
            mask[i] = false;
            log_a[i] = floor.ln();
        }
    }
    an.grid.laplace_beltrami(&log_a, &an.metric)
}

/// Residuals of the equations satisfied by exceptional surfaces: constancy of
/// `ρ_r`, `a^- = σ a^+`, `a_1^+ = √((1+ρ_1)(1-K))`, and the Laplacian identities
/// for `log a_r^±`.
pub fn theorem2_residuals(an: &Analysis, class: &ClassificationReport) -> Result<Theorem2Report> {
    if class.exceptional != Verdict::Pass {
        return Err(Error::Precondition("Theorem-2 residuals need an exceptional surface".into()));
    }
    let (m, nodes) = (an.m, an.inv.nodes);
    let k = &an.metric.k;
    let mut rho_std = Vec::new();
    let mut rho_mean = Vec::new();
    for r in 1..m {
        rho_std.push(an.std_dev(&an.inv.level(r).rho));
        rho_mean.push(an.mean(&an.inv.level(r).rho));
    }
    let rho_at = |r: usize, i: usize| if r == 0 { 1.0 } else { an.inv.level(r).rho[i] };
    let b2_at = |r: usize, i: usize| if r == 0 { 2.0 } else { an.inv.level(r).b2norm[i] };
    let mut entries = Vec::new();

    // a^- = σ a^+ and the a_1^+ profile.
    for r in 1..m {
        let lv = an.inv.level(r);
        let sigma = crate::invariants::sigma_of(rho_mean[r - 1]);
        let abs: Vec<f64> = (0..nodes).map(|i| lv.a_minus[i] - sigma * lv.a_plus[i]).collect();
        let scale: Vec<f64> = lv.a_plus.clone();
        entries.push(ResidualEntry { eq: "4.1", r, sign: "-", stat: Stat::of(&abs, &scale, &an.mask) });
    }
    {
        let lv = an.inv.level(1);
        let abs: Vec<f64> = (0..nodes)
            .map(|i| {
                let rho = if m == 1 { lv.rho[i] } else { rho_mean[0] };
                lv.a_plus[i] - ((1.0 + rho) * (1.0 - k[i])).sqrt()
            })
            .collect();
        entries.push(ResidualEntry { eq: "4.1", r: 1, sign: "+", stat: Stat::of(&abs, &lv.a_plus, &an.mask) });
    }

    for r in 1..=m {
        let lv = an.inv.level(r);
        for (sign, a, s) in [("+", &lv.a_plus, -1.0), ("-", &lv.a_minus, 1.0)] {
            if sign == "-" && class.levels[r - 1].vanishes {
                // a_r^- ≡ 0; its logarithm is undefined.
                continue;
            }
            let mut mask = an.mask.clone();
            let lap = log_laplacian(an, a, &mut mask)?;
            let mut abs = vec![0.0; nodes];
            let mut scale = vec![0.0; nodes];
            for i in (0..nodes).filter(|&i| mask[i]) {
                let bracket = if r < m {
                    let rho = rho_at(r, i);
                    let b2 = b2_at(r, i);
                    let next = an.inv.level(r + 1).b2norm[i];
                    rho * b2 / (rho_at(r - 1, i).powi(2) * b2_at(r - 1, i)) - next / (rho * b2)
                } else {
                    2f64.powi(m as i32) * lv.kperp[i] / (rho_at(m - 1, i).powi(2) * b2_at(m - 1, i))
                };
                let base = (r as f64 + 1.0) * k[i];
                let rhs = base + s * bracket;
                abs[i] = lap[i] - rhs;
                scale[i] = lap[i].abs().max(base.abs()).max(bracket.abs());
            }
            let eq = if r < m { "4.2" } else { "4.3" };
            entries.push(ResidualEntry { eq, r, sign, stat: Stat::of(&abs, &scale, &mask) });
        }
    }
    Ok(Theorem2Report { rho_std, rho_mean, entries })
}

#[derive(Debug, Clone, Serialize)]
pub struct RicciReport {
    #[serde(skip)]
    pub residual: Vec<f64>,
    /// Gauss curvature of `√(1-K) ds^2`.
    #[serde(skip)]
    pub rescaled_curvature: Vec<f64>,
    pub stat: Stat,
    pub rescaled_max: f64,
    pub evaluated: usize,
}

/// `Δ log(1-K) - 4K` on nodes with `K < 1 - δ`.
pub fn ricci_residual(grid: &ChartGrid, metric: &MetricField, mask: &[bool], tol: &Tolerances) -> Result<RicciReport> {
    let delta = tol.curvature_margin;
    let mut eval: Vec<bool> = (0..grid.len()).map(|i| mask[i] && metric.k[i] < 1.0 - delta).collect();
    if !eval.iter().any(|&b| b) {
        return Err(Error::Domain("K >= 1 - δ on every node; Ricci condition undefined".into()));
    }
    let log1k: Vec<f64> = metric.k.iter().map(|&k| (1.0 - k).max(delta).ln()).collect();
    let lap = grid.laplace_beltrami(&log1k, metric)?;
    let residual: Vec<f64> = (0..grid.len()).map(|i| lap[i] - 4.0 * metric.k[i]).collect();
    let scale: Vec<f64> = (0..grid.len()).map(|i| lap[i].abs().max(4.0 * metric.k[i].abs())).collect();
    let rescaled: Vec<f64> = (0..grid.len()).map(|i| (1.0 - metric.k[i]).max(delta).powf(-0.5) * (metric.k[i] - 0.25 * lap[i])).collect();
    for (i, e) in eval.iter_mut().enumerate() {
        *e = *e && residual[i].is_finite();
    }
    let stat = Stat::of(&residual, &scale, &eval);
    let rescaled_max = crate::chart::masked_max(&rescaled, &eval);
    let evaluated = stat.nodes;
    Ok(RicciReport { residual, rescaled_curvature: rescaled, stat, rescaled_max, evaluated })
}

/// Exponent `e_r` in `||B_r|| = β_r (1-K)^{e_r}` for Ricci surfaces.
pub fn lemma9_exponent(r: usize) -> Rational64 {
    let r = r as i64;
    match (r % 2, r % 4) {
        (1, _) => Rational64::new(r + 1, 4),
        (_, 2) => Rational64::new(r + 2, 4),
        _ => Rational64::new(r, 4),
    }
}

/// `β_1 = √2`, `β_r = ρ_{r-1} β_{r-1}`.
pub fn lemma9_beta(rho: &[f64], r: usize) -> f64 {
    (1..r).fold(2f64.sqrt(), |b, s| b * rho[s - 1])
}

/// Expected `a_r^+ = 2^{-r/2} √(1+ρ_r) β_r (1-K)^{e_r}`.
pub fn lemma9_expected(rho: &[f64], r: usize, k: f64) -> f64 {
    let e = lemma9_exponent(r);
    let e = *e.numer() as f64 / *e.denom() as f64;
    2f64.powf(-(r as f64) / 2.0) * (1.0 + rho[r - 1]).sqrt() * lemma9_beta(rho, r) * (1.0 - k).powf(e)
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma9Report {
    /// Per level, max relative deviation of measured `a_r^+` from the profile.
    pub deviation: Vec<f64>,
    #[serde(skip)]
    pub expected: Vec<Vec<f64>>,
}

/// Compares measured `a_r^+` fields with the closed-form Ricci-surface profiles.
/// `rho[r-1]` holds the constant `ρ_r` (`ρ_m` included).
pub fn lemma9_profile(a_plus: &[Vec<f64>], k: &[f64], rho: &[f64], mask: &[bool]) -> Result<Lemma9Report> {
    let flat = k.iter().zip(mask).filter(|(_, &m)| m).all(|(v, _)| v.abs() < 1e-8);
    if flat {
        return Err(Error::Precondition("closed-form Ricci profiles assume a non-flat metric".into()));
    }
    let mut deviation = Vec::new();
    let mut expected = Vec::new();
    for (idx, a) in a_plus.iter().enumerate() {
        let r = idx + 1;
        let e: Vec<f64> = k.iter().map(|&kv| lemma9_expected(rho, r, kv)).collect();
        let dev = (0..k.len()).filter(|&i| mask[i] && e[i] > 0.0).map(|i| (a[i] - e[i]).abs() / e[i]).fold(0.0, f64::max);
        deviation.push(dev);
        expected.push(e);
    }
    Ok(Lemma9Report { deviation, expected })
}

/// Checks that the Ricci profiles satisfy the Laplacian identities of exceptional
/// surfaces for `r = 1..rmax`, with `ρ_r = 1` for even `r`. Returns the worst
/// deviation over a sweep of curvature values; the identity must hold for every
/// `K` because `Δ log(1-K) = 4K`.
pub fn lemma9_consistency(odd_rho: &[f64], rmax: usize) -> f64 {
    let mut rho = Vec::new();
    let mut it = odd_rho.iter().cycle();
    for r in 1..=rmax + 1 {
        rho.push(if r % 2 == 0 { 1.0 } else { *it.next().unwrap() });
    }
    let b2 = |r: usize, k: f64| -> f64 {
        if r == 0 {
            return 2.0;
        }
        let a = lemma9_expected(&rho, r, k);
        2f64.powi(r as i32) * a * a / (1.0 + rho[r - 1])
    };
    let rho_at = |r: usize| if r == 0 { 1.0 } else { rho[r - 1] };
    let mut worst: f64 = 0.0;
    for &k in &[-3.0, -0.5, 0.1, 0.4, 0.9] {
        for r in 1..=rmax {
            let e = lemma9_exponent(r);
            let e = *e.numer() as f64 / *e.denom() as f64;
            // Δ log a_r^+ = e_r Δ log(1-K) = 4 e_r K
            let lhs = 4.0 * e * k;
            let bracket = rho_at(r) * b2(r, k) / (rho_at(r - 1).powi(2) * b2(r - 1, k)) - b2(r + 1, k) / (rho_at(r) * b2(r, k));
            let rhs = (r as f64 + 1.0) * k - bracket;
            let rhs = if rho_at(r) < 1.0 { (r as f64 + 1.0) * k } else { rhs };
            let bracket_zero = if rho_at(r) < 1.0 { bracket.abs() } else { 0.0 };
            worst = worst.max((lhs - rhs).abs()).max(bracket_zero);
        }
    }
    worst
}

/// Excision disk around a zero, radius in chart units.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Disk {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluxReport {
    /// `∫ Δ log a dA` over the chart minus the disks.
    pub integral: f64,
    /// Zero order enclosed by each disk.
    pub disk_orders: Vec<f64>,
    pub n_estimate: f64,
    pub n_rounded: i64,
    /// `1 - 2 |N - round(N)|`.
    pub confidence: f64,
}

/// Default excision radius: eight grid cells.
pub fn default_disk_radius(grid: &ChartGrid) -> f64 {
    let (hx, hy) = grid.spacing();
    8.0 * hx.max(hy)
}

fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Zero count of an AVT function from `∫ Δ log a dA = -2π N` (closed charts)
/// or from flux through excision disks.
pub fn global_flux(grid: &ChartGrid, a: &[f64], disks: &[Disk], mask: &[bool]) -> Result<FluxReport> {
    let (hx, hy) = grid.spacing();
    let cell = hx.max(hy);
    for (i, d) in disks.iter().enumerate() {
        for e in &disks[i + 1..] {
            if (d.x - e.x).hypot(d.y - e.y) < 4.0 * cell {
                return Err(Error::Resolution(format!("zeros at ({}, {}) and ({}, {}) are closer than 4 grid cells", d.x, d.y, e.x, e.y)));
            }
        }
        if d.radius < 4.0 * cell {
            return Err(Error::Resolution(format!("excision radius {} below 4 grid cells", d.radius)));
        }
    }
    if !grid.is_torus() && disks.is_empty() {
        return Err(Error::Precondition("open charts need excision disks around the zeros".into()));
    }
    let log_a: Vec<f64> = a.iter().map(|&v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let gx = grid.local_partial(&log_a, 1, 0)?;
    let gy = grid.local_partial(&log_a, 0, 1)?;
    let lap: Vec<f64> = grid.local_partial(&log_a, 2, 0)?.iter().zip(grid.local_partial(&log_a, 0, 2)?).map(|(a, b)| a + b).collect();
    let outside = |i: usize| {
        let (x, y) = grid.coords(i);
        disks.iter().all(|d| (x - d.x).hypot(y - d.y) > d.radius)
    };
    let integral = neumaier((0..grid.len()).filter(|&i| mask[i] && outside(i)).map(|i| lap[i] * grid.quadrature_weight(i)));
    let samples = 512;
    let mut disk_orders = Vec::new();
    for d in disks {
        let mut flux = 0.0;
        let mut lap_mean = 0.0;
        for j in 0..samples {
            let t = std::f64::consts::TAU * j as f64 / samples as f64;
            let (c, s) = (t.cos(), t.sin());
            let (x, y) = (d.x + d.radius * c, d.y + d.radius * s);
            let dr = grid.interpolate(&gx, x, y) * c + grid.interpolate(&gy, x, y) * s;
            flux += dr * d.radius * std::f64::consts::TAU / samples as f64;
            lap_mean += grid.interpolate(&lap, x, y) / samples as f64;
        }
        let inside = std::f64::consts::PI * d.radius * d.radius * lap_mean;
        disk_orders.push((flux - inside) / std::f64::consts::TAU);
    }
    let n_estimate = if disks.is_empty() { -integral / std::f64::consts::TAU } else { disk_orders.iter().sum() };
    let n_rounded = n_estimate.round() as i64;
    let confidence = 1.0 - 2.0 * (n_estimate - n_rounded as f64).abs();
    Ok(FluxReport { integral, disk_orders, n_estimate, n_rounded, confidence })
}

/// Polynomial with real coefficients, lowest degree first.
#[derive(Debug, Clone, Serialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleReport {
    #[serde(skip)]
    pub residual: Vec<f64>,
    pub stat: Stat,
    pub hypothesis_laplacian: f64,
    pub hypothesis_gradient: f64,
    pub evaluated: usize,
}

/// Residual of `2KQ + (2P - Q')(P - Q') + Q(2P' - Q'') = 0` for a function with
/// `Δf = P(f)` and `|∇f|^2 = Q(f)`.
pub fn liouville_constraint(
    grid: &ChartGrid,
    f: &[f64],
    p: &Poly,
    q: &Poly,
    metric: &MetricField,
    mask: &[bool],
    tol: &Tolerances,
) -> Result<LiouvilleReport> {
    let n = grid.len();
    let lap = grid.laplace_beltrami(f, metric)?;
    let fx = grid.partial_real(f, 1, 0)?;
    let fy = grid.partial_real(f, 0, 1)?;
    let grad2: Vec<f64> = (0..n).map(|i| (fx[i] * fx[i] + fy[i] * fy[i]) / metric.f[i]).collect();
    let gmax = crate::chart::masked_max(&grad2, mask);
    let eval: Vec<bool> = (0..n).map(|i| mask[i] && grad2[i] > 1e-10 * gmax.max(1e-300) && gmax > 1e-20).collect();
    let (dp, dq) = (p.derivative(), q.derivative());
    let ddq = dq.derivative();
    let mut hyp_l: f64 = 0.0;
    let mut hyp_g: f64 = 0.0;
    let mut residual = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for i in (0..n).filter(|&i| eval[i]) {
        let v = f[i];
        let (pv, qv, dpv, dqv, ddqv) = (p.eval(v), q.eval(v), dp.eval(v), dq.eval(v), ddq.eval(v));
        hyp_l = hyp_l.max((lap[i] - pv).abs() / pv.abs().max(1.0));
        hyp_g = hyp_g.max((grad2[i] - qv).abs() / qv.abs().max(1.0));
        let terms = [2.0 * metric.k[i] * qv, (2.0 * pv - dqv) * (pv - dqv), qv * (2.0 * dpv - ddqv)];
        residual[i] = terms.iter().sum();
        scale[i] = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
    }
    if hyp_l > tol.pde || hyp_g > tol.pde {
        return Err(Error::Precondition(format!("Δf = P(f) or |∇f|^2 = Q(f) fails: residuals {hyp_l:.3e}, {hyp_g:.3e}")));
    }
    let stat = Stat::of(&residual, &scale, &eval);
    Ok(LiouvilleReport { residual, evaluated: stat.nodes, stat, hypothesis_laplacian: hyp_l, hypothesis_gradient: hyp_g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{metric_from_lambda, ChartSpec};
    use std::f64::consts::PI;

    #[test]
    fn z_bar_is_not_holomorphic() {
        let g = ChartGrid::new(ChartSpec::open(-1.0, -1.0, 2.0, 2.0, 33, 33)).unwrap();
        let f: Vec<Complex64> = (0..g.len()).map(|i| g.z(i).conj()).collect();
        let mask = g.interior_mask(4);
        let r = holomorphy_residual(&g, &f, &mask, &Tolerances::default()).unwrap();
        assert!(r.max > 0.1 && r.verdict == Verdict::Fail);
        let h: Vec<Complex64> = (0..g.len()).map(|i| g.z(i) * g.z(i)).collect();
        let r = holomorphy_residual(&g, &h, &mask, &Tolerances::default()).unwrap();
        assert!(r.verdict == Verdict::Pass, "{}", r.max);
    }

    #[test]
    fn small_mask_is_inconclusive() {
        let g = ChartGrid::new(ChartSpec::torus(1.0, 1.0, 16, 16)).unwrap();
        let f = vec![Complex64::new(1.0, 0.0); g.len()];
        let mut mask = vec![false; g.len()];
        mask[3] = true;
        let r = holomorphy_residual(&g, &f, &mask, &Tolerances::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn lemma9_constants() {
        // r = 1 reproduces a_1^+ = √(2(1-K)) when ρ_1 = 1.
        for k in [-2.0, 0.0, 0.5] {
            assert!((lemma9_expected(&[1.0, 1.0], 1, k) - (2.0 * (1.0 - k)).sqrt()).abs() < 1e-14);
        }
        assert!((lemma9_beta(&[1.0, 1.0, 1.0], 3) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(lemma9_exponent(2), Rational64::new(1, 1));
        assert_eq!(lemma9_exponent(4), Rational64::new(1, 1));
        assert_eq!(lemma9_exponent(5), Rational64::new(3, 2));
        assert!(lemma9_consistency(&[1.0], 6) < 1e-12);
        assert!(lemma9_consistency(&[0.4, 0.7], 6) < 1e-12);
    }

    #[test]
    fn lemma9_flags_injected_error() {
        let g = ChartGrid::new(ChartSpec::open(0.0, 0.0, 1.0, 1.0, 16, 16)).unwrap();
        let k: Vec<f64> = (0..g.len()).map(|i| -0.3 - g.coords(i).0).collect();
        let rho = [0.5, 1.0, 1.0];
        let mut a: Vec<Vec<f64>> = (1..=3).map(|r| k.iter().map(|&kv| lemma9_expected(&rho, r, kv)).collect()).collect();
        a[1].iter_mut().for_each(|v| *v *= 1.1);
        let mask = vec![true; g.len()];
        let rep = lemma9_profile(&a, &k, &rho, &mask).unwrap();
        assert!(rep.deviation[0] < 1e-14 && (rep.deviation[1] - 0.1).abs() < 1e-12);
        let flat = vec![0.0; g.len()];
        assert!(matches!(lemma9_profile(&a, &flat, &rho, &mask), Err(Error::Precondition(_))));
    }

    #[test]
    fn flux_counts_zero_order() {
        let g = ChartGrid::new(ChartSpec::open(-1.0, -1.0, 2.0, 2.0, 128, 128)).unwrap();
        let (x0, y0) = (0.1, -0.05);
        for k in 1..=3 {
            let a: Vec<f64> = (0..g.len())
                .map(|i| {
                    let (x, y) = g.coords(i);
                    (x - x0).hypot(y - y0).powi(k) * (0.3 * x.sin() * (2.0 * y).cos()).exp()
                })
                .collect();
            let disk = Disk { x: x0, y: y0, radius: default_disk_radius(&g) };
            let mask = g.interior_mask(4);
            let rep = global_flux(&g, &a, &[disk], &mask).unwrap();
            assert!((rep.n_estimate - k as f64).abs() < 1e-2, "{k}: {}", rep.n_estimate);
        }
    }

    #[test]
    fn flux_rejects_close_zeros_and_handles_constants() {
        let g = ChartGrid::new(ChartSpec::torus(2.0 * PI, 2.0 * PI, 32, 32)).unwrap();
        let a = vec![2.0; g.len()];
        let mask = vec![true; g.len()];
        let rep = global_flux(&g, &a, &[], &mask).unwrap();
        assert_eq!(rep.n_rounded, 0);
        assert!(rep.integral.abs() < 1e-9, "{}", rep.integral);
        let r = default_disk_radius(&g);
        let d = [Disk { x: 1.0, y: 1.0, radius: r }, Disk { x: 1.1, y: 1.0, radius: r }];
        assert!(matches!(global_flux(&g, &a, &d, &mask), Err(Error::Resolution(_))));
    }

    #[test]
    fn liouville_flat_linear_and_constant() {
        let g = ChartGrid::new(ChartSpec::torus(2.0 * PI, 2.0 * PI, 16, 16)).unwrap();
        let metric = metric_from_lambda(&g, vec![1.0; g.len()]).unwrap();
        let mask = vec![true; g.len()];
        let c = vec![0.7; g.len()];
        let rep = liouville_constraint(&g, &c, &Poly(vec![0.0]), &Poly(vec![0.0]), &metric, &mask, &Tolerances::default()).unwrap();
        assert_eq!(rep.evaluated, 0);
    }

    #[test]
    fn liouville_witness_forces_k_minus_eight() {
        let g = ChartGrid::new(ChartSpec::open(0.3, 0.0, 1.0, 1.0, 64, 64)).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| (1.0 - (-2.0 * g.coords(i).0).exp()).sqrt()).collect();
        let lambda: Vec<f64> = f.iter().map(|&v| ((1.0 - v * v) / 2.0).sqrt() / (v * v)).collect();
        let metric = metric_from_lambda(&g, lambda).unwrap();
        let mask = g.interior_mask(8);
        let p = Poly(vec![0.0, -2.0, 0.0, -2.0]);
        let q = Poly(vec![0.0, 0.0, 2.0, 0.0, -2.0]);
        let rep = liouville_constraint(&g, &f, &p, &q, &metric, &mask, &Tolerances::default()).unwrap();
        assert!(rep.stat.max_rel < 1e-6, "{:?}", rep.stat);
        let kmax = (0..g.len()).filter(|&i| mask[i]).map(|i| (metric.k[i] + 8.0).abs()).fold(0.0, f64::max);
        assert!(kmax < 1e-6, "{kmax}");
    }
}
