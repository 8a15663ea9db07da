//! Model minimal surfaces with closed-form jets.
//!
//! Every entry is written once in [`Jet2`] arithmetic, so jets of any order up
//! to [`jet2::MAX_ORDER`] are exact. Each entry records the classification the
//! analyzer is expected to reproduce.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::chart::{ChartGrid, ChartSpec, JetTable};
use crate::error::{Error, Result};
use crate::jet2::{self, Jet2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum S6Type {
    I,
    II,
    III,
    IV,
}

/// Classification a catalog entry is known to have.
#[derive(Debug, Clone, Serialize)]
pub struct Expected {
    pub exceptional: bool,
    pub superconformal: bool,
    pub superminimal: bool,
    pub flat: bool,
    /// Lies in a lower-dimensional sphere than the declared ambient one.
    pub substantial: bool,
    pub self_dual: Option<bool>,
    pub s6_type: Option<S6Type>,
    pub curvature: Option<f64>,
    pub note: &'static str,
}

#[derive(Debug, Clone)]
enum Kind {
    /// `f = Σ r_k (cos<v_k,p> E_{2k-1} + sin<v_k,p> E_{2k})` with optional phases and
    /// a permutation of the ambient slots.
    FlatTorus {
        dirs: Vec<[f64; 2]>,
        weights: Vec<f64>,
        phases: Vec<f64>,
        slots: Vec<(usize, usize)>,
        signs: Vec<f64>,
    },
    Veronese,
    Boruvka,
    GeodesicS6,
}

#[derive(Debug, Clone)]
pub struct GallerySurface {
    pub name: String,
    pub n: usize,
    pub params: BTreeMap<String, f64>,
    pub expected: Expected,
    chart: ChartSpec,
    kind: Kind,
}

pub const CATALOG: &[&str] = &[
    "clifford_s3",
    "generalized_clifford_s5",
    "generalized_clifford_s7",
    "equilateral_torus_s5",
    "veronese_s4",
    "boruvka_s6",
    "geodesic_s2_in_s6",
    "clifford_in_s5_via_s6",
];

/// Catalog names with a one-line description.
pub fn list() -> Vec<(&'static str, &'static str)> {
    CATALOG.iter().map(|&n| (n, gallery_surface(n, &BTreeMap::new()).map(|s| s.expected.note).unwrap_or(""))).collect()
}

impl GallerySurface {
    /// Index of the last normal bundle, `floor((n-1)/2)`.
    pub fn m(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Jet order the pipeline needs: `m + 2`.
    pub fn jet_order(&self) -> usize {
        self.m() + 2
    }

    pub fn chart(&self, res: usize) -> ChartSpec {
        self.chart.with_resolution(res, res)
    }

    pub fn eval(&self, x: Jet2, y: Jet2) -> Vec<Jet2> {
        match &self.kind {
            Kind::FlatTorus { dirs, weights, phases, slots, signs } => {
                let mut out = vec![Jet2::constant(0.0, x.order as usize); self.n + 1];
                for k in 0..dirs.len() {
                    let t = x * dirs[k][0] + y * dirs[k][1] + phases[k];
                    let r = weights[k].sqrt();
                    out[slots[k].0] = t.cos() * r;
                    out[slots[k].1] = t.sin() * (r * signs[k]);
                }
                out
            }
            Kind::Veronese => veronese(x, y),
            Kind::Boruvka => boruvka(x, y),
            Kind::GeodesicS6 => {
                let u = stereographic(x, y);
                let zero = Jet2::constant(0.0, x.order as usize);
                vec![u[0], u[1], u[2], zero, zero, zero, zero]
            }
        }
    }

    pub fn jets(&self, grid: &ChartGrid, order: usize) -> JetTable {
        JetTable::from_fn(grid, self.n + 1, order, |x, y| self.eval(x, y))
    }

    /// Point value of `f`.
    pub fn point(&self, x: f64, y: f64) -> Vec<f64> {
        let (sx, sy) = Jet2::seeds(x, y, 0);
        self.eval(sx, sy).iter().map(|j| j.value().re).collect()
    }
}

/// Unit sphere through inverse stereographic projection, conformal factor `2/(1+|z|^2)`.
pub fn stereographic(x: Jet2, y: Jet2) -> [Jet2; 3] {
    let d = (x * x + y * y + 1.0).recip();
    [x * d * 2.0, y * d * 2.0, (-(x * x) - y * y + 1.0) * d]
}

fn veronese(x: Jet2, y: Jet2) -> Vec<Jet2> {
    let [u1, u2, u3] = stereographic(x, y);
    let s3 = 3f64.sqrt();
    vec![u1 * u2 * s3, u1 * u3 * s3, u2 * u3 * s3, (u1 * u1 - u2 * u2) * (s3 / 2.0), (u1 * u1 + u2 * u2 - u3 * u3 * 2.0) * 0.5]
}

/// Real degree-3 spherical harmonics `Y_{3,m}`, `m = -3..=3`, on the unit sphere.
pub fn degree3_harmonics(u: [Jet2; 3]) -> [Jet2; 7] {
    let [x, y, z] = u;
    let c3 = 0.25 * (35.0 / (2.0 * PI)).sqrt();
    let c2 = 0.25 * (105.0 / PI).sqrt();
    let c1 = 0.25 * (21.0 / (2.0 * PI)).sqrt();
    let c0 = 0.25 * (7.0 / PI).sqrt();
    let five_z2_1 = z * z * 5.0 - 1.0;
    [
        (x * x * 3.0 - y * y) * y * c3,
        x * y * z * (2.0 * c2),
        y * five_z2_1 * c1,
        (z * z * z * 5.0 - z * 3.0) * c0,
        x * five_z2_1 * c1,
        (x * x - y * y) * z * c2,
        (x * x - y * y * 3.0) * x * c3,
    ]
}

fn boruvka(x: Jet2, y: Jet2) -> Vec<Jet2> {
    let h = degree3_harmonics(stereographic(x, y));
    let s = (4.0 * PI / 7.0).sqrt();
    // slot order e1..e7 = Y0, Y1, Y-1, Y2, Y-2, Y-3, -Y3; this placement is
    // pseudoholomorphic for the octonion convention of module cayley.
    vec![h[3] * s, h[4] * s, h[2] * s, h[5] * s, h[1] * s, h[0] * s, h[6] * (-s)]
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn check_keys(params: &BTreeMap<String, f64>, allowed: &[String]) -> Result<()> {
    for k in params.keys() {
        if !allowed.iter().any(|a| a == k) {
            return Err(Error::Parameter(format!("unknown parameter `{k}`")));
        }
    }
    Ok(())
}

/// Checks the flat-torus minimality relations and returns `λ^2`.
pub fn flat_torus_lambda2(dirs: &[[f64; 2]], weights: &[f64]) -> Result<f64> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w > 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Parameter(format!("circle weights must be positive and sum to 1, got {weights:?}")));
    }
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for (v, w) in dirs.iter().zip(weights) {
        xx += w * v[0] * v[0];
        yy += w * v[1] * v[1];
        xy += w * v[0] * v[1];
    }
    let scale = xx.abs().max(yy.abs()).max(1.0);
    if (xx - yy).abs() > 1e-12 * scale || xy.abs() > 1e-12 * scale {
        return Err(Error::Parameter(format!(
            "Σ r_k^2 v_k v_k^T = [[{xx}, {xy}], [{xy}, {yy}]] is not a multiple of the identity (not conformal)"
        )));
    }
    let l2 = xx;
    for v in dirs {
        let n2 = v[0] * v[0] + v[1] * v[1];
        if (n2 - 2.0 * l2).abs() > 1e-12 * scale {
            return Err(Error::Parameter(format!("|v_k|^2 = {n2} differs from 2 λ^2 = {} (not minimal)", 2.0 * l2)));
        }
    }
    Ok(l2)
}

fn flat_torus(
    name: &str,
    params: &BTreeMap<String, f64>,
    dirs: Vec<[f64; 2]>,
    weights: Vec<f64>,
    chart: ChartSpec,
    expected: Expected,
) -> Result<GallerySurface> {
    let k = dirs.len();
    let mut allowed = Vec::new();
    for i in 1..=k {
        allowed.extend([format!("v{i}x"), format!("v{i}y"), format!("w{i}")]);
    }
    check_keys(params, &allowed)?;
    let dirs: Vec<[f64; 2]> = dirs
        .iter()
        .enumerate()
        .map(|(i, v)| [param(params, &format!("v{}x", i + 1), v[0]), param(params, &format!("v{}y", i + 1), v[1])])
        .collect();
    let weights: Vec<f64> = weights.iter().enumerate().map(|(i, &w)| param(params, &format!("w{}", i + 1), w)).collect();
    let l2 = flat_torus_lambda2(&dirs, &weights)?;
    let mut p = params.clone();
    p.insert("lambda2".into(), l2);
    Ok(GallerySurface {
        name: name.into(),
        n: 2 * k - 1,
        params: p,
        expected,
        chart,
        kind: Kind::FlatTorus {
            dirs,
            weights,
            phases: vec![0.0; k],
            slots: (0..k).map(|i| (2 * i, 2 * i + 1)).collect(),
            signs: vec![1.0; k],
        },
    })
}

fn sphere_chart() -> ChartSpec {
    ChartSpec::open(-0.5, -0.5, 1.0, 1.0, 128, 128)
}

fn equilateral_chart() -> ChartSpec {
    ChartSpec::torus(4.0 * PI, 4.0 * PI / 3f64.sqrt(), 128, 128)
}

fn equilateral_dirs() -> Vec<[f64; 2]> {
    let h = 3f64.sqrt() / 2.0;
    vec![[1.0, 0.0], [0.5, h], [-0.5, h]]
}

/// Instantiates a catalog surface.
pub fn gallery_surface(name: &str, params: &BTreeMap<String, f64>) -> Result<GallerySurface> {
    let torus = ChartSpec::torus(2.0 * PI, 2.0 * PI, 128, 128);
    let flat = |superconformal, self_dual, note| Expected {
        exceptional: true,
        superconformal,
        superminimal: false,
        flat: true,
        substantial: true,
        self_dual,
        s6_type: None,
        curvature: Some(0.0),
        note,
    };
    match name {
        "clifford_s3" => flat_torus(
            name,
            params,
            vec![[1.0, 0.0], [0.0, 1.0]],
            vec![0.5, 0.5],
            torus,
            flat(true, Some(true), "Clifford torus in S^3; superconformal, self-dual, H_3 = 1"),
        ),
        "generalized_clifford_s5" => flat_torus(
            name,
            params,
            vec![[5.0, 0.0], [3.0, 4.0], [-3.0, 4.0]],
            vec![14.0 / 64.0, 25.0 / 64.0, 25.0 / 64.0],
            torus,
            flat(false, None, "flat minimal torus in S^5 with rho_1 < 1; exceptional, not superconformal"),
        ),
        "generalized_clifford_s7" => flat_torus(
            name,
            params,
            vec![[5.0, 0.0], [0.0, 5.0], [3.0, 4.0], [-3.0, 4.0]],
            vec![0.356, 0.244, 0.2, 0.2],
            torus,
            flat(false, None, "flat minimal torus in S^7; exceptional, not superconformal"),
        ),
        "equilateral_torus_s5" => flat_torus(
            name,
            params,
            equilateral_dirs(),
            vec![1.0 / 3.0; 3],
            equilateral_chart(),
            flat(true, Some(true), "equilateral flat torus in S^5; superconformal and self-dual"),
        ),
        "clifford_in_s5_via_s6" => {
            check_keys(params, &[])?;
            let dirs = equilateral_dirs();
            let dirs = vec![dirs[0], [-dirs[1][0], -dirs[1][1]], dirs[2]];
            let weights = vec![1.0 / 3.0; 3];
            let l2 = flat_torus_lambda2(&dirs, &weights)?;
            let mut p = BTreeMap::new();
            p.insert("lambda2".into(), l2);
            Ok(GallerySurface {
                name: name.into(),
                n: 6,
                params: p,
                expected: Expected {
                    exceptional: true,
                    superconformal: true,
                    superminimal: false,
                    flat: true,
                    substantial: false,
                    self_dual: None,
                    s6_type: Some(S6Type::III),
                    curvature: Some(0.0),
                    note: "flat pseudoholomorphic torus in a totally geodesic S^5 of S^6 (type III)",
                },
                chart: equilateral_chart(),
                kind: Kind::FlatTorus {
                    dirs,
                    weights,
                    phases: vec![0.0, 0.0, PI / 2.0],
                    slots: vec![(1, 2), (3, 4), (6, 5)],
                    signs: vec![1.0; 3],
                },
            })
        }
        "veronese_s4" => {
            check_keys(params, &[])?;
            Ok(GallerySurface {
                name: name.into(),
                n: 4,
                params: BTreeMap::new(),
                expected: Expected {
                    exceptional: true,
                    superconformal: true,
                    superminimal: true,
                    flat: false,
                    substantial: true,
                    self_dual: None,
                    s6_type: None,
                    curvature: Some(1.0 / 3.0),
                    note: "Veronese surface in S^4; superminimal with K = 1/3",
                },
                chart: sphere_chart(),
                kind: Kind::Veronese,
            })
        }
        "boruvka_s6" => {
            check_keys(params, &[])?;
            Ok(GallerySurface {
                name: name.into(),
                n: 6,
                params: BTreeMap::new(),
                expected: Expected {
                    exceptional: true,
                    superconformal: true,
                    superminimal: true,
                    flat: false,
                    substantial: true,
                    self_dual: None,
                    s6_type: Some(S6Type::I),
                    curvature: Some(1.0 / 6.0),
                    note: "Boruvka sphere in S^6 (degree-3 harmonics); pseudoholomorphic type I, K = 1/6",
                },
                chart: sphere_chart(),
                kind: Kind::Boruvka,
            })
        }
        "geodesic_s2_in_s6" => {
            check_keys(params, &[])?;
            Ok(GallerySurface {
                name: name.into(),
                n: 6,
                params: BTreeMap::new(),
                expected: Expected {
                    exceptional: true,
                    superconformal: true,
                    superminimal: true,
                    flat: false,
                    substantial: false,
                    self_dual: None,
                    s6_type: Some(S6Type::IV),
                    curvature: Some(1.0),
                    note: "associative great 2-sphere in S^6; totally geodesic (type IV)",
                },
                chart: sphere_chart(),
                kind: Kind::GeodesicS6,
            })
        }
        other => Err(Error::UnknownSurface(other.into())),
    }
}

/// Flat torus from explicit circle data, used by tests and the reconstruction round trip.
pub fn custom_flat_torus(dirs: Vec<[f64; 2]>, weights: Vec<f64>, chart: ChartSpec) -> Result<GallerySurface> {
    let k = dirs.len();
    let l2 = flat_torus_lambda2(&dirs, &weights)?;
    let mut params = BTreeMap::new();
    params.insert("lambda2".into(), l2);
    Ok(GallerySurface {
        name: "custom_flat_torus".into(),
        n: 2 * k - 1,
        params,
        expected: Expected {
            exceptional: true,
            superconformal: false,
            superminimal: false,
            flat: true,
            substantial: true,
            self_dual: None,
            s6_type: None,
            curvature: Some(0.0),
            note: "user-specified flat torus",
        },
        chart,
        kind: Kind::FlatTorus {
            dirs,
            weights,
            phases: vec![0.0; k],
            slots: (0..k).map(|i| (2 * i, 2 * i + 1)).collect(),
            signs: vec![1.0; k],
        },
    })
}

/// Default jet order for a surface, capped at what [`Jet2`] stores.
pub fn default_order(s: &GallerySurface) -> usize {
    s.jet_order().min(jet2::MAX_ORDER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::metric_from_jet;
    use crate::config::Tolerances;

    #[test]
    fn every_entry_is_unit_conformal_and_minimal() {
        for name in CATALOG {
            let s = gallery_surface(name, &BTreeMap::new()).unwrap();
            let grid = ChartGrid::new(s.chart(24)).unwrap();
            let jets = s.jets(&grid, 2);
            for i in 0..grid.len() {
                let r: f64 = jets.position(i).iter().map(|v| v * v).sum();
                assert!((r - 1.0).abs() < 1e-12, "{name}: |f|^2 = {r}");
            }
            let m = metric_from_jet(&grid, &jets, &Tolerances::default()).unwrap();
            assert!(m.max_minimality(&jets.valid) < 1e-10, "{name}: {}", m.max_minimality(&jets.valid));
        }
    }

    #[test]
    fn unknown_name_and_bad_parameters() {
        assert!(matches!(gallery_surface("lawson_xi", &BTreeMap::new()), Err(Error::UnknownSurface(_))));
        let mut p = BTreeMap::new();
        p.insert("w1".to_string(), 0.7);
        p.insert("w2".to_string(), 0.3);
        assert!(matches!(gallery_surface("clifford_s3", &p), Err(Error::Parameter(_))));
        let mut q = BTreeMap::new();
        q.insert("radius".to_string(), 1.0);
        assert!(matches!(gallery_surface("veronese_s4", &q), Err(Error::Parameter(_))));
    }

    #[test]
    fn list_covers_catalog() {
        assert_eq!(list().len(), CATALOG.len());
    }
}
