use std::collections::BTreeMap;

use minsurf::cayley::*;
use minsurf::chart::{metric_from_jet, ChartSpec};
use minsurf::gallery::{gallery_surface, S6Type};
use minsurf::jet2::Jet2;
use minsurf::{ChartGrid, JetTable, Tolerances};
use proptest::prelude::*;

// Cayley–Dickson octonions as pairs of quaternions (w, x, y, z).
type Quat = [f64; 4];

fn qmul(a: Quat, b: Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn qconj(a: Quat) -> Quat {
    [a[0], -a[1], -a[2], -a[3]]
}

fn qadd(a: Quat, b: Quat, s: f64) -> Quat {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]]
}

fn omul(x: [f64; 8], y: [f64; 8]) -> [f64; 8] {
    let (a, b) = ([x[0], x[1], x[2], x[3]], [x[4], x[5], x[6], x[7]]);
    let (c, d) = ([y[0], y[1], y[2], y[3]], [y[4], y[5], y[6], y[7]]);
    let left = qadd(qmul(a, c), qmul(qconj(d), b), -1.0);
    let right = qadd(qmul(d, a), qmul(b, qconj(c)), 1.0);
    [left[0], left[1], left[2], left[3], right[0], right[1], right[2], right[3]]
}

fn imag(v: &Vec7) -> [f64; 8] {
    [0.0, v[0], v[1], v[2], v[3], v[4], v[5], v[6]]
}

#[test]
fn table_matches_cayley_dickson_doubling() {
    for i in 0..7 {
        for j in 0..7 {
            let (x, y) = (imag(&basis(i)), imag(&basis(j)));
            let (xy, yx) = (omul(x, y), omul(y, x));
            let half: Vec<f64> = (1..8).map(|k| 0.5 * (xy[k] - yx[k])).collect();
            let c = cross(&basis(i), &basis(j));
            for k in 0..7 {
                assert!((half[k] - c[k]).abs() < 1e-15, "e{} x e{}", i + 1, j + 1);
            }
            let sym = -0.5 * (xy[0] + yx[0]);
            assert_eq!(sym, if i == j { 1.0 } else { 0.0 });
        }
    }
}

fn vec7() -> impl Strategy<Value = Vec7> {
    prop::array::uniform7(-1.0f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cross_identities(x in vec7(), y in vec7(), z in vec7()) {
        let xy = cross(&x, &y);
        let n2 = dot7(&xy, &xy);
        let expected = dot7(&x, &x) * dot7(&y, &y) - dot7(&x, &y).powi(2);
        prop_assert!((n2 - expected).abs() < 1e-12);
        prop_assert!(dot7(&xy, &x).abs() < 1e-12);
        prop_assert!(dot7(&cross(&x, &x), &cross(&x, &x)) < 1e-30);
        let t1 = dot7(&xy, &z);
        let t2 = dot7(&cross(&y, &z), &x);
        let t3 = dot7(&cross(&x, &z), &y);
        prop_assert!((t1 - t2).abs() < 1e-12 && (t1 + t3).abs() < 1e-12);
    }

    #[test]
    fn j_is_orthogonal_complex_structure(x in vec7(), v in vec7()) {
        let nx = dot7(&x, &x).sqrt();
        prop_assume!(nx > 0.1);
        let x: Vec7 = x.map(|c| c / nx);
        let p = dot7(&x, &v);
        let v: Vec7 = std::array::from_fn(|k| v[k] - p * x[k]);
        let jv = almost_complex(&x, &v).unwrap();
        let jjv = almost_complex(&x, &jv).unwrap();
        prop_assert!(dot7(&jv, &v).abs() < 1e-12);
        prop_assert!((dot7(&jv, &jv) - dot7(&v, &v)).abs() < 1e-12);
        for k in 0..7 {
            prop_assert!((jjv[k] + v[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn unit_cross_norm_on_random_vectors() {
    use std::f64::consts::PI;
    let e1 = basis(0);
    for s in 0..1000 {
        let v: Vec7 = std::array::from_fn(|k| ((s * 7 + k) as f64 * 0.37 * PI).sin());
        let c = cross(&e1, &v);
        assert!((dot7(&c, &c) - (dot7(&v, &v) - v[0] * v[0])).abs() < 1e-12);
    }
}

fn gallery_jets(name: &str, res: usize) -> (ChartGrid, JetTable) {
    let s = gallery_surface(name, &BTreeMap::new()).unwrap();
    let grid = ChartGrid::new(s.chart(res)).unwrap();
    let jets = s.jets(&grid, s.jet_order());
    (grid, jets)
}

#[test]
fn gallery_curves_are_typed() {
    let tol = Tolerances::default();
    for (name, expected) in [("geodesic_s2_in_s6", S6Type::IV), ("boruvka_s6", S6Type::I), ("clifford_in_s5_via_s6", S6Type::III)] {
        let (grid, jets) = gallery_jets(name, 64);
        let v = s6_type_classify(&grid, &jets, &tol).unwrap();
        eprintln!(
            "{name}: {:?} ph {:.2e} lin {:?} {:?} {:?} {}",
            v.class, v.pseudoholomorphic.max, v.second_form_linearity, v.pde, v.a_invariants, v.note
        );
        assert_eq!(v.class, S6Class::Type(expected), "{name}");
        assert!(v.pseudoholomorphic.max < 1e-8, "{name}");
        if let Some(lin) = v.second_form_linearity {
            assert!(lin < 1e-8, "{name}: {lin}");
        }
    }
}

#[test]
fn type_iii_a_invariants() {
    let (grid, jets) = gallery_jets("clifford_in_s5_via_s6", 64);
    let v = s6_type_classify(&grid, &jets, &Tolerances::default()).unwrap();
    let a = v.a_invariants.unwrap();
    assert!(a.a1_minus < 1e-6 && a.a2_plus_half < 1e-6 && a.a2_minus_half < 1e-6);
}

#[test]
fn nabla_j_along_gallery_curves() {
    let tol = Tolerances::default();
    for name in ["boruvka_s6", "clifford_in_s5_via_s6", "geodesic_s2_in_s6"] {
        let (grid, jets) = gallery_jets(name, 16);
        let metric = metric_from_jet(&grid, &jets, &tol).unwrap();
        let mut worst: f64 = 0.0;
        for i in (0..grid.len()).step_by(7) {
            let fz = jets.get(i, 1, 0);
            let x: Vec7 = std::array::from_fn(|k| jets.get(i, 0, 0)[k].re);
            let e1: Vec7 = std::array::from_fn(|k| 2.0 * fz[k].re / metric.lambda[i]);
            let e2: Vec7 = std::array::from_fn(|k| -2.0 * fz[k].im / metric.lambda[i]);
            worst = worst.max(nabla_j_residual(&x, &e1, &e2, 1e-4)).max(nabla_j_residual(&x, &e2, &e1, 1e-4));
        }
        assert!(worst < 1e-6, "{name}: {worst}");
    }
}

#[test]
fn non_associative_clifford_is_not_pseudoholomorphic() {
    use std::f64::consts::PI;
    let grid = ChartGrid::new(ChartSpec::torus(2.0 * PI, 2.0 * PI, 32, 32)).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let jets = JetTable::from_fn(&grid, 7, 4, |x: Jet2, y: Jet2| {
        let zero = Jet2::constant(0.0, x.order.into());
        vec![x.cos() * r, x.sin() * r, zero, y.cos() * r, zero, zero, y.sin() * r]
    });
    let tol = Tolerances::default();
    let metric = metric_from_jet(&grid, &jets, &tol).unwrap();
    let ph = pseudoholomorphic_residual(&jets, &metric, &vec![true; grid.len()]).unwrap();
    assert!(ph.max > 0.1, "{}", ph.max);
    let v = s6_type_classify(&grid, &jets, &tol).unwrap();
    assert_eq!(v.class, S6Class::NotPseudoholomorphic);
}

#[test]
fn constant_curvature_type_ii_is_impossible() {
    let grid = ChartGrid::new(ChartSpec::open(-0.5, -0.5, 1.0, 1.0, 64, 64)).unwrap();
    let ks: Vec<f64> = (1..=16).map(|i| i as f64 / 100.0).collect();
    let hits = constant_curvature_type_ii_scan(&grid, &ks, &Tolerances::default()).unwrap();
    assert!(hits.is_empty(), "{hits:?}");
}
