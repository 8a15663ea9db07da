//! Acceptance suite: one PASS/FAIL line per criterion, all at 128x128 with analytic jets.
//! Runs without the libtest harness so the lines always show; exits non-zero on any FAIL.

use std::collections::BTreeMap;
use std::time::Instant;

use minsurf::cayley::{constant_curvature_type_i, constant_curvature_type_ii_scan, s6_type_classify, S6Class};
use minsurf::classify::{classify_surface, global_flux, ricci_residual, theorem2_residuals, Stat, Verdict};
use minsurf::gallery::{S6Type, CATALOG};

use minsurf::invariants::identity_residuals;
use minsurf::polar::{polar_pipeline, procrustes, self_duality_check, SelfDualityReport};
use minsurf::reconstruct::{extract_data, reconstruct};
use minsurf::verify::analyze_catalog_entry;
use minsurf::{analyze, gallery_surface, Analysis, ChartGrid, ChartSpec, Complex64, Error, Tolerances};
use num_rational::Rational64;

const RES: usize = 128;

type Outcome = Result<(bool, String), Error>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn none() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

/// Catalog surfaces that analyze at full rank, or with the last rank relaxed when declared non-substantial.
fn catalog(tol: &Tolerances) -> Result<Vec<(&'static str, Analysis)>, Error> {
    let mut out = Vec::new();
    for &name in CATALOG {
        let s = gallery_surface(name, &none())?;
        match analyze_catalog_entry(&s, RES, tol) {
            Ok(an) => out.push((name, an)),
            Err(Error::NotSubstantial { .. }) if !s.expected.substantial => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn masked<'a>(v: &'a [f64], mask: &'a [bool]) -> impl Iterator<Item = f64> + 'a {
    v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x)
}

fn max_dev(v: &[f64], mask: &[bool], target: f64) -> f64 {
    masked(v, mask).map(|x| (x - target).abs()).fold(0.0, f64::max)
}

fn worst_self_duality(sd: &SelfDualityReport) -> f64 {
    let stats: Vec<&Stat> = sd.ladder.iter().chain([&sd.closing]).chain(sd.laplacian.as_ref()).collect();
    stats.iter().map(|s| s.max_rel).fold(0.0, f64::max)
}

fn a_deviation(a: &Analysis, b: &Analysis) -> f64 {
    let mut worst = 0.0f64;
    for r in 1..=a.m {
        let (la, lb) = (a.inv.level(r), b.inv.level(r));
        for i in (0..a.inv.nodes).filter(|&i| a.mask[i] && b.mask[i]) {
            worst = worst.max((la.a_plus[i] - lb.a_plus[i]).abs()).max((la.a_minus[i] - lb.a_minus[i]).abs());
        }
    }
    worst
}

fn c1_holomorphy(all: &[(&str, Analysis)]) -> Outcome {
    let mut worst = (0.0f64, "");
    for (name, an) in all {
        let c = classify_surface(an)?;
        let h = c.levels[0].holomorphy.max;
        if h >= worst.0 {
            worst = (h, name);
        }
    }
    Ok((worst.0 < 1e-6, format!("{} surfaces, worst {:.2e} ({}) < 1e-6", all.len(), worst.0, worst.1)))
}

fn c2_identities(all: &[(&str, Analysis)]) -> Outcome {
    let mut worst = (0.0f64, "");
    for (name, an) in all {
        let id = identity_residuals(&an.inv, &an.metric, &an.mask);
        let w = id.axis.max(id.norm).max(id.hopf_magnitude).max(id.squared_a).max(id.hopf_direct);
        if w >= worst.0 {
            worst = (w, name);
        }
    }
    Ok((worst.0 < 1e-10, format!("worst relative {:.2e} ({}) < 1e-10", worst.0, worst.1)))
}

fn c3_clifford(tol: &Tolerances) -> Outcome {
    let an = analyze("clifford_s3", &none(), RES, tol)?;
    let k = max_dev(&an.metric.k, &an.mask, 0.0);
    let lv = an.inv.level(1);
    let a = max_dev(&lv.a_plus, &an.mask, 1.0).max(max_dev(&lv.a_minus, &an.mask, 1.0));
    let ricci = ricci_residual(&an.grid, &an.metric, &an.mask, tol)?.stat.max_abs;
    let (polar, _, _) = polar_pipeline(&an)?;
    let all = vec![true; an.inv.nodes];
    let pr = procrustes(&an.jets.positions(), &polar.samples, an.n + 1, &all).max;
    let sd = worst_self_duality(&self_duality_check(&an, &classify_surface(&an)?)?);
    let ok = k < 1e-9 && a < 1e-8 && ricci < 1e-10 && pr < 1e-6 && sd < 1e-8;
    Ok((ok, format!("|K| {k:.1e}, |a1-1| {a:.1e}, ricci {ricci:.1e}, polar procrustes {pr:.1e}, self-duality {sd:.1e}")))
}

fn c4_veronese(tol: &Tolerances) -> Outcome {
    let an = analyze("veronese_s4", &none(), RES, tol)?;
    let class = classify_surface(&an)?;
    let k = max_dev(&an.metric.k, &an.mask, 1.0 / 3.0);
    let a = max_dev(&an.inv.level(1).a_plus, &an.mask, 2.0 / 3f64.sqrt());
    let data = extract_data(&an, &class)?;
    let rec = reconstruct(&data, tol)?;
    let dim = rec.frame.dim;
    let pr = procrustes(&an.jets.positions(), &rec.samples(), dim, &vec![true; an.inv.nodes]).max;
    let ok = class.superminimal == Verdict::Pass && k < 1e-6 && a < 1e-6 && dim == 5 && pr < 1e-6;
    Ok((
        ok,
        format!("superminimal {:?}, |K-1/3| {k:.1e}, |a1+ - 2/sqrt3| {a:.1e}, rebuilt in R^{dim}, procrustes {pr:.1e}", class.superminimal),
    ))
}

fn c5_pde(all: &[(&str, Analysis)]) -> Outcome {
    let (mut res, mut std, mut count) = (0.0f64, 0.0f64, 0);
    for (_, an) in all {
        let c = classify_surface(an)?;
        if !c.exceptional.passed() {
            continue;
        }
        let t2 = theorem2_residuals(an, &c)?;
        count += 1;
        res = res.max(t2.worst());
        std = t2.rho_std.iter().cloned().fold(std, f64::max);
    }
    Ok((res < 1e-4 && std < 1e-8, format!("{count} exceptional surfaces, residual {res:.2e} < 1e-4, rho std {std:.2e} < 1e-8")))
}

fn c6_ricci(all: &[(&str, Analysis)], tol: &Tolerances) -> Outcome {
    let (mut worst, mut count) = (0.0f64, 0);
    for (_, an) in all {
        let c = classify_surface(an)?;
        if !c.exceptional.passed() || c.levels[0].vanishes {
            continue;
        }
        count += 1;
        worst = worst.max(ricci_residual(&an.grid, &an.metric, &an.mask, tol)?.stat.max_abs);
    }
    Ok((count > 0 && worst < 1e-4, format!("{count} surfaces with nonzero Phi_1, worst {worst:.2e} < 1e-4")))
}

fn c7_round_trip(tol: &Tolerances) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for name in ["clifford_s3", "equilateral_torus_s5"] {
        let an = analyze(name, &none(), RES, tol)?;
        let data = extract_data(&an, &classify_surface(&an)?)?;
        let rec = reconstruct(&data, tol)?;
        let back = rec.reanalyze(tol)?;
        let dev = a_deviation(&an, &back);
        let (flat, path) = (rec.flatness, rec.frame.path_dependence);
        ok &= dev < 1e-5 && flat < 1e-7 && path < 1e-6;
        detail.push(format!("{name} a-dev {dev:.1e} flat {flat:.1e} path {path:.1e}"));
    }
    // Phases only matter on a non-round level, so sweep a torus with rho_1 < 1.
    let s = gallery_surface("generalized_clifford_s5", &none())?;
    let grid = ChartGrid::new(ChartSpec::open(0.2, 0.3, 1.0, 1.0, RES, RES))?;
    let jets = s.jets(&grid, s.jet_order());
    let an = minsurf::analysis::analyze_jets(grid, jets, s.n, tol, Default::default())?;
    let base = extract_data(&an, &classify_surface(&an)?)?;
    let mut phase = 0.0f64;
    for step in [0.4, 1.3, -2.1] {
        let mut data = base.clone();
        for (r, t) in data.theta.iter_mut().enumerate().skip(1) {
            *t = step * r as f64;
        }
        let back = reconstruct(&data, tol)?.reanalyze(tol)?;
        for r in 1..=an.m {
            let rot = Complex64::from_polar(1.0, data.theta[r]);
            let (h0, h1) = (&an.inv.level(r).hopf, &back.inv.level(r).hopf);
            let scale = h0.iter().map(|h| h.norm()).fold(1.0, f64::max);
            for i in (0..an.inv.nodes).filter(|&i| an.mask[i] && back.mask[i]) {
                phase = phase.max((h1[i] - rot * h0[i]).norm() / scale);
            }
        }
    }
    ok &= phase < 1e-6;
    detail.push(format!("theta sweep phase {phase:.1e}"));
    Ok((ok, detail.join("; ")))
}

fn c8_s6(tol: &Tolerances) -> Outcome {
    let typed = |name: &str| -> Result<_, Error> {
        let s = gallery_surface(name, &none())?;
        let grid = ChartGrid::new(s.chart(RES))?;
        let jets = s.jets(&grid, s.jet_order());
        s6_type_classify(&grid, &jets, tol)
    };
    let geo = typed("geodesic_s2_in_s6")?;
    let flat = typed("clifford_in_s5_via_s6")?;
    let a = flat.a_invariants.as_ref().map(|a| a.a2_plus_half.max(a.a2_minus_half)).unwrap_or(f64::INFINITY);
    let k1 = constant_curvature_type_i();
    let grid = ChartGrid::new(ChartSpec::open(-0.5, -0.5, 1.0, 1.0, RES, RES))?;
    let ks: Vec<f64> = (1..=16).map(|i| i as f64 / 100.0).collect();
    let hits = constant_curvature_type_ii_scan(&grid, &ks, tol)?;
    let ok = geo.class == S6Class::Type(S6Type::IV)
        && flat.class == S6Class::Type(S6Type::III)
        && a < 1e-6
        && k1 == Rational64::new(1, 6)
        && hits.is_empty();
    Ok((ok, format!("geodesic {:?}, flat {:?} (a2 vs a1/2 {a:.1e}), type-I K = {k1}, type-II hits {hits:?}", geo.class, flat.class)))
}

fn c9_self_duality(tol: &Tolerances) -> Outcome {
    let an = analyze("equilateral_torus_s5", &none(), RES, tol)?;
    let sd = self_duality_check(&an, &classify_surface(&an)?)?;
    let w = worst_self_duality(&sd);
    let (_, polar_an, _) = polar_pipeline(&an)?;
    let (back, _, _) = polar_pipeline(&polar_an)?;
    let inv = procrustes(&an.jets.positions(), &back.samples, an.n + 1, &vec![true; an.inv.nodes]).max;
    Ok((
        sd.verdict == Verdict::Pass && w < 1e-6 && inv < 1e-6,
        format!("verdict {:?}, residual {w:.1e}, polar-of-polar {inv:.1e}", sd.verdict),
    ))
}

fn c10_flux(all: &[(&str, Analysis)]) -> Outcome {
    let grid = ChartGrid::new(ChartSpec::open(-1.0, -1.0, 2.0, 2.0, RES, RES))?;
    let (x0, y0) = (0.1, -0.05);
    let mut ns = Vec::new();
    for k in 1..=3 {
        let a: Vec<f64> = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.coords(i);
                (x - x0).hypot(y - y0).powi(k) * (0.3 * x.sin() * (2.0 * y).cos()).exp()
            })
            .collect();
        let disk = minsurf::classify::Disk { x: x0, y: y0, radius: minsurf::classify::default_disk_radius(&grid) };
        ns.push(global_flux(&grid, &a, &[disk], &grid.interior_mask(4))?.n_estimate);
    }
    let synth = ns.iter().enumerate().map(|(j, n)| (n - (j + 1) as f64).abs()).fold(0.0, f64::max);
    let (mut tori, mut integral) = (Vec::new(), 0.0f64);
    for (name, an) in all {
        let a = &an.inv.level(1).a_plus;
        if !an.grid.is_torus() || masked(a, &an.mask).fold(f64::INFINITY, f64::min) <= 0.0 {
            continue;
        }
        integral = integral.max(global_flux(&an.grid, a, &[], &an.mask)?.integral.abs());
        tori.push(*name);
    }
    let ok = synth < 1e-2 && !tori.is_empty() && integral < 1e-6;
    Ok((ok, format!("synthetic N {ns:.4?} (max error {synth:.1e}); torus integral {integral:.1e} over {tori:?}")))
}

fn main() {
    let tol = Tolerances::default();
    let start = Instant::now();
    let all = match catalog(&tol) {
        Ok(v) => v,
        Err(e) => {
            println!("FAIL catalog analysis: {e}");
            std::process::exit(1);
        }
    };
    let criteria: Vec<Criterion> = vec![
        ("universal Phi_1 holomorphy", Box::new(|| c1_holomorphy(&all))),
        ("pointwise identities", Box::new(|| c2_identities(&all))),
        ("Clifford end-to-end", Box::new(|| c3_clifford(&tol))),
        ("Veronese", Box::new(|| c4_veronese(&tol))),
        ("exceptional-surface PDE residuals", Box::new(|| c5_pde(&all))),
        ("Ricci link", Box::new(|| c6_ricci(&all, &tol))),
        ("reconstruction round trip", Box::new(|| c7_round_trip(&tol))),
        ("S^6 typing", Box::new(|| c8_s6(&tol))),
        ("self-duality", Box::new(|| c9_self_duality(&tol))),
        ("global flux", Box::new(|| c10_flux(&all))),
    ];
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!("{} {:>2} {title}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, i + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {}/{} passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
