use std::collections::BTreeMap;

use minsurf::analysis::analyze_jets;
use minsurf::classify::{classify_surface, ricci_residual, theorem2_residuals, Verdict};
use minsurf::flag::FlagOptions;
use minsurf::gallery::list;
use minsurf::{analyze, gallery_surface, ChartGrid, Error, Tolerances};

const RES: usize = 64;

#[test]
fn gallery_classifications_match_catalog() {
    let tol = Tolerances::default();
    for (name, _) in list() {
        let s = gallery_surface(name, &BTreeMap::new()).unwrap();
        let an = if s.expected.substantial {
            analyze(name, &BTreeMap::new(), RES, &tol).unwrap()
        } else {
            let grid = ChartGrid::new(s.chart(RES)).unwrap();
            let jets = s.jets(&grid, s.jet_order());
            match analyze_jets(grid, jets, s.n, &tol, FlagOptions { relax_last_rank: true }) {
                Ok(an) => an,
                Err(Error::NotSubstantial { .. }) => continue,
                Err(e) => panic!("{name}: {e}"),
            }
        };
        let c = classify_surface(&an).unwrap();
        eprintln!(
            "{name}: exc {:?} sc {:?} sm {:?} holo {:?} ecc {:?} dis {:?}",
            c.exceptional,
            c.superconformal,
            c.superminimal,
            c.levels.iter().map(|l| l.holomorphy.max).collect::<Vec<_>>(),
            c.levels.iter().map(|l| l.eccentricity_std).collect::<Vec<_>>(),
            c.disagreement
        );
        assert_eq!(c.exceptional, Verdict::from_bool(s.expected.exceptional), "{name}");
        assert_eq!(c.superconformal, Verdict::from_bool(s.expected.superconformal), "{name}");
        assert_eq!(c.superminimal, Verdict::from_bool(s.expected.superminimal), "{name}");
        assert!(c.levels[0].holomorphy.max < 1e-6, "{name}");
        if c.exceptional.passed() {
            let t2 = theorem2_residuals(&an, &c).unwrap();
            for e in &t2.entries {
                eprintln!("   {} r={} {} rel {:.2e} abs {:.2e}", e.eq, e.r, e.sign, e.stat.max_rel, e.stat.max_abs);
            }
            eprintln!("   rho std {:?} mean {:?}", t2.rho_std, t2.rho_mean);
            assert!(t2.worst() < 1e-4, "{name}");
            assert!(t2.rho_std.iter().all(|&s| s < 1e-8), "{name}");
        }
        let ricci = ricci_residual(&an.grid, &an.metric, &an.mask, &tol).unwrap();
        eprintln!("   ricci {:.2e}", ricci.stat.max_rel);
        if c.exceptional.passed() && !c.levels[0].vanishes {
            assert!(ricci.stat.max_rel < 1e-4, "{name}");
        }
    }
}
