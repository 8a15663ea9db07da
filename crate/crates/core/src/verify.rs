//! Invariant suite over the whole catalog.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::{analyze_jets, Analysis};
use crate::cayley::{s6_type_classify, S6Class};
use crate::chart::ChartGrid;
use crate::classify::{classify_surface, theorem2_residuals, Verdict};
use crate::config::Tolerances;
use crate::error::Result;
use crate::flag::FlagOptions;
use crate::gallery::{gallery_surface, GallerySurface, CATALOG};
use crate::invariants::identity_residuals;

/// Relative gate for the pointwise identities.
pub const IDENTITY_GATE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub surface: String,
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: Option<String>,
}

impl Check {
    fn below(surface: &str, check: &str, value: f64, threshold: f64) -> Self {
        Self { surface: surface.into(), check: check.into(), value, threshold, passed: value < threshold, detail: None }
    }

    fn flag(surface: &str, check: &str, passed: bool, detail: String) -> Self {
        Self {
            surface: surface.into(),
            check: check.into(),
            value: f64::from(u8::from(!passed)),
            threshold: 1.0,
            passed,
            detail: Some(detail),
        }
    }
}

/// Analysis of a catalog entry; entries living in a smaller sphere get a relaxed last rank.
pub fn analyze_catalog_entry(s: &GallerySurface, res: usize, tol: &Tolerances) -> Result<Analysis> {
    let grid = ChartGrid::new(s.chart(res))?;
    let jets = s.jets(&grid, s.jet_order());
    analyze_jets(grid, jets, s.n, tol, FlagOptions { relax_last_rank: !s.expected.substantial })
}

fn surface_checks(name: &str, res: usize, tol: &Tolerances) -> Result<Vec<Check>> {
    let s = gallery_surface(name, &BTreeMap::new())?;
    let mut out = Vec::new();
    if let Some(expected) = s.expected.s6_type {
        let grid = ChartGrid::new(s.chart(res))?;
        let jets = s.jets(&grid, s.jet_order());
        let v = s6_type_classify(&grid, &jets, tol)?;
        let ok = v.class == S6Class::Type(expected);
        out.push(Check::flag(name, "s6_type", ok, format!("{:?}, expected {expected:?}", v.class)));
    }
    let an = match analyze_catalog_entry(&s, res, tol) {
        Ok(an) => an,
        Err(crate::Error::NotSubstantial { .. }) if !s.expected.substantial => return Ok(out),
        Err(e) => return Err(e),
    };
    let id = identity_residuals(&an.inv, &an.metric, &an.mask);
    let worst = id.axis.max(id.norm).max(id.hopf_magnitude).max(id.squared_a);
    out.push(Check::below(name, "pointwise_identities", worst, IDENTITY_GATE));
    let c = classify_surface(&an)?;
    out.insert(0, Check::below(name, "phi1_holomorphy", c.levels[0].holomorphy.max, tol.holomorphy));
    let e = &s.expected;
    let got = (c.exceptional, c.superconformal, c.superminimal);
    let want = (Verdict::from_bool(e.exceptional), Verdict::from_bool(e.superconformal), Verdict::from_bool(e.superminimal));
    out.push(Check::flag(name, "classification", got == want, format!("{got:?}, expected {want:?}")));
    if c.exceptional.passed() {
        let t2 = theorem2_residuals(&an, &c)?;
        out.push(Check::below(name, "theorem2_residuals", t2.worst(), tol.pde));
        let rho_std = t2.rho_std.iter().cloned().fold(0.0, f64::max);
        out.push(Check::below(name, "rho_constancy", rho_std, tol.constancy));
    }
    Ok(out)
}

/// Runs every check on every catalog surface; failures to analyze become failed checks.
pub fn gallery_suite(res: usize, tol: &Tolerances) -> Vec<Check> {
    CATALOG
        .iter()
        .flat_map(|&name| match surface_checks(name, res, tol) {
            Ok(v) => v,
            Err(e) => vec![Check::flag(name, "analysis", false, e.to_string())],
        })
        .collect()
}
