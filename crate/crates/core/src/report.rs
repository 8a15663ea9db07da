//! Serializable summaries of an analysis, shared by the command-line front end.

use serde::Serialize;

use crate::analysis::Analysis;
use crate::chart::ChartSpec;
use crate::invariants::{identity_residuals, IdentityResiduals};
use crate::io::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FieldSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl FieldSummary {
    pub fn of(field: &[f64], mask: &[bool]) -> Self {
        let vals: Vec<f64> = field.iter().zip(mask).filter(|(v, &m)| m && v.is_finite()).map(|(v, _)| *v).collect();
        if vals.is_empty() {
            return Self { min: f64::NAN, max: f64::NAN, mean: f64::NAN };
        }
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max, mean: vals.iter().sum::<f64>() / vals.len() as f64 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub r: usize,
    pub a_plus: FieldSummary,
    pub a_minus: FieldSummary,
    pub rho: FieldSummary,
    pub kperp: FieldSummary,
    pub b2norm: FieldSummary,
    pub hopf_abs: FieldSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema: &'static str,
    pub source: String,
    pub n: usize,
    pub m: usize,
    pub chart: ChartSpec,
    pub mask_fraction: f64,
    pub lambda: FieldSummary,
    pub curvature: FieldSummary,
    pub conformality: f64,
    pub minimality: f64,
    pub levels: Vec<LevelSummary>,
    pub identities: IdentityResiduals,
}

pub fn analysis_report(an: &Analysis, source: &str) -> AnalysisReport {
    let mask = &an.mask;
    let levels = an
        .inv
        .levels
        .iter()
        .map(|lv| LevelSummary {
            r: lv.r,
            a_plus: FieldSummary::of(&lv.a_plus, mask),
            a_minus: FieldSummary::of(&lv.a_minus, mask),
            rho: FieldSummary::of(&lv.rho, mask),
            kperp: FieldSummary::of(&lv.kperp, mask),
            b2norm: FieldSummary::of(&lv.b2norm, mask),
            hopf_abs: FieldSummary::of(&lv.hopf.iter().map(|h| h.norm()).collect::<Vec<_>>(), mask),
        })
        .collect();
    AnalysisReport {
        schema: SCHEMA_VERSION,
        source: source.to_string(),
        n: an.n,
        m: an.m,
        chart: an.grid.spec().clone(),
        mask_fraction: an.mask_fraction(),
        lambda: FieldSummary::of(&an.metric.lambda, mask),
        curvature: FieldSummary::of(&an.metric.k, mask),
        conformality: an.metric.max_conformality(mask),
        minimality: an.metric.max_minimality(mask),
        levels,
        identities: identity_residuals(&an.inv, &an.metric, mask),
    }
}

/// Per-node fields for CSV and heat maps, in a fixed order.
pub fn analysis_fields(an: &Analysis) -> Vec<(String, Vec<f64>)> {
    let mut out = vec![
        ("mask".to_string(), an.mask.iter().map(|&b| f64::from(u8::from(b))).collect()),
        ("lambda".to_string(), an.metric.lambda.clone()),
        ("curvature".to_string(), an.metric.k.clone()),
    ];
    for lv in &an.inv.levels {
        let r = lv.r;
        out.push((format!("a_plus_{r}"), lv.a_plus.clone()));
        out.push((format!("a_minus_{r}"), lv.a_minus.clone()));
        out.push((format!("rho_{r}"), lv.rho.clone()));
        out.push((format!("kperp_{r}"), lv.kperp.clone()));
        out.push((format!("hopf_re_{r}"), lv.hopf.iter().map(|h| h.re).collect()));
        out.push((format!("hopf_im_{r}"), lv.hopf.iter().map(|h| h.im).collect()));
    }
    out
}
