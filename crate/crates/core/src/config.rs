//! Centralized numerical tolerances.
//!
//! Every gate in the pipeline reads its threshold from [`Tolerances`]; the
//! defaults below are the documented values used by the test suites.

use serde::{Deserialize, Serialize};

use crate::chart::ChartSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative conformality gate |<f_z, f_z>| / |f_z|^2.
    pub conformality: f64,
    /// Absolute floor for the conformal factor lambda.
    pub lambda_floor: f64,
    /// Minimality gate on |Delta f + 2 f|.
    pub minimality: f64,
    /// Singular value ratio declaring a normal direction present.
    pub rank_gate: f64,
    /// Relative gate for ||B_r||^2 computed from the tensor vs from H.
    pub frame_consistency: f64,
    /// Relative gate for the Hopf magnitude identity.
    pub hopf_consistency: f64,
    /// Holomorphy verdict threshold on the normalized d-bar residual.
    pub holomorphy: f64,
    /// Ratio a^-/a^+ below which a Hopf differential counts as vanishing.
    pub vanishing: f64,
    /// Standard deviation gate for constancy of rho_r and eccentricities.
    pub constancy: f64,
    /// Relative gate for PDE residual verdicts.
    pub pde: f64,
    /// Curvature margin: nodes with K >= 1 - delta are excluded.
    pub curvature_margin: f64,
    /// Flatness gate before frame integration.
    pub flatness: f64,
    /// Gate for self-duality and a-invariant equalities.
    pub equality: f64,
    /// Pseudoholomorphicity gate.
    pub pseudoholomorphic: f64,
    /// Minimum fraction of generic nodes for a conclusive holomorphy verdict.
    pub min_mask_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            conformality: 1e-8,
            lambda_floor: 1e-10,
            minimality: 1e-6,
            rank_gate: 1e-7,
            frame_consistency: 1e-8,
            hopf_consistency: 1e-8,
            holomorphy: 1e-6,
            vanishing: 1e-6,
            constancy: 1e-8,
            pde: 1e-4,
            curvature_margin: 1e-6,
            flatness: 1e-5,
            equality: 1e-6,
            pseudoholomorphic: 1e-8,
            min_mask_fraction: 0.25,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.entries() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("tolerance `{name}` must be positive, got {value}")));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("conformality", self.conformality),
            ("lambda_floor", self.lambda_floor),
            ("minimality", self.minimality),
            ("rank_gate", self.rank_gate),
            ("frame_consistency", self.frame_consistency),
            ("hopf_consistency", self.hopf_consistency),
            ("holomorphy", self.holomorphy),
            ("vanishing", self.vanishing),
            ("constancy", self.constancy),
            ("pde", self.pde),
            ("curvature_margin", self.curvature_margin),
            ("flatness", self.flatness),
            ("equality", self.equality),
            ("pseudoholomorphic", self.pseudoholomorphic),
            ("min_mask_fraction", self.min_mask_fraction),
        ]
    }

    /// Sets one tolerance by name, as used by `--tol name=value`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "conformality" => &mut self.conformality,
            "lambda_floor" => &mut self.lambda_floor,
            "minimality" => &mut self.minimality,
            "rank_gate" => &mut self.rank_gate,
            "frame_consistency" => &mut self.frame_consistency,
            "hopf_consistency" => &mut self.hopf_consistency,
            "holomorphy" => &mut self.holomorphy,
            "vanishing" => &mut self.vanishing,
            "constancy" => &mut self.constancy,
            "pde" => &mut self.pde,
            "curvature_margin" => &mut self.curvature_margin,
            "flatness" => &mut self.flatness,
            "equality" => &mut self.equality,
            "pseudoholomorphic" => &mut self.pseudoholomorphic,
            "min_mask_fraction" => &mut self.min_mask_fraction,
            other => return Err(Error::Config(format!("unknown tolerance `{other}`"))),
        };
        *slot = value;
        self.validate()
    }
}

/// Run configuration as read from a JSON file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub chart: Option<ChartSpec>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.tolerances.validate()?;
        if let Some(chart) = &cfg.chart {
            chart.validate()?;
        }
        Ok(cfg)
    }
}
