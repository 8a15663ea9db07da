//! End-to-end analysis of a sampled or analytic immersion.

use std::collections::BTreeMap;

use crate::chart::{metric_from_jet, ChartGrid, JetTable, MetricField};
use crate::config::Tolerances;
use crate::error::Result;
use crate::flag::{osculating_flag, smooth_frame_alignment, AlignmentReport, FlagDecomposition, FlagOptions};
use crate::gallery::gallery_surface;
use crate::invariants::{compute_invariants, InvariantField};

#[derive(Debug, Clone)]
pub struct Analysis {
    pub grid: ChartGrid,
    pub n: usize,
    pub m: usize,
    pub jets: JetTable,
    pub metric: MetricField,
    pub flag: FlagDecomposition,
    pub inv: InvariantField,
    /// Generic nodes clear of every boundary band; all statistics use this mask.
    pub mask: Vec<bool>,
    pub alignment: AlignmentReport,
    pub tol: Tolerances,
}

impl Analysis {
    pub fn mask_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&b| b).count() as f64 / self.mask.len() as f64
    }

    /// Per-level constants obtained by averaging a field over the mask.
    pub fn mean(&self, field: &[f64]) -> f64 {
        let (s, c) = field.iter().zip(&self.mask).filter(|(_, &m)| m).fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        s / c.max(1) as f64
    }

    pub fn std_dev(&self, field: &[f64]) -> f64 {
        let mu = self.mean(field);
        let (s, c) = field.iter().zip(&self.mask).filter(|(_, &m)| m).fold((0.0, 0usize), |(s, c), (v, _)| (s + (v - mu).powi(2), c + 1));
        (s / c.max(1) as f64).sqrt()
    }

    pub fn masked_max_abs(&self, field: &[f64]) -> f64 {
        crate::chart::masked_max(field, &self.mask)
    }
}

/// Analysis from an explicit jet table.
pub fn analyze_jets(grid: ChartGrid, jets: JetTable, n: usize, tol: &Tolerances, opts: FlagOptions) -> Result<Analysis> {
    tol.validate()?;
    let metric = metric_from_jet(&grid, &jets, tol)?;
    let mut flag = osculating_flag(&jets, &metric, n, tol, opts)?;
    let alignment = smooth_frame_alignment(&mut flag, &grid, &metric, tol)?;
    let inv = compute_invariants(&flag, &metric, tol)?;
    // Laplacians of invariant fields add one more second-order stencil.
    let band = if jets.exact { grid.boundary_band(2) } else { grid.boundary_band(jets.order) + grid.boundary_band(2) };
    let interior = grid.interior_mask(band);
    let mask: Vec<bool> = (0..grid.len()).map(|i| interior[i] && jets.valid[i] && flag.generic[i]).collect();
    Ok(Analysis { m: flag.m, grid, n, jets, metric, flag, inv, mask, alignment, tol: tol.clone() })
}

/// Analysis of a catalog surface with analytic jets at resolution `res`.
pub fn analyze(name: &str, params: &BTreeMap<String, f64>, res: usize, tol: &Tolerances) -> Result<Analysis> {
    let s = gallery_surface(name, params)?;
    let grid = ChartGrid::new(s.chart(res))?;
    let jets = s.jets(&grid, s.jet_order());
    analyze_jets(grid, jets, s.n, tol, FlagOptions::default())
}

/// Analysis of sampled positions (`node * (n+1) + component`), differentiated on the chart.
pub fn analyze_samples(grid: ChartGrid, samples: &[f64], n: usize, tol: &Tolerances) -> Result<Analysis> {
    let order = (n - 1) / 2 + 2;
    let jets = JetTable::from_samples(&grid, samples, n + 1, order)?;
    analyze_jets(grid, jets, n, tol, FlagOptions::default())
}
