//! Condition numbers of Case and finite-difference scattering matrices.

use kinwave::model::sgn;
use kinwave::quadrature::VelocityGrid;
use kinwave::scattering::{
    case_smatrix, fd_smatrix, smatrix_diagnostics, InterfaceRates, SMatrixVariant,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Sign pattern of the two material derivatives across the velocity grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RatePattern {
    /// Every rate equals `1 - χ_M - χ_N`.
    Uniform,
    /// `T(v) = 1 - χ_M sgn(v - m_cut) - χ_N sgn(v - n_cut)`.
    Cuts { m_cut: f64, n_cut: f64 },
}

impl RatePattern {
    pub fn rates(&self, grid: &VelocityGrid, chi_m: f64, chi_n: f64) -> Vec<f64> {
        grid.nodes()
            .iter()
            .map(|&v| match *self {
                RatePattern::Uniform => 1.0 - chi_m - chi_n,
                RatePattern::Cuts { m_cut, n_cut } => {
                    1.0 - chi_m * f64::from(sgn(v - m_cut)) - chi_n * f64::from(sgn(v - n_cut))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningStudy {
    pub k_list: Vec<usize>,
    pub dx_list: Vec<f64>,
    pub chi_m: f64,
    pub chi_n: f64,
    pub pattern: RatePattern,
}

impl Default for ConditioningStudy {
    fn default() -> Self {
        Self {
            k_list: (2..=16).collect(),
            dx_list: vec![0.1, 0.05, 0.025],
            chi_m: 0.48,
            chi_n: 0.44,
            // Three distinct rates: both cuts sit inside the velocity range.
            pattern: RatePattern::Cuts {
                m_cut: 0.0,
                n_cut: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningRow {
    pub k: usize,
    pub dx: f64,
    pub variant: SMatrixVariant,
    /// Infinite when the construction failed.
    pub condition: f64,
    pub min_entry: f64,
    pub stochastic_defect: f64,
    pub failed: bool,
    pub reason: String,
}

impl ConditioningStudy {
    pub fn run(&self) -> Result<Vec<ConditioningRow>> {
        let jobs: Vec<(usize, f64, SMatrixVariant)> = self
            .dx_list
            .iter()
            .flat_map(|&dx| {
                self.k_list.iter().flat_map(move |&k| {
                    [SMatrixVariant::Case, SMatrixVariant::Fd].map(|v| (k, dx, v))
                })
            })
            .collect();
        jobs.par_iter()
            .map(|&(k, dx, variant)| self.row(k, dx, variant))
            .collect()
    }

    fn row(&self, k: usize, dx: f64, variant: SMatrixVariant) -> Result<ConditioningRow> {
        let grid = VelocityGrid::gauss_legendre(k)?;
        let rates = InterfaceRates::new(self.pattern.rates(&grid, self.chi_m, self.chi_n))?;
        let built = match variant {
            SMatrixVariant::Case => case_smatrix(&rates, &grid, dx),
            SMatrixVariant::Fd => fd_smatrix(&rates, &grid, dx, self.chi_m + self.chi_n),
        };
        Ok(match built {
            Ok(s) => {
                let d = smatrix_diagnostics(&s, &grid);
                ConditioningRow {
                    k,
                    dx,
                    variant,
                    condition: d.condition_number,
                    min_entry: d.min_entry,
                    stochastic_defect: d.stochastic_defect,
                    failed: false,
                    reason: String::new(),
                }
            }
            Err(e) => ConditioningRow {
                k,
                dx,
                variant,
                condition: f64::INFINITY,
                min_entry: f64::NAN,
                stochastic_defect: f64::NAN,
                failed: true,
                reason: e.to_string(),
            },
        })
    }

    pub fn header(&self) -> String {
        format!(
            "conditioning study\n{}",
            toml::to_string(self).expect("study serializes")
        )
    }
}
