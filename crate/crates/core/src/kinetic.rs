//! Phase-space density on a uniform grid and its two explicit steppers:
//! the well-balanced Godunov scheme driven by interface scattering
//! matrices and the upwind/tumbling splitting baseline.
//!
//! Cells `j = 0..n` have centers `x0 + (j + 1/2) dx`; interface `i` sits at
//! `x0 + i dx`, so interfaces `0` and `n` are the walls. Both walls reflect
//! specularly.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::VelocityGrid;
use crate::scattering::SMatrix;

const PAR_MIN: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    /// `n * 2K` values; row `j` is cell `j` in natural velocity order.
    f: Vec<f64>,
    n_cells: usize,
    dx: f64,
    x0: f64,
    grid: Arc<VelocityGrid>,
}

impl KineticState {
    pub fn new(f: Vec<f64>, dx: f64, x0: f64, grid: Arc<VelocityGrid>) -> Result<Self> {
        let width = grid.len();
        if f.is_empty() || f.len() % width != 0 {
            return Err(Error::InvalidGrid(format!(
                "{} values do not form rows of {width}",
                f.len()
            )));
        }
        if !(dx > 0.0) {
            return Err(Error::InvalidGrid(format!("dx must be positive, got {dx}")));
        }
        if let Some(i) = f.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NegativeDensity {
                index: i / width,
                value: f[i],
            });
        }
        Ok(Self {
            n_cells: f.len() / width,
            f,
            dx,
            x0,
            grid,
        })
    }

    /// Isotropic state `f(x, v) = rho(x)`.
    pub fn isotropic(rho: &[f64], dx: f64, x0: f64, grid: Arc<VelocityGrid>) -> Result<Self> {
        let width = grid.len();
        let f = rho
            .iter()
            .flat_map(|&r| std::iter::repeat_n(r, width))
            .collect();
        Self::new(f, dx, x0, grid)
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn cell(&self, j: usize) -> &[f64] {
        let w = self.grid.len();
        &self.f[j * w..(j + 1) * w]
    }

    pub fn cell_center(&self, j: usize) -> f64 {
        self.x0 + (j as f64 + 0.5) * self.dx
    }

    pub fn interface_position(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn density(&self) -> Vec<f64> {
        (0..self.n_cells)
            .map(|j| self.grid.moments(self.cell(j)).0)
            .collect()
    }

    pub fn flux(&self) -> Vec<f64> {
        (0..self.n_cells)
            .map(|j| self.grid.moments(self.cell(j)).1)
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.density().iter().sum::<f64>() * self.dx
    }

    pub fn min_entry(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First negative entry as `(cell, velocity index, value)`.
    pub fn first_negative(&self) -> Option<(usize, usize, f64)> {
        let w = self.grid.len();
        self.f
            .iter()
            .position(|&v| v < 0.0)
            .map(|i| (i / w, i % w, self.f[i]))
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        let bound = cfl_max_dt(&self.grid, self.dx);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::TimeStep {
                dt,
                bound,
                what: "CFL".into(),
            });
        }
        Ok(())
    }

    /// Upwind update toward interface states produced by `scatter`, which
    /// maps interior interface `i` (1..n) and its half-flux input to output.
    fn transport(&self, dt: f64, scatter: impl Fn(usize, &[f64], &mut [f64]) + Sync) -> Self {
        let grid = &*self.grid;
        let k = grid.half_count();
        let w = grid.len();
        let n = self.n_cells;
        // tilde[i] holds the outgoing states of interface i in half-flux order.
        let mut tilde = vec![0.0; (n + 1) * w];
        let f = &self.f;
        let fill = |(i, out): (usize, &mut [f64])| {
            if i == 0 {
                for s in 0..k {
                    out[s] = f[grid.neg(s)];
                }
            } else if i == n {
                let last = (n - 1) * w;
                for s in 0..k {
                    out[k + s] = f[last + grid.pos(s)];
                }
            } else {
                let mut input = [0.0; 64];
                let mut buf;
                let input: &mut [f64] = if w <= 64 {
                    &mut input[..w]
                } else {
                    buf = vec![0.0; w];
                    &mut buf
                };
                let (left, right) = ((i - 1) * w, i * w);
                for s in 0..k {
                    input[s] = f[left + grid.pos(s)];
                    input[k + s] = f[right + grid.neg(s)];
                }
                scatter(i, input, out);
            }
        };
        if parallel(n) {
            tilde.par_chunks_mut(w).enumerate().for_each(fill);
        } else {
            tilde.chunks_mut(w).enumerate().for_each(fill);
        }

        let courant: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|v| v.abs() * dt / self.dx)
            .collect();
        let mut next = vec![0.0; f.len()];
        let update = |(j, row): (usize, &mut [f64])| {
            let old = &f[j * w..(j + 1) * w];
            let from_left = &tilde[j * w..(j + 1) * w];
            let from_right = &tilde[(j + 1) * w..(j + 2) * w];
            for s in 0..k {
                let p = grid.pos(s);
                row[p] = upwind(old[p], courant[p], from_left[s]);
                let m = grid.neg(s);
                row[m] = upwind(old[m], courant[m], from_right[k + s]);
            }
        };
        if parallel(n) {
            next.par_chunks_mut(w).enumerate().for_each(update);
        } else {
            next.chunks_mut(w).enumerate().for_each(update);
        }
        Self {
            f: next,
            n_cells: n,
            dx: self.dx,
            x0: self.x0,
            grid: Arc::clone(&self.grid),
        }
    }

    /// One well-balanced step with one scattering matrix per interior
    /// interface (`smatrices[i - 1]` belongs to interface `i`).
    ///
    /// Negative output entries are left in place; see
    /// [`KineticState::first_negative`].
    pub fn wb_step(&self, smatrices: &[Arc<SMatrix>], dt: f64) -> Result<Self> {
        self.check_dt(dt)?;
        if smatrices.len() != self.n_cells - 1 {
            return Err(Error::InvalidGrid(format!(
                "{} scattering matrices for {} interior interfaces",
                smatrices.len(),
                self.n_cells - 1
            )));
        }
        if let Some(bad) = smatrices.iter().find(|s| s.dim() != self.grid.len()) {
            return Err(Error::InvalidGrid(format!(
                "scattering matrix of size {} for {} velocities",
                bad.dim(),
                self.grid.len()
            )));
        }
        Ok(self.transport(dt, |i, input, out| smatrices[i - 1].apply(input, out)))
    }

    /// Free upwind transport: the well-balanced step with `S = I`.
    pub fn transport_step(&self, dt: f64) -> Result<Self> {
        self.check_dt(dt)?;
        Ok(self.transport(dt, |_, input, out| out.copy_from_slice(input)))
    }

    /// Splitting step: upwind transport, then explicit tumbling with rates
    /// `rates[j * 2K + k]` at cell centers.
    pub fn ts_step(&self, rates: &[f64], dt: f64) -> Result<Self> {
        if rates.len() != self.f.len() {
            return Err(Error::InvalidGrid(format!(
                "{} rates for {} phase-space values",
                rates.len(),
                self.f.len()
            )));
        }
        let t_max = rates.iter().copied().fold(0.0, f64::max);
        if dt * t_max > 1.0 + 1e-12 {
            return Err(Error::TimeStep {
                dt,
                bound: 1.0 / t_max,
                what: "explicit tumbling positivity".into(),
            });
        }
        let mut next = self.transport_step(dt)?;
        let w = self.grid.len();
        let weights = self.grid.weights();
        let tumble = |(row, t): (&mut [f64], &[f64])| {
            let gain: f64 = row
                .iter()
                .zip(t)
                .zip(weights)
                .map(|((f, t), w)| w * t * f)
                .sum();
            for (f, t) in row.iter_mut().zip(t) {
                *f += dt * (gain - t * *f);
            }
        };
        if parallel(self.n_cells) {
            next.f
                .par_chunks_mut(w)
                .zip(rates.par_chunks(w))
                .for_each(tumble);
        } else {
            next.f.chunks_mut(w).zip(rates.chunks(w)).for_each(tumble);
        }
        Ok(next)
    }
}

/// Worth splitting across threads only when more than one is available.
fn parallel(n_cells: usize) -> bool {
    n_cells >= PAR_MIN && rayon::current_num_threads() > 1
}

#[inline]
fn upwind(f: f64, courant: f64, inflow: f64) -> f64 {
    f - courant * (f - inflow)
}

/// Largest stable step `dx / max |v|`.
pub fn cfl_max_dt(grid: &VelocityGrid, dx: f64) -> f64 {
    dx / grid.v_max()
}
