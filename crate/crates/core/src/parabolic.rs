//! Explicit steppers for `∂_t u = D ∂_xx u - p u + q` on a uniform grid.
//!
//! The L-spline scheme takes `p`, `q` constant on each interval between
//! consecutive nodes (sampled at the interval midpoints) and is exact on
//! the exponential steady states of every interval. The splitting baseline
//! is the plain three-point scheme with `p`, `q` sampled at the nodes.

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Boundary condition at one end of a node array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Zero flux, imposed by mirroring the neighbor.
    Neumann,
    /// Fixed value.
    Dirichlet(f64),
}

/// Where the boundary value sits in the splitting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// The end node lies on the wall.
    OnWall,
    /// The end node lies half a cell inside the wall.
    HalfCell,
}

const SERIES_LIMIT: f64 = 1e-8;

/// Coefficients of one interval: neighbor weight, diagonal weight, source.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Interval {
    off: f64,
    diag: f64,
    src: f64,
}

impl Interval {
    /// Neighbor weight, diagonal weight and source factor for reaction `p`.
    fn weights(p: f64, d: f64, dx: f64) -> (f64, f64, f64) {
        let scale = d / (dx * dx);
        let y2 = p * dx * dx / d;
        if y2 < SERIES_LIMIT {
            (
                scale * (1.0 - y2 / 6.0 + 7.0 * y2 * y2 / 360.0),
                scale * (1.0 + y2 / 3.0 - y2 * y2 / 45.0),
                0.5 - y2 / 24.0 + y2 * y2 / 240.0,
            )
        } else {
            let y = y2.sqrt();
            (
                scale * y / y.sinh(),
                scale * y / y.tanh(),
                (0.5 * y).tanh() / y,
            )
        }
    }
}

fn check_len(u: usize, mid: usize) -> Result<()> {
    if u < 2 || mid + 1 != u {
        return Err(Error::InvalidGrid(format!(
            "{u} nodes need {} interval values, got {mid}",
            u.saturating_sub(1)
        )));
    }
    Ok(())
}

fn intervals(p_mid: &[f64], q_mid: &[f64], d: f64, dx: f64) -> Vec<Interval> {
    // Runs of equal p (constant α, zero density) share their weights.
    let mut last = (f64::NAN, (0.0, 0.0, 0.0));
    p_mid
        .iter()
        .zip(q_mid)
        .map(|(&p, &q)| {
            if p != last.0 {
                last = (p, Interval::weights(p, d, dx));
            }
            let (off, diag, ratio) = last.1;
            Interval {
                off,
                diag,
                src: q * ratio,
            }
        })
        .collect()
}

/// Largest `dt` keeping every diagonal coefficient of the L-spline update
/// nonnegative. A Neumann end counts its only interval twice.
pub fn lspline_max_dt(p_mid: &[f64], d: f64, dx: f64, right: Boundary) -> f64 {
    let zeros = vec![0.0; p_mid.len()];
    let iv = intervals(p_mid, &zeros, d, dx);
    max_dt_of(&iv, right)
}

fn max_dt_of(iv: &[Interval], right: Boundary) -> f64 {
    let m = iv.len() + 1;
    let mut worst: f64 = 2.0 * iv[0].diag;
    for j in 1..m - 1 {
        worst = worst.max(iv[j - 1].diag + iv[j].diag);
    }
    if right == Boundary::Neumann {
        worst = worst.max(2.0 * iv[m - 2].diag);
    }
    1.0 / worst
}

/// L-spline update with its interval coefficients precomputed, for repeated
/// substeps with frozen `p` and `q`.
#[derive(Debug, Clone)]
pub struct LsplineOperator {
    iv: Vec<Interval>,
    right: Boundary,
}

impl LsplineOperator {
    /// `p_mid[i]`, `q_mid[i]` belong to the interval between nodes `i` and
    /// `i + 1`. The left end is always Neumann.
    pub fn new(p_mid: &[f64], q_mid: &[f64], d: f64, dx: f64, right: Boundary) -> Result<Self> {
        check_len(p_mid.len() + 1, q_mid.len())?;
        Ok(Self {
            iv: intervals(p_mid, q_mid, d, dx),
            right,
        })
    }

    /// Signal operator: `p = α`, `q = β ρ`, Neumann at both walls.
    pub fn signal(rho_mid: &[f64], params: &ModelParams, dx: f64) -> Result<Self> {
        let p = vec![params.alpha; rho_mid.len()];
        let q: Vec<f64> = rho_mid.iter().map(|r| params.beta * r).collect();
        Self::new(&p, &q, params.d_m, dx, Boundary::Neumann)
    }

    /// Nutrient operator: `p = γ ρ`, `q = 0`, `N = N_bar` at the right wall.
    pub fn nutrient(rho_mid: &[f64], params: &ModelParams, dx: f64) -> Result<Self> {
        check_nonnegative(rho_mid)?;
        let p: Vec<f64> = rho_mid.iter().map(|r| params.gamma * r).collect();
        let q = vec![0.0; rho_mid.len()];
        Self::new(&p, &q, params.d_n, dx, Boundary::Dirichlet(params.n_bar))
    }

    pub fn nodes(&self) -> usize {
        self.iv.len() + 1
    }

    pub fn max_dt(&self) -> f64 {
        max_dt_of(&self.iv, self.right)
    }

    pub fn step(&self, u: &[f64], dt: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; u.len()];
        self.step_into(u, dt, &mut out)?;
        Ok(out)
    }

    /// `substeps` equal steps covering `dt`.
    pub fn advance(&self, u: &[f64], dt: f64, substeps: usize) -> Result<Vec<f64>> {
        let h = dt / substeps.max(1) as f64;
        let mut a = u.to_vec();
        let mut b = vec![0.0; u.len()];
        for _ in 0..substeps.max(1) {
            self.step_into(&a, h, &mut b)?;
            std::mem::swap(&mut a, &mut b);
        }
        Ok(a)
    }

    fn step_into(&self, u: &[f64], dt: f64, out: &mut [f64]) -> Result<()> {
        let m = self.nodes();
        if u.len() != m || out.len() != m {
            return Err(Error::InvalidGrid(format!(
                "{} values for {m} nodes",
                u.len()
            )));
        }
        let bound = self.max_dt();
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::TimeStep {
                dt,
                bound,
                what: "L-spline positivity".into(),
            });
        }
        let iv = &self.iv;
        let a = iv[0];
        out[0] = u[0] + dt * 2.0 * (a.off * u[1] - a.diag * u[0] + a.src);
        for j in 1..m - 1 {
            let (l, r) = (iv[j - 1], iv[j]);
            out[j] = u[j]
                + dt * (l.off * u[j - 1] + r.off * u[j + 1] - (l.diag + r.diag) * u[j]
                    + l.src
                    + r.src);
        }
        out[m - 1] = match self.right {
            Boundary::Dirichlet(g) => g,
            Boundary::Neumann => {
                let b = iv[m - 2];
                u[m - 1] + dt * 2.0 * (b.off * u[m - 2] - b.diag * u[m - 1] + b.src)
            }
        };
        Ok(())
    }
}

/// One L-spline step. `p_mid[i]`, `q_mid[i]` belong to the interval between
/// nodes `i` and `i + 1`. The left end is always Neumann.
pub fn lspline_step(
    u: &[f64],
    p_mid: &[f64],
    q_mid: &[f64],
    d: f64,
    dt: f64,
    dx: f64,
    right: Boundary,
) -> Result<Vec<f64>> {
    check_len(u.len(), p_mid.len())?;
    LsplineOperator::new(p_mid, q_mid, d, dx, right)?.step(u, dt)
}

/// Signal step: `p = α`, `q = β ρ`, Neumann at both walls.
pub fn lspline_step_signal(
    m: &[f64],
    rho_mid: &[f64],
    params: &ModelParams,
    dt: f64,
    dx: f64,
) -> Result<Vec<f64>> {
    check_len(m.len(), rho_mid.len())?;
    LsplineOperator::signal(rho_mid, params, dx)?.step(m, dt)
}

/// Nutrient step: `p = γ ρ`, `q = 0`, Neumann at the left wall and
/// `N = N_bar` at the right wall.
pub fn lspline_step_nutrient(
    n: &[f64],
    rho_mid: &[f64],
    params: &ModelParams,
    dt: f64,
    dx: f64,
) -> Result<Vec<f64>> {
    check_len(n.len(), rho_mid.len())?;
    LsplineOperator::nutrient(rho_mid, params, dx)?.step(n, dt)
}

pub fn lspline_signal_max_dt(params: &ModelParams, dx: f64, nodes: usize) -> f64 {
    lspline_max_dt(
        &vec![params.alpha; nodes - 1],
        params.d_m,
        dx,
        Boundary::Neumann,
    )
}

pub fn lspline_nutrient_max_dt(rho_mid: &[f64], params: &ModelParams, dx: f64) -> f64 {
    let p: Vec<f64> = rho_mid.iter().map(|r| params.gamma * r.max(0.0)).collect();
    lspline_max_dt(&p, params.d_n, dx, Boundary::Dirichlet(params.n_bar))
}

fn check_nonnegative(rho: &[f64]) -> Result<()> {
    match rho.iter().position(|&r| r < 0.0 || !r.is_finite()) {
        Some(index) => Err(Error::NegativeDensity {
            index,
            value: rho[index],
        }),
        None => Ok(()),
    }
}

/// Linear stability limit of the three-point scheme:
/// `(2D/dx² - max(0, max p)) dt ≤ 1`.
pub fn ts_stability_max_dt(p: &[f64], d: f64, dx: f64) -> f64 {
    let p_max = p.iter().copied().fold(0.0, f64::max);
    let rate = 2.0 * d / (dx * dx) - p_max;
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Largest `dt` keeping every coefficient of the three-point update
/// nonnegative; stricter than [`ts_stability_max_dt`].
pub fn ts_positivity_max_dt(
    p: &[f64],
    d: f64,
    dx: f64,
    right: Boundary,
    placement: Placement,
) -> f64 {
    let p_max = p.iter().copied().fold(0.0, f64::max);
    let walls = match (right, placement) {
        (Boundary::Dirichlet(_), Placement::HalfCell) => 3.0,
        _ => 2.0,
    };
    1.0 / (walls * d / (dx * dx) + p_max)
}

/// One step of `u_j += dt (D Δ_h u_j - p_j u_j + q_j)`. The left end is
/// Neumann. With [`Placement::HalfCell`] the walls lie half a cell outside
/// the end nodes, so the Neumann ghost copies the end node and the Dirichlet
/// ghost is `2g - u`; with [`Placement::OnWall`] the Neumann ghost mirrors
/// the neighbor.
#[allow(clippy::too_many_arguments)]
pub fn ts_step_diffusion(
    u: &[f64],
    p: &[f64],
    q: &[f64],
    d: f64,
    dt: f64,
    dx: f64,
    right: Boundary,
    placement: Placement,
) -> Result<Vec<f64>> {
    let m = u.len();
    if m < 2 || p.len() != m || q.len() != m {
        return Err(Error::InvalidGrid(format!(
            "{m} nodes with {} and {} coefficient values",
            p.len(),
            q.len()
        )));
    }
    let bound = ts_stability_max_dt(p, d, dx);
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::TimeStep {
            dt,
            bound,
            what: "three-point diffusion stability".into(),
        });
    }
    let c = d * dt / (dx * dx);
    let left_ghost = match placement {
        Placement::HalfCell => u[0],
        Placement::OnWall => u[1],
    };
    let right_ghost = match (right, placement) {
        (Boundary::Neumann, Placement::HalfCell) => u[m - 1],
        (Boundary::Neumann, Placement::OnWall) => u[m - 2],
        (Boundary::Dirichlet(g), Placement::HalfCell) => 2.0 * g - u[m - 1],
        (Boundary::Dirichlet(_), Placement::OnWall) => 0.0,
    };
    let mut out = vec![0.0; m];
    for j in 0..m {
        let l = if j == 0 { left_ghost } else { u[j - 1] };
        let r = if j + 1 == m { right_ghost } else { u[j + 1] };
        out[j] = u[j] + c * (l - 2.0 * u[j] + r) - dt * (p[j] * u[j] - q[j]);
    }
    if let (Boundary::Dirichlet(g), Placement::OnWall) = (right, placement) {
        out[m - 1] = g;
    }
    Ok(out)
}

pub fn ts_step_signal(
    m: &[f64],
    rho: &[f64],
    params: &ModelParams,
    dt: f64,
    dx: f64,
    placement: Placement,
) -> Result<Vec<f64>> {
    let p = vec![params.alpha; m.len()];
    let q: Vec<f64> = rho.iter().map(|r| params.beta * r).collect();
    ts_step_diffusion(m, &p, &q, params.d_m, dt, dx, Boundary::Neumann, placement)
}

pub fn ts_step_nutrient(
    n: &[f64],
    rho: &[f64],
    params: &ModelParams,
    dt: f64,
    dx: f64,
    placement: Placement,
) -> Result<Vec<f64>> {
    check_nonnegative(rho)?;
    let p: Vec<f64> = rho.iter().map(|r| params.gamma * r).collect();
    let q = vec![0.0; n.len()];
    ts_step_diffusion(
        n,
        &p,
        &q,
        params.d_n,
        dt,
        dx,
        Boundary::Dirichlet(params.n_bar),
        placement,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams {
            chi_m: 0.48,
            chi_n: 0.44,
            d_m: 0.5,
            d_n: 1.0,
            alpha: 40.0,
            beta: 1.0,
            gamma: 1.0,
            n_bar: 1.0,
        }
    }

    #[test]
    fn exponential_steady_state_is_exact() {
        let p = params();
        let dx = 0.02;
        let r = (p.alpha / p.d_m).sqrt();
        let m: Vec<f64> = (0..51)
            .map(|i| {
                let x = i as f64 * dx;
                0.3 * (r * (x - 1.0)).exp() + 0.7 * (-r * x).exp()
            })
            .collect();
        let rho = vec![0.0; 50];
        let dt = 0.5 * lspline_signal_max_dt(&p, dx, 51);
        let next = lspline_step_signal(&m, &rho, &p, dt, dx).unwrap();
        for j in 1..50 {
            assert!((next[j] - m[j]).abs() < 1e-12, "{j}: {}", next[j] - m[j]);
        }
    }

    #[test]
    fn constant_equilibrium() {
        let p = params();
        let rho = vec![2.5; 20];
        let m = vec![p.beta * 2.5 / p.alpha; 21];
        let dt = 0.9 * lspline_signal_max_dt(&p, 0.05, 21);
        let next = lspline_step_signal(&m, &rho, &p, dt, 0.05).unwrap();
        for (a, b) in next.iter().zip(&m) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rho_nutrient_is_heat_scheme() {
        let p = params();
        let dx = 0.1;
        let n: Vec<f64> = (0..11).map(|i| (i as f64 * 0.3).sin().abs()).collect();
        let dt = 0.004;
        let a = lspline_step_nutrient(&n, &[0.0; 10], &p, dt, dx).unwrap();
        let zeros = vec![0.0; 11];
        let b = ts_step_diffusion(
            &n,
            &zeros,
            &zeros,
            p.d_n,
            dt,
            dx,
            Boundary::Dirichlet(p.n_bar),
            Placement::OnWall,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn steady_nutrient_profile() {
        let p = params();
        let (rho, l, nodes) = (0.8, 1.0, 41);
        let dx = l / (nodes - 1) as f64;
        let k = (p.gamma * rho / p.d_n).sqrt();
        let n: Vec<f64> = (0..nodes)
            .map(|i| p.n_bar * (k * i as f64 * dx).cosh() / (k * l).cosh())
            .collect();
        let rm = vec![rho; nodes - 1];
        let dt = 0.9 * lspline_nutrient_max_dt(&rm, &p, dx);
        let next = lspline_step_nutrient(&n, &rm, &p, dt, dx).unwrap();
        for (a, b) in next.iter().zip(&n) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn small_rate_limit_is_laplacian() {
        // r dx = 1e-4: coefficients differ from the 3-point Laplacian by O(1e-8).
        let d = 1.0;
        let dx = 0.01;
        let alpha = (1e-4 / dx) * (1e-4 / dx) * d;
        let u: Vec<f64> = (0..9).map(|i| ((i * i) as f64).sqrt()).collect();
        let dt = 2e-5;
        let a = lspline_step(&u, &[alpha; 8], &[0.0; 8], d, dt, dx, Boundary::Neumann).unwrap();
        let b = ts_step_diffusion(
            &u,
            &[0.0; 9],
            &[0.0; 9],
            d,
            dt,
            dx,
            Boundary::Neumann,
            Placement::OnWall,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn errors() {
        let p = params();
        assert!(lspline_step_nutrient(&[1.0; 3], &[1.0, -0.1], &p, 1e-4, 0.1).is_err());
        assert!(lspline_step_signal(&[1.0; 3], &[1.0; 2], &p, 1.0, 0.1).is_err());
        let z = [0.0; 3];
        assert!(ts_step_diffusion(
            &[0.0; 3],
            &z,
            &z,
            1.0,
            0.1,
            0.1,
            Boundary::Neumann,
            Placement::HalfCell
        )
        .is_err());
    }

    #[test]
    fn ts_linear_and_equilibrium() {
        let u: Vec<f64> = (0..6).map(|i| 0.2 * i as f64).collect();
        let z = [0.0; 6];
        let next = ts_step_diffusion(
            &u,
            &z,
            &z,
            1.0,
            0.001,
            0.1,
            Boundary::Neumann,
            Placement::OnWall,
        )
        .unwrap();
        for j in 1..5 {
            assert!((next[j] - u[j]).abs() < 1e-15);
        }
        let p = params();
        let rho = [1.5; 6];
        let m = [p.beta * 1.5 / p.alpha; 6];
        let next = ts_step_signal(&m, &rho, &p, 0.001, 0.1, Placement::HalfCell).unwrap();
        for (a, b) in next.iter().zip(&m) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
