//! Travelling waves in the moving frame `z = x - c t`.
//!
//! Under the sign ansatz (signal peaked at `z = 0`, nutrient increasing) the
//! tumbling rate only depends on the side of `z = 0` and on the sign of
//! `v - c`. The stationary kinetic problem then decouples from the chemicals,
//! and a speed `c` is admissible when the signal it produces peaks at `z = 0`,
//! i.e. when `Υ(c) = M̃'(0)` vanishes.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::{solve_tridiagonal, BandMatrix};
use crate::error::{Error, Result};
use crate::kinetic::KineticState;
use crate::model::{ChemFields, Location, ModelParams};
use crate::quadrature::VelocityGrid;
use crate::scattering::bisect_increasing;

/// Side of the peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Tumbling rates in the four quadrants of the `(z, v - c)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrantRates {
    pub chi_m: f64,
    pub chi_n: f64,
}

fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl QuadrantRates {
    pub fn new(chi_m: f64, chi_n: f64) -> Self {
        Self { chi_m, chi_n }
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Self::new(p.chi_m, p.chi_n)
    }

    /// `z > 0`: signal decreasing, nutrient increasing.
    pub fn right(&self, u: f64) -> f64 {
        1.0 + (self.chi_m - self.chi_n) * sign(u)
    }

    /// `z < 0`: both increasing.
    pub fn left(&self, u: f64) -> f64 {
        1.0 - (self.chi_m + self.chi_n) * sign(u)
    }

    pub fn rate(&self, side: Side, u: f64) -> f64 {
        match side {
            Side::Left => self.left(u),
            Side::Right => self.right(u),
        }
    }
}

/// `Σ ω (v - c) / T(v - c)`: continuous and strictly decreasing in `c`.
fn drift(grid: &VelocityGrid, c: f64, t: impl Fn(f64) -> f64) -> f64 {
    grid.nodes()
        .iter()
        .zip(grid.weights())
        .map(|(&v, &w)| {
            let u = v - c;
            w * u / t(u)
        })
        .sum()
}

/// Bracket of admissible speeds `(c_*, c^*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalSpeeds {
    pub lower: f64,
    pub upper: f64,
}

impl CriticalSpeeds {
    pub fn contains(&self, c: f64) -> bool {
        self.lower < c && c < self.upper
    }
}

pub fn critical_speeds(grid: &VelocityGrid, chi_m: f64, chi_n: f64) -> Result<CriticalSpeeds> {
    if chi_m + chi_n >= 1.0 || chi_m < 0.0 || chi_n < 0.0 {
        return Err(Error::InvalidParams(format!(
            "need 0 <= chi and chi_M + chi_N < 1, got {chi_m} + {chi_n}"
        )));
    }
    let q = QuadrantRates::new(chi_m, chi_n);
    let (lo, hi) = (-grid.v_max(), grid.v_max());
    let solve = |t: &dyn Fn(f64) -> f64, what: &str| -> Result<f64> {
        let f = |c: f64| drift(grid, c, t);
        if !(f(lo) > 0.0 && f(hi) < 0.0) {
            return Err(Error::NoSignChange {
                lo,
                hi,
                what: what.into(),
            });
        }
        bisect_increasing(|c| -f(c), lo, hi)
    };
    Ok(CriticalSpeeds {
        lower: solve(&|u| q.right(u), "c_* (right-side rates)")?,
        upper: solve(&|u| q.left(u), "c^* (left-side rates)")?,
    })
}

/// Exponential decay `e^{λ_- z} F_-` as `z → -∞` and `e^{-λ_+ z} F_+` as
/// `z → +∞`; `F_±` are in natural velocity order.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayRates {
    pub lambda_minus: f64,
    pub f_minus: Vec<f64>,
    pub lambda_plus: f64,
    pub f_plus: Vec<f64>,
}

pub fn decay_rates(c: f64, grid: &VelocityGrid, rates: &QuadrantRates) -> Result<DecayRates> {
    let v = grid.nodes();
    let w = grid.weights();
    if v.iter().any(|&x| x == c) {
        return Err(Error::InvalidParams(format!(
            "c = {c} coincides with a velocity"
        )));
    }
    // Right: Σ ω u / (T_+ - λ u) increases up to the first pole of u > 0.
    let pole_plus = v
        .iter()
        .map(|&x| x - c)
        .filter(|&u| u > 0.0)
        .map(|u| rates.right(u) / u)
        .fold(f64::INFINITY, f64::min);
    let h_plus = |l: f64| -> f64 {
        v.iter()
            .zip(w)
            .map(|(&x, &wk)| {
                let u = x - c;
                wk * u / (rates.right(u) - l * u)
            })
            .sum()
    };
    if !pole_plus.is_finite() || !(h_plus(0.0) < 0.0) {
        return Err(Error::NoSignChange {
            lo: 0.0,
            hi: pole_plus,
            what: format!("no right decay rate at c = {c} (need c > c_*)"),
        });
    }
    let lambda_plus = bisect_increasing(h_plus, 0.0, pole_plus)?;

    // Left: Σ ω u / (T_- + λ u) decreases up to the first pole of u < 0.
    let pole_minus = v
        .iter()
        .map(|&x| x - c)
        .filter(|&u| u < 0.0)
        .map(|u| rates.left(u) / -u)
        .fold(f64::INFINITY, f64::min);
    let h_minus = |l: f64| -> f64 {
        v.iter()
            .zip(w)
            .map(|(&x, &wk)| {
                let u = x - c;
                wk * u / (rates.left(u) + l * u)
            })
            .sum()
    };
    if !pole_minus.is_finite() || !(h_minus(0.0) > 0.0) {
        return Err(Error::NoSignChange {
            lo: 0.0,
            hi: pole_minus,
            what: format!("no left decay rate at c = {c} (need c < c^*)"),
        });
    }
    let lambda_minus = bisect_increasing(|l| -h_minus(l), 0.0, pole_minus)?;

    let f_plus = v
        .iter()
        .map(|&x| {
            let u = x - c;
            1.0 / (rates.right(u) - lambda_plus * u)
        })
        .collect();
    let f_minus = v
        .iter()
        .map(|&x| {
            let u = x - c;
            1.0 / (rates.left(u) + lambda_minus * u)
        })
        .collect();
    Ok(DecayRates {
        lambda_minus,
        f_minus,
        lambda_plus,
        f_plus,
    })
}

/// Discretization of the advection term in the moving-frame signal equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advection {
    #[default]
    Centered,
    Upwind,
}

/// Resolution of the moving-frame problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveOptions {
    /// Requested step; refined automatically when some `|v - c|` is small.
    pub dz: f64,
    /// Fixed half-length; `None` picks `max(l_z_min, 12 / min λ_±)`.
    pub l_z: Option<f64>,
    pub l_z_min: f64,
    pub l_z_max: f64,
    /// Total mass `Σ ρ dz` of the profile.
    pub mass: f64,
    pub advection: Advection,
    /// Upper limit on the number of unknowns of the kinetic system.
    pub max_unknowns: usize,
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self {
            dz: 0.01,
            l_z: None,
            l_z_min: 15.0,
            l_z_max: 400.0,
            mass: 1.0,
            advection: Advection::Centered,
            max_unknowns: 2_000_000,
        }
    }
}

impl WaveOptions {
    pub fn half_length(&self, decay: &DecayRates) -> f64 {
        self.l_z.unwrap_or_else(|| {
            let lmin = decay.lambda_minus.min(decay.lambda_plus);
            (12.0 / lmin).max(self.l_z_min).min(self.l_z_max)
        })
    }
}

/// Stationary density in the moving frame on `z_i = (i - m) dz`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProfile {
    pub c: f64,
    pub dz: f64,
    /// Index of `z = 0`.
    pub center: usize,
    /// `(2m + 1) * 2K` values, node-major, natural velocity order.
    pub f: Vec<f64>,
    pub rho: Vec<f64>,
}

impl StationaryProfile {
    pub fn z(&self, i: usize) -> f64 {
        (i as f64 - self.center as f64) * self.dz
    }

    pub fn half_length(&self) -> f64 {
        self.center as f64 * self.dz
    }

    /// Largest end value of `ρ` relative to its maximum.
    pub fn tail_ratio(&self) -> f64 {
        let max = self.rho.iter().copied().fold(0.0, f64::max);
        self.rho[0].max(self.rho[self.rho.len() - 1]) / max
    }
}

/// Solves `(v - c) ∂_z f = Σ ω T f - T f` on `[-L, L]` with quadrant rates,
/// zero inflow at both ends and `Σ ρ dz = mass`.
///
/// Each interval uses the trapezoidal rule for the collision term. The
/// inflow condition of the fastest right-moving velocity at the left end is
/// replaced by a normalization, which removes the near-null direction of the
/// truncated problem; the dropped condition is exponentially small anyway.
/// `dz` is reduced to `min |v - c| / max T` when needed to keep the
/// trapezoidal update free of sign oscillations.
pub fn stationary_profile(
    c: f64,
    grid: &VelocityGrid,
    params: &ModelParams,
    l_z: f64,
    dz: f64,
    mass: f64,
) -> Result<StationaryProfile> {
    stationary_profile_with_limit(
        c,
        grid,
        params,
        l_z,
        dz,
        mass,
        WaveOptions::default().max_unknowns,
    )
}

fn stationary_profile_with_limit(
    c: f64,
    grid: &VelocityGrid,
    params: &ModelParams,
    l_z: f64,
    dz: f64,
    mass: f64,
    max_unknowns: usize,
) -> Result<StationaryProfile> {
    let crit = critical_speeds(grid, params.chi_m, params.chi_n)?;
    if !crit.contains(c) {
        return Err(Error::InadmissibleSpeed {
            c,
            lo: crit.lower,
            hi: crit.upper,
        });
    }
    let q = QuadrantRates::from_params(params);
    let v = grid.nodes();
    let wts = grid.weights();
    let w = grid.len();
    let u: Vec<f64> = v.iter().map(|x| x - c).collect();
    if u.iter().any(|&x| x == 0.0) {
        return Err(Error::InvalidParams(format!(
            "c = {c} coincides with a velocity"
        )));
    }
    if !(l_z > 0.0 && dz > 0.0 && mass > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need positive L_z, dz and mass (got {l_z}, {dz}, {mass})"
        )));
    }
    let u_min = u.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
    let t_max = 1.0 + params.chi_m + params.chi_n;
    let dz_target = dz.min(u_min / t_max);
    let m = (l_z / dz_target).ceil().max(1.0) as usize;
    let dz = l_z / m as f64;
    let nodes = 2 * m + 1;
    let unknowns = nodes * w;
    if unknowns > max_unknowns {
        return Err(Error::InvalidParams(format!(
            "stationary problem needs {unknowns} unknowns (limit {max_unknowns}); |v - c| = {u_min:.2e} forces dz = {dz:.2e}"
        )));
    }

    let t_left: Vec<f64> = u.iter().map(|&x| q.left(x)).collect();
    let t_right: Vec<f64> = u.iter().map(|&x| q.right(x)).collect();
    let fastest = (0..w)
        .filter(|&k| u[k] > 0.0)
        .max_by(|&a, &b| u[a].total_cmp(&u[b]))
        .ok_or_else(|| Error::InvalidParams(format!("no velocity exceeds c = {c}")))?;

    let band = 2 * w;
    let mut a = BandMatrix::zeros(unknowns, band, band);
    let mut rhs = vec![0.0; unknowns];
    let mut row = 0;
    for k in (0..w).filter(|&k| u[k] > 0.0 && k != fastest) {
        a.add(row, k, 1.0);
        row += 1;
    }
    let h = 0.5 * dz;
    for i in 0..2 * m {
        if i == m {
            a.add(row, m * w + fastest, 1.0);
            rhs[row] = 1.0;
            row += 1;
        }
        let t = if i >= m { &t_right } else { &t_left };
        for k in 0..w {
            a.add(row, (i + 1) * w + k, u[k]);
            a.add(row, i * w + k, -u[k]);
            for node in [i, i + 1] {
                for l in 0..w {
                    a.add(row, node * w + l, -h * wts[l] * t[l]);
                }
                a.add(row, node * w + k, h * t[k]);
            }
            row += 1;
        }
    }
    for k in (0..w).filter(|&k| u[k] < 0.0) {
        a.add(row, 2 * m * w + k, 1.0);
        row += 1;
    }
    debug_assert_eq!(row, unknowns);

    let mut f = a.factor()?.solve(&rhs);
    let mut rho: Vec<f64> = f.chunks(w).map(|x| grid.moments(x).0).collect();
    let total: f64 = rho.iter().sum::<f64>() * dz;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Singular(format!(
            "stationary problem at c = {c} produced total mass {total}"
        )));
    }
    let scale = mass / total;
    f.iter_mut().for_each(|x| *x *= scale);
    rho.iter_mut().for_each(|x| *x *= scale);
    let peak = rho.iter().copied().fold(0.0, f64::max);
    if let Some((i, &r)) = rho
        .iter()
        .enumerate()
        .find(|(_, &r)| r < -1e-10 * peak.max(1.0))
    {
        return Err(Error::NegativeProfile {
            value: r,
            z: (i as f64 - m as f64) * dz,
        });
    }
    Ok(StationaryProfile {
        c,
        dz,
        center: m,
        f,
        rho,
    })
}

/// Solves `-c M' - D_M M'' + α M = β ρ` with homogeneous Neumann ends.
pub fn elliptic_signal(
    rho: &[f64],
    c: f64,
    params: &ModelParams,
    dz: f64,
    advection: Advection,
) -> Result<Vec<f64>> {
    let n = rho.len();
    if n < 3 {
        return Err(Error::InvalidGrid(format!("{n} nodes are too few")));
    }
    let d = params.d_m / (dz * dz);
    // -c M' discretized as a[j] M_{j-1} + b[j] M_j + e[j] M_{j+1}
    let (adv_lo, adv_mid, adv_up) = match advection {
        Advection::Centered => (c / (2.0 * dz), 0.0, -c / (2.0 * dz)),
        Advection::Upwind if c >= 0.0 => (0.0, c / dz, -c / dz),
        Advection::Upwind => (c / dz, -c / dz, 0.0),
    };
    let mut lower = vec![-d + adv_lo; n];
    let mut diag = vec![2.0 * d + params.alpha + adv_mid; n];
    let mut upper = vec![-d + adv_up; n];
    // mirror ghosts: M_{-1} = M_1, M_n = M_{n-2}
    upper[0] += lower[0];
    lower[0] = 0.0;
    lower[n - 1] += upper[n - 1];
    upper[n - 1] = 0.0;
    if advection == Advection::Upwind {
        // one-sided advection at a mirrored end still sees zero slope
        diag[0] = 2.0 * d + params.alpha;
        upper[0] = -2.0 * d;
        diag[n - 1] = 2.0 * d + params.alpha;
        lower[n - 1] = -2.0 * d;
    }
    let rhs: Vec<f64> = rho.iter().map(|r| params.beta * r).collect();
    solve_tridiagonal(&lower, &diag, &upper, &rhs)
}

/// Solves `-c N' - D_N N'' + γ ρ N = 0` with `N = 0` at the left end and
/// `N = N_bar` at the right end.
pub fn stationary_nutrient(rho: &[f64], c: f64, params: &ModelParams, dz: f64) -> Result<Vec<f64>> {
    let n = rho.len();
    if n < 3 {
        return Err(Error::InvalidGrid(format!("{n} nodes are too few")));
    }
    if let Some(i) = rho.iter().position(|&r| r < 0.0) {
        return Err(Error::NegativeDensity {
            index: i,
            value: rho[i],
        });
    }
    let d = params.d_n / (dz * dz);
    let mut lower = vec![-d + c / (2.0 * dz); n];
    let mut diag: Vec<f64> = rho.iter().map(|r| 2.0 * d + params.gamma * r).collect();
    let mut upper = vec![-d - c / (2.0 * dz); n];
    let mut rhs = vec![0.0; n];
    lower[0] = 0.0;
    upper[0] = 0.0;
    diag[0] = 1.0;
    lower[n - 1] = 0.0;
    upper[n - 1] = 0.0;
    diag[n - 1] = 1.0;
    rhs[n - 1] = params.n_bar;
    solve_tridiagonal(&lower, &diag, &upper, &rhs)
}

/// A stationary profile together with its chemical fields.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub profile: StationaryProfile,
    pub m_tilde: Vec<f64>,
    pub n: Vec<f64>,
    pub decay: DecayRates,
}

impl WaveProfile {
    pub fn compute(
        c: f64,
        grid: &VelocityGrid,
        params: &ModelParams,
        opts: &WaveOptions,
    ) -> Result<Self> {
        let decay = decay_rates(c, grid, &QuadrantRates::from_params(params))?;
        let l_z = opts.half_length(&decay);
        let profile = stationary_profile_with_limit(
            c,
            grid,
            params,
            l_z,
            opts.dz,
            opts.mass,
            opts.max_unknowns,
        )?;
        let m_tilde = elliptic_signal(&profile.rho, c, params, profile.dz, opts.advection)?;
        let rho_clipped: Vec<f64> = profile.rho.iter().map(|r| r.max(0.0)).collect();
        let n = stationary_nutrient(&rho_clipped, c, params, profile.dz)?;
        Ok(Self {
            profile,
            m_tilde,
            n,
            decay,
        })
    }

    pub fn c(&self) -> f64 {
        self.profile.c
    }

    /// `M̃'(0)` by a centered difference.
    pub fn upsilon(&self) -> f64 {
        let m = self.profile.center;
        (self.m_tilde[m + 1] - self.m_tilde[m - 1]) / (2.0 * self.profile.dz)
    }
}

/// `Υ(c)`; only the signal is solved for.
pub fn upsilon(
    c: f64,
    grid: &VelocityGrid,
    params: &ModelParams,
    opts: &WaveOptions,
) -> Result<f64> {
    Ok(upsilon_sample(c, grid, params, opts)?.0)
}

/// `Υ(c)` with the tail ratio of the underlying profile.
fn upsilon_sample(
    c: f64,
    grid: &VelocityGrid,
    params: &ModelParams,
    opts: &WaveOptions,
) -> Result<(f64, f64)> {
    let decay = decay_rates(c, grid, &QuadrantRates::from_params(params))?;
    let l_z = opts.half_length(&decay);
    let p =
        stationary_profile_with_limit(c, grid, params, l_z, opts.dz, opts.mass, opts.max_unknowns)?;
    let m = elliptic_signal(&p.rho, c, params, p.dz, opts.advection)?;
    let i = p.center;
    Ok(((m[i + 1] - m[i - 1]) / (2.0 * p.dz), p.tail_ratio()))
}

/// Status of one scan sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleStatus {
    Ok,
    /// The profile still carries mass at the truncated ends.
    Truncated,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSample {
    pub c: f64,
    pub upsilon: f64,
    pub status: SampleStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveRoot {
    pub c: f64,
    /// Final bracket.
    pub lo: f64,
    pub hi: f64,
    pub upsilon: f64,
}

/// Discontinuity of `Υ` at a velocity node, measured across the guard band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpsilonJump {
    pub at: f64,
    pub left: f64,
    pub right: f64,
}

impl UpsilonJump {
    pub fn size(&self) -> f64 {
        self.right - self.left
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveSpeedScan {
    pub critical: CriticalSpeeds,
    pub samples: Vec<ScanSample>,
    pub roots: Vec<WaveRoot>,
    pub jumps: Vec<UpsilonJump>,
}

pub const SCAN_GUARD: f64 = 1e-3;
const TAIL_LIMIT: f64 = 1e-4;

/// Scans `Υ` on `(max(0, c_*), c^*)`, skipping a guard band around every
/// velocity, and refines each sign change by bisection.
pub fn find_wave_speeds(
    grid: &VelocityGrid,
    params: &ModelParams,
    scan_points: usize,
    opts: &WaveOptions,
) -> Result<WaveSpeedScan> {
    if scan_points < 2 {
        return Err(Error::InvalidParams(
            "scan needs at least two points".into(),
        ));
    }
    let critical = critical_speeds(grid, params.chi_m, params.chi_n)?;
    let lo = critical.lower.max(0.0);
    let hi = critical.upper;
    let step = (hi - lo) / (scan_points + 1) as f64;
    let near_node = |c: f64| grid.nodes().iter().any(|&v| (c - v).abs() < SCAN_GUARD);
    let cs: Vec<f64> = (1..=scan_points)
        .map(|i| lo + i as f64 * step)
        .filter(|&c| !near_node(c))
        .collect();
    let eval = |c: f64| -> ScanSample {
        match upsilon_sample(c, grid, params, opts) {
            Ok((u, tail)) => ScanSample {
                c,
                upsilon: u,
                status: if tail > TAIL_LIMIT {
                    SampleStatus::Truncated
                } else {
                    SampleStatus::Ok
                },
            },
            Err(e) => ScanSample {
                c,
                upsilon: f64::NAN,
                status: SampleStatus::Failed(e.to_string()),
            },
        }
    };
    let samples: Vec<ScanSample> = cs.par_iter().map(|&c| eval(c)).collect();

    let nodes_between = |a: f64, b: f64| grid.nodes().iter().any(|&v| a < v && v < b);
    let brackets: Vec<(ScanSample, ScanSample)> = samples
        .windows(2)
        .filter(|p| {
            p[0].status == SampleStatus::Ok
                && p[1].status == SampleStatus::Ok
                && !nodes_between(p[0].c, p[1].c)
                && p[0].upsilon.signum() != p[1].upsilon.signum()
        })
        .map(|p| (p[0].clone(), p[1].clone()))
        .collect();
    let refined: Vec<Result<Option<WaveRoot>>> = brackets
        .par_iter()
        .map(|(a, b)| refine_root(a, b, grid, params, opts))
        .collect();
    let mut roots = Vec::new();
    for r in refined {
        if let Some(root) = r? {
            roots.push(root);
        }
    }

    let jumps = grid
        .nodes()
        .par_iter()
        .filter(|&&v| lo + SCAN_GUARD < v && v < hi - SCAN_GUARD)
        .filter_map(|&v| {
            let left = upsilon(v - SCAN_GUARD, grid, params, opts).ok()?;
            let right = upsilon(v + SCAN_GUARD, grid, params, opts).ok()?;
            Some(UpsilonJump { at: v, left, right })
        })
        .collect();

    Ok(WaveSpeedScan {
        critical,
        samples,
        roots,
        jumps,
    })
}

/// Bisects a sign change of `Υ`; returns `None` for a discontinuity.
fn refine_root(
    a: &ScanSample,
    b: &ScanSample,
    grid: &VelocityGrid,
    params: &ModelParams,
    opts: &WaveOptions,
) -> Result<Option<WaveRoot>> {
    let (mut lo, mut hi) = (a.c, b.c);
    let (mut ulo, mut uhi) = (a.upsilon, b.upsilon);
    let initial = ulo.abs().min(uhi.abs());
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        let um = upsilon(mid, grid, params, opts)?;
        if um.abs() <= 1e-8 {
            return Ok(Some(WaveRoot {
                c: mid,
                lo,
                hi,
                upsilon: um,
            }));
        }
        if um.signum() == ulo.signum() {
            lo = mid;
            ulo = um;
        } else {
            hi = mid;
            uhi = um;
        }
    }
    // A true root leaves |Υ| shrinking with the bracket; a jump does not.
    if ulo.abs().min(uhi.abs()) > 0.1 * initial && ulo.abs().min(uhi.abs()) > 1e-8 {
        return Ok(None);
    }
    let c = lo - ulo * (hi - lo) / (uhi - ulo);
    Ok(Some(WaveRoot {
        c,
        lo,
        hi,
        upsilon: if ulo.abs() < uhi.abs() { ulo } else { uhi },
    }))
}

/// Piecewise-linear interpolation of samples at `z0 + i dz`; `None` outside.
fn interp(values: &[f64], z0: f64, dz: f64, z: f64) -> Option<f64> {
    let s = (z - z0) / dz;
    if s < 0.0 || s > (values.len() - 1) as f64 {
        return None;
    }
    let i = (s.floor() as usize).min(values.len() - 2);
    let t = s - i as f64;
    Some((1.0 - t) * values[i] + t * values[i + 1])
}

/// Lab-frame geometry for [`wave_initial_data`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabGrid {
    pub x0: f64,
    pub dx: f64,
    pub n_cells: usize,
}

/// Places a wave profile on the simulation grid with its peak at
/// `peak_position`. Fields are sampled at `location`; their previous-step
/// values are the profile shifted by `c dt`.
pub fn wave_initial_data(
    wave: &WaveProfile,
    grid: Arc<VelocityGrid>,
    params: &ModelParams,
    lab: LabGrid,
    peak_position: f64,
    location: Location,
    dt: f64,
) -> Result<(KineticState, ChemFields)> {
    let p = &wave.profile;
    let w = grid.len();
    if p.f.len() != p.rho.len() * w {
        return Err(Error::InvalidGrid(
            "profile and velocity grid disagree".into(),
        ));
    }
    let z0 = -p.half_length();
    let peak = p.rho.iter().copied().fold(0.0, f64::max);
    let x_end = lab.x0 + lab.n_cells as f64 * lab.dx;
    for edge in [lab.x0, x_end] {
        let tail = interp(&p.rho, z0, p.dz, edge - peak_position).unwrap_or(0.0);
        if tail > 1e-8 * peak {
            return Err(Error::DomainTooSmall {
                tail: tail / peak,
                limit: 1e-8,
            });
        }
    }

    let columns: Vec<Vec<f64>> = (0..w)
        .map(|k| p.f.iter().skip(k).step_by(w).copied().collect())
        .collect();
    let mut f = Vec::with_capacity(lab.n_cells * w);
    for j in 0..lab.n_cells {
        let z = lab.x0 + (j as f64 + 0.5) * lab.dx - peak_position;
        for col in &columns {
            f.push(interp(col, z0, p.dz, z).unwrap_or(0.0).max(0.0));
        }
    }
    let mut state = KineticState::new(f, lab.dx, lab.x0, Arc::clone(&grid))?;
    let mass = p.rho.iter().sum::<f64>() * p.dz;
    let lab_mass = state.mass();
    if !(lab_mass > 0.0) {
        return Err(Error::ZeroDensity);
    }
    let scale = mass / lab_mass;
    let scaled: Vec<f64> = state.values().iter().map(|x| x * scale).collect();
    state = KineticState::new(scaled, lab.dx, lab.x0, grid)?;

    let positions: Vec<f64> = match location {
        Location::Interfaces => (0..=lab.n_cells)
            .map(|i| lab.x0 + i as f64 * lab.dx)
            .collect(),
        Location::Nodes => (0..lab.n_cells)
            .map(|j| lab.x0 + (j as f64 + 0.5) * lab.dx)
            .collect(),
    };
    let sample = |shift: f64| -> (Vec<f64>, Vec<f64>) {
        let m = positions
            .iter()
            .map(|x| {
                scale * interp(&wave.m_tilde, z0, p.dz, x - peak_position + shift).unwrap_or(0.0)
            })
            .collect();
        let n = positions
            .iter()
            .map(|x| {
                let z = x - peak_position + shift;
                interp(&wave.n, z0, p.dz, z).unwrap_or(if z < 0.0 { 0.0 } else { params.n_bar })
            })
            .collect();
        (m, n)
    };
    let (m_now, mut n_now) = sample(0.0);
    let (m_prev, mut n_prev) = sample(wave.c() * dt);
    if location == Location::Interfaces {
        let last = n_now.len() - 1;
        n_now[last] = params.n_bar;
        n_prev[last] = params.n_bar;
    }
    Ok((
        state,
        ChemFields {
            m_now,
            m_prev,
            n_now,
            n_prev,
            dt_used: dt,
            location,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Weights;

    fn two_stream() -> VelocityGrid {
        VelocityGrid::explicit_symmetric(&[1.0], Weights::Uniform).unwrap()
    }

    fn fig_params() -> ModelParams {
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
    fn two_stream_critical_speeds() {
        let g = two_stream();
        let cs = critical_speeds(&g, 0.3, 0.1).unwrap();
        assert!((cs.upper - 0.4).abs() < 1e-12);
        assert!((cs.lower - (0.1 - 0.3)).abs() < 1e-12);
        let sym = critical_speeds(&VelocityGrid::gauss_legendre(3).unwrap(), 0.2, 0.2).unwrap();
        assert!(sym.lower.abs() < 1e-12);
    }

    #[test]
    fn two_stream_decay_rates() {
        let g = two_stream();
        let d = decay_rates(0.0, &g, &QuadrantRates::new(0.3, 0.1)).unwrap();
        assert!((d.lambda_plus - 0.2).abs() < 1e-12);
        assert!((d.lambda_minus - 0.4).abs() < 1e-12);
    }

    #[test]
    fn decay_modes_solve_the_asymptotic_problem() {
        let g = VelocityGrid::explicit_symmetric(&[0.5, 1.0], Weights::Uniform).unwrap();
        let q = QuadrantRates::new(0.48, 0.44);
        let c = 0.3;
        let d = decay_rates(c, &g, &q).unwrap();
        let v = g.nodes();
        let w = g.weights();
        // -λ_+ u F = Σ ω T F - T F on the right, λ_- u F = ... on the left
        let gain_r: f64 = (0..4).map(|l| w[l] * q.right(v[l] - c) * d.f_plus[l]).sum();
        let gain_l: f64 = (0..4).map(|l| w[l] * q.left(v[l] - c) * d.f_minus[l]).sum();
        for k in 0..4 {
            let u = v[k] - c;
            let r = -d.lambda_plus * u * d.f_plus[k] - (gain_r - q.right(u) * d.f_plus[k]);
            let l = d.lambda_minus * u * d.f_minus[k] - (gain_l - q.left(u) * d.f_minus[k]);
            assert!(r.abs() < 1e-12 && l.abs() < 1e-12, "{r} {l}");
        }
    }

    #[test]
    fn elliptic_constant_and_linearity() {
        let p = fig_params();
        let m = elliptic_signal(&[2.0; 50], 0.3, &p, 0.01, Advection::Centered).unwrap();
        for x in &m {
            assert!((x - 2.0 * p.beta / p.alpha).abs() < 1e-12);
        }
        let rho: Vec<f64> = (0..50)
            .map(|i| (-((i as f64 - 25.0) * 0.1).powi(2)).exp())
            .collect();
        let a = elliptic_signal(&rho, 0.3, &p, 0.01, Advection::Centered).unwrap();
        let rho2: Vec<f64> = rho.iter().map(|r| 2.0 * r).collect();
        let b = elliptic_signal(&rho2, 0.3, &p, 0.01, Advection::Centered).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn nutrient_closed_forms() {
        let p = fig_params();
        let n = stationary_nutrient(&[0.0; 101], 0.0, &p, 0.01).unwrap();
        for (i, x) in n.iter().enumerate() {
            assert!((x - i as f64 / 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_peaks_at_origin() {
        let p = fig_params();
        let g = VelocityGrid::explicit_symmetric(&[0.5, 1.0], Weights::Uniform).unwrap();
        let wave = WaveProfile::compute(0.3, &g, &p, &WaveOptions::default()).unwrap();
        let pr = &wave.profile;
        let imax = pr
            .rho
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((imax as i64 - pr.center as i64).abs() <= 1);
        let mass: f64 = pr.rho.iter().sum::<f64>() * pr.dz;
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(pr.tail_ratio() < 1e-4);
    }
}
