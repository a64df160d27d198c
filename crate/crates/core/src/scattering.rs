//! Interface scattering matrices.
//!
//! An [`SMatrix`] maps the incoming half-fluxes at an interface, stacked as
//! `(f_left(+V), f_right(-V))`, to the outgoing interface states
//! `(f~(+V), f~(-V))`; both vectors use the half-flux slot order of
//! [`VelocityGrid`]. Two constructions are provided: the exact one built from
//! Case's elementary solutions of the frozen-rate stationary problem on a
//! staggered cell of width `dx`, and a second-order finite-difference one.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::VelocityGrid;

/// Frozen tumbling rates at one interface, in natural (ascending velocity)
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceRates(pub Vec<f64>);

impl InterfaceRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "tumbling rates must be nonnegative: {rates:?}"
            )));
        }
        Ok(Self(rates))
    }

    pub fn uniform(value: f64, len: usize) -> Self {
        Self(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SMatrixVariant {
    Case,
    Fd,
}

impl std::fmt::Display for SMatrixVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SMatrixVariant::Case => "case",
            SMatrixVariant::Fd => "fd",
        })
    }
}

/// Dense `2K x 2K` scattering operator, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SMatrix {
    n: usize,
    data: Vec<f64>,
    identity: bool,
}

impl SMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            n,
            data,
            identity: true,
        }
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(m[(r, c)]);
            }
        }
        Self {
            n,
            data,
            identity: false,
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// `out = S * input`.
    #[inline]
    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.n);
        if self.identity {
            out.copy_from_slice(input);
            return;
        }
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.n..(r + 1) * self.n];
            *o = row.iter().zip(input).map(|(a, b)| a * b).sum();
        }
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Real roots of the dispersion relation `Σ ω_k / (T_k/v_k - λ) = 0`.
#[derive(Debug, Clone)]
pub struct SecularRoots {
    /// Sorted roots, one per gap between consecutive distinct poles.
    pub roots: Vec<f64>,
    /// Index in `roots` of the root lying between the negative and the
    /// positive poles; `None` when some rate vanishes, since the merged pole
    /// at zero then separates them.
    pub lambda0_index: Option<usize>,
    /// Set when the mean flux `Σ ω_k v_k / T_k` vanishes: `λ_0 = 0` then
    /// coincides with the conservation mode.
    pub degenerate: bool,
    /// Sorted distinct poles `T_k / v_k`.
    pub poles: Vec<f64>,
    /// Modes sitting exactly on a repeated pole, as (λ, first index, other
    /// index) in natural order.
    pub pole_modes: Vec<(f64, usize, usize)>,
    /// Velocities with `T_k = 0`. Each carries a mode constant in space
    /// and supported on that velocity alone.
    pub zero_rate: Vec<usize>,
}

impl SecularRoots {
    pub fn lambda0(&self) -> Option<f64> {
        self.lambda0_index.map(|i| self.roots[i])
    }
}

const BISECTION_MAX_ITER: usize = 200;
const BISECTION_RTOL: f64 = 1e-13;

/// Bisection for an increasing function on `(lo, hi)` with `f(lo+) < 0 < f(hi-)`.
pub(crate) fn bisect_increasing(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Ok(mid);
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    if (b - a) <= BISECTION_RTOL * scale {
        Ok(0.5 * (a + b))
    } else {
        Err(Error::NoConvergence {
            lo,
            hi,
            iterations: BISECTION_MAX_ITER,
        })
    }
}

/// Mean flux `Σ ω_k v_k / T_k`, summed over mirrored pairs. Infinite when a
/// rate vanishes.
pub fn mean_flux(rates: &InterfaceRates, grid: &VelocityGrid) -> f64 {
    let t = rates.as_slice();
    let v = grid.nodes();
    let w = grid.weights();
    (0..grid.half_count())
        .map(|i| {
            let (p, n) = (grid.pos(i), grid.neg(i));
            w[p] * v[p] * (1.0 / t[p] - 1.0 / t[n])
        })
        .sum()
}

pub fn secular_roots(rates: &InterfaceRates, grid: &VelocityGrid) -> Result<SecularRoots> {
    let t = rates.as_slice();
    let v = grid.nodes();
    let w = grid.weights();
    let n = grid.len();
    if t.len() != n {
        return Err(Error::InvalidParams(format!(
            "{} rates for {} velocities",
            t.len(),
            n
        )));
    }
    if let Some(bad) = t.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidParams(format!(
            "tumbling rate {bad} is not a nonnegative number"
        )));
    }
    let zero_rate: Vec<usize> = (0..n).filter(|&k| t[k] == 0.0).collect();
    let zero_weight: f64 = zero_rate.iter().map(|&k| w[k]).sum();

    // Poles sorted by value; the order need not follow 1/v_k.
    let mut order: Vec<usize> = (0..n).filter(|&k| t[k] > 0.0).collect();
    let pole = |k: usize| t[k] / v[k];
    order.sort_by(|&a, &b| pole(a).total_cmp(&pole(b)));

    // Merge coincident poles.
    let mut poles: Vec<f64> = Vec::with_capacity(n);
    let mut group_weight: Vec<f64> = Vec::with_capacity(n);
    let mut group_first: Vec<usize> = Vec::with_capacity(n);
    let mut pole_modes = Vec::new();
    for &k in &order {
        let p = pole(k);
        if let Some(&last) = poles.last() {
            if (p - last).abs() <= 1e-12 * p.abs().max(last.abs()) {
                *group_weight.last_mut().unwrap() += w[k];
                pole_modes.push((last, *group_first.last().unwrap(), k));
                continue;
            }
        }
        poles.push(p);
        group_weight.push(w[k]);
        group_first.push(k);
    }
    if !zero_rate.is_empty() {
        let at = poles.partition_point(|&p| p < 0.0);
        poles.insert(at, 0.0);
        group_weight.insert(at, zero_weight);
    }

    let h = |lambda: f64| -> f64 {
        poles
            .iter()
            .zip(&group_weight)
            .map(|(p, wg)| wg / (p - lambda))
            .sum()
    };

    let degenerate = zero_rate.is_empty() && {
        let mf = mean_flux(rates, grid);
        let flux_scale: f64 = (0..n).map(|k| w[k] * v[k].abs() / t[k]).sum();
        mf.abs() <= 1e-14 * flux_scale
    };

    let mut roots = Vec::with_capacity(poles.len().saturating_sub(1));
    let mut lambda0_index = None;
    for gap in poles.windows(2) {
        let (lo, hi) = (gap[0], gap[1]);
        let straddles_zero = lo < 0.0 && hi > 0.0;
        if straddles_zero {
            lambda0_index = Some(roots.len());
            if degenerate {
                roots.push(0.0);
                continue;
            }
        }
        roots.push(bisect_increasing(&h, lo, hi)?);
    }
    if lambda0_index.is_none() && zero_rate.is_empty() {
        return Err(Error::InvalidGrid(
            "velocity set needs both signs for a secular problem".into(),
        ));
    }
    Ok(SecularRoots {
        roots,
        lambda0_index,
        degenerate,
        poles,
        pole_modes,
        zero_rate,
    })
}

/// `expm1(-λ ζ) / λ`, continuous at `λ = 0`.
#[inline]
fn expm1_ratio(lambda: f64, zeta: f64) -> f64 {
    if lambda == 0.0 {
        -zeta
    } else {
        (-lambda * zeta).exp_m1() / lambda
    }
}

/// Case-mode scattering matrix on a staggered cell of width `dx`.
///
/// Local coordinate `ζ ∈ [-dx/2, dx/2]`: inflow for `v > 0` sits at `-dx/2`,
/// for `v < 0` at `+dx/2`; the outgoing interface states are the values at the
/// opposite ends. The `λ_0` mode enters through the divided difference
/// `(φ_{λ0} e^{-λ0 ζ} - φ̄) / λ0`, which spans the same space and tends to the
/// generalized diffusive mode when the mean flux vanishes.
pub fn case_smatrix(rates: &InterfaceRates, grid: &VelocityGrid, dx: f64) -> Result<SMatrix> {
    let sec = secular_roots(rates, grid)?;
    let t = rates.as_slice();
    let v = grid.nodes();
    let w = grid.weights();
    let n = grid.len();
    let half = grid.half_count();
    let h = 0.5 * dx;

    let inflow_zeta = |s: usize| if s < half { -h } else { h };
    let outflow_zeta = |s: usize| if s < half { h } else { -h };

    let mut m_in = DMatrix::<f64>::zeros(n, n);
    let mut m_out = DMatrix::<f64>::zeros(n, n);
    let mut col = 0;

    let mut fill = |col: usize, value: &dyn Fn(usize, f64) -> f64| {
        for s in 0..n {
            let k = grid.slot_to_natural(s);
            m_in[(s, col)] = value(k, inflow_zeta(s));
            m_out[(s, col)] = value(k, outflow_zeta(s));
        }
    };

    if let Some(l0) = sec.lambda0() {
        // Conservation mode 1/T.
        fill(col, &|k, _| 1.0 / t[k]);
        col += 1;
        fill(col, &|k, zeta| {
            (t[k] * expm1_ratio(l0, zeta) + v[k]) / (t[k] * (t[k] - l0 * v[k]))
        });
        col += 1;
    }
    for &z in &sec.zero_rate {
        fill(col, &|k, _| if k == z { 1.0 } else { 0.0 });
        col += 1;
    }

    for (idx, &lambda) in sec.roots.iter().enumerate() {
        if Some(idx) == sec.lambda0_index {
            continue;
        }
        let damp = lambda.abs() * h;
        fill(col, &|k, zeta| {
            (-lambda * zeta - damp).exp() / (t[k] - lambda * v[k])
        });
        col += 1;
    }

    for &(lambda, a, b) in &sec.pole_modes {
        let damp = lambda.abs() * h;
        let (ca, cb) = (1.0 / (w[a] * t[a]), -1.0 / (w[b] * t[b]));
        fill(col, &|k, zeta| {
            let phi = if k == a {
                ca
            } else if k == b {
                cb
            } else {
                0.0
            };
            phi * (-lambda * zeta - damp).exp()
        });
        col += 1;
    }
    debug_assert_eq!(col, n);

    for c in 0..n {
        let scale = (0..n).map(|r| m_in[(r, c)].abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            for r in 0..n {
                m_in[(r, c)] /= scale;
                m_out[(r, c)] /= scale;
            }
        }
    }

    let condition = condition_number(&m_in);
    if !(condition <= 1e14) {
        return Err(Error::SingularModes {
            condition,
            rates: t.to_vec(),
        });
    }
    // S = M~ M^{-1}  <=>  M^T S^T = M~^T
    let lu = m_in.transpose().lu();
    let st = lu.solve(&m_out.transpose()).ok_or(Error::SingularModes {
        condition,
        rates: t.to_vec(),
    })?;
    Ok(SMatrix::from_dmatrix(&st.transpose()))
}

/// Second-order finite-difference scattering matrix `Q^{-1} Q~`.
///
/// `chi_total` is `χ_M + χ_N`; the construction refuses grids violating
/// `v_min > dx (χ_M + χ_N)`.
pub fn fd_smatrix(
    rates: &InterfaceRates,
    grid: &VelocityGrid,
    dx: f64,
    chi_total: f64,
) -> Result<SMatrix> {
    let bound = dx * chi_total;
    if !(grid.v_min() > bound) {
        return Err(Error::Resonance {
            v_min: grid.v_min(),
            bound,
        });
    }
    fd_smatrix_unchecked(rates, grid, dx)
}

/// [`fd_smatrix`] without the non-resonance guard; fails only if `Q` is
/// singular.
pub fn fd_smatrix_unchecked(
    rates: &InterfaceRates,
    grid: &VelocityGrid,
    dx: f64,
) -> Result<SMatrix> {
    let t = rates.as_slice();
    let w = grid.weights();
    let n = grid.len();
    let h = 0.5 * dx;
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut qt = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        let kr = grid.slot_to_natural(r);
        let speed = grid.nodes()[kr].abs();
        for c in 0..n {
            let kc = grid.slot_to_natural(c);
            let coupling = h * w[kc] * t[kc];
            q[(r, c)] = -coupling;
            qt[(r, c)] = coupling;
        }
        q[(r, r)] += speed + h * t[kr];
        qt[(r, r)] += speed - h * t[kr];
    }
    let s = q
        .lu()
        .solve(&qt)
        .ok_or_else(|| Error::Singular("finite-difference Q matrix".into()))?;
    Ok(SMatrix::from_dmatrix(&s))
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SMatrixReport {
    pub condition_number: f64,
    pub min_entry: f64,
    /// `max_c |Σ_r (Γ S Γ^{-1})_{rc} - 1|` with `Γ = diag(ω|v|)`.
    pub stochastic_defect: f64,
}

pub fn smatrix_diagnostics(s: &SMatrix, grid: &VelocityGrid) -> SMatrixReport {
    let n = s.dim();
    let gamma: Vec<f64> = (0..n)
        .map(|slot| {
            let k = grid.slot_to_natural(slot);
            grid.weights()[k] * grid.nodes()[k].abs()
        })
        .collect();
    let stochastic_defect = (0..n)
        .map(|c| {
            let sum: f64 = (0..n).map(|r| gamma[r] * s.get(r, c)).sum::<f64>() / gamma[c];
            (sum - 1.0).abs()
        })
        .fold(0.0, f64::max);
    SMatrixReport {
        condition_number: condition_number(&s.to_dmatrix()),
        min_entry: s.min_entry(),
        stochastic_defect,
    }
}

/// Builds one scattering matrix for a rate vector.
pub fn build_smatrix(
    variant: SMatrixVariant,
    rates: &InterfaceRates,
    grid: &VelocityGrid,
    dx: f64,
    chi_total: f64,
) -> Result<SMatrix> {
    match variant {
        SMatrixVariant::Case => case_smatrix(rates, grid, dx),
        SMatrixVariant::Fd => fd_smatrix(rates, grid, dx, chi_total),
    }
}

/// Memo of scattering matrices for one grid, cell width and variant, keyed
/// by the exact bit pattern of the rate vector.
pub struct SMatrixCache {
    grid: Arc<VelocityGrid>,
    dx: f64,
    chi_total: f64,
    variant: SMatrixVariant,
    map: RwLock<HashMap<Vec<u64>, Arc<SMatrix>>>,
}

impl SMatrixCache {
    pub fn new(grid: Arc<VelocityGrid>, dx: f64, chi_total: f64, variant: SMatrixVariant) -> Self {
        Self {
            grid,
            dx,
            chi_total,
            variant,
            map: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, rates: &[f64]) -> Result<Arc<SMatrix>> {
        let key: Vec<u64> = rates.iter().map(|r| r.to_bits()).collect();
        if let Some(s) = self.map.read().get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(build_smatrix(
            self.variant,
            &InterfaceRates::new(rates.to_vec())?,
            &self.grid,
            self.dx,
            self.chi_total,
        )?);
        self.map
            .write()
            .entry(key)
            .or_insert_with(|| Arc::clone(&s));
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
