//! Coupled time loop: kinetic step, material derivatives, signal and
//! nutrient updates, and diagnostics.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kinetic::{cfl_max_dt, KineticState};
use crate::model::{
    material_derivative_md1_all, material_derivative_md2_all, sgn, ChemFields, Location,
    ModelParams,
};
use crate::parabolic::{
    ts_positivity_max_dt, ts_step_diffusion, Boundary, LsplineOperator, Placement,
};
use crate::quadrature::{VelocityGrid, Weights};
use crate::scattering::{SMatrix, SMatrixCache, SMatrixVariant};
use crate::waves::{wave_initial_data, LabGrid, WaveOptions, WaveProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[serde(alias = "WB")]
    Wb,
    #[serde(alias = "TS")]
    Ts,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Wb => "WB",
            Scheme::Ts => "TS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdVariant {
    #[serde(alias = "MD1")]
    Md1,
    #[serde(alias = "MD2")]
    Md2,
}

impl fmt::Display for MdVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MdVariant::Md1 => "MD1",
            MdVariant::Md2 => "MD2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// `2K` Gauss–Legendre nodes.
    Gauss { k: usize },
    /// Positive speeds, mirrored; uniform weights unless given.
    Explicit {
        speeds: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl GridSpec {
    pub fn build(&self) -> Result<VelocityGrid> {
        match self {
            GridSpec::Gauss { k } => VelocityGrid::gauss_legendre(*k),
            GridSpec::Explicit { speeds, weights } => VelocityGrid::explicit_symmetric(
                speeds,
                match weights {
                    Some(w) => Weights::Given(w.clone()),
                    None => Weights::Uniform,
                },
            ),
        }
    }
}

/// Fixed time step or the largest stable one scaled by `cfl`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DtSpec {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for DtSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DtSpec::Auto => s.serialize_str("auto"),
            DtSpec::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for DtSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v > 0.0 => Ok(DtSpec::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "dt must be positive, got {v}"
            ))),
            Raw::Text(t) if t == "auto" => Ok(DtSpec::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "dt must be a number or \"auto\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalInit {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude * exp(-rate (x - center)^2)`
    Gaussian {
        amplitude: f64,
        rate: f64,
        center: f64,
    },
}

impl SignalInit {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            SignalInit::Zero => 0.0,
            SignalInit::Constant { value } => value,
            SignalInit::Gaussian {
                amplitude,
                rate,
                center,
            } => amplitude * (-rate * (x - center).powi(2)).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NutrientInit {
    Constant {
        value: f64,
    },
    /// `amplitude * (offset + tanh(x / width - shift))`
    Tanh {
        amplitude: f64,
        offset: f64,
        width: f64,
        shift: f64,
    },
}

impl NutrientInit {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            NutrientInit::Constant { value } => value,
            NutrientInit::Tanh {
                amplitude,
                offset,
                width,
                shift,
            } => amplitude * (offset + (x / width - shift).tanh()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `f = amplitude * exp(-x_rate (x - center)^2 - v_rate v^2)`.
    Gaussian {
        amplitude: f64,
        x_rate: f64,
        #[serde(default)]
        v_rate: f64,
        #[serde(default)]
        center: f64,
        signal: SignalInit,
        nutrient: NutrientInit,
    },
    /// Stationary moving-frame profile at speed `c`.
    Wave {
        c: f64,
        peak_position: f64,
        #[serde(default)]
        options: WaveOptions,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// The signal follows its reaction–diffusion equation.
    #[default]
    Dynamic,
    /// The signal keeps its initial profile and has no time derivative.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoTiming {
    /// Chemicals see the density from before the kinetic step.
    #[default]
    PreStep,
    PostStep,
}

/// How MD-1, defined between two nodes, yields rates at the nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRates {
    /// Average the fields to the midpoints around each node first, so the
    /// derivative is centred on the node.
    #[default]
    Centered,
    /// Node `j` takes the derivative at `x_{j+1/2}`, with a Neumann copy
    /// past the last node.
    Forward,
}

fn default_cfl() -> f64 {
    0.9
}
fn default_one() -> f64 {
    1.0
}
fn default_output_every() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub kinetic: Scheme,
    pub parabolic: Scheme,
    pub md: MdVariant,
    pub smatrix: SMatrixVariant,
    pub grid: GridSpec,
    pub domain: [f64; 2],
    pub dx: f64,
    #[serde(default)]
    pub dt: DtSpec,
    /// Safety factor applied to every automatic bound.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    /// Diagnostics cadence in kinetic steps.
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    /// Snapshot cadence in kinetic steps; 0 keeps only the final snapshot.
    #[serde(default)]
    pub snapshot_every: usize,
    pub params: ModelParams,
    pub initial: InitialCondition,
    /// Factor applied to ρ before it enters the chemical equations.
    #[serde(default = "default_one")]
    pub density_scale: f64,
    #[serde(default)]
    pub rho_timing: RhoTiming,
    #[serde(default)]
    pub signal_mode: SignalMode,
    /// Advance the chemicals with several substeps per kinetic step instead
    /// of shrinking the kinetic step to the parabolic bound.
    #[serde(default)]
    pub subcycle: bool,
    /// Stop once `Σ|Δρ| dx / (mass dt)` falls below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_tol: Option<f64>,
    /// Only used by MD-1 with the TS kinetic and parabolic schemes.
    #[serde(default)]
    pub node_rates: NodeRates,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.domain[1] > self.domain[0]) {
            return bad(format!("empty domain {:?}", self.domain));
        }
        if !(self.dx > 0.0) || self.n_cells() < 3 {
            return bad(format!("dx = {} gives too few cells", self.dx));
        }
        if !(self.t_end >= 0.0) {
            return bad(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if self.output_every == 0 {
            return bad("output_every must be at least 1".into());
        }
        if !(self.density_scale > 0.0) {
            return bad("density_scale must be positive".into());
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        ((self.domain[1] - self.domain[0]) / self.dx).round() as usize
    }

    fn field_location(&self) -> Location {
        match self.parabolic {
            Scheme::Wb => Location::Interfaces,
            Scheme::Ts => Location::Nodes,
        }
    }
}

/// One diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagRow {
    pub t: f64,
    pub mass: f64,
    pub c_est: f64,
    pub peak_x: f64,
    pub peak_rho: f64,
    pub sym_err: f64,
    pub min_f: f64,
}

/// Fields at the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub diagnostics: Vec<DiagRow>,
    pub snapshots: Vec<Snapshot>,
    pub state: KineticState,
    pub chem: ChemFields,
    pub steps: usize,
    pub t_final: f64,
    pub dt: f64,
    /// `Some(true)` when the steady-state tolerance was reached.
    pub converged: Option<bool>,
    /// Smallest phase-space value seen over the whole run.
    pub min_f: f64,
}

/// Mean of `u` over cells where `ρ > 0.1 max ρ`.
pub fn wave_speed_estimate(rho: &[f64], u: &[f64]) -> Result<f64> {
    let max = rho.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::ZeroDensity);
    }
    let (sum, count) = rho
        .iter()
        .zip(u)
        .filter(|(r, _)| **r > 0.1 * max)
        .fold((0.0, 0usize), |(s, c), (_, u)| (s + u, c + 1));
    Ok(sum / count as f64)
}

/// `max_j |ρ(center + j) - ρ(center - j)|`.
pub fn symmetry_error(rho: &[f64], center: usize) -> f64 {
    let reach = center.min(rho.len().saturating_sub(center + 1));
    (1..=reach)
        .map(|j| (rho[center + j] - rho[center - j]).abs())
        .fold(0.0, f64::max)
}

/// `max_j |ρ_j - ρ_{n-1-j}|`: symmetry about the middle of the array.
pub fn mirror_symmetry_error(rho: &[f64]) -> f64 {
    let n = rho.len();
    (0..n / 2)
        .map(|j| (rho[j] - rho[n - 1 - j]).abs())
        .fold(0.0, f64::max)
}

/// Argmax of `ρ` refined by a three-point parabola; returns `(x, ρ)`.
pub fn peak_position(x: &[f64], rho: &[f64]) -> (f64, f64) {
    let (j, &top) = rho
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty density");
    if j == 0 || j + 1 == rho.len() {
        return (x[j], top);
    }
    let (a, b, c) = (rho[j - 1], top, rho[j + 1]);
    let curv = a - 2.0 * b + c;
    if curv >= 0.0 {
        return (x[j], top);
    }
    let s = 0.5 * (a - c) / curv;
    let dx = x[j + 1] - x[j];
    (x[j] + s * dx, b - 0.25 * (a - c) * s)
}

/// Average of `c_est` over diagnostics rows with `t` in `[from, to]`.
pub fn mean_speed(rows: &[DiagRow], from: f64, to: f64) -> Option<f64> {
    let sel: Vec<f64> = rows
        .iter()
        .filter(|r| r.t >= from && r.t <= to && r.c_est.is_finite())
        .map(|r| r.c_est)
        .collect();
    if sel.is_empty() {
        None
    } else {
        Some(sel.iter().sum::<f64>() / sel.len() as f64)
    }
}

/// Speed from a least-squares fit of the peak position against time.
pub fn peak_speed(rows: &[DiagRow], from: f64, to: f64) -> Option<f64> {
    let sel: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= from && r.t <= to)
        .map(|r| (r.t, r.peak_x))
        .collect();
    if sel.len() < 2 {
        return None;
    }
    let n = sel.len() as f64;
    let mt = sel.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = sel.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = sel.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stx: f64 = sel.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    Some(stx / stt)
}

/// Where the kinetic scheme needs tumbling rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Targets {
    /// Interfaces `1..n`.
    InteriorInterfaces,
    /// Cell centers.
    Centers,
}

fn averages(a: &[f64]) -> Vec<f64> {
    a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Arrays on which the material derivative is evaluated, and the index
/// offset of target `t` in them.
fn md_arrays(
    md: MdVariant,
    fields: Location,
    targets: Targets,
    now: &[f64],
    prev: &[f64],
    right_wall: Option<f64>,
    node_rates: NodeRates,
) -> (Vec<f64>, Vec<f64>, usize) {
    use Location::*;
    use Targets::*;
    match (md, fields, targets) {
        (MdVariant::Md1, Nodes, Centers) if node_rates == NodeRates::Forward => {
            let pad = |a: &[f64]| {
                let mut out = a.to_vec();
                out.push(a[a.len() - 1]);
                out
            };
            (pad(now), pad(prev), 0)
        }
        (MdVariant::Md2, Interfaces, InteriorInterfaces) => (now.to_vec(), prev.to_vec(), 1),
        (MdVariant::Md2, Nodes, Centers) => (now.to_vec(), prev.to_vec(), 0),
        (MdVariant::Md2, Interfaces, Centers) | (MdVariant::Md2, Nodes, InteriorInterfaces) => {
            (averages(now), averages(prev), 0)
        }
        (MdVariant::Md1, Interfaces, Centers) | (MdVariant::Md1, Nodes, InteriorInterfaces) => {
            (now.to_vec(), prev.to_vec(), 0)
        }
        (MdVariant::Md1, Interfaces, InteriorInterfaces) => (averages(now), averages(prev), 0),
        (MdVariant::Md1, Nodes, Centers) => {
            let walls = |a: &[f64]| {
                let mut out = Vec::with_capacity(a.len() + 1);
                out.push(a[0]);
                out.extend(averages(a));
                out.push(right_wall.unwrap_or(a[a.len() - 1]));
                out
            };
            (walls(now), walls(prev), 0)
        }
    }
}

/// Signs of the material derivative at every target and velocity.
#[allow(clippy::too_many_arguments)]
fn md_signs(
    md: MdVariant,
    fields: Location,
    targets: Targets,
    n_targets: usize,
    now: &[f64],
    prev: &[f64],
    dt: f64,
    dx: f64,
    velocities: &[f64],
    right_wall: Option<f64>,
    node_rates: NodeRates,
) -> Result<Vec<i8>> {
    let (a_now, a_prev, offset) = md_arrays(md, fields, targets, now, prev, right_wall, node_rates);
    let w = velocities.len();
    let mut out = vec![0i8; n_targets * w];
    for (k, &v) in velocities.iter().enumerate() {
        let d = match md {
            MdVariant::Md1 => material_derivative_md1_all(&a_now, &a_prev, dt, dx, v),
            MdVariant::Md2 => material_derivative_md2_all(&a_now, &a_prev, dt, dx, v),
        };
        if d.len() < offset + n_targets {
            return Err(Error::OutOfRange {
                index: offset + n_targets,
                len: d.len(),
            });
        }
        for t in 0..n_targets {
            out[t * w + k] = sgn(d[t + offset]);
        }
    }
    Ok(out)
}

/// Scattering matrices keyed by per-velocity sign codes.
struct CodeCache {
    inner: SMatrixCache,
    by_code: HashMap<Vec<u8>, Arc<SMatrix>>,
}

impl CodeCache {
    fn get(&mut self, code: &[u8], params: &ModelParams) -> Result<Arc<SMatrix>> {
        if let Some(s) = self.by_code.get(code) {
            return Ok(Arc::clone(s));
        }
        let rates: Vec<f64> = code.iter().map(|&c| rate_of_code(params, c)).collect();
        let s = self.inner.get(&rates)?;
        self.by_code.insert(code.to_vec(), Arc::clone(&s));
        Ok(s)
    }
}

#[inline]
fn code_of(sm: i8, sn: i8) -> u8 {
    ((sm + 1) * 3 + (sn + 1)) as u8
}

#[inline]
fn rate_of_code(params: &ModelParams, code: u8) -> f64 {
    let sm = (code / 3) as i8 - 1;
    let sn = (code % 3) as i8 - 1;
    params.rate_from_signs(sm, sn)
}

/// One frozen-ρ chemical update.
enum ChemOp {
    Lspline(LsplineOperator),
    /// Three-point scheme on cell centers.
    ThreePoint {
        p: Vec<f64>,
        q: Vec<f64>,
        d: f64,
        right: Boundary,
    },
}

impl ChemOp {
    fn bound(&self, dx: f64) -> f64 {
        match self {
            ChemOp::Lspline(op) => op.max_dt(),
            ChemOp::ThreePoint { p, d, right, .. } => {
                ts_positivity_max_dt(p, *d, dx, *right, Placement::HalfCell)
            }
        }
    }

    fn advance(&self, u: &[f64], dt: f64, dx: f64, substeps: usize) -> Result<Vec<f64>> {
        match self {
            ChemOp::Lspline(op) => op.advance(u, dt, substeps),
            ChemOp::ThreePoint { p, q, d, right } => {
                let h = dt / substeps as f64;
                let mut u = u.to_vec();
                for _ in 0..substeps {
                    u = ts_step_diffusion(&u, p, q, *d, h, dx, *right, Placement::HalfCell)?;
                }
                Ok(u)
            }
        }
    }
}

struct ChemOps {
    signal: Option<ChemOp>,
    nutrient: Option<ChemOp>,
}

impl ChemOps {
    fn bound(&self, dx: f64) -> f64 {
        [&self.signal, &self.nutrient]
            .into_iter()
            .flatten()
            .map(|op| op.bound(dx))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Runner state for one simulation.
pub struct Simulation {
    cfg: SimConfig,
    grid: Arc<VelocityGrid>,
    state: KineticState,
    chem: ChemFields,
    cache: CodeCache,
    dt: f64,
    t: f64,
    steps: usize,
    x_centers: Vec<f64>,
    /// Density of `state`.
    rho: Vec<f64>,
    min_f: f64,
    signal_active: bool,
    nutrient_active: bool,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = Arc::new(cfg.grid.build()?);
        let n = cfg.n_cells();
        let dx = (cfg.domain[1] - cfg.domain[0]) / n as f64;
        let x0 = cfg.domain[0];
        let location = cfg.field_location();
        let kinetic_dt = match cfg.kinetic {
            Scheme::Wb => cfl_max_dt(&grid, dx),
            Scheme::Ts => cfl_max_dt(&grid, dx).min(1.0 / (1.0 + cfg.params.chi_total())),
        };
        // Refined below when the parabolic bounds also apply.
        let dt = match cfg.dt {
            DtSpec::Fixed(v) => {
                if v > kinetic_dt * (1.0 + 1e-12) {
                    return Err(Error::TimeStep {
                        dt: v,
                        bound: kinetic_dt,
                        what: "kinetic step".into(),
                    });
                }
                v
            }
            DtSpec::Auto => cfg.cfl * kinetic_dt,
        };
        let x_centers: Vec<f64> = (0..n).map(|j| x0 + (j as f64 + 0.5) * dx).collect();
        let positions: Vec<f64> = match location {
            Location::Interfaces => (0..=n).map(|i| x0 + i as f64 * dx).collect(),
            Location::Nodes => x_centers.clone(),
        };
        let (state, chem) = match &cfg.initial {
            InitialCondition::Gaussian {
                amplitude,
                x_rate,
                v_rate,
                center,
                signal,
                nutrient,
            } => {
                let mut f = Vec::with_capacity(n * grid.len());
                for &x in &x_centers {
                    for &v in grid.nodes() {
                        f.push(amplitude * (-x_rate * (x - center).powi(2) - v_rate * v * v).exp());
                    }
                }
                let state = KineticState::new(f, dx, x0, Arc::clone(&grid))?;
                let m: Vec<f64> = positions.iter().map(|&x| signal.eval(x)).collect();
                let mut nn: Vec<f64> = positions.iter().map(|&x| nutrient.eval(x)).collect();
                if location == Location::Interfaces {
                    *nn.last_mut().unwrap() = cfg.params.n_bar;
                }
                (state, ChemFields::at_rest(m, nn, dt, location))
            }
            InitialCondition::Wave {
                c,
                peak_position,
                options,
            } => {
                let wave = WaveProfile::compute(*c, &grid, &cfg.params, options)?;
                wave_initial_data(
                    &wave,
                    Arc::clone(&grid),
                    &cfg.params,
                    LabGrid { x0, dx, n_cells: n },
                    *peak_position,
                    location,
                    dt,
                )?
            }
        };
        let cache = CodeCache {
            inner: SMatrixCache::new(Arc::clone(&grid), dx, cfg.params.chi_total(), cfg.smatrix),
            by_code: HashMap::new(),
        };
        let min_f = state.min_entry();
        let rho = state.density();
        let signal_active = cfg.signal_mode == SignalMode::Dynamic;
        let nutrient_active = cfg.params.chi_n != 0.0 || cfg.params.gamma != 0.0;
        let mut sim = Self {
            cfg,
            grid,
            state,
            chem,
            cache,
            dt,
            t: 0.0,
            steps: 0,
            x_centers,
            rho,
            min_f,
            signal_active,
            nutrient_active,
        };
        if !sim.cfg.subcycle {
            let bound = sim.parabolic_bound(&sim.state.density())?;
            match sim.cfg.dt {
                DtSpec::Auto => {
                    sim.dt = sim.dt.min(sim.cfg.cfl * bound);
                    sim.chem.dt_used = sim.dt;
                }
                DtSpec::Fixed(v) if v > bound * (1.0 + 1e-12) => {
                    return Err(Error::TimeStep {
                        dt: v,
                        bound,
                        what: "parabolic positivity".into(),
                    });
                }
                DtSpec::Fixed(_) => {}
            }
        }
        Ok(sim)
    }

    /// Chemical updates with `ρ` (at cell centers) frozen.
    fn chem_ops(&self, rho: &[f64]) -> Result<ChemOps> {
        let p = &self.cfg.params;
        let dx = self.state.dx();
        let scaled: Vec<f64> = rho.iter().map(|r| r * self.cfg.density_scale).collect();
        if self.nutrient_active {
            if let Some(index) = scaled.iter().position(|r| !(*r >= 0.0)) {
                return Err(Error::NegativeDensity {
                    index,
                    value: scaled[index],
                });
            }
        }
        let (signal, nutrient) = match self.cfg.parabolic {
            Scheme::Wb => (
                self.signal_active
                    .then(|| LsplineOperator::signal(&scaled, p, dx).map(ChemOp::Lspline))
                    .transpose()?,
                self.nutrient_active
                    .then(|| LsplineOperator::nutrient(&scaled, p, dx).map(ChemOp::Lspline))
                    .transpose()?,
            ),
            Scheme::Ts => (
                self.signal_active.then(|| ChemOp::ThreePoint {
                    p: vec![p.alpha; scaled.len()],
                    q: scaled.iter().map(|r| p.beta * r).collect(),
                    d: p.d_m,
                    right: Boundary::Neumann,
                }),
                self.nutrient_active.then(|| ChemOp::ThreePoint {
                    p: scaled.iter().map(|r| p.gamma * r).collect(),
                    q: vec![0.0; scaled.len()],
                    d: p.d_n,
                    right: Boundary::Dirichlet(p.n_bar),
                }),
            ),
        };
        Ok(ChemOps { signal, nutrient })
    }

    fn parabolic_bound(&self, rho: &[f64]) -> Result<f64> {
        Ok(self.chem_ops(rho)?.bound(self.state.dx()))
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &KineticState {
        &self.state
    }

    pub fn chem(&self) -> &ChemFields {
        &self.chem
    }

    fn targets(&self) -> Targets {
        match self.cfg.kinetic {
            Scheme::Wb => Targets::InteriorInterfaces,
            Scheme::Ts => Targets::Centers,
        }
    }

    /// Per-target, per-velocity rate codes.
    fn rate_codes(&self) -> Result<Vec<u8>> {
        let n = self.state.n_cells();
        let targets = self.targets();
        let n_targets = match targets {
            Targets::InteriorInterfaces => n - 1,
            Targets::Centers => n,
        };
        let v = self.grid.nodes();
        let dx = self.state.dx();
        let loc = self.chem.location;
        let dt = self.chem.dt_used;
        let params = &self.cfg.params;
        let sm = if params.chi_m != 0.0 {
            md_signs(
                self.cfg.md,
                loc,
                targets,
                n_targets,
                &self.chem.m_now,
                &self.chem.m_prev,
                dt,
                dx,
                v,
                None,
                self.cfg.node_rates,
            )?
        } else {
            vec![0; n_targets * v.len()]
        };
        let sn = if params.chi_n != 0.0 {
            md_signs(
                self.cfg.md,
                loc,
                targets,
                n_targets,
                &self.chem.n_now,
                &self.chem.n_prev,
                dt,
                dx,
                v,
                Some(params.n_bar),
                self.cfg.node_rates,
            )?
        } else {
            vec![0; n_targets * v.len()]
        };
        Ok(sm.iter().zip(&sn).map(|(&a, &b)| code_of(a, b)).collect())
    }

    fn kinetic_step(&mut self) -> Result<KineticState> {
        let codes = self.rate_codes()?;
        let w = self.grid.len();
        match self.cfg.kinetic {
            Scheme::Wb => {
                let mut mats: Vec<Arc<SMatrix>> = Vec::with_capacity(codes.len() / w);
                let mut last: Option<(&[u8], Arc<SMatrix>)> = None;
                for code in codes.chunks(w) {
                    let s = match &last {
                        Some((c, s)) if *c == code => Arc::clone(s),
                        _ => self.cache.get(code, &self.cfg.params)?,
                    };
                    last = Some((code, Arc::clone(&s)));
                    mats.push(s);
                }
                self.state.wb_step(&mats, self.dt)
            }
            Scheme::Ts => {
                let rates: Vec<f64> = codes
                    .iter()
                    .map(|&c| rate_of_code(&self.cfg.params, c))
                    .collect();
                self.state.ts_step(&rates, self.dt)
            }
        }
    }

    /// Advances the chemicals over `dt`.
    fn chemical_step(&self, ops: &ChemOps) -> Result<(Vec<f64>, Vec<f64>)> {
        let dx = self.state.dx();
        let dt = self.dt;
        let substeps = |op: &ChemOp| -> Result<usize> {
            let bound = op.bound(dx);
            if dt <= bound * (1.0 + 1e-12) && !self.cfg.subcycle {
                return Ok(1);
            }
            if !self.cfg.subcycle {
                return Err(Error::TimeStep {
                    dt,
                    bound,
                    what: "parabolic positivity (enable subcycling or reduce dt)".into(),
                });
            }
            Ok((dt / (self.cfg.cfl * bound)).ceil().max(1.0) as usize)
        };
        let m = match &ops.signal {
            Some(op) => op.advance(&self.chem.m_now, dt, dx, substeps(op)?)?,
            None => self.chem.m_now.clone(),
        };
        let n = match &ops.nutrient {
            Some(op) => op.advance(&self.chem.n_now, dt, dx, substeps(op)?)?,
            None => self.chem.n_now.clone(),
        };
        Ok((m, n))
    }

    /// One full splitting step; returns `Σ|Δρ| dx / (mass dt)`.
    pub fn step(&mut self) -> Result<f64> {
        let step = self.steps;
        let wrap = move |e: Error| Error::Step {
            step,
            source: Box::new(e),
        };
        let rho_old = std::mem::take(&mut self.rho);
        let pre_ops = match self.cfg.rho_timing {
            RhoTiming::PreStep => Some(self.chem_ops(&rho_old).map_err(wrap)?),
            RhoTiming::PostStep => None,
        };
        if !self.cfg.subcycle && self.cfg.dt == DtSpec::Auto {
            // The nutrient bound moves with ρ; only ever tighten.
            let bound = match &pre_ops {
                Some(ops) => ops.bound(self.state.dx()),
                None => self.parabolic_bound(&rho_old).map_err(wrap)?,
            };
            self.dt = self.dt.min(self.cfg.cfl * bound);
        }
        let next = self.kinetic_step().map_err(wrap)?;
        let rho_new = next.density();
        let ops = match pre_ops {
            Some(ops) => ops,
            None => self.chem_ops(&rho_new).map_err(wrap)?,
        };
        let (m, n) = self.chemical_step(&ops).map_err(wrap)?;
        self.min_f = self.min_f.min(next.min_entry());
        self.state = next;
        if self.signal_active || self.nutrient_active {
            self.chem.rotate(m, n, self.dt);
        } else {
            self.chem.dt_used = self.dt;
        }
        self.t += self.dt;
        self.steps += 1;
        let dx = self.state.dx();
        let change: f64 = rho_old
            .iter()
            .zip(&rho_new)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * dx;
        let mass: f64 = rho_new.iter().sum::<f64>() * dx;
        self.rho = rho_new;
        Ok(if mass > 0.0 {
            change / (mass * self.dt)
        } else {
            0.0
        })
    }

    fn centered(&self, a: &[f64]) -> Vec<f64> {
        match self.chem.location {
            Location::Interfaces => averages(a),
            Location::Nodes => a.to_vec(),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let rho = self.state.density();
        let flux = self.state.flux();
        let u = rho
            .iter()
            .zip(&flux)
            .map(|(r, j)| if *r > 0.0 { j / r } else { 0.0 })
            .collect();
        Snapshot {
            t: self.t,
            x: self.x_centers.clone(),
            rho,
            u,
            m: self.centered(&self.chem.m_now),
            n: self.centered(&self.chem.n_now),
        }
    }

    pub fn diagnostics(&self) -> DiagRow {
        let rho = self.state.density();
        let flux = self.state.flux();
        let u: Vec<f64> = rho
            .iter()
            .zip(&flux)
            .map(|(r, j)| if *r > 0.0 { j / r } else { 0.0 })
            .collect();
        let (peak_x, peak_rho) = peak_position(&self.x_centers, &rho);
        let symmetric = (self.cfg.domain[0] + self.cfg.domain[1]).abs() < 1e-12;
        DiagRow {
            t: self.t,
            mass: rho.iter().sum::<f64>() * self.state.dx(),
            c_est: wave_speed_estimate(&rho, &u).unwrap_or(f64::NAN),
            peak_x,
            peak_rho,
            sym_err: if symmetric {
                mirror_symmetry_error(&rho)
            } else {
                f64::NAN
            },
            min_f: self.state.min_entry(),
        }
    }

    /// Runs to `t_end` (or the steady-state tolerance).
    pub fn run(mut self) -> Result<RunResult> {
        let mut diagnostics = vec![self.diagnostics()];
        let mut snapshots = Vec::new();
        if self.cfg.snapshot_every > 0 {
            snapshots.push(self.snapshot());
        }
        let mut converged = self.cfg.steady_tol.map(|_| false);
        // The last step may overshoot t_end by less than one dt.
        while self.t < self.cfg.t_end - 1e-9 * self.dt {
            let change = self.step()?;
            let out = self.steps % self.cfg.output_every == 0;
            if out {
                diagnostics.push(self.diagnostics());
            }
            if self.cfg.snapshot_every > 0 && self.steps % self.cfg.snapshot_every == 0 {
                snapshots.push(self.snapshot());
            }
            if let Some(tol) = self.cfg.steady_tol {
                if change < tol {
                    converged = Some(true);
                    break;
                }
            }
        }
        if diagnostics.last().map(|d| d.t) != Some(self.t) {
            diagnostics.push(self.diagnostics());
        }
        if snapshots.last().map(|s| s.t) != Some(self.t) {
            snapshots.push(self.snapshot());
        }
        Ok(RunResult {
            diagnostics,
            snapshots,
            steps: self.steps,
            t_final: self.t,
            dt: self.dt,
            converged,
            min_f: self.min_f,
            state: self.state,
            chem: self.chem,
        })
    }
}

pub fn run(cfg: SimConfig) -> Result<RunResult> {
    Simulation::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_estimate_examples() {
        assert_eq!(wave_speed_estimate(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((wave_speed_estimate(&[0.5, 3.0, 1.0], &[0.3; 3]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(
            wave_speed_estimate(&[1.0, 10.0, 1.0], &[5.0, 2.0, 5.0]).unwrap(),
            2.0
        );
        assert!(wave_speed_estimate(&[0.0; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn symmetry_examples() {
        assert_eq!(symmetry_error(&[1.0, 2.0, 1.0], 1), 0.0);
        assert_eq!(symmetry_error(&[1.0, 2.0, 3.0], 1), 2.0);
        assert_eq!(mirror_symmetry_error(&[1.0, 2.0, 2.0, 1.0]), 0.0);
        assert_eq!(mirror_symmetry_error(&[1.0, 2.0, 2.5, 1.0]), 0.5);
    }

    #[test]
    fn peak_fit_recovers_parabola() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let rho: Vec<f64> = x.iter().map(|x| 2.0 - (x - 0.437).powi(2)).collect();
        let (px, pr) = peak_position(&x, &rho);
        assert!((px - 0.437).abs() < 1e-12);
        assert!((pr - 2.0).abs() < 1e-12);
    }

    #[test]
    fn codes_round_trip() {
        let p = ModelParams {
            chi_m: 0.3,
            chi_n: 0.2,
            d_m: 1.0,
            d_n: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            n_bar: 1.0,
        };
        for sm in -1..=1 {
            for sn in -1..=1 {
                assert_eq!(rate_of_code(&p, code_of(sm, sn)), p.rate_from_signs(sm, sn));
            }
        }
    }

    #[test]
    fn dt_spec_parses() {
        #[derive(Deserialize)]
        struct W {
            dt: DtSpec,
        }
        assert_eq!(
            toml::from_str::<W>("dt = \"auto\"").unwrap().dt,
            DtSpec::Auto
        );
        assert_eq!(
            toml::from_str::<W>("dt = 0.01").unwrap().dt,
            DtSpec::Fixed(0.01)
        );
        assert!(toml::from_str::<W>("dt = \"soon\"").is_err());
    }
}
