//! Scenario sweeps: each builds labelled configurations from a preset, runs
//! them independently and writes CSV.

use std::path::{Path, PathBuf};

use kinwave::sim::{
    mean_speed, mirror_symmetry_error, peak_speed, wave_speed_estimate, DiagRow, MdVariant,
    RunResult, Scheme, SignalMode, SimConfig, Snapshot,
};
use kinwave::waves::{find_wave_speeds, WaveOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::conditioning::ConditioningStudy;
use crate::error::{Error, Result};
use crate::output::{echo_configs, write_diagnostics, write_snapshots, CsvOut};
use crate::presets;

/// Command-line replacements applied after presets and config files.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SimConfig) {
        if let Some(dx) = self.dx {
            cfg.dx = dx;
        }
        if let Some(dt) = self.dt {
            cfg.dt = kinwave::sim::DtSpec::Fixed(dt);
        }
        if let Some(t) = self.t_end {
            cfg.t_end = t;
        }
    }
}

/// Keys of a TOML table laid over every preset of a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Patch(toml::Table);

impl Patch {
    pub fn parse(text: &str) -> Result<Self> {
        text.parse::<toml::Table>()
            .map(Patch)
            .map_err(|e| kinwave::error::Error::Config(e.to_string()).into())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Merges nested tables key by key; other values are replaced.
    pub fn apply(&self, cfg: &SimConfig) -> Result<SimConfig> {
        if self.0.is_empty() {
            return Ok(cfg.clone());
        }
        let mut base: toml::Table = toml::from_str(&cfg.to_toml())
            .map_err(|e| kinwave::error::Error::Config(e.to_string()))?;
        merge(&mut base, &self.0);
        Ok(SimConfig::from_toml(
            &toml::to_string(&base).expect("table serializes"),
        )?)
    }
}

fn merge(base: &mut toml::Table, patch: &toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Labeled {
    pub label: String,
    pub config: SimConfig,
}

/// Where a scenario wrote its files and how many runs aborted.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub failed: usize,
    pub total: usize,
}

impl Report {
    pub fn into_result(self) -> Result<Self> {
        if self.failed > 0 {
            Err(Error::Aborted {
                failed: self.failed,
                total: self.total,
            })
        } else {
            Ok(self)
        }
    }
}

fn prepare(runs: Vec<Labeled>, patch: &Patch, ov: &Overrides) -> Result<Vec<Labeled>> {
    runs.into_iter()
        .map(|r| {
            let mut config = patch.apply(&r.config)?;
            ov.apply(&mut config);
            config.validate()?;
            Ok(Labeled {
                label: r.label,
                config,
            })
        })
        .collect()
}

/// Runs every configuration; failures stay per run.
pub fn run_all(runs: &[Labeled]) -> Vec<std::result::Result<RunResult, kinwave::error::Error>> {
    runs.par_iter()
        .map(|r| kinwave::sim::run(r.config.clone()))
        .collect()
}

fn header(title: &str, runs: &[Labeled]) -> String {
    format!(
        "{title}\n{}",
        echo_configs(runs.iter().map(|r| (r.label.as_str(), r.config.to_toml())))
    )
}

fn error_text(e: &kinwave::error::Error) -> String {
    e.to_string().replace(['\n', ','], " ")
}

pub fn conditioning(study: &ConditioningStudy, out: &Path) -> Result<Report> {
    let rows = study.run()?;
    let mut csv = CsvOut::create(out.join("conditioning.csv"), &study.header())?;
    for r in &rows {
        csv.row(r)?;
    }
    Ok(Report {
        files: vec![csv.finish()?],
        failed: 0,
        total: rows.len(),
    })
}

pub fn symmetry_runs() -> Vec<Labeled> {
    [Scheme::Wb, Scheme::Ts]
        .into_iter()
        .flat_map(|s| {
            [SignalMode::Frozen, SignalMode::Dynamic]
                .into_iter()
                .map(move |m| Labeled {
                    label: format!("{s}-{s}_{}", mode_name(m)),
                    config: presets::symmetry(s, m),
                })
        })
        .collect()
}

fn mode_name(m: SignalMode) -> &'static str {
    match m {
        SignalMode::Frozen => "frozen",
        SignalMode::Dynamic => "dynamic",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryRow {
    pub label: String,
    pub scheme: String,
    pub signal: String,
    pub t_final: f64,
    pub steps: usize,
    pub converged: bool,
    pub delta_rho: f64,
    pub peak_rho: f64,
    pub mass_drift: f64,
    pub error: String,
}

pub fn symmetry_row(
    run: &Labeled,
    res: &std::result::Result<RunResult, kinwave::error::Error>,
) -> SymmetryRow {
    let mut row = SymmetryRow {
        label: run.label.clone(),
        scheme: format!("{}-{}", run.config.kinetic, run.config.parabolic),
        signal: mode_name(run.config.signal_mode).into(),
        t_final: f64::NAN,
        steps: 0,
        converged: false,
        delta_rho: f64::NAN,
        peak_rho: f64::NAN,
        mass_drift: f64::NAN,
        error: String::new(),
    };
    match res {
        Ok(r) => {
            let rho = r.state.density();
            let m0 = r.diagnostics.first().map_or(f64::NAN, |d| d.mass);
            row.t_final = r.t_final;
            row.steps = r.steps;
            row.converged = r.converged.unwrap_or(false);
            row.delta_rho = mirror_symmetry_error(&rho);
            row.peak_rho = rho.iter().copied().fold(0.0, f64::max);
            row.mass_drift = (r.state.mass() - m0).abs() / m0;
        }
        Err(e) => row.error = error_text(e),
    }
    row
}

pub fn symmetry(patch: &Patch, ov: &Overrides, out: &Path) -> Result<Report> {
    let runs = prepare(symmetry_runs(), patch, ov)?;
    let results = run_all(&runs);
    let head = header("symmetry test", &runs);
    let mut csv = CsvOut::create(out.join("symmetry.csv"), &head)?;
    let mut files = Vec::new();
    let mut failed = 0;
    for (run, res) in runs.iter().zip(&results) {
        csv.row(&symmetry_row(run, res))?;
        match res {
            Ok(r) => files.push(write_snapshots(
                out.join(format!("symmetry_{}.csv", run.label)),
                &header("symmetry test", std::slice::from_ref(run)),
                last(&r.snapshots),
            )?),
            Err(_) => failed += 1,
        }
    }
    files.insert(0, csv.finish()?);
    Ok(Report {
        files,
        failed,
        total: runs.len(),
    })
}

fn last(s: &[Snapshot]) -> &[Snapshot] {
    &s[s.len().saturating_sub(1)..]
}

pub fn wavespeed_runs() -> Vec<Labeled> {
    let pairs = [
        (Scheme::Wb, Scheme::Wb),
        (Scheme::Wb, Scheme::Ts),
        (Scheme::Ts, Scheme::Ts),
    ];
    [MdVariant::Md1, MdVariant::Md2]
        .into_iter()
        .flat_map(|md| {
            pairs.into_iter().map(move |(k, p)| Labeled {
                label: format!("{k}-{p}_{md}"),
                config: presets::wavespeed(k, p, md),
            })
        })
        .collect()
}

/// Velocity profile statistics over the cells with `ρ > 0.1 max ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateauStats {
    pub c_est: f64,
    /// `max |u - c_est|` over the plateau.
    pub ripple: f64,
    /// Largest jump of `u` between neighbouring plateau cells.
    pub max_jump: f64,
    pub width: f64,
}

pub fn plateau_stats(snap: &Snapshot) -> Option<PlateauStats> {
    let c = wave_speed_estimate(&snap.rho, &snap.u).ok()?;
    let cut = 0.1 * snap.rho.iter().copied().fold(0.0, f64::max);
    let idx: Vec<usize> = (0..snap.rho.len()).filter(|&j| snap.rho[j] > cut).collect();
    let ripple = idx
        .iter()
        .map(|&j| (snap.u[j] - c).abs())
        .fold(0.0, f64::max);
    let max_jump = idx
        .windows(2)
        .filter(|w| w[1] == w[0] + 1)
        .map(|w| (snap.u[w[1]] - snap.u[w[0]]).abs())
        .fold(0.0, f64::max);
    let width = match (idx.first(), idx.last()) {
        (Some(&a), Some(&b)) => snap.x[b] - snap.x[a],
        _ => 0.0,
    };
    Some(PlateauStats {
        c_est: c,
        ripple,
        max_jump,
        width,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WavespeedRow {
    pub label: String,
    pub kinetic: String,
    pub parabolic: String,
    pub md: String,
    pub t_final: f64,
    pub c_est: f64,
    pub peak_speed: f64,
    pub ripple: f64,
    pub max_jump: f64,
    pub plateau_width: f64,
    pub error: String,
}

pub fn wavespeed_row(
    run: &Labeled,
    res: &std::result::Result<RunResult, kinwave::error::Error>,
) -> WavespeedRow {
    let c = &run.config;
    let mut row = WavespeedRow {
        label: run.label.clone(),
        kinetic: c.kinetic.to_string(),
        parabolic: c.parabolic.to_string(),
        md: c.md.to_string(),
        t_final: f64::NAN,
        c_est: f64::NAN,
        peak_speed: f64::NAN,
        ripple: f64::NAN,
        max_jump: f64::NAN,
        plateau_width: f64::NAN,
        error: String::new(),
    };
    match res {
        Ok(r) => {
            row.t_final = r.t_final;
            row.peak_speed =
                peak_speed(&r.diagnostics, 0.5 * r.t_final, r.t_final).unwrap_or(f64::NAN);
            if let Some(p) = r.snapshots.last().and_then(plateau_stats) {
                row.c_est = p.c_est;
                row.ripple = p.ripple;
                row.max_jump = p.max_jump;
                row.plateau_width = p.width;
            }
        }
        Err(e) => row.error = error_text(e),
    }
    row
}

pub fn wavespeed(patch: &Patch, ov: &Overrides, out: &Path) -> Result<Report> {
    let runs = prepare(wavespeed_runs(), patch, ov)?;
    let results = run_all(&runs);
    let mut csv = CsvOut::create(
        out.join("wavespeed.csv"),
        &header("wave-speed comparison", &runs),
    )?;
    let mut files = Vec::new();
    let mut failed = 0;
    for (run, res) in runs.iter().zip(&results) {
        csv.row(&wavespeed_row(run, res))?;
        match res {
            Ok(r) => files.push(write_snapshots(
                out.join(format!("wavespeed_{}.csv", run.label)),
                &header("wave-speed comparison", std::slice::from_ref(run)),
                last(&r.snapshots),
            )?),
            Err(_) => failed += 1,
        }
    }
    files.insert(0, csv.finish()?);
    Ok(Report {
        files,
        failed,
        total: runs.len(),
    })
}

/// Long-time behaviour of one wave run.
#[derive(Debug, Clone, Serialize)]
pub struct SpeedSummary {
    pub label: String,
    pub v_min: f64,
    pub c0: f64,
    pub dx: f64,
    pub t_final: f64,
    pub c_start: f64,
    /// Mean of `c_est` over the final quarter of the run.
    pub c_final: f64,
    /// Fitted peak speed over the final quarter.
    pub peak_speed_final: f64,
    pub min_f: f64,
    pub error: String,
}

pub fn speed_summary(
    run: &Labeled,
    v_min: f64,
    c0: f64,
    res: &std::result::Result<RunResult, kinwave::error::Error>,
) -> SpeedSummary {
    let mut s = SpeedSummary {
        label: run.label.clone(),
        v_min,
        c0,
        dx: run.config.dx,
        t_final: f64::NAN,
        c_start: f64::NAN,
        c_final: f64::NAN,
        peak_speed_final: f64::NAN,
        min_f: f64::NAN,
        error: String::new(),
    };
    match res {
        Ok(r) => {
            let t = r.t_final;
            s.t_final = t;
            s.c_start = r.diagnostics.first().map_or(f64::NAN, |d| d.c_est);
            s.c_final = mean_speed(&r.diagnostics, 0.75 * t, t).unwrap_or(f64::NAN);
            s.peak_speed_final = peak_speed(&r.diagnostics, 0.75 * t, t).unwrap_or(f64::NAN);
            s.min_f = r.min_f;
        }
        Err(e) => s.error = error_text(e),
    }
    s
}

/// One diagnostics row tagged with its run. The csv writer cannot flatten
/// nested structs, so the fields are spelled out.
#[derive(Serialize)]
struct TraceRow<'a> {
    label: &'a str,
    c0: f64,
    t: f64,
    mass: f64,
    c_est: f64,
    peak_x: f64,
    peak_rho: f64,
    sym_err: f64,
    min_f: f64,
}

impl<'a> TraceRow<'a> {
    fn new(label: &'a str, c0: f64, d: &DiagRow) -> Self {
        Self {
            label,
            c0,
            t: d.t,
            mass: d.mass,
            c_est: d.c_est,
            peak_x: d.peak_x,
            peak_rho: d.peak_rho,
            sym_err: d.sym_err,
            min_f: d.min_f,
        }
    }
}

pub fn bistability_runs(seeds: &[f64]) -> Vec<Labeled> {
    seeds
        .iter()
        .map(|&c| Labeled {
            label: format!("c0={c}"),
            config: presets::bistability(c),
        })
        .collect()
}

fn seed_of(cfg: &SimConfig) -> f64 {
    match cfg.initial {
        kinwave::sim::InitialCondition::Wave { c, .. } => c,
        _ => f64::NAN,
    }
}

fn v_min_of(cfg: &SimConfig) -> f64 {
    match &cfg.grid {
        kinwave::sim::GridSpec::Explicit { speeds, .. } => {
            speeds.iter().copied().fold(f64::INFINITY, f64::min)
        }
        kinwave::sim::GridSpec::Gauss { .. } => f64::NAN,
    }
}

pub fn bistability(seeds: &[f64], patch: &Patch, ov: &Overrides, out: &Path) -> Result<Report> {
    let runs = prepare(bistability_runs(seeds), patch, ov)?;
    let results = run_all(&runs);
    let head = header("bistability", &runs);
    let mut trace = CsvOut::create(out.join("bistability_trace.csv"), &head)?;
    let mut summary = CsvOut::create(out.join("bistability.csv"), &head)?;
    let mut failed = 0;
    for (run, res) in runs.iter().zip(&results) {
        let c0 = seed_of(&run.config);
        summary.row(&speed_summary(run, v_min_of(&run.config), c0, res))?;
        match res {
            Ok(r) => {
                for d in &r.diagnostics {
                    trace.row(&TraceRow::new(&run.label, c0, d))?;
                }
            }
            Err(_) => failed += 1,
        }
    }
    Ok(Report {
        files: vec![summary.finish()?, trace.finish()?],
        failed,
        total: runs.len(),
    })
}

#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BifurcationSweep {
    pub v_min: Vec<f64>,
    pub scan_points: usize,
    /// Skip the Cauchy runs and report the roots of `Υ` only.
    pub analytic_only: bool,
    pub dx: f64,
    pub t_end: f64,
}

impl Default for BifurcationSweep {
    fn default() -> Self {
        Self {
            v_min: (1..=9).map(|i| i as f64 / 10.0).collect(),
            scan_points: 100,
            analytic_only: false,
            dx: 0.018,
            t_end: 30.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BifurcationRow {
    pub v_min: f64,
    /// `analytic` root of `Υ`, `jump` of `Υ` at a velocity, or `dynamic`
    /// speed of a run seeded at a root.
    pub source: String,
    pub seed: f64,
    pub c: f64,
    pub note: String,
}

pub fn bifurcation(
    sweep: &BifurcationSweep,
    patch: &Patch,
    ov: &Overrides,
    out: &Path,
) -> Result<Report> {
    let params = presets::wave_params();
    let opts = WaveOptions::default();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &v in &sweep.v_min {
        let grid = presets::four_speed_grid(v).build()?;
        match find_wave_speeds(&grid, &params, sweep.scan_points, &opts) {
            Ok(scan) => {
                if scan.roots.is_empty() {
                    rows.push(BifurcationRow {
                        v_min: v,
                        source: "analytic".into(),
                        seed: f64::NAN,
                        c: f64::NAN,
                        note: "no root: branch terminated".into(),
                    });
                }
                for r in &scan.roots {
                    rows.push(BifurcationRow {
                        v_min: v,
                        source: "analytic".into(),
                        seed: f64::NAN,
                        c: r.c,
                        note: format!("upsilon {:.2e}", r.upsilon),
                    });
                    runs.push(Labeled {
                        label: format!("vmin={v}_c0={:.5}", r.c),
                        config: presets::wave_run(v, r.c, sweep.dx, sweep.t_end),
                    });
                }
                for j in &scan.jumps {
                    rows.push(BifurcationRow {
                        v_min: v,
                        source: "jump".into(),
                        seed: f64::NAN,
                        c: j.at,
                        note: format!("size {:.4e}", j.size()),
                    });
                }
            }
            Err(e) => rows.push(BifurcationRow {
                v_min: v,
                source: "analytic".into(),
                seed: f64::NAN,
                c: f64::NAN,
                note: error_text(&e),
            }),
        }
    }
    let mut failed = 0;
    let runs = if sweep.analytic_only {
        Vec::new()
    } else {
        prepare(runs, patch, ov)?
    };
    let results = run_all(&runs);
    for (run, res) in runs.iter().zip(&results) {
        let s = speed_summary(run, v_min_of(&run.config), seed_of(&run.config), res);
        if res.is_err() {
            failed += 1;
        }
        rows.push(BifurcationRow {
            v_min: s.v_min,
            source: "dynamic".into(),
            seed: s.c0,
            c: s.c_final,
            note: s.error,
        });
    }
    let head = format!(
        "bifurcation sweep\n{}\n{}",
        toml::to_string(sweep).expect("sweep serializes"),
        echo_configs(runs.iter().map(|r| (r.label.as_str(), r.config.to_toml())))
    );
    let mut csv = CsvOut::create(out.join("bifurcation.csv"), &head)?;
    for r in &rows {
        csv.row(r)?;
    }
    Ok(Report {
        files: vec![csv.finish()?],
        failed,
        total: runs.len(),
    })
}

/// Single run from a full configuration file.
pub fn custom(cfg: SimConfig, ov: &Overrides, out: &Path) -> Result<Report> {
    let mut cfg = cfg;
    ov.apply(&mut cfg);
    cfg.validate()?;
    let head = cfg.to_toml();
    let r = kinwave::sim::run(cfg)?;
    Ok(Report {
        files: vec![
            write_diagnostics(out.join("diagnostics.csv"), &head, &r.diagnostics)?,
            write_snapshots(out.join("snapshots.csv"), &head, &r.snapshots)?,
        ],
        failed: 0,
        total: 1,
    })
}
