//! Base configurations of the five experiments.

use std::f64::consts::FRAC_PI_2;

use kinwave::model::ModelParams;
use kinwave::scattering::SMatrixVariant;
use kinwave::sim::{
    DtSpec, GridSpec, InitialCondition, MdVariant, NodeRates, NutrientInit, RhoTiming, Scheme,
    SignalInit, SignalMode, SimConfig,
};
use kinwave::waves::WaveOptions;

/// Aggregation model without nutrient.
pub fn aggregation_params() -> ModelParams {
    ModelParams {
        chi_m: 1.0,
        chi_n: 0.0,
        d_m: 1.0,
        d_n: 1.0,
        alpha: 1.0,
        beta: 1.0,
        gamma: 0.0,
        n_bar: 1.0,
    }
}

/// Parameters of the travelling-wave experiments.
pub fn wave_params() -> ModelParams {
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

/// `{-1, -v_min, v_min, 1}` with uniform weights.
pub fn four_speed_grid(v_min: f64) -> GridSpec {
    GridSpec::Explicit {
        speeds: vec![v_min, 1.0],
        weights: None,
    }
}

/// Symmetric aggregation run, `f⁰ = 10 exp(-x² - v²)`.
///
/// A frozen signal is a unit Gaussian, which puts the tumbling rate at
/// `1 + χ_M sgn(v x)`. TS runs evaluate MD-1 at `x_{j+1/2}` for node `j`
/// when the signal is dynamic.
pub fn symmetry(scheme: Scheme, mode: SignalMode) -> SimConfig {
    let signal = match mode {
        SignalMode::Dynamic => SignalInit::Zero,
        SignalMode::Frozen => SignalInit::Gaussian {
            amplitude: 1.0,
            rate: 1.0,
            center: 0.0,
        },
    };
    let (md, node_rates) = match (scheme, mode) {
        (Scheme::Wb, _) => (MdVariant::Md2, NodeRates::Centered),
        (Scheme::Ts, SignalMode::Frozen) => (MdVariant::Md1, NodeRates::Centered),
        (Scheme::Ts, SignalMode::Dynamic) => (MdVariant::Md1, NodeRates::Forward),
    };
    SimConfig {
        kinetic: scheme,
        parabolic: scheme,
        md,
        smatrix: SMatrixVariant::Case,
        grid: GridSpec::Gauss { k: 8 },
        domain: [-10.0, 10.0],
        dx: 0.01,
        dt: DtSpec::Auto,
        cfl: 0.9,
        t_end: 500.0,
        output_every: 2000,
        snapshot_every: 0,
        params: aggregation_params(),
        initial: InitialCondition::Gaussian {
            amplitude: 10.0,
            x_rate: 1.0,
            v_rate: 1.0,
            center: 0.0,
            signal,
            nutrient: NutrientInit::Constant { value: 0.0 },
        },
        density_scale: 1.0,
        rho_timing: RhoTiming::PreStep,
        signal_mode: mode,
        // The signal bound D/dx² would otherwise set dt for 500 time units.
        subcycle: true,
        steady_tol: Some(1e-10),
        node_rates,
    }
}

/// Pulse formation from `f⁰ = 3 exp(-2x²)` against a nutrient ramp.
pub fn wavespeed(kinetic: Scheme, parabolic: Scheme, md: MdVariant) -> SimConfig {
    let amplitude = 400.0;
    SimConfig {
        kinetic,
        parabolic,
        md,
        smatrix: SMatrixVariant::Case,
        grid: four_speed_grid(0.5),
        domain: [0.0, 100.0],
        dx: 0.05,
        dt: DtSpec::Auto,
        cfl: 0.9,
        t_end: 100.0,
        output_every: 1000,
        snapshot_every: 0,
        params: ModelParams {
            n_bar: amplitude * (FRAC_PI_2 + 1.0),
            ..wave_params()
        },
        initial: InitialCondition::Gaussian {
            amplitude: 3.0,
            x_rate: 2.0,
            v_rate: 0.0,
            center: 0.0,
            signal: SignalInit::Zero,
            nutrient: NutrientInit::Tanh {
                amplitude,
                offset: FRAC_PI_2,
                width: 3.0,
                shift: 3.0,
            },
        },
        density_scale: 1.0,
        rho_timing: RhoTiming::PreStep,
        signal_mode: SignalMode::Dynamic,
        subcycle: false,
        steady_tol: None,
        node_rates: NodeRates::Centered,
    }
}

/// Cauchy run started from the moving-frame profile at speed `c0`.
pub fn wave_run(v_min: f64, c0: f64, dx: f64, t_end: f64) -> SimConfig {
    SimConfig {
        kinetic: Scheme::Wb,
        parabolic: Scheme::Wb,
        md: MdVariant::Md2,
        smatrix: SMatrixVariant::Case,
        grid: four_speed_grid(v_min),
        domain: [0.0, 120.0],
        dx,
        dt: DtSpec::Auto,
        cfl: 0.9,
        t_end,
        output_every: 2000,
        snapshot_every: 0,
        params: wave_params(),
        initial: InitialCondition::Wave {
            c: c0,
            peak_position: 35.0,
            options: WaveOptions::default(),
        },
        density_scale: 1.0,
        rho_timing: RhoTiming::PreStep,
        signal_mode: SignalMode::Dynamic,
        subcycle: false,
        steady_tol: None,
        node_rates: NodeRates::Centered,
    }
}

pub const BISTABILITY_SEEDS: [f64; 4] = [0.214, 0.45, 0.55, 0.58];

pub fn bistability(c0: f64) -> SimConfig {
    wave_run(0.5, c0, 0.018, 120.0)
}
