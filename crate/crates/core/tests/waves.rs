use kinwave::model::ModelParams;
use kinwave::quadrature::{VelocityGrid, Weights};
use kinwave::waves::{
    critical_speeds, decay_rates, upsilon, QuadrantRates, WaveOptions, WaveProfile,
};
use proptest::prelude::*;

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

fn four_speeds() -> VelocityGrid {
    VelocityGrid::explicit_symmetric(&[0.5, 1.0], Weights::Uniform).unwrap()
}

/// Least-squares slope of `ln ρ` against `z` on one side of the peak,
/// where `ρ` lies between 1e-3 and 1e-1 of its maximum. Further out the
/// truncation leaves a floor of relative size `e^{-λ L}`.
fn log_slope(w: &WaveProfile, right: bool) -> f64 {
    let p = &w.profile;
    let peak = p.rho.iter().copied().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = (0..p.rho.len())
        .map(|i| (p.z(i), p.rho[i] / peak))
        .filter(|&(z, r)| (z > 0.0) == right && (1e-3..1e-1).contains(&r))
        .map(|(z, r)| (z, r.ln()))
        .collect();
    let n = pts.len() as f64;
    let mz = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let szz: f64 = pts.iter().map(|p| (p.0 - mz).powi(2)).sum();
    let szl: f64 = pts.iter().map(|p| (p.0 - mz) * (p.1 - ml)).sum();
    szl / szz
}

#[test]
fn tail_slopes_match_decay_rates() {
    let g = four_speeds();
    for c in [0.2115, 0.3, 0.45, 0.5723] {
        let w = WaveProfile::compute(c, &g, &params(), &WaveOptions::default()).unwrap();
        let left = log_slope(&w, false);
        let right = -log_slope(&w, true);
        let d = &w.decay;
        assert!(
            (left / d.lambda_minus - 1.0).abs() < 0.02,
            "c={c}: {left} vs {}",
            d.lambda_minus
        );
        assert!(
            (right / d.lambda_plus - 1.0).abs() < 0.02,
            "c={c}: {right} vs {}",
            d.lambda_plus
        );
    }
}

#[test]
fn upsilon_scales_with_mass() {
    let g = four_speeds();
    let p = params();
    for c in [0.25, 0.45, 0.55] {
        let one = upsilon(c, &g, &p, &WaveOptions::default()).unwrap();
        let three = upsilon(
            c,
            &g,
            &p,
            &WaveOptions {
                mass: 3.0,
                ..WaveOptions::default()
            },
        )
        .unwrap();
        assert!(
            (three - 3.0 * one).abs() <= 1e-10 * one.abs().max(1e-12),
            "c={c}: {one} {three}"
        );
    }
}

#[test]
fn profile_is_nonnegative_with_unit_mass() {
    let g = four_speeds();
    let w = WaveProfile::compute(0.55, &g, &params(), &WaveOptions::default()).unwrap();
    let p = &w.profile;
    assert!(p.f.iter().all(|&x| x >= 0.0));
    assert!((p.rho.iter().sum::<f64>() * p.dz - 1.0).abs() < 1e-12);
    assert!(w.n.iter().all(|&x| (-1e-10..=1.0 + 1e-10).contains(&x)));
    assert!(w.m_tilde.iter().all(|&x| x >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_stream_closed_forms(chi_m in 0.01f64..0.49, frac in 0.0f64..0.99) {
        // λ_+ at c = 0 needs c_* < 0, i.e. χ_N < χ_M
        let chi_n = frac * chi_m;
        let g = VelocityGrid::explicit_symmetric(&[1.0], Weights::Uniform).unwrap();
        let crit = critical_speeds(&g, chi_m, chi_n).unwrap();
        prop_assert!((crit.upper - (chi_m + chi_n)).abs() < 1e-10);
        prop_assert!((crit.lower - (chi_n - chi_m)).abs() < 1e-10);
        let d = decay_rates(0.0, &g, &QuadrantRates::new(chi_m, chi_n)).unwrap();
        prop_assert!((d.lambda_plus - (chi_m - chi_n)).abs() < 1e-10);
        prop_assert!((d.lambda_minus - (chi_m + chi_n)).abs() < 1e-10);
    }
}
