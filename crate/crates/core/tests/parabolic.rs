use kinwave::model::ModelParams;
use kinwave::parabolic::{
    lspline_max_dt, ts_positivity_max_dt, ts_step_diffusion, Boundary, LsplineOperator, Placement,
};
use proptest::prelude::*;

/// Exact steady state of `D u'' = p u - q` with `p`, `q` constant per
/// interval, `u(0) = u0`, `u'(0) = 0`, shot across the intervals.
fn shoot(p: &[f64], q: &[f64], d: f64, dx: f64, u0: f64) -> Vec<f64> {
    let mut u = vec![u0];
    let (mut a, mut s) = (u0, 0.0);
    for (&pi, &qi) in p.iter().zip(q) {
        let r = (pi / d).sqrt();
        let base = qi / pi;
        let (c, sh) = ((r * dx).cosh(), (r * dx).sinh());
        let next = base + (a - base) * c + s * sh / r;
        s = (a - base) * r * sh + s * c;
        a = next;
        u.push(a);
    }
    u
}

fn params() -> ModelParams {
    ModelParams {
        chi_m: 0.48,
        chi_n: 0.44,
        d_m: 0.5,
        d_n: 1.0,
        alpha: 40.0,
        beta: 1.0,
        gamma: 1.0,
        n_bar: 3.0,
    }
}

proptest! {
    #[test]
    fn lspline_is_exact_on_piecewise_steady_states(
        p in prop::collection::vec(0.01f64..30.0, 12),
        q in prop::collection::vec(0.0f64..5.0, 12),
        d in 0.2f64..2.0,
        u0 in 0.1f64..3.0,
    ) {
        let dx = 0.1;
        let u = shoot(&p, &q, d, dx, u0);
        let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let op = LsplineOperator::new(&p, &q, d, dx, Boundary::Dirichlet(u[u.len() - 1])).unwrap();
        let dt = op.max_dt();
        let next = op.step(&u, dt).unwrap();
        for (a, b) in next.iter().zip(&u) {
            prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn nutrient_stays_between_zero_and_wall_value(
        rho in prop::collection::vec(0.0f64..50.0, 40),
        n0 in prop::collection::vec(0.0f64..1.0, 41),
        frac in 0.1f64..1.0,
    ) {
        let p = params();
        let dx = 0.05;
        let mut n: Vec<f64> = n0.iter().map(|x| x * p.n_bar).collect();
        let op = LsplineOperator::nutrient(&rho, &p, dx).unwrap();
        for _ in 0..50 {
            n = op.step(&n, frac * op.max_dt()).unwrap();
            prop_assert!(n.iter().all(|&x| (0.0..=p.n_bar).contains(&x)));
        }
    }

    #[test]
    fn signal_stays_nonnegative(
        rho in prop::collection::vec(0.0f64..50.0, 40),
        m0 in prop::collection::vec(0.0f64..2.0, 41),
        frac in 0.1f64..1.0,
    ) {
        let p = params();
        let op = LsplineOperator::signal(&rho, &p, 0.05).unwrap();
        let mut m = m0;
        for _ in 0..50 {
            m = op.step(&m, frac * op.max_dt()).unwrap();
            prop_assert!(m.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn lspline_reaches_constant_signal_equilibrium() {
    let p = params();
    let rho = vec![2.0; 30];
    let op = LsplineOperator::signal(&rho, &p, 0.1).unwrap();
    let target = p.beta * 2.0 / p.alpha;
    let mut m = vec![0.0; 31];
    m = op
        .advance(&m, 5.0, (5.0 / op.max_dt()).ceil() as usize)
        .unwrap();
    for x in &m {
        assert!((x - target).abs() < 1e-12);
    }
    // and stays there
    let again = op.step(&m, op.max_dt()).unwrap();
    for (a, b) in again.iter().zip(&m) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn lspline_bound_allows_larger_steps_than_three_point() {
    let p = vec![40.0; 50];
    let l = lspline_max_dt(&p, 0.5, 0.05, Boundary::Neumann);
    let t = ts_positivity_max_dt(
        &vec![40.0; 51],
        0.5,
        0.05,
        Boundary::Neumann,
        Placement::HalfCell,
    );
    assert!(l > t);
}

#[test]
fn three_point_keeps_linear_profiles() {
    // u = x on nodes at the walls with u'' = 0 and no reaction
    let dx = 0.1;
    let u: Vec<f64> = (0..11).map(|j| j as f64 * dx).collect();
    let zero = vec![0.0; 11];
    let next = ts_step_diffusion(
        &u,
        &zero,
        &zero,
        1.0,
        0.004,
        dx,
        Boundary::Dirichlet(1.0),
        Placement::OnWall,
    )
    .unwrap();
    for j in 1..11 {
        assert!((next[j] - u[j]).abs() < 1e-14);
    }
    assert!(ts_step_diffusion(
        &u,
        &zero,
        &zero,
        1.0,
        0.006,
        dx,
        Boundary::Neumann,
        Placement::OnWall
    )
    .is_err());
}
