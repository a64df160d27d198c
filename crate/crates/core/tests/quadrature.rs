use kinwave::quadrature::{VelocityGrid, Weights};
use proptest::prelude::*;

#[test]
fn gauss_grids_are_normalized_and_antisymmetric() {
    for k in 1..=16 {
        let g = VelocityGrid::gauss_legendre(k).unwrap();
        let v = g.nodes();
        let w = g.weights();
        assert_eq!(v.len(), 2 * k);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14, "K = {k}");
        for i in 0..v.len() {
            assert_eq!(v[i].to_bits(), (-v[v.len() - 1 - i]).to_bits());
            assert_eq!(w[i].to_bits(), w[v.len() - 1 - i].to_bits());
        }
        assert!(v.windows(2).all(|p| p[0] < p[1]));
        assert!(g.v_min() > 0.0 && g.v_max() < 1.0);
    }
}

#[test]
fn gauss_minimum_speed_shrinks_with_k() {
    let mins: Vec<f64> = (1..=16)
        .map(|k| VelocityGrid::gauss_legendre(k).unwrap().v_min())
        .collect();
    assert!(mins.windows(2).all(|p| p[1] < p[0]));
}

proptest! {
    #[test]
    fn explicit_grids_are_normalized(
        raw in prop::collection::vec(0.01f64..1.0, 1..6),
        given in prop::collection::vec(0.1f64..2.0, 6),
    ) {
        let mut speeds = raw.clone();
        speeds.sort_by(f64::total_cmp);
        speeds.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let k = speeds.len();
        for weights in [Weights::Uniform, Weights::Given(given[..k].to_vec())] {
            let g = VelocityGrid::explicit_symmetric(&speeds, weights).unwrap();
            prop_assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let v = g.nodes();
            for i in 0..v.len() {
                prop_assert_eq!(v[i].to_bits(), (-v[v.len() - 1 - i]).to_bits());
            }
            // isotropic state: zero flux
            let f = vec![1.0; v.len()];
            let (rho, flux) = g.moments(&f);
            prop_assert!((rho - 1.0).abs() < 1e-14);
            prop_assert!(flux.abs() < 1e-15);
        }
    }
}
