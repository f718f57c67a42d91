use proptest::prelude::*;

use stochbloch::correlation::{Spin, TauGrid};
use stochbloch::liouville::{
    build_liouvillian, propagate_density, pseudospin, qrt_correlation, steady_state, superbraket, vectorize,
};
use stochbloch::params::SystemParams;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    /// ⟨δσ₊(τ)δσ₋(0)⟩ equals the conjugate of ⟨δσ₊(0)δσ₋(τ)⟩ built from ρσ₊.
    #[test]
    fn plus_minus_is_conjugate_of_adjoint_ordering(
        t1 in 100.0f64..1000.0,
        ratio in 1.0f64..4.0,
        rabi in 0.0f64..60.0,
        det in -60.0f64..60.0,
    ) {
        let p = SystemParams::new(rabi, det, t1, ratio * t1).unwrap();
        let l = build_liouvillian(&p);
        let ss = steady_state(&l).unwrap();
        let grid = TauGrid::new(t1 / 50.0, 400).unwrap();
        let c = qrt_correlation(&l, &ss, &grid).unwrap();

        let start = vectorize(&(ss.density_matrix() * pseudospin(Spin::Plus)));
        let bra = vectorize(&pseudospin(Spin::Minus).adjoint());
        let traj = propagate_density(&l, &start, &grid).unwrap();
        let means = ss.mean(Spin::Plus) * ss.mean(Spin::Minus);
        for (m, v) in traj.iter().enumerate() {
            let reversed = superbraket(&bra, v) - means;
            let forward = c.values[m][(Spin::Plus.index(), Spin::Minus.index())];
            prop_assert!((forward - reversed.conj()).norm() <= 1e-12, "tau index {}: {} vs {}", m, forward, reversed.conj());
        }
    }
}
