use proptest::prelude::*;

use atomlens::classical::{self, thin_lens_kick};
use atomlens::mcwf::{self, collapse, TrajectoryState};
use atomlens::quantum::{self, QuantumOptions};
use atomlens::rng::Stream;
use atomlens::MaskParams;

fn quick() -> ProptestConfig {
    ProptestConfig { cases: 12, ..ProptestConfig::default() }
}

proptest! {
    #[test]
    fn kick_is_odd_in_position_and_detuning(x in -1.5f64..1.5, r in prop_oneof![-10.0f64..-0.01, 0.01f64..10.0]) {
        let k = thin_lens_kick(x, r).unwrap();
        prop_assert!((thin_lens_kick(-x, r).unwrap() + k).abs() <= 1e-12 * (1.0 + k.abs()));
        prop_assert!((thin_lens_kick(x, -r).unwrap() + k).abs() <= 1e-12 * (1.0 + k.abs()));
    }

    #[test]
    fn thin_localization_stays_in_range(r in prop_oneof![-5.0f64..-0.05, 0.05f64..5.0], tau in 0.0f64..20.0) {
        let ens = classical::thin_lens_ensemble(512, r).unwrap();
        let l = classical::thin_lens_localization(&ens, tau);
        prop_assert!((0.0..=2.0).contains(&l));
    }

    #[test]
    fn photon_sampler_is_monotone_and_bounded(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (vl, vh) = (mcwf::sample_photon_momentum(lo), mcwf::sample_photon_momentum(hi));
        prop_assert!((-1.0..=1.0).contains(&vl) && (-1.0..=1.0).contains(&vh));
        prop_assert!(vl <= vh + 1e-12);
    }
}

proptest! {
    #![proptest_config(quick())]

    #[test]
    fn collapse_leaves_unit_norm(k in -1.0f64..1.0, seed in 0u64..1000) {
        let p = MaskParams::new(1.92e5, 6e-4, -0.125, 238.0).unwrap();
        let mut traj = TrajectoryState::start(&p, 16, Stream::new(seed, 0));
        let state = quantum::evolve_modes(&traj.state, &p, 0.0, &QuantumOptions::default()).unwrap();
        traj.state = state;
        collapse(&mut traj, k).unwrap();
        prop_assert!((traj.state.norm() - 1.0).abs() < 1e-12);
        prop_assert!(traj.state.excited_population() == 0.0);
    }

    /// The plane-wave start is symmetric under `x -> -x` and so is the mask,
    /// hence the ladders stay mirror symmetric.
    #[test]
    fn coherent_evolution_preserves_parity(
        omega0 in 1e4f64..1e5,
        sigma_t in 1e-3f64..5e-3,
        r in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0],
    ) {
        let p = MaskParams::new(omega0, sigma_t, r, 0.0).unwrap();
        let s = quantum::evolve_modes(&quantum::init_uniform_ground(&p), &p, p.pulse_window().1, &QuantumOptions::default()).unwrap();
        prop_assert!(quantum::parity_defect(&s) < 1e-9, "defect {}", quantum::parity_defect(&s));
    }

    /// Without jumps the decaying wave function only loses norm.
    #[test]
    fn no_jump_norm_decreases(
        omega0 in 1e4f64..1e5,
        r in prop_oneof![-1.0f64..-0.1, 0.1f64..1.0],
        gamma in 10.0f64..500.0,
    ) {
        let p = MaskParams::new(omega0, 2e-3, r, gamma).unwrap();
        let (t_on, t_off) = p.pulse_window();
        let opts = QuantumOptions::default();
        let mut state = quantum::init_uniform_ground(&p);
        let mut last = state.norm();
        for i in 1..=8 {
            let t = t_on + (t_off - t_on) * i as f64 / 8.0;
            state = quantum::evolve_modes(&state, &p, t, &opts).unwrap();
            let n = state.norm();
            prop_assert!(n <= last + 1e-10, "norm rose from {last} to {n}");
            last = n;
        }
        prop_assert!(last < 1.0);
    }
}
