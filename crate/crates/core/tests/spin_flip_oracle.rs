mod common;

use std::f64::consts::PI;

use msgate::gate_analytics::{spin_flip_probability, Evolution, SpinFlipKernel, STRINGS};
use msgate::pulse_solver::{GateSpec, Quadrature};

#[test]
fn matches_direct_sector_integration() {
    let modes = common::two_mode_chain();
    let gate = GateSpec::new(2.0 * PI * 1.04e6, 0.1, PI / 4.0, 0.0, 12e-6);
    let pulse = common::smooth_pulse(&gate, 3.0e6);
    for s in STRINGS {
        let ours = spin_flip_probability(&pulse, &modes, &gate, &Quadrature::default(), s);
        let oracle = common::flip_probability_ode(&modes, &pulse, &gate, s, 10, 24_000);
        let tol = (0.01 * oracle).max(1e-8);
        assert!((ours - oracle).abs() < tol, "{s:?}: {ours:e} vs {oracle:e}");
    }
}

#[test]
fn half_square_equals_full_square_and_parity_holds() {
    let modes = common::two_mode_chain();
    let gate = GateSpec::new(2.0 * PI * 1.04e6, 0.0, PI / 4.0, 0.0, 9e-6);
    let pulse = common::smooth_pulse(&gate, 2.5e6);
    let evo = Evolution::new(&pulse, &modes, &gate, &Quadrature::default(), true);
    let kernel = SpinFlipKernel::new(&evo);
    for s in STRINGS {
        let half = kernel.probability(s);
        let full = kernel.probability_full_square(s);
        assert!((half - full.re).abs() < 1e-9 * half, "{half:e} {full:e}");
        assert!(full.im.abs() < 1e-9 * half);
        let neg = kernel.probability([-s[0], -s[1]]);
        assert!((half - neg).abs() < 1e-12 * half);
    }
}
