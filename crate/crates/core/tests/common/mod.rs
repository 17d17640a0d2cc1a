//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use msgate::ion_chain::ModeData;
use msgate::pulse_basis::{Pulse, SplineBasis};
use msgate::pulse_solver::GateSpec;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Two-mode, two-ion synthetic chain.
pub fn two_mode_chain() -> ModeData {
    ModeData::synthetic(
        vec![2.0 * PI * 0.92e6, 2.0 * PI * 1.0e6],
        [vec![0.09, -0.06], vec![0.05, 0.1]],
    )
}

pub fn smooth_pulse(gate: &GateSpec, peak: f64) -> Pulse {
    let basis = SplineBasis::new(gate.t0, gate.tf, 6).unwrap();
    Pulse::linear(basis, [0.2, 0.7, 1.0, 0.9, 0.5, 0.15].iter().map(|x| x * peak).collect())
}

/// Fock space of all modes with one cutoff, last mode fastest.
struct Fock {
    cutoff: usize,
    n_modes: usize,
}

impl Fock {
    fn dim(&self) -> usize {
        self.cutoff.pow(self.n_modes as u32)
    }

    fn occupation(&self, k: usize, m: usize) -> usize {
        (k / self.cutoff.pow((self.n_modes - 1 - m) as u32)) % self.cutoff
    }

    /// `out += sum_m c_m (a_m e^{-i w_m t} + a_m^+ e^{i w_m t}) v`.
    fn quadrature(&self, c: &[f64], freqs: &[f64], t: f64, v: &[Complex64], out: &mut [Complex64]) {
        for m in 0..self.n_modes {
            let stride = self.cutoff.pow((self.n_modes - 1 - m) as u32);
            let ph = Complex64::from_polar(c[m], -freqs[m] * t);
            for k in 0..self.dim() {
                let n = self.occupation(k, m);
                if n + 1 < self.cutoff {
                    let amp = ((n + 1) as f64).sqrt();
                    out[k] += ph * amp * v[k + stride];
                    out[k + stride] += ph.conj() * amp * v[k];
                }
            }
        }
    }
}

/// First-order spin-flip probability of `|s, 0>` from direct integration of
/// the sector equations
///
/// `i d psi0/dt = H_s psi0`, `i d psi1_i/dt = H_{s^(i)} psi1_i + V_i psi0`
///
/// with `H_s = Omega c cos 2Phi sum_m (s . eta_m) x_m(t)`,
/// `V_i = Omega c sin 2Phi sum_m eta_im x_m(t)` and `dPhi/dt = Omega c`, by
/// classical RK4.
pub fn flip_probability_ode(modes: &ModeData, pulse: &Pulse, gate: &GateSpec, s: [i8; 2], cutoff: usize, steps: usize) -> f64 {
    let fock = Fock {
        cutoff,
        n_modes: modes.n_modes(),
    };
    let dim = fock.dim();
    let freqs = modes.gate_freqs().to_vec();
    let eta = &modes.lamb_dicke_pair;
    let coupling = |s: [i8; 2]| -> Vec<f64> {
        (0..fock.n_modes).map(|m| s[0] as f64 * eta[0][m] + s[1] as f64 * eta[1][m]).collect()
    };
    let flipped = |i: usize| {
        let mut f = s;
        f[i] = -f[i];
        f
    };
    let c_s = coupling(s);
    let c_f = [coupling(flipped(0)), coupling(flipped(1))];
    // y = [psi0, psi1_0, psi1_1], phi
    let rhs = |t: f64, y: &[Complex64], phi: f64| -> (Vec<Complex64>, f64) {
        let omega = pulse.value(t) * gate.drive(t);
        let (sin2, cos2) = (2.0 * phi).sin_cos();
        let mut d = vec![ZERO; 3 * dim];
        let scale = |c: &[f64], f: f64| -> Vec<f64> { c.iter().map(|x| x * f).collect() };
        let (psi0, rest) = y.split_at(dim);
        let mut h = vec![ZERO; dim];
        fock.quadrature(&scale(&c_s, omega * cos2), &freqs, t, psi0, &mut h);
        d[..dim].copy_from_slice(&h);
        for i in 0..2 {
            let mut h = vec![ZERO; dim];
            fock.quadrature(&scale(&c_f[i], omega * cos2), &freqs, t, &rest[i * dim..(i + 1) * dim], &mut h);
            fock.quadrature(&scale(&eta[i], omega * sin2), &freqs, t, psi0, &mut h);
            d[(i + 1) * dim..(i + 2) * dim].copy_from_slice(&h);
        }
        let mi = Complex64::new(0.0, -1.0);
        d.iter_mut().for_each(|z| *z *= mi);
        (d, omega)
    };
    let mut y = vec![ZERO; 3 * dim];
    y[0] = Complex64::new(1.0, 0.0);
    let mut phi = 0.0;
    let h = (gate.tf - gate.t0) / steps as f64;
    let axpy = |y: &[Complex64], k: &[Complex64], f: f64| -> Vec<Complex64> { y.iter().zip(k).map(|(a, b)| a + b * f).collect() };
    for n in 0..steps {
        let t = gate.t0 + n as f64 * h;
        let (k1, p1) = rhs(t, &y, phi);
        let (k2, p2) = rhs(t + 0.5 * h, &axpy(&y, &k1, 0.5 * h), phi + 0.5 * h * p1);
        let (k3, p3) = rhs(t + 0.5 * h, &axpy(&y, &k2, 0.5 * h), phi + 0.5 * h * p2);
        let (k4, p4) = rhs(t + h, &axpy(&y, &k3, h), phi + h * p3);
        for j in 0..y.len() {
            y[j] += (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0);
        }
        phi += h / 6.0 * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
    }
    y[dim..].iter().map(|z| z.norm_sqr()).sum()
}

/// Single-mode lowering operator on `cutoff` Fock states.
pub fn lowering(cutoff: usize) -> nalgebra::DMatrix<Complex64> {
    nalgebra::DMatrix::from_fn(cutoff, cutoff, |i, j| {
        if j == i + 1 {
            Complex64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

/// `D(alpha)` on `cutoff` Fock states, exponentiated in a space larger by
/// `pad` and then cut back.
pub fn displacement(alpha: Complex64, cutoff: usize, pad: usize) -> nalgebra::DMatrix<Complex64> {
    let a = lowering(cutoff + pad);
    let generator = a.adjoint() * alpha - &a * alpha.conj();
    generator.exp().view((0, 0), (cutoff, cutoff)).into_owned()
}

/// Paper chain config shipped with the repository.
pub fn five_ion_config() -> msgate::config::RunConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/five_ion.toml");
    msgate::config::RunConfig::load(&path).expect("five_ion.toml loads")
}
