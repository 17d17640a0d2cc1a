//! First-order spin-flip probability from the `sigma_z` part of the
//! carrier-rotated spin-dependent force.
//!
//! In the carrier interaction picture the force term splits into
//! `cos 2Phi sigma_x` (kept in the zero-order propagator) and
//! `V(t) = sum_im eta_im Omega c sin 2Phi (a_m e^{-i w_m t} + h.c.) sigma_z^i`.
//! `sigma_z^i` moves the x-basis string `s` to `s'` with ion `i` flipped, so
//! `P_flip^s = sum_i int int dt1 dt2 K_i(t1, t2)` with
//! `K_i(t1, t2) = <s,0| U0(t1)^+ V_i(t1) U0_{s'}(t1, t2) V_i(t2) U0(t2) |s,0>`.
//! Each sector propagator is `U0_s(t1, t2) = exp(-i [chi_s(t1) - chi_s(t2) +
//! Im(beta_s(t1) . beta_s(t2)*)]) D(beta_s(t1) - beta_s(t2))`, built from the
//! cumulative tables of [`Evolution`](super::Evolution).

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;

use super::displacement::linear_form_element;
use super::{Evolution, STRINGS};
use crate::ion_chain::ModeData;
use crate::pulse_basis::Pulse;
use crate::pulse_solver::{GateSpec, Quadrature};

/// Tolerance below which negative round-off results are clamped silently.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

const MAX_MODES: usize = 64;

/// Node tables for the double time integral.
#[derive(Debug, Clone)]
pub struct SpinFlipKernel<'a> {
    evo: &'a Evolution,
    /// `p_im(t_k) = eta_im Omega c sin 2Phi exp(-i w_m t_k)`, `[ion][node * n_modes + m]`;
    /// `V_i = sum_m p_im a_m + conj(p_im) a_m^+`.
    pub coupling: [Vec<Complex64>; 2],
}

struct Sector {
    beta: Vec<Complex64>,
    chi: Vec<f64>,
}

impl Sector {
    fn new(evo: &Evolution, s: [i8; 2]) -> Self {
        let c = evo.coupling(s);
        let n = evo.grid.len();
        let nm = evo.n_modes();
        let mut beta = Vec::with_capacity(n * nm);
        let mut chi = Vec::with_capacity(n);
        for k in 0..n {
            beta.extend(evo.beta_at(&c, k));
            chi.push(evo.chi_sector_at(&c, k));
        }
        Sector { beta, chi }
    }
}

impl<'a> SpinFlipKernel<'a> {
    pub fn new(evo: &'a Evolution) -> Self {
        let nm = evo.n_modes();
        assert!(nm <= MAX_MODES, "at most {MAX_MODES} modes supported");
        let coupling = [0, 1].map(|i| {
            let mut v = Vec::with_capacity(evo.grid.len() * nm);
            for (k, &t) in evo.grid.nodes.iter().enumerate() {
                let amp = evo.drive[k] * (2.0 * evo.phi[k]).sin();
                for m in 0..nm {
                    v.push(Complex64::from_polar(evo.eta[i][m] * amp, -evo.freqs[m] * t));
                }
            }
            v
        });
        SpinFlipKernel { evo, coupling }
    }

    /// Integrand `K_i(t_j, t_k)` for string `s` and flipped ion `i`.
    pub fn integrand(&self, s: [i8; 2], ion: usize, j: usize, k: usize) -> Complex64 {
        let source = Sector::new(self.evo, s);
        let target = Sector::new(self.evo, flipped(s, ion));
        self.integrand_with(&source, &target, ion, j, k)
    }

    fn integrand_with(&self, source: &Sector, target: &Sector, ion: usize, j: usize, k: usize) -> Complex64 {
        let nm = self.evo.n_modes();
        let x = &source.beta[j * nm..(j + 1) * nm];
        let z = &source.beta[k * nm..(k + 1) * nm];
        let b1 = &target.beta[j * nm..(j + 1) * nm];
        let b2 = &target.beta[k * nm..(k + 1) * nm];
        let mut y = [Complex64::new(0.0, 0.0); MAX_MODES];
        let y = &mut y[..nm];
        let mut cross = 0.0;
        for m in 0..nm {
            y[m] = b1[m] - b2[m];
            cross += (b1[m] * b2[m].conj()).im;
        }
        let p1 = &self.coupling[ion][j * nm..(j + 1) * nm];
        let p2 = &self.coupling[ion][k * nm..(k + 1) * nm];
        let mut q1 = [Complex64::new(0.0, 0.0); MAX_MODES];
        let mut q2 = [Complex64::new(0.0, 0.0); MAX_MODES];
        for m in 0..nm {
            q1[m] = p1[m].conj();
            q2[m] = p2[m].conj();
        }
        let phase = source.chi[j] - source.chi[k] - (target.chi[j] - target.chi[k] + cross);
        Complex64::from_polar(1.0, phase) * linear_form_element(p1, &q1[..nm], p2, &q2[..nm], x, y, z)
    }

    /// `P_flip^s` over the time-ordered half of the square; the other half is
    /// the complex conjugate.
    pub fn probability(&self, s: [i8; 2]) -> f64 {
        let n = self.evo.grid.len();
        let w = &self.evo.grid.weights;
        let source = Sector::new(self.evo, s);
        let mut total = 0.0;
        for ion in 0..2 {
            let target = Sector::new(self.evo, flipped(s, ion));
            let rows: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let mut acc = 0.5 * w[j] * w[j] * self.integrand_with(&source, &target, ion, j, j).re;
                    for k in 0..j {
                        acc += w[j] * w[k] * self.integrand_with(&source, &target, ion, j, k).re;
                    }
                    acc
                })
                .collect();
            total += 2.0 * rows.iter().sum::<f64>();
        }
        clamp_probability(total)
    }

    /// Same sum over the full square, without the symmetry shortcut.
    pub fn probability_full_square(&self, s: [i8; 2]) -> Complex64 {
        let n = self.evo.grid.len();
        let w = &self.evo.grid.weights;
        let source = Sector::new(self.evo, s);
        let mut total = Complex64::new(0.0, 0.0);
        for ion in 0..2 {
            let target = Sector::new(self.evo, flipped(s, ion));
            for j in 0..n {
                for k in 0..n {
                    total += self.integrand_with(&source, &target, ion, j, k) * (w[j] * w[k]);
                }
            }
        }
        total
    }
}

fn flipped(s: [i8; 2], ion: usize) -> [i8; 2] {
    let mut t = s;
    t[ion] = -t[ion];
    t
}

fn clamp_probability(p: f64) -> f64 {
    if p < 0.0 {
        if p < -NEGATIVE_CLAMP {
            warn!("negative spin-flip probability {p:e} clamped to zero");
        }
        0.0
    } else {
        p
    }
}

/// `P_flip` for all four strings in [`STRINGS`] order. The strings `s` and
/// `-s` are related by the phonon parity `a -> -a`, which leaves `|V|` and the
/// vacuum unchanged, so only two are integrated.
pub fn spin_flip_table(evo: &Evolution) -> [f64; 4] {
    let kernel = SpinFlipKernel::new(evo);
    let p_even = kernel.probability(STRINGS[0]);
    let p_odd = kernel.probability(STRINGS[1]);
    [p_even, p_odd, p_odd, p_even]
}

/// `P_flip^s` for the initial state `|s, 0_ph>`.
///
/// The integral is repeated on a grid with half the panel density; a change
/// above 10% is reported as a convergence warning.
pub fn spin_flip_probability(pulse: &Pulse, modes: &ModeData, gate: &GateSpec, quad: &Quadrature, s: [i8; 2]) -> f64 {
    let evo = Evolution::new(pulse, modes, gate, quad, true);
    let fine = SpinFlipKernel::new(&evo).probability(s);
    let coarse_quad = Quadrature {
        panels_per_period: 0.5 * quad.panels_per_period,
        ..*quad
    };
    let coarse_evo = Evolution::new(pulse, modes, gate, &coarse_quad, true);
    let coarse = SpinFlipKernel::new(&coarse_evo).probability(s);
    if (fine - coarse).abs() > 0.1 * fine.abs().max(1e-300) && fine > NEGATIVE_CLAMP {
        warn!("spin-flip integral not converged: {coarse:e} (coarse) vs {fine:e}");
    }
    fine
}
