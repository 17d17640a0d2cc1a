//! Closed-form propagator quantities of the spin-dependent force with and
//! without the carrier term, and the fidelity expressions built from them.

pub mod displacement;
pub mod spin_flip;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ion_chain::ModeData;
use crate::pulse_basis::Pulse;
use crate::pulse_solver::{GateSpec, Quadrature};
use crate::quadrature::{GaussLegendre, TimeGrid};

pub use spin_flip::{spin_flip_probability, spin_flip_table, SpinFlipKernel};

/// The x-basis strings `(s1, s2)` in reporting order.
pub const STRINGS: [[i8; 2]; 4] = [[1, 1], [1, -1], [-1, 1], [-1, -1]];

pub fn string_label(s: [i8; 2]) -> String {
    let tag = |x: i8| if x > 0 { "1" } else { "-1" };
    format!("|{},{}>_x", tag(s[0]), tag(s[1]))
}

/// Node tables of one gate evolution on the quadrature grid.
///
/// With `h_m(t) = exp(i w_m t) Omega(t) cos(mu t + psi) [cos 2 Phi(t)]`:
/// `alpha_im(t) = eta_im g_m(t)`, `g_m = -i int h_m`, and the spin phases are
/// `chi_ij = 2 sum_m eta_im eta_jm G_m` with `G_m = int Re(g_m conj(h_m))`.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub grid: TimeGrid,
    pub freqs: Vec<f64>,
    pub eta: [Vec<f64>; 2],
    pub carrier_on: bool,
    /// `Omega(t) cos(mu t + psi)` at the nodes.
    pub drive: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_final: f64,
    /// `h_m` as `[mode][node]`.
    pub force: Vec<Vec<Complex64>>,
    pub g: Vec<Vec<Complex64>>,
    pub g_final: Vec<Complex64>,
    pub phase: Vec<Vec<f64>>,
    pub phase_final: Vec<f64>,
}

impl Evolution {
    pub fn new(pulse: &Pulse, modes: &ModeData, gate: &GateSpec, quad: &Quadrature, carrier_on: bool) -> Self {
        let grid = quad.grid(gate);
        Self::on_grid(grid, pulse, modes, gate, carrier_on)
    }

    pub fn on_grid(grid: TimeGrid, pulse: &Pulse, modes: &ModeData, gate: &GateSpec, carrier_on: bool) -> Self {
        let drive: Vec<f64> = grid.nodes.iter().map(|&t| pulse.value(t) * gate.drive(t)).collect();
        let (phi, phi_final) = grid.cumulative(&drive);
        let envelope: Vec<f64> = if carrier_on {
            drive.iter().zip(&phi).map(|(d, p)| d * (2.0 * p).cos()).collect()
        } else {
            drive.clone()
        };
        let freqs = modes.gate_freqs().to_vec();
        let mut force = Vec::with_capacity(freqs.len());
        let mut g = Vec::with_capacity(freqs.len());
        let mut g_final = Vec::with_capacity(freqs.len());
        let mut phase = Vec::with_capacity(freqs.len());
        let mut phase_final = Vec::with_capacity(freqs.len());
        for &w in &freqs {
            let h: Vec<Complex64> = grid
                .nodes
                .iter()
                .zip(&envelope)
                .map(|(&t, &e)| Complex64::from_polar(e, w * t))
                .collect();
            let (cum, total) = grid.cumulative(&h);
            let gm: Vec<Complex64> = cum.iter().map(|c| Complex64::new(c.im, -c.re)).collect();
            let integrand: Vec<f64> = gm.iter().zip(&h).map(|(a, b)| (a * b.conj()).re).collect();
            let (pm, pm_final) = grid.cumulative(&integrand);
            force.push(h);
            g.push(gm);
            g_final.push(Complex64::new(total.im, -total.re));
            phase.push(pm);
            phase_final.push(pm_final);
        }
        let eta = [modes.lamb_dicke_pair[0].clone(), modes.lamb_dicke_pair[1].clone()];
        Evolution {
            grid,
            freqs,
            eta,
            carrier_on,
            drive,
            phi,
            phi_final,
            force,
            g,
            g_final,
            phase,
            phase_final,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.freqs.len()
    }

    /// `alpha_im(t_f, t_0)`.
    pub fn alpha_final(&self) -> [Vec<Complex64>; 2] {
        [0, 1].map(|i| self.g_final.iter().zip(&self.eta[i]).map(|(g, e)| g * *e).collect())
    }

    pub fn chi_ij_final(&self, i: usize, j: usize) -> f64 {
        2.0 * self
            .phase_final
            .iter()
            .enumerate()
            .map(|(m, p)| self.eta[i][m] * self.eta[j][m] * p)
            .sum::<f64>()
    }

    pub fn chi12_final(&self) -> f64 {
        self.chi_ij_final(0, 1)
    }

    /// `eta_m . s` for every mode.
    pub fn coupling(&self, s: [i8; 2]) -> Vec<f64> {
        (0..self.n_modes())
            .map(|m| s[0] as f64 * self.eta[0][m] + s[1] as f64 * self.eta[1][m])
            .collect()
    }

    /// Sector displacement `beta_s(t_k) = sum_i s_i alpha_i(t_k)` at node `k`.
    pub fn beta_at(&self, coupling: &[f64], k: usize) -> Vec<Complex64> {
        coupling.iter().zip(&self.g).map(|(c, g)| g[k] * *c).collect()
    }

    pub fn beta_final(&self, s: [i8; 2]) -> Vec<Complex64> {
        self.coupling(s).iter().zip(&self.g_final).map(|(c, g)| g * *c).collect()
    }

    /// Sector phase `chi_s(t_k) = 1/2 sum_ij chi_ij s_i s_j` at node `k`.
    pub fn chi_sector_at(&self, coupling: &[f64], k: usize) -> f64 {
        coupling.iter().zip(&self.phase).map(|(c, p)| c * c * p[k]).sum()
    }

    pub fn record(&self) -> TrajectoryRecord {
        let n = self.grid.len();
        let mut times = Vec::with_capacity(n + 2);
        let mut alpha = Vec::with_capacity(n + 2);
        let mut chi12 = Vec::with_capacity(n + 2);
        let mut phi = Vec::with_capacity(n + 2);
        let zero = vec![Complex64::new(0.0, 0.0); self.n_modes()];
        times.push(self.grid.t0);
        alpha.push([zero.clone(), zero]);
        chi12.push(0.0);
        phi.push(0.0);
        let pair: Vec<f64> = (0..self.n_modes()).map(|m| 2.0 * self.eta[0][m] * self.eta[1][m]).collect();
        for k in 0..n {
            times.push(self.grid.nodes[k]);
            alpha.push([0, 1].map(|i| self.g.iter().zip(&self.eta[i]).map(|(g, e)| g[k] * *e).collect()));
            chi12.push(pair.iter().zip(&self.phase).map(|(w, p)| w * p[k]).sum());
            phi.push(self.phi[k]);
        }
        times.push(self.grid.tf);
        alpha.push(self.alpha_final());
        chi12.push(self.chi12_final());
        phi.push(self.phi_final);
        TrajectoryRecord {
            times,
            alpha,
            chi12,
            phi_carrier: phi,
            carrier_on: self.carrier_on,
        }
    }
}

/// Phase-space trajectories and spin phase sampled on `[t0, nodes.., tf]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `alpha[k][i][m] = alpha_im(t_k, t_0)`
    pub alpha: Vec<[Vec<Complex64>; 2]>,
    pub chi12: Vec<f64>,
    pub phi_carrier: Vec<f64>,
    pub carrier_on: bool,
}

impl TrajectoryRecord {
    pub fn final_alpha(&self) -> &[Vec<Complex64>; 2] {
        self.alpha.last().expect("non-empty record")
    }

    pub fn final_chi12(&self) -> f64 {
        *self.chi12.last().expect("non-empty record")
    }
}

/// `Phi(t) = int_{t0}^t Omega cos(mu t' + psi) dt'` at arbitrary times in the
/// gate interval (clamped).
pub fn carrier_phase(pulse: &Pulse, gate: &GateSpec, quad: &Quadrature, times: &[f64]) -> Vec<f64> {
    let grid = quad.grid(gate);
    let integrand = |t: f64| pulse.value(t) * gate.drive(t);
    let values: Vec<f64> = grid.nodes.iter().map(|&t| integrand(t)).collect();
    let width = grid.panel_width();
    let mut panel_start = Vec::with_capacity(grid.n_panels + 1);
    let mut acc = 0.0;
    panel_start.push(0.0);
    for chunk in values.chunks(grid.order).zip(grid.weights.chunks(grid.order)) {
        acc += chunk.0.iter().zip(chunk.1).map(|(v, w)| v * w).sum::<f64>();
        panel_start.push(acc);
    }
    let rule = GaussLegendre::new(grid.order);
    times
        .iter()
        .map(|&t| {
            let t = t.clamp(grid.t0, grid.tf);
            let k = (((t - grid.t0) / width) as usize).min(grid.n_panels - 1);
            let a = grid.t0 + k as f64 * width;
            let half = 0.5 * (t - a);
            let partial: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&x, &w)| w * half * integrand(a + half * (x + 1.0)))
                .sum();
            panel_start[k] + partial
        })
        .collect()
}

/// `f_im(t)` (carrier on) or `f0_im(t)`, as `[ion][mode][time]`.
pub fn forces(
    pulse: &Pulse,
    modes: &ModeData,
    gate: &GateSpec,
    quad: &Quadrature,
    carrier_on: bool,
    times: &[f64],
) -> [Vec<Vec<Complex64>>; 2] {
    let phi = if carrier_on {
        carrier_phase(pulse, gate, quad, times)
    } else {
        vec![0.0; times.len()]
    };
    let envelope: Vec<f64> = times
        .iter()
        .zip(&phi)
        .map(|(&t, p)| pulse.value(t) * gate.drive(t) * (2.0 * p).cos())
        .collect();
    [0, 1].map(|i| {
        modes
            .gate_freqs()
            .iter()
            .zip(&modes.lamb_dicke_pair[i])
            .map(|(&w, &eta)| {
                times
                    .iter()
                    .zip(&envelope)
                    .map(|(&t, &e)| Complex64::from_polar(eta * e, w * t))
                    .collect()
            })
            .collect()
    })
}

pub fn trajectories(pulse: &Pulse, modes: &ModeData, gate: &GateSpec, quad: &Quadrature, carrier_on: bool) -> TrajectoryRecord {
    Evolution::new(pulse, modes, gate, quad, carrier_on).record()
}

/// `1 - F0` for a z-basis string: `sum |alpha_im|^2 + dchi^2`.
pub fn infidelity_z(alpha: &[Vec<Complex64>; 2], chi_error: f64) -> f64 {
    alpha.iter().flatten().map(|a| a.norm_sqr()).sum::<f64>() + chi_error * chi_error
}

/// `P_ph^s = sum_m |sum_i alpha_im s_i|^2`.
pub fn infidelity_x(alpha: &[Vec<Complex64>; 2], s: [i8; 2]) -> f64 {
    alpha[0]
        .iter()
        .zip(&alpha[1])
        .map(|(a1, a2)| (a1 * s[0] as f64 + a2 * s[1] as f64).norm_sqr())
        .sum()
}

/// `1 - F0` for `sum_s c_s |s>_x` (coefficients in [`STRINGS`] order,
/// normalized internally).
pub fn infidelity_superposition(alpha: &[Vec<Complex64>; 2], chi_error: f64, coefficients: &[Complex64; 4]) -> f64 {
    let norm: f64 = coefficients.iter().map(|c| c.norm_sqr()).sum();
    if norm == 0.0 {
        return 0.0;
    }
    let mut phonon = 0.0;
    let mut mean = 0.0;
    let mut second = 0.0;
    for (s, c) in STRINGS.iter().zip(coefficients) {
        let p = c.norm_sqr() / norm;
        phonon += p * infidelity_x(alpha, *s);
        let d = (s[0] * s[1]) as f64 * chi_error;
        mean += p * d;
        second += p * d * d;
    }
    phonon + second - mean * mean
}

/// `sum |alpha|^2 + 4/5 dchi^2 + 1/4 sum_s P_flip^s`.
pub fn average_infidelity_bound(alpha: &[Vec<Complex64>; 2], chi_error: f64, spin_flip: &[f64; 4]) -> f64 {
    let phonon: f64 = alpha.iter().flatten().map(|a| a.norm_sqr()).sum();
    phonon + 0.8 * chi_error * chi_error + 0.25 * spin_flip.iter().sum::<f64>()
}

/// Lower bound `cos(acos F0 + acos Fc)` on the total fidelity.
pub fn triangle_fidelity_bound(f0: f64, fc: f64) -> f64 {
    let angle = f0.clamp(0.0, 1.0).acos() + fc.clamp(0.0, 1.0).acos();
    if angle >= std::f64::consts::FRAC_PI_2 {
        0.0
    } else {
        angle.cos()
    }
}

/// Per-string fidelity components for the x basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StringBreakdown {
    pub string: [i8; 2],
    pub label: String,
    pub p_ph: f64,
    pub p_flip: Option<f64>,
    pub f0: f64,
    pub f_tot: Option<f64>,
    pub triangle_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityBreakdown {
    /// `|alpha_im(t_f)|^2` as `[ion][mode]`.
    pub alpha_residuals: [Vec<f64>; 2],
    pub chi12: f64,
    pub chi_error: f64,
    pub phi_final: f64,
    pub infidelity_z: f64,
    pub f0_z: f64,
    pub strings: Vec<StringBreakdown>,
    pub avg_f0_infidelity: f64,
    pub avg_bound: Option<f64>,
}

impl FidelityBreakdown {
    pub fn from_evolution(evo: &Evolution, phi_target: f64, spin_flip: Option<[f64; 4]>) -> Self {
        let alpha = evo.alpha_final();
        let chi12 = evo.chi12_final();
        let chi_error = chi12 - phi_target;
        let inf_z = infidelity_z(&alpha, chi_error);
        let strings = STRINGS
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let p_ph = infidelity_x(&alpha, s);
                let p_flip = spin_flip.map(|f| f[k]);
                StringBreakdown {
                    string: s,
                    label: string_label(s),
                    p_ph,
                    p_flip,
                    f0: 1.0 - p_ph,
                    f_tot: p_flip.map(|f| 1.0 - p_ph - f),
                    triangle_bound: p_flip.map(|f| triangle_fidelity_bound(1.0 - p_ph, 1.0 - f)),
                }
            })
            .collect();
        let phonon: f64 = alpha.iter().flatten().map(|a| a.norm_sqr()).sum();
        FidelityBreakdown {
            alpha_residuals: alpha.clone().map(|row| row.iter().map(|a| a.norm_sqr()).collect()),
            chi12,
            chi_error,
            phi_final: evo.phi_final,
            infidelity_z: inf_z,
            f0_z: 1.0 - inf_z,
            strings,
            avg_f0_infidelity: phonon + 0.8 * chi_error * chi_error,
            avg_bound: spin_flip.map(|f| average_infidelity_bound(&alpha, chi_error, &f)),
        }
    }

    pub fn string(&self, s: [i8; 2]) -> &StringBreakdown {
        self.strings.iter().find(|b| b.string == s).expect("all four strings present")
    }
}

/// Full analytic breakdown with the carrier term; spin flips are evaluated
/// when `with_spin_flip` is set.
pub fn analyze(
    pulse: &Pulse,
    modes: &ModeData,
    gate: &GateSpec,
    quad: &Quadrature,
    carrier_on: bool,
    with_spin_flip: bool,
) -> FidelityBreakdown {
    let evo = Evolution::new(pulse, modes, gate, quad, carrier_on);
    let flips = (with_spin_flip && carrier_on).then(|| spin_flip_table(&evo));
    FidelityBreakdown::from_evolution(&evo, gate.phi_target, flips)
}
