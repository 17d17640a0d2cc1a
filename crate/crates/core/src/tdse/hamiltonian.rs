//! Matrix-free application of the full and Lamb-Dicke Hamiltonians on the
//! truncated two-qubit plus multimode Fock space.
//!
//! Qubit `i` occupies bit `1 - i` of the qubit index; bit value 0 is the
//! `sigma_z = +1` state. `sigma_+ = |0><1|`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::SimSpace;
use crate::ion_chain::ModeData;
use crate::pulse_basis::Pulse;
use crate::pulse_solver::GateSpec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianKind {
    Full,
    Ld,
}

impl std::str::FromStr for HamiltonianKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(HamiltonianKind::Full),
            "ld" => Ok(HamiltonianKind::Ld),
            other => Err(format!("unknown hamiltonian `{other}` (expected full or ld)")),
        }
    }
}

/// `exp(-i r x)` for the truncated position-like operator `x = a + a^+`, as a
/// row-major `c x c` matrix.
fn position_exponential(cutoff: usize, r: f64) -> Vec<Complex64> {
    let x = DMatrix::from_fn(cutoff, cutoff, |k, l| {
        if k + 1 == l || l + 1 == k {
            (k.max(l) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(x);
    let mut out = vec![ZERO; cutoff * cutoff];
    for k in 0..cutoff {
        for l in 0..cutoff {
            out[k * cutoff + l] = (0..cutoff)
                .map(|j| {
                    let q = eig.eigenvectors[(k, j)] * eig.eigenvectors[(l, j)];
                    Complex64::from_polar(q, -r * eig.eigenvalues[j])
                })
                .sum();
        }
    }
    out
}

/// Truncated displacement `D(beta) = exp(beta a^+ - beta* a)` restricted to
/// the first `cutoff` Fock states, exponentiated inside the truncated space
/// (exactly unitary there).
pub fn truncated_displacement(beta: Complex64, cutoff: usize) -> DMatrix<Complex64> {
    // beta a^+ - beta* a = R (-i|beta| x) R^+, R = exp(i (arg beta + pi/2) n)
    let theta = beta.arg() + std::f64::consts::FRAC_PI_2;
    let m = position_exponential(cutoff, beta.norm());
    DMatrix::from_fn(cutoff, cutoff, |k, l| {
        m[k * cutoff + l] * Complex64::from_polar(1.0, theta * (k as f64 - l as f64))
    })
}

/// Time-independent ingredients for repeated Hamiltonian application.
#[derive(Debug, Clone)]
pub struct Operators {
    pub kind: HamiltonianKind,
    pub space: SimSpace,
    freqs: Vec<f64>,
    eta: [Vec<f64>; 2],
    /// `exp(-i |eta_im| x)` per ion and mode; `None` where it is the identity
    /// to machine precision.
    position_exp: [Vec<Option<Vec<Complex64>>>; 2],
}

/// Hamiltonian frozen at one instant, in the lab frame or in the frame
/// rotating with the carrier term `Omega c sum_i sigma_y^i`.
pub struct Snapshot<'a> {
    ops: &'a Operators,
    /// `Omega(t) cos(mu t + psi)`
    drive: f64,
    /// Carrier angle `Phi(t)` when in the rotating frame.
    carrier: Option<f64>,
    /// full: phase `exp(i sum_m theta_im n_m)` per ion and phonon index
    phases: [Vec<Complex64>; 2],
    /// LD: `eta_im exp(-i w_m t)` per ion and mode
    ladder: [Vec<Complex64>; 2],
}

impl Operators {
    pub fn new(kind: HamiltonianKind, space: SimSpace, modes: &ModeData) -> Self {
        let eta = [modes.lamb_dicke_pair[0].clone(), modes.lamb_dicke_pair[1].clone()];
        let position_exp = [0, 1].map(|i| {
            space
                .cutoffs
                .iter()
                .zip(&eta[i])
                .map(|(&c, &e)| {
                    let m = position_exponential(c, e.abs());
                    let identity = (0..c * c).all(|k| {
                        let one = if k % (c + 1) == 0 { 1.0 } else { 0.0 };
                        (m[k] - one).norm() <= f64::EPSILON
                    });
                    (!identity).then_some(m)
                })
                .collect()
        });
        Operators {
            kind,
            space,
            freqs: modes.gate_freqs().to_vec(),
            eta,
            position_exp,
        }
    }

    /// Lab-frame Hamiltonian at `t`.
    pub fn at(&self, pulse: &Pulse, gate: &GateSpec, t: f64) -> Snapshot<'_> {
        self.snapshot(pulse.value(t) * gate.drive(t), None, t)
    }

    /// Hamiltonian at `t` in the frame of `exp(-i Phi(t) sum_i sigma_y^i)`;
    /// `phi` is the carrier angle at `t`.
    ///
    /// LD: `Omega c sum_i (cos 2Phi sigma_x^i + sin 2Phi sigma_z^i) X_i`.
    /// Full: the rotated remainder `-i Omega c sum_i ((E_i - 1) sigma_+^i - h.c.)`.
    pub fn at_rotating(&self, pulse: &Pulse, gate: &GateSpec, t: f64, phi: f64) -> Snapshot<'_> {
        self.snapshot(pulse.value(t) * gate.drive(t), Some(phi), t)
    }

    fn snapshot(&self, drive: f64, carrier: Option<f64>, t: f64) -> Snapshot<'_> {
        let nm = self.freqs.len();
        let (phases, ladder) = match self.kind {
            HamiltonianKind::Full => {
                let phases = [0, 1].map(|i| {
                    // beta_im = i eta_im exp(i w_m t); the rotation angle of
                    // D(beta) is arg(beta) + pi/2
                    let rot: Vec<Complex64> = (0..nm)
                        .map(|m| {
                            let base = if self.eta[i][m] >= 0.0 { std::f64::consts::PI } else { 0.0 };
                            Complex64::from_polar(1.0, base + self.freqs[m] * t)
                        })
                        .collect();
                    self.space.occupation_phases(&rot)
                });
                (phases, [Vec::new(), Vec::new()])
            }
            HamiltonianKind::Ld => {
                let ladder = [0, 1].map(|i| {
                    (0..nm)
                        .map(|m| Complex64::from_polar(self.eta[i][m], -self.freqs[m] * t))
                        .collect()
                });
                ([Vec::new(), Vec::new()], ladder)
            }
        };
        Snapshot {
            ops: self,
            drive,
            carrier,
            phases,
            ladder,
        }
    }

    /// `out += scale (w1 H1 + w2 H2) v` for two snapshots in the same frame.
    pub fn apply_pair(
        &self,
        (h1, w1): (&Snapshot<'_>, f64),
        (h2, w2): (&Snapshot<'_>, f64),
        v: &[Complex64],
        out: &mut [Complex64],
        scale: Complex64,
        scratch: &mut Scratch,
    ) {
        match (self.kind, h1.carrier, h2.carrier) {
            (HamiltonianKind::Ld, Some(p1), Some(p2)) => {
                // linear in the coefficients: fuse both instants
                let nm = self.freqs.len();
                let mut cx = [vec![ZERO; nm], vec![ZERO; nm]];
                let mut cz = [vec![ZERO; nm], vec![ZERO; nm]];
                for (h, w, p) in [(h1, w1, p1), (h2, w2, p2)] {
                    let (sin2, cos2) = (2.0 * p).sin_cos();
                    let d = w * h.drive;
                    for i in 0..2 {
                        for m in 0..nm {
                            cx[i][m] += h.ladder[i][m] * (d * cos2);
                            cz[i][m] += h.ladder[i][m] * (d * sin2);
                        }
                    }
                }
                apply_ld_rotating(&self.space, &cx, &cz, v, out, scale);
            }
            _ => {
                h1.apply(v, out, scale * w1, scratch);
                h2.apply(v, out, scale * w2, scratch);
            }
        }
    }
}

fn apply_ld_rotating(
    space: &SimSpace,
    cx: &[Vec<Complex64>; 2],
    cz: &[Vec<Complex64>; 2],
    v: &[Complex64],
    out: &mut [Complex64],
    scale: Complex64,
) {
    let p = space.phonon_dim;
    let nm = space.n_modes;
    let scaled = |c: &[Complex64], f: Complex64| -> (Vec<Complex64>, Vec<Complex64>) {
        (c.iter().map(|x| x * f).collect(), c.iter().map(|x| x.conj() * f).collect())
    };
    let flips = [scaled(&cx[0], scale), scaled(&cx[1], scale)];
    for q in 0..4 {
        let dst = &mut out[q * p..(q + 1) * p];
        for (ion, (lower, raise)) in flips.iter().enumerate() {
            let other = q ^ (1 << (1 - ion));
            space.apply_ladders(&v[other * p..(other + 1) * p], dst, lower, raise);
        }
        // both sigma_z terms act within the block
        let sign = |ion: usize| if q & (1 << (1 - ion)) == 0 { 1.0 } else { -1.0 };
        let cz_q: Vec<Complex64> = (0..nm).map(|m| cz[0][m] * sign(0) + cz[1][m] * sign(1)).collect();
        let (lower, raise) = scaled(&cz_q, scale);
        space.apply_ladders(&v[q * p..(q + 1) * p], dst, &lower, &raise);
    }
}

impl Snapshot<'_> {
    pub fn is_zero(&self) -> bool {
        self.drive == 0.0
    }

    /// `out += scale * H v`.
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64], scale: Complex64, scratch: &mut Scratch) {
        if self.drive == 0.0 {
            return;
        }
        match (self.ops.kind, self.carrier) {
            (HamiltonianKind::Full, None) => self.apply_full(v, out, scale, false, scratch),
            (HamiltonianKind::Full, Some(phi)) => {
                let mut rotated = std::mem::take(&mut scratch.rotated);
                let mut image = std::mem::take(&mut scratch.image);
                rotate_qubits(&self.ops.space, phi, v, &mut rotated);
                image.iter_mut().for_each(|z| *z = ZERO);
                self.apply_full(&rotated, &mut image, Complex64::new(1.0, 0.0), true, scratch);
                rotate_qubits_add(&self.ops.space, -phi, &image, out, scale);
                scratch.rotated = rotated;
                scratch.image = image;
            }
            (HamiltonianKind::Ld, None) => self.apply_ld(v, out, scale, scratch),
            (HamiltonianKind::Ld, Some(phi)) => {
                let (sin2, cos2) = (2.0 * phi).sin_cos();
                let cx = [0, 1].map(|i| self.ladder[i].iter().map(|c| c * (self.drive * cos2)).collect());
                let cz = [0, 1].map(|i| self.ladder[i].iter().map(|c| c * (self.drive * sin2)).collect());
                apply_ld_rotating(&self.ops.space, &cx, &cz, v, out, scale);
            }
        }
    }

    /// `-i drive sum_i (E_i sigma_+^i - E_i^+ sigma_-^i)`, optionally with the
    /// identity part of `E_i` removed.
    fn apply_full(&self, v: &[Complex64], out: &mut [Complex64], scale: Complex64, remainder: bool, scratch: &mut Scratch) {
        let space = &self.ops.space;
        let p = space.phonon_dim;
        let c = scale * Complex64::new(0.0, -self.drive);
        for ion in 0..2 {
            let bit = 1 << (1 - ion);
            let phase = &self.phases[ion];
            for q in 0..4 {
                if q & bit == 0 {
                    continue;
                }
                let up = q & !bit;
                // E = Ph M Ph^+
                let block = &mut scratch.block;
                for k in 0..p {
                    block[k] = v[q * p + k] * phase[k].conj();
                }
                space.apply_modes(block, &self.ops.position_exp[ion], false, &mut scratch.line);
                for k in 0..p {
                    let mut e = phase[k] * block[k];
                    if remainder {
                        e -= v[q * p + k];
                    }
                    out[up * p + k] += c * e;
                }
                for k in 0..p {
                    block[k] = v[up * p + k] * phase[k].conj();
                }
                space.apply_modes(block, &self.ops.position_exp[ion], true, &mut scratch.line);
                for k in 0..p {
                    let mut e = phase[k] * block[k];
                    if remainder {
                        e -= v[up * p + k];
                    }
                    out[q * p + k] -= c * e;
                }
            }
        }
    }

    fn apply_ld(&self, v: &[Complex64], out: &mut [Complex64], scale: Complex64, scratch: &mut Scratch) {
        let space = &self.ops.space;
        let p = space.phonon_dim;
        let c = scale * self.drive;
        let i = Complex64::new(0.0, 1.0);
        for ion in 0..2 {
            let bit = 1 << (1 - ion);
            for q in 0..4 {
                let other = q ^ bit;
                // sigma_y: <0|sy|1> = -i, <1|sy|0> = i
                let sy = if q & bit == 0 { -i } else { i };
                let src = &v[other * p..(other + 1) * p];
                let dst_off = q * p;
                for k in 0..p {
                    out[dst_off + k] += c * sy * src[k];
                }
                // sigma_x X_i
                let block = &mut scratch.block;
                block.iter_mut().for_each(|b| *b = ZERO);
                space.apply_quadrature(src, block, &self.ladder[ion]);
                for k in 0..p {
                    out[dst_off + k] += c * block[k];
                }
            }
        }
    }
}

/// `w = exp(-i phi sum_i sigma_y^i) v`.
pub fn rotate_qubits(space: &SimSpace, phi: f64, v: &[Complex64], w: &mut [Complex64]) {
    w.iter_mut().for_each(|z| *z = ZERO);
    rotate_qubits_add(space, phi, v, w, Complex64::new(1.0, 0.0));
}

/// `w += scale exp(-i phi sum_i sigma_y^i) v`.
fn rotate_qubits_add(space: &SimSpace, phi: f64, v: &[Complex64], w: &mut [Complex64], scale: Complex64) {
    // single qubit: [[c, -s], [s, c]] in the (sigma_z = +1, -1) basis
    let (s, c) = phi.sin_cos();
    let single = [[c, -s], [s, c]];
    let p = space.phonon_dim;
    for q in 0..4 {
        for r in 0..4 {
            let f = single[q >> 1][r >> 1] * single[q & 1][r & 1];
            if f == 0.0 {
                continue;
            }
            let f = scale * f;
            let (dst, src) = (&mut w[q * p..(q + 1) * p], &v[r * p..(r + 1) * p]);
            for (d, x) in dst.iter_mut().zip(src) {
                *d += f * x;
            }
        }
    }
}

/// Work buffers reused across applications.
pub struct Scratch {
    block: Vec<Complex64>,
    line: Vec<Complex64>,
    rotated: Vec<Complex64>,
    image: Vec<Complex64>,
}

impl Scratch {
    pub fn new(space: &SimSpace) -> Self {
        Scratch {
            block: vec![ZERO; space.phonon_dim],
            line: vec![ZERO; space.line_len()],
            rotated: vec![ZERO; space.total_dim],
            image: vec![ZERO; space.total_dim],
        }
    }
}

impl Snapshot<'_> {
    /// Dense matrix of this Hamiltonian (small spaces only).
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let space = &self.ops.space;
        let n = space.total_dim;
        let mut scratch = Scratch::new(space);
        let mut h = DMatrix::zeros(n, n);
        let mut e = vec![ZERO; n];
        let mut col = vec![ZERO; n];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            col.iter_mut().for_each(|x| *x = ZERO);
            self.apply(&e, &mut col, Complex64::new(1.0, 0.0), &mut scratch);
            h.set_column(j, &nalgebra::DVector::from_column_slice(&col));
            e[j] = ZERO;
        }
        h
    }
}

/// Dense lab-frame Hamiltonian at time `t` (small spaces only).
pub fn dense_hamiltonian(ops: &Operators, pulse: &Pulse, gate: &GateSpec, t: f64) -> DMatrix<Complex64> {
    ops.at(pulse, gate, t).to_dense()
}
