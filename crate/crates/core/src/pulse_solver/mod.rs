//! Linear gate conditions, phase normalization and the inverse carrier
//! transform.

pub mod transform;

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion_chain::ModeData;
use crate::pulse_basis::{Pulse, SplineBasis};
use crate::quadrature::{TimeGrid, DEFAULT_ORDER, DEFAULT_PANELS_PER_PERIOD};

pub use transform::{carrier_transform, carrier_transform_j1, transform_constant, transform_peak, CarrierInverse};

/// Gate parameters. Serialized with the detuning as an ordinary frequency
/// (`mu_hz`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "GateSpecFile", into = "GateSpecFile")]
pub struct GateSpec {
    /// Bichromatic detuning, rad/s.
    pub mu: f64,
    /// Motional phase, rad.
    pub psi: f64,
    /// Target spin-spin phase, rad.
    pub phi_target: f64,
    pub t0: f64,
    pub tf: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateSpecFile {
    mu_hz: f64,
    #[serde(default)]
    psi: f64,
    #[serde(default = "default_phi")]
    phi_target: f64,
    #[serde(default)]
    t0: f64,
    tf: f64,
}

fn default_phi() -> f64 {
    PI / 4.0
}

impl From<GateSpecFile> for GateSpec {
    fn from(f: GateSpecFile) -> Self {
        GateSpec {
            mu: 2.0 * PI * f.mu_hz,
            psi: f.psi,
            phi_target: f.phi_target,
            t0: f.t0,
            tf: f.tf,
        }
    }
}

impl From<GateSpec> for GateSpecFile {
    fn from(g: GateSpec) -> Self {
        GateSpecFile {
            mu_hz: g.mu / (2.0 * PI),
            psi: g.psi,
            phi_target: g.phi_target,
            t0: g.t0,
            tf: g.tf,
        }
    }
}

impl GateSpec {
    pub fn new(mu: f64, psi: f64, phi_target: f64, t0: f64, tf: f64) -> Self {
        GateSpec {
            mu,
            psi,
            phi_target,
            t0,
            tf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::config("mu_hz", "must be positive"));
        }
        if !(self.tf > self.t0) {
            return Err(Error::config("tf", "must exceed t0"));
        }
        if !self.phi_target.is_finite() || !self.psi.is_finite() {
            return Err(Error::config("phi_target", "must be finite"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    /// `cos(mu t + psi)`
    pub fn drive(&self, t: f64) -> f64 {
        (self.mu * t + self.psi).cos()
    }
}

/// Quadrature resolution shared by every oscillatory integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub panels_per_period: f64,
    pub order: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            panels_per_period: DEFAULT_PANELS_PER_PERIOD,
            order: DEFAULT_ORDER,
        }
    }
}

impl Quadrature {
    pub fn grid(&self, gate: &GateSpec) -> TimeGrid {
        TimeGrid::for_detuning(gate.t0, gate.tf, gate.mu, self.panels_per_period, self.order)
    }
}

/// Constraint matrix `A` (`[mode][segment]`) and quadratic form `B`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Vec<Vec<Complex64>>,
    pub b: Vec<Vec<f64>>,
}

/// `A_ms = int b_s(t) cos(mu t + psi) exp(i w_m t) dt`.
pub fn assemble_a(basis: &SplineBasis, modes: &ModeData, gate: &GateSpec, quad: &Quadrature) -> Vec<Vec<Complex64>> {
    let grid = quad.grid(gate);
    let samples = basis.sample_all(&grid.nodes);
    assemble_a_on(&grid, &samples, modes.gate_freqs(), gate)
}

fn assemble_a_on(grid: &TimeGrid, samples: &[Vec<f64>], freqs: &[f64], gate: &GateSpec) -> Vec<Vec<Complex64>> {
    let drive: Vec<f64> = grid.nodes.iter().map(|&t| gate.drive(t)).collect();
    freqs
        .iter()
        .map(|&w| {
            let phase: Vec<Complex64> = grid
                .nodes
                .iter()
                .zip(&grid.weights)
                .zip(&drive)
                .map(|((&t, &wt), &c)| Complex64::from_polar(wt * c, w * t))
                .collect();
            samples
                .iter()
                .map(|bs| bs.iter().zip(&phase).fold(Complex64::new(0.0, 0.0), |acc, (&b, &p)| acc + p * b))
                .collect()
        })
        .collect()
}

/// Symmetric matrix of the spin-phase bilinear form
/// `chi(u, v) = -2 sum_m eta_1m eta_2m int dt u(t) c(t) int^t v(t') c(t') sin(w_m (t - t')) dt'`
/// over the functions sampled in `samples` (`[function][node]`).
fn phase_form(grid: &TimeGrid, samples: &[Vec<f64>], freqs: &[f64], eta: &[Vec<f64>], gate: &GateSpec) -> DMatrix<f64> {
    let k = samples.len();
    let drive: Vec<f64> = grid.nodes.iter().map(|&t| gate.drive(t)).collect();
    let mut form = DMatrix::zeros(k, k);
    for (m, &w) in freqs.iter().enumerate() {
        let weight = -2.0 * eta[0][m] * eta[1][m];
        if weight == 0.0 {
            continue;
        }
        let rot: Vec<Complex64> = grid.nodes.iter().map(|&t| Complex64::from_polar(1.0, w * t)).collect();
        // running integrals V_l(t) = int^t v_l c exp(-i w t')
        let running: Vec<Vec<Complex64>> = samples
            .iter()
            .map(|v| {
                let integrand: Vec<Complex64> = v
                    .iter()
                    .zip(&drive)
                    .zip(&rot)
                    .map(|((&x, &c), r)| r.conj() * (x * c))
                    .collect();
                grid.cumulative(&integrand).0
            })
            .collect();
        for j in 0..k {
            let outer: Vec<f64> = samples[j]
                .iter()
                .zip(&drive)
                .zip(&grid.weights)
                .map(|((&u, &c), &wt)| u * c * wt)
                .collect();
            for l in 0..k {
                let s: f64 = outer
                    .iter()
                    .zip(&rot)
                    .zip(&running[l])
                    .map(|((&o, r), v)| o * (r * v).im)
                    .sum();
                form[(j, l)] += weight * s;
            }
        }
    }
    (&form + form.transpose()) * 0.5
}

/// `B_ss'`, symmetrized.
pub fn assemble_b(basis: &SplineBasis, modes: &ModeData, gate: &GateSpec, quad: &Quadrature) -> Vec<Vec<f64>> {
    let grid = quad.grid(gate);
    let samples = basis.sample_all(&grid.nodes);
    let b = phase_form(&grid, &samples, modes.gate_freqs(), &modes.lamb_dicke_pair, gate);
    (0..b.nrows()).map(|i| b.row(i).iter().copied().collect()).collect()
}

pub fn assemble(basis: &SplineBasis, modes: &ModeData, gate: &GateSpec, quad: &Quadrature) -> LinearSystem {
    LinearSystem {
        a: assemble_a(basis, modes, gate, quad),
        b: assemble_b(basis, modes, gate, quad),
    }
}

/// Relative singular-value threshold below which a direction counts as null.
pub const NULL_TOLERANCE: f64 = 1e-10;

/// Linear pulse plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub pulse: Pulse,
    pub nullspace_dim: usize,
    /// Smallest singular value of the stacked constraint matrix, relative to the largest.
    pub smallest_singular: f64,
    /// `max |(A Omega)_m|` over stacked real rows.
    pub residual_inf: f64,
    /// `residual_inf / (max |A| * max |Omega_s|)`.
    pub residual_relative: f64,
    /// `Omega^T B Omega - phi`.
    pub phase_error: f64,
    pub sign_changes: usize,
}

/// Orthonormal basis `[segment][k]` of the real nullspace of `A`, plus
/// `(smallest relative singular value, largest singular value)`.
fn nullspace(a: &[Vec<Complex64>], n_seg: usize) -> (DMatrix<f64>, f64, f64) {
    let rows = 2 * a.len();
    let n = rows.max(n_seg);
    let mut stacked = DMatrix::zeros(n, n_seg);
    for (m, row) in a.iter().enumerate() {
        for (s, v) in row.iter().enumerate() {
            stacked[(2 * m, s)] = v.re;
            stacked[(2 * m + 1, s)] = v.im;
        }
    }
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.max();
    let mut null_rows = Vec::new();
    let mut smallest = f64::INFINITY;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        // padded zero rows only contribute genuine null directions
        let rel = if sigma_max > 0.0 { s / sigma_max } else { 0.0 };
        smallest = smallest.min(rel);
        if rel < NULL_TOLERANCE {
            null_rows.push(i);
        }
    }
    let mut basis = DMatrix::zeros(n_seg, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        for s in 0..n_seg {
            basis[(s, k)] = v_t[(i, s)];
        }
    }
    (basis, smallest, sigma_max)
}

fn pick_direction(form: &DMatrix<f64>, phi: f64) -> Result<nalgebra::DVector<f64>> {
    let eig = SymmetricEigen::new(form.clone());
    let (idx, lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (i, l))
        .max_by(|a, b| (a.1 * phi.signum()).total_cmp(&(b.1 * phi.signum())))
        .expect("non-empty nullspace");
    if lam * phi <= 0.0 {
        return Err(Error::PhaseUnreachable { phi, extreme: lam });
    }
    let v = eig.eigenvectors.column(idx).into_owned();
    Ok(v * (phi / lam).sqrt())
}

fn finish(
    basis: &SplineBasis,
    a: &[Vec<Complex64>],
    null: &DMatrix<f64>,
    coeff_null: nalgebra::DVector<f64>,
    smallest: f64,
    form_value: impl Fn(&[f64]) -> f64,
    phi: f64,
) -> LinearSolution {
    let mut omega: Vec<f64> = (null * coeff_null).iter().copied().collect();
    let (lo, hi) = basis.combine(&omega).range();
    if hi < -lo {
        omega.iter_mut().for_each(|x| *x = -*x);
    }
    let mut residual = 0.0_f64;
    let mut a_max = 0.0_f64;
    for row in a {
        let r = row.iter().zip(&omega).fold(Complex64::new(0.0, 0.0), |acc, (a, w)| acc + a * *w);
        residual = residual.max(r.re.abs()).max(r.im.abs());
        a_max = row.iter().fold(a_max, |m, z| m.max(z.re.abs()).max(z.im.abs()));
    }
    let o_max = omega.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let phase_error = form_value(&omega) - phi;
    let pulse = Pulse::linear(basis.clone(), omega);
    let sign_changes = pulse.sign_changes();
    LinearSolution {
        pulse,
        nullspace_dim: null.ncols(),
        smallest_singular: smallest,
        residual_inf: residual,
        residual_relative: if a_max * o_max > 0.0 { residual / (a_max * o_max) } else { 0.0 },
        phase_error,
        sign_changes,
    }
}

/// Solve the linear gate conditions with a precomputed `A` and `B`.
///
/// Within the nullspace the minimal-Euclidean-norm coefficient vector with
/// `Omega^T B Omega = phi` is selected; the sign is fixed so that
/// `max Omega >= |min Omega|`.
pub fn solve_linear_pulse(basis: &SplineBasis, system: &LinearSystem, gate: &GateSpec) -> Result<LinearSolution> {
    let n_seg = basis.n_seg;
    let (null, smallest, _) = nullspace(&system.a, n_seg);
    if null.ncols() == 0 {
        return Err(Error::Infeasible {
            t_gate: gate.duration(),
            mu: gate.mu,
            sigma_min: smallest,
        });
    }
    let b = DMatrix::from_fn(n_seg, n_seg, |i, j| system.b[i][j]);
    let projected = null.transpose() * &b * &null;
    let coeff = pick_direction(&projected, gate.phi_target)?;
    let form_value = |w: &[f64]| {
        let v = nalgebra::DVector::from_column_slice(w);
        (v.transpose() * &b * &v)[(0, 0)]
    };
    Ok(finish(basis, &system.a, &null, coeff, smallest, form_value, gate.phi_target))
}

/// Assemble and solve in one pass, evaluating `B` only on the nullspace.
pub fn design_linear(basis: &SplineBasis, modes: &ModeData, gate: &GateSpec, quad: &Quadrature) -> Result<LinearSolution> {
    gate.validate()?;
    let grid = quad.grid(gate);
    let samples = basis.sample_all(&grid.nodes);
    let a = assemble_a_on(&grid, &samples, modes.gate_freqs(), gate);
    let (null, smallest, _) = nullspace(&a, basis.n_seg);
    if null.ncols() == 0 {
        return Err(Error::Infeasible {
            t_gate: gate.duration(),
            mu: gate.mu,
            sigma_min: smallest,
        });
    }
    let null_samples: Vec<Vec<f64>> = (0..null.ncols())
        .map(|k| {
            let mut v = vec![0.0; grid.len()];
            for (s, bs) in samples.iter().enumerate() {
                let c = null[(s, k)];
                v.iter_mut().zip(bs).for_each(|(acc, b)| *acc += c * b);
            }
            v
        })
        .collect();
    let projected = phase_form(&grid, &null_samples, modes.gate_freqs(), &modes.lamb_dicke_pair, gate);
    let coeff = pick_direction(&projected, gate.phi_target)?;
    let form_value = |w: &[f64]| {
        let mut v = vec![0.0; grid.len()];
        for (s, bs) in samples.iter().enumerate() {
            v.iter_mut().zip(bs).for_each(|(acc, b)| *acc += w[s] * b);
        }
        phase_form(&grid, &[v], modes.gate_freqs(), &modes.lamb_dicke_pair, gate)[(0, 0)]
    };
    Ok(finish(basis, &a, &null, coeff, smallest, form_value, gate.phi_target))
}

/// `Omega_tr(t) = S^-1(Omega_lin(t))` pointwise.
///
/// Fails when `max |Omega_lin|` exceeds `C mu`; the extremum is located
/// exactly from the spline's critical points.
pub fn inverse_transform(linear: &Pulse, mu: f64) -> Result<Pulse> {
    let spline = linear
        .spline()
        .ok_or_else(|| Error::Invalid("inverse transform needs a spline pulse".into()))?;
    let inverse = CarrierInverse::new(mu);
    let (time, value) = spline.max_abs();
    if value.abs() > inverse.limit() {
        return Err(Error::OutsideAllowedArea {
            time,
            value: value.abs(),
            limit: inverse.limit(),
            margin: value.abs() - inverse.limit(),
        });
    }
    Ok(Pulse::transformed(linear, inverse))
}

/// `max |Omega_lin| / (C mu)`.
pub fn allowed_ratio(linear: &Pulse, mu: f64) -> f64 {
    let spline = linear.spline().expect("spline pulse");
    spline.max_abs().1.abs() / (transform_constant() * mu)
}

/// `max_t |S(Omega_tr(t)) - Omega_lin(t)|` over `n` uniform samples,
/// endpoints included.
pub fn transform_residual(linear: &Pulse, transformed: &Pulse, mu: f64, n: usize) -> f64 {
    let (t0, tf) = (linear.t0(), linear.tf());
    let n = n.max(2);
    (0..n)
        .map(|k| t0 + (tf - t0) * k as f64 / (n - 1) as f64)
        .map(|t| (carrier_transform(transformed.value(t), mu) - linear.value(t)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate_analytics::analyze;

    fn chain(eta0: Vec<f64>, eta1: Vec<f64>) -> ModeData {
        let freqs = (0..eta0.len()).map(|m| 2.0 * PI * (0.85e6 + 0.06e6 * m as f64)).collect();
        ModeData::synthetic(freqs, [eta0, eta1])
    }

    fn gate(tf: f64) -> GateSpec {
        GateSpec::new(2.0 * PI * 1.02e6, 0.4, PI / 4.0, 0.0, tf)
    }

    /// `int p(t) e^{i k t} dt` over `[a, b]` for a cubic given by its
    /// derivatives at `a`, by repeated integration by parts.
    fn poly_exp_integral(derivs_at: impl Fn(f64) -> [f64; 4], k: f64, a: f64, b: f64) -> Complex64 {
        let prim = |t: f64| {
            let d = derivs_at(t);
            let ik = Complex64::new(0.0, k);
            let mut sum = Complex64::new(0.0, 0.0);
            let mut pow = ik;
            for (j, dj) in d.iter().enumerate() {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * dj / pow;
                pow *= ik;
            }
            sum * Complex64::from_polar(1.0, k * t)
        };
        prim(b) - prim(a)
    }

    #[test]
    fn constraint_matrix_matches_closed_form() {
        let modes = chain(vec![0.05, -0.07, 0.03], vec![0.06, 0.02, -0.05]);
        let g = gate(9e-6);
        let basis = SplineBasis::new(g.t0, g.tf, 7).unwrap();
        let a = assemble_a(&basis, &modes, &g, &Quadrature::default());
        for s in 0..basis.n_seg {
            let sp = basis.basis_spline(s);
            for (m, &w) in modes.gate_freqs().iter().enumerate() {
                let mut expect = Complex64::new(0.0, 0.0);
                for j in 0..basis.knots.len() - 1 {
                    let (lo, hi) = (basis.knots[j], basis.knots[j + 1]);
                    // cubic on [lo, hi] from four point values
                    let xs: Vec<f64> = (0..4).map(|k| lo + (hi - lo) * k as f64 / 3.0).collect();
                    let vand = DMatrix::from_fn(4, 4, |r, c| (xs[r] - lo).powi(c as i32));
                    let vals = nalgebra::DVector::from_iterator(4, xs.iter().map(|&x| sp.eval(x)));
                    let c = vand.lu().solve(&vals).unwrap();
                    let derivs = |t: f64| {
                        let x = t - lo;
                        [
                            c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x,
                            c[1] + 2.0 * c[2] * x + 3.0 * c[3] * x * x,
                            2.0 * c[2] + 6.0 * c[3] * x,
                            6.0 * c[3],
                        ]
                    };
                    // cos(mu t + psi) = (e^{i(mu t + psi)} + e^{-i(mu t + psi)}) / 2
                    let up = Complex64::from_polar(0.5, g.psi) * poly_exp_integral(derivs, w + g.mu, lo, hi);
                    let down = Complex64::from_polar(0.5, -g.psi) * poly_exp_integral(derivs, w - g.mu, lo, hi);
                    expect += up + down;
                }
                let got = a[m][s];
                assert!((got - expect).norm() < 1e-9 * expect.norm(), "m={m} s={s}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn phase_form_agrees_with_spin_phase_of_design() {
        // every mode sits below mu; negative eta products make chi positive
        let modes = chain(vec![0.05, -0.07, 0.03], vec![-0.06, 0.05, -0.04]);
        let g = gate(12e-6);
        let basis = SplineBasis::new(g.t0, g.tf, 9).unwrap();
        let quad = Quadrature::default();
        let sol = design_linear(&basis, &modes, &g, &quad).unwrap();
        assert!(sol.phase_error.abs() < 1e-9);
        assert!(sol.residual_relative < 1e-8);
        let fb = analyze(&sol.pulse, &modes, &g, &quad, false, false);
        assert!((fb.chi12 - g.phi_target).abs() < 1e-9, "{}", fb.chi12);
        assert!(fb.alpha_residuals.iter().flatten().all(|&r| r < 1e-20));

        // the full B evaluated through solve_linear_pulse picks the same pulse
        let system = assemble(&basis, &modes, &g, &quad);
        let sol2 = solve_linear_pulse(&basis, &system, &g).unwrap();
        let (c1, c2) = (sol.pulse.spline().unwrap(), sol2.pulse.spline().unwrap());
        for k in 0..50 {
            let t = g.t0 + g.duration() * k as f64 / 49.0;
            assert!((c1.eval(t) - c2.eval(t)).abs() < 1e-6 * c1.max_abs().1.abs());
        }
    }

    #[test]
    fn degenerate_nullspace_picks_minimal_norm() {
        // one mode, four segments: a two-dimensional nullspace
        let modes = chain(vec![0.08], vec![0.06]);
        let g = gate(6e-6);
        let basis = SplineBasis::new(g.t0, g.tf, 4).unwrap();
        let quad = Quadrature::default();
        let system = assemble(&basis, &modes, &g, &quad);
        let sol = solve_linear_pulse(&basis, &system, &g).unwrap();
        assert_eq!(sol.nullspace_dim, 2);
        let coeffs: Vec<f64> = (0..4).map(|s| sol.pulse.spline().unwrap().eval(basis.knots[s + 1])).collect();
        let norm2: f64 = coeffs.iter().map(|x| x * x).sum();

        let (null, _, _) = nullspace(&system.a, 4);
        let b = DMatrix::from_fn(4, 4, |i, j| system.b[i][j]);
        let mut best = f64::INFINITY;
        for k in 0..200_000 {
            let th = PI * k as f64 / 200_000.0;
            let u = &null * nalgebra::DVector::from_vec(vec![th.cos(), th.sin()]);
            let q = (u.transpose() * &b * &u)[(0, 0)];
            if q * g.phi_target > 0.0 {
                best = best.min(g.phi_target / q);
            }
        }
        assert!((norm2 - best).abs() < 1e-6 * best, "{norm2} vs {best}");
    }

    #[test]
    fn unshared_modes_leave_no_phase() {
        let modes = chain(vec![0.05, 0.0, 0.0], vec![0.0, 0.04, 0.06]);
        let g = gate(10e-6);
        let basis = SplineBasis::new(g.t0, g.tf, 9).unwrap();
        let b = assemble_b(&basis, &modes, &g, &Quadrature::default());
        assert!(b.iter().flatten().all(|&x| x == 0.0));
        assert!(matches!(
            design_linear(&basis, &modes, &g, &Quadrature::default()),
            Err(Error::PhaseUnreachable { .. })
        ));
    }

    #[test]
    fn too_few_segments_is_infeasible() {
        let modes = chain(vec![0.05, -0.07, 0.03], vec![0.06, 0.02, -0.05]);
        let g = gate(10e-6);
        let basis = SplineBasis::new(g.t0, g.tf, 5).unwrap();
        assert!(matches!(
            design_linear(&basis, &modes, &g, &Quadrature::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn sign_convention_and_phase_sign() {
        let modes = chain(vec![0.05, -0.07, 0.03], vec![0.06, 0.02, -0.05]);
        let mut g = gate(12e-6);
        let basis = SplineBasis::new(g.t0, g.tf, 9).unwrap();
        let quad = Quadrature::default();
        for phi in [PI / 4.0, -PI / 4.0, 0.1] {
            g.phi_target = phi;
            match design_linear(&basis, &modes, &g, &quad) {
                Ok(sol) => {
                    let (lo, hi) = sol.pulse.spline().unwrap().range();
                    assert!(hi >= -lo);
                    assert!(sol.phase_error.abs() < 1e-9 * phi.abs().max(1.0));
                }
                Err(Error::PhaseUnreachable { extreme, .. }) => assert!(extreme * phi <= 0.0),
                Err(e) => panic!("{e}"),
            }
        }
    }
}
