//! Equilibrium positions, normal modes and Lamb-Dicke parameters of a linear
//! ion crystal in a harmonic trap.
//!
//! Internally everything is expressed in the natural length scale
//! `l = (e^2 / (4 pi eps0 M w_ax^2))^(1/3)` and in units of `w_ax`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constants::{CA40_ION_MASS, ELEMENTARY_CHARGE, HBAR, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};

/// Trap and laser geometry of a linear chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_ions: usize,
    /// kg
    #[serde(default = "default_mass")]
    pub ion_mass: f64,
    /// C
    #[serde(default = "default_charge")]
    pub charge: f64,
    /// Axial trap frequency `w_ax / 2 pi` in Hz.
    #[serde(alias = "axial_freq")]
    pub axial_freq_hz: f64,
    /// Radial trap frequency `w_rad / 2 pi` in Hz.
    #[serde(alias = "radial_freq")]
    pub radial_freq_hz: f64,
    /// rad/m
    #[serde(default)]
    pub wavevector_axial: f64,
    /// rad/m
    pub wavevector_radial: f64,
    /// Zero-based indices of the two illuminated ions.
    pub illuminated_pair: (usize, usize),
}

fn default_mass() -> f64 {
    CA40_ION_MASS
}

fn default_charge() -> f64 {
    ELEMENTARY_CHARGE
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ions < 2 {
            return Err(Error::config("n_ions", "at least two ions are required"));
        }
        if !(self.ion_mass > 0.0) {
            return Err(Error::config("ion_mass", "must be positive"));
        }
        if !(self.charge > 0.0) {
            return Err(Error::config("charge", "must be positive"));
        }
        if !(self.axial_freq_hz > 0.0) {
            return Err(Error::config("axial_freq_hz", "must be positive"));
        }
        if !(self.radial_freq_hz > self.axial_freq_hz) {
            return Err(Error::config(
                "radial_freq_hz",
                "must exceed axial_freq_hz for a linear chain",
            ));
        }
        let (k1, k2) = self.illuminated_pair;
        if k1 == k2 {
            return Err(Error::config("illuminated_pair", "indices must differ"));
        }
        if k1 >= self.n_ions || k2 >= self.n_ions {
            return Err(Error::config("illuminated_pair", "index out of range"));
        }
        if !self.wavevector_radial.is_finite() || !self.wavevector_axial.is_finite() {
            return Err(Error::config("wavevector_radial", "must be finite"));
        }
        Ok(())
    }

    pub fn omega_axial(&self) -> f64 {
        2.0 * PI * self.axial_freq_hz
    }

    pub fn omega_radial(&self) -> f64 {
        2.0 * PI * self.radial_freq_hz
    }

    /// Natural length scale in metres.
    pub fn length_scale(&self) -> f64 {
        let w = self.omega_axial();
        (self.charge * self.charge / (4.0 * PI * VACUUM_PERMITTIVITY * self.ion_mass * w * w)).cbrt()
    }
}

/// Normal-mode data for both branches plus Lamb-Dicke matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeData {
    /// m, ascending
    pub positions: Vec<f64>,
    /// rad/s, ascending
    pub mode_freqs_axial: Vec<f64>,
    /// rad/s, ascending
    pub mode_freqs_radial: Vec<f64>,
    /// `[ion][mode]`
    pub mode_vectors_axial: Vec<Vec<f64>>,
    /// `[ion][mode]`
    pub mode_vectors_radial: Vec<Vec<f64>>,
    /// Radial Lamb-Dicke matrix `[ion][mode]`.
    pub lamb_dicke_full: Vec<Vec<f64>>,
    /// Axial Lamb-Dicke matrix `[ion][mode]`.
    pub lamb_dicke_axial: Vec<Vec<f64>>,
    /// Rows of `lamb_dicke_full` for the illuminated pair, `[2][mode]`.
    pub lamb_dicke_pair: Vec<Vec<f64>>,
}

impl ModeData {
    pub fn n_modes(&self) -> usize {
        self.mode_freqs_radial.len()
    }

    /// Radial mode frequencies driven by the gate.
    pub fn gate_freqs(&self) -> &[f64] {
        &self.mode_freqs_radial
    }

    /// Minimal mode data for a prescribed set of gate modes, bypassing the
    /// crystal calculation. Used for synthetic test instances.
    pub fn synthetic(freqs: Vec<f64>, eta_pair: [Vec<f64>; 2]) -> Self {
        let n = freqs.len();
        assert!(eta_pair[0].len() == n && eta_pair[1].len() == n);
        let eye: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        ModeData {
            positions: vec![0.0; n],
            mode_freqs_axial: freqs.clone(),
            mode_freqs_radial: freqs,
            mode_vectors_axial: eye.clone(),
            mode_vectors_radial: eye,
            lamb_dicke_full: vec![vec![0.0; n]; n],
            lamb_dicke_axial: vec![vec![0.0; n]; n],
            lamb_dicke_pair: eta_pair.to_vec(),
        }
    }
}

/// Scaled gradient of the potential, `dU/du_k` in units of `M w_ax^2 l`.
fn gradient(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut g = u.to_vec();
    for k in 0..n {
        for l in 0..n {
            if l != k {
                let d = u[k] - u[l];
                g[k] -= d.signum() / (d * d);
            }
        }
    }
    g
}

fn potential(u: &[f64]) -> f64 {
    let mut e = 0.5 * u.iter().map(|x| x * x).sum::<f64>();
    for k in 0..u.len() {
        for l in k + 1..u.len() {
            e += 1.0 / (u[k] - u[l]).abs();
        }
    }
    e
}

/// Coulomb Hessian `G_kl = delta_kl sum_k' |u_k - u_k'|^-3 - |u_k - u_l|^-3`.
fn coulomb_hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut g = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            if l != k {
                let c = 1.0 / (u[k] - u[l]).abs().powi(3);
                g[(k, l)] = -c;
                g[(k, k)] += c;
            }
        }
    }
    g
}

const NEWTON_MAX_ITER: usize = 200;
const GRADIENT_TOL: f64 = 1e-12;

/// Equilibrium positions in units of the natural length scale.
pub fn equilibrium_positions_scaled(n_ions: usize) -> Result<Vec<f64>> {
    if n_ions == 0 {
        return Ok(Vec::new());
    }
    if n_ions == 1 {
        return Ok(vec![0.0]);
    }
    // Equally spaced start with the empirical minimum spacing 2.018 n^-0.559.
    let spacing = 2.018 / (n_ions as f64).powf(0.559);
    let mut u: Vec<f64> = (0..n_ions)
        .map(|k| (k as f64 - 0.5 * (n_ions - 1) as f64) * spacing)
        .collect();

    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let g = gradient(&u);
        residual = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if residual < GRADIENT_TOL {
            symmetrize(&mut u);
            return Ok(u);
        }
        let h = DMatrix::identity(n_ions, n_ions) + coulomb_hessian(&u) * 2.0;
        let step = h
            .cholesky()
            .map(|c| c.solve(&DVector::from_vec(g.clone())))
            .unwrap_or_else(|| DVector::from_vec(g.clone()));
        // backtracking keeps ordering and decreases the energy
        let e0 = potential(&u);
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - lambda * s).collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered && (potential(&trial) <= e0 + 1e-14 * e0.abs() || lambda < 1e-6) {
                u = trial;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(Error::NonConvergence {
                    what: "equilibrium position search",
                    iterations: 0,
                    residual,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        what: "equilibrium position search",
        iterations: NEWTON_MAX_ITER,
        residual,
    })
}

fn symmetrize(u: &mut [f64]) {
    let n = u.len();
    for k in 0..n / 2 {
        let a = 0.5 * (u[n - 1 - k] - u[k]);
        u[k] = -a;
        u[n - 1 - k] = a;
    }
    if n % 2 == 1 {
        u[n / 2] = 0.0;
    }
}

/// Equilibrium positions in metres, ascending.
pub fn equilibrium_positions(config: &ChainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let l = config.length_scale();
    Ok(equilibrium_positions_scaled(config.n_ions)?
        .into_iter()
        .map(|u| u * l)
        .collect())
}

/// Eigenpairs sorted ascending; each eigenvector's first largest-magnitude
/// component is made positive.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = vec![vec![0.0; n]; n];
    for (col, &i) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let vmax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let pivot = v.iter().position(|x| x.abs() >= vmax * (1.0 - 1e-8)).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[k][col] = sign * v[k];
        }
    }
    (values, vectors)
}

/// Scaled dynamical matrices (units of `w_ax^2`) for the axial and radial branch.
pub fn dynamical_matrices(config: &ChainConfig, positions_scaled: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = positions_scaled.len();
    let g = coulomb_hessian(positions_scaled);
    let axial = DMatrix::identity(n, n) + &g * 2.0;
    let ratio = config.radial_freq_hz / config.axial_freq_hz;
    let radial = DMatrix::identity(n, n) * (ratio * ratio) - g;
    (axial, radial)
}

/// Normal modes of both branches for positions from [`equilibrium_positions`].
/// Lamb-Dicke matrices are filled by [`lamb_dicke`].
pub fn normal_modes(config: &ChainConfig, positions: &[f64]) -> Result<ModeData> {
    config.validate()?;
    let l = config.length_scale();
    let u: Vec<f64> = positions.iter().map(|x| x / l).collect();
    let (ax, rad) = dynamical_matrices(config, &u);
    let w_ax = config.omega_axial();

    let mut branches = Vec::new();
    for (name, m) in [("axial", ax), ("radial", rad)] {
        let (vals, vecs) = sorted_eigen(m);
        if let Some((mode, &ev)) = vals.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(Error::Unstable {
                branch: name,
                mode,
                eigenvalue: ev,
            });
        }
        let freqs: Vec<f64> = vals.iter().map(|v| v.sqrt() * w_ax).collect();
        branches.push((freqs, vecs));
    }
    let (rad_f, rad_v) = branches.pop().unwrap();
    let (ax_f, ax_v) = branches.pop().unwrap();
    let n = config.n_ions;
    Ok(ModeData {
        positions: positions.to_vec(),
        mode_freqs_axial: ax_f,
        mode_freqs_radial: rad_f,
        mode_vectors_axial: ax_v,
        mode_vectors_radial: rad_v,
        lamb_dicke_full: vec![vec![0.0; n]; n],
        lamb_dicke_axial: vec![vec![0.0; n]; n],
        lamb_dicke_pair: vec![vec![0.0; n]; 2],
    })
}

fn lamb_dicke_branch(k: f64, mass: f64, freqs: &[f64], vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|row| {
            row.iter()
                .zip(freqs)
                .map(|(b, w)| k * (HBAR / (2.0 * mass * w)).sqrt() * b)
                .collect()
        })
        .collect()
}

/// Fill the Lamb-Dicke matrices of `modes`.
pub fn lamb_dicke(config: &ChainConfig, modes: &mut ModeData) {
    modes.lamb_dicke_full = lamb_dicke_branch(
        config.wavevector_radial,
        config.ion_mass,
        &modes.mode_freqs_radial,
        &modes.mode_vectors_radial,
    );
    modes.lamb_dicke_axial = lamb_dicke_branch(
        config.wavevector_axial,
        config.ion_mass,
        &modes.mode_freqs_axial,
        &modes.mode_vectors_axial,
    );
    let (k1, k2) = config.illuminated_pair;
    modes.lamb_dicke_pair = vec![modes.lamb_dicke_full[k1].clone(), modes.lamb_dicke_full[k2].clone()];
}

/// Positions, modes and Lamb-Dicke parameters in one call.
pub fn compute_modes(config: &ChainConfig) -> Result<ModeData> {
    let positions = equilibrium_positions(config)?;
    let mut modes = normal_modes(config, &positions)?;
    lamb_dicke(config, &mut modes);
    Ok(modes)
}

/// Axial frequency (Hz) placing the lowest radial mode at `lowest_radial_hz`
/// for the given radial frequency; bisection on the monotone dependence.
pub fn axial_freq_for_lowest_radial(n_ions: usize, radial_freq_hz: f64, lowest_radial_hz: f64) -> Result<f64> {
    if !(lowest_radial_hz > 0.0 && lowest_radial_hz < radial_freq_hz) {
        return Err(Error::config("lowest_radial_hz", "must lie in (0, radial_freq_hz)"));
    }
    let u = equilibrium_positions_scaled(n_ions)?;
    // Largest eigenvalue of G sets the softest radial mode:
    // w_low^2 = w_rad^2 - g_max w_ax^2.
    let eig = SymmetricEigen::new(coulomb_hessian(&u));
    let g_max = eig.eigenvalues.iter().fold(f64::MIN, |m, &x| m.max(x));
    let ax2 = (radial_freq_hz * radial_freq_hz - lowest_radial_hz * lowest_radial_hz) / g_max;
    Ok(ax2.sqrt())
}
