//! Sweeps over gate duration and detuning: feasibility, allowed areas where
//! the carrier transform can be inverted, leading-order infidelities, and
//! minimal gate times as a function of chain length.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate_analytics::{analyze, spin_flip_probability, STRINGS};
use crate::ion_chain::{axial_freq_for_lowest_radial, compute_modes, ChainConfig, ModeData};
use crate::pulse_basis::SplineBasis;
use crate::pulse_solver::{allowed_ratio, design_linear, inverse_transform, transform_constant, GateSpec, Quadrature};

/// Grid over `(t_gate, mu)` with the fixed parts of the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// s
    pub t_gate_min: f64,
    /// s
    pub t_gate_max: f64,
    pub n_t_gate: usize,
    pub mu_min_hz: f64,
    pub mu_max_hz: f64,
    pub n_mu: usize,
    /// Free spline parameters; `2 n_ions + 1` when absent.
    #[serde(default)]
    pub n_seg: Option<usize>,
    #[serde(default)]
    pub psi: f64,
    #[serde(default = "default_phi")]
    pub phi_target: f64,
    /// Infidelity threshold for `t_min*`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_phi() -> f64 {
    PI / 4.0
}

fn default_threshold() -> f64 {
    1e-5
}

impl GridSpec {
    /// 120 x 80 cells over 5-150 us and 0.6-1.2 MHz.
    pub fn desk() -> Self {
        GridSpec {
            t_gate_min: 5e-6,
            t_gate_max: 150e-6,
            n_t_gate: 120,
            mu_min_hz: 0.6e6,
            mu_max_hz: 1.2e6,
            n_mu: 80,
            n_seg: None,
            psi: 0.0,
            phi_target: PI / 4.0,
            threshold: 1e-5,
        }
    }

    /// 1450 x 800 cells over the same ranges.
    pub fn full() -> Self {
        GridSpec {
            n_t_gate: 1450,
            n_mu: 800,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_gate_min", self.t_gate_min),
            ("t_gate_max", self.t_gate_max),
            ("mu_min_hz", self.mu_min_hz),
            ("mu_max_hz", self.mu_max_hz),
            ("threshold", self.threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.t_gate_max < self.t_gate_min {
            return Err(Error::config("t_gate_max", "must not be below t_gate_min"));
        }
        if self.mu_max_hz < self.mu_min_hz {
            return Err(Error::config("mu_max_hz", "must not be below mu_min_hz"));
        }
        if self.n_t_gate == 0 || self.n_mu == 0 {
            return Err(Error::config("n_t_gate", "grid needs at least one cell per axis"));
        }
        if self.n_seg == Some(0) {
            return Err(Error::config("n_seg", "must be at least 1"));
        }
        Ok(())
    }

    pub fn t_values(&self) -> Vec<f64> {
        linspace(self.t_gate_min, self.t_gate_max, self.n_t_gate)
    }

    /// rad/s
    pub fn mu_values(&self) -> Vec<f64> {
        linspace(self.mu_min_hz, self.mu_max_hz, self.n_mu)
            .into_iter()
            .map(|f| 2.0 * PI * f)
            .collect()
    }

    pub fn segments_for(&self, n_ions: usize) -> usize {
        self.n_seg.unwrap_or(2 * n_ions + 1)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// One grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    /// s
    pub t_gate: f64,
    /// rad/s
    pub mu: f64,
    pub feasible: bool,
    pub allowed: bool,
    pub inf_lin: Option<f64>,
    pub inf_tr: Option<f64>,
    pub max_omega_ratio: Option<f64>,
    /// Why the cell is infeasible, when it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Cells in row-major order: `t_gate` index major, `mu` index minor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub spec: GridSpec,
    pub n_ions: usize,
    pub transform_constant: f64,
    pub t_values: Vec<f64>,
    pub mu_values: Vec<f64>,
    pub cells: Vec<ScanCell>,
}

impl ScanGrid {
    pub fn cell(&self, it: usize, imu: usize) -> &ScanCell {
        &self.cells[it * self.mu_values.len() + imu]
    }

    /// Allowed cells whose four neighbours are allowed too.
    pub fn interior_allowed(&self) -> Vec<(usize, usize)> {
        let (nt, nm) = (self.t_values.len(), self.mu_values.len());
        let mut out = Vec::new();
        for it in 1..nt.saturating_sub(1) {
            for im in 1..nm.saturating_sub(1) {
                let all = [(it, im), (it - 1, im), (it + 1, im), (it, im - 1), (it, im + 1)]
                    .iter()
                    .all(|&(a, b)| self.cell(a, b).allowed);
                if all {
                    out.push((it, im));
                }
            }
        }
        out
    }

    pub fn summary(&self) -> ScanSummary {
        let nm = self.mu_values.len();
        let lower_edge: Vec<Option<f64>> = (0..nm)
            .map(|im| {
                (0..self.t_values.len())
                    .find(|&it| self.cell(it, im).allowed)
                    .map(|it| self.t_values[it])
            })
            .collect();
        let t_min = lower_edge.iter().flatten().copied().reduce(f64::min);
        let t_min_star = self
            .cells
            .iter()
            .filter(|c| c.inf_tr.is_some_and(|x| x <= self.spec.threshold))
            .map(|c| c.t_gate)
            .reduce(f64::min);
        let count = |f: &dyn Fn(&ScanCell) -> bool| self.cells.iter().filter(|c| f(c)).count();
        ScanSummary {
            n_ions: self.n_ions,
            transform_constant: self.transform_constant,
            threshold: self.spec.threshold,
            cells: self.cells.len(),
            feasible_cells: count(&|c| c.feasible),
            allowed_cells: count(&|c| c.allowed),
            mu_values: self.mu_values.clone(),
            allowed_lower_edge: lower_edge,
            t_min,
            t_min_star,
        }
    }

    /// Long-format CSV, one row per cell; empty fields where undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_gate,mu,feasible,allowed,inf_lin,inf_tr,max_omega_ratio\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:e},{:e},{},{},{},{},{}",
                c.t_gate,
                c.mu,
                c.feasible as u8,
                c.allowed as u8,
                opt(c.inf_lin),
                opt(c.inf_tr),
                opt(c.max_omega_ratio)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub n_ions: usize,
    pub transform_constant: f64,
    pub threshold: f64,
    pub cells: usize,
    pub feasible_cells: usize,
    pub allowed_cells: usize,
    /// rad/s
    pub mu_values: Vec<f64>,
    /// Earliest allowed `t_gate` per detuning.
    pub allowed_lower_edge: Vec<Option<f64>>,
    pub t_min: Option<f64>,
    pub t_min_star: Option<f64>,
}

/// Design, transform and analyse a single `(t_gate, mu)` point.
pub fn evaluate_cell(modes: &ModeData, spec: &GridSpec, n_seg: usize, t_gate: f64, mu: f64, quad: &Quadrature) -> ScanCell {
    let mut cell = ScanCell {
        t_gate,
        mu,
        feasible: false,
        allowed: false,
        inf_lin: None,
        inf_tr: None,
        max_omega_ratio: None,
        diagnostic: None,
    };
    let gate = GateSpec::new(mu, spec.psi, spec.phi_target, 0.0, t_gate);
    let linear = SplineBasis::new(0.0, t_gate, n_seg).and_then(|basis| design_linear(&basis, modes, &gate, quad));
    let linear = match linear {
        Ok(l) => l,
        Err(e) => {
            cell.diagnostic = Some(e.kind().to_string());
            return cell;
        }
    };
    cell.feasible = true;
    let ratio = allowed_ratio(&linear.pulse, mu);
    cell.max_omega_ratio = Some(ratio);
    cell.inf_lin = Some(analyze(&linear.pulse, modes, &gate, quad, true, false).infidelity_z);
    if ratio <= 1.0 {
        match inverse_transform(&linear.pulse, mu) {
            Ok(tr) => {
                cell.allowed = true;
                cell.inf_tr = Some(analyze(&tr, modes, &gate, quad, true, false).infidelity_z);
            }
            Err(e) => cell.diagnostic = Some(e.kind().to_string()),
        }
    }
    cell
}

/// Evaluate every cell on the rayon pool; the result does not depend on the
/// number of workers.
pub fn scan_grid(chain: &ChainConfig, spec: &GridSpec, quad: &Quadrature) -> Result<ScanGrid> {
    spec.validate()?;
    let modes = compute_modes(chain)?;
    let n_seg = spec.segments_for(chain.n_ions);
    let t_values = spec.t_values();
    let mu_values = spec.mu_values();
    let nm = mu_values.len();
    info!("scan: {} x {} cells, n_seg = {n_seg}", t_values.len(), nm);
    let cells: Vec<ScanCell> = (0..t_values.len() * nm)
        .into_par_iter()
        .map(|k| evaluate_cell(&modes, spec, n_seg, t_values[k / nm], mu_values[k % nm], quad))
        .collect();
    Ok(ScanGrid {
        spec: spec.clone(),
        n_ions: chain.n_ions,
        transform_constant: transform_constant(),
        t_values,
        mu_values,
        cells,
    })
}

/// Chain family for minimal-gate-time studies: the axial frequency is
/// retuned per chain length so that the lowest radial mode sits at
/// `lowest_radial_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFamily {
    pub n_ions: Vec<usize>,
    pub radial_freq_hz: f64,
    #[serde(default = "default_lowest_radial")]
    pub lowest_radial_hz: f64,
    /// Template for mass, charge and wavevector; `n_ions`, the axial
    /// frequency and the illuminated pair are overridden.
    pub template: ChainConfig,
}

fn default_lowest_radial() -> f64 {
    0.75e6
}

impl ChainFamily {
    /// Chain of `n` ions with the two central ions illuminated.
    pub fn chain(&self, n: usize) -> Result<ChainConfig> {
        let axial = axial_freq_for_lowest_radial(n, self.radial_freq_hz, self.lowest_radial_hz)?;
        let centre = (n - 1) / 2;
        Ok(ChainConfig {
            n_ions: n,
            axial_freq_hz: axial,
            radial_freq_hz: self.radial_freq_hz,
            illuminated_pair: (centre, centre + 1),
            ..self.template.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinGateTime {
    pub n_ions: usize,
    pub axial_freq_hz: f64,
    pub t_min: Option<f64>,
    pub t_min_star: Option<f64>,
}

/// `t_min` (earliest allowed time) and `t_min*` (earliest time with
/// `inf_tr <= threshold`) per chain length. Non-monotone results are logged,
/// not rejected.
pub fn min_gate_times(family: &ChainFamily, spec: &GridSpec, quad: &Quadrature) -> Result<Vec<MinGateTime>> {
    let mut out = Vec::with_capacity(family.n_ions.len());
    for &n in &family.n_ions {
        let chain = family.chain(n)?;
        let summary = scan_grid(&chain, spec, quad)?.summary();
        out.push(MinGateTime {
            n_ions: n,
            axial_freq_hz: chain.axial_freq_hz,
            t_min: summary.t_min,
            t_min_star: summary.t_min_star,
        });
    }
    for pair in out.windows(2) {
        let later = |a: Option<f64>, b: Option<f64>| matches!((a, b), (Some(x), Some(y)) if y < x);
        if later(pair[0].t_min, pair[1].t_min) || later(pair[0].t_min_star, pair[1].t_min_star) {
            warn!("minimal gate time decreases from n = {} to n = {}", pair[0].n_ions, pair[1].n_ions);
        }
    }
    Ok(out)
}

/// Requested analysis point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// s
    pub t_gate: f64,
    pub mu_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinFlipPoint {
    pub t_gate: f64,
    /// rad/s
    pub mu: f64,
    pub allowed: bool,
    /// `P_flip` of the transformed pulse per x-string, in the order of
    /// [`STRINGS`].
    pub p_flip: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Spin-flip probabilities of the transformed pulse at selected points.
pub fn spin_flip_points(modes: &ModeData, spec: &GridSpec, n_seg: usize, points: &[ScanPoint], quad: &Quadrature) -> Vec<SpinFlipPoint> {
    points
        .par_iter()
        .map(|p| {
            let mu = 2.0 * PI * p.mu_hz;
            let gate = GateSpec::new(mu, spec.psi, spec.phi_target, 0.0, p.t_gate);
            let transformed = SplineBasis::new(0.0, p.t_gate, n_seg)
                .and_then(|basis| design_linear(&basis, modes, &gate, quad))
                .and_then(|linear| inverse_transform(&linear.pulse, mu));
            match transformed {
                Ok(tr) => SpinFlipPoint {
                    t_gate: p.t_gate,
                    mu,
                    allowed: true,
                    p_flip: Some(STRINGS.map(|s| spin_flip_probability(&tr, modes, &gate, quad, s))),
                    diagnostic: None,
                },
                Err(e) => SpinFlipPoint {
                    t_gate: p.t_gate,
                    mu,
                    allowed: false,
                    p_flip: None,
                    diagnostic: Some(e.kind().to_string()),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{CA40_ION_MASS, ELEMENTARY_CHARGE};

    fn two_ion_chain() -> ChainConfig {
        ChainConfig {
            n_ions: 2,
            ion_mass: CA40_ION_MASS,
            charge: ELEMENTARY_CHARGE,
            axial_freq_hz: 0.3e6,
            radial_freq_hz: 1.0e6,
            wavevector_axial: 0.0,
            wavevector_radial: 2.0 * PI / 729e-9,
            illuminated_pair: (0, 1),
        }
    }

    fn small_spec() -> GridSpec {
        GridSpec {
            t_gate_min: 5e-6,
            t_gate_max: 60e-6,
            n_t_gate: 6,
            mu_min_hz: 0.9e6,
            mu_max_hz: 1.1e6,
            n_mu: 5,
            ..GridSpec::desk()
        }
    }

    #[test]
    fn allowed_implies_feasible_and_ratio_bound() {
        let grid = scan_grid(&two_ion_chain(), &small_spec(), &Quadrature::default()).unwrap();
        assert_eq!(grid.cells.len(), 30);
        for c in &grid.cells {
            if c.allowed {
                assert!(c.feasible);
                assert!(c.max_omega_ratio.unwrap() <= 1.0);
                assert!(c.inf_tr.is_some());
            } else {
                assert!(c.inf_tr.is_none());
            }
            assert_eq!(c.feasible, c.inf_lin.is_some());
        }
        assert!(grid.cells.iter().any(|c| c.allowed));
    }

    #[test]
    fn cells_are_independent_and_deterministic() {
        let chain = two_ion_chain();
        let spec = small_spec();
        let quad = Quadrature::default();
        let grid = scan_grid(&chain, &spec, &quad).unwrap();
        let again = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| scan_grid(&chain, &spec, &quad).unwrap());
        assert_eq!(grid, again);
        assert_eq!(grid.to_csv(), again.to_csv());
        let modes = compute_modes(&chain).unwrap();
        let (it, im) = (4, 2);
        let alone = evaluate_cell(&modes, &spec, spec.segments_for(2), grid.t_values[it], grid.mu_values[im], &quad);
        assert_eq!(&alone, grid.cell(it, im));
    }

    #[test]
    fn summary_edges() {
        let grid = scan_grid(&two_ion_chain(), &small_spec(), &Quadrature::default()).unwrap();
        let s = grid.summary();
        assert_eq!(s.allowed_lower_edge.len(), 5);
        let t_min = s.t_min.unwrap();
        assert!(grid.cells.iter().filter(|c| c.allowed).all(|c| c.t_gate >= t_min));
        if let Some(star) = s.t_min_star {
            assert!(star >= t_min);
        }
        let csv = grid.to_csv();
        assert_eq!(csv.lines().count(), 31);
        assert!(csv.starts_with("t_gate,mu,feasible,allowed,inf_lin,inf_tr,max_omega_ratio"));
    }

    #[test]
    fn rejects_bad_grid() {
        let mut spec = small_spec();
        spec.n_mu = 0;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.t_gate_max = 1e-6;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn family_retunes_axial_frequency() {
        let family = ChainFamily {
            n_ions: vec![3, 5],
            radial_freq_hz: 1e6,
            lowest_radial_hz: 0.75e6,
            template: two_ion_chain(),
        };
        for n in [3, 5] {
            let chain = family.chain(n).unwrap();
            let modes = compute_modes(&chain).unwrap();
            assert!((modes.gate_freqs()[0] / (2.0 * PI) - 0.75e6).abs() < 1.0);
        }
    }
}
