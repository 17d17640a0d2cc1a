//! Command-line front end: `modes`, `design`, `analyze`, `simulate`, `scan`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gate_analytics::{analyze, trajectories, FidelityBreakdown, TrajectoryRecord};
use crate::ion_chain::{compute_modes, ModeData};
use crate::manifest::{sha256_hex, Run, RunManifest};
use crate::pulse_basis::{Pulse, PulseFile, PulseKind, SplineBasis};
use crate::pulse_solver::{allowed_ratio, design_linear, inverse_transform, transform_constant, transform_residual};
use crate::scan::{min_gate_times, scan_grid, spin_flip_points, GridSpec};
use crate::tdse::{adaptive_cutoffs, simulate, state_io, HamiltonianKind, InitialState, SimResult};

#[derive(Debug, Parser)]
#[command(name = "msgate", version, about = "Carrier-compensated Molmer-Sorensen pulse design and verification")]
pub struct Cli {
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for `scan` and `simulate`; all cores when absent.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config files (TOML, or JSON by extension); later files override
    /// whole sections of earlier ones.
    #[arg(short, long = "config", required = true)]
    pub configs: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium positions, normal modes and Lamb-Dicke matrices.
    Modes {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Design the linear pulse and its carrier-compensated counterpart.
    Design {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, overrides_with = "no_transform")]
        transform: bool,
        #[arg(long)]
        no_transform: bool,
        /// Number of spline parameters.
        #[arg(long)]
        segments: Option<usize>,
    },
    /// Closed-form fidelity breakdown of a pulse.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        pulse: PathBuf,
        /// Drop the carrier term.
        #[arg(long)]
        no_carrier: bool,
        /// Skip the spin-flip integrals.
        #[arg(long)]
        no_spin_flip: bool,
        /// Write trajectories to this file in the output directory.
        #[arg(long)]
        trajectories: Option<String>,
    },
    /// Direct integration of the Schroedinger equation.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        hamiltonian: Option<HamiltonianKind>,
        /// `11z`, `11x`, `1m1x` or a JSON file with `re` and `im` arrays.
        #[arg(long)]
        state: Option<String>,
        /// Comma-separated, one per mode in ascending frequency.
        #[arg(long, value_delimiter = ',')]
        cutoffs: Option<Vec<usize>>,
        #[arg(long)]
        no_step_check: bool,
        /// Write the final state vector to this file in the output directory.
        #[arg(long)]
        dump: Option<String>,
    },
    /// Feasibility and infidelity over a `(t_gate, mu)` grid.
    Scan {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Use the 1450 x 800 grid instead of the configured one.
        #[arg(long)]
        full_grid: bool,
        /// Minimal gate times over the configured chain family.
        #[arg(long)]
        min_gate_times: bool,
        /// Spin-flip probabilities at the configured points.
        #[arg(long)]
        spin_flip_points: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Modes { .. } => "modes",
            Command::Design { .. } => "design",
            Command::Analyze { .. } => "analyze",
            Command::Simulate { .. } => "simulate",
            Command::Scan { .. } => "scan",
        }
    }

    fn configs(&self) -> &[PathBuf] {
        match self {
            Command::Modes { cfg }
            | Command::Design { cfg, .. }
            | Command::Analyze { cfg, .. }
            | Command::Simulate { cfg, .. }
            | Command::Scan { cfg, .. } => &cfg.configs,
        }
    }
}

/// Machine-readable error report printed to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        ErrorReport {
            error: e.kind(),
            message: e.to_string(),
            exit_code: e.exit_code(),
            field: match e {
                Error::Config { field, .. } => Some(field.clone()),
                _ => None,
            },
        }
    }
}

/// Merge config files section by section.
pub fn load_configs(paths: &[PathBuf]) -> Result<RunConfig> {
    let mut merged = serde_json::Map::new();
    for path in paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?
        } else {
            let table: toml::Table =
                toml::from_str(&text).map_err(|e| Error::config("config", format!("{}: {}", path.display(), e.message())))?;
            serde_json::to_value(table)?
        };
        match value {
            serde_json::Value::Object(sections) => merged.extend(sections),
            _ => return Err(Error::config("config", format!("{}: top level must be a table", path.display()))),
        }
    }
    RunConfig::parse(&serde_json::Value::Object(merged).to_string(), true)
}

/// Parse-free entry point; runs inside a pool of `--threads` workers.
pub fn run(cli: Cli) -> Result<RunManifest> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> Result<RunManifest> {
    let mut config = load_configs(cli.command.configs())?;
    let mut options = BTreeMap::new();
    let mut inputs = BTreeMap::new();
    match &cli.command {
        Command::Modes { .. } => {}
        Command::Design {
            transform,
            no_transform,
            segments,
            ..
        } => {
            if *no_transform {
                config.design.transform = false;
            } else if *transform {
                config.design.transform = true;
            }
            if segments.is_some() {
                config.design.n_seg = *segments;
            }
        }
        Command::Analyze {
            pulse,
            no_carrier,
            no_spin_flip,
            trajectories,
            ..
        } => {
            inputs.insert("pulse".into(), file_hash(pulse)?);
            options.insert("carrier".into(), (!no_carrier).to_string());
            options.insert("spin_flip".into(), (!no_spin_flip).to_string());
            if let Some(t) = trajectories {
                options.insert("trajectories".into(), t.clone());
            }
        }
        Command::Simulate {
            pulse,
            hamiltonian,
            state,
            cutoffs,
            no_step_check,
            dump,
            ..
        } => {
            inputs.insert("pulse".into(), file_hash(pulse)?);
            let sim = &mut config.simulate;
            if let Some(h) = hamiltonian {
                sim.hamiltonian = *h;
            }
            if let Some(s) = state {
                sim.state = s.clone();
            }
            if cutoffs.is_some() {
                sim.cutoffs = cutoffs.clone();
            }
            if *no_step_check {
                sim.step_check = false;
            }
            if !matches!(sim.state.as_str(), "11z" | "11x" | "1m1x") {
                inputs.insert("state".into(), file_hash(Path::new(&sim.state))?);
            }
            if let Some(d) = dump {
                options.insert("dump".into(), d.clone());
            }
        }
        Command::Scan {
            full_grid,
            min_gate_times,
            spin_flip_points,
            ..
        } => {
            if *full_grid {
                config.scan = Some(GridSpec::full());
            } else if config.scan.is_none() {
                config.scan = Some(GridSpec::desk());
            }
            options.insert("min_gate_times".into(), min_gate_times.to_string());
            options.insert("spin_flip_points".into(), spin_flip_points.to_string());
        }
    }
    config.validate()?;
    let mut run = Run::start(
        cli.command.name(),
        cli.command.configs(),
        &config,
        options,
        inputs,
        &cli.out_dir,
    )?;
    match &cli.command {
        Command::Modes { .. } => cmd_modes(&config, &mut run)?,
        Command::Design { .. } => cmd_design(&config, &mut run)?,
        Command::Analyze {
            pulse,
            no_carrier,
            no_spin_flip,
            trajectories,
            ..
        } => cmd_analyze(&config, &mut run, pulse, !no_carrier, !no_spin_flip, trajectories.as_deref())?,
        Command::Simulate { pulse, dump, .. } => cmd_simulate(&config, &mut run, pulse, dump.as_deref())?,
        Command::Scan {
            min_gate_times,
            spin_flip_points,
            ..
        } => cmd_scan(&config, &mut run, *min_gate_times, *spin_flip_points)?,
    }
    run.finish()
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::config("input", format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// One row per mode: branch, index, frequency, mode vector, Lamb-Dicke row.
pub fn modes_csv(modes: &ModeData) -> String {
    let n = modes.positions.len();
    let mut out = String::from("branch,mode,freq_hz");
    for i in 0..n {
        let _ = write!(out, ",b_{i}");
    }
    for i in 0..n {
        let _ = write!(out, ",eta_{i}");
    }
    out.push('\n');
    let branches = [
        ("radial", &modes.mode_freqs_radial, &modes.mode_vectors_radial, &modes.lamb_dicke_full),
        ("axial", &modes.mode_freqs_axial, &modes.mode_vectors_axial, &modes.lamb_dicke_axial),
    ];
    for (name, freqs, vectors, eta) in branches {
        for (m, w) in freqs.iter().enumerate() {
            let _ = write!(out, "{name},{m},{:e}", w / (2.0 * std::f64::consts::PI));
            for row in vectors.iter() {
                let _ = write!(out, ",{:e}", row[m]);
            }
            for row in eta.iter() {
                let _ = write!(out, ",{:e}", row[m]);
            }
            out.push('\n');
        }
    }
    out
}

fn cmd_modes(config: &RunConfig, run: &mut Run) -> Result<()> {
    let modes = compute_modes(&config.chain)?;
    run.write_json("modes.json", &modes)?;
    run.write_csv("modes.csv", &modes_csv(&modes))?;
    Ok(())
}

/// Solver and transform diagnostics of `design`.
#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub n_seg: usize,
    pub nullspace_dim: usize,
    pub smallest_singular: f64,
    /// `max |(A Omega)_m|`, dimensionless.
    pub residual_inf: f64,
    pub residual_relative: f64,
    /// `max |(A Omega)_m| / max |Omega|` with `Omega` in rad/s.
    pub residual_per_omega: f64,
    pub phase_error: f64,
    pub sign_changes: usize,
    pub max_omega_lin: f64,
    pub transform_constant: f64,
    /// `max |Omega_lin| / (C mu)`.
    pub allowed_ratio: f64,
    pub allowed: bool,
    /// `max |S(Omega_tr) - Omega_lin| / mu` on the sampled grid.
    pub transform_residual_per_mu: Option<f64>,
}

pub const TRANSFORM_CHECK_SAMPLES: usize = 20001;

fn cmd_design(config: &RunConfig, run: &mut Run) -> Result<()> {
    let gate = config.gate()?;
    let modes = compute_modes(&config.chain)?;
    let basis = SplineBasis::new(gate.t0, gate.tf, config.n_seg())?;
    let solution = design_linear(&basis, &modes, &gate, &config.quadrature)?;
    let linear = &solution.pulse;
    let ratio = allowed_ratio(linear, gate.mu);
    let max_omega = linear.spline().map(|s| s.max_abs().1.abs()).unwrap_or(0.0);
    let mut report = DesignReport {
        n_seg: basis.n_seg,
        nullspace_dim: solution.nullspace_dim,
        smallest_singular: solution.smallest_singular,
        residual_inf: solution.residual_inf,
        residual_relative: solution.residual_relative,
        residual_per_omega: if max_omega > 0.0 { solution.residual_inf / max_omega } else { 0.0 },
        phase_error: solution.phase_error,
        sign_changes: solution.sign_changes,
        max_omega_lin: max_omega,
        transform_constant: transform_constant(),
        allowed_ratio: ratio,
        allowed: ratio <= 1.0,
        transform_residual_per_mu: None,
    };
    run.write_json("pulse_linear.json", &linear.to_file())?;
    let mut rows: Vec<(f64, f64, Option<f64>)> = linear
        .sampled(config.design.sample_rate_hz)
        .into_iter()
        .map(|(t, w)| (t, w, None))
        .collect();
    let transformed = if config.design.transform {
        match inverse_transform(linear, gate.mu) {
            Ok(tr) => Some(tr),
            Err(e) => {
                run.write_json("residuals.json", &report)?;
                return Err(e);
            }
        }
    } else {
        None
    };
    if let Some(tr) = &transformed {
        report.transform_residual_per_mu = Some(transform_residual(linear, tr, gate.mu, TRANSFORM_CHECK_SAMPLES) / gate.mu);
        for row in rows.iter_mut() {
            row.2 = Some(tr.value(row.0));
        }
    }
    run.write_json("pulse.json", &transformed.as_ref().unwrap_or(linear).to_file())?;
    let mut csv = String::from(if transformed.is_some() { "t,omega_lin,omega_tr\n" } else { "t,omega_lin\n" });
    for (t, lin, tr) in rows {
        match tr {
            Some(v) => writeln!(csv, "{t:e},{lin:e},{v:e}"),
            None => writeln!(csv, "{t:e},{lin:e}"),
        }
        .expect("string write");
    }
    run.write_csv("pulse.csv", &csv)?;
    run.write_json("residuals.json", &report)?;
    info!("design: allowed ratio {ratio:.4}, phase error {:.2e}", solution.phase_error);
    Ok(())
}

/// Load a pulse and check it spans the configured gate interval.
fn load_pulse(path: &Path, gate_t0: f64, gate_tf: f64) -> Result<Pulse> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("pulse", format!("cannot read {}: {e}", path.display())))?;
    let file: PulseFile =
        serde_json::from_str(&text).map_err(|e| Error::config("pulse", format!("{}: {e}", path.display())))?;
    let pulse = Pulse::from_file(&file)?;
    let tol = 1e-12 * gate_tf.abs().max(1e-9);
    if (pulse.t0() - gate_t0).abs() > tol || (pulse.tf() - gate_tf).abs() > tol {
        return Err(Error::config(
            "pulse",
            format!(
                "pulse spans [{:e}, {:e}] s but the gate spans [{gate_t0:e}, {gate_tf:e}] s",
                pulse.t0(),
                pulse.tf()
            ),
        ));
    }
    Ok(pulse)
}

#[derive(Debug, Serialize)]
struct AnalyzeReport<'a> {
    pulse_kind: PulseKind,
    carrier_on: bool,
    #[serde(flatten)]
    breakdown: &'a FidelityBreakdown,
}

/// `t`, then `Re`/`Im` of `alpha_im` for ion `i` and mode `m`, then the spin
/// phase and the carrier phase.
pub fn trajectories_csv(record: &TrajectoryRecord) -> String {
    let n_modes = record.alpha.first().map(|a| a[0].len()).unwrap_or(0);
    let mut out = String::from("t");
    for i in 0..2 {
        for m in 0..n_modes {
            let _ = write!(out, ",re_alpha_{i}_{m},im_alpha_{i}_{m}");
        }
    }
    out.push_str(",chi12,phi_carrier\n");
    for (k, t) in record.times.iter().enumerate() {
        let _ = write!(out, "{t:e}");
        for ion in &record.alpha[k] {
            for a in ion {
                let _ = write!(out, ",{:e},{:e}", a.re, a.im);
            }
        }
        let _ = writeln!(out, ",{:e},{:e}", record.chi12[k], record.phi_carrier[k]);
    }
    out
}

fn cmd_analyze(
    config: &RunConfig,
    run: &mut Run,
    pulse_path: &Path,
    carrier_on: bool,
    with_spin_flip: bool,
    trajectories_name: Option<&str>,
) -> Result<()> {
    let gate = config.gate()?;
    let modes = compute_modes(&config.chain)?;
    let pulse = load_pulse(pulse_path, gate.t0, gate.tf)?;
    let breakdown = analyze(&pulse, &modes, &gate, &config.quadrature, carrier_on, with_spin_flip);
    run.write_json(
        "breakdown.json",
        &AnalyzeReport {
            pulse_kind: pulse.kind,
            carrier_on,
            breakdown: &breakdown,
        },
    )?;
    if let Some(name) = trajectories_name {
        let record = trajectories(&pulse, &modes, &gate, &config.quadrature, carrier_on);
        run.write_csv(name, &trajectories_csv(&record))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    cutoffs_source: &'static str,
    #[serde(flatten)]
    result: &'a SimResult,
}

fn cmd_simulate(config: &RunConfig, run: &mut Run, pulse_path: &Path, dump: Option<&str>) -> Result<()> {
    let gate = config.gate()?;
    let modes = compute_modes(&config.chain)?;
    let pulse = load_pulse(pulse_path, gate.t0, gate.tf)?;
    let sim = &config.simulate;
    let state = InitialState::parse(&sim.state)?;
    let (cutoffs, source) = match &sim.cutoffs {
        Some(c) => {
            if c.len() != modes.n_modes() {
                return Err(Error::config(
                    "cutoffs",
                    format!("{} values given for {} modes", c.len(), modes.n_modes()),
                ));
            }
            (c.clone(), "configured")
        }
        None => (adaptive_cutoffs(&pulse, &modes, &gate), "adaptive"),
    };
    info!("simulate: cutoffs {cutoffs:?} ({source})");
    let result = simulate(sim.hamiltonian, &modes, &cutoffs, &pulse, &gate, &state, &sim.integrator())?;
    run.write_json(
        "sim_result.json",
        &SimulateReport {
            cutoffs_source: source,
            result: &result,
        },
    )?;
    if let Some(name) = dump {
        let mut bytes = Vec::with_capacity(16 + 16 * result.final_state.len());
        state_io::write_state(&mut bytes, &result.final_state)?;
        run.write_bytes(name, &bytes)?;
    }
    Ok(())
}

fn cmd_scan(config: &RunConfig, run: &mut Run, with_min_times: bool, with_flip_points: bool) -> Result<()> {
    let spec = config.scan.clone().unwrap_or_else(GridSpec::desk);
    let grid = scan_grid(&config.chain, &spec, &config.quadrature)?;
    run.write_csv("scan.csv", &grid.to_csv())?;
    run.write_json("scan_summary.json", &grid.summary())?;
    if with_min_times {
        let family = config
            .family
            .as_ref()
            .ok_or_else(|| Error::config("family", "missing [family] section"))?;
        let times = min_gate_times(family, &spec, &config.quadrature)?;
        let mut csv = String::from("n_ions,axial_freq_hz,t_min,t_min_star\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for t in &times {
            let _ = writeln!(csv, "{},{:e},{},{}", t.n_ions, t.axial_freq_hz, opt(t.t_min), opt(t.t_min_star));
        }
        run.write_csv("min_gate_times.csv", &csv)?;
        run.write_json("min_gate_times.json", &times)?;
    }
    if with_flip_points {
        if config.spin_flip_points.is_empty() {
            return Err(Error::config("spin_flip_points", "no points configured"));
        }
        let modes = compute_modes(&config.chain)?;
        let n_seg = spec.segments_for(config.chain.n_ions);
        let points = spin_flip_points(&modes, &spec, n_seg, &config.spin_flip_points, &config.quadrature);
        run.write_json("spin_flip_points.json", &points)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
