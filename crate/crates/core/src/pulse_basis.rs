//! Clamped cubic-spline basis on uniform knots and the pulse envelope built
//! from it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse_solver::transform::CarrierInverse;

/// Cubic Hermite representation on uniform knots: values and first
/// derivatives at every knot.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl CubicSpline {
    fn locate(&self, t: f64) -> (usize, f64) {
        let n_int = self.values.len() - 1;
        let x = (t - self.t0) / self.h;
        let j = (x.floor().max(0.0) as usize).min(n_int - 1);
        (j, x - j as f64)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (j, u) = self.locate(t);
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.slopes[j] * self.h, self.slopes[j + 1] * self.h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (j, u) = self.locate(t);
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.slopes[j] * self.h, self.slopes[j + 1] * self.h);
        let u2 = u * u;
        ((6.0 * u2 - 6.0 * u) * y0 + (3.0 * u2 - 4.0 * u + 1.0) * d0 + (-6.0 * u2 + 6.0 * u) * y1 + (3.0 * u2 - 2.0 * u) * d1)
            / self.h
    }

    /// Second derivative on segment `seg` at local coordinate `u` in [0, 1].
    pub fn second_derivative_on(&self, seg: usize, u: f64) -> f64 {
        let (y0, y1) = (self.values[seg], self.values[seg + 1]);
        let (d0, d1) = (self.slopes[seg] * self.h, self.slopes[seg + 1] * self.h);
        ((12.0 * u - 6.0) * y0 + (6.0 * u - 4.0) * d0 + (-12.0 * u + 6.0) * y1 + (6.0 * u - 2.0) * d1)
            / (self.h * self.h)
    }

    /// Knots plus interior critical points of every segment, found exactly
    /// from the roots of the segment derivative.
    fn critical_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for j in 0..self.values.len() - 1 {
            let a = self.t0 + j as f64 * self.h;
            out.push((a, self.values[j]));
            let (y0, y1) = (self.values[j], self.values[j + 1]);
            let (d0, d1) = (self.slopes[j] * self.h, self.slopes[j + 1] * self.h);
            // dp/du = qa u^2 + qb u + qc
            let qa = 6.0 * y0 + 3.0 * d0 - 6.0 * y1 + 3.0 * d1;
            let qb = -6.0 * y0 - 4.0 * d0 + 6.0 * y1 - 2.0 * d1;
            let qc = d0;
            let mut roots = Vec::with_capacity(2);
            if qa.abs() < 1e-300 {
                if qb != 0.0 {
                    roots.push(-qc / qb);
                }
            } else {
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
                    roots.push(q / qa);
                    if q != 0.0 {
                        roots.push(qc / q);
                    }
                }
            }
            for u in roots {
                if u > 0.0 && u < 1.0 {
                    let t = a + u * self.h;
                    out.push((t, self.eval(t)));
                }
            }
        }
        let last = self.values.len() - 1;
        out.push((self.t0 + last as f64 * self.h, self.values[last]));
        out
    }

    /// Location and value of the extremum with largest magnitude.
    pub fn max_abs(&self) -> (f64, f64) {
        self.critical_points()
            .into_iter()
            .fold((self.t0, 0.0), |best, p| if p.1.abs() > best.1.abs() { p } else { best })
    }

    /// `(min, max)` over the whole interval.
    pub fn range(&self) -> (f64, f64) {
        self.critical_points()
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(v), hi.max(v)))
    }
}

/// Clamped cubic splines `b_s`, `s = 0..n_seg`, with `b_s(t_{s'+1}) = delta`,
/// zero value and zero slope at both ends, and C2 continuity inside.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    pub t0: f64,
    pub tf: f64,
    pub n_seg: usize,
    /// `n_seg + 2` uniform knots including both ends.
    pub knots: Vec<f64>,
    /// `slopes[s][j]`: derivative of `b_s` at knot `j`.
    slopes: Vec<Vec<f64>>,
}

/// Knot slopes of the clamped (zero end slope) C2 cubic through `values`.
fn clamped_slopes(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    if n <= 2 {
        return d;
    }
    // interior rows: d_{j-1} + 4 d_j + d_{j+1} = 3 (y_{j+1} - y_{j-1}) / h
    let m = n - 2;
    let mut diag = vec![4.0; m];
    let mut rhs: Vec<f64> = (1..n - 1).map(|j| 3.0 * (values[j + 1] - values[j - 1]) / h).collect();
    for i in 1..m {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
    }
    let mut x = vec![0.0; m];
    x[m - 1] = rhs[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = (rhs[i] - x[i + 1]) / diag[i];
    }
    d[1..n - 1].copy_from_slice(&x);
    d
}

impl SplineBasis {
    pub fn new(t0: f64, tf: f64, n_seg: usize) -> Result<Self> {
        if n_seg == 0 {
            return Err(Error::NoFreeParameters);
        }
        if !(tf > t0) {
            return Err(Error::Invalid(format!("tf ({tf}) must exceed t0 ({t0})")));
        }
        let h = (tf - t0) / (n_seg + 1) as f64;
        let knots: Vec<f64> = (0..n_seg + 2).map(|j| t0 + h * j as f64).collect();
        let slopes = (0..n_seg)
            .map(|s| {
                let mut y = vec![0.0; n_seg + 2];
                y[s + 1] = 1.0;
                clamped_slopes(&y, h)
            })
            .collect();
        Ok(SplineBasis {
            t0,
            tf,
            n_seg,
            knots,
            slopes,
        })
    }

    pub fn knot_spacing(&self) -> f64 {
        (self.tf - self.t0) / (self.n_seg + 1) as f64
    }

    /// Spline of basis function `s` alone.
    pub fn basis_spline(&self, s: usize) -> CubicSpline {
        let mut values = vec![0.0; self.n_seg + 2];
        values[s + 1] = 1.0;
        CubicSpline {
            t0: self.t0,
            h: self.knot_spacing(),
            values,
            slopes: self.slopes[s].clone(),
        }
    }

    /// `sum_s c_s b_s` as a single spline.
    pub fn combine(&self, coefficients: &[f64]) -> CubicSpline {
        assert_eq!(coefficients.len(), self.n_seg);
        let mut values = vec![0.0; self.n_seg + 2];
        values[1..=self.n_seg].copy_from_slice(coefficients);
        let mut slopes = vec![0.0; self.n_seg + 2];
        for (c, sl) in coefficients.iter().zip(&self.slopes) {
            for (acc, d) in slopes.iter_mut().zip(sl) {
                *acc += c * d;
            }
        }
        CubicSpline {
            t0: self.t0,
            h: self.knot_spacing(),
            values,
            slopes,
        }
    }

    pub fn eval_basis(&self, s: usize, t: f64) -> f64 {
        self.basis_spline(s).eval(t)
    }

    /// All basis functions at `times`, `[s][k]`.
    pub fn sample_all(&self, times: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_seg)
            .map(|s| {
                let sp = self.basis_spline(s);
                times.iter().map(|&t| sp.eval(t)).collect()
            })
            .collect()
    }
}

pub fn build_basis(t0: f64, tf: f64, n_seg: usize) -> Result<SplineBasis> {
    SplineBasis::new(t0, tf, n_seg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseKind {
    /// Spline with the stored coefficients.
    Linear,
    /// Odd-extended inverse carrier transform of the stored linear spline.
    Transformed,
    /// Uniform samples, cubic interpolation.
    RawSamples,
}

#[derive(Debug, Clone)]
enum Shape {
    Spline(CubicSpline),
    Transformed { spline: CubicSpline, inverse: CarrierInverse },
    Samples { dt: f64, samples: Vec<f64> },
}

/// Amplitude envelope `Omega(t)` in rad/s on `[t0, tf]`.
#[derive(Debug, Clone)]
pub struct Pulse {
    pub basis: SplineBasis,
    pub coefficients: Vec<f64>,
    pub kind: PulseKind,
    shape: Shape,
}

/// Serialized pulse.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PulseFile {
    pub t0: f64,
    pub tf: f64,
    pub n_seg: usize,
    pub coefficients: Vec<f64>,
    pub kind: PulseKind,
    /// Detuning (rad/s) the inverse transform was taken at; transformed pulses only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Uniform samples spanning `[t0, tf]`; raw-sample pulses only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

impl Pulse {
    pub fn linear(basis: SplineBasis, coefficients: Vec<f64>) -> Self {
        let spline = basis.combine(&coefficients);
        Pulse {
            basis,
            coefficients,
            kind: PulseKind::Linear,
            shape: Shape::Spline(spline),
        }
    }

    /// Zero envelope on `[t0, tf]`.
    pub fn zero(t0: f64, tf: f64) -> Self {
        let basis = SplineBasis::new(t0, tf, 1).expect("valid interval");
        Pulse::linear(basis, vec![0.0])
    }

    pub(crate) fn transformed(linear: &Pulse, inverse: CarrierInverse) -> Self {
        let spline = linear.spline().expect("linear pulse").clone();
        Pulse {
            basis: linear.basis.clone(),
            coefficients: linear.coefficients.clone(),
            kind: PulseKind::Transformed,
            shape: Shape::Transformed { spline, inverse },
        }
    }

    /// Pulse given by uniform samples over `[t0, tf]` (first and last sample at the ends).
    pub fn from_samples(t0: f64, tf: f64, samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::Invalid("raw-sample pulse needs at least 4 samples".into()));
        }
        let basis = SplineBasis::new(t0, tf, 1)?;
        let dt = (tf - t0) / (samples.len() - 1) as f64;
        Ok(Pulse {
            basis,
            coefficients: Vec::new(),
            kind: PulseKind::RawSamples,
            shape: Shape::Samples { dt, samples },
        })
    }

    pub fn t0(&self) -> f64 {
        self.basis.t0
    }

    pub fn tf(&self) -> f64 {
        self.basis.tf
    }

    /// The underlying cubic spline of linear and transformed pulses.
    pub fn spline(&self) -> Option<&CubicSpline> {
        match &self.shape {
            Shape::Spline(s) | Shape::Transformed { spline: s, .. } => Some(s),
            Shape::Samples { .. } => None,
        }
    }

    pub fn detuning(&self) -> Option<f64> {
        match &self.shape {
            Shape::Transformed { inverse, .. } => Some(inverse.mu()),
            _ => None,
        }
    }

    /// Envelope value without the domain check; `t` is clamped to the interval.
    pub fn value(&self, t: f64) -> f64 {
        let t = t.clamp(self.t0(), self.tf());
        match &self.shape {
            Shape::Spline(s) => s.eval(t),
            Shape::Transformed { spline, inverse } => inverse.apply_saturating(spline.eval(t)),
            Shape::Samples { dt, samples } => {
                let n = samples.len();
                let x = (t - self.t0()) / dt;
                let j = (x.floor() as isize).clamp(1, n as isize - 3) as usize;
                let u = x - j as f64;
                // 4-point Lagrange on nodes j-1..j+2 at offsets -1, 0, 1, 2
                let (p0, p1, p2, p3) = (samples[j - 1], samples[j], samples[j + 1], samples[j + 2]);
                -u * (u - 1.0) * (u - 2.0) / 6.0 * p0 + (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0 * p1
                    - (u + 1.0) * u * (u - 2.0) / 2.0 * p2
                    + (u + 1.0) * u * (u - 1.0) / 6.0 * p3
            }
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= self.t0() && t <= self.tf()) {
            return Err(Error::OutOfDomain {
                t,
                t0: self.t0(),
                tf: self.tf(),
            });
        }
        Ok(self.value(t))
    }

    pub fn evaluate_grid(&self, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.evaluate(t)).collect()
    }

    /// Values at quadrature nodes (known to lie inside the interval).
    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.value(t)).collect()
    }

    pub fn is_zero(&self) -> bool {
        match &self.shape {
            Shape::Spline(s) | Shape::Transformed { spline: s, .. } => s.values.iter().all(|&v| v == 0.0),
            Shape::Samples { samples, .. } => samples.iter().all(|&v| v == 0.0),
        }
    }

    /// Number of sign changes between knots of the linear spline (diagnostic).
    pub fn sign_changes(&self) -> usize {
        let vals: Vec<f64> = match &self.shape {
            Shape::Spline(s) | Shape::Transformed { spline: s, .. } => {
                (0..=(s.values.len() - 1) * 32).map(|k| s.eval(s.t0 + s.h * k as f64 / 32.0)).collect()
            }
            Shape::Samples { samples, .. } => samples.clone(),
        };
        let nz: Vec<f64> = vals.into_iter().filter(|v| v.abs() > 0.0).collect();
        nz.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
    }

    pub fn to_file(&self) -> PulseFile {
        let (mu, samples) = match &self.shape {
            Shape::Transformed { inverse, .. } => (Some(inverse.mu()), None),
            Shape::Samples { samples, .. } => (None, Some(samples.clone())),
            Shape::Spline(_) => (None, None),
        };
        PulseFile {
            t0: self.t0(),
            tf: self.tf(),
            n_seg: self.basis.n_seg,
            coefficients: self.coefficients.clone(),
            kind: self.kind,
            mu,
            samples,
            manifest_hash: None,
        }
    }

    pub fn from_file(file: &PulseFile) -> Result<Self> {
        match file.kind {
            PulseKind::Linear => {
                let basis = SplineBasis::new(file.t0, file.tf, file.n_seg)?;
                if file.coefficients.len() != file.n_seg {
                    return Err(Error::config("coefficients", "length must equal n_seg"));
                }
                Ok(Pulse::linear(basis, file.coefficients.clone()))
            }
            PulseKind::Transformed => {
                let mu = file.mu.ok_or_else(|| Error::config("mu", "required for transformed pulses"))?;
                let basis = SplineBasis::new(file.t0, file.tf, file.n_seg)?;
                if file.coefficients.len() != file.n_seg {
                    return Err(Error::config("coefficients", "length must equal n_seg"));
                }
                let lin = Pulse::linear(basis, file.coefficients.clone());
                crate::pulse_solver::inverse_transform(&lin, mu)
            }
            PulseKind::RawSamples => {
                let samples = file
                    .samples
                    .clone()
                    .ok_or_else(|| Error::config("samples", "required for raw-sample pulses"))?;
                Pulse::from_samples(file.t0, file.tf, samples)
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PulseFile = serde_json::from_str(&text)?;
        Pulse::from_file(&file)
    }

    /// `(t, Omega)` rows sampled at `rate_hz`, endpoints included.
    pub fn sampled(&self, rate_hz: f64) -> Vec<(f64, f64)> {
        let dt = 1.0 / rate_hz;
        let n = ((self.tf() - self.t0()) / dt).floor() as usize;
        let mut rows: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                let t = self.t0() + k as f64 * dt;
                (t, self.value(t))
            })
            .collect();
        if rows.last().map(|r| r.0 < self.tf() - 1e-3 * dt).unwrap_or(true) {
            rows.push((self.tf(), self.value(self.tf())));
        }
        rows
    }
}
