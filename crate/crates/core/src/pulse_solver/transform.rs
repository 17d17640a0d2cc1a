//! The carrier transform `S(W) = W (J0(2W/mu) + J2(2W/mu)) = mu J1(2W/mu)`
//! and its inverse on the monotone branch.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::special::bessel_j012;

/// `S(omega)` via the Bessel sum form.
pub fn carrier_transform(omega: f64, mu: f64) -> f64 {
    let [j0, _, j2] = bessel_j012(2.0 * omega / mu);
    omega * (j0 + j2)
}

/// `S(omega)` via the recurrence form `mu J1(2 omega / mu)`.
pub fn carrier_transform_j1(omega: f64, mu: f64) -> f64 {
    mu * bessel_j012(2.0 * omega / mu)[1]
}

/// Maximum of `J1` on the first lobe: `(argument, value)`.
///
/// `max S / mu = C` is attained at `omega* = mu * argument / 2`.
pub fn transform_peak() -> (f64, f64) {
    static PEAK: OnceLock<(f64, f64)> = OnceLock::new();
    *PEAK.get_or_init(|| {
        let j1 = |y: f64| bessel_j012(y)[1];
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (0.5_f64, 3.0_f64);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        let (mut fc, mut fd) = (j1(c), j1(d));
        while hi - lo > 1e-12 {
            if fc > fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = j1(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = j1(d);
            }
        }
        let y = 0.5 * (lo + hi);
        (y, j1(y))
    })
}

/// The transform constant `C = max_omega S(omega) / mu`.
pub fn transform_constant() -> f64 {
    transform_peak().1
}

/// Inverse of `S` at a fixed detuning, odd-extended to negative arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierInverse {
    mu: f64,
    peak_arg: f64,
    c: f64,
}

impl CarrierInverse {
    pub fn new(mu: f64) -> Self {
        let (peak_arg, c) = transform_peak();
        CarrierInverse { mu, peak_arg, c }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Largest admissible `|S|`, i.e. `C mu`.
    pub fn limit(&self) -> f64 {
        self.c * self.mu
    }

    /// `omega*`, the end of the monotone branch.
    pub fn omega_star(&self) -> f64 {
        0.5 * self.mu * self.peak_arg
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        if x.abs() > self.limit() {
            return Err(Error::OutsideAllowedArea {
                time: f64::NAN,
                value: x.abs(),
                limit: self.limit(),
                margin: x.abs() - self.limit(),
            });
        }
        Ok(self.apply_saturating(x))
    }

    /// Like [`apply`](Self::apply), mapping `|x| > C mu` to `omega*`.
    pub fn apply_saturating(&self, x: f64) -> f64 {
        let r = (x.abs() / self.mu).min(self.c);
        if r == 0.0 {
            return 0.0;
        }
        let y = solve_j1(r, self.peak_arg, self.c);
        (0.5 * self.mu * y).copysign(x)
    }
}

/// Root of `J1(y) = r` on `[0, y_peak]`, safeguarded Newton.
fn solve_j1(r: f64, y_peak: f64, c: f64) -> f64 {
    if r >= c {
        return y_peak;
    }
    let (mut lo, mut hi) = (0.0_f64, y_peak);
    // J1(y) ~ y/2 - y^3/16 ; invert the cubic's leading terms
    let mut y = (2.0 * r * (1.0 + 0.5 * r * r)).min(0.99 * y_peak);
    if !(y > lo && y < hi) {
        y = 0.5 * (lo + hi);
    }
    for _ in 0..100 {
        let [j0, j1, _] = bessel_j012(y);
        let f = j1 - r;
        if f == 0.0 {
            return y;
        }
        if f > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let deriv = j0 - j1 / y;
        let mut next = y - f / deriv;
        if !(next > lo && next < hi) || deriv <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-16 * y.max(1e-300) || hi - lo <= 1e-16 * hi {
            return next;
        }
        y = next;
    }
    y
}
