//! Vacuum matrix elements of products of multimode displacement operators
//! and single ladder operators.
//!
//! All functions evaluate `<0| D(a1)^+ X D(a2) Y D(a3) |0>` for multimode
//! displacements `a1, a2, a3`; sums over modes use the non-conjugating dot
//! product.

use num_complex::Complex64;

/// Ladder operator inserted between displacement factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Lower,
    Raise,
}

fn im_dot_conj(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a * b.conj()).im).sum()
}

/// `D(x) D(y) = exp(i Im(x . y*)) D(x + y)`: the phase angle.
pub fn composition_phase(x: &[Complex64], y: &[Complex64]) -> f64 {
    im_dot_conj(x, y)
}

/// `<0| D(a1)^+ D(a2) D(a3) |0>`.
pub fn vacuum_overlap(a1: &[Complex64], a2: &[Complex64], a3: &[Complex64]) -> Complex64 {
    let phase = -(im_dot_conj(a1, a2) + im_dot_conj(a1, a3) - im_dot_conj(a2, a3));
    let dist: f64 = a1
        .iter()
        .zip(a2)
        .zip(a3)
        .map(|((x, y), z)| (x - y - z).norm_sqr())
        .sum();
    Complex64::from_polar((-0.5 * dist).exp(), phase)
}

/// `<0| D(a1)^+ X_m1 D(a2) Y_m2 D(a3) |0>` for ladder operators `X`, `Y`.
pub fn ladder_element(
    first: Ladder,
    second: Ladder,
    m1: usize,
    m2: usize,
    a1: &[Complex64],
    a2: &[Complex64],
    a3: &[Complex64],
) -> Complex64 {
    let m = vacuum_overlap(a1, a2, a3);
    let factor = match (first, second) {
        (Ladder::Lower, Ladder::Lower) => (a2[m1] + a3[m1]) * a3[m2],
        (Ladder::Lower, Ladder::Raise) => {
            let delta = if m1 == m2 { 1.0 } else { 0.0 };
            (a1[m2].conj() - a2[m2].conj()) * (a2[m1] + a3[m1]) + delta
        }
        (Ladder::Raise, Ladder::Lower) => a1[m1].conj() * a3[m2],
        (Ladder::Raise, Ladder::Raise) => a1[m1].conj() * (a1[m2].conj() - a2[m2].conj()),
    };
    m * factor
}

/// `<0| D(a1)^+ (p1.a + q1.a^+)^+ D(a2) (p2.a + q2.a^+) D(a3) |0>`, summed over
/// both mode indices in closed form.
pub fn linear_form_element(
    p1: &[Complex64],
    q1: &[Complex64],
    p2: &[Complex64],
    q2: &[Complex64],
    a1: &[Complex64],
    a2: &[Complex64],
    a3: &[Complex64],
) -> Complex64 {
    let zero = Complex64::new(0.0, 0.0);
    let mut left = zero;
    let mut right = zero;
    let mut contraction = zero;
    for m in 0..a1.len() {
        left += p1[m].conj() * a1[m].conj() + q1[m].conj() * (a2[m] + a3[m]);
        right += p2[m] * a3[m] + q2[m] * (a1[m].conj() - a2[m].conj());
        contraction += q1[m].conj() * q2[m];
    }
    vacuum_overlap(a1, a2, a3) * (left * right + contraction)
}
