//! Bessel functions of the first kind for small integer order.

/// `J_0(x)`, `J_1(x)`, `J_2(x)` evaluated together.
///
/// Miller's backward recurrence normalized with `J_0 + 2 sum_k J_{2k} = 1`;
/// accurate to a few ulp for the moderate arguments the carrier transform
/// needs, and usable for any finite `x`.
pub fn bessel_j012(x: f64) -> [f64; 3] {
    let ax = x.abs();
    if ax < 1e-6 {
        let q = 0.25 * ax * ax;
        let j0 = 1.0 - q;
        let j1 = 0.5 * ax * (1.0 - 0.5 * q);
        let j2 = 0.125 * ax * ax * (1.0 - q / 3.0);
        return [j0, if x < 0.0 { -j1 } else { j1 }, j2];
    }
    let top = ax.max(2.0);
    let mut start = (top + 20.0 + (40.0 * top).sqrt()) as usize;
    start += start % 2;

    let mut next = 0.0_f64; // J_{k+1}
    let mut cur = 1e-300_f64; // J_k
    let mut even_sum = 0.0_f64;
    let mut out = [0.0_f64; 3];
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        // cur now holds J_{k-1}
        let idx = k - 1;
        if idx < 3 {
            out[idx] = cur;
        }
        if idx % 2 == 0 && idx > 0 {
            even_sum += cur;
        }
        if cur.abs() > 1e250 {
            let s = 1e-250;
            cur *= s;
            next *= s;
            even_sum *= s;
            for o in out.iter_mut() {
                *o *= s;
            }
        }
    }
    let norm = out[0] + 2.0 * even_sum;
    let mut j = [out[0] / norm, out[1] / norm, out[2] / norm];
    if x < 0.0 {
        j[1] = -j[1];
    }
    j
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j012(x)[0]
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j012(x)[1]
}

pub fn bessel_j2(x: f64) -> f64 {
    bessel_j012(x)[2]
}
