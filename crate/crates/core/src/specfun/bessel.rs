//! Bessel functions of the first kind of integer order and their zeros.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::SpecFunError;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

const SERIES_LIMIT: f64 = 12.0;
const RESCALE_AT: f64 = 1e200;

/// `J_m(x)` for integer `m >= 0`.
///
/// Power series for `|x| <= 12`, Miller's downward recurrence normalized by
/// `J_0 + 2 sum J_{2k} = 1` beyond that.
pub fn bessel_j(m: u32, x: f64) -> f64 {
    if x < 0.0 {
        let v = bessel_j(m, -x);
        return if m.is_multiple_of(2) { v } else { -v };
    }
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if x <= SERIES_LIMIT {
        series(m, x)
    } else {
        miller(m, x)
    }
}

fn series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=m {
        term *= half / i as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -q / (k * (m as f64 + k));
        sum += term;
        if k > half && term.abs() <= 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        if k > 200.0 {
            break;
        }
    }
    sum
}

fn miller(m: u32, x: f64) -> f64 {
    let top = (m as f64).max(x);
    let mut start = (top + 20.0 + (40.0 * top).sqrt()) as u64;
    start += start % 2;
    let tox = 2.0 / x;
    let (mut bjp, mut bj) = (0.0f64, 1.0f64);
    let (mut sum, mut ans) = (0.0f64, 0.0f64);
    let mut even = false;
    for j in (1..=start).rev() {
        let bjm = j as f64 * tox * bj - bjp;
        bjp = bj;
        bj = bjm;
        if bj.abs() > RESCALE_AT {
            bj /= RESCALE_AT;
            bjp /= RESCALE_AT;
            ans /= RESCALE_AT;
            sum /= RESCALE_AT;
        }
        if even {
            sum += bj;
        }
        even = !even;
        if j == m as u64 {
            ans = bjp;
        }
    }
    let norm = 2.0 * sum - bj;
    if m == 0 {
        bj / norm
    } else {
        ans / norm
    }
}

/// `J_m'(x)` via `2 J_m' = J_{m-1} - J_{m+1}`.
pub fn bessel_j_derivative(m: u32, x: f64) -> f64 {
    if m == 0 {
        -bessel_j(1, x)
    } else {
        0.5 * (bessel_j(m - 1, x) - bessel_j(m + 1, x))
    }
}

fn mcmahon(m: u32, k: usize) -> f64 {
    let mu = 4.0 * (m as f64) * (m as f64);
    let beta = (k as f64 + 0.5 * m as f64 - 0.25) * PI;
    let e = 8.0 * beta;
    beta - (mu - 1.0) / e - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * e * e * e)
}

fn zero_in_bracket(m: u32, mut a: f64, mut b: f64, mut fa: f64, guess: f64) -> f64 {
    let mut x = if guess > a && guess < b { guess } else { 0.5 * (a + b) };
    for _ in 0..100 {
        let f = bessel_j(m, x);
        if f == 0.0 {
            return x;
        }
        if (f < 0.0) == (fa < 0.0) {
            a = x;
            fa = f;
        } else {
            b = x;
        }
        let d = bessel_j_derivative(m, x);
        let newton = x - f / d;
        let next = if d != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || (b - a) <= 4.0 * f64::EPSILON * b {
            return next;
        }
        x = next;
    }
    x
}

fn next_zero(m: u32, from: f64, k: usize) -> Result<f64, SpecFunError> {
    let step = 1.0;
    let mut a = from;
    let mut fa = bessel_j(m, a);
    // zero spacing exceeds pi, so a unit step never skips a root
    let limit = 4 * (k + m as usize) + 64;
    for _ in 0..limit {
        let b = a + step;
        let fb = bessel_j(m, b);
        if fa == 0.0 {
            return Ok(a);
        }
        if (fa < 0.0) != (fb < 0.0) || fb == 0.0 {
            if fb == 0.0 {
                return Ok(b);
            }
            return Ok(zero_in_bracket(m, a, b, fa, mcmahon(m, k)));
        }
        a = b;
        fa = fb;
    }
    Err(SpecFunError::Bracketing { m, k })
}

/// The first `count` positive zeros of `J_m`, strictly increasing.
pub fn bessel_j_zeros(m: u32, count: usize) -> Result<Vec<f64>, SpecFunError> {
    if count == 0 {
        return Err(SpecFunError::Domain("zero count must be positive"));
    }
    let mut zeros = Vec::with_capacity(count);
    // J_m has no zeros in (0, m]
    let mut from = (m as f64).max(1e-3);
    for k in 1..=count {
        let z = next_zero(m, from, k)?;
        zeros.push(z);
        from = z + 2.0;
    }
    Ok(zeros)
}

/// All positive zeros of `J_m` that are `<= x_max`.
pub fn bessel_j_zeros_below(m: u32, x_max: f64) -> Result<Vec<f64>, SpecFunError> {
    let mut zeros = Vec::new();
    let mut from = (m as f64).max(1e-3);
    if from >= x_max {
        return Ok(zeros);
    }
    let mut k = 1;
    loop {
        let z = next_zero(m, from, k)?;
        if z > x_max {
            return Ok(zeros);
        }
        zeros.push(z);
        from = z + 2.0;
        k += 1;
    }
}
