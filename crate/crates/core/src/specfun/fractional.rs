//! Riemann-Liouville fractional integral by product integration.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use super::gamma::rgamma;
use super::SpecFunError;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

/// Scalar sample type of a [`SampledTrace`].
pub trait TraceValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + core::fmt::Debug
{
    fn zero() -> Self;
}

impl TraceValue for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl TraceValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

/// A function sampled on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrace<T = f64> {
    times: Vec<f64>,
    values: Vec<T>,
}

impl<T: TraceValue> SampledTrace<T> {
    pub fn new(times: Vec<f64>, values: Vec<T>) -> Result<Self, SpecFunError> {
        if times.len() != values.len() {
            return Err(SpecFunError::InvalidTrace("times and values differ in length"));
        }
        if times.len() < 2 {
            return Err(SpecFunError::InvalidTrace("need at least two samples"));
        }
        if times[0] < 0.0 || !times[0].is_finite() {
            return Err(SpecFunError::InvalidTrace("times must start at a finite t >= 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(SpecFunError::InvalidTrace("times must be strictly increasing"));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<T>) {
        (self.times, self.values)
    }
}

fn uniform_step(times: &[f64]) -> Option<f64> {
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let tol = 1e-9 * h;
    times
        .iter()
        .enumerate()
        .all(|(i, t)| (t - (times[0] + h * i as f64)).abs() <= tol)
        .then_some(h)
}

/// `(I^beta psi)(t)` on the trace grid, `beta in (0, 1)`.
///
/// `psi` is replaced by its piecewise-linear interpolant and integrated
/// exactly against the kernel `(t - tau)^(beta - 1) / Gamma(beta)`.
pub fn fractional_integral<T: TraceValue>(
    trace: &SampledTrace<T>,
    beta: f64,
) -> Result<SampledTrace<T>, SpecFunError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(SpecFunError::Domain("fractional order must lie in (0, 1)"));
    }
    let t = &trace.times;
    let v = &trace.values;
    if t[0] != 0.0 {
        return Err(SpecFunError::InvalidTrace("fractional integral needs times[0] = 0"));
    }
    let n = t.len();
    let c = rgamma(beta + 2.0);
    let mut out = Vec::with_capacity(n);
    out.push(T::zero());

    if let Some(h) = uniform_step(t) {
        // Measured in steps back from t_i, interval [t_j, t_{j+1}] covers
        // sigma in [d - 1, d] with d = i - j, so its two node weights only
        // depend on d.
        let hb = h.powf(beta) * c;
        let pw: Vec<f64> = (0..=n).map(|k| (k as f64).powf(beta + 1.0)).collect();
        let pb: Vec<f64> = (0..=n).map(|k| (k as f64).powf(beta)).collect();
        let mut wl = Vec::with_capacity(n);
        let mut wr = Vec::with_capacity(n);
        wl.push(0.0);
        wr.push(0.0);
        for d in 1..n {
            let lo = (d - 1) as f64;
            let i0 = (pb[d] - pb[d - 1]) / beta;
            let i1 = (pw[d] - pw[d - 1]) / (beta + 1.0);
            // left node (sigma = d) carries sigma - lo, right node carries d - sigma;
            // beta (beta + 1) turns 1/Gamma(beta + 2) into 1/Gamma(beta)
            wl.push((i1 - lo * i0) * beta * (beta + 1.0));
            wr.push((d as f64 * i0 - i1) * beta * (beta + 1.0));
        }
        for i in 1..n {
            let mut acc = T::zero();
            for j in 0..i {
                let d = i - j;
                acc = acc + v[j] * wl[d] + v[j + 1] * wr[d];
            }
            out.push(acc * hb);
        }
    } else {
        let inv = beta * (beta + 1.0) * c;
        for i in 1..n {
            let ti = t[i];
            let mut acc = T::zero();
            for j in 0..i {
                let a = ti - t[j + 1];
                let b = ti - t[j];
                let h = t[j + 1] - t[j];
                let i0 = (b.powf(beta) - a.powf(beta)) / beta;
                let i1 = (b.powf(beta + 1.0) - a.powf(beta + 1.0)) / (beta + 1.0);
                // sigma = t_i - tau; psi = v_j (sigma - a)/h + v_{j+1} (b - sigma)/h
                let wl = (i1 - a * i0) / h;
                let wr = (b * i0 - i1) / h;
                acc = acc + v[j] * (wl * inv) + v[j + 1] * (wr * inv);
            }
            out.push(acc);
        }
    }
    Ok(SampledTrace {
        times: t.clone(),
        values: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::gamma_fn;

    fn grid(n: usize, t_max: f64) -> Vec<f64> {
        (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
    }

    #[test]
    fn zero_maps_to_zero() {
        let t = grid(50, 1.0);
        let tr = SampledTrace::new(t.clone(), alloc::vec![0.0; 51]).unwrap();
        let out = fractional_integral(&tr, 0.4).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_is_exact() {
        let beta = 0.3;
        for t in [grid(40, 2.0), alloc::vec![0.0, 0.1, 0.35, 0.4, 1.0, 1.7, 2.0]] {
            let n = t.len();
            let tr = SampledTrace::new(t.clone(), alloc::vec![1.0; n]).unwrap();
            let out = fractional_integral(&tr, beta).unwrap();
            for (ti, v) in t.iter().zip(out.values()) {
                let want = ti.powf(beta) / gamma_fn(beta + 1.0).unwrap();
                assert!((v - want).abs() < 1e-13, "t {ti}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn linear_is_exact_on_any_grid() {
        // piecewise-linear interpolation reproduces psi(t) = t
        let beta = 0.5;
        let want = 4.0 / (3.0 * core::f64::consts::PI.sqrt());
        for t in [grid(10, 1.0), alloc::vec![0.0, 0.05, 0.5, 0.51, 1.0]] {
            let tr = SampledTrace::new(t.clone(), t.clone()).unwrap();
            let out = fractional_integral(&tr, beta).unwrap();
            let last = *out.values().last().unwrap();
            assert!((last - want).abs() < 1e-13);
            assert!((want - 0.752_252_778_063_675).abs() < 1e-12);
        }
    }

    #[test]
    fn second_order_convergence_for_smooth_input() {
        // psi = t^2 -> I^b psi = 2 t^{2+b} / Gamma(3+b)
        let beta = 0.6;
        let err = |n: usize| {
            let t = grid(n, 1.0);
            let v: Vec<f64> = t.iter().map(|x| x * x).collect();
            let out = fractional_integral(&SampledTrace::new(t, v).unwrap(), beta).unwrap();
            let exact = 2.0 / gamma_fn(3.0 + beta).unwrap();
            (out.values()[n] - exact).abs()
        };
        let ratio = err(100) / err(200);
        assert!(ratio > 3.7 && ratio < 4.3, "ratio {ratio}");
    }

    #[test]
    fn complex_values_and_errors() {
        let t = grid(20, 1.0);
        let v: Vec<Complex64> = t.iter().map(|x| Complex64::new(1.0, *x)).collect();
        let out = fractional_integral(&SampledTrace::new(t.clone(), v).unwrap(), 0.5).unwrap();
        let re_want = 1.0 / gamma_fn(1.5).unwrap();
        assert!((out.values()[20].re - re_want).abs() < 1e-13);
        let tr = SampledTrace::new(t.clone(), t.clone()).unwrap();
        assert!(fractional_integral(&tr, 1.0).is_err());
        assert!(fractional_integral(&tr, 0.0).is_err());
        assert!(SampledTrace::new(alloc::vec![0.0, 0.0], alloc::vec![1.0, 1.0]).is_err());
        assert!(SampledTrace::new(alloc::vec![0.0], alloc::vec![1.0]).is_err());
        let shifted = SampledTrace::new(alloc::vec![0.5, 1.0], alloc::vec![1.0, 1.0]).unwrap();
        assert!(fractional_integral(&shifted, 0.5).is_err());
    }
}
