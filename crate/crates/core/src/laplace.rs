//! Laplace-domain representation of the boundary flux, numeric transforms
//! of sampled traces, and the adjoint objects of the measurement identity.
//!
//! Powers `s^alpha` use the cut plane with arguments in `[0, 2 pi)`. On the
//! closed upper half plane this agrees with the principal branch, so the
//! closed form below is the Laplace transform of `-flux` there; below the
//! real axis it is the continuation that carries the poles
//! `lambda_j^{1/alpha} e^{i pi / alpha}`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::forward::{distinct_lambdas, FluxTrace, ModelError, SourceModel};
use crate::linalg::{lstsq, Matrix};
use crate::specfun::{gamma_fn, rgamma, MittagLeffler, SpecFunError};
use crate::spectrum::{eigenfunction_eval, SpectrumTable};

/// Default exclusion radius around poles.
pub const DEFAULT_POLE_EPS: f64 = 1e-6;
/// Largest admissible `e^{-Re s T}` when no tail model is supplied.
pub const HORIZON_BOUND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LaplaceError {
    #[error("s = {0} is not in the right half plane")]
    HalfPlane(Complex64),
    #[error("s = {s} lies within {eps:e} of the pole {pole}")]
    NearPole { s: Complex64, pole: Complex64, eps: f64 },
    #[error("horizon too short: exp(-Re s T) = {bound:e} exceeds {HORIZON_BOUND:e}; extend the trace or supply a tail model")]
    Horizon { bound: f64 },
    #[error("{points} points but {values} values")]
    Length { points: usize, values: usize },
    #[error("tail model fit failed: {0}")]
    Tail(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// A point of the right half plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacePoint {
    s: Complex64,
}

impl LaplacePoint {
    pub fn new(s: Complex64) -> Result<Self, LaplaceError> {
        if !(s.re > 0.0) || !s.im.is_finite() || !s.re.is_finite() {
            return Err(LaplaceError::HalfPlane(s));
        }
        Ok(Self { s })
    }

    pub fn real(s: f64) -> Result<Self, LaplaceError> {
        Self::new(Complex64::new(s, 0.0))
    }

    /// Also rejects points within `eps` of a pole for the given order.
    pub fn away_from_poles(
        s: Complex64,
        alpha: f64,
        lambdas: &[f64],
        eps: f64,
    ) -> Result<Self, LaplaceError> {
        let p = Self::new(s)?;
        for pole in pole_locations(alpha, lambdas) {
            if (s - pole).norm() < eps {
                return Err(LaplaceError::NearPole { s, pole, eps });
            }
        }
        Ok(p)
    }

    pub fn s(&self) -> Complex64 {
        self.s
    }
}

/// Transformed measurements on a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceSamples {
    pub points: Vec<LaplacePoint>,
    pub values: Vec<Complex64>,
}

impl LaplaceSamples {
    pub fn new(points: Vec<LaplacePoint>, values: Vec<Complex64>) -> Result<Self, LaplaceError> {
        if points.len() != values.len() {
            return Err(LaplaceError::Length {
                points: points.len(),
                values: values.len(),
            });
        }
        Ok(Self { points, values })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n` real points spaced geometrically over `[s_min, s_max]`.
pub fn geometric_points(s_min: f64, s_max: f64, n: usize) -> Result<Vec<LaplacePoint>, LaplaceError> {
    if n == 1 {
        return Ok(alloc::vec![LaplacePoint::real(s_min)?]);
    }
    let ratio = (s_max / s_min).ln() / (n - 1) as f64;
    (0..n)
        .map(|i| LaplacePoint::real(s_min * (ratio * i as f64).exp()))
        .collect()
}

/// `s^alpha` with `arg s` taken in `[0, 2 pi)`.
pub fn branch_pow(s: Complex64, alpha: f64) -> Complex64 {
    let mut arg = s.arg();
    if arg < 0.0 {
        arg += 2.0 * PI;
    }
    Complex64::from_polar(s.norm().powf(alpha), alpha * arg)
}

/// `lambda^{1/alpha} e^{i pi/alpha}` for each eigenvalue.
pub fn pole_locations(alpha: f64, lambdas: &[f64]) -> Vec<Complex64> {
    lambdas
        .iter()
        .map(|l| Complex64::from_polar(l.powf(1.0 / alpha), PI / alpha))
        .collect()
}

/// `L{-flux}(theta_z, s) = s^{-1} sum_k (e^{-c_{k-1} s} - e^{-c_k s})
///     sum_n a_n(z) p_{k,n} lambda_n / (s^alpha + lambda_n)`.
pub fn laplace_flux_model(
    model: &SourceModel,
    theta_z: f64,
    point: LaplacePoint,
) -> Result<Complex64, LaplaceError> {
    let s = point.s();
    let lambdas = distinct_lambdas(model.spectrum());
    let point = LaplacePoint::away_from_poles(s, model.alpha(), &lambdas, DEFAULT_POLE_EPS)?;
    let s = point.s();
    let sa = branch_pow(s, model.alpha());
    let b = model.grouped_amplitudes(theta_z);
    let cuts = model.cuts();
    let mut total = Complex64::new(0.0, 0.0);
    for (k, bk) in b.iter().enumerate() {
        let window = (-s * cuts[k]).exp() - exp_or_zero(s, cuts[k + 1]);
        let inner: Complex64 = bk
            .iter()
            .zip(&lambdas)
            .map(|(bkj, lam)| bkj * *lam / (sa + *lam))
            .sum();
        total += window * inner;
    }
    Ok(total / s)
}

fn exp_or_zero(s: Complex64, c: f64) -> Complex64 {
    if c.is_finite() {
        (-s * c).exp()
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// `(phi_1(-x) - psi(x), psi(x))` with `phi_1(-x) = (1 - e^{-x})/x` and
/// `psi(x) = (1 - e^{-x}(1 + x))/x^2`: the weights of the left and right
/// node of one interval in `int_0^h e^{-s tau} f(tau) dtau / h` for linear `f`.
fn linear_weights(x: Complex64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    let (phi, psi) = if x.norm() < 0.5 {
        // sum (-x)^k / (k+1)!  and  sum (-x)^k / (k! (k+2))
        let mut phi = Complex64::new(0.0, 0.0);
        let mut psi = Complex64::new(0.0, 0.0);
        let mut pw = one;
        let mut fact = 1.0;
        for k in 0..20 {
            let kf = k as f64;
            phi += pw / (fact * (kf + 1.0));
            psi += pw / (fact * (kf + 2.0));
            fact *= kf + 1.0;
            pw *= -x;
        }
        (phi, psi)
    } else {
        let e = (-x).exp();
        ((one - e) / x, (one - e * (one + x)) / (x * x))
    };
    (phi - psi, psi)
}

/// `int_{t_0}^{t_end} e^{-s t} f(t) dt` for the piecewise-linear interpolant
/// of the samples, integrated exactly.
pub fn finite_laplace(times: &[f64], values: &[f64], s: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..times.len().saturating_sub(1) {
        let h = times[i + 1] - times[i];
        let (wl, wr) = linear_weights(s * h);
        acc += (-s * times[i]).exp() * h * (wl * values[i] + wr * values[i + 1]);
    }
    acc
}

/// How the transform treats the signal beyond the end of the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailSpec {
    /// No extrapolation; requires `e^{-Re s T} <= 1e-10`.
    None,
    /// Fit `A + B t^{-alpha} + C t^{-2 alpha}` to the last quarter of the
    /// trace and integrate it to infinity in closed form. This is the late
    /// behavior of every relaxation profile with a constant last piece.
    PowerLaw { alpha: f64 },
}

/// `int_0^inf e^{-s t} (-flux)(t) dt` from a sampled trace.
pub fn numeric_laplace(trace: &FluxTrace, point: LaplacePoint, tail: TailSpec) -> Result<Complex64, LaplaceError> {
    let s = point.s();
    let t_end = trace.times[trace.len() - 1];
    let neg: Vec<f64> = trace.values.iter().map(|v| -v).collect();
    let body = finite_laplace(&trace.times, &neg, s);
    match tail {
        TailSpec::None => {
            let bound = (-s.re * t_end).exp();
            if bound > HORIZON_BOUND {
                return Err(LaplaceError::Horizon { bound });
            }
            Ok(body)
        }
        TailSpec::PowerLaw { alpha } => {
            let coef = fit_power_tail(&trace.times, &neg, alpha)?;
            let mut tail_sum = coef[0] * (-s * t_end).exp() / s;
            for (i, c) in coef[1..].iter().enumerate() {
                // int_T^inf e^{-st} t^{-a} dt = s^{a-1} Gamma(1 - a, sT)
                let a = alpha * (i + 1) as f64;
                tail_sum += *c * branch_pow(s, 1.0).powf(a - 1.0) * upper_gamma(1.0 - a, s * t_end)?;
            }
            Ok(body + tail_sum)
        }
    }
}

fn fit_power_tail(times: &[f64], values: &[f64], alpha: f64) -> Result<[f64; 3], LaplaceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LaplaceError::Tail("tail order must lie in (0, 1)"));
    }
    let n = times.len();
    let start = n - n / 4;
    if n - start < 6 || times[start] <= 0.0 {
        return Err(LaplaceError::Tail("need at least 6 positive tail samples"));
    }
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|p| times[start..].iter().map(|t| t.powf(-alpha * p as f64)).collect())
        .collect();
    let c = lstsq(&Matrix::from_columns(&cols), &values[start..])
        .map_err(|_| LaplaceError::Tail("tail design matrix is singular"))?;
    Ok([c[0], c[1], c[2]])
}

/// Upper incomplete gamma `Gamma(a, z)` for `Re z > 0` and `a` not a
/// nonpositive integer.
pub fn upper_gamma(a: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    if !(z.re > 0.0) {
        return Err(SpecFunError::Domain("incomplete gamma needs Re z > 0"));
    }
    if z.norm() < 1.5 {
        // Gamma(a) - z^a sum (-z)^k / (k! (a + k))
        let g = gamma_fn(a)?;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..200 {
            let add = term / (a + k as f64);
            sum += add;
            if add.norm() <= 1e-17 * sum.norm() {
                break;
            }
            term *= -z / (k as f64 + 1.0);
        }
        return Ok(Complex64::new(g, 0.0) - z.powf(a) * sum);
    }
    // modified Lentz on the continued fraction
    let tiny = 1e-300;
    let one = Complex64::new(1.0, 0.0);
    let mut b = z + 1.0 - a;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = one / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = d * an + b;
        if d.norm() < tiny {
            d = Complex64::new(tiny, 0.0);
        }
        c = b + an / c;
        if c.norm() < tiny {
            c = Complex64::new(tiny, 0.0);
        }
        d = one / d;
        let del = d * c;
        h *= del;
        if (del - one).norm() <= 1e-16 {
            return Ok((-z).exp() * z.powf(a) * h);
        }
    }
    Err(SpecFunError::Accuracy { achieved: f64::NAN })
}

/// Sensor and truncation of the boundary mollifier `delta_z^N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointSpec {
    pub theta_z: f64,
    /// Harmonic truncation order.
    pub n: u32,
    pub alpha: f64,
}

/// `delta_z^N(r, theta) = sum_{|l| <= N} xi_l(z) xi_{-l}(r, theta)` with
/// `xi_l = r^{|l|} e^{i l theta} / sqrt(2 pi)`; real by symmetry.
pub fn delta_z_eval(spec: &AdjointSpec, r: f64, theta: f64) -> Complex64 {
    let d = spec.theta_z - theta;
    let mut sum = 1.0;
    let mut rl = 1.0;
    for l in 1..=spec.n {
        rl *= r;
        sum += 2.0 * rl * (l as f64 * d).cos();
    }
    Complex64::new(sum / (2.0 * PI), 0.0)
}

/// `<delta_z^N, phi_n> = e^{-i m theta_z} / sqrt(pi lambda)` for `|m| <= N`.
fn delta_coefficient(spec: &AdjointSpec, m: i32, lambda: f64) -> Option<Complex64> {
    (m.unsigned_abs() <= spec.n).then(|| Complex64::from_polar(1.0 / (PI * lambda).sqrt(), -(m as f64) * spec.theta_z))
}

/// Adjoint weight `w_z^N(r, theta, t)`.
///
/// The truncated expansion `sum_n <delta, phi_n> phi_n / Gamma(alpha)`
/// converges slowly towards the boundary, so it is replaced by its limit
/// `delta_z^N`; only the decaying Mittag-Leffler part is summed over the
/// spectrum:
///
/// `w = t^{alpha-1} [delta_z^N / Gamma(alpha)
///      - sum_{|m| <= N} <delta, phi_n> E_{alpha,alpha}(-lambda_n t^alpha) phi_n]`.
pub fn adjoint_weight_w(
    spec: &AdjointSpec,
    spectrum: &SpectrumTable,
    r: f64,
    theta: f64,
    t: f64,
) -> Result<Complex64, LaplaceError> {
    let (ml, pw) = adjoint_setup(spec, t)?;
    let mut series = Complex64::new(0.0, 0.0);
    for mode in spectrum.modes() {
        if let Some(d) = delta_coefficient(spec, mode.m, mode.lambda) {
            series += d * ml.relaxation(mode.lambda, t) * eigenfunction_eval(mode, r, theta);
        }
    }
    Ok((delta_z_eval(spec, r, theta) * rgamma(spec.alpha) - series) * pw)
}

/// The adjoint weight as the plain truncated eigen-series,
/// `t^{alpha-1} sum_{|m| <= N} <delta, phi_n> [1/Gamma(alpha) - E_{alpha,alpha}(-lambda_n t^alpha)] phi_n`.
pub fn adjoint_weight_w_series(
    spec: &AdjointSpec,
    spectrum: &SpectrumTable,
    r: f64,
    theta: f64,
    t: f64,
) -> Result<Complex64, LaplaceError> {
    let (ml, pw) = adjoint_setup(spec, t)?;
    let rga = rgamma(spec.alpha);
    let mut series = Complex64::new(0.0, 0.0);
    for mode in spectrum.modes() {
        if let Some(d) = delta_coefficient(spec, mode.m, mode.lambda) {
            series += d * (rga - ml.relaxation(mode.lambda, t)) * eigenfunction_eval(mode, r, theta);
        }
    }
    Ok(series * pw)
}

fn adjoint_setup(spec: &AdjointSpec, t: f64) -> Result<(MittagLeffler, f64), LaplaceError> {
    if !(t > 0.0) {
        return Err(SpecFunError::Domain("adjoint weight needs t > 0").into());
    }
    let ml = MittagLeffler::new(spec.alpha, spec.alpha)?;
    Ok((ml, t.powf(spec.alpha - 1.0)))
}

/// Transform of the model at each point, as [`LaplaceSamples`].
pub fn sample_model(
    model: &SourceModel,
    theta_z: f64,
    points: &[LaplacePoint],
) -> Result<LaplaceSamples, LaplaceError> {
    let values = points
        .iter()
        .map(|p| laplace_flux_model(model, theta_z, *p))
        .collect::<Result<Vec<_>, _>>()?;
    LaplaceSamples::new(points.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{flux_trace, uniform_grid};
    use crate::specfun::quadrature::GaussLegendre;
    use crate::spectrum::{build_spectrum, ModeCoefficients};
    use alloc::sync::Arc;
    use alloc::vec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single(alpha: f64, c0: f64) -> SourceModel {
        let s = Arc::new(build_spectrum(30.0).unwrap());
        let p = ModeCoefficients::from_entries(&s, &[(0, 1, c(1.0, 0.0))]).unwrap();
        SourceModel::new(s, alpha, vec![c0, f64::INFINITY], vec![p], 0.1).unwrap()
    }

    #[test]
    fn points_and_poles() {
        assert!(LaplacePoint::real(0.0).is_err());
        assert!(LaplacePoint::new(c(-1.0, 2.0)).is_err());
        let p = pole_locations(0.75, &[1.0]);
        assert!((p[0] - Complex64::from_polar(1.0, 4.0 * PI / 3.0)).norm() < 1e-15);
        let p = pole_locations(0.8, &[5.7832])[0];
        assert!((p.norm() - 5.7832f64.powf(1.25)).abs() < 1e-12);
        assert!((p.norm() - 8.968_303).abs() < 1e-6);
        let mut arg = p.arg();
        if arg < 0.0 {
            arg += 2.0 * PI;
        }
        assert!((arg - 1.25 * PI).abs() < 1e-12);
        let a = pole_locations(0.6, &[5.0, 14.0]);
        let b = pole_locations(0.9, &[5.0, 14.0]);
        assert!(a.iter().all(|x| b.iter().all(|y| (x - y).norm() > 1e-3)));
        // a pole in the right half plane for alpha close to 1/2
        let pole = pole_locations(0.55, &[5.0])[0];
        assert!(pole.re > 0.0);
        assert!(matches!(
            LaplacePoint::away_from_poles(pole, 0.55, &[5.0], 1e-6),
            Err(LaplaceError::NearPole { .. })
        ));
    }

    #[test]
    fn branch_power_convention() {
        let s = c(0.0, -1.0);
        let v = branch_pow(s, 0.5);
        assert!((v - Complex64::from_polar(1.0, 0.75 * PI)).norm() < 1e-15);
        assert!((branch_pow(c(4.0, 0.0), 0.5) - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_mode_closed_form_and_asymptote() {
        let m = single(0.75, 0.0);
        let lam = m.spectrum().modes()[0].lambda;
        let a = 1.0 / (PI * lam).sqrt();
        for s in [0.5, 3.0, 40.0] {
            let v = laplace_flux_model(&m, 1.1, LaplacePoint::real(s).unwrap()).unwrap();
            let want = a * lam / (s * (s.powf(0.75) + lam));
            assert!((v.re - want).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
        // s^{1+alpha} e^{c0 s} G -> sum a p lambda, with relative deviation
        // lambda / (s^alpha + lambda) that shrinks only like s^{-alpha}
        let m = single(0.8, 0.3);
        let limit = a * lam;
        let mut prev = f64::INFINITY;
        for s in [50.0, 100.0, 200.0, 1000.0] {
            let v = laplace_flux_model(&m, 0.0, LaplacePoint::real(s).unwrap()).unwrap().re;
            let scaled = v * s.powf(1.8) * (0.3 * s).exp();
            let err = (limit - scaled) / limit;
            assert!((err - lam / (s.powf(0.8) + lam)).abs() < 1e-10);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 0.03);
    }

    #[test]
    fn transform_weights_are_exact_for_linear_data() {
        // e^{-t} on a dense grid, s = 1 -> 1/2
        let t = uniform_grid(40.0, 40_000);
        let v: Vec<f64> = t.iter().map(|x| -(-x).exp()).collect();
        let trace = FluxTrace::new(0.0, t.clone(), v).unwrap();
        let g = numeric_laplace(&trace, LaplacePoint::real(1.0).unwrap(), TailSpec::None).unwrap();
        assert!((g.re - 0.5).abs() < 1e-6);
        // f(t) = t on [0, 2] at complex s, exact for any step
        let s = c(0.7, 2.0);
        let t = vec![0.0, 0.3, 1.1, 2.0];
        let exact = {
            let e = (-s * 2.0).exp();
            (Complex64::new(1.0, 0.0) - e * (s * 2.0 + 1.0)) / (s * s)
        };
        assert!((finite_laplace(&t, &t, s) - exact).norm() < 1e-14);
        let t = vec![0.0, 1e-4, 2e-4];
        let got = finite_laplace(&t, &t, c(1.0, 0.0));
        // int_0^x e^{-t} t dt = x^2/2 - x^3/3 + x^4/8 - ...
        let x: f64 = 2e-4;
        let want = x * x / 2.0 - x.powi(3) / 3.0 + x.powi(4) / 8.0 - x.powi(5) / 30.0;
        assert!((got.re - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn horizon_and_zero_trace() {
        let t = uniform_grid(5.0, 100);
        let zero = FluxTrace::new(0.0, t.clone(), vec![0.0; 101]).unwrap();
        assert!(matches!(
            numeric_laplace(&zero, LaplacePoint::real(1.0).unwrap(), TailSpec::None),
            Err(LaplaceError::Horizon { .. })
        ));
        let g = numeric_laplace(&zero, LaplacePoint::real(10.0).unwrap(), TailSpec::None).unwrap();
        assert_eq!(g, c(0.0, 0.0));
    }

    #[test]
    fn numeric_transform_matches_closed_form() {
        let m = single(0.75, 0.0);
        let trace = flux_trace(&m, 0.2, &uniform_grid(30.0, 30_000)).unwrap();
        for s in [1.0, 2.0, 5.0, 10.0] {
            let p = LaplacePoint::real(s).unwrap();
            let num = numeric_laplace(&trace, p, TailSpec::None).unwrap();
            let exact = laplace_flux_model(&m, 0.2, p).unwrap();
            assert!((num - exact).norm() <= 1e-4, "s {s}: {num} vs {exact}");
        }
    }

    #[test]
    fn tail_model_extends_short_traces() {
        let m = single(0.75, 0.0);
        let trace = flux_trace(&m, 0.2, &uniform_grid(4.0, 4000)).unwrap();
        for s in [1.0, 2.0, 5.0] {
            let p = LaplacePoint::real(s).unwrap();
            assert!(numeric_laplace(&trace, p, TailSpec::None).is_err());
            let num = numeric_laplace(&trace, p, TailSpec::PowerLaw { alpha: 0.75 }).unwrap();
            let exact = laplace_flux_model(&m, 0.2, p).unwrap();
            assert!((num - exact).norm() <= 1e-4, "s {s}: {num} vs {exact}");
        }
    }

    #[test]
    fn incomplete_gamma_oracle() {
        let table = [
            (0.25, c(4.0, 0.0), c(0.005_593_163_857_372_570_07, 0.0)),
            (-0.5, c(4.0, 0.0), c(0.001_733_500_127_388_845_567, 0.0)),
            (0.25, c(0.5, 0.0), c(0.556_580_414_009_427_134_4, 0.0)),
            (-0.5, c(0.3, 0.0), c(1.150_367_047_355_164_337, 0.0)),
            (0.25, c(2.0, 3.0), c(-0.040_844_394_485_718_897_49, 0.021_037_079_285_775_973_01)),
            (-0.5, c(0.5, 1.0), c(-0.170_184_530_132_039_228_4, -0.233_962_947_643_408_231_7)),
            (0.4, c(30.0, 0.0), c(1.192_764_374_794_402_888e-14, 0.0)),
        ];
        for (a, z, want) in table {
            let got = upper_gamma(a, z).unwrap();
            assert!((got - want).norm() <= 1e-13 * want.norm().max(1e-300) + 1e-15 * want.norm(), "Gamma({a}, {z}) = {got}");
        }
    }

    #[test]
    fn delta_mollifier() {
        let spec = AdjointSpec { theta_z: 0.7, n: 0, alpha: 0.75 };
        assert!((delta_z_eval(&spec, 0.3, 2.0).re - 1.0 / (2.0 * PI)).abs() < 1e-16);
        let spec = AdjointSpec { theta_z: 0.7, n: 6, alpha: 0.75 };
        assert!((delta_z_eval(&spec, 1.0, 0.7).re - 13.0 / (2.0 * PI)).abs() < 1e-14);
        // boundary reproduction of trigonometric polynomials of degree <= N
        let g = |th: f64| 1.0 + 0.5 * (3.0 * th).cos() - 0.25 * (6.0 * th).sin();
        let n = 64;
        let mut acc = 0.0;
        for i in 0..n {
            let th = 2.0 * PI * i as f64 / n as f64;
            acc += delta_z_eval(&spec, 1.0, th).re * g(th) * 2.0 * PI / n as f64;
        }
        assert!((acc - g(0.7)).abs() < 1e-12);
    }

    #[test]
    fn delta_projection_matches_boundary_coefficients() {
        let spectrum = build_spectrum(60.0).unwrap();
        let spec = AdjointSpec { theta_z: 1.3, n: 2, alpha: 0.75 };
        let proj = crate::spectrum::project_function(|r, th| delta_z_eval(&spec, r, th), &spectrum, 64);
        for (mode, v) in spectrum.modes().iter().zip(&proj.values) {
            match delta_coefficient(&spec, mode.m, mode.lambda) {
                Some(want) => assert!((v - want).norm() <= 1e-8, "{mode:?}: {v} vs {want}"),
                None => assert!(v.norm() <= 1e-8),
            }
        }
    }

    #[test]
    fn adjoint_weight_behaviour() {
        let spectrum = build_spectrum(400.0).unwrap();
        let spec = AdjointSpec { theta_z: 0.5, n: 4, alpha: 0.75 };
        let t = 1.0;
        let near = adjoint_weight_w(&spec, &spectrum, 0.999, 0.6, t).unwrap();
        let target = delta_z_eval(&spec, 0.999, 0.6) * rgamma(0.75);
        assert!((near - target).norm() <= 0.05 * target.norm());
        // the plain series approaches the accelerated form as the cutoff grows
        let a = adjoint_weight_w(&spec, &spectrum, 0.4, 2.0, t).unwrap();
        let b400 = adjoint_weight_w_series(&spec, &spectrum, 0.4, 2.0, t).unwrap();
        let small = build_spectrum(100.0).unwrap();
        let b100 = adjoint_weight_w_series(&spec, &small, 0.4, 2.0, t).unwrap();
        let a100 = adjoint_weight_w(&spec, &small, 0.4, 2.0, t).unwrap();
        // the accelerated tail decays like lambda^{-2}: cutoffs 100 and 400 agree closely
        assert!((a - a100).norm() <= 1e-4 * a.norm(), "{a} vs {a100}");
        assert!((a - b400).norm() < (a - b100).norm());
        assert!((a - b400).norm() <= 0.15 * a.norm(), "{a} vs {b400}");
        // decay like t^{alpha - 1}
        let big = adjoint_weight_w(&spec, &spectrum, 0.5, 1.0, 1e4).unwrap();
        let bound = delta_z_eval(&spec, 0.5, 1.0).norm() * rgamma(0.75) * 1e4f64.powf(-0.25) * 1.01;
        assert!(big.norm() <= bound);
        // N = 0 keeps only m = 0 modes
        let spec0 = AdjointSpec { theta_z: 0.5, n: 0, alpha: 0.75 };
        let w0 = adjoint_weight_w_series(&spec0, &spectrum, 0.3, 1.0, 0.5).unwrap();
        let manual: Complex64 = spectrum
            .modes()
            .iter()
            .filter(|m| m.m == 0)
            .map(|m| {
                let ml = MittagLeffler::new(0.75, 0.75).unwrap();
                c(1.0 / (PI * m.lambda).sqrt(), 0.0)
                    * (rgamma(0.75) - ml.relaxation(m.lambda, 0.5))
                    * eigenfunction_eval(m, 0.3, 1.0)
                    * 0.5f64.powf(-0.25)
            })
            .sum();
        assert!((w0 - manual).norm() < 1e-14);
        assert!(adjoint_weight_w(&spec0, &spectrum, 0.3, 1.0, 0.0).is_err());
    }

    #[test]
    fn laplace_pair_of_relaxation_kernel() {
        // int_0^inf e^{-st} t^{a-1} E_{a,a}(-lam t^a) dt = 1/(s^a + lam), via u = t^a
        let gl = GaussLegendre::new(20);
        for (s, lam, alpha) in [(1.0, 1.0, 0.75), (5.0, 5.783, 0.6)] {
            let ml = MittagLeffler::new(alpha, alpha).unwrap();
            let u_max = (60.0 / s).powf(alpha);
            let v = gl.integrate_composite(0.0, u_max, 400, |u| {
                (-s * u.powf(1.0 / alpha)).exp() * ml.eval_real(-lam * u).unwrap()
            }) / alpha;
            assert!((v - 1.0 / (s.powf(alpha) + lam)).abs() < 1e-8);
        }
    }
}
