//! Cross-module identity checks behind `fracsource verify`.

use std::f64::consts::PI;

use fracsource_core::forward::{flux_trace, uniform_grid, verify_measurement_identity};
use fracsource_core::laplace::{laplace_flux_model, numeric_laplace};
use fracsource_core::specfun::quadrature::GaussLegendre;
use fracsource_core::specfun::{bessel_j, MittagLeffler};
use fracsource_core::spectrum::eigenfunction_eval;
use fracsource_core::{build_spectrum, Complex64, LaplacePoint, SpectrumTable, TailSpec};
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::error::CliError;
use crate::par;

/// Eigenvalue ceiling of the table used by the eigensystem checks.
pub const EIGEN_CHECK_LAMBDA_MAX: f64 = 400.0;
/// Number of leading modes in the Gram-matrix check.
pub const GRAM_MODES: usize = 12;
/// Transform variables of the Laplace-pair and agreement checks.
pub const PAIR_S: [f64; 4] = [1.0, 2.0, 5.0, 10.0];
pub const PAIR_LAMBDA: [f64; 2] = [1.0, 5.783];
pub const AGREEMENT_S: [f64; 5] = [1.0, 2.0, 5.0, 10.0, 20.0];
/// Horizon of the trace used for the Laplace agreement check.
pub const AGREEMENT_HORIZON: f64 = 30.0;

/// Whether `value` must stay below or above `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64, bound: Bound) -> Self {
        let passed = match bound {
            Bound::Max => value <= tolerance,
            Bound::Min => value >= tolerance,
        };
        Self { name: name.into(), value, tolerance, bound, passed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    MlOracle,
    LaplacePair,
    UnitMass,
    MeasurementIdentity,
    LaplaceAgreement,
    Gram,
    Normalizer,
    Pairing,
}

/// Run every check. `eigen` is the table for the eigensystem checks,
/// normally `build_spectrum(EIGEN_CHECK_LAMBDA_MAX)`; passing a doctored
/// table is how fault injection is exercised.
pub fn run_checks(exp: &Experiment, eigen: &SpectrumTable) -> Result<VerifyReport, CliError> {
    use Kind::*;
    let kinds = [MlOracle, LaplacePair, UnitMass, MeasurementIdentity, LaplaceAgreement, Gram, Normalizer, Pairing];
    let results = par::map(&kinds, |k| match k {
        MlOracle => ml_oracle().map(|c| vec![c]),
        LaplacePair => laplace_pair(exp.model.alpha()).map(|c| vec![c]),
        UnitMass => unit_mass(exp.model.alpha()).map(|c| vec![c]),
        MeasurementIdentity => measurement_identity(exp),
        LaplaceAgreement => laplace_agreement(exp).map(|c| vec![c]),
        Gram => Ok(vec![gram(eigen)]),
        Normalizer => Ok(vec![normalizer(eigen)]),
        Pairing => Ok(vec![pairing(eigen)]),
    });
    let mut checks = Vec::new();
    for r in results {
        checks.extend(r?);
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, passed })
}

/// Default eigensystem table for [`run_checks`].
pub fn default_eigen_table() -> Result<SpectrumTable, CliError> {
    Ok(build_spectrum(EIGEN_CHECK_LAMBDA_MAX)?)
}

/// Orders and arguments of the relaxation oracle: 40 points in `[0, 50]`
/// for each order; order 1/2 is checked against `erfc`.
pub const ORACLE_ORDERS: [f64; 5] = [0.3, 0.5, 0.6, 0.75, 0.9];

pub fn oracle_points() -> Vec<(f64, f64)> {
    ORACLE_ORDERS
        .iter()
        .flat_map(|&a| (0..40).map(move |i| (a, 50.0 * (i as f64 / 39.0).powi(2))))
        .collect()
}

/// `E_{1/2,1}(-x) = e^{x^2} erfc(x)`.
pub fn ml_half_oracle(x: f64) -> f64 {
    // scaled erfc keeps the product finite for large x
    if x < 5.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // asymptotic continued fraction of e^{x^2} erfc(x)
        let mut f = 0.0;
        for k in (1..60).rev() {
            f = (k as f64 / 2.0) / (x + f);
        }
        1.0 / (PI.sqrt() * (x + f))
    }
}

/// `E_{a,1}(-x)` for `0 < a < 1` from the complete monotonicity integral
/// `sin(a pi) / (a pi) int_0^inf exp(-x^{1/a} v^{1/a}) / (v^2 + 2 v cos(a pi) + 1) dv`,
/// by Gauss-Legendre on dyadic panels over `[1e-12, 1e12]`.
pub fn ml_integral_oracle(alpha: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let t = x.powf(1.0 / alpha);
    let c = (alpha * PI).cos();
    let gl = GaussLegendre::new(20);
    let f = |v: f64| (-t * v.powf(1.0 / alpha)).exp() / (v * v + 2.0 * v * c + 1.0);
    let mut total = 0.0;
    let mut lo = 1e-12;
    while lo < 1e12 {
        total += gl.integrate(lo, 2.0 * lo, f);
        lo *= 2.0;
    }
    (alpha * PI).sin() / (alpha * PI) * total
}

/// Largest absolute deviation of `E_{a,1}(-x)` from the oracles.
pub fn ml_oracle() -> Result<Check, CliError> {
    let mut worst = 0.0f64;
    for (alpha, x) in oracle_points() {
        let got = MittagLeffler::new(alpha, 1.0)?.eval_real(-x)?;
        let want = if alpha == 0.5 { ml_half_oracle(x) } else { ml_integral_oracle(alpha, x) };
        worst = worst.max((got - want).abs());
    }
    Ok(Check::new("ml_oracle", worst, 1e-9, Bound::Max))
}

/// `int_0^inf e^{-st} t^{a-1} E_{a,a}(-lambda t^a) dt` with `u = t^a`, which
/// turns the integrand into `e^{-s u^{1/a}} E_{a,a}(-lambda u) / a`; a further
/// `u = w^4` removes the remaining endpoint singularity.
pub fn ml_laplace_quadrature(alpha: f64, lambda: f64, s: f64) -> Result<f64, CliError> {
    let ml = MittagLeffler::new(alpha, alpha)?;
    let u_end = (40.0 / s).powf(alpha);
    let w_end = u_end.powf(0.25);
    let gl = GaussLegendre::new(24);
    let mut err = None;
    let v = gl.integrate_composite(0.0, w_end, 64, |w| {
        let u = w.powi(4);
        let e = ml.eval_real(-lambda * u).unwrap_or_else(|e| {
            err = Some(e);
            0.0
        });
        (-s * u.powf(1.0 / alpha)).exp() * e * 4.0 * w.powi(3) / alpha
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(v),
    }
}

/// Largest relative error of the Laplace pair over `PAIR_S x PAIR_LAMBDA`.
pub fn laplace_pair(alpha: f64) -> Result<Check, CliError> {
    let mut worst = 0.0f64;
    for s in PAIR_S {
        for lambda in PAIR_LAMBDA {
            let exact = 1.0 / (s.powf(alpha) + lambda);
            let q = ml_laplace_quadrature(alpha, lambda, s)?;
            worst = worst.max((q - exact).abs() / exact);
        }
    }
    Ok(Check::new("ml_laplace_pair", worst, 1e-6, Bound::Max))
}

/// `int_0^T lambda t^{a-1} E_{a,a}(-lambda t^a) dt` at the first `T` with
/// `E_{a,1}(-lambda T^a) <= 1e-6`, compared with 1.
pub fn unit_mass_error(alpha: f64, lambda: f64) -> Result<f64, CliError> {
    let relax = MittagLeffler::new(alpha, 1.0)?;
    let kernel = MittagLeffler::new(alpha, alpha)?;
    // in u = t^a the mass is int_0^U lambda E_{a,a}(-lambda u) / a du
    let mut u_end = 1.0 / lambda;
    while relax.eval_real(-lambda * u_end)? > 1e-6 {
        u_end *= 2.0;
    }
    let gl = GaussLegendre::new(24);
    let mut total = 0.0;
    let (mut lo, mut hi) = (0.0, 1.0 / lambda);
    while lo < u_end {
        let mut err = None;
        total += gl.integrate(lo, hi, |u| {
            lambda
                * kernel.eval_real(-lambda * u).unwrap_or_else(|e| {
                    err = Some(e);
                    0.0
                })
                / alpha
        });
        if let Some(e) = err {
            return Err(e.into());
        }
        lo = hi;
        hi = (2.0 * hi).min(u_end);
    }
    Ok((total - 1.0).abs())
}

pub fn unit_mass(alpha: f64) -> Result<Check, CliError> {
    let mut worst = 0.0f64;
    for lambda in PAIR_LAMBDA {
        worst = worst.max(unit_mass_error(alpha, lambda)?);
    }
    Ok(Check::new("ml_unit_mass", worst, 1e-5, Bound::Max))
}

/// Measurement identity on both sensors at the configured grid, and the
/// error reduction from halving the grid step.
pub fn measurement_identity(exp: &Experiment) -> Result<Vec<Check>, CliError> {
    let t_max = *exp.times.last().expect("grid is nonempty");
    let steps = exp.times.len() - 1;
    let coarse = uniform_grid(t_max, steps);
    let fine = uniform_grid(t_max, 2 * steps);
    let mut err = 0.0f64;
    let mut err_fine = 0.0f64;
    for theta in exp.sensors.angles {
        err = err.max(verify_measurement_identity(&exp.model, theta, &coarse)?);
        err_fine = err_fine.max(verify_measurement_identity(&exp.model, theta, &fine)?);
    }
    Ok(vec![
        Check::new("measurement_identity", err, 5e-4, Bound::Max),
        Check::new("measurement_identity_halving_gain", err / err_fine, 3.0, Bound::Min),
    ])
}

/// Closed-form transform against the transform of a synthesized trace on a
/// long horizon, as the largest error relative to the peak over both sensors.
pub fn laplace_agreement(exp: &Experiment) -> Result<Check, CliError> {
    let h = exp.times[1] - exp.times[0];
    let t_end = AGREEMENT_HORIZON.max(*exp.times.last().expect("grid is nonempty"));
    let times = uniform_grid(t_end, (t_end / h).round() as usize);
    let mut worst = 0.0f64;
    for theta in exp.sensors.angles {
        let trace = flux_trace(&exp.model, theta, &times)?;
        let mut scale = 0.0f64;
        let mut errs = Vec::new();
        for s in AGREEMENT_S {
            let p = LaplacePoint::real(s)?;
            let exact = laplace_flux_model(&exp.model, theta, p)?;
            let numeric = numeric_laplace(&trace, p, TailSpec::PowerLaw { alpha: exp.model.alpha() })?;
            scale = scale.max(exact.norm());
            errs.push((numeric - exact).norm());
        }
        for e in errs {
            worst = worst.max(e / scale.max(f64::MIN_POSITIVE));
        }
    }
    Ok(Check::new("laplace_agreement", worst, 1e-4, Bound::Max))
}

/// Entrywise `max |G - I|` for the leading modes, with Gauss-Legendre in
/// `r` and the periodic trapezoid rule in `theta`.
pub fn gram_error(eigen: &SpectrumTable, count: usize) -> f64 {
    let modes = &eigen.modes()[..count.min(eigen.len())];
    let radial = GaussLegendre::new(64);
    let n_theta = 64;
    let nodes: Vec<(f64, f64)> = radial.mapped(0.0, 1.0).collect();
    // samples[mode][node]
    let samples: Vec<Vec<(Complex64, f64)>> = modes
        .iter()
        .map(|m| {
            let mut v = Vec::with_capacity(nodes.len() * n_theta);
            for &(r, w) in &nodes {
                for j in 0..n_theta {
                    let th = 2.0 * PI * j as f64 / n_theta as f64;
                    v.push((eigenfunction_eval(m, r, th), w * r * 2.0 * PI / n_theta as f64));
                }
            }
            v
        })
        .collect();
    let mut worst = 0.0f64;
    for (i, a) in samples.iter().enumerate() {
        for (j, b) in samples.iter().enumerate() {
            let g: Complex64 = a.iter().zip(b).map(|((x, w), (y, _))| x * y.conj() * w).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - want).norm());
        }
    }
    worst
}

pub fn gram(eigen: &SpectrumTable) -> Check {
    let mut c = Check::new("gram_matrix", gram_error(eigen, GRAM_MODES), 1e-8, Bound::Max);
    if eigen.len() < GRAM_MODES {
        c.passed = false;
    }
    c
}

/// `max | |omega sqrt(pi) J_{|m|+1}(sqrt(lambda))| - 1 |` over the table.
pub fn normalizer_error(eigen: &SpectrumTable) -> f64 {
    eigen
        .modes()
        .iter()
        .map(|m| ((m.omega * PI.sqrt() * bessel_j(m.abs_m() + 1, m.sqrt_lambda())).abs() - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn normalizer(eigen: &SpectrumTable) -> Check {
    Check::new("normalizer", normalizer_error(eigen), 1e-10, Bound::Max)
}

/// Number of eigenvalues that are neither a single `m = 0` mode nor a
/// `(+m, -m)` pair with a shared radial index.
pub fn pairing_violations(eigen: &SpectrumTable) -> usize {
    let modes = eigen.modes();
    eigen
        .distinct_eigenvalues()
        .iter()
        .filter(|d| {
            let ok = match d.modes.as_slice() {
                [a] => modes[*a].m == 0,
                [a, b] => modes[*a].m > 0 && modes[*b].m == -modes[*a].m && modes[*a].k == modes[*b].k,
                _ => false,
            };
            !ok
        })
        .count()
}

pub fn pairing(eigen: &SpectrumTable) -> Check {
    Check::new("multiplicity_pairing", pairing_violations(eigen) as f64, 0.0, Bound::Max)
}
