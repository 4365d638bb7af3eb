//! Dirichlet eigensystem of `-Laplace` on the unit disc.
//!
//! Modes are `phi_n(r, theta) = omega J_|m|(sqrt(lambda) r) e^{i m theta}`
//! with `sqrt(lambda)` the `k`-th positive zero of `J_|m|`. The normalizer is
//! `omega = 1 / (sqrt(pi) J_{|m|+1}(sqrt(lambda)))`, sign included, which
//! makes the outward normal derivative on the boundary equal to
//! `-lambda a_n(z)` with `a_n(z) = e^{i m theta_z} / sqrt(pi lambda)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::specfun::quadrature::GaussLegendre;
use crate::specfun::{bessel_j, bessel_j_zeros_below, SpecFunError};

/// Smallest Dirichlet eigenvalue of the unit disc, `j_{0,1}^2`.
pub const FIRST_EIGENVALUE: f64 = 5.783_185_962_946_784;

/// Default radial Gauss-Legendre order for projections.
pub const DEFAULT_RADIAL_ORDER: usize = 64;
/// Angular trapezoid points per radial node, as a multiple of the radial order.
pub const ANGULAR_PER_RADIAL: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("no eigenvalue at or below lambda_max = {lambda_max} (first is {FIRST_EIGENVALUE})")]
    Empty { lambda_max: f64 },
    #[error("coefficient vector has {got} entries, spectrum has {expected} modes")]
    Shape { expected: usize, got: usize },
    #[error("mode (m = {m}, k = {k}) is not in the spectrum")]
    UnknownMode { m: i32, k: u32 },
    #[error("invalid mode table: {0}")]
    InvalidTable(&'static str),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// One Dirichlet eigenpair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenMode {
    /// Angular index; the sign selects `e^{+i|m|theta}` or `e^{-i|m|theta}`.
    pub m: i32,
    /// Radial index, 1-based.
    pub k: u32,
    pub lambda: f64,
    pub omega: f64,
}

impl EigenMode {
    pub fn abs_m(&self) -> u32 {
        self.m.unsigned_abs()
    }

    pub fn sqrt_lambda(&self) -> f64 {
        self.lambda.sqrt()
    }
}

/// A distinct eigenvalue and the modes sharing it.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinctEigenvalue {
    pub lambda: f64,
    pub abs_m: u32,
    /// Indices into [`SpectrumTable::modes`]; `[+m, -m]` for pairs.
    pub modes: Vec<usize>,
}

impl DistinctEigenvalue {
    pub fn multiplicity(&self) -> usize {
        self.modes.len()
    }
}

/// Immutable eigensystem truncated at an eigenvalue cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    lambda_max: f64,
    modes: Vec<EigenMode>,
    distinct: Vec<DistinctEigenvalue>,
}

/// All modes with `lambda <= lambda_max`, sorted by eigenvalue with `+m`
/// ahead of `-m` on ties.
pub fn build_spectrum(lambda_max: f64) -> Result<SpectrumTable, SpectrumError> {
    if !(lambda_max >= FIRST_EIGENVALUE) || !lambda_max.is_finite() {
        return Err(SpectrumError::Empty { lambda_max });
    }
    let x_max = lambda_max.sqrt();
    // j_{m,1} > m, so larger orders have no zero below x_max
    let m_bound = x_max.ceil() as u32 + 2;
    let mut modes = Vec::new();
    for m in 0..=m_bound {
        for (i, j) in bessel_j_zeros_below(m, x_max)?.into_iter().enumerate() {
            let lambda = j * j;
            if lambda > lambda_max {
                continue;
            }
            let omega = 1.0 / (PI.sqrt() * bessel_j(m + 1, j));
            let k = i as u32 + 1;
            modes.push(EigenMode { m: m as i32, k, lambda, omega });
            if m > 0 {
                modes.push(EigenMode { m: -(m as i32), k, lambda, omega });
            }
        }
    }
    // stable: keeps +m before -m
    modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    SpectrumTable::from_modes(lambda_max, modes)
}

impl SpectrumTable {
    /// Assemble a table from explicit modes.
    ///
    /// Checks ordering and the multiplicity pairing but trusts `omega`; this
    /// is the entry point for fault-injection checks of the normalizers.
    pub fn from_modes(lambda_max: f64, modes: Vec<EigenMode>) -> Result<Self, SpectrumError> {
        if modes.is_empty() {
            return Err(SpectrumError::Empty { lambda_max });
        }
        if modes.windows(2).any(|w| w[1].lambda < w[0].lambda) {
            return Err(SpectrumError::InvalidTable("modes must be sorted by eigenvalue"));
        }
        let mut distinct: Vec<DistinctEigenvalue> = Vec::new();
        for (i, mode) in modes.iter().enumerate() {
            match distinct.last_mut() {
                Some(d) if d.lambda == mode.lambda => d.modes.push(i),
                _ => distinct.push(DistinctEigenvalue {
                    lambda: mode.lambda,
                    abs_m: mode.abs_m(),
                    modes: alloc::vec![i],
                }),
            }
        }
        for d in &distinct {
            let ok = match d.modes.as_slice() {
                [a] => modes[*a].m == 0,
                [a, b] => {
                    let (p, q) = (modes[*a], modes[*b]);
                    p.m > 0 && q.m == -p.m && p.k == q.k
                }
                _ => false,
            };
            if !ok {
                return Err(SpectrumError::InvalidTable(
                    "each eigenvalue must be a single m = 0 mode or a (+m, -m) pair",
                ));
            }
        }
        Ok(Self { lambda_max, modes, distinct })
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn modes(&self) -> &[EigenMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn distinct_eigenvalues(&self) -> &[DistinctEigenvalue] {
        &self.distinct
    }

    /// Index of mode `(m, k)`.
    pub fn index_of(&self, m: i32, k: u32) -> Option<usize> {
        self.modes.iter().position(|e| e.m == m && e.k == k)
    }

    /// Index of the `(-m, k)` partner; `None` for `m = 0`.
    pub fn partner(&self, index: usize) -> Option<usize> {
        let e = self.modes[index];
        if e.m == 0 {
            return None;
        }
        self.index_of(-e.m, e.k)
    }

    /// Distinct nonzero `|m|` present, ascending.
    pub fn represented_abs_m(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .modes
            .iter()
            .map(EigenMode::abs_m)
            .filter(|m| *m != 0)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// `min |sin(|m| delta)|` over represented `|m| != 0`; `1` if there are none.
    pub fn irrationality_margin(&self, delta: f64) -> f64 {
        self.represented_abs_m()
            .into_iter()
            .map(|m| (m as f64 * delta).sin().abs())
            .fold(1.0, f64::min)
    }
}

/// `phi(r, theta)` for one mode.
pub fn eigenfunction_eval(mode: &EigenMode, r: f64, theta: f64) -> Complex64 {
    let radial = mode.omega * bessel_j(mode.abs_m(), mode.sqrt_lambda() * r);
    Complex64::from_polar(radial, mode.m as f64 * theta)
}

/// `a_n(z) = e^{i m theta_z} / sqrt(pi lambda)`.
pub fn boundary_coefficient(mode: &EigenMode, theta_z: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (PI * mode.lambda).sqrt(), mode.m as f64 * theta_z)
}

/// Outward normal derivative of `phi` at boundary angle `theta`,
/// `-lambda a_n(theta)`.
pub fn normal_derivative_weight(mode: &EigenMode, theta: f64) -> Complex64 {
    -boundary_coefficient(mode, theta) * mode.lambda
}

/// Mode coordinates of a function on the disc, aligned with a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoefficients {
    pub values: Vec<Complex64>,
    /// Set when the coefficient of `(-m, k)` is the conjugate of `(+m, k)`
    /// and `m = 0` coefficients are real, i.e. the function is real valued.
    pub real_field: bool,
}

impl ModeCoefficients {
    /// Wrap `values`, detecting the real-field symmetry.
    pub fn new(spectrum: &SpectrumTable, values: Vec<Complex64>) -> Result<Self, SpectrumError> {
        if values.len() != spectrum.len() {
            return Err(SpectrumError::Shape {
                expected: spectrum.len(),
                got: values.len(),
            });
        }
        let real_field = conjugate_asymmetry(spectrum, &values) <= 1e-12 * (1.0 + norm(&values));
        Ok(Self { values, real_field })
    }

    pub fn zeros(spectrum: &SpectrumTable) -> Self {
        Self {
            values: alloc::vec![Complex64::new(0.0, 0.0); spectrum.len()],
            real_field: true,
        }
    }

    /// Coefficients from sparse `(m, k, value)` entries; other modes are zero.
    pub fn from_entries(
        spectrum: &SpectrumTable,
        entries: &[(i32, u32, Complex64)],
    ) -> Result<Self, SpectrumError> {
        let mut values = alloc::vec![Complex64::new(0.0, 0.0); spectrum.len()];
        for &(m, k, v) in entries {
            let i = spectrum.index_of(m, k).ok_or(SpectrumError::UnknownMode { m, k })?;
            values[i] = v;
        }
        Self::new(spectrum, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Euclidean norm, which is the `L^2(disc)` norm by orthonormality.
    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// `|self - other|` in the coefficient norm.
    pub fn distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * a).collect(),
            real_field: self.real_field,
        }
    }
}

fn norm(values: &[Complex64]) -> f64 {
    values.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

/// Largest violation of the real-field symmetry.
pub fn conjugate_asymmetry(spectrum: &SpectrumTable, values: &[Complex64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, mode) in spectrum.modes().iter().enumerate() {
        if mode.m == 0 {
            worst = worst.max(values[i].im.abs());
        } else if mode.m > 0 {
            if let Some(j) = spectrum.partner(i) {
                worst = worst.max((values[i] - values[j].conj()).norm());
            }
        }
    }
    worst
}

/// `<f, phi_n> = int f conj(phi_n) dx` for every mode, by Gauss-Legendre in
/// `r` (`quadrature_order` nodes) and the trapezoid rule in `theta`
/// (`4 quadrature_order` nodes).
pub fn project_function<F>(f: F, spectrum: &SpectrumTable, quadrature_order: usize) -> ModeCoefficients
where
    F: Fn(f64, f64) -> Complex64,
{
    let gl = GaussLegendre::new(quadrature_order.max(1));
    let n_theta = ANGULAR_PER_RADIAL * quadrature_order.max(1);
    let m_top = spectrum.modes().iter().map(EigenMode::abs_m).max().unwrap_or(0) as i32;
    let dtheta = 2.0 * PI / n_theta as f64;
    let thetas: Vec<f64> = (0..n_theta).map(|j| dtheta * j as f64).collect();

    // F_m(r_i) = int_0^{2 pi} f(r_i, theta) e^{-i m theta} dtheta
    let n_m = (2 * m_top + 1) as usize;
    let nodes: Vec<(f64, f64)> = gl.mapped(0.0, 1.0).collect();
    let mut fourier = alloc::vec![Complex64::new(0.0, 0.0); nodes.len() * n_m];
    for (i, (r, _)) in nodes.iter().enumerate() {
        let samples: Vec<Complex64> = thetas.iter().map(|th| f(*r, *th)).collect();
        for mi in 0..n_m {
            let m = mi as i32 - m_top;
            let mut acc = Complex64::new(0.0, 0.0);
            for (s, th) in samples.iter().zip(&thetas) {
                acc += s * Complex64::from_polar(1.0, -(m as f64) * th);
            }
            fourier[i * n_m + mi] = acc * dtheta;
        }
    }

    let values = spectrum
        .modes()
        .iter()
        .map(|mode| {
            let mi = (mode.m + m_top) as usize;
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, (r, w)) in nodes.iter().enumerate() {
                let radial = mode.omega * bessel_j(mode.abs_m(), mode.sqrt_lambda() * r);
                acc += fourier[i * n_m + mi] * (w * r * radial);
            }
            acc
        })
        .collect::<Vec<_>>();
    let real_field = conjugate_asymmetry(spectrum, &values) <= 1e-12 * (1.0 + norm(&values));
    ModeCoefficients { values, real_field }
}

/// `(sum_n lambda_n^{2 gamma} |c_n|^2)^{1/2}`.
pub fn sobolev_norm(
    coeffs: &ModeCoefficients,
    spectrum: &SpectrumTable,
    gamma: f64,
) -> Result<f64, SpectrumError> {
    if coeffs.len() != spectrum.len() {
        return Err(SpectrumError::Shape {
            expected: spectrum.len(),
            got: coeffs.len(),
        });
    }
    Ok(spectrum
        .modes()
        .iter()
        .zip(&coeffs.values)
        .map(|(mode, c)| mode.lambda.powf(2.0 * gamma) * c.norm_sqr())
        .sum::<f64>()
        .sqrt())
}
