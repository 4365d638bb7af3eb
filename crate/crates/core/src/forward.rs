//! Spectral solution for sources that are piecewise constant in time, and
//! boundary flux synthesis.
//!
//! With `u = sum_n u_n(t) phi_n` and the source `p_k` switched on over
//! `[c_{k-1}, c_k)`, every mode amplitude is a difference of relaxation
//! profiles `E_{alpha,1}(-lambda (t - c)^alpha)`. The outward flux at a
//! boundary angle only sees each distinct eigenvalue through the grouped
//! amplitude `b_{j,k}(z) = sum_{lambda_n = lambda_j} a_n(z) p_{k,n}`:
//!
//! `-flux(z, t) = sum_k sum_j b_{j,k}(z) D_{j,k}(t)`,
//! `D_{j,k}(t) = R_j(t - min(c_k, t)) - R_j(t - c_{k-1})` for `t > c_{k-1}`,
//!
//! with `R_j(tau) = E_{alpha,1}(-lambda_j tau^alpha)`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::specfun::quadrature::GaussLegendre;
use crate::specfun::{fractional_integral, rgamma, MittagLeffler, SampledTrace, SpecFunError};
use crate::spectrum::{
    boundary_coefficient, eigenfunction_eval, sobolev_norm, ModeCoefficients, SpectrumError,
    SpectrumTable,
};

/// Admissible fractional orders are the open interval `(ALPHA_MIN, ALPHA_MAX)`.
pub const ALPHA_MIN: f64 = 0.5;
pub const ALPHA_MAX: f64 = 1.0;
/// Default smoothness index used for the source regularity check.
pub const DEFAULT_GAMMA: f64 = 0.5;
/// Default sensor margin guard.
pub const DEFAULT_MARGIN_MIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("order constraint violated: alpha = {0} must lie in (0.5, 1)")]
    Alpha(f64),
    #[error("change-point constraint violated: {0}")]
    Cuts(&'static str),
    #[error("minimum-gap constraint violated: gap {gap} between cuts {index} and {next} is below eta = {eta}", next = index + 1)]
    MinGap { index: usize, gap: f64, eta: f64 },
    #[error("nondegeneracy constraint violated: piece {k} is identically zero")]
    ZeroPiece { k: usize },
    #[error("nondegeneracy constraint violated: pieces {k} and {next} are equal", next = k + 1)]
    RepeatedPiece { k: usize },
    #[error("regularity constraint violated: piece {k} has no finite norm of order {gamma}")]
    Regularity { k: usize, gamma: f64 },
    #[error("model has {pieces} pieces but {cuts} cuts (need pieces + 1)")]
    PieceCount { pieces: usize, cuts: usize },
    #[error("sensor constraint violated: angle {0} must lie in [0, 2 pi)")]
    SensorAngle(f64),
    #[error("sensor margin violated: |sin({abs_m} * dtheta)| = {margin:e} is below {margin_min:e}")]
    SensorMargin { abs_m: u32, margin: f64, margin_min: f64 },
    #[error("invalid time grid: {0}")]
    Grid(&'static str),
    #[error("flux has an imaginary part of {0:e}; coefficients are not conjugate symmetric")]
    ComplexFlux(f64),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// The source `sum_k p_k(x) 1[c_{k-1} <= t < c_k)` together with the order.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    alpha: f64,
    cuts: Vec<f64>,
    pieces: Vec<ModeCoefficients>,
    spectrum: Arc<SpectrumTable>,
    eta: f64,
}

impl SourceModel {
    /// Validated model. `cuts` holds `c_0 < ... < c_K`; the last entry may be
    /// `f64::INFINITY`. Consecutive cuts must be at least `eta` apart.
    pub fn new(
        spectrum: Arc<SpectrumTable>,
        alpha: f64,
        cuts: Vec<f64>,
        pieces: Vec<ModeCoefficients>,
        eta: f64,
    ) -> Result<Self, ModelError> {
        let model = Self::from_parts_unchecked(spectrum, alpha, cuts, pieces, eta);
        model.validate()?;
        Ok(model)
    }

    /// Assemble without checking the source constraints. Shapes are the
    /// caller's responsibility; evaluation panics on misaligned pieces.
    pub fn from_parts_unchecked(
        spectrum: Arc<SpectrumTable>,
        alpha: f64,
        cuts: Vec<f64>,
        pieces: Vec<ModeCoefficients>,
        eta: f64,
    ) -> Self {
        Self { alpha, cuts, pieces, spectrum, eta }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.alpha > ALPHA_MIN && self.alpha < ALPHA_MAX) {
            return Err(ModelError::Alpha(self.alpha));
        }
        validate_cuts(&self.cuts)?;
        if self.pieces.len() + 1 != self.cuts.len() {
            return Err(ModelError::PieceCount {
                pieces: self.pieces.len(),
                cuts: self.cuts.len(),
            });
        }
        if !(self.eta > 0.0) {
            return Err(ModelError::Cuts("declared minimum gap eta must be positive"));
        }
        for (i, w) in self.cuts.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if gap < self.eta {
                return Err(ModelError::MinGap { index: i, gap, eta: self.eta });
            }
        }
        for (k, p) in self.pieces.iter().enumerate() {
            if p.len() != self.spectrum.len() {
                return Err(SpectrumError::Shape {
                    expected: self.spectrum.len(),
                    got: p.len(),
                }
                .into());
            }
            let s = sobolev_norm(p, &self.spectrum, DEFAULT_GAMMA)?;
            if !s.is_finite() {
                return Err(ModelError::Regularity { k: k + 1, gamma: DEFAULT_GAMMA });
            }
            if !(p.norm() > 0.0) {
                return Err(ModelError::ZeroPiece { k: k + 1 });
            }
        }
        for (k, w) in self.pieces.windows(2).enumerate() {
            if !(w[0].distance(&w[1]) > 0.0) {
                return Err(ModelError::RepeatedPiece { k: k + 1 });
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn pieces(&self) -> &[ModeCoefficients] {
        &self.pieces
    }

    pub fn spectrum(&self) -> &Arc<SpectrumTable> {
        &self.spectrum
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Number of pieces `K`.
    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Copy with every coefficient multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            pieces: self.pieces.iter().map(|p| p.scaled(a)).collect(),
            ..self.clone()
        }
    }

    /// Grouped amplitudes `b[k][j] = sum_{lambda_n = lambda_j} a_n(theta) p_{k,n}`.
    pub fn grouped_amplitudes(&self, theta: f64) -> Vec<Vec<Complex64>> {
        let modes = self.spectrum.modes();
        self.pieces
            .iter()
            .map(|p| {
                self.spectrum
                    .distinct_eigenvalues()
                    .iter()
                    .map(|d| {
                        d.modes
                            .iter()
                            .map(|&n| boundary_coefficient(&modes[n], theta) * p.values[n])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

fn validate_cuts(cuts: &[f64]) -> Result<(), ModelError> {
    if cuts.len() < 2 {
        return Err(ModelError::Cuts("need at least c_0 and c_1"));
    }
    if !(cuts[0] >= 0.0) || !cuts[0].is_finite() {
        return Err(ModelError::Cuts("c_0 must be finite and nonnegative"));
    }
    if cuts[..cuts.len() - 1].iter().any(|c| !c.is_finite()) {
        return Err(ModelError::Cuts("only the last cut may be infinite"));
    }
    if cuts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ModelError::Cuts("cuts must be strictly increasing"));
    }
    Ok(())
}

/// The two boundary observation angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub angles: [f64; 2],
}

impl SensorConfig {
    /// Angles must lie in `[0, 2 pi)`.
    pub fn new(theta1: f64, theta2: f64) -> Result<Self, ModelError> {
        for th in [theta1, theta2] {
            if !(0.0..2.0 * PI).contains(&th) {
                return Err(ModelError::SensorAngle(th));
            }
        }
        Ok(Self { angles: [theta1, theta2] })
    }

    /// Angles plus the margin guard over the spectrum's angular indices.
    pub fn checked(
        theta1: f64,
        theta2: f64,
        spectrum: &SpectrumTable,
        margin_min: f64,
    ) -> Result<Self, ModelError> {
        let s = Self::new(theta1, theta2)?;
        s.check_margin(spectrum, margin_min)?;
        Ok(s)
    }

    pub fn delta(&self) -> f64 {
        self.angles[0] - self.angles[1]
    }

    /// `(|m|, |sin(|m| dtheta)|)` for each represented nonzero `|m|`.
    pub fn margins(&self, spectrum: &SpectrumTable) -> Vec<(u32, f64)> {
        spectrum
            .represented_abs_m()
            .into_iter()
            .map(|m| (m, (m as f64 * self.delta()).sin().abs()))
            .collect()
    }

    /// Smallest margin, or an error naming the first `|m|` below `margin_min`.
    pub fn check_margin(&self, spectrum: &SpectrumTable, margin_min: f64) -> Result<f64, ModelError> {
        let mut worst: f64 = 1.0;
        for (abs_m, margin) in self.margins(spectrum) {
            if margin < margin_min {
                return Err(ModelError::SensorMargin { abs_m, margin, margin_min });
            }
            worst = worst.min(margin);
        }
        Ok(worst)
    }
}

/// Boundary flux `du/dnu` sampled at one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTrace {
    pub sensor_angle: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl FluxTrace {
    pub fn new(sensor_angle: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        validate_grid(&times)?;
        if values.len() != times.len() {
            return Err(ModelError::Grid("times and values differ in length"));
        }
        Ok(Self { sensor_angle, times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Grid checks shared by every trace: starts at 0, strictly increasing.
pub fn validate_grid(times: &[f64]) -> Result<(), ModelError> {
    if times.len() < 2 {
        return Err(ModelError::Grid("need at least two samples"));
    }
    if times[0] != 0.0 {
        return Err(ModelError::Grid("grid must start at t = 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(ModelError::Grid("grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Uniform grid `t_i = t_max i / steps`, `i = 0..=steps`.
pub fn uniform_grid(t_max: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| t_max * i as f64 / steps as f64).collect()
}

/// `D_{j,k}(t)` for every distinct eigenvalue `j`, piece `k` and time.
///
/// Returned as `columns[k * J + j][i]`. A last cut of `+inf` contributes the
/// constant profile 1.
pub fn relaxation_columns(
    ml: &MittagLeffler,
    lambdas: &[f64],
    cuts: &[f64],
    times: &[f64],
) -> Vec<Vec<f64>> {
    let n_j = lambdas.len();
    let n_k = cuts.len() - 1;
    // profiles[i][j][t] = R_j(t - c_i), which is 1 for t <= c_i
    let profiles: Vec<Vec<Vec<f64>>> = cuts
        .iter()
        .map(|&c| {
            lambdas
                .iter()
                .map(|&lam| {
                    times
                        .iter()
                        .map(|&t| if c.is_finite() && t > c { ml.relaxation(lam, t - c) } else { 1.0 })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut columns = Vec::with_capacity(n_k * n_j);
    for pair in profiles.windows(2).take(n_k) {
        for (hi, lo) in pair[1].iter().zip(&pair[0]).take(n_j) {
            columns.push(hi.iter().zip(lo).map(|(a, b)| a - b).collect());
        }
    }
    columns
}

/// Distinct eigenvalues of a spectrum, ascending.
pub fn distinct_lambdas(spectrum: &SpectrumTable) -> Vec<f64> {
    spectrum.distinct_eigenvalues().iter().map(|d| d.lambda).collect()
}

/// Exact amplitude `u_n(t)` of one mode with eigenvalue `lambda`, where
/// `piece_values[k]` is `p_{k+1,n}`.
pub fn duhamel_mode_response(
    lambda: f64,
    alpha: f64,
    piece_values: &[Complex64],
    cuts: &[f64],
    t: f64,
) -> Result<Complex64, ModelError> {
    validate_cuts(cuts)?;
    if piece_values.len() + 1 != cuts.len() {
        return Err(ModelError::PieceCount {
            pieces: piece_values.len(),
            cuts: cuts.len(),
        });
    }
    let ml = MittagLeffler::new(alpha, 1.0)?;
    let mut u = Complex64::new(0.0, 0.0);
    for (k, p) in piece_values.iter().enumerate() {
        let (lo, hi) = (cuts[k], cuts[k + 1]);
        if t <= lo {
            break;
        }
        let near = if t < hi { 1.0 } else { ml.relaxation(lambda, t - hi) };
        let far = ml.relaxation(lambda, t - lo);
        u += p * ((near - far) / lambda);
    }
    Ok(u)
}

/// Complex flux `du/dnu(theta, t)`; all modes of the model spectrum are summed.
pub fn flux_trace_complex(
    model: &SourceModel,
    sensor_angle: f64,
    times: &[f64],
) -> Result<Vec<Complex64>, ModelError> {
    check_pieces(model)?;
    let ml = MittagLeffler::new(model.alpha, 1.0)?;
    let lambdas = distinct_lambdas(&model.spectrum);
    let columns = relaxation_columns(&ml, &lambdas, &model.cuts, times);
    let b = model.grouped_amplitudes(sensor_angle);
    let n_j = lambdas.len();
    let mut out = vec![Complex64::new(0.0, 0.0); times.len()];
    for (k, bk) in b.iter().enumerate() {
        for (j, bkj) in bk.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(&columns[k * n_j + j]) {
                *o -= bkj * d;
            }
        }
    }
    Ok(out)
}

/// Real flux trace. Errors if the imaginary part is not negligible, which
/// happens only for coefficients without conjugate symmetry.
pub fn flux_trace(model: &SourceModel, sensor_angle: f64, times: &[f64]) -> Result<FluxTrace, ModelError> {
    validate_grid(times)?;
    let values = flux_trace_complex(model, sensor_angle, times)?;
    let scale = values.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let max_im = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if max_im > 1e-10 * (1.0 + scale) {
        return Err(ModelError::ComplexFlux(max_im));
    }
    FluxTrace::new(sensor_angle, times.to_vec(), values.iter().map(|v| v.re).collect())
}

fn check_pieces(model: &SourceModel) -> Result<(), ModelError> {
    validate_cuts(&model.cuts)?;
    if model.pieces.len() + 1 != model.cuts.len() {
        return Err(ModelError::PieceCount {
            pieces: model.pieces.len(),
            cuts: model.cuts.len(),
        });
    }
    for p in &model.pieces {
        if p.len() != model.spectrum.len() {
            return Err(SpectrumError::Shape {
                expected: model.spectrum.len(),
                got: p.len(),
            }
            .into());
        }
    }
    Ok(())
}

/// Largest deviation between the two sides of the smoothed-flux identity
///
/// `I^alpha(-flux)(t) = sum_k int_{c_{k-1}}^{min(c_k, t)} (t - tau)^{alpha - 1}
///     sum_n a_n p_{k,n} [1/Gamma(alpha) - E_{alpha,alpha}(-lambda_n (t - tau)^alpha)] dtau`.
///
/// The left side applies product integration to the synthesized trace; the
/// right side integrates the kernel directly after substituting
/// `u = (t - tau)^alpha`, which removes the endpoint singularity.
///
/// The flux behaves like `(t - c)^alpha` just after every cut, which limits
/// piecewise-linear product integration on a uniform grid to
/// `O(h^{2 alpha})`. The left side is therefore computed on the grid
/// augmented by a mesh graded as `(i/M)^{2/alpha}` behind each cut, which
/// restores second order; the error is reported on the caller's grid.
pub fn verify_measurement_identity(
    model: &SourceModel,
    sensor_angle: f64,
    times: &[f64],
) -> Result<f64, ModelError> {
    validate_grid(times)?;
    let (fine, keep) = graded_grid(times, &model.cuts, model.alpha);
    let trace = flux_trace(model, sensor_angle, &fine)?;
    let neg: Vec<f64> = trace.values.iter().map(|v| -v).collect();
    let smoothed = fractional_integral(&SampledTrace::new(fine, neg)?, model.alpha)?;
    let lhs: Vec<f64> = keep.iter().map(|&i| smoothed.values()[i]).collect();

    let alpha = model.alpha;
    let ml = MittagLeffler::new(alpha, alpha)?;
    let rga = rgamma(alpha);
    let gl = GaussLegendre::new(10);
    let lambdas = distinct_lambdas(&model.spectrum);
    let b = model.grouped_amplitudes(sensor_angle);
    let cuts = &model.cuts;

    // int_{u_lo}^{u_hi} [1/Gamma(alpha) - E_{alpha,alpha}(-lambda u)] du / alpha
    let kernel_integral = |lam: f64, u_lo: f64, u_hi: f64| -> f64 {
        if u_hi <= u_lo {
            return 0.0;
        }
        let panels = ((lam * (u_hi - u_lo)).ceil() as usize).clamp(1, 400);
        let inner = gl.integrate_composite(u_lo, u_hi, panels, |u| {
            rga - ml.eval_real(-lam * u).expect("negative real argument")
        });
        inner / alpha
    };

    let mut worst: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let mut rhs = Complex64::new(0.0, 0.0);
        for (k, bk) in b.iter().enumerate() {
            let (lo, hi) = (cuts[k], cuts[k + 1]);
            if t <= lo {
                break;
            }
            let u_lo = if t < hi { 0.0 } else { (t - hi).powf(alpha) };
            let u_hi = (t - lo).powf(alpha);
            for (bkj, lam) in bk.iter().zip(&lambdas) {
                rhs += bkj * kernel_integral(*lam, u_lo, u_hi);
            }
        }
        worst = worst.max((lhs[i] - rhs.re).abs());
    }
    Ok(worst)
}

/// `times` plus graded points behind each finite cut inside the grid, and
/// the positions of the original samples in the merged grid.
fn graded_grid(times: &[f64], cuts: &[f64], alpha: f64) -> (Vec<f64>, Vec<usize>) {
    let t_end = times[times.len() - 1];
    let h = t_end / (times.len() - 1) as f64;
    let r = 2.0 / alpha;
    let mut extra = Vec::new();
    for (i, &c) in cuts.iter().enumerate() {
        if !(c < t_end) {
            continue;
        }
        let next = cuts.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t_end);
        let len = (0.1 * (next - c)).min(0.25);
        let m = (r * len / h).ceil() as usize;
        for q in 1..m {
            extra.push(c + len * (q as f64 / m as f64).powf(r));
        }
    }
    let mut merged: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
    merged.extend(extra.into_iter().map(|t| (t, false)));
    merged.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut fine: Vec<f64> = Vec::with_capacity(merged.len());
    let mut keep = Vec::with_capacity(times.len());
    for (t, original) in merged {
        let close = fine.last().is_some_and(|last| t - last <= 1e-9 * h);
        if close {
            if original {
                // an inserted point shadowing an original sample gives way
                let n = fine.len() - 1;
                fine[n] = t;
                if keep.last() != Some(&n) {
                    keep.push(n);
                }
            }
            continue;
        }
        if original {
            keep.push(fine.len());
        }
        fine.push(t);
    }
    (fine, keep)
}

/// `u(r, theta, t) = sum_n u_n(t) phi_n(r, theta)` at each point.
pub fn solve_field(model: &SourceModel, points: &[(f64, f64)], t: f64) -> Result<Vec<Complex64>, ModelError> {
    check_pieces(model)?;
    let ml = MittagLeffler::new(model.alpha, 1.0)?;
    let cuts = &model.cuts;
    let amplitudes: Vec<Complex64> = model
        .spectrum
        .modes()
        .iter()
        .enumerate()
        .map(|(n, mode)| {
            let mut u = Complex64::new(0.0, 0.0);
            for (k, p) in model.pieces.iter().enumerate() {
                let (lo, hi) = (cuts[k], cuts[k + 1]);
                if t <= lo {
                    break;
                }
                let near = if t < hi { 1.0 } else { ml.relaxation(mode.lambda, t - hi) };
                let far = ml.relaxation(mode.lambda, t - lo);
                u += p.values[n] * ((near - far) / mode.lambda);
            }
            u
        })
        .collect();
    Ok(points
        .iter()
        .map(|&(r, th)| {
            model
                .spectrum
                .modes()
                .iter()
                .zip(&amplitudes)
                .map(|(mode, u)| u * eigenfunction_eval(mode, r, th))
                .sum()
        })
        .collect())
}
