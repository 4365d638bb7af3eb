//! Two-parameter Mittag-Leffler function `E_{a,b}(z) = sum_k z^k / Gamma(a k + b)`.
//!
//! Small arguments use the Taylor series. Everything else goes through the
//! inverse Laplace transform of `s^(a-b) / (s^a - z)` along an optimal
//! parabolic contour (Garrappa's global scheme), with residues added for the
//! singular points the contour leaves to its right.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use super::gamma::rgamma;
use super::SpecFunError;

const SERIES_RADIUS: f64 = 1.0;
const LOG_MACHINE_EPS: f64 = -36.043_653_389_117_15;

/// Accuracy request for Mittag-Leffler evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLAccuracy {
    /// Absolute error target.
    pub abs_tol: f64,
    /// Cap on series terms and on contour nodes per half line.
    pub max_terms: usize,
}

impl Default for MLAccuracy {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_terms: 600,
        }
    }
}

impl MLAccuracy {
    fn validate(&self) -> Result<(), SpecFunError> {
        if !(self.abs_tol > 0.0) {
            return Err(SpecFunError::Domain("abs_tol must be positive"));
        }
        if self.max_terms == 0 {
            return Err(SpecFunError::Domain("max_terms must be at least 1"));
        }
        Ok(())
    }

    fn contour_log_eps(&self) -> f64 {
        (self.abs_tol * 1e-3).max(1e-15).ln()
    }
}

fn check_params(alpha: f64, beta: f64) -> Result<(), SpecFunError> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(SpecFunError::Domain("Mittag-Leffler order must lie in (0, 2)"));
    }
    if !beta.is_finite() {
        return Err(SpecFunError::Domain("Mittag-Leffler beta must be finite"));
    }
    Ok(())
}

/// `E_{alpha,beta}(z)` with the default accuracy request.
pub fn mittag_leffler(alpha: f64, beta: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    mittag_leffler_with(alpha, beta, z, &MLAccuracy::default())
}

/// `E_{alpha,beta}(z)` with an explicit accuracy request.
pub fn mittag_leffler_with(
    alpha: f64,
    beta: f64,
    z: Complex64,
    acc: &MLAccuracy,
) -> Result<Complex64, SpecFunError> {
    check_params(alpha, beta)?;
    acc.validate()?;
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(SpecFunError::Domain("argument must be finite"));
    }
    if z.norm() <= SERIES_RADIUS {
        return ml_series(alpha, beta, z, acc, |k| rgamma(alpha * k as f64 + beta));
    }
    let plan = ContourPlan::build(alpha, beta, z, acc)?;
    let mut value = plan.integrate(alpha, beta, z);
    if z.im == 0.0 {
        value.im = 0.0;
    }
    Ok(value)
}

fn ml_series<F: Fn(usize) -> f64>(
    alpha: f64,
    beta: f64,
    z: Complex64,
    acc: &MLAccuracy,
    rg: F,
) -> Result<Complex64, SpecFunError> {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut zk = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 0..acc.max_terms {
        let term = zk * rg(k);
        sum += term;
        let mag = term.norm();
        // once a k + b > 2 the terms decrease monotonically for |z| <= 1
        if alpha * k as f64 + beta > 2.0 && mag <= 1e-17 * (1.0 + sum.norm()) {
            return Ok(sum);
        }
        last = mag;
        zk *= z;
        if zk.norm() == 0.0 {
            return Ok(sum);
        }
    }
    if last <= acc.abs_tol {
        Ok(sum)
    } else {
        Err(SpecFunError::Accuracy { achieved: last })
    }
}

/// Raw series evaluation, for regime cross-checks.
#[cfg(test)]
pub(crate) fn ml_series_raw(alpha: f64, beta: f64, z: Complex64) -> Complex64 {
    let acc = MLAccuracy {
        abs_tol: 1e-12,
        max_terms: 5000,
    };
    ml_series(alpha, beta, z, &acc, |k| rgamma(alpha * k as f64 + beta)).unwrap()
}

/// Raw contour evaluation, for regime cross-checks.
#[cfg(test)]
pub(crate) fn ml_contour_raw(alpha: f64, beta: f64, z: Complex64) -> Complex64 {
    let plan = ContourPlan::build(alpha, beta, z, &MLAccuracy::default()).unwrap();
    plan.integrate(alpha, beta, z)
}

struct ContourPlan {
    mu: f64,
    h: f64,
    n: usize,
    residues: Vec<Complex64>,
}

impl ContourPlan {
    fn build(alpha: f64, beta: f64, z: Complex64, acc: &MLAccuracy) -> Result<Self, SpecFunError> {
        let requested = acc.contour_log_eps();
        let mut log_eps = requested;
        let theta = z.arg();
        let kmin = (-alpha / 2.0 - theta / (2.0 * PI)).ceil() as i64;
        let kmax = (alpha / 2.0 - theta / (2.0 * PI)).floor() as i64;
        let modulus = z.norm().powf(1.0 / alpha);

        let mut singular: Vec<(f64, Complex64)> = (kmin..=kmax)
            .map(|k| {
                let s = Complex64::from_polar(modulus, (theta + 2.0 * PI * k as f64) / alpha);
                ((s.re + s.norm()) / 2.0, s)
            })
            .filter(|(phi, _)| *phi > 1e-15)
            .collect();
        singular.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut s_star: Vec<Complex64> = Vec::with_capacity(singular.len() + 1);
        let mut phi: Vec<f64> = Vec::with_capacity(singular.len() + 2);
        s_star.push(Complex64::new(0.0, 0.0));
        phi.push(0.0);
        for (p, s) in &singular {
            s_star.push(*s);
            phi.push(*p);
        }
        let j1 = s_star.len();
        let mut p = alloc::vec![1.0; j1];
        p[0] = (-2.0 * (alpha - beta + 1.0)).max(0.0);
        let mut q = alloc::vec![1.0; j1];
        q[j1 - 1] = f64::INFINITY;
        phi.push(f64::INFINITY);

        let admissible: Vec<usize> = (0..j1)
            .filter(|&j| phi[j] < (log_eps - LOG_MACHINE_EPS) && phi[j] < phi[j + 1])
            .collect();
        if admissible.is_empty() {
            return Err(SpecFunError::Accuracy { achieved: f64::INFINITY });
        }

        let cap = acc.max_terms.max(8) as f64;
        loop {
            let mut best: Option<(f64, f64, f64, usize)> = None;
            for &j in &admissible {
                let (mu, h, n) = if j < j1 - 1 {
                    optimal_param_rb(phi[j], phi[j + 1], p[j], q[j], log_eps)
                } else {
                    optimal_param_ru(phi[j], p[j], log_eps)
                };
                if n.is_finite() && best.is_none_or(|b| n < b.2) {
                    best = Some((mu, h, n, j));
                }
            }
            match best {
                Some((mu, h, n, j)) if n <= cap => {
                    let achieved = log_eps.exp();
                    if achieved > acc.abs_tol.max(1e-15) * 1.0001 && log_eps > requested {
                        return Err(SpecFunError::Accuracy { achieved });
                    }
                    let residues = s_star[j + 1..].to_vec();
                    return Ok(Self {
                        mu,
                        h,
                        n: n as usize,
                        residues,
                    });
                }
                _ => {
                    log_eps += core::f64::consts::LN_10;
                    if log_eps > 0.0 {
                        return Err(SpecFunError::Accuracy { achieved: 1.0 });
                    }
                }
            }
        }
    }

    fn node(&self, k: i64) -> (Complex64, Complex64) {
        let u = self.h * k as f64;
        let s = Complex64::new(self.mu, 0.0) * Complex64::new(1.0, u) * Complex64::new(1.0, u);
        let ds = Complex64::new(-2.0 * self.mu * u, 2.0 * self.mu);
        (s, ds)
    }

    fn integrate(&self, alpha: f64, beta: f64, z: Complex64) -> Complex64 {
        let n = self.n as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in -n..=n {
            let (s, ds) = self.node(k);
            let f = s.powf(alpha - beta) / (s.powf(alpha) - z) * ds;
            acc += s.exp() * f;
        }
        let integral = acc * self.h / Complex64::new(0.0, 2.0 * PI);
        let mut residues = Complex64::new(0.0, 0.0);
        for s in &self.residues {
            residues += s.powf(1.0 - beta) * s.exp() / alpha;
        }
        integral + residues
    }
}

fn optimal_param_rb(
    phi_j: f64,
    phi_j1: f64,
    pj: f64,
    qj: f64,
    mut log_eps: f64,
) -> (f64, f64, f64) {
    let fac = 1.01;
    let f_max = (log_eps - LOG_MACHINE_EPS).exp();
    let sq_phi_j = phi_j.sqrt();
    let threshold = 2.0 * (log_eps - LOG_MACHINE_EPS).sqrt();
    let sq_phi_j1 = phi_j1.sqrt().min(threshold - sq_phi_j);

    let mut f_bar = 1.0;
    let (sq_bar_j, sq_bar_j1) = if pj < 1e-14 && qj < 1e-14 {
        (sq_phi_j, sq_phi_j1)
    } else if pj < 1e-14 {
        let f_min = if sq_phi_j > 0.0 {
            fac * (sq_phi_j / (sq_phi_j1 - sq_phi_j)).powf(qj)
        } else {
            fac
        };
        if f_min >= f_max {
            return (0.0, 0.0, f64::INFINITY);
        }
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fq = f_bar.powf(-1.0 / qj);
        (sq_phi_j, (2.0 * sq_phi_j1 - fq * sq_phi_j) / (2.0 + fq))
    } else if qj < 1e-14 {
        let f_min = fac * (sq_phi_j1 / (sq_phi_j1 - sq_phi_j)).powf(pj);
        if f_min >= f_max {
            return (0.0, 0.0, f64::INFINITY);
        }
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        ((2.0 * sq_phi_j + fp * sq_phi_j1) / (2.0 - fp), sq_phi_j1)
    } else {
        let mut f_min = fac * (sq_phi_j + sq_phi_j1) / (sq_phi_j1 - sq_phi_j).powf(pj.max(qj));
        if f_min >= f_max {
            return (0.0, 0.0, f64::INFINITY);
        }
        f_min = f_min.max(1.5);
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        let fq = f_bar.powf(-1.0 / qj);
        let w = -phi_j1 / log_eps;
        let den = 2.0 + w - (1.0 + w) * fp + fq;
        (
            ((2.0 + w + fq) * sq_phi_j + fp * sq_phi_j1) / den,
            (-(1.0 + w) * fq * sq_phi_j + (2.0 + w - (1.0 + w) * fp) * sq_phi_j1) / den,
        )
    };

    log_eps -= f_bar.ln();
    let w = -sq_bar_j1 * sq_bar_j1 / log_eps;
    let mu = (((1.0 + w) * sq_bar_j + sq_bar_j1) / (2.0 + w)).powi(2);
    let h = -2.0 * PI / log_eps * (sq_bar_j1 - sq_bar_j) / ((1.0 + w) * sq_bar_j + sq_bar_j1);
    let n = ((1.0 - log_eps / mu).sqrt() / h).ceil();
    (mu, h, n)
}

fn optimal_param_ru(phi_j: f64, pj: f64, log_eps: f64) -> (f64, f64, f64) {
    let sq_phi_j = phi_j.sqrt();
    let mut phibar = if phi_j > 0.0 { phi_j * 1.01 } else { 0.01 };
    let mut sq_phibar = phibar.sqrt();
    let (f_min, f_max, f_tar) = (1.0, 10.0, 5.0);

    let (mut n, mut a, mut sq_mu);
    let mut guard = 0;
    loop {
        let log_eps_phi = log_eps / phibar;
        n = (phibar / PI * (1.0 - 1.5 * log_eps_phi + (1.0 - 2.0 * log_eps_phi).sqrt())).ceil();
        a = PI * n / phibar;
        sq_mu = sq_phibar * (4.0 - a).abs() / (7.0 - (1.0 + 12.0 * a).sqrt()).abs();
        let fbar = ((sq_phibar - sq_phi_j) / sq_mu).powf(-pj);
        guard += 1;
        if pj < 1e-14 || (f_min < fbar && fbar < f_max) || guard > 100 {
            break;
        }
        sq_phibar = f_tar.powf(-1.0 / pj) * sq_mu + sq_phi_j;
        phibar = sq_phibar * sq_phibar;
    }
    let mut mu = sq_mu * sq_mu;
    let mut h = (-3.0 * a - 2.0 + 2.0 * (1.0 + 12.0 * a).sqrt()) / (4.0 - a) / n;

    let threshold = log_eps - LOG_MACHINE_EPS;
    if mu > threshold {
        let q = if pj.abs() < 1e-14 {
            0.0
        } else {
            f_tar.powf(-1.0 / pj) * mu.sqrt()
        };
        let phibar = (q + phi_j.sqrt()).powi(2);
        if phibar < threshold {
            let w = (LOG_MACHINE_EPS / (LOG_MACHINE_EPS - log_eps)).sqrt();
            let u = (-phibar / LOG_MACHINE_EPS).sqrt();
            mu = threshold;
            n = (w * log_eps / 2.0 / PI / (u * w - 1.0)).ceil();
            h = w / n;
        } else {
            n = f64::INFINITY;
            h = 0.0;
        }
    }
    (mu, h, n)
}

/// Reusable evaluator for a fixed `(alpha, beta)` pair.
///
/// Caches the reciprocal Gamma table for the series and, for `alpha < 1`,
/// a contour that is valid for every argument with `|arg z| > alpha * pi`
/// (in particular the whole negative real axis). Batch evaluation of
/// relaxation profiles `E(-lambda t^alpha)` is then one complex division per
/// contour node.
#[derive(Debug, Clone)]
pub struct MittagLeffler {
    alpha: f64,
    beta: f64,
    acc: MLAccuracy,
    rgamma_table: Vec<f64>,
    // (s_k^alpha, weight_k) for k >= 0; weight includes h / (2 pi i) e^{s} s^{alpha-beta} ds
    sector_nodes: Vec<(Complex64, Complex64)>,
}

impl MittagLeffler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SpecFunError> {
        Self::with_accuracy(alpha, beta, MLAccuracy::default())
    }

    pub fn with_accuracy(alpha: f64, beta: f64, acc: MLAccuracy) -> Result<Self, SpecFunError> {
        check_params(alpha, beta)?;
        acc.validate()?;
        let rgamma_table = (0..acc.max_terms)
            .map(|k| rgamma(alpha * k as f64 + beta))
            .collect();
        let mut sector_nodes = Vec::new();
        if alpha < 1.0 {
            // any argument on the negative real axis has no singular points
            let plan = ContourPlan::build(alpha, beta, Complex64::new(-2.0, 0.0), &acc)?;
            debug_assert!(plan.residues.is_empty());
            let scale = Complex64::new(plan.h, 0.0) / Complex64::new(0.0, 2.0 * PI);
            for k in 0..=plan.n as i64 {
                let (s, ds) = plan.node(k);
                let w = scale * s.exp() * s.powf(alpha - beta) * ds;
                sector_nodes.push((s.powf(alpha), w));
            }
        }
        Ok(Self {
            alpha,
            beta,
            acc,
            rgamma_table,
            sector_nodes,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `E_{alpha,beta}(x)` for real `x`.
    pub fn eval_real(&self, x: f64) -> Result<f64, SpecFunError> {
        if x.abs() <= SERIES_RADIUS {
            return Ok(self.series(Complex64::new(x, 0.0))?.re);
        }
        if x < 0.0 && !self.sector_nodes.is_empty() {
            let mut sum = 0.0;
            for (i, (sa, w)) in self.sector_nodes.iter().enumerate() {
                let t = (*w / (*sa - x)).re;
                sum += if i == 0 { t } else { 2.0 * t };
            }
            return Ok(sum);
        }
        Ok(mittag_leffler_with(self.alpha, self.beta, Complex64::new(x, 0.0), &self.acc)?.re)
    }

    /// Relaxation profile `E_{alpha,beta}(-lambda tau^alpha)`, one for `tau <= 0`.
    pub fn relaxation(&self, lambda: f64, tau: f64) -> f64 {
        if tau <= 0.0 {
            return self.rgamma_table[0];
        }
        self.eval_real(-lambda * tau.powf(self.alpha))
            .expect("negative real arguments are always in range")
    }

    /// `E_{alpha,beta}(z)` for complex `z`.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, SpecFunError> {
        if z.norm() <= SERIES_RADIUS {
            return self.series(z);
        }
        if !self.sector_nodes.is_empty() && z.arg().abs() > self.alpha * PI * 1.000_001 {
            let mut sum = Complex64::new(0.0, 0.0);
            for (i, (sa, w)) in self.sector_nodes.iter().enumerate() {
                sum += *w / (*sa - z);
                if i > 0 {
                    // mirrored node: s -> conj(s), weight -> conj(weight)
                    sum += w.conj() / (sa.conj() - z);
                }
            }
            return Ok(sum);
        }
        mittag_leffler_with(self.alpha, self.beta, z, &self.acc)
    }

    fn series(&self, z: Complex64) -> Result<Complex64, SpecFunError> {
        let table = &self.rgamma_table;
        ml_series(self.alpha, self.beta, z, &self.acc, |k| table[k])
    }
}
