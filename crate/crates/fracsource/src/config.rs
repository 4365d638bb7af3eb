//! Experiment configuration: one TOML file with full defaulting.
//!
//! Every section and every field may be omitted; the defaults describe the
//! two-piece reference experiment (see `configs/reference.toml`).

use std::path::Path;
use std::sync::Arc;

use fracsource_core::forward::uniform_grid;
use fracsource_core::spectrum::{project_function, DEFAULT_RADIAL_ORDER};
use fracsource_core::{
    build_spectrum, AlphaWindow, Complex64, InversionConfig, ModeCoefficients, SensorConfig, SourceModel,
    SpectrumTable,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Extra artifacts that `output.formats` may request.
pub const KNOWN_FORMATS: [&str; 1] = ["laplace"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spectrum: SpectrumSection,
    pub model: ModelSection,
    pub sensors: SensorSection,
    pub grid: GridSection,
    pub noise: NoiseSection,
    pub laplace: LaplaceSection,
    pub inversion: InversionSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub lambda_max: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { lambda_max: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    /// `c_0 < c_1 < ... < c_K`; only the last may be `inf`.
    pub cuts: Vec<f64>,
    /// Minimal gap between interior cuts.
    pub eta: f64,
    pub pieces: Vec<PieceSpec>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let mode = |m, k, re, im| ModeEntry { m, k, re, im };
        Self {
            alpha: 0.75,
            cuts: vec![0.2, 1.2, f64::INFINITY],
            eta: 0.5,
            pieces: vec![
                PieceSpec::Modes {
                    modes: vec![
                        mode(0, 1, 1.0, 0.0),
                        mode(1, 1, 0.4, -0.3),
                        mode(-1, 1, 0.4, 0.3),
                        mode(2, 1, 0.2, 0.1),
                        mode(-2, 1, 0.2, -0.1),
                    ],
                },
                PieceSpec::Modes {
                    modes: vec![mode(0, 1, -0.5, 0.0), mode(1, 1, 0.8, -0.6), mode(-1, 1, 0.8, 0.6)],
                },
            ],
        }
    }
}

/// One coefficient `p_{m,k} = re + i im`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub m: i32,
    pub k: u32,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// A piece given either by explicit mode coefficients or by a density on
/// the disc that is projected onto the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PieceSpec {
    Modes { modes: Vec<ModeEntry> },
    Density { density: Density },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Density {
    /// `amplitude * exp(-|x - center|^2 / width^2)`.
    Gaussian { center: [f64; 2], width: f64, amplitude: f64 },
    /// The constant `value` on the whole disc.
    Constant { value: f64 },
}

impl Density {
    fn eval(&self, r: f64, theta: f64) -> f64 {
        match self {
            Density::Gaussian { center, width, amplitude } => {
                let (x, y) = (r * theta.cos(), r * theta.sin());
                let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                amplitude * (-d2 / (width * width)).exp()
            }
            Density::Constant { value } => *value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub theta1: f64,
    pub theta2: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self { theta1: 0.3, theta2: 1.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub t_max: f64,
    pub steps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { t_max: 4.0, steps: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Noise deviation relative to the peak of each trace; 0 disables noise.
    pub level: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { level: 0.0, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceSection {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

impl Default for LaplaceSection {
    fn default() -> Self {
        Self { s_min: 1.0, s_max: 20.0, points: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionSection {
    pub onset_threshold: f64,
    pub onset_floor: f64,
    pub changepoint_min_gap: f64,
    pub alpha_fit_window: WindowSection,
    pub margin_min: f64,
    pub refine: bool,
    pub ridge: f64,
}

impl Default for InversionSection {
    fn default() -> Self {
        let c = InversionConfig::default();
        Self {
            onset_threshold: c.onset_threshold,
            onset_floor: c.onset_floor,
            changepoint_min_gap: c.changepoint_min_gap,
            alpha_fit_window: WindowSection {
                s_min: c.alpha_fit_window.s_min,
                s_max: c.alpha_fit_window.s_max,
                points: c.alpha_fit_window.points,
            },
            margin_min: c.margin_min,
            refine: c.refine,
            ridge: c.ridge,
        }
    }
}

impl InversionSection {
    pub fn to_core(&self) -> InversionConfig {
        InversionConfig {
            onset_threshold: self.onset_threshold,
            onset_floor: self.onset_floor,
            changepoint_min_gap: self.changepoint_min_gap,
            alpha_fit_window: AlphaWindow {
                s_min: self.alpha_fit_window.s_min,
                s_max: self.alpha_fit_window.s_max,
                points: self.alpha_fit_window.points,
            },
            margin_min: self.margin_min,
            refine: self.refine,
            ridge: self.ridge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
    /// Optional extra artifacts, see [`KNOWN_FORMATS`].
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: "run".into(),
            formats: vec!["laplace".into()],
        }
    }
}

/// A configuration turned into library objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spectrum: Arc<SpectrumTable>,
    pub model: SourceModel,
    pub sensors: SensorConfig,
    pub times: Vec<f64>,
    pub inversion: InversionConfig,
}

fn clause(section: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{section}: {e}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn spectrum_table(&self) -> Result<SpectrumTable, CliError> {
        let lm = self.spectrum.lambda_max;
        if !(lm > 0.0) || !lm.is_finite() {
            return Err(clause("spectrum.lambda_max", "must be positive and finite"));
        }
        build_spectrum(lm).map_err(|e| clause("spectrum", e))
    }

    fn pieces(&self, spectrum: &SpectrumTable) -> Result<Vec<ModeCoefficients>, CliError> {
        self.model
            .pieces
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                PieceSpec::Modes { modes } => {
                    let entries: Vec<(i32, u32, Complex64)> =
                        modes.iter().map(|e| (e.m, e.k, Complex64::new(e.re, e.im))).collect();
                    ModeCoefficients::from_entries(spectrum, &entries)
                        .map_err(|e| clause(&format!("model.pieces[{i}]"), e))
                }
                PieceSpec::Density { density } => {
                    if let Density::Gaussian { width, .. } = density {
                        if !(*width > 0.0) {
                            return Err(clause(&format!("model.pieces[{i}].density"), "width must be positive"));
                        }
                    }
                    let f = |r: f64, th: f64| Complex64::new(density.eval(r, th), 0.0);
                    Ok(project_function(f, spectrum, DEFAULT_RADIAL_ORDER))
                }
            })
            .collect()
    }

    /// Validate every section and build the library objects.
    pub fn experiment(&self) -> Result<Experiment, CliError> {
        let spectrum = Arc::new(self.spectrum_table()?);
        let pieces = self.pieces(&spectrum)?;
        let model = SourceModel::new(spectrum.clone(), self.model.alpha, self.model.cuts.clone(), pieces, self.model.eta)
            .map_err(|e| clause("model", e))?;
        let sensors = SensorConfig::new(self.sensors.theta1, self.sensors.theta2).map_err(|e| clause("sensors", e))?;
        let g = &self.grid;
        if !(g.t_max > 0.0) || !g.t_max.is_finite() || g.steps < 8 {
            return Err(clause("grid", "need t_max > 0 and at least 8 steps"));
        }
        let n = &self.noise;
        if !(n.level >= 0.0) || !n.level.is_finite() {
            return Err(clause("noise.level", "must be a nonnegative number"));
        }
        let l = &self.laplace;
        if !(l.s_min > 0.0) || !(l.s_max >= l.s_min) || !l.s_max.is_finite() || l.points == 0 {
            return Err(clause("laplace", "need 0 < s_min <= s_max and at least one point"));
        }
        if let Some(f) = self.output.formats.iter().find(|f| !KNOWN_FORMATS.contains(&f.as_str())) {
            return Err(clause("output.formats", format!("unknown format {f:?}")));
        }
        let inversion = self.inversion.to_core();
        inversion.validate().map_err(|e| clause("inversion", e))?;
        Ok(Experiment {
            spectrum,
            model,
            sensors,
            times: uniform_grid(g.t_max, g.steps),
            inversion,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        let e = c.experiment().unwrap();
        assert_eq!(e.times.len(), 4001);
        assert_eq!(e.model.piece_count(), 2);
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn partial_sections_default_the_rest() {
        let c = ExperimentConfig::from_toml("[grid]\nsteps = 100\n[noise]\nlevel = 0.01\n").unwrap();
        assert_eq!(c.grid.steps, 100);
        assert_eq!(c.grid.t_max, 4.0);
        assert_eq!(c.noise.seed, 42);
        assert!(ExperimentConfig::from_toml("[grid]\nstepz = 1\n").is_err());
    }

    #[test]
    fn densities_are_projected() {
        let text = r#"
[model]
alpha = 0.6
cuts = [0.0, inf]
[[model.pieces]]
density = { kind = "gaussian", center = [0.2, 0.1], width = 0.4, amplitude = 1.0 }
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let e = c.experiment().unwrap();
        assert!(e.model.pieces()[0].real_field);
        assert!(e.model.pieces()[0].norm() > 0.1);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation_names_the_section() {
        let mut c = ExperimentConfig::default();
        c.model.pieces = vec![PieceSpec::Modes { modes: vec![] }, PieceSpec::Modes { modes: vec![] }];
        let msg = c.experiment().unwrap_err().to_string();
        assert!(msg.contains("model") && msg.contains("nondegeneracy"), "{msg}");
        let mut c = ExperimentConfig::default();
        c.spectrum.lambda_max = 5.0;
        assert!(c.experiment().unwrap_err().to_string().contains("spectrum"));
        let mut c = ExperimentConfig::default();
        c.output.formats = vec!["png".into()];
        assert!(c.experiment().unwrap_err().to_string().contains("output.formats"));
    }
}
