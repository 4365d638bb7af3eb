//! The five subcommands. Each returns the paths it wrote; errors carry the
//! exit code through [`CliError::exit_code`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fracsource_core::forward::flux_trace;
use fracsource_core::inversion::{fit_log_slope, windowed_transform};
use fracsource_core::laplace::{geometric_points, sample_model};
use fracsource_core::{reconstruct, FluxTrace};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::io::{self, Artifacts, ReconstructionJson, SpectrumJson};
use crate::noise::add_noise;
use crate::par;
use crate::verify;

pub const SPECTRUM_FILE: &str = "spectrum.json";
pub const CONFIG_COPY: &str = "config.toml";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.json";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const VERIFY_FILE: &str = "verify_report.json";
pub const PLOT_FLUX_FILE: &str = "plot_flux.csv";
pub const PLOT_ALPHA_FILE: &str = "plot_alpha_fit.csv";
pub const PLOT_CUTS_FILE: &str = "plot_cuts.csv";

/// Clean trace of sensor `l` (1-based).
pub fn trace_file(l: usize) -> String {
    format!("flux_sensor{l}.csv")
}

/// Noisy trace of sensor `l` (1-based).
pub fn noisy_trace_file(l: usize) -> String {
    format!("flux_sensor{l}_noisy.csv")
}

pub fn laplace_file(l: usize) -> String {
    format!("laplace_sensor{l}.csv")
}

/// `--out` if given, else `output.directory` from the config.
pub fn out_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let table = cfg.spectrum_table()?;
    let mut a = Artifacts::default();
    a.add(SPECTRUM_FILE, io::to_json(&SpectrumJson::new(&table)));
    a.write(out, "spectrum", &cfg.hash(), cfg.noise.seed)
}

/// Clean traces of both sensors on the configured grid.
pub fn synthesize(exp: &Experiment) -> Result<[FluxTrace; 2], CliError> {
    let angles = exp.sensors.angles;
    let mut traces = par::map(&angles, |&theta| flux_trace(&exp.model, theta, &exp.times));
    let second = traces.pop().expect("two sensors")?;
    let first = traces.pop().expect("two sensors")?;
    Ok([first, second])
}

pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let exp = cfg.experiment()?;
    let clean = synthesize(&exp)?;
    let mut a = Artifacts::default();
    for (l, t) in clean.iter().enumerate() {
        a.add(&trace_file(l + 1), io::trace_csv(t));
    }
    if cfg.noise.level > 0.0 {
        let noisy = add_noise(&clean, cfg.noise.level, cfg.noise.seed);
        for (l, t) in noisy.iter().enumerate() {
            a.add(&noisy_trace_file(l + 1), io::trace_csv(t));
        }
    }
    if cfg.output.formats.iter().any(|f| f == "laplace") {
        let l = &cfg.laplace;
        let points = geometric_points(l.s_min, l.s_max, l.points)?;
        for (i, theta) in exp.sensors.angles.into_iter().enumerate() {
            let samples = sample_model(&exp.model, theta, &points)?;
            a.add(&laplace_file(i + 1), io::laplace_csv(&samples));
        }
    }
    a.add(CONFIG_COPY, cfg.to_toml());
    a.write(out, "synth", &cfg.hash(), cfg.noise.seed)
}

/// Trace files `invert` reads when none are given: the noisy pair when the
/// config asks for noise, the clean pair otherwise.
pub fn default_trace_paths(cfg: &ExperimentConfig, out: &Path) -> Vec<PathBuf> {
    (1..=2)
        .map(|l| out.join(if cfg.noise.level > 0.0 { noisy_trace_file(l) } else { trace_file(l) }))
        .collect()
}

pub fn read_traces(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<[FluxTrace; 2], CliError> {
    if paths.len() != 2 {
        return Err(CliError::Validation(format!(
            "traces: expected exactly 2 trace files (one per sensor), got {}",
            paths.len()
        )));
    }
    let a = io::read_trace(&paths[0], cfg.sensors.theta1)?;
    let b = io::read_trace(&paths[1], cfg.sensors.theta2)?;
    if a.times != b.times {
        return Err(CliError::Validation("traces: the two files must share one time grid".into()));
    }
    Ok([a, b])
}

pub fn cmd_invert(cfg: &ExperimentConfig, out: &Path, traces: Option<&[PathBuf]>) -> Result<Vec<PathBuf>, CliError> {
    let exp = cfg.experiment()?;
    let paths = match traces {
        Some(p) => p.to_vec(),
        None => default_trace_paths(cfg, out),
    };
    let traces = read_traces(cfg, &paths)?;
    let result = reconstruct(&traces, &exp.spectrum, &exp.inversion)?;
    let residual = fracsource_core::inversion::model_residual(
        &traces,
        &exp.spectrum,
        result.alpha_hat,
        &result.cuts_hat,
        &result.coeffs_hat,
    )?;
    let mut a = Artifacts::default();
    a.add(RECONSTRUCTION_FILE, io::to_json(&ReconstructionJson::new(&result, &exp.spectrum)));
    a.add(
        RESIDUALS_FILE,
        io::csv(
            &["t", "residual_1", "residual_2"],
            traces[0]
                .times
                .iter()
                .enumerate()
                .map(|(i, t)| vec![*t, residual[0][i], residual[1][i]]),
        ),
    );
    a.add(CONFIG_COPY, cfg.to_toml());
    a.write(out, "invert", &cfg.hash(), cfg.noise.seed)
}

/// Runs the verification suite against `eigen`; failed checks are written
/// to the report and then reported as a numerical error.
pub fn cmd_verify_with(
    cfg: &ExperimentConfig,
    out: &Path,
    eigen: &fracsource_core::SpectrumTable,
) -> Result<Vec<PathBuf>, CliError> {
    let exp = cfg.experiment()?;
    let report = verify::run_checks(&exp, eigen)?;
    let mut a = Artifacts::default();
    a.add(VERIFY_FILE, io::to_json(&report));
    let written = a.write(out, "verify", &cfg.hash(), cfg.noise.seed)?;
    if !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(CliError::Numerical(format!("verification failed: {}", failed.join(", "))));
    }
    Ok(written)
}

pub fn cmd_verify(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    cmd_verify_with(cfg, out, &verify::default_eigen_table()?)
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("plotdata: missing {}", path.display())))
    }
}

/// Tidy plot tables from a completed run directory (synth + invert).
pub fn cmd_plotdata(run: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !run.is_dir() {
        return Err(CliError::Validation(format!("plotdata: {} is not a directory", run.display())));
    }
    let cfg_path = run.join(CONFIG_COPY);
    let rec_path = run.join(RECONSTRUCTION_FILE);
    let res_path = run.join(RESIDUALS_FILE);
    for p in [&cfg_path, &rec_path, &res_path] {
        require(p)?;
    }
    let cfg = ExperimentConfig::load(&cfg_path)?;
    let text = std::fs::read_to_string(&rec_path).map_err(|e| CliError::io(&rec_path, e))?;
    let rec: ReconstructionJson = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", rec_path.display())))?;
    let paths = default_trace_paths(&cfg, run);
    for p in &paths {
        require(p)?;
    }
    let traces = read_traces(&cfg, &paths)?;
    let (_, residual) = io::parse_csv(&res_path)?;
    if residual.len() != traces[0].len() {
        return Err(CliError::Validation(format!("{}: row count differs from the traces", res_path.display())));
    }

    let mut a = Artifacts::default();

    // -flux = model + residual, so the fitted flux is flux + residual
    let mut rows = Vec::new();
    for (l, t) in traces.iter().enumerate() {
        for (i, (time, v)) in t.times.iter().zip(&t.values).enumerate() {
            rows.push(vec![*time, (l + 1) as f64, *v, v + residual[i][l + 1]]);
        }
    }
    a.add(PLOT_FLUX_FILE, io::csv(&["t", "sensor", "flux", "fitted"], rows));

    let inv = cfg.inversion.to_core();
    let s = inv.alpha_fit_window.points();
    let slope = -(1.0 + rec.alpha_hat);
    let onset = rec.cuts_hat.first().copied().unwrap_or(0.0);
    let mut rows = Vec::new();
    for (l, t) in traces.iter().enumerate() {
        let g = windowed_transform(t, onset, inv.alpha_window_length(), &s);
        let log_s: Vec<f64> = s.iter().map(|v| v.ln()).collect();
        let log_g: Vec<f64> = g.iter().map(|v| v.abs().ln()).collect();
        // intercept of the line with the slope fixed by the estimated order
        let intercept = log_g.iter().zip(&log_s).map(|(y, x)| y - slope * x).sum::<f64>() / s.len() as f64;
        let (free_slope, _, _) = fit_log_slope(&s, &g);
        for i in 0..s.len() {
            rows.push(vec![(l + 1) as f64, log_s[i], log_g[i], intercept + slope * log_s[i], slope, free_slope]);
        }
    }
    a.add(
        PLOT_ALPHA_FILE,
        io::csv(&["sensor", "log_s", "log_abs_G", "fit_line", "slope", "free_slope"], rows),
    );

    let truth: Vec<f64> = cfg.model.cuts.iter().copied().filter(|c| c.is_finite()).collect();
    let mut cuts = String::from("index,true,reconstructed\n");
    for i in 0..truth.len().max(rec.cuts_hat.len()) {
        let cell = |v: Option<&f64>| v.map(|v| io::num(*v)).unwrap_or_default();
        let _ = writeln!(cuts, "{i},{},{}", cell(truth.get(i)), cell(rec.cuts_hat.get(i)));
    }
    a.add(PLOT_CUTS_FILE, cuts);

    a.write(out, "plotdata", &cfg.hash(), cfg.noise.seed)
}
