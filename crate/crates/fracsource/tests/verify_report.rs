use std::process::Command;

use fracsource::commands::{cmd_verify_with, VERIFY_FILE};
use fracsource::error::EXIT_NUMERICAL;
use fracsource::verify::{default_eigen_table, VerifyReport};
use fracsource::ExperimentConfig;
use fracsource_core::SpectrumTable;

#[test]
fn default_config_passes_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let status = Command::new(env!("CARGO_BIN_EXE_fracsource"))
        .args(["verify", "--quiet", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: VerifyReport = serde_json::from_str(&std::fs::read_to_string(out.join(VERIFY_FILE)).unwrap()).unwrap();
    assert!(report.passed);
    let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "ml_oracle",
            "ml_laplace_pair",
            "ml_unit_mass",
            "measurement_identity",
            "measurement_identity_halving_gain",
            "laplace_agreement",
            "gram_matrix",
            "normalizer",
            "multiplicity_pairing",
        ]
    );
}

#[test]
fn corrupted_normalizer_fails_with_numerical_exit() {
    let dir = tempfile::tempdir().unwrap();
    let eigen = default_eigen_table().unwrap();
    let mut modes = eigen.modes().to_vec();
    modes[0].omega *= 1.001;
    let bad = SpectrumTable::from_modes(eigen.lambda_max(), modes).unwrap();
    let err = cmd_verify_with(&ExperimentConfig::default(), dir.path(), &bad).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_NUMERICAL);
    assert!(err.to_string().contains("normalizer"), "{err}");
    let report: VerifyReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(VERIFY_FILE)).unwrap()).unwrap();
    assert!(!report.passed);
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    assert_eq!(failed, ["gram_matrix", "normalizer"]);
}
