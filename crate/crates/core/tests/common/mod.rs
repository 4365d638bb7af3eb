#![allow(dead_code)]

use std::sync::Arc;

use fracsource_core::{build_spectrum, Complex64, ModeCoefficients, SourceModel, SpectrumTable};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn spectrum30() -> Arc<SpectrumTable> {
    Arc::new(build_spectrum(30.0).unwrap())
}

/// The two-piece reference model: order 0.75, switch at 1.2.
pub fn reference_model() -> SourceModel {
    let s = spectrum30();
    let p1 = ModeCoefficients::from_entries(
        &s,
        &[
            (0, 1, c(1.0, 0.0)),
            (1, 1, c(0.4, -0.3)),
            (-1, 1, c(0.4, 0.3)),
            (2, 1, c(0.2, 0.1)),
            (-2, 1, c(0.2, -0.1)),
        ],
    )
    .unwrap();
    let p2 = ModeCoefficients::from_entries(&s, &[(0, 1, c(-0.5, 0.0)), (1, 1, c(0.8, -0.6)), (-1, 1, c(0.8, 0.6))])
        .unwrap();
    SourceModel::new(s, 0.75, vec![0.2, 1.2, f64::INFINITY], vec![p1, p2], 0.5).unwrap()
}

/// Real-field piece from one coefficient per represented `(|m|, k)`.
pub fn real_piece(s: &SpectrumTable, coeffs: &[(f64, f64)]) -> ModeCoefficients {
    let mut values = vec![c(0.0, 0.0); s.len()];
    let mut next = coeffs.iter().cycle();
    for (i, mode) in s.modes().iter().enumerate() {
        let &(re, im) = next.next().unwrap();
        if mode.m == 0 {
            values[i] = c(re, 0.0);
        } else if mode.m > 0 {
            values[i] = c(re, im);
            values[s.partner(i).unwrap()] = c(re, -im);
        }
    }
    ModeCoefficients::new(s, values).unwrap()
}
