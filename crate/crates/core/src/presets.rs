//! Ground truths and settings of the reference experiments.

use std::f64::consts::PI;

use crate::sources::{staircase_q, SpectralSource, StarSource, StepSource};

/// Observation angles of the two-sensor experiments.
pub const TWO_ANGLES: [f64; 2] = [0.0, 13.0 * PI / 32.0];

/// Four sensors; pairwise differences are not rational multiples of π.
pub const FOUR_ANGLES: [f64; 4] = [0.0, 13.0 * PI / 32.0, 2.6, 4.3];

pub const HORIZON: f64 = 1.0;
pub const DT: f64 = 0.01;
pub const BETA_P: f64 = 1e-2;
pub const BETA_Q: f64 = 8e-4;
pub const OUTER_ITERATIONS: usize = 10;
pub const NOISE_LEVELS: [f64; 3] = [0.01, 0.03, 0.05];

/// Basis cutoff of the spectral experiment (12 modes). Chosen by a
/// convergence study; errors are flat for cutoffs in `[50, 70]` and grow
/// quickly beyond 80.
pub const E1_LAMBDA_MAX: f64 = 70.0;

/// Basis cutoff used for star-shape fitting (21 modes).
pub const SHAPE_LAMBDA_MAX: f64 = 100.0;

/// `(5 φ_1 + 2 φ_2 + φ_3)/√30`: unit norm, first three modes.
pub fn e1_p() -> SpectralSource {
    SpectralSource::new(vec![5.0, 2.0, 1.0]).scaled(1.0 / 30f64.sqrt())
}

pub fn e1_q() -> StepSource {
    staircase_q()
}

/// `r(θ) = 0.5 + 0.2 cos 2θ`.
pub fn e2_shape() -> StarSource {
    StarSource::new(0.5, &[0.0, 0.2], &[]).expect("valid shape")
}

/// `r(θ) = 0.25 + 0.1 cos 2θ`.
pub fn e3_shape() -> StarSource {
    StarSource::new(0.25, &[0.0, 0.1], &[]).expect("valid shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angles::is_resonant;

    #[test]
    fn truths_are_consistent() {
        assert!((e1_p().norm() - 1.0).abs() < 1e-15);
        assert_eq!(e1_q().eval(0.5).unwrap(), 2.0);
        assert!((e2_shape().radius(0.0) - 0.7).abs() < 1e-15);
        assert!((e3_shape().radius(PI / 2.0) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn sensor_sets_are_not_resonant() {
        for set in [&TWO_ANGLES[..], &FOUR_ANGLES[..]] {
            for i in 0..set.len() {
                for j in i + 1..set.len() {
                    assert_eq!(is_resonant(set[i], set[j], 31), None);
                }
            }
        }
    }
}
