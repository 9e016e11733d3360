//! Context-window extension for rotary frequencies.
//!
//! The scale factor is the ratio of the target visual context length to the
//! visual context length seen in training. Each rotary dimension is blended
//! between its original frequency and the fully interpolated `theta / s`
//! according to how many full rotations it completes inside the training
//! window.

use crate::error::{Error, Result};
use crate::rope::{frequency_table, FrequencyTable, RotaryConfig};

/// Visual training/target context lengths plus the ramp hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConfig {
    /// Visual context length seen during training, in tokens.
    pub visual_train_len: u64,
    /// Target visual context length, in tokens.
    pub target_len: u64,
    /// Lower ramp knee; dimensions with `r < alpha` are fully interpolated.
    pub alpha: f64,
    /// Upper ramp knee; dimensions with `r > beta` keep their frequency.
    pub beta: f64,
}

impl ScalingConfig {
    pub const DEFAULT_ALPHA: f64 = 1.0;
    pub const DEFAULT_BETA: f64 = 32.0;
    /// 32 frames at 196 tokens per frame.
    pub const DEFAULT_VISUAL_TRAIN_LEN: u64 = 6272;

    pub fn new(visual_train_len: u64, target_len: u64, alpha: f64, beta: f64) -> Result<Self> {
        if visual_train_len == 0 {
            return Err(Error::Config("visual_train_len must be positive".into()));
        }
        if target_len < visual_train_len {
            return Err(Error::Config(format!(
                "target_len {target_len} < visual_train_len {visual_train_len}: shrinking the window is not supported"
            )));
        }
        if !(alpha >= 0.0) || !(beta > alpha) {
            return Err(Error::Config(format!(
                "ramp requires beta > alpha >= 0, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self {
            visual_train_len,
            target_len,
            alpha,
            beta,
        })
    }

    /// Default alpha/beta ramp for the given lengths.
    pub fn with_defaults(visual_train_len: u64, target_len: u64) -> Result<Self> {
        Self::new(
            visual_train_len,
            target_len,
            Self::DEFAULT_ALPHA,
            Self::DEFAULT_BETA,
        )
    }
}

/// Per-dimension record of the scaling computation.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionReport {
    pub dim_index: usize,
    pub theta: f64,
    pub wavelength: f64,
    /// Full rotations completed inside the training window.
    pub ratio_r: f64,
    pub gamma: f64,
    pub theta_scaled: f64,
}

/// `s = target_len / visual_train_len`, at least 1.
pub fn scale_factor(config: &ScalingConfig) -> f64 {
    config.target_len as f64 / config.visual_train_len as f64
}

/// Piecewise-linear blend: 1 above `beta`, 0 below `alpha`, linear between.
pub fn ramp(ratio_r: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(beta > alpha) {
        return Err(Error::Config(format!(
            "ramp requires beta > alpha, got alpha={alpha}, beta={beta}"
        )));
    }
    Ok(if ratio_r > beta {
        1.0
    } else if ratio_r < alpha {
        0.0
    } else {
        (ratio_r - alpha) / (beta - alpha)
    })
}

// The boundary branches are kept exact: protected dimensions reproduce theta
// bit-for-bit and fully interpolated ones are theta/s with a single division.
fn blend(theta: f64, gamma: f64, scale: f64) -> f64 {
    if scale == 1.0 || gamma == 1.0 {
        theta
    } else if gamma == 0.0 {
        theta / scale
    } else {
        (gamma + (1.0 - gamma) / scale) * theta
    }
}

/// Applies `theta_i_new = [gamma_i + (1 - gamma_i)/s] * theta_i` across the table.
pub fn scaled_frequency_table(
    rotary: RotaryConfig,
    scaling: &ScalingConfig,
) -> Result<FrequencyTable> {
    let base = frequency_table(rotary);
    let s = scale_factor(scaling);
    let train_len = scaling.visual_train_len as f64;
    let mut thetas = Vec::with_capacity(base.thetas().len());
    for (i, &theta) in base.thetas().iter().enumerate() {
        let wavelength = base.wavelength(i)?;
        let gamma = ramp(train_len / wavelength, scaling.alpha, scaling.beta)?;
        thetas.push(blend(theta, gamma, s));
    }
    FrequencyTable::from_thetas(thetas)
}

/// One record per rotary dimension, consistent with [`scaled_frequency_table`].
pub fn dimension_report(
    rotary: RotaryConfig,
    scaling: &ScalingConfig,
) -> Result<Vec<DimensionReport>> {
    let base = frequency_table(rotary);
    let s = scale_factor(scaling);
    let train_len = scaling.visual_train_len as f64;
    let mut out = Vec::with_capacity(base.thetas().len());
    for (i, &theta) in base.thetas().iter().enumerate() {
        let wavelength = base.wavelength(i)?;
        let ratio_r = train_len / wavelength;
        let gamma = ramp(ratio_r, scaling.alpha, scaling.beta)?;
        out.push(DimensionReport {
            dim_index: i,
            theta,
            wavelength,
            ratio_r,
            gamma,
            theta_scaled: blend(theta, gamma, s),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_scaling(scale: u64) -> ScalingConfig {
        ScalingConfig::with_defaults(6272, 6272 * scale).unwrap()
    }

    #[test]
    fn scale_factor_values() {
        assert_eq!(scale_factor(&reference_scaling(1)), 1.0);
        // 32 frames x 196 tokens vs 256 frames x 196 tokens
        assert_eq!(
            scale_factor(&ScalingConfig::with_defaults(6272, 50176).unwrap()),
            8.0
        );
        // 1024-frame target at 196 tokens/frame
        assert_eq!(
            scale_factor(&ScalingConfig::with_defaults(6272, 200704).unwrap()),
            32.0
        );
    }

    #[test]
    fn shrinking_rejected() {
        assert!(ScalingConfig::with_defaults(6272, 6271).is_err());
    }

    #[test]
    fn ramp_branches() {
        assert_eq!(ramp(100.0, 1.0, 32.0).unwrap(), 1.0);
        assert_eq!(ramp(0.5, 1.0, 32.0).unwrap(), 0.0);
        assert_relative_eq!(ramp(16.5, 1.0, 32.0).unwrap(), 0.5);
        assert!(ramp(1.0, 2.0, 2.0).is_err());
        assert!(ramp(1.0, 3.0, 2.0).is_err());
    }

    #[test]
    fn identity_at_unit_scale() {
        for d in [32usize, 64, 128] {
            let rotary = RotaryConfig::with_default_base(d).unwrap();
            let scaled = scaled_frequency_table(rotary, &reference_scaling(1)).unwrap();
            assert_eq!(scaled, frequency_table(rotary));
        }
    }

    #[test]
    fn reference_config_dimension_branches() {
        let rotary = RotaryConfig::with_default_base(128).unwrap();
        let scaling = ScalingConfig::with_defaults(6272, 50176).unwrap();
        let base = frequency_table(rotary);
        let report = dimension_report(rotary, &scaling).unwrap();
        assert_eq!(report.len(), 64);

        // dim 0: lambda = 2*pi, r ~ 998 > beta, frequency untouched
        assert!(report[0].ratio_r > 32.0);
        assert_relative_eq!(report[0].ratio_r, 6272.0 / (2.0 * std::f64::consts::PI));
        assert_eq!(report[0].gamma, 1.0);
        assert_eq!(report[0].theta_scaled, 1.0);

        // dim 63: lambda ~ 54407, r ~ 0.115 < alpha, fully interpolated
        assert!(report[63].ratio_r < 1.0);
        assert_eq!(report[63].gamma, 0.0);
        assert_eq!(report[63].theta_scaled, base.thetas()[63] / 8.0);
    }

    #[test]
    fn gamma_non_increasing_and_sorted() {
        let rotary = RotaryConfig::with_default_base(128).unwrap();
        let scaling = ScalingConfig::with_defaults(6272, 50176).unwrap();
        let report = dimension_report(rotary, &scaling).unwrap();
        for (i, rec) in report.iter().enumerate() {
            assert_eq!(rec.dim_index, i);
        }
        for w in report.windows(2) {
            assert!(w[0].gamma >= w[1].gamma);
        }
    }

    #[test]
    fn scaled_table_bounds_and_monotone() {
        let rotary = RotaryConfig::with_default_base(128).unwrap();
        for scale in [2u64, 8, 32] {
            let scaling = reference_scaling(scale);
            let s = scale_factor(&scaling);
            let base = frequency_table(rotary);
            let scaled = scaled_frequency_table(rotary, &scaling).unwrap();
            for (i, (&orig, &new)) in base.thetas().iter().zip(scaled.thetas()).enumerate() {
                assert!(new <= orig, "dim {i}: {new} > {orig}");
                assert!(new >= orig / s - 1e-18, "dim {i}: {new} < {orig}/{s}");
            }
            for w in scaled.thetas().windows(2) {
                assert!(w[0] > w[1]);
            }
        }
    }

    #[test]
    fn fully_interpolated_dims_match_rescaled_angles() {
        // A fully interpolated dimension at position m under theta_new rotates by
        // the same angle as position m/s under theta.
        let rotary = RotaryConfig::with_default_base(128).unwrap();
        let scaling = ScalingConfig::with_defaults(6272, 50176).unwrap();
        let s = scale_factor(&scaling);
        let base = frequency_table(rotary);
        let scaled = scaled_frequency_table(rotary, &scaling).unwrap();
        let report = dimension_report(rotary, &scaling).unwrap();
        for rec in report.iter().filter(|r| r.gamma == 0.0) {
            for m in [1u64, 100, 6272, 50176] {
                let angle_new = m as f64 * scaled.thetas()[rec.dim_index];
                let angle_ref = m as f64 / s * base.thetas()[rec.dim_index];
                assert!((angle_new - angle_ref).abs() <= 1e-12 * angle_ref.max(1.0));
            }
        }
    }

    #[test]
    fn report_consistent_with_table() {
        let rotary = RotaryConfig::with_default_base(64).unwrap();
        let scaling = ScalingConfig::new(6272, 20000, 1.0, 32.0).unwrap();
        let table = scaled_frequency_table(rotary, &scaling).unwrap();
        let report = dimension_report(rotary, &scaling).unwrap();
        for (rec, &theta) in report.iter().zip(table.thetas()) {
            assert_eq!(rec.theta_scaled, theta);
        }
    }
}
