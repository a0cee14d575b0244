//! Adapter from externally measured instances to the evaluation pipeline.
//!
//! External data arrives in raw units: per-instance feature vectors `f`,
//! mean answers `m`, and answer variances `v`.  The pipeline operates in
//! scaled units set by a single factor `s`:
//!
//! ```text
//! z = f/s      m̃ = m/s      ṽ = (v + ε_v)/s²      λ̃ = λ/s²      δ̃ = δ/s
//! ```
//!
//! With every quantity mapped this way the ridge coefficients are
//! dimensionless, every probability in the failure curve is a function of
//! unit-free ratios, and the whole analysis is invariant under the choice
//! of `s` (up to float rounding).  The variance floor `ε_v` (raw units)
//! keeps zero-variance rows from producing degenerate indicator trials.
//!
//! Label noise and the train/test split are drawn from random streams
//! keyed only by the master seed and the instance index — never by the
//! scale — so two runs that differ only in `s` see the *same* couplings
//! and can be compared number by number.

use crate::error::{Error, Result};
use crate::passk::{failure_curve, InstanceTrial, PassKCurve, ToleranceConfig};
use crate::ridge::{fit_ridge, RidgeConfig};
use crate::rng::{stream_rng, Domain};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Raw external measurements, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalDataset {
    pub ids: Vec<String>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Row-per-instance feature matrix, raw units.
    pub features: DMatrix<f64>,
}

impl ExternalDataset {
    pub fn n(&self) -> usize {
        self.means.len()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.means.len();
        if self.ids.len() != n || self.variances.len() != n || self.features.nrows() != n {
            return Err(Error::Dimension(format!(
                "inconsistent external data: {} ids, {} means, {} variances, {} feature rows",
                self.ids.len(),
                n,
                self.variances.len(),
                self.features.nrows()
            )));
        }
        if n < 2 {
            return Err(Error::Config(format!(
                "external data needs at least 2 instances, got {n}"
            )));
        }
        if self.features.ncols() == 0 {
            return Err(Error::Config("external data has no feature columns".into()));
        }
        if self.means.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("external means must be finite".into()));
        }
        if self.variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("external variances must be finite and nonnegative".into()));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("external features must be finite".into()));
        }
        Ok(())
    }
}

/// Unit mapping from raw measurements into pipeline units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleConfig {
    /// The unit factor `s`.
    pub scale: f64,
    /// Variance floor `ε_v`, raw units, added before scaling.
    pub variance_floor: f64,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            variance_floor: 1e-6,
        }
    }
}

impl RescaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "rescale factor must be positive and finite, got {}",
                self.scale
            )));
        }
        if !(self.variance_floor >= 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::Config(format!(
                "variance floor must be nonnegative, got {}",
                self.variance_floor
            )));
        }
        Ok(())
    }
}

/// External instances mapped into pipeline units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledInstances {
    pub features: DMatrix<f64>,
    pub means: Vec<f64>,
    /// Per-attempt answer spread `√(v + ε_v)/s`.
    pub trial_std: Vec<f64>,
}

/// Map raw measurements into pipeline units.
pub fn rescale(data: &ExternalDataset, cfg: &RescaleConfig) -> Result<ScaledInstances> {
    data.validate()?;
    cfg.validate()?;
    let s = cfg.scale;
    Ok(ScaledInstances {
        features: data.features.map(|v| v / s),
        means: data.means.iter().map(|m| m / s).collect(),
        trial_std: data
            .variances
            .iter()
            .map(|v| (v + cfg.variance_floor).sqrt() / s)
            .collect(),
    })
}

/// End-to-end settings for evaluating an external dataset.  `lambda` and
/// `delta` are stated in raw units and are mapped alongside the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPipelineConfig {
    pub rescale: RescaleConfig,
    pub lambda: f64,
    pub delta: f64,
    pub train_fraction: f64,
    pub k_grid: Vec<u64>,
    pub master_seed: u64,
}

impl ExternalPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.rescale.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "ridge penalty must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.delta
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.k_grid.is_empty() {
            return Err(Error::Config("external pipeline needs a k grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPipelineResult {
    pub curve: PassKCurve,
    pub n_train: usize,
    pub n_test: usize,
    /// Ridge coefficients in pipeline (dimensionless) units.
    pub theta_hat: DVector<f64>,
    /// Mean squared prediction bias on held-out instances, pipeline
    /// units; multiply by `s²` for raw units.
    pub gen_loss_scaled: f64,
}

/// Train on a split of the instances and measure the failure curve on the
/// rest.  `delta_eff` is the acceptance half-width in pipeline units.
fn pipeline_with_tolerance(
    data: &ExternalDataset,
    cfg: &ExternalPipelineConfig,
    delta_eff: f64,
) -> Result<ExternalPipelineResult> {
    cfg.validate()?;
    let scaled = rescale(data, &cfg.rescale)?;
    let n = data.n();
    let s = cfg.rescale.scale;

    // Couplings drawn per instance index, independent of the scale.
    let mut label_rng = stream_rng(cfg.master_seed, Domain::ExternalLabels, 0, 0);
    let labels: Vec<f64> = (0..n)
        .map(|i| {
            let xi: f64 = label_rng.sample(StandardNormal);
            scaled.means[i] + scaled.trial_std[i] * xi
        })
        .collect();

    let mut split_rng = stream_rng(cfg.master_seed, Domain::ExternalSplit, 0, 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut split_rng);
    let n_train = ((cfg.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let d = data.d();
    let mut x_train = DMatrix::zeros(n_train, d);
    let mut y_train = Vec::with_capacity(n_train);
    for (row, &i) in train_idx.iter().enumerate() {
        x_train.row_mut(row).copy_from(&scaled.features.row(i));
        y_train.push(labels[i]);
    }
    let fit = fit_ridge(
        &x_train,
        &y_train,
        &RidgeConfig {
            lambda: cfg.lambda / (s * s),
            overparam_scaling: false,
        },
    )?;

    let predictions = &scaled.features * &fit.theta_hat;
    let trials: Vec<InstanceTrial> = test_idx
        .iter()
        .map(|&i| InstanceTrial {
            bias: predictions[i] - scaled.means[i],
            trial_std: scaled.trial_std[i],
        })
        .collect();
    let gen_loss_scaled =
        trials.iter().map(|t| t.bias * t.bias).sum::<f64>() / trials.len() as f64;

    let tol = ToleranceConfig::new(delta_eff)?;
    let curve = failure_curve(&trials, None, &tol, &cfg.k_grid, n_train)?;
    Ok(ExternalPipelineResult {
        curve,
        n_train,
        n_test: test_idx.len(),
        theta_hat: fit.theta_hat,
        gen_loss_scaled,
    })
}

/// Run the external evaluation with every raw-unit quantity mapped
/// consistently into pipeline units.
pub fn run_external_pipeline(
    data: &ExternalDataset,
    cfg: &ExternalPipelineConfig,
) -> Result<ExternalPipelineResult> {
    pipeline_with_tolerance(data, cfg, cfg.delta / cfg.rescale.scale)
}

/// Discrepancies between pipeline runs that differ only in the unit
/// factor; all must vanish to rounding for a correct unit mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceReport {
    /// Max absolute difference between failure curves.
    pub max_curve_diff: f64,
    /// Max relative difference between raw-unit generalisation losses
    /// (`s²` × the scaled loss).
    pub max_loss_rel_diff: f64,
}

/// Run the pipeline at several unit factors on the same raw data and
/// report the worst disagreement.
pub fn rescale_invariance_check(
    data: &ExternalDataset,
    cfg: &ExternalPipelineConfig,
    scales: &[f64],
) -> Result<InvarianceReport> {
    if scales.len() < 2 {
        return Err(Error::Config("invariance check needs at least two scales".into()));
    }
    let mut curves = Vec::new();
    let mut raw_losses = Vec::new();
    for &s in scales {
        let mut c = cfg.clone();
        c.rescale.scale = s;
        let r = run_external_pipeline(data, &c)?;
        curves.push(r.curve.failure);
        raw_losses.push(r.gen_loss_scaled * s * s);
    }
    let mut max_curve_diff = 0.0f64;
    let mut max_loss_rel_diff = 0.0f64;
    for i in 1..curves.len() {
        for (a, b) in curves[0].iter().zip(&curves[i]) {
            max_curve_diff = max_curve_diff.max((a - b).abs());
        }
        let denom = raw_losses[0].abs().max(f64::MIN_POSITIVE);
        max_loss_rel_diff = max_loss_rel_diff.max((raw_losses[i] - raw_losses[0]).abs() / denom);
    }
    Ok(InvarianceReport {
        max_curve_diff,
        max_loss_rel_diff,
    })
}

/// Synthesise raw-unit external measurements from the generative model:
/// features `s·x`, means `s·(x·θ*)`, variances `s²·σ_η²/τ`.  Used to
/// check the adapter against the native pipeline on data whose truth is
/// known.
pub fn synthesize_raw_dataset(
    spectrum: &crate::datagen::SpectrumConfig,
    difficulty: &crate::datagen::DifficultyConfig,
    teacher: &crate::datagen::Teacher,
    n: usize,
    scale: f64,
    master_seed: u64,
) -> Result<ExternalDataset> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 instances, got {n}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    if teacher.theta.len() != spectrum.d {
        return Err(Error::Dimension(format!(
            "teacher has {} coordinates for {} features",
            teacher.theta.len(),
            spectrum.d
        )));
    }
    let mut rng = stream_rng(master_seed, Domain::TestInstances, 0, 0);
    let x = crate::datagen::sample_features(spectrum, n, &mut rng);
    let taus = crate::datagen::sample_precisions(difficulty, n, &mut rng);
    let means = &x * &teacher.theta;
    let sig2 = difficulty.sigma_eta * difficulty.sigma_eta;
    Ok(ExternalDataset {
        ids: (0..n).map(|i| format!("inst{i}")).collect(),
        means: means.iter().map(|m| m * scale).collect(),
        variances: taus.iter().map(|t| scale * scale * sig2 / t).collect(),
        features: x.map(|v| v * scale),
    })
}
