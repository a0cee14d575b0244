//! Synthetic data for the latent-difficulty model.
//!
//! An instance is a feature vector `x ~ N(0, Σ)` with power-law diagonal
//! spectrum `σ_j² = j^{-(1+α)}`, plus an independent latent precision
//! `τ ~ Gamma(β/2, rate 1)` controlling how noisy its label is: the target
//! mean is `m = x·θ*` and the observed label `y ~ N(m, σ_η²/τ)`. Small τ
//! (heavy lower Gamma tail, mass `Pr(τ ≤ t) ≈ t^{β/2}/Γ(β/2+1)`) produces
//! the hard instances that dominate pass@k failure at large k.
//!
//! All sampling is deterministic given an RNG stream; draw order within a
//! dataset is fixed (feature rows, then precisions, then label noise), so
//! adding consumers downstream never shifts earlier draws.

use crate::error::{Error, Result};
use crate::special::ln_gamma;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

/// Precisions below this are resampled; they would put single-instance
/// failure probabilities outside f64 range without changing any statistic
/// at observable accuracy.
pub const MIN_PRECISION: f64 = 1e-300;

/// Power-law feature spectrum: `d` dimensions with eigenvalue `j^{-(1+alpha)}`
/// for j = 1..d (unit leading eigenvalue).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub d: usize,
    pub alpha: f64,
}

impl SpectrumConfig {
    pub fn new(d: usize, alpha: f64) -> Result<Self> {
        let cfg = Self { d, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("spectrum: d must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "spectrum: alpha must be a positive real, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Eigenvalues `σ_j² = j^{-(1+alpha)}`, j = 1..d.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.d)
            .map(|j| (j as f64).powf(-(1.0 + self.alpha)))
            .collect()
    }
}

/// Latent difficulty: `τ ~ Gamma(beta/2, rate 1)`, label noise `N(0, σ_η²/τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyConfig {
    pub beta: f64,
    pub sigma_eta: f64,
}

impl DifficultyConfig {
    pub fn new(beta: f64, sigma_eta: f64) -> Result<Self> {
        let cfg = Self { beta, sigma_eta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "difficulty: beta must be a positive real, got {}",
                self.beta
            )));
        }
        if !(self.sigma_eta > 0.0) || !self.sigma_eta.is_finite() {
            return Err(Error::Config(format!(
                "difficulty: sigma_eta must be a positive real, got {}",
                self.sigma_eta
            )));
        }
        Ok(())
    }

    /// `E[1/τ] = Γ(β/2−1)/Γ(β/2) = 2/(β−2)`; finite only for β > 2.
    pub fn mean_inverse_precision(&self) -> Result<f64> {
        if self.beta <= 2.0 {
            return Err(Error::Domain(format!(
                "E[1/tau] diverges for beta <= 2 (beta = {})",
                self.beta
            )));
        }
        Ok((ln_gamma(self.beta / 2.0 - 1.0) - ln_gamma(self.beta / 2.0)).exp())
    }

    /// Average label-noise variance `σ_noise² = σ_η² · 2/(β−2)` (β > 2).
    pub fn sigma_noise_sq(&self) -> Result<f64> {
        Ok(self.sigma_eta * self.sigma_eta * self.mean_inverse_precision()?)
    }
}

/// Ground-truth regressor θ*.
#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    pub theta: DVector<f64>,
}

/// A sampled training set: rows of `features` are instances, `means[i] =
/// x_i·θ*`, `labels[i] ~ N(means[i], σ_η²/precisions[i])`.
#[derive(Debug, Clone)]
pub struct LidDataset {
    pub features: DMatrix<f64>,
    pub precisions: Vec<f64>,
    pub means: Vec<f64>,
    pub labels: Vec<f64>,
}

impl LidDataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }
}

/// Isotropic Gaussian direction scaled to `norm` (teacher difficulty is
/// controlled solely by its norm, not its orientation).
pub fn sample_teacher<R: Rng>(d: usize, norm: f64, rng: &mut R) -> Result<Teacher> {
    if d == 0 {
        return Err(Error::Config("teacher: d must be at least 1".into()));
    }
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Config(format!(
            "teacher: norm must be a positive real, got {norm}"
        )));
    }
    loop {
        let raw = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let len = raw.norm();
        if len > 0.0 {
            return Ok(Teacher {
                theta: raw * (norm / len),
            });
        }
    }
}

/// `n` feature rows with independent `N(0, σ_j²)` coordinates, drawn row by
/// row (row-major order is part of the determinism contract).
pub fn sample_features<R: Rng>(spectrum: &SpectrumConfig, n: usize, rng: &mut R) -> DMatrix<f64> {
    let scales: Vec<f64> = spectrum.eigenvalues().iter().map(|v| v.sqrt()).collect();
    let mut buf = Vec::with_capacity(n * spectrum.d);
    for _ in 0..n {
        for scale in &scales {
            let z: f64 = rng.sample(StandardNormal);
            buf.push(scale * z);
        }
    }
    DMatrix::from_row_slice(n, spectrum.d, &buf)
}

/// `n` precision draws from `Gamma(β/2, rate 1)`, resampling anything below
/// [`MIN_PRECISION`].
pub fn sample_precisions<R: Rng>(
    difficulty: &DifficultyConfig,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    // rand_distr's Gamma is the Marsaglia-Tsang squeeze (with the u^(1/shape)
    // boost below shape 1), valid for every positive shape.
    let gamma = Gamma::new(difficulty.beta / 2.0, 1.0).expect("validated shape");
    (0..n)
        .map(|_| loop {
            let tau = gamma.sample(rng);
            if tau >= MIN_PRECISION {
                break tau;
            }
        })
        .collect()
}

/// Labels `y_i = means[i] + (σ_η/√τ_i)·z_i`.
pub fn draw_labels<R: Rng>(
    means: &[f64],
    precisions: &[f64],
    sigma_eta: f64,
    rng: &mut R,
) -> Vec<f64> {
    means
        .iter()
        .zip(precisions)
        .map(|(&m, &tau)| {
            let z: f64 = rng.sample(StandardNormal);
            m + sigma_eta / tau.sqrt() * z
        })
        .collect()
}

/// Draws a complete training set of size `n`: features, then precisions,
/// then label noise, all from the one stream.
pub fn sample_dataset<R: Rng>(
    spectrum: &SpectrumConfig,
    difficulty: &DifficultyConfig,
    teacher: &Teacher,
    n: usize,
    rng: &mut R,
) -> Result<LidDataset> {
    if teacher.theta.len() != spectrum.d {
        return Err(Error::Dimension(format!(
            "teacher has {} coordinates but spectrum d = {}",
            teacher.theta.len(),
            spectrum.d
        )));
    }
    if n == 0 {
        return Err(Error::Config("dataset: n must be at least 1".into()));
    }
    let features = sample_features(spectrum, n, rng);
    let precisions = sample_precisions(difficulty, n, rng);
    let means: Vec<f64> = (&features * &teacher.theta).iter().copied().collect();
    let labels = draw_labels(&means, &precisions, difficulty.sigma_eta, rng);
    Ok(LidDataset {
        features,
        precisions,
        means,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Domain};

    #[test]
    fn spectrum_closed_form_small_cases() {
        let s = SpectrumConfig::new(3, 1.0).unwrap();
        let ev = s.eigenvalues();
        assert_eq!(ev.len(), 3);
        assert!((ev[0] - 1.0).abs() < 1e-15);
        assert!((ev[1] - 0.25).abs() < 1e-15);
        assert!((ev[2] - 1.0 / 9.0).abs() < 1e-15);

        let s = SpectrumConfig::new(1, 2.0).unwrap();
        assert_eq!(s.eigenvalues(), vec![1.0]);
    }

    #[test]
    fn spectrum_matches_direct_loop() {
        let s = SpectrumConfig::new(5, 0.5).unwrap();
        for (idx, v) in s.eigenvalues().iter().enumerate() {
            let j = (idx + 1) as f64;
            let direct = (1.0 / j).powf(1.5);
            assert!((v - direct).abs() <= 1e-15 * direct.abs());
        }
    }

    #[test]
    fn spectrum_rejects_bad_config() {
        assert!(SpectrumConfig::new(0, 1.0).is_err());
        assert!(SpectrumConfig::new(4, 0.0).is_err());
        assert!(SpectrumConfig::new(4, f64::NAN).is_err());
    }

    #[test]
    fn teacher_norm_and_one_dimensional_case() {
        let mut rng = stream_rng(7, Domain::Teacher, 0, 0);
        let t = sample_teacher(16, 2.5, &mut rng).unwrap();
        assert!((t.theta.norm() - 2.5).abs() < 1e-12);

        let t1 = sample_teacher(1, 1.0, &mut rng).unwrap();
        assert!((t1.theta[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let spectrum = SpectrumConfig::new(8, 1.0).unwrap();
        let difficulty = DifficultyConfig::new(4.0, 0.1).unwrap();
        let mut rng_t = stream_rng(11, Domain::Teacher, 0, 0);
        let teacher = sample_teacher(8, 1.0, &mut rng_t).unwrap();

        let mut a = stream_rng(11, Domain::Dataset, 2, 5);
        let mut b = stream_rng(11, Domain::Dataset, 2, 5);
        let da = sample_dataset(&spectrum, &difficulty, &teacher, 50, &mut a).unwrap();
        let db = sample_dataset(&spectrum, &difficulty, &teacher, 50, &mut b).unwrap();
        assert_eq!(da.features, db.features);
        assert_eq!(da.precisions, db.precisions);
        assert_eq!(da.labels, db.labels);

        let mut c = stream_rng(11, Domain::Dataset, 2, 6);
        let dc = sample_dataset(&spectrum, &difficulty, &teacher, 50, &mut c).unwrap();
        assert_ne!(da.labels, dc.labels);
    }

    #[test]
    fn mean_inverse_precision_closed_form_and_gamma_ratio_agree() {
        let d6 = DifficultyConfig::new(6.0, 1.0).unwrap();
        let via_gamma = d6.mean_inverse_precision().unwrap();
        assert!((via_gamma - 0.5).abs() < 1e-12);
        for beta in [2.5, 3.0, 4.0, 9.0] {
            let cfg = DifficultyConfig::new(beta, 1.0).unwrap();
            let closed = 2.0 / (beta - 2.0);
            let ratio = cfg.mean_inverse_precision().unwrap();
            assert!(
                (ratio - closed).abs() <= 1e-12 * closed,
                "beta={beta}: {ratio} vs {closed}"
            );
        }
        assert!(DifficultyConfig::new(2.0, 1.0)
            .unwrap()
            .mean_inverse_precision()
            .is_err());
    }

    #[test]
    fn empirical_mean_inverse_precision() {
        let difficulty = DifficultyConfig::new(6.0, 1.0).unwrap();
        let mut rng = stream_rng(3, Domain::Dataset, 0, 0);
        let n = 1_000_000;
        let taus = sample_precisions(&difficulty, n, &mut rng);
        let mean_inv: f64 = taus.iter().map(|t| 1.0 / t).sum::<f64>() / n as f64;
        // Var(1/tau) = 1/4 at beta=6, so 3 s.e. ~ 0.0015.
        assert!(
            (mean_inv - 0.5).abs() < 2e-3,
            "E[1/tau] = {mean_inv}, want 0.5"
        );
    }

    #[test]
    fn huge_precision_pins_labels_to_means() {
        let means: Vec<f64> = (0..10_000).map(|i| (i as f64) * 0.01).collect();
        let precisions = vec![1e12; means.len()];
        let mut rng = stream_rng(5, Domain::Dataset, 0, 1);
        let labels = draw_labels(&means, &precisions, 1e-3, &mut rng);
        let worst = labels
            .iter()
            .zip(&means)
            .map(|(y, m)| (y - m).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-4, "max |label - mean| = {worst:e}");
    }

    #[test]
    fn sample_covariance_matches_spectrum() {
        let spectrum = SpectrumConfig::new(4, 1.0).unwrap();
        let n = 100_000;
        let mut rng = stream_rng(17, Domain::Dataset, 0, 2);
        let x = sample_features(&spectrum, n, &mut rng);
        let ev = spectrum.eigenvalues();
        let nf = n as f64;
        for j in 0..4 {
            for l in j..4 {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += x[(i, j)] * x[(i, l)];
                }
                acc /= nf;
                if j == l {
                    let se = ev[j] * (2.0 / nf).sqrt();
                    assert!(
                        (acc - ev[j]).abs() < 4.0 * se,
                        "var[{j}] = {acc}, want {}",
                        ev[j]
                    );
                } else {
                    let se = (ev[j] * ev[l]).sqrt() / nf.sqrt();
                    assert!((acc).abs() < 4.0 * se, "cov[{j},{l}] = {acc}");
                }
            }
        }
    }

    #[test]
    fn precision_independent_of_feature_norm() {
        let spectrum = SpectrumConfig::new(6, 1.0).unwrap();
        let difficulty = DifficultyConfig::new(4.0, 1.0).unwrap();
        let mut rng_t = stream_rng(23, Domain::Teacher, 0, 0);
        let teacher = sample_teacher(6, 1.0, &mut rng_t).unwrap();
        let n = 100_000;
        let mut rng = stream_rng(23, Domain::Dataset, 0, 3);
        let ds = sample_dataset(&spectrum, &difficulty, &teacher, n, &mut rng).unwrap();

        let norms: Vec<f64> = (0..n).map(|i| ds.features.row(i).norm_squared()).collect();
        let mn = norms.iter().sum::<f64>() / n as f64;
        let mt = ds.precisions.iter().sum::<f64>() / n as f64;
        let mut c = 0.0;
        let mut vn = 0.0;
        let mut vt = 0.0;
        for i in 0..n {
            let a = norms[i] - mn;
            let b = ds.precisions[i] - mt;
            c += a * b;
            vn += a * a;
            vt += b * b;
        }
        let corr = c / (vn.sqrt() * vt.sqrt());
        assert!(
            corr.abs() < 3.0 / (n as f64).sqrt() + 1e-3,
            "corr(tau, |x|^2) = {corr}"
        );
    }

    /// Lower Gamma tail: Pr(τ ≤ t) ≈ t^{β/2}/Γ(β/2+1) as t → 0, which is the
    /// source of the k^{-β} inference tail downstream.
    #[test]
    fn small_t_gamma_tail_mass() {
        let n = 8_000_000;
        for (beta, ts) in [(3.0, [1e-2, 1e-3]), (4.0, [5e-2, 1e-2])] {
            let difficulty = DifficultyConfig::new(beta, 1.0).unwrap();
            let mut rng = stream_rng(29, Domain::Dataset, beta as u64, 0);
            let taus = sample_precisions(&difficulty, n, &mut rng);
            for t in ts {
                let count = taus.iter().filter(|&&tau| tau <= t).count() as f64;
                let expected = n as f64 * t.powf(beta / 2.0)
                    / (ln_gamma(beta / 2.0 + 1.0)).exp();
                // Poisson 3 sigma plus the O(t) truncation of the series.
                let slack = 3.0 * expected.sqrt() + 2.0 + expected * t;
                assert!(
                    (count - expected).abs() < slack,
                    "beta={beta}, t={t}: count {count}, expected {expected}"
                );
            }
        }
    }

    /// (y - m)·√τ/σ_η must be standard normal regardless of the τ mixture.
    #[test]
    fn studentized_residuals_are_standard_normal() {
        let difficulty = DifficultyConfig::new(3.0, 0.05).unwrap();
        let n = 200_000;
        let mut rng = stream_rng(31, Domain::Dataset, 0, 4);
        let means = vec![0.7; n];
        let precisions = sample_precisions(&difficulty, n, &mut rng);
        let labels = draw_labels(&means, &precisions, difficulty.sigma_eta, &mut rng);
        let z: Vec<f64> = labels
            .iter()
            .zip(&precisions)
            .map(|(y, tau)| (y - 0.7) * tau.sqrt() / difficulty.sigma_eta)
            .collect();
        let nf = n as f64;
        let mean = z.iter().sum::<f64>() / nf;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let central = z.iter().filter(|v| v.abs() <= 1.96).count() as f64 / nf;
        assert!(mean.abs() < 3.5 / nf.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 3.5 * (2.0 / nf).sqrt(), "var {var}");
        assert!((central - 0.95).abs() < 3.5 * (0.95f64 * 0.05 / nf).sqrt() + 1e-3);
    }
}
