//! One TOML document that describes every stage of an experiment.
//!
//! The canonical serialization of a config is hashed (SHA-256) and the
//! hash prefixes the run directory, so results are traceable to the exact
//! parameters that produced them.  Thread count deliberately lives outside
//! the config: runs are bit-reproducible across thread counts, so it must
//! not influence the hash.

use crate::datagen::{DifficultyConfig, SpectrumConfig};
use crate::error::{Error, Result};
use crate::expfit::{SlopeMethod, SlopeWindow};
use crate::passk::{self, ToleranceConfig};
use crate::ridge::RidgeConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// 40 log-spaced attempt budgets on [1, 10⁴], deduplicated after rounding
/// to integers (the low end collapses a few neighbours).
pub fn default_k_grid() -> Vec<u64> {
    let mut ks: Vec<u64> = (0..40)
        .map(|i| 10f64.powf(4.0 * i as f64 / 39.0).round() as u64)
        .collect();
    ks.dedup();
    ks
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

fn check_increasing_usize(grid: &[usize], what: &str) -> Result<()> {
    require(!grid.is_empty(), format!("{what} must not be empty"))?;
    require(grid[0] >= 1, format!("{what} entries must be >= 1"))?;
    require(
        grid.windows(2).all(|w| w[0] < w[1]),
        format!("{what} must be strictly increasing"),
    )
}

fn check_k_grid(grid: &[u64], what: &str) -> Result<()> {
    require(!grid.is_empty(), format!("{what} must not be empty"))?;
    require(grid[0] >= 1, format!("{what} entries must be >= 1"))?;
    require(
        grid.windows(2).all(|w| w[0] < w[1]),
        format!("{what} must be strictly increasing"),
    )
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    require(x > 0.0 && x.is_finite(), format!("{what} must be positive and finite, got {x}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub teacher_norm: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            // Log-spaced across the classical regime 2d..32d for d = 64.
            n_grid: vec![128, 181, 256, 362, 512, 724, 1024, 1448, 2048],
            replicates: 50,
            teacher_norm: 1.0,
        }
    }
}

impl TrainingSection {
    pub fn validate(&self) -> Result<()> {
        check_increasing_usize(&self.n_grid, "training.n_grid")?;
        require(self.replicates >= 1, "training.replicates must be >= 1")?;
        check_positive(self.teacher_norm, "training.teacher_norm")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub n_grid: Vec<usize>,
    /// Independent (teacher, dataset, fit) draws pooled per grid point.
    pub replicates: usize,
    /// Held-out instances per replicate.
    pub n_test: usize,
    pub teacher_norm: f64,
    pub k_grid: Vec<u64>,
    /// Sample test difficulties from the heavy-tail proposal with
    /// correction weights instead of from the bare difficulty prior.
    pub importance_sampling: bool,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self {
            n_grid: vec![4, 8, 16, 32, 64, 128, 256, 512],
            replicates: 8,
            n_test: 20_000,
            teacher_norm: 1.0,
            k_grid: default_k_grid(),
            importance_sampling: true,
            tau_min: passk::DEFAULT_TAU_MIN,
            tau_max: passk::DEFAULT_TAU_MAX,
        }
    }
}

impl InferenceSection {
    pub fn validate(&self) -> Result<()> {
        check_increasing_usize(&self.n_grid, "inference.n_grid")?;
        require(self.replicates >= 1, "inference.replicates must be >= 1")?;
        require(self.n_test >= 2, "inference.n_test must be >= 2")?;
        check_positive(self.teacher_norm, "inference.teacher_norm")?;
        check_k_grid(&self.k_grid, "inference.k_grid")?;
        check_positive(self.tau_min, "inference.tau_min")?;
        check_positive(self.tau_max, "inference.tau_max")?;
        require(self.tau_min < self.tau_max, "inference.tau_min must be below tau_max")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentSection {
    pub resamples: usize,
    pub method: SlopeMethod,
    /// Slope window bounds in k; both zero selects the middle log-third
    /// of the k grid automatically.
    pub window_lo: f64,
    pub window_hi: f64,
    pub fit_saturation: bool,
    /// Pin the saturation ceiling to `difficulty.beta` instead of
    /// fitting it.
    pub fix_beta: bool,
}

impl Default for ExponentSection {
    fn default() -> Self {
        Self {
            resamples: 200,
            method: SlopeMethod::LeastSquares,
            window_lo: 0.0,
            window_hi: 0.0,
            fit_saturation: true,
            fix_beta: false,
        }
    }
}

impl ExponentSection {
    pub fn validate(&self) -> Result<()> {
        require(self.resamples >= 2, "exponent.resamples must be >= 2")?;
        if self.window_lo == 0.0 && self.window_hi == 0.0 {
            return Ok(());
        }
        SlopeWindow::new(self.window_lo, self.window_hi).map(|_| ())
    }

    /// Explicit window, or the middle log-third of `k_grid` when unset.
    pub fn window(&self, k_grid: &[u64]) -> Result<SlopeWindow> {
        if self.window_lo == 0.0 && self.window_hi == 0.0 {
            SlopeWindow::middle_log_third(k_grid)
        } else {
            SlopeWindow::new(self.window_lo, self.window_hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocationSection {
    pub budgets: Vec<f64>,
    pub train_weights: Vec<f64>,
    pub grid_points: usize,
    pub cost_train: f64,
    pub cost_attempt: f64,
    pub train_prefactor: f64,
    pub train_exponent: f64,
    pub infer_prefactor: f64,
    /// Ceiling exponent of the inference tail.
    pub beta: f64,
    /// Saturation depth Δ; zero freezes the exponent at `beta`.
    pub saturation_delta: f64,
    pub saturation_c: f64,
    pub saturation_nu: f64,
}

impl Default for AllocationSection {
    fn default() -> Self {
        Self {
            budgets: vec![1e5, 1e6, 1e7],
            train_weights: vec![0.1, 1.0, 10.0],
            grid_points: 48,
            cost_train: 1.0,
            cost_attempt: 0.5,
            train_prefactor: 6e-3,
            train_exponent: 2.0,
            infer_prefactor: 7e4,
            beta: 3.0,
            saturation_delta: 2.0,
            saturation_c: 2e-3,
            saturation_nu: 1.0,
        }
    }
}

impl AllocationSection {
    pub fn validate(&self) -> Result<()> {
        require(!self.budgets.is_empty(), "allocation.budgets must not be empty")?;
        for &c in &self.budgets {
            check_positive(c, "allocation.budgets entry")?;
        }
        require(
            !self.train_weights.is_empty(),
            "allocation.train_weights must not be empty",
        )?;
        for &r in &self.train_weights {
            check_positive(r, "allocation.train_weights entry")?;
        }
        require(self.grid_points >= 16, "allocation.grid_points must be >= 16")?;
        check_positive(self.cost_train, "allocation.cost_train")?;
        check_positive(self.cost_attempt, "allocation.cost_attempt")?;
        check_positive(self.train_prefactor, "allocation.train_prefactor")?;
        check_positive(self.train_exponent, "allocation.train_exponent")?;
        check_positive(self.infer_prefactor, "allocation.infer_prefactor")?;
        check_positive(self.beta, "allocation.beta")?;
        require(
            self.saturation_delta >= 0.0 && self.saturation_delta.is_finite(),
            "allocation.saturation_delta must be nonnegative",
        )?;
        if self.saturation_delta > 0.0 {
            require(
                self.saturation_delta < self.beta,
                "allocation.saturation_delta must stay below beta",
            )?;
            check_positive(self.saturation_c, "allocation.saturation_c")?;
            check_positive(self.saturation_nu, "allocation.saturation_nu")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExternalSection {
    /// Unit factor `s` of the raw data.
    pub scale: f64,
    /// Variance floor in raw units.
    pub variance_floor: f64,
    /// Ridge penalty in raw units.
    pub lambda: f64,
    /// Acceptance half-width in raw units.
    pub delta: f64,
    pub train_fraction: f64,
    pub k_grid: Vec<u64>,
    /// With no input file: generate this many instances from the
    /// synthetic sections at `scale`.  Zero demands an input file.
    pub synthesize_n: usize,
    /// Unit factors compared by the invariance check.
    pub check_scales: Vec<f64>,
}

impl Default for ExternalSection {
    fn default() -> Self {
        // Raw units carry s = 32; delta and lambda are the raw images of
        // 0.05 and 1e-7.
        Self {
            scale: 32.0,
            variance_floor: 0.0,
            lambda: 1.024e-4,
            delta: 1.6,
            train_fraction: 0.5,
            k_grid: vec![1, 3, 10, 30, 100, 300, 1000],
            synthesize_n: 20_000,
            check_scales: vec![1.0, 8.0, 32.0],
        }
    }
}

impl ExternalSection {
    pub fn validate(&self) -> Result<()> {
        check_positive(self.scale, "external.scale")?;
        require(
            self.variance_floor >= 0.0 && self.variance_floor.is_finite(),
            "external.variance_floor must be nonnegative",
        )?;
        require(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            "external.lambda must be nonnegative",
        )?;
        check_positive(self.delta, "external.delta")?;
        require(
            self.train_fraction > 0.0 && self.train_fraction < 1.0,
            "external.train_fraction must lie strictly between 0 and 1",
        )?;
        check_k_grid(&self.k_grid, "external.k_grid")?;
        require(
            self.synthesize_n == 0 || self.synthesize_n >= 2,
            "external.synthesize_n must be 0 (input file required) or >= 2",
        )?;
        require(
            self.check_scales.len() >= 2,
            "external.check_scales needs at least two factors",
        )?;
        for &s in &self.check_scales {
            check_positive(s, "external.check_scales entry")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub spectrum: SpectrumConfig,
    pub difficulty: DifficultyConfig,
    pub ridge: RidgeConfig,
    pub tolerance: ToleranceConfig,
    pub training: TrainingSection,
    pub inference: InferenceSection,
    pub exponent: ExponentSection,
    pub allocation: AllocationSection,
    pub external: ExternalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 271_828,
            spectrum: SpectrumConfig { d: 64, alpha: 1.0 },
            difficulty: DifficultyConfig { beta: 4.0, sigma_eta: 1e-3 },
            ridge: RidgeConfig { lambda: 1e-9, overparam_scaling: true },
            tolerance: ToleranceConfig { delta: 0.05 },
            training: TrainingSection::default(),
            inference: InferenceSection::default(),
            exponent: ExponentSection::default(),
            allocation: AllocationSection::default(),
            external: ExternalSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.spectrum.validate()?;
        self.difficulty.validate()?;
        self.ridge.validate()?;
        ToleranceConfig::new(self.tolerance.delta)?;
        self.training.validate()?;
        self.inference.validate()?;
        self.exponent.validate()?;
        self.allocation.validate()?;
        self.external.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialization: struct field order, stable across runs.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical serialization, hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 12 hex characters of [`hash`](Self::hash); prefixes run
    /// directory names.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }

    /// Named baseline configurations.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        match name {
            // Training-size sweep spanning both sides of the interpolation
            // point N = d = 64.
            "train-default" => {
                cfg.training.n_grid = vec![16, 32, 48, 64, 96, 128, 256, 512, 1024, 2048];
            }
            // Deeply overparameterized sweep; the loss should fall as
            // N^(-alpha).
            "train-overparam" => {
                cfg.spectrum = SpectrumConfig { d: 256, alpha: 1.0 };
                cfg.training = TrainingSection {
                    n_grid: vec![8, 16, 32, 64, 128],
                    replicates: 100,
                    teacher_norm: 1.0,
                };
            }
            // Failure-curve sweep; c_delta ≈ 0.499 puts the asymptotic
            // power law well inside the default k grid, and the fixed
            // moderate penalty keeps the loss monotone in N.
            "inference-default" => {
                cfg.difficulty = DifficultyConfig { beta: 3.0, sigma_eta: 0.4 };
                cfg.ridge = RidgeConfig { lambda: 1e-2, overparam_scaling: false };
                cfg.tolerance = ToleranceConfig { delta: 0.25 };
            }
            // Same sweep at beta = 4 over N in [d/4, 64d].
            "inference-beta4" => {
                cfg.difficulty = DifficultyConfig { beta: 4.0, sigma_eta: 0.4 };
                cfg.ridge = RidgeConfig { lambda: 1e-2, overparam_scaling: false };
                cfg.tolerance = ToleranceConfig { delta: 0.25 };
                cfg.inference.n_grid = vec![16, 40, 101, 256, 645, 1625, 4096];
            }
            "allocate-default" => {}
            // Raw-unit pipeline on synthesized data (s = 32, scaled
            // tolerance 0.05), on a small well-conditioned geometry.
            "external-reference" => {
                cfg.spectrum = SpectrumConfig { d: 8, alpha: 1.0 };
                cfg.difficulty = DifficultyConfig { beta: 4.0, sigma_eta: 0.5 };
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; available: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "train-default",
    "train-overparam",
    "inference-default",
    "inference-beta4",
    "allocate-default",
    "external-reference",
];
