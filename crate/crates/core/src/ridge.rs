//! Closed-form ridge regression and generalization loss.
//!
//! The student is `θ̂_λ = (Σ̂ + λI)^{-1} X᷆ᵀy/N` with `Σ̂ = XᵀX/N`. In the
//! overparameterized regime (N < d) the penalty can be scaled as `λ/N` so
//! that λ → 0 approaches the minimum-norm interpolator; there the solve goes
//! through the N×N kernel system `Xᵀ(XXᵀ/N + λI)^{-1}y/N`, which is the same
//! estimator by the push-through identity but better conditioned and cheaper.
//!
//! Generalization loss is `L = Δθᵀ Σ Δθ` with `Δθ = θ̂ - θ*`. Three routes:
//! an exact quadratic form (Σ is known and diagonal), a fresh-sample Monte
//! Carlo estimate, and the design-conditional expectation over label noise
//!     L(X) = λ² θ*ᵀ(Σ̂+λI)^{-1} Σ (Σ̂+λI)^{-1}θ*
//!            + (σ_noise²/N) · Tr(Σ (Σ̂+λI)^{-1} Σ̂ (Σ̂+λI)^{-1}),
//! where `σ_noise² = σ_η²·2/(β−2)` is the average label-noise variance.
//! Averaged over Gaussian designs at λ → 0 (N > d+1) the variance term is
//! exactly `σ_noise²·d/(N−d−1)` — the inverse-Wishart mean trace — which is
//! the classical-regime scaling law the tests pin.

use crate::datagen::{self, DifficultyConfig, LidDataset, SpectrumConfig, Teacher};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::{stream_rng, Domain};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeConfig {
    pub lambda: f64,
    /// Divide `lambda` by N when N < d, so λ → 0 recovers the minimum-norm
    /// interpolator with an N-independent base penalty.
    pub overparam_scaling: bool,
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "ridge: lambda must be a finite non-negative real, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn effective_lambda(&self, n: usize, d: usize) -> f64 {
        if self.overparam_scaling && n < d {
            self.lambda / n as f64
        } else {
            self.lambda
        }
    }
}

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub theta_hat: DVector<f64>,
    /// The penalty actually used in the solve (after overparameterized
    /// rescaling and any jitter retry).
    pub effective_lambda: f64,
    pub n_train: usize,
    /// Set when the unpenalized system was singular and a trace-scaled
    /// jitter had to be added.
    pub jittered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMethod {
    McFresh,
    TraceFormula,
}

#[derive(Debug, Clone, Copy)]
pub struct GenLossEstimate {
    pub value: f64,
    pub std_err: f64,
    pub method: LossMethod,
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    Cholesky::new(m.clone()).map(|ch| ch.solve(rhs))
}

/// Fits ridge coefficients on `(x, y)`. Errors if the system is singular
/// beyond a one-shot jitter retry (only possible at `lambda = 0`).
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], config: &RidgeConfig) -> Result<RidgeFit> {
    config.validate()?;
    let n = x.nrows();
    let d = x.ncols();
    if n == 0 || d == 0 {
        return Err(Error::Dimension("fit_ridge: empty design matrix".into()));
    }
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "fit_ridge: {} rows but {} labels",
            n,
            y.len()
        )));
    }
    let lambda_eff = config.effective_lambda(n, d);
    let y = DVector::from_column_slice(y);
    let nf = n as f64;

    // (gram matrix, dimension) in whichever space is smaller; the dual/kernel
    // route returns coefficients to expand through Xᵀ.
    let kernel_route = n < d;
    let gram = if kernel_route {
        x * x.transpose() / nf
    } else {
        x.tr_mul(x) / nf
    };
    let rhs = if kernel_route {
        y.clone() / nf
    } else {
        x.tr_mul(&y) / nf
    };

    let dim = gram.nrows();
    let attempt = |lam: f64| -> Option<DVector<f64>> {
        let mut m = gram.clone();
        for i in 0..dim {
            m[(i, i)] += lam;
        }
        solve_spd(&m, &rhs)
    };

    let mut jittered = false;
    let mut used_lambda = lambda_eff;
    let solution = match attempt(lambda_eff) {
        Some(s) => s,
        None => {
            let jitter = 1e-12 * gram.trace() / dim as f64;
            jittered = true;
            used_lambda = lambda_eff + jitter;
            attempt(used_lambda).ok_or_else(|| {
                Error::SingularSystem(format!(
                    "gram matrix ({dim}x{dim}) not positive definite even with jitter {jitter:e}"
                ))
            })?
        }
    };

    let theta_hat = if kernel_route {
        x.tr_mul(&solution)
    } else {
        solution
    };
    if theta_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "fit_ridge produced non-finite coefficients".into(),
        ));
    }
    Ok(RidgeFit {
        theta_hat,
        effective_lambda: used_lambda,
        n_train: n,
        jittered,
    })
}

/// Relative residual of the normal equations `(Σ̂+λI)θ̂ = Xᵀy/N` for a fit;
/// used to verify the solve independent of the route taken.
pub fn normal_equation_residual(x: &DMatrix<f64>, y: &[f64], fit: &RidgeFit) -> f64 {
    let nf = x.nrows() as f64;
    let y = DVector::from_column_slice(y);
    let b = x.tr_mul(&y) / nf;
    let mut lhs = x.tr_mul(&(x * &fit.theta_hat)) / nf;
    lhs += fit.effective_lambda * &fit.theta_hat;
    (&lhs - &b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn predict(fit: &RidgeFit, x: &DVector<f64>) -> f64 {
    fit.theta_hat.dot(x)
}

/// Exact generalization loss `Δθᵀ Σ Δθ` for the known diagonal spectrum.
pub fn quadratic_loss(fit: &RidgeFit, teacher: &Teacher, spectrum: &SpectrumConfig) -> f64 {
    let ev = spectrum.eigenvalues();
    let mut acc = 0.0;
    for j in 0..spectrum.d {
        let dt = fit.theta_hat[j] - teacher.theta[j];
        acc += ev[j] * dt * dt;
    }
    acc
}

/// Monte Carlo generalization loss on `n_test` fresh feature draws.
pub fn gen_loss_mc<R: Rng>(
    fit: &RidgeFit,
    teacher: &Teacher,
    spectrum: &SpectrumConfig,
    n_test: usize,
    rng: &mut R,
) -> Result<GenLossEstimate> {
    if n_test < 2 {
        return Err(Error::Config("gen_loss_mc: n_test must be at least 2".into()));
    }
    let scales: Vec<f64> = spectrum.eigenvalues().iter().map(|v| v.sqrt()).collect();
    let delta: Vec<f64> = (0..spectrum.d)
        .map(|j| fit.theta_hat[j] - teacher.theta[j])
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_test {
        let mut err = 0.0;
        for j in 0..spectrum.d {
            let z: f64 = rng.sample(StandardNormal);
            err += scales[j] * z * delta[j];
        }
        let sq = err * err;
        sum += sq;
        sum_sq += sq * sq;
    }
    let nf = n_test as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    Ok(GenLossEstimate {
        value: mean,
        std_err: (var / nf).sqrt(),
        method: LossMethod::McFresh,
    })
}

/// Design-conditional expected loss over label noise (bias term exact, noise
/// term via the average noise variance; requires β > 2). `lambda` must be
/// the effective penalty of the fit being analyzed.
pub fn gen_loss_trace(
    features: &DMatrix<f64>,
    lambda: f64,
    teacher: &Teacher,
    spectrum: &SpectrumConfig,
    difficulty: &DifficultyConfig,
) -> Result<GenLossEstimate> {
    let n = features.nrows();
    let d = features.ncols();
    if d != spectrum.d || teacher.theta.len() != d {
        return Err(Error::Dimension(format!(
            "gen_loss_trace: features d={d}, spectrum d={}, teacher d={}",
            spectrum.d,
            teacher.theta.len()
        )));
    }
    let sigma_noise_sq = difficulty.sigma_noise_sq()?;
    let nf = n as f64;
    let sigma_hat = features.tr_mul(features) / nf;
    let mut reg = sigma_hat.clone();
    for i in 0..d {
        reg[(i, i)] += lambda;
    }
    let chol = Cholesky::new(reg).ok_or_else(|| {
        Error::SingularSystem("gen_loss_trace: Σ̂ + λI not positive definite".into())
    })?;

    let ev = spectrum.eigenvalues();

    // Bias: λ² θ*ᵀ A Σ A θ* with A = (Σ̂+λI)^{-1}.
    let a_theta = chol.solve(&teacher.theta);
    let bias = lambda
        * lambda
        * (0..d).map(|j| ev[j] * a_theta[j] * a_theta[j]).sum::<f64>();

    // Noise: (σ_noise²/N) Tr(Σ A Σ̂ A) = (σ_noise²/N) Σ_j σ_j² (A Σ̂ A)_jj.
    // A Σ̂ and Σ̂ A are transposes of each other (everything is symmetric),
    // so two triangular solves give A Σ̂ A.
    let a_sh = chol.solve(&sigma_hat);
    let m = chol.solve(&a_sh.transpose());
    let noise = sigma_noise_sq / nf * (0..d).map(|j| ev[j] * m[(j, j)]).sum::<f64>();

    Ok(GenLossEstimate {
        value: bias + noise,
        std_err: 0.0,
        method: LossMethod::TraceFormula,
    })
}

/// Mean trace of the inverse of a `Wishart(I_d, n)` matrix: `d/(n−d−1)`,
/// finite for n > d+1. This is the design-averaged value of the noise term
/// above at λ → 0, giving the `σ_noise²·d/(N−d−1)` classical law.
pub fn mp_expected_trace(d: usize, n: usize) -> Result<f64> {
    if n <= d + 1 {
        return Err(Error::Domain(format!(
            "inverse Wishart mean trace requires n > d+1 (d={d}, n={n})"
        )));
    }
    Ok(d as f64 / (n - d - 1) as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainingCurveRow {
    pub n: usize,
    pub mean_gen_loss: f64,
    pub std_err: f64,
    pub effective_lambda: f64,
    pub replicates: usize,
}

/// Sweeps training-set size: for each N, averages the exact generalization
/// loss over `replicates` independent (teacher, dataset, fit) draws.
///
/// Stream layout: teacher on `(Teacher, replicate)` — shared across N so a
/// replicate sees one target at every size — and data on
/// `(Dataset, n_index, replicate)`.
pub fn training_curve(
    spectrum: &SpectrumConfig,
    difficulty: &DifficultyConfig,
    ridge: &RidgeConfig,
    n_grid: &[usize],
    replicates: usize,
    teacher_norm: f64,
    master_seed: u64,
) -> Result<Vec<TrainingCurveRow>> {
    spectrum.validate()?;
    difficulty.validate()?;
    ridge.validate()?;
    if n_grid.is_empty() {
        return Err(Error::Config("training_curve: empty n_grid".into()));
    }
    if replicates == 0 {
        return Err(Error::Config("training_curve: replicates must be >= 1".into()));
    }

    let cells: Vec<(usize, usize)> = n_grid
        .iter()
        .enumerate()
        .flat_map(|(ni, _)| (0..replicates).map(move |r| (ni, r)))
        .collect();
    let losses: Vec<Result<f64>> = parallel::ordered_map(&cells, |&(ni, rep)| {
        let n = n_grid[ni];
        let mut rng_t = stream_rng(master_seed, Domain::Teacher, rep as u64, 0);
        let teacher = sample_teacher_checked(spectrum.d, teacher_norm, &mut rng_t)?;
        let mut rng_d = stream_rng(master_seed, Domain::Dataset, ni as u64, rep as u64);
        let ds = datagen::sample_dataset(spectrum, difficulty, &teacher, n, &mut rng_d)?;
        let fit = fit_ridge(&ds.features, &ds.labels, ridge)?;
        Ok(quadratic_loss(&fit, &teacher, spectrum))
    });

    let mut rows = Vec::with_capacity(n_grid.len());
    for (ni, &n) in n_grid.iter().enumerate() {
        let mut vals = Vec::with_capacity(replicates);
        for (ci, cell) in cells.iter().enumerate() {
            if cell.0 == ni {
                vals.push(match &losses[ci] {
                    Ok(v) => *v,
                    Err(e) => return Err(Error::Numerical(format!("N={n}: {e}"))),
                });
            }
        }
        let rf = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / rf;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rf;
        rows.push(TrainingCurveRow {
            n,
            mean_gen_loss: mean,
            std_err: if vals.len() > 1 {
                (var / (rf - 1.0)).sqrt()
            } else {
                0.0
            },
            effective_lambda: ridge.effective_lambda(n, spectrum.d),
            replicates: vals.len(),
        });
    }
    Ok(rows)
}

fn sample_teacher_checked<R: Rng>(d: usize, norm: f64, rng: &mut R) -> Result<Teacher> {
    datagen::sample_teacher(d, norm, rng)
}

/// Convenience: one dataset + fit + exact loss from explicit streams.
pub fn fit_once(
    spectrum: &SpectrumConfig,
    difficulty: &DifficultyConfig,
    ridge: &RidgeConfig,
    teacher: &Teacher,
    n: usize,
    dataset_rng: &mut impl Rng,
) -> Result<(LidDataset, RidgeFit, f64)> {
    let ds = datagen::sample_dataset(spectrum, difficulty, teacher, n, dataset_rng)?;
    let fit = fit_ridge(&ds.features, &ds.labels, ridge)?;
    let loss = quadratic_loss(&fit, teacher, spectrum);
    Ok((ds, fit, loss))
}
