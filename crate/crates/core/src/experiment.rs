//! End-to-end experiment drivers: each function takes the one config
//! document and produces the rows that the CSV writers persist.
//!
//! Determinism contract: every random draw comes from a counter-keyed
//! stream, cells of the (grid-point, replicate) lattice are computed via
//! order-preserving parallel maps, and cross-cell reductions run
//! sequentially — so results are bit-identical for any thread count.

use crate::adapter::{self, ExternalDataset, ExternalPipelineConfig, ExternalPipelineResult,
                     InvarianceReport, RescaleConfig};
use crate::allocation::{AllocationProblem, BetaEffModel, SurfaceRow};
use crate::config::ExperimentConfig;
use crate::datagen;
use crate::error::{Error, Result};
use crate::expfit::{self, BetaEffPoint, SaturationFit, SaturationModel, SlopeWindow};
use crate::parallel;
use crate::passk::{self, InstanceTrial, PassKCurve};
use crate::ridge::{self, TrainingCurveRow};
use crate::rng::{stream_rng, Domain};

/// Training-size sweep of the exact generalization loss.
pub fn run_training(cfg: &ExperimentConfig) -> Result<Vec<TrainingCurveRow>> {
    cfg.validate()?;
    ridge::training_curve(
        &cfg.spectrum,
        &cfg.difficulty,
        &cfg.ridge,
        &cfg.training.n_grid,
        cfg.training.replicates,
        cfg.training.teacher_norm,
        cfg.seed,
    )
}

/// Everything the inference sweep measures.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRun {
    pub n_grid: Vec<usize>,
    /// Measured failure curve per training size (`n_train = N`).
    pub curves: Vec<PassKCurve>,
    /// Bias-free curve from the exact quadrature (`n_train = 0`).
    pub reference: PassKCurve,
    /// Window exponent with bootstrap error per training size.
    pub beta_points: Vec<BetaEffPoint>,
    /// Mean exact generalization loss per training size.
    pub gen_loss: Vec<f64>,
}

/// Trials, correction weights and fit loss from one (size, replicate) cell.
struct TrialBlock {
    trials: Vec<InstanceTrial>,
    weights: Vec<f64>,
    loss: f64,
}

fn inference_cell(cfg: &ExperimentConfig, n_index: usize, rep: usize) -> Result<TrialBlock> {
    let n = cfg.inference.n_grid[n_index];
    let inf = &cfg.inference;

    // Teacher keyed by replicate alone, so one replicate chases the same
    // target at every training size.
    let mut rng_teacher = stream_rng(cfg.seed, Domain::Teacher, rep as u64, 0);
    let teacher =
        datagen::sample_teacher(cfg.spectrum.d, inf.teacher_norm, &mut rng_teacher)?;

    let mut rng_data = stream_rng(cfg.seed, Domain::Dataset, n_index as u64, rep as u64);
    let (_, fit, loss) = ridge::fit_once(
        &cfg.spectrum,
        &cfg.difficulty,
        &cfg.ridge,
        &teacher,
        n,
        &mut rng_data,
    )?;

    // Held-out instances: features first, then difficulties, one stream.
    let mut rng_test = stream_rng(cfg.seed, Domain::TestInstances, n_index as u64, rep as u64);
    let x = datagen::sample_features(&cfg.spectrum, inf.n_test, &mut rng_test);
    let (precisions, weights) = if inf.importance_sampling {
        let s = passk::sample_importance_precisions(
            &cfg.difficulty,
            inf.n_test,
            inf.tau_min,
            inf.tau_max,
            &mut rng_test,
        )?;
        (s.precisions, s.weights)
    } else {
        (
            datagen::sample_precisions(&cfg.difficulty, inf.n_test, &mut rng_test),
            vec![1.0; inf.n_test],
        )
    };

    let diff = &fit.theta_hat - &teacher.theta;
    let trials = (0..inf.n_test)
        .map(|i| {
            let bias = x.row(i).transpose().dot(&diff);
            InstanceTrial::from_precision(bias, precisions[i], cfg.difficulty.sigma_eta)
        })
        .collect();
    Ok(TrialBlock { trials, weights, loss })
}

/// Sweep training size, measure the pooled failure curve, the window
/// exponent and the generalization loss at each size, and lay the exact
/// bias-free curve alongside.
///
/// Exponents ride along only when the k grid can host the slope window;
/// a single-k sweep still yields curves, with `beta_points` empty.
pub fn run_inference(cfg: &ExperimentConfig) -> Result<InferenceRun> {
    let windows: Vec<SlopeWindow> = cfg
        .exponent
        .window(&cfg.inference.k_grid)
        .into_iter()
        .collect();
    let (run, _) = inference_sweep(cfg, &windows)?;
    Ok(run)
}

/// Inference sweep with an exponent series per window; `beta_points` of
/// the returned run is the first window's series.
fn inference_sweep(
    cfg: &ExperimentConfig,
    windows: &[SlopeWindow],
) -> Result<(InferenceRun, Vec<Vec<BetaEffPoint>>)> {
    cfg.validate()?;
    let inf = &cfg.inference;

    let reference_failure = parallel::ordered_map(&inf.k_grid, |&k| {
        passk::exact_failure_oracle(
            k,
            cfg.difficulty.beta,
            cfg.tolerance.delta,
            cfg.difficulty.sigma_eta,
        )
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let reference = PassKCurve {
        n_train: 0,
        k_grid: inf.k_grid.clone(),
        std_err: vec![0.0; reference_failure.len()],
        failure: reference_failure,
    };

    let mut curves = Vec::with_capacity(inf.n_grid.len());
    let mut gen_loss = Vec::with_capacity(inf.n_grid.len());
    let mut series: Vec<Vec<BetaEffPoint>> = vec![Vec::with_capacity(inf.n_grid.len()); windows.len()];
    for n_index in 0..inf.n_grid.len() {
        let reps: Vec<usize> = (0..inf.replicates).collect();
        let blocks = parallel::ordered_map(&reps, |&rep| inference_cell(cfg, n_index, rep))
            .into_iter()
            .collect::<Result<Vec<TrialBlock>>>()?;

        let mut trials = Vec::with_capacity(inf.replicates * inf.n_test);
        let mut weights = Vec::with_capacity(inf.replicates * inf.n_test);
        let mut loss_sum = 0.0;
        for b in &blocks {
            trials.extend_from_slice(&b.trials);
            weights.extend_from_slice(&b.weights);
            loss_sum += b.loss;
        }
        gen_loss.push(loss_sum / inf.replicates as f64);

        let w_opt = inf.importance_sampling.then_some(weights.as_slice());
        curves.push(passk::failure_curve(
            &trials,
            w_opt,
            &cfg.tolerance,
            &inf.k_grid,
            inf.n_grid[n_index],
        )?);
        for (w_index, window) in windows.iter().enumerate() {
            let est = expfit::bootstrap_exponent(
                &trials,
                w_opt,
                &cfg.tolerance,
                &inf.k_grid,
                window,
                cfg.exponent.method,
                cfg.exponent.resamples,
                cfg.seed,
                (w_index * inf.n_grid.len() + n_index) as u64,
            )?;
            series[w_index].push(BetaEffPoint {
                n: inf.n_grid[n_index],
                beta_eff: est.beta_eff,
                std_err: est.std_err,
            });
        }
    }

    let run = InferenceRun {
        n_grid: inf.n_grid.clone(),
        curves,
        reference,
        beta_points: series.first().cloned().unwrap_or_default(),
        gen_loss,
    };
    Ok((run, series))
}

/// Exponent extraction under the configured window and its half-decade
/// shift, each with a saturation-law fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaWindowsRun {
    pub inference: InferenceRun,
    pub window: SlopeWindow,
    pub shifted_window: SlopeWindow,
    pub shifted_points: Vec<BetaEffPoint>,
    pub saturation: Option<SaturationFit>,
    pub shifted_saturation: Option<SaturationFit>,
}

pub fn run_beta_windows(cfg: &ExperimentConfig) -> Result<BetaWindowsRun> {
    let window = cfg.exponent.window(&cfg.inference.k_grid)?;
    let shifted_window = window.shifted(&cfg.inference.k_grid)?;
    let (inference, mut series) = inference_sweep(cfg, &[window, shifted_window])?;
    let shifted_points = series.pop().expect("two series");
    let fit = |points: &[BetaEffPoint]| -> Result<Option<SaturationFit>> {
        if cfg.exponent.fit_saturation {
            let fix = cfg.exponent.fix_beta.then_some(cfg.difficulty.beta);
            Ok(Some(expfit::fit_saturation(points, fix)?))
        } else {
            Ok(None)
        }
    };
    let saturation = fit(&inference.beta_points)?;
    let shifted_saturation = fit(&shifted_points)?;
    Ok(BetaWindowsRun {
        inference,
        window,
        shifted_window,
        shifted_points,
        saturation,
        shifted_saturation,
    })
}

/// Allocation problem described by the config's allocation section.
pub fn allocation_problem(cfg: &ExperimentConfig) -> Result<AllocationProblem> {
    let a = &cfg.allocation;
    let beta_eff = if a.saturation_delta > 0.0 {
        BetaEffModel::Saturation(SaturationModel {
            beta: a.beta,
            delta: a.saturation_delta,
            c: a.saturation_c,
            nu: a.saturation_nu,
        })
    } else {
        BetaEffModel::Constant(a.beta)
    };
    let problem = AllocationProblem {
        budget: a.budgets[0],
        cost_train: a.cost_train,
        cost_attempt: a.cost_attempt,
        train_weight: a.train_weights[0],
        train_prefactor: a.train_prefactor,
        train_exponent: a.train_exponent,
        infer_prefactor: a.infer_prefactor,
        beta_eff,
    };
    problem.validate()?;
    Ok(problem)
}

pub fn run_allocation(cfg: &ExperimentConfig) -> Result<Vec<SurfaceRow>> {
    cfg.validate()?;
    let base = allocation_problem(cfg)?;
    crate::allocation::tradeoff_surface(
        &base,
        &cfg.allocation.budgets,
        &cfg.allocation.train_weights,
        cfg.allocation.grid_points,
    )
}

/// Synthesize the raw-unit instance table named by the external section.
pub fn external_input(cfg: &ExperimentConfig) -> Result<ExternalDataset> {
    cfg.validate()?;
    if cfg.external.synthesize_n == 0 {
        return Err(Error::Config(
            "external.synthesize_n = 0: an input instance table is required".into(),
        ));
    }
    let mut rng_teacher = stream_rng(cfg.seed, Domain::Teacher, 0, 0);
    let teacher = datagen::sample_teacher(
        cfg.spectrum.d,
        cfg.inference.teacher_norm,
        &mut rng_teacher,
    )?;
    adapter::synthesize_raw_dataset(
        &cfg.spectrum,
        &cfg.difficulty,
        &teacher,
        cfg.external.synthesize_n,
        cfg.external.scale,
        cfg.seed,
    )
}

fn external_pipeline_config(cfg: &ExperimentConfig) -> ExternalPipelineConfig {
    ExternalPipelineConfig {
        rescale: RescaleConfig {
            scale: cfg.external.scale,
            variance_floor: cfg.external.variance_floor,
        },
        lambda: cfg.external.lambda,
        delta: cfg.external.delta,
        train_fraction: cfg.external.train_fraction,
        k_grid: cfg.external.k_grid.clone(),
        master_seed: cfg.seed,
    }
}

/// Split/train/measure on raw-unit data.
pub fn run_external(
    cfg: &ExperimentConfig,
    data: &ExternalDataset,
) -> Result<ExternalPipelineResult> {
    cfg.validate()?;
    adapter::run_external_pipeline(data, &external_pipeline_config(cfg))
}

/// Rerun the pipeline under each configured unit factor and report the
/// worst disagreement; a correct unit mapping leaves only rounding noise.
pub fn check_external_invariance(
    cfg: &ExperimentConfig,
    data: &ExternalDataset,
) -> Result<InvarianceReport> {
    cfg.validate()?;
    let pipe = external_pipeline_config(cfg);
    adapter::rescale_invariance_check(data, &pipe, &cfg.external.check_scales)
}
