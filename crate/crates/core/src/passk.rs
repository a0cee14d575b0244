//! Repeated-attempt failure probabilities.
//!
//! A single attempt at an instance with answer bias `B` and attempt noise
//! of standard deviation `σ` succeeds when the sampled answer lands within
//! `±δ` of the truth: `p = Φ((δ−B)/σ) − Φ((−δ−B)/σ)`.  With `k`
//! independent attempts the instance fails with probability `(1−p)^k`, and
//! the population-level failure is the average of that over instances.
//!
//! For an unbiased predictor the instance noise is `σ_η/√τ` with
//! `τ ~ Gamma(β/2, 1)`, and the expected failure admits a quadrature form.
//! In the variable `w = √τ` the small-`p` (hard-instance) approximation
//! `1 − p ≈ exp(−c_δ w)`, `c_δ = 2δ/(√(2π)·σ_η)`, gives
//!
//! ```text
//! F(k) ≈ (2/Γ(β/2)) ∫₀^∞ w^{β−1} exp(−k·c_δ·w − w²) dw
//! ```
//!
//! which decays as `P̃·k^{−β}` with `P̃ = 2Γ(β)/(Γ(β/2)·c_δ^β)`.  The exact
//! expectation keeps `1 − p = erfc(δw/(σ_η√2))` inside the integral; the
//! two agree to a few percent at moderate `k` and converge for large `k`.
//! Both quadrature routes are provided so simulations can be checked
//! against whichever regime they operate in.
//!
//! Averaging `(1−p)^k` by plain sampling of `τ` breaks down once the
//! failure level drops a few orders below `1/n`: the average is then
//! carried by rare low-`τ` draws the sample never contains.
//! [`sample_importance_precisions`] draws `τ` from a half-and-half mixture
//! of the true Gamma and a log-uniform layer spanning the small-`τ`
//! region, with density-ratio weights (bounded by 2), which keeps the
//! relative error of the weighted average roughly flat in `k`.

use crate::datagen::{DifficultyConfig, MIN_PRECISION};
use crate::error::{Error, Result};
use crate::parallel;
use crate::quad;
use crate::special;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

/// Half-width of the answer acceptance window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub delta: f64,
}

impl ToleranceConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance delta must be positive and finite, got {delta}"
            )));
        }
        Ok(Self { delta })
    }
}

/// Success/failure probability of one attempt, both sides carried
/// explicitly so that neither is lost to cancellation near 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub success: f64,
    pub failure: f64,
}

/// One test instance: systematic answer bias plus per-attempt noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceTrial {
    pub bias: f64,
    pub trial_std: f64,
}

impl InstanceTrial {
    /// Instance whose attempt noise comes from the latent precision:
    /// `trial_std = σ_η/√τ`.
    pub fn from_precision(bias: f64, precision: f64, sigma_eta: f64) -> Self {
        Self {
            bias,
            trial_std: sigma_eta / precision.sqrt(),
        }
    }
}

/// Success and failure probability of a single attempt.
pub fn trial_outcome(bias: f64, trial_std: f64, delta: f64) -> Result<TrialOutcome> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!(
            "tolerance delta must be positive and finite, got {delta}"
        )));
    }
    if !bias.is_finite() || !(trial_std >= 0.0 && trial_std.is_finite()) {
        return Err(Error::Domain(format!(
            "trial requires finite bias and nonnegative spread, got bias {bias}, std {trial_std}"
        )));
    }
    if trial_std == 0.0 {
        let hit = bias.abs() <= delta;
        return Ok(TrialOutcome {
            success: hit as u8 as f64,
            failure: !hit as u8 as f64,
        });
    }
    let lo = (-delta - bias) / trial_std;
    let hi = (delta - bias) / trial_std;
    let mass = special::normal_interval_mass(lo, hi);
    Ok(TrialOutcome {
        success: mass.inside,
        failure: mass.outside,
    })
}

/// `failure^k`, evaluated through whichever of `ln(failure)` or
/// `ln1p(−success)` is well conditioned.
pub fn failure_pow_k(outcome: TrialOutcome, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let log_s = if outcome.success < 0.5 {
        libm::log1p(-outcome.success)
    } else if outcome.failure > 0.0 {
        outcome.failure.ln()
    } else {
        return 0.0;
    };
    (k as f64 * log_s).exp()
}

/// Population failure curve over a grid of attempt budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct PassKCurve {
    /// Training-set size the evaluated predictor was fitted on;
    /// 0 denotes the bias-free reference (perfect predictor).
    pub n_train: usize,
    pub k_grid: Vec<u64>,
    pub failure: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Average `(1−p)^k` over instances for every `k` in the grid.
///
/// `weights`, when given, are importance weights (density ratios); the
/// estimate is the unnormalised weighted mean, which stays unbiased.
pub fn failure_curve(
    trials: &[InstanceTrial],
    weights: Option<&[f64]>,
    tol: &ToleranceConfig,
    k_grid: &[u64],
    n_train: usize,
) -> Result<PassKCurve> {
    if trials.is_empty() {
        return Err(Error::Config("failure curve needs at least one instance".into()));
    }
    if k_grid.is_empty() {
        return Err(Error::Config("failure curve needs a non-empty k grid".into()));
    }
    if let Some(w) = weights {
        if w.len() != trials.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} instances",
                w.len(),
                trials.len()
            )));
        }
        if let Some(bad) = w.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("importance weight {bad} out of range")));
        }
    }

    let outcomes: Vec<TrialOutcome> = trials
        .iter()
        .map(|t| trial_outcome(t.bias, t.trial_std, tol.delta))
        .collect::<Result<_>>()?;

    let n = outcomes.len() as f64;
    let stats = parallel::ordered_map(k_grid, |&k| {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for (i, o) in outcomes.iter().enumerate() {
            let mut v = failure_pow_k(*o, k);
            if let Some(w) = weights {
                v *= w[i];
            }
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n;
        let se = if outcomes.len() > 1 {
            let var = (sum_sq - n * mean * mean).max(0.0) / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        (mean, se)
    });

    Ok(PassKCurve {
        n_train,
        k_grid: k_grid.to_vec(),
        failure: stats.iter().map(|s| s.0).collect(),
        std_err: stats.iter().map(|s| s.1).collect(),
    })
}

/// Linear decay rate of the single-attempt failure in `w = √τ`.
pub fn c_delta(delta: f64, sigma_eta: f64) -> f64 {
    2.0 * delta / ((2.0 * core::f64::consts::PI).sqrt() * sigma_eta)
}

/// Large-`k` power-law prefactor: `F(k) → P̃·k^{−β}`.
pub fn asymptotic_prefactor(beta: f64, delta: f64, sigma_eta: f64) -> Result<f64> {
    check_shape(beta)?;
    let c = c_delta(delta, sigma_eta);
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!(
            "prefactor needs positive finite delta/sigma, got c_delta {c}"
        )));
    }
    Ok((special::ln_gamma(beta) - special::ln_gamma(0.5 * beta) - beta * c.ln()).exp() * 2.0)
}

fn check_shape(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!(
            "difficulty shape must be positive and finite, got {beta}"
        )));
    }
    Ok(())
}

/// `(2/Γ(β/2)) ∫₀^∞ w^{β−1} exp(−w² + log_kernel(w)) dw` by adaptive
/// quadrature.  `decay` is the initial linear decay rate of the kernel
/// and steers breakpoint placement and truncation; the kernel must be
/// log-concave-dominated so that `log_kernel(w) ≤ −decay·w`.
fn weighted_survival(beta: f64, decay: f64, log_kernel: &dyn Fn(f64) -> f64) -> Result<f64> {
    // Beyond w² + decay·w = 720 the integrand is below ~1e-313 of scale.
    let w_max = 0.5 * (-decay + (decay * decay + 4.0 * 720.0).sqrt());
    let mut pts = vec![0.0_f64];
    for c in [1.0 / (decay + 1.0), 10.0 / (decay + 1.0), 1.0] {
        if c < w_max {
            pts.push(c);
        }
    }
    pts.push(w_max);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut total = 0.0;
    let mut first = 0;
    if beta < 1.0 {
        // w^{β−1} is singular at 0; v = w^β flattens it exactly.
        let g = |v: f64| {
            if v <= 0.0 {
                return log_kernel(0.0).exp() / beta;
            }
            let w = v.powf(1.0 / beta);
            (-(w * w) + log_kernel(w)).exp() / beta
        };
        total += quad::integrate_checked(g, 0.0, pts[1].powf(beta), 1e-12, 0.0, 4000)?;
        first = 1;
    }
    let beta_m1 = beta - 1.0;
    let f = |w: f64| {
        if w <= 0.0 {
            return if beta_m1 > 0.0 {
                0.0
            } else {
                log_kernel(0.0).exp()
            };
        }
        (beta_m1 * w.ln() - w * w + log_kernel(w)).exp()
    };
    for pair in pts[first..].windows(2) {
        total += quad::integrate_checked(&f, pair[0], pair[1], 1e-12, 0.0, 4000)?;
    }
    Ok(2.0 * total / special::gamma_fn(0.5 * beta))
}

/// Hard-instance-approximation failure integral
/// `(2/Γ(β/2)) ∫₀^∞ w^{β−1} e^{−a·w − w²} dw` at `a = k·c_δ`.
pub fn survival_integral(a: f64, beta: f64) -> Result<f64> {
    check_shape(beta)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Config(format!("decay rate must be nonnegative, got {a}")));
    }
    if a == 0.0 {
        return Ok(1.0); // normalised Gamma density
    }
    weighted_survival(beta, a, &|w| -a * w)
}

/// Expected failure after `k` attempts under the hard-instance
/// approximation of the per-attempt failure.
pub fn asymptotic_failure_oracle(
    k: u64,
    beta: f64,
    delta: f64,
    sigma_eta: f64,
) -> Result<f64> {
    survival_integral(k as f64 * c_delta(delta, sigma_eta), beta)
}

/// Expected failure after `k` attempts with the exact per-attempt failure
/// `erfc(δw/(σ_η√2))` kept inside the integral.  Agrees with the
/// simulation estimators at every `k`, unlike the asymptotic form which
/// only converges for large `k`.
pub fn exact_failure_oracle(k: u64, beta: f64, delta: f64, sigma_eta: f64) -> Result<f64> {
    check_shape(beta)?;
    if !(delta > 0.0 && delta.is_finite() && sigma_eta > 0.0 && sigma_eta.is_finite()) {
        return Err(Error::Config(format!(
            "oracle needs positive finite delta and sigma, got {delta}, {sigma_eta}"
        )));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let z = delta / (sigma_eta * core::f64::consts::SQRT_2);
    let kf = k as f64;
    let log_kernel = move |w: f64| {
        let p = libm::erf(z * w);
        let log_s = if p < 0.5 {
            libm::log1p(-p)
        } else {
            let s = libm::erfc(z * w);
            if s > 0.0 {
                s.ln()
            } else {
                return f64::NEG_INFINITY;
            }
        };
        kf * log_s
    };
    // log-erfc is concave, so k·log s ≤ −k·c_δ·w and the linear-decay
    // breakpoints/truncation of the asymptotic route stay valid.
    weighted_survival(beta, kf * c_delta(delta, sigma_eta), &log_kernel)
}

/// Default log-uniform layer for the precision importance sampler: wide
/// enough that `k·c_δ` up to ~10⁶ keeps its dominant `τ ≈ (β/(k·c_δ))²`
/// region covered, at only a logarithmic price in variance.
pub const DEFAULT_TAU_MIN: f64 = 1e-14;
pub const DEFAULT_TAU_MAX: f64 = 1e2;

/// Precisions drawn from the mixture proposal together with their
/// density-ratio weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceSample {
    pub precisions: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Draw `n` precisions from `½·Gamma(β/2,1) + ½·LogUniform(τ_min, τ_max)`
/// with weights `f/q` against the true Gamma density `f`.  Weights are
/// bounded by 2, and the weighted mean of any integrand is unbiased.
pub fn sample_importance_precisions(
    difficulty: &DifficultyConfig,
    n: usize,
    tau_min: f64,
    tau_max: f64,
    rng: &mut impl Rng,
) -> Result<ImportanceSample> {
    if n == 0 {
        return Err(Error::Config("importance sample needs n >= 1".into()));
    }
    if !(tau_min > 0.0 && tau_max > tau_min && tau_max.is_finite()) {
        return Err(Error::Config(format!(
            "importance sampler needs 0 < tau_min < tau_max, got [{tau_min}, {tau_max}]"
        )));
    }
    let half = 0.5 * difficulty.beta;
    let gamma_dist = Gamma::new(half, 1.0)
        .map_err(|e| Error::Config(format!("invalid difficulty shape: {e}")))?;
    let log_ratio = (tau_max / tau_min).ln();
    let ln_norm = special::ln_gamma(half);

    let mut precisions = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let tau = if rng.gen_bool(0.5) {
            loop {
                let t = gamma_dist.sample(rng);
                if t >= MIN_PRECISION {
                    break t;
                }
            }
        } else {
            tau_min * (rng.gen::<f64>() * log_ratio).exp()
        };
        let f = ((half - 1.0) * tau.ln() - tau - ln_norm).exp();
        let u = if (tau_min..=tau_max).contains(&tau) {
            1.0 / (tau * log_ratio)
        } else {
            0.0
        };
        let q = 0.5 * f + 0.5 * u;
        precisions.push(tau);
        weights.push(if q > 0.0 { f / q } else { 0.0 });
    }
    Ok(ImportanceSample { precisions, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Domain};
    use proptest::prelude::*;

    fn rel_close(got: f64, want: f64, tol: f64) {
        let rel = (got - want).abs() / want.abs();
        assert!(rel <= tol, "got {got:e}, want {want:e} (rel {rel:e})");
    }

    #[test]
    fn single_trial_matches_reference_values() {
        // (bias, tau, delta, sigma_eta, success, failure)
        let cases = [
            (0.3, 2.0, 0.05, 0.1, 2.031044595363087634093e-4, 0.9997968955404636912366),
            (0.0, 1.0, 0.05, 1.0, 0.03987761167674492319264, 0.9601223883232550768074),
            (0.0, 4.0, 0.3, 0.5, 0.7698606595565834639556, 0.2301393404434165360444),
            (-1.2, 0.7, 0.25, 0.8, 0.09552167828299870107902, 0.904478321717001298921),
            (0.05, 9.0, 0.5, 0.25, 0.9999999666589936254774, 3.334100637452256802743e-8),
        ];
        for (bias, tau, delta, sigma, p, s) in cases {
            let t = InstanceTrial::from_precision(bias, tau, sigma);
            let o = trial_outcome(t.bias, t.trial_std, delta).unwrap();
            rel_close(o.success, p, 1e-13);
            rel_close(o.failure, s, 1e-13);
        }
        // Far outside the window: success decays to a deep-tail value.
        let o = trial_outcome(4.0, 0.5 / 4.0, 0.1).unwrap();
        assert_eq!(o.failure, 1.0);
        rel_close(o.success, 5.327215135776670015986e-214, 1e-12);
    }

    #[test]
    fn zero_spread_trial_is_an_indicator() {
        let inside = trial_outcome(0.3, 0.0, 0.5).unwrap();
        assert_eq!((inside.success, inside.failure), (1.0, 0.0));
        let outside = trial_outcome(0.7, 0.0, 0.5).unwrap();
        assert_eq!((outside.success, outside.failure), (0.0, 1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(trial_outcome(0.0, 1.0, 0.0).is_err());
        assert!(trial_outcome(0.0, -1.0, 0.1).is_err());
        assert!(trial_outcome(f64::NAN, 1.0, 0.1).is_err());
        assert!(ToleranceConfig::new(-0.1).is_err());
        assert!(survival_integral(-1.0, 3.0).is_err());
        assert!(survival_integral(1.0, 0.0).is_err());
        assert!(exact_failure_oracle(1, 3.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn power_of_failure_is_stable_in_both_regimes() {
        let half = TrialOutcome { success: 0.5, failure: 0.5 };
        rel_close(failure_pow_k(half, 10), 0.5f64.powi(10), 1e-14);
        assert_eq!(failure_pow_k(half, 0), 1.0);
        let sure = TrialOutcome { success: 0.0, failure: 1.0 };
        assert_eq!(failure_pow_k(sure, 1 << 40), 1.0);
        let never = TrialOutcome { success: 1.0, failure: 0.0 };
        assert_eq!(failure_pow_k(never, 1), 0.0);
        // success so small that 1-p rounds to 1.0: the ln1p route keeps it.
        let grind = TrialOutcome { success: 1e-18, failure: 1.0 };
        let got = failure_pow_k(grind, 1_000_000);
        rel_close(got, 1.0 - 1e-12, 1e-15);
    }

    #[test]
    fn asymptotic_oracle_matches_reference_values() {
        // Quadrature references at delta = 0.05, sigma_eta = 1.
        rel_close(
            asymptotic_failure_oracle(10, 3.0, 0.05, 1.0).unwrap(),
            0.6487798447267092026865,
            1e-10,
        );
        rel_close(
            asymptotic_failure_oracle(100, 3.0, 0.05, 1.0).unwrap(),
            0.042048963654274031027,
            1e-10,
        );
        rel_close(
            asymptotic_failure_oracle(1000, 3.0, 0.05, 1.0).unwrap(),
            7.055514327936006553233e-5,
            1e-10,
        );
        rel_close(
            asymptotic_failure_oracle(10_000, 4.0, 0.05, 1.0).unwrap(),
            4.736814870549478271466e-10,
            1e-10,
        );
        assert_eq!(asymptotic_failure_oracle(0, 3.0, 0.05, 1.0).unwrap(), 1.0);
        rel_close(survival_integral(1.0, 2.0).unwrap(), 0.4543586392349529579006, 1e-11);
        rel_close(survival_integral(0.5, 1.0).unwrap(), 0.7703465477309967439167, 1e-11);
    }

    #[test]
    fn oracle_handles_shape_below_one() {
        rel_close(survival_integral(3.0, 0.6).unwrap(), 0.4760980083912387719627, 1e-10);
        rel_close(
            survival_integral(1e4, 0.6).unwrap(),
            0.003963526225426594202803,
            1e-10,
        );
    }

    /// Brute-force trapezoid in the w-domain: same integral, no adaptive
    /// machinery shared with the production route.
    #[test]
    fn trapezoid_cross_check() {
        let (a, beta) = (1.0, 2.0);
        let f = |w: f64| 2.0 * w.powf(beta - 1.0) * (-a * w - w * w).exp();
        let (lo, hi, n) = (0.0, 30.0, 1_000_000usize);
        let h = (hi - lo) / n as f64;
        let mut sum = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            sum += f(lo + i as f64 * h);
        }
        let brute = sum * h / special::gamma_fn(0.5 * beta);
        let got = survival_integral(a, beta).unwrap();
        assert!(
            (got - brute).abs() <= 1e-8,
            "quadrature {got} vs trapezoid {brute}"
        );
    }

    #[test]
    fn oracle_approaches_power_law() {
        let (beta, delta, sigma) = (3.0, 0.05, 1.0);
        let k = 1_000_000u64;
        let tail = asymptotic_prefactor(beta, delta, sigma).unwrap() * (k as f64).powf(-beta);
        let ratio = asymptotic_failure_oracle(k, beta, delta, sigma).unwrap() / tail;
        rel_close(ratio, 0.9999999924601777024456, 1e-9);
    }

    #[test]
    fn prefactor_matches_reference_values() {
        rel_close(asymptotic_prefactor(3.0, 0.05, 1.0).unwrap(), 71086.12701053385995225, 1e-12);
        rel_close(asymptotic_prefactor(4.0, 0.1, 1.0).unwrap(), 296088.132032680758565, 1e-12);
        // beta = 2 collapses to 2/c_delta^2 exactly.
        rel_close(asymptotic_prefactor(2.0, 0.2, 1.0).unwrap(), 78.53981633974483096157, 1e-13);
    }

    #[test]
    fn exact_oracle_matches_reference_values() {
        let cases = [
            (1u64, 3.0, 0.9550216552198371401674),
            (10, 3.0, 0.6421149709013200276697),
            (100, 3.0, 0.0407739527874918147906),
            (1000, 3.0, 7.013929790532759018042e-5),
            (10_000, 3.0, 7.103815301410209271454e-8),
            (100, 4.0, 0.01976213668396365651196),
            (10_000, 4.0, 4.732083271064150401457e-10),
        ];
        for (k, beta, want) in cases {
            rel_close(exact_failure_oracle(k, beta, 0.05, 1.0).unwrap(), want, 1e-9);
        }
        assert_eq!(exact_failure_oracle(0, 3.0, 0.05, 1.0).unwrap(), 1.0);
        // Wider window, smaller noise: the inference-preset corner.
        rel_close(
            exact_failure_oracle(1000, 4.0, 0.25, 0.4).unwrap(),
            1.921071078929860979796e-10,
            1e-9,
        );
    }

    #[test]
    fn exact_and_asymptotic_routes_converge_at_large_k() {
        let (beta, delta, sigma) = (3.0, 0.05, 1.0);
        for (k, want_ratio) in [
            (100u64, 0.9696779478974717),
            (1000, 0.9941060941172502),
            (10_000, 0.9994004744860868),
        ] {
            let e = exact_failure_oracle(k, beta, delta, sigma).unwrap();
            let a = asymptotic_failure_oracle(k, beta, delta, sigma).unwrap();
            rel_close(e / a, want_ratio, 1e-8);
        }
    }

    #[test]
    fn importance_sampler_is_deterministic_with_bounded_weights() {
        let difficulty = DifficultyConfig::new(3.0, 1.0).unwrap();
        let draw = || {
            let mut rng = stream_rng(7, Domain::TestInstances, 0, 0);
            sample_importance_precisions(
                &difficulty,
                50_000,
                DEFAULT_TAU_MIN,
                DEFAULT_TAU_MAX,
                &mut rng,
            )
            .unwrap()
        };
        let a = draw();
        let b = draw();
        assert_eq!(a, b);
        assert!(a.weights.iter().all(|&w| (0.0..=2.0 + 1e-12).contains(&w)));
        assert!(a.precisions.iter().all(|&t| t >= MIN_PRECISION));
        // E_q[f/q] = 1: the weights integrate the true density.
        let mean_w = a.weights.iter().sum::<f64>() / a.weights.len() as f64;
        assert!((mean_w - 1.0).abs() < 0.02, "mean weight {mean_w}");
    }

    #[test]
    fn importance_estimate_tracks_exact_oracle_far_below_naive_reach() {
        let (beta, delta, sigma) = (3.0, 0.05, 1.0);
        let difficulty = DifficultyConfig::new(beta, sigma).unwrap();
        let mut rng = stream_rng(8, Domain::TestInstances, 0, 0);
        let n = 200_000;
        let sample =
            sample_importance_precisions(&difficulty, n, DEFAULT_TAU_MIN, DEFAULT_TAU_MAX, &mut rng)
                .unwrap();
        let trials: Vec<InstanceTrial> = sample
            .precisions
            .iter()
            .map(|&t| InstanceTrial::from_precision(0.0, t, sigma))
            .collect();
        let tol = ToleranceConfig::new(delta).unwrap();
        let k_grid = [100u64, 1000, 10_000];
        let curve = failure_curve(&trials, Some(&sample.weights), &tol, &k_grid, 0).unwrap();
        for (i, &k) in k_grid.iter().enumerate() {
            let want = exact_failure_oracle(k, beta, delta, sigma).unwrap();
            let (got, se) = (curve.failure[i], curve.std_err[i]);
            assert!(
                (got - want).abs() <= 4.0 * se,
                "k={k}: estimate {got:e} vs oracle {want:e} (se {se:e})"
            );
            assert!(se / want < 0.05, "k={k}: relative se {:e}", se / want);
        }
    }

    #[test]
    fn naive_sampling_agrees_at_small_k() {
        let (beta, delta, sigma) = (3.0, 0.05, 1.0);
        let difficulty = DifficultyConfig::new(beta, sigma).unwrap();
        let mut rng = stream_rng(9, Domain::TestInstances, 0, 0);
        let taus = crate::datagen::sample_precisions(&difficulty, 50_000, &mut rng);
        let trials: Vec<InstanceTrial> = taus
            .iter()
            .map(|&t| InstanceTrial::from_precision(0.0, t, sigma))
            .collect();
        let tol = ToleranceConfig::new(delta).unwrap();
        let curve = failure_curve(&trials, None, &tol, &[10], 0).unwrap();
        let want = exact_failure_oracle(10, beta, delta, sigma).unwrap();
        assert!(
            (curve.failure[0] - want).abs() <= 4.0 * curve.std_err[0],
            "naive {} vs oracle {want} (se {})",
            curve.failure[0],
            curve.std_err[0]
        );
    }

    #[test]
    fn curve_is_monotone_and_bounded() {
        let mut rng = stream_rng(10, Domain::TestInstances, 0, 0);
        let trials: Vec<InstanceTrial> = (0..500)
            .map(|_| InstanceTrial {
                bias: rand::Rng::gen::<f64>(&mut rng) * 2.0 - 1.0,
                trial_std: rand::Rng::gen::<f64>(&mut rng) * 3.0 + 1e-3,
            })
            .collect();
        let tol = ToleranceConfig::new(0.3).unwrap();
        let k_grid: Vec<u64> = vec![1, 2, 5, 10, 100, 1000, 100_000];
        let curve = failure_curve(&trials, None, &tol, &k_grid, 17).unwrap();
        assert_eq!(curve.n_train, 17);
        for pair in curve.failure.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
        for &f in &curve.failure {
            assert!((0.0..=1.0).contains(&f));
        }
        assert!(curve.std_err.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn bias_sign_is_irrelevant() {
        for (bias, std) in [(0.4, 0.9), (1.7, 0.05), (0.02, 3.0)] {
            let plus = trial_outcome(bias, std, 0.25).unwrap();
            let minus = trial_outcome(-bias, std, 0.25).unwrap();
            assert_eq!(plus.success.to_bits(), minus.success.to_bits());
            assert_eq!(plus.failure.to_bits(), minus.failure.to_bits());
        }
    }

    #[test]
    fn curve_rejects_mismatched_weights() {
        let trials = vec![InstanceTrial { bias: 0.0, trial_std: 1.0 }];
        let tol = ToleranceConfig::new(0.1).unwrap();
        assert!(failure_curve(&trials, Some(&[1.0, 1.0]), &tol, &[1], 0).is_err());
        assert!(failure_curve(&[], None, &tol, &[1], 0).is_err());
        assert!(failure_curve(&trials, None, &tol, &[], 0).is_err());
        assert!(failure_curve(&trials, Some(&[-0.5]), &tol, &[1], 0).is_err());
    }

    proptest! {
        #[test]
        fn outcome_probabilities_are_complementary(
            bias in -10.0f64..10.0,
            std in 1e-6f64..100.0,
            delta in 1e-6f64..10.0,
        ) {
            let o = trial_outcome(bias, std, delta).unwrap();
            prop_assert!((0.0..=1.0).contains(&o.success));
            prop_assert!((0.0..=1.0).contains(&o.failure));
            prop_assert!((o.success + o.failure - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn failure_power_is_monotone_in_k(
            bias in -5.0f64..5.0,
            std in 1e-3f64..10.0,
            k in 1u64..10_000,
        ) {
            let o = trial_outcome(bias, std, 0.2).unwrap();
            let a = failure_pow_k(o, k);
            let b = failure_pow_k(o, k + 1);
            prop_assert!(b <= a + 1e-15);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
