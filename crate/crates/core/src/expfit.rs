//! Effective-exponent extraction from failure curves.
//!
//! A failure curve that follows `F(k) ≈ P·k^{−β}` over some range of `k`
//! has a log-log slope of `−β` there.  This module measures that slope in
//! a window (`β_eff`), attaches bootstrap errors over test instances,
//! and fits two parametric refinements:
//!
//! * a saturation law `β_eff(N) = β − Δ/(1 + c·N^ν)` describing how the
//!   measured exponent climbs towards the difficulty-tail exponent as the
//!   predictor improves with training-set size, and
//! * a two-tail decomposition `F(k) = P_base·k^{−β} + P_extra·k^{−γ}`
//!   separating the difficulty tail from the slower bias-induced tail.
//!
//! All parametric fits run Levenberg-Marquardt on log-parameters (so
//! positivity is structural) from several deterministic starting points,
//! keeping the best by residual norm.

use crate::error::{Error, Result};
use crate::nlls::{levenberg_marquardt, LmOptions};
use crate::parallel;
use crate::passk::{failure_pow_k, trial_outcome, InstanceTrial, ToleranceConfig, TrialOutcome};
use crate::rng::{stream_rng, Domain};
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Ordinary least squares of `ln y` on `ln x`; returns `(slope, intercept)`.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} abscissae vs {} ordinates",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Config("log-log fit needs at least two points".into()));
    }
    if x.iter().chain(y.iter()).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx = lx.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit abscissae are all equal".into()));
    }
    let sxy = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `ln y` on `ln x` alone.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    log_log_fit(x, y).map(|(s, _)| s)
}

/// Attempt-budget window over which the local exponent is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeWindow {
    pub k_lo: f64,
    pub k_hi: f64,
}

impl SlopeWindow {
    pub fn new(k_lo: f64, k_hi: f64) -> Result<Self> {
        if !(k_lo > 0.0 && k_hi > k_lo && k_hi.is_finite()) {
            return Err(Error::Config(format!(
                "slope window needs 0 < k_lo < k_hi, got [{k_lo}, {k_hi}]"
            )));
        }
        Ok(Self { k_lo, k_hi })
    }

    /// Middle third of the grid's log-range: far enough from both ends
    /// that neither the small-k shoulder nor estimator noise at the far
    /// tail contaminates the slope.
    pub fn middle_log_third(k_grid: &[u64]) -> Result<Self> {
        let (min, max) = match (k_grid.iter().min(), k_grid.iter().max()) {
            (Some(&a), Some(&b)) if a >= 1 && b > a => (a as f64, b as f64),
            _ => {
                return Err(Error::Config(
                    "window needs a grid with at least two distinct k >= 1".into(),
                ))
            }
        };
        let (la, lb) = (min.ln(), max.ln());
        let third = (lb - la) / 3.0;
        Self::new((la + third).exp(), (la + 2.0 * third).exp())
    }

    pub fn contains(&self, k: u64) -> bool {
        let kf = k as f64;
        kf >= self.k_lo && kf <= self.k_hi
    }

    /// Window displaced by half a decade, toward larger k when the grid
    /// has room there and toward smaller k otherwise — a sensitivity
    /// probe for the window choice.
    pub fn shifted(&self, k_grid: &[u64]) -> Result<Self> {
        let s = 10f64.sqrt();
        let k_max = k_grid.iter().max().copied().unwrap_or(0) as f64;
        let k_min = k_grid.iter().min().copied().unwrap_or(0) as f64;
        if self.k_hi * s <= k_max {
            Self::new(self.k_lo * s, self.k_hi * s)
        } else if self.k_lo / s >= k_min.max(1.0) {
            Self::new(self.k_lo / s, self.k_hi / s)
        } else {
            Err(Error::Config(format!(
                "k grid [{k_min}, {k_max}] leaves no room to shift the window [{}, {}] by half a decade",
                self.k_lo, self.k_hi
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeMethod {
    /// Secant between the first and last grid point inside the window.
    TwoPoint,
    /// Least-squares line through every grid point inside the window.
    LeastSquares,
}

fn window_points(
    k_grid: &[u64],
    failure: &[f64],
    window: &SlopeWindow,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if k_grid.len() != failure.len() {
        return Err(Error::Dimension(format!(
            "{} grid points vs {} failure values",
            k_grid.len(),
            failure.len()
        )));
    }
    let mut ks = Vec::new();
    let mut fs = Vec::new();
    for (&k, &f) in k_grid.iter().zip(failure) {
        if window.contains(k) {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Domain(format!(
                    "failure estimate at k={k} is {f}; cannot take its logarithm"
                )));
            }
            ks.push(k as f64);
            fs.push(f);
        }
    }
    if ks.len() < 2 {
        return Err(Error::Config(format!(
            "slope window [{}, {}] covers {} grid points; need at least 2",
            window.k_lo,
            window.k_hi,
            ks.len()
        )));
    }
    Ok((ks, fs))
}

/// Local exponent `β_eff = −d ln F / d ln k` measured inside the window.
pub fn effective_exponent(
    k_grid: &[u64],
    failure: &[f64],
    window: &SlopeWindow,
    method: SlopeMethod,
) -> Result<f64> {
    let (ks, fs) = window_points(k_grid, failure, window)?;
    let slope = match method {
        SlopeMethod::TwoPoint => {
            let (k0, k1) = (ks[0], ks[ks.len() - 1]);
            let (f0, f1) = (fs[0], fs[fs.len() - 1]);
            (f1.ln() - f0.ln()) / (k1.ln() - k0.ln())
        }
        SlopeMethod::LeastSquares => log_log_slope(&ks, &fs)?,
    };
    Ok(-slope)
}

/// Exponent with a bootstrap standard error over test instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentEstimate {
    pub beta_eff: f64,
    pub std_err: f64,
    /// Bootstrap resamples whose window average collapsed to zero and
    /// were discarded.
    pub discarded_resamples: usize,
}

/// Measure the window exponent and bootstrap its sampling error by
/// resampling instances with replacement.
///
/// `series_index` keys the bootstrap random stream so that different
/// curve fits within one experiment stay independent yet reproducible.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_exponent(
    trials: &[InstanceTrial],
    weights: Option<&[f64]>,
    tol: &ToleranceConfig,
    k_grid: &[u64],
    window: &SlopeWindow,
    method: SlopeMethod,
    resamples: usize,
    master_seed: u64,
    series_index: u64,
) -> Result<ExponentEstimate> {
    if trials.is_empty() {
        return Err(Error::Config("bootstrap needs at least one instance".into()));
    }
    if resamples < 2 {
        return Err(Error::Config("bootstrap needs at least two resamples".into()));
    }
    if let Some(w) = weights {
        if w.len() != trials.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} instances",
                w.len(),
                trials.len()
            )));
        }
    }
    let ks: Vec<u64> = k_grid.iter().copied().filter(|&k| window.contains(k)).collect();
    if ks.len() < 2 {
        return Err(Error::Config(format!(
            "slope window [{}, {}] covers {} grid points; need at least 2",
            window.k_lo,
            window.k_hi,
            ks.len()
        )));
    }

    let outcomes: Vec<TrialOutcome> = trials
        .iter()
        .map(|t| trial_outcome(t.bias, t.trial_std, tol.delta))
        .collect::<Result<_>>()?;
    let n = outcomes.len();
    // Per-instance weighted failure powers on the window subgrid, flat
    // row-major [instance][k]; everything downstream is sums of rows.
    let m = ks.len();
    let mut values = vec![0.0f64; n * m];
    for (i, o) in outcomes.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        for (j, &k) in ks.iter().enumerate() {
            values[i * m + j] = w * failure_pow_k(*o, k);
        }
    }

    let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let slope_of = |means: &[f64]| -> Option<f64> {
        if means.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let s = match method {
            SlopeMethod::TwoPoint => {
                (means[m - 1].ln() - means[0].ln()) / (kf[m - 1].ln() - kf[0].ln())
            }
            SlopeMethod::LeastSquares => log_log_slope(&kf, means).ok()?,
        };
        Some(-s)
    };

    let mut means = vec![0.0f64; m];
    for i in 0..n {
        for j in 0..m {
            means[j] += values[i * m + j];
        }
    }
    for v in &mut means {
        *v /= n as f64;
    }
    let point = slope_of(&means).ok_or_else(|| {
        Error::Numerical("window failure average is zero; exponent undefined".into())
    })?;

    let idx: Vec<u64> = (0..resamples as u64).collect();
    let replicates = parallel::ordered_map(&idx, |&r| {
        let mut rng = stream_rng(master_seed, Domain::Bootstrap, series_index, r);
        let mut sums = vec![0.0f64; m];
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            for j in 0..m {
                sums[j] += values[i * m + j];
            }
        }
        for v in &mut sums {
            *v /= n as f64;
        }
        slope_of(&sums)
    });
    let kept: Vec<f64> = replicates.iter().flatten().copied().collect();
    let discarded = resamples - kept.len();
    if kept.len() < resamples / 2 || kept.len() < 2 {
        return Err(Error::Numerical(format!(
            "{discarded} of {resamples} bootstrap resamples had zero window averages"
        )));
    }
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let var = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (kept.len() - 1) as f64;
    Ok(ExponentEstimate {
        beta_eff: point,
        std_err: var.sqrt(),
        discarded_resamples: discarded,
    })
}

/// One measured exponent along a training-size sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEffPoint {
    pub n: usize,
    pub beta_eff: f64,
    pub std_err: f64,
}

/// `β_eff(N) = β − Δ/(1 + c·N^ν)`, all parameters positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationModel {
    pub beta: f64,
    pub delta: f64,
    pub c: f64,
    pub nu: f64,
}

impl SaturationModel {
    pub fn eval(&self, n: f64) -> f64 {
        self.beta - self.delta / (1.0 + self.c * n.powf(self.nu))
    }

    /// d β_eff / dN, analytic.
    pub fn derivative(&self, n: f64) -> f64 {
        let t = 1.0 + self.c * n.powf(self.nu);
        self.delta * self.c * self.nu * n.powf(self.nu - 1.0) / (t * t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationFit {
    pub model: SaturationModel,
    pub residual_norm_sq: f64,
    pub converged: bool,
}

/// Fit the saturation law to measured exponents.
///
/// Points are weighted by `1/std_err` when every point carries a positive
/// error, otherwise unweighted.  `fix_beta` pins the plateau to a known
/// tail exponent and fits only `(Δ, c, ν)`.
pub fn fit_saturation(points: &[BetaEffPoint], fix_beta: Option<f64>) -> Result<SaturationFit> {
    let free = if fix_beta.is_some() { 3 } else { 4 };
    if points.len() <= free {
        return Err(Error::Config(format!(
            "saturation fit needs more than {free} points, got {}",
            points.len()
        )));
    }
    if let Some(b) = fix_beta {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Config(format!("fixed plateau must be positive, got {b}")));
        }
    }
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.beta_eff).collect();
    if ns.iter().any(|&n| n < 1.0) || ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("saturation fit needs N >= 1 and finite exponents".into()));
    }
    let weights: Vec<f64> = if points.iter().all(|p| p.std_err > 0.0) {
        points.iter().map(|p| 1.0 / p.std_err).collect()
    } else {
        vec![1.0; points.len()]
    };

    let y_hi = ys.iter().cloned().fold(f64::MIN, f64::max);
    let y_lo = ys.iter().cloned().fold(f64::MAX, f64::min);
    if y_hi <= 0.0 {
        return Err(Error::Domain(format!(
            "measured exponents peak at {y_hi}; saturation plateau must be positive"
        )));
    }
    let mut n_sorted = ns.clone();
    n_sorted.sort_by(f64::total_cmp);
    let n_med = n_sorted[n_sorted.len() / 2];

    let beta0 = fix_beta.unwrap_or(1.02 * y_hi);
    let delta0 = (beta0 - y_lo).max(0.05 * beta0);
    let mut starts = Vec::new();
    for nu0 in [0.5, 1.0, 1.5, 2.0] {
        for scale in [1.0, 10.0] {
            starts.push((delta0, scale / n_med.powf(nu0), nu0));
        }
    }

    let model_of = |p: &DVector<f64>| -> SaturationModel {
        let off = usize::from(fix_beta.is_none());
        SaturationModel {
            beta: fix_beta.unwrap_or_else(|| p[0].exp()),
            delta: p[off].exp(),
            c: p[off + 1].exp(),
            nu: p[off + 2].exp(),
        }
    };

    let mut best: Option<SaturationFit> = None;
    for (d0, c0, nu0) in starts {
        let mut init = Vec::new();
        if fix_beta.is_none() {
            init.push(beta0.ln());
        }
        init.extend_from_slice(&[d0.ln(), c0.ln(), nu0.ln()]);
        let (ns_c, ys_c, ws_c) = (ns.clone(), ys.clone(), weights.clone());
        let fit = levenberg_marquardt(
            move |p| {
                let m = model_of(p);
                DVector::from_iterator(
                    ns_c.len(),
                    ns_c.iter()
                        .zip(&ys_c)
                        .zip(&ws_c)
                        .map(|((&n, &y), &w)| w * (m.eval(n) - y)),
                )
            },
            DVector::from_column_slice(&init),
            &LmOptions::default(),
        )?;
        let candidate = SaturationFit {
            model: model_of(&fit.params),
            residual_norm_sq: fit.residual_norm_sq,
            converged: fit.converged,
        };
        if !candidate.residual_norm_sq.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => {
                (b.converged, -b.residual_norm_sq) < (candidate.converged, -candidate.residual_norm_sq)
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| Error::Numerical("every saturation fit start diverged".into()))
}

/// `F(k) = P_base·k^{−β} + P_extra·k^{−γ}`, all parameters positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTailModel {
    pub p_base: f64,
    pub beta: f64,
    pub p_extra: f64,
    pub gamma: f64,
}

impl TwoTailModel {
    pub fn eval(&self, k: f64) -> f64 {
        self.p_base * k.powf(-self.beta) + self.p_extra * k.powf(-self.gamma)
    }
}

#[derive(Debug, Clone)]
pub struct TwoTailFit {
    pub model: TwoTailModel,
    pub residual_norm_sq: f64,
    pub converged: bool,
    /// The two recovered exponents are within 0.1 of each other, so the
    /// split between the tails is not identified.
    pub degenerate: bool,
}

/// Fit the two-tail decomposition to a failure curve on log-residuals.
///
/// `fixed_base` pins `(P_base, β)` — typically to the analytic bias-free
/// tail — and fits only the excess tail `(P_extra, γ)`.
pub fn fit_two_tail(
    k_grid: &[u64],
    failure: &[f64],
    fixed_base: Option<(f64, f64)>,
) -> Result<TwoTailFit> {
    if k_grid.len() != failure.len() {
        return Err(Error::Dimension(format!(
            "{} grid points vs {} failure values",
            k_grid.len(),
            failure.len()
        )));
    }
    if let Some((p, b)) = fixed_base {
        if !(p > 0.0 && b > 0.0 && p.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!(
                "fixed base tail needs positive finite parameters, got ({p}, {b})"
            )));
        }
    }
    let mut ks = Vec::new();
    let mut fs = Vec::new();
    for (&k, &f) in k_grid.iter().zip(failure) {
        if k >= 1 && f > 0.0 && f.is_finite() {
            ks.push(k as f64);
            fs.push(f);
        }
    }
    let free = if fixed_base.is_some() { 2 } else { 4 };
    if ks.len() <= free {
        return Err(Error::Config(format!(
            "two-tail fit needs more than {free} usable points, got {}",
            ks.len()
        )));
    }

    // Initial exponents from log-log lines over the two ends of the grid:
    // the steeper tail dominates small k, the shallower one large k.
    let third = (ks.len() / 3).max(2);
    let (s_head, i_head) = log_log_fit(&ks[..third], &fs[..third])?;
    let (s_tail, i_tail) = log_log_fit(&ks[ks.len() - third..], &fs[ks.len() - third..])?;
    let head = ((-s_head).max(0.05), i_head.exp());
    let tail = ((-s_tail).max(0.05), i_tail.exp());

    let model_of = move |p: &DVector<f64>| -> TwoTailModel {
        match fixed_base {
            Some((pb, b)) => TwoTailModel {
                p_base: pb,
                beta: b,
                p_extra: p[0].exp(),
                gamma: p[1].exp(),
            },
            None => TwoTailModel {
                p_base: p[0].exp(),
                beta: p[1].exp(),
                p_extra: p[2].exp(),
                gamma: p[3].exp(),
            },
        }
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    match fixed_base {
        Some((pb, b)) => {
            // Excess over the fixed base, for a data-driven starting line.
            let mut eks = Vec::new();
            let mut efs = Vec::new();
            for (&k, &f) in ks.iter().zip(&fs) {
                let excess = f - pb * k.powf(-b);
                if excess > 0.0 {
                    eks.push(k);
                    efs.push(excess);
                }
            }
            if eks.len() >= 2 {
                if let Ok((s, i)) = log_log_fit(&eks, &efs) {
                    let g = (-s).max(0.05);
                    starts.push(vec![i, g.ln()]);
                }
            }
            let k_mid = ks[ks.len() / 2];
            let f_mid = fs[fs.len() / 2];
            for g in [0.5 * b, 0.25 * b, 1.0, 2.0] {
                // Match the excess term to the curve midpoint.
                let p0 = (f_mid * k_mid.powf(g)).max(1e-30);
                starts.push(vec![p0.ln(), g.ln()]);
            }
        }
        None => {
            for (b, pb) in [head, (head.0 * 1.3, head.1), (head.0, head.1 * 3.0)] {
                for (g, pg) in [tail, (tail.0 * 0.7, tail.1)] {
                    starts.push(vec![pb.ln(), b.ln(), pg.ln(), g.ln()]);
                }
            }
            starts.push(vec![
                head.1.ln(),
                head.0.ln(),
                (0.1 * tail.1).max(1e-30).ln(),
                (0.5 * tail.0).max(0.05).ln(),
            ]);
        }
    }

    let lfs: Vec<f64> = fs.iter().map(|v| v.ln()).collect();
    let mut best: Option<TwoTailFit> = None;
    for init in starts {
        let (ks_c, lfs_c) = (ks.clone(), lfs.clone());
        let fit = levenberg_marquardt(
            move |p| {
                let m = model_of(p);
                DVector::from_iterator(
                    ks_c.len(),
                    ks_c.iter().zip(&lfs_c).map(|(&k, &lf)| {
                        let v = m.eval(k);
                        if v > 0.0 {
                            v.ln() - lf
                        } else {
                            1e6
                        }
                    }),
                )
            },
            DVector::from_column_slice(&init),
            &LmOptions::default(),
        )?;
        let model = model_of(&fit.params);
        let candidate = TwoTailFit {
            degenerate: (model.beta - model.gamma).abs() < 0.1,
            model,
            residual_norm_sq: fit.residual_norm_sq,
            converged: fit.converged,
        };
        if !candidate.residual_norm_sq.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => {
                (b.converged, -b.residual_norm_sq) < (candidate.converged, -candidate.residual_norm_sq)
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| Error::Numerical("every two-tail fit start diverged".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::DifficultyConfig;
    use crate::passk::{
        asymptotic_failure_oracle, sample_importance_precisions, DEFAULT_TAU_MAX, DEFAULT_TAU_MIN,
    };

    fn close(got: f64, want: f64, tol: f64) {
        assert!((got - want).abs() <= tol, "got {got}, want {want}");
    }

    #[test]
    fn log_log_fit_recovers_exact_power_law() {
        let x: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.7 * v.powf(-2.25)).collect();
        let (slope, intercept) = log_log_fit(&x, &y).unwrap();
        close(slope, -2.25, 1e-12);
        close(intercept.exp(), 3.7, 1e-12);
        assert!(log_log_slope(&x[..1], &y[..1]).is_err());
        assert!(log_log_slope(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(log_log_slope(&[1.0, -2.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn middle_third_window_of_decade_grid() {
        let grid: Vec<u64> = vec![1, 5, 10, 100, 2000, 10_000];
        let w = SlopeWindow::middle_log_third(&grid).unwrap();
        close(w.k_lo, 21.544346900318832, 1e-12);
        close(w.k_hi, 464.15888336127786, 1e-10);
        assert!(w.contains(100));
        assert!(!w.contains(10));
        assert!(SlopeWindow::middle_log_third(&[7]).is_err());
        assert!(SlopeWindow::new(5.0, 2.0).is_err());
    }

    #[test]
    fn shifted_window_moves_half_a_decade_and_stays_on_grid() {
        let grid: Vec<u64> = vec![1, 10, 100, 1000, 10_000];
        let w = SlopeWindow::middle_log_third(&grid).unwrap();
        let up = w.shifted(&grid).unwrap();
        let s = 10f64.sqrt();
        close(up.k_lo, w.k_lo * s, 1e-10);
        close(up.k_hi, w.k_hi * s, 1e-9);
        assert!(up.k_hi <= 10_000.0);

        // No room above: the shift goes downward instead.
        let cramped = SlopeWindow::new(400.0, 9000.0).unwrap();
        let down = cramped.shifted(&grid).unwrap();
        close(down.k_lo, 400.0 / s, 1e-10);

        // No room on either side.
        let narrow: Vec<u64> = vec![1, 3, 10];
        let w = SlopeWindow::new(1.5, 7.0).unwrap();
        assert!(w.shifted(&narrow).is_err());
    }

    #[test]
    fn exponent_of_exact_power_law_is_exact() {
        let grid: Vec<u64> = (0..30).map(|i| (10f64.powf(i as f64 / 7.0)) as u64).collect();
        let mut grid = grid;
        grid.dedup();
        let failure: Vec<f64> = grid.iter().map(|&k| 5.0 * (k as f64).powf(-3.0)).collect();
        let w = SlopeWindow::middle_log_third(&grid).unwrap();
        for method in [SlopeMethod::TwoPoint, SlopeMethod::LeastSquares] {
            let b = effective_exponent(&grid, &failure, &w, method).unwrap();
            close(b, 3.0, 1e-12);
        }
    }

    #[test]
    fn exponent_of_mixed_tails_sits_between_them() {
        let grid: Vec<u64> = (0..40)
            .map(|i| (10f64.powf(i as f64 * 4.0 / 39.0)).round() as u64)
            .collect();
        let mut grid = grid;
        grid.dedup();
        let failure: Vec<f64> = grid
            .iter()
            .map(|&k| {
                let k = k as f64;
                100.0 * k.powf(-3.0) + 0.01 * k.powf(-1.0)
            })
            .collect();
        let w = SlopeWindow::middle_log_third(&grid).unwrap();
        let b = effective_exponent(&grid, &failure, &w, SlopeMethod::LeastSquares).unwrap();
        assert!(b > 1.0 && b < 3.0, "mixed exponent {b}");
    }

    #[test]
    fn rejects_nonpositive_failure_in_window() {
        let grid = vec![10u64, 40, 100, 400];
        let failure = vec![0.5, 0.1, 0.0, 1e-3];
        let w = SlopeWindow::new(20.0, 500.0).unwrap();
        assert!(effective_exponent(&grid, &failure, &w, SlopeMethod::TwoPoint).is_err());
    }

    #[test]
    fn bootstrap_tracks_oracle_window_slope() {
        let (beta, delta, sigma) = (3.0, 0.05, 1.0);
        let difficulty = DifficultyConfig::new(beta, sigma).unwrap();
        let mut rng = stream_rng(21, Domain::TestInstances, 0, 0);
        let sample = sample_importance_precisions(
            &difficulty,
            40_000,
            DEFAULT_TAU_MIN,
            DEFAULT_TAU_MAX,
            &mut rng,
        )
        .unwrap();
        let trials: Vec<InstanceTrial> = sample
            .precisions
            .iter()
            .map(|&t| InstanceTrial::from_precision(0.0, t, sigma))
            .collect();
        let grid: Vec<u64> = vec![1, 3, 10, 22, 46, 100, 215, 464, 1000, 2154, 4641, 10_000];
        let w = SlopeWindow::middle_log_third(&grid).unwrap();
        let tol = ToleranceConfig::new(delta).unwrap();
        let est = bootstrap_exponent(
            &trials,
            Some(&sample.weights),
            &tol,
            &grid,
            &w,
            SlopeMethod::LeastSquares,
            200,
            21,
            0,
        )
        .unwrap();

        let oracle_pts: Vec<f64> = grid
            .iter()
            .filter(|&&k| w.contains(k))
            .map(|&k| asymptotic_failure_oracle(k, beta, delta, sigma).unwrap())
            .collect();
        let oracle_ks: Vec<f64> = grid
            .iter()
            .filter(|&&k| w.contains(k))
            .map(|&k| k as f64)
            .collect();
        let want = -log_log_slope(&oracle_ks, &oracle_pts).unwrap();
        assert!(
            (est.beta_eff - want).abs() <= 4.0 * est.std_err + 0.02,
            "bootstrap {} ± {} vs oracle window slope {want}",
            est.beta_eff,
            est.std_err
        );
        assert!(est.std_err > 0.0 && est.std_err < 0.2);
        assert_eq!(est.discarded_resamples, 0);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let trials: Vec<InstanceTrial> = (0..200)
            .map(|i| InstanceTrial::from_precision(0.0, 0.05 + i as f64 * 0.02, 1.0))
            .collect();
        let tol = ToleranceConfig::new(0.1).unwrap();
        let grid: Vec<u64> = vec![1, 3, 10, 30, 100, 300, 1000];
        let w = SlopeWindow::new(5.0, 200.0).unwrap();
        let run = || {
            bootstrap_exponent(
                &trials,
                None,
                &tol,
                &grid,
                &w,
                SlopeMethod::TwoPoint,
                50,
                5,
                3,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.beta_eff.to_bits(), b.beta_eff.to_bits());
        assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
    }

    fn synth_points(model: &SaturationModel, ns: &[usize], noise: f64) -> Vec<BetaEffPoint> {
        ns.iter()
            .enumerate()
            .map(|(i, &n)| BetaEffPoint {
                n,
                // Deterministic low-discrepancy "noise" so the test is stable.
                beta_eff: model.eval(n as f64) + noise * ((i as f64 * 2.399963).sin()),
                std_err: if noise > 0.0 { noise } else { 0.0 },
            })
            .collect()
    }

    #[test]
    fn saturation_fit_recovers_exact_parameters() {
        let truth = SaturationModel {
            beta: 4.0,
            delta: 2.5,
            c: 0.02,
            nu: 1.2,
        };
        let ns: Vec<usize> = (3..=11).map(|e| 1usize << e).collect();
        let fit = fit_saturation(&synth_points(&truth, &ns, 0.0), None).unwrap();
        assert!(fit.converged);
        for (got, want) in [
            (fit.model.beta, truth.beta),
            (fit.model.delta, truth.delta),
            (fit.model.c, truth.c),
            (fit.model.nu, truth.nu),
        ] {
            assert!(
                ((got - want) / want).abs() < 1e-4,
                "recovered {got} vs {want}"
            );
        }
    }

    #[test]
    fn saturation_fit_with_pinned_plateau() {
        let truth = SaturationModel {
            beta: 3.0,
            delta: 1.8,
            c: 0.15,
            nu: 0.8,
        };
        let ns: Vec<usize> = (2..=10).map(|e| 1usize << e).collect();
        let fit = fit_saturation(&synth_points(&truth, &ns, 0.0), Some(3.0)).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.model.beta, 3.0);
        assert!(((fit.model.delta - truth.delta) / truth.delta).abs() < 1e-4);
        assert!(((fit.model.nu - truth.nu) / truth.nu).abs() < 1e-4);
    }

    #[test]
    fn saturation_fit_survives_noise() {
        let truth = SaturationModel {
            beta: 4.0,
            delta: 2.0,
            c: 0.05,
            nu: 1.0,
        };
        let ns: Vec<usize> = (2..=12).map(|e| 1usize << e).collect();
        let fit = fit_saturation(&synth_points(&truth, &ns, 0.02), None).unwrap();
        assert!(((fit.model.beta - truth.beta) / truth.beta).abs() < 0.05);
        assert!(((fit.model.nu - truth.nu) / truth.nu).abs() < 0.25);
    }

    #[test]
    fn saturation_derivative_matches_finite_difference() {
        let m = SaturationModel {
            beta: 4.0,
            delta: 2.5,
            c: 0.02,
            nu: 1.2,
        };
        for n in [5.0, 50.0, 500.0] {
            let h = 1e-4 * n;
            let fd = (m.eval(n + h) - m.eval(n - h)) / (2.0 * h);
            let an = m.derivative(n);
            assert!(
                ((an - fd) / fd).abs() < 1e-6,
                "derivative at {n}: analytic {an}, fd {fd}"
            );
        }
    }

    #[test]
    fn saturation_fit_rejects_tiny_inputs() {
        let truth = SaturationModel {
            beta: 4.0,
            delta: 2.5,
            c: 0.02,
            nu: 1.2,
        };
        let pts = synth_points(&truth, &[8, 16, 32], 0.0);
        assert!(fit_saturation(&pts, None).is_err());
    }

    #[test]
    fn two_tail_fit_recovers_exact_mixture() {
        let truth = TwoTailModel {
            p_base: 7e4,
            beta: 3.0,
            p_extra: 20.0,
            gamma: 1.2,
        };
        let grid: Vec<u64> = (0..25)
            .map(|i| 10f64.powf(i as f64 * 6.0 / 24.0).round() as u64)
            .collect();
        let mut grid = grid;
        grid.dedup();
        let failure: Vec<f64> = grid.iter().map(|&k| truth.eval(k as f64)).collect();
        let fit = fit_two_tail(&grid, &failure, None).unwrap();
        assert!(fit.converged);
        assert!(!fit.degenerate);
        assert!(((fit.model.beta - truth.beta) / truth.beta).abs() < 1e-3);
        assert!(((fit.model.gamma - truth.gamma) / truth.gamma).abs() < 1e-3);
        assert!(((fit.model.p_base - truth.p_base) / truth.p_base).abs() < 1e-2);
        assert!(((fit.model.p_extra - truth.p_extra) / truth.p_extra).abs() < 1e-2);
    }

    #[test]
    fn two_tail_fit_with_pinned_base() {
        let truth = TwoTailModel {
            p_base: 7e4,
            beta: 3.0,
            p_extra: 5.0,
            gamma: 0.9,
        };
        let grid: Vec<u64> = (0..25)
            .map(|i| 10f64.powf(i as f64 * 6.0 / 24.0).round() as u64)
            .collect();
        let mut grid = grid;
        grid.dedup();
        let failure: Vec<f64> = grid.iter().map(|&k| truth.eval(k as f64)).collect();
        let fit = fit_two_tail(&grid, &failure, Some((truth.p_base, truth.beta))).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.model.p_base, truth.p_base);
        assert!(((fit.model.gamma - truth.gamma) / truth.gamma).abs() < 1e-6);
        assert!(((fit.model.p_extra - truth.p_extra) / truth.p_extra).abs() < 1e-5);
    }

    #[test]
    fn two_tail_fit_flags_indistinguishable_exponents() {
        let grid: Vec<u64> = (0..20)
            .map(|i| 10f64.powf(i as f64 * 5.0 / 19.0).round() as u64)
            .collect();
        let mut grid = grid;
        grid.dedup();
        // A pure power law: any split the fitter finds must either flag
        // degeneracy or park the extra tail at negligible weight.
        let failure: Vec<f64> = grid.iter().map(|&k| 50.0 * (k as f64).powf(-2.0)).collect();
        let fit = fit_two_tail(&grid, &failure, None).unwrap();
        assert!(
            fit.degenerate || fit.model.p_extra < 1e-3 * fit.model.p_base,
            "exponents {} / {}, prefactors {} / {}",
            fit.model.beta,
            fit.model.gamma,
            fit.model.p_base,
            fit.model.p_extra
        );
    }
}
