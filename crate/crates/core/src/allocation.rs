//! Compute-budget allocation between training and repeated attempts.
//!
//! A budget `C` buys `N = Ñ/c_N` training examples and `k = (C−Ñ)/c_k`
//! attempts per instance.  The end-to-end loss combines a training-error
//! power law with the attempt-failure power law, whose exponent improves
//! with `N`:
//!
//! ```text
//! L(Ñ) = R·P_N·(Ñ/c_N)^{−γ}  +  P̃·((C−Ñ)/c_k)^{−β_eff(N)}
//! ```
//!
//! Three optimisers are provided and cross-checked in the tests: a
//! log-spaced grid scan refined by golden-section search (derivative
//! free), bisection on the analytic first-order condition, and the same
//! bisection with the exponent-drift term `dβ_eff/dN` dropped — the
//! quasi-static approximation, which prices attempts at the current
//! exponent and ignores that training also steepens the attempt curve.

use crate::error::{Error, Result};
use crate::expfit::{BetaEffPoint, SaturationModel};
use crate::parallel;

/// Measured exponent table, interpolated linearly in `ln N` and clamped
/// at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredBetaEff {
    log_ns: Vec<f64>,
    betas: Vec<f64>,
}

impl MeasuredBetaEff {
    pub fn new(points: &[BetaEffPoint]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config(format!(
                "measured exponent table needs at least 2 points, got {}",
                points.len()
            )));
        }
        let mut sorted: Vec<(f64, f64)> = points
            .iter()
            .map(|p| (p.n as f64, p.beta_eff))
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("measured exponent table has duplicate N".into()));
        }
        if sorted.iter().any(|&(n, b)| n < 1.0 || !b.is_finite()) {
            return Err(Error::Domain(
                "measured exponent table needs N >= 1 and finite exponents".into(),
            ));
        }
        Ok(Self {
            log_ns: sorted.iter().map(|p| p.0.ln()).collect(),
            betas: sorted.iter().map(|p| p.1).collect(),
        })
    }

    pub fn eval(&self, n: f64) -> f64 {
        let x = n.max(1.0).ln();
        if x <= self.log_ns[0] {
            return self.betas[0];
        }
        if x >= *self.log_ns.last().unwrap() {
            return *self.betas.last().unwrap();
        }
        let i = self.log_ns.partition_point(|&v| v < x).max(1);
        let (x0, x1) = (self.log_ns[i - 1], self.log_ns[i]);
        let (y0, y1) = (self.betas[i - 1], self.betas[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Central difference of the interpolant; inside a segment this is the
    /// exact segment slope.
    pub fn derivative(&self, n: f64) -> f64 {
        let h = 1e-4 * n.max(1.0);
        (self.eval(n + h) - self.eval(n - h)) / (2.0 * h)
    }
}

/// How the attempt-failure exponent responds to training-set size.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaEffModel {
    /// Training does not move the exponent.
    Constant(f64),
    /// Fitted saturation law with an analytic derivative.
    Saturation(SaturationModel),
    /// Interpolated measurements with a finite-difference derivative.
    Measured(MeasuredBetaEff),
}

impl BetaEffModel {
    pub fn eval(&self, n: f64) -> f64 {
        match self {
            Self::Constant(b) => *b,
            Self::Saturation(m) => m.eval(n),
            Self::Measured(m) => m.eval(n),
        }
    }

    pub fn derivative(&self, n: f64) -> f64 {
        match self {
            Self::Constant(_) => 0.0,
            Self::Saturation(m) => m.derivative(n),
            Self::Measured(m) => m.derivative(n),
        }
    }
}

/// Loss model and prices for one allocation run.
#[derive(Debug, Clone)]
pub struct AllocationProblem {
    /// Total budget `C` in cost units.
    pub budget: f64,
    /// Cost `c_N` of one training example.
    pub cost_train: f64,
    /// Cost `c_k` of one attempt.
    pub cost_attempt: f64,
    /// Relative weight `R` of the training-error term.
    pub train_weight: f64,
    /// Training-error law `P_N·N^{−γ}`.
    pub train_prefactor: f64,
    pub train_exponent: f64,
    /// Attempt-failure prefactor `P̃`.
    pub infer_prefactor: f64,
    pub beta_eff: BetaEffModel,
}

/// Fraction of the budget the optimisers keep away from either edge, so
/// both `N ≥ 1`-ish and `k ≥ 1`-ish stay meaningful.
pub const EDGE_FRACTION: f64 = 1e-4;

/// An optimiser's answer: the training spend and what it buys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationSolution {
    /// Training spend `Ñ` in cost units.
    pub n_tilde: f64,
    /// Training examples `Ñ/c_N`.
    pub n_train: f64,
    /// Attempts `(C−Ñ)/c_k`.
    pub k: f64,
    pub total_loss: f64,
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("budget", self.budget),
            ("cost_train", self.cost_train),
            ("cost_attempt", self.cost_attempt),
            ("train_prefactor", self.train_prefactor),
            ("train_exponent", self.train_exponent),
            ("infer_prefactor", self.infer_prefactor),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "allocation {name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.train_weight >= 0.0 && self.train_weight.is_finite()) {
            return Err(Error::Config(format!(
                "allocation train_weight must be nonnegative, got {}",
                self.train_weight
            )));
        }
        Ok(())
    }

    fn check_interior(&self, n_tilde: f64) -> Result<()> {
        if !(n_tilde > 0.0 && n_tilde < self.budget) {
            return Err(Error::Domain(format!(
                "training spend {n_tilde} outside (0, {})",
                self.budget
            )));
        }
        Ok(())
    }

    pub fn solution_at(&self, n_tilde: f64) -> Result<AllocationSolution> {
        Ok(AllocationSolution {
            n_tilde,
            n_train: n_tilde / self.cost_train,
            k: (self.budget - n_tilde) / self.cost_attempt,
            total_loss: self.total_loss(n_tilde)?,
        })
    }

    pub fn total_loss(&self, n_tilde: f64) -> Result<f64> {
        self.check_interior(n_tilde)?;
        let n = n_tilde / self.cost_train;
        let k = (self.budget - n_tilde) / self.cost_attempt;
        let beta = self.beta_eff.eval(n);
        let train = self.train_weight * self.train_prefactor * n.powf(-self.train_exponent);
        let infer = self.infer_prefactor * (-beta * k.ln()).exp();
        Ok(train + infer)
    }

    fn derivative_inner(&self, n_tilde: f64, with_drift: bool) -> Result<f64> {
        self.check_interior(n_tilde)?;
        let n = n_tilde / self.cost_train;
        let remaining = self.budget - n_tilde;
        let k = remaining / self.cost_attempt;
        let beta = self.beta_eff.eval(n);
        let train = self.train_weight * self.train_prefactor * n.powf(-self.train_exponent);
        let infer = self.infer_prefactor * (-beta * k.ln()).exp();
        // d/dÑ of the training term.
        let d_train = -self.train_exponent * train / n_tilde;
        // d/dÑ of the attempt term: shrinking k raises it by β/(C−Ñ);
        // growing N steepens the exponent, worth −β'(N)·ln(k)/c_N.
        let mut d_infer = infer * beta / remaining;
        if with_drift {
            d_infer -= infer * self.beta_eff.derivative(n) * k.ln() / self.cost_train;
        }
        Ok(d_train + d_infer)
    }

    /// Analytic `dL/dÑ` including the exponent-drift term.
    pub fn loss_derivative(&self, n_tilde: f64) -> Result<f64> {
        self.derivative_inner(n_tilde, true)
    }

    /// `dL/dÑ` with the exponent treated as frozen at its current value.
    pub fn quasistatic_derivative(&self, n_tilde: f64) -> Result<f64> {
        self.derivative_inner(n_tilde, false)
    }

    fn bisect(&self, with_drift: bool) -> Result<AllocationSolution> {
        self.validate()?;
        let mut a = EDGE_FRACTION * self.budget;
        let mut b = (1.0 - EDGE_FRACTION) * self.budget;
        let ga = self.derivative_inner(a, with_drift)?;
        let gb = self.derivative_inner(b, with_drift)?;
        // No interior sign change: the derivative is one-signed, so the
        // optimum sits at the cheaper edge.
        if ga >= 0.0 && gb >= 0.0 {
            return self.solution_at(a);
        }
        if ga <= 0.0 && gb <= 0.0 {
            return self.solution_at(b);
        }
        let tol = 1e-8 * self.budget;
        let left_negative = ga < 0.0;
        while b - a > tol {
            let mid = 0.5 * (a + b);
            let gm = self.derivative_inner(mid, with_drift)?;
            if (gm < 0.0) == left_negative {
                a = mid;
            } else {
                b = mid;
            }
        }
        self.solution_at(0.5 * (a + b))
    }

    /// Root of the analytic first-order condition, bisected to
    /// `1e-8·budget`.
    pub fn solve_foc(&self) -> Result<AllocationSolution> {
        self.bisect(true)
    }

    /// Root of the quasi-static first-order condition.
    pub fn solve_quasistatic(&self) -> Result<AllocationSolution> {
        self.bisect(false)
    }

    /// Derivative-free reference optimiser: log-spaced grid scan over the
    /// interior, then golden-section refinement around the best cell down
    /// to `1e-6·budget`.
    pub fn solve_grid(&self, grid_points: usize) -> Result<AllocationSolution> {
        self.validate()?;
        if grid_points < 3 {
            return Err(Error::Config(format!(
                "grid scan needs at least 3 points, got {grid_points}"
            )));
        }
        let lo = EDGE_FRACTION * self.budget;
        let hi = (1.0 - EDGE_FRACTION) * self.budget;
        let (lls, llh) = (lo.ln(), hi.ln());
        let pts: Vec<f64> = (0..grid_points)
            .map(|i| (lls + (llh - lls) * i as f64 / (grid_points - 1) as f64).exp())
            .collect();
        let losses = parallel::ordered_map(&pts, |&p| self.total_loss(p));
        let mut best = 0usize;
        let mut best_loss = f64::INFINITY;
        for (i, l) in losses.iter().enumerate() {
            let l = *l.as_ref().map_err(|e| Error::Numerical(e.to_string()))?;
            if l < best_loss {
                best_loss = l;
                best = i;
            }
        }
        let a = pts[best.saturating_sub(1)];
        let b = pts[(best + 1).min(pts.len() - 1)];
        let n_tilde = self.golden_section(a, b)?;
        self.solution_at(n_tilde)
    }

    fn golden_section(&self, mut a: f64, mut b: f64) -> Result<f64> {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let tol = 1e-6 * self.budget;
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = self.total_loss(c)?;
        let mut fd = self.total_loss(d)?;
        while b - a > tol {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = self.total_loss(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = self.total_loss(d)?;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// One point of the budget/weight trade-off surface, solved three ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub budget: f64,
    pub train_weight: f64,
    pub n_tilde_grid: f64,
    pub n_tilde_foc: f64,
    pub n_tilde_quasistatic: f64,
    /// Attempts bought at the grid optimum.
    pub k_opt: f64,
    /// Loss at the grid optimum.
    pub total_loss: f64,
}

/// Solve the allocation across a grid of budgets and training weights.
pub fn tradeoff_surface(
    base: &AllocationProblem,
    budgets: &[f64],
    train_weights: &[f64],
    grid_points: usize,
) -> Result<Vec<SurfaceRow>> {
    base.validate()?;
    if budgets.is_empty() || train_weights.is_empty() {
        return Err(Error::Config("trade-off surface needs budgets and weights".into()));
    }
    let combos: Vec<(f64, f64)> = budgets
        .iter()
        .flat_map(|&c| train_weights.iter().map(move |&r| (c, r)))
        .collect();
    parallel::ordered_map(&combos, |&(c, r)| {
        let mut problem = base.clone();
        problem.budget = c;
        problem.train_weight = r;
        let grid = problem.solve_grid(grid_points)?;
        let foc = problem.solve_foc()?;
        let qs = problem.solve_quasistatic()?;
        Ok(SurfaceRow {
            budget: c,
            train_weight: r,
            n_tilde_grid: grid.n_tilde,
            n_tilde_foc: foc.n_tilde,
            n_tilde_quasistatic: qs.n_tilde,
            k_opt: grid.k,
            total_loss: grid.total_loss,
        })
    })
    .into_iter()
    .collect()
}
