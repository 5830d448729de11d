//! Best-response computation.
//!
//! A user's best response maximizes its energy efficiency against fixed
//! opponents. Three routes are provided:
//!
//! * `allocation_for_h` evaluates the closed-form allocation family indexed
//!   by a marginal-utility level `h` (exact inversion of the per-mode
//!   stationarity equation when nt = nr, pseudo-inverse linearization
//!   otherwise);
//! * `bisect_h` searches that family for the best `h` with a three-probe
//!   bisection that exploits unimodality of the utility in `h`;
//! * `exact_br` polishes the bisection output to a true stationary point of
//!   the per-mode marginal equation, clamping modes whose unconstrained
//!   level would go negative and water-filling on the budget face when the
//!   budget binds.

use num_complex::Complex;

use crate::channel::ChannelDecomposition;
use crate::error::{Error, Result};
use crate::game::{
    utility_given_interference, ActionProfile, GameConfig, PowerAllocation,
};
use crate::matrix::{pinv_rect_diag, ComplexMatrix};
use crate::scalar::Scalar;

/// Relative cutoff below which a channel mode counts as rank deficient.
pub const RANK_CUTOFF: f64 = 1e-12;
/// Stationarity residual a polished best response must reach on free modes.
pub const STATIONARITY_TOL: f64 = 1e-6;

/// Tunables for the best-response search.
#[derive(Debug, Clone, PartialEq)]
pub struct BrSettings<S> {
    /// Upper end of the bisection interval; `None` derives the per-user
    /// bound `max_i lambda_i^2 / noise`, which no marginal can exceed.
    pub h_max: Option<S>,
    /// Width tolerance of the bisection interval.
    pub eps1: S,
    /// Iteration cap for the bisection and the polish loop.
    pub inner_max_iters: usize,
    /// Cap on clamp/re-add rounds while restricting the active set.
    pub active_set_max_rounds: usize,
    /// Points per axis for the projected-grid fallback.
    pub grid_fallback_points: usize,
}

impl<S: Scalar> Default for BrSettings<S> {
    fn default() -> Self {
        Self {
            h_max: None,
            eps1: S::real(1e-3),
            inner_max_iters: 200,
            active_set_max_rounds: 8,
            grid_fallback_points: 200,
        }
    }
}

impl<S: Scalar> BrSettings<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > S::zero()) {
            return Err(Error::InvalidConfig {
                field: "eps1",
                message: "must be positive".into(),
            });
        }
        if let Some(h) = self.h_max {
            if !(h > self.eps1) {
                return Err(Error::InvalidConfig {
                    field: "h_max",
                    message: "must exceed eps1".into(),
                });
            }
        }
        Ok(())
    }
}

/// Default bisection upper bound: no diagonal entry of the stationarity
/// equation can exceed the best mode gain over the noise floor.
pub fn default_h_max<S: Scalar>(dec: &ChannelDecomposition<S>, noise: S) -> S {
    let top = dec.factors.sigma.first().copied().unwrap_or(S::zero());
    top * top / noise
}

/// Which route produced a best response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrMethod {
    /// Stationary point of the marginal equation on the final active set.
    ExactFixedPoint,
    /// Bisection over the exact closed form (nt = nr).
    ClosedFormH,
    /// Bisection over the pseudo-inverse linearization (nt != nr).
    PinvApproxH,
    /// Projected grid search plus coordinate ascent; used when the
    /// fixed-point polish failed its post-verification.
    GridFallback,
}

/// Diagnostics that do not invalidate a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrWarning {
    /// The three-probe pattern contradicted unimodality at some step.
    NonUnimodalSequence,
    /// The search terminated against the configured upper bound.
    HMaxBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrResult<S> {
    pub allocation: PowerAllocation<S>,
    pub utility_at_br: S,
    /// Modes carrying positive power in the returned allocation.
    pub active_set: Vec<usize>,
    pub method: BrMethod,
    /// Max-norm violation of the per-mode stationarity equation on the
    /// active set.
    pub residual: S,
    /// The returned allocation spends the whole budget.
    pub budget_bound: bool,
    pub warnings: Vec<BrWarning>,
}

/// Frozen view of one user's optimization problem: everything the search
/// needs, with the interference matrix computed once.
struct BrProblem<'a, S> {
    cfg: &'a GameConfig<S>,
    dec: &'a ChannelDecomposition<S>,
    interference: ComplexMatrix<S>,
    /// Real diagonal of the interference matrix.
    f_diag: Vec<S>,
    budget: S,
    /// Modes with usable gain (index below min(nt, nr), gain above cutoff).
    n_valid: usize,
}

impl<'a, S: Scalar> BrProblem<'a, S> {
    fn with_interference(
        cfg: &'a GameConfig<S>,
        dec: &'a ChannelDecomposition<S>,
        interference: ComplexMatrix<S>,
        k: usize,
    ) -> Result<Self> {
        let sigma = &dec.factors.sigma;
        let top = sigma.first().copied().unwrap_or(S::zero());
        let n_valid = cfg.nt.min(cfg.nr);
        if !(top > S::zero()) || sigma[..n_valid]
            .iter()
            .any(|&s| s <= top * S::real(RANK_CUTOFF))
        {
            return Err(Error::RankDeficientChannel { user: k });
        }
        let f_diag = interference.diagonal_re();
        Ok(Self {
            cfg,
            dec,
            interference,
            f_diag,
            budget: cfg.budgets[k],
            n_valid,
        })
    }

    fn build(
        cfg: &'a GameConfig<S>,
        dec: &'a ChannelDecomposition<S>,
        profile: &ActionProfile<S>,
        k: usize,
    ) -> Result<Self> {
        let interference = crate::game::interference_matrix(cfg, dec, profile, k)?;
        Self::with_interference(cfg, dec, interference, k)
    }

    fn gain(&self, mode: usize) -> S {
        self.dec.factors.sigma[mode]
    }

    /// Utility of a candidate level vector against the frozen opponents.
    fn utility(&self, levels: &[S]) -> S {
        utility_given_interference(self.cfg, self.dec, &self.interference, levels)
            .expect("noise-shifted covariance is positive definite")
    }

    /// Per-mode marginal rates `lambda_i^2 [M^{-1}]_{ii}` at the given
    /// levels, together with the inverse itself.
    fn marginals(&self, levels: &[S]) -> (Vec<S>, ComplexMatrix<S>) {
        let signal: Vec<S> = self
            .dec
            .factors
            .sigma
            .iter()
            .zip(levels)
            .map(|(&s, &p)| s * s * p)
            .collect();
        let m = self
            .interference
            .plus_real_diag(&vec![self.cfg.noise_power; self.cfg.nr])
            .plus_real_diag(&signal);
        let minv = m.inv_hpd().expect("noise-shifted covariance is positive definite");
        let g = (0..self.n_valid)
            .map(|i| {
                let lam = self.gain(i);
                lam * lam * minv.get(i, i).re
            })
            .collect();
        (g, minv)
    }

    /// Exact inversion of the stationarity equation at level `h`:
    /// `p_i = 1/h - (F_ii + noise) / lambda_i^2`. Valid when nt = nr.
    fn square_levels_for_h(&self, h: S) -> Vec<S> {
        (0..self.cfg.nt)
            .map(|i| {
                let lam = self.gain(i);
                S::one() / h - (self.f_diag[i] + self.cfg.noise_power) / (lam * lam)
            })
            .collect()
    }

    /// Pseudo-inverse linearization for the rectangular case, evaluated
    /// literally from the pseudo-inverse factors.
    fn pinv_levels_for_h(&self, h: S) -> Vec<S> {
        let nr = self.cfg.nr;
        let nt = self.cfg.nt;
        let pinv = pinv_rect_diag(&self.dec.factors.sigma, nr, nt);
        let pinv_h = pinv.adjoint();
        let gram = pinv_h.matmul(&pinv);
        let gram_diag = gram.diagonal_re();
        let top = gram_diag.iter().copied().fold(S::zero(), S::max);
        let gram_pinv = ComplexMatrix::from_fn(nr, nr, |i, j| {
            if i == j && gram_diag[i] > top * S::real(RANK_CUTOFF) && gram_diag[i] > S::zero() {
                Complex::new(S::one() / gram_diag[i], S::zero())
            } else {
                Complex::new(S::zero(), S::zero())
            }
        });
        let first = pinv.matmul(&gram_pinv).matmul(&pinv_h);
        let shifted = self
            .interference
            .plus_real_diag(&vec![self.cfg.noise_power; nr]);
        let second = pinv.matmul(&shifted).matmul(&pinv_h);
        (0..nt)
            .map(|i| first.get(i, i).re / h - second.get(i, i).re)
            .collect()
    }

    /// Closed-form family member for the level `h`, before clamping.
    fn raw_levels_for_h(&self, h: S) -> Vec<S> {
        if self.cfg.nt == self.cfg.nr {
            self.square_levels_for_h(h)
        } else {
            self.pinv_levels_for_h(h)
        }
    }

    /// Family member for `h`: clamp negatives, scale radially onto the
    /// budget. Returns the levels and whether scaling fired.
    fn levels_for_h(&self, h: S) -> (Vec<S>, bool) {
        let mut levels = self.raw_levels_for_h(h);
        for p in levels.iter_mut() {
            if !(*p > S::zero()) {
                *p = S::zero();
            }
        }
        let sum: S = levels.iter().copied().fold(S::zero(), |a, b| a + b);
        if sum > self.budget {
            let scale = self.budget / sum;
            for p in levels.iter_mut() {
                *p = *p * scale;
            }
            (levels, true)
        } else {
            (levels, false)
        }
    }

    /// Max-norm violation of the stationarity equation on the support.
    fn residual(&self, levels: &[S]) -> S {
        let u = self.utility(levels);
        let (g, _) = self.marginals(levels);
        let mut worst = S::zero();
        for (i, &gi) in g.iter().enumerate() {
            if levels[i] > S::zero() {
                worst = worst.max((gi - u).abs());
            }
        }
        worst
    }

    fn effective_h_max(&self, settings: &BrSettings<S>) -> S {
        let derived = default_h_max(self.dec, self.cfg.noise_power);
        settings
            .h_max
            .unwrap_or(derived)
            .max(settings.eps1 * S::real(2.0))
    }
}

/// Closed-form allocation for a given marginal level `h`.
///
/// For nt = nr this is the exact inversion of the stationarity equation at
/// level h (real diagonal kept, negatives clamped to zero, then radial
/// scaling onto the budget). Otherwise the pseudo-inverse linearization is
/// used, with the same clamping.
pub fn allocation_for_h<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    interference: &ComplexMatrix<S>,
    h: S,
    k: usize,
) -> Result<PowerAllocation<S>> {
    debug_assert!(h > S::zero(), "level parameter must be positive");
    let problem = BrProblem::with_interference(cfg, dec, interference.clone(), k)?;
    let (levels, _) = problem.levels_for_h(h);
    PowerAllocation::new(levels, cfg.budgets[k])
}

/// Stationarity residual of a level vector: max over supported modes of
/// the gap between the per-mode marginal rate and the achieved utility.
pub fn stationarity_residual<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    profile: &ActionProfile<S>,
    k: usize,
) -> Result<S> {
    let problem = BrProblem::build(cfg, dec, profile, k)?;
    Ok(problem.residual(profile.allocation(k).levels()))
}

/// Three-probe bisection over the closed-form family.
///
/// Probes the family at the midpoint and at `eps1 / 2` on either side; a
/// monotone probe pattern discards half the interval, anything else pins
/// the peak inside the probe window and terminates. Returns the allocation
/// at the final midpoint.
pub fn bisect_h<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    profile: &ActionProfile<S>,
    k: usize,
    settings: &BrSettings<S>,
) -> Result<BrResult<S>> {
    settings.validate()?;
    let problem = BrProblem::build(cfg, dec, profile, k)?;
    bisect_core(&problem, settings)
}

fn bisect_core<S: Scalar>(
    problem: &BrProblem<'_, S>,
    settings: &BrSettings<S>,
) -> Result<BrResult<S>> {
    let eps1 = settings.eps1;
    let h_max = problem.effective_h_max(settings);
    let half = S::real(0.5);

    let mut lo = S::zero();
    let mut hi = h_max;
    let mut h_final = (lo + hi) * half;
    let mut nonunimodal = false;
    let mut best: Option<(S, S)> = None; // (utility, h)

    let mut iters = 0usize;
    while hi - lo > eps1 && iters < settings.inner_max_iters {
        let h_m = (lo + hi) * half;
        let h_l = S::zero().max(h_m - eps1 * half);
        let h_r = h_max.min(h_m + eps1 * half);

        let (p_l, _) = problem.levels_for_h(h_l);
        let (p_m, scaled_m) = problem.levels_for_h(h_m);
        let (p_r, _) = problem.levels_for_h(h_r);
        let u_l = problem.utility(&p_l);
        let u_m = problem.utility(&p_m);
        let u_r = problem.utility(&p_r);
        for (u, h) in [(u_l, h_l), (u_m, h_m), (u_r, h_r)] {
            if best.map_or(true, |(bu, _)| u > bu) {
                best = Some((u, h));
            }
        }

        if u_l < u_m && u_m < u_r {
            lo = h_l;
        } else if u_l > u_m && u_m > u_r {
            hi = h_r;
        } else if u_m == S::zero() && u_r == S::zero() {
            // Dead zone: every mode clamps to zero at and beyond the window
            // midpoint, so the peak lies to the left. The plain three-probe
            // patterns cannot see this (the probes tie at zero).
            hi = if u_l == S::zero() { h_l } else { h_m };
        } else if u_l == u_m && u_m == u_r && scaled_m {
            // Budget-projection plateau: at levels this low every candidate
            // scales onto the budget face and the probes tie exactly. The
            // peak sits at or beyond the plateau's right edge.
            lo = h_m;
        } else if u_l == u_m && u_m < u_r {
            // flat-then-rising tie: the peak is to the right
            lo = h_m;
        } else if u_l > u_m && u_m == u_r {
            // falling-then-flat tie: the peak is to the left
            hi = h_m;
        } else {
            if u_l > u_m && u_m < u_r {
                nonunimodal = true;
            }
            lo = h_l;
            hi = h_r;
        }
        h_final = h_m;
        iters += 1;
    }

    let (mut levels, mut scaled) = problem.levels_for_h(h_final);
    let mut u_final = problem.utility(&levels);
    if nonunimodal {
        if let Some((bu, bh)) = best {
            if bu > u_final {
                let (lv, sc) = problem.levels_for_h(bh);
                levels = lv;
                scaled = sc;
                u_final = bu;
                h_final = bh;
            }
        }
    }

    let mut warnings = Vec::new();
    if nonunimodal {
        warnings.push(BrWarning::NonUnimodalSequence);
    }
    if h_max - h_final <= eps1 {
        warnings.push(BrWarning::HMaxBoundary);
    }

    let residual = problem.residual(&levels);
    let allocation = PowerAllocation::new(levels, problem.budget)?;
    let active_set = allocation.support();
    Ok(BrResult {
        allocation,
        utility_at_br: u_final,
        active_set,
        method: if problem.cfg.nt == problem.cfg.nr {
            BrMethod::ClosedFormH
        } else {
            BrMethod::PinvApproxH
        },
        residual,
        budget_bound: scaled,
        warnings,
    })
}

/// Exact best response.
///
/// Starts from the bisection output, then alternates solving the
/// stationarity equation at the current utility level with active-set
/// restriction (modes whose unconstrained level would go negative are fixed
/// at zero and the reduced system re-solved) until the utility level is a
/// fixed point. Budget-binding instances are finished by water-filling on
/// the budget face. If the polished point fails its stationarity
/// post-verification, a projected grid search plus coordinate ascent is
/// used instead and flagged in `method`.
pub fn exact_br<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    profile: &ActionProfile<S>,
    k: usize,
    settings: &BrSettings<S>,
) -> Result<BrResult<S>> {
    settings.validate()?;
    let problem = BrProblem::build(cfg, dec, profile, k)?;
    let start = bisect_core(&problem, settings)?;

    let mut levels = start.allocation.levels().to_vec();
    let mut level = start.utility_at_br.max(S::real(1e-12));
    let mut budget_bound = false;
    let damped = cfg.nt != cfg.nr;
    let tol = S::real(1e-13).max(S::epsilon() * S::real(8.0));

    // Fixed-point polish on the utility level. When the stationary solve at
    // the current level overspends, the iterate is projected back onto the
    // budget; budget binding is only declared once the level itself has
    // converged with the projection still active.
    let mut converged = false;
    for _ in 0..settings.inner_max_iters {
        let Some(candidate) = solve_at_level(&problem, level, &levels, settings.active_set_max_rounds)
        else {
            break;
        };
        let total: S = candidate.iter().copied().fold(S::zero(), |a, b| a + b);
        let over = total > problem.budget;
        levels = if over {
            let scale = problem.budget / total;
            candidate.iter().map(|&p| p * scale).collect()
        } else {
            candidate
        };
        let u = problem.utility(&levels);
        let next = if damped { (level + u) * S::real(0.5) } else { u };
        if (next - level).abs() <= tol * S::one().max(level.abs()) {
            level = next;
            budget_bound = over;
            converged = true;
            break;
        }
        level = next;
    }

    if budget_bound {
        levels = water_fill_on_budget(&problem, settings, level)?;
    }

    let u = problem.utility(&levels);
    let (g, _) = problem.marginals(&levels);
    let mut residual = S::zero();
    let mut clamped_ok = true;
    let clamp_tol = S::real(1e-9).max(S::epsilon() * S::real(16.0));
    for i in 0..problem.n_valid {
        if levels[i] > S::zero() {
            residual = residual.max((g[i] - u).abs());
        } else if g[i] > u + clamp_tol {
            clamped_ok = false;
        }
    }

    let stationarity_tol = S::real(STATIONARITY_TOL).max(S::epsilon() * S::real(64.0));
    let interior_ok = converged && residual <= stationarity_tol && clamped_ok;
    let acceptable = if budget_bound {
        // stationarity is replaced by the face optimality condition; the
        // clamped-mode check still applies against the face level.
        converged
    } else {
        interior_ok
    };

    if !acceptable {
        let polished = fallback_polish(&problem, settings, &levels);
        let u = problem.utility(&polished);
        let residual = problem.residual(&polished);
        let total: S = polished.iter().copied().fold(S::zero(), |a, b| a + b);
        let allocation = PowerAllocation::new(polished, problem.budget)?;
        let active_set = allocation.support();
        return Ok(BrResult {
            allocation,
            utility_at_br: u,
            active_set,
            method: BrMethod::GridFallback,
            residual,
            budget_bound: total >= problem.budget * S::real(1.0 - 1e-9),
            warnings: start.warnings,
        });
    }

    let allocation = PowerAllocation::new(levels, problem.budget)?;
    let active_set = allocation.support();
    Ok(BrResult {
        allocation,
        utility_at_br: u,
        active_set,
        method: BrMethod::ExactFixedPoint,
        residual,
        budget_bound,
        warnings: start.warnings,
    })
}

/// Solve the per-mode stationarity system `g_i(p) = level` on the active
/// set, with clamp and re-add rounds. Returns `None` when no rounds are
/// allowed.
fn solve_at_level<S: Scalar>(
    problem: &BrProblem<'_, S>,
    level: S,
    warm: &[S],
    max_rounds: usize,
) -> Option<Vec<S>> {
    let nt = problem.cfg.nt;
    let n_valid = problem.n_valid;
    let mut levels = vec![S::zero(); nt];
    for i in 0..n_valid {
        levels[i] = warm[i].max(S::zero());
    }
    let mut active: Vec<bool> = (0..n_valid).map(|_| true).collect();
    let mut ran = false;

    for _ in 0..max_rounds {
        ran = true;
        newton_on_active(problem, level, &mut levels, &mut active);
        // re-add any clamped mode whose marginal exceeds the level
        let (g, _) = problem.marginals(&levels);
        let mut changed = false;
        for i in 0..n_valid {
            if !active[i] && g[i] > level + S::real(1e-12) {
                active[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if ran {
        Some(levels)
    } else {
        None
    }
}

/// Damped-safeguarded Newton iteration for `g_i(p) = level` over the modes
/// flagged active; clamps coordinates that hit zero and drops them from the
/// active set.
fn newton_on_active<S: Scalar>(
    problem: &BrProblem<'_, S>,
    level: S,
    levels: &mut [S],
    active: &mut [bool],
) {
    let tol = S::real(1e-12).max(S::epsilon() * S::real(4.0)) * S::one().max(level.abs());
    for _ in 0..60 {
        let idx: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
        if idx.is_empty() {
            return;
        }
        let (g, minv) = problem.marginals(levels);
        let worst = idx
            .iter()
            .map(|&i| (g[i] - level).abs())
            .fold(S::zero(), S::max);
        if worst <= tol {
            return;
        }
        // J_ab = lambda_a^2 lambda_b^2 |Minv_ab|^2 is symmetric positive
        // definite (Schur product of positive definite matrices).
        let n = idx.len();
        let jac = ComplexMatrix::from_fn(n, n, |a, b| {
            let ia = idx[a];
            let ib = idx[b];
            let la = problem.gain(ia);
            let lb = problem.gain(ib);
            Complex::new(la * la * lb * lb * minv.get(ia, ib).norm_sqr(), S::zero())
        });
        let rhs: Vec<Complex<S>> = idx
            .iter()
            .map(|&i| Complex::new(g[i] - level, S::zero()))
            .collect();
        let step = match jac.solve_hpd(&rhs) {
            Ok(s) => s,
            Err(_) => return,
        };
        // largest feasible step fraction before a coordinate hits zero
        let mut alpha = S::one();
        for (a, &i) in idx.iter().enumerate() {
            let d = step[a].re;
            if d < S::zero() && levels[i] + d < S::zero() {
                alpha = alpha.min(levels[i] / -d);
            }
        }
        for (a, &i) in idx.iter().enumerate() {
            levels[i] = (levels[i] + alpha * step[a].re).max(S::zero());
        }
        if alpha < S::one() {
            for &i in &idx {
                if levels[i] <= S::zero() {
                    levels[i] = S::zero();
                    active[i] = false;
                }
            }
        }
    }
}

/// Budget face: the denominator is pinned at budget + circuit power, so the
/// best response maximizes rate alone. Bisect the common water level until
/// the stationary allocation spends the budget exactly.
fn water_fill_on_budget<S: Scalar>(
    problem: &BrProblem<'_, S>,
    settings: &BrSettings<S>,
    level_hint: S,
) -> Result<Vec<S>> {
    let rounds = settings.active_set_max_rounds.max(4);
    let total_of = |lv: &[S]| lv.iter().copied().fold(S::zero(), |a, b| a + b);
    let warm = vec![S::zero(); problem.cfg.nt];

    // bracket: spend decreases as the level rises; the top is the physical
    // marginal bound, not the (possibly overridden) search bound
    let mut hi = default_h_max(problem.dec, problem.cfg.noise_power);
    let mut lo = level_hint.max(S::real(1e-12)).min(hi);
    for _ in 0..200 {
        let p = solve_at_level(problem, lo, &warm, rounds).unwrap_or_else(|| warm.clone());
        if total_of(&p) >= problem.budget {
            break;
        }
        lo = lo * S::real(0.5);
    }

    let mut levels = warm.clone();
    for _ in 0..120 {
        let mid = (lo + hi) * S::real(0.5);
        levels = solve_at_level(problem, mid, &warm, rounds).unwrap_or_else(|| warm.clone());
        if total_of(&levels) > problem.budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= S::epsilon() * hi.max(S::one()) {
            break;
        }
    }
    // land exactly on the face
    let total = total_of(&levels);
    if total > S::zero() {
        let scale = problem.budget / total;
        for p in levels.iter_mut() {
            *p = *p * scale;
        }
    }
    Ok(levels)
}

/// Projected grid search (for up to two transmit modes) followed by cyclic
/// coordinate ascent with a golden-section line search.
fn fallback_polish<S: Scalar>(
    problem: &BrProblem<'_, S>,
    settings: &BrSettings<S>,
    start: &[S],
) -> Vec<S> {
    let nt = problem.cfg.nt;
    let budget = problem.budget;
    let mut best = start.to_vec();
    let mut best_u = problem.utility(&best);

    if nt <= 2 && settings.grid_fallback_points >= 2 {
        let n = settings.grid_fallback_points;
        let step = budget / S::from_usize(n - 1).unwrap();
        if nt == 1 {
            for i in 0..n {
                let cand = vec![step * S::from_usize(i).unwrap()];
                let u = problem.utility(&cand);
                if u > best_u {
                    best_u = u;
                    best = cand;
                }
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    let mut cand = vec![
                        step * S::from_usize(i).unwrap(),
                        step * S::from_usize(j).unwrap(),
                    ];
                    let total = cand[0] + cand[1];
                    if total > budget {
                        let scale = budget / total;
                        cand[0] = cand[0] * scale;
                        cand[1] = cand[1] * scale;
                    }
                    let u = problem.utility(&cand);
                    if u > best_u {
                        best_u = u;
                        best = cand;
                    }
                }
            }
        }
    }

    // cyclic coordinate ascent
    for _ in 0..24 {
        let before = best_u;
        for i in 0..nt {
            let others: S = best
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &p)| p)
                .fold(S::zero(), |a, b| a + b);
            let hi = (budget - others).max(S::zero());
            let mut cand = best.clone();
            let (x, u) = golden_section_max(
                |p| {
                    cand[i] = p;
                    problem.utility(&cand)
                },
                S::zero(),
                hi,
                S::real(1e-10).max(S::epsilon() * hi),
            );
            if u > best_u {
                best_u = u;
                best[i] = x;
            }
        }
        if best_u - before <= S::real(1e-13) {
            break;
        }
    }
    best
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`,
/// including the endpoints among the candidates.
pub(crate) fn golden_section_max<S: Scalar>(
    mut f: impl FnMut(S) -> S,
    lo: S,
    hi: S,
    tol: S,
) -> (S, S) {
    if !(hi > lo) {
        return (lo, f(lo));
    }
    let inv_phi = (S::real(5.0).sqrt() - S::one()) * S::real(0.5);
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    let mid = (a + b) * S::real(0.5);
    let fm = f(mid);
    let fl = f(lo);
    let fh = f(hi);
    // endpoint snap: prefer a boundary when it is at least as good
    if fh >= fm && fh >= fl {
        (hi, fh)
    } else if fl >= fm {
        (lo, fl)
    } else {
        (mid, fm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSet;
    use crate::game::sample_simplex;
    use crate::matrix::SvdFactors;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diagonal_decomposition(
        gains: &[Vec<f64>],
        reference: usize,
        nr: usize,
    ) -> ChannelDecomposition<f64> {
        let nt = gains[0].len();
        ChannelDecomposition {
            user_index: reference,
            factors: SvdFactors {
                u: ComplexMatrix::identity(nr),
                sigma: gains[reference].clone(),
                v: ComplexMatrix::identity(nt),
            },
            cross_factors: gains
                .iter()
                .map(|g| ComplexMatrix::diag_rect(g, nr, nt))
                .collect(),
        }
    }

    fn scalar_setup(budget: f64) -> (GameConfig<f64>, ChannelDecomposition<f64>) {
        let cfg: GameConfig<f64> = GameConfig::new(1, 1, 1, 1.0, 1.0, vec![budget]).unwrap();
        let dec = diagonal_decomposition(&[vec![1.0]], 0, 1);
        (cfg, dec)
    }

    #[test]
    fn allocation_for_h_scalar_cases() {
        let (cfg, dec) = scalar_setup(10.0);
        let f = ComplexMatrix::zeros(1, 1);
        let a = allocation_for_h(&cfg, &dec, &f, 0.5, 0).unwrap();
        assert!((a.get(0) - 1.0).abs() < 1e-14);
        let b = allocation_for_h(&cfg, &dec, &f, 2.0, 0).unwrap();
        assert_eq!(b.get(0), 0.0, "negative level must clamp to zero");
    }

    #[test]
    fn allocation_for_h_two_modes() {
        let cfg: GameConfig<f64> = GameConfig::new(1, 2, 2, 1.0, 1.0, vec![20.0]).unwrap();
        let dec = diagonal_decomposition(&[vec![2.0, 1.0]], 0, 2);
        let f = ComplexMatrix::zeros(2, 2);
        let a = allocation_for_h(&cfg, &dec, &f, 0.1, 0).unwrap();
        assert!((a.get(0) - 9.75).abs() < 1e-12);
        assert!((a.get(1) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn allocation_for_h_scales_onto_budget() {
        let cfg: GameConfig<f64> = GameConfig::new(1, 2, 2, 1.0, 1.0, vec![5.0]).unwrap();
        let dec = diagonal_decomposition(&[vec![2.0, 1.0]], 0, 2);
        let f = ComplexMatrix::zeros(2, 2);
        let a = allocation_for_h(&cfg, &dec, &f, 0.1, 0).unwrap();
        assert!((a.total() - 5.0).abs() < 1e-12);
        // direction preserved
        assert!((a.get(0) / a.get(1) - 9.75 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn allocation_for_h_rejects_rank_deficiency() {
        let cfg: GameConfig<f64> = GameConfig::new(1, 2, 2, 1.0, 1.0, vec![10.0]).unwrap();
        let dec = diagonal_decomposition(&[vec![1.0, 0.0]], 0, 2);
        let f = ComplexMatrix::zeros(2, 2);
        match allocation_for_h(&cfg, &dec, &f, 0.5, 0) {
            Err(Error::RankDeficientChannel { user }) => assert_eq!(user, 0),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn square_and_pinv_routes_agree_when_square() {
        // the pseudo-inverse formula must degenerate to the exact inversion
        // for square full-rank gains
        let cfg: GameConfig<f64> = GameConfig::new(2, 2, 2, 1.0, 1.0, vec![10.0, 10.0]).unwrap();
        let set = ChannelSet::generate(&cfg, 404).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let profile = crate::game::ActionProfile::new(
            (0..2)
                .map(|_| {
                    PowerAllocation::new(sample_simplex(10.0, 2, &mut rng), 10.0).unwrap()
                })
                .collect(),
            &cfg,
        )
        .unwrap();
        for k in 0..2 {
            let problem = BrProblem::build(&cfg, &set.decompositions[k], &profile, k).unwrap();
            for h in [0.05, 0.2, 0.7] {
                let square = problem.square_levels_for_h(h);
                let pinv = problem.pinv_levels_for_h(h);
                for (a, b) in square.iter().zip(&pinv) {
                    assert!((a - b).abs() < 1e-12, "square {a} vs pinv {b}");
                }
            }
        }
    }

    #[test]
    fn bisect_scalar_finds_analytic_maximizer() {
        // u(p(h)) = -h ln h on this instance; the maximum is at h = 1/e with
        // allocation e - 1. Oracle: 1-D grid over p confirms the optimum.
        let (cfg, dec) = scalar_setup(10.0);
        let profile = ActionProfile::zeros(&cfg);
        let settings = BrSettings {
            eps1: 1e-4,
            ..BrSettings::default()
        };
        let r = bisect_h(&cfg, &dec, &profile, 0, &settings).unwrap();
        let e = std::f64::consts::E;
        assert!(
            (r.allocation.get(0) - (e - 1.0)).abs() < 1e-3,
            "allocation {} vs e-1",
            r.allocation.get(0)
        );
        // the best level equals the best utility 1/e on this instance
        assert!((r.utility_at_br - 1.0 / e).abs() < 1e-6);
        assert_eq!(r.method, BrMethod::ClosedFormH);

        // grid oracle
        let problem = BrProblem::build(&cfg, &dec, &profile, 0).unwrap();
        let grid_best = (0..5000)
            .map(|i| problem.utility(&[10.0 * i as f64 / 4999.0]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(r.utility_at_br >= grid_best - 1e-6);
    }

    #[test]
    fn bisect_symmetric_two_mode_instance() {
        let cfg: GameConfig<f64> = GameConfig::new(1, 2, 2, 1.0, 1.0, vec![20.0]).unwrap();
        let dec = diagonal_decomposition(&[vec![1.0, 1.0]], 0, 2);
        let profile = ActionProfile::zeros(&cfg);
        let r = bisect_h(&cfg, &dec, &profile, 0, &BrSettings::default()).unwrap();
        assert!((r.allocation.get(0) - r.allocation.get(1)).abs() < 1e-12);
        // 2-D grid oracle reduced to the symmetric ray: max over p of
        // 2 ln(1+p) / (2p + 1)
        let (p_star, _) = golden_section_max(
            |p: f64| 2.0 * (1.0 + p).ln() / (2.0 * p + 1.0),
            0.0,
            10.0,
            1e-10,
        );
        assert!(
            (r.allocation.get(0) - p_star).abs() < 1e-3,
            "per-mode {} vs oracle {p_star}",
            r.allocation.get(0)
        );
    }

    #[test]
    fn bisect_degenerate_h_max_warns_at_boundary() {
        let (cfg, dec) = scalar_setup(20.0);
        let profile = ActionProfile::zeros(&cfg);
        let settings = BrSettings {
            h_max: Some(0.1), // optimum is at 1/e > 0.1
            ..BrSettings::default()
        };
        let r = bisect_h(&cfg, &dec, &profile, 0, &settings).unwrap();
        assert!(r.warnings.contains(&BrWarning::HMaxBoundary));
        // the boundary solution p = 1/h - 1 with h near 0.1
        assert!((r.allocation.get(0) - 9.0).abs() < 0.2);
    }

    #[test]
    fn exact_br_scalar_analytic_fixed_point() {
        let (cfg, dec) = scalar_setup(10.0);
        let profile = ActionProfile::zeros(&cfg);
        let r = exact_br(&cfg, &dec, &profile, 0, &BrSettings::default()).unwrap();
        let e = std::f64::consts::E;
        assert!(
            (r.allocation.get(0) - (e - 1.0)).abs() < 1e-8,
            "allocation {}",
            r.allocation.get(0)
        );
        assert_eq!(r.method, BrMethod::ExactFixedPoint);
        assert!(r.residual < 1e-8, "residual {}", r.residual);
        // explicit stationarity: 1/(1+p) equals the utility
        let p = r.allocation.get(0);
        assert!((1.0 / (1.0 + p) - r.utility_at_br).abs() < 1e-8);
        assert!(!r.budget_bound);
    }

    #[test]
    fn exact_br_clamps_to_budget() {
        // interior optimum e-1 exceeds the unit budget, so the best response
        // is the full budget. Oracle: the utility is increasing on (0, e-1).
        let (cfg, dec) = scalar_setup(1.0);
        let profile = ActionProfile::zeros(&cfg);
        let r = exact_br(&cfg, &dec, &profile, 0, &BrSettings::default()).unwrap();
        assert!(
            (r.allocation.get(0) - 1.0).abs() < 1e-9,
            "allocation {}",
            r.allocation.get(0)
        );
        assert!(r.budget_bound);
        let problem = BrProblem::build(&cfg, &dec, &profile, 0).unwrap();
        let mut last = -1.0;
        for i in 0..100 {
            let u = problem.utility(&[i as f64 / 99.0]);
            assert!(u > last, "utility must increase up to the budget");
            last = u;
        }
    }

    #[test]
    fn exact_br_clamps_weak_mode() {
        let cfg: GameConfig<f64> = GameConfig::new(1, 2, 2, 1.0, 1.0, vec![10.0]).unwrap();
        let dec = diagonal_decomposition(&[vec![2.0, 1e-3]], 0, 2);
        let profile = ActionProfile::zeros(&cfg);
        let r = exact_br(&cfg, &dec, &profile, 0, &BrSettings::default()).unwrap();
        assert_eq!(r.allocation.get(1), 0.0);
        assert_eq!(r.active_set, vec![0]);
        // 2-D grid oracle: the best grid point also leaves mode 2 dark
        let problem = BrProblem::build(&cfg, &dec, &profile, 0).unwrap();
        let mut grid_best = f64::NEG_INFINITY;
        let mut grid_arg = (0.0, 0.0);
        for i in 0..200 {
            for j in 0..200 {
                let p = [10.0 * i as f64 / 199.0, 10.0 * j as f64 / 199.0];
                if p[0] + p[1] > 10.0 {
                    continue;
                }
                let u = problem.utility(&p);
                if u > grid_best {
                    grid_best = u;
                    grid_arg = (p[0], p[1]);
                }
            }
        }
        assert_eq!(grid_arg.1, 0.0, "oracle also clamps the weak mode");
        assert!(r.utility_at_br >= grid_best - 1e-6);
    }

    #[test]
    fn exact_br_dominates_grid_on_random_instances() {
        let cfg: GameConfig<f64> = GameConfig::new(2, 2, 2, 1.0, 1.0, vec![10.0, 10.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        for seed in 0..10u64 {
            let set = ChannelSet::generate(&cfg, 7000 + seed).unwrap();
            let profile = crate::game::ActionProfile::new(
                (0..2)
                    .map(|_| {
                        PowerAllocation::new(sample_simplex(10.0, 2, &mut rng), 10.0).unwrap()
                    })
                    .collect(),
                &cfg,
            )
            .unwrap();
            let k = (seed % 2) as usize;
            let r = exact_br(&cfg, &set.decompositions[k], &profile, k, &BrSettings::default())
                .unwrap();
            let problem = BrProblem::build(&cfg, &set.decompositions[k], &profile, k).unwrap();
            let mut grid_best = f64::NEG_INFINITY;
            for i in 0..200 {
                for j in 0..200 {
                    let mut p = [10.0 * i as f64 / 199.0, 10.0 * j as f64 / 199.0];
                    let total = p[0] + p[1];
                    if total > 10.0 {
                        let s = 10.0 / total;
                        p[0] *= s;
                        p[1] *= s;
                    }
                    grid_best = grid_best.max(problem.utility(&p));
                }
            }
            assert!(
                r.utility_at_br >= grid_best - 1e-6,
                "seed {seed}: br {} vs grid {grid_best}",
                r.utility_at_br
            );
        }
    }

    #[test]
    fn bisect_matches_exact_within_guarantee_when_square() {
        let cfg: GameConfig<f64> = GameConfig::new(2, 2, 2, 1.0, 1.0, vec![10.0, 10.0]).unwrap();
        let settings = BrSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        for seed in 0..10u64 {
            let set = ChannelSet::generate(&cfg, 900 + seed).unwrap();
            let profile = crate::game::ActionProfile::new(
                (0..2)
                    .map(|_| {
                        PowerAllocation::new(sample_simplex(10.0, 2, &mut rng), 10.0).unwrap()
                    })
                    .collect(),
                &cfg,
            )
            .unwrap();
            let exact = exact_br(&cfg, &set.decompositions[0], &profile, 0, &settings).unwrap();
            if exact.budget_bound {
                continue;
            }
            let bis = bisect_h(&cfg, &set.decompositions[0], &profile, 0, &settings).unwrap();
            assert!(
                bis.utility_at_br >= exact.utility_at_br - 10.0 * settings.eps1,
                "seed {seed}: bisect {} vs exact {}",
                bis.utility_at_br,
                exact.utility_at_br
            );
        }
    }

    #[test]
    fn standard_function_properties_scalar_game() {
        // two-user scalar instances: positivity, monotonicity in the
        // opponent, and scalability of the best response.
        let cfg: GameConfig<f64> = GameConfig::new(2, 1, 1, 1.0, 1.0, vec![50.0, 50.0]).unwrap();
        let settings = BrSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for seed in 0..20u64 {
            use rand::Rng as _;
            let set = ChannelSet::generate(&cfg, 300 + seed).unwrap();
            let p_small: f64 = 2.0 * rng.random::<f64>();
            let br_at = |opp: f64| {
                let profile = crate::game::ActionProfile::new(
                    vec![
                        PowerAllocation::zeros(1),
                        PowerAllocation::new(vec![opp], 50.0).unwrap(),
                    ],
                    &cfg,
                )
                .unwrap();
                exact_br(&cfg, &set.decompositions[0], &profile, 0, &settings)
                    .unwrap()
                    .allocation
                    .get(0)
            };
            let base = br_at(p_small);
            assert!(base >= 0.0);
            // monotone: more interference pushes the response up
            let more = br_at(p_small * 1.5 + 0.5);
            assert!(more >= base - 1e-6, "monotonicity: {more} < {base}");
            // scalable: BR(alpha p) <= alpha BR(p)
            for alpha in [1.5, 2.0] {
                let scaled = br_at(p_small * alpha);
                assert!(
                    scaled <= alpha * base + 1e-6,
                    "scalability at alpha {alpha}: {scaled} vs {}",
                    alpha * base
                );
            }
        }
    }

    #[test]
    fn budget_face_solve_survives_small_h_max_override() {
        // the override constrains the search, not the water level on the
        // budget face
        let (cfg, dec) = scalar_setup(1.0);
        let profile = ActionProfile::zeros(&cfg);
        let settings = BrSettings {
            h_max: Some(0.05), // far below the face marginal 1/2
            ..BrSettings::default()
        };
        let r = exact_br(&cfg, &dec, &profile, 0, &settings).unwrap();
        assert!(
            (r.allocation.get(0) - 1.0).abs() < 1e-6,
            "allocation {}",
            r.allocation.get(0)
        );
        assert!(r.budget_bound);
    }

    #[test]
    fn fallback_engages_when_polish_is_disabled() {
        let (cfg, dec) = scalar_setup(10.0);
        let profile = ActionProfile::zeros(&cfg);
        let crippled = BrSettings {
            active_set_max_rounds: 0,
            ..BrSettings::default()
        };
        let r = exact_br(&cfg, &dec, &profile, 0, &crippled).unwrap();
        assert_eq!(r.method, BrMethod::GridFallback);
        let e = std::f64::consts::E;
        assert!(
            (r.allocation.get(0) - (e - 1.0)).abs() < 1e-4,
            "fallback allocation {}",
            r.allocation.get(0)
        );
    }

    #[test]
    fn settings_validation() {
        let bad = BrSettings::<f64> {
            eps1: 0.0,
            ..BrSettings::default()
        };
        assert!(bad.validate().is_err());
        let bad = BrSettings::<f64> {
            h_max: Some(1e-4),
            eps1: 1e-3,
            ..BrSettings::default()
        };
        assert!(bad.validate().is_err());
    }
}
