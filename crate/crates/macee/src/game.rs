//! The energy-efficiency game: configuration, actions, rate and utility,
//! social welfare, and (approximate-)equilibrium verification.
//!
//! Rates are natural-log capacities, so with powers in mW a utility is in
//! nats per (mW * channel use). Only orderings of utilities matter to the
//! experiment suite.

use num_complex::Complex;
use rand::Rng;

use crate::best_response::{exact_br, BrSettings};
use crate::channel::ChannelDecomposition;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::scalar::Scalar;

/// Absolute slack, in mW, allowed on the per-user budget sum.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Static description of one game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig<S> {
    pub k_users: usize,
    pub nt: usize,
    pub nr: usize,
    /// Receiver noise power (mW).
    pub noise_power: S,
    /// Circuit power consumed regardless of the transmit level (mW).
    pub circuit_power: S,
    /// Per-user transmit power budgets (mW).
    pub budgets: Vec<S>,
}

impl<S: Scalar> GameConfig<S> {
    pub fn new(
        k_users: usize,
        nt: usize,
        nr: usize,
        noise_power: S,
        circuit_power: S,
        budgets: Vec<S>,
    ) -> Result<Self> {
        if k_users == 0 {
            return Err(Error::InvalidConfig {
                field: "k_users",
                message: "must be at least 1".into(),
            });
        }
        if nt == 0 || nr == 0 {
            return Err(Error::InvalidConfig {
                field: "nt/nr",
                message: "antenna counts must be at least 1".into(),
            });
        }
        if !(noise_power > S::zero()) {
            return Err(Error::InvalidConfig {
                field: "noise_power",
                message: "must be positive".into(),
            });
        }
        if !(circuit_power > S::zero()) {
            return Err(Error::InvalidConfig {
                field: "circuit_power",
                message: "must be positive".into(),
            });
        }
        if budgets.len() != k_users {
            return Err(Error::InvalidConfig {
                field: "budgets",
                message: format!("need {} entries, got {}", k_users, budgets.len()),
            });
        }
        if budgets.iter().any(|b| !(*b > S::zero())) {
            return Err(Error::InvalidConfig {
                field: "budgets",
                message: "every budget must be positive".into(),
            });
        }
        Ok(Self {
            k_users,
            nt,
            nr,
            noise_power,
            circuit_power,
            budgets,
        })
    }
}

/// One user's action: nonnegative power per transmit mode, summing to at
/// most the user's budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<S> {
    levels: Vec<S>,
}

impl<S: Scalar> PowerAllocation<S> {
    pub fn new(levels: Vec<S>, budget: S) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Infeasible {
                message: "allocation needs at least one mode".into(),
            });
        }
        if levels.iter().any(|p| !(*p >= S::zero()) || !p.is_finite()) {
            return Err(Error::Infeasible {
                message: "every level must be finite and nonnegative".into(),
            });
        }
        let sum = levels.iter().copied().fold(S::zero(), |a, b| a + b);
        if sum > budget + S::real(FEASIBILITY_TOL) {
            return Err(Error::Infeasible {
                message: format!("sum {sum} exceeds budget {budget}"),
            });
        }
        Ok(Self { levels })
    }

    pub fn zeros(nt: usize) -> Self {
        Self {
            levels: vec![S::zero(); nt],
        }
    }

    /// Budget spread evenly over all transmit modes.
    pub fn uniform(budget: S, nt: usize) -> Self {
        Self {
            levels: vec![budget / S::from_usize(nt).unwrap(); nt],
        }
    }

    pub fn levels(&self) -> &[S] {
        &self.levels
    }

    pub fn get(&self, mode: usize) -> S {
        self.levels[mode]
    }

    pub fn total(&self) -> S {
        self.levels.iter().copied().fold(S::zero(), |a, b| a + b)
    }

    /// Modes carrying strictly positive power.
    pub fn support(&self) -> Vec<usize> {
        (0..self.levels.len())
            .filter(|&i| self.levels[i] > S::zero())
            .collect()
    }

    /// Modes clamped to zero (the boundary index set).
    pub fn zero_set(&self) -> Vec<usize> {
        (0..self.levels.len())
            .filter(|&i| !(self.levels[i] > S::zero()))
            .collect()
    }

    pub fn euclidean_distance(&self, other: &Self) -> S {
        self.levels
            .iter()
            .zip(&other.levels)
            .map(|(&a, &b)| (a - b) * (a - b))
            .fold(S::zero(), |a, b| a + b)
            .sqrt()
    }
}

/// The full game state: one allocation per user.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile<S> {
    allocations: Vec<PowerAllocation<S>>,
}

impl<S: Scalar> ActionProfile<S> {
    pub fn new(allocations: Vec<PowerAllocation<S>>, cfg: &GameConfig<S>) -> Result<Self> {
        if allocations.len() != cfg.k_users {
            return Err(Error::Dimension {
                context: format!(
                    "profile has {} allocations for {} users",
                    allocations.len(),
                    cfg.k_users
                ),
            });
        }
        for (k, a) in allocations.iter().enumerate() {
            // re-validate against each user's budget
            PowerAllocation::new(a.levels.clone(), cfg.budgets[k])?;
        }
        Ok(Self { allocations })
    }

    pub fn zeros(cfg: &GameConfig<S>) -> Self {
        Self {
            allocations: vec![PowerAllocation::zeros(cfg.nt); cfg.k_users],
        }
    }

    /// Every user spreads its full budget evenly (the solver's default
    /// starting point and the UPA reference shape).
    pub fn uniform_budget(cfg: &GameConfig<S>) -> Self {
        Self {
            allocations: (0..cfg.k_users)
                .map(|k| PowerAllocation::uniform(cfg.budgets[k], cfg.nt))
                .collect(),
        }
    }

    pub fn allocations(&self) -> &[PowerAllocation<S>] {
        &self.allocations
    }

    pub fn allocation(&self, k: usize) -> &PowerAllocation<S> {
        &self.allocations[k]
    }

    pub fn set_allocation(&mut self, k: usize, a: PowerAllocation<S>) {
        self.allocations[k] = a;
    }

    pub fn with_allocation(&self, k: usize, a: PowerAllocation<S>) -> Self {
        let mut out = self.clone();
        out.allocations[k] = a;
        out
    }
}

/// Outcome of sampling unilateral deviations around a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCheck<S> {
    pub is_ne: bool,
    /// Largest observed unilateral utility improvement, clamped at zero.
    pub epsilon_hat: S,
    pub worst_user: usize,
    pub worst_deviation: PowerAllocation<S>,
}

/// Interference matrix of user k: the sum over opponents of
/// `S_j P_j S_j^H`, expressed in user k's left singular basis
/// (nr x nr, Hermitian positive semidefinite).
pub fn interference_matrix<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    profile: &ActionProfile<S>,
    k: usize,
) -> Result<ComplexMatrix<S>> {
    if dec.cross_factors.len() != cfg.k_users || profile.allocations.len() != cfg.k_users {
        return Err(Error::Dimension {
            context: format!(
                "expected {} users, got {} cross factors and {} allocations",
                cfg.k_users,
                dec.cross_factors.len(),
                profile.allocations.len()
            ),
        });
    }
    let nr = cfg.nr;
    let mut f = ComplexMatrix::zeros(nr, nr);
    for j in 0..cfg.k_users {
        if j == k {
            continue;
        }
        let s_j = &dec.cross_factors[j];
        let p_j = profile.allocation(j).levels();
        if s_j.rows() != nr || s_j.cols() != p_j.len() {
            return Err(Error::Dimension {
                context: format!(
                    "cross factor of user {j} is {}x{}, profile has {} modes",
                    s_j.rows(),
                    s_j.cols(),
                    p_j.len()
                ),
            });
        }
        // F += S_j diag(p_j) S_j^H, accumulated column by column.
        for (m, &p) in p_j.iter().enumerate() {
            if !(p > S::zero()) {
                continue;
            }
            for r in 0..nr {
                let a = s_j.get(r, m);
                for c in 0..nr {
                    let b = s_j.get(c, m).conj();
                    let cur = f.get(r, c);
                    f.set(r, c, cur + a * b * Complex::new(p, S::zero()));
                }
            }
        }
    }
    Ok(f)
}

/// Achievable rate of user k against a precomputed interference matrix.
///
/// Works in the rotated frame: the signal term is the diagonal
/// `lambda_i^2 p_i` added to `noise * I + F`, which equals the direct
/// log-det ratio of channel covariances by unitary invariance.
pub fn rate_given_interference<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    interference: &ComplexMatrix<S>,
    levels: &[S],
) -> Result<S> {
    let base = interference.plus_real_diag(&vec![cfg.noise_power; cfg.nr]);
    let signal: Vec<S> = dec
        .factors
        .sigma
        .iter()
        .zip(levels)
        .map(|(&s, &p)| s * s * p)
        .collect();
    let with_signal = base.plus_real_diag(&signal);
    let r = with_signal.logdet_hpd()? - base.logdet_hpd()?;
    Ok(r.max(S::zero()))
}

/// Achievable rate of user k (nats per channel use).
pub fn rate<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    profile: &ActionProfile<S>,
    k: usize,
) -> Result<S> {
    let f = interference_matrix(cfg, dec, profile, k)?;
    rate_given_interference(cfg, dec, &f, profile.allocation(k).levels())
}

/// Energy efficiency of user k against a precomputed interference matrix.
pub fn utility_given_interference<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    interference: &ComplexMatrix<S>,
    levels: &[S],
) -> Result<S> {
    let r = rate_given_interference(cfg, dec, interference, levels)?;
    let spent = levels.iter().copied().fold(S::zero(), |a, b| a + b);
    Ok(r / (spent + cfg.circuit_power))
}

/// Energy efficiency of user k: rate over total consumed power.
pub fn utility<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    profile: &ActionProfile<S>,
    k: usize,
) -> Result<S> {
    let f = interference_matrix(cfg, dec, profile, k)?;
    utility_given_interference(cfg, dec, &f, profile.allocation(k).levels())
}

/// Sum of all users' utilities.
pub fn social_welfare<S: Scalar>(
    cfg: &GameConfig<S>,
    decs: &[ChannelDecomposition<S>],
    profile: &ActionProfile<S>,
) -> Result<S> {
    let mut w = S::zero();
    for k in 0..cfg.k_users {
        w = w + utility(cfg, &decs[k], profile, k)?;
    }
    Ok(w)
}

/// Draw a point uniformly from the solid simplex `{p >= 0, sum p <= budget}`
/// by exponential spacings with one slack coordinate.
pub fn sample_simplex<S: Scalar, R: Rng>(budget: S, nt: usize, rng: &mut R) -> Vec<S> {
    let mut exp: Vec<f64> = (0..=nt)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = exp.iter().sum();
    if !(total > 0.0) {
        return vec![S::zero(); nt];
    }
    exp.truncate(nt);
    exp.iter().map(|&e| budget * S::real(e / total)).collect()
}

/// Probe a profile for profitable unilateral deviations.
///
/// For every user the probes are: the exact best response, the zero vector,
/// the budget-uniform vector, full budget on each single mode, and
/// `deviations` uniform draws from the solid simplex. `epsilon_hat` is the
/// largest observed improvement (clamped at zero); since the exact best
/// response is always probed, it upper-bounds what sampling alone would
/// report.
pub fn verify_equilibrium<S: Scalar, R: Rng>(
    cfg: &GameConfig<S>,
    decs: &[ChannelDecomposition<S>],
    profile: &ActionProfile<S>,
    deviations: usize,
    tol: S,
    br: &BrSettings<S>,
    rng: &mut R,
) -> Result<EquilibriumCheck<S>> {
    assert!(deviations >= 1, "need at least one sampled deviation");
    let mut epsilon_hat = S::zero();
    let mut worst_user = 0usize;
    let mut worst_deviation = profile.allocation(0).clone();

    for k in 0..cfg.k_users {
        let dec = &decs[k];
        let f = interference_matrix(cfg, dec, profile, k)?;
        let current = utility_given_interference(cfg, dec, &f, profile.allocation(k).levels())?;
        let budget = cfg.budgets[k];

        let mut candidates: Vec<Vec<S>> = Vec::with_capacity(deviations + cfg.nt + 3);
        if let Ok(best) = exact_br(cfg, dec, profile, k, br) {
            candidates.push(best.allocation.levels().to_vec());
        }
        candidates.push(vec![S::zero(); cfg.nt]);
        candidates.push(PowerAllocation::uniform(budget, cfg.nt).levels().to_vec());
        for mode in 0..cfg.nt {
            let mut axis = vec![S::zero(); cfg.nt];
            axis[mode] = budget;
            candidates.push(axis);
        }
        for _ in 0..deviations {
            candidates.push(sample_simplex(budget, cfg.nt, rng));
        }

        for cand in candidates {
            let gain = utility_given_interference(cfg, dec, &f, &cand)? - current;
            if gain > epsilon_hat {
                epsilon_hat = gain;
                worst_user = k;
                worst_deviation = PowerAllocation::new(cand, budget)?;
            }
        }
    }

    Ok(EquilibriumCheck {
        is_ne: epsilon_hat <= tol,
        epsilon_hat,
        worst_user,
        worst_deviation,
    })
}
