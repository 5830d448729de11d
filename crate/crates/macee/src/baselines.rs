//! Uniform power allocation baseline and utility-region sampling.
//!
//! UPA users still play the game, but each action is constrained to the
//! uniform ray: one scalar total power, equally shared across transmit
//! modes. The region sampler draws feasible profiles and scalarized local
//! maxima to sketch the achievable utility set and its Pareto frontier.

use rand::Rng;

use crate::best_response::golden_section_max;
use crate::channel::{ChannelDecomposition, ChannelSet};
use crate::error::Result;
use crate::game::{
    interference_matrix, sample_simplex, utility, utility_given_interference, ActionProfile,
    GameConfig, PowerAllocation,
};
use crate::scalar::Scalar;
use crate::solvers::{run_dynamics, Algorithm, SolveReport, SolverSettings};

/// A feasible profile together with the utilities it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample<S> {
    pub profile: ActionProfile<S>,
    pub utilities: Vec<S>,
}

/// Best response restricted to the uniform ray: pick the scalar total power
/// in `[0, budget]` that maximizes the user's utility with the budget
/// equally shared across modes, by golden-section search to the bisection
/// tolerance (with the endpoints always among the candidates).
pub fn upa_best_response<S: Scalar>(
    cfg: &GameConfig<S>,
    dec: &ChannelDecomposition<S>,
    profile: &ActionProfile<S>,
    k: usize,
    settings: &SolverSettings<S>,
) -> Result<PowerAllocation<S>> {
    let f = interference_matrix(cfg, dec, profile, k)?;
    let nt = S::from_usize(cfg.nt).unwrap();
    let (q, _) = golden_section_max(
        |total: S| {
            let levels = vec![total / nt; cfg.nt];
            utility_given_interference(cfg, dec, &f, &levels)
                .expect("noise-shifted covariance is positive definite")
        },
        S::zero(),
        cfg.budgets[k],
        settings.br.eps1,
    );
    PowerAllocation::new(vec![q / nt; cfg.nt], cfg.budgets[k])
}

/// Gauss-Seidel dynamics over UPA best responses; same convergence contract
/// as the unconstrained solvers.
pub fn solve_upa_game<S: Scalar>(
    cfg: &GameConfig<S>,
    channels: &ChannelSet<S>,
    settings: &SolverSettings<S>,
) -> Result<SolveReport<S>> {
    run_dynamics(cfg, channels, settings, Algorithm::Upa, |cfg, ch, profile, k| {
        upa_best_response(cfg, &ch.decompositions[k], profile, k, settings)
    })
}

/// Sample the achievable utility region: `samples` uniform draws from each
/// user's solid simplex, plus (for two-user games) scalarized local maxima
/// of `w*u1 + (1-w)*u2` over 21 weights from 5 random starts each, found by
/// cyclic coordinate ascent.
pub fn sample_utility_region<S: Scalar, R: Rng>(
    cfg: &GameConfig<S>,
    channels: &ChannelSet<S>,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<RegionSample<S>>> {
    assert!(samples >= 1, "need at least one sample");
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let profile = random_profile(cfg, rng)?;
        out.push(evaluate(cfg, channels, profile)?);
    }
    if cfg.k_users == 2 {
        for weight_step in 0..=20usize {
            let w = S::real(weight_step as f64 / 20.0);
            for _ in 0..5 {
                let start = random_profile(cfg, rng)?;
                let profile = scalarized_ascent(cfg, channels, start, w)?;
                out.push(evaluate(cfg, channels, profile)?);
            }
        }
    }
    Ok(out)
}

/// Keep the non-dominated samples: a sample is dropped when another one is
/// at least as good for every user and strictly better for some user.
pub fn pareto_filter<S: Scalar>(samples: &[RegionSample<S>]) -> Vec<RegionSample<S>> {
    let dominates = |a: &[S], b: &[S]| {
        a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
    };
    samples
        .iter()
        .filter(|cand| {
            !samples
                .iter()
                .any(|other| dominates(&other.utilities, &cand.utilities))
        })
        .cloned()
        .collect()
}

fn random_profile<S: Scalar, R: Rng>(cfg: &GameConfig<S>, rng: &mut R) -> Result<ActionProfile<S>> {
    ActionProfile::new(
        (0..cfg.k_users)
            .map(|k| PowerAllocation::new(sample_simplex(cfg.budgets[k], cfg.nt, rng), cfg.budgets[k]))
            .collect::<Result<Vec<_>>>()?,
        cfg,
    )
}

fn evaluate<S: Scalar>(
    cfg: &GameConfig<S>,
    channels: &ChannelSet<S>,
    profile: ActionProfile<S>,
) -> Result<RegionSample<S>> {
    let utilities = (0..cfg.k_users)
        .map(|k| utility(cfg, &channels.decompositions[k], &profile, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionSample { profile, utilities })
}

/// Cyclic coordinate ascent on the weighted utility sum over every mode of
/// every user.
fn scalarized_ascent<S: Scalar>(
    cfg: &GameConfig<S>,
    channels: &ChannelSet<S>,
    start: ActionProfile<S>,
    w: S,
) -> Result<ActionProfile<S>> {
    let objective = |profile: &ActionProfile<S>| -> Result<S> {
        let u1 = utility(cfg, &channels.decompositions[0], profile, 0)?;
        let u2 = utility(cfg, &channels.decompositions[1], profile, 1)?;
        Ok(w * u1 + (S::one() - w) * u2)
    };
    let mut profile = start;
    let mut best = objective(&profile)?;
    for _ in 0..8 {
        let before = best;
        for k in 0..cfg.k_users {
            for mode in 0..cfg.nt {
                let others: S = profile
                    .allocation(k)
                    .levels()
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != mode)
                    .map(|(_, &p)| p)
                    .fold(S::zero(), |a, b| a + b);
                let hi = (cfg.budgets[k] - others).max(S::zero());
                let current = profile.clone();
                let (x, val) = golden_section_max(
                    |p: S| {
                        let mut levels = current.allocation(k).levels().to_vec();
                        levels[mode] = p;
                        let cand = current
                            .with_allocation(k, PowerAllocation::new(levels, cfg.budgets[k]).expect("within budget"));
                        objective(&cand).expect("objective evaluates on feasible profiles")
                    },
                    S::zero(),
                    hi,
                    S::real(1e-6).max(S::epsilon() * hi),
                );
                if val > best {
                    best = val;
                    let mut levels = profile.allocation(k).levels().to_vec();
                    levels[mode] = x;
                    profile =
                        profile.with_allocation(k, PowerAllocation::new(levels, cfg.budgets[k])?);
                }
            }
        }
        if best - before <= S::real(1e-10) {
            break;
        }
    }
    Ok(profile)
}
