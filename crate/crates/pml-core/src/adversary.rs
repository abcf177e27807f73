//! Honest-but-curious parameter recovery from public broadcasts.
//!
//! The adversary watches the broadcast stream of a disease-family
//! deployment and fits per-player cost parameters `(a_i, b_i)` by gradient
//! descent on a one-step prediction loss: pretend the players run the known
//! update rule with the fitted parameters, predict the next broadcast, and
//! penalise the squared error. The simulated update reuses the engine's
//! exact arithmetic (`aggregate`, the shared disease gradient, the same
//! expression grouping), so with the true parameters and noiseless
//! broadcasts the loss is exactly zero — any residual measures parameter
//! mismatch plus injected noise, nothing else.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{Mechanism, StepSchedule};
use crate::error::{Error, Result};
use crate::game::{
    aggregate, disease_gradient, AggregativeGame, ConstraintSet, CostFamily, CostProfile,
    Strategy, StrategyProfile, PlayerCost,
};
use crate::privacy::prior::ProfileSampler;

/// The adversary's evolving estimate: fitted parameters per player plus a
/// simulated strategy state advanced alongside the real run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryState {
    pub a_hat: Vec<DVector<f64>>,
    pub b_hat: Vec<DMatrix<f64>>,
    pub x_hat: Vec<Strategy>,
    pub include_chain: bool,
    /// Mirror the engine's projected strategy step. Keeps the simulated
    /// state bounded on box-constrained games; loss gradients are masked at
    /// clamped coordinates, where the prediction is locally flat.
    pub projected: bool,
    /// Fit the interaction matrices. When off, `b_hat` stays at zero — the
    /// right model for decoupled deployments, and it removes the
    /// estimate-feedback loop that can blow up unconstrained simulations.
    pub fit_interaction: bool,
}

/// Knobs of a single attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Gradient-descent learning rate; halved and retried on divergence.
    pub nu: f64,
    /// Parameter updates per observed round pair.
    pub inner_epochs: usize,
    /// Whether the fitted pseudo-gradient keeps the aggregate chain term,
    /// matching the engine's default.
    pub include_chain: bool,
    pub seed: u64,
    /// How many times to halve `nu` after a divergent attempt.
    pub max_retries: usize,
    /// Mirror the engine's projected strategy step (set this when the
    /// observed deployment projects).
    pub projected: bool,
    /// Fit the interaction matrices; off freezes `b_hat` at zero.
    pub fit_interaction: bool,
}

impl AttackConfig {
    pub fn new(nu: f64, seed: u64) -> Self {
        AttackConfig {
            nu,
            inner_epochs: 1,
            include_chain: true,
            seed,
            max_retries: 5,
            projected: false,
            fit_interaction: true,
        }
    }
}

/// Standard-normal parameter guesses; the simulated strategies start at the
/// first broadcast, the noisy shadow of the true start. With
/// `fit_interaction` off the interaction guesses are zero instead.
pub fn init_adversary(
    game: &AggregativeGame,
    o0: &[Strategy],
    cfg: &AttackConfig,
) -> Result<AdversaryState> {
    game.check_profile_shape(o0)?;
    let n = game.n_players();
    let dim = game.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut a_hat = Vec::with_capacity(n);
    let mut b_hat = Vec::with_capacity(n);
    for _ in 0..n {
        a_hat.push(DVector::from_fn(dim, |_, _| rng.sample(StandardNormal)));
        b_hat.push(if cfg.fit_interaction {
            DMatrix::from_fn(dim, dim, |_, _| rng.sample(StandardNormal))
        } else {
            DMatrix::zeros(dim, dim)
        });
    }
    Ok(AdversaryState {
        a_hat,
        b_hat,
        x_hat: o0.to_vec(),
        include_chain: cfg.include_chain,
        projected: cfg.projected,
        fit_interaction: cfg.fit_interaction,
    })
}

/// The fitted strategy step for one player, with the coordinate mask the
/// projection leaves free: `None` means the step passed through unclamped
/// (no projection, or an unbounded seat), so the prediction is locally
/// linear in the parameters everywhere.
fn step_with_mask(
    game: &AggregativeGame,
    state: &AdversaryState,
    i: usize,
    g: DVector<f64>,
    lam: f64,
) -> Result<(Strategy, Option<Strategy>)> {
    let stepped = &state.x_hat[i] - g * lam;
    if !state.projected {
        return Ok((stepped, None));
    }
    match game.constraint(i) {
        ConstraintSet::Unbounded { .. } => Ok((stepped, None)),
        c @ ConstraintSet::Box { .. } => {
            let clamped = c.project(&stepped);
            let mask = DVector::from_fn(stepped.len(), |j, _| {
                if clamped[j] == stepped[j] {
                    1.0
                } else {
                    0.0
                }
            });
            Ok((clamped, Some(mask)))
        }
        ConstraintSet::Simplex { .. } => Err(Error::invalid(
            "the projected attack supports box or unbounded constraints only",
        )),
    }
}

/// One-step prediction loss at round `k`: the squared distance between the
/// broadcasts the fitted parameters predict for round `k + 1` and the
/// broadcasts actually seen.
pub fn attack_loss(
    game: &AggregativeGame,
    state: &AdversaryState,
    o_k: &[Strategy],
    o_next: &[Strategy],
    steps: &StepSchedule,
    k: usize,
) -> Result<f64> {
    let (residuals, _) = residuals_and_masks(game, state, o_k, o_next, steps, k)?;
    Ok(residuals.iter().map(|r| r.norm_squared()).sum())
}

/// Per-player residuals `pred_i - o_i^{k+1}`, where the prediction mirrors
/// the engine's estimate update term by term, together with the projection
/// masks needed by the parameter gradients.
fn residuals_and_masks(
    game: &AggregativeGame,
    state: &AdversaryState,
    o_k: &[Strategy],
    o_next: &[Strategy],
    steps: &StepSchedule,
    k: usize,
) -> Result<(Vec<DVector<f64>>, Vec<Option<Strategy>>)> {
    game.check_profile_shape(o_k)?;
    game.check_profile_shape(o_next)?;
    let n = game.n_players();
    let lam = steps.lambda(k);
    let mean = aggregate(o_k)?;
    let mut residuals = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for i in 0..n {
        let g = disease_gradient(
            &state.a_hat[i],
            &state.b_hat[i],
            &state.x_hat[i],
            &o_k[i],
            n,
            state.include_chain,
        );
        let (x_next, mask) = step_with_mask(game, state, i, g, lam)?;
        let dx = x_next - &state.x_hat[i];
        let pred = &mean + dx;
        residuals.push(pred - &o_next[i]);
        masks.push(mask);
    }
    Ok((residuals, masks))
}

/// Analytic loss gradients in the fitted parameters, one `(a, b)` pair per
/// player. Derivation: the residual is linear in the parameters with
/// sensitivity `-lambda^k` times the pseudo-gradient's parameter Jacobian.
/// At coordinates a projection clamped, the prediction is locally constant
/// in the parameters, so those residual components drop out of the
/// gradients (but still count toward the loss).
pub fn parameter_gradients(
    game: &AggregativeGame,
    state: &AdversaryState,
    o_k: &[Strategy],
    o_next: &[Strategy],
    steps: &StepSchedule,
    k: usize,
) -> Result<(Vec<DVector<f64>>, Vec<DMatrix<f64>>)> {
    let (residuals, masks) = residuals_and_masks(game, state, o_k, o_next, steps, k)?;
    let n = game.n_players();
    let dim = game.dim();
    let lam = steps.lambda(k);
    let mut grad_a = Vec::with_capacity(n);
    let mut grad_b = Vec::with_capacity(n);
    for (i, r) in residuals.iter().enumerate() {
        let rm = match &masks[i] {
            Some(m) => r.component_mul(m),
            None => r.clone(),
        };
        grad_a.push(&rm * (-2.0 * lam));
        if state.fit_interaction {
            let mut gb = (&o_k[i] * rm.transpose()) * (2.0 * lam);
            if state.include_chain {
                let one_minus = state.x_hat[i].map(|v| 1.0 - v);
                gb -= (&rm * one_minus.transpose()) * (2.0 * lam / n as f64);
            }
            grad_b.push(gb);
        } else {
            grad_b.push(DMatrix::zeros(dim, dim));
        }
    }
    Ok((grad_a, grad_b))
}

/// One gradient-descent update of the fitted parameters.
pub fn attack_step(
    game: &AggregativeGame,
    state: &mut AdversaryState,
    o_k: &[Strategy],
    o_next: &[Strategy],
    steps: &StepSchedule,
    k: usize,
    nu: f64,
) -> Result<()> {
    let (grad_a, grad_b) = parameter_gradients(game, state, o_k, o_next, steps, k)?;
    for i in 0..game.n_players() {
        state.a_hat[i] -= &grad_a[i] * nu;
        if state.fit_interaction {
            state.b_hat[i] -= &grad_b[i] * nu;
        }
    }
    for i in 0..game.n_players() {
        if state.a_hat[i].iter().any(|v| !v.is_finite())
            || state.b_hat[i].iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                iteration: k,
                context: format!("fitted parameters of player {i}"),
            });
        }
    }
    Ok(())
}

/// Advance the simulated strategies one round with the current parameters,
/// using the engine's exact update expression.
pub fn advance_estimate(
    game: &AggregativeGame,
    state: &mut AdversaryState,
    o_k: &[Strategy],
    steps: &StepSchedule,
    k: usize,
) -> Result<()> {
    game.check_profile_shape(o_k)?;
    let n = game.n_players();
    let lam = steps.lambda(k);
    for i in 0..n {
        let g = disease_gradient(
            &state.a_hat[i],
            &state.b_hat[i],
            &state.x_hat[i],
            &o_k[i],
            n,
            state.include_chain,
        );
        let (x_next, _) = step_with_mask(game, state, i, g, lam)?;
        state.x_hat[i] = x_next;
        if state.x_hat[i].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: k,
                context: format!("simulated strategy of player {i}"),
            });
        }
    }
    Ok(())
}

/// A finished attack: parameter snapshots per round (entry 0 is the random
/// initialisation) plus the learning rate that survived.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub theta: Vec<DVector<f64>>,
    pub losses: Vec<f64>,
    pub effective_nu: f64,
    pub retries: usize,
}

/// Run the full online attack over a broadcast sequence. On divergence the
/// learning rate is halved and the attack restarts from the same seed, up
/// to `max_retries` times.
pub fn run_attack(
    game: &AggregativeGame,
    o: &[StrategyProfile],
    steps: &StepSchedule,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    if game.family() != CostFamily::Disease {
        return Err(Error::invalid(
            "the parameter-recovery attack targets the disease family",
        ));
    }
    if o.len() < 2 {
        return Err(Error::invalid("attack needs at least two observed rounds"));
    }
    if !(cfg.nu > 0.0) || !cfg.nu.is_finite() {
        return Err(Error::invalid(format!("need learning rate > 0, got {}", cfg.nu)));
    }
    if cfg.inner_epochs == 0 {
        return Err(Error::invalid("need at least one inner epoch"));
    }
    steps.validate()?;

    let mut last_err = None;
    for attempt in 0..=cfg.max_retries {
        let nu = cfg.nu / (1u64 << attempt) as f64;
        match attack_once(game, o, steps, cfg, nu) {
            Ok(mut outcome) => {
                outcome.effective_nu = nu;
                outcome.retries = attempt;
                return Ok(outcome);
            }
            Err(e @ Error::NonFinite { .. }) => last_err = Some(e),
            Err(other) => return Err(other),
        }
    }
    Err(last_err.expect("loop ran at least once"))
}

fn attack_once(
    game: &AggregativeGame,
    o: &[StrategyProfile],
    steps: &StepSchedule,
    cfg: &AttackConfig,
    nu: f64,
) -> Result<AttackOutcome> {
    let mut state = init_adversary(game, &o[0], cfg)?;
    let mut theta = vec![parameter_vector(&state.a_hat, &state.b_hat)];
    let mut losses = Vec::with_capacity(o.len() - 1);
    for k in 0..o.len() - 1 {
        losses.push(attack_loss(game, &state, &o[k], &o[k + 1], steps, k)?);
        for _ in 0..cfg.inner_epochs {
            attack_step(game, &mut state, &o[k], &o[k + 1], steps, k, nu)?;
        }
        advance_estimate(game, &mut state, &o[k], steps, k)?;
        theta.push(parameter_vector(&state.a_hat, &state.b_hat));
    }
    Ok(AttackOutcome {
        theta,
        losses,
        effective_nu: nu,
        retries: 0,
    })
}

/// Flatten per-player parameters into one direction vector: all `a_i` in
/// player order, then each `b_i` in column-major order.
pub fn parameter_vector(a: &[DVector<f64>], b: &[DMatrix<f64>]) -> DVector<f64> {
    let mut out = Vec::new();
    for ai in a {
        out.extend_from_slice(ai.as_slice());
    }
    for bi in b {
        out.extend_from_slice(bi.as_slice());
    }
    DVector::from_vec(out)
}

/// The true parameter direction of a disease-family cost profile, in the
/// same layout as [`parameter_vector`].
pub fn cost_parameter_vector(profile: &CostProfile) -> Result<DVector<f64>> {
    let mut a = Vec::with_capacity(profile.n_players());
    let mut b = Vec::with_capacity(profile.n_players());
    for (i, c) in profile.players.iter().enumerate() {
        match c {
            PlayerCost::Disease { a: ai, b: bi } => {
                a.push(ai.clone());
                b.push(bi.clone());
            }
            PlayerCost::Quadratic { .. } => {
                return Err(Error::invalid(format!(
                    "player {i} is not a disease-family cost"
                )))
            }
        }
    }
    Ok(parameter_vector(&a, &b))
}

/// Slice one player's `(a_i, b_i)` block out of a flattened direction.
pub fn player_component(
    theta: &DVector<f64>,
    player: usize,
    n_players: usize,
    dim: usize,
) -> Result<DVector<f64>> {
    let expected = n_players * dim + n_players * dim * dim;
    if theta.len() != expected {
        return Err(Error::invalid(format!(
            "direction has length {}, expected {expected}",
            theta.len()
        )));
    }
    if player >= n_players {
        return Err(Error::invalid(format!(
            "player {player} out of range for {n_players} players"
        )));
    }
    let mut out = Vec::with_capacity(dim + dim * dim);
    out.extend_from_slice(&theta.as_slice()[player * dim..(player + 1) * dim]);
    let b_start = n_players * dim + player * dim * dim;
    out.extend_from_slice(&theta.as_slice()[b_start..b_start + dim * dim]);
    Ok(DVector::from_vec(out))
}

/// Directional recovery gain `cos(theta, theta_hat) + 1`, in `[0, 2]`:
/// 2 means perfectly aligned, 1 uninformed, 0 anti-aligned. Scale-free in
/// both arguments.
pub fn gain(theta: &DVector<f64>, theta_hat: &DVector<f64>) -> Result<f64> {
    if theta.len() != theta_hat.len() {
        return Err(Error::invalid(format!(
            "direction lengths differ: {} vs {}",
            theta.len(),
            theta_hat.len()
        )));
    }
    let nt = theta.norm();
    let nh = theta_hat.norm();
    if nt == 0.0 {
        return Err(Error::ZeroVector("true parameter direction".into()));
    }
    if nh == 0.0 {
        return Err(Error::ZeroVector("recovered parameter direction".into()));
    }
    Ok(theta.dot(theta_hat) / (nt * nh) + 1.0)
}

/// Ensemble settings for [`empirical_leakage`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub nu: f64,
    pub inner_epochs: usize,
    pub include_chain: bool,
    pub max_retries: usize,
    pub projected: bool,
    pub fit_interaction: bool,
}

impl EnsembleConfig {
    pub fn new(n_samples: usize, seed: u64, nu: f64) -> Self {
        EnsembleConfig {
            n_samples,
            seed,
            nu,
            inner_epochs: 1,
            include_chain: true,
            max_retries: 5,
            projected: false,
            fit_interaction: true,
        }
    }
}

/// Mean recovery gain per round over an ensemble of fresh draws
/// (profile from the prior, run noise, adversary initialisation).
///
/// Round 0 is the exact pre-observation baseline: gain 1, log-gain 0, by
/// definition rather than measurement. `first` tracks the gain restricted
/// to player 0's parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSeries {
    pub mean_gain: Vec<f64>,
    pub log_mean_gain: Vec<f64>,
    pub mean_gain_first: Vec<f64>,
    pub log_mean_gain_first: Vec<f64>,
    pub n_samples: usize,
    /// Learning rate each draw settled on after divergence halving.
    pub effective_nus: Vec<f64>,
}

pub fn empirical_leakage(
    game: &AggregativeGame,
    sampler: &dyn ProfileSampler,
    mech: &Mechanism,
    horizon: usize,
    cfg: &EnsembleConfig,
) -> Result<LeakageSeries> {
    if cfg.n_samples == 0 {
        return Err(Error::invalid("ensemble needs n_samples >= 1"));
    }
    if sampler.n_players() != game.n_players() {
        return Err(Error::invalid(format!(
            "sampler draws {} players but game has {}",
            sampler.n_players(),
            game.n_players()
        )));
    }
    mech.validate(game)?;
    let n = game.n_players();
    let dim = game.dim();
    let mut master = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut sum = vec![0.0f64; horizon + 1];
    let mut sum_first = vec![0.0f64; horizon + 1];
    let mut effective_nus = Vec::with_capacity(cfg.n_samples);

    use rand::RngCore;
    for _ in 0..cfg.n_samples {
        let profile_seed = master.next_u64();
        let run_seed = master.next_u64();
        let attack_seed = master.next_u64();

        let mut profile_rng = ChaCha20Rng::seed_from_u64(profile_seed);
        let profile = sampler.sample_profile(&mut profile_rng);
        let traj = mech.run(game, &profile, horizon, run_seed)?;
        let attack_cfg = AttackConfig {
            nu: cfg.nu,
            inner_epochs: cfg.inner_epochs,
            include_chain: cfg.include_chain,
            seed: attack_seed,
            max_retries: cfg.max_retries,
            projected: cfg.projected,
            fit_interaction: cfg.fit_interaction,
        };
        let outcome = run_attack(game, &traj.o, &mech.steps, &attack_cfg)?;
        effective_nus.push(outcome.effective_nu);

        let theta = cost_parameter_vector(&profile)?;
        let theta_first = player_component(&theta, 0, n, dim)?;
        sum[0] += 1.0;
        sum_first[0] += 1.0;
        for k in 1..=horizon {
            sum[k] += gain(&theta, &outcome.theta[k])?;
            let hat_first = player_component(&outcome.theta[k], 0, n, dim)?;
            sum_first[k] += gain(&theta_first, &hat_first)?;
        }
    }

    let scale = 1.0 / cfg.n_samples as f64;
    let mean_gain: Vec<f64> = sum.iter().map(|s| s * scale).collect();
    let mean_gain_first: Vec<f64> = sum_first.iter().map(|s| s * scale).collect();
    Ok(LeakageSeries {
        log_mean_gain: mean_gain.iter().map(|g| g.ln()).collect(),
        log_mean_gain_first: mean_gain_first.iter().map(|g| g.ln()).collect(),
        mean_gain,
        mean_gain_first,
        n_samples: cfg.n_samples,
        effective_nus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ScheduleKind;
    use crate::game::ConstraintSet;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn parameter_vector_layout() {
        let a = vec![dvec(&[1.0]), dvec(&[2.0])];
        let b = vec![
            DMatrix::from_row_slice(1, 1, &[3.0]),
            DMatrix::from_row_slice(1, 1, &[4.0]),
        ];
        let theta = parameter_vector(&a, &b);
        assert_eq!(theta.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let first = player_component(&theta, 0, 2, 1).unwrap();
        assert_eq!(first.as_slice(), &[1.0, 3.0]);
        let second = player_component(&theta, 1, 2, 1).unwrap();
        assert_eq!(second.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn b_blocks_flatten_column_major() {
        let a = vec![dvec(&[0.0, 0.0])];
        let b = vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])];
        let theta = parameter_vector(&a, &b);
        // column-major: (1,3) then (2,4)
        assert_eq!(theta.as_slice(), &[0.0, 0.0, 1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn gain_range_and_extremes() {
        let t = dvec(&[1.0, 0.0]);
        assert_eq!(gain(&t, &dvec(&[2.0, 0.0])).unwrap(), 2.0);
        assert_eq!(gain(&t, &dvec(&[-3.0, 0.0])).unwrap(), 0.0);
        assert!((gain(&t, &dvec(&[0.0, 5.0])).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            gain(&t, &dvec(&[0.0, 0.0])),
            Err(Error::ZeroVector(_))
        ));
        assert!(gain(&t, &dvec(&[1.0])).is_err());
    }

    #[test]
    fn zero_step_makes_loss_parameter_free() {
        let game =
            AggregativeGame::uniform(CostFamily::Disease, 2, ConstraintSet::unit_box(1)).unwrap();
        let o_k = vec![dvec(&[0.3]), dvec(&[0.7])];
        let o_next = vec![dvec(&[0.4]), dvec(&[0.6])];
        // lambda = 0 is representable even though the engine would reject it
        let frozen = StepSchedule {
            step: ScheduleKind::Harmonic {
                q1: 0.0,
                q2: 1.0,
                q3: 0.0,
            },
            mixing: None,
        };
        let mut s1 = init_adversary(&game, &o_k, &AttackConfig::new(0.1, 1)).unwrap();
        let s2 = init_adversary(&game, &o_k, &AttackConfig::new(0.1, 2)).unwrap();
        assert_ne!(s1.a_hat, s2.a_hat);
        let l1 = attack_loss(&game, &s1, &o_k, &o_next, &frozen, 0).unwrap();
        let l2 = attack_loss(&game, &s2, &o_k, &o_next, &frozen, 0).unwrap();
        assert_eq!(l1, l2);
        // and the parameter gradients vanish
        let (ga, gb) = parameter_gradients(&game, &s1, &o_k, &o_next, &frozen, 0).unwrap();
        assert!(ga.iter().all(|g| g.norm() == 0.0));
        assert!(gb.iter().all(|g| g.norm() == 0.0));
        // prediction with frozen strategies is just the broadcast mean
        s1.x_hat = o_k.clone();
        let mean = aggregate(&o_k).unwrap();
        let expect: f64 = o_next.iter().map(|o| (&mean - o).norm_squared()).sum();
        assert!((l1 - expect).abs() < 1e-15);
    }

    #[test]
    fn retry_halves_learning_rate() {
        // a wildly unstable rate on a synthetic sequence forces halving
        let game =
            AggregativeGame::uniform(CostFamily::Disease, 2, ConstraintSet::unit_box(1)).unwrap();
        let o: Vec<StrategyProfile> = (0..8)
            .map(|k| {
                let v = 1.0 + k as f64;
                vec![dvec(&[v]), dvec(&[-v])]
            })
            .collect();
        let steps = StepSchedule::harmonic(1.0, 1.0, 0.0);
        let cfg = AttackConfig {
            nu: 1e12,
            ..AttackConfig::new(1e12, 3)
        };
        match run_attack(&game, &o, &steps, &cfg) {
            Ok(out) => {
                assert!(out.retries > 0);
                assert!(out.effective_nu < 1e12);
            }
            Err(Error::NonFinite { .. }) => {} // every halving still diverged: acceptable
            Err(other) => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn clamped_coordinates_drop_out_of_gradients() {
        let game =
            AggregativeGame::uniform(CostFamily::Disease, 2, ConstraintSet::unit_box(1)).unwrap();
        let o_k = vec![dvec(&[0.4]), dvec(&[0.6])];
        let o_next = vec![dvec(&[0.1]), dvec(&[0.9])];
        let steps = StepSchedule::harmonic(1.0, 1.0, 0.0); // lambda = 1
        let mut state = init_adversary(
            &game,
            &o_k,
            &AttackConfig {
                projected: true,
                ..AttackConfig::new(0.1, 5)
            },
        )
        .unwrap();
        // player 0's step shoots past the box; player 1's stays inside
        state.x_hat = vec![dvec(&[0.9]), dvec(&[0.5])];
        state.a_hat = vec![dvec(&[-10.0]), dvec(&[0.2])];
        state.b_hat = vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)];
        let (ga, gb) = parameter_gradients(&game, &state, &o_k, &o_next, &steps, 0).unwrap();
        assert_eq!(ga[0].as_slice(), &[0.0]);
        assert_eq!(gb[0].as_slice(), &[0.0]);
        assert!(ga[1].norm() > 0.0);
        // the clamped residual still counts toward the loss
        let loss = attack_loss(&game, &state, &o_k, &o_next, &steps, 0).unwrap();
        let unprojected = AdversaryState {
            projected: false,
            ..state.clone()
        };
        let loss_unprojected =
            attack_loss(&game, &unprojected, &o_k, &o_next, &steps, 0).unwrap();
        assert_ne!(loss, loss_unprojected);
        assert!(loss.is_finite() && loss > 0.0);
    }

    #[test]
    fn projected_attack_rejects_simplex_seats() {
        let game =
            AggregativeGame::uniform(CostFamily::Disease, 2, ConstraintSet::Simplex { dim: 2 })
                .unwrap();
        let o_k = vec![dvec(&[0.4, 0.6]), dvec(&[0.5, 0.5])];
        let steps = StepSchedule::harmonic(1.0, 1.0, 0.0);
        let state = init_adversary(
            &game,
            &o_k,
            &AttackConfig {
                projected: true,
                ..AttackConfig::new(0.1, 5)
            },
        )
        .unwrap();
        assert!(attack_loss(&game, &state, &o_k, &o_k, &steps, 0).is_err());
    }

    #[test]
    fn frozen_interaction_stays_zero() {
        let game =
            AggregativeGame::uniform(CostFamily::Disease, 2, ConstraintSet::Unbounded { dim: 1 })
                .unwrap();
        let o_k = vec![dvec(&[0.3]), dvec(&[0.7])];
        let o_next = vec![dvec(&[0.2]), dvec(&[0.8])];
        let steps = StepSchedule::harmonic(1.0, 1.0, 0.0);
        let cfg = AttackConfig {
            fit_interaction: false,
            ..AttackConfig::new(0.05, 9)
        };
        let mut state = init_adversary(&game, &o_k, &cfg).unwrap();
        assert!(state.b_hat.iter().all(|b| b.norm() == 0.0));
        for _ in 0..3 {
            attack_step(&game, &mut state, &o_k, &o_next, &steps, 0, cfg.nu).unwrap();
        }
        assert!(state.b_hat.iter().all(|b| b.norm() == 0.0));
        assert!(state.a_hat.iter().any(|a| a.norm() > 0.0));
    }
}
