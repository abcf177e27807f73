//! Leakage and privacy bounds computed from replayed broadcasts.
//!
//! The central object is the per-round sensitivity: replay the same
//! broadcasts under two candidate cost profiles and take the L1 distance
//! between the replayed aggregate estimates at each round. Dividing by the
//! round's noise scale and summing gives a certified log-ratio budget
//! between the two profiles' broadcast densities, and everything here —
//! sampled leakage bounds, adjacency certificates, closed forms — is an
//! arrangement of those sums.
//!
//! Bounds that scan observations are *sampled*: they take the infimum or
//! supremum over a finite, caller-supplied observation set rather than over
//! all possible broadcast sequences, and carry the set size so reports can
//! say so.

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{advance, Mechanism, NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::game::{AggregativeGame, CostProfile, PlayerCost, StrategyProfile};
use crate::numeric::{l1_distance, ln_exp_diff, logsumexp};
use crate::privacy::prior::DiscretePrior;

use rand::SeedableRng;

/// A labelled broadcast sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub label: String,
    #[serde(with = "serde_obs")]
    pub rounds: Vec<StrategyProfile>,
}

mod serde_obs {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    type Obs = Vec<Vec<DVector<f64>>>;

    pub fn serialize<S: Serializer>(v: &Obs, s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<&[f64]>> = v
            .iter()
            .map(|p| p.iter().map(|x| x.as_slice()).collect())
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Obs, D::Error> {
        let raw = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|p| p.into_iter().map(DVector::from_vec).collect())
            .collect())
    }
}

/// A finite set of broadcast sequences to scan bounds over.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationSet {
    pub entries: Vec<ObservationEntry>,
}

impl ObservationSet {
    pub fn push(&mut self, label: impl Into<String>, rounds: Vec<StrategyProfile>) {
        self.entries.push(ObservationEntry {
            label: label.into(),
            rounds,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// How to build an observation set from real runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationSampler {
    /// Number of runs; generator profiles cycle through the prior support.
    pub n_runs: usize,
    /// Also include, per run, the two shifted sequences `o ± 3 M^k` that
    /// push every residual one-sided. These catch the worst case much
    /// earlier than unshifted runs.
    pub include_probes: bool,
    pub seed: u64,
}

/// Draw observation sequences by running the mechanism under profiles cycled
/// from the prior support.
pub fn sample_observations(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    mech: &Mechanism,
    horizon: usize,
    cfg: &ObservationSampler,
) -> Result<ObservationSet> {
    if cfg.n_runs == 0 {
        return Err(Error::invalid("observation sampling needs n_runs >= 1"));
    }
    mech.validate(game)?;
    mech.require_positive_noise(horizon)?;
    let mut master = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut set = ObservationSet::default();
    for r in 0..cfg.n_runs {
        let idx = r % prior.len();
        let profile = prior.profile(idx);
        let seed = master.next_u64();
        let t = mech.run(game, profile, horizon, seed)?;
        if cfg.include_probes {
            for (sign, tag) in [(3.0, "plus"), (-3.0, "minus")] {
                let shifted: Vec<StrategyProfile> = t
                    .o
                    .iter()
                    .enumerate()
                    .map(|(k, o_k)| {
                        let shift = sign * mech.noise.scale(k);
                        o_k.iter().map(|oi| oi.map(|v| v + shift)).collect()
                    })
                    .collect();
                set.push(format!("probe-{tag}-{r}-{}", profile.id), shifted);
            }
        }
        set.push(format!("run-{r}-{}", profile.id), t.o);
    }
    Ok(set)
}

/// Build a broadcast sequence that maximally favours `f0` over `f1` in
/// `target_player`'s seat: every player broadcasts the same value each
/// round, chosen adaptively on the far side of the `f0`-replay estimate.
///
/// Under such equal broadcasts the log-ratio between two profiles that
/// differ only at `target_player` collapses to that player's own residual
/// gap, and this construction drives every term of the gap one-sided, so
/// the swap ratio it realises is the largest the mechanism admits.
pub fn equal_observation_probe(
    game: &AggregativeGame,
    f0: &PlayerCost,
    f1: &PlayerCost,
    mech: &Mechanism,
    horizon: usize,
    target_player: usize,
) -> Result<Vec<StrategyProfile>> {
    if horizon == 0 {
        return Err(Error::invalid("probe needs horizon >= 1"));
    }
    mech.validate(game)?;
    mech.require_positive_noise(horizon)?;
    game.check_cost(f0)?;
    game.check_cost(f1)?;
    let n = game.n_players();
    if target_player >= n {
        return Err(Error::invalid(format!(
            "target player {target_player} out of range for {n} players"
        )));
    }
    let ref0 = CostProfile::new("probe-ref-0", vec![f0.clone(); n]);
    let ref1 = CostProfile::new("probe-ref-1", vec![f1.clone(); n]);

    let mut xa = mech.x0.clone();
    let mut va = mech.x0.clone();
    let mut xb = mech.x0.clone();
    let mut vb = mech.x0.clone();
    let mut obs: Vec<StrategyProfile> = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let m = mech.noise.scale(k);
        let obar = {
            let v0 = &va[target_player];
            let v1 = &vb[target_player];
            nalgebra::DVector::from_fn(game.dim(), |c, _| {
                // land on the f0 side, a few scales out
                if v0[c] <= v1[c] {
                    v0[c] - 3.0 * m
                } else {
                    v0[c] + 3.0 * m
                }
            })
        };
        let o_k: StrategyProfile = vec![obar; n];
        obs.push(o_k);
        if k < horizon {
            let o_ref = obs.last().expect("just pushed").clone();
            advance(game, &ref0, &mech.rule, &mech.steps, k, &mut xa, &mut va, &o_ref)?;
            advance(game, &ref1, &mech.rule, &mech.steps, k, &mut xb, &mut vb, &o_ref)?;
        }
    }
    Ok(obs)
}

/// L1 distance between two joint states (all players, all coordinates).
fn profile_l1(a: &StrategyProfile, b: &StrategyProfile) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| l1_distance(x.as_slice(), y.as_slice()))
        .sum()
}

/// Replayed aggregate estimates for every support profile under one
/// broadcast sequence: `result[profile][round]` is a joint state.
fn replay_support(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    o: &[StrategyProfile],
    mech: &Mechanism,
) -> Result<Vec<Vec<StrategyProfile>>> {
    (0..prior.len())
        .map(|s| mech.replay(game, prior.profile(s), o).map(|(_, vs)| vs))
        .collect()
}

fn inverse_scales(noise: &NoiseSchedule, rounds: usize) -> Result<Vec<f64>> {
    (0..rounds)
        .map(|k| {
            let m = noise.scale(k);
            if m <= 0.0 {
                Err(Error::InvalidSchedule(format!(
                    "round {k} has noise scale {m}; need > 0"
                )))
            } else {
                Ok(1.0 / m)
            }
        })
        .collect()
}

/// Log-density of `o` given replayed estimates `vs` (one joint state per
/// round) under per-round scales `1/inv_m`.
fn density_from_estimates(o: &[StrategyProfile], vs: &[StrategyProfile], inv_m: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, o_k) in o.iter().enumerate() {
        let m_term = -(2.0 / inv_m[k]).ln();
        for (oi, vi) in o_k.iter().zip(&vs[k]) {
            for c in 0..oi.len() {
                total += m_term - (oi[c] - vi[c]).abs() * inv_m[k];
            }
        }
    }
    total
}

/// Per-round replay divergence between two cost profiles at one broadcast
/// sequence: the L1 distance between the aggregate estimates each would
/// have carried into round `k`.
pub fn sensitivity(
    game: &AggregativeGame,
    f: &CostProfile,
    f_alt: &CostProfile,
    o: &[StrategyProfile],
    mech: &Mechanism,
    k: usize,
) -> Result<f64> {
    if k >= o.len() {
        return Err(Error::invalid(format!(
            "round {k} out of range for {} observed rounds",
            o.len()
        )));
    }
    let (_, va) = mech.replay(game, f, o)?;
    let (_, vb) = mech.replay(game, f_alt, o)?;
    Ok(profile_l1(&va[k], &vb[k]))
}

/// One leakage bound together with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub eps: f64,
    /// Which estimator produced it.
    pub method: String,
    /// Observation label attaining the bound, when the estimator scans
    /// observations individually.
    pub witness_observation: Option<String>,
    /// Profile attaining the inner extremum, when meaningful.
    pub witness_profile: Option<String>,
    pub n_observations: usize,
}

/// The three sampled leakage bounds, always in tightness order
/// `expectation <= per_profile <= sensitivity_sum` on the same observation
/// set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageBounds {
    /// Tightest: discounts the prior expectation by each profile's replay
    /// divergence from a candidate alternative, then takes the worst
    /// sampled (observation, alternative) pair.
    pub expectation: BoundEstimate,
    /// Replaces per-observation divergences by each profile's worst
    /// divergence over the whole set before taking the expectation.
    pub per_profile: BoundEstimate,
    /// Coarsest: worst divergence per round, summed against the noise
    /// scales; prior-independent apart from the support.
    pub sensitivity_sum: BoundEstimate,
}

pub fn leakage_bounds(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    obs: &ObservationSet,
    mech: &Mechanism,
) -> Result<LeakageBounds> {
    if obs.is_empty() {
        return Err(Error::invalid("leakage bounds need at least one observation"));
    }
    mech.validate(game)?;
    let s_count = prior.len();
    let log_probs: Vec<f64> = (0..s_count).map(|s| prior.log_prob(s)).collect();
    // measure discounts against the represented prior mass (off 1 by at most
    // a few ulp) so zero divergence certifies exactly zero leakage
    let norm = logsumexp(&log_probs);

    let mut best_val = f64::INFINITY; // min over (obs, alternative) of ln E
    let mut best_witness: Option<(String, String)> = None;
    // worst discount per (profile, round) across the whole set
    let mut dprime: Vec<Vec<f64>> = vec![Vec::new(); s_count];
    let mut max_rounds = 0usize;

    for entry in &obs.entries {
        let rounds = entry.rounds.len();
        let inv_m = inverse_scales(&mech.noise, rounds)?;
        let vs = replay_support(game, prior, &entry.rounds, mech)?;
        max_rounds = max_rounds.max(rounds);
        for d in &mut dprime {
            d.resize(max_rounds, 0.0);
        }
        // pairwise per-round divergences, symmetric in (f, alternative)
        for alt in 0..s_count {
            let mut terms = Vec::with_capacity(s_count);
            for f in 0..s_count {
                let mut total = 0.0;
                for k in 0..rounds {
                    let delta = profile_l1(&vs[f][k], &vs[alt][k]);
                    total += delta * inv_m[k];
                    if delta * inv_m[k] > dprime[f][k] * inv_m[k] {
                        dprime[f][k] = delta;
                    }
                }
                terms.push(log_probs[f] - total);
            }
            let val = logsumexp(&terms) - norm;
            if val < best_val {
                best_val = val;
                best_witness = Some((entry.label.clone(), prior.profile(alt).id.clone()));
            }
        }
    }

    let inv_m_all = inverse_scales(&mech.noise, max_rounds)?;
    let discounted: Vec<f64> = (0..s_count)
        .map(|f| {
            dprime[f]
                .iter()
                .zip(&inv_m_all)
                .map(|(d, i)| d * i)
                .sum::<f64>()
        })
        .collect();
    let per_profile_terms: Vec<f64> = (0..s_count)
        .map(|f| log_probs[f] - discounted[f])
        .collect();
    let per_profile_eps = norm - logsumexp(&per_profile_terms);
    let worst_profile = discounted
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(f, _)| prior.profile(f).id.clone());

    let sum_eps: f64 = (0..max_rounds)
        .map(|k| {
            let worst = (0..s_count).map(|f| dprime[f][k]).fold(0.0, f64::max);
            worst * inv_m_all[k]
        })
        .sum();

    let (witness_observation, witness_profile) = match best_witness {
        Some((o, p)) => (Some(o), Some(p)),
        None => (None, None),
    };
    let n = obs.len();
    Ok(LeakageBounds {
        expectation: BoundEstimate {
            eps: (-best_val).max(0.0),
            method: "prior-expectation-of-replay-discounts".into(),
            witness_observation,
            witness_profile,
            n_observations: n,
        },
        per_profile: BoundEstimate {
            eps: per_profile_eps.max(0.0),
            method: "per-profile-worst-discount".into(),
            witness_observation: None,
            witness_profile: worst_profile,
            n_observations: n,
        },
        sensitivity_sum: BoundEstimate {
            eps: sum_eps,
            method: "per-round-worst-sensitivity".into(),
            witness_observation: None,
            witness_profile: None,
            n_observations: n,
        },
    })
}

/// Prefix-in-time version of the expectation bound: entry `t` is the bound
/// one would certify after observing rounds `0..=t`. All observation entries
/// must cover the same number of rounds.
pub fn expectation_bound_series(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    obs: &ObservationSet,
    mech: &Mechanism,
) -> Result<Vec<f64>> {
    let rounds = equal_round_count(obs)?;
    let inv_m = inverse_scales(&mech.noise, rounds)?;
    let s_count = prior.len();
    let log_probs: Vec<f64> = (0..s_count).map(|s| prior.log_prob(s)).collect();
    // same normalisation as `leakage_bounds`: a prefix over which the
    // replayed estimates agree for every profile certifies exactly zero
    let norm = logsumexp(&log_probs);
    let mut best = vec![f64::INFINITY; rounds];
    for entry in &obs.entries {
        let vs = replay_support(game, prior, &entry.rounds, mech)?;
        for alt in 0..s_count {
            // running discounted sums per profile
            let mut running: Vec<f64> = log_probs.clone();
            for (k, inv) in inv_m.iter().enumerate() {
                for (f, r) in running.iter_mut().enumerate() {
                    *r -= profile_l1(&vs[f][k], &vs[alt][k]) * inv;
                }
                let val = logsumexp(&running) - norm;
                if val < best[k] {
                    best[k] = val;
                }
            }
        }
    }
    Ok(best.into_iter().map(|v| (-v).max(0.0)).collect())
}

/// Prefix-in-time worst adjacent-pair sensitivity sums: entry `t` is
/// `sum_{k<=t} max_pairs delta_k / M^k` over support pairs differing at one
/// player. Multiplied by the player count this is the group-style budget a
/// per-player accountant would certify after `t` rounds.
pub fn adjacent_sensitivity_series(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    obs: &ObservationSet,
    mech: &Mechanism,
) -> Result<Vec<f64>> {
    let rounds = equal_round_count(obs)?;
    let inv_m = inverse_scales(&mech.noise, rounds)?;
    let pairs = hamming_pairs(prior, 1);
    let mut worst = vec![0.0f64; rounds];
    for entry in &obs.entries {
        let vs = replay_support(game, prior, &entry.rounds, mech)?;
        for &(i, j) in &pairs {
            for k in 0..rounds {
                let d = profile_l1(&vs[i][k], &vs[j][k]) * inv_m[k];
                if d > worst[k] {
                    worst[k] = d;
                }
            }
        }
    }
    let mut acc = 0.0;
    Ok(worst
        .into_iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect())
}

fn equal_round_count(obs: &ObservationSet) -> Result<usize> {
    let rounds = obs
        .entries
        .first()
        .ok_or_else(|| Error::invalid("empty observation set"))?
        .rounds
        .len();
    if obs.entries.iter().any(|e| e.rounds.len() != rounds) {
        return Err(Error::invalid(
            "series bounds need equal-length observation entries",
        ));
    }
    Ok(rounds)
}

fn hamming_pairs(prior: &DiscretePrior, distance: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..prior.len() {
        for j in (i + 1)..prior.len() {
            if prior.hamming_between(i, j) == distance {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Empirical certificate over support pairs at a fixed Hamming distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCertificate {
    /// Largest observed |log density ratio| across the scanned triples.
    pub eps_log_ratio: f64,
    /// Largest discounted-sensitivity sum across the same triples; an upper
    /// envelope of the ratio, certified round by round.
    pub eps_sensitivity: f64,
    /// Number of (observation, pair) triples scanned.
    pub n_triples: usize,
    /// Hamming distance of the scanned pairs.
    pub hamming: usize,
}

/// Scan |log density ratios| and discounted sensitivity sums over support
/// pairs at the given Hamming distance, across the observation set, in
/// deterministic order, optionally capped at `max_triples` triples.
pub fn ratio_certificate(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    obs: &ObservationSet,
    mech: &Mechanism,
    hamming: usize,
    max_triples: Option<usize>,
) -> Result<RatioCertificate> {
    if hamming == 0 {
        return Err(Error::invalid("ratio certificate needs hamming >= 1"));
    }
    mech.validate(game)?;
    let pairs = hamming_pairs(prior, hamming);
    let mut eps_log_ratio = 0.0f64;
    let mut eps_sensitivity = 0.0f64;
    let mut n_triples = 0usize;
    'outer: for entry in &obs.entries {
        let rounds = entry.rounds.len();
        let inv_m = inverse_scales(&mech.noise, rounds)?;
        let vs = replay_support(game, prior, &entry.rounds, mech)?;
        let dens: Vec<f64> = vs
            .iter()
            .map(|v| density_from_estimates(&entry.rounds, v, &inv_m))
            .collect();
        for &(i, j) in &pairs {
            if let Some(cap) = max_triples {
                if n_triples >= cap {
                    break 'outer;
                }
            }
            n_triples += 1;
            let ratio = (dens[i] - dens[j]).abs();
            if ratio > eps_log_ratio {
                eps_log_ratio = ratio;
            }
            let mut s = 0.0;
            for k in 0..rounds {
                s += profile_l1(&vs[i][k], &vs[j][k]) * inv_m[k];
            }
            if s > eps_sensitivity {
                eps_sensitivity = s;
            }
        }
    }
    Ok(RatioCertificate {
        eps_log_ratio,
        eps_sensitivity,
        n_triples,
        hamming,
    })
}

/// Closed-form per-player privacy level of the geometric/geometric
/// deployment: broadcast round `k >= 1` applies step `c q^k` and carries
/// noise `d qbar^k`, with `q < qbar < 1` and pseudo-gradients bounded by
/// `c1` in L1. Build such a deployment with a step schedule whose first
/// applied step is `c q` (`StepSchedule::geometric(c * q, q)`); a step's
/// divergence is first broadcast one round after it is applied, so the
/// realised per-player budget is `2 c c1 q / (d (qbar - q))`.
///
/// Returns `2 c c1 qbar / (d (qbar - q))` — the same geometric series
/// started one term earlier — which therefore dominates the realised
/// budget by exactly its leading term `2 c c1 / d`.
pub fn dp_bound_geometric(c1: f64, c: f64, q: f64, d: f64, qbar: f64) -> Result<f64> {
    if !(c1 > 0.0) || !c1.is_finite() {
        return Err(Error::invalid(format!("need gradient bound c1 > 0, got {c1}")));
    }
    if !(c > 0.0) || !c.is_finite() || !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidSchedule(
            "geometric privacy bound needs c > 0 and d > 0".into(),
        ));
    }
    if !(q > 0.0 && q < 1.0) || !(qbar > 0.0 && qbar < 1.0) || qbar <= q {
        return Err(Error::InvalidSchedule(format!(
            "geometric privacy bound needs 0 < q < qbar < 1, got q={q}, qbar={qbar}"
        )));
    }
    Ok(2.0 * c * c1 * qbar / (d * (qbar - q)))
}

/// Group privacy by composition: a level `eps` against one player's change
/// becomes `k * eps` against a coordinated change of `k` players.
pub fn group_dp_bound(eps: f64, k: usize) -> Result<f64> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("need finite eps >= 0, got {eps}")));
    }
    if k == 0 {
        return Err(Error::invalid("group size must be at least 1"));
    }
    Ok(k as f64 * eps)
}

/// Gradient-magnitude version of the sensitivity-sum bound: with
/// pseudo-gradients bounded by `c1` in L1, round `k`'s divergence is at most
/// `2 N c1 lambda^{k-1}`, so the bound is
/// `sum_{k=1..horizon} 2 N c1 lambda^{k-1} / M^k`. Pass `None` for the
/// infinite-horizon value, available in closed form when both schedules are
/// geometric with `q < qbar`.
pub fn sensitivity_sum_gradient_bound(
    c1: f64,
    n_players: usize,
    steps: &crate::engine::StepSchedule,
    noise: &NoiseSchedule,
    horizon: Option<usize>,
) -> Result<f64> {
    if !(c1 >= 0.0) || !c1.is_finite() {
        return Err(Error::invalid(format!("need gradient bound c1 >= 0, got {c1}")));
    }
    if n_players < 2 {
        return Err(Error::invalid("need at least two players"));
    }
    steps.validate()?;
    noise.validate()?;
    let factor = 2.0 * n_players as f64 * c1;
    match horizon {
        Some(t) => {
            let mut total = 0.0;
            for k in 1..=t {
                let m = noise.scale(k);
                if m <= 0.0 {
                    return Err(Error::InvalidSchedule(format!(
                        "round {k} has noise scale {m}; need > 0"
                    )));
                }
                total += factor * steps.lambda(k - 1) / m;
            }
            Ok(total)
        }
        None => match (steps.step, *noise) {
            (ScheduleKind::Geometric { c, q }, NoiseSchedule::Geometric { d, qbar })
                if q < qbar =>
            {
                Ok(factor * c / (d * (qbar - q)))
            }
            _ => Err(Error::InvalidSchedule(
                "infinite-horizon form needs geometric steps and noise with q < qbar".into(),
            )),
        },
    }
}

/// Exp-scale lower bound on what broadcasts pinning the per-player swap
/// log-ratio at `eps_o` reveal about player 0's binary secret under the
/// correlated pattern prior `(alpha, beta)`.
///
/// With `u = e^{-eps_o}` and `w = n_players - 1`:
///
/// ```text
/// R = u * [ beta (2^w - 1) u^w + (1-beta) ((1+u)^w - u^w) ]
///       / [ beta (2^w - 1)     + (1-beta) ((1+u)^w - 1  ) ]
/// bound = 1 / ((1-alpha) R + alpha)
/// ```
///
/// `R` is exactly the posterior-odds attenuation of the equal-broadcast
/// construction, so on those sequences the bound is tight. It increases in
/// `n_players` and approaches the ceiling `1/alpha`.
pub fn correlated_lower_bound(
    alpha: f64,
    beta: f64,
    eps_o: f64,
    n_players: usize,
) -> Result<f64> {
    check_correlated_args(alpha, beta, n_players)?;
    if !(eps_o >= 0.0) || !eps_o.is_finite() {
        return Err(Error::invalid(format!("need finite eps_o >= 0, got {eps_o}")));
    }
    let w = (n_players - 1) as f64;
    let ln_u = -eps_o;
    let u = ln_u.exp();
    // ln(2^w - 1) = w ln 2 + ln(1 - 2^-w)
    let ln_two_w_m1 = w * std::f64::consts::LN_2 + (-(-w * std::f64::consts::LN_2).exp()).ln_1p();
    let ln_beta = beta.ln();
    let ln_one_minus_beta = if beta == 1.0 {
        f64::NEG_INFINITY
    } else {
        (1.0 - beta).ln()
    };
    let ln_1pu_w = w * u.ln_1p();

    let a1 = ln_beta + ln_two_w_m1 + w * ln_u;
    let a2 = ln_one_minus_beta + ln_exp_diff(ln_1pu_w, w * ln_u);
    let b1 = ln_beta + ln_two_w_m1;
    let b2 = ln_one_minus_beta + ln_exp_diff(ln_1pu_w, 0.0);
    let ln_r = ln_u + logsumexp(&[a1, a2]) - logsumexp(&[b1, b2]);

    let ln_denom = logsumexp(&[(1.0 - alpha).ln() + ln_r, alpha.ln()]);
    Ok((-ln_denom).exp())
}

/// Exp-scale upper bound on the same individual quantity when the
/// deployment is `eps`-private per player: `1 / ((1-alpha) e^{-N eps} + alpha)`.
pub fn correlated_upper_bound(alpha: f64, eps: f64, n_players: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("need 0 < alpha < 1, got {alpha}")));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("need finite eps >= 0, got {eps}")));
    }
    if n_players < 2 {
        return Err(Error::invalid("need at least two players"));
    }
    let ln_denom = logsumexp(&[(1.0 - alpha).ln() - n_players as f64 * eps, alpha.ln()]);
    Ok((-ln_denom).exp())
}

fn check_correlated_args(alpha: f64, beta: f64, n_players: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("need 0 < alpha < 1, got {alpha}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("need 0 < beta <= 1, got {beta}")));
    }
    if n_players < 2 {
        return Err(Error::invalid("need at least two players"));
    }
    Ok(())
}
