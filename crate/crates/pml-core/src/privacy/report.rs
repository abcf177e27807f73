//! One-stop privacy summary for a deployment.
//!
//! Pulls together the sampled leakage bounds, the adjacent-pair
//! certificates, the group budget, exact leakage on every sampled
//! observation, and — for correlated binary priors — the closed-form
//! individual-leakage envelope anchored at an adversarial probe.

use serde::{Deserialize, Serialize};

use crate::engine::Mechanism;
use crate::error::{Error, Result};
use crate::game::AggregativeGame;
use crate::privacy::bounds::{
    adjacent_sensitivity_series, correlated_lower_bound, correlated_upper_bound,
    equal_observation_probe, group_dp_bound, leakage_bounds, ratio_certificate,
    sample_observations, BoundEstimate, ObservationSampler, ObservationSet, RatioCertificate,
};
use crate::privacy::leakage::{
    exact_pml_from_densities, exact_pml_individual_from_densities, profile_log_densities,
    swap_ratio_empirical,
};
use crate::privacy::prior::{CorrelatedBinarySpec, DiscretePrior};

/// Exact joint leakage of one sampled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSample {
    pub observation: String,
    pub value: f64,
}

/// Exact single-player leakage of one sampled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualSample {
    pub player: usize,
    pub observation: String,
    pub value: f64,
}

/// Closed-form envelope for a correlated binary-pattern prior, anchored at
/// the equal-broadcast probe against player 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedSummary {
    pub alpha: f64,
    pub beta: f64,
    /// Swap log-ratio the probe realises.
    pub eps_observation: f64,
    /// Closed-form lower bound (exp scale) at that swap ratio.
    pub individual_lower_exp: f64,
    /// Closed-form upper bound (exp scale) at the adjacent sensitivity
    /// certificate.
    pub individual_upper_exp: f64,
    /// Exact individual leakage of player 0 at the probe (log scale).
    pub probe_individual_exact: f64,
    /// Prior ceiling for player 0 (log scale).
    pub eps_max: f64,
}

/// How the observation scan was configured, recorded so a reader knows the
/// infima/suprema are over a finite sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingNote {
    pub n_observations: usize,
    pub includes_probes: bool,
    pub seed: u64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub eps_expectation: BoundEstimate,
    pub eps_per_profile: BoundEstimate,
    pub eps_sensitivity_sum: BoundEstimate,
    /// Empirical and certified levels over pairs differing at one player.
    pub adjacent: RatioCertificate,
    /// Group budget: players times the adjacent sensitivity certificate.
    pub eps_group: f64,
    pub group_size: usize,
    pub exact_joint: Vec<ExactSample>,
    pub exact_individual: Vec<IndividualSample>,
    pub correlated: Option<CorrelatedSummary>,
    pub sampling: SamplingNote,
}

/// Report configuration: how many runs to scan and which players to compute
/// exact individual leakage for (`None` = all).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub n_runs: usize,
    pub include_probes: bool,
    pub seed: u64,
    pub individual_players: Option<Vec<usize>>,
}

impl ReportConfig {
    pub fn new(n_runs: usize, seed: u64) -> Self {
        ReportConfig {
            n_runs,
            include_probes: true,
            seed,
            individual_players: None,
        }
    }
}

pub fn build_report(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    correlated: Option<&CorrelatedBinarySpec>,
    mech: &Mechanism,
    horizon: usize,
    cfg: &ReportConfig,
) -> Result<PrivacyReport> {
    let sampler = ObservationSampler {
        n_runs: cfg.n_runs,
        include_probes: cfg.include_probes,
        seed: cfg.seed,
    };
    let mut obs = sample_observations(game, prior, mech, horizon, &sampler)?;

    // the equal-broadcast probe joins the scanned set so the certificates
    // cover the adversarial sequence the closed forms are anchored at
    if let Some(spec) = correlated {
        let probe = equal_observation_probe(game, &spec.f0, &spec.f1, mech, horizon, 0)?;
        obs.push("probe-equal-broadcast", probe);
    }

    let bounds = leakage_bounds(game, prior, &obs, mech)?;
    let adjacent = ratio_certificate(game, prior, &obs, mech, 1, None)?;
    let n_players = game.n_players();
    let eps_group = group_dp_bound(adjacent.eps_sensitivity, n_players)?;

    let players: Vec<usize> = match &cfg.individual_players {
        Some(p) => {
            for &i in p {
                if i >= n_players {
                    return Err(Error::invalid(format!(
                        "individual player {i} out of range for {n_players} players"
                    )));
                }
            }
            p.clone()
        }
        None => (0..n_players).collect(),
    };

    let mut exact_joint = Vec::with_capacity(obs.len());
    let mut exact_individual = Vec::new();
    for entry in &obs.entries {
        let densities = profile_log_densities(game, prior, &entry.rounds, mech)?;
        exact_joint.push(ExactSample {
            observation: entry.label.clone(),
            value: exact_pml_from_densities(prior, &densities)?,
        });
        for &player in &players {
            exact_individual.push(IndividualSample {
                player,
                observation: entry.label.clone(),
                value: exact_pml_individual_from_densities(prior, player, &densities)?,
            });
        }
    }

    let correlated_summary = match correlated {
        Some(spec) => {
            let probe = obs
                .entries
                .iter()
                .find(|e| e.label == "probe-equal-broadcast")
                .expect("probe pushed above");
            let eps_observation =
                swap_ratio_empirical(game, prior, &probe.rounds, mech, Some(4))?;
            let densities = profile_log_densities(game, prior, &probe.rounds, mech)?;
            Some(CorrelatedSummary {
                alpha: spec.alpha,
                beta: spec.beta,
                eps_observation,
                individual_lower_exp: correlated_lower_bound(
                    spec.alpha,
                    spec.beta,
                    eps_observation,
                    n_players,
                )?,
                individual_upper_exp: correlated_upper_bound(
                    spec.alpha,
                    adjacent.eps_sensitivity,
                    n_players,
                )?,
                probe_individual_exact: exact_pml_individual_from_densities(
                    prior, 0, &densities,
                )?,
                eps_max: prior.epsilon_max(0)?,
            })
        }
        None => None,
    };

    Ok(PrivacyReport {
        eps_expectation: bounds.expectation,
        eps_per_profile: bounds.per_profile,
        eps_sensitivity_sum: bounds.sensitivity_sum,
        adjacent,
        eps_group,
        group_size: n_players,
        exact_joint,
        exact_individual,
        correlated: correlated_summary,
        sampling: SamplingNote {
            n_observations: obs.len(),
            includes_probes: cfg.include_probes,
            seed: cfg.seed,
            note: "extrema over observations are taken on this finite sampled set".into(),
        },
    })
}

/// Per-round bound pair for plotting: the expectation bound and the
/// group-scaled adjacent certificate after each prefix of rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub expectation: Vec<f64>,
    pub group_adjacent: Vec<f64>,
}

pub fn bound_series(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    obs: &ObservationSet,
    mech: &Mechanism,
) -> Result<BoundSeries> {
    let expectation =
        crate::privacy::bounds::expectation_bound_series(game, prior, obs, mech)?;
    let adjacent = adjacent_sensitivity_series(game, prior, obs, mech)?;
    let n = game.n_players() as f64;
    let group_adjacent = adjacent.into_iter().map(|v| v * n).collect();
    Ok(BoundSeries {
        expectation,
        group_adjacent,
    })
}
