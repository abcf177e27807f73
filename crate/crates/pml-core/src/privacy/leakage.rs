//! Exact leakage on enumerable priors.
//!
//! For a discrete prior the broadcast density under every support profile is
//! computable by replay, so the pointwise leakage of an observation — how
//! much more likely the best-informed guess of the secret becomes after
//! seeing it — has a closed form. These are the ground-truth quantities the
//! sampled bounds are checked against.

use std::collections::BTreeMap;

use crate::engine::Mechanism;
use crate::error::{Error, Result};
use crate::game::{AggregativeGame, StrategyProfile};
use crate::numeric::logsumexp;
use crate::privacy::prior::DiscretePrior;

/// Log-density of `o` under every support profile, in support order.
pub fn profile_log_densities(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    o: &[StrategyProfile],
    mech: &Mechanism,
) -> Result<Vec<f64>> {
    mech.validate(game)?;
    (0..prior.len())
        .map(|s| mech.log_density(game, prior.profile(s), o))
        .collect()
}

/// Pointwise leakage of the full cost profile at one observation:
/// `log( max_f P(o|f) / P(o) )`, never negative.
pub fn exact_pml_from_densities(prior: &DiscretePrior, densities: &[f64]) -> Result<f64> {
    if densities.len() != prior.len() {
        return Err(Error::invalid(format!(
            "{} densities for a support of {}",
            densities.len(),
            prior.len()
        )));
    }
    let mut weighted = Vec::with_capacity(prior.len());
    let mut best = f64::NEG_INFINITY;
    for (s, d) in densities.iter().enumerate() {
        weighted.push(prior.log_prob(s) + d);
        best = best.max(*d);
    }
    let marginal = logsumexp(&weighted);
    // exact zero when the density is flat; tiny negative dust clamps to 0
    Ok((best - marginal).max(0.0))
}

pub fn exact_pml(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    o: &[StrategyProfile],
    mech: &Mechanism,
) -> Result<f64> {
    let densities = profile_log_densities(game, prior, o, mech)?;
    exact_pml_from_densities(prior, &densities)
}

/// Pointwise leakage of a single player's cost at one observation:
/// `log( max_u P(o | F_player = u) / P(o) )` with the max over that
/// player's marginal support.
pub fn exact_pml_individual_from_densities(
    prior: &DiscretePrior,
    player: usize,
    densities: &[f64],
) -> Result<f64> {
    if densities.len() != prior.len() {
        return Err(Error::invalid(format!(
            "{} densities for a support of {}",
            densities.len(),
            prior.len()
        )));
    }
    let marginal_groups = prior.marginal(player)?;
    let mut weighted_all = Vec::with_capacity(prior.len());
    for (s, d) in densities.iter().enumerate() {
        weighted_all.push(prior.log_prob(s) + d);
    }
    let marginal_obs = logsumexp(&weighted_all);

    let mut best = f64::NEG_INFINITY;
    for (value, value_prob) in &marginal_groups {
        let group: Vec<f64> = (0..prior.len())
            .filter(|&s| &prior.profile(s).players[player] == value)
            .map(|s| weighted_all[s])
            .collect();
        // log P(o | F_player = value)
        let conditional = logsumexp(&group) - value_prob.ln();
        best = best.max(conditional);
    }
    Ok((best - marginal_obs).max(0.0))
}

pub fn exact_pml_individual(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    player: usize,
    o: &[StrategyProfile],
    mech: &Mechanism,
) -> Result<f64> {
    let densities = profile_log_densities(game, prior, o, mech)?;
    exact_pml_individual_from_densities(prior, player, densities.as_slice())
}

/// Empirical swap log-ratio of one observation on a binary-pattern prior:
/// the largest `|log P(o|f) - log P(o|f')|` over support pairs that differ
/// at exactly one player.
///
/// Every player must hold one of at most two bundles across the support.
/// `pattern_cap` limits, per player, how many co-player patterns are
/// scanned (in support order); `None` scans them all. Densities are
/// computed lazily and memoized, so a small cap stays cheap even on large
/// supports.
pub fn swap_ratio_empirical(
    game: &AggregativeGame,
    prior: &DiscretePrior,
    o: &[StrategyProfile],
    mech: &Mechanism,
    pattern_cap: Option<usize>,
) -> Result<f64> {
    mech.validate(game)?;
    let n_players = prior.n_players();

    // per-player dictionaries of distinct bundles, by exact equality
    let mut values: Vec<Vec<&crate::game::PlayerCost>> = vec![Vec::new(); n_players];
    for s in 0..prior.len() {
        for (i, values_i) in values.iter_mut().enumerate() {
            let c = &prior.profile(s).players[i];
            if !values_i.iter().any(|v| *v == c) {
                values_i.push(c);
            }
        }
    }
    for (i, v) in values.iter().enumerate() {
        if v.len() > 2 {
            return Err(Error::invalid(format!(
                "player {i} holds {} distinct bundles; swap ratios need at most two",
                v.len()
            )));
        }
    }

    // support profiles as per-player value codes, for partner lookup
    let codes: Vec<Vec<u8>> = (0..prior.len())
        .map(|s| {
            (0..n_players)
                .map(|i| {
                    values[i]
                        .iter()
                        .position(|v| *v == &prior.profile(s).players[i])
                        .expect("value recorded above") as u8
                })
                .collect()
        })
        .collect();
    let by_code: BTreeMap<&[u8], usize> = codes
        .iter()
        .enumerate()
        .map(|(s, c)| (c.as_slice(), s))
        .collect();

    let mut cache: Vec<Option<f64>> = vec![None; prior.len()];
    let density = |s: usize, cache: &mut Vec<Option<f64>>| -> Result<f64> {
        if let Some(d) = cache[s] {
            return Ok(d);
        }
        let d = mech.log_density(game, prior.profile(s), o)?;
        cache[s] = Some(d);
        Ok(d)
    };

    let mut sup = 0.0f64;
    for i in 0..n_players {
        if values[i].len() < 2 {
            continue; // degenerate player: nothing to swap
        }
        let mut scanned = 0usize;
        for s in 0..prior.len() {
            if codes[s][i] != 0 {
                continue; // canonical side of the pair only
            }
            if let Some(cap) = pattern_cap {
                if scanned >= cap {
                    break;
                }
            }
            let mut partner_code = codes[s].clone();
            partner_code[i] = 1;
            let Some(&t) = by_code.get(partner_code.as_slice()) else {
                continue;
            };
            scanned += 1;
            let ratio = (density(s, &mut cache)? - density(t, &mut cache)?).abs();
            if ratio > sup {
                sup = ratio;
            }
        }
    }
    Ok(sup)
}
