//! Finitely supported priors over cost profiles.
//!
//! The leakage computations need three things from a prior: enumeration of
//! its support with probabilities, per-player marginals (player costs are
//! compared by exact parameter equality), and reproducible sampling. Binary
//! pattern priors — every player holds one of two bundles — additionally
//! support construction without enumeration so large-player experiments can
//! still draw profiles.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{CostProfile, PlayerCost};

/// Cap on binary players for exact support enumeration (`2^20` profiles).
pub const MAX_BINARY_PLAYERS: usize = 20;

/// One support point: a cost profile and its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub profile: CostProfile,
    pub prob: f64,
}

/// A discrete prior over cost profiles with validated probabilities and
/// unique profile ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePrior {
    support: Vec<SupportPoint>,
}

impl DiscretePrior {
    pub fn new(points: Vec<(CostProfile, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPrior);
        }
        let n_players = points[0].0.n_players();
        let mut ids = BTreeMap::new();
        let mut total = 0.0;
        for (idx, (profile, prob)) in points.iter().enumerate() {
            if !(prob.is_finite() && *prob > 0.0) {
                return Err(Error::invalid(format!(
                    "support point `{}` has probability {prob}; need finite > 0",
                    profile.id
                )));
            }
            if profile.n_players() != n_players {
                return Err(Error::invalid(format!(
                    "support point `{}` has {} players, expected {n_players}",
                    profile.id,
                    profile.n_players()
                )));
            }
            if ids.insert(profile.id.clone(), idx).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate profile id `{}` in prior",
                    profile.id
                )));
            }
            total += prob;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "prior probabilities sum to {total}, expected 1"
            )));
        }
        Ok(DiscretePrior {
            support: points
                .into_iter()
                .map(|(profile, prob)| SupportPoint { profile, prob })
                .collect(),
        })
    }

    pub fn point_mass(profile: CostProfile) -> Result<Self> {
        DiscretePrior::new(vec![(profile, 1.0)])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn n_players(&self) -> usize {
        self.support[0].profile.n_players()
    }

    pub fn profile(&self, idx: usize) -> &CostProfile {
        &self.support[idx].profile
    }

    pub fn prob(&self, idx: usize) -> f64 {
        self.support[idx].prob
    }

    pub fn log_prob(&self, idx: usize) -> f64 {
        self.support[idx].prob.ln()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CostProfile, f64)> {
        self.support.iter().map(|p| (&p.profile, p.prob))
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.support.iter().position(|p| p.profile.id == id)
    }

    /// Draw a support index by CDF inversion in support order.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (idx, p) in self.support.iter().enumerate() {
            acc += p.prob;
            if u < acc {
                return idx;
            }
        }
        self.support.len() - 1
    }

    /// Marginal distribution of one player's cost, grouping support points
    /// whose costs for that player are exactly equal.
    pub fn marginal(&self, player: usize) -> Result<Vec<(PlayerCost, f64)>> {
        if player >= self.n_players() {
            return Err(Error::invalid(format!(
                "player {player} out of range for {} players",
                self.n_players()
            )));
        }
        let mut groups: Vec<(PlayerCost, f64)> = Vec::new();
        for point in &self.support {
            let c = &point.profile.players[player];
            match groups.iter_mut().find(|(v, _)| v == c) {
                Some((_, p)) => *p += point.prob,
                None => groups.push((c.clone(), point.prob)),
            }
        }
        Ok(groups)
    }

    /// `log(1 / min_u P(F_player = u))` — the ceiling no leakage measure of
    /// this player's secret can exceed.
    pub fn epsilon_max(&self, player: usize) -> Result<f64> {
        let marginal = self.marginal(player)?;
        let min = marginal
            .iter()
            .map(|(_, p)| *p)
            .fold(f64::INFINITY, f64::min);
        Ok((1.0 / min).ln())
    }

    /// Number of players whose costs differ between two support profiles.
    pub fn hamming_between(&self, i: usize, j: usize) -> usize {
        hamming(self.profile(i), self.profile(j)).expect("support profiles share shape")
    }
}

/// Number of players at which two profiles hold different cost bundles
/// (exact parameter comparison).
pub fn hamming(a: &CostProfile, b: &CostProfile) -> Result<usize> {
    if a.n_players() != b.n_players() {
        return Err(Error::invalid(format!(
            "profiles `{}` and `{}` have different player counts",
            a.id, b.id
        )));
    }
    Ok(a.players
        .iter()
        .zip(&b.players)
        .filter(|(x, y)| x != y)
        .count())
}

fn check_binary_pair(f0: &PlayerCost, f1: &PlayerCost) -> Result<()> {
    if f0 == f1 {
        return Err(Error::invalid("binary prior needs two distinct bundles"));
    }
    if f0.dim() != f1.dim() || f0.family() != f1.family() {
        return Err(Error::invalid(
            "binary prior bundles must share dimension and family",
        ));
    }
    Ok(())
}

fn pattern_id(bits: &[bool]) -> String {
    let s: String = bits.iter().map(|b| if *b { '1' } else { '0' }).collect();
    format!("pattern-{s}")
}

fn pattern_profile(f0: &PlayerCost, f1: &PlayerCost, bits: &[bool]) -> CostProfile {
    let players = bits
        .iter()
        .map(|b| if *b { f1.clone() } else { f0.clone() })
        .collect();
    CostProfile::new(pattern_id(bits), players)
}

fn mask_bits(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| (mask >> i) & 1 == 1).collect()
}

/// Product prior: every player independently holds `f0` with probability
/// `p0`, else `f1`.
pub fn independent_binary_prior(
    f0: &PlayerCost,
    f1: &PlayerCost,
    p0: f64,
    n_players: usize,
) -> Result<DiscretePrior> {
    check_binary_pair(f0, f1)?;
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::invalid(format!("need 0 < p0 < 1, got {p0}")));
    }
    if n_players < 2 {
        return Err(Error::invalid("need at least two players"));
    }
    if n_players > MAX_BINARY_PLAYERS {
        return Err(Error::SupportTooLarge {
            n_players,
            cap: MAX_BINARY_PLAYERS,
        });
    }
    let mut points = Vec::with_capacity(1 << n_players);
    for mask in 0u64..(1 << n_players) {
        let bits = mask_bits(mask, n_players);
        let prob = bits
            .iter()
            .map(|b| if *b { 1.0 - p0 } else { p0 })
            .product();
        points.push((pattern_profile(f0, f1, &bits), prob));
    }
    DiscretePrior::new(points)
}

/// A correlated binary-pattern prior.
///
/// Player `0` holds `f0` with probability `alpha`. Conditional on that draw,
/// with probability `beta` every other player copies it; otherwise the other
/// players' pattern is uniform over the `2^(N-1) - 1` patterns that do not
/// all copy it. Large `beta` makes the dataset strongly correlated while
/// leaving every individual marginal nondegenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedBinarySpec {
    pub f0: PlayerCost,
    pub f1: PlayerCost,
    pub alpha: f64,
    pub beta: f64,
    pub n_players: usize,
}

impl CorrelatedBinarySpec {
    pub fn new(
        f0: PlayerCost,
        f1: PlayerCost,
        alpha: f64,
        beta: f64,
        n_players: usize,
    ) -> Result<Self> {
        check_binary_pair(&f0, &f1)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("need 0 < alpha < 1, got {alpha}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::invalid(format!("need 0 < beta <= 1, got {beta}")));
        }
        if n_players < 2 || n_players > 63 {
            return Err(Error::invalid(format!(
                "need 2 <= n_players <= 63, got {n_players}"
            )));
        }
        Ok(CorrelatedBinarySpec {
            f0,
            f1,
            alpha,
            beta,
            n_players,
        })
    }

    /// Probability of one full pattern (`true` = holds `f1`).
    pub fn pattern_prob(&self, bits: &[bool]) -> f64 {
        assert_eq!(bits.len(), self.n_players);
        let first = if bits[0] { 1.0 - self.alpha } else { self.alpha };
        let all_copy = bits[1..].iter().all(|b| *b == bits[0]);
        if all_copy {
            first * self.beta
        } else {
            let others = (1u64 << (self.n_players - 1)) - 1;
            first * (1.0 - self.beta) / others as f64
        }
    }

    /// Enumerate the full support. Only possible up to
    /// [`MAX_BINARY_PLAYERS`] players.
    pub fn to_prior(&self) -> Result<DiscretePrior> {
        if self.n_players > MAX_BINARY_PLAYERS {
            return Err(Error::SupportTooLarge {
                n_players: self.n_players,
                cap: MAX_BINARY_PLAYERS,
            });
        }
        let mut points = Vec::with_capacity(1 << self.n_players);
        for mask in 0u64..(1 << self.n_players) {
            let bits = mask_bits(mask, self.n_players);
            points.push((
                pattern_profile(&self.f0, &self.f1, &bits),
                self.pattern_prob(&bits),
            ));
        }
        DiscretePrior::new(points)
    }

    /// Two-stage pattern draw that never enumerates the support.
    pub fn sample_pattern<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        let first = rng.gen::<f64>() >= self.alpha;
        let mut bits = vec![first; self.n_players];
        if rng.gen::<f64>() >= self.beta {
            // others differ from the leader in at least one place; the
            // nonzero mask picks which
            let others = (1u64 << (self.n_players - 1)) - 1;
            let mask = rng.gen_range(1..=others);
            for j in 1..self.n_players {
                if (mask >> (j - 1)) & 1 == 1 {
                    bits[j] = !first;
                }
            }
        }
        bits
    }

    pub fn profile_for(&self, bits: &[bool]) -> CostProfile {
        pattern_profile(&self.f0, &self.f1, bits)
    }
}

/// Reproducible profile drawing, implemented both by enumerated priors and
/// by binary-pattern specs too large to enumerate.
pub trait ProfileSampler {
    fn n_players(&self) -> usize;
    fn sample_profile(&self, rng: &mut ChaCha20Rng) -> CostProfile;
}

impl ProfileSampler for DiscretePrior {
    fn n_players(&self) -> usize {
        DiscretePrior::n_players(self)
    }

    fn sample_profile(&self, rng: &mut ChaCha20Rng) -> CostProfile {
        self.profile(self.sample_index(rng)).clone()
    }
}

impl ProfileSampler for CorrelatedBinarySpec {
    fn n_players(&self) -> usize {
        self.n_players
    }

    fn sample_profile(&self, rng: &mut ChaCha20Rng) -> CostProfile {
        self.profile_for(&self.sample_pattern(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;

    fn bundle(v: f64) -> PlayerCost {
        PlayerCost::disease(
            DVector::from_row_slice(&[v]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
        )
        .unwrap()
    }

    fn two_player_spec(alpha: f64, beta: f64) -> CorrelatedBinarySpec {
        CorrelatedBinarySpec::new(bundle(1.0), bundle(-1.0), alpha, beta, 2).unwrap()
    }

    #[test]
    fn correlated_two_player_masses() {
        let prior = two_player_spec(0.25, 0.5).to_prior().unwrap();
        assert_eq!(prior.len(), 4);
        let mut masses: Vec<f64> = prior.iter().map(|(_, p)| p).collect();
        masses.sort_by(f64::total_cmp);
        let expect = [0.125, 0.125, 0.375, 0.375];
        for (m, e) in masses.iter().zip(expect) {
            assert!((m - e).abs() < 1e-15, "{m} vs {e}");
        }
        // pattern-00 is alpha * beta
        let idx = prior.index_of("pattern-00").unwrap();
        assert!((prior.prob(idx) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn correlated_marginal_of_leader_is_alpha() {
        let spec = CorrelatedBinarySpec::new(bundle(1.0), bundle(-1.0), 0.3, 0.7, 4).unwrap();
        let prior = spec.to_prior().unwrap();
        let marg = prior.marginal(0).unwrap();
        assert_eq!(marg.len(), 2);
        let p0 = marg.iter().find(|(c, _)| *c == bundle(1.0)).unwrap().1;
        assert!((p0 - 0.3).abs() < 1e-12);
        // every player's marginal stays nondegenerate
        for player in 0..4 {
            for (_, p) in prior.marginal(player).unwrap() {
                assert!(p > 0.05);
            }
        }
    }

    #[test]
    fn epsilon_max_is_log_inverse_min_marginal() {
        let prior = two_player_spec(0.25, 0.5).to_prior().unwrap();
        let got = prior.epsilon_max(0).unwrap();
        assert!((got - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn independent_prior_is_product() {
        let prior = independent_binary_prior(&bundle(1.0), &bundle(-1.0), 0.2, 3).unwrap();
        assert_eq!(prior.len(), 8);
        let idx = prior.index_of("pattern-010").unwrap();
        // players 0 and 2 hold f0 (prob 0.2 each), player 1 holds f1
        assert!((prior.prob(idx) - 0.2 * 0.8 * 0.2).abs() < 1e-15);
        let total: f64 = prior.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let spec = CorrelatedBinarySpec::new(bundle(1.0), bundle(-1.0), 0.5, 0.5, 21).unwrap();
        assert!(matches!(
            spec.to_prior(),
            Err(Error::SupportTooLarge { n_players: 21, .. })
        ));
        // sampling still works above the cap
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let bits = spec.sample_pattern(&mut rng);
        assert_eq!(bits.len(), 21);
    }

    #[test]
    fn sampled_pattern_frequencies_match_spec() {
        let spec = CorrelatedBinarySpec::new(bundle(1.0), bundle(-1.0), 0.25, 0.5, 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let n = 100_000;
        let mut leader_f0 = 0usize;
        let mut all_copy = 0usize;
        for _ in 0..n {
            let bits = spec.sample_pattern(&mut rng);
            if !bits[0] {
                leader_f0 += 1;
            }
            if bits[1..].iter().all(|b| *b == bits[0]) {
                all_copy += 1;
            }
        }
        assert!((leader_f0 as f64 / n as f64 - 0.25).abs() < 0.01);
        assert!((all_copy as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn prior_validation_errors() {
        assert!(matches!(DiscretePrior::new(vec![]), Err(Error::EmptyPrior)));
        let f = CostProfile::new("a", vec![bundle(1.0), bundle(1.0)]);
        assert!(DiscretePrior::new(vec![(f.clone(), 0.4)]).is_err());
        let g = CostProfile::new("a", vec![bundle(2.0), bundle(2.0)]);
        assert!(DiscretePrior::new(vec![(f.clone(), 0.5), (g, 0.5)]).is_err());
        assert!(DiscretePrior::point_mass(f).is_ok());
    }

    #[test]
    fn hamming_counts_differing_players() {
        let a = CostProfile::new("a", vec![bundle(1.0), bundle(1.0), bundle(-1.0)]);
        let b = CostProfile::new("b", vec![bundle(1.0), bundle(-1.0), bundle(-1.0)]);
        assert_eq!(hamming(&a, &b).unwrap(), 1);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        let short = CostProfile::new("s", vec![bundle(1.0)]);
        assert!(hamming(&a, &short).is_err());
    }

    #[test]
    fn sample_index_respects_masses() {
        let prior = two_player_spec(0.25, 0.5).to_prior().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut counts = vec![0usize; prior.len()];
        let n = 40_000;
        for _ in 0..n {
            counts[prior.sample_index(&mut rng)] += 1;
        }
        for (idx, c) in counts.iter().enumerate() {
            let freq = *c as f64 / n as f64;
            assert!(
                (freq - prior.prob(idx)).abs() < 0.015,
                "index {idx}: {freq} vs {}",
                prior.prob(idx)
            );
        }
    }
}
