//! Replay-based identities: the density-ratio envelope certified round by
//! round, and the equal-broadcast probe attaining it exactly.

use nalgebra::{DMatrix, DVector};
use pml_core::engine::{Mechanism, NoiseSchedule, StepSchedule, UpdateRule};
use pml_core::game::{AggregativeGame, ConstraintSet, CostFamily, CostProfile, PlayerCost};
use pml_core::privacy::bounds::{equal_observation_probe, ratio_certificate, sensitivity,
    ObservationSet};
use pml_core::privacy::leakage::swap_ratio_empirical;
use pml_core::privacy::prior::CorrelatedBinarySpec;

fn bundle(a: f64, b: f64, dim: usize) -> PlayerCost {
    PlayerCost::disease(
        DVector::from_element(dim, a),
        DMatrix::from_element(dim, dim, b),
    )
    .unwrap()
}

fn fixture(n_players: usize, dim: usize) -> (AggregativeGame, CorrelatedBinarySpec, Mechanism) {
    let game =
        AggregativeGame::uniform(CostFamily::Disease, n_players, ConstraintSet::unit_box(dim))
            .unwrap();
    let spec = CorrelatedBinarySpec::new(
        bundle(0.8, 0.3, dim),
        bundle(-0.5, 0.3, dim),
        0.3,
        0.5,
        n_players,
    )
    .unwrap();
    let mech = Mechanism::new(
        UpdateRule::full_averaging_uniform(n_players),
        NoiseSchedule::Polynomial {
            p1: 1.0,
            p2: 0.5,
            p3: 1.0,
        },
        StepSchedule::harmonic(0.5, 1.0, 0.5),
        vec![DVector::from_element(dim, 0.5); n_players],
    );
    (game, spec, mech)
}

#[test]
fn log_density_ratio_is_bounded_by_discounted_sensitivity_sum() {
    let (game, spec, mech) = fixture(3, 2);
    let prior = spec.to_prior().unwrap();
    let horizon = 5;
    // observations generated under one profile, ratios measured across all
    for run_idx in 0..2 {
        let gen = prior.profile(run_idx);
        let t = mech.run(&game, gen, horizon, 100 + run_idx as u64).unwrap();
        for i in 0..prior.len() {
            for j in (i + 1)..prior.len() {
                let li = mech.log_density(&game, prior.profile(i), &t.o).unwrap();
                let lj = mech.log_density(&game, prior.profile(j), &t.o).unwrap();
                let mut envelope = 0.0;
                for k in 0..t.o.len() {
                    let delta =
                        sensitivity(&game, prior.profile(i), prior.profile(j), &t.o, &mech, k)
                            .unwrap();
                    envelope += delta / mech.noise.scale(k);
                }
                assert!(
                    (li - lj).abs() <= envelope + 1e-9,
                    "profiles {i},{j}: |{li} - {lj}| exceeds {envelope}"
                );
            }
        }
    }
}

#[test]
fn equal_broadcast_probe_attains_the_replay_gap_exactly() {
    for n_players in [2usize, 3] {
        let (game, spec, mech) = fixture(n_players, 2);
        let prior = spec.to_prior().unwrap();
        let horizon = 4;
        let probe = equal_observation_probe(&game, &spec.f0, &spec.f1, &mech, horizon, 0).unwrap();
        assert_eq!(probe.len(), horizon + 1);
        // every player sees the same broadcast each round
        for round in &probe {
            for oi in &round[1..] {
                assert_eq!(oi, &round[0]);
            }
        }

        let all0 = CostProfile::new("all0", vec![spec.f0.clone(); n_players]);
        let all1 = CostProfile::new("all1", vec![spec.f1.clone(); n_players]);
        let (_, v0) = mech.replay(&game, &all0, &probe).unwrap();
        let (_, v1) = mech.replay(&game, &all1, &probe).unwrap();
        // shared start + equal broadcasts: all players replay identically
        for k in 0..=horizon {
            for i in 1..n_players {
                assert_eq!(v0[k][i], v0[k][0]);
                assert_eq!(v1[k][i], v1[k][0]);
            }
        }
        let mut expected = 0.0;
        for k in 0..=horizon {
            expected += (&v0[k][0] - &v1[k][0]).abs().sum() / mech.noise.scale(k);
        }

        let got = swap_ratio_empirical(&game, &prior, &probe, &mech, None).unwrap();
        assert!(
            (got - expected).abs() <= 1e-9 * expected.max(1.0),
            "swap ratio {got} vs replay gap {expected}"
        );

        // the adjacency certificate on the probe alone sees the same supremum
        let mut obs = ObservationSet::default();
        obs.push("probe", probe);
        let cert = ratio_certificate(&game, &prior, &obs, &mech, 1, None).unwrap();
        assert!((cert.eps_log_ratio - expected).abs() <= 1e-9 * expected.max(1.0));
        assert!(cert.eps_log_ratio <= cert.eps_sensitivity + 1e-9);
    }
}

#[test]
fn probe_gap_is_nonzero_and_grows_with_horizon() {
    let (game, spec, mech) = fixture(2, 1);
    let prior = spec.to_prior().unwrap();
    let mut last = 0.0;
    for horizon in 1..=4 {
        let probe = equal_observation_probe(&game, &spec.f0, &spec.f1, &mech, horizon, 0).unwrap();
        let got = swap_ratio_empirical(&game, &prior, &probe, &mech, None).unwrap();
        assert!(
            got > last,
            "horizon {horizon}: ratio {got} did not grow past {last}"
        );
        last = got;
    }
}
