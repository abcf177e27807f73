//! Acceptance gate: every numbered guarantee the toolkit ships is checked
//! end to end by one test here, and each prints a `criterion N: PASS` line
//! when it holds. Run with `--nocapture` to see the lines.

use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tempfile::tempdir;

use pml_cli::commands::cmd_separation;
use pml_cli::figures::{run_correlation_sweep, run_gain_vs_noise, Figure, SWEEP_PLAYERS};
use pml_core::adversary::{attack_loss, parameter_gradients, AdversaryState};
use pml_core::engine::{Mechanism, NoiseSchedule, StepSchedule, UpdateRule};
use pml_core::game::{
    AggregativeGame, ConstraintSet, CostFamily, CostProfile, PlayerCost, Strategy,
};
use pml_core::privacy::bounds::{
    correlated_lower_bound, correlated_upper_bound, dp_bound_geometric, equal_observation_probe,
    leakage_bounds, ratio_certificate, sample_observations, sensitivity, ObservationSampler,
    ObservationSet,
};
use pml_core::privacy::leakage::{exact_pml, exact_pml_individual, swap_ratio_empirical};
use pml_core::privacy::prior::{independent_binary_prior, CorrelatedBinarySpec, DiscretePrior};

fn dvec(vals: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(vals)
}

fn disease_bundle(a: f64, b: f64, dim: usize) -> PlayerCost {
    PlayerCost::disease(
        DVector::from_element(dim, a),
        DMatrix::from_element(dim, dim, b),
    )
    .unwrap()
}

/// Decoupled one-dimensional bundle: the pseudo-gradient is the constant `a`.
fn decoupled_bundle(a: f64) -> PlayerCost {
    PlayerCost::disease(DVector::from_element(1, a), DMatrix::zeros(1, 1)).unwrap()
}

struct Instance {
    label: String,
    game: AggregativeGame,
    prior: DiscretePrior,
    mech: Mechanism,
    horizon: usize,
}

/// Twelve sampling instances: player counts {2, 3} by horizons {2, 5} by
/// three binary priors (correlated at two leader biases, independent).
fn soundness_instances() -> Vec<Instance> {
    let dim = 1;
    let f0 = disease_bundle(0.7, 0.4, dim);
    let f1 = disease_bundle(-0.4, 0.4, dim);
    let mut out = Vec::new();
    for &n in &[2usize, 3] {
        for &horizon in &[2usize, 5] {
            let priors: Vec<(&str, DiscretePrior)> = vec![
                (
                    "corr-a02",
                    CorrelatedBinarySpec::new(f0.clone(), f1.clone(), 0.2, 0.5, n)
                        .unwrap()
                        .to_prior()
                        .unwrap(),
                ),
                (
                    "corr-a04",
                    CorrelatedBinarySpec::new(f0.clone(), f1.clone(), 0.4, 0.5, n)
                        .unwrap()
                        .to_prior()
                        .unwrap(),
                ),
                (
                    "indep-p03",
                    independent_binary_prior(&f0, &f1, 0.3, n).unwrap(),
                ),
            ];
            for (tag, prior) in priors {
                let game = AggregativeGame::uniform(
                    CostFamily::Disease,
                    n,
                    ConstraintSet::unit_box(dim),
                )
                .unwrap();
                let mech = Mechanism::new(
                    UpdateRule::full_averaging_uniform(n),
                    NoiseSchedule::Polynomial {
                        p1: 0.8,
                        p2: 0.2,
                        p3: 1.0,
                    },
                    StepSchedule::harmonic(0.5, 1.0, 0.5),
                    vec![DVector::from_element(dim, 0.5); n],
                );
                out.push(Instance {
                    label: format!("n{n}-t{horizon}-{tag}"),
                    game,
                    prior,
                    mech,
                    horizon,
                });
            }
        }
    }
    assert_eq!(out.len(), 12);
    out
}

/// Exact leakage of every sampled observation stays below the expectation
/// bound computed on that observation alone.
#[test]
fn criterion_01_exact_leakage_is_dominated_by_the_per_observation_bound() {
    for (idx, inst) in soundness_instances().iter().enumerate() {
        let obs = sample_observations(
            &inst.game,
            &inst.prior,
            &inst.mech,
            inst.horizon,
            &ObservationSampler {
                n_runs: 200,
                include_probes: false,
                seed: 1000 + idx as u64,
            },
        )
        .unwrap();
        assert_eq!(obs.entries.len(), 200, "{}", inst.label);
        for entry in &obs.entries {
            let exact = exact_pml(&inst.game, &inst.prior, &entry.rounds, &inst.mech).unwrap();
            let mut single = ObservationSet::default();
            single.push(entry.label.clone(), entry.rounds.clone());
            let b = leakage_bounds(&inst.game, &inst.prior, &single, &inst.mech).unwrap();
            assert!(
                exact <= b.expectation.eps + 1e-9,
                "{} / {}: exact {} exceeds per-observation bound {}",
                inst.label,
                entry.label,
                exact,
                b.expectation.eps
            );
        }
    }
    println!("criterion 1: PASS");
}

/// The bound ladder is ordered on every instance, and the tightest bound is
/// dominated by the group-scaled adjacent certificate from the same set.
#[test]
fn criterion_02_bound_ladder_is_ordered_under_the_group_scaled_certificate() {
    for (idx, inst) in soundness_instances().iter().enumerate() {
        let obs = sample_observations(
            &inst.game,
            &inst.prior,
            &inst.mech,
            inst.horizon,
            &ObservationSampler {
                n_runs: 200,
                include_probes: false,
                seed: 2000 + idx as u64,
            },
        )
        .unwrap();
        let b = leakage_bounds(&inst.game, &inst.prior, &obs, &inst.mech).unwrap();
        let cert = ratio_certificate(&inst.game, &inst.prior, &obs, &inst.mech, 1, None).unwrap();
        assert!(cert.n_triples > 0, "{}", inst.label);
        let group = inst.game.n_players() as f64 * cert.eps_sensitivity;
        assert!(
            b.expectation.eps <= group + 1e-9,
            "{}: expectation bound {} exceeds group-scaled certificate {}",
            inst.label,
            b.expectation.eps,
            group
        );
        assert!(
            b.expectation.eps <= b.per_profile.eps + 1e-9,
            "{}: expectation {} above per-profile {}",
            inst.label,
            b.expectation.eps,
            b.per_profile.eps
        );
        assert!(
            b.per_profile.eps <= b.sensitivity_sum.eps + 1e-9,
            "{}: per-profile {} above sensitivity sum {}",
            inst.label,
            b.per_profile.eps,
            b.sensitivity_sum.eps
        );
    }
    println!("criterion 2: PASS");
}

/// On the equal-broadcast probe the exact individual leakage sits inside the
/// correlated-prior envelopes, grows with the player count, and approaches
/// the prior ceiling `1/alpha`.
#[test]
fn criterion_03_individual_leakage_tracks_the_correlated_envelopes() {
    let f0 = decoupled_bundle(0.125);
    let f1 = decoupled_bundle(-0.125);
    let (alpha, beta) = (0.25, 0.5);
    let horizon = 30;
    let mut values: Vec<(usize, f64)> = Vec::new();
    for &n in &[2usize, 3, 4, 5, 6, 8, 10, 12, 16] {
        let game =
            AggregativeGame::uniform(CostFamily::Disease, n, ConstraintSet::Unbounded { dim: 1 })
                .unwrap();
        let mech = Mechanism::new(
            UpdateRule::full_averaging_uniform(n),
            NoiseSchedule::Geometric { d: 1.0, qbar: 0.5 },
            StepSchedule::geometric(1.0, 0.25),
            vec![DVector::zeros(1); n],
        );
        let prior = CorrelatedBinarySpec::new(f0.clone(), f1.clone(), alpha, beta, n)
            .unwrap()
            .to_prior()
            .unwrap();
        let probe = equal_observation_probe(&game, &f0, &f1, &mech, horizon, 0).unwrap();
        // decoupled game: every co-pattern realises the same swap ratio
        let eps_o = swap_ratio_empirical(&game, &prior, &probe, &mech, Some(2)).unwrap();
        let exact = exact_pml_individual(&game, &prior, 0, &probe, &mech)
            .unwrap()
            .exp();
        if matches!(n, 2 | 4 | 8) {
            let lower = correlated_lower_bound(alpha, beta, eps_o, n).unwrap();
            let upper = correlated_upper_bound(alpha, eps_o, n).unwrap();
            assert!(
                exact >= lower - 1e-6 && exact <= upper + 1e-6,
                "n={n}: exp leakage {exact} outside [{lower}, {upper}]"
            );
        }
        values.push((n, exact));
    }
    for w in values.windows(2) {
        assert!(
            w[1].1 >= w[0].1 - 1e-12,
            "leakage fell from {:?} to {:?}",
            w[0],
            w[1]
        );
    }
    let target = 0.9 / alpha;
    assert!(
        values.iter().any(|&(_, v)| v >= target),
        "no player count reached {target}; values {values:?}"
    );
    println!("criterion 3: PASS");
}

/// The separation search returns an instance whose closed-form per-player
/// budget is exactly the requested level while the exact individual leakage
/// reaches twice that, with the realised swap budget inside the closed form.
#[test]
fn criterion_04_separation_search_witnesses_leakage_above_the_budget() {
    let dir = tempdir().unwrap();
    let report = cmd_separation(0.5, 1.0, 0.25, 0.5, 20, dir.path()).unwrap();
    assert_eq!(report.dp_formula, 0.5, "budget should be met exactly");
    assert!(
        report.exact_individual >= 1.0,
        "witnessed leakage {} below the target",
        report.exact_individual
    );
    assert!(
        report.eps_observation <= report.dp_formula + 1e-12,
        "realised budget {} exceeds the closed form {}",
        report.eps_observation,
        report.dp_formula
    );
    assert!(dir.path().join("separation.json").is_file());
    println!("criterion 4: PASS");
}

/// The geometric closed form evaluates exactly, and the sampled adjacent
/// log-density ratios on a deployment built to its series never exceed it.
#[test]
fn criterion_05_geometric_budget_formula_dominates_sampled_adjacent_ratios() {
    assert_eq!(dp_bound_geometric(1.0, 1.0, 0.5, 1.0, 0.75).unwrap(), 6.0);

    let n = 3;
    let f0 = decoupled_bundle(1.0);
    let f1 = decoupled_bundle(-1.0);
    let game =
        AggregativeGame::uniform(CostFamily::Disease, n, ConstraintSet::Unbounded { dim: 1 })
            .unwrap();
    let mech = Mechanism::new(
        UpdateRule::full_averaging_uniform(n),
        NoiseSchedule::Geometric { d: 1.0, qbar: 0.75 },
        // the closed form's series: first applied step is c * q
        StepSchedule::geometric(0.5, 0.5),
        vec![DVector::zeros(1); n],
    );
    let prior = independent_binary_prior(&f0, &f1, 0.5, n).unwrap();
    let obs = sample_observations(
        &game,
        &prior,
        &mech,
        12,
        &ObservationSampler {
            n_runs: 45,
            include_probes: false,
            seed: 505,
        },
    )
    .unwrap();
    let cert = ratio_certificate(&game, &prior, &obs, &mech, 1, Some(500)).unwrap();
    assert_eq!(cert.n_triples, 500);
    assert!(
        cert.eps_log_ratio <= cert.eps_sensitivity + 1e-9,
        "ratio {} above its envelope {}",
        cert.eps_log_ratio,
        cert.eps_sensitivity
    );
    assert!(
        cert.eps_sensitivity <= 6.0,
        "sensitivity envelope {} exceeds the closed form",
        cert.eps_sensitivity
    );
    assert!(
        cert.eps_log_ratio <= 6.0,
        "sampled adjacent ratio {} exceeds the closed form",
        cert.eps_log_ratio
    );
    println!("criterion 5: PASS");
}

/// Replays reproduce recorded trajectories bit for bit, the log-density is
/// exactly the per-round Laplace product, and density ratios obey the
/// discounted sensitivity envelope.
#[test]
fn criterion_06_replay_is_bit_exact_and_densities_factorise() {
    let n = 3;
    let dim = 2;
    let game =
        AggregativeGame::uniform(CostFamily::Disease, n, ConstraintSet::unit_box(dim)).unwrap();
    let prior = CorrelatedBinarySpec::new(
        disease_bundle(0.8, 0.3, dim),
        disease_bundle(-0.5, 0.3, dim),
        0.3,
        0.5,
        n,
    )
    .unwrap()
    .to_prior()
    .unwrap();
    let mech = Mechanism::new(
        UpdateRule::full_averaging_uniform(n),
        NoiseSchedule::Polynomial {
            p1: 1.0,
            p2: 0.5,
            p3: 1.0,
        },
        StepSchedule::harmonic(0.5, 1.0, 0.5),
        vec![DVector::from_element(dim, 0.5); n],
    );
    let horizon = 6;

    for seed in 0..50u64 {
        let gen = prior.profile(seed as usize % prior.len());
        let t = mech.run(&game, gen, horizon, 3000 + seed).unwrap();
        let (xs, vs) = mech.replay(&game, gen, &t.o).unwrap();
        assert_eq!(xs, t.x, "seed {seed}: strategies diverged in replay");
        assert_eq!(vs, t.v, "seed {seed}: estimates diverged in replay");
    }

    let mut rng = ChaCha20Rng::seed_from_u64(606);
    for trial in 0..200 {
        let gen_idx = rng.gen_range(0..prior.len());
        let i = rng.gen_range(0..prior.len());
        let mut j = rng.gen_range(0..prior.len());
        while j == i {
            j = rng.gen_range(0..prior.len());
        }
        let t = mech
            .run(&game, prior.profile(gen_idx), horizon, rng.gen())
            .unwrap();
        let mut log_probs = [0.0f64; 2];
        for (slot, idx) in [i, j].into_iter().enumerate() {
            let cand = prior.profile(idx);
            let l = mech.log_density(&game, cand, &t.o).unwrap();
            let (_, vs) = mech.replay(&game, cand, &t.o).unwrap();
            let mut manual = 0.0;
            for k in 0..t.o.len() {
                let m = mech.noise.scale(k);
                for p in 0..n {
                    for c in 0..dim {
                        manual += -((t.o[k][p][c] - vs[k][p][c]).abs() / m) - (2.0 * m).ln();
                    }
                }
            }
            assert!(
                (l - manual).abs() <= 1e-12 * manual.abs().max(1.0),
                "trial {trial}, profile {idx}: density {l} vs product {manual}"
            );
            log_probs[slot] = l;
        }
        let mut envelope = 0.0;
        for k in 0..t.o.len() {
            envelope +=
                sensitivity(&game, prior.profile(i), prior.profile(j), &t.o, &mech, k).unwrap()
                    / mech.noise.scale(k);
        }
        assert!(
            (log_probs[0] - log_probs[1]).abs() <= envelope + 1e-9,
            "trial {trial}: |{} - {}| above envelope {envelope}",
            log_probs[0],
            log_probs[1]
        );
    }
    println!("criterion 6: PASS");
}

/// Analytic attack gradients agree with central finite differences, and the
/// one-step prediction loss vanishes at the true parameters on a noiseless
/// trajectory.
#[test]
fn criterion_07_attack_gradients_match_finite_differences_and_vanish_at_truth() {
    let n = 3;
    let dim = 2;
    let game =
        AggregativeGame::uniform(CostFamily::Disease, n, ConstraintSet::Unbounded { dim }).unwrap();
    let steps = StepSchedule::harmonic(0.5, 1.0, 0.5);
    let mut rng = ChaCha20Rng::seed_from_u64(707);
    let mut unit = |rng: &mut ChaCha20Rng| 2.0 * rng.gen::<f64>() - 1.0;

    for trial in 0..50 {
        let state = AdversaryState {
            a_hat: (0..n)
                .map(|_| DVector::from_fn(dim, |_, _| unit(&mut rng)))
                .collect(),
            b_hat: (0..n)
                .map(|_| DMatrix::from_fn(dim, dim, |_, _| 0.5 * unit(&mut rng)))
                .collect(),
            x_hat: (0..n)
                .map(|_| DVector::from_fn(dim, |_, _| unit(&mut rng)))
                .collect(),
            include_chain: trial % 2 == 0,
            projected: false,
            fit_interaction: true,
        };
        let o_k: Vec<Strategy> = (0..n)
            .map(|_| DVector::from_fn(dim, |_, _| unit(&mut rng)))
            .collect();
        let o_next: Vec<Strategy> = (0..n)
            .map(|_| DVector::from_fn(dim, |_, _| unit(&mut rng)))
            .collect();
        let k = trial % 5;

        let (grad_a, grad_b) = parameter_gradients(&game, &state, &o_k, &o_next, &steps, k).unwrap();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let h = 1e-3;
        for p in 0..n {
            for c in 0..dim {
                let mut plus = state.clone();
                plus.a_hat[p][c] += h;
                let mut minus = state.clone();
                minus.a_hat[p][c] -= h;
                let fd = (attack_loss(&game, &plus, &o_k, &o_next, &steps, k).unwrap()
                    - attack_loss(&game, &minus, &o_k, &o_next, &steps, k).unwrap())
                    / (2.0 * h);
                numeric.push(fd);
                analytic.push(grad_a[p][c]);
            }
            for r in 0..dim {
                for c in 0..dim {
                    let mut plus = state.clone();
                    plus.b_hat[p][(r, c)] += h;
                    let mut minus = state.clone();
                    minus.b_hat[p][(r, c)] -= h;
                    let fd = (attack_loss(&game, &plus, &o_k, &o_next, &steps, k).unwrap()
                        - attack_loss(&game, &minus, &o_k, &o_next, &steps, k).unwrap())
                        / (2.0 * h);
                    numeric.push(fd);
                    analytic.push(grad_b[p][(r, c)]);
                }
            }
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        assert!(
            diff / scale < 1e-5,
            "trial {trial}: finite differences deviate by {} relative",
            diff / scale
        );
    }

    // at the truth the prediction mirrors the engine exactly, so the loss
    // vanishes on every round of a noiseless run
    let costs = CostProfile::new(
        "truth",
        vec![
            PlayerCost::disease(
                dvec(&[0.6, -0.3]),
                DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.2]),
            )
            .unwrap(),
            PlayerCost::disease(
                dvec(&[-0.2, 0.4]),
                DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, 0.3]),
            )
            .unwrap(),
            PlayerCost::disease(
                dvec(&[0.1, 0.5]),
                DMatrix::from_row_slice(2, 2, &[0.25, 0.05, 0.05, 0.15]),
            )
            .unwrap(),
        ],
    );
    let mech = Mechanism::new(
        UpdateRule::full_averaging_uniform(n),
        NoiseSchedule::Zero,
        steps,
        vec![DVector::from_element(dim, 0.25); n],
    );
    let horizon = 6;
    let t = mech.run(&game, &costs, horizon, 11).unwrap();
    for k in 0..horizon {
        let state = AdversaryState {
            a_hat: costs
                .players
                .iter()
                .map(|p| match p {
                    PlayerCost::Disease { a, .. } => a.clone(),
                    _ => unreachable!(),
                })
                .collect(),
            b_hat: costs
                .players
                .iter()
                .map(|p| match p {
                    PlayerCost::Disease { b, .. } => b.clone(),
                    _ => unreachable!(),
                })
                .collect(),
            x_hat: t.x[k].clone(),
            include_chain: true,
            projected: false,
            fit_interaction: true,
        };
        let loss = attack_loss(&game, &state, &t.o[k], &t.o[k + 1], &mech.steps, k).unwrap();
        assert!(loss < 1e-18, "round {k}: loss at the truth is {loss}");
    }
    println!("criterion 7: PASS");
}

/// Recovery gain orders strictly by noise level on the bundled gain study,
/// with the noiseless run nearly saturating and all levels starting at zero.
#[test]
fn criterion_08_recovery_gain_orders_by_noise_level() {
    let cfg = Figure::from_index(1).unwrap().default_config();
    let summary = run_gain_vs_noise(&cfg).unwrap();
    let get = |label: &str| {
        summary
            .levels
            .iter()
            .find(|l| l.label == label)
            .unwrap_or_else(|| panic!("missing level {label}"))
    };
    let noiseless = get("noiseless");
    let low = get("low");
    let medium = get("medium");
    let high = get("high");
    assert!(
        noiseless.final_mean_gain > low.final_mean_gain
            && low.final_mean_gain > medium.final_mean_gain
            && medium.final_mean_gain > high.final_mean_gain,
        "gains not ordered: {} / {} / {} / {}",
        noiseless.final_mean_gain,
        low.final_mean_gain,
        medium.final_mean_gain,
        high.final_mean_gain
    );
    assert!(
        noiseless.final_mean_gain >= 1.8,
        "noiseless recovery only reached {}",
        noiseless.final_mean_gain
    );
    for level in &summary.levels {
        assert_eq!(
            level.series.log_mean_gain[0], 0.0,
            "{}: initial log gain must be zero",
            level.label
        );
    }
    println!("criterion 8: PASS");
}

/// The bounds study dominates its empirical series at every iteration with
/// no slack, and the sweep study shows the lower envelope and the measured
/// individual recovery both overtaking the constant per-player budget.
#[test]
fn criterion_09_bounds_dominate_empirical_and_the_sweep_crosses() {
    let dir = tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_pml"))
        .args(["figure", "--which", "2", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("figure2.csv")).unwrap();
    {
        let headers = rdr.headers().unwrap();
        assert_eq!(
            headers.iter().take(4).collect::<Vec<_>>(),
            vec!["iteration", "pml_bound", "dp_group_bound", "empirical_leakage"]
        );
    }
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let pml: f64 = rec[1].parse().unwrap();
        let dp: f64 = rec[2].parse().unwrap();
        let emp: f64 = rec[3].parse().unwrap();
        assert!(emp <= pml, "row {rows}: empirical {emp} above bound {pml}");
        assert!(pml <= dp, "row {rows}: bound {pml} above group budget {dp}");
        rows += 1;
    }
    assert_eq!(rows, 41, "one row per iteration, start included");

    let cfg = Figure::from_index(3).unwrap().default_config();
    let sweep = run_correlation_sweep(&cfg, &SWEEP_PLAYERS).unwrap();
    assert!(
        sweep
            .rows
            .iter()
            .any(|r| r.pml_lower > r.dp_group_bound),
        "lower envelope never crossed the constant budget: {:?}",
        sweep.rows
    );
    assert!(
        sweep
            .rows
            .iter()
            .any(|r| r.empirical_individual > r.dp_group_bound),
        "measured recovery never exceeded the constant budget: {:?}",
        sweep.rows
    );
    println!("criterion 9: PASS");
}

/// Noiseless dynamics on the strongly convex quadratic family reach the
/// equilibrium that a direct linear solve of the stacked first-order
/// conditions produces.
#[test]
fn criterion_10_noiseless_dynamics_reach_the_linear_solve_equilibrium() {
    let n = 3;
    let dim = 2;
    let game =
        AggregativeGame::uniform(CostFamily::QuadraticTest, n, ConstraintSet::Unbounded { dim })
            .unwrap();
    let qs = [
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.4]),
        DMatrix::from_row_slice(2, 2, &[1.3, 0.1, 0.1, 0.9]),
        DMatrix::from_row_slice(2, 2, &[1.1, 0.0, 0.0, 1.2]),
    ];
    let rs = [dvec(&[0.4, -0.6]), dvec(&[-0.3, 0.5]), dvec(&[0.2, 0.1])];
    let ss = [0.2, 0.3, 0.4];
    let costs = CostProfile::new(
        "quad",
        (0..n)
            .map(|i| PlayerCost::quadratic(qs[i].clone(), rs[i].clone(), ss[i]).unwrap())
            .collect(),
    );
    let mech = Mechanism::new(
        UpdateRule::full_averaging_uniform(n),
        NoiseSchedule::Zero,
        StepSchedule::harmonic(0.5, 1.0, 0.02),
        vec![DVector::zeros(dim); n],
    );
    let horizon = 2000;
    let t = mech.run(&game, &costs, horizon, 1).unwrap();

    // oracle: stack the first-order conditions over players and solve once;
    // block (i, j) couples through the mean, the diagonal adds the own-term
    let nd = n * dim;
    let mut a = DMatrix::<f64>::zeros(nd, nd);
    let mut rhs = DVector::<f64>::zeros(nd);
    for i in 0..n {
        for c in 0..dim {
            rhs[i * dim + c] = -rs[i][c];
        }
        for j in 0..n {
            for r in 0..dim {
                for c in 0..dim {
                    let mut val = if r == c { ss[i] / n as f64 } else { 0.0 };
                    if i == j {
                        val += qs[i][(r, c)];
                        if r == c {
                            val += ss[i] / n as f64;
                        }
                    }
                    a[(i * dim + r, j * dim + c)] = val;
                }
            }
        }
    }
    let xstar = a.lu().solve(&rhs).expect("stacked system is invertible");
    let star: Vec<Strategy> = (0..n).map(|i| xstar.rows(i * dim, dim).into_owned()).collect();
    let oracle_residual = game.ne_residual(&costs, &star).unwrap();
    assert!(
        oracle_residual < 1e-9,
        "linear solve is not an equilibrium: residual {oracle_residual}"
    );

    let final_x = t.x.last().unwrap();
    let residual = game.ne_residual(&costs, final_x).unwrap();
    assert!(
        residual < 1e-6,
        "dynamics stalled at residual {residual} after {horizon} rounds"
    );
    let worst = final_x
        .iter()
        .zip(&star)
        .map(|(xa, xb)| (xa - xb).abs().max())
        .fold(0.0, f64::max);
    assert!(
        worst < 1e-5,
        "final iterate is {worst} away from the solved equilibrium"
    );
    println!("criterion 10: PASS");
}
