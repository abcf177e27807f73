//! The five subcommands, as library functions returning their artifacts.
//!
//! Each command builds everything it needs from a [`Config`] (or explicit
//! arguments for the separation search), writes its artifacts through the
//! validated writers, and returns the in-memory result so tests can assert
//! on it without re-reading files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use pml_core::adversary::{empirical_leakage, LeakageSeries};
use pml_core::engine::{Mechanism, NoiseSchedule, StepSchedule, UpdateRule};
use pml_core::game::{aggregate, AggregativeGame, ConstraintSet, CostFamily, PlayerCost};
use pml_core::privacy::bounds::{correlated_lower_bound, dp_bound_geometric, equal_observation_probe};
use pml_core::privacy::leakage::exact_pml_individual;
use pml_core::privacy::prior::CorrelatedBinarySpec;
use pml_core::privacy::report::{build_report, PrivacyReport};

use crate::config::{Config, FamilyKind};
use crate::figures::{
    probe_swap_budget, run_bounds_vs_empirical, run_correlation_sweep, run_gain_vs_noise,
    write_bounds_vs_empirical, write_correlation_sweep, write_gain_vs_noise, ArtifactFormat,
    Figure, SWEEP_PLAYERS,
};
use crate::output::{fmt_f64, write_json, write_manifest, Manifest, Table};

fn manifest_for(command: &str, cfg: &Config, seeds: serde_json::Value, files: Vec<String>) -> Result<Manifest> {
    Ok(Manifest {
        command: command.to_string(),
        config: serde_json::to_value(cfg).context("encoding effective config")?,
        seeds,
        files,
    })
}

/// One run's headline numbers; the full trajectory sits next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub run_seed: u64,
    pub profile_id: String,
    pub horizon: usize,
    pub ne_residual_final: f64,
    pub mean_final_strategy: Vec<f64>,
}

/// Simulate the noisy dynamics once per seed and record the trajectories.
pub fn cmd_run(cfg: &Config, out: &Path, seeds: &[u64]) -> Result<Vec<RunSummary>> {
    if seeds.is_empty() {
        bail!("run needs at least one seed");
    }
    let game = cfg.build_game()?;
    let mech = cfg.build_mechanism()?;
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    let mut seed_map = serde_json::Map::new();

    for &seed in seeds {
        use rand::{RngCore, SeedableRng};
        let mut master = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let profile = match cfg.game.family {
            FamilyKind::Disease => {
                let sampler = cfg.build_sampler()?;
                sampler.sample_profile(&mut master)
            }
            FamilyKind::Quadratic => cfg.quadratic_profile()?,
        };
        let run_seed = master.next_u64();
        let traj = mech
            .run(&game, &profile, cfg.run.horizon, run_seed)
            .with_context(|| format!("running seed {seed}"))?;
        let x_last = traj.x.last().expect("run yields horizon+1 states");
        let summary = RunSummary {
            seed,
            run_seed,
            profile_id: profile.id.clone(),
            horizon: cfg.run.horizon,
            ne_residual_final: game.ne_residual(&profile, x_last)?,
            mean_final_strategy: aggregate(x_last)?.iter().copied().collect(),
        };
        let name = format!("trajectory-{seed}.json");
        write_json(&out.join(&name), &traj)?;
        files.push(name);
        seed_map.insert(seed.to_string(), serde_json::json!({"run_seed": run_seed}));
        summaries.push(summary);
    }
    write_json(&out.join("summary.json"), &summaries)?;
    files.push("summary.json".to_string());
    let manifest = manifest_for("run", cfg, serde_json::Value::Object(seed_map), files)?;
    write_manifest(out, &manifest)?;
    Ok(summaries)
}

/// Build the full privacy report: sampled bounds, certificates, exact
/// leakage on the enumerated prior, and the correlated envelope when the
/// prior has leader-copy form.
pub fn cmd_bounds(cfg: &Config, out: &Path) -> Result<PrivacyReport> {
    let game = cfg.build_game()?;
    let prior = cfg.build_prior()?;
    let spec = cfg.correlated_spec()?;
    let mech = cfg.build_mechanism()?;
    let report = build_report(
        &game,
        &prior,
        spec.as_ref(),
        &mech,
        cfg.run.horizon,
        &cfg.report_config(),
    )?;
    write_json(&out.join("report.json"), &report)?;
    let manifest = manifest_for(
        "bounds",
        cfg,
        serde_json::json!({"bounds_seed": cfg.bounds.seed}),
        vec!["report.json".to_string()],
    )?;
    write_manifest(out, &manifest)?;
    Ok(report)
}

/// Run the parameter-recovery ensemble and record the gain series.
pub fn cmd_attack(cfg: &Config, out: &Path, seed_override: Option<u64>) -> Result<LeakageSeries> {
    let game = cfg.build_game()?;
    if game.family() != CostFamily::Disease {
        bail!("the attack targets the disease family");
    }
    let mech = cfg.build_mechanism()?;
    let sampler = cfg.build_sampler()?;
    let mut ens = cfg.ensemble_config();
    if let Some(seed) = seed_override {
        ens.seed = seed;
    }
    let series = empirical_leakage(&game, sampler.as_ref(), &mech, cfg.run.horizon, &ens)?;

    write_json(&out.join("leakage.json"), &series)?;
    let mut table = Table::new(&[
        "iteration",
        "mean_gain",
        "log_mean_gain",
        "mean_gain_first",
        "log_mean_gain_first",
    ]);
    for k in 0..series.mean_gain.len() {
        table.push_row(vec![
            k.to_string(),
            fmt_f64(series.mean_gain[k]),
            fmt_f64(series.log_mean_gain[k]),
            fmt_f64(series.mean_gain_first[k]),
            fmt_f64(series.log_mean_gain_first[k]),
        ])?;
    }
    crate::output::write_csv(&out.join("leakage.csv"), &table)?;
    let manifest = manifest_for(
        "attack",
        cfg,
        serde_json::json!({"attack_seed": ens.seed}),
        vec!["leakage.json".to_string(), "leakage.csv".to_string()],
    )?;
    write_manifest(out, &manifest)?;
    Ok(series)
}

/// What `cmd_figure` hands back, so callers can assert without re-reading.
#[derive(Debug, Clone, PartialEq)]
pub enum FigureSummary {
    GainVsNoise(crate::figures::GainVsNoiseSummary),
    BoundsVsEmpirical(crate::figures::BoundsVsEmpiricalSummary),
    CorrelationSweep(crate::figures::CorrelationSweepSummary),
}

/// Run one bundled study. `cfg` of `None` uses the study's built-in
/// configuration; `threads` of `Some(t)` pins the worker pool width.
pub fn cmd_figure(
    which: u8,
    cfg: Option<&Config>,
    out: &Path,
    format: ArtifactFormat,
    threads: Option<usize>,
) -> Result<FigureSummary> {
    let figure = Figure::from_index(which)?;
    let effective = match cfg {
        Some(c) => c.clone(),
        None => figure.default_config(),
    };
    effective.validate()?;

    let work = || -> Result<(FigureSummary, Vec<String>)> {
        match figure {
            Figure::GainVsNoise => {
                let summary = run_gain_vs_noise(&effective)?;
                let files = write_gain_vs_noise(out, &summary, format)?;
                Ok((FigureSummary::GainVsNoise(summary), files))
            }
            Figure::BoundsVsEmpirical => {
                let summary = run_bounds_vs_empirical(&effective)?;
                let files = write_bounds_vs_empirical(out, &summary, format)?;
                Ok((FigureSummary::BoundsVsEmpirical(summary), files))
            }
            Figure::CorrelationSweep => {
                let summary = run_correlation_sweep(&effective, &SWEEP_PLAYERS)?;
                let files = write_correlation_sweep(out, &summary, format)?;
                Ok((FigureSummary::CorrelationSweep(summary), files))
            }
        }
    };
    let (summary, files) = match threads {
        Some(t) if t > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .context("building worker pool")?
            .install(work),
        _ => work(),
    }?;

    let manifest = manifest_for(
        &format!("figure-{}", figure.index()),
        &effective,
        serde_json::json!({
            "attack_seed": effective.attack.seed,
            "bounds_seed": effective.bounds.seed,
            "pair_seed": effective.prior.pair.seed,
        }),
        files,
    )?;
    write_manifest(out, &manifest)?;
    Ok(summary)
}

/// Why the separation search can fail.
#[derive(Debug, Error, PartialEq)]
pub enum SeparationFailure {
    /// The requested individual leakage exceeds the prior ceiling
    /// `ln(1/alpha)`, which no player count can reach.
    #[error("target leakage {target} is not attainable: the prior ceiling is ln(1/alpha) = {ceiling}")]
    InfeasibleTarget { target: f64, ceiling: f64 },
    /// The scan exhausted its player budget below the target.
    #[error("no player count up to {max_players} reaches leakage {target}; best witnessed was {best}")]
    NotReached {
        max_players: usize,
        target: f64,
        best: f64,
    },
}

/// The instance found by the separation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// Player count at which the witness appears.
    pub n_players: usize,
    /// Closed-form per-player budget of the deployment; equals the
    /// requested level by construction.
    pub dp_formula: f64,
    pub eps_requested: f64,
    pub target: f64,
    /// Swap budget realised on the probe (same quantity the formula bounds).
    pub eps_observation: f64,
    /// Exact individual leakage of the leader at the probe.
    pub exact_individual: f64,
    /// Closed-form lower envelope at the measured budget, log scale.
    pub lower_bound: f64,
    pub alpha: f64,
    pub beta: f64,
    /// L1 pseudo-gradient bound of the constructed bundles.
    pub gradient_bound: f64,
    pub horizon: usize,
}

/// Geometric schedules of the separation instance: step `0.25^k` and noise
/// `0.5^k` at broadcast round `k >= 1`, thirty rounds. A step's divergence
/// is first broadcast one round after it is applied, so with
/// one-dimensional decoupled bundles `a = +/- c1` the realised swap budget
/// is `2 c1 sum_{k>=1} (q/qbar)^k = 2 c1` up to the tail `2^-30`, inside
/// the closed-form guarantee `4 c1`.
const SEP_STEP_Q: f64 = 0.25;
const SEP_NOISE_QBAR: f64 = 0.5;
const SEP_HORIZON: usize = 30;

/// Search for a player count at which exact individual leakage provably
/// exceeds what the per-player budget `eps1` suggests: the returned
/// instance has per-player budget exactly `eps1` yet leaks at least `eps2`
/// about the leader.
pub fn cmd_separation(
    eps1: f64,
    eps2: f64,
    alpha: f64,
    beta: f64,
    max_players: usize,
    out: &Path,
) -> Result<SeparationReport> {
    if !(eps1 > 0.0) || !eps1.is_finite() {
        bail!("eps1 must be a positive finite per-player budget, got {eps1}");
    }
    if !(eps2 > 0.0) || !eps2.is_finite() {
        bail!("eps2 must be a positive finite leakage target, got {eps2}");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("alpha must lie strictly between 0 and 1, got {alpha}");
    }
    if !(beta > 0.0 && beta <= 1.0) {
        bail!("beta must lie in (0, 1], got {beta}");
    }
    if max_players < 2 {
        bail!("max_players must be at least 2");
    }
    let ceiling = -alpha.ln();
    if eps2 >= ceiling {
        return Err(SeparationFailure::InfeasibleTarget {
            target: eps2,
            ceiling,
        }
        .into());
    }

    // bundle separation that makes the closed-form budget equal eps1
    let c1 = eps1 * (SEP_NOISE_QBAR - SEP_STEP_Q) / (2.0 * SEP_NOISE_QBAR);
    let dp_formula = dp_bound_geometric(c1, 1.0, SEP_STEP_Q, 1.0, SEP_NOISE_QBAR)?;

    let f0 = PlayerCost::disease(DVector::from_element(1, c1), DMatrix::zeros(1, 1))?;
    let f1 = PlayerCost::disease(DVector::from_element(1, -c1), DMatrix::zeros(1, 1))?;

    let mut best = 0.0f64;
    for n in 2..=max_players {
        let game = AggregativeGame::uniform(
            CostFamily::Disease,
            n,
            ConstraintSet::Unbounded { dim: 1 },
        )?;
        let mech = Mechanism::new(
            UpdateRule::full_averaging_uniform(n),
            NoiseSchedule::Geometric {
                d: 1.0,
                qbar: SEP_NOISE_QBAR,
            },
            // first applied step is c*q, aligning the deployment with the
            // closed form's series (see dp_bound_geometric)
            StepSchedule::geometric(SEP_STEP_Q, SEP_STEP_Q),
            vec![DVector::zeros(1); n],
        );
        let spec = CorrelatedBinarySpec::new(f0.clone(), f1.clone(), alpha, beta, n)?;
        let prior = spec
            .to_prior()
            .with_context(|| format!("enumerating the prior at {n} players"))?;
        let probe = equal_observation_probe(&game, &f0, &f1, &mech, SEP_HORIZON, 0)?;
        let exact = exact_pml_individual(&game, &prior, 0, &probe, &mech)?;
        best = best.max(exact);
        if exact >= eps2 {
            let eps_obs = probe_swap_budget(&game, &f0, &f1, &mech, SEP_HORIZON)?;
            let report = SeparationReport {
                n_players: n,
                dp_formula,
                eps_requested: eps1,
                target: eps2,
                eps_observation: eps_obs,
                exact_individual: exact,
                lower_bound: correlated_lower_bound(alpha, beta, eps_obs, n)?.ln(),
                alpha,
                beta,
                gradient_bound: c1,
                horizon: SEP_HORIZON,
            };
            write_json(&out.join("separation.json"), &report)?;
            let manifest = Manifest {
                command: "separation".to_string(),
                config: serde_json::json!({
                    "eps1": eps1,
                    "eps2": eps2,
                    "alpha": alpha,
                    "beta": beta,
                    "max_players": max_players,
                    "step_q": SEP_STEP_Q,
                    "noise_qbar": SEP_NOISE_QBAR,
                    "horizon": SEP_HORIZON,
                }),
                seeds: serde_json::json!({}),
                files: vec!["separation.json".to_string()],
            };
            write_manifest(out, &manifest)?;
            return Ok(report);
        }
    }
    Err(SeparationFailure::NotReached {
        max_players,
        target: eps2,
        best,
    }
    .into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn tiny_config() -> Config {
        Config::parse_toml(
            r#"
            [game]
            family = "disease"
            n_players = 2
            dim = 1

            [prior]
            kind = "independent"
            p0 = 0.3

            [prior.pair]
            seed = 3
            scale = 0.0
            separation = 0.5
            b_scale = 0.0

            [schedules.noise]
            kind = "geometric"
            d = 1.0
            qbar = 0.8

            [schedules.steps]
            kind = "geometric"
            c = 0.5
            q = 0.5

            [run]
            horizon = 4
            rule = "full-averaging"
            seed = 11

            [attack]
            nu = 0.05
            inner_epochs = 2
            include_chain = true
            max_retries = 5
            n_samples = 3
            seed = 10

            [bounds]
            n_runs = 2
            include_probes = true
            seed = 20
            "#,
        )
        .unwrap()
    }

    #[test]
    fn run_command_writes_replayable_trajectories() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let summaries = cmd_run(&cfg, dir.path(), &[5, 6]).unwrap();
        assert_eq!(summaries.len(), 2);
        let back: pml_core::engine::Trajectory =
            crate::output::read_json(&dir.path().join("trajectory-5.json")).unwrap();
        assert_eq!(back.horizon, 4);
        // the artifact replays bit-exactly through the recorded run seed
        let game = cfg.build_game().unwrap();
        let mech = cfg.build_mechanism().unwrap();
        let prior = cfg.build_prior().unwrap();
        let profile = prior
            .profile(prior.index_of(&back.profile_id).unwrap())
            .clone();
        let again = mech
            .run(&game, &profile, back.horizon, back.seed)
            .unwrap();
        assert_eq!(again.o, back.o);
        let manifest: crate::output::Manifest =
            crate::output::read_json(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(manifest.command, "run");
        assert!(manifest.files.iter().any(|f| f == "trajectory-6.json"));
    }

    #[test]
    fn bounds_command_reports_ordered_estimates() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let report = cmd_bounds(&cfg, dir.path()).unwrap();
        assert!(report.eps_expectation.eps <= report.eps_per_profile.eps + 1e-9);
        assert!(report.eps_per_profile.eps <= report.eps_sensitivity_sum.eps + 1e-9);
        let back: pml_core::privacy::report::PrivacyReport =
            crate::output::read_json(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn attack_command_is_anchored_and_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let series = cmd_attack(&cfg, dir.path(), None).unwrap();
        assert_eq!(series.mean_gain[0], 1.0);
        assert_eq!(series.log_mean_gain[0], 0.0);
        let series2 = cmd_attack(&cfg, dir.path(), Some(cfg.attack.seed)).unwrap();
        assert_eq!(series, series2);
        let csv = std::fs::read_to_string(dir.path().join("leakage.csv")).unwrap();
        assert!(csv.starts_with("iteration,mean_gain,log_mean_gain,"));
    }

    #[test]
    fn separation_rejects_targets_above_the_ceiling() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_separation(0.5, 2.0, 0.25, 0.5, 6, dir.path()).unwrap_err();
        match err.downcast_ref::<SeparationFailure>() {
            Some(SeparationFailure::InfeasibleTarget { ceiling, .. }) => {
                assert!((ceiling - 4.0f64.ln()).abs() < 1e-15);
            }
            other => panic!("expected InfeasibleTarget, got {other:?}"),
        }
    }

    #[test]
    fn separation_reports_not_reached_on_small_budgets() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_separation(0.5, 1.0, 0.25, 0.5, 3, dir.path()).unwrap_err();
        match err.downcast_ref::<SeparationFailure>() {
            Some(SeparationFailure::NotReached {
                max_players, best, ..
            }) => {
                assert_eq!(*max_players, 3);
                assert!(*best > 0.0 && *best < 1.0, "best {best}");
            }
            other => panic!("expected NotReached, got {other:?}"),
        }
    }
}
