//! The three bundled experiment studies.
//!
//! Each study has a built-in default configuration (a reconstruction with
//! explicitly chosen constants, not values copied from elsewhere) and can be
//! re-pointed at a user config. All three emit a CSV series plus a JSON
//! summary through the validated writers in [`crate::output`].

use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pml_core::adversary::{empirical_leakage, LeakageSeries};
use pml_core::engine::{Mechanism, NoiseSchedule, ScheduleKind};
use pml_core::game::{AggregativeGame, CostProfile, PlayerCost};
use pml_core::privacy::bounds::{
    correlated_lower_bound, correlated_upper_bound, equal_observation_probe, sample_observations,
    ObservationSampler,
};
use pml_core::privacy::report::{bound_series, BoundSeries};

use crate::config::{
    AttackSection, BoundsSection, Config, ConstraintKind, FamilyKind, GameSection, PairSection,
    PriorKind, PriorSection, RunSection, RuleKind, SchedulesSection,
};
use crate::output::{fmt_f64, seed_hash, write_csv, write_json, Table};

/// Which bundled study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Recovery gain under increasing noise levels.
    GainVsNoise,
    /// Empirical leakage against the expectation bound and the group-scaled
    /// per-player budget, per iteration.
    BoundsVsEmpirical,
    /// Individual leakage versus player count on a correlated prior, against
    /// the constant per-player budget.
    CorrelationSweep,
}

impl Figure {
    pub fn from_index(which: u8) -> Result<Figure> {
        match which {
            1 => Ok(Figure::GainVsNoise),
            2 => Ok(Figure::BoundsVsEmpirical),
            3 => Ok(Figure::CorrelationSweep),
            _ => bail!("figure index must be 1, 2 or 3, got {which}"),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Figure::GainVsNoise => 1,
            Figure::BoundsVsEmpirical => 2,
            Figure::CorrelationSweep => 3,
        }
    }

    /// The built-in configuration for this study.
    pub fn default_config(self) -> Config {
        match self {
            Figure::GainVsNoise => gain_vs_noise_config(),
            Figure::BoundsVsEmpirical => bounds_vs_empirical_config(),
            Figure::CorrelationSweep => correlation_sweep_config(),
        }
    }
}

fn disease_config(
    n_players: usize,
    dim: usize,
    constraint: ConstraintKind,
    rule: RuleKind,
    pair: PairSection,
    noise: NoiseSchedule,
    steps: ScheduleKind,
    horizon: usize,
    attack: AttackSection,
) -> Config {
    Config {
        game: GameSection {
            family: FamilyKind::Disease,
            n_players,
            dim,
            constraint,
            quad_diag: 1.0,
            quad_r: 1.0,
            quad_s: 0.1,
        },
        prior: PriorSection {
            kind: PriorKind::Correlated,
            alpha: 0.25,
            beta: 0.5,
            p0: 0.5,
            pair,
        },
        schedules: SchedulesSection {
            noise,
            steps,
            mixing: None,
        },
        run: RunSection {
            horizon,
            rule,
            x0: None,
            seed: 1,
        },
        attack,
        bounds: BoundsSection {
            n_runs: 3,
            include_probes: true,
            seed: 202,
            individual_players: Some(vec![0]),
        },
    }
}

fn gain_vs_noise_config() -> Config {
    // decoupled deployment: with zero interaction the drive parameters are
    // fully identified from a noiseless run, so the noise levels isolate
    // exactly how much the broadcast noise protects them
    disease_config(
        20,
        2,
        ConstraintKind::Unbounded,
        RuleKind::FullAveraging,
        PairSection {
            seed: 7,
            scale: 0.5,
            separation: 0.25,
            b_scale: 0.0,
        },
        NoiseSchedule::Polynomial {
            p1: 0.02,
            p2: 0.001,
            p3: 1.0,
        },
        ScheduleKind::Harmonic {
            q1: 0.08,
            q2: 1.0,
            q3: 0.05,
        },
        60,
        AttackSection {
            nu: 0.5,
            inner_epochs: 40,
            include_chain: true,
            max_retries: 10,
            n_samples: 20,
            seed: 101,
            projected: false,
            fit_interaction: false,
        },
    )
}

fn bounds_vs_empirical_config() -> Config {
    disease_config(
        5,
        2,
        ConstraintKind::UnitBox,
        RuleKind::FullAveragingProjected,
        PairSection {
            seed: 7,
            scale: 1.0,
            separation: 0.6,
            b_scale: 0.4,
        },
        NoiseSchedule::Polynomial {
            p1: 1.0,
            p2: 0.5,
            p3: 1.0,
        },
        ScheduleKind::Harmonic {
            q1: 1.0,
            q2: 1.0,
            q3: 0.1,
        },
        40,
        AttackSection {
            nu: 0.01,
            inner_epochs: 10,
            include_chain: true,
            max_retries: 10,
            n_samples: 20,
            seed: 101,
            projected: true,
            fit_interaction: true,
        },
    )
}

fn correlation_sweep_config() -> Config {
    // the two bundles sit close together so the per-player swap budget
    // stays small while the drive itself is strong enough for the attack
    // to recover its direction reliably
    disease_config(
        5,
        1,
        ConstraintKind::Unbounded,
        RuleKind::FullAveraging,
        PairSection {
            seed: 7,
            scale: 1.0,
            separation: 0.0015,
            b_scale: 0.0,
        },
        NoiseSchedule::Geometric {
            d: 0.3,
            qbar: 0.8,
        },
        ScheduleKind::Harmonic {
            q1: 1.0,
            q2: 1.0,
            q3: 1.0,
        },
        20,
        AttackSection {
            nu: 0.3,
            inner_epochs: 8,
            include_chain: true,
            max_retries: 10,
            n_samples: 20,
            seed: 101,
            projected: false,
            fit_interaction: false,
        },
    )
}

/// Player counts swept by the correlation study.
pub const SWEEP_PLAYERS: [usize; 10] = [2, 3, 4, 5, 6, 8, 10, 12, 16, 20];

/// The four noise levels of the gain study, mildest first. The scales form
/// a geometric ladder so the degradation separates clearly in the means.
pub fn noise_levels() -> Vec<(&'static str, NoiseSchedule)> {
    vec![
        ("noiseless", NoiseSchedule::Zero),
        (
            "low",
            NoiseSchedule::Polynomial {
                p1: 0.02,
                p2: 0.001,
                p3: 1.0,
            },
        ),
        (
            "medium",
            NoiseSchedule::Polynomial {
                p1: 0.06,
                p2: 0.003,
                p3: 1.0,
            },
        ),
        (
            "high",
            NoiseSchedule::Polynomial {
                p1: 0.18,
                p2: 0.009,
                p3: 1.0,
            },
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevelSeries {
    pub label: String,
    pub noise: NoiseSchedule,
    pub final_mean_gain: f64,
    pub final_log_mean_gain: f64,
    pub series: LeakageSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainVsNoiseSummary {
    pub levels: Vec<NoiseLevelSeries>,
    pub n_samples: usize,
    pub horizon: usize,
    pub seed_hash: String,
}

/// Recovery gain per iteration under each noise level, averaged over the
/// attack ensemble. All levels share the game, prior, schedules and seeds;
/// only the broadcast noise differs.
pub fn run_gain_vs_noise(cfg: &Config) -> Result<GainVsNoiseSummary> {
    let game = cfg.build_game()?;
    let sampler = cfg.build_sampler()?;
    let base = cfg.build_mechanism()?;
    let ens = cfg.ensemble_config();
    let horizon = cfg.run.horizon;

    let levels: Vec<NoiseLevelSeries> = noise_levels()
        .par_iter()
        .map(|(label, noise)| -> Result<NoiseLevelSeries> {
            let mech = Mechanism::new(
                base.rule.clone(),
                *noise,
                base.steps,
                base.x0.clone(),
            );
            let series = empirical_leakage(&game, sampler.as_ref(), &mech, horizon, &ens)
                .with_context(|| format!("noise level {label}"))?;
            Ok(NoiseLevelSeries {
                label: (*label).to_string(),
                noise: *noise,
                final_mean_gain: *series.mean_gain.last().expect("nonempty series"),
                final_log_mean_gain: *series.log_mean_gain.last().expect("nonempty series"),
                series,
            })
        })
        .collect::<Result<_>>()?;

    Ok(GainVsNoiseSummary {
        n_samples: ens.n_samples,
        horizon,
        seed_hash: seed_hash(ens.seed),
        levels,
    })
}

pub fn write_gain_vs_noise(out: &Path, summary: &GainVsNoiseSummary, format: ArtifactFormat) -> Result<Vec<String>> {
    let mut files = Vec::new();
    if format.wants_json() {
        write_json(&out.join("figure1.json"), summary)?;
        files.push("figure1.json".to_string());
    }
    if format.wants_csv() {
        let mut header = vec!["iteration".to_string()];
        for lvl in &summary.levels {
            header.push(format!("mean_gain_{}", lvl.label));
        }
        for lvl in &summary.levels {
            header.push(format!("log_mean_gain_{}", lvl.label));
        }
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = Table::new(&header_refs);
        for k in 0..=summary.horizon {
            let mut row = vec![k.to_string()];
            for lvl in &summary.levels {
                row.push(fmt_f64(lvl.series.mean_gain[k]));
            }
            for lvl in &summary.levels {
                row.push(fmt_f64(lvl.series.log_mean_gain[k]));
            }
            table.push_row(row)?;
        }
        write_csv(&out.join("figure1.csv"), &table)?;
        files.push("figure1.csv".to_string());
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsVsEmpiricalSummary {
    pub bounds: BoundSeries,
    pub empirical: LeakageSeries,
    pub n_samples: usize,
    pub horizon: usize,
    pub seed_hash: String,
}

/// Per-iteration comparison: empirical joint recovery gain, the expectation
/// bound, and the group-scaled per-player budget, all on the same deployment.
pub fn run_bounds_vs_empirical(cfg: &Config) -> Result<BoundsVsEmpiricalSummary> {
    let game = cfg.build_game()?;
    let prior = cfg.build_prior()?;
    let mech = cfg.build_mechanism()?;
    let horizon = cfg.run.horizon;

    let sampler_cfg = ObservationSampler {
        n_runs: cfg.bounds.n_runs,
        include_probes: cfg.bounds.include_probes,
        seed: cfg.bounds.seed,
    };
    let obs = sample_observations(&game, &prior, &mech, horizon, &sampler_cfg)?;
    let bounds = bound_series(&game, &prior, &obs, &mech)?;

    let sampler = cfg.build_sampler()?;
    let empirical = empirical_leakage(&game, sampler.as_ref(), &mech, horizon, &cfg.ensemble_config())?;

    Ok(BoundsVsEmpiricalSummary {
        bounds,
        n_samples: cfg.attack.n_samples,
        horizon,
        seed_hash: seed_hash(cfg.attack.seed ^ cfg.bounds.seed.rotate_left(32)),
        empirical,
    })
}

pub fn write_bounds_vs_empirical(
    out: &Path,
    summary: &BoundsVsEmpiricalSummary,
    format: ArtifactFormat,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    if format.wants_json() {
        write_json(&out.join("figure2.json"), summary)?;
        files.push("figure2.json".to_string());
    }
    if format.wants_csv() {
        let mut table = Table::new(&[
            "iteration",
            "pml_bound",
            "dp_group_bound",
            "empirical_leakage",
            "n_samples",
            "seed_hash",
        ]);
        for k in 0..=summary.horizon {
            table.push_row(vec![
                k.to_string(),
                fmt_f64(summary.bounds.expectation[k]),
                fmt_f64(summary.bounds.group_adjacent[k]),
                fmt_f64(summary.empirical.log_mean_gain[k]),
                summary.n_samples.to_string(),
                summary.seed_hash.clone(),
            ])?;
        }
        write_csv(&out.join("figure2.csv"), &table)?;
        files.push("figure2.csv".to_string());
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSweepRow {
    pub n_players: usize,
    /// Per-player budget the deployment actually realises on the probe
    /// family; constant across the sweep because the game decouples.
    pub dp_group_bound: f64,
    /// Log-scale closed-form lower envelope of individual leakage.
    pub pml_lower: f64,
    /// Log-scale upper envelope assuming only the per-player budget.
    pub pml_upper_dp_based: f64,
    /// Log-scale prior ceiling for the leader.
    pub eps_max: f64,
    /// Final log mean recovery gain on the leader's parameter block.
    pub empirical_individual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSweepSummary {
    pub rows: Vec<CorrelationSweepRow>,
    pub alpha: f64,
    pub beta: f64,
    pub horizon: usize,
    pub n_samples: usize,
    pub seed_hash: String,
}

/// The deterministic per-player swap budget of the deployment, measured on
/// the equal-broadcast probe by replaying the two bundles in the leader's
/// seat and summing the discounted estimate gaps.
pub fn probe_swap_budget(
    game: &AggregativeGame,
    f0: &PlayerCost,
    f1: &PlayerCost,
    mech: &Mechanism,
    horizon: usize,
) -> Result<f64> {
    let n = game.n_players();
    let probe = equal_observation_probe(game, f0, f1, mech, horizon, 0)?;
    let all0 = CostProfile::new("swap-f0", vec![f0.clone(); n]);
    let all1 = CostProfile::new("swap-f1", vec![f1.clone(); n]);
    let (_, v0) = mech.replay(game, &all0, &probe)?;
    let (_, v1) = mech.replay(game, &all1, &probe)?;
    let mut total = 0.0;
    for k in 0..probe.len() {
        let scale = mech.noise.scale(k);
        if scale <= 0.0 {
            bail!("swap budget needs positive noise in round {k}");
        }
        let gap = (&v0[k][0] - &v1[k][0]).abs().sum();
        total += gap / scale;
    }
    Ok(total)
}

/// Individual-leakage envelopes and empirical recovery across player counts
/// on the correlated prior. Only `n_players` varies; bundles, schedules and
/// seeds stay fixed.
pub fn run_correlation_sweep(cfg: &Config, players: &[usize]) -> Result<CorrelationSweepSummary> {
    if cfg.prior.kind != PriorKind::Correlated {
        bail!("the correlation sweep needs a correlated prior");
    }
    let alpha = cfg.prior.alpha;
    let beta = cfg.prior.beta;
    let horizon = cfg.run.horizon;
    let eps_max = -alpha.min(1.0 - alpha).ln();

    let rows: Vec<CorrelationSweepRow> = players
        .par_iter()
        .map(|&n| -> Result<CorrelationSweepRow> {
            let mut local = cfg.clone();
            local.game.n_players = n;
            let game = local.build_game()?;
            let mech = local.build_mechanism()?;
            let (f0, f1) = local.binary_pair()?;
            let eps_o = probe_swap_budget(&game, &f0, &f1, &mech, horizon)
                .with_context(|| format!("probe budget at {n} players"))?;
            let lower = correlated_lower_bound(alpha, beta, eps_o, n)?.ln();
            let upper = correlated_upper_bound(alpha, eps_o, n)?.ln();
            let sampler = local.build_sampler()?;
            let series =
                empirical_leakage(&game, sampler.as_ref(), &mech, horizon, &local.ensemble_config())
                    .with_context(|| format!("attack ensemble at {n} players"))?;
            Ok(CorrelationSweepRow {
                n_players: n,
                dp_group_bound: eps_o,
                pml_lower: lower,
                pml_upper_dp_based: upper,
                eps_max,
                empirical_individual: *series
                    .log_mean_gain_first
                    .last()
                    .expect("nonempty series"),
            })
        })
        .collect::<Result<_>>()?;

    Ok(CorrelationSweepSummary {
        rows,
        alpha,
        beta,
        horizon,
        n_samples: cfg.attack.n_samples,
        seed_hash: seed_hash(cfg.attack.seed),
    })
}

pub fn write_correlation_sweep(
    out: &Path,
    summary: &CorrelationSweepSummary,
    format: ArtifactFormat,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    if format.wants_json() {
        write_json(&out.join("figure3.json"), summary)?;
        files.push("figure3.json".to_string());
    }
    if format.wants_csv() {
        let mut table = Table::new(&[
            "n_players",
            "pml_lower",
            "pml_upper_dp_based",
            "dp_group_bound",
            "eps_max",
            "empirical_individual",
        ]);
        for row in &summary.rows {
            table.push_row(vec![
                row.n_players.to_string(),
                fmt_f64(row.pml_lower),
                fmt_f64(row.pml_upper_dp_based),
                fmt_f64(row.dp_group_bound),
                fmt_f64(row.eps_max),
                fmt_f64(row.empirical_individual),
            ])?;
        }
        write_csv(&out.join("figure3.csv"), &table)?;
        files.push("figure3.csv".to_string());
    }
    Ok(files)
}

/// Which artifact kinds a command should emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactFormat {
    Csv,
    Json,
    Both,
}

impl ArtifactFormat {
    pub fn wants_csv(self) -> bool {
        matches!(self, ArtifactFormat::Csv | ArtifactFormat::Both)
    }

    pub fn wants_json(self) -> bool {
        matches!(self, ArtifactFormat::Json | ArtifactFormat::Both)
    }
}
