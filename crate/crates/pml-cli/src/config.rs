//! TOML configuration for the experiment driver.
//!
//! A config file fixes a game, a prior over cost profiles, the schedules of
//! the noisy dynamics, and the knobs of the accounting and attack commands.
//! Every builder below is deterministic in the config contents, so a config
//! file plus the recorded seeds reproduces any artifact bit for bit.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use pml_core::adversary::EnsembleConfig;
use pml_core::engine::{Mechanism, NoiseSchedule, ScheduleKind, StepSchedule, UpdateRule};
use pml_core::game::{
    AggregativeGame, ConstraintSet, CostFamily, CostProfile, PlayerCost, Strategy,
};
use pml_core::privacy::prior::{
    independent_binary_prior, CorrelatedBinarySpec, DiscretePrior, ProfileSampler,
};
use pml_core::privacy::report::ReportConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub game: GameSection,
    pub prior: PriorSection,
    pub schedules: SchedulesSection,
    pub run: RunSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Disease,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    UnitBox,
    Simplex,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub family: FamilyKind,
    pub n_players: usize,
    pub dim: usize,
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintKind,
    /// Quadratic family only: diagonal of the per-player curvature matrix.
    #[serde(default = "one")]
    pub quad_diag: f64,
    /// Quadratic family only: linear-term magnitude; player `i` gets
    /// `quad_r * (i + 1) / n_players` in every coordinate.
    #[serde(default = "one")]
    pub quad_r: f64,
    /// Quadratic family only: coupling with the aggregate.
    #[serde(default = "tenth")]
    pub quad_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    /// Leader-copy prior: player 0 holds bundle `f0` with probability
    /// `alpha`; with probability `beta` everyone copies the leader.
    Correlated,
    /// Product prior: every player independently holds `f0` with
    /// probability `p0`.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub kind: PriorKind,
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default = "half")]
    pub p0: f64,
    pub pair: PairSection,
}

/// How the two candidate cost bundles are generated.
///
/// Both bundles share a centre of magnitude `scale` and an interaction
/// matrix of magnitude `b_scale`; their linear terms sit `separation` apart
/// from the centre along a unit direction. In one dimension the direction
/// and centre are the literal values `1.0` and `scale`, so e.g. `scale = 0`
/// gives the exact pair `a = +/- separation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "one")]
    pub separation: f64,
    #[serde(default)]
    pub b_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulesSection {
    pub noise: NoiseSchedule,
    pub steps: ScheduleKind,
    #[serde(default)]
    pub mixing: Option<ScheduleKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    FullAveraging,
    FullAveragingProjected,
    Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: usize,
    #[serde(default = "default_rule")]
    pub rule: RuleKind,
    /// Initial per-coordinate fill for every player; defaults to a point
    /// inside the constraint set (midpoint of the box, uniform weights on
    /// the simplex, the origin otherwise).
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default = "one_u64")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub nu: f64,
    pub inner_epochs: usize,
    pub include_chain: bool,
    pub max_retries: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Mirror the engine's projected strategy step; set this whenever the
    /// run rule projects, or the adversary simulates the wrong dynamics.
    #[serde(default)]
    pub projected: bool,
    /// Fit the interaction matrices. Turn off for decoupled deployments
    /// (zero interaction), where fitting them only adds variance and can
    /// destabilise unconstrained simulations.
    #[serde(default = "yes")]
    pub fit_interaction: bool,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            nu: 0.05,
            inner_epochs: 10,
            include_chain: true,
            max_retries: 5,
            n_samples: 20,
            seed: 101,
            projected: false,
            fit_interaction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub n_runs: usize,
    pub include_probes: bool,
    pub seed: u64,
    #[serde(default)]
    pub individual_players: Option<Vec<usize>>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        BoundsSection {
            n_runs: 4,
            include_probes: true,
            seed: 202,
            individual_players: None,
        }
    }
}

fn default_constraint() -> ConstraintKind {
    ConstraintKind::UnitBox
}

fn default_rule() -> RuleKind {
    RuleKind::FullAveraging
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn tenth() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

fn one_u64() -> u64 {
    1
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Config::parse_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).context("parsing TOML")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks that the serde layer cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.game.n_players < 2 {
            bail!("game.n_players must be at least 2");
        }
        if self.game.dim == 0 {
            bail!("game.dim must be at least 1");
        }
        if self.run.horizon == 0 {
            bail!("run.horizon must be at least 1");
        }
        self.schedules.noise.validate().context("schedules.noise")?;
        self.schedules.steps.validate().context("schedules.steps")?;
        if let Some(m) = &self.schedules.mixing {
            m.validate().context("schedules.mixing")?;
        }
        match self.prior.kind {
            PriorKind::Correlated => {
                if !(self.prior.alpha > 0.0 && self.prior.alpha < 1.0) {
                    bail!("prior.alpha must lie strictly between 0 and 1");
                }
                if !(self.prior.beta > 0.0 && self.prior.beta <= 1.0) {
                    bail!("prior.beta must lie in (0, 1]");
                }
            }
            PriorKind::Independent => {
                if !(self.prior.p0 > 0.0 && self.prior.p0 < 1.0) {
                    bail!("prior.p0 must lie strictly between 0 and 1");
                }
            }
        }
        if self.game.family == FamilyKind::Quadratic && !(self.game.quad_diag > 0.0) {
            bail!("game.quad_diag must be positive");
        }
        if !(self.prior.pair.separation > 0.0) {
            bail!("prior.pair.separation must be positive");
        }
        if self.prior.pair.scale < 0.0 || self.prior.pair.b_scale < 0.0 {
            bail!("prior.pair.scale and prior.pair.b_scale must be nonnegative");
        }
        if let Some(x0) = self.run.x0 {
            if !x0.is_finite() {
                bail!("run.x0 must be finite");
            }
        }
        if self.attack.projected && self.game.constraint == ConstraintKind::Simplex {
            bail!("attack.projected supports unit-box or unbounded constraints only");
        }
        Ok(())
    }

    fn constraint_set(&self) -> ConstraintSet {
        match self.game.constraint {
            ConstraintKind::UnitBox => ConstraintSet::unit_box(self.game.dim),
            ConstraintKind::Simplex => ConstraintSet::Simplex { dim: self.game.dim },
            ConstraintKind::Unbounded => ConstraintSet::Unbounded { dim: self.game.dim },
        }
    }

    pub fn build_game(&self) -> Result<AggregativeGame> {
        let family = match self.game.family {
            FamilyKind::Disease => CostFamily::Disease,
            FamilyKind::Quadratic => CostFamily::QuadraticTest,
        };
        Ok(AggregativeGame::uniform(
            family,
            self.game.n_players,
            self.constraint_set(),
        )?)
    }

    /// Default initial fill per coordinate, feasible for the constraint.
    pub fn x0_fill(&self) -> f64 {
        if let Some(x0) = self.run.x0 {
            return x0;
        }
        match self.game.constraint {
            ConstraintKind::UnitBox => 0.5,
            ConstraintKind::Simplex => 1.0 / self.game.dim as f64,
            ConstraintKind::Unbounded => 0.0,
        }
    }

    pub fn x0_profile(&self) -> Vec<Strategy> {
        let fill = self.x0_fill();
        (0..self.game.n_players)
            .map(|_| DVector::from_element(self.game.dim, fill))
            .collect()
    }

    pub fn build_mechanism(&self) -> Result<Mechanism> {
        let n = self.game.n_players;
        let rule = match self.run.rule {
            RuleKind::FullAveraging => UpdateRule::full_averaging_uniform(n),
            RuleKind::FullAveragingProjected => UpdateRule::full_averaging_projected(n),
            RuleKind::Consensus => UpdateRule::consensus_uniform(n),
        };
        let mut steps = StepSchedule {
            step: self.schedules.steps,
            mixing: None,
        };
        if let Some(m) = self.schedules.mixing {
            steps.mixing = Some(m);
        }
        Ok(Mechanism::new(
            rule,
            self.schedules.noise,
            steps,
            self.x0_profile(),
        ))
    }

    /// The two candidate bundles of the binary prior.
    pub fn binary_pair(&self) -> Result<(PlayerCost, PlayerCost)> {
        if self.game.family != FamilyKind::Disease {
            bail!("binary cost priors are defined for the disease family only");
        }
        let dim = self.game.dim;
        let pair = &self.prior.pair;
        let (centre, direction) = if dim == 1 {
            (
                DVector::from_element(1, pair.scale),
                DVector::from_element(1, 1.0),
            )
        } else {
            let mut rng = ChaCha20Rng::seed_from_u64(pair.seed);
            let direction = random_unit(&mut rng, dim);
            let centre = random_unit(&mut rng, dim) * pair.scale;
            (centre, direction)
        };
        let a0 = &centre + &direction * pair.separation;
        let a1 = &centre - &direction * pair.separation;
        let b = interaction_matrix(dim, pair.b_scale);
        Ok((
            PlayerCost::disease(a0, b.clone())?,
            PlayerCost::disease(a1, b)?,
        ))
    }

    /// The leader-copy spec, when the prior is correlated.
    pub fn correlated_spec(&self) -> Result<Option<CorrelatedBinarySpec>> {
        if self.prior.kind != PriorKind::Correlated {
            return Ok(None);
        }
        let (f0, f1) = self.binary_pair()?;
        Ok(Some(CorrelatedBinarySpec::new(
            f0,
            f1,
            self.prior.alpha,
            self.prior.beta,
            self.game.n_players,
        )?))
    }

    /// The prior with its support enumerated; fails for player counts past
    /// the enumeration cap.
    pub fn build_prior(&self) -> Result<DiscretePrior> {
        match self.prior.kind {
            PriorKind::Correlated => {
                let spec = self
                    .correlated_spec()?
                    .expect("correlated kind always yields a spec");
                Ok(spec.to_prior()?)
            }
            PriorKind::Independent => {
                let (f0, f1) = self.binary_pair()?;
                Ok(independent_binary_prior(
                    &f0,
                    &f1,
                    self.prior.p0,
                    self.game.n_players,
                )?)
            }
        }
    }

    /// A profile sampler that never enumerates when the prior has a
    /// two-stage sampling form.
    pub fn build_sampler(&self) -> Result<Box<dyn ProfileSampler + Send + Sync>> {
        match self.prior.kind {
            PriorKind::Correlated => {
                let spec = self
                    .correlated_spec()?
                    .expect("correlated kind always yields a spec");
                Ok(Box::new(spec))
            }
            PriorKind::Independent => Ok(Box::new(self.build_prior()?)),
        }
    }

    /// The fixed quadratic profile used when the family is quadratic.
    pub fn quadratic_profile(&self) -> Result<CostProfile> {
        if self.game.family != FamilyKind::Quadratic {
            bail!("quadratic profiles are defined for the quadratic family only");
        }
        let n = self.game.n_players;
        let dim = self.game.dim;
        let q = DMatrix::identity(dim, dim) * self.game.quad_diag;
        let players = (0..n)
            .map(|i| {
                let r_i = self.game.quad_r * (i + 1) as f64 / n as f64;
                PlayerCost::quadratic(q.clone(), DVector::from_element(dim, r_i), self.game.quad_s)
            })
            .collect::<pml_core::Result<Vec<_>>>()?;
        Ok(CostProfile::new("quadratic", players))
    }

    pub fn report_config(&self) -> ReportConfig {
        ReportConfig {
            n_runs: self.bounds.n_runs,
            include_probes: self.bounds.include_probes,
            seed: self.bounds.seed,
            individual_players: self.bounds.individual_players.clone(),
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_samples: self.attack.n_samples,
            seed: self.attack.seed,
            nu: self.attack.nu,
            inner_epochs: self.attack.inner_epochs,
            include_chain: self.attack.include_chain,
            max_retries: self.attack.max_retries,
            projected: self.attack.projected,
            fit_interaction: self.attack.fit_interaction,
        }
    }
}

fn random_unit(rng: &mut ChaCha20Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

/// Symmetric positive interaction matrix of the requested magnitude: a
/// diagonal core plus a uniform rank-one part so coordinates couple.
fn interaction_matrix(dim: usize, b_scale: f64) -> DMatrix<f64> {
    if b_scale == 0.0 {
        return DMatrix::zeros(dim, dim);
    }
    let mut b = DMatrix::from_element(dim, dim, 0.5 * b_scale / dim as f64);
    for i in 0..dim {
        b[(i, i)] += 0.5 * b_scale;
    }
    b
}
