//! Noisy equilibrium seeking and its deterministic replay.
//!
//! Each round `k` a player holds a strategy `x_i^k` and an aggregate estimate
//! `v_i^k`, broadcasts the Laplace-masked estimate `o_i^k = v_i^k + noise`,
//! and then moves `x` along its pseudo-gradient and refreshes `v` from the
//! received broadcasts. The broadcasts are the only thing an observer sees;
//! everything else is reconstructible from them, which is what [`replay`]
//! and [`log_density`] exploit.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{aggregate, serde_mat, AggregativeGame, CostProfile, Strategy, StrategyProfile};
use crate::numeric::{laplace_log_density, sample_unit_laplace};

/// Noise magnitude `M^k` per round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSchedule {
    /// `M^k = p1 + p2 * k^p3` — grows without bound when `p2 > 0`.
    Polynomial { p1: f64, p2: f64, p3: f64 },
    /// `M^k = d * qbar^k` — shrinks geometrically.
    Geometric { d: f64, qbar: f64 },
    /// No noise; broadcasts equal the true aggregate estimates.
    Zero,
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSchedule::Polynomial { p1, p2, p3 } => {
                if !(p1 > 0.0) || !p1.is_finite() {
                    return Err(Error::InvalidSchedule(format!(
                        "polynomial noise needs p1 > 0, got {p1}"
                    )));
                }
                if !(p2 >= 0.0) || !p2.is_finite() || !(p3 >= 0.0) || !p3.is_finite() {
                    return Err(Error::InvalidSchedule(
                        "polynomial noise needs finite p2 >= 0 and p3 >= 0".into(),
                    ));
                }
            }
            NoiseSchedule::Geometric { d, qbar } => {
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::InvalidSchedule(format!(
                        "geometric noise needs d > 0, got {d}"
                    )));
                }
                if !(qbar > 0.0 && qbar < 1.0) {
                    return Err(Error::InvalidSchedule(format!(
                        "geometric noise needs 0 < qbar < 1, got {qbar}"
                    )));
                }
            }
            NoiseSchedule::Zero => {}
        }
        Ok(())
    }

    /// Scale `M^k`; zero means "no noise this round".
    pub fn scale(&self, k: usize) -> f64 {
        match *self {
            NoiseSchedule::Polynomial { p1, p2, p3 } => p1 + p2 * (k as f64).powf(p3),
            NoiseSchedule::Geometric { d, qbar } => d * qbar.powi(k as i32),
            NoiseSchedule::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, NoiseSchedule::Zero)
    }
}

/// One decaying scalar sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleKind {
    /// `q1 / (q2 + q3 * k)`.
    Harmonic { q1: f64, q2: f64, q3: f64 },
    /// `c * q^k`.
    Geometric { c: f64, q: f64 },
}

impl ScheduleKind {
    pub fn value(&self, k: usize) -> f64 {
        match *self {
            ScheduleKind::Harmonic { q1, q2, q3 } => q1 / (q2 + q3 * k as f64),
            ScheduleKind::Geometric { c, q } => c * q.powi(k as i32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScheduleKind::Harmonic { q1, q2, q3 } => {
                if !(q1 > 0.0) || !(q2 > 0.0) || !(q3 >= 0.0) {
                    return Err(Error::InvalidSchedule(
                        "harmonic schedule needs q1 > 0, q2 > 0, q3 >= 0".into(),
                    ));
                }
                if !q1.is_finite() || !q2.is_finite() || !q3.is_finite() {
                    return Err(Error::InvalidSchedule("harmonic schedule has non-finite parameters".into()));
                }
            }
            ScheduleKind::Geometric { c, q } => {
                if !(c > 0.0) || !c.is_finite() || !(q > 0.0 && q < 1.0) {
                    return Err(Error::InvalidSchedule(
                        "geometric schedule needs c > 0 and 0 < q < 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Step sizes for the strategy update, plus an optional separate sequence
/// for consensus mixing. When `mixing` is absent the step sequence is reused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub step: ScheduleKind,
    #[serde(default)]
    pub mixing: Option<ScheduleKind>,
}

impl StepSchedule {
    pub fn harmonic(q1: f64, q2: f64, q3: f64) -> Self {
        StepSchedule {
            step: ScheduleKind::Harmonic { q1, q2, q3 },
            mixing: None,
        }
    }

    pub fn geometric(c: f64, q: f64) -> Self {
        StepSchedule {
            step: ScheduleKind::Geometric { c, q },
            mixing: None,
        }
    }

    pub fn with_mixing(mut self, mixing: ScheduleKind) -> Self {
        self.mixing = Some(mixing);
        self
    }

    /// Strategy step size `lambda^k`.
    pub fn lambda(&self, k: usize) -> f64 {
        self.step.value(k)
    }

    /// Consensus mixing rate `gamma^k`.
    pub fn gamma(&self, k: usize) -> f64 {
        self.mixing.unwrap_or(self.step).value(k)
    }

    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        if let Some(m) = &self.mixing {
            m.validate()?;
        }
        Ok(())
    }
}

/// How `x` and `v` advance from one round to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UpdateRule {
    /// Gradient step on `x`; `v` is rebuilt each round from a weighted mix of
    /// the fresh broadcasts plus the player's own strategy change.
    /// `projected` controls whether the gradient step is projected back onto
    /// the constraint set (off by default so the broadcast dynamics stay
    /// piecewise affine in the costs).
    FullAveraging {
        #[serde(with = "serde_mat")]
        weights: DMatrix<f64>,
        projected: bool,
    },
    /// Projected gradient step on `x`; `v` is corrected incrementally by
    /// weighted broadcast differences, scaled by the mixing rate.
    Consensus {
        #[serde(with = "serde_mat")]
        weights: DMatrix<f64>,
    },
}

impl UpdateRule {
    /// Equal weights `1/N`, unprojected strategy step.
    pub fn full_averaging_uniform(n: usize) -> Self {
        UpdateRule::FullAveraging {
            weights: DMatrix::from_element(n, n, 1.0 / n as f64),
            projected: false,
        }
    }

    /// Equal weights `1/N`, projected strategy step.
    pub fn full_averaging_projected(n: usize) -> Self {
        UpdateRule::FullAveraging {
            weights: DMatrix::from_element(n, n, 1.0 / n as f64),
            projected: true,
        }
    }

    /// Complete-graph consensus with equal weights `1/N`.
    pub fn consensus_uniform(n: usize) -> Self {
        UpdateRule::Consensus {
            weights: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        match self {
            UpdateRule::FullAveraging { weights, .. } | UpdateRule::Consensus { weights } => weights,
        }
    }

    pub fn validate(&self, n_players: usize) -> Result<()> {
        let w = self.weights();
        if w.nrows() != n_players || w.ncols() != n_players {
            return Err(Error::invalid(format!(
                "weight matrix is {}x{}, expected {n_players}x{n_players}",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weight matrix has non-finite entries"));
        }
        if let UpdateRule::FullAveraging { weights, .. } = self {
            for i in 0..n_players {
                let s: f64 = weights.row(i).iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "averaging weights row {i} sums to {s}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything one noisy run produces. All three state sequences have
/// `horizon + 1` entries; entry `k` is the state at the start of round `k`
/// (for `o`, the broadcast made during round `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub profile_id: String,
    pub horizon: usize,
    pub seed: u64,
    pub noise: NoiseSchedule,
    pub steps: StepSchedule,
    pub rule: UpdateRule,
    #[serde(with = "serde_states")]
    pub x: Vec<StrategyProfile>,
    #[serde(with = "serde_states")]
    pub v: Vec<StrategyProfile>,
    #[serde(with = "serde_states")]
    pub o: Vec<StrategyProfile>,
}

/// Serialize `Vec<StrategyProfile>` as `[rounds][players][coords]` arrays.
mod serde_states {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    type States = Vec<Vec<DVector<f64>>>;

    pub fn serialize<S: Serializer>(v: &States, s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<&[f64]>> = v
            .iter()
            .map(|profile| profile.iter().map(|x| x.as_slice()).collect())
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<States, D::Error> {
        let raw = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|profile| profile.into_iter().map(DVector::from_vec).collect())
            .collect())
    }
}

/// Draw one player's noise vector for round `k`.
pub fn sample_noise(
    noise: &NoiseSchedule,
    k: usize,
    dim: usize,
    rng: &mut ChaCha20Rng,
) -> DVector<f64> {
    let m = noise.scale(k);
    if m == 0.0 {
        DVector::zeros(dim)
    } else {
        DVector::from_fn(dim, |_, _| m * sample_unit_laplace(rng))
    }
}

/// Weighted mix of the round's broadcasts for player `i`.
///
/// Equal-weight rows take the arithmetic-mean path (`aggregate`, then a
/// scale that is exactly 1.0 for `1/N` weights), so the engine and any
/// simulator that recomputes the mean from public broadcasts produce
/// bit-identical values.
fn mix_row(weights: &DMatrix<f64>, i: usize, o: &[Strategy]) -> Result<Strategy> {
    let row = weights.row(i);
    let w0 = row[0];
    // A uniform row is the plain mean; route it through `aggregate` so the
    // result is bit-identical to any simulator recomputing the mean itself.
    if w0 == 1.0 / o.len() as f64 && row.iter().all(|w| *w == w0) {
        return aggregate(o);
    }
    let mut acc = DVector::zeros(o[0].len());
    for (j, oj) in o.iter().enumerate() {
        let w = row[j];
        if w != 0.0 {
            acc += oj * w;
        }
    }
    Ok(acc)
}

fn check_finite_profile(states: &[Strategy], iteration: usize, what: &str) -> Result<()> {
    for (i, s) in states.iter().enumerate() {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration,
                context: format!("{what} of player {i}"),
            });
        }
    }
    Ok(())
}

/// Advance `(x, v)` across one round boundary given the round's broadcasts.
/// `k` is the index of the round being left; the new states carry index
/// `k + 1`. Shared by [`run`] and [`replay`] so replays are bit-exact.
pub(crate) fn advance(
    game: &AggregativeGame,
    costs: &CostProfile,
    rule: &UpdateRule,
    steps: &StepSchedule,
    k: usize,
    x: &mut StrategyProfile,
    v: &mut StrategyProfile,
    o_k: &[Strategy],
) -> Result<()> {
    let n = game.n_players();
    let lam = steps.lambda(k);
    match rule {
        UpdateRule::FullAveraging { weights, projected } => {
            let mut x_next = Vec::with_capacity(n);
            for i in 0..n {
                let g = game.pseudo_gradient(&costs.players[i], &x[i], &v[i])?;
                let mut xi = &x[i] - g * lam;
                if *projected {
                    xi = game.constraint(i).project(&xi);
                }
                x_next.push(xi);
            }
            for i in 0..n {
                let mixed = mix_row(weights, i, o_k)?;
                // grouped as mixed + (x' - x); simulators use the same grouping
                let dx = &x_next[i] - &x[i];
                v[i] = mixed + dx;
            }
            *x = x_next;
        }
        UpdateRule::Consensus { weights } => {
            let gam = steps.gamma(k);
            let mut x_next = Vec::with_capacity(n);
            for i in 0..n {
                let g = game.pseudo_gradient(&costs.players[i], &x[i], &v[i])?;
                let stepped = &x[i] - g * lam;
                x_next.push(game.constraint(i).project(&stepped));
            }
            for i in 0..n {
                let mut acc = DVector::zeros(game.dim());
                for j in 0..n {
                    let w = weights[(i, j)];
                    if w != 0.0 && j != i {
                        acc += (&o_k[j] - &o_k[i]) * w;
                    }
                }
                let dx = &x_next[i] - &x[i];
                v[i] = &v[i] + acc * gam + dx;
            }
            *x = x_next;
        }
    }
    check_finite_profile(x, k + 1, "strategy")?;
    check_finite_profile(v, k + 1, "aggregate estimate")?;
    Ok(())
}

fn validate_inputs(
    game: &AggregativeGame,
    costs: &CostProfile,
    rule: &UpdateRule,
    steps: &StepSchedule,
    x0: &[Strategy],
) -> Result<()> {
    game.check_costs(costs)?;
    validate_mechanism_parts(game, rule, steps, x0)
}

fn validate_mechanism_parts(
    game: &AggregativeGame,
    rule: &UpdateRule,
    steps: &StepSchedule,
    x0: &[Strategy],
) -> Result<()> {
    rule.validate(game.n_players())?;
    steps.validate()?;
    game.check_profile_shape(x0)?;
    for (i, xi) in x0.iter().enumerate() {
        if !game.constraint(i).contains(xi, 1e-9) {
            return Err(Error::invalid(format!(
                "initial strategy of player {i} is outside its constraint set"
            )));
        }
    }
    Ok(())
}

/// The publicly known parts of one deployment: update rule, schedules, and
/// the shared starting point. Everything the privacy layer computes is a
/// function of a mechanism, a game, and candidate cost profiles; bundling
/// these four keeps those call sites readable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub rule: UpdateRule,
    pub noise: NoiseSchedule,
    pub steps: StepSchedule,
    #[serde(with = "crate::game::serde_profile")]
    pub x0: StrategyProfile,
}

impl Mechanism {
    pub fn new(
        rule: UpdateRule,
        noise: NoiseSchedule,
        steps: StepSchedule,
        x0: StrategyProfile,
    ) -> Self {
        Mechanism {
            rule,
            noise,
            steps,
            x0,
        }
    }

    pub fn validate(&self, game: &AggregativeGame) -> Result<()> {
        self.noise.validate()?;
        validate_mechanism_parts(game, &self.rule, &self.steps, &self.x0)
    }

    /// Noise scales must be strictly positive on rounds `0..=horizon` for
    /// any density-based quantity to exist.
    pub fn require_positive_noise(&self, horizon: usize) -> Result<()> {
        for k in 0..=horizon {
            if self.noise.scale(k) <= 0.0 {
                return Err(Error::InvalidSchedule(format!(
                    "round {k} has noise scale {}; density-based quantities need > 0",
                    self.noise.scale(k)
                )));
            }
        }
        Ok(())
    }

    pub fn run(
        &self,
        game: &AggregativeGame,
        costs: &CostProfile,
        horizon: usize,
        seed: u64,
    ) -> Result<Trajectory> {
        run(
            game, costs, &self.rule, &self.noise, &self.steps, horizon, &self.x0, seed,
        )
    }

    pub fn replay(
        &self,
        game: &AggregativeGame,
        costs: &CostProfile,
        o: &[StrategyProfile],
    ) -> Result<(Vec<StrategyProfile>, Vec<StrategyProfile>)> {
        replay(game, costs, o, &self.rule, &self.steps, &self.x0)
    }

    pub fn log_density(
        &self,
        game: &AggregativeGame,
        costs: &CostProfile,
        o: &[StrategyProfile],
    ) -> Result<f64> {
        log_density(
            game, costs, o, &self.rule, &self.noise, &self.steps, &self.x0,
        )
    }
}

/// Run the noisy dynamics for `horizon` rounds from `x0` (which also seeds
/// the aggregate estimates). The same seed always reproduces the same
/// trajectory bit for bit.
pub fn run(
    game: &AggregativeGame,
    costs: &CostProfile,
    rule: &UpdateRule,
    noise: &NoiseSchedule,
    steps: &StepSchedule,
    horizon: usize,
    x0: &[Strategy],
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    validate_inputs(game, costs, rule, steps, x0)?;
    noise.validate()?;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dim = game.dim();
    let n = game.n_players();

    let mut x: StrategyProfile = x0.to_vec();
    let mut v: StrategyProfile = x0.to_vec();
    let mut xs = vec![x.clone()];
    let mut vs = vec![v.clone()];
    let mut os: Vec<StrategyProfile> = Vec::with_capacity(horizon + 1);

    for k in 0..=horizon {
        let m = noise.scale(k);
        let o_k: StrategyProfile = if m == 0.0 {
            v.clone()
        } else {
            (0..n)
                .map(|i| &v[i] + sample_noise(noise, k, dim, &mut rng))
                .collect()
        };
        check_finite_profile(&o_k, k, "broadcast")?;
        os.push(o_k);
        if k < horizon {
            let o_ref = os.last().expect("just pushed");
            let o_owned = o_ref.clone();
            advance(game, costs, rule, steps, k, &mut x, &mut v, &o_owned)?;
            xs.push(x.clone());
            vs.push(v.clone());
        }
    }

    Ok(Trajectory {
        profile_id: costs.id.clone(),
        horizon,
        seed,
        noise: *noise,
        steps: *steps,
        rule: rule.clone(),
        x: xs,
        v: vs,
        o: os,
    })
}

/// Reconstruct the full state sequences a cost profile would have produced
/// given the observed broadcasts. Returns `(x, v)`, each with as many rounds
/// as `o`. Feeding back a trajectory's own broadcasts reproduces its `x` and
/// `v` exactly.
pub fn replay(
    game: &AggregativeGame,
    costs: &CostProfile,
    o: &[StrategyProfile],
    rule: &UpdateRule,
    steps: &StepSchedule,
    x0: &[Strategy],
) -> Result<(Vec<StrategyProfile>, Vec<StrategyProfile>)> {
    if o.is_empty() {
        return Err(Error::invalid("replay needs at least one round of broadcasts"));
    }
    validate_inputs(game, costs, rule, steps, x0)?;
    for (k, o_k) in o.iter().enumerate() {
        game.check_profile_shape(o_k)
            .map_err(|_| Error::invalid(format!("broadcast {k} does not match the game shape")))?;
    }

    let horizon = o.len() - 1;
    let mut x: StrategyProfile = x0.to_vec();
    let mut v: StrategyProfile = x0.to_vec();
    let mut xs = vec![x.clone()];
    let mut vs = vec![v.clone()];
    for k in 0..horizon {
        advance(game, costs, rule, steps, k, &mut x, &mut v, &o[k])?;
        xs.push(x.clone());
        vs.push(v.clone());
    }
    Ok((xs, vs))
}

/// Log-density of the broadcasts under a candidate cost profile.
///
/// The replayed aggregate estimates are the Laplace centers, so the density
/// factorises over rounds, players, and coordinates. Requires a strictly
/// positive noise scale at every observed round.
pub fn log_density(
    game: &AggregativeGame,
    costs: &CostProfile,
    o: &[StrategyProfile],
    rule: &UpdateRule,
    noise: &NoiseSchedule,
    steps: &StepSchedule,
    x0: &[Strategy],
) -> Result<f64> {
    noise.validate()?;
    for k in 0..o.len() {
        if noise.scale(k) <= 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "log-density needs positive noise at every round, but round {k} has scale {}",
                noise.scale(k)
            )));
        }
    }
    let (_, vs) = replay(game, costs, o, rule, steps, x0)?;
    let mut total = 0.0;
    for (k, o_k) in o.iter().enumerate() {
        let m = noise.scale(k);
        for (i, oi) in o_k.iter().enumerate() {
            let vi = &vs[k][i];
            for c in 0..oi.len() {
                total += laplace_log_density(oi[c], vi[c], m);
            }
        }
    }
    Ok(total)
}
