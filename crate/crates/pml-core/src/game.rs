//! Aggregative games: cost families, constraint sets, and pseudo-gradients.
//!
//! A game couples `N` players through the aggregate `delta(x) = mean_i x_i`.
//! Player `i`'s cost depends only on its own strategy and the aggregate, and
//! the pseudo-gradient is the derivative of that cost in `x_i`, including the
//! term that flows through the aggregate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One player's strategy vector.
pub type Strategy = DVector<f64>;
/// A strategy per player, in player order.
pub type StrategyProfile = Vec<Strategy>;

/// Serialize a vector as a plain JSON array.
pub mod serde_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Serialize a matrix as row-major nested JSON arrays.
pub mod serde_mat {
    use nalgebra::DMatrix;
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().cloned().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(de::Error::custom("matrix rows have unequal lengths"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
    }
}

/// Serialize a strategy profile as `[players][coords]` arrays.
pub mod serde_profile {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec<DVector<f64>>, s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let raw = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(DVector::from_vec).collect())
    }
}

/// The aggregate `delta(x) = (1/N) * sum_i x_i`.
///
/// This is the one place the mean is computed (sum first, then a single
/// division), and every consumer — the engine's equal-weight mixing step,
/// the adversary's simulated updates — goes through it, so simulated and
/// real updates agree bit for bit.
pub fn aggregate(xs: &[Strategy]) -> Result<Strategy> {
    let first = xs
        .first()
        .ok_or_else(|| Error::invalid("aggregate of an empty profile"))?;
    let dim = first.len();
    let mut s = DVector::zeros(dim);
    for (i, x) in xs.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::invalid(format!(
                "player {i} has dimension {} but player 0 has {dim}",
                x.len()
            )));
        }
        s += x;
    }
    Ok(s / xs.len() as f64)
}

/// Which cost family a game uses. All players of a game share one family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostFamily {
    /// Vaccination-style costs, linear in own strategy and bilinear in the
    /// aggregate: `a' x_i + delta' b (1 - x_i)`.
    Disease,
    /// Strongly convex quadratic costs used for convergence checks:
    /// `0.5 x_i' q x_i + r' x_i + s * delta' x_i`.
    QuadraticTest,
}

/// One player's private cost parameters.
///
/// Equality is exact equality of all parameters; the privacy layer relies on
/// that when grouping profiles by a player's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlayerCost {
    Disease {
        #[serde(with = "serde_vec")]
        a: DVector<f64>,
        #[serde(with = "serde_mat")]
        b: DMatrix<f64>,
    },
    Quadratic {
        #[serde(with = "serde_mat")]
        q: DMatrix<f64>,
        #[serde(with = "serde_vec")]
        r: DVector<f64>,
        s: f64,
    },
}

impl PlayerCost {
    /// Disease-family cost `a' x_i + delta' b (1 - x_i)`; `b` must be
    /// `dim x dim` and everything finite.
    pub fn disease(a: DVector<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::invalid("disease cost with empty a"));
        }
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::invalid(format!(
                "disease cost: b is {}x{}, expected {n}x{n}",
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("disease cost has non-finite entries"));
        }
        Ok(PlayerCost::Disease { a, b })
    }

    /// Quadratic test cost; `q` must be symmetric positive definite.
    pub fn quadratic(q: DMatrix<f64>, r: DVector<f64>, s: f64) -> Result<Self> {
        let n = r.len();
        if n == 0 {
            return Err(Error::invalid("quadratic cost with empty r"));
        }
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::invalid(format!(
                "quadratic cost: q is {}x{}, expected {n}x{n}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.iter().chain(r.iter()).any(|v| !v.is_finite()) || !s.is_finite() {
            return Err(Error::invalid("quadratic cost has non-finite entries"));
        }
        let asym = (&q - q.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(Error::invalid("quadratic cost: q is not symmetric"));
        }
        if q.clone().cholesky().is_none() {
            return Err(Error::invalid(
                "quadratic cost: q is not positive definite",
            ));
        }
        Ok(PlayerCost::Quadratic { q, r, s })
    }

    pub fn dim(&self) -> usize {
        match self {
            PlayerCost::Disease { a, .. } => a.len(),
            PlayerCost::Quadratic { r, .. } => r.len(),
        }
    }

    pub fn family(&self) -> CostFamily {
        match self {
            PlayerCost::Disease { .. } => CostFamily::Disease,
            PlayerCost::Quadratic { .. } => CostFamily::QuadraticTest,
        }
    }
}

/// A named assignment of one cost to every player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub id: String,
    pub players: Vec<PlayerCost>,
}

impl CostProfile {
    pub fn new(id: impl Into<String>, players: Vec<PlayerCost>) -> Self {
        CostProfile {
            id: id.into(),
            players,
        }
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }
}

/// Per-player feasible set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintSet {
    /// All of R^dim; projection is the identity.
    Unbounded { dim: usize },
    /// Axis-aligned box `[lower, upper]`.
    Box {
        #[serde(with = "serde_vec")]
        lower: DVector<f64>,
        #[serde(with = "serde_vec")]
        upper: DVector<f64>,
    },
    /// Probability simplex `{ y >= 0, sum y = 1 }`.
    Simplex { dim: usize },
}

impl ConstraintSet {
    pub fn unit_box(dim: usize) -> Self {
        ConstraintSet::Box {
            lower: DVector::zeros(dim),
            upper: DVector::from_element(dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Unbounded { dim } | ConstraintSet::Simplex { dim } => *dim,
            ConstraintSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::invalid("constraint set with dimension 0"));
        }
        if let ConstraintSet::Box { lower, upper } = self {
            if lower.len() != upper.len() {
                return Err(Error::invalid("box bounds have different lengths"));
            }
            if lower
                .iter()
                .zip(upper.iter())
                .any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u)
            {
                return Err(Error::invalid("box bounds must be finite with lower <= upper"));
            }
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    ///
    /// The simplex branch starts with a feasibility check and returns feasible
    /// points untouched; its outputs always pass that same check, which makes
    /// projection bitwise idempotent even though the threshold computation
    /// visits coordinates in sorted order.
    pub fn project(&self, y: &Strategy) -> Strategy {
        match self {
            ConstraintSet::Unbounded { .. } => y.clone(),
            ConstraintSet::Box { lower, upper } => {
                let mut p = y.clone();
                for i in 0..p.len() {
                    p[i] = p[i].max(lower[i]).min(upper[i]);
                }
                p
            }
            ConstraintSet::Simplex { .. } => project_simplex(y),
        }
    }

    /// Membership test with an absolute tolerance per defining inequality.
    pub fn contains(&self, y: &Strategy, tol: f64) -> bool {
        if y.len() != self.dim() {
            return false;
        }
        match self {
            ConstraintSet::Unbounded { .. } => y.iter().all(|v| v.is_finite()),
            ConstraintSet::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            ConstraintSet::Simplex { .. } => {
                y.iter().all(|v| *v >= -tol) && (y.sum() - 1.0).abs() <= tol
            }
        }
    }

    /// Draw a point of the set: uniform for boxes, a flat Dirichlet for the
    /// simplex, standard normal coordinates for unbounded sets.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Strategy {
        match self {
            ConstraintSet::Unbounded { dim } => {
                DVector::from_fn(*dim, |_, _| rng.sample(StandardNormal))
            }
            ConstraintSet::Box { lower, upper } => DVector::from_fn(lower.len(), |i, _| {
                if lower[i] == upper[i] {
                    lower[i]
                } else {
                    rng.gen_range(lower[i]..upper[i])
                }
            }),
            ConstraintSet::Simplex { dim } => {
                // exponential spacings normalized to sum one
                let e = DVector::from_fn(*dim, |_, _| {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    -u.ln()
                });
                let s = e.sum();
                project_simplex(&(e / s))
            }
        }
    }
}

/// What `project_simplex` guarantees of its outputs: nonnegative entries
/// whose index-order sum lands within `dim` ulps of 1.0. The residue push
/// below leaves one rounding per re-summed addition, so exact equality is
/// not achievable in general; this is the tightest honest predicate.
fn simplex_member(y: &Strategy) -> bool {
    let slack = y.len() as f64 * f64::EPSILON;
    y.iter().all(|v| *v >= 0.0) && (y.sum() - 1.0).abs() <= slack
}

/// Sorted-threshold projection onto the probability simplex.
fn project_simplex(y: &Strategy) -> Strategy {
    // Already feasible? Return unchanged. Every output of this function
    // satisfies `simplex_member`, so double projection is a bitwise no-op.
    if simplex_member(y) {
        return y.clone();
    }
    let mut u: Vec<f64> = y.iter().cloned().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut p = y.map(|v| (v - theta).max(0.0));
    // Push the rounding residue onto the largest coordinate; the corrected
    // total picks up at most one fresh rounding per addition when re-summed,
    // which keeps it inside the `simplex_member` slack.
    let residue = 1.0 - p.sum();
    if residue != 0.0 {
        let imax = p.imax();
        p[imax] += residue;
        if p[imax] < 0.0 {
            p[imax] = 0.0;
        }
    }
    p
}

/// An aggregative game: a cost family plus one constraint set per player.
///
/// All players share the strategy dimension. The cost parameters themselves
/// are *not* part of the game — they are the private data the privacy layer
/// reasons about — so the same game is evaluated against many cost profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregativeGame {
    family: CostFamily,
    constraints: Vec<ConstraintSet>,
    dim: usize,
}

impl AggregativeGame {
    pub fn new(family: CostFamily, constraints: Vec<ConstraintSet>) -> Result<Self> {
        if constraints.len() < 2 {
            return Err(Error::invalid("a game needs at least two players"));
        }
        let dim = constraints[0].dim();
        for (i, c) in constraints.iter().enumerate() {
            c.validate()?;
            if c.dim() != dim {
                return Err(Error::invalid(format!(
                    "constraint {i} has dimension {} but constraint 0 has {dim}",
                    c.dim()
                )));
            }
        }
        Ok(AggregativeGame {
            family,
            constraints,
            dim,
        })
    }

    /// All players share one constraint set.
    pub fn uniform(family: CostFamily, n_players: usize, constraint: ConstraintSet) -> Result<Self> {
        AggregativeGame::new(family, vec![constraint; n_players])
    }

    pub fn n_players(&self) -> usize {
        self.constraints.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> CostFamily {
        self.family
    }

    pub fn constraint(&self, player: usize) -> &ConstraintSet {
        &self.constraints[player]
    }

    pub fn check_cost(&self, cost: &PlayerCost) -> Result<()> {
        if cost.family() != self.family {
            return Err(Error::invalid(format!(
                "cost family {:?} does not match game family {:?}",
                cost.family(),
                self.family
            )));
        }
        if cost.dim() != self.dim {
            return Err(Error::invalid(format!(
                "cost has dimension {} but game has {}",
                cost.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn check_costs(&self, profile: &CostProfile) -> Result<()> {
        if profile.n_players() != self.n_players() {
            return Err(Error::invalid(format!(
                "cost profile `{}` has {} players but game has {}",
                profile.id,
                profile.n_players(),
                self.n_players()
            )));
        }
        for c in &profile.players {
            self.check_cost(c)?;
        }
        Ok(())
    }

    pub fn check_profile_shape(&self, x: &[Strategy]) -> Result<()> {
        if x.len() != self.n_players() {
            return Err(Error::invalid(format!(
                "strategy profile has {} players but game has {}",
                x.len(),
                self.n_players()
            )));
        }
        for (i, xi) in x.iter().enumerate() {
            if xi.len() != self.dim {
                return Err(Error::invalid(format!(
                    "strategy {i} has dimension {} but game has {}",
                    xi.len(),
                    self.dim
                )));
            }
        }
        Ok(())
    }

    /// Cost of `player` under `cost` at the joint strategy `x`.
    pub fn cost(&self, cost: &PlayerCost, player: usize, x: &[Strategy]) -> Result<f64> {
        self.check_cost(cost)?;
        self.check_profile_shape(x)?;
        if player >= x.len() {
            return Err(Error::invalid(format!(
                "player index {player} out of range for {} players",
                x.len()
            )));
        }
        let delta = aggregate(x)?;
        let xi = &x[player];
        Ok(match cost {
            PlayerCost::Disease { a, b } => {
                let one_minus = xi.map(|v| 1.0 - v);
                a.dot(xi) + delta.dot(&(b * one_minus))
            }
            PlayerCost::Quadratic { q, r, s } => {
                0.5 * xi.dot(&(q * xi)) + r.dot(xi) + s * delta.dot(xi)
            }
        })
    }

    /// Pseudo-gradient of a player's cost in its own strategy, including the
    /// term that flows through the aggregate.
    pub fn pseudo_gradient(
        &self,
        cost: &PlayerCost,
        x_i: &Strategy,
        delta: &Strategy,
    ) -> Result<Strategy> {
        self.pseudo_gradient_with_chain(cost, x_i, delta, true)
    }

    /// Pseudo-gradient with the aggregate chain term optionally dropped.
    ///
    /// Dropping it treats the aggregate estimate as an exogenous signal; the
    /// adversary exposes the same switch so the two sides can be compared
    /// under either convention.
    pub fn pseudo_gradient_with_chain(
        &self,
        cost: &PlayerCost,
        x_i: &Strategy,
        delta: &Strategy,
        include_chain: bool,
    ) -> Result<Strategy> {
        self.check_cost(cost)?;
        if x_i.len() != self.dim || delta.len() != self.dim {
            return Err(Error::invalid(
                "pseudo-gradient arguments do not match the game dimension",
            ));
        }
        Ok(match cost {
            PlayerCost::Disease { a, b } => {
                disease_gradient(a, b, x_i, delta, self.n_players(), include_chain)
            }
            PlayerCost::Quadratic { q, r, s } => {
                quadratic_gradient(q, r, *s, x_i, delta, self.n_players(), include_chain)
            }
        })
    }

    /// Natural-map residual `sum_i || x_i - proj_i(x_i - F_i(x_i, delta)) ||_2`;
    /// zero exactly at a Nash equilibrium.
    pub fn ne_residual(&self, profile: &CostProfile, x: &[Strategy]) -> Result<f64> {
        self.check_costs(profile)?;
        self.check_profile_shape(x)?;
        let delta = aggregate(x)?;
        let mut total = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let g = self.pseudo_gradient(&profile.players[i], xi, &delta)?;
            let stepped = xi - g;
            let projected = self.constraints[i].project(&stepped);
            total += (xi - projected).norm();
        }
        Ok(total)
    }

    /// Draw an initial joint strategy, one constraint-set sample per player.
    pub fn sample_profile_point<R: Rng + ?Sized>(&self, rng: &mut R) -> StrategyProfile {
        self.constraints.iter().map(|c| c.sample(rng)).collect()
    }
}

/// Disease-family pseudo-gradient `a + (1/N) b (1 - x_i) - b' delta`.
///
/// Shared verbatim with the adversary's simulated updates so that an
/// adversary holding the true parameters reproduces the engine's arithmetic
/// exactly.
pub(crate) fn disease_gradient(
    a: &DVector<f64>,
    b: &DMatrix<f64>,
    x_i: &Strategy,
    delta: &Strategy,
    n_players: usize,
    include_chain: bool,
) -> Strategy {
    let mut g = a.clone();
    if include_chain {
        let one_minus = x_i.map(|v| 1.0 - v);
        g += (b * one_minus) / n_players as f64;
    }
    g -= b.transpose() * delta;
    g
}

/// Quadratic-family pseudo-gradient `q x_i + r + s delta (+ (s/N) x_i)`.
fn quadratic_gradient(
    q: &DMatrix<f64>,
    r: &DVector<f64>,
    s: f64,
    x_i: &Strategy,
    delta: &Strategy,
    n_players: usize,
    include_chain: bool,
) -> Strategy {
    let mut g = q * x_i + r + delta * s;
    if include_chain {
        g += x_i * (s / n_players as f64);
    }
    g
}
