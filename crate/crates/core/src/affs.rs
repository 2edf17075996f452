//! Adaptive fitness-function selection: goal-specific action spaces, the UCB
//! bandit and differential semi-gradient Sarsa agents, rewards, and the
//! static baselines.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::{FitnessFunctionId, GoalFamily};
use crate::mutation::ScoreMode;

use FitnessFunctionId as F;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AffsError {
    #[error("empty action space")]
    EmptySpace,
    #[error("action {0} is outside the action space")]
    UnknownAction(usize),
    #[error("feature dimension {found} does not match weight dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("expected one feature vector per action ({expected}), got {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("invalid action {functions:?} for goal {goal}: {reason}")]
    InvalidAction {
        goal: Goal,
        functions: Vec<FitnessFunctionId>,
        reason: String,
    },
    #[error("cannot read pin file: {0}")]
    PinFile(String),
    #[error("{0} is not among the functions available for goal {1}")]
    Mismatch(FitnessFunctionId, Goal),
    #[error("mutation reward needs at least one mutant")]
    NoMutants,
    #[error("invalid agent parameter: {0}")]
    Config(String),
}

/// What a search run is trying to achieve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Goal {
    Exceptions,
    Diversity,
    StrongMutation,
}

impl Goal {
    pub const ALL: [Goal; 3] = [Goal::Exceptions, Goal::Diversity, Goal::StrongMutation];

    /// Candidate functions, anchor first where the goal has one.
    pub fn pool(self) -> &'static [FitnessFunctionId] {
        match self {
            Goal::Exceptions => &[F::Ex, F::Branch, F::DirectBranch, F::Line, F::Method, F::Mnec, F::Output, F::WeakMut],
            Goal::Diversity => &[F::Diversity, F::Ex, F::Branch, F::DirectBranch, F::Method, F::Mnec, F::Output, F::WeakMut],
            Goal::StrongMutation => &[F::StrongMut, F::Ex, F::Branch, F::Mnec, F::Output, F::WeakMut],
        }
    }

    /// Function every action must contain.
    pub fn anchor(self) -> Option<FitnessFunctionId> {
        match self {
            Goal::Exceptions => Some(F::Ex),
            Goal::Diversity => Some(F::Diversity),
            Goal::StrongMutation => None,
        }
    }

    pub fn max_action_size(self) -> usize {
        match self {
            Goal::StrongMutation => 3,
            _ => 4,
        }
    }

    /// Single function the goal's static baseline optimizes.
    pub fn primary_function(self) -> FitnessFunctionId {
        self.pool()[0]
    }

    /// Goals the final suite is minimized against.
    pub fn family(self) -> GoalFamily {
        match self {
            Goal::Exceptions => GoalFamily::Exceptions,
            Goal::Diversity => GoalFamily::Methods,
            Goal::StrongMutation => GoalFamily::Mutants,
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Goal::Exceptions => "exceptions",
            Goal::Diversity => "diversity",
            Goal::StrongMutation => "strong-mutation",
        })
    }
}

impl FromStr for Goal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "exceptions" => Ok(Goal::Exceptions),
            "diversity" => Ok(Goal::Diversity),
            "strong-mutation" => Ok(Goal::StrongMutation),
            _ => Err(format!("unknown goal '{s}'")),
        }
    }
}

/// One selectable combination of fitness functions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    /// Index in the goal's action space; equal to the space size for
    /// actions outside it.
    pub id: usize,
    pub functions: Vec<FitnessFunctionId>,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.functions.iter().map(|x| x.name()).collect();
        write!(f, "{}", names.join("+"))
    }
}

/// The ordered list of actions available for a goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub goal: Goal,
    pub actions: Vec<Action>,
}

fn overlapping(functions: &[FitnessFunctionId]) -> bool {
    let has = |f| functions.contains(&f);
    (has(F::Branch) && has(F::DirectBranch)) || (has(F::Method) && has(F::Mnec))
}

impl ActionSpace {
    /// Default space for `goal`, ordered by size and then by pool position.
    pub fn default_for(goal: Goal) -> Self {
        let pool = goal.pool();
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        for mask in 1u32..(1 << pool.len()) {
            let idx: Vec<usize> = (0..pool.len()).filter(|i| mask & (1 << i) != 0).collect();
            subsets.push(idx);
        }
        subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let lists = subsets
            .into_iter()
            .map(|idx| idx.into_iter().map(|i| pool[i]).collect::<Vec<_>>())
            .filter(|fs| Self::check(goal, fs).is_ok())
            .filter(|fs| goal != Goal::Diversity || !overlapping(fs));
        Self::numbered(goal, lists)
    }

    fn numbered(goal: Goal, lists: impl IntoIterator<Item = Vec<FitnessFunctionId>>) -> Self {
        Self {
            goal,
            actions: lists
                .into_iter()
                .enumerate()
                .map(|(id, functions)| Action { id, functions })
                .collect(),
        }
    }

    /// Membership constraints for a single action of `goal`.
    pub fn check(goal: Goal, functions: &[FitnessFunctionId]) -> Result<(), AffsError> {
        let fail = |reason: &str| {
            Err(AffsError::InvalidAction {
                goal,
                functions: functions.to_vec(),
                reason: reason.to_string(),
            })
        };
        if functions.is_empty() || functions.len() > goal.max_action_size() {
            return fail("size out of range");
        }
        if functions.iter().any(|f| !goal.pool().contains(f)) {
            return fail("function outside the goal's pool");
        }
        for (i, f) in functions.iter().enumerate() {
            if functions[..i].contains(f) {
                return fail("repeated function");
            }
        }
        if let Some(anchor) = goal.anchor() {
            if !functions.contains(&anchor) {
                return fail("missing the goal's anchor function");
            }
        }
        Ok(())
    }

    /// An explicit action list, validated and numbered in the given order.
    pub fn pinned(goal: Goal, lists: Vec<Vec<FitnessFunctionId>>) -> Result<Self, AffsError> {
        if lists.is_empty() {
            return Err(AffsError::EmptySpace);
        }
        let mut seen: Vec<Vec<FitnessFunctionId>> = Vec::new();
        let mut normalized = Vec::with_capacity(lists.len());
        for fs in lists {
            Self::check(goal, &fs)?;
            let mut key = fs.clone();
            key.sort();
            if seen.contains(&key) {
                return Err(AffsError::InvalidAction {
                    goal,
                    functions: fs,
                    reason: "duplicate action".into(),
                });
            }
            seen.push(key);
            normalized.push(fs);
        }
        Ok(Self::numbered(goal, normalized))
    }

    /// Reads a JSON list of function-name arrays.
    pub fn from_pin_file(goal: Goal, path: &Path) -> Result<Self, AffsError> {
        let text = std::fs::read_to_string(path).map_err(|e| AffsError::PinFile(format!("{}: {e}", path.display())))?;
        let lists: Vec<Vec<FitnessFunctionId>> =
            serde_json::from_str(&text).map_err(|e| AffsError::PinFile(format!("{}: {e}", path.display())))?;
        Self::pinned(goal, lists)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// The space's action with exactly these functions, or an out-of-space
    /// action carrying id `len()`.
    pub fn lookup(&self, functions: &[FitnessFunctionId]) -> Action {
        let mut key = functions.to_vec();
        key.sort();
        self.actions
            .iter()
            .find(|a| {
                let mut k = a.functions.clone();
                k.sort();
                k == key
            })
            .cloned()
            .unwrap_or_else(|| Action {
                id: self.len(),
                functions: functions.to_vec(),
            })
    }

    /// Combination of every function in the goal's pool.
    pub fn default_action(&self) -> Action {
        self.lookup(self.goal.pool())
    }

    /// Keeps only actions satisfying `keep`, renumbering them.
    pub fn filtered(&self, keep: impl Fn(&Action) -> bool) -> Self {
        Self::numbered(
            self.goal,
            self.actions.iter().filter(|a| keep(a)).map(|a| a.functions.clone()),
        )
    }
}

/// Default action space for `goal`.
pub fn action_space(goal: Goal) -> Vec<Action> {
    ActionSpace::default_for(goal).actions
}

/// Per-action tallies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditStats<T> {
    pub times_selected: u64,
    pub sum_reward: T,
}

impl<T: Float> Default for BanditStats<T> {
    fn default() -> Self {
        Self {
            times_selected: 0,
            sum_reward: T::zero(),
        }
    }
}

impl<T: Float> BanditStats<T> {
    pub fn mean(&self) -> T {
        if self.times_selected == 0 {
            T::zero()
        } else {
            self.sum_reward / T::from(self.times_selected).expect("count fits")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbConfig<T> {
    pub c: T,
}

impl<T: Float> Default for UcbConfig<T> {
    fn default() -> Self {
        Self {
            c: T::from(1.414).expect("representable"),
        }
    }
}

/// Upper-confidence-bound choice: the first untried action in
/// `seeding_order`, else the argmax of mean plus `c·sqrt(ln t / N)` with
/// ties going to the lowest id.
pub fn ucb_select<T: Float>(
    stats: &[BanditStats<T>],
    t: u64,
    cfg: &UcbConfig<T>,
    seeding_order: &[usize],
) -> Result<usize, AffsError> {
    if stats.is_empty() {
        return Err(AffsError::EmptySpace);
    }
    let untried = |a: &usize| stats.get(*a).is_some_and(|s| s.times_selected == 0);
    if let Some(a) = seeding_order.iter().copied().find(untried) {
        return Ok(a);
    }
    if let Some(a) = (0..stats.len()).find(untried) {
        return Ok(a);
    }
    let ln_t = T::from(t.max(1)).expect("count fits").ln();
    let mut best = 0;
    let mut best_value = T::neg_infinity();
    for (a, s) in stats.iter().enumerate() {
        let n = T::from(s.times_selected).expect("count fits");
        let value = s.mean() + cfg.c * (ln_t / n).sqrt();
        if value > best_value {
            best = a;
            best_value = value;
        }
    }
    Ok(best)
}

/// Records one observed reward for `action`.
pub fn ucb_update<T: Float>(stats: &mut [BanditStats<T>], action: usize, reward: T) -> Result<(), AffsError> {
    let s = stats.get_mut(action).ok_or(AffsError::UnknownAction(action))?;
    s.times_selected += 1;
    s.sum_reward = s.sum_reward + reward;
    Ok(())
}

/// Context-free UCB bandit over an action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcbAgent<T> {
    pub stats: Vec<BanditStats<T>>,
    pub config: UcbConfig<T>,
    pub seeding_order: Vec<usize>,
}

impl<T: Float> UcbAgent<T> {
    pub fn new<R: Rng + ?Sized>(n_actions: usize, config: UcbConfig<T>, rng: &mut R) -> Result<Self, AffsError> {
        if n_actions == 0 {
            return Err(AffsError::EmptySpace);
        }
        if !(config.c > T::zero()) {
            return Err(AffsError::Config("UCB confidence c must be positive".into()));
        }
        let mut seeding_order: Vec<usize> = (0..n_actions).collect();
        seeding_order.shuffle(rng);
        Ok(Self {
            stats: vec![BanditStats::default(); n_actions],
            config,
            seeding_order,
        })
    }

    /// Number of rewards observed so far.
    pub fn t(&self) -> u64 {
        self.stats.iter().map(|s| s.times_selected).sum()
    }

    pub fn select(&self) -> usize {
        ucb_select(&self.stats, self.t(), &self.config, &self.seeding_order).expect("space is non-empty")
    }

    pub fn update(&mut self, action: usize, reward: T) -> Result<(), AffsError> {
        ucb_update(&mut self.stats, action, reward)
    }
}

/// State-action features: a multi-hot block over all fitness functions,
/// then composite fitness, normalized suite size and subgoal coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
}

impl<T: Float> FeatureVector<T> {
    pub const DIM: usize = FitnessFunctionId::ALL.len() + 3;

    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn for_action(functions: &[FitnessFunctionId], composite: T, suite_size: T, coverage: T) -> Self {
        let mut values = vec![T::zero(); Self::DIM];
        for f in functions {
            values[f.ordinal()] = T::one();
        }
        let base = FitnessFunctionId::ALL.len();
        values[base] = composite;
        values[base + 1] = suite_size;
        values[base + 2] = coverage;
        Self { values }
    }

    pub fn dot(&self, weights: &[T]) -> T {
        self.values
            .iter()
            .zip(weights)
            .fold(T::zero(), |acc, (x, w)| acc + *x * *w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarsaConfig<T> {
    pub alpha: T,
    pub beta: T,
    pub epsilon: T,
}

impl<T: Float> Default for SarsaConfig<T> {
    fn default() -> Self {
        let tenth = T::from(0.1).expect("representable");
        Self {
            alpha: tenth,
            beta: tenth,
            epsilon: tenth,
        }
    }
}

impl<T: Float> SarsaConfig<T> {
    pub fn validate(&self) -> Result<(), AffsError> {
        if !(self.alpha >= T::zero() && self.beta > T::zero()) {
            return Err(AffsError::Config("alpha must be non-negative and beta positive".into()));
        }
        if !(self.epsilon >= T::zero() && self.epsilon <= T::one()) {
            return Err(AffsError::Config("epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarsaTraceEntry<T> {
    pub previous_action: usize,
    pub action: usize,
    pub reward: T,
    pub delta: T,
    pub q_old: T,
    pub q_new: T,
}

/// Differential semi-gradient Sarsa with a linear action-value estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarsaAgent<T> {
    pub weights: Vec<T>,
    pub average_reward: T,
    pub config: SarsaConfig<T>,
    pub seeding_order: Vec<usize>,
    /// Rewards observed per action.
    pub stats: Vec<BanditStats<T>>,
    pub trace: Vec<SarsaTraceEntry<T>>,
    last: Option<(usize, FeatureVector<T>)>,
}

impl<T: Float> SarsaAgent<T> {
    pub fn new<R: Rng + ?Sized>(
        n_actions: usize,
        dim: usize,
        config: SarsaConfig<T>,
        rng: &mut R,
    ) -> Result<Self, AffsError> {
        if n_actions == 0 {
            return Err(AffsError::EmptySpace);
        }
        config.validate()?;
        let mut seeding_order: Vec<usize> = (0..n_actions).collect();
        seeding_order.shuffle(rng);
        Ok(Self {
            weights: vec![T::zero(); dim],
            average_reward: T::zero(),
            config,
            seeding_order,
            stats: vec![BanditStats::default(); n_actions],
            trace: Vec::new(),
            last: None,
        })
    }

    /// An agent past its seeding phase, positioned at `(last_action,
    /// last_features)`.
    pub fn from_parts(
        weights: Vec<T>,
        average_reward: T,
        config: SarsaConfig<T>,
        n_actions: usize,
        last_action: usize,
        last_features: FeatureVector<T>,
    ) -> Result<Self, AffsError> {
        config.validate()?;
        if last_features.values.len() != weights.len() {
            return Err(AffsError::Dimension {
                expected: weights.len(),
                found: last_features.values.len(),
            });
        }
        Ok(Self {
            weights,
            average_reward,
            config,
            seeding_order: (0..n_actions).collect(),
            stats: vec![
                BanditStats {
                    times_selected: 1,
                    sum_reward: T::zero()
                };
                n_actions
            ],
            trace: Vec::new(),
            last: Some((last_action, last_features)),
        })
    }

    pub fn q(&self, x: &FeatureVector<T>) -> T {
        x.dot(&self.weights)
    }

    pub fn last_action(&self) -> Option<usize> {
        self.last.as_ref().map(|(a, _)| *a)
    }

    fn check_dim(&self, x: &FeatureVector<T>) -> Result<(), AffsError> {
        if x.values.len() != self.weights.len() {
            return Err(AffsError::Dimension {
                expected: self.weights.len(),
                found: x.values.len(),
            });
        }
        Ok(())
    }

    /// Picks the first seeding action in state `S0`.
    pub fn begin(&mut self, features: &[FeatureVector<T>]) -> Result<usize, AffsError> {
        self.check_features(features)?;
        let a = self.seeding_order[0];
        self.last = Some((a, features[a].clone()));
        Ok(a)
    }

    fn check_features(&self, features: &[FeatureVector<T>]) -> Result<(), AffsError> {
        if features.len() != self.stats.len() {
            return Err(AffsError::FeatureCount {
                expected: self.stats.len(),
                found: features.len(),
            });
        }
        features.iter().try_for_each(|x| self.check_dim(x))
    }

    fn epsilon_greedy<R: Rng + ?Sized>(&self, features: &[FeatureVector<T>], rng: &mut R) -> usize {
        let eps = self.config.epsilon.to_f64().expect("finite epsilon");
        if rng.gen_bool(eps) {
            return rng.gen_range(0..features.len());
        }
        let qs: Vec<T> = features.iter().map(|x| self.q(x)).collect();
        let max = qs.iter().copied().fold(T::neg_infinity(), T::max);
        let best: Vec<usize> = (0..qs.len()).filter(|&a| qs[a] == max).collect();
        *best.choose(rng).expect("at least one maximal action")
    }

    /// Observes `reward` for the last action and moves to the next one;
    /// `features[a]` is `X(S', a)`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        reward: T,
        features: &[FeatureVector<T>],
        rng: &mut R,
    ) -> Result<usize, AffsError> {
        self.check_features(features)?;
        let (prev, x_prev) = self.last.take().ok_or(AffsError::Config("step before begin".into()))?;
        ucb_update(&mut self.stats, prev, reward)?;
        let observed: u64 = self.stats.iter().map(|s| s.times_selected).sum();
        let next = match self.seeding_order.iter().copied().find(|&a| self.stats[a].times_selected == 0) {
            Some(a) if (observed as usize) < self.stats.len() => a,
            _ => self.epsilon_greedy(features, rng),
        };
        let q_old = self.q(&x_prev);
        let q_new = self.q(&features[next]);
        let delta = reward - self.average_reward + q_new - q_old;
        self.average_reward = self.average_reward + self.config.beta * delta;
        for (w, x) in self.weights.iter_mut().zip(&x_prev.values) {
            *w = *w + self.config.alpha * delta * *x;
        }
        self.trace.push(SarsaTraceEntry {
            previous_action: prev,
            action: next,
            reward,
            delta,
            q_old,
            q_new,
        });
        self.last = Some((next, features[next].clone()));
        Ok(next)
    }
}

/// Goal-level measurements a reward is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardInputs {
    pub discovered_exceptions: usize,
    pub best_unique_exceptions: usize,
    pub best_diversity_fitness: f64,
    /// Mutation scores of the best suite, in percent; `None` without mutants.
    pub weak_score: Option<f64>,
    pub strong_score: Option<f64>,
}

/// Turns successive measurements into rewards, remembering the previous
/// value each goal's reward is relative to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTracker {
    pub goal: Goal,
    seeding_len: usize,
    previous_diversity: f64,
    last_weak: f64,
    last_strong: f64,
}

impl RewardTracker {
    pub fn new(goal: Goal, seeding_len: usize, initial: &RewardInputs) -> Self {
        Self {
            goal,
            seeding_len,
            previous_diversity: initial.best_diversity_fitness,
            last_weak: initial.weak_score.unwrap_or(0.0),
            last_strong: initial.strong_score.unwrap_or(0.0),
        }
    }

    /// Score mode the mutation reward uses at update `tick` (0-based).
    pub fn mode(&self, tick: usize) -> ScoreMode {
        if tick < self.seeding_len || tick % 2 == 0 {
            ScoreMode::Weak
        } else {
            ScoreMode::Strong
        }
    }

    pub fn reward(&mut self, tick: usize, inputs: &RewardInputs) -> Result<f64, AffsError> {
        Ok(match self.goal {
            Goal::Exceptions => (inputs.discovered_exceptions + inputs.best_unique_exceptions) as f64,
            Goal::Diversity => {
                let r = self.previous_diversity - inputs.best_diversity_fitness;
                self.previous_diversity = inputs.best_diversity_fitness;
                r
            }
            Goal::StrongMutation => match self.mode(tick) {
                ScoreMode::Weak => {
                    let now = inputs.weak_score.ok_or(AffsError::NoMutants)?;
                    let r = now - self.last_weak;
                    self.last_weak = now;
                    r
                }
                ScoreMode::Strong => {
                    let now = inputs.strong_score.ok_or(AffsError::NoMutants)?;
                    let r = now - self.last_strong;
                    self.last_strong = now;
                    r
                }
            },
        })
    }
}

/// How the active action is chosen over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategySpec {
    Ucb,
    Sarsa,
    /// One function, fixed for the whole run.
    Static(FitnessFunctionId),
    /// Every function of the goal's pool, fixed.
    Default,
    /// One action drawn uniformly at run start, seeded by the given value
    /// or else by the run seed.
    Random(Option<u64>),
}

impl StrategySpec {
    pub fn is_adaptive(self) -> bool {
        matches!(self, StrategySpec::Ucb | StrategySpec::Sarsa)
    }

    /// Static, default and random strategies for `goal`.
    pub fn baselines(goal: Goal) -> [StrategySpec; 3] {
        [
            StrategySpec::Static(goal.primary_function()),
            StrategySpec::Default,
            StrategySpec::Random(None),
        ]
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Ucb => f.write_str("ucb"),
            StrategySpec::Sarsa => f.write_str("sarsa"),
            StrategySpec::Static(x) => write!(f, "static:{x}"),
            StrategySpec::Default => f.write_str("default"),
            StrategySpec::Random(_) => f.write_str("random"),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "ucb" => Ok(StrategySpec::Ucb),
            "sarsa" => Ok(StrategySpec::Sarsa),
            "default" => Ok(StrategySpec::Default),
            "random" => Ok(StrategySpec::Random(None)),
            _ => match lower.strip_prefix("static:") {
                Some(name) => Ok(StrategySpec::Static(name.parse()?)),
                None => Err(format!("unknown strategy '{s}'")),
            },
        }
    }
}

/// Live strategy of one run.
#[derive(Debug, Clone)]
pub enum Strategy {
    Fixed(Action),
    Ucb(UcbAgent<f64>),
    Sarsa(SarsaAgent<f64>),
}

impl Strategy {
    pub fn new<R: Rng + ?Sized>(
        spec: StrategySpec,
        space: &ActionSpace,
        ucb: UcbConfig<f64>,
        sarsa: SarsaConfig<f64>,
        run_seed: u64,
        rng: &mut R,
    ) -> Result<Self, AffsError> {
        if space.is_empty() {
            return Err(AffsError::EmptySpace);
        }
        Ok(match spec {
            StrategySpec::Ucb => Strategy::Ucb(UcbAgent::new(space.len(), ucb, rng)?),
            StrategySpec::Sarsa => {
                Strategy::Sarsa(SarsaAgent::new(space.len(), FeatureVector::<f64>::DIM, sarsa, rng)?)
            }
            StrategySpec::Static(f) => {
                if !space.goal.pool().contains(&f) {
                    return Err(AffsError::Mismatch(f, space.goal));
                }
                Strategy::Fixed(space.lookup(&[f]))
            }
            StrategySpec::Default => Strategy::Fixed(space.default_action()),
            StrategySpec::Random(seed) => {
                use rand::SeedableRng;
                let mut own = rand_chacha::ChaCha8Rng::seed_from_u64(seed.unwrap_or(run_seed));
                Strategy::Fixed(space.actions.choose(&mut own).expect("non-empty").clone())
            }
        })
    }

    pub fn is_adaptive(&self) -> bool {
        !matches!(self, Strategy::Fixed(_))
    }

    /// Per-action reward tallies of an adaptive strategy.
    pub fn stats(&self) -> Option<&[BanditStats<f64>]> {
        match self {
            Strategy::Fixed(_) => None,
            Strategy::Ucb(a) => Some(&a.stats),
            Strategy::Sarsa(a) => Some(&a.stats),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn action_space_sizes() {
        let ex = ActionSpace::default_for(Goal::Exceptions);
        assert_eq!(ex.len(), (0..=3).map(|k| binom(7, k)).sum::<u64>() as usize);
        assert_eq!(ex.len(), 64);
        assert!(ex.actions.iter().all(|a| a.functions.contains(&F::Ex)));
        assert_eq!(ActionSpace::default_for(Goal::Diversity).len(), 52);
        assert_eq!(ActionSpace::default_for(Goal::StrongMutation).len(), 41);
        for goal in Goal::ALL {
            let space = ActionSpace::default_for(goal);
            for (i, a) in space.actions.iter().enumerate() {
                assert_eq!(a.id, i);
                ActionSpace::check(goal, &a.functions).unwrap();
            }
            assert_eq!(space.actions[0].functions, vec![goal.pool()[0]]);
            assert_eq!(space.default_action().functions.len(), goal.pool().len());
        }
        assert_eq!(ActionSpace::default_for(Goal::Exceptions).default_action().id, 64);
    }

    #[test]
    fn pinned_spaces_validate() {
        let ok = ActionSpace::pinned(Goal::Diversity, vec![vec![F::Diversity], vec![F::Diversity, F::Ex]]).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(ActionSpace::pinned(Goal::Diversity, vec![vec![F::Ex]]).is_err());
        assert!(ActionSpace::pinned(Goal::Exceptions, vec![vec![F::Ex, F::StrongMut]]).is_err());
        assert!(ActionSpace::pinned(Goal::Exceptions, vec![vec![F::Ex], vec![F::Ex]]).is_err());
        assert!(ActionSpace::pinned(Goal::StrongMutation, vec![]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pin.json");
        std::fs::write(&path, r#"[["STRONG_MUT"], ["WEAK_MUT", "EX"]]"#).unwrap();
        let pinned = ActionSpace::from_pin_file(Goal::StrongMutation, &path).unwrap();
        assert_eq!(pinned.actions[1].functions, vec![F::WeakMut, F::Ex]);
    }

    fn stats(pairs: &[(u64, f64)]) -> Vec<BanditStats<f64>> {
        pairs
            .iter()
            .map(|&(n, s)| BanditStats {
                times_selected: n,
                sum_reward: s,
            })
            .collect()
    }

    #[test]
    fn ucb_examples() {
        let s = stats(&[(1, 100.0), (0, 0.0), (1, -5.0)]);
        assert_eq!(ucb_select(&s, 2, &UcbConfig { c: 1.0 }, &[2, 0, 1]).unwrap(), 1);

        let s = stats(&[(1, 2.0), (1, 0.5)]);
        assert_eq!(ucb_select(&s, 2, &UcbConfig { c: 1e-9 }, &[]).unwrap(), 0);

        let s = stats(&[(10, 10.0), (1, 0.9)]);
        // oracle: evaluate the bound for each arm directly
        let bound = |q: f64, n: f64| q + 2.0 * ((11f64).ln() / n).sqrt();
        assert!(bound(0.9, 1.0) > bound(1.0, 10.0));
        assert_eq!(ucb_select(&s, 11, &UcbConfig { c: 2.0 }, &[]).unwrap(), 1);

        assert_eq!(ucb_select::<f64>(&[], 0, &UcbConfig::default(), &[]), Err(AffsError::EmptySpace));
    }

    #[test]
    fn ucb_update_examples() {
        let mut s = stats(&[(0, 0.0), (0, 0.0)]);
        ucb_update(&mut s, 0, 1.0).unwrap();
        ucb_update(&mut s, 0, 3.0).unwrap();
        assert_eq!(s[0].mean(), 2.0);
        assert_eq!(s[1], BanditStats::default());
        ucb_update(&mut s, 0, 0.0).unwrap();
        assert_eq!(s[0].times_selected, 3);
        assert!(s[0].mean() < 2.0);
        assert_eq!(ucb_update(&mut s, 5, 1.0), Err(AffsError::UnknownAction(5)));
    }

    #[test]
    fn sarsa_worked_example() {
        let cfg = SarsaConfig {
            alpha: 0.1,
            beta: 0.1,
            epsilon: 0.0,
        };
        let mut agent = SarsaAgent::from_parts(vec![1.0], 0.0, cfg, 1, 0, FeatureVector::new(vec![2.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = agent.step(1.0, &[FeatureVector::new(vec![3.0])], &mut rng).unwrap();
        assert_eq!(next, 0);
        let entry = &agent.trace[0];
        assert!((entry.delta - 2.0).abs() <= 1e-12);
        assert!((agent.weights[0] - 1.4).abs() <= 1e-12);
        assert!((agent.average_reward - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn sarsa_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SarsaConfig {
            alpha: 0.0,
            beta: 0.5,
            epsilon: 0.1,
        };
        let x = || vec![FeatureVector::new(vec![1.0, 2.0]); 3];
        let mut agent = SarsaAgent::new(3, 2, cfg, &mut rng).unwrap();
        agent.begin(&x()).unwrap();
        agent.step(4.0, &x(), &mut rng).unwrap();
        assert_eq!(agent.weights, vec![0.0, 0.0]);
        assert_eq!(agent.trace[0].delta, 4.0);
        assert_relative_eq!(agent.average_reward, 2.0);
        assert!(matches!(
            agent.step(1.0, &vec![FeatureVector::new(vec![1.0]); 3], &mut rng),
            Err(AffsError::Dimension { .. })
        ));
    }

    #[test]
    fn seeding_completeness_for_every_space() {
        for goal in Goal::ALL {
            let space = ActionSpace::default_for(goal);
            let n = space.len();
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let mut ucb = UcbAgent::new(n, UcbConfig::default(), &mut rng).unwrap();
            let mut a = ucb.select();
            for i in 0..n {
                ucb.update(a, i as f64).unwrap();
                a = ucb.select();
            }
            assert!(ucb.stats.iter().all(|s| s.times_selected == 1), "{goal}");

            let feats: Vec<FeatureVector<f64>> = space
                .actions
                .iter()
                .map(|a| FeatureVector::for_action(&a.functions, 0.5, 0.1, 0.0))
                .collect();
            let mut sarsa = SarsaAgent::new(n, FeatureVector::<f64>::DIM, SarsaConfig::default(), &mut rng).unwrap();
            sarsa.begin(&feats).unwrap();
            for i in 0..n {
                sarsa.step(i as f64, &feats, &mut rng).unwrap();
            }
            assert!(sarsa.stats.iter().all(|s| s.times_selected == 1), "{goal}");
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let cfg = SarsaConfig {
            alpha: 0.1,
            beta: 0.1,
            epsilon: 1.0,
        };
        let feats: Vec<FeatureVector<f64>> = (0..n).map(|i| FeatureVector::new(vec![i as f64])).collect();
        let mut agent = SarsaAgent::new(n, 1, cfg, &mut rng).unwrap();
        agent.begin(&feats).unwrap();
        for _ in 0..n {
            agent.step(0.0, &feats, &mut rng).unwrap();
        }
        let mut counts = vec![0usize; n];
        let draws = 10_000;
        for _ in 0..draws {
            counts[agent.step(1.0, &feats, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let share = c as f64 / draws as f64;
            assert!((share - 0.25).abs() <= 0.03, "{share}");
        }
    }

    #[test]
    fn reward_examples() {
        let mut ex = RewardTracker::new(Goal::Exceptions, 1, &RewardInputs::default());
        let inputs = RewardInputs {
            discovered_exceptions: 3,
            best_unique_exceptions: 2,
            ..Default::default()
        };
        assert_eq!(ex.reward(5, &inputs).unwrap(), 5.0);

        let start = RewardInputs {
            best_diversity_fitness: 0.5,
            ..Default::default()
        };
        let mut div = RewardTracker::new(Goal::Diversity, 1, &start);
        let now = RewardInputs {
            best_diversity_fitness: 0.2,
            ..Default::default()
        };
        assert_relative_eq!(div.reward(1, &now).unwrap(), 0.3);

        let start = RewardInputs {
            weak_score: Some(10.0),
            strong_score: Some(20.0),
            ..Default::default()
        };
        let mut sm = RewardTracker::new(Goal::StrongMutation, 2, &start);
        assert_eq!(sm.mode(1), ScoreMode::Weak);
        assert_eq!(sm.mode(2), ScoreMode::Weak);
        assert_eq!(sm.mode(3), ScoreMode::Strong);
        let now = RewardInputs {
            weak_score: Some(30.0),
            strong_score: Some(25.0),
            ..Default::default()
        };
        assert_eq!(sm.reward(3, &now).unwrap(), 5.0);
        assert_eq!(sm.reward(4, &now).unwrap(), 20.0);
        assert_eq!(sm.reward(5, &now).unwrap(), 0.0);
        assert_eq!(sm.reward(6, &RewardInputs::default()), Err(AffsError::NoMutants));
    }

    #[test]
    fn strategies() {
        let space = ActionSpace::default_for(Goal::Exceptions);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mk = |spec, rng: &mut ChaCha8Rng| {
            Strategy::new(spec, &space, UcbConfig::default(), SarsaConfig::default(), 7, rng).unwrap()
        };
        let Strategy::Fixed(a) = mk(StrategySpec::Static(F::Ex), &mut rng) else { panic!() };
        assert_eq!((a.id, a.functions), (0, vec![F::Ex]));
        let Strategy::Fixed(d) = mk(StrategySpec::Default, &mut rng) else { panic!() };
        assert_eq!(d.functions.len(), 8);
        let Strategy::Fixed(r1) = mk(StrategySpec::Random(Some(3)), &mut rng) else { panic!() };
        let Strategy::Fixed(r2) = mk(StrategySpec::Random(Some(3)), &mut rng) else { panic!() };
        assert_eq!(r1, r2);
        assert!(Strategy::new(StrategySpec::Static(F::StrongMut), &space, UcbConfig::default(), SarsaConfig::default(), 0, &mut rng).is_err());
        for s in ["ucb", "sarsa", "default", "random", "static:EX", "static:weak_mut"] {
            let spec: StrategySpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<StrategySpec>().unwrap(), spec);
        }
        assert!("static:nope".parse::<StrategySpec>().is_err());
        assert_eq!(StrategySpec::baselines(Goal::Diversity)[0], StrategySpec::Static(F::Diversity));
    }

    proptest! {
        #[test]
        fn greedy_ucb_ignores_positive_scaling(
            arms in proptest::collection::vec((1u64..20, -50.0f64..50.0), 1..8),
            k in 0.01f64..100.0,
        ) {
            let s = stats(&arms);
            let scaled: Vec<BanditStats<f64>> = s.iter().map(|b| BanditStats { sum_reward: b.sum_reward * k, ..*b }).collect();
            let t: u64 = arms.iter().map(|a| a.0).sum();
            let cfg = UcbConfig { c: 0.0 };
            let a = ucb_select(&s, t, &cfg, &[]).unwrap();
            let b = ucb_select(&scaled, t, &cfg, &[]).unwrap();
            // ties may resolve identically only up to rounding; compare means
            prop_assert!((s[a].mean() - s[b].mean()).abs() <= 1e-9 * s[a].mean().abs().max(1.0));
        }

        #[test]
        fn ucb_reward_bookkeeping(rewards in proptest::collection::vec(-10.0f64..10.0, 1..60), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut agent = UcbAgent::new(5, UcbConfig::default(), &mut rng).unwrap();
            for r in &rewards {
                let a = agent.select();
                agent.update(a, *r).unwrap();
            }
            let total: f64 = agent.stats.iter().map(|s| s.sum_reward).sum();
            prop_assert!((total - rewards.iter().sum::<f64>()).abs() < 1e-9);
            prop_assert_eq!(agent.t(), rewards.len() as u64);
        }
    }
}
