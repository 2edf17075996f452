//! Whole-suite genetic search with periodic fitness-function switching.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affs::{
    Action, ActionSpace, AffsError, BanditStats, FeatureVector, Goal, RewardInputs, RewardTracker,
    SarsaConfig, SarsaTraceEntry, Strategy, StrategySpec, UcbConfig,
};
use crate::fitness::{suite_diversity, FitnessContext, FitnessError, FitnessFunctionId, GoalFamily};
use crate::minilang::Program;
use crate::mutation::{score_from_statuses, ScoreMode};
use crate::testmodel::{
    augment_from_archive, crossover, minimize, Archive, GenConfig, GoalId, InputModel, SuiteDocument,
    TestSuite,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error("search budget must allow at least one generation")]
    Budget,
    #[error("program has no functions to call")]
    NoFunctions,
    #[error("goal {0} needs at least one mutant")]
    NoMutants(Goal),
    #[error(transparent)]
    Strategy(#[from] AffsError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}

/// Stop after `generations`, after `seconds` of wall-clock time, or at
/// whichever comes first when both are set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub generations: Option<u64>,
    pub seconds: Option<f64>,
}

impl Budget {
    pub fn generations(n: u64) -> Self {
        Self {
            generations: Some(n),
            seconds: None,
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        match (self.generations, self.seconds) {
            (None, None) => Err(EngineError::Budget),
            (Some(0), _) => Err(EngineError::Budget),
            (_, Some(s)) if !(s > 0.0) => Err(EngineError::Budget),
            _ => Ok(()),
        }
    }

    fn allows(&self, generation: u64, started: Instant) -> bool {
        self.generations.map_or(true, |n| generation < n)
            && self.seconds.map_or(true, |s| started.elapsed().as_secs_f64() < s)
    }
}

impl Default for Budget {
    fn default() -> Self {
        Self::generations(100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub population_size: usize,
    pub elite_count: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub fresh_random_per_gen: usize,
    /// Generations between strategy updates.
    pub skip_iter: u64,
    pub budget: Budget,
    pub rng_seed: u64,
    pub generation: GenConfig,
    pub ucb: UcbConfig<f64>,
    pub sarsa: SarsaConfig<f64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            elite_count: 2,
            crossover_rate: 0.75,
            mutation_rate: 0.9,
            fresh_random_per_gen: 2,
            skip_iter: 3,
            budget: Budget::default(),
            rng_seed: 0,
            generation: GenConfig::default(),
            ucb: UcbConfig::default(),
            sarsa: SarsaConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if self.elite_count > self.population_size {
            return bad("elite_count exceeds population_size");
        }
        if self.skip_iter == 0 {
            return bad("skip_iter must be at least 1");
        }
        for (name, r) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.ucb.c > 0.0) {
            return bad("ucb.c must be positive");
        }
        self.sarsa.validate()?;
        self.generation.validate().map_err(EngineError::Config)?;
        self.budget.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u64,
    pub action_id: usize,
    /// Present on generations that ended with a strategy update.
    pub reward: Option<f64>,
    pub best_composite: f64,
    pub elapsed_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyUpdate {
    pub generation: u64,
    pub tick: usize,
    pub previous_action: usize,
    pub next_action: usize,
    pub reward: f64,
    /// Features of the best suite under the action just evaluated.
    pub features: Vec<f64>,
}

/// Population and bookkeeping between generations.
pub struct SearchState {
    pub generation: u64,
    /// Sorted by composite fitness under `active_action`, best first.
    pub population: Vec<TestSuite>,
    pub active_action: Action,
    pub archive: Archive,
    pub log: Vec<GenerationRecord>,
    family: GoalFamily,
    model: InputModel,
}

impl SearchState {
    /// A random initial population, scored and archived.
    pub fn new<R: Rng + ?Sized>(
        ctx: &mut FitnessContext,
        config: &EngineConfig,
        family: GoalFamily,
        action: Action,
        rng: &mut R,
    ) -> Result<Self, EngineError> {
        let model = InputModel::new(ctx.program(), config.generation.clone());
        if !model.has_functions() {
            return Err(EngineError::NoFunctions);
        }
        let population = (0..config.population_size).map(|_| model.random_suite(rng)).collect();
        let mut state = Self {
            generation: 0,
            population,
            active_action: action,
            archive: Archive::new(),
            log: Vec::new(),
            family,
            model,
        };
        state.rank(ctx)?;
        state.update_archive(ctx)?;
        Ok(state)
    }

    pub fn best(&self) -> &TestSuite {
        &self.population[0]
    }

    pub fn best_composite(&mut self, ctx: &mut FitnessContext) -> Result<f64, EngineError> {
        let fs = self.active_action.functions.clone();
        Ok(ctx.composite(&fs, &mut self.population[0])?)
    }

    /// Scores every suite under the active action and sorts best first;
    /// ties keep their previous order.
    fn rank(&mut self, ctx: &mut FitnessContext) -> Result<(), EngineError> {
        let fs = self.active_action.functions.clone();
        let mut scored = Vec::with_capacity(self.population.len());
        for (i, mut s) in std::mem::take(&mut self.population).into_iter().enumerate() {
            let v = ctx.composite(&fs, &mut s)?;
            scored.push((v, i, s));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.population = scored.into_iter().map(|(_, _, s)| s).collect();
        Ok(())
    }

    /// Installs `action` and re-ranks under it.
    pub fn set_action(&mut self, action: Action, ctx: &mut FitnessContext) -> Result<(), EngineError> {
        self.active_action = action;
        self.rank(ctx)
    }

    fn update_archive(&mut self, ctx: &mut FitnessContext) -> Result<(), EngineError> {
        for suite in &self.population {
            for test in &suite.tests {
                if !ctx.first_offer(test)? {
                    continue;
                }
                for goal in ctx.coverage(test, self.family)? {
                    self.archive.offer(goal, test);
                }
            }
        }
        Ok(())
    }
}

fn tournament<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    let a = rng.gen_range(0..n);
    let b = rng.gen_range(0..n);
    a.min(b)
}

/// Breeds, scores and archives one generation.
pub fn evolve_one_generation<R: Rng + ?Sized>(
    state: &mut SearchState,
    ctx: &mut FitnessContext,
    config: &EngineConfig,
    rng: &mut R,
) -> Result<(), EngineError> {
    let started = Instant::now();
    let n = config.population_size;
    let max_size = config.generation.max_suite_size;
    let mut next: Vec<TestSuite> = state.population.iter().take(config.elite_count).cloned().collect();
    let fresh = config.fresh_random_per_gen.min(n - next.len());
    while next.len() < n - fresh {
        let p1 = &state.population[tournament(state.population.len(), rng)];
        let p2 = &state.population[tournament(state.population.len(), rng)];
        let (mut c1, mut c2) = if rng.gen_bool(config.crossover_rate) {
            crossover(p1, p2, max_size, rng).expect("population suites are non-empty")
        } else {
            (p1.clone(), p2.clone())
        };
        for child in [&mut c1, &mut c2] {
            if rng.gen_bool(config.mutation_rate) {
                *child = state.model.mutate_suite(child, rng);
            }
        }
        for child in [c1, c2] {
            if next.len() < n - fresh {
                next.push(if child.is_empty() { state.model.random_suite(rng) } else { child });
            }
        }
    }
    while next.len() < n {
        next.push(state.model.random_suite(rng));
    }
    state.population = next;
    state.rank(ctx)?;
    state.update_archive(ctx)?;
    ctx.retain(
        state
            .population
            .iter()
            .flat_map(|s| &s.tests)
            .chain(state.archive.tests()),
    );
    state.generation += 1;
    let best_composite = state.best_composite(ctx)?;
    state.log.push(GenerationRecord {
        generation: state.generation,
        action_id: state.active_action.id,
        reward: None,
        best_composite,
        elapsed_ns: started.elapsed().as_nanos() as u64,
    });
    Ok(())
}

/// Goal attainment of the final suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalMetrics {
    /// Distinct exceptions the final suite raises.
    pub unique_exceptions: usize,
    /// Distinct exceptions seen anywhere during the run.
    pub discovered_exceptions: Vec<String>,
    pub diversity: u64,
    pub diversity_fitness: f64,
    pub weak_mutation_score: Option<f64>,
    pub strong_mutation_score: Option<f64>,
    pub mutants: usize,
    pub suite_size: usize,
    pub total_calls: usize,
    pub rendered_chars: usize,
    pub archive_goals: usize,
}

impl GoalMetrics {
    /// The number the goal is judged by: exceptions raised, diversity
    /// fitness (lower is better) or strong mutation score in percent.
    pub fn goal_metric(&self, goal: Goal) -> f64 {
        match goal {
            Goal::Exceptions => self.unique_exceptions as f64,
            Goal::Diversity => self.diversity_fitness,
            Goal::StrongMutation => self.strong_mutation_score.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub program: String,
    pub goal: Goal,
    pub strategy: String,
    pub action_space: ActionSpace,
    pub generations: u64,
    pub final_suite: SuiteDocument,
    pub metrics: GoalMetrics,
    pub log: Vec<GenerationRecord>,
    pub updates: Vec<StrategyUpdate>,
    /// Rewards observed per action, for adaptive strategies.
    pub action_stats: Option<Vec<BanditStats<f64>>>,
    pub sarsa_trace: Option<Vec<SarsaTraceEntry<f64>>>,
}

impl SearchResult {
    /// The same result with all wall-clock measurements zeroed.
    pub fn without_timing(&self) -> SearchResult {
        let mut r = self.clone();
        for rec in &mut r.log {
            rec.elapsed_ns = 0;
        }
        r
    }

    pub fn total_elapsed_secs(&self) -> f64 {
        self.log.iter().map(|r| r.elapsed_ns as f64).sum::<f64>() / 1e9
    }

    /// Number of generations each action was active.
    pub fn action_histogram(&self) -> std::collections::BTreeMap<usize, u64> {
        let mut h = std::collections::BTreeMap::new();
        for r in &self.log {
            *h.entry(r.action_id).or_default() += 1;
        }
        h
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Searches with the goal's default action space.
pub fn run_search(
    program: &Program,
    goal: Goal,
    strategy: StrategySpec,
    config: &EngineConfig,
) -> Result<SearchResult, EngineError> {
    run_search_with(
        Arc::new(program.clone()),
        ActionSpace::default_for(goal),
        strategy,
        config,
    )
}

fn goal_set(ctx: &FitnessContext, family: GoalFamily) -> BTreeSet<GoalId> {
    match family {
        GoalFamily::Exceptions => ctx
            .discovered_exceptions()
            .iter()
            .cloned()
            .map(GoalId::Exception)
            .collect(),
        GoalFamily::Methods => ctx
            .program()
            .functions
            .iter()
            .map(|f| GoalId::Method(f.name.clone()))
            .collect(),
        GoalFamily::Mutants => ctx.mutants().iter().map(|m| GoalId::Mutant(m.id)).collect(),
    }
}

fn reward_inputs(ctx: &mut FitnessContext, best: &TestSuite) -> Result<RewardInputs, EngineError> {
    let evals = ctx.evaluate_all(best)?;
    let unique: BTreeSet<_> = evals.iter().flat_map(|e| e.exceptions.iter().cloned()).collect();
    let diversity = ctx.diversity(best)?;
    let (weak, strong) = if ctx.mutants().is_empty() {
        (None, None)
    } else {
        let statuses = ctx.best_statuses(best)?;
        (
            score_from_statuses(statuses.iter().copied(), ScoreMode::Weak).ok(),
            score_from_statuses(statuses, ScoreMode::Strong).ok(),
        )
    };
    Ok(RewardInputs {
        discovered_exceptions: ctx.discovered_exceptions().len(),
        best_unique_exceptions: unique.len(),
        best_diversity_fitness: 1.0 / (1.0 + diversity as f64),
        weak_score: weak,
        strong_score: strong,
    })
}

/// Features of `best` under every action of `space`.
fn features(
    ctx: &mut FitnessContext,
    best: &mut TestSuite,
    space: &ActionSpace,
    family: GoalFamily,
    max_suite_size: usize,
) -> Result<Vec<FeatureVector<f64>>, EngineError> {
    let size = (best.len() as f64 / max_suite_size as f64).min(1.0);
    let goals = goal_set(ctx, family);
    let mut covered = BTreeSet::new();
    for t in &best.tests {
        covered.extend(ctx.coverage(t, family)?);
    }
    let coverage = if goals.is_empty() {
        0.0
    } else {
        covered.intersection(&goals).count() as f64 / goals.len() as f64
    };
    space
        .actions
        .iter()
        .map(|a| {
            let composite = ctx.composite(&a.functions, best)? / a.functions.len() as f64;
            Ok(FeatureVector::for_action(&a.functions, composite, size, coverage))
        })
        .collect()
}

/// Searches with an explicit action space.
pub fn run_search_with(
    program: Arc<Program>,
    space: ActionSpace,
    spec: StrategySpec,
    config: &EngineConfig,
) -> Result<SearchResult, EngineError> {
    config.validate()?;
    let goal = space.goal;
    let family = goal.family();
    let mut ctx = FitnessContext::new(Arc::clone(&program));
    let space = if ctx.mutants().is_empty() {
        if goal == Goal::StrongMutation {
            return Err(EngineError::NoMutants(goal));
        }
        space.filtered(|a| !a.functions.iter().any(|f| f.needs_mutants()))
    } else {
        space
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut agent_rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut strategy = Strategy::new(spec, &space, config.ucb, config.sarsa, config.rng_seed, &mut agent_rng)?;
    if let Strategy::Fixed(a) = &mut strategy {
        if ctx.mutants().is_empty() {
            a.functions.retain(|f| !f.needs_mutants());
            if a.functions.is_empty() {
                return Err(EngineError::NoMutants(goal));
            }
        }
    }

    let started = Instant::now();
    let initial = match &strategy {
        Strategy::Fixed(a) => a.clone(),
        Strategy::Ucb(agent) => space.actions[agent.select()].clone(),
        // Features need a population; start from the first seeding action.
        Strategy::Sarsa(agent) => space.actions[agent.seeding_order[0]].clone(),
    };
    let mut state = SearchState::new(&mut ctx, config, family, initial, &mut rng)?;
    if let Strategy::Sarsa(agent) = &mut strategy {
        let x = features(&mut ctx, &mut state.population[0], &space, family, config.generation.max_suite_size)?;
        agent.begin(&x)?;
    }
    let mut tracker = RewardTracker::new(goal, space.len(), &reward_inputs(&mut ctx, state.best())?);
    let mut updates = Vec::new();
    let mut tick = 0usize;

    while config.budget.allows(state.generation, started) {
        evolve_one_generation(&mut state, &mut ctx, config, &mut rng)?;
        if !strategy.is_adaptive() || state.generation % config.skip_iter != 0 {
            continue;
        }
        let update_started = Instant::now();
        let inputs = reward_inputs(&mut ctx, state.best())?;
        let reward = tracker.reward(tick, &inputs)?;
        let previous = state.active_action.id;
        let max_size = config.generation.max_suite_size;
        let (next, x_prev) = match &mut strategy {
            Strategy::Ucb(agent) => {
                agent.update(previous, reward)?;
                let x = features(&mut ctx, &mut state.population[0], &space, family, max_size)?;
                (agent.select(), x[previous].values.clone())
            }
            Strategy::Sarsa(agent) => {
                let x = features(&mut ctx, &mut state.population[0], &space, family, max_size)?;
                let next = agent.step(reward, &x, &mut agent_rng)?;
                (next, x[previous].values.clone())
            }
            Strategy::Fixed(_) => unreachable!("fixed strategies never update"),
        };
        updates.push(StrategyUpdate {
            generation: state.generation,
            tick,
            previous_action: previous,
            next_action: next,
            reward,
            features: x_prev,
        });
        tick += 1;
        state.set_action(space.actions[next].clone(), &mut ctx)?;
        let record = state.log.last_mut().expect("a generation was logged");
        record.reward = Some(reward);
        record.elapsed_ns += update_started.elapsed().as_nanos() as u64;
    }

    let goals = goal_set(&ctx, family);
    let best = state.best().clone();
    // Diversity is a property of the whole suite that per-test goals cannot
    // express; removing "redundant" tests would only erase it.
    let minimized = if goal == Goal::Diversity {
        best
    } else {
        minimize(&best, &goals, |t| ctx.coverage(t, family).expect("valid test"))
    };
    let final_suite = augment_from_archive(&minimized, &state.archive, &goals, |t| {
        ctx.coverage(t, family).expect("valid test")
    });
    debug_assert!({
        let covered: BTreeSet<GoalId> = final_suite
            .tests
            .iter()
            .flat_map(|t| ctx.coverage(t, family).expect("valid test"))
            .collect();
        state.archive.goals().all(|g| covered.contains(g))
    });
    let metrics = final_metrics(&mut ctx, &final_suite, state.archive.len())?;
    let document = SuiteDocument::new(&program, &final_suite, |t| {
        ctx.coverage(t, family).expect("valid test")
    });

    Ok(SearchResult {
        program: program.source_id.clone(),
        goal,
        strategy: spec.to_string(),
        action_space: space,
        generations: state.generation,
        final_suite: document,
        metrics,
        log: state.log,
        updates,
        action_stats: strategy.stats().map(<[_]>::to_vec),
        sarsa_trace: match strategy {
            Strategy::Sarsa(agent) => Some(agent.trace),
            _ => None,
        },
    })
}

fn final_metrics(ctx: &mut FitnessContext, suite: &TestSuite, archive_goals: usize) -> Result<GoalMetrics, EngineError> {
    let evals = ctx.evaluate_all(suite)?;
    let unique: BTreeSet<_> = evals.iter().flat_map(|e| e.exceptions.iter().cloned()).collect();
    let (diversity, diversity_fitness) = suite_diversity(suite);
    let (weak, strong) = if ctx.mutants().is_empty() {
        (None, None)
    } else {
        let statuses = ctx.best_statuses(suite)?;
        (
            score_from_statuses(statuses.iter().copied(), ScoreMode::Weak).ok(),
            score_from_statuses(statuses, ScoreMode::Strong).ok(),
        )
    };
    Ok(GoalMetrics {
        unique_exceptions: unique.len(),
        discovered_exceptions: ctx.discovered_exceptions().iter().map(|e| e.to_string()).collect(),
        diversity,
        diversity_fitness,
        weak_mutation_score: weak,
        strong_mutation_score: strong,
        mutants: ctx.mutants().len(),
        suite_size: suite.len(),
        total_calls: suite.total_calls(),
        rendered_chars: suite
            .tests
            .iter()
            .map(|t| crate::testmodel::render_test(t).chars().count())
            .sum(),
        archive_goals,
    })
}

/// Best composite fitness of each action's functions, for inspection.
pub fn action_scores(
    ctx: &mut FitnessContext,
    suite: &mut TestSuite,
    space: &ActionSpace,
) -> Result<Vec<f64>, EngineError> {
    space
        .actions
        .iter()
        .map(|a| Ok(ctx.composite(&a.functions, suite)?))
        .collect()
}

/// Functions every action of `space` draws from.
pub fn space_functions(space: &ActionSpace) -> BTreeSet<FitnessFunctionId> {
    space.actions.iter().flat_map(|a| a.functions.iter().copied()).collect()
}
