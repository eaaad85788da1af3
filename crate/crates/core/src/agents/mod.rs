//! Policy-value providers and the examiner/target agents built on them.
//!
//! A [`Provider`] is the cheap per-state policy-value source (the stand-in
//! for a policy-value network). An [`Evaluator`] is the full agent surface
//! used by the attack layer: value, policy, per-action values, visit counts
//! and a territory estimate. Searching evaluators ([`mcts::MctsAgent`]), the
//! exact solver ([`oracle::OracleAgent`]) and the external engine client
//! ([`bridge::EngineBridge`]) all implement it.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::rc::Rc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Action, GameState, TerritoryMap};

pub mod bridge;
pub mod heuristic;
pub mod mcts;
pub mod oracle;

pub use bridge::{EngineBridge, EngineBridgeConfig};
pub use heuristic::HeuristicProvider;
pub use mcts::MctsAgent;
pub use oracle::{OracleAgent, OracleConfig};

/// Raw provider output: a win-rate for the turn player and a distribution
/// over the legal actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub value: f64,
    pub policy: BTreeMap<Action, f64>,
}

impl PolicyValue {
    /// Highest-probability action; ties break toward the canonical action
    /// order (lowest (row, col) first, pass last).
    pub fn argmax(&self) -> Option<Action> {
        argmax(&self.policy)
    }
}

/// Full agent output for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Root value estimate, a turn-player win-rate in [0, 1].
    pub value: f64,
    /// Move distribution over legal actions.
    pub policy: BTreeMap<Action, f64>,
    /// Per-action values from the turn player's perspective; present for
    /// every action the agent actually examined.
    pub action_values: BTreeMap<Action, f64>,
    /// Ownership estimate, when the agent can produce one.
    pub territory: Option<TerritoryMap>,
    /// Per-action visit counts.
    pub visits: BTreeMap<Action, u64>,
}

impl Evaluation {
    pub fn best_action(&self) -> Option<Action> {
        argmax(&self.policy)
    }

    pub fn action_value(&self, action: Action) -> Option<f64> {
        self.action_values.get(&action).copied()
    }
}

fn argmax(map: &BTreeMap<Action, f64>) -> Option<Action> {
    let mut best: Option<(Action, f64)> = None;
    for (&action, &p) in map {
        match best {
            Some((_, bp)) if p <= bp => {}
            _ => best = Some((action, p)),
        }
    }
    best.map(|(a, _)| a)
}

/// Search budget and reproducibility knobs shared by the built-in agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub simulations: u32,
    pub puct_constant: f64,
    pub seed: u64,
}

impl AgentConfig {
    pub fn new(simulations: u32) -> AgentConfig {
        assert!(simulations >= 1, "simulations must be at least 1");
        AgentConfig {
            simulations,
            ..AgentConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> AgentConfig {
        self.seed = seed;
        self
    }
}

impl Default for AgentConfig {
    fn default() -> AgentConfig {
        AgentConfig {
            simulations: 1,
            puct_constant: 1.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("cannot evaluate a terminal state")]
    TerminalState,
    #[error("solver memo table exceeded {0} entries")]
    ResourceExceeded(usize),
    #[error("engine protocol error: {0}")]
    Protocol(String),
    #[error("engine timed out after {0:?}")]
    Timeout(Duration),
    #[error("engine crashed: {0}")]
    EngineCrashed(String),
}

/// The agent surface the attack layer talks to.
pub trait Evaluator {
    /// Evaluate a non-terminal state with the full search budget.
    fn evaluate(&self, state: &GameState) -> Result<Evaluation, AgentError>;

    /// Cheap value estimate (the raw provider, one simulation's worth).
    fn quick_value(&self, state: &GameState) -> Result<f64, AgentError>;

    /// Simulation budget, for speedup accounting.
    fn simulations(&self) -> u32;
}

/// Cheap per-state policy-value source.
pub trait Provider {
    fn policy_value(&self, state: &GameState) -> PolicyValue;
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn policy_value(&self, state: &GameState) -> PolicyValue {
        (**self).policy_value(state)
    }
}

/// Win-rate of a terminal state for its turn player.
pub fn terminal_value(state: &GameState) -> f64 {
    debug_assert!(state.is_terminal());
    match state.terminal_result().reward_for_turn_player {
        1 => 1.0,
        -1 => 0.0,
        _ => 0.5,
    }
}

/// Examiner value of `s_prime` boosted by a hint action: the examiner also
/// considers the position after forcing `hint`, and takes the better of the
/// two readings. Falls back to the plain value when the hint is illegal.
pub fn hinted_value(
    s_prime: &GameState,
    hint: Action,
    examiner: &CachedAgent,
) -> Result<f64, AgentError> {
    let plain = examiner.evaluate(s_prime)?.value;
    if !s_prime.is_legal(hint) {
        return Ok(plain);
    }
    let after = s_prime
        .apply_action(hint)
        .expect("legality was just checked");
    let after_value = if after.is_terminal() {
        terminal_value(&after)
    } else {
        examiner.evaluate(&after)?.value
    };
    Ok(plain.max(1.0 - after_value))
}

/// Averages the provider's policy over the state and its move-order
/// shuffled twin (last four actions reordered to a_{t-1}, a_t, a_{t-2},
/// a_{t-3}), which blunts attacks that exploit last-move sensitivity.
/// Returns the plain policy when the trajectory is too short or the
/// reordering does not reconstruct the same board. The value estimate is
/// passed through unchanged.
pub fn robust_policy<P: Provider + ?Sized>(state: &GameState, provider: &P) -> PolicyValue {
    let plain = provider.policy_value(state);
    let history = state.history();
    if history.len() < 4 {
        return plain;
    }
    let t = history.len() - 1;
    let mut reordered = history.to_vec();
    reordered[t - 3] = history[t - 1];
    reordered[t - 2] = history[t];
    reordered[t - 1] = history[t - 2];
    reordered[t] = history[t - 3];
    let Some(shuffled) = GameState::replay_free(
        state.rules(),
        state.size(),
        state.setup(),
        &reordered,
        state.turn(),
    ) else {
        return plain;
    };
    if !shuffled.same_board(state) {
        return plain;
    }
    let twin = provider.policy_value(&shuffled);
    let mut policy: BTreeMap<Action, f64> = BTreeMap::new();
    let mut total = 0.0;
    for action in state.legal_actions() {
        let p = (plain.policy.get(&action).copied().unwrap_or(0.0)
            + twin.policy.get(&action).copied().unwrap_or(0.0))
            / 2.0;
        total += p;
        policy.insert(action, p);
    }
    if total <= 0.0 {
        return plain;
    }
    for p in policy.values_mut() {
        *p /= total;
    }
    PolicyValue {
        value: plain.value,
        policy,
    }
}

/// Provider wrapper applying [`robust_policy`] to every query.
pub struct RobustProvider<P: Provider> {
    inner: P,
}

impl<P: Provider> RobustProvider<P> {
    pub fn new(inner: P) -> RobustProvider<P> {
        RobustProvider { inner }
    }
}

impl<P: Provider> Provider for RobustProvider<P> {
    fn policy_value(&self, state: &GameState) -> PolicyValue {
        robust_policy(state, &self.inner)
    }
}

/// Memoizing wrapper around an evaluator. Evaluations are keyed by
/// [`GameState::eval_key`]; repeated queries return the stored result, and
/// the counters report unique (non-cached) evaluations for the speedup
/// accounting.
pub struct CachedAgent {
    inner: Box<dyn Evaluator>,
    evals: RefCell<HashMap<u64, Rc<Evaluation>>>,
    quick: RefCell<HashMap<u64, f64>>,
    eval_count: Cell<u64>,
    quick_count: Cell<u64>,
}

impl CachedAgent {
    pub fn new(inner: Box<dyn Evaluator>) -> CachedAgent {
        CachedAgent {
            inner,
            evals: RefCell::new(HashMap::new()),
            quick: RefCell::new(HashMap::new()),
            eval_count: Cell::new(0),
            quick_count: Cell::new(0),
        }
    }

    pub fn evaluate(&self, state: &GameState) -> Result<Rc<Evaluation>, AgentError> {
        let key = state.eval_key();
        if let Some(hit) = self.evals.borrow().get(&key) {
            return Ok(Rc::clone(hit));
        }
        let evaluation = Rc::new(self.inner.evaluate(state)?);
        self.eval_count.set(self.eval_count.get() + 1);
        self.evals.borrow_mut().insert(key, Rc::clone(&evaluation));
        Ok(evaluation)
    }

    pub fn quick_value(&self, state: &GameState) -> Result<f64, AgentError> {
        let key = state.eval_key();
        if let Some(&hit) = self.quick.borrow().get(&key) {
            return Ok(hit);
        }
        let value = self.inner.quick_value(state)?;
        self.quick_count.set(self.quick_count.get() + 1);
        self.quick.borrow_mut().insert(key, value);
        Ok(value)
    }

    pub fn simulations(&self) -> u32 {
        self.inner.simulations()
    }

    /// Unique full evaluations performed so far.
    pub fn eval_count(&self) -> u64 {
        self.eval_count.get()
    }

    /// Unique quick (provider-only) evaluations performed so far.
    pub fn quick_count(&self) -> u64 {
        self.quick_count.get()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Color, Rules};

    fn mcts_agent(simulations: u32, seed: u64) -> CachedAgent {
        CachedAgent::new(Box::new(MctsAgent::new(
            Box::new(HeuristicProvider::new(seed)),
            AgentConfig::new(simulations).with_seed(seed),
        )))
    }

    #[test]
    fn hinted_value_takes_the_better_reading() {
        // Arithmetic of the hint rule on a hand-built evaluator.
        struct Fixed {
            base: f64,
            after: f64,
        }
        impl Evaluator for Fixed {
            fn evaluate(&self, state: &GameState) -> Result<Evaluation, AgentError> {
                let value = if state.history().is_empty() {
                    self.base
                } else {
                    self.after
                };
                Ok(Evaluation {
                    value,
                    policy: BTreeMap::new(),
                    action_values: BTreeMap::new(),
                    territory: None,
                    visits: BTreeMap::new(),
                })
            }
            fn quick_value(&self, state: &GameState) -> Result<f64, AgentError> {
                Ok(self.evaluate(state)?.value)
            }
            fn simulations(&self) -> u32 {
                1
            }
        }

        let s = GameState::new(Rules::go(0.5), 5);
        let hint = Action::place(Color::Black, 2, 2);

        let boosting = CachedAgent::new(Box::new(Fixed {
            base: 0.8,
            after: 0.1,
        }));
        let v = hinted_value(&s, hint, &boosting).unwrap();
        assert!((v - 0.9).abs() < 1e-12);

        let neutral = CachedAgent::new(Box::new(Fixed {
            base: 0.8,
            after: 0.5,
        }));
        let v = hinted_value(&s, hint, &neutral).unwrap();
        assert!((v - 0.8).abs() < 1e-12);

        // Illegal hint falls back to the plain value.
        let occupied = s.apply_action(hint).unwrap();
        let wrong_color = hinted_value(&occupied, hint, &boosting).unwrap();
        assert!((wrong_color - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cached_agent_counts_unique_evaluations() {
        let agent = mcts_agent(4, 7);
        let s = GameState::new(Rules::go(0.5), 5);
        let first = agent.evaluate(&s).unwrap();
        let second = agent.evaluate(&s).unwrap();
        assert_eq!(first, second);
        assert_eq!(agent.eval_count(), 1);

        let t = s.apply_action(Action::place(Color::Black, 0, 0)).unwrap();
        agent.evaluate(&t).unwrap();
        assert_eq!(agent.eval_count(), 2);
    }

    #[test]
    fn robust_policy_guards_short_trajectories() {
        let provider = HeuristicProvider::new(3);
        let s = GameState::new(Rules::go(0.5), 5)
            .apply_action(Action::place(Color::Black, 1, 1))
            .unwrap()
            .apply_action(Action::place(Color::White, 3, 3))
            .unwrap();
        assert_eq!(robust_policy(&s, &provider), provider.policy_value(&s));
    }

    #[test]
    fn robust_policy_sums_to_one_and_can_move_the_argmax() {
        let provider = HeuristicProvider::new(3);
        // Four placements far apart, so the reorder replays cleanly.
        let s = GameState::new(Rules::go(0.5), 7)
            .apply_action(Action::place(Color::Black, 1, 1)).unwrap()
            .apply_action(Action::place(Color::White, 5, 5)).unwrap()
            .apply_action(Action::place(Color::Black, 5, 1)).unwrap()
            .apply_action(Action::place(Color::White, 1, 5)).unwrap();
        let plain = provider.policy_value(&s);
        let robust = robust_policy(&s, &provider);
        let total: f64 = robust.policy.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        // The provider is last-move sensitive, so the averaged policy must
        // differ from the plain one (the twin saw B(5,1) last, not W(1,5)).
        assert_ne!(plain.policy, robust.policy);
        // An order-invariant provider is a fixed point of the averaging.
        struct Uniform;
        impl Provider for Uniform {
            fn policy_value(&self, state: &GameState) -> PolicyValue {
                let actions = state.legal_actions();
                let p = 1.0 / actions.len() as f64;
                PolicyValue {
                    value: 0.5,
                    policy: actions.into_iter().map(|a| (a, p)).collect(),
                }
            }
        }
        let uniform = Uniform;
        let averaged = robust_policy(&s, &uniform);
        let direct = uniform.policy_value(&s);
        for (action, p) in &direct.policy {
            assert!((averaged.policy[action] - p).abs() < 1e-12);
        }
    }
}
