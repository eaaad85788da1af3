//! Exact game-theoretic solver used as ground-truth examiner at desk scale.
//!
//! Plain negamax with memoization; values are {0, 0.5, 1} for loss, draw and
//! win from the turn player's perspective. Feasible for NoGo up to 4x4 and
//! for Go on tiny or nearly settled boards when a game-length cap is set.
//! The memo key folds in the superko fingerprint and the remaining depth, so
//! transpositions with different legal futures never alias.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use crate::game::{mix64, GameState, Rules};

use super::{AgentError, Evaluation, Evaluator};

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Treat states whose history reaches this many plies as terminal,
    /// scored by area (Go). Required to keep Go trees finite in practice.
    pub max_plies: Option<u32>,
    /// Memo entries allowed before the solver gives up.
    pub memo_limit: usize,
}

impl Default for OracleConfig {
    fn default() -> OracleConfig {
        OracleConfig {
            max_plies: None,
            memo_limit: 2_000_000,
        }
    }
}

pub struct OracleAgent {
    cfg: OracleConfig,
    memo: RefCell<HashMap<(u64, u64), i8>>,
}

impl OracleAgent {
    pub fn new(cfg: OracleConfig) -> OracleAgent {
        OracleAgent {
            cfg,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn memo_len(&self) -> usize {
        self.memo.borrow().len()
    }

    fn memo_key(&self, state: &GameState) -> (u64, u64) {
        let context = match state.rules() {
            // Superko and the ply cap make equal positions differ by reach.
            Rules::Go { .. } => {
                let remaining = self
                    .cfg
                    .max_plies
                    .map(|cap| cap.saturating_sub(state.history().len() as u32))
                    .unwrap_or(0);
                mix64(state.seen_fingerprint() ^ u64::from(remaining).wrapping_mul(0x9E37))
            }
            // NoGo boards only ever gain stones; the position determines
            // the subtree.
            Rules::NoGo => 0,
        };
        (state.position_hash(), context)
    }

    fn score_at_cap(state: &GameState) -> i8 {
        match state.rules() {
            Rules::Go { komi } => {
                let (black, white) = state.area();
                let diff = 2 * (black as i32 - white as i32) - komi.half_points();
                let black_reward = diff.signum() as i8;
                match state.turn() {
                    crate::game::Color::Black => black_reward,
                    crate::game::Color::White => -black_reward,
                }
            }
            Rules::NoGo => 0,
        }
    }

    /// Game-theoretic reward for the turn player: -1 loss, 0 draw, 1 win.
    pub fn solve(&self, state: &GameState) -> Result<i8, AgentError> {
        if state.is_terminal() {
            return Ok(state.terminal_result().reward_for_turn_player as i8);
        }
        if let Some(cap) = self.cfg.max_plies {
            if state.history().len() as u32 >= cap {
                return Ok(Self::score_at_cap(state));
            }
        }
        let key = self.memo_key(state);
        if let Some(&hit) = self.memo.borrow().get(&key) {
            return Ok(hit);
        }
        let mut best = -1i8;
        for action in state.legal_actions() {
            let child = state
                .apply_action(action)
                .expect("legal actions stay applicable");
            let value = -self.solve(&child)?;
            if value > best {
                best = value;
            }
            if best == 1 {
                break;
            }
        }
        let mut memo = self.memo.borrow_mut();
        if memo.len() >= self.cfg.memo_limit {
            return Err(AgentError::ResourceExceeded(self.cfg.memo_limit));
        }
        memo.insert(key, best);
        Ok(best)
    }
}

fn reward_to_winrate(reward: i8) -> f64 {
    (reward as f64 + 1.0) / 2.0
}

impl Evaluator for OracleAgent {
    fn evaluate(&self, state: &GameState) -> Result<Evaluation, AgentError> {
        if state.is_terminal() {
            return Err(AgentError::TerminalState);
        }
        let mut action_values = BTreeMap::new();
        let mut visits = BTreeMap::new();
        let mut best = -1i8;
        for action in state.legal_actions() {
            let child = state
                .apply_action(action)
                .expect("legal actions stay applicable");
            let reward = -self.solve(&child)?;
            best = best.max(reward);
            action_values.insert(action, reward_to_winrate(reward));
            visits.insert(action, 1);
        }
        let value = reward_to_winrate(best);
        let optimal: Vec<_> = action_values
            .iter()
            .filter(|(_, &q)| q == value)
            .map(|(&a, _)| a)
            .collect();
        let p = 1.0 / optimal.len() as f64;
        let policy = action_values
            .keys()
            .map(|&a| (a, if optimal.contains(&a) { p } else { 0.0 }))
            .collect();
        let territory = state.rules().is_go().then(|| state.exact_territory());
        Ok(Evaluation {
            value,
            policy,
            action_values,
            territory,
            visits,
        })
    }

    fn quick_value(&self, state: &GameState) -> Result<f64, AgentError> {
        if state.is_terminal() {
            return Err(AgentError::TerminalState);
        }
        Ok(reward_to_winrate(self.solve(state)?))
    }

    fn simulations(&self) -> u32 {
        1
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::game::{Color, Position};

    /// Memo-free negamax, kept independent of the solver it checks.
    fn brute_force(state: &GameState) -> i8 {
        if state.is_terminal() {
            return state.terminal_result().reward_for_turn_player as i8;
        }
        let mut best = -1i8;
        for action in state.legal_actions() {
            let child = state.apply_action(action).unwrap();
            best = best.max(-brute_force(&child));
        }
        best
    }

    #[test]
    fn empty_2x2_nogo_matches_brute_force() {
        let state = GameState::new(Rules::NoGo, 2);
        let oracle = OracleAgent::new(OracleConfig::default());
        assert_eq!(oracle.solve(&state).unwrap(), brute_force(&state));
    }

    #[test]
    fn all_losing_state_has_value_zero() {
        // March a deterministic 4x4 NoGo game forward until brute force says
        // the turn player has lost outright, then check the solver agrees.
        let mut state = GameState::new(Rules::NoGo, 4);
        let oracle = OracleAgent::new(OracleConfig::default());
        while !state.is_terminal() {
            if brute_force(&state) == -1 {
                let eval = oracle.evaluate(&state).unwrap();
                assert_eq!(eval.value, 0.0);
                assert!(eval.action_values.values().all(|&q| q == 0.0));
                return;
            }
            let action = state.legal_actions()[0];
            state = state.apply_action(action).unwrap();
        }
        panic!("walk never hit an all-losing state");
    }

    /// Every state reachable from the empty board, deduplicated by position.
    fn enumerate_nogo(size: u8) -> Vec<GameState> {
        let root = GameState::new(Rules::NoGo, size);
        let mut seen = HashSet::new();
        let mut queue = vec![root];
        let mut out = Vec::new();
        while let Some(state) = queue.pop() {
            if !seen.insert(state.position_hash()) {
                continue;
            }
            if state.is_terminal() {
                continue;
            }
            for action in state.legal_actions() {
                queue.push(state.apply_action(action).unwrap());
            }
            out.push(state);
        }
        out
    }

    #[test]
    fn q_identity_on_all_2x2_and_3x3_nogo_states() {
        let oracle = OracleAgent::new(OracleConfig::default());
        let mut checked = 0;
        for size in [2u8, 3] {
            for state in enumerate_nogo(size) {
                let eval = oracle.evaluate(&state).unwrap();
                for (action, &q) in &eval.action_values {
                    let child = state.apply_action(*action).unwrap();
                    let child_value = if child.is_terminal() {
                        reward_to_winrate(child.terminal_result().reward_for_turn_player as i8)
                    } else {
                        oracle.evaluate(&child).unwrap().value
                    };
                    assert_eq!(q, 1.0 - child_value, "Q identity broke at {action}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000, "only {checked} (state, action) pairs seen");
    }

    #[test]
    fn policy_is_uniform_over_optimal_actions() {
        let state = GameState::new(Rules::NoGo, 3);
        let oracle = OracleAgent::new(OracleConfig::default());
        let eval = oracle.evaluate(&state).unwrap();
        let optimal: Vec<_> = eval
            .action_values
            .iter()
            .filter(|(_, &q)| q == eval.value)
            .map(|(&a, _)| a)
            .collect();
        let expected = 1.0 / optimal.len() as f64;
        for (action, &p) in &eval.policy {
            if optimal.contains(action) {
                assert_eq!(p, expected);
            } else {
                assert_eq!(p, 0.0);
            }
        }
    }

    #[test]
    fn memo_limit_reports_resource_exhaustion() {
        let oracle = OracleAgent::new(OracleConfig {
            max_plies: None,
            memo_limit: 8,
        });
        let state = GameState::new(Rules::NoGo, 4);
        assert!(matches!(
            oracle.solve(&state),
            Err(AgentError::ResourceExceeded(8))
        ));
    }

    #[test]
    fn capped_go_solver_scores_settled_boards() {
        // Black holds the whole 4x4 board with two eyes; White has nothing
        // and can only pass, so White to move loses at any horizon.
        let eyes = [Position::new(0, 0), Position::new(3, 3)];
        let mut setup = Vec::new();
        for row in 0..4u8 {
            for col in 0..4u8 {
                let pos = Position::new(row, col);
                if !eyes.contains(&pos) {
                    setup.push((Color::Black, pos));
                }
            }
        }
        let state = GameState::with_setup(Rules::go(0.5), 4, &setup, Color::White).unwrap();
        let oracle = OracleAgent::new(OracleConfig {
            max_plies: Some(8),
            memo_limit: 2_000_000,
        });
        assert_eq!(oracle.quick_value(&state).unwrap(), 0.0);
    }
}
