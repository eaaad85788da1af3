//! Fast hand-rolled policy-value provider.
//!
//! Stands in for a policy-value network at desk scale: the value is a static
//! evaluation squashed to [0, 1], the policy a softmax over per-move feature
//! scores. Deliberately naive in the same ways trained networks are fragile:
//! it counts every stone as alive and leans on the most recent move when
//! ranking candidates.

use std::collections::BTreeMap;

use crate::game::{mix64, Color, GameState, Position, Rules, TerritoryMap};

use super::{PolicyValue, Provider};

/// Influence falloff by Manhattan distance; index 0 is the stone itself.
const INFLUENCE: [f64; 4] = [3.0, 1.0, 0.5, 0.25];

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Signed influence per point: positive favors Black.
fn influence_map(state: &GameState) -> Vec<f64> {
    let size = state.size() as i32;
    let mut field = vec![0.0; (size * size) as usize];
    for stone in state.points() {
        let Some(color) = state.stone_at(stone) else {
            continue;
        };
        let sign = if color == Color::Black { 1.0 } else { -1.0 };
        let (sr, sc) = (stone.row as i32, stone.col as i32);
        for dr in -3..=3i32 {
            for dc in -3..=3i32 {
                let d = dr.abs() + dc.abs();
                if d > 3 {
                    continue;
                }
                let (r, c) = (sr + dr, sc + dc);
                if r < 0 || c < 0 || r >= size || c >= size {
                    continue;
                }
                field[(r * size + c) as usize] += sign * INFLUENCE[d as usize];
            }
        }
    }
    field
}

/// Influence-based ownership estimate in [-1, 1]. Used as the territory
/// fallback when a search produces no terminal playouts.
pub fn static_territory(state: &GameState) -> TerritoryMap {
    let field = influence_map(state);
    TerritoryMap::from_values(
        state.size(),
        field.iter().map(|&v| (0.5 * v).clamp(-1.0, 1.0)).collect(),
    )
}

/// Per-stone liberty balance: every stone contributes its group's liberty
/// count, so large weak groups weigh more than lone stones.
fn liberty_balance(state: &GameState) -> f64 {
    let mut balance = 0.0;
    for pos in state.points() {
        if let Some(color) = state.stone_at(pos) {
            let liberties = state.group_liberties(pos).unwrap_or(0) as f64;
            balance += if color == Color::Black {
                liberties
            } else {
                -liberties
            };
        }
    }
    balance
}

pub struct HeuristicProvider {
    seed: u64,
}

impl HeuristicProvider {
    pub fn new(seed: u64) -> HeuristicProvider {
        HeuristicProvider { seed }
    }

    /// Deterministic per-point noise in [0, 1); independent of board content
    /// so perturbations do not reshuffle it.
    fn jitter(&self, pos: Position, size: u8) -> f64 {
        let h = mix64(self.seed ^ (pos.index(size) as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn value(&self, state: &GameState) -> f64 {
        match state.rules() {
            Rules::Go { komi } => {
                let field = influence_map(state);
                let mut black_points = 0.0;
                let mut white_points = 0.0;
                for pos in state.points() {
                    match state.stone_at(pos) {
                        Some(Color::Black) => black_points += 1.0,
                        Some(Color::White) => white_points += 1.0,
                        None => {
                            let v = field[pos.index(state.size())];
                            if v > 0.35 {
                                black_points += 1.0;
                            } else if v < -0.35 {
                                white_points += 1.0;
                            }
                        }
                    }
                }
                let black_score =
                    black_points - white_points - komi.as_f64() + 0.05 * liberty_balance(state);
                let score = match state.turn() {
                    Color::Black => black_score,
                    Color::White => -black_score,
                };
                sigmoid(0.3 * score)
            }
            Rules::NoGo => {
                let own = state.legal_placements(state.turn()).len() as f64;
                let opp = state.legal_placements(state.turn().opponent()).len() as f64;
                sigmoid(0.3 * (own - opp))
            }
        }
    }

    fn move_score(
        &self,
        state: &GameState,
        pos: Position,
        field: &[f64],
        last_placement: Option<Position>,
    ) -> f64 {
        let color = state.turn();
        let size = state.size();
        let Some(effect) = state.placement_effect(color, pos) else {
            return f64::NEG_INFINITY;
        };
        let mut score = 0.0;
        score += 2.5 * effect.captured as f64;
        score += 1.2 * effect.opponents_in_atari as f64;
        score += 0.25 * (effect.own_liberties.min(4)) as f64;
        if effect.own_liberties == 1 {
            score -= 3.0;
        }

        let mut own_neighbors = 0;
        let mut neighbor_count = 0;
        for (dr, dc) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
            let (r, c) = (pos.row as i32 + dr, pos.col as i32 + dc);
            if r < 0 || c < 0 || r >= size as i32 || c >= size as i32 {
                continue;
            }
            neighbor_count += 1;
            if state.stone_at(Position::new(r as u8, c as u8)) == Some(color) {
                own_neighbors += 1;
            }
        }
        if state.rules().is_go() {
            // Filling a point every neighbor of which is friendly wastes a move.
            if own_neighbors == neighbor_count {
                score -= 6.0;
            }
            // Prefer contested ground over anyone's sphere of influence.
            let claim = field[pos.index(size)].abs().min(2.0);
            score += 0.6 * (1.0 - claim / 2.0);
        } else {
            score -= 0.15 * own_neighbors as f64;
        }

        let center = (size as f64 - 1.0) / 2.0;
        let center_dist = (pos.row as f64 - center).abs() + (pos.col as f64 - center).abs();
        score -= 0.08 * center_dist;

        // Strong pull toward the most recent stone. This mirrors how trained
        // policies over-weight the last move, and is what makes the provider
        // attackable through move-order tricks.
        if let Some(last) = last_placement {
            let d = (pos.row as i32 - last.row as i32).abs()
                + (pos.col as i32 - last.col as i32).abs();
            score += 1.6 / (1.0 + d as f64);
        }

        score + 0.3 * self.jitter(pos, size)
    }
}

impl Provider for HeuristicProvider {
    fn policy_value(&self, state: &GameState) -> PolicyValue {
        let field = influence_map(state);
        let last_placement = state
            .history()
            .iter()
            .rev()
            .find_map(|a| a.pos);
        let actions = state.legal_actions();
        let mut scores = Vec::with_capacity(actions.len());
        for &action in &actions {
            let score = match action.pos {
                Some(pos) => self.move_score(state, pos, &field, last_placement),
                None => -4.0,
            };
            scores.push(score);
        }

        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut policy = BTreeMap::new();
        let mut total = 0.0;
        for (&action, &score) in actions.iter().zip(&scores) {
            let weight = if score.is_finite() {
                (score - max).exp()
            } else {
                0.0
            };
            total += weight;
            policy.insert(action, weight);
        }
        if total > 0.0 {
            for p in policy.values_mut() {
                *p /= total;
            }
        } else if !policy.is_empty() {
            let uniform = 1.0 / policy.len() as f64;
            for p in policy.values_mut() {
                *p = uniform;
            }
        }

        PolicyValue {
            value: self.value(state),
            policy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Action;

    #[test]
    fn empty_boards_read_close_to_even() {
        let provider = HeuristicProvider::new(1);
        let go = GameState::new(Rules::go(0.5), 5);
        let v = provider.policy_value(&go).value;
        assert!((v - 0.5).abs() <= 0.05, "go empty board value {v}");

        let nogo = GameState::new(Rules::NoGo, 7);
        let v = provider.policy_value(&nogo).value;
        assert!((v - 0.5).abs() <= 0.05, "nogo empty board value {v}");
    }

    #[test]
    fn repeated_queries_are_identical() {
        let provider = HeuristicProvider::new(9);
        let s = GameState::new(Rules::go(7.0), 5)
            .apply_action(Action::place(Color::Black, 2, 2))
            .unwrap();
        assert_eq!(provider.policy_value(&s), provider.policy_value(&s));
    }

    #[test]
    fn policy_sums_to_one_over_legal_actions() {
        let provider = HeuristicProvider::new(2);
        let s = GameState::new(Rules::go(7.0), 5)
            .apply_action(Action::place(Color::Black, 2, 2))
            .unwrap();
        let pv = provider.policy_value(&s);
        assert_eq!(pv.policy.len(), s.legal_actions().len());
        let total: f64 = pv.policy.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn capture_dominates_the_policy() {
        // White group at (0,0)-(0,1) down to one liberty at (0,2); capturing
        // there should be Black's top-rated move.
        let s = GameState::with_setup(
            Rules::go(7.0),
            5,
            &[
                (Color::White, Position::new(0, 0)),
                (Color::White, Position::new(0, 1)),
                (Color::Black, Position::new(1, 0)),
                (Color::Black, Position::new(1, 1)),
                (Color::Black, Position::new(1, 2)),
            ],
            Color::Black,
        )
        .unwrap();
        let pv = HeuristicProvider::new(5).policy_value(&s);
        assert_eq!(pv.argmax(), Some(Action::place(Color::Black, 0, 2)));
    }

    #[test]
    fn static_territory_marks_settled_points() {
        let s = GameState::with_setup(
            Rules::go(7.0),
            5,
            &[
                (Color::Black, Position::new(1, 1)),
                (Color::Black, Position::new(1, 2)),
                (Color::Black, Position::new(2, 1)),
                (Color::Black, Position::new(2, 2)),
            ],
            Color::White,
        )
        .unwrap();
        let territory = static_territory(&s);
        assert!(territory.get(Position::new(1, 1)) > 0.8);
        assert!(territory.get(Position::new(4, 4)).abs() < 0.8);
    }
}
