//! Rules engine for Go and NoGo on square boards (4..=19).
//!
//! States are immutable values: every transition returns a fresh state and
//! leaves the input untouched, so states can be shared freely across threads.
//! Go uses area scoring after two consecutive passes and a hash-based
//! positional superko check; NoGo forbids captures and suicide, and a player
//! with no legal placement loses.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest and largest supported board edge. The engine accepts tiny boards
/// so exact solvers can be cross-checked by full enumeration; the CLI keeps
/// its own 4..=19 limit for actual runs.
pub const MIN_BOARD: u8 = 2;
pub const MAX_BOARD: u8 = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opponent(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }

    /// Single-letter form used by SGF, the engine protocol and renderings.
    pub fn letter(self) -> char {
        match self {
            Color::Black => 'B',
            Color::White => 'W',
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Zero-based board coordinate; row 0 is the top row in renderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub row: u8,
    pub col: u8,
}

impl Position {
    pub fn new(row: u8, col: u8) -> Position {
        Position { row, col }
    }

    pub fn index(self, size: u8) -> usize {
        self.row as usize * size as usize + self.col as usize
    }

    pub fn from_index(index: usize, size: u8) -> Position {
        Position {
            row: (index / size as usize) as u8,
            col: (index % size as usize) as u8,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// A stone placement or a pass. `pos: None` means pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub color: Color,
    pub pos: Option<Position>,
}

impl Action {
    pub fn place(color: Color, row: u8, col: u8) -> Action {
        Action {
            color,
            pos: Some(Position::new(row, col)),
        }
    }

    pub fn place_at(color: Color, pos: Position) -> Action {
        Action {
            color,
            pos: Some(pos),
        }
    }

    pub fn pass(color: Color) -> Action {
        Action { color, pos: None }
    }

    pub fn is_pass(self) -> bool {
        self.pos.is_none()
    }
}

// Canonical action order: placements by (row, col), pass last. All argmax
// tie-breaking in the crate relies on this.
impl Ord for Action {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self.pos, other.pos) {
            (Some(a), Some(b)) => a.cmp(&b).then(self.color.cmp(&other.color)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => self.color.cmp(&other.color),
        }
    }
}

impl PartialOrd for Action {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(p) => write!(f, "{}{}", self.color.letter(), p),
            None => write!(f, "{}[pass]", self.color.letter()),
        }
    }
}

/// Komi in half-point units so scoring comparisons stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Komi(i32);

impl Komi {
    /// Accepts only multiples of 0.5.
    pub fn from_f64(komi: f64) -> Option<Komi> {
        let doubled = komi * 2.0;
        if doubled.fract() == 0.0 && doubled.abs() <= 2000.0 {
            Some(Komi(doubled as i32))
        } else {
            None
        }
    }

    pub fn half_points(self) -> i32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for Komi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Komi {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Komi {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Komi, D::Error> {
        let v = f64::deserialize(d)?;
        Komi::from_f64(v).ok_or_else(|| serde::de::Error::custom("komi must be a multiple of 0.5"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "lowercase")]
pub enum Rules {
    Go { komi: Komi },
    NoGo,
}

impl Rules {
    pub fn go(komi: f64) -> Rules {
        Rules::Go {
            komi: Komi::from_f64(komi).expect("komi must be a multiple of 0.5"),
        }
    }

    /// Desk-scale default: komi 7 on odd boards, 7.5 on even boards.
    pub fn go_default(size: u8) -> Rules {
        if size % 2 == 1 {
            Rules::go(7.0)
        } else {
            Rules::go(7.5)
        }
    }

    pub fn is_go(self) -> bool {
        matches!(self, Rules::Go { .. })
    }

    pub fn komi(self) -> Option<Komi> {
        match self {
            Rules::Go { komi } => Some(komi),
            Rules::NoGo => None,
        }
    }
}

impl fmt::Display for Rules {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rules::Go { .. } => write!(f, "go"),
            Rules::NoGo => write!(f, "nogo"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IllegalAction {
    #[error("point {0} is off the board")]
    OffBoard(Position),
    #[error("point {0} is occupied")]
    Occupied(Position),
    #[error("move at {0} would be suicide")]
    Suicide(Position),
    #[error("move at {0} repeats an earlier position (superko)")]
    Superko(Position),
    #[error("move at {0} would capture, which NoGo forbids")]
    CaptureForbidden(Position),
    #[error("action color {got} does not match turn color {expected}")]
    WrongColor { expected: Color, got: Color },
    #[error("the game is already over")]
    TerminalState,
    #[error("setup stones produce a group with no liberties at {0}")]
    DeadSetupGroup(Position),
}

/// Reward from the turn player's point of view: +1 win, 0 draw or
/// non-terminal, -1 loss. The opponent's reward is the negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub terminal: bool,
    pub reward_for_turn_player: i32,
}

/// Per-point ownership scores in [-1, 1]; +1 is Black, -1 is White.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerritoryMap {
    size: u8,
    values: Vec<f64>,
}

impl TerritoryMap {
    pub fn zeros(size: u8) -> TerritoryMap {
        TerritoryMap {
            size,
            values: vec![0.0; size as usize * size as usize],
        }
    }

    pub fn from_values(size: u8, values: Vec<f64>) -> TerritoryMap {
        assert_eq!(values.len(), size as usize * size as usize);
        debug_assert!(values.iter().all(|v| (-1.0..=1.0).contains(v)));
        TerritoryMap { size, values }
    }

    pub fn size(&self) -> u8 {
        self.size
    }

    pub fn get(&self, pos: Position) -> f64 {
        self.values[pos.index(self.size)]
    }

    pub fn set(&mut self, pos: Position, value: f64) {
        self.values[pos.index(self.size)] = value.clamp(-1.0, 1.0);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Finalizer of splitmix64; a cheap 64-bit mixing function.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

mod zobrist {
    use super::{Color, OnceLock};

    const POINTS: usize = 19 * 19;

    pub struct Table {
        stones: [[u64; POINTS]; 2],
        white_turn: u64,
    }

    fn splitmix64(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn table() -> &'static Table {
        static TABLE: OnceLock<Table> = OnceLock::new();
        TABLE.get_or_init(|| {
            // Fixed seed keeps hashes reproducible across runs and platforms.
            let mut state = 0x7EAE_51B5_C0DE_4001u64;
            let mut stones = [[0u64; POINTS]; 2];
            for table in stones.iter_mut() {
                for key in table.iter_mut() {
                    *key = splitmix64(&mut state);
                }
            }
            Table {
                stones,
                white_turn: splitmix64(&mut state),
            }
        })
    }

    impl Table {
        pub fn stone(&self, color: Color, index: usize) -> u64 {
            self.stones[color as usize][index]
        }

        pub fn white_turn(&self) -> u64 {
            self.white_turn
        }
    }
}

/// Immutable board position with turn player, full action history and an
/// incremental (board, turn) hash.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    rules: Rules,
    size: u8,
    board: Vec<Option<Color>>,
    turn: Color,
    history: Vec<Action>,
    setup: Vec<(Color, Position)>,
    position_hash: u64,
    consecutive_passes: u8,
    seen: HashSet<u64>,
    seen_xor: u64,
}

struct Resolution {
    captured: Vec<usize>,
    new_hash: u64,
}

/// Summary of a legal placement's local consequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementEffect {
    /// Opponent stones removed by the move.
    pub captured: usize,
    /// Liberties of the mover's group once the move is resolved.
    pub own_liberties: usize,
    /// Adjacent opponent groups left with exactly one liberty.
    pub opponents_in_atari: usize,
}

impl GameState {
    pub fn new(rules: Rules, size: u8) -> GameState {
        assert!(
            (MIN_BOARD..=MAX_BOARD).contains(&size),
            "board size {size} outside {MIN_BOARD}..={MAX_BOARD}"
        );
        let mut state = GameState {
            rules,
            size,
            board: vec![None; size as usize * size as usize],
            turn: Color::Black,
            history: Vec::new(),
            setup: Vec::new(),
            position_hash: 0,
            consecutive_passes: 0,
            seen: HashSet::new(),
            seen_xor: 0,
        };
        state.record_seen(state.position_hash);
        state
    }

    /// Board with pre-placed stones (SGF AB/AW) and an explicit turn player.
    pub fn with_setup(
        rules: Rules,
        size: u8,
        setup: &[(Color, Position)],
        turn: Color,
    ) -> Result<GameState, IllegalAction> {
        let mut state = GameState::new(rules, size);
        state.seen.clear();
        state.seen_xor = 0;
        for &(color, pos) in setup {
            if pos.row >= size || pos.col >= size {
                return Err(IllegalAction::OffBoard(pos));
            }
            let idx = pos.index(size);
            if state.board[idx].is_some() {
                return Err(IllegalAction::Occupied(pos));
            }
            state.board[idx] = Some(color);
            state.position_hash ^= zobrist::table().stone(color, idx);
        }
        // Reject setups containing dead groups; the capture logic assumes
        // every group on the board has at least one liberty.
        for idx in 0..state.board.len() {
            if let Some(color) = state.board[idx] {
                let (group, liberties) = state.flood_group(idx, color, None);
                if liberties == 0 {
                    return Err(IllegalAction::DeadSetupGroup(Position::from_index(
                        group[0], size,
                    )));
                }
            }
        }
        if turn == Color::White {
            state.position_hash ^= zobrist::table().white_turn();
            state.turn = Color::White;
        }
        state.setup = setup.to_vec();
        state.record_seen(state.position_hash);
        Ok(state)
    }

    /// Replays placements without enforcing turn alternation or superko:
    /// passes are skipped, captures resolve normally, and the final state
    /// carries `actions` as its history with `turn` to move. Returns `None`
    /// if any placement is illegal.
    ///
    /// The result is a pseudo-state for feeding providers that read recent
    /// move order; it does not satisfy the history round-trip invariant and
    /// must not be used as a transition source.
    pub fn replay_free(
        rules: Rules,
        size: u8,
        setup: &[(Color, Position)],
        actions: &[Action],
        turn: Color,
    ) -> Option<GameState> {
        let mut state = GameState::with_setup(rules, size, setup, Color::Black).ok()?;
        for &action in actions {
            let Some(pos) = action.pos else { continue };
            state.turn = action.color;
            state.seen.clear(); // disable superko during free replay
            let resolution = state.resolve_placement(action.color, pos).ok()?;
            let idx = pos.index(size);
            state.board[idx] = Some(action.color);
            for &c in &resolution.captured {
                state.board[c] = None;
            }
        }
        // Recompute the hash from scratch; the incremental bookkeeping above
        // was bypassed.
        let table = zobrist::table();
        let mut hash = 0u64;
        for (idx, cell) in state.board.iter().enumerate() {
            if let Some(color) = cell {
                hash ^= table.stone(*color, idx);
            }
        }
        if turn == Color::White {
            hash ^= table.white_turn();
        }
        state.turn = turn;
        state.position_hash = hash;
        state.history = actions.to_vec();
        state.consecutive_passes = 0;
        state.seen = HashSet::from([hash]);
        state.seen_xor = hash;
        Some(state)
    }

    /// True when both states show the same stones (turn ignored).
    pub fn same_board(&self, other: &GameState) -> bool {
        self.size == other.size && self.board == other.board
    }

    /// Rebuild a state by replaying `actions` from an empty (or setup) board.
    pub fn replay(
        rules: Rules,
        size: u8,
        setup: &[(Color, Position)],
        actions: &[Action],
    ) -> Result<GameState, IllegalAction> {
        let mut state = if setup.is_empty() {
            GameState::new(rules, size)
        } else {
            GameState::with_setup(rules, size, setup, Color::Black)?
        };
        for &a in actions {
            state = state.apply_action(a)?;
        }
        Ok(state)
    }

    fn record_seen(&mut self, hash: u64) {
        if self.seen.insert(hash) {
            self.seen_xor ^= hash;
        }
    }

    pub fn rules(&self) -> Rules {
        self.rules
    }

    pub fn size(&self) -> u8 {
        self.size
    }

    pub fn turn(&self) -> Color {
        self.turn
    }

    pub fn history(&self) -> &[Action] {
        &self.history
    }

    pub fn setup(&self) -> &[(Color, Position)] {
        &self.setup
    }

    pub fn position_hash(&self) -> u64 {
        self.position_hash
    }

    /// Order-independent fingerprint of every (board, turn) hash reached so
    /// far; distinguishes equal positions with different superko contexts.
    pub fn seen_fingerprint(&self) -> u64 {
        self.seen_xor
    }

    /// Cache key for agent evaluations. Folds the last few actions into the
    /// position hash because agent outputs may depend on recent move order,
    /// not just the board; two states with equal keys are indistinguishable
    /// to every built-in agent.
    pub fn eval_key(&self) -> u64 {
        let mut key = self.position_hash;
        for action in self.history.iter().rev().take(4) {
            let code = match action.pos {
                Some(p) => 2 + p.index(self.size) as u64 * 2 + action.color as u64,
                None => action.color as u64,
            };
            key = mix64(key ^ code.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        key
    }

    pub fn consecutive_passes(&self) -> u8 {
        self.consecutive_passes
    }

    pub fn stone_at(&self, pos: Position) -> Option<Color> {
        self.board[pos.index(self.size)]
    }

    pub fn points(&self) -> impl Iterator<Item = Position> + '_ {
        let size = self.size;
        (0..size as usize * size as usize).map(move |i| Position::from_index(i, size))
    }

    pub fn stones(&self, color: Color) -> usize {
        self.board.iter().filter(|&&c| c == Some(color)).count()
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> {
        let size = self.size as usize;
        let row = idx / size;
        let col = idx % size;
        let mut out = [usize::MAX; 4];
        let mut n = 0;
        if row > 0 {
            out[n] = idx - size;
            n += 1;
        }
        if row + 1 < size {
            out[n] = idx + size;
            n += 1;
        }
        if col > 0 {
            out[n] = idx - 1;
            n += 1;
        }
        if col + 1 < size {
            out[n] = idx + 1;
            n += 1;
        }
        out.into_iter().take(n)
    }

    /// Flood-fill the group containing `start`, optionally pretending one
    /// extra point is occupied by `extra`. Returns (group points, liberties).
    fn flood_group(
        &self,
        start: usize,
        color: Color,
        extra: Option<(usize, Color)>,
    ) -> (Vec<usize>, usize) {
        let cell = |i: usize| -> Option<Color> {
            match extra {
                Some((fi, fc)) if fi == i => Some(fc),
                _ => self.board[i],
            }
        };
        let mut group = vec![start];
        let mut visited = vec![false; self.board.len()];
        visited[start] = true;
        let mut liberties: Vec<usize> = Vec::new();
        let mut cursor = 0;
        while cursor < group.len() {
            let idx = group[cursor];
            cursor += 1;
            for n in self.neighbors(idx) {
                match cell(n) {
                    None => {
                        if !liberties.contains(&n) {
                            liberties.push(n);
                        }
                    }
                    Some(c) if c == color && !visited[n] => {
                        visited[n] = true;
                        group.push(n);
                    }
                    _ => {}
                }
            }
        }
        (group, liberties.len())
    }

    /// Capture resolution and legality for a stone placement, without
    /// constructing the successor state.
    fn resolve_placement(&self, color: Color, pos: Position) -> Result<Resolution, IllegalAction> {
        if pos.row >= self.size || pos.col >= self.size {
            return Err(IllegalAction::OffBoard(pos));
        }
        let idx = pos.index(self.size);
        if self.board[idx].is_some() {
            return Err(IllegalAction::Occupied(pos));
        }

        let opponent = color.opponent();
        let mut captured: Vec<usize> = Vec::new();
        for n in self.neighbors(idx) {
            if self.board[n] == Some(opponent) && !captured.contains(&n) {
                let (group, liberties) = self.flood_group(n, opponent, Some((idx, color)));
                if liberties == 0 {
                    if !self.rules.is_go() {
                        return Err(IllegalAction::CaptureForbidden(pos));
                    }
                    captured.extend(group);
                }
            }
        }

        // A capture always opens at least one liberty for the new stone.
        if captured.is_empty() {
            let (_, own_liberties) = self.flood_group(idx, color, Some((idx, color)));
            if own_liberties == 0 {
                return Err(IllegalAction::Suicide(pos));
            }
        }

        let table = zobrist::table();
        let mut new_hash = self.position_hash ^ table.stone(color, idx) ^ table.white_turn();
        for &c in &captured {
            new_hash ^= table.stone(opponent, c);
        }
        if self.rules.is_go() && self.seen.contains(&new_hash) {
            return Err(IllegalAction::Superko(pos));
        }

        Ok(Resolution { captured, new_hash })
    }

    fn check_action(&self, action: Action) -> Result<Option<Resolution>, IllegalAction> {
        if self.is_terminal() {
            return Err(IllegalAction::TerminalState);
        }
        if action.color != self.turn {
            return Err(IllegalAction::WrongColor {
                expected: self.turn,
                got: action.color,
            });
        }
        match action.pos {
            None => Ok(None),
            Some(pos) => Ok(Some(self.resolve_placement(action.color, pos)?)),
        }
    }

    pub fn is_legal(&self, action: Action) -> bool {
        self.check_action(action).is_ok()
    }

    /// The transition function: returns the successor state, leaving `self`
    /// untouched. Pass is always accepted here, including under NoGo where it
    /// is not part of the legal action set (the perturbation machinery needs
    /// the transition to exist).
    pub fn apply_action(&self, action: Action) -> Result<GameState, IllegalAction> {
        let resolution = self.check_action(action)?;
        let mut next = self.clone();
        next.history.push(action);
        next.turn = self.turn.opponent();
        match resolution {
            None => {
                next.consecutive_passes += 1;
                next.position_hash ^= zobrist::table().white_turn();
            }
            Some(res) => {
                next.consecutive_passes = 0;
                let idx = action.pos.expect("placement has a position").index(self.size);
                next.board[idx] = Some(action.color);
                for &c in &res.captured {
                    next.board[c] = None;
                }
                next.position_hash = res.new_hash;
            }
        }
        next.record_seen(next.position_hash);
        Ok(next)
    }

    /// All actions the turn player may take: placements plus pass under Go,
    /// placements only under NoGo. Empty when the state is terminal.
    pub fn legal_actions(&self) -> Vec<Action> {
        if self.is_terminal() {
            return Vec::new();
        }
        let mut actions = self.legal_placements(self.turn);
        if self.rules.is_go() {
            actions.push(Action::pass(self.turn));
        }
        actions
    }

    /// Legal stone placements for `color` on the current board, regardless of
    /// whose turn it is. Used by the perturbation candidate universe and the
    /// NoGo termination test.
    pub fn legal_placements(&self, color: Color) -> Vec<Action> {
        let mut actions = Vec::new();
        for pos in self.points() {
            if self.board[pos.index(self.size)].is_none()
                && self.resolve_placement(color, pos).is_ok()
            {
                actions.push(Action::place_at(color, pos));
            }
        }
        actions
    }

    pub fn is_terminal(&self) -> bool {
        match self.rules {
            Rules::Go { .. } => self.consecutive_passes >= 2,
            Rules::NoGo => self
                .points()
                .all(|pos| self.resolve_placement(self.turn, pos).is_err()),
        }
    }

    /// Liberties of the group occupying `pos`; `None` for empty points.
    pub fn group_liberties(&self, pos: Position) -> Option<usize> {
        let idx = pos.index(self.size);
        let color = self.board[idx]?;
        Some(self.flood_group(idx, color, None).1)
    }

    /// What a legal placement would do to the board, for move scoring.
    /// Returns `None` when the placement is illegal.
    pub fn placement_effect(&self, color: Color, pos: Position) -> Option<PlacementEffect> {
        let resolution = self.resolve_placement(color, pos).ok()?;
        let idx = pos.index(self.size);
        let mut board = self.board.clone();
        board[idx] = Some(color);
        for &c in &resolution.captured {
            board[c] = None;
        }
        let scratch = GameState {
            board,
            ..self.clone()
        };
        let (_, own_liberties) = scratch.flood_group(idx, color, None);
        let mut opponents_in_atari = 0;
        let mut seen_groups: Vec<usize> = Vec::new();
        for n in scratch.neighbors(idx) {
            if scratch.board[n] == Some(color.opponent()) && !seen_groups.contains(&n) {
                let (group, liberties) = scratch.flood_group(n, color.opponent(), None);
                seen_groups.extend(group);
                if liberties == 1 {
                    opponents_in_atari += 1;
                }
            }
        }
        Some(PlacementEffect {
            captured: resolution.captured.len(),
            own_liberties,
            opponents_in_atari,
        })
    }

    /// Plays `action` while keeping the turn player fixed, by inserting a pass
    /// on whichever side needs one.
    pub fn skip_play(&self, action: Action) -> Result<GameState, IllegalAction> {
        let result = if action.color == self.turn {
            self.apply_action(action)?
                .apply_action(Action::pass(self.turn.opponent()))?
        } else {
            self.apply_action(Action::pass(self.turn))?
                .apply_action(action)?
        };
        debug_assert_eq!(result.turn, self.turn);
        Ok(result)
    }

    /// Area owned by each color: stones plus empty regions bordered by that
    /// color alone (Tromp-Taylor counting).
    pub fn area(&self) -> (usize, usize) {
        let territory = self.exact_territory();
        let mut black = 0;
        let mut white = 0;
        for &v in territory.values() {
            if v > 0.0 {
                black += 1;
            } else if v < 0.0 {
                white += 1;
            }
        }
        (black, white)
    }

    /// Flood-fill area ownership: stones score +/-1 for their color, empty
    /// regions score +/-1 when bordered by a single color, 0 otherwise.
    pub fn exact_territory(&self) -> TerritoryMap {
        let total = self.board.len();
        let mut map = TerritoryMap::zeros(self.size);
        let mut visited = vec![false; total];
        for idx in 0..total {
            match self.board[idx] {
                Some(Color::Black) => map.values[idx] = 1.0,
                Some(Color::White) => map.values[idx] = -1.0,
                None => {
                    if visited[idx] {
                        continue;
                    }
                    let mut region = vec![idx];
                    visited[idx] = true;
                    let mut borders_black = false;
                    let mut borders_white = false;
                    let mut cursor = 0;
                    while cursor < region.len() {
                        let p = region[cursor];
                        cursor += 1;
                        for n in self.neighbors(p) {
                            match self.board[n] {
                                Some(Color::Black) => borders_black = true,
                                Some(Color::White) => borders_white = true,
                                None => {
                                    if !visited[n] {
                                        visited[n] = true;
                                        region.push(n);
                                    }
                                }
                            }
                        }
                    }
                    let value = match (borders_black, borders_white) {
                        (true, false) => 1.0,
                        (false, true) => -1.0,
                        _ => 0.0,
                    };
                    for &p in &region {
                        map.values[p] = value;
                    }
                }
            }
        }
        map
    }

    pub fn terminal_result(&self) -> GameOutcome {
        if !self.is_terminal() {
            return GameOutcome {
                terminal: false,
                reward_for_turn_player: 0,
            };
        }
        let reward = match self.rules {
            Rules::Go { komi } => {
                let (black, white) = self.area();
                // Score difference for Black, in half points.
                let diff = 2 * (black as i32 - white as i32) - komi.half_points();
                let black_reward = diff.signum();
                match self.turn {
                    Color::Black => black_reward,
                    Color::White => -black_reward,
                }
            }
            // The player to move has no legal placement and loses.
            Rules::NoGo => -1,
        };
        GameOutcome {
            terminal: true,
            reward_for_turn_player: reward,
        }
    }
}

impl fmt::Display for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..self.size {
            for col in 0..self.size {
                let glyph = match self.board[Position::new(row, col).index(self.size)] {
                    Some(Color::Black) => 'X',
                    Some(Color::White) => 'O',
                    None => '.',
                };
                write!(f, "{glyph} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "turn: {}", self.turn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn go5() -> GameState {
        GameState::new(Rules::go(0.5), 5)
    }

    #[test]
    fn first_move_places_stone_and_flips_turn() {
        let s = go5();
        let next = s.apply_action(Action::place(Color::Black, 2, 2)).unwrap();
        assert_eq!(next.stone_at(Position::new(2, 2)), Some(Color::Black));
        assert_eq!(next.turn(), Color::White);
        assert_eq!(next.stones(Color::Black), 1);
        assert_eq!(s.stones(Color::Black), 0, "input state must stay unmodified");
    }

    #[test]
    fn single_stone_capture_removes_stone() {
        // White stone in the corner with one liberty at (0,0)... place it at
        // (0,0) with liberty (0,1)? Corner stone has two liberties, so pin it
        // with one black stone first.
        let s = GameState::with_setup(
            Rules::go(0.5),
            5,
            &[
                (Color::White, Position::new(0, 0)),
                (Color::Black, Position::new(1, 0)),
            ],
            Color::Black,
        )
        .unwrap();
        let next = s.apply_action(Action::place(Color::Black, 0, 1)).unwrap();
        assert_eq!(next.stone_at(Position::new(0, 0)), None);
        assert_eq!(next.stones(Color::White), 0);
    }

    #[test]
    fn nogo_rejects_captures_and_suicide() {
        let capture_setup = GameState::with_setup(
            Rules::NoGo,
            5,
            &[
                (Color::White, Position::new(0, 0)),
                (Color::Black, Position::new(1, 0)),
            ],
            Color::Black,
        )
        .unwrap();
        assert_eq!(
            capture_setup.apply_action(Action::place(Color::Black, 0, 1)),
            Err(IllegalAction::CaptureForbidden(Position::new(0, 1)))
        );

        let suicide_setup = GameState::with_setup(
            Rules::NoGo,
            5,
            &[
                (Color::White, Position::new(0, 1)),
                (Color::White, Position::new(1, 0)),
            ],
            Color::Black,
        )
        .unwrap();
        assert_eq!(
            suicide_setup.apply_action(Action::place(Color::Black, 0, 0)),
            Err(IllegalAction::Suicide(Position::new(0, 0)))
        );
    }

    #[test]
    fn empty_board_has_all_placements_plus_pass() {
        let s = go5();
        let actions = s.legal_actions();
        assert_eq!(actions.len(), 26);
        assert!(actions.last().unwrap().is_pass());
    }

    #[test]
    fn terminal_state_has_no_actions() {
        let s = go5()
            .apply_action(Action::pass(Color::Black))
            .unwrap()
            .apply_action(Action::pass(Color::White))
            .unwrap();
        assert!(s.is_terminal());
        assert!(s.legal_actions().is_empty());
        assert_eq!(
            s.apply_action(Action::place(Color::Black, 0, 0)),
            Err(IllegalAction::TerminalState)
        );
    }

    #[test]
    fn wrong_color_rejected() {
        let s = go5();
        assert!(matches!(
            s.apply_action(Action::place(Color::White, 0, 0)),
            Err(IllegalAction::WrongColor { .. })
        ));
    }

    #[test]
    fn double_pass_on_empty_board_scores_komi() {
        let s = go5()
            .apply_action(Action::pass(Color::Black))
            .unwrap()
            .apply_action(Action::pass(Color::White))
            .unwrap();
        let outcome = s.terminal_result();
        assert!(outcome.terminal);
        // Empty board: both areas 0, komi 0.5 means White wins; Black to move.
        assert_eq!(s.turn(), Color::Black);
        assert_eq!(outcome.reward_for_turn_player, -1);
    }

    #[test]
    fn nonterminal_has_zero_reward() {
        let s = go5().apply_action(Action::place(Color::Black, 2, 2)).unwrap();
        let outcome = s.terminal_result();
        assert!(!outcome.terminal);
        assert_eq!(outcome.reward_for_turn_player, 0);
    }

    #[test]
    fn skip_play_keeps_turn_both_cases() {
        let s = go5();
        let own = s.skip_play(Action::place(Color::Black, 3, 3)).unwrap();
        assert_eq!(own.turn(), Color::Black);
        assert_eq!(own.history().len(), 2);
        assert!(own.history()[1].is_pass());

        let other = s.skip_play(Action::place(Color::White, 0, 4)).unwrap();
        assert_eq!(other.turn(), Color::Black);
        assert!(other.history()[0].is_pass());
    }

    #[test]
    fn simple_ko_is_rejected() {
        // Classic ko shape on 5x5:
        //   . X O .
        //   X . . O     <- Black plays (1,1)? Build directly with setup.
        let s = GameState::with_setup(
            Rules::go(0.5),
            5,
            &[
                (Color::Black, Position::new(0, 1)),
                (Color::Black, Position::new(1, 0)),
                (Color::Black, Position::new(2, 1)),
                (Color::White, Position::new(0, 2)),
                (Color::White, Position::new(1, 3)),
                (Color::White, Position::new(2, 2)),
                (Color::White, Position::new(1, 1)),
            ],
            Color::Black,
        )
        .unwrap();
        // Black captures the ko at (1,2).
        let after_capture = s.apply_action(Action::place(Color::Black, 1, 2)).unwrap();
        assert_eq!(after_capture.stone_at(Position::new(1, 1)), None);
        // White recapturing at (1,1) would repeat the position.
        assert_eq!(
            after_capture.apply_action(Action::place(Color::White, 1, 1)),
            Err(IllegalAction::Superko(Position::new(1, 1)))
        );
    }

    #[test]
    fn territory_flood_fill_and_scoring() {
        // 3x3 board: Black wall on column 1 owns the left side... build a
        // settled position: Black column 1, White column 2 leaves column 0
        // black territory and no white territory.
        //   . X O
        //   . X O
        //   . X O
        let s = GameState::with_setup(
            Rules::go(0.5),
            4,
            &[
                (Color::Black, Position::new(0, 1)),
                (Color::Black, Position::new(1, 1)),
                (Color::Black, Position::new(2, 1)),
                (Color::Black, Position::new(3, 1)),
                (Color::White, Position::new(0, 2)),
                (Color::White, Position::new(1, 2)),
                (Color::White, Position::new(2, 2)),
                (Color::White, Position::new(3, 2)),
            ],
            Color::Black,
        )
        .unwrap();
        let territory = s.exact_territory();
        assert_eq!(territory.get(Position::new(1, 0)), 1.0);
        assert_eq!(territory.get(Position::new(1, 1)), 1.0);
        assert_eq!(territory.get(Position::new(1, 2)), -1.0);
        assert_eq!(territory.get(Position::new(1, 3)), -1.0);
        let (black, white) = s.area();
        assert_eq!((black, white), (8, 8));
    }

    #[test]
    fn nogo_pass_is_transition_but_not_legal_action() {
        let s = GameState::new(Rules::NoGo, 5);
        assert!(s.legal_actions().iter().all(|a| !a.is_pass()));
        // The transition still exists for the perturbation machinery.
        let after = s.apply_action(Action::pass(Color::Black)).unwrap();
        assert_eq!(after.turn(), Color::White);
    }

    #[test]
    fn action_order_places_before_pass() {
        let mut actions = vec![
            Action::pass(Color::Black),
            Action::place(Color::Black, 1, 0),
            Action::place(Color::Black, 0, 3),
        ];
        actions.sort();
        assert_eq!(actions[0], Action::place(Color::Black, 0, 3));
        assert_eq!(actions[1], Action::place(Color::Black, 1, 0));
        assert!(actions[2].is_pass());
    }

    #[test]
    fn komi_rejects_non_half_values() {
        assert!(Komi::from_f64(7.0).is_some());
        assert!(Komi::from_f64(7.5).is_some());
        assert!(Komi::from_f64(7.25).is_none());
    }
}
