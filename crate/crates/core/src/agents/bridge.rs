//! Client and server for the line-based engine analysis protocol.
//!
//! Requests are single newline-terminated lines on the engine's stdin;
//! every request gets exactly one response line on stdout, `= [payload]` on
//! success or `? message` on failure. Supported verbs:
//!
//! ```text
//! name | rules <go|nogo> | boardsize <n> | komi <f> | clear_board
//! setup <b|w> <vertex> | play <b|w> <vertex|pass> | analyze <visits> | quit
//! ```
//!
//! The `analyze` payload is a flat key-value list: `winrate <f>` for the
//! root, repeated `move <vertex> prior <f> visits <n> [q <f>]` groups, and
//! an optional `ownership <f>...` block of exactly N*N values. Unknown keys
//! are skipped with their value token.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use crate::game::{Action, Color, GameState, Position, Rules, TerritoryMap};

use super::{AgentConfig, AgentError, Evaluation, Evaluator, MctsAgent, Provider};

/// GTP-style column letters; `I` is skipped in display coordinates only.
const COLUMNS: &[u8] = b"ABCDEFGHJKLMNOPQRST";

/// Engine-protocol vertex for a board position, e.g. `C3`. Row numbers count
/// from the bottom of the board.
pub fn vertex(pos: Position, size: u8) -> String {
    format!(
        "{}{}",
        COLUMNS[pos.col as usize] as char,
        size - pos.row
    )
}

pub fn parse_vertex(token: &str, size: u8) -> Option<Position> {
    let token = token.to_ascii_uppercase();
    let mut chars = token.chars();
    let col_letter = chars.next()?;
    let col = COLUMNS.iter().position(|&c| c as char == col_letter)? as u8;
    let row_num: u8 = chars.as_str().parse().ok()?;
    if col >= size || row_num == 0 || row_num > size {
        return None;
    }
    Some(Position::new(size - row_num, col))
}

fn parse_color(token: &str) -> Option<Color> {
    match token.to_ascii_lowercase().as_str() {
        "b" | "black" => Some(Color::Black),
        "w" | "white" => Some(Color::White),
        _ => None,
    }
}

/// Parsed `analyze` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub winrate: f64,
    pub moves: Vec<MoveInfo>,
    pub ownership: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoveInfo {
    pub action: Action,
    pub prior: f64,
    pub visits: u64,
    pub q: Option<f64>,
}

/// Parse the payload (the response line minus its `= ` prefix).
pub fn parse_analysis(payload: &str, turn: Color, size: u8) -> Result<Analysis, AgentError> {
    let proto = |msg: String| AgentError::Protocol(msg);
    let tokens: Vec<&str> = payload.split_whitespace().collect();
    let mut i = 0;
    let mut winrate: Option<f64> = None;
    let mut moves: Vec<MoveInfo> = Vec::new();
    let mut ownership: Option<Vec<f64>> = None;

    let take = |i: &mut usize| -> Result<&str, AgentError> {
        let t = tokens
            .get(*i)
            .ok_or_else(|| proto("payload ended mid-field".into()))?;
        *i += 1;
        Ok(t)
    };

    while i < tokens.len() {
        let key = take(&mut i)?;
        match key {
            "winrate" => {
                let v: f64 = take(&mut i)?
                    .parse()
                    .map_err(|_| proto("bad winrate value".into()))?;
                winrate = Some(v);
            }
            "move" => {
                let token = take(&mut i)?;
                let action = if token.eq_ignore_ascii_case("pass") {
                    Action::pass(turn)
                } else {
                    Action::place_at(
                        turn,
                        parse_vertex(token, size)
                            .ok_or_else(|| proto(format!("bad vertex {token}")))?,
                    )
                };
                moves.push(MoveInfo {
                    action,
                    prior: 0.0,
                    visits: 0,
                    q: None,
                });
            }
            "prior" | "visits" | "q" => {
                let value = take(&mut i)?;
                let info = moves
                    .last_mut()
                    .ok_or_else(|| proto(format!("{key} before any move", key = key)))?;
                match key {
                    "prior" => {
                        info.prior = value.parse().map_err(|_| proto("bad prior".into()))?
                    }
                    "visits" => {
                        info.visits = value.parse().map_err(|_| proto("bad visits".into()))?
                    }
                    _ => info.q = Some(value.parse().map_err(|_| proto("bad q".into()))?),
                }
            }
            "ownership" => {
                let n = size as usize * size as usize;
                let mut values = Vec::with_capacity(n);
                for _ in 0..n {
                    let v: f64 = take(&mut i)?
                        .parse()
                        .map_err(|_| proto("bad ownership value".into()))?;
                    if !(-1.0..=1.0).contains(&v) {
                        return Err(proto(format!("ownership value {v} outside [-1, 1]")));
                    }
                    values.push(v);
                }
                ownership = Some(values);
            }
            _ => {
                // Unknown single-value field; skip its value.
                take(&mut i)?;
            }
        }
    }

    Ok(Analysis {
        winrate: winrate.ok_or_else(|| proto("payload carries no winrate".into()))?,
        moves,
        ownership,
    })
}

fn analysis_to_evaluation(analysis: Analysis, size: u8) -> Evaluation {
    let mut policy = BTreeMap::new();
    let mut action_values = BTreeMap::new();
    let mut visits = BTreeMap::new();
    let mut prior_total = 0.0;
    for info in &analysis.moves {
        prior_total += info.prior;
        policy.insert(info.action, info.prior);
        visits.insert(info.action, info.visits);
        if let Some(q) = info.q {
            action_values.insert(info.action, q);
        }
    }
    if prior_total > 0.0 {
        for p in policy.values_mut() {
            *p /= prior_total;
        }
    }
    Evaluation {
        value: analysis.winrate,
        policy,
        action_values,
        territory: analysis
            .ownership
            .map(|values| TerritoryMap::from_values(size, values)),
        visits,
    }
}

#[derive(Debug, Clone)]
pub struct EngineBridgeConfig {
    /// Program and whitespace-separated arguments.
    pub command: String,
    /// Visit budget passed to `analyze`.
    pub visits: u32,
    pub timeout: Duration,
}

impl EngineBridgeConfig {
    pub fn new(command: impl Into<String>, visits: u32) -> EngineBridgeConfig {
        EngineBridgeConfig {
            command: command.into(),
            visits,
            timeout: Duration::from_secs(30),
        }
    }
}

struct BridgeInner {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<Option<String>>,
}

/// Evaluator backed by an external engine process speaking the analysis
/// protocol over stdin/stdout.
pub struct EngineBridge {
    cfg: EngineBridgeConfig,
    inner: RefCell<BridgeInner>,
}

impl EngineBridge {
    pub fn spawn(cfg: EngineBridgeConfig) -> Result<EngineBridge, AgentError> {
        let mut parts = cfg.command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| AgentError::Protocol("empty engine command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| AgentError::EngineCrashed(format!("spawn failed: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                match line {
                    Ok(line) => {
                        if tx.send(Some(line)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(None);
        });
        Ok(EngineBridge {
            cfg,
            inner: RefCell::new(BridgeInner {
                child,
                stdin,
                lines: rx,
            }),
        })
    }

    /// Send one request line and return the response payload (without the
    /// leading `=`).
    fn request(&self, line: &str) -> Result<String, AgentError> {
        let mut inner = self.inner.borrow_mut();
        writeln!(inner.stdin, "{line}")
            .and_then(|_| inner.stdin.flush())
            .map_err(|e| AgentError::EngineCrashed(format!("write failed: {e}")))?;
        match inner.lines.recv_timeout(self.cfg.timeout) {
            Ok(Some(response)) => {
                let response = response.trim();
                if let Some(payload) = response.strip_prefix('=') {
                    Ok(payload.trim().to_string())
                } else if let Some(message) = response.strip_prefix('?') {
                    Err(AgentError::Protocol(format!(
                        "engine rejected `{line}`: {}",
                        message.trim()
                    )))
                } else {
                    Err(AgentError::Protocol(format!(
                        "malformed response line: {response:?}"
                    )))
                }
            }
            Ok(None) => Err(AgentError::EngineCrashed("engine closed stdout".into())),
            Err(_) => Err(AgentError::Timeout(self.cfg.timeout)),
        }
    }

    fn sync_state(&self, state: &GameState) -> Result<(), AgentError> {
        self.request(&format!("rules {}", state.rules()))?;
        self.request(&format!("boardsize {}", state.size()))?;
        if let Some(komi) = state.rules().komi() {
            self.request(&format!("komi {komi}"))?;
        }
        self.request("clear_board")?;
        for &(color, pos) in state.setup() {
            self.request(&format!(
                "setup {} {}",
                color.letter().to_ascii_lowercase(),
                vertex(pos, state.size())
            ))?;
        }
        for action in state.history() {
            let spot = match action.pos {
                Some(pos) => vertex(pos, state.size()),
                None => "pass".to_string(),
            };
            self.request(&format!(
                "play {} {spot}",
                action.color.letter().to_ascii_lowercase()
            ))?;
        }
        Ok(())
    }

    fn analyze(&self, state: &GameState, visits: u32) -> Result<Evaluation, AgentError> {
        self.sync_state(state)?;
        let payload = self.request(&format!("analyze {visits}"))?;
        let analysis = parse_analysis(&payload, state.turn(), state.size())?;
        Ok(analysis_to_evaluation(analysis, state.size()))
    }
}

impl Evaluator for EngineBridge {
    fn evaluate(&self, state: &GameState) -> Result<Evaluation, AgentError> {
        if state.is_terminal() {
            return Err(AgentError::TerminalState);
        }
        self.analyze(state, self.cfg.visits)
    }

    fn quick_value(&self, state: &GameState) -> Result<f64, AgentError> {
        if state.is_terminal() {
            return Err(AgentError::TerminalState);
        }
        Ok(self.analyze(state, 1)?.value)
    }

    fn simulations(&self) -> u32 {
        self.cfg.visits
    }
}

impl Drop for EngineBridge {
    fn drop(&mut self) {
        let inner = self.inner.get_mut();
        let _ = writeln!(inner.stdin, "quit");
        let _ = inner.child.kill();
        let _ = inner.child.wait();
    }
}

/// Serialize an ownership vector so it round-trips bit-exactly (Rust's float
/// formatting emits the shortest digits that reparse to the same value).
pub fn format_ownership(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Options for the server side of the protocol.
#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub seed: u64,
    pub puct_constant: f64,
}

impl Default for ServeConfig {
    fn default() -> ServeConfig {
        ServeConfig {
            seed: 0,
            puct_constant: 1.25,
        }
    }
}

/// Serve the analysis protocol on arbitrary reader/writer pairs, backed by
/// the built-in search agent over `provider`. Returns on `quit` or EOF.
pub fn serve<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    provider_factory: impl Fn(u64) -> Box<dyn Provider>,
    cfg: ServeConfig,
) -> std::io::Result<()> {
    let mut rules = Rules::go_default(9);
    let mut size: u8 = 9;
    let mut setup: Vec<(Color, Position)> = Vec::new();
    let mut state = GameState::new(rules, size);

    for line in input.lines() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(verb) = parts.next() else {
            continue;
        };
        let args: Vec<&str> = parts.collect();
        let mut reply: Result<String, String> = Ok(String::new());

        match verb {
            "name" => reply = Ok("tenuki".into()),
            "rules" => match args.first().map(|s| s.to_ascii_lowercase()).as_deref() {
                Some("go") => {
                    rules = Rules::go_default(size);
                    setup.clear();
                    state = GameState::new(rules, size);
                }
                Some("nogo") => {
                    rules = Rules::NoGo;
                    setup.clear();
                    state = GameState::new(rules, size);
                }
                _ => reply = Err("rules wants go or nogo".into()),
            },
            "boardsize" => match args.first().and_then(|s| s.parse::<u8>().ok()) {
                Some(n) if (crate::game::MIN_BOARD..=crate::game::MAX_BOARD).contains(&n) => {
                    size = n;
                    if rules.is_go() {
                        rules = Rules::go_default(size);
                    }
                    setup.clear();
                    state = GameState::new(rules, size);
                }
                _ => reply = Err("bad boardsize".into()),
            },
            "komi" => match args.first().and_then(|s| s.parse::<f64>().ok()) {
                Some(k) if rules.is_go() => match crate::game::Komi::from_f64(k) {
                    Some(komi) => {
                        rules = Rules::Go { komi };
                        setup.clear();
                        state = GameState::new(rules, size);
                    }
                    None => reply = Err("komi must be a multiple of 0.5".into()),
                },
                _ => reply = Err("komi applies to go only".into()),
            },
            "clear_board" => {
                setup.clear();
                state = GameState::new(rules, size);
            }
            "setup" => {
                let parsed = args
                    .first()
                    .and_then(|c| parse_color(c))
                    .zip(args.get(1).and_then(|v| parse_vertex(v, size)));
                match parsed {
                    Some((color, pos)) if state.history().is_empty() => {
                        setup.push((color, pos));
                        match GameState::with_setup(rules, size, &setup, Color::Black) {
                            Ok(s) => state = s,
                            Err(e) => {
                                setup.pop();
                                reply = Err(format!("illegal setup: {e}"));
                            }
                        }
                    }
                    Some(_) => reply = Err("setup only allowed before moves".into()),
                    None => reply = Err("setup wants a color and a vertex".into()),
                }
            }
            "play" => {
                let color = args.first().and_then(|c| parse_color(c));
                let action = match (color, args.get(1)) {
                    (Some(color), Some(v)) if v.eq_ignore_ascii_case("pass") => {
                        Some(Action::pass(color))
                    }
                    (Some(color), Some(v)) => {
                        parse_vertex(v, size).map(|pos| Action::place_at(color, pos))
                    }
                    _ => None,
                };
                match action {
                    Some(action) => match state.apply_action(action) {
                        Ok(next) => state = next,
                        Err(e) => reply = Err(format!("illegal move: {e}")),
                    },
                    None => reply = Err("play wants a color and a vertex".into()),
                }
            }
            "analyze" => match args.first().and_then(|s| s.parse::<u32>().ok()) {
                Some(visits) if visits >= 1 => {
                    if state.is_terminal() {
                        reply = Err("state is terminal".into());
                    } else {
                        let agent = MctsAgent::new(
                            provider_factory(cfg.seed),
                            AgentConfig {
                                simulations: visits,
                                puct_constant: cfg.puct_constant,
                                seed: cfg.seed,
                            },
                        );
                        match agent.evaluate(&state) {
                            Ok(eval) => {
                                let mut payload = format!("winrate {}", eval.value);
                                for (action, prior) in &eval.policy {
                                    let spot = match action.pos {
                                        Some(pos) => vertex(pos, size),
                                        None => "pass".to_string(),
                                    };
                                    payload.push_str(&format!(
                                        " move {spot} prior {prior} visits {}",
                                        eval.visits.get(action).copied().unwrap_or(0)
                                    ));
                                    if let Some(q) = eval.action_values.get(action) {
                                        payload.push_str(&format!(" q {q}"));
                                    }
                                }
                                if let Some(territory) = &eval.territory {
                                    payload.push_str(" ownership ");
                                    payload.push_str(&format_ownership(territory.values()));
                                }
                                reply = Ok(payload);
                            }
                            Err(e) => reply = Err(format!("analysis failed: {e}")),
                        }
                    }
                }
                _ => reply = Err("analyze wants a positive visit budget".into()),
            },
            "quit" => {
                writeln!(output, "=")?;
                output.flush()?;
                return Ok(());
            }
            _ => reply = Err(format!("unknown command {verb}")),
        }

        match reply {
            Ok(payload) if payload.is_empty() => writeln!(output, "=")?,
            Ok(payload) => writeln!(output, "= {payload}")?,
            Err(message) => writeln!(output, "? {message}")?,
        }
        output.flush()?;
    }
    Ok(())
}
