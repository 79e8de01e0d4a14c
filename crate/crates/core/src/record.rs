//! Per-decision record written by the game server and read back by the
//! inference pipeline. One JSON object per line with exactly these keys:
//! `index, strategy, last_strategy, last_income, neighbor_index,
//! neighbor_income, R, x, vector, time`.

use serde::{Deserialize, Serialize};

use crate::model::Strategy;

/// The displayed neighbour. The server records the node index; older
/// exports that stored the neighbour's strategy under this key are also
/// accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NeighborRef {
    Index(usize),
    Strategy(Strategy),
}

/// Reward scheme of a game: individual performance (1) or winner-group
/// only (2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum GameType {
    Individual,
    Group,
}

impl GameType {
    pub fn number(self) -> u8 {
        match self {
            GameType::Individual => 1,
            GameType::Group => 2,
        }
    }
}

impl TryFrom<u8> for GameType {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(GameType::Individual),
            2 => Ok(GameType::Group),
            _ => Err(format!("game type must be 1 or 2, got {v}")),
        }
    }
}

impl From<GameType> for u8 {
    fn from(g: GameType) -> u8 {
        g.number()
    }
}

impl std::fmt::Display for GameType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl std::str::FromStr for GameType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse::<u8>().map_err(|e| e.to_string()).and_then(GameType::try_from)
    }
}

/// When a decision happened: wall clock and position in the decision log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTime {
    /// 1-based micro-step counter after this decision.
    pub step: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    /// Node index of the deciding player.
    pub index: usize,
    pub strategy: Strategy,
    pub last_strategy: Strategy,
    pub last_income: f64,
    pub neighbor_index: NeighborRef,
    pub neighbor_income: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub x: f64,
    /// Strategies of all players after the decision, e.g. `"CCDDC"`.
    pub vector: String,
    pub time: DecisionTime,
}

impl GameRecord {
    pub fn cooperators(&self) -> usize {
        self.vector.chars().filter(|&c| c == 'C').count()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialise")
    }
}

pub const RECORD_FIELDS: [&str; 10] = [
    "index",
    "strategy",
    "last_strategy",
    "last_income",
    "neighbor_index",
    "neighbor_income",
    "R",
    "x",
    "vector",
    "time",
];
