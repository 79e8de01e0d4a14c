//! One game as a deterministic state machine driven by [`Event`]s.
//!
//! Every accepted event is appended to the game's log, so replaying the
//! log through a fresh [`Game`] rebuilds the exact state.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ssg_core::abm::AgentState;
use ssg_core::inference::GameType;
use ssg_core::model::resource_map_step;
use ssg_core::record::{DecisionTime, GameRecord, NeighborRef};
use ssg_core::socialnet::{generate, GraphKind, SocialGraph};
use ssg_core::{ModelParams, Strategy};

use crate::error::ApiError;

pub const FINISHED_MESSAGE: &str = "This game is finished!";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: GraphKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub name: String,
    pub params: ModelParams,
    pub network: NetworkSpec,
    pub game_type: GameType,
    /// Which of the two parallel groups of a session this game is.
    pub group_id: String,
    /// Games sharing a session id are rewarded together.
    #[serde(default)]
    pub session_id: Option<String>,
    /// Seeds the initial strategy placement and the displayed-neighbour
    /// stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub show_neighbor_ratio: bool,
}

fn yes() -> bool {
    true
}

impl GameConfig {
    /// The experiment setup: 20 seats, complete network.
    pub fn reference(name: &str, game_type: GameType, group_id: &str) -> Self {
        Self {
            name: name.into(),
            params: ModelParams::reference(),
            network: NetworkSpec {
                kind: GraphKind::Complete,
                c: 1.0,
                seed: 0,
            },
            game_type,
            group_id: group_id.into(),
            session_id: None,
            seed: 0,
            show_neighbor_ratio: true,
        }
    }

    pub fn max_decisions(&self) -> u64 {
        self.params.max_decisions()
    }

    /// Builds the network, reporting every invalid field.
    pub fn validate(&self) -> Result<SocialGraph, Vec<FieldError>> {
        let mut errors = Vec::new();
        let mut field = |field: &str, message: String| {
            errors.push(FieldError {
                field: field.into(),
                message,
            })
        };
        if self.name.trim().is_empty() {
            field("name", "must not be empty".into());
        }
        if self.group_id.trim().is_empty() {
            field("group_id", "must not be empty".into());
        }
        let p = &self.params;
        if let Err(e) = p.validate() {
            field("params", e.to_string());
        }
        let steps = p.n_players as f64 * p.t_f;
        if !(p.t_f > 0.0 && (steps - steps.round()).abs() <= 1e-9) {
            field("params.t_f", format!("N t_f must be a positive integer, got {steps}"));
        }
        let graph = match generate(self.network.kind, p.n_players, self.network.c, self.network.seed) {
            Ok(g) => Some(g),
            Err(e) => {
                field("network", e.to_string());
                None
            }
        };
        match graph {
            Some(g) if errors.is_empty() => Ok(g),
            _ => Err(errors),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Disabled,
    Enabled,
    Running,
    Finished,
}

/// Who holds a seat.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Occupant {
    Player(String),
    Bot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seat {
    pub node_index: usize,
    pub occupant: Option<Occupant>,
    pub strategy: Strategy,
    pub cumulative_payoff: f64,
    pub last_income: f64,
    /// Neighbour shown to this seat.
    pub displayed: usize,
}

/// What a seated player sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerView {
    pub node_index: usize,
    pub strategy: Strategy,
    pub last_payoff: f64,
    pub cumulative_payoff: f64,
    pub neighbor_strategy: Strategy,
    pub neighbor_payoff: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Share of graph neighbours currently cooperating; absent when the
    /// game hides it.
    pub neighbor_coop_ratio: Option<f64>,
    pub step: u64,
    pub max_decisions: u64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdminAction {
    Enable,
    Disable,
    Reset,
    Finish,
}

impl std::str::FromStr for AdminAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enable" => Ok(AdminAction::Enable),
            "disable" => Ok(AdminAction::Disable),
            "reset" => Ok(AdminAction::Reset),
            "finish" => Ok(AdminAction::Finish),
            _ => Err(format!("unknown action {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Admin {
        action: AdminAction,
    },
    Join {
        occupant: Occupant,
    },
    Decide {
        occupant: Occupant,
        strategy: Strategy,
        timestamp_ms: u64,
    },
}

/// Administrative summary of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSnapshot {
    pub game_id: u64,
    pub config: GameConfig,
    pub status: Status,
    pub step: u64,
    #[serde(rename = "R")]
    pub r: f64,
    pub x: f64,
    pub seats: Vec<Seat>,
}

#[derive(Debug, Clone)]
pub struct Game {
    id: u64,
    config: GameConfig,
    epsilon: f64,
    graph: SocialGraph,
    status: Status,
    seats: Vec<Seat>,
    r: f64,
    n_coop: usize,
    step: u64,
    records: Vec<GameRecord>,
    neighbor_rng: ChaCha8Rng,
}

fn neighbor_stream(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    rng
}

impl Game {
    /// A fresh game in the disabled state.
    pub fn new(id: u64, config: GameConfig, epsilon: f64) -> Result<Self, ApiError> {
        let graph = config.validate().map_err(ApiError::invalid_config)?;
        let mut g = Self {
            id,
            epsilon,
            graph,
            status: Status::Disabled,
            seats: Vec::new(),
            r: 0.0,
            n_coop: 0,
            step: 0,
            records: Vec::new(),
            neighbor_rng: neighbor_stream(config.seed),
            config,
        };
        g.restart();
        Ok(g)
    }

    /// Initial strategies, resource and payoffs; seats emptied.
    fn restart(&mut self) {
        let p = &self.config.params;
        let n = p.n_players;
        let init = AgentState::new(n, p.r0, p.x0, self.config.seed);
        self.seats = init
            .strategies
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                // the first neighbour shown depends on the seat only
                let mut rng = neighbor_stream(self.config.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let displayed = *self.graph.neighbors(i).expect("i < n").choose(&mut rng).expect("connected");
                Seat {
                    node_index: i,
                    occupant: None,
                    strategy: s,
                    cumulative_payoff: 0.0,
                    last_income: 0.0,
                    displayed,
                }
            })
            .collect();
        self.n_coop = init.cooperators();
        self.r = p.r0;
        self.step = 0;
        self.records.clear();
        self.neighbor_rng = neighbor_stream(self.config.seed);
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn graph(&self) -> &SocialGraph {
        &self.graph
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn x(&self) -> f64 {
        self.n_coop as f64 / self.seats.len() as f64
    }

    pub fn seats(&self) -> &[Seat] {
        &self.seats
    }

    pub fn records(&self) -> &[GameRecord] {
        &self.records
    }

    pub fn seats_free(&self) -> usize {
        self.seats.iter().filter(|s| s.occupant.is_none()).count()
    }

    pub fn total_payoff(&self) -> f64 {
        self.seats.iter().map(|s| s.cumulative_payoff).sum()
    }

    pub fn snapshot(&self) -> GameSnapshot {
        GameSnapshot {
            game_id: self.id,
            config: self.config.clone(),
            status: self.status,
            step: self.step,
            r: self.r,
            x: self.x(),
            seats: self.seats.clone(),
        }
    }

    pub fn seat_of(&self, occupant: &Occupant) -> Option<usize> {
        self.seats.iter().position(|s| s.occupant.as_ref() == Some(occupant))
    }

    pub fn apply(&mut self, event: &Event) -> Result<Option<PlayerView>, ApiError> {
        match event {
            Event::Admin { action } => self.admin(*action).map(|_| None),
            Event::Join { occupant } => self.join(occupant).map(Some),
            Event::Decide {
                occupant,
                strategy,
                timestamp_ms,
            } => self.decide(occupant, *strategy, *timestamp_ms).map(Some),
        }
    }

    pub fn admin(&mut self, action: AdminAction) -> Result<(), ApiError> {
        use Status::*;
        let next = match (action, self.status) {
            (AdminAction::Enable, Disabled) => Enabled,
            (AdminAction::Disable, Enabled) => Disabled,
            (AdminAction::Finish, Running) => Finished,
            (AdminAction::Reset, Enabled | Running | Finished) => {
                self.restart();
                Enabled
            }
            (a, s) => {
                return Err(ApiError::conflict(format!("cannot {a:?} a game that is {s:?}").to_lowercase()));
            }
        };
        self.status = next;
        Ok(())
    }

    /// Seats the occupant at the lowest free node; rejoining returns the
    /// existing seat.
    pub fn join(&mut self, occupant: &Occupant) -> Result<PlayerView, ApiError> {
        if let Some(i) = self.seat_of(occupant) {
            return Ok(self.view(i));
        }
        match self.status {
            Status::Disabled => return Err(ApiError::conflict("game is disabled")),
            Status::Finished => return Err(ApiError::conflict("game is finished")),
            Status::Enabled | Status::Running => {}
        }
        let i = self
            .seats
            .iter()
            .position(|s| s.occupant.is_none())
            .ok_or_else(|| ApiError::conflict("no seats"))?;
        self.seats[i].occupant = Some(occupant.clone());
        Ok(self.view(i))
    }

    pub fn view_for(&self, occupant: &Occupant) -> Result<PlayerView, ApiError> {
        let i = self
            .seat_of(occupant)
            .ok_or_else(|| ApiError::forbidden("not seated in this game"))?;
        Ok(self.view(i))
    }

    pub fn view(&self, i: usize) -> PlayerView {
        let seat = &self.seats[i];
        let shown = &self.seats[seat.displayed];
        let neighbors = self.graph.neighbors(i).expect("seat index is a node");
        let coop = neighbors.iter().filter(|&&j| self.seats[j].strategy.is_cooperator()).count();
        PlayerView {
            node_index: i,
            strategy: seat.strategy,
            last_payoff: seat.last_income,
            cumulative_payoff: seat.cumulative_payoff,
            neighbor_strategy: shown.strategy,
            neighbor_payoff: shown.last_income,
            r: self.r,
            neighbor_coop_ratio: self
                .config
                .show_neighbor_ratio
                .then(|| coop as f64 / neighbors.len() as f64),
            step: self.step,
            max_decisions: self.config.max_decisions(),
            status: self.status,
            message: (self.status == Status::Finished).then(|| FINISHED_MESSAGE.to_string()),
        }
    }

    /// Seat of `occupant` if it may decide now.
    pub fn check_decide(&self, occupant: &Occupant) -> Result<usize, ApiError> {
        let i = self
            .seat_of(occupant)
            .ok_or_else(|| ApiError::forbidden("not seated in this game"))?;
        match self.status {
            Status::Disabled => Err(ApiError::conflict("game is disabled")),
            Status::Finished => Err(ApiError::conflict("game is finished").with_view(self.view(i))),
            Status::Enabled | Status::Running => Ok(i),
        }
    }

    /// One decision is one micro-step: strategy update, resource step,
    /// accrual to every seat, record, and a fresh displayed neighbour.
    pub fn decide(&mut self, occupant: &Occupant, strategy: Strategy, timestamp_ms: u64) -> Result<PlayerView, ApiError> {
        let i = self.check_decide(occupant)?;
        if self.status == Status::Enabled {
            self.status = Status::Running;
        }
        let params = &self.config.params;
        let n = self.seats.len() as f64;
        let previous = self.seats[i].strategy;
        if previous != strategy {
            self.seats[i].strategy = strategy;
            if strategy.is_cooperator() {
                self.n_coop += 1;
            } else {
                self.n_coop -= 1;
            }
        }
        self.r = resource_map_step(params, self.r, self.n_coop);
        for seat in &mut self.seats {
            let income = self.r * params.extraction_rate(seat.strategy) / n;
            seat.cumulative_payoff += income;
            seat.last_income = income;
        }
        self.step += 1;
        let shown = *self
            .graph
            .neighbors(i)
            .expect("seat index is a node")
            .choose(&mut self.neighbor_rng)
            .expect("connected");
        self.seats[i].displayed = shown;
        self.records.push(GameRecord {
            index: i,
            strategy,
            last_strategy: previous,
            last_income: self.seats[i].last_income,
            neighbor_index: NeighborRef::Index(shown),
            neighbor_income: self.seats[shown].last_income,
            r: self.r,
            x: self.x(),
            vector: self.seats.iter().map(|s| s.strategy.as_char()).collect(),
            time: DecisionTime {
                step: self.step,
                timestamp_ms,
            },
        });
        if self.step >= self.config.max_decisions() || self.r < self.epsilon {
            self.status = Status::Finished;
        }
        Ok(self.view(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game() -> Game {
        let mut g = Game::new(1, GameConfig::reference("t", GameType::Individual, "A"), 1e-3).unwrap();
        g.admin(AdminAction::Enable).unwrap();
        g
    }

    fn p(name: &str) -> Occupant {
        Occupant::Player(name.into())
    }

    #[test]
    fn reference_config_starts_half_cooperative() {
        let g = game();
        assert_eq!(g.seats().len(), 20);
        assert_eq!(g.seats().iter().filter(|s| s.strategy == Strategy::C).count(), 10);
        assert_eq!(g.config().max_decisions(), 800);
    }

    #[test]
    fn all_cooperate_at_x0_one() {
        let mut cfg = GameConfig::reference("t", GameType::Individual, "A");
        cfg.params = cfg.params.with_initial(0.5, 1.0).unwrap();
        let g = Game::new(1, cfg, 1e-3).unwrap();
        assert!(g.seats().iter().all(|s| s.strategy == Strategy::C));
    }

    #[test]
    fn seats_fill_in_order() {
        let mut g = game();
        assert_eq!(g.join(&p("a")).unwrap().node_index, 0);
        assert_eq!(g.join(&p("b")).unwrap().node_index, 1);
        assert_eq!(g.join(&p("a")).unwrap().node_index, 0);
        for k in 2..20 {
            g.join(&p(&format!("p{k}"))).unwrap();
        }
        let e = g.join(&p("late")).unwrap_err();
        assert_eq!(e.message, "no seats");
    }

    #[test]
    fn lifecycle_never_skips() {
        let mut g = Game::new(1, GameConfig::reference("t", GameType::Individual, "A"), 1e-3).unwrap();
        assert!(g.admin(AdminAction::Finish).is_err());
        assert!(g.join(&p("a")).is_err());
        g.admin(AdminAction::Enable).unwrap();
        assert!(g.admin(AdminAction::Finish).is_err());
        g.join(&p("a")).unwrap();
        g.decide(&p("a"), Strategy::C, 0).unwrap();
        assert_eq!(g.status(), Status::Running);
        assert!(g.admin(AdminAction::Enable).is_err());
        assert!(g.admin(AdminAction::Disable).is_err());
        g.admin(AdminAction::Finish).unwrap();
        let e = g.decide(&p("a"), Strategy::C, 0).unwrap_err();
        assert_eq!(e.view.unwrap().message.as_deref(), Some(FINISHED_MESSAGE));
        g.admin(AdminAction::Reset).unwrap();
        assert_eq!(g.status(), Status::Enabled);
        assert!(g.records().is_empty());
        assert_eq!(g.seats_free(), 20);
    }

    #[test]
    fn neighbour_ratio_on_complete_graph() {
        let mut g = game();
        let v = g.join(&p("a")).unwrap();
        let n_c = g.seats().iter().filter(|s| s.strategy == Strategy::C).count() as f64;
        let own = if v.strategy == Strategy::C { 1.0 } else { 0.0 };
        assert_eq!(v.neighbor_coop_ratio, Some((n_c - own) / 19.0));
    }

    #[test]
    fn chain_endpoint_with_cooperating_neighbour() {
        let mut cfg = GameConfig::reference("t", GameType::Individual, "A");
        cfg.network.kind = GraphKind::Chain;
        cfg.params = cfg.params.with_initial(0.5, 1.0).unwrap();
        let mut g = Game::new(1, cfg, 1e-3).unwrap();
        g.admin(AdminAction::Enable).unwrap();
        let v = g.join(&p("a")).unwrap();
        assert_eq!(g.graph().degree(0), 1);
        assert_eq!(v.neighbor_coop_ratio, Some(1.0));
    }

    #[test]
    fn invalid_config_lists_fields() {
        let mut cfg = GameConfig::reference("", GameType::Individual, "");
        cfg.network.kind = GraphKind::Ba;
        cfg.network.c = 0.9;
        let fields: Vec<String> = cfg.validate().unwrap_err().into_iter().map(|f| f.field).collect();
        assert_eq!(fields, vec!["name", "group_id", "network"]);
    }

    #[test]
    fn defectors_deplete_early() {
        let mut g = game();
        for k in 0..20 {
            g.join(&p(&format!("p{k}"))).unwrap();
        }
        let mut k = 0;
        while g.status() != Status::Finished {
            g.decide(&p(&format!("p{}", k % 20)), Strategy::D, 0).unwrap();
            k += 1;
        }
        assert!(g.step() < 800);
        assert!(g.r() < 1e-3);
    }
}
