//! All games of a server, their logs on disk, and the per-player rate
//! limiter. Each game has its own lock, so decisions in different games
//! run in parallel while decisions within a game are serialised.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use ssg_core::inference::GameType;
use ssg_core::record::GameRecord;
use ssg_core::Strategy;

use crate::auth::Accounts;
use crate::config::ServerConfig;
use crate::error::ApiError;
use crate::game::{AdminAction, Event, Game, GameConfig, GameSnapshot, Occupant, PlayerView, Status};
use crate::rewards::{compute_rewards, session_groups, Reward, RewardRequest};

struct Entry {
    game: Game,
    log: Option<File>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameListing {
    pub game_id: u64,
    pub name: String,
    pub status: Status,
    pub game_type: GameType,
    pub seats_free: usize,
}

#[derive(Serialize, Deserialize)]
struct StoredConfig {
    game_id: u64,
    config: GameConfig,
}

fn io_err(e: std::io::Error) -> ApiError {
    ApiError::internal(format!("storage: {e}"))
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub struct Registry {
    config: ServerConfig,
    persist: bool,
    games: RwLock<BTreeMap<u64, Arc<Mutex<Entry>>>>,
    next_id: AtomicU64,
    last_decision: Mutex<HashMap<(u64, String), Instant>>,
    pub accounts: Accounts,
}

impl Registry {
    /// Memory-only registry; nothing is written to disk.
    pub fn ephemeral(config: ServerConfig) -> Self {
        Self {
            accounts: Accounts::in_memory(config.admin_users.clone()),
            config,
            persist: false,
            games: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            last_decision: Mutex::new(HashMap::new()),
        }
    }

    /// Opens the data directory and replays every game log found there.
    pub fn open(config: ServerConfig) -> std::io::Result<Self> {
        let dir = config.data_dir.clone();
        std::fs::create_dir_all(dir.join("games"))?;
        let accounts = Accounts::open(&dir, config.admin_users.clone())?;
        let mut games = BTreeMap::new();
        let mut max_id = 0;
        for entry in std::fs::read_dir(dir.join("games"))? {
            let path = entry?.path();
            let cfg_path = path.join("config.json");
            if !cfg_path.exists() {
                continue;
            }
            let stored: StoredConfig = serde_json::from_reader(File::open(&cfg_path)?)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            let mut game = Game::new(stored.game_id, stored.config, config.epsilon).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", cfg_path.display()))
            })?;
            let log_path = path.join("events.jsonl");
            if log_path.exists() {
                for (i, line) in BufReader::new(File::open(&log_path)?).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let bad = |m: String| {
                        std::io::Error::new(
                            std::io::ErrorKind::InvalidData,
                            format!("{} line {}: {m}", log_path.display(), i + 1),
                        )
                    };
                    let event: Event = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                    game.apply(&event).map_err(|e| bad(e.to_string()))?;
                }
            }
            let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
            max_id = max_id.max(stored.game_id);
            games.insert(stored.game_id, Arc::new(Mutex::new(Entry { game, log: Some(log) })));
        }
        Ok(Self {
            accounts,
            config,
            persist: true,
            games: RwLock::new(games),
            next_id: AtomicU64::new(max_id + 1),
            last_decision: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    fn game_dir(&self, id: u64) -> PathBuf {
        self.config.data_dir.join("games").join(id.to_string())
    }

    fn entry(&self, id: u64) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.games
            .read()
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no game {id}")))
    }

    pub fn create_game(&self, config: GameConfig) -> Result<u64, ApiError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let game = Game::new(id, config.clone(), self.config.epsilon)?;
        let log = if self.persist {
            let dir = self.game_dir(id);
            std::fs::create_dir_all(&dir).map_err(io_err)?;
            let stored = StoredConfig { game_id: id, config };
            let text = serde_json::to_string_pretty(&stored).expect("configs serialise");
            std::fs::write(dir.join("config.json"), text).map_err(io_err)?;
            Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join("events.jsonl"))
                    .map_err(io_err)?,
            )
        } else {
            None
        };
        self.games.write().insert(id, Arc::new(Mutex::new(Entry { game, log })));
        Ok(id)
    }

    pub fn list(&self) -> Vec<GameListing> {
        let entries: Vec<_> = self.games.read().values().cloned().collect();
        entries
            .iter()
            .map(|e| {
                let e = e.lock();
                GameListing {
                    game_id: e.game.id(),
                    name: e.game.config().name.clone(),
                    status: e.game.status(),
                    game_type: e.game.config().game_type,
                    seats_free: e.game.seats_free(),
                }
            })
            .collect()
    }

    /// Applies an event under the game's lock and logs it if accepted.
    fn apply(&self, id: u64, event: Event) -> Result<Option<PlayerView>, ApiError> {
        let entry = self.entry(id)?;
        let mut e = entry.lock();
        let out = e.game.apply(&event)?;
        if let Some(log) = e.log.as_mut() {
            let line = serde_json::to_string(&event).expect("events serialise");
            writeln!(log, "{line}").and_then(|_| log.flush()).map_err(io_err)?;
        }
        Ok(out)
    }

    pub fn admin(&self, id: u64, action: AdminAction) -> Result<GameSnapshot, ApiError> {
        self.apply(id, Event::Admin { action })?;
        self.snapshot(id)
    }

    pub fn join(&self, id: u64, occupant: Occupant) -> Result<PlayerView, ApiError> {
        {
            let entry = self.entry(id)?;
            let e = entry.lock();
            if let Some(i) = e.game.seat_of(&occupant) {
                return Ok(e.game.view(i));
            }
        }
        Ok(self.apply(id, Event::Join { occupant })?.expect("joins return a view"))
    }

    pub fn state(&self, id: u64, occupant: &Occupant) -> Result<PlayerView, ApiError> {
        self.entry(id)?.lock().game.view_for(occupant)
    }

    /// Human players are rate limited; bots pace themselves.
    pub fn decide(&self, id: u64, occupant: Occupant, strategy: Strategy) -> Result<PlayerView, ApiError> {
        self.entry(id)?.lock().game.check_decide(&occupant)?;
        if let (Occupant::Player(name), true) = (&occupant, self.config.rate_limit_ms > 0) {
            let interval = Duration::from_millis(self.config.rate_limit_ms);
            let mut last = self.last_decision.lock();
            let key = (id, name.clone());
            let now = Instant::now();
            if let Some(t) = last.get(&key) {
                if now.duration_since(*t) < interval {
                    return Err(ApiError::new(429, "rate_limited", "wait before deciding again"));
                }
            }
            last.insert(key, now);
        }
        let event = Event::Decide {
            occupant,
            strategy,
            timestamp_ms: now_ms(),
        };
        Ok(self.apply(id, event)?.expect("decisions return a view"))
    }

    pub fn snapshot(&self, id: u64) -> Result<GameSnapshot, ApiError> {
        Ok(self.entry(id)?.lock().game.snapshot())
    }

    pub fn export(&self, id: u64) -> Result<Vec<GameRecord>, ApiError> {
        Ok(self.entry(id)?.lock().game.records().to_vec())
    }

    /// Runs `f` on the game under its lock.
    pub fn with_game<T>(&self, id: u64, f: impl FnOnce(&Game) -> T) -> Result<T, ApiError> {
        Ok(f(&self.entry(id)?.lock().game))
    }

    pub fn rewards(&self, session: &str, req: &RewardRequest) -> Result<Vec<Reward>, ApiError> {
        let entries: Vec<_> = self.games.read().values().cloned().collect();
        let locked: Vec<_> = entries.iter().map(|e| e.lock()).collect();
        let games: Vec<&Game> = locked
            .iter()
            .map(|e| &e.game)
            .filter(|g| g.config().session_id.as_deref() == Some(session))
            .collect();
        if games.is_empty() {
            return Err(ApiError::not_found(format!("no games in session {session:?}")));
        }
        for g in &games {
            if g.config().game_type != req.game_type {
                return Err(ApiError::conflict(format!(
                    "game {} is type {}, request is type {}",
                    g.id(),
                    g.config().game_type,
                    req.game_type
                )));
            }
        }
        compute_rewards(&session_groups(&games)?, req)
    }
}
