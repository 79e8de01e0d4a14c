//! Scripted players that take free seats and decide through the same
//! join/state/decide operations as people.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ssg_core::abm::switch_probability;
use ssg_core::Strategy;

use crate::error::ApiError;
use crate::game::{Occupant, Status};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BotPolicy {
    AlwaysC,
    AlwaysD,
    /// Imitates the displayed neighbour with the replicator probability at
    /// selection pressure `w`.
    Replicator(f64),
}

impl fmt::Display for BotPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BotPolicy::AlwaysC => write!(f, "always_C"),
            BotPolicy::AlwaysD => write!(f, "always_D"),
            BotPolicy::Replicator(w) => write!(f, "replicator({w})"),
        }
    }
}

impl FromStr for BotPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "always_C" => return Ok(BotPolicy::AlwaysC),
            "always_D" => return Ok(BotPolicy::AlwaysD),
            _ => {}
        }
        let w = s
            .strip_prefix("replicator(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|w| w.trim().parse::<f64>().ok())
            .ok_or_else(|| format!("policy must be always_C, always_D or replicator(w), got {s:?}"))?;
        if !(-1.0..=1.0).contains(&w) {
            return Err(format!("replicator w must lie in [-1, 1], got {w}"));
        }
        Ok(BotPolicy::Replicator(w))
    }
}

impl Serialize for BotPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BotPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotOrder {
    /// Bots decide in seat order, one after another.
    #[default]
    RoundRobin,
    /// A uniformly random bot decides next.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotRequest {
    pub policy: BotPolicy,
    #[serde(default)]
    pub seed: u64,
    /// Pause after every decision.
    #[serde(default)]
    pub pacing_ms: u64,
    #[serde(default)]
    pub order: BotOrder,
    /// Seats to claim; all free seats when absent.
    #[serde(default)]
    pub count: Option<usize>,
}

impl BotRequest {
    pub fn new(policy: BotPolicy, seed: u64) -> Self {
        Self {
            policy,
            seed,
            pacing_ms: 0,
            order: BotOrder::RoundRobin,
            count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotTranscript {
    pub seats: Vec<usize>,
    pub decisions: u64,
    pub status: Status,
    pub step: u64,
    #[serde(rename = "R")]
    pub r: f64,
    pub x: f64,
}

fn choose(policy: BotPolicy, view: &crate::game::PlayerView, registry: &Registry, id: u64, rng: &mut ChaCha8Rng) -> Result<Strategy, ApiError> {
    Ok(match policy {
        BotPolicy::AlwaysC => Strategy::C,
        BotPolicy::AlwaysD => Strategy::D,
        BotPolicy::Replicator(w) => {
            let params = registry.with_game(id, |g| g.config().params.clone())?;
            let u_i = view.r * params.extraction_rate(view.strategy);
            let u_j = view.r * params.extraction_rate(view.neighbor_strategy);
            let p = switch_probability(u_i, u_j, w, params.max_payoff_gap())
                .map_err(|e| ApiError::internal(e.to_string()))?;
            let coin: f64 = rng.random();
            if coin < p {
                view.neighbor_strategy
            } else {
                view.strategy
            }
        }
    })
}

/// Claims free seats and plays until the game finishes. The game must be
/// enabled or running; with no free seats nothing happens.
pub fn run_bots(registry: &Registry, id: u64, req: &BotRequest) -> Result<BotTranscript, ApiError> {
    let (status, free) = registry.with_game(id, |g| (g.status(), g.seats_free()))?;
    if !matches!(status, Status::Enabled | Status::Running) {
        return Err(ApiError::conflict(format!("bots need an enabled game, this one is {status:?}").to_lowercase()));
    }
    let want = req.count.unwrap_or(free).min(free);
    let mut bots = Vec::with_capacity(want);
    for k in 0..want {
        let occupant = Occupant::Bot(format!("bot-{}-{k}", req.seed));
        let view = registry.join(id, occupant.clone())?;
        bots.push((view.node_index, occupant));
    }
    bots.sort_by_key(|b| b.0);
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let mut decisions = 0;
    if !bots.is_empty() {
        let mut turn = 0;
        let mut order: Vec<usize> = (0..bots.len()).collect();
        'play: loop {
            if req.order == BotOrder::Random && turn % bots.len() == 0 {
                order.shuffle(&mut rng);
            }
            let (_, occupant) = &bots[order[turn % bots.len()]];
            turn += 1;
            let view = registry.state(id, occupant)?;
            if view.status == Status::Finished {
                break 'play;
            }
            let strategy = choose(req.policy, &view, registry, id, &mut rng)?;
            let after = registry.decide(id, occupant.clone(), strategy)?;
            decisions += 1;
            if after.status == Status::Finished {
                break 'play;
            }
            if req.pacing_ms > 0 {
                std::thread::sleep(Duration::from_millis(req.pacing_ms));
            }
        }
    }
    let snap = registry.snapshot(id)?;
    Ok(BotTranscript {
        seats: bots.iter().map(|b| b.0).collect(),
        decisions,
        status: snap.status,
        step: snap.step,
        r: snap.r,
        x: snap.x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_strings() {
        assert_eq!("always_C".parse::<BotPolicy>().unwrap(), BotPolicy::AlwaysC);
        assert_eq!("replicator(-1)".parse::<BotPolicy>().unwrap(), BotPolicy::Replicator(-1.0));
        assert!("replicator(2)".parse::<BotPolicy>().is_err());
        assert_eq!(BotPolicy::Replicator(0.5).to_string(), "replicator(0.5)");
        let req: BotRequest = serde_json::from_str(r#"{"policy":"always_D"}"#).unwrap();
        assert_eq!(req.order, BotOrder::RoundRobin);
    }
}
