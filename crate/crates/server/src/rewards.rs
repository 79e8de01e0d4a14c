//! Converting game payoffs into money for a session of two parallel games.
//!
//! Amounts are integer minor units (cents). A proportional split floors
//! every share and gives the remainder to the highest-payoff player, the
//! lowest seat of the first game winning ties.

use serde::{Deserialize, Serialize};

use ssg_core::inference::GameType;

use crate::error::ApiError;
use crate::game::{Game, Occupant, Status};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRequest {
    pub game_type: GameType,
    /// Currency units.
    pub budget: f64,
    /// Currency per payoff unit; unlimited when absent.
    #[serde(default)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPayoffs {
    pub game_id: u64,
    pub group_id: String,
    /// `(seat, occupant, cumulative payoff)`.
    pub seats: Vec<(usize, Option<Occupant>, f64)>,
}

impl GroupPayoffs {
    pub fn from_game(game: &Game) -> Self {
        Self {
            game_id: game.id(),
            group_id: game.config().group_id.clone(),
            seats: game
                .seats()
                .iter()
                .map(|s| (s.node_index, s.occupant.clone(), s.cumulative_payoff))
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.seats.iter().map(|s| s.2).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub game_id: u64,
    pub group_id: String,
    pub seat: usize,
    pub occupant: Option<Occupant>,
    pub payoff: f64,
    pub minor_units: u64,
}

fn to_minor(amount: f64) -> Result<u64, ApiError> {
    if !(amount.is_finite() && amount >= 0.0) {
        return Err(ApiError::bad_request(format!("budget must be a non-negative amount, got {amount}")));
    }
    Ok((amount * 100.0).round() as u64)
}

/// Splits `budget` minor units over `payoffs` in proportion, or pays
/// `rate` per payoff unit when that costs less than the budget.
fn allocate(budget: u64, payoffs: &[f64], rate: Option<f64>) -> Vec<u64> {
    let total: f64 = payoffs.iter().sum();
    if total <= 0.0 {
        return vec![0; payoffs.len()];
    }
    if let Some(rate) = rate {
        let cost = rate * total * 100.0;
        if cost < budget as f64 {
            return payoffs.iter().map(|p| (rate * p * 100.0).floor() as u64).collect();
        }
    }
    let mut out: Vec<u64> = payoffs
        .iter()
        .map(|p| ((budget as f64) * p / total).floor() as u64)
        .collect();
    let paid: u64 = out.iter().sum();
    let best = payoffs
        .iter()
        .enumerate()
        .fold(0, |b, (i, &p)| if p > payoffs[b] { i } else { b });
    out[best] += budget.saturating_sub(paid);
    out
}

/// Type 1 pays everyone from one budget; type 2 pays only the group with
/// the larger total, or half the budget to each group on an exact tie.
pub fn compute_rewards(groups: &[GroupPayoffs; 2], req: &RewardRequest) -> Result<Vec<Reward>, ApiError> {
    if let Some(rate) = req.rate {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(ApiError::bad_request(format!("rate must be non-negative, got {rate}")));
        }
    }
    let budget = to_minor(req.budget)?;
    let amounts: Vec<Vec<u64>> = match req.game_type {
        GameType::Individual => {
            let all: Vec<f64> = groups.iter().flat_map(|g| g.seats.iter().map(|s| s.2)).collect();
            let flat = allocate(budget, &all, req.rate);
            let split = groups[0].seats.len();
            vec![flat[..split].to_vec(), flat[split..].to_vec()]
        }
        GameType::Group => {
            let pays = |g: &GroupPayoffs, b: u64| allocate(b, &g.seats.iter().map(|s| s.2).collect::<Vec<_>>(), req.rate);
            let zero = |g: &GroupPayoffs| vec![0; g.seats.len()];
            let (a, b) = (groups[0].total(), groups[1].total());
            if a > b {
                vec![pays(&groups[0], budget), zero(&groups[1])]
            } else if b > a {
                vec![zero(&groups[0]), pays(&groups[1], budget)]
            } else {
                let half = budget / 2;
                vec![pays(&groups[0], budget - half), pays(&groups[1], half)]
            }
        }
    };
    let mut out = Vec::new();
    for (g, amounts) in groups.iter().zip(&amounts) {
        for (s, m) in g.seats.iter().zip(amounts.iter()) {
            out.push(Reward {
                game_id: g.game_id,
                group_id: g.group_id.clone(),
                seat: s.0,
                occupant: s.1.clone(),
                payoff: s.2,
                minor_units: *m,
            });
        }
    }
    Ok(out)
}

/// Checks that the session is two finished games in distinct groups.
pub fn session_groups(games: &[&Game]) -> Result<[GroupPayoffs; 2], ApiError> {
    let [a, b] = games else {
        return Err(ApiError::conflict(format!(
            "a session needs exactly two games, found {}",
            games.len()
        )));
    };
    for g in [a, b] {
        if g.status() != Status::Finished {
            return Err(ApiError::conflict(format!("game {} is not finished", g.id())));
        }
    }
    if a.config().group_id == b.config().group_id {
        return Err(ApiError::conflict("both games are in the same group"));
    }
    Ok([GroupPayoffs::from_game(a), GroupPayoffs::from_game(b)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(id: u64, payoffs: &[f64]) -> GroupPayoffs {
        GroupPayoffs {
            game_id: id,
            group_id: format!("g{id}"),
            seats: payoffs.iter().enumerate().map(|(i, &p)| (i, None, p)).collect(),
        }
    }

    #[test]
    fn allocation_rules() {
        assert_eq!(allocate(100, &[1.0, 1.0, 1.0], None), vec![34, 33, 33]);
        assert_eq!(allocate(100, &[1.0, 2.0, 2.0], None), vec![20, 40, 40]);
        assert_eq!(allocate(100, &[1.0, 3.0, 3.0], None), vec![14, 44, 42]);
        assert_eq!(allocate(10_000, &[1.0, 2.0], Some(10.0)), vec![1000, 2000]);
        assert_eq!(allocate(100, &[0.0, 0.0], None), vec![0, 0]);
    }

    #[test]
    fn type_one_equal_payoffs_equal_rewards() {
        let groups = [group(1, &[2.0; 4]), group(2, &[2.0; 4])];
        let r = compute_rewards(
            &groups,
            &RewardRequest {
                game_type: GameType::Individual,
                budget: 80.0,
                rate: None,
            },
        )
        .unwrap();
        assert!(r.iter().all(|x| x.minor_units == 1000));
    }

    #[test]
    fn type_two_tie_halves_budget() {
        let groups = [group(1, &[50.0, 50.0]), group(2, &[25.0, 75.0])];
        let r = compute_rewards(
            &groups,
            &RewardRequest {
                game_type: GameType::Group,
                budget: 200.0,
                rate: None,
            },
        )
        .unwrap();
        let sum = |id| r.iter().filter(|x| x.game_id == id).map(|x| x.minor_units).sum::<u64>();
        assert_eq!(sum(1), 10_000);
        assert_eq!(sum(2), 10_000);
        assert_eq!(r[2].minor_units, 2500);
        assert_eq!(r[3].minor_units, 7500);
    }
}
