//! Rebuilding a game from its exported records.

use ssg_core::record::GameRecord;

use crate::error::ApiError;
use crate::game::{AdminAction, Game, GameConfig, Occupant};

/// Largest deviation over all steps between the payoff handed out in a
/// step and `R (N_C e_C + N_D e_D) / N` of the post-decision state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conservation {
    pub steps: usize,
    pub max_abs_error: f64,
}

fn seat_player(i: usize) -> Occupant {
    Occupant::Player(format!("seat-{i}"))
}

/// Feeds the decisions of `records` through a fresh game, calling
/// `each(before, after)` around every step.
pub fn replay_with(
    config: &GameConfig,
    epsilon: f64,
    records: &[GameRecord],
    mut each: impl FnMut(&Game, &Game),
) -> Result<Game, ApiError> {
    let mut game = Game::new(0, config.clone(), epsilon)?;
    game.admin(AdminAction::Enable)?;
    for i in 0..game.seats().len() {
        game.join(&seat_player(i))?;
    }
    for rec in records {
        let before = game.clone();
        game.decide(&seat_player(rec.index), rec.strategy, rec.time.timestamp_ms)?;
        each(&before, &game);
    }
    Ok(game)
}

pub fn replay(config: &GameConfig, epsilon: f64, records: &[GameRecord]) -> Result<Game, ApiError> {
    replay_with(config, epsilon, records, |_, _| {})
}

pub fn check_conservation(config: &GameConfig, epsilon: f64, records: &[GameRecord]) -> Result<Conservation, ApiError> {
    let p = &config.params;
    let mut worst = 0.0f64;
    replay_with(config, epsilon, records, |before, after| {
        let n = after.seats().len() as f64;
        let n_c = after.seats().iter().filter(|s| s.strategy.is_cooperator()).count() as f64;
        let expected = after.r() * (n_c * p.e_c + (n - n_c) * p.e_d) / n;
        let handed: f64 = after
            .seats()
            .iter()
            .zip(before.seats())
            .map(|(a, b)| a.cumulative_payoff - b.cumulative_payoff)
            .sum();
        let incomes: f64 = after.seats().iter().map(|s| s.last_income).sum();
        worst = worst.max((handed - expected).abs()).max((incomes - expected).abs());
    })?;
    Ok(Conservation {
        steps: records.len(),
        max_abs_error: worst,
    })
}
