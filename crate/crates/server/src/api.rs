//! HTTP + JSON routes.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use ssg_core::Strategy;

use crate::auth::Account;
use crate::bots::{run_bots, BotRequest};
use crate::error::{ApiError, ApiJson};
use crate::game::{AdminAction, GameConfig, Occupant};
use crate::registry::Registry;
use crate::rewards::RewardRequest;

pub type AppState = Arc<Registry>;

#[derive(Debug, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenReply {
    pub token: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecideBody {
    pub strategy: Strategy,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub game_id: u64,
}

fn account(reg: &Registry, headers: &HeaderMap) -> Result<Account, ApiError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
    reg.accounts.authenticate(token.trim())
}

fn admin(reg: &Registry, headers: &HeaderMap) -> Result<Account, ApiError> {
    let acc = account(reg, headers)?;
    if acc.admin {
        Ok(acc)
    } else {
        Err(ApiError::forbidden("admin only"))
    }
}

fn player(reg: &Registry, headers: &HeaderMap) -> Result<Occupant, ApiError> {
    account(reg, headers).map(|a| Occupant::Player(a.username))
}

async fn register(State(reg): State<AppState>, ApiJson(c): ApiJson<Credentials>) -> Result<Json<TokenReply>, ApiError> {
    reg.accounts
        .register(&c.username, &c.password)
        .map(|token| Json(TokenReply { token }))
}

async fn login(State(reg): State<AppState>, ApiJson(c): ApiJson<Credentials>) -> Result<Json<TokenReply>, ApiError> {
    reg.accounts.login(&c.username, &c.password).map(|token| Json(TokenReply { token }))
}

async fn list_games(State(reg): State<AppState>) -> impl IntoResponse {
    Json(reg.list())
}

async fn join(State(reg): State<AppState>, headers: HeaderMap, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let who = player(&reg, &headers)?;
    Ok(Json(reg.join(id, who)?).into_response())
}

async fn state(State(reg): State<AppState>, headers: HeaderMap, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let who = player(&reg, &headers)?;
    Ok(Json(reg.state(id, &who)?).into_response())
}

async fn decide(
    State(reg): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<u64>,
    ApiJson(body): ApiJson<DecideBody>,
) -> Result<Response, ApiError> {
    let who = player(&reg, &headers)?;
    Ok(Json(reg.decide(id, who, body.strategy)?).into_response())
}

async fn create_game(
    State(reg): State<AppState>,
    headers: HeaderMap,
    ApiJson(config): ApiJson<GameConfig>,
) -> Result<Json<Created>, ApiError> {
    admin(&reg, &headers)?;
    reg.create_game(config).map(|game_id| Json(Created { game_id }))
}

async fn game_action(
    State(reg): State<AppState>,
    headers: HeaderMap,
    Path((id, action)): Path<(u64, String)>,
) -> Result<Response, ApiError> {
    admin(&reg, &headers)?;
    let action: AdminAction = action.parse().map_err(ApiError::not_found)?;
    Ok(Json(reg.admin(id, action)?).into_response())
}

async fn snapshot(State(reg): State<AppState>, headers: HeaderMap, Path(id): Path<u64>) -> Result<Response, ApiError> {
    admin(&reg, &headers)?;
    Ok(Json(reg.snapshot(id)?).into_response())
}

async fn export(State(reg): State<AppState>, headers: HeaderMap, Path(id): Path<u64>) -> Result<Response, ApiError> {
    admin(&reg, &headers)?;
    let mut body = String::new();
    for rec in reg.export(id)? {
        body.push_str(&rec.to_json_line());
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn bots(
    State(reg): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<u64>,
    ApiJson(req): ApiJson<BotRequest>,
) -> Result<Response, ApiError> {
    admin(&reg, &headers)?;
    let transcript = tokio::task::spawn_blocking(move || run_bots(&reg, id, &req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(transcript).into_response())
}

async fn rewards(
    State(reg): State<AppState>,
    headers: HeaderMap,
    Path(session): Path<String>,
    ApiJson(req): ApiJson<RewardRequest>,
) -> Result<Response, ApiError> {
    admin(&reg, &headers)?;
    Ok(Json(reg.rewards(&session, &req)?).into_response())
}

pub fn router(registry: AppState) -> Router {
    Router::new()
        .route("/api/register", post(register))
        .route("/api/login", post(login))
        .route("/api/games", get(list_games))
        .route("/api/games/{id}/join", post(join))
        .route("/api/games/{id}/state", get(state))
        .route("/api/games/{id}/decide", post(decide))
        .route("/api/admin/games", post(create_game))
        .route("/api/admin/games/{id}", get(snapshot))
        .route("/api/admin/games/{id}/export", get(export))
        .route("/api/admin/games/{id}/bots", post(bots))
        .route("/api/admin/games/{id}/{action}", post(game_action))
        .route("/api/admin/sessions/{id}/rewards", post(rewards))
        .with_state(registry)
}
