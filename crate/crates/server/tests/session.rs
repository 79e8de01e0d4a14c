use std::io::Write;
use std::sync::Arc;

use ssg_core::abm::{run_ensemble, run_realization, GraphSpec, RealizationOptions};
use ssg_core::inference::{ingest_experiment, GameType, IngestFormat, IngestOptions};
use ssg_core::socialnet::{generate, GraphKind};
use ssg_core::{ControlSchedule, ModelParams};
use ssg_server::bots::{run_bots, BotPolicy, BotRequest};
use ssg_server::game::{AdminAction, GameConfig, Occupant, Status};
use ssg_server::replay::{check_conservation, replay};
use ssg_server::{Registry, ServerConfig};

fn registry() -> Registry {
    Registry::ephemeral(ServerConfig {
        rate_limit_ms: 0,
        ..Default::default()
    })
}

fn bot_game(reg: &Registry, seed: u64) -> u64 {
    let mut cfg = GameConfig::reference("bots", GameType::Group, "A");
    cfg.seed = seed;
    let id = reg.create_game(cfg).unwrap();
    reg.admin(id, AdminAction::Enable).unwrap();
    id
}

#[test]
fn replicator_session_is_complete_conserving_and_replayable() {
    let reg = registry();
    let id = bot_game(&reg, 7);
    let t = run_bots(&reg, id, &BotRequest::new(BotPolicy::Replicator(-1.0), 11)).unwrap();
    assert_eq!(t.seats.len(), 20);
    assert_eq!(t.decisions, 800);
    assert_eq!(t.status, Status::Finished);
    let records = reg.export(id).unwrap();
    assert_eq!(records.len(), 800);
    assert_eq!(records.last().unwrap().time.step, 800);

    let cfg = reg.snapshot(id).unwrap().config;
    let again = replay(&cfg, 1e-3, &records).unwrap();
    assert_eq!(again.records(), &records[..]);
    let cons = check_conservation(&cfg, 1e-3, &records).unwrap();
    assert_eq!(cons.steps, 800);
    assert!(cons.max_abs_error < 1e-12, "{cons:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("export.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    for r in &records {
        writeln!(f, "{}", r.to_json_line()).unwrap();
    }
    drop(f);
    let (series, _) =
        ingest_experiment(&path, IngestFormat::Records, &IngestOptions::new(cfg.params.clone(), GameType::Group)).unwrap();
    let rows = &series.realizations[0].rows;
    assert_eq!(rows.len(), 41);
    let last = rows.last().unwrap();
    assert_eq!((last.r, last.x), (t.r, t.x));
    for (k, row) in rows.iter().enumerate().skip(1) {
        assert_eq!(row.x, records[k * 20 - 1].x);
    }
}

#[test]
fn defecting_bots_finish_early_and_full_games_are_noops() {
    let reg = registry();
    let id = bot_game(&reg, 1);
    let t = run_bots(&reg, id, &BotRequest::new(BotPolicy::AlwaysD, 0)).unwrap();
    assert_eq!(t.status, Status::Finished);
    assert!(t.step < 800 && t.r < 1e-3);

    let id = bot_game(&reg, 2);
    run_bots(&reg, id, &BotRequest { count: Some(20), ..BotRequest::new(BotPolicy::AlwaysC, 0) }).unwrap();
    reg.admin(id, AdminAction::Reset).unwrap();
    for k in 0..20 {
        reg.join(id, Occupant::Player(format!("p{k}"))).unwrap();
    }
    let t = run_bots(&reg, id, &BotRequest::new(BotPolicy::AlwaysC, 0)).unwrap();
    assert!(t.seats.is_empty());
    assert_eq!(t.decisions, 0);
    assert!(reg.export(id).unwrap().is_empty());
}

#[test]
fn scripted_abm_adoptions_reproduce_resource_bitwise() {
    let params = ModelParams::reference();
    let g = generate(GraphKind::Complete, 20, 1.0, 0).unwrap();
    let sched = ControlSchedule::constant(0.0, 40.0, 1.0).unwrap();
    let opts = RealizationOptions {
        depletion_eps: 1e-3,
        trace: true,
    };
    let real = run_realization(&params, &g, &sched, 0.5, 0.5, 99, opts).unwrap();

    let reg = registry();
    let mut cfg = GameConfig::reference("abm", GameType::Individual, "A");
    cfg.seed = 99;
    let id = reg.create_game(cfg).unwrap();
    reg.admin(id, AdminAction::Enable).unwrap();
    let initial = reg.snapshot(id).unwrap().seats.iter().map(|s| s.strategy).collect::<Vec<_>>();
    assert_eq!(initial, real.initial_strategies);
    for k in 0..20 {
        reg.join(id, Occupant::Player(format!("p{k}"))).unwrap();
    }
    for step in &real.trace {
        reg.decide(id, Occupant::Player(format!("p{}", step.focal)), step.strategy).unwrap();
    }
    let records = reg.export(id).unwrap();
    assert_eq!(records.len(), real.trace.len());
    for (rec, step) in records.iter().zip(&real.trace) {
        assert_eq!(rec.r.to_bits(), step.r.to_bits());
        assert_eq!(rec.vector.matches('C').count(), step.cooperators);
    }
    assert_eq!(reg.snapshot(id).unwrap().status == Status::Finished, real.depleted_at.is_some() || real.micro_steps == 800);
}

#[test]
fn concurrent_players_are_linearised() {
    let reg = Arc::new(registry());
    let id = bot_game(&reg, 3);
    for k in 0..20 {
        reg.join(id, Occupant::Player(format!("p{k}"))).unwrap();
    }
    let handles: Vec<_> = (0..20)
        .map(|k| {
            let reg = Arc::clone(&reg);
            std::thread::spawn(move || {
                let who = Occupant::Player(format!("p{k}"));
                let choice = if k % 2 == 0 { ssg_core::Strategy::C } else { ssg_core::Strategy::D };
                let mut done = 0;
                while reg.decide(id, who.clone(), choice).is_ok() {
                    done += 1;
                }
                done
            })
        })
        .collect();
    let total: u64 = handles.into_iter().map(|h| h.join().unwrap()).sum();
    let snap = reg.snapshot(id).unwrap();
    let records = reg.export(id).unwrap();
    assert_eq!(total, snap.step);
    assert_eq!(records.len() as u64, snap.step);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r.time.step, k as u64 + 1);
    }
    let cons = check_conservation(&snap.config, 1e-3, &records).unwrap();
    assert!(cons.max_abs_error < 1e-12);
    let again = replay(&snap.config, 1e-3, &records).unwrap();
    let paid: f64 = snap.seats.iter().map(|s| s.cumulative_payoff).sum();
    assert_eq!(paid, again.total_payoff());
}

/// Mean final state of `n` bot sessions and its standard error.
fn session_ensemble(n: u64) -> [(f64, f64); 2] {
    let reg = registry();
    let finals: Vec<(f64, f64)> = (0..n)
        .map(|s| {
            let id = bot_game(&reg, 1000 + s);
            let t = run_bots(&reg, id, &BotRequest::new(BotPolicy::Replicator(-1.0), 5000 + s)).unwrap();
            (t.r, t.x)
        })
        .collect();
    let stat = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
        (m, (var / v.len() as f64).sqrt())
    };
    [stat(finals.iter().map(|f| f.0).collect()), stat(finals.iter().map(|f| f.1).collect())]
}

#[test]
fn bot_sessions_agree_with_abm_ensemble() {
    let params = ModelParams::reference();
    let sched = ControlSchedule::constant(0.0, 40.0, -1.0).unwrap();
    let spec = GraphSpec {
        kind: GraphKind::Complete,
        c: 1.0,
        regenerate: false,
    };
    let abm = run_ensemble(&params, spec, &sched, 0.5, 0.5, 200, 77, RealizationOptions::default()).unwrap();
    let [(r, se_r), (x, se_x)] = session_ensemble(50);
    let last = abm.times.len() - 1;
    let band = |se_a: f64, se_b: f64| 3.0 * (se_a * se_a + se_b * se_b).sqrt();
    assert!((r - abm.mean_r[last]).abs() <= band(se_r, abm.se_r[last]), "R {r} vs {}", abm.mean_r[last]);
    assert!((x - abm.mean_x[last]).abs() <= band(se_x, abm.se_x[last]), "x {x} vs {}", abm.mean_x[last]);
}
