use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use ssg_core::abm::{run_ensemble, GraphSpec, RealizationOptions};
use ssg_core::inference::{
    fit_with_bank, ingest_experiment, payoff_comparison, synthetic_series, two_phase_prediction, write_payoff_csv,
    IngestFormat, IngestOptions, InferenceError, Noise, PredictionBank,
};
use ssg_core::meanfield::{integrate_with, IntegrateError, IntegrateOptions};
use ssg_core::optctl::{
    horizon_sweep, solve, solve_continuous, solve_piecewise, write_sweep_csv, OcError, OcMode, OcProblem,
};
use ssg_core::{ControlSchedule, HesState, Trajectory};
use ssg_server::bots::{run_bots, BotRequest};
use ssg_server::game::{AdminAction, GameConfig, NetworkSpec};
use ssg_server::{Registry, ServerConfig};

use crate::args::*;
use crate::error::CliError;
use crate::manifest::{Artifact, OutputDir, RunManifest, RunStatus};
use crate::plot::{line_chart, Series};

fn settings<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialise")
}

fn integrate_err(e: IntegrateError) -> CliError {
    match e {
        IntegrateError::NonFinite { .. } => CliError::Numeric(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

fn oc_err(e: OcError) -> CliError {
    match e {
        OcError::Problem(_) | OcError::Params(_) | OcError::Schedule(_) => CliError::Usage(e.to_string()),
        _ => CliError::Numeric(e.to_string()),
    }
}

fn inference_err(e: InferenceError) -> CliError {
    match e {
        InferenceError::Solver { .. } | InferenceError::Integrate(_) => CliError::Numeric(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn positive_horizon(t_f: f64) -> Result<f64, CliError> {
    if t_f.is_finite() && t_f > 0.0 {
        Ok(t_f)
    } else {
        Err(CliError::Usage(format!("--tf must be > 0, got {t_f}")))
    }
}

fn state_plot(title: &str, traj: &Trajectory, extra: Option<(&str, &ControlSchedule)>) -> String {
    let s = traj.samples();
    let mut series = vec![
        Series::new("R", s.iter().map(|p| (p.t, p.r))),
        Series::new("x", s.iter().map(|p| (p.t, p.x))),
    ];
    if let Some((name, sched)) = extra {
        series.push(Series::new(name, s.iter().map(|p| (p.t, sched.value_at(p.t)))));
    }
    line_chart(title, "t", &series)
}

fn write_schedule(sched: &ControlSchedule, out: &mut Vec<u8>) -> std::io::Result<()> {
    writeln!(out, "t_start,t_end,w")?;
    for (k, w) in sched.values().iter().enumerate() {
        writeln!(out, "{},{},{}", sched.grid()[k], sched.grid()[k + 1], w)?;
    }
    Ok(())
}

pub fn meanfield(a: &MeanfieldArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let params = a.params.resolve()?;
    let t_f = a.params.horizon(&params);
    if !(t_f.is_finite() && t_f >= 0.0) {
        return Err(CliError::Usage(format!("--tf must be >= 0, got {t_f}")));
    }
    let sched = a.control.build(t_f)?;
    let opts = IntegrateOptions {
        dt: a.dt,
        dynamics: a.dynamics.into(),
    };
    let start = HesState::new(0.0, params.r0, params.x0);
    let mut traj = integrate_with(&params, &sched, start, 0.0, opts).map_err(integrate_err)?;
    if a.per_player {
        traj = traj.per_player(params.n_players);
    }
    let mut out = OutputDir::create(&a.out.out)?;
    out.write_with("trajectory.csv", |w| traj.write_csv(w, |t| sched.value_at(t)))?;
    if a.out.svg {
        out.write("trajectory.svg", state_plot("mean field", &traj, Some(("w", &sched))).as_bytes())?;
    }
    let last = traj.last();
    let mut m = RunManifest::new("meanfield", argv, settings(a));
    m.params = Some(params);
    m.summary = json!({
        "t": last.t, "R": last.r, "x": last.x,
        "cumulative_payoff": traj.final_payoff(),
        "clamp_events": traj.clamp_events,
    });
    out.finish(m)
}

pub fn abm(a: &AbmArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let params = a.params.resolve()?;
    let t_f = positive_horizon(a.params.horizon(&params))?;
    let sched = a.control.build(t_f)?;
    let spec = GraphSpec {
        kind: a.network,
        c: a.c,
        regenerate: !a.fixed_graph,
    };
    let opts = RealizationOptions {
        depletion_eps: a.depletion_eps,
        trace: false,
    };
    let stats = run_ensemble(&params, spec, &sched, params.r0, params.x0, a.reps, a.seed, opts)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = OutputDir::create(&a.out.out)?;
    out.write_with("ensemble.csv", |w| stats.write_csv(w))?;
    if a.out.svg {
        let t = &stats.times;
        let chart = line_chart(
            &format!("{} network, {} realisations", a.network, a.reps),
            "t",
            &[
                Series::new("mean R", t.iter().copied().zip(stats.mean_r.iter().copied())),
                Series::new("mean x", t.iter().copied().zip(stats.mean_x.iter().copied())),
            ],
        );
        out.write("ensemble.svg", chart.as_bytes())?;
    }
    let last = stats.times.len() - 1;
    let mut m = RunManifest::new("abm", argv, settings(a));
    m.params = Some(params);
    m.seeds.insert("master".into(), a.seed);
    m.summary = json!({
        "t": stats.times[last],
        "mean_R": stats.mean_r[last], "se_R": stats.se_r[last],
        "mean_x": stats.mean_x[last], "se_x": stats.se_x[last],
        "realizations": stats.n_realizations,
        "depleted": stats.depleted,
        "se_defined": stats.se_defined,
    });
    if !stats.se_defined {
        m.notes
            .push("single realisation: standard errors are undefined and reported as 0".into());
    }
    out.finish(m)
}

pub fn solve_cmd(a: &SolveArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let params = a.params.resolve()?;
    let mut out = OutputDir::create(&a.out.out)?;
    let mut m = RunManifest::new("solve", argv, settings(a));
    m.seeds.insert("multistart".into(), a.seed);
    let degraded;
    if a.mode == SolveMode::Sweep {
        let horizons = parse_tf_list(&a.tf_list)?;
        let rows = horizon_sweep(&params, &horizons, a.mode2.into());
        out.write_with("sweep.csv", |w| write_sweep_csv(&rows, w))?;
        if a.out.svg {
            let pts = rows.iter().filter_map(|r| r.result.as_ref().ok().map(|p| (r.t_f, p.payoff_cum)));
            out.write("sweep.svg", line_chart("cumulative payoff", "t_f", &[Series::new("payoff", pts)]).as_bytes())?;
        }
        let failed: Vec<String> = rows
            .iter()
            .filter_map(|r| match &r.result {
                Err(e) => Some(format!("t_f = {}: {e}", r.t_f)),
                Ok(p) if p.degraded => Some(format!("t_f = {}: solver did not converge", r.t_f)),
                Ok(_) => None,
            })
            .collect();
        m.summary = json!({ "horizons": rows.len(), "failed": failed.len() });
        degraded = (!failed.is_empty()).then(|| failed.join("; "));
        m.notes = failed;
    } else {
        let t_f = positive_horizon(a.params.horizon(&params))?;
        let mode = match a.mode {
            SolveMode::FixedStrategy => OcMode::FixedStrategy,
            SolveMode::FixedResource => OcMode::FixedResource,
            _ => OcMode::Coupled,
        };
        let mut problem = OcProblem::new(params.clone(), 0.0, t_f, mode).map_err(oc_err)?.with_seed(a.seed);
        if let Some(g) = a.grid_m {
            problem = problem.with_grid(g).map_err(oc_err)?;
        }
        let sol = match a.mode {
            SolveMode::Piecewise => solve_piecewise(&problem),
            SolveMode::Continuous => solve_continuous(&problem),
            _ => solve(&problem),
        }
        .map_err(oc_err)?;
        out.write_with("solution.csv", |w| sol.write_csv(w))?;
        out.write_with("schedule.csv", |w| write_schedule(&sol.schedule, w))?;
        if a.out.svg {
            out.write("solution.svg", state_plot("optimal control", &sol.trajectory, Some(("w*", &sol.schedule))).as_bytes())?;
        }
        let last = sol.trajectory.last();
        m.summary = json!({
            "objective": sol.objective,
            "R_final": last.r, "x_final": last.x,
            "trace": sol.trace,
        });
        degraded = sol
            .trace
            .degraded
            .then(|| "solver did not reach a stationary point; best iterate written".to_string());
    }
    m.params = Some(params);
    if degraded.is_some() {
        m.status = RunStatus::Degraded;
    }
    let m = out.finish(m)?;
    match degraded {
        Some(why) => Err(CliError::Degraded(why)),
        None => Ok(m),
    }
}

pub fn synth(a: &SynthArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let params = a.params.resolve()?;
    let prediction = two_phase_prediction(&params, a.game_type, a.tau).map_err(|e| match e {
        InferenceError::Tau { .. } | InferenceError::Horizon(_) => CliError::Usage(e.to_string()),
        e => inference_err(e),
    })?;
    let noise = match a.noise {
        NoiseArg::None => Noise::None,
        NoiseArg::Binomial => Noise::Binomial { seed: a.seed },
    };
    let series = synthetic_series(&params, &prediction, a.game_type, a.reps, noise);
    let mut out = OutputDir::create(&a.out.out)?;
    out.write_with("series.csv", |w| series.write_csv(w))?;
    let sched = &prediction.schedule;
    out.write_with("model.csv", |w| prediction.trajectory.write_csv(w, |t| sched.value_at(t)))?;
    let mut m = RunManifest::new("synth", argv, settings(a));
    m.params = Some(params);
    m.seeds.insert("noise".into(), a.seed);
    m.summary = json!({ "tau": a.tau, "x_frozen": prediction.x_frozen, "realizations": a.reps });
    out.finish(m)
}

pub fn session(a: &SessionArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let params = a.params.resolve()?;
    let mut cfg = GameConfig::reference("session", a.game_type, "A");
    cfg.params = params.clone();
    cfg.network = NetworkSpec {
        kind: a.network,
        c: a.c,
        seed: a.game_seed,
    };
    cfg.seed = a.game_seed;
    let registry = Registry::ephemeral(ServerConfig {
        epsilon: a.epsilon,
        rate_limit_ms: 0,
        ..Default::default()
    });
    registry.config().validate()?;
    let usage = |e: ssg_server::ApiError| CliError::Usage(e.to_string());
    let id = registry.create_game(cfg.clone()).map_err(usage)?;
    registry.admin(id, AdminAction::Enable).map_err(usage)?;
    let transcript = run_bots(&registry, id, &BotRequest::new(a.policy, a.seed)).map_err(|e| CliError::Numeric(e.to_string()))?;
    let records = registry.export(id).map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut out = OutputDir::create(&a.out.out)?;
    out.write_with("records.jsonl", |w| {
        for r in &records {
            writeln!(w, "{}", r.to_json_line())?;
        }
        Ok(())
    })?;
    let mut text = serde_json::to_string_pretty(&cfg).expect("configs serialise");
    text.push('\n');
    out.write("game.json", text.as_bytes())?;
    let mut m = RunManifest::new("session", argv, settings(a));
    m.params = Some(params);
    m.seeds.insert("bots".into(), a.seed);
    m.seeds.insert("game".into(), a.game_seed);
    m.summary = json!({
        "decisions": transcript.decisions,
        "status": transcript.status,
        "R": transcript.r,
        "x": transcript.x,
    });
    out.finish(m)
}

fn guess_format(path: &Path) -> IngestFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "ndjson") => IngestFormat::Records,
        _ => IngestFormat::Series,
    }
}

pub fn fit(a: &FitArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let params = a.params.resolve()?;
    if !a.input.is_file() {
        return Err(CliError::Input(format!("{}: no such file", a.input.display())));
    }
    let input = Artifact::read(&a.input)?;
    let format = a.format.map(Into::into).unwrap_or_else(|| guess_format(&a.input));
    let opts = IngestOptions {
        site: a.site.clone(),
        lattice_check: !a.no_lattice_check,
        ..IngestOptions::new(params.clone(), a.game_type)
    };
    let (series, report) = ingest_experiment(&a.input, format, &opts).map_err(|e| match e {
        e @ (InferenceError::Solver { .. } | InferenceError::Integrate(_)) => CliError::Numeric(e.to_string()),
        e => CliError::Input(format!("{}: {e}", a.input.display())),
    })?;
    let bank = PredictionBank::new(&params, a.game_type).map_err(inference_err)?;
    let fit = fit_with_bank(&series, &bank, a.freeze.into()).map_err(inference_err)?;
    let payoff = payoff_comparison(&series, &fit).map_err(inference_err)?;

    let model_x: Vec<f64> = (0..fit.mean_x.len())
        .map(|t| fit.predicted.trajectory.state_at(t as f64).map_or(f64::NAN, |s| s.x))
        .collect();
    let mut out = OutputDir::create(&a.out.out)?;
    out.write_with("error_curve.csv", |w| fit.write_error_curve(w))?;
    out.write_with("predicted.csv", |w| fit.write_predicted(w))?;
    out.write_with("payoff.csv", |w| write_payoff_csv(&payoff, w))?;
    out.write_with("observed.csv", |w| {
        writeln!(w, "t,mean_x,model_x")?;
        for (t, (o, p)) in fit.mean_x.iter().zip(&model_x).enumerate() {
            writeln!(w, "{t},{o},{p}")?;
        }
        Ok(())
    })?;
    let result = json!({
        "tau_crit": fit.tau_crit,
        "error": fit.error_curve[fit.tau_crit as usize - 1],
        "x_frozen": fit.x_frozen,
        "freeze": fit.freeze,
        "game_type": a.game_type,
        "realizations": series.realizations.len(),
    });
    let mut text = serde_json::to_string_pretty(&result).expect("json values serialise");
    text.push('\n');
    out.write("tau_crit.json", text.as_bytes())?;
    if a.out.svg {
        let curve = fit.error_curve.iter().enumerate().map(|(i, e)| ((i + 1) as f64, *e));
        out.write("error_curve.svg", line_chart("error indicator", "tau", &[Series::new("E", curve)]).as_bytes())?;
        let obs = fit.mean_x.iter().enumerate().map(|(t, x)| (t as f64, *x));
        let pred = model_x.iter().enumerate().map(|(t, x)| (t as f64, *x));
        let chart = line_chart(
            &format!("tau_crit = {}", fit.tau_crit),
            "t",
            &[Series::new("observed x", obs), Series::new("model x", pred)],
        );
        out.write("fit.svg", chart.as_bytes())?;
    }
    let mut m = RunManifest::new("fit", argv, settings(a));
    m.params = Some(params);
    m.inputs.push(input);
    m.summary = result;
    m.notes = report.notes.clone();
    if report.neighbor_as_strategy > 0 {
        m.notes
            .push(format!("{} records carried a strategy in neighbor_index", report.neighbor_as_strategy));
    }
    out.finish(m)
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let mut cfg = ServerConfig::load(a.config.as_deref())?;
    if let Some(l) = &a.listen {
        cfg.listen = l.clone();
    }
    if let Some(d) = &a.data_dir {
        cfg.data_dir = d.clone();
    }
    cfg.validate()?;
    let addr = cfg.listen_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("runtime", e))?;
    runtime.block_on(async move {
        let data_dir = cfg.data_dir.display().to_string();
        let registry = Registry::open(cfg).map_err(|e| CliError::io(data_dir, e))?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::io(format!("bind {addr}"), e))?;
        let local = listener.local_addr().map_err(|e| CliError::io("listener", e))?;
        println!("listening on {local}");
        let _ = std::io::stdout().flush();
        ssg_server::serve_on(listener, Arc::new(registry), ssg_server::shutdown_signal())
            .await
            .map_err(|e| CliError::io("serve", e))
    })
}
