//! Subcommand pipelines: validate, run, stationary, continuation, depend,
//! fit.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use dnflow_core::diagnostics::{
    check_step_inequality, continuous_dependence, separation_monitor, uniform_bound_monitor,
    BoundReport, DependenceReport, Regime, SeparationReport,
};
use dnflow_core::scenario::{validate_scenario, CheckStatus, Scenario, ValidationReport};
use dnflow_core::spatial::{Field, FieldExpr};
use dnflow_core::stationary::{
    distance_series, fit_decay, lojasiewicz_probe, omega_limit_detect, solve_stationary,
    DecayFit, DecayMode, LojProbe, StationaryReport,
};
use dnflow_core::stepper::{
    continuation_report, run, rung_scenario, validate_ladder, ContinuationReport, Forcing,
    Trajectory,
};

use crate::config::{build_expr, continuation_ladder, parse_config, Resolved};
use crate::manifest::{LedgerSummary, RunManifest};
use crate::output::{
    ensure_dir, print_json, write_decay_csv, write_json, write_ledger, write_snapshots,
};
use crate::{CliError, Failure};

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, manifest.to_canonical_string())
        .map_err(|e| CliError::io(format!("write {path:?}: {e}")))
}

pub struct CommandArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: usize,
    pub checkpoint_every: Option<usize>,
}

struct Prepared {
    res: Resolved,
    out_dir: PathBuf,
    checkpoint_every: usize,
    validation: ValidationReport,
}

fn load(args: &CommandArgs) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::io(format!("read {:?}: {e}", args.config)))?;
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    parse_config(&text, &base)
}

fn prepare(args: &CommandArgs) -> Result<Prepared, CliError> {
    let res = load(args)?;
    let validation = validate_scenario(&res.scenario, &res.toggles);
    if !validation.hard_pass() {
        let tags: Vec<String> = validation
            .failing_tags()
            .iter()
            .map(|t| t.to_string())
            .collect();
        return Err(CliError::validation(
            "validation",
            format!("scenario fails hypothesis checks: {tags:?}"),
            tags,
        ));
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| res.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let checkpoint_every = args.checkpoint_every.unwrap_or(res.checkpoint_every).max(1);
    Ok(Prepared {
        res,
        out_dir,
        checkpoint_every,
        validation,
    })
}

// ---- report serialization ----------------------------------------------

fn validation_json(rep: &ValidationReport) -> Value {
    json!({
        "hard_pass": rep.hard_pass(),
        "items": rep.items.iter().map(|i| json!({
            "tag": i.tag,
            "name": i.name,
            "status": match i.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::Warn => "warn",
                CheckStatus::NotApplicable => "not_applicable",
            },
            "detail": i.detail,
        })).collect::<Vec<_>>(),
    })
}

fn bounds_json(rep: &BoundReport) -> Value {
    json!({
        "regime": match rep.regime {
            Regime::S0F1 => "s0+f1",
            Regime::F2 => "f2",
            Regime::Generic => "generic",
        },
        "full_max": { "u": rep.full_max[0], "du": rep.full_max[1], "b": rep.full_max[2],
                       "beta_eps": rep.full_max[3], "energy": rep.full_max[4] },
        "half_max": { "u": rep.half_max[0], "du": rep.half_max[1], "b": rep.half_max[2],
                       "beta_eps": rep.half_max[3], "energy": rep.half_max[4] },
        "drift": rep.drift,
        "drift_tol": rep.drift_tol,
        "pass": rep.pass,
        "note": rep.note,
    })
}

fn separation_json(rep: &SeparationReport) -> Value {
    json!({
        "upper_margin": rep.upper_margin,
        "lower_margin": rep.lower_margin,
        "holder_delta": rep.holder_delta,
        "holder_nu": rep.holder_nu,
        "exclusion_radius_upper": rep.exclusion_radius_upper,
        "exclusion_radius_lower": rep.exclusion_radius_lower,
        "pass": rep.pass,
    })
}

fn stationary_json(rep: &StationaryReport) -> Value {
    json!({
        "residual": rep.residual,
        "eps_path": rep.eps_path,
        "weak_inclusion": rep.weak_inclusion,
        "tail_rate": rep.tail_rate,
        "f_tail": rep.f_tail,
    })
}

fn decay_json(fit: &DecayFit) -> Value {
    json!({
        "mode": match fit.mode { DecayMode::Algebraic => "algebraic", DecayMode::Exponential => "exponential" },
        "c": fit.c,
        "rate": fit.rate,
        "r_squared": fit.r_squared,
        "window": { "lo": fit.window.0, "hi": fit.window.1 },
        "samples": fit.samples,
    })
}

fn loj_json(probe: &LojProbe) -> Value {
    json!({
        "theta": probe.theta,
        "c_ell": if probe.c_ell.is_finite() { Some(probe.c_ell) } else { None },
        "per_theta": probe.per_theta.iter().map(|p| json!({
            "theta": p.theta,
            "c_ell": if p.c_ell.is_finite() { Some(p.c_ell) } else { None },
            "bounded": p.bounded,
        })).collect::<Vec<_>>(),
        "samples": probe.samples.len(),
    })
}

fn continuation_json(rep: &ContinuationReport) -> Value {
    json!({
        "rungs": rep.rungs.iter().map(|r| json!({"tau": r.tau, "eps": r.eps, "nu": r.nu})).collect::<Vec<_>>(),
        "sup_diffs": rep.sup_diffs,
        "final_phi": rep.final_phi,
        "final_phi_diffs": rep.final_phi_diffs,
        "min_u": rep.min_u,
        "max_u": rep.max_u,
    })
}

fn dependence_json(delta: f64, rep: &DependenceReport) -> Value {
    json!({
        "delta": delta,
        "delta0_norm": rep.delta0,
        "lipschitz": rep.lipschitz,
        "sigma": rep.sigma,
        "pass": rep.pass,
        "times": rep.times,
        "ratios": rep.ratios,
        "envelope": rep.envelope,
    })
}

// ---- g (stationary right-hand side) from the forcing ---------------------

fn stationary_g(scn: &Scenario) -> Result<Field, CliError> {
    match &scn.forcing {
        Forcing::Zero | Forcing::Decaying { .. } => Ok(Field::zeros(scn.grid())),
        Forcing::Constant(profile) => Ok(Field {
            values: profile.clone(),
            time: 0.0,
        }),
        Forcing::Tabulated { .. } => Err(CliError::precondition(
            "precondition",
            "long-time analysis needs zero, decaying, or constant forcing",
        )),
    }
}

fn auto_regime(scn: &Scenario) -> Regime {
    let sf = scn.alpha.slope_floor();
    let s0 = sf.s_minus == 0.0 && sf.s_plus == 0.0;
    match &scn.forcing {
        Forcing::Constant(_) => Regime::F2,
        Forcing::Zero | Forcing::Decaying { .. } if s0 => Regime::S0F1,
        _ => Regime::Generic,
    }
}

fn regime_from(cfg: &str, scn: &Scenario) -> Regime {
    match cfg {
        "s0f1" | "s0+f1" => Regime::S0F1,
        "f2" => Regime::F2,
        "generic" => Regime::Generic,
        _ => auto_regime(scn),
    }
}

fn run_or_partial(
    prep: &Prepared,
    manifest: &mut RunManifest,
) -> Result<Trajectory, (Option<Trajectory>, CliError)> {
    match run(&prep.res.scenario) {
        Ok(t) => Ok(t),
        Err(f) => {
            manifest.insert_report(
                "failure",
                json!({"failed_step": f.failed_step, "error": f.error.to_string()}),
            );
            Err((Some(f.partial), CliError::from_core(f.error)))
        }
    }
}

// ---- subcommands ----------------------------------------------------------

pub fn validate_cmd(args: &CommandArgs) -> Result<(), CliError> {
    match load(args) {
        Ok(res) => {
            let rep = validate_scenario(&res.scenario, &res.toggles);
            print_json(&validation_json(&rep));
            if rep.hard_pass() {
                Ok(())
            } else {
                let tags: Vec<String> = rep.failing_tags().iter().map(|t| t.to_string()).collect();
                Err(CliError {
                    failure: Failure::Validation,
                    kind: "validation".to_string(),
                    message: format!("failing hypothesis tags: {tags:?}"),
                    tags,
                })
            }
        }
        Err(e) if e.failure == Failure::Validation => {
            // constructions that never reach scenario assembly still get a
            // report with their hypothesis tag
            print_json(&json!({
                "hard_pass": false,
                "items": [{
                    "tag": e.tags.first().cloned().unwrap_or_else(|| "parse".to_string()),
                    "name": e.kind,
                    "status": "fail",
                    "detail": e.message,
                }],
            }));
            Err(e)
        }
        Err(e) => Err(e),
    }
}

pub fn run_cmd(args: &CommandArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let prep = prepare(args)?;
    let scn = &prep.res.scenario;
    let grid = scn.grid();
    ensure_dir(&prep.out_dir)?;
    ensure_dir(&prep.out_dir.join("reports"))?;

    let mut manifest = RunManifest::new("run", &scn.fingerprint);
    manifest.insert_report("validation", validation_json(&prep.validation));

    let traj = match run_or_partial(&prep, &mut manifest) {
        Ok(t) => t,
        Err((partial, err)) => {
            if let Some(t) = partial {
                let _ = write_ledger(&prep.out_dir.join("ledger.csv"), &t);
            }
            manifest.wall_time_seconds = start.elapsed().as_secs_f64();
            let _ = write_manifest(&prep.out_dir, &manifest);
            return Err(err);
        }
    };

    let mut files = vec!["ledger.csv".to_string(), "manifest.json".to_string()];
    write_ledger(&prep.out_dir.join("ledger.csv"), &traj)?;
    files.extend(write_snapshots(&prep.out_dir, grid, &traj, prep.checkpoint_every)?);

    // per-step energy inequality
    if prep.res.diagnostics.energy_check {
        let mut worst = f64::INFINITY;
        let mut passes = 0usize;
        let n = traj.n_steps();
        for k in 1..=n {
            let t = k as f64 * scn.scheme.tau;
            let f_k = scn
                .forcing
                .at(t, grid.nodes())
                .map_err(CliError::from_core)?;
            let si = check_step_inequality(
                &scn.operator,
                &scn.potential,
                &scn.alpha,
                &scn.scheme,
                &traj.states[k - 1],
                &traj.states[k],
                &f_k,
            )
            .map_err(CliError::from_core)?;
            if si.pass {
                passes += 1;
            }
            worst = worst.min(si.margin + si.tolerance);
        }
        let rep = json!({
            "steps": n,
            "passes": passes,
            "pass": passes == n,
            "worst_slack": worst,
        });
        write_json(&prep.out_dir.join("reports/energy.json"), &rep)?;
        files.push("reports/energy.json".to_string());
        manifest.insert_report("energy", rep);
    }

    // uniform bounds
    {
        let regime = regime_from(&prep.res.diagnostics.bounds_regime, scn);
        let rep = uniform_bound_monitor(&traj, regime, prep.res.diagnostics.drift_tol);
        let v = bounds_json(&rep);
        write_json(&prep.out_dir.join("reports/bounds.json"), &v)?;
        files.push("reports/bounds.json".to_string());
        manifest.insert_report("bounds", v);
    }

    // separation
    if prep.res.diagnostics.separation {
        let nu = prep.res.diagnostics.holder_nu.ok_or_else(|| {
            CliError::precondition("missing_metadata", "separation monitor requires holder_nu")
        })?;
        let rep = separation_monitor(&traj, grid, &scn.potential, nu)
            .map_err(CliError::from_core)?;
        let v = separation_json(&rep);
        write_json(&prep.out_dir.join("reports/separation.json"), &v)?;
        files.push("reports/separation.json".to_string());
        manifest.insert_report("separation", v);
    }

    // omega limit, decay, gradient inequality
    if prep.res.diagnostics.omega {
        let g = stationary_g(scn)?;
        let omega = omega_limit_detect(
            &traj,
            &scn.operator,
            &scn.potential,
            &scn.alpha,
            &scn.forcing,
            &g,
            prep.res.diagnostics.omega_tol_rate,
            prep.res.diagnostics.omega_tol_res,
        )
        .map_err(CliError::from_core)?;
        match &omega {
            None => {
                let v = json!({"settled": false});
                write_json(&prep.out_dir.join("reports/omega.json"), &v)?;
                files.push("reports/omega.json".to_string());
                manifest.insert_report("omega", v);
            }
            Some(rep) => {
                let mut v = stationary_json(rep);
                v["settled"] = json!(true);
                v["pass"] = json!(rep.residual <= prep.res.diagnostics.omega_tol_res);
                write_json(&prep.out_dir.join("reports/omega.json"), &v)?;
                files.push("reports/omega.json".to_string());
                manifest.insert_report("omega", v);

                let series = distance_series(&traj, grid, &rep.u_inf);
                let window = prep.res.diagnostics.fit_window.map(|w| (w[0], w[1]));
                let mode = match prep.res.diagnostics.decay.as_str() {
                    "algebraic" => Some(DecayMode::Algebraic),
                    "exponential" => Some(DecayMode::Exponential),
                    _ => None,
                };
                if let Some(mode) = mode {
                    match fit_decay(&series, mode, window) {
                        Ok(fit) => {
                            let v = decay_json(&fit);
                            write_decay_csv(&prep.out_dir.join("decay.csv"), &series, Some(&fit))?;
                            files.push("decay.csv".to_string());
                            write_json(&prep.out_dir.join("reports/decay.json"), &v)?;
                            files.push("reports/decay.json".to_string());
                            manifest.insert_report("decay", v);
                        }
                        Err(e) => {
                            manifest.insert_report("decay", json!({"error": e.to_string()}));
                        }
                    }
                }
                if prep.res.diagnostics.lojasiewicz {
                    let probe = lojasiewicz_probe(
                        &traj,
                        &rep.u_inf,
                        &scn.operator,
                        &scn.potential,
                        &g,
                        &prep.res.diagnostics.theta_grid,
                        1e3 * scn.scheme.tol_newton,
                    )
                    .map_err(CliError::from_core)?;
                    let v = loj_json(&probe);
                    write_json(&prep.out_dir.join("reports/lojasiewicz.json"), &v)?;
                    files.push("reports/lojasiewicz.json".to_string());
                    manifest.insert_report("lojasiewicz", v);
                }
            }
        }
    }

    manifest.ledger = Some(LedgerSummary::from_trajectory(&traj));
    files.sort();
    manifest.files = files;
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    write_manifest(&prep.out_dir, &manifest)?;
    Ok(())
}

pub fn stationary_cmd(args: &CommandArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let prep = prepare(args)?;
    let scn = &prep.res.scenario;
    ensure_dir(&prep.out_dir)?;
    ensure_dir(&prep.out_dir.join("reports"))?;
    let g = stationary_g(scn)?;
    let rep = solve_stationary(
        &scn.operator,
        &scn.potential,
        &g,
        &prep.res.stationary.eps_ladder,
        &scn.initial,
        prep.res.stationary.tol,
        scn.scheme.tol_newton,
        scn.scheme.max_newton,
    )
    .map_err(CliError::from_core)?;

    let mut manifest = RunManifest::new("stationary", &scn.fingerprint);
    manifest.insert_report("validation", validation_json(&prep.validation));
    let v = stationary_json(&rep);
    write_json(&prep.out_dir.join("reports/stationary.json"), &v)?;
    manifest.insert_report("stationary", v);
    crate::output::write_snapshot(&prep.out_dir.join("u_infinity.csv"), scn.grid(), &rep.u_inf)?;
    manifest.files = vec![
        "manifest.json".to_string(),
        "reports/stationary.json".to_string(),
        "u_infinity.csv".to_string(),
    ];
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    write_manifest(&prep.out_dir, &manifest)?;
    Ok(())
}

pub fn continuation_cmd(args: &CommandArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let prep = prepare(args)?;
    let scn = &prep.res.scenario;
    ensure_dir(&prep.out_dir)?;
    ensure_dir(&prep.out_dir.join("reports"))?;
    let ladder = continuation_ladder(&prep.res);
    validate_ladder(&ladder).map_err(CliError::from_core)?;
    // rungs are independent runs; sweep them on the worker pool
    let trajectories = run_parallel(args.threads, &ladder, |rung| {
        run(&rung_scenario(scn, rung)).map_err(|f| CliError::from_core(f.error))
    })?;
    let rep = continuation_report(scn, &ladder, &trajectories).map_err(CliError::from_core)?;
    let mut manifest = RunManifest::new("continuation", &scn.fingerprint);
    manifest.insert_report("validation", validation_json(&prep.validation));
    let v = continuation_json(&rep);
    write_json(&prep.out_dir.join("reports/continuation.json"), &v)?;
    manifest.insert_report("continuation", v);
    manifest.files = vec![
        "manifest.json".to_string(),
        "reports/continuation.json".to_string(),
    ];
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    write_manifest(&prep.out_dir, &manifest)?;
    Ok(())
}

pub fn depend_cmd(args: &CommandArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let prep = prepare(args)?;
    let scn = &prep.res.scenario;
    let grid = *scn.grid();
    ensure_dir(&prep.out_dir)?;
    ensure_dir(&prep.out_dir.join("reports"))?;
    if prep.res.depend.deltas.is_empty() {
        return Err(CliError::precondition(
            "precondition",
            "[depend] requires a nonempty deltas list",
        ));
    }
    let profile_expr = match &prep.res.depend.profile {
        Some(e) => build_expr(e, &grid, Path::new("."))?,
        None => FieldExpr::Sine {
            amplitude: 1.0,
            mode: [1, 1],
        },
    };
    let profile = profile_expr.eval(&grid).map_err(CliError::from_core)?;

    let deltas = prep.res.depend.deltas.clone();
    let make = |delta: f64| {
        let mut s = scn.clone();
        for i in 0..grid.nodes() {
            s.initial.values[i] += delta * profile.values[i];
        }
        s
    };
    let reports = run_parallel(args.threads, &deltas, |&delta| {
        continuous_dependence(scn, &make(delta)).map_err(CliError::from_core)
    })?;

    // pointwise agreement of the normalized curves across deltas
    let mut max_spread = 0.0_f64;
    for pair in reports.windows(2) {
        for (a, b) in pair[0].ratios.iter().zip(&pair[1].ratios) {
            let denom = a.abs().max(1e-12);
            max_spread = max_spread.max((a - b).abs() / denom);
        }
    }
    let all_pass = reports.iter().all(|r| r.pass);
    let mut manifest = RunManifest::new("depend", &scn.fingerprint);
    manifest.insert_report("validation", validation_json(&prep.validation));
    let v = json!({
        "pass": all_pass,
        "max_curve_spread": max_spread,
        "runs": deltas.iter().zip(&reports).map(|(d, r)| dependence_json(*d, r)).collect::<Vec<_>>(),
    });
    write_json(&prep.out_dir.join("reports/depend.json"), &v)?;
    manifest.insert_report("depend", v);
    manifest.files = vec![
        "manifest.json".to_string(),
        "reports/depend.json".to_string(),
    ];
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    write_manifest(&prep.out_dir, &manifest)?;
    Ok(())
}

pub fn fit_cmd(args: &CommandArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let prep = prepare(args)?;
    let scn = &prep.res.scenario;
    let grid = scn.grid();
    ensure_dir(&prep.out_dir)?;
    ensure_dir(&prep.out_dir.join("reports"))?;
    let traj = run(scn).map_err(|f| CliError::from_core(f.error))?;
    let g = stationary_g(scn)?;
    let omega = omega_limit_detect(
        &traj,
        &scn.operator,
        &scn.potential,
        &scn.alpha,
        &scn.forcing,
        &g,
        prep.res.diagnostics.omega_tol_rate,
        prep.res.diagnostics.omega_tol_res,
    )
    .map_err(CliError::from_core)?;
    let rep = omega.ok_or_else(|| {
        CliError::precondition(
            "not_settled",
            "the trajectory has no detected omega limit; decay fitting refused",
        )
    })?;

    let series = distance_series(&traj, grid, &rep.u_inf);
    let window = prep.res.diagnostics.fit_window.map(|w| (w[0], w[1]));
    let (fits, headline) = match prep.res.diagnostics.decay.as_str() {
        "algebraic" => {
            let f = fit_decay(&series, DecayMode::Algebraic, window).map_err(CliError::from_core)?;
            (vec![f.clone()], f)
        }
        "exponential" => {
            let f =
                fit_decay(&series, DecayMode::Exponential, window).map_err(CliError::from_core)?;
            (vec![f.clone()], f)
        }
        _ => {
            // fit both families, lead with the better correlation
            let a = fit_decay(&series, DecayMode::Algebraic, window);
            let e = fit_decay(&series, DecayMode::Exponential, window);
            match (a, e) {
                (Ok(a), Ok(e)) => {
                    let lead = if e.r_squared >= a.r_squared { e.clone() } else { a.clone() };
                    (vec![a, e], lead)
                }
                (Ok(a), Err(_)) => (vec![a.clone()], a),
                (Err(_), Ok(e)) => (vec![e.clone()], e),
                (Err(err), Err(_)) => return Err(CliError::from_core(err)),
            }
        }
    };

    let mut manifest = RunManifest::new("fit", &scn.fingerprint);
    manifest.insert_report("validation", validation_json(&prep.validation));
    let mut omega_v = stationary_json(&rep);
    omega_v["settled"] = json!(true);
    manifest.insert_report("omega", omega_v.clone());
    write_json(&prep.out_dir.join("reports/omega.json"), &omega_v)?;
    let v = json!({
        "headline": decay_json(&headline),
        "fits": fits.iter().map(decay_json).collect::<Vec<_>>(),
    });
    write_json(&prep.out_dir.join("reports/decay.json"), &v)?;
    manifest.insert_report("decay", v);
    write_decay_csv(&prep.out_dir.join("decay.csv"), &series, Some(&headline))?;
    manifest.files = vec![
        "decay.csv".to_string(),
        "manifest.json".to_string(),
        "reports/decay.json".to_string(),
        "reports/omega.json".to_string(),
    ];
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    write_manifest(&prep.out_dir, &manifest)?;
    Ok(())
}

/// Run independent jobs over a slice, optionally on `threads` workers;
/// results keep input order.
fn run_parallel<T: Sync, R: Send>(
    threads: usize,
    items: &[T],
    job: impl Fn(&T) -> Result<R, CliError> + Sync,
) -> Result<Vec<R>, CliError> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&job).collect();
    }
    let mut slots: Vec<Option<Result<R, CliError>>> = Vec::new();
    slots.resize_with(items.len(), || None);
    let slots_ref = std::sync::Mutex::new(&mut slots);
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(items.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if k >= items.len() {
                    break;
                }
                let r = job(&items[k]);
                slots_ref.lock().unwrap()[k] = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("job completed")).collect()
}
