use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use sixbq::control::{
    dual_basis, k_t, nonlinear_exact_control, ControlConfig, ControlSignal, NonlinearControlConfig,
};
use sixbq::data::random_smooth;
use sixbq::linear::{build_basis, conservation_check, spectrum_diagnostics, w_group, LinearSymbol};
use sixbq::nonlinear::{evolve, EvolveOptions, Trajectory};
use sixbq::quad::QuadratureRule;
use sixbq::spectral::{mean_value, x0_norm, FourierField, GOperator, C64};
use sixbq::stabilization::{
    decay_fit, default_window, dissipation_residual, energy, evolve_closed_loop, paired_mean_shift_run,
    period_contraction, wk_identity_residual, ClosedLoopOptions,
};
use sixbq::{Error, Result};

use super::config::RunConfig;
use super::output::RunDir;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Default)]
pub struct Checks(pub Vec<Check>);

impl Checks {
    /// Records `measured <= tolerance`.
    pub fn at_most(&mut self, name: &str, measured: f64, tolerance: f64) {
        self.0.push(Check {
            name: name.into(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        });
    }

    pub fn fail(&mut self, name: &str) {
        self.0.push(Check {
            name: name.into(),
            measured: f64::NAN,
            tolerance: f64::NAN,
            pass: false,
        });
    }

    pub fn failures(&self) -> Vec<String> {
        self.0.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect()
    }
}

pub struct Outcome {
    pub results: Value,
    pub checks: Checks,
}

fn timed<T>(run: &mut RunDir, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f();
    run.time(phase, t0.elapsed().as_secs_f64());
    out
}

fn series_rows(traj: &Trajectory, symbol: &LinearSymbol) -> Vec<Vec<f64>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(t, w)| {
            vec![
                *t,
                energy(w, symbol),
                x0_norm(&w.without_mean(), symbol.beta),
                mean_value(&w.u),
                mean_value(&w.v),
            ]
        })
        .collect()
}

const SERIES_HEADER: [&str; 5] = ["t", "energy", "x0_distance", "mean_u", "mean_ut"];

fn state_rows(traj: &Trajectory) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for (t, w) in traj.times.iter().zip(&traj.states) {
        let n = w.max_mode() as i64;
        for k in -n..=n {
            let (u, v) = w.mode(k);
            rows.push(vec![*t, k as f64, u.re, u.im, v.re, v.im]);
        }
    }
    rows
}

const STATE_HEADER: [&str; 6] = ["t", "k", "u_re", "u_im", "ut_re", "ut_im"];

fn control_rows(signal: &ControlSignal, samples: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for i in 0..samples {
        let t = signal.t_horizon * i as f64 / (samples - 1) as f64;
        let h = signal.eval(t);
        for (k, c) in h.modes() {
            rows.push(vec![t, k as f64, c.re, c.im]);
        }
    }
    rows
}

pub fn spectrum(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let basis = timed(run, "basis", || build_basis(cfg.n, cfg.beta()?, cfg.sobolev()?))?;
    let d = timed(run, "diagnostics", || spectrum_diagnostics(&basis))?;
    run.write_csv(
        "eigenvalues.csv",
        &["k", "omega", "lambda_im", "det_gap"],
        d.omegas
            .iter()
            .zip(&d.det_gap)
            .map(|((k, w), (_, gap))| vec![*k as f64, *w, *w, *gap]),
    )?;
    let mut checks = Checks::default();
    checks.at_most("orthonormality", d.gram_deviation, cfg.verify.tol);
    checks.at_most("eigen_residual", d.eigen_residual, 1e-10);
    Ok(Outcome {
        results: json!({ "spectrum": d }),
        checks,
    })
}

pub fn simulate(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let beta = cfg.beta()?;
    let w0 = cfg.initial_state()?;
    let g = cfg.g.build()?;
    let mut opts = EvolveOptions::new(cfg.t, cfg.dt, beta).with_record_every(cfg.simulate.record_every);
    if !cfg.simulate.nonlinear {
        opts = opts.linear();
    }
    let ev = timed(run, "evolve", || evolve(&w0, &g, None, &opts))?;
    let traj = &ev.trajectory;
    let symbol = LinearSymbol::standard(beta);
    let cons = conservation_check(&traj.times, &traj.states)?;
    run.write_csv("series.csv", &SERIES_HEADER, series_rows(traj, &symbol))?;
    run.write_csv("states.csv", &STATE_HEADER, state_rows(traj))?;
    let e0 = energy(&w0, &symbol);
    let e1 = energy(traj.last(), &symbol);
    let mut checks = Checks::default();
    checks.at_most("ut_mean_drift", cons.ut_drift, 1e-10);
    checks.at_most("u_mean_affine_deviation", cons.u_affine_deviation, 1e-8);
    checks.at_most("reality_defect", traj.last().reality_defect(), 1e-12);
    if !cfg.simulate.nonlinear {
        checks.at_most("linear_energy_drift", (e1 - e0).abs() / e0.max(1e-300), 1e-10);
    }
    Ok(Outcome {
        results: json!({
            "steps": ev.steps,
            "samples": traj.len(),
            "integrator": { "name": traj.meta.integrator, "order": traj.meta.order, "dt": traj.meta.dt },
            "conservation": cons,
            "energy_initial": e0,
            "energy_final": e1,
            "x0_norm_final": x0_norm(traj.last(), beta),
        }),
        checks,
    })
}

fn control_config(cfg: &RunConfig) -> Result<ControlConfig> {
    let mut c = ControlConfig::new(cfg.t, cfg.beta()?);
    c.s = cfg.sobolev()?;
    c.g = cfg.g.build()?;
    c.cond_threshold = cfg.control.cond_threshold;
    c.tol = cfg.control.tol;
    Ok(c)
}

pub fn control(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let u0 = cfg.initial_state()?;
    let ut = cfg.terminal_state()?;
    let ccfg = control_config(cfg)?;
    let mut checks = Checks::default();
    if !cfg.control.nonlinear {
        let lc = timed(run, "synthesis", || k_t(&u0, &ut, &ccfg))?;
        run.write_csv("control.csv", &["t", "k", "re", "im"], control_rows(&lc.signal, cfg.control.samples))?;
        let symbol = LinearSymbol::standard(ccfg.beta);
        run.write_csv("series.csv", &SERIES_HEADER, series_rows(&lc.trajectory, &symbol))?;
        let r = &lc.report;
        checks.at_most("terminal_error", r.terminal_error, cfg.control.tol);
        checks.at_most("moment_residual", r.moment_residual, 1e-8);
        checks.at_most("duality_residual", r.duality_residual, 1e-8);
        checks.at_most("condition_number", r.condition_number, cfg.control.cond_threshold);
        return Ok(Outcome {
            results: json!({ "mode": "linear", "report": r }),
            checks,
        });
    }
    let nl = NonlinearControlConfig {
        tol: cfg.control.fixed_point_tol,
        max_iter: cfg.control.max_iter,
        dt: cfg.control.dt.unwrap_or(cfg.dt.min(1e-4)),
        record_every: cfg.control.record_every,
        delta: cfg.control.delta,
        terminal_tol: cfg.control.terminal_tol,
        verify_refined: true,
    };
    let nc = timed(run, "fixed_point", || nonlinear_exact_control(&u0, &ut, &ccfg, &nl))?;
    run.write_csv("control.csv", &["t", "k", "re", "im"], control_rows(&nc.signal, cfg.control.samples))?;
    run.write_csv(
        "iterations.csv",
        &["iteration", "difference", "ratio", "terminal_error", "control_norm"],
        nc.report.history.iter().map(|h| {
            vec![
                h.iteration as f64,
                h.difference,
                h.ratio.unwrap_or(f64::NAN),
                h.terminal_error,
                h.control_norm,
            ]
        }),
    )?;
    let symbol = LinearSymbol::standard(ccfg.beta);
    run.write_csv("series.csv", &SERIES_HEADER, series_rows(&nc.trajectory, &symbol))?;
    let r = &nc.report;
    checks.at_most("fixed_point_difference", r.history.last().map_or(0.0, |h| h.difference), nl.tol);
    checks.at_most("terminal_error", r.terminal_error_refined.unwrap_or(r.terminal_error), nl.terminal_tol);
    checks.at_most("iterations", r.iterations as f64, nl.max_iter as f64);
    Ok(Outcome {
        results: json!({ "mode": "nonlinear", "report": r }),
        checks,
    })
}

pub fn stabilize(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let beta = cfg.beta()?;
    let w0 = cfg.initial_state()?;
    let g = cfg.g.build()?;
    let st = &cfg.stabilize;
    let opts_for = |t: f64| {
        ClosedLoopOptions::new(st.gain, t, cfg.dt, beta)
            .nonlinear(st.nonlinear)
            .with_record_every(st.record_every)
    };
    let adaptive = st.t_final.is_none() && st.gain > 0.0;
    let mut horizon = st.t_final.unwrap_or(st.initial_horizon);
    let (traj, series) = timed(run, "closed_loop", || loop {
        let (traj, series) = evolve_closed_loop(&w0, &g, &opts_for(horizon))?;
        let e0 = series.energy[0];
        let dropped = e0 <= 0.0 || e0 / series.energy.last().copied().unwrap_or(e0).max(1e-300) >= st.target_drop;
        if !adaptive || dropped || horizon * 2.0 > st.max_horizon {
            break Ok((traj, series));
        }
        horizon *= 2.0;
    })?;
    run.write_csv(
        "energy.csv",
        &["t", "energy", "xs_norm"],
        series.times.iter().zip(&series.energy).zip(&series.distance).map(|((t, e), d)| vec![*t, *e, *d]),
    )?;
    let window = st.window.unwrap_or_else(|| default_window(&series.times));
    let mut checks = Checks::default();
    let mut results = serde_json::Map::new();
    results.insert("horizon".into(), json!(horizon));
    results.insert("gain".into(), json!(st.gain));
    results.insert("nonlinear".into(), json!(st.nonlinear));
    results.insert("energy_initial".into(), json!(series.energy[0]));
    results.insert("energy_final".into(), json!(series.energy.last()));
    let fit_or_null = |values: &[f64]| match decay_fit(&series.times, values, window) {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    };
    results.insert("energy_fit".into(), fit_or_null(&series.energy));
    results.insert("distance_fit".into(), fit_or_null(&series.distance));
    if horizon >= st.period {
        let pc = period_contraction(&series, st.period, 1e-9)?;
        results.insert("period_contraction".into(), json!(pc));
    }
    if !st.nonlinear {
        let fine = ClosedLoopOptions::new(st.gain, cfg.t, cfg.dt, beta);
        let (fine_traj, _) = evolve_closed_loop(&w0, &g, &fine)?;
        let d = dissipation_residual(&fine_traj, st.gain, &g, QuadratureRule::Simpson)?;
        checks.at_most("dissipation_residual", d.relative, st.dissipation_tol);
        let e0 = series.energy[0];
        checks.at_most("energy_increase", series.max_increase().max(0.0) / e0.max(1e-300), 1e-12);
        results.insert("dissipation".into(), json!(d));
    }
    let cons = conservation_check(&traj.times, &traj.states)?;
    checks.at_most("ut_mean_drift", cons.ut_drift, 1e-12);
    checks.at_most("u_mean_drift", cons.u_affine_deviation, 1e-12);
    results.insert("conservation".into(), json!(cons));
    if st.mean_shift_check {
        let o = ClosedLoopOptions::new(st.gain, cfg.t, cfg.dt, beta).nonlinear(st.nonlinear);
        let fixed = paired_mean_shift_run(&w0, &g, &o, None)?;
        let literal = paired_mean_shift_run(&w0, &g, &o, Some(1.0 + 2.0 * fixed.eta))?;
        results.insert(
            "mean_shift".into(),
            json!({ "shifted": fixed, "literal_coefficient_discrepancy": literal.max_discrepancy }),
        );
    }
    Ok(Outcome {
        results: Value::Object(results),
        checks,
    })
}

/// Runs the invariant suite and reports each check with its measured value.
pub fn verify(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let beta = cfg.beta()?;
    let v = &cfg.verify;
    let mut checks = Checks::default();
    let mut notes = serde_json::Map::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let t0 = Instant::now();
    let basis = build_basis(cfg.n, beta, cfg.sobolev()?)?;
    let d = spectrum_diagnostics(&basis)?;
    checks.at_most("orthonormality", d.gram_deviation, v.tol);
    checks.at_most("eigen_residual", d.eigen_residual, 1e-10);
    run.time("spectrum", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let mut group: f64 = 0.0;
    for _ in 0..10 {
        let w = random_smooth(cfg.n, beta, 1.0, 2.0, rng.gen_range(-1.0..1.0), &mut rng)?;
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let diff = &w_group(&w_group(&w, a, beta), b, beta) - &w_group(&w, a + b, beta);
        group = group.max(diff.u.max_abs().max(diff.v.max_abs()) / w.u.max_abs().max(w.v.max_abs()));
    }
    checks.at_most("group_law", group, v.tol);
    run.time("group_law", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let mut freqs = basis.frequencies();
    if v.duplicate_frequency {
        freqs[1] = freqs[0];
    }
    match dual_basis(cfg.t, &freqs, cfg.control.cond_threshold) {
        Ok(db) => {
            checks.at_most("duality_residual", db.duality_residual, 1e-8);
            notes.insert("gram_condition_number".into(), json!(db.condition_number));
        }
        Err(e) => {
            checks.fail("duality_residual");
            notes.insert("gram_error".into(), json!(e.to_string()));
        }
    }
    run.time("duality", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let g_raw = cfg.g.raw()?;
    notes.insert("g_integral".into(), json!(g_raw.integral()));
    let gop = GOperator::new(&g_raw, cfg.n)?;
    let (mut mean, mut adj): (f64, f64) = (0.0, 0.0);
    let n = cfg.n;
    for _ in 0..v.random_fields {
        let mut draw = || {
            let c = (0..2 * n + 1).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            FourierField::from_coeffs(n, c)
        };
        let (f, h) = (draw()?, draw()?);
        let (gf, gh) = (gop.apply(&f)?, gop.apply(&h)?);
        mean = mean.max(gf.coeff(0).norm() / f.norm_sqr().sqrt());
        adj = adj.max((gf.inner(&h)? - f.inner(&gh)?).norm() / (f.norm_sqr() * h.norm_sqr()).sqrt());
    }
    checks.at_most("g_mean_zero", mean, v.tol);
    checks.at_most("g_self_adjoint", adj, v.tol);
    run.time("g_operator", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    match cfg.g.build() {
        Ok(g) => {
            let small = cfg.n.min(8);
            let w = random_smooth(small, beta, 1.0, 2.0, 0.2, &mut rng)?;
            let res = |dt: f64| -> Result<f64> {
                let (traj, _) = evolve_closed_loop(&w, &g, &ClosedLoopOptions::new(1.0, 1.0, dt, beta))?;
                Ok(dissipation_residual(&traj, 1.0, &g, QuadratureRule::Simpson)?.relative)
            };
            let (r1, r2) = (res(1e-3)?, res(5e-4)?);
            checks.at_most("dissipation_identity", r1, 1e-6);
            notes.insert("dissipation_order".into(), json!((r1 / r2).log2()));
            let mut w0 = w.clone();
            w0.u.set(0, C64::new(0.0, 0.0));
            let a = wk_identity_residual(&w0, 1.0, &g, 1.0, 5e-4, beta)?.residual;
            let b = wk_identity_residual(&w0, 1.0, &g, 1.0, 2.5e-4, beta)?.residual;
            checks.at_most("wk_identity", a, v.quadrature_tol);
            notes.insert("wk_identity_order".into(), json!((a / b).log2()));
        }
        Err(e) => {
            checks.fail("g_profile_valid");
            notes.insert("g_error".into(), json!(e.to_string()));
        }
    }
    run.time("closed_loop", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let mut w = random_smooth(cfg.n, beta, 1e-2, 2.0, 0.05, &mut rng)?;
    w.v.set(0, C64::new(0.01, 0.0));
    let ev = evolve(&w, &cfg.g.raw()?, None, &EvolveOptions::new(1.0, 1e-3, beta).with_record_every(10))?;
    let cons = conservation_check(&ev.trajectory.times, &ev.trajectory.states)?;
    checks.at_most("ut_mean_drift", cons.ut_drift, 1e-10);
    checks.at_most("u_mean_affine_deviation", cons.u_affine_deviation, 1e-8);
    run.time("conservation", t0.elapsed().as_secs_f64());

    Ok(Outcome {
        results: Value::Object(notes),
        checks,
    })
}

/// Builds the error-mode report body.
pub fn error_results(e: &Error) -> Value {
    let mut body = json!({ "error": e.to_string(), "exit_code": e.exit_code() });
    match e {
        Error::Constraint { name, .. } => body["constraint"] = json!(name),
        Error::BlowUp { time, norm, ceiling } => {
            body["blowup"] = json!({ "time": time, "norm": norm, "ceiling": ceiling });
        }
        Error::NoConvergence { iterations, last_diff, tol } => {
            body["no_convergence"] = json!({ "iterations": iterations, "last_difference": last_diff, "tol": tol });
        }
        _ => {}
    }
    body
}
