//! Experiment dispatch: config in, results block and tables out.

use std::path::Path;

use serde_json::{json, Map, Value};

use dgl_core::experiments::{
    check_local_gronwall, fitted_slope, run_closeness, run_congruence, run_identity_check,
    run_regime_verification, run_tail_study, ExperimentError, InitialFamily, SamplingPlan,
    StudySettings,
};
use dgl_core::regimes::critical_forcing_norm2;
use dgl_core::{
    classify_regime, integrate_adaptive, Forcing, IntegrationError, IntegrationOptions,
    LatticeState, RegimeError, RegimeReport, C64,
};

use crate::config::{ConfigError, Experiment, ForcingKind, InitialSpec, RunConfig};
use crate::output::{opt, Cell, Table};
use crate::profile::{load_profile, rescale};

pub const EXIT_OK: i32 = 0;
pub const EXIT_HYPOTHESIS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A structured failure carrying its exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub exit_code: i32,
    pub kind: &'static str,
    pub key: Option<String>,
    pub message: String,
}

impl Failure {
    pub fn to_json(&self) -> Value {
        json!({
            "exit_code": self.exit_code,
            "kind": self.kind,
            "key": self.key,
            "message": self.message,
        })
    }

    fn hypothesis(message: impl Into<String>) -> Self {
        Failure {
            exit_code: EXIT_HYPOTHESIS,
            kind: "hypothesis",
            key: None,
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Failure {
            exit_code: EXIT_NUMERICAL,
            kind: "numerical",
            key: None,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            exit_code: EXIT_CONFIG,
            kind: "config",
            key: e.key().map(str::to_string),
            message: e.to_string(),
        }
    }
}

impl From<IntegrationError> for Failure {
    fn from(e: IntegrationError) -> Self {
        match e {
            IntegrationError::StepUnderflow { .. } | IntegrationError::TooManySteps { .. } => {
                Failure::numerical(e.to_string())
            }
            _ => Failure {
                exit_code: EXIT_CONFIG,
                kind: "config",
                key: None,
                message: e.to_string(),
            },
        }
    }
}

impl From<RegimeError> for Failure {
    fn from(e: RegimeError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_hypothesis() {
            return Failure::hypothesis(e.to_string());
        }
        match e {
            ExperimentError::BlowUp { .. } => Failure::numerical(e.to_string()),
            ExperimentError::Integration(ie) => ie.into(),
            other => Failure {
                exit_code: EXIT_CONFIG,
                kind: "config",
                key: None,
                message: other.to_string(),
            },
        }
    }
}

/// Results of one run. `failure` is set when the run completed but a
/// pass/fail check did not hold, or blow-up was not expected.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub results: Value,
    pub tables: Vec<Table>,
    pub failure: Option<Failure>,
}

fn pass_or(pass: bool, what: &str) -> Option<Failure> {
    (!pass).then(|| Failure::hypothesis(format!("{what}: pass = false")))
}

fn options(cfg: &RunConfig) -> IntegrationOptions {
    IntegrationOptions {
        abs_tol: cfg.integrator.abs_tol,
        rel_tol: cfg.integrator.rel_tol,
        sample_stride: cfg.integrator.sample_stride,
        blowup_threshold: cfg.lattice.blowup_threshold,
        ..IntegrationOptions::default()
    }
}

fn settings(cfg: &RunConfig, absorb_margin: f64) -> StudySettings {
    StudySettings {
        half_width: cfg.lattice.window_half_width,
        opts: options(cfg),
        absorb_margin,
    }
}

fn in_window(state: &LatticeState, half_width: usize, key: &str) -> Result<(), ConfigError> {
    let n = half_width as i64;
    if state.fits_window(-n, 2 * half_width + 1) {
        Ok(())
    } else {
        Err(ConfigError::invalid(
            key,
            format!("non-zero sites outside the window [-{n}, {n}]"),
        ))
    }
}

pub fn build_forcing(cfg: &RunConfig, base: &Path) -> Result<Forcing, ConfigError> {
    let f = &cfg.forcing;
    let forcing = match f.kind {
        ForcingKind::SingleSite => Forcing::single_site(f.site, f.target_norm2.unwrap_or(0.0)),
        ForcingKind::ProfileFile => {
            let key = "forcing.profile_file";
            let path = f
                .profile_file
                .as_ref()
                .ok_or_else(|| ConfigError::invalid(key, "missing"))?;
            let mut state = load_profile(base, path, key)?;
            if let Some(g2) = f.target_norm2 {
                state = rescale(&state, g2, "forcing.target_norm2")?;
            }
            Forcing::new(state)
        }
    };
    in_window(forcing.state(), cfg.lattice.window_half_width, "forcing")?;
    Ok(forcing)
}

pub fn build_initial(
    spec: &InitialSpec,
    half_width: usize,
    base: &Path,
    key: &str,
) -> Result<LatticeState, ConfigError> {
    let state = match spec {
        InitialSpec::ScaledUnit { norm2, site } => {
            LatticeState::single_site(*site, C64::new(norm2.sqrt(), 0.0))
        }
        InitialSpec::ProfileFile { path, norm2 } => {
            let k = format!("{key}.profile_file.path");
            let state = load_profile(base, path, &k)?;
            match norm2 {
                Some(v) => rescale(&state, *v, &format!("{key}.profile_file.norm2"))?,
                None => state,
            }
        }
    };
    in_window(&state, half_width, key)?;
    Ok(state.on_centered_window(half_width))
}

fn regime_json(r: &RegimeReport) -> Value {
    let c = r.constants;
    json!({
        "case": r.case_label.as_str(),
        "a": c.a,
        "b": c.b,
        "c": c.c,
        "discriminant": c.d,
        "sqrt_discriminant": opt(c.k),
        "r1": opt(r.r1),
        "r2": opt(r.r2),
        "restricted_radius_sq": r.restricted_radius_sq,
        "v0_norm2": opt(r.v0_norm2),
        "delta0": opt(r.delta0),
        "rho_sq_ldgl": r.rho_sq_ldgl,
        "rho_sq_nldgl": opt(r.rho_sq_nldgl),
        "absorb_margin": r.absorb_margin,
        "rho_tilde_sq_ldgl": r.rho_tilde_sq_ldgl,
        "rho_tilde_sq_nldgl": opt(r.rho_tilde_sq_nldgl),
        "capture_radius": opt(r.capture_radius),
        "nonescape_rho1": opt(r.nonescape_rho1),
        "nonescape_r0_sq_scaled": opt(r.nonescape_r0_sq_scaled),
        "nonescape_r0_sq_alt": opt(r.nonescape_r0_sq_alt),
        "entry_time": opt(r.entry_time),
        "entry_time_nldgl": opt(r.entry_time_nldgl),
    })
}

fn key_value_table(name: &str, obj: &Value) -> Table {
    let mut t = Table::new(name, &["quantity", "value"]);
    if let Value::Object(map) = obj {
        for (k, v) in map {
            let cell = match v {
                Value::Number(n) if n.is_f64() => Cell::Num(n.as_f64().unwrap_or(f64::NAN)),
                Value::Number(n) => n.as_i64().map(Cell::Int).unwrap_or(Cell::Missing),
                Value::Bool(b) => Cell::Bool(*b),
                Value::String(s) => Cell::Text(s.clone()),
                _ => Cell::Missing,
            };
            t.push(vec![Cell::Text(k.clone()), cell]);
        }
    }
    t
}

/// Runs the configured experiment. `base` resolves relative profile paths.
pub fn run_experiment(cfg: &RunConfig, base: &Path) -> Result<Outcome, Failure> {
    let params = cfg.model.params();
    let forcing = build_forcing(cfg, base)?;
    let n = cfg.lattice.window_half_width;
    match &cfg.experiment {
        Experiment::Simulate(s) => {
            let initial = build_initial(&s.initial, n, base, "experiment.simulate.initial")?;
            let mut opts = options(cfg);
            opts.snapshot_every = s.snapshot_every;
            let traj = integrate_adaptive(&initial, &params, &forcing, s.horizon, &opts)?;
            let max_chi = traj.chi.iter().copied().fold(0.0, f64::max);
            let results = json!({
                "experiment": "simulate",
                "horizon": s.horizon,
                "final_time": traj.final_time,
                "blowup_time": opt(traj.blowup_time),
                "initial_chi": traj.chi[0],
                "terminal_chi": traj.chi.last().copied(),
                "max_chi": max_chi,
                "samples": traj.times.len(),
                "accepted_steps": traj.stats.accepted,
                "rejected_steps": traj.stats.rejected,
                "rhs_evals": traj.stats.rhs_evals,
            });
            let mut series = Table::new("trajectory", &["t", "chi"]);
            for (&t, &x) in traj.times.iter().zip(&traj.chi) {
                series.push(vec![t.into(), x.into()]);
            }
            let mut tables = vec![series];
            if !traj.snapshots.is_empty() {
                let mut snaps = Table::new("snapshots", &["t", "n", "re", "im"]);
                for s in &traj.snapshots {
                    for (j, z) in s.state.values().iter().enumerate() {
                        let site = s.state.offset() + j as i64;
                        snaps.push(vec![s.time.into(), site.into(), z.re.into(), z.im.into()]);
                    }
                }
                tables.push(snaps);
            }
            let failure = match traj.blowup_time {
                Some(t) if !s.allow_blowup => Some(Failure::numerical(format!(
                    "norm exceeded {} at t = {t}",
                    cfg.lattice.blowup_threshold
                ))),
                _ => None,
            };
            Ok(Outcome {
                results,
                tables,
                failure,
            })
        }
        Experiment::Classify(c) => {
            let report = classify_regime(
                &params,
                forcing.norm2(),
                c.v0_norm2,
                c.capture_radius,
                c.absorb_margin,
            )?;
            let mut results = regime_json(&report);
            if let Value::Object(m) = &mut results {
                m.insert("experiment".into(), "classify".into());
                m.insert("forcing_norm2".into(), forcing.norm2().into());
                m.insert(
                    "critical_forcing_norm2".into(),
                    critical_forcing_norm2(&params).into(),
                );
            }
            let tables = vec![key_value_table("regime", &results)];
            Ok(Outcome {
                results,
                tables,
                failure: None,
            })
        }
        Experiment::Closeness(c) => {
            let st = settings(cfg, 1.1);
            let f = c.family;
            let mut cases = Vec::new();
            let mut summary = Table::new(
                "closeness_summary",
                &[
                    "epsilon",
                    "sup_distance_l2",
                    "sup_distance_linf",
                    "tail_window_limsup",
                    "bound_used",
                    "limsup_bound",
                    "pass",
                ],
            );
            let mut tables = Vec::new();
            let mut reports = Vec::new();
            for (k, &eps) in c.epsilon_grid.iter().enumerate() {
                let family = InitialFamily::inward(eps, f.c0, f.cu0, f.cv0);
                let r = run_closeness(&family, &params, &forcing, c.horizon, &st)?;
                let mut series = Table::new(
                    format!("closeness_series_{k}"),
                    &["t", "dist_l2", "dist_linf", "bound"],
                );
                for s in &r.series {
                    series.push(vec![
                        s.t.into(),
                        s.dist_l2.into(),
                        s.dist_linf.into(),
                        s.bound.into(),
                    ]);
                }
                tables.push(series);
                summary.push(vec![
                    eps.into(),
                    r.sup_distance_l2.into(),
                    r.sup_distance_linf.into(),
                    r.tail_window_limsup.into(),
                    r.bound_used.into(),
                    r.limsup_bound.into(),
                    r.pass.into(),
                ]);
                cases.push(json!({
                    "epsilon": eps,
                    "sup_distance_l2": r.sup_distance_l2,
                    "sup_distance_linf": r.sup_distance_linf,
                    "tail_window_limsup": r.tail_window_limsup,
                    "bound_used": r.bound_used,
                    "limsup_bound": opt(r.limsup_bound),
                    "pass": r.pass,
                    "diagnostic": r.diagnostic,
                }));
                reports.push(r);
            }
            tables.push(summary);
            let positive: Vec<_> = reports
                .iter()
                .filter(|r| r.epsilon > 0.0 && r.sup_distance_l2 > 0.0)
                .collect();
            let slope = |f: fn(&dgl_core::experiments::ClosenessReport) -> f64| {
                let x: Vec<f64> = positive.iter().map(|r| r.epsilon).collect();
                let y: Vec<f64> = positive.iter().map(|r| f(r)).collect();
                fitted_slope(&x, &y)
            };
            let pass = reports.iter().all(|r| r.pass);
            let results = json!({
                "experiment": "closeness",
                "horizon": c.horizon,
                "cases": cases,
                "fitted_slope_l2": opt(slope(|r| r.sup_distance_l2)),
                "fitted_slope_linf": opt(slope(|r| r.sup_distance_linf)),
                "pass": pass,
            });
            Ok(Outcome {
                results,
                tables,
                failure: pass_or(pass, "closeness"),
            })
        }
        Experiment::Congruence(c) => {
            let st = settings(cfg, c.absorb_margin);
            let f = c.family;
            let template = InitialFamily::inward(c.epsilon_grid[0], f.c0, f.cu0, f.cv0);
            let plan = SamplingPlan {
                transient_cut: c.transient_cut,
                stride: c.stride,
                horizon: c.horizon,
            };
            let r = run_congruence(&params, &forcing, &c.epsilon_grid, &template, plan, &st)?;
            let mut table = Table::new(
                "congruence",
                &[
                    "epsilon",
                    "dist_v_to_u",
                    "dist_u_to_v",
                    "sampling_tolerance",
                    "bound",
                    "pass",
                ],
            );
            let rows: Vec<Value> = r
                .rows
                .iter()
                .map(|row| {
                    table.push(vec![
                        row.epsilon.into(),
                        row.dist_v_to_u.into(),
                        row.dist_u_to_v.into(),
                        row.sampling_tolerance.into(),
                        row.bound.into(),
                        row.pass.into(),
                    ]);
                    json!({
                        "epsilon": row.epsilon,
                        "dist_v_to_u": row.dist_v_to_u,
                        "dist_u_to_v": row.dist_u_to_v,
                        "sampling_tolerance": row.sampling_tolerance,
                        "bound": row.bound,
                        "pass": row.pass,
                        "warnings": row.warnings,
                    })
                })
                .collect();
            let results = json!({
                "experiment": "congruence",
                "case": r.case_label.as_str(),
                "c_limsup": r.c_limsup,
                "rows": rows,
                "non_increasing": r.non_increasing,
                "pass": r.pass,
            });
            Ok(Outcome {
                results,
                tables: vec![table],
                failure: pass_or(r.pass, "congruence"),
            })
        }
        Experiment::Tail(t) => {
            let st = settings(cfg, t.absorb_margin);
            let initial = build_initial(&t.initial, n, base, "experiment.tail.initial")?;
            let r = run_tail_study(&params, &forcing, &initial, t.horizon, t.xi, &t.k_grid, &st)?;
            let mut table = Table::new("tail", &["t", "k", "tail_mass"]);
            for (i, &time) in r.times.iter().enumerate() {
                for (j, &k) in r.k_values.iter().enumerate() {
                    table.push(vec![time.into(), k.into(), r.tail_masses[i][j].into()]);
                }
            }
            let pass = r.min_k_passing.is_some() && r.blowup_time.is_none();
            let results = json!({
                "experiment": "tail",
                "xi": r.xi,
                "k_values": r.k_values,
                "trailing_start": r.times.first().copied(),
                "min_k_passing": r.min_k_passing,
                "time_of_entry": opt(r.time_of_entry),
                "hypotheses_ok": r.hypotheses_ok,
                "hypothesis_note": r.hypothesis_note,
                "blowup_time": opt(r.blowup_time),
                "pass": pass,
            });
            Ok(Outcome {
                results,
                tables: vec![table],
                failure: pass_or(pass, "tail"),
            })
        }
        Experiment::RegimeVerify(rv) => {
            let st = settings(cfg, rv.absorb_margin);
            let r = run_regime_verification(&params, &forcing, &rv.chi0_grid, rv.horizon, &st)?;
            let mut summary = Table::new(
                "regime_points",
                &[
                    "chi0",
                    "monotone",
                    "starts_in_annulus",
                    "terminal_chi",
                    "terminal_gap_r2",
                    "envelope_max_ratio",
                    "bernoulli_max_ratio",
                    "pass",
                ],
            );
            let mut tables = Vec::new();
            let mut points = Vec::new();
            for (k, p) in r.points.iter().enumerate() {
                let mut series = Table::new(
                    format!("regime_series_{k}"),
                    &["t", "chi", "w", "bernoulli"],
                );
                for s in &p.series {
                    series.push(vec![
                        s.t.into(),
                        s.chi.into(),
                        s.w.into(),
                        s.bernoulli.into(),
                    ]);
                }
                tables.push(series);
                summary.push(vec![
                    p.chi0.into(),
                    p.monotone.into(),
                    p.starts_in_annulus.into(),
                    p.terminal_chi.into(),
                    p.terminal_gap_r2.into(),
                    p.envelope_max_ratio.into(),
                    p.bernoulli_max_ratio.into(),
                    p.pass.into(),
                ]);
                points.push(json!({
                    "chi0": p.chi0,
                    "monotone": p.monotone,
                    "starts_in_annulus": p.starts_in_annulus,
                    "annulus_stay": p.annulus_stay,
                    "terminal_chi": p.terminal_chi,
                    "terminal_gap_r2": opt(p.terminal_gap_r2),
                    "envelope_max_ratio": p.envelope_max_ratio,
                    "envelope_blowup": opt(p.envelope_blowup),
                    "envelope_ok": p.envelope_ok,
                    "bernoulli_max_ratio": opt(p.bernoulli_max_ratio),
                    "bernoulli_ok": p.bernoulli_ok,
                    "blowup_time": opt(p.blowup_time),
                    "diagnostic": p.diagnostic,
                    "pass": p.pass,
                }));
            }
            tables.push(summary);
            let mut pass = r.pass;
            let mut results = Map::new();
            results.insert("experiment".into(), "regime_verify".into());
            results.insert("horizon".into(), rv.horizon.into());
            results.insert("regime".into(), regime_json(&r.regime));
            results.insert("points".into(), Value::Array(points));
            if let Some(chi0) = rv.local_gronwall_chi0 {
                let g = check_local_gronwall(&params, &forcing, chi0, rv.horizon, &st)?;
                pass &= g.pass;
                results.insert(
                    "local_gronwall".into(),
                    json!({
                        "chi0": g.chi0,
                        "rho_sq": g.rho_sq,
                        "max_ratio": g.max_ratio,
                        "trailing_max_chi": g.trailing_max_chi,
                        "bound_ok": g.bound_ok,
                        "limsup_ok": g.limsup_ok,
                        "pass": g.pass,
                    }),
                );
            }
            results.insert("pass".into(), pass.into());
            Ok(Outcome {
                results: Value::Object(results),
                tables,
                failure: pass_or(pass, "regime_verify"),
            })
        }
        Experiment::IdentityCheck(i) => {
            let r = run_identity_check(i.samples, cfg.seed, n);
            let results = json!({
                "experiment": "identity_check",
                "samples": r.samples,
                "seed": r.seed,
                "half_width": r.half_width,
                "self_adjoint_max": r.self_adjoint_max,
                "negativity_max": r.negativity_max,
                "quadratic_form_max": r.quadratic_form_max,
                "bound_ratio_max": r.bound_ratio_max,
                "alternating_ratio": r.alternating_ratio,
                "balance_local_max": r.balance_local_max,
                "balance_nonlocal_max": r.balance_nonlocal_max,
                "lipschitz_ratio_max": r.lipschitz_ratio_max,
                "pass": r.pass,
            });
            let tables = vec![key_value_table("identities", &results)];
            Ok(Outcome {
                results,
                tables,
                failure: pass_or(r.pass, "identity_check"),
            })
        }
    }
}
