//! The five subcommands. Each resolves its configuration section,
//! validates inputs (exit 64 on bad config), runs the computation
//! (exit 2 on search failure, 3 on non-convergence) and writes its
//! outputs plus a manifest.

use crate::config::{Config, ConfigError};
use crate::manifest::RunManifest;
use hypermotion::action::{free_time_bracket, free_time_minimize, minimize_fixed_time};
use hypermotion::action::{FixedTimeOpts, FreeTimeOpts, PotentialValue};
use hypermotion::asymptotics::{
    classify_expansion, limit_shape_map, perihelia_scan, ExpansionLabel, PerihelionSampler,
    ScanDataset,
};
use hypermotion::horofn::{
    busemann_eval, calibration_defect, synthesize_hyperbolic, HorofunctionApprox, LambdaSchedule,
    SynthesisOpts,
};
use hypermotion::{Configuration, Error, MassSystem, Velocity};
use std::path::Path;

/// Process exit codes of the tool.
pub const EXIT_OK: i32 = 0;
pub const EXIT_SEARCH_FAILURE: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

pub struct Ctx<'a> {
    pub config: &'a Config,
    pub out_dir: &'a Path,
    pub seed: u64,
    pub workers: usize,
    pub tol: Option<f64>,
}

/// Maps runtime errors of the toolkit onto exit codes.
fn runtime_exit(e: &Error) -> i32 {
    match e {
        Error::NonConvergence(_) | Error::CalibrationUnavailable(_) => EXIT_NON_CONVERGENCE,
        Error::Shape(_) | Error::Invalid(_) => EXIT_USAGE,
        _ => EXIT_SEARCH_FAILURE,
    }
}

fn usage(e: &ConfigError) -> i32 {
    eprintln!("error: {e}");
    EXIT_USAGE
}

/// Builds the mass system; the collision tolerance defaults to
/// `1e-9 x (characteristic length)` of the primary configuration.
fn load_system(cfg: &Config, primary: &Configuration) -> Result<MassSystem, String> {
    let masses = cfg.vector("system.masses").map_err(|e| e.to_string())?;
    let dim = cfg.usize_or("system.dim", 2).map_err(|e| e.to_string())?;
    let sys = MassSystem::new(masses, dim).map_err(|e| e.to_string())?;
    let tol = match cfg.raw("system.collision_tol") {
        Some(_) => cfg.f64("system.collision_tol").map_err(|e| e.to_string())?,
        None => 1e-9 * sys.characteristic_length(primary),
    };
    sys.with_collision_tol(tol).map_err(|e| e.to_string())
}

fn load_config_vec(cfg: &Config, key: &str, dim: usize) -> Result<Configuration, String> {
    let data = cfg.vector(key).map_err(|e| e.to_string())?;
    Configuration::from_flat(data, dim).map_err(|e| format!("config key '{key}': {e}"))
}

fn solver_opts(ctx: &Ctx, cfg: &Config, section: &str) -> Result<FreeTimeOpts, ConfigError> {
    let mut fixed = FixedTimeOpts { seed: ctx.seed, ..Default::default() };
    if cfg.raw(&format!("{section}.segments")).is_some() {
        fixed.segments = Some(cfg.usize(&format!("{section}.segments"))?);
    }
    Ok(FreeTimeOpts { fixed, ..Default::default() })
}

fn summarize_potential(pv: &PotentialValue, h: f64, lower: f64) -> String {
    let mut s = String::new();
    s.push_str(&format!("value = {:.17e}\n", pv.value));
    if let Some(t) = pv.tau_star {
        s.push_str(&format!("tau_star = {t:.17e}\n"));
    }
    if let Some((lo, hi)) = pv.diagnostics.bracket {
        s.push_str(&format!("bracket_lo = {lo:.17e}\nbracket_hi = {hi:.17e}\n"));
    }
    s.push_str(&format!("h = {h:.17e}\n"));
    s.push_str(&format!("lower_bound_sqrt2h_dist = {lower:.17e}\n"));
    s.push_str(&format!("multistart_spread = {:.8e}\n", pv.multistart_spread));
    s.push_str(&format!("grad_norm = {:.8e}\n", pv.diagnostics.grad_norm));
    if let Some(d) = pv.diagnostics.richardson_delta {
        s.push_str(&format!("richardson_delta = {d:.8e}\n"));
    }
    s
}

/// `phi`: fixed-time or free-time action potential between two
/// configurations.
pub fn cmd_phi(ctx: &Ctx) -> i32 {
    let cfg = ctx.config;
    let dim = match cfg.usize_or("system.dim", 2) {
        Ok(d) => d,
        Err(e) => return usage(&e),
    };
    let x = match load_config_vec(cfg, "phi.x", dim) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let y = match load_config_vec(cfg, "phi.y", dim) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let sys = match load_system(cfg, &x) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let mode = cfg.string("phi.mode").unwrap_or_else(|_| "free".into());
    let h = match cfg.f64("phi.h") {
        Ok(h) => h,
        Err(e) => return usage(&e),
    };
    let opts = match solver_opts(ctx, cfg, "phi") {
        Ok(o) => o,
        Err(e) => return usage(&e),
    };
    let mut manifest = RunManifest::new("phi", cfg.snapshot(), ctx.seed);

    let dist = sys.mass_distance(x.coords(), y.coords());
    let result = match mode.as_str() {
        "free" => {
            if h <= 0.0 {
                // the supercritical potential needs h > 0 (no dominated
                // functions below the critical level)
                eprintln!("error: config key 'phi.h': free mode needs h > 0, got {h}");
                return EXIT_USAGE;
            }
            free_time_minimize(&sys, &x, &y, h, &opts)
        }
        "fixed" => {
            let tau = match cfg.f64("phi.tau") {
                Ok(t) => t,
                Err(e) => return usage(&e),
            };
            minimize_fixed_time(&sys, &x, &y, tau, h, &opts.fixed)
        }
        other => {
            eprintln!("error: config key 'phi.mode': expected free|fixed, got '{other}'");
            return EXIT_USAGE;
        }
    };

    match result {
        Ok(pv) => {
            let lower = (2.0 * h.max(0.0)).sqrt() * dist;
            let mut summary = format!("command = phi\nmode = {mode}\n");
            summary.push_str(&summarize_potential(&pv, h, lower));
            match &pv.path {
                Some(path) => {
                    manifest.write_output(ctx.out_dir, "path.csv", &path.to_csv()).unwrap();
                }
                None => {
                    summary.push_str(
                        "note = endpoints coincide; the infimum 0 is not attained by a path\n",
                    );
                }
            }
            if mode == "free" {
                if let Ok((lo, hi)) = free_time_bracket(h, dist, pv.value) {
                    summary.push_str(&format!(
                        "lemma_bracket_lo = {lo:.17e}\nlemma_bracket_hi = {hi:.17e}\n"
                    ));
                }
            }
            manifest.write_output(ctx.out_dir, "summary.txt", &summary).unwrap();
            manifest.finish(ctx.out_dir).unwrap();
            println!("phi = {:.12e}  (tau* = {:?})", pv.value, pv.tau_star);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            runtime_exit(&e)
        }
    }
}

/// `synthesize`: hyperbolic motion with prescribed limit shape, energy
/// and initial configuration.
pub fn cmd_synthesize(ctx: &Ctx) -> i32 {
    let cfg = ctx.config;
    let dim = match cfg.usize_or("system.dim", 2) {
        Ok(d) => d,
        Err(e) => return usage(&e),
    };
    let (x0, a) = match (
        load_config_vec(cfg, "synthesize.x0", dim),
        load_config_vec(cfg, "synthesize.a", dim),
    ) {
        (Ok(x0), Ok(a)) => (x0, a),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let sys = match load_system(cfg, &a) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let h = match cfg.f64("synthesize.h") {
        Ok(h) if h > 0.0 => h,
        Ok(h) => {
            eprintln!("error: config key 'synthesize.h': must be positive, got {h}");
            return EXIT_USAGE;
        }
        Err(e) => return usage(&e),
    };
    if !sys.is_collision_free(&a) {
        eprintln!("error: config key 'synthesize.a': the limit shape must be collision-free");
        return EXIT_USAGE;
    }
    let t_max = match cfg.f64_or("synthesize.t_max", 1000.0) {
        Ok(t) => t,
        Err(e) => return usage(&e),
    };
    let schedule = match (
        cfg.f64_or("synthesize.lambda0", 32.0 * sys.mass_norm(x0.coords()).max(1.0)),
        cfg.usize_or("synthesize.doublings", 5),
    ) {
        (Ok(l0), Ok(d)) => LambdaSchedule { lambda0: l0, doublings: d },
        (Err(e), _) | (_, Err(e)) => return usage(&e),
    };
    let dir_tol = match cfg.f64_or("synthesize.direction_tol", 5e-3) {
        Ok(t) => t,
        Err(e) => return usage(&e),
    };
    let norm_in = sys.mass_norm(a.coords());
    let opts = SynthesisOpts {
        t_max,
        schedule: Some(schedule.clone()),
        integrate_tol: ctx.tol.unwrap_or(1e-12),
        solver: FreeTimeOpts {
            fixed: FixedTimeOpts { seed: ctx.seed, ..Default::default() },
            ..Default::default()
        },
        ..Default::default()
    };
    let mut manifest = RunManifest::new("synthesize", cfg.snapshot(), ctx.seed);

    match synthesize_hyperbolic(&sys, &x0, &a, h, &opts) {
        Ok(res) => {
            manifest
                .write_output(ctx.out_dir, "trajectory.csv", &res.trajectory.to_csv())
                .unwrap();
            let s2h = (2.0 * h).sqrt();
            let want = a.coords().scaled(s2h / norm_in);
            let dir_err = sys.mass_distance(res.asymptotics.direction.coords(), &want) / s2h;
            let mut summary = format!(
                "command = synthesize\nlambda_used = {}\nstart_offset = {:?}\n",
                res.lambda_used, res.start_offset
            );
            summary.push_str(&format!("classification = {}\n", res.classification.label));
            summary.push_str(&format!("direction_error_rel = {dir_err:.8e}\n"));
            summary.push_str(&format!(
                "fit_rms_residual = {:.8e}\nfit_ratio_L = {:.8e}\n",
                res.asymptotics.rms_residual, res.asymptotics.ratio_l
            ));
            summary.push_str(&format!(
                "velocity_convergence = {:?}\n",
                res.velocity_convergence
            ));
            let note_norm = (norm_in - 1.0).abs() > 1e-12;
            if note_norm {
                summary.push_str(&format!(
                    "note = input direction had mass-norm {norm_in:.12e}; normalized internally\n"
                ));
            }
            // calibration defects of the synthesized motion against its
            // own horofunction approximation
            if cfg.bool_or("synthesize.defects", true).unwrap_or(true) {
                match HorofunctionApprox::build(
                    &sys,
                    &a,
                    h,
                    &schedule,
                    FreeTimeOpts {
                        fixed: FixedTimeOpts { seed: ctx.seed, ..Default::default() },
                        ..Default::default()
                    },
                ) {
                    Ok(horo) => {
                        for t in [1.0, 2.0, 5.0] {
                            if let Ok(d) = calibration_defect(&sys, &horo, &res.trajectory, t) {
                                summary
                                    .push_str(&format!("calibration_defect_t{t} = {d:.8e}\n"));
                            }
                        }
                    }
                    Err(e) => summary.push_str(&format!("calibration_defect_error = {e}\n")),
                }
            }
            manifest.write_output(ctx.out_dir, "summary.txt", &summary).unwrap();
            manifest.finish(ctx.out_dir).unwrap();
            let ok = res.classification.label == ExpansionLabel::Hyperbolic && dir_err <= dir_tol;
            println!(
                "synthesized: {} direction error {dir_err:.3e} (tol {dir_tol:.1e})",
                res.classification.label
            );
            if ok {
                EXIT_OK
            } else {
                EXIT_NON_CONVERGENCE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            runtime_exit(&e)
        }
    }
}

/// `classify`: final-evolution label of one initial condition, with the
/// limit shape map when bi-directional analysis is requested.
pub fn cmd_classify(ctx: &Ctx) -> i32 {
    let cfg = ctx.config;
    let dim = match cfg.usize_or("system.dim", 2) {
        Ok(d) => d,
        Err(e) => return usage(&e),
    };
    let x = match load_config_vec(cfg, "classify.x", dim) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let v = match cfg.vector("classify.v") {
        Ok(d) => match Velocity::from_flat(d, dim) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: config key 'classify.v': {e}");
                return EXIT_USAGE;
            }
        },
        Err(e) => return usage(&e),
    };
    let sys = match load_system(cfg, &x) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let t_max = match cfg.f64_or("classify.t_max", 1000.0) {
        Ok(t) => t,
        Err(e) => return usage(&e),
    };
    let both = cfg.bool_or("classify.map", false).unwrap_or(false);
    let mut manifest = RunManifest::new("classify", cfg.snapshot(), ctx.seed);

    let tol = ctx.tol.unwrap_or(1e-12);
    let traj = match hypermotion::integrate::integrate(&sys, &x, &v, (0.0, t_max), tol) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return runtime_exit(&e);
        }
    };
    let class = classify_expansion(&sys, &traj);
    let mut summary = format!(
        "command = classify\nlabel = {}\ntermination = {:?}\n",
        class.label,
        traj.terminated()
    );
    for (i, j, s) in &class.pair_exponents {
        summary.push_str(&format!("exponent_{}_{} = {s:.8e}\n", i + 1, j + 1));
    }
    summary.push_str(&format!(
        "u_tail = {:.8e}\nmin_growth = {:.8e}\nr_over_t_peak = {:.8e}\n",
        class.evidence.u_tail, class.evidence.min_growth, class.evidence.r_over_t_peak
    ));
    if both {
        match limit_shape_map(&sys, &x, &v, t_max) {
            Ok(map) => {
                summary.push_str(&format!("bi_hyperbolic = {}\n", map.bi_hyperbolic));
                if let (Some(am), Some(ap)) = (map.a_minus(), map.a_plus()) {
                    summary.push_str(&format!(
                        "norm_a_minus = {:.12e}\nnorm_a_plus = {:.12e}\nsqrt_2h = {:.12e}\n",
                        sys.mass_norm(am.coords()),
                        sys.mass_norm(ap.coords()),
                        (2.0 * map.h).sqrt()
                    ));
                }
            }
            Err(e) => summary.push_str(&format!("map_error = {e}\n")),
        }
    }
    manifest.write_output(ctx.out_dir, "summary.txt", &summary).unwrap();
    manifest.finish(ctx.out_dir).unwrap();
    println!("classification: {}", class.label);
    EXIT_OK
}

/// `scatter`: perihelia-section scan with the limit shape map per row.
pub fn cmd_scatter(ctx: &Ctx) -> i32 {
    let cfg = ctx.config;
    let masses = match cfg.vector("system.masses") {
        Ok(m) => m,
        Err(e) => return usage(&e),
    };
    let dim = match cfg.usize_or("system.dim", 2) {
        Ok(d) => d,
        Err(e) => return usage(&e),
    };
    let sys = match MassSystem::new(masses, dim) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let n = match cfg.usize_or("scatter.samples", 50) {
        Ok(n) => n,
        Err(e) => return usage(&e),
    };
    let h = match cfg.f64("scatter.h") {
        Ok(h) if h > 0.0 => h,
        Ok(h) => {
            eprintln!("error: config key 'scatter.h': must be positive, got {h}");
            return EXIT_USAGE;
        }
        Err(e) => return usage(&e),
    };
    let t_max = match cfg.f64_or("scatter.t_max", 1000.0) {
        Ok(t) => t,
        Err(e) => return usage(&e),
    };
    let (size_min, size_max) = match (
        cfg.f64_or("scatter.size_min", 2.5),
        cfg.f64_or("scatter.size_max", 4.5),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return usage(&e),
    };
    let mut manifest = RunManifest::new("scatter", cfg.snapshot(), ctx.seed);

    let sampler = match PerihelionSampler::new(&sys, h, (size_min, size_max), n, ctx.seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let samples: Vec<_> = sampler.collect();
    let ds = perihelia_scan(&sys, samples, t_max, ctx.workers.max(1));

    // verify the two limit-shape identities per bi-hyperbolic row
    let s2h = (2.0 * h).sqrt();
    let mut bi = 0usize;
    let mut identity_violations = 0usize;
    for row in &ds.rows {
        let Some(map) = &row.map else { continue };
        if !map.bi_hyperbolic {
            continue;
        }
        bi += 1;
        let (am, ap) = (map.a_minus().unwrap(), map.a_plus().unwrap());
        let norm_ok =
            (sys.mass_norm(am.coords()) - sys.mass_norm(ap.coords())).abs() <= 1e-4 * s2h;
        let g_ok = sys
            .com(am.coords())
            .iter()
            .zip(sys.com(ap.coords()))
            .all(|(gm, gp)| (gm + gp).abs() <= 1e-6);
        if !(norm_ok && g_ok) {
            identity_violations += 1;
        }
    }
    manifest.write_output(ctx.out_dir, "scan.csv", &ds.to_csv(&sys)).unwrap();
    manifest
        .write_output(ctx.out_dir, "scan_schema.txt", &ScanDataset::schema(&sys))
        .unwrap();
    let summary = format!(
        "command = scatter\nsamples = {}\nfailures = {}\nbi_hyperbolic = {bi}\nidentity_violations = {identity_violations}\n",
        ds.rows.len(),
        ds.n_failed()
    );
    manifest.write_output(ctx.out_dir, "summary.txt", &summary).unwrap();
    manifest.finish(ctx.out_dir).unwrap();
    println!(
        "scan: {} samples, {} failed, {bi} bi-hyperbolic, {identity_violations} identity violations",
        ds.rows.len(),
        ds.n_failed()
    );
    if !ds.rows.is_empty() && ds.n_failed() == ds.rows.len() {
        EXIT_SEARCH_FAILURE
    } else {
        EXIT_OK
    }
}

/// `busemann`: table of directed-horofunction values over a probe set.
pub fn cmd_busemann(ctx: &Ctx) -> i32 {
    let cfg = ctx.config;
    let dim = match cfg.usize_or("system.dim", 2) {
        Ok(d) => d,
        Err(e) => return usage(&e),
    };
    let a = match load_config_vec(cfg, "busemann.a", dim) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let sys = match load_system(cfg, &a) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let h = match cfg.f64("busemann.h") {
        Ok(h) if h > 0.0 => h,
        Ok(h) => {
            eprintln!("error: config key 'busemann.h': must be positive, got {h}");
            return EXIT_USAGE;
        }
        Err(e) => return usage(&e),
    };
    let schedule = match (
        cfg.f64_or("busemann.lambda0", 32.0),
        cfg.usize_or("busemann.doublings", 5),
    ) {
        (Ok(l0), Ok(d)) => LambdaSchedule { lambda0: l0, doublings: d },
        (Err(e), _) | (_, Err(e)) => return usage(&e),
    };
    // probe points: busemann.point_0, busemann.point_1, ...
    let mut points = Vec::new();
    let keys: Vec<String> = cfg
        .keys_with_prefix("busemann.point_")
        .map(|s| s.to_string())
        .collect();
    for key in keys {
        match load_config_vec(cfg, &key, dim) {
            Ok(p) => points.push((key.clone(), p)),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
    }
    if points.is_empty() {
        eprintln!("error: config key 'busemann.point_0': missing (need at least one probe)");
        return EXIT_USAGE;
    }
    let mut manifest = RunManifest::new("busemann", cfg.snapshot(), ctx.seed);

    let horo = match HorofunctionApprox::build(
        &sys,
        &a,
        h,
        &schedule,
        FreeTimeOpts {
            fixed: FixedTimeOpts { seed: ctx.seed, ..Default::default() },
            ..Default::default()
        },
    ) {
        Ok(hh) => hh,
        Err(e) => {
            eprintln!("error: {e}");
            return runtime_exit(&e);
        }
    };
    let mut table = String::from("point, lambda, u_lambda, cauchy_delta\n");
    for (name, p) in &points {
        match busemann_eval(&sys, &horo, p) {
            Ok(val) => {
                for (k, u) in val.per_lambda.iter().enumerate() {
                    let delta = if k == 0 {
                        String::from("nan")
                    } else {
                        format!("{:.16e}", val.cauchy_deltas[k - 1])
                    };
                    table.push_str(&format!(
                        "{name}, {:.16e}, {u:.16e}, {delta}\n",
                        horo.lambdas()[k]
                    ));
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return runtime_exit(&e);
            }
        }
    }
    manifest.write_output(ctx.out_dir, "busemann.csv", &table).unwrap();
    manifest.finish(ctx.out_dir).unwrap();
    println!("busemann table over {} probe points written", points.len());
    EXIT_OK
}
