//! Directed horofunctions (Busemann functions) of the supercritical
//! action potential, synthesis of hyperbolic motions with prescribed
//! limit shape, energy and initial configuration, and the fixed-point
//! residuals of the Lax-Oleinik semigroup.
//!
//! A horofunction directed by a collision-free configuration `a` is
//! approximated at level `lambda` by
//! `u_lambda(x) = phi_h(x, lambda a) - phi_h(0, lambda a)`;
//! the approximations are Cauchy in `lambda` and their calibrating
//! motions are the hyperbolic motions with limit shape `a`. The motion
//! through `x0` is synthesized by extracting the departure velocity of
//! the free-time minimizers toward `lambda a` and projecting it onto the
//! energy shell.

use crate::action::{
    free_time_minimize, minimize_fixed_time, FixedTimeOpts, FreeTimeOpts, Path,
};
use crate::jm::trajectory_action;
use crate::asymptotics::{
    classify_expansion, default_fit_window, limit_shape_fit, AsymptoticFit, ExpansionClass,
    FitOpts,
};
use crate::coords::{Configuration, Coords, Velocity};
use crate::error::{Error, Result};
use crate::integrate::{integrate, Termination, Trajectory};
use crate::system::MassSystem;
use std::collections::HashMap;
use std::sync::RwLock;

/// Geometric schedule of horofunction levels: `lambda_k = lambda0 2^k`.
#[derive(Clone, Debug)]
pub struct LambdaSchedule {
    pub lambda0: f64,
    pub doublings: usize,
}

impl LambdaSchedule {
    /// Default schedule anchored to the size of the query region:
    /// `lambda0 = 32 max(1, |x0|)`, five doublings.
    pub fn for_base_point(sys: &MassSystem, x0: &Configuration) -> Self {
        Self { lambda0: 32.0 * sys.mass_norm(x0.coords()).max(1.0), doublings: 5 }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..=self.doublings).map(|k| self.lambda0 * (1u64 << k) as f64).collect()
    }
}

/// Cached approximation of a directed horofunction `u` in `B_h(a)`.
pub struct HorofunctionApprox {
    direction: Configuration,
    energy: f64,
    lambdas: Vec<f64>,
    base_values: Vec<f64>,
    solver: FreeTimeOpts,
    // append-only cache keyed on (point bits, level); readers share
    cache: RwLock<HashMap<(Vec<u64>, u64), f64>>,
}

/// Value of the approximation at a point, with its Cauchy history.
#[derive(Clone, Debug)]
pub struct BusemannValue {
    /// `u_{lambda_max}(x)`.
    pub value: f64,
    /// `u_lambda(x)` for every scheduled lambda.
    pub per_lambda: Vec<f64>,
    /// `|u_{lambda_{k+1}}(x) - u_{lambda_k}(x)|` (diagnostic, recorded,
    /// not asserted).
    pub cauchy_deltas: Vec<f64>,
}

impl HorofunctionApprox {
    /// Builds the approximation: normalizes the direction to mass-norm 1,
    /// validates it is collision-free, and precomputes the base values
    /// `phi_h(0, lambda a)` for the whole schedule.
    pub fn build(
        sys: &MassSystem,
        a: &Configuration,
        h: f64,
        schedule: &LambdaSchedule,
        solver: FreeTimeOpts,
    ) -> Result<Self> {
        sys.check_shape(a.coords())?;
        if !(h > 0.0) {
            return Err(Error::Invalid("horofunctions need h > 0".into()));
        }
        if !sys.is_collision_free(a) {
            return Err(Error::Collision {
                min_sep: sys.min_separation(a.coords()),
                tol: sys.collision_tol(),
            });
        }
        let norm = sys.mass_norm(a.coords());
        if !(norm > 0.0) {
            return Err(Error::Invalid("direction must be nonzero".into()));
        }
        let direction = Configuration(a.coords().scaled(1.0 / norm));
        let lambdas = schedule.lambdas();
        if lambdas.len() < 3 {
            return Err(Error::Invalid("schedule needs at least 3 levels".into()));
        }
        let origin = Configuration(Coords::zeros(sys.n_bodies(), sys.dim()));
        let mut this = Self {
            direction,
            energy: h,
            lambdas,
            base_values: Vec::new(),
            solver,
            cache: RwLock::new(HashMap::new()),
        };
        let mut base = Vec::with_capacity(this.lambdas.len());
        for k in 0..this.lambdas.len() {
            base.push(this.phi_to_level(sys, &origin, k)?);
        }
        this.base_values = base;
        Ok(this)
    }

    pub fn direction(&self) -> &Configuration {
        &self.direction
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn base_values(&self) -> &[f64] {
        &self.base_values
    }

    fn target(&self, level: usize) -> Configuration {
        Configuration(self.direction.coords().scaled(self.lambdas[level]))
    }

    /// `phi_h(x, lambda_k a)`, cached on (x, k).
    fn phi_to_level(&self, sys: &MassSystem, x: &Configuration, level: usize) -> Result<f64> {
        let key: (Vec<u64>, u64) = (
            x.coords().as_slice().iter().map(|v| v.to_bits()).collect(),
            level as u64,
        );
        if let Some(&v) = self.cache.read().unwrap().get(&key) {
            return Ok(v);
        }
        let pv = free_time_minimize(sys, x, &self.target(level), self.energy, &self.solver)?;
        self.cache.write().unwrap().insert(key, pv.value);
        Ok(pv.value)
    }

    /// Evaluates the approximation at `x` across the schedule.
    pub fn eval(&self, sys: &MassSystem, x: &Configuration) -> Result<BusemannValue> {
        let mut per_lambda = Vec::with_capacity(self.lambdas.len());
        for k in 0..self.lambdas.len() {
            let phi = self.phi_to_level(sys, x, k)?;
            per_lambda.push(phi - self.base_values[k]);
        }
        let cauchy_deltas = per_lambda.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        Ok(BusemannValue { value: *per_lambda.last().unwrap(), per_lambda, cauchy_deltas })
    }
}

/// Evaluates a directed-horofunction approximation at a configuration.
pub fn busemann_eval(
    sys: &MassSystem,
    horo: &HorofunctionApprox,
    x: &Configuration,
) -> Result<BusemannValue> {
    horo.eval(sys, x)
}

/// Options for [`synthesize_hyperbolic`].
#[derive(Clone, Debug)]
pub struct SynthesisOpts {
    /// Level schedule; None anchors the default to `x0`.
    pub schedule: Option<LambdaSchedule>,
    /// Stop doubling when consecutive departure velocities differ by
    /// less (mass norm); None uses `5e-4 sqrt(2h)`.
    pub vel_tol: Option<f64>,
    /// Horizon of the forward integration.
    pub t_max: f64,
    pub integrate_tol: f64,
    pub solver: FreeTimeOpts,
    /// Accelerate the velocity sequence with one geometric
    /// extrapolation step when the observed contraction is clean.
    pub extrapolate: bool,
}

impl Default for SynthesisOpts {
    fn default() -> Self {
        Self {
            schedule: None,
            vel_tol: None,
            t_max: 1000.0,
            integrate_tol: 1e-12,
            solver: FreeTimeOpts::default(),
            extrapolate: true,
        }
    }
}

/// A synthesized hyperbolic motion.
#[derive(Clone, Debug)]
pub struct SynthesisResult {
    /// Departure velocity on the energy shell at the start state.
    pub initial_velocity: Velocity,
    pub trajectory: Trajectory,
    /// Largest level actually used.
    pub lambda_used: f64,
    /// `|v_lambda - v_previous|` per doubling.
    pub velocity_convergence: Vec<f64>,
    pub asymptotics: AsymptoticFit,
    pub classification: ExpansionClass,
    /// When `x0` has collisions the motion starts at the first interior
    /// node of the minimizer instead; this is that time offset.
    pub start_offset: Option<f64>,
    /// The state the trajectory actually starts from.
    pub start_state: (Configuration, Velocity),
}

/// Departure velocity of a path at its first node by a one-sided
/// three-point finite difference. The stencil points are spread over a
/// baseline `delta` instead of the first grid cells: solver-level node
/// noise divided by tiny spacings would otherwise dominate, while the
/// O(delta^2) truncation stays small for `delta` near 1e-2 of the
/// near-field dynamical time.
fn departure_velocity(sys: &MassSystem, path: &Path) -> Coords {
    let t = path.times();
    let t0 = t[0];
    let near = sys.characteristic_length(&Configuration(path.node(0).clone())).max(1e-3);
    let t_dyn = (near.powi(3) / sys.total_mass()).sqrt();
    let delta = (0.01 * t_dyn)
        .max(t[1] - t0)
        .min(0.2 * path.duration());
    let i1 = (1..t.len()).find(|&i| t[i] >= t0 + delta).unwrap_or(1);
    let i2 = ((i1 + 1)..t.len())
        .find(|&i| t[i] >= t0 + 2.0 * (t[i1] - t0))
        .unwrap_or((i1 + 1).min(t.len() - 1));
    let (t1, t2) = (t[i1], t[i2]);
    let w0 = (2.0 * t0 - t1 - t2) / ((t0 - t1) * (t0 - t2));
    let w1 = (t0 - t2) / ((t1 - t0) * (t1 - t2));
    let w2 = (t0 - t1) / ((t2 - t0) * (t2 - t1));
    let mut v = path.node(0).scaled(w0);
    v.add_scaled(path.node(i1), w1);
    v.add_scaled(path.node(i2), w2);
    v
}

/// Central-difference velocity near the node at `t_anchor`, over a
/// baseline comparable to the anchor time (used for collision starts
/// where the departure velocity does not exist).
fn anchored_velocity(path: &Path, anchor: usize) -> Coords {
    let t = path.times();
    let ta = t[anchor] - t[0];
    let ilo = (0..anchor).rev().find(|&i| t[i] - t[0] <= 0.6 * ta).unwrap_or(0);
    let ihi = ((anchor + 1)..t.len())
        .find(|&i| t[i] - t[0] >= 1.6 * ta)
        .unwrap_or((anchor + 1).min(t.len() - 1));
    path.node(ihi)
        .sub(path.node(ilo))
        .scaled(1.0 / (t[ihi] - t[ilo]))
}

/// Synthesizes a hyperbolic motion of energy `h` with limit shape `a`
/// through `x0`: free-time minimizers toward `lambda a` for a doubling
/// schedule of levels, departure velocities projected onto the energy
/// shell, stop at velocity convergence, then forward integration and an
/// asymptotic fit.
pub fn synthesize_hyperbolic(
    sys: &MassSystem,
    x0: &Configuration,
    a: &Configuration,
    h: f64,
    opts: &SynthesisOpts,
) -> Result<SynthesisResult> {
    sys.check_shape(x0.coords())?;
    sys.check_shape(a.coords())?;
    if !(h > 0.0) {
        return Err(Error::Invalid("synthesis needs h > 0".into()));
    }
    if !sys.is_collision_free(a) {
        return Err(Error::Collision {
            min_sep: sys.min_separation(a.coords()),
            tol: sys.collision_tol(),
        });
    }
    let norm = sys.mass_norm(a.coords());
    let a_hat = Configuration(a.coords().scaled(1.0 / norm));
    let schedule = opts
        .schedule
        .clone()
        .unwrap_or_else(|| LambdaSchedule::for_base_point(sys, x0));
    let vel_tol = opts.vel_tol.unwrap_or(5e-4 * (2.0 * h).sqrt());
    let x0_free = sys.is_collision_free(x0);

    let mut v_seq: Vec<Coords> = Vec::new();
    let mut deltas: Vec<f64> = Vec::new();
    let mut lambda_used = 0.0;
    let mut start_state: Option<(Coords, Coords, Option<f64>)> = None; // x, v_raw, t_offset

    for &lambda in &schedule.lambdas() {
        let target = Configuration(a_hat.coords().scaled(lambda));
        let pv = free_time_minimize(sys, x0, &target, h, &opts.solver)?;
        let path = pv
            .path
            .as_ref()
            .ok_or_else(|| Error::Invalid("degenerate synthesis target".into()))?;
        lambda_used = lambda;

        let (xs, v_raw, t_off) = if x0_free {
            (x0.coords().clone(), departure_velocity(sys, path), None)
        } else {
            // departure velocity is undefined at a collision: take the
            // state at an early interior node instead
            let t = path.times();
            let near = sys.characteristic_length(x0).max(1e-3);
            let t_dyn = (near.powi(3) / sys.total_mass()).sqrt();
            let delta = (0.01 * t_dyn).max(t[1] - t[0]).min(0.1 * path.duration());
            let anchor = (1..t.len() - 1).find(|&i| t[i] >= t[0] + delta).unwrap_or(1);
            (
                path.node(anchor).clone(),
                anchored_velocity(path, anchor),
                Some(t[anchor]),
            )
        };
        let v_shell = sys
            .onto_energy_shell(&xs, &v_raw, h)
            .ok_or_else(|| Error::NonConvergence("cannot project onto the energy shell".into()))?;
        if let Some(prev) = v_seq.last() {
            deltas.push(sys.mass_distance(&v_shell, prev));
        }
        v_seq.push(v_shell.clone());
        start_state = Some((xs, v_shell, t_off));

        if deltas.last().map(|&d| d <= vel_tol).unwrap_or(false) && v_seq.len() >= 3 {
            break;
        }
    }

    // the sequence has to settle; a growing tail means the minimizers
    // toward lambda a are not stabilizing (collision starts compare
    // velocities at drifting anchor nodes, so they are exempt)
    if x0_free && deltas.len() >= 2 {
        let last = deltas[deltas.len() - 1];
        let prev = deltas[deltas.len() - 2];
        if last > prev * 1.05 && last > 10.0 * vel_tol {
            return Err(Error::NonConvergence(format!(
                "departure velocities not Cauchy: deltas {deltas:?}"
            )));
        }
    }
    let (xs, mut v_star, t_off) = start_state.expect("schedule is nonempty");

    // one geometric acceleration step when the contraction is clean
    if x0_free && opts.extrapolate && v_seq.len() >= 3 && deltas.len() >= 2 {
        let r = deltas[deltas.len() - 1] / deltas[deltas.len() - 2].max(1e-300);
        if r > 0.05 && r < 0.75 {
            let last = &v_seq[v_seq.len() - 1];
            let prev = &v_seq[v_seq.len() - 2];
            let mut accel = last.clone();
            accel.add_scaled(&last.sub(prev), r / (1.0 - r));
            if let Some(v) = sys.onto_energy_shell(&xs, &accel, h) {
                v_star = v;
            }
        }
    }

    let t0 = t_off.unwrap_or(0.0);
    let xs_cfg = Configuration(xs);
    let vs_cfg = Velocity(v_star);
    let traj = integrate(sys, &xs_cfg, &vs_cfg, (t0, opts.t_max), opts.integrate_tol)?;
    if traj.terminated() != Termination::ReachedTmax {
        return Err(Error::NonConvergence(format!(
            "synthesized motion stopped early: {:?}",
            traj.terminated()
        )));
    }
    let classification = classify_expansion(sys, &traj);
    let fit = limit_shape_fit(sys, &traj, default_fit_window(sys, &traj), &FitOpts::default())?;

    Ok(SynthesisResult {
        initial_velocity: vs_cfg.clone(),
        trajectory: traj,
        lambda_used,
        velocity_convergence: deltas,
        asymptotics: fit,
        classification,
        start_offset: t_off,
        start_state: (xs_cfg, vs_cfg),
    })
}

/// Lax-Oleinik fixed-point residual along the calibrating direction at
/// every scheduled level:
/// `[u(y_t) + phi(y_t, x, t)] - [u(x) - h t]`, with `y_t` the point of
/// the calibrating motion through `x` at parameter `t`. The true
/// `T_t u` is an infimum over all `y`, so the residual is nonnegative up
/// to discretization; values near 0 certify the fixed point.
pub fn lax_oleinik_residuals(
    sys: &MassSystem,
    horo: &HorofunctionApprox,
    calibrated: &SynthesisResult,
    t: f64,
) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Invalid("t must be positive".into()));
    }
    let h = horo.energy();
    let traj = &calibrated.trajectory;
    let t_req = traj.t_start() + t;
    if t_req > traj.t_end() {
        return Err(Error::CalibrationUnavailable(format!(
            "calibrating motion covers {:.3} time units, requested {t}",
            traj.t_end() - traj.t_start()
        )));
    }
    let x = &calibrated.start_state.0;
    let (y_t, _) = traj
        .sample_at(sys, t_req)
        .map_err(|e| Error::CalibrationUnavailable(e.to_string()))?;

    // fixed-time potential between y_t and x (no h term in phi itself)
    let phi = minimize_fixed_time(sys, &y_t, x, t, 0.0, &FixedTimeOpts::default())?.value;

    let ux = horo.eval(sys, x)?;
    let uy = horo.eval(sys, &y_t)?;
    Ok(ux
        .per_lambda
        .iter()
        .zip(&uy.per_lambda)
        .map(|(ux_l, uy_l)| (uy_l + phi) - (ux_l - h * t))
        .collect())
}

/// The residual at the largest scheduled level.
pub fn lax_oleinik_residual(
    sys: &MassSystem,
    horo: &HorofunctionApprox,
    calibrated: &SynthesisResult,
    t: f64,
) -> Result<f64> {
    Ok(*lax_oleinik_residuals(sys, horo, calibrated, t)?.last().unwrap())
}

/// Calibration defect of a trajectory stretch against the horofunction:
/// `|u(gamma(t_a)) - u(gamma(t_b)) - A_{L+h}(gamma |[t_a, t_b])|`.
/// Near zero certifies that the stretch calibrates `u`.
pub fn calibration_defect_segment(
    sys: &MassSystem,
    horo: &HorofunctionApprox,
    traj: &Trajectory,
    span: (f64, f64),
) -> Result<f64> {
    let (ta, tb) = span;
    if tb <= ta {
        return Ok(0.0);
    }
    let (xa, _) = traj.sample_at(sys, ta)?;
    let (xb, _) = traj.sample_at(sys, tb)?;
    let ua = horo.eval(sys, &xa)?.value;
    let ub = horo.eval(sys, &xb)?.value;
    let action = trajectory_action(sys, traj, (ta, tb), horo.energy())?;
    Ok((ua - ub - action).abs())
}

/// Calibration defect over the first `t` time units of the trajectory.
pub fn calibration_defect(
    sys: &MassSystem,
    horo: &HorofunctionApprox,
    traj: &Trajectory,
    t: f64,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    calibration_defect_segment(sys, horo, traj, (traj.t_start(), traj.t_start() + t))
}
