//! High-accuracy integration of Newton's equations `x'' = grad U(x)`.
//!
//! The stepper is the embedded Runge-Kutta-Fehlberg 7(8) pair with local
//! extrapolation (the 8th order solution is propagated) and error-per-
//! unit-step control, which keeps the energy drift far below the budgets
//! needed for trajectories out to t ~ 1e3..1e4. There is no collision
//! regularization: passages that approach a collision terminate with a
//! reason code instead. Dense output between accepted steps uses quintic
//! Hermite interpolation on (x, v, a).

use crate::coords::{Configuration, Coords, Velocity};
use crate::error::{Error, Result};
use crate::system::MassSystem;

/// Why an integration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Reached the requested end of the time span.
    ReachedTmax,
    /// Minimal separation fell below 10x the collision tolerance.
    CollisionApproach,
    /// The step controller could not meet the tolerance (near-singularity).
    StepUnderflow,
}

/// Options for [`integrate`].
#[derive(Clone, Debug)]
pub struct IntegrateOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on |step|; None caps at span/256 so escape tails keep a
    /// usable sample density for the asymptotic analyses.
    pub max_step: Option<f64>,
    pub max_steps: usize,
    /// Stop when min separation < this factor times the collision tol.
    pub collision_stop_factor: f64,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            max_step: None,
            max_steps: 4_000_000,
            collision_stop_factor: 10.0,
        }
    }
}

impl IntegrateOpts {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }
}

/// A dense solution of Newton's equations: one sample per accepted step.
/// Immutable once returned; times are strictly increasing even for
/// backward integrations (the sample order is flipped).
#[derive(Clone, Debug)]
pub struct Trajectory {
    times: Vec<f64>,
    positions: Vec<Coords>,
    velocities: Vec<Coords>,
    energy0: f64,
    terminated: Termination,
    drift_budget: f64,
}

impl Trajectory {
    /// Assemble a trajectory from externally produced samples (closed-form
    /// propagators, synthetic models for fits). Times must be strictly
    /// increasing and sample shapes consistent.
    pub fn from_samples(
        times: Vec<f64>,
        positions: Vec<Coords>,
        velocities: Vec<Coords>,
        energy0: f64,
        terminated: Termination,
    ) -> Result<Self> {
        if times.len() < 2 || times.len() != positions.len() || times.len() != velocities.len() {
            return Err(Error::Invalid("need >= 2 consistent samples".into()));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Invalid("times must be strictly increasing".into()));
        }
        Ok(Self { times, positions, velocities, energy0, terminated, drift_budget: f64::INFINITY })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn position(&self, k: usize) -> &Coords {
        &self.positions[k]
    }

    pub fn velocity(&self, k: usize) -> &Coords {
        &self.velocities[k]
    }

    pub fn state(&self, k: usize) -> (Configuration, Velocity) {
        (Configuration(self.positions[k].clone()), Velocity(self.velocities[k].clone()))
    }

    pub fn energy0(&self) -> f64 {
        self.energy0
    }

    pub fn terminated(&self) -> Termination {
        self.terminated
    }

    pub fn drift_budget(&self) -> f64 {
        self.drift_budget
    }

    /// Index of the last sample with time <= t (clamped to a valid interval).
    fn bracket(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => k.min(self.times.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.times.len() - 2),
        }
    }

    /// Dense state at an arbitrary time inside the covered span, via
    /// quintic Hermite interpolation with accelerations recomputed from
    /// the system.
    pub fn sample_at(&self, sys: &MassSystem, t: f64) -> Result<(Configuration, Velocity)> {
        if t < self.t_start() - 1e-9 || t > self.t_end() + 1e-9 {
            return Err(Error::Invalid(format!(
                "t = {t} outside trajectory span [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let k = self.bracket(t.clamp(self.t_start(), self.t_end()));
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let dt = t1 - t0;
        let s = ((t - t0) / dt).clamp(0.0, 1.0);
        let a0 = sys.accel(&self.positions[k])?;
        let a1 = sys.accel(&self.positions[k + 1])?;
        let (h, hd) = quintic_hermite_weights(s);
        let n = self.positions[k].n_bodies();
        let d = self.positions[k].dim();
        let mut x = Coords::zeros(n, d);
        let mut v = Coords::zeros(n, d);
        let terms: [(&Coords, f64); 6] = [
            (&self.positions[k], 1.0),
            (&self.velocities[k], dt),
            (&a0, dt * dt),
            (&self.positions[k + 1], 1.0),
            (&self.velocities[k + 1], dt),
            (&a1, dt * dt),
        ];
        for (i, (c, scale)) in terms.iter().enumerate() {
            x.add_scaled(c, h[i] * scale);
            v.add_scaled(c, hd[i] * scale / dt);
        }
        Ok((Configuration(x), Velocity(v)))
    }

    /// Maximum |energy(t_k) - energy0| over the stored samples.
    pub fn max_energy_drift(&self, sys: &MassSystem) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.len() {
            let u = sys.potential_coords(&self.positions[k]);
            let e = 0.5 * sys.mass_inner(&self.velocities[k], &self.velocities[k]) - u;
            worst = worst.max((e - self.energy0).abs());
        }
        worst
    }

    /// CSV with header `t, x_1_1..x_N_d, v_1_1..v_N_d`, one sample per
    /// row, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.positions[0].n_bodies();
        let d = self.positions[0].dim();
        let mut out = String::from("t");
        for i in 1..=n {
            for k in 1..=d {
                out.push_str(&format!(", x_{i}_{k}"));
            }
        }
        for i in 1..=n {
            for k in 1..=d {
                out.push_str(&format!(", v_{i}_{k}"));
            }
        }
        out.push('\n');
        for s in 0..self.len() {
            out.push_str(&format!("{:.16e}", self.times[s]));
            for v in self.positions[s].as_slice() {
                out.push_str(&format!(", {v:.16e}"));
            }
            for v in self.velocities[s].as_slice() {
                out.push_str(&format!(", {v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Quintic Hermite basis (values, derivatives) at `s` in [0, 1] for data
/// (p0, v0, a0, p1, v1, a1); velocity terms carry a factor dt and
/// acceleration terms dt^2.
fn quintic_hermite_weights(s: f64) -> ([f64; 6], [f64; 6]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h = [
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
        10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
        0.5 * s3 - s4 + 0.5 * s5,
    ];
    let hd = [
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
        30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
        1.5 * s2 - 4.0 * s3 + 2.5 * s4,
    ];
    (h, hd)
}

// Fehlberg 7(8) tableau (13 stages, exact rationals).
const STAGES: usize = 13;
const C: [f64; STAGES] = [
    0.0,
    2.0 / 27.0,
    1.0 / 9.0,
    1.0 / 6.0,
    5.0 / 12.0,
    0.5,
    5.0 / 6.0,
    1.0 / 6.0,
    2.0 / 3.0,
    1.0 / 3.0,
    1.0,
    0.0,
    1.0,
];
const A: [&[f64]; STAGES] = [
    &[],
    &[2.0 / 27.0],
    &[1.0 / 36.0, 1.0 / 12.0],
    &[1.0 / 24.0, 0.0, 1.0 / 8.0],
    &[5.0 / 12.0, 0.0, -25.0 / 16.0, 25.0 / 16.0],
    &[1.0 / 20.0, 0.0, 0.0, 0.25, 0.2],
    &[-25.0 / 108.0, 0.0, 0.0, 125.0 / 108.0, -65.0 / 27.0, 125.0 / 54.0],
    &[31.0 / 300.0, 0.0, 0.0, 0.0, 61.0 / 225.0, -2.0 / 9.0, 13.0 / 900.0],
    &[2.0, 0.0, 0.0, -53.0 / 6.0, 704.0 / 45.0, -107.0 / 9.0, 67.0 / 90.0, 3.0],
    &[
        -91.0 / 108.0,
        0.0,
        0.0,
        23.0 / 108.0,
        -976.0 / 135.0,
        311.0 / 54.0,
        -19.0 / 60.0,
        17.0 / 6.0,
        -1.0 / 12.0,
    ],
    &[
        2383.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -301.0 / 82.0,
        2133.0 / 4100.0,
        45.0 / 82.0,
        45.0 / 164.0,
        18.0 / 41.0,
    ],
    &[
        3.0 / 205.0,
        0.0,
        0.0,
        0.0,
        0.0,
        -6.0 / 41.0,
        -3.0 / 205.0,
        -3.0 / 41.0,
        3.0 / 41.0,
        6.0 / 41.0,
        0.0,
    ],
    &[
        -1777.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -289.0 / 82.0,
        2193.0 / 4100.0,
        51.0 / 82.0,
        33.0 / 164.0,
        12.0 / 41.0,
        0.0,
        1.0,
    ],
];
// 8th order weights (propagated solution).
const B8: [f64; STAGES] = [
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    34.0 / 105.0,
    9.0 / 35.0,
    9.0 / 35.0,
    9.0 / 280.0,
    9.0 / 280.0,
    0.0,
    41.0 / 840.0,
    41.0 / 840.0,
];

/// Integrates Newton's equations from `(x0, v0)` over `t_span` (backward
/// when `t_span.1 < t_span.0`) at the given tolerance.
pub fn integrate(
    sys: &MassSystem,
    x0: &Configuration,
    v0: &Velocity,
    t_span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    integrate_with(sys, x0, v0, t_span, &IntegrateOpts::with_tol(tol))
}

/// [`integrate`] with full control of the step options.
pub fn integrate_with(
    sys: &MassSystem,
    x0: &Configuration,
    v0: &Velocity,
    t_span: (f64, f64),
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    sys.check_shape(x0.coords())?;
    sys.check_shape(v0.coords())?;
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Invalid("tolerances must be positive".into()));
    }
    let (t0, t1) = t_span;
    if !(t1 - t0).is_finite() || t1 == t0 {
        return Err(Error::Invalid("empty or non-finite time span".into()));
    }
    let energy0 = sys.energy(x0, v0)?;
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();

    let n = sys.n_bodies();
    let d = sys.dim();
    let m = n * d;
    // state = [x, v] flat
    let mut y = vec![0.0; 2 * m];
    y[..m].copy_from_slice(x0.coords().as_slice());
    y[m..].copy_from_slice(v0.coords().as_slice());
    let mut t = t0;

    let mut times = vec![t0];
    let mut positions = vec![x0.coords().clone()];
    let mut velocities = vec![v0.coords().clone()];

    let deriv = |y: &[f64], dy: &mut [f64]| -> Result<()> {
        let x = Coords::from_flat(y[..m].to_vec(), d).map_err(|_| Error::Invalid(
            "non-finite state during integration".into(),
        ))?;
        let a = sys.accel(&x)?;
        dy[..m].copy_from_slice(&y[m..]);
        dy[m..].copy_from_slice(a.as_slice());
        Ok(())
    };

    // initial step from the acceleration scale
    let mut h = {
        let mut dy = vec![0.0; 2 * m];
        deriv(&y, &mut dy)?;
        let scale: f64 = dy.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        (0.01 * (1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt()) / scale)
            .min(span)
            .max(1e-8 * span)
    };
    let step_cap = opts.max_step.unwrap_or(span / 256.0);
    h = h.min(step_cap);

    let mut k = vec![vec![0.0; 2 * m]; STAGES];
    let mut ytmp = vec![0.0; 2 * m];
    let mut terminated = Termination::ReachedTmax;
    let mut steps = 0usize;

    'outer: while (t - t1) * dir < 0.0 {
        if steps >= opts.max_steps {
            return Err(Error::Budget(format!("integrator exceeded {} steps", opts.max_steps)));
        }
        steps += 1;
        let h_min = 1e-14 * t.abs().max(span);
        let remaining = (t1 - t) * dir;
        if remaining <= h_min {
            break; // within rounding of the requested end
        }
        h = h.min(remaining);
        if h <= h_min {
            terminated = Termination::StepUnderflow;
            break;
        }
        let hs = h * dir;

        // stages; a collision inside a stage forces a retry with smaller h
        let mut stage_fail = false;
        for s in 0..STAGES {
            ytmp.copy_from_slice(&y);
            for (j, &a) in A[s].iter().enumerate() {
                if a != 0.0 {
                    for i in 0..2 * m {
                        ytmp[i] += hs * a * k[j][i];
                    }
                }
            }
            let _ = C[s]; // stage time unused: the system is autonomous
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            if deriv(&ytmp, &mut tail[0]).is_err() {
                stage_fail = true;
                break;
            }
        }
        if stage_fail {
            h *= 0.25;
            if h <= h_min {
                terminated = Termination::StepUnderflow;
                break;
            }
            continue 'outer;
        }

        // 8th order candidate and embedded error
        let mut ynew = y.clone();
        for s in 0..STAGES {
            if B8[s] != 0.0 {
                for i in 0..2 * m {
                    ynew[i] += hs * B8[s] * k[s][i];
                }
            }
        }
        // err = 41/840 (k0 + k10 - k11 - k12) * h
        let mut err_rms = 0.0;
        for i in 0..2 * m {
            let e = 41.0 / 840.0 * h * (k[0][i] + k[10][i] - k[11][i] - k[12][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            let r = e / sc;
            err_rms += r * r;
        }
        // error per unit step
        let err = (err_rms / (2 * m) as f64).sqrt() / h;

        if err <= 1.0 {
            t += hs;
            y.copy_from_slice(&ynew);
            let x = Coords::from_flat(y[..m].to_vec(), d)?;
            let v = Coords::from_flat(y[m..].to_vec(), d)?;
            let min_sep = sys.min_separation(&x);
            times.push(t);
            positions.push(x);
            velocities.push(v);
            if min_sep < opts.collision_stop_factor * sys.collision_tol() {
                terminated = Termination::CollisionApproach;
                break;
            }
        }

        let factor = if err > 0.0 { 0.9 * err.powf(-1.0 / 7.0) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        h = h.min(step_cap);
    }

    if dir < 0.0 {
        times.reverse();
        positions.reverse();
        velocities.reverse();
    }
    let drift_budget = 1e-9 * (1.0 + energy0.abs()) * span.max(1.0);
    Ok(Trajectory { times, positions, velocities, energy0, terminated, drift_budget })
}

/// Residuals of the Lagrange-Jacobi identity `I'' = 4h + 2U` at every
/// stored sample, with `I''` computed analytically as
/// `2 |v|^2 + 2 <x, x''>` in the mass metric.
pub fn lagrange_jacobi_residual(sys: &MassSystem, traj: &Trajectory) -> Result<Vec<f64>> {
    let h = traj.energy0();
    let mut out = Vec::with_capacity(traj.len());
    for s in 0..traj.len() {
        let x = traj.position(s);
        let v = traj.velocity(s);
        let a = sys.accel(x)?;
        let u = sys.potential_coords(x);
        let iddot = 2.0 * sys.mass_inner(v, v) + 2.0 * sys.mass_inner(x, &a);
        out.push(iddot - 4.0 * h - 2.0 * u);
    }
    Ok(out)
}

/// The unique perihelion of a bi-hyperbolic arc: the root of
/// `I' = 2 <x, v>` inside `search_span` (times relative to the given
/// state's epoch 0). The returned state satisfies `<x, v> = 0` to
/// refinement accuracy.
pub fn perihelion_state(
    sys: &MassSystem,
    x0: &Configuration,
    v0: &Velocity,
    search_span: (f64, f64),
) -> Result<(f64, (Configuration, Velocity))> {
    let (t_lo, t_hi) = search_span;
    if !(t_hi > t_lo) {
        return Err(Error::Invalid("empty search span".into()));
    }
    let idot0 = sys.mass_inner(x0.coords(), v0.coords());
    let scale = sys.mass_norm(x0.coords()) * sys.mass_norm(v0.coords());
    if idot0.abs() <= 1e-14 * scale.max(1.0) && t_lo <= 0.0 && t_hi >= 0.0 {
        return Ok((0.0, (x0.clone(), v0.clone())));
    }
    // the state sits at epoch 0; cover the span by backward and forward
    // integrations from there
    let mut parts: Vec<Trajectory> = Vec::new();
    if t_lo < 0.0 {
        parts.push(integrate(sys, x0, v0, (0.0, t_lo), 1e-12)?);
    }
    if t_hi > 0.0 {
        parts.push(integrate(sys, x0, v0, (0.0, t_hi), 1e-12)?);
    }

    let mut bracket = None;
    'outer: for traj in &parts {
        let idot = |k: usize| sys.mass_inner(traj.position(k), traj.velocity(k));
        for k in 0..traj.len() - 1 {
            let (ta, tb) = (traj.times()[k], traj.times()[k + 1]);
            if tb < t_lo || ta > t_hi {
                continue;
            }
            if idot(k) == 0.0 && ta >= t_lo {
                bracket = Some((traj, ta, ta));
                break 'outer;
            }
            if idot(k) * idot(k + 1) < 0.0 {
                bracket = Some((traj, ta.max(t_lo), tb.min(t_hi)));
                break 'outer;
            }
        }
    }
    let (traj, mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::Bracket(format!("I' does not change sign in [{t_lo}, {t_hi}]"))
    })?;
    // I is strictly convex for h > 0, so I' is increasing: plain bisection
    // on the dense output is robust and cheap.
    let f = |t: f64| -> Result<f64> {
        let (x, v) = traj.sample_at(sys, t)?;
        Ok(sys.mass_inner(x.coords(), v.coords()))
    };
    let mut flo = f(lo)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 || (hi - lo).abs() < 1e-15 * (1.0 + mid.abs()) {
            lo = mid;
            hi = mid;
            break;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    let t_p = 0.5 * (lo + hi);
    let state = traj.sample_at(sys, t_p)?;
    Ok((t_p, state))
}

/// The homothety `x -> lambda x` maps a solution to a solution with times
/// scaled by `lambda^(3/2)`, velocities by `lambda^(-1/2)` and energy by
/// `lambda^(-1)`.
pub fn rescale_solution(traj: &Trajectory, lambda: f64) -> Result<Trajectory> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid("lambda must be positive".into()));
    }
    let tf = lambda.powf(1.5);
    let vf = lambda.powf(-0.5);
    Ok(Trajectory {
        times: traj.times.iter().map(|t| t * tf).collect(),
        positions: traj.positions.iter().map(|p| p.scaled(lambda)).collect(),
        velocities: traj.velocities.iter().map(|v| v.scaled(vf)).collect(),
        energy0: traj.energy0 / lambda,
        terminated: traj.terminated,
        drift_budget: traj.drift_budget / lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_body_circular() -> (MassSystem, Configuration, Velocity) {
        let sys = MassSystem::new(vec![1.0, 1.0], 2).unwrap();
        let x = Configuration::from_flat(vec![-0.5, 0.0, 0.5, 0.0], 2).unwrap();
        let s = 0.5f64.sqrt();
        let v = Velocity::from_flat(vec![0.0, -s, 0.0, s], 2).unwrap();
        (sys, x, v)
    }

    #[test]
    fn circular_orbit_period() {
        // period = 2 pi sqrt(abar^3 / (m1+m2)) = pi sqrt(2) for separation 1
        let (sys, x, v) = two_body_circular();
        let period = std::f64::consts::PI * 2.0f64.sqrt();
        let traj = integrate(&sys, &x, &v, (0.0, 3.0 * period), 1e-13).unwrap();
        assert_eq!(traj.terminated(), Termination::ReachedTmax);
        // after one period the state must return to the start
        let (xp, vp) = traj.sample_at(&sys, period).unwrap();
        let ex = sys.mass_distance(xp.coords(), x.coords());
        let ev = sys.mass_distance(vp.coords(), v.coords());
        assert!(ex < 1e-8, "position error {ex}");
        assert!(ev < 1e-8, "velocity error {ev}");
    }

    #[test]
    fn energy_drift_within_budget() {
        let (sys, x, v) = two_body_circular();
        let traj = integrate(&sys, &x, &v, (0.0, 100.0), 1e-12).unwrap();
        let h = traj.energy0();
        let drift = traj.max_energy_drift(&sys);
        assert!(drift <= 1e-9 * (1.0 + h.abs()) * 100.0, "drift {drift}");
    }

    #[test]
    fn velocity_reversal_mirrors_the_flow() {
        // integrate(x0, -v0, T) is the time reversal of integrate(x0, v0, -T)
        let (sys, x, v) = two_body_circular();
        let vneg = Velocity(v.coords().scaled(-1.0));
        let fwd = integrate(&sys, &x, &vneg, (0.0, 5.0), 1e-13).unwrap();
        let back = integrate(&sys, &x, &v, (0.0, -5.0), 1e-13).unwrap();
        for f in [0.2, 0.6, 1.0] {
            let (xa, va) = fwd.sample_at(&sys, 5.0 * f).unwrap();
            let (xb, vb) = back.sample_at(&sys, -5.0 * f).unwrap();
            assert!(sys.mass_distance(xa.coords(), xb.coords()) < 1e-9);
            assert!(
                sys.mass_distance(va.coords(), &vb.coords().scaled(-1.0)) < 1e-9,
                "velocities must mirror"
            );
        }
    }

    #[test]
    fn forward_backward_round_trip() {
        let (sys, x, v) = two_body_circular();
        let fwd = integrate(&sys, &x, &v, (0.0, 7.0), 1e-13).unwrap();
        let (xt, vt) = fwd.state(fwd.len() - 1);
        let back = integrate(&sys, &xt, &vt, (7.0, 0.0), 1e-13).unwrap();
        let (x0b, v0b) = back.state(0);
        assert!(sys.mass_distance(x0b.coords(), x.coords()) < 1e-8);
        assert!(sys.mass_distance(v0b.coords(), v.coords()) < 1e-8);
        // backward storage is time-ascending
        assert!(back.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn hyperbolic_speed_approaches_sqrt_2h() {
        let sys = MassSystem::new(vec![1.0, 1.0], 2).unwrap();
        let x = Configuration::from_flat(vec![-0.5, 0.0, 0.5, 0.0], 2).unwrap();
        let v = Velocity::from_flat(vec![-1.5, -0.2, 1.5, 0.2], 2).unwrap();
        let h = sys.energy(&x, &v).unwrap();
        assert!(h > 1.0);
        let traj = integrate(&sys, &x, &v, (0.0, 500.0), 1e-12).unwrap();
        let vt = traj.velocity(traj.len() - 1);
        let speed = sys.mass_norm(vt);
        assert!((speed - (2.0 * h).sqrt()).abs() < 5e-3);
    }

    #[test]
    fn lagrange_jacobi_identity_and_negative_control() {
        let (sys, x, v) = two_body_circular();
        let traj = integrate(&sys, &x, &v, (0.0, 10.0), 1e-12).unwrap();
        let res = lagrange_jacobi_residual(&sys, &traj).unwrap();
        let h = traj.energy0();
        for (k, r) in res.iter().enumerate() {
            let u = sys.potential_coords(traj.position(k));
            assert!(r.abs() <= 1e-9 * (1.0 + (4.0 * h + 2.0 * u).abs()), "k={k} r={r}");
        }
        // circular orbit: I'' = 0, so U = -2h
        let u0 = sys.potential_coords(traj.position(0));
        assert!((u0 + 2.0 * h).abs() < 1e-12);

        // perturbed states are not solutions: residual is order one
        let bad = Trajectory::from_samples(
            traj.times.clone(),
            traj.positions.iter().map(|p| p.scaled(1.3)).collect(),
            traj.velocities.clone(),
            traj.energy0,
            Termination::ReachedTmax,
        )
        .unwrap();
        let res_bad = lagrange_jacobi_residual(&sys, &bad).unwrap();
        assert!(res_bad.iter().any(|r| r.abs() > 0.1));
    }

    #[test]
    fn perihelion_of_hyperbolic_orbit() {
        let sys = MassSystem::new(vec![1.0, 1.0], 2).unwrap();
        // incoming hyperbolic pair, perihelion later than t = 0
        let x = Configuration::from_flat(vec![-5.0, 0.3, 5.0, -0.3], 2).unwrap();
        let v = Velocity::from_flat(vec![1.0, 0.0, -1.0, 0.0], 2).unwrap();
        let (tp, (xp, vp)) = perihelion_state(&sys, &x, &v, (0.0, 20.0)).unwrap();
        assert!(tp > 0.0);
        let idot = sys.mass_inner(xp.coords(), vp.coords());
        assert!(idot.abs() < 1e-8, "idot {idot}");

        // already at perihelion -> t_p = 0
        let (tp0, _) = perihelion_state(&sys, &xp, &vp, (-5.0, 5.0)).unwrap();
        assert_eq!(tp0, 0.0);

        // time translation: starting tau0 later shifts t_p by -tau0
        let traj = integrate(&sys, &x, &v, (0.0, 3.0), 1e-12).unwrap();
        let (x3, v3) = traj.state(traj.len() - 1);
        let (tp3, _) = perihelion_state(&sys, &x3, &v3, (-1.0, 20.0)).unwrap();
        assert!((tp3 - (tp - 3.0)).abs() < 1e-7);

        // no sign change -> bracket error
        assert!(perihelion_state(&sys, &xp, &vp, (1.0, 5.0)).is_err());
    }

    #[test]
    fn rescaling_is_exact_on_samples_and_energy() {
        let (sys, x, v) = two_body_circular();
        let traj = integrate(&sys, &x, &v, (0.0, 5.0), 1e-12).unwrap();
        let lam = 2.3;
        let scaled = rescale_solution(&traj, lam).unwrap();
        assert!((scaled.energy0() - traj.energy0() / lam).abs() < 1e-12 * traj.energy0().abs());
        // identity at lambda = 1
        let ident = rescale_solution(&traj, 1.0).unwrap();
        assert_eq!(ident.times(), traj.times());

        // the rescaled samples satisfy Newton's equations: re-integrate
        // from the first scaled state and compare at the end
        let (xs, vs) = scaled.state(0);
        let h = sys.energy(&xs, &vs).unwrap();
        assert!((h - traj.energy0() / lam).abs() < 1e-10);
        let re = integrate(&sys, &xs, &vs, (scaled.t_start(), scaled.t_end()), 1e-12).unwrap();
        let (xe, _) = re.state(re.len() - 1);
        let (xe_expect, _) = scaled.state(scaled.len() - 1);
        assert!(sys.mass_distance(xe.coords(), xe_expect.coords()) < 1e-8);
    }

    #[test]
    fn collision_approach_terminates() {
        let sys = MassSystem::new(vec![1.0, 1.0], 2)
            .unwrap()
            .with_collision_tol(1e-4)
            .unwrap();
        // head-on radial infall
        let x = Configuration::from_flat(vec![-0.5, 0.0, 0.5, 0.0], 2).unwrap();
        let v = Velocity::from_flat(vec![0.5, 0.0, -0.5, 0.0], 2).unwrap();
        let traj = integrate(&sys, &x, &v, (0.0, 10.0), 1e-12).unwrap();
        assert_eq!(traj.terminated(), Termination::CollisionApproach);
        // stored states never collide
        for k in 0..traj.len() {
            assert!(sys.min_separation(traj.position(k)) > sys.collision_tol());
        }
    }

    #[test]
    fn dense_output_matches_integration() {
        let (sys, x, v) = two_body_circular();
        let traj = integrate(&sys, &x, &v, (0.0, 6.0), 1e-12).unwrap();
        // integrate separately to an off-sample time
        let t_probe = 2.7183;
        let direct = integrate(&sys, &x, &v, (0.0, t_probe), 1e-13).unwrap();
        let (xd, vd) = direct.state(direct.len() - 1);
        let (xi, vi) = traj.sample_at(&sys, t_probe).unwrap();
        assert!(sys.mass_distance(xd.coords(), xi.coords()) < 1e-9);
        assert!(sys.mass_distance(vd.coords(), vi.coords()) < 1e-9);
    }

    #[test]
    fn csv_roundtrip_shape() {
        let (sys, x, v) = two_body_circular();
        let traj = integrate(&sys, &x, &v, (0.0, 1.0), 1e-10).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t, x_1_1, x_1_2, x_2_1, x_2_2, v_1_1, v_1_2, v_2_1, v_2_2");
        assert_eq!(csv.lines().count(), traj.len() + 1);
    }
}
