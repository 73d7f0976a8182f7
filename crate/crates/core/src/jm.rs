//! Jacobi-Maupertuis geometry of a nonnegative energy level: lengths of
//! curves in the metric `2 (h + U) g_m`, reparametrization of motions by
//! arclength (`ds/dt = 2h + 2U`), the logarithmic asymptotic of `s(t)`
//! along hyperbolic motions, and the Kepler comparison lower bound for
//! the critical potential.

use crate::action::Path;
use crate::asymptotics::AsymptoticFit;
use crate::coords::{Configuration, Coords};
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::quad::{GAUSS2_NODES, GAUSS5_NODES, GAUSS5_WEIGHTS};
use crate::system::MassSystem;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Jacobi-Maupertuis length of a piecewise-linear path:
/// `integral sqrt(2 (h + U)) |gamma'| dt`, Gauss-2 per segment.
/// Errors when a quadrature point collides.
pub fn jm_length_path(sys: &MassSystem, path: &Path, h: f64) -> Result<f64> {
    let mut len = 0.0;
    for k in 0..path.segments() {
        let dx = path.node(k + 1).sub(path.node(k));
        let chord = sys.mass_norm(&dx);
        for &g in &GAUSS2_NODES {
            let mut q = path.node(k).clone();
            q.add_scaled(&dx, g);
            let u = sys.potential_coords(&q);
            if !u.is_finite() {
                return Err(Error::Collision {
                    min_sep: sys.min_separation(&q),
                    tol: sys.collision_tol(),
                });
            }
            len += 0.5 * chord * (2.0 * (h + u)).sqrt();
        }
    }
    Ok(len)
}

/// Jacobi-Maupertuis length of a dense trajectory, by Gauss-5 quadrature
/// on the interpolant of every stored step.
pub fn jm_length(sys: &MassSystem, traj: &Trajectory, h: f64) -> Result<f64> {
    let mut len = 0.0;
    for k in 0..traj.len() - 1 {
        let (t0, t1) = (traj.times()[k], traj.times()[k + 1]);
        for (&g, &w) in GAUSS5_NODES.iter().zip(&GAUSS5_WEIGHTS) {
            let (x, v) = traj.sample_at(sys, t0 + g * (t1 - t0))?;
            let u = sys.potential_coords(x.coords());
            if !u.is_finite() {
                return Err(Error::Collision {
                    min_sep: sys.min_separation(x.coords()),
                    tol: sys.collision_tol(),
                });
            }
            len += w * (t1 - t0) * (2.0 * (h + u)).sqrt() * sys.mass_norm(v.coords());
        }
    }
    Ok(len)
}

/// Action `A_{L+h}` of a stretch of a dense trajectory, by the same
/// per-step Gauss-5 quadrature.
pub fn trajectory_action(
    sys: &MassSystem,
    traj: &Trajectory,
    span: (f64, f64),
    h: f64,
) -> Result<f64> {
    let (a, b) = span;
    if !(b > a) || a < traj.t_start() - 1e-9 || b > traj.t_end() + 1e-9 {
        return Err(Error::Invalid(format!("bad action span [{a}, {b}]")));
    }
    let mut total = 0.0;
    for k in 0..traj.len() - 1 {
        let lo = traj.times()[k].max(a);
        let hi = traj.times()[k + 1].min(b);
        if hi <= lo {
            continue;
        }
        for (&g, &w) in GAUSS5_NODES.iter().zip(&GAUSS5_WEIGHTS) {
            let (x, v) = traj.sample_at(sys, lo + g * (hi - lo))?;
            let u = sys.potential_coords(x.coords());
            if !u.is_finite() {
                return Err(Error::Collision {
                    min_sep: sys.min_separation(x.coords()),
                    tol: sys.collision_tol(),
                });
            }
            total += w * (hi - lo) * (0.5 * sys.mass_inner(v.coords(), v.coords()) + u + h);
        }
    }
    Ok(total)
}

/// Monotone map between dynamical time and Jacobi-Maupertuis arclength
/// along an energy-h motion.
#[derive(Clone, Debug)]
pub struct ArcParam {
    pub t_samples: Vec<f64>,
    pub s_samples: Vec<f64>,
    pub h: f64,
    speeds: Vec<f64>, // ds/dt = 2h + 2U at the samples
}

impl ArcParam {
    pub fn s_of_t(&self, t: f64) -> Result<f64> {
        let (ts, ss) = (&self.t_samples, &self.s_samples);
        if t < ts[0] - 1e-9 || t > ts[ts.len() - 1] + 1e-9 {
            return Err(Error::Invalid(format!("t = {t} outside the reparametrized span")));
        }
        let t = t.clamp(ts[0], ts[ts.len() - 1]);
        let k = match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => return Ok(ss[k]),
            Err(k) => k.saturating_sub(1).min(ts.len() - 2),
        };
        // cubic Hermite with the exact derivatives ds/dt
        let dt = ts[k + 1] - ts[k];
        let u = (t - ts[k]) / dt;
        let (s0, s1) = (ss[k], ss[k + 1]);
        let (d0, d1) = (self.speeds[k] * dt, self.speeds[k + 1] * dt);
        let u2 = u * u;
        let u3 = u2 * u;
        Ok((2.0 * u3 - 3.0 * u2 + 1.0) * s0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * s1
            + (u3 - u2) * d1)
    }

    pub fn t_of_s(&self, s: f64) -> Result<f64> {
        let ss = &self.s_samples;
        if s < ss[0] - 1e-9 || s > ss[ss.len() - 1] + 1e-9 {
            return Err(Error::Invalid(format!("s = {s} outside the reparametrized span")));
        }
        let s = s.clamp(ss[0], ss[ss.len() - 1]);
        let k = match ss.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
            Ok(k) => return Ok(self.t_samples[k]),
            Err(k) => k.saturating_sub(1).min(ss.len() - 2),
        };
        let (mut lo, mut hi) = (self.t_samples[k], self.t_samples[k + 1]);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..80 {
            let sv = self.s_of_t(t)?;
            // ds/dt interpolated linearly is plenty for a Newton step
            let w = (t - self.t_samples[k]) / (self.t_samples[k + 1] - self.t_samples[k]);
            let dsdt = (1.0 - w) * self.speeds[k] + w * self.speeds[k + 1];
            if (sv - s).abs() <= 1e-12 * (1.0 + s.abs()) {
                return Ok(t);
            }
            if sv > s {
                hi = t;
            } else {
                lo = t;
            }
            let next = t - (sv - s) / dsdt;
            t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        Ok(t)
    }
}

/// Computes the arclength `s(t)` along a trajectory of energy `h` by
/// Gauss-5 quadrature of `2h + 2U`. Errors when the stored samples
/// violate the trajectory's energy drift budget against `h`.
///
/// Integrator steps grow with the separation on escape tails, so the
/// map is built on a refined grid (`dt <~ 0.02 t` per interval) to keep
/// the interpolation error of `s(t)` below 1e-7 relative.
pub fn arclength_reparam(sys: &MassSystem, traj: &Trajectory, h: f64) -> Result<ArcParam> {
    let budget = traj.drift_budget().max(1e-9 * (1.0 + h.abs()));
    if (traj.energy0() - h).abs() > budget {
        return Err(Error::Inconsistent(format!(
            "trajectory energy {} differs from h = {h} beyond the budget {budget}",
            traj.energy0()
        )));
    }
    for k in 0..traj.len() {
        let u = sys.potential_coords(traj.position(k));
        let e = 0.5 * sys.mass_inner(traj.velocity(k), traj.velocity(k)) - u;
        if (e - h).abs() > budget {
            return Err(Error::Inconsistent(format!(
                "sample {k} energy {e} violates the drift budget {budget}"
            )));
        }
    }

    // refined time grid
    let mut ts: Vec<f64> = Vec::with_capacity(2 * traj.len());
    for k in 0..traj.len() - 1 {
        let (t0, t1) = (traj.times()[k], traj.times()[k + 1]);
        let n_sub = (((t1 - t0) / (0.02 * (1.0 + t0.abs()))).ceil() as usize).clamp(1, 64);
        for i in 0..n_sub {
            ts.push(t0 + (t1 - t0) * i as f64 / n_sub as f64);
        }
    }
    ts.push(traj.t_end());

    let mut speeds = Vec::with_capacity(ts.len());
    for &t in &ts {
        let (x, _) = traj.sample_at(sys, t)?;
        speeds.push(2.0 * h + 2.0 * sys.potential_coords(x.coords()));
    }
    let mut s = vec![0.0; ts.len()];
    for k in 0..ts.len() - 1 {
        let (t0, t1) = (ts[k], ts[k + 1]);
        let mut ds = 0.0;
        for (&g, &w) in GAUSS5_NODES.iter().zip(&GAUSS5_WEIGHTS) {
            let (x, _) = traj.sample_at(sys, t0 + g * (t1 - t0))?;
            let u = sys.potential_coords(x.coords());
            ds += w * (t1 - t0) * (2.0 * h + 2.0 * u);
        }
        s[k + 1] = s[k] + ds;
    }
    Ok(ArcParam { t_samples: ts, s_samples: s, h, speeds })
}

impl ArcParam {
    /// Two-column CSV `t, s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t, s\n");
        for (t, s) in self.t_samples.iter().zip(&self.s_samples) {
            out.push_str(&format!("{t:.16e}, {s:.16e}\n"));
        }
        out
    }
}

/// Velocity of the arclength-reparametrized curve `d gamma / ds` at `s`,
/// by a 4th-order central stencil through the t(s) map. Along an
/// energy-h motion its JM norm is 1 and its mass norm tends to
/// `1/sqrt(2h)` on expansive tails.
pub fn reparametrized_velocity(
    sys: &MassSystem,
    traj: &Trajectory,
    arc: &ArcParam,
    s: f64,
) -> Result<Coords> {
    let span = arc.s_samples[arc.s_samples.len() - 1] - arc.s_samples[0];
    let ds = (1e-4 * span).min(0.25 * (s - arc.s_samples[0]).min(arc.s_samples[arc.s_samples.len() - 1] - s))
        .max(1e-9 * span);
    let pos = |sv: f64| -> Result<Coords> {
        let t = arc.t_of_s(sv)?;
        Ok(traj.sample_at(sys, t)?.0 .0)
    };
    let p2 = pos(s + 2.0 * ds)?;
    let p1 = pos(s + ds)?;
    let m1 = pos(s - ds)?;
    let m2 = pos(s - 2.0 * ds)?;
    let mut v = p1.sub(&m1).scaled(8.0);
    v.add_scaled(&p2.sub(&m2), -1.0);
    v.scale(1.0 / (12.0 * ds));
    Ok(v)
}

/// Outcome of the `s(t)` asymptotic check.
#[derive(Clone, Debug)]
pub struct SAsymptoticReport {
    /// Coefficient of `log t` implied by the fitted direction.
    pub coeff: f64,
    /// Range of the residual over the last decade.
    pub range_last: f64,
    /// Range over the preceding decade.
    pub range_prev: f64,
    /// Slope of the residual against `log t` over the last decade.
    pub slope_last: f64,
    pub pass: bool,
}

/// Checks `s(t) = 2 h t + coeff log t + O(1)` along a hyperbolic
/// trajectory, with `coeff = U(a_ray) / h` for the arclength-normalized
/// direction `a_ray = a / (2h)` (equivalently `2 U(a)` at the fitted
/// asymptotic velocity). PASS requires the residual range to stop
/// growing across decades and its log-slope to be far below `coeff`.
pub fn s_asymptotic_check(
    sys: &MassSystem,
    traj: &Trajectory,
    h: f64,
    fit: &AsymptoticFit,
) -> Result<SAsymptoticReport> {
    let arc = arclength_reparam(sys, traj, h)?;
    let a_ray = Configuration(fit.direction.coords().scaled(1.0 / (2.0 * h)));
    let coeff = sys.potential(&a_ray) / h;
    s_asymptotic_check_with_coeff(&arc, traj, h, coeff)
}

/// Same check with an explicit log coefficient (for negative controls).
pub fn s_asymptotic_check_with_coeff(
    arc: &ArcParam,
    traj: &Trajectory,
    h: f64,
    coeff: f64,
) -> Result<SAsymptoticReport> {
    let t_end = traj.t_end();
    let t0 = traj.t_start().max(1e-6);
    if t_end / t0 < 100.0 {
        return Err(Error::Invalid("need two decades of trajectory for the s(t) check".into()));
    }
    let decade = |lo: f64, hi: f64| -> Result<(f64, f64)> {
        // range and log-slope of the residual over [lo, hi]
        let n = 256;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..=n {
            let t = lo * (hi / lo).powf(i as f64 / n as f64);
            let r = arc.s_of_t(t)? - 2.0 * h * t - coeff * t.ln();
            min = min.min(r);
            max = max.max(r);
            let lt = t.ln();
            sx += lt;
            sy += r;
            sxx += lt * lt;
            sxy += lt * r;
        }
        let cnt = (n + 1) as f64;
        let slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
        Ok((max - min, slope))
    };
    let (range_last, slope_last) = decade(t_end / 10.0, t_end)?;
    let (range_prev, _) = decade((t_end / 100.0).max(t0), t_end / 10.0)?;
    let pass = range_last <= 1.2 * range_prev && slope_last.abs() <= 0.25 * coeff.abs().max(1e-12);
    Ok(SAsymptoticReport { coeff, range_last, range_prev, slope_last, pass })
}

/// Global minimum of the potential on the mass-norm unit sphere, by
/// multi-start projected descent (the sphere is full of central
/// configurations, so one start is not enough).
pub fn potential_sphere_minimum(sys: &MassSystem, restarts: usize, seed: u64) -> f64 {
    let n = sys.n_bodies();
    let d = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..restarts.max(1) {
        let mut z = Coords::zeros(n, d);
        loop {
            for v in z.as_mut_slice() {
                *v = rng.random_range(-1.0..1.0);
            }
            let norm = sys.mass_norm(&z);
            if norm > 1e-6 {
                z.scale(1.0 / norm);
                if sys.potential_coords(&z).is_finite() {
                    break;
                }
            }
        }
        let mut u = sys.potential_coords(&z);
        let mut step = 0.1;
        for _ in 0..600 {
            let Some((_, grad_e)) = sys.potential_and_gradient(&z) else { break };
            // Riemannian gradient on the sphere in the mass metric
            let mut g = grad_e.clone();
            for (i, &m) in sys.masses().iter().enumerate() {
                for v in g.body_mut(i) {
                    *v /= m;
                }
            }
            let radial = sys.mass_inner(&g, &z);
            g.add_scaled(&z, -radial);
            let gnorm = sys.mass_norm(&g);
            if gnorm <= 1e-12 * (1.0 + u.abs()) {
                break;
            }
            // backtracking step along -g, renormalized onto the sphere
            let mut accepted = false;
            for _ in 0..40 {
                let mut trial = z.clone();
                trial.add_scaled(&g, -step / gnorm.max(1e-300));
                let norm = sys.mass_norm(&trial);
                trial.scale(1.0 / norm);
                let ut = sys.potential_coords(&trial);
                if ut < u {
                    z = trial;
                    u = ut;
                    step = (step * 1.6).min(0.25);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        best = best.min(u);
    }
    best
}

/// Kepler comparison bound for the critical action potential:
/// `phi_0(x, y) >= (mu_0 / rho) |x - y|` with `mu_0 = sqrt(2 U_0)` and
/// `rho = max(|x|, |y|)^(1/2)`. Also a lower bound for every `phi_h`,
/// `h >= 0`.
pub fn kepler_lower_bound(sys: &MassSystem, x: &Configuration, y: &Configuration) -> Result<f64> {
    sys.check_shape(x.coords())?;
    sys.check_shape(y.coords())?;
    let dist = sys.mass_distance(x.coords(), y.coords());
    if dist <= 0.0 {
        return Err(Error::Invalid("kepler_lower_bound needs x != y".into()));
    }
    let u0 = potential_sphere_minimum(sys, 32, 0);
    let mu0 = (2.0 * u0).sqrt();
    let rho = sys
        .mass_norm(x.coords())
        .max(sys.mass_norm(y.coords()))
        .sqrt();
    if rho == 0.0 {
        return Err(Error::Invalid("both endpoints at the origin".into()));
    }
    Ok(mu0 / rho * dist)
}
