//! Independent analytic and semi-analytic ground truth for the two-body
//! problem: universal-variable Kepler propagation, scattering asymptotes,
//! the free-time transfer action by conic shooting, and the radial
//! transfer action by quadrature. These never touch the variational
//! machinery, so agreement with it is meaningful cross-validation.

use crate::coords::{Configuration, Coords, Velocity};
use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;
use crate::system::MassSystem;

/// Orbital elements of the relative two-body orbit.
#[derive(Clone, Debug)]
pub struct KeplerElements {
    /// Reduced mass m1 m2 / (m1 + m2).
    pub reduced_mass: f64,
    /// Gravitational parameter of the relative orbit (= total mass here).
    pub grav_param: f64,
    /// Specific energy of the relative orbit, `eps = v^2/2 - mu/r`.
    pub energy: f64,
    /// N-body energy constant `h = 1/2 |v|_m^2 - U` of the same state.
    pub energy_nbody: f64,
    /// Magnitude of the relative specific angular momentum.
    pub angular_momentum: f64,
    /// Eccentricity.
    pub eccentricity: f64,
    /// Semi-latus rectum `p = c^2 / mu`.
    pub semi_latus: f64,
    /// Semi-major axis `a = -mu / (2 eps)` (negative on the hyperbolic
    /// branch).
    pub semi_major: f64,
}

fn require_two_bodies(sys: &MassSystem) -> Result<()> {
    if sys.n_bodies() != 2 {
        return Err(Error::Invalid(format!(
            "two-body oracle called with N = {}",
            sys.n_bodies()
        )));
    }
    Ok(())
}

/// Splits a two-body state into (relative position, relative velocity,
/// center of mass, center-of-mass velocity), with `w = r1 - r2`.
pub fn relative_state(
    sys: &MassSystem,
    x: &Configuration,
    v: &Velocity,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    require_two_bodies(sys)?;
    sys.check_shape(x.coords())?;
    sys.check_shape(v.coords())?;
    let d = sys.dim();
    let mut w = vec![0.0; d];
    let mut wd = vec![0.0; d];
    for k in 0..d {
        w[k] = x.coords().body(0)[k] - x.coords().body(1)[k];
        wd[k] = v.coords().body(0)[k] - v.coords().body(1)[k];
    }
    Ok((w, wd, sys.com(x.coords()), sys.com(v.coords())))
}

/// Reassembles body coordinates from relative + center-of-mass data.
fn assemble(sys: &MassSystem, w: &[f64], g: &[f64]) -> Coords {
    let d = sys.dim();
    let m = sys.masses();
    let mtot = sys.total_mass();
    let mut out = Coords::zeros(2, d);
    for k in 0..d {
        out.body_mut(0)[k] = g[k] + m[1] / mtot * w[k];
        out.body_mut(1)[k] = g[k] - m[0] / mtot * w[k];
    }
    out
}

impl KeplerElements {
    pub fn from_state(sys: &MassSystem, x: &Configuration, v: &Velocity) -> Result<Self> {
        let (w, wd, _, _) = relative_state(sys, x, v)?;
        let mu = sys.total_mass();
        let r: f64 = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r <= sys.collision_tol() {
            return Err(Error::Collision { min_sep: r, tol: sys.collision_tol() });
        }
        let v2: f64 = wd.iter().map(|a| a * a).sum();
        let eps = 0.5 * v2 - mu / r;
        let rv: f64 = w.iter().zip(&wd).map(|(a, b)| a * b).sum();
        // |w x wd|^2 = |w|^2 |wd|^2 - (w . wd)^2, any dimension
        let c2 = (r * r * v2 - rv * rv).max(0.0);
        let c = c2.sqrt();
        let m = sys.masses();
        let reduced_mass = m[0] * m[1] / mu;
        let ecc = (1.0 + 2.0 * eps * c2 / (mu * mu)).max(0.0).sqrt();
        Ok(Self {
            reduced_mass,
            grav_param: mu,
            energy: eps,
            energy_nbody: sys.energy(x, v)?,
            angular_momentum: c,
            eccentricity: ecc,
            semi_latus: c2 / mu,
            semi_major: -mu / (2.0 * eps),
        })
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.energy > 0.0
    }
}

/// Stumpff functions c2, c3 with series fallback near zero.
fn stumpff(psi: f64) -> (f64, f64) {
    if psi > 1e-6 {
        let s = psi.sqrt();
        ((1.0 - s.cos()) / psi, (s - s.sin()) / (psi * s))
    } else if psi < -1e-6 {
        let s = (-psi).sqrt();
        ((1.0 - s.cosh()) / psi, (s.sinh() - s) / (-psi * s))
    } else {
        // c2 = 1/2 - psi/24 + psi^2/720, c3 = 1/6 - psi/120 + psi^2/5040
        (0.5 - psi / 24.0 + psi * psi / 720.0, 1.0 / 6.0 - psi / 120.0 + psi * psi / 5040.0)
    }
}

/// Time for a rectilinear orbit to fall from `r0` to the origin, moving
/// inward, with specific energy `eps` and parameter `mu`.
fn rectilinear_collision_time(r0: f64, eps: f64, mu: f64) -> f64 {
    adaptive_simpson(
        &|r: f64| 1.0 / (2.0 * (eps + mu / r.max(1e-300))).max(1e-300).sqrt(),
        1e-14 * r0,
        r0,
        1e-13 * r0.max(1.0),
    )
}

/// Universal-variable Kepler propagation of a relative state by `dt`.
/// Returns the propagated `(w, wd)` and the residual of the universal
/// Kepler equation at the accepted root.
pub fn kepler_propagate_relative(
    mu: f64,
    w0: &[f64],
    wd0: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let d = w0.len();
    let r0: f64 = w0.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(r0 > 0.0) {
        return Err(Error::Invalid("zero separation".into()));
    }
    if dt == 0.0 {
        return Ok((w0.to_vec(), wd0.to_vec(), 0.0));
    }
    let v2: f64 = wd0.iter().map(|a| a * a).sum();
    let rv: f64 = w0.iter().zip(wd0).map(|(a, b)| a * b).sum();
    let eps = 0.5 * v2 - mu / r0;

    // rectilinear orbits heading for the collision get flagged instead of
    // being continued through r = 0
    let c2 = (r0 * r0 * v2 - rv * rv).max(0.0);
    if c2.sqrt() < 1e-12 * r0 * v2.sqrt().max(1.0) {
        let inbound = rv * dt.signum() < 0.0 || v2 == 0.0;
        if inbound {
            let t_c = rectilinear_collision_time(r0, eps, mu);
            if dt.abs() >= t_c * (1.0 - 1e-12) {
                return Err(Error::FiniteTimeSingularity { t_collision: t_c * dt.signum() });
            }
        } else if eps < 0.0 {
            // outbound elliptic rectilinear: bounce at r_max, then fall
            let r_max = mu / (-eps);
            let t_up = adaptive_simpson(
                &|r: f64| 1.0 / (2.0 * (eps + mu / r)).max(1e-300).sqrt(),
                r0,
                r_max * (1.0 - 1e-12),
                1e-12 * r_max,
            );
            let t_c = t_up + rectilinear_collision_time(r_max * (1.0 - 1e-12), eps, mu);
            if dt.abs() >= t_c * (1.0 - 1e-12) {
                return Err(Error::FiniteTimeSingularity { t_collision: t_c * dt.signum() });
            }
        }
    }

    let alpha = 2.0 / r0 - v2 / mu; // 1 / semi-major
    let sqrt_mu = mu.sqrt();
    let sigma0 = rv / sqrt_mu;

    // universal Kepler equation F(chi) = sqrt(mu) dt, F' = r >= 0, so F is
    // monotone: bracket by doubling, then safeguarded Newton
    let f_of = |chi: f64| -> (f64, f64) {
        let chi2 = chi * chi;
        let psi = alpha * chi2;
        let (s2, s3) = stumpff(psi);
        let f = sigma0 * chi2 * s2 + (1.0 - r0 * alpha) * chi2 * chi * s3 + r0 * chi
            - sqrt_mu * dt;
        let r = sigma0 * chi * (1.0 - psi * s3) + (1.0 - r0 * alpha) * chi2 * s2 + r0;
        (f, r)
    };

    let sign = dt.signum();
    // cosh(sqrt(-psi)) overflows around 710; stay well inside
    let chi_cap = if alpha < -1e-12 { 650.0 / (-alpha).sqrt() } else { f64::INFINITY };
    let seed = if alpha > 1e-12 {
        sqrt_mu * dt.abs() * alpha
    } else if alpha < -1e-12 {
        // Vallado-style hyperbolic guess
        let a_neg = -1.0 / alpha;
        let num = -2.0 * mu * alpha * dt.abs();
        let den = rv * sign + (mu * a_neg).sqrt() * (1.0 - r0 * alpha);
        let arg = (num / den).abs().max(1.0 + 1e-9);
        a_neg.sqrt() * arg.ln()
    } else {
        sqrt_mu * dt.abs() / r0
    };
    let mut chi_hi = sign * seed.max(1e-8).min(0.9 * chi_cap);
    // expand until F passes the target, treating overflow as "too far"
    let mut guard = 0;
    loop {
        let f = f_of(chi_hi).0;
        if f.is_finite() && f * sign >= 0.0 {
            break;
        }
        if !f.is_finite() || chi_hi.abs() >= 0.9 * chi_cap {
            chi_hi = sign * (0.95 * chi_cap).min(chi_hi.abs() * 4.0);
            if !f_of(chi_hi).0.is_finite() {
                return Err(Error::NonConvergence(
                    "universal Kepler equation out of range".into(),
                ));
            }
            if f_of(chi_hi).0 * sign >= 0.0 {
                break;
            }
        }
        chi_hi *= 2.0;
        guard += 1;
        if guard > 300 {
            return Err(Error::NonConvergence("universal Kepler bracket expansion".into()));
        }
    }
    let (mut lo, mut hi) = if sign > 0.0 { (0.0, chi_hi) } else { (chi_hi, 0.0) };
    let mut chi = 0.5 * (lo + hi);
    let mut fr = f_of(chi);
    for _ in 0..300 {
        if fr.0.is_finite() && fr.0.abs() <= 1e-13 * sqrt_mu * dt.abs().max(1.0) {
            break;
        }
        // F is increasing in chi; non-finite F means |chi| is too large
        if !fr.0.is_finite() {
            if sign > 0.0 {
                hi = chi;
            } else {
                lo = chi;
            }
        } else if fr.0 > 0.0 {
            hi = chi;
        } else {
            lo = chi;
        }
        // Newton step, safeguarded by the bracket
        let mut next = if fr.0.is_finite() { chi - fr.0 / fr.1.max(1e-300) } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        chi = next;
        fr = f_of(chi);
    }
    let residual = fr.0.abs() / sqrt_mu;

    let chi2 = chi * chi;
    let psi = alpha * chi2;
    let (s2, s3) = stumpff(psi);
    let r = fr.1;
    let f = 1.0 - chi2 / r0 * s2;
    let g = dt - chi2 * chi / sqrt_mu * s3;
    let fdot = sqrt_mu / (r * r0) * chi * (psi * s3 - 1.0);
    let gdot = 1.0 - chi2 / r * s2;

    let mut w = vec![0.0; d];
    let mut wd = vec![0.0; d];
    for k in 0..d {
        w[k] = f * w0[k] + g * wd0[k];
        wd[k] = fdot * w0[k] + gdot * wd0[k];
    }
    Ok((w, wd, residual))
}

/// Propagates a full two-body state by `t` (relative orbit via universal
/// variables, uniform center-of-mass drift).
pub fn kepler_two_body(
    sys: &MassSystem,
    x0: &Configuration,
    v0: &Velocity,
    t: f64,
) -> Result<(Configuration, Velocity)> {
    let (w0, wd0, g0, vg) = relative_state(sys, x0, v0)?;
    let (w, wd, _res) = kepler_propagate_relative(sys.total_mass(), &w0, &wd0, t)?;
    let d = sys.dim();
    let mut gt = vec![0.0; d];
    for k in 0..d {
        gt[k] = g0[k] + t * vg[k];
    }
    Ok((Configuration(assemble(sys, &w, &gt)), Velocity(assemble(sys, &wd, &vg))))
}

/// A two-body trajectory sampled at the given times with the closed-form
/// propagator (for feeding analyses with exact input).
pub fn kepler_trajectory(
    sys: &MassSystem,
    x0: &Configuration,
    v0: &Velocity,
    times: &[f64],
) -> Result<crate::integrate::Trajectory> {
    let mut pos = Vec::with_capacity(times.len());
    let mut vel = Vec::with_capacity(times.len());
    for &t in times {
        let (x, v) = kepler_two_body(sys, x0, v0, t)?;
        pos.push(x.0);
        vel.push(v.0);
    }
    crate::integrate::Trajectory::from_samples(
        times.to_vec(),
        pos,
        vel,
        sys.energy(x0, v0)?,
        crate::integrate::Termination::ReachedTmax,
    )
}

/// Incoming and outgoing asymptotic data of a hyperbolic two-body state.
#[derive(Clone, Debug)]
pub struct Asymptotes {
    /// Per-body velocity configuration as t -> +infinity.
    pub outgoing: Velocity,
    /// Per-body velocity configuration as t -> -infinity.
    pub incoming: Velocity,
    /// Relative speed at infinity, `sqrt(2 eps)`.
    pub v_infinity: f64,
}

/// Exact scattering asymptotes of a planar hyperbolic two-body state.
pub fn hyperbolic_asymptotes(
    sys: &MassSystem,
    x: &Configuration,
    v: &Velocity,
) -> Result<Asymptotes> {
    if sys.dim() != 2 {
        return Err(Error::Invalid("asymptote query requires dim = 2".into()));
    }
    let (w, wd, _, vg) = relative_state(sys, x, v)?;
    let mu = sys.total_mass();
    let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
    let v2 = wd[0] * wd[0] + wd[1] * wd[1];
    let eps = 0.5 * v2 - mu / r;
    if !(eps > 0.0) {
        return Err(Error::Invalid("state is not hyperbolic (relative energy <= 0)".into()));
    }
    let vinf = (2.0 * eps).sqrt();
    let c = w[0] * wd[1] - w[1] * wd[0];
    let rv = w[0] * wd[0] + w[1] * wd[1];

    let (out_dir, in_dir);
    if c.abs() < 1e-12 * r * v2.sqrt().max(1.0) {
        // rectilinear: both asymptotes along the line of motion
        let u = [w[0] / r, w[1] / r];
        let s = if rv >= 0.0 { 1.0 } else { -1.0 };
        out_dir = [s * u[0], s * u[1]];
        in_dir = out_dir;
    } else {
        // eccentricity vector and perifocal frame oriented along motion
        let ex = ((v2 - mu / r) * w[0] - rv * wd[0]) / mu;
        let ey = ((v2 - mu / r) * w[1] - rv * wd[1]) / mu;
        let e = (ex * ex + ey * ey).sqrt();
        let xhat = [ex / e, ey / e];
        let yhat = if c > 0.0 { [-xhat[1], xhat[0]] } else { [xhat[1], -xhat[0]] };
        let nu_inf = (-1.0 / e).acos();
        let (s_inf, _) = nu_inf.sin_cos();
        let scale = (e * e - 1.0).sqrt();
        // velocity direction at true anomaly nu is prop to (-sin nu, e + cos nu)
        let uo = [-s_inf / scale, (e - 1.0 / e) / scale];
        let ui = [s_inf / scale, (e - 1.0 / e) / scale];
        out_dir = [uo[0] * xhat[0] + uo[1] * yhat[0], uo[0] * xhat[1] + uo[1] * yhat[1]];
        in_dir = [ui[0] * xhat[0] + ui[1] * yhat[0], ui[0] * xhat[1] + ui[1] * yhat[1]];
    }

    let wd_out = [vinf * out_dir[0], vinf * out_dir[1]];
    let wd_in = [vinf * in_dir[0], vinf * in_dir[1]];
    Ok(Asymptotes {
        outgoing: Velocity(assemble(sys, &wd_out, &vg)),
        incoming: Velocity(assemble(sys, &wd_in, &vg)),
        v_infinity: vinf,
    })
}

/// One admissible conic arc found by the boundary-value shooting.
#[derive(Clone, Debug)]
pub struct KeplerArc {
    /// Action A_{L+h} of the arc.
    pub action: f64,
    /// Time of flight.
    pub tof: f64,
    /// Departure angle of the relative velocity.
    pub theta: f64,
}

/// Free-time transfer oracle: the supercritical action between two-body
/// configurations with a common center of mass, by shooting energy-h
/// Kepler arcs over the departure angle. All arc quantities are closed
/// form, so the result is independent of any discretized minimization.
pub fn kepler_bvp_action(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    h: f64,
) -> Result<KeplerArc> {
    require_two_bodies(sys)?;
    if sys.dim() != 2 {
        return Err(Error::Invalid("BVP oracle requires dim = 2".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Invalid("BVP oracle requires h > 0".into()));
    }
    let m = sys.masses();
    let mu = sys.total_mass();
    let m_red = m[0] * m[1] / mu;
    let zero_v = Velocity(Coords::zeros(2, 2));
    let (w0v, _, gx, _) = relative_state(sys, x, &zero_v)?;
    let (w1v, _, gy, _) = relative_state(sys, y, &zero_v)?;
    let dg: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale = sys.characteristic_length(x).max(sys.characteristic_length(y));
    if dg > 1e-9 * scale {
        return Err(Error::Invalid(
            "BVP oracle handles endpoints with a common center of mass".into(),
        ));
    }
    let w0 = [w0v[0], w0v[1]];
    let w1 = [w1v[0], w1v[1]];
    let r0 = (w0[0] * w0[0] + w0[1] * w0[1]).sqrt();
    let r1 = (w1[0] * w1[0] + w1[1] * w1[1]).sqrt();
    if r0 <= sys.collision_tol() || r1 <= sys.collision_tol() {
        return Err(Error::Collision { min_sep: r0.min(r1), tol: sys.collision_tol() });
    }

    // same-ray endpoints: the radial arc is the minimizer
    let cross01 = w0[0] * w1[1] - w0[1] * w1[0];
    let dot01 = w0[0] * w1[0] + w0[1] * w1[1];
    if cross01.abs() < 1e-10 * r0 * r1 && dot01 > 0.0 {
        let action = radial_relative_action(m_red, m[0] * m[1], r0, r1, h)?;
        let tof = radial_time_of_flight(mu, h / m_red, r0, r1);
        return Ok(KeplerArc { action, tof, theta: f64::NAN });
    }

    let eps = h / m_red; // minimizers carry the full energy in the relative motion
    let v0 = (2.0 * (eps + mu / r0)).sqrt();
    let abar = mu / (2.0 * eps);

    // mismatch at the arrival radius for a departure angle theta;
    // NaN marks angles whose conic cannot reach the direction of w1
    let arc_radius_mismatch = |theta: f64| -> f64 {
        let wd = [v0 * theta.cos(), v0 * theta.sin()];
        let c = w0[0] * wd[1] - w0[1] * wd[0];
        let rv = w0[0] * wd[0] + w0[1] * wd[1];
        let v2 = v0 * v0;
        let ex = ((v2 - mu / r0) * w0[0] - rv * wd[0]) / mu;
        let ey = ((v2 - mu / r0) * w0[1] - rv * wd[1]) / mu;
        let e = (ex * ex + ey * ey).sqrt();
        let p = c * c / mu;
        let cosnu1 = (ex * w1[0] + ey * w1[1]) / (e * r1);
        let denom = 1.0 + e * cosnu1;
        if denom <= 1e-12 {
            return f64::NAN;
        }
        p / denom - r1
    };

    // anomaly bookkeeping for a candidate root
    let evaluate_arc = |theta: f64| -> Option<KeplerArc> {
        let wd = [v0 * theta.cos(), v0 * theta.sin()];
        let c = w0[0] * wd[1] - w0[1] * wd[0];
        if c.abs() < 1e-12 * r0 * v0 {
            return None;
        }
        let rv = w0[0] * wd[0] + w0[1] * wd[1];
        let v2 = v0 * v0;
        let ex = ((v2 - mu / r0) * w0[0] - rv * wd[0]) / mu;
        let ey = ((v2 - mu / r0) * w0[1] - rv * wd[1]) / mu;
        let e = (ex * ex + ey * ey).sqrt();
        if e <= 1.0 {
            return None;
        }
        let xhat = [ex / e, ey / e];
        let yhat = if c > 0.0 { [-xhat[1], xhat[0]] } else { [xhat[1], -xhat[0]] };
        let nu_of = |w: &[f64; 2]| -> f64 {
            (w[0] * yhat[0] + w[1] * yhat[1]).atan2(w[0] * xhat[0] + w[1] * xhat[1])
        };
        let nu0 = nu_of(&w0);
        let nu1 = nu_of(&w1);
        if nu1 <= nu0 + 1e-12 {
            return None; // would require backward time
        }
        let k = ((e - 1.0) / (e + 1.0)).sqrt();
        let h_of = |nu: f64| -> Option<f64> {
            let t = k * (0.5 * nu).tan();
            if t.abs() >= 1.0 {
                return None;
            }
            Some(2.0 * t.atanh())
        };
        let hh0 = h_of(nu0)?;
        let hh1 = h_of(nu1)?;
        if hh1 <= hh0 {
            return None;
        }
        let mean = |hh: f64| e * hh.sinh() - hh;
        let tof = (abar.powi(3) / mu).sqrt() * (mean(hh1) - mean(hh0));
        // A_{L+h} = 2 h T + 2 m1 m2 integral dt / r, and
        // integral dt / r = sqrt(abar / mu) (H1 - H0) in closed form
        let action = 2.0 * h * tof + 2.0 * m[0] * m[1] * (abar / mu).sqrt() * (hh1 - hh0);
        Some(KeplerArc { action, tof, theta })
    };

    // scan departure angles, bracket sign changes, refine by bisection;
    // far targets have narrow admissible windows, so escalate the scan
    // density until an arc shows up
    let mut best: Option<KeplerArc> = None;
    for escalation in 0..4 {
        let n_scan = 2880usize << (2 * escalation);
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=n_scan {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n_scan as f64;
            let g = arc_radius_mismatch(theta);
            if let (Some((th_a, g_a)), false) = (prev, g.is_nan()) {
                if g_a * g <= 0.0 && g_a.is_finite() {
                    // refine
                    let (mut lo, mut hi, mut glo) = (th_a, theta, g_a);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        let gm = arc_radius_mismatch(mid);
                        if !gm.is_finite() {
                            break;
                        }
                        if glo * gm <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                            glo = gm;
                        }
                    }
                    if let Some(arc) = evaluate_arc(0.5 * (lo + hi)) {
                        if best.as_ref().map(|b| arc.action < b.action).unwrap_or(true) {
                            best = Some(arc);
                        }
                    }
                }
            }
            prev = if g.is_nan() { None } else { Some((theta, g)) };
        }
        if best.is_some() {
            break;
        }
    }
    best.ok_or_else(|| Error::SearchFailure("no admissible Kepler arc found".into()))
}

/// Action of the radial (rectilinear) energy-h transfer of the relative
/// coordinate from radius `r0` to `r1`:
/// `A = integral sqrt(2 m_red (h + m1 m2 / r)) dr`.
fn radial_relative_action(m_red: f64, coupling: f64, r0: f64, r1: f64, h: f64) -> Result<f64> {
    let (lo, hi) = (r0.min(r1), r0.max(r1));
    if h < 0.0 {
        let r_turn = coupling / (-h);
        if hi > r_turn {
            return Err(Error::Branch(format!(
                "radial branch with h = {h} turns at r = {r_turn} < {hi}"
            )));
        }
    }
    if lo == hi {
        return Ok(0.0);
    }
    Ok(adaptive_simpson(
        &|r: f64| (2.0 * m_red * (h + coupling / r)).sqrt(),
        lo,
        hi,
        1e-13 * (hi - lo).max(1.0),
    ))
}

/// Time of flight of the monotone radial branch (specific energy `eps`).
fn radial_time_of_flight(mu: f64, eps: f64, r0: f64, r1: f64) -> f64 {
    let (lo, hi) = (r0.min(r1), r0.max(r1));
    adaptive_simpson(
        &|r: f64| 1.0 / (2.0 * (eps + mu / r)).max(1e-300).sqrt(),
        lo,
        hi,
        1e-13 * (hi - lo).max(1.0),
    )
}

/// Radial two-body transfer action between collinear configurations at
/// separations `r0` and `r1` with energy `h`: the 1-D Jacobi-Maupertuis
/// length, by adaptive quadrature. Equals the supercritical action
/// potential when the endpoints lie on a common ray.
pub fn radial_two_body_action(sys: &MassSystem, r0: f64, r1: f64, h: f64) -> Result<f64> {
    require_two_bodies(sys)?;
    if !(r0 > 0.0) || !(r1 > 0.0) {
        return Err(Error::Invalid("separations must be positive".into()));
    }
    let m = sys.masses();
    let mu = sys.total_mass();
    radial_relative_action(m[0] * m[1] / mu, m[0] * m[1], r0, r1, h)
}

/// Budget of the brute-force transcription protocol.
#[derive(Clone, Debug)]
pub struct BruteForceOpts {
    /// Independent multi-start batches (each runs the solver's own
    /// 9-start battery with a distinct seed).
    pub batches: usize,
    /// Wall-clock budget; exceeding it returns a flagged partial result.
    pub max_seconds: f64,
    pub seed: u64,
}

impl Default for BruteForceOpts {
    fn default() -> Self {
        Self { batches: 4, max_seconds: 120.0, seed: 0 }
    }
}

/// Result of the brute-force protocol.
#[derive(Clone, Debug)]
pub struct BruteForceResult {
    /// Finest-grid value.
    pub value: f64,
    /// Richardson extrapolation over the two grid refinements.
    pub extrapolated: f64,
    /// Spread over multi-start batches plus the largest in-batch spread.
    pub dispersion: f64,
    /// Values at the three grid levels (4x, 8x, 16x default density).
    pub levels: Vec<f64>,
    pub tau_star: Option<f64>,
    /// Set when the wall-clock budget ran out before the protocol ended.
    pub partial: bool,
}

/// Direct dense transcription as an independent check of the action
/// potentials: 4x the default node count, at least 32 starts across
/// seeded batches, two grid refinements with Richardson extrapolation.
/// `tau = None` runs the free-time protocol.
pub fn brute_force_phi(
    sys: &MassSystem,
    x: &Configuration,
    y: &Configuration,
    tau: Option<f64>,
    h: f64,
    opts: &BruteForceOpts,
) -> Result<BruteForceResult> {
    use crate::action::{
        default_segments, free_time_minimize, minimize_fixed_time, FixedTimeOpts, FreeTimeOpts,
    };
    let t_start = std::time::Instant::now();
    let tau_guess = tau.unwrap_or_else(|| {
        sys.mass_distance(x.coords(), y.coords()) / (2.0 * h.max(1e-9)).sqrt()
    });
    let m0 = 4 * default_segments(sys, x, y, tau_guess);

    // level 0: multi-start batches at 4x density
    let mut best_value = f64::INFINITY;
    let mut batch_bests: Vec<f64> = Vec::new();
    let mut max_spread = 0.0f64;
    let mut tau_star = tau;
    let mut partial = false;
    for b in 0..opts.batches.max(1) {
        let fixed = FixedTimeOpts {
            segments: Some(m0),
            refine: false,
            seed: opts.seed + 17 * b as u64,
            ..Default::default()
        };
        let value = match tau {
            Some(t) => minimize_fixed_time(sys, x, y, t, h, &fixed)?,
            None => {
                free_time_minimize(sys, x, y, h, &FreeTimeOpts { fixed, ..Default::default() })?
            }
        };
        batch_bests.push(value.value);
        max_spread = max_spread.max(value.multistart_spread);
        if value.value < best_value {
            best_value = value.value;
            if tau.is_none() {
                tau_star = value.tau_star;
            }
        }
        if t_start.elapsed().as_secs_f64() > opts.max_seconds {
            partial = true;
            break;
        }
    }
    let lo = batch_bests.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = batch_bests.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dispersion = (hi - lo) + max_spread;

    // two refinements at the frozen transfer time
    let tau_fix = tau_star.ok_or_else(|| Error::Invalid("no transfer time".into()))?;
    let mut levels = vec![best_value];
    for (i, mult) in [2usize, 4].into_iter().enumerate() {
        if partial {
            break;
        }
        let fixed = FixedTimeOpts {
            segments: Some(mult * m0),
            refine: false,
            multistart: false,
            seed: opts.seed + 1 + i as u64,
            ..Default::default()
        };
        // same h tau_fix time cost at every level, so values compare 1:1
        let v = minimize_fixed_time(sys, x, y, tau_fix, h, &fixed)?;
        levels.push(v.value);
        if t_start.elapsed().as_secs_f64() > opts.max_seconds {
            partial = true;
        }
    }
    let extrapolated = if levels.len() == 3 {
        levels[2] + (levels[2] - levels[1]) / 3.0
    } else {
        *levels.last().unwrap()
    };
    Ok(BruteForceResult {
        value: *levels.last().unwrap(),
        extrapolated,
        dispersion,
        levels,
        tau_star,
        partial,
    })
}

/// Closed-form completely parabolic radial escape of two bodies along the
/// x-axis (center of mass at rest), sampled at the given times:
/// the relative separation is `w(t) = (9 mu / 2)^(1/3) (t + t0)^(2/3)`.
pub fn parabolic_radial_trajectory(
    sys: &MassSystem,
    r_start: f64,
    times: &[f64],
) -> Result<crate::integrate::Trajectory> {
    require_two_bodies(sys)?;
    if sys.dim() != 2 {
        return Err(Error::Invalid("parabolic escape helper requires dim = 2".into()));
    }
    if !(r_start > 0.0) {
        return Err(Error::Invalid("r_start must be positive".into()));
    }
    let mu = sys.total_mass();
    let k = (4.5 * mu).powf(1.0 / 3.0);
    let t0 = (r_start / k).powf(1.5);
    let mut pos = Vec::with_capacity(times.len());
    let mut vel = Vec::with_capacity(times.len());
    for &t in times {
        let s = t + t0;
        if !(s > 0.0) {
            return Err(Error::Invalid("sample before the ejection time".into()));
        }
        let r = k * s.powf(2.0 / 3.0);
        let rdot = 2.0 / 3.0 * k * s.powf(-1.0 / 3.0);
        pos.push(assemble(sys, &[r, 0.0], &[0.0, 0.0]));
        vel.push(assemble(sys, &[rdot, 0.0], &[0.0, 0.0]));
    }
    crate::integrate::Trajectory::from_samples(
        times.to_vec(),
        pos,
        vel,
        0.0,
        crate::integrate::Termination::ReachedTmax,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::integrate;

    fn sys2() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    fn cfg(data: &[f64]) -> Configuration {
        Configuration::from_flat(data.to_vec(), 2).unwrap()
    }

    fn vel(data: &[f64]) -> Velocity {
        Velocity::from_flat(data.to_vec(), 2).unwrap()
    }

    #[test]
    fn circular_orbit_closes_after_a_period() {
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let s = 0.5f64.sqrt();
        let v = vel(&[0.0, -s, 0.0, s]);
        let period = std::f64::consts::PI * 2.0f64.sqrt();
        let (x1, v1) = kepler_two_body(&sys, &x, &v, period).unwrap();
        assert!(sys.mass_distance(x1.coords(), x.coords()) < 1e-12);
        assert!(sys.mass_distance(v1.coords(), v.coords()) < 1e-12);
    }

    #[test]
    fn propagator_matches_integrator_at_t_100() {
        let sys = sys2();
        let x = cfg(&[-1.0, 0.2, 1.0, -0.2]);
        let v = vel(&[-0.8, 0.1, 0.8, -0.1]);
        let (xk, vk) = kepler_two_body(&sys, &x, &v, 100.0).unwrap();
        let traj = integrate(&sys, &x, &v, (0.0, 100.0), 1e-13).unwrap();
        let (xi, vi) = traj.state(traj.len() - 1);
        assert!(sys.mass_distance(xk.coords(), xi.coords()) < 1e-8);
        assert!(sys.mass_distance(vk.coords(), vi.coords()) < 1e-8);
    }

    #[test]
    fn hyperbolic_asymptote_speed_is_sqrt_2h() {
        let sys = sys2();
        let x = cfg(&[-1.0, 0.0, 1.0, 0.0]);
        let v = vel(&[-1.0, -0.3, 1.0, 0.3]);
        let h = sys.energy(&x, &v).unwrap();
        assert!(h > 0.0);
        let asy = hyperbolic_asymptotes(&sys, &x, &v).unwrap();
        let speed = sys.mass_norm(asy.outgoing.coords());
        assert!((speed - (2.0 * h).sqrt()).abs() < 1e-12);
        // the outgoing asymptote is where the integrated velocity heads
        let traj = integrate(&sys, &x, &v, (0.0, 2000.0), 1e-12).unwrap();
        let v_end = traj.velocity(traj.len() - 1);
        let err = sys.mass_distance(v_end, asy.outgoing.coords());
        assert!(err < 5e-3, "asymptote error {err}");
    }

    #[test]
    fn elements_classify_branches() {
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let vc = vel(&[0.0, -0.5f64.sqrt(), 0.0, 0.5f64.sqrt()]);
        let el = KeplerElements::from_state(&sys, &x, &vc).unwrap();
        assert!(!el.is_hyperbolic());
        assert!(el.eccentricity < 1e-8, "circular e = {}", el.eccentricity);

        let vh = vel(&[-1.3, 0.2, 1.3, -0.2]);
        let el = KeplerElements::from_state(&sys, &x, &vh).unwrap();
        assert!(el.is_hyperbolic());
        assert!(el.eccentricity > 1.0);
        assert!((el.energy_nbody - sys.energy(&x, &vh).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn rectilinear_inbound_flags_collision_time() {
        // relative coordinates: separation 2, closing speed 1 each -> rv < 0
        let w0 = [2.0, 0.0];
        let wd0 = [-1.0, 0.0];
        let err = kepler_propagate_relative(2.0, &w0, &wd0, 10.0).unwrap_err();
        match err {
            Error::FiniteTimeSingularity { t_collision } => {
                assert!(t_collision > 0.0 && t_collision < 10.0);
            }
            other => panic!("expected singularity flag, got {other}"),
        }
        // short propagation before the collision still works
        let (w, _, res) = kepler_propagate_relative(2.0, &w0, &wd0, 0.5).unwrap();
        assert!(w[0] < 2.0 && w[0] > 0.0);
        assert!(res <= 1e-13 * 1.0_f64.max(0.5));
    }

    #[test]
    fn radial_action_closed_form_h0() {
        // pure integral check: integral sqrt(2/r) dr = 2 sqrt(2 r)
        let sys = sys2(); // m_red = 1/2, coupling 1 -> integrand sqrt(2*(1/2)*(1/r)) = sqrt(1/r)
        let a = radial_two_body_action(&sys, 1e-12, 4.0, 0.0).unwrap();
        // integral_0^4 r^(-1/2) dr = 2 sqrt(4) = 4
        assert!((a - 4.0).abs() < 1e-5, "a = {a}");

        let a2 = radial_two_body_action(&sys, 1.0, 4.0, 0.0).unwrap();
        let exact = 2.0 * (4.0f64.sqrt() - 1.0);
        assert!((a2 - exact).abs() < 1e-10);
    }

    #[test]
    fn radial_action_approaches_linear_bound_far_out() {
        let sys = sys2();
        let h = 1.0;
        let (r0, r1) = (100.0, 200.0);
        let a = radial_two_body_action(&sys, r0, r1, h).unwrap();
        // m_red = 1/2: distance in the mass metric is sqrt(m_red) * |r1 - r0|
        let base = (2.0 * h * 0.5f64).sqrt() * (r1 - r0);
        assert!(a >= base);
        assert!((a - base) / base < 0.01, "tail correction too large: {}", (a - base) / base);
    }

    #[test]
    fn bvp_action_respects_lower_bound_and_bracket() {
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let y = cfg(&[-0.2, -1.5, 0.2, 1.5]);
        let h = 1.0;
        let arc = kepler_bvp_action(&sys, &x, &y, h).unwrap();
        let dist = sys.mass_distance(x.coords(), y.coords());
        assert!(arc.action >= (2.0 * h).sqrt() * dist, "lower bound violated");
        assert!(arc.tof > 0.0);
        // time bracket: P(tof) = 2h tof^2 - 2 phi tof + dist^2 <= 0
        let p = 2.0 * h * arc.tof * arc.tof - 2.0 * arc.action * arc.tof + dist * dist;
        assert!(p <= 1e-9 * (1.0 + arc.action * arc.tof), "P(tof) = {p}");
    }

    #[test]
    fn bvp_same_ray_reduces_to_radial() {
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let y = cfg(&[-2.0, 0.0, 2.0, 0.0]);
        let h = 0.7;
        let arc = kepler_bvp_action(&sys, &x, &y, h).unwrap();
        let rad = radial_two_body_action(&sys, 1.0, 4.0, h).unwrap();
        assert!((arc.action - rad).abs() < 1e-9 * rad);
    }

    #[test]
    fn bvp_arc_is_a_real_transfer() {
        // integrate from the shooting departure state and confirm the arc
        // really passes through the target at the reported time of flight
        let sys = sys2();
        let x = cfg(&[-0.5, 0.1, 0.5, -0.1]);
        let y = cfg(&[-1.3, -0.9, 1.3, 0.9]);
        let h = 1.0;
        let arc = kepler_bvp_action(&sys, &x, &y, h).unwrap();
        let m_red = 0.5;
        let eps = h / m_red;
        let (w0, _, _, _) = relative_state(&sys, &x, &Velocity(Coords::zeros(2, 2))).unwrap();
        let r0 = (w0[0] * w0[0] + w0[1] * w0[1]).sqrt();
        let v0 = (2.0 * (eps + sys.total_mass() / r0)).sqrt();
        let wd0 = [v0 * arc.theta.cos(), v0 * arc.theta.sin()];
        let (w_end, _, _) =
            kepler_propagate_relative(sys.total_mass(), &w0, &wd0, arc.tof).unwrap();
        let (w1, _, _, _) = relative_state(&sys, &y, &Velocity(Coords::zeros(2, 2))).unwrap();
        let miss = ((w_end[0] - w1[0]).powi(2) + (w_end[1] - w1[1]).powi(2)).sqrt();
        assert!(miss < 1e-8, "miss {miss}");
    }

    #[test]
    fn parabolic_escape_satisfies_energy_and_eom() {
        let sys = sys2();
        let times: Vec<f64> = (0..200).map(|k| 0.5 + k as f64 * 0.5).collect();
        let traj = parabolic_radial_trajectory(&sys, 1.0, &times).unwrap();
        // energy 0 at every sample
        for k in 0..traj.len() {
            let u = sys.potential_coords(traj.position(k));
            let t2 = 0.5 * sys.mass_inner(traj.velocity(k), traj.velocity(k));
            assert!((t2 - u).abs() < 1e-10, "sample {k}");
        }
        // matches the integrator over a short stretch
        let (x0, v0) = traj.state(0);
        let reint = integrate(&sys, &x0, &v0, (0.5, 20.0), 1e-13).unwrap();
        let (xi, _) = reint.state(reint.len() - 1);
        let (xa, _) = traj.state(39); // t = 20.0
        assert!((traj.times()[39] - 20.0).abs() < 1e-12);
        assert!(sys.mass_distance(xi.coords(), xa.coords()) < 1e-8);
    }
}
