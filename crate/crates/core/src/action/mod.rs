//! Discrete Lagrangian action and the action potentials.
//!
//! A curve is discretized as a [`Path`]: a time grid with one
//! configuration per node. The kinetic term is evaluated exactly for the
//! piecewise-linear interpolant; the potential term uses two-point Gauss
//! quadrature per segment, which keeps the discrete action a smooth
//! function of the nodes away from collisions. Fixed-time minimization
//! runs a limited-memory quasi-Newton descent in mass-orthonormal
//! coordinates from multi-start initializations; free-time minimization
//! runs a golden-section search over the transfer time inside the bracket
//! given by the roots of `2 h t^2 - 2 ub t + d^2`.
//!
//! Interior collisions are handled by rejection: converged paths that
//! pass too close to a collision are discarded and the solve restarts
//! from a perturbed initialization (true minimizers stay interior
//! collision-free, so a barrier would change the minimized functional).

mod solve;

pub use solve::{
    default_segments, free_time_minimize, minimize_fixed_time, verify_minimizer, FixedTimeOpts,
    FreeTimeOpts, MinimizerReport, PotentialValue, SolveDiagnostics,
};

use crate::coords::{Configuration, Coords};
use crate::error::{Error, Result};
use crate::quad::GAUSS2_NODES;
use crate::system::MassSystem;

/// A discrete curve: strictly increasing times and one node per time.
#[derive(Clone, Debug)]
pub struct Path {
    times: Vec<f64>,
    nodes: Vec<Coords>,
    endpoints_fixed: bool,
}

/// The three pieces of the (supercritical) action of a path.
#[derive(Clone, Copy, Debug)]
pub struct ActionBreakdown {
    pub kinetic: f64,
    pub potential_integral: f64,
    /// `h * (t_M - t_0)`.
    pub time_cost: f64,
    pub total: f64,
}

impl Path {
    /// A path over the given grid. Needs at least two segments.
    pub fn new(times: Vec<f64>, nodes: Vec<Coords>) -> Result<Self> {
        if times.len() < 3 || times.len() != nodes.len() {
            return Err(Error::Invalid("path needs >= 3 consistent samples".into()));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Invalid("path times must be strictly increasing".into()));
        }
        Ok(Self { times, nodes, endpoints_fixed: true })
    }

    /// The straight chord from `x` to `y` over `[0, tau]` on a given grid.
    pub fn chord(x: &Configuration, y: &Configuration, grid: Vec<f64>) -> Result<Self> {
        let tau = grid.last().copied().unwrap_or(0.0) - grid.first().copied().unwrap_or(0.0);
        if !(tau > 0.0) {
            return Err(Error::Invalid("chord needs a positive duration".into()));
        }
        let t0 = grid[0];
        let nodes = grid
            .iter()
            .map(|&t| {
                let s = (t - t0) / tau;
                let mut n = x.coords().clone();
                n.scale(1.0 - s);
                n.add_scaled(y.coords(), s);
                n
            })
            .collect();
        Self::new(grid, nodes)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn nodes(&self) -> &[Coords] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &Coords {
        &self.nodes[k]
    }

    pub(crate) fn node_mut(&mut self, k: usize) -> &mut Coords {
        &mut self.nodes[k]
    }

    /// Number of segments M.
    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn endpoints_fixed(&self) -> bool {
        self.endpoints_fixed
    }

    /// Smallest mutual separation over all nodes.
    pub fn min_node_separation(&self, sys: &MassSystem) -> f64 {
        self.nodes
            .iter()
            .map(|n| sys.min_separation(n))
            .fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation at `t` (clamped to the span).
    pub fn sample(&self, t: f64) -> Coords {
        let t = t.clamp(self.times[0], *self.times.last().unwrap());
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => k.min(self.times.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.times.len() - 2),
        };
        let s = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        let mut out = self.nodes[k].clone();
        out.scale(1.0 - s);
        out.add_scaled(&self.nodes[k + 1], s);
        out
    }

    /// The same geometric curve resampled onto a new grid (linear in the
    /// normalized time), used for warm starts across transfer times.
    pub fn resample(&self, grid: Vec<f64>) -> Result<Self> {
        let (a, b) = (self.times[0], *self.times.last().unwrap());
        let (c, d) = (grid[0], *grid.last().unwrap());
        if !(d > c) {
            return Err(Error::Invalid("resample grid must span a positive time".into()));
        }
        let nodes = grid
            .iter()
            .map(|&t| {
                let s = (t - c) / (d - c);
                self.sample(a + s * (b - a))
            })
            .collect();
        Self::new(grid, nodes)
    }

    /// CSV with header `t, x_1_1..x_N_d` (the trajectory schema with the
    /// velocity block omitted).
    pub fn to_csv(&self) -> String {
        let n = self.nodes[0].n_bodies();
        let d = self.nodes[0].dim();
        let mut out = String::from("t");
        for i in 1..=n {
            for k in 1..=d {
                out.push_str(&format!(", x_{i}_{k}"));
            }
        }
        out.push('\n');
        for s in 0..self.times.len() {
            out.push_str(&format!("{:.16e}", self.times[s]));
            for v in self.nodes[s].as_slice() {
                out.push_str(&format!(", {v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Action of a path for the Lagrangian `L + h`: exact piecewise-linear
/// kinetic part, Gauss-2 potential quadrature, `h` times the duration.
/// The total is `f64::INFINITY` when a quadrature point collides.
pub fn path_action(sys: &MassSystem, path: &Path, h: f64) -> ActionBreakdown {
    let mut kinetic = 0.0;
    let mut pot = 0.0;
    for k in 0..path.segments() {
        let dt = path.times[k + 1] - path.times[k];
        let dx = path.nodes[k + 1].sub(&path.nodes[k]);
        kinetic += sys.mass_inner(&dx, &dx) / (2.0 * dt);
        for &g in &GAUSS2_NODES {
            let mut q = path.nodes[k].clone();
            q.add_scaled(&dx, g);
            let u = sys.potential_coords(&q);
            if !u.is_finite() {
                return ActionBreakdown {
                    kinetic,
                    potential_integral: f64::INFINITY,
                    time_cost: h * path.duration(),
                    total: f64::INFINITY,
                };
            }
            pot += 0.5 * dt * u;
        }
    }
    let time_cost = h * path.duration();
    ActionBreakdown { kinetic, potential_integral: pot, time_cost, total: kinetic + pot + time_cost }
}

fn kinetic_gradient(sys: &MassSystem, path: &Path, g: &mut [Coords], offset: usize) {
    for k in 0..path.segments() {
        let dt = path.times[k + 1] - path.times[k];
        let dx = path.nodes[k + 1].sub(&path.nodes[k]);
        // d/dx_k  (-dx/dt), d/dx_{k+1} (+dx/dt), times the mass factors
        for (node, sign) in [(k, -1.0), (k + 1, 1.0)] {
            if node < offset || node - offset >= g.len() {
                continue;
            }
            let tgt = &mut g[node - offset];
            for (i, &m) in sys.masses().iter().enumerate() {
                for (a, b) in tgt.body_mut(i).iter_mut().zip(dx.body(i)) {
                    *a += sign * m * b / dt;
                }
            }
        }
    }
}

fn potential_gradient_part(
    sys: &MassSystem,
    path: &Path,
    g: &mut [Coords],
    offset: usize,
) -> Result<()> {
    for k in 0..path.segments() {
        let dt = path.times[k + 1] - path.times[k];
        let dx = path.nodes[k + 1].sub(&path.nodes[k]);
        for &gauss in &GAUSS2_NODES {
            let mut q = path.nodes[k].clone();
            q.add_scaled(&dx, gauss);
            let du = sys.potential_gradient(&Configuration(q))?;
            // q = (1-gauss) x_k + gauss x_{k+1}
            for (node, w) in [(k, 1.0 - gauss), (k + 1, gauss)] {
                if node < offset || node - offset >= g.len() {
                    continue;
                }
                g[node - offset].add_scaled(&du.euclid, 0.5 * dt * w);
            }
        }
    }
    Ok(())
}

/// Exact gradient of [`path_action`] with respect to the movable nodes
/// (the interior ones when endpoints are fixed), returned as mass-metric
/// gradients, one block per node. Errors when the action is infinite.
pub fn path_action_gradient(sys: &MassSystem, path: &Path, h: f64) -> Result<Vec<Coords>> {
    let _ = h; // h enters through the duration only, which is fixed here
    if !path_action(sys, path, 0.0).total.is_finite() {
        return Err(Error::Invalid("path action is infinite".into()));
    }
    let (offset, count) = if path.endpoints_fixed {
        (1, path.segments() - 1)
    } else {
        (0, path.segments() + 1)
    };
    let n = path.nodes[0].n_bodies();
    let d = path.nodes[0].dim();
    let mut g = vec![Coords::zeros(n, d); count];
    kinetic_gradient(sys, path, &mut g, offset);
    potential_gradient_part(sys, path, &mut g, offset)?;
    // mass-metric gradient: divide each body block by its mass
    for blk in &mut g {
        for (i, &m) in sys.masses().iter().enumerate() {
            for v in blk.body_mut(i) {
                *v /= m;
            }
        }
    }
    Ok(g)
}

/// Derivative of the action with respect to the duration for a uniform
/// grid that is stretched homothetically in time: `dA/dtau = (-K + P)/tau + h`.
pub fn action_tau_derivative(sys: &MassSystem, path: &Path, h: f64) -> Result<f64> {
    let dts: Vec<f64> = path.times.windows(2).map(|w| w[1] - w[0]).collect();
    let dt0 = dts[0];
    if !dts.iter().all(|&dt| (dt - dt0).abs() <= 1e-9 * dt0) {
        return Err(Error::Invalid("tau derivative needs a uniform grid".into()));
    }
    let a = path_action(sys, path, h);
    if !a.total.is_finite() {
        return Err(Error::Invalid("path action is infinite".into()));
    }
    Ok((-a.kinetic + a.potential_integral) / path.duration() + h)
}

/// Bracket for the optimal free-transfer time: the roots of
/// `P(t) = 2 h t^2 - 2 ub t + dist^2`, valid for any upper bound
/// `ub >= phi_h(x, y)`.
pub fn free_time_bracket(h: f64, dist: f64, ub: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::Invalid("free-time bracket needs h > 0".into()));
    }
    let disc = ub * ub - 2.0 * h * dist * dist;
    if disc < 0.0 {
        if disc > -1e-12 * ub * ub {
            let t = ub / (2.0 * h);
            return Ok((t, t));
        }
        return Err(Error::InconsistentBound(format!(
            "ub^2 = {} < 2 h dist^2 = {}",
            ub * ub,
            2.0 * h * dist * dist
        )));
    }
    let s = disc.sqrt();
    Ok(((ub - s) / (2.0 * h), (ub + s) / (2.0 * h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::Velocity;
    use crate::integrate::integrate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sys2() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    fn cfg(data: &[f64]) -> Configuration {
        Configuration::from_flat(data.to_vec(), 2).unwrap()
    }

    fn uniform_grid(tau: f64, m: usize) -> Vec<f64> {
        (0..=m).map(|k| tau * k as f64 / m as f64).collect()
    }

    #[test]
    fn stationary_path_action() {
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let tau = 2.5;
        let grid = uniform_grid(tau, 8);
        let nodes = vec![x.coords().clone(); 9];
        let p = Path::new(grid, nodes).unwrap();
        let h = 0.7;
        let a = path_action(&sys, &p, h);
        assert_eq!(a.kinetic, 0.0);
        assert!((a.potential_integral - sys.potential(&x) * tau).abs() < 1e-12);
        assert!((a.total - (sys.potential(&x) + h) * tau).abs() < 1e-12);
    }

    #[test]
    fn straight_segment_kinetic_is_exact() {
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let y = cfg(&[-0.5, 2.0, 0.5, 2.0]);
        let tau = 3.0;
        let p = Path::chord(&x, &y, uniform_grid(tau, 16)).unwrap();
        let a = path_action(&sys, &p, 0.0);
        let d2 = sys.mass_distance(x.coords(), y.coords()).powi(2);
        assert!((a.kinetic - d2 / (2.0 * tau)).abs() < 1e-12);
    }

    #[test]
    fn refinement_converges_quadratically() {
        // doubling M changes the total by O(M^-2) on a smooth curved path
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let s = 0.5f64.sqrt();
        let v = Velocity::from_flat(vec![0.0, -s, 0.0, s], 2).unwrap();
        let traj = integrate(&sys, &x, &v, (0.0, 1.0), 1e-13).unwrap();
        let action_at = |m: usize| -> f64 {
            let grid = uniform_grid(1.0, m);
            let nodes: Vec<Coords> = grid
                .iter()
                .map(|&t| traj.sample_at(&sys, t).unwrap().0 .0)
                .collect();
            path_action(&sys, &Path::new(grid, nodes).unwrap(), 0.0).total
        };
        let (a1, a2, a4) = (action_at(32), action_at(64), action_at(128));
        let r = (a1 - a2) / (a2 - a4);
        assert!((r - 4.0).abs() < 0.5, "convergence ratio {r}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let sys = MassSystem::new(vec![1.0, 2.0], 2).unwrap();
        let x = cfg(&[-0.7, 0.1, 0.4, -0.2]);
        let y = cfg(&[1.0, 1.2, -0.8, 0.9]);
        let mut p = Path::chord(&x, &y, uniform_grid(2.0, 12)).unwrap();
        // bend it to make the test non-trivial
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..12 {
            for v in p.node_mut(k).as_mut_slice() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let g = path_action_gradient(&sys, &p, 0.0).unwrap();
        let eps = 1e-6;
        for k in 1..12 {
            for i in 0..2 {
                for c in 0..2 {
                    let mut pp = p.clone();
                    pp.node_mut(k).body_mut(i)[c] += eps;
                    let mut pm = p.clone();
                    pm.node_mut(k).body_mut(i)[c] -= eps;
                    let fd = (path_action(&sys, &pp, 0.0).total
                        - path_action(&sys, &pm, 0.0).total)
                        / (2.0 * eps);
                    // g is the mass-metric gradient: euclid = m * mass
                    let have = g[k - 1].body(i)[c] * sys.masses()[i];
                    assert!(
                        (have - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "node {k} body {i} coord {c}: {have} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_vanishes_on_true_motion() {
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let s = 0.5f64.sqrt();
        let v = Velocity::from_flat(vec![0.0, -s, 0.0, s], 2).unwrap();
        let tau = 0.5;
        let traj = integrate(&sys, &x, &v, (0.0, tau), 1e-13).unwrap();
        let m = 512;
        let grid = uniform_grid(tau, m);
        let nodes: Vec<Coords> = grid
            .iter()
            .map(|&t| traj.sample_at(&sys, t).unwrap().0 .0)
            .collect();
        let p = Path::new(grid, nodes).unwrap();
        let g = path_action_gradient(&sys, &p, 0.0).unwrap();
        let norm2: f64 = g.iter().map(|b| sys.mass_inner(b, b)).sum();
        assert!(norm2.sqrt() <= 1e-8, "gradient norm {}", norm2.sqrt());
    }

    #[test]
    fn straight_free_path_has_zero_kinetic_gradient() {
        // with the potential absent the chord is a flat geodesic
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let y = cfg(&[1.5, 1.0, 2.5, 1.0]);
        let p = Path::chord(&x, &y, uniform_grid(1.0, 8)).unwrap();
        let mut g = vec![Coords::zeros(2, 2); 7];
        kinetic_gradient(&sys, &p, &mut g, 1);
        for blk in &g {
            assert!(blk.norm_euclid() < 1e-13);
        }
    }

    #[test]
    fn tau_derivative_matches_finite_differences() {
        let sys = sys2();
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let y = cfg(&[-1.0, 2.0, 1.0, 2.2]);
        let h = 0.8;
        let tau = 2.0;
        let p = Path::chord(&x, &y, uniform_grid(tau, 32)).unwrap();
        let d = action_tau_derivative(&sys, &p, h).unwrap();
        let eps = 1e-6;
        let ap = path_action(&sys, &p.resample(uniform_grid(tau + eps, 32)).unwrap(), h);
        let am = path_action(&sys, &p.resample(uniform_grid(tau - eps, 32)).unwrap(), h);
        let fd = (ap.total - am.total) / (2.0 * eps);
        assert!((d - fd).abs() < 1e-5 * (1.0 + fd.abs()), "{d} vs {fd}");
    }

    #[test]
    fn bracket_roots() {
        // h = 1/2, ub = 2, dist^2 = 3: P = t^2 - 4t + 3 -> roots 1, 3
        let (a, b) = free_time_bracket(0.5, 3.0f64.sqrt(), 2.0).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        assert!((b - 3.0).abs() < 1e-12);

        // degenerate: ub = sqrt(2h) dist -> double root dist / sqrt(2h)
        let h = 0.7f64;
        let dist = 1.3;
        let ub = (2.0 * h).sqrt() * dist;
        let (a, b) = free_time_bracket(h, dist, ub).unwrap();
        // the discriminant cancels to rounding noise, so the roots agree
        // only to ~sqrt(eps)
        assert!((a - b).abs() < 1e-6);
        assert!((a - dist / (2.0 * h).sqrt()).abs() < 1e-6);

        // widening in ub
        let (a1, b1) = free_time_bracket(h, dist, ub * 1.5).unwrap();
        assert!(a1 < a && b1 > b);

        // inconsistent bound
        assert!(free_time_bracket(h, dist, 0.5 * ub).is_err());
    }

    #[test]
    fn path_csv_header() {
        let x = cfg(&[-0.5, 0.0, 0.5, 0.0]);
        let y = cfg(&[1.5, 1.0, 2.5, 1.0]);
        let p = Path::chord(&x, &y, uniform_grid(1.0, 4)).unwrap();
        let csv = p.to_csv();
        assert!(csv.starts_with("t, x_1_1, x_1_2, x_2_1, x_2_2\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
