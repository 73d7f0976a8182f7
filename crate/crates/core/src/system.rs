//! Configuration-space primitives: the mass metric, the Newtonian
//! potential and its gradient, energy, inertia and shape statistics.
//!
//! Conventions: the gravitational constant is 1 (absorbed into the
//! masses). The potential is `U(x) = sum_{i<j} m_i m_j / r_ij`, so
//! Newton's equations read `x'' = grad U(x)` with the gradient taken in
//! the mass scalar product. A configuration is treated as colliding when
//! some mutual distance is at or below the system's collision tolerance;
//! at such points `potential` returns `f64::INFINITY` (a value, not an
//! error) so that minimization code can branch on it.

use crate::coords::{Configuration, Coords, Velocity};
use crate::error::{Error, Result};

/// The masses, the space dimension and the collision tolerance.
/// Immutable; all operations on it are pure.
#[derive(Clone, Debug)]
pub struct MassSystem {
    masses: Vec<f64>,
    dim: usize,
    collision_tol: f64,
}

/// Scalar statistics of a configuration.
#[derive(Clone, Debug)]
pub struct ConfigStats {
    /// Newtonian potential (infinite at collisions).
    pub potential: f64,
    /// Moment of inertia about the origin, `I = <x, x>`.
    pub inertia_origin: f64,
    /// Moment of inertia about the center of mass.
    pub inertia_com: f64,
    /// Center of mass (a point of the base space E).
    pub com: Vec<f64>,
    /// Minimal mutual distance `r`.
    pub min_sep: f64,
    /// Maximal mutual distance `R`.
    pub max_sep: f64,
    /// Configurational measure `mu = U * I^(1/2)` (about the origin).
    pub measure: f64,
}

/// Euclidean and mass-metric gradients of the potential.
#[derive(Clone, Debug)]
pub struct PotentialGradient {
    /// Per-body `dU/dr_i`.
    pub euclid: Coords,
    /// Per-body `m_i^{-1} dU/dr_i`; Newton's equations are `x'' = mass`.
    pub mass: Coords,
}

impl MassSystem {
    /// A system with the given masses in dimension `dim >= 2`.
    /// The collision tolerance defaults to `1e-12`; scale it to the
    /// problem with [`MassSystem::with_collision_tol`].
    pub fn new(masses: Vec<f64>, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Invalid(format!(
                "dim must be >= 2 (got {dim}); use new_collinear to override"
            )));
        }
        Self::build(masses, dim)
    }

    /// Explicit override admitting `dim = 1`. Collinear systems are not
    /// covered by the hyperbolic-synthesis results; minimizers may then
    /// pass through collisions.
    pub fn new_collinear(masses: Vec<f64>) -> Result<Self> {
        Self::build(masses, 1)
    }

    fn build(masses: Vec<f64>, dim: usize) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::Invalid("need at least two bodies".into()));
        }
        if !masses.iter().all(|&m| m.is_finite() && m > 0.0) {
            return Err(Error::Invalid("all masses must be strictly positive".into()));
        }
        Ok(Self { masses, dim, collision_tol: 1e-12 })
    }

    pub fn with_collision_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(Error::Invalid("collision_tol must be positive".into()));
        }
        self.collision_tol = tol;
        Ok(self)
    }

    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn collision_tol(&self) -> f64 {
        self.collision_tol
    }

    /// Checks that a coordinate block has this system's shape.
    pub fn check_shape(&self, c: &Coords) -> Result<()> {
        if c.n_bodies() != self.n_bodies() || c.dim() != self.dim {
            return Err(Error::Shape(format!(
                "expected {} bodies x dim {}, got {} x {}",
                self.n_bodies(),
                self.dim,
                c.n_bodies(),
                c.dim()
            )));
        }
        Ok(())
    }

    /// The mass scalar product `sum_i m_i <x_i, y_i>`.
    ///
    /// Panics on shape mismatch; validate external input once with
    /// [`MassSystem::check_shape`] at the API boundary.
    pub fn mass_inner(&self, x: &Coords, y: &Coords) -> f64 {
        assert_eq!(x.n_bodies(), self.n_bodies(), "mass_inner: body count mismatch");
        assert_eq!(x.dim(), y.dim(), "mass_inner: dim mismatch");
        assert_eq!(x.n_bodies(), y.n_bodies(), "mass_inner: body count mismatch");
        let mut acc = 0.0;
        for (i, &m) in self.masses.iter().enumerate() {
            let (a, b) = (x.body(i), y.body(i));
            let mut s = 0.0;
            for k in 0..x.dim() {
                s += a[k] * b[k];
            }
            acc += m * s;
        }
        acc
    }

    /// Norm in the mass metric, `||x|| = <x, x>^(1/2)`.
    pub fn mass_norm(&self, x: &Coords) -> f64 {
        self.mass_inner(x, x).sqrt()
    }

    /// Mass-metric distance between two coordinate blocks.
    pub fn mass_distance(&self, x: &Coords, y: &Coords) -> f64 {
        self.mass_norm(&x.sub(y))
    }

    /// Minimal mutual distance of the configuration.
    pub fn min_separation(&self, x: &Coords) -> f64 {
        let n = x.n_bodies();
        let mut r = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                r = r.min(x.pair_distance(i, j));
            }
        }
        r
    }

    /// Maximal mutual distance of the configuration.
    pub fn max_separation(&self, x: &Coords) -> f64 {
        let n = x.n_bodies();
        let mut r = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                r = r.max(x.pair_distance(i, j));
            }
        }
        r
    }

    /// Membership in Omega: every mutual distance above the tolerance.
    pub fn is_collision_free(&self, x: &Configuration) -> bool {
        self.min_separation(x.coords()) > self.collision_tol
    }

    /// Newtonian potential. Returns `f64::INFINITY` when some pair
    /// distance is at or below the collision tolerance.
    pub fn potential(&self, x: &Configuration) -> f64 {
        self.potential_coords(x.coords())
    }

    pub(crate) fn potential_coords(&self, x: &Coords) -> f64 {
        let n = x.n_bodies();
        let mut u = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let r = x.pair_distance(i, j);
                if r <= self.collision_tol {
                    return f64::INFINITY;
                }
                u += self.masses[i] * self.masses[j] / r;
            }
        }
        u
    }

    /// Gradient of the potential, both in Euclidean and mass-metric form.
    /// Errors on a colliding configuration.
    pub fn potential_gradient(&self, x: &Configuration) -> Result<PotentialGradient> {
        let euclid = self.accel_euclid(x.coords())?;
        let mut mass = euclid.clone();
        for (i, &m) in self.masses.iter().enumerate() {
            for v in mass.body_mut(i) {
                *v /= m;
            }
        }
        Ok(PotentialGradient { euclid, mass })
    }

    /// Per-body `dU/dr_i` (Euclidean gradient).
    fn accel_euclid(&self, x: &Coords) -> Result<Coords> {
        let n = x.n_bodies();
        let d = x.dim();
        let mut g = Coords::zeros(n, d);
        for i in 0..n {
            for j in (i + 1)..n {
                let r = x.pair_distance(i, j);
                if r <= self.collision_tol {
                    return Err(Error::Collision { min_sep: r, tol: self.collision_tol });
                }
                let c = self.masses[i] * self.masses[j] / (r * r * r);
                for k in 0..d {
                    let diff = x.body(j)[k] - x.body(i)[k];
                    g.body_mut(i)[k] += c * diff;
                    g.body_mut(j)[k] -= c * diff;
                }
            }
        }
        Ok(g)
    }

    /// Potential and its Euclidean gradient in one pairwise pass; None at
    /// collisions. This is the hot kernel of the action solvers.
    pub(crate) fn potential_and_gradient(&self, x: &Coords) -> Option<(f64, Coords)> {
        let n = x.n_bodies();
        let d = x.dim();
        let mut u = 0.0;
        let mut g = Coords::zeros(n, d);
        for i in 0..n {
            for j in (i + 1)..n {
                let r = x.pair_distance(i, j);
                if r <= self.collision_tol {
                    return None;
                }
                let mm = self.masses[i] * self.masses[j];
                u += mm / r;
                let c = mm / (r * r * r);
                for k in 0..d {
                    let diff = x.body(j)[k] - x.body(i)[k];
                    g.body_mut(i)[k] += c * diff;
                    g.body_mut(j)[k] -= c * diff;
                }
            }
        }
        Some((u, g))
    }

    /// Acceleration field of Newton's equations: `x'' = m^{-1} dU/dx`.
    pub(crate) fn accel(&self, x: &Coords) -> Result<Coords> {
        let mut g = self.accel_euclid(x)?;
        for (i, &m) in self.masses.iter().enumerate() {
            for v in g.body_mut(i) {
                *v /= m;
            }
        }
        Ok(g)
    }

    /// Energy `h = 1/2 <v, v> - U(x)`. Errors at collisions.
    pub fn energy(&self, x: &Configuration, v: &Velocity) -> Result<f64> {
        let u = self.potential(x);
        if u.is_infinite() {
            let r = self.min_separation(x.coords());
            return Err(Error::Collision { min_sep: r, tol: self.collision_tol });
        }
        Ok(0.5 * self.mass_inner(v.coords(), v.coords()) - u)
    }

    /// Center of mass of a coordinate block.
    pub fn com(&self, x: &Coords) -> Vec<f64> {
        let d = x.dim();
        let mut g = vec![0.0; d];
        for (i, &m) in self.masses.iter().enumerate() {
            for k in 0..d {
                g[k] += m * x.body(i)[k];
            }
        }
        let mtot = self.total_mass();
        for v in &mut g {
            *v /= mtot;
        }
        g
    }

    /// Shifts the block so its center of mass is at the origin.
    pub fn remove_com(&self, x: &mut Coords) {
        let g = self.com(x);
        for i in 0..x.n_bodies() {
            for k in 0..x.dim() {
                x.body_mut(i)[k] -= g[k];
            }
        }
    }

    /// All scalar statistics of a configuration in one pass.
    pub fn config_stats(&self, x: &Configuration) -> ConfigStats {
        let c = x.coords();
        let potential = self.potential_coords(c);
        let inertia_origin = self.mass_inner(c, c);
        let com = self.com(c);
        let com_norm2: f64 = com.iter().map(|v| v * v).sum();
        let inertia_com = inertia_origin - self.total_mass() * com_norm2;
        let measure = if potential.is_infinite() {
            f64::INFINITY
        } else {
            potential * inertia_origin.sqrt()
        };
        ConfigStats {
            potential,
            inertia_origin,
            inertia_com: inertia_com.max(0.0),
            com,
            min_sep: self.min_separation(c),
            max_sep: self.max_separation(c),
            measure,
        }
    }

    /// Rescales `v` onto the energy-h shell at `x` (same direction,
    /// speed `sqrt(2 (h + U(x)))`). None at collisions, for zero `v`,
    /// or when `h + U < 0`.
    pub(crate) fn onto_energy_shell(&self, x: &Coords, v: &Coords, h: f64) -> Option<Coords> {
        let u = self.potential_coords(x);
        if !u.is_finite() {
            return None;
        }
        let target2 = 2.0 * (h + u);
        let speed = self.mass_norm(v);
        if !(target2 > 0.0) || !(speed > 0.0) {
            return None;
        }
        Some(v.scaled(target2.sqrt() / speed))
    }

    /// A crude length scale of a configuration (largest mutual distance,
    /// falling back to its size when all bodies coincide). Used to scale
    /// the default collision tolerance to the input.
    pub fn characteristic_length(&self, x: &Configuration) -> f64 {
        let r = self.max_separation(x.coords());
        if r > 0.0 {
            r
        } else {
            let i = self.mass_inner(x.coords(), x.coords());
            (i / self.total_mass()).sqrt().max(1.0)
        }
    }
}
