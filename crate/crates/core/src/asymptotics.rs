//! Asymptotic analysis of expansive motions: the limit-shape fit with
//! logarithmic correction, classification of final evolutions, the limit
//! shape map of bi-hyperbolic motions, and the perihelia-section scan.
//!
//! The fit model is `x(t) = t a - log(t) c + d` per coordinate; on a
//! clean hyperbolic run the fitted `c` reproduces the mass-metric
//! potential gradient at the asymptotic velocity configuration `a`, and
//! `|a| = sqrt(2h)`.

use crate::coords::{Configuration, Coords, Velocity};
use crate::error::{Error, Result};
use crate::integrate::{integrate_with, IntegrateOpts, Termination, Trajectory};
use crate::system::MassSystem;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Least-squares fit of the Chazy expansion over a time window.
#[derive(Clone, Debug)]
pub struct AsymptoticFit {
    /// Fitted asymptotic velocity configuration (norm near sqrt(2h)).
    pub direction: Velocity,
    /// Fitted coefficient of the -log(t) term (compare with grad U(a)).
    pub log_coeff: Coords,
    /// Fitted constant offset (absorbs the analytic remainder).
    pub offset: Coords,
    pub window: (f64, f64),
    /// Mass-metric rms of the position residuals, never hidden.
    pub rms_residual: f64,
    /// Tail median of R/r (Chazy's limit L).
    pub ratio_l: f64,
}

#[derive(Clone, Debug)]
pub struct FitOpts {
    /// Minimum number of samples inside the window.
    pub min_samples: usize,
    /// Skip the `t_lo >= 10 x (characteristic time)` check.
    pub allow_early_window: bool,
}

impl Default for FitOpts {
    fn default() -> Self {
        Self { min_samples: 200, allow_early_window: false }
    }
}

/// Sample times inside a window: stored trajectory times, padded with
/// log-spaced interpolation times when too few are stored.
fn window_times(traj: &Trajectory, window: (f64, f64), min_samples: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = traj
        .times()
        .iter()
        .copied()
        .filter(|&t| t >= window.0 && t <= window.1)
        .collect();
    if ts.len() < min_samples && window.0 > 0.0 {
        let k = min_samples - ts.len();
        for i in 0..k {
            let f = (i as f64 + 0.5) / k as f64;
            ts.push(window.0 * (window.1 / window.0).powf(f));
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup();
    }
    ts
}

fn solve_3x3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() < 1e-14 {
            return Err(Error::Conditioning("singular normal equations".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in (row + 1)..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Characteristic interaction time of a trajectory: the dynamical time at
/// the smallest system size it ever has.
fn characteristic_time(sys: &MassSystem, traj: &Trajectory) -> f64 {
    let stride = (traj.len() / 256).max(1);
    let mut r_min = f64::INFINITY;
    let mut k = 0;
    while k < traj.len() {
        r_min = r_min.min(sys.max_separation(traj.position(k)).max(1e-9));
        k += stride;
    }
    (r_min.powi(3) / sys.total_mass()).sqrt()
}

/// The default fit window of a trajectory: its last decade, pushed
/// forward if needed so the start clears `10 x (characteristic time)`.
pub fn default_fit_window(sys: &MassSystem, traj: &Trajectory) -> (f64, f64) {
    let t_end = traj.t_end();
    let t_lo = (t_end / 10.0).max(10.0 * characteristic_time(sys, traj));
    (t_lo, t_end)
}

/// Fits `x(t) = t a - log(t) c + d` over the window by per-coordinate
/// linear least squares. Errors when the window is too short to separate
/// the basis functions or starts before the asymptotic regime.
pub fn limit_shape_fit(
    sys: &MassSystem,
    traj: &Trajectory,
    window: (f64, f64),
    opts: &FitOpts,
) -> Result<AsymptoticFit> {
    let (t_lo, t_hi) = window;
    if !(t_lo > 0.0) || !(t_hi > t_lo) {
        return Err(Error::Invalid("fit window must satisfy 0 < t_lo < t_hi".into()));
    }
    if t_lo < traj.t_start() - 1e-9 || t_hi > traj.t_end() + 1e-9 {
        return Err(Error::Invalid("fit window outside the trajectory span".into()));
    }
    if t_hi / t_lo < 1.5 {
        return Err(Error::Conditioning(format!(
            "window [{t_lo}, {t_hi}] too short to separate t from log t"
        )));
    }
    if !opts.allow_early_window {
        let tc = characteristic_time(sys, traj);
        if t_lo < 10.0 * tc {
            return Err(Error::Invalid(format!(
                "window starts at {t_lo} before the asymptotic regime (10 x t_char = {})",
                10.0 * tc
            )));
        }
    }

    let times = window_times(traj, window, opts.min_samples);
    if times.len() < 8 {
        return Err(Error::Conditioning("too few samples in the fit window".into()));
    }
    let n = sys.n_bodies();
    let d = sys.dim();
    let mut states = Vec::with_capacity(times.len());
    for &t in &times {
        states.push(traj.sample_at(sys, t)?.0);
    }

    // column-scaled normal equations shared across coordinates
    let s1: f64 = times.iter().map(|t| t * t).sum::<f64>().sqrt();
    let s2: f64 = times.iter().map(|t| t.ln() * t.ln()).sum::<f64>().sqrt();
    let s3: f64 = (times.len() as f64).sqrt();
    let basis = |t: f64| [t / s1, -t.ln() / s2, 1.0 / s3];
    let mut gram = [[0.0; 3]; 3];
    for &t in &times {
        let b = basis(t);
        for i in 0..3 {
            for j in 0..3 {
                gram[i][j] += b[i] * b[j];
            }
        }
    }

    let mut a = Coords::zeros(n, d);
    let mut c = Coords::zeros(n, d);
    let mut off = Coords::zeros(n, d);
    for body in 0..n {
        for coord in 0..d {
            let mut rhs = [0.0; 3];
            for (k, &t) in times.iter().enumerate() {
                let b = basis(t);
                let v = states[k].coords().body(body)[coord];
                for i in 0..3 {
                    rhs[i] += b[i] * v;
                }
            }
            let sol = solve_3x3(gram, rhs)?;
            a.body_mut(body)[coord] = sol[0] / s1;
            c.body_mut(body)[coord] = sol[1] / s2;
            off.body_mut(body)[coord] = sol[2] / s3;
        }
    }

    // residuals and tail R/r
    let mut rss = 0.0;
    let mut ratios: Vec<f64> = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mut model = a.scaled(t);
        model.add_scaled(&c, -t.ln());
        model.add_scaled(&off, 1.0);
        let diff = states[k].coords().sub(&model);
        rss += sys.mass_inner(&diff, &diff);
        let r = sys.min_separation(states[k].coords());
        let rr = sys.max_separation(states[k].coords());
        if r > 0.0 {
            ratios.push(rr / r);
        }
    }
    ratios.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let ratio_l = if ratios.is_empty() { f64::NAN } else { ratios[ratios.len() / 2] };

    Ok(AsymptoticFit {
        direction: Velocity(a),
        log_coeff: c,
        offset: off,
        window,
        rms_residual: (rss / times.len() as f64).sqrt(),
        ratio_l,
    })
}

/// Final-evolution label of an expansive (or not) motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpansionLabel {
    Hyperbolic,
    PartiallyHyperbolic,
    CompletelyParabolic,
    NotExpansive,
    SuperhyperbolicSuspect,
    Undetermined,
}

impl std::fmt::Display for ExpansionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Hyperbolic => "Hyperbolic",
            Self::PartiallyHyperbolic => "PartiallyHyperbolic",
            Self::CompletelyParabolic => "CompletelyParabolic",
            Self::NotExpansive => "NotExpansive",
            Self::SuperhyperbolicSuspect => "SuperhyperbolicSuspect",
            Self::Undetermined => "Undetermined",
        };
        f.write_str(s)
    }
}

/// Classification outcome plus the numbers it was based on.
#[derive(Clone, Debug)]
pub struct ExpansionClass {
    pub label: ExpansionLabel,
    /// Fitted slope of log r_ij vs log t per pair (i, j).
    pub pair_exponents: Vec<(usize, usize, f64)>,
    pub evidence: ClassifyEvidence,
}

#[derive(Clone, Debug, Default)]
pub struct ClassifyEvidence {
    /// Median potential over the tail window.
    pub u_tail: f64,
    /// Smallest pair-distance growth factor between the first and last
    /// stored decades.
    pub min_growth: f64,
    /// max(R/t) / median(R/t) over the tail window.
    pub r_over_t_peak: f64,
}

#[derive(Clone, Debug)]
pub struct ClassifyOpts {
    /// Band around slope 1 accepted as hyperbolic growth.
    pub hyperbolic_band: f64,
    /// Band around slope 2/3 accepted as parabolic growth.
    pub parabolic_band: f64,
    /// Tail potential must fall below this for an expansive label.
    pub u_tail_tol: f64,
    /// Minimal growth of every pair distance to count as expansive.
    pub min_growth: f64,
    /// R/t peak over median beyond this flags a superhyperbolic suspect.
    pub super_factor: f64,
    /// Velocity coincidence tolerance (times sqrt(2h)) for grouping
    /// bodies of a partially hyperbolic motion.
    pub coincide_tol: f64,
}

impl Default for ClassifyOpts {
    fn default() -> Self {
        Self {
            hyperbolic_band: 0.1,
            parabolic_band: 0.07,
            u_tail_tol: 0.02,
            // t^(2/3) growth gives a decade-median factor near 5, bounded
            // motions stay near 1
            min_growth: 3.5,
            super_factor: 3.0,
            coincide_tol: 0.05,
        }
    }
}

/// Classifies the final evolution of a trajectory from the growth
/// exponents of the mutual distances over its last stored decade.
/// `Undetermined` is a valid outcome, not an error.
pub fn classify_expansion(sys: &MassSystem, traj: &Trajectory) -> ExpansionClass {
    classify_expansion_with(sys, traj, &ClassifyOpts::default())
}

pub fn classify_expansion_with(
    sys: &MassSystem,
    traj: &Trajectory,
    opts: &ClassifyOpts,
) -> ExpansionClass {
    let n = sys.n_bodies();
    let t_end = traj.t_end();
    let mut evidence = ClassifyEvidence::default();
    let undetermined = |evidence: ClassifyEvidence| ExpansionClass {
        label: ExpansionLabel::Undetermined,
        pair_exponents: Vec::new(),
        evidence,
    };
    if traj.terminated() != Termination::ReachedTmax || t_end <= 0.0 {
        return undetermined(evidence);
    }
    let t_lo = (t_end / 10.0).max(traj.t_start().max(1e-6));
    if t_end / t_lo < 2.0 {
        return undetermined(evidence);
    }

    // tail samples from the stored grid
    let idx: Vec<usize> = (0..traj.len())
        .filter(|&k| traj.times()[k] >= t_lo && traj.times()[k] > 0.0)
        .collect();
    if idx.len() < 8 {
        return undetermined(evidence);
    }

    // median tail potential and R/t statistics
    let mut u_vals: Vec<f64> = idx
        .iter()
        .map(|&k| sys.potential_coords(traj.position(k)))
        .collect();
    u_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    evidence.u_tail = u_vals[u_vals.len() / 2];
    let rot: Vec<f64> = idx
        .iter()
        .map(|&k| sys.max_separation(traj.position(k)) / traj.times()[k])
        .collect();
    // compare the tail end of R/t against the window median: growth
    // beyond bounded-in-t expansion pushes the end far above the median,
    // while decaying R/t (bounded motions) stays below it
    let tail_start = rot.len() - (rot.len() / 10).max(1);
    let rot_end = rot[tail_start..]
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let mut rot_sorted = rot.clone();
    rot_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rot_med = rot_sorted[rot_sorted.len() / 2];
    evidence.r_over_t_peak = rot_end / rot_med.max(1e-300);

    // growth of every pair distance between the first and last decades
    let head_hi = traj.t_start() + 0.1 * (t_end - traj.t_start());
    let head: Vec<usize> = (0..traj.len())
        .filter(|&k| traj.times()[k] <= head_hi)
        .collect();
    let median_pair = |ks: &[usize], i: usize, j: usize| -> f64 {
        let mut v: Vec<f64> = ks.iter().map(|&k| traj.position(k).pair_distance(i, j)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    evidence.min_growth = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let g = median_pair(&idx, i, j) / median_pair(&head, i, j).max(1e-300);
            evidence.min_growth = evidence.min_growth.min(g);
        }
    }

    if evidence.r_over_t_peak > opts.super_factor {
        return ExpansionClass {
            label: ExpansionLabel::SuperhyperbolicSuspect,
            pair_exponents: Vec::new(),
            evidence,
        };
    }
    if evidence.min_growth < opts.min_growth {
        return ExpansionClass {
            label: ExpansionLabel::NotExpansive,
            pair_exponents: Vec::new(),
            evidence,
        };
    }

    // log-log slope per pair over the tail
    let mut exps = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (mut st, mut sl, mut stt, mut stl, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &k in &idx {
                let lt = traj.times()[k].ln();
                let lr = traj.position(k).pair_distance(i, j).max(1e-300).ln();
                st += lt;
                sl += lr;
                stt += lt * lt;
                stl += lt * lr;
                cnt += 1.0;
            }
            let slope = (cnt * stl - st * sl) / (cnt * stt - st * st);
            exps.push((i, j, slope));
        }
    }

    let hyp = |s: f64| (s - 1.0).abs() <= opts.hyperbolic_band;
    let par = |s: f64| (s - 2.0 / 3.0).abs() <= opts.parabolic_band;
    let all_hyp = exps.iter().all(|&(_, _, s)| hyp(s));
    let all_par = exps.iter().all(|&(_, _, s)| par(s));
    let mixed = exps.iter().all(|&(_, _, s)| hyp(s) || par(s))
        && exps.iter().any(|&(_, _, s)| hyp(s))
        && exps.iter().any(|&(_, _, s)| par(s));

    let label = if all_hyp && evidence.u_tail < opts.u_tail_tol {
        ExpansionLabel::Hyperbolic
    } else if all_par {
        ExpansionLabel::CompletelyParabolic
    } else if mixed {
        // the slow pairs must share a limit velocity
        let v_end = traj.velocity(traj.len() - 1);
        let h = traj.energy0().max(0.0);
        let vel_scale = (2.0 * h).sqrt().max(sys.mass_norm(v_end) / (n as f64).sqrt());
        let coincident = exps.iter().filter(|&&(_, _, s)| par(s)).all(|&(i, j, _)| {
            let mut diff2 = 0.0;
            for c in 0..sys.dim() {
                let dv = v_end.body(i)[c] - v_end.body(j)[c];
                diff2 += dv * dv;
            }
            diff2.sqrt() <= opts.coincide_tol * vel_scale.max(1e-12)
        });
        if coincident {
            ExpansionLabel::PartiallyHyperbolic
        } else {
            ExpansionLabel::Undetermined
        }
    } else {
        ExpansionLabel::Undetermined
    };

    ExpansionClass { label, pair_exponents: exps, evidence }
}

/// One side (future or past) of the limit shape map.
#[derive(Clone, Debug)]
pub struct ShapeMapSide {
    /// Fitted asymptotic velocity when the side is clean enough to fit.
    pub direction: Option<Velocity>,
    pub fit: Option<AsymptoticFit>,
    pub class: ExpansionClass,
    pub termination: Termination,
}

/// The pair of past and future asymptotic velocities of a bi-hyperbolic
/// motion, with diagnostics; non-hyperbolic sides yield partial results.
#[derive(Clone, Debug)]
pub struct LimitShapeMap {
    pub plus: ShapeMapSide,
    pub minus: ShapeMapSide,
    pub h: f64,
    pub bi_hyperbolic: bool,
}

impl LimitShapeMap {
    pub fn a_plus(&self) -> Option<&Velocity> {
        self.plus.direction.as_ref()
    }

    pub fn a_minus(&self) -> Option<&Velocity> {
        self.minus.direction.as_ref()
    }
}

fn map_side(sys: &MassSystem, traj: &Trajectory, t_max: f64) -> ShapeMapSide {
    let _ = t_max;
    let class = classify_expansion(sys, traj);
    let fit = if class.label == ExpansionLabel::Hyperbolic {
        limit_shape_fit(sys, traj, default_fit_window(sys, traj), &FitOpts::default()).ok()
    } else {
        None
    };
    ShapeMapSide {
        direction: fit.as_ref().map(|f| f.direction.clone()),
        fit,
        class,
        termination: traj.terminated(),
    }
}

/// Integrates `(x, v)` to both `+t_max` and `-t_max` and fits the two
/// asymptotic velocities. The past side is handled by reversing time
/// (`y(s) = x(-s)` solves the same equations with velocity `-v`).
pub fn limit_shape_map(
    sys: &MassSystem,
    x: &Configuration,
    v: &Velocity,
    t_max: f64,
) -> Result<LimitShapeMap> {
    let h = sys.energy(x, v)?;
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("limit shape map needs h > 0, got {h}")));
    }
    if !(t_max > 0.0) {
        return Err(Error::Invalid("t_max must be positive".into()));
    }
    let opts = IntegrateOpts::default();
    let fwd = integrate_with(sys, x, v, (0.0, t_max), &opts)?;
    let vrev = Velocity(v.coords().scaled(-1.0));
    let bwd = integrate_with(sys, x, &vrev, (0.0, t_max), &opts)?;
    let plus = map_side(sys, &fwd, t_max);
    let minus = map_side(sys, &bwd, t_max);
    let bi = plus.direction.is_some() && minus.direction.is_some();
    Ok(LimitShapeMap { plus, minus, h, bi_hyperbolic: bi })
}

/// Draws perihelion-section states: `G(x) = G(v) = 0`, `<x, v> = 0`,
/// energy exactly `h`, sizes within the given range of maximal mutual
/// distance.
pub struct PerihelionSampler<'a> {
    sys: &'a MassSystem,
    h: f64,
    size_range: (f64, f64),
    rng: ChaCha8Rng,
    remaining: usize,
}

impl<'a> PerihelionSampler<'a> {
    pub fn new(
        sys: &'a MassSystem,
        h: f64,
        size_range: (f64, f64),
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Invalid("perihelion sampler needs h > 0".into()));
        }
        if !(size_range.0 > 0.0 && size_range.1 >= size_range.0) {
            return Err(Error::Invalid("bad size range".into()));
        }
        Ok(Self { sys, h, size_range, rng: ChaCha8Rng::seed_from_u64(seed), remaining: count })
    }
}

impl Iterator for PerihelionSampler<'_> {
    type Item = (Configuration, Velocity);

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let n = self.sys.n_bodies();
        let d = self.sys.dim();
        loop {
            let mut x = Coords::zeros(n, d);
            for v in x.as_mut_slice() {
                *v = self.rng.random_range(-1.0..1.0);
            }
            self.sys.remove_com(&mut x);
            let r = self.sys.max_separation(&x);
            if r < 1e-3 {
                continue;
            }
            let target = self.rng.random_range(self.size_range.0..=self.size_range.1);
            x.scale(target / r);
            if self.sys.min_separation(&x) < 0.05 * target {
                continue; // keep clear of near-collision starts
            }
            let mut v = Coords::zeros(n, d);
            for w in v.as_mut_slice() {
                *w = self.rng.random_range(-1.0..1.0);
            }
            self.sys.remove_com(&mut v);
            // project out the radial component (perihelion section)
            let xx = self.sys.mass_inner(&x, &x);
            let xv = self.sys.mass_inner(&x, &v);
            v.add_scaled(&x, -xv / xx);
            let u = self.sys.potential_coords(&x);
            let speed2 = 2.0 * (self.h + u);
            let vn = self.sys.mass_norm(&v);
            if !(vn > 1e-9) || !(speed2 > 0.0) {
                continue;
            }
            v.scale(speed2.sqrt() / vn);
            return Some((Configuration(x), Velocity(v)));
        }
    }
}

/// One row of a perihelia scan.
#[derive(Clone, Debug)]
pub struct ScanRow {
    pub id: usize,
    pub x: Configuration,
    pub v: Velocity,
    pub map: Option<LimitShapeMap>,
    pub error: Option<String>,
}

/// Result of a perihelia scan; failures are recorded, never fatal.
#[derive(Clone, Debug)]
pub struct ScanDataset {
    pub rows: Vec<ScanRow>,
}

impl ScanDataset {
    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Flat CSV, one row per sample; vectors body-major. A sidecar
    /// schema for the columns is produced by [`ScanDataset::schema`].
    pub fn to_csv(&self, sys: &MassSystem) -> String {
        let n = sys.n_bodies();
        let d = sys.dim();
        let mut out = String::from("id");
        let blocks = ["x", "v", "a_minus", "a_plus"];
        for b in blocks {
            for i in 1..=n {
                for k in 1..=d {
                    out.push_str(&format!(", {b}_{i}_{k}"));
                }
            }
        }
        out.push_str(", h, norm_a_minus, norm_a_plus");
        for k in 1..=d {
            out.push_str(&format!(", g_minus_{k}"));
        }
        for k in 1..=d {
            out.push_str(&format!(", g_plus_{k}"));
        }
        out.push_str(", bi_hyperbolic, class_minus, class_plus, error\n");

        for row in &self.rows {
            out.push_str(&format!("{}", row.id));
            let push_block = |out: &mut String, c: Option<&Coords>| match c {
                Some(c) => {
                    for v in c.as_slice() {
                        out.push_str(&format!(", {v:.16e}"));
                    }
                }
                None => {
                    for _ in 0..n * d {
                        out.push_str(", nan");
                    }
                }
            };
            push_block(&mut out, Some(row.x.coords()));
            push_block(&mut out, Some(row.v.coords()));
            let am = row.map.as_ref().and_then(|m| m.a_minus()).map(|v| v.coords());
            let ap = row.map.as_ref().and_then(|m| m.a_plus()).map(|v| v.coords());
            push_block(&mut out, am);
            push_block(&mut out, ap);
            let h = row.map.as_ref().map(|m| m.h).unwrap_or(f64::NAN);
            out.push_str(&format!(", {h:.16e}"));
            for c in [am, ap] {
                let norm = c.map(|c| sys.mass_norm(c)).unwrap_or(f64::NAN);
                out.push_str(&format!(", {norm:.16e}"));
            }
            for c in [am, ap] {
                match c {
                    Some(c) => {
                        for g in sys.com(c) {
                            out.push_str(&format!(", {g:.16e}"));
                        }
                    }
                    None => {
                        for _ in 0..d {
                            out.push_str(", nan");
                        }
                    }
                }
            }
            let bi = row.map.as_ref().map(|m| m.bi_hyperbolic).unwrap_or(false);
            let cm = row
                .map
                .as_ref()
                .map(|m| m.minus.class.label.to_string())
                .unwrap_or_else(|| "-".into());
            let cp = row
                .map
                .as_ref()
                .map(|m| m.plus.class.label.to_string())
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                ", {bi}, {cm}, {cp}, {}\n",
                row.error.as_deref().unwrap_or("")
            ));
        }
        out
    }

    /// Human-readable description of the CSV columns.
    pub fn schema(sys: &MassSystem) -> String {
        format!(
            "perihelia scan dataset columns (N = {n}, d = {d}; vectors flattened \
             body-major, coordinate-minor)\n\
             id                 sample index\n\
             x_i_k              initial position, body i coordinate k\n\
             v_i_k              initial velocity (perihelion state: <x,v> = 0)\n\
             a_minus_i_k        past asymptotic velocity (nan when not bi-hyperbolic)\n\
             a_plus_i_k         future asymptotic velocity\n\
             h                  energy constant of the sample\n\
             norm_a_minus/plus  mass-metric norms (each = sqrt(2h) for clean rows)\n\
             g_minus_k/g_plus_k centers of mass of the limit shapes (opposite vectors)\n\
             bi_hyperbolic      true when both sides classified Hyperbolic\n\
             class_minus/plus   expansion labels\n\
             error              per-sample failure, empty on success\n",
            n = sys.n_bodies(),
            d = sys.dim()
        )
    }
}

/// Runs the limit shape map over a set of perihelion samples, in
/// parallel over `workers` threads. Per-sample failures are recorded in
/// the rows and do not abort the scan.
pub fn perihelia_scan(
    sys: &MassSystem,
    samples: Vec<(Configuration, Velocity)>,
    t_max: f64,
    workers: usize,
) -> ScanDataset {
    let workers = workers.max(1);
    let jobs: Vec<(usize, (Configuration, Velocity))> = samples.into_iter().enumerate().collect();
    let mut rows: Vec<Option<ScanRow>> = vec![None; jobs.len()];
    let chunk = jobs.len().div_ceil(workers).max(1);

    std::thread::scope(|scope| {
        let mut row_slices: Vec<&mut [Option<ScanRow>]> = rows.chunks_mut(chunk).collect();
        let mut job_slices: Vec<&[(usize, (Configuration, Velocity))]> = jobs.chunks(chunk).collect();
        let mut handles = Vec::new();
        while let (Some(rs), Some(js)) = (row_slices.pop(), job_slices.pop()) {
            handles.push(scope.spawn(move || {
                for (slot, (id, (x, v))) in rs.iter_mut().zip(js) {
                    let (map, error) = match limit_shape_map(sys, x, v, t_max) {
                        Ok(m) => (Some(m), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    *slot = Some(ScanRow { id: *id, x: x.clone(), v: v.clone(), map, error });
                }
            }));
        }
        for h in handles {
            h.join().expect("scan worker panicked");
        }
    });

    ScanDataset { rows: rows.into_iter().map(|r| r.expect("all rows filled")).collect() }
}
