//! Small quadrature helpers shared by the action and metric code.

/// 2-point Gauss-Legendre nodes on [0, 1] (weights are 1/2 each).
pub const GAUSS2_NODES: [f64; 2] = [
    0.211324865405187118, // 1/2 - 1/(2 sqrt 3)
    0.788675134594812882,
];

/// 3-point Gauss-Legendre nodes and weights on [0, 1].
pub const GAUSS3_NODES: [f64; 3] = [
    0.112701665379258311, // 1/2 - sqrt(15)/10
    0.5,
    0.887298334620741689,
];
pub const GAUSS3_WEIGHTS: [f64; 3] = [
    0.277777777777777778, // 5/18
    0.444444444444444444, // 8/18
    0.277777777777777778,
];

/// 5-point Gauss-Legendre nodes and weights on [0, 1].
pub const GAUSS5_NODES: [f64; 5] = [
    0.046910077030668004,
    0.230765344947158454,
    0.5,
    0.769234655052841546,
    0.953089922969331996,
];
pub const GAUSS5_WEIGHTS: [f64; 5] = [
    0.118463442528094544,
    0.239314335249683234,
    0.284444444444444444,
    0.239314335249683234,
    0.118463442528094544,
];

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute
/// tolerance `tol`. Panics-free; returns NaN only if `f` does.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    simpson_step(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}
