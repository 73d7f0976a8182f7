//! Golden-section search on a bracket.

const INV_PHI: f64 = 0.618_033_988_749_894_9; // (sqrt 5 - 1) / 2

/// Minimizes `f` on `[a, b]` by golden-section search, stopping when the
/// interval is shorter than `xtol` or after `max_evals` evaluations.
/// Returns `(x_min, f_min, evals)`.
pub fn golden_section_minimize(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    xtol: f64,
    max_evals: usize,
) -> (f64, f64, usize) {
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2;
    while (b - a) > xtol && evals < max_evals {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        evals += 1;
    }
    if f1 < f2 {
        (x1, f1, evals)
    } else {
        (x2, f2, evals)
    }
}
