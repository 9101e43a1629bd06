//! Derivative-free scalar minimisation.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Result of a golden-section run: the best point seen and its value.
#[derive(Debug, Clone, Copy)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Golden-section search for a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol` or after `max_iter`
/// shrink steps. The returned value is the smallest `f` evaluated, endpoints
/// included, so it is always attained by some `x` in the bracket.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Minimum {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut best = Minimum {
        x: a,
        value: f(a),
        evaluations: 1,
        converged: false,
    };
    let consider = |x: f64, v: f64, best: &mut Minimum| {
        best.evaluations += 1;
        if v < best.value {
            best.x = x;
            best.value = v;
        }
    };
    let fb = f(b);
    consider(b, fb, &mut best);

    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    consider(c, fc, &mut best);
    let mut fd = f(d);
    consider(d, fd, &mut best);

    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            best.converged = true;
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            consider(d, fd, &mut best);
        }
    }
    if (b - a).abs() <= tol {
        best.converged = true;
    }
    best
}
