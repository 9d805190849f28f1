#![allow(dead_code)]

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 40)
}

/// Time for `E' = A E^{3/2} + B E^2` to go from `e0` to `et` by quadrature.
/// Finite targets integrate in `log E`; an infinite target uses `y = 1 / sqrt(E)`.
pub fn odi_time_by_quadrature(a: f64, b: f64, e0: f64, et: f64) -> f64 {
    if et.is_infinite() {
        let f = |y: f64| 2.0 * y / (a * y + b);
        let hi = 1.0 / e0.sqrt();
        return adaptive_simpson(&f, 0.0, hi, 1e-14 * (1.0 + hi * hi / b.max(a * hi)));
    }
    let f = |s: f64| {
        let e = s.exp();
        1.0 / (a * e.sqrt() + b * e)
    };
    let rough = adaptive_simpson(&f, e0.ln(), et.ln(), 1e-6);
    adaptive_simpson(&f, e0.ln(), et.ln(), 1e-13 * rough.abs().max(1e-300))
}
