//! One-dimensional quadrature.

/// Composite trapezoidal rule on `points >= 2` equally spaced nodes.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, points: usize) -> f64 {
    assert!(points >= 2, "trapezoid needs at least two nodes");
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / (points - 1) as f64;
    let inner: f64 = (1..points - 1).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

/// Adaptive trapezoid with one Richardson step per panel.
///
/// The interval is first cut into `panels` pieces. A panel is accepted when
/// its one-trapezoid and two-trapezoid estimates differ by at most
/// `3 * tol * width / (b - a)`; the accepted value is the Richardson-corrected
/// two-trapezoid estimate. Otherwise the panel is halved, down to `max_depth`.
pub fn adaptive_trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, panels: usize, max_depth: u32) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let density = tol / (b - a);
    let mut total = 0.0;
    let mut left = a;
    let mut f_left = f(a);
    for i in 0..panels {
        let right = if i + 1 == panels { b } else { a + (i + 1) as f64 * h };
        let f_right = f(right);
        total += refine(&f, left, right, f_left, f_right, density, max_depth);
        left = right;
        f_left = f_right;
    }
    total
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fb: f64, density: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let w = b - a;
    let coarse = 0.5 * w * (fa + fb);
    let fine = 0.25 * w * (fa + 2.0 * fm + fb);
    let diff = fine - coarse;
    if depth == 0 || diff.abs() <= 3.0 * density * w {
        return fine + diff / 3.0;
    }
    refine(f, a, m, fa, fm, density, depth - 1) + refine(f, m, b, fm, fb, density, depth - 1)
}
