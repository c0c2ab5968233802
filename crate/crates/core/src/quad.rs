//! Adaptive Simpson quadrature with Richardson acceptance, used where no
//! closed form exists (tabulated drives, Fourier amplitudes of sampled data).

use num_complex::Complex64;

const MAX_DEPTH: u32 = 48;

/// ∫_a^b f, accepting a panel once the Richardson estimate
/// `|S₂ − S₁|/15` falls below the panel's share of `tol`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    if a == b {
        return Complex64::new(0.0, 0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    refine(&f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Real-valued convenience wrapper.
pub fn integrate_real<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    integrate(|x| Complex64::new(f(x), 0.0), a, b, tol).re
}

fn simpson(a: f64, b: f64, fa: Complex64, fm: Complex64, fb: Complex64) -> Complex64 {
    (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // force a few levels so narrow features are not skipped
    if depth >= MAX_DEPTH || (depth >= 3 && delta.norm() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
}
