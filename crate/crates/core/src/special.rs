//! Integer-order Bessel functions of the first kind, their zeros, and
//! many-argument Bessel functions `J_ν({β_m})` defined through
//! `exp(i Σ β_m sin(m u)) = Σ_ν J_ν({β_m}) e^{iνu}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Largest argument magnitude accepted by [`bessel_j`].
pub const BESSEL_ARG_LIMIT: f64 = 1e6;

/// Amplitude below which Bessel coefficients are treated as zero when
/// truncating expansions.
pub const BESSEL_NEGLIGIBLE: f64 = 1e-16;

const SERIES_THRESHOLD: f64 = 1e-6;
const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

/// `J_n(x)` for integer `n`.
pub fn bessel_j(n: i64, x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() >= BESSEL_ARG_LIMIT {
        return Err(Error::OutOfRange {
            x,
            limit: BESSEL_ARG_LIMIT,
        });
    }
    let order = n.unsigned_abs() as usize;
    // J_{-n} = (-1)^n J_n and J_n(-x) = (-1)^n J_n(x)
    let mut sign = 1.0;
    if n < 0 && order % 2 == 1 {
        sign = -sign;
    }
    if x < 0.0 && order % 2 == 1 {
        sign = -sign;
    }
    let ax = x.abs();
    if ax == 0.0 {
        return Ok(if order == 0 { 1.0 } else { 0.0 });
    }
    if ax < SERIES_THRESHOLD {
        return Ok(sign * series(order, ax));
    }
    Ok(sign * miller(order, ax)[order])
}

/// `J_0(x), …, J_{n_max}(x)` in one backward sweep.
pub fn bessel_j_sequence(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if !x.is_finite() || x.abs() >= BESSEL_ARG_LIMIT {
        return Err(Error::OutOfRange {
            x,
            limit: BESSEL_ARG_LIMIT,
        });
    }
    let ax = x.abs();
    let mut out = if ax == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        v
    } else if ax < SERIES_THRESHOLD {
        (0..=n_max).map(|k| series(k, ax)).collect()
    } else {
        let mut v = miller(n_max, ax);
        v.truncate(n_max + 1);
        v
    };
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    Ok(out)
}

/// Smallest order `m ≥ |x|` beyond which `|J_k(x)| < 1e-16` for all `k ≥ m`.
pub fn bessel_cutoff(x: f64) -> Result<usize> {
    let ax = x.abs();
    let n_max = (ax + 12.0 * ax.cbrt() + 30.0).ceil() as usize;
    let seq = bessel_j_sequence(n_max, ax)?;
    let start = ax.floor() as usize;
    Ok((start..=n_max)
        .find(|&m| seq[m].abs() < BESSEL_NEGLIGIBLE)
        .unwrap_or(n_max))
}

/// Power series, used only for tiny arguments where a handful of terms is
/// exact to rounding.
fn series(order: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for k in 1..=order {
        lead *= half / k as f64;
        if lead == 0.0 {
            return 0.0;
        }
    }
    let q = -half * half;
    let mut term = lead;
    let mut sum = lead;
    for k in 1..20 {
        term *= q / (k as f64 * (order + k) as f64);
        sum += term;
        if term.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    sum
}

/// Miller backward recurrence normalised with `J_0 + 2 Σ J_{2k} = 1`.
/// Returns at least `n_max + 1` values for `x > 0`.
fn miller(n_max: usize, x: f64) -> Vec<f64> {
    let top = n_max.max(x.ceil() as usize);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut out = vec![0.0; n_max + 1];
    let two_over_x = 2.0 / x;
    let mut above = 0.0;
    let mut current = 1e-30;
    let mut norm = 0.0;
    // current holds the unnormalised J_k for k = start, start-1, ..., 0
    for k in (0..=start).rev() {
        if k <= n_max {
            out[k] = current;
        }
        if k % 2 == 0 {
            norm += if k == 0 { current } else { 2.0 * current };
        }
        if k == 0 {
            break;
        }
        let below = k as f64 * two_over_x * current - above;
        above = current;
        current = below;
        if current.abs() > RESCALE_ABOVE {
            current *= RESCALE_BY;
            above *= RESCALE_BY;
            norm *= RESCALE_BY;
            for v in out.iter_mut().skip(k.saturating_sub(1)) {
                *v *= RESCALE_BY;
            }
        }
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// k-th positive zero of `J_n` (k ≥ 1), located by scanning for a sign
/// change and refining by bisection.
pub fn bessel_zero(n: u32, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::BracketFailure { n, k });
    }
    let order = n as i64;
    let step = 0.1;
    // j_{n,1} > n for every n ≥ 0
    let mut lo = n as f64 + 1e-3;
    let mut f_lo = bessel_j(order, lo)?;
    let mut found = 0;
    let limit = n as f64 + (k as f64 + 2.0) * PI + 20.0;
    while lo < limit {
        let hi = lo + step;
        let f_hi = bessel_j(order, hi)?;
        if f_lo == 0.0 || f_lo.signum() != f_hi.signum() {
            found += 1;
            if found == k {
                return bisect(order, lo, hi, f_lo);
            }
        }
        lo = hi;
        f_lo = f_hi;
    }
    Err(Error::BracketFailure { n, k })
}

fn bisect(order: i64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> Result<f64> {
    if f_lo == 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = bessel_j(order, mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Truncated argument list `{β_1, …, β_M}` of a many-argument Bessel function.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiBesselArgs {
    betas: Vec<f64>,
}

impl MultiBesselArgs {
    pub const SUM_LIMIT: f64 = 1e3;

    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidProtocol(
                "many-argument Bessel function needs at least one argument".into(),
            ));
        }
        if betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidProtocol("non-finite Bessel argument".into()));
        }
        Ok(MultiBesselArgs { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Argument list with every β negated.
    pub fn negated(&self) -> Self {
        MultiBesselArgs {
            betas: self.betas.iter().map(|b| -b).collect(),
        }
    }

    /// Rough half-bandwidth of `exp(i Σ β_m sin(m u))` in Fourier index.
    fn bandwidth(&self) -> f64 {
        self.betas
            .iter()
            .enumerate()
            .map(|(i, b)| (i + 1) as f64 * b.abs())
            .sum()
    }

    fn check_range(&self) -> Result<()> {
        let total: f64 = self.betas.iter().map(|b| b.abs()).sum();
        if total >= Self::SUM_LIMIT {
            return Err(Error::OutOfRange {
                x: total,
                limit: Self::SUM_LIMIT,
            });
        }
        Ok(())
    }

    fn phase(&self, u: f64) -> f64 {
        self.betas
            .iter()
            .enumerate()
            .map(|(i, b)| b * ((i + 1) as f64 * u).sin())
            .sum()
    }
}

const MULTI_TOL: f64 = 1e-11;
const MULTI_MAX_NODES: usize = 1 << 22;

/// `J_ν({β_m}) = (1/2π) ∫₀^{2π} cos(Σ β_m sin(m u) − ν u) du`, evaluated by
/// the trapezoidal rule with node doubling.
pub fn bessel_j_multivar(nu: i64, args: &MultiBesselArgs) -> Result<f64> {
    args.check_range()?;
    let mut nodes = initial_nodes(args.bandwidth() + nu.unsigned_abs() as f64);
    let mut prev = trapezoid(nu, args, nodes);
    loop {
        nodes *= 2;
        if nodes > MULTI_MAX_NODES {
            return Err(Error::NonConvergent {
                what: "many-argument Bessel quadrature",
                nodes: MULTI_MAX_NODES,
            });
        }
        let next = trapezoid(nu, args, nodes);
        if (next - prev).abs() < MULTI_TOL {
            return Ok(next);
        }
        prev = next;
    }
}

fn initial_nodes(bandwidth: f64) -> usize {
    ((2.0 * bandwidth + 32.0).ceil() as usize).next_power_of_two().max(32)
}

fn trapezoid(nu: i64, args: &MultiBesselArgs, nodes: usize) -> f64 {
    let h = 2.0 * PI / nodes as f64;
    let nu = nu as f64;
    let sum: f64 = (0..nodes)
        .map(|j| {
            let u = j as f64 * h;
            (args.phase(u) - nu * u).cos()
        })
        .sum();
    sum / nodes as f64
}

/// All `J_ν({β_m})` for `ν = −ν_max..=ν_max` (index `ν + ν_max`) from one
/// FFT of the generating function, refined by doubling until the largest
/// change is below 1e-12.
pub fn multibessel_coefficients(args: &MultiBesselArgs, nu_max: usize) -> Result<Vec<f64>> {
    args.check_range()?;
    let mut planner = FftPlanner::<f64>::new();
    let mut nodes = initial_nodes(args.bandwidth() + nu_max as f64);
    let mut prev = fft_coefficients(&mut planner, args, nodes, nu_max);
    loop {
        nodes *= 2;
        if nodes > MULTI_MAX_NODES {
            return Err(Error::NonConvergent {
                what: "many-argument Bessel coefficients",
                nodes: MULTI_MAX_NODES,
            });
        }
        let next = fft_coefficients(&mut planner, args, nodes, nu_max);
        let change = next
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < 1e-12 {
            return Ok(next);
        }
        prev = next;
    }
}

fn fft_coefficients(
    planner: &mut FftPlanner<f64>,
    args: &MultiBesselArgs,
    nodes: usize,
    nu_max: usize,
) -> Vec<f64> {
    let h = 2.0 * PI / nodes as f64;
    let mut buf: Vec<Complex64> = (0..nodes)
        .map(|j| Complex64::from_polar(1.0, args.phase(j as f64 * h)))
        .collect();
    planner.plan_fft_forward(nodes).process(&mut buf);
    let scale = 1.0 / nodes as f64;
    (0..=2 * nu_max)
        .map(|i| {
            let nu = i as i64 - nu_max as i64;
            buf[nu.rem_euclid(nodes as i64) as usize].re * scale
        })
        .collect()
}
