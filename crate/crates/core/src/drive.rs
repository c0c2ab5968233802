//! Field protocols `(f_t, g_t)` and the phase integrals that parameterise
//! the propagator:
//!
//! * `η_t = ∫₀ᵗ f_τ dτ`
//! * `χ_t = ∫₀ᵗ g_τ e^{−iη_τ} dτ = |χ_t| e^{−iφ_t}`
//! * `u_t = 2 Re χ_t`, `v_t = −2 Im χ_t`
//!
//! Reduced units: ħ = 1, lattice constant 1.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::quad;
use crate::special::{bessel_cutoff, bessel_j, bessel_j_sequence, multibessel_coefficients, MultiBesselArgs};

/// Relative tolerance on `f₀/ω` for resonance detection.
pub const RESONANCE_TOLERANCE: f64 = 1e-9;

const QUAD_TOL: f64 = 1e-13;
const SMALL_PHASE: f64 = 1e-6;

/// Piecewise-linear table `value(t)`, optionally repeated with period
/// `times.last() − times[0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    times: Vec<f64>,
    values: Vec<f64>,
    /// `∫_{t_0}^{t_i} value`
    cumulative: Vec<f64>,
    periodic: bool,
}

impl Table {
    pub fn new(times: Vec<f64>, values: Vec<f64>, periodic: bool) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::InvalidProtocol(
                "tabulated field needs at least 2 (t, value) samples".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProtocol("time grid must be strictly increasing".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidProtocol("time grid must start at t = 0".into()));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProtocol("non-finite table entry".into()));
        }
        let mut cumulative = Vec::with_capacity(times.len());
        cumulative.push(0.0);
        for i in 1..times.len() {
            let h = times[i] - times[i - 1];
            cumulative.push(cumulative[i - 1] + 0.5 * h * (values[i] + values[i - 1]));
        }
        Ok(Table {
            times,
            values,
            cumulative,
            periodic,
        })
    }

    /// Parses whitespace- or comma-separated `(t, value)` rows; `#` starts a
    /// comment.
    pub fn parse(text: &str, periodic: bool) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::InvalidProtocol(format!(
                    "line {}: expected 2 columns, found {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidProtocol(format!("line {}: cannot parse {s:?}", lineno + 1))
                })
            };
            times.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Table::new(times, values, periodic)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Maps `t` into the tabulated range: `(cycles, local time)`.
    fn reduce(&self, t: f64) -> (i64, f64) {
        if self.periodic {
            let period = self.horizon();
            let k = (t / period).floor();
            let local = (t - k * period).clamp(0.0, period);
            (k as i64, local)
        } else {
            (0, t)
        }
    }

    fn segment(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let (_, t) = self.reduce(t);
        let last = self.times.len() - 1;
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= self.times[last] {
            return self.values[last];
        }
        let i = self.segment(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// `∫₀ᵗ value`, exact for the linear interpolant.
    pub fn integral(&self, t: f64) -> f64 {
        let (k, t) = self.reduce(t);
        let last = self.times.len() - 1;
        let base = k as f64 * self.cumulative[last];
        let local = if t <= 0.0 {
            self.values[0] * t
        } else if t >= self.times[last] {
            self.cumulative[last] + self.values[last] * (t - self.times[last])
        } else {
            let i = self.segment(t);
            let (t0, t1) = (self.times[i], self.times[i + 1]);
            let d = t - t0;
            let slope = (self.values[i + 1] - self.values[i]) / (t1 - t0);
            self.cumulative[i] + self.values[i] * d + 0.5 * slope * d * d
        };
        base + local
    }
}

/// Sampled `f_t` and `g_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedDrive {
    f: Table,
    g: Table,
    /// Sorted union of both grids over one period / the horizon.
    breakpoints: Vec<f64>,
    /// `χ` at each breakpoint.
    chi_nodes: Vec<Complex64>,
}

impl TabulatedDrive {
    pub fn new(f: Table, g: Table) -> Result<Self> {
        if f.is_periodic() != g.is_periodic() {
            return Err(Error::InvalidProtocol(
                "f and g tables must both be periodic or both aperiodic".into(),
            ));
        }
        if f.is_periodic() && (f.horizon() - g.horizon()).abs() > 1e-12 * f.horizon() {
            return Err(Error::InvalidProtocol("f and g tables have different periods".into()));
        }
        let mut breakpoints: Vec<f64> = f.times().iter().chain(g.times()).copied().collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
        let mut drive = TabulatedDrive {
            f,
            g,
            breakpoints,
            chi_nodes: Vec::new(),
        };
        let mut nodes = vec![Complex64::new(0.0, 0.0)];
        for w in drive.breakpoints.windows(2) {
            let step = drive.chi_quadrature(w[0], w[1]);
            nodes.push(nodes.last().unwrap() + step);
        }
        drive.chi_nodes = nodes;
        Ok(drive)
    }

    pub fn f_table(&self) -> &Table {
        &self.f
    }

    pub fn g_table(&self) -> &Table {
        &self.g
    }

    pub fn period(&self) -> Option<f64> {
        self.f.is_periodic().then(|| self.f.horizon())
    }

    fn integrand(&self, s: f64, with_g: bool) -> impl Fn(f64) -> Complex64 + '_ {
        move |tau| {
            let amp = if with_g { self.g.value(tau) } else { 1.0 };
            Complex64::from_polar(amp, -s * self.f.integral(tau))
        }
    }

    fn chi_quadrature(&self, a: f64, b: f64) -> Complex64 {
        quad::integrate(self.integrand(1.0, true), a, b, QUAD_TOL)
    }

    /// `∫_a^b` of the integrand, split at table breakpoints.
    fn split_quadrature(&self, s: f64, with_g: bool, a: f64, b: f64) -> Complex64 {
        if a == b {
            return Complex64::new(0.0, 0.0);
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts = vec![lo];
        cuts.extend(self.breakpoints.iter().copied().filter(|&x| x > lo && x < hi));
        cuts.push(hi);
        let f = self.integrand(s, with_g);
        let total: Complex64 = cuts
            .windows(2)
            .map(|w| quad::integrate(&f, w[0], w[1], QUAD_TOL))
            .sum();
        total * sign
    }

    fn chi(&self, t: f64) -> Complex64 {
        match self.period() {
            Some(period) => {
                let k = (t / period).floor() as i64;
                let local = (t - k as f64 * period).clamp(0.0, period);
                let chi_period = *self.chi_nodes.last().unwrap();
                let q = Complex64::from_polar(1.0, -self.f.integral(period));
                let cycles = geometric_sum(q, k) * chi_period;
                cycles + q.powi(k as i32) * self.chi_within(local)
            }
            None => {
                let horizon = *self.breakpoints.last().unwrap();
                if t >= 0.0 && t <= horizon {
                    self.chi_within(t)
                } else if t > horizon {
                    self.chi_nodes.last().unwrap() + self.split_quadrature(1.0, true, horizon, t)
                } else {
                    self.split_quadrature(1.0, true, 0.0, t)
                }
            }
        }
    }

    fn chi_within(&self, t: f64) -> Complex64 {
        let i = match self.breakpoints.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return self.chi_nodes[i],
            Err(i) => i.saturating_sub(1),
        };
        self.chi_nodes[i] + self.chi_quadrature(self.breakpoints[i], t)
    }
}

/// `Σ_{j=0}^{k−1} q^j` for `k ≥ 0`, `−Σ_{j=k}^{−1} q^j` for `k < 0`.
fn geometric_sum(q: Complex64, k: i64) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    if k >= 0 {
        let mut p = Complex64::new(1.0, 0.0);
        for _ in 0..k {
            total += p;
            p *= q;
        }
    } else {
        let qi = q.inv();
        let mut p = qi;
        for _ in 0..(-k) {
            total -= p;
            p *= qi;
        }
    }
    total
}

/// Time-dependent field pair in reduced units.
#[derive(Clone, Debug, PartialEq)]
pub enum DriveProtocol {
    /// `f_t = f₀`, `g_t = g₀`.
    Dc { f0: f64, g0: f64 },
    /// `f_t = f₀ − f₁ cos(ωt)`, `g_t = g₀`.
    Harmonic { f0: f64, f1: f64, omega: f64, g0: f64 },
    /// `f_t = f₀ + Σ_m f_m cos(mωt)`, `g_t = g₀`.
    Fourier {
        f0: f64,
        modes: Vec<f64>,
        omega: f64,
        g0: f64,
    },
    Tabulated(TabulatedDrive),
}

/// Resonance data `n = f₀/ω`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resonance {
    pub ratio: f64,
    /// Integer order when `ratio` is an integer within [`RESONANCE_TOLERANCE`].
    pub order: Option<i64>,
}

/// Secular drift rate of `χ_t` under resonant driving.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftRate {
    pub order: Option<i64>,
    pub gamma: f64,
}

impl DriftRate {
    pub fn is_resonant(&self) -> bool {
        self.order.is_some()
    }
}

/// `(η_t, χ_t, u_t, v_t)` at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseIntegrals {
    pub t: f64,
    pub eta: f64,
    pub chi: Complex64,
    pub u: f64,
    pub v: f64,
}

impl PhaseIntegrals {
    /// `φ_t` in `χ_t = |χ_t| e^{−iφ_t}`.
    pub fn phi(&self) -> f64 {
        -self.chi.arg()
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidProtocol("non-finite parameter".into()))
    }
}

/// `∫₀ᵗ e^{−iwτ} dτ`, written without cancellation for small `wt`.
pub(crate) fn oscillatory_integral(w: f64, t: f64) -> Complex64 {
    let x = w * t;
    if x.abs() < SMALL_PHASE {
        t * Complex64::new(1.0 - x * x / 6.0, -0.5 * x)
    } else {
        let half = (0.5 * x).sin();
        Complex64::new(x.sin() / w, -2.0 * half * half / w)
    }
}

/// Fourier expansion `e^{−isη̃_τ} = Σ_ν c_ν e^{iνωτ}` of the oscillating
/// part of the phase, stored as `(s·f₀ − νω, c_ν)`.
struct PhaseExpansion {
    terms: Vec<(f64, f64)>,
}

impl PhaseExpansion {
    fn integral(&self, t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|&(w, c)| c * oscillatory_integral(w, t))
            .sum()
    }
}

impl DriveProtocol {
    pub fn dc(f0: f64, g0: f64) -> Result<Self> {
        check_finite(&[f0, g0])?;
        Ok(DriveProtocol::Dc { f0, g0 })
    }

    pub fn harmonic(f0: f64, f1: f64, omega: f64, g0: f64) -> Result<Self> {
        check_finite(&[f0, f1, omega, g0])?;
        if !(omega > 0.0) {
            return Err(Error::InvalidProtocol("omega must be positive".into()));
        }
        if (f1 / omega).abs() > 1e4 {
            return Err(Error::InvalidProtocol("|f1/omega| must not exceed 1e4".into()));
        }
        Ok(DriveProtocol::Harmonic { f0, f1, omega, g0 })
    }

    pub fn fourier(f0: f64, modes: Vec<f64>, omega: f64, g0: f64) -> Result<Self> {
        check_finite(&[f0, omega, g0])?;
        check_finite(&modes)?;
        if !(omega > 0.0) {
            return Err(Error::InvalidProtocol("omega must be positive".into()));
        }
        if modes.is_empty() {
            return Err(Error::InvalidProtocol("fourier drive needs at least one mode".into()));
        }
        let total: f64 = modes
            .iter()
            .enumerate()
            .map(|(i, f)| (f / ((i + 1) as f64 * omega)).abs())
            .sum();
        if total >= 100.0 {
            return Err(Error::InvalidProtocol("sum of |f_m/(m omega)| must stay below 100".into()));
        }
        Ok(DriveProtocol::Fourier {
            f0,
            modes,
            omega,
            g0,
        })
    }

    pub fn tabulated(drive: TabulatedDrive) -> Self {
        DriveProtocol::Tabulated(drive)
    }

    /// `f_t`
    pub fn f(&self, t: f64) -> f64 {
        match self {
            DriveProtocol::Dc { f0, .. } => *f0,
            DriveProtocol::Harmonic { f0, f1, omega, .. } => f0 - f1 * (omega * t).cos(),
            DriveProtocol::Fourier {
                f0, modes, omega, ..
            } => {
                f0 + modes
                    .iter()
                    .enumerate()
                    .map(|(i, fm)| fm * ((i + 1) as f64 * omega * t).cos())
                    .sum::<f64>()
            }
            DriveProtocol::Tabulated(d) => d.f.value(t),
        }
    }

    /// `g_t`
    pub fn g(&self, t: f64) -> f64 {
        match self {
            DriveProtocol::Dc { g0, .. }
            | DriveProtocol::Harmonic { g0, .. }
            | DriveProtocol::Fourier { g0, .. } => *g0,
            DriveProtocol::Tabulated(d) => d.g.value(t),
        }
    }

    /// Driving period `T`, if any.
    pub fn period(&self) -> Option<f64> {
        match self {
            DriveProtocol::Dc { .. } => None,
            DriveProtocol::Harmonic { omega, .. } | DriveProtocol::Fourier { omega, .. } => {
                Some(2.0 * PI / omega)
            }
            DriveProtocol::Tabulated(d) => d.period(),
        }
    }

    /// Mean field `f₀ = ω_B` (period average for tabulated drives).
    pub fn mean_field(&self) -> Option<f64> {
        match self {
            DriveProtocol::Dc { f0, .. }
            | DriveProtocol::Harmonic { f0, .. }
            | DriveProtocol::Fourier { f0, .. } => Some(*f0),
            DriveProtocol::Tabulated(d) => d.period().map(|p| d.f.integral(p) / p),
        }
    }

    /// Bloch period `2π/|f₀|`.
    pub fn bloch_period(&self) -> Option<f64> {
        self.mean_field()
            .filter(|f| *f != 0.0)
            .map(|f| 2.0 * PI / f.abs())
    }

    /// `f₀/ω` and its integer order when resonant.
    pub fn resonance(&self) -> Option<Resonance> {
        let period = self.period()?;
        let omega = 2.0 * PI / period;
        let ratio = self.mean_field()? / omega;
        let n = ratio.round();
        let order = ((ratio - n).abs() <= RESONANCE_TOLERANCE * n.abs().max(1.0)).then_some(n as i64);
        Some(Resonance { ratio, order })
    }

    /// `η_t = ∫₀ᵗ f_τ dτ`
    pub fn eta(&self, t: f64) -> f64 {
        match self {
            DriveProtocol::Dc { f0, .. } => f0 * t,
            DriveProtocol::Harmonic { f0, f1, omega, .. } => f0 * t - f1 / omega * (omega * t).sin(),
            DriveProtocol::Fourier {
                f0, modes, omega, ..
            } => {
                f0 * t
                    + modes
                        .iter()
                        .enumerate()
                        .map(|(i, fm)| {
                            let m = (i + 1) as f64;
                            fm / (m * omega) * (m * omega * t).sin()
                        })
                        .sum::<f64>()
            }
            DriveProtocol::Tabulated(d) => d.f.integral(t),
        }
    }

    fn expansion(&self, s: f64) -> Result<Option<PhaseExpansion>> {
        let terms = match self {
            DriveProtocol::Dc { f0, .. } => vec![(s * f0, 1.0)],
            DriveProtocol::Harmonic { f0, f1, omega, .. } => {
                let x = s * f1 / omega;
                let cut = bessel_cutoff(x)? + 2;
                let seq = bessel_j_sequence(cut, x)?;
                let mut terms = Vec::with_capacity(2 * cut + 1);
                for (k, &j) in seq.iter().enumerate() {
                    let nu = k as f64;
                    terms.push((s * f0 - nu * omega, j));
                    if k > 0 {
                        let jm = if k % 2 == 0 { j } else { -j };
                        terms.push((s * f0 + nu * omega, jm));
                    }
                }
                terms
            }
            DriveProtocol::Fourier {
                f0, modes, omega, ..
            } => {
                // e^{-isΣβ_m sin(mωτ)} = Σ_ν J_ν({−sβ_m}) e^{iνωτ}
                let betas: Vec<f64> = modes
                    .iter()
                    .enumerate()
                    .map(|(i, fm)| -s * fm / ((i + 1) as f64 * omega))
                    .collect();
                let args = MultiBesselArgs::new(betas)?;
                let reach: f64 = args
                    .betas()
                    .iter()
                    .enumerate()
                    .map(|(i, b)| (i + 1) as f64 * b.abs())
                    .sum();
                let nu_max = (reach + 12.0 * reach.cbrt() + 30.0).ceil() as usize;
                let coeffs = multibessel_coefficients(&args, nu_max)?;
                coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.abs() >= 1e-18)
                    .map(|(i, &c)| {
                        let nu = i as f64 - nu_max as f64;
                        (s * f0 - nu * omega, c)
                    })
                    .collect()
            }
            DriveProtocol::Tabulated(_) => return Ok(None),
        };
        Ok(Some(PhaseExpansion { terms }))
    }

    /// `∫₀ᵗ e^{−isη_τ} dτ` (no `g` weight). `s = 1` gives `χ_t/g₀` for
    /// constant coupling; integer `s = m` gives the phase integrals of the
    /// `K̂^m` couplings of a general single-band dispersion.
    pub fn phase_integral(&self, s: f64, t: f64) -> Result<Complex64> {
        match self.expansion(s)? {
            Some(exp) => Ok(exp.integral(t)),
            None => match self {
                DriveProtocol::Tabulated(d) => Ok(d.split_quadrature(s, false, 0.0, t)),
                _ => unreachable!("closed-form variants always expand"),
            },
        }
    }

    /// `χ_t = ∫₀ᵗ g_τ e^{−iη_τ} dτ`
    pub fn chi(&self, t: f64) -> Complex64 {
        match self {
            DriveProtocol::Dc { f0, g0 } => *g0 * oscillatory_integral(*f0, t),
            DriveProtocol::Tabulated(d) => d.chi(t),
            _ => {
                let g0 = self.g(0.0);
                g0 * self
                    .phase_integral(1.0, t)
                    .expect("drive parameters validated at construction")
            }
        }
    }

    /// `(u_t, v_t)` with `2χ_t = u_t − i v_t`.
    pub fn uv(&self, t: f64) -> (f64, f64) {
        match self {
            DriveProtocol::Dc { f0, g0 } => {
                let x = f0 * t;
                if x.abs() < SMALL_PHASE {
                    (2.0 * g0 * t * (1.0 - x * x / 6.0), g0 * t * x)
                } else {
                    let half = (0.5 * x).sin();
                    (2.0 * g0 / f0 * x.sin(), 4.0 * g0 / f0 * half * half)
                }
            }
            _ => {
                let chi = self.chi(t);
                (2.0 * chi.re, -2.0 * chi.im)
            }
        }
    }

    /// [`DriveProtocol::phase_integrals`] on a time grid. The phase
    /// expansion is built once for the whole grid.
    pub fn phase_integrals_on(&self, times: &[f64], exec: Exec) -> Vec<PhaseIntegrals> {
        let expansion = match self {
            DriveProtocol::Harmonic { .. } | DriveProtocol::Fourier { .. } => self
                .expansion(1.0)
                .expect("drive parameters validated at construction"),
            _ => None,
        };
        match expansion {
            Some(exp) => {
                let g0 = self.g(0.0);
                exec.map(times, |&t| {
                    let chi = g0 * exp.integral(t);
                    PhaseIntegrals {
                        t,
                        eta: self.eta(t),
                        chi,
                        u: 2.0 * chi.re,
                        v: -2.0 * chi.im,
                    }
                })
            }
            None => exec.map(times, |&t| self.phase_integrals(t)),
        }
    }

    pub fn phase_integrals(&self, t: f64) -> PhaseIntegrals {
        let chi = self.chi(t);
        let (u, v) = self.uv(t);
        PhaseIntegrals {
            t,
            eta: self.eta(t),
            chi,
            u,
            v,
        }
    }

    /// `a_ν = (1/T) ∫₀ᵀ g_t e^{−iνωt − iη̃_t} dt` with `η̃_t = η_t − f₀t`.
    pub fn fourier_amplitude(&self, nu: i64) -> Result<Complex64> {
        let period = self.period().ok_or(Error::Aperiodic)?;
        let omega = 2.0 * PI / period;
        let f0 = self.mean_field().ok_or(Error::Aperiodic)?;
        let integrand = |t: f64| {
            let phase = -(nu as f64) * omega * t - (self.eta(t) - f0 * t);
            Complex64::from_polar(self.g(t), phase)
        };
        match self {
            DriveProtocol::Tabulated(d) => {
                let mut cuts = d.breakpoints.clone();
                if *cuts.last().unwrap() < period {
                    cuts.push(period);
                }
                let total: Complex64 = cuts
                    .windows(2)
                    .map(|w| quad::integrate(integrand, w[0], w[1], QUAD_TOL))
                    .sum();
                Ok(total / period)
            }
            _ => periodic_mean(integrand, period),
        }
    }

    /// `γ_n` for resonant drives (`2a_n` when `a_n` is real, `2|a_n|`
    /// otherwise); zero with no order for non-resonant ones.
    pub fn drift_rate(&self) -> Result<DriftRate> {
        let order = match self.resonance().and_then(|r| r.order) {
            Some(n) => n,
            None => {
                return Ok(DriftRate {
                    order: None,
                    gamma: 0.0,
                })
            }
        };
        let a = self.fourier_amplitude(order)?;
        let gamma = if a.im.abs() <= 1e-12 * a.norm().max(1.0) {
            2.0 * a.re
        } else {
            2.0 * a.norm()
        };
        Ok(DriftRate {
            order: Some(order),
            gamma,
        })
    }

    /// Closed form `2g₀J_n(f₁/ω)` of the drift rate for harmonic drives.
    pub fn harmonic_drift_closed_form(&self, n: i64) -> Option<f64> {
        match self {
            DriveProtocol::Harmonic { f1, omega, g0, .. } => {
                Some(2.0 * g0 * bessel_j(n, f1 / omega).ok()?)
            }
            _ => None,
        }
    }
}

/// Periodic trapezoid mean `(1/T)∫₀ᵀ h` with node doubling.
fn periodic_mean<F>(h: F, period: f64) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    let mut nodes = 64usize;
    let sample = |n: usize| -> Complex64 {
        let dt = period / n as f64;
        (0..n).map(|j| h(j as f64 * dt)).sum::<Complex64>() / n as f64
    };
    let mut prev = sample(nodes);
    while nodes < 1 << 22 {
        nodes *= 2;
        let next = sample(nodes);
        if (next - prev).norm() < 1e-13 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergent {
        what: "fourier amplitude quadrature",
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::bessel_zero;

    /// Brute-force χ by adaptive quadrature of the definition.
    fn chi_oracle(p: &DriveProtocol, t: f64) -> Complex64 {
        let pieces = (t.abs() / 0.5).ceil().max(1.0) as usize;
        let h = t / pieces as f64;
        (0..pieces)
            .map(|i| {
                quad::integrate(
                    |tau| Complex64::from_polar(p.g(tau), -p.eta(tau)),
                    i as f64 * h,
                    (i + 1) as f64 * h,
                    1e-14,
                )
            })
            .sum()
    }

    #[test]
    fn dc_values() {
        let p = DriveProtocol::dc(1.0, 1.0).unwrap();
        assert!((p.eta(2.0 * PI) - 2.0 * PI).abs() < 1e-15);
        assert!((p.chi(PI) - Complex64::new(0.0, -2.0)).norm() < 1e-14);
        assert!(p.chi(2.0 * PI).norm() < 1e-14);
        let (u, v) = p.uv(PI);
        assert!(u.abs() < 1e-14);
        assert!((v - 4.0).abs() < 1e-14);
    }

    #[test]
    fn dc_small_field_limit() {
        let p = DriveProtocol::dc(1e-9, 0.7).unwrap();
        let chi = p.chi(3.0);
        assert!((chi - Complex64::new(2.1, -0.7 * 3.0 * 1.5e-9)).norm() < 1e-15);
        let free = DriveProtocol::dc(0.0, 0.7).unwrap();
        assert!((free.chi(3.0) - Complex64::new(2.1, 0.0)).norm() < 1e-15);
        // continuity across the branch point
        for w in [0.99e-6 / 2.0, 1.01e-6 / 2.0] {
            let x: f64 = w * 2.0;
            let half = (0.5 * x).sin();
            let direct = Complex64::new(x.sin() / w, -2.0 * half * half / w);
            assert!((oscillatory_integral(w, 2.0) - direct).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_time_and_zero_coupling() {
        let protos = [
            DriveProtocol::dc(0.8, 0.3).unwrap(),
            DriveProtocol::harmonic(1.0, 0.5, 1.0, 1.0).unwrap(),
            DriveProtocol::fourier(2.0, vec![0.4, -0.3], 1.0, 0.5).unwrap(),
        ];
        for p in &protos {
            assert_eq!(p.eta(0.0), 0.0);
            assert!(p.chi(0.0).norm() < 1e-16);
            assert_eq!(p.uv(0.0), (0.0, 0.0));
        }
        let silent = DriveProtocol::harmonic(1.0, 0.5, 1.3, 0.0).unwrap();
        for t in [0.3, 4.0, 17.0] {
            assert_eq!(silent.uv(t), (0.0, 0.0));
        }
    }

    #[test]
    fn harmonic_eta_full_period() {
        let p = DriveProtocol::harmonic(1.0, 0.5, 1.0, 1.0).unwrap();
        assert!((p.eta(2.0 * PI) - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let protos = [
            DriveProtocol::dc(1.0, 0.6).unwrap(),
            DriveProtocol::harmonic(1.0, 1.7, 1.0, 0.4).unwrap(),
            DriveProtocol::harmonic(1.3, 2.2, 0.7, 0.9).unwrap(),
            DriveProtocol::fourier(2.0, vec![1.0, 0.5], 1.0, 0.5).unwrap(),
            DriveProtocol::fourier(0.9, vec![-0.6, 0.8], 1.7, 1.1).unwrap(),
        ];
        let mut seed = 7u64;
        for p in &protos {
            let tb = p.bloch_period().unwrap();
            for _ in 0..25 {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
                let t = (seed >> 11) as f64 / (1u64 << 53) as f64 * 10.0 * tb;
                let closed = p.chi(t);
                let oracle = chi_oracle(p, t);
                assert!((closed - oracle).norm() < 1e-8, "{p:?} t={t}: {closed} vs {oracle}");
                let (u, v) = p.uv(t);
                assert!((Complex64::new(u, -v) - 2.0 * closed).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn resonant_decomposition() {
        for p in [
            DriveProtocol::harmonic(2.0, 1.3, 1.0, 0.7).unwrap(),
            DriveProtocol::fourier(1.0, vec![0.9, 0.4], 1.0, 0.5).unwrap(),
        ] {
            let period = p.period().unwrap();
            let order = p.resonance().unwrap().order.unwrap();
            let a_n = p.fourier_amplitude(order).unwrap();
            for &t in &[0.0, 0.4, 3.3, 11.9] {
                let drift = p.chi(t + period) - p.chi(t) - a_n * period;
                assert!(drift.norm() < 1e-8, "t={t}: {drift}");
                let eta_step = p.eta(t + period) - p.eta(t);
                assert!((eta_step - p.mean_field().unwrap() * period).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn localized_chi_stays_bounded() {
        let z = bessel_zero(1, 1).unwrap();
        let p = DriveProtocol::harmonic(1.0, z, 1.0, 1.0).unwrap();
        let t = 200.0 * 2.0 * PI;
        let chi = p.chi(t);
        assert!(chi.norm() < 5.0, "|chi| = {}", chi.norm());
        assert!((chi - chi_oracle(&p, t)).norm() < 1e-7);
    }

    #[test]
    fn fourier_amplitudes() {
        let flat = DriveProtocol::harmonic(2.0, 0.0, 1.0, 0.3).unwrap();
        assert!(flat.fourier_amplitude(2).unwrap().norm() < 1e-15);
        assert!((flat.fourier_amplitude(0).unwrap() - Complex64::new(0.3, 0.0)).norm() < 1e-14);

        let p = DriveProtocol::harmonic(1.0, 1.0, 1.0, 0.25).unwrap();
        let a1 = p.fourier_amplitude(1).unwrap();
        let want = 0.25 * bessel_j(1, 1.0).unwrap();
        assert!((a1 - Complex64::new(want, 0.0)).norm() < 1e-10);
        assert!((want - 0.110_012_646_436_233_4).abs() < 1e-12);

        // many-argument closed form, with β_m = f_m/(mω) entering negated
        let four = DriveProtocol::fourier(2.0, vec![1.0, 0.5], 1.0, 0.5).unwrap();
        let args = MultiBesselArgs::new(vec![-1.0, -0.25]).unwrap();
        let closed = 0.5 * crate::special::bessel_j_multivar(2, &args).unwrap();
        assert!((four.fourier_amplitude(2).unwrap() - Complex64::new(closed, 0.0)).norm() < 1e-10);

        assert!(matches!(
            DriveProtocol::dc(1.0, 1.0).unwrap().fourier_amplitude(0),
            Err(Error::Aperiodic)
        ));
    }

    #[test]
    fn drift_rates() {
        let p = DriveProtocol::harmonic(2.0, 1.0, 2.0, 1.0).unwrap();
        let d = p.drift_rate().unwrap();
        assert_eq!(d.order, Some(1));
        assert!((d.gamma - 2.0 * bessel_j(1, 0.5).unwrap()).abs() < 1e-10);
        assert!((d.gamma - 0.484_5).abs() < 1e-4);

        let z = bessel_zero(1, 1).unwrap();
        let loc = DriveProtocol::harmonic(1.0, z, 1.0, 0.8).unwrap();
        assert!(loc.drift_rate().unwrap().gamma.abs() < 1e-10);

        let off = DriveProtocol::harmonic(1.0, 1.0, 0.7, 1.0).unwrap();
        let d = off.drift_rate().unwrap();
        assert!(!d.is_resonant());
        assert_eq!(d.gamma, 0.0);
    }

    #[test]
    fn tabulated_matches_closed_form() {
        let dc = DriveProtocol::dc(1.0, 1.0).unwrap();
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let f = Table::new(times.clone(), vec![1.0; times.len()], false).unwrap();
        let g = Table::new(times, vec![1.0; 101], false).unwrap();
        let tab = DriveProtocol::tabulated(TabulatedDrive::new(f, g).unwrap());
        assert!((tab.eta(3.0) - 3.0).abs() < 1e-10);
        for &t in &[0.0, 0.77, 3.0, 4.999, 6.5] {
            assert!((tab.chi(t) - dc.chi(t)).norm() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn tabulated_periodic_harmonic() {
        let omega = 1.0;
        let period = 2.0 * PI / omega;
        let n = 4000;
        let times: Vec<f64> = (0..=n).map(|i| period * i as f64 / n as f64).collect();
        let harm = DriveProtocol::harmonic(1.0, 0.8, omega, 0.5).unwrap();
        let fv: Vec<f64> = times.iter().map(|&t| harm.f(t)).collect();
        let f = Table::new(times.clone(), fv, true).unwrap();
        let g = Table::new(vec![0.0, period], vec![0.5, 0.5], true).unwrap();
        let tab = DriveProtocol::tabulated(TabulatedDrive::new(f, g).unwrap());
        assert_eq!(tab.resonance().unwrap().order, Some(1));
        // linear interpolation error of f is O(h²); compare loosely
        for &t in &[1.0, 7.5, 20.0] {
            assert!((tab.chi(t) - harm.chi(t)).norm() < 1e-5, "t={t}");
            assert!((tab.chi(t) - chi_oracle(&tab, t)).norm() < 1e-9, "t={t}");
        }
        let a_tab = tab.fourier_amplitude(1).unwrap();
        let a_harm = harm.fourier_amplitude(1).unwrap();
        assert!((a_tab - a_harm).norm() < 1e-5);
    }

    #[test]
    fn table_parsing() {
        let t = Table::parse("# t f\n0 1.0\n0.5, 2.0\n1.0\t3.0 # tail\n", false).unwrap();
        assert!((t.value(0.25) - 1.5).abs() < 1e-15);
        assert!((t.integral(1.0) - 2.0).abs() < 1e-15);
        assert!(Table::parse("0 1\n0 2\n", false).is_err());
        assert!(Table::parse("0 1 2\n", false).is_err());
        assert!(Table::parse("0 x\n1 2\n", false).is_err());
    }

    #[test]
    fn phase_integral_scaling() {
        // ∫ e^{-2iη} for dc equals the dc χ with doubled field and unit coupling
        let p = DriveProtocol::harmonic(0.9, 0.7, 1.3, 1.0).unwrap();
        for &t in &[0.5, 2.0, 9.0] {
            let got = p.phase_integral(3.0, t).unwrap();
            let want = quad::integrate(
                |tau| Complex64::from_polar(1.0, -3.0 * p.eta(tau)),
                0.0,
                t,
                1e-14,
            );
            assert!((got - want).norm() < 1e-9);
        }
    }

    #[test]
    fn batched_phase_integrals_match_pointwise() {
        let times: Vec<f64> = (0..25).map(|j| 0.7 * j as f64).collect();
        for p in [
            DriveProtocol::dc(0.9, 0.4).unwrap(),
            DriveProtocol::harmonic(1.0, 2.0, 1.3, 0.5).unwrap(),
            DriveProtocol::fourier(0.6, vec![1.0, -0.5], 0.9, 0.3).unwrap(),
        ] {
            for (a, &t) in p.phase_integrals_on(&times, Exec::default()).iter().zip(&times) {
                let b = p.phase_integrals(t);
                assert_eq!(a.eta, b.eta);
                assert!((a.chi - b.chi).norm() < 1e-15);
                assert!((a.u - b.u).abs() < 1e-14 && (a.v - b.v).abs() < 1e-14);
            }
        }
    }
}
