//! Closed-form moments of `K̂` and `N̂` at time `t`, computed from the
//! coherence parameters of the initial state and the phase integrals.
//!
//! In the Heisenberg picture `K̂(t) = e^{−iη_t}K̂` and
//! `N̂(t) = N̂ + v_t Ĉ − u_t Ŝ`, so first and second moments need only
//! `⟨K̂⟩₀, ⟨Ĵ⟩₀, ⟨K̂²⟩₀, ⟨N̂⟩₀, ⟨N̂²⟩₀`.

use num_complex::Complex64;

use crate::drive::{DriveProtocol, PhaseIntegrals};
use crate::error::{Error, Result};
use crate::lattice::{shift_moment, CoherenceParameters, LatticeState};
use crate::par::Exec;
use crate::propagator::{CommutatorConvention, PropagatorParams, SingleBandDispersion};
use crate::special::bessel_zero;

/// Drift rates below this count as dynamically localised.
pub const LOCALIZATION_TOLERANCE: f64 = 1e-10;

/// `⟨K̂⟩_t = e^{−iη_t}⟨K̂⟩₀`
pub fn expect_k(coh: &CoherenceParameters, protocol: &DriveProtocol, t: f64) -> Complex64 {
    coh.k * Complex64::from_polar(1.0, -protocol.eta(t))
}

/// `Δ²_K = |⟨K̂²⟩ − ⟨K̂⟩²|`, constant in time.
pub fn var_k(coh: &CoherenceParameters) -> f64 {
    coh.var_k()
}

/// `⟨N̂⟩_t = ⟨N̂⟩₀ + v_t⟨Ĉ⟩₀ − u_t⟨Ŝ⟩₀`
pub fn expect_n(coh: &CoherenceParameters, protocol: &DriveProtocol, t: f64) -> f64 {
    let (u, v) = protocol.uv(t);
    expect_n_uv(coh, u, v)
}

fn expect_n_uv(coh: &CoherenceParameters, u: f64, v: f64) -> f64 {
    coh.n_mean + v * coh.mean_c - u * coh.mean_s
}

/// `⟨N̂⟩_t = ⟨N̂⟩₀ + 2|K||χ_t| sin(φ_t − κ)` with `K = |K|e^{iκ}`.
pub fn expect_n_polar(coh: &CoherenceParameters, protocol: &DriveProtocol, t: f64) -> f64 {
    let chi = protocol.chi(t);
    let phi = -chi.arg();
    coh.n_mean + 2.0 * coh.k.norm() * chi.norm() * (phi - coh.k.arg()).sin()
}

/// `Δ²_N(t)` from the `C`/`S`/`N` covariance matrix:
/// `Δ²_N + 2vΔ_CN − 2uΔ_SN + v²Δ_CC + u²Δ_SS − 2uvΔ_CS`.
pub fn variance_n(coh: &CoherenceParameters, protocol: &DriveProtocol, t: f64) -> f64 {
    let (u, v) = protocol.uv(t);
    variance_n_uv(coh, u, v)
}

fn variance_n_uv(coh: &CoherenceParameters, u: f64, v: f64) -> f64 {
    coh.var_n() + 2.0 * v * coh.cov_cn() - 2.0 * u * coh.cov_sn() + v * v * coh.cov_cc() + u * u * coh.cov_ss()
        - 2.0 * u * v * coh.cov_cs()
}

/// `Δ²_N(t)` in terms of moduli and phases of `K = |K|e^{iκ}`,
/// `J = |J|e^{iμ}`, `L = |L|e^{iν}`:
///
/// ```text
/// Δ²_N(0) + 2|J||χ| sin(φ−μ) + 2|χ|²(1 − |L| cos(2φ−ν))
///         − 4⟨N̂⟩₀|K||χ| sin(φ−κ) − 4|K|²|χ|² sin²(φ−κ)
/// ```
pub fn variance_n_polar(coh: &CoherenceParameters, protocol: &DriveProtocol, t: f64) -> f64 {
    let chi = protocol.chi(t);
    let (r, phi) = (chi.norm(), -chi.arg());
    let (k, kappa) = (coh.k.norm(), coh.k.arg());
    let (j, mu) = (coh.j.norm(), coh.j.arg());
    let (l, nu) = (coh.l.norm(), coh.l.arg());
    let s = (phi - kappa).sin();
    coh.var_n() + 2.0 * j * r * (phi - mu).sin() + 2.0 * r * r * (1.0 - l * (2.0 * phi - nu).cos())
        - 4.0 * coh.n_mean * k * r * s
        - 4.0 * k * k * r * r * s * s
}

/// Closed-form moments on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub phases: Vec<PhaseIntegrals>,
    pub expect_k: Vec<Complex64>,
    pub expect_n: Vec<f64>,
    pub var_n: Vec<f64>,
    pub var_k: Vec<f64>,
}

impl ObservableSeries {
    pub fn compute(coh: &CoherenceParameters, protocol: &DriveProtocol, times: &[f64], exec: Exec) -> Self {
        let phases = protocol.phase_integrals_on(times, exec);
        let expect_k = phases
            .iter()
            .map(|p| coh.k * Complex64::from_polar(1.0, -p.eta))
            .collect();
        let expect_n = phases.iter().map(|p| expect_n_uv(coh, p.u, p.v)).collect();
        let var_n = phases.iter().map(|p| variance_n_uv(coh, p.u, p.v)).collect();
        let var_k = vec![coh.var_k(); times.len()];
        ObservableSeries {
            phases,
            expect_k,
            expect_n,
            var_n,
            var_k,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.t).collect()
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Qualitative type of the closed-form motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Rigid oscillation with constant width.
    Oscillating,
    /// Centre frozen, width pulsating.
    Breathing,
    Mixed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Oscillating => "oscillating",
            Mode::Breathing => "breathing",
            Mode::Mixed => "mixed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeReport {
    pub mode: Mode,
    pub mean_c: f64,
    pub mean_s: f64,
    pub cov_cc: f64,
    pub cov_ss: f64,
    pub cov_cs: f64,
    pub cov_cn: f64,
    pub cov_sn: f64,
}

const SMALL: f64 = 0.05;
const HALF_BAND: (f64, f64) = (0.45, 0.55);

pub fn classify_mode(coh: &CoherenceParameters) -> ModeReport {
    let (cc, ss, cs) = (coh.cov_cc(), coh.cov_ss(), coh.cov_cs());
    let in_half = |x: f64| (HALF_BAND.0..=HALF_BAND.1).contains(&x);
    let mode = if cc < SMALL && ss < SMALL && cs.abs() < SMALL {
        Mode::Oscillating
    } else if coh.mean_c.abs() < SMALL && coh.mean_s.abs() < SMALL && in_half(cc) && in_half(ss) {
        Mode::Breathing
    } else {
        Mode::Mixed
    };
    ModeReport {
        mode,
        mean_c: coh.mean_c,
        mean_s: coh.mean_s,
        cov_cc: cc,
        cov_ss: ss,
        cov_cs: cs,
        cov_cn: coh.cov_cn(),
        cov_sn: coh.cov_sn(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationReport {
    pub order: i64,
    pub gamma: f64,
    /// `γ_n² Δ²_SS`, the asymptotic `Δ²_N/t²`, when a state is given.
    pub variance_slope: Option<f64>,
    pub localized: bool,
    /// The drive has no oscillating part, so `γ_n = 0` trivially.
    pub degenerate: bool,
    /// Zeros of `J_n` below and above the current `f₁/ω` (harmonic only).
    pub nearest_zeros: (Option<f64>, Option<f64>),
}

/// Resonant drift rate and whether the drive sits on a localisation point.
pub fn localization_report(
    protocol: &DriveProtocol,
    coh: Option<&CoherenceParameters>,
) -> Result<LocalizationReport> {
    let resonance = protocol.resonance().ok_or(Error::Aperiodic)?;
    let order = resonance.order.ok_or(Error::NonResonant {
        ratio: resonance.ratio,
    })?;
    let drift = protocol.drift_rate()?;
    let gamma = drift.gamma;
    let degenerate = match protocol {
        DriveProtocol::Harmonic { f1, .. } => *f1 == 0.0,
        DriveProtocol::Fourier { modes, .. } => modes.iter().all(|f| *f == 0.0),
        DriveProtocol::Tabulated(d) => {
            let f = d.f_table();
            let first = f.value(0.0);
            f.times().iter().all(|&t| f.value(t) == first)
        }
        DriveProtocol::Dc { .. } => true,
    };
    let nearest_zeros = match protocol {
        DriveProtocol::Harmonic { f1, omega, .. } => nearest_bessel_zeros(order.unsigned_abs() as u32, (f1 / omega).abs())?,
        _ => (None, None),
    };
    Ok(LocalizationReport {
        order,
        gamma,
        variance_slope: coh.map(|c| gamma * gamma * c.cov_ss()),
        localized: gamma.abs() < LOCALIZATION_TOLERANCE,
        degenerate,
        nearest_zeros,
    })
}

fn nearest_bessel_zeros(n: u32, x: f64) -> Result<(Option<f64>, Option<f64>)> {
    let mut below = None;
    for k in 1.. {
        let z = bessel_zero(n, k)?;
        if (z - x).abs() <= 1e-12 * z {
            return Ok((Some(z), Some(z)));
        }
        if z > x {
            return Ok((below, Some(z)));
        }
        below = Some(z);
    }
    unreachable!()
}

/// `⟨N̂⟩₀` and `⟨K̂^m⟩₀` for `m = 1..M`.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleBandMoments {
    pub n_mean: f64,
    pub k_powers: Vec<Complex64>,
}

impl SingleBandMoments {
    pub fn from_state(state: &LatticeState, order: usize) -> Self {
        SingleBandMoments {
            n_mean: state.position_moments().0,
            k_powers: (1..=order as i64).map(|m| shift_moment(state, m)).collect(),
        }
    }
}

/// `⟨N̂⟩_t = ⟨N̂⟩₀ − 2 Σ_m m Im(χ_m ⟨K̂^m⟩₀)` for a general dispersion.
/// `convention` only changes how `χ_m` is built.
pub fn expect_n_single_band(
    moments: &SingleBandMoments,
    dispersion: &SingleBandDispersion,
    protocol: &DriveProtocol,
    t: f64,
    convention: CommutatorConvention,
) -> Result<f64> {
    let params = PropagatorParams::single_band(dispersion, protocol, t, convention)?;
    let shift: f64 = params
        .chi
        .iter()
        .zip(&moments.k_powers)
        .enumerate()
        .map(|(i, (chi, k))| (i + 1) as f64 * (chi * k).im)
        .sum();
    Ok(moments.n_mean - 2.0 * shift)
}
