//! Exact time evolution `Û(t) = e^{−iη_t N̂} e^{−iχ_t K̂} e^{−iχ*_t K̂†}`.
//!
//! The ladder factor is diagonal on Bloch waves, so a state can be evolved
//! either by a Bessel convolution in site space or by a phase in Bloch
//! space. Both are exact up to the `1e-16` Bessel cutoff.

use num_complex::Complex64;

use crate::drive::DriveProtocol;
use crate::error::{Error, Result};
use crate::lattice::{bloch_transform, inverse_bloch, LatticeState, Window};
use crate::par::Exec;
use crate::special::{bessel_cutoff, bessel_j, bessel_j_sequence};

/// Default tolerance on mass pushed out of the window.
pub const DEFAULT_LEAK_TOLERANCE: f64 = 1e-8;

/// `E(κ) = Σ_m (g_m e^{imκ} + g*_m e^{−imκ})`, `m = 0..M`.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleBandDispersion {
    couplings: Vec<Complex64>,
}

impl SingleBandDispersion {
    /// `couplings[m] = g_m`. Needs at least one `m ≥ 1` entry.
    pub fn new(couplings: Vec<Complex64>) -> Result<Self> {
        if couplings.len() < 2 {
            return Err(Error::InvalidDispersion("need couplings for m = 0 and m >= 1".into()));
        }
        if couplings.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::InvalidDispersion("non-finite coupling".into()));
        }
        Ok(SingleBandDispersion { couplings })
    }

    /// Nearest-neighbour band `2g cos κ`.
    pub fn tight_binding(g: f64) -> Self {
        SingleBandDispersion {
            couplings: vec![Complex64::new(0.0, 0.0), Complex64::new(g, 0.0)],
        }
    }

    pub fn couplings(&self) -> &[Complex64] {
        &self.couplings
    }

    /// Highest harmonic `M`.
    pub fn order(&self) -> usize {
        self.couplings.len() - 1
    }

    pub fn energy(&self, kappa: f64) -> f64 {
        self.couplings
            .iter()
            .enumerate()
            .map(|(m, g)| 2.0 * (g * Complex64::from_polar(1.0, m as f64 * kappa)).re)
            .sum()
    }
}

/// Exponent multiplier `s_m` in `χ_m = ∫ g_m e^{−i s_m η}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CommutatorConvention {
    /// `s_m = m`, from `[K̂^m, N̂] = m K̂^m`.
    #[default]
    Ladder,
    /// `s_m = 2^{m−1}`. Kept only to quantify how far it is from the
    /// correct evolution.
    PowerOfTwo,
}

impl CommutatorConvention {
    pub fn multiplier(self, m: usize) -> f64 {
        match self {
            CommutatorConvention::Ladder => m as f64,
            CommutatorConvention::PowerOfTwo => {
                if m == 0 {
                    0.0
                } else {
                    2f64.powi(m as i32 - 1)
                }
            }
        }
    }
}

/// `η` and the ladder coefficients `χ_m` of a propagator over `[t₀, t₁]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagatorParams {
    pub eta: f64,
    /// `chi[m − 1] = χ_m`
    pub chi: Vec<Complex64>,
    /// `2 Re χ_0`, from the `m = 0` on-site coupling.
    pub global_phase: f64,
}

impl PropagatorParams {
    pub fn tight_binding(protocol: &DriveProtocol, t: f64) -> Self {
        PropagatorParams {
            eta: protocol.eta(t),
            chi: vec![protocol.chi(t)],
            global_phase: 0.0,
        }
    }

    /// `Û(t₁, t₀) = Û(t₁)Û(t₀)†`: `η → η₁ − η₀`, `χ → e^{iη₀}(χ₁ − χ₀)`.
    pub fn tight_binding_between(protocol: &DriveProtocol, t0: f64, t1: f64) -> Self {
        let eta0 = protocol.eta(t0);
        let chi = (protocol.chi(t1) - protocol.chi(t0)) * Complex64::from_polar(1.0, eta0);
        PropagatorParams {
            eta: protocol.eta(t1) - eta0,
            chi: vec![chi],
            global_phase: 0.0,
        }
    }

    /// Couplings from `dispersion`, field from `protocol` (its `g_t` is
    /// not used).
    pub fn single_band(
        dispersion: &SingleBandDispersion,
        protocol: &DriveProtocol,
        t: f64,
        convention: CommutatorConvention,
    ) -> Result<Self> {
        Self::single_band_between(dispersion, protocol, 0.0, t, convention)
    }

    pub fn single_band_between(
        dispersion: &SingleBandDispersion,
        protocol: &DriveProtocol,
        t0: f64,
        t1: f64,
        convention: CommutatorConvention,
    ) -> Result<Self> {
        let eta0 = protocol.eta(t0);
        let mut chi = Vec::with_capacity(dispersion.order());
        for (m, g) in dispersion.couplings.iter().enumerate().skip(1) {
            if *g == Complex64::new(0.0, 0.0) {
                chi.push(Complex64::new(0.0, 0.0));
                continue;
            }
            let s = convention.multiplier(m);
            let span = protocol.phase_integral(s, t1)? - protocol.phase_integral(s, t0)?;
            chi.push(g * span * Complex64::from_polar(1.0, s * eta0));
        }
        Ok(PropagatorParams {
            eta: protocol.eta(t1) - eta0,
            chi,
            global_phase: 2.0 * dispersion.couplings[0].re * (t1 - t0),
        })
    }

    /// `χ_1 = |χ|e^{−iφ}`.
    pub fn chi1(&self) -> Complex64 {
        self.chi.first().copied().unwrap_or_default()
    }

    /// `φ` in `χ_1 = |χ_1|e^{−iφ}`.
    pub fn phi(&self) -> f64 {
        -self.chi1().arg()
    }

    /// Phase acquired by the Bloch wave `|κ⟩` under the ladder factor:
    /// `e^{−i(f + f*)}`, `f = Σ_{m≥1} χ_m e^{imκ}`. The `m = 0` term is
    /// the separate [`PropagatorParams::global_phase`].
    pub fn bloch_phase(&self, kappa: f64) -> Complex64 {
        let f: f64 = self
            .chi
            .iter()
            .enumerate()
            .map(|(i, c)| 2.0 * (c * Complex64::from_polar(1.0, (i + 1) as f64 * kappa)).re)
            .sum();
        Complex64::from_polar(1.0, -f)
    }

    /// Sites the ladder factor can move amplitude by (beyond `1e-16`).
    pub fn reach(&self) -> Result<usize> {
        let mut total = 0;
        for (i, c) in self.chi.iter().enumerate() {
            if c.norm() > 0.0 {
                total += (i + 1) * bessel_cutoff(2.0 * c.norm())?;
            }
        }
        Ok(total)
    }
}

/// How [`evolve`] applies the ladder factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Method {
    /// Bessel convolution in site space.
    #[default]
    Site,
    /// Phase multiplication on a Bloch grid via FFT.
    Bloch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    pub method: Method,
    pub leak_tolerance: f64,
    pub exec: Exec,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            method: Method::Site,
            leak_tolerance: DEFAULT_LEAK_TOLERANCE,
            exec: Exec::default(),
        }
    }
}

impl EvolveOptions {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

/// Evolved state on the input window and the mass that left it.
#[derive(Clone, Debug, PartialEq)]
pub struct Evolved {
    pub state: LatticeState,
    pub leaked: f64,
}

/// `U_{nn'}(t) = e^{−i(n'−n)(φ+π/2) − inη} J_{n'−n}(2|χ|)`.
pub fn element(protocol: &DriveProtocol, t: f64, n: i64, n_prime: i64) -> Result<Complex64> {
    element_from_params(&PropagatorParams::tight_binding(protocol, t), n, n_prime)
}

pub fn element_from_params(params: &PropagatorParams, n: i64, n_prime: i64) -> Result<Complex64> {
    let chi = params.chi1();
    let d = n_prime - n;
    let j = bessel_j(d, 2.0 * chi.norm())?;
    let phase = -(d as f64) * (params.phi() + std::f64::consts::FRAC_PI_2) - n as f64 * params.eta;
    Ok(Complex64::from_polar(j, phase))
}

/// Tight-binding Bloch phase `e^{−2i|χ_t| cos(κ − φ_t)}`.
pub fn bloch_phase(protocol: &DriveProtocol, t: f64, kappa: f64) -> Complex64 {
    PropagatorParams::tight_binding(protocol, t).bloch_phase(kappa)
}

/// `Û(t)ψ` for the tight-binding Hamiltonian with coupling `g_t`.
pub fn evolve(
    state: &LatticeState,
    protocol: &DriveProtocol,
    t: f64,
    options: &EvolveOptions,
) -> Result<Evolved> {
    propagate(state, &PropagatorParams::tight_binding(protocol, t), options)
}

/// `Û(t₁, t₀)ψ`.
pub fn evolve_between(
    state: &LatticeState,
    protocol: &DriveProtocol,
    t0: f64,
    t1: f64,
    options: &EvolveOptions,
) -> Result<Evolved> {
    let params = PropagatorParams::tight_binding_between(protocol, t0, t1);
    propagate(state, &params, options)
}

/// `Û(t)ψ` for the dispersion `E(κ)` under the field of `protocol`,
/// always via the Bloch path.
pub fn evolve_single_band(
    state: &LatticeState,
    dispersion: &SingleBandDispersion,
    protocol: &DriveProtocol,
    t: f64,
    convention: CommutatorConvention,
    options: &EvolveOptions,
) -> Result<Evolved> {
    let params = PropagatorParams::single_band(dispersion, protocol, t, convention)?;
    propagate(state, &params, &options.with_method(Method::Bloch))
}

/// Applies `e^{−iηN̂}` after the ladder factor described by `params`.
/// The site path only supports a single `χ_1`.
pub fn propagate(state: &LatticeState, params: &PropagatorParams, options: &EvolveOptions) -> Result<Evolved> {
    if params.eta == 0.0 && params.global_phase == 0.0 && params.chi.iter().all(|c| c.norm() == 0.0) {
        return Ok(Evolved {
            state: state.clone(),
            leaked: 0.0,
        });
    }
    let reach = params.reach()?;
    let window = state.window();
    let padded = window.padded(reach);
    let (wide, _) = state.restricted_to(padded);
    let single = params.chi.iter().skip(1).all(|c| c.norm() == 0.0);
    let mut out = match options.method {
        Method::Site if single => site_convolution(&wide, params.chi1(), reach, options.exec)?,
        _ => bloch_multiply(&wide, params, reach)?,
    };
    if params.global_phase != 0.0 {
        let g = Complex64::from_polar(1.0, -params.global_phase);
        out.amplitudes_mut().iter_mut().for_each(|c| *c *= g);
    }
    apply_site_phase(&mut out, params.eta);
    let (state_out, _) = out.restricted_to(window);
    let leaked = (state.norm_sqr() - state_out.norm_sqr()).max(0.0);
    if leaked > options.leak_tolerance {
        return Err(Error::WindowLeak {
            leaked,
            tolerance: options.leak_tolerance,
        });
    }
    Ok(Evolved {
        state: state_out,
        leaked,
    })
}

fn apply_site_phase(state: &mut LatticeState, eta: f64) {
    if eta == 0.0 {
        return;
    }
    let window = state.window();
    for (n, c) in window.sites().zip(state.amplitudes_mut()) {
        *c *= Complex64::from_polar(1.0, -eta * n as f64);
    }
}

/// `c'_n = Σ_m J_m(2|χ|) e^{−im(φ+π/2)} c_{n+m}`, `|m| ≤ reach`.
fn site_convolution(state: &LatticeState, chi: Complex64, reach: usize, exec: Exec) -> Result<LatticeState> {
    let x = 2.0 * chi.norm();
    let js = bessel_j_sequence(reach, x)?;
    let step = Complex64::from_polar(1.0, -(-chi.arg() + std::f64::consts::FRAC_PI_2));
    let mut kernel = vec![Complex64::new(0.0, 0.0); 2 * reach + 1];
    let mut rot = Complex64::new(1.0, 0.0);
    for (m, &j) in js.iter().enumerate() {
        kernel[reach + m] = j * rot;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        // J_{−m} = (−1)^m J_m, e^{+im(φ+π/2)}
        kernel[reach - m] = sign * j * rot.conj();
        rot *= step;
    }
    let window = state.window();
    let amps = state.amplitudes();
    let len = amps.len() as i64;
    let r = reach as i64;
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    exec.fill(&mut out, |i| {
        let i = i as i64;
        let lo = (-r).max(-i);
        let hi = r.min(len - 1 - i);
        (lo..=hi)
            .map(|m| kernel[(m + r) as usize] * amps[(i + m) as usize])
            .sum()
    });
    LatticeState::from_raw(window, out)
}

fn bloch_multiply(state: &LatticeState, params: &PropagatorParams, reach: usize) -> Result<LatticeState> {
    // an extra `reach` of grid keeps the circular wrap beyond the cutoff
    let grid = state.window().len() + reach;
    let mut bloch = bloch_transform(state, grid)?;
    let kappas = bloch.kappas();
    for (v, k) in bloch.values_mut().iter_mut().zip(kappas) {
        *v *= params.bloch_phase(k);
    }
    inverse_bloch(&bloch, state.window())
}

/// Dense `U_{nn'}` on `window` (row `n`, column `n'`), for diagnostics.
pub fn matrix(protocol: &DriveProtocol, t: f64, window: Window, exec: Exec) -> Result<Vec<Vec<Complex64>>> {
    let params = PropagatorParams::tight_binding(protocol, t);
    let sites: Vec<i64> = window.sites().collect();
    exec.try_map(&sites, |&n| {
        sites
            .iter()
            .map(|&np| element_from_params(&params, n, np))
            .collect::<Result<Vec<_>>>()
    })
}
