//! Quasienergy bands, Houston and Floquet states, and the dynamical
//! invariant `Î(t) = N̂ + λ_t K̂ + λ*_t K̂†`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::drive::DriveProtocol;
use crate::error::{Error, Result};
use crate::lattice::{shift_moment, LatticeState, Window};
use crate::par::Exec;
use crate::propagator::{evolve, EvolveOptions};

/// `ε_κ = a_n e^{iκ} + a*_n e^{−iκ}` for a drive with `f₀ = nω`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuasienergyBand {
    pub order: i64,
    pub a_n: Complex64,
    pub period: f64,
}

impl QuasienergyBand {
    pub fn new(protocol: &DriveProtocol) -> Result<Self> {
        let resonance = protocol.resonance().ok_or(Error::Aperiodic)?;
        let order = resonance.order.ok_or(Error::NonResonant {
            ratio: resonance.ratio,
        })?;
        Ok(QuasienergyBand {
            order,
            a_n: protocol.fourier_amplitude(order)?,
            period: protocol.period().ok_or(Error::Aperiodic)?,
        })
    }

    pub fn energy(&self, kappa: f64) -> f64 {
        2.0 * (self.a_n * Complex64::from_polar(1.0, kappa)).re
    }

    /// `4|a_n|`
    pub fn bandwidth(&self) -> f64 {
        4.0 * self.a_n.norm()
    }

    /// `(κ_j, ε_{κ_j})` on `κ_j = −π + 2πj/M`.
    pub fn sample(&self, grid: usize, exec: Exec) -> Vec<(f64, f64)> {
        exec.map_range(grid, |j| {
            let k = -PI + 2.0 * PI * j as f64 / grid as f64;
            (k, self.energy(k))
        })
    }
}

pub fn quasienergy(protocol: &DriveProtocol, kappa: f64) -> Result<f64> {
    Ok(QuasienergyBand::new(protocol)?.energy(kappa))
}

/// Site modulus of a Bloch-wave-like state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WaveNorm {
    /// `(2π)^{−1/2}`, continuum normalisation.
    #[default]
    Bloch,
    /// `L^{−1/2}`, unit norm on an `L`-site ring.
    Ring,
}

impl WaveNorm {
    fn modulus(self, window: Window) -> f64 {
        match self {
            WaveNorm::Bloch => (2.0 * PI).sqrt().recip(),
            WaveNorm::Ring => (window.len() as f64).sqrt().recip(),
        }
    }
}

/// `ψ_n = e^{inκ_t − i(χ_t e^{iκ} + c.c.)}`, `κ_t = κ − η_t`.
pub fn houston_state(kappa: f64, protocol: &DriveProtocol, t: f64, window: Window, norm: WaveNorm) -> LatticeState {
    let kt = kappa - protocol.eta(t);
    let theta = 2.0 * (protocol.chi(t) * Complex64::from_polar(1.0, kappa)).re;
    let r = norm.modulus(window);
    let amps = window
        .sites()
        .map(|n| Complex64::from_polar(r, n as f64 * kt - theta))
        .collect();
    LatticeState::from_raw(window, amps).expect("amplitudes match the window")
}

/// `u_κ(t) = e^{iε_κ t} ψ_κ(t)`, periodic with the drive.
pub fn floquet_state(
    kappa: f64,
    protocol: &DriveProtocol,
    t: f64,
    window: Window,
    norm: WaveNorm,
) -> Result<LatticeState> {
    let band = QuasienergyBand::new(protocol)?;
    let phase = Complex64::from_polar(1.0, band.energy(kappa) * t);
    Ok(houston_state(kappa, protocol, t, window, norm).scaled(phase))
}

/// Frame in which the Schrödinger equation is written.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Gauge {
    /// `Ĥ = g_t(K̂ + K̂†) + f_t N̂` on an open window.
    #[default]
    Length,
    /// `Ĥ' = g_t(e^{−iη_t}K̂ + e^{iη_t}K̂†)` after `ψ → e^{iη_t N̂}ψ`;
    /// periodic in `n`, so it closes on a ring.
    Momentum,
}

/// `‖(i∂_t − Ĥ)ψ_κ(t)‖_∞` with a central difference of step `dt`.
///
/// In the length gauge only interior sites are checked; in the momentum
/// gauge the window is a ring and `κ` should lie on its grid `2πj/L`.
pub fn schrodinger_residual(
    kappa: f64,
    protocol: &DriveProtocol,
    t: f64,
    window: Window,
    dt: f64,
    gauge: Gauge,
) -> f64 {
    let frame = |s: f64| {
        let psi = houston_state(kappa, protocol, s, window, WaveNorm::Bloch);
        match gauge {
            Gauge::Length => psi,
            Gauge::Momentum => {
                let eta = protocol.eta(s);
                let amps = window
                    .sites()
                    .zip(psi.amplitudes())
                    .map(|(n, c)| c * Complex64::from_polar(1.0, eta * n as f64))
                    .collect();
                LatticeState::from_raw(window, amps).expect("same window")
            }
        }
    };
    let (now, ahead, behind) = (frame(t), frame(t + dt), frame(t - dt));
    let (f, g) = (protocol.f(t), protocol.g(t));
    let hop = Complex64::from_polar(g, -protocol.eta(t));
    let i = Complex64::new(0.0, 1.0);
    let len = window.len();
    let amps = now.amplitudes();
    (0..len)
        .filter(|&k| gauge == Gauge::Momentum || (k > 0 && k + 1 < len))
        .map(|k| {
            let deriv = (ahead.amplitudes()[k] - behind.amplitudes()[k]) / (2.0 * dt);
            let (up, down) = (amps[(k + 1) % len], amps[(k + len - 1) % len]);
            let h = match gauge {
                Gauge::Length => g * (up + down) + f * window.site(k) as f64 * amps[k],
                Gauge::Momentum => hop * up + hop.conj() * down,
            };
            (i * deriv - h).norm()
        })
        .fold(0.0, f64::max)
}

/// Coefficients of `Î(t)` with the scaling `γ = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantCoefficients {
    pub t: f64,
    pub gamma: f64,
    /// `λ_t = −i e^{iη_t} χ_t`, solving `λ̇ = i(f_t λ − g_t γ)`, `λ₀ = 0`.
    pub lambda: Complex64,
}

pub fn invariant_lambda(protocol: &DriveProtocol, t: f64) -> InvariantCoefficients {
    let lambda = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, protocol.eta(t)) * protocol.chi(t);
    InvariantCoefficients {
        t,
        gamma: 1.0,
        lambda,
    }
}

/// `⟨Î(t)⟩` on a state at time `t`, in two algebraically equal forms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantValue {
    /// `⟨N̂⟩ + λ⟨K̂⟩ + λ*⟨K̂†⟩`
    pub k_form: f64,
    /// `⟨N̂⟩ + (u sin η − v cos η)⟨Ĉ⟩ + (u cos η + v sin η)⟨Ŝ⟩`
    pub cs_form: f64,
}

pub fn invariant_on_state(state_t: &LatticeState, protocol: &DriveProtocol, t: f64) -> InvariantValue {
    let n = state_t.position_moments().0;
    let k = shift_moment(state_t, 1);
    let lambda = invariant_lambda(protocol, t).lambda;
    let (u, v) = protocol.uv(t);
    let eta = protocol.eta(t);
    let (s, c) = eta.sin_cos();
    InvariantValue {
        k_form: n + 2.0 * (lambda * k).re,
        cs_form: n + (u * s - v * c) * k.re + (u * c + v * s) * k.im,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantCheck {
    pub value: InvariantValue,
    pub initial: f64,
    pub leaked: f64,
}

/// Evolves `state0` to `t` and evaluates `⟨Î(t)⟩`, which should equal
/// `⟨N̂⟩₀`.
pub fn invariant_expectation(
    state0: &LatticeState,
    protocol: &DriveProtocol,
    t: f64,
    options: &EvolveOptions,
) -> Result<InvariantCheck> {
    let out = evolve(state0, protocol, t, options)?;
    Ok(InvariantCheck {
        value: invariant_on_state(&out.state, protocol, t),
        initial: state0.position_moments().0,
        leaked: out.leaked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{apply_shift, apply_shift_ring, make_state, InitialState};
    use crate::special::bessel_j;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn flat_band_without_modulation() {
        let p = DriveProtocol::harmonic(2.0, 0.0, 1.0, 0.7).unwrap();
        let band = QuasienergyBand::new(&p).unwrap();
        assert_eq!(band.order, 2);
        for k in [-3.0, 0.0, 1.1] {
            assert!(band.energy(k).abs() < 1e-15);
        }
    }

    #[test]
    fn band_values() {
        let p = DriveProtocol::harmonic(1.0, 1.0, 1.0, 0.25).unwrap();
        let e0 = quasienergy(&p, 0.0).unwrap();
        assert!((e0 - 0.5 * bessel_j(1, 1.0).unwrap()).abs() < 1e-10);
        assert!((e0 - 0.2200).abs() < 1e-4);
        let band = QuasienergyBand::new(&p).unwrap();
        let samples = band.sample(4000, Exec::default());
        let max = samples.iter().map(|s| s.1).fold(f64::MIN, f64::max);
        let min = samples.iter().map(|s| s.1).fold(f64::MAX, f64::min);
        assert!((max - min - band.bandwidth()).abs() < 1e-6);
        let drift = p.drift_rate().unwrap().gamma;
        assert!((band.bandwidth() - 2.0 * drift.abs()).abs() < 1e-10);
        assert!(QuasienergyBand::new(&DriveProtocol::harmonic(1.0, 1.0, 0.7, 1.0).unwrap()).is_err());
    }

    #[test]
    fn houston_at_zero_is_bloch_wave() {
        let p = DriveProtocol::harmonic(1.0, 0.8, 1.0, 0.5).unwrap();
        let w = Window::centered(5);
        let s = houston_state(0.7, &p, 0.0, w, WaveNorm::Bloch);
        for n in w.sites() {
            let want = Complex64::from_polar((2.0 * PI).sqrt().recip(), 0.7 * n as f64);
            assert!((s.amplitude(n) - want).norm() < 1e-15);
        }
        let ring = houston_state(0.7, &p, 0.0, w, WaveNorm::Ring);
        assert!((ring.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn houston_is_ladder_eigenstate() {
        let p = DriveProtocol::harmonic(1.0, 0.8, 1.0, 0.5).unwrap();
        let w = Window::centered(16);
        let t = 2.3;
        let kt = 0.4 - p.eta(t);
        let s = houston_state(0.4, &p, t, w, WaveNorm::Bloch);
        let shifted = apply_shift(&s, 1).unwrap().state;
        for n in w.n_min()..w.n_max() {
            let want = s.amplitude(n) * Complex64::from_polar(1.0, kt);
            assert!((shifted.amplitude(n) - want).norm() < 1e-12);
        }
        // on a ring the wave closes when L κ_t ∈ 2πℤ
        let len = 32.0;
        let dc = DriveProtocol::dc(1.0, 0.5).unwrap();
        let ring = Window::new(0, 31).unwrap();
        let kappa = 2.0 * PI * 3.0 / len;
        let t = 2.0 * PI * 5.0 / len;
        let s = houston_state(kappa, &dc, t, ring, WaveNorm::Ring);
        let shifted = apply_shift_ring(&s, 1);
        let eig = Complex64::from_polar(1.0, kappa - dc.eta(t));
        assert!(shifted.max_deviation(&s.clone().scaled(eig)) < 1e-12);
    }

    #[test]
    fn houston_quasienergy_and_floquet_periodicity() {
        let p = DriveProtocol::harmonic(2.0, 1.1, 1.0, 0.4).unwrap();
        let band = QuasienergyBand::new(&p).unwrap();
        let w = Window::centered(10);
        let period = band.period;
        for kappa in [-1.2, 0.3, 2.9] {
            for t in [0.0, 0.8, 4.1] {
                let now = houston_state(kappa, &p, t, w, WaveNorm::Bloch);
                let later = houston_state(kappa, &p, t + period, w, WaveNorm::Bloch);
                let phase = Complex64::from_polar(1.0, -band.energy(kappa) * period);
                assert!(later.max_deviation(&now.clone().scaled(phase)) < 1e-8);
                let u0 = floquet_state(kappa, &p, t, w, WaveNorm::Bloch).unwrap();
                for k in 1..=3 {
                    let uk = floquet_state(kappa, &p, t + k as f64 * period, w, WaveNorm::Bloch).unwrap();
                    assert!(uk.max_deviation(&u0) < 1e-8);
                }
            }
            let u_t = floquet_state(kappa, &p, period, w, WaveNorm::Bloch).unwrap();
            let bloch = houston_state(kappa, &p, 0.0, w, WaveNorm::Bloch);
            assert!(u_t.max_deviation(&bloch) < 1e-8);
        }
    }

    #[test]
    fn flat_band_floquet_is_houston() {
        let p = DriveProtocol::harmonic(1.0, 0.0, 1.0, 0.4).unwrap();
        let w = Window::centered(6);
        let a = floquet_state(0.5, &p, 1.3, w, WaveNorm::Bloch).unwrap();
        let b = houston_state(0.5, &p, 1.3, w, WaveNorm::Bloch);
        assert!(a.max_deviation(&b) < 1e-15);
    }

    #[test]
    fn houston_solves_schrodinger() {
        let p = DriveProtocol::harmonic(1.3, 0.9, 0.8, 0.6).unwrap();
        let ring = Window::new(0, 31).unwrap();
        for t in [0.5, 3.0, 11.0] {
            let r = schrodinger_residual(2.0 * PI * 5.0 / 32.0, &p, t, ring, 1e-4, Gauge::Momentum);
            assert!(r < 1e-8, "t={t} residual {r}");
            let r = schrodinger_residual(0.9, &p, t, Window::centered(6), 1e-4, Gauge::Length);
            assert!(r < 1e-5, "t={t} residual {r}");
        }
    }

    #[test]
    fn lambda_values() {
        let p = DriveProtocol::dc(1.0, 1.0).unwrap();
        assert_eq!(invariant_lambda(&p, 0.0).lambda, c(0.0, 0.0));
        // −i·e^{iπ}·(−2i) = 2
        assert!((invariant_lambda(&p, PI).lambda - c(2.0, 0.0)).norm() < 1e-14);
        // λ̇ = i(fλ − g)
        let h = DriveProtocol::harmonic(1.0, 0.7, 1.4, 0.5).unwrap();
        for t in [0.3, 2.0, 5.5] {
            let dt = 1e-5;
            let deriv = (invariant_lambda(&h, t + dt).lambda - invariant_lambda(&h, t - dt).lambda) / (2.0 * dt);
            let rhs = c(0.0, 1.0) * (h.f(t) * invariant_lambda(&h, t).lambda - h.g(t));
            assert!((deriv - rhs).norm() < 1e-6);
        }
    }

    #[test]
    fn invariant_is_conserved() {
        let s = make_state(
            &InitialState::Explicit {
                n_min: -1,
                amplitudes: vec![c(0.4, 0.1), c(0.2, -0.5), c(0.6, 0.3), c(-0.1, 0.2)],
            },
            Window::centered(40),
        )
        .unwrap();
        let n0 = s.position_moments().0;
        for p in [
            DriveProtocol::dc(1.0, 0.8).unwrap(),
            DriveProtocol::harmonic(1.0, 1.5, 1.0, 0.6).unwrap(),
        ] {
            for t in [0.0, 0.3, 1.7, 2.0 * PI, 9.4] {
                let chk = invariant_expectation(&s, &p, t, &EvolveOptions::default()).unwrap();
                assert!((chk.value.k_form - n0).abs() < 1e-10);
                assert!((chk.value.cs_form - n0).abs() < 1e-10);
                assert_eq!(chk.initial, n0);
            }
        }
    }
}
