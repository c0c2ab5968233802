//! Pure states on a finite window of the one-dimensional lattice, the
//! shift-operator action, Bloch transforms and the coherence functionals
//! of an initial state.
//!
//! Conventions: sites are integers (`N̂|n⟩ = n|n⟩`), the shift operator acts
//! as `K̂|n⟩ = |n−1⟩`, and Bloch states are `|κ⟩ = (2π)^{-1/2} Σ e^{inκ}|n⟩`
//! so that `K̂|κ⟩ = e^{iκ}|κ⟩`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Gaussian mass that a window may leave out before `make_state` refuses it.
pub const GAUSSIAN_MASS_TOLERANCE: f64 = 1e-8;

/// Inclusive site interval `[n_min, n_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Window {
    n_min: i64,
    n_max: i64,
}

impl Window {
    pub fn new(n_min: i64, n_max: i64) -> Result<Self> {
        if n_max < n_min {
            return Err(Error::InvalidWindow { n_min, n_max });
        }
        Ok(Window { n_min, n_max })
    }

    /// `[-half, half]`, i.e. `2·half + 1` sites.
    pub fn centered(half: u32) -> Self {
        Window {
            n_min: -(half as i64),
            n_max: half as i64,
        }
    }

    pub fn n_min(&self) -> i64 {
        self.n_min
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.n_min && n <= self.n_max
    }

    pub fn index(&self, n: i64) -> Option<usize> {
        self.contains(n).then(|| (n - self.n_min) as usize)
    }

    pub fn site(&self, index: usize) -> i64 {
        self.n_min + index as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.n_min..=self.n_max
    }

    /// Window grown by `pad` sites on both sides.
    pub fn padded(&self, pad: usize) -> Self {
        Window {
            n_min: self.n_min - pad as i64,
            n_max: self.n_max + pad as i64,
        }
    }
}

/// Boundary treatment of a finite window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Hard truncation: amplitude leaving the window is lost.
    Open,
    /// Periodic identification of the window ends.
    Ring,
}

/// Complex amplitudes `c_n` on a window.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState {
    window: Window,
    amps: Vec<Complex64>,
}

impl LatticeState {
    /// Wraps amplitudes as given (no normalisation).
    pub fn from_raw(window: Window, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != window.len() {
            return Err(Error::InvalidWindow {
                n_min: window.n_min,
                n_max: window.n_max,
            });
        }
        Ok(LatticeState { window, amps })
    }

    /// Wraps and normalises amplitudes.
    pub fn normalized(window: Window, amps: Vec<Complex64>) -> Result<Self> {
        let mut s = Self::from_raw(window, amps)?;
        let norm = s.norm_sqr();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let scale = 1.0 / norm.sqrt();
        s.amps.iter_mut().for_each(|c| *c *= scale);
        Ok(s)
    }

    pub fn zeros(window: Window) -> Self {
        LatticeState {
            window,
            amps: vec![ZERO; window.len()],
        }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    /// `c_n`, zero outside the window.
    pub fn amplitude(&self, n: i64) -> Complex64 {
        self.window.index(n).map_or(ZERO, |i| self.amps[i])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Site populations `p_n = |c_n|²`.
    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `⟨N̂⟩` and `⟨N̂²⟩ − ⟨N̂⟩²`.
    pub fn position_moments(&self) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (n, c) in self.window.sites().zip(&self.amps) {
            let p = c.norm_sqr();
            m1 += n as f64 * p;
            m2 += (n * n) as f64 * p;
        }
        (m1, m2 - m1 * m1)
    }

    /// `⟨self|other⟩` over the common sites.
    pub fn overlap(&self, other: &LatticeState) -> Complex64 {
        self.window
            .sites()
            .zip(&self.amps)
            .map(|(n, c)| c.conj() * other.amplitude(n))
            .sum()
    }

    /// Largest `|c_n − c'_n|` over the union of both windows.
    pub fn max_deviation(&self, other: &LatticeState) -> f64 {
        let lo = self.window.n_min.min(other.window.n_min);
        let hi = self.window.n_max.max(other.window.n_max);
        (lo..=hi)
            .map(|n| (self.amplitude(n) - other.amplitude(n)).norm())
            .fold(0.0, f64::max)
    }

    /// Copies the state onto another window; returns the state and the
    /// probability that fell outside it.
    pub fn restricted_to(&self, window: Window) -> (LatticeState, f64) {
        let amps: Vec<Complex64> = window.sites().map(|n| self.amplitude(n)).collect();
        let out = LatticeState { window, amps };
        let lost = (self.norm_sqr() - out.norm_sqr()).max(0.0);
        (out, lost)
    }

    /// Multiplies every amplitude by a global phase factor.
    pub fn scaled(mut self, factor: Complex64) -> Self {
        self.amps.iter_mut().for_each(|c| *c *= factor);
        self
    }
}

/// Descriptor of an initial state.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    SingleSite { site: i64 },
    /// `c_n ∝ exp(−(n−center)²/(4σ²) + iκ₀n)`; `σ` is the position spread.
    Gaussian { center: f64, sigma: f64, kappa0: f64 },
    /// Amplitudes starting at site `n_min`; normalised on construction.
    Explicit { n_min: i64, amplitudes: Vec<Complex64> },
}

/// Prepares a normalised state on `window`.
pub fn make_state(spec: &InitialState, window: Window) -> Result<LatticeState> {
    match spec {
        InitialState::SingleSite { site } => {
            let idx = window.index(*site).ok_or(Error::SiteOutsideWindow {
                n: *site,
                n_min: window.n_min,
                n_max: window.n_max,
            })?;
            let mut s = LatticeState::zeros(window);
            s.amps[idx] = Complex64::new(1.0, 0.0);
            Ok(s)
        }
        InitialState::Gaussian {
            center,
            sigma,
            kappa0,
        } => {
            if !(*sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidWidth(*sigma));
            }
            let weight = |n: i64| (-(n as f64 - center).powi(2) / (2.0 * sigma * sigma)).exp();
            let reach = 40.0 * sigma + 10.0;
            let lo = (center - reach).floor() as i64;
            let hi = (center + reach).ceil() as i64;
            let total: f64 = (lo..=hi).map(weight).sum();
            let inside: f64 = window.sites().map(weight).sum();
            let missing = ((total - inside) / total).max(0.0);
            if missing > GAUSSIAN_MASS_TOLERANCE {
                return Err(Error::WindowTooSmall {
                    n_min: window.n_min,
                    n_max: window.n_max,
                    missing,
                });
            }
            let amps = window
                .sites()
                .map(|n| Complex64::from_polar(weight(n).sqrt(), kappa0 * n as f64))
                .collect();
            LatticeState::normalized(window, amps)
        }
        InitialState::Explicit { n_min, amplitudes } => {
            if amplitudes.is_empty() {
                return Err(Error::ZeroNorm);
            }
            let own = Window::new(*n_min, n_min + amplitudes.len() as i64 - 1)?;
            let src = LatticeState::normalized(own, amplitudes.clone())?;
            let (out, lost) = src.restricted_to(window);
            if lost > 0.0 {
                return Err(Error::WindowTooSmall {
                    n_min: window.n_min,
                    n_max: window.n_max,
                    missing: lost,
                });
            }
            Ok(out)
        }
    }
}

/// Result of an operation that can push amplitude out of the window.
#[derive(Clone, Debug, PartialEq)]
pub struct Leaky {
    pub state: LatticeState,
    pub leaked: f64,
}

/// `K̂^m ψ` on an open window: `c'_n = c_{n+m}`. Amplitude pushed past the
/// window edge is dropped and reported.
pub fn apply_shift(state: &LatticeState, m: i64) -> Result<Leaky> {
    let len = state.window.len();
    if m.unsigned_abs() as usize > len {
        return Err(Error::ShiftTooLarge { shift: m, len });
    }
    let amps: Vec<Complex64> = state.window.sites().map(|n| state.amplitude(n + m)).collect();
    let out = LatticeState {
        window: state.window,
        amps,
    };
    let leaked = (state.norm_sqr() - out.norm_sqr()).max(0.0);
    Ok(Leaky { state: out, leaked })
}

/// `K̂^m ψ` with the window closed into a ring.
pub fn apply_shift_ring(state: &LatticeState, m: i64) -> LatticeState {
    let len = state.window.len() as i64;
    let amps = (0..len)
        .map(|i| state.amps[(i + m).rem_euclid(len) as usize])
        .collect();
    LatticeState {
        window: state.window,
        amps,
    }
}

/// `ψ(κ_j) = ⟨κ_j|ψ⟩` on the grid `κ_j = −π + 2πj/M`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochAmplitudes {
    values: Vec<Complex64>,
}

impl BlochAmplitudes {
    pub fn from_values(values: Vec<Complex64>) -> Self {
        BlochAmplitudes { values }
    }

    pub fn grid_len(&self) -> usize {
        self.values.len()
    }

    pub fn kappa(&self, j: usize) -> f64 {
        bloch_grid_point(j, self.values.len())
    }

    pub fn kappas(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| self.kappa(j)).collect()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Value at grid index `j`, wrapped periodically.
    pub fn at(&self, j: i64) -> Complex64 {
        self.values[j.rem_euclid(self.values.len() as i64) as usize]
    }

    /// `(2π/M) Σ |ψ(κ_j)|²`.
    pub fn norm_sqr(&self) -> f64 {
        let m = self.values.len() as f64;
        2.0 * PI / m * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }
}

pub fn bloch_grid_point(j: usize, grid: usize) -> f64 {
    -PI + 2.0 * PI * j as f64 / grid as f64
}

/// Forward Bloch transform on an `M`-point grid (`M ≥` window length).
pub fn bloch_transform(state: &LatticeState, grid: usize) -> Result<BlochAmplitudes> {
    let len = state.window.len();
    if grid < len {
        return Err(Error::BlochGridTooSmall { grid, len });
    }
    let mut buf = vec![ZERO; grid];
    for (k, c) in state.amps.iter().enumerate() {
        buf[k] = if k % 2 == 0 { *c } else { -*c };
    }
    FftPlanner::new().plan_fft_forward(grid).process(&mut buf);
    let scale = 1.0 / (2.0 * PI).sqrt();
    let n_min = state.window.n_min as f64;
    for (j, v) in buf.iter_mut().enumerate() {
        let kappa = bloch_grid_point(j, grid);
        *v *= Complex64::from_polar(scale, -n_min * kappa);
    }
    Ok(BlochAmplitudes { values: buf })
}

/// Inverse of [`bloch_transform`] onto `window`.
pub fn inverse_bloch(bloch: &BlochAmplitudes, window: Window) -> Result<LatticeState> {
    let grid = bloch.values.len();
    let len = window.len();
    if grid < len {
        return Err(Error::BlochGridTooSmall { grid, len });
    }
    let n_min = window.n_min as f64;
    let mut buf: Vec<Complex64> = bloch
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| v * Complex64::from_polar(1.0, n_min * bloch_grid_point(j, grid)))
        .collect();
    FftPlanner::new().plan_fft_inverse(grid).process(&mut buf);
    let scale = (2.0 * PI).sqrt() / grid as f64;
    let amps = buf
        .iter()
        .take(len)
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { v * scale } else { -v * scale })
        .collect();
    Ok(LatticeState { window, amps })
}

/// `⟨K̂^m⟩ = Σ_n c*_{n−m} c_n` (for `m ≥ 0`; negative `m` gives `⟨K̂†^{|m|}⟩`).
pub fn shift_moment(state: &LatticeState, m: i64) -> Complex64 {
    state
        .window
        .sites()
        .zip(&state.amps)
        .map(|(n, c)| state.amplitude(n - m).conj() * c)
        .sum()
}

/// Index of Ĉ, Ŝ, N̂ in [`CoherenceParameters::cov`].
pub const IDX_C: usize = 0;
pub const IDX_S: usize = 1;
pub const IDX_N: usize = 2;

/// Initial-state data that fixes every first and second moment of the
/// closed-form dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherenceParameters {
    /// `⟨K̂⟩₀`
    pub k: Complex64,
    /// `⟨[N̂, K̂]₊⟩₀`
    pub j: Complex64,
    /// `⟨K̂²⟩₀`
    pub l: Complex64,
    pub n_mean: f64,
    pub n2_mean: f64,
    /// `⟨Ĉ⟩₀ = Re K`
    pub mean_c: f64,
    /// `⟨Ŝ⟩₀ = Im K`
    pub mean_s: f64,
    /// Symmetrised covariances `Δ²_AB` for A, B ∈ {C, S, N}.
    pub cov: [[f64; 3]; 3],
}

impl CoherenceParameters {
    pub fn var_n(&self) -> f64 {
        self.cov[IDX_N][IDX_N]
    }

    pub fn cov_cc(&self) -> f64 {
        self.cov[IDX_C][IDX_C]
    }

    pub fn cov_ss(&self) -> f64 {
        self.cov[IDX_S][IDX_S]
    }

    pub fn cov_cs(&self) -> f64 {
        self.cov[IDX_C][IDX_S]
    }

    pub fn cov_cn(&self) -> f64 {
        self.cov[IDX_C][IDX_N]
    }

    pub fn cov_sn(&self) -> f64 {
        self.cov[IDX_S][IDX_N]
    }

    /// `⟨Ĉ²⟩₀`
    pub fn mean_c2(&self) -> f64 {
        0.5 * (1.0 + self.l.re)
    }

    /// `⟨Ŝ²⟩₀`
    pub fn mean_s2(&self) -> f64 {
        0.5 * (1.0 - self.l.re)
    }

    /// `Δ²_K = |⟨K̂²⟩ − ⟨K̂⟩²|`
    pub fn var_k(&self) -> f64 {
        (self.l - self.k * self.k).norm()
    }
}

/// Coherence parameters `K`, `J`, `L`, position moments and the C/S/N
/// covariance matrix of a normalised state.
pub fn coherence_parameters(state: &LatticeState) -> CoherenceParameters {
    let mut k = ZERO;
    let mut j = ZERO;
    let mut l = ZERO;
    let mut n_mean = 0.0;
    let mut n2_mean = 0.0;
    for (n, c) in state.window.sites().zip(&state.amps) {
        let prev = state.amplitude(n - 1).conj() * c;
        k += prev;
        j += prev * (2 * n - 1) as f64;
        l += state.amplitude(n - 2).conj() * c;
        let p = c.norm_sqr();
        n_mean += n as f64 * p;
        n2_mean += (n * n) as f64 * p;
    }
    let mean_c = k.re;
    let mean_s = k.im;
    // ½⟨[N̂,Ĉ]₊⟩ = Re J / 2 and ½⟨[N̂,Ŝ]₊⟩ = Im J / 2; ⟨ĈŜ⟩ = Im L / 2
    let cc = 0.5 * (1.0 + l.re) - mean_c * mean_c;
    let ss = 0.5 * (1.0 - l.re) - mean_s * mean_s;
    let cs = 0.5 * l.im - mean_c * mean_s;
    let cn = 0.5 * j.re - mean_c * n_mean;
    let sn = 0.5 * j.im - mean_s * n_mean;
    let nn = n2_mean - n_mean * n_mean;
    CoherenceParameters {
        k,
        j,
        l,
        n_mean,
        n2_mean,
        mean_c,
        mean_s,
        cov: [[cc, cs, cn], [cs, ss, sn], [cn, sn, nn]],
    }
}
