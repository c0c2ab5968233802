//! Direct integration of the lattice Schrödinger equation, used as the
//! referee for the closed forms.
//!
//! Open windows use the length gauge `Ĥ = Σ_m (g_m K̂^m + h.c.) + f_t N̂`
//! with hard walls. Rings use the momentum gauge
//! `Ĥ' = Σ_m (g_m e^{−imη_t} K̂^m + h.c.)`, with `η_t` carried as an extra
//! ODE component. Steps are classic RK4 with step-halving error control.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::drive::DriveProtocol;
use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeState, Window};
use crate::par::Exec;
use crate::propagator::SingleBandDispersion;
use crate::quad;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Step-doubling differences below this are rounding noise.
const ROUNDOFF: f64 = 1e-14;

/// Hamiltonian to integrate.
#[derive(Clone, Copy, Debug)]
pub enum OracleModel<'a> {
    /// Nearest-neighbour coupling `g_t` and field `f_t` from one protocol.
    TightBinding(&'a DriveProtocol),
    /// Constant couplings `g_m` with the field `f_t` of `field`.
    SingleBand {
        dispersion: &'a SingleBandDispersion,
        field: &'a DriveProtocol,
    },
}

impl OracleModel<'_> {
    fn field(&self) -> &DriveProtocol {
        match self {
            OracleModel::TightBinding(p) => p,
            OracleModel::SingleBand { field, .. } => field,
        }
    }

    /// `g_m(t)` for `m = 0..M`.
    fn couplings(&self, t: f64, out: &mut Vec<Complex64>) {
        out.clear();
        match self {
            OracleModel::TightBinding(p) => {
                out.push(ZERO);
                out.push(Complex64::new(p.g(t), 0.0));
            }
            OracleModel::SingleBand { dispersion, .. } => out.extend_from_slice(dispersion.couplings()),
        }
    }

    fn reach(&self) -> usize {
        match self {
            OracleModel::TightBinding(_) => 1,
            OracleModel::SingleBand { dispersion, .. } => dispersion.order(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub boundary: Boundary,
    /// Initial and largest step; `None` picks `T_B/2000`.
    pub dt: Option<f64>,
    /// Largest mass allowed in the guard sites of an open window.
    pub leak_tolerance: f64,
    /// Allowed step-halving error per unit time.
    pub error_tolerance: f64,
    /// Guard sites per edge, in units of the hopping range.
    pub guard: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            boundary: Boundary::Open,
            dt: None,
            leak_tolerance: 1e-8,
            error_tolerance: 1e-8,
            guard: 4,
        }
    }
}

impl OracleConfig {
    pub fn ring() -> Self {
        OracleConfig {
            boundary: Boundary::Ring,
            ..Self::default()
        }
    }

    fn validate(&self, window: Window) -> Result<()> {
        if window.len() < 3 {
            return Err(Error::InvalidOracleConfig("need at least 3 sites".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidOracleConfig("dt must be positive".into()));
            }
        }
        if !(self.error_tolerance > 0.0) || !(self.leak_tolerance >= 0.0) {
            return Err(Error::InvalidOracleConfig("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn initial_dt(&self, protocol: &DriveProtocol) -> f64 {
        self.dt.unwrap_or_else(|| {
            let tb = protocol.bloch_period().unwrap_or(2.0 * PI);
            tb.min(2.0 * PI) / 2000.0
        })
    }
}

/// Result of an oracle run.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRun {
    pub state: LatticeState,
    /// Largest mass seen in the guard sites (open windows; 0 on rings).
    pub leaked: f64,
    pub norm_drift: f64,
    pub steps: usize,
    pub rejected: usize,
}

/// `ψ(t)` from `ψ(0) = state0`.
pub fn integrate(state0: &LatticeState, model: OracleModel, t: f64, config: &OracleConfig) -> Result<OracleRun> {
    propagate(state0, model, 0.0, t, config)
}

/// `ψ(t₁)` from `ψ(t₀) = state0`.
pub fn propagate(
    state0: &LatticeState,
    model: OracleModel,
    t0: f64,
    t1: f64,
    config: &OracleConfig,
) -> Result<OracleRun> {
    let window = state0.window();
    config.validate(window)?;
    let len = window.len();
    let ring = config.boundary == Boundary::Ring;
    let field = model.field();

    let mut y: Vec<Complex64> = state0.amplitudes().to_vec();
    if ring {
        // η(t₀) by quadrature of f, then carried along by the integrator
        let eta0 = quad::integrate_real(|s| field.f(s), 0.0, t0, 1e-14);
        for (n, c) in window.sites().zip(y.iter_mut()) {
            *c *= Complex64::from_polar(1.0, eta0 * n as f64);
        }
        y.push(Complex64::new(eta0, 0.0));
    }
    let rhs = Rhs {
        model,
        window,
        ring,
        scratch: Vec::new(),
    };
    let guard = if ring { 0 } else { (config.guard * model.reach()).min(len / 2) };
    let norm0 = state0.norm_sqr();

    let mut stepper = Stepper::new(rhs, y.len());
    let dt_max = config.initial_dt(field);
    let mut dt = dt_max;
    let mut t = t0;
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut leaked: f64 = 0.0;
    let (mut steps, mut rejected) = (0, 0);
    let mut full = vec![ZERO; y.len()];
    let mut half = vec![ZERO; y.len()];
    while dir * (t1 - t) > 0.0 {
        let remaining = dir * (t1 - t);
        // absorb a sliver left by rounding into the current step
        let h = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt } * dir;
        stepper.rk4(&y, t, h, &mut full);
        stepper.rk4(&y, t, 0.5 * h, &mut half);
        let mid = half.clone();
        stepper.rk4(&mid, t + 0.5 * h, 0.5 * h, &mut half);
        let err = full
            .iter()
            .zip(&half)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if err <= config.error_tolerance * h.abs() + ROUNDOFF {
            std::mem::swap(&mut y, &mut half);
            t = if h.abs() == remaining { t1 } else { t + h };
            steps += 1;
            if guard > 0 {
                let edge: f64 = y[..guard]
                    .iter()
                    .chain(&y[len - guard..len])
                    .map(|c| c.norm_sqr())
                    .sum();
                leaked = leaked.max(edge);
                if leaked > config.leak_tolerance {
                    return Err(Error::WindowLeak {
                        leaked,
                        tolerance: config.leak_tolerance,
                    });
                }
            }
            if err < config.error_tolerance * h.abs() / 64.0 {
                dt = (2.0 * dt).min(dt_max);
            }
        } else {
            rejected += 1;
            dt *= 0.5;
            if dt < 1e-13 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, dt });
            }
        }
    }

    if ring {
        let eta = y.pop().unwrap().re;
        for (n, c) in window.sites().zip(y.iter_mut()) {
            *c *= Complex64::from_polar(1.0, -eta * n as f64);
        }
    }
    let state = LatticeState::from_raw(window, y)?;
    let norm_drift = (state.norm_sqr() - norm0).abs();
    Ok(OracleRun {
        state,
        leaked,
        norm_drift,
        steps,
        rejected,
    })
}

struct Rhs<'a> {
    model: OracleModel<'a>,
    window: Window,
    ring: bool,
    scratch: Vec<Complex64>,
}

impl Rhs<'_> {
    /// `out = −iĤ(t) y`
    fn eval(&mut self, t: f64, y: &[Complex64], out: &mut [Complex64]) {
        let len = self.window.len();
        self.model.couplings(t, &mut self.scratch);
        let f = self.model.field().f(t);
        let onsite = 2.0 * self.scratch[0].re;
        let minus_i = Complex64::new(0.0, -1.0);
        if self.ring {
            let eta = y[len].re;
            let hops: Vec<(usize, Complex64)> = self
                .scratch
                .iter()
                .enumerate()
                .skip(1)
                .filter(|(_, g)| g.norm() > 0.0)
                .map(|(m, g)| (m % len, g * Complex64::from_polar(1.0, -(m as f64) * eta)))
                .collect();
            for k in 0..len {
                let mut acc = onsite * y[k];
                for &(m, g) in &hops {
                    acc += g * y[(k + m) % len] + g.conj() * y[(k + len - m) % len];
                }
                out[k] = minus_i * acc;
            }
            out[len] = Complex64::new(f, 0.0);
        } else {
            let n_min = self.window.n_min();
            for k in 0..len {
                let mut acc = (onsite + f * (n_min + k as i64) as f64) * y[k];
                for (m, g) in self.scratch.iter().enumerate().skip(1) {
                    if k + m < len {
                        acc += g * y[k + m];
                    }
                    if k >= m {
                        acc += g.conj() * y[k - m];
                    }
                }
                out[k] = minus_i * acc;
            }
        }
    }
}

struct Stepper<'a> {
    rhs: Rhs<'a>,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

impl<'a> Stepper<'a> {
    fn new(rhs: Rhs<'a>, n: usize) -> Self {
        Stepper {
            rhs,
            k: [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]],
            tmp: vec![ZERO; n],
        }
    }

    fn rk4(&mut self, y: &[Complex64], t: f64, h: f64, out: &mut [Complex64]) {
        let [k1, k2, k3, k4] = &mut self.k;
        self.rhs.eval(t, y, k1);
        axpy(&mut self.tmp, y, 0.5 * h, k1);
        self.rhs.eval(t + 0.5 * h, &self.tmp, k2);
        axpy(&mut self.tmp, y, 0.5 * h, k2);
        self.rhs.eval(t + 0.5 * h, &self.tmp, k3);
        axpy(&mut self.tmp, y, h, k3);
        self.rhs.eval(t + h, &self.tmp, k4);
        for i in 0..y.len() {
            out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

fn axpy(out: &mut [Complex64], y: &[Complex64], a: f64, k: &[Complex64]) {
    for i in 0..y.len() {
        out[i] = y[i] + a * k[i];
    }
}

/// Eigenphases of the one-period propagator on a ring.
#[derive(Clone, Debug, PartialEq)]
pub struct MonodromySpectrum {
    pub period: f64,
    /// `(κ_j, ε_j)`, `κ_j = 2πj/L`, `ε_j ∈ (−π/T, π/T]`.
    pub bands: Vec<(f64, f64)>,
    /// `‖U†U − 1‖_F`
    pub unitarity_defect: f64,
    /// Largest off-diagonal element of `U` in the ring Bloch basis.
    pub offdiagonal: f64,
}

/// Builds `Û(T)` column by column on an `L`-site ring and reads off the
/// quasienergies `ε = −arg⟨κ|Û(T)|κ⟩/T`.
pub fn monodromy_spectrum(
    protocol: &DriveProtocol,
    sites: usize,
    config: &OracleConfig,
    exec: Exec,
) -> Result<MonodromySpectrum> {
    if sites < 8 {
        return Err(Error::InvalidOracleConfig("monodromy needs at least 8 ring sites".into()));
    }
    let period = protocol.period().ok_or(Error::Aperiodic)?;
    let window = Window::new(0, sites as i64 - 1)?;
    let config = OracleConfig {
        boundary: Boundary::Ring,
        ..*config
    };
    let columns = exec.map_range(sites, |j| {
        let mut amps = vec![ZERO; sites];
        amps[j] = Complex64::new(1.0, 0.0);
        let e = LatticeState::from_raw(window, amps)?;
        integrate(&e, OracleModel::TightBinding(protocol), period, &config).map(|r| r.state.into_amplitudes())
    });
    let columns: Vec<Vec<Complex64>> = columns.into_iter().collect::<Result<_>>()?;

    // u[i][j] = U_{ij} = columns[j][i]
    let mut defect = 0.0;
    for a in 0..sites {
        for b in 0..sites {
            let dot: Complex64 = (0..sites).map(|i| columns[a][i].conj() * columns[b][i]).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            defect += (dot - want).norm_sqr();
        }
    }
    let defect = defect.sqrt();
    if defect > 1e-7 {
        return Err(Error::NonUnitary { defect });
    }

    // ⟨κ_a|U|κ_b⟩ = (1/L) Σ_{n,n'} e^{−inκ_a} U_{nn'} e^{in'κ_b}
    let kappa = |j: usize| 2.0 * PI * j as f64 / sites as f64;
    let bloch = exec.map_range(sites, |a| {
        (0..sites)
            .map(|b| {
                let mut acc = ZERO;
                for (np, col) in columns.iter().enumerate() {
                    let right = Complex64::from_polar(1.0, np as f64 * kappa(b));
                    for (n, u) in col.iter().enumerate() {
                        acc += Complex64::from_polar(1.0, -(n as f64) * kappa(a)) * u * right;
                    }
                }
                acc / sites as f64
            })
            .collect::<Vec<_>>()
    });
    let mut offdiagonal: f64 = 0.0;
    let mut bands = Vec::with_capacity(sites);
    for (a, row) in bloch.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            if a != b {
                offdiagonal = offdiagonal.max(v.norm());
            }
        }
        let eps = -row[a].arg() / period;
        bands.push((kappa(a), wrap_quasienergy(eps, period)));
    }
    Ok(MonodromySpectrum {
        period,
        bands,
        unitarity_defect: defect,
        offdiagonal,
    })
}

/// Maps `ε` into `(−π/T, π/T]`.
pub fn wrap_quasienergy(eps: f64, period: f64) -> f64 {
    let zone = 2.0 * PI / period;
    let mut e = eps.rem_euclid(zone);
    if e > 0.5 * zone {
        e -= zone;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_state, InitialState};
    use crate::propagator::{evolve, evolve_single_band, CommutatorConvention, EvolveOptions};
    use crate::special::bessel_j;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn static_identity() {
        let p = DriveProtocol::dc(0.0, 0.0).unwrap();
        let s = make_state(&InitialState::SingleSite { site: 1 }, Window::centered(10)).unwrap();
        let run = integrate(&s, OracleModel::TightBinding(&p), 3.0, &OracleConfig::default()).unwrap();
        assert!(run.state.max_deviation(&s) < 1e-15);
    }

    #[test]
    fn bloch_revival() {
        let p = DriveProtocol::dc(1.0, 1.0).unwrap();
        let s = make_state(&InitialState::SingleSite { site: 0 }, Window::centered(24)).unwrap();
        let run = integrate(&s, OracleModel::TightBinding(&p), 2.0 * PI, &OracleConfig::default()).unwrap();
        assert!(run.state.overlap(&s).norm() > 1.0 - 1e-7);
        assert!(run.norm_drift < 1e-9);
    }

    #[test]
    fn free_populations() {
        let p = DriveProtocol::dc(0.0, 1.0).unwrap();
        let s = make_state(&InitialState::SingleSite { site: 0 }, Window::centered(24)).unwrap();
        let run = integrate(&s, OracleModel::TightBinding(&p), 1.0, &OracleConfig::default()).unwrap();
        for n in -8..=8 {
            let want = bessel_j(n, 2.0).unwrap().powi(2);
            assert!((run.state.amplitude(n).norm_sqr() - want).abs() < 1e-7);
        }
    }

    #[test]
    fn matches_closed_form() {
        let p = DriveProtocol::harmonic(1.2, 1.5, 1.0, 0.4).unwrap();
        let s = make_state(
            &InitialState::Gaussian {
                center: 2.0,
                sigma: 1.5,
                kappa0: 0.5,
            },
            Window::centered(40),
        )
        .unwrap();
        let t = 7.0;
        let run = integrate(&s, OracleModel::TightBinding(&p), t, &OracleConfig::default()).unwrap();
        let exact = evolve(&s, &p, t, &EvolveOptions::default()).unwrap();
        assert!(run.state.max_deviation(&exact.state) < 1e-6);
        // ring in the momentum gauge gives the same answer away from the seam
        let ring = integrate(&s, OracleModel::TightBinding(&p), t, &OracleConfig::ring()).unwrap();
        assert!(ring.state.max_deviation(&exact.state) < 1e-6);
    }

    #[test]
    fn propagate_from_midpoint() {
        let p = DriveProtocol::harmonic(1.0, 0.8, 1.3, 0.5).unwrap();
        let s = make_state(&InitialState::SingleSite { site: 0 }, Window::centered(30)).unwrap();
        for cfg in [OracleConfig::default(), OracleConfig::ring()] {
            let whole = integrate(&s, OracleModel::TightBinding(&p), 5.0, &cfg).unwrap().state;
            let first = integrate(&s, OracleModel::TightBinding(&p), 2.0, &cfg).unwrap().state;
            let rest = propagate(&first, OracleModel::TightBinding(&p), 2.0, 5.0, &cfg).unwrap().state;
            assert!(whole.max_deviation(&rest) < 1e-7);
        }
    }

    #[test]
    fn self_convergence() {
        let p = DriveProtocol::harmonic(1.0, 1.0, 1.0, 0.5).unwrap();
        let s = make_state(&InitialState::SingleSite { site: 0 }, Window::centered(30)).unwrap();
        let coarse = integrate(&s, OracleModel::TightBinding(&p), 4.0, &OracleConfig::default()).unwrap();
        let fine_cfg = OracleConfig {
            error_tolerance: 1e-11,
            ..OracleConfig::default()
        };
        let fine = integrate(&s, OracleModel::TightBinding(&p), 4.0, &fine_cfg).unwrap();
        assert!(coarse.state.max_deviation(&fine.state) < 1e-8);
    }

    #[test]
    fn leak_is_an_error() {
        let p = DriveProtocol::dc(0.0, 1.0).unwrap();
        let s = make_state(&InitialState::SingleSite { site: 0 }, Window::centered(8)).unwrap();
        let err = integrate(&s, OracleModel::TightBinding(&p), 5.0, &OracleConfig::default()).unwrap_err();
        assert!(matches!(err, Error::WindowLeak { .. }));
    }

    #[test]
    fn config_validation() {
        let p = DriveProtocol::dc(0.0, 1.0).unwrap();
        let tiny = make_state(&InitialState::SingleSite { site: 0 }, Window::new(0, 1).unwrap()).unwrap();
        assert!(integrate(&tiny, OracleModel::TightBinding(&p), 1.0, &OracleConfig::default()).is_err());
        let s = make_state(&InitialState::SingleSite { site: 0 }, Window::centered(8)).unwrap();
        let bad = OracleConfig {
            dt: Some(-1.0),
            ..OracleConfig::default()
        };
        assert!(matches!(
            integrate(&s, OracleModel::TightBinding(&p), 1.0, &bad),
            Err(Error::InvalidOracleConfig(_))
        ));
    }

    #[test]
    fn single_band_matches_closed_form() {
        let disp = SingleBandDispersion::new(vec![c(0.05, 0.0), c(0.3, 0.0), c(0.1, 0.05), c(0.2, 0.0)]).unwrap();
        let field = DriveProtocol::dc(0.8, 0.0).unwrap();
        let s = make_state(&InitialState::SingleSite { site: 0 }, Window::centered(50)).unwrap();
        let t = 3.0;
        let run = integrate(
            &s,
            OracleModel::SingleBand {
                dispersion: &disp,
                field: &field,
            },
            t,
            &OracleConfig::default(),
        )
        .unwrap();
        let good = evolve_single_band(&s, &disp, &field, t, CommutatorConvention::Ladder, &EvolveOptions::default())
            .unwrap();
        let bad = evolve_single_band(&s, &disp, &field, t, CommutatorConvention::PowerOfTwo, &EvolveOptions::default())
            .unwrap();
        assert!(run.state.max_deviation(&good.state) < 1e-6);
        assert!(run.state.max_deviation(&bad.state) > 1e-2);
    }

    #[test]
    fn monodromy_flat_band() {
        let p = DriveProtocol::harmonic(1.0, 0.0, 1.0, 0.3).unwrap();
        let spec = monodromy_spectrum(&p, 16, &OracleConfig::default(), Exec::default()).unwrap();
        for (_, e) in &spec.bands {
            assert!(e.abs() < 1e-6);
        }
        assert!(spec.unitarity_defect < 1e-7);
    }

    #[test]
    fn monodromy_matches_band() {
        let p = DriveProtocol::harmonic(1.0, 1.0, 1.0, 0.25).unwrap();
        let spec = monodromy_spectrum(&p, 16, &OracleConfig::default(), Exec::default()).unwrap();
        let a1 = 0.25 * bessel_j(1, 1.0).unwrap();
        for (k, e) in &spec.bands {
            assert!((e - 2.0 * a1 * k.cos()).abs() < 1e-4, "k={k}");
        }
        assert!(spec.offdiagonal < 1e-6);
    }

    #[test]
    fn wrapping() {
        let t = 2.0 * PI;
        assert!((wrap_quasienergy(0.9, t) - (-0.1)).abs() < 1e-15);
        assert!((wrap_quasienergy(-0.3, t) + 0.3).abs() < 1e-15);
    }
}
