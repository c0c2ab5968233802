//! Classical counterpart `H = 2G cos(pδ) + Fq/d`.
//!
//! With `θ = pδ` and `N = q/d` the equations of motion are
//! `θ̇ = −f_t`, `Ṅ = −2g_t sin θ`, solved exactly by
//! `θ_t = θ₀ − η_t`, `N_t = N₀ + v_t cos θ₀ − u_t sin θ₀`,
//! the same linear map as the Heisenberg operators `Ĉ, Ŝ, N̂`.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::drive::DriveProtocol;
use crate::error::{Error, Result};
use crate::lattice::{bloch_transform, coherence_parameters, LatticeState, IDX_C, IDX_N, IDX_S};
use crate::par::Exec;

/// Samples per independently seeded chunk and per partial sum.
const CHUNK: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalState {
    /// Momentum in units of `ħ/d`.
    pub p: f64,
    /// Position in units of `d`.
    pub q: f64,
}

/// `δ = d/ħ`; 1 in reduced units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalModel {
    pub delta: f64,
}

impl Default for ClassicalModel {
    fn default() -> Self {
        ClassicalModel { delta: 1.0 }
    }
}

impl ClassicalModel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidEnsemble("delta must be positive".into()));
        }
        Ok(ClassicalModel { delta })
    }

    pub fn theta(&self, s: &ClassicalState) -> f64 {
        s.p * self.delta
    }

    /// Exact flow from `0` to `t`.
    pub fn trajectory(&self, s0: &ClassicalState, protocol: &DriveProtocol, t: f64) -> ClassicalState {
        let (u, v) = protocol.uv(t);
        self.flow(s0, protocol.eta(t), u, v)
    }

    fn flow(&self, s0: &ClassicalState, eta: f64, u: f64, v: f64) -> ClassicalState {
        let (sin, cos) = self.theta(s0).sin_cos();
        ClassicalState {
            p: s0.p - eta / self.delta,
            q: s0.q + v * cos - u * sin,
        }
    }

    /// `∂(p_t, q_t)/∂(p₀, q₀)`; its determinant is 1.
    pub fn jacobian(&self, s0: &ClassicalState, protocol: &DriveProtocol, t: f64) -> [[f64; 2]; 2] {
        let (u, v) = protocol.uv(t);
        let (sin, cos) = self.theta(s0).sin_cos();
        [[1.0, 0.0], [-self.delta * (v * sin + u * cos), 1.0]]
    }

    /// `(ṗ, q̇) = (−f/δ, −2g sin(pδ))`.
    pub fn velocity(&self, s: &ClassicalState, protocol: &DriveProtocol, t: f64) -> (f64, f64) {
        (
            -protocol.f(t) / self.delta,
            -2.0 * protocol.g(t) * self.theta(s).sin(),
        )
    }

    /// `q + (u sin η − v cos η) cos(pδ) + (u cos η + v sin η) sin(pδ)`,
    /// equal to `q₀` along any trajectory.
    pub fn invariant(&self, s: &ClassicalState, protocol: &DriveProtocol, t: f64) -> f64 {
        let (u, v) = protocol.uv(t);
        let (se, ce) = protocol.eta(t).sin_cos();
        let (sin, cos) = self.theta(s).sin_cos();
        s.q + (u * se - v * ce) * cos + (u * ce + v * se) * sin
    }
}

pub fn trajectory(s0: &ClassicalState, protocol: &DriveProtocol, t: f64) -> ClassicalState {
    ClassicalModel::default().trajectory(s0, protocol, t)
}

pub fn classical_invariant(s: &ClassicalState, protocol: &DriveProtocol, t: f64) -> f64 {
    ClassicalModel::default().invariant(s, protocol, t)
}

/// Weighted phase-space samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalEnsemble {
    samples: Vec<ClassicalState>,
    weights: Vec<f64>,
}

impl ClassicalEnsemble {
    /// Weights must be non-negative and sum to 1 within `1e-12`.
    pub fn new(samples: Vec<ClassicalState>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if samples.len() != weights.len() {
            return Err(Error::InvalidEnsemble("samples and weights differ in length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidEnsemble("weights must be finite and non-negative".into()));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble(format!("weights sum to {total}, not 1")));
        }
        Ok(ClassicalEnsemble { samples, weights })
    }

    pub fn uniform(samples: Vec<ClassicalState>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let w = 1.0 / samples.len() as f64;
        let weights = vec![w; samples.len()];
        Ok(ClassicalEnsemble { samples, weights })
    }

    pub fn samples(&self) -> &[ClassicalState] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 64 {
        x.iter().sum()
    } else {
        let (a, b) = x.split_at(x.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Weighted moments of `N_t = q_t/d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleMoments {
    pub mean: f64,
    pub var: f64,
    /// Standard error of `mean`, `(Σ w²(N − mean)²)^{1/2}`.
    pub std_err: f64,
}

/// Moments of the ensemble evolved to `t`. Partial sums run over fixed
/// chunks, so the result does not depend on `exec`.
pub fn ensemble_moments(
    model: &ClassicalModel,
    ensemble: &ClassicalEnsemble,
    protocol: &DriveProtocol,
    t: f64,
    exec: Exec,
) -> Result<EnsembleMoments> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let (u, v) = protocol.uv(t);
    let eta = protocol.eta(t);
    let n_chunks = ensemble.len().div_ceil(CHUNK);
    let range = |c: usize| c * CHUNK..((c + 1) * CHUNK).min(ensemble.len());
    let q = |i: usize| model.flow(&ensemble.samples[i], eta, u, v).q;

    let partial_mean = exec.map_range(n_chunks, |c| range(c).map(|i| ensemble.weights[i] * q(i)).sum::<f64>());
    let mean: f64 = partial_mean.iter().sum();
    let partial_dev = exec.map_range(n_chunks, |c| {
        range(c).fold((0.0, 0.0), |(var, se), i| {
            let w = ensemble.weights[i];
            let d = q(i) - mean;
            (var + w * d * d, se + w * w * d * d)
        })
    });
    let (var, se2) = partial_dev
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(EnsembleMoments {
        mean,
        var,
        std_err: se2.sqrt(),
    })
}

/// Draws `count` samples whose `(cos θ, sin θ, N)` first and second
/// moments match the quantum state's `(Ĉ, Ŝ, N̂)`.
///
/// `θ` comes from `|ψ(κ)|²` on a Bloch grid fine enough that all
/// `⟨e^{ikθ}⟩`, `|k| ≤ 2`, are exact. `N` is the linear regression on
/// `(C, S)` plus Gaussian noise carrying the residual variance.
pub fn sample_matched(
    state: &LatticeState,
    model: &ClassicalModel,
    count: usize,
    seed: u64,
    exec: Exec,
) -> Result<ClassicalEnsemble> {
    if count == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let grid = (state.window().len() + 2).max(64);
    let bloch = bloch_transform(state, grid)?;
    let probs: Vec<f64> = bloch.values().iter().map(|v| v.norm_sqr()).collect();
    let kappas = bloch.kappas();
    let index = WeightedIndex::new(&probs).map_err(|e| Error::InvalidEnsemble(e.to_string()))?;

    let coh = coherence_parameters(state);
    let cov = coh.cov;
    let (beta_c, beta_s) = regression(
        [[cov[IDX_C][IDX_C], cov[IDX_C][IDX_S]], [cov[IDX_S][IDX_C], cov[IDX_S][IDX_S]]],
        [cov[IDX_C][IDX_N], cov[IDX_S][IDX_N]],
    );
    let explained = beta_c * cov[IDX_C][IDX_N] + beta_s * cov[IDX_S][IDX_N];
    let noise = (cov[IDX_N][IDX_N] - explained).max(0.0).sqrt();

    let n_chunks = count.div_ceil(CHUNK);
    let chunks = exec.map_range(n_chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = CHUNK.min(count - c * CHUNK);
        (0..len)
            .map(|_| {
                let theta = kappas[index.sample(&mut rng)];
                let z: f64 = StandardNormal.sample(&mut rng);
                let (s, co) = theta.sin_cos();
                let n = coh.n_mean + beta_c * (co - coh.mean_c) + beta_s * (s - coh.mean_s) + noise * z;
                ClassicalState {
                    p: theta / model.delta,
                    q: n,
                }
            })
            .collect::<Vec<_>>()
    });
    ClassicalEnsemble::uniform(chunks.into_iter().flatten().collect())
}

/// Solves the 2×2 normal equations, dropping directions with (numerically)
/// zero variance.
fn regression(a: [[f64; 2]; 2], b: [f64; 2]) -> (f64, f64) {
    let tr = a[0][0] + a[1][1];
    if tr <= 0.0 {
        return (0.0, 0.0);
    }
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det > 1e-12 * tr * tr {
        return (
            (a[1][1] * b[0] - a[0][1] * b[1]) / det,
            (a[0][0] * b[1] - a[1][0] * b[0]) / det,
        );
    }
    // rank one: project onto the dominant eigenvector
    let half = 0.5 * (a[0][0] - a[1][1]);
    let lam = 0.5 * tr + (half * half + a[0][1] * a[0][1]).sqrt();
    let (ex, ey) = if a[0][1].abs() > 0.0 {
        let (x, y) = (a[0][1], lam - a[0][0]);
        let r = x.hypot(y);
        (x / r, y / r)
    } else if a[0][0] >= a[1][1] {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let coef = (ex * b[0] + ey * b[1]) / lam;
    (coef * ex, coef * ey)
}

/// Trigonometric moments `⟨e^{iθ}⟩` of an ensemble, for checks.
pub fn mean_phase(model: &ClassicalModel, ensemble: &ClassicalEnsemble) -> Complex64 {
    ensemble
        .samples
        .iter()
        .zip(&ensemble.weights)
        .map(|(s, w)| Complex64::from_polar(*w, model.theta(s)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_state, InitialState, Window};
    use crate::observables::{expect_n, variance_n};
    use std::f64::consts::PI;

    /// Classic RK4 on `(p, q)`.
    fn rk4(model: &ClassicalModel, s0: ClassicalState, p: &DriveProtocol, t: f64, steps: usize) -> ClassicalState {
        let h = t / steps as f64;
        let mut s = s0;
        let add = |s: &ClassicalState, k: (f64, f64), c: f64| ClassicalState {
            p: s.p + c * k.0,
            q: s.q + c * k.1,
        };
        for i in 0..steps {
            let t0 = i as f64 * h;
            let k1 = model.velocity(&s, p, t0);
            let k2 = model.velocity(&add(&s, k1, h / 2.0), p, t0 + h / 2.0);
            let k3 = model.velocity(&add(&s, k2, h / 2.0), p, t0 + h / 2.0);
            let k4 = model.velocity(&add(&s, k3, h), p, t0 + h);
            s.p += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            s.q += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        s
    }

    #[test]
    fn free_fall_without_hopping() {
        let p = DriveProtocol::dc(0.5, 0.0).unwrap();
        let s = trajectory(&ClassicalState { p: 0.3, q: 2.0 }, &p, 4.0);
        assert_eq!(s.q, 2.0);
        assert!((s.p - (0.3 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn dc_bloch_oscillation() {
        let p = DriveProtocol::dc(1.0, 1.0).unwrap();
        let mut max: f64 = 0.0;
        for i in 0..=200 {
            let t = i as f64 * 2.0 * PI / 200.0;
            let s = trajectory(&ClassicalState { p: 0.0, q: 0.0 }, &p, t);
            assert!((s.q - 2.0 * (1.0 - t.cos())).abs() < 1e-13);
            max = max.max(s.q);
        }
        assert!((max - 4.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_integration() {
        let model = ClassicalModel::new(1.0).unwrap();
        for p in [
            DriveProtocol::dc(1.0, 0.7).unwrap(),
            DriveProtocol::harmonic(1.0, 1.2, 1.3, 0.5).unwrap(),
        ] {
            let s0 = ClassicalState { p: 0.8, q: -1.5 };
            for t in [1.0, 4.0 * PI, 8.0 * PI] {
                let exact = model.trajectory(&s0, &p, t);
                let num = rk4(&model, s0, &p, t, 20000);
                assert!((exact.p - num.p).abs() < 1e-8);
                assert!((exact.q - num.q).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn equations_of_motion() {
        let model = ClassicalModel::new(0.7).unwrap();
        let p = DriveProtocol::harmonic(0.9, 0.6, 1.1, 0.4).unwrap();
        let s0 = ClassicalState { p: 1.3, q: 0.2 };
        let h = 1e-5;
        for t in [0.5, 2.0, 7.0] {
            let a = model.trajectory(&s0, &p, t + h);
            let b = model.trajectory(&s0, &p, t - h);
            let s = model.trajectory(&s0, &p, t);
            let (c_dot, s_dot) = (
                (model.theta(&a).cos() - model.theta(&b).cos()) / (2.0 * h),
                (model.theta(&a).sin() - model.theta(&b).sin()) / (2.0 * h),
            );
            let th = model.theta(&s);
            let f = p.f(t);
            assert!((c_dot - f * th.sin()).abs() < 1e-8);
            assert!((s_dot + f * th.cos()).abs() < 1e-8);
            let n_dot = (a.q - b.q) / (2.0 * h);
            assert!((n_dot + 2.0 * p.g(t) * th.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_jacobian() {
        let model = ClassicalModel::default();
        let p = DriveProtocol::harmonic(1.0, 0.8, 0.9, 0.6).unwrap();
        let s0 = ClassicalState { p: 0.4, q: 1.0 };
        let h = 1e-4;
        let t = 5.0;
        let d = |dp: f64, dq: f64| model.trajectory(&ClassicalState { p: s0.p + dp, q: s0.q + dq }, &p, t);
        let (pp, pm, qp, qm) = (d(h, 0.0), d(-h, 0.0), d(0.0, h), d(0.0, -h));
        let numeric = [
            [(pp.p - pm.p) / (2.0 * h), (qp.p - qm.p) / (2.0 * h)],
            [(pp.q - pm.q) / (2.0 * h), (qp.q - qm.q) / (2.0 * h)],
        ];
        let exact = model.jacobian(&s0, &p, t);
        for i in 0..2 {
            for j in 0..2 {
                assert!((numeric[i][j] - exact[i][j]).abs() < 1e-7);
            }
        }
        let det = exact[0][0] * exact[1][1] - exact[0][1] * exact[1][0];
        assert!((det - 1.0).abs() < 1e-10);
        let det_num = numeric[0][0] * numeric[1][1] - numeric[0][1] * numeric[1][0];
        assert!((det_num - 1.0).abs() < 1e-7);
    }

    #[test]
    fn invariant_is_conserved() {
        let p = DriveProtocol::dc(1.0, 0.8).unwrap();
        let s0 = ClassicalState { p: 2.1, q: -3.0 };
        assert_eq!(classical_invariant(&s0, &p, 0.0), -3.0);
        for t in [0.2, 1.0, 3.3, 6.0, 12.5] {
            let s = trajectory(&s0, &p, t);
            assert!((classical_invariant(&s, &p, t) + 3.0).abs() < 1e-12);
        }
        let model = ClassicalModel::default();
        let h = DriveProtocol::harmonic(1.0, 1.3, 1.0, 0.5).unwrap();
        let end = rk4(&model, s0, &h, 6.0 * PI, 40000);
        assert!((model.invariant(&end, &h, 6.0 * PI) + 3.0).abs() < 1e-7);
    }

    #[test]
    fn ensemble_validation() {
        let s = ClassicalState { p: 0.0, q: 0.0 };
        assert!(matches!(ClassicalEnsemble::new(vec![], vec![]), Err(Error::EmptyEnsemble)));
        assert!(ClassicalEnsemble::new(vec![s, s], vec![0.5, 0.6]).is_err());
        assert!(ClassicalEnsemble::new(vec![s, s], vec![1.5, -0.5]).is_err());
        assert!(ClassicalEnsemble::new(vec![s, s], vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn point_and_uniform_ensembles() {
        let p = DriveProtocol::dc(0.9, 0.6).unwrap();
        let model = ClassicalModel::default();
        let s0 = ClassicalState { p: 0.7, q: 1.0 };
        let point = ClassicalEnsemble::uniform(vec![s0]).unwrap();
        let m = ensemble_moments(&model, &point, &p, 2.0, Exec::default()).unwrap();
        assert_eq!(m.mean, model.trajectory(&s0, &p, 2.0).q);
        assert_eq!(m.var, 0.0);

        // evenly spaced momenta: exact trig moments up to order < count
        let count = 64;
        let samples = (0..count)
            .map(|j| ClassicalState {
                p: -PI + 2.0 * PI * j as f64 / count as f64,
                q: 0.0,
            })
            .collect();
        let ens = ClassicalEnsemble::uniform(samples).unwrap();
        for t in [0.5, 2.0, 5.0] {
            let m = ensemble_moments(&model, &ens, &p, t, Exec::default()).unwrap();
            let (u, v) = p.uv(t);
            assert!(m.mean.abs() < 1e-13);
            assert!((m.var - 0.5 * (u * u + v * v)).abs() < 1e-13);
        }
    }

    #[test]
    fn matched_sampling_reproduces_moments() {
        let state = make_state(
            &InitialState::Gaussian {
                center: 1.0,
                sigma: 1.2,
                kappa0: 0.6,
            },
            Window::centered(20),
        )
        .unwrap();
        let model = ClassicalModel::default();
        let ens = sample_matched(&state, &model, 40000, 3, Exec::default()).unwrap();
        let coh = coherence_parameters(&state);
        let k = mean_phase(&model, &ens);
        assert!((k - coh.k).norm() < 0.02);
        let p = DriveProtocol::harmonic(1.0, 0.9, 1.0, 0.5).unwrap();
        for t in [0.0, 1.5, 4.0] {
            let m = ensemble_moments(&model, &ens, &p, t, Exec::default()).unwrap();
            assert!((m.mean - expect_n(&coh, &p, t)).abs() < 4.0 * m.std_err);
            assert!((m.var - variance_n(&coh, &p, t)).abs() < 0.05 * variance_n(&coh, &p, t));
        }
    }

    #[test]
    fn sampling_is_deterministic_across_exec() {
        let state = make_state(&InitialState::SingleSite { site: 0 }, Window::centered(4)).unwrap();
        let model = ClassicalModel::default();
        let a = sample_matched(&state, &model, 20000, 9, Exec::Parallel).unwrap();
        let b = sample_matched(&state, &model, 20000, 9, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        let p = DriveProtocol::dc(1.0, 1.0).unwrap();
        let ma = ensemble_moments(&model, &a, &p, 1.0, Exec::Parallel).unwrap();
        let mb = ensemble_moments(&model, &a, &p, 1.0, Exec::Sequential).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn regression_handles_degenerate_covariance() {
        let (a, b) = regression([[2.0, 0.0], [0.0, 0.0]], [1.0, 0.0]);
        assert!((a - 0.5).abs() < 1e-15 && b == 0.0);
        let (a, b) = regression([[2.0, 1.0], [1.0, 3.0]], [1.0, 2.0]);
        assert!((2.0 * a + b - 1.0).abs() < 1e-14 && (a + 3.0 * b - 2.0).abs() < 1e-14);
    }
}
