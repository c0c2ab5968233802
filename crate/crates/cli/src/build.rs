//! Turns a validated [`Scenario`] into library objects.

use anyhow::{Context, Result};
use num_complex::Complex64;

use tightbind::drive::{DriveProtocol, Table, TabulatedDrive};
use tightbind::lattice::{make_state, Boundary, InitialState, LatticeState, Window};
use tightbind::oracle::OracleConfig;
use tightbind::propagator::{CommutatorConvention, SingleBandDispersion};

use crate::config::{BoundaryKind, ConventionKind, DriveConfig, InitialConfig, Loaded, OracleSection};

pub struct Model {
    pub window: Window,
    pub state0: LatticeState,
    pub protocol: DriveProtocol,
    pub dispersion: Option<(SingleBandDispersion, CommutatorConvention)>,
    pub times: Vec<f64>,
    pub oracle: OracleConfig,
}

pub fn build(loaded: &Loaded) -> Result<Model> {
    let s = &loaded.scenario;
    let window = Window::new(s.lattice.n_min, s.lattice.n_max).map_err(|e| loaded.field_error("lattice", e))?;
    let spec = match &s.initial_state {
        InitialConfig::SingleSite { site } => InitialState::SingleSite { site: *site },
        InitialConfig::Gaussian { center, sigma, kappa0 } => InitialState::Gaussian {
            center: *center,
            sigma: *sigma,
            kappa0: *kappa0,
        },
        InitialConfig::Explicit { n_min, amplitudes } => InitialState::Explicit {
            n_min: *n_min,
            amplitudes: amplitudes.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
        },
    };
    let state0 = make_state(&spec, window).map_err(|e| loaded.field_error("initial_state", e))?;
    let protocol = drive(&s.drive).map_err(|e| loaded.field_error("drive", format!("{e:#}")))?;
    let dispersion = match &s.dispersion {
        None => None,
        Some(d) => {
            let couplings = d.couplings.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
            let disp = SingleBandDispersion::new(couplings).map_err(|e| loaded.field_error("couplings", e))?;
            let convention = match d.convention {
                ConventionKind::Ladder => CommutatorConvention::Ladder,
                ConventionKind::PowerOfTwo => CommutatorConvention::PowerOfTwo,
            };
            Some((disp, convention))
        }
    };
    let n = s.time.samples;
    let times = (0..n).map(|j| s.time.t_max * j as f64 / (n - 1) as f64).collect();
    Ok(Model {
        window,
        state0,
        protocol,
        dispersion,
        times,
        oracle: oracle_config(&s.oracle),
    })
}

fn drive(cfg: &DriveConfig) -> Result<DriveProtocol> {
    Ok(match cfg {
        DriveConfig::Dc { f0, g0 } => DriveProtocol::dc(*f0, *g0)?,
        DriveConfig::Harmonic { f0, f1, omega, g0 } => DriveProtocol::harmonic(*f0, *f1, *omega, *g0)?,
        DriveConfig::Fourier { f0, modes, omega, g0 } => DriveProtocol::fourier(*f0, modes.clone(), *omega, *g0)?,
        DriveConfig::Tabulated { f, g, periodic, .. } => {
            let table = |rows: &[[f64; 2]], which: &str| {
                Table::new(rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect(), *periodic)
                    .with_context(|| format!("{which} table"))
            };
            DriveProtocol::tabulated(TabulatedDrive::new(table(f, "f")?, table(g, "g")?)?)
        }
    })
}

pub fn oracle_config(section: &OracleSection) -> OracleConfig {
    OracleConfig {
        boundary: match section.boundary {
            BoundaryKind::Open => Boundary::Open,
            BoundaryKind::Ring => Boundary::Ring,
        },
        dt: section.dt,
        leak_tolerance: section.leak_tolerance,
        error_tolerance: section.error_tolerance,
        ..OracleConfig::default()
    }
}
