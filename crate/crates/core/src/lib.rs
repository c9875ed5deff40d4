//! Damped acoustic systems on planar domains: discretization, energy decay,
//! resolvent estimates, generalized rays and phase-space measures.

pub mod config;
pub mod discretization;
pub mod error;
pub mod geometry;
pub mod husimi;
pub mod rays;
pub mod semigroup;
pub mod spectral;

pub use discretization::{Grid, GridShape, StateVector, SystemOperator};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use geometry::{BoundaryPart, ControlRegion, DampingField, Domain, Vec2};
pub use semigroup::{energy, evolve, fit_decay, step_midpoint, DecayFit, KernelBasis, Trajectory};
pub use spectral::{quasimode, resolvent_norm, resolvent_sweep, Quasimode, SweepResult};
pub use rays::{classify_contact, gcc_check, trace_generalized, ContactClass, GccReport, GeneralizedRay, PhasePoint};
pub use husimi::{husimi_transform, measure_scan, shell_mass_defect, HusimiSummary};
