//! Close-coupling engine for muon transfer (p mu) + O -> p + (mu O) in a
//! colinear geometry, with reduced models and rate formulas layered on top.

pub mod asymptotics;
pub mod constants;
pub mod error;
pub mod models;
pub mod pipeline;
pub mod potential;
pub mod propagator;
pub mod quadrature;
pub mod rates;
pub mod surface;

pub use constants::{build_mass_set, MassSet, UnitSystem};
pub use error::{Error, Result};
pub use potential::{EffectivePotential1Ch, PotentialModel, TailForm, Variant};
