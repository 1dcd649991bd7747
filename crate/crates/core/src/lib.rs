//! Exact and semiclassical wave-packet propagation in one-dimensional
//! piecewise-constant potentials: an infinite well, a potential step and
//! a box whose right wall is a finite step.

pub mod diagnostics;
pub mod error;
pub mod numerics;
pub mod oracle;
pub mod packets;
pub mod propagators;
pub mod specfun;
pub mod units;

pub use error::{Error, Result};
pub use units::{PotentialSpec, SeriesPolicy, UnitSystem, WaveField};
pub use numerics::{Estimate, QuadratureSpec};
pub use packets::{GaussianPacket, MomentumAmplitude, Packet};
pub use propagators::{Context, InitialState};
