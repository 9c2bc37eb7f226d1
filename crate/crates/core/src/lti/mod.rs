//! Plant model, observer design by pole placement, and the dense reference
//! trajectory used as ground truth.

mod design;
mod reference;
mod signal;
mod spec_file;
mod system;

pub use design::{ackermann_gain, decay_constants, poly_from_roots, DecayEnvelope, ObserverDesign};
pub use reference::ReferenceTrajectory;
pub use signal::Signal;
pub use spec_file::SystemSpec;
pub use system::{numerical_rank, LtiSystem, RANK_TOLERANCE};
