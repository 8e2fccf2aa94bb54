//! Kinetic Monte Carlo for the asymmetric simple exclusion process on a ring,
//! with the observables, exact small-system oracle and replica statistics
//! used to probe its fluctuation limits.

pub mod engine;
pub mod harness;
pub mod lattice;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod test_functions;
pub mod zero_range;

pub use engine::{Direction, EngineError, EventRecord, EventSink, Simulator};
pub use lattice::{Configuration, InitialLaw, SimParams, TimeScale};
pub use observables::{Frame, ObservableError};
pub use test_functions::TestFunction;
