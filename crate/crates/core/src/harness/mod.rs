//! Integrators, the builtin three-body example, scenarios, verification
//! suites and file I/O.

pub mod config;
pub mod experiments;
pub mod integrators;
pub mod io;
pub mod registry;
pub mod report;
pub mod sampling;
pub mod scenario;
pub mod suites;
pub mod three_body;
pub mod trajectory;

pub use registry::Registry;
pub use report::VerificationReport;
pub use trajectory::Trajectory;
