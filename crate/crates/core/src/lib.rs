//! Shared-autonomy robot workcell simulation.
//!
//! The crate is layered the way the workcell is operated:
//!
//! - data: the planar arm plant ([`robot`]), session logs and replay ([`vcs`])
//! - knowledge: confidence-scored triples and rule completion ([`knowledge`])
//! - collaboration: authority arbitration ([`arbitration`]), admittance
//!   compliance ([`admittance`]) and language commands ([`language`])
//!
//! [`scenario`] and [`report`] drive whole sessions headlessly.

pub mod admittance;
pub mod arbitration;
pub mod knowledge;
pub mod language;
pub mod report;
pub mod robot;
pub mod scenario;
pub mod vcs;
