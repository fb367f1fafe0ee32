pub mod diagnostics;
pub mod ensemble;
pub mod fokker_planck;
pub mod phase;
pub mod stats;
