pub mod conditional;
pub mod diagnostics;
pub mod dp;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hard_instance;
mod kernel;
pub mod llt;
pub mod proximal;
pub mod quad;
pub mod rng;
pub mod stable;

pub use conditional::{InnerLoopConfig, Link, ProblemInstance};
pub use diagnostics::{diagnostics_suite, CheckRecord, CheckStatus, DiagnosticsConfig, DiagnosticsReport, CHECK_NAMES};
pub use dp::{Dataset, MechanismConfig, MechanismPlan, MechanismReport, Mode};
pub use error::{Error, Result};
pub use geometry::LpGeometry;
pub use grid::{grid_tv, GridOracle};
pub use hard_instance::{make_hard_instance, risk_lower_bound, HardInstance};
pub use llt::{CumulantEstimate, LLTSpec, QuadConfig};
pub use proximal::{ChainRun, SamplerConfig};
pub use rng::{seeded, split, ChainRng};
pub use stable::StableCountLaw;
