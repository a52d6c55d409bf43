//! Profile estimation, EI/PEI acquisition and the sequential design loops.

mod acquisition;
mod estimate;
mod loops;
mod surrogate;

pub use acquisition::{
    expected_improvement, profile_expected_improvement, select_nuisance, select_xstar, NuisanceChoice,
    XstarChoice,
};
pub use estimate::{estimate_profile, quantile_sorted, ProfileEstimate};
pub use loops::{
    bo_ei_loop, final_estimate, lhs_baseline, pbo_loop, pei_loop, run_method, AcquisitionRecord, LoopConfig,
    LoopOutcome, Method,
};
pub use surrogate::{FittedSurrogate, SurrogateConfig, SurrogateKind};
