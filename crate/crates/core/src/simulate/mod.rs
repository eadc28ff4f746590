//! Finite-N estimators by exact enumeration of spin configurations.

mod cavity;
mod gibbs;
mod hamiltonian;
mod pressure;

pub use cavity::{cavity_functional, CavityEstimate};
pub use gibbs::{
    gg_delta, gibbs_overlap_distribution, GgDelta, GgSettings, GibbsSampler, OverlapDistribution,
    OverlapPair, TestFunction, MAX_GG_REPLICAS, MAX_GG_SPINS, MAX_GIBBS_SPINS,
    TEST_FUNCTION_LIBRARY_VERSION,
};
pub use hamiltonian::{
    gray_config, hamiltonian, linear_values, quadratic_energies, DisorderRealization, TreeCouplings,
};
pub use pressure::{log_partition_per_spin, pressure_direct, pressure_recursive, RecursivePressure};
