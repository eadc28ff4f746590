//! Ruelle probability cascades, tree-indexed Gaussian fields and the
//! backward recursion they represent.

mod cascade;
mod field;
mod recursion;
mod representation;
mod terminal;

use serde::{Deserialize, Serialize};

pub use cascade::{sample_cascade, validate_zeta, CascadeConfig, CascadeSample};
pub use field::{sample_tree_field, CovarianceProfile, TreeGaussianField};
pub use recursion::{
    collapse_degenerate_levels, recursion_value, smoothing_step, Collapsed, MethodUsed,
    RecursionMethod, RecursionValue, DEFAULT_GRID_SPACING, DEFAULT_NODES, MAX_QUADRATURE_POINTS,
};
pub use representation::{
    concentration_variance, log_partition, rpc_representation_estimate, stable_log_variance,
    ConcentrationReport, TerminalVariance,
};
pub use terminal::{CustomTerminal, Terminal};

/// A complete tree: every internal node has `children` children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    pub depth: usize,
    pub children: usize,
}

impl TreeShape {
    pub fn num_leaves(&self) -> usize {
        self.children.pow(self.depth as u32)
    }
}
