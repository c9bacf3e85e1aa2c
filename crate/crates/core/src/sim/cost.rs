use std::fmt;

use serde::{Deserialize, Serialize};

/// Per-unit bill of materials in thousandths of a dollar, so totals are
/// exact integers and only the final figure is rounded.
pub const NODE_COST_MILLS: u64 = 33_678;
pub const GATEWAY_COST_MILLS: u64 = 91_160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub n_nodes: u64,
    pub n_gateways: u64,
    /// Total rounded half-up to whole cents.
    pub cents: u64,
}

impl CostEstimate {
    pub fn dollars(&self) -> f64 {
        self.cents as f64 / 100.0
    }
}

impl fmt::Display for CostEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}.{:02}", self.cents / 100, self.cents % 100)
    }
}

pub fn estimate_deployment_cost(n_nodes: u64, n_gateways: u64) -> CostEstimate {
    let mills = n_nodes * NODE_COST_MILLS + n_gateways * GATEWAY_COST_MILLS;
    CostEstimate { n_nodes, n_gateways, cents: (mills + 5) / 10 }
}
