use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::RecencyClass;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub min_s: f64,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub max_s: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |p: f64| s[((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self {
            count: s.len(),
            min_s: s[0],
            mean_s: s.iter().sum::<f64>() / s.len() as f64,
            p50_s: rank(0.5),
            p95_s: rank(0.95),
            max_s: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub node_id: u32,
    pub generated: u64,
    /// Distinct records in the gateway log.
    pub delivered: u64,
    /// Records cleared from the node by a data-ack.
    pub acknowledged: u64,
    pub buffered: u64,
    pub dropped: u64,
    pub completeness: f64,
    pub latency: LatencyStats,
    pub max_buffer_occupancy: u64,
    pub min_capacitor_v: f64,
    pub final_capacitor_v: f64,
    pub path_counts: BTreeMap<char, u64>,
    pub path_energy_j: BTreeMap<char, f64>,
    pub harvested_j: f64,
    pub leaked_j: f64,
    /// Stored-energy change minus net harvest and drain; zero up to rounding.
    pub energy_balance_error_j: f64,
    pub dead_wakes: u64,
    pub low_energy_fallbacks: u64,
    pub data_exchanges: u64,
    pub first_contact_wake_s: Option<f64>,
    pub last_contact_s: Option<f64>,
}

impl NodeMetrics {
    pub fn conserves_records(&self) -> bool {
        self.generated == self.acknowledged + self.buffered + self.dropped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecencySample {
    pub t_s: f64,
    pub classes: BTreeMap<u32, RecencyClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub scenario: String,
    pub rng_seed: u64,
    pub simulated_s: f64,
    pub nodes: Vec<NodeMetrics>,
    pub recency_timeline: Vec<RecencySample>,
    pub trace_hash: String,
}

impl Metrics {
    pub fn node(&self, id: u32) -> Option<&NodeMetrics> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn total_generated(&self) -> u64 {
        self.nodes.iter().map(|n| n.generated).sum()
    }

    pub fn total_delivered(&self) -> u64 {
        self.nodes.iter().map(|n| n.delivered).sum()
    }
}
