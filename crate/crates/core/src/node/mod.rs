//! The battery-free node: wake FSM, FRAM store-and-forward buffer, and the
//! node half of the ping / data / ack exchange.

mod buffer;
mod fsm;
mod record;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use buffer::{FramBuffer, FRAM_CAPACITY_RECORDS};
pub use fsm::{
    EnergyLedger, FsmState, HandshakePort, NoGateway, NodeFsm, NodeMessage, PingKind, WakeEnv,
    WakeOutcome,
};
pub use record::{SensorRecord, RECORD_BYTES};

use crate::energy::{EnergyError, LightCondition, PanelSignature};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("wake requested while node is in {0:?}")]
    NotAsleep(FsmState),
    #[error("bad record: {0}")]
    BadRecord(String),
    #[error("duplicate cycle index {0}")]
    DuplicateCycle(u32),
    #[error("bad snapshot: {0}")]
    Snapshot(String),
}

impl NodeError {
    pub fn is_dead(&self) -> bool {
        matches!(self, NodeError::Energy(EnergyError::NodeDead { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignatureThresholds {
    pub sunny_min_current_ma: f64,
    pub cloudy_max_current_ma: f64,
    pub cloudy_min_voltage_v: f64,
}

impl Default for SignatureThresholds {
    fn default() -> Self {
        Self { sunny_min_current_ma: 0.5, cloudy_max_current_ma: 0.1, cloudy_min_voltage_v: 1.0 }
    }
}

/// Reads the light condition off the panel: current means direct sun,
/// voltage without current means diffuse light.
pub fn infer_condition(sig: &PanelSignature, th: &SignatureThresholds) -> LightCondition {
    if sig.panel_current_ma >= th.sunny_min_current_ma {
        LightCondition::Sunny
    } else if sig.panel_current_ma < th.cloudy_max_current_ma && sig.panel_voltage_v >= th.cloudy_min_voltage_v {
        LightCondition::Cloudy
    } else {
        LightCondition::Dark
    }
}

/// Assigns wall-clock times from the fixed wake schedule, counting back (or
/// forward) from an anchor whose time is known.
pub fn reconstruct_timestamps(
    records: &[SensorRecord],
    anchor_cycle: u32,
    anchor_time_s: f64,
    duty_cycle_minutes: f64,
) -> Result<Vec<(f64, SensorRecord)>, NodeError> {
    let mut seen = HashSet::with_capacity(records.len());
    let period = duty_cycle_minutes * 60.0;
    records
        .iter()
        .map(|r| {
            if !seen.insert(r.cycle_index) {
                return Err(NodeError::DuplicateCycle(r.cycle_index));
            }
            let cycles_back = i64::from(anchor_cycle) - i64::from(r.cycle_index);
            Ok((anchor_time_s - cycles_back as f64 * period, *r))
        })
        .collect()
}
