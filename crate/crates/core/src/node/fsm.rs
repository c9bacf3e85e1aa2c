use serde::{Deserialize, Serialize};

use super::buffer::FramBuffer;
use super::record::SensorRecord;
use super::{infer_condition, NodeError, SignatureThresholds};
use crate::energy::{
    drain_cycle, harvest_step_accounted, CapacitorState, CyclePath, CyclePowerTable, EnergyError,
    HarvestProfile, LightCondition, PanelSignature,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmState {
    S1CpuOn,
    S1BPowerOn,
    S2PingBase,
    S3Transmit,
    S3BSaveData,
    S4Charging,
    S5Cloudy,
    S6Dark,
    S7Sleep,
}

/// Which ping a node sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PingKind {
    /// State 2: request a data exchange.
    Exchange,
    /// State 4: alive, data follows next cycle.
    AliveDataNextCycle,
}

/// The node's view of the radio: each call is one uplink plus the reply
/// window that follows it.
pub trait HandshakePort {
    /// Returns true when an ack arrives in the receive window.
    fn ping(&mut self, node_id: u32, kind: PingKind) -> bool;
    /// Sends `records` (oldest first, current reading last); true on data-ack.
    fn send_data(&mut self, node_id: u32, records: &[SensorRecord]) -> bool;
}

/// A port with nobody listening.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoGateway;

impl HandshakePort for NoGateway {
    fn ping(&mut self, _: u32, _: PingKind) -> bool {
        false
    }
    fn send_data(&mut self, _: u32, _: &[SensorRecord]) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeMessage {
    Ping(PingKind),
    Data { cycle_indices: Vec<u32> },
}

/// What the node measured at State 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WakeEnv {
    pub signature: PanelSignature,
    pub sensor_voltage_v: f64,
    pub temp_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WakeOutcome {
    pub path: CyclePath,
    pub states: Vec<FsmState>,
    pub inferred: LightCondition,
    pub record: SensorRecord,
    pub messages: Vec<NodeMessage>,
    /// Records that left the buffer on a data-ack, current reading included.
    pub acknowledged: Vec<SensorRecord>,
    /// Record evicted by a full buffer.
    pub dropped: Option<SensorRecord>,
    pub energy_j: f64,
    /// Sunny wake taken down the dark path for lack of stored energy.
    pub low_energy_fallback: bool,
}

/// Cumulative energy bookkeeping for one node, joules.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub harvested_j: f64,
    pub leaked_j: f64,
    pub drained_j: [f64; 6],
    pub path_counts: [u64; 6],
}

impl EnergyLedger {
    pub fn total_drained_j(&self) -> f64 {
        self.drained_j.iter().sum()
    }
}

/// Runtime state of one battery-free node. Everything here is assumed to
/// live in FRAM, so a snapshot restores the node exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFsm {
    pub node_id: u32,
    state: FsmState,
    dark_flag: bool,
    cycle_counter: u32,
    cap: CapacitorState,
    buffer: FramBuffer,
    pub duty_cycle_minutes: f64,
    pub thresholds: SignatureThresholds,
    pub power: CyclePowerTable,
    ledger: EnergyLedger,
}

impl NodeFsm {
    pub fn new(node_id: u32, cap: CapacitorState) -> Self {
        Self {
            node_id,
            state: FsmState::S7Sleep,
            dark_flag: false,
            cycle_counter: 0,
            cap,
            buffer: FramBuffer::default(),
            duty_cycle_minutes: 20.0,
            thresholds: SignatureThresholds::default(),
            power: CyclePowerTable::default(),
            ledger: EnergyLedger::default(),
        }
    }

    pub fn with_buffer(mut self, buffer: FramBuffer) -> Self {
        self.buffer = buffer;
        self
    }

    pub fn with_power_table(mut self, power: CyclePowerTable) -> Self {
        self.power = power;
        self
    }

    pub fn with_duty_cycle(mut self, minutes: f64) -> Self {
        self.duty_cycle_minutes = minutes;
        self
    }

    pub fn state(&self) -> FsmState {
        self.state
    }

    pub fn dark_flag(&self) -> bool {
        self.dark_flag
    }

    pub fn cycle_counter(&self) -> u32 {
        self.cycle_counter
    }

    pub fn cap(&self) -> &CapacitorState {
        &self.cap
    }

    pub fn buffer(&self) -> &FramBuffer {
        &self.buffer
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    /// Charges the store while asleep.
    pub fn harvest(&mut self, profile: &HarvestProfile, klux: f64, dt_seconds: f64) {
        let out = harvest_step_accounted(&self.cap, profile, klux, dt_seconds);
        self.cap = out.cap;
        self.ledger.harvested_j += out.absorbed_j;
        self.ledger.leaked_j += out.leaked_j;
    }

    /// Branch the node would take for a given light reading, before any
    /// radio exchange. `None` stands for the transmit branch (A, B or C).
    fn plan(&self, inferred: LightCondition) -> (Option<CyclePath>, bool) {
        let usable = self.cap.usable_energy();
        let affordable = |mj: f64| usable >= mj / 1000.0;
        match inferred {
            LightCondition::Sunny if self.dark_flag => {
                if affordable(self.power.d_mj) {
                    (Some(CyclePath::D), false)
                } else {
                    (Some(CyclePath::F), true)
                }
            }
            LightCondition::Sunny => {
                if affordable(self.power.sunny_branch_mj()) {
                    (None, false)
                } else {
                    (Some(CyclePath::F), true)
                }
            }
            LightCondition::Cloudy => (Some(CyclePath::E), false),
            LightCondition::Dark => (Some(CyclePath::F), false),
        }
    }

    /// Runs one timer-triggered wake from State 1 back to State 7.
    ///
    /// On `NodeDead` the node is left untouched: no reading is taken and
    /// the cycle counter does not advance.
    pub fn wake<P: HandshakePort + ?Sized>(&mut self, env: &WakeEnv, port: &mut P) -> Result<WakeOutcome, NodeError> {
        if self.state != FsmState::S7Sleep {
            return Err(NodeError::NotAsleep(self.state));
        }
        let inferred = infer_condition(&env.signature, &self.thresholds);
        let floor_mj = self.power.e_mj.min(self.power.f_mj);
        if self.cap.usable_energy() < floor_mj / 1000.0 {
            return Err(NodeError::Energy(EnergyError::NodeDead {
                needed_j: floor_mj / 1000.0,
                available_j: self.cap.usable_energy(),
            }));
        }
        let (planned, low_energy_fallback) = self.plan(inferred);
        let cycle_index = self.cycle_counter;
        let sample = |sun| SensorRecord::from_reading(sun, env.temp_c, env.sensor_voltage_v, cycle_index);

        let mut states = vec![FsmState::S1CpuOn];
        let mut messages = Vec::new();
        let mut acknowledged = Vec::new();
        let mut dropped = None;

        let (path, record) = match planned {
            Some(CyclePath::D) => {
                states.push(FsmState::S4Charging);
                port.ping(self.node_id, PingKind::AliveDataNextCycle);
                messages.push(NodeMessage::Ping(PingKind::AliveDataNextCycle));
                let rec = sample(LightCondition::Sunny);
                dropped = self.buffer.push(rec);
                (CyclePath::D, rec)
            }
            Some(CyclePath::E) => {
                states.push(FsmState::S5Cloudy);
                let rec = sample(LightCondition::Cloudy);
                dropped = self.buffer.push(rec);
                (CyclePath::E, rec)
            }
            Some(_) => {
                states.push(FsmState::S6Dark);
                let rec = sample(LightCondition::Dark);
                dropped = self.buffer.push(rec);
                (CyclePath::F, rec)
            }
            None => {
                states.extend([FsmState::S1BPowerOn, FsmState::S2PingBase]);
                let rec = sample(LightCondition::Sunny);
                messages.push(NodeMessage::Ping(PingKind::Exchange));
                if !port.ping(self.node_id, PingKind::Exchange) {
                    states.push(FsmState::S3BSaveData);
                    dropped = self.buffer.push(rec);
                    (CyclePath::B, rec)
                } else {
                    states.push(FsmState::S3Transmit);
                    let mut batch = self.buffer.to_vec();
                    batch.push(rec);
                    messages.push(NodeMessage::Data {
                        cycle_indices: batch.iter().map(|r| r.cycle_index).collect(),
                    });
                    if port.send_data(self.node_id, &batch) {
                        acknowledged = self.buffer.acknowledge_all();
                        acknowledged.push(rec);
                        (CyclePath::A, rec)
                    } else {
                        states.push(FsmState::S3BSaveData);
                        dropped = self.buffer.push(rec);
                        (CyclePath::C, rec)
                    }
                }
            }
        };
        states.push(FsmState::S7Sleep);

        self.cap = drain_cycle(&self.cap, path, &self.power)?;
        let energy_j = self.power.energy_j(path);
        self.ledger.drained_j[path.index()] += energy_j;
        self.ledger.path_counts[path.index()] += 1;
        match path {
            CyclePath::F => self.dark_flag = true,
            CyclePath::D => self.dark_flag = false,
            _ => {}
        }
        self.cycle_counter = self.cycle_counter.wrapping_add(1);
        self.state = FsmState::S7Sleep;

        Ok(WakeOutcome {
            path,
            states,
            inferred,
            record,
            messages,
            acknowledged,
            dropped,
            energy_j,
            low_energy_fallback,
        })
    }

    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("node state is always serialisable")
    }

    pub fn restore(snapshot: &str) -> Result<Self, NodeError> {
        serde_json::from_str(snapshot).map_err(|e| NodeError::Snapshot(e.to_string()))
    }
}
