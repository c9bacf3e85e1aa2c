use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{LatencyStats, Metrics, NodeMetrics, RecencySample};
use super::scenario::{distance, NodeSpec, Point, Scenario, DAY_S, SCHEMA_VERSION};
use super::SimError;
use crate::energy::{CyclePath, LightCondition};
use crate::gateway::{recency_of, write_uplink_csv, GatewayState, Route, DOWNLINK_DELAY_S};
use crate::link::{time_on_air, AirtimeParams, LinkModel};
use crate::node::{FramBuffer, HandshakePort, NodeFsm, PingKind, SensorRecord, WakeEnv};
use crate::sensing::{write_readings, GalvanicSensorModel, ReadingRow, SoilTrace, WateringEvent};

/// Records per data packet: 28 × 9 bytes fits the 255-byte LoRa payload.
const RECORDS_PER_PACKET: usize = 28;
const PHASE_STREAM_SALT: u64 = 0x005e_ed0f_ba5e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Wake,
    DayMark,
}

/// Ordered by time, then node id, then kind.
type Event = (u64, u32, EventKind);

/// One line of the event trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ms: u64,
    pub node: u32,
    pub event: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<char>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sun: Option<LightCondition>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cycle: Option<u32>,
    pub buffered: usize,
    pub v_cap: f64,
    pub logged: usize,
    pub acked: usize,
}

/// Read-only view of a node for dashboards and what-if replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub node_id: u32,
    pub position: Point,
    pub in_canopy: bool,
    pub dark_flag: bool,
    pub cycle_counter: u32,
    pub next_wake_s: Option<f64>,
    pub next_wake_ms: Option<u64>,
    pub buffered: usize,
    pub capacitor_v: f64,
}

#[derive(Debug, Clone, Default)]
struct NodeStats {
    generated: u64,
    acknowledged: u64,
    dropped: u64,
    dead_wakes: u64,
    low_energy_fallbacks: u64,
    data_exchanges: u64,
    max_buffer: usize,
    min_cap_v: f64,
    latencies: Vec<f64>,
    first_contact_wake_s: Option<f64>,
    /// Generation time of each record not yet in the gateway log.
    pending: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone)]
struct SimNode {
    spec: NodeSpec,
    fsm: NodeFsm,
    soil: SoilTrace,
    rng: ChaCha8Rng,
    next_wake_ms: Option<u64>,
    synced_s: f64,
    initial_stored_j: f64,
    stats: NodeStats,
}

/// Gateway side of one wake, as seen through the node's radio.
struct RadioPort<'a> {
    gateway: &'a mut GatewayState,
    link: &'a LinkModel,
    airtime: &'a AirtimeParams,
    rng: &'a mut ChaCha8Rng,
    distance_m: Option<f64>,
    in_canopy: bool,
    wake_s: f64,
    ping_air_s: f64,
    delivered: Option<(Vec<u32>, f64)>,
    logged: usize,
}

impl RadioPort<'_> {
    fn uplink(&mut self) -> Option<f64> {
        let d = self.distance_m?;
        self.link.packet_success(d, self.in_canopy, self.rng).then_some(d)
    }

    fn data_airtime_s(&self, n: usize) -> f64 {
        let full = n / RECORDS_PER_PACKET;
        let rest = n % RECORDS_PER_PACKET;
        let air = |records: usize| {
            time_on_air(&self.airtime.with_payload((records * crate::node::RECORD_BYTES) as u32))
                .expect("airtime parameters validated with the scenario")
                / 1000.0
        };
        let mut total = full as f64 * air(RECORDS_PER_PACKET);
        if rest > 0 {
            total += air(rest);
        }
        total
    }
}

impl HandshakePort for RadioPort<'_> {
    fn ping(&mut self, node_id: u32, kind: PingKind) -> bool {
        let Some(d) = self.uplink() else { return false };
        let heard_s = self.wake_s + self.ping_air_s;
        match kind {
            PingKind::AliveDataNextCycle => {
                self.gateway.note_alive(node_id, heard_s);
                true
            }
            PingKind::Exchange => self
                .gateway
                .handle_ping(node_id, d, self.in_canopy, self.link, heard_s, self.rng)
                .is_some(),
        }
    }

    fn send_data(&mut self, node_id: u32, records: &[SensorRecord]) -> bool {
        if self.uplink().is_none() {
            return false;
        }
        let t_recv = self.wake_s + self.ping_air_s + DOWNLINK_DELAY_S + self.data_airtime_s(records.len());
        let ack = self.gateway.ingest_records(node_id, records, t_recv);
        self.logged = ack.new_records;
        self.delivered = Some((records.iter().map(|r| r.cycle_index).collect(), t_recv));
        let d = self.distance_m.expect("uplink succeeded");
        self.link.packet_success(d, self.in_canopy, self.rng)
    }
}

/// A steppable deployment run. Events are processed in (time, node id,
/// kind) order and every random draw comes from a per-node stream, so the
/// same scenario and seed always give the same trace.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    routes: Vec<Route>,
    sensor: GalvanicSensorModel,
    nodes: Vec<SimNode>,
    gateway: GatewayState,
    queue: BinaryHeap<Reverse<Event>>,
    now_ms: u64,
    end_ms: u64,
    duty_ms: u64,
    ping_air_s: f64,
    trace: Vec<String>,
    readings: Vec<ReadingRow>,
    recency_timeline: Vec<RecencySample>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let routes = scenario.routes();
        Self::with_routes(scenario, routes)
    }

    /// Uses `routes` (absolute times) in place of the scenario's schedule.
    pub fn with_routes(scenario: Scenario, mut routes: Vec<Route>) -> Result<Self, SimError> {
        scenario.validate()?;
        for (i, r) in routes.iter().enumerate() {
            r.validate().map_err(|e| SimError::invalid(format!("route {i}: {e}")))?;
        }
        routes.sort_by(|a, b| a.start_s().total_cmp(&b.start_s()));
        let duty_ms = (scenario.duty_seconds() * 1000.0).round().max(1.0) as u64;
        let end_ms = (scenario.end_s() * 1000.0).round() as u64;
        let mut queue = BinaryHeap::new();
        let mut nodes = Vec::with_capacity(scenario.nodes.len());
        for spec in &scenario.nodes {
            let soil_type = scenario.soil_for(spec);
            let watering: Vec<WateringEvent> = scenario
                .watering
                .iter()
                .filter(|w| w.nodes.as_ref().is_none_or(|ids| ids.contains(&spec.id)))
                .map(|w| WateringEvent { time_s: w.time_s, added_vwc: w.added_vwc })
                .collect();
            let initial_vwc = spec
                .initial_vwc
                .unwrap_or((soil_type.residual_vwc + soil_type.saturation_vwc) / 2.0);
            let soil = SoilTrace::new(soil_type, initial_vwc, &watering)
                .map_err(|e| SimError::invalid(format!("node {}: {e}", spec.id)))?;
            let cap = scenario.capacitor_for(spec)?;
            let mut fsm = NodeFsm::new(spec.id, cap)
                .with_buffer(FramBuffer::default())
                .with_power_table(scenario.energy)
                .with_duty_cycle(scenario.duty_cycle_minutes);
            fsm.thresholds = scenario.thresholds;
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed ^ PHASE_STREAM_SALT);
            rng.set_stream(u64::from(spec.id));
            let phase_ms = rng.random_range(0..duty_ms);
            let next_wake_ms = (phase_ms < end_ms).then_some(phase_ms);
            if let Some(t) = next_wake_ms {
                queue.push(Reverse((t, spec.id, EventKind::Wake)));
            }
            nodes.push(SimNode {
                spec: spec.clone(),
                initial_stored_j: cap.stored_energy(),
                stats: NodeStats { min_cap_v: cap.v_now_volts(), ..Default::default() },
                fsm,
                soil,
                rng,
                next_wake_ms,
                synced_s: 0.0,
            });
        }
        nodes.sort_by_key(|n| n.spec.id);
        let mut day = 1u64;
        while day * 86_400_000 <= end_ms {
            queue.push(Reverse((day * 86_400_000, u32::MAX, EventKind::DayMark)));
            day += 1;
        }
        let ping_air_s = time_on_air(&scenario.airtime).map_err(|e| SimError::invalid(e.to_string()))? / 1000.0;
        Ok(Self {
            sensor: scenario.sensor.model(),
            gateway: GatewayState::new(scenario.duty_cycle_minutes),
            routes,
            nodes,
            queue,
            now_ms: 0,
            end_ms,
            duty_ms,
            ping_air_s,
            trace: Vec::new(),
            readings: Vec::new(),
            recency_timeline: Vec::new(),
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn gateway(&self) -> &GatewayState {
        &self.gateway
    }

    pub fn now_s(&self) -> f64 {
        self.now_ms as f64 / 1000.0
    }

    pub fn end_s(&self) -> f64 {
        self.end_ms as f64 / 1000.0
    }

    pub fn end_ms(&self) -> u64 {
        self.end_ms
    }

    pub fn is_finished(&self) -> bool {
        self.now_ms >= self.end_ms
    }

    pub fn node_ids(&self) -> Vec<u32> {
        self.nodes.iter().map(|n| n.spec.id).collect()
    }

    pub fn node_fsm(&self, id: u32) -> Option<&NodeFsm> {
        self.node(id).map(|n| &n.fsm)
    }

    pub fn node_views(&self) -> Vec<NodeView> {
        self.nodes
            .iter()
            .map(|n| NodeView {
                node_id: n.spec.id,
                position: n.spec.position,
                in_canopy: n.spec.in_canopy(),
                dark_flag: n.fsm.dark_flag(),
                cycle_counter: n.fsm.cycle_counter(),
                next_wake_s: n.next_wake_ms.map(|t| t as f64 / 1000.0),
                next_wake_ms: n.next_wake_ms,
                buffered: n.fsm.buffer().len(),
                capacitor_v: n.fsm.cap().v_now_volts(),
            })
            .collect()
    }

    /// Wake times are `phase + k·duty`; this is the phase.
    pub fn duty_ms(&self) -> u64 {
        self.duty_ms
    }

    /// Gateway position at `t_s`, from the first route active then.
    pub fn gateway_position_at(&self, t_s: f64) -> Option<(f64, f64)> {
        self.routes.iter().find(|r| r.is_active(t_s)).and_then(|r| r.position_at(t_s))
    }

    pub fn readings(&self) -> &[ReadingRow] {
        &self.readings
    }

    pub fn trace_lines(&self) -> &[String] {
        &self.trace
    }

    pub fn trace_hash(&self) -> String {
        let mut h = Sha256::new();
        for line in &self.trace {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    fn node(&self, id: u32) -> Option<&SimNode> {
        self.nodes.binary_search_by_key(&id, |n| n.spec.id).ok().map(|i| &self.nodes[i])
    }

    /// Processes every event at or before `t_s` (capped at the scenario end).
    pub fn step_until(&mut self, t_s: f64) {
        let target = ((t_s.max(0.0) * 1000.0).round() as u64).min(self.end_ms);
        while let Some(Reverse((t, id, kind))) = self.queue.peek().copied() {
            if t > target {
                break;
            }
            self.queue.pop();
            self.now_ms = self.now_ms.max(t);
            match kind {
                EventKind::Wake => self.process_wake(id, t),
                EventKind::DayMark => self.mark_day(t),
            }
        }
        self.now_ms = self.now_ms.max(target);
    }

    pub fn advance(&mut self, dt_s: f64) {
        self.step_until(self.now_s() + dt_s.max(0.0));
    }

    pub fn run_to_end(&mut self) {
        self.step_until(self.end_s());
    }

    fn mark_day(&mut self, t_ms: u64) {
        let t_s = t_ms as f64 / 1000.0;
        let classes = self
            .nodes
            .iter()
            .map(|n| {
                // An exchange straddling the mark counts as contact at the mark.
                let last = self.gateway.last_contact(n.spec.id).map(|l| l.min(t_s));
                let class = recency_of(last, t_s).expect("age clamped to be non-negative");
                (n.spec.id, class)
            })
            .collect();
        self.recency_timeline.push(RecencySample { t_s, classes });
    }

    fn process_wake(&mut self, id: u32, t_ms: u64) {
        let idx = self.nodes.binary_search_by_key(&id, |n| n.spec.id).expect("queued node exists");
        let t_s = t_ms as f64 / 1000.0;
        let gw_pos = self.gateway_position_at(t_s);
        if let Some(p) = gw_pos {
            self.gateway.position = p;
        }
        let sc = &self.scenario;
        let node = &mut self.nodes[idx];

        let mut t = node.synced_s;
        while t < t_s {
            let next = sc.weather.next_change_s(t).min(t_s);
            node.fsm.harvest(&sc.harvest, sc.weather.klux_at(t), next - t);
            t = next;
        }
        node.synced_s = t_s;

        let klux = sc.weather.klux_at(t_s);
        let temp_c = sc.climate.temp_at(t_s);
        let vwc = node.soil.vwc_at(t_s);
        let sensor_voltage_v = self.sensor.voltage(vwc, node.soil.soil(), temp_c, &mut node.rng);
        let env = WakeEnv { signature: sc.harvest.signature(klux), sensor_voltage_v, temp_c };

        let cycle = node.fsm.cycle_counter();
        let mut port = RadioPort {
            gateway: &mut self.gateway,
            link: &sc.link,
            airtime: &sc.airtime,
            rng: &mut node.rng,
            distance_m: gw_pos.map(|(x, y)| distance([x, y], node.spec.position)),
            in_canopy: node.spec.in_canopy(),
            wake_s: t_s,
            ping_air_s: self.ping_air_s,
            delivered: None,
            logged: 0,
        };
        let result = node.fsm.wake(&env, &mut port);
        let (delivered, logged) = (port.delivered.take(), port.logged);

        let st = &mut node.stats;
        let line = match result {
            Ok(out) => {
                st.generated += 1;
                st.pending.insert(cycle, t_s);
                if let Some((cycles, t_recv)) = delivered {
                    st.data_exchanges += 1;
                    st.first_contact_wake_s.get_or_insert(t_s);
                    for c in cycles {
                        if let Some(gen) = st.pending.remove(&c) {
                            st.latencies.push(t_recv - gen);
                        }
                    }
                }
                if let Some(d) = out.dropped {
                    st.dropped += 1;
                    st.pending.remove(&d.cycle_index);
                }
                st.acknowledged += out.acknowledged.len() as u64;
                st.low_energy_fallbacks += u64::from(out.low_energy_fallback);
                st.max_buffer = st.max_buffer.max(node.fsm.buffer().len());
                st.min_cap_v = st.min_cap_v.min(node.fsm.cap().v_now_volts());
                self.readings.push(ReadingRow {
                    timestamp_s: t_s,
                    node_id: id,
                    voltage_v: out.record.voltage_v(),
                    temp_c: out.record.temp_c(),
                    sun_state: out.record.sun_state,
                });
                TraceEvent {
                    t_ms,
                    node: id,
                    event: "wake".into(),
                    path: Some(out.path.label()),
                    sun: Some(out.inferred),
                    cycle: Some(cycle),
                    buffered: node.fsm.buffer().len(),
                    v_cap: node.fsm.cap().v_now_volts(),
                    logged,
                    acked: out.acknowledged.len(),
                }
            }
            Err(e) => {
                assert!(e.is_dead(), "scheduled wake of a sleeping node cannot fail otherwise: {e}");
                st.dead_wakes += 1;
                TraceEvent {
                    t_ms,
                    node: id,
                    event: "dead".into(),
                    path: None,
                    sun: None,
                    cycle: None,
                    buffered: node.fsm.buffer().len(),
                    v_cap: node.fsm.cap().v_now_volts(),
                    logged: 0,
                    acked: 0,
                }
            }
        };
        self.trace.push(serde_json::to_string(&line).expect("trace events serialise"));

        let next = t_ms + self.duty_ms;
        node.next_wake_ms = (next < self.end_ms).then_some(next);
        if let Some(n) = node.next_wake_ms {
            self.queue.push(Reverse((n, id, EventKind::Wake)));
        }
    }

    pub fn metrics(&self) -> Metrics {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let st = &n.stats;
                let ledger = n.fsm.ledger();
                let delivered = self.gateway.uplink_log().iter().filter(|e| e.node_id == n.spec.id).count() as u64;
                let mut path_counts = BTreeMap::new();
                let mut path_energy_j = BTreeMap::new();
                for p in CyclePath::ALL {
                    path_counts.insert(p.label(), ledger.path_counts[p.index()]);
                    path_energy_j.insert(p.label(), ledger.drained_j[p.index()]);
                }
                let stored_change = n.fsm.cap().stored_energy() - n.initial_stored_j;
                let net = ledger.harvested_j - ledger.leaked_j - ledger.total_drained_j();
                NodeMetrics {
                    node_id: n.spec.id,
                    generated: st.generated,
                    delivered,
                    acknowledged: st.acknowledged,
                    buffered: n.fsm.buffer().len() as u64,
                    dropped: st.dropped,
                    completeness: if st.generated == 0 { 0.0 } else { delivered as f64 / st.generated as f64 },
                    latency: LatencyStats::from_samples(&st.latencies),
                    max_buffer_occupancy: st.max_buffer as u64,
                    min_capacitor_v: st.min_cap_v,
                    final_capacitor_v: n.fsm.cap().v_now_volts(),
                    path_counts,
                    path_energy_j,
                    harvested_j: ledger.harvested_j,
                    leaked_j: ledger.leaked_j,
                    energy_balance_error_j: stored_change - net,
                    dead_wakes: st.dead_wakes,
                    low_energy_fallbacks: st.low_energy_fallbacks,
                    data_exchanges: st.data_exchanges,
                    first_contact_wake_s: st.first_contact_wake_s,
                    last_contact_s: self.gateway.last_contact(n.spec.id),
                }
            })
            .collect();
        Metrics {
            schema_version: SCHEMA_VERSION,
            scenario: self.scenario.name.clone(),
            rng_seed: self.scenario.rng_seed,
            simulated_s: self.now_s(),
            nodes,
            recency_timeline: self.recency_timeline.clone(),
            trace_hash: self.trace_hash(),
        }
    }

    /// Latencies of every delivered record for one node, seconds.
    pub fn latencies(&self, id: u32) -> Option<&[f64]> {
        self.node(id).map(|n| n.stats.latencies.as_slice())
    }

    pub fn uplink_csv(&self) -> String {
        let mut buf = Vec::new();
        write_uplink_csv(&mut buf, self.gateway.uplink_log()).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn readings_csv(&self) -> String {
        let mut buf = Vec::new();
        write_readings(&mut buf, &self.readings).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn output(&self) -> RunOutput {
        RunOutput {
            metrics: self.metrics(),
            uplink_csv: self.uplink_csv(),
            readings_csv: self.readings_csv(),
            trace: self.trace.clone(),
        }
    }

    pub fn days_elapsed(&self) -> f64 {
        self.now_s() / DAY_S
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub uplink_csv: String,
    pub readings_csv: String,
    pub trace: Vec<String>,
}

impl RunOutput {
    /// Writes `metrics.json`, `uplink.csv`, `readings.csv` and `trace.jsonl`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SimError> {
        let io = |e: std::io::Error| SimError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let metrics = serde_json::to_string_pretty(&self.metrics).expect("metrics serialise");
        std::fs::write(dir.join("metrics.json"), metrics + "\n").map_err(io)?;
        std::fs::write(dir.join("uplink.csv"), &self.uplink_csv).map_err(io)?;
        std::fs::write(dir.join("readings.csv"), &self.readings_csv).map_err(io)?;
        let mut trace = self.trace.join("\n");
        if !trace.is_empty() {
            trace.push('\n');
        }
        std::fs::write(dir.join("trace.jsonl"), trace).map_err(io)?;
        Ok(())
    }
}

pub fn run(scenario: Scenario) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(scenario)?;
    sim.run_to_end();
    Ok(sim.output())
}
