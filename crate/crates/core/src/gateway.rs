//! The mobile gateway: where it is, how it answers pings, and what it has
//! logged.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::LightCondition;
use crate::link::LinkModel;
use crate::node::{reconstruct_timestamps, SensorRecord};

/// Delay between an uplink and the gateway's reply window.
pub const DOWNLINK_DELAY_S: f64 = 1.0;

pub const HOUR_S: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("route needs at least one waypoint")]
    EmptyRoute,
    #[error("route waypoint {index} is not later than the one before it")]
    NonMonotoneRoute { index: usize },
    #[error("route waypoint {index} has a non-finite coordinate")]
    NonFiniteWaypoint { index: usize },
    #[error("contact time {last_s} is after now ({now_s})")]
    NegativeAge { last_s: f64, now_s: f64 },
    #[error("uplink log: {0}")]
    Log(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x_m: f64,
    pub y_m: f64,
    pub t_s: f64,
}

/// Piecewise-linear path in field coordinates, timed in seconds since
/// scenario start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub waypoints: Vec<Waypoint>,
    #[serde(default, rename = "loop")]
    pub looped: bool,
}

impl Route {
    pub fn new(waypoints: Vec<Waypoint>, looped: bool) -> Result<Self, GatewayError> {
        let r = Self { waypoints, looped };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.waypoints.is_empty() {
            return Err(GatewayError::EmptyRoute);
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(w.x_m.is_finite() && w.y_m.is_finite() && w.t_s.is_finite()) {
                return Err(GatewayError::NonFiniteWaypoint { index: i });
            }
            if i > 0 && !(w.t_s > self.waypoints[i - 1].t_s) {
                return Err(GatewayError::NonMonotoneRoute { index: i });
            }
        }
        Ok(())
    }

    pub fn start_s(&self) -> f64 {
        self.waypoints.first().map_or(0.0, |w| w.t_s)
    }

    pub fn end_s(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t_s)
    }

    pub fn span_s(&self) -> f64 {
        self.end_s() - self.start_s()
    }

    /// Whether the vehicle is out on this route at `t_s`. Looping routes
    /// run from their first waypoint onward.
    pub fn is_active(&self, t_s: f64) -> bool {
        if self.waypoints.is_empty() {
            return false;
        }
        if self.looped {
            t_s >= self.start_s()
        } else {
            (self.start_s()..=self.end_s()).contains(&t_s)
        }
    }

    /// Linear interpolation between waypoints; clamps to the end points
    /// outside the route, wraps for looping routes.
    pub fn position_at(&self, t_s: f64) -> Option<(f64, f64)> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        let span = last.t_s - first.t_s;
        let t = if self.looped && span > 0.0 && t_s > last.t_s {
            first.t_s + (t_s - first.t_s).rem_euclid(span)
        } else {
            t_s
        };
        if t <= first.t_s {
            return Some((first.x_m, first.y_m));
        }
        if t >= last.t_s {
            return Some((last.x_m, last.y_m));
        }
        let i = self.waypoints.partition_point(|w| w.t_s <= t);
        let (a, b) = (&self.waypoints[i - 1], &self.waypoints[i]);
        let f = (t - a.t_s) / (b.t_s - a.t_s);
        Some((a.x_m + f * (b.x_m - a.x_m), a.y_m + f * (b.y_m - a.y_m)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecencyClass {
    Green,
    Yellow,
    Red,
}

/// Green under 24 h, yellow up to and including 72 h, red beyond.
pub fn recency_classify(last_s: f64, now_s: f64) -> Result<RecencyClass, GatewayError> {
    let age = now_s - last_s;
    if !(age >= 0.0) {
        return Err(GatewayError::NegativeAge { last_s, now_s });
    }
    Ok(if age < 24.0 * HOUR_S {
        RecencyClass::Green
    } else if age <= 72.0 * HOUR_S {
        RecencyClass::Yellow
    } else {
        RecencyClass::Red
    })
}

/// Like [`recency_classify`], with never-contacted nodes reported red.
pub fn recency_of(last_s: Option<f64>, now_s: f64) -> Result<RecencyClass, GatewayError> {
    match last_s {
        Some(t) => recency_classify(t, now_s),
        None => Ok(RecencyClass::Red),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UplinkEntry {
    pub receive_time_s: f64,
    pub node_id: u32,
    pub record: SensorRecord,
    pub reconstructed_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub deliver_at_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataAck {
    pub deliver_at_s: f64,
    pub new_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayState {
    pub position: (f64, f64),
    /// Wake period the gateway assumes when reconstructing timestamps.
    pub duty_cycle_minutes: f64,
    uplink_log: Vec<UplinkEntry>,
    seen: HashSet<(u32, u32)>,
    last_contact: BTreeMap<u32, f64>,
    alive_pings: BTreeMap<u32, f64>,
}

impl GatewayState {
    pub fn new(duty_cycle_minutes: f64) -> Self {
        Self {
            position: (0.0, 0.0),
            duty_cycle_minutes,
            uplink_log: Vec::new(),
            seen: HashSet::new(),
            last_contact: BTreeMap::new(),
            alive_pings: BTreeMap::new(),
        }
    }

    pub fn uplink_log(&self) -> &[UplinkEntry] {
        &self.uplink_log
    }

    pub fn last_contact(&self, node_id: u32) -> Option<f64> {
        self.last_contact.get(&node_id).copied()
    }

    pub fn last_contacts(&self) -> &BTreeMap<u32, f64> {
        &self.last_contact
    }

    /// Last "alive, data next cycle" ping heard from each node.
    pub fn alive_pings(&self) -> &BTreeMap<u32, f64> {
        &self.alive_pings
    }

    pub fn has_record(&self, node_id: u32, cycle_index: u32) -> bool {
        self.seen.contains(&(node_id, cycle_index))
    }

    /// Answers a ping that reached the gateway. The ack is itself a packet
    /// and may be lost on the way back.
    #[allow(clippy::too_many_arguments)]
    pub fn handle_ping<R: Rng + ?Sized>(
        &mut self,
        _node_id: u32,
        distance_m: f64,
        in_canopy: bool,
        link: &LinkModel,
        t_s: f64,
        rng: &mut R,
    ) -> Option<Ack> {
        link.packet_success(distance_m, in_canopy, rng)
            .then_some(Ack { deliver_at_s: t_s + DOWNLINK_DELAY_S })
    }

    pub fn note_alive(&mut self, node_id: u32, t_s: f64) {
        let e = self.alive_pings.entry(node_id).or_insert(t_s);
        *e = e.max(t_s);
    }

    /// Logs the new records of a batch and acknowledges the whole batch.
    /// Timestamps are reconstructed from the newest record in the batch,
    /// taken to have been generated at `t_s`.
    pub fn ingest_records(&mut self, node_id: u32, records: &[SensorRecord], t_s: f64) -> DataAck {
        let contact = self.last_contact.entry(node_id).or_insert(t_s);
        *contact = contact.max(t_s);

        let mut unique: Vec<SensorRecord> = Vec::with_capacity(records.len());
        let mut in_batch = HashSet::with_capacity(records.len());
        for r in records {
            if in_batch.insert(r.cycle_index) {
                unique.push(*r);
            }
        }
        let Some(anchor) = unique.iter().map(|r| r.cycle_index).max() else {
            return DataAck { deliver_at_s: t_s + DOWNLINK_DELAY_S, new_records: 0 };
        };
        let stamped = reconstruct_timestamps(&unique, anchor, t_s, self.duty_cycle_minutes)
            .expect("batch deduplicated above");
        let mut new_records = 0;
        for (when, rec) in stamped {
            if self.seen.insert((node_id, rec.cycle_index)) {
                self.uplink_log.push(UplinkEntry {
                    receive_time_s: t_s,
                    node_id,
                    record: rec,
                    reconstructed_time_s: when,
                });
                new_records += 1;
            }
        }
        DataAck { deliver_at_s: t_s + DOWNLINK_DELAY_S, new_records }
    }
}

pub const UPLINK_HEADER: [&str; 7] = [
    "receive_time_s",
    "node_id",
    "cycle_index",
    "sun_state",
    "temp_c",
    "voltage_v",
    "reconstructed_time_s",
];

/// Renders centi-°C and tenth-mV fields exactly, two and four decimals.
pub fn write_uplink_csv<W: Write>(out: W, log: &[UplinkEntry]) -> Result<(), GatewayError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| GatewayError::Log(e.to_string());
    w.write_record(UPLINK_HEADER).map_err(err)?;
    for e in log {
        let r = &e.record;
        w.write_record([
            format!("{:.3}", e.receive_time_s),
            e.node_id.to_string(),
            r.cycle_index.to_string(),
            r.sun_state.to_string(),
            format_fixed(i64::from(r.temp_centi_c), 2),
            format_fixed(i64::from(r.voltage_tenth_mv), 4),
            format!("{:.3}", e.reconstructed_time_s),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| GatewayError::Log(e.to_string()))
}

/// Integer-scaled decimal without going through floating point.
fn format_fixed(scaled: i64, decimals: u32) -> String {
    let unit = 10i64.pow(decimals);
    let sign = if scaled < 0 { "-" } else { "" };
    let a = scaled.unsigned_abs();
    format!("{sign}{}.{:0width$}", a / unit as u64, a % unit as u64, width = decimals as usize)
}

fn parse_fixed(s: &str, decimals: u32) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if frac.len() > decimals as usize || int.is_empty() {
        return None;
    }
    let mut digits = String::from(int);
    digits.push_str(frac);
    digits.extend(std::iter::repeat_n('0', decimals as usize - frac.len()));
    let v: i64 = digits.parse().ok()?;
    Some(if neg { -v } else { v })
}

pub fn read_uplink_csv<R: Read>(input: R) -> Result<Vec<UplinkEntry>, GatewayError> {
    let mut rdr = csv::Reader::from_reader(input);
    let err = |m: String| GatewayError::Log(m);
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != UPLINK_HEADER {
        return Err(err(format!("unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| err(e.to_string()))?;
        let bad = |f: &str| err(format!("row {}: bad {f}", i + 1));
        let num = |idx: usize, f: &str| row[idx].parse::<f64>().map_err(|_| bad(f));
        let temp = parse_fixed(&row[4], 2)
            .and_then(|v| i16::try_from(v).ok())
            .ok_or_else(|| bad("temp_c"))?;
        let volts = parse_fixed(&row[5], 4)
            .and_then(|v| u16::try_from(v).ok())
            .ok_or_else(|| bad("voltage_v"))?;
        out.push(UplinkEntry {
            receive_time_s: num(0, "receive_time_s")?,
            node_id: row[1].parse().map_err(|_| bad("node_id"))?,
            record: SensorRecord {
                sun_state: LightCondition::parse(&row[3]).ok_or_else(|| bad("sun_state"))?,
                temp_centi_c: temp,
                voltage_tenth_mv: volts,
                cycle_index: row[2].parse().map_err(|_| bad("cycle_index"))?,
            },
            reconstructed_time_s: num(6, "reconstructed_time_s")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wp(x: f64, y: f64, t: f64) -> Waypoint {
        Waypoint { x_m: x, y_m: y, t_s: t }
    }

    #[test]
    fn route_interpolation() {
        let r = Route::new(vec![wp(0.0, 0.0, 0.0), wp(100.0, 0.0, 100.0), wp(100.0, 50.0, 200.0)], false).unwrap();
        assert_eq!(r.position_at(100.0), Some((100.0, 0.0)));
        assert_eq!(r.position_at(50.0), Some((50.0, 0.0)));
        assert_eq!(r.position_at(150.0), Some((100.0, 25.0)));
        assert_eq!(r.position_at(-10.0), Some((0.0, 0.0)));
        assert_eq!(r.position_at(500.0), Some((100.0, 50.0)));
        assert!(r.is_active(0.0) && r.is_active(200.0) && !r.is_active(200.5));
    }

    #[test]
    fn looping_route_wraps() {
        let r = Route::new(vec![wp(0.0, 0.0, 0.0), wp(10.0, 0.0, 10.0), wp(0.0, 0.0, 20.0)], true).unwrap();
        for delta in [0.5, 3.0, 7.25, 12.0, 19.0] {
            assert_eq!(r.position_at(20.0 + delta), r.position_at(delta));
            assert_eq!(r.position_at(60.0 + delta), r.position_at(delta));
        }
        assert!(r.is_active(1e9));
    }

    #[test]
    fn route_validation() {
        assert_eq!(Route::new(vec![], false), Err(GatewayError::EmptyRoute));
        assert_eq!(
            Route::new(vec![wp(0.0, 0.0, 5.0), wp(1.0, 1.0, 5.0)], false),
            Err(GatewayError::NonMonotoneRoute { index: 1 })
        );
        assert!(Route::new(vec![wp(f64::NAN, 0.0, 0.0)], false).is_err());
    }

    #[test]
    fn recency_boundaries() {
        let h = HOUR_S;
        assert_eq!(recency_classify(0.0, 0.0).unwrap(), RecencyClass::Green);
        assert_eq!(recency_classify(0.0, 23.0 * h).unwrap(), RecencyClass::Green);
        assert_eq!(recency_classify(0.0, 24.0 * h).unwrap(), RecencyClass::Yellow);
        assert_eq!(recency_classify(0.0, 25.0 * h).unwrap(), RecencyClass::Yellow);
        assert_eq!(recency_classify(0.0, 72.0 * h).unwrap(), RecencyClass::Yellow);
        assert_eq!(recency_classify(0.0, 72.0 * h + 1.0).unwrap(), RecencyClass::Red);
        assert!(recency_classify(10.0, 5.0).is_err());
        assert_eq!(recency_of(None, 0.0).unwrap(), RecencyClass::Red);
    }

    #[test]
    fn ping_handling_follows_range() {
        let mut gw = GatewayState::new(20.0);
        let link = LinkModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ack = gw.handle_ping(1, 100.0, false, &link, 50.0, &mut rng).unwrap();
        assert_eq!(ack.deliver_at_s, 51.0);
        assert!(gw.handle_ping(1, 1500.0, false, &link, 50.0, &mut rng).is_none());
        assert!(gw.last_contact(1).is_none());
    }

    fn rec(i: u32) -> SensorRecord {
        SensorRecord::from_reading(LightCondition::Sunny, 21.0, 0.6, i)
    }

    #[test]
    fn ingest_dedups_and_stamps() {
        let mut gw = GatewayState::new(20.0);
        let ack = gw.ingest_records(3, &[rec(0), rec(1), rec(2)], 10_000.0);
        assert_eq!(ack.new_records, 3);
        let again = gw.ingest_records(3, &[rec(0), rec(1), rec(2), rec(3)], 11_200.0);
        assert_eq!(again.new_records, 1);
        assert_eq!(gw.uplink_log().len(), 4);
        assert_eq!(gw.uplink_log()[0].reconstructed_time_s, 10_000.0 - 2.0 * 1200.0);
        assert_eq!(gw.uplink_log()[3].reconstructed_time_s, 11_200.0);
        assert_eq!(gw.last_contact(3), Some(11_200.0));
        // Same cycle index from another node is a different record.
        assert_eq!(gw.ingest_records(4, &[rec(0)], 11_300.0).new_records, 1);
    }

    #[test]
    fn empty_batch_still_acks_and_counts_as_contact() {
        let mut gw = GatewayState::new(20.0);
        let ack = gw.ingest_records(9, &[], 42.0);
        assert_eq!(ack.new_records, 0);
        assert_eq!(gw.last_contact(9), Some(42.0));
    }

    #[test]
    fn last_contact_never_moves_back() {
        let mut gw = GatewayState::new(20.0);
        gw.ingest_records(1, &[rec(5)], 500.0);
        gw.ingest_records(1, &[rec(6)], 100.0);
        assert_eq!(gw.last_contact(1), Some(500.0));
    }

    #[test]
    fn uplink_csv_round_trip() {
        let mut gw = GatewayState::new(20.0);
        let cold = SensorRecord { temp_centi_c: -5, voltage_tenth_mv: 7, ..rec(1) };
        gw.ingest_records(2, &[rec(0), cold], 2400.5);
        let mut buf = Vec::new();
        write_uplink_csv(&mut buf, gw.uplink_log()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "receive_time_s,node_id,cycle_index,sun_state,temp_c,voltage_v,reconstructed_time_s"
        );
        assert!(text.contains("2400.500,2,1,sunny,-0.05,0.0007,2400.500"));
        assert_eq!(read_uplink_csv(buf.as_slice()).unwrap(), gw.uplink_log());
    }

    #[test]
    fn fixed_point_helpers() {
        assert_eq!(format_fixed(-1234, 2), "-12.34");
        assert_eq!(format_fixed(65535, 4), "6.5535");
        assert_eq!(parse_fixed("-12.34", 2), Some(-1234));
        assert_eq!(parse_fixed("6.5", 4), Some(65000));
        assert_eq!(parse_fixed("1.23456", 4), None);
    }
}
