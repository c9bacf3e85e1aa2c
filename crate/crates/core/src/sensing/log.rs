//! Reading logs as CSV: `timestamp_s,node_id,voltage_v,temp_c,sun_state`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SensingError;
use crate::energy::LightCondition;

pub const READING_LOG_HEADER: [&str; 5] = ["timestamp_s", "node_id", "voltage_v", "temp_c", "sun_state"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingRow {
    pub timestamp_s: f64,
    pub node_id: u32,
    pub voltage_v: f64,
    pub temp_c: f64,
    pub sun_state: LightCondition,
}

pub fn write_readings<W: Write>(out: W, rows: &[ReadingRow]) -> Result<(), SensingError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(READING_LOG_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            format!("{:.3}", r.timestamp_s),
            r.node_id.to_string(),
            format!("{:.4}", r.voltage_v),
            format!("{:.2}", r.temp_c),
            r.sun_state.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| SensingError::Io(e.to_string()))
}

pub fn read_readings<R: Read>(input: R) -> Result<Vec<ReadingRow>, SensingError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != READING_LOG_HEADER {
        return Err(SensingError::Parse(format!("unexpected header {headers:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// One calibration sample: probe voltage against reference RAW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub timestamp_s: f64,
    pub voltage_v: f64,
    pub raw: f64,
}

/// Reads `timestamp_s,voltage_v,raw` calibration pairs.
pub fn read_pairs<R: Read>(input: R) -> Result<Vec<PairRow>, SensingError> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> SensingError {
    SensingError::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readings_round_trip() {
        let rows = vec![
            ReadingRow { timestamp_s: 0.0, node_id: 1, voltage_v: 0.6123, temp_c: 21.5, sun_state: LightCondition::Sunny },
            ReadingRow { timestamp_s: 1200.0, node_id: 2, voltage_v: 0.5, temp_c: -3.25, sun_state: LightCondition::Dark },
        ];
        let mut buf = Vec::new();
        write_readings(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_s,node_id,voltage_v,temp_c,sun_state\n"));
        assert_eq!(read_readings(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn wrong_header_rejected() {
        let text = "t,node,v,temp,sun\n0,1,0.5,20,sunny\n";
        assert!(read_readings(text.as_bytes()).is_err());
    }
}
