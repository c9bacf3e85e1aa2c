use serde::{Deserialize, Serialize};

use super::NodeError;
use crate::energy::LightCondition;

pub const RECORD_BYTES: usize = 9;

const SUN_MASK: u8 = 0b0000_0011;

/// One logged reading.
///
/// Wire layout, little-endian:
///
/// | byte | field                                   |
/// |------|-----------------------------------------|
/// | 0    | flags: bits 0..2 sun state, rest zero   |
/// | 1..3 | temperature, signed centi-°C            |
/// | 3..5 | signal voltage, unsigned 0.1 mV units   |
/// | 5..9 | cycle index                             |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorRecord {
    pub sun_state: LightCondition,
    pub temp_centi_c: i16,
    pub voltage_tenth_mv: u16,
    pub cycle_index: u32,
}

impl SensorRecord {
    /// Quantises a reading, saturating at the field limits.
    pub fn from_reading(sun_state: LightCondition, temp_c: f64, voltage_v: f64, cycle_index: u32) -> Self {
        let temp = (temp_c * 100.0).round();
        let volts = (voltage_v * 10_000.0).round();
        Self {
            sun_state,
            temp_centi_c: if temp.is_nan() { 0 } else { temp.clamp(i16::MIN as f64, i16::MAX as f64) as i16 },
            voltage_tenth_mv: if volts.is_nan() { 0 } else { volts.clamp(0.0, u16::MAX as f64) as u16 },
            cycle_index,
        }
    }

    pub fn temp_c(&self) -> f64 {
        f64::from(self.temp_centi_c) / 100.0
    }

    pub fn voltage_v(&self) -> f64 {
        f64::from(self.voltage_tenth_mv) / 10_000.0
    }

    pub fn encode(&self) -> [u8; RECORD_BYTES] {
        let mut out = [0u8; RECORD_BYTES];
        out[0] = sun_code(self.sun_state);
        out[1..3].copy_from_slice(&self.temp_centi_c.to_le_bytes());
        out[3..5].copy_from_slice(&self.voltage_tenth_mv.to_le_bytes());
        out[5..9].copy_from_slice(&self.cycle_index.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, NodeError> {
        let b: &[u8; RECORD_BYTES] = bytes
            .try_into()
            .map_err(|_| NodeError::BadRecord(format!("expected {RECORD_BYTES} bytes, got {}", bytes.len())))?;
        if b[0] & !SUN_MASK != 0 {
            return Err(NodeError::BadRecord(format!("reserved flag bits set: {:#04x}", b[0])));
        }
        let sun_state = match b[0] & SUN_MASK {
            0 => LightCondition::Dark,
            1 => LightCondition::Cloudy,
            2 => LightCondition::Sunny,
            _ => return Err(NodeError::BadRecord("sun state code 3 is unused".into())),
        };
        Ok(Self {
            sun_state,
            temp_centi_c: i16::from_le_bytes([b[1], b[2]]),
            voltage_tenth_mv: u16::from_le_bytes([b[3], b[4]]),
            cycle_index: u32::from_le_bytes([b[5], b[6], b[7], b[8]]),
        })
    }
}

fn sun_code(s: LightCondition) -> u8 {
    match s {
        LightCondition::Dark => 0,
        LightCondition::Cloudy => 1,
        LightCondition::Sunny => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian() {
        let r = SensorRecord {
            sun_state: LightCondition::Cloudy,
            temp_centi_c: -2,
            voltage_tenth_mv: 0x1234,
            cycle_index: 0xA1B2_C3D4,
        };
        assert_eq!(r.encode(), [0x01, 0xFE, 0xFF, 0x34, 0x12, 0xD4, 0xC3, 0xB2, 0xA1]);
        assert_eq!(SensorRecord::decode(&r.encode()).unwrap(), r);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(SensorRecord::decode(&[0u8; 8]).is_err());
        assert!(SensorRecord::decode(&[0x03, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
        assert!(SensorRecord::decode(&[0x80, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn quantisation() {
        let r = SensorRecord::from_reading(LightCondition::Sunny, 21.456, 0.61237, 5);
        assert_eq!(r.temp_centi_c, 2146);
        assert_eq!(r.voltage_tenth_mv, 6124);
        assert_eq!(r.voltage_v(), 0.6124);
        let max = SensorRecord::from_reading(LightCondition::Dark, 1e9, 6.5535, 0);
        assert_eq!(max.voltage_tenth_mv, u16::MAX);
        assert_eq!(max.temp_centi_c, i16::MAX);
        assert_eq!(SensorRecord::from_reading(LightCondition::Dark, 0.0, -1.0, 0).voltage_tenth_mv, 0);
    }
}
