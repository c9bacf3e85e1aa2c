use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::record::{SensorRecord, RECORD_BYTES};
use super::NodeError;

pub const FRAM_CAPACITY_RECORDS: usize = 4600;

/// Non-volatile FIFO of readings awaiting a data-ack. When full, the oldest
/// record is dropped to make room and the overflow counter is bumped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FramImage", into = "FramImage")]
pub struct FramBuffer {
    capacity: usize,
    records: VecDeque<SensorRecord>,
    overflow_count: u64,
}

impl Default for FramBuffer {
    fn default() -> Self {
        Self::with_capacity(FRAM_CAPACITY_RECORDS)
    }
}

impl FramBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), records: VecDeque::new(), overflow_count: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn overflow_count(&self) -> u64 {
        self.overflow_count
    }

    pub fn iter(&self) -> impl Iterator<Item = &SensorRecord> {
        self.records.iter()
    }

    pub fn to_vec(&self) -> Vec<SensorRecord> {
        self.records.iter().copied().collect()
    }

    /// Appends `rec`, returning the record evicted to make room, if any.
    pub fn push(&mut self, rec: SensorRecord) -> Option<SensorRecord> {
        let dropped = if self.records.len() >= self.capacity {
            self.overflow_count += 1;
            self.records.pop_front()
        } else {
            None
        };
        self.records.push_back(rec);
        dropped
    }

    /// Empties the buffer after a data-ack, returning what was held.
    pub fn acknowledge_all(&mut self) -> Vec<SensorRecord> {
        self.records.drain(..).collect()
    }

    /// Raw FRAM contents: records back to back, oldest first.
    pub fn image(&self) -> Vec<u8> {
        self.records.iter().flat_map(|r| r.encode()).collect()
    }

    pub fn from_image(capacity: usize, overflow_count: u64, image: &[u8]) -> Result<Self, NodeError> {
        if !image.len().is_multiple_of(RECORD_BYTES) {
            return Err(NodeError::BadRecord(format!(
                "FRAM image of {} bytes is not a whole number of records",
                image.len()
            )));
        }
        let records: VecDeque<SensorRecord> = image
            .chunks_exact(RECORD_BYTES)
            .map(SensorRecord::decode)
            .collect::<Result<_, _>>()?;
        if records.len() > capacity {
            return Err(NodeError::BadRecord("FRAM image exceeds capacity".into()));
        }
        Ok(Self { capacity: capacity.max(1), records, overflow_count })
    }
}

#[derive(Serialize, Deserialize)]
struct FramImage {
    capacity: usize,
    overflow_count: u64,
    /// Hex of the concatenated 9-byte records.
    image: String,
}

impl From<FramBuffer> for FramImage {
    fn from(b: FramBuffer) -> Self {
        FramImage { capacity: b.capacity, overflow_count: b.overflow_count, image: hex::encode(b.image()) }
    }
}

impl TryFrom<FramImage> for FramBuffer {
    type Error = NodeError;
    fn try_from(i: FramImage) -> Result<Self, Self::Error> {
        let bytes = hex::decode(&i.image).map_err(|e| NodeError::BadRecord(e.to_string()))?;
        FramBuffer::from_image(i.capacity, i.overflow_count, &bytes)
    }
}
