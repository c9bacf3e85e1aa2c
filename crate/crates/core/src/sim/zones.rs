use serde::{Deserialize, Serialize};

use super::geometry::segment_disc_clip;
use super::scenario::{distance, Point, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSegment {
    pub road: usize,
    pub from: Point,
    pub to: Point,
    pub length_m: f64,
}

/// Stretches of road from which a parked gateway reaches a node with
/// certainty, and how long to stay so that at least one wake falls inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickupZone {
    pub node_id: u32,
    pub range_m: f64,
    pub dwell_minutes: f64,
    pub segments: Vec<ZoneSegment>,
}

pub fn compute_pickup_zones(scenario: &Scenario) -> Vec<PickupZone> {
    let link = &scenario.link;
    scenario
        .nodes
        .iter()
        .map(|n| {
            let range_m = (link.range_m(n.in_canopy()) - link.rolloff_width_m).max(0.0);
            let mut segments = Vec::new();
            for (ri, road) in scenario.roads.iter().enumerate() {
                for w in road.points.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if let Some((s0, s1)) = segment_disc_clip(a, b, n.position, range_m) {
                        let at = |s: f64| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let (from, to) = (at(s0), at(s1));
                        segments.push(ZoneSegment { road: ri, from, to, length_m: distance(from, to) });
                    }
                }
            }
            PickupZone { node_id: n.id, range_m, dwell_minutes: scenario.duty_cycle_minutes, segments }
        })
        .collect()
}
