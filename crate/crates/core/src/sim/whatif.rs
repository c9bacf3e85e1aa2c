use serde::{Deserialize, Serialize};

use super::engine::Simulation;
use super::geometry::longest_in_range_s;
use super::scenario::distance;
use super::SimError;
use crate::energy::LightCondition;
use crate::gateway::Route;
use crate::node::infer_condition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePrediction {
    pub node_id: u32,
    pub will_contact: bool,
    /// Wake time of the first exchange the route would complete.
    pub earliest_contact_time_s: Option<f64>,
    /// Extra parked time in range needed to cover one full wake period.
    /// `None` when the route never comes within range; zero when contact is
    /// already predicted or the route dwells long enough and only the light
    /// is missing.
    pub required_dwell_minutes: Option<f64>,
    /// Longest continuous stretch of the route within range.
    pub time_in_range_minutes: f64,
}

/// Predicts, for each node, whether driving `route` from the simulation's
/// current state would collect its data.
///
/// Wakes are replayed from each node's schedule with the same light
/// inference and dark-flag rule as the node, and the link counts only
/// where delivery is certain. Energy shortfalls are not modelled, so a
/// node that would be dead or forced dark is still predicted from light
/// alone. An empty route reaches nobody. The simulation is not modified.
pub fn whatif_route(sim: &Simulation, route: &Route) -> Result<Vec<NodePrediction>, SimError> {
    if route.waypoints.is_empty() {
        return Ok(sim
            .node_ids()
            .into_iter()
            .map(|node_id| NodePrediction {
                node_id,
                will_contact: false,
                earliest_contact_time_s: None,
                required_dwell_minutes: None,
                time_in_range_minutes: 0.0,
            })
            .collect());
    }
    route.validate().map_err(|e| SimError::invalid(format!("route: {e}")))?;
    let sc = sim.scenario();
    let duty_s = sim.duty_ms() as f64 / 1000.0;
    let horizon_s = if route.looped { sim.end_s() } else { route.end_s().min(sim.end_s()) };
    let mut out = Vec::new();
    for view in sim.node_views() {
        let in_canopy = view.in_canopy;
        let range = sc.link.range_m(in_canopy);
        let mut dark = view.dark_flag;
        let mut contact = None;
        if let Some(mut t_ms) = view.next_wake_ms {
            while t_ms < sim.end_ms() {
                let t = t_ms as f64 / 1000.0;
                if t > horizon_s {
                    break;
                }
                t_ms += sim.duty_ms();
                let sig = sc.harvest.signature(sc.weather.klux_at(t));
                match infer_condition(&sig, &sc.thresholds) {
                    LightCondition::Sunny if dark => dark = false,
                    LightCondition::Sunny => {
                        let reached = route.is_active(t)
                            && route.position_at(t).is_some_and(|(x, y)| {
                                sc.link.success_probability(distance([x, y], view.position), in_canopy) >= 1.0
                            });
                        if reached {
                            contact = Some(t);
                            break;
                        }
                    }
                    LightCondition::Cloudy => {}
                    LightCondition::Dark => dark = true,
                }
            }
        }
        let sure_range = (range - sc.link.rolloff_width_m).max(0.0);
        let intervals = super::geometry::in_range_intervals(route, view.position, sure_range);
        let longest = longest_in_range_s(route, view.position, sure_range);
        let required_dwell_minutes = if contact.is_some() {
            Some(0.0)
        } else if intervals.is_empty() {
            None
        } else {
            Some(((duty_s - longest) / 60.0).max(0.0))
        };
        out.push(NodePrediction {
            node_id: view.node_id,
            will_contact: contact.is_some(),
            earliest_contact_time_s: contact,
            required_dwell_minutes,
            time_in_range_minutes: longest / 60.0,
        });
    }
    Ok(out)
}
