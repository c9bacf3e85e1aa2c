use super::scenario::{distance, Point};
use crate::gateway::Route;

/// Parameter range `[s0, s1] ⊆ [0, 1]` of segment `a→b` lying within `r` of
/// `c`. Endpoints are nudged inward until they satisfy the distance test
/// exactly, so every returned point is truly in range.
pub fn segment_disc_clip(a: Point, b: Point, c: Point, r: f64) -> Option<(f64, f64)> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let f = [a[0] - c[0], a[1] - c[1]];
    let qa = d[0] * d[0] + d[1] * d[1];
    let qc = f[0] * f[0] + f[1] * f[1] - r * r;
    if qa == 0.0 {
        return (distance(a, c) <= r).then_some((0.0, 1.0));
    }
    let qb = 2.0 * (f[0] * d[0] + f[1] * d[1]);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let mut s0 = ((-qb - root) / (2.0 * qa)).max(0.0);
    let mut s1 = ((-qb + root) / (2.0 * qa)).min(1.0);
    if s0 > s1 {
        return None;
    }
    let at = |s: f64| [a[0] + s * d[0], a[1] + s * d[1]];
    let step = f64::EPSILON * 4.0;
    for _ in 0..64 {
        if distance(at(s0), c) <= r {
            break;
        }
        s0 += step.max(s0 * step);
    }
    for _ in 0..64 {
        if distance(at(s1), c) <= r {
            break;
        }
        s1 -= step.max(s1 * step);
    }
    (s0 <= s1 && distance(at(s0), c) <= r && distance(at(s1), c) <= r).then_some((s0, s1))
}

/// Time intervals of one pass over `route` during which the vehicle is
/// within `r` of `c`, merged where they touch.
pub fn in_range_intervals(route: &Route, c: Point, r: f64) -> Vec<(f64, f64)> {
    let w = &route.waypoints;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut push = |t0: f64, t1: f64| match out.last_mut() {
        Some(last) if t0 <= last.1 + 1e-9 => last.1 = last.1.max(t1),
        _ => out.push((t0, t1)),
    };
    if w.len() == 1 {
        if distance([w[0].x_m, w[0].y_m], c) <= r {
            push(w[0].t_s, w[0].t_s);
        }
        return out;
    }
    for pair in w.windows(2) {
        let (p, q) = (&pair[0], &pair[1]);
        if let Some((s0, s1)) = segment_disc_clip([p.x_m, p.y_m], [q.x_m, q.y_m], c, r) {
            let span = q.t_s - p.t_s;
            push(p.t_s + s0 * span, p.t_s + s1 * span);
        }
    }
    out
}

pub fn longest_in_range_s(route: &Route, c: Point, r: f64) -> f64 {
    in_range_intervals(route, c, r).iter().map(|(a, b)| b - a).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Waypoint;

    #[test]
    fn clip_through_centre() {
        let (s0, s1) = segment_disc_clip([-20.0, 0.0], [20.0, 0.0], [0.0, 0.0], 10.0).unwrap();
        assert!((s0 - 0.25).abs() < 1e-12 && (s1 - 0.75).abs() < 1e-12);
        assert!(segment_disc_clip([-20.0, 11.0], [20.0, 11.0], [0.0, 0.0], 10.0).is_none());
        assert_eq!(segment_disc_clip([1.0, 1.0], [2.0, 2.0], [0.0, 0.0], 10.0), Some((0.0, 1.0)));
        assert!(segment_disc_clip([30.0, 0.0], [40.0, 0.0], [0.0, 0.0], 10.0).is_none());
    }

    #[test]
    fn parked_vehicle_dwell() {
        let route = Route {
            waypoints: vec![
                Waypoint { x_m: -100.0, y_m: 0.0, t_s: 0.0 },
                Waypoint { x_m: 0.0, y_m: 0.0, t_s: 100.0 },
                Waypoint { x_m: 0.0, y_m: 0.0, t_s: 700.0 },
                Waypoint { x_m: 100.0, y_m: 0.0, t_s: 800.0 },
            ],
            looped: false,
        };
        let iv = in_range_intervals(&route, [0.0, 0.0], 10.0);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].0 - 90.0).abs() < 1e-9 && (iv[0].1 - 710.0).abs() < 1e-9);
        assert!((longest_in_range_s(&route, [0.0, 0.0], 10.0) - 620.0).abs() < 1e-9);
    }
}
