//! Independent re-derivations checked against the library, plus property
//! tests for the invariants the rest of the system leans on.

use agmule_core::energy::{
    dark_cycles_supported, drain_cycle, CapacitorState, CyclePath, CyclePowerTable,
    LightCondition,
};
use agmule_core::gateway::GatewayState;
use agmule_core::link::{fresnel_radius, time_on_air, AirtimeParams, CodingRate, LinkGeometry};
use agmule_core::node::{SensorRecord, RECORD_BYTES};
use agmule_core::sensing::{
    fit_cubic_pairs, rolling_mean, simulate_soil_vwc, SoilName, SoilType, TimeSeries,
    WateringEvent,
};
use proptest::prelude::*;

/// Airtime from the radio datasheet, computed in floating point.
fn toa_oracle(sf: u8, bw: f64, cr: u32, pl: u32, explicit: bool, ldro: bool) -> f64 {
    let t_sym = 2f64.powf(f64::from(sf)) / bw;
    let ih = if explicit { 0.0 } else { 1.0 };
    let de = if ldro { 1.0 } else { 0.0 };
    let num = 8.0 * f64::from(pl) - 4.0 * f64::from(sf) + 28.0 + 16.0 - 20.0 * ih;
    let n = 8.0 + ((num / (4.0 * (f64::from(sf) - 2.0 * de))).ceil() * f64::from(cr + 4)).max(0.0);
    ((8.0 + 4.25) + n) * t_sym * 1000.0
}

#[test]
fn airtime_frozen_values() {
    let expected = [(7, 41.216), (8, 72.192), (9, 144.384), (10, 247.808), (11, 495.616), (12, 991.232)];
    for (sf, ms) in expected {
        let got = time_on_air(&AirtimeParams::default().with_sf(sf)).unwrap();
        assert!((got - ms).abs() < 1e-9, "SF{sf}: {got}");
    }
    let wide = AirtimeParams { bandwidth_hz: 250_000.0, ..Default::default() };
    assert!((time_on_air(&wide).unwrap() - 20.608).abs() < 1e-9);
}

fn coding_rate(i: u32) -> CodingRate {
    [CodingRate::Cr45, CodingRate::Cr46, CodingRate::Cr47, CodingRate::Cr48][i as usize - 1]
}

proptest! {
    #[test]
    fn airtime_matches_datasheet(
        sf in 7u8..=12,
        bw in prop::sample::select(vec![125_000.0, 250_000.0, 500_000.0]),
        cr in 1u32..=4,
        pl in 1u32..=255,
        explicit in any::<bool>(),
        ldro in any::<bool>(),
    ) {
        let p = AirtimeParams {
            spreading_factor: sf,
            coding_rate: coding_rate(cr),
            bandwidth_hz: bw,
            payload_bytes: pl,
            preamble_symbols: 8,
            explicit_header: explicit,
            low_data_rate_optimize: ldro,
        };
        let got = time_on_air(&p).unwrap();
        let want = toa_oracle(sf, bw, cr, pl, explicit, ldro);
        prop_assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
    }

    #[test]
    fn airtime_grows_with_sf_and_payload(sf in 7u8..12, pl in 1u32..255) {
        let p = AirtimeParams::default().with_payload(pl);
        prop_assert!(time_on_air(&p.with_sf(sf + 1)).unwrap() > time_on_air(&p.with_sf(sf)).unwrap());
        prop_assert!(time_on_air(&p.with_payload(pl + 1)).unwrap() >= time_on_air(&p).unwrap());
    }

    #[test]
    fn fresnel_peaks_at_midpoint(total in 10.0..5000.0f64, frac in 0.0..=1.0f64) {
        let mid = fresnel_radius(&LinkGeometry::at_915mhz(total / 2.0, total / 2.0)).unwrap();
        let r = fresnel_radius(&LinkGeometry::at_915mhz(frac * total, (1.0 - frac) * total)).unwrap();
        prop_assert!(r <= mid * (1.0 + 1e-12));
        let lambda = 299_792_458.0 / 915e6;
        prop_assert!((mid - (lambda * total / 4.0).sqrt()).abs() < 1e-9);
    }
}

#[test]
fn fresnel_one_km_midpoint() {
    let r = fresnel_radius(&LinkGeometry::at_915mhz(500.0, 500.0)).unwrap();
    assert!((r - 9.0504).abs() < 1e-4, "{r}");
}

fn horner(c: [f64; 4], v: f64) -> f64 {
    ((c[0] * v + c[1]) * v + c[2]) * v + c[3]
}

#[test]
fn r_squared_from_sums_of_squares() {
    let pairs: Vec<(f64, f64)> = (0..60)
        .map(|i| {
            let v = 0.42 + 0.005 * f64::from(i);
            let wobble = ((f64::from(i) * 1.7).sin()) * 40.0;
            (v, 1500.0 + 2000.0 * (v - 0.42) + wobble)
        })
        .collect();
    let fit = fit_cubic_pairs(&pairs).unwrap();
    let c = fit.model.coefficients();
    let mean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let ss_tot: f64 = pairs.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - horner(c, p.0)).powi(2)).sum();
    assert!((fit.r_squared - (1.0 - ss_res / ss_tot)).abs() < 1e-9);
    assert!(fit.r_squared > 0.0 && fit.r_squared < 1.0);

    // Least squares: nudging any coefficient can only raise the residual.
    for k in 0..4 {
        for step in [-1e-3, 1e-3] {
            let mut d = c;
            d[k] += step * d[k].abs().max(1.0);
            let ss: f64 = pairs.iter().map(|p| (p.1 - horner(d, p.0)).powi(2)).sum();
            assert!(ss >= ss_res);
        }
    }
}

#[test]
fn soil_closed_form_matches_numeric_integration() {
    let soil = SoilType::preset(SoilName::Catlin);
    let watering = [WateringEvent { time_s: 30_000.0, added_vwc: 0.1 }];
    let closed = simulate_soil_vwc(&soil, 0.35, &watering, 86_400.0, 600.0).unwrap();
    let k = soil.drying_rate_per_hour / 3600.0;
    let dt = 1.0;
    let mut v: f64 = 0.35;
    let mut t = 0.0;
    let mut watered = false;
    for (ts, want) in closed.points() {
        while t < *ts - 1e-9 {
            if !watered && t >= 30_000.0 {
                v = (v + 0.1).min(soil.saturation_vwc);
                watered = true;
            }
            // Midpoint rule on dv/dt = -k (v - residual).
            let half = v - 0.5 * dt * k * (v - soil.residual_vwc);
            v -= dt * k * (half - soil.residual_vwc);
            t += dt;
        }
        if !watered && t >= 30_000.0 {
            v = (v + 0.1).min(soil.saturation_vwc);
            watered = true;
        }
        assert!((v - want).abs() < 1e-6, "t={ts}: {v} vs {want}");
    }
}

proptest! {
    #[test]
    fn rolling_mean_is_bounded_by_its_window(
        values in prop::collection::vec(-100.0..100.0f64, 1..80),
        window in 1usize..20,
    ) {
        let s = TimeSeries::uniform(0.0, 60.0, &values).unwrap();
        let out: Vec<f64> = rolling_mean(&s, window).unwrap().values().collect();
        prop_assert_eq!(out.len(), values.len());
        for (i, m) in out.iter().enumerate() {
            let w = &values[i.saturating_sub(window - 1)..=i];
            let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*m >= lo && *m <= hi);
            let naive = w.iter().sum::<f64>() / w.len() as f64;
            prop_assert!((m - naive).abs() < 1e-9);
        }
    }

    #[test]
    fn record_bytes_round_trip(
        sun in prop::sample::select(vec![LightCondition::Dark, LightCondition::Cloudy, LightCondition::Sunny]),
        temp in -327.0..327.0f64,
        volts in 0.0..6.5f64,
        cycle in any::<u32>(),
    ) {
        let r = SensorRecord::from_reading(sun, temp, volts, cycle);
        let bytes = r.encode();
        prop_assert_eq!(bytes.len(), RECORD_BYTES);
        prop_assert_eq!(SensorRecord::decode(&bytes).unwrap(), r);
        prop_assert!((r.temp_c() - temp).abs() <= 0.005 + 1e-9);
        prop_assert!((r.voltage_v() - volts).abs() <= 0.00005 + 1e-9);
    }

    #[test]
    fn ingest_is_idempotent(
        batches in prop::collection::vec(prop::collection::vec(0u32..200, 0..30), 1..6),
    ) {
        let rec = |c: u32| SensorRecord::from_reading(LightCondition::Sunny, 20.0, 0.5, c);
        let mut gw = GatewayState::new(20.0);
        for (i, b) in batches.iter().enumerate() {
            let recs: Vec<_> = b.iter().map(|c| rec(*c)).collect();
            gw.ingest_records(1, &recs, 10_000.0 * (i + 1) as f64);
        }
        let before = gw.uplink_log().to_vec();
        let distinct: std::collections::HashSet<u32> = batches.iter().flatten().copied().collect();
        prop_assert_eq!(before.len(), distinct.len());
        for b in &batches {
            let recs: Vec<_> = b.iter().map(|c| rec(*c)).collect();
            prop_assert_eq!(gw.ingest_records(1, &recs, 1e6).new_records, 0);
        }
        prop_assert_eq!(gw.uplink_log(), before.as_slice());
    }

    #[test]
    fn capacitor_charge_and_discharge_conserve_energy(v0 in 3.3..5.5f64, j in 0.0..20.0f64) {
        let cap = CapacitorState::node_default().with_voltage(v0).unwrap();
        let (up, absorbed) = cap.charge(j);
        prop_assert!((up.stored_energy() - cap.stored_energy() - absorbed).abs() < 1e-9);
        prop_assert!(absorbed <= j + 1e-12 && up.v_now_volts() <= 5.5);
        let (down, removed) = cap.discharge(j);
        prop_assert!((cap.stored_energy() - down.stored_energy() - removed).abs() < 1e-9);
        prop_assert!(down.v_now_volts() >= 0.0);
    }
}

#[test]
fn dark_wakes_until_the_store_runs_out() {
    let table = CyclePowerTable::default();
    let mut cap = CapacitorState::node_default();
    let mut wakes = 0u64;
    while let Ok(next) = drain_cycle(&cap, CyclePath::F, &table) {
        cap = next;
        wakes += 1;
    }
    assert_eq!(wakes, 1464);
    assert_eq!(dark_cycles_supported(&CapacitorState::node_default(), &table), 1464);
    assert_eq!((9.68f64 / 0.006608).floor() as u64, 1464);
}
