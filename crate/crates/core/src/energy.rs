//! Supercapacitor energy store, solar harvesting and per-cycle consumption.
//!
//! All energies crossing this module's API are in joules unless the name
//! says otherwise (`_mj`, `_mw`). The capacitor tracks its terminal voltage;
//! "usable" energy is what sits above the minimum operating voltage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shortest and longest wake periods the external timer can produce, minutes.
pub const MIN_DUTY_CYCLE_MINUTES: f64 = 0.1 / 60.0;
pub const MAX_DUTY_CYCLE_MINUTES: f64 = 120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("invalid capacitor: {0}")]
    InvalidCapacitor(String),
    #[error("node dead: cycle needs {needed_j} J but only {available_j} J usable")]
    NodeDead { needed_j: f64, available_j: f64 },
    #[error("duty cycle {0} min outside the timer range (100 ms to 2 h)")]
    InvalidDutyCycle(f64),
    #[error("invalid energy table: {0}")]
    InvalidTable(String),
    #[error("invalid harvest profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CapacitorSpec", into = "CapacitorSpec")]
pub struct CapacitorState {
    capacitance_farads: f64,
    v_max_volts: f64,
    v_min_volts: f64,
    v_now_volts: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct CapacitorSpec {
    capacitance_farads: f64,
    v_max_volts: f64,
    v_min_volts: f64,
    v_now_volts: f64,
}

impl TryFrom<CapacitorSpec> for CapacitorState {
    type Error = EnergyError;
    fn try_from(s: CapacitorSpec) -> Result<Self, Self::Error> {
        CapacitorState::new(s.capacitance_farads, s.v_max_volts, s.v_min_volts, s.v_now_volts)
    }
}

impl From<CapacitorState> for CapacitorSpec {
    fn from(c: CapacitorState) -> Self {
        CapacitorSpec {
            capacitance_farads: c.capacitance_farads,
            v_max_volts: c.v_max_volts,
            v_min_volts: c.v_min_volts,
            v_now_volts: c.v_now_volts,
        }
    }
}

impl CapacitorState {
    pub fn new(
        capacitance_farads: f64,
        v_max_volts: f64,
        v_min_volts: f64,
        v_now_volts: f64,
    ) -> Result<Self, EnergyError> {
        let all_finite = [capacitance_farads, v_max_volts, v_min_volts, v_now_volts]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(EnergyError::InvalidCapacitor("non-finite parameter".into()));
        }
        if capacitance_farads <= 0.0 {
            return Err(EnergyError::InvalidCapacitor("capacitance must be > 0".into()));
        }
        if !(0.0 <= v_min_volts && v_min_volts < v_max_volts) {
            return Err(EnergyError::InvalidCapacitor("need 0 <= v_min < v_max".into()));
        }
        if !(0.0..=v_max_volts).contains(&v_now_volts) {
            return Err(EnergyError::InvalidCapacitor("v_now outside [0, v_max]".into()));
        }
        Ok(Self { capacitance_farads, v_max_volts, v_min_volts, v_now_volts })
    }

    /// The node's 1 F / 5.5 V store with a 3.3 V floor, fully charged.
    pub fn node_default() -> Self {
        Self {
            capacitance_farads: 1.0,
            v_max_volts: 5.5,
            v_min_volts: 3.3,
            v_now_volts: 5.5,
        }
    }

    pub fn capacitance_farads(&self) -> f64 {
        self.capacitance_farads
    }

    pub fn v_max_volts(&self) -> f64 {
        self.v_max_volts
    }

    pub fn v_min_volts(&self) -> f64 {
        self.v_min_volts
    }

    pub fn v_now_volts(&self) -> f64 {
        self.v_now_volts
    }

    pub fn with_voltage(&self, v_now_volts: f64) -> Result<Self, EnergyError> {
        Self::new(self.capacitance_farads, self.v_max_volts, self.v_min_volts, v_now_volts)
    }

    /// ½·C·(V_now² − V_min²), zero below the operating floor.
    pub fn usable_energy(&self) -> f64 {
        let e = 0.5 * self.capacitance_farads * (self.v_now_volts.powi(2) - self.v_min_volts.powi(2));
        e.max(0.0)
    }

    /// Usable energy when charged to `v_max`.
    pub fn usable_capacity(&self) -> f64 {
        0.5 * self.capacitance_farads * (self.v_max_volts.powi(2) - self.v_min_volts.powi(2))
    }

    /// Total ½·C·V² held, including the part below `v_min`.
    pub fn stored_energy(&self) -> f64 {
        0.5 * self.capacitance_farads * self.v_now_volts.powi(2)
    }

    fn stored_ceiling(&self) -> f64 {
        0.5 * self.capacitance_farads * self.v_max_volts.powi(2)
    }

    fn voltage_for_stored(&self, stored_j: f64) -> f64 {
        (2.0 * stored_j.max(0.0) / self.capacitance_farads)
            .sqrt()
            .min(self.v_max_volts)
    }

    /// Adds up to `joules` and returns the new state with the amount
    /// actually absorbed (less than requested when the store tops out).
    pub fn charge(&self, joules: f64) -> (Self, f64) {
        if joules <= 0.0 {
            return (*self, 0.0);
        }
        let before = self.stored_energy();
        let after = (before + joules).min(self.stored_ceiling());
        let v = if after >= self.stored_ceiling() {
            self.v_max_volts
        } else {
            self.voltage_for_stored(after)
        };
        let next = Self { v_now_volts: v, ..*self };
        (next, after - before)
    }

    /// Removes `joules` from the stored energy, bottoming out at 0 V.
    /// Returns the new state and the energy actually removed.
    pub fn discharge(&self, joules: f64) -> (Self, f64) {
        if joules <= 0.0 {
            return (*self, 0.0);
        }
        let before = self.stored_energy();
        let after = (before - joules).max(0.0);
        let next = Self { v_now_volts: self.voltage_for_stored(after), ..*self };
        (next, before - after)
    }
}

/// Coarse light classification shared by the weather model and the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightCondition {
    Dark,
    Cloudy,
    Sunny,
}

impl LightCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            LightCondition::Dark => "dark",
            LightCondition::Cloudy => "cloudy",
            LightCondition::Sunny => "sunny",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dark" => Some(LightCondition::Dark),
            "cloudy" => Some(LightCondition::Cloudy),
            "sunny" => Some(LightCondition::Sunny),
            _ => None,
        }
    }
}

impl std::fmt::Display for LightCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lower edge of the cloudy band, kLux.
pub const CLOUDY_MIN_KLUX: f64 = 5.0;
/// Upper edge (inclusive) of the cloudy band, kLux.
pub const CLOUDY_MAX_KLUX: f64 = 12.0;

/// Dark below 5 kLux, cloudy on [5, 12], sunny above 12.
/// Negative or NaN inputs are treated as no light.
pub fn classify_light(klux: f64) -> LightCondition {
    if !(klux >= CLOUDY_MIN_KLUX) {
        LightCondition::Dark
    } else if klux <= CLOUDY_MAX_KLUX {
        LightCondition::Cloudy
    } else {
        LightCondition::Sunny
    }
}

/// The six per-wake state sequences a node can follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CyclePath {
    /// 1 → 1B → 2 → 3 → 7: ping acked, data acked.
    A,
    /// 1 → 1B → 2 → 3B → 7: ping not acked, reading saved.
    B,
    /// 1 → 1B → 2 → 3 → 3B → 7: data sent, data-ack lost.
    C,
    /// 1 → 4 → 7: first sunny wake after darkness.
    D,
    /// 1 → 5 → 7: cloudy.
    E,
    /// 1 → 6 → 7: dark.
    F,
}

impl CyclePath {
    pub const ALL: [CyclePath; 6] =
        [CyclePath::A, CyclePath::B, CyclePath::C, CyclePath::D, CyclePath::E, CyclePath::F];

    pub fn label(&self) -> char {
        match self {
            CyclePath::A => 'A',
            CyclePath::B => 'B',
            CyclePath::C => 'C',
            CyclePath::D => 'D',
            CyclePath::E => 'E',
            CyclePath::F => 'F',
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl std::fmt::Display for CyclePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Measured energy per cycle path, millijoules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CyclePowerTable {
    pub a_mj: f64,
    pub b_mj: f64,
    pub c_mj: f64,
    pub d_mj: f64,
    pub e_mj: f64,
    pub f_mj: f64,
}

impl Default for CyclePowerTable {
    fn default() -> Self {
        Self {
            a_mj: 429.403,
            b_mj: 414.165,
            c_mj: 429.403,
            d_mj: 47.334,
            e_mj: 6.608,
            f_mj: 6.608,
        }
    }
}

impl CyclePowerTable {
    pub fn validate(&self) -> Result<(), EnergyError> {
        for path in CyclePath::ALL {
            let e = self.energy_mj(path);
            if !(e.is_finite() && e > 0.0) {
                return Err(EnergyError::InvalidTable(format!("path {path} energy must be > 0")));
            }
        }
        if self.a_mj != self.c_mj {
            return Err(EnergyError::InvalidTable("paths A and C must cost the same".into()));
        }
        if self.e_mj != self.f_mj {
            return Err(EnergyError::InvalidTable("paths E and F must cost the same".into()));
        }
        Ok(())
    }

    pub fn energy_mj(&self, path: CyclePath) -> f64 {
        match path {
            CyclePath::A => self.a_mj,
            CyclePath::B => self.b_mj,
            CyclePath::C => self.c_mj,
            CyclePath::D => self.d_mj,
            CyclePath::E => self.e_mj,
            CyclePath::F => self.f_mj,
        }
    }

    pub fn energy_j(&self, path: CyclePath) -> f64 {
        self.energy_mj(path) / 1000.0
    }

    /// Worst case over the sunny transmit branch (A, B or C).
    pub fn sunny_branch_mj(&self) -> f64 {
        self.a_mj.max(self.b_mj).max(self.c_mj)
    }

    /// Average power in µW of a sequence of cycles, each one duty period long.
    pub fn average_power_uw(&self, paths: &[(CyclePath, u32)], duty_cycle_minutes: f64) -> f64 {
        let cycles: u32 = paths.iter().map(|(_, n)| n).sum();
        if cycles == 0 || duty_cycle_minutes <= 0.0 {
            return 0.0;
        }
        let total_mj: f64 = paths.iter().map(|(p, n)| self.energy_mj(*p) * f64::from(*n)).sum();
        let seconds = f64::from(cycles) * duty_cycle_minutes * 60.0;
        total_mj / seconds * 1000.0
    }
}

/// Removes one cycle's energy from the store.
pub fn drain_cycle(
    cap: &CapacitorState,
    path: CyclePath,
    table: &CyclePowerTable,
) -> Result<CapacitorState, EnergyError> {
    let needed = table.energy_j(path);
    let available = cap.usable_energy();
    if available < needed || available <= 0.0 {
        return Err(EnergyError::NodeDead { needed_j: needed, available_j: available });
    }
    let remaining = available - needed;
    let v = (2.0 * remaining / cap.capacitance_farads + cap.v_min_volts.powi(2)).sqrt();
    Ok(CapacitorState { v_now_volts: v.min(cap.v_max_volts), ..*cap })
}

/// Electrical state of the panel as seen by the node's ADC at wake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelSignature {
    pub panel_current_ma: f64,
    pub panel_voltage_v: f64,
}

/// Maps illuminance to panel electrical output and harvested power.
///
/// Power is linear in kLux up to full sun and flat above it. The panel
/// signature is banded to match what the charger exposes: no current and
/// no voltage in the dark, open-circuit voltage but no current under
/// diffuse light, and a current proportional to light (at least
/// `sunny_min_current_ma`, at most `max_panel_current_ma`) in direct sun.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestProfile {
    pub full_sun_klux: f64,
    pub full_sun_power_mw: f64,
    pub max_panel_current_ma: f64,
    pub sunny_min_current_ma: f64,
    pub sunny_panel_voltage_v: f64,
    pub cloudy_panel_voltage_v: f64,
    /// Constant self-discharge of the store, mW.
    pub leakage_power_mw: f64,
}

impl Default for HarvestProfile {
    fn default() -> Self {
        Self {
            full_sun_klux: 80.0,
            full_sun_power_mw: 12.0,
            max_panel_current_ma: 2.0,
            sunny_min_current_ma: 0.5,
            sunny_panel_voltage_v: 4.8,
            cloudy_panel_voltage_v: 4.5,
            leakage_power_mw: 0.0,
        }
    }
}

impl HarvestProfile {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(8.0..=14.0).contains(&self.full_sun_power_mw) {
            return Err(EnergyError::InvalidProfile(
                "full_sun_power_mw must lie in [8, 14]".into(),
            ));
        }
        if !(self.full_sun_klux > 0.0) {
            return Err(EnergyError::InvalidProfile("full_sun_klux must be > 0".into()));
        }
        if !(self.max_panel_current_ma > 0.0 && self.sunny_min_current_ma <= self.max_panel_current_ma)
        {
            return Err(EnergyError::InvalidProfile("panel current limits out of order".into()));
        }
        if !(self.leakage_power_mw >= 0.0) {
            return Err(EnergyError::InvalidProfile("leakage must be >= 0".into()));
        }
        Ok(())
    }

    fn light_fraction(&self, klux: f64) -> f64 {
        if !(klux > 0.0) {
            return 0.0;
        }
        (klux / self.full_sun_klux).min(1.0)
    }

    pub fn harvest_power_mw(&self, klux: f64) -> f64 {
        self.full_sun_power_mw * self.light_fraction(klux)
    }

    pub fn signature(&self, klux: f64) -> PanelSignature {
        match classify_light(klux) {
            LightCondition::Dark => PanelSignature { panel_current_ma: 0.0, panel_voltage_v: 0.0 },
            LightCondition::Cloudy => PanelSignature {
                panel_current_ma: 0.0,
                panel_voltage_v: self.cloudy_panel_voltage_v,
            },
            LightCondition::Sunny => PanelSignature {
                panel_current_ma: (self.max_panel_current_ma * self.light_fraction(klux))
                    .clamp(self.sunny_min_current_ma, self.max_panel_current_ma),
                panel_voltage_v: self.sunny_panel_voltage_v,
            },
        }
    }
}

/// Net change in stored energy over one harvesting interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestOutcome {
    pub cap: CapacitorState,
    pub absorbed_j: f64,
    pub leaked_j: f64,
}

/// Integrates constant illuminance over `dt_seconds`, with leakage taken
/// out after charging.
pub fn harvest_step_accounted(
    cap: &CapacitorState,
    profile: &HarvestProfile,
    klux: f64,
    dt_seconds: f64,
) -> HarvestOutcome {
    if !(dt_seconds > 0.0) {
        return HarvestOutcome { cap: *cap, absorbed_j: 0.0, leaked_j: 0.0 };
    }
    let incoming = profile.harvest_power_mw(klux) / 1000.0 * dt_seconds;
    let (charged, absorbed_j) = cap.charge(incoming);
    let leak = profile.leakage_power_mw / 1000.0 * dt_seconds;
    let (cap, leaked_j) = charged.discharge(leak);
    HarvestOutcome { cap, absorbed_j, leaked_j }
}

pub fn harvest_step(
    cap: &CapacitorState,
    profile: &HarvestProfile,
    klux: f64,
    dt_seconds: f64,
) -> CapacitorState {
    harvest_step_accounted(cap, profile, klux, dt_seconds).cap
}

/// Seconds of constant illuminance needed to lift the store from `v_min`
/// to `v_max`, ignoring leakage. Infinite when nothing is harvested.
pub fn recharge_seconds(cap: &CapacitorState, profile: &HarvestProfile, klux: f64) -> f64 {
    let p = profile.harvest_power_mw(klux) / 1000.0;
    if p <= 0.0 {
        return f64::INFINITY;
    }
    cap.usable_capacity() / p
}

/// Days a store survives on dark-path wakes alone.
pub fn lifetime_in_darkness(
    cap: &CapacitorState,
    table: &CyclePowerTable,
    duty_cycle_minutes: f64,
) -> Result<f64, EnergyError> {
    if !(duty_cycle_minutes > 0.0)
        || !(MIN_DUTY_CYCLE_MINUTES..=MAX_DUTY_CYCLE_MINUTES).contains(&duty_cycle_minutes)
    {
        return Err(EnergyError::InvalidDutyCycle(duty_cycle_minutes));
    }
    let cycles = (cap.usable_energy() / table.energy_j(CyclePath::F)).floor();
    Ok(cycles * duty_cycle_minutes / 1440.0)
}

/// Number of dark-path wakes a store can pay for.
pub fn dark_cycles_supported(cap: &CapacitorState, table: &CyclePowerTable) -> u64 {
    (cap.usable_energy() / table.energy_j(CyclePath::F)).floor() as u64
}
