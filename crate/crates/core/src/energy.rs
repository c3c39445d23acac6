//! Battery charging and flight energy-consumption models.
//!
//! These closed forms drive the simulator and the ground-truth capability
//! oracle. Agents never see them: a UAV only observes its own state of charge.
//!
//! Units: masses in kg, distances in m, time in s, energy in Wh, state of
//! charge (SoC) in percent of the battery's *true* capacity.

use thiserror::Error;

/// SoC values within this distance of 100 are reported as exactly 100.
pub const SNAP_EPS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EnergyError {
    #[error("state of health must be in (0, 1], got {0}")]
    InvalidSoh(f64),
    #[error("target SoC {0} is unreachable under exponential charging")]
    UnreachableTarget(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Physical constants of a UAV, its battery and the FC charger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavParams {
    /// Frame mass (kg).
    pub frame_mass: f64,
    /// Battery mass (kg).
    pub battery_mass: f64,
    pub rotor_count: u32,
    /// Area of the spinning blade disc of one rotor (m²).
    pub blade_disc_area: f64,
    /// Cruise speed (m/s).
    pub speed: f64,
    /// Theoretical battery capacity (Wh).
    pub theoretical_capacity: f64,
    /// Charger power (W).
    pub charger_power: f64,
    /// Charger efficiency in (0, 1].
    pub charger_efficiency: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Air density (kg/m³).
    pub air_density: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        Self {
            frame_mass: 10.0,
            battery_mass: 10.0,
            rotor_count: 8,
            blade_disc_area: 0.27,
            speed: 10.0,
            theoretical_capacity: 800.0,
            charger_power: 100.0,
            charger_efficiency: 0.95,
            gravity: 9.81,
            air_density: 1.225,
        }
    }
}

impl UavParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let positive = [
            ("frame_mass", self.frame_mass),
            ("battery_mass", self.battery_mass),
            ("blade_disc_area", self.blade_disc_area),
            ("speed", self.speed),
            ("theoretical_capacity", self.theoretical_capacity),
            ("charger_power", self.charger_power),
            ("charger_efficiency", self.charger_efficiency),
            ("gravity", self.gravity),
            ("air_density", self.air_density),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EnergyError::InvalidArgument(name));
            }
        }
        if self.charger_efficiency > 1.0 {
            return Err(EnergyError::InvalidArgument("charger_efficiency"));
        }
        if self.rotor_count == 0 {
            return Err(EnergyError::InvalidArgument("rotor_count"));
        }
        Ok(())
    }

    /// Charging rate constant k (1/s) of `dS/dt = (100 - S)·k`.
    pub fn charge_rate_constant(&self) -> f64 {
        self.charger_efficiency * self.charger_power / (3600.0 * self.theoretical_capacity)
    }

    /// Flight time on a full battery at the given payload and SoH.
    pub fn endurance(&self, payload_mass: f64, soh: f64) -> Result<f64, EnergyError> {
        Ok(100.0 / delivery_discharge_rate(payload_mass, self, soh)?)
    }

    /// Naive full-recharge time: capacity over effective charger power (s).
    pub fn naive_full_charge_time(&self) -> f64 {
        3600.0 * self.theoretical_capacity / (self.charger_efficiency * self.charger_power)
    }
}

/// Per-UAV battery: observable SoC plus the hidden, constant state of health.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub soc: f64,
    pub soh: f64,
}

impl BatteryState {
    pub fn new(soc: f64, soh: f64) -> Result<Self, EnergyError> {
        if !(0.0..=100.0).contains(&soc) {
            return Err(EnergyError::InvalidArgument("soc must be in [0, 100]"));
        }
        if !(soh > 0.0 && soh <= 1.0) {
            return Err(EnergyError::InvalidSoh(soh));
        }
        Ok(Self { soc, soh })
    }

    pub fn true_capacity(&self, params: &UavParams) -> f64 {
        self.soh * params.theoretical_capacity
    }
}

/// Energy drawn per second of flight with the given payload (Wh/s).
pub fn consumption_per_second(payload_mass: f64, params: &UavParams) -> f64 {
    let weight = params.gravity * (params.frame_mass + params.battery_mass + payload_mass);
    let disc = (2.0 * params.rotor_count as f64 * params.air_density * params.blade_disc_area).sqrt();
    weight.powf(1.5) / (3600.0 * disc)
}

/// SoC drain while flying, in percent of true capacity per second.
pub fn delivery_discharge_rate(payload_mass: f64, params: &UavParams, soh: f64) -> Result<f64, EnergyError> {
    if !(soh > 0.0 && soh <= 1.0) {
        return Err(EnergyError::InvalidSoh(soh));
    }
    Ok(100.0 * consumption_per_second(payload_mass, params) / (params.theoretical_capacity * soh))
}

/// SoC after charging for `dt` seconds from `soc0`.
///
/// Closed-form solution of `dS/dt = (100 - S)·k`. The charging curve does not
/// depend on SoH.
pub fn charge_soc(soc0: f64, dt: f64, params: &UavParams) -> f64 {
    let k = params.charge_rate_constant();
    let soc = 100.0 - (100.0 - soc0) * (-k * dt).exp();
    snap(soc)
}

pub(crate) fn snap(soc: f64) -> f64 {
    if soc >= 100.0 - SNAP_EPS {
        100.0
    } else {
        soc
    }
}

/// Charging time needed to go from `soc0` to `soc_target`.
pub fn time_to_reach_soc(soc0: f64, soc_target: f64, params: &UavParams) -> Result<f64, EnergyError> {
    if soc_target >= 100.0 {
        return Err(EnergyError::UnreachableTarget(soc_target));
    }
    if soc_target < soc0 {
        return Err(EnergyError::InvalidArgument("target below current SoC"));
    }
    if soc0 < 0.0 {
        return Err(EnergyError::InvalidArgument("negative SoC"));
    }
    Ok(((100.0 - soc0) / (100.0 - soc_target)).ln() / params.charge_rate_constant())
}

/// Linear drain at `rate` %/s for `dt` seconds, floored at zero.
pub fn discharge_soc(soc0: f64, dt: f64, rate: f64) -> f64 {
    (soc0 - rate * dt).max(0.0)
}
