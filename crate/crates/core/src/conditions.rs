//! The three jointly necessary conditions for a damaging beacon collision
//! (time, channel, location) and the closed-form drift arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{BuildingLayout, Point3};
use crate::propagation::{received_power_dbm, RadioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconConfig {
    /// Full on-air duration including the preamble.
    pub beacon_duration_us: f64,
    #[serde(default)]
    pub preamble_us: f64,
    pub beacon_interval_ms: f64,
    /// Per-AP bound on |clock drift|.
    #[serde(default = "default_drift_bound")]
    pub drift_ppm_bound: f64,
}

fn default_drift_bound() -> f64 {
    10.0
}

impl Default for BeaconConfig {
    /// 0.5 ms beacons every 0.5 s.
    fn default() -> Self {
        BeaconConfig {
            beacon_duration_us: 500.0,
            preamble_us: 0.0,
            beacon_interval_ms: 500.0,
            drift_ppm_bound: default_drift_bound(),
        }
    }
}

impl BeaconConfig {
    pub fn validate(&self) -> Result<()> {
        let interval_us = self.interval_us();
        if !(self.beacon_duration_us > 0.0 && self.beacon_duration_us <= interval_us) {
            return Err(Error::invalid(
                "beacons.beacon_duration_us",
                format!(
                    "must lie in (0, {interval_us}] us (got {})",
                    self.beacon_duration_us
                ),
            ));
        }
        if !(self.preamble_us >= 0.0 && self.preamble_us < self.beacon_duration_us) {
            return Err(Error::invalid(
                "beacons.preamble_us",
                format!(
                    "must lie in [0, {}) us (got {})",
                    self.beacon_duration_us, self.preamble_us
                ),
            ));
        }
        if !(0.0..=100.0).contains(&self.drift_ppm_bound) {
            return Err(Error::invalid(
                "beacons.drift_ppm_bound",
                format!("must lie in [0, 100] ppm (got {})", self.drift_ppm_bound),
            ));
        }
        Ok(())
    }

    pub fn interval_us(&self) -> f64 {
        self.beacon_interval_ms * 1000.0
    }

    /// The vulnerable part of the beacon: its duration minus the preamble.
    pub fn vulnerable_us(&self) -> f64 {
        self.beacon_duration_us - self.preamble_us
    }

    pub fn duration_ns(&self) -> i64 {
        (self.beacon_duration_us * 1e3).round() as i64
    }

    pub fn preamble_ns(&self) -> i64 {
        (self.preamble_us * 1e3).round() as i64
    }

    pub fn interval_ns(&self) -> i64 {
        (self.beacon_interval_ms * 1e6).round() as i64
    }
}

/// STA branch: the alien AP is heard at the STA with the extra margin.
pub fn sta_hears(power_dbm: f64, radio: &RadioConfig) -> bool {
    power_dbm >= radio.sensitivity_dbm + radio.delta_p_db
}

/// AP branch: the home AP cannot sense the alien AP.
pub fn ap_hidden(power_dbm: f64, radio: &RadioConfig) -> bool {
    power_dbm < radio.sensitivity_dbm
}

/// True when `apx` can destroy `ap0`'s beacon at `sta` without `ap0` noticing.
pub fn location_condition(
    sta: &Point3,
    ap0: &Point3,
    apx: &Point3,
    layout: &BuildingLayout,
    radio: &RadioConfig,
) -> Result<bool> {
    let at_sta = received_power_dbm(sta, apx, layout, radio)?;
    let at_ap0 = received_power_dbm(ap0, apx, layout, radio)?;
    Ok(sta_hears(at_sta, radio) && ap_hidden(at_ap0, radio))
}

/// Strict time condition on integer timestamps: the alien beacon starts
/// strictly before the home beacon and the home start falls inside the
/// alien's vulnerable window.
pub fn time_condition_met(home_start_ns: i64, alien_start_ns: i64, alien_vulnerable_ns: i64) -> bool {
    alien_start_ns < home_start_ns && home_start_ns - alien_start_ns < alien_vulnerable_ns
}

/// Per-interval probability that one alien beacon satisfies the time condition.
pub fn time_condition_probability(beacons: &BeaconConfig) -> f64 {
    (beacons.vulnerable_us() / beacons.interval_us()).clamp(0.0, 1.0)
}

/// Probability that two independently chosen primary channels coincide.
pub fn channel_condition_probability(radio: &RadioConfig) -> f64 {
    1.0 / radio.n_primary_channels as f64
}

/// A duration that may be unbounded (zero relative drift).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSpan {
    Seconds(f64),
    Unbounded,
}

impl DriftSpan {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            DriftSpan::Seconds(s) => Some(*s),
            DriftSpan::Unbounded => None,
        }
    }
}

impl fmt::Display for DriftSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSpan::Seconds(s) => write!(f, "{s} s"),
            DriftSpan::Unbounded => f.write_str("infinite"),
        }
    }
}

// us / ppm is seconds, which keeps round inputs exact in f64.
fn span(numerator_us: f64, relative_drift_ppm: f64) -> DriftSpan {
    let drift = relative_drift_ppm.abs();
    if drift == 0.0 {
        DriftSpan::Unbounded
    } else {
        DriftSpan::Seconds(numerator_us / drift)
    }
}

/// How long two overlapping beacons keep colliding before linear drift
/// slides them apart.
pub fn collision_persistence_s(beacons: &BeaconConfig, relative_drift_ppm: f64) -> DriftSpan {
    span(beacons.vulnerable_us(), relative_drift_ppm)
}

/// Period with which the relative phase of two drifting APs wraps around and
/// a collision era recurs.
pub fn collision_recurrence_s(beacons: &BeaconConfig, relative_drift_ppm: f64) -> DriftSpan {
    span(beacons.interval_us(), relative_drift_ppm)
}
