//! Indoor residential path loss with wall and floor penetration terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{wall_crossings, BuildingLayout, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "2.4ghz")]
    Band2_4,
    #[serde(rename = "5ghz")]
    Band5,
}

/// Which distance feeds the path-loss formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Straight-line 3D distance.
    #[default]
    Slant,
    /// Horizontal distance only; vertically stacked devices fall outside the
    /// model's validity and are rejected.
    Plan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub sensitivity_dbm: f64,
    /// Extra margin the STA-side reception test must clear.
    #[serde(default)]
    pub delta_p_db: f64,
    pub carrier_ghz: f64,
    pub band: Band,
    pub n_primary_channels: u32,
    #[serde(default)]
    pub distance_mode: DistanceMode,
}

impl RadioConfig {
    /// 18 dBm transmitters, -86 dBm sensitivity, three 2.4 GHz channels.
    pub fn residential_2g4() -> Self {
        RadioConfig {
            tx_power_dbm: 18.0,
            sensitivity_dbm: -86.0,
            delta_p_db: 0.0,
            carrier_ghz: 2.4,
            band: Band::Band2_4,
            n_primary_channels: 3,
            distance_mode: DistanceMode::Slant,
        }
    }

    pub fn with_delta_p(mut self, delta_p_db: f64) -> Self {
        self.delta_p_db = delta_p_db;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("radio.tx_power_dbm", self.tx_power_dbm),
            ("radio.sensitivity_dbm", self.sensitivity_dbm),
            ("radio.delta_p_db", self.delta_p_db),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        if self.delta_p_db < 0.0 {
            return Err(Error::invalid("radio.delta_p_db", "must be >= 0"));
        }
        if !(self.carrier_ghz.is_finite() && self.carrier_ghz > 0.0) {
            return Err(Error::invalid("radio.carrier_ghz", "must be positive"));
        }
        if self.n_primary_channels < 1 {
            return Err(Error::invalid("radio.n_primary_channels", "must be at least 1"));
        }
        Ok(())
    }
}

/// Floor penetration loss; zero when no floor is crossed.
pub fn floor_loss_db(floors: u32) -> f64 {
    if floors == 0 {
        return 0.0;
    }
    let f = floors as f64;
    18.3 * f.powf((f + 2.0) / (f + 1.0) - 0.46)
}

pub fn path_loss_db(d_m: f64, carrier_ghz: f64, floors: u32, walls: u32) -> Result<f64> {
    if !(d_m > 1.0) || !d_m.is_finite() {
        return Err(Error::DistanceOutOfDomain(d_m));
    }
    let mut loss = 40.05 + 20.0 * (carrier_ghz / 2.4).log10() + 20.0 * d_m.min(5.0).log10();
    if d_m > 5.0 {
        loss += 35.0 * (d_m / 5.0).log10();
    }
    Ok(loss + floor_loss_db(floors) + 5.0 * walls as f64)
}

/// Power received at `rx` from a transmitter at `tx`.
pub fn received_power_dbm(
    rx: &Point3,
    tx: &Point3,
    layout: &BuildingLayout,
    radio: &RadioConfig,
) -> Result<f64> {
    let crossings = wall_crossings(layout, rx, tx)?;
    let d = match radio.distance_mode {
        DistanceMode::Slant => rx.distance(tx),
        DistanceMode::Plan => rx.plan_distance(tx),
    };
    let loss = path_loss_db(d, radio.carrier_ghz, crossings.floors, crossings.walls)?;
    Ok(radio.tx_power_dbm - loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn reference_values() {
        // Expected values evaluated independently of this implementation.
        assert!(close(path_loss_db(1.001, 2.4, 0, 0).unwrap(), 40.058_681_549_586, 1e-9));
        assert!(close(path_loss_db(5.0, 2.4, 0, 0).unwrap(), 54.029_400_086_720, 1e-9));
        assert!(close(path_loss_db(10.0, 2.4, 1, 2).unwrap(), 92.865_449_934_960, 1e-9));
        assert!(close(path_loss_db(20.0, 5.0, 0, 1).unwrap(), 86.476_675_035_687, 1e-9));
    }

    #[test]
    fn domain_is_open_at_one_metre() {
        assert!(matches!(path_loss_db(1.0, 2.4, 0, 0), Err(Error::DistanceOutOfDomain(_))));
        assert!(path_loss_db(0.5, 2.4, 0, 0).is_err());
        assert!(path_loss_db(f64::NAN, 2.4, 0, 0).is_err());
    }

    #[test]
    fn floor_terms() {
        let expected = [0.0, 18.3, 33.523_597_623_891, 43.588_997_513_228, 51.047_618_188_425, 57.067_637_355_788];
        for (f, e) in expected.iter().enumerate() {
            assert!(close(floor_loss_db(f as u32), *e, 1e-9), "F = {f}");
        }
    }

    #[test]
    fn wall_and_doubling_increments() {
        let base = path_loss_db(7.0, 2.4, 1, 0).unwrap();
        assert!(close(path_loss_db(7.0, 2.4, 1, 1).unwrap() - base, 5.0, 1e-12));
        let d = path_loss_db(14.0, 2.4, 1, 0).unwrap() - base;
        assert!(close(d, 35.0 * 2f64.log10(), 1e-9));
    }

    #[test]
    fn link_budget_at_threshold() {
        let radio = RadioConfig::residential_2g4();
        assert!(close(radio.tx_power_dbm - 40.05, -22.05, 1e-12));
        assert!(close(radio.tx_power_dbm - 104.0, radio.sensitivity_dbm, 1e-12));
    }

    #[test]
    fn received_power_is_symmetric_and_plan_mode_rejects_stacks() {
        let layout = BuildingLayout::residential(10.0, 10.0);
        let mut radio = RadioConfig::residential_2g4();
        let a = Point3::new(5.0, 5.0, 1.5);
        let b = Point3::new(23.0, 14.0, 4.5);
        let ab = received_power_dbm(&a, &b, &layout, &radio).unwrap();
        let ba = received_power_dbm(&b, &a, &layout, &radio).unwrap();
        assert_eq!(ab, ba);

        radio.distance_mode = DistanceMode::Plan;
        let above = Point3::new(5.0, 5.0, 4.5);
        assert!(received_power_dbm(&a, &above, &layout, &radio).is_err());
    }
}
