//! Enumerates STA grid positions and alien APs to count hostile APs (N_LC)
//! per grid point, and aggregates the counts over the building.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{ap_hidden, sta_hears};
use crate::error::Result;
use crate::layout::{ap_position, sta_grid, ApPlacement, ApartmentId, BuildingLayout, MirrorPolicy, Point3};
use crate::propagation::{received_power_dbm, Band, RadioConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HostileMap {
    pub apartment: ApartmentId,
    /// (points across y, points along x)
    pub grid_shape: (usize, usize),
    pub values: Vec<Vec<u32>>,
    pub hostile_sets: Vec<Vec<Vec<ApartmentId>>>,
}

impl HostileMap {
    pub fn max(&self) -> u32 {
        self.values.iter().flatten().copied().max().unwrap_or(0)
    }

    /// First grid cell (row-major) attaining the maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let max = self.max();
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v == max {
                    return (i, j);
                }
            }
        }
        (0, 0)
    }

    pub fn mean(&self) -> f64 {
        let n = self.grid_shape.0 * self.grid_shape.1;
        if n == 0 {
            return 0.0;
        }
        let total: u64 = self.values.iter().flatten().map(|&v| v as u64).sum();
        total as f64 / n as f64
    }

    /// Renders the count matrix as CSV: a comment header naming the scenario,
    /// then one line per grid row.
    pub fn to_csv(&self, scenario: &str, delta_p_db: f64) -> String {
        let mut out = format!(
            "# scenario={scenario} apartment={} delta_p_db={delta_p_db}\n",
            self.apartment
        );
        for row in &self.values {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Every AP position in [`BuildingLayout::apartments`] order.
pub fn ap_positions(
    layout: &BuildingLayout,
    placement: &ApPlacement,
    mirror: MirrorPolicy,
) -> Result<Vec<Point3>> {
    layout
        .apartments()
        .map(|apt| ap_position(layout, apt, placement, mirror))
        .collect()
}

struct Candidate {
    id: ApartmentId,
    position: Point3,
}

/// Aliens that the home AP cannot sense; only these can ever be hostile.
fn hidden_aliens(
    layout: &BuildingLayout,
    radio: &RadioConfig,
    positions: &[Point3],
    home: ApartmentId,
) -> Result<Vec<Candidate>> {
    let ap0 = positions[layout.index_of(home)];
    let mut out = Vec::new();
    for apt in layout.apartments().filter(|a| *a != home) {
        let position = positions[layout.index_of(apt)];
        if ap_hidden(received_power_dbm(&ap0, &position, layout, radio)?, radio) {
            out.push(Candidate { id: apt, position });
        }
    }
    Ok(out)
}

fn map_from_positions(
    layout: &BuildingLayout,
    radio: &RadioConfig,
    positions: &[Point3],
    apt: ApartmentId,
) -> Result<HostileMap> {
    let candidates = hidden_aliens(layout, radio, positions, apt)?;
    let points = sta_grid(layout, apt)?;
    let sets: Vec<Vec<ApartmentId>> = points
        .par_iter()
        .map(|sta| {
            let mut hostile = Vec::new();
            for c in &candidates {
                if sta_hears(received_power_dbm(sta, &c.position, layout, radio)?, radio) {
                    hostile.push(c.id);
                }
            }
            Ok(hostile)
        })
        .collect::<Result<_>>()?;

    let (ny, nx) = layout.grid_shape();
    let mut values = vec![vec![0; nx]; ny];
    let mut hostile_sets = vec![vec![Vec::new(); nx]; ny];
    for (k, set) in sets.into_iter().enumerate() {
        let (i, j) = (k / nx, k % nx);
        values[i][j] = set.len() as u32;
        hostile_sets[i][j] = set;
    }
    Ok(HostileMap {
        apartment: apt,
        grid_shape: (ny, nx),
        values,
        hostile_sets,
    })
}

pub fn hostile_map(
    layout: &BuildingLayout,
    radio: &RadioConfig,
    placement: &ApPlacement,
    mirror: MirrorPolicy,
    apt: ApartmentId,
) -> Result<HostileMap> {
    layout.check(apt)?;
    let positions = ap_positions(layout, placement, mirror)?;
    map_from_positions(layout, radio, &positions, apt)
}

/// Hostile maps for every apartment, in [`BuildingLayout::apartments`] order.
pub fn all_hostile_maps(
    layout: &BuildingLayout,
    radio: &RadioConfig,
    placement: &ApPlacement,
    mirror: MirrorPolicy,
) -> Result<Vec<HostileMap>> {
    let positions = ap_positions(layout, placement, mirror)?;
    let apartments: Vec<ApartmentId> = layout.apartments().collect();
    apartments
        .par_iter()
        .map(|apt| map_from_positions(layout, radio, &positions, *apt))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingReport {
    pub row: u32,
    /// Mean N_LC per apartment of `row`, indexed `[floor][column]`.
    pub per_apartment_mean: Vec<Vec<f64>>,
    pub delta_p_db: f64,
    pub band: Band,
    /// Largest N_LC at any grid point of any apartment in the building.
    pub max_nlc: u32,
}

impl BuildingReport {
    pub fn to_csv(&self, scenario: &str) -> String {
        let mut out = format!(
            "# scenario={scenario} row={} delta_p_db={} (rows: floor, columns: apartment)\n",
            self.row, self.delta_p_db
        );
        for floor in &self.per_apartment_mean {
            let line: Vec<String> = floor.iter().map(|v| format_sig(*v, 6)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn building_report(
    layout: &BuildingLayout,
    radio: &RadioConfig,
    placement: &ApPlacement,
    mirror: MirrorPolicy,
    row: u32,
) -> Result<BuildingReport> {
    layout.check(ApartmentId::new(0, row, 0))?;
    let maps = all_hostile_maps(layout, radio, placement, mirror)?;
    let mut per_apartment_mean =
        vec![vec![0.0; layout.apartments_per_row as usize]; layout.floors as usize];
    let mut max_nlc = 0;
    for map in &maps {
        max_nlc = max_nlc.max(map.max());
        let apt = map.apartment;
        if apt.row == row {
            per_apartment_mean[apt.floor as usize][apt.column as usize] = map.mean();
        }
    }
    Ok(BuildingReport {
        row,
        per_apartment_mean,
        delta_p_db: radio.delta_p_db,
        band: radio.band,
        max_nlc,
    })
}

/// Every apartment appearing in any hostile set, with its Chebyshev hop
/// distance from the home apartment.
pub fn neighbor_geometry(hm: &HostileMap) -> BTreeSet<(ApartmentId, u32)> {
    hm.hostile_sets
        .iter()
        .flatten()
        .flatten()
        .map(|id| (*id, hm.apartment.hops_to(id)))
        .collect()
}

/// Formats `v` with `digits` significant digits, trimming trailing zeros.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".to_string() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    let mut s = String::new();
    let _ = write!(s, "{v:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        s
    }
}
