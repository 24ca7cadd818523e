//! Residential building geometry: apartments on a regular floor/row/column
//! grid, zero-thickness wall planes at apartment boundaries, and the regular
//! AP/STA placement scheme used by the analysis.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plan-view distance from a wall junction under which a segment is treated
/// as passing through the corner.
pub const CORNER_EPS_M: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingLayout {
    pub floors: u32,
    pub rows: u32,
    pub apartments_per_row: u32,
    /// Extent along a row (x).
    pub apartment_width_m: f64,
    /// Extent across a row (y).
    pub apartment_depth_m: f64,
    pub floor_height_m: f64,
    pub device_height_m: f64,
    /// Additional walls charged every time a signal crosses a row boundary.
    #[serde(default)]
    pub extra_inter_row_walls: u32,
}

impl BuildingLayout {
    /// Five floors, two rows of ten apartments, 3 m floors, devices at 1.5 m.
    pub fn residential(width_m: f64, depth_m: f64) -> Self {
        BuildingLayout {
            floors: 5,
            rows: 2,
            apartments_per_row: 10,
            apartment_width_m: width_m,
            apartment_depth_m: depth_m,
            floor_height_m: 3.0,
            device_height_m: 1.5,
            extra_inter_row_walls: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.floors < 1 {
            return Err(Error::invalid("layout.floors", "must be at least 1"));
        }
        if self.rows < 1 {
            return Err(Error::invalid("layout.rows", "must be at least 1"));
        }
        if self.apartments_per_row < 1 {
            return Err(Error::invalid(
                "layout.apartments_per_row",
                "must be at least 1",
            ));
        }
        for (field, v) in [
            ("layout.apartment_width_m", self.apartment_width_m),
            ("layout.apartment_depth_m", self.apartment_depth_m),
        ] {
            if !v.is_finite() || v < 2.0 {
                return Err(Error::invalid(field, format!("must be >= 2 m (got {v})")));
            }
            if v.fract() != 0.0 {
                return Err(Error::invalid(
                    field,
                    format!("must be a whole number of metres for the 1 m STA grid (got {v})"),
                ));
            }
        }
        if !self.floor_height_m.is_finite() || self.floor_height_m <= 0.0 {
            return Err(Error::invalid("layout.floor_height_m", "must be positive"));
        }
        if !(self.device_height_m > 0.0 && self.device_height_m < self.floor_height_m) {
            return Err(Error::invalid(
                "layout.device_height_m",
                format!(
                    "must lie strictly between 0 and the floor height {} m (got {})",
                    self.floor_height_m, self.device_height_m
                ),
            ));
        }
        Ok(())
    }

    pub fn apartment_count(&self) -> usize {
        (self.floors * self.rows * self.apartments_per_row) as usize
    }

    pub fn contains(&self, apt: ApartmentId) -> bool {
        apt.floor < self.floors && apt.row < self.rows && apt.column < self.apartments_per_row
    }

    pub fn check(&self, apt: ApartmentId) -> Result<()> {
        if self.contains(apt) {
            Ok(())
        } else {
            Err(Error::ApartmentOutOfRange {
                apt,
                floors: self.floors,
                rows: self.rows,
                columns: self.apartments_per_row,
            })
        }
    }

    /// All apartments in floor-major, then row, then column order.
    pub fn apartments(&self) -> impl Iterator<Item = ApartmentId> + '_ {
        (0..self.floors).flat_map(move |floor| {
            (0..self.rows).flat_map(move |row| {
                (0..self.apartments_per_row).map(move |column| ApartmentId { floor, row, column })
            })
        })
    }

    /// Dense index matching the order of [`BuildingLayout::apartments`].
    pub fn index_of(&self, apt: ApartmentId) -> usize {
        ((apt.floor * self.rows + apt.row) * self.apartments_per_row + apt.column) as usize
    }

    /// The apartment in the middle floor, first row, middle column.
    pub fn central_apartment(&self) -> ApartmentId {
        ApartmentId {
            floor: self.floors / 2,
            row: 0,
            column: (self.apartments_per_row - 1) / 2,
        }
    }

    pub fn width_m(&self) -> f64 {
        self.apartments_per_row as f64 * self.apartment_width_m
    }

    pub fn depth_m(&self) -> f64 {
        self.rows as f64 * self.apartment_depth_m
    }

    /// STA grid dimensions as (points across y, points along x).
    pub fn grid_shape(&self) -> (usize, usize) {
        (
            self.apartment_depth_m as usize,
            self.apartment_width_m as usize,
        )
    }

    pub fn floor_index(&self, z: f64) -> u32 {
        let f = (z / self.floor_height_m).floor();
        if f <= 0.0 {
            0
        } else {
            (f as u32).min(self.floors - 1)
        }
    }

    /// South-west corner of the apartment, at device height.
    pub fn origin(&self, apt: ApartmentId) -> (f64, f64, f64) {
        (
            apt.column as f64 * self.apartment_width_m,
            apt.row as f64 * self.apartment_depth_m,
            apt.floor as f64 * self.floor_height_m + self.device_height_m,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    pub fn plan_distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ApartmentId {
    pub floor: u32,
    pub row: u32,
    pub column: u32,
}

impl ApartmentId {
    pub const fn new(floor: u32, row: u32, column: u32) -> Self {
        ApartmentId { floor, row, column }
    }

    /// Chebyshev distance over (floor, row, column) steps.
    pub fn hops_to(&self, other: &ApartmentId) -> u32 {
        self.floor
            .abs_diff(other.floor)
            .max(self.row.abs_diff(other.row))
            .max(self.column.abs_diff(other.column))
    }
}

impl fmt::Display for ApartmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.floor, self.row, self.column)
    }
}

/// The nine regular AP locations inside an apartment. North is +y, east is +x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    Center,
    WallMidNorth,
    WallMidSouth,
    WallMidEast,
    WallMidWest,
    CornerNe,
    CornerNw,
    CornerSe,
    CornerSw,
}

impl PlacementKind {
    pub const ALL: [PlacementKind; 9] = [
        PlacementKind::Center,
        PlacementKind::WallMidNorth,
        PlacementKind::WallMidSouth,
        PlacementKind::WallMidEast,
        PlacementKind::WallMidWest,
        PlacementKind::CornerNe,
        PlacementKind::CornerNw,
        PlacementKind::CornerSe,
        PlacementKind::CornerSw,
    ];
}

fn default_inset() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApPlacement {
    pub kind: PlacementKind,
    /// Distance from each adjacent wall for corner kinds, and from the wall
    /// itself for wall-middle kinds.
    #[serde(default = "default_inset")]
    pub corner_inset_m: f64,
}

impl ApPlacement {
    pub fn new(kind: PlacementKind) -> Self {
        ApPlacement {
            kind,
            corner_inset_m: default_inset(),
        }
    }

    pub fn validate(&self, layout: &BuildingLayout) -> Result<()> {
        let limit = layout.apartment_width_m.min(layout.apartment_depth_m) / 2.0;
        if !(self.corner_inset_m > 0.0 && self.corner_inset_m <= limit) {
            return Err(Error::invalid(
                "placement.corner_inset_m",
                format!("must lie in (0, {limit}] m (got {})", self.corner_inset_m),
            ));
        }
        Ok(())
    }

    /// Position relative to the apartment's south-west corner.
    fn local(&self, width: f64, depth: f64) -> (f64, f64) {
        let i = self.corner_inset_m;
        match self.kind {
            PlacementKind::Center => (width / 2.0, depth / 2.0),
            PlacementKind::WallMidNorth => (width / 2.0, depth - i),
            PlacementKind::WallMidSouth => (width / 2.0, i),
            PlacementKind::WallMidEast => (width - i, depth / 2.0),
            PlacementKind::WallMidWest => (i, depth / 2.0),
            PlacementKind::CornerNe => (width - i, depth - i),
            PlacementKind::CornerNw => (i, depth - i),
            PlacementKind::CornerSe => (width - i, i),
            PlacementKind::CornerSw => (i, i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorPolicy {
    /// Same local placement in every apartment.
    Uniform,
    /// Odd rows are reflected across the row boundary, so an inner-corner AP
    /// in one row faces an inner-corner AP in the next.
    #[default]
    MirroredAcrossRows,
}

pub fn ap_position(
    layout: &BuildingLayout,
    apt: ApartmentId,
    placement: &ApPlacement,
    mirror: MirrorPolicy,
) -> Result<Point3> {
    layout.check(apt)?;
    let (x0, y0, z) = layout.origin(apt);
    let (lx, mut ly) = placement.local(layout.apartment_width_m, layout.apartment_depth_m);
    if mirror == MirrorPolicy::MirroredAcrossRows && apt.row % 2 == 1 {
        ly = layout.apartment_depth_m - ly;
    }
    Ok(Point3::new(x0 + lx, y0 + ly, z))
}

/// STA candidate positions on a 1 m grid offset 0.5 m from the walls,
/// ordered row-major (y outer, x inner).
pub fn sta_grid(layout: &BuildingLayout, apt: ApartmentId) -> Result<Vec<Point3>> {
    layout.check(apt)?;
    let (x0, y0, z) = layout.origin(apt);
    let (ny, nx) = layout.grid_shape();
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            out.push(Point3::new(x0 + ix as f64 + 0.5, y0 + iy as f64 + 0.5, z));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct WallCrossings {
    pub walls: u32,
    pub floors: u32,
    pub corner_hits: u32,
}

/// Counts interior wall planes crossed by the plan-view projection of `a -> b`
/// and the number of floors separating the endpoints. Passing within
/// [`CORNER_EPS_M`] of a wall junction counts as two walls.
pub fn wall_crossings(layout: &BuildingLayout, a: &Point3, b: &Point3) -> Result<WallCrossings> {
    if a == b {
        return Err(Error::DegenerateSegment {
            x: a.x,
            y: a.y,
            z: a.z,
        });
    }
    let floors = layout
        .floor_index(a.z)
        .abs_diff(layout.floor_index(b.z));

    let w = layout.apartment_width_m;
    let d = layout.apartment_depth_m;
    let x_planes = 1..layout.apartments_per_row;
    let y_planes = 1..layout.rows;
    let row_wall = 1 + layout.extra_inter_row_walls;

    let mut hit_x = vec![false; layout.apartments_per_row as usize];
    let mut hit_y = vec![false; layout.rows as usize];
    let mut corner_hits = 0;
    let mut walls = 0;
    for k in x_planes.clone() {
        for j in y_planes.clone() {
            let jx = k as f64 * w;
            let jy = j as f64 * d;
            if plan_distance_to_segment(jx, jy, a, b) <= CORNER_EPS_M {
                corner_hits += 1;
                walls += 1 + row_wall;
                hit_x[k as usize] = true;
                hit_y[j as usize] = true;
            }
        }
    }

    let strictly_between = |v: f64, p: f64, q: f64| (v - p) * (v - q) < 0.0;
    for k in x_planes {
        if !hit_x[k as usize] && strictly_between(k as f64 * w, a.x, b.x) {
            walls += 1;
        }
    }
    for j in y_planes {
        if !hit_y[j as usize] && strictly_between(j as f64 * d, a.y, b.y) {
            walls += row_wall;
        }
    }

    Ok(WallCrossings {
        walls,
        floors,
        corner_hits,
    })
}

fn plan_distance_to_segment(px: f64, py: f64, a: &Point3, b: &Point3) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.x) * dx + (py - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}
