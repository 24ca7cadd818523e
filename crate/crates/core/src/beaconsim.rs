//! Seeded discrete-event simulation of periodic beacons with linear clock
//! drift, random channels and phases.
//!
//! Every AP beacon is an event on an integer-nanosecond timeline. A STA loses
//! its home beacon when some alien AP on the same primary channel satisfies
//! the location condition for that STA and its beacon started strictly
//! earlier and is still inside its vulnerable window when the home beacon
//! starts. Runs are bit-for-bit reproducible from the seed: initial draws use
//! one ChaCha stream and each AP's strategy decisions use a stream of its own,
//! so changing the mitigation never changes the initial channels or phases.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{all_hostile_maps, ap_positions};
use crate::conditions::{ap_hidden, location_condition, time_condition_met, BeaconConfig};
use crate::error::{Error, Result};
use crate::layout::{sta_grid, ApPlacement, ApartmentId, BuildingLayout, MirrorPolicy, Point3};
use crate::mitigation::{
    apply_distinct_intervals, apply_dsc, mbca_step, p_persistent_gate, validate_plan, BeaconObservation,
    HeardReport, MbcaParams, MbcaState, MitigationSpec, NeighborBeaconReport,
};
use crate::propagation::{received_power_dbm, Band, RadioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApState {
    pub id: ApartmentId,
    pub position: Point3,
    pub primary_channel: u32,
    /// Phase of beacon 0, in `[0, beacon_interval_ns)`.
    pub tbtt_offset_ns: i64,
    pub drift_ppm: f64,
    pub beacon_interval_ns: i64,
}

/// Start of beacon `k` under constant-rate drift, evaluated in closed form.
pub fn k_th_beacon_start(ap: &ApState, k: u64) -> i64 {
    schedule(ap.tbtt_offset_ns, k, ap.beacon_interval_ns, ap.drift_ppm)
}

fn schedule(anchor_ns: i64, steps: u64, interval_ns: i64, drift_ppm: f64) -> i64 {
    let nominal = steps as i128 * interval_ns as i128;
    let correction = (nominal as f64 * drift_ppm * 1e-6).round() as i128;
    (anchor_ns as i128 + nominal + correction) as i64
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StaPositionPolicy {
    /// One STA per apartment at the grid point with the most hostile APs.
    #[default]
    WorstGridPoint,
    /// One STA at every grid point of every apartment.
    AllGridPoints,
    /// STAs at explicit positions, local to their apartment.
    Explicit { points: Vec<StaPoint> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaPoint {
    pub apartment: ApartmentId,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitAp {
    #[serde(default)]
    pub name: Option<String>,
    /// Fixed primary channel; drawn per run when absent.
    #[serde(default)]
    pub channel: Option<u32>,
    #[serde(default)]
    pub tbtt_offset_us: Option<f64>,
    #[serde(default)]
    pub drift_ppm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSta {
    pub home: usize,
    pub hostile: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    /// One AP per apartment of the configured building.
    Building {
        #[serde(default)]
        sta_position_policy: StaPositionPolicy,
    },
    /// Abstract APs with given hostility and hearing relations.
    Explicit {
        aps: Vec<ExplicitAp>,
        stas: Vec<ExplicitSta>,
        /// `hears[r]` lists the APs that AP `r` can sense.
        #[serde(default)]
        hears: Vec<Vec<usize>>,
    },
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::Building {
            sta_position_policy: StaPositionPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApNode {
    pub id: ApartmentId,
    pub position: Point3,
    pub channel: Option<u32>,
    pub tbtt_offset_ns: Option<i64>,
    pub drift_ppm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaNode {
    pub home: usize,
    pub hostile: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Point3>,
}

/// Resolved relations the timeline runs against.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub aps: Vec<ApNode>,
    pub stas: Vec<StaNode>,
    pub hears: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub layout: BuildingLayout,
    pub radio: RadioConfig,
    pub beacons: BeaconConfig,
    pub placement: ApPlacement,
    pub mirror: MirrorPolicy,
    pub topology: TopologySpec,
    pub mitigation: Vec<MitigationSpec>,
    pub seed: u64,
    pub duration_s: f64,
    pub disassociation_streak: u32,
    /// Count intentionally skipped home beacons towards the loss streak.
    pub skips_count_as_missed: bool,
    /// Home beacons in the first `warmup_intervals` longest intervals are not
    /// scored, so every alien has had a chance to transmit once.
    pub warmup_intervals: u32,
}

impl SimConfig {
    /// A config over an explicit topology; geometry fields are unused.
    pub fn explicit(topology: TopologySpec, beacons: BeaconConfig, duration_s: f64) -> Self {
        SimConfig {
            layout: BuildingLayout::residential(10.0, 10.0),
            radio: RadioConfig::residential_2g4(),
            beacons,
            placement: ApPlacement::new(crate::layout::PlacementKind::CornerNe),
            mirror: MirrorPolicy::MirroredAcrossRows,
            topology,
            mitigation: Vec::new(),
            seed: 0,
            duration_s,
            disassociation_streak: 10,
            skips_count_as_missed: false,
            warmup_intervals: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.radio.validate()?;
        self.beacons.validate()?;
        self.placement.validate(&self.layout)?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid("simulation.duration_s", "must be positive"));
        }
        if self.disassociation_streak < 1 {
            return Err(Error::invalid(
                "simulation.disassociation_streak",
                "must be at least 1",
            ));
        }
        validate_plan(
            &self.mitigation,
            self.beacons.beacon_duration_us,
            self.min_interval_us(),
        )?;
        if let TopologySpec::Explicit { aps, stas, hears } = &self.topology {
            let n = aps.len();
            if n == 0 {
                return Err(Error::invalid("simulation.topology.aps", "must not be empty"));
            }
            if !hears.is_empty() && hears.len() != n {
                return Err(Error::invalid(
                    "simulation.topology.hears",
                    format!("needs one list per AP ({n}), got {}", hears.len()),
                ));
            }
            for (r, list) in hears.iter().enumerate() {
                if let Some(x) = list.iter().find(|x| **x >= n || **x == r) {
                    return Err(Error::invalid(
                        "simulation.topology.hears",
                        format!("AP {r} lists invalid neighbour {x}"),
                    ));
                }
            }
            for (i, ap) in aps.iter().enumerate() {
                if let Some(c) = ap.channel {
                    if c >= self.radio.n_primary_channels {
                        return Err(Error::invalid(
                            "simulation.topology.aps",
                            format!("AP {i} channel {c} >= n_primary_channels"),
                        ));
                    }
                }
                if let Some(o) = ap.tbtt_offset_us {
                    if !(o >= 0.0 && o < self.beacons.interval_us()) {
                        return Err(Error::invalid(
                            "simulation.topology.aps",
                            format!("AP {i} tbtt_offset_us {o} outside [0, interval)"),
                        ));
                    }
                }
                if let Some(d) = ap.drift_ppm {
                    if !(d.abs() <= 100.0) {
                        return Err(Error::invalid(
                            "simulation.topology.aps",
                            format!("AP {i} drift_ppm {d} exceeds 100 ppm"),
                        ));
                    }
                }
            }
            for (i, sta) in stas.iter().enumerate() {
                if sta.home >= n {
                    return Err(Error::invalid(
                        "simulation.topology.stas",
                        format!("STA {i} home {} out of range", sta.home),
                    ));
                }
                for x in &sta.hostile {
                    if *x >= n || *x == sta.home {
                        return Err(Error::invalid(
                            "simulation.topology.stas",
                            format!("STA {i} lists invalid hostile AP {x}"),
                        ));
                    }
                    if hears.get(sta.home).is_some_and(|h| h.contains(x)) {
                        return Err(Error::invalid(
                            "simulation.topology.stas",
                            format!("STA {i}: AP {x} cannot be hostile, home AP {} senses it", sta.home),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn min_interval_us(&self) -> f64 {
        let mut min = self.beacons.interval_us();
        for m in &self.mitigation {
            if let MitigationSpec::DistinctIntervals { interval_set_us } = m {
                for v in interval_set_us {
                    min = min.min(*v);
                }
            }
        }
        min
    }

    /// Radio config after any DSC offset.
    pub fn effective_radio(&self) -> RadioConfig {
        self.mitigation.iter().fold(self.radio, |r, m| match m {
            MitigationSpec::Dsc {
                sensitivity_offset_db,
            } => apply_dsc(&r, *sensitivity_offset_db),
            _ => r,
        })
    }

    fn timing(&self) -> &MitigationSpec {
        self.mitigation
            .iter()
            .find(|m| m.is_timing())
            .unwrap_or(&MitigationSpec::None)
    }
}

pub fn build_topology(cfg: &SimConfig) -> Result<Topology> {
    let radio = cfg.effective_radio();
    match &cfg.topology {
        TopologySpec::Explicit { aps, stas, hears } => {
            let aps = aps
                .iter()
                .enumerate()
                .map(|(i, a)| ApNode {
                    id: ApartmentId::new(0, 0, i as u32),
                    position: Point3::new(0.0, 0.0, 0.0),
                    channel: a.channel,
                    tbtt_offset_ns: a.tbtt_offset_us.map(|o| (o * 1e3).round() as i64),
                    drift_ppm: a.drift_ppm,
                })
                .collect::<Vec<_>>();
            let mut hears = hears.clone();
            hears.resize(aps.len(), Vec::new());
            let stas = stas
                .iter()
                .map(|s| StaNode {
                    home: s.home,
                    hostile: s.hostile.clone(),
                    position: None,
                })
                .collect();
            Ok(Topology { aps, stas, hears })
        }
        TopologySpec::Building {
            sta_position_policy,
        } => {
            let layout = &cfg.layout;
            let positions = ap_positions(layout, &cfg.placement, cfg.mirror)?;
            let ids: Vec<ApartmentId> = layout.apartments().collect();
            let aps = ids
                .iter()
                .zip(&positions)
                .map(|(id, p)| ApNode {
                    id: *id,
                    position: *p,
                    channel: None,
                    tbtt_offset_ns: None,
                    drift_ppm: None,
                })
                .collect::<Vec<_>>();
            let hears = positions
                .par_iter()
                .enumerate()
                .map(|(r, pr)| {
                    let mut list = Vec::new();
                    for (x, px) in positions.iter().enumerate() {
                        if x != r && !ap_hidden(received_power_dbm(pr, px, layout, &radio)?, &radio) {
                            list.push(x);
                        }
                    }
                    Ok(list)
                })
                .collect::<Result<Vec<_>>>()?;
            let stas = match sta_position_policy {
                StaPositionPolicy::WorstGridPoint | StaPositionPolicy::AllGridPoints => {
                    let all = matches!(sta_position_policy, StaPositionPolicy::AllGridPoints);
                    let maps = all_hostile_maps(layout, &radio, &cfg.placement, cfg.mirror)?;
                    let mut stas = Vec::new();
                    for map in &maps {
                        let home = layout.index_of(map.apartment);
                        let grid = sta_grid(layout, map.apartment)?;
                        let nx = map.grid_shape.1;
                        let cells: Vec<(usize, usize)> = if all {
                            (0..grid.len()).map(|k| (k / nx, k % nx)).collect()
                        } else {
                            vec![map.argmax()]
                        };
                        for (i, j) in cells {
                            stas.push(StaNode {
                                home,
                                hostile: map.hostile_sets[i][j]
                                    .iter()
                                    .map(|id| layout.index_of(*id))
                                    .collect(),
                                position: Some(grid[i * nx + j]),
                            });
                        }
                    }
                    stas
                }
                StaPositionPolicy::Explicit { points } => {
                    let mut stas = Vec::new();
                    for pt in points {
                        layout.check(pt.apartment)?;
                        let home = layout.index_of(pt.apartment);
                        if !(pt.x_m > 0.0
                            && pt.x_m < layout.apartment_width_m
                            && pt.y_m > 0.0
                            && pt.y_m < layout.apartment_depth_m)
                        {
                            return Err(Error::invalid(
                                "simulation.topology.sta_position_policy.points",
                                format!("({}, {}) lies outside apartment {}", pt.x_m, pt.y_m, pt.apartment),
                            ));
                        }
                        let (x0, y0, z) = layout.origin(pt.apartment);
                        let sta = Point3::new(x0 + pt.x_m, y0 + pt.y_m, z);
                        let mut hostile = Vec::new();
                        for (x, px) in positions.iter().enumerate() {
                            if x != home && location_condition(&sta, &positions[home], px, layout, &radio)? {
                                hostile.push(x);
                            }
                        }
                        stas.push(StaNode {
                            home,
                            hostile,
                            position: Some(sta),
                        });
                    }
                    stas
                }
            };
            Ok(Topology { aps, stas, hears })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissEra {
    pub first_ns: i64,
    pub last_ns: i64,
    pub beacons: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaStats {
    #[serde(flatten)]
    pub node: StaNode,
    pub beacons_expected: u64,
    pub beacons_missed: u64,
    pub beacons_delivered: u64,
    pub beacons_skipped: u64,
    pub miss_streak_max: u32,
    pub disassociations: u64,
    pub miss_eras: Vec<MissEra>,
    #[serde(skip)]
    streak: u32,
    #[serde(skip)]
    in_era: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub a: usize,
    pub b: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineStats {
    pub seed: u64,
    pub sim_duration_s: f64,
    pub beacons_expected: u64,
    pub beacons_missed: u64,
    pub beacons_delivered: u64,
    pub beacons_skipped: u64,
    pub miss_streak_max: u32,
    pub disassociations: u64,
    pub mbca_relocations: u64,
    pub mbca_jitters: u64,
    pub mbca_saturations: u64,
    /// Same-channel beacon overlaps per unordered AP pair, regardless of
    /// whether anyone was hurt.
    pub per_pair_overlap_events: Vec<PairOverlap>,
    /// AP states drawn at the start of the run.
    pub aps: Vec<ApState>,
    pub per_sta: Vec<StaStats>,
}

impl TimelineStats {
    pub fn miss_rate(&self) -> f64 {
        ratio(self.beacons_missed, self.beacons_expected)
    }

    pub fn delivery_rate(&self) -> f64 {
        ratio(self.beacons_delivered, self.beacons_expected)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One line of the optional newline-delimited event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_ns: i64,
    pub ap: usize,
    pub k: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Tx { channel: u32, end_ns: i64 },
    Skip,
    Miss { sta: usize },
    Deliver { sta: usize },
    MbcaJitter { delay_ns: i64 },
    MbcaRelocate { tbtt_ns: i64 },
    MbcaSaturated,
}

/// A validated config with its topology resolved, reusable across seeds.
#[derive(Debug, Clone)]
pub struct PreparedSim {
    pub cfg: SimConfig,
    pub radio: RadioConfig,
    pub topology: Topology,
    stas_by_home: Vec<Vec<usize>>,
}

impl PreparedSim {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let topology = build_topology(cfg)?;
        let mut stas_by_home = vec![Vec::new(); topology.aps.len()];
        for (i, s) in topology.stas.iter().enumerate() {
            stas_by_home[s.home].push(i);
        }
        Ok(PreparedSim {
            cfg: cfg.clone(),
            radio: cfg.effective_radio(),
            topology,
            stas_by_home,
        })
    }

    pub fn run(&self, seed: u64) -> TimelineStats {
        Engine::new(self, seed, false).run().0
    }

    pub fn run_with_log(&self, seed: u64) -> (TimelineStats, Vec<EventRecord>) {
        Engine::new(self, seed, true).run()
    }

    /// Initial AP states for `seed`, before any mitigation adjusts them.
    pub fn draw_aps(&self, seed: u64) -> Vec<ApState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let interval = self.cfg.beacons.interval_ns();
        let bound = self.cfg.beacons.drift_ppm_bound;
        self.topology
            .aps
            .iter()
            .map(|node| {
                let channel = draw_channel(&mut rng, self.radio.band, self.radio.n_primary_channels);
                let offset = rng.gen_range(0..interval);
                let drift = if bound > 0.0 {
                    rng.gen_range(-bound..=bound)
                } else {
                    0.0
                };
                ApState {
                    id: node.id,
                    position: node.position,
                    primary_channel: node.channel.unwrap_or(channel),
                    tbtt_offset_ns: node.tbtt_offset_ns.unwrap_or(offset),
                    drift_ppm: node.drift_ppm.unwrap_or(drift),
                    beacon_interval_ns: interval,
                }
            })
            .collect()
    }
}

/// 2.4 GHz: one of N channels. 5 GHz: an 80 MHz block, then one of its four
/// 20 MHz primaries (flat draw when N is not a multiple of four).
fn draw_channel(rng: &mut ChaCha8Rng, band: Band, n: u32) -> u32 {
    match band {
        Band::Band5 if n % 4 == 0 => {
            let block = rng.gen_range(0..n / 4);
            block * 4 + rng.gen_range(0..4)
        }
        _ => rng.gen_range(0..n),
    }
}

pub fn run_timeline(cfg: &SimConfig) -> Result<TimelineStats> {
    Ok(PreparedSim::new(cfg)?.run(cfg.seed))
}

pub fn run_timeline_with_log(cfg: &SimConfig) -> Result<(TimelineStats, Vec<EventRecord>)> {
    Ok(PreparedSim::new(cfg)?.run_with_log(cfg.seed))
}

#[derive(Debug, Clone)]
struct Tx {
    ap: usize,
    start: i64,
    end: i64,
    channel: u32,
    report: Option<Arc<Vec<BeaconObservation>>>,
}

struct ApRun {
    state: ApState,
    anchor_k: u64,
    anchor_ns: i64,
    next_k: u64,
    recent: VecDeque<(i64, i64)>,
    rng: ChaCha8Rng,
    mbca: MbcaState,
    heard: Vec<HeardReport>,
    received: BTreeMap<usize, BeaconObservation>,
    known: BTreeMap<usize, BeaconObservation>,
}

impl ApRun {
    fn start_of(&self, k: u64) -> i64 {
        schedule(
            self.anchor_ns,
            k - self.anchor_k,
            self.state.beacon_interval_ns,
            self.state.drift_ppm,
        )
    }

    fn last_start_before(&self, t: i64) -> Option<i64> {
        self.recent.iter().rev().map(|(s, _)| *s).find(|s| *s < t)
    }
}

struct Engine<'a> {
    prep: &'a PreparedSim,
    seed: u64,
    aps: Vec<ApRun>,
    initial: Vec<ApState>,
    stas: Vec<StaStats>,
    overlaps: BTreeMap<(usize, usize), u64>,
    log: Option<Vec<EventRecord>>,
    pending: VecDeque<Tx>,
    window: VecDeque<Tx>,
    relocations: u64,
    jitters: u64,
    saturations: u64,
    duration_ns: i64,
    vulnerable_ns: i64,
    warmup_ns: i64,
}

impl<'a> Engine<'a> {
    fn new(prep: &'a PreparedSim, seed: u64, log: bool) -> Self {
        let cfg = &prep.cfg;
        let mut states = prep.draw_aps(seed);
        if let MitigationSpec::DistinctIntervals { interval_set_us } = cfg.timing() {
            let set: Vec<i64> = interval_set_us.iter().map(|v| (v * 1e3).round() as i64).collect();
            let mut hostile_pair = vec![vec![false; states.len()]; states.len()];
            for sta in &prep.topology.stas {
                for &x in &sta.hostile {
                    hostile_pair[sta.home][x] = true;
                    hostile_pair[x][sta.home] = true;
                }
            }
            let channels: Vec<u32> = states.iter().map(|s| s.primary_channel).collect();
            apply_distinct_intervals(&mut states, &set, |a, b| {
                channels[a] == channels[b] && hostile_pair[a][b]
            });
        }
        let aps = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1 + i as u64);
                ApRun {
                    state: *s,
                    anchor_k: 0,
                    anchor_ns: s.tbtt_offset_ns,
                    next_k: 0,
                    recent: VecDeque::with_capacity(8),
                    rng,
                    mbca: MbcaState::default(),
                    heard: Vec::new(),
                    received: BTreeMap::new(),
                    known: BTreeMap::new(),
                }
            })
            .collect();
        let stas = prep
            .topology
            .stas
            .iter()
            .map(|node| StaStats {
                node: node.clone(),
                beacons_expected: 0,
                beacons_missed: 0,
                beacons_delivered: 0,
                beacons_skipped: 0,
                miss_streak_max: 0,
                disassociations: 0,
                miss_eras: Vec::new(),
                streak: 0,
                in_era: false,
            })
            .collect();
        let max_interval = states
            .iter()
            .map(|s| s.beacon_interval_ns)
            .max()
            .unwrap_or(0);
        Engine {
            prep,
            seed,
            aps,
            initial: states,
            stas,
            overlaps: BTreeMap::new(),
            log: log.then(Vec::new),
            pending: VecDeque::new(),
            window: VecDeque::new(),
            relocations: 0,
            jitters: 0,
            saturations: 0,
            duration_ns: (cfg.duration_s * 1e9).round() as i64,
            vulnerable_ns: cfg.beacons.duration_ns() - cfg.beacons.preamble_ns(),
            warmup_ns: cfg.warmup_intervals as i64 * max_interval,
        }
    }

    fn emit(&mut self, t_ns: i64, ap: usize, k: u64, kind: EventKind) {
        if let Some(log) = self.log.as_mut() {
            log.push(EventRecord { t_ns, ap, k, kind });
        }
    }

    fn run(mut self) -> (TimelineStats, Vec<EventRecord>) {
        let cfg = &self.prep.cfg;
        let timing = cfg.timing().clone();
        let duration = cfg.beacons.duration_ns();
        let mut heap = BinaryHeap::new();
        for (i, ap) in self.aps.iter().enumerate() {
            let t = ap.start_of(0);
            if t < self.duration_ns {
                heap.push(Reverse((t, i)));
            }
        }
        let mbca = match &timing {
            MitigationSpec::Mbca(p) => Some(*p),
            _ => None,
        };

        while let Some(Reverse((t, a))) = heap.pop() {
            if mbca.is_some() {
                self.resolve_until(t);
            }
            let k = self.aps[a].next_k;
            let transmit = match &timing {
                MitigationSpec::PPersistent { p } => p_persistent_gate(&mut self.aps[a].rng, *p),
                _ => true,
            };
            let channel = self.aps[a].state.primary_channel;
            if transmit {
                self.record_overlaps(a, t);
                let ap = &mut self.aps[a];
                ap.recent.push_back((t, t + duration));
                if ap.recent.len() > 8 {
                    ap.recent.pop_front();
                }
                if let Some(params) = &mbca {
                    let horizon = params.report_horizon as i64 * ap.state.beacon_interval_ns;
                    ap.received.retain(|_, o| o.start_ns >= t - horizon);
                    let report = Arc::new(ap.received.values().copied().collect::<Vec<_>>());
                    let tx = Tx {
                        ap: a,
                        start: t,
                        end: t + duration,
                        channel,
                        report: Some(report),
                    };
                    self.pending.push_back(tx.clone());
                    self.window.push_back(tx);
                }
                self.emit(
                    t,
                    a,
                    k,
                    EventKind::Tx {
                        channel,
                        end_ns: t + duration,
                    },
                );
            } else {
                self.emit(t, a, k, EventKind::Skip);
            }

            for s in 0..self.prep.stas_by_home[a].len() {
                let sta = self.prep.stas_by_home[a][s];
                self.score(sta, a, k, t, transmit);
            }

            let mut next = self.aps[a].start_of(k + 1);
            match &timing {
                MitigationSpec::Jitter { max_delay_us } => {
                    let max = (max_delay_us * 1e3).round() as i64;
                    if max > 0 {
                        next += self.aps[a].rng.gen_range(0..=max);
                    }
                }
                MitigationSpec::Mbca(params) => {
                    next = self.mbca_decide(a, k, t, next, params);
                }
                _ => {}
            }
            self.aps[a].next_k = k + 1;
            if next < self.duration_ns {
                heap.push(Reverse((next, a)));
            }
        }
        self.finish()
    }

    fn record_overlaps(&mut self, a: usize, t: i64) {
        let channel = self.aps[a].state.primary_channel;
        for x in 0..self.aps.len() {
            if x == a || self.aps[x].state.primary_channel != channel {
                continue;
            }
            let n = self.aps[x]
                .recent
                .iter()
                .filter(|(s, e)| *s <= t && t < *e)
                .count() as u64;
            if n > 0 {
                *self.overlaps.entry((a.min(x), a.max(x))).or_default() += n;
            }
        }
    }

    fn score(&mut self, sta: usize, home: usize, k: u64, t: i64, transmitted: bool) {
        if t < self.warmup_ns {
            return;
        }
        let threshold = self.prep.cfg.disassociation_streak;
        let channel = self.aps[home].state.primary_channel;
        let missed = transmitted
            && self.stas[sta].node.hostile.iter().any(|&x| {
                let alien = &self.aps[x];
                alien.state.primary_channel == channel
                    && alien
                        .recent
                        .iter()
                        .any(|(s, _)| time_condition_met(t, *s, self.vulnerable_ns))
            });

        let skips_hurt = self.prep.cfg.skips_count_as_missed;
        let st = &mut self.stas[sta];
        st.beacons_expected += 1;
        if !transmitted {
            st.beacons_skipped += 1;
            st.in_era = false;
            if !skips_hurt {
                return;
            }
        }
        if missed || !transmitted {
            if missed {
                st.beacons_missed += 1;
                match (st.in_era, st.miss_eras.last_mut()) {
                    (true, Some(era)) => {
                        era.last_ns = t;
                        era.beacons += 1;
                    }
                    _ => {
                        st.miss_eras.push(MissEra {
                            first_ns: t,
                            last_ns: t,
                            beacons: 1,
                        });
                        st.in_era = true;
                    }
                }
            }
            st.streak += 1;
            st.miss_streak_max = st.miss_streak_max.max(st.streak);
            if st.streak >= threshold {
                st.disassociations += 1;
                st.streak = 0;
            }
            if missed {
                self.emit(t, home, k, EventKind::Miss { sta });
            }
        } else {
            st.beacons_delivered += 1;
            st.streak = 0;
            st.in_era = false;
            self.emit(t, home, k, EventKind::Deliver { sta });
        }
    }

    /// Decides reception at every listening AP for transmissions that can no
    /// longer be overlapped by anything not yet emitted.
    fn resolve_until(&mut self, now: i64) {
        while self.pending.front().is_some_and(|tx| tx.end <= now) {
            let tx = self.pending.pop_front().expect("front exists");
            for r in 0..self.aps.len() {
                if r == tx.ap
                    || self.aps[r].state.primary_channel != tx.channel
                    || !self.prep.topology.hears[r].contains(&tx.ap)
                {
                    continue;
                }
                let hears_r = &self.prep.topology.hears[r];
                let blocked = self.window.iter().any(|o| {
                    !(o.ap == tx.ap && o.start == tx.start)
                        && o.start < tx.end
                        && tx.start < o.end
                        && o.channel == tx.channel
                        && (o.ap == r || (o.ap != tx.ap && hears_r.contains(&o.ap)))
                });
                if blocked {
                    continue;
                }
                let obs = BeaconObservation {
                    transmitter: tx.ap,
                    channel: tx.channel,
                    start_ns: tx.start,
                    duration_ns: tx.end - tx.start,
                    interval_ns: self.aps[tx.ap].state.beacon_interval_ns,
                };
                let reporter = self.aps[tx.ap].state.id;
                let listener = &mut self.aps[r];
                listener.received.insert(tx.ap, obs);
                listener.known.insert(tx.ap, obs);
                if let Some(entries) = &tx.report {
                    for e in entries.iter().filter(|e| e.transmitter != r) {
                        let newer = listener
                            .known
                            .get(&e.transmitter)
                            .map_or(true, |old| e.start_ns > old.start_ns);
                        if newer {
                            listener.known.insert(e.transmitter, *e);
                        }
                    }
                    let own_start_before_ns = listener.last_start_before(tx.start);
                    listener.heard.push(HeardReport {
                        report: NeighborBeaconReport {
                            reporter,
                            reporter_index: tx.ap,
                            sent_at_ns: tx.start,
                            entries: entries.as_ref().clone(),
                        },
                        own_start_before_ns,
                    });
                }
            }
        }
        let keep_after = self.pending.front().map_or(now, |tx| tx.start);
        while self.window.front().is_some_and(|o| o.end <= keep_after) {
            self.window.pop_front();
        }
    }

    fn mbca_decide(&mut self, a: usize, k: u64, t: i64, next: i64, params: &MbcaParams) -> i64 {
        let duration = self.prep.cfg.beacons.duration_ns();
        let ap = &mut self.aps[a];
        let horizon = (params.report_horizon as i64 + 1) * ap.state.beacon_interval_ns;
        ap.known.retain(|_, o| o.start_ns >= t - horizon);
        let known: Vec<BeaconObservation> = ap.known.values().copied().collect();
        let heard = std::mem::take(&mut ap.heard);
        let out = mbca_step(
            &ap.state,
            a,
            &mut ap.mbca,
            next,
            duration,
            &heard,
            &known,
            params,
            &mut ap.rng,
        );
        if out.tbtt_ns != next {
            ap.anchor_k = k + 1;
            ap.anchor_ns = out.tbtt_ns;
            ap.state.tbtt_offset_ns = out.tbtt_ns.rem_euclid(ap.state.beacon_interval_ns);
        }
        if let Some(delay) = out.jitter_ns {
            self.jitters += 1;
            self.emit(t, a, k + 1, EventKind::MbcaJitter { delay_ns: delay });
        }
        if out.relocated {
            self.relocations += 1;
            self.emit(t, a, k + 1, EventKind::MbcaRelocate { tbtt_ns: out.tbtt_ns });
        }
        if out.saturated {
            self.saturations += 1;
            self.emit(t, a, k + 1, EventKind::MbcaSaturated);
        }
        out.tbtt_ns
    }

    fn finish(self) -> (TimelineStats, Vec<EventRecord>) {
        let per_sta = self.stas;
        let sum = |f: fn(&StaStats) -> u64| per_sta.iter().map(f).sum::<u64>();
        let stats = TimelineStats {
            seed: self.seed,
            sim_duration_s: self.prep.cfg.duration_s,
            beacons_expected: sum(|s| s.beacons_expected),
            beacons_missed: sum(|s| s.beacons_missed),
            beacons_delivered: sum(|s| s.beacons_delivered),
            beacons_skipped: sum(|s| s.beacons_skipped),
            miss_streak_max: per_sta.iter().map(|s| s.miss_streak_max).max().unwrap_or(0),
            disassociations: sum(|s| s.disassociations),
            mbca_relocations: self.relocations,
            mbca_jitters: self.jitters,
            mbca_saturations: self.saturations,
            per_pair_overlap_events: self
                .overlaps
                .into_iter()
                .map(|((a, b), count)| PairOverlap { a, b, count })
                .collect(),
            aps: self.initial,
            per_sta,
        };
        (stats, self.log.unwrap_or_default())
    }
}

/// A binomial proportion with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl RateEstimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        let rate = ratio(successes, trials);
        let half = if trials == 0 {
            0.0
        } else {
            1.96 * (rate * (1.0 - rate) / trials as f64).sqrt()
        };
        RateEstimate {
            successes,
            trials,
            rate,
            ci95_low: (rate - half).max(0.0),
            ci95_high: (rate + half).min(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub beacons_expected: u64,
    pub beacons_missed: u64,
    pub beacons_delivered: u64,
    pub beacons_skipped: u64,
    pub miss_streak_max: u32,
    pub disassociations: u64,
    pub miss_rate: f64,
}

impl From<&TimelineStats> for RunSummary {
    fn from(s: &TimelineStats) -> Self {
        RunSummary {
            seed: s.seed,
            beacons_expected: s.beacons_expected,
            beacons_missed: s.beacons_missed,
            beacons_delivered: s.beacons_delivered,
            beacons_skipped: s.beacons_skipped,
            miss_streak_max: s.miss_streak_max,
            disassociations: s.disassociations,
            miss_rate: s.miss_rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl MeanEstimate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanEstimate {
                mean: 0.0,
                ci95_low: 0.0,
                ci95_high: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let half = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            ci95_low: mean - half,
            ci95_high: mean + half,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub runs: u32,
    pub seed_base: u64,
    /// Missed over expected home beacons, pooled across runs.
    pub pooled_miss: RateEstimate,
    pub pooled_delivery: RateEstimate,
    pub run_miss_rate: MeanEstimate,
    pub run_disassociations: MeanEstimate,
    pub per_run: Vec<RunSummary>,
}

/// Runs `n_runs` independent simulations with seeds `seed_base + i`.
pub fn monte_carlo(cfg: &SimConfig, n_runs: u32, seed_base: u64) -> Result<MonteCarloSummary> {
    if n_runs < 1 {
        return Err(Error::invalid("runs", "must be at least 1"));
    }
    let prep = PreparedSim::new(cfg)?;
    Ok(monte_carlo_prepared(&prep, n_runs, seed_base))
}

pub fn monte_carlo_prepared(prep: &PreparedSim, n_runs: u32, seed_base: u64) -> MonteCarloSummary {
    let per_run: Vec<RunSummary> = (0..n_runs)
        .into_par_iter()
        .map(|i| RunSummary::from(&prep.run(seed_base.wrapping_add(i as u64))))
        .collect();
    let total = |f: fn(&RunSummary) -> u64| per_run.iter().map(f).sum::<u64>();
    let expected = total(|r| r.beacons_expected);
    let rates: Vec<f64> = per_run.iter().map(|r| r.miss_rate).collect();
    let disassoc: Vec<f64> = per_run.iter().map(|r| r.disassociations as f64).collect();
    MonteCarloSummary {
        runs: n_runs,
        seed_base,
        pooled_miss: RateEstimate::new(total(|r| r.beacons_missed), expected),
        pooled_delivery: RateEstimate::new(total(|r| r.beacons_delivered), expected),
        run_miss_rate: MeanEstimate::of(&rates),
        run_disassociations: MeanEstimate::of(&disassoc),
        per_run,
    }
}
