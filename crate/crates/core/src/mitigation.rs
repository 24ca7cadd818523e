//! Beacon-protection strategies: distinct beacon intervals, random jitter,
//! p-persistent beaconing, neighbor-report based TBTT adjustment (adapted
//! MBCA) and dynamic sensitivity control.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beaconsim::ApState;
use crate::error::{Error, Result};
use crate::layout::ApartmentId;
use crate::propagation::RadioConfig;

fn default_horizon() -> u32 {
    4
}
fn default_mbca_jitter_us() -> f64 {
    50_000.0
}
fn default_slot_us() -> f64 {
    1_000.0
}
fn default_missing_threshold() -> u32 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbcaParams {
    /// Receptions older than this many own intervals drop out of reports.
    #[serde(default = "default_horizon")]
    pub report_horizon: u32,
    #[serde(default = "default_mbca_jitter_us")]
    pub jitter_us: f64,
    #[serde(default = "default_slot_us")]
    pub slot_granularity_us: f64,
    #[serde(default = "default_missing_threshold")]
    pub missing_report_threshold: u32,
}

impl Default for MbcaParams {
    fn default() -> Self {
        MbcaParams {
            report_horizon: default_horizon(),
            jitter_us: default_mbca_jitter_us(),
            slot_granularity_us: default_slot_us(),
            missing_report_threshold: default_missing_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MitigationSpec {
    None,
    DistinctIntervals { interval_set_us: Vec<f64> },
    Jitter { max_delay_us: f64 },
    PPersistent { p: f64 },
    Mbca(MbcaParams),
    Dsc { sensitivity_offset_db: f64 },
}

impl MitigationSpec {
    pub fn is_timing(&self) -> bool {
        !matches!(self, MitigationSpec::None | MitigationSpec::Dsc { .. })
    }

    pub fn validate(&self, beacon_duration_us: f64, min_interval_us: f64) -> Result<()> {
        match self {
            MitigationSpec::None => Ok(()),
            MitigationSpec::DistinctIntervals { interval_set_us } => {
                if interval_set_us.is_empty() {
                    return Err(Error::invalid(
                        "mitigation.interval_set_us",
                        "must contain at least one interval",
                    ));
                }
                if let Some(bad) = interval_set_us
                    .iter()
                    .find(|v| !(v.is_finite() && **v >= beacon_duration_us))
                {
                    return Err(Error::invalid(
                        "mitigation.interval_set_us",
                        format!("{bad} us is shorter than the beacon duration {beacon_duration_us} us"),
                    ));
                }
                Ok(())
            }
            MitigationSpec::Jitter { max_delay_us } => {
                if !(*max_delay_us >= 0.0 && *max_delay_us < min_interval_us) {
                    return Err(Error::invalid(
                        "mitigation.max_delay_us",
                        format!("must lie in [0, {min_interval_us}) us (got {max_delay_us})"),
                    ));
                }
                Ok(())
            }
            MitigationSpec::PPersistent { p } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::invalid("mitigation.p", format!("must lie in (0, 1] (got {p})")));
                }
                Ok(())
            }
            MitigationSpec::Mbca(m) => {
                if m.report_horizon < 1 {
                    return Err(Error::invalid("mitigation.report_horizon", "must be at least 1"));
                }
                if m.missing_report_threshold < 1 {
                    return Err(Error::invalid(
                        "mitigation.missing_report_threshold",
                        "must be at least 1",
                    ));
                }
                if !(m.slot_granularity_us > 0.0 && m.slot_granularity_us <= min_interval_us) {
                    return Err(Error::invalid(
                        "mitigation.slot_granularity_us",
                        format!("must lie in (0, {min_interval_us}] us"),
                    ));
                }
                if !(m.jitter_us >= 0.0 && m.jitter_us < min_interval_us) {
                    return Err(Error::invalid(
                        "mitigation.jitter_us",
                        format!("must lie in [0, {min_interval_us}) us"),
                    ));
                }
                Ok(())
            }
            MitigationSpec::Dsc {
                sensitivity_offset_db,
            } => {
                if !(*sensitivity_offset_db >= 0.0 && sensitivity_offset_db.is_finite()) {
                    return Err(Error::invalid(
                        "mitigation.sensitivity_offset_db",
                        "must be a non-negative number",
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Checks that a strategy list holds at most one DSC entry and at most one
/// timing strategy.
pub fn validate_plan(plan: &[MitigationSpec], beacon_duration_us: f64, min_interval_us: f64) -> Result<()> {
    let timing = plan.iter().filter(|m| m.is_timing()).count();
    let dsc = plan
        .iter()
        .filter(|m| matches!(m, MitigationSpec::Dsc { .. }))
        .count();
    if timing > 1 {
        return Err(Error::invalid(
            "mitigation",
            "at most one timing strategy (distinct_intervals, jitter, p_persistent, mbca) may be combined with dsc",
        ));
    }
    if dsc > 1 {
        return Err(Error::invalid("mitigation", "dsc may appear at most once"));
    }
    for m in plan {
        m.validate(beacon_duration_us, min_interval_us)?;
    }
    Ok(())
}

/// Raises the STA-side margin by `offset_db`.
pub fn apply_dsc(radio: &RadioConfig, offset_db: f64) -> RadioConfig {
    RadioConfig {
        delta_p_db: radio.delta_p_db + offset_db,
        ..*radio
    }
}

/// One p-persistent decision: transmit this interval?
pub fn p_persistent_gate<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

/// Assigns beacon intervals from `interval_set_ns` in round-robin order by AP
/// index, skipping ahead to the next interval in the set whenever the
/// round-robin choice would match an earlier AP that `conflicts` with this
/// one. Falls back to the round-robin choice when every interval is taken.
pub fn apply_distinct_intervals<F>(aps: &mut [ApState], interval_set_ns: &[i64], conflicts: F)
where
    F: Fn(usize, usize) -> bool,
{
    let n = interval_set_ns.len();
    if n == 0 {
        return;
    }
    for a in 0..aps.len() {
        let taken: Vec<i64> = (0..a)
            .filter(|&b| conflicts(a, b))
            .map(|b| aps[b].beacon_interval_ns)
            .collect();
        let pick = (0..n)
            .map(|s| interval_set_ns[(a + s) % n])
            .find(|iv| !taken.contains(iv))
            .unwrap_or(interval_set_ns[a % n]);
        let ap = &mut aps[a];
        ap.beacon_interval_ns = pick;
        ap.tbtt_offset_ns = ap.tbtt_offset_ns.rem_euclid(pick);
    }
}

/// A beacon schedule learned from direct reception or from a neighbor report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeaconObservation {
    pub transmitter: usize,
    pub channel: u32,
    pub start_ns: i64,
    pub duration_ns: i64,
    pub interval_ns: i64,
}

impl BeaconObservation {
    /// Whether any occurrence of this periodic beacon near `start_ns`
    /// intersects `[start_ns, start_ns + duration_ns)`.
    pub fn intersects(&self, start_ns: i64, duration_ns: i64) -> bool {
        let j = ((start_ns - self.start_ns) as f64 / self.interval_ns as f64).round() as i64;
        (j - 1..=j + 1).any(|j| {
            let s = self.start_ns + j * self.interval_ns;
            s < start_ns + duration_ns && start_ns < s + self.duration_ns
        })
    }
}

/// Beacon-timing information element carried in a reporter's beacon: every
/// beacon the reporter received within its report horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborBeaconReport {
    pub reporter: ApartmentId,
    pub reporter_index: usize,
    pub sent_at_ns: i64,
    pub entries: Vec<BeaconObservation>,
}

/// A report as seen by one AP, paired with the start time of that AP's own
/// latest beacon preceding the report.
#[derive(Debug, Clone, PartialEq)]
pub struct HeardReport {
    pub report: NeighborBeaconReport,
    pub own_start_before_ns: Option<i64>,
}

impl HeardReport {
    /// True when the reporter lists the AP's latest beacon.
    pub fn confirms(&self, own_index: usize) -> bool {
        match self.own_start_before_ns {
            Some(s) => self
                .report
                .entries
                .iter()
                .any(|e| e.transmitter == own_index && e.start_ns == s),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MbcaState {
    pub missing_streak: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MbcaOutcome {
    pub tbtt_ns: i64,
    pub jitter_ns: Option<i64>,
    pub relocated: bool,
    pub saturated: bool,
}

/// One per-interval MBCA decision for `ap`, whose next beacon is nominally at
/// `next_tbtt_ns`.
///
/// Reports that fail to list the AP's own latest beacon build up a missing
/// streak; at `missing_report_threshold` a one-off uniform delay in
/// `[0, jitter_us]` is added. If the resulting window intersects any known
/// same-channel alien beacon, the TBTT moves to the nearest slot-aligned
/// offset (modulo the AP's interval) whose window is clear, preferring the
/// later offset on ties. With no clear offset the TBTT stays put and the
/// outcome is flagged as saturated.
pub fn mbca_step<R: Rng + ?Sized>(
    ap: &ApState,
    own_index: usize,
    state: &mut MbcaState,
    next_tbtt_ns: i64,
    duration_ns: i64,
    heard_reports: &[HeardReport],
    known: &[BeaconObservation],
    params: &MbcaParams,
    rng: &mut R,
) -> MbcaOutcome {
    let mut out = MbcaOutcome {
        tbtt_ns: next_tbtt_ns,
        ..Default::default()
    };

    let usable: Vec<&HeardReport> = heard_reports
        .iter()
        .filter(|r| r.own_start_before_ns.is_some())
        .collect();
    if !usable.is_empty() {
        if usable.iter().any(|r| r.confirms(own_index)) {
            state.missing_streak = 0;
        } else {
            state.missing_streak += 1;
        }
    }
    if state.missing_streak >= params.missing_report_threshold {
        let max = (params.jitter_us * 1e3).round() as i64;
        let delay = if max > 0 { rng.gen_range(0..=max) } else { 0 };
        out.tbtt_ns += delay;
        out.jitter_ns = Some(delay);
        state.missing_streak = 0;
    }

    let windows: Vec<&BeaconObservation> = known
        .iter()
        .filter(|w| w.transmitter != own_index && w.channel == ap.primary_channel)
        .collect();
    let clear = |t: i64| !windows.iter().any(|w| w.intersects(t, duration_ns));
    if clear(out.tbtt_ns) {
        return out;
    }

    let interval = ap.beacon_interval_ns;
    let slot = ((params.slot_granularity_us * 1e3).round() as i64).max(1);
    let phase = out.tbtt_ns.rem_euclid(interval);
    let mut candidates: Vec<i64> = (0..)
        .map(|i| i * slot)
        .take_while(|c| *c < interval)
        .map(|c| {
            // Signed circular shift from the current phase, in (-B/2, B/2].
            let mut delta = (c - phase).rem_euclid(interval);
            if delta > interval / 2 {
                delta -= interval;
            }
            delta
        })
        .collect();
    candidates.sort_by_key(|d| (d.abs(), *d < 0));
    match candidates
        .into_iter()
        .map(|d| out.tbtt_ns + d)
        .find(|t| clear(*t))
    {
        Some(t) => {
            out.relocated = t != out.tbtt_ns;
            out.tbtt_ns = t;
        }
        None => out.saturated = true,
    }
    out
}
