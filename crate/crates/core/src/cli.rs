//! Command-line front end: `heatmap`, `report`, `drift` and `simulate`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{all_hostile_maps, building_report, format_sig, hostile_map, neighbor_geometry, BuildingReport, HostileMap};
use crate::beaconsim::{monte_carlo_prepared, EventRecord, MonteCarloSummary, PreparedSim};
use crate::conditions::{collision_persistence_s, collision_recurrence_s, BeaconConfig, DriftSpan};
use crate::config::ScenarioFile;
use crate::error::{Error, Result};
use crate::layout::ApartmentId;
use crate::propagation::RadioConfig;

#[derive(Debug, Parser)]
#[command(name = "densebeacon", version, about = "Beacon collision analysis for dense residential Wi-Fi")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hostile-AP count matrices for one or all apartments.
    Heatmap(HeatmapArgs),
    /// Mean hostile-AP counts per apartment of a row, for several margins.
    Report(ReportArgs),
    /// Collision persistence and recurrence for a list of relative drifts.
    Drift(DriftArgs),
    /// Monte Carlo beacon timeline simulation.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `F,R,C` or `all`; defaults to the central apartment.
    #[arg(long)]
    pub apartment: Option<ApartmentSelector>,
    /// Margins to evaluate; defaults to the scenario's own.
    #[arg(long = "delta-p", value_delimiter = ',')]
    pub delta_p: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub row: u32,
    #[arg(long = "delta-p", value_delimiter = ',', default_value = "0,3,6")]
    pub delta_p: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    /// Take beacon parameters from a scenario file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 500.0)]
    pub beacon_duration_us: f64,
    #[arg(long, default_value_t = 0.0)]
    pub preamble_us: f64,
    #[arg(long, default_value_t = 500.0)]
    pub beacon_interval_ms: f64,
    /// Relative drifts in ppm.
    #[arg(long, value_delimiter = ',', default_value = "20,1")]
    pub drift: Vec<f64>,
    /// Also write the table as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// First seed; defaults to the scenario's.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of runs; defaults to the scenario's.
    #[arg(long)]
    pub runs: Option<u32>,
    /// Margin override.
    #[arg(long = "delta-p")]
    pub delta_p: Option<f64>,
    /// Write one NDJSON event log per run.
    #[arg(long)]
    pub event_log: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApartmentSelector {
    All,
    One(ApartmentId),
}

impl FromStr for ApartmentSelector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(ApartmentSelector::All);
        }
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("expected F,R,C or all, got {s:?}"));
        }
        let mut v = [0u32; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|_| format!("bad apartment index {p:?} in {s:?}"))?;
        }
        Ok(ApartmentSelector::One(ApartmentId::new(v[0], v[1], v[2])))
    }
}

/// Parses `std::env::args`, runs the command and maps the outcome to an exit
/// status.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("densebeacon: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("densebeacon: {e}");
            match e {
                Error::Io { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("DENSEBEACON_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::invalid("DENSEBEACON_THREADS", format!("expected a positive integer, got {v:?}")))?;
    // Fails only if a pool already exists, which is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::Report(a) => cmd_report(a),
        Command::Drift(a) => cmd_drift(a).map(|table| print!("{table}")),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn scenario_label(s: &ScenarioFile, path: &Path) -> String {
    if s.name.is_empty() {
        path.file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    } else {
        s.name.clone()
    }
}

/// Radio for a margin override: the override replaces the configured margin
/// and DSC is applied on top.
fn radio_for(s: &ScenarioFile, delta_p: Option<f64>) -> Result<RadioConfig> {
    let mut s = s.clone();
    if let Some(dp) = delta_p {
        s.radio.delta_p_db = dp;
        s.radio.validate()?;
    }
    Ok(s.effective_radio())
}

pub fn heatmap_file_name(apt: ApartmentId, delta_p_db: f64) -> String {
    format!(
        "heatmap_f{}_r{}_c{}_dp{}.csv",
        apt.floor,
        apt.row,
        apt.column,
        format_sig(delta_p_db, 6)
    )
}

#[derive(Serialize)]
struct HopEntry {
    apartment: ApartmentId,
    hops: u32,
}

#[derive(Serialize)]
struct HeatmapSummary {
    apartment: ApartmentId,
    delta_p_db: f64,
    file: String,
    max: u32,
    argmax: (usize, usize),
    mean: f64,
    hostile_at_argmax: Vec<HopEntry>,
    hostile_anywhere: Vec<HopEntry>,
}

impl HeatmapSummary {
    fn new(hm: &HostileMap, delta_p_db: f64, file: String) -> Self {
        let (i, j) = hm.argmax();
        HeatmapSummary {
            apartment: hm.apartment,
            delta_p_db,
            file,
            max: hm.max(),
            argmax: (i, j),
            mean: hm.mean(),
            hostile_at_argmax: hm.hostile_sets[i][j]
                .iter()
                .map(|a| HopEntry {
                    apartment: *a,
                    hops: hm.apartment.hops_to(a),
                })
                .collect(),
            hostile_anywhere: neighbor_geometry(hm)
                .into_iter()
                .map(|(apartment, hops)| HopEntry { apartment, hops })
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct HeatmapOutput<'a> {
    scenario: &'a ScenarioFile,
    maps: Vec<HeatmapSummary>,
}

pub fn cmd_heatmap(a: &HeatmapArgs) -> Result<()> {
    let s = ScenarioFile::load(&a.scenario)?;
    let label = scenario_label(&s, &a.scenario);
    let margins: Vec<Option<f64>> = if a.delta_p.is_empty() {
        vec![None]
    } else {
        a.delta_p.iter().map(|d| Some(*d)).collect()
    };
    let selector = a
        .apartment
        .unwrap_or(ApartmentSelector::One(s.layout.central_apartment()));
    if let ApartmentSelector::One(apt) = selector {
        s.layout.check(apt)?;
    }
    create_dir(&a.out)?;
    let placement = s.placement.placement();
    let mut summaries = Vec::new();
    for dp in margins {
        let radio = radio_for(&s, dp)?;
        let maps = match selector {
            ApartmentSelector::All => all_hostile_maps(&s.layout, &radio, &placement, s.placement.mirror_policy)?,
            ApartmentSelector::One(apt) => vec![hostile_map(
                &s.layout,
                &radio,
                &placement,
                s.placement.mirror_policy,
                apt,
            )?],
        };
        for hm in &maps {
            let file = heatmap_file_name(hm.apartment, radio.delta_p_db);
            write(&a.out.join(&file), &hm.to_csv(&label, radio.delta_p_db))?;
            summaries.push(HeatmapSummary::new(hm, radio.delta_p_db, file));
        }
    }
    for m in summaries.iter().take(10) {
        println!(
            "apartment {} delta_p {} dB: max N_LC {} at {:?}",
            m.apartment, m.delta_p_db, m.max, m.argmax
        );
    }
    if summaries.len() > 10 {
        println!("... {} maps in total", summaries.len());
    }
    let out = HeatmapOutput {
        scenario: &s,
        maps: summaries,
    };
    write(&a.out.join("heatmap_summary.json"), &to_json(&out)?)
}

#[derive(Serialize)]
struct ReportOutput<'a> {
    scenario: &'a ScenarioFile,
    reports: Vec<BuildingReport>,
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let s = ScenarioFile::load(&a.scenario)?;
    let label = scenario_label(&s, &a.scenario);
    if a.row >= s.layout.rows {
        return Err(Error::invalid(
            "row",
            format!("{} is outside 0..{}", a.row, s.layout.rows),
        ));
    }
    if a.delta_p.is_empty() {
        return Err(Error::invalid("delta-p", "needs at least one value"));
    }
    create_dir(&a.out)?;
    let placement = s.placement.placement();
    let mut reports = Vec::new();
    for dp in &a.delta_p {
        let radio = radio_for(&s, Some(*dp))?;
        let r = building_report(&s.layout, &radio, &placement, s.placement.mirror_policy, a.row)?;
        let file = format!("report_row{}_dp{}.csv", a.row, format_sig(radio.delta_p_db, 6));
        write(&a.out.join(file), &r.to_csv(&label))?;
        println!(
            "row {} delta_p {} dB: building max N_LC {}",
            a.row, r.delta_p_db, r.max_nlc
        );
        reports.push(r);
    }
    let out = ReportOutput {
        scenario: &s,
        reports,
    };
    write(&a.out.join("report.json"), &to_json(&out)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftRow {
    pub relative_drift_ppm: f64,
    pub persistence: DriftSpan,
    pub recurrence: DriftSpan,
}

/// Human form of a recurrence period: seconds, hours or days.
pub fn human_duration(span: DriftSpan) -> String {
    match span {
        DriftSpan::Unbounded => "never".to_string(),
        DriftSpan::Seconds(s) if s < 3600.0 => format!("{} s", format_sig(s, 4)),
        DriftSpan::Seconds(s) if s < 86_400.0 => format!("{} h", format_sig(s / 3600.0, 3)),
        DriftSpan::Seconds(s) => format!("{} days", format_sig(s / 86_400.0, 3)),
    }
}

fn drift_beacons(a: &DriftArgs) -> Result<BeaconConfig> {
    if let Some(path) = &a.scenario {
        return Ok(ScenarioFile::load(path)?.beacons);
    }
    let b = BeaconConfig {
        beacon_duration_us: a.beacon_duration_us,
        preamble_us: a.preamble_us,
        beacon_interval_ms: a.beacon_interval_ms,
        drift_ppm_bound: BeaconConfig::default().drift_ppm_bound,
    };
    b.validate()?;
    Ok(b)
}

/// Builds the drift table, writes it as JSON if asked, and returns the text.
pub fn cmd_drift(a: &DriftArgs) -> Result<String> {
    let beacons = drift_beacons(a)?;
    let mut rows = Vec::new();
    for d in &a.drift {
        if !d.is_finite() || *d < 0.0 {
            return Err(Error::invalid("drift", format!("{d} is not a non-negative drift")));
        }
        rows.push(DriftRow {
            relative_drift_ppm: *d,
            persistence: collision_persistence_s(&beacons, *d),
            recurrence: collision_recurrence_s(&beacons, *d),
        });
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:>10}  {:>14}  {:>16}  {:>12}",
        "drift_ppm", "persistence_s", "recurrence_s", "recurrence"
    );
    for r in &rows {
        let persistence = match r.persistence {
            DriftSpan::Seconds(s) => format_sig(s, 6),
            DriftSpan::Unbounded => "infinite".to_string(),
        };
        let recurrence = match r.recurrence {
            DriftSpan::Seconds(s) => format_sig(s, 6),
            DriftSpan::Unbounded => "never".to_string(),
        };
        let _ = writeln!(
            text,
            "{:>10}  {:>14}  {:>16}  {:>12}",
            format_sig(r.relative_drift_ppm, 6),
            persistence,
            recurrence,
            human_duration(r.recurrence)
        );
    }
    if let Some(out) = &a.out {
        #[derive(Serialize)]
        struct DriftOutput<'a> {
            beacons: BeaconConfig,
            rows: &'a [DriftRow],
        }
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write(out, &to_json(&DriftOutput { beacons, rows: &rows })?)?;
    }
    Ok(text)
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    scenario: &'a ScenarioFile,
    summary: &'a MonteCarloSummary,
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut s = ScenarioFile::load(&a.scenario)?;
    if let Some(seed) = a.seed {
        s.simulation.seed = seed;
    }
    if let Some(runs) = a.runs {
        s.simulation.runs = runs;
    }
    if let Some(dp) = a.delta_p {
        s.radio.delta_p_db = dp;
    }
    s.validate()?;
    let prep = PreparedSim::new(&s.sim_config())?;
    create_dir(&a.out)?;
    let summary = monte_carlo_prepared(&prep, s.simulation.runs, s.simulation.seed);
    if a.event_log {
        for i in 0..s.simulation.runs {
            let seed = s.simulation.seed.wrapping_add(i as u64);
            let (_, log) = prep.run_with_log(seed);
            write(&a.out.join(format!("events_seed{seed}.ndjson")), &ndjson(&log)?)?;
        }
    }
    println!(
        "{} runs, {} STAs: miss rate {:.6} (95% CI {:.6}..{:.6}), mean disassociations {:.3}",
        summary.runs,
        prep.topology.stas.len(),
        summary.pooled_miss.rate,
        summary.pooled_miss.ci95_low,
        summary.pooled_miss.ci95_high,
        summary.run_disassociations.mean
    );
    let out = SimulateOutput {
        scenario: &s,
        summary: &summary,
    };
    write(&a.out.join("simulate.json"), &to_json(&out)?)
}

pub fn ndjson(log: &[EventRecord]) -> Result<String> {
    let mut out = String::new();
    for rec in log {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_parsing() {
        assert_eq!("all".parse::<ApartmentSelector>(), Ok(ApartmentSelector::All));
        assert_eq!(
            "2,0,4".parse::<ApartmentSelector>(),
            Ok(ApartmentSelector::One(ApartmentId::new(2, 0, 4)))
        );
        assert!("2,0".parse::<ApartmentSelector>().is_err());
        assert!("a,b,c".parse::<ApartmentSelector>().is_err());
    }

    #[test]
    fn drift_table_sentinels() {
        let args = DriftArgs {
            scenario: None,
            beacon_duration_us: 500.0,
            preamble_us: 0.0,
            beacon_interval_ms: 500.0,
            drift: vec![20.0, 1.0, 0.0],
            out: None,
        };
        let text = cmd_drift(&args).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].contains("25") && lines[1].contains("25000") && lines[1].contains("6.94 h"));
        assert!(lines[2].contains("500000") && lines[2].contains("5.79 days"));
        assert!(lines[3].contains("infinite") && lines[3].contains("never"));
    }

    #[test]
    fn file_names_are_stable() {
        assert_eq!(heatmap_file_name(ApartmentId::new(2, 0, 4), 0.0), "heatmap_f2_r0_c4_dp0.csv");
        assert_eq!(heatmap_file_name(ApartmentId::new(0, 1, 9), 6.0), "heatmap_f0_r1_c9_dp6.csv");
    }
}
