//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use densebeacon::analysis::{all_hostile_maps, building_report, hostile_map};
use densebeacon::beaconsim::{
    monte_carlo, run_timeline, run_timeline_with_log, EventKind, ExplicitAp, ExplicitSta, MonteCarloSummary,
    SimConfig, TopologySpec,
};
use densebeacon::conditions::{
    channel_condition_probability, collision_persistence_s, collision_recurrence_s, time_condition_probability,
    BeaconConfig, DriftSpan,
};
use densebeacon::config::ScenarioFile;
use densebeacon::layout::{ApPlacement, BuildingLayout, MirrorPolicy, PlacementKind};
use densebeacon::mitigation::{apply_dsc, MitigationSpec};
use densebeacon::propagation::{Band, RadioConfig};

use common::{Toy, ToyRadio};

/// Allowed gap between a heatmap maximum and the reference value under the
/// default geometry.
const MAX_NLC_TOLERANCE: i64 = 1;
/// Width of the binomial acceptance band, in standard deviations.
const SIGMAS: f64 = 3.0;
/// Minimum number of scored intervals for the rate checks.
const MIN_INTERVALS: u64 = 100_000;
/// Drift-era checks must agree with the closed forms to within this many
/// beacon intervals.
const ERA_TOLERANCE_INTERVALS: f64 = 1.0;
/// Intervals after the first beacon by which MBCA must have removed every
/// same-channel overlap in the hidden triple.
const MBCA_SETTLE_INTERVALS: u64 = 3 + 2;

type Outcome = Result<String, String>;

fn scenario(name: &str) -> ScenarioFile {
    let path = format!("{}/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
    ScenarioFile::load(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_sigma(rate: f64, p: f64, n: u64) -> (bool, f64) {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    ((rate - p).abs() <= SIGMAS * sigma, sigma)
}

fn criterion_1() -> Outcome {
    let p = time_condition_probability(&BeaconConfig::default());
    check(p == 0.001, format!("l/B = {p}, want 0.001"))?;
    let plans = [
        ("residential_10x10_2g4", 3u32, 1.0 / 3.0),
        ("residential_5x11_5g_n12", 12, 1.0 / 12.0),
        ("residential_5x11_5g_n20", 20, 1.0 / 20.0),
    ];
    for (name, n, want) in plans {
        let radio = scenario(name).radio;
        check(radio.n_primary_channels == n, format!("{name}: N = {}", radio.n_primary_channels))?;
        let got = channel_condition_probability(&radio);
        check(got == want, format!("{name}: 1/N = {got}, want {want}"))?;
    }
    Ok("l/B = 0.001; 1/N = 1/3, 1/12, 1/20 exactly".into())
}

fn criterion_2() -> Outcome {
    let b = BeaconConfig::default();
    let cases = [
        ("persistence @20 ppm", collision_persistence_s(&b, 20.0), 25.0),
        ("persistence @1 ppm", collision_persistence_s(&b, 1.0), 500.0),
        ("recurrence @20 ppm", collision_recurrence_s(&b, 20.0), 25_000.0),
        ("recurrence @1 ppm", collision_recurrence_s(&b, 1.0), 500_000.0),
    ];
    for (what, got, want) in cases {
        let got = got.seconds().ok_or(format!("{what}: unbounded"))?;
        check((got - want).abs() <= 1e-9 * want, format!("{what}: {got} s, want {want} s"))?;
    }
    check(
        collision_persistence_s(&b, 0.0) == DriftSpan::Unbounded,
        "zero drift should be unbounded",
    )?;
    Ok("25 s, 500 s, 25000 s, 500000 s".into())
}

fn max_nlc(s: &ScenarioFile) -> (u32, Duration) {
    let t = Instant::now();
    let hm = hostile_map(
        &s.layout,
        &s.effective_radio(),
        &s.placement.placement(),
        s.placement.mirror_policy,
        s.layout.central_apartment(),
    )
    .expect("hostile map");
    (hm.max(), t.elapsed())
}

fn criterion_3() -> Outcome {
    let mut parts = Vec::new();
    let defaults = [
        ("residential_10x10_2g4", 7),
        ("residential_7x12_2g4", 9),
        ("residential_5x11_5g_n12", 10),
        ("residential_5x11_5g_n20", 10),
    ];
    for (name, want) in defaults {
        let (got, took) = max_nlc(&scenario(name));
        check(
            (got as i64 - want).abs() <= MAX_NLC_TOLERANCE,
            format!("{name}: max N_LC {got}, want {want} +/- {MAX_NLC_TOLERANCE}"),
        )?;
        check(took < Duration::from_secs(5), format!("{name}: took {took:?}"))?;
        parts.push(format!("{name}={got}"));
    }
    // Exact-match configurations from the scenario cookbook.
    for (name, want) in [
        ("residential_10x10_2g4", 7),
        ("residential_7x12_2g4", 9),
        ("residential_5x11_5g_exact", 10),
    ] {
        let (got, _) = max_nlc(&scenario(name));
        check(got == want, format!("cookbook {name}: max N_LC {got}, want exactly {want}"))?;
    }
    parts.push("cookbook exact 7/9/10".into());

    let mut fc5 = scenario("residential_5x11_5g_n12");
    fc5.radio.carrier_ghz = 5.0;
    let (v, _) = max_nlc(&fc5);
    println!("  info: 5x11 with a 5 GHz path-loss carrier gives max N_LC {v}");
    Ok(parts.join(", "))
}

fn criterion_4() -> Outcome {
    let mut cells = 0;
    for name in [
        "residential_10x10_2g4",
        "residential_7x12_2g4",
        "residential_5x11_5g_n12",
        "residential_5x11_5g_n20",
    ] {
        let s = scenario(name);
        let t = Instant::now();
        for row in 0..s.layout.rows {
            let reports: Vec<_> = [0.0, 3.0, 6.0]
                .iter()
                .map(|dp| {
                    building_report(
                        &s.layout,
                        &s.radio.with_delta_p(*dp),
                        &s.placement.placement(),
                        s.placement.mirror_policy,
                        row,
                    )
                    .expect("report")
                })
                .collect();
            for pair in reports.windows(2) {
                for (a, b) in pair[0].per_apartment_mean.iter().flatten().zip(pair[1].per_apartment_mean.iter().flatten()) {
                    check(
                        b <= a,
                        format!("{name} row {row}: {b} at dP={} exceeds {a} at dP={}", pair[1].delta_p_db, pair[0].delta_p_db),
                    )?;
                    cells += 1;
                }
                check(pair[1].max_nlc <= pair[0].max_nlc, format!("{name}: building max rose with dP"))?;
            }
        }
        check(t.elapsed() < Duration::from_secs(30), format!("{name}: took {:?}", t.elapsed()))?;
    }
    Ok(format!("{cells} cell comparisons non-increasing over dP 0/3/6"))
}

fn criterion_5() -> Outcome {
    let shapes = [(1, 1, 2), (1, 2, 3), (2, 1, 3), (2, 2, 3), (3, 2, 2)];
    let dims = [(4.0, 3.0), (10.0, 10.0), (7.0, 5.0)];
    let radios = [(18.0, -86.0), (0.0, -86.0), (-10.0, -70.0)];
    let mut maps = 0;
    let mut nonzero = 0;
    for (floors, rows, cols) in shapes {
        for (w, d) in dims {
            let layout = BuildingLayout {
                floors,
                rows,
                apartments_per_row: cols,
                apartment_width_m: w,
                apartment_depth_m: d,
                floor_height_m: 3.0,
                device_height_m: 1.5,
                extra_inter_row_walls: 0,
            };
            let toy = Toy {
                floors,
                rows,
                cols,
                width: w,
                depth: d,
                floor_h: 3.0,
                dev_h: 1.5,
            };
            for (p0, pth) in radios {
                for dp in [0.0, 6.0] {
                    let radio = RadioConfig {
                        tx_power_dbm: p0,
                        sensitivity_dbm: pth,
                        delta_p_db: dp,
                        ..RadioConfig::residential_2g4()
                    };
                    let toy_radio = ToyRadio {
                        p0,
                        pth,
                        dp,
                        fc: 2.4,
                    };
                    for (k, kind) in PlacementKind::ALL.iter().enumerate() {
                        for mirror in [MirrorPolicy::Uniform, MirrorPolicy::MirroredAcrossRows] {
                            let placement = ApPlacement::new(*kind);
                            for apt in layout.apartments() {
                                let hm = hostile_map(&layout, &radio, &placement, mirror, apt).map_err(|e| e.to_string())?;
                                let oracle = common::hostile_sets(
                                    &toy,
                                    &toy_radio,
                                    common::PLACEMENTS[k],
                                    1.0,
                                    mirror == MirrorPolicy::MirroredAcrossRows,
                                    (apt.floor, apt.row, apt.column),
                                );
                                let got: Vec<Vec<Vec<(u32, u32, u32)>>> = hm
                                    .hostile_sets
                                    .iter()
                                    .map(|row| {
                                        row.iter()
                                            .map(|set| set.iter().map(|a| (a.floor, a.row, a.column)).collect())
                                            .collect()
                                    })
                                    .collect();
                                check(
                                    got == oracle,
                                    format!("{floors}x{rows}x{cols} {w}x{d} {kind:?} {mirror:?} P0={p0} dP={dp} apt {apt}"),
                                )?;
                                maps += 1;
                                nonzero += usize::from(hm.max() > 0);
                            }
                        }
                    }
                }
            }
        }
    }
    check(nonzero > maps / 10, format!("only {nonzero} of {maps} maps are non-trivial"))?;
    Ok(format!("{maps} maps identical to the exhaustive evaluator ({nonzero} non-zero)"))
}

fn pair_config(home: ExplicitAp, alien: ExplicitAp, duration_s: f64) -> SimConfig {
    SimConfig::explicit(
        TopologySpec::Explicit {
            aps: vec![home, alien],
            stas: vec![ExplicitSta {
                home: 0,
                hostile: vec![1],
            }],
            hears: vec![],
        },
        BeaconConfig::default(),
        duration_s,
    )
}

fn fixed(channel: Option<u32>, offset_us: Option<f64>, drift_ppm: f64) -> ExplicitAp {
    ExplicitAp {
        name: None,
        channel,
        tbtt_offset_us: offset_us,
        drift_ppm: Some(drift_ppm),
    }
}

fn criterion_6() -> Outcome {
    // One second with a one-interval warm-up scores exactly one home beacon
    // per run, so runs are independent Bernoulli trials over uniform phases.
    let l_over_b = time_condition_probability(&BeaconConfig::default());
    let cases = [
        ("forced channel", None::<(Band, u32)>, 200_000u32, l_over_b),
        ("random of 3 (2.4 GHz)", Some((Band::Band2_4, 3)), 300_000, l_over_b / 3.0),
        ("random of 12 (5 GHz)", Some((Band::Band5, 12)), 300_000, l_over_b / 12.0),
    ];
    let mut parts = Vec::new();
    for (label, plan, runs, p) in cases {
        let channel = if plan.is_some() { None } else { Some(0) };
        let mut cfg = pair_config(fixed(channel, None, 0.0), fixed(channel, None, 0.0), 1.0);
        if let Some((band, n)) = plan {
            cfg.radio.band = band;
            cfg.radio.n_primary_channels = n;
        }
        let mc: MonteCarloSummary = monte_carlo(&cfg, runs, 1).map_err(|e| e.to_string())?;
        let n = mc.pooled_miss.trials;
        check(n >= MIN_INTERVALS, format!("{label}: only {n} intervals"))?;
        let (ok, sigma) = within_sigma(mc.pooled_miss.rate, p, n);
        check(
            ok,
            format!("{label}: rate {} vs {p} (sigma {sigma:.2e}, n {n})", mc.pooled_miss.rate),
        )?;
        parts.push(format!("{label}: {:.3e} vs {:.3e}", mc.pooled_miss.rate, p));
    }
    Ok(parts.join("; "))
}

fn criterion_7() -> Outcome {
    let beacons = BeaconConfig::default();
    let interval_s = beacons.interval_us() / 1e6;
    let mut parts = Vec::new();
    for drift in [20.0, 1.0] {
        let persistence = collision_persistence_s(&beacons, drift).seconds().unwrap();
        let recurrence = collision_recurrence_s(&beacons, drift).seconds().unwrap();
        // The alien starts 1 ms after the home beacon and runs fast, so its
        // beacons creep earlier until they cover the home start.
        let duration = 1.0 + (1.0 / 500.0 + 1.1) * recurrence + persistence;
        let cfg = pair_config(
            fixed(Some(0), Some(100_000.0), 0.0),
            fixed(Some(0), Some(101_000.0), -drift),
            duration,
        );
        let stats = run_timeline(&cfg).map_err(|e| e.to_string())?;
        let eras = &stats.per_sta[0].miss_eras;
        check(eras.len() >= 2, format!("{drift} ppm: {} eras", eras.len()))?;
        let era_len = eras[0].beacons as f64 * interval_s;
        let spacing = (eras[1].first_ns - eras[0].first_ns) as f64 / 1e9;
        check(
            (era_len - persistence).abs() <= ERA_TOLERANCE_INTERVALS * interval_s,
            format!("{drift} ppm: era {era_len} s vs {persistence} s"),
        )?;
        check(
            (spacing - recurrence).abs() <= ERA_TOLERANCE_INTERVALS * interval_s,
            format!("{drift} ppm: spacing {spacing} s vs {recurrence} s"),
        )?;
        parts.push(format!("{drift} ppm: era {era_len} s, spacing {spacing} s"));
    }
    Ok(parts.join("; "))
}

fn dsc_identical() -> Result<String, String> {
    let s = scenario("residential_10x10_2g4");
    let placement = s.placement.placement();
    for offset in [3.0, 6.0] {
        let native = all_hostile_maps(&s.layout, &s.radio.with_delta_p(offset), &placement, s.placement.mirror_policy)
            .map_err(|e| e.to_string())?;
        let dsc = all_hostile_maps(&s.layout, &apply_dsc(&s.radio, offset), &placement, s.placement.mirror_policy)
            .map_err(|e| e.to_string())?;
        check(
            serde_json::to_string(&native).unwrap() == serde_json::to_string(&dsc).unwrap(),
            format!("analysis differs at offset {offset}"),
        )?;

        let mut cfg = s.sim_config();
        cfg.duration_s = 120.0;
        cfg.seed = 9;
        let mut native_cfg = cfg.clone();
        native_cfg.radio.delta_p_db += offset;
        let mut dsc_cfg = cfg.clone();
        dsc_cfg.mitigation = vec![MitigationSpec::Dsc {
            sensitivity_offset_db: offset,
        }];
        let a = serde_json::to_string(&run_timeline(&native_cfg).map_err(|e| e.to_string())?).unwrap();
        let b = serde_json::to_string(&run_timeline(&dsc_cfg).map_err(|e| e.to_string())?).unwrap();
        check(a == b, format!("simulation differs at offset {offset}"))?;
    }
    Ok("DSC bit-identical".into())
}

fn distinct_intervals_cap() -> Result<String, String> {
    let mut misses = 0;
    let mut worst = 0;
    for seed in 0..40 {
        let mut cfg = pair_config(fixed(Some(0), None, 0.0), fixed(Some(0), None, 0.0), 600.0);
        if let TopologySpec::Explicit { aps, .. } = &mut cfg.topology {
            for ap in aps.iter_mut() {
                ap.drift_ppm = None;
            }
        }
        cfg.seed = seed;
        cfg.mitigation = vec![MitigationSpec::DistinctIntervals {
            interval_set_us: vec![500_000.0, 499_000.0],
        }];
        let stats = run_timeline(&cfg).map_err(|e| e.to_string())?;
        misses += stats.beacons_missed;
        worst = worst.max(stats.miss_streak_max);
    }
    check(misses > 0, "no collisions at all, the cap was not exercised")?;
    check(worst <= 1, format!("run of {worst} consecutive misses"))?;

    // 500 and 501 ms with zero drift: one miss every lcm = 250.5 s.
    let mut cfg = pair_config(fixed(Some(0), Some(700.0), 0.0), fixed(Some(0), Some(500.0), 0.0), 700.0);
    cfg.mitigation = vec![MitigationSpec::DistinctIntervals {
        interval_set_us: vec![500_000.0, 501_000.0],
    }];
    let stats = run_timeline(&cfg).map_err(|e| e.to_string())?;
    let eras = &stats.per_sta[0].miss_eras;
    check(eras.len() == 2, format!("{} collision eras in 700 s", eras.len()))?;
    let spacing_ns = eras[1].first_ns - eras[0].first_ns;
    check(spacing_ns == 250_500_000_000, format!("recurrence {spacing_ns} ns"))?;
    Ok(format!("streak <= 1 over {misses} misses, 500/501 ms recur every 250.5 s"))
}

fn mbca_settles() -> Result<String, String> {
    let base = scenario("hidden_triple_mbca");
    let params = match base.mitigation.first() {
        Some(MitigationSpec::Mbca(p)) => *p,
        _ => return Err("hidden_triple_mbca has no MBCA entry".into()),
    };
    let interval_ns = base.beacons.interval_ns();
    let mut worst = 0;
    let mut mbca_missed = 0;
    let mut baseline_missed = 0;
    for seed in 1..=20 {
        let mut cfg = base.sim_config();
        cfg.seed = seed;
        let (stats, log) = run_timeline_with_log(&cfg).map_err(|e| e.to_string())?;
        mbca_missed += stats.beacons_missed;
        let mut txs: Vec<(i64, i64, usize)> = log
            .iter()
            .filter_map(|r| match r.kind {
                EventKind::Tx { end_ns, .. } => Some((r.t_ns, end_ns, r.ap)),
                _ => None,
            })
            .collect();
        txs.sort();
        let mut last_overlap_interval = 0;
        for (i, a) in txs.iter().enumerate() {
            for b in &txs[i + 1..] {
                if b.0 >= a.1 {
                    break;
                }
                if b.2 != a.2 {
                    last_overlap_interval = last_overlap_interval.max((b.0 / interval_ns) as u64 + 1);
                }
            }
        }
        worst = worst.max(last_overlap_interval);

        cfg.mitigation.clear();
        baseline_missed += run_timeline(&cfg).map_err(|e| e.to_string())?.beacons_missed;
    }
    let bound = params.missing_report_threshold as u64 + 2;
    check(bound == MBCA_SETTLE_INTERVALS, "scenario MBCA threshold changed")?;
    check(
        worst <= bound,
        format!("overlaps persisted until interval {worst}, bound {bound}"),
    )?;
    check(
        mbca_missed < baseline_missed,
        format!("MBCA missed {mbca_missed}, baseline {baseline_missed}"),
    )?;
    Ok(format!(
        "overlap-free after <= {worst} intervals (bound {bound}); misses {mbca_missed} vs baseline {baseline_missed}"
    ))
}

fn p_persistent_delivery() -> Result<String, String> {
    let mut parts = Vec::new();
    for p in [0.5, 0.8] {
        let mut cfg = pair_config(
            fixed(Some(0), Some(1_200.0), 0.0),
            fixed(Some(0), Some(1_000.0), 0.0),
            5_010.0,
        );
        cfg.mitigation = vec![MitigationSpec::PPersistent { p }];
        let mc = monte_carlo(&cfg, 10, 77).map_err(|e| e.to_string())?;
        let n = mc.pooled_delivery.trials;
        check(n >= MIN_INTERVALS, format!("only {n} intervals"))?;
        let want = p * (1.0 - p);
        let (ok, sigma) = within_sigma(mc.pooled_delivery.rate, want, n);
        check(
            ok,
            format!("p={p}: delivery {} vs {want} (sigma {sigma:.2e})", mc.pooled_delivery.rate),
        )?;
        parts.push(format!("p={p}: {:.4} vs {want:.4}", mc.pooled_delivery.rate));
    }
    Ok(parts.join(", "))
}

fn criterion_8() -> Outcome {
    let a = dsc_identical()?;
    let b = distinct_intervals_cap()?;
    let c = mbca_settles()?;
    let d = p_persistent_delivery()?;
    Ok(format!("(a) {a}; (b) {b}; (c) {c}; (d) {d}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 8] = [
        ("closed-form probabilities", criterion_1, 1),
        ("drift arithmetic", criterion_2, 1),
        ("heatmap maxima", criterion_3, 20),
        ("dP monotonicity", criterion_4, 120),
        ("brute-force oracle", criterion_5, 30),
        ("simulation vs analytics", criterion_6, 60),
        ("drift eras", criterion_7, 30),
        ("mitigation properties", criterion_8, 60),
    ];
    let mut failed = 0;
    for (i, (name, f, budget_s)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = t.elapsed();
        let result = result.and_then(|msg| {
            if took > Duration::from_secs(*budget_s) {
                Err(format!("{msg} but took {took:.1?}, budget {budget_s} s"))
            } else {
                Ok(msg)
            }
        });
        match result {
            Ok(msg) => println!("criterion {}: PASS  {name}: {msg} [{took:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {msg} [{took:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
