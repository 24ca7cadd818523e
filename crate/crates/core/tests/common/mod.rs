//! Exhaustive reference evaluator for hostile-AP counts, written without any
//! of the library's geometry or propagation code.
//!
//! A straight segment between two apartments crosses exactly one wall per
//! column step and one per row step, and a junction crossing is one of each,
//! so the wall count is the Manhattan distance between apartment cells.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy)]
pub struct Toy {
    pub floors: u32,
    pub rows: u32,
    pub cols: u32,
    pub width: f64,
    pub depth: f64,
    pub floor_h: f64,
    pub dev_h: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ToyRadio {
    pub p0: f64,
    pub pth: f64,
    pub dp: f64,
    pub fc: f64,
}

pub const PLACEMENTS: [&str; 9] = [
    "center",
    "wall_mid_north",
    "wall_mid_south",
    "wall_mid_east",
    "wall_mid_west",
    "corner_ne",
    "corner_nw",
    "corner_se",
    "corner_sw",
];

pub fn pl(d: f64, fc: f64, floors: u32, walls: u32) -> f64 {
    assert!(d > 1.0, "oracle asked for d = {d}");
    let mut v = 40.05 + 20.0 * (fc / 2.4).log10();
    if d <= 5.0 {
        v += 20.0 * d.log10();
    } else {
        v += 20.0 * 5f64.log10() + 35.0 * (d / 5.0).log10();
    }
    if floors > 0 {
        let f = floors as f64;
        let e = (f + 2.0) / (f + 1.0) - 0.46;
        v += 18.3 * f.powf(e);
    }
    v + 5.0 * walls as f64
}

#[derive(Debug, Clone, Copy)]
struct Dev {
    f: u32,
    r: u32,
    c: u32,
    p: [f64; 3],
}

fn power(a: &Dev, b: &Dev, radio: &ToyRadio) -> f64 {
    let d = ((a.p[0] - b.p[0]).powi(2) + (a.p[1] - b.p[1]).powi(2) + (a.p[2] - b.p[2]).powi(2)).sqrt();
    let floors = a.f.abs_diff(b.f);
    let walls = a.r.abs_diff(b.r) + a.c.abs_diff(b.c);
    radio.p0 - pl(d, radio.fc, floors, walls)
}

pub fn local_ap(kind: &str, w: f64, d: f64, inset: f64) -> (f64, f64) {
    let x = match kind {
        "center" | "wall_mid_north" | "wall_mid_south" => w / 2.0,
        "wall_mid_east" | "corner_ne" | "corner_se" => w - inset,
        _ => inset,
    };
    let y = match kind {
        "center" | "wall_mid_east" | "wall_mid_west" => d / 2.0,
        "wall_mid_north" | "corner_ne" | "corner_nw" => d - inset,
        _ => inset,
    };
    (x, y)
}

fn ap(t: &Toy, kind: &str, inset: f64, mirrored: bool, f: u32, r: u32, c: u32) -> Dev {
    let (lx, mut ly) = local_ap(kind, t.width, t.depth, inset);
    if mirrored && r % 2 == 1 {
        ly = t.depth - ly;
    }
    Dev {
        f,
        r,
        c,
        p: [
            c as f64 * t.width + lx,
            r as f64 * t.depth + ly,
            f as f64 * t.floor_h + t.dev_h,
        ],
    }
}

/// Hostile sets per grid point of apartment `home`, as `(floor, row, col)`
/// triples, in row-major grid order.
pub fn hostile_sets(
    t: &Toy,
    radio: &ToyRadio,
    kind: &str,
    inset: f64,
    mirrored: bool,
    home: (u32, u32, u32),
) -> Vec<Vec<Vec<(u32, u32, u32)>>> {
    let (hf, hr, hc) = home;
    let ap0 = ap(t, kind, inset, mirrored, hf, hr, hc);
    let mut out = Vec::new();
    let ny = t.depth as usize;
    let nx = t.width as usize;
    for iy in 0..ny {
        let mut row = Vec::new();
        for ix in 0..nx {
            let sta = Dev {
                f: hf,
                r: hr,
                c: hc,
                p: [
                    hc as f64 * t.width + ix as f64 + 0.5,
                    hr as f64 * t.depth + iy as f64 + 0.5,
                    hf as f64 * t.floor_h + t.dev_h,
                ],
            };
            let mut set = Vec::new();
            for f in 0..t.floors {
                for r in 0..t.rows {
                    for c in 0..t.cols {
                        if (f, r, c) == home {
                            continue;
                        }
                        let x = ap(t, kind, inset, mirrored, f, r, c);
                        let hidden = power(&ap0, &x, radio) < radio.pth;
                        let heard = power(&sta, &x, radio) >= radio.pth + radio.dp;
                        if hidden && heard {
                            set.push((f, r, c));
                        }
                    }
                }
            }
            row.push(set);
        }
        out.push(row);
    }
    out
}

/// Location condition for arbitrary positions, given the apartment cell of
/// each point.
pub fn location(
    radio: &ToyRadio,
    sta: ([f64; 3], (u32, u32, u32)),
    ap0: ([f64; 3], (u32, u32, u32)),
    apx: ([f64; 3], (u32, u32, u32)),
) -> bool {
    let dev = |(p, (f, r, c)): ([f64; 3], (u32, u32, u32))| Dev { f, r, c, p };
    let (s, a0, x) = (dev(sta), dev(ap0), dev(apx));
    power(&a0, &x, radio) < radio.pth && power(&s, &x, radio) >= radio.pth + radio.dp
}
