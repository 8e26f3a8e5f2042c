use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{AnalysisError, RunData};
use crate::clock::ClockTime;
use crate::net::{CongestionLevel, LinkKind, NetworkGraph};
use crate::sim::TrafficRow;
use crate::MINUTES_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    Csv,
    Png,
}

impl std::str::FromStr for SnapshotFormat {
    type Err = AnalysisError;
    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(SnapshotFormat::Csv),
            "png" => Ok(SnapshotFormat::Png),
            other => Err(AnalysisError::Format(format!("unknown snapshot format `{other}` (csv or png)"))),
        }
    }
}

/// Which (day, time) pairs to export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRequest {
    /// 0-based days; every day of the run when empty.
    pub days: Vec<u32>,
    pub times: Vec<ClockTime>,
    pub format: SnapshotFormat,
}

impl SnapshotRequest {
    /// Parses `HH:MM` strings; times must fall inside the day (before 24:00).
    pub fn new(days: Vec<u32>, times: &[&str], format: SnapshotFormat) -> Result<Self, AnalysisError> {
        let times = times.iter().map(|t| parse_snapshot_time(t)).collect::<Result<Vec<_>, _>>()?;
        Ok(SnapshotRequest { days, times, format })
    }
}

pub fn parse_snapshot_time(s: &str) -> Result<ClockTime, AnalysisError> {
    let t: ClockTime = s.parse().map_err(|_| AnalysisError::TimeOutOfRange(s.to_string()))?;
    if t.minutes() >= MINUTES_PER_DAY {
        return Err(AnalysisError::TimeOutOfRange(s.to_string()));
    }
    Ok(t)
}

/// One link's state at the snapshot minute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSnapshot {
    pub link: String,
    pub from: String,
    pub to: String,
    pub kind: LinkKind,
    pub occupancy: usize,
    pub queue: usize,
    pub capacity: Option<u32>,
    pub wait: u32,
    pub level: CongestionLevel,
}

/// Every link's state at `day`/`time`; links absent from the sparse traffic log are empty.
pub fn snapshot_at(run: &RunData, day: u32, time: ClockTime) -> Result<Vec<LinkSnapshot>, AnalysisError> {
    if day >= run.days() {
        return Err(AnalysisError::DayOutOfRange { day, days: run.days() });
    }
    let tick = day * MINUTES_PER_DAY + time.minutes();
    let rows: BTreeMap<&str, &TrafficRow> = run.log.traffic.iter().filter(|r| r.tick == tick).map(|r| (r.link.as_str(), r)).collect();
    Ok(run
        .graph
        .links()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let r = rows.get(l.id.as_str());
            LinkSnapshot {
                link: l.id.clone(),
                from: l.from.clone(),
                to: l.to.clone(),
                kind: l.kind,
                occupancy: r.map(|r| r.occupancy).unwrap_or(0),
                queue: r.map(|r| r.queue).unwrap_or(0),
                capacity: r.and_then(|r| r.capacity).or(run.graph.capacity(i)),
                wait: r.map(|r| r.wait).unwrap_or(0),
                level: r.map(|r| r.level).unwrap_or(CongestionLevel::Free),
            }
        })
        .collect())
}

/// Writes one file per requested (day, time) into `dir` and returns their paths.
pub fn snapshot_export(run: &RunData, req: &SnapshotRequest, dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    std::fs::create_dir_all(dir).map_err(|e| AnalysisError::Io(format!("{}: {e}", dir.display())))?;
    let days: Vec<u32> = if req.days.is_empty() { (0..run.days()).collect() } else { req.days.clone() };
    let mut out = Vec::new();
    for &d in &days {
        for &t in &req.times {
            let snap = snapshot_at(run, d, t)?;
            let stem = format!("snapshot_day{d}_{:02}{:02}", t.minutes() / 60, t.minutes() % 60);
            let path = match req.format {
                SnapshotFormat::Csv => {
                    let p = dir.join(format!("{stem}.csv"));
                    write_csv(&snap, &p)?;
                    p
                }
                SnapshotFormat::Png => {
                    let p = dir.join(format!("{stem}.png"));
                    render_png(&run.graph, &snap).save(&p).map_err(|e| AnalysisError::Io(format!("{}: {e}", p.display())))?;
                    p
                }
            };
            out.push(path);
        }
    }
    Ok(out)
}

fn write_csv(snap: &[LinkSnapshot], path: &Path) -> Result<(), AnalysisError> {
    let err = |e: csv::Error| AnalysisError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for s in snap {
        w.serialize(s).map_err(err)?;
    }
    w.flush().map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))
}

pub fn level_color(level: CongestionLevel) -> Rgb<u8> {
    match level {
        CongestionLevel::Free => Rgb([46, 160, 67]),
        CongestionLevel::Light => Rgb([230, 200, 30]),
        CongestionLevel::Moderate => Rgb([240, 130, 20]),
        CongestionLevel::Severe => Rgb([210, 30, 30]),
    }
}

const WIDTH: u32 = 900;
const HEIGHT: u32 = 700;
const MARGIN: f64 = 40.0;

/// Network drawn from node coordinates; road links colored by level, transit links grey.
pub fn render_png(graph: &NetworkGraph, snap: &[LinkSnapshot]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let pos: Vec<[f64; 2]> = graph.nodes().iter().map(|n| n.position).collect();
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for p in &pos {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = [(hi[0] - lo[0]).max(1e-9), (hi[1] - lo[1]).max(1e-9)];
    let sx = (f64::from(WIDTH) - 2.0 * MARGIN) / span[0];
    let sy = (f64::from(HEIGHT) - 2.0 * MARGIN) / span[1];
    let scale = sx.min(sy);
    // Image y grows downward.
    let px = |p: [f64; 2]| (MARGIN + (p[0] - lo[0]) * scale, f64::from(HEIGHT) - MARGIN - (p[1] - lo[1]) * scale);
    for (i, s) in snap.iter().enumerate() {
        let (a, b) = graph.link_ends(i);
        let (x0, y0) = px(pos[a]);
        let (x1, y1) = px(pos[b]);
        // Offset the two directions of a street so both stay visible.
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len = (dx * dx + dy * dy).sqrt().max(1e-9);
        let (nx, ny) = (-dy / len * 4.0, dx / len * 4.0);
        let (color, width) = match s.kind {
            LinkKind::Road => (level_color(s.level), 3),
            _ => (Rgb([150, 150, 150]), 1),
        };
        draw_line(&mut img, (x0 + nx, y0 + ny), (x1 + nx, y1 + ny), color, width);
    }
    for p in &pos {
        let (x, y) = px(*p);
        fill_square(&mut img, x, y, 4, Rgb([30, 30, 30]));
    }
    img
}

fn fill_square(img: &mut RgbImage, x: f64, y: f64, half: i64, c: Rgb<u8>) {
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    for yy in cy - half..=cy + half {
        for xx in cx - half..=cx + half {
            if xx >= 0 && yy >= 0 && (xx as u32) < img.width() && (yy as u32) < img.height() {
                img.put_pixel(xx as u32, yy as u32, c);
            }
        }
    }
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>, width: i64) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for k in 0..=steps {
        let f = k as f64 / steps as f64;
        fill_square(img, a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f, width / 2, c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times_must_be_inside_the_day() {
        assert!(matches!(parse_snapshot_time("25:00"), Err(AnalysisError::TimeOutOfRange(_))));
        assert!(parse_snapshot_time("24:00").is_err());
        assert_eq!(parse_snapshot_time("7:30").unwrap(), ClockTime::hm(7, 30));
    }

    #[test]
    fn png_has_level_colors() {
        let g = NetworkGraph::nguyen_dupuis();
        let i = g.link_idx("Ave_2_link_2").unwrap();
        let snap: Vec<LinkSnapshot> = g
            .links()
            .iter()
            .enumerate()
            .map(|(k, l)| LinkSnapshot {
                link: l.id.clone(),
                from: l.from.clone(),
                to: l.to.clone(),
                kind: l.kind,
                occupancy: 0,
                queue: 0,
                capacity: None,
                wait: 0,
                level: if k == i { CongestionLevel::Severe } else { CongestionLevel::Free },
            })
            .collect();
        let img = render_png(&g, &snap);
        let red = level_color(CongestionLevel::Severe);
        assert!(img.pixels().any(|p| *p == red));
        assert!(img.pixels().any(|p| *p == level_color(CongestionLevel::Free)));
    }
}
