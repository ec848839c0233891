//! Scenario files (JSON) and the flat CSV tables written for plotting and
//! inspection.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use amrfleet_core::auction::AuctionTrace;
use amrfleet_core::collision::{ConflictWindow, Track};
use amrfleet_core::model::PhaseKind;
use amrfleet_core::reschedule::EventLogEntry;
use amrfleet_core::scenario::{Scenario, SCHEMA_VERSION};
use amrfleet_core::Error as CoreError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {path}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("scenario schema_version {found:?} is not supported (expected {expected})")]
    Schema { found: Option<u64>, expected: u32 },
    #[error("invalid scenario: {0}")]
    Invalid(#[from] CoreError),
}

pub type IoResult<T> = Result<T, IoError>;

fn open(path: &Path) -> IoResult<File> {
    File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> IoResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.display().to_string(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })
}

/// Parses and validates a scenario document. The schema version is checked
/// before the rest of the document is interpreted.
pub fn scenario_from_str(text: &str) -> IoResult<Scenario> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    if found != Some(SCHEMA_VERSION as u64) {
        return Err(IoError::Schema {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    let scenario: Scenario = serde_json::from_value(value)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn scenario_to_string(scenario: &Scenario) -> IoResult<String> {
    Ok(serde_json::to_string_pretty(scenario)?)
}

pub fn read_scenario(path: &Path) -> IoResult<Scenario> {
    let mut text = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(open(path)?), &mut text).map_err(|source| {
        IoError::File {
            path: path.display().to_string(),
            source,
        }
    })?;
    scenario_from_str(&text)
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> IoResult<()> {
    write_json(path, scenario)
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> IoResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> IoResult<T> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

/// Writes `rows` as a CSV file with a header taken from the row type.
pub fn write_csv_file<R: Serialize + Default>(path: &Path, rows: impl IntoIterator<Item = R>) -> IoResult<()> {
    write_csv(create(path)?, rows)
}

/// Writes `rows` with a header line; an empty table still gets the header
/// of a default row.
pub fn write_csv<W: Write, R: Serialize + Default>(mut w: W, rows: impl IntoIterator<Item = R>) -> IoResult<()> {
    let mut rows = rows.into_iter().peekable();
    if rows.peek().is_none() {
        let mut buf = csv::Writer::from_writer(Vec::new());
        buf.serialize(R::default())?;
        let bytes = buf.into_inner().map_err(|e| IoError::Csv(e.into_error().into()))?;
        let header = bytes.split(|b| *b == b'\n').next().unwrap_or_default();
        return w
            .write_all(header)
            .and_then(|_| w.write_all(b"\n"))
            .and_then(|_| w.flush())
            .map_err(|e| IoError::Csv(e.into()));
    }
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TrajectoryRow {
    pub robot: u32,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub soc: f64,
    pub steer: f64,
    pub voltage: f64,
    pub brake: f64,
    pub p_battery: f64,
}

/// Every integration sample of every track, in robot then time order.
pub fn trajectory_rows(tracks: &[Track]) -> Vec<TrajectoryRow> {
    tracks
        .iter()
        .flat_map(|tr| {
            tr.route.samples().map(move |s| TrajectoryRow {
                robot: tr.robot.0,
                t: s.t,
                x: s.state.x,
                y: s.state.y,
                heading: s.state.heading,
                speed: s.state.speed,
                soc: s.state.soc,
                steer: s.control.steer,
                voltage: s.control.voltage,
                brake: s.control.brake,
                p_battery: s.power.p_battery,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PhaseRow {
    pub robot: u32,
    pub phase: usize,
    pub kind: &'static str,
    pub task: Option<u32>,
    pub path_length: f64,
    pub start: f64,
    pub duration: f64,
    pub energy: f64,
    pub objective: f64,
}

pub fn phase_rows(tracks: &[Track]) -> Vec<PhaseRow> {
    tracks
        .iter()
        .flat_map(|tr| {
            tr.route.segments.iter().map(move |s| PhaseRow {
                robot: tr.robot.0,
                phase: s.index,
                kind: match s.kind {
                    PhaseKind::Unloaded => "unloaded",
                    PhaseKind::Loaded => "loaded",
                },
                task: s.task.map(|t| t.0),
                path_length: s.path_length(),
                start: s.start_time,
                duration: s.duration,
                energy: s.energy(),
                objective: s.objective,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyRow {
    pub robot: u32,
    pub t: f64,
    pub energy: f64,
}

/// Cumulative battery energy per robot against time (trapezoid rule over
/// the battery power samples).
pub fn energy_series(tracks: &[Track]) -> Vec<EnergyRow> {
    let mut out = Vec::new();
    for tr in tracks {
        let mut acc = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for s in tr.route.samples() {
            if let Some((t0, p0)) = prev {
                acc += 0.5 * (p0 + s.power.p_battery) * (s.t - t0);
            }
            prev = Some((s.t, s.power.p_battery));
            out.push(EnergyRow {
                robot: tr.robot.0,
                t: s.t,
                energy: acc,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ConflictRow {
    pub robot_a: u32,
    pub robot_b: u32,
    pub t_start: f64,
    pub t_end: f64,
    pub min_sep: f64,
}

pub fn conflict_rows(windows: &[ConflictWindow]) -> Vec<ConflictRow> {
    windows
        .iter()
        .map(|w| ConflictRow {
            robot_a: w.robots.0 .0,
            robot_b: w.robots.1 .0,
            t_start: w.t_start,
            t_end: w.t_end,
            min_sep: w.min_separation,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AuctionRow {
    pub round: usize,
    pub task: u32,
    pub winner: u32,
    pub winning_bid: f64,
    pub second_best_bid: Option<f64>,
}

pub fn auction_rows(trace: &AuctionTrace) -> Vec<AuctionRow> {
    trace
        .rounds
        .iter()
        .enumerate()
        .map(|(i, r)| AuctionRow {
            round: i + 1,
            task: r.task.0,
            winner: r.winner.0,
            winning_bid: r.winning_bid,
            second_best_bid: r.second_best,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EventRow {
    pub t: f64,
    pub kind: &'static str,
    pub robot: Option<u32>,
    pub tasks_reassigned: usize,
    pub latency: f64,
    pub v_before: f64,
    pub v_after: f64,
}

pub fn event_rows(log: &[EventLogEntry]) -> Vec<EventRow> {
    log.iter()
        .map(|e| EventRow {
            t: e.t,
            kind: e.kind.name(),
            robot: e.robot.map(|r| r.0),
            tasks_reassigned: e.tasks_reassigned,
            latency: e.latency,
            v_before: e.v_before,
            v_after: e.v_after,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use amrfleet_core::scenario::{generate_scenario, ScenarioSpec};

    #[test]
    fn scenario_round_trip() {
        let s = generate_scenario(&ScenarioSpec {
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        let text = scenario_to_string(&s).unwrap();
        assert_eq!(scenario_from_str(&text).unwrap(), s);
    }

    #[test]
    fn schema_version_is_checked_first() {
        let s = generate_scenario(&ScenarioSpec::default()).unwrap();
        let mut v = serde_json::to_value(&s).unwrap();
        v["schema_version"] = 2.into();
        assert!(matches!(
            scenario_from_str(&v.to_string()),
            Err(IoError::Schema { found: Some(2), .. })
        ));
        v.as_object_mut().unwrap().remove("schema_version");
        assert!(matches!(
            scenario_from_str(&v.to_string()),
            Err(IoError::Schema { found: None, .. })
        ));
        assert!(matches!(scenario_from_str("{"), Err(IoError::Json(_))));
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            [ConflictRow {
                robot_a: 1,
                robot_b: 2,
                t_start: 0.5,
                t_end: 1.0,
                min_sep: 0.25,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "robot_a,robot_b,t_start,t_end,min_sep\n1,2,0.5,1.0,0.25\n"
        );
        let mut buf = Vec::new();
        write_csv(&mut buf, Vec::<EventRow>::new()).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,kind,robot,tasks_reassigned,latency,v_before,v_after\n"
        );
    }
}
