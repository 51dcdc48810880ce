//! Trajectory CSV, JSON reports and atomic file writes.
//!
//! `trajectory.csv` starts with one `# meta {...}` comment line carrying the
//! robot kind, control period, geometry, limits, obstacles, safety distances
//! and the reference polyline, followed by a header row and one row per
//! control period:
//!
//! `t, x1, y1, v, a, theta, psi, delta1, delta2, u0_nom, u1_nom, u2_nom,
//! u0_safe, u1_safe, u2_safe, h1_0.., h2_0.., filter_active, min_clearance,
//! mpc_cost`
//!
//! Input slot 0 is jerk for the multi-steering robot and acceleration for the
//! single-steering robot, whose slot 2 is always zero. Floats are written in
//! shortest round-trip form, so reading a file back reproduces the log
//! exactly.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::{RunResult, Scenario};
use crate::types::{InputVector, LogEntry, StateVector};
use crate::{Error, Limits, Obstacle, RobotGeometry, RobotKind, TrajectoryLog};

const META_PREFIX: &str = "# meta ";

/// Run context stored alongside the log so plots need no scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub scenario: String,
    pub robot: RobotKind,
    pub ts: f64,
    pub geometry: RobotGeometry,
    pub limits: Limits,
    pub obstacles: Vec<Obstacle>,
    pub d1: f64,
    pub d2: f64,
    /// Reference tractor positions, one per control period.
    pub reference: Vec<[f64; 2]>,
}

impl LogMeta {
    pub fn from_run(sc: &Scenario, result: &RunResult) -> Self {
        Self {
            scenario: sc.name.clone(),
            robot: sc.robot,
            ts: result.log.ts,
            geometry: sc.geometry,
            limits: sc.limits,
            obstacles: sc.obstacles.clone(),
            d1: sc.safety.d1,
            d2: sc.safety.d2,
            reference: result.reference.states.iter().map(|s| [s.x1, s.y1]).collect(),
        }
    }

    /// Context for a log that was produced without a scenario.
    pub fn bare(log: &TrajectoryLog) -> Self {
        Self {
            scenario: String::new(),
            robot: log.robot,
            ts: log.ts,
            geometry: RobotGeometry::default(),
            limits: Limits::default(),
            obstacles: Vec::new(),
            d1: 0.0,
            d2: 0.0,
            reference: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub meta: LogMeta,
    pub log: TrajectoryLog,
}

pub fn csv_header(num_obstacles: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(StateVector::FIELD_NAMES.iter().map(|s| s.to_string()));
    for kind in ["nom", "safe"] {
        cols.extend((0..3).map(|i| format!("u{i}_{kind}")));
    }
    cols.extend((0..num_obstacles).map(|k| format!("h1_{k}")));
    cols.extend((0..num_obstacles).map(|k| format!("h2_{k}")));
    cols.extend(["filter_active", "min_clearance", "mpc_cost"].map(String::from));
    cols
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn row(e: &LogEntry) -> Vec<String> {
    let s = &e.state;
    let mut r: Vec<String> = [e.t, s.x1, s.y1, s.v, s.a, s.theta, s.psi, s.delta1, s.delta2]
        .into_iter()
        .map(fmt)
        .collect();
    for u in [&e.u_nominal, &e.u_safe] {
        r.extend([u.jerk, u.omega1, u.omega2].map(fmt));
    }
    r.extend(e.h_tractor.iter().copied().map(fmt));
    r.extend(e.h_trailer.iter().copied().map(fmt));
    r.push(if e.filter_active { "1" } else { "0" }.into());
    r.push(fmt(e.min_clearance));
    r.push(fmt(e.mpc_cost));
    r
}

pub fn write_csv<W: Write>(out: W, file: &TrajectoryFile) -> Result<(), Error> {
    let mut out = out;
    let meta = serde_json::to_string(&file.meta).map_err(|e| Error::LogFormat(e.to_string()))?;
    writeln!(out, "{META_PREFIX}{meta}")?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::LogFormat(e.to_string());
    w.write_record(csv_header(file.log.num_obstacles)).map_err(err)?;
    for e in &file.log.entries {
        if e.h_tractor.len() != file.log.num_obstacles || e.h_trailer.len() != file.log.num_obstacles {
            return Err(Error::LogFormat(format!("entry at t={} has the wrong barrier count", e.t)));
        }
        w.write_record(row(e)).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(file: &TrajectoryFile) -> Result<String, Error> {
    let mut buf = Vec::new();
    write_csv(&mut buf, file)?;
    String::from_utf8(buf).map_err(|e| Error::LogFormat(e.to_string()))
}

pub fn read_csv<R: Read>(input: R) -> Result<TrajectoryFile, Error> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let meta_json = first
        .strip_prefix(META_PREFIX)
        .ok_or_else(|| Error::LogFormat("line 1: missing '# meta' line".into()))?;
    let meta: LogMeta =
        serde_json::from_str(meta_json).map_err(|e| Error::LogFormat(format!("line 1: {e}")))?;

    let mut rdr = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::LogFormat(format!("line 2: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    let fixed = 1 + 8 + 6 + 3;
    if header.len() < fixed || !(header.len() - fixed).is_multiple_of(2) {
        return Err(Error::LogFormat(format!("line 2: unexpected column count {}", header.len())));
    }
    let num_obstacles = (header.len() - fixed) / 2;
    if header != csv_header(num_obstacles) {
        return Err(Error::LogFormat("line 2: unexpected column names".into()));
    }

    let mut log = TrajectoryLog::new(meta.robot, meta.ts, num_obstacles);
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(|e| Error::LogFormat(format!("line {line}: {e}")))?;
        let num = |j: usize| -> Result<f64, Error> {
            rec[j].parse::<f64>().map_err(|_| {
                Error::LogFormat(format!("line {line}, column {}: bad number '{}'", header[j], &rec[j]))
            })
        };
        let v: Vec<f64> = (0..15).map(num).collect::<Result<_, _>>()?;
        let h: Vec<f64> = (15..15 + 2 * num_obstacles).map(num).collect::<Result<_, _>>()?;
        let flag = 15 + 2 * num_obstacles;
        let filter_active = match &rec[flag] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::LogFormat(format!("line {line}: bad filter_active '{other}'")));
            }
        };
        log.push(LogEntry {
            t: v[0],
            state: StateVector {
                x1: v[1],
                y1: v[2],
                v: v[3],
                a: v[4],
                theta: v[5],
                psi: v[6],
                delta1: v[7],
                delta2: v[8],
            },
            u_nominal: InputVector::new(v[9], v[10], v[11]),
            u_safe: InputVector::new(v[12], v[13], v[14]),
            h_tractor: h[..num_obstacles].to_vec(),
            h_trailer: h[num_obstacles..].to_vec(),
            filter_active,
            min_clearance: num(flag + 1)?,
            mpc_cost: num(flag + 2)?,
        })
        .map_err(|e| Error::LogFormat(format!("line {line}: {e}")))?;
    }
    Ok(TrajectoryFile { meta, log })
}

pub fn load_csv(path: &Path) -> Result<TrajectoryFile, Error> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::LogFormat(format!("cannot open {}: {e}", path.display())))?;
    read_csv(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::LogFormat(m) => Error::LogFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::LogFormat(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(Error::from)
}
