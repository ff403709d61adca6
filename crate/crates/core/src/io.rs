//! Result emission: CSV tables stamped with the config hash and crate
//! version, and JSON reports.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` and keeps the output byte-for-byte stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dynamics::TrajectoryRecord;
use crate::error::Result;
use crate::pde::PdeState;
use crate::VERSION;

/// Hex SHA-256 of the canonical config text.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(t) if t.contains([',', '"', '\n']) => format!("\"{}\"", t.replace('"', "\"\"")),
            Cell::Text(t) => t.clone(),
        }
    }
}

/// A CSV table. Every row is prefixed with the config hash and the crate
/// version so that any file, or any excerpt of one, identifies its run.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub config_hash: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, config_hash: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            config_hash: config_hash.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("config_hash,version");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&self.config_hash);
            out.push(',');
            out.push_str(VERSION);
            for cell in row {
                out.push(',');
                out.push_str(&cell.render());
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<dir>/<name>.csv` and returns the path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        fs::write(&path, self.to_csv())?;
        Ok(path)
    }
}

/// JSON envelope shared by all reports.
#[derive(Clone, Debug, Serialize)]
pub struct Report<'a, B: Serialize> {
    pub kind: &'a str,
    pub config_hash: &'a str,
    pub version: &'a str,
    pub passed: bool,
    pub body: &'a B,
}

pub fn write_json<B: Serialize>(dir: &Path, name: &str, kind: &str, config_hash: &str, passed: bool, body: &B) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let report = Report { kind, config_hash, version: VERSION, passed, body };
    let path = dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// One row per cell: `kind` is `field` or `road`, then the cell-centre
/// coordinates and the value.
pub fn snapshot_table(state: &PdeState<f64>, name: &str, config_hash: &str) -> Table {
    let dims = state.params.p - 1;
    let mut cols: Vec<String> = vec!["time".into(), "kind".into()];
    cols.extend((1..=dims).map(|q| format!("x{q}")));
    cols.push("y".into());
    cols.push("value".into());
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(name, config_hash, &col_refs);
    let nx = state.u.len();
    for j in 0..state.params.m {
        for xlin in 0..nx {
            let mut row: Vec<Cell> = vec![state.time.into(), "field".into()];
            row.extend(state.x_center(xlin).into_iter().map(Cell::from));
            row.push(state.y_center(j).into());
            row.push(state.v[j * nx + xlin].into());
            t.push(row);
        }
    }
    for xlin in 0..nx {
        let mut row: Vec<Cell> = vec![state.time.into(), "road".into()];
        row.extend(state.x_center(xlin).into_iter().map(Cell::from));
        row.push(0.0.into());
        row.push(state.u[xlin].into());
        t.push(row);
    }
    t
}

/// Event log of a trajectory; the initial configuration is emitted as
/// `init_field`/`init_road` rows whose `location` is the occupied site.
pub fn trajectory_table(traj: &TrajectoryRecord, trajectory: u64, name: &str, config_hash: &str) -> Table {
    let mut t = Table::new(name, config_hash, &["trajectory", "time", "event", "code", "location"]);
    for (s, &e) in traj.initial.eta.iter().enumerate() {
        if e == 1 {
            t.push(vec![trajectory.into(), 0.0.into(), "init_field".into(), Cell::Int(-1), s.into()]);
        }
    }
    for (i, &x) in traj.initial.xi.iter().enumerate() {
        if x == 1 {
            t.push(vec![trajectory.into(), 0.0.into(), "init_road".into(), Cell::Int(-1), i.into()]);
        }
    }
    for (time, ev) in &traj.events {
        let label = match ev {
            crate::Event::FieldSwap { .. } => "field_swap",
            crate::Event::RoadSwap { .. } => "road_swap",
            crate::Event::RobinFlip { .. } => "robin_flip",
            crate::Event::ReactionFlip { .. } => "reaction_flip",
            crate::Event::ReservoirFlip { .. } => "reservoir_flip",
        };
        t.push(vec![
            trajectory.into(),
            (*time).into(),
            label.into(),
            Cell::Int(ev.code() as i64),
            Cell::Int(ev.location() as i64),
        ]);
    }
    t.push(vec![trajectory.into(), traj.final_time.into(), "end".into(), Cell::Int(-1), Cell::Int(-1)]);
    t
}

/// Reads a two- or three-column numeric CSV (`x, value` or `x, y, value`),
/// skipping blank lines, `#` comments and a non-numeric header.
pub fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(vals) => rows.push(vals),
            Err(_) if rows.is_empty() => continue,
            Err(e) => {
                return Err(crate::Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1)));
            }
        }
    }
    Ok(rows)
}
