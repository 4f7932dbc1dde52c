//! CSV intake of externally simulated trajectories.
//!
//! Schema (header mandatory, any column order): `run_id,vehicle_id,role,t,x`
//! with `role` one of `vehicle` or `camera`. Rows of one vehicle must appear
//! in strictly increasing `t`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagram::{Fov, Sample, SpaceTimeDiagram, Trajectory};
use crate::discretize::write_atomic;
use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub const COLUMNS: [&str; 5] = ["run_id", "vehicle_id", "role", "t", "x"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Camera,
    Vehicle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub run_id: String,
    pub vehicle_id: String,
    pub role: Role,
    pub t: f64,
    pub x: f64,
}

/// One run's diagram together with its identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub run_id: String,
    pub diagram: SpaceTimeDiagram,
}

#[derive(Default)]
struct RunRows {
    first_line: u64,
    camera: Option<(String, Vec<Sample>)>,
    vehicles: BTreeMap<String, Vec<Sample>>,
}

/// Reads every run in `path`. Grid and field of view are not part of the
/// file and come from the caller's configuration. Runs are returned sorted
/// by `run_id`; positions are clipped to `[0, L]`.
pub fn load_runs(path: &Path, grid: &GridSpec, fov: Fov) -> Result<Vec<Run>> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let headers = reader.headers()?.clone();
    let mut index = [usize::MAX; 5];
    for (pos, name) in headers.iter().enumerate() {
        match COLUMNS.iter().position(|c| *c == name.trim()) {
            Some(c) if index[c] == usize::MAX => index[c] = pos,
            Some(_) => return Err(parse_err(1, format!("duplicate column `{name}`"))),
            None => return Err(parse_err(1, format!("unknown column `{name}`"))),
        }
    }
    if let Some(c) = index.iter().position(|&i| i == usize::MAX) {
        return Err(parse_err(1, format!("missing column `{}`", COLUMNS[c])));
    }

    let mut runs: BTreeMap<String, RunRows> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize| record.get(index[c]).unwrap_or("").trim();
        let number = |c: usize| {
            field(c)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("column `{}`: `{}` is not a number", COLUMNS[c], field(c))))
        };
        let (run_id, vehicle_id) = (field(0).to_string(), field(1).to_string());
        let role = match field(2) {
            "vehicle" => Role::Vehicle,
            "camera" => Role::Camera,
            other => return Err(parse_err(line, format!("role must be `vehicle` or `camera`, got `{other}`"))),
        };
        let (t, x) = (number(3)?, number(4)?);
        if t < 0.0 {
            return Err(parse_err(line, format!("negative timestamp {t}")));
        }
        let sample = Sample::new(t, x.clamp(0.0, grid.link_length()));
        let run = runs.entry(run_id.clone()).or_insert_with(|| RunRows {
            first_line: line,
            ..RunRows::default()
        });
        let samples = match role {
            Role::Camera => match &mut run.camera {
                Some((id, s)) if *id == vehicle_id => s,
                Some((id, _)) => {
                    return Err(parse_err(
                        line,
                        format!("run {run_id}: second camera `{vehicle_id}` (already have `{id}`)"),
                    ))
                }
                None => &mut run.camera.insert((vehicle_id.clone(), Vec::new())).1,
            },
            Role::Vehicle => run.vehicles.entry(vehicle_id.clone()).or_default(),
        };
        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(parse_err(
                    line,
                    format!("run {run_id}, vehicle {vehicle_id}: timestamp {t} does not increase (previous {})", prev.t),
                ));
            }
        }
        samples.push(sample);
    }

    runs.into_iter()
        .map(|(run_id, rows)| {
            let Some((cam_id, cam)) = rows.camera else {
                return Err(parse_err(rows.first_line, format!("run {run_id} has no camera rows")));
            };
            let vehicles = rows
                .vehicles
                .into_iter()
                .map(|(id, s)| Trajectory::new(id, s))
                .collect::<Result<Vec<_>>>()?;
            let diagram = SpaceTimeDiagram::new(*grid, vehicles, Trajectory::new(cam_id, cam)?, fov)
                .map_err(|e| parse_err(rows.first_line, format!("run {run_id}: {e}")))?;
            Ok(Run { run_id, diagram })
        })
        .collect()
}

/// Fixed nine decimals with trailing zeros trimmed.
pub(crate) fn fmt_float(v: f64) -> String {
    let mut s = format!("{v:.9}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Writes runs in canonical column order, rows sorted by
/// `(run_id, role, vehicle_id, t)`.
pub fn save_runs(runs: &[Run], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    let mut ordered: Vec<&Run> = runs.iter().collect();
    ordered.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    for run in ordered {
        let d = &run.diagram;
        let mut rows: Vec<(Role, &str, &[Sample])> = vec![(Role::Camera, d.camera.vehicle_id.as_str(), d.camera.samples())];
        rows.extend(d.vehicles.iter().map(|v| (Role::Vehicle, v.vehicle_id.as_str(), v.samples())));
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (role, id, samples) in rows {
            let role = match role {
                Role::Camera => "camera",
                Role::Vehicle => "vehicle",
            };
            for s in samples {
                writeln!(out, "{},{},{},{},{}", csv_field(&run.run_id), csv_field(id), role, fmt_float(s.t), fmt_float(s.x))
                    .expect("writing to a String");
            }
        }
    }
    write_atomic(path, out.as_bytes())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, ScenarioConfig, Signal};
    use std::fs;

    fn grid() -> GridSpec {
        GridSpec::new(100.0, 16.0, 20.0, 2.0).unwrap()
    }

    fn fov() -> Fov {
        Fov::new(10.0, 60.0).unwrap()
    }

    fn assert_close(a: &SpaceTimeDiagram, b: &SpaceTimeDiagram) {
        assert_eq!(a.vehicles.len(), b.vehicles.len());
        let pairs = a.vehicles.iter().zip(&b.vehicles).chain([(&a.camera, &b.camera)]);
        for (u, v) in pairs {
            assert_eq!(u.vehicle_id, v.vehicle_id);
            assert_eq!(u.samples().len(), v.samples().len());
            for (p, q) in u.samples().iter().zip(v.samples()) {
                assert!((p.t - q.t).abs() <= 1e-9 && (p.x - q.x).abs() <= 1e-9, "{p:?} {q:?}");
            }
        }
    }

    #[test]
    fn round_trip_generated_bundles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let mut runs = Vec::new();
        for n in 0..3u64 {
            let mut c = ScenarioConfig::table_one(0.4, 8.0 + n as f64, n);
            c.signal = Some(Signal {
                position: 120.0,
                red: 20.0,
                green: 20.0,
                offset: 5.0 * n as f64,
            });
            runs.push(Run {
                run_id: format!("run_{n:03}"),
                diagram: generate(&c).unwrap().diagram,
            });
        }
        save_runs(&runs, &path).unwrap();
        let back = load_runs(&path, &grid(), fov()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in runs.iter().zip(&back) {
            assert_eq!(a.run_id, b.run_id);
            assert_close(&a.diagram, &b.diagram);
        }
        // saving what was loaded is byte-stable
        let again = dir.path().join("again.csv");
        save_runs(&back, &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn header_only_and_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        save_runs(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "run_id,vehicle_id,role,t,x\n");
        assert!(load_runs(&path, &grid(), fov()).unwrap().is_empty());
    }

    #[test]
    fn camera_only_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cam.csv");
        fs::write(&path, "x,t,role,vehicle_id,run_id\n100,0,camera,cam,r1\n0,16,camera,cam,r1\n").unwrap();
        let runs = load_runs(&path, &grid(), fov()).unwrap();
        assert_eq!(runs.len(), 1);
        assert!(runs[0].diagram.vehicles.is_empty());
        assert_eq!(runs[0].diagram.camera_position(8.0), 50.0);
    }

    fn load_err(text: &str) -> Error {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, text).unwrap();
        load_runs(&path, &grid(), fov()).unwrap_err()
    }

    #[test]
    fn missing_camera_names_the_run() {
        let e = load_err("run_id,vehicle_id,role,t,x\nr7,v1,vehicle,0,0\nr7,v1,vehicle,1,10\n");
        assert!(e.to_string().contains("r7"), "{e}");
    }

    #[test]
    fn non_monotone_time_reports_line() {
        let e = load_err(
            "run_id,vehicle_id,role,t,x\nr1,cam,camera,0,100\nr1,cam,camera,16,0\nr1,v1,vehicle,2,10\nr1,v1,vehicle,1,20\n",
        );
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_column_is_rejected() {
        let e = load_err("run_id,vehicle_id,role,t,x,lane\n");
        assert!(e.to_string().contains("lane"), "{e}");
        assert!(load_err("run_id,vehicle_id,role,t\n").to_string().contains("`x`"));
    }

    #[test]
    fn positions_are_clipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.csv");
        fs::write(
            &path,
            "run_id,vehicle_id,role,t,x\nr1,cam,camera,0,100\nr1,cam,camera,16,0\nr1,v,vehicle,0,-3\nr1,v,vehicle,15,130\n",
        )
        .unwrap();
        let runs = load_runs(&path, &grid(), fov()).unwrap();
        let s = runs[0].diagram.vehicles[0].samples();
        assert_eq!((s[0].x, s[1].x), (0.0, 100.0));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "").unwrap();
        let path = blocker.join("out.csv");
        assert!(matches!(save_runs(&[], &path), Err(Error::Io { .. })));
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_float(100.0), "100");
        assert_eq!(fmt_float(8.5), "8.5");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_float(-0.0), "0");
    }
}
