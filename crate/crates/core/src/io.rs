//! Delimited-text trajectory and metrics files, plus JSON side reports.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::{MetricsFrame, RunOutput, TrajectoryFrame};
use crate::world::{AgentState, LeaderState};
use crate::Vec2;

pub const TRAJECTORY_HEADER: &str = "t,id,alive,qx,qy,px,py";
pub const METRICS_HEADER: &str =
    "t,n_alive,d,d_l,active_circles,min_pair,min_clearance,leader_distances,adjacent_distances";
const SIG_DIGITS: usize = 9;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Format with 9 significant digits in plain decimal notation, trailing
/// zeros trimmed. Output never depends on locale.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (SIG_DIGITS as i64 - 1 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
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

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

fn join(values: &[f64]) -> String {
    let mut out = String::new();
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(';');
        }
        out.push_str(&format_sig(*v));
    }
    out
}

pub fn write_trajectory<W: Write>(frames: &[TrajectoryFrame], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    let mut line = String::new();
    for f in frames {
        let t = format_sig(f.t);
        for a in &f.agents {
            line.clear();
            let _ = write!(
                line,
                "{t},{},{},{},{},{},{}",
                a.id,
                u8::from(a.alive),
                format_sig(a.q.x),
                format_sig(a.q.y),
                format_sig(a.p.x),
                format_sig(a.p.y)
            );
            writeln!(w, "{line}")?;
        }
        writeln!(
            w,
            "{t},leader,1,{},{},{},{}",
            format_sig(f.leader.q.x),
            format_sig(f.leader.q.y),
            format_sig(f.leader.p.x),
            format_sig(f.leader.p.y)
        )?;
    }
    w.flush()
}

pub fn write_metrics<W: Write>(metrics: &[MetricsFrame], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            format_sig(m.t),
            m.n_alive,
            format_sig(m.d),
            format_sig(m.d_l),
            m.active_circles,
            format_sig(m.min_pair),
            format_sig(m.min_clearance),
            join(&m.leader_distances),
            join(&m.adjacent_distances)
        )?;
    }
    w.flush()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, IoError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(io_err(path))
}

pub fn emit_trajectory(frames: &[TrajectoryFrame], path: &Path) -> Result<(), IoError> {
    write_trajectory(frames, create(path)?).map_err(io_err(path))
}

pub fn emit_metrics(metrics: &[MetricsFrame], path: &Path) -> Result<(), IoError> {
    write_metrics(metrics, create(path)?).map_err(io_err(path))
}

pub fn emit_json<T: serde::Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Write `trajectory.csv`, `metrics.csv`, `violations.json` and `events.json`
/// into `dir`, returning the paths written.
pub fn emit_run(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trajectory = dir.join("trajectory.csv");
    let metrics = dir.join("metrics.csv");
    let violations = dir.join("violations.json");
    let events = dir.join("events.json");
    emit_trajectory(&out.frames, &trajectory)?;
    emit_metrics(&out.metrics, &metrics)?;
    emit_json(&out.violations, &violations)?;
    emit_json(&out.events, &events)?;
    Ok(vec![trajectory, metrics, violations, events])
}

struct Lines {
    path: String,
    inner: std::io::Lines<BufReader<fs::File>>,
    line: usize,
}

impl Lines {
    fn open(path: &Path, header: &str) -> Result<Self, IoError> {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let mut lines = Self {
            path: path.display().to_string(),
            inner: BufReader::new(file).lines(),
            line: 0,
        };
        match lines.next_line()? {
            Some(h) if h == header => Ok(lines),
            Some(h) => Err(lines.error(format!("unexpected header `{h}`"))),
            None => Err(lines.error("empty file".into())),
        }
    }

    fn next_line(&mut self) -> Result<Option<String>, IoError> {
        self.line += 1;
        match self.inner.next() {
            None => Ok(None),
            Some(Ok(l)) => Ok(Some(l)),
            Some(Err(source)) => Err(IoError::Io {
                path: self.path.clone(),
                source,
            }),
        }
    }

    fn error(&self, message: String) -> IoError {
        IoError::Parse {
            path: self.path.clone(),
            line: self.line,
            message,
        }
    }

    fn number(&self, s: &str) -> Result<f64, IoError> {
        parse_f64(s).ok_or_else(|| self.error(format!("bad number `{s}`")))
    }

    fn list(&self, s: &str) -> Result<Vec<f64>, IoError> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(';').map(|v| self.number(v)).collect()
    }
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryFrame>, IoError> {
    let mut lines = Lines::open(path, TRAJECTORY_HEADER)?;
    let mut frames = Vec::new();
    let mut agents = Vec::new();
    while let Some(l) = lines.next_line()? {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 7 {
            return Err(lines.error(format!("expected 7 columns, found {}", cols.len())));
        }
        let t = lines.number(cols[0])?;
        let alive = match cols[2] {
            "1" => true,
            "0" => false,
            other => return Err(lines.error(format!("bad alive flag `{other}`"))),
        };
        let q = Vec2::new(lines.number(cols[3])?, lines.number(cols[4])?);
        let p = Vec2::new(lines.number(cols[5])?, lines.number(cols[6])?);
        if cols[1] == "leader" {
            frames.push(TrajectoryFrame {
                t,
                agents: std::mem::take(&mut agents),
                leader: LeaderState { q, p },
            });
        } else {
            let id = cols[1]
                .parse()
                .map_err(|_| lines.error(format!("bad agent id `{}`", cols[1])))?;
            agents.push(AgentState { id, q, p, alive });
        }
    }
    if !agents.is_empty() {
        return Err(lines.error("trailing agent rows without a leader row".into()));
    }
    Ok(frames)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsFrame>, IoError> {
    let mut lines = Lines::open(path, METRICS_HEADER)?;
    let mut out = Vec::new();
    while let Some(l) = lines.next_line()? {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 9 {
            return Err(lines.error(format!("expected 9 columns, found {}", cols.len())));
        }
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| lines.error(format!("bad count `{s}`")))
        };
        out.push(MetricsFrame {
            t: lines.number(cols[0])?,
            n_alive: count(cols[1])?,
            d: lines.number(cols[2])?,
            d_l: lines.number(cols[3])?,
            active_circles: count(cols[4])?,
            min_pair: lines.number(cols[5])?,
            min_clearance: lines.number(cols[6])?,
            leader_distances: lines.list(cols[7])?,
            adjacent_distances: lines.list(cols[8])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(-0.0), "0");
        assert_eq!(format_sig(3.0902), "3.0902");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig(-123456.789123), "-123456.789");
        assert_eq!(format_sig(1e-12), "0.000000000001");
        assert_eq!(format_sig(f64::INFINITY), "inf");
        assert_eq!(format_sig(12345678912.0), "12345678912");
    }

    fn frame(t: f64, n: usize) -> TrajectoryFrame {
        TrajectoryFrame {
            t,
            agents: (0..n)
                .map(|id| AgentState {
                    id,
                    q: Vec2::new(id as f64 + t, -1.5),
                    p: Vec2::new(0.25, t),
                    alive: id != 1,
                })
                .collect(),
            leader: LeaderState {
                q: Vec2::new(t, 0.0),
                p: Vec2::new(1.0, 0.0),
            },
        }
    }

    #[test]
    fn row_count_and_dead_flag() {
        let frames: Vec<_> = (1..=3).map(|k| frame(0.1 * k as f64, 2)).collect();
        let mut buf = Vec::new();
        write_trajectory(&frames, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * (2 + 1));
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert!(lines[2].starts_with("0.1,1,0,"));
        assert!(lines[3].starts_with("0.1,leader,1,"));
    }

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = vec![MetricsFrame {
            t: 0.1,
            n_alive: 3,
            d: 8.660254037844386,
            d_l: 5.0,
            active_circles: 1,
            leader_distances: vec![5.0, 4.9, 5.1],
            adjacent_distances: vec![8.5, 8.6, 8.7],
            min_pair: 8.5,
            min_clearance: f64::INFINITY,
        }];
        emit_metrics(&m, &path).unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].d - m[0].d).abs() < 1e-8);
        assert_eq!(back[0].leader_distances, m[0].leader_distances);
        assert_eq!(back[0].min_clearance, f64::INFINITY);
    }

    #[test]
    fn bad_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "nope\n").unwrap();
        assert!(matches!(
            read_trajectory(&path),
            Err(IoError::Parse { line: 1, .. })
        ));
        fs::write(&path, format!("{TRAJECTORY_HEADER}\n0.1,0,1,x,0,0,0\n")).unwrap();
        assert!(matches!(
            read_trajectory(&path),
            Err(IoError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_trajectory(&dir.path().join("missing.csv")),
            Err(IoError::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn trajectory_round_trip(
            coords in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4, -50f64..50.0, -50f64..50.0, any::<bool>()), 1..6),
            steps in 1usize..4,
        ) {
            let frames: Vec<TrajectoryFrame> = (1..=steps)
                .map(|k| TrajectoryFrame {
                    t: 0.1 * k as f64,
                    agents: coords
                        .iter()
                        .enumerate()
                        .map(|(id, &(qx, qy, px, py, alive))| AgentState {
                            id,
                            q: Vec2::new(qx, qy),
                            p: Vec2::new(px, py),
                            alive,
                        })
                        .collect(),
                    leader: LeaderState { q: Vec2::new(0.5, -0.5), p: Vec2::zeros() },
                })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.csv");
            emit_trajectory(&frames, &path).unwrap();
            let back = read_trajectory(&path).unwrap();
            prop_assert_eq!(back.len(), frames.len());
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * a.abs().max(1.0);
            for (f, g) in frames.iter().zip(&back) {
                prop_assert!(close(f.t, g.t));
                for (a, b) in f.agents.iter().zip(&g.agents) {
                    prop_assert_eq!(a.id, b.id);
                    prop_assert_eq!(a.alive, b.alive);
                    prop_assert!(close(a.q.x, b.q.x) && close(a.q.y, b.q.y));
                    prop_assert!(close(a.p.x, b.p.x) && close(a.p.y, b.p.y));
                }
            }
        }
    }
}
