use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use flockring::io::{format_sig, read_metrics, read_trajectory};
use flockring::sim::{MetricsFrame, TrajectoryFrame};

use crate::manifest::RunManifest;
use crate::{ExportArgs, Failure};

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::output(format!("cannot write {}: {e}", path.display())))
}

fn finish(path: &Path, w: impl FnOnce() -> std::io::Result<()>) -> Result<(), Failure> {
    w().map_err(|e| Failure::output(format!("cannot write {}: {e}", path.display())))
}

/// One row per alive agent per frame.
fn write_leader_series(
    path: &Path,
    metrics: &[MetricsFrame],
    frames: &[TrajectoryFrame],
) -> Result<usize, Failure> {
    let mut w = create(path)?;
    let mut rows = 0;
    finish(path, || {
        writeln!(w, "t,agent,distance")?;
        for (m, f) in metrics.iter().zip(frames) {
            let alive = f.agents.iter().filter(|a| a.alive).map(|a| a.id);
            for (id, d) in alive.zip(&m.leader_distances) {
                writeln!(w, "{},{},{}", format_sig(m.t), id, format_sig(*d))?;
                rows += 1;
            }
        }
        w.flush()
    })?;
    Ok(rows)
}

fn write_adjacent_series(path: &Path, metrics: &[MetricsFrame]) -> Result<usize, Failure> {
    let mut w = create(path)?;
    let mut rows = 0;
    finish(path, || {
        writeln!(w, "t,rank,distance")?;
        for m in metrics {
            for (rank, d) in m.adjacent_distances.iter().enumerate() {
                writeln!(w, "{},{},{}", format_sig(m.t), rank, format_sig(*d))?;
                rows += 1;
            }
        }
        w.flush()
    })?;
    Ok(rows)
}

/// Agent polylines grouped by agent, then the leader's path as `leader`.
fn write_paths(path: &Path, frames: &[TrajectoryFrame]) -> Result<usize, Failure> {
    let n = frames.first().map(|f| f.agents.len()).unwrap_or(0);
    let mut w = create(path)?;
    finish(path, || {
        writeln!(w, "agent,t,x,y,alive")?;
        for id in 0..n {
            for f in frames {
                let a = &f.agents[id];
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    a.id,
                    format_sig(f.t),
                    format_sig(a.q.x),
                    format_sig(a.q.y),
                    u8::from(a.alive)
                )?;
            }
        }
        for f in frames {
            writeln!(
                w,
                "leader,{},{},{},1",
                format_sig(f.t),
                format_sig(f.leader.q.x),
                format_sig(f.leader.q.y)
            )?;
        }
        w.flush()
    })?;
    Ok(n + 1)
}

pub fn export(args: &ExportArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let metrics_path = args.run.join("metrics.csv");
    let trajectory_path = args.run.join("trajectory.csv");
    let metrics = read_metrics(&metrics_path).map_err(|e| Failure::input(e.to_string()))?;
    if metrics.is_empty() {
        return Err(Failure::input(format!(
            "{} has no rows",
            metrics_path.display()
        )));
    }
    let frames = read_trajectory(&trajectory_path).map_err(|e| Failure::input(e.to_string()))?;
    if frames.len() != metrics.len() {
        return Err(Failure::input(format!(
            "{} has {} frames but {} has {} rows",
            trajectory_path.display(),
            frames.len(),
            metrics_path.display(),
            metrics.len()
        )));
    }

    let out = args.out.clone().unwrap_or_else(|| args.run.join("plots"));
    std::fs::create_dir_all(&out)
        .map_err(|e| Failure::output(format!("cannot create {}: {e}", out.display())))?;
    let files: Vec<PathBuf> = ["leader_distance.csv", "adjacent_distance.csv", "paths.csv"]
        .iter()
        .map(|f| out.join(f))
        .collect();
    let leader_rows = write_leader_series(&files[0], &metrics, &frames)?;
    let adjacent_rows = write_adjacent_series(&files[1], &metrics)?;
    let polylines = write_paths(&files[2], &frames)?;
    RunManifest::write(
        "export-plots",
        &args.run.display().to_string(),
        0,
        &out,
        &files,
        started,
    )?;

    println!("{} frames", metrics.len());
    println!("leader distance rows   {leader_rows}");
    println!("adjacent distance rows {adjacent_rows}");
    println!("polylines              {polylines}");
    println!("wrote {}", out.display());
    Ok(())
}
