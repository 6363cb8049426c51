//! Training metrics as JSON lines, one object per episode.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use arbiter_core::training::EpisodeMetrics;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MOVING_WINDOW: usize = 10;
pub const TRAILING_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    #[serde(flatten)]
    pub episode: EpisodeMetrics,
    pub avg_success: f64,
    pub avg_return: f64,
    pub avg_l2_human: f64,
    pub avg_l2_robot: f64,
    /// Success rate over the last 20 episodes.
    pub trailing_success: f64,
}

/// Mean of the last `window` values of `series`.
pub fn moving_average(series: &[f64], window: usize) -> f64 {
    let tail = &series[series.len().saturating_sub(window.max(1))..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[derive(Debug, Default)]
struct Windows {
    success: VecDeque<f64>,
    ret: VecDeque<f64>,
    l2_human: VecDeque<f64>,
    l2_robot: VecDeque<f64>,
    trailing: VecDeque<f64>,
}

fn push(q: &mut VecDeque<f64>, v: f64, cap: usize) -> f64 {
    q.push_back(v);
    if q.len() > cap {
        q.pop_front();
    }
    q.iter().sum::<f64>() / q.len() as f64
}

/// Streams [`MetricsLine`]s to a file, flushing after every episode so the
/// file can be tailed during long runs.
pub struct MetricsWriter {
    out: BufWriter<File>,
    windows: Windows,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(MetricsWriter {
            out: BufWriter::new(file),
            windows: Windows::default(),
            path: path.to_path_buf(),
        })
    }

    pub fn line(&mut self, m: &EpisodeMetrics) -> MetricsLine {
        let w = &mut self.windows;
        let success = m.success as u8 as f64;
        MetricsLine {
            episode: m.clone(),
            avg_success: push(&mut w.success, success, MOVING_WINDOW),
            avg_return: push(&mut w.ret, m.return_total, MOVING_WINDOW),
            avg_l2_human: push(&mut w.l2_human, m.mean_l2_human, MOVING_WINDOW),
            avg_l2_robot: push(&mut w.l2_robot, m.mean_l2_robot, MOVING_WINDOW),
            trailing_success: push(&mut w.trailing, success, TRAILING_WINDOW),
        }
    }

    pub fn write(&mut self, m: &EpisodeMetrics) -> CliResult<MetricsLine> {
        let line = self.line(m);
        let json = serde_json::to_string(&line).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(self.out, "{json}")
            .and_then(|_| self.out.flush())
            .map_err(|e| CliError::io(&self.path, e))?;
        Ok(line)
    }
}

pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricsLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display()))))
        .collect()
}
