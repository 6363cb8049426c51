//! Evaluation reports: the per-episode records plus the aggregates derived
//! from them, written as pretty JSON.

use std::path::{Path, PathBuf};

use arbiter_core::evaluation::{summarize, Assistance, EpisodeRecord, EvalSummary};
use arbiter_core::users::UserMode;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub index: usize,
    pub true_goal: usize,
    pub success: bool,
    pub reached: Option<usize>,
    pub steps: usize,
    pub travel_cm: f64,
    /// Steps spent in contact with the obstacle.
    pub collisions: usize,
    pub l2_human: Vec<f64>,
    pub l2_robot: Vec<f64>,
}

impl From<&EpisodeRecord> for EpisodeReport {
    fn from(r: &EpisodeRecord) -> Self {
        EpisodeReport {
            index: r.spec.index,
            true_goal: r.spec.true_goal,
            success: r.success,
            reached: r.reached,
            steps: r.steps,
            travel_cm: r.travel_cm,
            collisions: r.collisions,
            l2_human: r.trace.iter().map(|s| s.l2_human()).collect(),
            l2_robot: r.trace.iter().map(|s| s.l2_robot()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunConfig,
    pub checkpoint: Option<PathBuf>,
    pub assistance: Assistance,
    pub user: UserMode,
    pub seed: u64,
    /// Base of the evaluation episode stream.
    pub eval_seed: u64,
    pub episodes: Vec<EpisodeReport>,
    pub summary: EvalSummary,
}

impl EvalReport {
    pub fn new(
        config: &RunConfig,
        checkpoint: Option<&Path>,
        assistance: Assistance,
        seed: u64,
        eval_seed: u64,
        records: &[EpisodeRecord],
    ) -> Self {
        EvalReport {
            config: config.clone(),
            checkpoint: checkpoint.map(Path::to_path_buf),
            assistance,
            user: config.user.mode,
            seed,
            eval_seed,
            episodes: records.iter().map(EpisodeReport::from).collect(),
            summary: summarize(records),
        }
    }

    /// Aggregates recomputed from the per-episode entries.
    pub fn recompute_summary(&self) -> EvalSummary {
        let n = self.episodes.len();
        let travel: Vec<f64> = self.episodes.iter().map(|e| e.travel_cm).collect();
        let mean = if n == 0 { 0.0 } else { travel.iter().sum::<f64>() / n as f64 };
        let var = if n < 2 {
            0.0
        } else {
            travel.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        };
        EvalSummary {
            episodes: n,
            successes: self.episodes.iter().filter(|e| e.success).count(),
            collision_episodes: self.episodes.iter().filter(|e| e.collisions > 0).count(),
            travel_mean_cm: mean,
            travel_std_cm: var.sqrt(),
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}
