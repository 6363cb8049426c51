//! Per-step rollout traces as CSV, one row per executed step.

use std::io::Write;
use std::path::Path;

use arbiter_core::circular::ModalityClass;
use arbiter_core::evaluation::EpisodeRecord;

use crate::error::{CliError, CliResult};

pub const FIXED_COLUMNS: [&str; 10] = [
    "episode",
    "step",
    "time",
    "l2_human",
    "l2_robot",
    "modality",
    "peak",
    "predicted_goal",
    "obstacle_distance",
    "collision",
];

pub fn header(goal_count: usize) -> Vec<String> {
    let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend((0..goal_count).map(|g| format!("score_{g}")));
    h
}

/// Step index scaled to [0, 1] over the episode.
pub fn normalized_time(step: usize, steps: usize) -> f64 {
    if steps <= 1 {
        0.0
    } else {
        step as f64 / (steps - 1) as f64
    }
}

pub fn write_trace<W: Write>(out: W, goal_count: usize, records: &[EpisodeRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(goal_count))?;
    for r in records {
        for s in &r.trace {
            let mut row = vec![
                r.spec.index.to_string(),
                s.step.to_string(),
                normalized_time(s.step, r.trace.len()).to_string(),
                s.l2_human().to_string(),
                s.l2_robot().to_string(),
                match s.modality {
                    ModalityClass::Unimodal => "unimodal".to_string(),
                    ModalityClass::Multimodal => "multimodal".to_string(),
                },
                s.peak.to_string(),
                s.predicted_goal.to_string(),
                s.obstacle_distance.to_string(),
                (s.collision as u8).to_string(),
            ];
            row.extend(s.scores.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(path: &Path, goal_count: usize, records: &[EpisodeRecord]) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_trace(std::io::BufWriter::new(file), goal_count, records)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use arbiter_core::evaluation::{evaluate, Arbiter};

    #[test]
    fn one_row_per_step_with_score_columns() {
        let settings = crate::config::RunConfig::default().eval_settings();
        let records = evaluate(Arbiter::Direct, &settings, 11, 2).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, 3, &records).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let cols: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(cols, header(3));
        assert_eq!(cols.last().unwrap(), "score_2");
        let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), records.iter().map(|r| r.steps).sum::<usize>());
        let first_ep: Vec<_> = rows.iter().filter(|r| &r[0] == "0").collect();
        assert_eq!(first_ep.len(), records[0].steps);
        assert_eq!(&first_ep[0][2], "0");
        assert_eq!(&first_ep.last().unwrap()[2], "1");
    }

    #[test]
    fn normalized_time_spans_unit_interval() {
        assert_eq!(normalized_time(0, 1), 0.0);
        assert_eq!(normalized_time(0, 5), 0.0);
        assert_eq!(normalized_time(4, 5), 1.0);
        assert_eq!(normalized_time(2, 5), 0.5);
    }
}
