//! CSV metrics, one row per episode, segment or round.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "run_id,timestamp_ms,iteration,episode_return,episode_length,td_abs_mean,update_count";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub episode_return: f64,
    pub episode_length: usize,
    pub td_abs_mean: f64,
    pub update_count: Option<u64>,
}

/// Writes rows for one run. Iterations must strictly increase.
pub struct MetricsWriter<W: Write> {
    out: W,
    run_id: String,
    last: Option<u64>,
    rows: u64,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W, run_id: &str) -> Result<Self> {
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(MetricsWriter {
            out,
            run_id: run_id.to_string(),
            last: None,
            rows: 0,
        })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        if self.last.is_some_and(|l| rec.iteration <= l) {
            return Err(Error::input(
                "harness",
                format!("metrics iteration {} does not increase", rec.iteration),
            ));
        }
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let update_count = rec.update_count.map(|u| u.to_string()).unwrap_or_default();
        writeln!(
            self.out,
            "{},{stamp},{},{},{},{},{update_count}",
            self.run_id, rec.iteration, rec.episode_return, rec.episode_length, rec.td_abs_mean
        )?;
        self.last = Some(rec.iteration);
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
