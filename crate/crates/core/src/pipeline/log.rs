use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

/// Line-delimited JSON run log.
pub struct RunLog {
    path: PathBuf,
    run_id: String,
}

#[derive(Serialize)]
struct Record<'a> {
    ts_ms: u128,
    run_id: &'a str,
    stage: &'a str,
    event: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    duration_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    status: Option<&'a str>,
}

impl RunLog {
    pub fn new(path: PathBuf, run_id: &str) -> Self {
        RunLog { path, run_id: run_id.to_string() }
    }

    pub fn event(&self, stage: &str, event: &str, duration_ms: Option<u64>, backend: Option<&str>, status: Option<&str>) {
        let ts_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let record = Record { ts_ms, run_id: &self.run_id, stage, event, duration_ms, backend, status };
        let Ok(line) = serde_json::to_string(&record) else { return };
        // logging is best effort
        if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(&self.path) {
            let _ = writeln!(f, "{line}");
        }
    }
}
