//! HTTP API over a scenario runtime, plus the artifact layout shared with the CLI.

pub mod api;

use std::path::Path;

use ontodss::runtime::{RuntimeError, ScenarioResult};

/// Runs a scenario and writes `events.jsonl`, `kb.txt` and `outbox/` under `out`.
pub fn run_to_dir(scenario: &Path, out: &Path) -> Result<ScenarioResult, RuntimeError> {
    let io = |e: std::io::Error| RuntimeError::Load { path: out.into(), message: e.to_string() };
    std::fs::create_dir_all(out).map_err(io)?;
    let res = ontodss::runtime::run_scenario(scenario, &out.join("outbox"))?;
    let events: String = res.log.iter().map(|e| serde_json::to_string(e).expect("events serialize") + "\n").collect();
    std::fs::write(out.join("events.jsonl"), events).map_err(io)?;
    std::fs::write(out.join("kb.txt"), res.kb.to_text()).map_err(io)?;
    Ok(res)
}
