//! Shared fixtures for the criterion benches.

use neurogrid::scenarios::{RunOptions, ScenarioConfig, ScenarioId};
use neurogrid::SystemConfig;

/// Reference configuration with the horizon cut to `horizon` seconds.
pub fn short_case(id: ScenarioId, horizon: f64) -> (SystemConfig, ScenarioConfig) {
    let sys = SystemConfig::default();
    let mut scenario = ScenarioConfig::preset(id, &sys);
    scenario.horizon = horizon;
    scenario.events.retain(|e| e.time < horizon);
    (sys, scenario)
}

pub fn bench_options() -> RunOptions {
    RunOptions {
        decimation: 20,
        ..RunOptions::default()
    }
}
