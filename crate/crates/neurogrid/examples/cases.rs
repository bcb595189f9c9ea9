//! Runs the preset cases and prints their metrics.
//!
//! `cargo run --release --example cases [case_i|case_ii|case_iii|case_iv|correlation_sweep]`

use neurogrid::scenarios::{run_scenario, RunOptions, ScenarioConfig, ScenarioId};
use neurogrid::SystemConfig;

fn main() -> Result<(), neurogrid::Error> {
    let sys = SystemConfig::default();
    let ids: Vec<ScenarioId> = match std::env::args().nth(1) {
        Some(s) => vec![s.parse()?],
        None => vec![
            ScenarioId::CaseI,
            ScenarioId::CaseII,
            ScenarioId::CaseIII,
            ScenarioId::CaseIV,
        ],
    };
    for id in ids {
        let scenario = ScenarioConfig::preset(id, &sys);
        let out = run_scenario(&scenario, &sys, &RunOptions::default())?;
        println!("== {id} ({:.2} s)", out.metrics.runtime_s);
        let s = &out.series;
        for t in [0.9, 1.9, 3.9, 4.9, 5.9] {
            let Some(j) = (!s.t.is_empty()).then(|| s.index_at(t).min(s.t.len() - 1)) else {
                break;
            };
            let col = |x: &[Vec<f64>]| x.iter().map(|v| format!("{:8.3}", v[j])).collect::<Vec<_>>().join(" ");
            println!(
                "t={:5.2} V=[{}] I=[{}] dR=[{}]",
                s.t[j],
                col(&s.v_bus),
                col(&s.i_out),
                col(&s.delta_r)
            );
        }
        for (name, value) in out.metrics.rows() {
            println!("  {name:28} {value:.6}");
        }
        if let Some(d) = &out.divergence {
            println!("  divergence at {:.4}: {}", d.time, d.detail);
        }
    }
    Ok(())
}
