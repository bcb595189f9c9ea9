//! Input/output spike-correlation analysis: κ⁻¹·V̇[t_h] = μ·c_i·I_in[t_h] − c_o·I_o[t_h].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::coding::Channel;
use crate::config::SystemConfig;
use crate::error::{Error, Result};

use super::metrics::linear_fit;
use super::{Event, RunOptions, ScenarioConfig, ScenarioOutcome, Simulation, TimedEvent};

/// Output-spike instant with the quantities the correlation relation needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiringSample {
    pub t: f64,
    pub v_dot: f64,
    pub i_in: f64,
    pub i_out: f64,
}

/// One analysis window. `mu` is the mean over the window's firing instants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSample {
    pub window_start: f64,
    pub window_end: f64,
    pub c_in: f64,
    pub c_out: f64,
    pub mu: Option<f64>,
    /// No output spikes in the window.
    pub skipped: bool,
}

/// μ = (κ⁻¹·V̇ + c_o·I_o) / (c_i·I_in).
pub fn solve_mu(v_dot: f64, kappa: f64, c_in: f64, i_in: f64, c_out: f64, i_out: f64) -> f64 {
    (v_dot / kappa + c_out * i_out) / (c_in * i_in)
}

/// Spike rates per window and μ solved at every output firing instant.
pub fn correlation_analysis(
    input_spikes: &[f64],
    output: &[FiringSample],
    kappa: f64,
    windows: &[(f64, f64)],
) -> Result<Vec<CorrelationSample>> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::validation("kappa", "must be > 0"));
    }
    let mut out = Vec::with_capacity(windows.len());
    for &(a, b) in windows {
        if !(b > a) {
            return Err(Error::validation("windows", "each window must have end > start"));
        }
        let len = b - a;
        let c_in = input_spikes.iter().filter(|t| **t >= a && **t < b).count() as f64 / len;
        let fired: Vec<&FiringSample> = output.iter().filter(|s| s.t >= a && s.t < b).collect();
        let c_out = fired.len() as f64 / len;
        let mu = if fired.is_empty() || c_in == 0.0 {
            None
        } else {
            let vals: Vec<f64> = fired
                .iter()
                .map(|s| solve_mu(s.v_dot, kappa, c_in, s.i_in, c_out, s.i_out))
                .filter(|m| m.is_finite())
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        out.push(CorrelationSample {
            window_start: a,
            window_end: b,
            c_in,
            c_out,
            mu,
            skipped: fired.is_empty(),
        });
    }
    Ok(out)
}

/// Poisson train of input transients on `der` (1-based) in [start, end): the
/// gap after each transient ends is exponential with the given rate.
pub fn intermittency_profile(
    rate: f64,
    start: f64,
    end: f64,
    der: usize,
    factor: f64,
    duration: f64,
    seed: u64,
) -> Vec<TimedEvent> {
    let mut events = Vec::new();
    if !(rate > 0.0) {
        return events;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(rate).expect("rate > 0");
    let mut t = start + exp.sample(&mut rng);
    while t + duration < end {
        events.push(TimedEvent {
            time: t,
            event: Event::InputTransient { der, factor, duration },
        });
        t += duration + exp.sample(&mut rng);
    }
    events
}

/// Runs the sweep batch and analyses every run; the returned trace and series
/// are those of the last run.
pub(super) fn run_sweep(base: &ScenarioConfig, sys: &SystemConfig, opts: &RunOptions) -> Result<ScenarioOutcome> {
    let sw = &sys.sweep;
    let mut run_sys = sys.clone();
    run_sys.controller.secondary_droop = sw.secondary_droop;
    let kappa = sys.coding.kappa;
    let mut windows = Vec::new();
    let mut a = sw.warmup;
    while a + sw.window <= base.horizon + 1e-9 {
        windows.push((a, a + sw.window));
        a += sw.window;
    }
    let mut samples = Vec::new();
    let mut last: Option<ScenarioOutcome> = None;
    let mut diverged = None;
    for (r, &rate) in sw.event_rates.iter().enumerate() {
        let mut scenario = base.clone();
        scenario.events = intermittency_profile(
            rate,
            sw.warmup,
            base.horizon,
            sw.der,
            sw.transient_factor,
            sw.transient_duration,
            opts.seed.wrapping_add(r as u64),
        );
        scenario.validate(sys.n_buses())?;
        let mut sim = Simulation::new(&scenario, &run_sys, opts)?;
        sim.run();
        let outcome = sim.finish();
        if let Some(d) = &outcome.divergence {
            diverged.get_or_insert(d.clone());
        }
        let inputs: Vec<f64> = scenario.events.iter().map(|e| e.time).collect();
        let outputs: Vec<FiringSample> = outcome
            .spikes
            .iter()
            .filter(|s| s.der_id == sw.der && s.channel == Channel::Voltage)
            .map(|s| FiringSample {
                t: s.t,
                v_dot: s.v_dot,
                i_in: s.v_bus * s.i_out / sys.source.input_voltage,
                i_out: s.i_out,
            })
            .collect();
        samples.extend(correlation_analysis(&inputs, &outputs, kappa, &windows)?);
        last = Some(outcome);
    }
    let mut outcome = match last {
        Some(o) => o,
        None => {
            let mut sim = Simulation::new(base, &run_sys, opts)?;
            sim.run();
            sim.finish()
        }
    };
    outcome.scenario = base.clone();
    let used: Vec<&CorrelationSample> = samples.iter().filter(|s| !s.skipped).collect();
    if !used.is_empty() {
        let k = used.len() as f64;
        outcome.metrics.c_in = Some(used.iter().map(|s| s.c_in).sum::<f64>() / k);
        outcome.metrics.c_out = Some(used.iter().map(|s| s.c_out).sum::<f64>() / k);
        let mus: Vec<f64> = used.iter().filter_map(|s| s.mu).collect();
        outcome.metrics.mu = (!mus.is_empty()).then(|| mus.iter().sum::<f64>() / mus.len() as f64);
    }
    let (x, y): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| !(0.4..=0.7).contains(&s.c_in))
        .map(|s| (s.c_in, s.c_out))
        .unzip();
    if let Some(fit) = linear_fit(&x, &y) {
        outcome.metrics.correlation_r2 = Some(fit.r2);
        outcome.metrics.correlation_slope = Some(fit.slope);
    }
    if outcome.divergence.is_none() {
        if let Some(d) = diverged {
            outcome.metrics.diverged = true;
            outcome.metrics.divergence_time = Some(d.time);
            outcome.divergence = Some(d);
        }
    }
    outcome.correlation = samples;
    Ok(outcome)
}
