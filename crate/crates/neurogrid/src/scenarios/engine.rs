//! Time-stepped co-simulation of the network and the per-DER neuro-controller.
//!
//! Each DER runs two channels on a fixed frame clock. At a frame start the
//! latency-coded channels sample their drive, reset their membrane and schedule
//! the first threshold crossing analytically; rate- and burst-coded channels are
//! evaluated once per frame at the sample phase. Every spike is paired online
//! with the other channel's spikes of the same DER (STDP), and the resulting Δw
//! reaches both w and ΔR after the synaptic delay.

use crate::coding::{latency_encode, rate_fires, BurstState, Channel, LatencyCodingParams, Scheme};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::grid::{
    build_admittance, step_dynamics_in_place, synaptic_conductance, thevenin_resistance, AdmittanceMatrix, DerParams,
    DroopSource, GridState, StepContext,
};
use crate::neuron::{decay_factor, lif_step, LifParams, LifState};
use crate::plasticity::{soft_bound_amplitudes, DroopParams, ExponentMode, OnlineStdp, PlasticityState, StdpParams};
use crate::trace::{SpikeRecord, TraceLog, TraceRow};

use super::metrics::{clip_outliers, oscillation_index, settling_time, sharing_error, MetricsReport, MIN_SPECTRUM_LEN};
use super::{plug_event, Divergence, Event, PlugDirection, RunOptions, ScenarioConfig, ScenarioOutcome};

/// Sampling period of [`RunSeries`], s.
const SERIES_PERIOD: f64 = 1e-3;
/// Events are followed by this much excluded time in the metric window, s.
const EVENT_SETTLE: f64 = 0.2;

/// Per-DER quantities sampled every millisecond; indexed `[der][sample]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSeries {
    pub t: Vec<f64>,
    pub v_bus: Vec<Vec<f64>>,
    pub i_out: Vec<Vec<f64>>,
    pub i_filt: Vec<Vec<f64>>,
    pub delta_r: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    /// NaN where undefined.
    pub g_syn: Vec<Vec<f64>>,
    pub online: Vec<Vec<bool>>,
    pub load_total: Vec<f64>,
}

impl RunSeries {
    fn new(n: usize) -> Self {
        RunSeries {
            v_bus: vec![Vec::new(); n],
            i_out: vec![Vec::new(); n],
            i_filt: vec![Vec::new(); n],
            delta_r: vec![Vec::new(); n],
            w: vec![Vec::new(); n],
            g_syn: vec![Vec::new(); n],
            online: vec![Vec::new(); n],
            ..Default::default()
        }
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.t.partition_point(|x| *x < t - 1e-12)
    }
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Load { bus: Option<usize>, amperes: f64 },
    Factor { der: usize, factor: f64 },
    Plug { der: usize, direction: PlugDirection },
}

#[derive(Debug, Clone)]
struct DerNeuron {
    membrane: LifState,
    drive_i: f64,
    th_i: f64,
    pending_v: Option<f64>,
    pending_i: Option<f64>,
    burst_v: BurstState,
    burst_i: BurstState,
    v_mem_hold: f64,
}

/// A configured run that can be stepped and then turned into an outcome.
pub struct Simulation {
    sys: SystemConfig,
    scenario: ScenarioConfig,
    opts: RunOptions,
    n: usize,
    dt: f64,
    steps: usize,
    step: usize,
    tick: usize,
    sample_step: usize,
    series_stride: usize,
    y: AdmittanceMatrix,
    der: Vec<DerParams>,
    grid: GridState,
    loads: Vec<f64>,
    factor: Vec<f64>,
    actions: Vec<(f64, Action)>,
    next_action: usize,
    plastic: Vec<PlasticityState>,
    stdp: Vec<OnlineStdp>,
    stdp_params: StdpParams,
    droop: DroopParams,
    tau_k: Vec<f64>,
    g_mem: Vec<f64>,
    partner: Vec<Option<usize>>,
    neurons: Vec<DerNeuron>,
    beta_l: f64,
    deadband: f64,
    trace: TraceLog,
    spikes: Vec<SpikeRecord>,
    series: RunSeries,
    divergence: Option<Divergence>,
}

impl Simulation {
    pub fn new(scenario: &ScenarioConfig, sys: &SystemConfig, opts: &RunOptions) -> Result<Self> {
        let n = sys.n_buses();
        let topology = sys.topology();
        let y = build_admittance(&topology)?;
        let der = sys.der_params();
        let dt = sys.grid.dt;
        let droops: Vec<f64> = der.iter().map(DerParams::droop).collect();
        let r_eq = thevenin_resistance(&y, &droops, &vec![true; n])?;
        let tau_k = r_eq.iter().zip(&der).map(|(r, d)| r * d.output_capacitance).collect();
        let g_mem = r_eq.iter().map(|r| 1.0 / r).collect();
        let partner = (0..n)
            .map(|k| {
                topology
                    .neighbours(k)
                    .into_iter()
                    .fold(None, |best: Option<usize>, l| match best {
                        Some(b) if sys.grid.psi[k][b] >= sys.grid.psi[k][l] => Some(b),
                        _ => Some(l),
                    })
            })
            .collect();
        let mut actions = Vec::new();
        for e in &scenario.events {
            match e.event {
                Event::LoadStep { bus, amperes } => actions.push((
                    e.time,
                    Action::Load {
                        bus: bus.map(|b| b - 1),
                        amperes,
                    },
                )),
                Event::InputTransient { der, factor, duration } => {
                    actions.push((e.time, Action::Factor { der: der - 1, factor }));
                    actions.push((
                        e.time + duration,
                        Action::Factor {
                            der: der - 1,
                            factor: 1.0,
                        },
                    ));
                }
                Event::PlugOut { der } => actions.push((
                    e.time,
                    Action::Plug {
                        der: der - 1,
                        direction: PlugDirection::Out,
                    },
                )),
                Event::PlugIn { der } => actions.push((
                    e.time,
                    Action::Plug {
                        der: der - 1,
                        direction: PlugDirection::In,
                    },
                )),
            }
        }
        actions.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut stdp_params = sys.stdp_params();
        let mut deadband = sys.coding.deadband;
        if opts.strict_literal {
            stdp_params.exponent_mode = ExponentMode::Literal;
            deadband = 0.0;
        }
        let burst = BurstState::new(sys.burst_params());
        let neuron = DerNeuron {
            membrane: LifState::at_rest(),
            drive_i: 0.0,
            th_i: 0.0,
            pending_v: None,
            pending_i: None,
            burst_v: burst,
            burst_i: burst,
            v_mem_hold: 0.0,
        };
        let steps = (scenario.horizon / dt).round() as usize;
        let tick = ((sys.controller.frame_period / dt).round() as usize).max(1);
        let sample_step = ((sys.controller.sample_phase / dt).round() as usize).min(tick - 1);
        Ok(Simulation {
            scenario: scenario.clone(),
            opts: *opts,
            n,
            dt,
            steps,
            step: 0,
            tick,
            sample_step,
            series_stride: ((SERIES_PERIOD / dt).round() as usize).max(1),
            y,
            grid: GridState::uniform(n, sys.grid.v_ref),
            loads: sys.loads.base.clone(),
            factor: vec![1.0; n],
            actions,
            next_action: 0,
            plastic: vec![PlasticityState::new(sys.stdp.w0); n],
            stdp: vec![OnlineStdp::new(); n],
            stdp_params,
            droop: sys.droop_params(scenario.synaptic_delay),
            tau_k,
            g_mem,
            partner,
            neurons: vec![neuron; n],
            beta_l: decay_factor(dt, sys.coding.latency_tau)?,
            deadband,
            trace: TraceLog::default(),
            spikes: Vec::new(),
            series: RunSeries::new(n),
            divergence: None,
            der,
            sys: sys.clone(),
        })
    }

    pub fn grid(&self) -> &GridState {
        &self.grid
    }

    pub fn plasticity(&self) -> &[PlasticityState] {
        &self.plastic
    }

    /// Thevenin-based STDP time constants τ_k = R_eq,k·C_o,k.
    pub fn tau_k(&self) -> &[f64] {
        &self.tau_k
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.steps || self.divergence.is_some()
    }

    /// Runs to the horizon or until the divergence guard trips.
    pub fn run(&mut self) {
        while !self.is_done() {
            self.advance();
        }
    }

    /// Target line of the voltage channel; e_v = line − V_k.
    fn voltage_line(&self, k: usize) -> f64 {
        let v_ref = self.sys.grid.v_ref;
        let i_f = self.grid.filtered_current[k];
        let droop = self.der[k].droop() + self.plastic[k].delta_r;
        if self.opts.strict_literal {
            v_ref + i_f * droop
        } else if self.sys.controller.secondary_droop > 0.0 {
            v_ref - self.der[k].share_ratio * self.sys.controller.secondary_droop * i_f
        } else {
            v_ref - i_f * droop
        }
    }

    /// Current-channel drive V_ref − V_k and activation threshold γ·(V_ref − V'_kref).
    fn current_drive(&self, k: usize) -> (f64, f64) {
        let x = self.sys.grid.v_ref - self.grid.bus_voltage[k];
        let th = self.sys.controller.activation_ratio * self.der[k].droop() * self.grid.filtered_current[k];
        (x, th)
    }

    fn apply_actions(&mut self, t: f64) {
        while self.next_action < self.actions.len() && self.actions[self.next_action].0 <= t + 1e-9 {
            match self.actions[self.next_action].1 {
                Action::Load { bus: Some(b), amperes } => self.loads[b] += amperes,
                Action::Load { bus: None, amperes } => {
                    let share = amperes / self.n as f64;
                    self.loads.iter_mut().for_each(|l| *l += share);
                }
                Action::Factor { der, factor } => self.factor[der] = factor,
                Action::Plug { der, direction } => {
                    // Validated timelines never remove the last online DER.
                    if plug_event(&mut self.grid, der, direction).is_ok() && direction == PlugDirection::Out {
                        self.plastic[der].clear_pending();
                        self.stdp[der].clear();
                        let nr = &mut self.neurons[der];
                        nr.pending_v = None;
                        nr.pending_i = None;
                        nr.membrane = LifState::at_rest();
                    }
                }
            }
            self.next_action += 1;
        }
    }

    /// One integration step plus controller and learning updates.
    pub fn advance(&mut self) {
        if self.is_done() {
            return;
        }
        let s = self.step;
        let t = s as f64 * self.dt;
        self.apply_actions(t);
        let v_ref = self.sys.grid.v_ref;
        let sources: Vec<DroopSource> = (0..self.n)
            .map(|k| DroopSource {
                v_ref,
                resistance: self.der[k].droop() + self.plastic[k].delta_r,
            })
            .collect();
        let v_old = self.grid.bus_voltage.clone();
        let ctx = StepContext {
            y: &self.y,
            der: &self.der,
            sources: &sources,
            loads: &self.loads,
            source_factor: &self.factor,
            max_dt: self.sys.grid.max_dt,
        };
        if let Err(e) = step_dynamics_in_place(&mut self.grid, &ctx, self.dt) {
            self.divergence = Some(Divergence {
                time: t + self.dt,
                detail: e.to_string(),
            });
            return;
        }
        let tn = (s + 1) as f64 * self.dt;
        self.grid.time = tn;
        let limit = self.sys.guard.max_deviation_fraction * v_ref;
        if let Some(k) = (0..self.n).find(|k| (self.grid.bus_voltage[*k] - v_ref).abs() > limit) {
            self.divergence = Some(Divergence {
                time: tn,
                detail: format!(
                    "bus {} voltage {:.3} V outside the guard band",
                    k + 1,
                    self.grid.bus_voltage[k]
                ),
            });
            return;
        }
        let v_dot: Vec<f64> = (0..self.n)
            .map(|k| (self.grid.bus_voltage[k] - v_old[k]) / self.dt)
            .collect();

        let phase = s % self.tick;
        let mut fired: Vec<SpikeRecord> = Vec::new();
        for k in 0..self.n {
            if !self.grid.online[k] {
                continue;
            }
            if phase == 0 {
                self.frame_start(k, tn);
            }
            self.step_membrane(k);
            if phase == self.sample_step {
                self.sample_rate_channels(k, tn, v_dot[k], &mut fired);
            }
            self.collect_latency_spikes(k, tn, v_dot[k], &mut fired);
        }
        fired.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then(a.der_id.cmp(&b.der_id))
                .then((a.channel == Channel::Current).cmp(&(b.channel == Channel::Current)))
        });
        for rec in fired {
            let k = rec.der_id - 1;
            let (ap, am) = if self.sys.stdp.soft_bounds {
                soft_bound_amplitudes(
                    self.stdp_params.a_plus,
                    self.stdp_params.a_minus,
                    self.plastic[k].w,
                    self.sys.stdp.w_max,
                )
            } else {
                (self.stdp_params.a_plus, self.stdp_params.a_minus)
            };
            let dw = self.stdp[k].on_spike(
                rec.channel == Channel::Voltage,
                rec.t,
                ap,
                am,
                self.tau_k[k],
                &self.stdp_params,
            );
            self.plastic[k].apply_weight_to_droop(dw, rec.t, &self.droop);
            self.spikes.push(rec);
        }
        for k in 0..self.n {
            let rd = self.der[k].droop();
            self.plastic[k].advance(
                tn,
                &self.droop,
                rd,
                self.sys.stdp.soft_bounds.then_some(self.sys.stdp.w_max),
            );
            if !(self.plastic[k].w.is_finite() && self.plastic[k].delta_r.is_finite()) {
                self.divergence = Some(Divergence {
                    time: tn,
                    detail: format!("DER {} weight is not finite", k + 1),
                });
            }
        }
        self.step += 1;
        if self.step % self.opts.decimation == 0 {
            self.record_trace(tn);
        }
        if self.step % self.series_stride == 0 {
            self.record_series(tn);
        }
    }

    fn frame_start(&mut self, k: usize, tn: f64) {
        let frame = self.tick as f64 * self.dt;
        let tau = self.sys.coding.latency_tau;
        let (x, th) = self.current_drive(k);
        let line = self.voltage_line(k);
        let window = self.sys.controller.voltage_window;
        let phase = self.sys.controller.sample_phase;
        let v = self.grid.bus_voltage[k];
        let nr = &mut self.neurons[k];
        nr.v_mem_hold = nr.membrane.v_mem;
        nr.membrane.reset();
        nr.drive_i = x;
        nr.th_i = th;
        let last = frame - self.dt;
        let saturate = self.sys.controller.saturate_latency;
        let schedule = |lat: f64| {
            if lat < frame {
                Some(tn + lat)
            } else if saturate {
                Some(tn + last)
            } else {
                None
            }
        };
        if self.scenario.coding.current == Scheme::Latency {
            nr.pending_i = if th > 0.0 {
                schedule(latency_encode(x, 1.0, &LatencyCodingParams { tau, v_th: th }))
            } else {
                None
            };
        }
        if self.scenario.coding.voltage == Scheme::Latency {
            // Fires exactly at the sample phase when V_k sits on the target line,
            // earlier above it, later (or not at all) below it.
            let drive = v - (line - window);
            let v_th = window * (1.0 - (-phase / tau).exp());
            nr.pending_v = schedule(latency_encode(drive, 1.0, &LatencyCodingParams { tau, v_th }));
        }
    }

    /// Steps the current-channel LIF membrane with the drive held for this frame.
    fn step_membrane(&mut self, k: usize) {
        let tau = self.sys.coding.latency_tau;
        let nr = &mut self.neurons[k];
        match LifParams::with_tau(1.0, tau, nr.th_i) {
            Ok(p) => {
                if let Ok((next, _)) = lif_step(&nr.membrane, nr.drive_i, &p, self.dt) {
                    nr.membrane = next;
                }
            }
            Err(_) => {
                nr.membrane.v_mem = self.beta_l * nr.membrane.v_mem + nr.drive_i * (1.0 - self.beta_l);
                nr.membrane.elapsed += self.dt;
            }
        }
    }

    fn sample_rate_channels(&mut self, k: usize, tn: f64, v_dot: f64, fired: &mut Vec<SpikeRecord>) {
        let kappa = self.sys.coding.kappa;
        let rate = crate::coding::RateCodingParams {
            kappa,
            deadband: self.deadband,
        };
        let e_v = self.voltage_line(k) - self.grid.bus_voltage[k];
        let (x, th) = self.current_drive(k);
        let e_i = x - th;
        let voltage = match self.scenario.coding.voltage {
            Scheme::Rate => rate_fires(v_dot, e_v, kappa, self.deadband).then_some(kappa),
            Scheme::Burst => {
                let (f, kb) = self.neurons[k].burst_v.sample(v_dot, e_v, &rate);
                f.then_some(kappa * kb)
            }
            Scheme::Latency => None,
        };
        if let Some(kappa_eff) = voltage {
            fired.push(self.record(k, tn, Channel::Voltage, v_dot, e_v, kappa_eff));
        }
        let current = match self.scenario.coding.current {
            Scheme::Rate => rate_fires(0.0, e_i, kappa, self.deadband).then_some(kappa),
            Scheme::Burst => {
                let (f, kb) = self.neurons[k].burst_i.sample(0.0, e_i, &rate);
                f.then_some(kappa * kb)
            }
            Scheme::Latency => None,
        };
        if let Some(kappa_eff) = current {
            fired.push(self.record(k, tn, Channel::Current, v_dot, e_v, kappa_eff));
        }
    }

    fn collect_latency_spikes(&mut self, k: usize, tn: f64, v_dot: f64, fired: &mut Vec<SpikeRecord>) {
        let e_v = self.voltage_line(k) - self.grid.bus_voltage[k];
        if let Some(ts) = self.neurons[k].pending_v.filter(|ts| *ts <= tn + 1e-12) {
            self.neurons[k].pending_v = None;
            fired.push(self.record(k, ts, Channel::Voltage, v_dot, e_v, f64::NAN));
        }
        if let Some(ts) = self.neurons[k].pending_i.filter(|ts| *ts <= tn + 1e-12) {
            self.neurons[k].pending_i = None;
            fired.push(self.record(k, ts, Channel::Current, v_dot, e_v, f64::NAN));
        }
    }

    fn record(&self, k: usize, t: f64, channel: Channel, v_dot: f64, e_v: f64, kappa_eff: f64) -> SpikeRecord {
        SpikeRecord {
            t,
            der_id: k + 1,
            channel,
            v_bus: self.grid.bus_voltage[k],
            v_dot,
            e_v,
            kappa_eff,
            i_out: self.grid.der_current[k],
        }
    }

    fn g_syn(&self, k: usize) -> Option<f64> {
        let l = self.partner[k]?;
        if !(self.grid.online[k] && self.grid.online[l]) {
            return None;
        }
        let (a, b) = (&self.neurons[k], &self.neurons[l]);
        synaptic_conductance(
            self.grid.bus_voltage[k],
            self.grid.bus_voltage[l],
            a.v_mem_hold,
            b.v_mem_hold,
            0.5 * (a.th_i + b.th_i),
            self.g_mem[k],
            self.g_mem[l],
            self.sys.grid.conductance_eps,
        )
    }

    fn record_trace(&mut self, t: f64) {
        for k in 0..self.n {
            let row = TraceRow {
                t,
                der_id: k + 1,
                v_bus: self.grid.bus_voltage[k],
                i_out: self.grid.der_current[k],
                i_filt: self.grid.filtered_current[k],
                v_mem: self.neurons[k].v_mem_hold,
                delta_r: self.plastic[k].delta_r,
                dw: self.plastic[k].dw,
                g_syn: self.g_syn(k),
                online: self.grid.online[k],
            };
            self.trace.rows.push(row);
        }
    }

    fn record_series(&mut self, t: f64) {
        self.series.t.push(t);
        self.series.load_total.push(self.loads.iter().sum());
        for k in 0..self.n {
            let g = self.g_syn(k).unwrap_or(f64::NAN);
            let s = &mut self.series;
            s.v_bus[k].push(self.grid.bus_voltage[k]);
            s.i_out[k].push(self.grid.der_current[k]);
            s.i_filt[k].push(self.grid.filtered_current[k]);
            s.delta_r[k].push(self.plastic[k].delta_r);
            s.w[k].push(self.plastic[k].w);
            s.g_syn[k].push(g);
            s.online[k].push(self.grid.online[k]);
        }
    }

    /// Event boundaries that start a settling interval: event times, plus the
    /// end of every input transient.
    fn event_marks(&self) -> Vec<f64> {
        let mut marks = Vec::new();
        for e in &self.scenario.events {
            marks.push(e.time);
            if let Event::InputTransient { duration, .. } = e.event {
                marks.push(e.time + duration);
            }
        }
        marks.sort_by(f64::total_cmp);
        marks
    }

    fn metrics(&self) -> MetricsReport {
        let s = &self.series;
        let n = self.n;
        let marks = self.event_marks();
        let horizon = self.scenario.horizon;
        let in_window: Vec<bool> =
            s.t.iter()
                .map(|t| *t >= 0.75 * horizon && !marks.iter().any(|m| *t >= *m && *t < m + EVENT_SETTLE))
                .collect();
        let idx: Vec<usize> = (0..s.t.len()).filter(|j| in_window[*j]).collect();
        let violations = |gain: &dyn Fn(&SpikeRecord) -> f64| {
            self.spikes
                .iter()
                .filter(|r| r.channel == Channel::Voltage && !r.kappa_eff.is_nan())
                .filter(|r| !(r.v_dot <= gain(r) * r.e_v))
                .count()
        };
        let mut m = MetricsReport {
            spikes_sv: self.spikes.iter().filter(|r| r.channel == Channel::Voltage).count(),
            spikes_si: self.spikes.iter().filter(|r| r.channel == Channel::Current).count(),
            trigger_violations: violations(&|r: &SpikeRecord| r.kappa_eff),
            trigger_violations_base: violations(&|_: &SpikeRecord| self.sys.coding.kappa),
            diverged: self.divergence.is_some(),
            divergence_time: self.divergence.as_ref().map(|d| d.time),
            ..Default::default()
        };
        if idx.is_empty() {
            m.mean_voltage = f64::NAN;
            m.sharing_error = f64::NAN;
            m.load_served_error = f64::NAN;
            m.oscillation_index = f64::NAN;
            m.oscillation_index_delta_r = f64::NAN;
            m.delta_r_settle_max = f64::NAN;
            return m;
        }
        let cnt = idx.len() as f64;
        m.mean_voltage = idx
            .iter()
            .map(|j| (0..n).map(|k| s.v_bus[k][*j]).sum::<f64>() / n as f64)
            .sum::<f64>()
            / cnt;
        let last = *idx.last().unwrap();
        let online: Vec<bool> = (0..n).map(|k| s.online[k][last]).collect();
        let mean_i: Vec<f64> = (0..n)
            .map(|k| idx.iter().map(|j| s.i_out[k][*j]).sum::<f64>() / cnt)
            .collect();
        let ratios: Vec<f64> = self.der.iter().map(|d| d.share_ratio).collect();
        m.sharing_error = sharing_error(&mean_i, &ratios, &online);
        m.load_served_error = idx
            .iter()
            .map(|j| {
                let served: f64 = (0..n).map(|k| s.i_out[k][*j]).sum();
                ((served - s.load_total[*j]) / s.load_total[*j]).abs()
            })
            .sum::<f64>()
            / cnt;
        let spectrum = |series: &Vec<Vec<f64>>, robust: bool| {
            let mut best = (f64::NAN, 0.0);
            let mut acc = Vec::new();
            for k in 0..n {
                if !online[k] {
                    continue;
                }
                let Some(x) = forward_filled(idx.iter().map(|j| series[k][*j])) else {
                    continue;
                };
                if x.len() < MIN_SPECTRUM_LEN {
                    continue;
                }
                let x = if robust { clip_outliers(&x, 3.0) } else { x };
                if let Ok(o) = oscillation_index(&x, SERIES_PERIOD) {
                    acc.push(o.index);
                    if best.0.is_nan() || o.index > best.0 {
                        best = (o.index, o.frequency);
                    }
                }
            }
            let mean = if acc.is_empty() {
                f64::NAN
            } else {
                acc.iter().sum::<f64>() / acc.len() as f64
            };
            (mean, best.1)
        };
        (m.oscillation_index, m.oscillation_frequency) = spectrum(&s.g_syn, true);
        m.oscillation_index_delta_r = spectrum(&s.delta_r, false).0;
        let tol = 0.01 * self.sys.der.static_droop;
        let mut settle: f64 = 0.0;
        for (e, start) in marks.iter().enumerate() {
            let end = marks.get(e + 1).copied().unwrap_or(horizon);
            let (a, b) = (s.index_at(*start), s.index_at(end));
            if b <= a {
                continue;
            }
            for k in 0..n {
                if s.online[k][b - 1] {
                    settle = settle.max(settling_time(&s.t[a..b], &s.delta_r[k][a..b], *start, tol));
                }
            }
        }
        m.delta_r_settle_max = settle;
        m
    }

    pub fn finish(self) -> ScenarioOutcome {
        let metrics = self.metrics();
        let mut spikes = self.spikes;
        spikes.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.der_id.cmp(&b.der_id)));
        ScenarioOutcome {
            scenario: self.scenario,
            trace: self.trace,
            spikes,
            series: self.series,
            metrics,
            divergence: self.divergence,
            correlation: Vec::new(),
        }
    }
}

/// Replaces NaN gaps with the previous finite value (leading gaps take the
/// first finite one). `None` when nothing is finite.
fn forward_filled(values: impl Iterator<Item = f64>) -> Option<Vec<f64>> {
    let raw: Vec<f64> = values.collect();
    let first = raw.iter().copied().find(|v| v.is_finite())?;
    let mut prev = first;
    Some(
        raw.into_iter()
            .map(|v| {
                if v.is_finite() {
                    prev = v;
                }
                prev
            })
            .collect(),
    )
}
