//! Rate, latency and burst spike encoders.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spike channel of a DER neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Voltage-regulation spikes S_v.
    #[serde(rename = "S_v")]
    Voltage,
    /// Current-sharing spikes S_i.
    #[serde(rename = "S_i")]
    Current,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Voltage => "S_v",
            Channel::Current => "S_i",
        })
    }
}

/// Coding scheme assigned to a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rate,
    Latency,
    Burst,
}

/// Strictly increasing spike times of one DER channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    pub source_der: usize,
    pub channel: Channel,
    times: Vec<f64>,
}

impl SpikeTrain {
    pub fn new(source_der: usize, channel: Channel) -> Self {
        SpikeTrain {
            source_der,
            channel,
            times: Vec::new(),
        }
    }

    pub fn from_times(source_der: usize, channel: Channel, times: Vec<f64>) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation(
                "spike_train",
                "times must be finite and strictly increasing",
            ));
        }
        Ok(SpikeTrain {
            source_der,
            channel,
            times,
        })
    }

    /// Appends a spike; rejects times not after the last one.
    pub fn push(&mut self, t: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::validation("spike_train", "times must be strictly increasing"));
            }
        }
        self.times.push(t);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCodingParams {
    pub kappa: f64,
    pub deadband: f64,
}

impl RateCodingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::validation("coding.kappa", "must be > 0"));
        }
        if !(self.deadband.is_finite() && self.deadband >= 0.0) {
            return Err(Error::validation("coding.deadband", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyCodingParams {
    pub tau: f64,
    pub v_th: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstCodingParams {
    pub xi: f64,
    pub kappa_b_init: f64,
}

impl BurstCodingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi.is_finite() && self.xi > 1.0) {
            return Err(Error::validation("coding.xi", "must be > 1"));
        }
        if !(self.kappa_b_init.is_finite() && self.kappa_b_init > 0.0) {
            return Err(Error::validation("coding.kappa_b_init", "must be > 0"));
        }
        Ok(())
    }
}

/// Rate-coding trigger: v̇ ≤ κ·e_v and |e_v| > deadband. A zero deadband
/// disables the magnitude test entirely (literal form, fires at 0 ≤ 0).
pub fn rate_fires(v_dot: f64, e_v: f64, kappa: f64, deadband: f64) -> bool {
    v_dot <= kappa * e_v && (deadband == 0.0 || e_v.abs() > deadband)
}

/// Spike times (sample index × dt) where the rate trigger holds.
pub fn rate_encode(v_dot: &[f64], e_v: &[f64], params: &RateCodingParams, dt: f64) -> Result<Vec<f64>> {
    if v_dot.len() != e_v.len() {
        return Err(Error::validation("rate_encode", "v_dot and e_v lengths differ"));
    }
    params.validate()?;
    Ok(v_dot
        .iter()
        .zip(e_v)
        .enumerate()
        .filter(|(_, (vd, e))| rate_fires(**vd, **e, params.kappa, params.deadband))
        .map(|(s, _)| s as f64 * dt)
        .collect())
}

/// t = τ·ln(I·R / (I·R − V_th)) for I·R > V_th, else ∞.
pub fn latency_encode(i: f64, r: f64, params: &LatencyCodingParams) -> f64 {
    let ir = i * r;
    if ir > params.v_th && ir.is_finite() {
        params.tau * (ir / (ir - params.v_th)).ln()
    } else {
        f64::INFINITY
    }
}

/// Rate coding with a multiplicative gain κ_b: ×Ξ after each spike, back to the
/// initial value otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstState {
    pub kappa_b: f64,
    params: BurstCodingParams,
}

impl BurstState {
    pub fn new(params: BurstCodingParams) -> Self {
        BurstState {
            kappa_b: params.kappa_b_init,
            params,
        }
    }

    /// Evaluates one sample; returns whether it fires and the κ_b it was evaluated with.
    pub fn sample(&mut self, v_dot: f64, e_v: f64, rate: &RateCodingParams) -> (bool, f64) {
        let used = self.kappa_b;
        let fire = rate_fires(v_dot, e_v, rate.kappa * used, rate.deadband);
        self.kappa_b = if fire {
            used * self.params.xi
        } else {
            self.params.kappa_b_init
        };
        (fire, used)
    }
}

/// Burst-coded spike times and the κ_b in force at every sample.
pub fn burst_encode(
    v_dot: &[f64],
    e_v: &[f64],
    rate: &RateCodingParams,
    params: &BurstCodingParams,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if v_dot.len() != e_v.len() {
        return Err(Error::validation("burst_encode", "v_dot and e_v lengths differ"));
    }
    rate.validate()?;
    params.validate()?;
    let mut st = BurstState::new(*params);
    let mut times = Vec::new();
    let mut gains = Vec::with_capacity(v_dot.len());
    for (s, (vd, e)) in v_dot.iter().zip(e_v).enumerate() {
        let (fire, used) = st.sample(*vd, *e, rate);
        gains.push(used);
        if fire {
            times.push(s as f64 * dt);
        }
    }
    Ok((times, gains))
}

/// Time from `t0` to the first spike at or after it; ∞ if there is none.
pub fn first_spike_latency(times: &[f64], t0: f64) -> f64 {
    let idx = times.partition_point(|t| *t < t0);
    times.get(idx).map_or(f64::INFINITY, |t| t - t0)
}
