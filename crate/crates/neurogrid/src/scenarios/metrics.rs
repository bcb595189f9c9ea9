//! Post-run metrics: spectral oscillation index, sharing, settling and fits.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Minimum samples accepted by [`oscillation_index`].
pub const MIN_SPECTRUM_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    /// Dominant nonzero-frequency bin power over total nonzero-frequency power.
    pub index: f64,
    /// Frequency of the dominant bin, Hz (0 when the trace is constant).
    pub frequency: f64,
}

/// Least-squares line removed from `x`.
pub fn detrend(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter()
        .enumerate()
        .map(|(i, v)| v - x_mean - slope * (i as f64 - t_mean))
        .collect()
}

/// Clips samples outside the Tukey fences [Q1 − k·IQR, Q3 + k·IQR].
pub fn clip_outliers(x: &[f64], k: f64) -> Vec<f64> {
    if x.len() < 4 {
        return x.to_vec();
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let (q1, q3) = (q(0.25), q(0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - k * iqr, q3 + k * iqr);
    x.iter().map(|v| v.clamp(lo, hi)).collect()
}

/// Detrended periodogram peak fraction of `trace` sampled every `dt` seconds.
/// A trace whose detrended RMS is below 1e-4·(|mean| + 1) counts as constant
/// and scores 0.
pub fn oscillation_index(trace: &[f64], dt: f64) -> Result<Oscillation> {
    if trace.len() < MIN_SPECTRUM_LEN {
        return Err(Error::validation(
            "oscillation_index",
            format!("needs at least {MIN_SPECTRUM_LEN} samples (got {})", trace.len()),
        ));
    }
    if trace.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("oscillation_index", "trace must be finite"));
    }
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let d = detrend(trace);
    let rms = (d.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms <= 1e-4 * (mean.abs() + 1.0) {
        return Ok(Oscillation {
            index: 0.0,
            frequency: 0.0,
        });
    }
    let mut buf: Vec<Complex<f64>> = d.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return Ok(Oscillation {
            index: 0.0,
            frequency: 0.0,
        });
    }
    let (k, peak) = power
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, p)| if *p > acc.1 { (i, *p) } else { acc });
    Ok(Oscillation {
        index: peak / total,
        frequency: (k + 1) as f64 / (n as f64 * dt),
    })
}

/// Ordinary least squares y = slope·x + intercept with its R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// max_k |share_k / target_k − 1| with target shares ∝ 1/α_k over online DERs.
pub fn sharing_error(currents: &[f64], share_ratio: &[f64], online: &[bool]) -> f64 {
    let total: f64 = currents.iter().zip(online).filter(|(_, o)| **o).map(|(i, _)| i).sum();
    let inv_total: f64 = share_ratio
        .iter()
        .zip(online)
        .filter(|(_, o)| **o)
        .map(|(a, _)| 1.0 / a)
        .sum();
    if total == 0.0 || inv_total == 0.0 {
        return f64::NAN;
    }
    currents
        .iter()
        .zip(share_ratio)
        .zip(online)
        .filter(|(_, o)| **o)
        .map(|((i, a), _)| ((i / total) / ((1.0 / a) / inv_total) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Time after `t_start` at which `x` last leaves the band ±`tol` around its
/// value at the end of the series; 0 if it never leaves it.
pub fn settling_time(t: &[f64], x: &[f64], t_start: f64, tol: f64) -> f64 {
    let Some(&last) = x.last() else { return 0.0 };
    let mut settle = 0.0;
    for (ti, xi) in t.iter().zip(x) {
        if *ti >= t_start && (xi - last).abs() > tol {
            settle = ti - t_start;
        }
    }
    settle
}

/// All scalar results of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub mean_voltage: f64,
    pub sharing_error: f64,
    pub load_served_error: f64,
    pub oscillation_index: f64,
    pub oscillation_frequency: f64,
    pub oscillation_index_delta_r: f64,
    pub delta_r_settle_max: f64,
    pub spikes_sv: usize,
    pub spikes_si: usize,
    /// Rate/burst S_v spikes with v̇ > κ_eff·e_v, κ_eff being the gain the spike was emitted with.
    pub trigger_violations: usize,
    /// Same check against the base κ; burst spikes inside a burst may exceed it.
    pub trigger_violations_base: usize,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub mu: Option<f64>,
    pub c_in: Option<f64>,
    pub c_out: Option<f64>,
    pub correlation_r2: Option<f64>,
    pub correlation_slope: Option<f64>,
    pub runtime_s: f64,
}

impl MetricsReport {
    /// `(name, value)` rows for metrics.csv, in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("mean_voltage", self.mean_voltage),
            ("sharing_error", self.sharing_error),
            ("load_served_error", self.load_served_error),
            ("oscillation_index", self.oscillation_index),
            ("oscillation_frequency", self.oscillation_frequency),
            ("oscillation_index_delta_r", self.oscillation_index_delta_r),
            ("delta_r_settle_max", self.delta_r_settle_max),
            ("spikes_sv", self.spikes_sv as f64),
            ("spikes_si", self.spikes_si as f64),
            ("trigger_violations", self.trigger_violations as f64),
            ("trigger_violations_base", self.trigger_violations_base as f64),
            ("diverged", f64::from(u8::from(self.diverged))),
        ];
        let opt = [
            ("divergence_time", self.divergence_time),
            ("mu", self.mu),
            ("c_in", self.c_in),
            ("c_out", self.c_out),
            ("correlation_r2", self.correlation_r2),
            ("correlation_slope", self.correlation_slope),
        ];
        out.extend(opt.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
        out
    }
}
