//! Trace rows, spike records and the 9-significant-digit number format used in
//! emitted CSV files.

use crate::coding::Channel;

/// Column order of `trace.csv`.
pub const TRACE_HEADER: [&str; 10] = [
    "t", "der_id", "v_bus", "i_out", "i_filt", "v_mem", "delta_r", "dw", "g_syn", "online",
];

/// One DER at one recorded instant. `der_id` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub der_id: usize,
    pub v_bus: f64,
    pub i_out: f64,
    pub i_filt: f64,
    pub v_mem: f64,
    pub delta_r: f64,
    pub dw: f64,
    /// `None` where the conductance is undefined (V_k ≈ V_l).
    pub g_syn: Option<f64>,
    pub online: bool,
}

impl TraceRow {
    /// Formatted CSV fields in [`TRACE_HEADER`] order.
    pub fn fields(&self) -> [String; 10] {
        [
            fmt_sig9(self.t),
            self.der_id.to_string(),
            fmt_sig9(self.v_bus),
            fmt_sig9(self.i_out),
            fmt_sig9(self.i_filt),
            fmt_sig9(self.v_mem),
            fmt_sig9(self.delta_r),
            fmt_sig9(self.dw),
            self.g_syn.map(fmt_sig9).unwrap_or_default(),
            u8::from(self.online).to_string(),
        ]
    }
}

/// Rows ordered by (t, der_id).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub rows: Vec<TraceRow>,
}

impl TraceLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows of one DER (1-based id) in time order.
    pub fn der(&self, der_id: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.der_id == der_id)
    }
}

/// A spike with the controller quantities sampled when it was emitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeRecord {
    pub t: f64,
    /// 1-based.
    pub der_id: usize,
    pub channel: Channel,
    pub v_bus: f64,
    pub v_dot: f64,
    /// Voltage-channel error at the spike.
    pub e_v: f64,
    /// Effective rate gain the trigger was evaluated with (κ or κ·κ_b); NaN for latency spikes.
    pub kappa_eff: f64,
    pub i_out: f64,
}

/// Shortest decimal that round-trips the value rounded to 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    if rounded == 0.0 {
        return "0".into();
    }
    let plain = rounded.to_string();
    let exp = rounded.abs().log10().floor() as i32;
    if (-6..=15).contains(&exp) {
        plain
    } else {
        format!("{rounded:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(fmt_sig9(315.0), "315");
        assert_eq!(fmt_sig9(0.30000000000000004), "0.3");
        assert_eq!(fmt_sig9(313.123456789123), "313.123457");
        assert_eq!(fmt_sig9(-1.5e-12), "-1.5e-12");
        assert_eq!(fmt_sig9(5e-5), "0.00005");
        assert_eq!(fmt_sig9(-0.0), "0");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
    }

    #[test]
    fn empty_conductance_cell() {
        let r = TraceRow {
            t: 0.001,
            der_id: 2,
            v_bus: 314.5,
            i_out: 3.0,
            i_filt: 2.9,
            v_mem: 0.1,
            delta_r: -0.5,
            dw: 0.0,
            g_syn: None,
            online: true,
        };
        let f = r.fields();
        assert_eq!(f[1], "2");
        assert_eq!(f[8], "");
        assert_eq!(f[9], "1");
    }
}
