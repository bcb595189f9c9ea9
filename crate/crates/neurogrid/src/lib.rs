//! Deterministic DC-microgrid simulator whose secondary control is a per-DER
//! leaky integrate-and-fire neuron pair trained online with STDP.
//!
//! Modules follow the signal path: [`grid`] (network and droop), [`neuron`]
//! (LIF dynamics), [`coding`] (spike encoders), [`plasticity`] (STDP, droop
//! adaptation, Hebbian analysis) and [`scenarios`] (scripted full-stack runs).

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coding;
pub mod config;
pub mod error;
pub mod grid;
pub mod neuron;
pub mod plasticity;
pub mod scenarios;
pub mod trace;

pub use coding::{Channel, Scheme, SpikeTrain};
pub use config::SystemConfig;
pub use error::{Error, Result};
pub use grid::{AdmittanceMatrix, DerParams, GridState, TieLine, Topology};
pub use scenarios::{run_scenario, Divergence, MetricsReport, RunOptions, ScenarioConfig, ScenarioId, ScenarioOutcome};
pub use trace::{SpikeRecord, TraceLog, TraceRow};
