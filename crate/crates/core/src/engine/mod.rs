//! Fixed-step simulation of scenarios under the three models, and trace output.
//!
//! * `actual` — oscillators integrated in the time domain against the EMT
//!   network, powers from cycle-window meters.
//! * `averaged` — amplitude/phase model with phasor-closed terminal power.
//! * `legacy` — as `averaged` but with the filter constants of the feedback
//!   taken before the filter.

mod fourier;
pub mod library;
mod rk4;
mod run;
mod scenario;

pub use fourier::{fourier_components, MIN_CYCLES};
pub use rk4::{rk4_step, Rk4};
pub use run::{
    compare, csv_header, mean_abs_deviation, run, run_streaming, write_csv, Comparison,
    CsvTraceWriter, Harmonics, InverterRow, RunOutput, RunReport, SegmentSummary, TraceRow,
};
pub use scenario::{
    DesignDoc, DispatchDoc, DispatchSetup, FeedbackTap, InverterDoc, InverterSetup, LoadDoc,
    LoadSetup, Model, Scenario, ScenarioDoc, DEFAULT_DT_ACTUAL, DEFAULT_DT_AVERAGED,
    DEFAULT_TRACE_INTERVAL, DEFAULT_V0_FRACTION, SCHEMA_VERSION, TRACE_DECIMATION_ENV,
};
