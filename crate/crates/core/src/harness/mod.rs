//! Scenario files, closed-loop simulation and CSV traces.

mod scenario;
mod sim;
mod trace;

pub use scenario::{bundled, load_scenario, parse_scenario, EnvSegment, ScenarioConfig, BUNDLED};
pub use sim::{
    run_closed_loop, run_comparison, run_with_controller, summarize, RunSummary, TERMINAL_WINDOW,
};
pub use trace::{read_trace, write_trace, write_trace_to, TraceRecord, TRACE_CSV_HEADER};
