//! Scenario loading, deterministic runs, and scoring against ground truth.

mod matching;
mod metrics;
mod report;
mod run;
mod scenario;

pub use matching::{
    alerts_from_log, compatible, hazards_from_env, match_alerts, AlertOutcome, AlertSummary,
    Classification, Hazard, MatchPair, MatchWindow, Outcome, DEFAULT_MATCH_SLACK_MS,
};
pub use metrics::{
    accuracy, compute_metrics, percent, response_pairs, ChannelAccuracy, Counts, MetricsReport,
    ResponseTime,
};
pub use report::{
    csv_header, render, render_csv, render_json, render_text, ReportFormat, UnknownFormat,
};
pub use run::{
    run_many, run_scenario, run_scenario_with, FaultInjection, LinkStats, RunLog, RunMeta,
    RunOptions, Simulation,
};
pub use scenario::{
    BatteryOverride, ControlOverride, HelmetEntry, OperatorEntry, Scenario, ScenarioConfig,
    ScenarioError, SensorOverride, SupervisorScript,
};
