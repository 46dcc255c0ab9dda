//! Simulation harness: scenario schema, scripted obstacle worlds, the
//! trapezoidal joint-space executor, and the closed-loop driver with its
//! metrics, danger-map measurement, and batch experiment modes.

pub mod executor;
pub mod runner;
pub mod scenario;
pub mod script;

pub use executor::{segment_duration, Executor, StepOutcome, TrapezoidProfile};
pub use runner::{
    metrics_csv, run_closed_loop, run_danger_map_test, run_experiment_suite, Aggregate,
    AnnulusStats, DangerMapReport, ExperimentId, LatencyReport, OrderingChecks, RunMetrics,
    SimOptions, SimOutput, SuiteReport, TickRecord,
};
pub use scenario::{
    dangermap_scenario, experiment1, experiment2, experiment3, experiment_direct, lunge_scenario,
    CameraSpec, MeasureSpec, ObstacleSpec, ParamSpec, PlannerSpec, PreprocessSpec, RobotSpec,
    Scenario, Variant, WorkspaceSpec,
};
pub use script::{body_shape_clearance, ObstacleScript, ScriptSpec, ShapeSpec};
