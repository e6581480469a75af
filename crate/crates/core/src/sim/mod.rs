//! Scenario loading, closed-loop simulation, reports and file export.

pub mod export;
pub mod plan;
pub mod profile;
pub mod report;
pub mod run;
pub mod scenario;

pub use export::{export, write_csv, write_svg, ExportFormat};
pub use profile::LeaderProfile;
pub use report::{feasibility_report, FeasibilityReport, ReportRow, Status};
pub use run::{run, run_with, LogRow, RunOptions, TrajectoryLog};
pub use scenario::Scenario;
