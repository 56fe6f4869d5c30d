//! Problem specifications, the expression language for coefficients, and the
//! `bounds`, `simulate`, `verify` and `report` pipelines.

pub mod error;
pub mod expr;
pub mod pipeline;
pub mod presets;
pub mod problem;
pub mod spec;

pub use error::AppError;
pub use pipeline::{run_pipeline, Mode, Outcome, RunOptions};
pub use spec::{parse_spec, ProblemSpec};
