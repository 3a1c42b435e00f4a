//! Matched wake analysis of spatio-temporal event data and generation of
//! four-scene story bundles that explain a run of the analysis.
//!
//! Pipeline: [`dataset`] parses and validates the event tables, [`wake`]
//! counts dependent events around each intervention for every window of the
//! grid, [`matching`] coarsens and exact-matches treatment to control,
//! [`estimation`] fits a weighted difference-in-differences per window,
//! [`actors`] picks the exemplar pair, and [`storygen`] assembles the bundle.

pub mod actors;
pub mod canonical;
pub mod dataset;
pub mod estimation;
pub mod geo;
pub mod matching;
pub mod storygen;
pub mod synth;
pub mod wake;

pub use actors::{reference_window, select_actors, ActorError, ActorPair};
pub use dataset::{Dataset, ScenarioConfig};
pub use estimation::{run_analysis, sweep_grid, Analysis, EffectEstimate, ResultGrid};
pub use matching::{match_cem, MatchOptions, MatchResult};
pub use wake::{compute_wake, compute_wakes_grid, Wake, WindowGrid, WindowSpec};
