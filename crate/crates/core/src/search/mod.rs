//! The approximate geodesic walker: at every point, take the step that best
//! trades metric energy against progress toward a goal, within a trust region.

mod field;
mod tangent;
mod walk;

pub use field::{DirectionField, Heading, PinnedCoordinates};
pub use tangent::{
    solve_tangent_step, SolverOptions, TangentStep, TangentStepProblem, DEFAULT_RADIUS,
};
pub use walk::{
    best_of_walks, walk, BestOfWalks, BetaSchedule, LeaderboardEntry, StepInfo, WalkConfig,
    WalkOutcome, DEFAULT_BETA, DEFAULT_BETA_GRID,
};
