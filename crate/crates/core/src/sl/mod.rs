//! Monotone semi-Lagrangian kernel on boxes, strips, tori and balls.

pub mod grid;
pub mod kernel;

pub use grid::{DomainKind, GridSpec, Stencil, ValueField};
pub use kernel::{
    apply_bellman, policy, solve_discounted, solve_ergodic_continuation, solve_ergodic_relative, Candidate, ContinuationOptions,
    ContinuationResult, DiscountedProblem, DiscountedSolution, LocalControls, RelativeSolution, SolveOptions, Sweep, Transitions,
};
