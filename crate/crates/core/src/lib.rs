//! Complete Lyapunov functions for semiflows on compact rectangles.
//!
//! The pipeline: discretize the domain into a [`grid::BoxGrid`], approximate
//! the time-one map `phi^1` by a [`transition::TransitionGraph`], extract the
//! chain recurrent boxes and their components as a [`chainrec::MorseGraph`],
//! assign a complete Lyapunov function `ell` for the map
//! ([`lyapunov::LyapunovAssignment`]), and lift it to the semiflow with
//! `L(x) = ∫_0^1 ell(phi^t(x)) dt` ([`lift::lift`]).
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;

pub mod chainrec;
pub mod dynamics;
pub mod expr;
pub mod grid;
pub mod lift;
pub mod lyapunov;
pub mod transition;

pub use chainrec::{
    chain_recurrent_boxes, chain_transitive_components, epsilon_chain_oracle,
    strongly_connected_components, MorseGraph,
};
pub use dynamics::{FlowError, FlowOutcome, MapImage, Mode, SemiflowSystem, SystemError};
pub use expr::{eval_expr, parse_expression, EvalError, Expr, ParseError};
pub use grid::{build_grid, BoxGrid, BoxId, GridError, Rect};
pub use lift::{
    average_over, continuity_probe, lift, shift_decomposition, ContinuityProbe, LiftConfig,
    LiftError, LiftValue, ScalarField, ShiftDecomposition,
};
pub use lyapunov::{
    assign_component_values, assign_transient_values, build_assignment, ell, BoxTag,
    ComponentValues, Ell, EllMode, LyapunovAssignment, LyapunovError, TernaryValue,
};
pub use transition::{
    box_image, build_transition, build_transition_with, BoxImage, TransitionError, TransitionGraph,
    TransitionSettings,
};
