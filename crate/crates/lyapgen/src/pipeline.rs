//! Grid, transition graph, Morse graph and Lyapunov assignment for one
//! resolved config.

use rayon::prelude::*;

use lyapgen_core::{
    box_image, build_assignment, strongly_connected_components, BoxGrid, BoxId, Ell, FlowError,
    GridError, LiftError, LyapunovAssignment, LyapunovError, MapImage, MorseGraph, SemiflowSystem,
    TransitionError, TransitionGraph, TransitionSettings,
};
use thiserror::Error;

use crate::config::{ConfigError, Resolved};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The transition graph of `map`, boxes computed in parallel.
pub fn transition_graph_par<F>(
    grid: &BoxGrid,
    settings: &TransitionSettings,
    map: F,
) -> Result<TransitionGraph, TransitionError>
where
    F: Fn(&[f64]) -> Result<MapImage, FlowError> + Sync,
{
    settings.validate()?;
    let images = (0..grid.box_count())
        .into_par_iter()
        .map(|b| box_image(grid, settings, BoxId(b), &map))
        .collect::<Result<Vec<_>, _>>()?;
    TransitionGraph::from_images(images)
}

/// Transition graph of the time-`t` map of `sys`.
pub fn time_t_graph(
    grid: &BoxGrid,
    sys: &SemiflowSystem,
    settings: &TransitionSettings,
    t: f64,
) -> Result<TransitionGraph, TransitionError> {
    transition_graph_par(grid, settings, |x| sys.time_map(x, t))
}

#[derive(Debug)]
pub struct Analysis {
    pub config: Resolved,
    pub system: SemiflowSystem,
    pub grid: BoxGrid,
    pub graph: TransitionGraph,
    pub morse: MorseGraph,
    pub assignment: LyapunovAssignment,
}

impl Analysis {
    pub fn run(config: Resolved) -> Result<Self, PipelineError> {
        let system = config.system()?;
        let grid = config.grid()?;
        let graph = time_t_graph(&grid, &system, &config.transition, 1.0)?;
        let morse = strongly_connected_components(&graph);
        let assignment = build_assignment(&morse)?;
        Ok(Analysis {
            config,
            system,
            grid,
            graph,
            morse,
            assignment,
        })
    }

    pub fn ell(&self) -> Ell<'_> {
        Ell::new(&self.assignment, &self.grid, self.config.ell_mode)
    }

    pub fn is_ode(&self) -> bool {
        self.config.kind == crate::config::Kind::Ode
    }
}
