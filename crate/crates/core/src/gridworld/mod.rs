//! Procedurally generated, partially observable grid environments.

mod cell;
mod env;
mod generate;
mod position;
mod spec;

use std::fmt::Debug;
use std::hash::Hash;

pub use cell::{object_id, Cell, CellKind, Color, DoorState};
pub use env::{
    success_reward, Action, Direction, GridEnv, Mission, Observation, Panorama, Snapshot,
    StepResult, NUM_ACTIONS, OBS_BYTES, VIEW,
};
pub use generate::{
    generate_keycorridor, generate_multiroom, keycorridor_max_steps, multiroom_max_steps,
    MULTIROOM_MAX_SIDE,
};
pub use position::{Move, PositionWorld};
pub use spec::EnvSpec;

use crate::hashing::HashCode;

/// A deterministic simulator whose full state can be copied, compared and
/// stepped. Oracle dynamics and exhaustive reachability search run on this.
pub trait Simulator: Clone + Eq + Hash {
    type Action: Copy + Eq + Hash + Debug + 'static;

    fn action_set(&self) -> &'static [Self::Action];

    /// Hash of what the agent observes in this state.
    fn observation_code(&self) -> HashCode;

    fn is_terminal(&self) -> bool;

    /// Applies one action. Only called on non-terminal states.
    fn advance(&mut self, action: Self::Action);
}

impl Simulator for GridEnv {
    type Action = Action;

    fn action_set(&self) -> &'static [Action] {
        &Action::ALL
    }

    fn observation_code(&self) -> HashCode {
        self.observe().code()
    }

    fn is_terminal(&self) -> bool {
        self.is_done()
    }

    fn advance(&mut self, action: Action) {
        self.apply(action)
            .expect("advance called on a finished episode");
    }
}

impl Simulator for PositionWorld {
    type Action = Move;

    fn action_set(&self) -> &'static [Move] {
        &Move::ALL
    }

    fn observation_code(&self) -> HashCode {
        PositionWorld::position_code(self.agent_pos())
    }

    fn is_terminal(&self) -> bool {
        false
    }

    fn advance(&mut self, action: Move) {
        self.step(action);
    }
}
