//! Shared fixtures for the benchmarks.

use gobi_core::gridworld::{EnvSpec, GridEnv};

pub fn multiroom_fixture(seed: u64) -> GridEnv {
    EnvSpec::MultiRoom {
        n_rooms: 4,
        max_room_size: 6,
    }
    .generate(seed)
    .expect("valid fixture")
}
