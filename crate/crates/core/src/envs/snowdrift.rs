//! Removing a snowdrift pays every agent; the remover alone bears a cost.

use super::grid::{GridWorld, Object};
use super::{EnvParams, SnowdriftParams, REMOVE_DRIFT};

pub(super) fn params(world: &GridWorld) -> SnowdriftParams {
    match world.config.params {
        EnvParams::Snowdrift(p) => p,
        _ => unreachable!("validated config"),
    }
}

pub(super) fn place_initial(world: &mut GridWorld) {
    let n = params(world).n_snowdrifts;
    world.scatter(Object::Snowdrift, n, |_| true);
}

pub(super) fn apply(world: &mut GridWorld, actions: &[usize], rewards: &mut [f64]) {
    let p = params(world);
    for i in 0..world.positions.len() {
        let cell = world.positions[i];
        if actions[i] == REMOVE_DRIFT && world.object_at(cell) == Some(Object::Snowdrift) {
            world.set_object(cell, None);
            world.counters.drifts_removed += 1;
            rewards.iter_mut().for_each(|r| *r += p.drift_reward);
            rewards[i] -= p.removal_cost;
        }
    }
}
