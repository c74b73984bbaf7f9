//! Two agents, red (0) and blue (1), share one coin at a time. Any pickup
//! pays +1; taking the other agent's colour costs that agent 2.

use rand::Rng;

use super::grid::{GridWorld, Object};

pub const PICKUP_REWARD: f64 = 1.0;
pub const STOLEN_PENALTY: f64 = -2.0;

/// Agent that owns coins of `object`'s colour.
pub fn owner(object: Object) -> Option<usize> {
    match object {
        Object::CoinRed => Some(0),
        Object::CoinBlue => Some(1),
        _ => None,
    }
}

pub fn coin_of(agent: usize) -> Object {
    if agent == 0 {
        Object::CoinRed
    } else {
        Object::CoinBlue
    }
}

pub(super) fn place_initial(world: &mut GridWorld) {
    let colour = if world.rng.gen_bool(0.5) { Object::CoinRed } else { Object::CoinBlue };
    world.scatter(colour, 1, |_| true);
}

pub(super) fn apply(world: &mut GridWorld, rewards: &mut [f64]) {
    let Some(coin_cell) = world.all_cells().find(|&c| owner_at(world, c).is_some()) else {
        return;
    };
    let coin = world.object_at(coin_cell).expect("coin present");
    let Some(picker) = (0..world.positions.len()).find(|&i| world.positions[i] == coin_cell) else {
        return;
    };
    rewards[picker] += PICKUP_REWARD;
    let coin_owner = owner(coin).expect("coin colour");
    if coin_owner == picker {
        world.counters.coins_own += 1;
    } else {
        rewards[coin_owner] += STOLEN_PENALTY;
        world.counters.coins_other += 1;
    }
    world.set_object(coin_cell, None);
    let colour = if world.rng.gen_bool(0.5) { Object::CoinRed } else { Object::CoinBlue };
    let cell = world
        .random_cell_where(|w, c| !w.positions.contains(&c))
        .expect("a 2-agent map always has a free cell");
    world.set_object(cell, Some(colour));
}

fn owner_at(world: &GridWorld, cell: super::Cell) -> Option<usize> {
    world.object_at(cell).and_then(owner)
}
