//! Hares pay +1 to a lone hunter; a stag needs two or more hunters on its
//! cell and splits its reward among them. Successful hunters leave the game.

use std::collections::BTreeMap;

use super::grid::{Cell, GridWorld, Object};
use super::{EnvParams, StagHuntParams, HUNT_HARE, HUNT_STAG};

pub(super) fn params(world: &GridWorld) -> StagHuntParams {
    match world.config.params {
        EnvParams::StagHunt(p) => p,
        _ => unreachable!("validated config"),
    }
}

pub(super) fn place_initial(world: &mut GridWorld) {
    let p = params(world);
    world.scatter(Object::Stag, p.n_stags, |_| true);
    world.scatter(Object::Hare, p.n_hares, |_| true);
}

pub(super) fn apply(world: &mut GridWorld, actions: &[usize], rewards: &mut [f64]) {
    let p = params(world);
    let mut stag_hunters: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
    let mut caught = Vec::new();
    let hunters: Vec<usize> = (0..world.positions.len()).filter(|&i| world.active[i]).collect();
    for i in hunters {
        let cell = world.positions[i];
        match (actions[i], world.object_at(cell)) {
            (HUNT_HARE, Some(Object::Hare)) => {
                world.set_object(cell, None);
                world.counters.hares_hunted += 1;
                rewards[i] += p.hare_reward;
                caught.push(i);
            }
            (HUNT_STAG, Some(Object::Stag)) => stag_hunters.entry(cell).or_default().push(i),
            _ => {}
        }
    }
    for (cell, hunters) in stag_hunters {
        if hunters.len() < 2 {
            continue;
        }
        let share = p.stag_reward / hunters.len() as f64;
        for &i in &hunters {
            rewards[i] += share;
        }
        world.set_object(cell, None);
        world.counters.stags_hunted += 1;
        caught.extend(hunters);
    }
    for i in caught {
        world.active[i] = false;
    }
}
