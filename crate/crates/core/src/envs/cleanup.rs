//! Waste accumulates in the river; apples grow in the orchard at a rate that
//! falls linearly to zero as waste density reaches the depletion threshold.

use rand::Rng;

use super::grid::{Cell, GridWorld, Object};
use super::{CleanupParams, EnvParams, CLEAN, PICK};

pub const APPLE_REWARD: f64 = 1.0;

pub(super) fn params(world: &GridWorld) -> CleanupParams {
    match world.config.params {
        EnvParams::Cleanup(p) => p,
        _ => unreachable!("validated config"),
    }
}

pub(super) fn is_river(world: &GridWorld, cell: Cell) -> bool {
    cell.row < params(world).river_rows
}

pub(super) fn place_initial(world: &mut GridWorld) {
    let p = params(world);
    world.scatter(Object::Waste, p.init_waste_count, |c| c.row < p.river_rows);
}

/// Per-cell apple growth probability for a waste density.
pub fn apple_spawn_probability(p: &CleanupParams, waste_density: f64) -> f64 {
    if waste_density >= p.threshold_depletion {
        return 0.0;
    }
    let span = p.threshold_depletion - p.threshold_restoration;
    let health = ((p.threshold_depletion - waste_density) / span).clamp(0.0, 1.0);
    p.apple_respawn_probability * health
}

pub(super) fn apply(world: &mut GridWorld, actions: &[usize], rewards: &mut [f64]) {
    for i in 0..world.positions.len() {
        let cell = world.positions[i];
        match (actions[i], world.object_at(cell)) {
            (CLEAN, Some(Object::Waste)) => {
                world.set_object(cell, None);
                world.counters.waste_cleaned += 1;
            }
            (PICK, Some(Object::Apple)) => {
                world.set_object(cell, None);
                world.counters.apples_picked += 1;
                rewards[i] += APPLE_REWARD;
            }
            _ => {}
        }
    }
    spawn(world);
}

fn spawn(world: &mut GridWorld) {
    let p = params(world);
    let growth = apple_spawn_probability(&p, world.waste_density());
    if growth > 0.0 {
        let orchard: Vec<Cell> =
            world.all_cells().filter(|&c| c.row >= p.river_rows && world.object_at(c).is_none()).collect();
        for cell in orchard {
            if world.rng.gen::<f64>() < growth {
                world.set_object(cell, Some(Object::Apple));
            }
        }
    }
    if world.rng.gen::<f64>() < p.waste_spawn_probability {
        if let Some(cell) = world.random_cell_where(|w, c| is_river(w, c) && w.object_at(c).is_none()) {
            world.set_object(cell, Some(Object::Waste));
        }
    }
}

impl GridWorld {
    pub fn river_cell_count(&self) -> usize {
        params(self).river_rows * self.config.map_size
    }

    /// Fraction of river cells holding waste (Cleanup only).
    pub fn waste_density(&self) -> f64 {
        self.count(Object::Waste) as f64 / self.river_cell_count() as f64
    }

    pub fn is_river(&self, cell: Cell) -> bool {
        is_river(self, cell)
    }
}
