use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::LaseError;

fn grid(kind: EnvKind, seed: u64) -> GridWorld {
    GridWorld::new(EnvConfig::preset(kind), seed).unwrap()
}

fn random_actions(rng: &mut ChaCha8Rng, n: usize, n_actions: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n_actions)).collect()
}

/// Window recomputed cell by cell from the public state.
fn naive_observation(world: &GridWorld, agent: usize) -> Vec<f64> {
    let cfg = world.config();
    let (v, n, size) = (cfg.view_size, cfg.n_agents, cfg.map_size as i64);
    let ch = cfg.channels();
    let mut out = vec![0.0; ch * v * v];
    let at = |c: usize, i: usize, j: usize| (c * v + i) * v + j;
    if !world.is_active(agent) {
        for i in 0..v {
            for j in 0..v {
                out[at(ch - 1, i, j)] = 1.0;
            }
        }
        return out;
    }
    let me = world.positions()[agent];
    for i in 0..v {
        for j in 0..v {
            let r = me.row as i64 + i as i64 - (v / 2) as i64;
            let c = me.col as i64 + j as i64 - (v / 2) as i64;
            if r < 0 || c < 0 || r >= size || c >= size {
                out[at(ch - 1, i, j)] = 1.0;
                continue;
            }
            let cell = Cell::new(r as usize, c as usize);
            for k in 0..n {
                if world.is_active(k) && world.positions()[k] == cell {
                    let channel = if cfg.kind == EnvKind::Coingame { 1 - k } else { k };
                    out[at(channel, i, j)] = 1.0;
                }
            }
            let obj_channel = match world.object_at(cell) {
                None => None,
                Some(Object::CoinBlue) => Some(2),
                Some(Object::CoinRed) => Some(3),
                Some(Object::Waste | Object::Hare | Object::Snowdrift) => Some(n),
                Some(Object::Apple | Object::Stag) => Some(n + 1),
            };
            if let Some(c) = obj_channel {
                out[at(c, i, j)] = 1.0;
            }
        }
    }
    out
}

#[test]
fn presets_match_published_sizes() {
    let expect = [
        (EnvKind::Coingame, 5, 2, 100, 5),
        (EnvKind::Cleanup, 8, 4, 100, 5),
        (EnvKind::Ssh, 8, 4, 30, 5),
        (EnvKind::Ssg, 8, 4, 50, 5),
        (EnvKind::CleanupExtn, 12, 8, 150, 7),
        (EnvKind::SsgExtn, 12, 8, 70, 7),
    ];
    for (kind, map, n, len, view) in expect {
        let c = EnvConfig::preset(kind);
        c.validate().unwrap();
        assert_eq!((c.map_size, c.n_agents, c.episode_len, c.view_size), (map, n, len, view), "{kind}");
    }
    let cleanup = EnvConfig::preset(EnvKind::Cleanup);
    assert_eq!(cleanup.channels(), 7);
    assert_eq!(cleanup.observation_width(), 175);
    assert_eq!(EnvConfig::preset(EnvKind::Ssh).channels(), 7);
    assert_eq!(EnvConfig::preset(EnvKind::Ssg).channels(), 6);
    assert_eq!(EnvConfig::preset(EnvKind::Coingame).channels(), 5);
    let EnvParams::Cleanup(p) = cleanup.params else { panic!() };
    assert_eq!(
        (p.apple_respawn_probability, p.waste_spawn_probability, p.threshold_depletion, p.threshold_restoration),
        (0.4, 0.5, 0.5, 0.0)
    );
    let EnvParams::Cleanup(p) = EnvConfig::preset(EnvKind::CleanupExtn).params else { panic!() };
    assert_eq!(p.init_waste_count, 16);
    let EnvParams::Snowdrift(p) = EnvConfig::preset(EnvKind::SsgExtn).params else { panic!() };
    assert_eq!(p.n_snowdrifts, 12);
    EnvConfig::preset(EnvKind::Ipd).validate().unwrap();
}

#[test]
fn env_kind_round_trips_through_text() {
    for kind in EnvKind::ALL {
        assert_eq!(kind.to_string().parse::<EnvKind>().unwrap(), kind);
    }
    assert!("harvest".parse::<EnvKind>().is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = EnvConfig::preset(EnvKind::Cleanup);
    c.params = EnvParams::Coin;
    assert!(matches!(c.validate(), Err(LaseError::Config(_))));
    let mut c = EnvConfig::preset(EnvKind::Ssg);
    c.view_size = 4;
    assert!(c.validate().is_err());
    let mut c = EnvConfig::preset(EnvKind::Coingame);
    c.n_agents = 3;
    assert!(c.validate().is_err());
}

#[test]
fn ipd_payoffs_and_state() {
    let g = crate::matrix_dynamics::GameParams::ipd();
    assert_eq!(ipd_payoff(&g, COOPERATE, COOPERATE).unwrap(), (1.0, 1.0));
    assert_eq!(ipd_payoff(&g, COOPERATE, DEFECT).unwrap(), (-0.2, 1.2));
    assert_eq!(ipd_payoff(&g, DEFECT, DEFECT).unwrap(), (0.0, 0.0));
    assert!(ipd_payoff(&g, 2, 0).is_err());

    let mut env = Env::new(EnvConfig::preset(EnvKind::Ipd), 3).unwrap();
    let obs = env.reset(9);
    assert_eq!(obs[0].data, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    let step = env.step(&[COOPERATE, DEFECT]).unwrap();
    assert_eq!(step.observations[0].data, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
    assert_eq!(step.rewards, vec![-0.2, 1.2]);
    for _ in 1..100 {
        env.step(&[DEFECT, DEFECT]).unwrap();
    }
    assert!(env.step(&[0, 0]).is_err());
}

#[test]
fn ipd_episode_ends_after_len_steps() {
    let mut env = Env::new(EnvConfig::preset(EnvKind::Ipd), 0).unwrap();
    env.reset(0);
    let dones: Vec<bool> = (0..100).map(|_| env.step(&[0, 1]).unwrap().done).collect();
    assert!(dones[..99].iter().all(|d| !d));
    assert!(dones[99]);
}

#[test]
fn coin_pickups_pay_as_described() {
    let mut world = grid(EnvKind::Coingame, 1);
    for cell in world.all_cells().collect::<Vec<_>>() {
        world.set_object(cell, None);
    }
    world.set_position(0, Cell::new(2, 2));
    world.set_position(1, Cell::new(4, 4));
    world.set_object(Cell::new(2, 3), Some(Object::CoinRed));
    let r = world.step(&[RIGHT, UP]).unwrap();
    assert_eq!(r.rewards, vec![1.0, 0.0]);
    assert_eq!(world.count(Object::CoinRed) + world.count(Object::CoinBlue), 1);

    for cell in world.all_cells().collect::<Vec<_>>() {
        world.set_object(cell, None);
    }
    world.set_position(0, Cell::new(0, 0));
    world.set_object(Cell::new(1, 0), Some(Object::CoinBlue));
    let r = world.step(&[DOWN, LEFT]).unwrap();
    assert_eq!(r.rewards, vec![1.0, -2.0]);
    assert_eq!(world.counters().coins_other, 1);
}

#[test]
fn coin_tie_goes_to_one_agent() {
    let mut winners = [0; 2];
    for seed in 0..200 {
        let mut world = grid(EnvKind::Coingame, seed);
        for cell in world.all_cells().collect::<Vec<_>>() {
            world.set_object(cell, None);
        }
        world.set_position(0, Cell::new(2, 1));
        world.set_position(1, Cell::new(2, 3));
        world.set_object(Cell::new(2, 2), Some(Object::CoinRed));
        let r = world.step(&[RIGHT, LEFT]).unwrap();
        assert_ne!(world.positions()[0], world.positions()[1]);
        let picked: Vec<usize> = (0..2).filter(|&i| world.positions()[i] == Cell::new(2, 2)).collect();
        assert_eq!(picked.len(), 1);
        winners[picked[0]] += 1;
        assert_eq!(r.rewards.iter().filter(|&&x| x == 1.0).count(), 1);
    }
    assert!(winners[0] > 50 && winners[1] > 50, "{winners:?}");
}

#[test]
fn coin_game_random_play_is_zero_sum_in_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut world = grid(EnvKind::Coingame, 0);
    let (mut total, mut steps) = (0.0, 0usize);
    for episode in 0..1500 {
        world.reset(episode);
        while !world.is_done() {
            let acts = random_actions(&mut rng, 2, 4);
            let r = world.step(&acts).unwrap();
            assert_eq!(world.count(Object::CoinRed) + world.count(Object::CoinBlue), 1);
            total += r.rewards.iter().sum::<f64>();
            steps += 1;
        }
    }
    assert!(steps >= 100_000);
    let per_step = total / steps as f64;
    assert!(per_step.abs() <= 0.05, "collective reward per step {per_step}");
}

#[test]
fn cleanup_starts_depleted_without_apples() {
    for seed in 0..20 {
        let world = grid(EnvKind::Cleanup, seed);
        let EnvParams::Cleanup(p) = world.config().params else { panic!() };
        assert_eq!(world.count(Object::Waste), 8);
        assert!(world.waste_density() >= p.threshold_depletion);
        assert_eq!(world.count(Object::Apple), 0);
        assert!(world.cells_with(Object::Waste).iter().all(|&c| world.is_river(c)));
        assert_eq!(world.river_cell_count(), 16);
    }
}

#[test]
fn cleanup_without_cleaning_pays_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..30 {
        let mut world = grid(EnvKind::Cleanup, seed);
        let mut total = 0.0;
        while !world.is_done() {
            let acts: Vec<usize> = (0..4).map(|_| [UP, DOWN, LEFT, RIGHT, STAY, PICK][rng.gen_range(0..6)]).collect();
            total += world.step(&acts).unwrap().rewards.iter().sum::<f64>();
            assert_eq!(world.count(Object::Apple), 0);
        }
        assert_eq!(world.timestep(), 100);
        assert_eq!(total, 0.0);
    }
}

#[test]
fn cleaning_restores_apple_growth() {
    let mut world = grid(EnvKind::Cleanup, 5);
    for cell in world.cells_with(Object::Waste) {
        world.set_object(cell, None);
    }
    world.set_position(0, Cell::new(0, 0));
    world.set_object(Cell::new(0, 0), Some(Object::Waste));
    world.step(&[CLEAN, STAY, STAY, STAY]).unwrap();
    assert_eq!(world.counters().waste_cleaned, 1);
    for _ in 0..5 {
        world.step(&[STAY; 4]).unwrap();
    }
    assert!(world.count(Object::Apple) > 0);
    let apple = world.cells_with(Object::Apple)[0];
    assert!(!world.is_river(apple));
}

#[test]
fn picking_an_apple_pays_one() {
    let mut world = grid(EnvKind::Cleanup, 2);
    world.set_position(2, Cell::new(5, 5));
    world.set_object(Cell::new(5, 5), Some(Object::Apple));
    let r = world.step(&[STAY, STAY, PICK, STAY]).unwrap();
    assert_eq!(r.rewards, vec![0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn stag_needs_two_hunters_and_removes_them() {
    let mut world = grid(EnvKind::Ssh, 4);
    let stag = world.cells_with(Object::Stag)[0];
    world.set_position(0, stag);
    let r = world.step(&[HUNT_STAG, STAY, STAY, STAY]).unwrap();
    assert_eq!(r.rewards, vec![0.0; 4]);
    assert_eq!(world.object_at(stag), Some(Object::Stag));

    world.set_position(1, stag);
    let r = world.step(&[HUNT_STAG, HUNT_STAG, STAY, STAY]).unwrap();
    assert_eq!(r.rewards, vec![5.0, 5.0, 0.0, 0.0]);
    assert!(!world.is_active(0) && !world.is_active(1));
    assert_eq!(world.object_at(stag), None);
    let blind = world.observe(0);
    assert_eq!(blind.channel(6).iter().sum::<f64>(), 25.0);
    assert_eq!(blind.data[..150].iter().sum::<f64>(), 0.0);
}

#[test]
fn hare_pays_one_and_ends_when_everyone_left() {
    let mut world = grid(EnvKind::Ssh, 8);
    let hares = world.cells_with(Object::Hare);
    for (i, &h) in hares.iter().enumerate() {
        world.set_position(i, h);
    }
    let r = world.step(&[HUNT_HARE; 4]).unwrap();
    assert_eq!(r.rewards, vec![1.0; 4]);
    assert!(r.done);
    assert_eq!(world.counters().hares_hunted, 4);
}

#[test]
fn agents_can_stack_on_a_stag() {
    let mut world = grid(EnvKind::Ssh, 11);
    let stag = world.cells_with(Object::Stag)[0];
    world.set_position(0, stag);
    let neighbour = [UP, DOWN, LEFT, RIGHT]
        .into_iter()
        .map(|a| (a, stag.moved(a, 8)))
        .find(|&(_, c)| c != stag && world.object_at(c).is_none() && !world.positions().contains(&c))
        .unwrap();
    world.set_position(1, neighbour.1);
    let back = match neighbour.0 {
        UP => DOWN,
        DOWN => UP,
        LEFT => RIGHT,
        _ => LEFT,
    };
    world.step(&[STAY, back, STAY, STAY]).unwrap();
    assert_eq!(world.positions()[1], stag);
}

#[test]
fn snowdrift_removal_pays_the_group() {
    let mut world = grid(EnvKind::Ssg, 6);
    let drift = world.cells_with(Object::Snowdrift)[0];
    world.set_position(3, drift);
    let r = world.step(&[STAY, STAY, STAY, REMOVE_DRIFT]).unwrap();
    assert_eq!(r.rewards, vec![6.0, 6.0, 6.0, 2.0]);
    assert_eq!(world.count(Object::Snowdrift), 5);
}

#[test]
fn corner_view_masks_sixteen_cells() {
    let mut world = grid(EnvKind::Cleanup, 0);
    world.set_position(0, Cell::new(0, 0));
    let obs = world.observe(0);
    assert_eq!(obs.channel(6).iter().sum::<f64>(), 16.0);
    assert_eq!(naive_observation(&world, 0), obs.data);
    world.set_position(0, Cell::new(7, 7));
    assert_eq!(world.observe(0).channel(6).iter().sum::<f64>(), 16.0);
}

#[test]
fn own_channel_marks_the_centre() {
    let mut world = grid(EnvKind::Ssg, 1);
    world.set_position(2, Cell::new(4, 4));
    let others: Vec<Cell> = [Cell::new(0, 0), Cell::new(0, 7), Cell::new(7, 0)].to_vec();
    for (k, c) in [0, 1, 3].into_iter().zip(others) {
        world.set_position(k, c);
    }
    let obs = world.observe(2);
    assert_eq!(obs.channel(2).iter().sum::<f64>(), 1.0);
    assert_eq!(obs.get(2, 2, 2), 1.0);
    assert_eq!(obs.channel(5).iter().sum::<f64>(), 0.0);
}

#[test]
fn malformed_actions_are_contract_errors() {
    let mut world = grid(EnvKind::Ssg, 0);
    assert!(matches!(world.step(&[0, 0, 0]), Err(LaseError::Contract(_))));
    assert!(matches!(world.step(&[0, 0, 0, 9]), Err(LaseError::Contract(_))));
}

#[test]
fn same_seed_and_actions_replay_identically() {
    for kind in [EnvKind::Coingame, EnvKind::Cleanup, EnvKind::Ssh, EnvKind::Ssg, EnvKind::CleanupExtn] {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let mut env = Env::new(EnvConfig::preset(kind), 0).unwrap();
            let mut trace = Vec::new();
            env.reset(77);
            loop {
                let acts = random_actions(&mut rng, env.config().n_agents, kind.action_count());
                let r = env.step(&acts).unwrap();
                trace.push((r.rewards.clone(), r.observations.iter().map(|o| o.data.clone()).collect::<Vec<_>>()));
                if r.done {
                    break;
                }
            }
            trace
        };
        assert_eq!(run(), run(), "{kind}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn observations_match_brute_force(kind_idx in 0usize..6, seed in 0u64..10_000, steps in 0usize..40) {
        let kind = [EnvKind::Coingame, EnvKind::Cleanup, EnvKind::Ssh, EnvKind::Ssg, EnvKind::CleanupExtn, EnvKind::SsgExtn][kind_idx];
        let mut world = grid(kind, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..steps {
            if world.is_done() { break; }
            let acts = random_actions(&mut rng, world.config().n_agents, kind.action_count());
            world.step(&acts).unwrap();
        }
        let n = world.config().n_agents;
        for agent in 0..n {
            let obs = world.observe(agent);
            prop_assert!(obs.data.iter().all(|&x| x == 0.0 || x == 1.0));
            let agent_channels = if kind == EnvKind::Coingame { 2 } else { n };
            for ch in 0..agent_channels {
                prop_assert!(obs.channel(ch).iter().sum::<f64>() <= 1.0);
            }
            prop_assert_eq!(naive_observation(&world, agent), obs.data);
        }
    }

    #[test]
    fn agents_never_share_a_plain_cell(kind_idx in 0usize..4, seed in 0u64..10_000) {
        let kind = [EnvKind::Coingame, EnvKind::Cleanup, EnvKind::Ssg, EnvKind::SsgExtn][kind_idx];
        let mut world = grid(kind, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while !world.is_done() {
            let acts = random_actions(&mut rng, world.config().n_agents, kind.action_count());
            world.step(&acts).unwrap();
            let mut seen = world.positions().to_vec();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), world.config().n_agents);
        }
    }

    #[test]
    fn snowdrift_group_reward_is_twenty_per_drift(seed in 0u64..10_000) {
        let mut world = grid(EnvKind::Ssg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        while !world.is_done() {
            // Bias towards removal so drifts actually get cleared.
            let acts: Vec<usize> = (0..4).map(|_| if rng.gen_bool(0.4) { REMOVE_DRIFT } else { rng.gen_range(0..5) }).collect();
            total += world.step(&acts).unwrap().rewards.iter().sum::<f64>();
        }
        prop_assert_eq!(total, 20.0 * world.counters().drifts_removed as f64);
    }

    #[test]
    fn stag_hunt_group_reward_is_capped(seed in 0u64..10_000) {
        let mut world = grid(EnvKind::Ssh, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        while !world.is_done() {
            let acts: Vec<usize> = (0..4).map(|_| if rng.gen_bool(0.5) { 5 + rng.gen_range(0..2) } else { rng.gen_range(0..5) }).collect();
            total += world.step(&acts).unwrap().rewards.iter().sum::<f64>();
        }
        prop_assert!(total <= 10.0 * 2.0 + 4.0);
    }

    #[test]
    fn no_apple_growth_at_or_above_depletion(density in 0.0f64..=1.0) {
        let p = CleanupParams::default();
        let prob = apple_spawn_probability(&p, density);
        if density >= p.threshold_depletion {
            prop_assert_eq!(prob, 0.0);
        } else {
            prop_assert!(prob > 0.0 && prob <= p.apple_respawn_probability);
            prop_assert!((prob - 0.4 * (1.0 - density / 0.5)).abs() < 1e-12);
        }
    }
}
