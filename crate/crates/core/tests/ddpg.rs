use std::sync::Arc;

use lanekeep::ddpg::{train, DdpgAgent, DdpgConfig, TransitionRef};
use lanekeep::env::{Env, EnvConfig};
use lanekeep::geometry::builtin;
use lanekeep::VehicleParams;

#[test]
fn critic_fits_a_single_terminal_transition() {
    let mut agent = DdpgAgent::new(DdpgConfig::default()).unwrap();
    let s = [0.1, -0.2, 0.0, 1.0, 0.0, 0.9, 0.01];
    let batch = [TransitionRef { s: &s, a: 0.3, r: 0.75, s_next: &s, done: true }];
    let mut last = f64::INFINITY;
    let mut steps = 0;
    while steps < 5000 {
        last = agent.critic_update(&batch).unwrap();
        steps += 1;
        if last < 1e-6 {
            break;
        }
    }
    assert!(last < 1e-6, "loss {last} after {steps} updates");
    assert!((agent.q_value(&s, 0.3).unwrap() - 0.75).abs() < 1e-2);
}

#[test]
fn critic_tracks_bootstrapped_target() {
    // with a frozen target network the fitted value is r + gamma * Q'(s', mu'(s'))
    let mut agent = DdpgAgent::new(DdpgConfig { gamma: 0.9, ..DdpgConfig::default() }).unwrap();
    let s = [0.0; 7];
    let s2 = [0.2, 0.1, 0.0, 1.0, 0.0, 0.9, 0.0];
    let batch = [TransitionRef { s: &s, a: -0.1, r: 0.5, s_next: &s2, done: false }];
    let target = agent.critic_target(&batch).unwrap()[0];
    for _ in 0..5000 {
        agent.critic_update(&batch).unwrap();
    }
    assert_eq!(agent.critic_target(&batch).unwrap()[0], target);
    assert!((agent.q_value(&s, -0.1).unwrap() - target).abs() < 1e-3);
}

fn short_run(seed: u64) -> (Vec<f64>, u32) {
    let cfg = DdpgConfig { seed, warmup: 200, batch_size: 16, hidden: [16, 16], ..DdpgConfig::default() };
    let mut agent = DdpgAgent::new(cfg).unwrap();
    let env_cfg = EnvConfig { seed, max_steps: 300, ..EnvConfig::default() };
    let mut env = Env::new(Arc::new(builtin("oval").unwrap()), env_cfg, VehicleParams::default()).unwrap();
    let log = train(&mut agent, &mut env, 1500, |_| {}).unwrap();
    (log.episodes.iter().map(|e| e.cumulative_reward).collect(), agent.actor.checksum())
}

#[test]
fn short_training_is_reproducible() {
    let a = short_run(5);
    assert_eq!(a, short_run(5));
    assert_ne!(a.1, short_run(6).1);
}
