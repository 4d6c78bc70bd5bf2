mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use coinfer_core::ddpg::{actor_input_gradient, explore_action, MlpParams, OutputActivation, ReplayBuffer, Transition};
use coinfer_core::netgraph::{partition_flops, split_plan, StateVector, STATE_DIM};
use coinfer_core::{run_search, DdpgConfig, Environment};

use common::*;

#[test]
fn shipped_sample_network() {
    let g = load_graph("sample3.json");
    let per: Vec<u64> = g.layers.iter().map(|l| 2 * count_macs(l)).collect();
    assert_eq!(per, vec![589_824, 131_072, 40_960]);
    assert_eq!(g.total_flops(), per.iter().sum::<u64>());
    let split = split_plan(&g, 0);
    let widths: Vec<usize> = g.layers.iter().map(|l| l.out_channels).collect();
    assert_eq!(partition_flops(&g, &split, &widths).unwrap(), (589_824, 131_072 + 40_960));
}

#[test]
fn actor_input_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let actor = MlpParams::random(&[STATE_DIM, 64, 64, 1], OutputActivation::Sigmoid, &mut rng);
        let s: Vec<f64> = (0..STATE_DIM).map(|_| rng.random()).collect();
        let g = actor_input_gradient(&actor, &s).unwrap();
        for i in 0..STATE_DIM {
            let h = 1e-5;
            let mut p = s.clone();
            p[i] += h;
            let mut m = s.clone();
            m[i] -= h;
            let n = (actor.forward(&p).unwrap() - actor.forward(&m).unwrap()) / (2.0 * h);
            let err = (g[i] - n).abs() / g[i].abs().max(n.abs()).max(1e-6);
            assert!(err <= 1e-6, "component {i}: {} vs {n}", g[i]);
        }
    }
}

#[test]
fn exploration_matches_truncated_normal_mean() {
    let (mean, sigma) = (0.5, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let a = explore_action(mean, sigma, 0.001, &mut rng);
        assert!((0.001..=1.0).contains(&a));
        sum += a;
    }
    let std = Normal::new(0.0, 1.0).unwrap();
    let (alpha, beta) = ((0.0 - mean) / sigma, (1.0 - mean) / sigma);
    let analytic = mean + sigma * (std.pdf(alpha) - std.pdf(beta)) / (std.cdf(beta) - std.cdf(alpha));
    assert!((sum / n as f64 - analytic).abs() < 0.01);
}

#[test]
fn replay_keeps_last_capacity() {
    let mut buf = ReplayBuffer::new(5);
    for i in 0..12 {
        buf.push(Transition {
            state: StateVector([i as f64; STATE_DIM]),
            action: 0.5,
            reward: i as f64,
            next_state: StateVector([0.0; STATE_DIM]),
            terminal: false,
        });
        assert!(buf.len() <= 5);
    }
    let kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
    assert_eq!(kept, vec![7.0, 8.0, 9.0, 10.0, 11.0]);
}

#[test]
fn single_episode_search_makes_no_update() {
    let g = load_graph("synthetic4.json");
    let mut env = surrogate_env(&g, 1, 0.5, 0);
    let config = DdpgConfig {
        episodes: 1,
        hidden: 16,
        ..Default::default()
    };
    let r = run_search(&mut env, &config, 0).unwrap();
    assert_eq!(r.total_updates, 0);
    assert_eq!(r.trace.len(), 1);
    assert_eq!(r.best_actions.len(), env.max_layer());
    assert_eq!(r.best_reward, r.trace[0].reward);
}

#[test]
fn state_transmission_only_on_encoder_fc() {
    let g = load_graph("resnet_mini.json");
    let env = surrogate_env(&g, 4, 0.5, 0);
    let layers = env.max_layer();
    let actions = vec![0.5; layers];
    for t in 0..layers {
        let s = env.observe(t, &actions).unwrap();
        assert!(s.is_normalized());
        let d = s.0[StateVector::D];
        if t + 1 == layers {
            assert!((d - 1.0 / 128.0).abs() < 1e-15, "{d}");
        } else {
            assert_eq!(d, 0.0);
        }
    }
}

#[test]
fn same_seed_same_search() {
    let g = load_graph("synthetic4.json");
    let config = DdpgConfig {
        episodes: 15,
        buffer_capacity: 24,
        batch_size: 8,
        hidden: 16,
        ..Default::default()
    };
    let a = run_search(&mut surrogate_env(&g, 1, 0.5, 0), &config, 9).unwrap();
    let b = run_search(&mut surrogate_env(&g, 1, 0.5, 0), &config, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.total_updates > 0);
}
