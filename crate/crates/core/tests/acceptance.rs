//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always shown.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coinfer_core::compressor::compressed_feature_size;
use coinfer_core::ddpg::{
    actor_loss, critic_loss, soft_update, Agent, CriticSample, MlpParams, OutputActivation, Trainer, Transition,
};
use coinfer_core::latency::{dominated_flags, latency_breakdown};
use coinfer_core::netgraph::{LayerDescriptor, Padding, StateVector, STATE_DIM};
use coinfer_core::{
    episode_reward, grid_search_reference, layer_flops, prune_filters, run_search, AutoencoderSpec, DdpgConfig,
    DeploymentProfile, Environment, FilterBank, GridSpec, PlanCost,
};

use common::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

// 1 ------------------------------------------------------------------------

fn reward_algebra() -> Outcome {
    let start = Instant::now();
    let r = |k, n, p, b| episode_reward(k, n, p, b).map_err(|e| e.to_string());

    let all_one = r(1.0, 1.0, 1.0, 1.0)?;
    ensure((all_one.reward - 1.0).abs() <= 1e-12, || format!("R(1,1,1,1) = {}", all_one.reward))?;

    let t = r(1.0, 0.0, 1.0, 1.0)?;
    let exact = exact_reward(Ratio::new(1, 1), Ratio::new(0, 1), Ratio::new(1, 1), Ratio::new(1, 1)).to_f64();
    ensure(t.r1 == 0.0 && (t.r2 - 1.0).abs() <= 1e-12 && t.r3 == 0.0, || format!("terms {t:?}"))?;
    ensure((t.reward - exact).abs() <= 1e-9 && (t.reward - 1.0 / 3.0).abs() <= 1e-12, || {
        format!("R = {} vs {exact}", t.reward)
    })?;

    let t = r(0.92, 0.5, 0.8, 0.5)?;
    let exact = exact_reward(Ratio::new(92, 100), Ratio::new(1, 2), Ratio::new(4, 5), Ratio::new(1, 2)).to_f64();
    ensure((t.reward - exact).abs() <= 1e-9, || format!("R = {} vs exact {exact}", t.reward))?;
    ensure((t.reward - 0.6038).abs() < 5e-5, || format!("R = {} not ≈ 0.6038", t.reward))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 10_000;
    for i in 0..cases {
        let (k, n, p, b): (f64, f64, f64, f64) = (rng.random(), rng.random(), rng.random(), rng.random());
        let base = r(k, n, p, b)?.reward;
        ensure((0.0..=1.0).contains(&base), || format!("case {i}: R = {base} outside [0, 1]"))?;
        if n > 0.0 && p > 0.0 {
            let k2 = k + (1.0 - k) * rng.random::<f64>().max(1e-3);
            if k2 > k {
                let higher = r(k2, n, p, b)?.reward;
                ensure(higher > base, || format!("case {i}: R({k2}) = {higher} <= R({k}) = {base}"))?;
            }
        }
        let fwd = r(k, n, p, 1.0)?.reward;
        let swapped = r(k, p, n, 1.0)?.reward;
        ensure(fwd == swapped, || format!("case {i}: ν↔ρ asymmetry {fwd} vs {swapped}"))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("3 examples, {cases} random cases, {:?}", start.elapsed()))
}

// 2 ------------------------------------------------------------------------

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// ReLU on/off pattern of every hidden unit, from the documented flat layout.
fn relu_pattern(net: &MlpParams, x: &[f64]) -> Vec<bool> {
    let sizes = net.sizes();
    let p = net.params();
    let mut input = x.to_vec();
    let mut pattern = Vec::new();
    let mut off = 0;
    for l in 0..sizes.len() - 2 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let mut next = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let mut z = p[off + n_in * n_out + o];
            for i in 0..n_in {
                z += p[off + o * n_in + i] * input[i];
            }
            pattern.push(z > 0.0);
            next.push(z.max(0.0));
        }
        off += n_in * n_out + n_out;
        input = next;
    }
    pattern
}

/// A few weights and one bias from every layer.
fn stratified_coords(net: &MlpParams, per_layer: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let sizes = net.sizes();
    let mut coords = Vec::new();
    let mut off = 0;
    for w in sizes.windows(2) {
        let nw = w[0] * w[1];
        for _ in 0..per_layer {
            coords.push(off + rng.random_range(0..nw));
        }
        coords.push(off + nw + rng.random_range(0..w[1]));
        off += nw + w[1];
    }
    coords
}

/// Central difference of `loss` in coordinate `i` of `net`, or `None` when
/// the ±step crosses a ReLU kink for one of `inputs`.
fn central_diff<F>(net: &mut MlpParams, i: usize, inputs: &[Vec<f64>], loss: F) -> Option<f64>
where
    F: Fn(&MlpParams) -> f64,
{
    let orig = net.params()[i];
    net.params_mut()[i] = orig + FD_STEP;
    let plus = loss(net);
    let pat_plus: Vec<Vec<bool>> = inputs.iter().map(|x| relu_pattern(net, x)).collect();
    net.params_mut()[i] = orig - FD_STEP;
    let minus = loss(net);
    let pat_minus: Vec<Vec<bool>> = inputs.iter().map(|x| relu_pattern(net, x)).collect();
    net.params_mut()[i] = orig;
    (pat_plus == pat_minus).then(|| (plus - minus) / (2.0 * FD_STEP))
}

fn random_state(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..STATE_DIM).map(|_| rng.random::<f64>()).collect()
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let h = DdpgConfig::default().hidden;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut worst: f64 = 0.0;
    for draw in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + draw);
        let mut actor = MlpParams::random(&[STATE_DIM, h, h, 1], OutputActivation::Sigmoid, &mut rng);
        let mut critic = MlpParams::random(&[STATE_DIM + 1, h, h, 1], OutputActivation::Linear, &mut rng);
        let states: Vec<Vec<f64>> = (0..4).map(|_| random_state(&mut rng)).collect();
        let actions: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let targets: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let critic_inputs: Vec<Vec<f64>> = states
            .iter()
            .zip(&actions)
            .map(|(s, &a)| s.iter().copied().chain([a]).collect())
            .collect();

        // critic regression loss
        let samples: Vec<CriticSample<'_>> = states
            .iter()
            .zip(&actions)
            .zip(&targets)
            .map(|((s, &a), &y)| CriticSample {
                state: s,
                action: a,
                target: y,
            })
            .collect();
        let mut g = vec![0.0; critic.num_params()];
        critic_loss(&critic, &samples, Some(&mut g)).map_err(|e| e.to_string())?;
        for i in stratified_coords(&critic, 3, &mut rng) {
            let fd = central_diff(&mut critic, i, &critic_inputs, |c| critic_loss(c, &samples, None).unwrap());
            match fd {
                Some(n) => {
                    let e = rel_err(g[i], n);
                    worst = worst.max(e);
                    ensure(e <= FD_TOL, || format!("critic draw {draw} coord {i}: {} vs {n}", g[i]))?;
                    checked += 1;
                }
                None => skipped += 1,
            }
        }

        // actor output alone: ∂μ/∂θ
        let s0 = &states[0];
        let mut cache = coinfer_core::ddpg::ForwardCache::default();
        actor.forward_cached(s0, &mut cache).map_err(|e| e.to_string())?;
        let mut g = vec![0.0; actor.num_params()];
        actor.backward(&cache, 1.0, Some(&mut g), None);
        for i in stratified_coords(&actor, 3, &mut rng) {
            match central_diff(&mut actor, i, std::slice::from_ref(s0), |a| a.forward(s0).unwrap()) {
                Some(n) => {
                    let e = rel_err(g[i], n);
                    worst = worst.max(e);
                    ensure(e <= FD_TOL, || format!("actor draw {draw} coord {i}: {} vs {n}", g[i]))?;
                    checked += 1;
                }
                None => skipped += 1,
            }
        }

        // actor loss through the critic: −mean Q(s, μ(s))
        let state_refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
        let mut g = vec![0.0; actor.num_params()];
        actor_loss(&actor, &critic, &state_refs, Some(&mut g)).map_err(|e| e.to_string())?;
        for i in stratified_coords(&actor, 3, &mut rng) {
            let orig = actor.params()[i];
            let kinks = |a: &MlpParams| -> Vec<Vec<bool>> {
                state_refs
                    .iter()
                    .map(|s| {
                        let mu = a.forward(s).unwrap();
                        let x: Vec<f64> = s.iter().copied().chain([mu]).collect();
                        let mut p = relu_pattern(a, s);
                        p.extend(relu_pattern(&critic, &x));
                        p
                    })
                    .collect()
            };
            actor.params_mut()[i] = orig + FD_STEP;
            let plus = actor_loss(&actor, &critic, &state_refs, None).unwrap();
            let kp = kinks(&actor);
            actor.params_mut()[i] = orig - FD_STEP;
            let minus = actor_loss(&actor, &critic, &state_refs, None).unwrap();
            let km = kinks(&actor);
            actor.params_mut()[i] = orig;
            if kp != km {
                skipped += 1;
                continue;
            }
            let n = (plus - minus) / (2.0 * FD_STEP);
            let e = rel_err(g[i], n);
            worst = worst.max(e);
            ensure(e <= FD_TOL, || format!("actor loss draw {draw} coord {i}: {} vs {n}", g[i]))?;
            checked += 1;
        }
    }
    ensure(skipped * 100 <= checked, || format!("{skipped} kink skips out of {checked} checks"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "{checked} coordinates over 100 draws, worst rel. err {worst:.2e}, {skipped} kink skips, {:?}",
        start.elapsed()
    ))
}

// 3 ------------------------------------------------------------------------

fn pruning_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tie_banks = 0;
    for b in 0..1000 {
        let out = rng.random_range(1..=64usize);
        let inc = rng.random_range(1..=8usize);
        let k = [1usize, 3][rng.random_range(0..2)];
        let per = inc * k * k;
        let mut weights: Vec<f64> = match b % 3 {
            // coarse values: many equal norms
            0 => (0..out * per).map(|_| rng.random_range(-2i32..=2) as f64 * 0.5).collect(),
            _ => (0..out * per).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        if b % 4 == 1 && out > 1 {
            // copy whole filters
            for _ in 0..out / 2 {
                let (src, dst) = (rng.random_range(0..out), rng.random_range(0..out));
                let f: Vec<f64> = weights[src * per..(src + 1) * per].to_vec();
                weights[dst * per..(dst + 1) * per].copy_from_slice(&f);
            }
        }
        let a = if rng.random_bool(0.3) {
            rng.random_range(1..=out) as f64 / out as f64
        } else {
            rng.random_range(0.0..1.0f64).max(1e-3)
        };
        let bank = FilterBank::new(b, out, inc, k, weights.clone()).map_err(|e| e.to_string())?;
        let mut norms = bank.l1_norms().to_vec();
        norms.sort_by(f64::total_cmp);
        if norms.windows(2).any(|w| w[0] == w[1]) {
            tie_banks += 1;
        }
        let got = prune_filters(&bank, a).map_err(|e| e.to_string())?;
        let want = brute_force_top_n(&weights, per, expected_keep(a, out));
        ensure(got == want, || format!("bank {b} (out {out}, a {a}): {got:?} vs {want:?}"))?;
    }
    ensure(tie_banks >= 100, || format!("only {tie_banks} banks with duplicated norms"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("1000 banks ({tie_banks} with duplicated norms), {:?}", start.elapsed()))
}

// 4 ------------------------------------------------------------------------

fn flops_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut convs = 0;
    for i in 0..200 {
        let layer = if rng.random_bool(0.7) {
            convs += 1;
            let k = [1usize, 3, 5, 7][rng.random_range(0..4)];
            let mut l = LayerDescriptor::conv(
                0,
                k,
                rng.random_range(1..=3),
                rng.random_range(1..=16),
                rng.random_range(1..=16),
                rng.random_range(k..=24),
            );
            if rng.random_bool(0.5) {
                l.padding = Padding::Valid;
            }
            l
        } else {
            LayerDescriptor::fc(0, rng.random_range(1..=512), rng.random_range(1..=64))
        };
        let want = 2 * count_macs(&layer);
        let got = layer_flops(&layer);
        ensure(got == want, || format!("shape {i} {layer:?}: {got} vs {want}"))?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("200 shapes ({convs} conv), {:?}", start.elapsed()))
}

// 5 ------------------------------------------------------------------------

fn autoencoder_arithmetic() -> Outcome {
    let spec = AutoencoderSpec::for_feature(256, 16, 16).map_err(|e| e.to_string())?;
    ensure(spec.fc_out == 512 && spec.feature_elements() == 65_536, || format!("{spec:?}"))?;
    let mut exact = 0;
    let mut rounded = 0;
    for c in (8..=512).step_by(8) {
        for h in (2..=64).step_by(2) {
            let spec = AutoencoderSpec::for_feature(c, h, h).map_err(|e| e.to_string())?;
            let omega = c * h * h;
            let w = compressed_feature_size(spec.fc_out, 1.0);
            ensure(spec.conv_out_channels * 8 == c && spec.conv_out_spatial * 2 == h, || {
                format!("({c},{h},{h}): conv stage {spec:?}")
            })?;
            if omega % 128 == 0 {
                ensure(w * 128 == omega, || format!("({c},{h},{h}): ω = {w}, Ω/128 = {}", omega / 128))?;
                exact += 1;
            } else {
                // the fc stage cannot emit a fractional element
                ensure(w == omega.div_ceil(128), || format!("({c},{h},{h}): ω = {w}"))?;
                rounded += 1;
            }
        }
    }
    Ok(format!(
        "{exact} shapes with ω = Ω/128 exactly; {rounded} shapes with Ω not divisible by 128 give ⌈Ω/128⌉"
    ))
}

// 6 ------------------------------------------------------------------------

fn search_quality() -> Outcome {
    let start = Instant::now();
    let graph = load_graph("synthetic4.json");
    let beta = 0.5;
    let mut grid_env = surrogate_env(&graph, 1, beta, 0);
    ensure(grid_env.max_layer() == 4, || format!("{} prunable layers", grid_env.max_layer()))?;
    let reference = grid_search_reference(&mut grid_env, &GridSpec::tenths(), 1_000_000).map_err(|e| e.to_string())?;
    let r_star = reference.reward;

    // capacity 400 puts the warm-up (266 transitions) inside the episode budget
    let learning = DdpgConfig {
        episodes: 300,
        buffer_capacity: 400,
        ..Default::default()
    };
    let defaults = DdpgConfig {
        episodes: 300,
        ..Default::default()
    };
    let mut ratios = Vec::new();
    let mut default_ratios = Vec::new();
    for seed in 0..3u64 {
        let mut env = surrogate_env(&graph, 1, beta, 0);
        let r = run_search(&mut env, &learning, seed).map_err(|e| e.to_string())?;
        ensure(r.total_updates > 0, || format!("seed {seed}: no updates"))?;
        ratios.push(r.best_reward / r_star);
        let mut env = surrogate_env(&graph, 1, beta, 0);
        let r = run_search(&mut env, &defaults, seed).map_err(|e| e.to_string())?;
        default_ratios.push(r.best_reward / r_star);
    }
    let passing = ratios.iter().filter(|&&q| q >= 0.95).count();
    let fmt = |v: &[f64]| v.iter().map(|q| format!("{q:.4}")).collect::<Vec<_>>().join(", ");
    ensure(passing >= 2, || format!("R_opt/R* = [{}]", fmt(&ratios)))?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "R* = {r_star:.6}; R_opt/R* = [{}] (default capacity, no warm-up reached: [{}]), {:?}",
        fmt(&ratios),
        fmt(&default_ratios),
        start.elapsed()
    ))
}

// 7 ------------------------------------------------------------------------

fn algorithm_fidelity() -> Outcome {
    let graph = load_graph("synthetic4.json");
    let config = DdpgConfig {
        episodes: 40,
        buffer_capacity: 30,
        batch_size: 8,
        hidden: 32,
        ..Default::default()
    };
    let warmup = config.warmup();
    ensure(warmup == 20, || format!("warm-up {warmup}"))?;
    let mut env = surrogate_env(&graph, 1, 0.5, 0);
    let layers = env.max_layer();
    let mut trainer = Trainer::new(config.clone(), 7);
    let initial_actor_target = trainer.agent().actor_target.clone();
    let mut pushes = 0usize;
    let mut prev_best = f64::NEG_INFINITY;
    let mut running_max: f64 = 0.0;
    for ep in 0..config.episodes {
        let record = trainer.run_episode(&mut env).map_err(|e| e.to_string())?;
        let before = pushes;
        pushes += layers;
        // updates happen for every push that leaves at least `warmup` stored
        let expected = (before + 1..=pushes).filter(|&n| n.min(config.buffer_capacity) >= warmup).count();
        ensure(record.updates == expected, || {
            format!("episode {ep}: {} updates, expected {expected}", record.updates)
        })?;
        if pushes < warmup {
            ensure(trainer.agent().updates() == 0, || format!("episode {ep}: update before warm-up"))?;
            ensure(trainer.agent().actor_target == initial_actor_target, || {
                format!("episode {ep}: target moved before warm-up")
            })?;
        }
        let r = record.outcome.reward();
        let stored: Vec<&Transition> = trainer.buffer().iter().collect();
        let mine = &stored[stored.len() - layers..];
        ensure(mine.iter().all(|t| t.reward == r), || format!("episode {ep}: reward not broadcast"))?;
        ensure(record.actions.iter().all(|&a| (config.action_floor..=1.0).contains(&a)), || {
            format!("episode {ep}: action outside [floor, 1]")
        })?;
        let row = trainer.trace().last().unwrap();
        running_max = running_max.max(r);
        ensure(row.best_so_far >= prev_best && row.best_so_far == running_max, || {
            format!("episode {ep}: best {} after {prev_best}", row.best_so_far)
        })?;
        prev_best = row.best_so_far;
    }

    // soft update: scalar examples and the blend inside a real update
    let mut online = MlpParams::zeros(&[1, 1, 1], OutputActivation::Linear);
    online.params_mut().fill(1.0);
    let mut target = MlpParams::zeros(&[1, 1, 1], OutputActivation::Linear);
    soft_update(&online, &mut target, 0.01).map_err(|e| e.to_string())?;
    ensure(target.params().iter().all(|&p| p == 0.01), || format!("{:?}", target.params()))?;
    soft_update(&online, &mut target, 0.01).map_err(|e| e.to_string())?;
    let two = 1.0 - 0.99f64 * 0.99;
    ensure(target.params().iter().all(|&p| (p - two).abs() < 1e-15), || format!("{:?}", target.params()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut agent = Agent::new(&config, &mut rng);
    let batch: Vec<Transition> = (0..8)
        .map(|i| Transition {
            state: StateVector(std::array::from_fn(|_| rng.random())),
            action: rng.random(),
            reward: rng.random(),
            next_state: StateVector(std::array::from_fn(|_| rng.random())),
            terminal: i % 4 == 3,
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    for _ in 0..3 {
        let old_target = agent.actor_target.clone();
        let old_critic_target = agent.critic_target.clone();
        agent.update_networks(&refs).map_err(|e| e.to_string())?;
        agent.soft_update_targets().map_err(|e| e.to_string())?;
        for (net, old, new) in [
            (&agent.actor, &old_target, &agent.actor_target),
            (&agent.critic, &old_critic_target, &agent.critic_target),
        ] {
            let ok = net
                .params()
                .iter()
                .zip(old.params())
                .zip(new.params())
                .all(|((&o, &t), &n)| n == 0.01 * o + 0.99 * t);
            ensure(ok, || "target is not τ·online + (1−τ)·target".to_string())?;
        }
    }
    Ok(format!(
        "warm-up at {warmup}, {} updates over {} episodes, broadcast and R_opt trace checked, τ blend exact",
        trainer.agent().updates(),
        config.episodes
    ))
}

// 8 ------------------------------------------------------------------------

fn sign_changes(v: &[f64]) -> usize {
    v.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count()
}

fn latency_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sweep = |lo: f64, hi: f64| -> Vec<f64> {
        (0..50).map(|i| lo * (hi / lo).powf(i as f64 / 49.0)).collect()
    };
    for case in 0..100 {
        let cost = PlanCost {
            device_flops: rng.random_range(1e6..1e10),
            server_flops: rng.random_range(1e6..1e10),
            feature_elements: rng.random_range(1e2..1e6),
        };
        let base = DeploymentProfile::default();
        let checks: [(&str, Box<dyn Fn(f64) -> DeploymentProfile>); 3] = [
            ("rate", Box::new(|v| DeploymentProfile { rate: v, ..base.clone() })),
            ("device", Box::new(|v| DeploymentProfile { device_throughput: v, ..base.clone() })),
            ("server", Box::new(|v| DeploymentProfile { server_throughput: v, ..base.clone() })),
        ];
        for (name, make) in &checks {
            let lat: Vec<f64> = sweep(1e5, 1e13)
                .into_iter()
                .map(|v| latency_breakdown(&cost, &make(v)).total())
                .collect();
            ensure(lat.windows(2).all(|w| w[1] < w[0]), || {
                format!("case {case}: latency not strictly decreasing in {name}")
            })?;
        }
    }

    // device-heavy vs communication-heavy plan: exactly one crossover
    let device_heavy = PlanCost {
        device_flops: 1e9,
        server_flops: 1e8,
        feature_elements: 1e3,
    };
    let comm_heavy = PlanCost {
        device_flops: 1e7,
        server_flops: 1e9,
        feature_elements: 1e6,
    };
    let base = DeploymentProfile::default();
    let diff = |a: &PlanCost, b: &PlanCost, rates: &[f64]| -> Vec<f64> {
        rates
            .iter()
            .map(|&r| {
                let p = base.with_rate(r);
                latency_breakdown(a, &p).total() - latency_breakdown(b, &p).total()
            })
            .collect()
    };
    let rates = sweep(1e5, 1e10);
    let d = diff(&device_heavy, &comm_heavy, &rates);
    ensure(sign_changes(&d) == 1, || format!("{} crossovers", sign_changes(&d)))?;
    ensure(d[0] < 0.0 && d[49] > 0.0, || "device-heavy plan should win at low rates only".into())?;
    for case in 0..1000 {
        let mut plan = || PlanCost {
            device_flops: rng.random_range(0.0..1e10),
            server_flops: rng.random_range(0.0..1e10),
            feature_elements: rng.random_range(0.0..1e6),
        };
        let (a, b) = (plan(), plan());
        let d = diff(&a, &b, &rates);
        ensure(sign_changes(&d) <= 1, || format!("random pair {case}: {} crossovers", sign_changes(&d)))?;
    }

    // dominance filter against the quadratic oracle
    for set in 0..1000 {
        let n = rng.random_range(1..=60);
        let coarse = set % 2 == 0;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                if coarse {
                    (rng.random_range(0..8) as f64, rng.random_range(0..8) as f64)
                } else {
                    (rng.random_range(0.0..1e9), rng.random_range(0.0..1e5))
                }
            })
            .collect();
        let got = dominated_flags(&pts);
        let want = brute_force_dominated(&pts);
        ensure(got == want, || format!("set {set}: {pts:?}"))?;
    }
    Ok("3×100 monotone 50-point sweeps, 1 constructed crossover + 1000 random pairs, 1000 dominance sets".into())
}

// 9 ------------------------------------------------------------------------

fn write_config(dir: &Path, name: &str, split: &str, out: &str) -> std::path::PathBuf {
    let net = data_path("synthetic4.json");
    let cfg = format!(
        r#"{{
  "network": {net:?},
  "split": {split},
  "seed": 11,
  "ddpg": {{"episodes": 25, "buffer_capacity": 48, "batch_size": 16}},
  "output_dir": {out:?}
}}"#,
        net = net.display().to_string(),
        out = dir.join(out).display().to_string(),
    );
    let path = dir.join(name);
    std::fs::write(&path, cfg).unwrap();
    path
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_coinfer"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let search = write_config(dir.path(), &format!("search_{run}.json"), "1", run);
        let frontier = write_config(dir.path(), &format!("frontier_{run}.json"), "\"all\"", run);
        run_cli(&["search", "--config", search.to_str().unwrap()])?;
        run_cli(&["frontier", "--config", frontier.to_str().unwrap()])?;
        files.push(dir.path().join(run));
    }
    for name in ["plan.json", "trace.csv", "frontier.csv"] {
        let a = std::fs::read(files[0].join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read(files[1].join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(!a.is_empty() && a == b, || format!("{name} differs between runs"))?;
    }
    Ok("plan.json, trace.csv, frontier.csv byte-identical across two CLI runs".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("reward algebra", reward_algebra),
        ("gradient correctness", gradient_checks),
        ("pruning oracle equivalence", pruning_equivalence),
        ("FLOPs exactness", flops_exactness),
        ("autoencoder arithmetic", autoencoder_arithmetic),
        ("search quality vs brute force", search_quality),
        ("training-loop fidelity", algorithm_fidelity),
        ("latency properties", latency_properties),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
