use lagrl_autodiff::{clip_grad_norm, AdamWConfig, Graph, MlpParams, OptState, Tensor};
use lagrl_core::mbrl::{
    actor_loss, actuation_matrix, critic_loss, imagine, lambda_return, lambda_return_graph, load_actor, Actor,
    BehaviourConfig, BehaviourLearner, CsvMetrics, Imagination, ImaginedTrajectory, ReplayBuffer, SampleMode,
    TrainConfig, Trainer, Transition,
};
use lagrl_core::models::{Dynamics, ModelConfig, ModelKind, OracleReward, RewardModel, Rewards};
use lagrl_core::parallel::Workers;
use lagrl_core::physics::{Env, EnvSpec, State};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// λ-return as the explicit mixture of n-step returns.
fn brute_lambda_return(r: &[f64], v: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let big_t = r.len();
    let n_step = |t: usize, n: usize| -> f64 {
        let mut acc = 0.0;
        for k in 0..n {
            acc += gamma.powi(k as i32) * r[t + k];
        }
        acc + gamma.powi(n as i32) * v[t + n]
    };
    let mut out: Vec<f64> = (0..big_t)
        .map(|t| {
            let h = big_t - t;
            let mut mix = 0.0;
            for n in 1..h {
                mix += (1.0 - lambda) * lambda.powi(n as i32 - 1) * n_step(t, n);
            }
            mix + lambda.powi(h as i32 - 1) * n_step(t, h)
        })
        .collect();
    out.push(v[big_t]);
    out
}

#[test]
fn lambda_return_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for case in 0..100 {
        let t = rng.random_range(1..20);
        let r: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..=t).map(|_| rng.random_range(-10.0..10.0)).collect();
        let gamma = rng.random_range(0.5..1.0);
        let lambda = match case % 4 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        };
        let got = lambda_return(&r, &v, gamma, lambda).unwrap();
        let want = brute_lambda_return(&r, &v, gamma, lambda);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "case {case}: {a} vs {b}");
        }
        if lambda == 0.0 {
            for k in 0..t {
                assert!((got[k] - (r[k] + gamma * v[k + 1])).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn graph_lambda_return_agrees() {
    let r = [0.3, -0.2, 0.9];
    let v = [0.0, 1.5, -0.5, 2.0];
    let mut g = Graph::new();
    let rn: Vec<_> = r.iter().map(|&x| g.constant(Tensor::scalar(x))).collect();
    let vn: Vec<_> = v.iter().map(|&x| g.constant(Tensor::scalar(x))).collect();
    let out = lambda_return_graph(&mut g, &rn, &vn, 0.97, 0.8).unwrap();
    let plain = lambda_return(&r, &v, 0.97, 0.8).unwrap();
    for (n, p) in out.iter().zip(&plain) {
        assert!((g.value(*n).item() - p).abs() < 1e-12);
    }
}

struct Setup {
    spec: EnvSpec,
    dynamics: Dynamics,
    rewards: Rewards,
    actor: Actor,
    critic: MlpParams,
    target: MlpParams,
}

fn setup(env: &str, kind: Option<ModelKind>, seed: u64) -> Setup {
    let spec = EnvSpec::preset(env).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        dnn_hidden: vec![16],
        lnn_hidden: vec![16],
        ..ModelConfig::default()
    };
    let dynamics = match kind {
        Some(k) => Dynamics::new(k, &spec, &cfg, &mut rng),
        None => Dynamics::oracle(&spec),
    };
    let rewards = Rewards::Learned(RewardModel::new(spec.state_dim(), &[16], &mut rng));
    let actor = Actor::new(spec.state_dim(), spec.action_dim(), &[16, 16], &mut rng);
    let critic = MlpParams::new(spec.state_dim(), &[16, 1], lagrl_autodiff::Activation::Tanh, &mut rng);
    let target = MlpParams::new(spec.state_dim(), &[16, 1], lagrl_autodiff::Activation::Tanh, &mut rng);
    Setup {
        spec,
        dynamics,
        rewards,
        actor,
        critic,
        target,
    }
}

fn starts(spec: &EnvSpec, rows: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let d = spec.state_dim();
    Tensor::new(rows, d, (0..rows * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Actor loss and its gradient for the given actor parameters.
fn actor_objective(su: &Setup, actor_params: &[Tensor], s0: &Tensor, noise: &[Tensor], eta: f64) -> (f64, Vec<Tensor>) {
    let mut actor = su.actor.clone();
    for (p, v) in actor.net.tensors_mut().into_iter().zip(actor_params) {
        *p = v.clone();
    }
    let mut g = Graph::new();
    let an = actor.net.register(&mut g, true);
    let tn = su.target.register(&mut g, false);
    let dn = su.dynamics.register(&mut g, false);
    let rn = su.rewards.register(&mut g, false);
    let act = g.constant(actuation_matrix(&su.spec));
    let ctx = Imagination {
        spec: &su.spec,
        dynamics: &su.dynamics,
        dyn_nodes: &dn,
        rewards: &su.rewards,
        rew_nodes: &rn,
        actor: &actor,
        actor_nodes: &an,
        target_nodes: &tn,
        actuation: act,
        gamma: 0.99,
        lambda: 0.95,
    };
    let start = g.constant(s0.clone());
    let tr = imagine(&mut g, &ctx, start, noise, noise.len()).unwrap();
    let loss = actor_loss(&mut g, &tr, eta, s0.rows() as f64);
    let grads = g.backward(loss).unwrap();
    (g.value(loss).item(), an.grads(&g, &grads))
}

fn check_bptt_gradient(kind: Option<ModelKind>, env: &str) {
    let su = setup(env, kind, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s0 = starts(&su.spec, 3, &mut rng);
    let noise: Vec<Tensor> = (0..16).map(|_| su.actor.noise(3, &mut rng)).collect();
    let params: Vec<Tensor> = su.actor.net.tensors().into_iter().cloned().collect();
    let (_, analytic) = actor_objective(&su, &params, &s0, &noise, 1e-4);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (pi, base) in params.iter().enumerate() {
        for k in (0..base.len()).step_by((base.len() / 5).max(1)) {
            let mut plus = params.clone();
            plus[pi].data_mut()[k] += h;
            let mut minus = params.clone();
            minus[pi].data_mut()[k] -= h;
            let fd = (actor_objective(&su, &plus, &s0, &noise, 1e-4).0 - actor_objective(&su, &minus, &s0, &noise, 1e-4).0)
                / (2.0 * h);
            let an = analytic[pi].data()[k];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4);
            worst = worst.max(rel);
            assert!(rel < 1e-3, "{env} param {pi}[{k}]: {an} vs {fd}");
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn bptt_actor_gradient_through_oracle_model() {
    check_bptt_gradient(None, "pendulum");
}

#[test]
fn bptt_actor_gradient_through_lnn() {
    check_bptt_gradient(Some(ModelKind::Lnn), "acrobot");
}

#[test]
fn bptt_actor_gradient_through_dnn() {
    check_bptt_gradient(Some(ModelKind::Dnn), "cartpole");
}

#[test]
fn constant_returns_give_zero_actor_gradient() {
    let mut su = setup("pendulum", Some(ModelKind::Dnn), 5);
    if let Rewards::Learned(r) = &mut su.rewards {
        for t in r.net.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let last = r.net.layers.len() - 1;
        r.net.layers[last].bias.data_mut()[0] = 0.7;
    }
    for t in su.target.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s0 = starts(&su.spec, 4, &mut rng);
    let noise: Vec<Tensor> = (0..16).map(|_| su.actor.noise(4, &mut rng)).collect();
    let params: Vec<Tensor> = su.actor.net.tensors().into_iter().cloned().collect();
    let (_, grads) = actor_objective(&su, &params, &s0, &noise, 0.0);
    assert!(grads.iter().all(|t| t.max_abs() == 0.0));
}

fn trajectory(g: &mut Graph, su: &Setup, s0: &Tensor, noise: &[Tensor]) -> (ImaginedTrajectory, lagrl_autodiff::MlpNodes, lagrl_autodiff::MlpNodes, lagrl_autodiff::MlpNodes, Vec<lagrl_autodiff::NodeId>) {
    let an = su.actor.net.register(g, true);
    let cn = su.critic.register(g, true);
    let tn = su.target.register(g, true);
    let dn = su.dynamics.register(g, true);
    let act = g.constant(actuation_matrix(&su.spec));
    let rn = su.rewards.register(g, false);
    let ctx = Imagination {
        spec: &su.spec,
        dynamics: &su.dynamics,
        dyn_nodes: &dn,
        rewards: &su.rewards,
        rew_nodes: &rn,
        actor: &su.actor,
        actor_nodes: &an,
        target_nodes: &tn,
        actuation: act,
        gamma: 0.99,
        lambda: 0.95,
    };
    let start = g.constant(s0.clone());
    let tr = imagine(g, &ctx, start, noise, noise.len()).unwrap();
    (tr, an, cn, tn, dn.ids())
}

#[test]
fn critic_gradients_stay_in_the_critic() {
    let su = setup("acrobot", Some(ModelKind::Lnn), 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s0 = starts(&su.spec, 4, &mut rng);
    let noise: Vec<Tensor> = (0..4).map(|_| su.actor.noise(4, &mut rng)).collect();
    let mut g = Graph::new();
    let (tr, an, cn, tn, dn) = trajectory(&mut g, &su, &s0, &noise);
    let loss = critic_loss(&mut g, &cn, &tr, 4.0).unwrap();
    let grads = g.backward(loss).unwrap();
    let zero = |ids: &[lagrl_autodiff::NodeId]| ids.iter().all(|&id| grads.get(id).is_none_or(|t| t.max_abs() == 0.0));
    assert!(zero(&an.ids()) && zero(&tn.ids()) && zero(&dn));
    assert!(cn.ids().iter().any(|&id| grads.get(id).is_some_and(|t| t.max_abs() > 0.0)));
}

#[test]
fn target_weights_move_critic_loss_only_through_targets() {
    let mut su = setup("pendulum", Some(ModelKind::Dnn), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s0 = starts(&su.spec, 4, &mut rng);
    let noise: Vec<Tensor> = (0..4).map(|_| su.actor.noise(4, &mut rng)).collect();
    let eval = |su: &Setup| {
        let mut g = Graph::new();
        let (tr, _, cn, _, _) = trajectory(&mut g, su, &s0, &noise);
        let l = critic_loss(&mut g, &cn, &tr, 4.0).unwrap();
        g.value(l).item()
    };
    let before = eval(&su);
    su.target.layers[0].weight.data_mut()[0] += 0.5;
    assert_ne!(before, eval(&su));
}

fn tiny_behaviour(spec: &EnvSpec, target_every: u64, seed: u64) -> BehaviourLearner {
    let cfg = BehaviourConfig {
        horizon: 2,
        batch_size: 2,
        actor_hidden: vec![4],
        critic_hidden: vec![4],
        target_every,
        chunks: 1,
        ..BehaviourConfig::default()
    };
    BehaviourLearner::new(spec, cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn target_sync_schedule() {
    let spec = EnvSpec::preset("pendulum").unwrap();
    let mut b = tiny_behaviour(&spec, 100, 0);
    let dynamics = Dynamics::oracle(&spec);
    let rewards = Rewards::Oracle(OracleReward { spec: spec.clone() });
    let w = Workers::sequential();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut prev_target = b.target.clone();
    for k in 1..=1000u64 {
        let s0 = starts(&spec, 2, &mut rng);
        let noise = b.draw_noise(&mut rng);
        b.update(&spec, &dynamics, &rewards, &s0, &noise, &w).unwrap();
        if k % 100 == 0 {
            assert_eq!(b.target, b.critic);
            prev_target = b.target.clone();
        } else {
            assert_eq!(b.target, prev_target);
            assert_ne!(b.target, b.critic);
        }
    }
    assert_eq!(b.syncs, 10);
    assert_eq!(b.updates, 1000);
}

#[test]
fn clipped_norms_respect_the_cap() {
    let spec = EnvSpec::preset("cartpole").unwrap();
    let mut b = tiny_behaviour(&spec, 100, 2);
    b.config.grad_clip = 1e-3;
    let dynamics = Dynamics::oracle(&spec);
    let rewards = Rewards::Oracle(OracleReward { spec: spec.clone() });
    let w = Workers::sequential();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let s0 = starts(&spec, 2, &mut rng);
        let noise = b.draw_noise(&mut rng);
        let st = b.update(&spec, &dynamics, &rewards, &s0, &noise, &w).unwrap();
        assert!(st.actor_grad_norm_clipped <= 1e-3 * (1.0 + 1e-12));
        assert!(st.critic_grad_norm_clipped <= 1e-3 * (1.0 + 1e-12));
        assert!(st.actor_grad_norm > 1e-3);
    }
}

#[test]
fn chunked_gradients_do_not_depend_on_workers() {
    let spec = EnvSpec::preset("acrobot").unwrap();
    let mut cfg = BehaviourConfig {
        horizon: 4,
        batch_size: 8,
        actor_hidden: vec![8],
        critic_hidden: vec![8],
        ..BehaviourConfig::default()
    };
    cfg.chunks = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let b = BehaviourLearner::new(&spec, cfg, &mut rng).unwrap();
    let d = Dynamics::new(ModelKind::Lnn, &spec, &ModelConfig { lnn_hidden: vec![8], ..ModelConfig::default() }, &mut rng);
    let r = Rewards::Oracle(OracleReward { spec: spec.clone() });
    let s0 = starts(&spec, 8, &mut rng);
    let noise = b.draw_noise(&mut rng);
    let one = b.gradients(&spec, &d, &r, &s0, &noise, &Workers::sequential()).unwrap();
    let four = b.gradients(&spec, &d, &r, &s0, &noise, &Workers::new(4)).unwrap();
    assert_eq!(one.0, four.0);
    assert_eq!(one.1, four.1);
    assert_eq!(one.2, four.2);
}

/// Critical value of χ² with 99 degrees of freedom at p = 0.01.
const CHI2_99_P01: f64 = 134.642;

#[test]
fn replay_sampling_is_uniform_and_bounded() {
    let mut buf = ReplayBuffer::new(100, 2, 1, ChaCha8Rng::seed_from_u64(7)).unwrap();
    for i in 0..250 {
        let s = State::new(vec![i as f64], vec![0.0]).unwrap();
        buf.push(&Transition {
            state: s.clone(),
            action: vec![0.0],
            reward: 0.0,
            next_state: s,
        })
        .unwrap();
        assert!(buf.len() <= 100);
    }
    let draws = 100_000;
    let mut counts = [0usize; 100];
    for i in buf.sample_indices(draws).unwrap() {
        counts[i] += 1;
    }
    let expected = draws as f64 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < CHI2_99_P01, "chi2 = {chi2}");
}

#[test]
fn one_step_quadratic_toy_reaches_analytic_optimum() {
    // r = −(a − a*)², zero values, mean actions: the optimum is tanh(μ) = a*.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut actor = Actor::new(2, 1, &[8], &mut rng);
    let mut opt = OptState::new(
        AdamWConfig {
            lr: 1e-2,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        },
        actor.net.tensors(),
    );
    let a_star = 0.3;
    let states = Tensor::new(4, 2, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    for _ in 0..2000 {
        let mut g = Graph::new();
        let an = actor.net.register(&mut g, true);
        let s = g.constant(states.clone());
        let smp = actor.sample(&mut g, &an, s, None).unwrap();
        let d = g.add_scalar(smp.action, -a_star);
        let sq = g.square(d);
        let r = g.neg(sq);
        let zero = g.constant(Tensor::zeros(4, 1));
        let returns = lambda_return_graph(&mut g, &[r], &[zero, zero], 0.99, 0.95).unwrap();
        let tr = ImaginedTrajectory {
            states: vec![s],
            actions: vec![smp.action],
            log_probs: vec![smp.log_prob],
            rewards: vec![r],
            values: vec![zero, zero],
            returns,
            clamped: 0,
        };
        let loss = actor_loss(&mut g, &tr, 0.0, 4.0);
        let grads = g.backward(loss).unwrap();
        let mut gr = an.grads(&g, &grads);
        clip_grad_norm(&mut gr, 100.0);
        opt.adamw_step(&mut actor.net.tensors_mut(), &gr).unwrap();
    }
    for r in 0..4 {
        let (a, _) = actor.act(states.row_slice(r), SampleMode::Mean, &mut rng).unwrap();
        assert!((a[0] - a_star).abs() < 1e-3, "{a:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interaction_actions_stay_open_bounded(s in prop::collection::vec(-50.0f64..50.0, 6), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Actor::new(6, 2, &[16], &mut rng);
        let (a, lp) = actor.act(&s, SampleMode::Stochastic, &mut rng).unwrap();
        prop_assert!(a.iter().all(|v| v.abs() < 1.0 || (v.abs() == 1.0 && lp.is_finite())));
        prop_assert!(lp.is_finite() || a.iter().any(|v| v.abs() == 1.0));
    }
}

fn tiny_config(seed: u64) -> TrainConfig {
    let mut spec = EnvSpec::preset("pendulum").unwrap();
    spec.episode_len = 40;
    TrainConfig {
        env: "pendulum".into(),
        model: ModelKind::Lnn,
        seed,
        random_episodes: 2,
        episodes: 4,
        model_updates: 5,
        behaviour_updates: 3,
        replay_capacity: 1000,
        eval_every: 1,
        eval_episodes: 2,
        physics: Some(spec),
        models: ModelConfig {
            lnn_hidden: vec![8],
            reward_hidden: vec![8],
            batch_size: 16,
            ..ModelConfig::default()
        },
        behaviour: BehaviourConfig {
            horizon: 4,
            batch_size: 8,
            actor_hidden: vec![8],
            critic_hidden: vec![8],
            ..BehaviourConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn metrics_of(cfg: TrainConfig) -> String {
    let mut t = Trainer::new(cfg).unwrap();
    let mut sink = CsvMetrics::new(Vec::new()).unwrap();
    t.run(&mut sink).unwrap();
    String::from_utf8(sink.into_inner()).unwrap()
}

#[test]
fn training_is_deterministic() {
    let a = metrics_of(tiny_config(5));
    let b = metrics_of(tiny_config(5));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 5);
    assert!(a.starts_with("episode,env_steps,return,dyn_loss,rew_loss,actor_loss,critic_loss"));
    let mut par = tiny_config(5);
    par.workers = 3;
    assert_eq!(a, metrics_of(par));
    assert_ne!(a, metrics_of(tiny_config(6)));
}

#[test]
fn random_episodes_fill_replay_before_learning() {
    let cfg = TrainConfig {
        model_updates: 0,
        behaviour_updates: 0,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(cfg).unwrap();
    for _ in 0..10 {
        let m = t.step_episode().unwrap();
        assert!(m.dyn_loss.is_none() && m.actor_loss.is_none());
    }
    assert_eq!(t.replay.len(), 10_000);
    assert_eq!(t.env_steps, 10_000);
}

#[test]
fn checkpoint_restores_the_actor() {
    let mut t = Trainer::new(tiny_config(9)).unwrap();
    for _ in 0..3 {
        t.step_episode().unwrap();
    }
    let ck = t.checkpoint("abc").unwrap();
    let mut bytes = Vec::new();
    ck.write_to(&mut bytes).unwrap();
    let back = lagrl_autodiff::Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
    let actor = load_actor(&back).unwrap();
    let s = [0.3, -0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        actor.act(&s, SampleMode::Mean, &mut rng).unwrap(),
        t.behaviour.actor.act(&s, SampleMode::Mean, &mut rng).unwrap()
    );
    assert_eq!(lagrl_core::mbrl::load_spec(&back).unwrap(), *t.spec());
    let env = Env::new(t.spec().clone()).unwrap();
    assert_eq!(env.spec().episode_len, 40);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = tiny_config(3);
    let text = cfg.to_toml().unwrap();
    assert_eq!(TrainConfig::from_toml(&text).unwrap(), cfg);
    let d = TrainConfig::default();
    assert_eq!(TrainConfig::from_toml(&d.to_toml().unwrap()).unwrap(), d);
    assert!(TrainConfig::from_toml("env = \"pendulum\"\nmodel = \"gru\"\n").is_err());
}
