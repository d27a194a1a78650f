use lagrl_core::diagnostics::{diagnose, energy_residuals, evaluate_policy, Population, WorkRule};
use lagrl_core::mbrl::ZeroPolicy;
use lagrl_core::models::{Dynamics, ModelConfig, ModelKind};
use lagrl_core::parallel::Workers;
use lagrl_core::physics::{Env, State, ENV_NAMES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn driven_path(env: &Env, steps: usize, seed: u64) -> (Vec<State>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = env.reset(&mut rng);
    let mut path = vec![s.clone()];
    let mut taus = Vec::new();
    let mut u = vec![0.0; env.spec().action_dim()];
    for t in 0..steps {
        if t % 10 == 0 {
            u.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let tau = env.actuation_map(&u).unwrap();
        s = env.step_torque(&s, &tau).unwrap().0;
        path.push(s.clone());
        taus.push(tau);
    }
    (path, taus)
}

fn worst_residual(env: &Env, rule: WorkRule, seed: u64) -> f64 {
    let (path, taus) = driven_path(env, 1000, seed);
    let e: Vec<f64> = path.iter().map(|s| env.total_energy(s)).collect();
    energy_residuals(env, &path, &taus, rule, &e)
        .iter()
        .zip(&e[1..])
        .map(|(r, e)| r / e.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn true_energy_balances_exact_work_on_every_env() {
    for name in ENV_NAMES {
        let env = Env::preset(name).unwrap();
        for seed in 0..5 {
            let r = worst_residual(&env, WorkRule::Exact, seed);
            assert!(r < 1e-4, "{name} seed {seed}: {r}");
        }
    }
}

#[test]
fn trapezoidal_work_misses_the_energy_bound() {
    let worst = ENV_NAMES
        .iter()
        .map(|n| worst_residual(&Env::preset(n).unwrap(), WorkRule::Trapezoidal, 3))
        .fold(0.0, f64::max);
    assert!(worst > 1e-4, "{worst}");
}

#[test]
fn unforced_paths_do_no_work() {
    let env = Env::preset("cart2pole").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let starts: Vec<State> = (0..8).map(|_| env.reset(&mut rng)).collect();
    let pop = Population::from_policy(&env, &ZeroPolicy { action_dim: 1 }, starts, 16).unwrap();
    for rule in [WorkRule::Exact, WorkRule::Trapezoidal] {
        let r = diagnose(&Dynamics::oracle(env.spec()), &env, &pop, rule, &Workers::sequential()).unwrap();
        assert!(r.energy_error.mean.iter().all(|&e| e < 1e-6), "{rule:?}");
    }
}

#[test]
fn report_does_not_depend_on_worker_count() {
    let env = Env::preset("acrobot").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = Dynamics::new(ModelKind::Lnn, env.spec(), &ModelConfig::default(), &mut rng);
    let starts: Vec<State> = (0..12).map(|_| env.reset(&mut rng)).collect();
    let pop = Population::random_actions(&env, starts, 16, &mut rng);
    let a = diagnose(&model, &env, &pop, WorkRule::Exact, &Workers::sequential()).unwrap();
    let b = diagnose(&model, &env, &pop, WorkRule::Exact, &Workers::new(3)).unwrap();
    assert_eq!(a, b);
    assert!(a.learned_energy_error.is_some());
    let dnn = Dynamics::new(ModelKind::Dnn, env.spec(), &ModelConfig::default(), &mut rng);
    assert!(diagnose(&dnn, &env, &pop, WorkRule::Exact, &Workers::sequential())
        .unwrap()
        .learned_energy_error
        .is_none());
}

#[test]
fn eval_does_not_depend_on_worker_count() {
    let env = Env::preset("cartpole").unwrap();
    let p = ZeroPolicy { action_dim: 1 };
    let a = evaluate_policy(&env, &p, 4, 9, &Workers::sequential()).unwrap();
    let b = evaluate_policy(&env, &p, 4, 9, &Workers::new(2)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn population_keeps_its_shape(n in 1usize..20, horizon in 1usize..24, seed in 0u64..1000) {
        let env = Env::preset("reacher").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let starts: Vec<State> = (0..n).map(|_| env.reset(&mut rng)).collect();
        let pop = Population::random_actions(&env, starts, horizon, &mut rng);
        prop_assert_eq!(pop.len(), n);
        prop_assert_eq!(pop.horizon(), horizon);
        let torques = pop.torques(&env).unwrap();
        prop_assert!(torques.iter().all(|t| t.len() == horizon));
    }
}
