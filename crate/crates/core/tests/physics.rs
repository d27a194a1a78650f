use lagrl_autodiff::{input_jacobian, wrap_angle, Tensor};
use lagrl_core::algebra::{Algebra, Recorder};
use lagrl_core::physics::{dynamics, Env, State, ENV_NAMES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, n: usize, qmax: f64, vmax: f64) -> State {
    State {
        q: (0..n).map(|_| rng.random_range(-qmax..qmax)).collect(),
        qdot: (0..n).map(|_| rng.random_range(-vmax..vmax)).collect(),
    }
}

/// `∂M/∂q_k` by central differences.
fn dm_dq(env: &Env, q: &[f64], k: usize, h: f64) -> Vec<Vec<f64>> {
    let mut qp = q.to_vec();
    let mut qm = q.to_vec();
    qp[k] += h;
    qm[k] -= h;
    let (mp, mm) = (env.mass_matrix(&qp), env.mass_matrix(&qm));
    mp.iter()
        .zip(&mm)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) / (2.0 * h)).collect())
        .collect()
}

/// `∂/∂q(M q̇) q̇ − ½ ∂/∂q(q̇ᵀ M q̇)` from finite differences of `M`.
fn coriolis_oracle(env: &Env, q: &[f64], qd: &[f64]) -> Vec<f64> {
    let n = q.len();
    let dms: Vec<_> = (0..n).map(|k| dm_dq(env, q, k, 1e-5)).collect();
    (0..n)
        .map(|i| {
            let mut first = 0.0;
            for k in 0..n {
                for j in 0..n {
                    first += dms[k][i][j] * qd[j] * qd[k];
                }
            }
            let mut second = 0.0;
            for a in 0..n {
                for b in 0..n {
                    second += qd[a] * dms[i][a][b] * qd[b];
                }
            }
            first - 0.5 * second
        })
        .collect()
}

#[test]
fn zero_torque_energy_drift_all_envs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in ENV_NAMES {
        let env = Env::preset(name).unwrap();
        let n = env.dof();
        let mut s = random_state(&mut rng, n, 1.0, 1.0);
        let e0 = env.total_energy(&s);
        let tau = vec![0.0; n];
        let mut worst: f64 = 0.0;
        for _ in 0..env.spec().episode_len {
            s = env.step_torque(&s, &tau).unwrap().0;
            worst = worst.max((env.total_energy(&s) - e0).abs());
        }
        assert!(worst < 1e-6, "{name}: drift {worst:e}");
    }
}

#[test]
fn pendulum_drift_against_fine_reference() {
    let env = Env::preset("pendulum").unwrap();
    let mut fine_spec = env.spec().clone();
    fine_spec.dt /= 100.0;
    let fine = Env::new(fine_spec).unwrap();
    let s0 = State::new(vec![2.0], vec![0.5]).unwrap();
    let (mut a, mut b) = (s0.clone(), s0.clone());
    for _ in 0..1000 {
        a = env.step_torque(&a, &[0.0]).unwrap().0;
    }
    for _ in 0..100_000 {
        b = fine.step_torque(&b, &[0.0]).unwrap().0;
    }
    let (ea, eb, e0) = (env.total_energy(&a), fine.total_energy(&b), env.total_energy(&s0));
    assert!((ea - e0).abs() < 1e-6 && (eb - e0).abs() < 1e-6);
    assert!((ea - eb).abs() < 1e-6);
}

#[test]
fn work_energy_residual_under_random_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in ENV_NAMES {
        let env = Env::preset(name).unwrap();
        let mut s = env.reset(&mut rng);
        let e0 = env.total_energy(&s);
        let mut work = 0.0;
        let mut u = vec![0.0; env.spec().action_dim()];
        for t in 0..1000 {
            if t % 10 == 0 {
                u.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
            let tau = env.actuation_map(&u).unwrap();
            let next = env.step_torque(&s, &tau).unwrap().0;
            work += env.step_work(&s, &next, &tau);
            s = next;
            let e = env.total_energy(&s);
            let resid = (e - e0 - work).abs();
            assert!(resid <= 1e-4 * e.abs().max(1.0), "{name} step {t}: {resid:e}");
        }
    }
}

#[test]
fn mass_matrix_symmetric_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in ENV_NAMES {
        let env = Env::preset(name).unwrap();
        let n = env.dof();
        for _ in 0..100_000 {
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let m = env.mass_matrix(&q);
            for i in 0..n {
                for j in 0..n {
                    assert!((m[i][j] - m[j][i]).abs() < 1e-12);
                }
            }
            let ones = vec![1.0; n];
            assert!(lagrl_core::algebra::Reals.spd_solve(&m, &ones).is_some(), "{name} {q:?}");
        }
    }
}

#[test]
fn coriolis_matches_defining_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for name in ENV_NAMES {
        let env = Env::preset(name).unwrap();
        for _ in 0..50 {
            let s = random_state(&mut rng, env.dof(), 3.0, 2.0);
            let got = env.coriolis_term(&s.q, &s.qdot);
            let want = coriolis_oracle(&env, &s.q, &s.qdot);
            let tol = if name == "acrobot" { 1e-8 } else { 1e-6 };
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < tol * (1.0 + b.abs()), "{name}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn mass_matrix_partials_match_input_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in ENV_NAMES {
        let env = Env::preset(name).unwrap();
        let n = env.dof();
        let spec = env.spec().clone();
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let jac = input_jacobian(&Tensor::row(&q), |g, x| {
            let cols: Vec<_> = (0..n).map(|i| g.col(x, i)).collect();
            let m = dynamics::mass_matrix(&mut Recorder::new(g), &spec, &cols);
            let flat: Vec<_> = m.into_iter().flatten().collect();
            Ok(g.concat_cols(&flat))
        })
        .unwrap();
        for k in 0..n {
            let fd = dm_dq(&env, &q, k, 1e-5);
            for i in 0..n {
                for j in 0..n {
                    assert!((jac.get(i * n + j, k) - fd[i][j]).abs() < 1e-8, "{name}");
                }
            }
        }
    }
}

#[test]
fn coriolis_skew_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for name in ENV_NAMES {
        let env = Env::preset(name).unwrap();
        let n = env.dof();
        for _ in 0..50 {
            let s = random_state(&mut rng, n, 3.0, 2.0);
            let dms: Vec<_> = (0..n).map(|k| dm_dq(&env, &s.q, k, 1e-5)).collect();
            let mut qmq = 0.0;
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        qmq += s.qdot[i] * dms[k][i][j] * s.qdot[k] * s.qdot[j];
                    }
                }
            }
            let c = env.coriolis_term(&s.q, &s.qdot);
            let qc: f64 = s.qdot.iter().zip(&c).map(|(a, b)| a * b).sum();
            assert!((qmq - 2.0 * qc).abs() < 1e-8 * (1.0 + qmq.abs()), "{name}");
        }
    }
}

#[test]
fn dynamics_residual_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for name in ENV_NAMES {
        let env = Env::preset(name).unwrap();
        let n = env.dof();
        for _ in 0..100 {
            let s = random_state(&mut rng, n, 3.0, 3.0);
            let tau: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let acc = env.forward_dynamics(&s.q, &s.qdot, &tau).unwrap();
            let m = env.mass_matrix(&s.q);
            let c = env.coriolis_term(&s.q, &s.qdot);
            let g = env.gravity_term(&s.q);
            for i in 0..n {
                let mq: f64 = (0..n).map(|j| m[i][j] * acc[j]).sum();
                assert!((mq + c[i] + g[i] - tau[i]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn reward_monotone_in_pendulum_angle() {
    let env = Env::preset("pendulum").unwrap();
    let mut prev = -1.0;
    for k in 0..=1000 {
        let th = std::f64::consts::PI * k as f64 / 1000.0;
        let r = env.reward(&State::new(vec![th], vec![0.7]).unwrap());
        assert!(r >= prev);
        prev = r;
    }
}

#[test]
fn reacher_target_fixed_and_reset_uniform() {
    let env = Env::preset("reacher").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let goal = env.spec().goal;
    let mut saw_large = false;
    for _ in 0..10_000 {
        let s = env.reset(&mut rng);
        assert_eq!(env.spec().goal, goal);
        assert!(s.q.iter().all(|v| *v > -std::f64::consts::PI && *v <= std::f64::consts::PI));
        saw_large |= s.q[0].abs() > 3.0;
    }
    assert!(saw_large);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wrapping_preserves_dynamics(
        q in prop::collection::vec(-3.1f64..3.1, 3),
        qd in prop::collection::vec(-4.0f64..4.0, 3),
        u in prop::collection::vec(-1.0f64..1.0, 2),
        turns in prop::collection::vec(-2i32..3, 3),
    ) {
        let env = Env::preset("acro3bot").unwrap();
        let s = State::new(q.clone(), qd.clone()).unwrap();
        let shifted = State::new(
            q.iter().zip(&turns).map(|(v, k)| v + 2.0 * std::f64::consts::PI * *k as f64).collect(),
            qd,
        ).unwrap();
        let tau = env.actuation_map(&u).unwrap();
        let raw = env.integrate(&s, &tau).unwrap();
        let (a, ra) = env.step_torque(&s, &tau).unwrap();
        let (b, rb) = env.step_torque(&shifted, &tau).unwrap();
        for i in 0..3 {
            prop_assert_eq!(raw.qdot[i], a.qdot[i]);
            prop_assert!((a.qdot[i] - b.qdot[i]).abs() < 1e-9);
            prop_assert_eq!(a.q[i], wrap_angle(raw.q[i]));
            prop_assert!(wrap_angle(a.q[i] - b.q[i]).abs() < 1e-9);
        }
        prop_assert!((ra - rb).abs() < 1e-9);
    }
}

#[test]
fn shipped_env_configs_match_presets() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/envs");
    for name in ENV_NAMES {
        let text = std::fs::read_to_string(dir.join(format!("{name}.toml"))).unwrap();
        let spec = lagrl_core::physics::EnvSpec::from_toml(&text).unwrap();
        assert_eq!(spec, lagrl_core::physics::EnvSpec::preset(name).unwrap());
    }
}
