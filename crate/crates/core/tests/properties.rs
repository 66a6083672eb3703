mod common;

use polter::analysis::{
    bootstrap_ci, iqm, occupancy, state_visitation_entropy, HistogramBounds, RunMatrix, Statistic,
};
use polter::ddpg::{DdpgAgent, DdpgConfig};
use polter::envs::{
    pointmass_step, sample_categorical, tabular_step, PointMassConfig, PointMassEnv,
    PointMassState, PointMassTask, TabularMdp,
};
use polter::intrinsic::apt_rewards;
use polter::nn::Matrix;
use polter::polter::{polter_action_term, KlMode};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn state_strategy() -> impl Strategy<Value = PointMassState> {
    (
        prop::array::uniform2(-1.0f64..=1.0),
        prop::array::uniform2(-0.6f64..=0.6),
    )
        .prop_map(|(position, velocity)| PointMassState { position, velocity })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pointmass_stays_in_box_and_under_speed_limit(
        start in state_strategy(),
        actions in prop::collection::vec(prop::array::uniform2(-3.0f64..3.0), 1..80),
    ) {
        let cfg = PointMassConfig::default();
        let mut s = start;
        s.velocity = [0.0, 0.0];
        for a in actions {
            s = pointmass_step(&cfg, &s, a).unwrap();
            for i in 0..2 {
                prop_assert!((-1.0..=1.0).contains(&s.position[i]));
            }
            let speed = (s.velocity[0].powi(2) + s.velocity[1].powi(2)).sqrt();
            prop_assert!(speed <= cfg.max_speed * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_action_never_adds_kinetic_energy(start in state_strategy()) {
        let cfg = PointMassConfig::default();
        let energy = |s: &PointMassState| s.velocity[0].powi(2) + s.velocity[1].powi(2);
        let next = pointmass_step(&cfg, &start, [0.0, 0.0]).unwrap();
        prop_assert!(energy(&next) <= energy(&start) + 1e-15);
    }

    #[test]
    fn reward_free_rollouts_earn_nothing(seed in any::<u64>()) {
        let mut env = PointMassEnv::new(PointMassConfig::default(), PointMassTask::RewardFree);
        let mut r = common::rng(seed);
        env.reset(&mut r);
        let mut total = 0.0;
        for _ in 0..50 {
            total += env.step([r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).unwrap().reward;
        }
        prop_assert_eq!(total, 0.0);
    }

    #[test]
    fn iqm_ignores_order_and_respects_dominance(
        mut xs in prop::collection::vec(-100.0f64..100.0, 4..40),
        shift in 0.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let base = iqm(&xs).unwrap();
        let mut r = common::rng(seed);
        for i in (1..xs.len()).rev() {
            xs.swap(i, r.gen_range(0..=i));
        }
        prop_assert!((iqm(&xs).unwrap() - base).abs() < 1e-9);
        let raised: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        prop_assert!(iqm(&raised).unwrap() >= base - 1e-9);
        prop_assert!((iqm(&raised).unwrap() - base - shift).abs() < 1e-9);
    }

    #[test]
    fn upper_bound_never_below_mean_action(
        k in 1usize..6,
        rows in 1usize..8,
        seed in any::<u64>(),
        sigma in 0.05f64..2.0,
    ) {
        let mut r = common::rng(seed);
        let members: Vec<Matrix<f64>> = (0..k).map(|_| common::random_matrix(&mut r, rows, 2, 1.0)).collect();
        let actor = common::random_matrix(&mut r, rows, 2, 1.0);
        let ub = polter_action_term(&members, &actor, sigma, KlMode::UpperBound).unwrap().value;
        let ma = polter_action_term(&members, &actor, sigma, KlMode::MeanAction).unwrap().value;
        prop_assert!(ub >= ma - 1e-12 * ub.abs().max(1.0));
        if k == 1 {
            prop_assert!((ub - ma).abs() <= 1e-12 * ub.abs().max(1.0));
        }
    }

    #[test]
    fn apt_rewards_are_finite_and_floored(
        n in 14usize..40,
        seed in any::<u64>(),
    ) {
        let mut r = common::rng(seed);
        let v: Vec<f32> = (0..n * 4).map(|_| r.gen_range(-1.0f32..1.0)).collect();
        let p = Matrix::from_vec(n, 4, v).unwrap();
        let rewards = apt_rewards(&p, 12, 1e-3).unwrap();
        prop_assert_eq!(rewards.len(), n);
        for x in rewards {
            prop_assert!(x.is_finite());
            prop_assert!(x as f64 >= (1e-3f64).ln() - 1e-6);
        }
    }
}

#[test]
fn tabular_sampling_matches_occupancy_within_three_standard_errors() {
    let mdp = TabularMdp::default_grid();
    let mut r = common::rng(5);
    let pi = common::random_policy(&mut r, mdp.n_states(), mdp.n_actions(), 0.05);
    let rho = occupancy(&mdp, &pi).unwrap().rho;
    // a geometric stopping time turns the discounted occupancy into a sampling law
    let n = 60_000;
    let mut counts = vec![0usize; mdp.n_states()];
    for _ in 0..n {
        let mut s = sample_categorical(mdp.initial(), &mut r);
        while r.gen::<f64>() < mdp.gamma() {
            s = tabular_step(&mdp, &pi, s, &mut r).1;
        }
        counts[s] += 1;
    }
    for (s, (&c, &p)) in counts.iter().zip(&rho).enumerate() {
        let freq = c as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (freq - p).abs() <= 3.0 * se + 1e-12,
            "state {s}: empirical {freq} vs occupancy {p} (se {se})"
        );
    }
}

#[test]
fn uniform_samples_have_near_maximal_entropy() {
    let mut r = common::rng(8);
    let states: Vec<[f64; 2]> = (0..200_000)
        .map(|_| [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])
        .collect();
    let h = state_visitation_entropy(&states, &HistogramBounds::symmetric_unit(2), 16).unwrap();
    let max = (256f64).ln();
    assert!(h <= max + 1e-12);
    // expected plug-in bias is about (bins - 1) / (2n)
    assert!(max - h < 0.005, "entropy {h} vs ln 256 = {max}");
}

#[test]
fn a_deterministic_policy_settles_to_zero_entropy() {
    // constant push into a corner: after the transient every state is the same
    let cfg = PointMassConfig::default();
    let mut s = PointMassState::ORIGIN;
    let mut states = Vec::new();
    for t in 0..600 {
        s = pointmass_step(&cfg, &s, [1.0, 1.0]).unwrap();
        if t >= 400 {
            states.push([s.position[0], s.position[1], s.velocity[0], s.velocity[1]]);
        }
    }
    let v = cfg.max_speed;
    let b = HistogramBounds::new(vec![-1.0, -1.0, -v, -v], vec![1.0, 1.0, v, v]).unwrap();
    assert_eq!(state_visitation_entropy(&states, &b, 16).unwrap(), 0.0);
}

#[test]
fn bootstrap_interval_narrows_with_more_seeds() {
    let normal = Normal::new(0.6, 0.2).unwrap();
    let width = |seeds: usize| {
        let mut r = common::rng(seeds as u64);
        let scores: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..seeds).map(|_| normal.sample(&mut r)).collect())
            .collect();
        let m = RunMatrix::new(
            (0..3).map(|t| format!("t{t}")).collect(),
            (0..seeds).map(|s| s.to_string()).collect(),
            scores,
        )
        .unwrap();
        let ci = bootstrap_ci(&m, Statistic::Iqm, 2000, 0.95, 1).unwrap();
        assert!(ci.ci_low <= ci.point && ci.point <= ci.ci_high);
        ci.ci_high - ci.ci_low
    };
    let (w10, w40) = (width(10), width(40));
    // the width scales roughly like 1/sqrt(seeds): expect about half
    assert!(w40 < 0.75 * w10, "10 seeds {w10}, 40 seeds {w40}");
}

#[test]
fn clipped_exploration_noise_has_the_truncated_moment() {
    let cfg = DdpgConfig {
        hidden: vec![8],
        ..DdpgConfig::default()
    };
    let agent = DdpgAgent::new(4, 2, cfg.clone(), &mut common::rng(0)).unwrap();
    let mut r = common::rng(1);
    let n = 400_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x = agent.exploration_noise(&mut r) as f64;
        assert!(x.abs() <= cfg.noise_clip + 1e-7);
        s1 += x;
        s2 += x * x;
    }
    let var = s2 / n as f64 - (s1 / n as f64).powi(2);

    // E[clamp(X, -c, c)^2] for X ~ N(0, s^2) by Simpson's rule plus the clipped tails
    let (s, c) = (cfg.noise_std, cfg.noise_clip);
    let pdf = |x: f64| (-(x * x) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let m = 20_000;
    let h = 2.0 * c / m as f64;
    let simpson = |f: &dyn Fn(f64) -> f64| {
        (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(-c + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    let inside_mass = simpson(&pdf);
    let inside_second = simpson(&|x| x * x * pdf(x));
    let expected = inside_second + c * c * (1.0 - inside_mass);
    assert!(
        (var.sqrt() - expected.sqrt()).abs() < 2e-3,
        "sample std {} vs {}",
        var.sqrt(),
        expected.sqrt()
    );
}
