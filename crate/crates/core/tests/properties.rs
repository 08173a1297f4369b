use aoisched::bounds::enumerate_actions;
use aoisched::drift::lyapunov_drift;
use aoisched::policy::{ds_schedule, fs_schedule, RandomActions};
use aoisched::rng::stream_rng;
use aoisched::{BeliefTriple, ChannelParams, DriftWeights, Observation};
use proptest::prelude::*;

fn channel(m: usize, snr_db: f64) -> ChannelParams {
    ChannelParams::new(m, 10f64.powf(snr_db / 10.0), 0.04, 1.0).unwrap()
}

fn belief() -> impl Strategy<Value = BeliefTriple> {
    (1u32..12, 1u32..12, 0u32..8, 0.01f64..=1.0).prop_map(|(k, m, u, l)| BeliefTriple::new(k, m, u, l).unwrap())
}

fn observation() -> impl Strategy<Value = Observation> {
    prop_oneof![
        Just(Observation::NotScheduled),
        Just(Observation::Failed),
        Just(Observation::EmptyBuffer),
        (1u32..24).prop_map(Observation::Success),
    ]
}

/// `int_x^inf t^(a-1) e^-t dt / (a-1)!` by composite Simpson on a truncated range.
fn upper_gamma_quadrature(a: usize, x: f64) -> f64 {
    let upper = x + 60.0 + 10.0 * a as f64;
    let n = 200_000;
    let h = (upper - x) / n as f64;
    let f = |t: f64| ((a as f64 - 1.0) * t.ln() - t).exp();
    let mut s = f(x) + f(upper);
    for i in 1..n {
        let t = x + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
    }
    let factorial: f64 = (1..a).map(|j| j as f64).product();
    s * h / 3.0 / factorial
}

#[test]
fn success_probability_matches_quadrature() {
    for m in [1, 2, 4, 8] {
        for snr_db in [0.0, 10.0, 20.0] {
            let c = channel(m, snr_db);
            for k in 1..=m {
                let oracle = upper_gamma_quadrature(m - k + 1, c.load_factor());
                let got = c.success_prob(k).unwrap();
                assert!(
                    (got - oracle).abs() < 1e-10,
                    "M={m} K={k} snr={snr_db}: {got} vs {oracle}"
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn pmf_is_normalized(b in belief()) {
        let pmf = b.pmf(b.support_len()).unwrap();
        let total: f64 = pmf.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(pmf.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn gap_matches_pmf(b in belief()) {
        let pmf = b.pmf(b.support_len()).unwrap();
        let mean: f64 = pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        let gap = b.aoi() as f64 - mean;
        prop_assert!((b.expected_age_gap() - gap).abs() < 1e-10 * b.aoi() as f64);
    }

    #[test]
    fn evolution_stays_in_the_belief_space(b in belief(), obs in observation()) {
        if let Ok(next) = b.evolve(obs) {
            let pmf = next.pmf(next.support_len()).unwrap();
            prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let expected_aoi = match obs {
                Observation::Success(d) => d as u64 + 1,
                _ => b.aoi() + 1,
            };
            prop_assert_eq!(next.aoi(), expected_aoi);
        }
    }

    #[test]
    fn deliverable_ages_have_prior_mass(b in belief(), d in 1u32..24) {
        prop_assume!(b.lambda() < 1.0 && b.can_deliver(d));
        let pmf = b.pmf(b.support_len().max(d as usize)).unwrap();
        prop_assert!(pmf[d as usize - 1] > 0.0);
    }

    #[test]
    fn schedule_ignores_beta_scale(
        beliefs in prop::collection::vec(belief(), 2..8),
        seed in 0u64..1000,
        scale in 0.01f64..100.0,
    ) {
        let n = beliefs.len();
        let beliefs: Vec<_> = beliefs
            .into_iter()
            .map(|b| BeliefTriple::new(b.k(), b.m(), b.u(), 0.6).unwrap())
            .collect();
        let weights = DriftWeights::new((0..n).map(|i| 1.0 + ((seed + i as u64) % 7) as f64).collect()).unwrap();
        let c = channel(2.min(n), 15.0);
        let a = ds_schedule(&beliefs, &weights, &c, false).unwrap();
        let b = ds_schedule(&beliefs, &weights.scaled(scale).unwrap(), &c, false).unwrap();
        let da = lyapunov_drift(&a, &beliefs, &weights, &c).unwrap();
        let db = lyapunov_drift(&b, &beliefs, &weights, &c).unwrap();
        prop_assert!((da - db).abs() <= 1e-9 * da.abs().max(1.0));
    }

    #[test]
    fn drift_decomposes_over_members(beliefs in prop::collection::vec(belief(), 1..7), mask in 1u32..64) {
        let n = beliefs.len();
        let c = channel(n.min(3), 10.0);
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).take(c.antennas()).collect();
        prop_assume!(!members.is_empty());
        let action = aoisched::ActionSet::new(members.clone(), n, c.antennas()).unwrap();
        let weights = DriftWeights::uniform(n);
        let drift = lyapunov_drift(&action, &beliefs, &weights, &c).unwrap();
        let phis: Vec<f64> = beliefs.iter().map(BeliefTriple::active_probability).collect();
        let mut reduction = 0.0;
        for &i in &members {
            let s = aoisched::drift::conditional_success_prob(i, &action, &phis, &c).unwrap();
            reduction += s * beliefs[i].expected_age_gap();
        }
        prop_assert!((drift - (n as f64 - reduction) / n as f64).abs() < 1e-12 * (1.0 + reduction));
    }

    #[test]
    fn exhaustive_search_beats_reduced_and_random(
        beliefs in prop::collection::vec(belief(), 3..9),
        seed in any::<u64>(),
    ) {
        let n = beliefs.len();
        let c = channel(3, 12.0);
        let weights = DriftWeights::uniform(n);
        let drift = |a: &aoisched::ActionSet| lyapunov_drift(a, &beliefs, &weights, &c).unwrap();
        let best = drift(&ds_schedule(&beliefs, &weights, &c, false).unwrap());
        let slack = 1e-9 * best.abs().max(1.0);
        prop_assert!(best <= drift(&ds_schedule(&beliefs, &weights, &c, true).unwrap()) + slack);
        let sampler = RandomActions::new(n, 3).unwrap();
        let mut rng = stream_rng(seed, 0);
        for _ in 0..16 {
            prop_assert!(best <= drift(&sampler.sample(&mut rng)) + slack);
        }
        for k in 1..=3 {
            let fixed = drift(&fs_schedule(&beliefs, &weights, &c, k, false).unwrap());
            prop_assert!(best <= fixed + slack);
            prop_assert!(fixed <= drift(&fs_schedule(&beliefs, &weights, &c, k, true).unwrap()) + slack);
        }
    }

    #[test]
    fn random_actions_are_feasible(n in 1usize..12, m in 1usize..6, seed in any::<u64>()) {
        let m = m.min(n);
        let sampler = RandomActions::new(n, m).unwrap();
        let mut rng = stream_rng(seed, 1);
        for _ in 0..32 {
            let a = sampler.sample(&mut rng);
            prop_assert!((1..=m).contains(&a.len()));
            prop_assert!(a.devices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(a.devices().iter().all(|&i| i < n));
        }
        prop_assert_eq!(sampler.action_count(), enumerate_actions(n, m, 1 << 20).unwrap().len() as u128);
    }
}
