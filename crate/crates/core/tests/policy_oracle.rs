use aoisched::bounds::enumerate_actions;
use aoisched::drift::lyapunov_drift;
use aoisched::policy::{ds_schedule, fs_schedule, mwa_schedule};
use aoisched::rng::stream_rng;
use aoisched::{ActionSet, BeliefTriple, ChannelParams, DriftWeights};
use rand::Rng;

fn channel(m: usize, snr_db: f64) -> ChannelParams {
    ChannelParams::new(m, 10f64.powf(snr_db / 10.0), 0.04, 1.0).unwrap()
}

fn random_beliefs(rng: &mut impl Rng, n: usize) -> Vec<BeliefTriple> {
    (0..n)
        .map(|_| {
            let lambda = rng.gen_range(0.05..0.95);
            let u = if rng.gen_bool(0.3) { rng.gen_range(1..6) } else { 0 };
            BeliefTriple::new(rng.gen_range(1..8), rng.gen_range(1..10), u, lambda).unwrap()
        })
        .collect()
}

/// Every feasible action with its drift, in enumeration order.
fn drifts(
    beliefs: &[BeliefTriple],
    weights: &DriftWeights,
    c: &ChannelParams,
    size: Option<usize>,
) -> Vec<(ActionSet, f64)> {
    enumerate_actions(beliefs.len(), c.antennas(), 1 << 20)
        .unwrap()
        .into_iter()
        .filter(|a| size.is_none_or(|k| a.len() == k))
        .map(|a| {
            let d = lyapunov_drift(&a, beliefs, weights, c).unwrap();
            (a, d)
        })
        .collect()
}

fn check(all: &[(ActionSet, f64)], chosen: &ActionSet, what: &str) {
    let best = all.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
    let got = all
        .iter()
        .find(|(a, _)| a == chosen)
        .expect("chosen action is feasible")
        .1;
    assert!(got - best <= 1e-10 * best.abs().max(1.0), "{what}: {got} vs {best}");
    let near: Vec<&ActionSet> = all
        .iter()
        .filter(|(_, d)| d - best <= 1e-9 * best.abs().max(1.0))
        .map(|(a, _)| a)
        .collect();
    if near.len() == 1 {
        assert_eq!(near[0], chosen, "{what}");
    }
}

#[test]
fn ds_matches_brute_force() {
    let mut rng = stream_rng(11, 0);
    for trial in 0..300 {
        let n = rng.gen_range(2..9);
        let m = rng.gen_range(1..=n.min(4));
        let c = channel(m, rng.gen_range(0.0..25.0));
        let beliefs = random_beliefs(&mut rng, n);
        let weights = DriftWeights::new((0..n).map(|_| rng.gen_range(0.2..5.0)).collect()).unwrap();
        let all = drifts(&beliefs, &weights, &c, None);
        let chosen = ds_schedule(&beliefs, &weights, &c, false).unwrap();
        check(&all, &chosen, &format!("trial {trial}"));
    }
}

#[test]
fn fs_matches_brute_force() {
    let mut rng = stream_rng(12, 0);
    for trial in 0..300 {
        let n = rng.gen_range(2..9);
        let m = rng.gen_range(1..=n.min(4));
        let k = rng.gen_range(1..=m);
        let c = channel(m, rng.gen_range(0.0..25.0));
        let beliefs = random_beliefs(&mut rng, n);
        let weights = DriftWeights::new((0..n).map(|_| rng.gen_range(0.2..5.0)).collect()).unwrap();
        let all = drifts(&beliefs, &weights, &c, Some(k));
        let chosen = fs_schedule(&beliefs, &weights, &c, k, false).unwrap();
        assert_eq!(chosen.len(), k);
        check(&all, &chosen, &format!("trial {trial}"));
    }
}

#[test]
fn identical_devices_break_ties_toward_low_indices() {
    let c = channel(3, 20.0);
    let beliefs = vec![BeliefTriple::new(2, 4, 0, 0.5).unwrap(); 7];
    let weights = DriftWeights::uniform(7);
    let ds = ds_schedule(&beliefs, &weights, &c, false).unwrap();
    let k = ds.len();
    assert_eq!(ds.devices(), (0..k).collect::<Vec<_>>().as_slice());
    let fs = fs_schedule(&beliefs, &weights, &c, 2, false).unwrap();
    assert_eq!(fs.devices(), &[0, 1]);
    let mwa = mwa_schedule(&[5; 7], &[1.0; 7], &c).unwrap();
    assert_eq!(mwa.devices()[0], 0);
    assert!(mwa.devices().windows(2).all(|w| w[1] == w[0] + 1));
}
