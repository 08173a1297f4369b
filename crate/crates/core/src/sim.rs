//! Ground-truth slotted simulation.
//!
//! Each slot runs in a fixed order:
//!
//! 1. score `sum_i omega_i D_i` for the slot,
//! 2. the scheduler picks an action from the beliefs,
//! 3. scheduled devices holding an undelivered update (`D > d`) transmit,
//! 4. each transmitter succeeds independently with probability `p(#transmitters)`,
//! 5. the base station observes each device's outcome,
//! 6. `D' = d + 1` on success and `D + 1` otherwise,
//! 7. a new update arrives with probability `lambda_i` (`d' = 1`), else `d' = d + 1`,
//! 8. beliefs evolve on the observations.
//!
//! Randomness is consumed in that order: scheduler, success draws in device
//! order, arrival draws in device order.

use rand::Rng;
use rayon::prelude::*;

use crate::belief::{validate_lambda, BeliefTriple, Observation};
use crate::channel::{ChannelParams, SuccessTable};
use crate::drift::ActionSet;
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicySpec};
use crate::rng::{stream_rng, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub n_devices: usize,
    pub channel: ChannelParams,
    pub lambdas: Vec<f64>,
    pub omegas: Vec<f64>,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(
        channel: ChannelParams,
        lambdas: Vec<f64>,
        omegas: Vec<f64>,
        horizon: usize,
        runs: usize,
        seed: u64,
    ) -> Result<Self> {
        let config = Self {
            n_devices: lambdas.len(),
            channel,
            lambdas,
            omegas,
            horizon,
            runs,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    /// `N` identical devices.
    pub fn symmetric(
        n_devices: usize,
        channel: ChannelParams,
        lambda: f64,
        omega: f64,
        horizon: usize,
        runs: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::new(
            channel,
            vec![lambda; n_devices],
            vec![omega; n_devices],
            horizon,
            runs,
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_devices;
        if n == 0 {
            return Err(Error::invalid("n_devices", "need at least one device"));
        }
        if self.channel.antennas() > n {
            return Err(Error::invalid(
                "antennas",
                format!("M = {} exceeds N = {n}", self.channel.antennas()),
            ));
        }
        for (what, v) in [("lambdas", &self.lambdas), ("omegas", &self.omegas)] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        for &l in &self.lambdas {
            validate_lambda(l)?;
        }
        if self.omegas.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("omegas", "weights must be finite and positive"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        if self.runs == 0 {
            return Err(Error::invalid("runs", "must be positive"));
        }
        Ok(())
    }
}

/// Hidden state of one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DeviceTruth {
    /// Age of the newest update in the device buffer.
    pub local_age: u64,
    /// Age of the newest update at the base station.
    pub aoi: u64,
}

impl DeviceTruth {
    pub fn new(local_age: u64, aoi: u64) -> Result<Self> {
        if local_age == 0 || local_age > aoi {
            return Err(Error::invalid(
                "device state",
                format!("need 1 <= d <= D, got d = {local_age}, D = {aoi}"),
            ));
        }
        Ok(Self { local_age, aoi })
    }

    /// The buffer holds an update the base station has not seen.
    #[inline]
    pub fn has_update(&self) -> bool {
        self.aoi > self.local_age
    }
}

/// Everything that evolves during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub truths: Vec<DeviceTruth>,
    pub beliefs: Vec<BeliefTriple>,
    /// 1-based index of the current slot.
    pub slot: usize,
}

impl NetworkState {
    /// Slot-1 state: `D = 2`, `d = 1` if an update arrived right before the
    /// first slot and `2` otherwise, belief `(1, 1, 0)`.
    pub fn initial(lambdas: &[f64], rng: &mut SimRng) -> Self {
        let truths = lambdas
            .iter()
            .map(|&l| DeviceTruth {
                local_age: if rng.gen::<f64>() < l { 1 } else { 2 },
                aoi: 2,
            })
            .collect();
        let beliefs = lambdas
            .iter()
            .map(|&l| BeliefTriple::initial(l).expect("validated lambda"))
            .collect();
        Self {
            truths,
            beliefs,
            slot: 1,
        }
    }

    pub fn custom(truths: Vec<DeviceTruth>, beliefs: Vec<BeliefTriple>) -> Result<Self> {
        if truths.len() != beliefs.len() {
            return Err(Error::LengthMismatch {
                what: "beliefs",
                expected: truths.len(),
                got: beliefs.len(),
            });
        }
        for (t, b) in truths.iter().zip(&beliefs) {
            if t.aoi != b.aoi() {
                return Err(Error::invalid(
                    "beliefs",
                    format!("belief AoI {} differs from true AoI {}", b.aoi(), t.aoi),
                ));
            }
        }
        Ok(Self {
            truths,
            beliefs,
            slot: 1,
        })
    }

    pub fn weighted_aoi(&self, omegas: &[f64]) -> f64 {
        self.truths.iter().zip(omegas).map(|(t, w)| w * t.aoi as f64).sum()
    }
}

/// Picks the devices to poll in a slot.
pub trait Scheduler {
    fn select(&mut self, slot: usize, beliefs: &[BeliefTriple], rng: &mut SimRng) -> ActionSet;
}

impl Scheduler for Policy {
    fn select(&mut self, _slot: usize, beliefs: &[BeliefTriple], rng: &mut SimRng) -> ActionSet {
        Policy::select(self, beliefs, rng)
    }
}

/// Adapts a closure into a [`Scheduler`].
pub struct FnScheduler<F>(pub F);

impl<F> Scheduler for FnScheduler<F>
where
    F: FnMut(usize, &[BeliefTriple], &mut SimRng) -> ActionSet,
{
    fn select(&mut self, slot: usize, beliefs: &[BeliefTriple], rng: &mut SimRng) -> ActionSet {
        (self.0)(slot, beliefs, rng)
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    /// `sum_i omega_i D_i` at the start of the slot.
    pub reward: f64,
    pub action: ActionSet,
    /// Number of scheduled devices that transmitted.
    pub active: usize,
    pub observations: Vec<Observation>,
}

/// Advances `state` by one slot.
pub fn step<S: Scheduler + ?Sized>(
    state: &mut NetworkState,
    table: &SuccessTable,
    lambdas: &[f64],
    omegas: &[f64],
    scheduler: &mut S,
    rng: &mut SimRng,
) -> SlotReport {
    let mut observations = vec![Observation::NotScheduled; state.truths.len()];
    let (reward, action, active) = step_into(state, table, lambdas, omegas, scheduler, rng, &mut observations);
    SlotReport {
        reward,
        action,
        active,
        observations,
    }
}

fn step_into<S: Scheduler + ?Sized>(
    state: &mut NetworkState,
    table: &SuccessTable,
    lambdas: &[f64],
    omegas: &[f64],
    scheduler: &mut S,
    rng: &mut SimRng,
    observations: &mut [Observation],
) -> (f64, ActionSet, usize) {
    let reward = state.weighted_aoi(omegas);
    let action = scheduler.select(state.slot, &state.beliefs, rng);
    let active = action.iter().filter(|&i| state.truths[i].has_update()).count();
    let p = table.get(active);

    observations.iter_mut().for_each(|o| *o = Observation::NotScheduled);
    for i in action.iter() {
        let t = state.truths[i];
        observations[i] = if !t.has_update() {
            Observation::EmptyBuffer
        } else if rng.gen::<f64>() < p {
            Observation::Success(t.local_age as u32)
        } else {
            Observation::Failed
        };
    }
    for (t, obs) in state.truths.iter_mut().zip(observations.iter()) {
        t.aoi = match obs {
            Observation::Success(_) => t.local_age + 1,
            _ => t.aoi + 1,
        };
    }
    for (t, &l) in state.truths.iter_mut().zip(lambdas) {
        t.local_age = if rng.gen::<f64>() < l { 1 } else { t.local_age + 1 };
    }
    for (b, &obs) in state.beliefs.iter_mut().zip(observations.iter()) {
        *b = b
            .evolve(obs)
            .expect("observations are generated from a consistent truth");
    }
    state.slot += 1;
    (reward, action, active)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// `(1/(N T)) sum_t sum_i omega_i D_{t,i}`.
    pub ewsaoi: f64,
    pub per_device_mean_aoi: Vec<f64>,
    /// Delivered updates per slot.
    pub throughput: Vec<f64>,
    /// `(1/N) sum_i omega_i D_{t,i}` per slot, when requested.
    pub aoi_timeseries: Option<Vec<f64>>,
}

/// One run of `config.horizon` slots from the standard initial state.
pub fn run_with<S: Scheduler + ?Sized>(
    config: &NetworkConfig,
    scheduler: &mut S,
    rng: &mut SimRng,
    record_timeseries: bool,
) -> RunResult {
    let state = NetworkState::initial(&config.lambdas, rng);
    run_from(config, state, scheduler, rng, record_timeseries)
}

pub(crate) fn run_from<S: Scheduler + ?Sized>(
    config: &NetworkConfig,
    mut state: NetworkState,
    scheduler: &mut S,
    rng: &mut SimRng,
    record_timeseries: bool,
) -> RunResult {
    let n = config.n_devices;
    let table = config.channel.success_table();
    let mut aoi_sums = vec![0u64; n];
    let mut deliveries = vec![0u64; n];
    let mut observations = vec![Observation::NotScheduled; n];
    let mut series = record_timeseries.then(|| Vec::with_capacity(config.horizon));
    for _ in 0..config.horizon {
        for (s, t) in aoi_sums.iter_mut().zip(&state.truths) {
            *s += t.aoi;
        }
        let (reward, _, _) = step_into(
            &mut state,
            &table,
            &config.lambdas,
            &config.omegas,
            scheduler,
            rng,
            &mut observations,
        );
        for (c, o) in deliveries.iter_mut().zip(&observations) {
            if matches!(o, Observation::Success(_)) {
                *c += 1;
            }
        }
        if let Some(s) = series.as_mut() {
            s.push(reward / n as f64);
        }
    }
    let horizon = config.horizon as f64;
    let weighted: f64 = aoi_sums.iter().zip(&config.omegas).map(|(&s, w)| w * s as f64).sum();
    RunResult {
        ewsaoi: weighted / (n as f64 * horizon),
        per_device_mean_aoi: aoi_sums.iter().map(|&s| s as f64 / horizon).collect(),
        throughput: deliveries.iter().map(|&c| c as f64 / horizon).collect(),
        aoi_timeseries: series,
    }
}

/// Run number `run_index` of a Monte-Carlo batch under `spec`.
pub fn run(config: &NetworkConfig, spec: &PolicySpec, run_index: u64) -> Result<RunResult> {
    config.validate()?;
    let mut policy = Policy::new(spec.clone(), &config.channel, &config.omegas)?;
    let mut rng = stream_rng(config.seed, run_index);
    Ok(run_with(config, &mut policy, &mut rng, false))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub mean: f64,
    /// Standard error of the mean; NaN for a single run.
    pub stderr: f64,
    pub per_run: Vec<f64>,
}

impl MonteCarloSummary {
    pub fn from_samples(per_run: Vec<f64>) -> Self {
        let n = per_run.len();
        let mean = pairwise_sum(&per_run) / n as f64;
        let stderr = if n > 1 {
            let dev: Vec<f64> = per_run.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, stderr, per_run }
    }

    pub fn runs(&self) -> usize {
        self.per_run.len()
    }
}

/// `config.runs` independent runs on the current rayon pool; run `r` uses
/// stream `r` of `config.seed`.
pub fn monte_carlo(config: &NetworkConfig, spec: &PolicySpec) -> Result<MonteCarloSummary> {
    config.validate()?;
    let prototype = Policy::new(spec.clone(), &config.channel, &config.omegas)?;
    let per_run: Vec<f64> = (0..config.runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut policy = prototype.clone();
            let mut rng = stream_rng(config.seed, r);
            run_with(config, &mut policy, &mut rng, false).ewsaoi
        })
        .collect();
    Ok(MonteCarloSummary::from_samples(per_run))
}

/// Sum whose rounding does not depend on how the inputs were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    fn config(n: usize, m: usize, lambda: f64, horizon: usize) -> NetworkConfig {
        let ch = ChannelParams::new(m, 10f64.powf(1.2), 0.04, 1.0).unwrap();
        NetworkConfig::symmetric(n, ch, lambda, 1.0, horizon, 4, 9).unwrap()
    }

    fn spec(kind: PolicyKind) -> PolicySpec {
        PolicySpec::new(kind, None, 1)
    }

    #[test]
    fn single_slot_scores_initial_age() {
        let mut c = config(3, 2, 0.5, 1);
        c.omegas = vec![1.0, 2.0, 0.5];
        let r = run(&c, &spec(PolicyKind::Random), 0).unwrap();
        assert!((r.ewsaoi - 2.0 * 3.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn runs_are_deterministic() {
        let c = config(4, 2, 0.6, 200);
        let a = run(&c, &spec(PolicyKind::Mwa), 3).unwrap();
        let b = run(&c, &spec(PolicyKind::Mwa), 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, run(&c, &spec(PolicyKind::Mwa), 4).unwrap());
    }

    #[test]
    fn empty_buffer_and_success_recursions() {
        struct All;
        impl Scheduler for All {
            fn select(&mut self, _: usize, _: &[BeliefTriple], _: &mut SimRng) -> ActionSet {
                ActionSet::new(vec![0, 1], 2, 2).unwrap()
            }
        }
        let ch = ChannelParams::new(2, 1e12, 0.04, 1.0).unwrap();
        let table = ch.success_table();
        let truths = vec![DeviceTruth::new(3, 3).unwrap(), DeviceTruth::new(3, 5).unwrap()];
        let beliefs = vec![
            BeliefTriple::new(1, 2, 0, 0.5).unwrap(),
            BeliefTriple::new(2, 3, 0, 0.5).unwrap(),
        ];
        let mut state = NetworkState::custom(truths, beliefs).unwrap();
        let mut rng = stream_rng(0, 0);
        let report = step(&mut state, &table, &[0.5, 0.5], &[1.0, 1.0], &mut All, &mut rng);
        assert_eq!(report.active, 1);
        assert_eq!(
            report.observations,
            vec![Observation::EmptyBuffer, Observation::Success(3)]
        );
        assert_eq!(state.truths[0].aoi, 4);
        assert_eq!(state.truths[1].aoi, 4);
        assert_eq!(state.beliefs[0].triple(), (3, 1, 0));
        assert_eq!(state.beliefs[1].triple(), (3, 1, 0));
    }

    #[test]
    fn certain_arrivals_keep_local_age_one() {
        let c = config(3, 1, 1.0, 1);
        let mut rng = stream_rng(1, 0);
        let mut state = NetworkState::initial(&c.lambdas, &mut rng);
        let table = c.channel.success_table();
        let mut policy = Policy::new(spec(PolicyKind::Random), &c.channel, &c.omegas).unwrap();
        for _ in 0..50 {
            step(&mut state, &table, &c.lambdas, &c.omegas, &mut policy, &mut rng);
            assert!(state.truths.iter().all(|t| t.local_age == 1));
        }
    }

    #[test]
    fn state_invariants_hold_along_runs() {
        let c = config(5, 2, 0.3, 1);
        let mut rng = stream_rng(2, 0);
        let mut state = NetworkState::initial(&c.lambdas, &mut rng);
        let table = c.channel.success_table();
        let mut policy = Policy::new(spec(PolicyKind::Random), &c.channel, &c.omegas).unwrap();
        for _ in 0..2000 {
            step(&mut state, &table, &c.lambdas, &c.omegas, &mut policy, &mut rng);
            for (t, b) in state.truths.iter().zip(&state.beliefs) {
                assert!(t.local_age <= t.aoi);
                assert_eq!(t.aoi, b.aoi());
                let pmf = b.pmf(b.support_len()).unwrap();
                assert!(pmf[t.local_age as usize - 1] > 0.0);
            }
        }
    }

    #[test]
    fn monte_carlo_summary() {
        let c = config(4, 2, 0.5, 100);
        let s = monte_carlo(&c, &spec(PolicyKind::Random)).unwrap();
        assert_eq!(s.runs(), 4);
        for (r, v) in s.per_run.iter().enumerate() {
            assert_eq!(*v, run(&c, &spec(PolicyKind::Random), r as u64).unwrap().ewsaoi);
        }
        assert!(s.stderr > 0.0);
        let single = MonteCarloSummary::from_samples(vec![3.0]);
        assert!(single.stderr.is_nan());
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn config_validation() {
        let ch = ChannelParams::new(3, 10.0, 0.04, 1.0).unwrap();
        assert!(NetworkConfig::symmetric(2, ch, 0.5, 1.0, 10, 1, 0).is_err());
        assert!(NetworkConfig::symmetric(4, ch, 0.0, 1.0, 10, 1, 0).is_err());
        assert!(NetworkConfig::symmetric(4, ch, 0.5, 1.0, 0, 1, 0).is_err());
        assert!(NetworkConfig::new(ch, vec![0.5; 4], vec![1.0; 3], 10, 1, 0).is_err());
        assert!(DeviceTruth::new(3, 2).is_err());
    }
}
