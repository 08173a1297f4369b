//! Empirical checks of the belief model against raw trajectories.
//!
//! Runs are filtered on what the base station can observe (the belief
//! triple of each device at a given slot), and the hidden local ages of the
//! matching runs are histogrammed per device and jointly.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::belief::BeliefTriple;
use crate::channel::ChannelParams;
use crate::drift::ActionSet;
use crate::error::{Error, Result};
use crate::policy::RandomActions;
use crate::rng::{stream_rng, SimRng};
use crate::sim::{step, DeviceTruth, NetworkState, Scheduler};

pub const DEFAULT_BATCH: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// The simulator's usual slot-1 state.
    Standard,
    Custom(NetworkState),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// Uniform over all feasible actions.
    Random,
    /// `actions[t - 1]` is polled in slot `t`.
    Scripted(Vec<ActionSet>),
}

/// Rejection sampler over runs whose observation summary hits a target.
#[derive(Debug, Clone)]
pub struct ConditionedSampler {
    pub channel: ChannelParams,
    pub lambdas: Vec<f64>,
    pub initial: InitialState,
    pub schedule: Schedule,
    /// Slot at which beliefs are compared and local ages recorded.
    pub observe_slot: usize,
    /// Required `(k, m, u)` per device; `None` leaves a device unconstrained.
    pub targets: Vec<Option<(u32, u32, u32)>>,
    /// Matches to collect.
    pub samples: usize,
    pub max_runs: u64,
    pub seed: u64,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalBelief {
    pub matches: usize,
    pub runs: u64,
    /// `marginals[i][d - 1]`: fraction of matches with `d_i = d`.
    pub marginals: Vec<Vec<f64>>,
    /// Fraction of matches with the local-age vector as key.
    pub joint: BTreeMap<Vec<u32>, f64>,
}

impl EmpiricalBelief {
    pub fn marginal(&self, device: usize, d: u32) -> f64 {
        self.marginals[device].get(d as usize - 1).copied().unwrap_or(0.0)
    }

    pub fn joint(&self, d: &[u32]) -> f64 {
        self.joint.get(d).copied().unwrap_or(0.0)
    }

    /// Half-width of a 3-sigma binomial interval around `p` at this sample size.
    pub fn three_sigma(&self, p: f64) -> f64 {
        3.0 * (p * (1.0 - p) / self.matches as f64).sqrt()
    }
}

struct Scripted<'a>(&'a [ActionSet]);

impl Scheduler for Scripted<'_> {
    fn select(&mut self, slot: usize, _: &[BeliefTriple], _: &mut SimRng) -> ActionSet {
        self.0[slot - 1].clone()
    }
}

struct Uniform<'a>(&'a RandomActions);

impl Scheduler for Uniform<'_> {
    fn select(&mut self, _: usize, _: &[BeliefTriple], rng: &mut SimRng) -> ActionSet {
        self.0.sample(rng)
    }
}

impl ConditionedSampler {
    fn validate(&self) -> Result<()> {
        let n = self.lambdas.len();
        if n == 0 {
            return Err(Error::invalid("lambdas", "need at least one device"));
        }
        if self.targets.len() != n {
            return Err(Error::LengthMismatch {
                what: "targets",
                expected: n,
                got: self.targets.len(),
            });
        }
        if self.observe_slot == 0 {
            return Err(Error::invalid("observe_slot", "slots are numbered from 1"));
        }
        if self.samples == 0 || self.batch == 0 {
            return Err(Error::invalid("samples", "samples and batch size must be positive"));
        }
        if let InitialState::Custom(state) = &self.initial {
            if state.truths.len() != n {
                return Err(Error::LengthMismatch {
                    what: "initial state",
                    expected: n,
                    got: state.truths.len(),
                });
            }
        }
        if let Schedule::Scripted(actions) = &self.schedule {
            if actions.len() + 1 < self.observe_slot {
                return Err(Error::LengthMismatch {
                    what: "scripted schedule",
                    expected: self.observe_slot - 1,
                    got: actions.len(),
                });
            }
            let m = self.channel.antennas();
            if let Some(a) = actions.iter().find(|a| a.len() > m || a.iter().any(|i| i >= n)) {
                return Err(Error::invalid("scripted schedule", format!("action {a} is infeasible")));
            }
        }
        Ok(())
    }

    /// Local ages at `observe_slot` of run `index`, if its beliefs match.
    fn sample_run(&self, index: u64, random: Option<&RandomActions>) -> Option<Vec<u32>> {
        let mut rng = stream_rng(self.seed, index);
        let mut state = match &self.initial {
            InitialState::Standard => NetworkState::initial(&self.lambdas, &mut rng),
            InitialState::Custom(s) => s.clone(),
        };
        let table = self.channel.success_table();
        let omegas = vec![1.0; self.lambdas.len()];
        for _ in 1..self.observe_slot {
            match (&self.schedule, random) {
                (Schedule::Scripted(actions), _) => {
                    step(
                        &mut state,
                        &table,
                        &self.lambdas,
                        &omegas,
                        &mut Scripted(actions),
                        &mut rng,
                    );
                }
                (Schedule::Random, Some(r)) => {
                    step(&mut state, &table, &self.lambdas, &omegas, &mut Uniform(r), &mut rng);
                }
                (Schedule::Random, None) => unreachable!("built in run"),
            }
        }
        let hit = state
            .beliefs
            .iter()
            .zip(&self.targets)
            .all(|(b, t)| t.is_none_or(|t| b.triple() == t));
        hit.then(|| state.truths.iter().map(|t| t.local_age as u32).collect())
    }

    /// Collects exactly `samples` matches, taking the earliest matching runs
    /// so the result does not depend on the worker count.
    pub fn run(&self) -> Result<EmpiricalBelief> {
        self.validate()?;
        let random = match self.schedule {
            Schedule::Random => Some(RandomActions::new(self.lambdas.len(), self.channel.antennas())?),
            Schedule::Scripted(_) => None,
        };
        let mut hits: Vec<Vec<u32>> = Vec::with_capacity(self.samples);
        let mut runs: u64 = 0;
        while hits.len() < self.samples && runs < self.max_runs {
            let end = (runs + self.batch as u64).min(self.max_runs);
            let batch: Vec<Option<Vec<u32>>> = (runs..end)
                .into_par_iter()
                .map(|i| self.sample_run(i, random.as_ref()))
                .collect();
            for (offset, hit) in batch.into_iter().enumerate() {
                if let Some(d) = hit {
                    hits.push(d);
                    if hits.len() == self.samples {
                        runs += offset as u64 + 1;
                        return Ok(histogram(hits, runs));
                    }
                }
            }
            runs = end;
        }
        Err(Error::InsufficientMatches {
            found: hits.len(),
            required: self.samples,
        })
    }
}

fn histogram(hits: Vec<Vec<u32>>, runs: u64) -> EmpiricalBelief {
    let n = hits[0].len();
    let total = hits.len() as f64;
    let mut counts: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut joint: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    for d in &hits {
        for (c, &di) in counts.iter_mut().zip(d) {
            let idx = di as usize - 1;
            if c.len() <= idx {
                c.resize(idx + 1, 0);
            }
            c[idx] += 1;
        }
        *joint.entry(d.clone()).or_default() += 1;
    }
    EmpiricalBelief {
        matches: hits.len(),
        runs,
        marginals: counts
            .into_iter()
            .map(|c| c.into_iter().map(|v| v as f64 / total).collect())
            .collect(),
        joint: joint.into_iter().map(|(k, v)| (k, v as f64 / total)).collect(),
    }
}

/// Conditional local-age distribution of a network under uniform random
/// scheduling, given every device's belief triple at slot `observe_slot`.
pub fn empirical_belief(
    channel: ChannelParams,
    lambdas: Vec<f64>,
    observe_slot: usize,
    targets: Vec<(u32, u32, u32)>,
    samples: usize,
    seed: u64,
    max_runs: u64,
) -> Result<EmpiricalBelief> {
    ConditionedSampler {
        channel,
        lambdas,
        initial: InitialState::Standard,
        schedule: Schedule::Random,
        observe_slot,
        targets: targets.into_iter().map(Some).collect(),
        samples,
        max_runs,
        seed,
        batch: DEFAULT_BATCH,
    }
    .run()
}

/// `max_d |joint(d) - prod_i marginal_i(d_i)|` over `points`.
pub fn independence_check(joint: &BTreeMap<Vec<u32>, f64>, marginals: &[Vec<f64>], points: &[Vec<u32>]) -> f64 {
    points
        .iter()
        .map(|d| {
            let product: f64 = d
                .iter()
                .zip(marginals)
                .map(|(&di, m)| m.get(di as usize - 1).copied().unwrap_or(0.0))
                .product();
            (joint.get(d).copied().unwrap_or(0.0) - product).abs()
        })
        .fold(0.0, f64::max)
}

/// Empirical local-age distribution behind belief `(k, m, u)`.
///
/// One tracked device starts right after a report of local age 1 with the
/// true local age `k`; a single-antenna network with a second, uninvolved
/// device absorbs the slots in which the tracked device is not polled. The
/// script polls the tracked device once (a delivery of `d = k` gives
/// `(k, 1, 0)`), idles for `m - 1` slots, and for `u > 0` polls it once more
/// (a failure gives `(k, m, 1)`) and idles `u - 1` slots. Runs that end in
/// the target triple are exactly those that took this path.
pub fn theta_experiment(
    channel: ChannelParams,
    lambda: f64,
    target: (u32, u32, u32),
    samples: usize,
    seed: u64,
    max_runs: u64,
) -> Result<EmpiricalBelief> {
    let (k, m, u) = target;
    BeliefTriple::new(k, m, u, lambda)?;
    let channel = ChannelParams::new(1, channel.snr(), channel.omega(), channel.gamma_th())?;
    let tracked = ActionSet::single(0);
    let idle = ActionSet::single(1);
    let mut script = vec![tracked.clone()];
    script.extend(std::iter::repeat_n(idle.clone(), m as usize - 1));
    if u > 0 {
        script.push(tracked);
        script.extend(std::iter::repeat_n(idle, u as usize - 1));
    }
    let initial = NetworkState::custom(
        vec![DeviceTruth::new(k as u64, k as u64 + 1)?, DeviceTruth::new(1, 2)?],
        vec![BeliefTriple::new(1, k, 0, lambda)?, BeliefTriple::initial(lambda)?],
    )?;
    let observe_slot = script.len() + 1;
    ConditionedSampler {
        channel,
        lambdas: vec![lambda; 2],
        initial: InitialState::Custom(initial),
        schedule: Schedule::Scripted(script),
        observe_slot,
        targets: vec![Some(target), None],
        samples,
        max_runs,
        seed,
        batch: DEFAULT_BATCH,
    }
    .run()
}
