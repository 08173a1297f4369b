//! One-slot Lyapunov drift of the weighted AoI, conditioned on the beliefs.
//!
//! With `L(t) = (1/N) sum_i beta_i D_i`, scheduling the set `S` gives
//!
//! ```text
//! drift(S) = (1/N) [ - sum_{i in S} beta_i * c_i(S) * G_i + sum_i beta_i ]
//! ```
//!
//! where `G_i` is the expected age gap of device `i` and `c_i(S)` the success
//! probability of `i` given that it is active, averaged over the activity of
//! the other members of `S` (each active independently with probability
//! `phi_r`).

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::belief::BeliefTriple;
use crate::channel::{ChannelParams, SuccessTable};
use crate::error::{Error, Result};

/// Largest action accepted by the pattern-enumeration routines.
pub const MAX_EXACT_ACTION: usize = 20;

/// Per-device Lyapunov weights `beta_i > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftWeights(Vec<f64>);

impl DriftWeights {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::invalid("beta", "at least one weight is required"));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::invalid(
                "beta",
                format!("weights must be finite and positive, got {b}"),
            ));
        }
        Ok(Self(beta))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|b| b * factor).collect())
    }
}

/// A set of scheduled devices, stored as strictly increasing zero-based indices.
///
/// `Display` numbers devices from 1, e.g. `{1,3}` for indices 0 and 2.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionSet(SmallVec<[usize; 8]>);

impl ActionSet {
    /// Validates `1 <= |devices| <= max_size` and every index `< n_devices`.
    pub fn new(mut devices: Vec<usize>, n_devices: usize, max_size: usize) -> Result<Self> {
        devices.sort_unstable();
        devices.dedup();
        if devices.is_empty() || devices.len() > max_size {
            return Err(Error::invalid(
                "action",
                format!("must schedule between 1 and {max_size} devices, got {}", devices.len()),
            ));
        }
        if let Some(&bad) = devices.iter().find(|&&d| d >= n_devices) {
            return Err(Error::invalid(
                "action",
                format!("device index {bad} out of range 0..{n_devices}"),
            ));
        }
        Ok(Self(devices.into_iter().collect()))
    }

    /// Caller guarantees strictly increasing, non-empty indices.
    pub(crate) fn from_sorted(devices: &[usize]) -> Self {
        debug_assert!(!devices.is_empty());
        debug_assert!(devices.windows(2).all(|w| w[0] < w[1]));
        Self(SmallVec::from_slice(devices))
    }

    pub fn single(device: usize) -> Self {
        Self(smallvec::smallvec![device])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, device: usize) -> bool {
        self.0.binary_search(&device).is_ok()
    }

    pub fn devices(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", d + 1)?;
        }
        f.write_str("}")
    }
}

/// Success probability of `target` given it is active, enumerating every
/// activity pattern of the other scheduled devices.
pub fn conditional_success_prob(
    target: usize,
    action: &ActionSet,
    phis: &[f64],
    channel: &ChannelParams,
) -> Result<f64> {
    let table = channel.success_table();
    conditional_success_enumerated(target, action, phis, &table)
}

pub(crate) fn conditional_success_enumerated(
    target: usize,
    action: &ActionSet,
    phis: &[f64],
    table: &SuccessTable,
) -> Result<f64> {
    if !action.contains(target) {
        return Err(Error::TargetNotScheduled { target });
    }
    if action.len() > MAX_EXACT_ACTION {
        return Err(Error::EnumerationTooLarge {
            size: action.len(),
            limit: MAX_EXACT_ACTION,
        });
    }
    if action.len() > table.antennas() {
        return Err(Error::TooManyActive {
            active: action.len(),
            antennas: table.antennas(),
        });
    }
    if let Some(&bad) = action.devices().iter().find(|&&d| d >= phis.len()) {
        return Err(Error::LengthMismatch {
            what: "phis",
            expected: bad + 1,
            got: phis.len(),
        });
    }
    let others: SmallVec<[f64; 8]> = action.iter().filter(|&d| d != target).map(|d| phis[d]).collect();
    let mut total = 0.0;
    for pattern in 0u32..(1u32 << others.len()) {
        let mut weight = 1.0;
        for (r, phi) in others.iter().enumerate() {
            weight *= if pattern >> r & 1 == 1 { *phi } else { 1.0 - phi };
        }
        total += table.get(pattern.count_ones() as usize + 1) * weight;
    }
    Ok(total)
}

/// Expected one-slot growth of `L(t)` when `action` is scheduled.
pub fn lyapunov_drift(
    action: &ActionSet,
    beliefs: &[BeliefTriple],
    weights: &DriftWeights,
    channel: &ChannelParams,
) -> Result<f64> {
    let n = beliefs.len();
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: n,
            got: weights.len(),
        });
    }
    if let Some(&bad) = action.devices().iter().find(|&&d| d >= n) {
        return Err(Error::invalid(
            "action",
            format!("device index {bad} out of range 0..{n}"),
        ));
    }
    let table = channel.success_table();
    let phis: Vec<f64> = beliefs.iter().map(BeliefTriple::active_probability).collect();
    let beta = weights.as_slice();
    let mut reduction = 0.0;
    for i in action.iter() {
        let c = conditional_success_enumerated(i, action, &phis, &table)?;
        reduction -= beta[i] * c * beliefs[i].expected_age_gap();
    }
    let beta_sum: f64 = beta.iter().sum();
    Ok((reduction + beta_sum) / n as f64)
}

/// Convolves the distribution of a count with one more Bernoulli(`phi`) term.
#[inline]
pub(crate) fn add_bernoulli(dist: &mut [f64], len: usize, phi: f64) {
    // dist[0..len] -> dist[0..=len]
    dist[len] = dist[len - 1] * phi;
    for k in (1..len).rev() {
        dist[k] = dist[k] * (1.0 - phi) + dist[k - 1] * phi;
    }
    dist[0] *= 1.0 - phi;
}

/// Belief snapshot of one slot, reduced to what drift evaluation needs.
///
/// Conditional success probabilities are computed from the Poisson-binomial
/// distribution of the other members' activity, which is the same sum as
/// the pattern enumeration grouped by `|z|`.
#[derive(Debug, Clone)]
pub struct SlotDrift {
    pub(crate) phis: Vec<f64>,
    /// `beta_i * G_i`
    pub(crate) gains: Vec<f64>,
    pub(crate) beta_sum: f64,
    pub(crate) table: SuccessTable,
}

impl SlotDrift {
    pub fn new(beliefs: &[BeliefTriple], weights: &DriftWeights, table: &SuccessTable) -> Result<Self> {
        if weights.len() != beliefs.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: beliefs.len(),
                got: weights.len(),
            });
        }
        let mut snap = Self {
            phis: Vec::with_capacity(beliefs.len()),
            gains: Vec::with_capacity(beliefs.len()),
            beta_sum: 0.0,
            table: table.clone(),
        };
        snap.refresh(beliefs, weights);
        Ok(snap)
    }

    /// Reuses the buffers for a new slot with the same network.
    pub(crate) fn refresh(&mut self, beliefs: &[BeliefTriple], weights: &DriftWeights) {
        self.phis.clear();
        self.gains.clear();
        for (b, beta) in beliefs.iter().zip(weights.as_slice()) {
            self.phis.push(b.active_probability());
            self.gains.push(beta * b.expected_age_gap());
        }
        self.beta_sum = weights.as_slice().iter().sum();
    }

    pub fn n_devices(&self) -> usize {
        self.phis.len()
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// `sum_{i in S} beta_i c_i(S) G_i`.
    pub fn expected_reduction(&self, devices: &[usize]) -> f64 {
        let k = devices.len();
        let mut dist = [0.0f64; 65];
        let mut total = 0.0;
        for (pos, &i) in devices.iter().enumerate() {
            dist[0] = 1.0;
            let mut len = 1;
            for (r, &j) in devices.iter().enumerate() {
                if r != pos {
                    add_bernoulli(&mut dist, len, self.phis[j]);
                    len += 1;
                }
            }
            debug_assert_eq!(len, k);
            let c: f64 = (0..k).map(|a| dist[a] * self.table.get(a + 1)).sum();
            total -= self.gains[i] * c;
        }
        -total
    }

    #[inline]
    pub(crate) fn drift_from_reduction(&self, reduction: f64) -> f64 {
        (-reduction + self.beta_sum) / self.phis.len() as f64
    }

    pub fn drift(&self, action: &ActionSet) -> f64 {
        self.drift_from_reduction(self.expected_reduction(action.devices()))
    }
}
