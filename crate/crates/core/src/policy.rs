//! Scheduling policies: map a belief snapshot to the set of devices polled
//! in the current slot.
//!
//! * `ds` picks the drift-minimizing set among all sets of at most `M` devices.
//! * `ds-reduced` only considers the prefixes of the devices ranked by
//!   `beta_i * G_i`.
//! * `fs` / `fs-reduced` do the same with the set size pinned to
//!   `n* = argmax_n n * p(n)`; `fs-K` pins it to `K` (`fs-1` is the
//!   single-device max-weight rule).
//! * `mwa` ranks devices by `omega_i * D_i` and ignores local-age beliefs.
//! * `random` draws uniformly over every feasible action.
//!
//! Ties resolve to the lexicographically smallest device sequence.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefTriple;
use crate::channel::{ChannelParams, SuccessTable};
use crate::drift::{add_bernoulli, ActionSet, DriftWeights, SlotDrift, MAX_EXACT_ACTION};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    Ds,
    DsReduced,
    Fs,
    FsReduced,
    FsK(usize),
    Mwa,
    Random,
}

impl PolicyKind {
    pub fn uses_drift(&self) -> bool {
        !matches!(self, PolicyKind::Mwa | PolicyKind::Random)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Ds => f.write_str("ds"),
            PolicyKind::DsReduced => f.write_str("ds-reduced"),
            PolicyKind::Fs => f.write_str("fs"),
            PolicyKind::FsReduced => f.write_str("fs-reduced"),
            PolicyKind::FsK(k) => write!(f, "fs-{k}"),
            PolicyKind::Mwa => f.write_str("mwa"),
            PolicyKind::Random => f.write_str("random"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// Accepts the `Display` names plus `fs-k:K` and `pomw` (= `fs-1`).
    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        let kind = match name.as_str() {
            "ds" => PolicyKind::Ds,
            "ds-reduced" => PolicyKind::DsReduced,
            "fs" => PolicyKind::Fs,
            "fs-reduced" => PolicyKind::FsReduced,
            "mwa" => PolicyKind::Mwa,
            "random" => PolicyKind::Random,
            "pomw" => PolicyKind::FsK(1),
            other => {
                let k = other
                    .strip_prefix("fs-k:")
                    .or_else(|| other.strip_prefix("fs-"))
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0)
                    .ok_or_else(|| Error::invalid("policy", format!("unknown policy `{s}`")))?;
                PolicyKind::FsK(k)
            }
        };
        Ok(kind)
    }
}

/// A policy kind together with its tuned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Required by the drift-based kinds.
    pub weights: Option<DriftWeights>,
    /// `argmax_n n p(n)`; used by the `fs` kinds.
    pub n_star: usize,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, weights: Option<DriftWeights>, n_star: usize) -> Self {
        Self { kind, weights, n_star }
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    pub fn validate(&self, n_devices: usize, channel: &ChannelParams) -> Result<()> {
        let m = channel.antennas();
        if m > n_devices {
            return Err(Error::invalid("antennas", format!("M = {m} exceeds N = {n_devices}")));
        }
        if self.kind.uses_drift() {
            let w = self
                .weights
                .as_ref()
                .ok_or_else(|| Error::invalid("weights", format!("policy {} needs drift weights", self.kind)))?;
            if w.len() != n_devices {
                return Err(Error::LengthMismatch {
                    what: "weights",
                    expected: n_devices,
                    got: w.len(),
                });
            }
        }
        match self.kind {
            PolicyKind::Fs | PolicyKind::FsReduced if !(1..=m).contains(&self.n_star) => Err(Error::invalid(
                "n_star",
                format!("must be in 1..={m}, got {}", self.n_star),
            )),
            PolicyKind::FsK(k) if k > m => Err(Error::invalid(
                "policy",
                format!("fs-{k} schedules more devices than M = {m}"),
            )),
            PolicyKind::Ds if m > MAX_EXACT_ACTION => Err(Error::EnumerationTooLarge {
                size: m,
                limit: MAX_EXACT_ACTION,
            }),
            PolicyKind::Fs if self.n_star > MAX_EXACT_ACTION => Err(Error::EnumerationTooLarge {
                size: self.n_star,
                limit: MAX_EXACT_ACTION,
            }),
            PolicyKind::FsK(k) if k > MAX_EXACT_ACTION => Err(Error::EnumerationTooLarge {
                size: k,
                limit: MAX_EXACT_ACTION,
            }),
            _ => Ok(()),
        }
    }
}

/// `argmax_{n in 1..=M} n p(n)`, ties toward smaller `n`.
pub fn compute_n_star(channel: &ChannelParams) -> usize {
    n_star_from_table(&channel.success_table())
}

pub(crate) fn n_star_from_table(table: &SuccessTable) -> usize {
    let mut best = 1;
    let mut best_val = table.get(1);
    for n in 2..=table.antennas() {
        let v = n as f64 * table.get(n);
        if v > best_val {
            best = n;
            best_val = v;
        }
    }
    best
}

/// Exact search over subsets of `min_size..=max_size` devices for the
/// smallest drift, visiting subsets in lexicographic order and pruning
/// branches whose optimistic reduction cannot beat the incumbent.
struct SubsetSearch<'a> {
    snap: &'a SlotDrift,
    min_size: usize,
    max_size: usize,
    width: usize,
    /// `suffix_top[s * width + t]`: sum of the `t` largest gains in `s..N`.
    suffix_top: &'a [f64],
    /// `suffix_low[s * width + t]`: the `t+1`-th smallest activity probability in `s..N`.
    suffix_low: &'a [f64],
    /// Per depth: the active-count distribution seen by each member
    /// (`max_size` rows of `width`), then that of all members (`width`).
    levels: &'a mut [f64],
    /// Closest lower index with the same activity and gain, if any.
    twin: &'a [usize],
    chosen: Vec<bool>,
    members: Vec<usize>,
    best: Vec<usize>,
    best_reduction: f64,
}

/// Reductions this close (relative) are ties, broken toward the
/// lexicographically smaller set, so rounding noise between equivalent sets
/// never decides the schedule.
const TIE_TOLERANCE: f64 = 1e-12;
const PRUNE_MARGIN: f64 = 4e-12;

fn improves(reduction: f64, set: &[usize], best_reduction: f64, best: &[usize]) -> bool {
    if best.is_empty() {
        return true;
    }
    let tol = TIE_TOLERANCE * best_reduction.abs();
    reduction > best_reduction + tol || (reduction >= best_reduction - tol && set < best)
}

/// Reusable buffers of [`SubsetSearch`].
#[derive(Debug, Clone, Default)]
struct SearchScratch {
    suffix_top: Vec<f64>,
    suffix_low: Vec<f64>,
    levels: Vec<f64>,
    order: Vec<usize>,
    candidate: Vec<usize>,
    twin: Vec<usize>,
}

impl<'a> SubsetSearch<'a> {
    fn run(snap: &SlotDrift, min_size: usize, max_size: usize, scratch: &mut SearchScratch) -> ActionSet {
        let n = snap.n_devices();
        debug_assert!(1 <= min_size && min_size <= max_size && max_size <= n);
        debug_assert!(max_size <= MAX_EXACT_ACTION);
        let width = max_size + 1;
        let suffix = &mut scratch.suffix_top;
        suffix.clear();
        suffix.resize((n + 1) * width, 0.0);
        let low = &mut scratch.suffix_low;
        low.clear();
        low.resize((n + 1) * width, 1.0);
        let mut top: Vec<f64> = Vec::with_capacity(max_size + 1);
        let mut lowest: Vec<f64> = Vec::with_capacity(max_size + 1);
        for s in (0..n).rev() {
            let g = snap.gains[s];
            let pos = top.partition_point(|&x| x >= g);
            top.insert(pos, g);
            top.truncate(max_size);
            let phi = snap.phis[s];
            let pos = lowest.partition_point(|&x| x <= phi);
            lowest.insert(pos, phi);
            lowest.truncate(max_size);
            let mut acc = 0.0;
            for t in 1..width {
                if let Some(v) = top.get(t - 1) {
                    acc += v;
                }
                suffix[s * width + t] = acc;
            }
            low[s * width..s * width + lowest.len()].copy_from_slice(&lowest);
        }

        // The ranked prefixes are usually optimal or close, which makes the
        // bound bite from the first branch. Ties still go to the smallest
        // sequence because replacement compares sets on equal drift.
        rank_desc(&snap.gains, &mut scratch.order);
        let mut best = Vec::with_capacity(max_size);
        let mut best_reduction = f64::NEG_INFINITY;
        for k in min_size..=max_size {
            sorted_prefix(&scratch.order, k, &mut scratch.candidate);
            let reduction = snap.expected_reduction(&scratch.candidate);
            if improves(reduction, &scratch.candidate, best_reduction, &best) {
                best_reduction = reduction;
                best.clone_from(&scratch.candidate);
            }
        }

        // Interchangeable devices give equal reductions, and swapping in the
        // lower index gives the smaller set, so only index-ordered picks
        // within a class can win.
        scratch.twin.clear();
        for j in 0..n {
            let twin = (0..j)
                .rev()
                .find(|&i| snap.phis[i] == snap.phis[j] && snap.gains[i] == snap.gains[j])
                .unwrap_or(usize::MAX);
            scratch.twin.push(twin);
        }

        let level_len = (max_size + 1) * width;
        scratch.levels.clear();
        scratch.levels.resize((max_size + 1) * level_len, 0.0);
        scratch.levels[max_size * width] = 1.0;
        let mut search = SubsetSearch {
            snap,
            min_size,
            max_size,
            width,
            suffix_top: &scratch.suffix_top,
            suffix_low: &scratch.suffix_low,
            levels: &mut scratch.levels,
            twin: &scratch.twin,
            chosen: vec![false; n],
            members: Vec::with_capacity(max_size),
            best,
            best_reduction,
        };
        search.expand(0, 0.0);
        ActionSet::from_sorted(&search.best)
    }

    fn prune_below(&self) -> f64 {
        self.best_reduction - PRUNE_MARGIN * self.best_reduction.abs()
    }

    /// Upper bound on the reduction of any `S + T` with `T` drawn from `j..N`.
    ///
    /// Each newcomer sees the current members plus the other newcomers, and
    /// `t - 1` newcomers are at least as active as the `t - 1` least active
    /// candidates, so its success probability is at most
    /// `E[p(1 + A_S + L_{t-1})]`. `kept[t]` bounds what the current members
    /// retain next to `t` newcomers the same way.
    fn optimistic(&self, j: usize, depth: usize, kept: &[f64], newcomer: f64, load: &mut [f64]) -> f64 {
        let width = self.width;
        let slots_left = self.max_size - depth;
        let available = (self.snap.n_devices() - j).min(slots_left);
        let table = &self.snap.table;
        let mut best = kept[1] + newcomer * self.suffix_top[j * width + 1];
        if available == 1 {
            return best;
        }
        let level_len = (self.max_size + 1) * width;
        let full_at = depth * level_len + self.max_size * width;
        load[..=depth].copy_from_slice(&self.levels[full_at..full_at + depth + 1]);
        for (t, &kept_t) in kept.iter().enumerate().take(available + 1).skip(2) {
            let len = depth + t;
            add_bernoulli(load, len - 1, self.suffix_low[j * width + t - 2]);
            let e: f64 = (0..len).map(|a| load[a] * table.get(a + 1)).sum();
            best = best.max(kept_t + e * self.suffix_top[j * width + t]);
        }
        best
    }

    /// `kept[t]`: the members' reduction with the `t` least active devices
    /// of `start..N` added, an upper bound for any `t` added from there.
    fn kept_reduction(&self, start: usize, depth: usize, reduction: f64, kept: &mut [f64]) {
        let width = self.width;
        let slots_left = (self.max_size - depth).min(self.snap.n_devices() - start);
        kept[..=self.max_size].fill(0.0);
        kept[0] = reduction;
        let table = &self.snap.table;
        let level_len = (self.max_size + 1) * width;
        let mut dist = [0.0f64; MAX_EXACT_ACTION + 2];
        for r in 0..depth {
            let g = self.snap.gains[self.members[r]];
            let row = depth * level_len + r * width;
            dist[..depth].copy_from_slice(&self.levels[row..row + depth]);
            for (t, kept_t) in kept.iter_mut().enumerate().take(slots_left + 1).skip(1) {
                let len = depth + t;
                add_bernoulli(&mut dist, len - 1, self.suffix_low[start * width + t - 1]);
                let c: f64 = (0..len).map(|a| dist[a] * table.get(a + 1)).sum();
                *kept_t += g * c;
            }
        }
    }

    fn expand(&mut self, start: usize, reduction: f64) {
        let depth = self.members.len();
        if depth == self.max_size {
            return;
        }
        let n = self.snap.n_devices();
        let table = &self.snap.table;
        let width = self.width;
        let level_len = (self.max_size + 1) * width;
        let full_at = self.max_size * width;
        let newcomer: f64 = {
            let full = &self.levels[depth * level_len + full_at..];
            (0..=depth).map(|a| full[a] * table.get(a + 1)).sum()
        };
        let mut load = [0.0f64; MAX_EXACT_ACTION + 2];
        let mut kept = [0.0f64; MAX_EXACT_ACTION + 2];
        self.kept_reduction(start, depth, reduction, &mut kept);

        for j in start..n {
            if n - j < self.min_size.saturating_sub(depth) {
                break;
            }
            if self.optimistic(j, depth, &kept, newcomer, &mut load) < self.prune_below() {
                // The bound only shrinks as the candidate suffix does.
                break;
            }
            let twin = self.twin[j];
            if twin != usize::MAX && !self.chosen[twin] {
                continue;
            }
            let phi = self.snap.phis[j];
            let (cur, next) = self.levels.split_at_mut((depth + 1) * level_len);
            let cur = &cur[depth * level_len..];
            let next = &mut next[..level_len];
            let mut next_reduction = self.snap.gains[j] * newcomer;
            for r in 0..depth {
                let dist = &mut next[r * width..(r + 1) * width];
                dist[..depth].copy_from_slice(&cur[r * width..r * width + depth]);
                add_bernoulli(dist, depth, phi);
                let c: f64 = (0..=depth).map(|a| dist[a] * table.get(a + 1)).sum();
                next_reduction += self.snap.gains[self.members[r]] * c;
            }
            next[depth * width..depth * width + depth + 1].copy_from_slice(&cur[full_at..full_at + depth + 1]);
            let full = &mut next[full_at..full_at + width];
            full[..=depth].copy_from_slice(&cur[full_at..full_at + depth + 1]);
            add_bernoulli(full, depth + 1, phi);

            self.members.push(j);
            self.chosen[j] = true;
            if depth + 1 >= self.min_size && improves(next_reduction, &self.members, self.best_reduction, &self.best) {
                self.best_reduction = next_reduction;
                self.best.clear();
                self.best.extend_from_slice(&self.members);
            }
            self.expand(j + 1, next_reduction);
            self.chosen[j] = false;
            self.members.pop();
        }
    }
}

/// Devices sorted by `key` descending, ties by index.
fn rank_desc(keys: &[f64], out: &mut Vec<usize>) {
    out.clear();
    out.extend(0..keys.len());
    out.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
}

fn sorted_prefix(order: &[usize], k: usize, buf: &mut Vec<usize>) {
    buf.clear();
    buf.extend_from_slice(&order[..k]);
    buf.sort_unstable();
}

fn reduced_ds(snap: &SlotDrift, max_size: usize, order: &mut Vec<usize>) -> ActionSet {
    rank_desc(&snap.gains, order);
    let mut best: Vec<usize> = Vec::new();
    let mut best_reduction = f64::NEG_INFINITY;
    let mut candidate = Vec::with_capacity(max_size);
    for k in 1..=max_size {
        sorted_prefix(order, k, &mut candidate);
        let reduction = snap.expected_reduction(&candidate);
        if improves(reduction, &candidate, best_reduction, &best) {
            best_reduction = reduction;
            best.clone_from(&candidate);
        }
    }
    ActionSet::from_sorted(&best)
}

fn reduced_fs(snap: &SlotDrift, size: usize, order: &mut Vec<usize>) -> ActionSet {
    rank_desc(&snap.gains, order);
    let mut set = Vec::with_capacity(size);
    sorted_prefix(order, size, &mut set);
    ActionSet::from_sorted(&set)
}

fn mwa_from_keys(keys: &[f64], table: &SuccessTable, order: &mut Vec<usize>) -> ActionSet {
    rank_desc(keys, order);
    let m = table.antennas().min(keys.len());
    let mut best_k = 1;
    let mut best_val = f64::NEG_INFINITY;
    let mut acc = 0.0;
    for k in 1..=m {
        acc += keys[order[k - 1]];
        let v = table.get(k) * acc;
        if v > best_val {
            best_val = v;
            best_k = k;
        }
    }
    let mut set = Vec::with_capacity(best_k);
    sorted_prefix(order, best_k, &mut set);
    ActionSet::from_sorted(&set)
}

fn check_network(n: usize, channel: &ChannelParams) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n_devices", "need at least one device"));
    }
    if channel.antennas() > n {
        return Err(Error::invalid(
            "antennas",
            format!("M = {} exceeds N = {n}", channel.antennas()),
        ));
    }
    Ok(())
}

/// Drift-minimizing action over all sets of at most `M` devices, or over the
/// ranked prefixes when `reduced`.
pub fn ds_schedule(
    beliefs: &[BeliefTriple],
    weights: &DriftWeights,
    channel: &ChannelParams,
    reduced: bool,
) -> Result<ActionSet> {
    check_network(beliefs.len(), channel)?;
    let m = channel.antennas();
    if !reduced && m > MAX_EXACT_ACTION {
        return Err(Error::EnumerationTooLarge {
            size: m,
            limit: MAX_EXACT_ACTION,
        });
    }
    let snap = SlotDrift::new(beliefs, weights, &channel.success_table())?;
    let mut order = Vec::new();
    Ok(if reduced {
        reduced_ds(&snap, m, &mut order)
    } else {
        SubsetSearch::run(&snap, 1, m, &mut SearchScratch::default())
    })
}

/// Drift-minimizing action among the sets of exactly `n_star` devices.
pub fn fs_schedule(
    beliefs: &[BeliefTriple],
    weights: &DriftWeights,
    channel: &ChannelParams,
    n_star: usize,
    reduced: bool,
) -> Result<ActionSet> {
    check_network(beliefs.len(), channel)?;
    if !(1..=channel.antennas()).contains(&n_star) {
        return Err(Error::invalid(
            "n_star",
            format!("must be in 1..={}", channel.antennas()),
        ));
    }
    if !reduced && n_star > MAX_EXACT_ACTION {
        return Err(Error::EnumerationTooLarge {
            size: n_star,
            limit: MAX_EXACT_ACTION,
        });
    }
    let snap = SlotDrift::new(beliefs, weights, &channel.success_table())?;
    let mut order = Vec::new();
    Ok(if reduced {
        reduced_fs(&snap, n_star, &mut order)
    } else {
        SubsetSearch::run(&snap, n_star, n_star, &mut SearchScratch::default())
    })
}

/// Max weighted AoI: the top-`K` devices by `omega_i D_i` for the `K`
/// maximizing `p(K) * sum omega D`.
pub fn mwa_schedule(aois: &[u64], omegas: &[f64], channel: &ChannelParams) -> Result<ActionSet> {
    check_network(aois.len(), channel)?;
    if omegas.len() != aois.len() {
        return Err(Error::LengthMismatch {
            what: "omegas",
            expected: aois.len(),
            got: omegas.len(),
        });
    }
    let keys: Vec<f64> = aois.iter().zip(omegas).map(|(&d, w)| w * d as f64).collect();
    Ok(mwa_from_keys(&keys, &channel.success_table(), &mut Vec::new()))
}

/// Uniform sampler over all `sum_{K=1}^{M} C(N, K)` feasible actions.
#[derive(Debug, Clone)]
pub struct RandomActions {
    n: usize,
    /// `cumulative[K - 1] = sum_{j <= K} C(N, j)`
    cumulative: Vec<u128>,
}

impl RandomActions {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::invalid(
                "antennas",
                format!("need 1 <= M <= N, got M = {m}, N = {n}"),
            ));
        }
        let mut cumulative = Vec::with_capacity(m);
        let mut binom: u128 = 1;
        let mut total: u128 = 0;
        for k in 1..=m {
            binom =
                binom
                    .checked_mul((n - k + 1) as u128)
                    .map(|v| v / k as u128)
                    .ok_or(Error::ActionSpaceTooLarge {
                        size: u128::MAX,
                        cap: usize::MAX,
                    })?;
            total = total.checked_add(binom).ok_or(Error::ActionSpaceTooLarge {
                size: u128::MAX,
                cap: usize::MAX,
            })?;
            cumulative.push(total);
        }
        Ok(Self { n, cumulative })
    }

    pub fn action_count(&self) -> u128 {
        *self.cumulative.last().expect("M >= 1")
    }

    pub fn sample(&self, rng: &mut SimRng) -> ActionSet {
        let draw = rng.gen_range(0..self.action_count());
        let size = self.cumulative.partition_point(|&c| c <= draw) + 1;
        let mut devices = rand::seq::index::sample(rng, self.n, size).into_vec();
        devices.sort_unstable();
        ActionSet::from_sorted(&devices)
    }
}

/// A configured policy with its per-slot scratch space.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    table: SuccessTable,
    omegas: Vec<f64>,
    snap: Option<SlotDrift>,
    random: Option<RandomActions>,
    order: Vec<usize>,
    keys: Vec<f64>,
    scratch: SearchScratch,
}

impl Policy {
    pub fn new(spec: PolicySpec, channel: &ChannelParams, omegas: &[f64]) -> Result<Self> {
        let n = omegas.len();
        check_network(n, channel)?;
        spec.validate(n, channel)?;
        let random = match spec.kind {
            PolicyKind::Random => Some(RandomActions::new(n, channel.antennas())?),
            _ => None,
        };
        Ok(Self {
            spec,
            table: channel.success_table(),
            omegas: omegas.to_vec(),
            snap: None,
            random,
            order: Vec::with_capacity(n),
            keys: Vec::with_capacity(n),
            scratch: SearchScratch::default(),
        })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn select(&mut self, beliefs: &[BeliefTriple], rng: &mut SimRng) -> ActionSet {
        let m = self.table.antennas();
        match self.spec.kind {
            PolicyKind::Random => self.random.as_ref().expect("built in new").sample(rng),
            PolicyKind::Mwa => {
                self.keys.clear();
                self.keys
                    .extend(beliefs.iter().zip(&self.omegas).map(|(b, w)| w * b.aoi() as f64));
                mwa_from_keys(&self.keys, &self.table, &mut self.order)
            }
            kind => {
                let weights = self.spec.weights.as_ref().expect("validated in new");
                let snap = match &mut self.snap {
                    Some(s) => {
                        s.refresh(beliefs, weights);
                        s
                    }
                    slot @ None => {
                        slot.insert(SlotDrift::new(beliefs, weights, &self.table).expect("validated lengths"))
                    }
                };
                match kind {
                    PolicyKind::Ds => SubsetSearch::run(snap, 1, m, &mut self.scratch),
                    PolicyKind::DsReduced => reduced_ds(snap, m, &mut self.order),
                    PolicyKind::Fs => SubsetSearch::run(snap, self.spec.n_star, self.spec.n_star, &mut self.scratch),
                    PolicyKind::FsReduced => reduced_fs(snap, self.spec.n_star, &mut self.order),
                    PolicyKind::FsK(k) => SubsetSearch::run(snap, k, k, &mut self.scratch),
                    PolicyKind::Mwa | PolicyKind::Random => unreachable!(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::lyapunov_drift;
    use crate::rng::stream_rng;

    fn channel(m: usize, snr_db: f64) -> ChannelParams {
        ChannelParams::new(m, 10f64.powf(snr_db / 10.0), 0.04, 1.0).unwrap()
    }

    fn beliefs(triples: &[(u32, u32, u32)], lambda: f64) -> Vec<BeliefTriple> {
        triples
            .iter()
            .map(|&(k, m, u)| BeliefTriple::new(k, m, u, lambda).unwrap())
            .collect()
    }

    #[test]
    fn parse_and_display_round_trip() {
        for kind in [
            PolicyKind::Ds,
            PolicyKind::DsReduced,
            PolicyKind::Fs,
            PolicyKind::FsReduced,
            PolicyKind::FsK(3),
            PolicyKind::Mwa,
            PolicyKind::Random,
        ] {
            assert_eq!(kind.to_string().parse::<PolicyKind>().unwrap(), kind);
        }
        assert_eq!("POMW".parse::<PolicyKind>().unwrap(), PolicyKind::FsK(1));
        assert_eq!("fs-k:4".parse::<PolicyKind>().unwrap(), PolicyKind::FsK(4));
        assert!("fs-0".parse::<PolicyKind>().is_err());
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn single_device_network() {
        let ch = channel(1, 10.0);
        let b = beliefs(&[(2, 3, 0)], 0.4);
        let w = DriftWeights::uniform(1);
        assert_eq!(ds_schedule(&b, &w, &ch, false).unwrap().devices(), &[0]);
        assert_eq!(ds_schedule(&b, &w, &ch, true).unwrap().devices(), &[0]);
    }

    #[test]
    fn fs_with_everyone() {
        let ch = channel(3, 15.0);
        let b = beliefs(&[(1, 2, 0), (3, 1, 1), (2, 2, 0)], 0.5);
        let a = fs_schedule(&b, &DriftWeights::uniform(3), &ch, 3, false).unwrap();
        assert_eq!(a.devices(), &[0, 1, 2]);
    }

    #[test]
    fn fs_symmetric_picks_largest_gaps() {
        let ch = channel(2, 15.0);
        let b = beliefs(&[(1, 2, 0), (1, 5, 0), (1, 3, 0), (1, 6, 0)], 0.5);
        let w = DriftWeights::uniform(4);
        let a = fs_schedule(&b, &w, &ch, 2, false).unwrap();
        assert_eq!(a.devices(), &[1, 3]);
        assert_eq!(fs_schedule(&b, &w, &ch, 2, true).unwrap(), a);
    }

    #[test]
    fn mwa_hand_enumeration() {
        // omega*D = (10, 1): K = 1 gives 0.9 * 10 = 9, K = 2 gives 0.5 * 11 = 5.5.
        let table = SuccessTable::from_probs(vec![0.0, 0.9, 0.5]);
        let a = mwa_from_keys(&[10.0, 1.0], &table, &mut Vec::new());
        assert_eq!(a.devices(), &[0]);
        let flat = SuccessTable::from_probs(vec![0.0, 0.7, 0.7, 0.7]);
        let a = mwa_from_keys(&[1.0, 4.0, 2.0, 3.0], &flat, &mut Vec::new());
        assert_eq!(a.devices(), &[1, 2, 3]);
    }

    #[test]
    fn mwa_equal_keys_take_lowest_indices() {
        let ch = channel(2, 40.0);
        let a = mwa_schedule(&[5, 5, 5, 5], &[1.0; 4], &ch).unwrap();
        assert_eq!(a.devices(), &[0, 1]);
    }

    #[test]
    fn n_star_limits() {
        assert_eq!(compute_n_star(&channel(1, 0.0)), 1);
        assert_eq!(compute_n_star(&channel(7, 120.0)), 7);
        // M = 5 at 15 dB: n p(n) peaks at 4.
        let ch = channel(5, 15.0);
        let t = ch.success_table();
        let vals: Vec<f64> = (1..=5).map(|n| n as f64 * t.get(n)).collect();
        let argmax = vals
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0
            + 1;
        assert_eq!(compute_n_star(&ch), argmax);
        assert_eq!(compute_n_star(&ch), 4);
    }

    #[test]
    fn exhaustive_search_is_a_lower_envelope() {
        let ch = channel(3, 8.0);
        let mut rng = stream_rng(11, 0);
        for _ in 0..50 {
            let b: Vec<BeliefTriple> = (0..6)
                .map(|_| {
                    BeliefTriple::new(
                        rng.gen_range(1..6),
                        rng.gen_range(1..6),
                        rng.gen_range(0..4),
                        rng.gen_range(0.1..0.95),
                    )
                    .unwrap()
                })
                .collect();
            let w = DriftWeights::new((0..6).map(|_| rng.gen_range(0.2..3.0)).collect()).unwrap();
            let best = ds_schedule(&b, &w, &ch, false).unwrap();
            let best_drift = lyapunov_drift(&best, &b, &w, &ch).unwrap();
            let reduced = ds_schedule(&b, &w, &ch, true).unwrap();
            assert!(lyapunov_drift(&reduced, &b, &w, &ch).unwrap() >= best_drift - 1e-12);
            for size in 1..=3 {
                let sample = rand::seq::index::sample(&mut rng, 6, size).into_vec();
                let a = ActionSet::new(sample, 6, 3).unwrap();
                assert!(lyapunov_drift(&a, &b, &w, &ch).unwrap() >= best_drift - 1e-12);
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let ch = channel(3, 10.0);
        let omegas = [1.0; 4];
        assert!(Policy::new(PolicySpec::new(PolicyKind::Ds, None, 1), &ch, &omegas).is_err());
        let w = Some(DriftWeights::uniform(4));
        assert!(Policy::new(PolicySpec::new(PolicyKind::FsK(4), w.clone(), 1), &ch, &omegas).is_err());
        assert!(Policy::new(PolicySpec::new(PolicyKind::Fs, w.clone(), 0), &ch, &omegas).is_err());
        assert!(Policy::new(PolicySpec::new(PolicyKind::Mwa, None, 1), &ch, &[1.0; 2]).is_err());
        assert!(Policy::new(PolicySpec::new(PolicyKind::Fs, w, 2), &ch, &omegas).is_ok());
    }
}
