//! Performance bounds on the expected weighted-sum AoI.
//!
//! Any stationary randomized scheduler `xi` (a probability vector over the
//! feasible actions) delivers device `i`'s updates at rate
//! `psi_i = sum_j [i in a(j)] xi(j) p(|a(j)|)`, and drift-based scheduling
//! with `beta_i = omega_i / (psi_i lambda_i)` keeps the EWSAoI below
//!
//! ```text
//! (1/N) sum_i (omega_i / lambda_i) (1/psi_i + 1/lambda_i).
//! ```
//!
//! [`optimize_xi`] minimizes the `xi`-dependent part of that bound,
//! [`universal_lower_bound`] gives a floor no policy can beat.

use std::fmt;

use crate::belief::validate_lambda;
use crate::channel::{ChannelParams, SuccessTable};
use crate::drift::{ActionSet, DriftWeights};
use crate::error::{Error, Result};
use crate::policy::n_star_from_table;

pub const DEFAULT_ACTION_CAP: usize = 1_000_000;

/// All nonempty device sets of at most `max_size` members, by increasing
/// cardinality and lexicographically within a cardinality.
pub fn enumerate_actions(n_devices: usize, max_size: usize, cap: usize) -> Result<Vec<ActionSet>> {
    let size = action_count(n_devices, max_size);
    if size > cap as u128 {
        return Err(Error::ActionSpaceTooLarge { size, cap });
    }
    let mut out = Vec::with_capacity(size as usize);
    for k in 1..=max_size.min(n_devices) {
        let mut comb: Vec<usize> = (0..k).collect();
        loop {
            out.push(ActionSet::from_sorted(&comb));
            let Some(pos) = (0..k).rev().find(|&i| comb[i] < n_devices - k + i) else {
                break;
            };
            comb[pos] += 1;
            for i in pos + 1..k {
                comb[i] = comb[i - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// `sum_{K=1}^{max_size} C(N, K)`, saturating.
pub fn action_count(n_devices: usize, max_size: usize) -> u128 {
    let mut binom: u128 = 1;
    let mut total: u128 = 0;
    for k in 1..=max_size.min(n_devices) {
        binom = match binom.checked_mul((n_devices - k + 1) as u128) {
            Some(v) => v / k as u128,
            None => return u128::MAX,
        };
        total = total.saturating_add(binom);
    }
    total
}

/// A stationary randomized scheduler over the enumerated action space.
#[derive(Debug, Clone, PartialEq)]
pub struct XiDistribution {
    n_devices: usize,
    actions: Vec<ActionSet>,
    xi: Vec<f64>,
}

impl XiDistribution {
    pub fn new(n_devices: usize, max_size: usize, xi: Vec<f64>) -> Result<Self> {
        let actions = enumerate_actions(n_devices, max_size, DEFAULT_ACTION_CAP)?;
        Self::with_actions(n_devices, actions, xi)
    }

    fn with_actions(n_devices: usize, actions: Vec<ActionSet>, xi: Vec<f64>) -> Result<Self> {
        if xi.len() != actions.len() {
            return Err(Error::LengthMismatch {
                what: "xi",
                expected: actions.len(),
                got: xi.len(),
            });
        }
        if xi.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("xi", "entries must be finite and nonnegative"));
        }
        let total: f64 = xi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("xi", format!("entries sum to {total}, not 1")));
        }
        Ok(Self { n_devices, actions, xi })
    }

    pub fn uniform(n_devices: usize, max_size: usize) -> Result<Self> {
        let actions = enumerate_actions(n_devices, max_size, DEFAULT_ACTION_CAP)?;
        let w = 1.0 / actions.len() as f64;
        let xi = vec![w; actions.len()];
        Ok(Self { n_devices, actions, xi })
    }

    /// Uniform over the actions of exactly `size` devices.
    pub fn uniform_of_size(n_devices: usize, max_size: usize, size: usize) -> Result<Self> {
        if size == 0 || size > max_size.min(n_devices) {
            return Err(Error::invalid(
                "size",
                format!("must be in 1..={}", max_size.min(n_devices)),
            ));
        }
        let actions = enumerate_actions(n_devices, max_size, DEFAULT_ACTION_CAP)?;
        let count = actions.iter().filter(|a| a.len() == size).count() as f64;
        let xi = actions
            .iter()
            .map(|a| if a.len() == size { 1.0 / count } else { 0.0 })
            .collect();
        Ok(Self { n_devices, actions, xi })
    }

    /// All mass on one action.
    pub fn point(n_devices: usize, max_size: usize, action: &ActionSet) -> Result<Self> {
        let actions = enumerate_actions(n_devices, max_size, DEFAULT_ACTION_CAP)?;
        let j = actions
            .iter()
            .position(|a| a == action)
            .ok_or_else(|| Error::invalid("action", format!("{action} is not a feasible action")))?;
        let mut xi = vec![0.0; actions.len()];
        xi[j] = 1.0;
        Ok(Self { n_devices, actions, xi })
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn actions(&self) -> &[ActionSet] {
        &self.actions
    }

    pub fn probs(&self) -> &[f64] {
        &self.xi
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Result<Self> {
        if self.actions != other.actions {
            return Err(Error::invalid("xi", "distributions live on different action spaces"));
        }
        let xi = self
            .xi
            .iter()
            .zip(&other.xi)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        Self::with_actions(self.n_devices, self.actions.clone(), xi)
    }
}

/// Per-device delivery rate under the randomized scheduler `xi`.
pub fn psi_from_xi(xi: &XiDistribution, channel: &ChannelParams) -> Result<Vec<f64>> {
    let table = channel.success_table();
    let mut psi = vec![0.0; xi.n_devices];
    for (a, &w) in xi.actions.iter().zip(&xi.xi) {
        if a.len() > table.antennas() {
            return Err(Error::TooManyActive {
                active: a.len(),
                antennas: table.antennas(),
            });
        }
        if w == 0.0 {
            continue;
        }
        let p = table.get(a.len());
        for i in a.iter() {
            psi[i] += w * p;
        }
    }
    Ok(psi)
}

/// A bound value, or the sentinel for a device that is never served.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Finite(v) => Some(*v),
            Bound::Unbounded => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Bound::Finite(_))
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Unbounded => f.write_str("unbounded"),
        }
    }
}

fn check_lengths(n: usize, lambdas: &[f64], omegas: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n_devices", "need at least one device"));
    }
    if lambdas.len() != n {
        return Err(Error::LengthMismatch {
            what: "lambdas",
            expected: n,
            got: lambdas.len(),
        });
    }
    if omegas.len() != n {
        return Err(Error::LengthMismatch {
            what: "omegas",
            expected: n,
            got: omegas.len(),
        });
    }
    for &l in lambdas {
        validate_lambda(l)?;
    }
    if omegas.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("omegas", "weights must be finite and positive"));
    }
    Ok(())
}

/// `(1/N) sum_i (omega_i / lambda_i)(1/psi_i + 1/lambda_i)`.
pub fn upper_bound(psi: &[f64], lambdas: &[f64], omegas: &[f64]) -> Result<Bound> {
    check_lengths(psi.len(), lambdas, omegas)?;
    if psi.iter().any(|&p| p <= 0.0) {
        return Ok(Bound::Unbounded);
    }
    let n = psi.len() as f64;
    let total: f64 = psi
        .iter()
        .zip(lambdas)
        .zip(omegas)
        .map(|((p, l), w)| (w / l) * (1.0 / p + 1.0 / l))
        .sum();
    Ok(Bound::Finite(total / n))
}

/// Closed-form bound for `N` identical devices, attained by spreading the
/// schedule uniformly over the `n*`-device actions.
pub fn symmetric_upper_bound(n_devices: usize, lambda: f64, omega: f64, channel: &ChannelParams) -> Result<f64> {
    check_lengths(n_devices, &vec![lambda; n_devices], &vec![omega; n_devices])?;
    let table = channel.success_table();
    let n_star = n_star_from_table(&table);
    let rate = n_star as f64 * table.get(n_star);
    Ok((omega / lambda) * (n_devices as f64 / rate + 1.0 / lambda))
}

/// The `xi`-dependent part of the bound: `sum_i omega_i / (lambda_i psi_i)`.
pub fn xi_objective(psi: &[f64], lambdas: &[f64], omegas: &[f64]) -> f64 {
    psi.iter()
        .zip(lambdas)
        .zip(omegas)
        .map(|((p, l), w)| if *p > 0.0 { w / (l * p) } else { f64::INFINITY })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiOptions {
    /// Stop when the Frank-Wolfe gap is at most `tol * max(1, objective)`.
    pub tol: f64,
    pub max_iters: usize,
    pub action_cap: usize,
}

impl Default for XiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 100_000,
            action_cap: DEFAULT_ACTION_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct XiSolution {
    pub xi: XiDistribution,
    pub psi: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Lexicographic rank of a sorted `k`-combination of `0..n`.
fn combination_rank(comb: &[usize], n: usize, binom: &[Vec<usize>]) -> usize {
    let k = comb.len();
    let mut rank = 0;
    let mut prev = 0;
    for (i, &c) in comb.iter().enumerate() {
        for v in prev..c {
            rank += binom[n - 1 - v][k - 1 - i];
        }
        prev = c + 1;
    }
    rank
}

/// Minimizes `sum_i omega_i / (lambda_i psi_i(xi))` over the simplex.
///
/// Away-step conditional gradient with exact line search, started from the
/// uniform distribution. The linear minimization never scans the action
/// space: for each size `K` the best vertex is the top-`K` devices by
/// `omega_i / (lambda_i psi_i^2)`.
pub fn optimize_xi(channel: &ChannelParams, lambdas: &[f64], omegas: &[f64], opts: XiOptions) -> Result<XiSolution> {
    let n = lambdas.len();
    check_lengths(n, lambdas, omegas)?;
    let m = channel.antennas();
    if m > n {
        return Err(Error::invalid("antennas", format!("M = {m} exceeds N = {n}")));
    }
    let table = channel.success_table();
    let actions = enumerate_actions(n, m, opts.action_cap)?;
    let na = actions.len();
    let sizes: Vec<usize> = actions.iter().map(ActionSet::len).collect();
    let mut offsets = vec![0usize; m + 2];
    for &s in &sizes {
        offsets[s + 1] += 1;
    }
    for k in 1..offsets.len() {
        offsets[k] += offsets[k - 1];
    }
    let mut binom = vec![vec![0usize; m + 1]; n + 1];
    for row in 0..=n {
        binom[row][0] = 1;
        for col in 1..=m.min(row) {
            binom[row][col] = binom[row - 1][col - 1] + if col < row { binom[row - 1][col] } else { 0 };
        }
    }

    let coef: Vec<f64> = omegas.iter().zip(lambdas).map(|(w, l)| w / l).collect();
    let mut xi = vec![1.0 / na as f64; na];
    let recompute_psi = |xi: &[f64], psi: &mut Vec<f64>| {
        psi.iter_mut().for_each(|p| *p = 0.0);
        for (a, &w) in actions.iter().zip(xi) {
            if w > 0.0 {
                let p = table.get(a.len());
                for i in a.iter() {
                    psi[i] += w * p;
                }
            }
        }
    };
    let mut psi = vec![0.0; n];
    recompute_psi(&xi, &mut psi);

    let mut grad_w = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut d_psi = vec![0.0; n];
    let mut vertex: Vec<usize> = Vec::with_capacity(m);
    let mut gap = f64::INFINITY;

    for it in 0..opts.max_iters {
        if it % 64 == 63 {
            let total: f64 = xi.iter().sum();
            xi.iter_mut().for_each(|v| *v /= total);
            recompute_psi(&xi, &mut psi);
        }
        let f = xi_objective(&psi, lambdas, omegas);
        for i in 0..n {
            grad_w[i] = coef[i] / (psi[i] * psi[i]);
        }
        order.sort_by(|&a, &b| grad_w[b].total_cmp(&grad_w[a]).then(a.cmp(&b)));
        let (mut best_k, mut best_val, mut acc) = (1, f64::NEG_INFINITY, 0.0);
        for k in 1..=m {
            acc += grad_w[order[k - 1]];
            let v = table.get(k) * acc;
            if v > best_val {
                best_val = v;
                best_k = k;
            }
        }
        // <grad, xi> = -f, and the FW vertex has gradient -best_val.
        gap = best_val - f;
        if gap <= opts.tol * f.max(1.0) {
            return finish(n, actions, xi, psi, f, gap, it);
        }

        let (mut away, mut away_grad) = (usize::MAX, f64::NEG_INFINITY);
        for (j, a) in actions.iter().enumerate() {
            if xi[j] > 0.0 {
                let g = -table.get(a.len()) * a.iter().map(|i| grad_w[i]).sum::<f64>();
                if g > away_grad {
                    away_grad = g;
                    away = j;
                }
            }
        }
        let away_gap = away_grad + f;

        vertex.clear();
        vertex.extend_from_slice(&order[..best_k]);
        vertex.sort_unstable();
        let fw_step = gap >= away_gap || xi[away] >= 1.0;
        let gamma_max;
        if fw_step {
            let p = table.get(best_k);
            for i in 0..n {
                d_psi[i] = -psi[i];
            }
            for &i in &vertex {
                d_psi[i] += p;
            }
            gamma_max = 1.0;
        } else {
            let p = table.get(sizes[away]);
            d_psi.copy_from_slice(&psi);
            for i in actions[away].iter() {
                d_psi[i] -= p;
            }
            gamma_max = xi[away] / (1.0 - xi[away]);
        }
        let gamma = line_search(&psi, &d_psi, &coef, gamma_max);
        if fw_step {
            let s = offsets[best_k] + combination_rank(&vertex, n, &binom);
            xi.iter_mut().for_each(|v| *v *= 1.0 - gamma);
            xi[s] += gamma;
        } else {
            xi.iter_mut().for_each(|v| *v *= 1.0 + gamma);
            if gamma >= gamma_max {
                xi[away] = 0.0;
            } else {
                xi[away] -= gamma;
            }
        }
        for i in 0..n {
            psi[i] += gamma * d_psi[i];
        }
    }
    let total: f64 = xi.iter().sum();
    xi.iter_mut().for_each(|v| *v /= total);
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        residual: gap,
        best: Box::new(XiDistribution {
            n_devices: n,
            actions,
            xi,
        }),
    })
}

fn finish(
    n: usize,
    actions: Vec<ActionSet>,
    mut xi: Vec<f64>,
    psi: Vec<f64>,
    objective: f64,
    gap: f64,
    iterations: usize,
) -> Result<XiSolution> {
    let total: f64 = xi.iter().sum();
    xi.iter_mut().for_each(|v| *v /= total);
    Ok(XiSolution {
        xi: XiDistribution {
            n_devices: n,
            actions,
            xi,
        },
        psi,
        objective,
        gap,
        iterations,
    })
}

/// Minimizer of the convex `h(g) = sum_i c_i / (psi_i + g d_i)` on `[0, g_max]`.
fn line_search(psi: &[f64], d: &[f64], coef: &[f64], gamma_max: f64) -> f64 {
    let slope = |g: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..psi.len() {
            let v = psi[i] + g * d[i];
            if v <= 0.0 {
                return f64::INFINITY;
            }
            s -= coef[i] * d[i] / (v * v);
        }
        s
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(gamma_max) <= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// KKT residuals of the water-filling solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Largest stationarity violation over the devices.
    pub stationarity: f64,
    /// `|mu * (sum q / p(1) - M)|` plus the largest `|eta_i (q_i - lambda_i)|`.
    pub complementary: f64,
    /// Largest violation of a primal or dual sign constraint.
    pub feasibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    /// Optimal throughputs `q_i`.
    pub q: Vec<f64>,
    /// Water level; zero when the throughput constraint is slack.
    pub nu: f64,
    pub residuals: KktResiduals,
}

/// `min sum_i (omega_i / 2N)(1/q_i + 3)` over `0 < q_i <= lambda_i`,
/// `sum_i q_i <= M p(1)`.
pub fn universal_lower_bound(channel: &ChannelParams, lambdas: &[f64], omegas: &[f64]) -> Result<LowerBound> {
    let n = lambdas.len();
    check_lengths(n, lambdas, omegas)?;
    let p1 = channel.success_table().get(1);
    let capacity = channel.antennas() as f64 * p1;
    let arrivals: f64 = lambdas.iter().sum();
    let roots: Vec<f64> = omegas.iter().map(|w| w.sqrt()).collect();

    let nu = if arrivals <= capacity {
        0.0
    } else {
        let served = |nu: f64| -> f64 { lambdas.iter().zip(&roots).map(|(l, r)| l.min(r / nu)).sum() };
        let mut lo = 0.0;
        let mut hi = roots.iter().sum::<f64>() / capacity;
        while served(hi) > capacity {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if served(mid) > capacity {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Exact water level for the capped set found by bisection.
        let capped = |i: usize| lambdas[i] * hi <= roots[i];
        let free_root: f64 = (0..n).filter(|&i| !capped(i)).map(|i| roots[i]).sum();
        let capped_rate: f64 = (0..n).filter(|&i| capped(i)).map(|i| lambdas[i]).sum();
        let exact = free_root / (capacity - capped_rate);
        if exact.is_finite() && exact > 0.0 && served(exact) <= capacity * (1.0 + 1e-12) {
            exact
        } else {
            hi
        }
    };
    let q: Vec<f64> = if nu == 0.0 {
        lambdas.to_vec()
    } else {
        lambdas.iter().zip(&roots).map(|(l, r)| l.min(r / nu)).collect()
    };

    let nf = n as f64;
    let value = omegas
        .iter()
        .zip(&q)
        .map(|(w, q)| w / (2.0 * nf) * (1.0 / q + 3.0))
        .sum();

    // Lagrangian: sum w/(2N)(1/q + 3) + mu (sum q / p1 - M) + sum eta_i (q_i - lambda_i).
    let mu = nu * nu * p1 / (2.0 * nf);
    let mut stationarity: f64 = 0.0;
    let mut slack: f64 = 0.0;
    let mut feasibility: f64 = 0.0;
    let scale = |w: f64, q: f64| w / (2.0 * nf * q * q);
    for i in 0..n {
        let marginal = scale(omegas[i], q[i]);
        let at_cap = (q[i] - lambdas[i]).abs() <= 1e-15 * lambdas[i].max(1.0);
        let eta = if at_cap { (marginal - mu / p1).max(0.0) } else { 0.0 };
        let residual = -marginal + mu / p1 + eta;
        stationarity = stationarity.max(residual.abs() / marginal.max(1.0));
        slack = slack.max((eta * (q[i] - lambdas[i])).abs());
        feasibility = feasibility.max(q[i] - lambdas[i]).max(-q[i]);
    }
    let used: f64 = q.iter().sum::<f64>() / p1 - channel.antennas() as f64;
    feasibility = feasibility.max(used / channel.antennas() as f64);
    let complementary = (mu * used).abs() + slack;

    Ok(LowerBound {
        value,
        q,
        nu,
        residuals: KktResiduals {
            stationarity,
            complementary,
            feasibility: feasibility.max(0.0),
        },
    })
}

/// Everything the drift policies and reports need about one network.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub psi: Vec<f64>,
    pub beta: DriftWeights,
    pub upper_bound: Bound,
    pub lower_bound: f64,
    pub n_star: usize,
    /// Whether the closed form was used instead of the solver.
    pub symmetric: bool,
}

pub fn is_symmetric(lambdas: &[f64], omegas: &[f64]) -> bool {
    lambdas.windows(2).all(|w| w[0] == w[1]) && omegas.windows(2).all(|w| w[0] == w[1])
}

/// `beta_i = omega_i / (psi_i lambda_i)`.
pub fn drift_weights(psi: &[f64], lambdas: &[f64], omegas: &[f64]) -> Result<DriftWeights> {
    if psi.iter().any(|&p| p <= 0.0) {
        return Err(Error::invalid("psi", "every device needs a positive delivery rate"));
    }
    let beta = psi
        .iter()
        .zip(lambdas)
        .zip(omegas)
        .map(|((p, l), w)| w / (p * l))
        .collect();
    DriftWeights::new(beta)
}

/// Bounds and drift weights, via the closed form for identical devices and
/// via [`optimize_xi`] otherwise.
pub fn bound_report(channel: &ChannelParams, lambdas: &[f64], omegas: &[f64], opts: XiOptions) -> Result<BoundReport> {
    let n = lambdas.len();
    check_lengths(n, lambdas, omegas)?;
    if channel.antennas() > n {
        return Err(Error::invalid(
            "antennas",
            format!("M = {} exceeds N = {n}", channel.antennas()),
        ));
    }
    let table: SuccessTable = channel.success_table();
    let n_star = n_star_from_table(&table);
    let symmetric = is_symmetric(lambdas, omegas);
    let psi = if symmetric {
        vec![n_star as f64 / n as f64 * table.get(n_star); n]
    } else {
        optimize_xi(channel, lambdas, omegas, opts)?.psi
    };
    let upper = if symmetric {
        Bound::Finite(symmetric_upper_bound(n, lambdas[0], omegas[0], channel)?)
    } else {
        upper_bound(&psi, lambdas, omegas)?
    };
    let lower = universal_lower_bound(channel, lambdas, omegas)?;
    Ok(BoundReport {
        beta: drift_weights(&psi, lambdas, omegas)?,
        psi,
        upper_bound: upper,
        lower_bound: lower.value,
        n_star,
        symmetric,
    })
}
