//! Three-integer belief summaries of each device's hidden local age.
//!
//! The scheduler never sees the local age `d` of a device directly. Every
//! reachable posterior over `d` is captured by a triple `(k, m, u)`:
//!
//! * `k` - the local age observed the last time the device reported,
//! * `m` - slots since that observation up to the first failed attempt
//!   (or up to now if no attempt failed),
//! * `u` - slots since that failed attempt (`0` if none is pending).
//!
//! The destination AoI is always `D = k + m + u`, and the posterior is
//!
//! ```text
//! u = 0: [l, l*g, ..., l*g^(m-1), 0, ..., 0, g^m (at k+m), 0, ...]
//! u > 0: [l, l*g, ..., l*g^(u-1), l*g^u / (1-g^m), ..., l*g^(u+m-1) / (1-g^m), 0, ...]
//! ```
//!
//! with `l = lambda` and `g = 1 - lambda`. Policies only use the closed forms
//! [`BeliefTriple::active_probability`] and [`BeliefTriple::expected_age_gap`];
//! [`BeliefTriple::pmf`] materializes the vector for verification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the base station learns about one device at the end of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    NotScheduled,
    /// Scheduled, active, and decoding failed.
    Failed,
    /// Scheduled with nothing to send, which reveals `d = D`.
    EmptyBuffer,
    /// Delivered, carrying the local age `d` of the packet.
    Success(u32),
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::NotScheduled => f.write_str("not-scheduled"),
            Observation::Failed => f.write_str("failed"),
            Observation::EmptyBuffer => f.write_str("empty-buffer"),
            Observation::Success(d) => write!(f, "success({d})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefTriple {
    k: u32,
    m: u32,
    u: u32,
    lambda: f64,
}

impl BeliefTriple {
    /// `lambda` may be exactly 1 (an update arrives every slot).
    pub fn new(k: u32, m: u32, u: u32, lambda: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k", "last observed local age must be >= 1"));
        }
        if m == 0 {
            return Err(Error::invalid("m", "elapsed slots must be >= 1"));
        }
        validate_lambda(lambda)?;
        Ok(Self { k, m, u, lambda })
    }

    /// Belief in the first slot: `D = 2` and `d` is 1 or 2.
    pub fn initial(lambda: f64) -> Result<Self> {
        Self::new(1, 1, 0, lambda)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn u(&self) -> u32 {
        self.u
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn triple(&self) -> (u32, u32, u32) {
        (self.k, self.m, self.u)
    }

    /// Destination AoI implied by the belief.
    #[inline]
    pub fn aoi(&self) -> u64 {
        self.k as u64 + self.m as u64 + self.u as u64
    }

    #[inline]
    fn gamma(&self) -> f64 {
        1.0 - self.lambda
    }

    /// Smallest support length that holds every mass point.
    pub fn support_len(&self) -> usize {
        if self.u == 0 {
            (self.k + self.m) as usize
        } else {
            (self.m + self.u) as usize
        }
    }

    /// Posterior over `d = 1..=max_support`; entry `i` is `P(d = i + 1)`.
    pub fn pmf(&self, max_support: usize) -> Result<Vec<f64>> {
        belief_pmf(self, max_support)
    }

    /// `P(I = 1)`: the buffer holds an undelivered update.
    #[inline]
    pub fn active_probability(&self) -> f64 {
        if self.u > 0 {
            1.0
        } else {
            1.0 - self.gamma().powi(self.m as i32)
        }
    }

    /// `G = D - E[d]`, the AoI drop a delivery would produce on average.
    #[inline]
    pub fn expected_age_gap(&self) -> f64 {
        let l = self.lambda;
        let g = self.gamma();
        let k = self.k as f64;
        let m = self.m as f64;
        let one_minus_gm = -(m * (-l).ln_1p()).exp_m1();
        if self.u == 0 {
            // (1 - g^m) / l is the geometric sum, so small l loses no precision.
            (m - one_minus_gm / l) + one_minus_gm * k
        } else {
            let u = self.u as f64;
            let gm = 1.0 - one_minus_gm;
            k + m + u - 1.0 / l + m * gm * g.powi(self.u as i32) / one_minus_gm
        }
    }

    /// Whether a successful delivery could carry local age `d`.
    pub fn can_deliver(&self, d: u32) -> bool {
        if d == 0 {
            return false;
        }
        if self.lambda >= 1.0 {
            return d == 1;
        }
        if self.u == 0 {
            d <= self.m
        } else {
            d <= self.m + self.u
        }
    }

    /// Belief after one slot, given what the base station observed.
    pub fn evolve(&self, obs: Observation) -> Result<Self> {
        let next = |k, m, u| Self {
            k,
            m,
            u,
            lambda: self.lambda,
        };
        match obs {
            Observation::NotScheduled if self.u > 0 => Ok(next(self.k, self.m, self.u + 1)),
            Observation::NotScheduled => Ok(next(self.k, self.m + 1, 0)),
            Observation::Failed => Ok(next(self.k, self.m, self.u + 1)),
            Observation::Success(d) if self.can_deliver(d) => Ok(next(d, 1, 0)),
            Observation::EmptyBuffer if self.u == 0 => Ok(next(self.k + self.m, 1, 0)),
            _ => Err(Error::InvalidObservation {
                observation: obs.to_string(),
                k: self.k,
                m: self.m,
                u: self.u,
            }),
        }
    }
}

pub(crate) fn validate_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "lambda",
            format!("arrival rate must be in (0, 1], got {lambda}"),
        ))
    }
}

/// Posterior over the local age; see the module docs for the closed form.
pub fn belief_pmf(b: &BeliefTriple, max_support: usize) -> Result<Vec<f64>> {
    let required = b.support_len();
    if max_support < required {
        return Err(Error::SupportTooSmall {
            given: max_support,
            required,
        });
    }
    let l = b.lambda;
    let g = b.gamma();
    let mut out = vec![0.0; max_support];
    if b.u == 0 {
        let mut mass = l;
        for slot in out.iter_mut().take(b.m as usize) {
            *slot = mass;
            mass *= g;
        }
        out[(b.k + b.m) as usize - 1] = g.powi(b.m as i32);
    } else {
        let norm = 1.0 - g.powi(b.m as i32);
        let mut mass = l;
        for (i, slot) in out.iter_mut().take((b.u + b.m) as usize).enumerate() {
            *slot = if i < b.u as usize { mass } else { mass / norm };
            mass *= g;
        }
    }
    Ok(out)
}

pub fn active_probability(b: &BeliefTriple) -> f64 {
    b.active_probability()
}

pub fn expected_age_gap(b: &BeliefTriple) -> f64 {
    b.expected_age_gap()
}

pub fn evolve(b: &BeliefTriple, obs: Observation) -> Result<BeliefTriple> {
    b.evolve(obs)
}
