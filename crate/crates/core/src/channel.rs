//! Per-device uplink success probability under zero-forcing reception.
//!
//! With `M` receive antennas and `K` concurrently active devices, each active
//! device is decoded with probability
//!
//! ```text
//! p(K) = sum_{m=0}^{M-K} x^m / m! * exp(-x),    x = gamma_th / (snr * omega)
//! ```
//!
//! which is the regularized upper incomplete gamma function `Q(M-K+1, x)`.
//! `p(0)` is defined as zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest antenna count accepted by [`ChannelParams::new`].
pub const MAX_ANTENNAS: usize = 64;

/// Static link-budget parameters shared by every device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    antennas: usize,
    snr: f64,
    omega: f64,
    gamma_th: f64,
}

impl ChannelParams {
    /// `snr` is linear (`P / sigma^2`), `omega` the path gain `L^-tau`.
    pub fn new(antennas: usize, snr: f64, omega: f64, gamma_th: f64) -> Result<Self> {
        if antennas == 0 || antennas > MAX_ANTENNAS {
            return Err(Error::invalid(
                "antennas",
                format!("must be in 1..={MAX_ANTENNAS}, got {antennas}"),
            ));
        }
        for (name, v) in [("snr", snr), ("omega", omega), ("gamma_th", gamma_th)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and positive, got {v}")));
            }
        }
        let params = Self {
            antennas,
            snr,
            omega,
            gamma_th,
        };
        let x = params.load_factor();
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::invalid(
                "snr",
                format!("load factor {x} is not finite and positive"),
            ));
        }
        Ok(params)
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn gamma_th(&self) -> f64 {
        self.gamma_th
    }

    /// `x = gamma_th / (snr * omega)`.
    pub fn load_factor(&self) -> f64 {
        self.gamma_th / (self.snr * self.omega)
    }

    pub fn success_prob(&self, active_count: usize) -> Result<f64> {
        success_prob(self, active_count)
    }

    pub fn success_table(&self) -> SuccessTable {
        SuccessTable::new(self)
    }
}

/// Success probability of each of `active_count` concurrently active devices.
pub fn success_prob(params: &ChannelParams, active_count: usize) -> Result<f64> {
    let m = params.antennas;
    if active_count > m {
        return Err(Error::TooManyActive {
            active: active_count,
            antennas: m,
        });
    }
    if active_count == 0 {
        return Ok(0.0);
    }
    let x = params.load_factor();
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..=(m - active_count) {
        term *= x / j as f64;
        sum += term;
    }
    Ok((sum * (-x).exp()).min(1.0))
}

/// `p(0..=M)` evaluated once, for hot loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTable {
    probs: Vec<f64>,
}

impl SuccessTable {
    pub fn new(params: &ChannelParams) -> Self {
        let m = params.antennas;
        let probs = (0..=m).map(|k| success_prob(params, k).expect("k <= M")).collect();
        Self { probs }
    }

    #[cfg(test)]
    pub(crate) fn from_probs(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn antennas(&self) -> usize {
        self.probs.len() - 1
    }

    /// `p(k)`; panics if `k > M`.
    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.probs[k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}
