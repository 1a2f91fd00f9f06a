//! Packet-drop channel with power-dependent success probability.
//!
//! A packet sent with power `ω` over a link with power gain `g` is lost
//! with probability `exp(-α g ω / (N₀W))`; without fading `g = 1` and this
//! is `q^ω` with `q = exp(-α / (N₀W))`. Under Rayleigh block fading the
//! gain is exponential with mean `h̄`, drawn once per slot and known to
//! the transmitter before it picks `ω`. Acknowledgements are instantaneous
//! and lossless.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("noise power N0*W must be positive, got {0}")]
    InvalidNoise(f64),
    #[error("mean fading gain must be positive, got {0}")]
    InvalidMeanGain(f64),
    #[error("channel gain must be positive, got {0}")]
    InvalidGain(f64),
    #[error("transmission power must be nonnegative, got {0}")]
    NegativePower(f64),
    #[error("fading statistics are not configured")]
    FadingNotConfigured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    pub mean_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub alpha: f64,
    /// `N₀ · W`.
    pub n0w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fading: Option<FadingParams>,
}

impl ChannelParams {
    pub fn new(alpha: f64, n0w: f64) -> Result<Self, ChannelError> {
        let params = Self {
            alpha,
            n0w,
            fading: None,
        };
        params.validate()?;
        Ok(params)
    }

    /// Channel with `α = 1` and the given `N₀W/α`.
    pub fn with_noise_ratio(ratio: f64) -> Result<Self, ChannelError> {
        Self::new(1.0, ratio)
    }

    pub fn with_fading(mut self, mean_gain: f64) -> Result<Self, ChannelError> {
        self.fading = Some(FadingParams { mean_gain });
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ChannelError::InvalidAlpha(self.alpha));
        }
        if !(self.n0w > 0.0 && self.n0w.is_finite()) {
            return Err(ChannelError::InvalidNoise(self.n0w));
        }
        if let Some(f) = self.fading {
            if !(f.mean_gain > 0.0 && f.mean_gain.is_finite()) {
                return Err(ChannelError::InvalidMeanGain(f.mean_gain));
            }
        }
        Ok(())
    }

    /// `q = exp(-α / (N₀W))`.
    pub fn q(&self) -> f64 {
        (-(self.alpha / self.n0w)).exp()
    }

    /// `N₀W / α`, the power scale that recurs in every controller formula.
    pub fn noise_ratio(&self) -> f64 {
        self.n0w / self.alpha
    }

    /// Parameters seen by a transmitter whose link gain is `gain`: the
    /// received-power coupling folds the gain into the noise level.
    pub fn effective(&self, gain: f64) -> Result<Self, ChannelError> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(ChannelError::InvalidGain(gain));
        }
        Ok(Self {
            alpha: self.alpha,
            n0w: self.n0w / gain,
            fading: None,
        })
    }
}

/// `Pr(γ = 0 | ω, g) = exp(-α g ω / (N₀W))`.
pub fn drop_probability(power: f64, gain: f64, params: &ChannelParams) -> Result<f64, ChannelError> {
    if power < 0.0 || power.is_nan() {
        return Err(ChannelError::NegativePower(power));
    }
    if !(gain > 0.0) {
        return Err(ChannelError::InvalidGain(gain));
    }
    Ok((-(params.alpha / params.n0w) * (gain * power)).exp())
}

/// Bernoulli packet outcome from a uniform draw `u ∈ [0, 1)`; the packet
/// is lost when `u` falls below the drop probability. Returns `γ`.
pub fn transmit_with_uniform(
    power: f64,
    gain: f64,
    params: &ChannelParams,
    u: f64,
) -> Result<bool, ChannelError> {
    let p = drop_probability(power, gain, params)?;
    Ok(u >= p)
}

/// Sends one packet; `true` when it arrives.
pub fn transmit<R: Rng + ?Sized>(
    power: f64,
    gain: f64,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<bool, ChannelError> {
    let u: f64 = rng.random();
    transmit_with_uniform(power, gain, params, u)
}

/// One block-fading power gain, exponential with mean `h̄`.
pub fn sample_fading_gain<R: Rng + ?Sized>(
    params: &ChannelParams,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    let fading = params.fading.ok_or(ChannelError::FadingNotConfigured)?;
    let exp = Exp::new(1.0 / fading.mean_gain).map_err(|_| ChannelError::InvalidMeanGain(fading.mean_gain))?;
    Ok(exp.sample(rng))
}
