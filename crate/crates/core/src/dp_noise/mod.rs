//! Laplace perturbation shared by the meters and the grid utility.
//!
//! A meter reports `P_v = I_v + |L|` with `L ~ Laplace(mu, delta_f / epsilon)`;
//! the utility removes an independent folded draw of the same scale to get the
//! bill reading `B_R = max(0, P_v - |L'|)`. Both folded draws have mean equal to
//! the scale, so the two stages cancel in expectation.

pub mod audit;
pub mod streams;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Budget, location and sensitivity for one perturbation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    mu: f64,
    delta_f: f64,
    scale: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, mu: f64, delta_f: f64) -> Result<Self> {
        let scale = compute_scale(delta_f, epsilon)?;
        if !mu.is_finite() {
            return Err(Error::Parameter {
                name: "mu",
                value: mu,
                requirement: "finite",
            });
        }
        Ok(Self {
            epsilon,
            mu,
            delta_f,
            scale,
        })
    }

    /// Zero-centered noise with the given budget and sensitivity.
    pub fn centered(epsilon: f64, delta_f: f64) -> Result<Self> {
        Self::new(epsilon, 0.0, delta_f)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Same location and sensitivity, different budget.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.mu, self.delta_f)
    }
}

/// One Laplace draw and its folded magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSample {
    pub raw: f64,
    pub magnitude: f64,
}

impl NoiseSample {
    pub fn from_raw(raw: f64) -> Self {
        Self {
            raw,
            magnitude: raw.abs(),
        }
    }
}

pub fn compute_scale(delta_f: f64, epsilon: f64) -> Result<f64> {
    if !(delta_f > 0.0 && delta_f.is_finite()) {
        return Err(Error::Parameter {
            name: "delta_f",
            value: delta_f,
            requirement: "positive and finite",
        });
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter {
            name: "epsilon",
            value: epsilon,
            requirement: "positive and finite",
        });
    }
    Ok(delta_f / epsilon)
}

/// Draws from Laplace(mu, scale) by inverting the CDF.
///
/// `u` is drawn from the open interval (0, 1) so the logarithm stays finite.
pub fn sample_laplace<R: Rng + ?Sized>(mu: f64, scale: f64, rng: &mut R) -> NoiseSample {
    debug_assert!(scale > 0.0);
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let v = u - 0.5;
    let raw = mu - scale * v.signum() * (1.0 - 2.0 * v.abs()).ln();
    NoiseSample::from_raw(raw)
}

/// Anything that can hand out noise samples for a stage.
pub trait NoiseSource {
    fn draw(&mut self, mu: f64, scale: f64) -> NoiseSample;
}

/// Laplace noise backed by a seeded generator.
#[derive(Debug, Clone)]
pub struct LaplaceNoise<R> {
    rng: R,
}

impl<R: Rng> LaplaceNoise<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

impl<R: Rng> NoiseSource for LaplaceNoise<R> {
    fn draw(&mut self, mu: f64, scale: f64) -> NoiseSample {
        sample_laplace(mu, scale, &mut self.rng)
    }
}

/// The scale -> 0 limit: every draw is exactly zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn draw(&mut self, _mu: f64, _scale: f64) -> NoiseSample {
        NoiseSample::from_raw(0.0)
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn draw(&mut self, mu: f64, scale: f64) -> NoiseSample {
        (**self).draw(mu, scale)
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for Box<N> {
    fn draw(&mut self, mu: f64, scale: f64) -> NoiseSample {
        (**self).draw(mu, scale)
    }
}

/// Whether a simulation stage draws real noise or runs in the zero-noise limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Laplace,
    Off,
}

/// Noise source for one meter or for the utility.
#[derive(Debug, Clone)]
pub enum StageNoise {
    Laplace(Box<LaplaceNoise<rand_chacha::ChaCha8Rng>>),
    Zero,
}

impl StageNoise {
    pub fn for_stream(mode: NoiseMode, seed: u64, stream: streams::Stream) -> Self {
        match mode {
            NoiseMode::Laplace => StageNoise::Laplace(Box::new(LaplaceNoise::new(
                streams::stream_rng(seed, stream),
            ))),
            NoiseMode::Off => StageNoise::Zero,
        }
    }
}

impl NoiseSource for StageNoise {
    fn draw(&mut self, mu: f64, scale: f64) -> NoiseSample {
        match self {
            StageNoise::Laplace(n) => n.draw(mu, scale),
            StageNoise::Zero => ZeroNoise.draw(mu, scale),
        }
    }
}

/// Meter side: `P_v = I_v + |noise|`.
pub fn protect_reading<N: NoiseSource + ?Sized>(
    i_v: f64,
    params: &PrivacyParams,
    noise: &mut N,
) -> Result<f64> {
    if !(i_v >= 0.0 && i_v.is_finite()) {
        return Err(Error::InputDomain {
            name: "i_v",
            value: i_v,
            requirement: "non-negative and finite",
        });
    }
    let sample = noise.draw(params.mu, params.scale);
    Ok(i_v + sample.magnitude)
}

/// Grid side: `B_R = max(0, P_v - |noise|)`.
pub fn adjust_reading<N: NoiseSource + ?Sized>(
    p_v: f64,
    params: &PrivacyParams,
    noise: &mut N,
) -> Result<f64> {
    if !(p_v >= 0.0 && p_v.is_finite()) {
        return Err(Error::InputDomain {
            name: "p_v",
            value: p_v,
            requirement: "non-negative and finite",
        });
    }
    let sample = noise.draw(params.mu, params.scale);
    Ok((p_v - sample.magnitude).max(0.0))
}
