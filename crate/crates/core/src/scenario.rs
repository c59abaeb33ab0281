//! Seeded synthetic data: a Newtonian target track and the edge, peak and
//! trend-change waveforms.
//!
//! Noise comes from ChaCha8 seeded with `seed_from_u64`; Gaussian variates use
//! the Box-Muller transform on pairs of uniforms in (0, 1], cosine branch
//! first, sine branch cached for the next draw.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples in every detector waveform.
pub const WAVEFORM_LEN: usize = 400;
/// Default measurement noise of the waveforms.
pub const WAVEFORM_NOISE_STD: f64 = 0.5;
/// First and one-past-last sample of the rectangular pulse before smearing.
pub const PULSE_SPAN: (usize, usize) = (150, 250);
pub const PULSE_SMEAR_STD: f64 = 8.0;
pub const PULSE_AMPLITUDE: f64 = 20.0;
pub const BACKGROUND: f64 = 100.0;
pub const TARGET_CENTER: usize = 300;
pub const CLUTTER_CENTER: usize = 200;

/// Seeded standard normal source.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on (0, 1] with 53 random bits.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let radius = (-2.0 * self.uniform().ln()).sqrt();
        let angle = std::f64::consts::TAU * self.uniform();
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn next_scaled(&mut self, std: f64) -> f64 {
        if std == 0.0 {
            0.0
        } else {
            std * self.next_standard()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum AccelMode {
    Constant(f64),
    /// Independent zero-mean Gaussian acceleration each period.
    GaussianRandom(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScenario {
    pub sample_period: f64,
    pub samples: usize,
    pub initial_position: f64,
    pub initial_velocity: f64,
    pub accel: AccelMode,
    pub noise_std: f64,
    pub seed: u64,
}

impl TargetScenario {
    /// 200 samples at 10 ms, starting at 1000 px moving 20 px/s, braking at
    /// 20 px/s², measured with 0.5 px noise.
    pub fn constant_acceleration(seed: u64) -> Self {
        Self {
            sample_period: 0.01,
            samples: 200,
            initial_position: 1000.0,
            initial_velocity: 20.0,
            accel: AccelMode::Constant(-20.0),
            noise_std: 0.5,
            seed,
        }
    }

    /// Same start, with acceleration drawn each period from N(0, 100²).
    pub fn random_acceleration(seed: u64) -> Self {
        Self {
            accel: AccelMode::GaussianRandom(100.0),
            ..Self::constant_acceleration(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let std_ok = match self.accel {
            AccelMode::Constant(a) => a.is_finite(),
            AccelMode::GaussianRandom(s) => s >= 0.0 && s.is_finite(),
        };
        if self.samples == 0
            || !(self.sample_period > 0.0)
            || !self.sample_period.is_finite()
            || !(self.noise_std >= 0.0)
            || !self.noise_std.is_finite()
            || !self.initial_position.is_finite()
            || !self.initial_velocity.is_finite()
            || !std_ok
        {
            return Err(Error::InvalidDesign(format!(
                "invalid target scenario: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrack {
    /// `[position, velocity, acceleration]` per sample.
    pub truth: Vec<[f64; 3]>,
    pub measurements: Vec<f64>,
}

/// `w[n] = G w[n-1] + H a[n]` with `G = [[1, T_s], [0, 1]]`,
/// `H = [T_s²/2, T_s]`; sample 0 is the initial state. Per sample the
/// acceleration is drawn (random mode) before the measurement noise.
pub fn simulate_target(s: &TargetScenario) -> Result<TargetTrack> {
    s.validate()?;
    let ts = s.sample_period;
    let mut noise = GaussianSource::new(s.seed);
    let (mut pos, mut vel) = (s.initial_position, s.initial_velocity);
    let mut truth = Vec::with_capacity(s.samples);
    let mut measurements = Vec::with_capacity(s.samples);
    for n in 0..s.samples {
        let a = match s.accel {
            AccelMode::Constant(a) => a,
            AccelMode::GaussianRandom(std) => noise.next_scaled(std),
        };
        if n > 0 {
            pos += ts * vel + 0.5 * ts * ts * a;
            vel += ts * a;
        }
        truth.push([pos, vel, a]);
        measurements.push(pos + noise.next_scaled(s.noise_std));
    }
    Ok(TargetTrack {
        truth,
        measurements,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub clean: Vec<f64>,
    pub measurements: Vec<f64>,
}

fn with_noise(clean: Vec<f64>, noise_std: f64, seed: u64) -> Waveform {
    let mut noise = GaussianSource::new(seed);
    let measurements = clean
        .iter()
        .map(|&c| c + noise.next_scaled(noise_std))
        .collect();
    Waveform {
        clean,
        measurements,
    }
}

fn gaussian(n: usize, center: usize, std: f64) -> f64 {
    let d = (n as f64 - center as f64) / std;
    (-0.5 * d * d).exp()
}

/// Rectangular pulse over [`PULSE_SPAN`] convolved with a unit-area sampled
/// Gaussian (truncated at ±6σ), rescaled to peak at [`PULSE_AMPLITUDE`].
pub fn smeared_pulse() -> Vec<f64> {
    let reach = (6.0 * PULSE_SMEAR_STD).ceil() as i64;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|j| (-0.5 * (j as f64 / PULSE_SMEAR_STD).powi(2)).exp())
        .collect();
    let area: f64 = kernel.iter().sum();
    let (start, end) = (PULSE_SPAN.0 as i64, PULSE_SPAN.1 as i64);
    let raw: Vec<f64> = (0..WAVEFORM_LEN as i64)
        .map(|n| {
            (-reach..=reach)
                .zip(&kernel)
                .filter(|(j, _)| (start..end).contains(&(n - j)))
                .map(|(_, k)| k / area)
                .sum()
        })
        .collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    raw.into_iter()
        .map(|v| v * PULSE_AMPLITUDE / peak)
        .collect()
}

/// Smeared pulse on a constant background.
pub fn synth_edge_waveform(noise_std: f64, seed: u64) -> Waveform {
    let clean = smeared_pulse()
        .into_iter()
        .map(|v| v + BACKGROUND)
        .collect();
    with_noise(clean, noise_std, seed)
}

/// `n (n - (N-1)/2) (n - (N-1))` mapped affinely so its extremes over the
/// sample grid land on 10 and 20.
pub fn interference() -> Vec<f64> {
    let last = (WAVEFORM_LEN - 1) as f64;
    let cubic: Vec<f64> = (0..WAVEFORM_LEN)
        .map(|n| {
            let x = n as f64;
            x * (x - 0.5 * last) * (x - last)
        })
        .collect();
    let lo = cubic.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cubic.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    cubic
        .into_iter()
        .map(|c| 10.0 + 10.0 * (c - lo) / (hi - lo))
        .collect()
}

/// Wide target (amplitude 10, σ = 12) at n = 300 and a narrow clutter spike
/// (amplitude 10, σ = 2) at n = 200 on the cubic interference.
pub fn synth_peak_waveform(noise_std: f64, seed: u64) -> Waveform {
    let clean = interference()
        .into_iter()
        .enumerate()
        .map(|(n, base)| {
            base + 10.0 * gaussian(n, TARGET_CENTER, 12.0) + 10.0 * gaussian(n, CLUTTER_CENTER, 2.0)
        })
        .collect();
    with_noise(clean, noise_std, seed)
}

/// Smeared pulse on the ramp `100 + n/10`.
pub fn synth_change_waveform(noise_std: f64, seed: u64) -> Waveform {
    let clean = smeared_pulse()
        .into_iter()
        .enumerate()
        .map(|(n, v)| v + BACKGROUND + n as f64 / 10.0)
        .collect();
    with_noise(clean, noise_std, seed)
}
