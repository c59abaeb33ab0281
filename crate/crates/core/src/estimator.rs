//! Per-sample runtime: both moment recursions, derivative outputs, the
//! residual-based noise variance and the output covariance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::FilterRealization;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::network::advance;
use crate::scalar::Scalar;

/// Variances at or below this are treated as exactly zero by consumers that
/// divide by a standard deviation.
pub const VARIANCE_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState<T> {
    /// First-moment states (input `x`).
    pub w1: Vec<T>,
    /// Second-moment states (input `x²`).
    pub w2: Vec<T>,
    /// Index of the sample most recently folded in.
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFrame<T> {
    pub n: u64,
    /// `estimates[k]` is the k-th time derivative at `t = (n - q) T_s`.
    pub estimates: Vec<T>,
    pub sigma_eps2: T,
    /// `sigma_eps2 × VRF`.
    pub covariance: Matrix<T>,
}

impl<T: Scalar> EstimateFrame<T> {
    pub fn variance(&self, k: usize) -> T {
        self.covariance[(k, k)]
    }
}

/// Final-value start from the first sample: `w1 = ρ₁ x0`,
/// `w2 = ρ₂ (σ0² + x0²)`, `n = 0`.
pub fn new_estimator<T: Scalar>(
    realization: &FilterRealization<T>,
    x0: T,
    sigma0_sq: T,
) -> Result<EstimatorState<T>> {
    initial_state(realization.rho1(), realization.rho2(), x0, sigma0_sq)
}

pub(crate) fn initial_state<T: Scalar>(
    rho1: &[T],
    rho2: &[T],
    x0: T,
    sigma0_sq: T,
) -> Result<EstimatorState<T>> {
    if !(sigma0_sq >= T::zero()) {
        return Err(Error::NegativeVariance(sigma0_sq.as_f64()));
    }
    if !x0.is_finite() {
        return Err(Error::NonFiniteSample {
            index: 0,
            value: x0.as_f64(),
        });
    }
    let second = sigma0_sq + x0 * x0;
    Ok(EstimatorState {
        w1: rho1.iter().map(|&r| r * x0).collect(),
        w2: rho2.iter().map(|&r| r * second).collect(),
        n: 0,
    })
}

impl<T: Scalar> EstimatorState<T> {
    /// Folds in the next sample and returns the frame for it.
    pub fn update(&mut self, realization: &FilterRealization<T>, x: T) -> EstimateFrame<T> {
        self.advance(realization.first_moment_network().p(), x);
        self.frame(realization)
    }

    pub(crate) fn advance(&mut self, p: T, x: T) {
        advance(p, &mut self.w1, x);
        advance(p, &mut self.w2, x * x);
        self.n += 1;
    }

    /// Outputs for the current state without advancing it.
    pub fn frame(&self, realization: &FilterRealization<T>) -> EstimateFrame<T> {
        frame_from_states(realization, &self.w1, &self.w2, self.n)
    }
}

/// `(β, α)` with `β = C_1 w1` and `α = T_{φ←ψ} β`.
///
/// α holds the fitted polynomial coefficients in the lag index m, with m = 0
/// at the newest sample and increasing into the past.
pub fn coefficients<T: Scalar>(
    state: &EstimatorState<T>,
    realization: &FilterRealization<T>,
) -> (Vec<T>, Vec<T>) {
    let t = realization.transforms();
    let k1 = t.coefficient_output.cols();
    let beta = t.coefficient_output.mul_vec(&state.w1[..k1]);
    let alpha = t.phi_from_psi.mul_vec(&beta);
    (beta, alpha)
}

/// Evaluates a realization against state vectors that may be longer than its
/// own networks; only the leading K_1 / K_2 entries are read. Cascades with a
/// common `p` share their leading states, which lets several designs run off
/// one bank.
pub fn frame_from_states<T: Scalar>(
    realization: &FilterRealization<T>,
    w1: &[T],
    w2: &[T],
    n: u64,
) -> EstimateFrame<T> {
    let t = realization.transforms();
    let k1 = t.output.cols();
    let k2 = t.second_moment_output.len();
    let (w1, w2) = (&w1[..k1], &w2[..k2]);
    let estimates = t.output.mul_vec(w1);
    let beta = t.coefficient_output.mul_vec(w1);
    let weighted_squares = dot(&t.second_moment_output, w2);
    let fitted = dot(&beta, &beta);
    let residual = weighted_squares - fitted;
    // Residuals within rounding error of the two sums count as zero.
    let magnitude: T = t
        .second_moment_output
        .iter()
        .zip(w2)
        .map(|(&c, &w)| (c * w).abs())
        .sum::<T>()
        + fitted;
    let floor = T::from_count(16 * (k1 + k2)) * T::epsilon() * magnitude;
    let sigma_eps2 = if residual <= floor {
        T::zero()
    } else {
        residual * realization.residual_normalizer()
    };
    EstimateFrame {
        n,
        estimates,
        sigma_eps2,
        covariance: realization.vrf().scale(sigma_eps2),
    }
}

/// Streaming wrapper: the first sample initializes, every sample yields a
/// frame.
#[derive(Debug, Clone)]
pub struct Estimator<T> {
    realization: Arc<FilterRealization<T>>,
    sigma0_sq: T,
    state: Option<EstimatorState<T>>,
}

impl<T: Scalar> Estimator<T> {
    pub fn new(realization: impl Into<Arc<FilterRealization<T>>>, sigma0_sq: T) -> Result<Self> {
        if !(sigma0_sq >= T::zero()) {
            return Err(Error::NegativeVariance(sigma0_sq.as_f64()));
        }
        Ok(Self {
            realization: realization.into(),
            sigma0_sq,
            state: None,
        })
    }

    pub fn realization(&self) -> &FilterRealization<T> {
        &self.realization
    }

    pub fn state(&self) -> Option<&EstimatorState<T>> {
        self.state.as_ref()
    }

    /// Rejects non-finite samples without touching the state.
    pub fn push(&mut self, x: T) -> Result<EstimateFrame<T>> {
        let index = self.state.as_ref().map_or(0, |s| s.n + 1);
        if !x.is_finite() {
            return Err(Error::NonFiniteSample {
                index,
                value: x.as_f64(),
            });
        }
        match &mut self.state {
            Some(state) => Ok(state.update(&self.realization, x)),
            None => {
                let state = new_estimator(&self.realization, x, self.sigma0_sq)?;
                let frame = state.frame(&self.realization);
                self.state = Some(state);
                Ok(frame)
            }
        }
    }

    pub fn coefficients(&self) -> Option<(Vec<T>, Vec<T>)> {
        self.state
            .as_ref()
            .map(|s| coefficients(s, &self.realization))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_realization, DesignSpec};
    use crate::weights::WeightSpec;

    fn real(kx: usize, kt: usize, kappa: usize, p: f64, q: f64, ts: f64) -> FilterRealization<f64> {
        let w = WeightSpec::new(kappa, p).unwrap();
        build_realization(&DesignSpec::new(w, kx, kt, q, ts).unwrap()).unwrap()
    }

    #[test]
    fn initialization_examples() {
        let r = real(2, 1, 1, 0.8, 3.0, 1.0);
        let s = new_estimator(&r, 0.0, 0.0).unwrap();
        assert!(s.w1.iter().chain(&s.w2).all(|&v| v == 0.0));
        let s = new_estimator(&r, 100.0, 0.25).unwrap();
        for (w, rho) in s.w2.iter().zip(r.rho2()) {
            assert_eq!(*w, rho * 10000.25);
        }
        assert_eq!(s.n, 0);
        assert!(matches!(
            new_estimator(&r, 1.0, -0.1),
            Err(Error::NegativeVariance(_))
        ));
    }

    #[test]
    fn constant_input_is_flat() {
        let r = real(3, 3, 2, 0.8, 12.0, 0.5);
        let mut est = Estimator::new(r, 0.0).unwrap();
        for _ in 0..1000 {
            let f = est.push(42.5).unwrap();
            assert!((f.estimates[0] - 42.5).abs() < 1e-9);
            assert!(f.estimates[1].abs() < 1e-9 && f.estimates[2].abs() < 1e-9);
            assert!(f.sigma_eps2.abs() < 1e-9);
        }
        let (beta, alpha) = est.coefficients().unwrap();
        assert!((alpha[0] - 42.5).abs() < 1e-9);
        assert!(alpha[1].abs() < 1e-9 && alpha[2].abs() < 1e-9);
        let t = est.realization().transforms();
        assert_eq!(t.phi_from_psi.mul_vec(&beta), alpha);
    }

    #[test]
    fn ramp_coefficients_and_slope() {
        let (a, b) = (3.0, 0.25);
        let r = real(3, 2, 0, 0.8, 8.5, 0.01);
        let mut est = Estimator::new(r, 0.0).unwrap();
        let mut last = None;
        for n in 0..2000 {
            last = Some(est.push(a + b * n as f64).unwrap());
        }
        let frame = last.unwrap();
        let (_, alpha) = est.coefficients().unwrap();
        let n = 1999.0;
        assert!((alpha[0] - (a + b * n)).abs() < 1e-6);
        assert!((alpha[1] + b).abs() < 1e-9);
        assert!(alpha[2].abs() < 1e-9);
        // Slope in units per second is b / T_s.
        assert!((frame.estimates[1] - b / 0.01).abs() < 1e-6);
        assert!((frame.estimates[0] - (a + b * (n - 8.5))).abs() < 1e-6);
    }

    #[test]
    fn noiseless_quadratic_acceleration() {
        let ts = 0.01;
        let accel = -20.0;
        let r = real(3, 3, 2, 0.9, 26.23, ts);
        let mut est = Estimator::new(r, 0.0).unwrap();
        let mut frame = None;
        for n in 0..1500 {
            let t = n as f64 * ts;
            frame = Some(est.push(1000.0 + 20.0 * t + 0.5 * accel * t * t).unwrap());
        }
        let f = frame.unwrap();
        assert!(((f.estimates[2] - accel) / accel).abs() < 1e-4);
    }

    #[test]
    fn covariance_is_exact_scaling() {
        let r = real(3, 3, 1, 0.8, 5.0, 1.0);
        let vrf = r.vrf().clone();
        let mut est = Estimator::new(r, 0.3).unwrap();
        for n in 0..200 {
            let x = (n as f64 * 0.37).sin() * 5.0 + (n % 7) as f64;
            let f = est.push(x).unwrap();
            assert!(f.sigma_eps2 >= 0.0);
            assert_eq!(f.covariance, vrf.scale(f.sigma_eps2));
        }
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let r = real(2, 1, 0, 0.8, 0.0, 1.0);
        let mut est = Estimator::new(r, 0.0).unwrap();
        assert!(matches!(
            est.push(f64::NAN),
            Err(Error::NonFiniteSample { index: 0, .. })
        ));
        est.push(1.0).unwrap();
        let before = est.state().cloned();
        assert!(matches!(
            est.push(f64::INFINITY),
            Err(Error::NonFiniteSample { index: 1, .. })
        ));
        assert_eq!(est.state().cloned(), before);
    }

    #[test]
    fn nested_states_reproduce_smaller_design() {
        let small = real(2, 2, 0, 0.8, 4.0, 1.0);
        let large = real(2, 2, 3, 0.8, 4.0, 1.0);
        let mut own = Estimator::new(small.clone(), 0.0).unwrap();
        let mut shared = new_estimator(&large, 1.5, 0.0).unwrap();
        let mut f_own = own.push(1.5).unwrap();
        for n in 1..300 {
            let x = (n as f64 * 0.1).cos() * 3.0;
            f_own = own.push(x).unwrap();
            shared.advance(0.8, x);
        }
        let f_shared = frame_from_states(&small, &shared.w1, &shared.w2, shared.n);
        for (a, b) in f_own.estimates.iter().zip(&f_shared.estimates) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((f_own.sigma_eps2 - f_shared.sigma_eps2).abs() < 1e-9);
    }

    #[test]
    fn f32_estimator_runs() {
        let w = WeightSpec::new(1, 0.8f32).unwrap();
        let r = build_realization(&DesignSpec::new(w, 2, 2, 4.0, 1.0).unwrap()).unwrap();
        let mut est = Estimator::new(r, 0.0f32).unwrap();
        let mut f = est.push(2.0).unwrap();
        for _ in 0..100 {
            f = est.push(2.0).unwrap();
        }
        assert!((f.estimates[0] - 2.0).abs() < 1e-3);
    }
}
