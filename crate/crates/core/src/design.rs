//! Turns regression parameters into a frozen state-space realization.
//!
//! The first-moment network (order `K_1 = κ + K_X`) accumulates the weighted
//! projections `Σ m^(κ+k) p^m x[n-m]`; the second-moment network (order
//! `K_2 = κ + 1`) accumulates `Σ m^κ p^m x[n-m]²`. Everything else is a fixed
//! output matrix applied to those states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{
    build_network, impulse_to_weight_transform, steady_state_vector, transform_as, NetworkMatrices,
};
use crate::scalar::Scalar;
use crate::variance::{self, VrfReport};
use crate::weights::{erlang_sum, WeightSpec};

/// Largest overlap-matrix condition estimate accepted by [`build_realization`].
pub const CONDITION_LIMIT: f64 = 1e12;

/// Full filter parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec<T> {
    weight: WeightSpec<T>,
    model_order: usize,
    derivatives: usize,
    delay: T,
    sample_period: T,
}

impl<T: Scalar> DesignSpec<T> {
    /// `model_order` is K_X (polynomial degree + 1), `derivatives` is K_t,
    /// `delay` is q in samples and `sample_period` is T_s in seconds.
    pub fn new(
        weight: WeightSpec<T>,
        model_order: usize,
        derivatives: usize,
        delay: T,
        sample_period: T,
    ) -> Result<Self> {
        if model_order == 0 {
            return Err(Error::InvalidDesign(
                "model order K_X must be at least 1".into(),
            ));
        }
        if derivatives == 0 || derivatives > model_order {
            return Err(Error::InvalidDesign(format!(
                "derivative count K_t = {derivatives} must lie in 1..={model_order}"
            )));
        }
        if !(sample_period > T::zero()) || !sample_period.is_finite() {
            return Err(Error::InvalidDesign(format!(
                "sampling period must be positive, got {sample_period}"
            )));
        }
        if !delay.is_finite() {
            return Err(Error::InvalidDesign(format!(
                "delay must be finite, got {delay}"
            )));
        }
        Ok(Self {
            weight,
            model_order,
            derivatives,
            delay,
            sample_period,
        })
    }

    /// Same parameters with the VRF-optimal smoother delay filled in.
    pub fn with_optimal_delay(
        weight: WeightSpec<T>,
        model_order: usize,
        derivatives: usize,
        sample_period: T,
    ) -> Result<(Self, VrfReport<T>)> {
        let provisional = Self::new(weight, model_order, derivatives, T::zero(), sample_period)?;
        let report = variance::optimal_delay(&provisional)?;
        Ok((provisional.with_delay(report.q_optimal)?, report))
    }

    pub fn with_delay(&self, delay: T) -> Result<Self> {
        Self::new(
            self.weight,
            self.model_order,
            self.derivatives,
            delay,
            self.sample_period,
        )
    }

    pub fn weight(&self) -> &WeightSpec<T> {
        &self.weight
    }

    pub fn kappa(&self) -> usize {
        self.weight.kappa()
    }

    pub fn p(&self) -> T {
        self.weight.p()
    }

    /// K_X.
    pub fn model_order(&self) -> usize {
        self.model_order
    }

    /// K_t.
    pub fn derivatives(&self) -> usize {
        self.derivatives
    }

    /// q, in samples.
    pub fn delay(&self) -> T {
        self.delay
    }

    /// T_s, in seconds.
    pub fn sample_period(&self) -> T {
        self.sample_period
    }

    /// K_1 = κ + K_X.
    pub fn first_moment_order(&self) -> usize {
        self.kappa() + self.model_order
    }

    /// K_2 = κ + 1.
    pub fn second_moment_order(&self) -> usize {
        self.kappa() + 1
    }
}

/// The fixed matrices of a realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSet<T> {
    /// `S_φWφ`, K_X × K_X.
    pub overlap: Matrix<T>,
    /// `T_{ψ←φ}`, lower triangular.
    pub psi_from_phi: Matrix<T>,
    /// `T_{φ←ψ}`, upper triangular.
    pub phi_from_psi: Matrix<T>,
    /// `D_q`, K_t × K_X.
    pub synthesis: Matrix<T>,
    /// `C_1`, K_X × K_1: network states to orthonormal coefficients β.
    pub coefficient_output: Matrix<T>,
    /// `C_q`, K_t × K_1: network states to derivative estimates.
    pub output: Matrix<T>,
    /// `C_2`, length K_2: second-moment states to the weighted sum of squares.
    pub second_moment_output: Vec<T>,
}

/// Everything the streaming estimator needs at runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRealization<T> {
    spec: DesignSpec<T>,
    net1: NetworkMatrices<T>,
    net2: NetworkMatrices<T>,
    transforms: TransformSet<T>,
    rho1: Vec<T>,
    rho2: Vec<T>,
    gamma: T,
    residual_normalizer: T,
    vrf: Matrix<T>,
}

impl<T: Scalar> FilterRealization<T> {
    pub fn spec(&self) -> &DesignSpec<T> {
        &self.spec
    }

    pub fn first_moment_network(&self) -> &NetworkMatrices<T> {
        &self.net1
    }

    pub fn second_moment_network(&self) -> &NetworkMatrices<T> {
        &self.net2
    }

    pub fn transforms(&self) -> &TransformSet<T> {
        &self.transforms
    }

    pub fn rho1(&self) -> &[T] {
        &self.rho1
    }

    pub fn rho2(&self) -> &[T] {
        &self.rho2
    }

    /// Weight normalizer `1/S_κ(p)`.
    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Scale turning the weighted residual sum of squares into an unbiased
    /// noise-variance estimate: `1 / (S_κ(p) - tr(S_φWφ⁻¹ S_WφWφ))`.
    pub fn residual_normalizer(&self) -> T {
        self.residual_normalizer
    }

    /// (Co)variance reduction factors of the derivative outputs.
    pub fn vrf(&self) -> &Matrix<T> {
        &self.vrf
    }

    pub fn delay(&self) -> T {
        self.spec.delay
    }

    /// Impulse response of output `k_t` for `m = 0..len`.
    pub fn impulse_response(&self, kt: usize, len: usize) -> Vec<T> {
        let row = self.transforms.output.row(kt);
        let phi = self.net1.impulse_responses(len);
        (0..len)
            .map(|m| row.iter().zip(&phi).map(|(&c, ph)| c * ph[m]).sum())
            .collect()
    }

    /// Reassembles a realization from previously frozen parts, checking
    /// dimensions only; no design math is recomputed.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        spec: DesignSpec<T>,
        net1: NetworkMatrices<T>,
        net2: NetworkMatrices<T>,
        transforms: TransformSet<T>,
        rho1: Vec<T>,
        rho2: Vec<T>,
        gamma: T,
        residual_normalizer: T,
        vrf: Matrix<T>,
    ) -> Result<Self> {
        let (kx, kt) = (spec.model_order, spec.derivatives);
        let (k1, k2) = (spec.first_moment_order(), spec.second_moment_order());
        let checks = [
            (net1.order(), k1),
            (net2.order(), k2),
            (rho1.len(), k1),
            (rho2.len(), k2),
            (transforms.overlap.rows(), kx),
            (transforms.overlap.cols(), kx),
            (transforms.psi_from_phi.rows(), kx),
            (transforms.phi_from_psi.rows(), kx),
            (transforms.synthesis.rows(), kt),
            (transforms.synthesis.cols(), kx),
            (transforms.coefficient_output.rows(), kx),
            (transforms.coefficient_output.cols(), k1),
            (transforms.output.rows(), kt),
            (transforms.output.cols(), k1),
            (transforms.second_moment_output.len(), k2),
            (vrf.rows(), kt),
            (vrf.cols(), kt),
        ];
        for (got, expected) in checks {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        Ok(Self {
            spec,
            net1,
            net2,
            transforms,
            rho1,
            rho2,
            gamma,
            residual_normalizer,
            vrf,
        })
    }
}

/// `S_φWφ[a][b] = S_{a+b+κ}(p)`.
pub fn overlap_matrix<T: Scalar>(spec: &DesignSpec<T>) -> Result<Matrix<T>> {
    sum_matrix(spec.model_order, spec.kappa(), spec.p())
}

pub(crate) fn sum_matrix<T: Scalar>(n: usize, offset: usize, p: T) -> Result<Matrix<T>> {
    let sums = (0..2 * n - 1)
        .map(|k| erlang_sum(k + offset, p))
        .collect::<Result<Vec<T>>>()?;
    Ok(Matrix::from_fn(n, n, |a, b| sums[a + b]))
}

/// Cholesky factorization `S = L Lᵀ` (no pivoting), returning
/// `(T_{ψ←φ}, T_{φ←ψ}) = (L⁻¹, L⁻ᵀ)`.
///
/// Rejects matrices whose 1-norm condition estimate exceeds
/// [`CONDITION_LIMIT`].
pub fn orthonormal_transforms<T: Scalar>(overlap: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let n = overlap.rows();
    if overlap.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: overlap.cols(),
        });
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = overlap[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: pivot.as_f64(),
            });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut v = overlap[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    // L⁻¹ column by column via forward substitution.
    let mut l_inv = Matrix::zeros(n, n);
    for c in 0..n {
        for r in c..n {
            let mut v = if r == c { T::one() } else { T::zero() };
            for k in c..r {
                v -= l[(r, k)] * l_inv[(k, c)];
            }
            l_inv[(r, c)] = v / l[(r, r)];
        }
    }
    let upper = l_inv.transpose();
    let inverse = upper.matmul(&l_inv);
    let condition = overlap.norm_1() * inverse.norm_1();
    if !(condition.as_f64() <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition: condition.as_f64(),
            limit: CONDITION_LIMIT,
        });
    }
    Ok((l_inv, upper))
}

/// `D_q[k_t][k] = (-1/T_s)^k_t · k!/(k-k_t)! · q^(k-k_t)` for `k_t ≤ k`, else 0.
///
/// The model origin is the newest sample with the lag index running into the
/// past, so each time derivative flips sign relative to a lag derivative.
pub fn synthesis_matrix<T: Scalar>(spec: &DesignSpec<T>) -> Matrix<T> {
    synthesis_at(
        spec.model_order,
        spec.derivatives,
        spec.delay,
        spec.sample_period,
    )
}

pub(crate) fn synthesis_at<T: Scalar>(kx: usize, kt: usize, q: T, ts: T) -> Matrix<T> {
    let time_scale = -T::one() / ts;
    Matrix::from_fn(kt, kx, |d, k| {
        if d > k {
            return T::zero();
        }
        time_scale.powi(d as i32) * falling_factorial::<T>(k, d) * q.powi((k - d) as i32)
    })
}

/// `k! / (k - d)!`
pub(crate) fn falling_factorial<T: Scalar>(k: usize, d: usize) -> T {
    ((k - d + 1)..=k).fold(T::one(), |acc, f| acc * T::from_count(f))
}

pub fn build_realization<T: Scalar>(spec: &DesignSpec<T>) -> Result<FilterRealization<T>> {
    let reject = |e: Error| match e {
        Error::IllConditioned { .. } | Error::NotPositiveDefinite { .. } => Error::RejectedDesign {
            kappa: spec.kappa(),
            p: spec.p().as_f64(),
            model_order: spec.model_order,
            reason: e.to_string(),
        },
        other => other,
    };
    let (kappa, kx) = (spec.kappa(), spec.model_order);
    let (k1, k2) = (spec.first_moment_order(), spec.second_moment_order());
    let p = spec.p();

    let overlap = overlap_matrix(spec)?;
    let (psi_from_phi, phi_from_psi) = orthonormal_transforms(&overlap).map_err(reject)?;

    let weights_from_states: Matrix<T> = transform_as(&impulse_to_weight_transform(k1)?);
    // T_{φ←w} T_{w←φ}: rows κ..κ+K_X pick the weights m^(κ+k) p^m.
    let projection = weights_from_states.row_block(kappa, kx);
    let coefficient_output = psi_from_phi.matmul(&projection);
    let synthesis = synthesis_matrix(spec);
    let output = synthesis.matmul(&phi_from_psi).matmul(&coefficient_output);
    let second: Matrix<T> = transform_as(&impulse_to_weight_transform(k2)?);
    let second_moment_output = second.row(k2 - 1).to_vec();

    let transforms = TransformSet {
        overlap,
        psi_from_phi,
        phi_from_psi,
        synthesis,
        coefficient_output,
        output,
        second_moment_output,
    };
    let vrf = variance::vrf_matrix(spec, &transforms)?;
    let residual_normalizer = variance::residual_normalizer(spec, &transforms)?;

    Ok(FilterRealization {
        spec: *spec,
        net1: build_network(k1, p)?,
        net2: build_network(k2, p)?,
        rho1: steady_state_vector(k1, p)?,
        rho2: steady_state_vector(k2, p)?,
        gamma: T::one() / erlang_sum(kappa, p)?,
        residual_normalizer,
        vrf,
        transforms,
    })
}
