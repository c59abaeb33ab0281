//! Noise gain of a design: variance reduction factors, the impulse-response
//! (Parseval) cross-check and the VRF-optimal delay.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{
    build_realization, orthonormal_transforms, overlap_matrix, sum_matrix, synthesis_at,
    DesignSpec, FilterRealization, TransformSet,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::advance;
use crate::scalar::Scalar;
use crate::weights::erlang_sum;

/// Impulse responses longer than this are treated as non-convergent.
pub const PARSEVAL_LIMIT: usize = 1_000_000;

const IMAG_TOLERANCE: f64 = 1e-8;
const CLASSIFY_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationaryKind {
    Minimum,
    Maximum,
    Flat,
}

/// A real root of the derivative of the VRF polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint<T> {
    pub q: T,
    pub vrf: T,
    pub kind: StationaryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrfReport<T> {
    /// K_t × K_t VRF evaluated at `q_optimal`.
    pub vrf: Matrix<T>,
    pub q_optimal: T,
    /// Stationary delays, ascending in q.
    pub candidates: Vec<StationaryPoint<T>>,
}

/// `S_WφWφ[a][b] = S_{a+b+2κ}(p²)`.
pub fn second_moment_overlap<T: Scalar>(spec: &DesignSpec<T>) -> Result<Matrix<T>> {
    let p = spec.p();
    sum_matrix(spec.model_order(), 2 * spec.kappa(), p * p)
}

fn overlap_inverse<T: Scalar>(transforms: &TransformSet<T>) -> Matrix<T> {
    transforms.phi_from_psi.matmul(&transforms.psi_from_phi)
}

/// `VRF = C_φ S_WφWφ C_φᵀ` with `C_φ = D_q S_φWφ⁻¹`.
pub fn vrf_matrix<T: Scalar>(
    spec: &DesignSpec<T>,
    transforms: &TransformSet<T>,
) -> Result<Matrix<T>> {
    let c_phi = transforms.synthesis.matmul(&overlap_inverse(transforms));
    let raw = c_phi
        .matmul(&second_moment_overlap(spec)?)
        .matmul(&c_phi.transpose());
    let half = T::lit(0.5);
    let sym = raw.transpose();
    Ok(Matrix::from_fn(raw.rows(), raw.cols(), |r, c| {
        half * (raw[(r, c)] + sym[(r, c)])
    }))
}

/// `1 / (S_κ(p) - tr(S_φWφ⁻¹ S_WφWφ))`.
///
/// The weighted residual sum of squares of white noise with variance σ² has
/// expectation σ² times the denominator.
pub fn residual_normalizer<T: Scalar>(
    spec: &DesignSpec<T>,
    transforms: &TransformSet<T>,
) -> Result<T> {
    let product = overlap_inverse(transforms).matmul(&second_moment_overlap(spec)?);
    let trace: T = (0..product.rows()).map(|i| product[(i, i)]).sum();
    let dof = erlang_sum(spec.kappa(), spec.p())? - trace;
    if !(dof > T::zero()) {
        return Err(Error::InvalidDesign(format!(
            "no residual degrees of freedom left (effective count {dof})"
        )));
    }
    Ok(T::one() / dof)
}

/// `Σ_m h_a[m] h_b[m]` from the explicit impulse responses of outputs `k_a`
/// and `k_b`, extending the horizon by doubling (starting at `horizon`) until
/// the last block adds less than 1e-12 of the accumulated energy.
pub fn vrf_by_parseval<T: Scalar>(
    realization: &FilterRealization<T>,
    k_a: usize,
    k_b: usize,
    horizon: usize,
) -> Result<T> {
    let kt = realization.spec().derivatives();
    for k in [k_a, k_b] {
        if k >= kt {
            return Err(Error::DimensionMismatch {
                expected: kt,
                got: k + 1,
            });
        }
    }
    let c = &realization.transforms().output;
    let (row_a, row_b) = (c.row(k_a), c.row(k_b));
    let p = realization.first_moment_network().p();
    let mut w = vec![T::zero(); c.cols()];
    let tol = T::lit(1e-12);

    let (mut cross, mut energy_a, mut energy_b) = (T::zero(), T::zero(), T::zero());
    let mut m = 0usize;
    let mut block_end = horizon.max(16);
    loop {
        let (mut block_a, mut block_b) = (T::zero(), T::zero());
        while m < block_end {
            advance(p, &mut w, if m == 0 { T::one() } else { T::zero() });
            let ha: T = row_a.iter().zip(&w).map(|(&r, &s)| r * s).sum();
            let hb: T = row_b.iter().zip(&w).map(|(&r, &s)| r * s).sum();
            cross += ha * hb;
            block_a += ha * ha;
            block_b += hb * hb;
            m += 1;
        }
        energy_a += block_a;
        energy_b += block_b;
        if block_a <= tol * energy_a && block_b <= tol * energy_b {
            return Ok(cross);
        }
        if block_end >= PARSEVAL_LIMIT {
            return Err(Error::NoConvergence(PARSEVAL_LIMIT));
        }
        block_end = (block_end * 2).min(PARSEVAL_LIMIT);
    }
}

/// Coefficients (ascending powers of q) of `VRF[k_t][k_t]` as a polynomial in
/// the delay.
pub fn vrf_polynomial<T: Scalar>(spec: &DesignSpec<T>, kt: usize) -> Result<Vec<T>> {
    let kx = spec.model_order();
    if kt >= kx {
        return Err(Error::DimensionMismatch {
            expected: kx,
            got: kt + 1,
        });
    }
    let overlap = overlap_matrix(spec)?;
    let (lo, up) = orthonormal_transforms(&overlap)?;
    let inv = up.matmul(&lo);
    let a = inv.matmul(&second_moment_overlap(spec)?).matmul(&inv);
    // Row k_t of D_q at q = 1 gives the constant factor of each q^(k - k_t) term.
    let d = synthesis_at(kx, kt + 1, T::one(), spec.sample_period());
    let scale = d.row(kt);
    let mut coeffs = vec![T::zero(); 2 * (kx - kt) - 1];
    for i in kt..kx {
        for j in kt..kx {
            coeffs[(i - kt) + (j - kt)] += a[(i, j)] * scale[i] * scale[j];
        }
    }
    Ok(coeffs)
}

fn horner<T: Scalar>(coeffs: &[T], x: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
}

fn derivative<T: Scalar>(coeffs: &[T]) -> Vec<T> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, &c)| c * T::from_count(n))
        .collect()
}

/// Real roots of a polynomial (ascending coefficients) from the eigenvalues of
/// its companion matrix.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c[c.len() - 1] == 0.0 {
        c.pop();
    }
    if c.len() < 2 {
        return Vec::new();
    }
    let n = c.len() - 1;
    let lead = c[n];
    let companion = DMatrix::from_fn(n, n, |r, col| {
        if r == 0 {
            -c[n - 1 - col] / lead
        } else if col + 1 == r {
            1.0
        } else {
            0.0
        }
    });
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= IMAG_TOLERANCE * z.re.abs().max(1.0))
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// VRF-optimal delay for the smoother output (`k_t = 0`).
pub fn optimal_delay<T: Scalar>(spec: &DesignSpec<T>) -> Result<VrfReport<T>> {
    optimal_delay_for(spec, 0)
}

/// Delay minimizing `VRF[k_t][k_t]`; among several local minima, the one with
/// the least delay. When the objective does not depend on q the discrete
/// weight centroid is reported.
pub fn optimal_delay_for<T: Scalar>(spec: &DesignSpec<T>, kt: usize) -> Result<VrfReport<T>> {
    let poly = vrf_polynomial(spec, kt)?;
    let slope = derivative(&poly);
    let curvature = derivative(&slope);
    let slope_f64: Vec<f64> = slope.iter().map(|c| c.as_f64()).collect();

    let h = T::lit(CLASSIFY_STEP);
    let mut candidates = Vec::new();
    for root in real_roots(&slope_f64) {
        let mut q = T::lit(root);
        for _ in 0..20 {
            let d2 = horner(&curvature, q);
            if d2 == T::zero() {
                break;
            }
            let step = horner(&slope, q) / d2;
            q -= step;
            if step.abs() <= T::epsilon() * (T::one() + q.abs()) {
                break;
            }
        }
        let v = horner(&poly, q);
        let second = horner(&poly, q + h) - v - v + horner(&poly, q - h);
        let kind = if second > T::zero() {
            StationaryKind::Minimum
        } else if second < T::zero() {
            StationaryKind::Maximum
        } else {
            StationaryKind::Flat
        };
        candidates.push(StationaryPoint { q, vrf: v, kind });
    }
    candidates.sort_by(|a, b| a.q.partial_cmp(&b.q).unwrap_or(std::cmp::Ordering::Equal));

    let q_optimal = match candidates
        .iter()
        .find(|c| c.kind == StationaryKind::Minimum)
    {
        Some(c) => c.q,
        None if poly.len() == 1 => spec.weight().discrete_centroid()?,
        None => {
            return Err(Error::InvalidDesign(
                "VRF polynomial has no local minimum in the delay".into(),
            ))
        }
    };
    let vrf = build_realization(&spec.with_delay(q_optimal)?)?
        .vrf()
        .clone();
    Ok(VrfReport {
        vrf,
        q_optimal,
        candidates,
    })
}
