//! Erlang weight family `w[m] = m^κ p^m`: infinite monomial-exponential sums,
//! normalizers, moments of the continuous weight and its time/frequency
//! dispersion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Highest order accepted by [`erlang_sum`].
pub const MAX_SUM_ORDER: usize = 20;

/// Orders up to this one use exact closed forms.
pub const MAX_CLOSED_FORM_ORDER: usize = 10;

const NUMERIC_SUM_MAX_TERMS: usize = 10_000_000;

// Numerator coefficients of S_k(p) = (c_1 p + ... + c_k p^k) / (1 - p)^(k+1), k >= 1.
const SUM_NUMERATORS: [&[f64]; MAX_CLOSED_FORM_ORDER] = [
    &[1.0],
    &[1.0, 1.0],
    &[1.0, 4.0, 1.0],
    &[1.0, 11.0, 11.0, 1.0],
    &[1.0, 26.0, 66.0, 26.0, 1.0],
    &[1.0, 57.0, 302.0, 302.0, 57.0, 1.0],
    &[1.0, 120.0, 1191.0, 2416.0, 1191.0, 120.0, 1.0],
    &[1.0, 247.0, 4293.0, 15619.0, 15619.0, 4293.0, 247.0, 1.0],
    &[
        1.0, 502.0, 14608.0, 88234.0, 156190.0, 88234.0, 14608.0, 502.0, 1.0,
    ],
    &[
        1.0, 1013.0, 47840.0, 455192.0, 1310354.0, 1310354.0, 455192.0, 47840.0, 1013.0, 1.0,
    ],
];

/// Erlang weight parameters. `lambda_w = -1/ln p` is derived on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec<T> {
    kappa: usize,
    p: T,
    lambda_w: T,
}

impl<T: Scalar> WeightSpec<T> {
    pub fn new(kappa: usize, p: T) -> Result<Self> {
        check_smoothing(p)?;
        Ok(Self {
            kappa,
            p,
            lambda_w: -T::one() / p.ln(),
        })
    }

    /// Shape parameter κ.
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// Smoothing parameter p.
    pub fn p(&self) -> T {
        self.p
    }

    /// Timescale in samples.
    pub fn lambda_w(&self) -> T {
        self.lambda_w
    }

    /// `1 / S_κ(p)`: makes the weight sum to one.
    pub fn normalizer(&self) -> Result<T> {
        normalizer(self.kappa, self.p)
    }

    pub fn moments(&self) -> WeightMoments<T> {
        weight_moments(self)
    }

    /// Un-normalized weight value `m^κ p^m`.
    pub fn weight(&self, m: usize) -> T {
        T::from_count(m).powi(self.kappa as i32) * self.p.powi(m as i32)
    }

    /// Centroid of the sampled weight, `S_{κ+1}(p) / S_κ(p)`.
    pub fn discrete_centroid(&self) -> Result<T> {
        Ok(erlang_sum(self.kappa + 1, self.p)? / erlang_sum(self.kappa, self.p)?)
    }
}

pub(crate) fn check_smoothing<T: Scalar>(p: T) -> Result<()> {
    if p > T::zero() && p < T::one() {
        Ok(())
    } else {
        Err(Error::SmoothingOutOfRange(p.as_f64()))
    }
}

/// `S_k(p) = Σ_{m≥0} p^m m^k`.
///
/// Orders up to [`MAX_CLOSED_FORM_ORDER`] use the exact rational closed forms;
/// higher orders fall back to [`erlang_sum_numeric`].
pub fn erlang_sum<T: Scalar>(k: usize, p: T) -> Result<T> {
    check_smoothing(p)?;
    if k > MAX_SUM_ORDER {
        return Err(Error::OrderTooLarge {
            order: k,
            max: MAX_SUM_ORDER,
        });
    }
    if k == 0 {
        return Ok(T::one() / (T::one() - p));
    }
    if k <= MAX_CLOSED_FORM_ORDER {
        // Horner over c_1..c_k, then one extra factor of p.
        let numerator = SUM_NUMERATORS[k - 1]
            .iter()
            .rev()
            .fold(T::zero(), |acc, &c| acc * p + T::lit(c))
            * p;
        return Ok(numerator / (T::one() - p).powi(k as i32 + 1));
    }
    Ok(erlang_sum_numeric(k, p))
}

/// Truncated direct summation of `p^m m^k`.
///
/// Stops once past the peak term when a term drops below `1e-16` of the
/// running total, or after ten million terms.
pub fn erlang_sum_numeric<T: Scalar>(k: usize, p: T) -> T {
    let rel = T::lit(1e-16);
    // Terms grow until m ≈ k λ_w, so only test for convergence beyond that.
    let mode = (T::from_count(k) * (-T::one() / p.ln())).ceil();
    let mut total = T::zero();
    let mut pm = T::one();
    for m in 0..NUMERIC_SUM_MAX_TERMS {
        let mf = T::from_count(m);
        let term = pm * mf.powi(k as i32);
        total += term;
        if mf > mode && term <= rel * total {
            break;
        }
        pm *= p;
    }
    total
}

/// `γ_k = 1 / S_k(p)`.
pub fn normalizer<T: Scalar>(k: usize, p: T) -> Result<T> {
    Ok(T::one() / erlang_sum(k, p)?)
}

/// Mean, variance and skew of the continuous Erlang weight, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightMoments<T> {
    pub mean: T,
    pub variance: T,
    pub skew: T,
}

pub fn weight_moments<T: Scalar>(spec: &WeightSpec<T>) -> WeightMoments<T> {
    let order = T::from_count(spec.kappa + 1);
    WeightMoments {
        mean: order * spec.lambda_w,
        variance: order * spec.lambda_w * spec.lambda_w,
        skew: T::lit(2.0) / order.sqrt(),
    }
}

/// Time and frequency dispersion of the continuous Erlang pulse.
///
/// The frequency fields are `None` for κ < 3, where the second moment of the
/// magnitude spectrum diverges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport<T> {
    /// Seconds.
    pub sigma_t: T,
    /// Radians per second.
    pub sigma_omega: Option<T>,
    pub product: Option<T>,
}

pub fn dispersion<T: Scalar>(
    spec: &WeightSpec<T>,
    sample_period: T,
) -> Result<DispersionReport<T>> {
    if !(sample_period > T::zero()) {
        return Err(Error::InvalidDesign(format!(
            "sampling period must be positive, got {sample_period}"
        )));
    }
    let sigma_t = weight_moments(spec).variance.sqrt() * sample_period;
    if spec.kappa < 3 {
        return Ok(DispersionReport {
            sigma_t,
            sigma_omega: None,
            product: None,
        });
    }
    let lambda_t = spec.lambda_w * sample_period;
    let sigma_omega = frequency_dispersion(spec.kappa, lambda_t);
    Ok(DispersionReport {
        sigma_t,
        sigma_omega: Some(sigma_omega),
        product: Some(sigma_t * sigma_omega),
    })
}

/// Standard deviation of `|Ψ(iΩ)|` for `Ψ(s) = Γ(κ+1)/(s + 1/λ_t)^(κ+1)`.
///
/// The magnitude is even in Ω, so the first moment vanishes and only the
/// half-line integrals of Ω⁰ and Ω² are needed. Integration proceeds over
/// doubling segments `[X, 2X]` until the magnitude is below `1e-12` of its
/// peak and the last segment moved both moments by less than `1e-8`.
fn frequency_dispersion<T: Scalar>(kappa: usize, lambda_t: T) -> T {
    let half_power = T::from_count(kappa + 1) / T::lit(2.0);
    // Magnitude relative to its peak at Ω = 0; Γ(κ+1) and λ_t^(κ+1) cancel.
    let magnitude = move |omega: T| {
        let u = omega * lambda_t;
        (T::one() + u * u).powf(-half_power)
    };
    let corner = T::one() / lambda_t;
    let tol = T::lit(1e-11).max(T::epsilon() * T::lit(64.0));
    let seg_rel = T::lit(1e-8);
    let floor = T::lit(1e-12);

    let mut m0 = T::zero();
    let mut m2 = T::zero();
    let (mut lo, mut hi) = (T::zero(), corner);
    // The segment count is bounded: the magnitude floor and the convergence
    // test are both met well before Ω reaches 2^200 corners.
    for _ in 0..200 {
        let d0 = adaptive_simpson(&magnitude, lo, hi, tol);
        let d2 = adaptive_simpson(&|w: T| w * w * magnitude(w), lo, hi, tol);
        m0 += d0;
        m2 += d2;
        let converged = d0 <= seg_rel * m0 && d2 <= seg_rel * m2;
        if converged && magnitude(hi) < floor {
            break;
        }
        lo = hi;
        hi = hi + hi;
    }
    (m2 / m0).sqrt()
}

/// Adaptive Simpson quadrature with a relative tolerance on the whole interval.
pub(crate) fn adaptive_simpson<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T, rel_tol: T) -> T {
    let two = T::lit(2.0);
    let (fa, fb) = (f(a), f(b));
    let c = (a + b) / two;
    let fc = f(c);
    let whole = simpson(a, b, fa, fc, fb);
    let tol = rel_tol * whole.abs().max(T::min_positive_value());
    simpson_step(f, a, b, fa, fc, fb, whole, tol, 48)
}

fn simpson<T: Scalar>(a: T, b: T, fa: T, fc: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fc + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Scalar>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    fa: T,
    fc: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let two = T::lit(2.0);
    let c = (a + b) / two;
    let (d, e) = ((a + c) / two, (c + b) / two);
    let (fd, fe) = (f(d), f(e));
    let left = simpson(a, c, fa, fd, fc);
    let right = simpson(c, b, fc, fe, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return left + right + delta / T::lit(15.0);
    }
    simpson_step(f, a, c, fa, fd, fc, left, tol / two, depth - 1)
        + simpson_step(f, c, b, fc, fe, fb, right, tol / two, depth - 1)
}
