//! Steady-state frequency response, distortion against an ideal delay, the
//! distortion-free bandwidth and the DC group delay.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::design::FilterRealization;
use crate::error::{Error, Result};
use crate::network::NetworkMatrices;
use crate::scalar::Scalar;

/// Grid used to bracket the bandwidth crossing.
pub const BRACKET_POINTS: usize = 2048;
const BISECTION_TOLERANCE: f64 = 1e-6;
const GROUP_DELAY_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseReport<T> {
    /// Relative frequencies in cycles/sample.
    pub freqs: Vec<T>,
    /// `response[k_t][i]` is `H_{k_t}` at `freqs[i]`.
    pub response: Vec<Vec<Complex<T>>>,
    /// `|E|²` of the smoother at each grid frequency.
    pub distortion: Vec<T>,
    /// `None` when the distortion never reaches 1/2 below Nyquist.
    pub f_c: Option<T>,
    pub group_delay_dc: T,
}

/// `(I - G e^{-iω})⁻¹ H` by forward substitution on the lower-triangular
/// resolvent.
pub fn state_transfer<T: Scalar>(net: &NetworkMatrices<T>, omega: T) -> Vec<Complex<T>> {
    let z_inv = Complex::from_polar(T::one(), -omega);
    let g = net.g();
    let k = net.order();
    let mut v: Vec<Complex<T>> = Vec::with_capacity(k);
    for r in 0..k {
        let mut rhs = Complex::new(net.h()[r], T::zero());
        for (j, vj) in v.iter().enumerate() {
            rhs += z_inv * *vj * g[(r, j)];
        }
        let diag = Complex::new(T::one(), T::zero()) - z_inv * g[(r, r)];
        v.push(rhs / diag);
    }
    v
}

/// Output `k_t` of the realization at `omega` radians/sample.
pub fn frequency_response<T: Scalar>(
    realization: &FilterRealization<T>,
    omega: T,
    kt: usize,
) -> Complex<T> {
    let v = state_transfer(realization.first_moment_network(), omega);
    combine(realization.transforms().output.row(kt), &v)
}

fn combine<T: Scalar>(row: &[T], v: &[Complex<T>]) -> Complex<T> {
    row.iter()
        .zip(v)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (&c, &x)| {
            acc + x * c
        })
}

/// `|H_0(ω) - e^{-iqω}|²`.
pub fn distortion<T: Scalar>(realization: &FilterRealization<T>, omega: T) -> T {
    let ideal = Complex::from_polar(T::one(), -realization.delay() * omega);
    (frequency_response(realization, omega, 0) - ideal).norm_sqr()
}

/// Least relative frequency (cycles/sample) at which the distortion reaches
/// 1/2.
pub fn bandwidth<T: Scalar>(realization: &FilterRealization<T>) -> Result<T> {
    let half = T::lit(0.5);
    let at = |f: T| distortion(realization, T::TAU() * f) - half;
    let step = half / T::from_count(BRACKET_POINTS - 1);
    let mut lo = T::zero();
    let mut f_lo = at(lo);
    for i in 1..BRACKET_POINTS {
        let hi = step * T::from_count(i);
        let f_hi = at(hi);
        if f_lo < T::zero() && f_hi >= T::zero() {
            return Ok(bisect(&at, lo, hi));
        }
        lo = hi;
        f_lo = f_hi;
    }
    Err(Error::NoCrossing)
}

fn bisect<T: Scalar>(f: &impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    let tol = T::lit(BISECTION_TOLERANCE);
    let two = T::lit(2.0);
    while hi - lo > tol {
        let mid = (lo + hi) / two;
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / two
}

/// `-d∠H_0/dω` at DC in samples, by central difference.
pub fn group_delay_dc<T: Scalar>(realization: &FilterRealization<T>) -> T {
    let h = T::lit(GROUP_DELAY_STEP);
    let plus = frequency_response(realization, h, 0).arg();
    let minus = frequency_response(realization, -h, 0).arg();
    -(plus - minus) / (h + h)
}

/// Evaluates every output on `points` uniform frequencies spanning [0, 1/2].
pub fn response_report<T: Scalar>(
    realization: &FilterRealization<T>,
    points: usize,
) -> Result<ResponseReport<T>> {
    if points < 2 {
        return Err(Error::InvalidDesign(format!(
            "frequency grid needs at least 2 points, got {points}"
        )));
    }
    let kt = realization.spec().derivatives();
    let output = &realization.transforms().output;
    let q = realization.delay();
    let step = T::lit(0.5) / T::from_count(points - 1);
    let mut freqs = Vec::with_capacity(points);
    let mut response = vec![Vec::with_capacity(points); kt];
    let mut dist = Vec::with_capacity(points);
    for i in 0..points {
        let f = step * T::from_count(i);
        let omega = T::TAU() * f;
        let v = state_transfer(realization.first_moment_network(), omega);
        for (d, column) in response.iter_mut().enumerate() {
            column.push(combine(output.row(d), &v));
        }
        let ideal = Complex::from_polar(T::one(), -q * omega);
        dist.push((response[0][i] - ideal).norm_sqr());
        freqs.push(f);
    }
    let f_c = match bandwidth(realization) {
        Ok(f) => Some(f),
        Err(Error::NoCrossing) => None,
        Err(e) => return Err(e),
    };
    Ok(ResponseReport {
        freqs,
        response,
        distortion: dist,
        f_c,
        group_delay_dc: group_delay_dc(realization),
    })
}
