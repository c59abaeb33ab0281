//! Cascade of leaky integrators (a Laguerre network) in state-space form
//! `w[n] = G w[n-1] + H x[n]`, plus the integer transform that turns its state
//! impulse responses into Erlang weights and the final-value start vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::weights::check_smoothing;

/// `G` (lower triangle filled with `p`) and `H` (ones) for a network of order `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMatrices<T> {
    p: T,
    g: Matrix<T>,
    h: Vec<T>,
}

/// Live network state; `n` counts samples consumed since initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector<T> {
    pub w: Vec<T>,
    pub n: u64,
}

pub fn build_network<T: Scalar>(order: usize, p: T) -> Result<NetworkMatrices<T>> {
    if order == 0 {
        return Err(Error::InvalidDesign(
            "network order must be at least 1".into(),
        ));
    }
    check_smoothing(p)?;
    Ok(NetworkMatrices {
        p,
        g: Matrix::from_fn(order, order, |r, c| if c <= r { p } else { T::zero() }),
        h: vec![T::one(); order],
    })
}

impl<T: Scalar> NetworkMatrices<T> {
    pub fn order(&self) -> usize {
        self.h.len()
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn g(&self) -> &Matrix<T> {
        &self.g
    }

    pub fn h(&self) -> &[T] {
        &self.h
    }

    /// Rebuilds from stored matrices, checking they have the cascade structure.
    pub fn from_parts(g: Matrix<T>, h: Vec<T>) -> Result<Self> {
        let k = h.len();
        if g.shape() != (k, k) || k == 0 {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: g.rows(),
            });
        }
        let p = g[(0, 0)];
        let expected = build_network(k, p)?;
        if expected.g != g || expected.h != h {
            return Err(Error::InvalidDesign(
                "network matrices do not have the leaky-integrator cascade structure".into(),
            ));
        }
        Ok(expected)
    }

    /// Advances `state` by one sample in O(K).
    pub fn step(&self, state: &mut StateVector<T>, x: T) -> Result<()> {
        if state.w.len() != self.order() {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: state.w.len(),
            });
        }
        advance(self.p, &mut state.w, x);
        state.n += 1;
        Ok(())
    }

    /// Reference `G w + H x` with the full matrix product, O(K²).
    pub fn step_dense(&self, state: &mut StateVector<T>, x: T) -> Result<()> {
        if state.w.len() != self.order() {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: state.w.len(),
            });
        }
        let gw = self.g.mul_vec(&state.w);
        for ((w, gw), h) in state.w.iter_mut().zip(gw).zip(&self.h) {
            *w = gw + *h * x;
        }
        state.n += 1;
        Ok(())
    }

    /// Final-value start: `w = ρ x0`, `n = 0`.
    pub fn initialize(&self, x0: T, rho: &[T]) -> Result<StateVector<T>> {
        if rho.len() != self.order() {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: rho.len(),
            });
        }
        Ok(StateVector {
            w: rho.iter().map(|&r| r * x0).collect(),
            n: 0,
        })
    }

    pub fn zero_state(&self) -> StateVector<T> {
        StateVector {
            w: vec![T::zero(); self.order()],
            n: 0,
        }
    }

    /// State impulse responses `φ_k[m]` for `m = 0..len`, indexed `[k][m]`.
    pub fn impulse_responses(&self, len: usize) -> Vec<Vec<T>> {
        let k = self.order();
        let mut out = vec![Vec::with_capacity(len); k];
        let mut w = vec![T::zero(); k];
        for m in 0..len {
            advance(self.p, &mut w, if m == 0 { T::one() } else { T::zero() });
            for (row, &v) in out.iter_mut().zip(&w) {
                row.push(v);
            }
        }
        out
    }
}

/// In-place cascade update. Row `k` of `G w` is `p·Σ_{j≤k} w_j`, so each new
/// state is the previous new state plus `p` times its own old value.
#[inline]
pub(crate) fn advance<T: Scalar>(p: T, w: &mut [T], x: T) {
    let mut carry = x;
    for wk in w.iter_mut() {
        carry += p * *wk;
        *wk = carry;
    }
}

/// Step-input steady state of each network state: `ρ_k = (1 - p)^-(k+1)`.
///
/// State `k` sits behind `k + 1` leaky integrators, each with DC gain
/// `1/(1 - p)`.
pub fn steady_state_vector<T: Scalar>(order: usize, p: T) -> Result<Vec<T>> {
    check_smoothing(p)?;
    let gain = T::one() / (T::one() - p);
    Ok((1..=order).map(|k| gain.powi(k as i32)).collect())
}

/// Exact integer matrix `T_{w←φ}` with `m^k p^m = Σ_j T[k][j] φ_j[m]`.
///
/// The network impulse responses are `φ_j[m] = C(m+j, j) p^m`, so the rows
/// solve `Σ_j T[k][j] C(m+j, j) = m^k` at `m = 0..K`. The system matrix is the
/// symmetric Pascal matrix `B = L Lᵀ` with `L[m][i] = C(m, i)` and
/// `L⁻¹[m][i] = (-1)^(m-i) C(m, i)`, so `T = V L⁻ᵀ L⁻¹` with `V[k][m] = m^k`,
/// all in exact integer arithmetic.
pub fn impulse_to_weight_transform(order: usize) -> Result<Matrix<i128>> {
    let overflow = || Error::TransformOverflow(order);
    let k = order;
    let binom = binomial_table(k).ok_or_else(overflow)?;
    let l_inv = |m: usize, i: usize| -> i128 {
        if i > m {
            0
        } else if (m - i).is_multiple_of(2) {
            binom[m][i]
        } else {
            -binom[m][i]
        }
    };
    // V[r][m] = m^r
    let mut v = vec![vec![0i128; k]; k];
    for (r, row) in v.iter_mut().enumerate() {
        for (m, cell) in row.iter_mut().enumerate() {
            *cell = (m as i128).checked_pow(r as u32).ok_or_else(overflow)?;
        }
    }
    // A = V L⁻ᵀ, A[r][i] = Σ_m V[r][m] L⁻¹[i][m]
    let mut a = vec![vec![0i128; k]; k];
    for (a_row, v_row) in a.iter_mut().zip(&v) {
        for (i, cell) in a_row.iter_mut().enumerate() {
            let mut acc = 0i128;
            for (m, &vrm) in v_row.iter().enumerate() {
                let term = vrm.checked_mul(l_inv(i, m)).ok_or_else(overflow)?;
                acc = acc.checked_add(term).ok_or_else(overflow)?;
            }
            *cell = acc;
        }
    }
    // T = A L⁻¹, T[r][j] = Σ_i A[r][i] L⁻¹[i][j]
    let mut t = Matrix::from_fn(k, k, |_, _| 0i128);
    for r in 0..k {
        for j in 0..k {
            let mut acc = 0i128;
            for (i, &ari) in a[r].iter().enumerate() {
                let term = ari.checked_mul(l_inv(i, j)).ok_or_else(overflow)?;
                acc = acc.checked_add(term).ok_or_else(overflow)?;
            }
            t[(r, j)] = acc;
        }
    }
    debug_assert!((0..k).all(|r| (r + 1..k).all(|c| t[(r, c)] == 0)));
    Ok(t)
}

fn binomial_table(n: usize) -> Option<Vec<Vec<i128>>> {
    let mut table = vec![vec![0i128; n.max(1)]; n.max(1)];
    for m in 0..n {
        table[m][0] = 1;
        for i in 1..=m {
            let above = if i < m { table[m - 1][i] } else { 0 };
            table[m][i] = table[m - 1][i - 1].checked_add(above)?;
        }
    }
    Some(table)
}

/// Converts an integer transform into the working scalar.
pub fn transform_as<T: Scalar>(t: &Matrix<i128>) -> Matrix<T> {
    t.map(|v| T::from_i128(v).expect("transform entry representable"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_network_is_exponential_average() {
        let net = build_network(1, 0.8f64).unwrap();
        assert_eq!(net.g()[(0, 0)], 0.8);
        assert_eq!(net.h(), &[1.0]);
        let mut s = StateVector { w: vec![2.0], n: 0 };
        net.step(&mut s, 1.0).unwrap();
        assert!((s.w[0] - 2.6).abs() < 1e-15);
        assert_eq!(s.n, 1);
    }

    #[test]
    fn fourth_order_structure() {
        let p = 0.37f64;
        let net = build_network(4, p).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expected = if c <= r { p } else { 0.0 };
                assert_eq!(net.g()[(r, c)], expected);
            }
        }
        assert!(net.h().iter().all(|&h| h == 1.0));
    }

    #[test]
    fn invalid_network_parameters() {
        assert!(build_network(0, 0.5f64).is_err());
        assert!(build_network(2, 1.0f64).is_err());
        assert!(build_network(2, 0.0f64).is_err());
    }

    #[test]
    fn impulse_through_second_order_cascade() {
        // y0[n] = p y0[n-1] + x[n]; y1[n] = p y1[n-1] + y0[n]; unrolled by hand.
        let net = build_network(2, 0.5f64).unwrap();
        let mut s = net.zero_state();
        for (n, x) in [1.0, 0.0, 0.0].into_iter().enumerate() {
            net.step(&mut s, x).unwrap();
            let expected0 = 0.5f64.powi(n as i32);
            let expected1 = (n as f64 + 1.0) * 0.5f64.powi(n as i32);
            assert!((s.w[0] - expected0).abs() < 1e-15);
            assert!((s.w[1] - expected1).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_keeps_zero_state() {
        let net = build_network(3, 0.9f64).unwrap();
        let mut s = net.zero_state();
        net.step(&mut s, 0.0).unwrap();
        assert!(s.w.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = build_network(3, 0.9f64).unwrap();
        let mut s = StateVector {
            w: vec![0.0; 2],
            n: 0,
        };
        assert!(matches!(
            net.step(&mut s, 1.0),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
        assert!(net.initialize(1.0, &[1.0]).is_err());
    }

    #[test]
    fn transform_rows_reference_values() {
        let t = impulse_to_weight_transform(3).unwrap();
        assert_eq!(
            t.to_rows(),
            vec![vec![1, 0, 0], vec![-1, 1, 0], vec![1, -3, 2]]
        );
        let t = impulse_to_weight_transform(6).unwrap();
        assert_eq!(t.row(5), &[-1, 31, -180, 390, -360, 120]);
    }

    #[test]
    fn transform_reproduces_monomial_weights() {
        let p = 0.7f64;
        let net = build_network(4, p).unwrap();
        let phi = net.impulse_responses(51);
        let t: Matrix<f64> = transform_as(&impulse_to_weight_transform(4).unwrap());
        for k in 0..4 {
            for m in 0..=50usize {
                let w: f64 = phi
                    .iter()
                    .enumerate()
                    .map(|(j, ph)| t[(k, j)] * ph[m])
                    .sum();
                let expected = (m as f64).powi(k as i32) * p.powi(m as i32);
                assert!((w - expected).abs() < 1e-9, "k={k} m={m}");
            }
        }
    }

    #[test]
    fn steady_state_matches_numeric_final_value() {
        let p = 0.8f64;
        let net = build_network(3, p).unwrap();
        let mut s = net.zero_state();
        for _ in 0..5000 {
            net.step(&mut s, 1.0).unwrap();
        }
        let rho = steady_state_vector(3, p).unwrap();
        for (r, w) in rho.iter().zip(&s.w) {
            assert!(((r - w) / w).abs() < 1e-8);
        }
        // Single integrator: final value 1/(1-p) stays finite as p → 0.
        let rho = steady_state_vector(1, 1e-9f64).unwrap();
        assert!((rho[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn printed_exponent_is_one_short() {
        // ρ_k = 1/(1-p)^k gives [1, 2, 4, 8] at p = 0.5; the network's actual
        // step-input final values are one integrator further along.
        let rho = steady_state_vector(4, 0.5f64).unwrap();
        assert_eq!(rho, vec![2.0, 4.0, 8.0, 16.0]);
        let net = build_network(4, 0.5f64).unwrap();
        let printed = [1.0, 2.0, 4.0, 8.0];
        let mut s = net.initialize(1.0, &printed).unwrap();
        net.step(&mut s, 1.0).unwrap();
        assert!(s.w.iter().zip(printed).any(|(w, r)| (w - r).abs() > 0.1));
    }

    #[test]
    fn initialization_examples() {
        let net = build_network(2, 0.5f64).unwrap();
        let rho = steady_state_vector(2, 0.5f64).unwrap();
        assert!(net
            .initialize(0.0, &rho)
            .unwrap()
            .w
            .iter()
            .all(|&w| w == 0.0));
        let s = net.initialize(3.0, &rho).unwrap();
        assert_eq!(s.w, vec![6.0, 12.0]);
        assert_eq!(s.n, 0);
    }

    #[test]
    fn constant_input_is_flat_after_initialization() {
        let p = 0.9f64;
        let net = build_network(4, p).unwrap();
        let rho = steady_state_vector(4, p).unwrap();
        let c = 7.25;
        let mut s = net.initialize(c, &rho).unwrap();
        for _ in 0..1000 {
            net.step(&mut s, c).unwrap();
            for (w, r) in s.w.iter().zip(&rho) {
                assert!((w - r * c).abs() <= 1e-9 * r * c);
            }
        }
    }

    #[test]
    fn f32_network_steps() {
        let net = build_network(2, 0.5f32).unwrap();
        let mut s = net.zero_state();
        net.step(&mut s, 1.0).unwrap();
        net.step(&mut s, 0.0).unwrap();
        assert_eq!(s.w, vec![0.5f32, 1.0]);
    }
}
