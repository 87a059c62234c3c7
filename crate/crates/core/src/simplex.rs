//! Rational weight grids on the K-simplex.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, RhoError};

/// Relative slack when comparing a real floor δ against grid points `d / N`,
/// absorbing the binary representation error of δ.
const FLOOR_SLACK: f64 = 1e-12;

/// A point `(d_1 / N, ..., d_K / N)` of the simplex with integer numerators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightVector {
    numerators: Vec<u64>,
    denominator: u64,
}

impl WeightVector {
    /// Checks `Σ d_k = N` exactly.
    pub fn new(numerators: Vec<u64>, denominator: u64) -> Result<Self> {
        if numerators.is_empty() {
            return domain("weight vector needs K >= 1");
        }
        if denominator == 0 {
            return domain("weight denominator must be positive");
        }
        let sum: u128 = numerators.iter().map(|&d| d as u128).sum();
        if sum != denominator as u128 {
            return domain(format!("numerators sum to {sum}, expected {denominator}"));
        }
        Ok(WeightVector {
            numerators,
            denominator,
        })
    }

    /// The single-point simplex `(1)`.
    pub fn unit() -> Self {
        WeightVector {
            numerators: vec![1],
            denominator: 1,
        }
    }

    pub fn k(&self) -> usize {
        self.numerators.len()
    }

    pub fn numerators(&self) -> &[u64] {
        &self.numerators
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.numerators[k] as f64 / self.denominator as f64
    }

    /// Real view of the weights.
    pub fn real(&self) -> Vec<f64> {
        (0..self.k()).map(|k| self.weight(k)).collect()
    }

    /// Whether every coordinate is at least `delta`.
    pub fn respects_floor(&self, delta: f64) -> bool {
        let m = min_numerator(self.denominator, delta);
        self.numerators.iter().all(|&d| d >= m)
    }

    pub(crate) fn permuted(&self, order: &[usize]) -> Self {
        WeightVector {
            numerators: order.iter().map(|&i| self.numerators[i]).collect(),
            denominator: self.denominator,
        }
    }
}

/// Smallest numerator `d` with `d / N >= δ`.
pub(crate) fn min_numerator(denominator: u64, delta: f64) -> u64 {
    if delta <= 0.0 {
        return 0;
    }
    let target = delta * denominator as f64;
    (target * (1.0 - FLOOR_SLACK)).ceil().max(0.0) as u64
}

fn check_floor(k: usize, delta: f64) -> Result<()> {
    if k == 0 {
        return domain("K must be at least 1");
    }
    if !(delta >= 0.0) {
        return domain(format!("floor must be nonnegative, got {delta}"));
    }
    if delta > (1.0 / k as f64) * (1.0 + FLOOR_SLACK) {
        return domain(format!("floor δ={delta} exceeds 1/K = {}", 1.0 / k as f64));
    }
    Ok(())
}

/// Exact binomial coefficient, `None` on `u128` overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// `|D_{K,N}| = C(N + K - 1, N)`, the number of grid points with denominator `N`.
pub fn covering_size(k: usize, n: u64) -> Result<u128> {
    if k == 0 {
        return domain("K must be at least 1");
    }
    binomial(n + k as u64 - 1, n).ok_or_else(|| {
        RhoError::Numeric(format!(
            "covering size C({}+{}-1, {}) overflows u128",
            n, k, n
        ))
    })
}

/// Number of points `enumerate_weight_grid(k, n, delta)` returns.
pub fn weight_grid_size(k: usize, n: u64, delta: f64) -> Result<u128> {
    check_floor(k, delta)?;
    let m = min_numerator(n, delta);
    let Some(free) = n.checked_sub(m * k as u64) else {
        return Ok(0);
    };
    binomial(free + k as u64 - 1, k as u64 - 1)
        .ok_or_else(|| RhoError::Numeric("weight grid size overflows u128".into()))
}

/// All `(d_1/N, ..., d_K/N)` with `Σ d_k = N` and `d_k / N >= δ`, in lexicographic order.
///
/// An infeasible floor for this `N` gives an empty grid.
pub fn enumerate_weight_grid(k: usize, n: u64, delta: f64) -> Result<Vec<WeightVector>> {
    check_floor(k, delta)?;
    if n < k as u64 {
        return domain(format!("grid denominator N={n} must be at least K={k}"));
    }
    let m = min_numerator(n, delta);
    let mut out = Vec::new();
    if m * (k as u64) > n {
        return Ok(out);
    }
    let mut current = vec![0u64; k];
    fill(&mut current, 0, n, m, n, &mut out);
    Ok(out)
}

fn fill(
    cur: &mut [u64],
    pos: usize,
    remaining: u64,
    m: u64,
    den: u64,
    out: &mut Vec<WeightVector>,
) {
    let k = cur.len();
    if pos == k - 1 {
        cur[pos] = remaining;
        out.push(WeightVector {
            numerators: cur.to_vec(),
            denominator: den,
        });
        return;
    }
    let rest_min = m * (k - pos - 1) as u64;
    let mut d = m;
    while d + rest_min <= remaining {
        cur[pos] = d;
        fill(cur, pos + 1, remaining - d, m, den, out);
        d += 1;
    }
}

/// Squared Hellinger distance between weight vectors seen as discrete distributions.
pub fn weight_hellinger2(w: &[f64], v: &[f64]) -> Result<f64> {
    if w.len() != v.len() {
        return domain(format!(
            "weight length mismatch: {} vs {}",
            w.len(),
            v.len()
        ));
    }
    let s: f64 = w
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// Moves `w` into the δ-floored simplex.
///
/// Sorts ascending (ties by index), lifts the smallest coordinate to δ and recurses on
/// the renormalized remainder with floor `δ / (1 - δ)`. The result satisfies
/// `h²(w, v) <= 1 - sqrt(1 - (K - 1) δ)`.
pub fn project_to_floor(w: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_floor(w.len(), delta)?;
    let total: f64 = w.iter().sum();
    if w.iter().any(|&x| x < 0.0 || !x.is_finite()) || (total - 1.0).abs() > 1e-9 {
        return domain("project_to_floor needs a point of the simplex");
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| w[i]).collect();
    let projected = project_sorted(&sorted, delta);
    let mut out = vec![0.0; w.len()];
    for (slot, &i) in order.iter().enumerate() {
        out[i] = projected[slot];
    }
    Ok(out)
}

fn project_sorted(w: &[f64], delta: f64) -> Vec<f64> {
    let k = w.len();
    if k == 1 {
        return vec![1.0];
    }
    if w[0] >= delta * (1.0 - FLOOR_SLACK) {
        return w.to_vec();
    }
    if k == 2 {
        return vec![delta, 1.0 - delta];
    }
    let rest: Vec<f64> = w[1..].iter().map(|&x| x / (1.0 - w[0])).collect();
    // rest is still ascending, so the recursion keeps the sorted precondition
    let inner = project_sorted(&rest, delta / (1.0 - delta));
    std::iter::once(delta)
        .chain(inner.into_iter().map(|x| (1.0 - delta) * x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_grid_k2() {
        let g = enumerate_weight_grid(2, 4, 0.25).unwrap();
        let nums: Vec<Vec<u64>> = g.iter().map(|w| w.numerators().to_vec()).collect();
        assert_eq!(nums, vec![vec![1, 3], vec![2, 2], vec![3, 1]]);
    }

    #[test]
    fn grid_k3_counts_match_stars_and_bars() {
        let g = enumerate_weight_grid(3, 4, 0.0).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(covering_size(3, 4).unwrap(), 15);
        assert!(g.iter().all(|w| w.numerators().iter().sum::<u64>() == 4));
    }

    #[test]
    fn point_simplex() {
        for n in [1u64, 5, 9] {
            let g = enumerate_weight_grid(1, n, 1.0).unwrap();
            assert_eq!(g.len(), 1);
            assert_eq!(g[0].real(), vec![1.0]);
        }
        assert_eq!(covering_size(1, 7).unwrap(), 1);
    }

    #[test]
    fn floor_above_inverse_k_is_rejected() {
        assert!(enumerate_weight_grid(2, 4, 0.6).is_err());
        assert!(project_to_floor(&[0.5, 0.5], 0.6).is_err());
    }

    #[test]
    fn infeasible_floor_gives_empty_grid() {
        // δ = 0.3 needs d >= 2 at N = 5: 2 + 2 > ... K=2 still feasible; K=3 at N=5 is not
        let g = enumerate_weight_grid(3, 5, 0.3).unwrap();
        assert!(g.is_empty());
        assert_eq!(weight_grid_size(3, 5, 0.3).unwrap(), 0);
    }

    #[test]
    fn uniform_only_when_floor_is_inverse_k() {
        let g = enumerate_weight_grid(3, 3, 1.0 / 3.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].numerators(), &[1, 1, 1]);
    }

    #[test]
    fn projection_two_point_example() {
        let v = project_to_floor(&[0.0, 1.0], 0.1).unwrap();
        assert!((v[0] - 0.1).abs() < 1e-15 && (v[1] - 0.9).abs() < 1e-15);
        let h2 = weight_hellinger2(&[0.0, 1.0], &v).unwrap();
        let bound = 1.0 - 0.9f64.sqrt();
        assert!((h2 - 0.051_316_701_949_486_2).abs() < 1e-12);
        assert!(h2 <= bound + 1e-15);
    }

    #[test]
    fn projection_fixed_point() {
        let w = [0.2, 0.3, 0.5];
        assert_eq!(project_to_floor(&w, 0.1).unwrap(), w.to_vec());
    }

    #[test]
    fn projection_ties_by_index() {
        let v = project_to_floor(&[0.0, 0.0, 1.0], 0.1).unwrap();
        assert!((v[0] - 0.1).abs() < 1e-15);
        assert!(v.iter().all(|&x| x >= 0.1 * (1.0 - 1e-12)));
    }

    #[test]
    fn hellinger_examples() {
        assert_eq!(weight_hellinger2(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((weight_hellinger2(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        let h = weight_hellinger2(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((h - 0.034_074_173_710_822).abs() < 1e-12, "{h}");
        assert!(weight_hellinger2(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn binomial_overflow_is_reported() {
        assert!(covering_size(200, 1 << 40).is_err());
        assert_eq!(binomial(6, 4), Some(15));
    }
}
