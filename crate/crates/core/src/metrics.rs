//! Distances between densities, parameter losses and Fisher information.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::emission::{EmissionKind, EmissionParams, EmissionSpec};
use crate::error::{domain, Result, RhoError};
use crate::mixture::MixtureCandidate;
use crate::quadrature::{integrate_line, QuadratureConfig};
use crate::rng;
use crate::simplex::weight_hellinger2;

/// A density on ℝ evaluated in log scale at `anchor + offset`.
///
/// `split_points` lists poles, kinks and support edges so that quadrature can split
/// there; every pole must be listed.
pub trait LogDensity: Sync {
    fn log_density_at(&self, anchor: f64, offset: f64) -> f64;
    fn split_points(&self) -> Vec<f64>;
    /// Draws for the Monte Carlo fallback; `None` when the density cannot be sampled.
    fn sample_for_mc(&self, _n: usize, _seed: u64) -> Option<Vec<f64>> {
        None
    }
}

impl LogDensity for MixtureCandidate {
    fn log_density_at(&self, anchor: f64, offset: f64) -> f64 {
        MixtureCandidate::log_density_at(self, anchor, offset)
    }

    fn split_points(&self) -> Vec<f64> {
        self.breakpoints()
    }

    fn sample_for_mc(&self, n: usize, seed: u64) -> Option<Vec<f64>> {
        Some(self.sample(n, &mut rng::from_seed(seed)))
    }
}

/// One emission density as a [`LogDensity`].
#[derive(Debug, Clone, Copy)]
pub struct Emission {
    pub spec: EmissionSpec,
    pub params: EmissionParams,
}

impl LogDensity for Emission {
    fn log_density_at(&self, anchor: f64, offset: f64) -> f64 {
        self.spec.log_density_at(&self.params, anchor, offset)
    }

    fn split_points(&self) -> Vec<f64> {
        self.spec.breakpoints(&self.params)
    }

    fn sample_for_mc(&self, n: usize, seed: u64) -> Option<Vec<f64>> {
        let mut r = rng::from_seed(seed);
        Some(
            (0..n)
                .map(|_| self.spec.sample_one(&self.params, &mut r))
                .collect(),
        )
    }
}

/// How a Hellinger value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HellingerEstimate {
    pub h2: f64,
    /// Quadrature error estimate, or the Monte Carlo standard error.
    pub error: f64,
    pub method: IntegrationMethod,
}

/// `h²(p, q) = 1 - ∫ √(pq)`, by quadrature split at both densities' features, with a
/// Monte Carlo fallback `1 - E_p[√(q/p)]` when quadrature does not converge.
pub fn hellinger2_numeric<P, Q>(p: &P, q: &Q, cfg: &QuadratureConfig) -> Result<HellingerEstimate>
where
    P: LogDensity + ?Sized,
    Q: LogDensity + ?Sized,
{
    if !(cfg.abs_tol > 0.0) {
        return domain("quadrature tolerance must be positive");
    }
    let mut pts = p.split_points();
    pts.extend(q.split_points());
    let f = |a: f64, o: f64| {
        let l = 0.5 * (p.log_density_at(a, o) + q.log_density_at(a, o));
        if l == f64::NEG_INFINITY || l.is_nan() {
            0.0
        } else {
            l.exp()
        }
    };
    match integrate_line(&f, &pts, cfg) {
        Ok(r) => Ok(HellingerEstimate {
            h2: (1.0 - r.value).clamp(0.0, 1.0),
            error: r.error,
            method: IntegrationMethod::Quadrature,
        }),
        Err(e) => {
            log::warn!("Hellinger quadrature failed ({e}); using Monte Carlo");
            hellinger2_monte_carlo(p, q, cfg).ok_or_else(|| {
                RhoError::Numeric(format!(
                    "Hellinger quadrature failed and no sampler is available: {e}"
                ))
            })
        }
    }
}

fn hellinger2_monte_carlo<P, Q>(p: &P, q: &Q, cfg: &QuadratureConfig) -> Option<HellingerEstimate>
where
    P: LogDensity + ?Sized,
    Q: LogDensity + ?Sized,
{
    let xs = p.sample_for_mc(cfg.mc_samples.max(2), cfg.mc_seed)?;
    let vals: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let lp = p.log_density_at(x, 0.0);
            let lq = q.log_density_at(x, 0.0);
            if lq == f64::NEG_INFINITY {
                0.0
            } else if lp == f64::INFINITY && lq == f64::INFINITY {
                1.0
            } else {
                (0.5 * (lq - lp)).exp().min(1e6)
            }
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(HellingerEstimate {
        h2: (1.0 - mean).clamp(0.0, 1.0),
        error: (var / n).sqrt(),
        method: IntegrationMethod::MonteCarlo,
    })
}

/// Closed-form `h²` between two Gaussians (location, scale).
pub fn hellinger2_gaussian(m1: f64, s1: f64, m2: f64, s2: f64) -> Result<f64> {
    if !(s1 > 0.0 && s2 > 0.0) {
        return domain(format!(
            "Gaussian scales must be positive, got {s1} and {s2}"
        ));
    }
    let v = s1 * s1 + s2 * s2;
    let bc = (2.0 * s1 * s2 / v).sqrt() * (-(m1 - m2).powi(2) / (4.0 * v)).exp();
    Ok((1.0 - bc).clamp(0.0, 1.0))
}

/// Squared Hellinger distance between product measures in the additive form
/// `Σ h²(Q_i, Q'_i)`.
pub fn product_hellinger2(values: &[f64]) -> f64 {
    values.iter().sum()
}

/// Upper bound `(h(w, v) + max_k h(F_k, G_k))²` on the mixture `h²`.
pub fn mixture_hellinger_upper_bound(w: &[f64], v: &[f64], component_h2: &[f64]) -> Result<f64> {
    if component_h2.len() != w.len() {
        return domain(format!(
            "{} component distances for K={}",
            component_h2.len(),
            w.len()
        ));
    }
    let hw = weight_hellinger2(w, v)?.sqrt();
    let hmax = component_h2
        .iter()
        .fold(0.0f64, |m, &h| m.max(h.max(0.0).sqrt()));
    Ok((hw + hmax).powi(2))
}

/// `∫ |p - q| / 2` by quadrature.
pub fn total_variation_numeric<P, Q>(p: &P, q: &Q, cfg: &QuadratureConfig) -> Result<f64>
where
    P: LogDensity + ?Sized,
    Q: LogDensity + ?Sized,
{
    let mut pts = p.split_points();
    pts.extend(q.split_points());
    let f = |a: f64, o: f64| (p.log_density_at(a, o).exp() - q.log_density_at(a, o).exp()).abs();
    Ok((0.5 * integrate_line(&f, &pts, cfg)?.value).clamp(0.0, 1.0))
}

/// `‖p - q‖²₂` by quadrature. Both densities must be bounded.
pub fn l2_squared_numeric<P, Q>(p: &P, q: &Q, cfg: &QuadratureConfig) -> Result<f64>
where
    P: LogDensity + ?Sized,
    Q: LogDensity + ?Sized,
{
    let mut pts = p.split_points();
    pts.extend(q.split_points());
    let f = |a: f64, o: f64| (p.log_density_at(a, o).exp() - q.log_density_at(a, o).exp()).powi(2);
    Ok(integrate_line(&f, &pts, cfg)?.value.max(0.0))
}

/// Component-matched parameter losses between a true and an estimated mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLossReport {
    /// `Σ_k (w_k - ŵ_τ(k))²`.
    pub weight_loss: f64,
    /// `‖θ_k - θ̂_τ(k)‖² ∧ 1` per true component.
    pub component_losses: Vec<f64>,
    /// `τ`: `permutation[k]` is the estimated component matched to true component `k`.
    pub permutation: Vec<usize>,
}

impl ParamLossReport {
    pub fn parameter_loss(&self) -> f64 {
        self.component_losses.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.weight_loss + self.parameter_loss()
    }
}

/// Coordinates in which component distances are measured: `(z, σ²)` for Gaussians,
/// `(z, σ)` otherwise.
fn coordinates(spec: &EmissionSpec, p: &EmissionParams) -> (f64, f64) {
    match spec.kind {
        EmissionKind::Gaussian => (p.location, p.scale * p.scale),
        _ => (p.location, p.scale),
    }
}

fn same_family(a: &EmissionSpec, b: &EmissionSpec) -> bool {
    a.kind == b.kind && a.fixed == b.fixed
}

fn clipped_param_loss(
    t: (&EmissionSpec, &EmissionParams),
    e: (&EmissionSpec, &EmissionParams),
) -> f64 {
    let (z1, s1) = coordinates(t.0, t.1);
    let (z2, s2) = coordinates(e.0, e.1);
    ((z1 - z2).powi(2) + (s1 - s2).powi(2)).min(1.0)
}

/// Finds the permutation `τ` (within family blocks) minimizing
/// `Σ_k (w_k - ŵ_τ(k))² + ‖θ_k - θ̂_τ(k)‖² ∧ 1`. Exhaustive for `K <= 6`, Hungarian
/// algorithm above.
pub fn match_components(
    truth: &MixtureCandidate,
    est: &MixtureCandidate,
) -> Result<ParamLossReport> {
    let k = truth.k();
    if est.k() != k {
        return domain(format!("cannot match K={k} against K={}", est.k()));
    }
    let tc = truth.components();
    let ec = est.components();
    // family multisets must agree
    let mut used = vec![false; k];
    for (ts, _) in tc {
        let Some(j) = (0..k).find(|&j| !used[j] && same_family(ts, &ec[j].0)) else {
            return domain("family kinds of the two mixtures differ");
        };
        used[j] = true;
    }
    let tw = truth.weights().real();
    let ew = est.weights().real();
    let mut cost = vec![vec![f64::INFINITY; k]; k];
    for i in 0..k {
        for j in 0..k {
            if same_family(&tc[i].0, &ec[j].0) {
                let p = clipped_param_loss((&tc[i].0, &tc[i].1), (&ec[j].0, &ec[j].1));
                cost[i][j] = (tw[i] - ew[j]).powi(2) + p;
            }
        }
    }
    let permutation = if k <= 6 {
        best_permutation(&cost)
    } else {
        hungarian(&cost)
    };
    let weight_loss = (0..k).map(|i| (tw[i] - ew[permutation[i]]).powi(2)).sum();
    let component_losses = (0..k)
        .map(|i| {
            let j = permutation[i];
            clipped_param_loss((&tc[i].0, &tc[i].1), (&ec[j].0, &ec[j].1))
        })
        .collect();
    Ok(ParamLossReport {
        weight_loss,
        component_losses,
        permutation,
    })
}

/// Minimum-cost assignment by enumerating all permutations (Heap's algorithm order,
/// first minimum kept).
pub(crate) fn best_permutation(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    let total = |p: &[usize]| -> f64 { (0..k).map(|i| cost[i][p[i]]).sum() };
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = total(&perm);
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let v = total(&perm);
            if v < best_cost {
                best_cost = v;
                best.clone_from(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Minimum-cost perfect assignment (Hungarian algorithm with potentials, O(K³)).
/// Forbidden pairs carry an infinite cost.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let big = cost
        .iter()
        .flatten()
        .filter(|c| c.is_finite())
        .fold(1.0f64, |m, &c| m.max(c.abs()))
        * (n as f64 + 1.0)
        * 4.0;
    let c = |i: usize, j: usize| {
        let v = cost[i][j];
        if v.is_finite() {
            v
        } else {
            big
        }
    };
    // 1-based rows/columns; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Fisher information of a Gaussian mixture in the parameterization
/// `(w_1, ..., w_{K-1}, μ_1, σ²_1, ..., μ_K, σ²_K)` with `w_K = 1 - Σ w_k`.
#[derive(Debug, Clone)]
pub struct FisherReport {
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

/// Relative finite-difference step for scores.
const SCORE_STEP: f64 = 1e-5;

/// `∫ ∂p ∂pᵀ / p` with central finite-difference derivatives of the density.
pub fn fisher_information_numeric(
    weights: &[f64],
    means: &[f64],
    variances: &[f64],
    cfg: &QuadratureConfig,
) -> Result<FisherReport> {
    let k = weights.len();
    if k == 0 || means.len() != k || variances.len() != k {
        return domain("weights, means and variances must have the same nonzero length");
    }
    if variances.iter().any(|&v| !(v > 0.0)) {
        return domain("variances must be positive");
    }
    let mut theta: Vec<f64> = weights[..k - 1].to_vec();
    for i in 0..k {
        theta.push(means[i]);
        theta.push(variances[i]);
    }
    let d = theta.len();
    let density = move |th: &[f64], x: f64| -> f64 {
        let mut wlast = 1.0;
        let mut s = 0.0;
        for i in 0..k {
            let w = if i + 1 < k {
                wlast -= th[i];
                th[i]
            } else {
                wlast
            };
            let mu = th[k - 1 + 2 * i];
            let var = th[k - 1 + 2 * i + 1];
            s += w * (-(x - mu).powi(2) / (2.0 * var)).exp()
                / (2.0 * std::f64::consts::PI * var).sqrt();
        }
        s
    };
    let steps: Vec<f64> = theta
        .iter()
        .map(|t| SCORE_STEP * t.abs().max(1.0))
        .collect();
    let gradient = |x: f64| -> (f64, Vec<f64>) {
        let p = density(&theta, x);
        let mut g = vec![0.0; d];
        let mut th = theta.clone();
        for j in 0..d {
            th[j] = theta[j] + steps[j];
            let up = density(&th, x);
            th[j] = theta[j] - steps[j];
            let dn = density(&th, x);
            th[j] = theta[j];
            g[j] = (up - dn) / (2.0 * steps[j]);
        }
        (p, g)
    };
    let mut pts = Vec::new();
    for i in 0..k {
        let s = variances[i].sqrt();
        for u in [-12.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 12.0] {
            pts.push(means[i] + u * s);
        }
    }
    let mut m = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let f = |anchor: f64, off: f64| {
                let (p, g) = gradient(anchor + off);
                if p > 0.0 {
                    g[a] * g[b] / p
                } else {
                    0.0
                }
            };
            let v = integrate_line(&f, &pts, cfg)?.value;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    let min_eigenvalue = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(FisherReport {
        matrix: m,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::WeightVector;

    fn gauss(m: f64, s: f64) -> Emission {
        Emission {
            spec: EmissionSpec::gaussian(),
            params: EmissionParams::new(m, s),
        }
    }

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn identical_gaussians() {
        let h = hellinger2_numeric(&gauss(0.0, 1.0), &gauss(0.0, 1.0), &cfg()).unwrap();
        assert!(h.h2.abs() < 1e-8);
        assert_eq!(h.method, IntegrationMethod::Quadrature);
    }

    #[test]
    fn shifted_gaussians_match_closed_form() {
        let h = hellinger2_numeric(&gauss(0.0, 1.0), &gauss(1.0, 1.0), &cfg())
            .unwrap()
            .h2;
        let exact = 1.0 - (-0.125f64).exp();
        assert!((h - exact).abs() < 1e-8, "{h}");
        assert!(
            (hellinger2_gaussian(0.0, 1.0, 1.0, 1.0).unwrap() - 0.117_503_097_415_404).abs()
                < 1e-12
        );
        let s = hellinger2_gaussian(0.0, 1.0, 0.0, 2.0).unwrap();
        assert!((s - (1.0 - 0.8f64.sqrt())).abs() < 1e-15);
        let n = hellinger2_numeric(&gauss(0.0, 1.0), &gauss(0.0, 2.0), &cfg())
            .unwrap()
            .h2;
        assert!((n - s).abs() < 1e-8);
        assert!(hellinger2_gaussian(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn disjoint_supports() {
        let u = EmissionSpec::uniform();
        let a = Emission {
            spec: u,
            params: EmissionParams::new(0.0, 1.0),
        };
        let b = Emission {
            spec: u,
            params: EmissionParams::new(2.0, 1.0),
        };
        assert!((hellinger2_numeric(&a, &b, &cfg()).unwrap().h2 - 1.0).abs() < 1e-8);
        let s = EmissionSpec::spike(0.5).unwrap();
        let a = Emission {
            spec: s,
            params: EmissionParams::location(0.0),
        };
        let b = Emission {
            spec: s,
            params: EmissionParams::location(3.0),
        };
        assert!((hellinger2_numeric(&a, &b, &cfg()).unwrap().h2 - 1.0).abs() < 1e-8);
        // a spike against itself: the integrand carries the full pole
        assert!(hellinger2_numeric(&a, &a, &cfg()).unwrap().h2 < 1e-7);
    }

    #[test]
    fn product_form() {
        assert_eq!(product_hellinger2(&[0.0; 4]), 0.0);
        assert!((product_hellinger2(&[0.1, 0.2, 0.3]) - 0.6).abs() < 1e-15);
        assert!((product_hellinger2(&[0.05; 10]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn upper_bound_reduces_to_weights() {
        let b = mixture_hellinger_upper_bound(&[0.5, 0.5], &[0.25, 0.75], &[0.0, 0.0]).unwrap();
        assert!((b - weight_hellinger2(&[0.5, 0.5], &[0.25, 0.75]).unwrap()).abs() < 1e-15);
        assert_eq!(
            mixture_hellinger_upper_bound(&[1.0], &[1.0], &[0.0]).unwrap(),
            0.0
        );
    }

    fn gmm(w: Vec<u64>, n: u64, comps: &[(f64, f64)]) -> MixtureCandidate {
        let g = EmissionSpec::gaussian();
        MixtureCandidate::new(
            WeightVector::new(w, n).unwrap(),
            comps
                .iter()
                .map(|&(m, s)| (g, EmissionParams::new(m, s)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn matching_examples() {
        let t = gmm(vec![3, 7], 10, &[(0.0, 1.0), (5.0, 2.0)]);
        let swapped = gmm(vec![7, 3], 10, &[(5.0, 2.0), (0.0, 1.0)]);
        let r = match_components(&t, &swapped).unwrap();
        assert_eq!(r.total(), 0.0);
        assert_eq!(r.permutation, vec![1, 0]);

        let shifted = gmm(vec![3, 7], 10, &[(0.3, 1.0), (5.0, 2.0)]);
        let r = match_components(&t, &shifted).unwrap();
        assert!((r.component_losses[0] - 0.09).abs() < 1e-12);
        assert_eq!(r.component_losses[1], 0.0);

        let far = gmm(vec![3, 7], 10, &[(10.0, 1.0), (5.0, 2.0)]);
        let r = match_components(&t, &far).unwrap();
        assert!(r.component_losses.contains(&1.0));
    }

    #[test]
    fn matching_rejects_kind_mismatch() {
        let t = gmm(vec![1, 1], 2, &[(0.0, 1.0), (5.0, 2.0)]);
        let c = EmissionSpec::cauchy();
        let e = MixtureCandidate::new(
            WeightVector::new(vec![1, 1], 2).unwrap(),
            vec![
                (c, EmissionParams::new(0.0, 1.0)),
                (c, EmissionParams::new(5.0, 2.0)),
            ],
        )
        .unwrap();
        assert!(match_components(&t, &e).is_err());
    }

    #[test]
    fn hungarian_agrees_with_enumeration() {
        let mut r = rng::from_seed(77);
        use rand::Rng;
        for _ in 0..200 {
            let k = r.gen_range(1..=6);
            let cost: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..k).map(|_| r.gen::<f64>()).collect())
                .collect();
            let total = |p: &[usize]| (0..k).map(|i| cost[i][p[i]]).sum::<f64>();
            let a = best_permutation(&cost);
            let b = hungarian(&cost);
            assert!((total(&a) - total(&b)).abs() < 1e-12);
        }
    }

    #[test]
    fn fisher_single_gaussian() {
        let var: f64 = 2.0;
        let f = fisher_information_numeric(&[1.0], &[0.5], &[var], &cfg()).unwrap();
        assert!((f.matrix[(0, 0)] - 1.0 / var).abs() < 1e-4 / var);
        let want = 1.0 / (2.0 * var * var);
        assert!((f.matrix[(1, 1)] - want).abs() < 1e-4 * want);
        assert!(f.matrix[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn fisher_separated_and_duplicated() {
        let f = fisher_information_numeric(&[0.5, 0.5], &[-4.0, 4.0], &[1.0, 1.0], &cfg()).unwrap();
        assert!(f.min_eigenvalue > 1e-3, "{}", f.min_eigenvalue);
        let f = fisher_information_numeric(&[0.5, 0.5], &[1.0, 1.0], &[1.0, 1.0], &cfg()).unwrap();
        assert!(f.min_eigenvalue.abs() < 1e-6, "{}", f.min_eigenvalue);
    }

    #[test]
    fn l2_hellinger_comparison() {
        let p = gmm(vec![1, 1], 2, &[(0.0, 1.0), (3.0, 0.5)]);
        let q = gmm(vec![1, 3], 4, &[(0.5, 1.2), (2.5, 0.7)]);
        let l2 = l2_squared_numeric(&p, &q, &cfg()).unwrap();
        let h2 = hellinger2_numeric(&p, &q, &cfg()).unwrap().h2;
        let sup = |c: &MixtureCandidate| {
            (0..2001)
                .map(|i| c.density(-5.0 + i as f64 * 0.005).value())
                .fold(0.0, f64::max)
        };
        assert!(l2 <= 4.0 * (sup(&p) + sup(&q)) * h2);
        let tv = total_variation_numeric(&p, &q, &QuadratureConfig::with_tolerance(1e-6).unwrap())
            .unwrap();
        // h² <= TV <= √2 h
        assert!(h2 <= tv + 1e-6 && tv <= (2.0 * h2).sqrt() + 1e-6);
    }
}
