//! Continuous Gaussian location-scale mixtures `p_H(x) = ∫ φ_σ(x − z) dH(z, σ)` and
//! their finite approximations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Result, RhoError};
use crate::metrics::LogDensity;
use crate::rng;

/// Residual target of the moment matching, relative to `max(1, |moment|)`.
pub const MOMENT_TOLERANCE: f64 = 1e-8;
/// Largest Gauss-Legendre rule per axis tried before giving up.
const MAX_RULE: usize = 256;
/// σ nodes used to evaluate `p_H` for a uniform mixing measure.
const DENSITY_SIGMA_NODES: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub z: f64,
    pub sigma: f64,
    pub mass: f64,
}

/// A mixing distribution `H` on `(z, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingMeasure {
    Atoms {
        atoms: Vec<Atom>,
    },
    /// Product of uniforms on `[z0, z1] × [s0, s1]`; either side may be degenerate.
    Uniform {
        z: [f64; 2],
        sigma: [f64; 2],
    },
}

/// `(l, s, A, R)` with `supp(H) ⊂ [l − sA, l + sA] × [s, sR]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub l: f64,
    pub s: f64,
    pub a: f64,
    pub r: f64,
}

fn uniform_power_mean(lo: f64, hi: f64, p: f64) -> f64 {
    // mean of t^p for t ~ U[lo, hi]
    if hi == lo {
        return lo.powf(p);
    }
    if p == -1.0 {
        return (hi / lo).ln() / (hi - lo);
    }
    (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / ((p + 1.0) * (hi - lo))
}

impl MixingMeasure {
    pub fn validate(&self) -> Result<()> {
        match self {
            MixingMeasure::Atoms { atoms } => {
                if atoms.is_empty() {
                    return domain("a mixing measure needs at least one atom");
                }
                if atoms
                    .iter()
                    .any(|a| !(a.sigma > 0.0) || !(a.mass >= 0.0) || !a.z.is_finite())
                {
                    return domain("atoms need σ > 0, finite z and nonnegative mass");
                }
                let total: f64 = atoms.iter().map(|a| a.mass).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return domain(format!("atom masses sum to {total}, not 1"));
                }
                Ok(())
            }
            MixingMeasure::Uniform { z, sigma } => {
                if !(z[0] <= z[1])
                    || !(sigma[0] > 0.0 && sigma[0] <= sigma[1])
                    || !z[1].is_finite()
                    || !sigma[1].is_finite()
                {
                    return domain("uniform mixing needs z0 <= z1 and 0 < s0 <= s1");
                }
                Ok(())
            }
        }
    }

    /// `∫ z^l σ^{-p} dH`.
    pub fn moment(&self, l: u32, p: u32) -> f64 {
        match self {
            MixingMeasure::Atoms { atoms } => atoms
                .iter()
                .map(|a| a.mass * a.z.powi(l as i32) * a.sigma.powi(-(p as i32)))
                .sum(),
            MixingMeasure::Uniform { z, sigma } => {
                uniform_power_mean(z[0], z[1], l as f64)
                    * uniform_power_mean(sigma[0], sigma[1], -(p as f64))
            }
        }
    }

    pub fn atom_count(&self) -> Option<usize> {
        match self {
            MixingMeasure::Atoms { atoms } => Some(atoms.iter().filter(|a| a.mass > 0.0).count()),
            MixingMeasure::Uniform { .. } => None,
        }
    }

    /// Smallest box `[z0, z1] × [s0, s1]` containing the support.
    pub fn support_box(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            MixingMeasure::Atoms { atoms } => {
                let mut zb = [f64::INFINITY, f64::NEG_INFINITY];
                let mut sb = [f64::INFINITY, f64::NEG_INFINITY];
                for a in atoms.iter().filter(|a| a.mass > 0.0) {
                    zb = [zb[0].min(a.z), zb[1].max(a.z)];
                    sb = [sb[0].min(a.sigma), sb[1].max(a.sigma)];
                }
                (zb, sb)
            }
            MixingMeasure::Uniform { z, sigma } => (*z, *sigma),
        }
    }

    /// The smallest class `𝒞(A, R)` containing `H`, centered on the support box.
    pub fn class_params(&self) -> ClassParams {
        let (zb, sb) = self.support_box();
        let s = sb[0];
        ClassParams {
            l: 0.5 * (zb[0] + zb[1]),
            s,
            a: (0.5 * (zb[1] - zb[0]) / s).max(0.0),
            r: sb[1] / s,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        (0..n)
            .map(|_| {
                let (z, s) = match self {
                    MixingMeasure::Atoms { atoms } => {
                        let u: f64 = rng.gen();
                        let mut acc = 0.0;
                        let mut pick = atoms[atoms.len() - 1];
                        for a in atoms {
                            acc += a.mass;
                            if u < acc {
                                pick = *a;
                                break;
                            }
                        }
                        (pick.z, pick.sigma)
                    }
                    MixingMeasure::Uniform { z, sigma } => (
                        z[0] + (z[1] - z[0]) * rng.gen::<f64>(),
                        sigma[0] + (sigma[1] - sigma[0]) * rng.gen::<f64>(),
                    ),
                };
                let e: f64 = StandardNormal.sample(rng);
                z + s * e
            })
            .collect()
    }

    pub fn density(&self) -> Result<ContinuousMixture> {
        self.validate()?;
        let sigma_nodes = match self {
            MixingMeasure::Uniform { sigma, .. } if sigma[1] > sigma[0] => {
                let (t, w) = gauss_legendre(DENSITY_SIGMA_NODES);
                t.iter()
                    .zip(&w)
                    .map(|(&t, &w)| (sigma[0] + 0.5 * (t + 1.0) * (sigma[1] - sigma[0]), 0.5 * w))
                    .collect()
            }
            MixingMeasure::Uniform { sigma, .. } => vec![(sigma[0], 1.0)],
            MixingMeasure::Atoms { .. } => Vec::new(),
        };
        Ok(ContinuousMixture {
            measure: self.clone(),
            sigma_nodes,
        })
    }
}

/// `p_H` as a density.
#[derive(Debug, Clone)]
pub struct ContinuousMixture {
    measure: MixingMeasure,
    sigma_nodes: Vec<(f64, f64)>,
}

/// `Φ(u) − Φ(v)` for `u >= v`, accurate in both tails.
fn normal_interval(u: f64, v: f64) -> f64 {
    if v >= 0.0 {
        0.5 * (erfc(v / std::f64::consts::SQRT_2) - erfc(u / std::f64::consts::SQRT_2))
    } else if u <= 0.0 {
        0.5 * (erfc(-u / std::f64::consts::SQRT_2) - erfc(-v / std::f64::consts::SQRT_2))
    } else {
        1.0 - 0.5 * erfc(u / std::f64::consts::SQRT_2) - 0.5 * erfc(-v / std::f64::consts::SQRT_2)
    }
}

impl ContinuousMixture {
    pub fn density_value(&self, x: f64) -> f64 {
        const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
        match &self.measure {
            MixingMeasure::Atoms { atoms } => atoms
                .iter()
                .map(|a| {
                    let u = (x - a.z) / a.sigma;
                    a.mass * INV_SQRT_2PI * (-0.5 * u * u).exp() / a.sigma
                })
                .sum(),
            MixingMeasure::Uniform { z, .. } => self
                .sigma_nodes
                .iter()
                .map(|&(s, w)| {
                    if z[1] > z[0] {
                        w * normal_interval((x - z[0]) / s, (x - z[1]) / s) / (z[1] - z[0])
                    } else {
                        let u = (x - z[0]) / s;
                        w * INV_SQRT_2PI * (-0.5 * u * u).exp() / s
                    }
                })
                .sum(),
        }
    }
}

impl LogDensity for ContinuousMixture {
    fn log_density_at(&self, anchor: f64, offset: f64) -> f64 {
        self.density_value(anchor + offset).ln()
    }

    fn split_points(&self) -> Vec<f64> {
        let (zb, _) = self.measure.support_box();
        if zb[0] == zb[1] {
            vec![zb[0]]
        } else {
            zb.to_vec()
        }
    }

    fn sample_for_mc(&self, n: usize, seed: u64) -> Option<Vec<f64>> {
        Some(self.measure.sample(n, &mut rng::from_seed(seed)))
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    if m == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut j = DMatrix::<f64>::zeros(m, m);
    for i in 1..m {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `K = ⌈2 R⁴ log²(n) / 27⌉`.
pub fn k_for_continuous(r: f64, n: f64) -> Result<usize> {
    if !(r >= 1.0) || !(n >= 1.0) || !n.is_finite() || !r.is_finite() {
        return domain(format!(
            "k_for_continuous needs R >= 1 and n >= 1, got R={r}, n={n}"
        ));
    }
    let k = (2.0 * r.powi(4) * n.ln().powi(2) / 27.0).ceil();
    Ok(k.max(1.0) as usize)
}

/// Preconditions of the continuous-mixture risk bound that fail for `(A, R, n)`.
pub fn continuous_violations(a: f64, r: f64, n: f64) -> Vec<String> {
    let mut v = Vec::new();
    if r < 1.0 {
        v.push(format!("R = {r} < 1"));
    }
    if n < 3.0 {
        v.push(format!("n = {n} < 3"));
    }
    let need = (2.0 * (a / r).powi(2)).exp();
    if n < need {
        v.push(format!("n = {n} < exp(2 (A/R)²) = {need}"));
    }
    let kmin = (2.0f64 / 3.0).powi(3) * a.powi(4);
    if let Ok(k) = k_for_continuous(r.max(1.0), n.max(1.0)) {
        if (k as f64) < kmin {
            v.push(format!("K = {k} < (2/3)³ A⁴ = {kmin}"));
        }
    }
    v
}

/// Moment-matched atomic measure and its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub measure: MixingMeasure,
    /// Largest `|moment(H') − moment(H)| / max(1, |moment(H)|)`.
    pub max_residual: f64,
    /// Gauss-Legendre nodes per axis of the starting grid (0 when the input was atomic).
    pub rule: usize,
}

/// Moment exponents `(l, 2j + 1)` with `l <= 2k − 2`, `j <= k − 1`.
pub fn moment_exponents(k: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(k * (2 * k - 1));
    for l in 0..(2 * k - 1) as u32 {
        for j in 0..k as u32 {
            out.push((l, 2 * j + 1));
        }
    }
    out
}

/// `k (2k − 1) + 1`.
pub fn atom_bound(k: usize) -> usize {
    k * (2 * k - 1) + 1
}

fn design_row(atom: &Atom, l: u32, p: u32) -> f64 {
    atom.z.powi(l as i32) * atom.sigma.powi(-(p as i32))
}

fn residual(atoms: &[Atom], targets: &[((u32, u32), f64)]) -> f64 {
    targets
        .iter()
        .map(|&((l, p), b)| {
            let m: f64 = if (l, p) == (0, 0) {
                atoms.iter().map(|a| a.mass).sum()
            } else {
                atoms.iter().map(|a| a.mass * design_row(a, l, p)).sum()
            };
            (m - b).abs() / b.abs().max(1.0)
        })
        .fold(0.0, f64::max)
}

fn tensor_grid(h: &MixingMeasure, m: usize) -> Vec<Atom> {
    let MixingMeasure::Uniform { z, sigma } = h else {
        unreachable!("tensor grid of an atomic measure")
    };
    let (t, w) = gauss_legendre(m);
    let axis = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        if hi == lo {
            vec![(lo, 1.0)]
        } else {
            t.iter()
                .zip(&w)
                .map(|(&t, &w)| (lo + 0.5 * (t + 1.0) * (hi - lo), 0.5 * w))
                .collect()
        }
    };
    let mut atoms = Vec::new();
    for &(zv, zw) in &axis(z[0], z[1]) {
        for &(sv, sw) in &axis(sigma[0], sigma[1]) {
            atoms.push(Atom {
                z: zv,
                sigma: sv,
                mass: zw * sw,
            });
        }
    }
    atoms
}

/// Nonnegative atomic `H'` with the same mass and the same mixed moments
/// `∫ z^l σ^{-(2j+1)}`, `l <= 2k − 2`, `j <= k − 1`, as `H`, supported by at most
/// `k (2k − 1) + 1` points.
///
/// Uniform measures start from a tensor Gauss-Legendre rule, refined until its
/// moments are exact to tolerance; atomic measures start from their own atoms. The
/// start is then reduced to a basic feasible solution of the moment system by
/// moving along null vectors of the active columns until an atom vanishes, and the
/// final support is re-solved by least squares.
pub fn discretize_mixing_measure(h: &MixingMeasure, k: usize) -> Result<Discretization> {
    h.validate()?;
    if k == 0 {
        return domain("discretization needs k >= 1");
    }
    let bound = atom_bound(k);
    let mut exps: Vec<(u32, u32)> = vec![(0, 0)];
    exps.extend(moment_exponents(k));
    let targets: Vec<((u32, u32), f64)> = exps
        .iter()
        .map(|&(l, p)| {
            (
                (l, p),
                if (l, p) == (0, 0) {
                    1.0
                } else {
                    h.moment(l, p)
                },
            )
        })
        .collect();

    let (mut atoms, rule) = match h {
        MixingMeasure::Atoms { atoms } => {
            let live: Vec<Atom> = atoms.iter().copied().filter(|a| a.mass > 0.0).collect();
            if live.len() <= bound {
                return Ok(Discretization {
                    measure: h.clone(),
                    max_residual: 0.0,
                    rule: 0,
                });
            }
            (live, 0)
        }
        MixingMeasure::Uniform { .. } => {
            let mut m = 2 * k + 2;
            loop {
                let g = tensor_grid(h, m);
                if residual(&g, &targets) <= 1e-3 * MOMENT_TOLERANCE {
                    break (g, m);
                }
                if m >= MAX_RULE {
                    return Err(RhoError::Numeric(format!(
                        "moment system not matched at grid resolution {m}"
                    )));
                }
                m = (2 * m).min(MAX_RULE);
            }
        }
    };

    let rows = exps.len();
    let col = |a: &Atom| -> DVector<f64> {
        DVector::from_iterator(
            rows,
            exps.iter().map(|&(l, p)| {
                if (l, p) == (0, 0) {
                    1.0
                } else {
                    design_row(a, l, p)
                }
            }),
        )
    };
    // Carathéodory reduction
    while atoms.len() > rows {
        let take = rows + 1;
        let mut sub = DMatrix::<f64>::zeros(take, take);
        for (c, a) in atoms[..take].iter().enumerate() {
            let v = col(a);
            for r in 0..rows {
                sub[(r, c)] = v[r];
            }
        }
        let svd = sub.svd(false, true);
        let vt = svd
            .v_t
            .ok_or_else(|| RhoError::Numeric("SVD failed in moment reduction".into()))?;
        let (imin, _) =
            svd.singular_values
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
                );
        let mut v: Vec<f64> = (0..take).map(|c| vt[(imin, c)]).collect();
        if v.iter().all(|&x| x <= 0.0) {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let (mut drop, mut step) = (usize::MAX, f64::INFINITY);
        for c in 0..take {
            if v[c] > 0.0 {
                let t = atoms[c].mass / v[c];
                if t < step {
                    step = t;
                    drop = c;
                }
            }
        }
        if drop == usize::MAX {
            return Err(RhoError::Numeric(
                "degenerate null vector in moment reduction".into(),
            ));
        }
        for c in 0..take {
            atoms[c].mass = (atoms[c].mass - step * v[c]).max(0.0);
        }
        atoms[drop].mass = 0.0;
        atoms.retain(|a| a.mass > 0.0);
    }

    // re-solve the moment system on the final support
    let a = DMatrix::from_columns(&atoms.iter().map(col).collect::<Vec<_>>());
    let b = DVector::from_iterator(rows, targets.iter().map(|t| t.1));
    let before = residual(&atoms, &targets);
    if let Ok(sol) = a.clone().svd(true, true).solve(&b, 1e-14) {
        if sol.iter().all(|&m| m >= 0.0) {
            let mut cand = atoms.clone();
            for (c, m) in cand.iter_mut().zip(sol.iter()) {
                c.mass = *m;
            }
            if residual(&cand, &targets) < before {
                atoms = cand;
            }
        }
    }
    atoms.retain(|a| a.mass > 0.0);
    let total: f64 = atoms.iter().map(|a| a.mass).sum();
    atoms.iter_mut().for_each(|a| a.mass /= total);
    atoms.sort_by(|x, y| x.z.total_cmp(&y.z).then(x.sigma.total_cmp(&y.sigma)));
    let max_residual = residual(&atoms, &targets);
    if atoms.len() > bound {
        return Err(RhoError::Numeric(format!(
            "reduction left {} atoms, bound is {bound}",
            atoms.len()
        )));
    }
    if max_residual > MOMENT_TOLERANCE {
        return Err(RhoError::Numeric(format!(
            "moment residual {max_residual:e} exceeds {MOMENT_TOLERANCE:e}"
        )));
    }
    Ok(Discretization {
        measure: MixingMeasure::Atoms { atoms },
        max_residual,
        rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::hellinger2_numeric;
    use crate::quadrature::{integrate_line, QuadratureConfig};

    #[test]
    fn k_formula_examples() {
        assert_eq!(k_for_continuous(1.0, 1000.0).unwrap(), 4);
        assert_eq!(k_for_continuous(1.0, std::f64::consts::E).unwrap(), 1);
        assert!(k_for_continuous(0.5, 10.0).is_err());
        let mut last = 0;
        for n in [10.0, 100.0, 1e3, 1e4, 1e5] {
            let k = k_for_continuous(1.5, n).unwrap();
            assert!(k >= last);
            last = k;
        }
    }

    #[test]
    fn violations_flag_small_n() {
        assert!(continuous_violations(1.0, 1.5, 1000.0).is_empty());
        assert!(!continuous_violations(4.0, 1.0, 100.0).is_empty());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (t, w) = gauss_legendre(5);
        let s: f64 = t.iter().zip(&w).map(|(t, w)| w * t.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn few_atoms_are_returned_unchanged() {
        let h = MixingMeasure::Atoms {
            atoms: vec![
                Atom {
                    z: -1.0,
                    sigma: 1.0,
                    mass: 0.3,
                },
                Atom {
                    z: 2.0,
                    sigma: 0.5,
                    mass: 0.7,
                },
            ],
        };
        let d = discretize_mixing_measure(&h, 2).unwrap();
        assert_eq!(d.measure, h);
    }

    #[test]
    fn uniform_location_moments_match_closed_form() {
        let h = MixingMeasure::Uniform {
            z: [-1.0, 1.0],
            sigma: [1.0, 1.0],
        };
        let d = discretize_mixing_measure(&h, 3).unwrap();
        assert!(d.measure.atom_count().unwrap() <= 16);
        for l in 0..=4u32 {
            let exact = if l % 2 == 1 {
                0.0
            } else {
                1.0 / (l as f64 + 1.0)
            };
            assert!((d.measure.moment(l, 1) - exact).abs() < 1e-8, "l={l}");
        }
    }

    #[test]
    fn two_dimensional_uniform_is_reduced() {
        let h = MixingMeasure::Uniform {
            z: [-1.0, 1.0],
            sigma: [1.0, 1.5],
        };
        for k in 1..=3 {
            let d = discretize_mixing_measure(&h, k).unwrap();
            let MixingMeasure::Atoms { atoms } = &d.measure else {
                panic!()
            };
            assert!(atoms.len() <= atom_bound(k));
            assert!(atoms.iter().all(|a| a.mass >= 0.0));
            assert!((atoms.iter().map(|a| a.mass).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.max_residual < MOMENT_TOLERANCE);
        }
        assert_eq!(atom_bound(2), 7);
    }

    #[test]
    fn fine_atoms_are_reduced() {
        let atoms: Vec<Atom> = (0..40)
            .map(|i| Atom {
                z: -2.0 + 0.1 * i as f64,
                sigma: 0.8 + 0.01 * (i % 7) as f64,
                mass: 1.0 / 40.0,
            })
            .collect();
        let h = MixingMeasure::Atoms { atoms };
        let d = discretize_mixing_measure(&h, 2).unwrap();
        assert!(d.measure.atom_count().unwrap() <= 7);
        for (l, p) in moment_exponents(2) {
            let r = (d.measure.moment(l, p) - h.moment(l, p)).abs();
            assert!(r < 1e-8 * h.moment(l, p).abs().max(1.0));
        }
    }

    #[test]
    fn continuous_density_integrates_to_one() {
        let h = MixingMeasure::Uniform {
            z: [-1.0, 1.0],
            sigma: [1.0, 1.5],
        };
        let p = h.density().unwrap();
        let f = |a: f64, o: f64| p.density_value(a + o);
        let r = integrate_line(&f, &[-1.0, 1.0], &QuadratureConfig::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn discretized_measure_is_close_in_hellinger() {
        let h = MixingMeasure::Uniform {
            z: [-1.0, 1.0],
            sigma: [1.0, 1.5],
        };
        let p = h.density().unwrap();
        let h2: Vec<f64> = (1..=4)
            .map(|k| {
                let d = discretize_mixing_measure(&h, k).unwrap();
                hellinger2_numeric(
                    &p,
                    &d.measure.density().unwrap(),
                    &QuadratureConfig::default(),
                )
                .unwrap()
                .h2
            })
            .collect();
        // matching more moments brings the discrete mixture closer
        assert!(h2.windows(2).all(|w| w[1] < w[0]), "{h2:?}");
        assert!(h2[3] < 1e-5, "{h2:?}");
    }
}
