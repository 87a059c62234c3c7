//! Starting points for the heuristic search: quantile splits refined by EM.

use crate::emission::{quantile_sorted, EmissionKind, EmissionParams, EmissionSpec};

/// Real-valued mixture parameters before snapping onto a lattice.
#[derive(Debug, Clone)]
pub(crate) struct Start {
    pub weights: Vec<f64>,
    pub params: Vec<EmissionParams>,
}

const MIN_SCALE_FRACTION: f64 = 1e-6;

fn iqr(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25)
}

/// Location/scale guess of one family from a sorted group.
fn group_params(spec: &EmissionSpec, g: &[f64], floor: f64) -> EmissionParams {
    if let Some(p) = spec.fixed {
        return p;
    }
    let med = quantile_sorted(g, 0.5);
    match spec.kind {
        EmissionKind::Gaussian => EmissionParams::new(med, (iqr(g) / 1.349).max(floor)),
        EmissionKind::Cauchy => EmissionParams::new(med, (iqr(g) / 2.0).max(floor)),
        EmissionKind::Uniform => {
            let lo = g[0];
            EmissionParams::new(lo, (g[g.len() - 1] - lo).max(floor))
        }
        _ => EmissionParams::location(med),
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Quantile splits (all group-to-slot assignments for small mixed-family models),
/// their EM refinements, and sub-mixtures of EM fits with one or two extra
/// components. Dropping extra components lets a start ignore a cluster of outliers.
pub(crate) fn starts(
    sorted: &[f64],
    families: &[EmissionSpec],
    em_iterations: usize,
) -> Vec<Start> {
    let mut out = basic_starts(sorted, families, em_iterations);
    let Some(&last_free) = families.iter().rev().find(|f| !f.is_known()) else {
        return out;
    };
    if em_iterations == 0 {
        return out;
    }
    for extra in 1..=MAX_EXTRA {
        if families.len() + extra > sorted.len() {
            break;
        }
        let mut ext = families.to_vec();
        ext.extend(std::iter::repeat_n(last_free, extra));
        let Some(fit) = basic_starts(sorted, &ext, em_iterations).into_iter().next() else {
            continue;
        };
        let droppable: Vec<usize> = (0..ext.len()).filter(|&s| ext[s] == last_free).collect();
        for drop in subsets(&droppable, extra) {
            let keep: Vec<usize> = (0..ext.len()).filter(|s| !drop.contains(s)).collect();
            let total: f64 = keep.iter().map(|&s| fit.weights[s]).sum();
            if !(total > 0.0) {
                continue;
            }
            out.push(Start {
                weights: keep.iter().map(|&s| fit.weights[s] / total).collect(),
                params: keep.iter().map(|&s| fit.params[s]).collect(),
            });
        }
    }
    out
}

/// Extra components tried by the sub-mixture starts.
const MAX_EXTRA: usize = 2;

fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &it) in items.iter().enumerate() {
        for mut rest in subsets(&items[i + 1..], size - 1) {
            rest.insert(0, it);
            out.push(rest);
        }
    }
    out
}

fn basic_starts(sorted: &[f64], families: &[EmissionSpec], em_iterations: usize) -> Vec<Start> {
    let k = families.len();
    let n = sorted.len();
    let floor = (iqr(sorted).abs() * MIN_SCALE_FRACTION).max(1e-12);
    let homogeneous = families.windows(2).all(|w| w[0] == w[1]);
    let free: Vec<usize> = (0..k).filter(|&s| !families[s].is_known()).collect();
    let groups = free.len().max(1);
    let bounds: Vec<(usize, usize)> = (0..groups)
        .map(|g| {
            let lo = g * n / groups;
            let hi = ((g + 1) * n / groups).max(lo + 1).min(n);
            (lo.min(n - 1), hi)
        })
        .collect();
    let perms = if homogeneous || free.len() > 3 {
        vec![(0..free.len()).collect()]
    } else {
        permutations(free.len())
    };
    let mut out = Vec::new();
    for perm in perms {
        let mut params = Vec::with_capacity(k);
        let mut fi = 0;
        for spec in families {
            if spec.is_known() {
                params.push(spec.fixed.unwrap_or(EmissionParams::location(0.0)));
            } else {
                let (lo, hi) = bounds[perm[fi]];
                params.push(group_params(spec, &sorted[lo..hi], floor));
                fi += 1;
            }
        }
        let start = Start {
            weights: vec![1.0 / k as f64; k],
            params,
        };
        if em_iterations > 0 && n >= 2 {
            out.push(em(sorted, families, start.clone(), em_iterations, floor));
        }
        out.push(start);
    }
    out
}

fn weighted_quantile(pairs: &mut [(f64, f64)], q: f64) -> f64 {
    // pairs sorted by value
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        return pairs[pairs.len() / 2].0;
    }
    let target = q * total;
    let mut acc = 0.0;
    for &(v, w) in pairs.iter() {
        acc += w;
        if acc >= target {
            return v;
        }
    }
    pairs[pairs.len() - 1].0
}

/// EM with family-specific M-steps: moments for Gaussians, weighted quantiles for the
/// heavy-tailed and location-only families.
fn em(
    sorted: &[f64],
    families: &[EmissionSpec],
    mut s: Start,
    iterations: usize,
    floor: f64,
) -> Start {
    let k = families.len();
    let n = sorted.len();
    let mut resp = vec![0.0; n * k];
    let mut logs = vec![0.0; k];
    for _ in 0..iterations {
        // E-step
        for (i, &x) in sorted.iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for j in 0..k {
                logs[j] = if s.weights[j] > 0.0 {
                    s.weights[j].ln() + families[j].log_density(&s.params[j], x)
                } else {
                    f64::NEG_INFINITY
                };
                max = max.max(logs[j]);
            }
            let row = &mut resp[i * k..(i + 1) * k];
            if max == f64::INFINITY {
                for j in 0..k {
                    row[j] = if logs[j] == f64::INFINITY { 1.0 } else { 0.0 };
                }
            } else if max == f64::NEG_INFINITY {
                row.iter_mut().for_each(|r| *r = 1.0 / k as f64);
            } else {
                let mut tot = 0.0;
                for j in 0..k {
                    row[j] = (logs[j] - max).exp();
                    tot += row[j];
                }
                row.iter_mut().for_each(|r| *r /= tot);
            }
            let tot: f64 = row.iter().sum();
            if tot > 0.0 && (tot - 1.0).abs() > 1e-12 {
                row.iter_mut().for_each(|r| *r /= tot);
            }
        }
        // M-step
        let mut change = 0.0f64;
        for j in 0..k {
            let wsum: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            let new_w = (wsum / n as f64).max(1e-6);
            change = change.max((new_w - s.weights[j]).abs());
            s.weights[j] = new_w;
            let spec = &families[j];
            if spec.is_known() || wsum <= 1e-9 {
                continue;
            }
            let old = s.params[j];
            let new = match spec.kind {
                EmissionKind::Gaussian => {
                    let mean = (0..n).map(|i| resp[i * k + j] * sorted[i]).sum::<f64>() / wsum;
                    let var = (0..n)
                        .map(|i| resp[i * k + j] * (sorted[i] - mean).powi(2))
                        .sum::<f64>()
                        / wsum;
                    EmissionParams::new(mean, var.sqrt().max(floor))
                }
                _ => {
                    let mut pairs: Vec<(f64, f64)> =
                        (0..n).map(|i| (sorted[i], resp[i * k + j])).collect();
                    let med = weighted_quantile(&mut pairs, 0.5);
                    match spec.kind {
                        EmissionKind::Cauchy => {
                            let spread = weighted_quantile(&mut pairs, 0.75)
                                - weighted_quantile(&mut pairs, 0.25);
                            EmissionParams::new(med, (spread / 2.0).max(floor))
                        }
                        EmissionKind::Uniform => {
                            let lo = weighted_quantile(&mut pairs, 0.0);
                            let hi = weighted_quantile(&mut pairs, 1.0);
                            EmissionParams::new(lo, (hi - lo).max(floor))
                        }
                        EmissionKind::SkewGaussian { alpha } => {
                            let mean =
                                (0..n).map(|i| resp[i * k + j] * sorted[i]).sum::<f64>() / wsum;
                            let d = alpha / (1.0 + alpha * alpha).sqrt();
                            EmissionParams::location(mean - d * (2.0 / std::f64::consts::PI).sqrt())
                        }
                        _ => EmissionParams::location(med),
                    }
                }
            };
            change =
                change.max((new.location - old.location).abs() + (new.scale - old.scale).abs());
            s.params[j] = new;
        }
        let tot: f64 = s.weights.iter().sum();
        s.weights.iter_mut().for_each(|w| *w /= tot);
        if change < 1e-10 {
            break;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::sorted_copy;
    use crate::mixture::MixtureCandidate;
    use crate::rng;
    use crate::simplex::WeightVector;

    #[test]
    fn em_recovers_separated_gaussians() {
        let g = EmissionSpec::gaussian();
        let truth = MixtureCandidate::new(
            WeightVector::new(vec![3, 7], 10).unwrap(),
            vec![
                (g, EmissionParams::new(-4.0, 1.0)),
                (g, EmissionParams::new(3.0, 0.5)),
            ],
        )
        .unwrap();
        let x = sorted_copy(&truth.sample(4000, &mut rng::from_seed(1)));
        let s = starts(&x, &[g, g], 200);
        let em = &s[0];
        let mut comps: Vec<_> = em.params.iter().zip(&em.weights).collect();
        comps.sort_by(|a, b| a.0.location.total_cmp(&b.0.location));
        assert!((comps[0].0.location + 4.0).abs() < 0.1);
        assert!((comps[1].0.scale - 0.5).abs() < 0.05);
        assert!((comps[0].1 - 0.3).abs() < 0.03);
    }

    #[test]
    fn mixed_families_try_all_assignments() {
        let s = starts(
            &[0.0, 1.0, 2.0, 3.0],
            &[EmissionSpec::gaussian(), EmissionSpec::cauchy()],
            0,
        );
        assert_eq!(s.len(), 2);
        assert_eq!(subsets(&[0, 1, 2, 3], 2).len(), 6);
        assert_eq!(permutations(3).len(), 6);
    }
}
