//! Mixture candidates, parameter lattices and finite candidate sets.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::emission::{EmissionNet, EmissionParams, EmissionSpec};
use crate::error::{domain, Result, RhoError};
use crate::simplex::{self, min_numerator, WeightVector};

/// Default cap on materialized candidate sets.
pub const DEFAULT_CANDIDATE_BUDGET: u128 = 2_000_000;

/// One mixture `Σ w_k F_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureCandidate {
    weights: WeightVector,
    components: Vec<(EmissionSpec, EmissionParams)>,
}

impl MixtureCandidate {
    pub fn new(
        weights: WeightVector,
        components: Vec<(EmissionSpec, EmissionParams)>,
    ) -> Result<Self> {
        if weights.k() != components.len() {
            return domain(format!(
                "{} weights for {} components",
                weights.k(),
                components.len()
            ));
        }
        for (spec, p) in &components {
            spec.validate(p)?;
        }
        Ok(MixtureCandidate {
            weights,
            components,
        })
    }

    /// Single-component candidate.
    pub fn single(spec: EmissionSpec, params: EmissionParams) -> Result<Self> {
        Self::new(WeightVector::unit(), vec![(spec, params)])
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn components(&self) -> &[(EmissionSpec, EmissionParams)] {
        &self.components
    }

    /// `log Σ w_k f_k(anchor + offset)`; `+inf` at a pole of a weighted component.
    pub fn log_density_at(&self, anchor: f64, offset: f64) -> f64 {
        let mut terms = [0.0f64; 16];
        let mut heap = Vec::new();
        let buf: &mut [f64] = if self.k() <= terms.len() {
            &mut terms[..self.k()]
        } else {
            heap.resize(self.k(), 0.0);
            &mut heap
        };
        let mut max = f64::NEG_INFINITY;
        for (k, (spec, p)) in self.components.iter().enumerate() {
            let w = self.weights.weight(k);
            let l = if w > 0.0 {
                w.ln() + spec.log_density_at(p, anchor, offset)
            } else {
                f64::NEG_INFINITY
            };
            if l == f64::INFINITY {
                return f64::INFINITY;
            }
            buf[k] = l;
            max = max.max(l);
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + buf.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.log_density_at(x, 0.0)
    }

    /// `Σ w_k f_k(x)`.
    pub fn density(&self, x: f64) -> crate::emission::Density {
        crate::emission::Density::from_log(self.log_density(x))
    }

    /// Latent component by weight, then an emission draw.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let w = self.weights.real();
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = self.k() - 1;
                for (k, &wk) in w.iter().enumerate() {
                    acc += wk;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                let (spec, p) = &self.components[pick];
                spec.sample_one(p, rng)
            })
            .collect()
    }

    /// Split points for quadrature: every weighted component's features.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.components
            .iter()
            .flat_map(|(s, p)| s.breakpoints(p))
            .collect()
    }

    /// Candidate under the data map `x -> (x - shift) / factor`.
    pub fn affine(&self, shift: f64, factor: f64) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .map(|(s, p)| {
                let q = EmissionParams {
                    location: (p.location - shift) / factor,
                    scale: if s.has_scale() { p.scale / factor } else { 1.0 },
                };
                let spec = match s.fixed {
                    Some(_) => EmissionSpec::known(s.kind, q)?,
                    None => *s,
                };
                Ok((spec, q))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureCandidate {
            weights: self.weights.clone(),
            components: comps,
        })
    }
}

fn block_key(spec: &EmissionSpec) -> (u8, u8, u64) {
    let alpha = match spec.kind {
        crate::EmissionKind::SkewGaussian { alpha } | crate::EmissionKind::Spike { alpha } => {
            alpha.to_bits()
        }
        _ => 0,
    };
    (u8::from(!spec.is_known()), spec.kind.block_rank(), alpha)
}

/// Orders components block by block (known components first, then Gaussian, Cauchy,
/// Laplace, skew-Gaussian, uniform, spike) and, within a block, descending by scale
/// then location. Weights follow their components. Idempotent.
pub fn canonicalize(c: &MixtureCandidate) -> MixtureCandidate {
    let mut order: Vec<usize> = (0..c.k()).collect();
    order.sort_by(|&a, &b| {
        let (sa, pa) = &c.components[a];
        let (sb, pb) = &c.components[b];
        block_key(sa)
            .cmp(&block_key(sb))
            .then(pb.scale.total_cmp(&pa.scale))
            .then(pb.location.total_cmp(&pa.location))
    });
    MixtureCandidate {
        weights: c.weights.permuted(&order),
        components: order.iter().map(|&i| c.components[i]).collect(),
    }
}

/// Model θ = (K, λ_1..λ_K): component families, weight floor δ and V̄ = Σ V_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub k: usize,
    pub families: Vec<EmissionSpec>,
    pub delta: f64,
    pub vbar: u32,
}

impl ModelDescriptor {
    pub fn new(families: Vec<EmissionSpec>, delta: f64) -> Result<Self> {
        let k = families.len();
        if k == 0 {
            return domain("a model needs at least one component");
        }
        if !(delta >= 0.0) || delta > (1.0 / k as f64) * (1.0 + 1e-12) {
            return domain(format!("δ={delta} must lie in [0, 1/K] with K={k}"));
        }
        let vbar = families.iter().map(|s| s.vc_bound).sum();
        Ok(ModelDescriptor {
            k,
            families,
            delta,
            vbar,
        })
    }

    /// K copies of one family.
    pub fn homogeneous(spec: EmissionSpec, k: usize, delta: f64) -> Result<Self> {
        Self::new(vec![spec; k], delta)
    }

    /// Short identifier, e.g. `K=2[gaussian,cauchy]`.
    pub fn label(&self) -> String {
        let fams: Vec<String> = self.families.iter().map(|f| f.label()).collect();
        format!("K={}[{}]", self.k, fams.join(","))
    }

    /// Number of components in the leading Gaussian block.
    pub fn gaussian_count(&self) -> usize {
        self.families
            .iter()
            .filter(|f| f.kind == crate::EmissionKind::Gaussian && !f.is_known())
            .count()
    }

    pub fn conforms(&self, c: &MixtureCandidate) -> bool {
        c.k() == self.k
            && c.components
                .iter()
                .zip(&self.families)
                .all(|((s, _), f)| s.kind == f.kind && s.fixed == f.fixed)
            && c.weights.respects_floor(self.delta)
    }
}

/// Coordinates of a lattice point: weight numerators and per-slot grid indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub weights: Vec<u64>,
    pub loc: Vec<u64>,
    pub scale: Vec<u64>,
}

/// Lazy finite model `𝒬_δ(θ)`: δ-floored weight grid with denominator `N` times the
/// product of per-slot nets. Points are materialized on demand, so the lattice can
/// be far larger than any enumerable candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLattice {
    pub descriptor: ModelDescriptor,
    pub nets: Vec<EmissionNet>,
    pub weight_denominator: u64,
}

impl ModelLattice {
    pub fn new(
        descriptor: ModelDescriptor,
        nets: Vec<EmissionNet>,
        weight_denominator: u64,
    ) -> Result<Self> {
        if nets.len() != descriptor.k {
            return domain(format!("{} nets for K={}", nets.len(), descriptor.k));
        }
        for (net, fam) in nets.iter().zip(&descriptor.families) {
            if net.spec.kind != fam.kind || net.spec.fixed != fam.fixed {
                return domain(format!(
                    "net family {} does not match descriptor slot {}",
                    net.spec.label(),
                    fam.label()
                ));
            }
            if net.is_empty() {
                return domain("empty emission net");
            }
        }
        if weight_denominator == 0 || weight_denominator < descriptor.k as u64 {
            return domain("weight denominator must be at least K");
        }
        let lat = ModelLattice {
            descriptor,
            nets,
            weight_denominator,
        };
        if lat.weight_grid_size()? == 0 {
            return domain(format!(
                "no weight vector with denominator {} respects δ={}",
                weight_denominator, lat.descriptor.delta
            ));
        }
        Ok(lat)
    }

    pub fn k(&self) -> usize {
        self.descriptor.k
    }

    pub fn min_numerator(&self) -> u64 {
        if self.k() == 1 {
            return self.weight_denominator;
        }
        min_numerator(self.weight_denominator, self.descriptor.delta)
    }

    pub fn weight_grid_size(&self) -> Result<u128> {
        simplex::weight_grid_size(self.k(), self.weight_denominator, self.descriptor.delta)
    }

    /// Number of lattice points (saturating).
    pub fn size(&self) -> u128 {
        let w = self.weight_grid_size().unwrap_or(u128::MAX);
        self.nets
            .iter()
            .fold(w, |acc, n| acc.saturating_mul(n.len()))
    }

    /// All nets carry the same family and grids.
    pub fn exchangeable(&self) -> bool {
        self.k() > 1 && self.nets.windows(2).all(|w| w[0] == w[1])
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        let k = self.k();
        p.weights.len() == k
            && p.loc.len() == k
            && p.scale.len() == k
            && p.weights.iter().sum::<u64>() == self.weight_denominator
            && p.weights.iter().all(|&d| d >= self.min_numerator())
            && (0..k).all(|s| {
                p.loc[s] < self.nets[s].location_count() && p.scale[s] < self.nets[s].scale_count()
            })
    }

    pub fn params(&self, slot: usize, loc: u64, scale: u64) -> EmissionParams {
        self.nets[slot].params_at(loc, scale)
    }

    pub fn candidate(&self, p: &LatticePoint) -> MixtureCandidate {
        let weights = WeightVector::new(p.weights.clone(), self.weight_denominator)
            .expect("lattice point weights sum to N");
        let components = (0..self.k())
            .map(|s| (self.nets[s].spec, self.params(s, p.loc[s], p.scale[s])))
            .collect();
        MixtureCandidate {
            weights,
            components,
        }
    }

    /// Nearest lattice point to real weights and per-slot parameters.
    pub fn snap(&self, weights: &[f64], params: &[EmissionParams]) -> LatticePoint {
        let k = self.k();
        let loc = (0..k)
            .map(|s| self.nets[s].locations.nearest(params[s].location))
            .collect();
        let scale = (0..k)
            .map(|s| {
                self.nets[s]
                    .scales
                    .map_or(0, |g| g.nearest(params[s].scale))
            })
            .collect();
        LatticePoint {
            weights: self.snap_weights(weights),
            loc,
            scale,
        }
    }

    /// Largest-remainder rounding of real weights onto the floored grid.
    pub fn snap_weights(&self, weights: &[f64]) -> Vec<u64> {
        let k = self.k();
        let n = self.weight_denominator;
        let m = self.min_numerator();
        if k == 1 {
            return vec![n];
        }
        let free = n - m * k as u64;
        let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        let raw: Vec<f64> = weights
            .iter()
            .map(|w| {
                let share = if total > 0.0 {
                    w.max(0.0) / total
                } else {
                    1.0 / k as f64
                };
                ((share * n as f64) - m as f64).max(0.0)
            })
            .collect();
        let raw_sum: f64 = raw.iter().sum();
        let scaled: Vec<f64> = raw
            .iter()
            .map(|r| {
                if raw_sum > 0.0 {
                    r * free as f64 / raw_sum
                } else {
                    free as f64 / k as f64
                }
            })
            .collect();
        let mut d: Vec<u64> = scaled.iter().map(|x| x.floor() as u64).collect();
        let mut left = free - d.iter().sum::<u64>().min(free);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let ra = scaled[a] - scaled[a].floor();
            let rb = scaled[b] - scaled[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            d[i] += 1;
            left -= 1;
        }
        d.iter().map(|x| x + m).collect()
    }

    /// Representative of `p` with components in non-increasing (scale, location)
    /// index order; weights follow their components.
    pub fn canonical_point(&self, p: &LatticePoint) -> LatticePoint {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| (p.scale[b], p.loc[b]).cmp(&(p.scale[a], p.loc[a])));
        LatticePoint {
            weights: order.iter().map(|&i| p.weights[i]).collect(),
            loc: order.iter().map(|&i| p.loc[i]).collect(),
            scale: order.iter().map(|&i| p.scale[i]).collect(),
        }
    }

    pub fn is_canonical(&self, p: &LatticePoint) -> bool {
        (1..self.k()).all(|s| (p.scale[s - 1], p.loc[s - 1]) >= (p.scale[s], p.loc[s]))
    }

    /// Predicted number of points kept by [`ModelLattice::enumerate`].
    pub fn enumerated_size(&self, reduce: bool) -> u128 {
        if reduce && self.exchangeable() {
            let w = self.weight_grid_size().unwrap_or(u128::MAX);
            let m = self.nets[0].len();
            // multisets of K net points
            let multisets = u64::try_from(m)
                .ok()
                .and_then(|m| simplex::binomial(m + self.k() as u64 - 1, self.k() as u64))
                .unwrap_or(u128::MAX);
            w.saturating_mul(multisets)
        } else {
            self.size()
        }
    }

    /// Materializes the lattice: weight grid (lexicographic) × slot 1 × … × slot K,
    /// each net in location-major order. With `reduce` on an exchangeable lattice only
    /// canonical points are kept.
    pub fn enumerate(&self, reduce: bool, budget: u128) -> Result<Vec<LatticePoint>> {
        let required = self.enumerated_size(reduce);
        if required > budget {
            return Err(RhoError::Budget { required, budget });
        }
        let reduce = reduce && self.exchangeable();
        let grid = if self.k() == 1 {
            vec![WeightVector::unit()]
        } else {
            simplex::enumerate_weight_grid(
                self.k(),
                self.weight_denominator,
                self.descriptor.delta,
            )?
        };
        let slots: Vec<Vec<(u64, u64)>> = self
            .nets
            .iter()
            .map(|n| {
                (0..n.location_count())
                    .flat_map(|l| (0..n.scale_count()).map(move |s| (l, s)))
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(required as usize);
        let k = self.k();
        let mut idx = vec![0usize; k];
        for w in &grid {
            let weights: Vec<u64> = if k == 1 {
                vec![self.weight_denominator]
            } else {
                w.numerators().to_vec()
            };
            idx.iter_mut().for_each(|i| *i = 0);
            'outer: loop {
                let point = LatticePoint {
                    weights: weights.clone(),
                    loc: (0..k).map(|s| slots[s][idx[s]].0).collect(),
                    scale: (0..k).map(|s| slots[s][idx[s]].1).collect(),
                };
                if !reduce || self.is_canonical(&point) {
                    out.push(point);
                }
                // odometer over the slots, last slot fastest
                let mut s = k;
                loop {
                    if s == 0 {
                        break 'outer;
                    }
                    s -= 1;
                    idx[s] += 1;
                    if idx[s] < slots[s].len() {
                        break;
                    }
                    idx[s] = 0;
                }
            }
        }
        Ok(out)
    }

    /// Lattice under the data map `x -> (x - shift) / factor`.
    pub fn affine(&self, shift: f64, factor: f64) -> Result<Self> {
        let nets = self
            .nets
            .iter()
            .map(|n| n.affine(shift, factor))
            .collect::<Result<Vec<_>>>()?;
        let families = nets.iter().map(|n| n.spec).collect();
        let descriptor = ModelDescriptor::new(families, self.descriptor.delta)?;
        ModelLattice::new(descriptor, nets, self.weight_denominator)
    }
}

/// Immutable finite family `𝒬_δ(θ)` with its descriptor.
///
/// Sets assembled from a lattice remember it, together with the lattice coordinates
/// of every candidate, so the heuristic search can move through the set by
/// coordinate steps.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    descriptor: ModelDescriptor,
    candidates: Vec<MixtureCandidate>,
    lattice: Option<LatticeIndex>,
}

#[derive(Debug, Clone)]
pub(crate) struct LatticeIndex {
    pub lattice: ModelLattice,
    pub points: Vec<LatticePoint>,
    pub index: HashMap<LatticePoint, usize>,
    pub reduced: bool,
}

impl LatticeIndex {
    /// Set index of the candidate with the same density as lattice point `p`.
    pub fn lookup(&self, p: &LatticePoint) -> Option<usize> {
        if self.reduced {
            self.index.get(&self.lattice.canonical_point(p)).copied()
        } else {
            self.index.get(p).copied()
        }
    }
}

/// Options for [`assemble_candidates`].
#[derive(Debug, Clone, Copy)]
pub struct AssembleOptions {
    /// Keep only canonically ordered candidates when all slots are identical.
    pub reduce_exchangeable: bool,
    pub budget: u128,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            reduce_exchangeable: true,
            budget: DEFAULT_CANDIDATE_BUDGET,
        }
    }
}

/// Full cross product weight grid × net_1 × … × net_K.
pub fn assemble_candidates(
    descriptor: ModelDescriptor,
    nets: Vec<EmissionNet>,
    weight_denominator: u64,
    opts: AssembleOptions,
) -> Result<CandidateSet> {
    let lattice = ModelLattice::new(descriptor, nets, weight_denominator)?;
    CandidateSet::from_lattice(lattice, opts)
}

impl CandidateSet {
    pub fn from_lattice(lattice: ModelLattice, opts: AssembleOptions) -> Result<Self> {
        let points = lattice.enumerate(opts.reduce_exchangeable, opts.budget)?;
        let candidates: Vec<MixtureCandidate> =
            points.iter().map(|p| lattice.candidate(p)).collect();
        let index = points
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, p)| (p, i))
            .collect();
        Ok(CandidateSet {
            descriptor: lattice.descriptor.clone(),
            candidates,
            lattice: Some(LatticeIndex {
                reduced: opts.reduce_exchangeable && lattice.exchangeable(),
                lattice,
                points,
                index,
            }),
        })
    }

    /// Set from an explicit candidate list; every candidate must conform.
    pub fn from_candidates(
        descriptor: ModelDescriptor,
        candidates: Vec<MixtureCandidate>,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return domain("candidate set must be nonempty");
        }
        if let Some(bad) = candidates.iter().position(|c| !descriptor.conforms(c)) {
            return domain(format!(
                "candidate {bad} does not conform to {}",
                descriptor.label()
            ));
        }
        Ok(CandidateSet {
            descriptor,
            candidates,
            lattice: None,
        })
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    pub fn candidates(&self) -> &[MixtureCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn lattice(&self) -> Option<&ModelLattice> {
        self.lattice.as_ref().map(|l| &l.lattice)
    }

    pub(crate) fn lattice_index(&self) -> Option<&LatticeIndex> {
        self.lattice.as_ref()
    }

    /// Lattice coordinates of candidate `i`, when the set came from a lattice.
    pub fn point(&self, i: usize) -> Option<&LatticePoint> {
        self.lattice.as_ref().map(|l| &l.points[i])
    }

    /// Line-oriented audit format: one candidate per line,
    /// `d_1/N ... d_K/N ; kind location scale ; ...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.descriptor.label());
        for c in &self.candidates {
            out.push_str(&candidate_line(c));
            out.push('\n');
        }
        out
    }

    /// Parses [`CandidateSet::to_text`] output against a known descriptor.
    pub fn from_text(descriptor: ModelDescriptor, text: &str) -> Result<Self> {
        let mut cands = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| RhoError::Domain(format!("line {}: {m}", lineno + 1));
            let mut parts = line.split(';').map(str::trim);
            let wpart = parts.next().ok_or_else(|| bad("missing weights"))?;
            let mut nums = Vec::new();
            let mut den = None;
            for tok in wpart.split_whitespace() {
                let (d, n) = tok
                    .split_once('/')
                    .ok_or_else(|| bad("weight must be d/N"))?;
                nums.push(d.parse::<u64>().map_err(|_| bad("bad numerator"))?);
                let n: u64 = n.parse().map_err(|_| bad("bad denominator"))?;
                if *den.get_or_insert(n) != n {
                    return Err(bad("weights need a common denominator"));
                }
            }
            let weights = WeightVector::new(nums, den.ok_or_else(|| bad("no weights"))?)?;
            let mut comps = Vec::new();
            for (slot, part) in parts.enumerate() {
                let toks: Vec<&str> = part.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(bad("component needs kind location scale"));
                }
                let spec = *descriptor
                    .families
                    .get(slot)
                    .ok_or_else(|| bad("too many components"))?;
                if toks[0] != spec.label() {
                    return Err(bad(&format!(
                        "expected family {}, found {}",
                        spec.label(),
                        toks[0]
                    )));
                }
                let location: f64 = toks[1].parse().map_err(|_| bad("bad location"))?;
                let scale: f64 = toks[2].parse().map_err(|_| bad("bad scale"))?;
                comps.push((spec, EmissionParams { location, scale }));
            }
            cands.push(MixtureCandidate::new(weights, comps)?);
        }
        Self::from_candidates(descriptor, cands)
    }

    /// Union-ready copy of the candidates under an affine data map.
    pub fn affine(&self, shift: f64, factor: f64) -> Result<Self> {
        if let Some(li) = &self.lattice {
            let lattice = li.lattice.affine(shift, factor)?;
            return CandidateSet::from_lattice(
                lattice,
                AssembleOptions {
                    reduce_exchangeable: li.reduced,
                    budget: u128::MAX,
                },
            );
        }
        let cands = self
            .candidates
            .iter()
            .map(|c| c.affine(shift, factor))
            .collect::<Result<Vec<_>>>()?;
        let families = cands[0].components().iter().map(|(s, _)| *s).collect();
        let descriptor = ModelDescriptor::new(families, self.descriptor.delta)?;
        CandidateSet::from_candidates(descriptor, cands)
    }
}

pub(crate) fn candidate_line(c: &MixtureCandidate) -> String {
    let mut s = String::new();
    let den = c.weights().denominator();
    for (i, d) in c.weights().numerators().iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{d}/{den}");
    }
    for (spec, p) in c.components() {
        let _ = write!(s, " ; {} {:e} {:e}", spec.label(), p.location, p.scale);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::{build_net, LinearGrid, LogGrid};
    use crate::quadrature::{integrate_line, QuadratureConfig};
    use crate::rng;

    fn uniform_pair() -> MixtureCandidate {
        let u = EmissionSpec::uniform();
        MixtureCandidate::new(
            WeightVector::new(vec![1, 1], 2).unwrap(),
            vec![
                (u, EmissionParams::new(0.0, 1.0)),
                (u, EmissionParams::new(2.0, 1.0)),
            ],
        )
        .unwrap()
    }

    fn gauss_net(locs: u64, scales: u64) -> EmissionNet {
        EmissionNet::new(
            EmissionSpec::gaussian(),
            LinearGrid::spanning(-1.0, 1.0, locs),
            Some(LogGrid::spanning(0.5, 2.0, scales)),
        )
    }

    #[test]
    fn single_component_density_matches_emission() {
        let g = EmissionSpec::gaussian();
        let p = EmissionParams::new(0.3, 1.7);
        let c = MixtureCandidate::single(g, p).unwrap();
        for x in [-2.0, 0.0, 0.3, 4.0] {
            let a = c.density(x).value();
            let b = g.density(&p, x).unwrap().value();
            assert!((a - b).abs() < 1e-15 * b.max(1e-300));
        }
    }

    #[test]
    fn disjoint_uniforms() {
        assert!((uniform_pair().density(0.5).value() - 0.5).abs() < 1e-15);
        assert_eq!(uniform_pair().density(1.5).value(), 0.0);
    }

    #[test]
    fn gaussian_mixture_integrates_to_one() {
        let g = EmissionSpec::gaussian();
        let c = MixtureCandidate::new(
            WeightVector::new(vec![3, 7], 10).unwrap(),
            vec![
                (g, EmissionParams::new(-2.0, 0.5)),
                (g, EmissionParams::new(3.0, 2.0)),
            ],
        )
        .unwrap();
        let f = |a: f64, o: f64| c.log_density_at(a, o).exp();
        let r = integrate_line(&f, &c.breakpoints(), &QuadratureConfig::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sampling_follows_weights() {
        let c = uniform_pair();
        let xs = c.sample(100_000, &mut rng::from_seed(9));
        let frac = xs.iter().filter(|&&x| x < 1.5).count() as f64 / xs.len() as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25f64 / 1e5).sqrt());
        assert_eq!(xs, c.sample(100_000, &mut rng::from_seed(9)));
    }

    #[test]
    fn degenerate_weights_draw_first_component() {
        let u = EmissionSpec::uniform();
        let c = MixtureCandidate::new(
            WeightVector::new(vec![1, 0], 1).unwrap(),
            vec![
                (u, EmissionParams::new(0.0, 1.0)),
                (u, EmissionParams::new(5.0, 1.0)),
            ],
        )
        .unwrap();
        assert!(c
            .sample(1000, &mut rng::from_seed(1))
            .iter()
            .all(|&x| x < 1.0));
    }

    #[test]
    fn canonical_order_examples() {
        let g = EmissionSpec::gaussian();
        let c = MixtureCandidate::new(
            WeightVector::new(vec![1, 3], 4).unwrap(),
            vec![
                (g, EmissionParams::new(1.0, 1.0)),
                (g, EmissionParams::new(0.0, 2.0)),
            ],
        )
        .unwrap();
        let k = canonicalize(&c);
        assert_eq!(k.components()[0].1, EmissionParams::new(0.0, 2.0));
        assert_eq!(k.weights().numerators(), &[3, 1]);
        assert_eq!(canonicalize(&k), k);

        let c = MixtureCandidate::new(
            WeightVector::new(vec![1, 1], 2).unwrap(),
            vec![
                (g, EmissionParams::new(3.0, 1.0)),
                (g, EmissionParams::new(5.0, 1.0)),
            ],
        )
        .unwrap();
        assert_eq!(canonicalize(&c).components()[0].1.location, 5.0);
    }

    #[test]
    fn mixed_kinds_sort_in_blocks() {
        let g = EmissionSpec::gaussian();
        let cy = EmissionSpec::cauchy();
        let c = MixtureCandidate::new(
            WeightVector::new(vec![1, 1, 1], 3).unwrap(),
            vec![
                (cy, EmissionParams::new(0.0, 5.0)),
                (g, EmissionParams::new(0.0, 1.0)),
                (g, EmissionParams::new(0.0, 3.0)),
            ],
        )
        .unwrap();
        let k = canonicalize(&c);
        let kinds: Vec<_> = k
            .components()
            .iter()
            .map(|(s, p)| (s.kind.name(), p.scale))
            .collect();
        assert_eq!(
            kinds,
            vec![("gaussian", 3.0), ("gaussian", 1.0), ("cauchy", 5.0)]
        );
    }

    #[test]
    fn single_family_set_size() {
        let d = ModelDescriptor::homogeneous(EmissionSpec::gaussian(), 1, 1.0).unwrap();
        let set =
            assemble_candidates(d, vec![gauss_net(3, 1)], 1, AssembleOptions::default()).unwrap();
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn exchangeable_reduction_count() {
        let d = ModelDescriptor::homogeneous(EmissionSpec::gaussian(), 2, 0.25).unwrap();
        let nets = vec![gauss_net(2, 2), gauss_net(2, 2)];
        let full = assemble_candidates(
            d.clone(),
            nets.clone(),
            4,
            AssembleOptions {
                reduce_exchangeable: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(full.len(), 3 * 4 * 4);
        let red = assemble_candidates(d, nets, 4, AssembleOptions::default()).unwrap();
        // weight grid 3 × multisets of 2 out of 4 = 3 × 10
        assert_eq!(red.len(), 30);
        assert!(red.len() >= 18 && red.len() <= 48);
        // oracle: count canonical points of the full set by brute force
        let li = full.lattice_index().unwrap();
        let brute = li
            .points
            .iter()
            .filter(|p| li.lattice.is_canonical(p))
            .count();
        assert_eq!(brute, red.len());
    }

    #[test]
    fn uniform_weight_only() {
        let d = ModelDescriptor::homogeneous(EmissionSpec::gaussian(), 3, 1.0 / 3.0).unwrap();
        let lat = ModelLattice::new(d, vec![gauss_net(1, 1); 3], 3).unwrap();
        assert_eq!(lat.weight_grid_size().unwrap(), 1);
    }

    #[test]
    fn budget_is_enforced() {
        let d = ModelDescriptor::homogeneous(EmissionSpec::gaussian(), 2, 0.0).unwrap();
        let err = assemble_candidates(
            d,
            vec![gauss_net(50, 50), gauss_net(50, 50)],
            100,
            AssembleOptions {
                reduce_exchangeable: false,
                budget: 1000,
            },
        )
        .unwrap_err();
        assert!(
            matches!(err, RhoError::Budget { required, budget: 1000 } if required == 101 * 2500 * 2500)
        );
    }

    #[test]
    fn text_round_trip() {
        let data: Vec<f64> = (0..20).map(|i| i as f64 * 0.37).collect();
        let g = EmissionSpec::gaussian();
        let d = ModelDescriptor::homogeneous(g, 2, 0.2).unwrap();
        let net = build_net(&g, &data, 3, 2).unwrap();
        let set = assemble_candidates(
            d.clone(),
            vec![net.clone(), net],
            5,
            AssembleOptions::default(),
        )
        .unwrap();
        let back = CandidateSet::from_text(d, &set.to_text()).unwrap();
        assert_eq!(back.candidates(), set.candidates());
    }

    #[test]
    fn snap_respects_floor_and_sum() {
        let d = ModelDescriptor::homogeneous(EmissionSpec::gaussian(), 3, 0.1).unwrap();
        let lat = ModelLattice::new(d, vec![gauss_net(5, 5); 3], 100).unwrap();
        let w = lat.snap_weights(&[0.0, 0.33, 0.67]);
        assert_eq!(w.iter().sum::<u64>(), 100);
        assert!(w.iter().all(|&x| x >= 10));
    }
}
