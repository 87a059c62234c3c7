//! Parametric emission families on the real line.
//!
//! Every family is a location(-scale) family built from a standard density `f0`:
//! `f(x) = f0((x - z) / σ) / σ`. Location-only families fix `σ = 1`.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Default VC bound for the uniform family (class of intervals).
pub const UNIFORM_VC_DEFAULT: u32 = 3;

/// Shape of an emission family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionKind {
    Gaussian,
    Cauchy,
    Laplace,
    SkewGaussian { alpha: f64 },
    Uniform,
    Spike { alpha: f64 },
}

impl EmissionKind {
    /// Stable name used in config files.
    pub fn name(&self) -> &'static str {
        match self {
            EmissionKind::Gaussian => "gaussian",
            EmissionKind::Cauchy => "cauchy",
            EmissionKind::Laplace => "laplace",
            EmissionKind::SkewGaussian { .. } => "skew_gaussian",
            EmissionKind::Uniform => "uniform",
            EmissionKind::Spike { .. } => "spike",
        }
    }

    /// Parses a stable family name. `alpha` is required for `skew_gaussian` and `spike`.
    pub fn from_name(name: &str, alpha: Option<f64>) -> Result<Self> {
        let kind = match name {
            "gaussian" => EmissionKind::Gaussian,
            "cauchy" => EmissionKind::Cauchy,
            "laplace" => EmissionKind::Laplace,
            "uniform" => EmissionKind::Uniform,
            "skew_gaussian" | "spike" => {
                let Some(alpha) = alpha else {
                    return domain(format!("family `{name}` needs an alpha parameter"));
                };
                if name == "spike" {
                    EmissionKind::Spike { alpha }
                } else {
                    EmissionKind::SkewGaussian { alpha }
                }
            }
            other => return domain(format!("unknown emission family `{other}`")),
        };
        kind.validate()?;
        Ok(kind)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            EmissionKind::Spike { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                domain(format!("spike alpha must lie in (0,1), got {alpha}"))
            }
            EmissionKind::SkewGaussian { alpha } if !alpha.is_finite() => {
                domain(format!("skew-gaussian alpha must be finite, got {alpha}"))
            }
            _ => Ok(()),
        }
    }

    /// Whether the family carries a free scale parameter.
    pub fn has_scale(&self) -> bool {
        matches!(
            self,
            EmissionKind::Gaussian | EmissionKind::Cauchy | EmissionKind::Uniform
        )
    }

    /// Densities with an integrable pole at the location parameter.
    pub fn is_singular(&self) -> bool {
        matches!(self, EmissionKind::Spike { .. })
    }

    /// Block rank used when canonicalizing mixed-family candidates.
    pub(crate) fn block_rank(&self) -> u8 {
        match self {
            EmissionKind::Gaussian => 0,
            EmissionKind::Cauchy => 1,
            EmissionKind::Laplace => 2,
            EmissionKind::SkewGaussian { .. } => 3,
            EmissionKind::Uniform => 4,
            EmissionKind::Spike { .. } => 5,
        }
    }

    /// Log of the standard density at `u`; `+inf` at a pole, `-inf` off the support.
    #[inline]
    pub(crate) fn std_log_density(&self, u: f64) -> f64 {
        match *self {
            EmissionKind::Gaussian => -0.5 * u * u - LN_SQRT_2PI,
            EmissionKind::Cauchy => -(PI.ln()) - (u * u).ln_1p(),
            EmissionKind::Laplace => -LN_2 - u.abs(),
            EmissionKind::SkewGaussian { alpha } => {
                LN_2 - 0.5 * u * u - LN_SQRT_2PI + ln_norm_cdf(alpha * u)
            }
            EmissionKind::Uniform => {
                if (0.0..=1.0).contains(&u) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            EmissionKind::Spike { alpha } => {
                let a = u.abs();
                if a == 0.0 {
                    f64::INFINITY
                } else if a <= 1.0 {
                    ((1.0 - alpha) / 2.0).ln() - alpha * a.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn sample_std<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EmissionKind::Gaussian => rng.sample(StandardNormal),
            EmissionKind::Cauchy => (PI * (rng.gen::<f64>() - 0.5)).tan(),
            EmissionKind::Laplace => {
                let u: f64 = rng.gen::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            EmissionKind::SkewGaussian { alpha } => {
                let d = alpha / (1.0 + alpha * alpha).sqrt();
                let u0: f64 = rng.sample(StandardNormal);
                let u1: f64 = rng.sample(StandardNormal);
                d * u0.abs() + (1.0 - d * d).sqrt() * u1
            }
            EmissionKind::Uniform => rng.gen::<f64>(),
            EmissionKind::Spike { alpha } => {
                let u = 1.0 - rng.gen::<f64>();
                let r = u.powf(1.0 / (1.0 - alpha));
                if rng.gen::<bool>() {
                    r
                } else {
                    -r
                }
            }
        }
    }

    /// Standard-coordinate split points for quadrature (features of `f0`).
    fn std_breakpoints(&self) -> &'static [f64] {
        match self {
            EmissionKind::Gaussian | EmissionKind::SkewGaussian { .. } => {
                &[-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0]
            }
            EmissionKind::Cauchy => &[-100.0, -10.0, -1.0, 0.0, 1.0, 10.0, 100.0],
            EmissionKind::Laplace => &[-8.0, -1.0, 0.0, 1.0, 8.0],
            EmissionKind::Uniform => &[0.0, 0.5, 1.0],
            EmissionKind::Spike { .. } => &[-1.0, 0.0, 1.0],
        }
    }
}

impl fmt::Display for EmissionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmissionKind::SkewGaussian { alpha } | EmissionKind::Spike { alpha } => {
                write!(f, "{}({alpha})", self.name())
            }
            _ => f.write_str(self.name()),
        }
    }
}

/// log Φ(t), accurate far into the lower tail.
pub(crate) fn ln_norm_cdf(t: f64) -> f64 {
    if t > -30.0 {
        (0.5 * statrs::function::erf::erfc(-t / std::f64::consts::SQRT_2)).ln()
    } else {
        let t2 = t * t;
        -0.5 * t2 - (-t).ln() - LN_SQRT_2PI + (1.0 - 1.0 / t2 + 3.0 / (t2 * t2)).ln()
    }
}

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return domain(format!("invalid interval [{lo}, {hi}]"));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Location and scale of one emission density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams {
    pub location: f64,
    pub scale: f64,
}

impl EmissionParams {
    pub fn new(location: f64, scale: f64) -> Self {
        EmissionParams { location, scale }
    }

    pub fn location(location: f64) -> Self {
        EmissionParams {
            location,
            scale: 1.0,
        }
    }
}

/// Point value of a density: finite, or the pole of an unbounded density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Finite(f64),
    Singular,
}

impl Density {
    /// Numeric view; the pole maps to `+inf`.
    pub fn value(self) -> f64 {
        match self {
            Density::Finite(v) => v,
            Density::Singular => f64::INFINITY,
        }
    }

    pub fn is_singular(self) -> bool {
        matches!(self, Density::Singular)
    }

    pub(crate) fn from_log(l: f64) -> Self {
        if l == f64::INFINITY {
            Density::Singular
        } else {
            Density::Finite(l.exp())
        }
    }
}

/// An emission family together with its parameter domains and VC-index bound.
///
/// A spec with `fixed` set is a known, fully specified component (a shifted copy of
/// a known shape); its only admissible parameter is the fixed one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionSpec {
    pub kind: EmissionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<EmissionParams>,
    pub location_domain: Interval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_domain: Option<Interval>,
    pub vc_bound: u32,
}

impl EmissionSpec {
    /// Family with unrestricted domains and the registry VC bound.
    pub fn new(kind: EmissionKind) -> Result<Self> {
        kind.validate()?;
        let scale_domain = kind.has_scale().then_some(Interval {
            lo: 1e-300,
            hi: 1e300,
        });
        let mut spec = EmissionSpec {
            kind,
            fixed: None,
            location_domain: Interval {
                lo: -f64::MAX,
                hi: f64::MAX,
            },
            scale_domain,
            vc_bound: 0,
        };
        spec.vc_bound = vc_index_bound(&spec);
        Ok(spec)
    }

    pub fn gaussian() -> Self {
        Self::new(EmissionKind::Gaussian).expect("valid kind")
    }

    pub fn cauchy() -> Self {
        Self::new(EmissionKind::Cauchy).expect("valid kind")
    }

    pub fn uniform() -> Self {
        Self::new(EmissionKind::Uniform).expect("valid kind")
    }

    pub fn spike(alpha: f64) -> Result<Self> {
        Self::new(EmissionKind::Spike { alpha })
    }

    /// Known component: `kind` frozen at `params`.
    pub fn known(kind: EmissionKind, params: EmissionParams) -> Result<Self> {
        let mut spec = Self::new(kind)?;
        spec.check_shape(&params)?;
        spec.location_domain = Interval {
            lo: params.location,
            hi: params.location,
        };
        spec.scale_domain = kind.has_scale().then_some(Interval {
            lo: params.scale,
            hi: params.scale,
        });
        spec.fixed = Some(params);
        spec.vc_bound = vc_index_bound(&spec);
        Ok(spec)
    }

    pub fn with_location_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.location_domain = Interval::new(lo, hi)?;
        Ok(self)
    }

    pub fn with_scale_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !self.kind.has_scale() {
            return domain(format!("family {} has no scale parameter", self.kind));
        }
        if lo <= 0.0 {
            return domain("scale domain lower endpoint must be positive");
        }
        self.scale_domain = Some(Interval::new(lo, hi)?);
        Ok(self)
    }

    /// Overrides the VC bound (only meaningful for the uniform family).
    pub fn with_vc_bound(mut self, v: u32) -> Result<Self> {
        if v == 0 {
            return domain("VC bound must be positive");
        }
        self.vc_bound = v;
        Ok(self)
    }

    pub fn is_known(&self) -> bool {
        self.fixed.is_some()
    }

    pub fn has_scale(&self) -> bool {
        self.kind.has_scale()
    }

    /// Identifier used in model descriptors and text formats.
    pub fn label(&self) -> String {
        match self.fixed {
            Some(p) if self.has_scale() => {
                format!("known:{}@{}/{}", self.kind, p.location, p.scale)
            }
            Some(p) => format!("known:{}@{}", self.kind, p.location),
            None => self.kind.to_string(),
        }
    }

    fn check_shape(&self, p: &EmissionParams) -> Result<()> {
        if !p.location.is_finite() {
            return domain(format!("location must be finite, got {}", p.location));
        }
        if !(p.scale > 0.0) || !p.scale.is_finite() {
            return domain(format!(
                "scale must be positive and finite, got {}",
                p.scale
            ));
        }
        if !self.kind.has_scale() && p.scale != 1.0 {
            return domain(format!(
                "family {} is location-only; scale must be 1, got {}",
                self.kind, p.scale
            ));
        }
        Ok(())
    }

    /// Checks that `p` is an admissible parameter of this family.
    pub fn validate(&self, p: &EmissionParams) -> Result<()> {
        self.check_shape(p)?;
        if let Some(fixed) = self.fixed {
            if *p != fixed {
                return domain(format!(
                    "known component {} only admits {fixed:?}",
                    self.label()
                ));
            }
            return Ok(());
        }
        if !self.location_domain.contains(p.location) {
            return domain(format!("location {} outside domain", p.location));
        }
        if let Some(sd) = self.scale_domain {
            if !sd.contains(p.scale) {
                return domain(format!("scale {} outside domain", p.scale));
            }
        }
        Ok(())
    }

    /// Density at `x` with respect to Lebesgue measure.
    pub fn density(&self, p: &EmissionParams, x: f64) -> Result<Density> {
        self.validate(p)?;
        Ok(Density::from_log(self.log_density(p, x)))
    }

    /// Log-density without validation; `+inf` at a pole.
    #[inline]
    pub fn log_density(&self, p: &EmissionParams, x: f64) -> f64 {
        self.kind.std_log_density((x - p.location) / p.scale) - p.scale.ln()
    }

    /// Log-density at `anchor + offset`. When `anchor` equals the location the
    /// standardized argument is `offset / σ` exactly, which keeps quadrature nodes
    /// near a pole accurate.
    #[inline]
    pub fn log_density_at(&self, p: &EmissionParams, anchor: f64, offset: f64) -> f64 {
        let u = ((anchor - p.location) + offset) / p.scale;
        self.kind.std_log_density(u) - p.scale.ln()
    }

    /// I.i.d. draws; deterministic given the generator state.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        p: &EmissionParams,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.validate(p)?;
        Ok((0..n).map(|_| self.sample_one(p, rng)).collect())
    }

    #[inline]
    pub(crate) fn sample_one<R: Rng + ?Sized>(&self, p: &EmissionParams, rng: &mut R) -> f64 {
        p.location + p.scale * self.kind.sample_std(rng)
    }

    /// Points where the density has a kink, a pole, a support edge, or most of its mass.
    pub fn breakpoints(&self, p: &EmissionParams) -> Vec<f64> {
        self.kind
            .std_breakpoints()
            .iter()
            .map(|&u| p.location + p.scale * u)
            .collect()
    }

    /// Poles of the density (where point evaluation is singular).
    pub fn singular_points(&self, p: &EmissionParams) -> Vec<f64> {
        if self.kind.is_singular() {
            vec![p.location]
        } else {
            Vec::new()
        }
    }
}

/// VC-index bound from the registry: 5 for the Gaussian, Cauchy and Laplace families,
/// 10 for skew-Gaussian and spike translation families, 3 (intervals) for uniforms,
/// 1 for a known single density. A spec whose `vc_bound` was overridden for the
/// uniform family keeps the override.
pub fn vc_index_bound(spec: &EmissionSpec) -> u32 {
    if spec.fixed.is_some() {
        return 1;
    }
    match spec.kind {
        EmissionKind::Gaussian | EmissionKind::Cauchy | EmissionKind::Laplace => 5,
        EmissionKind::SkewGaussian { .. } | EmissionKind::Spike { .. } => 10,
        EmissionKind::Uniform => {
            if spec.vc_bound > 0 {
                spec.vc_bound
            } else {
                UNIFORM_VC_DEFAULT
            }
        }
    }
}

/// Evenly spaced grid `start + i * step`, `i < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGrid {
    pub start: f64,
    pub step: f64,
    pub count: u64,
}

impl LinearGrid {
    pub fn spanning(lo: f64, hi: f64, count: u64) -> Self {
        let step = if count > 1 {
            (hi - lo) / (count - 1) as f64
        } else {
            0.0
        };
        LinearGrid {
            start: lo,
            step,
            count,
        }
    }

    pub fn single(v: f64) -> Self {
        LinearGrid {
            start: v,
            step: 0.0,
            count: 1,
        }
    }

    #[inline]
    pub fn value(&self, i: u64) -> f64 {
        self.start + i as f64 * self.step
    }

    /// Index of the grid value nearest to `v`.
    pub fn nearest(&self, v: f64) -> u64 {
        if self.count <= 1 || self.step == 0.0 {
            return 0;
        }
        let r = ((v - self.start) / self.step).round();
        r.clamp(0.0, (self.count - 1) as f64) as u64
    }

    /// Grid under `x -> (x - shift) / factor`.
    pub fn affine(&self, shift: f64, factor: f64) -> Self {
        LinearGrid {
            start: (self.start - shift) / factor,
            step: self.step / factor,
            count: self.count,
        }
    }
}

/// Log-uniform grid `lo * ratio^i`, `i < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub lo: f64,
    pub ratio: f64,
    pub count: u64,
}

impl LogGrid {
    pub fn spanning(lo: f64, hi: f64, count: u64) -> Self {
        let ratio = if count > 1 {
            (hi / lo).powf(1.0 / (count - 1) as f64)
        } else {
            1.0
        };
        LogGrid { lo, ratio, count }
    }

    pub fn single(v: f64) -> Self {
        LogGrid {
            lo: v,
            ratio: 1.0,
            count: 1,
        }
    }

    #[inline]
    pub fn value(&self, i: u64) -> f64 {
        self.lo * self.ratio.powf(i as f64)
    }

    pub fn nearest(&self, v: f64) -> u64 {
        if self.count <= 1 || self.ratio == 1.0 || !(v > 0.0) {
            return 0;
        }
        let r = ((v / self.lo).ln() / self.ratio.ln()).round();
        r.clamp(0.0, (self.count - 1) as f64) as u64
    }

    pub fn affine(&self, factor: f64) -> Self {
        LogGrid {
            lo: self.lo / factor,
            ratio: self.ratio,
            count: self.count,
        }
    }
}

/// Finite parameter net of one family: a location grid times a scale grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionNet {
    pub spec: EmissionSpec,
    pub locations: LinearGrid,
    /// Absent for location-only families.
    pub scales: Option<LogGrid>,
}

impl EmissionNet {
    pub fn new(spec: EmissionSpec, locations: LinearGrid, scales: Option<LogGrid>) -> Self {
        let scales = if spec.has_scale() {
            Some(scales.unwrap_or(LogGrid::single(1.0)))
        } else {
            None
        };
        EmissionNet {
            spec,
            locations,
            scales,
        }
    }

    /// Net of a known component: its single fixed parameter.
    pub fn known(spec: EmissionSpec) -> Result<Self> {
        let Some(p) = spec.fixed else {
            return domain("EmissionNet::known requires a known component");
        };
        let scales = spec.has_scale().then_some(LogGrid::single(p.scale));
        Ok(EmissionNet {
            locations: LinearGrid::single(p.location),
            scales,
            spec,
        })
    }

    pub fn location_count(&self) -> u64 {
        self.locations.count
    }

    pub fn scale_count(&self) -> u64 {
        self.scales.map_or(1, |s| s.count)
    }

    pub fn len(&self) -> u128 {
        self.location_count() as u128 * self.scale_count() as u128
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn params_at(&self, loc: u64, scale: u64) -> EmissionParams {
        if let Some(p) = self.spec.fixed {
            return p;
        }
        let location = self.spec.location_domain.clamp(self.locations.value(loc));
        let scale = match (self.scales, self.spec.scale_domain) {
            (Some(g), Some(d)) => d.clamp(g.value(scale)),
            (Some(g), None) => g.value(scale),
            _ => 1.0,
        };
        EmissionParams { location, scale }
    }

    /// Materialized net, scale-major within each location.
    pub fn params(&self) -> Vec<EmissionParams> {
        let mut out = Vec::with_capacity(self.len().min(1 << 24) as usize);
        for l in 0..self.location_count() {
            for s in 0..self.scale_count() {
                out.push(self.params_at(l, s));
            }
        }
        out
    }

    /// Net under the data map `x -> (x - shift) / factor`.
    pub fn affine(&self, shift: f64, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return domain("affine factor must be positive");
        }
        let mut spec = self.spec;
        if let Some(p) = spec.fixed {
            let q = EmissionParams {
                location: (p.location - shift) / factor,
                scale: if spec.has_scale() {
                    p.scale / factor
                } else {
                    1.0
                },
            };
            spec = EmissionSpec::known(spec.kind, q)?;
            return EmissionNet::known(spec);
        }
        if !spec.has_scale() && factor != 1.0 {
            return domain("rescaling a location-only family is not closed");
        }
        spec.location_domain = Interval {
            lo: (spec.location_domain.lo - shift) / factor,
            hi: (spec.location_domain.hi - shift) / factor,
        };
        if let Some(sd) = spec.scale_domain {
            spec.scale_domain = Some(Interval {
                lo: sd.lo / factor,
                hi: sd.hi / factor,
            });
        }
        Ok(EmissionNet {
            spec,
            locations: self.locations.affine(shift, factor),
            scales: self.scales.map(|g| g.affine(factor)),
        })
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn sorted_copy(data: &[f64]) -> Vec<f64> {
    let mut s = data.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

/// Smallest reference scale a net will use.
const MIN_NET_SCALE: f64 = 1e-12;

/// Data-driven finite net for `spec`.
///
/// Locations: `L` evenly spaced points on `[min - m, max + m]` with `m = range / L`.
/// Scales: `S` log-uniform points on `[r / S, r]` with `r = 1.5 * IQR`.
/// With `L = S = 1` the net is the single point `(median, 1.5 * IQR)`.
pub fn build_net(
    spec: &EmissionSpec,
    data: &[f64],
    locations: u64,
    scales: u64,
) -> Result<EmissionNet> {
    if data.is_empty() {
        return domain("build_net needs at least one observation");
    }
    if data.iter().any(|x| !x.is_finite()) {
        return domain("build_net: data contains non-finite values");
    }
    if locations == 0 || (spec.has_scale() && scales == 0) {
        return domain("build_net needs at least one location and one scale");
    }
    if spec.is_known() {
        return EmissionNet::known(*spec);
    }
    let sorted = sorted_copy(data);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let r = (1.5 * iqr).max(MIN_NET_SCALE);
    let loc_grid = if locations == 1 {
        LinearGrid::single(quantile_sorted(&sorted, 0.5))
    } else {
        let m = (max - min) / locations as f64;
        LinearGrid::spanning(min - m, max + m, locations)
    };
    let scale_grid = spec.has_scale().then(|| {
        if scales == 1 {
            LogGrid::single(r)
        } else {
            LogGrid::spanning(r / scales as f64, r, scales)
        }
    });
    Ok(EmissionNet::new(*spec, loc_grid, scale_grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn gauss() -> EmissionSpec {
        EmissionSpec::gaussian()
    }

    #[test]
    fn gaussian_density_at_mean() {
        let d = gauss()
            .density(&EmissionParams::new(0.0, 1.0), 0.0)
            .unwrap();
        assert!((d.value() - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn cauchy_mode() {
        let d = EmissionSpec::cauchy()
            .density(&EmissionParams::new(0.0, 1.0), 0.0)
            .unwrap();
        assert!((d.value() - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn spike_values() {
        let s = EmissionSpec::spike(0.5).unwrap();
        let p = EmissionParams::location(0.0);
        assert!((s.density(&p, 0.25).unwrap().value() - 0.5).abs() < 1e-15);
        assert_eq!(s.density(&p, 1.5).unwrap(), Density::Finite(0.0));
        assert_eq!(s.density(&p, 0.0).unwrap(), Density::Singular);
    }

    #[test]
    fn invalid_params_are_domain_errors() {
        let g = gauss();
        assert!(g.density(&EmissionParams::new(0.0, 0.0), 1.0).is_err());
        assert!(g.density(&EmissionParams::new(0.0, -1.0), 1.0).is_err());
        let s = EmissionSpec::spike(0.5).unwrap();
        assert!(s.density(&EmissionParams::new(0.0, 2.0), 0.3).is_err());
        assert!(EmissionSpec::spike(1.0).is_err());
        assert!(EmissionKind::from_name("skew_gaussian", Some(f64::INFINITY)).is_err());
        assert!(EmissionKind::from_name("weibull", None).is_err());
    }

    #[test]
    fn vc_registry() {
        assert_eq!(vc_index_bound(&gauss()), 5);
        assert_eq!(vc_index_bound(&EmissionSpec::cauchy()), 5);
        assert_eq!(
            vc_index_bound(&EmissionSpec::new(EmissionKind::Laplace).unwrap()),
            5
        );
        assert_eq!(
            vc_index_bound(&EmissionSpec::new(EmissionKind::SkewGaussian { alpha: 3.0 }).unwrap()),
            10
        );
        assert_eq!(vc_index_bound(&EmissionSpec::spike(0.3).unwrap()), 10);
        assert_eq!(vc_index_bound(&EmissionSpec::uniform()), UNIFORM_VC_DEFAULT);
        let u = EmissionSpec::uniform().with_vc_bound(7).unwrap();
        assert_eq!(vc_index_bound(&u), 7);
    }

    #[test]
    fn names_round_trip() {
        for kind in [
            EmissionKind::Gaussian,
            EmissionKind::Cauchy,
            EmissionKind::Laplace,
            EmissionKind::SkewGaussian { alpha: 2.0 },
            EmissionKind::Uniform,
            EmissionKind::Spike { alpha: 0.5 },
        ] {
            let alpha = match kind {
                EmissionKind::SkewGaussian { alpha } | EmissionKind::Spike { alpha } => Some(alpha),
                _ => None,
            };
            assert_eq!(EmissionKind::from_name(kind.name(), alpha).unwrap(), kind);
        }
    }

    #[test]
    fn gaussian_sample_mean() {
        let mut r = rng::from_seed(11);
        let xs = gauss()
            .sample(&EmissionParams::new(0.0, 1.0), 100_000, &mut r)
            .unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn uniform_sample_reproducible() {
        let u = EmissionSpec::uniform();
        let p = EmissionParams::new(0.0, 1.0);
        let a = u.sample(&p, 4, &mut rng::from_seed(5)).unwrap();
        let b = u.sample(&p, 4, &mut rng::from_seed(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spike_samples_stay_in_support() {
        let s = EmissionSpec::spike(0.5).unwrap();
        let xs = s
            .sample(
                &EmissionParams::location(0.0),
                100_000,
                &mut rng::from_seed(3),
            )
            .unwrap();
        assert!(xs.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn net_grid_spacing() {
        let data: Vec<f64> = (0..=10).map(f64::from).collect();
        let net = build_net(&gauss(), &data, 3, 1).unwrap();
        let ps = net.params();
        assert_eq!(ps.len(), 3);
        let d1 = ps[1].location - ps[0].location;
        let d2 = ps[2].location - ps[1].location;
        assert!((d1 - d2).abs() < 1e-12);
        // margin is range / L on both sides
        assert!((ps[0].location - (0.0 - 10.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_net_is_median_and_iqr() {
        let data = [1.0, 2.0, 3.0, 4.0, 100.0];
        let net = build_net(&gauss(), &data, 1, 1).unwrap();
        let ps = net.params();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].location, 3.0);
        assert!((ps[0].scale - 1.5 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_data_rejected() {
        assert!(build_net(&gauss(), &[], 3, 3).is_err());
    }

    #[test]
    fn net_covers_true_parameter() {
        let mut r = rng::from_seed(2024);
        let data = gauss()
            .sample(&EmissionParams::new(0.0, 1.0), 1000, &mut r)
            .unwrap();
        let net = build_net(&gauss(), &data, 20, 10).unwrap();
        let half_loc = net.locations.step / 2.0;
        let ratio = net.scales.unwrap().ratio;
        let hit = net.params().iter().any(|p| {
            p.location.abs() <= half_loc + 1e-12 && (p.scale.ln()).abs() <= ratio.ln() / 2.0 + 1e-12
        });
        assert!(hit);
    }

    #[test]
    fn known_net_is_single_point() {
        let spec = EmissionSpec::known(
            EmissionKind::Spike { alpha: 0.5 },
            EmissionParams::location(0.0),
        )
        .unwrap();
        let net = build_net(&spec, &[0.1, 0.4], 10, 10).unwrap();
        assert_eq!(net.params(), vec![EmissionParams::location(0.0)]);
        assert_eq!(spec.vc_bound, 1);
    }
}
