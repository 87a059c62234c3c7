//! Model selection over a finite collection of descriptors: order selection over `K`
//! and selection among composite emission families.

use serde::{Deserialize, Serialize};

use crate::emission::{
    quantile_sorted, sorted_copy, EmissionNet, EmissionSpec, LinearGrid, LogGrid,
};
use crate::error::{Result, RhoError};
use crate::mixture::{ModelDescriptor, ModelLattice};
use crate::rho::{
    penalty_value, rho_estimate_blocks, summability, BlockSource, PenaltyMode, PenaltySpec, RhoFit,
    SearchBlock, SearchConfig, KAPPA_DEFAULT,
};

/// Grid indices stay below this so lattice arithmetic cannot overflow.
const MAX_GRID_COUNT: u64 = 1 << 62;

/// Resolution of data-driven lattices, scaled with the sample size `n`.
///
/// Location step `IQR / (location_per_iqr √n)` over `[min - m, max + m]` with
/// `m = margin_iqr · IQR`; scale log-step `scale_log_step / √n` over
/// `[scale_min_iqr · IQR, scale_max_iqr · IQR]`; weight denominator
/// `⌈weight_per_root_n √n⌉`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetResolution {
    pub location_per_iqr: f64,
    /// Overrides the location step.
    pub location_step: Option<f64>,
    pub margin_iqr: f64,
    pub scale_log_step: f64,
    pub scale_min_iqr: f64,
    pub scale_max_iqr: f64,
    pub weight_per_root_n: f64,
}

impl Default for NetResolution {
    fn default() -> Self {
        NetResolution {
            location_per_iqr: 40.0,
            location_step: None,
            margin_iqr: 1.0,
            scale_log_step: 0.05,
            scale_min_iqr: 0.02,
            scale_max_iqr: 2.0,
            weight_per_root_n: 20.0,
        }
    }
}

impl NetResolution {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.location_per_iqr,
            self.scale_log_step,
            self.scale_min_iqr,
            self.scale_max_iqr,
            self.weight_per_root_n,
        ];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.margin_iqr >= 0.0) {
            return Err(RhoError::Config(
                "net resolution fields must be positive and finite".into(),
            ));
        }
        if self.scale_min_iqr >= self.scale_max_iqr {
            return Err(RhoError::Config(
                "scale_min_iqr must be below scale_max_iqr".into(),
            ));
        }
        if let Some(s) = self.location_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(RhoError::Config("location_step must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn weight_denominator(&self, n: usize) -> u64 {
        (self.weight_per_root_n * (n as f64).sqrt()).ceil().max(1.0) as u64
    }
}

fn grid_count(span: f64, step: f64) -> Result<u64> {
    let c = (span / step).ceil() + 1.0;
    if !(c.is_finite() && c < MAX_GRID_COUNT as f64) {
        return Err(RhoError::Config(format!(
            "grid with span {span} and step {step} is too fine"
        )));
    }
    Ok(c.max(1.0) as u64)
}

/// Net of one family from the data.
pub fn data_net(spec: &EmissionSpec, data: &[f64], res: &NetResolution) -> Result<EmissionNet> {
    res.validate()?;
    if spec.is_known() {
        return EmissionNet::known(*spec);
    }
    if data.is_empty() || data.iter().any(|v| !v.is_finite()) {
        return Err(RhoError::Domain("data must be finite and nonempty".into()));
    }
    let sorted = sorted_copy(data);
    let n = sorted.len();
    let root_n = (n as f64).sqrt();
    let mut iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    if !(iqr > 0.0) {
        iqr = (sorted[n - 1] - sorted[0]).max(1e-6);
    }
    let lo = (sorted[0] - res.margin_iqr * iqr).max(spec.location_domain.lo);
    let hi = (sorted[n - 1] + res.margin_iqr * iqr).min(spec.location_domain.hi);
    let step = res
        .location_step
        .unwrap_or(iqr / (res.location_per_iqr * root_n));
    let locations = if hi > lo {
        let count = grid_count(hi - lo, step)?;
        LinearGrid::spanning(lo, lo + (count - 1) as f64 * step, count)
    } else {
        LinearGrid::single(lo)
    };
    let scales = spec.has_scale().then(|| -> Result<LogGrid> {
        let (slo, shi) = (res.scale_min_iqr * iqr, res.scale_max_iqr * iqr);
        let log_step = res.scale_log_step / root_n;
        let count = grid_count((shi / slo).ln(), log_step)?;
        Ok(LogGrid {
            lo: slo,
            ratio: log_step.exp(),
            count,
        })
    });
    Ok(EmissionNet::new(*spec, locations, scales.transpose()?))
}

/// Lazy lattice of one descriptor from the data.
pub fn data_lattice(
    descriptor: &ModelDescriptor,
    data: &[f64],
    res: &NetResolution,
) -> Result<ModelLattice> {
    let nets = descriptor
        .families
        .iter()
        .map(|f| data_net(f, data, res))
        .collect::<Result<Vec<_>>>()?;
    ModelLattice::new(descriptor.clone(), nets, res.weight_denominator(data.len()))
}

/// Audit row: one descriptor of a selection problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorReport {
    pub descriptor: String,
    pub k: usize,
    pub gaussian_count: usize,
    pub delta: f64,
    pub big_delta: f64,
    pub penalty: f64,
    /// Best penalized `Υ` reached inside this descriptor.
    pub best_upsilon: f64,
}

/// A finite model collection with its penalty.
#[derive(Debug, Clone)]
pub struct SelectionProblem {
    pub descriptors: Vec<ModelDescriptor>,
    pub big_delta: Vec<f64>,
    pub penalty: PenaltySpec,
}

impl SelectionProblem {
    /// Checks distinct descriptors and `Σ e^{-Δ} <= 1`.
    pub fn new(
        descriptors: Vec<ModelDescriptor>,
        big_delta: Vec<f64>,
        kappa: f64,
        n: usize,
        mode: PenaltyMode,
    ) -> Result<Self> {
        if descriptors.is_empty() {
            return Err(RhoError::Config(
                "a selection problem needs at least one descriptor".into(),
            ));
        }
        if descriptors.len() != big_delta.len() {
            return Err(RhoError::Config("one Δ per descriptor is required".into()));
        }
        let mut labels: Vec<String> = descriptors.iter().map(|d| d.label()).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(RhoError::Config("descriptors must be distinct".into()));
        }
        let entries: Vec<(ModelDescriptor, f64)> = descriptors
            .iter()
            .cloned()
            .zip(big_delta.iter().copied())
            .collect();
        let penalty = PenaltySpec::new(kappa, n, mode, &entries)?;
        Ok(SelectionProblem {
            descriptors,
            big_delta,
            penalty,
        })
    }

    /// One penalized fit over the union of the descriptors' models.
    pub fn fit<F>(
        &self,
        x: &[f64],
        build: F,
        search: &SearchConfig,
    ) -> Result<(RhoFit, Vec<DescriptorReport>)>
    where
        F: Fn(&ModelDescriptor) -> Result<BlockSource>,
    {
        let mut blocks = Vec::with_capacity(self.descriptors.len());
        for d in &self.descriptors {
            blocks.push(SearchBlock {
                source: build(d)?,
                penalty: self.penalty.value(d)?,
            });
        }
        let fit = rho_estimate_blocks(x, &blocks, search)?;
        let reports = self
            .descriptors
            .iter()
            .zip(&self.big_delta)
            .zip(&blocks)
            .map(|((d, &bd), b)| DescriptorReport {
                descriptor: d.label(),
                k: d.k,
                gaussian_count: d.gaussian_count(),
                delta: d.delta,
                big_delta: bd,
                penalty: b.penalty,
                best_upsilon: fit
                    .blocks
                    .iter()
                    .find(|s| s.descriptor == d.label())
                    .map_or(f64::NAN, |s| s.best_upsilon),
            })
            .collect();
        Ok((fit, reports))
    }
}

/// Outcome of [`select_order`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderSelection {
    pub fit: RhoFit,
    pub k_hat: usize,
    pub table: Vec<DescriptorReport>,
}

/// `δ(1) = 1` and `δ(K) = V/n ∧ 1/K`.
pub fn order_delta(k: usize, v: f64, n: usize) -> f64 {
    if k <= 1 {
        1.0
    } else {
        (v / n as f64).min(1.0 / k as f64)
    }
}

/// Penalized order selection with `Δ(K) = K` over the models with `K ∈ ks`
/// components of `family`.
pub fn select_order<F>(
    x: &[f64],
    ks: &[usize],
    family: EmissionSpec,
    kappa: f64,
    build: F,
    search: &SearchConfig,
) -> Result<OrderSelection>
where
    F: Fn(&ModelDescriptor) -> Result<BlockSource>,
{
    let n = x.len();
    if ks.is_empty() {
        return Err(RhoError::Config("empty range of orders".into()));
    }
    if ks.iter().any(|&k| k == 0 || k > n) {
        return Err(RhoError::Config(format!("orders must lie in 1..={n}")));
    }
    let v = family.vc_bound as f64;
    let descriptors = ks
        .iter()
        .map(|&k| ModelDescriptor::homogeneous(family, k, order_delta(k, v, n)))
        .collect::<Result<Vec<_>>>()?;
    let big_delta = ks.iter().map(|&k| k as f64).collect();
    let problem = SelectionProblem::new(descriptors, big_delta, kappa, n, PenaltyMode::Formula)?;
    let (fit, table) = problem.fit(x, build, search)?;
    Ok(OrderSelection {
        k_hat: fit.descriptor.k,
        fit,
        table,
    })
}

/// Outcome of [`select_emission_families`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySelection {
    pub fit: RhoFit,
    /// Number of Gaussian components of the chosen model.
    pub j_hat: usize,
    pub table: Vec<DescriptorReport>,
}

/// The models `j` Gaussian then `K − j` Cauchy components, `j = 0..=K`.
pub fn gauss_cauchy_descriptors(k: usize, n: usize) -> Result<Vec<ModelDescriptor>> {
    let delta = if k == 1 {
        1.0
    } else {
        (5.0 / n as f64).min(1.0 / k as f64)
    };
    (0..=k)
        .map(|j| {
            let mut fams = vec![EmissionSpec::gaussian(); j];
            fams.extend(vec![EmissionSpec::cauchy(); k - j]);
            ModelDescriptor::new(fams, delta)
        })
        .collect()
}

/// Fit over the union of the Gaussian/Cauchy models with a null penalty;
/// `Δ = log(K + 1)` is recorded for audit.
pub fn select_emission_families<F>(
    x: &[f64],
    k: usize,
    build: F,
    search: &SearchConfig,
) -> Result<FamilySelection>
where
    F: Fn(&ModelDescriptor) -> Result<BlockSource>,
{
    select_among(x, gauss_cauchy_descriptors(k, x.len())?, build, search)
}

/// Null-penalty fit over arbitrary family assignments, `Δ = log |L|`.
pub fn select_among<F>(
    x: &[f64],
    descriptors: Vec<ModelDescriptor>,
    build: F,
    search: &SearchConfig,
) -> Result<FamilySelection>
where
    F: Fn(&ModelDescriptor) -> Result<BlockSource>,
{
    if x.is_empty() {
        return Err(RhoError::Domain("no observations".into()));
    }
    let ld = (descriptors.len() as f64).ln();
    let big_delta = vec![ld; descriptors.len()];
    let problem = SelectionProblem::new(
        descriptors,
        big_delta,
        KAPPA_DEFAULT,
        x.len(),
        PenaltyMode::Null,
    )?;
    let (fit, table) = problem.fit(x, build, search)?;
    Ok(FamilySelection {
        j_hat: fit.descriptor.gaussian_count(),
        fit,
        table,
    })
}

/// Penalties of an order range, for reporting: `(K, pen(K))`.
pub fn order_penalties(
    ks: &[usize],
    family: EmissionSpec,
    kappa: f64,
    n: usize,
) -> Result<Vec<(usize, f64)>> {
    let v = family.vc_bound as f64;
    ks.iter()
        .map(|&k| {
            let d = ModelDescriptor::homogeneous(family, k, order_delta(k, v, n))?;
            Ok((k, penalty_value(&d, n, kappa, k as f64)?))
        })
        .collect()
}

/// Checks `Σ e^{-K} <= 1` over a range of orders.
pub fn order_deltas_summable(ks: &[usize]) -> bool {
    summability(ks.iter().map(|&k| k as f64)) <= 1.0
}
