//! Seeded simulation studies: convergence rates, contamination, parameter recovery,
//! the spike model, continuous mixtures and model selection.
//!
//! Replication `i` of a study draws from the stream `stream_seed(master, i)`, so a
//! study is reproducible from its configuration alone.

pub mod continuous;
mod studies;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emission::{EmissionKind, EmissionParams, EmissionSpec};
use crate::error::{Result, RhoError};
use crate::mixture::MixtureCandidate;
use crate::rho::SearchConfig;
use crate::selection::NetResolution;
use crate::simplex::WeightVector;

pub use continuous::{
    atom_bound, continuous_violations, discretize_mixing_measure, k_for_continuous, Atom,
    ContinuousMixture, Discretization, MixingMeasure,
};
pub use studies::run_study;

/// Share of failed replications above which a study is an error.
pub const MAX_FAILURE_SHARE: f64 = 0.2;
/// Denominator used to turn real truth weights into an exact weight vector.
const TRUTH_WEIGHT_DENOMINATOR: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Rate,
    Contamination,
    Parameter,
    Spike,
    Continuous,
    OrderSelection,
    FamilySelection,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Rate => "rate",
            StudyKind::Contamination => "contamination",
            StudyKind::Parameter => "parameter",
            StudyKind::Spike => "spike",
            StudyKind::Continuous => "continuous",
            StudyKind::OrderSelection => "order-selection",
            StudyKind::FamilySelection => "family-selection",
        }
    }
}

/// One mixture component of a truth or model specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub family: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub location: f64,
    #[serde(default = "one")]
    pub scale: f64,
    /// Fully known component (not estimated).
    #[serde(default)]
    pub known: bool,
    /// Translation family: the scale stays at `scale`.
    #[serde(default)]
    pub fixed_scale: bool,
}

fn one() -> f64 {
    1.0
}

impl ComponentSpec {
    pub fn kind(&self) -> Result<EmissionKind> {
        EmissionKind::from_name(&self.family, self.alpha)
    }

    pub fn params(&self) -> Result<EmissionParams> {
        let kind = self.kind()?;
        Ok(if kind.has_scale() {
            EmissionParams::new(self.location, self.scale)
        } else {
            EmissionParams::location(self.location)
        })
    }

    /// Emission family of a fitted slot.
    pub fn model_spec(&self) -> Result<EmissionSpec> {
        let kind = self.kind()?;
        if self.known {
            EmissionSpec::known(kind, self.params()?)
        } else {
            EmissionSpec::new(kind)
        }
    }
}

/// Distribution of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    Mixture {
        weights: Vec<f64>,
        components: Vec<ComponentSpec>,
    },
    /// `p_H` for a mixing measure `H`.
    Continuous { mixing: MixingMeasure },
}

impl TruthSpec {
    pub fn mixture(&self) -> Result<MixtureCandidate> {
        let TruthSpec::Mixture {
            weights,
            components,
        } = self
        else {
            return Err(RhoError::Config(
                "a finite mixture truth is required".into(),
            ));
        };
        if weights.len() != components.len() || weights.is_empty() {
            return Err(RhoError::Config(
                "truth needs one weight per component".into(),
            ));
        }
        let w = exact_weights(weights, TRUTH_WEIGHT_DENOMINATOR)?;
        let comps = components
            .iter()
            .map(|c| {
                let spec = c.model_spec()?;
                Ok((spec, c.params()?))
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureCandidate::new(w, comps)
    }

    pub fn components(&self) -> &[ComponentSpec] {
        match self {
            TruthSpec::Mixture { components, .. } => components,
            TruthSpec::Continuous { .. } => &[],
        }
    }

    pub fn sample(&self, n: usize, rng: &mut crate::rng::StreamRng) -> Result<Vec<f64>> {
        match self {
            TruthSpec::Mixture { .. } => Ok(self.mixture()?.sample(n, rng)),
            TruthSpec::Continuous { mixing } => {
                mixing.validate()?;
                Ok(mixing.sample(n, rng))
            }
        }
    }
}

/// Real weights to a weight vector with the given denominator (largest remainder).
pub fn exact_weights(weights: &[f64], denominator: u64) -> Result<WeightVector> {
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(RhoError::Config(
            "weights must be nonnegative with a positive sum".into(),
        ));
    }
    let scaled: Vec<f64> = weights
        .iter()
        .map(|w| w / total * denominator as f64)
        .collect();
    let mut nums: Vec<u64> = scaled.iter().map(|s| s.floor() as u64).collect();
    let mut rest = denominator - nums.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (scaled[b] - scaled[b].floor())
            .total_cmp(&(scaled[a] - scaled[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        nums[i] += 1;
        rest -= 1;
    }
    WeightVector::new(nums, denominator)
}

/// Rule for the weight floor δ of a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DeltaRule {
    /// `1` for `K = 1`, else `V̄ / (n (K − 1)) ∧ 1/K`.
    #[default]
    Default,
    /// `c / n ∧ 1/K`.
    OverN {
        c: f64,
    },
    Fixed {
        value: f64,
    },
}

impl DeltaRule {
    pub fn delta(&self, k: usize, vbar: f64, n: usize) -> f64 {
        match *self {
            DeltaRule::Default => crate::rho::delta_default(k, vbar, n),
            DeltaRule::OverN { c } => (c / n as f64).min(1.0 / k as f64),
            DeltaRule::Fixed { value } => value,
        }
    }
}

/// Far outlier distribution of the contamination study: uniform of width
/// `width_iqr · IQR` centered at `median + offset_iqr · IQR` of the clean sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSpec {
    pub offset_iqr: f64,
    pub width_iqr: f64,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        OutlierSpec {
            offset_iqr: 50.0,
            width_iqr: 0.01,
        }
    }
}

/// Acceptance band; a missing side is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Self {
        Band {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn at_most(hi: f64) -> Self {
        Band {
            lo: None,
            hi: Some(hi),
        }
    }

    pub fn at_least(lo: f64) -> Self {
        Band {
            lo: Some(lo),
            hi: None,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        !v.is_nan() && self.lo.is_none_or(|l| v >= l) && self.hi.is_none_or(|h| v <= h)
    }
}

/// Full description of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub truth: TruthSpec,
    /// Fitted families; defaults to the truth's components.
    #[serde(default)]
    pub model: Option<Vec<ComponentSpec>>,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub resolution: NetResolution,
    /// Location step `location_step · n^(−location_step_exponent)` when set.
    #[serde(default)]
    pub location_step_exponent: f64,
    #[serde(default)]
    pub delta: DeltaRule,
    #[serde(default)]
    pub search: SearchConfig,
    /// Contamination levels.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub outlier: OutlierSpec,
    /// Confidence parameter reported with risk envelopes.
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Penalty scale for order selection.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub k_range: Vec<usize>,
    /// Upper limit on the number of components of the continuous study.
    #[serde(default)]
    pub k_cap: Option<usize>,
    /// Overrides of the default acceptance bands, by check name.
    #[serde(default)]
    pub bands: BTreeMap<String, Band>,
}

fn default_xi() -> f64 {
    1.0
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: StudyConfig =
            toml::from_str(text).map_err(|e| RhoError::Config(format!("study config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: StudyConfig = serde_json::from_str(text)
            .map_err(|e| RhoError::Config(format!("study config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    /// JSON when the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_toml(text)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(RhoError::Config(m));
        if self.replications == 0 {
            return cfg("replications must be at least 1".into());
        }
        if self.n_grid.is_empty() {
            return cfg("n_grid must not be empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return cfg("n_grid must be strictly increasing".into());
        }
        if self.n_grid[0] < 2 {
            return cfg("n_grid values must be at least 2".into());
        }
        self.resolution.validate()?;
        match &self.truth {
            TruthSpec::Mixture { .. } => {
                self.truth
                    .mixture()
                    .map_err(|e| RhoError::Config(format!("truth: {e}")))?;
            }
            TruthSpec::Continuous { mixing } => {
                mixing
                    .validate()
                    .map_err(|e| RhoError::Config(format!("truth: {e}")))?;
            }
        }
        for c in self.model.iter().flatten() {
            c.model_spec()
                .map_err(|e| RhoError::Config(format!("model: {e}")))?;
        }
        match self.study {
            StudyKind::Contamination => {
                if self.epsilons.is_empty()
                    || self.epsilons.iter().any(|e| !(*e >= 0.0 && *e < 0.5))
                {
                    return cfg("contamination levels must lie in [0, 0.5)".into());
                }
            }
            StudyKind::Spike => {
                let comps = self.model.as_deref().unwrap_or(self.truth.components());
                let ok = comps.len() == 2
                    && comps[0].known
                    && !comps[1].known
                    && comps
                        .iter()
                        .all(|c| matches!(c.kind(), Ok(EmissionKind::Spike { .. })));
                if !ok {
                    return cfg("the spike study needs a known spike at 0 and a free spike".into());
                }
            }
            StudyKind::Continuous => {
                if !matches!(self.truth, TruthSpec::Continuous { .. }) {
                    return cfg("the continuous study needs a mixing-measure truth".into());
                }
            }
            StudyKind::OrderSelection => {
                if self.k_range.is_empty() || self.k_range.contains(&0) {
                    return cfg(
                        "order selection needs a nonempty k_range of positive orders".into(),
                    );
                }
                if !matches!(self.kappa, Some(k) if k > 0.0) {
                    return cfg("order selection needs kappa > 0".into());
                }
            }
            _ => {}
        }
        if matches!(self.study, StudyKind::Continuous) {
            if let Some(0) = self.k_cap {
                return cfg("k_cap must be at least 1".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn band(&self, name: &str, default: Band) -> Band {
        self.bands.get(name).copied().unwrap_or(default)
    }

    /// Fitted components: the model override or the truth's components.
    pub fn model_components(&self) -> &[ComponentSpec] {
        self.model.as_deref().unwrap_or(self.truth.components())
    }

    pub fn resolution_for(&self, n: usize) -> NetResolution {
        let mut r = self.resolution.clone();
        if let Some(s) = r.location_step {
            r.location_step = Some(s * (n as f64).powf(-self.location_step_exponent));
        }
        r
    }
}

/// Ordinary least-squares slope of `log loss` on `log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `log loss = a + b log n`. Nonpositive losses are dropped with a warning;
/// fewer than three remaining points is an error.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(n, l)| {
            let ok = n > 0.0 && l > 0.0 && l.is_finite();
            if !ok {
                log::warn!("dropping point (n={n}, loss={l}) from the log-log fit");
            }
            ok
        })
        .map(|&(n, l)| (n.ln(), l.ln()))
        .collect();
    let m = kept.len();
    if m < 3 {
        return Err(RhoError::Study(format!(
            "log-log fit needs 3 positive points, got {m}"
        )));
    }
    let mf = m as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / mf;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / mf;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(RhoError::Study(
            "log-log fit needs distinct n values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = kept
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = if m > 2 {
        (rss / (mf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        points: m,
    })
}

/// Least-squares line `y = a x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub a: f64,
    pub b: f64,
}

pub fn fit_affine(points: &[(f64, f64)]) -> Option<AffineFit> {
    let m = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let a = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Some(AffineFit { a, b: my - a * mx })
}

/// One replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub n: usize,
    /// Contamination level, when the study has one.
    pub param: Option<f64>,
    pub rep: usize,
    pub seed: u64,
    /// Values in the order of [`StudyReport::fields`]; NaN when failed.
    pub values: Vec<f64>,
    pub error: Option<String>,
}

/// Aggregates of one `(n, param)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub param: Option<f64>,
    pub count: usize,
    pub failures: usize,
    pub mean: BTreeMap<String, f64>,
    pub median: BTreeMap<String, f64>,
}

/// A named check against a band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub band: Band,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, band: Band) -> Self {
        Check {
            name: name.to_string(),
            value,
            pass: band.contains(value),
            band,
        }
    }
}

/// Everything a study produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: StudyKind,
    pub config_hash: String,
    pub seed: u64,
    pub fields: Vec<String>,
    pub records: Vec<Record>,
    /// Wall-clock milliseconds per record, same order.
    pub timings_ms: Vec<f64>,
    pub groups: Vec<GroupSummary>,
    pub slopes: BTreeMap<String, Option<SlopeFit>>,
    pub affine: Option<AffineFit>,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// The JSON summary: the report without per-replication data.
#[derive(Debug, Clone, Serialize)]
pub struct StudySummary<'a> {
    pub study: StudyKind,
    pub config_hash: &'a str,
    pub seed: u64,
    pub replications: usize,
    pub failures: usize,
    pub groups: &'a [GroupSummary],
    pub slopes: &'a BTreeMap<String, Option<SlopeFit>>,
    pub affine: Option<AffineFit>,
    pub notes: &'a [String],
    pub checks: &'a [Check],
    pub passed: bool,
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

impl StudyReport {
    /// Per-replication CSV: `study,n,param,rep,seed,<fields>,status`. Reals carry
    /// 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("study,n,param,rep,seed");
        for f in &self.fields {
            s.push(',');
            s.push_str(f);
        }
        s.push_str(",status\n");
        for r in &self.records {
            let _ = write!(
                s,
                "{},{},{},{},{}",
                self.study.name(),
                r.n,
                r.param.map(fmt_value).unwrap_or_default(),
                r.rep,
                r.seed
            );
            for v in &r.values {
                s.push(',');
                s.push_str(&fmt_value(*v));
            }
            s.push(',');
            match &r.error {
                None => s.push_str("ok"),
                Some(e) => {
                    s.push('"');
                    s.push_str(&e.replace('"', "'"));
                    s.push('"');
                }
            }
            s.push('\n');
        }
        s
    }

    /// Wall-clock timings, kept apart from the reproducible CSV.
    pub fn timings_csv(&self) -> String {
        let mut s = String::from("n,param,rep,runtime_ms\n");
        for (r, t) in self.records.iter().zip(&self.timings_ms) {
            let _ = writeln!(
                s,
                "{},{},{},{t:.3}",
                r.n,
                r.param.map(fmt_value).unwrap_or_default(),
                r.rep
            );
        }
        s
    }

    pub fn summary(&self) -> StudySummary<'_> {
        StudySummary {
            study: self.study,
            config_hash: &self.config_hash,
            seed: self.seed,
            replications: self.records.len(),
            failures: self.records.iter().filter(|r| r.error.is_some()).count(),
            groups: &self.groups,
            slopes: &self.slopes,
            affine: self.affine,
            notes: &self.notes,
            checks: &self.checks,
            passed: self.passed,
        }
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())?)
    }

    /// Per-group plot data: `x y` pairs of the mean of `field` against `n` (or the
    /// contamination level).
    pub fn plot_data(&self, field: &str) -> String {
        let mut s = String::new();
        for g in &self.groups {
            if let Some(v) = g.mean.get(field) {
                let x = g.param.unwrap_or(g.n as f64);
                let _ = writeln!(s, "{} {}", fmt_value(x), fmt_value(*v));
            }
        }
        s
    }

    /// Writes `records.csv`, `timings.csv`, `summary.json` and one `plot_<field>.dat`
    /// per field into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("records.csv"), self.to_csv())?;
        std::fs::write(dir.join("timings.csv"), self.timings_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        for f in &self.fields {
            std::fs::write(dir.join(format!("plot_{f}.dat")), self.plot_data(f))?;
        }
        Ok(())
    }
}

fn gaussian(location: f64, scale: f64) -> ComponentSpec {
    ComponentSpec {
        family: "gaussian".into(),
        alpha: None,
        location,
        scale,
        known: false,
        fixed_scale: false,
    }
}

fn cauchy(location: f64, scale: f64) -> ComponentSpec {
    ComponentSpec {
        family: "cauchy".into(),
        ..gaussian(location, scale)
    }
}

fn spike(alpha: f64, location: f64, known: bool) -> ComponentSpec {
    ComponentSpec {
        family: "spike".into(),
        alpha: Some(alpha),
        location,
        scale: 1.0,
        known,
        fixed_scale: false,
    }
}

fn base(
    study: StudyKind,
    truth: TruthSpec,
    n_grid: Vec<usize>,
    replications: usize,
) -> StudyConfig {
    StudyConfig {
        study,
        truth,
        model: None,
        n_grid,
        replications,
        seed: 20_240_601,
        resolution: NetResolution::default(),
        location_step_exponent: 0.0,
        delta: DeltaRule::Default,
        search: SearchConfig::default(),
        epsilons: Vec::new(),
        outlier: OutlierSpec::default(),
        xi: 1.0,
        kappa: None,
        k_range: Vec::new(),
        k_cap: None,
        bands: BTreeMap::new(),
    }
}

/// Well-separated two-component Gaussian mixture used by the rate studies.
pub fn separated_gmm() -> TruthSpec {
    TruthSpec::Mixture {
        weights: vec![0.4, 0.6],
        components: vec![gaussian(-2.0, 1.0), gaussian(2.0, 0.7)],
    }
}

/// Calibrated penalty scale of the order-selection presets.
pub const SELECTION_KAPPA: f64 = 1e-3;

/// Named configurations.
pub fn preset(name: &str) -> Result<StudyConfig> {
    let doubling = |lo: usize, count: u32| (0..count).map(|i| lo << i).collect::<Vec<_>>();
    let c = match name {
        "rate-gmm" => base(StudyKind::Rate, separated_gmm(), vec![250, 500, 1000], 5),
        "rate-gmm-full" => {
            let mut c = base(StudyKind::Rate, separated_gmm(), doubling(250, 7), 50);
            c.bands.insert("slope".into(), Band::new(-1.15, -0.80));
            c
        }
        "contamination" => {
            let mut c = base(StudyKind::Contamination, separated_gmm(), vec![4000], 16);
            c.epsilons = vec![0.0, 0.02, 0.05, 0.10];
            c
        }
        "parameter-gmm" => base(StudyKind::Parameter, separated_gmm(), doubling(250, 7), 40),
        "parameter-known-phi" => {
            let known = ComponentSpec {
                known: true,
                ..gaussian(0.0, 1.0)
            };
            let shifted = ComponentSpec {
                fixed_scale: true,
                ..gaussian(3.0, 1.0)
            };
            base(
                StudyKind::Parameter,
                TruthSpec::Mixture {
                    weights: vec![0.7, 0.3],
                    components: vec![known, shifted],
                },
                doubling(250, 5),
                30,
            )
        }
        "spike-0.5" | "spike-0.25" => {
            let alpha: f64 = if name == "spike-0.5" { 0.5 } else { 0.25 };
            let mut c = base(
                StudyKind::Spike,
                TruthSpec::Mixture {
                    weights: vec![0.6, 0.4],
                    components: vec![spike(alpha, 0.0, true), spike(alpha, 0.7, false)],
                },
                doubling(200, 5),
                31,
            );
            c.delta = DeltaRule::OverN { c: 10.0 };
            c.resolution.location_step = Some(1e-3);
            c.location_step_exponent = 1.0 / (1.0 - alpha) + 1.0;
            let target = -1.0 / (1.0 - alpha);
            let half = if alpha == 0.5 { 0.5 } else { 0.4 };
            c.bands
                .insert("z_slope".into(), Band::new(target - half, target + half));
            c
        }
        "continuous" => {
            let mut c = base(
                StudyKind::Continuous,
                TruthSpec::Continuous {
                    mixing: MixingMeasure::Uniform {
                        z: [-1.0, 1.0],
                        sigma: [1.0, 1.5],
                    },
                },
                vec![1000, 4000, 16000],
                4,
            );
            c.k_cap = Some(3);
            c
        }
        "order-selection-null" => {
            let mut c = base(
                StudyKind::OrderSelection,
                TruthSpec::Mixture {
                    weights: vec![1.0],
                    components: vec![gaussian(0.0, 1.0)],
                },
                vec![2000],
                100,
            );
            c.k_range = vec![1, 2, 3];
            c.kappa = Some(SELECTION_KAPPA);
            c.bands.insert("frequency_last".into(), Band::new(0.9, 1.0));
            c
        }
        "order-selection-trend" => {
            let mut c = base(
                StudyKind::OrderSelection,
                TruthSpec::Mixture {
                    weights: vec![0.45, 0.45, 0.1],
                    components: vec![gaussian(-3.0, 1.0), gaussian(1.0, 1.0), gaussian(4.0, 0.5)],
                },
                vec![1000, 4000, 16000],
                20,
            );
            c.k_range = vec![1, 2, 3];
            c.kappa = Some(SELECTION_KAPPA);
            c
        }
        "family-selection" => {
            let mut c = base(
                StudyKind::FamilySelection,
                TruthSpec::Mixture {
                    weights: vec![0.5, 0.5],
                    components: vec![gaussian(0.0, 1.0), cauchy(1.0, 1.0)],
                },
                vec![300, 1250, 5000],
                100,
            );
            // Six model blocks per sample: a lighter search keeps the study affordable.
            c.search = SearchConfig {
                probes: 8,
                max_rounds: 2,
                ascent_starts: 1,
                ..Default::default()
            };
            c.bands.insert("frequency_last".into(), Band::new(0.8, 1.0));
            c
        }
        other => return Err(RhoError::Config(format!("unknown study preset `{other}`"))),
    };
    c.validate()?;
    Ok(c)
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "rate-gmm",
    "rate-gmm-full",
    "contamination",
    "parameter-gmm",
    "parameter-known-phi",
    "spike-0.5",
    "spike-0.25",
    "continuous",
    "order-selection-null",
    "order-selection-trend",
    "family-selection",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_laws() {
        let pts: Vec<(f64, f64)> = [100.0, 1000.0, 1e4, 1e5]
            .iter()
            .map(|&n| (n, 1.0 / n))
            .collect();
        let f = fit_loglog_slope(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&n: &f64| (n, n.powi(-2)))
            .collect();
        assert!((fit_loglog_slope(&pts).unwrap().slope + 2.0).abs() < 1e-12);
    }

    #[test]
    fn slope_with_log_factor() {
        let pts: Vec<(f64, f64)> = (2..=5)
            .map(|e| 10f64.powi(e))
            .map(|n| (n, n.ln() / n))
            .collect();
        let s = fit_loglog_slope(&pts).unwrap().slope;
        assert!(s > -1.0 && s < -0.85, "{s}");
    }

    #[test]
    fn slope_drops_nonpositive_points() {
        let pts = [(10.0, 0.1), (20.0, 0.0), (40.0, 0.025), (80.0, 0.0125)];
        assert_eq!(fit_loglog_slope(&pts).unwrap().points, 3);
        assert!(fit_loglog_slope(&pts[..2]).is_err());
    }

    #[test]
    fn exact_weights_round_to_denominator() {
        let w = exact_weights(&[0.4, 0.6], 10).unwrap();
        assert_eq!(w.numerators(), &[4, 6]);
        let w = exact_weights(&[1.0, 1.0, 1.0], 10).unwrap();
        assert_eq!(w.numerators().iter().sum::<u64>(), 10);
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for p in PRESETS {
            let c = preset(p).unwrap();
            let toml_text = toml::to_string(&c).unwrap();
            let back = StudyConfig::from_toml(&toml_text).unwrap();
            assert_eq!(back.hash(), c.hash(), "{p}");
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(StudyConfig::parse(&json).unwrap(), c);
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = preset("rate-gmm").unwrap();
        c.n_grid = vec![500, 250];
        assert!(matches!(c.validate(), Err(RhoError::Config(_))));
        let mut c = preset("contamination").unwrap();
        c.epsilons = vec![0.6];
        assert!(c.validate().is_err());
        let mut c = preset("spike-0.5").unwrap();
        if let TruthSpec::Mixture { components, .. } = &mut c.truth {
            components[1].alpha = Some(1.5);
        }
        assert!(c.validate().is_err());
    }

    #[test]
    fn band_membership() {
        assert!(Band::new(-1.15, -0.8).contains(-1.0));
        assert!(!Band::at_most(3.0).contains(3.5));
        assert!(Band::at_least(0.9).contains(0.95));
        assert!(!Band::at_least(0.0).contains(f64::NAN));
    }
}
