//! The ρ-estimation criterion: ψ, the pairwise statistic `T`, the sup-statistic `Υ`,
//! penalties, and the estimator search.

mod init;
mod search;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, RhoError};
use crate::mixture::{CandidateSet, MixtureCandidate, ModelDescriptor, ModelLattice};

pub use search::{BlockSource, SearchBlock};

/// Admissible excess over the infimum of `Υ`.
pub const SLACK: f64 = 8.24;
/// Default multiplier of the penalty (see [`PsiConstants`]).
pub const KAPPA_DEFAULT: f64 = 470.0;

/// Constants attached to ψ in the risk bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiConstants {
    pub a0: f64,
    pub a1: f64,
    pub a2_squared: f64,
    pub slack: f64,
    pub kappa: f64,
}

impl Default for PsiConstants {
    fn default() -> Self {
        PsiConstants {
            a0: 4.0,
            a1: 3.0 / 8.0,
            a2_squared: 3.0 * std::f64::consts::SQRT_2,
            slack: SLACK,
            kappa: KAPPA_DEFAULT,
        }
    }
}

/// `ψ(x) = (x - 1) / (x + 1)` on `[0, +∞]`.
pub fn psi(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return domain(format!("ψ is defined on [0, +∞], got {x}"));
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    Ok((x - 1.0) / (x + 1.0))
}

/// `tanh`, computed so that `tanh_odd(-y) == -tanh_odd(y)` bit for bit.
#[inline]
fn tanh_odd(y: f64) -> f64 {
    let t = (-2.0 * y.abs()).exp_m1();
    let r = -t / (2.0 + t);
    if y < 0.0 {
        -r
    } else {
        r
    }
}

/// `ψ(√(q'/q))` from `l = log q` and `lp = log q'`.
///
/// `ψ(√(e^d)) = tanh(d / 4)`. Equal logs (including `0/0` and two poles) give 0, a
/// zero denominator gives 1.
#[inline]
pub(crate) fn psi_log_ratio(l: f64, lp: f64) -> f64 {
    if l == lp {
        0.0
    } else {
        tanh_odd(0.25 * (lp - l))
    }
}

/// Log-densities and square-root densities of one candidate at every observation.
///
/// `ψ(√(q'/q)) = (√q' − √q) / (√q' + √q)` needs one division per point. Points where a
/// square root is zero, subnormal or infinite fall back to the log form.
#[derive(Debug, Clone)]
pub(crate) struct Profile {
    logs: Vec<f64>,
    roots: Vec<f64>,
}

impl Profile {
    pub fn new(c: &MixtureCandidate, x: &[f64]) -> Self {
        let logs: Vec<f64> = x.iter().map(|&xi| c.log_density(xi)).collect();
        let roots = logs.iter().map(|&l| (0.5 * l).exp()).collect();
        Profile { logs, roots }
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }
}

#[inline(always)]
fn fast_term(a: f64, b: f64) -> (f64, bool) {
    let s = a + b;
    let ok = a.min(b) >= f64::MIN_POSITIVE && s < f64::INFINITY;
    ((b - a) / s, ok)
}

/// `T(X, q, q')` from the profiles of `q` and `q'`. Exactly antisymmetric.
pub(crate) fn t_profiles(q: &Profile, qp: &Profile) -> f64 {
    let (a, b) = (&q.roots[..], &qp.roots[..]);
    let n = a.len();
    let mut acc = [0.0f64; 4];
    let mut bad = 0usize;
    let chunks = n / 4;
    for c in 0..chunks {
        for j in 0..4 {
            let i = 4 * c + j;
            let (t, ok) = fast_term(a[i], b[i]);
            acc[j] += if ok { t } else { 0.0 };
            bad += usize::from(!ok);
        }
    }
    for i in 4 * chunks..n {
        let (t, ok) = fast_term(a[i], b[i]);
        acc[0] += if ok { t } else { 0.0 };
        bad += usize::from(!ok);
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    if bad > 0 {
        let mut slow = 0.0;
        for i in 0..n {
            if !fast_term(a[i], b[i]).1 {
                slow += psi_log_ratio(q.logs[i], qp.logs[i]);
            }
        }
        total += slow;
    }
    total
}

/// Log-densities of a candidate at every observation.
pub fn log_density_vector(c: &MixtureCandidate, x: &[f64]) -> Vec<f64> {
    x.iter().map(|&xi| c.log_density(xi)).collect()
}

/// `T(X, q, q') = Σ ψ(√(q'(x_i) / q(x_i)))`.
pub fn t_statistic(x: &[f64], q: &MixtureCandidate, qp: &MixtureCandidate) -> f64 {
    t_profiles(&Profile::new(q, x), &Profile::new(qp, x))
}

/// `Υ(X, q) = max_{q' ∈ set} T(X, q, q')`.
///
/// Every candidate of one set carries the same penalty, so the penalized form
/// `max [T - pen(q')] + pen(q)` equals the plain one; `pen` is accepted for symmetry
/// with [`rho_estimate`].
pub fn upsilon(
    x: &[f64],
    q: &MixtureCandidate,
    set: &CandidateSet,
    pen: Option<&PenaltySpec>,
) -> Result<f64> {
    if set.is_empty() {
        return domain("Υ over an empty candidate set");
    }
    if let Some(p) = pen {
        p.value(set.descriptor())?;
    }
    let pq = Profile::new(q, x);
    Ok(set
        .candidates()
        .iter()
        .map(|c| t_profiles(&pq, &Profile::new(c, x)))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `δ = 1` for `K = 1`, else `V̄ / (n (K - 1)) ∧ 1/K`.
pub fn delta_default(k: usize, vbar: f64, n: usize) -> f64 {
    if k <= 1 {
        return 1.0;
    }
    (vbar / (n as f64 * (k as f64 - 1.0))).min(1.0 / k as f64)
}

fn log_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

fn complexity_bracket(vbar: f64, k: usize, delta: f64, n: usize) -> f64 {
    5.82 + (((k + 1) * (k + 1)) as f64 / delta).ln() + log_plus(n as f64 / vbar)
}

/// `κ (174.1 V̄ [5.82 + log((K+1)²/δ) + log₊(n/V̄)] + Δ)`.
pub fn penalty_value(d: &ModelDescriptor, n: usize, kappa: f64, big_delta: f64) -> Result<f64> {
    if !(d.delta > 0.0) {
        return domain(format!("penalty needs δ > 0, got {}", d.delta));
    }
    let vbar = d.vbar as f64;
    Ok(kappa * (174.1 * vbar * complexity_bracket(vbar, d.k, d.delta, n) + big_delta))
}

/// `818.1 V̄ [5.82 + log((K+1)²/δ) + log₊(n/V̄)]`, capped at `n/6`.
pub fn rho_dimension_bound(vbar: f64, k: usize, delta: f64, n: usize) -> f64 {
    let d = if delta > 0.0 {
        818.1 * vbar * complexity_bracket(vbar, k, delta, n)
    } else {
        f64::INFINITY
    };
    d.min(n as f64 / 6.0)
}

/// `Σ e^{-Δ}` over a family of descriptors.
pub fn summability<I: IntoIterator<Item = f64>>(deltas: I) -> f64 {
    deltas.into_iter().map(|d| (-d).exp()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// The complexity formula of [`penalty_value`].
    Formula,
    /// `pen ≡ 0`.
    Null,
}

/// Penalty over a finite collection of descriptors. Construction checks
/// `Σ e^{-Δ(θ)} <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kappa: f64,
    pub n: usize,
    pub mode: PenaltyMode,
    /// `Δ(θ)` keyed by descriptor label.
    pub big_delta: BTreeMap<String, f64>,
}

impl PenaltySpec {
    pub fn new(
        kappa: f64,
        n: usize,
        mode: PenaltyMode,
        entries: &[(ModelDescriptor, f64)],
    ) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(RhoError::Config(format!("κ must be positive, got {kappa}")));
        }
        let mut big_delta = BTreeMap::new();
        for (d, v) in entries {
            if !(*v >= 0.0) {
                return Err(RhoError::Config(format!(
                    "Δ({}) must be nonnegative",
                    d.label()
                )));
            }
            if big_delta.insert(d.label(), *v).is_some() {
                return Err(RhoError::Config(format!(
                    "duplicate descriptor {}",
                    d.label()
                )));
            }
        }
        let s = summability(big_delta.values().copied());
        if s > 1.0 + 1e-12 {
            return Err(RhoError::Config(format!("Σ e^(-Δ) = {s} exceeds 1")));
        }
        Ok(PenaltySpec {
            kappa,
            n,
            mode,
            big_delta,
        })
    }

    /// Null penalty on any descriptor.
    pub fn null(n: usize) -> Self {
        PenaltySpec {
            kappa: KAPPA_DEFAULT,
            n,
            mode: PenaltyMode::Null,
            big_delta: BTreeMap::new(),
        }
    }

    pub fn value(&self, d: &ModelDescriptor) -> Result<f64> {
        match self.mode {
            PenaltyMode::Null => Ok(0.0),
            PenaltyMode::Formula => {
                let Some(&bd) = self.big_delta.get(&d.label()) else {
                    return Err(RhoError::Config(format!(
                        "no Δ for descriptor {}",
                        d.label()
                    )));
                };
                penalty_value(d, self.n, self.kappa, bd)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Evaluate `Υ` on every candidate of materialized sets.
    Exhaustive,
    /// Pattern search over lattices with a challenger pool; exact certification on
    /// materialized sets when the budget allows.
    Heuristic,
    /// Exhaustive when every block is materialized and small, heuristic otherwise.
    Auto,
}

/// Estimator search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Largest total candidate count `Auto` searches exhaustively.
    pub exhaustive_limit: usize,
    /// Random challengers seeded into the pool, per block.
    pub probes: usize,
    pub seed: u64,
    pub max_rounds: usize,
    /// Challengers kept from each inner ascent.
    pub ascent_starts: usize,
    pub certify: bool,
    /// Maximum number of `T` evaluations.
    pub budget: u64,
    pub record_table: bool,
    pub em_iterations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::Auto,
            exhaustive_limit: 1500,
            probes: 24,
            seed: 0,
            max_rounds: 12,
            ascent_starts: 3,
            certify: true,
            budget: 200_000_000,
            record_table: false,
            em_iterations: 200,
        }
    }
}

/// Grid resolution of one slot of a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotResolution {
    pub location_step: f64,
    pub scale_ratio: Option<f64>,
    pub weight_step: f64,
}

/// Best value reached inside one block (descriptor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub descriptor: String,
    pub penalty: f64,
    pub best_upsilon: f64,
    pub best: MixtureCandidate,
}

/// Result of a ρ-fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoFit {
    pub chosen: MixtureCandidate,
    pub descriptor: ModelDescriptor,
    /// Block (descriptor) of the chosen candidate.
    pub block: usize,
    /// Index inside the block's set, for materialized sets.
    pub index: Option<usize>,
    /// `Υ` (penalized when penalties differ) of the chosen candidate, exact in
    /// exhaustive or certified runs, over the explored challengers otherwise.
    pub upsilon: f64,
    pub penalty: f64,
    pub mode: SearchMode,
    pub certified: bool,
    /// `Υ` of every candidate, in set order, when requested and exhaustive.
    pub upsilon_table: Option<Vec<f64>>,
    pub blocks: Vec<BlockSummary>,
    pub resolution: Vec<Vec<SlotResolution>>,
    pub explored: usize,
    pub t_evaluations: u64,
    pub runtime_ms: f64,
}

impl RhoFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The chosen candidate lies within [`SLACK`] of the smallest `Υ` recorded.
    pub fn in_slack_set(&self) -> bool {
        let min = self
            .upsilon_table
            .as_ref()
            .map(|t| t.iter().copied().fold(f64::INFINITY, f64::min))
            .unwrap_or(self.upsilon);
        self.upsilon <= min + SLACK
    }
}

/// ρ-estimate over one candidate set.
pub fn rho_estimate(
    x: &[f64],
    set: &CandidateSet,
    pen: Option<&PenaltySpec>,
    cfg: &SearchConfig,
) -> Result<RhoFit> {
    let penalty = match pen {
        Some(p) => p.value(set.descriptor())?,
        None => 0.0,
    };
    rho_estimate_blocks(
        x,
        &[SearchBlock {
            source: BlockSource::Set(set.clone()),
            penalty,
        }],
        cfg,
    )
}

/// ρ-estimate over a lazily enumerated lattice (heuristic search).
pub fn rho_estimate_lattice(
    x: &[f64],
    lattice: &ModelLattice,
    pen: Option<&PenaltySpec>,
    cfg: &SearchConfig,
) -> Result<RhoFit> {
    let penalty = match pen {
        Some(p) => p.value(&lattice.descriptor)?,
        None => 0.0,
    };
    rho_estimate_blocks(
        x,
        &[SearchBlock {
            source: BlockSource::Lattice(lattice.clone()),
            penalty,
        }],
        cfg,
    )
}

/// ρ-estimate over the union of several blocks, each with its own penalty:
/// minimizes `max_{q'} [T(q, q') - pen(q')] + pen(q)`.
pub fn rho_estimate_blocks(
    x: &[f64],
    blocks: &[SearchBlock],
    cfg: &SearchConfig,
) -> Result<RhoFit> {
    if blocks.is_empty() {
        return domain("ρ-estimation needs at least one block");
    }
    if x.is_empty() {
        return domain("ρ-estimation needs at least one observation");
    }
    if x.iter().any(|v| v.is_nan()) {
        return domain("data contains NaN");
    }
    let start = Instant::now();
    let all_sets = blocks
        .iter()
        .all(|b| matches!(b.source, BlockSource::Set(_)));
    let total: usize = blocks
        .iter()
        .map(|b| b.source.materialized_len().unwrap_or(usize::MAX))
        .fold(0, usize::saturating_add);
    let mode = match cfg.mode {
        SearchMode::Auto if all_sets && total <= cfg.exhaustive_limit => SearchMode::Exhaustive,
        SearchMode::Auto => SearchMode::Heuristic,
        m => m,
    };
    if mode == SearchMode::Exhaustive && !all_sets {
        return Err(RhoError::Config(
            "exhaustive search needs materialized candidate sets".into(),
        ));
    }
    let mut engine = search::Engine::new(x, blocks, cfg);
    let out = match mode {
        SearchMode::Exhaustive => engine.exhaustive()?,
        _ => engine.heuristic()?,
    };
    let b = &blocks[out.block];
    let resolution = blocks.iter().map(|b| b.source.resolution()).collect();
    Ok(RhoFit {
        chosen: out.chosen,
        descriptor: b.source.descriptor().clone(),
        block: out.block,
        index: out.index,
        upsilon: out.upsilon,
        penalty: b.penalty,
        mode,
        certified: out.certified,
        upsilon_table: out.table,
        blocks: out.summaries,
        resolution,
        explored: engine.explored(),
        t_evaluations: engine.t_evaluations(),
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
