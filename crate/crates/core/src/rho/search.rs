//! Exhaustive and heuristic minimization of the (penalized) `Υ` criterion.
//!
//! The heuristic keeps a pool of challengers. `Υ` of a candidate is approximated by
//! its maximum over the pool; an outer pattern search over lattice coordinates
//! minimizes that approximation, and an inner pattern search from the incumbent
//! finds new challengers that raise it. Rounds alternate until the inner search no
//! longer finds a challenger outside the pool. On materialized sets the incumbent is
//! then certified exactly by branch and bound, using the pool maxima as lower bounds.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::init::{starts, Start};
use super::{t_profiles, BlockSummary, Profile, SearchConfig, SlotResolution};
use crate::emission::sorted_copy;
use crate::error::{Result, RhoError};
use crate::mixture::{CandidateSet, LatticePoint, MixtureCandidate, ModelDescriptor, ModelLattice};
use crate::rng::{self, StreamRng};

/// Floats kept in the log-density cache before it is flushed.
const CACHE_FLOATS: usize = 20_000_000;
/// Data points on each side used for data-anchored moves of singular families.
const ANCHOR_SPAN: usize = 3;
/// Per-observation rounding allowance: `Υ` values closer than `n` times this are ties.
const TIE_PER_OBS: f64 = 1e-12;

/// Where a block's candidates come from.
#[derive(Debug, Clone)]
pub enum BlockSource {
    Set(CandidateSet),
    Lattice(ModelLattice),
}

impl BlockSource {
    pub fn descriptor(&self) -> &ModelDescriptor {
        match self {
            BlockSource::Set(s) => s.descriptor(),
            BlockSource::Lattice(l) => &l.descriptor,
        }
    }

    pub fn materialized_len(&self) -> Option<usize> {
        match self {
            BlockSource::Set(s) => Some(s.len()),
            BlockSource::Lattice(_) => None,
        }
    }

    pub fn lattice(&self) -> Option<&ModelLattice> {
        match self {
            BlockSource::Set(s) => s.lattice(),
            BlockSource::Lattice(l) => Some(l),
        }
    }

    pub(crate) fn resolution(&self) -> Vec<SlotResolution> {
        let Some(lat) = self.lattice() else {
            return Vec::new();
        };
        lat.nets
            .iter()
            .map(|n| SlotResolution {
                location_step: n.locations.step,
                scale_ratio: n.scales.map(|g| g.ratio),
                weight_step: 1.0 / lat.weight_denominator as f64,
            })
            .collect()
    }
}

/// One model in a (possibly penalized) union.
#[derive(Debug, Clone)]
pub struct SearchBlock {
    pub source: BlockSource,
    pub penalty: f64,
}

pub(crate) struct Outcome {
    pub chosen: MixtureCandidate,
    pub block: usize,
    pub index: Option<usize>,
    pub upsilon: f64,
    pub certified: bool,
    pub table: Option<Vec<f64>>,
    pub summaries: Vec<BlockSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    /// Candidate `idx` of a materialized set.
    Index(usize, usize),
    /// Point of a lazy lattice.
    Point(usize, LatticePoint),
}

impl Node {
    fn block(&self) -> usize {
        match self {
            Node::Index(b, _) | Node::Point(b, _) => *b,
        }
    }
}

struct PoolEntry {
    node: Node,
    logs: Arc<Profile>,
    pen: f64,
}

#[derive(Clone, Copy)]
struct Levels {
    w: u32,
    l: u32,
    s: u32,
}

impl Levels {
    fn initial(lat: &ModelLattice) -> Self {
        let lg = |c: u64| -> u32 {
            let c = (c / 8).max(1);
            63 - c.leading_zeros()
        };
        let free_w = lat.weight_denominator - lat.min_numerator() * lat.k() as u64;
        let lc = lat
            .nets
            .iter()
            .map(|n| n.location_count())
            .max()
            .unwrap_or(1);
        let sc = lat.nets.iter().map(|n| n.scale_count()).max().unwrap_or(1);
        Levels {
            w: if lat.k() > 1 { lg(free_w) } else { 0 },
            l: lg(lc),
            s: lg(sc),
        }
    }

    fn is_finest(&self) -> bool {
        self.w == 0 && self.l == 0 && self.s == 0
    }

    fn refine(&mut self) {
        self.w = self.w.saturating_sub(1);
        self.l = self.l.saturating_sub(1);
        self.s = self.s.saturating_sub(1);
    }
}

pub(crate) struct Engine<'a> {
    x: &'a [f64],
    sorted: Vec<f64>,
    blocks: &'a [SearchBlock],
    cfg: &'a SearchConfig,
    cache: HashMap<Node, Arc<Profile>>,
    cache_floats: usize,
    seen: HashSet<Node>,
    t_evals: u64,
    pool: Vec<PoolEntry>,
    in_pool: HashSet<Node>,
    lower: HashMap<Node, f64>,
    rng: StreamRng,
}

impl<'a> Engine<'a> {
    pub fn new(x: &'a [f64], blocks: &'a [SearchBlock], cfg: &'a SearchConfig) -> Self {
        Engine {
            x,
            sorted: sorted_copy(x),
            blocks,
            cfg,
            cache: HashMap::new(),
            cache_floats: 0,
            seen: HashSet::new(),
            t_evals: 0,
            pool: Vec::new(),
            in_pool: HashSet::new(),
            lower: HashMap::new(),
            rng: rng::stream(cfg.seed, 0x5ea7c4),
        }
    }

    pub fn explored(&self) -> usize {
        self.seen.len()
    }

    pub fn t_evaluations(&self) -> u64 {
        self.t_evals
    }

    fn over_budget(&self) -> bool {
        self.t_evals >= self.cfg.budget
    }

    fn pen(&self, node: &Node) -> f64 {
        self.blocks[node.block()].penalty
    }

    fn candidate(&self, node: &Node) -> MixtureCandidate {
        match node {
            Node::Index(b, i) => match &self.blocks[*b].source {
                BlockSource::Set(s) => s.candidates()[*i].clone(),
                BlockSource::Lattice(_) => unreachable!("index node on a lattice block"),
            },
            Node::Point(b, p) => self.blocks[*b]
                .source
                .lattice()
                .expect("point node on a lattice block")
                .candidate(p),
        }
    }

    fn point(&self, node: &Node) -> Option<LatticePoint> {
        match node {
            Node::Point(_, p) => Some(p.clone()),
            Node::Index(b, i) => match &self.blocks[*b].source {
                BlockSource::Set(s) => s.point(*i).cloned(),
                BlockSource::Lattice(_) => None,
            },
        }
    }

    /// Tie-breaking order: block, then enumeration order inside the block.
    fn order_key(&self, node: &Node) -> (usize, Vec<u64>) {
        match node {
            Node::Index(b, i) => (*b, vec![*i as u64]),
            Node::Point(b, p) => {
                let mut key = p.weights.clone();
                for s in 0..p.loc.len() {
                    key.push(p.loc[s]);
                    key.push(p.scale[s]);
                }
                (*b, key)
            }
        }
    }

    fn node_from_point(&self, block: usize, p: LatticePoint) -> Option<Node> {
        match &self.blocks[block].source {
            BlockSource::Lattice(lat) => {
                if !lat.contains(&p) {
                    return None;
                }
                let p = if lat.exchangeable() {
                    lat.canonical_point(&p)
                } else {
                    p
                };
                Some(Node::Point(block, p))
            }
            BlockSource::Set(s) => {
                let li = s.lattice_index()?;
                if !li.lattice.contains(&p) {
                    return None;
                }
                li.lookup(&p).map(|i| Node::Index(block, i))
            }
        }
    }

    fn logs(&mut self, node: &Node) -> Arc<Profile> {
        if let Some(v) = self.cache.get(node) {
            return v.clone();
        }
        let c = self.candidate(node);
        let v = Arc::new(Profile::new(&c, self.x));
        if self.cache_floats + 2 * v.len() > CACHE_FLOATS {
            self.cache.clear();
            self.cache_floats = 0;
        }
        self.cache_floats += 2 * v.len();
        self.cache.insert(node.clone(), v.clone());
        self.seen.insert(node.clone());
        v
    }

    fn t(&mut self, a: &Profile, b: &Profile) -> f64 {
        self.t_evals += 1;
        t_profiles(a, b)
    }

    fn add_to_pool(&mut self, node: Node) -> bool {
        if self.in_pool.contains(&node) {
            return false;
        }
        let logs = self.logs(&node);
        let pen = self.pen(&node);
        self.in_pool.insert(node.clone());
        self.pool.push(PoolEntry { node, logs, pen });
        true
    }

    /// `max_{c ∈ pool ∪ {q}} [T(q, c) - pen(c)] + pen(q)`, abandoned once it reaches
    /// `bound`. Returns the value (a lower bound when incomplete) and completeness.
    /// The challenger that ends an evaluation moves to the front of the pool.
    fn pooled(&mut self, node: &Node, bound: f64) -> (f64, bool) {
        let lq = self.logs(node);
        let pq = self.pen(node);
        let mut m = -pq;
        let mut complete = true;
        for idx in 0..self.pool.len() {
            if self.pool[idx].node == *node {
                continue;
            }
            let lc = self.pool[idx].logs.clone();
            let s = self.t(&lq, &lc) - self.pool[idx].pen;
            if s > m {
                m = s;
            }
            if m + pq >= bound {
                self.pool[..=idx].rotate_right(1);
                complete = false;
                break;
            }
        }
        let v = m + pq;
        let e = self.lower.entry(node.clone()).or_insert(f64::NEG_INFINITY);
        *e = e.max(v);
        (v, complete)
    }

    /// Lattice neighbours of `node` at the current step levels.
    fn moves(&self, node: &Node, lv: &Levels) -> Vec<Node> {
        let b = node.block();
        let Some(lat) = self.blocks[b].source.lattice() else {
            return Vec::new();
        };
        let Some(p) = self.point(node) else {
            return Vec::new();
        };
        let k = lat.k();
        let m = lat.min_numerator();
        let mut pts: Vec<LatticePoint> = Vec::new();
        if k > 1 {
            let step = 1u64 << lv.w;
            let mut pairs = Vec::new();
            if k <= 6 {
                for i in 0..k {
                    for j in 0..k {
                        if i != j {
                            pairs.push((i, j));
                        }
                    }
                }
            } else {
                for i in 0..k {
                    pairs.push((i, (i + 1) % k));
                    pairs.push(((i + 1) % k, i));
                }
            }
            for (i, j) in pairs {
                let t = step.min(p.weights[j] - m);
                if t == 0 {
                    continue;
                }
                let mut q = p.clone();
                q.weights[i] += t;
                q.weights[j] -= t;
                pts.push(q);
            }
        }
        for s in 0..k {
            let net = &lat.nets[s];
            let lc = net.location_count();
            if lc > 1 {
                let st = (1u64 << lv.l).min(lc - 1);
                for up in [true, false] {
                    let cur = p.loc[s];
                    let nxt = if up {
                        cur.saturating_add(st).min(lc - 1)
                    } else {
                        cur.saturating_sub(st)
                    };
                    if nxt != cur {
                        let mut q = p.clone();
                        q.loc[s] = nxt;
                        pts.push(q);
                    }
                }
                if net.spec.kind.is_singular() {
                    for li in self.anchored_locations(net, p.loc[s]) {
                        if li != p.loc[s] {
                            let mut q = p.clone();
                            q.loc[s] = li;
                            pts.push(q);
                        }
                    }
                }
            }
            let sc = net.scale_count();
            if sc > 1 {
                let st = (1u64 << lv.s).min(sc - 1);
                for up in [true, false] {
                    let cur = p.scale[s];
                    let nxt = if up {
                        cur.saturating_add(st).min(sc - 1)
                    } else {
                        cur.saturating_sub(st)
                    };
                    if nxt != cur {
                        let mut q = p.clone();
                        q.scale[s] = nxt;
                        pts.push(q);
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(pts.len());
        let mut dedup = HashSet::new();
        for q in pts {
            if let Some(nb) = self.node_from_point(b, q) {
                if nb != *node && dedup.insert(nb.clone()) {
                    out.push(nb);
                }
            }
        }
        out
    }

    /// Grid locations at and next to the observations closest to the current pole,
    /// and at midpoints between consecutive observations.
    fn anchored_locations(&self, net: &crate::emission::EmissionNet, cur: u64) -> Vec<u64> {
        let z = net.locations.value(cur);
        let pos = self.sorted.partition_point(|&v| v < z);
        let lo = pos.saturating_sub(ANCHOR_SPAN);
        let hi = (pos + ANCHOR_SPAN).min(self.sorted.len());
        let last = net.location_count() - 1;
        let mut out = Vec::new();
        for j in lo..hi {
            let g = net.locations.nearest(self.sorted[j]);
            out.push(g.saturating_sub(1));
            out.push(g);
            out.push((g + 1).min(last));
            if j + 1 < self.sorted.len() {
                out.push(
                    net.locations
                        .nearest(0.5 * (self.sorted[j] + self.sorted[j + 1])),
                );
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Pattern search minimizing the pooled criterion.
    fn descend(&mut self, start: Node, start_val: f64) -> (Node, f64) {
        let Some(lat) = self.blocks[start.block()].source.lattice() else {
            return (start, start_val);
        };
        let mut lv = Levels::initial(lat);
        let (mut cur, mut cur_val) = (start, start_val);
        loop {
            if self.over_budget() {
                break;
            }
            let mut improved = false;
            for nb in self.moves(&cur, &lv) {
                if self.lower.get(&nb).is_some_and(|&l| l >= cur_val) {
                    continue;
                }
                let (v, complete) = self.pooled(&nb, cur_val);
                if complete && v < cur_val {
                    cur = nb;
                    cur_val = v;
                    improved = true;
                    break;
                }
                if self.over_budget() {
                    break;
                }
            }
            if !improved {
                if lv.is_finest() {
                    break;
                }
                lv.refine();
            }
        }
        (cur, cur_val)
    }

    /// Pattern search maximizing `T(q, c) - pen(c)` over challengers `c`.
    fn ascend(&mut self, lq: &Arc<Profile>, start: Node) -> (Node, f64) {
        let mut memo: HashMap<Node, f64> = HashMap::new();
        let mut value = |eng: &mut Self, n: &Node| -> f64 {
            if let Some(&v) = memo.get(n) {
                return v;
            }
            let lc = eng.logs(n);
            let v = eng.t(lq, &lc) - eng.pen(n);
            memo.insert(n.clone(), v);
            v
        };
        let mut cur_val = value(self, &start);
        let mut cur = start;
        let Some(lat) = self.blocks[cur.block()].source.lattice() else {
            return (cur, cur_val);
        };
        let mut lv = Levels::initial(lat);
        loop {
            if self.over_budget() {
                break;
            }
            let mut improved = false;
            for nb in self.moves(&cur, &lv) {
                let v = value(self, &nb);
                if v > cur_val {
                    cur = nb;
                    cur_val = v;
                    improved = true;
                    break;
                }
            }
            if !improved {
                if lv.is_finest() {
                    break;
                }
                lv.refine();
            }
        }
        (cur, cur_val)
    }

    fn start_nodes(&mut self, block: usize) -> Vec<Node> {
        let mut out = Vec::new();
        let src = &self.blocks[block].source;
        if let Some(lat) = src.lattice() {
            let ss: Vec<Start> = starts(
                &self.sorted,
                &lat.descriptor.families,
                self.cfg.em_iterations,
            );
            for s in ss {
                let p = lat.snap(&s.weights, &s.params);
                if let Some(n) = self.node_from_point(block, p) {
                    if !out.contains(&n) {
                        out.push(n);
                    }
                }
            }
        }
        if out.is_empty() {
            if let BlockSource::Set(_) = src {
                out.push(Node::Index(block, 0));
            }
        }
        out
    }

    fn probe_nodes(&mut self, block: usize) -> Vec<Node> {
        let mut out = Vec::new();
        for _ in 0..self.cfg.probes {
            let node = match &self.blocks[block].source {
                BlockSource::Set(s) if s.lattice().is_none() => {
                    Some(Node::Index(block, self.rng.gen_range(0..s.len())))
                }
                src => {
                    let lat = src.lattice().expect("lattice-backed block");
                    let k = lat.k();
                    let w: Vec<f64> = (0..k)
                        .map(|_| -(1.0 - self.rng.gen::<f64>()).ln())
                        .collect();
                    let weights = lat.snap_weights(&w);
                    let loc = (0..k)
                        .map(|s| {
                            let xi = self.x[self.rng.gen_range(0..self.x.len())];
                            lat.nets[s].locations.nearest(xi)
                        })
                        .collect();
                    let scale = (0..k)
                        .map(|s| self.rng.gen_range(0..lat.nets[s].scale_count()))
                        .collect();
                    self.node_from_point(
                        block,
                        LatticePoint {
                            weights,
                            loc,
                            scale,
                        },
                    )
                }
            };
            if let Some(n) = node {
                if !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        out
    }

    fn tie(&self) -> f64 {
        TIE_PER_OBS * self.x.len() as f64
    }

    /// `Υ` value `a` at order position `ia` beats `b` at `ib`; near-equal values are ties.
    fn beats<K: Ord>(&self, a: f64, ka: K, b: f64, kb: K) -> bool {
        let tol = self.tie();
        a < b - tol || (a <= b + tol && ka < kb)
    }

    fn better(&self, a: (&Node, f64), b: (&Node, f64)) -> bool {
        self.beats(a.1, self.order_key(a.0), b.1, self.order_key(b.0))
    }

    pub fn heuristic(&mut self) -> Result<Outcome> {
        let nb = self.blocks.len();
        let mut seeds: Vec<Vec<Node>> = Vec::with_capacity(nb);
        for b in 0..nb {
            let mut s = self.start_nodes(b);
            let probes = self.probe_nodes(b);
            for p in &probes {
                if !s.contains(p) {
                    s.push(p.clone());
                }
            }
            for n in s.iter().chain(&probes) {
                self.add_to_pool(n.clone());
            }
            seeds.push(s);
        }
        // tournament: best seed of each block against the initial pool
        let mut inc: Vec<(Node, f64)> = Vec::with_capacity(nb);
        for seeds_b in &seeds {
            let mut best: Option<(Node, f64)> = None;
            for n in seeds_b {
                let (v, _) = self.pooled(n, f64::INFINITY);
                if best
                    .as_ref()
                    .is_none_or(|(bn, bv)| self.better((n, v), (bn, *bv)))
                {
                    best = Some((n.clone(), v));
                }
            }
            if self.over_budget() {
                return Err(RhoError::Search(format!(
                    "budget of {} T evaluations exhausted while scoring the starting points",
                    self.cfg.budget
                )));
            }
            match best {
                Some(b) => inc.push(b),
                None => return Err(RhoError::Search("block without starting points".into())),
            }
        }

        for _round in 0..self.cfg.max_rounds.max(1) {
            for b in 0..nb {
                let n = inc[b].0.clone();
                let (v, _) = self.pooled(&n, f64::INFINITY);
                inc[b] = self.descend(n, v);
            }
            let g = self.best_incumbent(&inc);
            let g_node = inc[g].0.clone();
            let g_val = inc[g].1;
            if self.over_budget() {
                break;
            }
            // inner search for challengers
            let lq = self.logs(&g_node);
            let mut scored: Vec<(f64, usize)> = Vec::with_capacity(self.pool.len());
            for i in 0..self.pool.len() {
                let lc = self.pool[i].logs.clone();
                let s = self.t(&lq, &lc) - self.pool[i].pen;
                scored.push((s, i));
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut starts_c: Vec<Node> = vec![g_node.clone()];
            for (b, (n, _)) in inc.iter().enumerate() {
                if b != g {
                    starts_c.push(n.clone());
                }
            }
            for &(_, i) in scored.iter().take(self.cfg.ascent_starts) {
                let n = self.pool[i].node.clone();
                if !starts_c.contains(&n) {
                    starts_c.push(n);
                }
            }
            let mut added = false;
            for st in starts_c {
                let (c, _) = self.ascend(&lq, st);
                added |= self.add_to_pool(c);
            }
            let (new_val, _) = self.pooled(&g_node, f64::INFINITY);
            if !added || new_val <= g_val || self.over_budget() {
                break;
            }
        }

        // final exact pooled values
        for b in 0..nb {
            let n = inc[b].0.clone();
            inc[b].1 = self.pooled(&n, f64::INFINITY).0;
        }
        let mut g = self.best_incumbent(&inc);
        let mut g_val = inc[g].1;
        let mut g_node = inc[g].0.clone();
        let mut certified = false;
        let all_sets = self
            .blocks
            .iter()
            .all(|b| matches!(b.source, BlockSource::Set(_)));
        if all_sets && self.cfg.certify {
            if let Some((node, val)) = self.certify(&g_node) {
                g = node.block();
                if val < inc[g].1 || node == inc[g].0 {
                    inc[g] = (node.clone(), val);
                }
                g_node = node;
                g_val = val;
                certified = true;
            }
        }
        let summaries = inc
            .iter()
            .enumerate()
            .map(|(b, (n, v))| BlockSummary {
                descriptor: self.blocks[b].source.descriptor().label(),
                penalty: self.blocks[b].penalty,
                best_upsilon: *v,
                best: self.candidate(n),
            })
            .collect();
        Ok(Outcome {
            chosen: self.candidate(&g_node),
            block: g,
            index: match g_node {
                Node::Index(_, i) => Some(i),
                Node::Point(..) => None,
            },
            upsilon: g_val,
            certified,
            table: None,
            summaries,
        })
    }

    fn best_incumbent(&self, inc: &[(Node, f64)]) -> usize {
        let mut g = 0;
        for b in 1..inc.len() {
            if self.better((&inc[b].0, inc[b].1), (&inc[g].0, inc[g].1)) {
                g = b;
            }
        }
        g
    }

    fn all_index_nodes(&self) -> Vec<Node> {
        let mut nodes = Vec::new();
        for (b, blk) in self.blocks.iter().enumerate() {
            if let BlockSource::Set(s) = &blk.source {
                nodes.extend((0..s.len()).map(|i| Node::Index(b, i)));
            }
        }
        nodes
    }

    fn all_logs(&mut self, nodes: &[Node]) -> Vec<Arc<Profile>> {
        let x = self.x;
        let cands: Vec<MixtureCandidate> = nodes.iter().map(|n| self.candidate(n)).collect();
        let out: Vec<Arc<Profile>> = cands
            .par_iter()
            .map(|c| Arc::new(Profile::new(c, x)))
            .collect();
        self.seen.extend(nodes.iter().cloned());
        out
    }

    /// Exact branch and bound over all materialized candidates. `None` when the
    /// budget does not allow it.
    fn certify(&mut self, incumbent: &Node) -> Option<(Node, f64)> {
        let nodes = self.all_index_nodes();
        let m = nodes.len();
        let pool_n = self.pool.len() as u64;
        if self.t_evals + m as u64 * (pool_n + 1) > self.cfg.budget {
            return None;
        }
        let logs = self.all_logs(&nodes);
        let pens: Vec<f64> = nodes.iter().map(|n| self.pen(n)).collect();
        let pool_logs: Vec<(Arc<Profile>, f64)> =
            self.pool.iter().map(|e| (e.logs.clone(), e.pen)).collect();
        let lbs: Vec<f64> = logs
            .par_iter()
            .zip(pens.par_iter())
            .map(|(l, &pq)| {
                let mut mx = -pq;
                for (lc, pc) in &pool_logs {
                    mx = mx.max(t_profiles(l, lc) - pc);
                }
                mx + pq
            })
            .collect();
        self.t_evals += m as u64 * pool_n;
        let inc_idx = nodes.iter().position(|n| n == incumbent)?;
        let tol = self.tie();
        let exact = |eng: &mut Self, i: usize, bound: Option<(f64, usize)>| -> Option<f64> {
            let mut mx = -pens[i];
            for j in 0..m {
                if j == i {
                    continue;
                }
                eng.t_evals += 1;
                let s = t_profiles(&logs[i], &logs[j]) - pens[j];
                if s > mx {
                    mx = s;
                    if let Some((bv, bi)) = bound {
                        let v = mx + pens[i];
                        // mx only grows, so i can no longer win
                        if v > bv + tol || (v >= bv - tol && i > bi) {
                            return None;
                        }
                    }
                }
            }
            Some(mx + pens[i])
        };
        let mut best_val = exact(self, inc_idx, None)?;
        let mut best = inc_idx;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| lbs[a].total_cmp(&lbs[b]).then(a.cmp(&b)));
        for &i in &order {
            if lbs[i] > best_val + tol {
                break;
            }
            if i == best || (lbs[i] >= best_val - tol && i > best) {
                continue;
            }
            if self.over_budget() {
                return None;
            }
            if let Some(v) = exact(self, i, Some((best_val, best))) {
                if self.beats(v, i, best_val, best) {
                    best_val = v;
                    best = i;
                }
            }
        }
        Some((nodes[best].clone(), best_val))
    }

    pub fn exhaustive(&mut self) -> Result<Outcome> {
        let nodes = self.all_index_nodes();
        let m = nodes.len();
        if m == 0 {
            return Err(RhoError::Domain("empty candidate set".into()));
        }
        let pairs = (m as u64) * (m as u64 - 1) / 2;
        if pairs > self.cfg.budget {
            return Err(RhoError::Search(format!(
                "exhaustive search needs {pairs} T evaluations, budget is {}",
                self.cfg.budget
            )));
        }
        let logs = self.all_logs(&nodes);
        let pens: Vec<f64> = nodes.iter().map(|n| self.pen(n)).collect();
        let upper: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..m)
                    .map(|j| t_profiles(&logs[i], &logs[j]))
                    .collect()
            })
            .collect();
        self.t_evals += pairs;
        let t = |i: usize, j: usize| -> f64 {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => upper[i][j - i - 1],
                std::cmp::Ordering::Greater => -upper[j][i - j - 1],
                std::cmp::Ordering::Equal => 0.0,
            }
        };
        let ups: Vec<f64> = (0..m)
            .map(|i| {
                let mut mx = f64::NEG_INFINITY;
                for j in 0..m {
                    mx = mx.max(t(i, j) - pens[j]);
                }
                mx + pens[i]
            })
            .collect();
        let mut best = 0;
        for i in 1..m {
            if self.beats(ups[i], i, ups[best], best) {
                best = i;
            }
        }
        let mut summaries = Vec::new();
        for (b, blk) in self.blocks.iter().enumerate() {
            let mut bi: Option<usize> = None;
            for (i, n) in nodes.iter().enumerate() {
                if n.block() == b && bi.is_none_or(|k| self.beats(ups[i], i, ups[k], k)) {
                    bi = Some(i);
                }
            }
            if let Some(i) = bi {
                summaries.push(BlockSummary {
                    descriptor: blk.source.descriptor().label(),
                    penalty: blk.penalty,
                    best_upsilon: ups[i],
                    best: self.candidate(&nodes[i]),
                });
            }
        }
        let node = nodes[best].clone();
        Ok(Outcome {
            chosen: self.candidate(&node),
            block: node.block(),
            index: match node {
                Node::Index(_, i) => Some(i),
                Node::Point(..) => None,
            },
            upsilon: ups[best],
            certified: true,
            table: self.cfg.record_table.then_some(ups),
            summaries,
        })
    }
}
