//! Genealogies of nonzero values.
//!
//! A nonzero `X_n` is produced by a binary tree of nonzero ancestors. Going up one level,
//! a value either continues alone (`X_{m-1} = X_m + 1`, its sibling being zero) or splits
//! into two nonzero values summing to `X_m + 1`. Levels run from `n` at the root down to
//! `0` at the leaves. The continuous analogue runs in time from `t` at the root down
//! towards `0`, with masses growing as `μ_{t'} = μ_t + t - t'` along unbranched edges.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discrete::{LightCone, LightConeRun, ModelFamily};
use crate::scaling::ScalingProfile;
use crate::{Error, Result};

/// Largest tolerated deviation of a branch-step total from one.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Points in the tabulation of the continuous split law.
pub const SPLIT_TABLE: usize = 2048;

/// Bisection steps (in `ln t'`) for the first branching time.
const TIME_BISECTIONS: usize = 60;

/// `Q_0, …, Q_n` retained from an exact forward run.
///
/// Windows are stored in the scaled units of [`LightCone`], `b_j^k Q_j(k)`, and read
/// back in log space so that deep tail entries do not underflow.
#[derive(Debug, Clone)]
pub struct QHistory {
    windows: Vec<Vec<f64>>,
    ln_bases: Vec<f64>,
}

impl QHistory {
    pub fn from_run(run: LightConeRun) -> Result<Self> {
        if run.history.is_empty() || run.history.len() != run.bases.len() {
            return Err(Error::InvalidParameter(
                "light-cone run was made without history".into(),
            ));
        }
        Ok(Self {
            ln_bases: run.bases.iter().map(|b| b.ln()).collect(),
            windows: run.history,
        })
    }

    /// Runs `family` for `n` steps keeping every value that can reach `Q_n(k)`, `k ≤ keep`.
    pub fn compute(family: &ModelFamily, n: usize, keep: usize) -> Result<Self> {
        Self::from_run(LightCone::new(n, keep).with_history().run_family(family)?)
    }

    /// Index `n` of the last stored level.
    pub fn levels(&self) -> usize {
        self.windows.len() - 1
    }

    /// Largest value stored at level `j`.
    pub fn max_value(&self, j: usize) -> usize {
        self.windows.get(j).map_or(0, |w| w.len().saturating_sub(1))
    }

    /// `ln Q_j(k)`, `-∞` outside the stored window.
    pub fn ln_q(&self, j: usize, k: usize) -> f64 {
        match self.windows.get(j).and_then(|w| w.get(k)) {
            Some(&v) if v > 0.0 => v.ln() - k as f64 * self.ln_bases[j],
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn q(&self, j: usize, k: usize) -> f64 {
        self.ln_q(j, k).exp()
    }

    fn check(&self, m: usize, x: usize) -> Result<()> {
        if m > self.levels() || self.ln_q(m, x) == f64::NEG_INFINITY {
            return Err(Error::Support { level: m, value: x });
        }
        Ok(())
    }
}

/// One step of the genealogy from `(m, X_m)` to level `m - 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchStep {
    /// Probability that the value continues alone as `X_m + 1`.
    pub no_branch: f64,
    /// Conditional law of `X^(1)` given a split: entry `i` is the probability of the pair
    /// `(i + 1, X_m - i)`. Empty when no split is possible.
    pub split: Vec<f64>,
    /// Sum of all unconditional weights, one up to rounding.
    pub total: f64,
}

impl BranchStep {
    pub fn identity_residual(&self) -> f64 {
        (self.total - 1.0).abs()
    }
}

/// Branching law at level `m ≥ 1` for a value `X_m ≥ 1`.
pub fn branch_step_distribution(h: &QHistory, m: usize, x: usize) -> Result<BranchStep> {
    if m == 0 || x == 0 {
        return Err(Error::InvalidParameter(format!(
            "need m ≥ 1 and X_m ≥ 1, got ({m}, {x})"
        )));
    }
    h.check(m, x)?;
    if x + 1 > h.max_value(m - 1) {
        return Err(Error::Support {
            level: m - 1,
            value: x + 1,
        });
    }
    let ln_qm = h.ln_q(m, x);
    let prev = |k: usize| h.ln_q(m - 1, k);
    let no_branch = (std::f64::consts::LN_2 + prev(x + 1) + prev(0) - ln_qm).exp();
    let weights: Vec<f64> = (1..=x)
        .map(|a| (prev(a) + prev(x + 1 - a) - ln_qm).exp())
        .collect();
    let split_mass: f64 = weights.iter().sum();
    let total = no_branch + split_mass;
    if split_mass == 0.0 {
        return Ok(BranchStep {
            no_branch: 1.0,
            split: Vec::new(),
            total,
        });
    }
    Ok(BranchStep {
        no_branch,
        split: weights.iter().map(|w| w / split_mass).collect(),
        total,
    })
}

/// Probability of no branching between levels `m` and `m' ≤ m` starting from `X_m`.
pub fn no_branching_prob(h: &QHistory, m_prime: usize, m: usize, x: usize) -> Result<f64> {
    if m_prime > m {
        return Err(Error::InvalidParameter(format!(
            "need m' ≤ m, got m' = {m_prime}, m = {m}"
        )));
    }
    h.check(m, x)?;
    let span = m - m_prime;
    if x + span > h.max_value(m_prime) {
        return Err(Error::Support {
            level: m_prime,
            value: x + span,
        });
    }
    let zeros: f64 = (m_prime..m).map(|mu| h.ln_q(mu, 0)).sum();
    Ok(
        (span as f64 * std::f64::consts::LN_2 + h.ln_q(m_prime, x + span) - h.ln_q(m, x) + zeros)
            .exp(),
    )
}

/// A node of a discrete genealogy. Leaves sit at level `0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteTreeNode {
    pub level: usize,
    pub value: usize,
    pub children: Vec<DiscreteTreeNode>,
}

/// A sampled discrete tree and the worst branch-step identity residual over the table
/// it was drawn from.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteTree {
    pub root: DiscreteTreeNode,
    pub max_identity_residual: f64,
}

/// Generator for tree `index` of a run seeded with `seed`: one ChaCha stream per tree,
/// so the result does not depend on how trees are scheduled.
pub fn tree_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Branch laws for every node reachable from a root `(n, x)`, tabulated once so that
/// sampling costs one draw and one search per node.
#[derive(Debug, Clone)]
pub struct DiscreteSampler {
    n: usize,
    x: usize,
    /// `steps[m - 1][v - 1]`: no-branch probability and cumulative split law at `(m, v)`.
    steps: Vec<Vec<(f64, Vec<f64>)>>,
    /// Largest identity residual over the table.
    pub max_identity_residual: f64,
}

impl DiscreteSampler {
    /// Fails with [`Error::ConditionViolated`] if a reachable branch step misses the
    /// total-probability identity by more than [`IDENTITY_TOLERANCE`].
    pub fn new(h: &QHistory, n: usize, x: usize) -> Result<Self> {
        h.check(n, x)?;
        let mut worst = 0.0f64;
        let mut steps = Vec::with_capacity(n);
        for m in 1..=n {
            let mut level = Vec::new();
            for v in 1..=x + n - m {
                if h.ln_q(m, v) == f64::NEG_INFINITY {
                    // unreachable value; keep the index aligned
                    level.push((1.0, Vec::new()));
                    continue;
                }
                let step = branch_step_distribution(h, m, v)?;
                let r = step.identity_residual();
                if !(r <= IDENTITY_TOLERANCE) {
                    return Err(Error::ConditionViolated(format!(
                        "branch probabilities at level {m}, value {v} sum to 1 {r:+e}"
                    )));
                }
                worst = worst.max(r);
                let mut acc = 0.0;
                let cdf = step
                    .split
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                level.push((step.no_branch, cdf));
            }
            steps.push(level);
        }
        Ok(Self {
            n,
            x,
            steps,
            max_identity_residual: worst,
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DiscreteTreeNode {
        self.grow(self.n, self.x, rng)
    }

    fn grow(&self, m: usize, v: usize, rng: &mut impl Rng) -> DiscreteTreeNode {
        let mut node = DiscreteTreeNode {
            level: m,
            value: v,
            children: Vec::new(),
        };
        if m == 0 {
            return node;
        }
        let (no_branch, cdf) = &self.steps[m - 1][v - 1];
        let u: f64 = rng.random();
        if u < *no_branch || cdf.is_empty() {
            node.children.push(self.grow(m - 1, v + 1, rng));
        } else {
            let w: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
            let a = cdf.partition_point(|&c| c <= w).min(cdf.len() - 1) + 1;
            node.children.push(self.grow(m - 1, a, rng));
            node.children.push(self.grow(m - 1, v + 1 - a, rng));
        }
        node
    }
}

/// Samples the genealogy of `X_n = x` down to level `0`.
pub fn sample_discrete_tree(
    h: &QHistory,
    n: usize,
    x: usize,
    rng: &mut impl Rng,
) -> Result<DiscreteTree> {
    let sampler = DiscreteSampler::new(h, n, x)?;
    Ok(DiscreteTree {
        root: sampler.sample(rng),
        max_identity_residual: sampler.max_identity_residual,
    })
}

/// Profile `F` driving the continuous trees.
#[derive(Debug, Clone)]
pub enum TreeProfile {
    /// `F(x) = 4e^{-2x}`: rate `2μ/t'^2` and uniform splits.
    Exponential,
    /// A numerically solved profile, interpolated and continued by its power-law tail.
    Scaling(ScalingProfile),
}

impl TreeProfile {
    fn ln_value(&self, y: f64) -> Result<f64> {
        match self {
            Self::Exponential => Ok(4f64.ln() - 2.0 * y),
            Self::Scaling(p) => {
                let v = p
                    .value(y)
                    .map_err(|e| Error::RateEvaluation(e.to_string()))?;
                if !(v > 0.0) {
                    return Err(Error::RateEvaluation(format!(
                        "F({y}) = {v} is not positive"
                    )));
                }
                Ok(v.ln())
            }
        }
    }

    fn log_slope(&self, y: f64) -> Result<f64> {
        match self {
            Self::Exponential => Ok(-2.0),
            Self::Scaling(p) => {
                let v = p
                    .value(y)
                    .map_err(|e| Error::RateEvaluation(e.to_string()))?;
                let d = p
                    .slope(y)
                    .map_err(|e| Error::RateEvaluation(e.to_string()))?;
                if !(v > 0.0) {
                    return Err(Error::RateEvaluation(format!(
                        "F({y}) = {v} is not positive"
                    )));
                }
                Ok(d / v)
            }
        }
    }
}

fn check_times(t_prime: f64, t: f64) -> Result<()> {
    if !(t_prime > 0.0 && t_prime <= t && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < t' ≤ t, got t' = {t_prime}, t = {t}"
        )));
    }
    Ok(())
}

/// `ln ψ_{t',t}(x)`, the log-probability of no branching between `t` and `t'`.
pub fn ln_continuous_no_branching(
    profile: &TreeProfile,
    t_prime: f64,
    t: f64,
    x: f64,
) -> Result<f64> {
    check_times(t_prime, t)?;
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mass x = {x} must be non-negative"
        )));
    }
    if let TreeProfile::Exponential = profile {
        return Ok(2.0 * (t / t_prime).ln() - 2.0 * (t - t_prime) * (x + t) / (t * t_prime));
    }
    let mu = x + t - t_prime;
    Ok(2.0 * (t / t_prime).ln() + profile.ln_value(mu / t_prime)? - profile.ln_value(x / t)?)
}

/// `ψ_{t',t}(x) = (t/t')^2 F((x + t - t')/t') / F(x/t)`.
pub fn continuous_no_branching(profile: &TreeProfile, t_prime: f64, t: f64, x: f64) -> Result<f64> {
    ln_continuous_no_branching(profile, t_prime, t, x).map(f64::exp)
}

/// Branching rate at time `t'` of a lineage of mass `μ`:
/// `-2/t' - (1/t' + μ/t'^2) F'(μ/t')/F(μ/t')`, which is `2μ/t'^2` for the exponential.
pub fn branching_rate(profile: &TreeProfile, t_prime: f64, mu: f64) -> Result<f64> {
    if !(t_prime > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time t' = {t_prime} must be positive"
        )));
    }
    let g = profile.log_slope(mu / t_prime)?;
    Ok(-2.0 / t_prime - (1.0 / t_prime + mu / (t_prime * t_prime)) * g)
}

/// Time of the first branching below `t` for a lineage of mass `x` at `t`, or `None` if
/// it survives down to `floor`.
///
/// The survival function is `ψ_{t',t}(x)`, so the time is drawn by inverting it exactly
/// (bisection in `ln t'`) rather than by thinning.
pub fn first_branch_time(
    profile: &TreeProfile,
    t: f64,
    x: f64,
    floor: f64,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    check_times(floor, t)?;
    let u: f64 = rng.random();
    let target = (1.0 - u).ln(); // in (-∞, 0]
    if ln_continuous_no_branching(profile, floor, t, x)? >= target {
        return Ok(None);
    }
    let (mut lo, mut hi) = (floor.ln(), t.ln());
    for _ in 0..TIME_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if ln_continuous_no_branching(profile, mid.exp(), t, x)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some((0.5 * (lo + hi)).exp().min(t)))
}

/// Draws `x₁` from the split law of mass `mu` at time `t`, density ∝ `F(x₁/t) F((μ-x₁)/t)`.
pub fn split_mass(profile: &TreeProfile, mu: f64, t: f64, rng: &mut impl Rng) -> Result<f64> {
    let u: f64 = rng.random();
    if let TreeProfile::Exponential = profile {
        return Ok(u * mu);
    }
    let h = mu / SPLIT_TABLE as f64;
    let ln_g: Vec<f64> = (0..=SPLIT_TABLE)
        .map(|i| {
            let y = i as f64 * h;
            Ok(profile.ln_value(y / t)? + profile.ln_value((mu - y) / t)?)
        })
        .collect::<Result<_>>()?;
    let top = ln_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g: Vec<f64> = ln_g.iter().map(|v| (v - top).exp()).collect();
    let mut cdf = Vec::with_capacity(SPLIT_TABLE + 1);
    cdf.push(0.0);
    for w in g.windows(2) {
        cdf.push(cdf.last().unwrap() + 0.5 * (w[0] + w[1]));
    }
    let target = u * cdf[SPLIT_TABLE];
    let i = cdf.partition_point(|&c| c <= target).clamp(1, SPLIT_TABLE) - 1;
    let cell = cdf[i + 1] - cdf[i];
    let s = if cell > 0.0 {
        (target - cdf[i]) / cell
    } else {
        0.5
    };
    Ok(((i as f64 + s) * h).clamp(0.0, mu))
}

/// A node of a continuous genealogy: the lineage starts at `time` with `mass` and either
/// splits into two children at a common earlier time or reaches the tree's floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousTreeNode {
    pub time: f64,
    pub mass: f64,
    pub children: Vec<ContinuousTreeNode>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuousTree {
    pub root: ContinuousTreeNode,
    /// Time at which unbranched lineages are stopped.
    pub floor: f64,
}

/// Stopping rule for continuous trees.
///
/// `ψ_{0,t} = 0`: every lineage branches before time zero, and branchings accumulate
/// there, so lineages are stopped at `floor_fraction · t`. Keeping the floor proportional
/// to `t` preserves scale invariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuousConfig {
    pub floor_fraction: f64,
    /// Trees with more nodes than this are rejected with an error.
    pub max_nodes: usize,
}

impl Default for ContinuousConfig {
    fn default() -> Self {
        Self {
            floor_fraction: 0.1,
            max_nodes: 1 << 20,
        }
    }
}

/// Samples the genealogy of mass `x` at time `t`.
pub fn sample_continuous_tree(
    profile: &TreeProfile,
    x: f64,
    t: f64,
    cfg: ContinuousConfig,
    rng: &mut impl Rng,
) -> Result<ContinuousTree> {
    if !(cfg.floor_fraction > 0.0 && cfg.floor_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "floor fraction {} must lie in (0, 1)",
            cfg.floor_fraction
        )));
    }
    if !(x >= 0.0 && x.is_finite() && t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need x ≥ 0 and t > 0, got x = {x}, t = {t}"
        )));
    }
    let floor = cfg.floor_fraction * t;
    let mut budget = cfg.max_nodes;
    let root = grow_continuous(profile, t, x, floor, rng, &mut budget)?;
    Ok(ContinuousTree { root, floor })
}

fn grow_continuous(
    profile: &TreeProfile,
    t: f64,
    x: f64,
    floor: f64,
    rng: &mut impl Rng,
    budget: &mut usize,
) -> Result<ContinuousTreeNode> {
    if *budget == 0 {
        return Err(Error::InvalidParameter(
            "tree exceeded the node budget".into(),
        ));
    }
    *budget -= 1;
    let mut node = ContinuousTreeNode {
        time: t,
        mass: x,
        children: Vec::new(),
    };
    if t <= floor {
        return Ok(node);
    }
    if let Some(tb) = first_branch_time(profile, t, x, floor, rng)? {
        let mu = x + t - tb;
        let x1 = split_mass(profile, mu, tb, rng)?;
        node.children
            .push(grow_continuous(profile, tb, x1, floor, rng, budget)?);
        node.children
            .push(grow_continuous(profile, tb, mu - x1, floor, rng, budget)?);
    }
    Ok(node)
}

/// Shape of one tree as seen by [`TreeStatistics`].
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TreeSummary {
    pub leaves: usize,
    /// Level or time of the root lineage's first branching, `None` if it never branches.
    pub first_branch: Option<f64>,
    /// `(time, pairs)`: each branching joins `pairs = L₁ L₂` leaf pairs.
    pub coalescences: Vec<(f64, u64)>,
}

impl DiscreteTreeNode {
    /// Summary with branchings dated by the level of the splitting parent.
    pub fn summary(&self) -> TreeSummary {
        let mut s = TreeSummary::default();
        let mut node = self;
        while node.children.len() == 1 {
            node = &node.children[0];
        }
        if node.children.len() == 2 {
            s.first_branch = Some(node.level as f64);
        }
        s.leaves = discrete_leaves(self, &mut s.coalescences);
        s
    }
}

fn discrete_leaves(node: &DiscreteTreeNode, out: &mut Vec<(f64, u64)>) -> usize {
    match node.children.as_slice() {
        [] => 1,
        [c] => discrete_leaves(c, out),
        [a, b, ..] => {
            let (la, lb) = (discrete_leaves(a, out), discrete_leaves(b, out));
            out.push((node.level as f64, (la * lb) as u64));
            la + lb
        }
    }
}

impl ContinuousTreeNode {
    pub fn summary(&self) -> TreeSummary {
        let mut s = TreeSummary {
            first_branch: self.children.first().map(|c| c.time),
            ..TreeSummary::default()
        };
        s.leaves = continuous_leaves(self, &mut s.coalescences);
        s
    }
}

fn continuous_leaves(node: &ContinuousTreeNode, out: &mut Vec<(f64, u64)>) -> usize {
    match node.children.as_slice() {
        [a, b] => {
            let (la, lb) = (continuous_leaves(a, out), continuous_leaves(b, out));
            out.push((a.time, (la * lb) as u64));
            la + lb
        }
        _ => 1,
    }
}

/// Streaming statistics over many trees. Collectors merge associatively.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TreeStatistics {
    pub trees: u64,
    pub leaf_counts: BTreeMap<usize, u64>,
    /// First-branching level or time per tree (`None`: no branching).
    pub first_branch: Vec<Option<f64>>,
    /// Pairwise coalescence times, weighted by the number of leaf pairs.
    pub coalescences: Vec<(f64, u64)>,
}

impl TreeStatistics {
    pub fn add(&mut self, s: TreeSummary) {
        self.trees += 1;
        *self.leaf_counts.entry(s.leaves).or_default() += 1;
        self.first_branch.push(s.first_branch);
        self.coalescences.extend(s.coalescences);
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.trees += other.trees;
        for (k, v) in other.leaf_counts {
            *self.leaf_counts.entry(k).or_default() += v;
        }
        self.first_branch.extend(other.first_branch);
        self.coalescences.extend(other.coalescences);
        self
    }

    /// Normalized leaf-count law.
    pub fn leaf_frequencies(&self) -> Vec<(usize, f64)> {
        let n = self.trees.max(1) as f64;
        self.leaf_counts
            .iter()
            .map(|(&k, &v)| (k, v as f64 / n))
            .collect()
    }

    /// Fraction of trees whose root lineage does not branch before reaching `level`
    /// (a level for discrete trees, a time for continuous ones), with its standard error.
    pub fn no_branch_frequency(&self, level: f64) -> (f64, f64) {
        let n = self.first_branch.len().max(1) as f64;
        let hits = self
            .first_branch
            .iter()
            .filter(|b| b.is_none_or(|v| v <= level))
            .count();
        let p = hits as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }
}

fn collect<F>(count: u64, seed: u64, sample: F) -> Result<TreeStatistics>
where
    F: Fn(&mut ChaCha8Rng) -> Result<TreeSummary> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| sample(&mut tree_rng(seed, i)))
        .try_fold(TreeStatistics::default, |mut acc, s| {
            acc.add(s?);
            Ok(acc)
        })
        .try_reduce(TreeStatistics::default, |a, b| Ok(a.merge(b)))
        .map(|mut s| {
            // fold boundaries depend on scheduling; sorting makes the output deterministic
            s.first_branch
                .sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            s.coalescences
                .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            s
        })
}

/// Statistics of `count` discrete trees rooted at `(n, x)`, tree `i` drawn from stream `i`.
pub fn discrete_tree_statistics(
    h: &QHistory,
    n: usize,
    x: usize,
    count: u64,
    seed: u64,
) -> Result<TreeStatistics> {
    let sampler = DiscreteSampler::new(h, n, x)?;
    collect(count, seed, |rng| Ok(sampler.sample(rng).summary()))
}

/// Statistics of `count` continuous trees rooted at mass `x` and time `t`.
pub fn continuous_tree_statistics(
    profile: &TreeProfile,
    x: f64,
    t: f64,
    cfg: ContinuousConfig,
    count: u64,
    seed: u64,
) -> Result<TreeStatistics> {
    collect(count, seed, |rng| {
        sample_continuous_tree(profile, x, t, cfg, rng).map(|tr| tr.root.summary())
    })
}
