//! Gradient-boosted regression trees for the dependency ratio.
//!
//! Squared-error boosting with exact greedy split search. Missing feature values
//! (`NaN`) are routed by a default direction learned at each split. Models are
//! persisted as self-describing JSON.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, SampleRow};
use crate::depmodel;
use crate::error::{Error, Result};
use crate::hw::HardwareDescriptor;
use crate::kernel::{self, KernelSpec, SplitConfig};

pub const FORMAT_VERSION: u32 = 1;

/// Splits whose gain is not above this are not taken.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 300,
            max_depth: 6,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            subsample_fraction: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_trees < 1 {
            return bad("n_trees must be >= 1".into());
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be >= 1".into());
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Values `< threshold` go left.
        threshold: f64,
        /// Where `NaN` goes.
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = x[feature];
                    let go_left = if v.is_nan() { default_left } else { v < threshold };
                    at = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub base_score: f64,
    /// Feature whose value is added to every prediction, so the trees fit
    /// the residual left by it.
    #[serde(default)]
    pub offset_feature: Option<usize>,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Share of total split gain per feature; all zero when no split was made.
    pub feature_importances: Vec<f64>,
    pub train_config: TrainConfig,
    /// Largest `|raw prediction - target|` over the training rows at fit time.
    pub train_max_abs_error: f64,
    /// (hardware, P) pairs seen in training; predictions elsewhere extrapolate.
    #[serde(default)]
    pub training_groups: Vec<(String, u32)>,
}

impl GbtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Unclamped prediction.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Arity {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.start(x) + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    fn start(&self, x: &[f64]) -> f64 {
        self.base_score + offset(self.offset_feature, x)
    }

    /// Prediction truncated to the first `n` trees.
    pub fn predict_staged(&self, x: &[f64], n: usize) -> f64 {
        self.start(x) + self.learning_rate * self.trees.iter().take(n).map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn trained_on(&self, hw: &str, p: u32) -> bool {
        self.training_groups.iter().any(|(h, q)| h == hw && *q == p)
    }

    /// Importances paired with feature names, largest first.
    pub fn ranked_importances(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self
            .feature_names
            .iter()
            .map(String::as_str)
            .zip(self.feature_importances.iter().copied())
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbtModel = serde_json::from_str(text)?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format_version {} (expected {FORMAT_VERSION})",
                model.format_version
            )));
        }
        if model.feature_importances.len() != model.feature_names.len() {
            return Err(Error::InvalidArgument("feature_importances length mismatch".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Feature matrix (row-major) and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// (hardware, P) pairs present, when built from sample rows.
    pub groups: Vec<(String, u32)>,
    /// See [`GbtModel::offset_feature`].
    pub offset_feature: Option<usize>,
}

impl TrainingSet {
    pub fn new(feature_names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} targets",
                x.len(),
                y.len()
            )));
        }
        if let Some(bad) = x.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::Arity {
                expected: feature_names.len(),
                got: bad.len(),
            });
        }
        Ok(Self {
            feature_names,
            x,
            y,
            groups: Vec::new(),
            offset_feature: None,
        })
    }

    pub fn from_rows(rows: &[SampleRow]) -> Self {
        Self {
            feature_names: dataset::feature_names(),
            x: rows.iter().map(SampleRow::features).collect(),
            y: rows.iter().map(|r| r.target_ratio.clamp(0.0, 1.0)).collect(),
            groups: training_groups(rows),
            offset_feature: Some(dataset::ANALYTICAL_RATIO_FEATURE),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            groups: self.groups.clone(),
            offset_feature: self.offset_feature,
        }
    }
}

pub fn train(set: &TrainingSet, cfg: &TrainConfig) -> Result<GbtModel> {
    cfg.validate()?;
    let n = set.len();
    if n < 5 {
        return Err(Error::TooFewRows { need: 5, got: n });
    }
    if let Some(bad) = set.y.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("training target {bad} is outside [0, 1]")));
    }
    let n_features = set.feature_names.len();

    // Column-major copy and per-feature row order by value, NaNs last.
    let columns: Vec<Vec<f64>> = (0..n_features)
        .map(|f| set.x.iter().map(|r| r[f]).collect())
        .collect();
    let sorted: Vec<Vec<u32>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                let (x, y) = (col[a as usize], col[b as usize]);
                x.is_nan().cmp(&y.is_nan()).then(x.total_cmp(&y)).then(a.cmp(&b))
            });
            idx
        })
        .collect();

    if let Some(k) = set.offset_feature {
        if k >= n_features {
            return Err(Error::InvalidArgument(format!("offset feature {k} out of range")));
        }
    }
    let residual: Vec<f64> = set
        .x
        .iter()
        .zip(&set.y)
        .map(|(x, y)| y - offset(set.offset_feature, x))
        .collect();
    let base_score = if residual.iter().all(|&t| t == residual[0]) {
        residual[0]
    } else {
        residual.iter().sum::<f64>() / n as f64
    };
    let mut pred: Vec<f64> = set
        .x
        .iter()
        .map(|x| base_score + offset(set.offset_feature, x))
        .collect();
    let mut gains = vec![0.0; n_features];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_sample = ((cfg.subsample_fraction * n as f64).round() as usize).clamp(1, n);
    let mut in_sample = vec![true; n];
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..cfg.n_trees {
        let grad: Vec<f64> = pred.iter().zip(&set.y).map(|(p, y)| p - y).collect();
        if grad.iter().all(|g| g.abs() <= MIN_GAIN) {
            if trees.is_empty() {
                trees.push(Tree {
                    nodes: vec![Node::Leaf { value: 0.0 }],
                });
            }
            break;
        }
        if n_sample < n {
            order.shuffle(&mut rng);
            in_sample.iter_mut().for_each(|s| *s = false);
            for &i in &order[..n_sample] {
                in_sample[i] = true;
            }
        }
        let order_by_feature: Vec<Vec<u32>> = sorted
            .iter()
            .map(|l| l.iter().copied().filter(|&i| in_sample[i as usize]).collect())
            .collect();

        let mut builder = TreeBuilder {
            columns: &columns,
            grad: &grad,
            cfg,
            nodes: Vec::new(),
            gains: &mut gains,
            order: order_by_feature,
            goes_left: vec![false; n],
            scratch: Vec::with_capacity(n_sample),
        };
        builder.build(0, n_sample, 0);
        let tree = Tree { nodes: builder.nodes };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += cfg.learning_rate * tree.predict(&set.x[i]);
        }
        trees.push(tree);
    }

    let total_gain: f64 = gains.iter().sum();
    let feature_importances = if total_gain > 0.0 {
        gains.iter().map(|g| g / total_gain).collect()
    } else {
        vec![0.0; n_features]
    };
    let train_max_abs_error = pred
        .iter()
        .zip(&set.y)
        .map(|(p, y)| (p - y).abs())
        .fold(0.0, f64::max);

    Ok(GbtModel {
        format_version: FORMAT_VERSION,
        feature_names: set.feature_names.clone(),
        base_score,
        offset_feature: set.offset_feature,
        learning_rate: cfg.learning_rate,
        trees,
        feature_importances,
        train_config: *cfg,
        train_max_abs_error,
        training_groups: set.groups.clone(),
    })
}

/// Offset contribution; a missing value contributes nothing.
fn offset(feature: Option<usize>, x: &[f64]) -> f64 {
    match feature.map(|k| x[k]) {
        Some(v) if !v.is_nan() => v,
        _ => 0.0,
    }
}

fn training_groups(rows: &[SampleRow]) -> Vec<(String, u32)> {
    let mut g: Vec<(String, u32)> = rows.iter().map(|r| (r.hw.name.clone(), r.polynomial_order())).collect();
    g.sort();
    g.dedup();
    g
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    grad: &'a [f64],
    cfg: &'a TrainConfig,
    nodes: Vec<Node>,
    gains: &'a mut [f64],
    /// Per feature, the sampled rows ordered by value with NaNs last. A node
    /// owns the same `start..end` segment in every feature's array.
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

impl TreeBuilder<'_> {
    /// Builds the subtree for segment `start..end`. Returns the node index.
    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let n = end - start;
        let g_total: f64 = self.order[0][start..end].iter().map(|&i| self.grad[i as usize]).sum();

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: -g_total / n as f64,
        });
        if depth >= self.cfg.max_depth || n < 2 * self.cfg.min_samples_leaf {
            return id;
        }
        let Some(best) = self.best_split(start, end, g_total) else {
            return id;
        };

        let col = &self.columns[best.feature];
        for &i in &self.order[0][start..end] {
            let v = col[i as usize];
            self.goes_left[i as usize] = if v.is_nan() { best.default_left } else { v < best.threshold };
        }
        let mut mid = start;
        for f in 0..self.order.len() {
            mid = self.partition(f, start, end);
        }
        self.gains[best.feature] += best.gain;

        let left = self.build(start, mid, depth + 1);
        let right = self.build(mid, end, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            default_left: best.default_left,
            left,
            right,
        };
        id
    }

    /// Stable partition of one feature's segment by `goes_left`; returns the boundary.
    fn partition(&mut self, f: usize, start: usize, end: usize) -> usize {
        let seg = &mut self.order[f][start..end];
        self.scratch.clear();
        let mut w = 0;
        for k in 0..seg.len() {
            let i = seg[k];
            if self.goes_left[i as usize] {
                seg[w] = i;
                w += 1;
            } else {
                self.scratch.push(i);
            }
        }
        seg[w..].copy_from_slice(&self.scratch);
        start + w
    }

    fn best_split(&self, start: usize, end: usize, g_total: f64) -> Option<Candidate> {
        let n = end - start;
        let min_leaf = self.cfg.min_samples_leaf;
        let parent = g_total * g_total / n as f64;
        let score = |gl: f64, nl: usize, gr: f64, nr: usize| gl * gl / nl as f64 + gr * gr / nr as f64 - parent;
        let mut best: Option<Candidate> = None;

        for (f, order) in self.order.iter().enumerate() {
            let col = &self.columns[f];
            let seg = &order[start..end];
            let n_present = seg.partition_point(|&i| !col[i as usize].is_nan());
            let list = &seg[..n_present];
            let n_missing = n - n_present;
            let g_present: f64 = list.iter().map(|&i| self.grad[i as usize]).sum();
            let g_missing = g_total - g_present;

            let mut gl = 0.0;
            for k in 0..n_present.saturating_sub(1) {
                let i = list[k] as usize;
                gl += self.grad[i];
                let (v, next) = (col[i], col[list[k + 1] as usize]);
                if v == next {
                    continue;
                }
                let nl = k + 1;
                let nr = n_present - nl;
                let gr = g_present - gl;
                let threshold = v + (next - v) / 2.0;
                let threshold = if threshold > v { threshold } else { next };

                // Missing rows to the right.
                if nl >= min_leaf && nr + n_missing >= min_leaf {
                    let gain = score(gl, nl, gr + g_missing, nr + n_missing);
                    consider(&mut best, gain, f, threshold, false);
                }
                // Missing rows to the left.
                if n_missing > 0 && nl + n_missing >= min_leaf && nr >= min_leaf {
                    let gain = score(gl + g_missing, nl + n_missing, gr, nr);
                    consider(&mut best, gain, f, threshold, true);
                }
            }
            // Present rows vs missing rows.
            if n_missing > 0 && n_present >= min_leaf && n_missing >= min_leaf {
                let gain = score(g_present, n_present, g_missing, n_missing);
                consider(&mut best, gain, f, f64::MAX, false);
            }
        }
        best
    }
}

fn consider(best: &mut Option<Candidate>, gain: f64, feature: usize, threshold: f64, default_left: bool) {
    if gain <= MIN_GAIN {
        return;
    }
    if best.as_ref().is_none_or(|b| gain > b.gain) {
        *best = Some(Candidate {
            gain,
            feature,
            threshold,
            default_left,
        });
    }
}

/// Predicted ratio, clamped to `[0, 1]`.
pub fn predict_ratio(m: &GbtModel, features: &[f64]) -> Result<f64> {
    Ok(m.predict_raw(features)?.clamp(0.0, 1.0))
}

/// GFLOPS from the predicted ratio through the dependency-chain model.
pub fn predict_gflops(m: &GbtModel, spec: &KernelSpec, cfg: &SplitConfig, hw: &HardwareDescriptor) -> Result<f64> {
    spec.validate()?;
    cfg.check(spec.np)?;
    let features = dataset::encode_features(spec, cfg, kernel::flops(spec), hw);
    let ratio = predict_ratio(m, &features)?;
    Ok(depmodel::estimate_with_ratio(spec, ratio, hw)?.gflops_per_core)
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} true values",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("MAPE of an empty set".into()));
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if *t == 0.0 {
            return Err(Error::InvalidArgument("MAPE is undefined for a zero true value".into()));
        }
        sum += ((p - t) / t).abs();
    }
    Ok(100.0 * sum / pred.len() as f64)
}

/// Ranges sampled by [`random_search`]. Equal bounds pin a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_trees: (usize, usize),
    pub max_depth: (usize, usize),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub min_samples_leaf: (usize, usize),
    pub subsample_fraction: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_trees: (100, 800),
            max_depth: (2, 8),
            learning_rate: (0.02, 0.3),
            min_samples_leaf: (1, 4),
            subsample_fraction: (0.6, 1.0),
        }
    }
}

impl SearchSpace {
    pub fn point(cfg: &TrainConfig) -> Self {
        Self {
            n_trees: (cfg.n_trees, cfg.n_trees),
            max_depth: (cfg.max_depth, cfg.max_depth),
            learning_rate: (cfg.learning_rate, cfg.learning_rate),
            min_samples_leaf: (cfg.min_samples_leaf, cfg.min_samples_leaf),
            subsample_fraction: (cfg.subsample_fraction, cfg.subsample_fraction),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> TrainConfig {
        let lr = {
            let (lo, hi) = self.learning_rate;
            if lo == hi {
                lo
            } else {
                (rng.random_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
            }
        };
        let sub = {
            let (lo, hi) = self.subsample_fraction;
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        };
        TrainConfig {
            n_trees: rng.random_range(self.n_trees.0..=self.n_trees.1),
            max_depth: rng.random_range(self.max_depth.0..=self.max_depth.1),
            learning_rate: lr,
            min_samples_leaf: rng.random_range(self.min_samples_leaf.0..=self.min_samples_leaf.1),
            subsample_fraction: sub,
            seed: rng.random(),
        }
    }
}

/// Samples `n_candidates` configurations and keeps the best by k-fold CV.
pub fn random_search(
    set: &TrainingSet,
    space: &SearchSpace,
    n_candidates: usize,
    k_folds: usize,
    seed: u64,
) -> Result<(TrainConfig, f64)> {
    if n_candidates < 1 {
        return Err(Error::InvalidArgument("n_candidates must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<TrainConfig> = (0..n_candidates).map(|_| space.sample(&mut rng)).collect();
    search_candidates(set, &candidates, k_folds, seed)
}

/// Cross-validates each candidate; ties go to the earlier candidate.
pub fn search_candidates(
    set: &TrainingSet,
    candidates: &[TrainConfig],
    k_folds: usize,
    seed: u64,
) -> Result<(TrainConfig, f64)> {
    let scores = candidates
        .par_iter()
        .map(|c| cross_validate(set, c, k_folds, seed))
        .collect::<Result<Vec<f64>>>()?;
    let (best, score) = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::InvalidArgument("no candidates".into()))?;
    Ok((candidates[best], *score))
}

/// Mean over folds of the ratio MAPE on the held-out fold. Rows with a zero
/// target are skipped since their percentage error is undefined.
pub fn cross_validate(set: &TrainingSet, cfg: &TrainConfig, k_folds: usize, seed: u64) -> Result<f64> {
    if k_folds < 2 {
        return Err(Error::InvalidArgument("k_folds must be >= 2".into()));
    }
    let n = set.len();
    let need = (2 * k_folds).max(5 * k_folds / (k_folds - 1) + 1);
    if n < need {
        return Err(Error::TooFewRows { need, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut total = 0.0;
    for fold in 0..k_folds {
        let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
        for (j, &i) in idx.iter().enumerate() {
            if j % k_folds == fold {
                test_idx.push(i);
            } else {
                train_idx.push(i);
            }
        }
        let model = train(&set.subset(&train_idx), cfg)?;
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for &i in &test_idx {
            if set.y[i] != 0.0 {
                pred.push(predict_ratio(&model, &set.x[i])?);
                truth.push(set.y[i]);
            }
        }
        total += if truth.is_empty() {
            0.0
        } else {
            mape(&pred, &truth)?
        };
    }
    Ok(total / k_folds as f64)
}
