use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_training_set, FeatureVector};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::{substream, Stream};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf { class: u8 },
    /// Goes `left` when `x[feature] <= threshold`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A CART tree stored as a node arena rooted at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// One row per node: `[feature, threshold, left, right, class]`, with
    /// `feature = −1` marking a leaf.
    pub(super) fn to_tensor(&self) -> Tensor {
        let values = self
            .nodes
            .iter()
            .flat_map(|n| match *n {
                Node::Leaf { class } => [-1.0, 0.0, 0.0, 0.0, class as f64],
                Node::Split { feature, threshold, left, right } => {
                    [feature as f64, threshold, left as f64, right as f64, 0.0]
                }
            })
            .collect();
        Tensor { shape: vec![self.nodes.len(), 5], values }
    }

    pub(super) fn from_tensor(t: &Tensor, dim: usize) -> Result<Self> {
        let n = t.rows();
        let index = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && (v as usize) < n.max(dim) {
                Ok(v as usize)
            } else {
                Err(Error::Checkpoint(format!("malformed tree index {v}")))
            }
        };
        let mut nodes = Vec::with_capacity(n);
        for (i, r) in t.values.chunks_exact(5).enumerate() {
            nodes.push(if r[0] == -1.0 {
                if r[4] != 0.0 && r[4] != 1.0 {
                    return Err(Error::Checkpoint(format!("leaf {i} has class {}", r[4])));
                }
                Node::Leaf { class: r[4] as u8 }
            } else {
                let (feature, left, right) = (index(r[0])?, index(r[2])?, index(r[3])?);
                // Children always follow their parent, which also rules out cycles.
                if feature >= dim || left <= i || right <= i || left >= n || right >= n {
                    return Err(Error::Checkpoint(format!("malformed split node {i}")));
                }
                Node::Split { feature, threshold: r[1], left, right }
            });
        }
        if nodes.is_empty() {
            return Err(Error::Checkpoint("empty tree".into()));
        }
        Ok(Self { nodes })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Fraction of trees voting class 1.
    pub fn vote_fraction(&self, x: &[f64]) -> Result<f64> {
        if let Some(f) = self.trees.iter().filter_map(Tree::max_feature).max() {
            if f >= x.len() {
                return Err(Error::Shape(format!("tree uses feature {f} of {}", x.len())));
            }
        }
        let ones = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        Ok(ones as f64 / self.trees.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

/// Gini impurity `1 − Σ p²` of a two-class count.
pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

fn counts(idx: &[usize], labels: &[u8]) -> [usize; 2] {
    let ones = idx.iter().filter(|&&i| labels[i] == 1).count();
    [idx.len() - ones, ones]
}

struct Builder<'a> {
    xs: &'a [FeatureVector],
    labels: &'a [u8],
    dim: usize,
    per_split: usize,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, c: [usize; 2]) -> usize {
        self.nodes.push(Node::Leaf { class: u8::from(c[1] > c[0]) });
        self.nodes.len() - 1
    }

    /// Best `(feature, threshold, weighted child impurity)` over a random
    /// feature subset, if any split strictly lowers impurity.
    fn best_split(&self, idx: &mut [usize], rng: &mut ChaCha8Rng, parent: f64) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        let n = idx.len() as f64;
        let total = counts(idx, self.labels);
        for f in index::sample(rng, self.dim, self.per_split).into_vec() {
            idx.sort_by(|&a, &b| self.xs[a].values[f].total_cmp(&self.xs[b].values[f]));
            let mut left = [0usize; 2];
            for j in 0..idx.len() - 1 {
                left[self.labels[idx[j]] as usize] += 1;
                let (v, next) = (self.xs[idx[j]].values[f], self.xs[idx[j + 1]].values[f]);
                if v == next {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let nl = (j + 1) as f64;
                let impurity = (nl * gini(left) + (n - nl) * gini(right)) / n;
                if impurity < parent - 1e-12 && best.is_none_or(|b| impurity < b.2) {
                    best = Some((f, 0.5 * (v + next), impurity));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let c = counts(idx, self.labels);
        let impurity = gini(c);
        if depth >= self.max_depth || impurity == 0.0 || idx.len() < 2 {
            return self.leaf(c);
        }
        let Some((feature, threshold, _)) = self.best_split(idx, rng, impurity) else {
            return self.leaf(c);
        };
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0 });
        let (mut l, mut r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.xs[i].values[feature] <= threshold);
        let left = self.grow(&mut l, depth + 1, rng);
        let right = self.grow(&mut r, depth + 1, rng);
        self.nodes[me] = Node::Split { feature, threshold, left, right };
        me
    }
}

/// Bootstrap-aggregated CART trees with Gini splits over `⌈√d⌉` random
/// features per node.
pub fn train_forest(features: &[FeatureVector], labels: &[u8], cfg: &ForestConfig) -> Result<ForestModel> {
    let dim = check_training_set(features, labels)?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let per_split = ((dim as f64).sqrt().ceil() as usize).clamp(1, dim);
    let n = features.len();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = substream(cfg.seed, Stream::Baseline, &[2, t as u64]);
            let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = Builder { xs: features, labels, dim, per_split, max_depth: cfg.max_depth, nodes: Vec::new() };
            b.grow(&mut idx, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel { trees })
}
