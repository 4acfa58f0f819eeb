//! Regression forest: CART trees grown on bootstrap resamples with a random
//! subset of candidate covariates at each node.

use rand::Rng;
use rayon::prelude::*;

use crate::data::SpaceTimeDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, StreamRng};

use super::{check_rows, FittedRule, Learner, ModelKind, ModelSpec, Query};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate covariates per split; `None` means ⌈p/3⌉.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            mtry: None,
            min_leaf: 3,
            max_depth: None,
        }
    }
}

impl ForestParams {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        spec.reject_unknown(&["n_trees", "mtry", "min_leaf", "max_depth"])?;
        let d = ForestParams::default();
        Ok(ForestParams {
            n_trees: spec.count("n_trees")?.unwrap_or(d.n_trees),
            mtry: spec.count("mtry")?,
            min_leaf: spec.count("min_leaf")?.unwrap_or(d.min_leaf),
            max_depth: spec.count("max_depth")?,
        })
    }

    fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| p.div_ceil(3)).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    params: ForestParams,
}

impl RandomForest {
    pub fn new(params: ForestParams) -> Result<Self> {
        if params.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if params.min_leaf == 0 {
            return Err(Error::invalid("min_leaf must be at least 1"));
        }
        if params.mtry == Some(0) {
            return Err(Error::invalid("mtry must be at least 1"));
        }
        Ok(RandomForest { params })
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

struct Training<'a> {
    // column-major: columns[j][i]
    columns: &'a [Vec<f64>],
    y: &'a [f64],
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn best_split(
    t: &Training<'_>,
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<Split> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| t.y[i]).sum();
    let base = total * total / n as f64;
    let sst: f64 = idx.iter().map(|&i| t.y[i] * t.y[i]).sum::<f64>() - base;
    let mut best: Option<Split> = None;
    for &f in features {
        let col = &t.columns[f];
        scratch.clear();
        scratch.extend(idx.iter().map(|&i| (col[i], t.y[i])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = 0.0;
        for k in 0..n - 1 {
            left += scratch[k].1;
            let nl = k + 1;
            let nr = n - nl;
            if nl < min_leaf {
                continue;
            }
            if nr < min_leaf {
                break;
            }
            let (a, b) = (scratch[k].0, scratch[k + 1].0);
            if a >= b {
                continue;
            }
            let right = total - left;
            let gain = left * left / nl as f64 + right * right / nr as f64 - base;
            if best.as_ref().is_none_or(|s| gain > s.gain) {
                let mid = 0.5 * (a + b);
                let threshold = if mid < b { mid } else { a };
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best.filter(|s| s.gain > 1e-12 * sst.max(0.0) && s.gain > 0.0)
}

fn grow_tree(t: &Training<'_>, params: &ForestParams, p: usize, rng: &mut StreamRng) -> Tree {
    let n = t.y.len();
    let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mtry = params.resolved_mtry(p);
    let mut feature_pool: Vec<usize> = (0..p).collect();
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut stack = vec![(0usize, sample, 0usize)];
    let mut scratch = Vec::with_capacity(n);
    while let Some((slot, idx, depth)) = stack.pop() {
        let mean = idx.iter().map(|&i| t.y[i]).sum::<f64>() / idx.len() as f64;
        let depth_ok = params.max_depth.is_none_or(|d| depth < d);
        let split = if p > 0 && depth_ok && idx.len() >= 2 * params.min_leaf {
            // partial Fisher–Yates for the candidate subset
            for i in 0..mtry {
                let j = rng.random_range(i..p);
                feature_pool.swap(i, j);
            }
            let mut cand = feature_pool[..mtry].to_vec();
            cand.sort_unstable();
            best_split(t, &idx, &cand, params.min_leaf, &mut scratch)
        } else {
            None
        };
        match split {
            None => nodes[slot] = Node::Leaf(mean),
            Some(s) => {
                let col = &t.columns[s.feature];
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| col[i] <= s.threshold);
                let li = nodes.len();
                nodes.push(Node::Leaf(0.0));
                nodes.push(Node::Leaf(0.0));
                nodes[slot] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: li,
                    right: li + 1,
                };
                stack.push((li + 1, r, depth + 1));
                stack.push((li, l, depth + 1));
            }
        }
    }
    Tree { nodes }
}

#[derive(Debug, Clone)]
pub struct ForestFit {
    trees: Vec<Tree>,
    p: usize,
    params: ForestParams,
}

impl ForestFit {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

impl Learner for RandomForest {
    fn kind(&self) -> ModelKind {
        ModelKind::RandomForest
    }

    fn fit(&self, ds: &SpaceTimeDataset, rows: &[usize], seed: u64) -> Result<Box<dyn FittedRule>> {
        check_rows(ds, rows, 1)?;
        let p = ds.p();
        if let Some(m) = self.params.mtry {
            if p > 0 && m > p {
                return Err(Error::invalid(format!("mtry = {m} exceeds p = {p}")));
            }
        }
        let columns: Vec<Vec<f64>> = (0..p)
            .map(|j| rows.iter().map(|&r| ds.covariates(r)[j]).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|&r| ds.y(r)).collect();
        let training = Training {
            columns: &columns,
            y: &y,
        };
        let trees = (0..self.params.n_trees)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream(&[derive_seed(&[seed, k as u64])]);
                grow_tree(&training, &self.params, p, &mut rng)
            })
            .collect();
        Ok(Box::new(ForestFit {
            trees,
            p,
            params: self.params,
        }))
    }
}

impl FittedRule for ForestFit {
    fn kind(&self) -> ModelKind {
        ModelKind::RandomForest
    }

    fn p(&self) -> usize {
        self.p
    }

    fn predict_one(&self, q: &Query<'_>) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(q.covariates)).sum();
        s / self.trees.len() as f64
    }

    fn describe(&self) -> String {
        let leaves: usize = self.trees.iter().map(Tree::n_leaves).sum();
        format!(
            "model = random_forest\nn_trees = {}\nmtry = {}\nmin_leaf = {}\nmax_depth = {}\nmean_leaves = {}\n",
            self.trees.len(),
            self.params.resolved_mtry(self.p),
            self.params.min_leaf,
            self.params.max_depth.map_or("none".to_string(), |d| d.to_string()),
            leaves as f64 / self.trees.len() as f64
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetBuilder;

    fn dataset(xs: &[Vec<f64>], ys: &[f64]) -> SpaceTimeDataset {
        let p = xs[0].len();
        let mut b = DatasetBuilder::new((1..=p).map(|j| format!("x{j}")).collect());
        for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
            let id = format!("s{i}");
            b.location(&id, [i as f64, 0.0]).unwrap();
            b.observe(&id, 0, Some(*y), Some(x.clone())).unwrap();
        }
        // second location keeps the dataset valid for a single point
        if xs.len() == 1 {
            b.location("pad", [-1.0, 0.0]).unwrap();
            b.observe("pad", 0, None, None).unwrap();
        }
        b.build().unwrap()
    }

    fn forest(n_trees: usize) -> RandomForest {
        RandomForest::new(ForestParams {
            n_trees,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn constant_outcome() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let ds = dataset(&xs, &[3.25; 20]);
        let fit = forest(20).fit(&ds, &ds.usable_rows(), 1).unwrap();
        for x in [[0.0, 0.0], [100.0, -3.0]] {
            let q = Query { coords: [0.0; 2], time: 0, covariates: &x };
            assert_eq!(fit.predict(&q).unwrap(), 3.25);
        }
    }

    #[test]
    fn single_observation() {
        let ds = dataset(&[vec![1.0]], &[7.5]);
        let fit = forest(10).fit(&ds, &ds.usable_rows(), 4).unwrap();
        let q = Query { coords: [0.0; 2], time: 0, covariates: &[-50.0] };
        assert_eq!(fit.predict(&q).unwrap(), 7.5);
    }

    #[test]
    fn step_function() {
        let mut rng = stream(&[2024]);
        let draw = |rng: &mut StreamRng| -> f64 { rng.random::<f64>() * 2.0 - 1.0 };
        let train_x: Vec<Vec<f64>> = (0..200).map(|_| vec![draw(&mut rng)]).collect();
        let train_y: Vec<f64> = train_x.iter().map(|x| (x[0] > 0.0) as u8 as f64).collect();
        let ds = dataset(&train_x, &train_y);
        let fit = forest(100).fit(&ds, &ds.usable_rows(), 8).unwrap();
        let mut se = 0.0;
        for _ in 0..100 {
            let x = draw(&mut rng);
            let q = Query { coords: [0.0; 2], time: 0, covariates: &[x] };
            let truth = (x > 0.0) as u8 as f64;
            se += (fit.predict(&q).unwrap() - truth).powi(2);
        }
        assert!(se / 100.0 < 0.05, "mse {}", se / 100.0);
    }

    #[test]
    fn deterministic_and_bounded() {
        let mut rng = stream(&[5]);
        let xs: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * 3.0 - x[2] + rng.random::<f64>()).collect();
        let ds = dataset(&xs, &ys);
        let rows = ds.usable_rows();
        let a = forest(30).fit(&ds, &rows, 11).unwrap().predict_rows(&ds, &rows).unwrap();
        let b = forest(30).fit(&ds, &rows, 11).unwrap().predict_rows(&ds, &rows).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(a.iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn depth_limit_gives_stumps() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let ys: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let ds = dataset(&xs, &ys);
        let rf = RandomForest::new(ForestParams { n_trees: 5, max_depth: Some(1), ..Default::default() }).unwrap();
        let fit = rf.fit(&ds, &ds.usable_rows(), 0).unwrap();
        let desc = fit.describe();
        assert!(desc.contains("mean_leaves = 2"), "{desc}");
    }

    #[test]
    fn tie_break_prefers_lowest_feature() {
        // two identical covariates: every split must use feature 0
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, i as f64]).collect();
        let ys: Vec<f64> = (0..30).map(|i| if i < 15 { 0.0 } else { 1.0 }).collect();
        let t = Training { columns: &[(0..30).map(|i| i as f64).collect(), (0..30).map(|i| i as f64).collect()], y: &ys };
        let idx: Vec<usize> = (0..30).collect();
        let s = best_split(&t, &idx, &[0, 1], 3, &mut Vec::new()).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 14.5);
        let _ = xs;
    }

    #[test]
    fn rejects_bad_params() {
        assert!(RandomForest::new(ForestParams { n_trees: 0, ..Default::default() }).is_err());
        assert!(RandomForest::new(ForestParams { min_leaf: 0, ..Default::default() }).is_err());
    }
}
