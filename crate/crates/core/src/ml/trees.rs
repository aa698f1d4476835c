//! Binary decision trees: weighted CART for classification and
//! second-order gradient trees for boosting.

use rand::Rng as _;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Leaf(Vec<f64>),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    #[cfg(test)]
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CartParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// features drawn per split; `None` = all
    pub max_features: Option<usize>,
}

fn impurity(counts: &[f64], total: f64, c: Criterion) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    match c {
        Criterion::Gini => 1.0 - counts.iter().map(|w| (w / total).powi(2)).sum::<f64>(),
        Criterion::Entropy => -counts
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|w| {
                let p = w / total;
                p * p.log2()
            })
            .sum::<f64>(),
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    if m >= b {
        a
    } else {
        m
    }
}

/// Sorts `idx` by feature `f` (stable on index order for ties).
fn sort_by_feature(x: &[Vec<f64>], idx: &mut [usize], f: usize) {
    idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
}

/// Chooses `m` distinct features out of `p` (partial Fisher–Yates), in
/// drawing order.
fn draw_features(p: usize, m: usize, rng: &mut Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..p).collect();
    for i in 0..m.min(p) {
        let j = rng.random_range(i..p);
        all.swap(i, j);
    }
    all.truncate(m.min(p));
    all
}

/// Weighted CART. `y` holds class indices `< k`; samples with zero weight
/// are ignored. Leaves store normalized class weights.
pub(crate) fn build_cart(
    x: &[Vec<f64>],
    y: &[usize],
    w: &[f64],
    k: usize,
    params: &CartParams,
    mut rng: Option<&mut Rng>,
) -> Tree {
    let p = x.first().map_or(0, Vec::len);
    let root: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
    let mut nodes = vec![Node::Leaf(vec![])];
    let mut stack = vec![(0usize, root, 0usize)];
    while let Some((slot, idx, depth)) = stack.pop() {
        let mut counts = vec![0.0; k];
        for &i in &idx {
            counts[y[i]] += w[i];
        }
        let total: f64 = counts.iter().sum();
        let imp = impurity(&counts, total, params.criterion);
        let leaf = || Node::Leaf(counts.iter().map(|c| c / total).collect());
        let can_split = imp > 0.0
            && idx.len() >= params.min_samples_split.max(2)
            && params.max_depth.is_none_or(|d| depth < d);
        if !can_split {
            nodes[slot] = leaf();
            continue;
        }
        let features: Vec<usize> = match (params.max_features, rng.as_deref_mut()) {
            (Some(m), Some(r)) if m < p => draw_features(p, m, r),
            _ => (0..p).collect(),
        };
        // (gain, feature, threshold, split position in sorted order)
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.clone();
        for &f in &features {
            sort_by_feature(x, &mut sorted, f);
            let mut left = vec![0.0; k];
            let mut wl = 0.0;
            for pos in 0..sorted.len() - 1 {
                let i = sorted[pos];
                left[y[i]] += w[i];
                wl += w[i];
                let (a, b) = (x[i][f], x[sorted[pos + 1]][f]);
                if !(b > a) {
                    continue;
                }
                let right: Vec<f64> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let wr = total - wl;
                let gain = total * imp
                    - wl * impurity(&left, wl, params.criterion)
                    - wr * impurity(&right, wr, params.criterion);
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12 * total) {
                    best = Some((gain, f, midpoint(a, b)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            nodes[slot] = leaf();
            continue;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf(vec![]));
        nodes.push(Node::Leaf(vec![]));
        nodes[slot] = Node::Split { feature, threshold, left: l, right: r };
        stack.push((r, ri, depth + 1));
        stack.push((l, li, depth + 1));
    }
    Tree { nodes }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GradParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    /// minimum loss reduction for a split
    pub min_gain: f64,
}

/// Regression tree on gradients `g` and hessians `h`; leaf value
/// `-G / (H + lambda)`.
pub(crate) fn build_grad_tree(x: &[Vec<f64>], g: &[f64], h: &[f64], params: &GradParams) -> Tree {
    let p = x.first().map_or(0, Vec::len);
    let score = |gs: f64, hs: f64| gs * gs / (hs + params.lambda);
    let mut nodes = vec![Node::Leaf(vec![])];
    let mut stack = vec![(0usize, (0..x.len()).collect::<Vec<_>>(), 0usize)];
    while let Some((slot, idx, depth)) = stack.pop() {
        let gs: f64 = idx.iter().map(|&i| g[i]).sum();
        let hs: f64 = idx.iter().map(|&i| h[i]).sum();
        let leaf = Node::Leaf(vec![-gs / (hs + params.lambda)]);
        if depth >= params.max_depth || hs < 2.0 * params.min_child_weight || idx.len() < 2 {
            nodes[slot] = leaf;
            continue;
        }
        let parent = score(gs, hs);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.clone();
        for f in 0..p {
            sort_by_feature(x, &mut sorted, f);
            let (mut gl, mut hl) = (0.0, 0.0);
            for pos in 0..sorted.len() - 1 {
                let i = sorted[pos];
                gl += g[i];
                hl += h[i];
                let (a, b) = (x[i][f], x[sorted[pos + 1]][f]);
                if !(b > a) || hl < params.min_child_weight {
                    continue;
                }
                let hr = hs - hl;
                if hr < params.min_child_weight {
                    break;
                }
                let gain = 0.5 * (score(gl, hl) + score(gs - gl, hr) - parent);
                if gain > params.min_gain && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, midpoint(a, b)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf(vec![]));
        nodes.push(Node::Leaf(vec![]));
        nodes[slot] = Node::Split { feature, threshold, left: l, right: r };
        stack.push((r, ri, depth + 1));
        stack.push((l, li, depth + 1));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cart_separates_threshold_data() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<usize> = (0..10).map(|i| (i >= 6) as usize).collect();
        let params = CartParams { criterion: Criterion::Gini, max_depth: None, min_samples_split: 2, max_features: None };
        let t = build_cart(&x, &y, &[1.0; 10], 2, &params, None);
        assert_eq!(t.depth(), 1);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 5.5)),
            n => panic!("{n:?}"),
        }
        for (row, &c) in x.iter().zip(&y) {
            assert_eq!(t.leaf(row)[c], 1.0);
        }
    }

    #[test]
    fn depth_limit_and_zero_weights() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let y = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let params = CartParams { criterion: Criterion::Entropy, max_depth: Some(2), min_samples_split: 2, max_features: None };
        assert!(build_cart(&x, &y, &[1.0; 8], 2, &params, None).depth() <= 2);
        let mut w = [0.0; 8];
        w[0] = 1.0;
        w[2] = 2.0;
        let t = build_cart(&x, &y, &w, 2, &params, None);
        assert_eq!(t.nodes, vec![Node::Leaf(vec![1.0, 0.0])]);
    }

    #[test]
    fn grad_tree_leaf_weights() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let g = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let h = [1.0; 6];
        let params = GradParams { max_depth: 3, lambda: 1.0, min_child_weight: 1.0, min_gain: 1e-6 };
        let t = build_grad_tree(&x, &g, &h, &params);
        assert_eq!(t.leaf(&[0.0]), &[-0.75]);
        assert_eq!(t.leaf(&[5.0]), &[0.75]);
    }
}
