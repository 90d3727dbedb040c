//! CART decision-tree induction over (state -> cluster label) pairs and
//! rendering of the indented rule text.
//!
//! Splits minimize weighted Gini impurity over midpoint candidates;
//! ties resolve to the lowest feature index, then the lowest threshold,
//! so fitting is fully deterministic.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_label: usize,
        class_counts: Vec<usize>,
    },
}

/// Gini impurity 1 - sum((n_i/n)^2); an empty node is pure.
pub fn gini(class_counts: &[usize]) -> f64 {
    let n: usize = class_counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

fn counts_of(y: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &label in y {
        counts[label] += 1;
    }
    counts
}

fn leaf(y: &[usize], n_classes: usize) -> TreeNode {
    let class_counts = counts_of(y, n_classes);
    // argmax, ties to the lowest label
    let class_label = class_counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    TreeNode::Leaf { class_label, class_counts }
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Best (feature, midpoint threshold) by weighted Gini; `None` when no
/// feature has two distinct values.
fn best_split(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Option<Split> {
    let n = x.len();
    let d = x[0].len();
    let mut best: Option<Split> = None;
    // `x` is row-major, so columns can only be addressed by index.
    #[allow(clippy::needless_range_loop)]
    for feature in 0..d {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));

        let mut left_counts = vec![0usize; n_classes];
        let mut right_counts = counts_of(y, n_classes);
        for w in 0..n - 1 {
            let i = order[w];
            left_counts[y[i]] += 1;
            right_counts[y[i]] -= 1;
            let v = x[i][feature];
            let v_next = x[order[w + 1]][feature];
            if v == v_next {
                continue;
            }
            let threshold = v + (v_next - v) / 2.0;
            let n_left = (w + 1) as f64;
            let n_right = (n - w - 1) as f64;
            let impurity =
                (n_left * gini(&left_counts) + n_right * gini(&right_counts)) / n as f64;
            let better = match &best {
                None => true,
                Some(b) => {
                    impurity < b.impurity - 1e-15
                        || (impurity <= b.impurity + 1e-15
                            && (feature < b.feature
                                || (feature == b.feature && threshold < b.threshold)))
                }
            };
            if better {
                best = Some(Split { feature, threshold, impurity });
            }
        }
    }
    best
}

fn build(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    depth: usize,
    max_depth: usize,
    min_samples_split: usize,
) -> TreeNode {
    let counts = counts_of(y, n_classes);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || depth >= max_depth || x.len() < min_samples_split {
        return leaf(y, n_classes);
    }
    let Some(split) = best_split(x, y, n_classes) else {
        return leaf(y, n_classes);
    };
    // a split that improves nothing over the parent is not worth taking
    if split.impurity >= gini(&counts) - 1e-15 {
        return leaf(y, n_classes);
    }
    let (mut lx, mut ly, mut rx, mut ry) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (xi, &yi) in x.iter().zip(y) {
        if xi[split.feature] <= split.threshold {
            lx.push(xi.clone());
            ly.push(yi);
        } else {
            rx.push(xi.clone());
            ry.push(yi);
        }
    }
    TreeNode::Internal {
        feature_index: split.feature,
        threshold: split.threshold,
        left: Box::new(build(&lx, &ly, n_classes, depth + 1, max_depth, min_samples_split)),
        right: Box::new(build(&rx, &ry, n_classes, depth + 1, max_depth, min_samples_split)),
    }
}

pub fn tree_fit(
    x: &[Vec<f64>],
    y: &[usize],
    max_depth: usize,
    min_samples_split: usize,
) -> Result<TreeNode> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidInput("tree_fit needs non-empty aligned X and y".into()));
    }
    let n_classes = y.iter().max().unwrap() + 1;
    Ok(build(x, y, n_classes, 0, max_depth, min_samples_split.max(2)))
}

/// Descend left iff feature <= threshold.
pub fn tree_predict(tree: &TreeNode, x: &[f64]) -> usize {
    match tree {
        TreeNode::Leaf { class_label, .. } => *class_label,
        TreeNode::Internal { feature_index, threshold, left, right } => {
            if x[*feature_index] <= *threshold {
                tree_predict(left, x)
            } else {
                tree_predict(right, x)
            }
        }
    }
}

pub fn tree_depth(tree: &TreeNode) -> usize {
    match tree {
        TreeNode::Leaf { .. } => 0,
        TreeNode::Internal { left, right, .. } => 1 + tree_depth(left).max(tree_depth(right)),
    }
}

/// All internal-node thresholds, grouped as (feature_index, threshold).
pub fn tree_splits(tree: &TreeNode) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    fn walk(node: &TreeNode, out: &mut Vec<(usize, f64)>) {
        if let TreeNode::Internal { feature_index, threshold, left, right } = node {
            out.push((*feature_index, *threshold));
            walk(left, out);
            walk(right, out);
        }
    }
    walk(tree, &mut out);
    out
}

/// Indented text rendering, one `|   ` prefix per ancestor level:
/// internal nodes emit `|--- <name> <= <t>` / `|--- <name> >  <t>`,
/// leaves emit `|--- class: Cluster_<label>`. Thresholds show two decimals.
pub fn export_text(tree: &TreeNode, feature_names: &[String]) -> String {
    let mut out = String::new();
    fn walk(node: &TreeNode, names: &[String], depth: usize, out: &mut String) {
        let indent = "|   ".repeat(depth);
        match node {
            TreeNode::Leaf { class_label, .. } => {
                out.push_str(&format!("{indent}|--- class: Cluster_{class_label}\n"));
            }
            TreeNode::Internal { feature_index, threshold, left, right } => {
                let name = &names[*feature_index];
                out.push_str(&format!("{indent}|--- {name} <= {threshold:.2}\n"));
                walk(left, names, depth + 1, out);
                out.push_str(&format!("{indent}|--- {name} >  {threshold:.2}\n"));
                walk(right, names, depth + 1, out);
            }
        }
    }
    walk(tree, feature_names, 0, &mut out);
    out
}

/// One conjunction of half-open interval conditions per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    /// Per referenced feature: (feature_index, lower bound exclusive, upper bound inclusive).
    pub conditions: Vec<(usize, Option<f64>, Option<f64>)>,
    pub class_label: usize,
}

impl Rule {
    pub fn matches(&self, x: &[f64]) -> bool {
        self.conditions.iter().all(|&(f, lo, hi)| {
            lo.is_none_or(|l| x[f] > l) && hi.is_none_or(|h| x[f] <= h)
        })
    }
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub text: String,
}

/// One rule per root-to-leaf path, with repeated conditions on the same
/// feature folded into the tightest interval.
pub fn extract_rules(tree: &TreeNode, feature_names: &[String]) -> RuleSet {
    let mut rules = Vec::new();
    // (feature, exclusive lower, inclusive upper)
    fn walk(node: &TreeNode, path: &mut Vec<(Option<f64>, Option<f64>)>, rules: &mut Vec<Rule>) {
        match node {
            TreeNode::Leaf { class_label, .. } => {
                let conditions = path
                    .iter()
                    .enumerate()
                    .filter(|(_, (lo, hi))| lo.is_some() || hi.is_some())
                    .map(|(f, &(lo, hi))| (f, lo, hi))
                    .collect();
                rules.push(Rule { conditions, class_label: *class_label });
            }
            TreeNode::Internal { feature_index, threshold, left, right } => {
                let f = *feature_index;
                let saved = path[f];
                // left: feature <= threshold, tightening the upper bound
                path[f].1 = Some(saved.1.map_or(*threshold, |h: f64| h.min(*threshold)));
                walk(left, path, rules);
                path[f] = saved;
                // right: feature > threshold, tightening the lower bound
                path[f].0 = Some(saved.0.map_or(*threshold, |l: f64| l.max(*threshold)));
                walk(right, path, rules);
                path[f] = saved;
            }
        }
    }
    let d = feature_names.len();
    let mut path = vec![(None, None); d];
    walk(tree, &mut path, &mut rules);

    let mut text = String::new();
    for rule in &rules {
        if rule.conditions.is_empty() {
            text.push_str(&format!("IF true THEN Cluster_{}\n", rule.class_label));
            continue;
        }
        let conds: Vec<String> = rule
            .conditions
            .iter()
            .map(|&(f, lo, hi)| {
                let name = &feature_names[f];
                match (lo, hi) {
                    (Some(l), Some(h)) => format!("{l} < {name} <= {h}"),
                    (Some(l), None) => format!("{name} > {l}"),
                    (None, Some(h)) => format!("{name} <= {h}"),
                    (None, None) => unreachable!(),
                }
            })
            .collect();
        text.push_str(&format!(
            "IF {} THEN Cluster_{}\n",
            conds.join(" AND "),
            rule.class_label
        ));
    }
    RuleSet { rules, text }
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("input_{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[10, 0]), 0.0);
        assert_eq!(gini(&[5, 5]), 0.5);
        assert_eq!(gini(&[1, 1, 1, 1]), 0.75);
        assert_eq!(gini(&[]), 0.0);
    }

    #[test]
    fn pure_data_is_a_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![1, 1, 1];
        let tree = tree_fit(&x, &y, 5, 2).unwrap();
        assert_eq!(tree, TreeNode::Leaf { class_label: 1, class_counts: vec![0, 3] });
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0, 1];
        let tree = tree_fit(&x, &y, 5, 2).unwrap();
        match &tree {
            TreeNode::Internal { feature_index, threshold, left, right } => {
                assert_eq!(*feature_index, 0);
                assert_eq!(*threshold, 0.5);
                assert_eq!(tree_predict(left, &[0.0]), 0);
                assert_eq!(tree_predict(right, &[1.0]), 1);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn prediction_at_threshold_goes_left() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0, 1];
        let tree = tree_fit(&x, &y, 5, 2).unwrap();
        assert_eq!(tree_predict(&tree, &[0.5]), 0);
    }

    #[test]
    fn unbounded_tree_reaches_zero_training_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = (0..20).map(|_| rng.gen_range(0..2)).collect();
        let tree = tree_fit(&x, &y, usize::MAX, 2).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(tree_predict(&tree, xi), yi);
        }
    }

    /// Exhaustive reference: the minimal weighted Gini over every
    /// feature and midpoint candidate at a node.
    fn exhaustive_best_impurity(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Option<f64> {
        let d = x[0].len();
        let mut best: Option<f64> = None;
        for f in 0..d {
            let mut vals: Vec<f64> = x.iter().map(|p| p[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in 0..vals.len().saturating_sub(1) {
                let t = vals[w] + (vals[w + 1] - vals[w]) / 2.0;
                let mut lc = vec![0usize; n_classes];
                let mut rc = vec![0usize; n_classes];
                for (p, &label) in x.iter().zip(y) {
                    if p[f] <= t {
                        lc[label] += 1;
                    } else {
                        rc[label] += 1;
                    }
                }
                let nl: usize = lc.iter().sum();
                let nr: usize = rc.iter().sum();
                let imp = (nl as f64 * gini(&lc) + nr as f64 * gini(&rc)) / x.len() as f64;
                if best.is_none_or(|b| imp < b) {
                    best = Some(imp);
                }
            }
        }
        best
    }

    #[test]
    fn chosen_splits_are_impurity_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..10 {
            let n = 30;
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let n_classes = 3;
            let split = best_split(&x, &y, n_classes).unwrap();
            let oracle = exhaustive_best_impurity(&x, &y, n_classes).unwrap();
            assert!(
                (split.impurity - oracle).abs() < 1e-12,
                "trial {trial}: chosen {} vs oracle {oracle}",
                split.impurity
            );
        }
    }

    #[test]
    fn export_text_layout() {
        let tree = TreeNode::Internal {
            feature_index: 0,
            threshold: 4.96,
            left: Box::new(TreeNode::Internal {
                feature_index: 0,
                threshold: 4.92,
                left: Box::new(TreeNode::Internal {
                    feature_index: 0,
                    threshold: 4.89,
                    left: Box::new(TreeNode::Leaf { class_label: 3, class_counts: vec![] }),
                    right: Box::new(TreeNode::Leaf { class_label: 1, class_counts: vec![] }),
                }),
                right: Box::new(TreeNode::Leaf { class_label: 2, class_counts: vec![] }),
            }),
            right: Box::new(TreeNode::Leaf { class_label: 0, class_counts: vec![] }),
        };
        let text = export_text(&tree, &default_feature_names(1));
        let expected = "\
|--- input_0 <= 4.96
|   |--- input_0 <= 4.92
|   |   |--- input_0 <= 4.89
|   |   |   |--- class: Cluster_3
|   |   |--- input_0 >  4.89
|   |   |   |--- class: Cluster_1
|   |--- input_0 >  4.92
|   |   |--- class: Cluster_2
|--- input_0 >  4.96
|   |--- class: Cluster_0
";
        assert_eq!(text, expected);
    }

    #[test]
    fn export_text_single_leaf() {
        let tree = TreeNode::Leaf { class_label: 2, class_counts: vec![0, 0, 1] };
        assert_eq!(export_text(&tree, &default_feature_names(1)), "|--- class: Cluster_2\n");
    }

    #[test]
    fn rules_fold_redundant_conditions() {
        let tree = TreeNode::Internal {
            feature_index: 0,
            threshold: 5.0,
            left: Box::new(TreeNode::Internal {
                feature_index: 0,
                threshold: 3.0,
                left: Box::new(TreeNode::Leaf { class_label: 0, class_counts: vec![] }),
                right: Box::new(TreeNode::Leaf { class_label: 1, class_counts: vec![] }),
            }),
            right: Box::new(TreeNode::Leaf { class_label: 2, class_counts: vec![] }),
        };
        let rs = extract_rules(&tree, &default_feature_names(1));
        assert_eq!(rs.rules.len(), 3);
        // x <= 5 and x <= 3 folds to x <= 3
        assert_eq!(rs.rules[0].conditions, vec![(0, None, Some(3.0))]);
        assert_eq!(rs.rules[1].conditions, vec![(0, Some(3.0), Some(5.0))]);
        assert_eq!(rs.rules[2].conditions, vec![(0, Some(5.0), None)]);
    }

    #[test]
    fn depth_zero_tree_gives_one_unconditional_rule() {
        let tree = TreeNode::Leaf { class_label: 0, class_counts: vec![1] };
        let rs = extract_rules(&tree, &default_feature_names(2));
        assert_eq!(rs.rules.len(), 1);
        assert!(rs.rules[0].conditions.is_empty());
        assert!(rs.rules[0].matches(&[123.0, -4.0]));
    }

    #[test]
    fn rules_partition_the_space_and_agree_with_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let y: Vec<usize> = x
            .iter()
            .map(|p| if p[0] > 0.0 { 1 } else if p[1] > 0.0 { 2 } else { 0 })
            .collect();
        let tree = tree_fit(&x, &y, 4, 2).unwrap();
        let rs = extract_rules(&tree, &default_feature_names(2));
        for _ in 0..100 {
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let matching: Vec<&Rule> = rs.rules.iter().filter(|r| r.matches(&p)).collect();
            assert_eq!(matching.len(), 1, "point {p:?} matched {} rules", matching.len());
            assert_eq!(matching[0].class_label, tree_predict(&tree, &p));
        }
    }

    #[test]
    fn max_depth_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..1).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let y: Vec<usize> = (0..60).map(|_| rng.gen_range(0..4)).collect();
        for max_depth in [1, 2, 3] {
            let tree = tree_fit(&x, &y, max_depth, 2).unwrap();
            assert!(tree_depth(&tree) <= max_depth);
        }
    }

    #[test]
    fn label_permutation_leaves_split_structure_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.gen_range(-5.0..5.0)])
            .collect();
        let y: Vec<usize> = x.iter().map(|p| if p[0] <= 0.0 { 0 } else { 1 }).collect();
        let permuted: Vec<usize> = y.iter().map(|&l| 1 - l).collect();
        let t1 = tree_fit(&x, &y, 3, 2).unwrap();
        let t2 = tree_fit(&x, &permuted, 3, 2).unwrap();
        assert_eq!(tree_splits(&t1), tree_splits(&t2));
    }
}
