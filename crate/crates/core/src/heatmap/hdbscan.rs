//! HDBSCAN over small point sets (O(n^2) memory and time).
//!
//! Mutual-reachability minimum spanning tree, single-linkage hierarchy,
//! condensed tree with `min_cluster_size`, excess-of-mass cluster selection.
//! The root is only a candidate with `allow_single_cluster`, in which case
//! it keeps just the points that persist to its largest lambda.

/// Label for points that belong to no cluster.
pub const NOISE: i64 = -1;

/// Lambda assigned to zero-length merges (duplicate points).
const MAX_LAMBDA: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbour count (including the point itself) defining core distance.
    pub min_samples: usize,
    pub allow_single_cluster: bool,
}

/// Cluster labels (`0..k` or [`NOISE`]) for each input point.
pub fn hdbscan(points: &[Vec<f64>], params: HdbscanParams) -> Vec<i64> {
    let n = points.len();
    let mcs = params.min_cluster_size.max(2);
    if n < mcs || n < 2 {
        return vec![NOISE; n];
    }
    let dist = |a: usize, b: usize| -> f64 {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };

    let k = params.min_samples.clamp(1, n);
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).map(|j| dist(i, j)).collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect();
    let reach = |a: usize, b: usize| dist(a, b).max(core[a]).max(core[b]);

    // Prim's algorithm on the dense mutual-reachability graph.
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if !in_tree[j] {
                let d = reach(current, j);
                if d < best[j] {
                    best[j] = d;
                    from[j] = current;
                }
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .expect("vertices remain");
        edges.push((from[next], next, best[next]));
        in_tree[next] = true;
        current = next;
    }
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));

    let tree = single_linkage(n, &edges);
    let condensed = condense(n, &tree, mcs);
    select_and_label(n, &condensed, params.allow_single_cluster)
}

struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Merge> {
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut size = vec![1usize; 2 * n - 1];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n - 1);
    for (i, &(a, b, d)) in edges.iter().enumerate() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let node = n + i;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: d,
            size: size[node],
        });
    }
    merges
}

/// Row of the condensed tree: `child` is a point index when `child_size == 1`
/// and it is not a cluster id, otherwise a cluster id.
struct CondensedRow {
    parent: usize,
    child: usize,
    lambda: f64,
    child_size: usize,
    child_is_cluster: bool,
}

fn condense(n: usize, tree: &[Merge], mcs: usize) -> Vec<CondensedRow> {
    let root = 2 * n - 2;
    let node_size = |node: usize| if node < n { 1 } else { tree[node - n].size };
    let mut relabel = vec![usize::MAX; 2 * n - 1];
    relabel[root] = 0;
    let mut next_label = 1;
    let mut ignore = vec![false; 2 * n - 1];
    let mut rows = Vec::new();

    let leaves_of = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                stack.push(tree[x - n].right);
                stack.push(tree[x - n].left);
            }
        }
        out
    };

    // breadth-first from the root
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n || ignore[node] {
            continue;
        }
        let m = &tree[node - n];
        queue.push_back(m.left);
        queue.push_back(m.right);
        let lambda = if m.distance > 0.0 {
            (1.0 / m.distance).min(MAX_LAMBDA)
        } else {
            MAX_LAMBDA
        };
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let parent = relabel[node];
        let fall_out = |child: usize, ignore: &mut Vec<bool>, rows: &mut Vec<CondensedRow>| {
            for leaf in leaves_of(child) {
                rows.push(CondensedRow {
                    parent,
                    child: leaf,
                    lambda,
                    child_size: 1,
                    child_is_cluster: false,
                });
            }
            mark_subtree(child, n, tree, ignore);
        };
        if ls >= mcs && rs >= mcs {
            for (child, size) in [(m.left, ls), (m.right, rs)] {
                relabel[child] = next_label;
                rows.push(CondensedRow {
                    parent,
                    child: next_label,
                    lambda,
                    child_size: size,
                    child_is_cluster: true,
                });
                next_label += 1;
            }
        } else if ls < mcs && rs < mcs {
            fall_out(m.left, &mut ignore, &mut rows);
            fall_out(m.right, &mut ignore, &mut rows);
        } else if ls < mcs {
            relabel[m.right] = parent;
            fall_out(m.left, &mut ignore, &mut rows);
        } else {
            relabel[m.left] = parent;
            fall_out(m.right, &mut ignore, &mut rows);
        }
    }
    rows
}

fn mark_subtree(node: usize, n: usize, tree: &[Merge], ignore: &mut [bool]) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        ignore[x] = true;
        if x >= n {
            stack.push(tree[x - n].left);
            stack.push(tree[x - n].right);
        }
    }
}

fn select_and_label(n: usize, rows: &[CondensedRow], allow_single: bool) -> Vec<i64> {
    let n_clusters = rows
        .iter()
        .filter(|r| r.child_is_cluster)
        .map(|r| r.child + 1)
        .max()
        .unwrap_or(1);
    let mut birth = vec![0.0; n_clusters];
    let mut cluster_parent = vec![usize::MAX; n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for r in rows.iter().filter(|r| r.child_is_cluster) {
        birth[r.child] = r.lambda;
        cluster_parent[r.child] = r.parent;
        children[r.parent].push(r.child);
    }
    let mut stability = vec![0.0; n_clusters];
    for r in rows {
        stability[r.parent] += (r.lambda - birth[r.parent]) * r.child_size as f64;
    }

    // Children always carry larger ids than their parent.
    let mut selected = vec![false; n_clusters];
    let first = if allow_single { 0 } else { 1 };
    for c in (first..n_clusters).rev() {
        let subtree: f64 = children[c].iter().map(|&ch| stability[ch]).sum();
        if children[c].is_empty() || subtree <= stability[c] {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(d) = stack.pop() {
                selected[d] = false;
                stack.extend(children[d].iter().copied());
            }
        } else {
            stability[c] = subtree;
        }
    }

    let mut label_of = vec![NOISE; n_clusters];
    let mut next = 0;
    for c in 0..n_clusters {
        if selected[c] {
            label_of[c] = next;
            next += 1;
        }
    }

    let root_max_lambda = rows
        .iter()
        .filter(|r| r.parent == 0)
        .map(|r| r.lambda)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut labels = vec![NOISE; n];
    for r in rows.iter().filter(|r| !r.child_is_cluster) {
        let mut c = r.parent;
        while c != 0 && !selected[c] {
            c = cluster_parent[c];
        }
        if c != 0 || (selected[0] && r.lambda >= root_max_lambda) {
            labels[r.child] = label_of[c];
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_blob(cx: f64, cy: f64, side: usize, step: f64) -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for i in 0..side {
            for j in 0..side {
                pts.push(vec![cx + i as f64 * step, cy + j as f64 * step]);
            }
        }
        pts
    }

    #[test]
    fn two_separated_blobs() {
        let mut pts = grid_blob(0.0, 0.0, 5, 1.0);
        pts.extend(grid_blob(100.0, 100.0, 5, 1.0));
        let labels = hdbscan(
            &pts,
            HdbscanParams {
                min_cluster_size: 5,
                min_samples: 3,
                allow_single_cluster: false,
            },
        );
        let a = labels[0];
        let b = labels[25];
        assert!(a >= 0 && b >= 0 && a != b);
        assert!(labels[..25].iter().all(|&l| l == a));
        assert!(labels[25..].iter().all(|&l| l == b));
    }

    #[test]
    fn too_few_points_are_noise() {
        let pts = grid_blob(0.0, 0.0, 2, 1.0);
        let labels = hdbscan(
            &pts,
            HdbscanParams {
                min_cluster_size: 15,
                min_samples: 5,
                allow_single_cluster: false,
            },
        );
        assert!(labels.iter().all(|&l| l == NOISE));
    }
}
