//! Axis-aligned bounding volume hierarchy over mesh triangles.

use nalgebra::{Point3, Vector3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::from(Vector3::repeat(f64::INFINITY)),
            max: Point3::from(Vector3::repeat(f64::NEG_INFINITY)),
        }
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }

    /// Slab test for the ray `origin + t * dir, t >= 0`.
    pub fn hit_by_ray(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>) -> bool {
        let mut t_min: f64 = 0.0;
        let mut t_max = f64::INFINITY;
        for k in 0..3 {
            let t1 = (self.min[k] - origin[k]) * inv_dir[k];
            let t2 = (self.max[k] - origin[k]) * inv_dir[k];
            t_min = t_min.max(t1.min(t2));
            t_max = t_max.min(t1.max(t2));
        }
        t_min <= t_max
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Triangle BVH. Leaves index into a permutation of the face list.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(triangles: &[[Point3<f64>; 3]]) -> Self {
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let boxes: Vec<Aabb> = triangles
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                t.iter().for_each(|p| b.grow(p));
                b
            })
            .collect();
        let centroids: Vec<Point3<f64>> = boxes.iter().map(Aabb::center).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            build_node(&mut nodes, &mut order, 0, triangles.len(), &boxes, &centroids);
        }
        Self { nodes, order }
    }

    /// Visits candidate faces in roughly nearest-first order. `visit` receives
    /// a face index and returns the current best squared distance, which is
    /// used to prune the remaining subtrees.
    pub fn nearest<F: FnMut(usize) -> f64>(&self, p: &Point3<f64>, mut visit: F) {
        if self.nodes.is_empty() {
            return;
        }
        let mut best = f64::INFINITY;
        let mut stack = vec![(0usize, self.nodes[0].bounds().distance_squared(p))];
        while let Some((idx, d2)) = stack.pop() {
            if d2 > best {
                continue;
            }
            match &self.nodes[idx] {
                Node::Leaf { start, end, .. } => {
                    for &face in &self.order[*start..*end] {
                        best = best.min(visit(face));
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_squared(p);
                    let dr = self.nodes[*right].bounds().distance_squared(p);
                    // push the farther child first so the nearer one pops next
                    if dl < dr {
                        stack.push((*right, dr));
                        stack.push((*left, dl));
                    } else {
                        stack.push((*left, dl));
                        stack.push((*right, dr));
                    }
                }
            }
        }
    }

    /// Calls `visit` for every face whose box the ray passes through.
    pub fn ray_candidates<F: FnMut(usize)>(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        mut visit: F,
    ) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if !node.bounds().hit_by_ray(origin, &inv) {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    self.order[*start..*end].iter().for_each(|&f| visit(f));
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centroids: &[Point3<f64>],
) -> usize {
    let mut bounds = Aabb::empty();
    order[start..end].iter().for_each(|&i| bounds.merge(&boxes[i]));
    let idx = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return idx;
    }
    let mut cbox = Aabb::empty();
    order[start..end].iter().for_each(|&i| cbox.grow(&centroids[i]));
    let extent = cbox.max - cbox.min;
    let axis = extent.imax();
    let mid = start + (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis])
    });
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build_node(nodes, order, start, mid, boxes, centroids);
    let right = build_node(nodes, order, mid, end, boxes, centroids);
    nodes[idx] = Node::Inner { bounds, left, right };
    idx
}
