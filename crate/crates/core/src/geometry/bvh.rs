//! Bounding volume hierarchy over triangles.
//!
//! Built once by median split along the longest centroid axis. Queries are
//! exact: pruning only discards boxes that provably cannot hold a better
//! answer, so results equal an exhaustive scan.

use super::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Whether the segment `origin + t * dir`, `t` in `[0, t_max]`, touches the box.
    pub fn hits_segment(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> bool {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for i in 0..3 {
            if dir[i].abs() < 1e-300 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let mut ta = (self.min[i] - origin[i]) * inv;
            let mut tb = (self.max[i] - origin[i]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min.x && x <= self.max.x && y >= self.min.y && y <= self.max.y
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: index range into `order`. Inner: `start` is the right child.
    start: u32,
    count: u32,
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(boxes: &[Aabb]) -> Self {
        let mut order: Vec<u32> = (0..boxes.len() as u32).collect();
        let centroids: Vec<Vec3> = boxes.iter().map(|b| (b.min + b.max) * 0.5).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1);
        if !boxes.is_empty() {
            Self::build_node(boxes, &centroids, &mut order, 0, boxes.len(), &mut nodes);
        }
        Self { nodes, order }
    }

    fn build_node(
        boxes: &[Aabb],
        centroids: &[Vec3],
        order: &mut [u32],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &i in &order[start..end] {
            bounds.merge(&boxes[i as usize]);
            cbounds.grow(&centroids[i as usize]);
        }
        let index = nodes.len();
        nodes.push(Node {
            bounds,
            start: start as u32,
            count: (end - start) as u32,
        });
        if end - start <= LEAF_SIZE {
            return index;
        }
        let ext = cbounds.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        order[start..end].sort_by(|&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        Self::build_node(boxes, centroids, order, start, mid, nodes);
        let right = Self::build_node(boxes, centroids, order, mid, end, nodes);
        nodes[index].start = right as u32;
        nodes[index].count = 0;
        index
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map(|n| n.bounds).unwrap_or_else(Aabb::empty)
    }

    /// Nearest primitive by a caller-supplied exact squared distance.
    /// Ties resolve to the lower primitive index.
    pub fn nearest<F>(&self, p: &Vec3, mut dist2: F) -> Option<(usize, f64)>
    where
        F: FnMut(usize) -> f64,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if let Some((_, bd)) = best {
                if node.bounds.distance_squared(p) > bd {
                    continue;
                }
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &prim in &self.order[s..s + node.count as usize] {
                    let prim = prim as usize;
                    let d = dist2(prim);
                    let better = match best {
                        None => true,
                        Some((bi, bd)) => d < bd || (d == bd && prim < bi),
                    };
                    if better {
                        best = Some((prim, d));
                    }
                }
            } else {
                let left = ni + 1;
                let right = node.start as usize;
                let dl = self.nodes[left].bounds.distance_squared(p);
                let dr = self.nodes[right].bounds.distance_squared(p);
                // Push the farther child first so the nearer one is visited next.
                if dl <= dr {
                    stack.push(right);
                    stack.push(left);
                } else {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        best
    }

    /// Calls `visit` for every primitive whose box the segment touches.
    pub fn for_each_on_segment<F>(&self, origin: &Vec3, dir: &Vec3, t_max: f64, mut visit: F)
    where
        F: FnMut(usize),
    {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !node.bounds.hits_segment(origin, dir, t_max) {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &prim in &self.order[s..s + node.count as usize] {
                    visit(prim as usize);
                }
            } else {
                stack.push(node.start as usize);
                stack.push(ni + 1);
            }
        }
    }
}
