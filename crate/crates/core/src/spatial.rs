//! Nearest-point and nearest-triangle queries.
//!
//! Both structures are pure accelerators: every query returns exactly what a
//! brute-force scan with the same distance function returns, including the
//! lowest-index tie-break.

use crate::geometry::Vec3;

/// Closest point of the closed triangle `abc` to `p`.
///
/// Zero-area triangles fall back to the closest point on their edges.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let scale = ab.norm_squared().max(ac.norm_squared()).max((c - b).norm_squared());
    if ab.cross(&ac).norm_squared() <= 1e-24 * scale * scale {
        return [closest_point_on_segment(p, a, b), closest_point_on_segment(p, b, c), closest_point_on_segment(p, c, a)]
            .into_iter()
            .min_by(|x, y| (x - p).norm_squared().total_cmp(&(y - p).norm_squared()))
            .unwrap();
    }

    // Voronoi-region walk over vertices, edges, then the face interior.
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn closest_point_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Static 3D k-d tree over a point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<KdNode>,
    root: usize,
}

#[derive(Debug, Clone)]
struct KdNode {
    index: usize,
    axis: usize,
    left: usize,
    right: usize,
}

const NIL: usize = usize::MAX;

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build(points, &mut order[..], &mut nodes);
        Self {
            points: points.to_vec(),
            nodes,
            root,
        }
    }

    fn build(points: &[Vec3], idx: &mut [usize], nodes: &mut Vec<KdNode>) -> usize {
        if idx.is_empty() {
            return NIL;
        }
        let (lo, hi) = idx.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), &i| (lo.inf(&points[i]), hi.sup(&points[i])),
        );
        let axis = (hi - lo).imax();
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let index = idx[mid];
        let (left_idx, rest) = idx.split_at_mut(mid);
        let right_idx = &mut rest[1..];
        let slot = nodes.len();
        nodes.push(KdNode {
            index,
            axis,
            left: NIL,
            right: NIL,
        });
        let left = Self::build(points, left_idx, nodes);
        let right = Self::build(points, right_idx, nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        slot
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the nearest point (lowest index on ties).
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.root == NIL {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (usize, f64)) {
        let n = &self.nodes[node];
        let p = &self.points[n.index];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && n.index < best.0) {
            *best = (n.index, d2);
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if near != NIL {
            self.search(near, q, best);
        }
        // `<=` keeps equal-distance candidates reachable for the index tie-break.
        if far != NIL && diff * diff <= best.1 {
            self.search(far, q, best);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    fn distance_squared(&self, p: &Vec3) -> f64 {
        let d = (self.lo - p).sup(&(p - self.hi)).sup(&Vec3::zeros());
        d.norm_squared()
    }
}

#[derive(Debug, Clone)]
enum BvhNode {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl BvhNode {
    fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { bounds, .. } | BvhNode::Inner { bounds, .. } => bounds,
        }
    }
}

/// Bounding-volume hierarchy over a triangle soup for closest-point queries.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    triangles: Vec<[Vec3; 3]>,
    ids: Vec<usize>,
    nodes: Vec<BvhNode>,
}

const LEAF_SIZE: usize = 4;

/// Result of a closest-triangle query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub triangle: usize,
    pub point: Vec3,
    pub distance: f64,
}

impl TriangleBvh {
    pub fn new(triangles: Vec<[Vec3; 3]>) -> Self {
        let mut ids: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<Vec3> = triangles
            .iter()
            .map(|t| (t[0] + t[1] + t[2]) / 3.0)
            .collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            Self::build(&triangles, &centroids, &mut ids, 0, triangles.len(), &mut nodes);
        }
        Self {
            triangles,
            ids,
            nodes,
        }
    }

    pub fn from_mesh(mesh: &crate::geometry::TriangleMesh) -> Self {
        Self::new((0..mesh.patch_count()).map(|p| mesh.triangle(p)).collect())
    }

    fn build(
        tris: &[[Vec3; 3]],
        centroids: &[Vec3],
        ids: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<BvhNode>,
    ) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &i in &ids[start..end] {
            for v in &tris[i] {
                bounds.grow(v);
            }
            cbounds.grow(&centroids[i]);
        }
        let slot = nodes.len();
        if end - start <= LEAF_SIZE {
            nodes.push(BvhNode::Leaf { bounds, start, end });
            return slot;
        }
        nodes.push(BvhNode::Leaf { bounds, start, end });
        let axis = (cbounds.hi - cbounds.lo).imax();
        let mid = (start + end) / 2;
        ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = Self::build(tris, centroids, ids, start, mid, nodes);
        let right = Self::build(tris, centroids, ids, mid, end, nodes);
        nodes[slot] = BvhNode::Inner {
            bounds: nodes[left].bounds().merge(nodes[right].bounds()),
            left,
            right,
        };
        slot
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Closest triangle to `p` (lowest index on exact distance ties).
    pub fn closest(&self, p: &Vec3) -> Option<ClosestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, Vec3::zeros(), f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            match &self.nodes[n] {
                BvhNode::Leaf { bounds, start, end } => {
                    if bounds.distance_squared(p) > best.2 {
                        continue;
                    }
                    for &t in &self.ids[*start..*end] {
                        let [a, b, c] = &self.triangles[t];
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d2 = (q - p).norm_squared();
                        if d2 < best.2 || (d2 == best.2 && t < best.0) {
                            best = (t, q, d2);
                        }
                    }
                }
                BvhNode::Inner { bounds, left, right } => {
                    if bounds.distance_squared(p) > best.2 {
                        continue;
                    }
                    let dl = self.nodes[*left].bounds().distance_squared(p);
                    let dr = self.nodes[*right].bounds().distance_squared(p);
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        Some(ClosestHit {
            triangle: best.0,
            point: best.1,
            distance: best.2.sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_point(rng: &mut ChaCha8Rng) -> Vec3 {
        Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    }

    #[test]
    fn kdtree_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..500).map(|_| rand_point(&mut rng)).collect();
        let tree = KdTree::new(&pts);
        for _ in 0..500 {
            let q = rand_point(&mut rng) * 1.3;
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            assert_eq!(tree.nearest(&q).unwrap(), brute);
        }
    }

    #[test]
    fn kdtree_breaks_ties_low() {
        let pts = vec![Vec3::x(), -Vec3::x(), Vec3::x(), -Vec3::x()];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vec3::zeros()).unwrap().0, 0);
        assert_eq!(tree.nearest(&(Vec3::x() * 0.5)).unwrap().0, 0);
        assert_eq!(tree.nearest(&(-Vec3::x() * 0.5)).unwrap().0, 1);
    }

    #[test]
    fn bvh_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tris: Vec<[Vec3; 3]> = (0..300)
            .map(|_| {
                let c = rand_point(&mut rng);
                [c, c + rand_point(&mut rng) * 0.1, c + rand_point(&mut rng) * 0.1]
            })
            .collect();
        let bvh = TriangleBvh::new(tris.clone());
        for _ in 0..300 {
            let q = rand_point(&mut rng) * 1.5;
            let brute = tris
                .iter()
                .map(|[a, b, c]| (closest_point_on_triangle(&q, a, b, c) - q).norm())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(bvh.closest(&q).unwrap().distance, brute);
        }
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        let inside = Vec3::new(0.2, 0.2, 0.7);
        assert!((closest_point_on_triangle(&inside, &a, &b, &c) - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c), a);
        let beyond_hyp = Vec3::new(1.0, 1.0, 0.0);
        assert!((closest_point_on_triangle(&beyond_hyp, &a, &b, &c) - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
        // Collinear triangle.
        let q = closest_point_on_triangle(&Vec3::new(0.5, 1.0, 0.0), &a, &b, &(b * 2.0));
        assert!((q - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
    }
}
