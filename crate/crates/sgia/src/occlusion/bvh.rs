//! Triangle BVH: median-split build, any-hit ray queries for occlusion
//! rays, and nearest-point queries for surfel-to-mesh transfer.

use crate::math::V3;
use crate::{Result, SgiaError};

#[derive(Debug, Clone)]
struct Node {
    lo: V3,
    hi: V3,
    /// Leaf: range [start, start+count) into `order`. Inner: count == 0,
    /// `start` is the left child index and `right` the right child index.
    start: usize,
    count: usize,
    right: usize,
}

const LEAF_SIZE: usize = 4;

/// Bounding volume hierarchy over a triangle mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle vertex positions, indexed via `order`.
    tris: Vec<[V3; 3]>,
    order: Vec<u32>,
}

fn tri_bounds(t: &[V3; 3]) -> (V3, V3) {
    (t[0].inf(&t[1]).inf(&t[2]), t[0].sup(&t[1]).sup(&t[2]))
}

impl Bvh {
    pub fn build(vertices: &[V3], faces: &[[u32; 3]]) -> Result<Bvh> {
        if faces.is_empty() {
            return Err(SgiaError::InvalidInput("BVH over an empty mesh".into()));
        }
        for f in faces {
            for &i in f {
                if i as usize >= vertices.len() {
                    return Err(SgiaError::InvalidInput("face index out of range".into()));
                }
            }
        }
        let tris: Vec<[V3; 3]> = faces
            .iter()
            .map(|f| [vertices[f[0] as usize], vertices[f[1] as usize], vertices[f[2] as usize]])
            .collect();
        let centroids: Vec<V3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len());
        build_node(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        Ok(Bvh { nodes, tris, order })
    }

    pub fn n_triangles(&self) -> usize {
        self.tris.len()
    }

    /// True if any triangle intersects the ray at t in (t_min, t_max).
    pub fn any_hit(&self, origin: &V3, dir: &V3, t_min: f64, t_max: f64) -> bool {
        let inv = V3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = [0usize; 64];
        let mut top = 0;
        stack[top] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top]];
            if !slab_hit(&node.lo, &node.hi, origin, &inv, t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                for k in node.start..node.start + node.count {
                    let tri = &self.tris[self.order[k] as usize];
                    if let Some(t) = ray_triangle(origin, dir, tri) {
                        if t > t_min && t < t_max {
                            return true;
                        }
                    }
                }
            } else {
                stack[top] = node.start;
                stack[top + 1] = node.right;
                top += 2;
            }
        }
        false
    }

    /// Closest point on the mesh surface to `p`.
    pub fn nearest_point(&self, p: &V3) -> NearestHit {
        let mut best = NearestHit {
            point: self.tris[0][0],
            tri: self.order.first().map(|&i| i as usize).unwrap_or(0),
            bary: [1.0, 0.0, 0.0],
            dist2: f64::INFINITY,
        };
        self.nearest_rec(0, p, &mut best);
        best
    }

    fn nearest_rec(&self, node_idx: usize, p: &V3, best: &mut NearestHit) {
        let node = &self.nodes[node_idx];
        if aabb_dist2(&node.lo, &node.hi, p) >= best.dist2 {
            return;
        }
        if node.count > 0 {
            for k in node.start..node.start + node.count {
                let ti = self.order[k] as usize;
                let (q, bary) = closest_point_triangle(p, &self.tris[ti]);
                let d2 = (p - q).norm_squared();
                if d2 < best.dist2 {
                    *best = NearestHit { point: q, tri: ti, bary, dist2: d2 };
                }
            }
        } else {
            // visit the closer child first for tighter pruning
            let (l, r) = (node.start, node.right);
            let dl = aabb_dist2(&self.nodes[l].lo, &self.nodes[l].hi, p);
            let dr = aabb_dist2(&self.nodes[r].lo, &self.nodes[r].hi, p);
            let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
            self.nearest_rec(first, p, best);
            self.nearest_rec(second, p, best);
        }
    }
}

/// Result of a nearest-point query.
#[derive(Debug, Clone, Copy)]
pub struct NearestHit {
    pub point: V3,
    /// Original face index.
    pub tri: usize,
    pub bary: [f64; 3],
    pub dist2: f64,
}

fn build_node(tris: &[[V3; 3]], centroids: &[V3], order: &mut [u32], start: usize, count: usize, nodes: &mut Vec<Node>) -> usize {
    let slice = &order[start..start + count];
    let mut lo = V3::from_element(f64::INFINITY);
    let mut hi = V3::from_element(f64::NEG_INFINITY);
    let mut clo = lo;
    let mut chi = hi;
    for &i in slice.iter() {
        let (tl, th) = tri_bounds(&tris[i as usize]);
        lo = lo.inf(&tl);
        hi = hi.sup(&th);
        clo = clo.inf(&centroids[i as usize]);
        chi = chi.sup(&centroids[i as usize]);
    }
    let idx = nodes.len();
    nodes.push(Node { lo, hi, start, count, right: 0 });
    if count <= LEAF_SIZE {
        return idx;
    }
    let extent = chi - clo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    order[start..start + count]
        .sort_by(|&a, &b| centroids[a as usize][axis].partial_cmp(&centroids[b as usize][axis]).unwrap().then(a.cmp(&b)));
    let half = count / 2;
    let left = build_node(tris, centroids, order, start, half, nodes);
    let right = build_node(tris, centroids, order, start + half, count - half, nodes);
    nodes[idx].count = 0;
    nodes[idx].start = left;
    nodes[idx].right = right;
    idx
}

fn aabb_dist2(lo: &V3, hi: &V3, p: &V3) -> f64 {
    let mut d2 = 0.0;
    for axis in 0..3 {
        let d = (lo[axis] - p[axis]).max(0.0).max(p[axis] - hi[axis]);
        d2 += d * d;
    }
    d2
}

fn slab_hit(lo: &V3, hi: &V3, origin: &V3, inv_dir: &V3, t_min: f64, t_max: f64) -> bool {
    let mut t0 = t_min;
    let mut t1 = t_max;
    for axis in 0..3 {
        let a = (lo[axis] - origin[axis]) * inv_dir[axis];
        let b = (hi[axis] - origin[axis]) * inv_dir[axis];
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Moller-Trumbore; returns the ray parameter of the intersection, if any.
pub fn ray_triangle(origin: &V3, dir: &V3, tri: &[V3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pv = dir.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = origin - tri[0];
    let u = tv.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = tv.cross(&e1);
    let v = dir.dot(&qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&qv) * inv)
}

/// Closest point on a triangle and its barycentric coordinates (Ericson).
pub fn closest_point_triangle(p: &V3, tri: &[V3; 3]) -> (V3, [f64; 3]) {
    let (a, b, c) = (tri[0], tri[1], tri[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}
