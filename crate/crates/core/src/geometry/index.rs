use super::{ParametricPatch, Shape};
use crate::vec3::{self, Vec3};

const INFLATION: f64 = 0.05;
const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn from_points(points: impl IntoIterator<Item = Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: Vec3) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut b = *self;
        b.grow(other.min);
        b.grow(other.max);
        b
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn extent(&self) -> Vec3 {
        vec3::sub(self.max, self.min)
    }

    pub fn center(&self) -> Vec3 {
        vec3::lerp(self.min, self.max, 0.5)
    }
}

/// Inflates each direction by 5% of the box's own extent in that direction;
/// directions with zero extent use 5% of the largest extent.
pub fn inflate_box(b: &Aabb) -> Aabb {
    let ext = b.extent();
    let largest = ext.iter().cloned().fold(0.0, f64::max);
    let mut out = *b;
    for k in 0..3 {
        let pad = INFLATION * if ext[k] > 0.0 { ext[k] } else { largest };
        out.min[k] -= pad;
        out.max[k] += pad;
    }
    out
}

/// Bounding box of a patch: analytic for lines, planes and Bezier hulls; arc
/// and cylinder extremes from the stationary angles; spheres sampled and
/// padded by the sampling sagitta.
pub(crate) fn patch_bounds(patch: &ParametricPatch) -> Aabb {
    let d = &patch.domain;
    match &patch.shape {
        Shape::Line { .. } => Aabb::from_points([
            patch.eval_unchecked(d.lo).point,
            patch.eval_unchecked(d.hi).point,
        ]),
        Shape::Plane { .. } => Aabb::from_points([
            patch.eval_unchecked([d.lo[0], d.lo[1]]).point,
            patch.eval_unchecked([d.hi[0], d.lo[1]]).point,
            patch.eval_unchecked([d.lo[0], d.hi[1]]).point,
            patch.eval_unchecked([d.hi[0], d.hi[1]]).point,
        ]),
        Shape::BezierCurve { control } | Shape::BezierSurface { control, .. } => {
            Aabb::from_points(control.iter().copied())
        }
        Shape::CircularArc { e1, e2, .. } => {
            let mut b = Aabb::empty();
            for s in arc_angles(d.lo[0], d.hi[0], *e1, *e2) {
                b.grow(patch.eval_unchecked([s, 0.0]).point);
            }
            b
        }
        Shape::Cylinder { axis, e1, .. } => {
            let e2 = vec3::cross(*axis, *e1);
            let mut b = Aabb::empty();
            for s in arc_angles(d.lo[0], d.hi[0], *e1, e2) {
                for t in [d.lo[1], d.hi[1]] {
                    b.grow(patch.eval_unchecked([s, t]).point);
                }
            }
            b
        }
        Shape::Sphere { radius, .. } => {
            let n = 48;
            let mut b = Aabb::empty();
            for j in 0..=n {
                for i in 0..=n {
                    let s = d.lerp([i as f64 / n as f64, j as f64 / n as f64]);
                    b.grow(patch.eval_unchecked(s).point);
                }
            }
            let step = (d.hi[0] - d.lo[0]).max(d.hi[1] - d.lo[1]) / n as f64;
            let pad = radius * (1.0 - (0.5 * step).cos()) * 2.0;
            for k in 0..3 {
                b.min[k] -= pad;
                b.max[k] += pad;
            }
            b
        }
    }
}

/// Domain endpoints plus every angle in `[lo, hi]` where a coordinate of
/// `cos s e1 + sin s e2` is stationary.
fn arc_angles(lo: f64, hi: f64, e1: Vec3, e2: Vec3) -> Vec<f64> {
    let mut out = vec![lo, hi];
    let two_pi = 2.0 * std::f64::consts::PI;
    for k in 0..3 {
        if e1[k] == 0.0 && e2[k] == 0.0 {
            continue;
        }
        let base = e2[k].atan2(e1[k]);
        for half in 0..2 {
            let s0 = base + half as f64 * std::f64::consts::PI;
            let m_lo = ((lo - s0) / two_pi).floor() as i64;
            let m_hi = ((hi - s0) / two_pi).ceil() as i64;
            for m in m_lo..=m_hi {
                let s = s0 + m as f64 * two_pi;
                if s >= lo && s <= hi {
                    out.push(s);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<usize>),
    Split {
        bounds: [Aabb; 2],
        children: [Box<Node>; 2],
    },
}

/// k-d tree over inflated patch bounding boxes.
///
/// Boxes are partitioned by the median of their centres along the widest
/// axis of the centre cloud; every internal node keeps the union box of each
/// child so point queries descend only into children whose union contains
/// the point.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    pub boxes: Vec<Aabb>,
    pub patch_ids: Vec<usize>,
    root: Node,
    root_bounds: Aabb,
}

impl SpatialIndex {
    pub fn build(patches: &[ParametricPatch]) -> Self {
        let boxes: Vec<Aabb> = patches.iter().map(|p| inflate_box(&p.bounding_box())).collect();
        let patch_ids = patches.iter().map(|p| p.id).collect();
        let items: Vec<usize> = (0..boxes.len()).collect();
        let root_bounds = union_of(&boxes, &items);
        let root = split(&boxes, items);
        Self {
            boxes,
            patch_ids,
            root,
            root_bounds,
        }
    }

    /// Ids of every patch whose inflated box contains `point`, ascending.
    pub fn query(&self, point: Vec3) -> Vec<usize> {
        let mut out = Vec::new();
        if self.root_bounds.contains(point) {
            self.visit(&self.root, point, &mut out);
        }
        let mut ids: Vec<usize> = out.into_iter().map(|i| self.patch_ids[i]).collect();
        ids.sort_unstable();
        ids
    }

    fn visit(&self, node: &Node, point: Vec3, out: &mut Vec<usize>) {
        match node {
            Node::Leaf(items) => {
                out.extend(items.iter().copied().filter(|&i| self.boxes[i].contains(point)))
            }
            Node::Split { bounds, children } => {
                for (b, c) in bounds.iter().zip(children) {
                    if b.contains(point) {
                        self.visit(c, point, out);
                    }
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

pub fn build_patch_index(patches: &[ParametricPatch]) -> SpatialIndex {
    SpatialIndex::build(patches)
}

fn union_of(boxes: &[Aabb], items: &[usize]) -> Aabb {
    items
        .iter()
        .fold(Aabb::empty(), |acc, &i| acc.union(&boxes[i]))
}

fn split(boxes: &[Aabb], mut items: Vec<usize>) -> Node {
    if items.len() <= LEAF_SIZE {
        return Node::Leaf(items);
    }
    let centers = Aabb::from_points(items.iter().map(|&i| boxes[i].center()));
    let ext = centers.extent();
    let axis = (0..3)
        .max_by(|&a, &b| ext[a].partial_cmp(&ext[b]).unwrap())
        .unwrap();
    if ext[axis] == 0.0 {
        return Node::Leaf(items);
    }
    items.sort_by(|&a, &b| {
        boxes[a].center()[axis]
            .partial_cmp(&boxes[b].center()[axis])
            .unwrap()
    });
    let right = items.split_off(items.len() / 2);
    let bounds = [union_of(boxes, &items), union_of(boxes, &right)];
    Node::Split {
        bounds,
        children: [Box::new(split(boxes, items)), Box::new(split(boxes, right))],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(id: usize, x0: f64, y0: f64) -> ParametricPatch {
        ParametricPatch::surface(
            id,
            Shape::Plane {
                origin: [x0, y0, 0.0],
                u: [1.0, 0.0, 0.0],
                v: [0.0, 1.0, 0.0],
            },
            [0.0, 0.0],
            [1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn inflation_uses_own_extent_and_largest_for_flat_directions() {
        let b = Aabb {
            min: [0.0, 0.0, 0.0],
            max: [2.0, 1.0, 0.0],
        };
        let i = inflate_box(&b);
        assert!((i.min[0] + 0.1).abs() < 1e-15 && (i.max[1] - 1.05).abs() < 1e-15);
        assert!((i.max[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_patch_queries() {
        let idx = SpatialIndex::build(&[square(7, 0.0, 0.0)]);
        assert_eq!(idx.query([0.5, 0.5, 0.0]), vec![7]);
        assert!(idx.query([10.0, 0.0, 0.0]).is_empty());
    }

    #[test]
    fn shared_edge_returns_both_and_matches_scan() {
        let patches: Vec<_> = (0..20)
            .map(|k| square(k, (k % 5) as f64, (k / 5) as f64))
            .collect();
        let idx = SpatialIndex::build(&patches);
        let on_edge = idx.query([1.0, 0.5, 0.0]);
        assert_eq!(on_edge, vec![0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = [rng.gen_range(-1.0..6.0), rng.gen_range(-1.0..5.0), rng.gen_range(-0.2..0.2)];
            let scan: Vec<usize> = idx
                .boxes
                .iter()
                .enumerate()
                .filter(|(_, b)| b.contains(p))
                .map(|(i, _)| patches[i].id)
                .collect();
            assert_eq!(idx.query(p), scan);
        }
    }

    #[test]
    fn arc_bounds_cover_sampled_points() {
        let arc = ParametricPatch::curve(
            0,
            Shape::CircularArc {
                center: [1.0, 2.0, 0.0],
                radius: 2.0,
                e1: [0.0, 1.0, 0.0],
                e2: [0.0, 0.0, 1.0],
            },
            -2.0,
            2.5,
        )
        .unwrap();
        let b = arc.bounding_box();
        for k in 0..=1000 {
            let s = -2.0 + 4.5 * k as f64 / 1000.0;
            let p = arc.point([s, 0.0]).unwrap();
            for d in 0..3 {
                assert!(p[d] >= b.min[d] - 1e-12 && p[d] <= b.max[d] + 1e-12);
            }
        }
    }
}
