use std::collections::HashMap;

use log::warn;
use nalgebra::{Point3, Unit, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::bvh::{Aabb, Bvh};
use crate::error::{Error, Result};

/// Faces with less area than this are dropped at construction.
pub const MIN_FACE_AREA: f64 = 1e-9;

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Point3<f64>,
    pub face: usize,
    pub distance: f64,
    /// Outward normal of `face`.
    pub normal: Vector3<f64>,
}

/// A point drawn on the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub position: Point3<f64>,
    pub normal: Vector3<f64>,
    pub face: usize,
    pub barycentric: [f64; 3],
}

/// Immutable triangle mesh in millimetres with an attached BVH.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    normals: Vec<Unit<Vector3<f64>>>,
    areas: Vec<f64>,
    closed: bool,
    dropped_faces: usize,
    bvh: Bvh,
}

impl TriangleMesh {
    /// Builds a validated mesh: rejects bad indices, drops degenerate faces and,
    /// for closed meshes, flips the winding if the signed volume is negative.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(bad) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::input(format!("vertex {bad} has non-finite coordinates")));
        }
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::input(format!(
                    "face {i} references a vertex outside 0..{}",
                    vertices.len()
                )));
            }
        }
        let total = faces.len();
        let mut faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| triangle_area(&vertices, f) >= MIN_FACE_AREA)
            .collect();
        let dropped_faces = total - faces.len();
        if dropped_faces > 0 {
            warn!("dropped {dropped_faces} degenerate face(s)");
        }
        if faces.is_empty() {
            return Err(Error::input("mesh has no non-degenerate faces"));
        }
        let closed = is_closed(&faces);
        if closed && signed_volume_of(&vertices, &faces) < 0.0 {
            faces.iter_mut().for_each(|f| f.swap(1, 2));
        }
        if !closed {
            warn!("mesh is not closed; inside/outside tests are unreliable");
        }
        Ok(Self::assemble(vertices, faces, closed, dropped_faces))
    }

    fn assemble(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[usize; 3]>,
        closed: bool,
        dropped_faces: usize,
    ) -> Self {
        let triangles: Vec<[Point3<f64>; 3]> = faces
            .iter()
            .map(|f| [vertices[f[0]], vertices[f[1]], vertices[f[2]]])
            .collect();
        let normals = triangles
            .iter()
            .map(|t| Unit::new_normalize((t[1] - t[0]).cross(&(t[2] - t[0]))))
            .collect();
        let areas = faces.iter().map(|f| triangle_area(&vertices, f)).collect();
        let bvh = Bvh::build(&triangles);
        Self {
            vertices,
            faces,
            normals,
            areas,
            closed,
            dropped_faces,
            bvh,
        }
    }

    /// A mesh made of a subset of faces (vertices are re-indexed).
    pub fn submesh(&self, face_ids: &[usize]) -> Result<Self> {
        let mut remap = HashMap::new();
        let mut vertices = Vec::new();
        let mut faces = Vec::with_capacity(face_ids.len());
        for &fid in face_ids {
            let face = self
                .faces
                .get(fid)
                .ok_or_else(|| Error::config(format!("face id {fid} out of range")))?;
            let mut out = [0; 3];
            for (k, &v) in face.iter().enumerate() {
                out[k] = *remap.entry(v).or_insert_with(|| {
                    vertices.push(self.vertices[v]);
                    vertices.len() - 1
                });
            }
            faces.push(out);
        }
        if faces.is_empty() {
            return Err(Error::config("empty face selection"));
        }
        let closed = is_closed(&faces);
        Ok(Self::assemble(vertices, faces, closed, 0))
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        self.normals[face].into_inner()
    }

    pub fn face_area(&self, face: usize) -> f64 {
        self.areas[face]
    }

    pub fn face_centroid(&self, face: usize) -> Point3<f64> {
        let [a, b, c] = self.triangle(face);
        Point3::from((a.coords + b.coords + c.coords) / 3.0)
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn surface_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn dropped_faces(&self) -> usize {
        self.dropped_faces
    }

    pub fn signed_volume(&self) -> f64 {
        signed_volume_of(&self.vertices, &self.faces)
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        self.vertices.iter().for_each(|v| b.grow(v));
        b
    }

    /// Centre of the bounding box and the radius of the smallest sphere about
    /// it that contains every vertex.
    pub fn bounding_sphere(&self) -> (Point3<f64>, f64) {
        let center = self.bounds().center();
        let radius = self
            .vertices
            .iter()
            .map(|v| (v - center).norm())
            .fold(0.0, f64::max);
        (center, radius)
    }

    pub fn closest_point(&self, p: &Point3<f64>) -> ClosestPoint {
        let mut best = ClosestPoint {
            point: *p,
            face: 0,
            distance: f64::INFINITY,
            normal: Vector3::zeros(),
        };
        let mut best_d2 = f64::INFINITY;
        self.bvh.nearest(p, |face| {
            let [a, b, c] = self.triangle(face);
            let q = closest_point_on_triangle(p, &a, &b, &c);
            let d2 = (q - p).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best.point = q;
                best.face = face;
            }
            best_d2
        });
        best.distance = best_d2.sqrt();
        best.normal = self.face_normal(best.face);
        best
    }

    /// Exhaustive closest point over every face, without the BVH.
    pub fn closest_point_brute_force(&self, p: &Point3<f64>) -> ClosestPoint {
        let (face, point) = (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                (f, closest_point_on_triangle(p, &a, &b, &c))
            })
            .min_by(|x, y| (x.1 - p).norm_squared().total_cmp(&(y.1 - p).norm_squared()))
            .expect("mesh has faces");
        ClosestPoint {
            point,
            face,
            distance: (point - p).norm(),
            normal: self.face_normal(face),
        }
    }

    /// Ray-parity inside test, majority vote over three skew directions.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        const DIRS: [[f64; 3]; 3] = [
            [0.577_215_664_9, 0.618_033_988_7, 0.533_001_2],
            [-0.713_2, 0.324_919_696, 0.627_963_03],
            [0.211_324_865, -0.788_675_134, -0.577_350_269],
        ];
        let votes = DIRS
            .iter()
            .filter(|d| self.ray_crossings(p, &Vector3::from(**d).normalize()) % 2 == 1)
            .count();
        votes >= 2
    }

    fn ray_crossings(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> usize {
        let mut count = 0;
        self.bvh.ray_candidates(origin, dir, |face| {
            let [a, b, c] = self.triangle(face);
            if ray_hits_triangle(origin, dir, &a, &b, &c) {
                count += 1;
            }
        });
        count
    }

    /// Signed distance in mm, negative inside the (closed) mesh.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        let d = self.closest_point(p).distance;
        if d > 0.0 && self.contains(p) {
            -d
        } else {
            d
        }
    }

    /// Draws `n` points uniformly by area: a face is chosen with probability
    /// proportional to its area, then a point uniformly inside it.
    pub fn sample_surface<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<SurfaceSample>> {
        if n == 0 {
            return Err(Error::input("sample count must be at least 1"));
        }
        let picker = WeightedIndex::new(&self.areas)
            .map_err(|e| Error::input(format!("cannot sample surface: {e}")))?;
        Ok((0..n)
            .map(|_| {
                let face = picker.sample(rng);
                let s = rng.random::<f64>().sqrt();
                let r = rng.random::<f64>();
                let barycentric = [1.0 - s, s * (1.0 - r), s * r];
                let [a, b, c] = self.triangle(face);
                let position = Point3::from(
                    a.coords * barycentric[0] + b.coords * barycentric[1] + c.coords * barycentric[2],
                );
                SurfaceSample {
                    position,
                    normal: self.face_normal(face),
                    face,
                    barycentric,
                }
            })
            .collect())
    }
}

fn triangle_area(vertices: &[Point3<f64>], f: &[usize; 3]) -> f64 {
    let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn signed_volume_of(vertices: &[Point3<f64>], faces: &[[usize; 3]]) -> f64 {
    faces
        .iter()
        .map(|f| {
            let (a, b, c) = (vertices[f[0]].coords, vertices[f[1]].coords, vertices[f[2]].coords);
            a.dot(&b.cross(&c))
        })
        .sum::<f64>()
        / 6.0
}

/// Every edge shared by exactly two faces traversing it in opposite directions.
fn is_closed(faces: &[[usize; 3]]) -> bool {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for f in faces {
        for k in 0..3 {
            *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1))
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
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

/// Moller-Trumbore intersection for `t > 0`.
fn ray_hits_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return false;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&q) * inv > 1e-12
}
