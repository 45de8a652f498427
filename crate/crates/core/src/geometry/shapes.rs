//! Procedural closed meshes used by the demo scenarios and tests.

use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::{Point3, Vector3};

use super::mesh::TriangleMesh;

/// Welds coincident corners of a triangle soup into an indexed mesh.
fn weld(triangles: &[[Point3<f64>; 3]]) -> TriangleMesh {
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::with_capacity(triangles.len());
    for tri in triangles {
        let mut face = [0; 3];
        for (k, p) in tri.iter().enumerate() {
            let key = [
                (p.x * 1e6).round() as i64,
                (p.y * 1e6).round() as i64,
                (p.z * 1e6).round() as i64,
            ];
            face[k] = *index.entry(key).or_insert_with(|| {
                vertices.push(*p);
                vertices.len() - 1
            });
        }
        faces.push(face);
    }
    TriangleMesh::new(vertices, faces).expect("procedural mesh is valid")
}

/// Axis-aligned cube of the given side, centred at the origin, 12 triangles.
pub fn cube(side: f64) -> TriangleMesh {
    cuboid(Vector3::repeat(side), 1)
}

/// Axis-aligned box centred at the origin with each face split into a grid
/// of `cells x cells` quads.
pub fn cuboid(size: Vector3<f64>, cells: usize) -> TriangleMesh {
    let h = size / 2.0;
    let mut tris = Vec::new();
    // each face: (normal axis, sign); u, v span the face so that u x v = normal
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
            let point = |i: usize, j: usize| {
                let mut p = Vector3::zeros();
                p[axis] = sign * h[axis];
                p[ua] = -h[ua] + size[ua] * i as f64 / cells as f64;
                p[va] = -h[va] + size[va] * j as f64 / cells as f64;
                Point3::from(p)
            };
            for i in 0..cells {
                for j in 0..cells {
                    let (a, b, c, d) = (point(i, j), point(i + 1, j), point(i + 1, j + 1), point(i, j + 1));
                    if sign > 0.0 {
                        tris.push([a, b, c]);
                        tris.push([a, c, d]);
                    } else {
                        tris.push([a, c, b]);
                        tris.push([a, d, c]);
                    }
                }
            }
        }
    }
    weld(&tris)
}

/// Closed cylinder along +z from `z = 0` to `z = height`.
pub fn cylinder(radius: f64, height: f64, segments: usize, stacks: usize) -> TriangleMesh {
    capped_cylinder(radius, height, segments, stacks, 1)
}

/// As [`cylinder`], with each cap split into `rings` concentric bands so cap
/// faces stay small.
pub fn capped_cylinder(radius: f64, height: f64, segments: usize, stacks: usize, rings: usize) -> TriangleMesh {
    let rings = rings.max(1);
    let ring = |k: usize, r: f64, z: f64| {
        let a = TAU * (k % segments) as f64 / segments as f64;
        Point3::new(r * a.cos(), r * a.sin(), z)
    };
    let mut tris = Vec::new();
    for s in 0..stacks {
        let z0 = height * s as f64 / stacks as f64;
        let z1 = height * (s + 1) as f64 / stacks as f64;
        for k in 0..segments {
            let (a, b, c, d) = (
                ring(k, radius, z0),
                ring(k + 1, radius, z0),
                ring(k + 1, radius, z1),
                ring(k, radius, z1),
            );
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    for (z, up) in [(0.0, false), (height, true)] {
        let centre = Point3::new(0.0, 0.0, z);
        for i in 0..rings {
            let r0 = radius * i as f64 / rings as f64;
            let r1 = radius * (i + 1) as f64 / rings as f64;
            for k in 0..segments {
                let mut band = if i == 0 {
                    vec![[centre, ring(k, r1, z), ring(k + 1, r1, z)]]
                } else {
                    let (a, b, c, d) = (ring(k, r0, z), ring(k, r1, z), ring(k + 1, r1, z), ring(k + 1, r0, z));
                    vec![[a, b, c], [a, c, d]]
                };
                if !up {
                    for t in &mut band {
                        t.swap(1, 2);
                    }
                }
                tris.extend(band);
            }
        }
    }
    weld(&tris)
}

/// Icosphere centred at the origin; `subdivisions = 2` gives 320 faces.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let base = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let idx = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let project = |v: Vector3<f64>| Point3::from(v.normalize() * radius);
    let mut tris: Vec<[Point3<f64>; 3]> = idx
        .iter()
        .map(|f| f.map(|i| project(Vector3::from(base[i]))))
        .collect();
    for _ in 0..subdivisions {
        tris = tris
            .iter()
            .flat_map(|[a, b, c]| {
                let ab = project((a.coords + b.coords) / 2.0);
                let bc = project((b.coords + c.coords) / 2.0);
                let ca = project((c.coords + a.coords) / 2.0);
                [[*a, ab, ca], [*b, bc, ab], [*c, ca, bc], [ab, bc, ca]]
            })
            .collect();
    }
    weld(&tris)
}
