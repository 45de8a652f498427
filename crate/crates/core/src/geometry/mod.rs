//! Triangle meshes: loading, area-weighted sampling, BVH-accelerated
//! closest-point queries and inside/outside tests.

mod bvh;
mod io;
mod mesh;
mod region;
pub mod shapes;

pub use bvh::Aabb;
pub use io::{load_mesh, load_mesh_file, write_obj, MeshFormat};
pub use mesh::{closest_point_on_triangle, ClosestPoint, SurfaceSample, TriangleMesh, MIN_FACE_AREA};
pub use region::{FunctionalRegion, RegionSelector};
