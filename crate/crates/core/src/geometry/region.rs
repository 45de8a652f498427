use nalgebra::{Point3, Unit, Vector3};

use super::mesh::{ClosestPoint, TriangleMesh};
use crate::error::{Error, Result};
use crate::kinematics::unit_direction;

/// How the functional faces are picked out of the object mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionSelector {
    Faces(Vec<usize>),
    /// Every face whose centroid lies inside the sphere.
    Sphere { center: Point3<f64>, radius: f64 },
}

/// The annotated functional part of an object (button, trigger) together
/// with the direction it is actuated in.
#[derive(Debug, Clone)]
pub struct FunctionalRegion {
    face_ids: Vec<usize>,
    task_direction: Unit<Vector3<f64>>,
    meeting_point: Point3<f64>,
    surface: TriangleMesh,
}

impl FunctionalRegion {
    /// `meeting_point` defaults to the area-weighted centroid of the region,
    /// projected onto the region's faces.
    pub fn new(
        mesh: &TriangleMesh,
        selector: &RegionSelector,
        task_direction: Vector3<f64>,
        meeting_point: Option<Point3<f64>>,
    ) -> Result<Self> {
        let mut face_ids = match selector {
            RegionSelector::Faces(ids) => {
                if let Some(bad) = ids.iter().find(|&&f| f >= mesh.faces().len()) {
                    return Err(Error::config(format!("region face id {bad} out of range")));
                }
                ids.clone()
            }
            RegionSelector::Sphere { center, radius } => (0..mesh.faces().len())
                .filter(|&f| (mesh.face_centroid(f) - center).norm() <= *radius)
                .collect(),
        };
        face_ids.sort_unstable();
        face_ids.dedup();
        if face_ids.is_empty() {
            return Err(Error::config("functional region selects no faces"));
        }
        let t = unit_direction(&task_direction)?;
        let surface = mesh.submesh(&face_ids)?;
        let meeting_point = match meeting_point {
            Some(p) => p,
            None => {
                let area: f64 = face_ids.iter().map(|&f| mesh.face_area(f)).sum();
                let centroid = face_ids
                    .iter()
                    .map(|&f| mesh.face_centroid(f).coords * mesh.face_area(f))
                    .sum::<Vector3<f64>>()
                    / area;
                surface.closest_point(&Point3::from(centroid)).point
            }
        };
        Ok(Self {
            face_ids,
            task_direction: Unit::new_unchecked(t),
            meeting_point,
            surface,
        })
    }

    pub fn face_ids(&self) -> &[usize] {
        &self.face_ids
    }

    pub fn task_direction(&self) -> Vector3<f64> {
        self.task_direction.into_inner()
    }

    pub fn meeting_point(&self) -> Point3<f64> {
        self.meeting_point
    }

    /// The region's faces as a standalone (open) mesh.
    pub fn surface(&self) -> &TriangleMesh {
        &self.surface
    }

    pub fn closest_point(&self, p: &Point3<f64>) -> ClosestPoint {
        self.surface.closest_point(p)
    }
}
