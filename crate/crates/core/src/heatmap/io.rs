//! Heatmap artifacts: PLY for viewing, CSV of graded points, JSON header.

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ApproachHeatmap, ApproachPoint, ClusterSummary, HeatmapParams};
use crate::error::{Error, Result};
use crate::geometry::{SurfaceSample, TriangleMesh};

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
    pub face: usize,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub raw_score: f64,
    pub norm_score: f64,
    pub reachable: bool,
    pub label: i64,
}

impl From<&ApproachPoint> for PointRecord {
    fn from(p: &ApproachPoint) -> Self {
        let s = &p.sample;
        Self {
            x: s.position.x,
            y: s.position.y,
            z: s.position.z,
            nx: s.normal.x,
            ny: s.normal.y,
            nz: s.normal.z,
            face: s.face,
            b0: s.barycentric[0],
            b1: s.barycentric[1],
            b2: s.barycentric[2],
            raw_score: p.raw_score,
            norm_score: p.norm_score,
            reachable: p.reachable,
            label: p.cluster_label,
        }
    }
}

impl From<PointRecord> for ApproachPoint {
    fn from(r: PointRecord) -> Self {
        Self {
            sample: SurfaceSample {
                position: Point3::new(r.x, r.y, r.z),
                normal: Vector3::new(r.nx, r.ny, r.nz),
                face: r.face,
                barycentric: [r.b0, r.b1, r.b2],
            },
            raw_score: r.raw_score,
            norm_score: r.norm_score,
            reachable: r.reachable,
            cluster_label: r.label,
        }
    }
}

/// Contents of the heatmap JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapHeader {
    pub tool_version: String,
    pub params: HeatmapParams,
    pub hand_id: String,
    pub object_id: String,
    pub point_count: usize,
    pub vertex_count: usize,
    pub clusters: Vec<ClusterSummary>,
    pub selected_cluster: Option<i64>,
    /// sha256 of the CSV file the header belongs to.
    pub csv_sha256: String,
}

pub fn heatmap_csv(heatmap: &ApproachHeatmap) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for p in &heatmap.points {
        writer.serialize(PointRecord::from(p))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::input(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::input(e.to_string()))
}

pub fn read_heatmap_csv(text: &str) -> Result<Vec<ApproachPoint>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut points = Vec::new();
    for row in reader.deserialize::<PointRecord>() {
        let r = row?;
        if !(0.0..=1.0).contains(&r.norm_score) || r.raw_score < 0.0 {
            return Err(Error::input(format!(
                "heatmap row {} has scores out of range",
                points.len() + 1
            )));
        }
        points.push(ApproachPoint::from(r));
    }
    if points.is_empty() {
        return Err(Error::input("heatmap CSV has no points"));
    }
    Ok(points)
}

/// ASCII PLY of the object: grey level is the interpolated score, vertices
/// nearest the selected cluster are marked in the red channel.
pub fn heatmap_ply(heatmap: &ApproachHeatmap, mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\ncomment approach heatmap\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property float score\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    );
    for (i, v) in mesh.vertices().iter().enumerate() {
        let score = heatmap.vertex_scores[i];
        let grey = (score * 255.0).round() as u8;
        let red = if heatmap.vertex_in_selection[i] { 255 } else { grey };
        let _ = writeln!(out, "{} {} {} {red} {grey} {grey} {score}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

impl ApproachHeatmap {
    pub fn header(&self, csv_sha256: String) -> HeatmapHeader {
        HeatmapHeader {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            params: self.params,
            hand_id: self.hand_id.clone(),
            object_id: self.object_id.clone(),
            point_count: self.points.len(),
            vertex_count: self.vertex_scores.len(),
            clusters: self.clusters.clone(),
            selected_cluster: self.selected_cluster,
            csv_sha256,
        }
    }

    /// Rebuilds a heatmap from its header and CSV rows.
    pub fn from_parts(header: &HeatmapHeader, points: Vec<ApproachPoint>, mesh: &TriangleMesh) -> Result<Self> {
        if points.len() != header.point_count {
            return Err(Error::input(format!(
                "heatmap header lists {} points, CSV has {}",
                header.point_count,
                points.len()
            )));
        }
        if header.vertex_count != mesh.vertices().len() {
            return Err(Error::input(format!(
                "heatmap was built on a mesh with {} vertices, object has {}",
                header.vertex_count,
                mesh.vertices().len()
            )));
        }
        if let Some(sel) = header.selected_cluster {
            if !points.iter().any(|p| p.cluster_label == sel) {
                return Err(Error::input(format!("selected cluster {sel} has no points")));
            }
        }
        let mut hm = Self::assemble(points, header.clusters.clone(), header.selected_cluster, mesh, &header.params);
        hm.hand_id = header.hand_id.clone();
        hm.object_id = header.object_id.clone();
        Ok(hm)
    }
}
