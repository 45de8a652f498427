//! Wavefront OBJ and ASCII STL reading, OBJ writing.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    StlAscii,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("stl") => Ok(MeshFormat::StlAscii),
            _ => Err(Error::input(format!(
                "{}: unsupported mesh format (expected .obj or .stl)",
                path.display()
            ))),
        }
    }
}

pub fn load_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::input(format!("mesh is not valid UTF-8 text: {e}")))?;
    let (vertices, faces) = match format {
        MeshFormat::Obj => parse_obj(text)?,
        MeshFormat::StlAscii => parse_stl_ascii(text)?,
    };
    if faces.is_empty() {
        return Err(Error::input("mesh contains no faces"));
    }
    TriangleMesh::new(vertices, faces)
}

pub fn load_mesh_file(path: &Path) -> Result<TriangleMesh> {
    let format = MeshFormat::from_path(path)?;
    let bytes = std::fs::read(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    load_mesh(&bytes, format)
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        msg: "missing coordinate".into(),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number '{tok}'"),
    })
}

type Indexed = (Vec<Point3<f64>>, Vec<[usize; 3]>);

fn parse_obj(text: &str) -> Result<Indexed> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line)?;
                let y = parse_f64(toks.next(), line)?;
                let z = parse_f64(toks.next(), line)?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("invalid face index '{tok}'"),
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else {
                        vertices.len() as i64 + idx
                    };
                    if idx == 0 || resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::Parse {
                            line,
                            msg: format!("face index {idx} out of range"),
                        });
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        msg: "face needs at least 3 vertices".into(),
                    });
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn parse_stl_ascii(text: &str) -> Result<Indexed> {
    let mut index: HashMap<[u64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut corners: Vec<usize> = Vec::new();
    let mut saw_solid = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("solid") => saw_solid = true,
            Some("vertex") => {
                let p = Point3::new(
                    parse_f64(toks.next(), line)?,
                    parse_f64(toks.next(), line)?,
                    parse_f64(toks.next(), line)?,
                );
                let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
                let id = *index.entry(key).or_insert_with(|| {
                    vertices.push(p);
                    vertices.len() - 1
                });
                corners.push(id);
            }
            Some("endloop") => {
                if corners.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("facet has {} vertices, expected 3", corners.len()),
                    });
                }
                faces.push([corners[0], corners[1], corners[2]]);
                corners.clear();
            }
            Some("facet" | "outer" | "endfacet" | "endsolid") | None => {}
            Some(other) => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unexpected keyword '{other}'"),
                })
            }
        }
    }
    if !saw_solid {
        return Err(Error::Parse {
            line: 1,
            msg: "missing 'solid' header".into(),
        });
    }
    Ok((vertices, faces))
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}
