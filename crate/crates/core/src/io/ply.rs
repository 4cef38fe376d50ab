//! PLY point clouds and triangle meshes.
//!
//! Vertices need `x y z`; `nx ny nz` and `red green blue` are picked up
//! when all three are declared. Faces are read from `vertex_indices` (or
//! `vertex_index`) and fan-triangulated. Positions are written as double
//! so voxel coordinates survive a round trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ply_rs_bw::parser::{Parser, Reader};
use ply_rs_bw::ply::{
    Addable, ElementDef, Encoding, Header, Property, PropertyAccess, PropertyAccessResult, PropertyDef,
    PropertyType, ScalarType,
};
use ply_rs_bw::writer::Writer;

use crate::error::{format_err, Result};
use crate::geometry::PointCloud;
use crate::tsdf::TriangleMesh;

/// Payload encoding for written files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    Binary,
}

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, Default)]
struct Vertex {
    p: [f64; 3],
    n: [f32; 3],
    c: [u8; 3],
}

fn scalar(p: &Property) -> Option<f64> {
    match *p {
        Property::Double(v) => Some(v),
        Property::Int(v) => Some(v as f64),
        Property::UInt(v) => Some(v as f64),
        ref other => other.to_f32_lossy().map(f64::from),
    }
}

impl PropertyAccess for Vertex {
    fn new() -> Self {
        Self::default()
    }

    fn set_property(&mut self, key: &str, p: Property) -> PropertyAccessResult {
        let slot = match key {
            "x" | "y" | "z" => {
                let Some(v) = scalar(&p) else { return PropertyAccessResult::UnsupportedType };
                self.p[(key.as_bytes()[0] - b'x') as usize] = v;
                return PropertyAccessResult::Set;
            }
            "nx" => 0,
            "ny" => 1,
            "nz" => 2,
            "red" | "green" | "blue" => {
                let Some(v) = p.to_u8_color_lossy() else { return PropertyAccessResult::UnsupportedType };
                self.c[match key {
                    "red" => 0,
                    "green" => 1,
                    _ => 2,
                }] = v;
                return PropertyAccessResult::Set;
            }
            _ => return PropertyAccessResult::Ignored,
        };
        match scalar(&p) {
            Some(v) => {
                self.n[slot] = v as f32;
                PropertyAccessResult::Set
            }
            None => PropertyAccessResult::UnsupportedType,
        }
    }

    fn get_double(&self, key: &str) -> Option<f64> {
        match key {
            "x" => Some(self.p[0]),
            "y" => Some(self.p[1]),
            "z" => Some(self.p[2]),
            _ => None,
        }
    }

    fn get_float(&self, key: &str) -> Option<f32> {
        match key {
            "nx" => Some(self.n[0]),
            "ny" => Some(self.n[1]),
            "nz" => Some(self.n[2]),
            _ => None,
        }
    }

    fn get_uchar(&self, key: &str) -> Option<u8> {
        match key {
            "red" => Some(self.c[0]),
            "green" => Some(self.c[1]),
            "blue" => Some(self.c[2]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Face {
    indices: Vec<i32>,
}

impl PropertyAccess for Face {
    fn new() -> Self {
        Self::default()
    }

    fn set_property(&mut self, key: &str, p: Property) -> PropertyAccessResult {
        if key != "vertex_indices" && key != "vertex_index" {
            return PropertyAccessResult::Ignored;
        }
        match p.to_u32_list() {
            Some(list) if list.iter().all(|&i| i <= i32::MAX as u32) => {
                self.indices = list.into_iter().map(|i| i as i32).collect();
                PropertyAccessResult::Set
            }
            _ => PropertyAccessResult::UnsupportedType,
        }
    }

    fn get_list_int(&self, key: &str) -> Option<&[i32]> {
        (key == "vertex_indices").then_some(&self.indices[..])
    }
}

/// Vertices (with optional attributes) and faces of a PLY file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub cloud: PointCloud,
    pub triangles: Vec<[u32; 3]>,
}

fn has_all(e: &ElementDef, names: [&str; 3]) -> bool {
    names.iter().all(|n| e.properties.contains_key(*n))
}

pub fn read_ply_from<R: BufRead>(input: R) -> Result<PlyData> {
    let mut reader = Reader::new(input);
    let vparser = Parser::<Vertex>::new();
    let fparser = Parser::<Face>::new();
    let header = vparser.read_header(&mut reader).map_err(|e| format_err(format!("bad PLY header: {e}")))?;
    let mut out = PlyData::default();
    let mut seen_vertex = false;
    for (_, element) in &header.elements {
        let bad = |e: ply_rs_bw::parser::ParseError| format_err(format!("bad PLY '{}' data: {e}", element.name));
        match element.name.as_str() {
            "vertex" => {
                if !has_all(element, ["x", "y", "z"]) {
                    return Err(format_err("PLY vertices lack x, y, z"));
                }
                let verts = vparser.read_payload_for_element(&mut reader, element, &header).map_err(bad)?;
                out.cloud.positions = verts.iter().map(|v| v.p).collect();
                if has_all(element, ["nx", "ny", "nz"]) {
                    out.cloud.normals = Some(verts.iter().map(|v| v.n).collect());
                }
                if has_all(element, ["red", "green", "blue"]) {
                    out.cloud.colors = Some(verts.iter().map(|v| v.c).collect());
                }
                seen_vertex = true;
            }
            "face" => {
                let faces = fparser.read_payload_for_element(&mut reader, element, &header).map_err(bad)?;
                for f in faces {
                    if f.indices.len() < 3 {
                        return Err(format_err(format!("PLY face with {} vertices", f.indices.len())));
                    }
                    for i in 1..f.indices.len() - 1 {
                        out.triangles.push([f.indices[0], f.indices[i], f.indices[i + 1]].map(|k| k as u32));
                    }
                }
            }
            // Skip unknown elements by parsing them into throwaway faces.
            _ => {
                fparser.read_payload_for_element(&mut reader, element, &header).map_err(bad)?;
            }
        }
    }
    if !seen_vertex {
        return Err(format_err("PLY file has no vertex element"));
    }
    let n = out.cloud.len();
    if let Some(t) = out.triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
        return Err(format_err(format!("PLY face {t:?} references a missing vertex (have {n})")));
    }
    Ok(out)
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let file = File::open(path).map_err(|e| crate::Error::from(e).at(path))?;
    read_ply_from(BufReader::new(file)).map_err(|e| e.at(path))
}

fn scalar_def(name: &str, t: ScalarType) -> PropertyDef {
    PropertyDef::new(name.to_string(), PropertyType::Scalar(t))
}

fn vertex_def(count: usize, normals: bool, colors: bool) -> ElementDef {
    let mut e = ElementDef::new("vertex".to_string());
    e.count = count;
    for n in ["x", "y", "z"] {
        e.properties.add(scalar_def(n, ScalarType::Double));
    }
    if normals {
        for n in ["nx", "ny", "nz"] {
            e.properties.add(scalar_def(n, ScalarType::Float));
        }
    }
    if colors {
        for n in ["red", "green", "blue"] {
            e.properties.add(scalar_def(n, ScalarType::UChar));
        }
    }
    e
}

fn write_ply_to<W: Write>(
    out: &mut W,
    cloud: &PointCloud,
    triangles: Option<&[[u32; 3]]>,
    encoding: PlyEncoding,
) -> Result<()> {
    cloud.validate()?;
    let mut header = Header::new();
    header.encoding = match encoding {
        PlyEncoding::Ascii => Encoding::Ascii,
        PlyEncoding::Binary => Encoding::BinaryLittleEndian,
    };
    let vdef = vertex_def(cloud.len(), cloud.normals.is_some(), cloud.colors.is_some());
    header.elements.add(vdef.clone());
    let mut fdef = ElementDef::new("face".to_string());
    if let Some(t) = triangles {
        fdef.count = t.len();
        fdef.properties.add(PropertyDef::new(
            "vertex_indices".to_string(),
            PropertyType::List(ScalarType::UChar, ScalarType::Int),
        ));
        header.elements.add(fdef.clone());
    }
    let vw = Writer::<Vertex>::new();
    vw.write_header(out, &header)?;

    let mut buf = Vec::with_capacity(CHUNK.min(cloud.len()));
    for start in (0..cloud.len()).step_by(CHUNK) {
        buf.clear();
        for i in start..(start + CHUNK).min(cloud.len()) {
            buf.push(Vertex {
                p: cloud.positions[i],
                n: cloud.normals.as_ref().map_or([0.0; 3], |n| n[i]),
                c: cloud.colors.as_ref().map_or([0; 3], |c| c[i]),
            });
        }
        vw.write_payload_of_element(out, &buf, &vdef, &header)?;
    }
    if let Some(tris) = triangles {
        let fw = Writer::<Face>::new();
        for chunk in tris.chunks(CHUNK) {
            let faces: Vec<Face> = chunk.iter().map(|t| Face { indices: t.map(|i| i as i32).to_vec() }).collect();
            fw.write_payload_of_element(out, &faces, &fdef, &header)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| crate::Error::from(e).at(path))?))
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    write_ply_to(&mut create(path)?, cloud, None, encoding).map_err(|e| e.at(path))
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh, encoding: PlyEncoding) -> Result<()> {
    let cloud = PointCloud {
        positions: mesh.vertices.clone(),
        colors: None,
        normals: Some(mesh.normals.iter().map(|n| n.map(|c| c as f32)).collect()),
    };
    write_ply_to(&mut create(path)?, &cloud, Some(&mesh.triangles), encoding).map_err(|e| e.at(path))
}

/// Serializes to memory; mostly for tests.
pub fn ply_bytes(cloud: &PointCloud, triangles: Option<&[[u32; 3]]>, encoding: PlyEncoding) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_ply_to(&mut out, cloud, triangles, encoding)?;
    Ok(out)
}
