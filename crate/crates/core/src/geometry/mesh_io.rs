//! OBJ and PLY mesh readers, OBJ writer.
//!
//! Units are meters unless a sidecar `<file>.meta.json` declares
//! `{"units": "mm"}`. Without a sidecar, meshes whose bounding-box diagonal
//! exceeds 10 (interpreted as meters) are assumed to be in millimeters.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::{Point3, Vector3};
use serde::Deserialize;

use super::mesh::TriangleMesh;
use crate::error::GeometryError;

/// Bounding-box diagonal (in file units) above which a sidecar-less mesh is
/// taken to be in millimeters.
pub const MM_HEURISTIC_DIAGONAL: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct MeshLoadReport {
    pub mesh: TriangleMesh,
    pub degenerate_removed: usize,
    pub scale_applied: f64,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct UnitsSidecar {
    units: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Reads an OBJ or PLY mesh, removes degenerate faces and normalizes units.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, GeometryError> {
    load_mesh_with_report(path).map(|r| r.mesh)
}

pub fn load_mesh_with_report(path: impl AsRef<Path>) -> Result<MeshLoadReport, GeometryError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| GeometryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let mut mesh = match ext.as_str() {
        "obj" => parse_obj(path, &bytes)?,
        "ply" => parse_ply(path, &bytes)?,
        other => {
            return Err(GeometryError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("unknown extension {other:?}"),
            })
        }
    };
    if mesh.triangles.is_empty() || mesh.vertices.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    if !mesh.indices_valid() {
        return Err(GeometryError::Malformed {
            path: path.to_path_buf(),
            location: 0,
            reason: "face index out of range".into(),
        });
    }

    let mut warnings = Vec::new();
    let removed = mesh.remove_degenerate();
    if removed > 0 {
        let msg = format!("{}: removed {removed} degenerate face(s)", path.display());
        warn!("{msg}");
        warnings.push(msg);
    }
    if mesh.triangles.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }

    let scale = match fs::read(sidecar_path(path)) {
        Ok(side) => {
            let meta: UnitsSidecar =
                serde_json::from_slice(&side).map_err(|e| GeometryError::Malformed {
                    path: sidecar_path(path),
                    location: e.line(),
                    reason: e.to_string(),
                })?;
            match meta.units.to_ascii_lowercase().as_str() {
                "mm" | "millimeter" | "millimeters" => 1e-3,
                "m" | "meter" | "meters" => 1.0,
                other => {
                    return Err(GeometryError::Unsupported {
                        path: sidecar_path(path),
                        reason: format!("unknown units {other:?}"),
                    })
                }
            }
        }
        Err(_) => {
            let diag = mesh.aabb().diagonal();
            if diag > MM_HEURISTIC_DIAGONAL {
                let msg = format!(
                    "{}: bounding-box diagonal {diag:.3} exceeds {MM_HEURISTIC_DIAGONAL}; assuming millimeters",
                    path.display()
                );
                warn!("{msg}");
                warnings.push(msg);
                1e-3
            } else {
                1.0
            }
        }
    };
    if scale != 1.0 {
        mesh.scale(scale);
    }

    Ok(MeshLoadReport {
        mesh,
        degenerate_removed: removed,
        scale_applied: scale,
        warnings,
    })
}

fn malformed(path: &Path, location: usize, reason: impl Into<String>) -> GeometryError {
    GeometryError::Malformed {
        path: path.to_path_buf(),
        location,
        reason: reason.into(),
    }
}

fn parse_obj(path: &Path, bytes: &[u8]) -> Result<TriangleMesh, GeometryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(path, e.valid_up_to(), "not UTF-8"))?;
    let mut vertices = Vec::new();
    let mut file_normals: Vec<Vector3<f64>> = Vec::new();
    let mut vertex_normal: Vec<Option<usize>> = Vec::new();
    let mut triangles = Vec::new();

    let resolve = |tok: &str, len: usize, line: usize| -> Result<usize, GeometryError> {
        let i: i64 = tok
            .parse()
            .map_err(|_| malformed(path, line, format!("bad index {tok:?}")))?;
        let idx = if i > 0 { i - 1 } else { len as i64 + i };
        if idx < 0 || idx as usize >= len {
            return Err(malformed(path, line, format!("index {i} out of range")));
        }
        Ok(idx as usize)
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let raw = raw.split('#').next().unwrap_or("");
        let mut it = raw.split_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "v" => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| malformed(path, line, "bad vertex coordinate"))?;
                if c.len() != 3 {
                    return Err(malformed(path, line, "vertex needs 3 coordinates"));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
                vertex_normal.push(None);
            }
            "vn" => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| malformed(path, line, "bad normal"))?;
                if c.len() != 3 {
                    return Err(malformed(path, line, "normal needs 3 components"));
                }
                file_normals.push(Vector3::new(c[0], c[1], c[2]));
            }
            "f" => {
                let mut poly = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let v = resolve(parts.next().unwrap_or(""), vertices.len(), line)?;
                    let _texcoord = parts.next();
                    if let Some(n) = parts.next().filter(|s| !s.is_empty()) {
                        let n = resolve(n, file_normals.len(), line)?;
                        vertex_normal[v] = Some(n);
                    }
                    poly.push(v as u32);
                }
                if poly.len() < 3 {
                    return Err(malformed(path, line, "face with fewer than 3 vertices"));
                }
                for k in 1..poly.len() - 1 {
                    triangles.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            "vt" | "o" | "g" | "s" | "usemtl" | "mtllib" => {}
            "l" | "p" | "curv" | "surf" | "cstype" => {
                return Err(GeometryError::Unsupported {
                    path: path.to_path_buf(),
                    reason: format!("element type {tag:?} at line {line}"),
                })
            }
            _ => {}
        }
    }

    let mut mesh = TriangleMesh::new(vertices, triangles);
    if !file_normals.is_empty() && vertex_normal.iter().all(|n| n.is_some()) {
        mesh.normals = Some(
            vertex_normal
                .iter()
                .map(|n| file_normals[n.unwrap()].normalize())
                .collect(),
        );
    }
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PlyProperty {
    Scalar { name: String, ty: PlyType },
    List { name: String, count: PlyType, item: PlyType },
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProperty>,
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<TriangleMesh, GeometryError> {
    let header_end = bytes
        .windows(10)
        .position(|w| w == b"end_header")
        .ok_or_else(|| malformed(path, 0, "missing end_header"))?;
    let mut body_start = header_end + 10;
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| malformed(path, 0, "header not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(malformed(path, 0, "missing ply magic"));
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for (i, line) in lines.enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", f, _] => format = Some(f.to_string()),
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| malformed(path, i + 2, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, t, name] => {
                let el = elements.last_mut().ok_or_else(|| malformed(path, i + 2, "property before element"))?;
                el.props.push(PlyProperty::List {
                    name: name.to_string(),
                    count: PlyType::parse(c).ok_or_else(|| malformed(path, i + 2, "bad list count type"))?,
                    item: PlyType::parse(t).ok_or_else(|| malformed(path, i + 2, "bad list item type"))?,
                });
            }
            ["property", t, name] => {
                let el = elements.last_mut().ok_or_else(|| malformed(path, i + 2, "property before element"))?;
                el.props.push(PlyProperty::Scalar {
                    name: name.to_string(),
                    ty: PlyType::parse(t).ok_or_else(|| malformed(path, i + 2, "bad property type"))?,
                });
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| malformed(path, 0, "missing format line"))?;
    let body = &bytes[body_start..];

    // Each element yields rows of scalar values; list properties yield their items.
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    let mut reader: Box<dyn PlyRowReader> = match format.as_str() {
        "ascii" => Box::new(AsciiRows::new(body)),
        "binary_little_endian" => Box::new(BinaryRows { body, pos: 0 }),
        other => {
            return Err(GeometryError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("PLY format {other}"),
            })
        }
    };

    for el in &elements {
        for _ in 0..el.count {
            let mut scalars: Vec<(&str, f64)> = Vec::new();
            let mut list: Option<Vec<f64>> = None;
            for p in &el.props {
                match p {
                    PlyProperty::Scalar { name, ty } => {
                        let v = reader.next(*ty).ok_or_else(|| malformed(path, body_start + reader.offset(), "truncated body"))?;
                        scalars.push((name.as_str(), v));
                    }
                    PlyProperty::List { name, count, item } => {
                        let n = reader.next(*count).ok_or_else(|| malformed(path, body_start + reader.offset(), "truncated list"))? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(reader.next(*item).ok_or_else(|| malformed(path, body_start + reader.offset(), "truncated list"))?);
                        }
                        if name == "vertex_indices" || name == "vertex_index" {
                            list = Some(items);
                        }
                    }
                }
            }
            let get = |k: &str| scalars.iter().find(|(n, _)| *n == k).map(|(_, v)| *v);
            match el.name.as_str() {
                "vertex" => {
                    let (Some(x), Some(y), Some(z)) = (get("x"), get("y"), get("z")) else {
                        return Err(malformed(path, 0, "vertex without x/y/z"));
                    };
                    vertices.push(Point3::new(x, y, z));
                    if let (Some(nx), Some(ny), Some(nz)) = (get("nx"), get("ny"), get("nz")) {
                        normals.push(Vector3::new(nx, ny, nz));
                    }
                }
                "face" => {
                    let idx = list.ok_or_else(|| malformed(path, 0, "face without vertex_indices"))?;
                    if idx.len() < 3 {
                        return Err(malformed(path, 0, "face with fewer than 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
                    }
                }
                _ => {}
            }
        }
    }
    let mut mesh = TriangleMesh::new(vertices, triangles);
    if !normals.is_empty() && normals.len() == mesh.vertices.len() {
        mesh.normals = Some(normals.into_iter().map(|n| n.normalize()).collect());
    }
    Ok(mesh)
}

trait PlyRowReader {
    fn next(&mut self, ty: PlyType) -> Option<f64>;
    fn offset(&self) -> usize;
}

struct BinaryRows<'a> {
    body: &'a [u8],
    pos: usize,
}

impl PlyRowReader for BinaryRows<'_> {
    fn next(&mut self, ty: PlyType) -> Option<f64> {
        let n = ty.size();
        let b = self.body.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(ty.read_le(b))
    }
    fn offset(&self) -> usize {
        self.pos
    }
}

struct AsciiRows<'a> {
    tokens: std::iter::Peekable<std::str::SplitAsciiWhitespace<'a>>,
    consumed: usize,
}

impl<'a> AsciiRows<'a> {
    fn new(body: &'a [u8]) -> Self {
        let text = std::str::from_utf8(body).unwrap_or("");
        Self {
            tokens: text.split_ascii_whitespace().peekable(),
            consumed: 0,
        }
    }
}

impl PlyRowReader for AsciiRows<'_> {
    fn next(&mut self, _ty: PlyType) -> Option<f64> {
        self.consumed += 1;
        self.tokens.next()?.parse().ok()
    }
    fn offset(&self) -> usize {
        self.consumed
    }
}

/// Writes `v`/`vn`/`f` records. Normals are written when present.
pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    let with_normals = mesh.normals.as_ref().filter(|n| n.len() == mesh.vertices.len());
    if let Some(normals) = with_normals {
        for n in normals {
            writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
        }
    }
    for t in &mesh.triangles {
        let [a, b, c] = [t[0] + 1, t[1] + 1, t[2] + 1];
        if with_normals.is_some() {
            writeln!(w, "f {a}//{a} {b}//{b} {c}//{c}")?;
        } else {
            writeln!(w, "f {a} {b} {c}")?;
        }
    }
    w.flush()
}
