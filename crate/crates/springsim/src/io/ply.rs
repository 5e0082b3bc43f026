//! PLY point-cloud reader and writer.
//!
//! Writes binary little-endian with float32 positions, optional uchar
//! red/green/blue, and optional float32 opacity. The reader additionally
//! accepts ASCII files, double-typed positions, and arbitrary extra
//! elements and properties, which are skipped. The parser works on an
//! in-memory byte slice and never trusts declared counts for allocation:
//! every row is read incrementally and truncation surfaces as an error,
//! not an out-of-bounds access or a huge reservation.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(token: &str) -> Option<ScalarType> {
        Some(match token {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, kind: ScalarType },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    BinaryLittleEndian,
    Ascii,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::PlyParse(detail.into())
}

/// Reads one header line (to '\n', tolerating a trailing '\r').
fn header_line<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &data[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("unterminated header line"))?;
    *pos += end + 1;
    let mut line = &rest[..end];
    if line.last() == Some(&b'\r') {
        line = &line[..line.len() - 1];
    }
    std::str::from_utf8(line).map_err(|_| bad("header is not valid UTF-8"))
}

fn parse_header(data: &[u8], pos: &mut usize) -> Result<Header> {
    if header_line(data, pos)? != "ply" {
        return Err(bad("missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = header_line(data, pos)?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            None | Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                if encoding.is_some() {
                    return Err(bad("duplicate format line"));
                }
                let kind = tokens.next().ok_or_else(|| bad("format line without encoding"))?;
                let version = tokens.next().ok_or_else(|| bad("format line without version"))?;
                if version != "1.0" {
                    return Err(bad(format!("unsupported PLY version {version}")));
                }
                encoding = Some(match kind {
                    "binary_little_endian" => Encoding::BinaryLittleEndian,
                    "ascii" => Encoding::Ascii,
                    other => return Err(bad(format!("unsupported encoding {other}"))),
                });
            }
            Some("element") => {
                let name = tokens.next().ok_or_else(|| bad("element without a name"))?;
                let count = tokens
                    .next()
                    .ok_or_else(|| bad("element without a count"))?
                    .parse::<usize>()
                    .map_err(|_| bad("element count is not a non-negative integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| bad("property declared before any element"))?;
                let first = tokens.next().ok_or_else(|| bad("property without a type"))?;
                let prop = if first == "list" {
                    let count_tok =
                        tokens.next().ok_or_else(|| bad("list property without count type"))?;
                    let item_tok =
                        tokens.next().ok_or_else(|| bad("list property without item type"))?;
                    tokens.next().ok_or_else(|| bad("list property without a name"))?;
                    let count = ScalarType::parse(count_tok)
                        .ok_or_else(|| bad(format!("unknown list count type {count_tok}")))?;
                    if matches!(count, ScalarType::F32 | ScalarType::F64) {
                        return Err(bad("list count type must be an integer type"));
                    }
                    let item = ScalarType::parse(item_tok)
                        .ok_or_else(|| bad(format!("unknown list item type {item_tok}")))?;
                    Property::List { count, item }
                } else {
                    let name = tokens.next().ok_or_else(|| bad("property without a name"))?;
                    let kind = ScalarType::parse(first)
                        .ok_or_else(|| bad(format!("unknown property type {first}")))?;
                    Property::Scalar { name: name.to_string(), kind }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(bad(format!("unknown header keyword {other}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| bad("missing format line"))?;
    Ok(Header { encoding, elements })
}

fn read_binary_scalar(data: &[u8], pos: &mut usize, kind: ScalarType) -> Result<f64> {
    let size = kind.size();
    let bytes = data
        .get(*pos..*pos + size)
        .ok_or_else(|| bad("unexpected end of binary data"))?;
    *pos += size;
    Ok(match kind {
        ScalarType::I8 => bytes[0] as i8 as f64,
        ScalarType::U8 => bytes[0] as f64,
        ScalarType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
        ScalarType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
        ScalarType::I32 => {
            i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64
        }
        ScalarType::U32 => {
            u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64
        }
        ScalarType::F32 => {
            f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64
        }
        ScalarType::F64 => f64::from_le_bytes(bytes.try_into().unwrap()),
    })
}

/// Pull the next whitespace-separated ASCII token.
fn ascii_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < data.len() && data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos >= data.len() {
        return Err(bad("unexpected end of ASCII data"));
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos]).map_err(|_| bad("ASCII data is not valid UTF-8"))
}

fn read_ascii_scalar(data: &[u8], pos: &mut usize, kind: ScalarType) -> Result<f64> {
    let token = ascii_token(data, pos)?;
    match kind {
        ScalarType::F32 | ScalarType::F64 => token
            .parse::<f64>()
            .map_err(|_| bad(format!("bad float token {token:?}"))),
        _ => token
            .parse::<i64>()
            .map(|v| v as f64)
            .map_err(|_| bad(format!("bad integer token {token:?}"))),
    }
}

fn read_scalar(data: &[u8], pos: &mut usize, encoding: Encoding, kind: ScalarType) -> Result<f64> {
    match encoding {
        Encoding::BinaryLittleEndian => read_binary_scalar(data, pos, kind),
        Encoding::Ascii => read_ascii_scalar(data, pos, kind),
    }
}

/// List lengths are bounded so a hostile count cannot drive a near-infinite
/// skip loop; no real cloud attribute needs more.
const MAX_LIST_LEN: f64 = 1e9;

fn skip_property(data: &[u8], pos: &mut usize, encoding: Encoding, prop: &Property) -> Result<()> {
    match prop {
        Property::Scalar { kind, .. } => {
            read_scalar(data, pos, encoding, *kind)?;
        }
        Property::List { count, item } => {
            let n = read_scalar(data, pos, encoding, *count)?;
            if !(0.0..=MAX_LIST_LEN).contains(&n) {
                return Err(bad(format!("unreasonable list length {n}")));
            }
            let n = n as usize;
            match encoding {
                Encoding::BinaryLittleEndian => {
                    let total = n * item.size();
                    if data.len().saturating_sub(*pos) < total {
                        return Err(bad("unexpected end of binary data in list"));
                    }
                    *pos += total;
                }
                Encoding::Ascii => {
                    for _ in 0..n {
                        ascii_token(data, pos)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Column roles we extract from the vertex element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VertexRole {
    X,
    Y,
    Z,
    Red,
    Green,
    Blue,
    Opacity,
    Skip,
}

fn vertex_roles(element: &Element) -> Result<Vec<VertexRole>> {
    let mut roles = Vec::with_capacity(element.properties.len());
    for prop in &element.properties {
        let role = match prop {
            Property::List { .. } => VertexRole::Skip,
            Property::Scalar { name, kind } => {
                let role = match name.as_str() {
                    "x" => VertexRole::X,
                    "y" => VertexRole::Y,
                    "z" => VertexRole::Z,
                    "red" => VertexRole::Red,
                    "green" => VertexRole::Green,
                    "blue" => VertexRole::Blue,
                    "opacity" => VertexRole::Opacity,
                    _ => VertexRole::Skip,
                };
                match role {
                    VertexRole::X | VertexRole::Y | VertexRole::Z | VertexRole::Opacity => {
                        if !matches!(kind, ScalarType::F32 | ScalarType::F64) {
                            return Err(bad(format!(
                                "property {name} must be float or double"
                            )));
                        }
                    }
                    VertexRole::Red | VertexRole::Green | VertexRole::Blue => {
                        if !matches!(kind, ScalarType::U8) {
                            return Err(bad(format!("property {name} must be uchar")));
                        }
                    }
                    _ => {}
                }
                role
            }
        };
        if role != VertexRole::Skip && roles.contains(&role) {
            return Err(bad(format!("duplicate vertex property {role:?}").to_lowercase()));
        }
        roles.push(role);
    }
    for (role, name) in [(VertexRole::X, "x"), (VertexRole::Y, "y"), (VertexRole::Z, "z")] {
        if !roles.contains(&role) {
            return Err(Error::MissingPlyProperty { name });
        }
    }
    let has = |r: VertexRole| roles.contains(&r);
    let colors = [has(VertexRole::Red), has(VertexRole::Green), has(VertexRole::Blue)];
    if colors.iter().any(|&c| c) && !colors.iter().all(|&c| c) {
        return Err(bad("incomplete color triple: need all of red, green, blue"));
    }
    Ok(roles)
}

/// Parses a PLY byte stream into a point cloud.
pub fn parse_ply(data: &[u8]) -> Result<PointCloud> {
    let mut pos = 0;
    let header = parse_header(data, &mut pos)?;
    let vertex_index = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| bad("no vertex element"))?;

    let mut positions: Vec<Vector3<f64>> = Vec::new();
    let mut colors: Vec<[f64; 3]> = Vec::new();
    let mut opacities: Vec<f64> = Vec::new();
    let mut has_colors = false;
    let mut has_opacity = false;

    for (index, element) in header.elements.iter().enumerate() {
        if index == vertex_index {
            let roles = vertex_roles(element)?;
            has_colors = roles.contains(&VertexRole::Red);
            has_opacity = roles.contains(&VertexRole::Opacity);
            for _ in 0..element.count {
                let mut xyz = [0.0f64; 3];
                let mut rgb = [0.0f64; 3];
                let mut opacity = 0.0f64;
                for (prop, role) in element.properties.iter().zip(&roles) {
                    match role {
                        VertexRole::Skip => skip_property(data, &mut pos, header.encoding, prop)?,
                        _ => {
                            let kind = match prop {
                                Property::Scalar { kind, .. } => *kind,
                                Property::List { .. } => unreachable!("lists are Skip"),
                            };
                            let value = read_scalar(data, &mut pos, header.encoding, kind)?;
                            match role {
                                VertexRole::X => xyz[0] = value,
                                VertexRole::Y => xyz[1] = value,
                                VertexRole::Z => xyz[2] = value,
                                VertexRole::Red => rgb[0] = value / 255.0,
                                VertexRole::Green => rgb[1] = value / 255.0,
                                VertexRole::Blue => rgb[2] = value / 255.0,
                                VertexRole::Opacity => opacity = value,
                                VertexRole::Skip => unreachable!(),
                            }
                        }
                    }
                }
                positions.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
                if has_colors {
                    colors.push(rgb);
                }
                if has_opacity {
                    opacities.push(opacity);
                }
            }
        } else if index < vertex_index {
            // Elements declared before vertex must be skipped to reach the
            // vertex data; anything after it can be ignored outright.
            for _ in 0..element.count {
                for prop in &element.properties {
                    skip_property(data, &mut pos, header.encoding, prop)?;
                }
            }
        }
    }

    PointCloud::with_attributes(
        positions,
        if has_colors { Some(colors) } else { None },
        if has_opacity { Some(opacities) } else { None },
    )
}

/// Loads a point cloud from a PLY file (binary little-endian or ASCII).
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&data)
}

/// Encodes a cloud as binary little-endian PLY (float32 positions, uchar
/// colors, float32 opacity).
pub fn encode_ply(cloud: &PointCloud) -> Vec<u8> {
    let n = cloud.positions.len();
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {n}\n"));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if cloud.opacities.is_some() {
        header.push_str("property float opacity\n");
    }
    header.push_str("end_header\n");

    let row = 12
        + if cloud.colors.is_some() { 3 } else { 0 }
        + if cloud.opacities.is_some() { 4 } else { 0 };
    let mut out = Vec::with_capacity(header.len() + n * row);
    out.extend_from_slice(header.as_bytes());
    for i in 0..n {
        let p = cloud.positions[i];
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
        if let Some(colors) = &cloud.colors {
            for c in colors[i] {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        if let Some(opacities) = &cloud.opacities {
            out.extend_from_slice(&(opacities[i] as f32).to_le_bytes());
        }
    }
    out
}

/// Writes a cloud as binary little-endian PLY.
pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ply(cloud)).map_err(|e| Error::io(path, e))
}
