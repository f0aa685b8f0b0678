//! PLY point cloud reader and writer.
//!
//! Reads `ascii 1.0` and `binary_little_endian 1.0` files. The `vertex`
//! element must carry `x`, `y`, `z` (float or double) and `red`, `green`,
//! `blue` (uchar); other vertex properties and other elements are skipped.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::cloud::PointCloud;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlyErrorKind {
    Io(String),
    BadMagic,
    MalformedHeader(String),
    UnsupportedFormat(String),
    MissingProperty(&'static str),
    UnsupportedType { property: String, ty: String },
    TruncatedPayload,
    InvalidValue(String),
    InvalidPoint(usize),
}

impl fmt::Display for PlyErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "i/o error: {e}"),
            Self::BadMagic => write!(f, "missing \"ply\" magic line"),
            Self::MalformedHeader(msg) => write!(f, "malformed header: {msg}"),
            Self::UnsupportedFormat(fmt_name) => write!(f, "unsupported format \"{fmt_name}\""),
            Self::MissingProperty(p) => write!(f, "vertex element has no \"{p}\" property"),
            Self::UnsupportedType { property, ty } => {
                write!(f, "property \"{property}\" has unsupported type \"{ty}\"")
            }
            Self::TruncatedPayload => write!(f, "truncated payload"),
            Self::InvalidValue(v) => write!(f, "invalid value \"{v}\""),
            Self::InvalidPoint(i) => write!(f, "invalid point {i}: non-finite position"),
        }
    }
}

/// A parse failure and the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct PlyError {
    pub kind: PlyErrorKind,
    pub offset: u64,
}

impl PlyError {
    fn new(kind: PlyErrorKind, offset: u64) -> Self {
        Self { kind, offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
}

/// Position of the six required vertex properties.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
}

impl VertexLayout {
    fn resolve(element: &Element, offset: u64) -> Result<Self, PlyError> {
        let find = |name: &'static str, allowed: &[Scalar]| -> Result<usize, PlyError> {
            let idx = element
                .properties
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| PlyError::new(PlyErrorKind::MissingProperty(name), offset))?;
            match &element.properties[idx].kind {
                PropertyKind::Scalar(s) if allowed.contains(s) => Ok(idx),
                other => Err(PlyError::new(
                    PlyErrorKind::UnsupportedType {
                        property: name.to_string(),
                        ty: format!("{other:?}"),
                    },
                    offset,
                )),
            }
        };
        let float = [Scalar::F32, Scalar::F64];
        let byte = [Scalar::U8];
        Ok(Self {
            xyz: [find("x", &float)?, find("y", &float)?, find("z", &float)?],
            rgb: [
                find("red", &byte)?,
                find("green", &byte)?,
                find("blue", &byte)?,
            ],
        })
    }
}

/// Reader that counts consumed bytes for error offsets.
struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: BufRead> Counting<R> {
    fn read_line(&mut self) -> Result<Option<String>, PlyError> {
        let mut buf = Vec::new();
        let n = self
            .inner
            .read_until(b'\n', &mut buf)
            .map_err(|e| PlyError::new(PlyErrorKind::Io(e.to_string()), self.offset))?;
        if n == 0 {
            return Ok(None);
        }
        self.offset += n as u64;
        let line = String::from_utf8(buf).map_err(|_| {
            PlyError::new(
                PlyErrorKind::MalformedHeader("non-UTF-8 header line".into()),
                self.offset,
            )
        })?;
        Ok(Some(line.trim_end_matches(['\n', '\r']).to_string()))
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), PlyError> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(PlyError::new(PlyErrorKind::TruncatedPayload, self.offset))
            }
            Err(e) => Err(PlyError::new(PlyErrorKind::Io(e.to_string()), self.offset)),
        }
    }
}

fn parse_header<R: BufRead>(reader: &mut Counting<R>) -> Result<Header, PlyError> {
    let malformed = |msg: String, offset| PlyError::new(PlyErrorKind::MalformedHeader(msg), offset);
    match reader.read_line()? {
        Some(l) if l == "ply" => {}
        _ => return Err(PlyError::new(PlyErrorKind::BadMagic, 0)),
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let start = reader.offset;
        let line = reader
            .read_line()?
            .ok_or_else(|| malformed("missing end_header".into(), start))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", name, version] => {
                if *version != "1.0" {
                    return Err(PlyError::new(
                        PlyErrorKind::UnsupportedFormat(format!("{name} {version}")),
                        start,
                    ));
                }
                format = Some(match *name {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(PlyError::new(
                            PlyErrorKind::UnsupportedFormat(other.to_string()),
                            start,
                        ))
                    }
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| malformed(format!("bad element count \"{count}\""), start))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count_ty, item_ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before element".into(), start))?;
                let parse = |t: &str| {
                    Scalar::parse(t).ok_or_else(|| {
                        PlyError::new(
                            PlyErrorKind::UnsupportedType {
                                property: name.to_string(),
                                ty: t.to_string(),
                            },
                            start,
                        )
                    })
                };
                element.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::List {
                        count: parse(count_ty)?,
                        item: parse(item_ty)?,
                    },
                });
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before element".into(), start))?;
                let scalar = Scalar::parse(ty).ok_or_else(|| {
                    PlyError::new(
                        PlyErrorKind::UnsupportedType {
                            property: name.to_string(),
                            ty: ty.to_string(),
                        },
                        start,
                    )
                })?;
                element.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::Scalar(scalar),
                });
            }
            ["end_header"] => break,
            _ => return Err(malformed(format!("unexpected line \"{line}\""), start)),
        }
    }
    let format = format.ok_or_else(|| malformed("no format line".into(), reader.offset))?;
    Ok(Header { format, elements })
}

/// Reads a PLY file into a point cloud.
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    let file =
        File::open(path.as_ref()).map_err(|e| PlyError::new(PlyErrorKind::Io(e.to_string()), 0))?;
    read_ply(BufReader::with_capacity(1 << 20, file))
}

/// Parses PLY data from any buffered reader.
pub fn read_ply<R: BufRead>(reader: R) -> Result<PointCloud, PlyError> {
    let mut reader = Counting {
        inner: reader,
        offset: 0,
    };
    let header = parse_header(&mut reader)?;
    let body_start = reader.offset;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| {
            PlyError::new(
                PlyErrorKind::MalformedHeader("no vertex element".into()),
                body_start,
            )
        })?;
    let layout = VertexLayout::resolve(&header.elements[vertex_idx], body_start)?;
    let (positions, colors) = match header.format {
        PlyFormat::BinaryLittleEndian => read_binary(&mut reader, &header, vertex_idx, &layout)?,
        PlyFormat::Ascii => read_ascii(&mut reader, &header, vertex_idx, &layout)?,
    };
    PointCloud::new(positions, colors).map_err(|e| match e {
        crate::error::GeometryError::InvalidPoint { index } => {
            PlyError::new(PlyErrorKind::InvalidPoint(index), body_start)
        }
        other => PlyError::new(PlyErrorKind::InvalidValue(other.to_string()), body_start),
    })
}

type Vertices = (Vec<[f32; 3]>, Vec<[u8; 3]>);

fn read_binary<R: BufRead>(
    reader: &mut Counting<R>,
    header: &Header,
    vertex_idx: usize,
    layout: &VertexLayout,
) -> Result<Vertices, PlyError> {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut values = Vec::new();
    let mut scratch = [0u8; 8];
    for (ei, element) in header.elements.iter().enumerate() {
        let is_vertex = ei == vertex_idx;
        if is_vertex {
            positions.reserve_exact(element.count);
            colors.reserve_exact(element.count);
        }
        for _ in 0..element.count {
            values.clear();
            for prop in &element.properties {
                match prop.kind {
                    PropertyKind::Scalar(s) => {
                        let buf = &mut scratch[..s.size()];
                        reader.read_exact(buf)?;
                        values.push(s.decode_le(buf));
                    }
                    PropertyKind::List { count, item } => {
                        let buf = &mut scratch[..count.size()];
                        reader.read_exact(buf)?;
                        let n = count.decode_le(buf);
                        if !(n >= 0.0) {
                            return Err(PlyError::new(
                                PlyErrorKind::InvalidValue(n.to_string()),
                                reader.offset,
                            ));
                        }
                        let mut skip = vec![0u8; n as usize * item.size()];
                        reader.read_exact(&mut skip)?;
                        values.push(f64::NAN);
                    }
                }
            }
            if is_vertex {
                positions.push(layout.xyz.map(|i| values[i] as f32));
                colors.push(layout.rgb.map(|i| values[i] as u8));
            }
        }
        if is_vertex {
            // later elements are not needed
            break;
        }
    }
    Ok((positions, colors))
}

fn read_ascii<R: BufRead>(
    reader: &mut Counting<R>,
    header: &Header,
    vertex_idx: usize,
    layout: &VertexLayout,
) -> Result<Vertices, PlyError> {
    let base = reader.offset;
    let mut body = Vec::new();
    reader
        .inner
        .read_to_end(&mut body)
        .map_err(|e| PlyError::new(PlyErrorKind::Io(e.to_string()), base))?;
    let text = std::str::from_utf8(&body).map_err(|e| {
        PlyError::new(
            PlyErrorKind::InvalidValue("non-UTF-8 ascii body".into()),
            base + e.valid_up_to() as u64,
        )
    })?;
    let end_offset = base + body.len() as u64;
    let mut tokens = text.split_ascii_whitespace();
    let offset_of = |tok: &str| base + (tok.as_ptr() as usize - text.as_ptr() as usize) as u64;
    let mut next = || {
        tokens
            .next()
            .ok_or_else(|| PlyError::new(PlyErrorKind::TruncatedPayload, end_offset))
    };

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut values: Vec<&str> = Vec::new();
    for (ei, element) in header.elements.iter().enumerate() {
        let is_vertex = ei == vertex_idx;
        for _ in 0..element.count {
            values.clear();
            for prop in &element.properties {
                match prop.kind {
                    PropertyKind::Scalar(_) => values.push(next()?),
                    PropertyKind::List { .. } => {
                        let tok = next()?;
                        let n: usize = tok.parse().map_err(|_| {
                            PlyError::new(PlyErrorKind::InvalidValue(tok.into()), offset_of(tok))
                        })?;
                        for _ in 0..n {
                            next()?;
                        }
                        values.push("");
                    }
                }
            }
            if is_vertex {
                let mut p = [0f32; 3];
                for (k, &i) in layout.xyz.iter().enumerate() {
                    let tok = values[i];
                    p[k] = tok.parse::<f64>().map_err(|_| {
                        PlyError::new(PlyErrorKind::InvalidValue(tok.into()), offset_of(tok))
                    })? as f32;
                }
                let mut c = [0u8; 3];
                for (k, &i) in layout.rgb.iter().enumerate() {
                    let tok = values[i];
                    c[k] = tok.parse::<u8>().map_err(|_| {
                        PlyError::new(PlyErrorKind::InvalidValue(tok.into()), offset_of(tok))
                    })?;
                }
                positions.push(p);
                colors.push(c);
            }
        }
        if is_vertex {
            break;
        }
    }
    Ok((positions, colors))
}

/// Writes a cloud with `float` positions and `uchar` colors.
pub fn write_ply(
    path: impl AsRef<Path>,
    cloud: &PointCloud,
    format: PlyFormat,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply_to(&mut w, cloud, format)?;
    w.flush()
}

pub fn write_ply_to<W: Write>(
    w: &mut W,
    cloud: &PointCloud,
    format: PlyFormat,
) -> std::io::Result<()> {
    let fmt_name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {fmt_name} 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.count()
    )?;
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        match format {
            PlyFormat::Ascii => {
                writeln!(w, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2])?
            }
            PlyFormat::BinaryLittleEndian => {
                for v in p {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(c)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(bytes: &[u8]) -> Result<PointCloud, PlyError> {
        read_ply(bytes)
    }

    #[test]
    fn single_ascii_vertex() {
        let cloud = parse(
            b"ply\nformat ascii 1.0\ncomment hi\nelement vertex 1\nproperty float x\n\
              property float y\nproperty float z\nproperty uchar red\nproperty uchar green\n\
              property uchar blue\nend_header\n1.5 -2 0.25 10 20 30\n",
        )
        .unwrap();
        assert_eq!(cloud.count(), 1);
        assert_eq!(cloud.positions()[0], [1.5, -2.0, 0.25]);
        assert_eq!(cloud.colors()[0], [10, 20, 30]);
    }

    #[test]
    fn skips_extra_properties_and_elements() {
        let mut data = b"ply\nformat binary_little_endian 1.0\nelement camera 1\nproperty int id\n\
              element vertex 2\nproperty float x\nproperty float nx\nproperty float y\n\
              property float z\nproperty list uchar int idx\nproperty uchar red\n\
              property uchar green\nproperty uchar blue\nproperty uchar alpha\n\
              element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            .to_vec();
        data.extend_from_slice(&7i32.to_le_bytes());
        for (x, y, z, c) in [(1.0f32, 2.0f32, 3.0f32, 9u8), (4.0, 5.0, 6.0, 200)] {
            data.extend_from_slice(&x.to_le_bytes());
            data.extend_from_slice(&0.5f32.to_le_bytes());
            data.extend_from_slice(&y.to_le_bytes());
            data.extend_from_slice(&z.to_le_bytes());
            data.push(2);
            data.extend_from_slice(&1i32.to_le_bytes());
            data.extend_from_slice(&2i32.to_le_bytes());
            data.extend_from_slice(&[c, c, c, 255]);
        }
        let cloud = parse(&data).unwrap();
        assert_eq!(cloud.positions(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(cloud.colors(), &[[9, 9, 9], [200, 200, 200]]);
    }

    #[test]
    fn truncated_payload() {
        let mut text = String::from(
            "ply\nformat ascii 1.0\nelement vertex 10\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        );
        for i in 0..9 {
            text.push_str(&format!("{i} 0 0 1 2 3\n"));
        }
        let err = parse(text.as_bytes()).unwrap_err();
        assert_eq!(err.kind, PlyErrorKind::TruncatedPayload);
        assert_eq!(err.offset, text.len() as u64);
        assert!(err.to_string().contains("truncated payload"));

        let cloud = PointCloud::new(vec![[1.0; 3]; 10], vec![[1; 3]; 10]).unwrap();
        let mut bin = Vec::new();
        write_ply_to(&mut bin, &cloud, PlyFormat::BinaryLittleEndian).unwrap();
        bin.truncate(bin.len() - 15);
        assert_eq!(
            parse(&bin).unwrap_err().kind,
            PlyErrorKind::TruncatedPayload
        );
    }

    #[test]
    fn header_errors() {
        assert_eq!(parse(b"plx\n").unwrap_err().kind, PlyErrorKind::BadMagic);
        let err = parse(b"ply\nformat binary_big_endian 1.0\nend_header\n").unwrap_err();
        assert!(matches!(err.kind, PlyErrorKind::UnsupportedFormat(_)));
        assert_eq!(err.offset, 4);
        let err = parse(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n")
            .unwrap_err();
        assert_eq!(err.kind, PlyErrorKind::MissingProperty("y"));
        let err = parse(b"ply\nformat ascii 1.0\nelement vertex 1\n").unwrap_err();
        assert!(matches!(err.kind, PlyErrorKind::MalformedHeader(_)));
        let err = parse(
            b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
              property float z\nproperty float red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        )
        .unwrap_err();
        assert!(matches!(err.kind, PlyErrorKind::UnsupportedType { .. }));
    }

    #[test]
    fn bad_ascii_value_reports_offset() {
        let head = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
                    property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
        let text = format!("{head}0 0 0 1 2 300\n");
        let err = parse(text.as_bytes()).unwrap_err();
        assert_eq!(err.kind, PlyErrorKind::InvalidValue("300".into()));
        assert_eq!(err.offset as usize, head.len() + 10);
        let text = format!("{head}nan 0 0 1 2 3\n");
        assert_eq!(
            parse(text.as_bytes()).unwrap_err().kind,
            PlyErrorKind::InvalidPoint(0)
        );
    }
}
