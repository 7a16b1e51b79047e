use std::fmt::Write as _;

use super::{triangle_normal, GeometryError, Vec3};

const HEADER_LEN: usize = 80;
const TRIANGLE_STRIDE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StlFormat {
    Binary,
    Ascii,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StlTriangle {
    pub normal: [f32; 3],
    pub vertices: [[f32; 3]; 3],
    pub attribute: u16,
}

impl StlTriangle {
    /// Builds a facet from f64 vertices; the stored normal follows the winding.
    pub fn from_vertices(a: &Vec3, b: &Vec3, c: &Vec3) -> Self {
        let n = triangle_normal(a, b, c);
        Self {
            normal: to_f32(&n),
            vertices: [to_f32(a), to_f32(b), to_f32(c)],
            attribute: 0,
        }
    }

    pub fn vertex(&self, i: usize) -> Vec3 {
        let v = self.vertices[i];
        Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64)
    }

    pub fn winding_normal(&self) -> Vec3 {
        triangle_normal(&self.vertex(0), &self.vertex(1), &self.vertex(2))
    }
}

fn to_f32(v: &Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

/// A triangle soup as stored in an STL file.
#[derive(Debug, Clone, PartialEq)]
pub struct StlDocument {
    pub name: String,
    pub format: StlFormat,
    pub triangles: Vec<StlTriangle>,
}

impl StlDocument {
    pub fn new(name: impl Into<String>, triangles: Vec<StlTriangle>) -> Self {
        Self {
            name: name.into(),
            format: StlFormat::Binary,
            triangles,
        }
    }

    pub fn from_faces<'a>(name: impl Into<String>, faces: impl IntoIterator<Item = &'a [Vec3; 3]>) -> Self {
        let triangles = faces
            .into_iter()
            .map(|[a, b, c]| StlTriangle::from_vertices(a, b, c))
            .collect();
        Self::new(name, triangles)
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Vertex triples widened to f64.
    pub fn faces(&self) -> Vec<[Vec3; 3]> {
        self.triangles
            .iter()
            .map(|t| [t.vertex(0), t.vertex(1), t.vertex(2)])
            .collect()
    }
}

/// Parses binary or ASCII STL. The data is treated as ASCII only when it
/// starts with `solid` and the whole token stream follows the facet grammar.
pub fn parse_stl(bytes: &[u8]) -> Result<StlDocument, GeometryError> {
    let looks_ascii = bytes.len() >= 5 && bytes[..5].eq_ignore_ascii_case(b"solid");
    if looks_ascii {
        match parse_ascii(bytes) {
            Ok(doc) => return Ok(doc),
            Err(ascii_err) => {
                // Binary files are allowed to start their header with "solid".
                if binary_size_consistent(bytes) {
                    return parse_binary(bytes);
                }
                return Err(ascii_err);
            }
        }
    }
    parse_binary(bytes)
}

fn binary_size_consistent(bytes: &[u8]) -> bool {
    if bytes.len() < HEADER_LEN + 4 {
        return false;
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    bytes.len() == HEADER_LEN + 4 + count * TRIANGLE_STRIDE
}

fn parse_binary(bytes: &[u8]) -> Result<StlDocument, GeometryError> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(GeometryError::TruncatedFile(format!(
            "{} bytes is shorter than the 84-byte binary preamble",
            bytes.len()
        )));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 4 + count * TRIANGLE_STRIDE;
    if bytes.len() != expected {
        return Err(GeometryError::TruncatedFile(format!(
            "header declares {count} triangles ({expected} bytes) but data has {} bytes",
            bytes.len()
        )));
    }
    if count == 0 {
        return Err(GeometryError::EmptyModel);
    }
    let header = &bytes[..HEADER_LEN];
    let name_end = header.iter().position(|&b| b == 0).unwrap_or(HEADER_LEN);
    let name = String::from_utf8_lossy(&header[..name_end]).into_owned();

    let read_vec = |chunk: &[u8]| -> [f32; 3] {
        [
            f32::from_le_bytes(chunk[0..4].try_into().unwrap()),
            f32::from_le_bytes(chunk[4..8].try_into().unwrap()),
            f32::from_le_bytes(chunk[8..12].try_into().unwrap()),
        ]
    };
    let triangles = bytes[HEADER_LEN + 4..]
        .chunks_exact(TRIANGLE_STRIDE)
        .map(|chunk| StlTriangle {
            normal: read_vec(&chunk[0..12]),
            vertices: [read_vec(&chunk[12..24]), read_vec(&chunk[24..36]), read_vec(&chunk[36..48])],
            attribute: u16::from_le_bytes([chunk[48], chunk[49]]),
        })
        .collect();
    Ok(StlDocument {
        name,
        format: StlFormat::Binary,
        triangles,
    })
}

struct Tokens<'a> {
    iter: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let iter: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .flat_map(|(i, line)| line.split_whitespace().map(move |tok| (i + 1, tok))),
        );
        Self {
            iter: iter.peekable(),
            last_line: 1,
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        let (line, tok) = self.iter.next()?;
        self.last_line = line;
        Some(tok)
    }

    fn peek(&mut self) -> Option<&'a str> {
        self.iter.peek().map(|(_, t)| *t)
    }

    fn error(&self, message: impl Into<String>) -> GeometryError {
        GeometryError::MalformedAscii {
            line: self.last_line,
            message: message.into(),
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<(), GeometryError> {
        match self.next() {
            Some(tok) if tok.eq_ignore_ascii_case(keyword) => Ok(()),
            Some(tok) => Err(self.error(format!("expected `{keyword}`, found `{tok}`"))),
            None => Err(self.error(format!("expected `{keyword}`, found end of file"))),
        }
    }

    fn float(&mut self) -> Result<f32, GeometryError> {
        let tok = self.next().ok_or_else(|| self.error("expected a number, found end of file"))?;
        tok.parse::<f32>()
            .map_err(|_| self.error(format!("`{tok}` is not a number")))
    }

    fn vec3(&mut self) -> Result<[f32; 3], GeometryError> {
        Ok([self.float()?, self.float()?, self.float()?])
    }
}

fn parse_ascii(bytes: &[u8]) -> Result<StlDocument, GeometryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| GeometryError::MalformedAscii {
        line: 1,
        message: format!("not valid UTF-8: {e}"),
    })?;
    // The solid name is the rest of the first line.
    let first_line = text.lines().next().unwrap_or("");
    let name = first_line.trim()[5..].trim().to_string();
    let body_start = first_line.len();
    let mut tokens = Tokens::new(&text[body_start..]);
    tokens.last_line = 1;

    let mut triangles = Vec::new();
    loop {
        match tokens.next() {
            Some(tok) if tok.eq_ignore_ascii_case("facet") => {
                tokens.expect("normal")?;
                let normal = tokens.vec3()?;
                tokens.expect("outer")?;
                tokens.expect("loop")?;
                let mut vertices = [[0.0f32; 3]; 3];
                for v in &mut vertices {
                    tokens.expect("vertex")?;
                    *v = tokens.vec3()?;
                }
                tokens.expect("endloop")?;
                tokens.expect("endfacet")?;
                triangles.push(StlTriangle {
                    normal,
                    vertices,
                    attribute: 0,
                });
            }
            Some(tok) if tok.eq_ignore_ascii_case("endsolid") => {
                // Optional trailing name; anything after it is an error.
                if tokens.peek().is_some() {
                    tokens.next();
                }
                if let Some(extra) = tokens.next() {
                    return Err(tokens.error(format!("unexpected `{extra}` after endsolid")));
                }
                break;
            }
            Some(tok) => return Err(tokens.error(format!("expected `facet` or `endsolid`, found `{tok}`"))),
            None => return Err(tokens.error("missing `endsolid`")),
        }
    }
    if triangles.is_empty() {
        return Err(GeometryError::EmptyModel);
    }
    Ok(StlDocument {
        name,
        format: StlFormat::Ascii,
        triangles,
    })
}

/// Serializes a document. Binary output stores the facet normals as given;
/// ASCII output recomputes them from the vertex winding.
pub fn write_stl(doc: &StlDocument, format: StlFormat) -> Result<Vec<u8>, GeometryError> {
    if doc.triangles.is_empty() {
        return Err(GeometryError::EmptyModel);
    }
    Ok(match format {
        StlFormat::Binary => write_binary(doc),
        StlFormat::Ascii => write_ascii(doc).into_bytes(),
    })
}

fn write_binary(doc: &StlDocument) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 + doc.triangles.len() * TRIANGLE_STRIDE);
    let mut header = [0u8; HEADER_LEN];
    let name = doc.name.as_bytes();
    let n = name.len().min(HEADER_LEN);
    header[..n].copy_from_slice(&name[..n]);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(doc.triangles.len() as u32).to_le_bytes());
    for tri in &doc.triangles {
        for c in tri.normal {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for v in &tri.vertices {
            for c in v {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out.extend_from_slice(&tri.attribute.to_le_bytes());
    }
    out
}

fn write_ascii(doc: &StlDocument) -> String {
    let name = doc.name.replace(['\n', '\r'], " ");
    let mut s = String::new();
    let _ = writeln!(s, "solid {name}");
    for tri in &doc.triangles {
        let n = tri.winding_normal();
        let _ = writeln!(s, "  facet normal {:e} {:e} {:e}", n.x as f32, n.y as f32, n.z as f32);
        s.push_str("    outer loop\n");
        for v in &tri.vertices {
            let _ = writeln!(s, "      vertex {:e} {:e} {:e}", v[0], v[1], v[2]);
        }
        s.push_str("    endloop\n  endfacet\n");
    }
    let _ = writeln!(s, "endsolid {name}");
    s
}
