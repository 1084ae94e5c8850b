use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use super::{weld, MeshError, Point, TriMesh, DEFAULT_WELD_TOLERANCE, DEGENERATE_AREA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Stl,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
    }
}

impl FromStr for MeshFormat {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(Self::Obj),
            "stl" => Ok(Self::Stl),
            "ply" => Ok(Self::Ply),
            other => Err(MeshError::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOptions {
    pub weld_tolerance: f64,
    /// Uniform scale applied to positions before welding (e.g. 0.001 for mm files).
    pub scale: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { weld_tolerance: DEFAULT_WELD_TOLERANCE, scale: 1.0 }
    }
}

/// What the loader had to do to produce a valid [`TriMesh`].
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct LoadReport {
    pub authored_vertices: usize,
    pub welded_vertices: usize,
    pub fan_triangulated_polygons: usize,
    pub dropped_degenerate_faces: usize,
    pub dropped_unreferenced_vertices: usize,
}

#[derive(Clone, Debug)]
pub struct LoadedMesh {
    pub mesh: TriMesh,
    pub report: LoadReport,
}

pub fn load_mesh(
    path: impl AsRef<Path>,
    format: MeshFormat,
    options: &LoadOptions,
) -> Result<LoadedMesh, MeshError> {
    let path = path.as_ref();
    let bytes = fs::read(path)
        .map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    parse_mesh(&bytes, format, options)
}

pub fn parse_mesh(
    bytes: &[u8],
    format: MeshFormat,
    options: &LoadOptions,
) -> Result<LoadedMesh, MeshError> {
    if bytes.is_empty() {
        return Err(MeshError::Parse { line: 0, message: "empty input".into() });
    }
    let soup = match format {
        MeshFormat::Obj => parse_obj(as_text(bytes)?)?,
        MeshFormat::Stl => parse_stl(bytes)?,
        MeshFormat::Ply => parse_ply(as_text(bytes)?)?,
    };
    soup.build(options)
}

fn as_text(bytes: &[u8]) -> Result<&str, MeshError> {
    std::str::from_utf8(bytes)
        .map_err(|e| MeshError::Parse { line: 0, message: format!("not UTF-8 text: {e}") })
}

/// Positions and polygons as authored, before welding.
#[derive(Default)]
struct Soup {
    positions: Vec<Point>,
    polygons: Vec<Vec<u32>>,
}

impl Soup {
    fn build(self, options: &LoadOptions) -> Result<LoadedMesh, MeshError> {
        let mut report = LoadReport { authored_vertices: self.positions.len(), ..Default::default() };
        let scaled: Vec<Point> = self.positions.iter().map(|p| p * options.scale).collect();
        let (unique, remap) = weld(&scaled, options.weld_tolerance);
        report.welded_vertices = scaled.len() - unique.len();

        let mut faces = Vec::new();
        for poly in &self.polygons {
            if poly.len() > 3 {
                report.fan_triangulated_polygons += 1;
            }
            for k in 1..poly.len().saturating_sub(1) {
                let f = [
                    remap[poly[0] as usize],
                    remap[poly[k] as usize],
                    remap[poly[k + 1] as usize],
                ];
                let area = super::triangle_area(&[
                    unique[f[0] as usize],
                    unique[f[1] as usize],
                    unique[f[2] as usize],
                ]);
                if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] || area < DEGENERATE_AREA {
                    report.dropped_degenerate_faces += 1;
                } else {
                    faces.push(f);
                }
            }
        }
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }

        // Compact away vertices no face uses, keeping authored order.
        let mut used = vec![false; unique.len()];
        for f in &faces {
            for &i in f {
                used[i as usize] = true;
            }
        }
        let mut new_index = vec![u32::MAX; unique.len()];
        let mut vertices = Vec::new();
        for (i, p) in unique.iter().enumerate() {
            if used[i] {
                new_index[i] = vertices.len() as u32;
                vertices.push(*p);
            }
        }
        for f in &mut faces {
            for i in f.iter_mut() {
                *i = new_index[*i as usize];
            }
        }
        report.dropped_unreferenced_vertices = unique.len() - vertices.len();
        let mesh = TriMesh::new(vertices, faces)?;
        Ok(LoadedMesh { mesh, report })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { line, message: message.into() }
}

fn parse_f64(token: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let token = token.ok_or_else(|| parse_err(line, "missing coordinate"))?;
    let value: f64 = token.parse().map_err(|_| parse_err(line, format!("bad number `{token}`")))?;
    if !value.is_finite() {
        return Err(parse_err(line, format!("non-finite number `{token}`")));
    }
    Ok(value)
}

fn parse_obj(text: &str) -> Result<Soup, MeshError> {
    let mut soup = Soup::default();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let x = parse_f64(tokens.next(), line)?;
                let y = parse_f64(tokens.next(), line)?;
                let z = parse_f64(tokens.next(), line)?;
                soup.positions.push(Point::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let idx = tok.split('/').next().unwrap_or_default();
                    let i: i64 =
                        idx.parse().map_err(|_| parse_err(line, format!("bad index `{tok}`")))?;
                    let n = soup.positions.len() as i64;
                    let resolved = if i > 0 { i - 1 } else { n + i };
                    if i == 0 || resolved < 0 || resolved >= n {
                        return Err(parse_err(line, format!("index {i} out of range")));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(line, "face with fewer than 3 vertices"));
                }
                soup.polygons.push(poly);
            }
            _ => {}
        }
    }
    Ok(soup)
}

fn parse_stl(bytes: &[u8]) -> Result<Soup, MeshError> {
    if bytes.len() >= 84 {
        let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if 84 + 50 * count == bytes.len() {
            return Ok(parse_binary_stl(&bytes[84..], count));
        }
    }
    let text = as_text(bytes)?;
    if !text.trim_start().starts_with("solid") {
        return Err(parse_err(0, "neither binary STL nor ASCII STL"));
    }
    parse_ascii_stl(text)
}

fn parse_binary_stl(records: &[u8], count: usize) -> Soup {
    let mut soup = Soup::default();
    let read = |at: usize| f32::from_le_bytes([records[at], records[at + 1], records[at + 2], records[at + 3]]);
    for r in 0..count {
        let base = r * 50 + 12;
        let mut poly = Vec::with_capacity(3);
        for v in 0..3 {
            let o = base + v * 12;
            soup.positions.push(Point::new(read(o) as f64, read(o + 4) as f64, read(o + 8) as f64));
            poly.push((soup.positions.len() - 1) as u32);
        }
        soup.polygons.push(poly);
    }
    soup
}

fn parse_ascii_stl(text: &str) -> Result<Soup, MeshError> {
    let mut soup = Soup::default();
    let mut current: Option<Vec<u32>> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("outer") => current = Some(Vec::new()),
            Some("vertex") => {
                let poly = current.as_mut().ok_or_else(|| parse_err(line, "vertex outside loop"))?;
                let x = parse_f64(tokens.next(), line)?;
                let y = parse_f64(tokens.next(), line)?;
                let z = parse_f64(tokens.next(), line)?;
                soup.positions.push(Point::new(x, y, z));
                poly.push((soup.positions.len() - 1) as u32);
            }
            Some("endloop") => {
                let poly = current.take().ok_or_else(|| parse_err(line, "endloop without loop"))?;
                if poly.len() < 3 {
                    return Err(parse_err(line, "facet with fewer than 3 vertices"));
                }
                soup.polygons.push(poly);
            }
            _ => {}
        }
    }
    if current.is_some() {
        return Err(parse_err(text.lines().count(), "unterminated facet loop"));
    }
    Ok(soup)
}

fn parse_ply(text: &str) -> Result<Soup, MeshError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(1, "missing `ply` magic")),
    }
    // (name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    loop {
        let (ln, raw) = lines.next().ok_or_else(|| parse_err(0, "missing end_header"))?;
        let line = ln + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", ..] => {}
            ["format", other, ..] => {
                return Err(parse_err(line, format!("unsupported PLY format `{other}`")));
            }
            ["element", name, count] => {
                let count = count.parse().map_err(|_| parse_err(line, "bad element count"))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(line, "property before element"))?;
                el.2.push(name.to_string());
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    let mut soup = Soup::default();
    for (name, count, props) in &elements {
        for _ in 0..*count {
            let (ln, raw) = lines.next().ok_or_else(|| parse_err(0, "truncated PLY body"))?;
            let line = ln + 1;
            let tokens: Vec<&str> = raw.split_whitespace().collect();
            match name.as_str() {
                "vertex" => {
                    let coord = |axis: &str| -> Result<f64, MeshError> {
                        let i = props
                            .iter()
                            .position(|p| p == axis)
                            .ok_or_else(|| parse_err(line, format!("vertex lacks `{axis}`")))?;
                        parse_f64(tokens.get(i).copied(), line)
                    };
                    soup.positions.push(Point::new(coord("x")?, coord("y")?, coord("z")?));
                }
                "face" => {
                    let n: usize = tokens
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(line, "bad face list length"))?;
                    if n < 3 || tokens.len() < n + 1 {
                        return Err(parse_err(line, "face with fewer than 3 vertices"));
                    }
                    let mut poly = Vec::with_capacity(n);
                    for t in &tokens[1..=n] {
                        let i: usize = t.parse().map_err(|_| parse_err(line, format!("bad index `{t}`")))?;
                        if i >= soup.positions.len() {
                            return Err(parse_err(line, format!("index {i} out of range")));
                        }
                        poly.push(i as u32);
                    }
                    soup.polygons.push(poly);
                }
                _ => {}
            }
        }
    }
    Ok(soup)
}

/// Writes positions and 1-based faces. Coordinates use the shortest exact
/// decimal form, so a reload reproduces them bit for bit.
pub fn write_obj(mesh: &TriMesh, mut out: impl Write) -> io::Result<()> {
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Little-endian binary STL: 80-byte header, triangle count, 50-byte records.
pub fn write_stl(mesh: &TriMesh, mut out: impl Write) -> io::Result<()> {
    let mut header = [0u8; 80];
    let tag = b"skinkit binary stl";
    header[..tag.len()].copy_from_slice(tag);
    out.write_all(&header)?;
    out.write_all(&(mesh.face_count() as u32).to_le_bytes())?;
    for f in 0..mesh.face_count() {
        let n = mesh.face_normal(f);
        let mut record = Vec::with_capacity(50);
        for c in n.iter() {
            record.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        for p in mesh.triangle(f) {
            for c in p.coords.iter() {
                record.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        record.extend_from_slice(&0u16.to_le_bytes());
        out.write_all(&record)?;
    }
    Ok(())
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    save_with(path.as_ref(), |w| write_obj(mesh, w))
}

pub fn save_stl(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    save_with(path.as_ref(), |w| write_stl(mesh, w))
}

fn save_with(path: &Path, f: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>) -> Result<(), MeshError> {
    let io_err = |source| MeshError::Io { path: path.display().to_string(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut writer = io::BufWriter::new(file);
    f(&mut writer).map_err(io_err)?;
    writer.flush().map_err(io_err)
}
