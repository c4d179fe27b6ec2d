//! Reader/writer for the unorganized subset of the PCD format.
//!
//! Supported: `DATA ascii` and `DATA binary` (little-endian), one value per
//! field (`COUNT 1`), types `F` (4/8 bytes), `U` and `I` (1/2/4 bytes).
//! Fields `x y z` are required; `intensity`, `stability` and `label` map
//! onto the matching [`PointCloud`] columns and anything else is skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cloud::{PointCloud, StabilityLabel};
use crate::error::{Error, Result};
use crate::geom::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcdEncoding {
    Ascii,
    Binary,
}

#[derive(Clone, Debug)]
struct Field {
    name: String,
    size: usize,
    kind: char,
}

impl Field {
    fn decode(&self, b: &[u8]) -> f64 {
        match (self.kind, self.size) {
            ('F', 4) => f32::from_le_bytes(b.try_into().unwrap()) as f64,
            ('F', 8) => f64::from_le_bytes(b.try_into().unwrap()),
            ('U', 1) => b[0] as f64,
            ('U', 2) => u16::from_le_bytes(b.try_into().unwrap()) as f64,
            ('U', 4) => u32::from_le_bytes(b.try_into().unwrap()) as f64,
            ('I', 1) => b[0] as i8 as f64,
            ('I', 2) => i16::from_le_bytes(b.try_into().unwrap()) as f64,
            ('I', 4) => i32::from_le_bytes(b.try_into().unwrap()) as f64,
            _ => unreachable!("validated in header"),
        }
    }
}

fn err_line(line: usize, message: impl Into<String>) -> Error {
    Error::Pcd {
        location: format!("line {line}"),
        message: message.into(),
    }
}

fn err_offset(offset: usize, message: impl Into<String>) -> Error {
    Error::Pcd {
        location: format!("byte offset {offset}"),
        message: message.into(),
    }
}

struct Header {
    fields: Vec<Field>,
    points: usize,
    encoding: PcdEncoding,
    /// Byte offset of the payload.
    data_start: usize,
    /// 1-based line number of the first payload line.
    data_line: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut names: Option<Vec<String>> = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut types: Option<Vec<char>> = None;
    let mut counts: Option<Vec<usize>> = None;
    let mut width: Option<usize> = None;
    let mut height: Option<usize> = None;
    let mut points: Option<usize> = None;

    let mut pos = 0;
    let mut line_no = 0;
    loop {
        if pos >= bytes.len() {
            return Err(err_line(line_no, "missing DATA line"));
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |e| pos + e);
        line_no += 1;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| err_line(line_no, "header is not valid UTF-8"))?
            .trim();
        pos = (end + 1).min(bytes.len());
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let key = toks.next().unwrap().to_ascii_uppercase();
        let rest: Vec<&str> = toks.collect();
        let nums = |what: &str| -> Result<Vec<usize>> {
            rest.iter()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| err_line(line_no, format!("bad {what} value `{t}`")))
                })
                .collect()
        };
        let one = |what: &str| -> Result<usize> {
            match nums(what)?.as_slice() {
                [v] => Ok(*v),
                _ => Err(err_line(line_no, format!("{what} takes one value"))),
            }
        };
        match key.as_str() {
            "VERSION" | "VIEWPOINT" => {}
            "FIELDS" => names = Some(rest.iter().map(|s| s.to_string()).collect()),
            "SIZE" => sizes = Some(nums("SIZE")?),
            "TYPE" => {
                types = Some(
                    rest.iter()
                        .map(|t| match *t {
                            "F" | "U" | "I" => Ok(t.chars().next().unwrap()),
                            _ => Err(err_line(line_no, format!("unknown TYPE `{t}`"))),
                        })
                        .collect::<Result<_>>()?,
                )
            }
            "COUNT" => counts = Some(nums("COUNT")?),
            "WIDTH" => width = Some(one("WIDTH")?),
            "HEIGHT" => height = Some(one("HEIGHT")?),
            "POINTS" => points = Some(one("POINTS")?),
            "DATA" => {
                let encoding = match rest.first().copied() {
                    Some("ascii") => PcdEncoding::Ascii,
                    Some("binary") => PcdEncoding::Binary,
                    other => return Err(err_line(line_no, format!("unsupported DATA encoding {other:?}"))),
                };
                let names = names.ok_or_else(|| err_line(line_no, "missing FIELDS"))?;
                let sizes = sizes.ok_or_else(|| err_line(line_no, "missing SIZE"))?;
                let types = types.ok_or_else(|| err_line(line_no, "missing TYPE"))?;
                let counts = counts.unwrap_or_else(|| vec![1; names.len()]);
                if sizes.len() != names.len() || types.len() != names.len() || counts.len() != names.len() {
                    return Err(err_line(line_no, "field count mismatch between FIELDS/SIZE/TYPE/COUNT"));
                }
                if counts.iter().any(|&c| c != 1) {
                    return Err(err_line(line_no, "only COUNT 1 fields are supported"));
                }
                let mut fields = Vec::with_capacity(names.len());
                for ((name, size), kind) in names.into_iter().zip(sizes).zip(types) {
                    let ok = match kind {
                        'F' => size == 4 || size == 8,
                        _ => matches!(size, 1 | 2 | 4),
                    };
                    if !ok {
                        return Err(err_line(line_no, format!("field `{name}`: unsupported {kind}{size}")));
                    }
                    fields.push(Field { name, size, kind });
                }
                for req in ["x", "y", "z"] {
                    if !fields.iter().any(|f| f.name == req) {
                        return Err(err_line(line_no, format!("missing required field `{req}`")));
                    }
                }
                let n = match (points, width, height) {
                    (Some(p), _, _) => p,
                    (None, Some(w), h) => w * h.unwrap_or(1),
                    _ => return Err(err_line(line_no, "missing POINTS")),
                };
                if let (Some(w), Some(h)) = (width, height) {
                    if w * h != n {
                        return Err(err_line(line_no, format!("WIDTH*HEIGHT = {} but POINTS = {n}", w * h)));
                    }
                }
                return Ok(Header {
                    fields,
                    points: n,
                    encoding,
                    data_start: pos,
                    data_line: line_no + 1,
                });
            }
            other => return Err(err_line(line_no, format!("unknown header key `{other}`"))),
        }
    }
}

/// Per-field values, row major.
fn read_ascii(bytes: &[u8], h: &Header) -> Result<Vec<f64>> {
    let text = std::str::from_utf8(&bytes[h.data_start..])
        .map_err(|_| err_line(h.data_line, "ASCII payload is not valid UTF-8"))?;
    let nf = h.fields.len();
    let mut vals = Vec::with_capacity(h.points * nf);
    let mut rows = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = h.data_line + i;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        if rows == h.points {
            return Err(err_line(
                line,
                format!("point count mismatch: header declares {} points, found more", h.points),
            ));
        }
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() != nf {
            return Err(err_line(line, format!("expected {nf} values, found {}", toks.len())));
        }
        for (tok, f) in toks.iter().zip(&h.fields) {
            let bad = |_| err_line(line, format!("bad number `{tok}`"));
            // F4 text goes through f32 so ASCII and binary files load identically
            let v = if f.kind == 'F' && f.size == 4 {
                tok.parse::<f32>().map_err(bad)? as f64
            } else {
                tok.parse::<f64>().map_err(bad)?
            };
            vals.push(v);
        }
        rows += 1;
    }
    if rows != h.points {
        return Err(err_line(
            h.data_line + rows,
            format!(
                "point count mismatch: header declares {} points, found {rows}",
                h.points
            ),
        ));
    }
    Ok(vals)
}

fn read_binary(bytes: &[u8], h: &Header) -> Result<Vec<f64>> {
    let stride: usize = h.fields.iter().map(|f| f.size).sum();
    let payload = &bytes[h.data_start..];
    let need = stride * h.points;
    if payload.len() < need {
        return Err(err_offset(
            h.data_start + payload.len(),
            format!(
                "point count mismatch: header declares {} points, payload holds {}",
                h.points,
                payload.len() / stride.max(1)
            ),
        ));
    }
    let mut vals = Vec::with_capacity(h.points * h.fields.len());
    for row in payload[..need].chunks_exact(stride) {
        let mut off = 0;
        for f in &h.fields {
            vals.push(f.decode(&row[off..off + f.size]));
            off += f.size;
        }
    }
    Ok(vals)
}

pub fn parse_pcd(bytes: &[u8]) -> Result<PointCloud> {
    let h = parse_header(bytes)?;
    let vals = match h.encoding {
        PcdEncoding::Ascii => read_ascii(bytes, &h)?,
        PcdEncoding::Binary => read_binary(bytes, &h)?,
    };
    let nf = h.fields.len();
    let col = |name: &str| -> Option<Vec<f64>> {
        let j = h.fields.iter().position(|f| f.name == name)?;
        Some((0..h.points).map(|i| vals[i * nf + j]).collect())
    };
    let (xs, ys, zs) = (col("x").unwrap(), col("y").unwrap(), col("z").unwrap());
    let points: Vec<Point3> = (0..h.points).map(|i| Point3::new(xs[i], ys[i], zs[i])).collect();
    if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
        return Err(Error::Pcd {
            location: format!("point {i}"),
            message: "non-finite coordinate".into(),
        });
    }
    let mut cloud = PointCloud::new(points);
    if let Some(v) = col("intensity") {
        cloud = cloud.with_intensity(v)?;
    }
    if let Some(v) = col("stability") {
        cloud = cloud.with_stability(v)?;
    }
    if let Some(v) = col("label") {
        cloud = cloud.with_labels(v.into_iter().map(|x| StabilityLabel::from_u8(x as u8)).collect())?;
    }
    Ok(cloud)
}

pub fn encode_pcd(cloud: &PointCloud, encoding: PcdEncoding) -> Vec<u8> {
    let mut names = vec!["x", "y", "z"];
    let mut floats: Vec<&[f64]> = Vec::new();
    if let Some(v) = cloud.intensity() {
        names.push("intensity");
        floats.push(v);
    }
    if let Some(v) = cloud.stability() {
        names.push("stability");
        floats.push(v);
    }
    let labels = cloud.labels();
    if labels.is_some() {
        names.push("label");
    }
    let n = cloud.len();
    let sizes: Vec<&str> = names.iter().map(|&f| if f == "label" { "1" } else { "4" }).collect();
    let types: Vec<&str> = names.iter().map(|&f| if f == "label" { "U" } else { "F" }).collect();
    let mut header = String::new();
    header.push_str("# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n");
    writeln!(header, "FIELDS {}", names.join(" ")).unwrap();
    writeln!(header, "SIZE {}", sizes.join(" ")).unwrap();
    writeln!(header, "TYPE {}", types.join(" ")).unwrap();
    writeln!(header, "COUNT {}", vec!["1"; names.len()].join(" ")).unwrap();
    writeln!(header, "WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}").unwrap();
    let mut out = header.into_bytes();
    match encoding {
        PcdEncoding::Ascii => {
            out.extend_from_slice(b"DATA ascii\n");
            let mut s = String::new();
            for (i, p) in cloud.points().iter().enumerate() {
                write!(s, "{} {} {}", p.x as f32, p.y as f32, p.z as f32).unwrap();
                for col in &floats {
                    write!(s, " {}", col[i] as f32).unwrap();
                }
                if let Some(l) = labels {
                    write!(s, " {}", l[i].as_u8()).unwrap();
                }
                s.push('\n');
            }
            out.extend_from_slice(s.as_bytes());
        }
        PcdEncoding::Binary => {
            out.extend_from_slice(b"DATA binary\n");
            for (i, p) in cloud.points().iter().enumerate() {
                for c in [p.x, p.y, p.z] {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
                for col in &floats {
                    out.extend_from_slice(&(col[i] as f32).to_le_bytes());
                }
                if let Some(l) = labels {
                    out.push(l[i].as_u8());
                }
            }
        }
    }
    out
}

pub fn load_pcd(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pcd(&bytes)
}

pub fn save_pcd(cloud: &PointCloud, path: impl AsRef<Path>, encoding: PcdEncoding) -> Result<()> {
    let path = path.as_ref();
    crate::files::write_atomic(path, &encode_pcd(cloud, encoding))
}
