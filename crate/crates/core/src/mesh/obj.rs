//! Wavefront OBJ reading and writing.
//!
//! Only `v` and `f` records matter. A `v` line carries either `x y z [w]` or
//! `x y z r g b` (the common vertex-color extension); colors are kept only
//! when every vertex line has them. Face indices are 1-based, negative indices
//! count back from the last vertex seen, and `i/t/n` tokens use their first
//! component. Polygons with more than three corners are fan-triangulated.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Color, Mesh, Point};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum VertexKind {
    Plain,
    Colored,
}

pub fn parse_obj_str(text: &str) -> Result<Mesh> {
    parse_obj(text.as_bytes())
}

pub fn parse_obj<R: Read>(reader: R) -> Result<Mesh> {
    let reader = BufReader::new(reader);
    let mut vertices: Vec<Point> = Vec::new();
    let mut colors: Vec<Color> = Vec::new();
    let mut kind: Option<VertexKind> = None;
    // (line, raw index, vertices seen when the face was read)
    let mut raw_faces: Vec<(usize, Vec<i64>, usize)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let values = tokens
                    .map(|t| parse_number(t, lineno))
                    .collect::<Result<Vec<f64>>>()?;
                let this = match values.len() {
                    3 | 4 => VertexKind::Plain,
                    6 => VertexKind::Colored,
                    other => {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("vertex record has {other} numeric fields"),
                        })
                    }
                };
                match kind {
                    None => kind = Some(this),
                    Some(k) if k != this => return Err(Error::MixedColors { line: lineno }),
                    _ => {}
                }
                vertices.push([values[0], values[1], values[2]]);
                if this == VertexKind::Colored {
                    colors.push([values[3], values[4], values[5]]);
                }
            }
            Some("f") => {
                let indices = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>().map_err(|_| Error::Parse {
                            line: lineno,
                            message: format!("face index {t:?} is not an integer"),
                        })
                    })
                    .collect::<Result<Vec<i64>>>()?;
                if indices.len() < 3 {
                    return Err(Error::FaceTooShort { line: lineno });
                }
                raw_faces.push((lineno, indices, vertices.len()));
            }
            _ => {}
        }
    }

    let n = vertices.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (line, indices, seen) in raw_faces {
        let resolved = indices
            .iter()
            .map(|&raw| {
                let zero_based = if raw > 0 {
                    raw - 1
                } else if raw < 0 {
                    seen as i64 + raw
                } else {
                    -1
                };
                if zero_based < 0 || zero_based >= n as i64 {
                    Err(Error::IndexOutOfRange {
                        line,
                        index: raw,
                        count: n,
                    })
                } else {
                    Ok(zero_based as usize)
                }
            })
            .collect::<Result<Vec<usize>>>()?;
        for k in 1..resolved.len() - 1 {
            faces.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }

    let colors = (kind == Some(VertexKind::Colored)).then_some(colors);
    Mesh::new(vertices, colors, faces)
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("{token:?} is not a finite number"),
        })
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_obj(file)
}

/// Writes `v` lines (with colors when present) and 1-based `f` lines.
pub fn write_obj<W: Write>(mesh: &Mesh, mut out: W) -> std::io::Result<()> {
    match mesh.colors() {
        Some(colors) => {
            for (p, c) in mesh.vertices().iter().zip(colors) {
                writeln!(out, "v {} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2])?;
            }
        }
        None => {
            for p in mesh.vertices() {
                writeln!(out, "v {} {} {}", p[0], p[1], p[2])?;
            }
        }
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn save_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_obj(mesh, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
