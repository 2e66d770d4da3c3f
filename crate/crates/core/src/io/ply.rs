//! Minimal PLY reader (ASCII and binary little-endian) and ASCII writer for
//! the `vertex` element.

use super::IoError;
use std::io::{BufRead, Read, Write};

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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// The `vertex` element of a PLY file as rows of `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyVertices {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlyVertices {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn require(&self, name: &str) -> Result<usize, IoError> {
        self.column(name).ok_or_else(|| IoError::Format(format!("PLY vertex element lacks property '{name}'")))
    }
}

fn bad(msg: impl Into<String>) -> IoError {
    IoError::Format(msg.into())
}

fn read_header(r: &mut impl BufRead) -> Result<(bool, Vec<Element>), IoError> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<(), IoError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(bad("unexpected end of PLY header"));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim() != "ply" {
        return Err(bad("missing 'ply' magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next(&mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(bad(format!("unsupported PLY format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", c, i, _name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let (count, item) = (
                    Scalar::parse(c).ok_or_else(|| bad(format!("unknown type '{c}'")))?,
                    Scalar::parse(i).ok_or_else(|| bad(format!("unknown type '{i}'")))?,
                );
                el.properties.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown type '{ty}'")))?;
                el.properties.push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(bad(format!("malformed PLY header line '{}'", line.trim()))),
        }
    }
    Ok((binary.ok_or_else(|| bad("missing format line"))?, elements))
}

pub fn read_vertices(mut r: impl BufRead) -> Result<PlyVertices, IoError> {
    let (binary, elements) = read_header(&mut r)?;
    let mut out = None;
    let mut words: Option<std::vec::IntoIter<String>> = None;
    if !binary {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        words = Some(text.split_whitespace().map(str::to_owned).collect::<Vec<_>>().into_iter());
    }
    let next_ascii = |words: &mut Option<std::vec::IntoIter<String>>| -> Result<f64, IoError> {
        let w = words.as_mut().unwrap().next().ok_or_else(|| bad("PLY body ends early"))?;
        w.parse::<f64>().map_err(|_| bad(format!("bad PLY value '{w}'")))
    };
    let read_binary = |ty: Scalar, r: &mut dyn Read| -> Result<f64, IoError> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf[..ty.size()]).map_err(|_| bad("PLY body ends early"))?;
        Ok(ty.decode(&buf))
    };
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let names: Vec<String> = el
            .properties
            .iter()
            .filter_map(|p| match p {
                Property::Scalar(n, _) => Some(n.clone()),
                Property::List { .. } => None,
            })
            .collect();
        let mut rows = Vec::with_capacity(if is_vertex { el.count } else { 0 });
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(names.len());
            for p in &el.properties {
                match *p {
                    Property::Scalar(_, ty) => {
                        let v = if binary { read_binary(ty, &mut r)? } else { next_ascii(&mut words)? };
                        row.push(v);
                    }
                    Property::List { count, item } => {
                        let n = if binary { read_binary(count, &mut r)? } else { next_ascii(&mut words)? };
                        if !(n >= 0.0) {
                            return Err(bad("negative list length"));
                        }
                        for _ in 0..n as usize {
                            if binary {
                                read_binary(item, &mut r)?;
                            } else {
                                next_ascii(&mut words)?;
                            }
                        }
                    }
                }
            }
            if is_vertex {
                rows.push(row);
            }
        }
        if is_vertex {
            out = Some(PlyVertices { names, rows });
        }
    }
    out.ok_or_else(|| bad("PLY file has no vertex element"))
}

/// Writes an ASCII PLY with one `vertex` element of `double` properties.
/// Values are printed in shortest round-trip form.
pub fn write_vertices(mut w: impl Write, names: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", rows.len())?;
    for n in names {
        writeln!(w, "property double {n}")?;
    }
    writeln!(w, "end_header")?;
    for row in rows {
        debug_assert_eq!(row.len(), names.len());
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_round_trip() {
        let rows = vec![vec![0.1, -2.5e-300, 1.0 / 3.0], vec![f64::MAX, 0.0, -0.0]];
        let mut buf = Vec::new();
        write_vertices(&mut buf, &["x", "y", "z"], &rows).unwrap();
        let v = read_vertices(buf.as_slice()).unwrap();
        assert_eq!(v.names, ["x", "y", "z"]);
        assert_eq!(v.rows, rows);
    }

    #[test]
    fn binary_with_faces() {
        let mut buf = b"ply\nformat binary_little_endian 1.0\ncomment test\nelement face 1\nproperty list uchar int vertex_indices\nelement vertex 2\nproperty float x\nproperty double y\nproperty uchar red\nend_header\n".to_vec();
        buf.push(3);
        for i in [0i32, 1, 1] {
            buf.extend_from_slice(&i.to_le_bytes());
        }
        for (x, y, c) in [(1.5f32, -2.25f64, 7u8), (0.0, 1e10, 255)] {
            buf.extend_from_slice(&x.to_le_bytes());
            buf.extend_from_slice(&y.to_le_bytes());
            buf.push(c);
        }
        let v = read_vertices(buf.as_slice()).unwrap();
        assert_eq!(v.rows, vec![vec![1.5, -2.25, 7.0], vec![0.0, 1e10, 255.0]]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_vertices(&b"plx\n"[..]).is_err());
        assert!(read_vertices(&b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n"[..]).is_err());
        assert!(read_vertices(&b"ply\nformat binary_big_endian 1.0\nend_header\n"[..]).is_err());
        assert!(read_vertices(&b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\nabc\n"[..]).is_err());
    }
}
