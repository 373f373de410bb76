//! Field files, delimited tables and JSON reports.
//!
//! A field file is one ASCII header line followed by the raw `f64` payload:
//!
//! ```text
//! mfgfield dim=1 nx=4 ny=1 nt=2 T=1 stagger=slices name=m byteorder=le components=1\n
//! <rows * cells * components little-endian f64 values>
//! ```
//!
//! Values are row-major over `(component, t, cell)`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TimeLayout, TorusGrid, VectorField};

pub const MAGIC: &str = "mfgfield";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    fn as_str(self) -> &'static str {
        match self {
            ByteOrder::Little => "le",
            ByteOrder::Big => "be",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldHeader {
    pub grid: TorusGrid,
    pub layout: TimeLayout,
    pub name: String,
    pub byte_order: ByteOrder,
    pub components: usize,
}

impl FieldHeader {
    pub fn payload_len(&self) -> usize {
        self.grid.rows(self.layout) * self.grid.cells() * self.components * 8
    }

    fn line(&self) -> String {
        let g = &self.grid;
        format!(
            "{MAGIC} dim={} nx={} ny={} nt={} T={} stagger={} name={} byteorder={} components={}\n",
            g.dim(),
            g.nx(),
            g.ny(),
            g.nt(),
            g.horizon(),
            self.layout.as_str(),
            self.name,
            self.byte_order.as_str(),
            self.components
        )
    }
}

/// A decoded field file.
#[derive(Clone, Debug)]
pub enum FieldData {
    Scalar(ScalarField),
    Vector(VectorField),
}

fn format_err(path: &str, message: impl Into<String>) -> Error {
    Error::Format { path: path.into(), message: message.into() }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '=') {
        return Err(Error::InvalidArgument(format!("field name {name:?} must be non-empty without spaces or '='")));
    }
    Ok(())
}

fn encode(name: &str, grid: &TorusGrid, layout: TimeLayout, parts: &[&Array2<f64>]) -> Result<Vec<u8>> {
    check_name(name)?;
    let header = FieldHeader {
        grid: *grid,
        layout,
        name: name.to_string(),
        byte_order: ByteOrder::Little,
        components: parts.len(),
    };
    let line = header.line();
    let mut out = Vec::with_capacity(line.len() + header.payload_len());
    out.extend_from_slice(line.as_bytes());
    for part in parts {
        for v in part.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn encode_scalar(name: &str, field: &ScalarField) -> Result<Vec<u8>> {
    encode(name, field.grid(), field.layout(), &[field.values()])
}

pub fn encode_vector(name: &str, field: &VectorField) -> Result<Vec<u8>> {
    let parts: Vec<&Array2<f64>> = field.components().iter().collect();
    encode(name, field.grid(), field.layout(), &parts)
}

/// Parses the header line; `origin` names the source in error messages.
pub fn parse_header(line: &str, origin: &str) -> Result<FieldHeader> {
    let mut words = line.split_ascii_whitespace();
    if words.next() != Some(MAGIC) {
        return Err(format_err(origin, format!("missing '{MAGIC}' magic word")));
    }
    let mut get = std::collections::BTreeMap::new();
    for w in words {
        let (k, v) =
            w.split_once('=').ok_or_else(|| format_err(origin, format!("header token {w:?} is not key=value")))?;
        if get.insert(k, v).is_some() {
            return Err(format_err(origin, format!("duplicate header key {k:?}")));
        }
    }
    let field = |k: &str| get.get(k).copied().ok_or_else(|| format_err(origin, format!("header lacks key {k:?}")));
    let int = |k: &str| -> Result<usize> {
        field(k)?.parse().map_err(|_| format_err(origin, format!("header key {k} is not an integer")))
    };
    let dim = int("dim")?;
    let nx = int("nx")?;
    let ny = int("ny")?;
    let nt = int("nt")?;
    let horizon: f64 = field("T")?.parse().map_err(|_| format_err(origin, "header key T is not a number"))?;
    let layout = match field("stagger")? {
        "slices" => TimeLayout::Slices,
        "intervals" => TimeLayout::Intervals,
        other => return Err(format_err(origin, format!("unknown stagger {other:?} (expected slices or intervals)"))),
    };
    let byte_order = match field("byteorder")? {
        "le" => ByteOrder::Little,
        "be" => ByteOrder::Big,
        other => return Err(format_err(origin, format!("unknown byte order {other:?} (expected le or be)"))),
    };
    let components = int("components")?;
    let grid = TorusGrid::build(dim, nx, (dim == 2).then_some(ny), nt, horizon)
        .map_err(|e| format_err(origin, e.to_string()))?;
    if dim == 1 && ny != 1 {
        return Err(format_err(origin, format!("one-dimensional field with ny = {ny}")));
    }
    Ok(FieldHeader { grid, layout, name: field("name")?.to_string(), byte_order, components })
}

/// Decodes a field file held in memory.
pub fn decode(bytes: &[u8], origin: &str) -> Result<(FieldHeader, FieldData)> {
    let end = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| format_err(origin, "no header line"))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| format_err(origin, "header is not UTF-8"))?;
    let header = parse_header(line, origin)?;
    let payload = &bytes[end + 1..];
    let expected = header.payload_len();
    if payload.len() != expected {
        return Err(format_err(
            origin,
            format!("payload has {} bytes, header ({}) requires {expected}", payload.len(), line.trim_end()),
        ));
    }
    let grid = header.grid;
    let (rows, cells) = (grid.rows(header.layout), grid.cells());
    let mut parts = Vec::with_capacity(header.components);
    for chunk in payload.chunks_exact(rows * cells * 8) {
        let values: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| {
                let b: [u8; 8] = b.try_into().expect("eight bytes");
                match header.byte_order {
                    ByteOrder::Little => f64::from_le_bytes(b),
                    ByteOrder::Big => f64::from_be_bytes(b),
                }
            })
            .collect();
        parts.push(Array2::from_shape_vec((rows, cells), values).expect("sized by header"));
    }
    let data = if header.components == 1 && parts.len() == 1 {
        FieldData::Scalar(ScalarField::from_values(grid, header.layout, parts.pop().expect("one part"))?)
    } else if header.components == grid.dim() {
        FieldData::Vector(VectorField::from_components(grid, header.layout, parts)?)
    } else {
        return Err(format_err(
            origin,
            format!("components = {} fits neither a scalar nor a {}-d vector", header.components, grid.dim()),
        ));
    };
    Ok((header, data))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

pub fn write_scalar(path: &Path, name: &str, field: &ScalarField) -> Result<()> {
    write_bytes(path, &encode_scalar(name, field)?)
}

pub fn write_vector(path: &Path, name: &str, field: &VectorField) -> Result<()> {
    write_bytes(path, &encode_vector(name, field)?)
}

pub fn read_field(path: &Path) -> Result<(FieldHeader, FieldData)> {
    decode(&read_bytes(path)?, &path.display().to_string())
}

pub fn read_scalar(path: &Path) -> Result<(String, ScalarField)> {
    match read_field(path)? {
        (h, FieldData::Scalar(f)) => Ok((h.name, f)),
        (h, FieldData::Vector(_)) => Err(format_err(
            &path.display().to_string(),
            format!("expected a scalar field, found {} components", h.components),
        )),
    }
}

pub fn read_vector(path: &Path) -> Result<(String, VectorField)> {
    match read_field(path)? {
        (h, FieldData::Vector(f)) => Ok((h.name, f)),
        (h, FieldData::Scalar(f)) if f.grid().dim() == 1 => {
            let grid = *f.grid();
            Ok((h.name, VectorField::from_components(grid, f.layout(), vec![f.into_values()])?))
        }
        _ => Err(format_err(&path.display().to_string(), "expected a vector field")),
    }
}

/// Writes a comma-separated table with a header row.
pub fn write_table(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let ctx = |e: csv::Error| Error::InvalidArgument(format!("table {}: {e}", path.display()));
    out.write_record(columns).map_err(ctx)?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::InvalidArgument(format!(
                "table row has {} entries, expected {}",
                row.len(),
                columns.len()
            )));
        }
        out.write_record(row.iter().map(|v| v.to_string())).map_err(ctx)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_bytes(path, &bytes)
}

/// Writes a pretty-printed JSON record with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(format!("report: {e}")))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("cannot create directory {}", path.display()), e))
}
