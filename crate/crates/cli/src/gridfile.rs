//! Grid file formats.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic   b"KTFGRID\0"
//! version u8 = 1
//! dtype   u8 = 1 (f64)
//! ndim    u16
//! per axis: len u64, kind u8 (0 = uniform i/N, 1 = explicit), then len f64 if explicit
//! payload prod(len) f64, last axis fastest
//! ```
//!
//! CSV holds a 1-d grid as one value per line and a 2-d grid as one line per
//! index of axis 0 with axis 1 across columns. PGM holds 2-d 8-bit images
//! mapped to `[0, 1]`, rows on axis 0. Neither text format stores designs, so
//! both read back as uniform lattices.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use ktf::{GridSignal, LatticeShape};

const MAGIC: &[u8; 8] = b"KTFGRID\0";
const VERSION: u8 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Bin,
    Csv,
    Pgm,
}

impl Format {
    /// Explicit choice, else the file extension, else binary.
    pub fn resolve(explicit: Option<Format>, path: &Path) -> Format {
        if let Some(f) = explicit {
            return f;
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            Some(e) if e.eq_ignore_ascii_case("pgm") => Format::Pgm,
            _ => Format::Bin,
        }
    }
}

/// Malformed input; the CLI maps it to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ParseError(pub String);

fn parse_err(msg: impl Into<String>) -> anyhow::Error {
    ParseError(msg.into()).into()
}

pub fn read_grid(path: &Path, format: Format) -> Result<GridSignal> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match format {
        Format::Bin => decode_bin(&bytes),
        Format::Csv => decode_csv(&bytes),
        Format::Pgm => decode_pgm(&bytes),
    }
    .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_grid(path: &Path, format: Format, grid: &GridSignal) -> Result<()> {
    let bytes = match format {
        Format::Bin => encode_bin(grid),
        Format::Csv => encode_csv(grid)?,
        Format::Pgm => encode_pgm(grid)?,
    };
    write_atomic(path, &bytes)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn encode_bin(grid: &GridSignal) -> Vec<u8> {
    let shape = grid.shape();
    let mut out = Vec::with_capacity(16 + 8 * grid.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F64);
    out.extend_from_slice(&(shape.ndim() as u16).to_le_bytes());
    let canonical = LatticeShape::uniform(shape.dims()).expect("dims of a valid lattice");
    for axis in 0..shape.ndim() {
        let design = shape.design(axis);
        out.extend_from_slice(&(design.len() as u64).to_le_bytes());
        if design == canonical.design(axis) {
            out.push(0);
        } else {
            out.push(1);
            for v in design {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| parse_err("truncated grid file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| parse_err("grid too large"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

pub fn decode_bin(bytes: &[u8]) -> Result<GridSignal> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(parse_err("not a grid file (bad magic)"));
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(parse_err(format!(
            "unsupported grid file version {version}"
        )));
    }
    let dtype = c.u8()?;
    if dtype != DTYPE_F64 {
        return Err(parse_err(format!("unsupported value dtype {dtype}")));
    }
    let ndim = c.u16()? as usize;
    if ndim == 0 {
        return Err(parse_err("grid file has no axes"));
    }
    let mut designs = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let len = usize::try_from(c.u64()?).map_err(|_| parse_err("axis too long"))?;
        match c.u8()? {
            0 => designs.push((1..=len).map(|i| i as f64 / len as f64).collect()),
            1 => designs.push(c.f64s(len)?),
            kind => return Err(parse_err(format!("unknown design kind {kind}"))),
        }
    }
    let shape = LatticeShape::with_designs(designs).map_err(|e| parse_err(e.to_string()))?;
    let values = c.f64s(shape.len())?;
    if c.pos != bytes.len() {
        return Err(parse_err("trailing bytes after payload"));
    }
    GridSignal::new(shape, values).map_err(|e| parse_err(e.to_string()))
}

fn text_dims(grid: &GridSignal, what: &str) -> Result<(usize, usize)> {
    let dims = grid.shape().dims();
    ensure!(
        grid.shape().is_uniform()
            && grid.shape().designs() == LatticeShape::uniform(dims).expect("valid dims").designs(),
        "{what} stores only canonical uniform lattices; use --format bin"
    );
    match dims {
        [n] => Ok((*n, 1)),
        [r, c] => Ok((*r, *c)),
        _ => bail!(
            "{what} holds 1-d or 2-d grids; this grid has {} axes",
            dims.len()
        ),
    }
}

pub fn encode_csv(grid: &GridSignal) -> Result<Vec<u8>> {
    let (rows, cols) = text_dims(grid, "CSV")?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for r in 0..rows {
        // `{}` on f64 prints the shortest string that parses back to the same bits
        w.write_record(
            grid.values()[r * cols..(r + 1) * cols]
                .iter()
                .map(|v| v.to_string()),
        )?;
    }
    Ok(w.into_inner()?)
}

pub fn decode_csv(bytes: &[u8]) -> Result<GridSignal> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(parse_err(format!(
                    "CSV row {} has {} fields, expected {w}",
                    rows + 1,
                    rec.len()
                )))
            }
            _ => {}
        }
        for field in &rec {
            values.push(
                field.parse::<f64>().map_err(|_| {
                    parse_err(format!("bad number {field:?} in CSV row {}", rows + 1))
                })?,
            );
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_err("empty CSV grid"))?;
    let dims = if width == 1 {
        vec![rows]
    } else {
        vec![rows, width]
    };
    let shape = LatticeShape::uniform(&dims).map_err(|e| parse_err(e.to_string()))?;
    GridSignal::new(shape, values).map_err(|e| parse_err(e.to_string()))
}

pub fn encode_pgm(grid: &GridSignal) -> Result<Vec<u8>> {
    let (rows, cols) = text_dims(grid, "PGM")?;
    ensure!(grid.shape().ndim() == 2, "PGM holds 2-d grids only");
    let mut out = BufWriter::new(Vec::with_capacity(rows * cols + 32));
    write!(out, "P5\n{cols} {rows}\n255\n")?;
    let pixels: Vec<u8> = grid
        .values()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&pixels)?;
    Ok(out.into_inner()?)
}

/// Reads binary (P5) or ASCII (P2) graymaps with `maxval ≤ 255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<GridSignal> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err("truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| {
        s.parse::<usize>()
            .map_err(|_| parse_err(format!("bad PGM header field {s:?}")))
    };
    let cols = num(token()?)?;
    let rows = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(format!(
            "PGM maxval {maxval} unsupported (8-bit only)"
        )));
    }
    let n = rows * cols;
    let raw: Vec<u8> = match magic.as_str() {
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let start = pos + 1;
            if bytes.len() < start + n {
                return Err(parse_err("truncated PGM raster"));
            }
            bytes[start..start + n].to_vec()
        }
        "P2" => (0..n)
            .map(|_| {
                let t = token()?;
                t.parse::<u8>()
                    .map_err(|_| parse_err(format!("bad PGM sample {t:?}")))
            })
            .collect::<Result<_>>()?,
        other => return Err(parse_err(format!("unsupported PGM magic {other:?}"))),
    };
    if raw.iter().any(|&p| p as usize > maxval) {
        return Err(parse_err("PGM sample exceeds maxval"));
    }
    let shape = LatticeShape::uniform(&[rows, cols]).map_err(|e| parse_err(e.to_string()))?;
    let values = raw.iter().map(|&p| p as f64 / maxval as f64).collect();
    GridSignal::new(shape, values).map_err(|e| parse_err(e.to_string()))
}
