//! CSV and PGM ingestion and output.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use dpt_core::{Boundary, Connectivity, Lattice, ScalarField};
use image::codecs::pnm::{GraymapHeader, PnmDecoder, PnmEncoder, PnmHeader, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    /// Binary (P5) or ASCII (P2) graymap.
    Pgm {
        maxval: u32,
        ascii: bool,
    },
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Pgm { .. } => "pgm",
        }
    }
}

/// A row-major integer grid as read from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<i64>,
    pub format: Format,
}

impl Grid {
    /// Single-row grids become 1D lines unless full connectivity is asked
    /// for, which needs two dimensions.
    pub fn into_field(self, connectivity: Connectivity, boundary: Boundary) -> Result<ScalarField, Failure> {
        let lattice = if self.rows == 1 && connectivity == Connectivity::Facet {
            Lattice::line(self.cols, boundary)
        } else {
            Lattice::grid(self.rows, self.cols, connectivity, boundary)
        }
        .map_err(|e| Failure::Usage(e.to_string()))?;
        ScalarField::new(lattice, self.values).map_err(|e| Failure::Input(e.to_string()))
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

pub fn read_grid(path: &Path) -> Result<Grid, Failure> {
    if is_pgm(path) {
        read_pgm(path)
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        parse_csv(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }
}

pub fn parse_csv(text: &str) -> Result<Grid, String> {
    let mut values = Vec::new();
    let (mut rows, mut cols) = (0, 0);
    for (r, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for (c, token) in line.split(',').enumerate() {
            let token = token.trim();
            let v = token
                .parse::<i64>()
                .map_err(|_| format!("row {}, column {}: expected an integer, got {token:?}", r + 1, c + 1))?;
            values.push(v);
        }
        let width = values.len() - before;
        if rows == 0 {
            cols = width;
        } else if width != cols {
            return Err(format!("row {}: expected {cols} columns, got {width}", r + 1));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err("no data rows".into());
    }
    Ok(Grid { rows, cols, values, format: Format::Csv })
}

fn read_pgm(path: &Path) -> Result<Grid, Failure> {
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    let bad = |e: String| Failure::Input(format!("{}: {e}", path.display()));
    let decoder = PnmDecoder::new(BufReader::new(file)).map_err(|e| bad(e.to_string()))?;
    let ascii = match decoder.subtype() {
        PnmSubtype::Graymap(SampleEncoding::Ascii) => true,
        PnmSubtype::Graymap(SampleEncoding::Binary) => false,
        other => return Err(bad(format!("expected a graymap (P2/P5), got {:?}", other.magic_constant()))),
    };
    let maxval = decoder.header().maximal_sample();
    let (width, height) = decoder.dimensions();
    let wide = decoder.color_type() == image::ColorType::L16;
    let mut buf = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut buf).map_err(|e| bad(e.to_string()))?;
    let samples: Vec<u32> = if wide {
        buf.chunks_exact(2).map(|c| u16::from_ne_bytes([c[0], c[1]]) as u32).collect()
    } else {
        buf.iter().map(|&b| b as u32).collect()
    };
    // The decoder stretches samples to the full 8/16-bit range; map them
    // back to 0..=maxval. Stretching is injective so rounding recovers the
    // stored integers.
    let full = if wide { 65535 } else { 255 };
    let values = samples
        .into_iter()
        .map(|s| {
            if maxval == full {
                s as i64
            } else {
                ((s as u64 * maxval as u64 + full as u64 / 2) / full as u64) as i64
            }
        })
        .collect();
    Ok(Grid { rows: height as usize, cols: width as usize, values, format: Format::Pgm { maxval, ascii } })
}

/// Rows and columns for writing a field back out as a grid.
fn shape(field: &ScalarField) -> Result<(usize, usize), Failure> {
    match field.lattice().extents() {
        [n] => Ok((1, *n)),
        [r, c] => Ok((*r, *c)),
        e => Err(Failure::Usage(format!("cannot write a {}-dimensional field as a grid", e.len()))),
    }
}

pub fn csv_bytes(field: &ScalarField) -> Result<Vec<u8>, Failure> {
    let (_, cols) = shape(field)?;
    let mut out = Vec::new();
    for row in field.values().chunks(cols.max(1)) {
        let line: Vec<String> = row.iter().map(ToString::to_string).collect();
        writeln!(out, "{}", line.join(",")).expect("writing to a Vec");
    }
    Ok(out)
}

/// Encodes `field` as a graymap, clamping to `0..=maxval`. Returns the
/// bytes and the number of clamped cells.
pub fn pgm_bytes(field: &ScalarField, maxval: u32, ascii: bool) -> Result<(Vec<u8>, usize), Failure> {
    let (rows, cols) = shape(field)?;
    let mut clamped = 0;
    let samples: Vec<u16> = field
        .values()
        .iter()
        .map(|&v| {
            let c = v.clamp(0, maxval as i64);
            clamped += usize::from(c != v);
            c as u16
        })
        .collect();
    let encoding = if ascii { SampleEncoding::Ascii } else { SampleEncoding::Binary };
    let header = PnmHeader::from(GraymapHeader { encoding, height: rows as u32, width: cols as u32, maxwhite: maxval });
    let mut out = Vec::new();
    let mut encoder = PnmEncoder::new(&mut out).with_header(header);
    let result = if maxval <= 255 {
        let bytes: Vec<u8> = samples.iter().map(|&s| s as u8).collect();
        encoder.encode(bytes.as_slice(), cols as u32, rows as u32, ExtendedColorType::L8)
    } else {
        encoder.encode(samples.as_slice(), cols as u32, rows as u32, ExtendedColorType::L16)
    };
    result.map_err(|e| Failure::Input(format!("cannot encode graymap: {e}")))?;
    Ok((out, clamped))
}

/// What a field should be written as, chosen by the output extension.
pub fn output_format(path: &Path, source: Format) -> Format {
    match (is_pgm(path), source) {
        (false, _) => Format::Csv,
        (true, Format::Pgm { .. }) => source,
        (true, Format::Csv) => Format::Pgm { maxval: 255, ascii: false },
    }
}
