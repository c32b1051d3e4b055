//! Serialised forms of a decomposition: a JSON-lines pulse stream, a JSON
//! summary and a CSV spectrum.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{spectrum, DptResult, Layer, Pulse};
use crate::lattice::{Boundary, CellSet, Connectivity, Lattice};

pub const SUMMARY_FORMAT: &str = "dpt-summary/1";

/// One line of the pulse stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub scale: usize,
    /// -1 for down pulses, +1 for up pulses.
    pub sign: i8,
    pub value: i64,
    /// Support cells as coordinate tuples in row-major order.
    pub cells: Vec<Vec<usize>>,
}

impl PulseRecord {
    pub fn from_pulse(pulse: &Pulse, lattice: &Lattice) -> Self {
        Self {
            scale: pulse.scale(),
            sign: if pulse.is_up() { 1 } else { -1 },
            value: pulse.value,
            cells: pulse.support.coords(lattice),
        }
    }

    pub fn to_pulse(&self, lattice: &Lattice) -> io::Result<Pulse> {
        let cells = self
            .cells
            .iter()
            .map(|c| {
                let c: Vec<isize> = c.iter().map(|&v| v as isize).collect();
                lattice.index_of(&c).ok_or_else(|| invalid(format!("pulse cell {c:?} outside the window")))
            })
            .collect::<io::Result<Vec<_>>>()?;
        let support = CellSet::from_unsorted(cells);
        if support.len() != self.scale || support.len() != self.cells.len() {
            return Err(invalid(format!("pulse scale {} does not match its {} cells", self.scale, self.cells.len())));
        }
        if self.value == 0 || (self.value > 0) != (self.sign > 0) {
            return Err(invalid(format!("pulse value {} inconsistent with sign {}", self.value, self.sign)));
        }
        Ok(Pulse { support, value: self.value })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub n: usize,
    pub gamma_minus: usize,
    pub gamma_plus: usize,
}

/// Summary document written next to the pulse stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub format: String,
    pub extents: Vec<usize>,
    pub connectivity: Connectivity,
    pub boundary: Boundary,
    pub residual: i64,
    pub n_max: usize,
    pub pulse_count: usize,
    pub source_digest: String,
    /// Non-empty layers only.
    pub layers: Vec<LayerSummary>,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

impl Summary {
    pub fn of(r: &DptResult, config: BTreeMap<String, String>) -> Self {
        Self {
            format: SUMMARY_FORMAT.to_string(),
            extents: r.lattice.extents().to_vec(),
            connectivity: r.lattice.connectivity(),
            boundary: r.lattice.boundary(),
            residual: r.residual,
            n_max: r.n_max(),
            pulse_count: r.pulse_count(),
            source_digest: r.source_digest.clone(),
            layers: r
                .layers
                .iter()
                .filter(|l| !l.is_empty())
                .map(|l| LayerSummary { n: l.n, gamma_minus: l.gamma_minus(), gamma_plus: l.gamma_plus() })
                .collect(),
            config,
        }
    }

    pub fn lattice(&self) -> io::Result<Lattice> {
        Lattice::new(&self.extents, self.connectivity, self.boundary).map_err(|e| invalid(e.to_string()))
    }
}

fn invalid(message: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, message)
}

/// Writes one record per pulse ordered by scale, down before up, then
/// smallest support cell.
pub fn write_pulses<W: Write>(r: &DptResult, mut out: W) -> io::Result<()> {
    for pulse in r.pulses() {
        serde_json::to_writer(&mut out, &PulseRecord::from_pulse(pulse, &r.lattice))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(summary: &Summary, mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, summary)?;
    out.write_all(b"\n")
}

pub fn write_spectrum<W: Write>(r: &DptResult, mut out: W) -> io::Result<()> {
    writeln!(out, "n,gamma_minus,gamma_plus,energy")?;
    for row in spectrum(r) {
        writeln!(out, "{},{},{},{}", row.n, row.gamma_minus, row.gamma_plus, row.energy)?;
    }
    Ok(())
}

/// Rebuilds a decomposition from its summary and pulse stream.
pub fn read_result<R: BufRead>(summary: &Summary, pulses: R) -> io::Result<DptResult> {
    let lattice = summary.lattice()?;
    let mut layers: Vec<Layer> = (1..=summary.n_max).map(Layer::empty).collect();
    for (lineno, line) in pulses.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PulseRecord =
            serde_json::from_str(&line).map_err(|e| invalid(format!("pulse stream line {}: {e}", lineno + 1)))?;
        let pulse = record.to_pulse(&lattice)?;
        let layer = layers
            .get_mut(pulse.scale().wrapping_sub(1))
            .ok_or_else(|| invalid(format!("pulse scale {} exceeds n_max {}", pulse.scale(), summary.n_max)))?;
        if pulse.is_up() {
            layer.up.push(pulse);
        } else {
            layer.down.push(pulse);
        }
    }
    let layers = layers.into_iter().map(Layer::sorted).collect();
    Ok(DptResult { lattice, layers, residual: summary.residual, source_digest: summary.source_digest.clone() })
}
