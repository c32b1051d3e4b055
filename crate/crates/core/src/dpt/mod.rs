//! Discrete Pulse Transform: `f = D_1(f) + D_2(f) + … + D_N(f)` (+ a
//! constant residual in domain-only mode).
//!
//! Scale `n` applies `P_n = L_n U_n` to the state left by the smaller
//! scales. The U phase removes local min zones of exactly `n` cells (down
//! pulses), then the L phase removes local max zones of exactly `n` cells of
//! the U-phase output (up pulses).

pub mod format;

use serde::{Deserialize, Serialize};

use crate::engine::{RawPulse, ZoneGraph};
use crate::error::{Error, Result};
use crate::field::{adjacent_witness, extremal_zones, flat_zones, smallest_extremal_zone, Polarity, ScalarField};
use crate::lattice::{Boundary, CellSet, Lattice};

/// Connected support carrying one nonzero constant value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pulse {
    pub support: CellSet,
    pub value: i64,
}

impl Pulse {
    pub fn scale(&self) -> usize {
        self.support.len()
    }

    pub fn is_up(&self) -> bool {
        self.value > 0
    }

    pub fn polarity(&self) -> Polarity {
        if self.value > 0 {
            Polarity::Max
        } else {
            Polarity::Min
        }
    }

    /// Adds this pulse into `field`.
    pub fn add_to(&self, field: &mut ScalarField) {
        for &c in self.support.iter() {
            let v = field.get(c);
            field.set(c, v + self.value);
        }
    }

    fn from_raw(raw: RawPulse) -> Self {
        Self { support: CellSet::from_sorted_unchecked(raw.cells), value: raw.value }
    }
}

/// Resolution layer `D_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub n: usize,
    pub down: Vec<Pulse>,
    pub up: Vec<Pulse>,
}

impl Layer {
    pub fn empty(n: usize) -> Self {
        Self { n, down: Vec::new(), up: Vec::new() }
    }

    pub fn gamma_minus(&self) -> usize {
        self.down.len()
    }

    pub fn gamma_plus(&self) -> usize {
        self.up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.down.is_empty() && self.up.is_empty()
    }

    /// Down pulses then up pulses, each ordered by smallest support cell.
    pub fn pulses(&self) -> impl Iterator<Item = &Pulse> + '_ {
        self.down.iter().chain(&self.up)
    }

    fn sorted(mut self) -> Self {
        self.down.sort_by_key(|p| p.support.first());
        self.up.sort_by_key(|p| p.support.first());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DptResult {
    pub lattice: Lattice,
    /// Layers for `n = 1..=N`, including empty ones.
    pub layers: Vec<Layer>,
    /// Value of the last remaining zone in domain-only mode, else 0.
    pub residual: i64,
    pub source_digest: String,
}

impl DptResult {
    /// Largest scale with a non-empty layer (0 if none).
    pub fn n_max(&self) -> usize {
        self.layers.len()
    }

    pub fn pulses(&self) -> impl Iterator<Item = &Pulse> + '_ {
        self.layers.iter().flat_map(Layer::pulses)
    }

    pub fn pulse_count(&self) -> usize {
        self.layers.iter().map(|l| l.down.len() + l.up.len()).sum()
    }

    pub fn layer(&self, n: usize) -> Option<&Layer> {
        n.checked_sub(1).and_then(|i| self.layers.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    /// Zone graph with union-find merging and a size-ordered work queue.
    #[default]
    ZoneGraph,
    /// Rescans flat zones at every scale via [`extract_layer`].
    Reference,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DecomposeOptions {
    pub engine: Engine,
    /// Shuffles the order in which same-stage zones are processed.
    pub shuffle_seed: Option<u64>,
}

/// One scale of the transform on a state with no extremal sets smaller
/// than `n`. Returns the layer and `P_n(state)`.
pub fn extract_layer(state: &ScalarField, n: usize) -> Result<(Layer, ScalarField)> {
    if n == 0 {
        return Err(Error::ZeroScale);
    }
    if let Some((size, _, zone)) = smallest_extremal_zone(state) {
        if size < n {
            return Err(Error::Precondition { scale: n, size, cell: zone.cells.first().unwrap() });
        }
    }
    let (down, upper) = flatten_phase(state, n, Polarity::Min)?;
    let (up, next) = flatten_phase(&upper, n, Polarity::Max)?;
    Ok((Layer { n, down, up }.sorted(), next))
}

fn flatten_phase(state: &ScalarField, n: usize, polarity: Polarity) -> Result<(Vec<Pulse>, ScalarField)> {
    let zones = extremal_zones(state, n, polarity);
    let targets = zones
        .iter()
        .map(|z| adjacent_witness(state, &z.cells, polarity).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;
    let mut next = state.clone();
    let mut pulses = Vec::with_capacity(zones.len());
    for (zone, target) in zones.into_iter().zip(targets) {
        for &c in zone.cells.iter() {
            next.set(c, target);
        }
        pulses.push(Pulse { support: zone.cells, value: zone.value - target });
    }
    Ok((pulses, next))
}

fn is_final(state: &ScalarField) -> bool {
    match state.lattice().boundary() {
        Boundary::ZeroPadded => state.is_zero(),
        Boundary::DomainOnly => flat_zones(state).len() <= 1,
    }
}

/// Reference engine: [`extract_layer`] for `n = 1, 2, …` until the state is
/// identically zero (zero-padded) or a single flat zone (domain-only).
pub fn decompose_reference(f: &ScalarField) -> Result<DptResult> {
    let mut state = f.clone();
    let mut layers = Vec::new();
    while !is_final(&state) {
        let (layer, next) = extract_layer(&state, layers.len() + 1)?;
        layers.push(layer);
        state = next;
    }
    let residual = match f.lattice().boundary() {
        Boundary::ZeroPadded => 0,
        Boundary::DomainOnly => state.get(0),
    };
    Ok(DptResult { lattice: f.lattice().clone(), layers, residual, source_digest: f.digest() })
}

fn decompose_zone_graph(f: &ScalarField, shuffle: Option<u64>) -> DptResult {
    let mut graph = ZoneGraph::new(f, true).with_shuffle(shuffle);
    let mut layers: Vec<Layer> = Vec::new();
    let mut from = 1;
    while !graph.is_settled() {
        let Some(n) = graph.next_scale(from) else { break };
        layers.extend((layers.len() + 1..n).map(Layer::empty));
        let down = graph.flatten(n, Polarity::Min).into_iter().map(Pulse::from_raw).collect();
        let up = graph.flatten(n, Polarity::Max).into_iter().map(Pulse::from_raw).collect();
        graph.retire(n);
        layers.push(Layer { n, down, up }.sorted());
        from = n + 1;
    }
    while layers.last().is_some_and(Layer::is_empty) {
        layers.pop();
    }
    DptResult { lattice: f.lattice().clone(), layers, residual: graph.residual(), source_digest: f.digest() }
}

/// Full pulse decomposition using the zone-graph engine.
pub fn decompose(f: &ScalarField) -> DptResult {
    decompose_zone_graph(f, None)
}

pub fn decompose_with(f: &ScalarField, options: &DecomposeOptions) -> Result<DptResult> {
    match options.engine {
        Engine::ZoneGraph => Ok(decompose_zone_graph(f, options.shuffle_seed)),
        Engine::Reference => decompose_reference(f),
    }
}

/// Sum of all pulses with `lo <= scale <= hi`. The residual is added only
/// when the band covers every layer (`lo == 1`, `hi >= N`).
pub fn reconstruct(r: &DptResult, lo: usize, hi: usize) -> Result<ScalarField> {
    if lo == 0 || lo > hi {
        return Err(Error::InvalidBand { lo, hi });
    }
    let full = lo == 1 && hi >= r.n_max();
    let mut out = ScalarField::constant(r.lattice.clone(), if full { r.residual } else { 0 });
    for layer in r.layers.iter().filter(|l| (lo..=hi).contains(&l.n)) {
        for p in layer.pulses() {
            p.add_to(&mut out);
        }
    }
    Ok(out)
}

/// Exact inverse of [`decompose`].
pub fn reconstruct_full(r: &DptResult) -> ScalarField {
    reconstruct(r, 1, r.n_max().max(1)).expect("full band is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub n: usize,
    pub gamma_minus: usize,
    pub gamma_plus: usize,
    /// Sum of `|value| * scale` over the layer's pulses.
    pub energy: u128,
}

/// One row per non-empty layer, by increasing scale.
pub fn spectrum(r: &DptResult) -> Vec<SpectrumRow> {
    r.layers
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| SpectrumRow {
            n: l.n,
            gamma_minus: l.gamma_minus(),
            gamma_plus: l.gamma_plus(),
            energy: l.pulses().map(|p| p.value.unsigned_abs() as u128 * p.scale() as u128).sum(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Connectivity;

    fn line(values: &[i64], b: Boundary) -> ScalarField {
        ScalarField::new(Lattice::line(values.len(), b).unwrap(), values.to_vec()).unwrap()
    }

    fn pulse(cells: &[usize], value: i64) -> Pulse {
        Pulse { support: CellSet::from_unsorted(cells.to_vec()), value }
    }

    #[test]
    fn extract_layer_examples() {
        let (layer, next) = extract_layer(&line(&[-3, 0, 5], Boundary::ZeroPadded), 1).unwrap();
        assert_eq!(layer.down, vec![pulse(&[0], -3)]);
        assert_eq!(layer.up, vec![pulse(&[2], 5)]);
        assert!(next.is_zero());

        let f = line(&[4, 4, 2], Boundary::ZeroPadded);
        let (layer, next) = extract_layer(&f, 1).unwrap();
        assert!(layer.is_empty());
        assert_eq!(next, f);

        let (layer, next) = extract_layer(&f, 2).unwrap();
        assert!(layer.down.is_empty());
        assert_eq!(layer.up, vec![pulse(&[0, 1], 2)]);
        assert_eq!(next.values(), &[2, 2, 2]);
    }

    #[test]
    fn extract_layer_rejects_unprepared_state() {
        let err = extract_layer(&line(&[-3, 0, 5], Boundary::ZeroPadded), 2).unwrap_err();
        assert_eq!(err, Error::Precondition { scale: 2, size: 1, cell: 0 });
    }

    #[test]
    fn decompose_examples() {
        let r = decompose(&line(&[4, 4, 2], Boundary::ZeroPadded));
        assert_eq!(r.n_max(), 3);
        assert!(r.layers[0].is_empty());
        assert_eq!(r.layers[1].up, vec![pulse(&[0, 1], 2)]);
        assert_eq!(r.layers[2].up, vec![pulse(&[0, 1, 2], 2)]);
        assert_eq!(r.residual, 0);

        let lat = Lattice::grid(2, 2, Connectivity::Facet, Boundary::ZeroPadded).unwrap();
        let r = decompose(&ScalarField::constant(lat, 7));
        assert_eq!(r.pulse_count(), 1);
        assert_eq!(r.layers[3].up, vec![pulse(&[0, 1, 2, 3], 7)]);

        let r = decompose(&line(&[0, 0, 0], Boundary::ZeroPadded));
        assert!(r.layers.is_empty());
    }

    #[test]
    fn domain_only_leaves_a_residual() {
        let f = line(&[5, 2, 5, 5], Boundary::DomainOnly);
        let r = decompose(&f);
        assert_eq!(r.residual, 5);
        assert_eq!(r.pulse_count(), 1);
        assert_eq!(reconstruct_full(&r), f);
        assert_eq!(decompose_reference(&f).unwrap(), r);

        let single = line(&[9], Boundary::DomainOnly);
        let r = decompose(&single);
        assert_eq!((r.n_max(), r.residual), (0, 9));
        assert_eq!(reconstruct_full(&r), single);
    }

    #[test]
    fn reconstruct_examples() {
        let f = line(&[4, 4, 2], Boundary::ZeroPadded);
        let r = decompose(&f);
        assert_eq!(reconstruct(&r, 1, 3).unwrap(), f);
        assert_eq!(reconstruct(&r, 2, 2).unwrap().values(), &[2, 2, 0]);
        assert_eq!(reconstruct(&r, 3, 3).unwrap().values(), &[2, 2, 2]);
        assert_eq!(reconstruct(&r, 3, 2), Err(Error::InvalidBand { lo: 3, hi: 2 }));
        assert_eq!(reconstruct(&r, 0, 2), Err(Error::InvalidBand { lo: 0, hi: 2 }));

        let empty = decompose(&line(&[0, 0], Boundary::ZeroPadded));
        assert!(reconstruct(&empty, 1, 5).unwrap().is_zero());
    }

    #[test]
    fn spectrum_examples() {
        let rows = spectrum(&decompose(&line(&[4, 4, 2], Boundary::ZeroPadded)));
        assert_eq!(
            rows,
            vec![
                SpectrumRow { n: 2, gamma_minus: 0, gamma_plus: 1, energy: 4 },
                SpectrumRow { n: 3, gamma_minus: 0, gamma_plus: 1, energy: 6 },
            ]
        );
        let rows = spectrum(&decompose(&line(&[-3, 0, 5], Boundary::ZeroPadded)));
        assert_eq!(rows, vec![SpectrumRow { n: 1, gamma_minus: 1, gamma_plus: 1, energy: 8 }]);
        assert!(spectrum(&decompose(&line(&[0], Boundary::ZeroPadded))).is_empty());
    }

    #[test]
    fn largest_scale_can_exceed_support_size() {
        // The interior zero is filled before the whole window is removed.
        let f = line(&[5, 0, 5], Boundary::ZeroPadded);
        let r = decompose(&f);
        assert_eq!(f.support().len(), 2);
        assert_eq!(r.n_max(), 3);
        assert_eq!(r.layers[0].down, vec![pulse(&[1], -5)]);
        assert_eq!(r.layers[2].up, vec![pulse(&[0, 1, 2], 5)]);
    }

    #[test]
    fn engines_agree_on_small_cases() {
        for values in [&[3, 1, 4, 1, 5, 9, 2, 6][..], &[0, 2, 2, 0, -1, 3], &[1, 1, 1], &[-2, 5, -2]] {
            for b in [Boundary::ZeroPadded, Boundary::DomainOnly] {
                let f = line(values, b);
                assert_eq!(decompose(&f), decompose_reference(&f).unwrap(), "{values:?} {b}");
            }
        }
    }
}
