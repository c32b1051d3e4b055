//! Integer fields on a lattice, flat zones and local extremal sets.

use std::collections::VecDeque;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{CellSet, Lattice};

/// An integer-valued function on a lattice window.
///
/// In zero-padded mode the field is implicitly 0 outside the window.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScalarField {
    lattice: Lattice,
    values: Vec<i64>,
}

impl ScalarField {
    pub fn new(lattice: Lattice, values: Vec<i64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::ShapeMismatch { expected: lattice.len(), got: values.len() });
        }
        Ok(Self { lattice, values })
    }

    pub fn zeros(lattice: Lattice) -> Self {
        let values = vec![0; lattice.len()];
        Self { lattice, values }
    }

    pub fn constant(lattice: Lattice, value: i64) -> Self {
        let values = vec![value; lattice.len()];
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<i64> {
        self.values
    }

    pub fn get(&self, cell: usize) -> i64 {
        self.values[cell]
    }

    pub fn set(&mut self, cell: usize, value: i64) {
        self.values[cell] = value;
    }

    /// Cells with a nonzero value.
    pub fn support(&self) -> CellSet {
        self.values.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Same values on a lattice with identical extents.
    pub fn relabel(&self, lattice: Lattice) -> Result<Self> {
        Self::new(lattice, self.values.clone())
    }

    /// Pointwise `self <= other`.
    pub fn le(&self, other: &ScalarField) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }

    pub fn zip_with(&self, other: &ScalarField, op: impl Fn(i64, i64) -> i64) -> Result<ScalarField> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
        Ok(Self { lattice: self.lattice.clone(), values })
    }

    /// SHA-256 over the window shape, adjacency and values.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.lattice.dims() as u64).to_le_bytes());
        for &e in self.lattice.extents() {
            hasher.update((e as u64).to_le_bytes());
        }
        hasher.update(self.lattice.connectivity().to_string().as_bytes());
        hasher.update(self.lattice.boundary().to_string().as_bytes());
        for &v in &self.values {
            hasher.update(v.to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Value at `cell`, or 0 for [`Witness::Outside`].
    pub fn value_at(&self, at: Witness) -> i64 {
        match at {
            Witness::Cell(c) => self.values[c],
            Witness::Outside => 0,
        }
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;

    /// Panics if the operands live on different lattices.
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_with(rhs, |a, b| a - b).expect("subtraction of fields on different lattices")
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;

    /// Panics if the operands live on different lattices.
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_with(rhs, |a, b| a + b).expect("addition of fields on different lattices")
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;

    fn neg(self) -> ScalarField {
        ScalarField { lattice: self.lattice.clone(), values: self.values.iter().map(|v| -v).collect() }
    }
}

/// Min or max side of an extremal-set query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Min,
    Max,
}

impl Polarity {
    pub fn dual(self) -> Self {
        match self {
            Polarity::Min => Polarity::Max,
            Polarity::Max => Polarity::Min,
        }
    }
}

/// A cell adjacent to a set, or the virtual OUTSIDE region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Witness {
    Cell(usize),
    Outside,
}

/// Maximal connected region of constant value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Zone {
    pub id: usize,
    pub cells: CellSet,
    pub value: i64,
    pub neighbor_zone_ids: Vec<usize>,
    pub touches_outside: bool,
}

impl Zone {
    pub fn size(&self) -> usize {
        self.cells.len()
    }
}

/// Labels every cell with the id of its flat zone. Ids are assigned in
/// order of each zone's smallest linear index. Returns the label vector
/// and the number of zones.
pub fn label_flat_zones(f: &ScalarField) -> (Vec<u32>, usize) {
    const UNSET: u32 = u32::MAX;
    let lat = f.lattice();
    let mut labels = vec![UNSET; lat.len()];
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for seed in 0..lat.len() {
        if labels[seed] != UNSET {
            continue;
        }
        let value = f.values[seed];
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(c) = queue.pop_front() {
            lat.for_each_neighbor(c, |j| {
                if labels[j] == UNSET && f.values[j] == value {
                    labels[j] = next;
                    queue.push_back(j);
                }
            });
        }
        next += 1;
    }
    (labels, next as usize)
}

/// Partition of the window into flat zones, ordered by smallest member.
pub fn flat_zones(f: &ScalarField) -> Vec<Zone> {
    let lat = f.lattice();
    let (labels, count) = label_flat_zones(f);
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); count];
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); count];
    let mut outside = vec![false; count];
    for c in 0..lat.len() {
        let z = labels[c] as usize;
        cells[z].push(c);
        outside[z] |= lat.for_each_neighbor(c, |j| {
            let other = labels[j] as usize;
            if other != z {
                neighbors[z].push(other);
            }
        });
    }
    cells
        .into_iter()
        .zip(neighbors)
        .zip(outside)
        .enumerate()
        .map(|(id, ((cells, mut nb), touches_outside))| {
            nb.sort_unstable();
            nb.dedup();
            let value = f.values[cells[0]];
            Zone { id, cells: CellSet::from_sorted_unchecked(cells), value, neighbor_zone_ids: nb, touches_outside }
        })
        .collect()
}

fn checked_adjacency(f: &ScalarField, set: &CellSet) -> Result<crate::lattice::Adjacency> {
    let lat = f.lattice();
    let adj = lat.adjacency_set(set)?;
    if !lat.is_connected(set) {
        return Err(Error::Disconnected);
    }
    Ok(adj)
}

/// Strict local extremal set test.
///
/// A min set has `max over set < min over adj(set)`; OUTSIDE contributes 0
/// when the set borders it. A set with no adjacent cells at all (the whole
/// window in domain-only mode) is neither.
pub fn is_local_extremal_set(f: &ScalarField, set: &CellSet, polarity: Polarity) -> Result<bool> {
    let adj = checked_adjacency(f, set)?;
    let adjacent = adj.cells.iter().map(|&c| f.values[c]).chain(adj.outside.then_some(0));
    let inner = set.iter().map(|&c| f.values[c]);
    Ok(match polarity {
        Polarity::Min => match adjacent.min() {
            Some(lo) => inner.max().unwrap() < lo,
            None => false,
        },
        Polarity::Max => match adjacent.max() {
            Some(hi) => inner.min().unwrap() > hi,
            None => false,
        },
    })
}

pub fn is_local_min_set(f: &ScalarField, set: &CellSet) -> Result<bool> {
    is_local_extremal_set(f, set, Polarity::Min)
}

pub fn is_local_max_set(f: &ScalarField, set: &CellSet) -> Result<bool> {
    is_local_extremal_set(f, set, Polarity::Max)
}

/// Zone-level extremality test using the zone's neighbour list.
fn zone_is_extremal(zone: &Zone, zones: &[Zone], polarity: Polarity) -> bool {
    let neighbor_values =
        zone.neighbor_zone_ids.iter().map(|&z| zones[z].value).chain(zone.touches_outside.then_some(0));
    match polarity {
        Polarity::Min => neighbor_values.min().is_some_and(|lo| zone.value < lo),
        Polarity::Max => neighbor_values.max().is_some_and(|hi| zone.value > hi),
    }
}

/// All flat zones of exactly `size` cells that are local min (or max) sets,
/// ordered by smallest member.
pub fn extremal_zones(f: &ScalarField, size: usize, polarity: Polarity) -> Vec<Zone> {
    let zones = flat_zones(f);
    zones.iter().filter(|z| z.size() == size && zone_is_extremal(z, &zones, polarity)).cloned().collect()
}

/// Smallest flat zone that is a local extremal set of either polarity.
pub fn smallest_extremal_zone(f: &ScalarField) -> Option<(usize, Polarity, Zone)> {
    let zones = flat_zones(f);
    zones
        .iter()
        .filter_map(|z| {
            [Polarity::Min, Polarity::Max]
                .into_iter()
                .find(|&p| zone_is_extremal(z, &zones, p))
                .map(|p| (z.size(), p, z.clone()))
        })
        .min_by_key(|(size, _, z)| (*size, z.id))
}

/// Extreme value over `adj(set)` and the cell attaining it.
///
/// `Polarity::Min` gives the smallest adjacent value, `Polarity::Max` the
/// largest. Ties go to the smallest linear index; window cells win over
/// OUTSIDE at equal value.
pub fn adjacent_witness(f: &ScalarField, set: &CellSet, polarity: Polarity) -> Result<(i64, Witness)> {
    let adj = checked_adjacency(f, set)?;
    let better = |a: i64, b: i64| match polarity {
        Polarity::Min => a < b,
        Polarity::Max => a > b,
    };
    let mut best: Option<(i64, Witness)> = None;
    for &c in adj.cells.iter() {
        let v = f.values[c];
        if best.is_none_or(|(bv, _)| better(v, bv)) {
            best = Some((v, Witness::Cell(c)));
        }
    }
    if adj.outside && best.is_none_or(|(bv, _)| better(0, bv)) {
        best = Some((0, Witness::Outside));
    }
    best.ok_or(Error::NoAdjacentCells)
}

pub fn min_adjacent_witness(f: &ScalarField, set: &CellSet) -> Result<(i64, Witness)> {
    adjacent_witness(f, set, Polarity::Min)
}

pub fn max_adjacent_witness(f: &ScalarField, set: &CellSet) -> Result<(i64, Witness)> {
    adjacent_witness(f, set, Polarity::Max)
}

/// Every connected set of window cells with at most `max_size` members that
/// is a local min (or max) set, found by exhaustive enumeration.
///
/// Sets that include cells outside the window never qualify: they contain a
/// 0-valued cell adjacent to another 0-valued outside cell.
pub fn brute_force_extremal_sets(f: &ScalarField, max_size: usize, polarity: Polarity) -> Result<Vec<CellSet>> {
    let lat = f.lattice();
    let mut out = Vec::new();
    for set in lat.connected_window_sets(max_size)? {
        if is_local_extremal_set(f, &set, polarity).unwrap_or(false) {
            out.push(set);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, Connectivity};

    fn line(values: &[i64], b: Boundary) -> ScalarField {
        ScalarField::new(Lattice::line(values.len(), b).unwrap(), values.to_vec()).unwrap()
    }

    fn cells(c: &[usize]) -> CellSet {
        CellSet::from_unsorted(c.to_vec())
    }

    #[test]
    fn flat_zone_examples() {
        let zones = flat_zones(&line(&[4, 4, 2], Boundary::ZeroPadded));
        assert_eq!(zones.len(), 2);
        assert_eq!((zones[0].cells.as_slice(), zones[0].value), (&[0, 1][..], 4));
        assert_eq!((zones[1].cells.as_slice(), zones[1].value), (&[2][..], 2));
        assert_eq!(zones[0].neighbor_zone_ids, vec![1]);
        assert!(zones[0].touches_outside && zones[1].touches_outside);

        let lat = Lattice::grid(2, 2, Connectivity::Facet, Boundary::ZeroPadded).unwrap();
        let zones = flat_zones(&ScalarField::constant(lat, 7));
        assert_eq!(zones.len(), 1);
        assert_eq!(zones[0].size(), 4);

        let zones = flat_zones(&line(&[1, 2, 1], Boundary::ZeroPadded));
        assert_eq!(zones.iter().map(Zone::size).collect::<Vec<_>>(), vec![1, 1, 1]);
    }

    #[test]
    fn local_set_examples() {
        let f = line(&[3, 1, 3], Boundary::ZeroPadded);
        assert!(is_local_min_set(&f, &cells(&[1])).unwrap());
        assert!(!is_local_min_set(&f, &cells(&[0])).unwrap());

        let f = line(&[0, 3, 1, 2, 4, 0], Boundary::DomainOnly);
        assert!(is_local_min_set(&f, &cells(&[2, 3])).unwrap());
        assert!(!is_local_max_set(&f, &cells(&[2, 3])).unwrap());

        assert_eq!(is_local_min_set(&f, &cells(&[0, 2])), Err(Error::Disconnected));
        assert_eq!(is_local_min_set(&f, &CellSet::new()), Err(Error::EmptySet));
    }

    #[test]
    fn whole_window_is_not_extremal_in_domain_only_mode() {
        let f = line(&[5, 5], Boundary::DomainOnly);
        assert!(!is_local_max_set(&f, &cells(&[0, 1])).unwrap());
        assert!(!is_local_min_set(&f, &cells(&[0, 1])).unwrap());
        assert_eq!(min_adjacent_witness(&f, &cells(&[0, 1])), Err(Error::NoAdjacentCells));
    }

    #[test]
    fn extremal_zone_examples() {
        let f = line(&[-3, 0, 5], Boundary::ZeroPadded);
        let mins = extremal_zones(&f, 1, Polarity::Min);
        assert_eq!(mins.len(), 1);
        assert_eq!((mins[0].cells.as_slice(), mins[0].value), (&[0][..], -3));
        let maxs = extremal_zones(&f, 1, Polarity::Max);
        assert_eq!(maxs.len(), 1);
        assert_eq!((maxs[0].cells.as_slice(), maxs[0].value), (&[2][..], 5));

        let lat = Lattice::grid(2, 3, Connectivity::Facet, Boundary::DomainOnly).unwrap();
        let f = ScalarField::constant(lat, 4);
        for n in 1..6 {
            assert!(extremal_zones(&f, n, Polarity::Min).is_empty());
            assert!(extremal_zones(&f, n, Polarity::Max).is_empty());
        }
    }

    #[test]
    fn witness_examples() {
        let f = line(&[3, 1, 3], Boundary::ZeroPadded);
        assert_eq!(min_adjacent_witness(&f, &cells(&[1])).unwrap(), (3, Witness::Cell(0)));

        let f = line(&[-3, 0, 5], Boundary::ZeroPadded);
        assert_eq!(min_adjacent_witness(&f, &cells(&[0])).unwrap(), (0, Witness::Cell(1)));

        let f = line(&[4, 4, 2], Boundary::ZeroPadded);
        assert_eq!(min_adjacent_witness(&f, &cells(&[0, 1])).unwrap(), (0, Witness::Outside));
        assert_eq!(max_adjacent_witness(&f, &cells(&[0, 1])).unwrap(), (2, Witness::Cell(2)));
    }

    #[test]
    fn brute_force_agrees_on_small_line() {
        let f = line(&[0, 3, 1, 2, 4, 0], Boundary::DomainOnly);
        let mins = brute_force_extremal_sets(&f, 1, Polarity::Min).unwrap();
        assert_eq!(mins, vec![cells(&[0]), cells(&[2]), cells(&[5])]);
        let mins = brute_force_extremal_sets(&f, 3, Polarity::Min).unwrap();
        assert_eq!(mins, vec![cells(&[0]), cells(&[2]), cells(&[2, 3]), cells(&[5])]);
    }

    #[test]
    fn smallest_extremal_zone_finds_min_first() {
        let f = line(&[4, 4, 2], Boundary::ZeroPadded);
        let (size, pol, zone) = smallest_extremal_zone(&f).unwrap();
        assert_eq!((size, pol, zone.cells.as_slice()), (2, Polarity::Max, &[0, 1][..]));
        assert!(smallest_extremal_zone(&line(&[0, 0], Boundary::ZeroPadded)).is_none());
    }

    #[test]
    fn digest_depends_on_values_and_shape() {
        let a = line(&[1, 2], Boundary::ZeroPadded);
        let b = line(&[2, 1], Boundary::ZeroPadded);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
        assert_ne!(a.digest(), a.relabel(a.lattice().with_boundary(Boundary::DomainOnly)).unwrap().digest());
    }
}
