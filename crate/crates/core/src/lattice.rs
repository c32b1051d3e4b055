//! Finite windows of Z^d with a translation-invariant adjacency relation.
//!
//! Cells are addressed by their row-major linear index (last axis fastest).
//! In [`Boundary::ZeroPadded`] mode the window is embedded in all of Z^d and
//! everything outside it is a single virtual region, `OUTSIDE`, of value 0.
//! That region is adjacent to exactly the cells on the window border.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported number of axes.
pub const MAX_DIMS: usize = 8;

/// Largest set size accepted by the connected-set enumerators.
pub const ENUM_MAX_SIZE: usize = 6;

/// Largest window (in cells) accepted by the connected-set enumerators.
pub const ENUM_MAX_CELLS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// Cells sharing a facet: 2d neighbours.
    Facet,
    /// Cells sharing a facet, edge or corner. Only valid for d = 2.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// The field is extended by zero to all of Z^d.
    #[default]
    ZeroPadded,
    /// Only cells inside the window exist.
    DomainOnly,
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connectivity::Facet => "facet",
            Connectivity::Full => "full",
        })
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::ZeroPadded => "zero_padded",
            Boundary::DomainOnly => "domain_only",
        })
    }
}

/// A finite window of Z^d together with its adjacency relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "LatticeShape", into = "LatticeShape")]
pub struct Lattice {
    extents: Vec<usize>,
    connectivity: Connectivity,
    boundary: Boundary,
    strides: Vec<usize>,
    offsets: Vec<Vec<isize>>,
}

/// Serialised form of a [`Lattice`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeShape {
    pub extents: Vec<usize>,
    pub connectivity: Connectivity,
    pub boundary: Boundary,
}

impl TryFrom<LatticeShape> for Lattice {
    type Error = Error;

    fn try_from(shape: LatticeShape) -> Result<Self> {
        Lattice::new(&shape.extents, shape.connectivity, shape.boundary)
    }
}

impl From<Lattice> for LatticeShape {
    fn from(lat: Lattice) -> Self {
        Self { extents: lat.extents, connectivity: lat.connectivity, boundary: lat.boundary }
    }
}

impl Lattice {
    pub fn new(extents: &[usize], connectivity: Connectivity, boundary: Boundary) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::InvalidLattice("at least one axis is required".into()));
        }
        if extents.len() > MAX_DIMS {
            return Err(Error::InvalidLattice(format!(
                "{} axes requested, at most {MAX_DIMS} supported",
                extents.len()
            )));
        }
        if extents.contains(&0) {
            return Err(Error::InvalidLattice("every extent must be positive".into()));
        }
        if connectivity == Connectivity::Full && extents.len() != 2 {
            return Err(Error::InvalidLattice("full (8-neighbour) connectivity is only defined for d = 2".into()));
        }
        extents
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&n| n < u32::MAX as usize)
            .ok_or_else(|| Error::InvalidLattice("window has too many cells".into()))?;

        let d = extents.len();
        let mut strides = vec![1usize; d];
        for axis in (0..d.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * extents[axis + 1];
        }
        let offsets = match connectivity {
            Connectivity::Facet => (0..d)
                .flat_map(|axis| {
                    [-1isize, 1].into_iter().map(move |step| {
                        let mut o = vec![0isize; d];
                        o[axis] = step;
                        o
                    })
                })
                .collect(),
            Connectivity::Full => {
                let mut out = Vec::with_capacity(8);
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        if dr != 0 || dc != 0 {
                            out.push(vec![dr, dc]);
                        }
                    }
                }
                out
            }
        };
        Ok(Self { extents: extents.to_vec(), connectivity, boundary, strides, offsets })
    }

    /// One-dimensional window of `len` cells.
    pub fn line(len: usize, boundary: Boundary) -> Result<Self> {
        Self::new(&[len], Connectivity::Facet, boundary)
    }

    /// Two-dimensional `rows × cols` window.
    pub fn grid(rows: usize, cols: usize, connectivity: Connectivity, boundary: Boundary) -> Result<Self> {
        Self::new(&[rows, cols], connectivity, boundary)
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_zero_padded(&self) -> bool {
        self.boundary == Boundary::ZeroPadded
    }

    /// Number of cells in the window.
    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same window and connectivity with a different boundary mode.
    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        Self { boundary, ..self.clone() }
    }

    /// Neighbour offsets of the adjacency relation.
    pub fn offsets(&self) -> &[Vec<isize>] {
        &self.offsets
    }

    pub fn coords(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        self.strides
            .iter()
            .map(|&s| {
                let c = rest / s;
                rest %= s;
                c
            })
            .collect()
    }

    pub fn index_of(&self, coords: &[isize]) -> Option<usize> {
        if coords.len() != self.dims() {
            return None;
        }
        let mut index = 0usize;
        for ((&c, &e), &s) in coords.iter().zip(&self.extents).zip(&self.strides) {
            if c < 0 || c as usize >= e {
                return None;
            }
            index += c as usize * s;
        }
        Some(index)
    }

    pub fn checked_index(&self, coords: &[isize]) -> Result<usize> {
        self.index_of(coords).ok_or_else(|| Error::OutOfWindow(coords.to_vec()))
    }

    /// True iff `index` lies on the window border.
    pub fn is_border(&self, index: usize) -> bool {
        let mut rest = index;
        self.strides.iter().zip(&self.extents).any(|(&s, &e)| {
            let c = rest / s;
            rest %= s;
            c == 0 || c + 1 == e
        })
    }

    /// True iff `index` is adjacent to the virtual OUTSIDE region.
    pub fn touches_outside(&self, index: usize) -> bool {
        self.is_zero_padded() && self.is_border(index)
    }

    /// Calls `visit` for every in-window neighbour of `index` and returns
    /// whether `index` borders OUTSIDE (always false in domain-only mode).
    #[inline]
    pub fn for_each_neighbor(&self, index: usize, mut visit: impl FnMut(usize)) -> bool {
        let d = self.dims();
        let mut coords = [0usize; MAX_DIMS];
        let mut rest = index;
        for (c, &stride) in coords.iter_mut().zip(&self.strides[..d]) {
            *c = rest / stride;
            rest %= stride;
        }
        let mut outside = false;
        'offsets: for off in &self.offsets {
            let mut target = 0usize;
            for axis in 0..d {
                let c = coords[axis] as isize + off[axis];
                if c < 0 || c as usize >= self.extents[axis] {
                    outside = true;
                    continue 'offsets;
                }
                target += c as usize * self.strides[axis];
            }
            visit(target);
        }
        outside && self.is_zero_padded()
    }

    pub fn neighbors(&self, index: usize) -> Result<Neighbors> {
        self.check_index(index)?;
        let mut cells = Vec::with_capacity(self.offsets.len());
        let outside = self.for_each_neighbor(index, |j| cells.push(j));
        Ok(Neighbors { cells: CellSet::from_unsorted(cells), outside })
    }

    /// Neighbours of a cell given by coordinates.
    pub fn neighbors_at(&self, coords: &[isize]) -> Result<Neighbors> {
        self.neighbors(self.checked_index(coords)?)
    }

    /// Cells not in `set` adjacent to some member of `set`, plus whether
    /// some member borders OUTSIDE.
    pub fn adjacency_set(&self, set: &CellSet) -> Result<Adjacency> {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        self.check_set(set)?;
        let mut cells = Vec::new();
        let mut outside = false;
        for &c in set.iter() {
            outside |= self.for_each_neighbor(c, |j| {
                if !set.contains(j) {
                    cells.push(j);
                }
            });
        }
        Ok(Adjacency { cells: CellSet::from_unsorted(cells), outside })
    }

    /// True iff `set` is non-empty and connected under the adjacency relation.
    pub fn is_connected(&self, set: &CellSet) -> bool {
        if set.is_empty() || self.check_set(set).is_err() {
            return false;
        }
        let mut seen = vec![false; set.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut reached = 1;
        while let Some(pos) = stack.pop() {
            self.for_each_neighbor(set.as_slice()[pos], |j| {
                if let Some(k) = set.position(j) {
                    if !seen[k] {
                        seen[k] = true;
                        reached += 1;
                        stack.push(k);
                    }
                }
            });
        }
        reached == set.len()
    }

    /// Every connected set of exactly `size` cells of Z^d containing `cell`.
    ///
    /// In zero-padded mode the sets may leave the window; cells outside it
    /// carry value 0. The enumeration runs on the window padded by
    /// `size - 1` cells on each side, which reaches every such set.
    /// Sets are returned as sorted lists of (possibly negative) coordinates.
    pub fn connected_supersets(&self, cell: &[isize], size: usize) -> Result<Vec<Vec<Vec<isize>>>> {
        let start = self.checked_index(cell)?;
        if size == 0 {
            return Err(Error::EmptySet);
        }
        self.enumeration_guard(size)?;
        let pad = if self.is_zero_padded() { size - 1 } else { 0 };
        let host = self.padded(pad)?;
        let host_start = host.embed(self, start, pad);
        let sets = host.grow_connected(&[host_start], size, |_| true);
        let mut out: Vec<Vec<Vec<isize>>> = sets
            .into_iter()
            .map(|s| {
                s.iter().map(|&i| host.coords(i).into_iter().map(|c| c as isize - pad as isize).collect()).collect()
            })
            .collect();
        out.sort();
        Ok(out)
    }

    /// Every connected set of window cells whose size is in `1..=max_size`,
    /// each reported once.
    pub fn connected_window_sets(&self, max_size: usize) -> Result<Vec<CellSet>> {
        self.enumeration_guard(max_size)?;
        let mut out = Vec::new();
        for seed in 0..self.len() {
            for size in 1..=max_size {
                // Only sets whose smallest member is `seed`.
                out.extend(
                    self.grow_connected(&[seed], size, |j| j > seed)
                        .into_iter()
                        .map(|s| CellSet::from_sorted_unchecked(s.into_iter().collect())),
                );
            }
        }
        Ok(out)
    }

    fn enumeration_guard(&self, size: usize) -> Result<()> {
        if size > ENUM_MAX_SIZE {
            return Err(Error::ResourceGuard(format!(
                "connected-set enumeration limited to size {ENUM_MAX_SIZE}, got {size}"
            )));
        }
        if self.len() > ENUM_MAX_CELLS {
            return Err(Error::ResourceGuard(format!(
                "connected-set enumeration limited to windows of {ENUM_MAX_CELLS} cells, got {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Domain-only lattice with `pad` extra cells on each side of every axis.
    pub(crate) fn padded(&self, pad: usize) -> Result<Lattice> {
        let extents: Vec<usize> = self.extents.iter().map(|&e| e + 2 * pad).collect();
        Lattice::new(&extents, self.connectivity, Boundary::DomainOnly)
    }

    /// Index in `self` (a padded host) of cell `index` of `inner`.
    pub(crate) fn embed(&self, inner: &Lattice, index: usize, pad: usize) -> usize {
        let coords: Vec<isize> = inner.coords(index).into_iter().map(|c| (c + pad) as isize).collect();
        self.index_of(&coords).expect("padded host contains the inner window")
    }

    fn grow_connected(&self, start: &[usize], size: usize, admit: impl Fn(usize) -> bool) -> BTreeSet<BTreeSet<usize>> {
        let mut layer: HashSet<BTreeSet<usize>> = HashSet::new();
        layer.insert(start.iter().copied().collect());
        for _ in start.len()..size {
            let mut next = HashSet::new();
            for set in &layer {
                for &member in set {
                    self.for_each_neighbor(member, |j| {
                        if !set.contains(&j) && admit(j) {
                            let mut grown = set.clone();
                            grown.insert(j);
                            next.insert(grown);
                        }
                    });
                }
            }
            layer = next;
        }
        layer.into_iter().collect()
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index, len: self.len() })
        }
    }

    fn check_set(&self, set: &CellSet) -> Result<()> {
        match set.last() {
            Some(last) => self.check_index(last),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape: Vec<String> = self.extents.iter().map(ToString::to_string).collect();
        write!(f, "{} {} {}", shape.join("x"), self.connectivity, self.boundary)
    }
}

/// Result of [`Lattice::neighbors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbors {
    pub cells: CellSet,
    pub outside: bool,
}

/// Result of [`Lattice::adjacency_set`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub cells: CellSet,
    pub outside: bool,
}

/// Duplicate-free set of window cells kept sorted by linear index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellSet(Vec<usize>);

impl CellSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_unsorted(mut cells: Vec<usize>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        Self(cells)
    }

    pub(crate) fn from_sorted_unchecked(cells: Vec<usize>) -> Self {
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        Self(cells)
    }

    pub fn singleton(cell: usize) -> Self {
        Self(vec![cell])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.0.binary_search(&cell).is_ok()
    }

    fn position(&self, cell: usize) -> Option<usize> {
        self.0.binary_search(&cell).ok()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &usize> + '_ {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let mut cells = self.0.clone();
        cells.extend_from_slice(&other.0);
        Self::from_unsorted(cells)
    }

    pub fn coords(&self, lattice: &Lattice) -> Vec<Vec<usize>> {
        self.0.iter().map(|&c| lattice.coords(c)).collect()
    }
}

impl FromIterator<usize> for CellSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::from_unsorted(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a CellSet {
    type Item = &'a usize;
    type IntoIter = std::slice::Iter<'a, usize>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(r: usize, c: usize, conn: Connectivity, b: Boundary) -> Lattice {
        Lattice::grid(r, c, conn, b).unwrap()
    }

    fn idx(lat: &Lattice, c: &[isize]) -> usize {
        lat.checked_index(c).unwrap()
    }

    fn set(lat: &Lattice, cells: &[&[isize]]) -> CellSet {
        cells.iter().map(|c| idx(lat, c)).collect()
    }

    #[test]
    fn facet_neighbors_of_center() {
        let lat = grid(3, 3, Connectivity::Facet, Boundary::ZeroPadded);
        let n = lat.neighbors_at(&[1, 1]).unwrap();
        assert_eq!(n.cells, set(&lat, &[&[0, 1], &[2, 1], &[1, 0], &[1, 2]]));
        assert!(!n.outside);
    }

    #[test]
    fn border_cell_reports_outside() {
        let lat = Lattice::line(3, Boundary::ZeroPadded).unwrap();
        let n = lat.neighbors_at(&[0]).unwrap();
        assert_eq!(n.cells.as_slice(), &[1]);
        assert!(n.outside);

        let lat = lat.with_boundary(Boundary::DomainOnly);
        assert!(!lat.neighbors_at(&[0]).unwrap().outside);
    }

    #[test]
    fn full_connectivity_corner() {
        let lat = grid(2, 2, Connectivity::Full, Boundary::ZeroPadded);
        let n = lat.neighbors_at(&[0, 0]).unwrap();
        assert_eq!(n.cells, set(&lat, &[&[0, 1], &[1, 0], &[1, 1]]));
        assert!(n.outside);
    }

    #[test]
    fn out_of_window_is_an_error() {
        let lat = Lattice::line(3, Boundary::ZeroPadded).unwrap();
        assert_eq!(lat.neighbors_at(&[3]), Err(Error::OutOfWindow(vec![3])));
        assert!(lat.neighbors(7).is_err());
    }

    #[test]
    fn full_connectivity_requires_2d() {
        assert!(Lattice::new(&[4], Connectivity::Full, Boundary::ZeroPadded).is_err());
        assert!(Lattice::new(&[2, 2, 2], Connectivity::Full, Boundary::ZeroPadded).is_err());
        assert!(Lattice::new(&[], Connectivity::Facet, Boundary::ZeroPadded).is_err());
        assert!(Lattice::new(&[3, 0], Connectivity::Facet, Boundary::ZeroPadded).is_err());
    }

    #[test]
    fn adjacency_examples() {
        let lat = Lattice::line(5, Boundary::ZeroPadded).unwrap();
        let adj = lat.adjacency_set(&CellSet::singleton(2)).unwrap();
        assert_eq!(adj.cells.as_slice(), &[1, 3]);
        assert!(!adj.outside);

        let lat = Lattice::line(3, Boundary::ZeroPadded).unwrap();
        let adj = lat.adjacency_set(&CellSet::from_unsorted(vec![0, 1, 2])).unwrap();
        assert!(adj.cells.is_empty());
        assert!(adj.outside);

        let lat = grid(3, 3, Connectivity::Facet, Boundary::ZeroPadded);
        let adj = lat.adjacency_set(&set(&lat, &[&[0, 0], &[0, 1]])).unwrap();
        assert_eq!(adj.cells, set(&lat, &[&[1, 0], &[1, 1], &[0, 2]]));
        assert!(adj.outside);

        assert_eq!(lat.adjacency_set(&CellSet::new()), Err(Error::EmptySet));
    }

    #[test]
    fn connectivity_examples() {
        let facet = grid(2, 2, Connectivity::Facet, Boundary::ZeroPadded);
        let full = grid(2, 2, Connectivity::Full, Boundary::ZeroPadded);
        assert!(facet.is_connected(&set(&facet, &[&[0, 0], &[0, 1]])));
        assert!(!facet.is_connected(&set(&facet, &[&[0, 0], &[1, 1]])));
        assert!(full.is_connected(&set(&full, &[&[0, 0], &[1, 1]])));
        assert!(!facet.is_connected(&CellSet::new()));
    }

    #[test]
    fn supersets_examples() {
        let lat = Lattice::line(3, Boundary::DomainOnly).unwrap();
        assert_eq!(lat.connected_supersets(&[1], 2).unwrap(), vec![vec![vec![0], vec![1]], vec![vec![1], vec![2]]]);
        assert_eq!(lat.connected_supersets(&[1], 1).unwrap(), vec![vec![vec![1]]]);

        let lat = grid(2, 2, Connectivity::Facet, Boundary::DomainOnly);
        assert_eq!(
            lat.connected_supersets(&[0, 0], 2).unwrap(),
            vec![vec![vec![0, 0], vec![0, 1]], vec![vec![0, 0], vec![1, 0]]]
        );
    }

    #[test]
    fn supersets_leave_the_window_when_zero_padded() {
        let lat = Lattice::line(2, Boundary::ZeroPadded).unwrap();
        let sets = lat.connected_supersets(&[0], 3).unwrap();
        assert_eq!(
            sets,
            vec![vec![vec![-2], vec![-1], vec![0]], vec![vec![-1], vec![0], vec![1]], vec![vec![0], vec![1], vec![2]],]
        );
    }

    #[test]
    fn enumeration_guard() {
        let lat = Lattice::line(3, Boundary::DomainOnly).unwrap();
        assert!(matches!(lat.connected_supersets(&[0], 9), Err(Error::ResourceGuard(_))));
        let big = Lattice::line(100, Boundary::DomainOnly).unwrap();
        assert!(matches!(big.connected_window_sets(2), Err(Error::ResourceGuard(_))));
    }

    #[test]
    fn window_sets_counts() {
        // 1D length 4: sizes 1..=2 give 4 singletons + 3 pairs.
        let lat = Lattice::line(4, Boundary::DomainOnly).unwrap();
        assert_eq!(lat.connected_window_sets(2).unwrap().len(), 7);
        // 2x2 facet: 4 singletons, 4 dominoes, 4 trominoes, 1 full.
        let lat = grid(2, 2, Connectivity::Facet, Boundary::DomainOnly);
        assert_eq!(lat.connected_window_sets(4).unwrap().len(), 13);
    }

    #[test]
    fn serde_goes_through_the_constructor() {
        let lat = grid(3, 2, Connectivity::Full, Boundary::DomainOnly);
        let text = serde_json::to_string(&lat).unwrap();
        assert_eq!(text, r#"{"extents":[3,2],"connectivity":"full","boundary":"domain_only"}"#);
        assert_eq!(serde_json::from_str::<Lattice>(&text).unwrap(), lat);
        let bad = r#"{"extents":[3],"connectivity":"full","boundary":"domain_only"}"#;
        assert!(serde_json::from_str::<Lattice>(bad).is_err());
    }

    #[test]
    fn coords_round_trip() {
        let lat = Lattice::new(&[2, 3, 4], Connectivity::Facet, Boundary::ZeroPadded).unwrap();
        for i in 0..lat.len() {
            let c: Vec<isize> = lat.coords(i).into_iter().map(|v| v as isize).collect();
            assert_eq!(lat.index_of(&c), Some(i));
        }
    }
}
