//! Zone graph with union-find merging and a size-bucketed work queue.
//!
//! Every live zone is a union-find root carrying its value, size, member
//! cells and a (lazily compacted) list of neighbouring zone ids. Raising a
//! local min zone to its smallest neighbour value, or lowering a local max
//! zone to its largest, merges it with the neighbours it now equals. A
//! zone's extremal status can only change when it merges, and every merge
//! at scale `n` produces a zone larger than `n`, so scale `n` only needs to
//! look at zones queued in bucket `n`.
//!
//! In zero-padded mode OUTSIDE is an extra node of value 0 and unbounded
//! size; zones that reach value 0 while touching it are absorbed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::field::{label_flat_zones, Polarity, ScalarField};
use crate::lattice::Lattice;

const UNBOUNDED: usize = usize::MAX;

/// Cells and value of a removed extremal zone (old value minus new value).
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawPulse {
    pub cells: Vec<usize>,
    pub value: i64,
}

pub(crate) struct ZoneGraph<'a> {
    lattice: &'a Lattice,
    cell_zone: Vec<u32>,
    parent: Vec<u32>,
    value: Vec<i64>,
    size: Vec<usize>,
    members: Vec<Vec<u32>>,
    neighbors: Vec<Vec<u32>>,
    buckets: Vec<Vec<u32>>,
    outside: Option<u32>,
    window_roots: usize,
    track_members: bool,
    shuffle: Option<ChaCha8Rng>,
}

impl<'a> ZoneGraph<'a> {
    /// Builds the graph of flat zones of `f`. `track_members` keeps member
    /// lists, which are needed only to report pulse supports.
    pub fn new(f: &'a ScalarField, track_members: bool) -> Self {
        let lattice = f.lattice();
        let (cell_zone, zone_count) = label_flat_zones(f);
        let padded = lattice.is_zero_padded();
        let nodes = zone_count + usize::from(padded);
        let outside = padded.then_some(zone_count as u32);

        let mut value = vec![0i64; nodes];
        let mut size = vec![0usize; nodes];
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); if track_members { nodes } else { 0 }];
        let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); nodes];
        for (cell, &z) in cell_zone.iter().enumerate() {
            let z = z as usize;
            value[z] = f.values()[cell];
            size[z] += 1;
            if track_members {
                members[z].push(cell as u32);
            }
            let touches = lattice.for_each_neighbor(cell, |j| {
                let other = cell_zone[j];
                if other as usize != z {
                    neighbors[z].push(other);
                }
            });
            if touches {
                neighbors[z].push(outside.expect("only zero-padded lattices touch OUTSIDE"));
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        if let Some(o) = outside {
            size[o as usize] = UNBOUNDED;
        }

        let mut graph = Self {
            lattice,
            cell_zone,
            parent: (0..nodes as u32).collect(),
            value,
            size,
            members,
            neighbors,
            buckets: vec![Vec::new(); lattice.len() + 1],
            outside,
            window_roots: zone_count,
            track_members,
            shuffle: None,
        };
        if let Some(o) = outside {
            for z in 0..zone_count as u32 {
                if graph.value[z as usize] == 0 && graph.neighbors[z as usize].binary_search(&o).is_ok() {
                    graph.union(o, z);
                }
            }
        }
        for z in 0..zone_count as u32 {
            if graph.find(z) == z {
                graph.buckets[graph.size[z as usize]].push(z);
            }
        }
        graph
    }

    /// Randomises the processing order of candidates within each stage.
    pub fn with_shuffle(mut self, seed: Option<u64>) -> Self {
        self.shuffle = seed.map(ChaCha8Rng::seed_from_u64);
        self
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Merges two distinct roots of equal value and returns the new root.
    fn union(&mut self, a: u32, b: u32) -> u32 {
        debug_assert_ne!(a, b);
        debug_assert_eq!(self.value[a as usize], self.value[b as usize]);
        let (keep, gone) = if Some(a) == self.outside {
            (a, b)
        } else if Some(b) == self.outside {
            (b, a)
        } else if self.size[a as usize] >= self.size[b as usize] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[gone as usize] = keep;
        self.window_roots -= 1;
        let gone_neighbors = std::mem::take(&mut self.neighbors[gone as usize]);
        let gone_members =
            if self.track_members { std::mem::take(&mut self.members[gone as usize]) } else { Vec::new() };
        if Some(keep) != self.outside {
            self.size[keep as usize] += self.size[gone as usize];
            self.neighbors[keep as usize].extend(gone_neighbors);
            if self.track_members {
                self.members[keep as usize].extend(gone_members);
            }
        }
        keep
    }

    /// Smallest and largest neighbour value of root `z`, compacting its
    /// neighbour list along the way. `None` if `z` has no neighbours.
    fn neighbor_range(&mut self, z: u32) -> Option<(i64, i64)> {
        let mut list = std::mem::take(&mut self.neighbors[z as usize]);
        for x in list.iter_mut() {
            *x = self.find(*x);
        }
        list.sort_unstable();
        list.dedup();
        list.retain(|&x| x != z);
        let range = list.iter().fold(None, |acc: Option<(i64, i64)>, &x| {
            let v = self.value[x as usize];
            Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
        });
        self.neighbors[z as usize] = list;
        range
    }

    /// True once nothing extremal can remain: every window zone has been
    /// absorbed by OUTSIDE, or (domain-only) one zone covers the window.
    pub fn is_settled(&self) -> bool {
        match self.outside {
            Some(_) => self.window_roots == 0,
            None => self.window_roots <= 1,
        }
    }

    /// Smallest bucket index `>= from` holding a live zone of that size.
    pub fn next_scale(&mut self, from: usize) -> Option<usize> {
        for n in from.max(1)..self.buckets.len() {
            let mut bucket = std::mem::take(&mut self.buckets[n]);
            bucket.retain(|&z| self.parent[z as usize] == z && self.size[z as usize] == n);
            let live = !bucket.is_empty();
            self.buckets[n] = bucket;
            if live {
                return Some(n);
            }
        }
        None
    }

    /// Drops bucket `n`; called once scale `n` is finished.
    pub fn retire(&mut self, n: usize) {
        if let Some(b) = self.buckets.get_mut(n) {
            *b = Vec::new();
        }
    }

    /// Removes every local `polarity` zone of exactly `n` cells: min zones
    /// are raised to their smallest neighbour value, max zones lowered to
    /// their largest. Targets are read before any zone is modified.
    pub fn flatten(&mut self, n: usize, polarity: Polarity) -> Vec<RawPulse> {
        if n == 0 || n >= self.buckets.len() {
            return Vec::new();
        }
        let queued = std::mem::take(&mut self.buckets[n]);
        let mut live = Vec::with_capacity(queued.len());
        let mut targets = Vec::new();
        for z in queued {
            if self.parent[z as usize] != z || self.size[z as usize] != n {
                continue;
            }
            live.push(z);
            let Some((lo, hi)) = self.neighbor_range(z) else { continue };
            let v = self.value[z as usize];
            match polarity {
                Polarity::Min if v < lo => targets.push((z, lo)),
                Polarity::Max if v > hi => targets.push((z, hi)),
                _ => {}
            }
        }
        self.buckets[n] = live;
        if let Some(rng) = self.shuffle.as_mut() {
            targets.shuffle(rng);
        }

        let mut pulses = Vec::with_capacity(if self.track_members { targets.len() } else { 0 });
        for (z, target) in targets {
            // Same-stage candidates are never adjacent, so none was absorbed.
            debug_assert_eq!(self.find(z), z);
            let old = self.value[z as usize];
            if self.track_members {
                let mut cells: Vec<usize> = self.members[z as usize].iter().map(|&c| c as usize).collect();
                cells.sort_unstable();
                pulses.push(RawPulse { cells, value: old - target });
            }
            self.value[z as usize] = target;
            let mut equal: Vec<u32> = Vec::new();
            let list = std::mem::take(&mut self.neighbors[z as usize]);
            for &x in &list {
                let r = self.find(x);
                if r != z && self.value[r as usize] == target {
                    equal.push(r);
                }
            }
            self.neighbors[z as usize] = list;
            equal.sort_unstable();
            equal.dedup();
            let mut root = z;
            for r in equal {
                let r = self.find(r);
                if r != root {
                    root = self.union(root, r);
                }
            }
            if Some(root) != self.outside {
                let s = self.size[root as usize];
                if s < self.buckets.len() {
                    self.buckets[s].push(root);
                }
            }
        }
        pulses
    }

    pub fn current_field(&mut self) -> ScalarField {
        let values = (0..self.cell_zone.len())
            .map(|c| {
                let r = self.find(self.cell_zone[c]);
                self.value[r as usize]
            })
            .collect();
        ScalarField::new(self.lattice.clone(), values).expect("one value per cell")
    }

    /// Value of the single remaining zone in domain-only mode.
    pub fn residual(&mut self) -> i64 {
        match self.outside {
            Some(_) => 0,
            None => {
                let r = self.find(self.cell_zone[0]);
                self.value[r as usize]
            }
        }
    }
}
