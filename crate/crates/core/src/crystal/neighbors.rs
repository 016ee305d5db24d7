//! Uniform cell-grid index for k-nearest-neighbour queries.

use std::cmp::Ordering;

use super::ensemble::{DopedEnsemble, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    /// Position of the neighbour minus position of the centre, nm.
    pub displacement: Vec3,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub center_id: usize,
    /// Ascending distance, ties broken by ascending id.
    pub neighbors: Vec<Neighbor>,
    /// Set when fewer ions than requested exist.
    pub truncated: bool,
}

/// Read-only after construction; queries may be issued from many threads.
pub struct NeighborIndex<'a> {
    ensemble: &'a DopedEnsemble,
    origin: Vec3,
    cell_size: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(ensemble: &'a DopedEnsemble) -> Self {
        let n = ensemble.len().max(1);
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for ion in &ensemble.ions {
            lo = lo.inf(&ion.position);
            hi = hi.sup(&ion.position);
        }
        if ensemble.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let extent = (hi - lo).map(|x| x.max(1e-9));
        // about two ions per cell
        let volume = extent.x * extent.y * extent.z;
        let mut cell_size = (2.0 * volume / n as f64).cbrt();
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            cell_size = 1.0;
        }
        let cap = 256usize;
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell_size).floor() as usize + 1).min(cap));
        let total = dims[0] * dims[1] * dims[2];

        let mut index = NeighborIndex {
            ensemble,
            origin: lo,
            cell_size,
            dims,
            starts: vec![0; total + 1],
            items: vec![0; ensemble.len()],
        };
        let cells: Vec<usize> = ensemble
            .ions
            .iter()
            .map(|ion| index.flat(index.cell_of(&ion.position)))
            .collect();
        for &c in &cells {
            index.starts[c + 1] += 1;
        }
        for k in 0..total {
            index.starts[k + 1] += index.starts[k];
        }
        let mut fill = index.starts.clone();
        for (id, &c) in cells.iter().enumerate() {
            index.items[fill[c] as usize] = id as u32;
            fill[c] += 1;
        }
        index
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let x = ((p[k] - self.origin[k]) / self.cell_size).floor();
            (x.max(0.0) as usize).min(self.dims[k] - 1)
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[u32] {
        let f = self.flat(c);
        &self.items[self.starts[f] as usize..self.starts[f + 1] as usize]
    }

    /// The `count` nearest ions to `center_id`, excluding the centre itself.
    pub fn nearest_neighbors(&self, center_id: usize, count: usize) -> Result<NeighborSet> {
        let center = self
            .ensemble
            .ion(center_id)
            .ok_or_else(|| Error::invalid(format!("no ion with id {center_id}")))?;
        if count == 0 {
            return Err(Error::invalid("neighbour count must be at least 1"));
        }
        let available = self.ensemble.len() - 1;
        let wanted = count.min(available);
        let truncated = count > available;
        let p = center.position;
        let home = self.cell_of(&p);
        let max_shell = *self.dims.iter().max().unwrap();

        let mut found: Vec<(f64, usize)> = Vec::new();
        for shell in 0..=max_shell {
            let lo = home.map(|h| h as i64 - shell as i64);
            let hi = home.map(|h| h as i64 + shell as i64);
            for i in lo[0].max(0)..=hi[0].min(self.dims[0] as i64 - 1) {
                for j in lo[1].max(0)..=hi[1].min(self.dims[1] as i64 - 1) {
                    for k in lo[2].max(0)..=hi[2].min(self.dims[2] as i64 - 1) {
                        let on_shell = [i, j, k]
                            .iter()
                            .zip(lo.iter().zip(hi.iter()))
                            .any(|(&x, (&l, &h))| x == l || x == h);
                        if !on_shell {
                            continue;
                        }
                        for &id in self.cell_items([i as usize, j as usize, k as usize]) {
                            let id = id as usize;
                            if id == center_id {
                                continue;
                            }
                            let d2 = (self.ensemble.ions[id].position - p).norm_squared();
                            found.push((d2, id));
                        }
                    }
                }
            }
            if found.len() >= wanted {
                found.sort_by(cmp_candidates);
                found.truncate(wanted);
                // anything beyond this block is at least shell * cell_size away
                let reach = shell as f64 * self.cell_size;
                if wanted == 0 || found[wanted - 1].0.sqrt() < reach {
                    break;
                }
            }
        }
        found.sort_by(cmp_candidates);
        found.truncate(wanted);
        Ok(NeighborSet {
            center_id,
            neighbors: found
                .into_iter()
                .map(|(d2, id)| {
                    let displacement = self.ensemble.ions[id].position - p;
                    Neighbor {
                        id,
                        displacement,
                        distance: d2.sqrt(),
                    }
                })
                .collect(),
            truncated,
        })
    }
}

fn cmp_candidates(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// O(N) per query reference used to check the index.
pub fn brute_force_neighbors(
    ensemble: &DopedEnsemble,
    center_id: usize,
    count: usize,
) -> NeighborSet {
    let p = ensemble.ions[center_id].position;
    let mut all: Vec<(f64, usize)> = ensemble
        .ions
        .iter()
        .filter(|ion| ion.id != center_id)
        .map(|ion| ((ion.position - p).norm_squared(), ion.id))
        .collect();
    all.sort_by(cmp_candidates);
    let truncated = count > all.len();
    all.truncate(count);
    NeighborSet {
        center_id,
        neighbors: all
            .into_iter()
            .map(|(d2, id)| Neighbor {
                id,
                displacement: ensemble.ions[id].position - p,
                distance: d2.sqrt(),
            })
            .collect(),
        truncated,
    }
}
