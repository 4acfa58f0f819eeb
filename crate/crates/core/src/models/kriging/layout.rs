//! Embedding of scattered training cells in their bounding location × time
//! rectangle.

use std::collections::BTreeMap;

use crate::data::SpaceTimeDataset;

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub loc_coords: Vec<[f64; 2]>,
    pub times: Vec<i64>,
    /// Rectangle index (`loc * n_times + time`) of each training row.
    pub cell: Vec<usize>,
    /// Rectangle cells without a training row, ascending.
    pub holes: Vec<usize>,
}

impl Layout {
    pub fn new(ds: &SpaceTimeDataset, rows: &[usize]) -> Layout {
        let mut loc_ix: BTreeMap<usize, usize> = BTreeMap::new();
        let mut time_ix: BTreeMap<i64, usize> = BTreeMap::new();
        for &r in rows {
            let c = ds.cell(r);
            loc_ix.insert(c.location, 0);
            time_ix.insert(c.time, 0);
        }
        let mut loc_coords = Vec::with_capacity(loc_ix.len());
        for (k, (l, slot)) in loc_ix.iter_mut().enumerate() {
            *slot = k;
            loc_coords.push(ds.location(*l).coords);
        }
        let mut times = Vec::with_capacity(time_ix.len());
        for (k, (t, slot)) in time_ix.iter_mut().enumerate() {
            *slot = k;
            times.push(*t);
        }
        let nt = times.len();
        let cell: Vec<usize> = rows
            .iter()
            .map(|&r| {
                let c = ds.cell(r);
                loc_ix[&c.location] * nt + time_ix[&c.time]
            })
            .collect();
        let mut filled = vec![false; loc_coords.len() * nt];
        for &c in &cell {
            filled[c] = true;
        }
        let holes = (0..filled.len()).filter(|&i| !filled[i]).collect();
        Layout {
            loc_coords,
            times,
            cell,
            holes,
        }
    }

    pub fn ns(&self) -> usize {
        self.loc_coords.len()
    }

    pub fn nt(&self) -> usize {
        self.times.len()
    }

    pub fn n(&self) -> usize {
        self.cell.len()
    }

    /// Smallest positive and largest pairwise spatial distance.
    pub fn spatial_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..self.ns() {
            for j in 0..i {
                let d = crate::data::euclidean(self.loc_coords[i], self.loc_coords[j]);
                if d > 0.0 {
                    lo = lo.min(d);
                }
                hi = hi.max(d);
            }
        }
        (lo, hi)
    }

    /// Smallest positive and largest time lag.
    pub fn temporal_range(&self) -> (f64, f64) {
        let lo = self
            .times
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64)
            .fold(f64::INFINITY, f64::min);
        let hi = match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => (b - a) as f64,
            _ => 0.0,
        };
        (lo, hi)
    }
}
