//! Marked spatial point pattern: locations carrying outcome time series and
//! covariates, plus the single-file CSV representation.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A monitoring location. `coords` are planar (lattice units or projected km).
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub id: String,
    pub coords: [f64; 2],
}

impl Location {
    pub fn new(id: impl Into<String>, coords: [f64; 2]) -> Self {
        Location {
            id: id.into(),
            coords,
        }
    }

    pub fn distance(&self, other: &Location) -> f64 {
        euclidean(self.coords, other.coords)
    }
}

pub fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// One (location, time) cell. `location` indexes [`SpaceTimeDataset::locations`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub location: usize,
    pub time: i64,
    pub y: Option<f64>,
}

/// Immutable space-time dataset.
///
/// Cells are stored sorted by (location index, time). A cell whose outcome is
/// missing is kept (it is part of the grid) but is never *usable*: it enters
/// neither training sets nor test losses.
#[derive(Debug, Clone)]
pub struct SpaceTimeDataset {
    locations: Vec<Location>,
    times: Vec<i64>,
    cells: Vec<Observation>,
    // row-major, p per cell; NaN only where the outcome is missing
    covariates: Vec<f64>,
    covariate_names: Vec<String>,
}

impl PartialEq for SpaceTimeDataset {
    fn eq(&self, other: &Self) -> bool {
        self.locations == other.locations
            && self.times == other.times
            && self.covariate_names == other.covariate_names
            && self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| {
                a.location == b.location
                    && a.time == b.time
                    && a.y.map(f64::to_bits) == b.y.map(f64::to_bits)
            })
            && self.covariates.len() == other.covariates.len()
            && self
                .covariates
                .iter()
                .zip(&other.covariates)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

impl SpaceTimeDataset {
    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn location(&self, idx: usize) -> &Location {
        &self.locations[idx]
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    /// Distinct time indices, strictly increasing.
    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn cells(&self) -> &[Observation] {
        &self.cells
    }

    pub fn cell(&self, row: usize) -> &Observation {
        &self.cells[row]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Covariate dimension p.
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariates(&self, row: usize) -> &[f64] {
        let p = self.p();
        &self.covariates[row * p..(row + 1) * p]
    }

    pub fn coords(&self, row: usize) -> [f64; 2] {
        self.locations[self.cells[row].location].coords
    }

    /// Outcome of a usable row. Panics on a missing outcome.
    pub fn y(&self, row: usize) -> f64 {
        self.cells[row]
            .y
            .expect("outcome requested for a cell with a missing value")
    }

    pub fn is_usable(&self, row: usize) -> bool {
        self.cells[row].y.is_some()
    }

    /// Indices of all cells with a non-missing outcome.
    pub fn usable_rows(&self) -> Vec<usize> {
        (0..self.cells.len()).filter(|&r| self.is_usable(r)).collect()
    }

    pub fn n_usable(&self) -> usize {
        self.cells.iter().filter(|c| c.y.is_some()).count()
    }

    /// Usable rows grouped by location index (empty vectors for locations
    /// without any usable outcome).
    pub fn usable_rows_by_location(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.locations.len()];
        for (r, c) in self.cells.iter().enumerate() {
            if c.y.is_some() {
                out[c.location].push(r);
            }
        }
        out
    }

    /// Diagonal of the bounding box of all locations.
    pub fn spatial_diameter(&self) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for l in &self.locations {
            for d in 0..2 {
                lo[d] = lo[d].min(l.coords[d]);
                hi[d] = hi[d].max(l.coords[d]);
            }
        }
        euclidean(lo, hi)
    }

    /// Dataset restricted to the given rows. Locations without any retained
    /// row are dropped; relative order of locations and cells is kept.
    pub fn subset(&self, rows: &[usize]) -> Result<SpaceTimeDataset> {
        let mut keep = rows.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut b = DatasetBuilder::new(self.covariate_names.clone());
        for &r in &keep {
            let c = &self.cells[r];
            let loc = &self.locations[c.location];
            b.location(&loc.id, loc.coords)?;
        }
        for &r in &keep {
            let c = &self.cells[r];
            let cov = self.covariates(r);
            let cov = if cov.iter().all(|v| v.is_nan()) && c.y.is_none() {
                None
            } else {
                Some(cov.to_vec())
            };
            b.observe(&self.locations[c.location].id, c.time, c.y, cov)?;
        }
        b.build()
    }

    /// Rows whose time lies in `[start, end)`.
    pub fn rows_in_time_window(&self, start: i64, end: i64) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&r| self.cells[r].time >= start && self.cells[r].time < end)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        let mut header = vec![
            "location_id".to_string(),
            "x_coord".into(),
            "y_coord".into(),
            "time".into(),
            "y".into(),
        ];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for (r, c) in self.cells.iter().enumerate() {
            rec.clear();
            let loc = &self.locations[c.location];
            rec.push(loc.id.clone());
            rec.push(fmt_f64(loc.coords[0]));
            rec.push(fmt_f64(loc.coords[1]));
            rec.push(c.time.to_string());
            rec.push(c.y.map(fmt_f64).unwrap_or_default());
            for &v in self.covariates(r) {
                rec.push(if v.is_nan() { String::new() } else { fmt_f64(v) });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<SpaceTimeDataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        const FIXED: [&str; 5] = ["location_id", "x_coord", "y_coord", "time", "y"];
        if header.len() < FIXED.len()
            || header.iter().zip(FIXED).any(|(h, f)| h != f)
        {
            return Err(Error::Parse {
                line: 1,
                message: format!("header must start with {}", FIXED.join(",")),
            });
        }
        let names: Vec<String> = header.iter().skip(5).map(str::to_string).collect();
        let p = names.len();
        let mut b = DatasetBuilder::new(names);
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let perr = |message: String| Error::Parse { line, message };
            if rec.len() != 5 + p {
                return Err(perr(format!("expected {} fields, found {}", 5 + p, rec.len())));
            }
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse::<f64>()
                    .map_err(|e| perr(format!("field `{}`: {e}", &header[k])))
            };
            let id = rec[0].to_string();
            let coords = [num(1)?, num(2)?];
            let time: i64 = rec[3]
                .parse()
                .map_err(|e| perr(format!("field `time`: {e}")))?;
            let y = if rec[4].is_empty() { None } else { Some(num(4)?) };
            let cov = if (5..5 + p).all(|k| rec[k].is_empty()) && p > 0 {
                None
            } else {
                Some((5..5 + p).map(num).collect::<Result<Vec<_>>>()?)
            };
            b.location(&id, coords).map_err(|e| perr(e.to_string()))?;
            b.observe(&id, time, y, cov).map_err(|e| perr(e.to_string()))?;
        }
        b.build()
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<SpaceTimeDataset> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// 17 significant digits; parses back to the identical bit pattern.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Incremental construction of a validated [`SpaceTimeDataset`].
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    covariate_names: Vec<String>,
    locations: Vec<Location>,
    index: HashMap<String, usize>,
    rows: Vec<(usize, i64, Option<f64>, Option<Vec<f64>>)>,
}

impl DatasetBuilder {
    pub fn new(covariate_names: Vec<String>) -> Self {
        DatasetBuilder {
            covariate_names,
            ..Default::default()
        }
    }

    /// Declares a location; repeating an identical declaration is a no-op.
    pub fn location(&mut self, id: &str, coords: [f64; 2]) -> Result<usize> {
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFiniteCoords(id.to_string()));
        }
        if let Some(&i) = self.index.get(id) {
            if self.locations[i].coords != coords {
                return Err(Error::DuplicateLocation(id.to_string()));
            }
            return Ok(i);
        }
        let i = self.locations.len();
        self.locations.push(Location::new(id, coords));
        self.index.insert(id.to_string(), i);
        Ok(i)
    }

    pub fn observe(
        &mut self,
        location_id: &str,
        time: i64,
        y: Option<f64>,
        covariates: Option<Vec<f64>>,
    ) -> Result<()> {
        let &loc = self
            .index
            .get(location_id)
            .ok_or_else(|| Error::UnknownLocation(location_id.to_string()))?;
        self.rows.push((loc, time, y, covariates));
        Ok(())
    }

    pub fn build(self) -> Result<SpaceTimeDataset> {
        let p = self.covariate_names.len();
        let mut rows = self.rows;
        rows.sort_by_key(|r| (r.0, r.1));
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateCell {
                    location: self.locations[w[0].0].id.clone(),
                    time: w[0].1,
                });
            }
        }
        let used: BTreeSet<usize> = rows.iter().map(|r| r.0).collect();
        if used.len() < 2 {
            return Err(Error::TooFewLocations {
                required: 2,
                found: used.len(),
            });
        }
        // drop declared-but-unused locations; the remap is monotone so cells stay sorted
        let mut remap = vec![usize::MAX; self.locations.len()];
        let mut locations = Vec::with_capacity(used.len());
        for (i, loc) in self.locations.into_iter().enumerate() {
            if used.contains(&i) {
                remap[i] = locations.len();
                locations.push(loc);
            }
        }
        let times: Vec<i64> = rows
            .iter()
            .map(|r| r.1)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut cells = Vec::with_capacity(rows.len());
        let mut covariates = Vec::with_capacity(rows.len() * p);
        for (loc, time, y, cov) in rows {
            let loc = remap[loc];
            let id = || locations[loc].id.clone();
            if let Some(v) = y {
                if !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite outcome at location `{}` time {time}",
                        id()
                    )));
                }
            }
            match cov {
                Some(c) => {
                    if c.len() != p {
                        return Err(Error::CovariateLength {
                            location: id(),
                            time,
                            expected: p,
                            found: c.len(),
                        });
                    }
                    if y.is_some() && c.iter().any(|v| !v.is_finite()) {
                        return Err(Error::invalid(format!(
                            "non-finite covariate at location `{}` time {time}",
                            id()
                        )));
                    }
                    covariates.extend(c);
                }
                None if y.is_some() && p > 0 => {
                    return Err(Error::CovariateLength {
                        location: id(),
                        time,
                        expected: p,
                        found: 0,
                    });
                }
                None => covariates.extend(std::iter::repeat_n(f64::NAN, p)),
            }
            cells.push(Observation {
                location: loc,
                time,
                y,
            });
        }
        Ok(SpaceTimeDataset {
            locations,
            times,
            cells,
            covariates,
            covariate_names: self.covariate_names,
        })
    }
}

/// Assembles a dataset from location, outcome and covariate tables keyed by
/// (location id, time). Every outcome key must reference a declared location
/// and a declared time.
pub fn build_dataset(
    locations: &[Location],
    times: &[i64],
    outcomes: &[(&str, i64, Option<f64>)],
    covariates: &[(&str, i64, Vec<f64>)],
    covariate_names: Vec<String>,
) -> Result<SpaceTimeDataset> {
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    let mut b = DatasetBuilder::new(covariate_names);
    for l in locations {
        if b.index.contains_key(&l.id) {
            return Err(Error::DuplicateLocation(l.id.clone()));
        }
        b.location(&l.id, l.coords)?;
    }
    let mut cov_table: HashMap<(&str, i64), &Vec<f64>> = HashMap::new();
    for (id, t, c) in covariates {
        if cov_table.insert((id, *t), c).is_some() {
            return Err(Error::DuplicateCell {
                location: id.to_string(),
                time: *t,
            });
        }
    }
    for &(id, t, y) in outcomes {
        if times.binary_search(&t).is_err() {
            return Err(Error::invalid(format!("time {t} is not in the time list")));
        }
        let cov = cov_table.get(&(id, t)).map(|c| (*c).clone());
        b.observe(id, t, y, cov)?;
    }
    b.build()
}
