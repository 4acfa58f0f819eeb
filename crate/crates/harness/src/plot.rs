//! Static SVG figures from the result tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::bands::{bootstrap_mean_bands, quantile, Band};
use crate::case_study::{IntervalRow, INTERVAL_COLUMNS};
use crate::error::{HarnessError, Result};
use crate::kde::{gaussian_kde, linspace};
use crate::lowess::{interpolate, lowess};
use crate::study::{AggregateRow, CondVarRow, AGGREGATE_COLUMNS, CONDVAR_COLUMNS, TRUE_GRID};

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: [f64; 4] = [50.0, 170.0, 60.0, 70.0]; // top, right, bottom, left
const CURVE_POINTS: usize = 25;
const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PlotOptions {
    pub bootstrap_b: usize,
    pub lowess_fraction: f64,
    pub seed: u64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            bootstrap_b: crate::config::DEFAULT_BOOTSTRAP_B,
            lowess_fraction: crate::config::DEFAULT_LOWESS_FRACTION,
            seed: 42,
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// "Nice" tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-300);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() * step;
    (0..)
        .map(|i| first + i as f64 * step)
        .take_while(|v| *v <= hi + step * 1e-9)
        .collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// A single panel with linear axes.
struct Figure {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
    legend: Vec<(String, String)>,
}

impl Figure {
    fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0))
            }
        };
        let mut f = Figure {
            body: String::new(),
            x: pad(x),
            y: pad(y),
            legend: Vec::new(),
        };
        let (t, r, b, l) = (MARGIN[0], MARGIN[1], MARGIN[2], MARGIN[3]);
        let _ = write!(
            f.body,
            r##"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"##,
            l + (WIDTH - l - r) / 2.0,
            esc(title)
        );
        let _ = write!(
            f.body,
            r##"<rect class="frame" x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            WIDTH - l - r,
            HEIGHT - t - b
        );
        for v in ticks(f.x.0, f.x.1, 6) {
            let px = f.px(v);
            let _ = write!(
                f.body,
                r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#333"/><text x="{px:.2}" y="{}" text-anchor="middle" font-size="11">{}</text>"##,
                HEIGHT - b,
                HEIGHT - b + 5.0,
                HEIGHT - b + 18.0,
                fmt_tick(v)
            );
        }
        for v in ticks(f.y.0, f.y.1, 6) {
            let py = f.py(v);
            let _ = write!(
                f.body,
                r##"<line x1="{}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="#333"/><text x="{}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"##,
                l - 5.0,
                l - 8.0,
                py + 4.0,
                fmt_tick(v)
            );
        }
        let _ = write!(
            f.body,
            r##"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text><text transform="translate(18,{}) rotate(-90)" text-anchor="middle" font-size="13">{}</text>"##,
            l + (WIDTH - l - r) / 2.0,
            HEIGHT - 18.0,
            esc(xlabel),
            t + (HEIGHT - t - b) / 2.0,
            esc(ylabel)
        );
        f
    }

    fn px(&self, v: f64) -> f64 {
        let (l, r) = (MARGIN[3], MARGIN[1]);
        l + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - l - r)
    }

    fn py(&self, v: f64) -> f64 {
        let (t, b) = (MARGIN[0], MARGIN[2]);
        HEIGHT - b - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - t - b)
    }

    fn legend(&mut self, label: &str, color: &str) {
        self.legend.push((label.to_string(), color.to_string()));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dash: bool) {
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let dash = if dash { r##" stroke-dasharray="6,4""## } else { "" };
        let _ = write!(
            self.body,
            r##"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"##,
            path.join(" ")
        );
    }

    fn band(&mut self, xs: &[f64], bands: &[Band], color: &str) {
        let mut pts: Vec<String> = Vec::new();
        for (x, b) in xs.iter().zip(bands).filter(|(_, b)| b.lo.is_finite()) {
            pts.push(format!("{:.2},{:.2}", self.px(*x), self.py(b.hi)));
        }
        for (x, b) in xs.iter().zip(bands).rev().filter(|(_, b)| b.lo.is_finite()) {
            pts.push(format!("{:.2},{:.2}", self.px(*x), self.py(b.lo)));
        }
        let _ = write!(
            self.body,
            r##"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"##,
            pts.join(" ")
        );
    }

    fn point(&mut self, x: f64, y: f64, color: &str, label: &str) {
        let _ = write!(
            self.body,
            r##"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.7" data-x="{x:e}" data-y="{y:e}" data-group="{}"/>"##,
            self.px(x),
            self.py(y),
            esc(label)
        );
    }

    fn boxplot(&mut self, center: f64, half: f64, values: &[f64], color: &str) {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return;
        }
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let lo = v.iter().copied().find(|x| *x >= q1 - 1.5 * iqr).unwrap_or(v[0]);
        let hi = v.iter().rev().copied().find(|x| *x <= q3 + 1.5 * iqr).unwrap_or(v[v.len() - 1]);
        let (x0, x1, xc) = (self.px(center - half), self.px(center + half), self.px(center));
        let _ = write!(
            self.body,
            r##"<g class="box"><line x1="{xc:.2}" y1="{:.2}" x2="{xc:.2}" y2="{:.2}" stroke="{color}"/><line x1="{xc:.2}" y1="{:.2}" x2="{xc:.2}" y2="{:.2}" stroke="{color}"/><rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.35" stroke="{color}"/><line x1="{x0:.2}" y1="{:.2}" x2="{x1:.2}" y2="{:.2}" stroke="#000" stroke-width="2"/></g>"##,
            self.py(hi),
            self.py(q3),
            self.py(q1),
            self.py(lo),
            self.py(q3),
            x1 - x0,
            self.py(q1) - self.py(q3),
            self.py(med),
            self.py(med),
        );
        for &o in v.iter().filter(|x| **x < lo || **x > hi) {
            let _ = write!(
                self.body,
                r##"<circle class="outlier" cx="{xc:.2}" cy="{:.2}" r="2" fill="none" stroke="{color}"/>"##,
                self.py(o)
            );
        }
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str) {
        let _ = write!(
            self.body,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}" font-size="11">{}</text>"##,
            self.px(x),
            y,
            esc(s)
        );
    }

    fn finish(self) -> String {
        let mut s = format!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif"><rect width="100%" height="100%" fill="white"/>"##
        );
        s.push_str(&self.body);
        let x = WIDTH - MARGIN[1] + 12.0;
        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = MARGIN[0] + 10.0 + 18.0 * i as f64;
            let _ = write!(
                s,
                r##"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}" font-size="12">{}</text>"##,
                y - 10.0,
                x + 18.0,
                y,
                esc(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Reads a CSV whose header must equal `columns`. A missing file is `None`.
pub fn read_table<T: DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Option<Vec<T>>> {
    if !path.exists() {
        return Ok(None);
    }
    let schema = |message: String| HarnessError::Schema {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != columns {
        return Err(schema(format!("expected columns {}, found {}", columns.join(","), header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, r) in rdr.deserialize().enumerate() {
        rows.push(r.map_err(|e| schema(format!("line {}: {e}", i + 2)))?);
    }
    Ok(Some(rows))
}

/// Distinct values in first-appearance order.
fn ordered<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    it.filter(|s| seen.insert(s.to_string())).map(str::to_string).collect()
}

fn boxplot_svg(scenario: u32, rows: &[&AggregateRow]) -> String {
    let models = ordered(rows.iter().map(|r| r.model.as_str()));
    let estimators = ordered(rows.iter().map(|r| r.estimator.as_str()));
    let (lo, hi) = range(rows.iter().filter_map(|r| r.estimate));
    let mut f = Figure::new(
        &format!("Scenario {scenario}: error estimates by model"),
        "model",
        "MSE",
        (0.0, models.len() as f64),
        (lo.min(0.0), hi * 1.05),
    );
    let slot = 0.8 / estimators.len() as f64;
    for (m, model) in models.iter().enumerate() {
        f.text(m as f64 + 0.5, HEIGHT - MARGIN[2] + 34.0, model, "middle");
        for (e, est) in estimators.iter().enumerate() {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| &r.model == model && &r.estimator == est)
                .filter_map(|r| r.estimate)
                .collect();
            let c = m as f64 + 0.1 + slot * (e as f64 + 0.5);
            f.boxplot(c, slot * 0.4, &vals, PALETTE[e % PALETTE.len()]);
        }
    }
    for (e, est) in estimators.iter().enumerate() {
        f.legend(est, PALETTE[e % PALETTE.len()]);
    }
    f.finish()
}

/// Pairs of (true error, estimate) per plotted point, with its group.
pub fn scatter_points(rows: &[&AggregateRow]) -> Vec<(f64, f64, String, String)> {
    let truth: HashMap<(u64, &str), f64> = rows
        .iter()
        .filter(|r| r.estimator == TRUE_GRID)
        .filter_map(|r| r.estimate.map(|e| ((r.replicate, r.model.as_str()), e)))
        .collect();
    rows.iter()
        .filter(|r| r.estimator != TRUE_GRID)
        .filter_map(|r| {
            let t = truth.get(&(r.replicate, r.model.as_str()))?;
            Some((*t, r.estimate?, r.model.clone(), r.estimator.clone()))
        })
        .collect()
}

fn scatter_svg(scenario: u32, rows: &[&AggregateRow]) -> String {
    let pts = scatter_points(rows);
    let estimators = ordered(pts.iter().map(|p| p.3.as_str()));
    let (lo, hi) = range(pts.iter().flat_map(|p| [p.0, p.1]));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi * 1.05) } else { (0.0, 1.0) };
    let mut f = Figure::new(
        &format!("Scenario {scenario}: estimate against true error"),
        "true interpolation error",
        "estimated error",
        (lo, hi),
        (lo, hi),
    );
    f.polyline(&[(lo, lo), (hi, hi)], "#000", true);
    for (t, e, m, est) in &pts {
        let k = estimators.iter().position(|x| x == est).unwrap_or(0);
        f.point(*t, *e, PALETTE[k % PALETTE.len()], &format!("{m}/{est}"));
    }
    for (k, est) in estimators.iter().enumerate() {
        f.legend(est, PALETTE[k % PALETTE.len()]);
    }
    f.finish()
}

fn log_cv(v: f64) -> f64 {
    v.max(FLOOR).log10()
}

fn density_svg(scenario: u32, rows: &[&CondVarRow]) -> Result<String> {
    // conditional variances do not depend on the model; use the first one
    let first = rows[0].model.clone();
    let estimators = ordered(rows.iter().map(|r| r.estimator.as_str()));
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for est in &estimators {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.model == first && &r.estimator == est)
            .map(|r| log_cv(r.cond_var))
            .collect();
        series.push((est.clone(), v));
    }
    let (lo, hi) = range(series.iter().flat_map(|s| s.1.iter().copied()));
    let grid = linspace(lo - 0.5, hi + 0.5, 200);
    let mut curves = Vec::new();
    for (est, v) in &series {
        match gaussian_kde(v, &grid) {
            Ok(d) => curves.push((est.clone(), d)),
            Err(e) => log::warn!("scenario {scenario} {est}: no density: {e}"),
        }
    }
    let ymax = curves.iter().flat_map(|c| c.1.iter().copied()).fold(0.0, f64::max);
    let mut f = Figure::new(
        &format!("Scenario {scenario}: conditional variance of test cells"),
        "log10 conditional variance",
        "density",
        (grid[0], grid[grid.len() - 1]),
        (0.0, ymax * 1.05),
    );
    for (est, d) in &curves {
        let k = estimators.iter().position(|x| x == est).unwrap_or(0);
        let pts: Vec<(f64, f64)> = grid.iter().copied().zip(d.iter().copied()).collect();
        f.polyline(&pts, PALETTE[k % PALETTE.len()], false);
        f.legend(est, PALETTE[k % PALETTE.len()]);
    }
    Ok(f.finish())
}

/// Smoothed squared error against log10 conditional variance on `grid`,
/// one curve per replicate.
pub fn replicate_curves(rows: &[&CondVarRow], grid: &[f64], fraction: f64) -> Vec<Vec<f64>> {
    let mut by_rep: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        if let Some(e) = r.sq_error {
            let entry = by_rep.entry(r.replicate).or_default();
            entry.0.push(log_cv(r.cond_var));
            entry.1.push(e);
        }
    }
    by_rep
        .into_values()
        .filter_map(|(x, y)| lowess(&x, &y, fraction).ok())
        .map(|curve| grid.iter().map(|&g| interpolate(&curve, g)).collect())
        .collect()
}

fn mse_curve_svg(scenario: u32, model: &str, rows: &[&CondVarRow], opts: &PlotOptions) -> String {
    let estimators = ordered(rows.iter().map(|r| r.estimator.as_str()));
    let mut drawn: Vec<(usize, Vec<f64>, Vec<Band>)> = Vec::new();
    for (k, est) in estimators.iter().enumerate() {
        let sel: Vec<&CondVarRow> = rows.iter().copied().filter(|r| &r.estimator == est).collect();
        let mut xs: Vec<f64> = sel.iter().map(|r| log_cv(r.cond_var)).collect();
        xs.sort_by(f64::total_cmp);
        if xs.len() < 3 {
            continue;
        }
        let grid = linspace(quantile(&xs, 0.05), quantile(&xs, 0.95), CURVE_POINTS);
        let curves = replicate_curves(&sel, &grid, opts.lowess_fraction);
        let bands = match curves.len() {
            0 => continue,
            1 => curves[0]
                .iter()
                .map(|&v| Band {
                    lo: v,
                    mid: v,
                    hi: v,
                })
                .collect(),
            _ => match bootstrap_mean_bands(&curves, opts.bootstrap_b, opts.seed) {
                Ok(b) => b,
                Err(e) => {
                    log::warn!("scenario {scenario} {model} {est}: no bands: {e}");
                    continue;
                }
            },
        };
        drawn.push((k, grid, bands));
    }
    let (xlo, xhi) = range(drawn.iter().flat_map(|d| d.1.iter().copied()));
    let (_, yhi) = range(drawn.iter().flat_map(|d| d.2.iter().map(|b| b.hi)));
    let mut f = Figure::new(
        &format!("Scenario {scenario}, {model}: error against conditional variance"),
        "log10 conditional variance",
        "smoothed squared error",
        if xlo.is_finite() { (xlo, xhi) } else { (0.0, 1.0) },
        (0.0, if yhi.is_finite() { yhi * 1.05 } else { 1.0 }),
    );
    for (k, grid, bands) in &drawn {
        let color = PALETTE[k % PALETTE.len()];
        f.band(grid, bands, color);
        let mid: Vec<(f64, f64)> = grid.iter().zip(bands).map(|(x, b)| (*x, b.mid)).collect();
        f.polyline(&mid, color, false);
        f.legend(&estimators[*k], color);
    }
    f.finish()
}

fn case_intervals_svg(rows: &[IntervalRow]) -> String {
    let mut acc: BTreeMap<(String, String, u32), (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let Some(e) = r.estimate {
            let a = acc.entry((r.model.clone(), r.estimator.clone(), r.interval_weeks)).or_default();
            a.0 += e;
            a.1 += 1;
        }
    }
    let series = ordered(rows.iter().map(|r| r.model.as_str()));
    let estimators = ordered(rows.iter().map(|r| r.estimator.as_str()));
    let (lo, hi) = range(acc.values().map(|(s, n)| s / *n as f64));
    let (_, wmax) = range(rows.iter().map(|r| (r.interval_weeks as f64).log2()));
    let mut f = Figure::new(
        "Mean cross-validated error by interval length",
        "log2 interval length (weeks)",
        "MSE",
        (0.0, wmax.max(1.0)),
        (lo.min(0.0), hi * 1.05),
    );
    for (mi, m) in series.iter().enumerate() {
        for (ei, e) in estimators.iter().enumerate() {
            let pts: Vec<(f64, f64)> = acc
                .iter()
                .filter(|((am, ae, _), _)| am == m && ae == e)
                .map(|((_, _, w), (s, n))| ((*w as f64).log2(), s / *n as f64))
                .collect();
            let color = PALETTE[(mi * estimators.len() + ei) % PALETTE.len()];
            f.polyline(&pts, color, ei > 0);
            for (x, y) in &pts {
                f.point(*x, *y, color, &format!("{m}/{e}"));
            }
            f.legend(&format!("{m} / {e}"), color);
        }
    }
    f.finish()
}

fn case_weekly_svg(rows: &[IntervalRow]) -> String {
    let series = ordered(rows.iter().map(|r| r.model.as_str()));
    let estimators = ordered(rows.iter().map(|r| r.estimator.as_str()));
    let (lo, hi) = range(rows.iter().filter_map(|r| r.estimate));
    let (_, kmax) = range(rows.iter().map(|r| r.interval as f64));
    let mut f = Figure::new(
        "Weekly cross-validated error",
        "week",
        "MSE",
        (0.0, kmax.max(1.0)),
        (lo.min(0.0), hi * 1.05),
    );
    for (mi, m) in series.iter().enumerate() {
        for (ei, e) in estimators.iter().enumerate() {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| &r.model == m && &r.estimator == e)
                .filter_map(|r| r.estimate.map(|v| (r.interval as f64, v)))
                .collect();
            let color = PALETTE[(mi * estimators.len() + ei) % PALETTE.len()];
            f.polyline(&pts, color, ei > 0);
            f.legend(&format!("{m} / {e}"), color);
        }
    }
    f.finish()
}

/// Renders every figure the tables in `results_dir` support into
/// `output_dir` and returns the written paths. Nothing is written unless
/// at least one table has rows.
pub fn emit_plots(results_dir: &Path, output_dir: &Path, opts: &PlotOptions) -> Result<Vec<PathBuf>> {
    let aggregate: Vec<AggregateRow> =
        read_table(&results_dir.join("aggregate.csv"), &AGGREGATE_COLUMNS)?.unwrap_or_default();
    let condvar: Vec<CondVarRow> = read_table(&results_dir.join("condvar.csv"), &CONDVAR_COLUMNS)?.unwrap_or_default();
    let intervals: Vec<IntervalRow> =
        read_table(&results_dir.join("case_intervals.csv"), &INTERVAL_COLUMNS)?.unwrap_or_default();
    let weekly: Vec<IntervalRow> = read_table(&results_dir.join("weekly.csv"), &INTERVAL_COLUMNS)?.unwrap_or_default();
    let has_estimates = aggregate.iter().any(|r| r.estimate.is_some());
    if !has_estimates && intervals.is_empty() && weekly.is_empty() {
        return Err(HarnessError::EmptyResults(results_dir.display().to_string()));
    }

    let mut files: Vec<(String, String)> = Vec::new();
    let scenarios: BTreeSet<u32> = aggregate.iter().map(|r| r.scenario).collect();
    for s in scenarios {
        let rows: Vec<&AggregateRow> = aggregate.iter().filter(|r| r.scenario == s).collect();
        if rows.iter().all(|r| r.estimate.is_none()) {
            continue;
        }
        files.push((format!("boxplot_s{s}.svg"), boxplot_svg(s, &rows)));
        files.push((format!("scatter_s{s}.svg"), scatter_svg(s, &rows)));
    }
    let cv_scenarios: BTreeSet<u32> = condvar.iter().map(|r| r.scenario).collect();
    for s in cv_scenarios {
        let rows: Vec<&CondVarRow> = condvar.iter().filter(|r| r.scenario == s).collect();
        files.push((format!("condvar_density_s{s}.svg"), density_svg(s, &rows)?));
        for (mi, m) in ordered(rows.iter().map(|r| r.model.as_str())).iter().enumerate() {
            let sel: Vec<&CondVarRow> = rows.iter().copied().filter(|r| &r.model == m).collect();
            let o = PlotOptions {
                seed: stcv_core::rng::derive_seed(&[opts.seed, s as u64, mi as u64]),
                ..opts.clone()
            };
            files.push((format!("condvar_mse_s{s}_{m}.svg"), mse_curve_svg(s, m, &sel, &o)));
        }
    }
    if !intervals.is_empty() {
        files.push(("case_intervals.svg".into(), case_intervals_svg(&intervals)));
    }
    if !weekly.is_empty() {
        files.push(("case_weekly.svg".into(), case_weekly_svg(&weekly)));
    }

    std::fs::create_dir_all(output_dir)?;
    let mut out = Vec::new();
    for (name, svg) in files {
        let p = output_dir.join(name);
        std::fs::write(&p, svg)?;
        out.push(p);
    }
    Ok(out)
}

/// Counts `<circle class="point"` elements in an SVG document.
pub fn count_points(svg: &str) -> usize {
    svg.matches(r##"<circle class="point""##).count()
}
