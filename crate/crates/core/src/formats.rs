//! Plain-text artifact formats. Every writer has a parser that returns an
//! equal value.
//!
//! Telemetry uses fixed 9-decimal columns. Everything else writes floats with
//! the shortest representation that parses back to the same `f64`.
//!
//! Key-value documents are `key = value` lines; `#` starts a comment line.

use std::fmt::Write as _;

use thiserror::Error;

use crate::characterize::{AxisFit, CellFit};
use crate::estimation::{
    gp_fit_with_prior_mean, BinnedStats, CellStats, FitReport, GmmComponent, GmmModel, GpModel, Grid, KernelParams,
    NoiseMap, PolySurface, Provenance,
};
use crate::sim::{EpisodeComparison, Metrics, Report};
use crate::telemetry::{EpisodeLog, TelemetryRecord};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

pub const TELEMETRY_HEADER: &str = "t,x,y,z,valid,setpoint_z,episode";
pub const NOISE_MAP_COLUMNS: &str = "ix,iy,noise,provenance";
pub const BINNED_COLUMNS: &str = "ix,iy,count,mean,var,samples";

fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64, FormatError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| FormatError::new(line, format!("{what}: expected a finite number, got `{s}`")))
}

fn parse_usize(s: &str, line: usize, what: &str) -> Result<usize, FormatError> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| FormatError::new(line, format!("{what}: expected a non-negative integer, got `{s}`")))
}

fn parse_u64(s: &str, line: usize, what: &str) -> Result<u64, FormatError> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| FormatError::new(line, format!("{what}: expected a non-negative integer, got `{s}`")))
}

fn parse_bool(s: &str, line: usize, what: &str) -> Result<bool, FormatError> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(FormatError::new(line, format!("{what}: expected true or false, got `{other}`"))),
    }
}

// ---------------------------------------------------------------- telemetry

pub fn write_telemetry(log: &EpisodeLog) -> String {
    let mut out = String::with_capacity(64 * (log.len() + 1));
    out.push_str(TELEMETRY_HEADER);
    out.push('\n');
    for r in &log.records {
        let _ = writeln!(
            out,
            "{:.9},{:.9},{:.9},{:.9},{},{:.9},{}",
            r.t,
            r.x,
            r.y,
            r.z,
            u8::from(r.valid),
            r.setpoint_z,
            r.episode
        );
    }
    out
}

/// The episode id comes from the rows; an empty file yields `episode`.
pub fn parse_telemetry(text: &str, episode: u64) -> Result<EpisodeLog, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TELEMETRY_HEADER => {}
        _ => return Err(FormatError::new(1, format!("expected header `{TELEMETRY_HEADER}`"))),
    }
    let mut log = EpisodeLog::new(episode);
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(FormatError::new(n, format!("expected 7 columns, got {}", f.len())));
        }
        let valid = match f[4].trim() {
            "1" => true,
            "0" => false,
            other => return Err(FormatError::new(n, format!("valid: expected 0 or 1, got `{other}`"))),
        };
        let record = TelemetryRecord {
            t: parse_f64(f[0], n, "t")?,
            x: parse_f64(f[1], n, "x")?,
            y: parse_f64(f[2], n, "y")?,
            z: parse_f64(f[3], n, "z")?,
            valid,
            setpoint_z: parse_f64(f[5], n, "setpoint_z")?,
            episode: parse_u64(f[6], n, "episode")?,
        };
        if let Some(prev) = log.records.last() {
            if record.episode != prev.episode {
                return Err(FormatError::new(n, "episode id changes within a file"));
            }
            if record.t <= prev.t {
                return Err(FormatError::new(n, "time is not strictly increasing"));
            }
        }
        log.episode = record.episode;
        log.records.push(record);
    }
    Ok(log)
}

// ------------------------------------------------------- key-value documents

/// Ordered `key = value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvDoc {
    pub entries: Vec<(String, String, usize)>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(FormatError::new(i + 1, format!("expected `key = value`, got `{line}`")));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(FormatError::new(i + 1, "empty key"));
            }
            if entries.iter().any(|(existing, _, _)| *existing == key) {
                return Err(FormatError::new(i + 1, format!("duplicate key `{key}`")));
            }
            entries.push((key, v.trim().to_string(), i + 1));
        }
        Ok(Self { entries })
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string(), 0));
    }

    pub fn render(&self, title: &str) -> String {
        let mut out = format!("# {title}\n");
        for (k, v, _) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn find(&self, key: &str) -> Option<&(String, String, usize)> {
        self.entries.iter().find(|(k, _, _)| k == key)
    }

    pub fn get(&self, key: &str) -> Result<(&str, usize), FormatError> {
        self.find(key)
            .map(|(_, v, n)| (v.as_str(), *n))
            .ok_or_else(|| FormatError::new(0, format!("missing key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, FormatError> {
        let (v, n) = self.get(key)?;
        parse_f64(v, n, key)
    }

    pub fn usize(&self, key: &str) -> Result<usize, FormatError> {
        let (v, n) = self.get(key)?;
        parse_usize(v, n, key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, FormatError> {
        let (v, n) = self.get(key)?;
        parse_u64(v, n, key)
    }

    pub fn bool(&self, key: &str) -> Result<bool, FormatError> {
        let (v, n) = self.get(key)?;
        parse_bool(v, n, key)
    }

    pub fn expect(&self, key: &str, value: &str) -> Result<(), FormatError> {
        let (v, n) = self.get(key)?;
        if v == value {
            Ok(())
        } else {
            Err(FormatError::new(n, format!("{key}: expected `{value}`, got `{v}`")))
        }
    }

    /// Space-separated floats; an empty value is an empty list.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, FormatError> {
        let (v, n) = self.get(key)?;
        v.split_whitespace().map(|s| parse_f64(s, n, key)).collect()
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

// --------------------------------------------------------------------- grid

fn push_grid(doc: &mut KvDoc, grid: &Grid) {
    doc.push("origin_x", grid.origin_x);
    doc.push("origin_y", grid.origin_y);
    doc.push("cell", grid.cell);
    doc.push("nx", grid.nx);
    doc.push("ny", grid.ny);
}

fn read_grid(doc: &KvDoc) -> Result<Grid, FormatError> {
    Grid::new(
        doc.f64("origin_x")?,
        doc.f64("origin_y")?,
        doc.f64("cell")?,
        doc.usize("nx")?,
        doc.usize("ny")?,
    )
    .map_err(|e| FormatError::new(0, e.to_string()))
}

// Data rows as (line number, text).
type Rows<'a> = Vec<(usize, &'a str)>;

// Splits a file into its key-value header and the rows after `columns`.
fn split_table<'a>(text: &'a str, columns: &str) -> Result<(KvDoc, Rows<'a>), FormatError> {
    let lines: Vec<&str> = text.lines().collect();
    let Some(at) = lines.iter().position(|l| l.trim() == columns) else {
        return Err(FormatError::new(0, format!("missing column header `{columns}`")));
    };
    let header = KvDoc::parse(&lines[..at].join("\n"))?;
    let rows = lines[at + 1..]
        .iter()
        .enumerate()
        .map(|(i, l)| (at + i + 2, *l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    Ok((header, rows))
}

// ---------------------------------------------------------------- noise map

pub fn write_noise_map(map: &NoiseMap) -> String {
    let mut doc = KvDoc::default();
    doc.push("format", "noise-map");
    push_grid(&mut doc, map.grid());
    let mut out = doc.render("expected altitude deviation per cell, meters");
    out.push_str(NOISE_MAP_COLUMNS);
    out.push('\n');
    let grid = map.grid();
    for (i, (v, p)) in map.values().iter().zip(map.provenance()).enumerate() {
        let (ix, iy) = grid.unflatten(i);
        let _ = writeln!(out, "{ix},{iy},{v},{}", p.as_str());
    }
    out
}

pub fn parse_noise_map(text: &str) -> Result<NoiseMap, FormatError> {
    let (header, rows) = split_table(text, NOISE_MAP_COLUMNS)?;
    header.expect("format", "noise-map")?;
    let grid = read_grid(&header)?;
    let mut noise = vec![None; grid.len()];
    for (n, row) in rows {
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 4 {
            return Err(FormatError::new(n, format!("expected 4 columns, got {}", f.len())));
        }
        let (ix, iy) = (parse_usize(f[0], n, "ix")?, parse_usize(f[1], n, "iy")?);
        if ix >= grid.nx || iy >= grid.ny {
            return Err(FormatError::new(n, format!("cell ({ix}, {iy}) outside the grid")));
        }
        let value = parse_f64(f[2], n, "noise")?;
        let tag = Provenance::parse(f[3].trim())
            .ok_or_else(|| FormatError::new(n, format!("unknown provenance `{}`", f[3].trim())))?;
        let slot = &mut noise[grid.flat_index(ix, iy)];
        if slot.is_some() {
            return Err(FormatError::new(n, format!("cell ({ix}, {iy}) listed twice")));
        }
        *slot = Some((value, tag));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut tags = Vec::with_capacity(grid.len());
    for (i, cell) in noise.into_iter().enumerate() {
        let (v, t) = cell.ok_or_else(|| {
            let (ix, iy) = grid.unflatten(i);
            FormatError::new(0, format!("cell ({ix}, {iy}) missing"))
        })?;
        values.push(v);
        tags.push(t);
    }
    NoiseMap::from_parts(grid, values, tags).map_err(|e| FormatError::new(0, e.to_string()))
}

// ------------------------------------------------------------- binned stats

pub fn write_binned(stats: &BinnedStats) -> String {
    let mut doc = KvDoc::default();
    doc.push("format", "binned-stats");
    push_grid(&mut doc, &stats.grid);
    doc.push("overflow", stats.overflow);
    let mut out = doc.render("per-cell z statistics; var is unbiased, '-' below two samples");
    out.push_str(BINNED_COLUMNS);
    out.push('\n');
    for (ix, iy, c) in stats.occupied() {
        let mean = c.mean_z.expect("occupied cell has a mean");
        let var = c.var_z.map_or_else(|| "-".to_string(), |v| v.to_string());
        let samples = c.samples.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        let _ = writeln!(out, "{ix},{iy},{},{mean},{var},{samples}", c.count);
    }
    out
}

/// Cell statistics are recomputed from the samples and must agree with the
/// stored count, mean and variance.
pub fn parse_binned(text: &str) -> Result<BinnedStats, FormatError> {
    let (header, rows) = split_table(text, BINNED_COLUMNS)?;
    header.expect("format", "binned-stats")?;
    let grid = read_grid(&header)?;
    let mut cells = vec![CellStats::default(); grid.len()];
    for (n, row) in rows {
        let f: Vec<&str> = row.splitn(6, ',').collect();
        if f.len() != 6 {
            return Err(FormatError::new(n, "expected 6 columns"));
        }
        let (ix, iy) = (parse_usize(f[0], n, "ix")?, parse_usize(f[1], n, "iy")?);
        if ix >= grid.nx || iy >= grid.ny {
            return Err(FormatError::new(n, format!("cell ({ix}, {iy}) outside the grid")));
        }
        let samples = f[5]
            .split(';')
            .map(|s| parse_f64(s, n, "sample"))
            .collect::<Result<Vec<_>, _>>()?;
        let cell = CellStats::from_samples(samples);
        let count = parse_usize(f[2], n, "count")?;
        let mean = parse_f64(f[3], n, "mean")?;
        let var = match f[4].trim() {
            "-" => None,
            s => Some(parse_f64(s, n, "var")?),
        };
        if count != cell.count || Some(mean) != cell.mean_z || var != cell.var_z {
            return Err(FormatError::new(n, "summary columns disagree with the samples"));
        }
        let slot = &mut cells[grid.flat_index(ix, iy)];
        if slot.count > 0 {
            return Err(FormatError::new(n, format!("cell ({ix}, {iy}) listed twice")));
        }
        *slot = cell;
    }
    Ok(BinnedStats {
        grid,
        cells,
        overflow: header.usize("overflow")?,
    })
}

// ------------------------------------------------------------------- models

fn push_gmm(doc: &mut KvDoc, prefix: &str, model: &GmmModel) {
    doc.push(format!("{prefix}components"), model.len());
    doc.push(format!("{prefix}weights"), join(&model.components.iter().map(|c| c.weight).collect::<Vec<_>>()));
    doc.push(format!("{prefix}means"), join(&model.components.iter().map(|c| c.mean).collect::<Vec<_>>()));
    doc.push(format!("{prefix}sigmas"), join(&model.components.iter().map(|c| c.sigma).collect::<Vec<_>>()));
}

fn read_gmm(doc: &KvDoc, prefix: &str) -> Result<GmmModel, FormatError> {
    let m = doc.usize(&format!("{prefix}components"))?;
    let w = doc.f64_list(&format!("{prefix}weights"))?;
    let mu = doc.f64_list(&format!("{prefix}means"))?;
    let sigma = doc.f64_list(&format!("{prefix}sigmas"))?;
    if w.len() != m || mu.len() != m || sigma.len() != m {
        return Err(FormatError::new(0, format!("{prefix}: expected {m} values per parameter")));
    }
    let components = (0..m)
        .map(|i| GmmComponent {
            weight: w[i],
            mean: mu[i],
            sigma: sigma[i],
        })
        .collect();
    GmmModel::new(components).map_err(|e| FormatError::new(0, e.to_string()))
}

/// Gaussian mixture on one axis.
///
/// Keys: `model = gmm`, `axis`, `components`, then space-separated `weights`,
/// `means`, `sigmas`, and the fit report: `iterations`, `converged`,
/// `loglik_trace`.
pub fn write_gmm(axis: &str, fit: &AxisFit) -> String {
    let mut doc = KvDoc::default();
    doc.push("model", "gmm");
    doc.push("axis", axis);
    push_gmm(&mut doc, "", &fit.model);
    doc.push("iterations", fit.report.iterations);
    doc.push("converged", fit.report.converged);
    doc.push("loglik_trace", join(&fit.report.loglik_trace));
    doc.render("1-D gaussian mixture fitted by EM")
}

pub fn parse_gmm(text: &str) -> Result<(String, AxisFit), FormatError> {
    let doc = KvDoc::parse(text)?;
    doc.expect("model", "gmm")?;
    let axis = doc.get("axis")?.0.to_string();
    let model = read_gmm(&doc, "")?;
    let report = FitReport {
        loglik_trace: doc.f64_list("loglik_trace")?,
        iterations: doc.usize("iterations")?,
        converged: doc.bool("converged")?,
    };
    Ok((axis, AxisFit { model, report }))
}

/// Per-cell z mixtures: `cells = N`, then `cell.K.ix`, `cell.K.iy` and the
/// mixture keys prefixed by `cell.K.`.
pub fn write_cell_gmms(cells: &[CellFit]) -> String {
    let mut doc = KvDoc::default();
    doc.push("model", "cell-gmm");
    doc.push("cells", cells.len());
    for (k, c) in cells.iter().enumerate() {
        doc.push(format!("cell.{k}.ix"), c.ix);
        doc.push(format!("cell.{k}.iy"), c.iy);
        push_gmm(&mut doc, &format!("cell.{k}."), &c.model);
    }
    doc.render("per-cell z mixtures")
}

pub fn parse_cell_gmms(text: &str) -> Result<Vec<CellFit>, FormatError> {
    let doc = KvDoc::parse(text)?;
    doc.expect("model", "cell-gmm")?;
    (0..doc.usize("cells")?)
        .map(|k| {
            Ok(CellFit {
                ix: doc.usize(&format!("cell.{k}.ix"))?,
                iy: doc.usize(&format!("cell.{k}.iy"))?,
                model: read_gmm(&doc, &format!("cell.{k}."))?,
            })
        })
        .collect()
}

/// Keys: `model = poly`, `degree`, `coefficients` in graded order
/// (1, x, y, x^2, xy, y^2, ...).
pub fn write_poly(surface: &PolySurface) -> String {
    let mut doc = KvDoc::default();
    doc.push("model", "poly");
    doc.push("degree", surface.degree);
    doc.push("coefficients", join(&surface.coefficients));
    doc.render("bivariate polynomial surface of cell mean z")
}

pub fn parse_poly(text: &str) -> Result<PolySurface, FormatError> {
    let doc = KvDoc::parse(text)?;
    doc.expect("model", "poly")?;
    PolySurface::new(doc.usize("degree")?, doc.f64_list("coefficients")?).map_err(|e| FormatError::new(0, e.to_string()))
}

/// Keys: `model = gp`, kernel hyperparameters, `prior_mean`, `points`, then
/// `xs`, `ys`, `zs`. The factorization is recomputed on load.
pub fn write_gp(model: &GpModel) -> String {
    let mut doc = KvDoc::default();
    doc.push("model", "gp");
    doc.push("signal_var", model.params.signal_var);
    doc.push("length_scale", model.params.length_scale);
    doc.push("noise_var", model.params.noise_var);
    doc.push("prior_mean", model.prior_mean);
    doc.push("points", model.len());
    doc.push("xs", join(&model.inputs.iter().map(|p| p.0).collect::<Vec<_>>()));
    doc.push("ys", join(&model.inputs.iter().map(|p| p.1).collect::<Vec<_>>()));
    doc.push("zs", join(&model.targets));
    doc.render("gaussian process over cell mean z, squared-exponential kernel")
}

pub fn parse_gp(text: &str) -> Result<GpModel, FormatError> {
    let doc = KvDoc::parse(text)?;
    doc.expect("model", "gp")?;
    let params = KernelParams {
        signal_var: doc.f64("signal_var")?,
        length_scale: doc.f64("length_scale")?,
        noise_var: doc.f64("noise_var")?,
    };
    let n = doc.usize("points")?;
    let (xs, ys, zs) = (doc.f64_list("xs")?, doc.f64_list("ys")?, doc.f64_list("zs")?);
    if xs.len() != n || ys.len() != n || zs.len() != n {
        return Err(FormatError::new(0, format!("expected {n} values in xs, ys and zs")));
    }
    let points: Vec<_> = (0..n).map(|i| (xs[i], ys[i], zs[i])).collect();
    gp_fit_with_prior_mean(&points, &params, doc.f64("prior_mean")?).map_err(|e| FormatError::new(0, e.to_string()))
}

// ------------------------------------------------------------------- report

fn push_metrics(doc: &mut KvDoc, prefix: &str, m: &Metrics) {
    doc.push(format!("{prefix}.count"), m.count);
    doc.push(format!("{prefix}.mean_z"), m.mean_z);
    doc.push(format!("{prefix}.rmse"), m.rmse);
    doc.push(format!("{prefix}.std"), m.std);
    doc.push(format!("{prefix}.max_pos_dev"), m.max_pos_dev);
    doc.push(format!("{prefix}.max_neg_dev"), m.max_neg_dev);
}

fn read_metrics(doc: &KvDoc, prefix: &str) -> Result<Metrics, FormatError> {
    Ok(Metrics {
        count: doc.usize(&format!("{prefix}.count"))?,
        mean_z: doc.f64(&format!("{prefix}.mean_z"))?,
        rmse: doc.f64(&format!("{prefix}.rmse"))?,
        std: doc.f64(&format!("{prefix}.std"))?,
        max_pos_dev: doc.f64(&format!("{prefix}.max_pos_dev"))?,
        max_neg_dev: doc.f64(&format!("{prefix}.max_neg_dev"))?,
    })
}

/// Machine-readable comparison summary.
pub fn write_report(report: &Report) -> String {
    let mut doc = KvDoc::default();
    doc.push("format", "comparison");
    doc.push("reference", report.reference);
    doc.push("improvement_ratio", report.improvement_ratio);
    push_metrics(&mut doc, "baseline", &report.baseline);
    push_metrics(&mut doc, "corrected", &report.corrected);
    doc.push("episodes", report.episodes.len());
    for (k, e) in report.episodes.iter().enumerate() {
        doc.push(format!("episode.{k}.baseline_id"), e.baseline_episode);
        doc.push(format!("episode.{k}.corrected_id"), e.corrected_episode);
        push_metrics(&mut doc, &format!("episode.{k}.baseline"), &e.baseline);
        push_metrics(&mut doc, &format!("episode.{k}.corrected"), &e.corrected);
    }
    doc.render("baseline vs corrected altitude error")
}

pub fn parse_report(text: &str) -> Result<Report, FormatError> {
    let doc = KvDoc::parse(text)?;
    doc.expect("format", "comparison")?;
    let episodes = (0..doc.usize("episodes")?)
        .map(|k| {
            Ok(EpisodeComparison {
                baseline_episode: doc.u64(&format!("episode.{k}.baseline_id"))?,
                corrected_episode: doc.u64(&format!("episode.{k}.corrected_id"))?,
                baseline: read_metrics(&doc, &format!("episode.{k}.baseline"))?,
                corrected: read_metrics(&doc, &format!("episode.{k}.corrected"))?,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(Report {
        reference: doc.f64("reference")?,
        baseline: read_metrics(&doc, "baseline")?,
        corrected: read_metrics(&doc, "corrected")?,
        improvement_ratio: doc.f64("improvement_ratio")?,
        episodes,
    })
}

/// Human-readable table of a comparison.
pub fn render_report_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "reference z: {:.3} m", report.reference);
    let _ = writeln!(
        out,
        "{:>10} {:>10} {:>12} {:>12} {:>12} {:>12}",
        "episode", "mode", "rmse_z", "mean_z", "max_pos", "max_neg"
    );
    let row = |out: &mut String, id: String, mode: &str, m: &Metrics| {
        let _ = writeln!(
            out,
            "{id:>10} {mode:>10} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            m.rmse, m.mean_z, m.max_pos_dev, m.max_neg_dev
        );
    };
    for e in &report.episodes {
        row(&mut out, e.baseline_episode.to_string(), "baseline", &e.baseline);
        row(&mut out, e.corrected_episode.to_string(), "corrected", &e.corrected);
    }
    row(&mut out, "pooled".into(), "baseline", &report.baseline);
    row(&mut out, "pooled".into(), "corrected", &report.corrected);
    let _ = writeln!(out, "improvement ratio: {:.3}", report.improvement_ratio);
    out
}

// ------------------------------------------------------------------- series

pub const SERIES_HEADER: &str = "t,deviation,mode,episode";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    /// `z - reference` of a valid record.
    pub deviation: f64,
    pub corrected: bool,
    pub episode: u64,
}

/// Plot-ready deviation-vs-time rows for one baseline/corrected pair.
pub fn deviation_series(baseline: &EpisodeLog, corrected: &EpisodeLog, reference: f64) -> Vec<SeriesRow> {
    let rows = |log: &EpisodeLog, corrected: bool| {
        log.valid_records()
            .map(|r| SeriesRow {
                t: r.t,
                deviation: r.z - reference,
                corrected,
                episode: r.episode,
            })
            .collect::<Vec<_>>()
    };
    let mut out = rows(baseline, false);
    out.extend(rows(corrected, true));
    out
}

pub fn write_series(rows: &[SeriesRow]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for r in rows {
        let mode = if r.corrected { "corrected" } else { "baseline" };
        let _ = writeln!(out, "{},{},{mode},{}", r.t, r.deviation, r.episode);
    }
    out
}

pub fn parse_series(text: &str) -> Result<Vec<SeriesRow>, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SERIES_HEADER => {}
        _ => return Err(FormatError::new(1, format!("expected header `{SERIES_HEADER}`"))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let n = i + 1;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(FormatError::new(n, "expected 4 columns"));
            }
            let corrected = match f[2].trim() {
                "baseline" => false,
                "corrected" => true,
                other => return Err(FormatError::new(n, format!("unknown mode `{other}`"))),
            };
            Ok(SeriesRow {
                t: parse_f64(f[0], n, "t")?,
                deviation: parse_f64(f[1], n, "deviation")?,
                corrected,
                episode: parse_u64(f[3], n, "episode")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{bin_records, gmm_fit, GmmFitConfig};
    use crate::telemetry::quantize;
    use proptest::prelude::*;

    fn record(t: f64, z: f64, valid: bool) -> TelemetryRecord {
        TelemetryRecord {
            t: quantize(t),
            x: quantize(1.9 + 0.001 * t),
            y: 1.85,
            z: quantize(z),
            valid,
            setpoint_z: 0.5,
            episode: 42,
        }
    }

    #[test]
    fn telemetry_layout() {
        let log = EpisodeLog {
            episode: 42,
            records: vec![record(0.0, 0.5, true), record(0.02, 0.123456789, false)],
        };
        let text = write_telemetry(&log);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TELEMETRY_HEADER));
        assert_eq!(lines.next(), Some("0.000000000,1.900000000,1.850000000,0.500000000,1,0.500000000,42"));
        assert_eq!(parse_telemetry(&text, 0).unwrap(), log);
    }

    #[test]
    fn telemetry_rejects_bad_rows() {
        assert!(parse_telemetry("t,x\n", 0).is_err());
        let bad_valid = format!("{TELEMETRY_HEADER}\n0,1,1,0.5,2,0.5,1\n");
        assert_eq!(parse_telemetry(&bad_valid, 0).unwrap_err().line, 2);
        let backwards = format!("{TELEMETRY_HEADER}\n1,1,1,0.5,1,0.5,1\n0.5,1,1,0.5,1,0.5,1\n");
        assert!(parse_telemetry(&backwards, 0).is_err());
        assert_eq!(parse_telemetry(&format!("{TELEMETRY_HEADER}\n"), 9).unwrap(), EpisodeLog::new(9));
    }

    #[test]
    fn kv_doc_rules() {
        let doc = KvDoc::parse("# c\n a = 1 \n\nb=two words\n").unwrap();
        assert_eq!(doc.get("a").unwrap(), ("1", 2));
        assert_eq!(doc.get("b").unwrap().0, "two words");
        assert!(KvDoc::parse("a = 1\na = 2\n").is_err());
        assert!(KvDoc::parse("novalue\n").is_err());
    }

    #[test]
    fn noise_map_round_trip_and_errors() {
        let grid = Grid::new(-0.5, 0.25, 0.1, 3, 2).unwrap();
        let map = NoiseMap::from_parts(
            grid,
            vec![0.0, 0.1, -1.0 / 3.0, 0.0, 2e-12, 0.0],
            vec![
                Provenance::Outside,
                Provenance::Measured,
                Provenance::SurfaceFallback,
                Provenance::Outside,
                Provenance::Measured,
                Provenance::Outside,
            ],
        )
        .unwrap();
        let text = write_noise_map(&map);
        assert!(text.contains("ix,iy,noise,provenance\n0,0,0,outside\n"));
        assert_eq!(parse_noise_map(&text).unwrap(), map);
        let missing_row = text.lines().take(text.lines().count() - 1).collect::<Vec<_>>().join("\n");
        assert!(parse_noise_map(&missing_row).is_err());
        assert!(parse_noise_map(&text.replace("surface-fallback", "guess")).is_err());
    }

    #[test]
    fn binned_round_trip() {
        let grid = Grid::new(1.8, 1.8, 0.1, 4, 4).unwrap();
        let records: Vec<_> = (0..30).map(|k| record(k as f64 * 0.37, 0.5 + 0.01 * (k % 3) as f64, true)).collect();
        let mut stats = bin_records(&records, &grid);
        stats.overflow = 3;
        assert_eq!(stats.binned_count(), 30);
        let text = write_binned(&stats);
        assert_eq!(parse_binned(&text).unwrap(), stats);
        let row = text.lines().last().unwrap();
        let mut cols: Vec<String> = row.split(',').map(String::from).collect();
        cols[2] = (cols[2].parse::<usize>().unwrap() + 1).to_string();
        let bad_count = cols.join(",");
        assert!(parse_binned(&text.replace(row, &bad_count)).is_err());
        assert!(parse_binned(&text.replace(";0.51;", ";0.52;")).is_err());
    }

    #[test]
    fn model_round_trips() {
        let samples: Vec<f64> = (0..200).map(|k| ((k * 37) % 101) as f64 / 101.0).collect();
        let (model, report) = gmm_fit(&samples, 2, &GmmFitConfig::default()).unwrap();
        let fit = AxisFit { model, report };
        assert_eq!(parse_gmm(&write_gmm("z", &fit)).unwrap(), ("z".to_string(), fit.clone()));

        let cells = vec![CellFit {
            ix: 3,
            iy: 4,
            model: fit.model.clone(),
        }];
        assert_eq!(parse_cell_gmms(&write_cell_gmms(&cells)).unwrap(), cells);
        assert_eq!(parse_cell_gmms(&write_cell_gmms(&[])).unwrap(), vec![]);

        let poly = PolySurface::new(2, vec![0.5, -1e-3, 1.0 / 7.0, 0.0, 3.25, -0.1]).unwrap();
        assert_eq!(parse_poly(&write_poly(&poly)).unwrap(), poly);

        let pts = [(1.85, 1.85, 0.6), (1.95, 1.85, 0.61), (1.95, 1.95, 0.58)];
        let gp = gp_fit_with_prior_mean(&pts, &KernelParams::default(), 0.6).unwrap();
        assert_eq!(parse_gp(&write_gp(&gp)).unwrap(), gp);
    }

    #[test]
    fn report_round_trip() {
        let m = |r: f64| Metrics {
            count: 10,
            mean_z: 0.5 + r,
            rmse: r,
            std: r / 3.0,
            max_pos_dev: 0.1,
            max_neg_dev: -0.2,
        };
        let report = Report {
            reference: 0.5,
            baseline: m(0.1),
            corrected: m(0.03),
            improvement_ratio: 0.7,
            episodes: vec![EpisodeComparison {
                baseline_episode: 5000,
                corrected_episode: 5000,
                baseline: m(0.1),
                corrected: m(0.03),
            }],
        };
        assert_eq!(parse_report(&write_report(&report)).unwrap(), report);
        assert!(render_report_table(&report).contains("improvement ratio: 0.700"));
    }

    #[test]
    fn series_round_trip() {
        let b = EpisodeLog {
            episode: 42,
            records: vec![record(1.0, 0.6, true), record(1.02, 0.7, false)],
        };
        let rows = deviation_series(&b, &b, 0.5);
        assert_eq!(rows.len(), 2);
        assert_eq!(parse_series(&write_series(&rows)).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn telemetry_round_trips_exactly(
            rows in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.0f64..3.0, any::<bool>()), 0..40),
            episode in any::<u64>(),
        ) {
            let records: Vec<_> = rows
                .iter()
                .enumerate()
                .map(|(k, &(x, y, z, valid))| TelemetryRecord {
                    t: quantize(k as f64 * 0.02),
                    x: quantize(x),
                    y: quantize(y),
                    z: quantize(z),
                    valid,
                    setpoint_z: quantize(0.5 - z / 10.0),
                    episode,
                })
                .collect();
            let log = EpisodeLog { episode, records };
            let text = write_telemetry(&log);
            let back = parse_telemetry(&text, episode).unwrap();
            prop_assert_eq!(&back, &log);
            prop_assert_eq!(write_telemetry(&back), text);
        }

        #[test]
        fn noise_map_round_trips_exactly(values in proptest::collection::vec(-1.0f64..1.0, 12)) {
            let grid = Grid::new(0.0, 0.0, 0.1, 4, 3).unwrap();
            let tags = values
                .iter()
                .map(|v| if *v > 0.3 { Provenance::SurfaceFallback } else { Provenance::Measured })
                .collect();
            let map = NoiseMap::from_parts(grid, values, tags).unwrap();
            prop_assert_eq!(parse_noise_map(&write_noise_map(&map)).unwrap(), map);
        }
    }
}
