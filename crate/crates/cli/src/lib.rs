//! Command implementations behind the `altshift` binary.
//!
//! Exit codes: 0 ok, 2 configuration, 3 I/O or unreadable input, 4 no usable
//! data, 5 grid geometry mismatch.

pub mod error;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use altshift_core::characterize::{characterize, Characterization};
use altshift_core::config::{Config, FallbackKind, TerrainKind};
use altshift_core::estimation::{build_noise_map, EstimationError, NoiseMap, Surface};
use altshift_core::formats::{self, KvDoc};
use altshift_core::sim::{compare, run_batch, ControllerMode, EpisodeConfig, SimError};
use altshift_core::telemetry::EpisodeLog;
use clap::{Parser, Subcommand, ValueEnum};

pub use error::CliError;
use manifest::{RunManifest, SeedRange, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "altshift", version, about = "Sonar-disturbance characterization and setpoint-shift cancellation")]
pub struct Cli {
    /// Configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TerrainArg {
    Flat,
    Stepped,
}

impl From<TerrainArg> for TerrainKind {
    fn from(t: TerrainArg) -> Self {
        match t {
            TerrainArg::Flat => TerrainKind::Flat,
            TerrainArg::Stepped => TerrainKind::Stepped,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Corrected,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fly episodes and write one telemetry file per episode.
    Simulate {
        #[arg(long, value_enum, default_value = "stepped")]
        terrain: TerrainArg,
        #[arg(long, value_enum, default_value = "baseline")]
        mode: ModeArg,
        /// Noise map for corrected mode.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Seed of the first episode; episode i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trim, bin and fit flat and disturbed telemetry.
    Characterize {
        #[arg(long)]
        flat: PathBuf,
        #[arg(long)]
        disturbed: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subtract the flat baseline from the disturbed statistics.
    BuildMap {
        /// Output directory of `characterize`.
        #[arg(long)]
        characterization: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly matched baseline and corrected episodes and compare them.
    Evaluate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_enum, default_value = "stepped")]
        terrain: TerrainArg,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the comparison table of an `evaluate` output directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

pub const BINS_FILE: &str = "bins.txt";
pub const GP_FILE: &str = "gp.txt";
pub const POLY_FILE: &str = "poly.txt";
pub const CELL_GMM_FILE: &str = "gmm_cells.txt";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const NOISE_MAP_FILE: &str = "noise_map.txt";

pub fn telemetry_file_name(episode: u64) -> String {
    format!("telemetry_{episode}.csv")
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = read(path)?;
    Config::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(dir: &Path, name: &str, text: &str, manifest: &mut RunManifest) -> Result<(), CliError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    manifest.artifacts.push(name.to_string());
    Ok(())
}

fn finish(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.render()).map_err(|e| CliError::io(&path, e))
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Config(c) => CliError::Config(c.to_string()),
        SimError::EmptyLog | SimError::Unpaired { .. } => CliError::EmptyData(e.to_string()),
    }
}

fn estimation_error(what: &str, e: EstimationError) -> CliError {
    match e {
        EstimationError::GridMismatch | EstimationError::InvalidGrid(_) => CliError::Geometry(format!("{what}: {e}")),
        _ => CliError::EmptyData(format!("{what}: {e}")),
    }
}

/// Telemetry files of a directory, ordered by episode id.
pub fn read_logs(dir: &Path) -> Result<Vec<EpisodeLog>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("telemetry_") && name.ends_with(".csv") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut logs = paths
        .iter()
        .map(|p| formats::parse_telemetry(&read(p)?, 0).map_err(|e| CliError::malformed(p, e)))
        .collect::<Result<Vec<_>, _>>()?;
    logs.sort_by_key(|l| l.episode);
    Ok(logs)
}

fn load_map(path: &Path) -> Result<NoiseMap, CliError> {
    formats::parse_noise_map(&read(path)?).map_err(|e| CliError::malformed(path, e))
}

fn validate_counts(episodes: usize, seed: u64) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(CliError::Config("--episodes must be >= 1".into()));
    }
    if seed.checked_add(episodes as u64 - 1).is_none() {
        return Err(CliError::Config("--seed + --episodes overflows".into()));
    }
    Ok(())
}

fn check_map_grid(map: &NoiseMap, cfg: &Config) -> Result<(), CliError> {
    if *map.grid() != cfg.characterize.grid {
        return Err(CliError::Geometry(format!(
            "noise map grid {:?} differs from the configured grid {:?}",
            map.grid(),
            cfg.characterize.grid
        )));
    }
    Ok(())
}

fn write_logs(dir: &Path, prefix: &str, logs: &[EpisodeLog], manifest: &mut RunManifest) -> Result<(), CliError> {
    for log in logs {
        let name = format!("{prefix}{}", telemetry_file_name(log.episode));
        write(dir, &name, &formats::write_telemetry(log), manifest)?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate {
            terrain,
            mode,
            map,
            episodes,
            seed,
            out,
        } => simulate(&cfg, (*terrain).into(), *mode, map.as_deref(), *episodes, *seed, out),
        Command::Characterize { flat, disturbed, out } => characterize_cmd(&cfg, flat, disturbed, out),
        Command::BuildMap { characterization, out } => build_map(&cfg, characterization, out),
        Command::Evaluate {
            map,
            terrain,
            episodes,
            seed,
            out,
        } => evaluate(&cfg, map, (*terrain).into(), *episodes, *seed, out),
        Command::Report { dir } => {
            let path = dir.join(SUMMARY_FILE);
            let report = formats::parse_report(&read(&path)?).map_err(|e| CliError::malformed(&path, e))?;
            print!("{}", formats::render_report_table(&report));
            Ok(())
        }
    }
}

pub fn simulate(
    cfg: &Config,
    terrain: TerrainKind,
    mode: ModeArg,
    map: Option<&Path>,
    episodes: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    validate_counts(episodes, seed)?;
    let plant = cfg.plant(terrain).map_err(|e| CliError::Config(e.to_string()))?;
    let mut manifest = RunManifest::new("simulate", cfg);
    manifest.params.push(("terrain".into(), terrain.as_str().into()));
    let controller = match (mode, map) {
        (ModeArg::Baseline, None) => {
            manifest.params.push(("mode".into(), "baseline".into()));
            ControllerMode::Baseline
        }
        (ModeArg::Corrected, Some(path)) => {
            let map = load_map(path)?;
            check_map_grid(&map, cfg)?;
            manifest.params.push(("mode".into(), "corrected".into()));
            manifest.params.push(("map".into(), path.display().to_string()));
            ControllerMode::Corrected(Arc::new(map))
        }
        (ModeArg::Baseline, Some(_)) => return Err(CliError::Config("--map is only used with --mode corrected".into())),
        (ModeArg::Corrected, None) => return Err(CliError::Config("--mode corrected needs --map".into())),
    };
    manifest.seeds.push(SeedRange {
        label: "episodes".into(),
        start: seed,
        count: episodes,
    });
    let template = EpisodeConfig {
        mode: controller,
        ..cfg.episode.clone()
    };
    let logs = run_batch(&template, &plant, seed, episodes).map_err(sim_error)?;
    write_logs(out, "", &logs, &mut manifest)?;
    finish(out, &manifest)
}

fn write_characterization(
    out: &Path,
    prefix: &str,
    c: &Characterization,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    write(out, &format!("{prefix}/{BINS_FILE}"), &formats::write_binned(&c.bins), manifest)?;
    for (axis, fit) in [("x", &c.x), ("y", &c.y), ("z", &c.z)] {
        write(out, &format!("{prefix}/gmm_{axis}.txt"), &formats::write_gmm(axis, fit), manifest)?;
    }
    write(out, &format!("{prefix}/{CELL_GMM_FILE}"), &formats::write_cell_gmms(&c.cells), manifest)?;
    write(out, &format!("{prefix}/{GP_FILE}"), &formats::write_gp(&c.gp), manifest)?;
    if let Ok(poly) = &c.poly {
        write(out, &format!("{prefix}/{POLY_FILE}"), &formats::write_poly(poly), manifest)?;
    }
    Ok(())
}

/// Dataset-level counts of a characterization run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSummary {
    pub episodes: usize,
    pub records_in: usize,
    pub records_kept: usize,
    pub overflow: usize,
    pub occupied_cells: usize,
    /// `ok`, or why no polynomial surface was written.
    pub poly: String,
}

impl DatasetSummary {
    pub fn of(c: &Characterization) -> Self {
        Self {
            episodes: c.episodes,
            records_in: c.records_in,
            records_kept: c.records_kept,
            overflow: c.bins.overflow,
            occupied_cells: c.bins.occupied().count(),
            poly: match &c.poly {
                Ok(_) => "ok".into(),
                Err(e) => e.to_string(),
            },
        }
    }
}

pub fn render_summaries(flat: &DatasetSummary, disturbed: &DatasetSummary) -> String {
    let mut doc = KvDoc::default();
    doc.push("format", "characterization");
    for (name, s) in [("flat", flat), ("disturbed", disturbed)] {
        doc.push(format!("{name}.episodes"), s.episodes);
        doc.push(format!("{name}.records_in"), s.records_in);
        doc.push(format!("{name}.records_kept"), s.records_kept);
        doc.push(format!("{name}.overflow"), s.overflow);
        doc.push(format!("{name}.occupied_cells"), s.occupied_cells);
        doc.push(format!("{name}.poly"), &s.poly);
    }
    doc.render("characterization summary; fitted models and EM traces are in flat/ and disturbed/")
}

pub fn parse_summaries(text: &str) -> Result<(DatasetSummary, DatasetSummary), formats::FormatError> {
    let doc = KvDoc::parse(text)?;
    doc.expect("format", "characterization")?;
    let one = |name: &str| -> Result<DatasetSummary, formats::FormatError> {
        Ok(DatasetSummary {
            episodes: doc.usize(&format!("{name}.episodes"))?,
            records_in: doc.usize(&format!("{name}.records_in"))?,
            records_kept: doc.usize(&format!("{name}.records_kept"))?,
            overflow: doc.usize(&format!("{name}.overflow"))?,
            occupied_cells: doc.usize(&format!("{name}.occupied_cells"))?,
            poly: doc.get(&format!("{name}.poly"))?.0.to_string(),
        })
    };
    Ok((one("flat")?, one("disturbed")?))
}

pub fn characterize_cmd(cfg: &Config, flat_dir: &Path, disturbed_dir: &Path, out: &Path) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("characterize", cfg);
    manifest.params.push(("flat".into(), flat_dir.display().to_string()));
    manifest.params.push(("disturbed".into(), disturbed_dir.display().to_string()));

    let mut results = Vec::new();
    for (label, dir, disturbed) in [("flat", flat_dir, false), ("disturbed", disturbed_dir, true)] {
        let logs = read_logs(dir)?;
        if logs.is_empty() {
            return Err(CliError::EmptyData(format!("{}: no telemetry files", dir.display())));
        }
        let c = characterize(&logs, &cfg.characterize_for(disturbed))
            .map_err(|e| estimation_error(&format!("{label} data in {}", dir.display()), e))?;
        results.push((label, c));
    }
    for (label, c) in &results {
        write_characterization(out, label, c, &mut manifest)?;
    }
    let summary = render_summaries(&DatasetSummary::of(&results[0].1), &DatasetSummary::of(&results[1].1));
    write(out, SUMMARY_FILE, &summary, &mut manifest)?;
    finish(out, &manifest)
}

pub fn build_map(cfg: &Config, dir: &Path, out: &Path) -> Result<(), CliError> {
    let load_bins = |label: &str| {
        let path = dir.join(label).join(BINS_FILE);
        formats::parse_binned(&read(&path)?).map_err(|e| CliError::malformed(&path, e))
    };
    let flat = load_bins("flat")?;
    let disturbed = load_bins("disturbed")?;
    for (label, bins) in [("flat", &flat), ("disturbed", &disturbed)] {
        if bins.grid != cfg.characterize.grid {
            return Err(CliError::Geometry(format!("{label} statistics use a grid other than the configured one")));
        }
    }
    let fallback = match cfg.fallback {
        FallbackKind::Gp => {
            let path = dir.join("disturbed").join(GP_FILE);
            Surface::Gp(formats::parse_gp(&read(&path)?).map_err(|e| CliError::malformed(&path, e))?)
        }
        FallbackKind::Poly => {
            let path = dir.join("disturbed").join(POLY_FILE);
            if !path.exists() {
                return Err(CliError::EmptyData(format!(
                    "{}: no polynomial surface was fitted for the disturbed data",
                    path.display()
                )));
            }
            Surface::Poly(formats::parse_poly(&read(&path)?).map_err(|e| CliError::malformed(&path, e))?)
        }
    };
    let map = build_noise_map(&flat, &disturbed, &fallback, &cfg.noise_map)
        .map_err(|e| estimation_error("noise map", e))?;
    let mut manifest = RunManifest::new("build-map", cfg);
    manifest.params.push(("characterization".into(), dir.display().to_string()));
    write(out, NOISE_MAP_FILE, &formats::write_noise_map(&map), &mut manifest)?;
    finish(out, &manifest)
}

pub fn evaluate(
    cfg: &Config,
    map_path: &Path,
    terrain: TerrainKind,
    episodes: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    validate_counts(episodes, seed)?;
    let plant = cfg.plant(terrain).map_err(|e| CliError::Config(e.to_string()))?;
    let map = load_map(map_path)?;
    check_map_grid(&map, cfg)?;

    let mut manifest = RunManifest::new("evaluate", cfg);
    manifest.params.push(("terrain".into(), terrain.as_str().into()));
    manifest.params.push(("map".into(), map_path.display().to_string()));
    manifest.seeds.push(SeedRange {
        label: "evaluation".into(),
        start: seed,
        count: episodes,
    });

    let baseline_cfg = cfg.episode.with_mode(ControllerMode::Baseline);
    let corrected_cfg = cfg.episode.with_mode(ControllerMode::Corrected(Arc::new(map)));
    let baseline = run_batch(&baseline_cfg, &plant, seed, episodes).map_err(sim_error)?;
    let corrected = run_batch(&corrected_cfg, &plant, seed, episodes).map_err(sim_error)?;
    let reference = cfg.reference_z();
    let report = compare(&baseline, &corrected, reference).map_err(sim_error)?;

    write_logs(out, "baseline/", &baseline, &mut manifest)?;
    write_logs(out, "corrected/", &corrected, &mut manifest)?;
    for (b, c) in baseline.iter().zip(&corrected) {
        let rows = formats::deviation_series(b, c, reference);
        write(out, &format!("series/series_{}.csv", b.episode), &formats::write_series(&rows), &mut manifest)?;
    }
    write(out, SUMMARY_FILE, &formats::write_report(&report), &mut manifest)?;
    write(out, REPORT_FILE, &formats::render_report_table(&report), &mut manifest)?;
    finish(out, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use altshift_core::characterize::CharacterizeConfig;
    use altshift_core::sim::Plant;

    #[test]
    fn summaries_round_trip() {
        let logs = run_batch(&EpisodeConfig::default(), &Plant::flat(), 3, 2).unwrap();
        let c = characterize(&logs, &CharacterizeConfig::default()).unwrap();
        let s = DatasetSummary::of(&c);
        assert_eq!(s.episodes, 2);
        assert_eq!(parse_summaries(&render_summaries(&s, &s)).unwrap(), (s.clone(), s));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::io(Path::new("x"), std::io::ErrorKind::NotFound.into()).exit_code(), 3);
        assert_eq!(CliError::EmptyData(String::new()).exit_code(), 4);
        assert_eq!(CliError::Geometry(String::new()).exit_code(), 5);
        assert_eq!(estimation_error("m", EstimationError::GridMismatch).exit_code(), 5);
        assert_eq!(estimation_error("m", EstimationError::EmptyAfterTrim).exit_code(), 4);
    }
}
